//! JSON run configuration. Every key is optional; missing keys take the
//! values of the filter example. Unknown keys are rejected.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{import_mesh, SubMesh};
use crate::problem::{example1_meshes, BjsNonlinearity, Discretization, ProblemConfig};
use crate::solver::{PicardSettings, TimeSettings};
use crate::viscosity::{ViscosityLaw, ViscosityModel, DEFAULT_POWER_LAW_EPS};
use crate::elements::EssentialRules;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("mesh: {0}")]
    Mesh(String),
}

impl ConfigError {
    /// JSON pointer of the offending value, when known.
    pub fn json_path(&self) -> Option<&str> {
        match self {
            ConfigError::Parse { path, .. } | ConfigError::Invalid { path, .. } => Some(path),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryPreset {
    #[default]
    Example1,
    Import,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshFiles {
    pub fluid: PathBuf,
    pub porous: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryDoc {
    pub preset: GeometryPreset,
    /// Required with `preset = "import"`; relative paths are resolved
    /// against the directory of the config file.
    pub mesh_files: Option<MeshFiles>,
    pub nx_f: usize,
    pub ny_f: usize,
    pub nx_p: usize,
    pub ny_p: usize,
}

impl Default for GeometryDoc {
    fn default() -> Self {
        GeometryDoc { preset: GeometryPreset::Example1, mesh_files: None, nx_f: 20, ny_f: 20, nx_p: 20, ny_p: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsDoc {
    pub lambda_p: f64,
    pub mu_p: f64,
    pub s0: f64,
    pub alpha_p: f64,
    pub alpha_bjs: f64,
    pub kappa: [f64; 2],
}

impl Default for PhysicsDoc {
    fn default() -> Self {
        PhysicsDoc { lambda_p: 1.0, mu_p: 1.0, s0: 1.0, alpha_p: 1.0, alpha_bjs: 1.0, kappa: [1.0, 1.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LawDoc {
    pub law: ViscosityLaw,
    pub nu0: f64,
    pub nu_inf: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub r: f64,
    /// Pore-structure constant of the Darcy power law.
    pub m_c: f64,
}

impl Default for LawDoc {
    fn default() -> Self {
        LawDoc { law: ViscosityLaw::Cross, nu0: 10.0, nu_inf: 1.0, k: 1.0, r: 1.35, m_c: 1.0 }
    }
}

impl LawDoc {
    pub fn model(&self) -> ViscosityModel {
        ViscosityModel { law: self.law, nu0: self.nu0, nu_inf: self.nu_inf, k: self.k, r: self.r, m_c: self.m_c }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ViscosityDoc {
    pub fluid: LawDoc,
    pub darcy: LawDoc,
    pub interface: LawDoc,
    pub bjs_nonlinearity: BjsNonlinearity,
    pub power_law_eps: f64,
}

impl Default for ViscosityDoc {
    fn default() -> Self {
        ViscosityDoc {
            fluid: LawDoc::default(),
            darcy: LawDoc::default(),
            interface: LawDoc::default(),
            bjs_nonlinearity: BjsNonlinearity::Constant,
            power_law_eps: DEFAULT_POWER_LAW_EPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundaryDoc {
    pub p_in: f64,
    pub p_out: f64,
    /// Constant initial Darcy pressure.
    pub p_p0: f64,
}

impl Default for BoundaryDoc {
    fn default() -> Self {
        BoundaryDoc { p_in: 1.0, p_out: 0.0, p_p0: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeDoc {
    pub tau: f64,
    pub t_end: f64,
}

impl Default for TimeDoc {
    fn default() -> Self {
        TimeDoc { tau: 0.01, t_end: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardDoc {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub damping: f64,
}

impl Default for PicardDoc {
    fn default() -> Self {
        let d = PicardSettings::default();
        PicardDoc { rel_tol: d.rel_tol, max_iter: d.max_iter, damping: d.damping }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Vtk,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputDoc {
    pub directory: PathBuf,
    /// Steps between snapshots; `None` means 10 for `run`, 1 for
    /// `convergence`.
    pub snapshot_every: Option<usize>,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputDoc {
    fn default() -> Self {
        OutputDoc { directory: PathBuf::from("output"), snapshot_every: None, formats: vec![OutputFormat::Vtk, OutputFormat::Csv] }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigDocument {
    pub geometry: GeometryDoc,
    pub physics: PhysicsDoc,
    pub viscosity: ViscosityDoc,
    pub boundary: BoundaryDoc,
    pub time: TimeDoc,
    pub picard: PicardDoc,
    pub output: OutputDoc,
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut s = String::new();
    for seg in path.iter() {
        s.push('/');
        match seg {
            Segment::Seq { index } => s.push_str(&index.to_string()),
            Segment::Map { key } => s.push_str(key),
            Segment::Enum { variant } => s.push_str(variant),
            Segment::Unknown => s.push('?'),
        }
    }
    if s.is_empty() {
        s.push('/');
    }
    s
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { path: path.to_owned(), message: message.into() }
}

/// Maps a [`ProblemConfig`] field name to its location in the document.
fn document_path(field: &str) -> String {
    match field {
        "lambda_p" | "mu_p" | "s0" | "alpha_p" | "alpha_bjs" | "kappa" => format!("/physics/{field}"),
        "power_law_eps" => "/viscosity/power_law_eps".into(),
        f if f.starts_with("viscosity.") => {
            let f = f.replace('.', "/");
            format!("/{}", f.replace("/k", "/K"))
        }
        other => format!("/{other}"),
    }
}

impl RunConfigDocument {
    /// Parses and validates a JSON document.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: RunConfigDocument = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: pointer(e.path()),
            message: e.inner().to_string(),
        })?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.problem().validate().map_err(|e| match e {
            crate::problem::ProblemError::Invalid { field, message } => invalid(&document_path(&field), message),
            other => invalid("/", other.to_string()),
        })?;
        if !self.boundary.p_p0.is_finite() {
            return Err(invalid("/boundary/p_p0", "must be finite"));
        }
        let g = &self.geometry;
        for (name, v) in [("nx_f", g.nx_f), ("ny_f", g.ny_f), ("nx_p", g.nx_p), ("ny_p", g.ny_p)] {
            if v == 0 {
                return Err(invalid(&format!("/geometry/{name}"), "must be >= 1"));
            }
        }
        if g.preset == GeometryPreset::Import && g.mesh_files.is_none() {
            return Err(invalid("/geometry/mesh_files", "required when preset is \"import\""));
        }
        let t = &self.time;
        if !(t.tau > 0.0 && t.tau.is_finite()) {
            return Err(invalid("/time/tau", format!("must be > 0, got {}", t.tau)));
        }
        if !(t.t_end >= t.tau && t.t_end.is_finite()) {
            return Err(invalid("/time/t_end", format!("must be >= tau, got {}", t.t_end)));
        }
        let p = &self.picard;
        if !(p.rel_tol > 0.0) {
            return Err(invalid("/picard/rel_tol", format!("must be > 0, got {}", p.rel_tol)));
        }
        if p.max_iter == 0 {
            return Err(invalid("/picard/max_iter", "must be >= 1"));
        }
        if !(p.damping > 0.0 && p.damping <= 1.0) {
            return Err(invalid("/picard/damping", format!("must lie in (0, 1], got {}", p.damping)));
        }
        if self.output.snapshot_every == Some(0) {
            return Err(invalid("/output/snapshot_every", "must be >= 1"));
        }
        Ok(())
    }

    pub fn problem(&self) -> ProblemConfig {
        let ph = &self.physics;
        let v = &self.viscosity;
        let mut cfg = ProblemConfig::example1();
        cfg.lambda_p = ph.lambda_p;
        cfg.mu_p = ph.mu_p;
        cfg.s0 = ph.s0;
        cfg.alpha_p = ph.alpha_p;
        cfg.alpha_bjs = ph.alpha_bjs;
        cfg.kappa = ph.kappa;
        cfg.fluid_viscosity = v.fluid.model();
        cfg.darcy_viscosity = v.darcy.model();
        cfg.interface_viscosity = v.interface.model();
        cfg.bjs_nonlinearity = v.bjs_nonlinearity;
        cfg.power_law_eps = v.power_law_eps;
        cfg.p_in = self.boundary.p_in;
        cfg.p_out = self.boundary.p_out;
        let p0 = self.boundary.p_p0;
        cfg.p_p0 = (p0 != 0.0).then(|| Arc::new(move |_, _| p0) as _);
        cfg
    }

    pub fn time_settings(&self) -> TimeSettings {
        TimeSettings { tau: self.time.tau, t_end: self.time.t_end }
    }

    pub fn picard_settings(&self) -> PicardSettings {
        PicardSettings {
            rel_tol: self.picard.rel_tol,
            max_iter: self.picard.max_iter,
            damping: self.picard.damping,
            ..PicardSettings::default()
        }
    }

    /// Same document with the example-1 grid resolution set to `n`.
    pub fn with_level(&self, n: usize) -> Self {
        let mut d = self.clone();
        d.geometry.nx_f = n;
        d.geometry.ny_f = n;
        d.geometry.nx_p = n;
        d.geometry.ny_p = n;
        d
    }

    /// Builds the meshes and spaces. `base` resolves relative mesh paths.
    pub fn discretization(&self, base: &Path) -> Result<Discretization, ConfigError> {
        let g = &self.geometry;
        let (fluid, porous): (SubMesh, SubMesh) = match g.preset {
            GeometryPreset::Example1 => {
                example1_meshes(g.nx_f, g.ny_f, g.nx_p, g.ny_p).map_err(|e| ConfigError::Mesh(e.to_string()))?
            }
            GeometryPreset::Import => {
                let files = g.mesh_files.as_ref().ok_or_else(|| invalid("/geometry/mesh_files", "missing"))?;
                let read = |p: &Path| -> Result<SubMesh, ConfigError> {
                    let p = if p.is_absolute() { p.to_owned() } else { base.join(p) };
                    let text = std::fs::read_to_string(&p).map_err(|source| ConfigError::Io { path: p.clone(), source })?;
                    import_mesh(&text).map_err(|e| ConfigError::Mesh(format!("{}: {e}", p.display())))
                };
                (read(&files.fluid)?, read(&files.porous)?)
            }
        };
        Discretization::new(fluid, porous, &EssentialRules::default()).map_err(|e| ConfigError::Mesh(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_example1() {
        let d = RunConfigDocument::parse("{}").unwrap();
        assert_eq!(d, RunConfigDocument::default());
        let p = d.problem();
        let e = ProblemConfig::example1();
        assert_eq!(p.fluid_viscosity, e.fluid_viscosity);
        assert_eq!(p.darcy_viscosity, e.darcy_viscosity);
        assert_eq!((p.s0, p.alpha_bjs, p.kappa, p.p_in, p.p_out), (e.s0, e.alpha_bjs, e.kappa, e.p_in, e.p_out));
    }

    #[test]
    fn invariant_violation_names_path() {
        let e = RunConfigDocument::parse(r#"{"physics":{"s0":-1}}"#).unwrap_err();
        assert_eq!(e.json_path(), Some("/physics/s0"));
        let e = RunConfigDocument::parse(r#"{"viscosity":{"darcy":{"r":3.0}}}"#).unwrap_err();
        assert!(e.json_path().unwrap().starts_with("/viscosity/darcy"), "{e}");
    }

    #[test]
    fn unknown_and_mistyped_keys() {
        let e = RunConfigDocument::parse(r#"{"physics":{"s1":1}}"#).unwrap_err();
        assert!(matches!(e, ConfigError::Parse { .. }));
        assert!(e.json_path().unwrap().starts_with("/physics"), "{e}");
        let e = RunConfigDocument::parse(r#"{"time":{"tau":"x"}}"#).unwrap_err();
        assert_eq!(e.json_path(), Some("/time/tau"));
    }

    #[test]
    fn round_trip() {
        let text = r#"{"viscosity":{"fluid":{"law":"carreau","K":2.0}},"output":{"snapshot_every":3}}"#;
        let a = RunConfigDocument::parse(text).unwrap();
        let b = RunConfigDocument::parse(&a.to_json()).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.viscosity.fluid.k, 2.0);
    }
}
