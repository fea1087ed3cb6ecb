//! Physical configuration, the discrete spaces of the coupled problem and
//! the per-time-level solution state.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::elements::{
    build_dofmap, quadrature_rule, DofMap, ElementError, EssentialRules, SpaceKind, TriangleGeometry,
};
use crate::mesh::{
    build_structured_mesh, pair_interface, BoundaryLabel, InterfaceGeometry, MeshError, Point, Rect,
    RegionTag, SubMesh, DEFAULT_PAIRING_TOL,
};
use crate::viscosity::{ViscosityModel, DEFAULT_POWER_LAW_EPS};

pub type VectorField = Arc<dyn Fn(Point, f64) -> [f64; 2] + Send + Sync>;
pub type ScalarField = Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Element(#[from] ElementError),
    #[error("invalid configuration: {field}: {message}")]
    Invalid { field: String, message: String },
}

/// How the interface viscosity enters the slip term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BjsNonlinearity {
    /// Frozen at the lagged slip velocity.
    Frozen,
    /// Constant, the reference viscosity of the interface law.
    #[default]
    Constant,
}

#[derive(Clone)]
pub struct ProblemConfig {
    pub lambda_p: f64,
    pub mu_p: f64,
    pub s0: f64,
    pub alpha_p: f64,
    pub alpha_bjs: f64,
    /// Diagonal permeability `(k_xx, k_yy)`.
    pub kappa: [f64; 2],
    pub fluid_viscosity: ViscosityModel,
    pub darcy_viscosity: ViscosityModel,
    pub interface_viscosity: ViscosityModel,
    pub bjs_nonlinearity: BjsNonlinearity,
    pub power_law_eps: f64,
    pub f_f: Option<VectorField>,
    pub f_p: Option<VectorField>,
    pub q_f: Option<ScalarField>,
    pub q_p: Option<ScalarField>,
    /// Normal traction `-p_in n_f` on `InletF` edges.
    pub p_in: f64,
    /// Pressure on `OutletP` edges.
    pub p_out: f64,
    /// Initial Darcy pressure; zero when absent.
    pub p_p0: Option<ScalarField>,
    /// Initial displacement; zero when absent.
    pub eta_p0: Option<VectorField>,
}

impl fmt::Debug for ProblemConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemConfig")
            .field("lambda_p", &self.lambda_p)
            .field("mu_p", &self.mu_p)
            .field("s0", &self.s0)
            .field("alpha_p", &self.alpha_p)
            .field("alpha_bjs", &self.alpha_bjs)
            .field("kappa", &self.kappa)
            .field("fluid_viscosity", &self.fluid_viscosity)
            .field("darcy_viscosity", &self.darcy_viscosity)
            .field("interface_viscosity", &self.interface_viscosity)
            .field("bjs_nonlinearity", &self.bjs_nonlinearity)
            .field("p_in", &self.p_in)
            .field("p_out", &self.p_out)
            .finish_non_exhaustive()
    }
}

impl ProblemConfig {
    /// The filter example: Cross laws with `nu_inf = 1`, `nu0 = 10`, `K = 1`,
    /// `r = 1.35`, unit elastic and coupling constants, `kappa = I`, driven
    /// by `p_in = 1`, `p_out = 0`.
    pub fn example1() -> Self {
        let cross = ViscosityModel::cross(10.0, 1.0, 1.0, 1.35);
        ProblemConfig {
            lambda_p: 1.0,
            mu_p: 1.0,
            s0: 1.0,
            alpha_p: 1.0,
            alpha_bjs: 1.0,
            kappa: [1.0, 1.0],
            fluid_viscosity: cross,
            darcy_viscosity: cross,
            interface_viscosity: cross,
            bjs_nonlinearity: BjsNonlinearity::Constant,
            power_law_eps: DEFAULT_POWER_LAW_EPS,
            f_f: None,
            f_p: None,
            q_f: None,
            q_p: None,
            p_in: 1.0,
            p_out: 0.0,
            p_p0: None,
            eta_p0: None,
        }
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let bad = |field: &str, message: String| {
            Err(ProblemError::Invalid { field: field.to_owned(), message })
        };
        if !(self.lambda_p >= 0.0) {
            return bad("lambda_p", format!("must be >= 0, got {}", self.lambda_p));
        }
        if !(self.mu_p > 0.0) {
            return bad("mu_p", format!("must be > 0, got {}", self.mu_p));
        }
        if !(self.s0 > 0.0) {
            return bad("s0", format!("must be > 0, got {}", self.s0));
        }
        if !(self.alpha_p > 0.0 && self.alpha_p <= 1.0) {
            return bad("alpha_p", format!("must lie in (0, 1], got {}", self.alpha_p));
        }
        if !(self.alpha_bjs >= 0.0) {
            return bad("alpha_bjs", format!("must be >= 0, got {}", self.alpha_bjs));
        }
        if !(self.kappa[0] > 0.0 && self.kappa[1] > 0.0) {
            return bad("kappa", format!("entries must be > 0, got {:?}", self.kappa));
        }
        if !(self.power_law_eps > 0.0) {
            return bad("power_law_eps", format!("must be > 0, got {}", self.power_law_eps));
        }
        for (name, m) in [
            ("fluid", &self.fluid_viscosity),
            ("darcy", &self.darcy_viscosity),
            ("interface", &self.interface_viscosity),
        ] {
            if let Err((field, message)) = m.validate() {
                return bad(&format!("viscosity.{name}.{field}"), message);
            }
        }
        if !(self.p_in.is_finite() && self.p_out.is_finite()) {
            return bad("boundary", "pressures must be finite".into());
        }
        Ok(())
    }

    /// Scalar permeability used by the power-law Darcy viscosity (geometric
    /// mean of the diagonal).
    pub fn kappa_scalar(&self) -> f64 {
        (self.kappa[0] * self.kappa[1]).sqrt()
    }

    /// `t . kappa t` for a unit tangent.
    pub fn kappa_tangential(&self, t: [f64; 2]) -> f64 {
        self.kappa[0] * t[0] * t[0] + self.kappa[1] * t[1] * t[1]
    }

    /// True when no coefficient depends on the lagged state.
    pub fn is_linear(&self) -> bool {
        self.fluid_viscosity.is_newtonian()
            && self.darcy_viscosity.is_newtonian()
            && (self.bjs_nonlinearity == BjsNonlinearity::Constant
                || self.interface_viscosity.is_newtonian()
                || self.alpha_bjs == 0.0)
    }
}

/// Unknown blocks, in system order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    Uf = 0,
    Pf = 1,
    Up = 2,
    Pp = 3,
    Eta = 4,
    Lam = 5,
}

impl Block {
    pub const ALL: [Block; 6] = [Block::Uf, Block::Pf, Block::Up, Block::Pp, Block::Eta, Block::Lam];

    pub fn name(self) -> &'static str {
        match self {
            Block::Uf => "uf",
            Block::Pf => "pf",
            Block::Up => "up",
            Block::Pp => "pp",
            Block::Eta => "eta",
            Block::Lam => "lam",
        }
    }
}

/// Offsets of the six blocks in the full and in the free (reduced) vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLayout {
    pub full_offsets: [usize; 7],
    pub free_offsets: [usize; 7],
    /// Free index of each full dof; `None` for essential dofs.
    pub free_index: Vec<Option<usize>>,
    /// Prescribed value of each full dof, zero for free ones.
    pub prescribed: Vec<f64>,
}

impl BlockLayout {
    pub fn n_full(&self) -> usize {
        self.full_offsets[6]
    }

    pub fn n_free(&self) -> usize {
        self.free_offsets[6]
    }

    pub fn full_range(&self, b: Block) -> std::ops::Range<usize> {
        self.full_offsets[b as usize]..self.full_offsets[b as usize + 1]
    }

    pub fn free_range(&self, b: Block) -> std::ops::Range<usize> {
        self.free_offsets[b as usize]..self.free_offsets[b as usize + 1]
    }
}

/// Meshes, interface pairing and dof maps of all six spaces.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub fluid: SubMesh,
    pub porous: SubMesh,
    pub interface: InterfaceGeometry,
    pub uf: DofMap,
    pub pf: DofMap,
    pub up: DofMap,
    pub pp: DofMap,
    pub eta: DofMap,
    pub lam: DofMap,
    pub fluid_geometry: Vec<TriangleGeometry>,
    pub porous_geometry: Vec<TriangleGeometry>,
    pub layout: BlockLayout,
}

impl Discretization {
    pub fn new(fluid: SubMesh, porous: SubMesh, rules: &EssentialRules) -> Result<Self, ProblemError> {
        if fluid.region() != RegionTag::Fluid || porous.region() != RegionTag::Porous {
            return Err(ProblemError::Invalid {
                field: "geometry".into(),
                message: "expected a fluid mesh and a porous mesh".into(),
            });
        }
        let interface = pair_interface(&fluid, &porous, DEFAULT_PAIRING_TOL)?;
        let uf = build_dofmap(SpaceKind::VectorP1Bubble, &fluid, None, rules)?;
        let pf = build_dofmap(SpaceKind::ScalarP1, &fluid, None, rules)?;
        let up = build_dofmap(SpaceKind::Rt0, &porous, None, rules)?;
        let pp = build_dofmap(SpaceKind::ScalarP0, &porous, None, rules)?;
        let eta = build_dofmap(SpaceKind::VectorP1, &porous, None, rules)?;
        let lam = build_dofmap(SpaceKind::InterfaceP0, &porous, Some(&interface), rules)?;
        let fluid_geometry = (0..fluid.n_triangles())
            .map(|t| TriangleGeometry::new(fluid.triangle_vertices(t)))
            .collect();
        let porous_geometry = (0..porous.n_triangles())
            .map(|t| TriangleGeometry::new(porous.triangle_vertices(t)))
            .collect();

        let maps = [&uf, &pf, &up, &pp, &eta, &lam];
        let mut full_offsets = [0usize; 7];
        let mut free_offsets = [0usize; 7];
        let mut free_index = Vec::new();
        let mut prescribed = Vec::new();
        let mut next_free = 0;
        for (k, m) in maps.iter().enumerate() {
            for e in m.essential() {
                match e {
                    Some(v) => {
                        free_index.push(None);
                        prescribed.push(*v);
                    }
                    None => {
                        free_index.push(Some(next_free));
                        prescribed.push(0.0);
                        next_free += 1;
                    }
                }
            }
            full_offsets[k + 1] = full_offsets[k] + m.n_dofs();
            free_offsets[k + 1] = next_free;
        }
        let layout = BlockLayout { full_offsets, free_offsets, free_index, prescribed };
        Ok(Discretization {
            fluid,
            porous,
            interface,
            uf,
            pf,
            up,
            pp,
            eta,
            lam,
            fluid_geometry,
            porous_geometry,
            layout,
        })
    }

    pub fn dofmap(&self, b: Block) -> &DofMap {
        match b {
            Block::Uf => &self.uf,
            Block::Pf => &self.pf,
            Block::Up => &self.up,
            Block::Pp => &self.pp,
            Block::Eta => &self.eta,
            Block::Lam => &self.lam,
        }
    }

    /// Structured mesh size `h = 1 / n` of the fluid grid, when structured.
    pub fn structured_h(&self) -> Option<f64> {
        self.fluid.grid().map(|g| g.hx().max(g.hy()))
    }
}

/// Fluid `(0,1)^2` with inlet at `x = 0`, walls at `y = 0, 1`; porous
/// `(1,2) x (0,1)` with outlet at `x = 2`, no-flow at `y = 0, 1`. Both
/// share the interface `x = 1`.
pub fn example1_meshes(
    nx_f: usize,
    ny_f: usize,
    nx_p: usize,
    ny_p: usize,
) -> Result<(SubMesh, SubMesh), MeshError> {
    let on = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let fluid = build_structured_mesh(Rect::new(0.0, 1.0, 0.0, 1.0), nx_f, ny_f, RegionTag::Fluid)?
        .relabel(|m, _| {
            if on(m[0], 1.0) {
                BoundaryLabel::Interface
            } else if on(m[0], 0.0) {
                BoundaryLabel::InletF
            } else {
                BoundaryLabel::GammaF
            }
        });
    let porous = build_structured_mesh(Rect::new(1.0, 2.0, 0.0, 1.0), nx_p, ny_p, RegionTag::Porous)?
        .relabel(|m, _| {
            if on(m[0], 1.0) {
                BoundaryLabel::Interface
            } else if on(m[0], 2.0) {
                BoundaryLabel::OutletP
            } else {
                BoundaryLabel::GammaPNeumann
            }
        });
    Ok((fluid, porous))
}

/// The filter example on an `n x n` grid per subdomain.
pub fn example1_discretization(n: usize) -> Result<Discretization, ProblemError> {
    let (f, p) = example1_meshes(n, n, n, n)?;
    Discretization::new(f, p, &EssentialRules::default())
}

/// Coefficient vectors of all unknowns at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionState {
    pub uf: Vec<f64>,
    pub pf: Vec<f64>,
    pub up: Vec<f64>,
    pub pp: Vec<f64>,
    pub eta: Vec<f64>,
    pub lam: Vec<f64>,
    pub time: f64,
}

impl SolutionState {
    pub fn zeros(disc: &Discretization, time: f64) -> Self {
        SolutionState {
            uf: vec![0.0; disc.uf.n_dofs()],
            pf: vec![0.0; disc.pf.n_dofs()],
            up: vec![0.0; disc.up.n_dofs()],
            pp: vec![0.0; disc.pp.n_dofs()],
            eta: vec![0.0; disc.eta.n_dofs()],
            lam: vec![0.0; disc.lam.n_dofs()],
            time,
        }
    }

    pub fn block(&self, b: Block) -> &[f64] {
        match b {
            Block::Uf => &self.uf,
            Block::Pf => &self.pf,
            Block::Up => &self.up,
            Block::Pp => &self.pp,
            Block::Eta => &self.eta,
            Block::Lam => &self.lam,
        }
    }

    pub fn block_mut(&mut self, b: Block) -> &mut Vec<f64> {
        match b {
            Block::Uf => &mut self.uf,
            Block::Pf => &mut self.pf,
            Block::Up => &mut self.up,
            Block::Pp => &mut self.pp,
            Block::Eta => &mut self.eta,
            Block::Lam => &mut self.lam,
        }
    }

    /// Checks vector lengths against the dof counts.
    pub fn matches(&self, disc: &Discretization) -> bool {
        Block::ALL.iter().all(|&b| self.block(b).len() == disc.dofmap(b).n_dofs())
    }

    pub fn to_full(&self) -> Vec<f64> {
        Block::ALL.iter().flat_map(|&b| self.block(b).iter().copied()).collect()
    }

    pub fn from_full(disc: &Discretization, full: &[f64], time: f64) -> Self {
        let l = &disc.layout;
        let take = |b: Block| full[l.full_range(b)].to_vec();
        SolutionState {
            uf: take(Block::Uf),
            pf: take(Block::Pf),
            up: take(Block::Up),
            pp: take(Block::Pp),
            eta: take(Block::Eta),
            lam: take(Block::Lam),
            time,
        }
    }

    /// The free (unconstrained) entries in system order.
    pub fn to_free(&self, disc: &Discretization) -> Vec<f64> {
        let l = &disc.layout;
        let full = self.to_full();
        let mut x = vec![0.0; l.n_free()];
        for (i, fi) in l.free_index.iter().enumerate() {
            if let Some(k) = fi {
                x[*k] = full[i];
            }
        }
        x
    }

    /// Rebuilds a state from free entries, filling essential dofs with their
    /// prescribed values.
    pub fn from_free(disc: &Discretization, x: &[f64], time: f64) -> Self {
        let l = &disc.layout;
        let full: Vec<f64> = l
            .free_index
            .iter()
            .zip(&l.prescribed)
            .map(|(fi, &p)| fi.map_or(p, |k| x[k]))
            .collect();
        Self::from_full(disc, &full, time)
    }

    pub fn scaled(&self, c: f64) -> Self {
        let s = |v: &Vec<f64>| v.iter().map(|x| c * x).collect::<Vec<_>>();
        SolutionState {
            uf: s(&self.uf),
            pf: s(&self.pf),
            up: s(&self.up),
            pp: s(&self.pp),
            eta: s(&self.eta),
            lam: s(&self.lam),
            time: self.time,
        }
    }
}

/// Initial data: per-triangle means of `p_p0` and vertex interpolation of
/// `eta_p0`, with essential displacement dofs set to their prescribed values.
pub fn initial_state(disc: &Discretization, cfg: &ProblemConfig) -> SolutionState {
    let mut s = SolutionState::zeros(disc, 0.0);
    if let Some(p0) = &cfg.p_p0 {
        let rule = quadrature_rule(5).expect("degree 5 rule");
        for (t, g) in disc.porous_geometry.iter().enumerate() {
            let mean: f64 = rule
                .points
                .iter()
                .zip(&rule.weights)
                .map(|(b, w)| 2.0 * w * p0(g.point(*b), 0.0))
                .sum();
            s.pp[t] = mean;
        }
    }
    if let Some(e0) = &cfg.eta_p0 {
        let n = disc.porous.n_nodes();
        for (v, p) in disc.porous.nodes().iter().enumerate() {
            let e = e0(*p, 0.0);
            s.eta[v] = e[0];
            s.eta[n + v] = e[1];
        }
    }
    for (i, e) in disc.eta.essential().iter().enumerate() {
        if let Some(v) = e {
            s.eta[i] = *v;
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example1_layout() {
        let d = example1_discretization(4).unwrap();
        assert_eq!(d.interface.segments.len(), 4);
        assert_eq!(d.lam.n_dofs(), 4);
        let l = &d.layout;
        assert_eq!(l.n_full(), d.uf.n_dofs() + d.pf.n_dofs() + d.up.n_dofs() + d.pp.n_dofs() + d.eta.n_dofs() + 4);
        let n_ess = d.uf.n_essential() + d.up.n_essential() + d.eta.n_essential();
        assert_eq!(l.n_free(), l.n_full() - n_ess);
        // outlet edges are not no-flow edges
        assert_eq!(d.up.n_essential(), 8);
        // displacement clamped on top, bottom and right: 3*4+... vertices
        let clamped = d.porous.nodes().iter().filter(|p| p[1] == 0.0 || p[1] == 1.0 || p[0] == 2.0).count();
        assert_eq!(d.eta.n_essential(), 2 * clamped);
    }

    #[test]
    fn free_roundtrip_restores_prescribed_values() {
        let d = example1_discretization(3).unwrap();
        let mut s = SolutionState::zeros(&d, 0.5);
        for (i, v) in s.pf.iter_mut().enumerate() {
            *v = i as f64;
        }
        let x = s.to_free(&d);
        assert_eq!(SolutionState::from_free(&d, &x, 0.5), s);
    }

    #[test]
    fn initial_projection() {
        let d = example1_discretization(4).unwrap();
        let mut cfg = ProblemConfig::example1();
        cfg.p_p0 = Some(Arc::new(|x: Point, _| x[0] + 2.0 * x[1]));
        cfg.eta_p0 = Some(Arc::new(|x: Point, _| [x[1], 1.0]));
        let s = initial_state(&d, &cfg);
        for (t, g) in d.porous_geometry.iter().enumerate() {
            let c = g.centroid();
            assert!((s.pp[t] - (c[0] + 2.0 * c[1])).abs() < 1e-13);
        }
        for (i, e) in d.eta.essential().iter().enumerate() {
            if e.is_some() {
                assert_eq!(s.eta[i], 0.0);
            }
        }
        assert!(s.eta.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn config_validation() {
        let mut c = ProblemConfig::example1();
        assert!(c.validate().is_ok());
        assert!(c.is_linear() == false);
        c.s0 = -1.0;
        assert!(matches!(c.validate(), Err(ProblemError::Invalid { field, .. }) if field == "s0"));
    }
}
