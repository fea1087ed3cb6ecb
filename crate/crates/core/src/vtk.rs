//! Legacy ASCII VTK output of a solution state on both subdomains, plus a
//! minimal reader for the files it writes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::elements::{eval_mini_field, eval_rt0_field, eval_vector_p1_field};
use crate::forms::sym_frobenius;
use crate::problem::{Discretization, ProblemConfig, SolutionState};

const VTK_TRIANGLE: u8 = 5;

const VERTEX_BARY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
const CENTROID: [f64; 3] = [1.0 / 3.0; 3];

fn push_scalars(out: &mut String, name: &str, values: &[f64]) {
    let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
    for v in values {
        let _ = writeln!(out, "{v:.8e}");
    }
}

fn push_vectors(out: &mut String, name: &str, values: &[[f64; 2]]) {
    let _ = writeln!(out, "VECTORS {name} double");
    for v in values {
        let _ = writeln!(out, "{:.8e} {:.8e} {:.8e}", v[0], v[1], 0.0);
    }
}

/// Renders `state` as an `UNSTRUCTURED_GRID`. Fluid nodes come first, then
/// porous nodes (interface nodes appear twice). Point data: `fluid_velocity`
/// (zero on porous nodes), `displacement` (zero on fluid nodes). Cell data:
/// `region` (0 fluid, 1 porous), `p_f` and `p_p` at barycenters,
/// `darcy_velocity`, `darcy_speed`, `fluid_viscosity`, `darcy_viscosity`.
pub fn render_vtk(d: &Discretization, cfg: &ProblemConfig, s: &SolutionState) -> String {
    let (fm, pm) = (&d.fluid, &d.porous);
    let (nf, np) = (fm.n_nodes(), pm.n_nodes());
    let (tf, tp) = (fm.n_triangles(), pm.n_triangles());

    let mut vel = vec![[0.0; 2]; nf + np];
    for t in 0..tf {
        let g = &d.fluid_geometry[t];
        for (k, &v) in fm.triangles()[t].iter().enumerate() {
            vel[v] = eval_mini_field(&d.uf, &s.uf, t, g, VERTEX_BARY[k]).0;
        }
    }
    let mut disp = vec![[0.0; 2]; nf + np];
    for t in 0..tp {
        let g = &d.porous_geometry[t];
        for (k, &v) in pm.triangles()[t].iter().enumerate() {
            disp[nf + v] = eval_vector_p1_field(&d.eta, &s.eta, t, g, VERTEX_BARY[k]).0;
        }
    }

    let n_cells = tf + tp;
    let mut region = vec![0.0; n_cells];
    let mut p_f = vec![0.0; n_cells];
    let mut p_p = vec![0.0; n_cells];
    let mut u_p = vec![[0.0; 2]; n_cells];
    let mut speed = vec![0.0; n_cells];
    let mut nu_f = vec![0.0; n_cells];
    let mut nu_p = vec![0.0; n_cells];
    let eps = cfg.power_law_eps;
    for t in 0..tf {
        let g = &d.fluid_geometry[t];
        let cell = d.pf.cell(t);
        p_f[t] = (0..3).map(|k| s.pf[cell[k]] / 3.0).sum();
        let (_, grad) = eval_mini_field(&d.uf, &s.uf, t, g, CENTROID);
        let m = &cfg.fluid_viscosity;
        nu_f[t] = m.nu_fluid(m.regularize(sym_frobenius(grad), eps));
    }
    let ks = cfg.kappa_scalar();
    for t in 0..tp {
        let c = tf + t;
        let g = &d.porous_geometry[t];
        region[c] = 1.0;
        p_p[c] = s.pp[d.pp.cell(t)[0]];
        let u = eval_rt0_field(&d.up, &s.up, t, g, g.centroid());
        u_p[c] = u;
        speed[c] = u[0].hypot(u[1]);
        let m = &cfg.darcy_viscosity;
        nu_p[c] = m.nu_darcy(m.regularize(speed[c], eps), ks);
    }

    let mut out = String::with_capacity(64 * (nf + np + n_cells) * 4);
    out.push_str("# vtk DataFile Version 2.0\n");
    let _ = writeln!(out, "fpsi t={:.8e}", s.time);
    out.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {} double", nf + np);
    for p in fm.nodes().iter().chain(pm.nodes()) {
        let _ = writeln!(out, "{:.8e} {:.8e} {:.8e}", p[0], p[1], 0.0);
    }
    let _ = writeln!(out, "CELLS {} {}", n_cells, 4 * n_cells);
    for tri in fm.triangles() {
        let _ = writeln!(out, "3 {} {} {}", tri[0], tri[1], tri[2]);
    }
    for tri in pm.triangles() {
        let _ = writeln!(out, "3 {} {} {}", nf + tri[0], nf + tri[1], nf + tri[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {n_cells}");
    for _ in 0..n_cells {
        let _ = writeln!(out, "{VTK_TRIANGLE}");
    }
    let _ = writeln!(out, "POINT_DATA {}", nf + np);
    push_vectors(&mut out, "fluid_velocity", &vel);
    push_vectors(&mut out, "displacement", &disp);
    let _ = writeln!(out, "CELL_DATA {n_cells}");
    push_scalars(&mut out, "region", &region);
    push_scalars(&mut out, "p_f", &p_f);
    push_scalars(&mut out, "p_p", &p_p);
    push_vectors(&mut out, "darcy_velocity", &u_p);
    push_scalars(&mut out, "darcy_speed", &speed);
    push_scalars(&mut out, "fluid_viscosity", &nu_f);
    push_scalars(&mut out, "darcy_viscosity", &nu_p);
    out
}

pub fn write_vtk(path: &Path, d: &Discretization, cfg: &ProblemConfig, s: &SolutionState) -> std::io::Result<()> {
    std::fs::write(path, render_vtk(d, cfg, s))
}

/// Contents of a legacy ASCII file as written by [`render_vtk`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VtkData {
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    /// Arrays by name; vectors are stored flat with three components.
    pub point_data: BTreeMap<String, Vec<f64>>,
    pub cell_data: BTreeMap<String, Vec<f64>>,
}

/// Reads the subset of the legacy format produced by [`render_vtk`].
pub fn parse_vtk(text: &str) -> Result<VtkData, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    if !header.starts_with("# vtk DataFile Version") {
        return Err(format!("bad header `{header}`"));
    }
    lines.next();
    if lines.next().map(str::trim) != Some("ASCII") {
        return Err("only ASCII files are supported".into());
    }
    let mut tokens = lines.flat_map(str::split_whitespace);
    let mut next = move || tokens.next().ok_or_else(|| "unexpected end of file".to_string());
    fn num<T: std::str::FromStr>(s: &str) -> Result<T, String> {
        s.parse().map_err(|_| format!("bad number `{s}`"))
    }
    let mut data = VtkData::default();
    let mut section = 0; // 1 point data, 2 cell data
    loop {
        let key = match next() {
            Ok(k) => k,
            Err(_) => break,
        };
        match key {
            "DATASET" => {
                let kind = next()?;
                if kind != "UNSTRUCTURED_GRID" {
                    return Err(format!("unsupported dataset {kind}"));
                }
            }
            "POINTS" => {
                let n: usize = num(next()?)?;
                next()?;
                for _ in 0..n {
                    data.points.push([num(next()?)?, num(next()?)?, num(next()?)?]);
                }
            }
            "CELLS" => {
                let n: usize = num(next()?)?;
                next()?;
                for _ in 0..n {
                    let k: usize = num(next()?)?;
                    data.cells.push((0..k).map(|_| num(next()?)).collect::<Result<_, _>>()?);
                }
            }
            "CELL_TYPES" => {
                let n: usize = num(next()?)?;
                for _ in 0..n {
                    next()?;
                }
            }
            "POINT_DATA" => {
                next()?;
                section = 1;
            }
            "CELL_DATA" => {
                next()?;
                section = 2;
            }
            "SCALARS" | "VECTORS" => {
                let name = next()?.to_owned();
                next()?;
                let comps = if key == "VECTORS" {
                    3
                } else {
                    let c: usize = num(next()?)?;
                    if next()? != "LOOKUP_TABLE" {
                        return Err("expected LOOKUP_TABLE".into());
                    }
                    next()?;
                    c
                };
                let n = if section == 1 { data.points.len() } else { data.cells.len() };
                let values = (0..n * comps).map(|_| num(next()?)).collect::<Result<Vec<f64>, _>>()?;
                match section {
                    1 => data.point_data.insert(name, values),
                    2 => data.cell_data.insert(name, values),
                    _ => return Err("data array outside POINT_DATA/CELL_DATA".into()),
                };
            }
            other => return Err(format!("unexpected token `{other}`")),
        }
    }
    Ok(data)
}
