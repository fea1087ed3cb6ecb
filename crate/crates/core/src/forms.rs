//! Bilinear forms, load vectors and the coupled time-discrete system.
//!
//! The building blocks are assembled unscaled and in block-local indices.
//! [`SystemAssembler`] combines them into one symmetric indefinite matrix:
//! the two mass-balance rows are negated and the displacement test rows
//! are divided by the time step, so every coupling block sits next to its
//! exact transpose.

use rayon::prelude::*;

use crate::elements::{
    eval_bubble, eval_mini_field, eval_rt0, eval_rt0_field, eval_vector_p1_field, quadrature_rule,
    QuadratureRule, TriangleGeometry, GAUSS3_LINE,
};
use crate::mesh::{BoundaryLabel, InterfaceSegment, Point, SubMesh};
use crate::problem::{BjsNonlinearity, Block, Discretization, ProblemConfig, SolutionState};
use crate::sparse::{CsrMatrix, TripletList};

/// Degree of the triangle quadrature used by every volume term.
pub const VOLUME_QUADRATURE_DEGREE: usize = 5;

fn volume_rule() -> QuadratureRule {
    quadrature_rule(VOLUME_QUADRATURE_DEGREE).expect("volume rule")
}

pub fn sym_frobenius(g: [[f64; 2]; 2]) -> f64 {
    let dxy = 0.5 * (g[0][1] + g[1][0]);
    (g[0][0] * g[0][0] + 2.0 * dxy * dxy + g[1][1] * g[1][1]).sqrt()
}

/// `D(e_c s)` for a scalar shape function with gradient `g`, stored as
/// `[Dxx, Dxy, Dyy]`.
#[inline]
fn sym_grad(c: usize, g: [f64; 2]) -> [f64; 3] {
    if c == 0 {
        [g[0], 0.5 * g[1], 0.0]
    } else {
        [0.0, 0.5 * g[0], g[1]]
    }
}

#[inline]
fn ddot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + 2.0 * a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// MINI shape functions at a point: values (vector) and `D`, local order.
fn mini_basis(geom: &TriangleGeometry, bary: [f64; 3]) -> ([[f64; 2]; 8], [[f64; 3]; 8], [f64; 8]) {
    let (bv, bg) = eval_bubble(geom, bary);
    let mut vals = [[0.0; 2]; 8];
    let mut sym = [[0.0; 3]; 8];
    let mut div = [0.0; 8];
    for c in 0..2 {
        for k in 0..4 {
            let (v, g) = if k < 3 { (bary[k], geom.grads[k]) } else { (bv, bg) };
            let i = 4 * c + k;
            vals[i][c] = v;
            sym[i] = sym_grad(c, g);
            div[i] = g[c];
        }
    }
    (vals, sym, div)
}

/// Vector P1 shape functions: values, `D` and divergence in local order.
fn p1_vector_basis(geom: &TriangleGeometry, bary: [f64; 3]) -> ([[f64; 2]; 6], [[f64; 3]; 6], [f64; 6]) {
    let mut vals = [[0.0; 2]; 6];
    let mut sym = [[0.0; 3]; 6];
    let mut div = [0.0; 6];
    for c in 0..2 {
        for k in 0..3 {
            let i = 3 * c + k;
            vals[i][c] = bary[k];
            sym[i] = sym_grad(c, geom.grads[k]);
            div[i] = geom.grads[k][c];
        }
    }
    (vals, sym, div)
}

fn push_local<const R: usize, const C: usize>(
    t: &mut TripletList,
    rows: &[usize],
    cols: &[usize],
    k: &[[f64; C]; R],
) {
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            t.push(r, c, k[i][j]);
        }
    }
}

/// `a_f(u, v) = (2 nu_f(|D(u_lag)|) D(u), D(v))`, Stokes velocity block.
pub fn stokes_viscous_triplets(disc: &Discretization, cfg: &ProblemConfig, lagged: &SolutionState) -> TripletList {
    let n = disc.uf.n_dofs();
    let mut t = TripletList::new(n, n);
    stokes_viscous_into(disc, cfg, lagged, &mut Vec::new(), &mut t);
    t
}

fn stokes_viscous_into(
    disc: &Discretization,
    cfg: &ProblemConfig,
    lagged: &SolutionState,
    locals: &mut Vec<[[f64; 8]; 8]>,
    t: &mut TripletList,
) {
    let rule = volume_rule();
    let model = &cfg.fluid_viscosity;
    disc.fluid_geometry
        .par_iter()
        .enumerate()
        .map(|(t, g)| {
            let mut k = [[0.0; 8]; 8];
            for (b, w) in rule.points.iter().zip(&rule.weights) {
                let (_, grad) = eval_mini_field(&disc.uf, &lagged.uf, t, g, *b);
                let d = model.regularize(sym_frobenius(grad), cfg.power_law_eps);
                let nu = model.nu_fluid(d);
                let s = phys(*w, g) * 2.0 * nu;
                let (_, sym, _) = mini_basis(g, *b);
                for i in 0..8 {
                    for j in 0..8 {
                        k[i][j] += s * ddot(sym[j], sym[i]);
                    }
                }
            }
            k
        })
        .collect_into_vec(locals);
    t.clear();
    for (c, k) in locals.iter().enumerate() {
        let cell = disc.uf.cell(c);
        push_local(t, cell, cell, k);
    }
}

/// Reference weights sum to 1/2; physical weight is `w * 2 |T|`.
#[inline]
fn phys(w: f64, g: &TriangleGeometry) -> f64 {
    2.0 * w * g.area
}

/// `a_pd(u, v) = (nu_eff(|u_lag|) kappa^{-1} u, v)`, Darcy velocity block.
pub fn darcy_triplets(disc: &Discretization, cfg: &ProblemConfig, lagged: &SolutionState) -> TripletList {
    let n = disc.up.n_dofs();
    let mut t = TripletList::new(n, n);
    darcy_into(disc, cfg, lagged, &mut Vec::new(), &mut t);
    t
}

fn darcy_into(
    disc: &Discretization,
    cfg: &ProblemConfig,
    lagged: &SolutionState,
    locals: &mut Vec<[[f64; 3]; 3]>,
    t: &mut TripletList,
) {
    let rule = volume_rule();
    let model = &cfg.darcy_viscosity;
    let ks = cfg.kappa_scalar();
    let kinv = [1.0 / cfg.kappa[0], 1.0 / cfg.kappa[1]];
    disc.porous_geometry
        .par_iter()
        .enumerate()
        .map(|(t, g)| {
            let signs = disc.up.rt0_signs(t);
            let mut k = [[0.0; 3]; 3];
            for (b, w) in rule.points.iter().zip(&rule.weights) {
                let x = g.point(*b);
                let u = eval_rt0_field(&disc.up, &lagged.up, t, g, x);
                let m = model.regularize(u[0].hypot(u[1]), cfg.power_law_eps);
                let nu = model.nu_darcy(m, ks);
                let (vals, _) = eval_rt0(g, signs, x);
                let s = phys(*w, g) * nu;
                for i in 0..3 {
                    for j in 0..3 {
                        k[i][j] += s * (kinv[0] * vals[i][0] * vals[j][0] + kinv[1] * vals[i][1] * vals[j][1]);
                    }
                }
            }
            k
        })
        .collect_into_vec(locals);
    t.clear();
    for (c, k) in locals.iter().enumerate() {
        let cell = disc.up.cell(c);
        push_local(t, cell, cell, k);
    }
}

/// `a_pe(eta, xi) = 2 mu_p (D eta, D xi) + lambda_p (div eta, div xi)`.
pub fn elasticity_triplets(disc: &Discretization, cfg: &ProblemConfig) -> TripletList {
    let n = disc.eta.n_dofs();
    let mut t = TripletList::with_capacity(n, n, 36 * disc.porous_geometry.len());
    let centroid = [1.0 / 3.0; 3];
    for (c, g) in disc.porous_geometry.iter().enumerate() {
        let (_, sym, div) = p1_vector_basis(g, centroid);
        let mut k = [[0.0; 6]; 6];
        for i in 0..6 {
            for j in 0..6 {
                k[i][j] = g.area * (2.0 * cfg.mu_p * ddot(sym[j], sym[i]) + cfg.lambda_p * div[j] * div[i]);
            }
        }
        let cell = disc.eta.cell(c);
        push_local(&mut t, cell, cell, &k);
    }
    t
}

/// `b_f(v, w) = -(div v, w)`: rows are P1 pressure dofs, columns MINI dofs.
pub fn stokes_divergence_triplets(disc: &Discretization) -> TripletList {
    let rule = volume_rule();
    let mut t = TripletList::with_capacity(disc.pf.n_dofs(), disc.uf.n_dofs(), 24 * disc.fluid_geometry.len());
    for (c, g) in disc.fluid_geometry.iter().enumerate() {
        let mut k = [[0.0; 8]; 3];
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let (_, _, div) = mini_basis(g, *b);
            let s = phys(*w, g);
            for i in 0..3 {
                for j in 0..8 {
                    k[i][j] -= s * b[i] * div[j];
                }
            }
        }
        push_local(&mut t, disc.pf.cell(c), disc.uf.cell(c), &k);
    }
    t
}

/// `b_p(v, w) = -(div v, w)`: rows are P0 dofs, columns RT0 dofs.
pub fn darcy_divergence_triplets(disc: &Discretization) -> TripletList {
    let mut t = TripletList::with_capacity(disc.pp.n_dofs(), disc.up.n_dofs(), 3 * disc.porous_geometry.len());
    for c in 0..disc.porous_geometry.len() {
        let signs = disc.up.rt0_signs(c);
        let k = [[-signs[0], -signs[1], -signs[2]]];
        push_local(&mut t, disc.pp.cell(c), disc.up.cell(c), &k);
    }
    t
}

/// `b_p(xi, w) = -(div xi, w)` for displacements: rows P0, columns vector P1.
pub fn displacement_divergence_triplets(disc: &Discretization) -> TripletList {
    let mut t = TripletList::with_capacity(disc.pp.n_dofs(), disc.eta.n_dofs(), 6 * disc.porous_geometry.len());
    for (c, g) in disc.porous_geometry.iter().enumerate() {
        let (_, _, div) = p1_vector_basis(g, [1.0 / 3.0; 3]);
        let mut k = [[0.0; 6]; 1];
        for j in 0..6 {
            k[0][j] = -g.area * div[j];
        }
        push_local(&mut t, disc.pp.cell(c), disc.eta.cell(c), &k);
    }
    t
}

/// `(p, w)` on P0: the diagonal of triangle areas.
pub fn darcy_mass_triplets(disc: &Discretization) -> TripletList {
    let n = disc.pp.n_dofs();
    let mut t = TripletList::with_capacity(n, n, n);
    for (c, g) in disc.porous_geometry.iter().enumerate() {
        t.push(c, c, g.area);
    }
    t
}

/// Traces of the discrete functions living on one interface point.
struct TracePoint {
    x: Point,
    w: f64,
    uf_vals: [[f64; 2]; 8],
    eta_vals: [[f64; 2]; 6],
    up_vals: [[f64; 2]; 3],
}

fn trace_points(disc: &Discretization, seg: &InterfaceSegment) -> [TracePoint; 3] {
    let gf = &disc.fluid_geometry[seg.fluid_triangle];
    let gp = &disc.porous_geometry[seg.porous_triangle];
    let signs = disc.up.rt0_signs(seg.porous_triangle);
    seg.gauss_points().map(|(x, w)| {
        let (uf_vals, _, _) = mini_basis(gf, gf.barycentric(x));
        let (eta_vals, _, _) = p1_vector_basis(gp, gp.barycentric(x));
        let (up_vals, _) = eval_rt0(gp, signs, x);
        TracePoint { x, w, uf_vals, eta_vals, up_vals }
    })
}

/// Interface coefficient `nu_I alpha_BJS / sqrt(t . kappa t)` at a trace
/// point. In frozen mode `nu_I` follows the lagged slip
/// `(u_lag - (eta_lag - eta_old) / tau) . t`.
fn bjs_coefficient(
    disc: &Discretization,
    cfg: &ProblemConfig,
    seg: &InterfaceSegment,
    x: Point,
    slip_states: Option<(&SolutionState, &SolutionState, f64)>,
) -> f64 {
    let kt = cfg.kappa_tangential(seg.tangent);
    let model = &cfg.interface_viscosity;
    let nu = match (cfg.bjs_nonlinearity, slip_states) {
        (BjsNonlinearity::Frozen, Some((lagged, prev, tau))) => {
            let gf = &disc.fluid_geometry[seg.fluid_triangle];
            let gp = &disc.porous_geometry[seg.porous_triangle];
            let (u, _) = eval_mini_field(&disc.uf, &lagged.uf, seg.fluid_triangle, gf, gf.barycentric(x));
            let bp = gp.barycentric(x);
            let (el, _) = eval_vector_p1_field(&disc.eta, &lagged.eta, seg.porous_triangle, gp, bp);
            let (eo, _) = eval_vector_p1_field(&disc.eta, &prev.eta, seg.porous_triangle, gp, bp);
            let v = [u[0] - (el[0] - eo[0]) / tau, u[1] - (el[1] - eo[1]) / tau];
            let s = model.regularize(dot(v, seg.tangent).abs(), cfg.power_law_eps);
            model.nu_interface(s, kt)
        }
        _ => model.reference_viscosity(),
    };
    nu * cfg.alpha_bjs / kt.sqrt()
}

/// Tangential interface products `<c_I w . t, z . t>` for fluid and
/// displacement traces.
#[derive(Debug, Clone)]
pub struct SlipTriplets {
    /// Fluid-fluid, `n_uf x n_uf`.
    pub ff: TripletList,
    /// Fluid rows, displacement columns, `n_uf x n_eta`.
    pub fe: TripletList,
    /// Displacement-displacement, `n_eta x n_eta`.
    pub ee: TripletList,
}

pub fn slip_triplets(
    disc: &Discretization,
    cfg: &ProblemConfig,
    slip_states: Option<(&SolutionState, &SolutionState, f64)>,
) -> SlipTriplets {
    let (nu, ne) = (disc.uf.n_dofs(), disc.eta.n_dofs());
    let ns = disc.interface.segments.len();
    let mut ff = TripletList::with_capacity(nu, nu, 64 * ns);
    let mut fe = TripletList::with_capacity(nu, ne, 48 * ns);
    let mut ee = TripletList::with_capacity(ne, ne, 36 * ns);
    for seg in &disc.interface.segments {
        let t = seg.tangent;
        let mut kff = [[0.0; 8]; 8];
        let mut kfe = [[0.0; 6]; 8];
        let mut kee = [[0.0; 6]; 6];
        for p in trace_points(disc, seg) {
            let c = p.w * bjs_coefficient(disc, cfg, seg, p.x, slip_states);
            let ft = p.uf_vals.map(|v| dot(v, t));
            let et = p.eta_vals.map(|v| dot(v, t));
            for i in 0..8 {
                for j in 0..8 {
                    kff[i][j] += c * ft[i] * ft[j];
                }
                for j in 0..6 {
                    kfe[i][j] += c * ft[i] * et[j];
                }
            }
            for i in 0..6 {
                for j in 0..6 {
                    kee[i][j] += c * et[i] * et[j];
                }
            }
        }
        let cf = disc.uf.cell(seg.fluid_triangle);
        let ce = disc.eta.cell(seg.porous_triangle);
        push_local(&mut ff, cf, cf, &kff);
        push_local(&mut fe, cf, ce, &kfe);
        push_local(&mut ee, ce, ce, &kee);
    }
    SlipTriplets { ff, fe, ee }
}

/// Normal-flux pairings with the multiplier, `<v . n, mu>`; rows are
/// multiplier dofs.
#[derive(Debug, Clone)]
pub struct InterfaceFluxTriplets {
    /// `<v_f . n_f, mu>`.
    pub fluid: TripletList,
    /// `<v_p . n_p, mu>`.
    pub darcy: TripletList,
    /// `<xi . n_p, mu>`.
    pub displacement: TripletList,
}

pub fn interface_flux_triplets(disc: &Discretization) -> InterfaceFluxTriplets {
    let nl = disc.lam.n_dofs();
    let ns = disc.interface.segments.len();
    let mut fluid = TripletList::with_capacity(nl, disc.uf.n_dofs(), 8 * ns);
    let mut darcy = TripletList::with_capacity(nl, disc.up.n_dofs(), 3 * ns);
    let mut displacement = TripletList::with_capacity(nl, disc.eta.n_dofs(), 6 * ns);
    for seg in &disc.interface.segments {
        let np = seg.normal_p;
        let nf = seg.normal_f();
        let mut kf = [[0.0; 8]; 1];
        let mut kd = [[0.0; 3]; 1];
        let mut ke = [[0.0; 6]; 1];
        for p in trace_points(disc, seg) {
            for j in 0..8 {
                kf[0][j] += p.w * dot(p.uf_vals[j], nf);
            }
            for j in 0..3 {
                kd[0][j] += p.w * dot(p.up_vals[j], np);
            }
            for j in 0..6 {
                ke[0][j] += p.w * dot(p.eta_vals[j], np);
            }
        }
        let row = [seg.multiplier];
        push_local(&mut fluid, &row, disc.uf.cell(seg.fluid_triangle), &kf);
        push_local(&mut darcy, &row, disc.up.cell(seg.porous_triangle), &kd);
        push_local(&mut displacement, &row, disc.eta.cell(seg.porous_triangle), &ke);
    }
    InterfaceFluxTriplets { fluid, darcy, displacement }
}

/// Block-local matrices of the individual forms, for inspection and tests.
pub fn assemble_af(disc: &Discretization, cfg: &ProblemConfig, lagged: &SolutionState) -> CsrMatrix {
    stokes_viscous_triplets(disc, cfg, lagged).into_csr()
}

pub fn assemble_apd(disc: &Discretization, cfg: &ProblemConfig, lagged: &SolutionState) -> CsrMatrix {
    darcy_triplets(disc, cfg, lagged).into_csr()
}

pub fn assemble_ape(disc: &Discretization, cfg: &ProblemConfig) -> CsrMatrix {
    elasticity_triplets(disc, cfg).into_csr()
}

pub fn assemble_bf(disc: &Discretization) -> CsrMatrix {
    stokes_divergence_triplets(disc).into_csr()
}

pub fn assemble_bp(disc: &Discretization) -> CsrMatrix {
    darcy_divergence_triplets(disc).into_csr()
}

/// `a_BJS(u_f, eta / tau; v_f, xi)` as a full-size matrix over all unknowns
/// (fluid and displacement blocks only), lagged per the interface mode.
pub fn assemble_abjs(
    disc: &Discretization,
    cfg: &ProblemConfig,
    lagged: &SolutionState,
    prev: &SolutionState,
    tau: f64,
) -> CsrMatrix {
    let s = slip_triplets(disc, cfg, Some((lagged, prev, tau)));
    let l = &disc.layout;
    let (ou, oe) = (l.full_offsets[Block::Uf as usize], l.full_offsets[Block::Eta as usize]);
    let mut t = TripletList::new(l.n_full(), l.n_full());
    for &(r, c, v) in s.ff.entries() {
        t.push(ou + r, ou + c, v);
    }
    for &(r, c, v) in s.fe.entries() {
        t.push(ou + r, oe + c, -v / tau);
        t.push(oe + c, ou + r, -v);
    }
    for &(r, c, v) in s.ee.entries() {
        t.push(oe + r, oe + c, v / tau);
    }
    t.into_csr()
}

/// `b_Gamma(v_f, v_p, xi; mu)` with rows the multiplier dofs and columns
/// all unknowns.
pub fn assemble_bgamma(disc: &Discretization) -> CsrMatrix {
    let g = interface_flux_triplets(disc);
    let l = &disc.layout;
    let mut t = TripletList::new(disc.lam.n_dofs(), l.n_full());
    for (list, b) in [(&g.fluid, Block::Uf), (&g.darcy, Block::Up), (&g.displacement, Block::Eta)] {
        let off = l.full_offsets[b as usize];
        for &(r, c, v) in list.entries() {
            t.push(r, off + c, v);
        }
    }
    t.into_csr()
}

/// Storage contribution `(s0 / tau) (p, w) - (alpha / tau) b_p(eta, w)` as
/// a matrix over `(p, eta)` columns and the matching load from the
/// previous time level.
pub fn assemble_time_mass(
    disc: &Discretization,
    cfg: &ProblemConfig,
    prev: &SolutionState,
    tau: f64,
) -> (CsrMatrix, Vec<f64>) {
    let l = &disc.layout;
    let (op, oe) = (l.full_offsets[Block::Pp as usize], l.full_offsets[Block::Eta as usize]);
    let np = disc.pp.n_dofs();
    let mut t = TripletList::new(np, l.n_full());
    let mut rhs = vec![0.0; np];
    let m = darcy_mass_triplets(disc);
    for &(r, c, v) in m.entries() {
        t.push(r, op + c, cfg.s0 / tau * v);
        rhs[r] += cfg.s0 / tau * v * prev.pp[c];
    }
    let b = displacement_divergence_triplets(disc);
    for &(r, c, v) in b.entries() {
        t.push(r, oe + c, -cfg.alpha_p / tau * v);
        rhs[r] -= cfg.alpha_p / tau * v * prev.eta[c];
    }
    (t.into_csr(), rhs)
}

fn boundary_gauss(mesh: &SubMesh, b: usize) -> [(Point, f64); 3] {
    let [i, j] = mesh.boundary_edges()[b].nodes;
    let (a, c) = (mesh.nodes()[i], mesh.nodes()[j]);
    let len = mesh.boundary_edge_length(b);
    GAUSS3_LINE.map(|(s, w)| ([a[0] + s * (c[0] - a[0]), a[1] + s * (c[1] - a[1])], w * len))
}

/// Unscaled load vectors of the momentum-type equations and the mass
/// sources at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadVectors {
    /// `(f_f, v) - <p_in, v . n_f>_{inlet}`.
    pub uf: Vec<f64>,
    /// `(q_f, w)`.
    pub pf: Vec<f64>,
    /// `-<p_out, v . n_p>_{outlet}`.
    pub up: Vec<f64>,
    /// `(q_p, w)`.
    pub pp: Vec<f64>,
    /// `(f_p, xi)`.
    pub eta: Vec<f64>,
}

pub fn assemble_loads(disc: &Discretization, cfg: &ProblemConfig, t: f64) -> LoadVectors {
    let rule = volume_rule();
    let mut out = LoadVectors {
        uf: vec![0.0; disc.uf.n_dofs()],
        pf: vec![0.0; disc.pf.n_dofs()],
        up: vec![0.0; disc.up.n_dofs()],
        pp: vec![0.0; disc.pp.n_dofs()],
        eta: vec![0.0; disc.eta.n_dofs()],
    };
    if let Some(f) = &cfg.f_f {
        for (c, g) in disc.fluid_geometry.iter().enumerate() {
            let cell = disc.uf.cell(c);
            for (b, w) in rule.points.iter().zip(&rule.weights) {
                let fx = f(g.point(*b), t);
                let (vals, _, _) = mini_basis(g, *b);
                for i in 0..8 {
                    out.uf[cell[i]] += phys(*w, g) * dot(fx, vals[i]);
                }
            }
        }
    }
    if let Some(q) = &cfg.q_f {
        for (c, g) in disc.fluid_geometry.iter().enumerate() {
            let cell = disc.pf.cell(c);
            for (b, w) in rule.points.iter().zip(&rule.weights) {
                let qx = q(g.point(*b), t);
                for i in 0..3 {
                    out.pf[cell[i]] += phys(*w, g) * qx * b[i];
                }
            }
        }
    }
    if let Some(f) = &cfg.f_p {
        for (c, g) in disc.porous_geometry.iter().enumerate() {
            let cell = disc.eta.cell(c);
            for (b, w) in rule.points.iter().zip(&rule.weights) {
                let fx = f(g.point(*b), t);
                let (vals, _, _) = p1_vector_basis(g, *b);
                for i in 0..6 {
                    out.eta[cell[i]] += phys(*w, g) * dot(fx, vals[i]);
                }
            }
        }
    }
    if let Some(q) = &cfg.q_p {
        for (c, g) in disc.porous_geometry.iter().enumerate() {
            for (b, w) in rule.points.iter().zip(&rule.weights) {
                out.pp[c] += phys(*w, g) * q(g.point(*b), t);
            }
        }
    }
    if cfg.p_in != 0.0 {
        let m = &disc.fluid;
        for b in m.edges_with_label(BoundaryLabel::InletF) {
            let tri = m.boundary_edge_triangle(b);
            let g = &disc.fluid_geometry[tri];
            let n = m.boundary_normal(b);
            let cell = disc.uf.cell(tri);
            for (x, w) in boundary_gauss(m, b) {
                let (vals, _, _) = mini_basis(g, g.barycentric(x));
                for i in 0..8 {
                    out.uf[cell[i]] -= w * cfg.p_in * dot(vals[i], n);
                }
            }
        }
    }
    if cfg.p_out != 0.0 {
        let m = &disc.porous;
        for b in m.edges_with_label(BoundaryLabel::OutletP) {
            let tri = m.boundary_edge_triangle(b);
            let g = &disc.porous_geometry[tri];
            let n = m.boundary_normal(b);
            let cell = disc.up.cell(tri);
            for (x, w) in boundary_gauss(m, b) {
                let (vals, _) = eval_rt0(g, disc.up.rt0_signs(tri), x);
                for i in 0..3 {
                    out.up[cell[i]] -= w * cfg.p_out * dot(vals[i], n);
                }
            }
        }
    }
    out
}

/// The reduced (essential dofs removed) coupled system of one Picard step.
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Block offsets in the reduced vector, system order.
    pub offsets: [usize; 7],
}

/// Row factors turning the stacked equations into a symmetric matrix.
fn row_scale(b: Block, tau: f64) -> f64 {
    match b {
        Block::Pf | Block::Pp => -1.0,
        Block::Eta => 1.0 / tau,
        _ => 1.0,
    }
}

/// Lag-independent pieces, assembled once.
struct ConstantParts {
    elasticity: TripletList,
    stokes_div: TripletList,
    darcy_div: TripletList,
    disp_div: TripletList,
    mass: TripletList,
    flux: InterfaceFluxTriplets,
}

/// Reusable buffers of the lag-dependent pieces.
struct Workspace {
    af_locals: Vec<[[f64; 8]; 8]>,
    apd_locals: Vec<[[f64; 3]; 3]>,
    af: TripletList,
    apd: TripletList,
}

/// Where each full-system triplet goes after elimination.
const DROPPED: u32 = u32::MAX;
const TO_RHS: u32 = u32::MAX - 1;

fn fill_full(
    disc: &Discretization,
    cfg: &ProblemConfig,
    tau: f64,
    k: &ConstantParts,
    ws: &mut Workspace,
    prev: &SolutionState,
    lagged: &SolutionState,
    t_new: f64,
    t: &mut TripletList,
    rhs: &mut Vec<f64>,
) {
    let l = &disc.layout;
    let off = |b: Block| l.full_offsets[b as usize];
    let n = l.n_full();

    stokes_viscous_into(disc, cfg, lagged, &mut ws.af_locals, &mut ws.af);
    darcy_into(disc, cfg, lagged, &mut ws.apd_locals, &mut ws.apd);
    let slip = slip_triplets(disc, cfg, Some((lagged, prev, tau)));
    t.clear();

    let mut put = |list: &TripletList, rb: Block, cb: Block, factor: f64, transposed: bool| {
        let (ro, co) = (off(rb), off(cb));
        if transposed {
            let s = row_scale(cb, tau) * factor;
            for &(r, c, v) in list.entries() {
                t.push(co + c, ro + r, s * v);
            }
        } else {
            let s = row_scale(rb, tau) * factor;
            for &(r, c, v) in list.entries() {
                t.push(ro + r, co + c, s * v);
            }
        }
    };
    // Stokes momentum and mass
    put(&ws.af, Block::Uf, Block::Uf, 1.0, false);
    put(&slip.ff, Block::Uf, Block::Uf, 1.0, false);
    put(&k.stokes_div, Block::Pf, Block::Uf, -1.0, false);
    put(&k.stokes_div, Block::Pf, Block::Uf, 1.0, true);
    // BJS coupling with the displacement rate
    put(&slip.fe, Block::Uf, Block::Eta, -1.0 / tau, false);
    put(&slip.fe, Block::Uf, Block::Eta, -1.0, true);
    put(&slip.ee, Block::Eta, Block::Eta, 1.0 / tau, false);
    // Darcy
    put(&ws.apd, Block::Up, Block::Up, 1.0, false);
    put(&k.darcy_div, Block::Pp, Block::Up, -1.0, false);
    put(&k.darcy_div, Block::Pp, Block::Up, 1.0, true);
    // elasticity and storage
    put(&k.elasticity, Block::Eta, Block::Eta, 1.0, false);
    put(&k.disp_div, Block::Pp, Block::Eta, -cfg.alpha_p / tau, false);
    put(&k.disp_div, Block::Pp, Block::Eta, cfg.alpha_p, true);
    put(&k.mass, Block::Pp, Block::Pp, cfg.s0 / tau, false);
    // interface mass conservation
    put(&k.flux.fluid, Block::Lam, Block::Uf, 1.0, false);
    put(&k.flux.fluid, Block::Lam, Block::Uf, 1.0, true);
    put(&k.flux.darcy, Block::Lam, Block::Up, 1.0, false);
    put(&k.flux.darcy, Block::Lam, Block::Up, 1.0, true);
    put(&k.flux.displacement, Block::Lam, Block::Eta, 1.0 / tau, false);
    put(&k.flux.displacement, Block::Lam, Block::Eta, 1.0, true);

    // right-hand side
    let loads = assemble_loads(disc, cfg, t_new);
    rhs.clear();
    rhs.resize(n, 0.0);
    for (b, v) in [
        (Block::Uf, &loads.uf),
        (Block::Pf, &loads.pf),
        (Block::Up, &loads.up),
        (Block::Pp, &loads.pp),
        (Block::Eta, &loads.eta),
    ] {
        let (o, s) = (off(b), row_scale(b, tau));
        for (i, x) in v.iter().enumerate() {
            rhs[o + i] += s * x;
        }
    }
    // BJS part carried by eta_old
    for &(r, c, v) in slip.fe.entries() {
        rhs[off(Block::Uf) + r] -= v * prev.eta[c] / tau;
    }
    for &(r, c, v) in slip.ee.entries() {
        rhs[off(Block::Eta) + r] += v * prev.eta[c] / (tau * tau);
    }
    // storage terms of the previous level
    for &(r, c, v) in k.mass.entries() {
        rhs[off(Block::Pp) + r] -= cfg.s0 / tau * v * prev.pp[c];
    }
    for &(r, c, v) in k.disp_div.entries() {
        rhs[off(Block::Pp) + r] += cfg.alpha_p / tau * v * prev.eta[c];
    }
    for &(r, c, v) in k.flux.displacement.entries() {
        rhs[off(Block::Lam) + r] += v * prev.eta[c] / tau;
    }
}

/// Assembles the coupled matrix of one Backward Euler step around a lagged
/// state. The first call fixes the sparsity pattern; later calls only
/// refill values through a precomputed slot map and reuse all buffers.
pub struct SystemAssembler<'a> {
    disc: &'a Discretization,
    cfg: &'a ProblemConfig,
    tau: f64,
    constant: ConstantParts,
    ws: Workspace,
    full: TripletList,
    full_rhs: Vec<f64>,
    slots: Vec<u32>,
    system: Option<CoupledSystem>,
}

impl<'a> SystemAssembler<'a> {
    pub fn new(disc: &'a Discretization, cfg: &'a ProblemConfig, tau: f64) -> Self {
        assert!(tau > 0.0, "time step must be positive");
        let n = disc.layout.n_full();
        SystemAssembler {
            disc,
            cfg,
            tau,
            constant: ConstantParts {
                elasticity: elasticity_triplets(disc, cfg),
                stokes_div: stokes_divergence_triplets(disc),
                darcy_div: darcy_divergence_triplets(disc),
                disp_div: displacement_divergence_triplets(disc),
                mass: darcy_mass_triplets(disc),
                flux: interface_flux_triplets(disc),
            },
            ws: Workspace {
                af_locals: Vec::new(),
                apd_locals: Vec::new(),
                af: TripletList::new(disc.uf.n_dofs(), disc.uf.n_dofs()),
                apd: TripletList::new(disc.up.n_dofs(), disc.up.n_dofs()),
            },
            full: TripletList::new(n, n),
            full_rhs: Vec::new(),
            slots: Vec::new(),
            system: None,
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn discretization(&self) -> &'a Discretization {
        self.disc
    }

    /// Full matrix (all dofs, before elimination) in triplet form together
    /// with the full right-hand side, for the step `prev -> t_new`.
    pub fn assemble_full(&mut self, prev: &SolutionState, lagged: &SolutionState, t_new: f64) -> (TripletList, Vec<f64>) {
        self.fill(prev, lagged, t_new);
        (self.full.clone(), self.full_rhs.clone())
    }

    fn fill(&mut self, prev: &SolutionState, lagged: &SolutionState, t_new: f64) {
        fill_full(
            self.disc,
            self.cfg,
            self.tau,
            &self.constant,
            &mut self.ws,
            prev,
            lagged,
            t_new,
            &mut self.full,
            &mut self.full_rhs,
        );
    }

    /// Builds the reduced pattern and the slot of every full triplet.
    fn plan(&mut self) -> CoupledSystem {
        let l = &self.disc.layout;
        let nf = l.n_free();
        let mut reduced = TripletList::with_capacity(nf, nf, self.full.len());
        let mut slots = Vec::with_capacity(self.full.len());
        for &(r, c, _) in self.full.entries() {
            match (l.free_index[r], l.free_index[c]) {
                (Some(rr), Some(cc)) => {
                    slots.push(reduced.len() as u32);
                    reduced.push(rr, cc, 0.0);
                }
                (Some(_), None) => slots.push(TO_RHS),
                (None, _) => slots.push(DROPPED),
            }
        }
        assert!(reduced.len() < TO_RHS as usize, "system too large for 32-bit slots");
        let (matrix, scatter) = reduced.into_csr_with_scatter();
        for s in slots.iter_mut() {
            if *s < TO_RHS {
                *s = scatter[*s as usize] as u32;
            }
        }
        self.slots = slots;
        CoupledSystem { matrix, rhs: vec![0.0; nf], offsets: l.free_offsets }
    }

    /// Reduced system for the step `prev -> t_new` around `lagged`.
    pub fn assemble(&mut self, prev: &SolutionState, lagged: &SolutionState, t_new: f64) -> &CoupledSystem {
        self.fill(prev, lagged, t_new);
        let mut sys = match self.system.take() {
            Some(s) => s,
            None => self.plan(),
        };
        assert_eq!(self.slots.len(), self.full.len(), "assembly pattern changed");
        let l = &self.disc.layout;
        for (i, fi) in l.free_index.iter().enumerate() {
            if let Some(k) = fi {
                sys.rhs[*k] = self.full_rhs[i];
            }
        }
        let vals = sys.matrix.values_mut();
        vals.iter_mut().for_each(|v| *v = 0.0);
        for (&(r, c, v), &s) in self.full.entries().iter().zip(&self.slots) {
            if s < TO_RHS {
                vals[s as usize] += v;
            } else if s == TO_RHS {
                let rr = l.free_index[r].expect("free row");
                sys.rhs[rr] -= v * l.prescribed[c];
            }
        }
        self.system.insert(sys)
    }
}
