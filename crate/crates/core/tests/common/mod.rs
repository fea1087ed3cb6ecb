//! Dense brute-force oracle for the coupled system on a skewed
//! four-triangle mesh with one interface edge. It shares only the dof
//! numbering with the library: shape functions, RT0 fields, quadrature and
//! the weak forms are rebuilt here from scratch.

#![allow(dead_code)]

use std::sync::Arc;

use fpsi::elements::{quadrature_rule, EssentialRules};
use fpsi::forms::SystemAssembler;
use fpsi::mesh::{BoundaryEdge, BoundaryLabel, Point, RegionTag, SubMesh};
use fpsi::problem::{BjsNonlinearity, Block, Discretization, ProblemConfig, SolutionState};
use fpsi::viscosity::ViscosityModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn edge(a: usize, b: usize, label: BoundaryLabel) -> BoundaryEdge {
    BoundaryEdge { nodes: [a, b], label }
}

pub fn micro_discretization() -> Discretization {
    use BoundaryLabel::*;
    let fluid = SubMesh::new(
        RegionTag::Fluid,
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.15, 0.9]],
        vec![[0, 1, 2], [0, 2, 3]],
        vec![edge(0, 1, GammaF), edge(1, 2, Interface), edge(2, 3, GammaF), edge(3, 0, InletF)],
    )
    .unwrap();
    let porous = SubMesh::new(
        RegionTag::Porous,
        vec![[1.0, 0.0], [2.1, 0.2], [1.9, 1.1], [1.0, 1.0]],
        vec![[0, 1, 3], [1, 2, 3]],
        vec![edge(0, 1, GammaPNeumann), edge(1, 2, OutletP), edge(2, 3, GammaPNeumann), edge(3, 0, Interface)],
    )
    .unwrap();
    Discretization::new(fluid, porous, &EssentialRules::default()).unwrap()
}

// ---------------------------------------------------------------- geometry

pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Barycentric coordinates by Cramer's rule.
pub fn bary(x: &[Point; 3], p: Point) -> [f64; 3] {
    let d = (x[1][0] - x[0][0]) * (x[2][1] - x[0][1]) - (x[2][0] - x[0][0]) * (x[1][1] - x[0][1]);
    let r = sub(p, x[0]);
    let l1 = (r[0] * (x[2][1] - x[0][1]) - (x[2][0] - x[0][0]) * r[1]) / d;
    let l2 = ((x[1][0] - x[0][0]) * r[1] - r[0] * (x[1][1] - x[0][1])) / d;
    [1.0 - l1 - l2, l1, l2]
}

/// Gradients of the barycentric coordinates by central differences of an
/// affine map (exact up to rounding).
pub fn bary_grads(x: &[Point; 3]) -> [[f64; 2]; 3] {
    let c = [(x[0][0] + x[1][0] + x[2][0]) / 3.0, (x[0][1] + x[1][1] + x[2][1]) / 3.0];
    let h = 0.25;
    let px = bary(x, [c[0] + h, c[1]]);
    let mx = bary(x, [c[0] - h, c[1]]);
    let py = bary(x, [c[0], c[1] + h]);
    let my = bary(x, [c[0], c[1] - h]);
    let mut g = [[0.0; 2]; 3];
    for k in 0..3 {
        g[k] = [(px[k] - mx[k]) / (2.0 * h), (py[k] - my[k]) / (2.0 * h)];
    }
    g
}

pub fn area(x: &[Point; 3]) -> f64 {
    0.5 * ((x[1][0] - x[0][0]) * (x[2][1] - x[0][1]) - (x[2][0] - x[0][0]) * (x[1][1] - x[0][1]))
}

// -------------------------------------------------------------- quadrature

/// Gauss-Legendre nodes and weights on `[0, 1]` by Newton iteration.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        out.push((0.5 * (1.0 - z), 0.5 * w));
    }
    out
}

/// Points and physical weights on a triangle.
pub type Rule = Vec<(Point, f64)>;

/// Collapsed (Duffy) tensor Gauss rule, exact for degree `2n - 2`.
pub fn duffy_rule(x: &[Point; 3], n: usize) -> Rule {
    let g = gauss_legendre(n);
    let a2 = 2.0 * area(x);
    let mut out = Vec::new();
    for &(u, wu) in &g {
        for &(v, wv) in &g {
            let (s, t) = (u, v * (1.0 - u));
            let p = [
                x[0][0] + s * (x[1][0] - x[0][0]) + t * (x[2][0] - x[0][0]),
                x[0][1] + s * (x[1][1] - x[0][1]) + t * (x[2][1] - x[0][1]),
            ];
            out.push((p, wu * wv * (1.0 - u) * a2));
        }
    }
    out
}

/// The library's degree-5 points, mapped here; used where the integrand
/// contains the lagged viscosity and is not polynomial.
pub fn library_rule(x: &[Point; 3]) -> Rule {
    let r = quadrature_rule(5).unwrap();
    let a2 = 2.0 * area(x);
    r.points
        .iter()
        .zip(&r.weights)
        .map(|(b, w)| {
            let p = [
                b[0] * x[0][0] + b[1] * x[1][0] + b[2] * x[2][0],
                b[0] * x[0][1] + b[1] * x[1][1] + b[2] * x[2][1],
            ];
            (p, w * a2)
        })
        .collect()
}

pub fn line_rule(a: Point, b: Point) -> Vec<(Point, f64)> {
    let len = sub(b, a)[0].hypot(sub(b, a)[1]);
    let s = (0.6f64).sqrt();
    [(-s, 5.0 / 9.0), (0.0, 8.0 / 9.0), (s, 5.0 / 9.0)]
        .iter()
        .map(|&(z, w)| {
            let t = 0.5 * (1.0 + z);
            ([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])], 0.5 * w * len)
        })
        .collect()
}

// ------------------------------------------------------------ global bases

/// Value and gradient `g[c][d]` of a vector field, restricted to a triangle.
pub type VecEval = ([f64; 2], [[f64; 2]; 2]);

pub struct FluidSpace<'a> {
    m: &'a SubMesh,
}

impl FluidSpace<'_> {
    fn dim(&self) -> usize {
        2 * (self.m.n_nodes() + self.m.n_triangles())
    }

    /// Global MINI basis function `i` on triangle `t` at `p`.
    fn eval(&self, i: usize, t: usize, p: Point) -> VecEval {
        let (n, nt) = (self.m.n_nodes(), self.m.n_triangles());
        let c = i / (n + nt);
        let r = i % (n + nt);
        let x = self.m.triangle_vertices(t);
        let tri = self.m.triangles()[t];
        let l = bary(&x, p);
        let g = bary_grads(&x);
        let (val, grad) = if r < n {
            match tri.iter().position(|&v| v == r) {
                Some(k) => (l[k], g[k]),
                None => (0.0, [0.0; 2]),
            }
        } else if r - n == t {
            let v = 27.0 * l[0] * l[1] * l[2];
            let gr = [
                27.0 * (g[0][0] * l[1] * l[2] + l[0] * g[1][0] * l[2] + l[0] * l[1] * g[2][0]),
                27.0 * (g[0][1] * l[1] * l[2] + l[0] * g[1][1] * l[2] + l[0] * l[1] * g[2][1]),
            ];
            (v, gr)
        } else {
            (0.0, [0.0; 2])
        };
        let mut u = [0.0; 2];
        let mut gg = [[0.0; 2]; 2];
        u[c] = val;
        gg[c] = grad;
        (u, gg)
    }

    fn field(&self, coeffs: &[f64], t: usize, p: Point) -> VecEval {
        let mut u = [0.0; 2];
        let mut g = [[0.0; 2]; 2];
        for (i, a) in coeffs.iter().enumerate() {
            let (v, d) = self.eval(i, t, p);
            for c in 0..2 {
                u[c] += a * v[c];
                for e in 0..2 {
                    g[c][e] += a * d[c][e];
                }
            }
        }
        (u, g)
    }
}

/// Scalar P1 hat of node `v` on triangle `t`.
pub fn hat(m: &SubMesh, v: usize, t: usize, p: Point) -> (f64, [f64; 2]) {
    let x = m.triangle_vertices(t);
    match m.triangles()[t].iter().position(|&w| w == v) {
        Some(k) => (bary(&x, p)[k], bary_grads(&x)[k]),
        None => (0.0, [0.0; 2]),
    }
}

/// Vector P1 displacement basis `i = c n + v`.
pub fn disp(m: &SubMesh, i: usize, t: usize, p: Point) -> VecEval {
    let n = m.n_nodes();
    let (c, v) = (i / n, i % n);
    let (val, g) = hat(m, v, t, p);
    let mut u = [0.0; 2];
    let mut gg = [[0.0; 2]; 2];
    u[c] = val;
    gg[c] = g;
    (u, gg)
}

pub fn disp_field(m: &SubMesh, coeffs: &[f64], t: usize, p: Point) -> VecEval {
    let mut u = [0.0; 2];
    let mut g = [[0.0; 2]; 2];
    for (i, a) in coeffs.iter().enumerate() {
        let (v, d) = disp(m, i, t, p);
        for c in 0..2 {
            u[c] += a * v[c];
            for e in 0..2 {
                g[c][e] += a * d[c][e];
            }
        }
    }
    (u, g)
}

/// Outward unit normal and length of the triangle side `(a, b)` whose
/// opposite vertex is `o`.
pub fn side_normal(a: Point, b: Point, o: Point) -> (Point, f64) {
    let d = sub(b, a);
    let len = d[0].hypot(d[1]);
    let mut n = [d[1] / len, -d[0] / len];
    if dot(n, sub(o, a)) > 0.0 {
        n = [-n[0], -n[1]];
    }
    (n, len)
}

/// RT0 function of global edge `e` on triangle `t`: the field `a + b x`
/// with total flux `+1` through `e`, outward from the first triangle of
/// `e`, and zero flux through the other two sides. Returns `(a0, a1, b)`.
pub fn rt0_coefficients(m: &SubMesh, e: usize, t: usize) -> Option<[f64; 3]> {
    let edges = m.triangle_edges(t);
    let k = edges.iter().position(|&x| x == e)?;
    let x = m.triangle_vertices(t);
    let sign = if m.edge_triangles(e).0 == t { 1.0 } else { -1.0 };
    // flux of (a0, a1, b x) through each side, as a 3x3 system
    let mut a = [[0.0; 4]; 3];
    for side in 0..3 {
        let [nodes_a, nodes_b] = m.edges()[edges[side]];
        let (pa, pb) = (m.nodes()[nodes_a], m.nodes()[nodes_b]);
        let opp = x.iter().copied().find(|q| *q != pa && *q != pb).unwrap();
        let (n, len) = side_normal(pa, pb, opp);
        let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
        a[side] = [n[0] * len, n[1] * len, dot(mid, n) * len, if side == k { sign } else { 0.0 }];
    }
    // Gaussian elimination with partial pivoting
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for row in 0..3 {
            if row != col {
                let f = a[row][col] / a[col][col];
                for c in col..4 {
                    a[row][c] -= f * a[col][c];
                }
            }
        }
    }
    Some([a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]])
}

pub fn rt0(m: &SubMesh, e: usize, t: usize, p: Point) -> ([f64; 2], f64) {
    match rt0_coefficients(m, e, t) {
        Some([a0, a1, b]) => ([a0 + b * p[0], a1 + b * p[1]], 2.0 * b),
        None => ([0.0; 2], 0.0),
    }
}

pub fn rt0_field(m: &SubMesh, coeffs: &[f64], t: usize, p: Point) -> [f64; 2] {
    let mut u = [0.0; 2];
    for (e, a) in coeffs.iter().enumerate() {
        let (v, _) = rt0(m, e, t, p);
        u[0] += a * v[0];
        u[1] += a * v[1];
    }
    u
}

pub fn sym(g: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let o = 0.5 * (g[0][1] + g[1][0]);
    [[g[0][0], o], [o, g[1][1]]]
}

pub fn ddot(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

pub fn frob(a: [[f64; 2]; 2]) -> f64 {
    ddot(a, a).sqrt()
}

pub fn div(g: [[f64; 2]; 2]) -> f64 {
    g[0][0] + g[1][1]
}

pub fn cross_law(m: &ViscosityModel, s: f64) -> f64 {
    m.nu_inf + (m.nu0 - m.nu_inf) / (1.0 + m.k * s.powf(2.0 - m.r))
}

pub fn law(m: &ViscosityModel, s: f64) -> f64 {
    if m.is_newtonian() {
        m.nu0
    } else {
        cross_law(m, s)
    }
}

// ------------------------------------------------------------------ oracle

pub struct Oracle {
    matrix: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

pub fn oracle(d: &Discretization, cfg: &ProblemConfig, prev: &SolutionState, lag: &SolutionState, tau: f64, t_new: f64) -> Oracle {
    let (fm, pm) = (&d.fluid, &d.porous);
    let fs = FluidSpace { m: fm };
    let l = &d.layout;
    let off = |b: Block| l.full_offsets[b as usize];
    let n = l.n_full();
    let mut a = vec![vec![0.0; n]; n];
    let mut rhs = vec![0.0; n];
    let nonlinear_volume = !cfg.fluid_viscosity.is_newtonian();
    let (nuf, npf) = (fs.dim(), fm.n_nodes());
    let (nup, npp, neta) = (pm.n_edges(), pm.n_triangles(), 2 * pm.n_nodes());

    // Stokes volume terms
    for t in 0..fm.n_triangles() {
        let x = fm.triangle_vertices(t);
        let exact = duffy_rule(&x, 6);
        let visc = if nonlinear_volume { library_rule(&x) } else { exact.clone() };
        for &(p, w) in &visc {
            let (_, gl) = fs.field(&lag.uf, t, p);
            let nu = law(&cfg.fluid_viscosity, frob(sym(gl)));
            for i in 0..nuf {
                let (_, gi) = fs.eval(i, t, p);
                for j in 0..nuf {
                    let (_, gj) = fs.eval(j, t, p);
                    a[off(Block::Uf) + i][off(Block::Uf) + j] += w * 2.0 * nu * ddot(sym(gj), sym(gi));
                }
            }
        }
        for &(p, w) in &exact {
            for i in 0..nuf {
                let (vi, gi) = fs.eval(i, t, p);
                for k in 0..npf {
                    let (q, _) = hat(fm, k, t, p);
                    a[off(Block::Uf) + i][off(Block::Pf) + k] -= w * q * div(gi);
                    a[off(Block::Pf) + k][off(Block::Uf) + i] -= w * q * div(gi);
                }
                if let Some(f) = &cfg.f_f {
                    rhs[off(Block::Uf) + i] += w * dot(f(p, t_new), vi);
                }
            }
            if let Some(q) = &cfg.q_f {
                for k in 0..npf {
                    rhs[off(Block::Pf) + k] -= w * q(p, t_new) * hat(fm, k, t, p).0;
                }
            }
        }
    }
    // inlet traction
    for (b, be) in fm.boundary_edges().iter().enumerate() {
        if be.label != BoundaryLabel::InletF {
            continue;
        }
        let (pa, pb) = (fm.nodes()[be.nodes[0]], fm.nodes()[be.nodes[1]]);
        let t = fm.boundary_edge_triangle(b);
        let x = fm.triangle_vertices(t);
        let opp = x.iter().copied().find(|q| *q != pa && *q != pb).unwrap();
        let (nrm, _) = side_normal(pa, pb, opp);
        for (p, w) in line_rule(pa, pb) {
            for i in 0..nuf {
                rhs[off(Block::Uf) + i] -= w * cfg.p_in * dot(fs.eval(i, t, p).0, nrm);
            }
        }
    }

    // Darcy and Biot volume terms
    let kinv = [1.0 / cfg.kappa[0], 1.0 / cfg.kappa[1]];
    for t in 0..pm.n_triangles() {
        let x = pm.triangle_vertices(t);
        let exact = duffy_rule(&x, 6);
        let visc = if cfg.darcy_viscosity.is_newtonian() { exact.clone() } else { library_rule(&x) };
        for &(p, w) in &visc {
            let u = rt0_field(pm, &lag.up, t, p);
            let nu = law(&cfg.darcy_viscosity, u[0].hypot(u[1]));
            for i in 0..nup {
                let (vi, _) = rt0(pm, i, t, p);
                for j in 0..nup {
                    let (vj, _) = rt0(pm, j, t, p);
                    a[off(Block::Up) + i][off(Block::Up) + j] +=
                        w * nu * (kinv[0] * vi[0] * vj[0] + kinv[1] * vi[1] * vj[1]);
                }
            }
        }
        for &(p, w) in &exact {
            let chi = |k: usize| if k == t { 1.0 } else { 0.0 };
            for k in 0..npp {
                for i in 0..nup {
                    let (_, dv) = rt0(pm, i, t, p);
                    a[off(Block::Up) + i][off(Block::Pp) + k] -= w * chi(k) * dv;
                    a[off(Block::Pp) + k][off(Block::Up) + i] -= w * chi(k) * dv;
                }
                for j in 0..npp {
                    a[off(Block::Pp) + k][off(Block::Pp) + j] -= cfg.s0 / tau * w * chi(k) * chi(j);
                }
                for m in 0..neta {
                    let (_, g) = disp(pm, m, t, p);
                    a[off(Block::Pp) + k][off(Block::Eta) + m] -= cfg.alpha_p / tau * w * chi(k) * div(g);
                    a[off(Block::Eta) + m][off(Block::Pp) + k] -= cfg.alpha_p / tau * w * chi(k) * div(g);
                }
                let (_, g_old) = disp_field(pm, &prev.eta, t, p);
                let mut r = -cfg.s0 / tau * prev.pp[t] - cfg.alpha_p / tau * div(g_old);
                if let Some(q) = &cfg.q_p {
                    r -= q(p, t_new);
                }
                rhs[off(Block::Pp) + k] += w * chi(k) * r;
            }
            for i in 0..neta {
                let (vi, gi) = disp(pm, i, t, p);
                for j in 0..neta {
                    let (_, gj) = disp(pm, j, t, p);
                    let e = 2.0 * cfg.mu_p * ddot(sym(gj), sym(gi)) + cfg.lambda_p * div(gj) * div(gi);
                    a[off(Block::Eta) + i][off(Block::Eta) + j] += w * e / tau;
                }
                if let Some(f) = &cfg.f_p {
                    rhs[off(Block::Eta) + i] += w * dot(f(p, t_new), vi) / tau;
                }
            }
        }
    }
    // outlet pressure
    for (b, be) in pm.boundary_edges().iter().enumerate() {
        if be.label != BoundaryLabel::OutletP {
            continue;
        }
        let (pa, pb) = (pm.nodes()[be.nodes[0]], pm.nodes()[be.nodes[1]]);
        let t = pm.boundary_edge_triangle(b);
        let x = pm.triangle_vertices(t);
        let opp = x.iter().copied().find(|q| *q != pa && *q != pb).unwrap();
        let (nrm, _) = side_normal(pa, pb, opp);
        for (p, w) in line_rule(pa, pb) {
            for i in 0..nup {
                rhs[off(Block::Up) + i] -= w * cfg.p_out * dot(rt0(pm, i, t, p).0, nrm);
            }
        }
    }

    // interface: normal fluxes and BJS slip
    for seg in &d.interface.segments {
        let (tf, tp) = (seg.fluid_triangle, seg.porous_triangle);
        // normals from the geometry of the porous triangle
        let xp = pm.triangle_vertices(tp);
        let opp = xp.iter().copied().find(|q| *q != seg.a && *q != seg.b).unwrap();
        let (n_p, _) = side_normal(seg.a, seg.b, opp);
        let n_f = [-n_p[0], -n_p[1]];
        let tan = [-n_p[1], n_p[0]];
        let kt = cfg.kappa[0] * tan[0] * tan[0] + cfg.kappa[1] * tan[1] * tan[1];
        let lam = off(Block::Lam) + seg.multiplier;
        for (p, w) in line_rule(seg.a, seg.b) {
            let nu_i = match cfg.bjs_nonlinearity {
                BjsNonlinearity::Constant => cfg.interface_viscosity.nu0,
                BjsNonlinearity::Frozen => {
                    let (u, _) = fs.field(&lag.uf, tf, p);
                    let (el, _) = disp_field(pm, &lag.eta, tp, p);
                    let (eo, _) = disp_field(pm, &prev.eta, tp, p);
                    let s = (u[0] - (el[0] - eo[0]) / tau) * tan[0] + (u[1] - (el[1] - eo[1]) / tau) * tan[1];
                    law(&cfg.interface_viscosity, s.abs())
                }
            };
            let c = nu_i * cfg.alpha_bjs / kt.sqrt();
            let (eo, _) = disp_field(pm, &prev.eta, tp, p);
            for i in 0..nuf {
                let (vi, _) = fs.eval(i, tf, p);
                a[lam][off(Block::Uf) + i] += w * dot(vi, n_f);
                a[off(Block::Uf) + i][lam] += w * dot(vi, n_f);
                for j in 0..nuf {
                    let (vj, _) = fs.eval(j, tf, p);
                    a[off(Block::Uf) + i][off(Block::Uf) + j] += w * c * dot(vi, tan) * dot(vj, tan);
                }
                for m in 0..neta {
                    let (xm, _) = disp(pm, m, tp, p);
                    let v = w * c * dot(vi, tan) * dot(xm, tan) / tau;
                    a[off(Block::Uf) + i][off(Block::Eta) + m] -= v;
                    a[off(Block::Eta) + m][off(Block::Uf) + i] -= v;
                }
                rhs[off(Block::Uf) + i] -= w * c * dot(vi, tan) * dot(eo, tan) / tau;
            }
            for i in 0..nup {
                let (vi, _) = rt0(pm, i, tp, p);
                a[lam][off(Block::Up) + i] += w * dot(vi, n_p);
                a[off(Block::Up) + i][lam] += w * dot(vi, n_p);
            }
            for m in 0..neta {
                let (xm, _) = disp(pm, m, tp, p);
                a[lam][off(Block::Eta) + m] += w * dot(xm, n_p) / tau;
                a[off(Block::Eta) + m][lam] += w * dot(xm, n_p) / tau;
                for k in 0..neta {
                    let (xk, _) = disp(pm, k, tp, p);
                    a[off(Block::Eta) + m][off(Block::Eta) + k] += w * c * dot(xm, tan) * dot(xk, tan) / (tau * tau);
                }
                rhs[off(Block::Eta) + m] += w * c * dot(xm, tan) * dot(eo, tan) / (tau * tau);
            }
            rhs[lam] += w * dot(eo, n_p) / tau;
        }
    }
    Oracle { matrix: a, rhs }
}

pub fn random_state(d: &Discretization, rng: &mut ChaCha8Rng, scale: f64, time: f64) -> SolutionState {
    let mut s = SolutionState::zeros(d, time);
    for b in Block::ALL {
        for v in s.block_mut(b).iter_mut() {
            *v = scale * rng.random_range(-1.0..1.0);
        }
    }
    s
}

pub fn configured(nonlinear: bool) -> ProblemConfig {
    let mut cfg = ProblemConfig::example1();
    cfg.lambda_p = 1.3;
    cfg.mu_p = 0.6;
    cfg.s0 = 0.7;
    cfg.alpha_p = 0.9;
    cfg.alpha_bjs = 0.8;
    cfg.kappa = [2.0, 0.5];
    cfg.p_in = 1.5;
    cfg.p_out = 0.4;
    cfg.f_f = Some(Arc::new(|x, t| [1.0 + x[0] - 0.5 * x[1] * t, 0.3 * x[0] * x[1]]));
    cfg.q_f = Some(Arc::new(|x, _| 0.2 - x[1]));
    cfg.f_p = Some(Arc::new(|x, _| [x[1], -0.4 + x[0]]));
    cfg.q_p = Some(Arc::new(|x, t| x[0] * t));
    if nonlinear {
        cfg.fluid_viscosity = ViscosityModel::cross(10.0, 1.0, 1.0, 1.35);
        cfg.darcy_viscosity = ViscosityModel::cross(4.0, 0.5, 2.0, 1.5);
        cfg.interface_viscosity = ViscosityModel::cross(3.0, 0.2, 1.0, 1.2);
        cfg.bjs_nonlinearity = BjsNonlinearity::Frozen;
    } else {
        cfg.fluid_viscosity = ViscosityModel::newtonian(1.7);
        cfg.darcy_viscosity = ViscosityModel::newtonian(0.6);
        cfg.interface_viscosity = ViscosityModel::newtonian(2.3);
    }
    cfg
}

pub fn dense(t: &fpsi::sparse::TripletList) -> Vec<Vec<f64>> {
    let (r, c) = t.shape();
    let mut m = vec![vec![0.0; c]; r];
    for &(i, j, v) in t.entries() {
        m[i][j] += v;
    }
    m
}

pub fn max_abs(m: &[Vec<f64>]) -> f64 {
    m.iter().flatten().fold(0.0, |a, v| a.max(v.abs()))
}

pub fn compare(nonlinear: bool) -> Result<(), String> {
    let d = micro_discretization();
    assert_eq!(d.fluid.n_triangles() + d.porous.n_triangles(), 4);
    assert_eq!(d.interface.segments.len(), 1);
    let cfg = configured(nonlinear);
    let tau = 0.05;
    let t_new = 0.3;
    let mut rng = ChaCha8Rng::seed_from_u64(if nonlinear { 11 } else { 7 });
    let prev = random_state(&d, &mut rng, 1.0, t_new - tau);
    let lag = random_state(&d, &mut rng, 2.0, t_new);
    let o = oracle(&d, &cfg, &prev, &lag, tau, t_new);

    let mut asm = SystemAssembler::new(&d, &cfg, tau);
    let (full, full_rhs) = asm.assemble_full(&prev, &lag, t_new);
    let got = dense(&full);
    let scale = max_abs(&o.matrix);
    for i in 0..got.len() {
        for j in 0..got.len() {
            let diff = (got[i][j] - o.matrix[i][j]).abs();
            if !(diff <= 1e-12 * scale) {
                return Err(format!("entry ({i},{j}): {} vs oracle {}", got[i][j], o.matrix[i][j]));
            }
        }
    }
    let rscale = o.rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for i in 0..o.rhs.len() {
        if !((full_rhs[i] - o.rhs[i]).abs() <= 1e-12 * rscale) {
            return Err(format!("rhs {i}: {} vs {}", full_rhs[i], o.rhs[i]));
        }
    }

    // elimination of the essential dofs
    let l = &d.layout;
    let sys = asm.assemble(&prev, &lag, t_new).clone();
    let red = sys.matrix.to_dense();
    for (i, fi) in l.free_index.iter().enumerate() {
        let Some(ri) = fi else { continue };
        let mut r = o.rhs[i];
        for (j, fj) in l.free_index.iter().enumerate() {
            match fj {
                Some(rj) => {
                    if !((red[*ri][*rj] - o.matrix[i][j]).abs() <= 1e-12 * scale) {
                        return Err(format!("reduced entry ({ri},{rj}) differs from full ({i},{j})"));
                    }
                }
                None => r -= o.matrix[i][j] * l.prescribed[j],
            }
        }
        if !((sys.rhs[*ri] - r).abs() <= 1e-12 * rscale) {
            return Err(format!("reduced rhs {ri}: {} vs {r}", sys.rhs[*ri]));
        }
    }
    Ok(())
}

