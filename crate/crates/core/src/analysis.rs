//! Norms, errors against a finer reference solution, observed convergence
//! orders and the discrete energy.

use thiserror::Error;

use crate::elements::{
    eval_mini_field, eval_rt0_field, eval_scalar_p1_field, eval_vector_p1_field, quadrature_rule, QuadratureRule,
    TriangleGeometry,
};
use crate::forms::elasticity_triplets;
use crate::mesh::{Point, SubMesh};
use crate::problem::{Discretization, ProblemConfig, SolutionState};
use crate::sparse::CsrMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported mesh pair: {0}")]
    UnsupportedPair(String),
    #[error("unsupported norm: {0}")]
    Unsupported(String),
}

/// Field and norm measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantity {
    /// Stokes velocity in `H^1` (`W^{1,r}` with `r = 2`).
    UfH1,
    /// Darcy velocity in `L^2`.
    UpL2,
    /// Stokes pressure in `L^2`.
    PfL2,
    /// Darcy pressure in `L^2`.
    PpL2,
    /// Displacement in `H^1`.
    EtaH1,
    /// `alpha_BJS || (u_f - d_t eta) . t ||_{L^2(Gamma)}`.
    BjsSeminorm,
}

impl Quantity {
    /// Index into the five volume quantities, `None` for the interface one.
    fn slot(self) -> Option<usize> {
        match self {
            Quantity::UfH1 => Some(0),
            Quantity::UpL2 => Some(1),
            Quantity::PfL2 => Some(2),
            Quantity::PpL2 => Some(3),
            Quantity::EtaH1 => Some(4),
            Quantity::BjsSeminorm => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Quantity::UfH1 => "uf_H1",
            Quantity::UpL2 => "up_L2",
            Quantity::PfL2 => "pf_L2",
            Quantity::PpL2 => "pp_L2",
            Quantity::EtaH1 => "eta_H1",
            Quantity::BjsSeminorm => "bjs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimeAggregation {
    /// `sqrt(tau sum_n ||.||^2)`.
    L2,
    /// `max_n ||.||`.
    Linf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSpec {
    pub quantity: Quantity,
    /// Lebesgue exponent; only 2 is implemented.
    pub r: f64,
    pub aggregation: TimeAggregation,
}

impl NormSpec {
    pub const fn new(quantity: Quantity, aggregation: TimeAggregation) -> Self {
        NormSpec { quantity, r: 2.0, aggregation }
    }

    pub fn label(&self) -> String {
        let agg = match self.aggregation {
            TimeAggregation::L2 => "l2",
            TimeAggregation::Linf => "linf",
        };
        format!("{}_{}", self.quantity.name(), agg)
    }

    fn check(&self) -> Result<(), AnalysisError> {
        if self.r != 2.0 {
            return Err(AnalysisError::Unsupported(format!("exponent r = {} (only r = 2)", self.r)));
        }
        Ok(())
    }
}

/// The six error measures of the convergence table, in column order.
pub const TABLE_SPECS: [NormSpec; 6] = [
    NormSpec::new(Quantity::UfH1, TimeAggregation::L2),
    NormSpec::new(Quantity::UpL2, TimeAggregation::L2),
    NormSpec::new(Quantity::PfL2, TimeAggregation::L2),
    NormSpec::new(Quantity::PpL2, TimeAggregation::L2),
    NormSpec::new(Quantity::PpL2, TimeAggregation::Linf),
    NormSpec::new(Quantity::EtaH1, TimeAggregation::Linf),
];

fn norm_rule() -> QuadratureRule {
    quadrature_rule(6).expect("degree 6 rule")
}

#[derive(Debug, Clone, Copy, Default)]
struct FluidSample {
    u: [f64; 2],
    grad: [[f64; 2]; 2],
    p: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct PorousSample {
    u: [f64; 2],
    p: f64,
    eta: [f64; 2],
    grad: [[f64; 2]; 2],
}

fn fluid_sample(d: &Discretization, s: &SolutionState, t: usize, x: Point) -> FluidSample {
    let g = &d.fluid_geometry[t];
    let b = g.barycentric(x);
    let (u, grad) = eval_mini_field(&d.uf, &s.uf, t, g, b);
    FluidSample { u, grad, p: eval_scalar_p1_field(&d.pf, &s.pf, t, b) }
}

fn porous_sample(d: &Discretization, s: &SolutionState, t: usize, x: Point) -> PorousSample {
    let g = &d.porous_geometry[t];
    let b = g.barycentric(x);
    let (eta, grad) = eval_vector_p1_field(&d.eta, &s.eta, t, g, b);
    PorousSample { u: eval_rt0_field(&d.up, &s.up, t, g, x), p: s.pp[t], eta, grad }
}

fn sq2(v: [f64; 2]) -> f64 {
    v[0] * v[0] + v[1] * v[1]
}

fn sq22(g: [[f64; 2]; 2]) -> f64 {
    sq2(g[0]) + sq2(g[1])
}

fn fluid_terms(a: FluidSample) -> [f64; 2] {
    [sq2(a.u) + sq22(a.grad), a.p * a.p]
}

fn porous_terms(a: PorousSample) -> [f64; 3] {
    [sq2(a.u), a.p * a.p, sq2(a.eta) + sq22(a.grad)]
}

fn fluid_diff(a: FluidSample, b: FluidSample) -> FluidSample {
    FluidSample {
        u: [a.u[0] - b.u[0], a.u[1] - b.u[1]],
        grad: [
            [a.grad[0][0] - b.grad[0][0], a.grad[0][1] - b.grad[0][1]],
            [a.grad[1][0] - b.grad[1][0], a.grad[1][1] - b.grad[1][1]],
        ],
        p: a.p - b.p,
    }
}

fn porous_diff(a: PorousSample, b: PorousSample) -> PorousSample {
    PorousSample {
        u: [a.u[0] - b.u[0], a.u[1] - b.u[1]],
        p: a.p - b.p,
        eta: [a.eta[0] - b.eta[0], a.eta[1] - b.eta[1]],
        grad: [
            [a.grad[0][0] - b.grad[0][0], a.grad[0][1] - b.grad[0][1]],
            [a.grad[1][0] - b.grad[1][0], a.grad[1][1] - b.grad[1][1]],
        ],
    }
}

/// Squared spatial norms `[uf_H1, up_L2, pf_L2, pp_L2, eta_H1]`.
pub type SquaredNorms = [f64; 5];

fn add_fluid(acc: &mut SquaredNorms, w: f64, t: [f64; 2]) {
    acc[0] += w * t[0];
    acc[2] += w * t[1];
}

fn add_porous(acc: &mut SquaredNorms, w: f64, t: [f64; 3]) {
    acc[1] += w * t[0];
    acc[3] += w * t[1];
    acc[4] += w * t[2];
}

/// Squared volume norms of one state.
pub fn squared_norms(d: &Discretization, s: &SolutionState) -> SquaredNorms {
    let rule = norm_rule();
    let mut acc = [0.0; 5];
    for (t, g) in d.fluid_geometry.iter().enumerate() {
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            add_fluid(&mut acc, 2.0 * w * g.area, fluid_terms(fluid_sample(d, s, t, g.point(*b))));
        }
    }
    for (t, g) in d.porous_geometry.iter().enumerate() {
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            add_porous(&mut acc, 2.0 * w * g.area, porous_terms(porous_sample(d, s, t, g.point(*b))));
        }
    }
    acc
}

/// `alpha || (u_f - (eta - eta_prev) / tau) . t ||_{L^2(Gamma)}`.
pub fn bjs_seminorm(d: &Discretization, s: &SolutionState, prev: &SolutionState, tau: f64, alpha: f64) -> f64 {
    let mut acc = 0.0;
    for seg in &d.interface.segments {
        for (x, w) in seg.gauss_points() {
            let f = fluid_sample(d, s, seg.fluid_triangle, x);
            let a = porous_sample(d, s, seg.porous_triangle, x);
            let b = porous_sample(d, prev, seg.porous_triangle, x);
            let v = [f.u[0] - (a.eta[0] - b.eta[0]) / tau, f.u[1] - (a.eta[1] - b.eta[1]) / tau];
            let vt = v[0] * seg.tangent[0] + v[1] * seg.tangent[1];
            acc += w * vt * vt;
        }
    }
    alpha * acc.sqrt()
}

/// Aggregates per-step spatial norms (not squared) in time.
pub fn aggregate(values: &[f64], tau: f64, agg: TimeAggregation) -> f64 {
    match agg {
        TimeAggregation::L2 => (tau * values.iter().map(|v| v * v).sum::<f64>()).sqrt(),
        TimeAggregation::Linf => values.iter().fold(0.0, |m, v| m.max(v.abs())),
    }
}

/// Norm of a state sequence (time levels `1..=N`). For the interface
/// seminorm `states[0]` only serves as the previous level of `states[1]`.
pub fn compute_norm(
    d: &Discretization,
    states: &[SolutionState],
    spec: &NormSpec,
    tau: f64,
    alpha_bjs: f64,
) -> Result<f64, AnalysisError> {
    spec.check()?;
    let values: Vec<f64> = match spec.quantity.slot() {
        Some(k) => states.iter().map(|s| squared_norms(d, s)[k].sqrt()).collect(),
        None => states.windows(2).map(|w| bjs_seminorm(d, &w[1], &w[0], tau, alpha_bjs)).collect(),
    };
    Ok(aggregate(&values, tau, spec.aggregation))
}

/// Locates the triangles of a fine structured mesh inside a nested coarse
/// one and evaluates differences at the fine quadrature points.
#[derive(Debug, Clone)]
pub struct NestedPair<'a> {
    pub coarse: &'a Discretization,
    pub fine: &'a Discretization,
    fluid_parent: Vec<usize>,
    porous_parent: Vec<usize>,
}

fn parents(coarse: &SubMesh, fine: &SubMesh, cg: &[TriangleGeometry], fg: &[TriangleGeometry]) -> Result<Vec<usize>, AnalysisError> {
    let (Some(c), Some(f)) = (coarse.grid(), fine.grid()) else {
        return Err(AnalysisError::UnsupportedPair("both meshes must be structured".into()));
    };
    if c.rect != f.rect {
        return Err(AnalysisError::UnsupportedPair("meshes cover different rectangles".into()));
    }
    if f.nx % c.nx != 0 || f.ny % c.ny != 0 {
        return Err(AnalysisError::UnsupportedPair(format!(
            "{}x{} grid does not refine {}x{}",
            f.nx, f.ny, c.nx, c.ny
        )));
    }
    let tol = 1e-9;
    fg.iter()
        .map(|g| {
            let p = c.locate(g.centroid());
            let ok = g.vertices.iter().all(|v| cg[p].barycentric(*v).iter().all(|&l| l >= -tol));
            if ok {
                Ok(p)
            } else {
                Err(AnalysisError::UnsupportedPair("fine triangle crosses a coarse edge".into()))
            }
        })
        .collect()
}

impl<'a> NestedPair<'a> {
    pub fn new(coarse: &'a Discretization, fine: &'a Discretization) -> Result<Self, AnalysisError> {
        let fluid_parent = parents(&coarse.fluid, &fine.fluid, &coarse.fluid_geometry, &fine.fluid_geometry)?;
        let porous_parent = parents(&coarse.porous, &fine.porous, &coarse.porous_geometry, &fine.porous_geometry)?;
        Ok(NestedPair { coarse, fine, fluid_parent, porous_parent })
    }

    /// Squared norms of `reference - coarse` and of `reference`.
    pub fn squared_differences(&self, coarse: &SolutionState, reference: &SolutionState) -> (SquaredNorms, SquaredNorms) {
        let rule = norm_rule();
        let (mut diff, mut refn) = ([0.0; 5], [0.0; 5]);
        for (t, g) in self.fine.fluid_geometry.iter().enumerate() {
            let tc = self.fluid_parent[t];
            for (b, w) in rule.points.iter().zip(&rule.weights) {
                let x = g.point(*b);
                let r = fluid_sample(self.fine, reference, t, x);
                let c = fluid_sample(self.coarse, coarse, tc, x);
                let pw = 2.0 * w * g.area;
                add_fluid(&mut diff, pw, fluid_terms(fluid_diff(r, c)));
                add_fluid(&mut refn, pw, fluid_terms(r));
            }
        }
        for (t, g) in self.fine.porous_geometry.iter().enumerate() {
            let tc = self.porous_parent[t];
            for (b, w) in rule.points.iter().zip(&rule.weights) {
                let x = g.point(*b);
                let r = porous_sample(self.fine, reference, t, x);
                let c = porous_sample(self.coarse, coarse, tc, x);
                let pw = 2.0 * w * g.area;
                add_porous(&mut diff, pw, porous_terms(porous_diff(r, c)));
                add_porous(&mut refn, pw, porous_terms(r));
            }
        }
        (diff, refn)
    }
}

/// Streaming relative errors for several norm specs: feed one time level
/// at a time, so the reference sequence is never stored.
#[derive(Debug, Clone)]
pub struct ErrorAccumulator {
    specs: Vec<NormSpec>,
    diff: Vec<f64>,
    reference: Vec<f64>,
    steps: usize,
}

impl ErrorAccumulator {
    pub fn new(specs: &[NormSpec]) -> Result<Self, AnalysisError> {
        for s in specs {
            s.check()?;
            if s.quantity.slot().is_none() {
                return Err(AnalysisError::Unsupported("interface seminorm against a reference".into()));
            }
        }
        Ok(ErrorAccumulator {
            specs: specs.to_vec(),
            diff: vec![0.0; specs.len()],
            reference: vec![0.0; specs.len()],
            steps: 0,
        })
    }

    /// Adds one time level given squared spatial norms.
    pub fn push(&mut self, diff: &SquaredNorms, reference: &SquaredNorms) {
        for (i, s) in self.specs.iter().enumerate() {
            let k = s.quantity.slot().expect("volume quantity");
            match s.aggregation {
                TimeAggregation::L2 => {
                    self.diff[i] += diff[k];
                    self.reference[i] += reference[k];
                }
                TimeAggregation::Linf => {
                    self.diff[i] = self.diff[i].max(diff[k].sqrt());
                    self.reference[i] = self.reference[i].max(reference[k].sqrt());
                }
            }
        }
        self.steps += 1;
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Relative errors in `TABLE_SPECS` order. A zero reference norm gives 0 when
    /// the difference also vanishes and infinity otherwise.
    pub fn finish(&self) -> Vec<f64> {
        self.specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let (d, r) = match s.aggregation {
                    TimeAggregation::L2 => (self.diff[i].sqrt(), self.reference[i].sqrt()),
                    TimeAggregation::Linf => (self.diff[i], self.reference[i]),
                };
                if r > 0.0 {
                    d / r
                } else if d == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .collect()
    }
}

/// Relative error of a coarse sequence against a nested reference
/// sequence with aligned time levels.
pub fn relative_error(
    coarse_disc: &Discretization,
    coarse: &[SolutionState],
    fine_disc: &Discretization,
    reference: &[SolutionState],
    spec: &NormSpec,
) -> Result<f64, AnalysisError> {
    if coarse.len() != reference.len() {
        return Err(AnalysisError::InvalidArgument(format!(
            "{} coarse levels vs {} reference levels",
            coarse.len(),
            reference.len()
        )));
    }
    let pair = NestedPair::new(coarse_disc, fine_disc)?;
    let mut acc = ErrorAccumulator::new(std::slice::from_ref(spec))?;
    for (c, r) in coarse.iter().zip(reference) {
        let (d, n) = pair.squared_differences(c, r);
        acc.push(&d, &n);
    }
    Ok(acc.finish()[0])
}

/// `order_k = log2(e_{k-1} / e_k)` for errors listed by halving `h`.
pub fn convergence_orders(errors: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    if errors.len() < 2 {
        return Err(AnalysisError::InvalidArgument("need at least two errors".into()));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(AnalysisError::InvalidArgument(format!("errors must be positive and finite, got {e}")));
    }
    Ok(errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect())
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    /// Relative errors, one per spec.
    pub errors: Vec<f64>,
    /// `log(e_coarser / e) / log(h_coarser / h)`; `None` on the first row.
    pub orders: Vec<Option<f64>>,
}

/// Builds table rows from `(h, errors)` pairs ordered by decreasing `h`.
/// Orders use the actual mesh ratio, which is 2 for halving sequences.
pub fn convergence_rows(levels: &[(f64, Vec<f64>)]) -> Vec<ConvergenceRow> {
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels.len());
    for (i, (h, errs)) in levels.iter().enumerate() {
        let orders = match i {
            0 => vec![None; errs.len()],
            _ => {
                let (hp, ep) = &levels[i - 1];
                errs.iter()
                    .zip(ep)
                    .map(|(e, p)| {
                        if *e > 0.0 && *p > 0.0 {
                            Some((p / e).ln() / (hp / h).ln())
                        } else {
                            None
                        }
                    })
                    .collect()
            }
        };
        rows.push(ConvergenceRow { h: *h, errors: errs.clone(), orders });
    }
    rows
}

/// `E(p, eta) = s0 ||p||^2 + a_pe(eta, eta)`.
#[derive(Debug, Clone)]
pub struct EnergyFunctional {
    elasticity: CsrMatrix,
    areas: Vec<f64>,
    s0: f64,
}

impl EnergyFunctional {
    pub fn new(d: &Discretization, cfg: &ProblemConfig) -> Self {
        EnergyFunctional {
            elasticity: elasticity_triplets(d, cfg).into_csr(),
            areas: d.porous_geometry.iter().map(|g| g.area).collect(),
            s0: cfg.s0,
        }
    }

    pub fn evaluate(&self, s: &SolutionState) -> f64 {
        let mass: f64 = self.areas.iter().zip(&s.pp).map(|(a, p)| a * p * p).sum();
        let ae: f64 = self.elasticity.mul_vec(&s.eta).iter().zip(&s.eta).map(|(a, b)| a * b).sum();
        self.s0 * mass + ae
    }
}

/// One-off energy evaluation.
pub fn discrete_energy(d: &Discretization, cfg: &ProblemConfig, s: &SolutionState) -> f64 {
    EnergyFunctional::new(d, cfg).evaluate(s)
}
