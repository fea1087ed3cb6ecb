//! Sparse direct solves, the Picard loop of one time step and the Backward
//! Euler time loop.

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use thiserror::Error;

use crate::analysis::EnergyFunctional;
use crate::forms::{CoupledSystem, SystemAssembler};
use crate::problem::{initial_state, Block, Discretization, ProblemConfig, SolutionState};
use crate::sparse::{norm2, CsrMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("singular matrix{}", .pivot.map(|p| format!(" at pivot {p}")).unwrap_or_default())]
    Singular { pivot: Option<usize> },
    #[error("matrix is {nrows}x{ncols}, expected square with {expected} rows")]
    Shape { nrows: usize, ncols: usize, expected: usize },
    #[error("Picard iteration did not converge in {iterations} iterations (last increment {last_increment:e})")]
    NotConverged { iterations: usize, last_increment: f64 },
    #[error("Picard iteration diverged at iteration {iteration} (increment {increment:e})")]
    Diverged { iteration: usize, increment: f64 },
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error("time step {step} (t = {time}): {source}")]
    Step {
        step: usize,
        time: f64,
        #[source]
        source: Box<SolverError>,
    },
    #[error("observer failed at step {step}: {message}")]
    Observer { step: usize, message: String },
}

/// Direct LU solver for CSR matrices. The symbolic analysis is kept and
/// reused as long as the sparsity pattern does not change.
#[derive(Default)]
pub struct LinearSolver {
    symbolic: Option<(Vec<usize>, Vec<usize>, SymbolicLu<usize>)>,
    numeric: Option<Lu<usize, f64>>,
    n: usize,
    symbolic_count: usize,
    numeric_count: usize,
    stale_solves: usize,
    stale_krylov: usize,
}

impl std::fmt::Debug for LinearSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearSolver")
            .field("n", &self.n)
            .field("symbolic_count", &self.symbolic_count)
            .field("numeric_count", &self.numeric_count)
            .finish()
    }
}

fn map_lu_error(e: LuError) -> SolverError {
    match e {
        LuError::SymbolicSingular { index } => SolverError::Singular { pivot: Some(index) },
        _ => SolverError::Singular { pivot: None },
    }
}

impl LinearSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of symbolic analyses and numeric factorizations performed.
    pub fn counts(&self) -> (usize, usize) {
        (self.symbolic_count, self.numeric_count)
    }

    /// Factors `a`. The CSR arrays are read as the CSC arrays of `a^T`;
    /// solves then go through the transposed factorization.
    pub fn factor(&mut self, a: &CsrMatrix) -> Result<(), SolverError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(SolverError::Shape { nrows: n, ncols: a.ncols(), expected: n });
        }
        self.numeric = None;
        let sym = SymbolicSparseColMatRef::new_checked(n, n, a.row_ptr(), None, a.col_indices());
        let reuse = matches!(&self.symbolic, Some((rp, ci, _)) if rp == a.row_ptr() && ci == a.col_indices());
        if !reuse {
            let s = SymbolicLu::try_new(sym).map_err(|_| SolverError::Singular { pivot: None })?;
            self.symbolic = Some((a.row_ptr().to_vec(), a.col_indices().to_vec(), s));
            self.symbolic_count += 1;
        }
        let s = self.symbolic.as_ref().map(|(_, _, s)| s.clone()).expect("symbolic factorization");
        let mat = SparseColMatRef::new(sym, a.values());
        let lu = Lu::try_new_with_symbolic(s, mat).map_err(map_lu_error)?;
        self.numeric = Some(lu);
        self.numeric_count += 1;
        self.stale_solves = 0;
        self.stale_krylov = 0;
        self.n = n;
        Ok(())
    }

    /// Solves with the current factorization.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SolverError> {
        let lu = self.numeric.as_ref().ok_or(SolverError::Singular { pivot: None })?;
        if b.len() != self.n {
            return Err(SolverError::Shape { nrows: b.len(), ncols: 1, expected: self.n });
        }
        let mut x = Col::<f64>::from_fn(self.n, |i| b[i]);
        lu.solve_transpose_in_place(x.as_mat_mut());
        let out: Vec<f64> = (0..self.n).map(|i| x[i]).collect();
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(SolverError::Singular { pivot: Some(i) });
        }
        Ok(out)
    }
}

/// Tolerances of [`LinearSolver::solve_reusing`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSettings {
    /// Target `||A x - b|| / ||b||`.
    pub tol: f64,
    /// Krylov iterations allowed with a stale factorization before the
    /// matrix is refactored.
    pub max_krylov: usize,
    /// Refactor once the mean Krylov count per solve since the last
    /// factorization exceeds this (checked after ten solves).
    pub refresh_mean: f64,
}

impl Default for LinearSettings {
    fn default() -> Self {
        LinearSettings { tol: 1e-12, max_krylov: 25, refresh_mean: 4.0 }
    }
}

/// How a linear system was solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearReport {
    pub refactored: bool,
    pub krylov_iterations: usize,
    pub residual: f64,
}

impl LinearSolver {
    /// Solves `a x = b` to `settings.tol`. An existing factorization of a
    /// matrix with the same pattern is first tried as a GMRES
    /// preconditioner; if that does not converge within
    /// `settings.max_krylov` iterations, `a` is refactored and the direct
    /// solution is polished by the same GMRES.
    pub fn solve_reusing(
        &mut self,
        a: &CsrMatrix,
        b: &[f64],
        x0: Option<&[f64]>,
        settings: &LinearSettings,
    ) -> Result<(Vec<f64>, LinearReport), SolverError> {
        let nb = norm2(b);
        let target = settings.tol * nb.max(f64::MIN_POSITIVE);
        let same_pattern =
            matches!(&self.symbolic, Some((rp, ci, _)) if rp == a.row_ptr() && ci == a.col_indices());
        let worn = self.stale_solves >= 10
            && self.stale_krylov as f64 > settings.refresh_mean * self.stale_solves as f64;
        if !worn && self.numeric.is_some() && same_pattern && self.n == a.nrows() {
            let mut x = match x0 {
                Some(x0) => x0.to_vec(),
                None => self.solve(b)?,
            };
            let (ok, its, res) = gmres(a, b, &mut x, |r| self.solve(r), target, settings.max_krylov)?;
            self.stale_solves += 1;
            self.stale_krylov += its;
            if ok {
                return Ok((x, LinearReport { refactored: false, krylov_iterations: its, residual: res / nb.max(f64::MIN_POSITIVE) }));
            }
        }
        self.factor(a)?;
        let mut x = self.solve(b)?;
        let (_, its, res) = gmres(a, b, &mut x, |r| self.solve(r), target, settings.max_krylov)?;
        Ok((x, LinearReport { refactored: true, krylov_iterations: its, residual: res / nb.max(f64::MIN_POSITIVE) }))
    }
}

/// Restarted right-preconditioned GMRES from `x`; stops when the true
/// residual norm is at most `target`. Returns (converged, iterations,
/// final residual norm).
fn gmres(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    precond: impl Fn(&[f64]) -> Result<Vec<f64>, SolverError>,
    target: f64,
    max_iter: usize,
) -> Result<(bool, usize, f64), SolverError> {
    const RESTART: usize = 20;
    let n = b.len();
    let residual = |x: &[f64]| -> Vec<f64> { a.mul_vec(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect() };
    let mut r = residual(x);
    let mut beta = norm2(&r);
    let mut its = 0;
    while beta > target && its < max_iter {
        let m = RESTART.min(max_iter - its);
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m {
            let zk = precond(&v[k])?;
            let mut w = a.mul_vec(&zk);
            z.push(zk);
            for (i, vi) in v.iter().enumerate() {
                let hij: f64 = w.iter().zip(vi).map(|(a, b)| a * b).sum();
                h[i][k] = hij;
                w.iter_mut().zip(vi).for_each(|(wj, vj)| *wj -= hij * vj);
            }
            let hn = norm2(&w);
            h[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            if d == 0.0 {
                break;
            }
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k += 1;
            its += 1;
            if g[k].abs() <= 0.5 * target || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|wi| wi / hn).collect());
        }
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (yi, zi) in y.iter().zip(&z) {
            x.iter_mut().zip(zi).for_each(|(xj, zj)| *xj += yi * zj);
        }
        r = residual(x);
        let new_beta = norm2(&r);
        if k == 0 || !(new_beta < beta) && new_beta > target {
            beta = new_beta;
            break;
        }
        beta = new_beta;
    }
    debug_assert_eq!(r.len(), n);
    Ok((beta <= target, its, beta))
}

/// `||A x - b|| / ||b||`, or `||A x||` when `b = 0`.
pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let r: Vec<f64> = a.mul_vec(x).iter().zip(b).map(|(ax, bi)| ax - bi).collect();
    let nb = norm2(b);
    if nb > 0.0 {
        norm2(&r) / nb
    } else {
        norm2(&r)
    }
}

/// One-shot direct solve of `a x = b`.
pub fn solve_linear(a: &CsrMatrix, b: &[f64]) -> Result<(Vec<f64>, f64), SolverError> {
    let mut s = LinearSolver::new();
    s.factor(a)?;
    let x = s.solve(b)?;
    let res = relative_residual(a, &x, b);
    Ok((x, res))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardSettings {
    pub max_iter: usize,
    pub rel_tol: f64,
    /// Increment growth factor; exceeding it three times in a row is
    /// reported as divergence.
    pub divergence_guard: f64,
    /// Relaxation `x <- omega x_new + (1 - omega) x_lag`, in `(0, 1]`.
    pub damping: f64,
    /// Lower bound of the normalization in the relative increment.
    pub floor: f64,
    pub linear: LinearSettings,
}

impl Default for PicardSettings {
    fn default() -> Self {
        PicardSettings { max_iter: 50, rel_tol: 1e-8, divergence_guard: 2.0, damping: 1.0, floor: 1e-14, linear: LinearSettings::default() }
    }
}

impl PicardSettings {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.max_iter < 1 {
            return Err(SolverError::InvalidSettings("max_iter must be >= 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(SolverError::InvalidSettings("rel_tol must be > 0".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(SolverError::InvalidSettings("damping must lie in (0, 1]".into()));
        }
        if !(self.divergence_guard > 1.0) {
            return Err(SolverError::InvalidSettings("divergence_guard must be > 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSettings {
    pub tau: f64,
    pub t_end: f64,
}

impl TimeSettings {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.tau > 0.0 && self.tau <= self.t_end && self.t_end.is_finite()) {
            return Err(SolverError::InvalidSettings(format!(
                "need 0 < tau <= t_end, got tau = {}, t_end = {}",
                self.tau, self.t_end
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.tau).round() as usize
    }
}

/// Outcome of the Picard loop of one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardOutcome {
    pub iterations: usize,
    /// Relative increments, one per linear solve.
    pub increments: Vec<f64>,
    pub final_increment: f64,
    /// Backward residual of the last linear solve.
    pub linear_residual: f64,
    /// `||r_lambda|| / ||b||` of the interface mass-conservation rows.
    pub interface_residual: f64,
    pub factorizations: usize,
    pub krylov_iterations: usize,
}

fn rel_increment(x: &[f64], x_lag: &[f64], floor: f64) -> f64 {
    let d: f64 = x.iter().zip(x_lag).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    d / norm2(x).max(floor)
}

fn block_residual(sys: &CoupledSystem, x: &[f64], b: Block) -> f64 {
    let r = sys.offsets[b as usize]..sys.offsets[b as usize + 1];
    let mut s = 0.0;
    for i in r {
        let ax: f64 = sys.matrix.row(i).map(|(c, v)| v * x[c]).sum();
        s += (ax - sys.rhs[i]).powi(2);
    }
    s.sqrt() / norm2(&sys.rhs).max(f64::MIN_POSITIVE)
}

/// Picard iteration for the step `prev -> t_new`, warm-started from `prev`.
///
/// When a reassembled system is identical to the previous one, the last
/// solve already is the fixed point: the confirming increment is computed
/// with the cached factorization and does not count as an iteration. A
/// lag-independent problem therefore takes exactly one iteration.
pub fn picard_solve(
    assembler: &mut SystemAssembler<'_>,
    solver: &mut LinearSolver,
    prev: &SolutionState,
    t_new: f64,
    settings: &PicardSettings,
) -> Result<(SolutionState, PicardOutcome), SolverError> {
    settings.validate()?;
    let disc = assembler.discretization();
    let mut lagged = prev.clone();
    lagged.time = t_new;
    let mut x_lag = lagged.to_free(disc);
    let mut increments = Vec::new();
    // values and rhs of the previous linearization
    let mut last: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut growth_run = 0;
    let (mut factorizations, mut krylov_iterations) = (0, 0);
    for k in 1..=settings.max_iter {
        let sys = assembler.assemble(prev, &lagged, t_new);
        if let Some((vals, rhs)) = &last {
            if vals.as_slice() == sys.matrix.values() && *rhs == sys.rhs {
                let (x, rep) = solver.solve_reusing(&sys.matrix, &sys.rhs, Some(&x_lag), &settings.linear)?;
                factorizations += rep.refactored as usize;
                krylov_iterations += rep.krylov_iterations;
                let delta = rel_increment(&x, &x_lag, settings.floor);
                let outcome = PicardOutcome {
                    iterations: k - 1,
                    increments: {
                        let mut v = increments.clone();
                        v.push(delta);
                        v
                    },
                    final_increment: delta,
                    linear_residual: relative_residual(&sys.matrix, &x_lag, &sys.rhs),
                    interface_residual: block_residual(sys, &x_lag, Block::Lam),
                    factorizations,
                    krylov_iterations,
                };
                return Ok((lagged, outcome));
            }
        }
        let (x_new, rep) = solver.solve_reusing(&sys.matrix, &sys.rhs, Some(&x_lag), &settings.linear)?;
        factorizations += rep.refactored as usize;
        krylov_iterations += rep.krylov_iterations;
        let x: Vec<f64> = if settings.damping < 1.0 {
            x_new.iter().zip(&x_lag).map(|(a, b)| settings.damping * a + (1.0 - settings.damping) * b).collect()
        } else {
            x_new
        };
        let delta = rel_increment(&x, &x_lag, settings.floor);
        if let Some(&prev_delta) = increments.last() {
            if delta > settings.divergence_guard * prev_delta {
                growth_run += 1;
            } else {
                growth_run = 0;
            }
        }
        increments.push(delta);
        let state = SolutionState::from_free(disc, &x, t_new);
        if delta < settings.rel_tol {
            let outcome = PicardOutcome {
                iterations: k,
                final_increment: delta,
                linear_residual: relative_residual(&sys.matrix, &x, &sys.rhs),
                interface_residual: block_residual(sys, &x, Block::Lam),
                increments,
                factorizations,
                krylov_iterations,
            };
            return Ok((state, outcome));
        }
        if growth_run >= 3 || !delta.is_finite() {
            return Err(SolverError::Diverged { iteration: k, increment: delta });
        }
        match &mut last {
            Some((vals, rhs)) => {
                vals.copy_from_slice(sys.matrix.values());
                rhs.copy_from_slice(&sys.rhs);
            }
            None => last = Some((sys.matrix.values().to_vec(), sys.rhs.clone())),
        }
        lagged = state;
        x_lag = x;
    }
    Err(SolverError::NotConverged {
        iterations: settings.max_iter,
        last_increment: increments.last().copied().unwrap_or(f64::NAN),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub picard_iterations: usize,
    pub final_increment: f64,
    pub linear_residual: f64,
    pub interface_residual: f64,
    pub energy: f64,
    pub factorizations: usize,
    pub krylov_iterations: usize,
    pub increments: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub steps: Vec<StepRecord>,
}

impl RunTrace {
    pub const CSV_HEADER: &'static str =
        "step,time,picard_iterations,final_increment,linear_residual,interface_residual,energy,factorizations,krylov_iterations";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push_str("\r\n");
        for r in &self.steps {
            s.push_str(&format!(
                "{},{:.12e},{},{:.6e},{:.6e},{:.6e},{:.15e},{},{}\r\n",
                r.step,
                r.time,
                r.picard_iterations,
                r.final_increment,
                r.linear_residual,
                r.interface_residual,
                r.energy,
                r.factorizations,
                r.krylov_iterations
            ));
        }
        s
    }
}

/// Runs `round(t_end / tau)` Backward Euler steps from the initial data of
/// `cfg`. `observer` sees the initial state as step 0 and each new state;
/// returning `Err` stops the run.
pub fn time_loop(
    disc: &Discretization,
    cfg: &ProblemConfig,
    time: &TimeSettings,
    picard: &PicardSettings,
    mut observer: impl FnMut(usize, &SolutionState, Option<&StepRecord>) -> Result<(), String>,
) -> Result<(SolutionState, RunTrace), SolverError> {
    time.validate()?;
    picard.validate()?;
    let energy = EnergyFunctional::new(disc, cfg);
    let mut assembler = SystemAssembler::new(disc, cfg, time.tau);
    let mut solver = LinearSolver::new();
    let mut state = initial_state(disc, cfg);
    observer(0, &state, None).map_err(|message| SolverError::Observer { step: 0, message })?;
    let mut trace = RunTrace::default();
    for n in 1..=time.n_steps() {
        let t_new = n as f64 * time.tau;
        let (next, out) = picard_solve(&mut assembler, &mut solver, &state, t_new, picard).map_err(|e| {
            SolverError::Step { step: n, time: t_new, source: Box::new(e) }
        })?;
        let rec = StepRecord {
            step: n,
            time: t_new,
            picard_iterations: out.iterations,
            final_increment: out.final_increment,
            linear_residual: out.linear_residual,
            interface_residual: out.interface_residual,
            energy: energy.evaluate(&next),
            factorizations: out.factorizations,
            krylov_iterations: out.krylov_iterations,
            increments: out.increments,
        };
        observer(n, &next, Some(&rec)).map_err(|message| SolverError::Observer { step: n, message })?;
        trace.steps.push(rec);
        state = next;
    }
    Ok((state, trace))
}
