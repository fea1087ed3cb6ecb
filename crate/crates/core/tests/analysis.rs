use fpsi::analysis::{
    aggregate, compute_norm, convergence_orders, convergence_rows, discrete_energy, relative_error, squared_norms,
    NestedPair, NormSpec, Quantity, TimeAggregation, TABLE_SPECS,
};
use fpsi::forms::assemble_ape;
use fpsi::problem::{example1_discretization, Discretization, ProblemConfig, SolutionState};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rt0_interpolate_constant(d: &Discretization, w: [f64; 2]) -> Vec<f64> {
    let m = &d.porous;
    (0..m.n_edges())
        .map(|e| {
            let [a, b] = m.edges()[e];
            let (pa, pb) = (m.nodes()[a], m.nodes()[b]);
            let tri = m.triangles()[m.edge_triangles(e).0];
            let o = *tri.iter().find(|&&v| v != a && v != b).unwrap();
            let po = m.nodes()[o];
            let mut n = [pb[1] - pa[1], pa[0] - pb[0]];
            if n[0] * (pa[0] - po[0]) + n[1] * (pa[1] - po[1]) < 0.0 {
                n = [-n[0], -n[1]];
            }
            w[0] * n[0] + w[1] * n[1]
        })
        .collect()
}

/// u_f = (y, 0), p_f = x, u_p = (0.6, -0.25), p_p = 2, eta = (x, 2y).
fn linear_state(d: &Discretization) -> SolutionState {
    let mut s = SolutionState::zeros(d, 0.0);
    for (v, p) in d.fluid.nodes().iter().enumerate() {
        s.uf[v] = p[1];
        s.pf[v] = p[0];
    }
    s.up = rt0_interpolate_constant(d, [0.6, -0.25]);
    s.pp.iter_mut().for_each(|p| *p = 2.0);
    let n = d.porous.n_nodes();
    for (v, p) in d.porous.nodes().iter().enumerate() {
        s.eta[v] = p[0];
        s.eta[n + v] = 2.0 * p[1];
    }
    s
}

fn random_state(d: &Discretization, seed: u64) -> SolutionState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SolutionState::zeros(d, 0.0);
    for v in [&mut s.uf, &mut s.pf, &mut s.up, &mut s.pp, &mut s.eta, &mut s.lam] {
        v.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
    }
    s
}

fn scaled(s: &SolutionState, a: f64) -> SolutionState {
    let f = |v: &Vec<f64>| v.iter().map(|x| a * x).collect();
    SolutionState { uf: f(&s.uf), pf: f(&s.pf), up: f(&s.up), pp: f(&s.pp), eta: f(&s.eta), lam: f(&s.lam), time: s.time }
}

fn difference(a: &SolutionState, b: &SolutionState) -> SolutionState {
    let f = |x: &Vec<f64>, y: &Vec<f64>| x.iter().zip(y).map(|(p, q)| p - q).collect();
    SolutionState {
        uf: f(&a.uf, &b.uf),
        pf: f(&a.pf, &b.pf),
        up: f(&a.up, &b.up),
        pp: f(&a.pp, &b.pp),
        eta: f(&a.eta, &b.eta),
        lam: f(&a.lam, &b.lam),
        time: a.time,
    }
}

#[test]
fn norms_of_linear_fields_match_closed_forms() {
    let d = example1_discretization(5).unwrap();
    let n = squared_norms(&d, &linear_state(&d));
    // int_0^1 y^2 + |grad|^2 = 1/3 + 1
    let want = [4.0 / 3.0, 0.36 + 0.0625, 1.0 / 3.0, 4.0, 7.0 / 3.0 + 4.0 / 3.0 + 5.0];
    for k in 0..5 {
        assert!((n[k] - want[k]).abs() < 1e-12, "slot {k}: {} vs {}", n[k], want[k]);
    }
}

#[test]
fn zero_state_has_zero_norms() {
    let d = example1_discretization(4).unwrap();
    assert_eq!(squared_norms(&d, &SolutionState::zeros(&d, 0.0)), [0.0; 5]);
}

#[test]
fn nested_differences_vanish_for_representable_fields() {
    let coarse = example1_discretization(4).unwrap();
    let fine = example1_discretization(8).unwrap();
    let pair = NestedPair::new(&coarse, &fine).unwrap();
    let (diff, reference) = pair.squared_differences(&linear_state(&coarse), &linear_state(&fine));
    assert!(diff.iter().all(|&v| v.abs() <= 1e-24), "{diff:?}");
    let own = squared_norms(&fine, &linear_state(&fine));
    for k in 0..5 {
        assert!((reference[k] - own[k]).abs() < 1e-12);
    }
}

#[test]
fn zero_coarse_solution_has_unit_relative_error() {
    let coarse = example1_discretization(2).unwrap();
    let fine = example1_discretization(4).unwrap();
    let refs = vec![random_state(&fine, 1), random_state(&fine, 2)];
    let zeros = vec![SolutionState::zeros(&coarse, 0.0); 2];
    for spec in &TABLE_SPECS {
        let e = relative_error(&coarse, &zeros, &fine, &refs, spec).unwrap();
        assert!((e - 1.0).abs() < 1e-14, "{}", spec.label());
    }
}

#[test]
fn nonnested_pairs_are_rejected() {
    let coarse = example1_discretization(3).unwrap();
    let fine = example1_discretization(4).unwrap();
    assert!(NestedPair::new(&coarse, &fine).is_err());
    assert!(NestedPair::new(&fine, &coarse).is_err());
}

#[test]
fn time_aggregation() {
    let v = [3.0, 4.0];
    assert!((aggregate(&v, 0.5, TimeAggregation::L2) - (0.5f64 * 25.0).sqrt()).abs() < 1e-15);
    assert_eq!(aggregate(&v, 0.5, TimeAggregation::Linf), 4.0);
    let d = example1_discretization(3).unwrap();
    let s = linear_state(&d);
    let spec = NormSpec::new(Quantity::PpL2, TimeAggregation::L2);
    let e = compute_norm(&d, &[s.clone(), s.clone(), s], &spec, 0.1, 1.0).unwrap();
    assert!((e - (0.1f64 * 3.0 * 4.0).sqrt()).abs() < 1e-12);
    let bad = NormSpec { r: 3.0, ..spec };
    assert!(compute_norm(&d, &[], &bad, 0.1, 1.0).is_err());
}

#[test]
fn order_estimates() {
    let o = convergence_orders(&[4.83e-3, 2.31e-3, 1.04e-3, 3.94e-4]).unwrap();
    for (got, want) in o.iter().zip([1.06, 1.16, 1.40]) {
        assert!((got - want).abs() < 0.02, "{got} vs {want}");
    }
    let rows = convergence_rows(&[(0.1, vec![1.0, 2.0]), (0.05, vec![0.25, 0.0]), (0.025, vec![0.125, 1.0])]);
    assert_eq!(rows[0].orders, vec![None, None]);
    assert!((rows[1].orders[0].unwrap() - 2.0).abs() < 1e-14);
    assert_eq!(rows[1].orders[1], None);
    assert!((rows[2].orders[0].unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn energy_is_storage_plus_elastic_energy() {
    let d = example1_discretization(4).unwrap();
    let cfg = ProblemConfig { s0: 0.3, ..ProblemConfig::example1() };
    let s = random_state(&d, 7);
    let a = assemble_ape(&d, &cfg);
    let ae: f64 = a.mul_vec(&s.eta).iter().zip(&s.eta).map(|(x, y)| x * y).sum();
    let mass: f64 = d.porous_geometry.iter().zip(&s.pp).map(|(g, p)| g.area * p * p).sum();
    let e = discrete_energy(&d, &cfg, &s);
    assert!((e - (0.3 * mass + ae)).abs() < 1e-12 * e);
    // rigid translation carries no elastic energy
    let mut t = SolutionState::zeros(&d, 0.0);
    let n = d.porous.n_nodes();
    t.eta[..n].iter_mut().for_each(|x| *x = 1.0);
    assert!(discrete_energy(&d, &cfg, &t).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn norms_are_homogeneous(seed in 0u64..10_000, a in -5.0f64..5.0) {
        let d = example1_discretization(3).unwrap();
        let s = random_state(&d, seed);
        let (n1, n2) = (squared_norms(&d, &s), squared_norms(&d, &scaled(&s, a)));
        for k in 0..5 {
            prop_assert!((n2[k].sqrt() - a.abs() * n1[k].sqrt()).abs() <= 1e-12 * (1.0 + n2[k].sqrt()));
        }
    }

    #[test]
    fn norms_satisfy_triangle_inequality(seed in 0u64..10_000) {
        let d = example1_discretization(3).unwrap();
        let (x, y) = (random_state(&d, seed), random_state(&d, seed + 17));
        let diff = difference(&x, &y);
        let (nx, ny, nd) = (squared_norms(&d, &x), squared_norms(&d, &y), squared_norms(&d, &diff));
        for k in 0..5 {
            prop_assert!(nd[k].sqrt() <= nx[k].sqrt() + ny[k].sqrt() + 1e-12);
        }
    }

    #[test]
    fn relative_error_is_scale_invariant(seed in 0u64..10_000, a in 0.01f64..100.0) {
        let coarse = example1_discretization(2).unwrap();
        let fine = example1_discretization(4).unwrap();
        let c = vec![random_state(&coarse, seed)];
        let r = vec![random_state(&fine, seed + 1)];
        let (cs, rs) = (vec![scaled(&c[0], a)], vec![scaled(&r[0], a)]);
        for spec in &TABLE_SPECS {
            let e1 = relative_error(&coarse, &c, &fine, &r, spec).unwrap();
            let e2 = relative_error(&coarse, &cs, &fine, &rs, spec).unwrap();
            prop_assert!((e1 - e2).abs() <= 1e-12 * e1.max(1.0));
        }
    }

    #[test]
    fn energy_is_nonnegative(seed in 0u64..10_000) {
        let d = example1_discretization(3).unwrap();
        prop_assert!(discrete_energy(&d, &ProblemConfig::example1(), &random_state(&d, seed)) >= 0.0);
    }
}
