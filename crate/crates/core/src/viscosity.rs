//! Shear-thinning viscosity laws for the free fluid, the Darcy effective
//! viscosity and the interface (slip) viscosity, together with a sampled
//! check of the monotonicity and continuity properties of `G(x) = g(|x|) x`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViscosityLaw {
    Carreau,
    Cross,
    PowerLaw,
    Newtonian,
}

/// Default magnitude floor used when evaluating singular power laws.
pub const DEFAULT_POWER_LAW_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViscosityModel {
    pub law: ViscosityLaw,
    pub nu0: f64,
    pub nu_inf: f64,
    pub k: f64,
    pub r: f64,
    /// Pore-structure constant of the Darcy power law.
    pub m_c: f64,
}

impl ViscosityModel {
    pub fn cross(nu0: f64, nu_inf: f64, k: f64, r: f64) -> Self {
        ViscosityModel { law: ViscosityLaw::Cross, nu0, nu_inf, k, r, m_c: 1.0 }
    }

    pub fn carreau(nu0: f64, nu_inf: f64, k: f64, r: f64) -> Self {
        ViscosityModel { law: ViscosityLaw::Carreau, nu0, nu_inf, k, r, m_c: 1.0 }
    }

    pub fn power_law(k: f64, r: f64) -> Self {
        ViscosityModel { law: ViscosityLaw::PowerLaw, nu0: 0.0, nu_inf: 0.0, k, r, m_c: 1.0 }
    }

    pub fn newtonian(nu: f64) -> Self {
        ViscosityModel { law: ViscosityLaw::Newtonian, nu0: nu, nu_inf: nu, k: 1.0, r: 2.0, m_c: 1.0 }
    }

    /// Checks the parameter ranges; returns the offending field name.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let finite = [self.nu0, self.nu_inf, self.k, self.r, self.m_c].iter().all(|v| v.is_finite());
        if !finite {
            return Err(("law", "parameters must be finite".into()));
        }
        match self.law {
            ViscosityLaw::Newtonian => {
                if self.nu0 <= 0.0 {
                    return Err(("nu0", format!("Newtonian viscosity must be positive, got {}", self.nu0)));
                }
            }
            ViscosityLaw::Carreau | ViscosityLaw::Cross => {
                if !(self.nu_inf >= 0.0 && self.nu_inf < self.nu0) {
                    return Err(("nu_inf", format!("need 0 <= nu_inf < nu0, got nu_inf={}, nu0={}", self.nu_inf, self.nu0)));
                }
                if self.k <= 0.0 {
                    return Err(("K", format!("need K > 0, got {}", self.k)));
                }
                if !(self.r > 1.0 && self.r < 2.0) {
                    return Err(("r", format!("need 1 < r < 2, got {}", self.r)));
                }
            }
            ViscosityLaw::PowerLaw => {
                if self.k <= 0.0 {
                    return Err(("K", format!("need K > 0, got {}", self.k)));
                }
                if !(self.r > 1.0 && self.r < 2.0) {
                    return Err(("r", format!("need 1 < r < 2, got {}", self.r)));
                }
                if self.m_c <= 0.0 {
                    return Err(("m_c", format!("need m_c > 0, got {}", self.m_c)));
                }
            }
        }
        Ok(())
    }

    /// The law as a function of a scaled magnitude `s >= 0`.
    fn eval(&self, s: f64) -> f64 {
        let a = 2.0 - self.r;
        match self.law {
            ViscosityLaw::Newtonian => self.nu0,
            ViscosityLaw::Carreau => {
                self.nu_inf + (self.nu0 - self.nu_inf) / (1.0 + self.k * s * s).powf(0.5 * a)
            }
            ViscosityLaw::Cross => self.nu_inf + (self.nu0 - self.nu_inf) / (1.0 + self.k * s.powf(a)),
            ViscosityLaw::PowerLaw => {
                if s == 0.0 {
                    f64::INFINITY
                } else {
                    self.k * s.powf(self.r - 2.0)
                }
            }
        }
    }

    /// Fluid viscosity as a function of `|D(u_f)|`. The power law returns
    /// `+inf` at zero.
    pub fn nu_fluid(&self, d: f64) -> f64 {
        self.eval(d)
    }

    /// Darcy effective viscosity as a function of `|u_p|`. For the power
    /// law the argument is scaled by `sqrt(kappa) m_c`.
    pub fn nu_darcy(&self, u: f64, kappa: f64) -> f64 {
        match self.law {
            ViscosityLaw::PowerLaw => self.eval(u / (kappa.sqrt() * self.m_c)),
            _ => self.eval(u),
        }
    }

    /// Interface viscosity as a function of the tangential slip magnitude.
    pub fn nu_interface(&self, s: f64, kappa: f64) -> f64 {
        self.nu_darcy(s, kappa)
    }

    /// Zero-deformation (or, for the power law, unit-argument) viscosity;
    /// used when the interface nonlinearity is switched off.
    pub fn reference_viscosity(&self) -> f64 {
        match self.law {
            ViscosityLaw::PowerLaw => self.k,
            _ => self.nu0,
        }
    }

    pub fn is_newtonian(&self) -> bool {
        self.law == ViscosityLaw::Newtonian
    }

    /// `max(magnitude, eps)` for the power law, the magnitude otherwise.
    pub fn regularize(&self, magnitude: f64, eps: f64) -> f64 {
        if self.law == ViscosityLaw::PowerLaw {
            magnitude.max(eps)
        } else {
            magnitude
        }
    }

    /// Default `c` of the (B1)-type bound: 0 for the power law, 1 otherwise.
    pub fn default_b1_offset(&self) -> f64 {
        match self.law {
            ViscosityLaw::PowerLaw => 0.0,
            _ => 1.0,
        }
    }

    /// `G(x) = g(|x|) x` with `G(0) = 0`.
    pub fn flux(&self, x: [f64; 2]) -> [f64; 2] {
        let m = x[0].hypot(x[1]);
        if m == 0.0 {
            return [0.0, 0.0];
        }
        let g = self.eval(m);
        [g * x[0], g * x[1]]
    }
}

/// Extremes of the sampled monotonicity and continuity quotients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityReport {
    /// `min (G(x+h)-G(x)).h / |h|^2` over `x, h` in `[-10, 10]^2`.
    pub min_quotient_a1: f64,
    /// The same minimum over far-field samples `|x|` in `[1e6, 1e12]`.
    pub far_min_quotient_a1: f64,
    /// `min (G(x+h)-G(x)).h (c + |x|^{2-r} + |x+h|^{2-r}) / |h|^2`.
    pub min_quotient_b1: f64,
    pub far_min_quotient_b1: f64,
    /// `max |G(x+h)-G(x)| / |h|`.
    pub max_ratio_a2: f64,
    /// `max |G(x+h)-G(x)| (c + |x|^{2-r} + |x+h|^{2-r}) / |h|`.
    pub max_ratio_b2: f64,
    pub c: f64,
}

/// Far-field minimum must stay above this fraction of the near-field one
/// for a bound to count as uniform.
const UNIFORMITY_FRACTION: f64 = 1e-3;

impl MonotonicityReport {
    /// Strong monotonicity with a uniform constant, as sampled.
    pub fn a1_holds(&self) -> bool {
        self.min_quotient_a1 > 0.0
            && self.far_min_quotient_a1 >= UNIFORMITY_FRACTION * self.min_quotient_a1
    }

    pub fn b1_holds(&self) -> bool {
        self.min_quotient_b1 > 0.0
            && self.far_min_quotient_b1 >= UNIFORMITY_FRACTION * self.min_quotient_b1
    }

    pub fn a2_holds(&self) -> bool {
        self.max_ratio_a2.is_finite()
    }
}

/// Samples random `x, h` and reports the quotients of the (A1)/(A2) and
/// (B1)/(B2) type bounds for `G(x) = g(|x|) x`, `g` being the law.
///
/// `c` overrides the offset of the (B) bounds; `None` uses
/// [`ViscosityModel::default_b1_offset`].
pub fn check_monotonicity(
    model: &ViscosityModel,
    n_samples: usize,
    seed: u64,
    c: Option<f64>,
) -> MonotonicityReport {
    let n_samples = n_samples.max(1);
    let c = c.unwrap_or_else(|| model.default_b1_offset());
    let a = 2.0 - model.r;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = MonotonicityReport {
        min_quotient_a1: f64::INFINITY,
        far_min_quotient_a1: f64::INFINITY,
        min_quotient_b1: f64::INFINITY,
        far_min_quotient_b1: f64::INFINITY,
        max_ratio_a2: 0.0,
        max_ratio_b2: 0.0,
        c,
    };
    let quotients = |x: [f64; 2], h: [f64; 2]| {
        let xh = [x[0] + h[0], x[1] + h[1]];
        let g0 = model.flux(x);
        let g1 = model.flux(xh);
        let dg = [g1[0] - g0[0], g1[1] - g0[1]];
        let hh = h[0] * h[0] + h[1] * h[1];
        let inner = dg[0] * h[0] + dg[1] * h[1];
        let weight = c + x[0].hypot(x[1]).powf(a) + xh[0].hypot(xh[1]).powf(a);
        let q_a1 = inner / hh;
        let q_b1 = inner * weight / hh;
        let r_a2 = dg[0].hypot(dg[1]) / hh.sqrt();
        (q_a1, q_b1, r_a2, r_a2 * weight)
    };

    let draw = |rng: &mut ChaCha8Rng| [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
    for _ in 0..n_samples {
        let x = draw(&mut rng);
        let h = draw(&mut rng);
        if h == [0.0, 0.0] {
            continue;
        }
        let (q1, qb, r2, rb) = quotients(x, h);
        report.min_quotient_a1 = report.min_quotient_a1.min(q1);
        report.min_quotient_b1 = report.min_quotient_b1.min(qb);
        report.max_ratio_a2 = report.max_ratio_a2.max(r2);
        report.max_ratio_b2 = report.max_ratio_b2.max(rb);
    }

    let far = (n_samples / 10).max(100);
    for _ in 0..far {
        let mag = 10f64.powf(rng.random_range(6.0..12.0));
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let x = [mag * theta.cos(), mag * theta.sin()];
        let hm = mag * rng.random_range(1e-3..1.0);
        let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let h = [hm * phi.cos(), hm * phi.sin()];
        let (q1, qb, _, _) = quotients(x, h);
        report.far_min_quotient_a1 = report.far_min_quotient_a1.min(q1);
        report.far_min_quotient_b1 = report.far_min_quotient_b1.min(qb);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ex1() -> ViscosityModel {
        ViscosityModel::cross(10.0, 1.0, 1.0, 1.35)
    }

    #[test]
    fn cross_values() {
        let m = ex1();
        assert_eq!(m.nu_fluid(0.0), 10.0);
        assert!((m.nu_fluid(1.0) - 5.5).abs() < 1e-15);
        assert_eq!(m.nu_darcy(0.0, 1.0), 10.0);
        assert!((m.nu_darcy(1.0, 1.0) - 5.5).abs() < 1e-15);
        assert_eq!(m.nu_interface(0.0, 1.0), 10.0);
    }

    #[test]
    fn carreau_decays_to_zero() {
        let m = ViscosityModel::carreau(1.0, 0.0, 1.0, 1.5);
        let v: Vec<f64> = [10.0, 100.0, 1000.0].iter().map(|&d| m.nu_fluid(d)).collect();
        assert!(v[0] > v[1] && v[1] > v[2]);
        assert!(v[2] < 0.2);
        assert!(m.nu_fluid(1e12) < 1e-2);
    }

    #[test]
    fn power_law_is_singular_at_zero() {
        let m = ViscosityModel::power_law(1.0, 1.35);
        assert_eq!(m.nu_fluid(0.0), f64::INFINITY);
        assert_eq!(m.nu_darcy(0.0, 1.0), f64::INFINITY);
        assert!(m.nu_fluid(m.regularize(0.0, DEFAULT_POWER_LAW_EPS)).is_finite());
    }

    #[test]
    fn power_law_darcy_scale_symmetry() {
        let mut m = ViscosityModel::power_law(2.0, 1.4);
        m.m_c = 0.7;
        let base = m.nu_darcy(0.3, 4.0);
        // u -> c u and sqrt(kappa) m_c -> c sqrt(kappa) m_c
        let c: f64 = 3.0;
        let mut scaled = m;
        scaled.m_c = m.m_c * c;
        assert!((scaled.nu_darcy(c * 0.3, 4.0) - base).abs() < 1e-13 * base);
    }

    #[test]
    fn newtonian_interface_is_constant() {
        let m = ViscosityModel::newtonian(3.0);
        for s in [0.0, 0.1, 7.0, 1e9] {
            assert_eq!(m.nu_interface(s, 1.0), 3.0);
        }
    }

    #[test]
    fn interface_sampling_is_decreasing() {
        let m = ex1();
        let v: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 4.0].iter().map(|&s| m.nu_interface(s, 1.0)).collect();
        assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
    }

    #[test]
    fn a1_for_bounded_laws() {
        for m in [ex1(), ViscosityModel::carreau(10.0, 1.0, 1.0, 1.35)] {
            let r = check_monotonicity(&m, 100_000, 7, None);
            assert!(r.min_quotient_a1 > 0.0);
            assert!(r.a1_holds());
            assert!(r.a2_holds());
            // the uniform constant is nu_inf
            assert!(r.far_min_quotient_a1 >= 1.0 - 1e-9);
            assert!(r.max_ratio_a2 <= 10.0 + 1e-9);
        }
    }

    #[test]
    fn b1_for_power_law() {
        let m = ViscosityModel::power_law(1.0, 1.35);
        let r = check_monotonicity(&m, 100_000, 11, None);
        assert_eq!(r.c, 0.0);
        assert!(r.min_quotient_b1 > 0.0);
        assert!(r.b1_holds());
    }

    #[test]
    fn cross_without_plateau_fails_a1() {
        let m = ViscosityModel::cross(10.0, 0.0, 1.0, 1.35);
        let r = check_monotonicity(&m, 10_000, 3, Some(0.0));
        assert!(!r.a1_holds());
    }

    #[test]
    fn newtonian_quotient_is_the_viscosity() {
        let m = ViscosityModel::newtonian(2.5);
        let r = check_monotonicity(&m, 1000, 1, None);
        assert!((r.min_quotient_a1 - 2.5).abs() < 1e-12);
        assert!((r.max_ratio_a2 - 2.5).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(ex1().validate().is_ok());
        assert_eq!(ViscosityModel::cross(1.0, 2.0, 1.0, 1.35).validate().unwrap_err().0, "nu_inf");
        assert_eq!(ViscosityModel::cross(10.0, 1.0, 1.0, 2.5).validate().unwrap_err().0, "r");
        assert_eq!(ViscosityModel::newtonian(0.0).validate().unwrap_err().0, "nu0");
    }

    proptest! {
        #[test]
        fn shear_thinning(d1 in 0.0f64..50.0, dd in 0.0f64..50.0, which in 0usize..3) {
            let m = [ex1(), ViscosityModel::carreau(10.0, 1.0, 1.0, 1.35), ViscosityModel::power_law(1.0, 1.35)][which];
            let d2 = d1 + dd;
            prop_assert!(m.nu_fluid(d1) >= m.nu_fluid(d2));
        }

        #[test]
        fn bounded_between_plateaus(d in 0.0f64..1e6) {
            for m in [ex1(), ViscosityModel::carreau(10.0, 1.0, 1.0, 1.35)] {
                let v = m.nu_fluid(d);
                prop_assert!(v >= 1.0 && v <= 10.0);
            }
        }
    }
}
