//! Parametric transition hazards of the illness-death model.
//!
//! Every hazard is log-linear in age (Gompertz). The default coefficients are
//! the long-term-care rates used throughout the replication experiments.

use serde::{Deserialize, Serialize};

use crate::error::{MrrError, Result};

/// Upper end of the working age range in years.
pub const MAX_AGE: f64 = 110.0;

/// Hazard `exp(c0 + c1 * a)` in events per person-year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GompertzRate {
    pub c0: f64,
    pub c1: f64,
}

impl GompertzRate {
    pub const fn new(c0: f64, c1: f64) -> Self {
        Self { c0, c1 }
    }

    #[inline]
    pub fn rate_at(&self, age: f64) -> f64 {
        (self.c0 + self.c1 * age).exp()
    }

    /// Integrated hazard over `[from, to]`.
    pub fn cumulative(&self, from: f64, to: f64) -> f64 {
        if self.c1.abs() < 1e-12 {
            self.c0.exp() * (to - from)
        } else {
            self.c0.exp() * ((self.c1 * to).exp() - (self.c1 * from).exp()) / self.c1
        }
    }

    /// Survival from `from` to `to` under this hazard alone.
    pub fn survival(&self, from: f64, to: f64) -> f64 {
        (-self.cumulative(from, to)).exp()
    }
}

/// Incidence and the two mortality hazards of the illness-death model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateSet {
    /// Healthy to diseased.
    pub incidence: GompertzRate,
    /// Healthy to dead.
    pub mortality_healthy: GompertzRate,
    /// Diseased to dead.
    pub mortality_diseased: GompertzRate,
}

impl Default for RateSet {
    fn default() -> Self {
        Self::long_term_care()
    }
}

impl RateSet {
    /// Need-for-long-term-care rates of the replication study.
    pub const fn long_term_care() -> Self {
        Self {
            incidence: GompertzRate::new(-9.5, 0.085),
            mortality_healthy: GompertzRate::new(-11.0, 0.11),
            mortality_diseased: GompertzRate::new(-9.5, 0.095),
        }
    }

    pub fn incidence_at(&self, age: f64) -> f64 {
        self.incidence.rate_at(age)
    }

    pub fn mu0_at(&self, age: f64) -> f64 {
        self.mortality_healthy.rate_at(age)
    }

    pub fn mu1_at(&self, age: f64) -> f64 {
        self.mortality_diseased.rate_at(age)
    }

    /// Mortality rate ratio `mu1 / mu0` at `age`.
    pub fn true_mrr(&self, age: f64) -> f64 {
        let d0 = self.mortality_diseased.c0 - self.mortality_healthy.c0;
        let d1 = self.mortality_diseased.c1 - self.mortality_healthy.c1;
        (d0 + d1 * age).exp()
    }

    /// Population mortality `pi * mu1 + (1 - pi) * mu0` at `age`.
    pub fn general_mortality(&self, age: f64, prevalence: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&prevalence) {
            return Err(MrrError::PrevalenceOutOfRange(prevalence));
        }
        Ok(prevalence * self.mu1_at(age) + (1.0 - prevalence) * self.mu0_at(age))
    }

    /// All three hazards are positive and finite on `[0, MAX_AGE]`.
    pub fn validate(&self) -> Result<()> {
        for (name, rate) in [
            ("incidence", self.incidence),
            ("mortality_healthy", self.mortality_healthy),
            ("mortality_diseased", self.mortality_diseased),
        ] {
            for age in [0.0, MAX_AGE] {
                let v = rate.rate_at(age);
                if !(v.is_finite() && v > 0.0) {
                    return Err(MrrError::Config(format!("{name} rate is {v} at age {age}")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        ((a - b) / b).abs() <= tol
    }

    #[test]
    fn rate_at_examples() {
        let rates = RateSet::long_term_care();
        // mpmath, 30 digits
        assert!(rel_close(
            rates.incidence_at(0.0),
            7.485_182_988_770_059e-5,
            1e-14
        ));
        assert_eq!(rates.mu0_at(100.0), 1.0);
        assert!(rel_close(
            rates.mu1_at(80.0),
            0.149_568_619_222_635_07,
            1e-14
        ));
    }

    #[test]
    fn true_mrr_matches_published_column() {
        let rates = RateSet::long_term_care();
        assert!((rates.true_mrr(65.0) - 1.690).abs() < 5e-4);
        assert!((rates.true_mrr(95.0) - 1.078).abs() < 5e-4);
        assert_eq!(rates.true_mrr(100.0), 1.0);

        let same = RateSet {
            mortality_diseased: rates.mortality_healthy,
            ..rates
        };
        assert_eq!(same.true_mrr(100.0), 1.0);
        assert_eq!(same.true_mrr(37.0), 1.0);
    }

    #[test]
    fn general_mortality_examples() {
        let rates = RateSet::long_term_care();
        assert_eq!(
            rates.general_mortality(80.0, 0.0).unwrap(),
            rates.mu0_at(80.0)
        );
        assert_eq!(
            rates.general_mortality(80.0, 1.0).unwrap(),
            rates.mu1_at(80.0)
        );
        let mu = rates.general_mortality(80.0, 0.2).unwrap();
        // mpmath: 0.2 exp(-1.9) + 0.8 exp(-2.2)
        assert!(rel_close(mu, 0.118_556_250_534_394_1, 1e-13));
        assert!(rates.general_mortality(80.0, 1.2).is_err());
        assert!(rates.general_mortality(80.0, -0.01).is_err());
    }

    /// Two groups with constant hazards mu1 (20%) and mu0 (80%) observed over a
    /// short window: the pooled death rate estimates the mixture hazard.
    #[test]
    fn general_mortality_matches_two_group_micro_simulation() {
        use rand::{Rng, SeedableRng};
        let rates = RateSet::long_term_care();
        let (m0, m1) = (rates.mu0_at(80.0), rates.mu1_at(80.0));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let window = 0.01;
        let (n1, n0) = (2_000_000usize, 8_000_000usize);
        let mut exposure = 0.0;
        let mut deaths = 0usize;
        for (n, m) in [(n1, m1), (n0, m0)] {
            for _ in 0..n {
                let u: f64 = 1.0 - rng.random::<f64>();
                let t = -u.ln() / m;
                if t < window {
                    deaths += 1;
                    exposure += t;
                } else {
                    exposure += window;
                }
            }
        }
        let empirical = deaths as f64 / exposure;
        let expected = rates.general_mortality(80.0, 0.2).unwrap();
        let se = (deaths as f64).sqrt() / exposure;
        assert!(
            (empirical - expected).abs() < 4.0 * se,
            "{empirical} vs {expected}"
        );
    }

    #[test]
    fn true_mrr_decreasing_and_crosses_one_at_100() {
        let rates = RateSet::long_term_care();
        let mut prev = f64::INFINITY;
        for k in 0..=110 {
            let r = rates.true_mrr(k as f64);
            assert!(r < prev);
            prev = r;
        }
        assert!((rates.true_mrr(100.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cumulative_matches_constant_limit() {
        let r = GompertzRate::new((0.1f64).ln(), 0.0);
        assert!((r.cumulative(3.0, 13.0) - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn general_mortality_is_bracketed(a in 0.0..110.0f64, p in 0.0..=1.0f64) {
            let rates = RateSet::long_term_care();
            let mu = rates.general_mortality(a, p).unwrap();
            let lo = rates.mu0_at(a).min(rates.mu1_at(a));
            let hi = rates.mu0_at(a).max(rates.mu1_at(a));
            prop_assert!(mu >= lo * (1.0 - 1e-12) && mu <= hi * (1.0 + 1e-12));
            let via_ratio = rates.mu0_at(a) * (p * rates.true_mrr(a) + 1.0 - p);
            prop_assert!(((mu - via_ratio) / mu).abs() < 1e-12);
        }

        #[test]
        fn log_rate_is_affine(a in 1.0..109.0f64, h in 0.0..1.0f64,
                              c0 in -12.0..0.0f64, c1 in -0.2..0.2f64) {
            let r = GompertzRate::new(c0, c1);
            let lhs = r.rate_at(a + h) * r.rate_at(a - h);
            let rhs = r.rate_at(a).powi(2);
            prop_assert!(((lhs - rhs) / rhs).abs() < 1e-12);
            prop_assert!(r.rate_at(a) > 0.0);
        }
    }
}
