//! Age-specific prevalence implied by the illness-death rates.
//!
//! With age-only rates the prevalence PDE reduces along characteristics to an
//! ODE in age. Under the odds transform `y = pi / (1 - pi)` it becomes linear,
//!
//! ```text
//! y' = lambda - y * (mu1 - mu0 - lambda),   y(0) = 0,
//! ```
//!
//! which is integrated here with classical RK4. The derivative of `pi` is then
//! read off the right-hand side `(1 - pi) * (lambda - pi * (mu1 - mu0))`, so it
//! carries no differencing error.

use std::io::Write;
use std::path::Path;

use crate::error::{MrrError, Result};
use crate::rate_model::{RateSet, MAX_AGE};

/// Default integration step in years.
pub const DEFAULT_STEP: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct PrevalenceOracle {
    rates: RateSet,
    age_grid: Vec<f64>,
    pi_values: Vec<f64>,
    dpi_values: Vec<f64>,
}

/// `d pi / d a` for given prevalence at `age`.
pub fn prevalence_slope(rates: &RateSet, age: f64, pi: f64) -> f64 {
    let excess = rates.mu1_at(age) - rates.mu0_at(age);
    (1.0 - pi) * (rates.incidence_at(age) - pi * excess)
}

fn odds_slope(rates: &RateSet, age: f64, y: f64) -> f64 {
    let lambda = rates.incidence_at(age);
    lambda - y * (rates.mu1_at(age) - rates.mu0_at(age) - lambda)
}

/// Integrates the prevalence ODE from birth up to `max_age`.
pub fn solve_prevalence(rates: &RateSet, max_age: f64, step: f64) -> Result<PrevalenceOracle> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(MrrError::InvalidArgument(format!(
            "integration step must be positive, got {step}"
        )));
    }
    if !(max_age > 0.0 && max_age <= MAX_AGE) {
        return Err(MrrError::InvalidArgument(format!(
            "max_age must lie in (0, {MAX_AGE}], got {max_age}"
        )));
    }

    let steps = ((max_age / step) - 1e-9).ceil() as usize;
    let mut age_grid = Vec::with_capacity(steps + 1);
    let mut odds = Vec::with_capacity(steps + 1);
    age_grid.push(0.0);
    odds.push(0.0);

    let mut y = 0.0;
    for k in 0..steps {
        let a = k as f64 * step;
        let next = if k + 1 == steps {
            max_age
        } else {
            (k + 1) as f64 * step
        };
        let h = next - a;
        let k1 = odds_slope(rates, a, y);
        let k2 = odds_slope(rates, a + 0.5 * h, y + 0.5 * h * k1);
        let k3 = odds_slope(rates, a + 0.5 * h, y + 0.5 * h * k2);
        let k4 = odds_slope(rates, a + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        age_grid.push(next);
        odds.push(y);
    }

    let pi_values: Vec<f64> = odds.iter().map(|y| y / (1.0 + y)).collect();
    let dpi_values = age_grid
        .iter()
        .zip(&pi_values)
        .map(|(&a, &p)| prevalence_slope(rates, a, p))
        .collect();

    Ok(PrevalenceOracle {
        rates: *rates,
        age_grid,
        pi_values,
        dpi_values,
    })
}

impl PrevalenceOracle {
    /// Oracle on `[0, MAX_AGE]` at the default step.
    pub fn for_rates(rates: &RateSet) -> Result<Self> {
        solve_prevalence(rates, MAX_AGE, DEFAULT_STEP)
    }

    pub fn rates(&self) -> &RateSet {
        &self.rates
    }

    pub fn age_grid(&self) -> &[f64] {
        &self.age_grid
    }

    pub fn pi_values(&self) -> &[f64] {
        &self.pi_values
    }

    pub fn dpi_values(&self) -> &[f64] {
        &self.dpi_values
    }

    pub fn max_age(&self) -> f64 {
        *self.age_grid.last().expect("grid is never empty")
    }

    fn locate(&self, age: f64) -> Result<(usize, f64)> {
        let max_age = self.max_age();
        if !(0.0..=max_age).contains(&age) {
            return Err(MrrError::AgeOutOfGrid { age, max_age });
        }
        let hi = self.age_grid.partition_point(|&g| g < age);
        if hi == 0 {
            return Ok((0, 0.0));
        }
        if self.age_grid[hi] == age {
            return Ok((hi, 0.0));
        }
        let lo = hi - 1;
        let frac = (age - self.age_grid[lo]) / (self.age_grid[hi] - self.age_grid[lo]);
        Ok((lo, frac))
    }

    /// Prevalence at `age` by linear interpolation on the solved grid.
    pub fn prevalence_at(&self, age: f64) -> Result<f64> {
        let (i, frac) = self.locate(age)?;
        if frac == 0.0 {
            return Ok(self.pi_values[i]);
        }
        Ok(self.pi_values[i] + frac * (self.pi_values[i + 1] - self.pi_values[i]))
    }

    /// `d pi / d a` at `age`, from the ODE right-hand side at the interpolated prevalence.
    pub fn derivative_at(&self, age: f64) -> Result<f64> {
        let pi = self.prevalence_at(age)?;
        Ok(prevalence_slope(&self.rates, age, pi))
    }

    /// Population mortality composed from the oracle prevalence.
    pub fn general_mortality_at(&self, age: f64) -> Result<f64> {
        self.rates.general_mortality(age, self.prevalence_at(age)?)
    }

    /// Writes `age,pi,dpi_da`, one row per grid node whose age is a multiple of `every`.
    pub fn write_csv(&self, path: &Path, every: f64) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| MrrError::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let io = |e| MrrError::io(path, e);
        writeln!(out, "age,pi,dpi_da").map_err(io)?;
        let mut next = 0.0;
        for ((&a, &p), &d) in self
            .age_grid
            .iter()
            .zip(&self.pi_values)
            .zip(&self.dpi_values)
        {
            if a + 1e-9 >= next {
                writeln!(out, "{a},{p},{d}").map_err(io)?;
                next += every;
            }
        }
        out.flush().map_err(io)
    }
}
