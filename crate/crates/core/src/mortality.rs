//! General (all-cause) mortality as a tabulated function of age.

use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use crate::error::{MrrError, Result};

/// Piecewise-linear `mu(age)`, held constant beyond the first and last rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MortalityTable {
    ages: Vec<f64>,
    mu: Vec<f64>,
}

impl MortalityTable {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(MrrError::InvalidArgument("mortality table is empty".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(MrrError::InvalidArgument(
                "duplicate age in mortality table".into(),
            ));
        }
        if let Some(&(age, mu)) = points
            .iter()
            .find(|(a, m)| !(a.is_finite() && *m >= 0.0 && m.is_finite()))
        {
            return Err(MrrError::InvalidArgument(format!(
                "invalid mortality row ({age}, {mu})"
            )));
        }
        let (ages, mu) = points.into_iter().unzip();
        Ok(Self { ages, mu })
    }

    /// Tabulates `f` at the given ages.
    pub fn from_fn(ages: impl IntoIterator<Item = f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(ages.into_iter().map(|a| (a, f(a))).collect())
    }

    pub fn len(&self) -> usize {
        self.ages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ages.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.ages.iter().copied().zip(self.mu.iter().copied())
    }

    pub fn mu_at(&self, age: f64) -> f64 {
        let n = self.ages.len();
        if age <= self.ages[0] {
            return self.mu[0];
        }
        if age >= self.ages[n - 1] {
            return self.mu[n - 1];
        }
        let hi = self.ages.partition_point(|&a| a < age);
        if self.ages[hi] == age {
            return self.mu[hi];
        }
        let lo = hi - 1;
        let frac = (age - self.ages[lo]) / (self.ages[hi] - self.ages[lo]);
        self.mu[lo] + frac * (self.mu[hi] - self.mu[lo])
    }

    /// Reads `age,mu` rows.
    pub fn read_csv(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            age: f64,
            mu: f64,
        }
        let mut reader = csv::Reader::from_path(path).map_err(|e| MrrError::csv(path, e))?;
        let points = reader
            .deserialize()
            .map(|r| {
                r.map(|row: Row| (row.age, row.mu))
                    .map_err(|e| MrrError::csv(path, e))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| MrrError::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let io = |e| MrrError::io(path, e);
        writeln!(out, "age,mu").map_err(io)?;
        for (a, m) in self.rows() {
            writeln!(out, "{a},{m}").map_err(io)?;
        }
        out.flush().map_err(io)
    }
}
