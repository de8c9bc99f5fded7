//! Cubic smoothing spline with generalized cross-validation.
//!
//! Minimizes `sum w_i (y_i - f(x_i))^2 + lambda * integral f''(x)^2 dx` over
//! natural cubic splines with knots at the data abscissae, using the Reinsch
//! form: with `Q` the second-difference operator and `R` the band matrix of
//! the penalty, the interior second derivatives solve
//! `(R + lambda Q' W^-1 Q) gamma = Q' y` and the fitted values are
//! `g = y - lambda W^-1 Q gamma`.

use nalgebra::{DMatrix, DVector};

use crate::error::{MrrError, Result};

/// How the smoothing parameter is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    Gcv,
    Fixed(f64),
}

/// A fitted natural cubic spline.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Second derivatives at the knots; zero at both ends.
    second: Vec<f64>,
    lambda: f64,
    effective_df: f64,
}

struct Reinsch {
    n: usize,
    y: DVector<f64>,
    inv_w: DVector<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    /// `Q' W^-1 Q`
    c: DMatrix<f64>,
}

struct Solution {
    values: DVector<f64>,
    gamma: DVector<f64>,
    trace: f64,
}

impl Reinsch {
    fn new(x: &[f64], y: &[f64], w: &[f64]) -> Self {
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|p| p[1] - p[0]).collect();
        let mut q = DMatrix::zeros(n, n - 2);
        let mut r = DMatrix::zeros(n - 2, n - 2);
        for j in 1..n - 1 {
            let col = j - 1;
            q[(j - 1, col)] = 1.0 / h[j - 1];
            q[(j, col)] = -1.0 / h[j - 1] - 1.0 / h[j];
            q[(j + 1, col)] = 1.0 / h[j];
            r[(col, col)] = (h[j - 1] + h[j]) / 3.0;
            if col + 1 < n - 2 {
                r[(col, col + 1)] = h[j] / 6.0;
                r[(col + 1, col)] = h[j] / 6.0;
            }
        }
        let inv_w = DVector::from_iterator(n, w.iter().map(|w| 1.0 / w));
        let wq = DMatrix::from_fn(n, n - 2, |i, j| inv_w[i] * q[(i, j)]);
        let c = q.transpose() * &wq;
        Self {
            n,
            y: DVector::from_column_slice(y),
            inv_w,
            q,
            r,
            c,
        }
    }

    fn solve(&self, lambda: f64, with_trace: bool) -> Option<Solution> {
        let m = &self.r + &self.c * lambda;
        let chol = m.cholesky()?;
        let gamma = chol.solve(&(self.q.transpose() * &self.y));
        let qg = &self.q * &gamma;
        let values = DVector::from_fn(self.n, |i, _| self.y[i] - lambda * self.inv_w[i] * qg[i]);
        let trace = if with_trace {
            let x = chol.solve(&self.c);
            self.n as f64 - lambda * x.trace()
        } else {
            f64::NAN
        };
        Some(Solution {
            values,
            gamma,
            trace,
        })
    }

    fn gcv(&self, lambda: f64, w: &[f64]) -> f64 {
        let Some(s) = self.solve(lambda, true) else {
            return f64::INFINITY;
        };
        let n = self.n as f64;
        let rss: f64 = (0..self.n)
            .map(|i| w[i] * (self.y[i] - s.values[i]).powi(2))
            .sum();
        let denom = 1.0 - s.trace / n;
        if denom <= 0.0 {
            return f64::INFINITY;
        }
        (rss / n) / (denom * denom)
    }
}

/// Golden-section minimization of `f` on `[lo, hi]`.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iterations: usize) -> f64 {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..iterations {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

impl SmoothingSpline {
    /// Fits the spline. `x` must be strictly increasing; weights default to one.
    pub fn fit(
        x: &[f64],
        y: &[f64],
        weights: Option<&[f64]>,
        smoothing: Smoothing,
    ) -> Result<Self> {
        let n = x.len();
        if n == 0 || y.len() != n {
            return Err(MrrError::InvalidArgument(format!(
                "spline needs matching non-empty inputs, got {} abscissae and {} ordinates",
                n,
                y.len()
            )));
        }
        if x.windows(2).any(|p| p[1].is_nan() || p[1] <= p[0]) {
            return Err(MrrError::InvalidArgument(
                "spline abscissae must be strictly increasing".into(),
            ));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(MrrError::InvalidArgument(
                "spline inputs must be finite".into(),
            ));
        }
        let unit;
        let w = match weights {
            Some(w) if w.len() != n => {
                return Err(MrrError::InvalidArgument("weights length mismatch".into()));
            }
            Some(w) if w.iter().any(|v| !(*v > 0.0 && v.is_finite())) => {
                return Err(MrrError::InvalidArgument("weights must be positive".into()));
            }
            Some(w) => w,
            None => {
                unit = vec![1.0; n];
                &unit[..]
            }
        };
        if let Smoothing::Fixed(l) = smoothing {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(MrrError::InvalidArgument(format!(
                    "smoothing parameter must be >= 0, got {l}"
                )));
            }
        }

        if n < 3 {
            return Ok(Self::low_rank(x, y));
        }

        let problem = Reinsch::new(x, y, w);
        let lambda = match smoothing {
            Smoothing::Fixed(l) => l,
            Smoothing::Gcv => {
                // search log10(lambda) on a scale where penalty and fit balance
                let scale = problem.r.trace() / problem.c.trace();
                let objective = |log_l: f64| problem.gcv(scale * 10f64.powf(log_l), w);
                let grid: Vec<f64> = (0..=140).map(|k| -8.0 + 0.1 * k as f64).collect();
                let scores: Vec<f64> = grid.iter().map(|&g| objective(g)).collect();
                let best = scores
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .expect("grid is non-empty");
                let lo = grid[best.saturating_sub(1)];
                let hi = grid[(best + 1).min(grid.len() - 1)];
                scale * 10f64.powf(golden_min(objective, lo, hi, 60))
            }
        };

        let sol = problem.solve(lambda, true).ok_or_else(|| {
            MrrError::InvalidArgument("penalized system is not positive definite".into())
        })?;
        let mut second = vec![0.0; n];
        second[1..n - 1].copy_from_slice(sol.gamma.as_slice());
        Ok(Self {
            knots: x.to_vec(),
            values: sol.values.as_slice().to_vec(),
            second,
            lambda,
            effective_df: sol.trace,
        })
    }

    /// One point: constant. Two points: the line through both, which is also
    /// the weighted least-squares line.
    fn low_rank(x: &[f64], y: &[f64]) -> Self {
        Self {
            knots: x.to_vec(),
            values: y.to_vec(),
            second: vec![0.0; x.len()],
            lambda: 0.0,
            effective_df: x.len() as f64,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Trace of the smoother matrix.
    pub fn effective_df(&self) -> f64 {
        self.effective_df
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn fitted(&self) -> &[f64] {
        &self.values
    }

    pub fn range(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().expect("non-empty"))
    }

    fn end_slope(&self, left: bool) -> f64 {
        let n = self.knots.len();
        if n == 1 {
            return 0.0;
        }
        if left {
            self.derivative_on(0, self.knots[0])
        } else {
            self.derivative_on(n - 2, self.knots[n - 1])
        }
    }

    fn interval(&self, x: f64) -> usize {
        let n = self.knots.len();
        self.knots.partition_point(|&k| k <= x).clamp(1, n - 1) - 1
    }

    fn value_on(&self, i: usize, x: f64) -> f64 {
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let h = x1 - x0;
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        let (g0, g1) = (self.values[i], self.values[i + 1]);
        let (a, b) = (x1 - x, x - x0);
        m0 * a.powi(3) / (6.0 * h)
            + m1 * b.powi(3) / (6.0 * h)
            + (g0 / h - m0 * h / 6.0) * a
            + (g1 / h - m1 * h / 6.0) * b
    }

    fn derivative_on(&self, i: usize, x: f64) -> f64 {
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let h = x1 - x0;
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        let (g0, g1) = (self.values[i], self.values[i + 1]);
        let (a, b) = (x1 - x, x - x0);
        -m0 * a * a / (2.0 * h) + m1 * b * b / (2.0 * h) - (g0 / h - m0 * h / 6.0)
            + (g1 / h - m1 * h / 6.0)
    }

    /// Spline value; linear continuation outside the knot range.
    pub fn value(&self, x: f64) -> f64 {
        let n = self.knots.len();
        if n == 1 {
            return self.values[0];
        }
        let (lo, hi) = self.range();
        if x < lo {
            return self.values[0] + (x - lo) * self.end_slope(true);
        }
        if x > hi {
            return self.values[n - 1] + (x - hi) * self.end_slope(false);
        }
        self.value_on(self.interval(x), x)
    }

    /// First derivative; constant outside the knot range.
    pub fn derivative(&self, x: f64) -> f64 {
        let n = self.knots.len();
        if n == 1 {
            return 0.0;
        }
        let (lo, hi) = self.range();
        if x <= lo {
            return self.end_slope(true);
        }
        if x >= hi {
            return self.end_slope(false);
        }
        self.derivative_on(self.interval(x), x)
    }

    /// Roughness penalty `integral f''^2` of the fitted curve.
    pub fn roughness(&self) -> f64 {
        self.knots
            .windows(2)
            .enumerate()
            .map(|(i, k)| {
                let h = k[1] - k[0];
                let (m0, m1) = (self.second[i], self.second[i + 1]);
                h / 3.0 * (m0 * m0 + m0 * m1 + m1 * m1)
            })
            .sum()
    }
}
