//! Birth-to-death simulation of a closed cohort through the illness-death model.
//!
//! Transition ages are drawn by inverting the Gompertz cumulative hazard.
//! Every subject owns an RNG stream keyed by `(seed, subject index)`, which
//! makes a population bit-identical regardless of the rayon pool size.

use std::io::Write;
use std::path::Path;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{MrrError, Result};
use crate::mortality::MortalityTable;
use crate::rate_model::{GompertzRate, RateSet, MAX_AGE};
use crate::rng::{self, Domain};

/// Calendar window `[start, end]` in years; serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl From<[f64; 2]> for Window {
    fn from([start, end]: [f64; 2]) -> Self {
        Self { start, end }
    }
}

impl From<Window> for [f64; 2] {
    fn from(w: Window) -> Self {
        [w.start, w.end]
    }
}

impl Window {
    pub const fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        if self.start.is_finite() && self.end.is_finite() && self.start < self.end {
            Ok(())
        } else {
            Err(MrrError::InvalidArgument(format!(
                "{what} window [{}, {}] is not well ordered",
                self.start, self.end
            )))
        }
    }

    #[inline]
    pub fn lerp(&self, u: f64) -> f64 {
        self.start + (self.end - self.start) * u
    }
}

/// One simulated life.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifePath {
    pub birth_time: f64,
    pub onset_age: Option<f64>,
    pub death_age: f64,
}

impl LifePath {
    #[inline]
    pub fn is_alive_at_time(&self, t: f64) -> bool {
        self.birth_time <= t && t < self.birth_time + self.death_age
    }

    #[inline]
    pub fn is_diseased_at_age(&self, age: f64) -> bool {
        matches!(self.onset_age, Some(onset) if onset <= age)
    }
}

/// Age at which a Gompertz event happens for a subject event-free at `start_age`.
///
/// `u` is the survival quantile; the unit exponential deviate is `E = -ln(u)`.
/// Returns `f64::INFINITY` when the hazard never accumulates `E` (zero or
/// decreasing hazards). Callers apply the age horizon.
pub fn sample_gompertz_event_age(rate: &GompertzRate, start_age: f64, u: f64) -> Result<f64> {
    if !(start_age >= 0.0 && start_age.is_finite()) {
        return Err(MrrError::InvalidArgument(format!(
            "start age must be finite and non-negative, got {start_age}"
        )));
    }
    if !(u > 0.0 && u <= 1.0) {
        return Err(MrrError::InvalidArgument(format!(
            "survival quantile must lie in (0, 1], got {u}"
        )));
    }
    let e = -u.ln();
    if e == 0.0 {
        return Ok(start_age);
    }
    let base = rate.rate_at(start_age);
    if base == 0.0 {
        return Ok(f64::INFINITY);
    }
    if rate.c1.abs() < 1e-12 {
        return Ok(start_age + e / base);
    }
    // a = s + ln(1 + c1 E / rate(s)) / c1, equivalent to
    // (1/c1) ln(exp(c1 s) + c1 exp(-c0) E) with better rounding
    let arg = rate.c1 * e / base;
    if arg <= -1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(start_age + arg.ln_1p() / rate.c1)
}

fn truncated(age: f64) -> f64 {
    age.min(MAX_AGE)
}

/// Draws one life from age 0 on its own stream.
pub fn simulate_subject(rates: &RateSet, birth_time: f64, rng: &mut impl RngCore) -> LifePath {
    let onset = sample_gompertz_event_age(&rates.incidence, 0.0, rng::open_unit(rng))
        .expect("open unit quantile");
    let healthy_death =
        sample_gompertz_event_age(&rates.mortality_healthy, 0.0, rng::open_unit(rng))
            .expect("open unit quantile");

    if onset < healthy_death && onset < MAX_AGE {
        let death =
            sample_gompertz_event_age(&rates.mortality_diseased, onset, rng::open_unit(rng))
                .expect("open unit quantile");
        let mut death = truncated(death);
        if death <= onset {
            death = onset.next_up();
        }
        LifePath {
            birth_time,
            onset_age: Some(onset),
            death_age: death,
        }
    } else {
        LifePath {
            birth_time,
            onset_age: None,
            death_age: truncated(healthy_death),
        }
    }
}

/// A simulated closed cohort.
#[derive(Debug, Clone)]
pub struct Population {
    pub paths: Vec<LifePath>,
    pub seed: u64,
    pub rates: RateSet,
    pub birth_window: Window,
}

pub fn simulate_population(
    rates: &RateSet,
    n: usize,
    birth_window: Window,
    seed: u64,
) -> Result<Population> {
    if n == 0 {
        return Err(MrrError::InvalidArgument(
            "population size must be at least 1".into(),
        ));
    }
    birth_window.validate("birth")?;
    let paths = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, Domain::Population, 0, i);
            let birth = birth_window.lerp(rng::open_unit(&mut rng));
            simulate_subject(rates, birth, &mut rng)
        })
        .collect();
    Ok(Population {
        paths,
        seed,
        rates: *rates,
        birth_window,
    })
}

/// Person-time in one age band of the population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandExposure {
    pub age_lo: f64,
    pub age_hi: f64,
    pub alive_years: f64,
    pub diseased_years: f64,
    pub deaths: u64,
}

impl BandExposure {
    pub fn center(&self) -> f64 {
        0.5 * (self.age_lo + self.age_hi)
    }

    pub fn prevalence(&self) -> Option<f64> {
        (self.alive_years > 0.0).then(|| self.diseased_years / self.alive_years)
    }

    pub fn death_rate(&self) -> Option<f64> {
        (self.alive_years > 0.0).then(|| self.deaths as f64 / self.alive_years)
    }
}

/// Adds the length of `[from, to)` falling into each band of width `w`.
fn spread_interval(acc: &mut [f64], from: f64, to: f64, w: f64) {
    if to <= from {
        return;
    }
    let last = acc.len() - 1;
    let first_band = ((from / w).floor() as usize).min(last);
    let last_band = ((to / w).floor() as usize).min(last);
    if first_band == last_band {
        acc[first_band] += to - from;
        return;
    }
    acc[first_band] += (first_band + 1) as f64 * w - from;
    for cell in &mut acc[first_band + 1..last_band] {
        *cell += w;
    }
    acc[last_band] += to - last_band as f64 * w;
}

impl Population {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Fraction diseased among subjects alive at exact `age`.
    pub fn prevalence_at_age(&self, age: f64) -> Option<f64> {
        let mut alive = 0u64;
        let mut diseased = 0u64;
        for p in &self.paths {
            if p.death_age > age {
                alive += 1;
                if p.is_diseased_at_age(age) {
                    diseased += 1;
                }
            }
        }
        (alive > 0).then(|| diseased as f64 / alive as f64)
    }

    /// Person-time, diseased person-time and deaths per age band on `[0, MAX_AGE)`.
    pub fn band_exposure(&self, band_width: f64) -> Result<Vec<BandExposure>> {
        if band_width.is_nan() || band_width <= 0.0 {
            return Err(MrrError::InvalidArgument(format!(
                "band width must be positive, got {band_width}"
            )));
        }
        let bands = (MAX_AGE / band_width).ceil() as usize;
        let mut alive = vec![0.0; bands];
        let mut diseased = vec![0.0; bands];
        let mut deaths = vec![0u64; bands];
        for p in &self.paths {
            spread_interval(&mut alive, 0.0, p.death_age, band_width);
            if let Some(onset) = p.onset_age {
                spread_interval(&mut diseased, onset, p.death_age, band_width);
            }
            let k = ((p.death_age / band_width).floor() as usize).min(bands - 1);
            deaths[k] += 1;
        }
        Ok((0..bands)
            .map(|k| BandExposure {
                age_lo: k as f64 * band_width,
                age_hi: ((k + 1) as f64 * band_width).min(MAX_AGE),
                alive_years: alive[k],
                diseased_years: diseased[k],
                deaths: deaths[k],
            })
            .collect())
    }

    /// Observed death rates per band, usable as the general mortality input.
    pub fn empirical_mortality(&self, band_width: f64) -> Result<MortalityTable> {
        let points = self
            .band_exposure(band_width)?
            .into_iter()
            .filter_map(|b| b.death_rate().filter(|m| *m > 0.0).map(|m| (b.center(), m)))
            .collect();
        MortalityTable::new(points)
    }

    fn write_rows(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "subject_id,birth_time,onset_age,death_age")?;
        for (i, p) in self.paths.iter().enumerate() {
            match p.onset_age {
                Some(onset) => writeln!(out, "{i},{},{onset},{}", p.birth_time, p.death_age)?,
                None => writeln!(out, "{i},{},,{}", p.birth_time, p.death_age)?,
            }
        }
        Ok(())
    }

    /// Canonical serialization: the population CSV.
    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.paths.len() * 48);
        self.write_rows(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_csv_bytes());
        hex::encode(hasher.finalize())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| MrrError::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_rows(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| MrrError::io(path, e))
    }

    /// Reads a population dump. Seed and rates are not part of the file and
    /// must be supplied by the caller.
    pub fn read_csv(path: &Path, seed: u64, rates: RateSet) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            #[allow(dead_code)]
            subject_id: u64,
            birth_time: f64,
            onset_age: Option<f64>,
            death_age: f64,
        }
        let mut reader = csv::Reader::from_path(path).map_err(|e| MrrError::csv(path, e))?;
        let mut paths = Vec::new();
        for row in reader.deserialize() {
            let row: Row = row.map_err(|e| MrrError::csv(path, e))?;
            let p = LifePath {
                birth_time: row.birth_time,
                onset_age: row.onset_age,
                death_age: row.death_age,
            };
            if p.death_age.is_nan()
                || p.death_age <= 0.0
                || p.onset_age
                    .is_some_and(|o| o.is_nan() || o <= 0.0 || o >= p.death_age)
            {
                return Err(MrrError::InvalidArgument(format!(
                    "row {} of {} violates 0 < onset < death",
                    paths.len(),
                    path.display()
                )));
            }
            paths.push(p);
        }
        if paths.is_empty() {
            return Err(MrrError::InvalidArgument(format!(
                "{} holds no subjects",
                path.display()
            )));
        }
        let (lo, hi) = paths
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.birth_time), hi.max(p.birth_time))
            });
        Ok(Population {
            paths,
            seed,
            rates,
            birth_window: Window::new(lo, hi),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prevalence_oracle::PrevalenceOracle;

    #[test]
    fn zero_deviate_returns_start_age() {
        let r = GompertzRate::new(-11.0, 0.11);
        assert_eq!(sample_gompertz_event_age(&r, 42.0, 1.0).unwrap(), 42.0);
    }

    #[test]
    fn constant_rate_limit() {
        let r = GompertzRate::new((0.1f64).ln(), 0.0);
        let a = sample_gompertz_event_age(&r, 5.0, (-1.0f64).exp()).unwrap();
        assert!((a - 15.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_age_integrates_to_the_deviate() {
        let r = GompertzRate::new(-9.5, 0.095);
        for (start, u) in [(0.0, 0.3), (70.0, 0.9), (30.0, 1e-6), (85.0, 0.5)] {
            let a = sample_gompertz_event_age(&r, start, u).unwrap();
            assert!(a >= start);
            assert!((r.cumulative(start, a) + u.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_invalid_quantiles() {
        let r = GompertzRate::new(-9.5, 0.095);
        assert!(sample_gompertz_event_age(&r, 0.0, 0.0).is_err());
        assert!(sample_gompertz_event_age(&r, 0.0, 1.5).is_err());
        assert!(sample_gompertz_event_age(&r, -1.0, 0.5).is_err());
    }

    #[test]
    fn decreasing_hazard_can_never_fire() {
        let r = GompertzRate::new(-3.0, -0.5);
        // total hazard from 0 is exp(-3)/0.5 ~ 0.1, far below E = 5
        assert_eq!(
            sample_gompertz_event_age(&r, 0.0, (-5.0f64).exp()).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn zero_incidence_never_onsets() {
        let rates = RateSet {
            incidence: GompertzRate::new(f64::NEG_INFINITY, 0.085),
            ..RateSet::long_term_care()
        };
        let pop = simulate_population(&rates, 10_000, Window::new(1900.0, 1950.0), 3).unwrap();
        assert!(pop.paths.iter().all(|p| p.onset_age.is_none()));
    }

    #[test]
    fn overwhelming_mortality_kills_at_birth() {
        let rates = RateSet {
            mortality_healthy: GompertzRate::new(10.0, 0.11),
            ..RateSet::long_term_care()
        };
        let pop = simulate_population(&rates, 10_000, Window::new(1900.0, 1950.0), 3).unwrap();
        assert!(pop
            .paths
            .iter()
            .all(|p| p.onset_age.is_none() && p.death_age < 0.01));
        assert!(pop.paths.iter().all(|p| p.death_age > 0.0));
    }

    #[test]
    fn single_subject_and_rejects_empty() {
        let rates = RateSet::long_term_care();
        let w = Window::new(1900.0, 1950.0);
        assert_eq!(simulate_population(&rates, 1, w, 1).unwrap().len(), 1);
        assert!(simulate_population(&rates, 0, w, 1).is_err());
        assert!(simulate_population(&rates, 5, Window::new(1950.0, 1900.0), 1).is_err());
    }

    #[test]
    fn same_seed_same_bytes_and_invariant_to_pool_size() {
        let rates = RateSet::long_term_care();
        let w = Window::new(1900.0, 1950.0);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_population(&rates, 20_000, w, 99).unwrap())
        };
        let one = run(1);
        let four = run(4);
        assert_eq!(one.to_csv_bytes(), four.to_csv_bytes());
        assert_eq!(one.digest(), run(3).digest());
        let other = simulate_population(&rates, 20_000, w, 100).unwrap();
        assert_ne!(one.digest(), other.digest());
    }

    #[test]
    fn path_invariants_hold() {
        let pop = simulate_population(
            &RateSet::long_term_care(),
            100_000,
            Window::new(1880.0, 2000.0),
            5,
        )
        .unwrap();
        for p in &pop.paths {
            assert!(p.death_age > 0.0 && p.death_age <= MAX_AGE);
            assert!((1880.0..=2000.0).contains(&p.birth_time));
            if let Some(onset) = p.onset_age {
                assert!(onset > 0.0 && onset < p.death_age);
            }
        }
    }

    #[test]
    fn competing_risks_with_constant_rates() {
        let (lambda, mu0) = (0.02f64, 0.03f64);
        let rates = RateSet {
            incidence: GompertzRate::new(lambda.ln(), 0.0),
            mortality_healthy: GompertzRate::new(mu0.ln(), 0.0),
            mortality_diseased: GompertzRate::new((0.1f64).ln(), 0.0),
        };
        let n = 1_000_000;
        let pop = simulate_population(&rates, n, Window::new(0.0, 1.0), 8).unwrap();
        // horizon truncation at 110 affects exp(-0.05 * 110) ~ 0.4% of subjects;
        // account for it in the expected probability
        let p_event_before_horizon =
            lambda / (lambda + mu0) * (1.0 - (-(lambda + mu0) * MAX_AGE).exp());
        let freq = pop.paths.iter().filter(|p| p.onset_age.is_some()).count() as f64 / n as f64;
        let se = (p_event_before_horizon * (1.0 - p_event_before_horizon) / n as f64).sqrt();
        assert!(
            (freq - p_event_before_horizon).abs() < 3.0 * se,
            "{freq} vs {p_event_before_horizon}"
        );
    }

    #[test]
    fn diseased_fraction_at_80_matches_oracle() {
        let rates = RateSet::long_term_care();
        let pop = simulate_population(&rates, 500_000, Window::new(1900.0, 1950.0), 2024).unwrap();
        let oracle = PrevalenceOracle::for_rates(&rates).unwrap();
        let empirical = pop.prevalence_at_age(80.0).unwrap();
        let expected = oracle.prevalence_at(80.0).unwrap();
        assert!(
            (empirical - expected).abs() < 0.01,
            "{empirical} vs {expected}"
        );
    }

    #[test]
    fn band_exposure_accounts_for_all_time() {
        let pop = simulate_population(
            &RateSet::long_term_care(),
            5_000,
            Window::new(1900.0, 1950.0),
            1,
        )
        .unwrap();
        let bands = pop.band_exposure(1.0).unwrap();
        let total: f64 = bands.iter().map(|b| b.alive_years).sum();
        let expected: f64 = pop.paths.iter().map(|p| p.death_age).sum();
        assert!((total - expected).abs() < 1e-6 * expected);
        let deaths: u64 = bands.iter().map(|b| b.deaths).sum();
        assert_eq!(deaths, 5_000);
        let sick: f64 = bands.iter().map(|b| b.diseased_years).sum();
        let expected_sick: f64 = pop
            .paths
            .iter()
            .filter_map(|p| p.onset_age.map(|o| p.death_age - o))
            .sum();
        assert!((sick - expected_sick).abs() < 1e-6 * expected_sick.max(1.0));
    }

    #[test]
    fn spread_interval_splits_exactly() {
        let mut acc = vec![0.0; 5];
        spread_interval(&mut acc, 0.5, 3.25, 1.0);
        assert_eq!(acc, vec![0.5, 1.0, 1.0, 0.25, 0.0]);
    }

    #[test]
    fn csv_round_trip() {
        let pop = simulate_population(
            &RateSet::long_term_care(),
            500,
            Window::new(1900.0, 1950.0),
            4,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("population.csv");
        pop.write_csv(&path).unwrap();
        let back = Population::read_csv(&path, pop.seed, pop.rates).unwrap();
        assert_eq!(back.paths, pop.paths);
        assert_eq!(back.digest(), pop.digest());
    }
}
