//! Cross-sectional survey of a simulated population.
//!
//! Survey times are uniform on a calendar window; at each time one subject
//! is drawn uniformly (with replacement across times) from those alive.

use std::io::Write;
use std::path::Path;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{LifePath, Population, Window};
use crate::error::{MrrError, Result};
use crate::rng::{self, Domain};

/// Rejection attempts before falling back to an exact scan of the population.
const REJECTION_ATTEMPTS: usize = 4096;

/// Current status with duration for one participant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadruple {
    /// Survey time (calendar years).
    pub t: f64,
    /// Age at survey.
    pub a: f64,
    /// Diseased at survey.
    #[serde(with = "indicator")]
    pub delta: bool,
    /// Years since onset; zero when healthy.
    pub d: f64,
}

mod indicator {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(D::Error::custom(format!(
                "delta must be 0 or 1, got {other}"
            ))),
        }
    }
}

impl Quadruple {
    /// Record for `path` observed at calendar time `t`.
    pub fn observe(path: &LifePath, t: f64) -> Self {
        let a = t - path.birth_time;
        match path.onset_age {
            Some(onset) if onset <= a => Quadruple {
                t,
                a,
                delta: true,
                d: a - onset,
            },
            _ => Quadruple {
                t,
                a,
                delta: false,
                d: 0.0,
            },
        }
    }

    /// Age at which the participant stopped being at risk of onset.
    #[inline]
    pub fn exposure_end(&self) -> f64 {
        if self.delta {
            self.a - self.d
        } else {
            self.a
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(format!("age {} must be positive", self.a));
        }
        if !(self.d >= 0.0 && self.d <= self.a) {
            return Err(format!("duration {} must lie in [0, {}]", self.d, self.a));
        }
        if !self.delta && self.d != 0.0 {
            return Err(format!("healthy participant has duration {}", self.d));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Survey {
    pub quadruples: Vec<Quadruple>,
    /// `None` for externally supplied data.
    pub seed: Option<u64>,
}

impl Survey {
    pub fn n(&self) -> usize {
        self.quadruples.len()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| MrrError::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let io = |e| MrrError::io(path, e);
        writeln!(out, "t,a,delta,d").map_err(io)?;
        for q in &self.quadruples {
            writeln!(out, "{},{},{},{}", q.t, q.a, u8::from(q.delta), q.d).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    /// Reads `t,a,delta,d` rows, validating each record.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| MrrError::csv(path, e))?;
        let mut quadruples = Vec::new();
        for (i, row) in reader.deserialize().enumerate() {
            let q: Quadruple = row.map_err(|e| MrrError::csv(path, e))?;
            q.validate().map_err(|msg| {
                MrrError::InvalidArgument(format!("{} row {}: {msg}", path.display(), i + 1))
            })?;
            quadruples.push(q);
        }
        Ok(Survey {
            quadruples,
            seed: None,
        })
    }
}

fn draw_alive(pop: &Population, t: f64, rng: &mut impl RngCore) -> Result<usize> {
    let n = pop.paths.len() as u64;
    for _ in 0..REJECTION_ATTEMPTS {
        let j = (rng.next_u64() % n) as usize;
        if pop.paths[j].is_alive_at_time(t) {
            return Ok(j);
        }
    }
    let alive: Vec<usize> = pop
        .paths
        .iter()
        .enumerate()
        .filter_map(|(j, p)| p.is_alive_at_time(t).then_some(j))
        .collect();
    if alive.is_empty() {
        return Err(MrrError::NoneAlive(t));
    }
    Ok(alive[(rng.next_u64() % alive.len() as u64) as usize])
}

/// Draws `n` quadruples. The `salt` separates surveys of different sizes
/// drawn from one population under the same seed.
pub fn draw_survey(pop: &Population, n: usize, window: Window, seed: u64) -> Result<Survey> {
    draw_survey_salted(pop, n, window, seed, n as u64)
}

pub fn draw_survey_salted(
    pop: &Population,
    n: usize,
    window: Window,
    seed: u64,
    salt: u64,
) -> Result<Survey> {
    if n == 0 {
        return Err(MrrError::InvalidArgument(
            "survey size must be at least 1".into(),
        ));
    }
    if pop.is_empty() {
        return Err(MrrError::InvalidArgument(
            "cannot survey an empty population".into(),
        ));
    }
    window.validate("survey")?;
    let quadruples = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, Domain::Survey, salt, i);
            let t = window.lerp(rng::open_unit(&mut rng));
            let j = draw_alive(pop, t, &mut rng)?;
            Ok(Quadruple::observe(&pop.paths[j], t))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Survey {
        quadruples,
        seed: Some(seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::simulate_population;
    use crate::prevalence_oracle::PrevalenceOracle;
    use crate::rate_model::RateSet;

    fn path(birth: f64, onset: Option<f64>, death: f64) -> LifePath {
        LifePath {
            birth_time: birth,
            onset_age: onset,
            death_age: death,
        }
    }

    #[test]
    fn observe_diseased_and_healthy() {
        let q = Quadruple::observe(&path(1900.0, Some(70.0), 90.0), 1975.0);
        assert_eq!((q.a, q.delta, q.d), (75.0, true, 5.0));
        let q = Quadruple::observe(&path(1900.0, None, 90.0), 1960.0);
        assert_eq!((q.a, q.delta, q.d), (60.0, false, 0.0));
        let q = Quadruple::observe(&path(1900.0, Some(70.0), 90.0), 1965.0);
        assert_eq!((q.delta, q.d), (false, 0.0));
    }

    #[test]
    fn fails_when_nobody_is_alive() {
        let pop = Population {
            paths: vec![path(1900.0, None, 10.0)],
            seed: 0,
            rates: RateSet::long_term_care(),
            birth_window: Window::new(1900.0, 1901.0),
        };
        let err = draw_survey(&pop, 3, Window::new(1950.0, 1960.0), 1).unwrap_err();
        assert!(matches!(err, MrrError::NoneAlive(_)));
        assert!(draw_survey(&pop, 0, Window::new(1900.0, 1905.0), 1).is_err());
    }

    #[test]
    fn exact_fallback_finds_the_rare_survivor() {
        let mut paths = vec![path(1900.0, None, 1.0); 20_000];
        paths.push(path(1900.0, Some(30.0), 100.0));
        let pop = Population {
            paths,
            seed: 0,
            rates: RateSet::long_term_care(),
            birth_window: Window::new(1900.0, 1900.5),
        };
        let s = draw_survey(&pop, 10, Window::new(1950.0, 1960.0), 5).unwrap();
        assert!(s
            .quadruples
            .iter()
            .all(|q| q.delta && (q.d - (q.a - 30.0)).abs() < 1e-9));
    }

    #[test]
    fn quadruple_invariants_and_reproducibility() {
        let rates = RateSet::long_term_care();
        let pop = simulate_population(&rates, 50_000, Window::new(1880.0, 2000.0), 17).unwrap();
        let s = draw_survey(&pop, 20_000, Window::new(1990.0, 2000.0), 17).unwrap();
        assert_eq!(s.n(), 20_000);
        for q in &s.quadruples {
            assert!(q.validate().is_ok(), "{q:?}");
            assert!((1990.0..=2000.0).contains(&q.t));
        }
        assert_eq!(
            s,
            draw_survey(&pop, 20_000, Window::new(1990.0, 2000.0), 17).unwrap()
        );
    }

    /// Ages concentrated near 80: one narrow birth cohort surveyed over a
    /// short window so that band [80, 81) holds most participants.
    #[test]
    fn band_80_prevalence_matches_oracle() {
        let rates = RateSet::long_term_care();
        let pop = simulate_population(&rates, 500_000, Window::new(1900.0, 1900.5), 31).unwrap();
        let s = draw_survey(&pop, 200_000, Window::new(1980.5, 1981.0), 31).unwrap();
        let band: Vec<_> = s
            .quadruples
            .iter()
            .filter(|q| (80.0..81.0).contains(&q.a))
            .collect();
        assert!(band.len() > 50_000);
        let frac = band.iter().filter(|q| q.delta).count() as f64 / band.len() as f64;
        let oracle = PrevalenceOracle::for_rates(&rates).unwrap();
        let expected = oracle.prevalence_at(80.5).unwrap();
        assert!((frac - expected).abs() < 0.01, "{frac} vs {expected}");
    }

    /// Without excess mortality, sampling alive subjects is not informative
    /// about disease status: per-band survey prevalence equals path prevalence.
    #[test]
    fn alive_sampling_is_not_biased_by_disease() {
        let base = RateSet::long_term_care();
        let rates = RateSet {
            mortality_diseased: base.mortality_healthy,
            ..base
        };
        let pop = simulate_population(&rates, 400_000, Window::new(1880.0, 2000.0), 8).unwrap();
        let s = draw_survey(&pop, 200_000, Window::new(1990.0, 2000.0), 8).unwrap();
        for lo in [40.0, 60.0, 70.0, 80.0] {
            let band: Vec<_> = s
                .quadruples
                .iter()
                .filter(|q| (lo..lo + 1.0).contains(&q.a))
                .collect();
            let p_hat = band.iter().filter(|q| q.delta).count() as f64 / band.len() as f64;
            let p = pop.prevalence_at_age(lo + 0.5).unwrap();
            let se = (p * (1.0 - p) / band.len() as f64).sqrt();
            assert!(
                (p_hat - p).abs() < 3.0 * se.max(1e-4),
                "band {lo}: {p_hat} vs {p}"
            );
        }
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("quadruples.csv");
        let s = Survey {
            quadruples: vec![
                Quadruple {
                    t: 1985.25,
                    a: 75.5,
                    delta: true,
                    d: 5.125,
                },
                Quadruple {
                    t: 1986.0,
                    a: 40.0,
                    delta: false,
                    d: 0.0,
                },
            ],
            seed: None,
        };
        s.write_csv(&path).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "t,a,delta,d\n1985.25,75.5,1,5.125\n1986,40,0,0\n"
        );
        assert_eq!(Survey::read_csv(&path).unwrap(), s);

        std::fs::write(&path, "t,a,delta,d\n1985,10,1,12\n").unwrap();
        assert!(Survey::read_csv(&path).is_err());
        std::fs::write(&path, "t,a,delta,d\n1985,10,2,0\n").unwrap();
        assert!(Survey::read_csv(&path).is_err());
    }
}
