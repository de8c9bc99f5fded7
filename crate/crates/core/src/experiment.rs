//! End-to-end replication: simulate, survey, estimate, tabulate.
//!
//! One population is simulated per seed and reused across all survey sizes.
//! Every `(seed, n)` cell is independent and runs on the rayon pool; results
//! are assembled in grid order so outputs do not depend on the pool size.

use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cohort::{simulate_population, Population, Window};
use crate::error::{MrrError, Result};
use crate::estimators::{
    assemble_table, EstimationSettings, IncidenceFit, KnownInputs, MrrTable, PrevalenceCurve,
    Scenario, SplineControl, SurveyEstimates, DEFAULT_AGES,
};
use crate::mortality::MortalityTable;
use crate::prevalence_oracle::PrevalenceOracle;
use crate::rate_model::{RateSet, MAX_AGE};
use crate::survey::draw_survey;

pub const DEFAULT_SAMPLE_SIZES: [usize; 6] = [5_000, 10_000, 20_000, 50_000, 100_000, 200_000];

/// Source of the general mortality fed to the plug-in formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuSource {
    /// `pi mu1 + (1 - pi) mu0` with the analytic prevalence.
    #[default]
    Oracle,
    /// Observed death rates of the simulated population in 1-band steps.
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub rates: RateSet,
    pub population_size: usize,
    pub birth_window: Window,
    pub survey_window: Window,
    pub sample_size_grid: Vec<usize>,
    pub band_width: f64,
    pub spline: SplineControl,
    pub age_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub scenarios: Vec<Scenario>,
    pub mu_source: MuSource,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            rates: RateSet::long_term_care(),
            population_size: 500_000,
            birth_window: Window::new(1880.0, 2000.0),
            survey_window: Window::new(1990.0, 2000.0),
            sample_size_grid: DEFAULT_SAMPLE_SIZES.to_vec(),
            band_width: 1.0,
            spline: SplineControl::default(),
            age_grid: DEFAULT_AGES.to_vec(),
            seeds: vec![1],
            output_dir: PathBuf::from("out"),
            scenarios: Scenario::ALL.to_vec(),
            mu_source: MuSource::Oracle,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| MrrError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MrrError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MrrError::Config(msg));
        self.rates.validate()?;
        if self.population_size == 0 {
            return bad("population_size must be positive".into());
        }
        self.birth_window.validate("birth")?;
        self.survey_window.validate("survey")?;
        if self.sample_size_grid.is_empty() || self.sample_size_grid.contains(&0) {
            return bad("sample_size_grid must hold positive sizes".into());
        }
        if !(self.band_width > 0.0 && self.band_width.is_finite()) {
            return bad(format!(
                "band_width must be positive, got {}",
                self.band_width
            ));
        }
        if let Some(l) = self.spline.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("spline.lambda must be non-negative, got {l}"));
            }
        }
        if self.age_grid.is_empty() || self.age_grid.iter().any(|a| !(0.0..=MAX_AGE).contains(a)) {
            return bad(format!(
                "age_grid must be non-empty and within [0, {MAX_AGE}]"
            ));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.scenarios.is_empty() {
            return bad("at least one scenario is required".into());
        }
        Ok(())
    }

    pub fn settings(&self) -> EstimationSettings {
        EstimationSettings {
            band_width: self.band_width,
            spline: self.spline,
        }
    }

    /// SHA-256 over everything that influences results (the output location does not).
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&canonical).expect("config serializes"));
        hex::encode(hasher.finalize())
    }
}

/// Estimates for one survey size under one seed.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub n: usize,
    pub incidence: IncidenceFit,
    pub prevalence: PrevalenceCurve,
    pub tables: Vec<MrrTable>,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub population_digest: String,
    /// `(age, fraction diseased among those alive at that exact age)` at whole years.
    pub population_prevalence: Vec<(f64, Option<f64>)>,
    pub cells: Vec<CellRun>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub version: &'static str,
    pub oracle: PrevalenceOracle,
    pub seeds: Vec<SeedRun>,
}

fn run_cell(
    config: &ExperimentConfig,
    pop: &Population,
    oracle: &PrevalenceOracle,
    mu_at: &(dyn Fn(f64) -> f64 + Sync),
    seed: u64,
    n: usize,
) -> Result<CellRun> {
    let ctx = |e: MrrError, what: &str| e.context(format!("seed {seed}, n {n}: {what}"));
    let survey = draw_survey(pop, n, config.survey_window, seed).map_err(|e| ctx(e, "survey"))?;
    let estimates = SurveyEstimates::from_survey(&survey, &config.settings(), &Scenario::ALL)
        .map_err(|e| ctx(e, "estimation"))?;
    let known = KnownInputs {
        oracle: Some(oracle),
        true_rates: Some(&config.rates),
    };
    let tables = config
        .scenarios
        .iter()
        .map(|&scenario| {
            assemble_table(scenario, &estimates, known, mu_at, &config.age_grid)
                .map_err(|e| ctx(e, scenario.name()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CellRun {
        n,
        incidence: estimates.incidence.expect("all scenarios requested"),
        prevalence: estimates.prevalence.expect("all scenarios requested"),
        tables,
    })
}

pub fn run_replication(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let oracle = PrevalenceOracle::for_rates(&config.rates)?;
    let mut seeds = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        info!(
            "seed {seed}: simulating {} subjects",
            config.population_size
        );
        let pop = simulate_population(
            &config.rates,
            config.population_size,
            config.birth_window,
            seed,
        )
        .map_err(|e| e.context(format!("seed {seed}: population")))?;
        let empirical = match config.mu_source {
            MuSource::Oracle => None,
            MuSource::Empirical => Some(pop.empirical_mortality(config.band_width)?),
        };
        let mu_at = |a: f64| match &empirical {
            Some(table) => table.mu_at(a),
            None => oracle.general_mortality_at(a).unwrap_or(f64::NAN),
        };
        let cells = config
            .sample_size_grid
            .par_iter()
            .map(|&n| run_cell(config, &pop, &oracle, &mu_at, seed, n))
            .collect::<Result<Vec<_>>>()?;
        let population_prevalence = (0..=MAX_AGE as usize)
            .map(|k| (k as f64, pop.prevalence_at_age(k as f64)))
            .collect();
        seeds.push(SeedRun {
            seed,
            population_digest: pop.digest(),
            population_prevalence,
            cells,
        });
    }
    Ok(RunReport {
        config: config.clone(),
        config_hash: config.hash(),
        version: env!("CARGO_PKG_VERSION"),
        oracle,
        seeds,
    })
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(crate) fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| MrrError::io(path, e))
}

/// Writes `n,beta0,se0,beta1,se1`.
pub fn write_table2(path: &Path, rows: &[(usize, IncidenceFit)]) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| MrrError::io(path, e);
    writeln!(out, "n,beta0,se0,beta1,se1").map_err(io)?;
    for (n, f) in rows {
        writeln!(out, "{n},{},{},{},{}", f.beta0, f.se0, f.beta1, f.se1).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// One row of `table3.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table3Row {
    pub scenario: Scenario,
    pub age: f64,
    pub n: usize,
    pub r_hat: Option<f64>,
    pub r_true: Option<f64>,
}

/// Writes `scenario,age,n,r_hat,r_true`; non-estimable cells leave `r_hat` empty.
pub fn write_table3(path: &Path, rows: &[Table3Row]) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| MrrError::io(path, e);
    writeln!(out, "scenario,age,n,r_hat,r_true").map_err(io)?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.scenario,
            r.age,
            r.n,
            fmt_opt(r.r_hat),
            fmt_opt(r.r_true)
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

impl Table3Row {
    /// Flattens one scenario's table for sample size `n`.
    pub fn from_table(table: &MrrTable, n: usize) -> Vec<Self> {
        table
            .rows
            .iter()
            .map(|r| Self {
                scenario: table.scenario,
                age: r.age,
                n,
                r_hat: r.r_hat.as_ref().ok().copied(),
                r_true: r.r_true,
            })
            .collect()
    }
}

impl RunReport {
    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    /// Table rows for one seed, ordered by scenario, age, then sample size.
    pub fn table3_for(&self, seed: &SeedRun) -> Vec<Table3Row> {
        self.table3_with(|scenario, age_index, cell_index| {
            let cell = &seed.cells[cell_index];
            let table = cell.tables.iter().find(|t| t.scenario == scenario)?;
            table.rows[age_index].r_hat.as_ref().ok().copied()
        })
    }

    /// Per-cell medians over seeds of the estimable ratios.
    pub fn table3_median(&self) -> Vec<Table3Row> {
        self.table3_with(|scenario, age_index, cell_index| {
            let mut values: Vec<f64> = self
                .seeds
                .iter()
                .filter_map(|s| {
                    let table = s.cells[cell_index]
                        .tables
                        .iter()
                        .find(|t| t.scenario == scenario)?;
                    table.rows[age_index].r_hat.as_ref().ok().copied()
                })
                .collect();
            median(&mut values)
        })
    }

    fn table3_with(
        &self,
        estimate: impl Fn(Scenario, usize, usize) -> Option<f64>,
    ) -> Vec<Table3Row> {
        let mut rows = Vec::new();
        for &scenario in &self.config.scenarios {
            for (ai, &age) in self.config.age_grid.iter().enumerate() {
                for (ci, &n) in self.config.sample_size_grid.iter().enumerate() {
                    rows.push(Table3Row {
                        scenario,
                        age,
                        n,
                        r_hat: estimate(scenario, ai, ci),
                        r_true: Some(self.config.rates.true_mrr(age)),
                    });
                }
            }
        }
        rows
    }

    pub fn table2_for(&self, seed: &SeedRun) -> Vec<(usize, IncidenceFit)> {
        seed.cells.iter().map(|c| (c.n, c.incidence)).collect()
    }

    /// Component-wise medians over seeds.
    pub fn table2_median(&self) -> Vec<(usize, IncidenceFit)> {
        self.config
            .sample_size_grid
            .iter()
            .enumerate()
            .map(|(ci, &n)| {
                let pick = |f: fn(&IncidenceFit) -> f64| {
                    let mut v: Vec<f64> = self
                        .seeds
                        .iter()
                        .map(|s| f(&s.cells[ci].incidence))
                        .collect();
                    median(&mut v).unwrap_or(f64::NAN)
                };
                let fit = IncidenceFit {
                    beta0: pick(|f| f.beta0),
                    beta1: pick(|f| f.beta1),
                    se0: pick(|f| f.se0),
                    se1: pick(|f| f.se1),
                    converged: self.seeds.iter().all(|s| s.cells[ci].incidence.converged),
                    iterations: self
                        .seeds
                        .iter()
                        .map(|s| s.cells[ci].incidence.iterations)
                        .max()
                        .unwrap_or(0),
                    deviance: pick(|f| f.deviance),
                };
                (n, fit)
            })
            .collect()
    }

    fn write_prevalence(&self, path: &Path) -> Result<()> {
        let mut out = create(path)?;
        let io = |e| MrrError::io(path, e);
        writeln!(out, "seed,n,age_lo,age_hi,alive,diseased,pi_band,pi_spline,dpi_spline,pi_true,low_information")
            .map_err(io)?;
        for s in &self.seeds {
            for c in &s.cells {
                for b in &c.prevalence.bands {
                    let center = b.center();
                    let truth = self.oracle.prevalence_at(center).ok();
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{},{},{}",
                        s.seed,
                        c.n,
                        b.age_lo,
                        b.age_hi,
                        b.alive,
                        b.diseased,
                        b.estimate(),
                        c.prevalence.value_at(center),
                        c.prevalence.derivative_at(center),
                        fmt_opt(truth),
                        u8::from(b.low_information)
                    )
                    .map_err(io)?;
                }
            }
        }
        out.flush().map_err(io)
    }

    fn write_provenance(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct SeedProvenance<'a> {
            seed: u64,
            population_digest: &'a str,
        }
        #[derive(Serialize)]
        struct Provenance<'a> {
            version: &'a str,
            config_hash: &'a str,
            config: &'a ExperimentConfig,
            seeds: Vec<SeedProvenance<'a>>,
        }
        let p = Provenance {
            version: self.version,
            config_hash: &self.config_hash,
            config: &self.config,
            seeds: self
                .seeds
                .iter()
                .map(|s| SeedProvenance {
                    seed: s.seed,
                    population_digest: &s.population_digest,
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&p).expect("provenance serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| MrrError::io(path, e))
    }

    /// Writes the tables, prevalence estimates, oracle curve and provenance.
    /// Returns the paths written.
    pub fn write_outputs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| MrrError::io(dir, e))?;
        let mut written = Vec::new();
        let mut emit = |name: &str, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
            let path = dir.join(name);
            f(&path)?;
            written.push(path);
            Ok(())
        };
        emit("table2.csv", &|p| write_table2(p, &self.table2_median()))?;
        emit("table3.csv", &|p| write_table3(p, &self.table3_median()))?;
        emit("prevalence.csv", &|p| self.write_prevalence(p))?;
        emit("oracle.csv", &|p| self.oracle.write_csv(p, 0.1))?;
        emit("provenance.json", &|p| self.write_provenance(p))?;
        for s in &self.seeds {
            let sub = format!("seeds/{}", s.seed);
            std::fs::create_dir_all(dir.join(&sub)).map_err(|e| MrrError::io(dir.join(&sub), e))?;
            emit(&format!("{sub}/table2.csv"), &|p| {
                write_table2(p, &self.table2_for(s))
            })?;
            emit(&format!("{sub}/table3.csv"), &|p| {
                write_table3(p, &self.table3_for(s))
            })?;
        }
        Ok(written)
    }
}

/// Tabulated oracle general mortality at band centers, for export as `mortality.csv`.
pub fn oracle_mortality_table(
    oracle: &PrevalenceOracle,
    band_width: f64,
) -> Result<MortalityTable> {
    let bands = (oracle.max_age() / band_width).floor() as usize;
    MortalityTable::from_fn((0..bands).map(|k| (k as f64 + 0.5) * band_width), |a| {
        oracle.general_mortality_at(a).unwrap_or(f64::NAN)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate_model::GompertzRate;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            population_size: 40_000,
            sample_size_grid: vec![5_000, 20_000],
            seeds: vec![3],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn default_config_round_trips_through_toml() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_rates_keep_remaining_defaults() {
        let c =
            ExperimentConfig::from_toml_str("[rates.incidence]\nc0 = -9.0\nc1 = 0.08\n").unwrap();
        assert_eq!(c.rates.incidence, GompertzRate::new(-9.0, 0.08));
        assert_eq!(
            c.rates.mortality_healthy,
            RateSet::long_term_care().mortality_healthy
        );
        assert!(ExperimentConfig::from_toml_str("[rates.incidence]\nc0 = -9.0\n").is_err());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_toml_str("population_sise = 10").is_err());
        assert!(ExperimentConfig::from_toml_str("population_size = 0").is_err());
        assert!(ExperimentConfig::from_toml_str("birth_window = [1950.0, 1900.0]").is_err());
        assert!(ExperimentConfig::from_toml_str("sample_size_grid = []").is_err());
        assert!(ExperimentConfig::from_toml_str("age_grid = [120.0]").is_err());
        let c = ExperimentConfig::from_toml_str(
            "population_size = 1000\nseeds = [4, 5]\nmu_source = \"empirical\"",
        )
        .unwrap();
        assert_eq!(
            (c.population_size, c.seeds.clone(), c.mu_source),
            (1000, vec![4, 5], MuSource::Empirical)
        );
    }

    #[test]
    fn zero_population_is_rejected_before_work() {
        let c = ExperimentConfig {
            population_size: 0,
            ..small()
        };
        assert!(matches!(run_replication(&c), Err(MrrError::Config(_))));
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = small();
        let b = ExperimentConfig {
            output_dir: "elsewhere".into(),
            ..small()
        };
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig {
            seeds: vec![4],
            ..small()
        };
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn small_run_produces_full_grid() {
        let report = run_replication(&small()).unwrap();
        assert_eq!(report.seeds.len(), 1);
        assert_eq!(report.seeds[0].cells.len(), 2);
        let rows = report.table3_median();
        assert_eq!(rows.len(), 3 * 7 * 2);
        let dir = tempfile::tempdir().unwrap();
        let written = report.write_outputs(dir.path()).unwrap();
        assert!(written.iter().all(|p| p.exists()));
        let t2 = std::fs::read_to_string(dir.path().join("table2.csv")).unwrap();
        assert!(t2.starts_with("n,beta0,se0,beta1,se1\n5000,"));
        assert_eq!(t2.lines().count(), 3);
    }

    #[test]
    fn empirical_mortality_source_runs() {
        let c = ExperimentConfig {
            mu_source: MuSource::Empirical,
            scenarios: vec![Scenario::LambdaEstimated],
            ..small()
        };
        let report = run_replication(&c).unwrap();
        let table = &report.seeds[0].cells[1].tables[0];
        assert_eq!(table.scenario, Scenario::LambdaEstimated);
        assert!(table.rows.iter().any(|r| r.r_hat.is_ok()));
    }
}
