//! `mrr`: simulate an illness-death population, survey it, and estimate the
//! mortality rate ratio of the diseased from current-status data with
//! duration. Every verb reads and writes plain CSV so the stages can be run
//! separately, and externally collected survey data can enter at `estimate`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use mrr_core::estimators::{assemble_table, KnownInputs, Scenario, SurveyEstimates};
use mrr_core::experiment::{oracle_mortality_table, write_table2, write_table3, Table3Row};
use mrr_core::{
    draw_survey, emit_plots, run_replication, simulate_population, ExperimentConfig,
    MortalityTable, MuSource, Population, PrevalenceOracle, Survey,
};

#[derive(Parser)]
#[command(
    name = "mrr",
    version,
    about = "Mortality rate ratio estimation from current status data with duration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a population from birth to death.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Number of subjects, overriding the configuration.
        #[arg(long)]
        size: Option<usize>,
    },
    /// Draw cross-sectional surveys from a simulated population.
    Survey {
        #[command(flatten)]
        common: Common,
        /// Population CSV written by `simulate`.
        #[arg(long)]
        population: PathBuf,
    },
    /// Estimate incidence, prevalence and the rate ratio from survey records.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Survey records with columns t,a,delta,d.
        #[arg(long)]
        quadruples: PathBuf,
        /// General mortality with columns age,mu. Computed from the configured rates when omitted.
        #[arg(long)]
        mortality: Option<PathBuf>,
        /// Do not use the configured rates as ground truth (for real data).
        #[arg(long)]
        no_truth: bool,
    },
    /// Run the full simulate, survey, estimate pipeline over seeds and sample sizes.
    Replicate {
        #[command(flatten)]
        common: Common,
        /// Also write the figures.
        #[arg(long)]
        plots: bool,
    },
    /// Run the pipeline and write only the figures and their data.
    Plot {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds, comma separated.
    #[arg(long = "seed", value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scenarios, comma separated: lambda_estimated, pi_estimated, both_estimated.
    #[arg(long = "scenario", value_delimiter = ',')]
    scenarios: Vec<Scenario>,
    /// Survey sizes, comma separated.
    #[arg(long = "n", value_delimiter = ',')]
    sizes: Vec<usize>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::from_path(path)?,
            None => ExperimentConfig::default(),
        };
        if !self.seeds.is_empty() {
            config.seeds = self.seeds.clone();
        }
        if !self.scenarios.is_empty() {
            config.scenarios = self.scenarios.clone();
        }
        if !self.sizes.is_empty() {
            config.sample_size_grid = self.sizes.clone();
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

fn single_seed(config: &ExperimentConfig, verb: &str) -> Result<u64> {
    match config.seeds.as_slice() {
        [seed] => Ok(*seed),
        seeds => bail!("{verb} takes exactly one seed, got {}", seeds.len()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn simulate(config: &ExperimentConfig) -> Result<()> {
    let seed = single_seed(config, "simulate")?;
    let pop = simulate_population(
        &config.rates,
        config.population_size,
        config.birth_window,
        seed,
    )?;
    let dir = &config.output_dir;
    create_dir(dir)?;
    pop.write_csv(&dir.join("population.csv"))?;
    let mortality = match config.mu_source {
        MuSource::Oracle => oracle_mortality_table(
            &PrevalenceOracle::for_rates(&config.rates)?,
            config.band_width,
        )?,
        MuSource::Empirical => pop.empirical_mortality(config.band_width)?,
    };
    mortality.write_csv(&dir.join("mortality.csv"))?;
    println!("{} subjects, digest {}", pop.len(), pop.digest());
    Ok(())
}

fn survey(config: &ExperimentConfig, population: &Path) -> Result<()> {
    let seed = single_seed(config, "survey")?;
    let pop = Population::read_csv(population, seed, config.rates)?;
    let dir = &config.output_dir;
    create_dir(dir)?;
    let single = config.sample_size_grid.len() == 1;
    for &n in &config.sample_size_grid {
        let survey = draw_survey(&pop, n, config.survey_window, seed)
            .with_context(|| format!("survey of {n}"))?;
        let name = if single {
            "quadruples.csv".to_string()
        } else {
            format!("quadruples_{n}.csv")
        };
        let path = dir.join(name);
        survey.write_csv(&path)?;
        info!("wrote {}", path.display());
    }
    Ok(())
}

fn estimate(
    config: &ExperimentConfig,
    quadruples: &Path,
    mortality: Option<&Path>,
    no_truth: bool,
) -> Result<()> {
    let survey = Survey::read_csv(quadruples)?;
    let oracle = PrevalenceOracle::for_rates(&config.rates)?;
    let table = match mortality {
        Some(path) => MortalityTable::read_csv(path)?,
        None if no_truth => bail!("--no-truth needs an explicit --mortality table"),
        None => oracle_mortality_table(&oracle, config.band_width)?,
    };
    let known = if no_truth {
        KnownInputs::default()
    } else {
        KnownInputs {
            oracle: Some(&oracle),
            true_rates: Some(&config.rates),
        }
    };
    let estimates = SurveyEstimates::from_survey(&survey, &config.settings(), &config.scenarios)?;
    let mu_at = |a: f64| table.mu_at(a);
    let mut rows = Vec::new();
    for &scenario in &config.scenarios {
        let t = assemble_table(scenario, &estimates, known, &mu_at, &config.age_grid)
            .with_context(|| format!("scenario {scenario}"))?;
        rows.extend(Table3Row::from_table(&t, survey.n()));
    }

    let dir = &config.output_dir;
    create_dir(dir)?;
    write_table3(&dir.join("table3.csv"), &rows)?;
    if let Some(fit) = estimates.incidence {
        write_table2(&dir.join("table2.csv"), &[(survey.n(), fit)])?;
        println!(
            "incidence: beta0 {:.5} ({:.5}), beta1 {:.6} ({:.6})",
            fit.beta0, fit.se0, fit.beta1, fit.se1
        );
    }
    for r in &rows {
        let shown = r
            .r_hat
            .map_or_else(|| "not estimable".to_string(), |v| format!("{v:.3}"));
        println!("{:<17} age {:>5}: {shown}", r.scenario.to_string(), r.age);
    }
    Ok(())
}

fn replicate(config: &ExperimentConfig, plots: bool) -> Result<()> {
    let report = run_replication(config)?;
    let written = report.write_outputs(&config.output_dir)?;
    info!("wrote {} table files", written.len());
    if plots {
        let figures = emit_plots(&report, &config.output_dir)?;
        info!("wrote {} figure files", figures.len());
    }
    println!("config {}", report.config_hash);
    for (n, fit) in report.table2_median() {
        println!(
            "n {n:>7}: beta0 {:.5} ({:.5}) beta1 {:.6} ({:.6})",
            fit.beta0, fit.se0, fit.beta1, fit.se1
        );
    }
    Ok(())
}

fn plot(config: &ExperimentConfig) -> Result<()> {
    let report = run_replication(config)?;
    for path in emit_plots(&report, &config.output_dir)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { common, size } => {
            let mut config = common.config()?;
            if let Some(size) = size {
                config.population_size = size;
                config.validate()?;
            }
            simulate(&config)
        }
        Command::Survey { common, population } => survey(&common.config()?, &population),
        Command::Estimate {
            common,
            quadruples,
            mortality,
            no_truth,
        } => estimate(
            &common.config()?,
            &quadruples,
            mortality.as_deref(),
            no_truth,
        ),
        Command::Replicate { common, plots } => replicate(&common.config()?, plots),
        Command::Plot { common } => plot(&common.config()?),
    }
}
