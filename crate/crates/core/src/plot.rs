//! SVG figures with the exact plotted values alongside as CSV.
//!
//! - `figure4`: population prevalence against the analytic curve.
//! - `figure5`: band, smoothed and true prevalence for three survey sizes.
//! - `figure6`: estimated against true ratio, one panel per scenario.
//!
//! Figures 5 and 6 show the first seed, a single realization.

use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use plotters::prelude::*;

use crate::error::{MrrError, Result};
use crate::estimators::Scenario;
use crate::experiment::{create, RunReport, SeedRun};
use crate::rate_model::MAX_AGE;

const PANEL_SIZES: [usize; 3] = [5_000, 20_000, 200_000];

fn plot_err(path: &Path, e: impl std::fmt::Display) -> MrrError {
    MrrError::io(path, std::io::Error::other(e.to_string()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// The sizes shown in figure 5: the reference sizes when present, otherwise
/// the smallest, middle and largest of the grid.
fn panel_sizes(grid: &[usize]) -> Vec<usize> {
    if PANEL_SIZES.iter().all(|n| grid.contains(n)) {
        return PANEL_SIZES.to_vec();
    }
    let mut sorted = grid.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let picks = [0, sorted.len() / 2, sorted.len() - 1];
    let mut out: Vec<usize> = picks.iter().map(|&i| sorted[i]).collect();
    out.dedup();
    out
}

fn extreme_sizes(grid: &[usize]) -> Vec<usize> {
    let lo = *grid.iter().min().expect("grid is non-empty");
    let hi = *grid.iter().max().expect("grid is non-empty");
    if lo == hi {
        vec![lo]
    } else {
        vec![lo, hi]
    }
}

fn figure4(report: &RunReport, seed: &SeedRun, dir: &Path) -> Result<[PathBuf; 2]> {
    let csv_path = dir.join("figure4.csv");
    let rows: Vec<(f64, Option<f64>, f64)> = seed
        .population_prevalence
        .iter()
        .map(|&(age, emp)| {
            (
                age,
                emp,
                report.oracle.prevalence_at(age).unwrap_or(f64::NAN),
            )
        })
        .collect();
    {
        let mut out = create(&csv_path)?;
        let io = |e| MrrError::io(&csv_path, e);
        writeln!(out, "age,pi_empirical,pi_analytic").map_err(io)?;
        for (age, emp, ana) in &rows {
            writeln!(out, "{age},{},{ana}", fmt_opt(*emp)).map_err(io)?;
        }
        out.flush().map_err(io)?;
    }

    let svg_path = dir.join("figure4.svg");
    let root = SVGBackend::new(&svg_path, (720, 480)).into_drawing_area();
    let e = |err| plot_err(&svg_path, err);
    root.fill(&WHITE).map_err(e)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(
            "Age-specific prevalence: simulated population vs analytic",
            ("sans-serif", 18),
        )
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(0f64..MAX_AGE, 0f64..1f64)
        .map_err(e)?;
    chart
        .configure_mesh()
        .x_desc("age (years)")
        .y_desc("prevalence")
        .draw()
        .map_err(e)?;
    chart
        .draw_series(LineSeries::new(
            rows.iter().map(|r| (r.0, r.2)),
            BLUE.stroke_width(2),
        ))
        .map_err(e)?
        .label("analytic")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLUE));
    chart
        .draw_series(
            rows.iter()
                .filter_map(|r| r.1.map(|p| Circle::new((r.0, p), 3, BLACK.filled()))),
        )
        .map_err(e)?
        .label("empirical")
        .legend(|(x, y)| Circle::new((x + 10, y), 3, BLACK.filled()));
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::UpperLeft)
        .draw()
        .map_err(e)?;
    root.present().map_err(e)?;
    Ok([svg_path.clone(), csv_path])
}

fn figure5(report: &RunReport, seed: &SeedRun, dir: &Path) -> Result<[PathBuf; 2]> {
    let sizes = panel_sizes(&report.config.sample_size_grid);
    let csv_path = dir.join("figure5.csv");
    // (n, age, estimated, modeled, true)
    let mut rows: Vec<(usize, f64, f64, f64, f64)> = Vec::new();
    for &n in &sizes {
        let cell = seed
            .cells
            .iter()
            .find(|c| c.n == n)
            .expect("size from grid");
        for b in &cell.prevalence.bands {
            let age = b.center();
            rows.push((
                n,
                age,
                b.estimate(),
                cell.prevalence.value_at(age),
                report.oracle.prevalence_at(age).unwrap_or(f64::NAN),
            ));
        }
    }
    {
        let mut out = create(&csv_path)?;
        let io = |e| MrrError::io(&csv_path, e);
        writeln!(out, "n,age,pi_estimated,pi_modeled,pi_true").map_err(io)?;
        for r in &rows {
            writeln!(out, "{},{},{},{},{}", r.0, r.1, r.2, r.3, r.4).map_err(io)?;
        }
        out.flush().map_err(io)?;
    }

    let svg_path = dir.join("figure5.svg");
    let root = SVGBackend::new(&svg_path, (1200, 420)).into_drawing_area();
    let e = |err| plot_err(&svg_path, err);
    root.fill(&WHITE).map_err(e)?;
    let panels = root.split_evenly((1, sizes.len()));
    for (panel, &n) in panels.iter().zip(&sizes) {
        let mut chart = ChartBuilder::on(panel)
            .caption(format!("n = {n}"), ("sans-serif", 16))
            .margin(8)
            .x_label_area_size(35)
            .y_label_area_size(45)
            .build_cartesian_2d(0f64..MAX_AGE, 0f64..1f64)
            .map_err(e)?;
        chart
            .configure_mesh()
            .x_desc("age (years)")
            .y_desc("prevalence")
            .draw()
            .map_err(e)?;
        let mut truth: Vec<(f64, f64)> = (0..=1100)
            .map(|k| k as f64 * 0.1)
            .map(|a| (a, report.oracle.prevalence_at(a).unwrap_or(f64::NAN)))
            .collect();
        truth.retain(|p| p.1.is_finite());
        chart
            .draw_series(LineSeries::new(truth, BLUE.stroke_width(2)))
            .map_err(e)?;
        let panel_rows = rows.iter().filter(|r| r.0 == n);
        chart
            .draw_series(
                panel_rows
                    .clone()
                    .map(|r| Circle::new((r.1, r.2), 3, BLACK.filled())),
            )
            .map_err(e)?;
        chart
            .draw_series(
                panel_rows
                    .filter(|r| (0.0..=1.0).contains(&r.3))
                    .map(|r| Circle::new((r.1, r.3), 4, BLACK.stroke_width(1))),
            )
            .map_err(e)?;
    }
    root.present().map_err(e)?;
    Ok([svg_path.clone(), csv_path])
}

fn figure6(report: &RunReport, seed: &SeedRun, dir: &Path) -> Result<[PathBuf; 2]> {
    let sizes = extreme_sizes(&report.config.sample_size_grid);
    let csv_path = dir.join("figure6.csv");
    // (scenario, age, n, r_hat, r_true)
    let mut rows: Vec<(Scenario, f64, usize, Option<f64>, f64)> = Vec::new();
    for &scenario in &report.config.scenarios {
        for &n in &sizes {
            let cell = seed
                .cells
                .iter()
                .find(|c| c.n == n)
                .expect("size from grid");
            let table = cell
                .tables
                .iter()
                .find(|t| t.scenario == scenario)
                .expect("scenario run");
            for row in &table.rows {
                rows.push((
                    scenario,
                    row.age,
                    n,
                    row.r_hat.as_ref().ok().copied(),
                    report.config.rates.true_mrr(row.age),
                ));
            }
        }
    }
    {
        let mut out = create(&csv_path)?;
        let io = |e| MrrError::io(&csv_path, e);
        writeln!(out, "scenario,age,n,r_hat,r_true").map_err(io)?;
        for r in &rows {
            writeln!(out, "{},{},{},{},{}", r.0, r.1, r.2, fmt_opt(r.3), r.4).map_err(io)?;
        }
        out.flush().map_err(io)?;
    }

    let ages = &report.config.age_grid;
    let (amin, amax) = ages
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| {
            (lo.min(a), hi.max(a))
        });
    let (amin, amax) = (amin - 2.5, amax + 2.5);
    let finite: Vec<f64> = rows
        .iter()
        .filter_map(|r| r.3)
        .chain(rows.iter().map(|r| r.4))
        .collect();
    let ymin = finite
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .clamp(-2.0, 0.5);
    let ymax = finite
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        .clamp(2.0, 5.0);

    let svg_path = dir.join("figure6.svg");
    let root = SVGBackend::new(&svg_path, (1200, 420)).into_drawing_area();
    let e = |err| plot_err(&svg_path, err);
    root.fill(&WHITE).map_err(e)?;
    let panels = root.split_evenly((1, report.config.scenarios.len()));
    for (panel, &scenario) in panels.iter().zip(&report.config.scenarios) {
        let mut chart = ChartBuilder::on(panel)
            .caption(scenario.name(), ("sans-serif", 16))
            .margin(8)
            .x_label_area_size(35)
            .y_label_area_size(45)
            .build_cartesian_2d(amin..amax, ymin..ymax)
            .map_err(e)?;
        chart
            .configure_mesh()
            .x_desc("age (years)")
            .y_desc("mortality rate ratio")
            .draw()
            .map_err(e)?;
        let truth = (0..=100).map(|k| amin + (amax - amin) * k as f64 / 100.0);
        chart
            .draw_series(LineSeries::new(
                truth.map(|a| (a, report.config.rates.true_mrr(a))),
                BLUE.stroke_width(2),
            ))
            .map_err(e)?;
        for (i, &n) in sizes.iter().enumerate() {
            let pts = rows
                .iter()
                .filter(|r| r.0 == scenario && r.2 == n)
                .filter_map(|r| r.3.filter(|v| (ymin..=ymax).contains(v)).map(|v| (r.1, v)));
            let filled = i + 1 == sizes.len();
            chart
                .draw_series(pts.map(move |p| {
                    let style = if filled {
                        BLACK.filled()
                    } else {
                        BLACK.stroke_width(1)
                    };
                    Circle::new(p, 4, style)
                }))
                .map_err(e)?;
        }
    }
    root.present().map_err(e)?;
    Ok([svg_path.clone(), csv_path])
}

/// Writes figures 4 to 6 and their data files into `dir`.
pub fn emit_plots(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let Some(seed) = report.seeds.first() else {
        warn!("report holds no runs; no figures written");
        return Ok(Vec::new());
    };
    std::fs::create_dir_all(dir).map_err(|e| MrrError::io(dir, e))?;
    let mut written = Vec::with_capacity(6);
    written.extend(figure4(report, seed, dir)?);
    written.extend(figure5(report, seed, dir)?);
    written.extend(figure6(report, seed, dir)?);
    Ok(written)
}
