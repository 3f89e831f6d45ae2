//! Multi-run comparisons: the band ablation and the nonlinear-depth sweep.
//!
//! Runs are independent, so they execute in parallel across seeds and variants;
//! each run stays sequential internally and results keep their submission order.
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Variant};
use crate::error::{invalid, HarnessError, Result};
use crate::report::{format_value, CSV_HEADER};
use crate::train::{run_training, RunRecord};

/// Row order of the ablation table.
pub const ABLATION_VARIANTS: [Variant; 4] = [Variant::Baseline, Variant::FddtHigh, Variant::FddtLow, Variant::FddtFull];

/// Median final metrics of one labelled group of runs.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub seeds: Vec<u64>,
    pub step: usize,
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub frechet: Option<f64>,
}

impl SummaryRow {
    /// The seed column lists every contributing seed joined by `+`.
    pub fn to_csv(&self) -> String {
        let seeds = self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("+");
        format!(
            "{},{seeds},{},{},{},{},{}",
            self.label,
            self.step,
            format_value(self.mse),
            format_value(self.psnr),
            format_value(self.ssim),
            self.frechet.map(format_value).unwrap_or_default()
        )
    }
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub rows: Vec<SummaryRow>,
    /// Every run with its group label, grouped by row and ordered by seed.
    pub runs: Vec<(String, RunRecord)>,
}

impl Comparison {
    pub fn row(&self, label: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Runs of one group, in seed order.
    pub fn runs_of<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.runs.iter().filter(move |(l, _)| l == label).map(|(_, r)| r)
    }

    /// Header plus one median row per group.
    pub fn summary_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for row in &self.rows {
            out.push_str(&row.to_csv());
            out.push('\n');
        }
        out
    }

    /// Header plus every evaluation of every run.
    pub fn trajectory_csv(&self) -> String {
        crate::report::trajectory_csv(self.runs.iter().map(|(l, r)| (l.as_str(), r)))
    }
}

/// Median; the mean of the two central values for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    assert!(n > 0, "median of an empty list");
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Runs every `(label, config)` in parallel; fails if any run fails.
pub fn run_grid(jobs: Vec<(String, ExperimentConfig)>) -> Result<Vec<(String, RunRecord)>> {
    let results: Vec<(String, Result<RunRecord>)> = jobs
        .into_par_iter()
        .map(|(label, cfg)| {
            let r = run_training(&cfg);
            (label, r)
        })
        .collect();
    let mut out = Vec::with_capacity(results.len());
    for (label, r) in results {
        let r = r?;
        if let Some(msg) = &r.failure {
            return Err(HarnessError::Diverged {
                run: format!("{label} (seed {})", r.seed()),
                message: msg.clone(),
            });
        }
        out.push((label, r));
    }
    Ok(out)
}

fn summarize(label: &str, runs: &[&RunRecord]) -> Result<SummaryRow> {
    let finals = runs
        .iter()
        .map(|r| {
            r.final_report()
                .ok_or_else(|| invalid(format!("run {label} (seed {}) has no evaluation", r.seed())))
        })
        .collect::<Result<Vec<_>>>()?;
    let col = |f: fn(&fddt_core::metrics::MetricReport) -> f64| median(&finals.iter().map(|r| f(r)).collect::<Vec<_>>());
    let frechet: Option<Vec<f64>> = finals.iter().map(|r| r.frechet).collect();
    Ok(SummaryRow {
        label: label.to_string(),
        seeds: runs.iter().map(|r| r.seed()).collect(),
        step: runs.first().map_or(0, |r| r.config.steps),
        mse: col(|r| r.mse),
        psnr: col(|r| r.psnr),
        ssim: col(|r| r.ssim),
        frechet: frechet.map(|f| median(&f)),
    })
}

/// Runs each labelled config over the base config's seeds and summarizes per label.
pub fn run_comparison(groups: Vec<(String, ExperimentConfig)>) -> Result<Comparison> {
    let mut jobs = Vec::new();
    for (label, cfg) in &groups {
        cfg.validate()?;
        for seed in cfg.seed_range() {
            jobs.push((label.clone(), ExperimentConfig { seed, ..cfg.clone() }));
        }
    }
    let runs = run_grid(jobs)?;
    let rows = groups
        .iter()
        .map(|(label, _)| {
            let group: Vec<&RunRecord> = runs.iter().filter(|(l, _)| l == label).map(|(_, r)| r).collect();
            summarize(label, &group)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison { rows, runs })
}

/// The given variants with shared seeds, one row per variant.
pub fn run_variants(base: &ExperimentConfig, variants: &[Variant]) -> Result<Comparison> {
    if variants.is_empty() {
        return Err(invalid("no variants to compare"));
    }
    run_comparison(
        variants
            .iter()
            .map(|&variant| (variant.name().to_string(), ExperimentConfig { variant, ..base.clone() }))
            .collect(),
    )
}

/// Baseline against each band of the decomposition term and the full term.
pub fn run_ablation(base: &ExperimentConfig) -> Result<Comparison> {
    run_variants(base, &ABLATION_VARIANTS)
}

pub fn depth_label(depth: usize) -> String {
    format!("fddt_full@depth={depth}")
}

/// The full decomposition term at each pre-map depth, one row per depth.
pub fn run_depth_sweep(base: &ExperimentConfig, depths: &[usize]) -> Result<Comparison> {
    if depths.is_empty() {
        return Err(invalid("depth sweep needs at least one depth"));
    }
    let mut seen = Vec::new();
    for &d in depths {
        if seen.contains(&d) {
            return Err(invalid(format!("depth {d} listed twice")));
        }
        seen.push(d);
    }
    run_comparison(
        depths
            .iter()
            .map(|&nonlinear_depth| {
                (
                    depth_label(nonlinear_depth),
                    ExperimentConfig {
                        variant: Variant::FddtFull,
                        nonlinear_depth,
                        ..base.clone()
                    },
                )
            })
            .collect(),
    )
}
