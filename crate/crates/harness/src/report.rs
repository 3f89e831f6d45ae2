//! CSV reports. Column order is fixed: `variant,seed,step,mse,psnr,ssim,frechet`.
//!
//! The Fréchet column is computed on seeded random-projection features, not on
//! Inception activations; numbers are comparable between runs of this tool only.
use fddt_core::metrics::MetricReport;

use crate::train::RunRecord;

pub const CSV_HEADER: &str = "variant,seed,step,mse,psnr,ssim,frechet";

/// Shortest text that parses back to the same `f64`; infinities print as `inf`.
pub fn format_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        v.to_string()
    }
}

pub fn csv_row(variant: &str, seed: &str, step: usize, report: &MetricReport) -> String {
    format!(
        "{variant},{seed},{step},{},{},{},{}",
        format_value(report.mse),
        format_value(report.psnr),
        format_value(report.ssim),
        report.frechet.map(format_value).unwrap_or_default()
    )
}

/// Header plus one row per evaluation of every run.
pub fn trajectory_csv<'a>(runs: impl IntoIterator<Item = (&'a str, &'a RunRecord)>) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for (label, run) in runs {
        for e in &run.evaluations {
            out.push_str(&csv_row(label, &run.seed().to_string(), e.step, &e.report));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use fddt_core::metrics::MetricConfig;

    use super::*;

    #[test]
    fn row_formatting() {
        let report = MetricReport {
            mse: 0.0,
            psnr: f64::INFINITY,
            ssim: 1.0,
            frechet: None,
            count: 1,
            config: MetricConfig::default(),
        };
        assert_eq!(csv_row("metrics", "7", 0, &report), "metrics,7,0,0,inf,1,");
        let report = MetricReport {
            mse: 0.1 + 0.2,
            frechet: Some(2.5e-7),
            ..report
        };
        let row = csv_row("fddt_full", "1", 2000, &report);
        assert_eq!(row, "fddt_full,1,2000,0.30000000000000004,inf,1,0.00000025");
        let mse: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(mse, 0.1 + 0.2);
    }
}
