use std::path::Path;

use fddt_harness::experiments::SummaryRow;
use fddt_harness::report::{csv_row, CSV_HEADER};
use fddt_core::metrics::{MetricConfig, MetricReport};

fn report(mse: f64, psnr: f64, ssim: f64, frechet: Option<f64>) -> MetricReport {
    MetricReport {
        mse,
        psnr,
        ssim,
        frechet,
        count: 4,
        config: MetricConfig::default(),
    }
}

/// Column order and number formatting are part of the file format.
#[test]
fn csv_matches_golden_file() {
    let mut text = format!("{CSV_HEADER}\n");
    let rows = [
        csv_row("baseline", "0", 500, &report(0.0125, 19.030899869919438, 0.875, Some(0.5))),
        csv_row("fddt_full", "4", 2000, &report(0.1 + 0.2, 5.228787452803376, -0.25, Some(12.0))),
        csv_row("metrics", "-", 0, &report(0.0, f64::INFINITY, 1.0, None)),
        SummaryRow {
            label: "fddt_full@depth=1".into(),
            seeds: vec![0, 1, 2],
            step: 2000,
            mse: 0.003,
            psnr: 25.228787452803378,
            ssim: 0.9,
            frechet: Some(1e-7),
        }
        .to_csv(),
    ];
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    let golden = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/report_golden.csv")).unwrap();
    assert_eq!(text, golden);
}
