//! Session reports: a human-readable summary table plus a plottable
//! truth-vs-estimate file, derived entirely from a recorded session.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use vesica_core::estimator::clinical_ellipsoid_volume_ml;

use crate::runner::{parse_estimate_line, parse_truth_line, EstimateRow, SessionLog, TruthRow};

pub const REPORT_FILE: &str = "report.txt";
pub const VOLUMES_FILE: &str = "volumes.txt";
pub const VOLUMES_HEADER: &str =
    "# vesica-volumes v1: time_s truth_ml estimate_ml rel_error clinical_ml";

/// Aggregates computed while writing a report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportSummary {
    pub rows: usize,
    pub ok_rows: usize,
    pub alert_rows: usize,
    pub error_rows: usize,
    /// Over ok rows only; `None` when there are none.
    pub mean_rel_error: Option<f64>,
    pub max_rel_error: Option<f64>,
}

fn fmt_opt(v: Option<f64>, precision: usize) -> String {
    match v {
        Some(x) => format!("{x:.precision$}"),
        None => "nan".to_string(),
    }
}

/// Write `report.txt` and `volumes.txt` into `out_dir`. An empty session
/// (no records) produces an empty table and zero-row files rather than an
/// error.
pub fn write_report(log: &SessionLog, out_dir: &Path) -> Result<ReportSummary> {
    let estimates: Vec<EstimateRow> = log
        .estimate_records
        .iter()
        .map(|l| parse_estimate_line(l))
        .collect::<Result<_>>()
        .context("estimate log")?;
    let truths: Vec<TruthRow> = log
        .truth_records
        .iter()
        .map(|l| parse_truth_line(l))
        .collect::<Result<_>>()
        .context("truth log")?;
    if estimates.len() != truths.len() {
        anyhow::bail!(
            "estimate log has {} rows but truth log has {}",
            estimates.len(),
            truths.len()
        );
    }

    let mut volumes = String::from(VOLUMES_HEADER);
    volumes.push('\n');
    let mut table = String::new();
    let mut rel_errors = Vec::new();
    let mut alert_rows = 0usize;
    let mut error_rows = 0usize;

    writeln!(
        table,
        "{:>8}  {:>9}  {:>11}  {:>9}  {:>11}  {:>6}  {:>11}  {}",
        "time_s", "truth_ml", "estimate_ml", "rel_error", "clinical_ml", "points", "residual_mm", "quality"
    )?;
    for (est, truth) in estimates.iter().zip(&truths) {
        let rel = est.volume_ml.map(|v| (v - truth.volume_ml).abs() / truth.volume_ml);
        if let Some(r) = rel {
            rel_errors.push(r);
        }
        match () {
            _ if est.is_ok() => {}
            _ if est.is_error() => error_rows += 1,
            _ => alert_rows += 1,
        }
        let clinical =
            clinical_ellipsoid_volume_ml(truth.length_cm, truth.width_cm, truth.height_cm)
                .context("clinical volume from truth diameters")?;
        writeln!(
            volumes,
            "{:.1} {:.1} {} {} {clinical:.1}",
            est.time_s,
            truth.volume_ml,
            fmt_opt(est.volume_ml, 1),
            fmt_opt(rel, 4),
        )?;
        writeln!(
            table,
            "{:>8.1}  {:>9.1}  {:>11}  {:>9}  {:>11.1}  {:>6}  {:>11}  {}",
            est.time_s,
            truth.volume_ml,
            fmt_opt(est.volume_ml, 1),
            fmt_opt(rel, 4),
            clinical,
            est.point_count,
            fmt_opt(est.rms_residual_mm, 3),
            est.quality,
        )?;
    }

    let summary = ReportSummary {
        rows: estimates.len(),
        ok_rows: rel_errors.len(),
        alert_rows,
        error_rows,
        mean_rel_error: if rel_errors.is_empty() {
            None
        } else {
            Some(rel_errors.iter().sum::<f64>() / rel_errors.len() as f64)
        },
        max_rel_error: rel_errors.iter().copied().reduce(f64::max),
    };

    let mut report = String::new();
    writeln!(report, "session report: {}", log.scenario.name)?;
    if !log.scenario.description.is_empty() {
        writeln!(report, "{}", log.scenario.description)?;
    }
    writeln!(report)?;
    writeln!(report, "samples:          {}", summary.rows)?;
    writeln!(report, "volume estimates: {}", summary.ok_rows)?;
    writeln!(report, "alerts:           {}", summary.alert_rows)?;
    writeln!(report, "errors:           {}", summary.error_rows)?;
    writeln!(
        report,
        "noise:            {}",
        match log.scenario.snr_db {
            Some(snr) => format!("{snr} dB SNR"),
            None => "none".to_string(),
        }
    )?;
    writeln!(report, "seed:             {}", log.scenario.seed)?;
    if let (Some(mean), Some(max)) = (summary.mean_rel_error, summary.max_rel_error) {
        writeln!(report, "rel error mean:   {:.2}%", mean * 100.0)?;
        writeln!(report, "rel error max:    {:.2}%", max * 100.0)?;
    }
    writeln!(report)?;
    report.push_str(&table);

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    fs::write(out_dir.join(REPORT_FILE), report).context("writing report")?;
    fs::write(out_dir.join(VOLUMES_FILE), volumes).context("writing volumes table")?;
    Ok(summary)
}

// --------------------------------------------------------------------------
