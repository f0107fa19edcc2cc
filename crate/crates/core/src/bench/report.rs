use std::fs;
use std::path::{Path, PathBuf};

use super::{BenchError, ExperimentPlan, ExperimentResult, SampleRecord, Summary};

pub const PLOT_DATA_FILE: &str = "plot-data.csv";

fn csv_err(e: csv::Error) -> BenchError {
    BenchError::Io(e.to_string())
}

/// Raw samples as CSV: `sample_idx,response_ms,status`. Timeouts leave
/// the response empty.
pub fn raw_csv(samples: &[SampleRecord]) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample_idx", "response_ms", "status"]).map_err(csv_err)?;
    for s in samples {
        let ms = s.response_ms.map(|v| format!("{v:.6}")).unwrap_or_default();
        w.write_record([s.idx.to_string(), ms, s.status.to_string()]).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of ascii fields"))
}

pub fn summary_line(s: &Summary) -> String {
    format!(
        "{} {} {} n={} mean={:.3}ms ci95=[{:.3},{:.3}] failures={}",
        s.app, s.mode, s.layout, s.n, s.mean_ms, s.ci95_low_ms, s.ci95_high_ms, s.failures
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportPaths {
    pub raw: PathBuf,
    pub summary: PathBuf,
    pub plot_data: PathBuf,
}

const PLOT_HEADER: [&str; 7] = ["app", "mode", "layout", "n", "mean_ms", "ci95_low_ms", "ci95_high_ms"];

/// Writes the raw CSV and summary JSON for one run and upserts its row in
/// the shared plot-data file.
pub fn write_reports(plan: &ExperimentPlan, result: &mut ExperimentResult, dir: &Path) -> Result<ReportPaths, BenchError> {
    fs::create_dir_all(dir)?;
    let stem = plan.stem();
    let raw = dir.join(format!("{stem}.csv"));
    fs::write(&raw, raw_csv(&result.samples)?)?;
    result.summary.raw_path = Some(raw.clone());
    let summary = dir.join(format!("{stem}.summary.json"));
    let json = serde_json::to_string_pretty(&result.summary).map_err(|e| BenchError::Io(e.to_string()))?;
    fs::write(&summary, json + "\n")?;

    let plot_data = dir.join(PLOT_DATA_FILE);
    let s = &result.summary;
    let row = vec![
        s.app.clone(),
        s.mode.to_string(),
        s.layout.to_string(),
        s.n.to_string(),
        format!("{:.6}", s.mean_ms),
        format!("{:.6}", s.ci95_low_ms),
        format!("{:.6}", s.ci95_high_ms),
    ];
    let mut rows: Vec<Vec<String>> = Vec::new();
    if plot_data.exists() {
        let mut r = csv::Reader::from_path(&plot_data).map_err(csv_err)?;
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let rec: Vec<String> = rec.iter().map(str::to_string).collect();
            if rec.len() == PLOT_HEADER.len() && rec[..3] != row[..3] {
                rows.push(rec);
            }
        }
    }
    rows.push(row);
    rows.sort();
    let mut w = csv::Writer::from_path(&plot_data).map_err(csv_err)?;
    w.write_record(PLOT_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(ReportPaths { raw, summary, plot_data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::SampleStatus;

    #[test]
    fn csv_layout() {
        let s = vec![
            SampleRecord { idx: 0, response_ms: Some(12.5), status: SampleStatus::Ok },
            SampleRecord { idx: 1, response_ms: None, status: SampleStatus::Timeout },
        ];
        assert_eq!(raw_csv(&s).unwrap(), "sample_idx,response_ms,status\n0,12.500000,ok\n1,,timeout\n");
    }
}
