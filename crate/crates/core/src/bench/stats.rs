//! Run statistics and report files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BenchRecord, Method};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesStats {
    pub count: usize,
    pub total: f64,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); 0 for a single value.
    pub stddev: f64,
}

/// Total, mean and sample standard deviation (Welford's update).
pub fn series_stats(values: &[f64]) -> Result<SeriesStats> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("no values to summarize".into()));
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut total = 0.0;
    for (i, &v) in values.iter().enumerate() {
        total += v;
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let n = values.len();
    Ok(SeriesStats {
        count: n,
        total,
        mean: total / n as f64,
        stddev: if n > 1 { (m2 / (n - 1) as f64).sqrt() } else { 0.0 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: usize,
    pub total_seconds: f64,
    pub mean_seconds_per_run: f64,
    pub stddev_seconds: f64,
    /// Summed wall time of each run, by run id.
    pub per_run_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSummary {
    pub methods: Vec<MethodSummary>,
}

impl BenchSummary {
    pub fn get(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// `total(slow) / total(fast)`, when both methods were run.
    pub fn speedup(&self, slow: Method, fast: Method) -> Option<f64> {
        Some(self.get(slow)?.total_seconds / self.get(fast)?.total_seconds)
    }
}

/// Groups records by method and run id. A run's time is the sum over the
/// images it processed; run ids must be `0..runs`.
pub fn summarize(records: &[BenchRecord], runs: usize) -> Result<BenchSummary> {
    if records.is_empty() || runs == 0 {
        return Err(Error::InvalidArgument("nothing to summarize".into()));
    }
    let mut methods = Vec::new();
    for method in Method::ALL {
        let mine: Vec<_> = records.iter().filter(|r| r.method == method).collect();
        if mine.is_empty() {
            continue;
        }
        let mut per_run = vec![0.0; runs];
        let mut seen = vec![false; runs];
        for r in mine {
            if r.run_id >= runs {
                return Err(Error::InvalidArgument(format!(
                    "{method} record has run_id {} but only {runs} runs",
                    r.run_id
                )));
            }
            per_run[r.run_id] += r.wall_seconds;
            seen[r.run_id] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!(
                "{method} has no records for run {missing}"
            )));
        }
        let stats = series_stats(&per_run)?;
        methods.push(MethodSummary {
            method,
            runs,
            total_seconds: stats.total,
            mean_seconds_per_run: stats.mean,
            stddev_seconds: stats.stddev,
            per_run_seconds: per_run,
        });
    }
    Ok(BenchSummary { methods })
}

pub const RECORDS_CSV_HEADER: &str = "method,run_id,wsi_id,n_workers,wall_seconds,bytes_read";

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    method: Method,
    run_id: usize,
    wsi_id: String,
    n_workers: usize,
    wall_seconds: f64,
    bytes_read: u64,
}

fn records_csv(records: &[BenchRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(CsvRow {
            method: r.method,
            run_id: r.run_id,
            wsi_id: r.wsi_id.clone(),
            n_workers: r.n_workers,
            wall_seconds: r.wall_seconds,
            bytes_read: r.bytes_read,
        })
        .map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

/// Reads records written by [`emit_report`]. `patches_read` is not part of
/// the CSV and comes back as 0.
pub fn parse_records_csv(text: &str) -> Result<Vec<BenchRecord>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .deserialize::<CsvRow>()
        .map(|row| {
            let row = row.map_err(csv_error)?;
            Ok(BenchRecord {
                method: row.method,
                wsi_id: row.wsi_id,
                run_id: row.run_id,
                n_workers: row.n_workers,
                patches_read: 0,
                wall_seconds: row.wall_seconds,
                bytes_read: row.bytes_read,
            })
        })
        .collect()
}

/// Aligned table with total, mean per run and standard deviation per
/// method, followed by speedup ratios of the chunked store.
pub fn format_table(summary: &BenchSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>14} {:>18} {:>22}",
        "method", "Total time(s)", "Mean time(s)/run", "Standard deviation(s)"
    );
    for m in &summary.methods {
        let _ = writeln!(
            out,
            "{:<16} {:>14.3} {:>18.3} {:>22.3}",
            m.method.as_str(),
            m.total_seconds,
            m.mean_seconds_per_run,
            m.stddev_seconds
        );
    }
    for slow in [Method::WholeArray, Method::PatchPerFile] {
        if let Some(ratio) = summary.speedup(slow, Method::ChunkedStore) {
            let _ = writeln!(out, "speedup {slow}/chunked_store = {ratio:.3}");
        }
    }
    out
}

/// Writes `records.csv` and `summary.txt` into `out_dir`; `notes` lines
/// (protocol, settings) are appended to the text table. Returns the paths.
pub fn emit_report(
    summary: &BenchSummary,
    records: &[BenchRecord],
    out_dir: impl AsRef<Path>,
    notes: &[String],
) -> Result<(PathBuf, PathBuf)> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("records.csv");
    fs::write(&csv_path, records_csv(records)?)?;
    let mut table = format_table(summary);
    for note in notes {
        table.push_str(note);
        table.push('\n');
    }
    let table_path = out_dir.join("summary.txt");
    fs::write(&table_path, table)?;
    Ok((csv_path, table_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(method: Method, run_id: usize, secs: f64) -> BenchRecord {
        BenchRecord {
            method,
            wsi_id: format!("wsi-{run_id}"),
            run_id,
            n_workers: 8,
            patches_read: 4,
            wall_seconds: secs,
            bytes_read: 1000,
        }
    }

    #[test]
    fn textbook_series() {
        let s = series_stats(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.total, s.mean, s.stddev), (6.0, 2.0, 1.0));
        let s = series_stats(&[56.4; 5]).unwrap();
        assert!((s.total - 282.0).abs() < 1e-9);
        assert!((s.mean - 56.4).abs() < 1e-12);
        assert!(s.stddev.abs() < 1e-12);
        assert!(series_stats(&[]).is_err());
    }

    #[test]
    fn summarize_groups_runs() {
        let records = vec![
            record(Method::ChunkedStore, 0, 1.0),
            record(Method::ChunkedStore, 0, 0.5),
            record(Method::ChunkedStore, 1, 2.0),
            record(Method::ChunkedStore, 2, 3.0),
            record(Method::WholeArray, 0, 3.0),
            record(Method::WholeArray, 1, 3.0),
            record(Method::WholeArray, 2, 3.0),
        ];
        let s = summarize(&records, 3).unwrap();
        let chunked = s.get(Method::ChunkedStore).unwrap();
        assert_eq!(chunked.per_run_seconds, vec![1.5, 2.0, 3.0]);
        assert_eq!(chunked.total_seconds, 6.5);
        assert_eq!(s.speedup(Method::WholeArray, Method::ChunkedStore), Some(9.0 / 6.5));
        assert!(s.get(Method::PatchPerFile).is_none());
        assert!(summarize(&records, 4).is_err());
        assert!(summarize(&[], 1).is_err());
    }

    #[test]
    fn report_round_trip() {
        let mut records = Vec::new();
        for method in Method::ALL {
            for run in 0..5 {
                records.push(record(method, run, 0.1 + run as f64 / 7.0));
            }
        }
        let summary = summarize(&records, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (csv_path, table_path) = emit_report(&summary, &records, dir.path(), &[]).unwrap();
        let text = fs::read_to_string(csv_path).unwrap();
        assert_eq!(text.lines().next().unwrap(), RECORDS_CSV_HEADER);
        assert_eq!(text.lines().count(), 16);
        let parsed = parse_records_csv(&text).unwrap();
        assert_eq!(summarize(&parsed, 5).unwrap(), summary);
        let table = fs::read_to_string(table_path).unwrap();
        assert_eq!(table.lines().count(), 1 + 3 + 2);
        assert!(table.contains("speedup whole_array/chunked_store = 1.000"));
    }
}
