//! Summary CSV, per-episode JSONL, run manifest and the text report.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::campaign::{Condition, ConditionSummary, EpisodeRecord};
use crate::error::{Error, Result};

pub const SUMMARY_HEADER: &str = "condition,grid_value,success_mean,success_ci95,latency_ms_mean,latency_ci95,trigger_rate_mean,trigger_ci95,messages_per_episode,messages_total,effective_loss";

pub const SUMMARY_FILE: &str = "summary.csv";
pub const EPISODES_FILE: &str = "episodes.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Static latency of the cloud comparator row, ms.
pub const CLOUD_REFERENCE_LATENCY_MS: f64 = 510.0;
pub const CLOUD_REFERENCE_LABEL: &str = "cloud_gpt4_reference";

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub condition: String,
    pub grid_value: Option<f64>,
    pub success_mean: f64,
    pub success_ci95: f64,
    pub latency_ms_mean: f64,
    pub latency_ci95: f64,
    pub trigger_rate_mean: f64,
    pub trigger_ci95: f64,
    pub messages_per_episode: f64,
    pub messages_total: u64,
    pub effective_loss: f64,
}

impl From<&ConditionSummary> for SummaryRow {
    fn from(s: &ConditionSummary) -> Self {
        Self {
            condition: s.condition.clone(),
            grid_value: s.grid_value,
            success_mean: s.success.mean,
            success_ci95: s.success.ci95,
            latency_ms_mean: s.latency_ms.mean,
            latency_ci95: s.latency_ms.ci95,
            trigger_rate_mean: s.trigger_rate.mean,
            trigger_ci95: s.trigger_rate.ci95,
            messages_per_episode: s.messages_per_episode,
            messages_total: s.messages_total,
            effective_loss: s.effective_loss,
        }
    }
}

fn cmp_rows(a: &SummaryRow, b: &SummaryRow) -> std::cmp::Ordering {
    a.condition.cmp(&b.condition).then_with(|| {
        let ga = a.grid_value.unwrap_or(f64::NEG_INFINITY);
        let gb = b.grid_value.unwrap_or(f64::NEG_INFINITY);
        ga.total_cmp(&gb)
    })
}

fn f4(v: f64) -> String {
    let s = format!("{v:.4}");
    // avoid "-0.0000"
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

/// Formats summary rows as CSV text, sorted by `(condition, grid_value)`.
pub fn summary_csv_string(rows: &[SummaryRow]) -> String {
    let mut rows: Vec<&SummaryRow> = rows.iter().collect();
    rows.sort_by(|a, b| cmp_rows(a, b));
    let mut out = String::new();
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let grid = r.grid_value.map(f4).unwrap_or_default();
        let fields = [
            r.condition.clone(),
            grid,
            f4(r.success_mean),
            f4(r.success_ci95),
            f4(r.latency_ms_mean),
            f4(r.latency_ci95),
            f4(r.trigger_rate_mean),
            f4(r.trigger_ci95),
            f4(r.messages_per_episode),
            r.messages_total.to_string(),
            f4(r.effective_loss),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Artifact {
            path: path.to_path_buf(),
            line: 0,
            message: "no summary rows to write".into(),
        });
    }
    fs::write(path, summary_csv_string(rows)).map_err(|e| Error::io(path, e))
}

/// Reads a summary CSV, reporting the offending line on malformed input.
pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_summary_csv(path, &text)
}

pub fn parse_summary_csv(path: &Path, text: &str) -> Result<Vec<SummaryRow>> {
    let bad = |line: usize, message: String| Error::Artifact {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| bad(1, e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != SUMMARY_HEADER {
        return Err(bad(1, format!("unexpected header `{header}`")));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| bad(line, e.to_string()))?;
        let num = |idx: usize| -> Result<f64> {
            let field = rec.get(idx).unwrap_or("");
            field
                .parse::<f64>()
                .map_err(|_| bad(line, format!("column {} is not a number: `{field}`", idx + 1)))
        };
        let grid = rec.get(1).unwrap_or("");
        let grid_value = if grid.is_empty() { None } else { Some(num(1)?) };
        let total = rec.get(9).unwrap_or("");
        rows.push(SummaryRow {
            condition: rec.get(0).unwrap_or("").to_string(),
            grid_value,
            success_mean: num(2)?,
            success_ci95: num(3)?,
            latency_ms_mean: num(4)?,
            latency_ci95: num(5)?,
            trigger_rate_mean: num(6)?,
            trigger_ci95: num(7)?,
            messages_per_episode: num(8)?,
            messages_total: total
                .parse()
                .map_err(|_| bad(line, format!("column 10 is not an integer: `{total}`")))?,
            effective_loss: num(10)?,
        });
    }
    Ok(rows)
}

pub fn write_episode_jsonl(path: &Path, records: &[EpisodeRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Artifact {
            path: path.to_path_buf(),
            line: 0,
            message: "no episode records to write".into(),
        });
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_episode_jsonl(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let rec: EpisodeRecord = serde_json::from_str(&line).map_err(|e| Error::Artifact {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Hex SHA-256 of canonical config bytes.
pub fn config_hash(canonical: &[u8]) -> String {
    hex::encode(Sha256::digest(canonical))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDescription {
    pub kind: String,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub tool_version: String,
    pub proxy_model_version: String,
    pub calibration_label: String,
    pub config_hash: String,
    pub condition: String,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub episodes_per_seed: u64,
    pub sweep: Option<SweepDescription>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Artifact {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Paths of the three artifacts of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunPaths {
    pub dir: PathBuf,
    pub summary: PathBuf,
    pub episodes: PathBuf,
    pub manifest: PathBuf,
}

impl RunPaths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        let dir = dir.into();
        Self {
            summary: dir.join(SUMMARY_FILE),
            episodes: dir.join(EPISODES_FILE),
            manifest: dir.join(MANIFEST_FILE),
            dir,
        }
    }
}

/// Writes `summary.csv`, `episodes.jsonl` and `manifest.json` under
/// `out_root/<run_id>/`.
pub fn write_run(
    out_root: &Path,
    manifest: &RunManifest,
    rows: &[SummaryRow],
    records: &[EpisodeRecord],
) -> Result<RunPaths> {
    let paths = RunPaths::new(out_root.join(&manifest.run_id));
    fs::create_dir_all(&paths.dir).map_err(|e| Error::io(&paths.dir, e))?;
    write_summary_csv(&paths.summary, rows)?;
    write_episode_jsonl(&paths.episodes, records)?;
    write_manifest(&paths.manifest, manifest)?;
    Ok(paths)
}

/// Re-reads a run directory and checks the artifacts agree with each other.
pub fn verify_run(paths: &RunPaths, expected_rows: usize, expected_records: usize) -> Result<()> {
    let rows = read_summary_csv(&paths.summary)?;
    let records = read_episode_jsonl(&paths.episodes)?;
    read_manifest(&paths.manifest)?;
    let mismatch = |path: &Path, what: &str, want: usize, got: usize| Error::Artifact {
        path: path.to_path_buf(),
        line: 0,
        message: format!("expected {want} {what}, found {got}"),
    };
    if rows.len() != expected_rows {
        return Err(mismatch(&paths.summary, "summary rows", expected_rows, rows.len()));
    }
    if records.len() != expected_records {
        return Err(mismatch(&paths.episodes, "episode lines", expected_records, records.len()));
    }
    Ok(())
}

fn report_rank(condition: &str) -> usize {
    Condition::parse(condition)
        .and_then(|c| Condition::ALL.iter().position(|&x| x == c))
        .unwrap_or(Condition::ALL.len())
}

/// Aligned plain-text table of operating points. The three executable
/// conditions come first in fixed order, sweeps after them, and the static
/// cloud comparator last when enabled.
pub fn render_report(rows: &[SummaryRow], include_cloud_reference: bool) -> String {
    let mut rows: Vec<&SummaryRow> = rows.iter().collect();
    rows.sort_by(|a, b| {
        report_rank(&a.condition)
            .cmp(&report_rank(&b.condition))
            .then_with(|| cmp_rows(a, b))
    });
    let header = [
        "condition",
        "grid_value",
        "success",
        "success_ci95",
        "latency_ms",
        "latency_ci95",
        "trigger_rate",
        "messages_per_episode",
        "messages_total",
    ];
    let mut table: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in rows {
        table.push(vec![
            r.condition.clone(),
            r.grid_value.map(f4).unwrap_or_default(),
            f4(r.success_mean),
            f4(r.success_ci95),
            format!("{:.1}", r.latency_ms_mean),
            format!("{:.1}", r.latency_ci95),
            f4(r.trigger_rate_mean),
            format!("{:.2}", r.messages_per_episode),
            r.messages_total.to_string(),
        ]);
    }
    if include_cloud_reference {
        table.push(vec![
            CLOUD_REFERENCE_LABEL.into(),
            String::new(),
            "reference".into(),
            String::new(),
            format!("{CLOUD_REFERENCE_LATENCY_MS:.1}"),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &table {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (cell, w))| {
                if i == 0 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(condition: &str, grid: Option<f64>) -> SummaryRow {
        SummaryRow {
            condition: condition.into(),
            grid_value: grid,
            success_mean: 0.9412,
            success_ci95: 0.0123,
            latency_ms_mean: 151.4,
            latency_ci95: 0.25,
            trigger_rate_mean: 1.0,
            trigger_ci95: 0.0,
            messages_per_episode: 17.8,
            messages_total: 133_500,
            effective_loss: 0.012,
        }
    }

    #[test]
    fn summary_round_trip() {
        let rows = vec![row("swarm_6g", None)];
        let text = summary_csv_string(&rows);
        assert!(text.starts_with(SUMMARY_HEADER));
        assert!(!text.contains('\r'));
        let back = parse_summary_csv(Path::new("mem.csv"), &text).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn rows_are_sorted_by_condition_then_grid() {
        let rows = vec![
            row("sweep_tau", Some(0.8)),
            row("sweep_tau", Some(0.5)),
            row("single_local", None),
        ];
        let text = summary_csv_string(&rows);
        let order: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
        assert_eq!(order, vec!["", "0.5000", "0.8000"]);
    }

    #[test]
    fn corrupted_csv_reports_line() {
        let text = format!("{SUMMARY_HEADER}\nswarm_6g,,0.9,x,1,1,1,1,1,1,1\n");
        let err = parse_summary_csv(Path::new("bad.csv"), &text).unwrap_err();
        assert!(err.to_string().contains("bad.csv:2"), "{err}");
        let err = parse_summary_csv(Path::new("bad.csv"), "a,b\n").unwrap_err();
        assert!(err.to_string().contains("bad.csv:1"));
    }

    #[test]
    fn cloud_row() {
        let text = render_report(&[], true);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with(CLOUD_REFERENCE_LABEL));
        assert!(lines[1].contains("510.0"));
        assert!(!render_report(&[], false).contains(CLOUD_REFERENCE_LABEL));
    }

    #[test]
    fn report_order_is_fixed() {
        let rows = vec![row("swarm_6g", None), row("single_local", None), row("swarm_baseline_v2x", None)];
        let text = render_report(&rows, true);
        let names: Vec<&str> = text.lines().skip(1).map(|l| l.split_whitespace().next().unwrap()).collect();
        assert_eq!(
            names,
            vec!["single_local", "swarm_baseline_v2x", "swarm_6g", CLOUD_REFERENCE_LABEL]
        );
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(config_hash(b"abc"), config_hash(b"abc"));
        assert_eq!(
            config_hash(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
