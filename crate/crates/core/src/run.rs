//! Runs a resolved campaign config and writes its artifacts.

use std::path::Path;

use chrono::{SecondsFormat, Utc};

use crate::campaign::{run_condition, run_sweep, EpisodeRecord};
use crate::config::CampaignConfig;
use crate::error::Result;
use crate::export::{verify_run, write_run, RunManifest, RunPaths, SummaryRow, SweepDescription};
use crate::proxy::PROXY_MODEL_VERSION;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignOutput {
    pub manifest: RunManifest,
    pub rows: Vec<SummaryRow>,
    pub summaries: Vec<crate::campaign::ConditionSummary>,
    /// Grid points in grid order, each sorted by `(seed, episode)`.
    pub records: Vec<EpisodeRecord>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Executes the condition, or every grid point when the config has a sweep.
pub fn execute(config: &CampaignConfig) -> Result<CampaignOutput> {
    config.validate()?;
    let started_at = now();
    let runs = match &config.sweep {
        Some(s) => run_sweep(&config.spec, s.kind, &s.grid, &config.density_loss, &config.plan)?,
        None => vec![run_condition(&config.spec, &config.plan)?],
    };
    let finished_at = now();
    let mut summaries = Vec::with_capacity(runs.len());
    let mut records = Vec::new();
    for run in runs {
        summaries.push(run.summary);
        records.extend(run.records);
    }
    let mut seeds = config.plan.seeds.clone();
    seeds.sort_unstable();
    let manifest = RunManifest {
        run_id: config.run_id(),
        tool_version: TOOL_VERSION.to_string(),
        proxy_model_version: PROXY_MODEL_VERSION.to_string(),
        calibration_label: config.spec.calibration.calibration_label.clone(),
        config_hash: config.hash(),
        condition: config.condition.as_str().to_string(),
        master_seed: config.plan.master_seed,
        seeds,
        episodes_per_seed: config.plan.episodes_per_seed,
        sweep: config.sweep.as_ref().map(|s| SweepDescription {
            kind: s.kind.as_str().to_string(),
            grid: s.grid.clone(),
        }),
        started_at,
        finished_at,
    };
    Ok(CampaignOutput {
        rows: summaries.iter().map(SummaryRow::from).collect(),
        manifest,
        summaries,
        records,
    })
}

/// Writes the run under `out_root/<run_id>/` and re-reads it.
pub fn write_and_verify(out_root: &Path, output: &CampaignOutput) -> Result<RunPaths> {
    let paths = write_run(out_root, &output.manifest, &output.rows, &output.records)?;
    verify_run(&paths, output.rows.len(), output.records.len())?;
    Ok(paths)
}
