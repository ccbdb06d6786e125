//! File emission: trials.csv (per-trial records), series.csv (convergence
//! bands) and result.json (config echo plus aggregates).

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::experiments::ExperimentOutcome;

pub fn trials_csv(outcome: &ExperimentOutcome) -> String {
    let mut out = String::from("trial,seed,label,iterations,final_error\n");
    for r in &outcome.records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.trial, r.seed, r.label, r.iterations, r.final_error
        ));
    }
    out
}

/// Aggregates the per-trial log10-error series into mean/min/max bands on
/// the shared iteration grid. Only trials that landed in their experiment's
/// success bucket contribute; with no such trials the file is header-only.
pub fn series_csv(outcome: &ExperimentOutcome) -> String {
    let mut out = String::from("iter,mean_log10_err,min,max\n");
    let series: Vec<&Vec<f64>> = outcome
        .records
        .iter()
        .filter_map(|r| r.series.as_ref())
        .collect();
    if series.is_empty() {
        return out;
    }
    for (k, &iter) in outcome.grid.iter().enumerate() {
        let values: Vec<f64> = series.iter().map(|s| s[k]).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        out.push_str(&format!("{iter},{mean},{min},{max}\n"));
    }
    out
}

pub fn result_json(config: &ExperimentConfig, outcome: &ExperimentOutcome) -> Value {
    let mut root = json!({
        "experiment": config.experiment.name(),
        "config": config,
        "trials": outcome.records.len(),
    });
    let map = root.as_object_mut().expect("object literal");
    for (k, v) in &outcome.extra {
        map.insert(k.clone(), v.clone());
    }
    root
}

pub fn write_outputs(
    dir: &Path,
    config: &ExperimentConfig,
    outcome: &ExperimentOutcome,
) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("trials.csv"), trials_csv(outcome)).context("writing trials.csv")?;
    fs::write(dir.join("series.csv"), series_csv(outcome)).context("writing series.csv")?;
    let json = serde_json::to_string_pretty(&result_json(config, outcome))?;
    fs::write(dir.join("result.json"), json + "\n").context("writing result.json")?;
    Ok(())
}
