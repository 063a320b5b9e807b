//! `run` and `report`: validation of a whole config set, execution, output
//! writing and the consolidated summary.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ConfigSet, ExperimentConfig};
use crate::error::{LabError, Result, Violation};
use crate::experiments::{execute, resolve, Check, Plan};
use crate::table::{to_pretty_json, write_atomic, write_table, Metadata, ResultTable};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Replaces the seed of every experiment.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub config: ExperimentConfig,
    pub path: PathBuf,
    pub table: ResultTable,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Validates every experiment of the set, prefixing violations with their
/// position, and returns the plans in order.
pub fn validate_set(set: &ConfigSet, opts: &RunOptions) -> Result<Vec<(ExperimentConfig, Plan)>> {
    let mut errs: Vec<Violation> = set.check_labels().err().unwrap_or_default();
    let mut plans = Vec::new();
    let single = set.experiments.len() == 1;
    for (i, cfg) in set.experiments.iter().enumerate() {
        let mut cfg = cfg.clone();
        if let Some(s) = opts.seed {
            cfg.seed = s;
        }
        match resolve(&cfg) {
            Ok(plan) => plans.push((cfg, plan)),
            Err(vs) => errs.extend(vs.into_iter().map(|v| {
                if single {
                    v
                } else {
                    Violation::new(format!("experiments[{i}].params.{}", v.field), v.reason)
                }
            })),
        }
    }
    if errs.is_empty() {
        Ok(plans)
    } else {
        Err(LabError::Validation(errs))
    }
}

fn run_plan(cfg: &ExperimentConfig, plan: &Plan, out_dir: &Path) -> Result<Outcome> {
    let start = Instant::now();
    let output = execute(plan, cfg.seed)?;
    let metadata = Metadata {
        config: serde_json::to_value(cfg).expect("config serializes"),
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").to_owned(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        summary: output.summary,
    };
    let mut table = ResultTable::new(&output.columns, metadata);
    for row in output.rows {
        table.push(row);
    }
    let path = cfg.output_path(out_dir);
    write_table(&table, &path, cfg.format)?;
    Ok(Outcome {
        config: cfg.clone(),
        path,
        table,
        checks: output.checks,
    })
}

/// Runs every experiment in order, stopping at the first failure.
pub fn run(set: &ConfigSet, opts: &RunOptions) -> Result<Vec<Outcome>> {
    validate_set(set, opts)?
        .iter()
        .map(|(cfg, plan)| run_plan(cfg, plan, &opts.out_dir))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub experiment: &'static str,
    pub output: Option<PathBuf>,
    pub error: Option<String>,
    pub passed: bool,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub metadata: Value,
    pub experiments: Vec<ExperimentSummary>,
    pub passed: bool,
}

/// Runs every experiment, recording failures instead of stopping, and writes
/// the summary to `report_output` (default `report.json`) in the output
/// directory.
pub fn report(set: &ConfigSet, opts: &RunOptions) -> Result<(Report, PathBuf)> {
    let plans = validate_set(set, opts)?;
    let start = Instant::now();
    let experiments: Vec<ExperimentSummary> = plans
        .iter()
        .map(|(cfg, plan)| match run_plan(cfg, plan, &opts.out_dir) {
            Ok(o) => ExperimentSummary {
                name: cfg.label(),
                experiment: cfg.experiment.name(),
                output: Some(o.path.clone()),
                error: None,
                passed: o.passed(),
                checks: o.checks,
            },
            Err(e) => ExperimentSummary {
                name: cfg.label(),
                experiment: cfg.experiment.name(),
                output: None,
                error: Some(e.to_string()),
                passed: false,
                checks: Vec::new(),
            },
        })
        .collect();
    let report = Report {
        metadata: json!({
            "version": env!("CARGO_PKG_VERSION"),
            "seed_override": opts.seed,
            "wall_time_seconds": start.elapsed().as_secs_f64(),
        }),
        passed: experiments.iter().all(|e| e.passed),
        experiments,
    };
    let path = opts.out_dir.join(
        set.report_output
            .clone()
            .unwrap_or_else(|| PathBuf::from("report.json")),
    );
    let v = serde_json::to_value(&report).expect("report serializes");
    write_atomic(&path, &to_pretty_json(&v))?;
    Ok((report, path))
}
