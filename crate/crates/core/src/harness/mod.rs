//! Named experiments, their configuration files and output layout.
//!
//! `run_experiment` writes into its output directory:
//!
//! ```text
//! runs/<group>_seed<s>.csv    one row per checkpoint (training runs)
//! runs/<group>_seed<s>.json   config snapshot and column schema
//! runs/<scheme>_K<k>_seed<s>.csv   gradient-flow trajectories
//! <table>.csv                 experiment-specific tables
//! summary.csv                 mean and std over seeds per group and step
//! findings.json               derived quantities (divergence steps, ...)
//! manifest.json               config, config hash, version, wall clock
//! ```
//!
//! Everything except `manifest.json` is a deterministic function of the
//! config.

mod config;
mod experiments;
mod summary;
mod validate;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub use config::{
    AnalyticSection, ExperimentConfig, ExperimentId, FiniteSection, GflowSection, MlpSection,
    PerceptronSection,
};
pub use experiments::{population_classifiers, rect_references, Outcome};
pub use summary::{summarize_runs, summarize_trajectories, write_summary, LabeledRun, SummaryRow, Table};
pub use validate::{validate_clone, ClassCheck, CloneReport, CloneTolerance};

/// What [`run_experiment`] produced.
#[derive(Debug)]
pub struct ExperimentReport {
    pub id: ExperimentId,
    pub outcome: Outcome,
    /// Files written, relative to the output directory.
    pub files: Vec<PathBuf>,
    pub wall_clock_secs: f64,
}

impl ExperimentReport {
    pub fn findings(&self) -> &Value {
        &self.outcome.findings
    }
}

/// Hex SHA-256 of the config's canonical TOML form.
pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    let digest = Sha256::digest(config.to_toml()?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Run the experiment named in `config` without touching the disk.
pub fn compute_experiment(config: &ExperimentConfig) -> Result<Outcome> {
    config.validate()?;
    let id = config.experiment.expect("validated");
    match id {
        ExperimentId::RectBoundaries => experiments::rect_boundaries(config),
        ExperimentId::RectAlignment => experiments::rect_alignment(config),
        ExperimentId::RectCloneCollapse => experiments::rect_clone_collapse(config),
        ExperimentId::TruncatedGf => experiments::truncated_gf(config),
        ExperimentId::CorrectionControls => experiments::correction_controls(config),
        ExperimentId::FiniteSample => experiments::finite_sample(config),
        ExperimentId::MlpCloneCollapse => experiments::mlp_clone_collapse(config),
        ExperimentId::Cifar10cMixtures => experiments::cifar10c_mixtures(config),
    }
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

/// Run the experiment and write its outputs under `out`.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<ExperimentReport> {
    let started = Instant::now();
    let outcome = compute_experiment(config)?;
    let id = config.experiment.expect("validated");
    std::fs::create_dir_all(out.join("runs"))?;
    let mut files = Vec::new();
    let mut run_clock = Vec::new();
    for r in &outcome.runs {
        let stem = r.stem();
        let (csv, side) = (
            PathBuf::from("runs").join(format!("{stem}.csv")),
            PathBuf::from("runs").join(format!("{stem}.json")),
        );
        r.record.write_csv(&out.join(&csv))?;
        r.record.write_sidecar(&out.join(&side))?;
        run_clock.push(json!({ "run": stem, "wall_clock_secs": r.record.wall_clock_secs }));
        files.extend([csv, side]);
    }
    for (group, seed, t) in &outcome.trajectories {
        let f = PathBuf::from("runs").join(format!("{group}_seed{seed}.csv"));
        t.write_csv(&out.join(&f))?;
        files.push(f);
    }
    for (name, table) in &outcome.tables {
        table.write(&out.join(name))?;
        files.push(PathBuf::from(name));
    }
    write_summary(&outcome.summary, &out.join("summary.csv"))?;
    files.push("summary.csv".into());
    write_json(&out.join("findings.json"), &outcome.findings)?;
    files.push("findings.json".into());
    let wall = started.elapsed().as_secs_f64();
    let manifest = json!({
        "experiment": id.name(),
        "library_version": env!("CARGO_PKG_VERSION"),
        "config_sha256": config_hash(config)?,
        "config": config,
        "files": files,
        "runs": run_clock,
        "wall_clock_secs": wall,
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    files.push("manifest.json".into());
    Ok(ExperimentReport {
        id,
        outcome,
        files,
        wall_clock_secs: wall,
    })
}
