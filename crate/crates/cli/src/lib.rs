//! Batch runner for illusion scenarios: load a config, run it, verify the
//! resulting witness and write reproducible CSV/JSON artifacts.

pub mod config;
pub mod error;
pub mod format;
pub mod report;
pub mod scenario;
pub mod traces;

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

pub use config::{load, LoadedConfig, Scenario, ScenarioConfig};
pub use error::{CliError, Result};
pub use report::{emit_report, Format, Records};
pub use scenario::{execute, Mode, Outcome};
pub use traces::{verify_files, TracePair, WitnessFile};

#[derive(Debug, Clone, Default)]
pub struct Options {
    /// Overrides the config's output directory.
    pub out: Option<PathBuf>,
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    /// Files written, in a fixed order.
    pub files: Vec<PathBuf>,
    pub report: Value,
    pub pass: bool,
    pub first_failure: Option<usize>,
}

impl RunArtifacts {
    pub fn report_path(&self) -> PathBuf {
        self.out_dir.join("report.json")
    }

    /// `Err(VerificationFailed)` when the scenario did not pass.
    pub fn into_result(self) -> Result<Self> {
        if self.pass {
            Ok(self)
        } else {
            Err(CliError::VerificationFailed {
                first_failure: self.first_failure,
            })
        }
    }
}

fn write_artifacts(cfg: &LoadedConfig, mode: Mode, outcome: Outcome, out_dir: &Path) -> Result<RunArtifacts> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut files = Vec::new();
    for (name, records) in &outcome.tables {
        files.push(emit_report(records, Format::Csv, &out_dir.join(name))?);
    }
    let report_path = out_dir.join("report.json");
    report::write_json(&report_path, &outcome.report)?;
    files.push(report_path);
    if let Some((witness, meta)) = &outcome.witness {
        let path = out_dir.join("witness.json");
        let value = serde_json::to_value(WitnessFile::new(witness, meta.clone())).expect("witness serializes");
        report::write_json(&path, &value)?;
        files.push(path);
    }
    if let Some(traces) = &outcome.traces {
        let path = out_dir.join("traces.json");
        report::write_json(&path, &serde_json::to_value(traces).expect("traces serialize"))?;
        files.push(path);
    }
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": mode.name(),
        "seed": cfg.seed(),
        "config": serde_json::to_value(&cfg.raw).expect("config serializes"),
        "artifacts": files.iter().map(|p| p.file_name().expect("file name").to_string_lossy().into_owned()).collect::<Vec<_>>(),
    });
    let manifest_path = out_dir.join("manifest.json");
    report::write_json(&manifest_path, &manifest)?;
    files.push(manifest_path);
    Ok(RunArtifacts {
        out_dir: out_dir.to_path_buf(),
        files,
        report: outcome.report,
        pass: outcome.pass,
        first_failure: outcome.first_failure,
    })
}

fn run_mode(config_path: &Path, opts: &Options, mode: Mode) -> Result<RunArtifacts> {
    let cfg = load(config_path, opts.seed)?;
    let out_dir = opts.out.clone().unwrap_or_else(|| cfg.raw.output_dir.clone());
    let outcome = execute(&cfg, mode, opts.jobs)?;
    write_artifacts(&cfg, mode, outcome, &out_dir)
}

/// Execute one config and write its artifacts. A failed verification still
/// writes everything; see [`RunArtifacts::into_result`].
pub fn run_scenario(config_path: &Path, opts: &Options) -> Result<RunArtifacts> {
    run_mode(config_path, opts, Mode::Run)
}

/// Like [`run_scenario`] but over seeded trials (or the whole disks grid),
/// without per-run traces.
pub fn sweep(config_path: &Path, opts: &Options) -> Result<RunArtifacts> {
    run_mode(config_path, opts, Mode::Sweep)
}
