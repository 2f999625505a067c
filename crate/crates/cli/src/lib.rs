//! Experiment orchestration around `ssl-gmm-core`: a TOML config names one
//! protocol and its grids, the run writes versioned CSVs, a `summary.json`
//! with headline scalars, and a `manifest.json` listing every file it wrote.

use std::fs;
use std::path::Path;

use serde_json::json;

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{LabError, LabResult};
pub use output::{RunManifest, TaskState, TaskStatus};

use error::io_err;
use output::{unix_now, ExperimentOutput, MANIFEST_FILE, SCHEMA_VERSION, SUMMARY_FILE};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
    /// Rerun even when the output directory already matches the config, and
    /// write alongside files this tool did not produce.
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub manifest: RunManifest,
    /// The previous run already matched the config; nothing was executed.
    pub reused: bool,
}

fn existing_files(dir: &Path) -> LabResult<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        names.push(entry.file_name().to_string_lossy().into_owned());
    }
    names.sort();
    Ok(names)
}

fn up_to_date(prev: &RunManifest, cfg_hash: &str, dir: &Path) -> bool {
    prev.config_hash == cfg_hash
        && prev.artifact_version == env!("CARGO_PKG_VERSION")
        && prev.schema == SCHEMA_VERSION
        && prev.all_ok()
        && prev.outputs.iter().all(|f| dir.join(f).is_file())
}

/// Runs `cfg` into `cfg.output_dir`. An identical earlier run whose tasks all
/// succeeded is returned untouched unless `opts.force` is set.
pub fn run_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> LabResult<RunReport> {
    let dir = cfg.output_dir.as_path();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let hash = cfg.hash();
    let prev = RunManifest::load(dir);
    if let Some(prev) = &prev {
        if !opts.force && up_to_date(prev, &hash, dir) {
            log::info!("{} is up to date, skipping", dir.display());
            return Ok(RunReport {
                manifest: prev.clone(),
                reused: true,
            });
        }
    }

    let owned: Vec<String> = prev.as_ref().map(|m| m.outputs.clone()).unwrap_or_default();
    let foreign = existing_files(dir)?.into_iter().any(|f| !owned.contains(&f));
    if foreign && !opts.force {
        return Err(LabError::ForeignFiles(dir.to_path_buf()));
    }
    for f in &owned {
        let path = dir.join(f);
        if path.is_file() {
            fs::remove_file(&path).map_err(io_err(&path))?;
        }
    }

    let started = unix_now();
    let output = execute(cfg, opts.threads)?;
    let mut outputs = Vec::new();
    for t in &output.tables {
        t.write(dir)?;
        outputs.push(t.file.clone());
    }

    let failed = output.tasks.iter().filter(|t| t.status == TaskState::Failed).count();
    let summary = json!({
        "experiment": cfg.experiment.as_str(),
        "config_hash": hash,
        "tasks": output.tasks.len(),
        "failed_tasks": failed,
        "results": output.summary,
    });
    let summary_path = dir.join(SUMMARY_FILE);
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n").map_err(io_err(&summary_path))?;
    outputs.push(SUMMARY_FILE.into());
    outputs.push(MANIFEST_FILE.into());

    let manifest = RunManifest {
        experiment: cfg.experiment.as_str().into(),
        config_hash: hash,
        artifact_version: env!("CARGO_PKG_VERSION").into(),
        schema: SCHEMA_VERSION,
        started_unix: started,
        finished_unix: unix_now(),
        tasks: output.tasks,
        outputs,
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(io_err(&manifest_path))?;
    if failed > 0 {
        log::warn!("{failed} task(s) failed; see {}", manifest_path.display());
    }
    Ok(RunReport {
        manifest,
        reused: false,
    })
}

/// Runs the protocol without touching the disk.
pub fn execute(cfg: &ExperimentConfig, threads: Option<usize>) -> LabResult<ExperimentOutput> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| LabError::Config(format!("thread pool: {e}")))?;
            pool.install(|| experiments::dispatch(cfg))
        }
        None => experiments::dispatch(cfg),
    }
}
