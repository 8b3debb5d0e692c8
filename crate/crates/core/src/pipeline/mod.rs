//! Configuration-driven orchestration. Every stage reads its inputs from
//! files in an input directory and writes its artifacts to an output
//! directory; a full run chains the stages through one directory.

mod config;
mod stages;

use std::path::Path;

pub use config::{ClusterConfig, Discretization, LimeConfig, PipelineConfig};
pub use stages::{artifacts, Manifest, ManifestEntry, MANIFEST_FILE, MANIFEST_SCHEMA_VERSION};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Preprocess,
    Impute,
    Select,
    Model,
    Explain,
    Cluster,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Preprocess,
        Stage::Impute,
        Stage::Select,
        Stage::Model,
        Stage::Explain,
        Stage::Cluster,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Preprocess => "preprocess",
            Stage::Impute => "impute",
            Stage::Select => "select",
            Stage::Model => "model",
            Stage::Explain => "explain",
            Stage::Cluster => "cluster",
            Stage::Report => "report",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown stage {name:?}")))
    }
}

/// Runs one stage, reading from `input` and writing into `output`.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig, input: &Path, output: &Path) -> Result<()> {
    std::fs::create_dir_all(output).map_err(|e| Error::io(output, e))?;
    let r = match stage {
        Stage::Preprocess => stages::preprocess(cfg, output),
        Stage::Impute => stages::impute(cfg, input, output),
        Stage::Select => stages::select(cfg, input, output),
        Stage::Model => stages::model(cfg, input, output),
        Stage::Explain => stages::explain(cfg, input, output),
        Stage::Cluster => stages::cluster(cfg, input, output),
        Stage::Report => stages::report(cfg, input, output),
    };
    r.map_err(|e| e.in_stage(stage.name()))
}

/// Runs every stage in order inside `output`, calling `progress` before
/// each one.
pub fn run_with(
    cfg: &PipelineConfig,
    output: &Path,
    mut progress: impl FnMut(Stage),
) -> Result<()> {
    for stage in Stage::ALL {
        progress(stage);
        run_stage(stage, cfg, output, output)?;
    }
    Ok(())
}

/// Full run into the configured output directory.
pub fn run(cfg: &PipelineConfig) -> Result<()> {
    let out = cfg
        .output_dir
        .clone()
        .ok_or_else(|| Error::Config("no output directory configured".into()))?;
    run_with(cfg, &out, |_| {})
}

/// Runs `f` on a dedicated pool of `threads` workers, or the global pool
/// when `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
