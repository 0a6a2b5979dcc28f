//! Configuration-driven orchestration of the generate, simulate, sample,
//! train, evaluate and report stages.

pub mod config;
pub mod pipeline;
pub mod report;

pub use config::{DatasetSettings, GridCell, PipelineConfig, Stage, Stages};
pub use pipeline::{content_hash, run_pipeline, run_with_config, CellReport, RunReport, StageRecord};
pub use report::{build_tables, emit_tables, Table};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] dynid::model::ModelError),
    #[error(transparent)]
    Control(#[from] dynid::control::ControlError),
    #[error(transparent)]
    Dataset(#[from] dynid::dataset::DatasetError),
    #[error(transparent)]
    Estimator(#[from] dynid::estimator::EstimatorError),
    #[error("stage `{}`: {source}", stage.name())]
    Stage {
        stage: Stage,
        source: Box<PipelineError>,
    },
}

impl PipelineError {
    pub fn category(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Io(_) => "io",
            PipelineError::Model(_) => "model",
            PipelineError::Control(_) => "control",
            PipelineError::Dataset(_) => "dataset",
            PipelineError::Estimator(_) => "estimator",
            PipelineError::Stage { source, .. } => source.category(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "io" => 3,
            _ => 4,
        }
    }
}
