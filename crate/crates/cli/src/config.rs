use std::path::{Path, PathBuf};

use dynid::control::{PidGains, SimConfig, WaypointConfig};
use dynid::dataset::{DatasetConfig, FeatureSpec};
use dynid::estimator::{ArchConfig, TrainConfig};
use dynid::model::{KinematicTemplate, VariationRanges};
use serde::{Deserialize, Serialize};

use crate::PipelineError;

/// Environment variable overriding `out_dir`.
pub const ENV_OUT_DIR: &str = "DYNID_OUT_DIR";
/// Environment variable overriding `workers`.
pub const ENV_WORKERS: &str = "DYNID_WORKERS";

/// One dataset grid entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCell {
    pub seq_len: usize,
    pub stride: usize,
    pub ssr: usize,
}

/// Dataset settings shared by every grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSettings {
    pub features: FeatureSpec,
    pub interpolate: bool,
    pub val_fraction: f64,
    pub split_seed: u64,
}

impl Default for DatasetSettings {
    fn default() -> Self {
        let d = DatasetConfig::default();
        Self {
            features: d.features,
            interpolate: d.interpolate,
            val_fraction: d.val_fraction,
            split_seed: d.split_seed,
        }
    }
}

impl DatasetSettings {
    pub fn for_cell(&self, cell: GridCell) -> DatasetConfig {
        DatasetConfig {
            seq_len: cell.seq_len,
            stride: cell.stride,
            ssr: cell.ssr,
            features: self.features,
            interpolate: self.interpolate,
            val_fraction: self.val_fraction,
            split_seed: self.split_seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stages {
    pub generate: bool,
    pub simulate: bool,
    pub sample: bool,
    pub train: bool,
    pub evaluate: bool,
    pub report: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Self::through(Stage::Report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Generate,
    Simulate,
    Sample,
    Train,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Generate,
        Stage::Simulate,
        Stage::Sample,
        Stage::Train,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Simulate => "simulate",
            Stage::Sample => "sample",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

impl Stages {
    /// Every stage up to and including `last`.
    pub fn through(last: Stage) -> Self {
        let on = |s: Stage| s <= last;
        Self {
            generate: on(Stage::Generate),
            simulate: on(Stage::Simulate),
            sample: on(Stage::Sample),
            train: on(Stage::Train),
            evaluate: on(Stage::Evaluate),
            report: on(Stage::Report),
        }
    }

    pub fn enabled(&self, s: Stage) -> bool {
        match s {
            Stage::Generate => self.generate,
            Stage::Simulate => self.simulate,
            Stage::Sample => self.sample,
            Stage::Train => self.train,
            Stage::Evaluate => self.evaluate,
            Stage::Report => self.report,
        }
    }

    /// Last enabled stage; earlier stages are run (or loaded) as needed.
    pub fn last(&self) -> Option<Stage> {
        Stage::ALL.iter().rev().copied().find(|s| self.enabled(*s))
    }
}

/// Complete description of one run. Every section may be omitted from the
/// file; the defaults form the desk-scale preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub robots: usize,
    pub seed: u64,
    pub waypoints: usize,
    pub out_dir: PathBuf,
    /// Thread cap; 0 uses every core.
    pub workers: usize,
    pub template: KinematicTemplate,
    pub ranges: VariationRanges,
    pub gains: PidGains,
    pub waypoint: WaypointConfig,
    pub sim: SimConfig,
    pub dataset: DatasetSettings,
    pub grid: Vec<GridCell>,
    pub architectures: Vec<ArchConfig>,
    pub train: TrainConfig,
    pub stages: Stages,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Per-joint gains for the default template: stiff shoulder and elbow,
/// soft wrist. Uniform gains either stall against gravity or drive the
/// light wrist past the velocity ceiling on large target steps.
pub fn desk_gains() -> PidGains {
    let per = |base: f64, arm: f64, wrist: f64| vec![base, arm, arm, wrist, wrist, wrist];
    PidGains {
        kp: per(60.0, 400.0, 20.0),
        ki: per(120.0, 800.0, 80.0),
        kd: per(15.0, 50.0, 3.0),
        ..PidGains::default()
    }
}

impl PipelineConfig {
    /// 64 robots, 4 waypoints each, one 16/16/16 dataset and the small
    /// encoder.
    pub fn desk() -> Self {
        Self {
            robots: 64,
            seed: 0,
            waypoints: 4,
            out_dir: PathBuf::from("runs/desk"),
            workers: 0,
            template: KinematicTemplate::default(),
            ranges: VariationRanges::default(),
            gains: desk_gains(),
            waypoint: WaypointConfig::default(),
            sim: SimConfig::default(),
            dataset: DatasetSettings::default(),
            grid: vec![GridCell {
                seq_len: 16,
                stride: 16,
                ssr: 16,
            }],
            architectures: vec![ArchConfig::default()],
            train: TrainConfig {
                learning_rate: 1e-3,
                batch_size: 32,
                epochs: 80,
                seed: 0,
                patience: 20,
                ..TrainConfig::default()
            },
            stages: Stages::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// Applies `DYNID_OUT_DIR` and `DYNID_WORKERS` when set.
    pub fn apply_env(&mut self) -> Result<(), PipelineError> {
        if let Ok(dir) = std::env::var(ENV_OUT_DIR) {
            if !dir.is_empty() {
                self.out_dir = PathBuf::from(dir);
            }
        }
        if let Ok(w) = std::env::var(ENV_WORKERS) {
            self.workers = w
                .trim()
                .parse()
                .map_err(|_| PipelineError::Config(format!("{ENV_WORKERS}: `{w}` is not a count")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg = |m: String| PipelineError::Config(m);
        if self.robots < 2 {
            return Err(cfg("robots: need at least 2 for a train/validation split".into()));
        }
        if self.waypoints == 0 {
            return Err(cfg("waypoints: must be at least 1".into()));
        }
        if self.grid.is_empty() {
            return Err(cfg("grid: at least one dataset configuration is required".into()));
        }
        if self.architectures.is_empty() {
            return Err(cfg("architectures: at least one entry is required".into()));
        }
        self.template.validate().map_err(|e| cfg(format!("template: {e}")))?;
        self.ranges.validate().map_err(|e| cfg(format!("ranges: {e}")))?;
        self.gains
            .validate(self.template.dof())
            .map_err(|e| cfg(format!("gains: {e}")))?;
        self.waypoint.validate().map_err(|e| cfg(format!("waypoint: {e}")))?;
        if !(self.sim.dt > 0.0 && self.sim.dt.is_finite()) {
            return Err(cfg(format!("sim.dt: must be positive, got {}", self.sim.dt)));
        }
        for (i, c) in self.grid.iter().enumerate() {
            self.dataset
                .for_cell(*c)
                .validate()
                .map_err(|e| cfg(format!("grid[{i}]: {e}")))?;
        }
        for (i, a) in self.architectures.iter().enumerate() {
            if a.d_model == 0 || a.n_heads == 0 || a.n_layers == 0 || a.d_ff == 0 || a.d_model % a.n_heads != 0 {
                return Err(cfg(format!(
                    "architectures[{i}]: dims must be positive and d_model divisible by n_heads"
                )));
            }
            if !(0.0..1.0).contains(&a.dropout) {
                return Err(cfg(format!("architectures[{i}].dropout: must lie in [0, 1)")));
            }
        }
        self.train.validate().map_err(|e| cfg(format!("train: {e}")))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_preset_round_trips_through_toml() {
        let c = PipelineConfig::desk();
        c.validate().unwrap();
        let back = PipelineConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn empty_file_is_the_preset() {
        assert_eq!(PipelineConfig::from_toml("").unwrap(), PipelineConfig::desk());
    }

    #[test]
    fn unknown_field_is_named() {
        let e = PipelineConfig::from_toml("robot_count = 3").unwrap_err();
        assert!(e.to_string().contains("robot_count"), "{e}");
        let e = PipelineConfig::from_toml("[[grid]]\nseq_len = 4\nstride = 2\n").unwrap_err();
        assert!(e.to_string().contains("ssr"), "{e}");
    }

    #[test]
    fn invalid_values_are_reported_by_field() {
        let mut c = PipelineConfig::desk();
        c.grid[0].ssr = 5;
        assert!(c.validate().unwrap_err().to_string().contains("grid[0]"));
        let mut c = PipelineConfig::desk();
        c.architectures[0].n_heads = 3;
        assert!(c.validate().unwrap_err().to_string().contains("architectures[0]"));
    }

    #[test]
    fn stage_ranges() {
        let s = Stages::through(Stage::Sample);
        assert!(s.generate && s.simulate && s.sample && !s.train && !s.report);
        assert_eq!(s.last(), Some(Stage::Sample));
    }
}
