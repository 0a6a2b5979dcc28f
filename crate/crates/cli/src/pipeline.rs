use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use dynid::control::{
    read_log, sample_waypoints, simulate_trajectory, summary_line, write_log, ControlError, EpisodeStatus,
    TrajectoryLog,
};
use dynid::dataset::{build_dataset_cached, CacheStatus, Dataset, NormalizationTable};
use dynid::estimator::{
    evaluate, load_checkpoint, save_checkpoint, train, ArchConfig, EncoderConfig, EncoderModel, Metrics,
    TrainHistory, CHECKPOINT_VERSION,
};
use dynid::model::{
    generate_fleet, parse_urdf, read_manifest, robot_seed, serialize_urdf, write_manifest, ManifestRecord,
    RobotModel, MANIFEST_VERSION,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{GridCell, PipelineConfig, Stage};
use crate::report::emit_tables;
use crate::PipelineError;

const LOG_FORMAT: u32 = 1;
/// Salt separating waypoint seeds from generation seeds.
const WAYPOINT_SALT: u64 = 0x5741_5950_4f49_4e54;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub seconds: f64,
    /// Outputs were found and reused.
    pub cached: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub category: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotStatus {
    pub id: u64,
    pub ok: bool,
    pub detail: String,
}

/// One (dataset configuration, architecture) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub grid_index: usize,
    pub arch_index: usize,
    pub cell: GridCell,
    pub arch: ArchConfig,
    pub effective_time: f64,
    pub utilization: f64,
    pub dataset_key: String,
    pub model_hash: String,
    pub n_features: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub train_robots: usize,
    pub val_robots: usize,
    pub history: Option<TrainHistory>,
    pub train_metrics: Option<Metrics>,
    pub val_metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub out_dir: PathBuf,
    pub robots: usize,
    pub simulated_ok: usize,
    pub robot_status: Vec<RobotStatus>,
    pub stages: Vec<StageRecord>,
    pub cells: Vec<CellReport>,
    pub failure: Option<StageFailure>,
}

impl RunReport {
    pub fn all_cached(&self) -> bool {
        !self.stages.is_empty() && self.stages.iter().all(|s| s.cached)
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }

    /// Cell with the highest validation mean R².
    pub fn best_cell(&self) -> Option<&CellReport> {
        self.cells
            .iter()
            .filter(|c| c.val_metrics.as_ref().and_then(|m| m.mean_r2).is_some())
            .max_by(|a, b| {
                let r = |c: &CellReport| c.val_metrics.as_ref().and_then(|m| m.mean_r2).unwrap_or(f64::NEG_INFINITY);
                r(a).total_cmp(&r(b))
            })
    }
}

/// SHA-256 over the JSON form of `v`.
pub fn content_hash<T: Serialize + ?Sized>(v: &T) -> String {
    let bytes = serde_json::to_vec(v).expect("plain data serialises");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Serialize, Deserialize)]
struct Stamp<T> {
    hash: String,
    data: T,
}

fn read_stamp<T: for<'de> Deserialize<'de>>(path: &Path, hash: &str) -> Option<T> {
    let text = fs::read(path).ok()?;
    let s: Stamp<T> = serde_json::from_slice(&text).ok()?;
    (s.hash == hash).then_some(s.data)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(v).map_err(|e| PipelineError::Config(e.to_string()))?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_stamp<T: Serialize>(path: &Path, hash: &str, data: T) -> Result<(), PipelineError> {
    write_json(path, &Stamp { hash: hash.to_string(), data })
}

struct Paths {
    root: PathBuf,
}

impl Paths {
    fn stamp(&self, stage: Stage) -> PathBuf {
        self.root.join("stamps").join(format!("{}.json", stage.name()))
    }
    fn urdf(&self, id: u64) -> PathBuf {
        self.root.join("robots").join(format!("robot_{id:06}.urdf"))
    }
    fn manifest(&self) -> PathBuf {
        self.root.join("manifest.jsonl")
    }
    fn log(&self, id: u64) -> PathBuf {
        self.root.join("logs").join(format!("robot_{id:06}.log"))
    }
    fn datasets(&self) -> PathBuf {
        self.root.join("datasets")
    }
    fn checkpoint(&self, hash: &str) -> PathBuf {
        self.root.join("models").join(format!("model_{}.ckpt", &hash[..16]))
    }
    fn history(&self, hash: &str) -> PathBuf {
        self.root.join("models").join(format!("model_{}.history.json", &hash[..16]))
    }
    fn metrics(&self, hash: &str) -> PathBuf {
        self.root.join("eval").join(format!("model_{}.metrics.json", &hash[..16]))
    }
    fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

/// Loads the configuration at `path`, applies environment overrides and
/// runs it.
pub fn run_pipeline(path: &Path) -> Result<RunReport, PipelineError> {
    let mut cfg = PipelineConfig::load(path)?;
    cfg.apply_env()?;
    run_with_config(&cfg)
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    paths: Paths,
    report: RunReport,
}

/// Runs the enabled stages in order. Stages needed by a later enabled stage
/// but themselves disabled are loaded from stored outputs.
///
/// Configuration problems are returned as errors; a failing stage yields a
/// partial report carrying the failure.
pub fn run_with_config(cfg: &PipelineConfig) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("config.toml"), cfg.to_toml())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| PipelineError::Config(format!("workers: {e}")))?;
    let mut run = Run {
        cfg,
        paths: Paths {
            root: cfg.out_dir.clone(),
        },
        report: RunReport {
            config_hash: content_hash(cfg),
            out_dir: cfg.out_dir.clone(),
            robots: cfg.robots,
            simulated_ok: 0,
            robot_status: Vec::new(),
            stages: Vec::new(),
            cells: Vec::new(),
            failure: None,
        },
    };
    match pool.install(|| run.execute()) {
        Ok(()) => {}
        Err(e @ PipelineError::Config(_)) => return Err(e),
        Err(PipelineError::Stage { stage, source }) => {
            run.report.failure = Some(StageFailure {
                stage: stage.name().to_string(),
                category: source.category().to_string(),
                message: source.to_string(),
            });
        }
        Err(e) => {
            run.report.failure = Some(StageFailure {
                stage: "pipeline".into(),
                category: e.category().to_string(),
                message: e.to_string(),
            });
        }
    }
    write_json(&run.paths.root.join("run_report.json"), &run.report)?;
    Ok(run.report)
}

fn stage_err(stage: Stage) -> impl Fn(PipelineError) -> PipelineError {
    move |e| match e {
        e @ (PipelineError::Config(_) | PipelineError::Stage { .. }) => e,
        other => PipelineError::Stage {
            stage,
            source: Box::new(other),
        },
    }
}

impl Run<'_> {
    fn record(&mut self, stage: Stage, start: Instant, cached: bool, detail: String) {
        self.report.stages.push(StageRecord {
            stage: stage.name().to_string(),
            seconds: start.elapsed().as_secs_f64(),
            cached,
            detail,
        });
    }

    fn missing(stage: Stage) -> PipelineError {
        PipelineError::Config(format!(
            "stage `{}` is disabled and no stored output matches this configuration",
            stage.name()
        ))
    }

    fn execute(&mut self) -> Result<(), PipelineError> {
        let Some(last) = self.cfg.stages.last() else {
            return Ok(());
        };
        let gen_hash = content_hash(&(
            "generate",
            &self.cfg.template,
            &self.cfg.ranges,
            self.cfg.robots,
            self.cfg.seed,
            MANIFEST_VERSION,
        ));
        let (models, manifest) = self.generate(&gen_hash).map_err(stage_err(Stage::Generate))?;
        if last == Stage::Generate {
            return Ok(());
        }
        let sim_hash = content_hash(&(
            "simulate",
            &gen_hash,
            &self.cfg.gains,
            &self.cfg.waypoint,
            &self.cfg.sim,
            self.cfg.waypoints,
            LOG_FORMAT,
        ));
        let logs = self.simulate(&sim_hash, &models).map_err(stage_err(Stage::Simulate))?;
        drop(models);
        if last == Stage::Simulate {
            return Ok(());
        }
        let datasets = self.sample(&manifest, &logs).map_err(stage_err(Stage::Sample))?;
        drop(logs);
        if last == Stage::Sample {
            return Ok(());
        }
        let trained = self.train(&datasets).map_err(stage_err(Stage::Train))?;
        if last == Stage::Train {
            return Ok(());
        }
        self.evaluate(&datasets, &trained).map_err(stage_err(Stage::Evaluate))?;
        if last == Stage::Evaluate {
            return Ok(());
        }
        self.write_report().map_err(stage_err(Stage::Report))?;
        Ok(())
    }

    fn generate(&mut self, hash: &str) -> Result<(Vec<RobotModel>, Vec<ManifestRecord>), PipelineError> {
        let start = Instant::now();
        let stamp = self.paths.stamp(Stage::Generate);
        if read_stamp::<usize>(&stamp, hash).is_some() {
            if let Ok(loaded) = self.load_generated() {
                self.record(Stage::Generate, start, true, format!("{} robots", loaded.0.len()));
                return Ok(loaded);
            }
        }
        if !self.cfg.stages.generate {
            return Err(Self::missing(Stage::Generate));
        }
        let models = generate_fleet(self.cfg.robots, self.cfg.seed, &self.cfg.template, &self.cfg.ranges)?;
        let manifest: Vec<ManifestRecord> = models
            .iter()
            .map(ManifestRecord::from_model)
            .collect::<Result<_, _>>()?;
        fs::create_dir_all(self.paths.root.join("robots"))?;
        models
            .par_iter()
            .try_for_each(|m| fs::write(self.paths.urdf(m.id), serialize_urdf(m)))?;
        let mut f = BufWriter::new(fs::File::create(self.paths.manifest())?);
        write_manifest(&mut f, &manifest)?;
        drop(f);
        write_stamp(&stamp, hash, models.len())?;
        self.record(Stage::Generate, start, false, format!("{} robots", models.len()));
        Ok((models, manifest))
    }

    fn load_generated(&self) -> Result<(Vec<RobotModel>, Vec<ManifestRecord>), PipelineError> {
        let manifest = read_manifest(BufReader::new(fs::File::open(self.paths.manifest())?))?;
        let models = manifest
            .par_iter()
            .map(|r| -> Result<RobotModel, PipelineError> {
                let text = fs::read_to_string(self.paths.urdf(r.id))?;
                Ok(parse_urdf(&text)?)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok((models, manifest))
    }

    fn simulate(&mut self, hash: &str, models: &[RobotModel]) -> Result<Vec<TrajectoryLog>, PipelineError> {
        let start = Instant::now();
        let stamp = self.paths.stamp(Stage::Simulate);
        if let Some(status) = read_stamp::<Vec<RobotStatus>>(&stamp, hash) {
            let logs: Result<Vec<TrajectoryLog>, PipelineError> = status
                .iter()
                .filter(|s| s.ok)
                .collect::<Vec<_>>()
                .par_iter()
                .map(|s| Ok(read_log(BufReader::new(fs::File::open(self.paths.log(s.id))?))?))
                .collect();
            if let Ok(logs) = logs {
                self.finish_simulate(start, true, status, logs.len());
                return Ok(logs);
            }
        }
        if !self.cfg.stages.simulate {
            return Err(Self::missing(Stage::Simulate));
        }
        fs::create_dir_all(self.paths.root.join("logs"))?;
        let cfg = self.cfg;
        let results: Vec<(RobotStatus, Option<TrajectoryLog>)> = models
            .par_iter()
            .map(|m| -> Result<_, PipelineError> {
                let seed = robot_seed(cfg.seed ^ WAYPOINT_SALT, m.id);
                let waypoints = match sample_waypoints(m, cfg.waypoints, seed, &cfg.waypoint) {
                    Ok(w) => w,
                    Err(e @ ControlError::InfeasibleWorkspace { .. }) => {
                        return Ok((
                            RobotStatus {
                                id: m.id,
                                ok: false,
                                detail: e.to_string(),
                            },
                            None,
                        ))
                    }
                    Err(e) => return Err(e.into()),
                };
                let log = simulate_trajectory(m, &waypoints, &cfg.gains, &cfg.sim)?;
                let ok = log.status == EpisodeStatus::Ok;
                if ok {
                    write_log(BufWriter::new(fs::File::create(self.paths.log(m.id))?), &log)?;
                }
                Ok((
                    RobotStatus {
                        id: m.id,
                        ok,
                        detail: summary_line(&log),
                    },
                    ok.then_some(log),
                ))
            })
            .collect::<Result<_, _>>()?;
        let mut status = Vec::with_capacity(results.len());
        let mut logs = Vec::new();
        for (s, l) in results {
            status.push(s);
            logs.extend(l);
        }
        write_stamp(&stamp, hash, &status)?;
        let n = logs.len();
        self.finish_simulate(start, false, status, n);
        Ok(logs)
    }

    fn finish_simulate(&mut self, start: Instant, cached: bool, status: Vec<RobotStatus>, ok: usize) {
        let detail = format!("{ok} of {} episodes ok", status.len());
        self.report.simulated_ok = ok;
        self.report.robot_status = status;
        self.record(Stage::Simulate, start, cached, detail);
    }

    fn sample(&mut self, manifest: &[ManifestRecord], logs: &[TrajectoryLog]) -> Result<Vec<Dataset>, PipelineError> {
        let start = Instant::now();
        let table = NormalizationTable::from_ranges(&self.cfg.ranges, &self.cfg.template)?;
        let mut out = Vec::new();
        let mut all_hit = true;
        for (gi, cell) in self.cfg.grid.iter().enumerate() {
            let dcfg = self.cfg.dataset.for_cell(*cell);
            let key = dynid::dataset::cache_key(manifest, &self.cfg.template, logs, &table, &dcfg);
            let path = dynid::dataset::cache_path(&self.paths.datasets(), &key);
            let ds = if !self.cfg.stages.sample {
                let ds = dynid::dataset::load_dataset(&path).map_err(|_| Self::missing(Stage::Sample))?;
                if ds.key != key {
                    return Err(Self::missing(Stage::Sample));
                }
                ds
            } else {
                let (ds, status) =
                    build_dataset_cached(&self.paths.datasets(), manifest, &self.cfg.template, logs, &table, &dcfg)?;
                all_hit &= status == CacheStatus::Hit;
                ds
            };
            for (ai, arch) in self.cfg.architectures.iter().enumerate() {
                self.report.cells.push(CellReport {
                    grid_index: gi,
                    arch_index: ai,
                    cell: *cell,
                    arch: arch.clone(),
                    effective_time: dcfg.effective_time(),
                    utilization: dcfg.utilization(),
                    dataset_key: ds.key.clone(),
                    model_hash: model_hash(&ds, arch, self.cfg),
                    n_features: ds.n_features,
                    n_train: ds.train.len(),
                    n_val: ds.val.len(),
                    train_robots: ds.train_ids().len(),
                    val_robots: ds.val_ids().len(),
                    history: None,
                    train_metrics: None,
                    val_metrics: None,
                });
            }
            out.push(ds);
        }
        let detail = format!("{} dataset(s)", out.len());
        self.record(Stage::Sample, start, all_hit, detail);
        Ok(out)
    }

    fn train(&mut self, datasets: &[Dataset]) -> Result<Vec<EncoderModel>, PipelineError> {
        let start = Instant::now();
        let mut all_cached = true;
        let mut models = Vec::new();
        for cell in self.report.cells.iter_mut() {
            let ds = &datasets[cell.grid_index];
            let ckpt = self.paths.checkpoint(&cell.model_hash);
            let hist = self.paths.history(&cell.model_hash);
            let stored = load_checkpoint(&ckpt)
                .ok()
                .zip(fs::read(&hist).ok().and_then(|b| serde_json::from_slice::<TrainHistory>(&b).ok()));
            let (model, history) = match stored {
                Some(((m, _), h)) => (m, h),
                None => {
                    if !self.cfg.stages.train {
                        return Err(Self::missing(Stage::Train));
                    }
                    all_cached = false;
                    let enc = EncoderConfig::for_dataset(&cell.arch, ds);
                    let (m, h) = train(ds, &enc, &self.cfg.train)?;
                    write_json(&hist, &h)?;
                    save_checkpoint(&ckpt, &m, &ds.target_names)?;
                    (m, h)
                }
            };
            cell.history = Some(history);
            models.push(model);
        }
        let detail = format!("{} model(s)", models.len());
        self.record(Stage::Train, start, all_cached, detail);
        Ok(models)
    }

    fn evaluate(&mut self, datasets: &[Dataset], models: &[EncoderModel]) -> Result<(), PipelineError> {
        let start = Instant::now();
        let mut all_cached = true;
        for (cell, model) in self.report.cells.iter_mut().zip(models) {
            let path = self.paths.metrics(&cell.model_hash);
            let stored = fs::read(&path)
                .ok()
                .and_then(|b| serde_json::from_slice::<(Metrics, Metrics)>(&b).ok());
            let (tr, va) = match stored {
                Some(m) => m,
                None => {
                    if !self.cfg.stages.evaluate {
                        return Err(Self::missing(Stage::Evaluate));
                    }
                    all_cached = false;
                    let ds = &datasets[cell.grid_index];
                    let m = (
                        evaluate(model, &ds.train, &ds.target_names)?,
                        evaluate(model, &ds.val, &ds.target_names)?,
                    );
                    write_json(&path, &m)?;
                    m
                }
            };
            cell.train_metrics = Some(tr);
            cell.val_metrics = Some(va);
        }
        let detail = format!("{} cell(s)", self.report.cells.len());
        self.record(Stage::Evaluate, start, all_cached, detail);
        Ok(())
    }

    fn write_report(&mut self) -> Result<(), PipelineError> {
        let start = Instant::now();
        let changed = emit_tables(&self.report, &self.paths.report(), self.cfg.template.dof())?;
        self.record(Stage::Report, start, !changed, "tables".into());
        Ok(())
    }
}

fn model_hash(ds: &Dataset, arch: &ArchConfig, cfg: &PipelineConfig) -> String {
    content_hash(&("model", &ds.key, arch, &cfg.train, CHECKPOINT_VERSION))
}
