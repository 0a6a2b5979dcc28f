use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dynid_cli::{run_with_config, PipelineConfig, PipelineError, Stage, Stages};

#[derive(Parser)]
#[command(name = "dynid", version, about = "Dynamic parameter identification pipeline")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// Pipeline configuration (TOML). Defaults to the desk-scale preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run seed (robot generation, waypoints and training).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Continue the run stored in the output directory with its saved
    /// configuration.
    #[arg(long, global = true)]
    resume: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Verb {
    /// Generate robots, URDF files and the manifest.
    Generate,
    /// Simulate one closed-loop episode per robot.
    Simulate,
    /// Build the sequence datasets.
    Sample,
    /// Train one encoder per grid cell.
    Train,
    /// Compute train and validation metrics.
    Evaluate,
    /// Write tables from stored outputs only.
    Report,
    /// Run the stages enabled in the configuration (all by default).
    All,
}

fn load(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match (&cli.config, cli.resume) {
        (Some(path), _) => PipelineConfig::load(path)?,
        (None, true) => {
            let out = cli
                .out
                .clone()
                .or_else(|| std::env::var(dynid_cli::config::ENV_OUT_DIR).ok().map(PathBuf::from))
                .unwrap_or_else(|| PipelineConfig::desk().out_dir);
            PipelineConfig::load(&out.join("config.toml"))?
        }
        (None, false) => PipelineConfig::desk(),
    };
    cfg.apply_env()?;
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.stages = match cli.verb {
        Verb::Generate => Stages::through(Stage::Generate),
        Verb::Simulate => Stages::through(Stage::Simulate),
        Verb::Sample => Stages::through(Stage::Sample),
        Verb::Train => Stages::through(Stage::Train),
        Verb::Evaluate => Stages::through(Stage::Evaluate),
        Verb::Report => Stages {
            generate: false,
            simulate: false,
            sample: false,
            train: false,
            evaluate: false,
            report: true,
        },
        Verb::All => cfg.stages,
    };
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli).and_then(|cfg| run_with_config(&cfg));
    match result {
        Ok(report) => {
            for s in &report.stages {
                println!(
                    "{:<9} {:>9.2}s {:<7} {}",
                    s.stage,
                    s.seconds,
                    if s.cached { "cached" } else { "ran" },
                    s.detail
                );
            }
            for c in &report.cells {
                if let Some(m) = &c.val_metrics {
                    println!(
                        "cell seq_len={} stride={} ssr={} d_model={} layers={}: val R2 {} RMSE {:.4}",
                        c.cell.seq_len,
                        c.cell.stride,
                        c.cell.ssr,
                        c.arch.d_model,
                        c.arch.n_layers,
                        m.mean_r2.map_or("n/a".into(), |r| format!("{r:.4}")),
                        m.mean_rmse
                    );
                }
            }
            match &report.failure {
                None => ExitCode::SUCCESS,
                Some(f) => {
                    eprintln!("error[{}]: stage `{}` failed: {}", f.category, f.stage, f.message);
                    ExitCode::from(match f.category.as_str() {
                        "config" => 2,
                        "io" => 3,
                        _ => 4,
                    })
                }
            }
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
