//! `rmlearn` command-line interface.
//!
//! Subcommands mirror the pipeline stages: `demo-gen` writes expert
//! demonstrations, `infer` builds the reward machine, `train` runs tabular
//! Q-learning against it, `eval` reports greedy performance, `export`
//! renders the RM graph. Every command is driven by a TOML config file;
//! flags override file values and `RMLEARN_SEED` overrides the seed.
//!
//! Exit codes: 0 success, 2 config/validation error, 3 inference failure,
//! 4 I/O error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::blockworld::{expert_demos, TaskSpec};
use crate::cluster::DbscanParams;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::featurize::FeatureExtractor;
use crate::pipeline::{
    featurize_demos, infer_from_set, load_env_demos, save_env_demos, save_report,
    save_subgoal_log, EnvDemoFile,
};
use crate::qrm::{
    evaluate_greedy, load_checkpoint, save_checkpoint, train_from, EvalRecord, QTables,
};
use crate::rmcore::{load_rm, save_rm};
use crate::trajectories::{load_demonstrations, save_demonstrations, DemoFormat};

pub const DEMOS_CSV: &str = "demos.csv";
pub const DEMOS_BIN: &str = "demos.bin";
pub const SUBGOAL_LOG: &str = "subgoal_log.json";
pub const ENV_DEMOS: &str = "env_demos.json";
pub const RM_FILE: &str = "rm.json";
pub const RM_DOT: &str = "rm.dot";
pub const INFER_REPORT: &str = "infer_report.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const CHECKPOINT: &str = "checkpoint.bin";
pub const EVAL_REPORT: &str = "eval_report.json";

#[derive(Parser)]
#[command(
    name = "rmlearn",
    about = "Infer reward machines from demonstrations and train tabular agents on them",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Pipeline config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override (beats RMLEARN_SEED and the config file).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate expert demonstrations and featurize them.
    DemoGen {
        #[command(flatten)]
        common: Common,
        /// Number of demonstrations.
        #[arg(long)]
        demos: Option<usize>,
        /// Allow fewer demonstrations than allowed orderings.
        #[arg(long)]
        no_coverage: bool,
        /// Demonstration file format.
        #[arg(long)]
        format: Option<DemoFormat>,
        /// Featurizer noise scale override.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Cluster features, extract prototypes, construct the reward machine.
    Infer {
        #[command(flatten)]
        common: Common,
        /// DBSCAN neighborhood radius.
        #[arg(long)]
        eps: Option<f64>,
        /// DBSCAN density threshold.
        #[arg(long)]
        min_points: Option<usize>,
        /// Labeling distance threshold.
        #[arg(long)]
        kappa: Option<f64>,
        /// Featurizer kind: synthetic or precomputed.
        #[arg(long)]
        featurizer: Option<String>,
        /// L2-normalize feature vectors before clustering.
        #[arg(long)]
        normalize: bool,
        /// Demonstration file format to read.
        #[arg(long)]
        format: Option<DemoFormat>,
    },
    /// Train the per-RM-state Q-learner.
    Train {
        #[command(flatten)]
        common: Common,
        /// Episode count override.
        #[arg(long)]
        episodes: Option<usize>,
        /// Resume from a checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a trained checkpoint with greedy rollouts.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint path (default: <out>/checkpoint.bin).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Number of evaluation seeds.
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Render the reward machine graph as Graphviz DOT.
    Export {
        #[command(flatten)]
        common: Common,
        /// Include self-loop transitions.
        #[arg(long)]
        self_loops: bool,
        /// Output path (default: <out>/rm.dot).
        #[arg(long)]
        dot_out: Option<PathBuf>,
    },
}

/// Parses and runs a full command line, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::DemoGen {
            common,
            demos,
            no_coverage,
            format,
            noise,
        } => {
            let mut cfg = load_with_common(&common)?;
            if let Some(n) = demos {
                cfg.task.demos = n;
            }
            if no_coverage {
                cfg.task.coverage = false;
            }
            if let Some(f) = format {
                cfg.io.format = f;
            }
            if let Some(n) = noise {
                cfg.featurizer.noise = n;
            }
            cfg.validate()?;
            cmd_demo_gen(&cfg)
        }
        Command::Infer {
            common,
            eps,
            min_points,
            kappa,
            featurizer,
            normalize,
            format,
        } => {
            let mut cfg = load_with_common(&common)?;
            if let Some(e) = eps {
                cfg.cluster.eps = e;
            }
            if let Some(m) = min_points {
                cfg.cluster.min_points = m;
            }
            if let Some(k) = kappa {
                cfg.labeling.kappa = k;
            }
            if let Some(f) = featurizer {
                cfg.featurizer.kind = f;
            }
            if normalize {
                cfg.cluster.normalize = true;
            }
            if let Some(f) = format {
                cfg.io.format = f;
            }
            cfg.validate()?;
            cmd_infer(&cfg)
        }
        Command::Train {
            common,
            episodes,
            resume,
        } => {
            let mut cfg = load_with_common(&common)?;
            if let Some(n) = episodes {
                cfg.train.episodes = n;
            }
            cfg.validate()?;
            cmd_train(&cfg, resume.as_deref())
        }
        Command::Eval {
            common,
            checkpoint,
            seeds,
            json,
        } => {
            let cfg = load_with_common(&common)?;
            cmd_eval(&cfg, checkpoint.as_deref(), seeds, json)
        }
        Command::Export {
            common,
            self_loops,
            dot_out,
        } => {
            let cfg = load_with_common(&common)?;
            cmd_export(&cfg, self_loops, dot_out.as_deref())
        }
    }
}

fn load_with_common(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.io.out_dir = out.clone();
    }
    let env_seed = match std::env::var("RMLEARN_SEED") {
        Ok(v) => Some(v.parse::<u64>().map_err(|_| {
            Error::Config(format!("RMLEARN_SEED must be an unsigned integer, got `{v}`"))
        })?),
        Err(_) => None,
    };
    if let Some(seed) = common.seed.or(env_seed) {
        cfg.io.seed = seed;
    }
    Ok(cfg)
}

fn demos_path(cfg: &PipelineConfig) -> PathBuf {
    match cfg.io.format {
        DemoFormat::Csv => cfg.io.out_dir.join(DEMOS_CSV),
        DemoFormat::Binary => cfg.io.out_dir.join(DEMOS_BIN),
    }
}

fn synthetic_extractor(cfg: &PipelineConfig, task: &TaskSpec) -> Result<FeatureExtractor> {
    FeatureExtractor::synthetic(task.blocks.len(), cfg.featurizer.noise, cfg.io.seed)
}

fn cmd_demo_gen(cfg: &PipelineConfig) -> Result<()> {
    if cfg.featurizer.kind != "synthetic" {
        return Err(Error::Config(
            "demo-gen needs the synthetic featurizer; precomputed embeddings are \
             supplied externally"
                .into(),
        ));
    }
    let task = TaskSpec::load(&cfg.task.spec_path)?;
    let extractor = synthetic_extractor(cfg, &task)?;
    let demos = expert_demos(&task, cfg.task.demos, cfg.task.coverage, cfg.io.seed)?;
    let (set, log) = featurize_demos(&task, &demos, &extractor)?;

    std::fs::create_dir_all(&cfg.io.out_dir)?;
    let demo_file = demos_path(cfg);
    save_demonstrations(&set, &demo_file, cfg.io.format)?;
    save_subgoal_log(&log, cfg.io.out_dir.join(SUBGOAL_LOG))?;
    save_env_demos(
        &EnvDemoFile {
            task: task.name.clone(),
            demos,
        },
        cfg.io.out_dir.join(ENV_DEMOS),
    )?;
    println!(
        "demo-gen: task `{}`, {} demonstrations ({} frames, dim {}) -> {}",
        task.name,
        set.len(),
        set.flat_points().len(),
        set.dim(),
        demo_file.display()
    );
    Ok(())
}

fn cmd_infer(cfg: &PipelineConfig) -> Result<()> {
    let task = TaskSpec::load(&cfg.task.spec_path)?;
    let set = if cfg.featurizer.kind == "precomputed" {
        let path = cfg
            .featurizer
            .embeddings_path
            .as_ref()
            .expect("validated: precomputed requires embeddings_path");
        let format = cfg.featurizer.embeddings_format.unwrap_or(DemoFormat::Csv);
        load_demonstrations(path, format)?
    } else {
        load_demonstrations(demos_path(cfg), cfg.io.format)?
    };
    let params = DbscanParams::new(cfg.cluster.eps, cfg.cluster.min_points)?;
    let outcome = infer_from_set(
        &set,
        Some(task.name.as_str()),
        &params,
        cfg.labeling.kappa,
        cfg.rm.gamma,
        cfg.cluster.normalize,
    )?;

    std::fs::create_dir_all(&cfg.io.out_dir)?;
    save_rm(
        &outcome.rm,
        &outcome.labeling,
        Some(task.name.as_str()),
        cfg.io.out_dir.join(RM_FILE),
    )?;
    outcome
        .rm
        .export_graph(cfg.io.out_dir.join(RM_DOT), false)?;
    save_report(&outcome.report, cfg.io.out_dir.join(INFER_REPORT))?;
    println!(
        "infer: k={} states, goal u{}, {} edges, {} noise points, \
         min prototype distance {:.6} (2*kappa = {:.6})",
        outcome.report.k,
        outcome.report.goal_state,
        outcome.report.edge_count,
        outcome.report.noise_points,
        outcome.report.min_prototype_distance,
        2.0 * cfg.labeling.kappa
    );
    Ok(())
}

fn require_file(path: &Path, hint: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} not found: {hint}", path.display()),
        )));
    }
    Ok(())
}

fn cmd_train(cfg: &PipelineConfig, resume: Option<&Path>) -> Result<()> {
    if cfg.featurizer.kind != "synthetic" {
        return Err(Error::Config(
            "training rolls out in the block world and needs the synthetic featurizer".into(),
        ));
    }
    let task = TaskSpec::load(&cfg.task.spec_path)?;
    let rm_path = cfg.io.out_dir.join(RM_FILE);
    require_file(&rm_path, "run `rmlearn infer` first")?;
    let (rm, labeling, _task_name) = load_rm(&rm_path)?;
    if rm.gamma() != cfg.rm.gamma {
        return Err(Error::Config(format!(
            "config gamma {} does not match the inferred machine's gamma {}",
            cfg.rm.gamma,
            rm.gamma()
        )));
    }
    let extractor = synthetic_extractor(cfg, &task)?;

    let env_demos;
    let demos = if cfg.train.seed_from_demos {
        let path = cfg.io.out_dir.join(ENV_DEMOS);
        require_file(&path, "run `rmlearn demo-gen` first")?;
        env_demos = load_env_demos(&path)?;
        Some(env_demos.demos.as_slice())
    } else {
        None
    };

    let (tables, start) = match resume {
        Some(path) => {
            require_file(path, "no checkpoint to resume from")?;
            load_checkpoint(path)?
        }
        None => (QTables::new(rm.num_states(), task.num_actions()), 0),
    };
    let train_cfg = cfg.train_config();
    let out = train_from(
        &task, &rm, &labeling, &extractor, &train_cfg, demos, tables, start,
    )?;

    std::fs::create_dir_all(&cfg.io.out_dir)?;
    write_metrics(&out.metrics, &cfg.io.out_dir.join(METRICS_CSV))?;
    save_checkpoint(
        &out.tables,
        out.episodes_done,
        cfg.io.out_dir.join(CHECKPOINT),
    )?;
    let last = out.metrics.last();
    println!(
        "train: task `{}`, episodes {}..{}, final eval reward {} placement {}",
        task.name,
        start,
        out.episodes_done,
        last.map(|m| format!("{:.4}", m.total_reward))
            .unwrap_or_else(|| "-".into()),
        last.map(|m| format!("{:.4}", m.placement_error))
            .unwrap_or_else(|| "-".into()),
    );
    Ok(())
}

fn write_metrics(metrics: &[EvalRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(e.to_string()))?;
    w.write_record(["episode", "total_reward", "placement_error", "rm_trace"])
        .map_err(|e| Error::Config(e.to_string()))?;
    for m in metrics {
        let trace = m
            .rm_trace
            .iter()
            .map(|u| u.to_string())
            .collect::<Vec<_>>()
            .join("-");
        w.write_record([
            m.episode.to_string(),
            format_float(m.total_reward),
            format_float(m.placement_error),
            trace,
        ])
        .map_err(|e| Error::Config(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn format_float(v: f64) -> String {
    serde_json::Number::from_f64(v)
        .map(|n| n.to_string())
        .unwrap_or_else(|| v.to_string())
}

#[derive(Debug, Serialize, Deserialize)]
struct SeedResult {
    seed: u64,
    total_reward: f64,
    placement_error: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct EvalReport {
    task: String,
    checkpoint: String,
    seeds: usize,
    mean_reward: f64,
    std_reward: f64,
    mean_placement_error: f64,
    std_placement_error: f64,
    rm_trace: Vec<usize>,
    per_seed: Vec<SeedResult>,
}

fn cmd_eval(cfg: &PipelineConfig, checkpoint: Option<&Path>, seeds: usize, json: bool) -> Result<()> {
    if seeds == 0 {
        return Err(Error::Config("eval needs at least one seed".into()));
    }
    if cfg.featurizer.kind != "synthetic" {
        return Err(Error::Config(
            "evaluation rolls out in the block world and needs the synthetic featurizer".into(),
        ));
    }
    let task = TaskSpec::load(&cfg.task.spec_path)?;
    let rm_path = cfg.io.out_dir.join(RM_FILE);
    require_file(&rm_path, "run `rmlearn infer` first")?;
    let (rm, labeling, _) = load_rm(&rm_path)?;
    let extractor = synthetic_extractor(cfg, &task)?;
    let ckpt_path = checkpoint
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| cfg.io.out_dir.join(CHECKPOINT));
    require_file(&ckpt_path, "run `rmlearn train` first")?;
    let (tables, _) = load_checkpoint(&ckpt_path)?;

    let mut per_seed = Vec::with_capacity(seeds);
    let mut first_trace = Vec::new();
    for s in 0..seeds as u64 {
        let rec = evaluate_greedy(&task, &rm, &labeling, &extractor, &tables, s)?;
        if s == 0 {
            first_trace = rec.rm_trace.clone();
        }
        per_seed.push(SeedResult {
            seed: s,
            total_reward: rec.total_reward,
            placement_error: rec.placement_error,
        });
    }
    let mean = |f: fn(&SeedResult) -> f64| -> f64 {
        per_seed.iter().map(f).sum::<f64>() / per_seed.len() as f64
    };
    let mean_reward = mean(|r| r.total_reward);
    let mean_placement = mean(|r| r.placement_error);
    let var = |f: fn(&SeedResult) -> f64, m: f64| -> f64 {
        per_seed.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / per_seed.len() as f64
    };
    let report = EvalReport {
        task: task.name.clone(),
        checkpoint: ckpt_path.display().to_string(),
        seeds,
        mean_reward,
        std_reward: var(|r| r.total_reward, mean_reward).sqrt(),
        mean_placement_error: mean_placement,
        std_placement_error: var(|r| r.placement_error, mean_placement).sqrt(),
        rm_trace: first_trace,
        per_seed,
    };
    std::fs::create_dir_all(&cfg.io.out_dir)?;
    let mut text = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Config(format!("report serialization: {e}")))?;
    text.push('\n');
    std::fs::write(cfg.io.out_dir.join(EVAL_REPORT), &text)?;
    if json {
        println!("{text}");
    } else {
        println!(
            "eval: task `{}`, {} seeds\n  reward          {:.4} +- {:.4}\n  placement error {:.4} +- {:.4}\n  rm trace (seed 0): {}",
            report.task,
            report.seeds,
            report.mean_reward,
            report.std_reward,
            report.mean_placement_error,
            report.std_placement_error,
            report
                .rm_trace
                .iter()
                .map(|u| format!("u{u}"))
                .collect::<Vec<_>>()
                .join(" -> ")
        );
    }
    Ok(())
}

fn cmd_export(cfg: &PipelineConfig, self_loops: bool, dot_out: Option<&Path>) -> Result<()> {
    let rm_path = cfg.io.out_dir.join(RM_FILE);
    require_file(&rm_path, "run `rmlearn infer` first")?;
    let (rm, _, _) = load_rm(&rm_path)?;
    let out = dot_out
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| cfg.io.out_dir.join(RM_DOT));
    rm.export_graph(&out, self_loops)?;
    println!(
        "export: {} states, {} edges -> {}",
        rm.num_states(),
        rm.edges().len(),
        out.display()
    );
    Ok(())
}
