//! Pipeline configuration file: one TOML section per module, CLI flags
//! override file values, `RMLEARN_SEED` overrides the seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qrm::TrainConfig;
use crate::trajectories::DemoFormat;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSection {
    pub spec_path: PathBuf,
    /// Number of expert demonstrations to generate.
    pub demos: usize,
    /// Require every allowed ordering to be covered.
    #[serde(default = "default_true")]
    pub coverage: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeaturizerSection {
    /// `synthetic` or `precomputed`.
    #[serde(default = "default_featurizer")]
    pub kind: String,
    #[serde(default)]
    pub noise: f64,
    /// Embeddings file for the precomputed kind.
    #[serde(default)]
    pub embeddings_path: Option<PathBuf>,
    #[serde(default)]
    pub embeddings_format: Option<DemoFormat>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSection {
    pub eps: f64,
    pub min_points: usize,
    #[serde(default)]
    pub normalize: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelingSection {
    pub kappa: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RmSection {
    pub gamma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSection {
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_eps_start")]
    pub eps_start: f64,
    #[serde(default = "default_eps_end")]
    pub eps_end: f64,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default = "default_capacity")]
    pub buffer_capacity: usize,
    /// Seed replay buffers from the expert demonstrations.
    #[serde(default = "default_true")]
    pub seed_from_demos: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IoSection {
    pub out_dir: PathBuf,
    #[serde(default = "default_format")]
    pub format: DemoFormat,
    #[serde(default)]
    pub seed: u64,
}

fn default_true() -> bool {
    true
}
fn default_featurizer() -> String {
    "synthetic".into()
}
fn default_episodes() -> usize {
    2000
}
fn default_alpha() -> f64 {
    0.1
}
fn default_batch() -> usize {
    16
}
fn default_eps_start() -> f64 {
    0.7
}
fn default_eps_end() -> f64 {
    0.1
}
fn default_eval_every() -> usize {
    5
}
fn default_capacity() -> usize {
    10_000
}
fn default_format() -> DemoFormat {
    DemoFormat::Csv
}

/// Complete pipeline configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub task: TaskSection,
    pub featurizer: FeaturizerSection,
    pub cluster: ClusterSection,
    pub labeling: LabelingSection,
    pub rm: RmSection,
    pub train: TrainSection,
    pub io: IoSection,
}

impl PipelineConfig {
    /// Parses a config file. Relative paths are resolved against the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg: PipelineConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.task.spec_path = resolve(base, &cfg.task.spec_path);
        cfg.io.out_dir = resolve(base, &cfg.io.out_dir);
        if let Some(p) = cfg.featurizer.embeddings_path.take() {
            cfg.featurizer.embeddings_path = Some(resolve(base, &p));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.task.demos == 0 {
            return Err(Error::Config("task.demos must be positive".into()));
        }
        if !(self.cluster.eps > 0.0) {
            return Err(Error::Config("cluster.eps must be positive".into()));
        }
        if self.cluster.min_points == 0 {
            return Err(Error::Config("cluster.min_points must be positive".into()));
        }
        if !(self.labeling.kappa > 0.0) {
            return Err(Error::Config("labeling.kappa must be positive".into()));
        }
        if !(self.rm.gamma > 0.0 && self.rm.gamma <= 1.0) {
            return Err(Error::Config("rm.gamma must lie in (0, 1]".into()));
        }
        if self.featurizer.kind != "synthetic" && self.featurizer.kind != "precomputed" {
            return Err(Error::Config(format!(
                "featurizer.kind must be `synthetic` or `precomputed`, got `{}`",
                self.featurizer.kind
            )));
        }
        if self.featurizer.kind == "precomputed" && self.featurizer.embeddings_path.is_none() {
            return Err(Error::Config(
                "featurizer.embeddings_path is required for the precomputed kind".into(),
            ));
        }
        if !(self.featurizer.noise >= 0.0 && self.featurizer.noise.is_finite()) {
            return Err(Error::Config("featurizer.noise must be non-negative".into()));
        }
        self.train_config().validate()
    }

    /// Training parameters with the shared gamma and seed filled in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            gamma: self.rm.gamma,
            alpha: self.train.alpha,
            batch_size: self.train.batch_size,
            episodes: self.train.episodes,
            eps_start: self.train.eps_start,
            eps_end: self.train.eps_end,
            eval_every: self.train.eval_every,
            buffer_capacity: self.train.buffer_capacity,
            seed: self.io.seed,
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[task]
spec_path = "tasks/stack2.toml"
demos = 1

[featurizer]
kind = "synthetic"
noise = 0.01

[cluster]
eps = 0.06
min_points = 4

[labeling]
kappa = 0.06

[rm]
gamma = 0.9

[train]
episodes = 2000

[io]
out_dir = "out/stack2"
seed = 7
"#;

    #[test]
    fn parses_and_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, SAMPLE).unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.task.spec_path, dir.path().join("tasks/stack2.toml"));
        assert_eq!(cfg.io.out_dir, dir.path().join("out/stack2"));
        assert_eq!(cfg.io.seed, 7);
        assert!(cfg.task.coverage);
        assert_eq!(cfg.train.eval_every, 5);
        assert_eq!(cfg.train.batch_size, 16);
        let tc = cfg.train_config();
        assert_eq!(tc.gamma, 0.9);
        assert_eq!(tc.seed, 7);
    }

    #[test]
    fn rejects_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, SAMPLE.replace("eps = 0.06", "eps = 0.0")).unwrap();
        assert!(matches!(
            PipelineConfig::load(&path),
            Err(Error::Config(_))
        ));
        std::fs::write(&path, SAMPLE.replace("[task]\nspec_path", "[task]\nbogus")).unwrap();
        assert!(matches!(
            PipelineConfig::load(&path),
            Err(Error::Config(_))
        ));
    }
}
