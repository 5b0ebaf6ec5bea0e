//! Feature extraction: environment state -> feature vector.
//!
//! The synthetic extractor encodes per-block grid coordinates scaled to
//! [0,1], plus bounded uniform noise drawn from a stream keyed by (seed,
//! state). Keying the noise by the state keeps extraction a pure function,
//! so repeated visits of one configuration land on one point in feature
//! space — the density that sub-goal clustering relies on.
//!
//! The precomputed kind stands in for embeddings produced upstream (loaded
//! from a demonstrations file); it cannot featurize environment states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blockworld::BlockWorldState;
use crate::error::{Error, Result};
use crate::trajectories::{FeatureVector, Trajectory};
use crate::util::{fnv1a64, mix64};

/// Which feature extractor a pipeline uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorKind {
    SyntheticBlockworld,
    Precomputed,
}

impl std::str::FromStr for ExtractorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" | "synthetic_blockworld" => Ok(ExtractorKind::SyntheticBlockworld),
            "precomputed" => Ok(ExtractorKind::Precomputed),
            other => Err(Error::Config(format!("unknown featurizer `{other}`"))),
        }
    }
}

/// Deterministic feature extractor configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    pub kind: ExtractorKind,
    pub dim: usize,
    pub noise_scale: f64,
    pub seed: u64,
}

impl FeatureExtractor {
    /// Synthetic extractor for states with `num_blocks` blocks.
    pub fn synthetic(num_blocks: usize, noise_scale: f64, seed: u64) -> Result<Self> {
        if num_blocks == 0 {
            return Err(Error::Config("synthetic extractor needs at least one block".into()));
        }
        if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
            return Err(Error::Config("noise_scale must be finite and non-negative".into()));
        }
        Ok(FeatureExtractor {
            kind: ExtractorKind::SyntheticBlockworld,
            dim: 2 * num_blocks,
            noise_scale,
            seed,
        })
    }

    /// Marker for embeddings computed upstream and loaded from file.
    pub fn precomputed(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        Ok(FeatureExtractor {
            kind: ExtractorKind::Precomputed,
            dim,
            noise_scale: 0.0,
            seed: 0,
        })
    }

    /// phi(s): per-block (col, row) scaled to [0,1] plus seeded noise.
    pub fn featurize_state(&self, state: &BlockWorldState) -> Result<FeatureVector> {
        if self.kind != ExtractorKind::SyntheticBlockworld {
            return Err(Error::ExtractorKind(
                "precomputed extractor cannot featurize environment states".into(),
            ));
        }
        if 2 * state.blocks.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: 2 * state.blocks.len(),
            });
        }
        let wd = (state.grid_w.saturating_sub(1)).max(1) as f64;
        let hd = (state.grid_h.saturating_sub(1)).max(1) as f64;
        let mut values = Vec::with_capacity(self.dim);
        for b in &state.blocks {
            values.push(if state.grid_w > 1 { b.col as f64 / wd } else { 0.0 });
            values.push(if state.grid_h > 1 { b.row as f64 / hd } else { 0.0 });
        }
        if self.noise_scale > 0.0 {
            let key = fnv1a64(state.canonical_key().as_bytes());
            let mut rng = ChaCha8Rng::seed_from_u64(mix64(self.seed, key));
            for v in &mut values {
                *v += rng.random_range(-self.noise_scale..=self.noise_scale);
            }
        }
        FeatureVector::new(values)
    }

    /// Elementwise featurization of a state sequence, order preserved.
    pub fn featurize_trajectory(
        &self,
        id: impl Into<String>,
        states: &[BlockWorldState],
    ) -> Result<Trajectory> {
        if states.is_empty() {
            return Err(Error::EmptyInput("trajectory of states is empty"));
        }
        let frames = states
            .iter()
            .map(|s| self.featurize_state(s))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(id, frames)
    }
}
