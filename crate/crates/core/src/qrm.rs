//! Per-RM-state tabular Q-learning over the product of environment and
//! reward-machine states.
//!
//! One Q-table and one replay buffer per RM state. The TD target for a
//! transition whose RM state moves `u -> u'` bootstraps from the table of
//! `u'` (cross-table bootstrapping). At the end of each episode every
//! table takes one batch update sampled from its own buffer. Everything is
//! deterministic given the config seed: episode RNG streams are derived by
//! mixing the seed with the episode index, which also makes resumed runs
//! line up with fresh ones.

use std::collections::{BTreeMap, VecDeque};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blockworld::{placement_error, reset, step, Demo, PickPlaceAction, TaskSpec};
use crate::error::{Error, Result};
use crate::featurize::FeatureExtractor;
use crate::rmcore::LabelingFn;
use crate::rmcore::{RewardMachine, RmRunState};
use crate::util::mix64;

/// Training hyperparameters. `gamma` is shared with the reward machine.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub batch_size: usize,
    pub episodes: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eval_every: usize,
    pub buffer_capacity: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.9,
            alpha: 0.1,
            batch_size: 16,
            episodes: 2000,
            eps_start: 0.7,
            eps_end: 0.1,
            eval_every: 5,
            buffer_capacity: 10_000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config("gamma must lie in (0, 1]".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config("alpha must lie in (0, 1]".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.eps_start >= self.eps_end && self.eps_end >= 0.0) {
            return Err(Error::Config("need eps_start >= eps_end >= 0".into()));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::Config("buffer_capacity must be positive".into()));
        }
        Ok(())
    }
}

/// Exponential exploration schedule from `eps_start` down to `eps_end`.
pub fn epsilon_at(cfg: &TrainConfig, episode: usize) -> Result<f64> {
    if episode >= cfg.episodes {
        return Err(Error::Range {
            episode,
            episodes: cfg.episodes,
        });
    }
    if cfg.episodes == 1 || cfg.eps_start == 0.0 {
        return Ok(cfg.eps_start);
    }
    let t = episode as f64 / (cfg.episodes - 1) as f64;
    Ok(cfg.eps_start * (cfg.eps_end / cfg.eps_start).powf(t))
}

/// TD target: `r` when terminal, else `r + gamma * next_q_max`.
pub fn td_target(r: f64, gamma: f64, next_q_max: f64, done: bool) -> f64 {
    if done {
        r
    } else {
        r + gamma * next_q_max
    }
}

/// One environment transition with its RM-state context.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state_key: String,
    pub action: usize,
    pub reward: f64,
    pub next_state_key: String,
    pub u: usize,
    pub u_next: usize,
    pub done: bool,
}

/// One Q-table per RM state: `(env-state key, action) -> value`, default 0.
#[derive(Debug, Clone, PartialEq)]
pub struct QTables {
    tables: Vec<BTreeMap<String, Vec<f64>>>,
    num_actions: usize,
}

impl QTables {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        QTables {
            tables: vec![BTreeMap::new(); num_states],
            num_actions,
        }
    }

    pub fn num_states(&self) -> usize {
        self.tables.len()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn q(&self, u: usize, key: &str, action: usize) -> f64 {
        self.tables[u]
            .get(key)
            .map(|row| row[action])
            .unwrap_or(0.0)
    }

    /// Max over actions for a state key; 0 for unseen keys.
    pub fn max_q(&self, u: usize, key: &str) -> f64 {
        self.tables[u]
            .get(key)
            .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .unwrap_or(0.0)
    }

    /// Greedy action, ties broken by lowest action index.
    pub fn argmax(&self, u: usize, key: &str) -> usize {
        match self.tables[u].get(key) {
            None => 0,
            Some(row) => {
                let mut best = 0;
                for (a, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = a;
                    }
                }
                best
            }
        }
    }

    fn row_mut(&mut self, u: usize, key: &str) -> &mut Vec<f64> {
        let actions = self.num_actions;
        self.tables[u]
            .entry(key.to_string())
            .or_insert_with(|| vec![0.0; actions])
    }

    /// Total number of (state key, action-row) entries across tables.
    pub fn row_count(&self) -> usize {
        self.tables.iter().map(|t| t.len()).sum()
    }
}

/// Applies one TD update per transition, bootstrapping from the table of
/// the transition's next RM state.
pub fn q_update(tables: &mut QTables, batch: &[Transition], alpha: f64, gamma: f64) -> Result<()> {
    for t in batch {
        if t.u >= tables.num_states() {
            return Err(Error::StateIndex(t.u));
        }
        if t.u_next >= tables.num_states() {
            return Err(Error::StateIndex(t.u_next));
        }
        let next_max = if t.done {
            0.0
        } else {
            tables.max_q(t.u_next, &t.next_state_key)
        };
        let y = td_target(t.reward, gamma, next_max, t.done);
        let row = tables.row_mut(t.u, &t.state_key);
        row[t.action] += alpha * (y - row[t.action]);
    }
    Ok(())
}

/// Per-RM-state FIFO ring buffers of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffers {
    buffers: Vec<VecDeque<Transition>>,
    capacity: usize,
}

impl ReplayBuffers {
    pub fn new(num_states: usize, capacity: usize) -> Self {
        ReplayBuffers {
            buffers: vec![VecDeque::new(); num_states],
            capacity,
        }
    }

    pub fn push(&mut self, transition: Transition) -> Result<()> {
        let u = transition.u;
        if u >= self.buffers.len() {
            return Err(Error::StateIndex(u));
        }
        if self.buffers[u].len() == self.capacity {
            self.buffers[u].pop_front();
        }
        self.buffers[u].push_back(transition);
        Ok(())
    }

    pub fn len(&self, u: usize) -> usize {
        self.buffers[u].len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffers.iter().all(|b| b.is_empty())
    }

    pub fn num_states(&self) -> usize {
        self.buffers.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, u: usize, i: usize) -> &Transition {
        &self.buffers[u][i]
    }

    /// Uniform sample with replacement.
    pub fn sample(&self, u: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<Transition> {
        let buf = &self.buffers[u];
        if buf.is_empty() {
            return Vec::new();
        }
        (0..n)
            .map(|_| buf[rng.random_range(0..buf.len())].clone())
            .collect()
    }
}

/// Replays expert demonstrations through the environment and RM, filling
/// each transition into the buffer of its source RM state.
pub fn seed_buffers_from_demos(
    buffers: &mut ReplayBuffers,
    demos: &[Demo],
    rm: &RewardMachine,
    labeling: &LabelingFn,
    extractor: &FeatureExtractor,
) -> Result<()> {
    for (di, demo) in demos.iter().enumerate() {
        if demo.states.len() != demo.actions.len() + 1 {
            return Err(Error::ReplayMismatch { demo: di, step: 0 });
        }
        let mut state = demo.states[0].clone();
        let mut run = RmRunState {
            current: rm.initial(),
            done: rm.initial() == rm.goal(),
        };
        for (t, action) in demo.actions.iter().enumerate() {
            let next = step(&state, action);
            if next != demo.states[t + 1] {
                return Err(Error::ReplayMismatch { demo: di, step: t });
            }
            let props = labeling.label(&extractor.featurize_state(&next)?)?;
            let (next_run, reward) = rm.step(run, &props)?;
            buffers.push(Transition {
                state_key: state.canonical_key(),
                action: action.index(next.grid_w, next.grid_h),
                reward,
                next_state_key: next.canonical_key(),
                u: run.current,
                u_next: next_run.current,
                done: next_run.done,
            })?;
            state = next;
            run = next_run;
        }
    }
    Ok(())
}

/// One greedy-evaluation measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub episode: usize,
    pub total_reward: f64,
    pub placement_error: f64,
    /// RM states visited, consecutive repeats collapsed.
    pub rm_trace: Vec<usize>,
}

/// Greedy rollout (epsilon = 0): cumulative undiscounted shaped reward,
/// final placement error, and the RM trace.
pub fn evaluate_greedy(
    task: &TaskSpec,
    rm: &RewardMachine,
    labeling: &LabelingFn,
    extractor: &FeatureExtractor,
    tables: &QTables,
    seed: u64,
) -> Result<EvalRecord> {
    let mut state = reset(task, seed);
    let mut run = RmRunState {
        current: rm.initial(),
        done: rm.initial() == rm.goal(),
    };
    let mut trace = vec![run.current];
    let mut total = 0.0;
    for _ in 0..task.step_cap {
        if run.done {
            break;
        }
        let key = state.canonical_key();
        let action_index = tables.argmax(run.current, &key);
        let action = PickPlaceAction::from_index(action_index, task.grid_w(), task.grid_h());
        let next = step(&state, &action);
        let props = labeling.label(&extractor.featurize_state(&next)?)?;
        let (next_run, reward) = rm.step(run, &props)?;
        total += reward;
        if next_run.current != run.current {
            trace.push(next_run.current);
        }
        state = next;
        run = next_run;
    }
    Ok(EvalRecord {
        episode: 0,
        total_reward: total,
        placement_error: placement_error(&state, task),
        rm_trace: trace,
    })
}

/// Tables plus the greedy-evaluation series recorded during training.
#[derive(Debug)]
pub struct TrainOutput {
    pub tables: QTables,
    pub metrics: Vec<EvalRecord>,
    /// Episodes completed in total (for checkpointing).
    pub episodes_done: usize,
    /// First episode whose training rollout reached the RM goal.
    pub first_goal_episode: Option<usize>,
}

/// Trains from scratch. Buffers are seeded from `demos` when given.
pub fn train(
    task: &TaskSpec,
    rm: &RewardMachine,
    labeling: &LabelingFn,
    extractor: &FeatureExtractor,
    cfg: &TrainConfig,
    demos: Option<&[Demo]>,
) -> Result<TrainOutput> {
    let tables = QTables::new(rm.num_states(), task.num_actions());
    train_from(task, rm, labeling, extractor, cfg, demos, tables, 0)
}

/// Continues training existing tables from `start_episode` up to
/// `cfg.episodes`.
#[allow(clippy::too_many_arguments)]
pub fn train_from(
    task: &TaskSpec,
    rm: &RewardMachine,
    labeling: &LabelingFn,
    extractor: &FeatureExtractor,
    cfg: &TrainConfig,
    demos: Option<&[Demo]>,
    mut tables: QTables,
    start_episode: usize,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if tables.num_states() != rm.num_states() {
        return Err(Error::Config(
            "q-tables are indexed by a different number of RM states".into(),
        ));
    }
    if tables.num_actions() != task.num_actions() {
        return Err(Error::Config(
            "q-tables were built for a different action space".into(),
        ));
    }
    let mut buffers = ReplayBuffers::new(rm.num_states(), cfg.buffer_capacity);
    if let Some(demos) = demos {
        seed_buffers_from_demos(&mut buffers, demos, rm, labeling, extractor)?;
    }
    let mut metrics = Vec::new();
    let mut first_goal_episode = None;
    let num_actions = task.num_actions();

    for ep in start_episode..cfg.episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(cfg.seed, ep as u64));
        let eps = epsilon_at(cfg, ep)?;
        let mut state = reset(task, mix64(cfg.seed, (ep as u64) | (1 << 63)));
        let mut run = RmRunState {
            current: rm.initial(),
            done: rm.initial() == rm.goal(),
        };
        for _ in 0..task.step_cap {
            if run.done {
                break;
            }
            let key = state.canonical_key();
            let action_index = if rng.random::<f64>() < eps {
                rng.random_range(0..num_actions)
            } else {
                tables.argmax(run.current, &key)
            };
            let action = PickPlaceAction::from_index(action_index, task.grid_w(), task.grid_h());
            let next = step(&state, &action);
            let props = labeling.label(&extractor.featurize_state(&next)?)?;
            let (next_run, reward) = rm.step(run, &props)?;
            buffers.push(Transition {
                state_key: key,
                action: action_index,
                reward,
                next_state_key: next.canonical_key(),
                u: run.current,
                u_next: next_run.current,
                done: next_run.done,
            })?;
            state = next;
            run = next_run;
        }
        if run.done && first_goal_episode.is_none() {
            first_goal_episode = Some(ep);
        }
        // one batch update per table per episode
        for u in 0..rm.num_states() {
            if buffers.len(u) == 0 {
                continue;
            }
            let batch = buffers.sample(u, cfg.batch_size, &mut rng);
            q_update(&mut tables, &batch, cfg.alpha, cfg.gamma)?;
        }
        if cfg.eval_every > 0 && (ep + 1) % cfg.eval_every == 0 {
            let mut record = evaluate_greedy(
                task,
                rm,
                labeling,
                extractor,
                &tables,
                mix64(cfg.seed, (ep as u64) | (1 << 62)),
            )?;
            record.episode = ep + 1;
            metrics.push(record);
        }
    }
    Ok(TrainOutput {
        tables,
        metrics,
        episodes_done: cfg.episodes.max(start_episode),
        first_goal_episode,
    })
}

// --- checkpoint format -------------------------------------------------------

const CHECKPOINT_MAGIC: &[u8; 4] = b"RMQ1";
const CHECKPOINT_VERSION: u32 = 1;

/// Writes tables and the completed-episode counter. Deterministic byte
/// layout: tables iterate in key order.
pub fn save_checkpoint(
    tables: &QTables,
    episodes_done: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
    w.write_u32::<LittleEndian>(episodes_done as u32)?;
    w.write_u32::<LittleEndian>(tables.num_states() as u32)?;
    w.write_u32::<LittleEndian>(tables.num_actions() as u32)?;
    for table in &tables.tables {
        w.write_u32::<LittleEndian>(table.len() as u32)?;
        for (key, row) in table {
            let bytes = key.as_bytes();
            w.write_u32::<LittleEndian>(bytes.len() as u32)?;
            w.write_all(bytes)?;
            for &v in row {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(QTables, usize)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Parse {
            line: 0,
            msg: "bad checkpoint magic (expected RMQ1)".into(),
        });
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Parse {
            line: 0,
            msg: format!("unsupported checkpoint version {version}"),
        });
    }
    let episodes_done = r.read_u32::<LittleEndian>()? as usize;
    let num_states = r.read_u32::<LittleEndian>()? as usize;
    let num_actions = r.read_u32::<LittleEndian>()? as usize;
    let mut tables = QTables::new(num_states, num_actions);
    for u in 0..num_states {
        let entries = r.read_u32::<LittleEndian>()? as usize;
        for _ in 0..entries {
            let klen = r.read_u32::<LittleEndian>()? as usize;
            let mut kbuf = vec![0u8; klen];
            r.read_exact(&mut kbuf)?;
            let key = String::from_utf8(kbuf).map_err(|_| Error::Parse {
                line: 0,
                msg: "checkpoint key is not utf-8".into(),
            })?;
            let mut row = vec![0.0f64; num_actions];
            for v in &mut row {
                *v = r.read_f64::<LittleEndian>()?;
            }
            tables.tables[u].insert(key, row);
        }
    }
    Ok((tables, episodes_done))
}
