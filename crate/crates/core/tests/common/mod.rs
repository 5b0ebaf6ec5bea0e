//! Shared test oracles, independent of the library's implementation paths:
//! a brute-force density-connectivity oracle for DBSCAN, exact value
//! iteration over explicit product MDPs, a random product-MDP generator,
//! and a shortest-path oracle over the blockworld x RM product graph.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rmlearn::blockworld::{reset, step, PickPlaceAction, TaskSpec};
use rmlearn::featurize::FeatureExtractor;
use rmlearn::rmcore::{EdgeMap, LabelingFn, RewardMachine, RmRunState};

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .expect("workspace root exists")
}

pub fn task_path(name: &str) -> PathBuf {
    workspace_root().join("tasks").join(format!("{name}.toml"))
}

pub fn config_path(name: &str) -> PathBuf {
    workspace_root().join("configs").join(format!("{name}.toml"))
}

pub fn golden_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("{name}.json"))
}

// --- brute-force DBSCAN oracle ------------------------------------------------

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Exhaustive density-connectivity DBSCAN: closed eps-neighborhood graph,
/// Warshall transitive closure over core points, components ordered by
/// their lowest core index, border points to the nearest core (ties by
/// lowest core index). Returns `None` for noise.
pub fn dbscan_oracle(points: &[Vec<f64>], eps: f64, min_points: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let mut adj = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            adj[i][j] = euclid(&points[i], &points[j]) <= eps;
        }
    }
    let core: Vec<bool> = (0..n)
        .map(|i| adj[i].iter().filter(|&&x| x).count() >= min_points)
        .collect();

    // transitive closure of the core-core adjacency
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            reach[i][j] = core[i] && core[j] && adj[i][j];
        }
    }
    for k in 0..n {
        if !core[k] {
            continue;
        }
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }

    // order components by their lowest core index
    let mut labels = vec![None; n];
    let mut next_label = 0usize;
    for i in 0..n {
        if !core[i] || labels[i].is_some() {
            continue;
        }
        labels[i] = Some(next_label);
        for j in 0..n {
            if reach[i][j] {
                labels[j] = Some(next_label);
            }
        }
        next_label += 1;
    }

    // border points
    for i in 0..n {
        if core[i] {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for j in 0..n {
            if !core[j] || !adj[i][j] {
                continue;
            }
            let d = euclid(&points[i], &points[j]);
            let better = match best {
                None => true,
                Some((bd, bj)) => d < bd || (d == bd && j < bj),
            };
            if better {
                best = Some((d, j));
            }
        }
        if let Some((_, j)) = best {
            labels[i] = labels[j];
        }
    }
    labels
}

/// True when some border point sits at exactly equal distance to core
/// points of two different clusters (the case the permutation-invariance
/// property excludes).
pub fn has_border_tie(points: &[Vec<f64>], eps: f64, min_points: usize) -> bool {
    let labels = dbscan_oracle(points, eps, min_points);
    let n = points.len();
    let core: Vec<bool> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| euclid(&points[i], &points[j]) <= eps)
                .count()
                >= min_points
        })
        .collect();
    for i in 0..n {
        if core[i] {
            continue;
        }
        let mut best = f64::INFINITY;
        for j in 0..n {
            if core[j] {
                let d = euclid(&points[i], &points[j]);
                if d <= eps && d < best {
                    best = d;
                }
            }
        }
        if best.is_infinite() {
            continue;
        }
        let clusters: BTreeSet<_> = (0..n)
            .filter(|&j| core[j] && euclid(&points[i], &points[j]) == best)
            .map(|j| labels[j])
            .collect();
        if clusters.len() > 1 {
            return true;
        }
    }
    false
}

// --- explicit product MDPs and exact value iteration ---------------------------

/// Deterministic tabular MDP with per-transition termination.
pub struct TabularMdp {
    pub num_states: usize,
    pub num_actions: usize,
    /// next[s][a]
    pub next: Vec<Vec<usize>>,
    /// reward[s][a]
    pub reward: Vec<Vec<f64>>,
    /// terminal[s][a]: taking `a` in `s` ends the episode
    pub terminal: Vec<Vec<bool>>,
}

/// Q-value iteration to a sup-norm tolerance.
pub fn value_iteration(mdp: &TabularMdp, gamma: f64, tol: f64) -> Vec<Vec<f64>> {
    let mut q = vec![vec![0.0f64; mdp.num_actions]; mdp.num_states];
    for _ in 0..20_000 {
        let mut delta = 0.0f64;
        let v: Vec<f64> = q
            .iter()
            .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        for s in 0..mdp.num_states {
            for a in 0..mdp.num_actions {
                let target = if mdp.terminal[s][a] {
                    mdp.reward[s][a]
                } else {
                    mdp.reward[s][a] + gamma * v[mdp.next[s][a]]
                };
                delta = delta.max((target - q[s][a]).abs());
                q[s][a] = target;
            }
        }
        if delta < tol {
            break;
        }
    }
    q
}

/// Per-state sets of actions within `tie_eps` of the max Q-value.
pub fn greedy_sets(q: &[Vec<f64>], tie_eps: f64) -> Vec<BTreeSet<usize>> {
    q.iter()
        .map(|row| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.iter()
                .enumerate()
                .filter(|(_, v)| m - **v <= tie_eps)
                .map(|(a, _)| a)
                .collect()
        })
        .collect()
}

/// A random env + random RM product, with rewards from the RM only.
pub struct RandomProduct {
    pub rm: RewardMachine,
    pub num_env_states: usize,
    pub num_actions: usize,
    /// env_next[s][a]
    pub env_next: Vec<Vec<usize>>,
    /// label per env state (at most one proposition)
    pub labels: Vec<Option<usize>>,
}

impl RandomProduct {
    pub fn product_index(&self, s: usize, u: usize) -> usize {
        s * self.rm.num_states() + u
    }

    /// Explicit product MDP under either the shaped or the sparse reward.
    pub fn to_mdp(&self, shaped: bool) -> TabularMdp {
        let k = self.rm.num_states();
        let n = self.num_env_states * k;
        let mut next = vec![vec![0usize; self.num_actions]; n];
        let mut reward = vec![vec![0.0f64; self.num_actions]; n];
        let mut terminal = vec![vec![false; self.num_actions]; n];
        for s in 0..self.num_env_states {
            for u in 0..k {
                let x = self.product_index(s, u);
                for a in 0..self.num_actions {
                    let s2 = self.env_next[s][a];
                    let props: Vec<usize> = self.labels[s2].into_iter().collect();
                    let (run, shaped_r) = self
                        .rm
                        .step(RmRunState { current: u, done: u == self.rm.goal() }, &props)
                        .expect("product step");
                    let u2 = run.current;
                    next[x][a] = self.product_index(s2, u2);
                    terminal[x][a] = u2 == self.rm.goal() && u != self.rm.goal();
                    reward[x][a] = if shaped {
                        shaped_r
                    } else if terminal[x][a] {
                        1.0
                    } else {
                        0.0
                    };
                }
            }
        }
        TabularMdp {
            num_states: n,
            num_actions: self.num_actions,
            next,
            reward,
            terminal,
        }
    }

    /// Longest finite min-steps-to-termination across product states.
    pub fn max_finite_horizon(&self) -> usize {
        let mdp = self.to_mdp(false);
        let dist = steps_to_termination(&mdp);
        dist.into_iter()
            .filter(|&d| d != usize::MAX)
            .max()
            .unwrap_or(0)
    }
}

/// Min number of steps until an episode-ending transition, per state
/// (usize::MAX when unreachable).
pub fn steps_to_termination(mdp: &TabularMdp) -> Vec<usize> {
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); mdp.num_states];
    let mut dist = vec![usize::MAX; mdp.num_states];
    let mut queue = VecDeque::new();
    for s in 0..mdp.num_states {
        for a in 0..mdp.num_actions {
            if mdp.terminal[s][a] {
                if dist[s] == usize::MAX {
                    dist[s] = 1;
                    queue.push_back(s);
                }
            } else {
                preds[mdp.next[s][a]].push(s);
            }
        }
    }
    while let Some(s) = queue.pop_front() {
        for &p in &preds[s] {
            if dist[p] == usize::MAX {
                dist[p] = dist[s] + 1;
                queue.push_back(p);
            }
        }
    }
    dist
}

/// Random reward machine with goal `k - 1` reachable from every state,
/// plus a random deterministically-labeled environment.
pub fn random_product(seed: u64, max_env_states: usize, max_rm_states: usize) -> RandomProduct {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(2..=max_rm_states.max(2));
    let goal = k - 1;
    let mut edges = EdgeMap::new();
    // a forward edge per non-goal state guarantees reachability
    for u in 0..goal {
        let target = rng.random_range(u + 1..=goal);
        edges.insert((u, target), target);
    }
    // extra random edges and self-loops
    for _ in 0..k * 2 {
        let u = rng.random_range(0..k);
        let p = rng.random_range(0..k);
        edges.insert((u, p), p);
    }
    let gamma = 0.9;
    let rm = RewardMachine::new(k, edges, goal, gamma).expect("random RM is well-formed");

    let num_env_states = rng.random_range(5..=max_env_states.max(5));
    let num_actions = rng.random_range(3..=6);
    let env_next = (0..num_env_states)
        .map(|_| {
            (0..num_actions)
                .map(|_| rng.random_range(0..num_env_states))
                .collect()
        })
        .collect();
    let labels = (0..num_env_states)
        .map(|_| {
            if rng.random::<f64>() < 0.5 {
                None
            } else {
                Some(rng.random_range(0..k))
            }
        })
        .collect();
    RandomProduct {
        rm,
        num_env_states,
        num_actions,
        env_next,
        labels,
    }
}

// --- blockworld x RM product graph oracle --------------------------------------

/// Explicit product graph of a deterministic blockworld task and an RM.
pub struct BlockProduct {
    pub keys: Vec<(String, usize)>,
    pub index: HashMap<(String, usize), usize>,
    /// per node: per action (next node, terminal)
    pub transitions: Vec<Vec<(usize, bool)>>,
}

/// Builds the product graph reachable from the task's fixed initial state,
/// then returns per-node minimal steps to goal entry.
pub fn block_product_distances(
    task: &TaskSpec,
    rm: &RewardMachine,
    labeling: &LabelingFn,
    extractor: &FeatureExtractor,
) -> (BlockProduct, Vec<usize>) {
    let num_actions = task.num_actions();
    let s0 = reset(task, 0);
    let start = (s0.canonical_key(), rm.initial());

    let mut index: HashMap<(String, usize), usize> = HashMap::new();
    let mut keys = Vec::new();
    let mut states = Vec::new();
    // row i belongs to node i; goal nodes are never expanded and keep empty rows
    let mut transitions: Vec<Vec<(usize, bool)>> = Vec::new();

    index.insert(start.clone(), 0);
    keys.push(start);
    states.push(s0);
    transitions.push(Vec::new());
    let mut frontier = VecDeque::from([0usize]);
    while let Some(i) = frontier.pop_front() {
        let (_, u) = keys[i].clone();
        let state = states[i].clone();
        let mut row = Vec::with_capacity(num_actions);
        for a in 0..num_actions {
            let action = PickPlaceAction::from_index(a, task.grid_w(), task.grid_h());
            let next = step(&state, &action);
            let props = labeling
                .label(&extractor.featurize_state(&next).unwrap())
                .unwrap();
            let (run, _) = rm
                .step(RmRunState { current: u, done: u == rm.goal() }, &props)
                .unwrap();
            let terminal = run.current == rm.goal() && u != rm.goal();
            let key = (next.canonical_key(), run.current);
            let j = match index.get(&key) {
                Some(&j) => j,
                None => {
                    let j = keys.len();
                    index.insert(key.clone(), j);
                    keys.push(key);
                    states.push(next.clone());
                    transitions.push(Vec::new());
                    if !terminal {
                        frontier.push_back(j);
                    }
                    j
                }
            };
            row.push((j, terminal));
        }
        transitions[i] = row;
    }

    // BFS over reversed edges from terminal transitions
    let n = keys.len();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        for &(t, terminal) in &transitions[s] {
            if terminal {
                if dist[s] == usize::MAX {
                    dist[s] = 1;
                    queue.push_back(s);
                }
            } else {
                preds[t].push(s);
            }
        }
    }
    while let Some(s) = queue.pop_front() {
        for &p in &preds[s] {
            if dist[p] == usize::MAX {
                dist[p] = dist[s] + 1;
                queue.push_back(p);
            }
        }
    }
    (
        BlockProduct {
            keys,
            index,
            transitions,
        },
        dist,
    )
}

/// Optimal (min-steps) action set at a product node.
pub fn optimal_actions(product: &BlockProduct, dist: &[usize], node: usize) -> BTreeSet<usize> {
    let cost = |&(t, terminal): &(usize, bool)| -> usize {
        if terminal {
            1
        } else if dist[t] == usize::MAX {
            usize::MAX
        } else {
            1 + dist[t]
        }
    };
    let best = product.transitions[node]
        .iter()
        .map(cost)
        .min()
        .unwrap_or(usize::MAX);
    product.transitions[node]
        .iter()
        .enumerate()
        .filter(|(_, t)| cost(t) == best)
        .map(|(a, _)| a)
        .collect()
}

// --- golden reward machines -----------------------------------------------------

/// Hand-written ground-truth RM over configuration keys.
#[derive(Debug, Clone, serde::Deserialize)]
pub struct GoldenRm {
    pub task: String,
    pub initial: String,
    pub goal: String,
    pub states: Vec<String>,
    pub edges: Vec<(String, String)>,
}

pub fn load_golden(name: &str) -> GoldenRm {
    let text = std::fs::read_to_string(golden_path(name))
        .unwrap_or_else(|e| panic!("golden file for {name}: {e}"));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("golden file for {name}: {e}"))
}

impl GoldenRm {
    pub fn edge_set(&self) -> BTreeSet<(String, String)> {
        self.edges.iter().cloned().collect()
    }
}

/// Maps inferred RM states to configuration keys via prototype sources and
/// the expert's sub-goal log.
pub fn state_to_config(
    labeling: &LabelingFn,
    log: &rmlearn::pipeline::SubgoalLog,
) -> BTreeMap<usize, String> {
    labeling
        .prototypes()
        .iter()
        .map(|p| {
            let key = log
                .config_at(p.source.trajectory_index, p.source.frame_index)
                .unwrap_or_else(|| {
                    panic!(
                        "prototype source ({}, {}) missing from the sub-goal log",
                        p.source.trajectory_index, p.source.frame_index
                    )
                });
            (p.cluster_id, key.to_string())
        })
        .collect()
}
