//! Reward machine construction and execution.
//!
//! RM states correspond one-to-one with sub-goal prototypes; proposition
//! `p_i` is true when the current feature vector lies strictly within
//! `kappa` of prototype i's vector. The transition function is inferred by
//! walking abstract demonstrations from the initial state and recording
//! first-seen edges; the shaped reward adds the potential difference
//! `gamma * psi(u') - psi(u)` with `psi(u) = gamma^{d_goal(u)}` to the
//! sparse goal-entry reward.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::{Prototype, PrototypeSource};
use crate::error::{Error, Result};
use crate::trajectories::{AbstractDemonstration, FeatureVector, Trajectory};

/// `(state, proposition) -> state` transition map. Every defined edge
/// targets the proposition's own state.
pub type EdgeMap = BTreeMap<(usize, usize), usize>;

/// Minimum pairwise Euclidean distance; infinity for fewer than two vectors.
/// The inference report and the labeling separation check both use this.
pub fn min_pairwise_distance(vectors: &[&FeatureVector]) -> f64 {
    let mut min = f64::INFINITY;
    for i in 0..vectors.len() {
        for j in (i + 1)..vectors.len() {
            if let Ok(d) = vectors[i].distance(vectors[j]) {
                if d < min {
                    min = d;
                }
            }
        }
    }
    min
}

/// The labeling function L: feature vector -> set of true propositions.
#[derive(Debug, Clone)]
pub struct LabelingFn {
    prototypes: Vec<Prototype>,
    kappa: f64,
    min_pairwise: f64,
}

impl LabelingFn {
    /// Builds L, enforcing the mutual-exclusion precondition: prototype
    /// vectors must be pairwise separated by more than `2 * kappa`.
    pub fn new(prototypes: Vec<Prototype>, kappa: f64) -> Result<Self> {
        if prototypes.is_empty() {
            return Err(Error::EmptyInput("labeling function needs prototypes"));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::Config("kappa must be finite and positive".into()));
        }
        let dim = prototypes[0].vector.dim();
        for p in &prototypes {
            if p.vector.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    actual: p.vector.dim(),
                });
            }
        }
        let vectors: Vec<&FeatureVector> = prototypes.iter().map(|p| &p.vector).collect();
        let min_pairwise = min_pairwise_distance(&vectors);
        if min_pairwise <= 2.0 * kappa {
            return Err(Error::SeparationViolation {
                min_distance: min_pairwise,
                two_kappa: 2.0 * kappa,
            });
        }
        Ok(LabelingFn {
            prototypes,
            kappa,
            min_pairwise,
        })
    }

    pub fn prototypes(&self) -> &[Prototype] {
        &self.prototypes
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        self.min_pairwise
    }

    pub fn dim(&self) -> usize {
        self.prototypes[0].vector.dim()
    }

    pub fn num_propositions(&self) -> usize {
        self.prototypes.len()
    }

    /// Ids of prototypes strictly within kappa. The separation invariant
    /// makes the result at most a singleton; asserted at runtime.
    pub fn label(&self, v: &FeatureVector) -> Result<Vec<usize>> {
        if v.dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: v.dim(),
            });
        }
        let mut out = Vec::new();
        for p in &self.prototypes {
            if v.distance(&p.vector)? < self.kappa {
                out.push(p.cluster_id);
            }
        }
        debug_assert!(
            out.len() <= 1,
            "mutual exclusion violated despite separation check: {out:?}"
        );
        Ok(out)
    }

    /// Elementwise labeling of a trajectory; length preserved.
    pub fn abstract_demonstration(&self, t: &Trajectory) -> Result<AbstractDemonstration> {
        let steps = t
            .frames()
            .iter()
            .map(|f| self.label(f))
            .collect::<Result<Vec<_>>>()?;
        Ok(AbstractDemonstration::new(steps))
    }
}

/// Infers the transition function from abstract demonstrations.
///
/// Each demonstration is walked from `u0`; an observed proposition `p_i`
/// at state `u` defines `delta_u(u, p_i) = u_i` when undefined, and the
/// walk then moves there. Empty label sets leave the state unchanged.
pub fn infer_delta_u(demos: &[AbstractDemonstration], k: usize) -> Result<EdgeMap> {
    let mut edges = EdgeMap::new();
    for demo in demos {
        let mut u = 0usize;
        for step in &demo.steps {
            for &p in step {
                if p >= k {
                    return Err(Error::UnknownProposition { id: p, k });
                }
                edges.entry((u, p)).or_insert(p);
                u = edges[&(u, p)];
            }
        }
    }
    Ok(edges)
}

/// Replays each abstract demonstration through the edge map from `u0` and
/// returns the common final state. Undefined edges leave the state
/// unchanged, mirroring execution semantics.
pub fn identify_goal(demos: &[AbstractDemonstration], edges: &EdgeMap) -> Result<usize> {
    let mut goal: Option<usize> = None;
    let mut any_nonempty = false;
    for demo in demos {
        let mut u = 0usize;
        for step in &demo.steps {
            for &p in step {
                any_nonempty = true;
                if let Some(&next) = edges.get(&(u, p)) {
                    u = next;
                }
            }
        }
        match goal {
            None => goal = Some(u),
            Some(g) if g != u => return Err(Error::InconsistentGoal(g, u)),
            _ => {}
        }
    }
    if !any_nonempty {
        return Err(Error::EmptyInput("no demonstration carries a non-empty label"));
    }
    let goal = goal.expect("at least one demonstration walked");
    if goal == 0 {
        return Err(Error::DegenerateTask);
    }
    Ok(goal)
}

/// Shortest edge-count distance to the goal per state (self-loops ignored)
/// and the potential `psi = gamma^d`. Errors when the goal is unreachable
/// from any state.
pub fn compute_potentials(
    edges: &EdgeMap,
    k: usize,
    goal: usize,
    gamma: f64,
) -> Result<(Vec<usize>, Vec<f64>)> {
    if goal >= k {
        return Err(Error::StateIndex(goal));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Config("gamma must lie in (0, 1]".into()));
    }
    // reverse adjacency over non-self-loop edges
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (&(from, _), &to) in edges {
        if from != to {
            preds[to].push(from);
        }
    }
    let mut dist = vec![usize::MAX; k];
    dist[goal] = 0;
    let mut frontier = std::collections::VecDeque::from([goal]);
    while let Some(u) = frontier.pop_front() {
        for &p in &preds[u] {
            if dist[p] == usize::MAX {
                dist[p] = dist[u] + 1;
                frontier.push_back(p);
            }
        }
    }
    if let Some(state) = dist.iter().position(|&d| d == usize::MAX) {
        return Err(Error::UnreachableGoal { state, goal });
    }
    let psi = dist.iter().map(|&d| gamma.powi(d as i32)).collect();
    Ok((dist, psi))
}

/// Immutable reward machine: states `u0..u{k-1}`, initial `u0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardMachine {
    num_states: usize,
    goal: usize,
    gamma: f64,
    edges: EdgeMap,
    d_goal: Vec<usize>,
    psi: Vec<f64>,
}

impl RewardMachine {
    pub fn new(num_states: usize, edges: EdgeMap, goal: usize, gamma: f64) -> Result<Self> {
        if num_states == 0 {
            return Err(Error::Config("reward machine needs at least one state".into()));
        }
        if goal >= num_states {
            return Err(Error::StateIndex(goal));
        }
        for (&(from, prop), &to) in &edges {
            if from >= num_states {
                return Err(Error::StateIndex(from));
            }
            if prop >= num_states || to >= num_states {
                return Err(Error::UnknownProposition {
                    id: prop.max(to),
                    k: num_states,
                });
            }
            if to != prop {
                return Err(Error::Config(format!(
                    "edge (u{from}, p{prop}) targets u{to}; transitions must target the \
                     proposition's own state"
                )));
            }
        }
        let (d_goal, psi) = compute_potentials(&edges, num_states, goal, gamma)?;
        Ok(RewardMachine {
            num_states,
            goal,
            gamma,
            edges,
            d_goal,
            psi,
        })
    }

    pub fn initial(&self) -> usize {
        0
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn goal(&self) -> usize {
        self.goal
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn edges(&self) -> &EdgeMap {
        &self.edges
    }

    pub fn d_goal(&self, state: usize) -> usize {
        self.d_goal[state]
    }

    pub fn psi(&self, state: usize) -> f64 {
        self.psi[state]
    }

    pub fn d_goal_all(&self) -> &[usize] {
        &self.d_goal
    }

    pub fn psi_all(&self) -> &[f64] {
        &self.psi
    }

    /// Shaped reward for the RM transition `u -> u_next`:
    /// `delta_r' + gamma * psi(u_next) - psi(u)`, where the sparse reward
    /// `delta_r'` is 1 exactly on entering the goal.
    pub fn shaped_reward(&self, u: usize, u_next: usize) -> f64 {
        let sparse = if u_next == self.goal && u != self.goal {
            1.0
        } else {
            0.0
        };
        sparse + self.gamma * self.psi[u_next] - self.psi[u]
    }

    /// Advances the run on a label set. Empty sets and undefined edges
    /// self-loop; more than one proposition is a labeling configuration
    /// error.
    pub fn step(&self, run: RmRunState, props: &[usize]) -> Result<(RmRunState, f64)> {
        if props.len() > 1 {
            return Err(Error::AmbiguousLabel {
                props: props.to_vec(),
            });
        }
        if run.current >= self.num_states {
            return Err(Error::StateIndex(run.current));
        }
        let u = run.current;
        let u_next = match props.first() {
            None => u,
            Some(&p) => {
                if p >= self.num_states {
                    return Err(Error::UnknownProposition {
                        id: p,
                        k: self.num_states,
                    });
                }
                *self.edges.get(&(u, p)).unwrap_or(&u)
            }
        };
        let reward = self.shaped_reward(u, u_next);
        Ok((
            RmRunState {
                current: u_next,
                done: u_next == self.goal,
            },
            reward,
        ))
    }

    /// Graphviz DOT rendering. Self-loops are omitted unless requested.
    pub fn to_dot(&self, include_self_loops: bool) -> String {
        let mut s = String::new();
        s.push_str("digraph reward_machine {\n");
        s.push_str("    rankdir=LR;\n");
        s.push_str("    start [shape=none, label=\"\", width=0, height=0];\n");
        s.push_str("    start -> u0;\n");
        for u in 0..self.num_states {
            let shape = if u == self.goal {
                ", peripheries=2"
            } else {
                ""
            };
            s.push_str(&format!(
                "    u{u} [label=\"u{u}\\nd_goal={}\\npsi={}\"{shape}];\n",
                self.d_goal[u], self.psi[u]
            ));
        }
        for (&(from, prop), &to) in &self.edges {
            if from == to && !include_self_loops {
                continue;
            }
            s.push_str(&format!("    u{from} -> u{to} [label=\"p{prop}\"];\n"));
        }
        s.push_str("}\n");
        s
    }

    pub fn export_graph(&self, path: impl AsRef<Path>, include_self_loops: bool) -> Result<()> {
        std::fs::write(path, self.to_dot(include_self_loops))?;
        Ok(())
    }
}

/// Cursor over a reward machine run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RmRunState {
    pub current: usize,
    pub done: bool,
}

impl RmRunState {
    pub fn start(rm: &RewardMachine) -> Self {
        RmRunState {
            current: rm.initial(),
            done: rm.initial() == rm.goal(),
        }
    }
}

// --- on-disk representation -------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RmEdgeRecord {
    from: usize,
    prop: usize,
    to: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PrototypeRecord {
    cluster_id: usize,
    center: Vec<f64>,
    vector: Vec<f64>,
    source: PrototypeSource,
}

/// Serialized reward machine plus labeling function, versioned.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RmFile {
    format: String,
    version: u32,
    task: Option<String>,
    gamma: f64,
    kappa: f64,
    feature_dim: usize,
    num_states: usize,
    goal: usize,
    d_goal: Vec<usize>,
    psi: Vec<f64>,
    edges: Vec<RmEdgeRecord>,
    prototypes: Vec<PrototypeRecord>,
}

const RM_FORMAT: &str = "rmlearn-rm";
const RM_VERSION: u32 = 1;

/// Writes the RM and labeling function as deterministic pretty JSON.
pub fn save_rm(
    rm: &RewardMachine,
    labeling: &LabelingFn,
    task: Option<&str>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let file = RmFile {
        format: RM_FORMAT.to_string(),
        version: RM_VERSION,
        task: task.map(|s| s.to_string()),
        gamma: rm.gamma(),
        kappa: labeling.kappa(),
        feature_dim: labeling.dim(),
        num_states: rm.num_states(),
        goal: rm.goal(),
        d_goal: rm.d_goal_all().to_vec(),
        psi: rm.psi_all().to_vec(),
        edges: rm
            .edges()
            .iter()
            .map(|(&(from, prop), &to)| RmEdgeRecord { from, prop, to })
            .collect(),
        prototypes: labeling
            .prototypes()
            .iter()
            .map(|p| PrototypeRecord {
                cluster_id: p.cluster_id,
                center: p.center.as_slice().to_vec(),
                vector: p.vector.as_slice().to_vec(),
                source: p.source.clone(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Config(format!("rm serialization: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Loads and revalidates an RM file.
pub fn load_rm(path: impl AsRef<Path>) -> Result<(RewardMachine, LabelingFn, Option<String>)> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let file: RmFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line() as u64,
        msg: format!("rm file {}: {e}", path.as_ref().display()),
    })?;
    if file.format != RM_FORMAT || file.version != RM_VERSION {
        return Err(Error::Parse {
            line: 0,
            msg: format!(
                "unsupported rm file format `{}` version {}",
                file.format, file.version
            ),
        });
    }
    let mut edges = EdgeMap::new();
    for e in &file.edges {
        edges.insert((e.from, e.prop), e.to);
    }
    let rm = RewardMachine::new(file.num_states, edges, file.goal, file.gamma)?;
    let prototypes = file
        .prototypes
        .into_iter()
        .map(|p| {
            Ok(Prototype {
                cluster_id: p.cluster_id,
                center: FeatureVector::new(p.center)?,
                vector: FeatureVector::new(p.vector)?,
                source: p.source,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if prototypes.len() != rm.num_states() {
        return Err(Error::Parse {
            line: 0,
            msg: "prototype count does not match state count".into(),
        });
    }
    let labeling = LabelingFn::new(prototypes, file.kappa)?;
    Ok((rm, labeling, file.task))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(values: &[f64]) -> FeatureVector {
        FeatureVector::new(values.to_vec()).unwrap()
    }

    fn proto(id: usize, v: &[f64]) -> Prototype {
        Prototype {
            cluster_id: id,
            center: fv(v),
            vector: fv(v),
            source: PrototypeSource {
                trajectory_id: "0".into(),
                trajectory_index: 0,
                frame_index: id,
            },
        }
    }

    fn chain_labeling() -> LabelingFn {
        LabelingFn::new(
            vec![
                proto(0, &[0.0, 0.0]),
                proto(1, &[1.0, 0.0]),
                proto(2, &[2.0, 0.0]),
            ],
            0.3,
        )
        .unwrap()
    }

    fn chain_rm() -> RewardMachine {
        let mut edges = EdgeMap::new();
        edges.insert((0, 1), 1);
        edges.insert((1, 2), 2);
        RewardMachine::new(3, edges, 2, 0.9).unwrap()
    }

    #[test]
    fn separation_invariant_enforced() {
        let err = LabelingFn::new(vec![proto(0, &[0.0]), proto(1, &[0.5])], 0.3);
        match err {
            Err(Error::SeparationViolation {
                min_distance,
                two_kappa,
            }) => {
                assert!((min_distance - 0.5).abs() < 1e-12);
                assert!((two_kappa - 0.6).abs() < 1e-12);
            }
            other => panic!("expected separation violation, got {other:?}"),
        }
    }

    #[test]
    fn label_zero_distance_and_boundary() {
        let l = chain_labeling();
        assert_eq!(l.label(&fv(&[1.0, 0.0])).unwrap(), vec![1]);
        // exactly kappa away from prototype 0: strict inequality -> empty
        assert_eq!(l.label(&fv(&[0.3, 0.0])).unwrap(), Vec::<usize>::new());
        assert!(matches!(
            l.label(&fv(&[0.0])),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn abstraction_maps_frames() {
        let l = chain_labeling();
        let t = Trajectory::new(
            "d",
            vec![fv(&[0.0, 0.0]), fv(&[1.0, 0.0]), fv(&[2.0, 0.0])],
        )
        .unwrap();
        let d = l.abstract_demonstration(&t).unwrap();
        assert_eq!(d.steps, vec![vec![0], vec![1], vec![2]]);

        let far = Trajectory::new("f", vec![fv(&[9.0, 9.0]), fv(&[8.0, 8.0])]).unwrap();
        let d = l.abstract_demonstration(&far).unwrap();
        assert_eq!(d.steps, vec![Vec::<usize>::new(), Vec::<usize>::new()]);
    }

    #[test]
    fn infer_delta_u_traces_demos() {
        let demos = vec![
            AbstractDemonstration::new(vec![vec![1]]),
            AbstractDemonstration::new(vec![vec![1], vec![2]]),
        ];
        let edges = infer_delta_u(&demos, 3).unwrap();
        let expected: Vec<((usize, usize), usize)> = vec![((0, 1), 1), ((1, 2), 2)];
        assert_eq!(edges.into_iter().collect::<Vec<_>>(), expected);
    }

    #[test]
    fn infer_delta_u_empty_labels_give_empty_map() {
        let demos = vec![AbstractDemonstration::new(vec![vec![], vec![], vec![]])];
        assert!(infer_delta_u(&demos, 3).unwrap().is_empty());
    }

    #[test]
    fn infer_delta_u_repeated_label_self_loops() {
        let demos = vec![AbstractDemonstration::new(vec![
            vec![0],
            vec![0],
            vec![1],
            vec![1],
        ])];
        let edges = infer_delta_u(&demos, 2).unwrap();
        assert_eq!(edges[&(0, 0)], 0);
        assert_eq!(edges[&(0, 1)], 1);
        assert_eq!(edges[&(1, 1)], 1);
        assert_eq!(edges.len(), 3);
    }

    #[test]
    fn infer_delta_u_rejects_unknown_proposition() {
        let demos = vec![AbstractDemonstration::new(vec![vec![5]])];
        assert!(matches!(
            infer_delta_u(&demos, 3),
            Err(Error::UnknownProposition { id: 5, k: 3 })
        ));
    }

    #[test]
    fn identify_goal_agreement_and_conflicts() {
        let demos = vec![
            AbstractDemonstration::new(vec![vec![1]]),
            AbstractDemonstration::new(vec![vec![1], vec![2]]),
        ];
        let edges = infer_delta_u(&demos, 3).unwrap();
        // first demo ends at u1, second at u2
        assert!(matches!(
            identify_goal(&demos, &edges),
            Err(Error::InconsistentGoal(1, 2))
        ));

        let demos = vec![
            AbstractDemonstration::new(vec![vec![1], vec![2]]),
            AbstractDemonstration::new(vec![vec![1], vec![1], vec![2]]),
        ];
        let edges = infer_delta_u(&demos, 3).unwrap();
        assert_eq!(identify_goal(&demos, &edges).unwrap(), 2);
    }

    #[test]
    fn identify_goal_degenerate_when_demos_stay_home() {
        let demos = vec![AbstractDemonstration::new(vec![vec![0], vec![0]])];
        let edges = infer_delta_u(&demos, 1).unwrap();
        assert!(matches!(
            identify_goal(&demos, &edges),
            Err(Error::DegenerateTask)
        ));
    }

    #[test]
    fn potentials_on_chain() {
        let rm = chain_rm();
        assert_eq!(rm.d_goal_all(), &[2, 1, 0]);
        let psi = rm.psi_all();
        assert!((psi[0] - 0.81).abs() < 1e-12);
        assert!((psi[1] - 0.9).abs() < 1e-12);
        assert!((psi[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn potentials_on_diamond() {
        let mut edges = EdgeMap::new();
        edges.insert((0, 1), 1);
        edges.insert((0, 2), 2);
        edges.insert((1, 3), 3);
        edges.insert((2, 3), 3);
        let rm = RewardMachine::new(4, edges, 3, 0.9).unwrap();
        assert_eq!(rm.d_goal_all(), &[2, 1, 1, 0]);
    }

    #[test]
    fn unreachable_goal_rejected() {
        let mut edges = EdgeMap::new();
        edges.insert((0, 1), 1);
        // u2 exists but nothing reaches the goal from it
        assert!(matches!(
            RewardMachine::new(3, edges, 1, 0.9),
            Err(Error::UnreachableGoal { state: 2, goal: 1 })
        ));
    }

    #[test]
    fn self_loops_do_not_shorten_distances() {
        let mut edges = EdgeMap::new();
        edges.insert((0, 0), 0);
        edges.insert((0, 1), 1);
        edges.insert((1, 1), 1);
        let rm = RewardMachine::new(2, edges, 1, 0.9).unwrap();
        assert_eq!(rm.d_goal_all(), &[1, 0]);
    }

    #[test]
    fn shaped_reward_patterns() {
        let rm = chain_rm();
        // one step closer, not goal: telescopes to zero
        assert!((rm.shaped_reward(0, 1) - 0.0).abs() < 1e-12);
        // stay at d=1
        assert!((rm.shaped_reward(1, 1) - (-0.09)).abs() < 1e-12);
        // goal entry from adjacent state
        assert!((rm.shaped_reward(1, 2) - 1.0).abs() < 1e-12);
        // moving away is strictly worse than staying
        assert!(rm.shaped_reward(1, 0) < rm.shaped_reward(1, 1));
    }

    #[test]
    fn rm_step_semantics() {
        let rm = chain_rm();
        let run = RmRunState::start(&rm);
        assert_eq!(run.current, 0);
        assert!(!run.done);

        // empty label: stay, pay the stay penalty
        let (r1, reward) = rm.step(run, &[]).unwrap();
        assert_eq!(r1.current, 0);
        assert!(!r1.done);
        let expected = (0.9 - 1.0) * rm.psi(0);
        assert!((reward - expected).abs() < 1e-12);

        // defined edge: move with zero shaped reward
        let (r2, reward) = rm.step(run, &[1]).unwrap();
        assert_eq!(r2.current, 1);
        assert!((reward - 0.0).abs() < 1e-12);

        // undefined edge: implicit self-loop
        let (r3, _) = rm.step(run, &[2]).unwrap();
        assert_eq!(r3.current, 0);

        // goal entry flips done
        let (r4, reward) = rm.step(r2, &[2]).unwrap();
        assert!(r4.done);
        assert!((reward - 1.0).abs() < 1e-12);

        assert!(matches!(
            rm.step(run, &[1, 2]),
            Err(Error::AmbiguousLabel { .. })
        ));
    }

    #[test]
    fn edge_targets_must_match_proposition() {
        let mut edges = EdgeMap::new();
        edges.insert((0, 1), 2);
        assert!(matches!(
            RewardMachine::new(3, edges, 1, 0.9),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn dot_export_counts() {
        let rm = chain_rm();
        let dot = rm.to_dot(false);
        assert_eq!(dot.matches("label=\"u").count(), 3);
        assert_eq!(dot.matches("-> u").count(), 3); // start arrow + 2 edges
        assert!(dot.contains("peripheries=2"));

        let mut edges = EdgeMap::new();
        edges.insert((0, 0), 0);
        edges.insert((0, 1), 1);
        let rm = RewardMachine::new(2, edges, 1, 0.9).unwrap();
        let without = rm.to_dot(false);
        let with = rm.to_dot(true);
        assert!(!without.contains("u0 -> u0"));
        assert!(with.contains("u0 -> u0"));
    }

    #[test]
    fn rm_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rm.json");
        let rm = chain_rm();
        let labeling = chain_labeling();
        save_rm(&rm, &labeling, Some("chain"), &path).unwrap();
        let (rm2, labeling2, task) = load_rm(&path).unwrap();
        assert_eq!(task.as_deref(), Some("chain"));
        assert_eq!(rm2, rm);
        assert_eq!(labeling2.kappa(), labeling.kappa());
        assert_eq!(labeling2.prototypes(), labeling.prototypes());

        // serialization is byte-stable
        let bytes_a = std::fs::read(&path).unwrap();
        save_rm(&rm2, &labeling2, task.as_deref(), &path).unwrap();
        let bytes_b = std::fs::read(&path).unwrap();
        assert_eq!(bytes_a, bytes_b);
    }
}
