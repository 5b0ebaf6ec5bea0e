//! End-to-end orchestration: demonstrations -> features -> clusters ->
//! prototypes -> labeling -> reward machine.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blockworld::{Demo, TaskSpec};
use crate::cluster::{dbscan, extract_prototypes, Clustering, DbscanParams, PointLabel};
use crate::error::{Error, Result};
use crate::featurize::FeatureExtractor;
use crate::rmcore::{
    identify_goal, infer_delta_u, min_pairwise_distance, LabelingFn, RewardMachine,
};
use crate::trajectories::{DemonstrationSet, FeatureVector, Trajectory};

/// Ground-truth record of what each featurized frame depicts: the expert's
/// sub-goal ordering and the canonical configuration key per frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgoalLog {
    pub task: String,
    pub dwell: usize,
    pub demos: Vec<SubgoalLogEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgoalLogEntry {
    pub trajectory_id: String,
    pub ordering: Vec<String>,
    pub frame_configs: Vec<String>,
}

impl SubgoalLog {
    /// Configuration key shown at a (trajectory, frame) position.
    pub fn config_at(&self, trajectory_index: usize, frame_index: usize) -> Option<&str> {
        self.demos
            .get(trajectory_index)
            .and_then(|d| d.frame_configs.get(frame_index))
            .map(|s| s.as_str())
    }
}

/// Raw expert demonstrations on disk (states and actions), for replay into
/// training buffers without re-running the expert.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvDemoFile {
    pub task: String,
    pub demos: Vec<Demo>,
}

fn write_json_pretty<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line() as u64,
        msg: format!("{}: {e}", path.display()),
    })
}

pub fn save_subgoal_log(log: &SubgoalLog, path: impl AsRef<Path>) -> Result<()> {
    write_json_pretty(log, path.as_ref())
}

pub fn load_subgoal_log(path: impl AsRef<Path>) -> Result<SubgoalLog> {
    read_json(path.as_ref())
}

pub fn save_env_demos(file: &EnvDemoFile, path: impl AsRef<Path>) -> Result<()> {
    write_json_pretty(file, path.as_ref())
}

pub fn load_env_demos(path: impl AsRef<Path>) -> Result<EnvDemoFile> {
    read_json(path.as_ref())
}

/// Featurizes expert demonstrations into a demonstration set, recording
/// each reached configuration for `dwell_frames` consecutive frames, and
/// produces the matching ground-truth sub-goal log.
pub fn featurize_demos(
    task: &TaskSpec,
    demos: &[Demo],
    extractor: &FeatureExtractor,
) -> Result<(DemonstrationSet, SubgoalLog)> {
    if demos.is_empty() {
        return Err(Error::EmptyInput("no demonstrations to featurize"));
    }
    let dwell = task.dwell_frames;
    let mut trajectories = Vec::with_capacity(demos.len());
    let mut entries = Vec::with_capacity(demos.len());
    for demo in demos {
        let mut expanded = Vec::with_capacity(demo.states.len() * dwell);
        let mut configs = Vec::with_capacity(demo.states.len() * dwell);
        for state in &demo.states {
            for _ in 0..dwell {
                expanded.push(state.clone());
                configs.push(state.canonical_key());
            }
        }
        trajectories.push(extractor.featurize_trajectory(demo.id.clone(), &expanded)?);
        entries.push(SubgoalLogEntry {
            trajectory_id: demo.id.clone(),
            ordering: demo.ordering.clone(),
            frame_configs: configs,
        });
    }
    let set = DemonstrationSet::new(trajectories)?;
    let log = SubgoalLog {
        task: task.name.clone(),
        dwell,
        demos: entries,
    };
    Ok((set, log))
}

/// Summary written alongside the inferred reward machine.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceReport {
    pub task: Option<String>,
    pub points: usize,
    pub k: usize,
    pub noise_points: usize,
    pub cluster_sizes: Vec<usize>,
    pub kappa: f64,
    pub min_prototype_distance: f64,
    pub separation_margin: f64,
    pub goal_state: usize,
    pub d_goal: Vec<usize>,
    pub edge_count: usize,
}

pub fn save_report(report: &InferenceReport, path: impl AsRef<Path>) -> Result<()> {
    write_json_pretty(report, path.as_ref())
}

/// Everything the inference stage produces.
#[derive(Debug)]
pub struct InferenceOutcome {
    pub rm: RewardMachine,
    pub labeling: LabelingFn,
    pub clustering: Clustering,
    pub report: InferenceReport,
}

fn l2_normalized(points: &[&FeatureVector]) -> Result<Vec<FeatureVector>> {
    points
        .iter()
        .map(|p| {
            let norm = p.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                Ok((*p).clone())
            } else {
                FeatureVector::new(p.as_slice().iter().map(|v| v / norm).collect())
            }
        })
        .collect()
}

/// Clusters the demonstration set, identifies prototypes, and constructs
/// the reward machine: cluster 0 is pinned to the cluster containing every
/// trajectory's first frame, then the demonstrations' labeled transitions
/// define the edge map, the common final state becomes the goal, and
/// potentials follow from breadth-first goal distances.
pub fn infer_from_set(
    set: &DemonstrationSet,
    task_name: Option<&str>,
    params: &DbscanParams,
    kappa: f64,
    gamma: f64,
    normalize: bool,
) -> Result<InferenceOutcome> {
    let points = set.flat_points();
    let clustering = if normalize {
        let normalized = l2_normalized(&points)?;
        let refs: Vec<&FeatureVector> = normalized.iter().collect();
        dbscan(&refs, params)?
    } else {
        dbscan(&points, params)?
    };
    if clustering.k() == 0 {
        return Err(Error::NoClusters);
    }

    // pin the initial cluster to label 0
    let mut initial_cluster: Option<usize> = None;
    for (&idx, traj) in set
        .first_frame_indices()
        .iter()
        .zip(set.trajectories().iter())
    {
        match clustering.assignments()[idx] {
            PointLabel::Noise => {
                return Err(Error::InitialCluster(format!(
                    "first frame of trajectory `{}` was labeled noise",
                    traj.id
                )));
            }
            PointLabel::Cluster(c) => match initial_cluster {
                None => initial_cluster = Some(c),
                Some(c0) if c0 != c => {
                    return Err(Error::InitialCluster(format!(
                        "first frames span clusters {c0} and {c}"
                    )));
                }
                _ => {}
            },
        }
    }
    let clustering = clustering.with_promoted(initial_cluster.expect("set is non-empty"))?;

    let prototypes = extract_prototypes(set, &clustering)?;
    let labeling = LabelingFn::new(prototypes, kappa)?;

    let demos = set
        .trajectories()
        .iter()
        .map(|t| labeling.abstract_demonstration(t))
        .collect::<Result<Vec<_>>>()?;
    let k = clustering.k();
    let edges = infer_delta_u(&demos, k)?;
    let goal = identify_goal(&demos, &edges)?;
    let rm = RewardMachine::new(k, edges, goal, gamma)?;

    let vectors: Vec<&FeatureVector> = labeling.prototypes().iter().map(|p| &p.vector).collect();
    let min_distance = min_pairwise_distance(&vectors);
    let report = InferenceReport {
        task: task_name.map(|s| s.to_string()),
        points: points.len(),
        k,
        noise_points: clustering.noise_count(),
        cluster_sizes: clustering.cluster_sizes(),
        kappa,
        min_prototype_distance: min_distance,
        separation_margin: min_distance - 2.0 * kappa,
        goal_state: rm.goal(),
        d_goal: rm.d_goal_all().to_vec(),
        edge_count: rm.edges().len(),
    };
    Ok(InferenceOutcome {
        rm,
        labeling,
        clustering,
        report,
    })
}

/// Convenience wrapper: featurize expert demos, then infer.
#[allow(clippy::too_many_arguments)]
pub fn infer_from_demos(
    task: &TaskSpec,
    demos: &[Demo],
    extractor: &FeatureExtractor,
    eps: f64,
    min_points: usize,
    kappa: f64,
    gamma: f64,
    normalize: bool,
) -> Result<InferenceOutcome> {
    let (set, _log) = featurize_demos(task, demos, extractor)?;
    let params = DbscanParams::new(eps, min_points)?;
    infer_from_set(&set, Some(&task.name), &params, kappa, gamma, normalize)
}

/// Rebuilds a trajectory from states without dwell expansion. Used by tests
/// and by callers that featurize rollouts.
pub fn featurize_rollout(
    extractor: &FeatureExtractor,
    id: &str,
    states: &[crate::blockworld::BlockWorldState],
) -> Result<Trajectory> {
    extractor.featurize_trajectory(id, states)
}
