//! Density-based clustering of demonstration feature vectors.
//!
//! DBSCAN after Ester et al.: a point is core when at least `min_points`
//! points (itself included) lie within the closed ball of radius `eps`;
//! clusters are the density-connected components of core points plus their
//! border points. Two departures from the textbook algorithm make the
//! output order-independent:
//!
//! * clusters are discovered by ascending index of their first core point,
//! * a border point reachable from several clusters joins the cluster of
//!   its nearest core point, ties broken by lowest core point index.
//!
//! Neighborhoods are computed naively in O(n^2); inputs here stay small.

use crate::error::{Error, Result};
use crate::trajectories::{DemonstrationSet, FeatureVector};

/// DBSCAN tuning parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbscanParams {
    /// Maximum neighbor distance (closed: `<= eps`).
    pub eps: f64,
    /// Minimum neighborhood size for a core point, counting the point itself.
    pub min_points: usize,
}

impl DbscanParams {
    pub fn new(eps: f64, min_points: usize) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Config("eps must be finite and positive".into()));
        }
        if min_points == 0 {
            return Err(Error::Config("min_points must be at least 1".into()));
        }
        Ok(DbscanParams { eps, min_points })
    }
}

/// Per-point assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointLabel {
    Noise,
    Cluster(usize),
}

/// Result of a DBSCAN run: dense cluster labels `0..k` plus noise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    assignments: Vec<PointLabel>,
    k: usize,
}

impl Clustering {
    pub fn assignments(&self) -> &[PointLabel] {
        &self.assignments
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn noise_count(&self) -> usize {
        self.assignments
            .iter()
            .filter(|l| **l == PointLabel::Noise)
            .count()
    }

    /// Member point indices of one cluster, ascending.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == PointLabel::Cluster(cluster))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for l in &self.assignments {
            if let PointLabel::Cluster(c) = l {
                sizes[*c] += 1;
            }
        }
        sizes
    }

    /// Relabels so that `cluster` becomes cluster 0 (a label transposition).
    pub fn with_promoted(&self, cluster: usize) -> Result<Clustering> {
        if cluster >= self.k {
            return Err(Error::StateIndex(cluster));
        }
        if cluster == 0 {
            return Ok(self.clone());
        }
        let assignments = self
            .assignments
            .iter()
            .map(|l| match *l {
                PointLabel::Cluster(c) if c == cluster => PointLabel::Cluster(0),
                PointLabel::Cluster(0) => PointLabel::Cluster(cluster),
                other => other,
            })
            .collect();
        Ok(Clustering {
            assignments,
            k: self.k,
        })
    }
}

fn check_uniform_dim(points: &[&FeatureVector]) -> Result<usize> {
    let dim = points[0].dim();
    for p in points {
        if p.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: p.dim(),
            });
        }
    }
    Ok(dim)
}

/// Runs DBSCAN over the points. `k = 0` (all noise) is a valid outcome.
pub fn dbscan(points: &[&FeatureVector], params: &DbscanParams) -> Result<Clustering> {
    if points.is_empty() {
        return Err(Error::EmptyInput("dbscan over no points"));
    }
    check_uniform_dim(points)?;
    let n = points.len();

    let mut neighborhoods: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        neighborhoods[i].push(i);
        for j in (i + 1)..n {
            let d = points[i].distance(points[j])?;
            if d <= params.eps {
                neighborhoods[i].push(j);
                neighborhoods[j].push(i);
            }
        }
    }
    let core: Vec<bool> = neighborhoods
        .iter()
        .map(|nb| nb.len() >= params.min_points)
        .collect();

    // Phase 1: clusters = connected components of core points, discovered in
    // ascending order of their first core point.
    let mut assignments = vec![PointLabel::Noise; n];
    let mut k = 0;
    for start in 0..n {
        if !core[start] || assignments[start] != PointLabel::Noise {
            continue;
        }
        let cluster = k;
        k += 1;
        assignments[start] = PointLabel::Cluster(cluster);
        let mut queue = vec![start];
        while let Some(u) = queue.pop() {
            for &v in &neighborhoods[u] {
                if core[v] && assignments[v] == PointLabel::Noise {
                    assignments[v] = PointLabel::Cluster(cluster);
                    queue.push(v);
                }
            }
        }
    }

    // Phase 2: border points join the cluster of their nearest core point.
    for i in 0..n {
        if core[i] {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for &j in &neighborhoods[i] {
            if !core[j] {
                continue;
            }
            let d = points[i].distance(points[j])?;
            let better = match best {
                None => true,
                Some((bd, bj)) => d < bd || (d == bd && j < bj),
            };
            if better {
                best = Some((d, j));
            }
        }
        if let Some((_, j)) = best {
            assignments[i] = assignments[j];
        }
    }

    Ok(Clustering { assignments, k })
}

/// Componentwise arithmetic mean of a non-empty point set.
pub fn cluster_center(points: &[&FeatureVector]) -> Result<FeatureVector> {
    if points.is_empty() {
        return Err(Error::EmptyInput("cluster center of no points"));
    }
    let dim = check_uniform_dim(points)?;
    let mut sums = vec![0.0f64; dim];
    for p in points {
        for (s, v) in sums.iter_mut().zip(p.as_slice()) {
            *s += v;
        }
    }
    let n = points.len() as f64;
    FeatureVector::new(sums.into_iter().map(|s| s / n).collect())
}

/// Where a prototype's vector came from in the demonstration set.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PrototypeSource {
    pub trajectory_id: String,
    pub trajectory_index: usize,
    pub frame_index: usize,
}

/// A cluster's center and its closest member (the prototypical state).
#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub cluster_id: usize,
    pub center: FeatureVector,
    pub vector: FeatureVector,
    pub source: PrototypeSource,
}

/// One prototype per cluster: the member closest to the cluster center,
/// argmin ties broken by dataset order (trajectory, then frame).
pub fn extract_prototypes(
    set: &DemonstrationSet,
    clustering: &Clustering,
) -> Result<Vec<Prototype>> {
    if clustering.k() == 0 {
        return Err(Error::NoClusters);
    }
    let points = set.flat_points();
    if points.len() != clustering.assignments().len() {
        return Err(Error::Config(
            "clustering does not match the demonstration set's point list".into(),
        ));
    }
    let mut prototypes = Vec::with_capacity(clustering.k());
    for c in 0..clustering.k() {
        let members = clustering.members(c);
        if members.is_empty() {
            return Err(Error::Config(format!("cluster {c} has no members")));
        }
        let member_points: Vec<&FeatureVector> = members.iter().map(|&i| points[i]).collect();
        let center = cluster_center(&member_points)?;
        let mut best_idx = members[0];
        let mut best_d = points[best_idx].distance(&center)?;
        for &i in &members[1..] {
            let d = points[i].distance(&center)?;
            if d < best_d {
                best_d = d;
                best_idx = i;
            }
        }
        let (ti, fi) = set
            .locate(best_idx)
            .expect("member index within the flattened set");
        prototypes.push(Prototype {
            cluster_id: c,
            center,
            vector: points[best_idx].clone(),
            source: PrototypeSource {
                trajectory_id: set.trajectories()[ti].id.clone(),
                trajectory_index: ti,
                frame_index: fi,
            },
        });
    }
    Ok(prototypes)
}
