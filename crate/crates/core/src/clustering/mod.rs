//! Spatial association: grouping feature tracks into people.
//!
//! Spectral partitions are generated for a sweep of cluster counts and several
//! seeds each, and every proposal is scored by the quadratic objective
//! `f^T Q f` restricted to the clustering flags. The lowest score wins, which
//! also fixes the number of clusters.

mod spectral;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use spectral::{kmeans, spectral_partition, SpectralEmbedding};

use crate::affinity::{AffinityMatrix, CostMatrix};
use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::model::{Category, FeatureTrack};

pub const ORACLE_TRACK_LIMIT: usize = 10;

/// A partition of the feature tracks with its objective value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Cluster of each track, in matrix order.
    pub labels: Vec<usize>,
    /// Requested cluster count.
    pub k: usize,
    pub objective: f64,
    /// Seed of the winning proposal.
    pub seed: u64,
}

impl ClusterAssignment {
    pub fn empty() -> Self {
        ClusterAssignment {
            labels: Vec::new(),
            k: 0,
            objective: 0.0,
            seed: 0,
        }
    }

    /// Track indices per cluster, clusters ordered by label.
    pub fn clusters(&self) -> Vec<(usize, Vec<usize>)> {
        let mut by_label: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (i, &l) in self.labels.iter().enumerate() {
            by_label.entry(l).or_default().push(i);
        }
        by_label.into_iter().collect()
    }
}

/// One proposal of a k-sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub k: usize,
    pub run: u32,
    pub seed: u64,
    pub objective: f64,
}

/// Diagonal plus twice every within-cluster pair.
pub fn score(labels: &[usize], q: &CostMatrix) -> Result<f64> {
    let n = q.len();
    if labels.len() != n {
        return Err(Error::PartialLabeling {
            labeled: labels.len(),
            expected: n,
        });
    }
    let mut total = 0.0;
    for i in 0..n {
        total += q.matrix[(i, i)];
        for j in (i + 1)..n {
            if labels[i] == labels[j] {
                total += 2.0 * q.matrix[(i, j)];
            }
        }
    }
    Ok(total)
}

/// Renumbers labels in order of first appearance.
fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Cluster counts tried for `f` tracks of which `n_det` are detection tracks.
/// The window is clamped to `1..=f`, so an oversized `n_det` still yields `f`.
pub fn sweep_range(
    f: usize,
    n_det: usize,
    config: &TrackerConfig,
) -> std::ops::RangeInclusive<usize> {
    if config.k_sweep_full {
        return 1..=f;
    }
    let h = config.k_sweep_halfwidth as usize;
    n_det.saturating_sub(h).max(1).min(f)..=(n_det + h).min(f)
}

fn better(a: &(SweepEntry, Vec<usize>), b: &(SweepEntry, Vec<usize>)) -> bool {
    let (x, y) = (&a.0, &b.0);
    x.objective < y.objective || (x.objective == y.objective && (x.k, x.seed) < (y.k, y.seed))
}

fn run_grid(
    embedding: &SpectralEmbedding,
    q: &CostMatrix,
    ks: &[usize],
    config: &TrackerConfig,
) -> Result<Vec<(SweepEntry, Vec<usize>)>> {
    let jobs: Vec<(usize, u32)> = ks
        .iter()
        .flat_map(|&k| (0..config.ncut_runs).map(move |r| (k, r)))
        .collect();
    jobs.into_par_iter()
        .map(|(k, run)| {
            let seed = config.seed.wrapping_add(run as u64);
            let labels = canonical(&embedding.partition(k, seed)?);
            let objective = score(&labels, q)?;
            Ok((
                SweepEntry {
                    k,
                    run,
                    seed,
                    objective,
                },
                labels,
            ))
        })
        .collect()
}

fn pick(results: Vec<(SweepEntry, Vec<usize>)>) -> Option<ClusterAssignment> {
    let mut best: Option<(SweepEntry, Vec<usize>)> = None;
    for r in results {
        if best.as_ref().is_none_or(|b| better(&r, b)) {
            best = Some(r);
        }
    }
    best.map(|(e, labels)| ClusterAssignment {
        labels,
        k: e.k,
        objective: e.objective,
        seed: e.seed,
    })
}

/// Best proposal over the k-sweep, plus every proposal's score.
pub fn select_clustering_with_report(
    w: &AffinityMatrix,
    q: &CostMatrix,
    n_det: usize,
    config: &TrackerConfig,
) -> Result<(ClusterAssignment, Vec<SweepEntry>)> {
    if w.len() != q.len() {
        return Err(Error::InvalidInput(format!(
            "affinity is {}x{} but costs are {}x{}",
            w.len(),
            w.len(),
            q.len(),
            q.len()
        )));
    }
    if w.is_empty() {
        return Ok((ClusterAssignment::empty(), Vec::new()));
    }
    let embedding = SpectralEmbedding::new(w)?;
    let ks: Vec<usize> = sweep_range(w.len(), n_det, config).collect();
    let results = run_grid(&embedding, q, &ks, config)?;
    let report = results.iter().map(|r| r.0).collect();
    Ok((pick(results).expect("nonempty sweep"), report))
}

/// Minimizes the objective over the k-sweep centered on the number of
/// detection tracks. Ties go to the smaller k, then the smaller seed.
pub fn select_clustering(
    w: &AffinityMatrix,
    q: &CostMatrix,
    n_det: usize,
    config: &TrackerConfig,
) -> Result<ClusterAssignment> {
    select_clustering_with_report(w, q, n_det, config).map(|r| r.0)
}

/// Best of `ncut_runs` proposals for a fixed k.
pub fn cluster_with_k(
    w: &AffinityMatrix,
    q: &CostMatrix,
    k: usize,
    config: &TrackerConfig,
) -> Result<ClusterAssignment> {
    if w.is_empty() && k == 0 {
        return Ok(ClusterAssignment::empty());
    }
    let embedding = SpectralEmbedding::new(w)?;
    let results = run_grid(&embedding, q, &[k], config)?;
    Ok(pick(results).expect("at least one run"))
}

/// Exact minimum over all set partitions. Refuses more than
/// [`ORACLE_TRACK_LIMIT`] tracks.
pub fn oracle_best_partition(q: &CostMatrix) -> Result<(Vec<usize>, f64)> {
    let n = q.len();
    if n > ORACLE_TRACK_LIMIT {
        return Err(Error::OracleTooLarge {
            nodes: n,
            limit: ORACLE_TRACK_LIMIT,
        });
    }
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    // restricted growth strings enumerate each set partition once
    let mut labels = vec![0usize; n];
    let mut best = (labels.clone(), score(&labels, q)?);
    fn rec(
        pos: usize,
        max: usize,
        labels: &mut [usize],
        q: &CostMatrix,
        best: &mut (Vec<usize>, f64),
    ) {
        if pos == labels.len() {
            let s = score(labels, q).expect("total labeling");
            if s < best.1 {
                *best = (labels.to_vec(), s);
            }
            return;
        }
        for l in 0..=max + 1 {
            labels[pos] = l;
            rec(pos + 1, max.max(l), labels, q, best);
        }
    }
    rec(1, 0, &mut labels, q, &mut best);
    Ok(best)
}

/// Outcome of [`validate_constraints`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    /// Tracks without a cluster.
    pub unlabeled: Vec<usize>,
    /// Labels referring to tracks that do not exist.
    pub extra_labels: Vec<usize>,
    /// Tracks sharing a feature with an earlier track, which would let a
    /// temporal link cross a cluster boundary.
    pub split_features: Vec<usize>,
}

impl ConstraintReport {
    pub fn passed(&self) -> bool {
        self.unlabeled.is_empty() && self.extra_labels.is_empty() && self.split_features.is_empty()
    }
}

/// Every track in exactly one cluster, and temporal links internal to
/// clusters. Links only exist inside feature tracks, so the second condition
/// holds as long as no feature belongs to two tracks.
pub fn validate_constraints(
    assignment: &ClusterAssignment,
    tracks: &[FeatureTrack],
) -> ConstraintReport {
    let mut report = ConstraintReport {
        unlabeled: (assignment.labels.len()..tracks.len()).collect(),
        extra_labels: (tracks.len()..assignment.labels.len()).collect(),
        ..Default::default()
    };
    let mut owner: HashMap<(Category, usize), usize> = HashMap::new();
    for (t, track) in tracks.iter().enumerate() {
        for m in track.members() {
            if let Some(&first) = owner.get(&(track.category, m.feature)) {
                if first != t && !report.split_features.contains(&t) {
                    report.split_features.push(t);
                }
            } else {
                owner.insert((track.category, m.feature), t);
            }
        }
    }
    report
}
