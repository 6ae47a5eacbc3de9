//! End-to-end tracking: batching, temporal linking of both feature levels,
//! spatial clustering, trajectory extraction and stitching.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinity::{assemble_from_context, to_cost, SpatialContext, SpatialInput};
use crate::clustering::{
    cluster_with_k, select_clustering_with_report, validate_constraints, ClusterAssignment,
    SweepEntry,
};
use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::flow::{link_detections, link_tracklets, ConfidenceScale};
use crate::io::SequenceBundle;
use crate::model::{BBox, Detection, DptTracklet, Frame, Provenance, Trajectory, TrajectoryBox};
use crate::trajectory::{extract, stitch_batches, BatchTrajectories};

/// Inclusive frame windows of `batch_len` frames, consecutive windows
/// sharing one frame. A tail window shorter than a quarter of `batch_len`
/// could never pay for a track, so it is folded into the window before it.
pub fn batch_spans(first: Frame, last: Frame, batch_len: u32) -> Vec<(Frame, Frame)> {
    let len = batch_len.max(2);
    let mut spans = Vec::new();
    let mut start = first;
    loop {
        let mut end = (start + len - 1).min(last);
        if last - end + 1 < len / 4 {
            end = last;
        }
        spans.push((start, end));
        if end >= last {
            return spans;
        }
        start = end;
    }
}

/// Tracklets that move at least `static_dpt_threshold` pixels end to end and
/// pass through some detection box; the rest are treated as background.
pub fn prefilter_tracklets(
    tracklets: &[DptTracklet],
    detections: &[Detection],
    config: &TrackerConfig,
) -> Vec<DptTracklet> {
    let mut boxes: BTreeMap<Frame, Vec<BBox>> = BTreeMap::new();
    for d in detections {
        boxes.entry(d.frame).or_default().push(d.bbox());
    }
    tracklets
        .iter()
        .filter(|t| {
            let moved =
                t.first().position.distance(t.last().position) >= config.static_dpt_threshold;
            moved
                && t.points().iter().any(|p| {
                    boxes
                        .get(&p.frame)
                        .is_some_and(|bs| bs.iter().any(|b| b.contains(p.position)))
                })
        })
        .cloned()
        .collect()
}

/// Extra controls, mainly for studying the cluster count.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    /// Cluster each batch with the selected count shifted by this much.
    pub k_offset: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchDiagnostics {
    pub first_frame: Frame,
    pub last_frame: Frame,
    pub detections: usize,
    pub tracklets: usize,
    pub tracklets_kept: usize,
    pub point_tracks: usize,
    pub detection_tracks: usize,
    /// Cluster count used; zero when nothing was clustered.
    pub k: usize,
    /// Count the objective selected before any forced offset.
    pub selected_k: usize,
    pub objective: f64,
    pub seed: u64,
    pub trajectories: usize,
    pub elapsed_ms: f64,
    #[serde(skip)]
    pub sweep: Vec<SweepEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub batches: Vec<BatchDiagnostics>,
    pub trajectories: usize,
    pub elapsed_ms: f64,
}

impl Diagnostics {
    /// Sum of the per-batch objectives.
    pub fn objective(&self) -> f64 {
        self.batches.iter().map(|b| b.objective).sum()
    }

    /// Sum of the per-batch cluster counts.
    pub fn total_k(&self) -> usize {
        self.batches.iter().map(|b| b.k).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

fn batch_detections(bundle: &SequenceBundle, (first, last): (Frame, Frame)) -> Vec<Detection> {
    bundle
        .detections
        .iter()
        .filter(|d| (first..=last).contains(&d.frame))
        .copied()
        .collect()
}

fn run_batch(
    bundle: &SequenceBundle,
    span: (Frame, Frame),
    scale: &ConfidenceScale,
    config: &TrackerConfig,
    options: &RunOptions,
) -> Result<(BatchTrajectories, BatchDiagnostics)> {
    let start = Instant::now();
    let detections = batch_detections(bundle, span);
    let clipped: Vec<DptTracklet> = bundle
        .dpts
        .iter()
        .filter_map(|t| t.clipped(span.0, span.1))
        .collect();
    let tracklets = prefilter_tracklets(&clipped, &detections, config);
    let (point_tracks, detection_tracks) = rayon::join(
        || link_tracklets(&tracklets, config),
        || link_detections(&detections, scale, config),
    );
    let input = SpatialInput {
        point_tracks: &point_tracks,
        tracklets: &tracklets,
        detection_tracks: &detection_tracks,
        detections: &detections,
    };
    let mut diag = BatchDiagnostics {
        first_frame: span.0,
        last_frame: span.1,
        detections: detections.len(),
        tracklets: clipped.len(),
        tracklets_kept: tracklets.len(),
        point_tracks: point_tracks.len(),
        detection_tracks: detection_tracks.len(),
        k: 0,
        selected_k: 0,
        objective: 0.0,
        seed: config.seed,
        trajectories: 0,
        elapsed_ms: 0.0,
        sweep: Vec::new(),
    };
    let mut trajectories = Vec::new();
    if !detection_tracks.is_empty() {
        let ctx = SpatialContext::new(&input);
        let w = assemble_from_context(&ctx, &detection_tracks, config);
        let q = to_cost(&w);
        let (selected, sweep) =
            select_clustering_with_report(&w, &q, detection_tracks.len(), config)?;
        diag.selected_k = selected.k;
        let assignment: ClusterAssignment = match options.k_offset {
            None | Some(0) => selected,
            Some(offset) => {
                let k = selected.k as i64 + offset;
                if k < 1 || k > w.len() as i64 {
                    return Err(Error::InvalidClusterCount {
                        k: k.max(0) as usize,
                        items: w.len(),
                    });
                }
                cluster_with_k(&w, &q, k as usize, config)?
            }
        };
        let mut all_tracks = point_tracks.clone();
        all_tracks.extend(detection_tracks.iter().cloned());
        let report = validate_constraints(&assignment, &all_tracks);
        if !report.passed() {
            return Err(Error::Internal(format!(
                "clustering violates track constraints: {report:?}"
            )));
        }
        trajectories = extract(&assignment, &input, &ctx, span, config)?;
        diag.k = assignment.k;
        diag.objective = assignment.objective;
        diag.seed = assignment.seed;
        diag.sweep = sweep;
    }
    diag.trajectories = trajectories.len();
    diag.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((
        BatchTrajectories {
            first_frame: span.0,
            last_frame: span.1,
            trajectories,
        },
        diag,
    ))
}

fn spans_of(bundle: &SequenceBundle, config: &TrackerConfig) -> Result<Vec<(Frame, Frame)>> {
    config.validate()?;
    bundle.validate()?;
    Ok(bundle
        .frame_range()
        .map(|(first, last)| batch_spans(first, last, config.batch_len))
        .unwrap_or_default())
}

/// Full tracker with default options.
pub fn run(
    bundle: &SequenceBundle,
    config: &TrackerConfig,
) -> Result<(Vec<Trajectory>, Diagnostics)> {
    run_with(bundle, config, &RunOptions::default())
}

pub fn run_with(
    bundle: &SequenceBundle,
    config: &TrackerConfig,
    options: &RunOptions,
) -> Result<(Vec<Trajectory>, Diagnostics)> {
    let start = Instant::now();
    let spans = spans_of(bundle, config)?;
    let scale = ConfidenceScale::from_detections(&bundle.detections);
    let per_batch: Vec<(BatchTrajectories, BatchDiagnostics)> = spans
        .par_iter()
        .map(|&span| run_batch(bundle, span, &scale, config, options))
        .collect::<Result<_>>()?;
    let (batches, diags): (Vec<_>, Vec<_>) = per_batch.into_iter().unzip();
    let trajectories = stitch_batches(&batches, config)?;
    let diagnostics = Diagnostics {
        batches: diags,
        trajectories: trajectories.len(),
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((trajectories, diagnostics))
}

/// Detections-only baseline: every linked detection track is a trajectory,
/// holes are left unfilled.
pub fn run_lp2d(bundle: &SequenceBundle, config: &TrackerConfig) -> Result<Vec<Trajectory>> {
    let spans = spans_of(bundle, config)?;
    let scale = ConfidenceScale::from_detections(&bundle.detections);
    let batches: Vec<BatchTrajectories> = spans
        .par_iter()
        .map(|&span| {
            let detections = batch_detections(bundle, span);
            let tracks = link_detections(&detections, &scale, config);
            let mut trajectories: Vec<Trajectory> = tracks
                .iter()
                .enumerate()
                .map(|(i, track)| Trajectory {
                    id: 0,
                    boxes: track
                        .members()
                        .iter()
                        .map(|m| {
                            let d = &detections[m.feature];
                            TrajectoryBox {
                                frame: d.frame,
                                center: d.center,
                                width: d.width,
                                height: d.height,
                                provenance: Provenance::Detected,
                            }
                        })
                        .collect(),
                    source_cluster: i,
                })
                .collect();
            trajectories.sort_by_key(|t| (t.first_frame(), t.source_cluster));
            for (id, t) in trajectories.iter_mut().enumerate() {
                t.id = id as u64;
            }
            BatchTrajectories {
                first_frame: span.0,
                last_frame: span.1,
                trajectories,
            }
        })
        .collect();
    stitch_batches(&batches, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DptPoint, Point};

    #[test]
    fn spans() {
        assert_eq!(batch_spans(1, 120, 50), vec![(1, 50), (50, 99), (99, 120)]);
        assert_eq!(batch_spans(1, 50, 50), vec![(1, 50)]);
        assert_eq!(batch_spans(1, 51, 50), vec![(1, 51)]);
        assert_eq!(batch_spans(1, 62, 50), vec![(1, 50), (50, 62)]);
        assert_eq!(batch_spans(1, 40, 20), vec![(1, 20), (20, 40)]);
        assert_eq!(batch_spans(3, 3, 50), vec![(3, 3)]);
    }

    fn tracklet(
        id: u64,
        from: Point,
        step: Point,
        frames: std::ops::RangeInclusive<Frame>,
    ) -> DptTracklet {
        let first = *frames.start();
        DptTracklet::new(
            id,
            frames
                .map(|f| DptPoint {
                    frame: f,
                    position: from + step * (f - first) as f64,
                    appearance: [0.0; 3],
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn prefilter_rules() {
        let c = TrackerConfig::default();
        let dets = vec![Detection::new(2, Point::new(0.0, 0.0), 20.0, 20.0, 0.9).unwrap()];
        let moving_inside = tracklet(0, Point::new(-3.0, 0.0), Point::new(1.0, 0.0), 1..=5);
        let static_inside = tracklet(1, Point::new(0.0, 0.0), Point::new(0.1, 0.0), 1..=5);
        let moving_outside = tracklet(2, Point::new(100.0, 0.0), Point::new(1.0, 0.0), 1..=5);
        let kept = prefilter_tracklets(&[moving_inside, static_inside, moving_outside], &dets, &c);
        assert_eq!(kept.iter().map(|t| t.id).collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn empty_bundle() {
        let (t, d) = run(&SequenceBundle::default(), &TrackerConfig::default()).unwrap();
        assert!(t.is_empty());
        assert!(d.batches.is_empty());
        assert!(
            run_lp2d(&SequenceBundle::default(), &TrackerConfig::default())
                .unwrap()
                .is_empty()
        );
    }
}
