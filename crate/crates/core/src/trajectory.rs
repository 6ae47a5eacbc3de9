//! From clusters to per-person trajectories, and stitching across batches.
//!
//! Each cluster with at least one detection track yields trajectories; a
//! cluster of dense point tracks only is background and is dropped. Detection
//! tracks of one cluster that do not overlap in time are chained into a single
//! trajectory, overlapping ones start separate trajectories. Holes between
//! detections are filled, guided by the cluster's point tracks when their
//! motion is coherent, and ends may be extended by a few frames the same way.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::affinity::{PointTrack, SpatialContext, SpatialInput};
use crate::clustering::ClusterAssignment;
use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::model::{Frame, Point, Provenance, Trajectory, TrajectoryBox};

/// Mean point displacement from `frame` to `frame + 1`, if some point track
/// covers both frames and their directions agree within the variance limit.
fn guided_step(points: &[&PointTrack], frame: Frame, config: &TrackerConfig) -> Option<Point> {
    let steps: Vec<Point> = points
        .iter()
        .filter_map(|p| Some(p.position(frame + 1)? - p.position(frame)?))
        .collect();
    if steps.is_empty() {
        return None;
    }
    let mean = steps.iter().fold(Point::ZERO, |acc, &s| acc + s) * (1.0 / steps.len() as f64);
    (direction_variance(&steps) <= config.direction_variance_threshold).then_some(mean)
}

/// Circular spread of the step directions in squared degrees. Zero-length
/// steps carry no direction and are skipped.
pub fn direction_variance(steps: &[Point]) -> f64 {
    let angles: Vec<f64> = steps
        .iter()
        .filter(|s| s.norm() > 0.0)
        .map(|s| s.y.atan2(s.x))
        .collect();
    if angles.len() < 2 {
        return 0.0;
    }
    let (sin, cos) = angles
        .iter()
        .fold((0.0, 0.0), |(s, c), a| (s + a.sin(), c + a.cos()));
    let mean = sin.atan2(cos);
    let sum: f64 = angles
        .iter()
        .map(|a| {
            let mut d = a - mean;
            while d > std::f64::consts::PI {
                d -= 2.0 * std::f64::consts::PI;
            }
            while d < -std::f64::consts::PI {
                d += 2.0 * std::f64::consts::PI;
            }
            d.to_degrees().powi(2)
        })
        .sum();
    sum / angles.len() as f64
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Boxes strictly between `prev` and `next`. With coherent point motion over
/// every step of the hole, centers follow the accumulated mean displacement,
/// corrected linearly so the path ends exactly on `next`; otherwise centers
/// are linear. Sizes are always linear.
pub fn interpolate_gap(
    prev: &TrajectoryBox,
    next: &TrajectoryBox,
    points: &[&PointTrack],
    config: &TrackerConfig,
) -> Vec<TrajectoryBox> {
    if next.frame <= prev.frame + 1 {
        return Vec::new();
    }
    let span = (next.frame - prev.frame) as f64;
    let guided: Option<Vec<Point>> = (prev.frame..next.frame)
        .map(|f| guided_step(points, f, config))
        .collect();
    let delta = next.center - prev.center;
    let cumulative = guided.map(|steps| {
        let mut acc = Point::ZERO;
        let mut sums = Vec::with_capacity(steps.len());
        for s in steps {
            acc += s;
            sums.push(acc);
        }
        sums
    });
    ((prev.frame + 1)..next.frame)
        .map(|f| {
            let t = (f - prev.frame) as f64 / span;
            let center = match &cumulative {
                Some(sums) => {
                    let s_f = sums[(f - prev.frame - 1) as usize];
                    let s_end = *sums.last().expect("nonempty gap");
                    prev.center + s_f + (delta - s_end) * t
                }
                None => prev.center + delta * t,
            };
            TrajectoryBox {
                frame: f,
                center,
                width: lerp(prev.width, next.width, t),
                height: lerp(prev.height, next.height, t),
                provenance: Provenance::Interpolated,
            }
        })
        .collect()
}

/// Extends beyond `end` by at most `max_frames`, one coherent point step at a
/// time, never leaving `bounds`.
pub fn extrapolate(
    end: &TrajectoryBox,
    forward: bool,
    points: &[&PointTrack],
    max_frames: u32,
    bounds: (Frame, Frame),
    config: &TrackerConfig,
) -> Vec<TrajectoryBox> {
    let mut out = Vec::new();
    let mut cur = *end;
    for _ in 0..max_frames {
        let step = if forward {
            if cur.frame >= bounds.1 {
                break;
            }
            guided_step(points, cur.frame, config)
        } else {
            if cur.frame <= bounds.0 {
                break;
            }
            guided_step(points, cur.frame - 1, config).map(|s| s * -1.0)
        };
        let Some(step) = step else { break };
        cur = TrajectoryBox {
            frame: if forward {
                cur.frame + 1
            } else {
                cur.frame - 1
            },
            center: cur.center + step,
            provenance: Provenance::Extrapolated,
            ..cur
        };
        out.push(cur);
    }
    if !forward {
        out.reverse();
    }
    out
}

/// Groups detection tracks into chains of temporally disjoint tracks, longest
/// compatible chain first. Returns track indices per chain.
fn chains(spans: &[(usize, Frame, Frame)]) -> Vec<Vec<usize>> {
    let mut sorted = spans.to_vec();
    sorted.sort_by_key(|&(t, first, _)| (first, t));
    let mut chains: Vec<(Frame, Vec<usize>)> = Vec::new();
    for (t, first, last) in sorted {
        let best = chains
            .iter()
            .enumerate()
            .filter(|(_, c)| c.0 < first)
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i);
        match best {
            Some(i) => {
                chains[i].0 = last;
                chains[i].1.push(t);
            }
            None => chains.push((last, vec![t])),
        }
    }
    chains.into_iter().map(|c| c.1).collect()
}

/// Trajectories for one batch covering `bounds`. Ids are assigned in order
/// of first frame, then cluster label.
pub fn extract(
    assignment: &ClusterAssignment,
    input: &SpatialInput<'_>,
    ctx: &SpatialContext,
    bounds: (Frame, Frame),
    config: &TrackerConfig,
) -> Result<Vec<Trajectory>> {
    let np = input.point_tracks.len();
    let n = np + input.detection_tracks.len();
    if assignment.labels.len() != n {
        return Err(Error::PartialLabeling {
            labeled: assignment.labels.len(),
            expected: n,
        });
    }
    let mut out: Vec<(Frame, usize, Trajectory)> = Vec::new();
    for (label, members) in assignment.clusters() {
        let points: Vec<&PointTrack> = members
            .iter()
            .filter(|&&i| i < np)
            .map(|&i| &ctx.points[i])
            .collect();
        let spans: Vec<(usize, Frame, Frame)> = members
            .iter()
            .filter(|&&i| i >= np)
            .map(|&i| {
                let t = &input.detection_tracks[i - np];
                let first = t.members().first().map_or(0, |m| m.first_frame);
                let last = t.members().last().map_or(0, |m| m.last_frame);
                (i - np, first, last)
            })
            .collect();
        for chain in chains(&spans) {
            let mut detected: Vec<TrajectoryBox> = chain
                .iter()
                .flat_map(|&t| input.detection_tracks[t].members())
                .map(|m| {
                    let d = &input.detections[m.feature];
                    TrajectoryBox {
                        frame: d.frame,
                        center: d.center,
                        width: d.width,
                        height: d.height,
                        provenance: Provenance::Detected,
                    }
                })
                .collect();
            detected.sort_by_key(|b| b.frame);
            let Some(&first) = detected.first() else {
                continue;
            };
            let last = *detected.last().expect("nonempty");
            let max = config.max_extrapolation();
            let mut boxes = extrapolate(&first, false, &points, max, bounds, config);
            for w in detected.windows(2) {
                boxes.push(w[0]);
                boxes.extend(interpolate_gap(&w[0], &w[1], &points, config));
            }
            boxes.push(last);
            boxes.extend(extrapolate(&last, true, &points, max, bounds, config));
            out.push((
                boxes[0].frame,
                label,
                Trajectory {
                    id: 0,
                    boxes,
                    source_cluster: label,
                },
            ));
        }
    }
    out.sort_by_key(|(f, l, t)| (*f, *l, t.boxes.last().map(|b| b.frame)));
    Ok(out
        .into_iter()
        .enumerate()
        .map(|(id, (_, _, mut t))| {
            t.id = id as u64;
            t
        })
        .collect())
}

/// Trajectories of one batch with the frame span the batch covered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchTrajectories {
    pub first_frame: Frame,
    pub last_frame: Frame,
    pub trajectories: Vec<Trajectory>,
}

/// Merges per-batch trajectories into sequence-wide ones.
///
/// Consecutive batches share exactly one frame. Trajectories with boxes on
/// that frame are matched greedily by descending IoU, ties to the smaller id
/// pair, and pairs at or above `iou_match_threshold` continue one identity.
/// The shared-frame box of the earlier batch is kept unless only the later
/// one was detected. An unmatched later trajectory loses its shared-frame box
/// when that box duplicates a kept one. Unmatched trajectories get fresh ids
/// in order of appearance.
pub fn stitch_batches(
    per_batch: &[BatchTrajectories],
    config: &TrackerConfig,
) -> Result<Vec<Trajectory>> {
    for w in per_batch.windows(2) {
        if w[1].first_frame != w[0].last_frame {
            return Err(Error::BatchSpan {
                prev_last: w[0].last_frame,
                next_first: w[1].first_frame,
            });
        }
    }
    let mut result: Vec<Trajectory> = Vec::new();
    // global index of each trajectory of the previous batch
    let mut prev_global: BTreeMap<u64, usize> = BTreeMap::new();
    for (b, batch) in per_batch.iter().enumerate() {
        let mut current: BTreeMap<u64, usize> = BTreeMap::new();
        let mut matched: BTreeMap<u64, usize> = BTreeMap::new();
        if b > 0 {
            let shared = batch.first_frame;
            let mut pairs: Vec<(f64, u64, u64)> = Vec::new();
            for (&pid, &g) in &prev_global {
                let Some(pb) = result[g].box_at(shared) else {
                    continue;
                };
                for t in &batch.trajectories {
                    if let Some(nb) = t.box_at(shared) {
                        let iou = pb.bbox().iou(&nb.bbox());
                        if iou >= config.iou_match_threshold {
                            pairs.push((iou, pid, t.id));
                        }
                    }
                }
            }
            pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
            let mut used_prev = std::collections::BTreeSet::new();
            for (_, pid, nid) in pairs {
                if used_prev.contains(&pid) || matched.contains_key(&nid) {
                    continue;
                }
                used_prev.insert(pid);
                matched.insert(nid, prev_global[&pid]);
            }
        }
        for t in &batch.trajectories {
            if let Some(&g) = matched.get(&t.id) {
                let target = &mut result[g];
                for nb in &t.boxes {
                    if nb.frame == batch.first_frame {
                        let last = target.boxes.last_mut().expect("matched on shared frame");
                        if last.provenance != Provenance::Detected
                            && nb.provenance == Provenance::Detected
                        {
                            *last = *nb;
                        }
                    } else {
                        target.boxes.push(*nb);
                    }
                }
                current.insert(t.id, g);
            } else {
                let mut boxes = t.boxes.clone();
                if b > 0 {
                    let shared = batch.first_frame;
                    let duplicate = |nb: &TrajectoryBox| {
                        prev_global.values().any(|&g| {
                            result[g].box_at(shared).is_some_and(|pb| {
                                pb.bbox().iou(&nb.bbox()) >= config.iou_match_threshold
                            })
                        })
                    };
                    boxes.retain(|nb| nb.frame != shared || !duplicate(nb));
                }
                let fresh = Trajectory {
                    id: result.len() as u64,
                    boxes,
                    source_cluster: t.source_cluster,
                };
                if fresh.detected_count() == 0 {
                    continue;
                }
                current.insert(t.id, result.len());
                result.push(fresh);
            }
        }
        prev_global = current;
    }
    Ok(result)
}
