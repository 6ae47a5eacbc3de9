//! Pairwise spatial affinities between feature tracks and their assembly into
//! the affinity and cost matrices used by the clustering stage.
//!
//! Dense point tracks and detection tracks are both seen as a [`PointTrack`]:
//! a point per frame plus the detection boxes that lend it a scale at that
//! frame. For a dense point track those are the surviving detections that
//! contain the point; for a detection track it is its own box.
//!
//! Whenever the data cannot inform an affinity it takes the neutral value
//! [`NO_INFORMATION`], which maps to cost zero.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::config::TrackerConfig;
use crate::model::{BBox, Detection, DptTracklet, FeatureTrack, Frame, Point};

pub const NO_INFORMATION: f64 = 0.5;

/// A track as a moving point with per-frame scale boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTrack {
    frames: Vec<Frame>,
    positions: Vec<Point>,
    boxes: Vec<Vec<BBox>>,
}

impl PointTrack {
    /// Samples are sorted by frame; a repeated frame keeps its first sample.
    pub fn new(mut samples: Vec<(Frame, Point, Vec<BBox>)>) -> Self {
        samples.sort_by_key(|s| s.0);
        samples.dedup_by_key(|s| s.0);
        let mut t = PointTrack {
            frames: Vec::with_capacity(samples.len()),
            positions: Vec::with_capacity(samples.len()),
            boxes: Vec::with_capacity(samples.len()),
        };
        for (f, p, b) in samples {
            t.frames.push(f);
            t.positions.push(p);
            t.boxes.push(b);
        }
        t
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    fn index(&self, frame: Frame) -> Option<usize> {
        self.frames.binary_search(&frame).ok()
    }

    pub fn position(&self, frame: Frame) -> Option<Point> {
        self.index(frame).map(|i| self.positions[i])
    }

    pub fn boxes(&self, frame: Frame) -> &[BBox] {
        self.index(frame).map_or(&[], |i| &self.boxes[i])
    }

    /// Displacement from the previous frame, when both frames are present.
    pub fn velocity(&self, frame: Frame) -> Option<Point> {
        let i = self.index(frame)?;
        (i > 0 && self.frames[i - 1] + 1 == frame)
            .then(|| self.positions[i] - self.positions[i - 1])
    }

    fn median_extent(&self) -> Option<(f64, f64)> {
        let all: Vec<&BBox> = self.boxes.iter().flatten().collect();
        let h = median(all.iter().map(|b| b.height).collect())?;
        let w = median(all.iter().map(|b| b.width).collect())?;
        Some((h, w))
    }

    pub fn translated(&self, offset: Point) -> Self {
        let shift = |b: &BBox| BBox::new(b.center + offset, b.width, b.height);
        PointTrack {
            frames: self.frames.clone(),
            positions: self.positions.iter().map(|&p| p + offset).collect(),
            boxes: self
                .boxes
                .iter()
                .map(|v| v.iter().map(shift).collect())
                .collect(),
        }
    }
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Normal density at `x` divided by its peak value.
pub fn gaussian_ratio(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    (-0.5 * z * z).exp()
}

pub fn common_frames(a: &PointTrack, b: &PointTrack) -> Vec<Frame> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.frames.len() && j < b.frames.len() {
        match a.frames[i].cmp(&b.frames[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a.frames[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Frames at which both tracks have a velocity.
fn velocity_frames(a: &PointTrack, b: &PointTrack) -> Vec<(Point, Point)> {
    common_frames(a, b)
        .into_iter()
        .filter_map(|f| Some((a.velocity(f)?, b.velocity(f)?)))
        .collect()
}

/// Mean over common frames of the best IoU between a box containing `a` and
/// a box containing `b`; frames where either has no box count as
/// [`NO_INFORMATION`].
///
/// # Panics
/// If the tracks share no frame.
pub fn w_det(a: &PointTrack, b: &PointTrack) -> f64 {
    let common = common_frames(a, b);
    assert!(!common.is_empty(), "w_det needs common frames");
    let total: f64 = common
        .iter()
        .map(|&f| {
            let (ba, bb) = (a.boxes(f), b.boxes(f));
            if ba.is_empty() || bb.is_empty() {
                return NO_INFORMATION;
            }
            ba.iter()
                .flat_map(|x| bb.iter().map(move |y| x.iou(y)))
                .fold(0.0, f64::max)
        })
        .sum();
    total / common.len() as f64
}

/// Scale-normalized spatial proximity. Each track judges the other by the
/// median extent of its own boxes; height and width proximities must both
/// reach one half, otherwise the affinity is zero.
///
/// # Panics
/// If the tracks share no frame.
pub fn w_dist(a: &PointTrack, b: &PointTrack, config: &TrackerConfig) -> f64 {
    let common = common_frames(a, b);
    assert!(!common.is_empty(), "w_dist needs common frames");
    let directed = |from: &PointTrack, to: &PointTrack| -> Option<(f64, f64)> {
        let (med_h, med_w) = from.median_extent()?;
        let offsets = |axis: fn(Point) -> f64, scale: f64| {
            let rel: Vec<f64> = common
                .iter()
                .map(|&f| {
                    (axis(from.position(f).unwrap()) - axis(to.position(f).unwrap())).abs() / scale
                })
                .collect();
            median(rel).unwrap()
        };
        let proximity = |d: f64| {
            if d <= config.mu_dist {
                1.0
            } else {
                gaussian_ratio(d, config.mu_dist, config.sigma_dist)
            }
        };
        Some((
            proximity(offsets(|p| p.y, med_h)),
            proximity(offsets(|p| p.x, med_w)),
        ))
    };
    let views: Vec<(f64, f64)> = [directed(a, b), directed(b, a)]
        .into_iter()
        .flatten()
        .collect();
    if views.is_empty() {
        return NO_INFORMATION;
    }
    let n = views.len() as f64;
    let dh = views.iter().map(|v| v.0).sum::<f64>() / n;
    let dw = views.iter().map(|v| v.1).sum::<f64>() / n;
    if dh >= 0.5 && dw >= 0.5 {
        0.5 * (dh + dw)
    } else {
        0.0
    }
}

/// Median ratio of the slower to the faster per-frame speed. Two static
/// points count as a perfect match.
pub fn w_speed(a: &PointTrack, b: &PointTrack) -> f64 {
    let ratios: Vec<f64> = velocity_frames(a, b)
        .into_iter()
        .map(|(va, vb)| {
            let (sa, sb) = (va.norm(), vb.norm());
            let hi = sa.max(sb);
            if hi == 0.0 {
                1.0
            } else {
                sa.min(sb) / hi
            }
        })
        .collect();
    median(ratios).unwrap_or(NO_INFORMATION)
}

/// Unsigned angle between two nonzero vectors, in degrees.
pub fn angle_between(a: Point, b: Point) -> f64 {
    let cross = a.x * b.y - a.y * b.x;
    cross.abs().atan2(a.dot(b)).to_degrees()
}

/// Gaussian score of the median angle between the velocity vectors. Frames
/// where either point is static are skipped.
pub fn w_angle(a: &PointTrack, b: &PointTrack, config: &TrackerConfig) -> f64 {
    let angles: Vec<f64> = velocity_frames(a, b)
        .into_iter()
        .filter(|(va, vb)| va.norm() > 0.0 && vb.norm() > 0.0)
        .map(|(va, vb)| angle_between(va, vb))
        .collect();
    match median(angles) {
        Some(angle) => angle_score(angle, config),
        None => NO_INFORMATION,
    }
}

pub fn angle_score(angle_deg: f64, config: &TrackerConfig) -> f64 {
    gaussian_ratio(angle_deg, 0.0, config.sigma_angle)
}

/// Equal-weight blend of speed and angle, mapped linearly onto `[0.5, 1]`.
pub fn velocity_from_parts(speed: f64, angle: f64) -> f64 {
    0.5 + 0.5 * (0.5 * (speed + angle))
}

pub fn w_velocity(a: &PointTrack, b: &PointTrack, config: &TrackerConfig) -> f64 {
    velocity_from_parts(w_speed(a, b), w_angle(a, b, config))
}

fn motion_and_proximity(a: &PointTrack, b: &PointTrack, config: &TrackerConfig) -> f64 {
    w_velocity(a, b, config) * 0.5 * (w_dist(a, b, config) + w_det(a, b))
}

/// Affinity between two dense point tracks. Without common frames it is 1
/// when some detection track touches both (`bridged`) and 0 otherwise.
pub fn w_pp(a: &PointTrack, b: &PointTrack, bridged: bool, config: &TrackerConfig) -> f64 {
    if common_frames(a, b).is_empty() {
        return if bridged { 1.0 } else { 0.0 };
    }
    motion_and_proximity(a, b, config)
}

/// Fraction of common frames at which the dense point lies inside the
/// detection track's box.
pub fn w_pd_intersect(point: &PointTrack, det: &PointTrack) -> f64 {
    let common = common_frames(point, det);
    if common.is_empty() {
        return NO_INFORMATION;
    }
    let inside = common
        .iter()
        .filter(|&&f| {
            let p = point.position(f).unwrap();
            det.boxes(f).iter().any(|b| b.contains(p))
        })
        .count();
    inside as f64 / common.len() as f64
}

/// Link term between a dense point track and a detection track, built from
/// the same motion and proximity terms as [`w_pp`].
pub fn w_pd_link(point: &PointTrack, det: &PointTrack, config: &TrackerConfig) -> f64 {
    if common_frames(point, det).is_empty() {
        return NO_INFORMATION;
    }
    motion_and_proximity(point, det, config)
}

pub fn w_pd(point: &PointTrack, det: &PointTrack, config: &TrackerConfig) -> f64 {
    0.5 * (w_pd_intersect(point, det) + w_pd_link(point, det, config))
}

/// Affinity between two detections from the dense point tracks intersecting
/// each (`ti`, `tj`) and whether they lie in the same detection track.
pub fn w_dd_pair(ti: &BTreeSet<usize>, tj: &BTreeSet<usize>, same_track: bool) -> f64 {
    if !same_track {
        return 0.0;
    }
    if ti.is_empty() || tj.is_empty() {
        return NO_INFORMATION;
    }
    let shared = ti.intersection(tj).count() as f64;
    0.5 * (shared / ti.len() as f64 + shared / tj.len() as f64)
}

/// Lifts [`w_dd_pair`] to tracks: the detections compared are the
/// temporally closest pair, earliest first on ties. `intersecting[d]` lists
/// the dense point tracks that touch detection `d`.
pub fn w_dd(
    a: &FeatureTrack,
    b: &FeatureTrack,
    intersecting: &BTreeMap<usize, BTreeSet<usize>>,
) -> f64 {
    let mut best: Option<(u32, Frame, Frame, usize, usize)> = None;
    for ma in a.members() {
        for mb in b.members() {
            let key = (
                ma.first_frame.abs_diff(mb.first_frame),
                ma.first_frame,
                mb.first_frame,
                ma.feature,
                mb.feature,
            );
            if best.is_none_or(|b| key < b) {
                best = Some(key);
            }
        }
    }
    let Some((_, _, _, da, db)) = best else {
        return 0.0;
    };
    let empty = BTreeSet::new();
    let ti = intersecting.get(&da).unwrap_or(&empty);
    let tj = intersecting.get(&db).unwrap_or(&empty);
    w_dd_pair(ti, tj, a.id == b.id && a.category == b.category)
}

/// Affinities over all feature tracks: dense point tracks first, then
/// detection tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    pub matrix: DMatrix<f64>,
    pub n_point_tracks: usize,
}

impl AffinityMatrix {
    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_detection_tracks(&self) -> usize {
        self.len() - self.n_point_tracks
    }
}

/// Signed clustering costs; negative entries favor grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub matrix: DMatrix<f64>,
}

impl CostMatrix {
    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn to_cost(w: &AffinityMatrix) -> CostMatrix {
    CostMatrix {
        matrix: w.matrix.map(|v| -2.0 * v + 1.0),
    }
}

/// Feature tracks and the features they index.
#[derive(Debug, Clone, Copy)]
pub struct SpatialInput<'a> {
    pub point_tracks: &'a [FeatureTrack],
    pub tracklets: &'a [DptTracklet],
    pub detection_tracks: &'a [FeatureTrack],
    pub detections: &'a [Detection],
}

/// Geometry derived from a [`SpatialInput`], shared by the affinity and
/// trajectory stages.
#[derive(Debug, Clone)]
pub struct SpatialContext {
    pub points: Vec<PointTrack>,
    pub dets: Vec<PointTrack>,
    /// Detection tracks touched by each dense point track.
    pub touched: Vec<BTreeSet<usize>>,
    /// Dense point tracks touching each detection, keyed by detection index.
    pub intersecting: BTreeMap<usize, BTreeSet<usize>>,
}

impl SpatialContext {
    pub fn new(input: &SpatialInput<'_>) -> Self {
        let mut by_frame: BTreeMap<Frame, Vec<(usize, usize)>> = BTreeMap::new();
        for (t, track) in input.detection_tracks.iter().enumerate() {
            for m in track.members() {
                by_frame
                    .entry(m.first_frame)
                    .or_default()
                    .push((t, m.feature));
            }
        }
        let mut touched = vec![BTreeSet::new(); input.point_tracks.len()];
        let mut intersecting: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        let mut points = Vec::with_capacity(input.point_tracks.len());
        for (p, track) in input.point_tracks.iter().enumerate() {
            let mut samples = Vec::new();
            for m in track.members() {
                let tracklet = &input.tracklets[m.feature];
                for pt in tracklet.points() {
                    let mut boxes = Vec::new();
                    for &(t, d) in by_frame.get(&pt.frame).into_iter().flatten() {
                        let b = input.detections[d].bbox();
                        if b.contains(pt.position) {
                            boxes.push(b);
                            touched[p].insert(t);
                            intersecting.entry(d).or_default().insert(p);
                        }
                    }
                    samples.push((pt.frame, pt.position, boxes));
                }
            }
            points.push(PointTrack::new(samples));
        }
        let dets = input
            .detection_tracks
            .iter()
            .map(|track| {
                PointTrack::new(
                    track
                        .members()
                        .iter()
                        .map(|m| {
                            let d = &input.detections[m.feature];
                            (d.frame, d.center, vec![d.bbox()])
                        })
                        .collect(),
                )
            })
            .collect();
        SpatialContext {
            points,
            dets,
            touched,
            intersecting,
        }
    }
}

/// Fills the affinity matrix block by block, symmetrizes it, sets the
/// diagonal to one and snaps affinities below the floor to zero.
pub fn assemble(input: &SpatialInput<'_>, config: &TrackerConfig) -> AffinityMatrix {
    let ctx = SpatialContext::new(input);
    assemble_from_context(&ctx, input.detection_tracks, config)
}

pub fn assemble_from_context(
    ctx: &SpatialContext,
    detection_tracks: &[FeatureTrack],
    config: &TrackerConfig,
) -> AffinityMatrix {
    let np = ctx.points.len();
    let nd = ctx.dets.len();
    let n = np + nd;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| match (i < np, j < np) {
                    (true, true) => {
                        let bridged = !ctx.touched[i].is_disjoint(&ctx.touched[j]);
                        w_pp(&ctx.points[i], &ctx.points[j], bridged, config)
                    }
                    (true, false) => w_pd(&ctx.points[i], &ctx.dets[j - np], config),
                    _ => w_dd(
                        &detection_tracks[i - np],
                        &detection_tracks[j - np],
                        &ctx.intersecting,
                    ),
                })
                .collect()
        })
        .collect();
    let mut matrix = DMatrix::from_element(n, n, 1.0);
    for (i, row) in rows.into_iter().enumerate() {
        for (k, mut v) in row.into_iter().enumerate() {
            let j = i + 1 + k;
            if v < config.affinity_floor && v != NO_INFORMATION {
                v = 0.0;
            }
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    AffinityMatrix {
        matrix,
        n_point_tracks: np,
    }
}
