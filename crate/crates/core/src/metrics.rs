//! CLEAR MOT evaluation and feature-track statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BBox, Category, DptTracklet, FeatureTrack, Frame, Member, Trajectory};

/// CLEAR MOT summary. `ta` is MOTA, `tp` is MOTP as mean IoU of matches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotReport {
    pub ta: f64,
    pub tp: f64,
    pub recall: f64,
    pub precision: f64,
    /// Ground-truth trajectories tracked over more than 80% of their boxes.
    pub mt: usize,
    pub pt: usize,
    /// Ground-truth trajectories tracked over less than 20% of their boxes.
    pub ml: usize,
    pub idsw: usize,
    pub frag: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub matches: usize,
    pub gt_boxes: usize,
    pub hyp_boxes: usize,
    pub gt_trajectories: usize,
}

impl MotReport {
    fn pct(count: usize, total: usize) -> f64 {
        if total == 0 {
            0.0
        } else {
            100.0 * count as f64 / total as f64
        }
    }

    pub fn mt_pct(&self) -> f64 {
        Self::pct(self.mt, self.gt_trajectories)
    }

    pub fn pt_pct(&self) -> f64 {
        Self::pct(self.pt, self.gt_trajectories)
    }

    pub fn ml_pct(&self) -> f64 {
        Self::pct(self.ml, self.gt_trajectories)
    }

    /// Aligned two-line table.
    pub fn table(&self) -> String {
        let cols = [
            ("TA", format!("{:.3}", self.ta)),
            ("TP", format!("{:.3}", self.tp)),
            ("Rcll", format!("{:.3}", self.recall)),
            ("Prcn", format!("{:.3}", self.precision)),
            ("MT", format!("{:.1}%", self.mt_pct())),
            ("PT", format!("{:.1}%", self.pt_pct())),
            ("ML", format!("{:.1}%", self.ml_pct())),
            ("IDsw", self.idsw.to_string()),
            ("Frag", self.frag.to_string()),
            ("FP", self.fp.to_string()),
            ("FN", self.fn_.to_string()),
            ("GT", self.gt_boxes.to_string()),
        ];
        let mut head = String::new();
        let mut row = String::new();
        for (name, value) in cols {
            let w = name.len().max(value.len());
            write!(head, "{name:>w$}  ").unwrap();
            write!(row, "{value:>w$}  ").unwrap();
        }
        format!("{}\n{}\n", head.trim_end(), row.trim_end())
    }
}

/// Boxes by frame then id. Rejects an id with two boxes on one frame.
fn by_frame(trajectories: &[Trajectory]) -> Result<BTreeMap<Frame, BTreeMap<u64, BBox>>> {
    let mut out: BTreeMap<Frame, BTreeMap<u64, BBox>> = BTreeMap::new();
    for t in trajectories {
        for b in &t.boxes {
            if out
                .entry(b.frame)
                .or_default()
                .insert(t.id, b.bbox())
                .is_some()
            {
                return Err(Error::DuplicateBox {
                    frame: b.frame,
                    id: t.id,
                });
            }
        }
    }
    Ok(out)
}

const FORBIDDEN: f64 = 1e9;

/// Minimum-cost assignment on a dense `rows x cols` matrix (row-major).
/// Returns the column of each row, `None` for rows left unassigned when
/// there are more rows than columns.
pub fn hungarian(costs: &[f64], rows: usize, cols: usize) -> Vec<Option<usize>> {
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    if rows > cols {
        let mut t = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                t[c * rows + r] = costs[r * cols + c];
            }
        }
        let by_col = hungarian(&t, cols, rows);
        let mut out = vec![None; rows];
        for (c, r) in by_col.into_iter().enumerate() {
            if let Some(r) = r {
                out[r] = Some(c);
            }
        }
        return out;
    }
    // potentials method with 1-based sentinels; rows <= cols
    let (n, m) = (rows, cols);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = costs[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}

/// CLEAR MOT over the union of frames of both sides. Correspondences of the
/// previous frame are kept while their IoU stays at or above the threshold;
/// the remaining boxes are matched to maximize total IoU.
pub fn clear_mot(gt: &[Trajectory], hyp: &[Trajectory], iou_threshold: f64) -> Result<MotReport> {
    let gt_frames = by_frame(gt)?;
    let hyp_frames = by_frame(hyp)?;
    let empty = BTreeMap::new();
    let frames: BTreeSet<Frame> = gt_frames.keys().chain(hyp_frames.keys()).copied().collect();

    let mut current: HashMap<u64, u64> = HashMap::new();
    let mut last_match: HashMap<u64, u64> = HashMap::new();
    // per ground-truth id: (present frames, matched frames, matched runs, tracked last time present)
    let mut coverage: BTreeMap<u64, (usize, usize, usize, bool)> = BTreeMap::new();
    let (mut matches, mut fp, mut fn_, mut idsw, mut gt_boxes, mut hyp_boxes) = (0, 0, 0, 0, 0, 0);
    let mut iou_sum = 0.0;

    for f in frames {
        let g = gt_frames.get(&f).unwrap_or(&empty);
        let h = hyp_frames.get(&f).unwrap_or(&empty);
        gt_boxes += g.len();
        hyp_boxes += h.len();
        let mut pairs: Vec<(u64, u64, f64)> = Vec::new();
        let mut used_h = BTreeSet::new();
        for (&gid, gb) in g {
            if let Some(&hid) = current.get(&gid) {
                if let Some(hb) = h.get(&hid) {
                    let iou = gb.iou(hb);
                    if iou >= iou_threshold {
                        pairs.push((gid, hid, iou));
                        used_h.insert(hid);
                    }
                }
            }
        }
        let kept: BTreeSet<u64> = pairs.iter().map(|p| p.0).collect();
        let free_g: Vec<(&u64, &BBox)> = g.iter().filter(|(id, _)| !kept.contains(id)).collect();
        let free_h: Vec<(&u64, &BBox)> = h.iter().filter(|(id, _)| !used_h.contains(id)).collect();
        let mut costs = vec![FORBIDDEN; free_g.len() * free_h.len()];
        for (r, (_, gb)) in free_g.iter().enumerate() {
            for (c, (_, hb)) in free_h.iter().enumerate() {
                let iou = gb.iou(hb);
                if iou >= iou_threshold {
                    costs[r * free_h.len() + c] = 1.0 - iou;
                }
            }
        }
        for (r, c) in hungarian(&costs, free_g.len(), free_h.len())
            .into_iter()
            .enumerate()
        {
            if let Some(c) = c {
                if costs[r * free_h.len() + c] < FORBIDDEN {
                    let iou = 1.0 - costs[r * free_h.len() + c];
                    pairs.push((*free_g[r].0, *free_h[c].0, iou));
                }
            }
        }

        current.clear();
        for &(gid, hid, iou) in &pairs {
            if last_match.get(&gid).is_some_and(|&prev| prev != hid) {
                idsw += 1;
            }
            last_match.insert(gid, hid);
            current.insert(gid, hid);
            iou_sum += iou;
        }
        matches += pairs.len();
        fn_ += g.len() - pairs.len();
        fp += h.len() - pairs.len();
        for &gid in g.keys() {
            let entry = coverage.entry(gid).or_insert((0, 0, 0, false));
            entry.0 += 1;
            let tracked = current.contains_key(&gid);
            if tracked {
                entry.1 += 1;
                if !entry.3 {
                    entry.2 += 1;
                }
            }
            entry.3 = tracked;
        }
    }

    let (mut mt, mut pt, mut ml, mut frag) = (0, 0, 0, 0);
    for &(present, tracked, runs, _) in coverage.values() {
        let ratio = tracked as f64 / present as f64;
        if ratio > 0.8 {
            mt += 1;
        } else if ratio < 0.2 {
            ml += 1;
        } else {
            pt += 1;
        }
        frag += runs.saturating_sub(1);
    }
    Ok(MotReport {
        ta: 1.0 - (fn_ + fp + idsw) as f64 / gt_boxes.max(1) as f64,
        tp: if matches > 0 {
            iou_sum / matches as f64
        } else {
            0.0
        },
        recall: if gt_boxes > 0 {
            matches as f64 / gt_boxes as f64
        } else {
            0.0
        },
        precision: if hyp_boxes > 0 {
            matches as f64 / hyp_boxes as f64
        } else {
            0.0
        },
        mt,
        pt,
        ml,
        idsw,
        frag,
        fp,
        fn_,
        matches,
        gt_boxes,
        hyp_boxes,
        gt_trajectories: coverage.len(),
    })
}

/// Length and overlap statistics of a set of feature tracks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackStats {
    pub tracks: usize,
    /// Mean frame span as a percentage of the sequence length.
    pub avg_length_pct: f64,
    /// Mean number of common frames over track pairs sharing any frame.
    pub mean_overlap_frames: f64,
    /// Identity changes per track; absent without identity labels.
    pub idsw_per_traj: Option<f64>,
}

fn intervals(t: &FeatureTrack) -> Vec<(Frame, Frame)> {
    t.members()
        .iter()
        .map(|m| (m.first_frame, m.last_frame))
        .collect()
}

fn common(a: &[(Frame, Frame)], b: &[(Frame, Frame)]) -> u64 {
    let (mut i, mut j, mut n) = (0, 0, 0u64);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if lo <= hi {
            n += (hi - lo + 1) as u64;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    n
}

/// `labels[i]` lists the identity seen along track `i` in time order, `None`
/// where no identity applies; consecutive differing identities count as one
/// switch each.
pub fn track_stats(
    tracks: &[FeatureTrack],
    sequence_length: u32,
    labels: Option<&[Vec<Option<u64>>]>,
) -> Result<TrackStats> {
    if sequence_length == 0 {
        return Err(Error::InvalidInput("sequence length is zero".into()));
    }
    if let Some(l) = labels {
        if l.len() != tracks.len() {
            return Err(Error::PartialLabeling {
                labeled: l.len(),
                expected: tracks.len(),
            });
        }
    }
    let n = tracks.len();
    let spans: f64 = tracks
        .iter()
        .map(|t| {
            let (first, last) = crate::model::track_frame_span(t);
            (last - first + 1) as f64
        })
        .sum();
    let avg_length_pct = if n == 0 {
        0.0
    } else {
        100.0 * spans / n as f64 / sequence_length as f64
    };
    let iv: Vec<Vec<(Frame, Frame)>> = tracks.iter().map(intervals).collect();
    let (mut pairs, mut total) = (0u64, 0u64);
    for i in 0..n {
        for j in (i + 1)..n {
            let c = common(&iv[i], &iv[j]);
            if c > 0 {
                pairs += 1;
                total += c;
            }
        }
    }
    let mean_overlap_frames = if pairs == 0 {
        0.0
    } else {
        total as f64 / pairs as f64
    };
    let idsw_per_traj = labels.map(|l| {
        if n == 0 {
            return 0.0;
        }
        let switches: usize = l
            .iter()
            .map(|seq| {
                let known: Vec<u64> = seq.iter().flatten().copied().collect();
                known.windows(2).filter(|w| w[0] != w[1]).count()
            })
            .sum();
        switches as f64 / n as f64
    });
    Ok(TrackStats {
        tracks: n,
        avg_length_pct,
        mean_overlap_frames,
        idsw_per_traj,
    })
}

/// Each tracklet as a one-member low-level track, for comparing raw
/// tracklets with linked tracks.
pub fn tracklets_as_tracks(tracklets: &[DptTracklet]) -> Vec<FeatureTrack> {
    tracklets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            FeatureTrack::new(
                i,
                Category::Low,
                vec![Member {
                    feature: i,
                    first_frame: t.first_frame(),
                    last_frame: t.last_frame(),
                }],
            )
            .expect("one member")
        })
        .collect()
}

/// Identity of every point of a low-level track: the ground-truth
/// trajectory whose box contains it, the lowest id when several do.
pub fn point_identities(
    track: &FeatureTrack,
    tracklets: &[DptTracklet],
    gt: &[Trajectory],
) -> Vec<Option<u64>> {
    track
        .members()
        .iter()
        .flat_map(|m| tracklets[m.feature].points())
        .map(|p| {
            gt.iter()
                .filter(|t| {
                    t.box_at(p.frame)
                        .is_some_and(|b| b.bbox().contains(p.position))
                })
                .map(|t| t.id)
                .min()
        })
        .collect()
}
