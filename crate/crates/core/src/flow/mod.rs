//! Temporal association: features of one category are linked into
//! [`FeatureTrack`]s by a min-cost flow over a split-node graph.
//!
//! Every feature `i` becomes a node pair `u_i -> v_i` carrying the detection
//! cost. A track is a unit of flow `source -> u_i -> v_i -> u_j -> ... -> sink`;
//! the entry and exit arcs carry `c_in` and `c_out`, the `v_i -> u_j` arcs the
//! link cost. For dense point tracklets the `u_i -> v_i` arc is mandatory, so
//! every tracklet ends up in exactly one track.

mod oracle;
mod solver;

pub use oracle::{oracle_enumerate, ORACLE_NODE_LIMIT};
pub use solver::solve_min_cost_flow;

use serde::{Deserialize, Serialize};

use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::model::{Category, Detection, DptTracklet, FeatureTrack, Frame, Member, Point};

/// Largest admissible value of the position term of a link cost. Pairs above
/// it get no transition arc.
pub const LINK_GATE: f64 = 2.0;

/// One side of a candidate link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkEnd {
    pub frame: Frame,
    pub position: Point,
    pub appearance: [f64; 3],
}

impl From<&Detection> for LinkEnd {
    fn from(d: &Detection) -> Self {
        LinkEnd {
            frame: d.frame,
            position: d.center,
            appearance: [0.0; 3],
        }
    }
}

fn frame_gap(a: &LinkEnd, b: &LinkEnd, config: &TrackerConfig) -> Result<f64> {
    let gap = b.frame as i64 - a.frame as i64;
    if gap <= 0 || gap > config.f_max as i64 {
        return Err(Error::InadmissibleLink {
            gap,
            f_max: config.f_max,
        });
    }
    Ok(gap as f64)
}

fn position_term(a: &LinkEnd, b: &LinkEnd, dt: f64, config: &TrackerConfig) -> f64 {
    a.position.distance(b.position) / (config.v_max * dt)
}

/// Cost of linking `a` to the later feature `b`: normalized speed plus, for
/// dense points only, appearance change, plus normalized frame gap.
pub fn link_cost(
    category: Category,
    a: &LinkEnd,
    b: &LinkEnd,
    config: &TrackerConfig,
) -> Result<f64> {
    let dt = frame_gap(a, b, config)?;
    let mut cost = position_term(a, b, dt, config) + dt / config.f_max as f64;
    if category == Category::Low {
        let da: f64 = a
            .appearance
            .iter()
            .zip(&b.appearance)
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        cost += da.sqrt() / config.a_max;
    }
    Ok(cost)
}

/// Min-max range of the detector scores of one sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceScale {
    pub min: f64,
    pub max: f64,
}

impl ConfidenceScale {
    pub fn from_detections(detections: &[Detection]) -> Self {
        let (min, max) = detections
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
                (lo.min(d.confidence), hi.max(d.confidence))
            });
        ConfidenceScale { min, max }
    }

    /// Maps a raw score to `[eps, 1 - eps]`. A degenerate range, where every
    /// score is equal, maps to `1 - eps`.
    pub fn squash(&self, score: f64, eps: f64) -> f64 {
        let span = self.max - self.min;
        let q = if span > 0.0 && span.is_finite() {
            (score - self.min) / span
        } else {
            1.0
        };
        q.clamp(eps, 1.0 - eps)
    }
}

/// Log-odds cost of a squashed detection score `q`; negative for `q > 0.5`.
pub fn detection_cost_from_probability(q: f64) -> f64 {
    ((1.0 - q) / q).ln()
}

pub fn detection_cost(d: &Detection, scale: &ConfidenceScale, config: &TrackerConfig) -> f64 {
    detection_cost_from_probability(scale.squash(d.confidence, config.confidence_epsilon))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowNode {
    /// Index into the feature list the graph was built from.
    pub feature: usize,
    pub first_frame: Frame,
    pub last_frame: Frame,
    pub detection_cost: f64,
    pub entry_cost: f64,
    pub exit_cost: f64,
}

/// Arc `v_from -> u_to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowGraph {
    pub category: Category,
    pub nodes: Vec<FlowNode>,
    /// Sorted by `(from, to)`.
    pub transitions: Vec<Transition>,
}

impl FlowGraph {
    pub fn new(
        category: Category,
        nodes: Vec<FlowNode>,
        mut transitions: Vec<Transition>,
    ) -> Result<Self> {
        for t in &transitions {
            let (a, b) = match (nodes.get(t.from), nodes.get(t.to)) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "transition {}->{} out of range",
                        t.from, t.to
                    )))
                }
            };
            if b.first_frame <= a.last_frame {
                return Err(Error::InvalidInput(format!(
                    "transition {}->{} is not forward in time",
                    t.from, t.to
                )));
            }
        }
        transitions.sort_by_key(|t| (t.from, t.to));
        Ok(FlowGraph {
            category,
            nodes,
            transitions,
        })
    }

    /// Dense point tracklets must all be covered.
    pub fn is_mandatory(&self) -> bool {
        self.category == Category::Low
    }

    fn with_links(
        category: Category,
        nodes: Vec<FlowNode>,
        ends: &[(LinkEnd, LinkEnd)],
        config: &TrackerConfig,
    ) -> Self {
        let mut transitions = Vec::new();
        for (i, (_, last_i)) in ends.iter().enumerate() {
            for (j, (first_j, _)) in ends.iter().enumerate() {
                let Ok(dt) = frame_gap(last_i, first_j, config) else {
                    continue;
                };
                if position_term(last_i, first_j, dt, config) > LINK_GATE {
                    continue;
                }
                let cost = link_cost(category, last_i, first_j, config).expect("gap checked");
                transitions.push(Transition {
                    from: i,
                    to: j,
                    cost,
                });
            }
        }
        FlowGraph {
            category,
            nodes,
            transitions,
        }
    }

    pub fn from_detections(
        detections: &[Detection],
        scale: &ConfidenceScale,
        config: &TrackerConfig,
    ) -> Self {
        let nodes = detections
            .iter()
            .enumerate()
            .map(|(i, d)| FlowNode {
                feature: i,
                first_frame: d.frame,
                last_frame: d.frame,
                detection_cost: detection_cost(d, scale, config),
                entry_cost: config.c_in,
                exit_cost: config.c_out,
            })
            .collect();
        let ends: Vec<_> = detections
            .iter()
            .map(|d| (LinkEnd::from(d), LinkEnd::from(d)))
            .collect();
        Self::with_links(Category::Mid, nodes, &ends, config)
    }

    /// Tracklets are linked from the last point of one to the first point of
    /// a strictly later one.
    pub fn from_tracklets(tracklets: &[DptTracklet], config: &TrackerConfig) -> Self {
        let nodes = tracklets
            .iter()
            .enumerate()
            .map(|(i, t)| FlowNode {
                feature: i,
                first_frame: t.first_frame(),
                last_frame: t.last_frame(),
                detection_cost: 0.0,
                entry_cost: config.c_in,
                exit_cost: config.c_out,
            })
            .collect();
        let end = |p: &crate::model::DptPoint| LinkEnd {
            frame: p.frame,
            position: p.position,
            appearance: p.appearance,
        };
        let ends: Vec<_> = tracklets
            .iter()
            .map(|t| (end(t.first()), end(t.last())))
            .collect();
        Self::with_links(Category::Low, nodes, &ends, config)
    }
}

/// Unit flags of a flow: which entry, exit, detection and transition arcs
/// carry flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSolution {
    pub entry: Vec<bool>,
    pub exit: Vec<bool>,
    pub active: Vec<bool>,
    /// Parallel to [`FlowGraph::transitions`].
    pub transitions: Vec<bool>,
    pub objective: f64,
}

impl FlowSolution {
    pub fn empty(g: &FlowGraph) -> Self {
        FlowSolution {
            entry: vec![false; g.nodes.len()],
            exit: vec![false; g.nodes.len()],
            active: vec![false; g.nodes.len()],
            transitions: vec![false; g.transitions.len()],
            objective: 0.0,
        }
    }

    /// Sum of the arc costs of the chosen flags.
    pub fn cost(&self, g: &FlowGraph) -> f64 {
        let mut total = 0.0;
        for (i, n) in g.nodes.iter().enumerate() {
            if self.entry[i] {
                total += n.entry_cost;
            }
            if self.active[i] {
                total += n.detection_cost;
            }
            if self.exit[i] {
                total += n.exit_cost;
            }
        }
        for (t, &on) in g.transitions.iter().zip(&self.transitions) {
            if on {
                total += t.cost;
            }
        }
        total
    }

    /// Checks flow conservation at every node and, for mandatory graphs, that
    /// every node carries flow.
    pub fn check_conservation(&self, g: &FlowGraph) -> Result<()> {
        let n = g.nodes.len();
        let mut inflow = vec![0u32; n];
        let mut outflow = vec![0u32; n];
        for (t, &on) in g.transitions.iter().zip(&self.transitions) {
            if on {
                outflow[t.from] += 1;
                inflow[t.to] += 1;
            }
        }
        for i in 0..n {
            let d = self.active[i] as u32;
            let fin = self.entry[i] as u32 + inflow[i];
            let fout = self.exit[i] as u32 + outflow[i];
            if fin != d || fout != d {
                return Err(Error::InvalidInput(format!(
                    "conservation violated at node {i}: in {fin}, through {d}, out {fout}"
                )));
            }
            if g.is_mandatory() && d != 1 {
                return Err(Error::InvalidInput(format!(
                    "mandatory node {i} carries no flow"
                )));
            }
        }
        Ok(())
    }
}

/// One track per source-to-sink path, ordered by the node index of the path's
/// first node.
pub fn extract_tracks(sol: &FlowSolution, g: &FlowGraph) -> Vec<FeatureTrack> {
    let mut successor = vec![None; g.nodes.len()];
    for (t, &on) in g.transitions.iter().zip(&sol.transitions) {
        if on {
            successor[t.from] = Some(t.to);
        }
    }
    let mut tracks = Vec::new();
    for start in (0..g.nodes.len()).filter(|&i| sol.entry[i]) {
        let mut members = Vec::new();
        let mut cur = Some(start);
        while let Some(i) = cur {
            let n = &g.nodes[i];
            members.push(Member {
                feature: n.feature,
                first_frame: n.first_frame,
                last_frame: n.last_frame,
            });
            cur = successor[i];
        }
        let id = tracks.len();
        tracks.push(
            FeatureTrack::new(id, g.category, members).expect("flow paths are forward in time"),
        );
    }
    tracks
}

/// Builds, solves and extracts in one step.
pub fn link_detections(
    detections: &[Detection],
    scale: &ConfidenceScale,
    config: &TrackerConfig,
) -> Vec<FeatureTrack> {
    let g = FlowGraph::from_detections(detections, scale, config);
    extract_tracks(&solve_min_cost_flow(&g), &g)
}

pub fn link_tracklets(tracklets: &[DptTracklet], config: &TrackerConfig) -> Vec<FeatureTrack> {
    let g = FlowGraph::from_tracklets(tracklets, config);
    extract_tracks(&solve_min_cost_flow(&g), &g)
}
