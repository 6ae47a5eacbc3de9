//! Exact integral min-cost flow by successive shortest paths.
//!
//! The number of tracks is free, so units are pushed one at a time along the
//! cheapest residual source-sink path for as long as that path has negative
//! cost. Path costs are nondecreasing across augmentations, which makes the
//! stopping point optimal. The graph is a DAG, so initial potentials come from
//! one pass in topological order and every later search is a Dijkstra over
//! reduced costs.
//!
//! Mandatory nodes are handled by discounting their `u -> v` arc by more than
//! the cost of a dedicated one-node path; any solution leaving such a node
//! uncovered can then be strictly improved, so the optimum covers all of them.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{FlowGraph, FlowSolution};

const SOURCE: usize = 0;
const SINK: usize = 1;

fn u_node(i: usize) -> usize {
    2 + 2 * i
}

fn v_node(i: usize) -> usize {
    3 + 2 * i
}

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: u8,
    cost: f64,
    rev: usize,
}

struct Residual {
    adj: Vec<Vec<Edge>>,
}

impl Residual {
    fn new(n: usize) -> Self {
        Residual {
            adj: vec![Vec::new(); n],
        }
    }

    /// Returns `(node, position)` of the forward edge.
    fn add(&mut self, from: usize, to: usize, cost: f64) -> (usize, usize) {
        let fwd = self.adj[from].len();
        let back = self.adj[to].len();
        self.adj[from].push(Edge {
            to,
            cap: 1,
            cost,
            rev: back,
        });
        self.adj[to].push(Edge {
            to: from,
            cap: 0,
            cost: -cost,
            rev: fwd,
        });
        (from, fwd)
    }

    fn used(&self, (node, pos): (usize, usize)) -> bool {
        self.adj[node][pos].cap == 0
    }
}

#[derive(PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // min-heap on (dist, node)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Globally minimal integral flow. Ties between equal-cost paths go to the
/// lowest node index.
pub fn solve_min_cost_flow(g: &FlowGraph) -> FlowSolution {
    let n = g.nodes.len();
    if n == 0 {
        return FlowSolution::empty(g);
    }
    let discount = if g.is_mandatory() {
        g.nodes
            .iter()
            .map(|node| node.entry_cost.max(0.0) + node.exit_cost.max(0.0))
            .fold(0.0, f64::max)
            + 1.0
    } else {
        0.0
    };

    let vcount = 2 + 2 * n;
    let mut res = Residual::new(vcount);
    let mut entry_arc = Vec::with_capacity(n);
    let mut exit_arc = Vec::with_capacity(n);
    let mut det_arc = Vec::with_capacity(n);
    for (i, node) in g.nodes.iter().enumerate() {
        entry_arc.push(res.add(SOURCE, u_node(i), node.entry_cost));
        det_arc.push(res.add(u_node(i), v_node(i), node.detection_cost - discount));
        exit_arc.push(res.add(v_node(i), SINK, node.exit_cost));
    }
    let trans_arc: Vec<_> = g
        .transitions
        .iter()
        .map(|t| res.add(v_node(t.from), u_node(t.to), t.cost))
        .collect();

    let mut potential = initial_potentials(g, &res);
    let mut dist = vec![f64::INFINITY; vcount];
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; vcount];

    loop {
        dist.fill(f64::INFINITY);
        parent.fill(None);
        dist[SOURCE] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Entry {
            dist: 0.0,
            node: SOURCE,
        });
        while let Some(Entry { dist: d, node }) = heap.pop() {
            if d > dist[node] {
                continue;
            }
            for (pos, e) in res.adj[node].iter().enumerate() {
                if e.cap == 0 {
                    continue;
                }
                let reduced = (e.cost + potential[node] - potential[e.to]).max(0.0);
                let nd = d + reduced;
                if nd < dist[e.to] {
                    dist[e.to] = nd;
                    parent[e.to] = Some((node, pos));
                    heap.push(Entry {
                        dist: nd,
                        node: e.to,
                    });
                }
            }
        }
        if !dist[SINK].is_finite() {
            break;
        }
        let path_cost = dist[SINK] + potential[SINK] - potential[SOURCE];
        if path_cost > -1e-12 {
            break;
        }
        let mut cur = SINK;
        while let Some((prev, pos)) = parent[cur] {
            let rev = res.adj[prev][pos].rev;
            res.adj[prev][pos].cap -= 1;
            res.adj[cur][rev].cap += 1;
            cur = prev;
        }
        // capping at the sink distance keeps every reduced cost nonnegative,
        // including edges out of nodes the search did not reach
        let cap = dist[SINK];
        for (p, d) in potential.iter_mut().zip(&dist) {
            *p += d.min(cap);
        }
    }

    let mut sol = FlowSolution::empty(g);
    for i in 0..n {
        sol.entry[i] = res.used(entry_arc[i]);
        sol.exit[i] = res.used(exit_arc[i]);
        sol.active[i] = res.used(det_arc[i]);
    }
    for (k, &arc) in trans_arc.iter().enumerate() {
        sol.transitions[k] = res.used(arc);
    }
    if g.is_mandatory() {
        assert!(
            sol.active.iter().all(|&a| a),
            "mandatory node left uncovered"
        );
    }
    sol.objective = sol.cost(g);
    sol
}

/// Shortest distances from the source over the initial (acyclic) residual
/// graph, visiting nodes in time order.
fn initial_potentials(g: &FlowGraph, res: &Residual) -> Vec<f64> {
    let mut order: Vec<usize> = (0..g.nodes.len()).collect();
    order.sort_by_key(|&i| (g.nodes[i].first_frame, i));
    let mut topo = Vec::with_capacity(res.adj.len());
    topo.push(SOURCE);
    for i in order {
        topo.push(u_node(i));
        topo.push(v_node(i));
    }
    topo.push(SINK);

    let mut dist = vec![f64::INFINITY; res.adj.len()];
    dist[SOURCE] = 0.0;
    for &node in &topo {
        let d = dist[node];
        if !d.is_finite() {
            continue;
        }
        for e in res.adj[node].iter().filter(|e| e.cap > 0) {
            if d + e.cost < dist[e.to] {
                dist[e.to] = d + e.cost;
            }
        }
    }
    dist.iter()
        .map(|d| if d.is_finite() { *d } else { 0.0 })
        .collect()
}
