//! Exhaustive reference solver for small flow graphs.

use super::{FlowGraph, FlowSolution};
use crate::error::{Error, Result};

pub const ORACLE_NODE_LIMIT: usize = 10;

struct Search<'a> {
    g: &'a FlowGraph,
    order: Vec<usize>,
    /// Incoming transitions per node: `(transition index, predecessor)`.
    incoming: Vec<Vec<(usize, usize)>>,
    active: Vec<bool>,
    pred: Vec<Option<usize>>,
    has_succ: Vec<bool>,
    best: Option<(f64, Vec<bool>, Vec<Option<usize>>)>,
}

impl Search<'_> {
    fn evaluate(&mut self) {
        let mut cost = 0.0;
        for (i, node) in self.g.nodes.iter().enumerate() {
            if !self.active[i] {
                continue;
            }
            cost += node.detection_cost;
            match self.pred[i] {
                None => cost += node.entry_cost,
                Some(t) => cost += self.g.transitions[t].cost,
            }
            if !self.has_succ[i] {
                cost += node.exit_cost;
            }
        }
        if self.best.as_ref().is_none_or(|(b, _, _)| cost < *b) {
            self.best = Some((cost, self.active.clone(), self.pred.clone()));
        }
    }

    fn visit(&mut self, pos: usize) {
        if pos == self.order.len() {
            self.evaluate();
            return;
        }
        let i = self.order[pos];
        if !self.g.is_mandatory() {
            self.visit(pos + 1);
        }
        self.active[i] = true;
        self.pred[i] = None;
        self.visit(pos + 1);
        for k in 0..self.incoming[i].len() {
            let (t, j) = self.incoming[i][k];
            if self.active[j] && !self.has_succ[j] {
                self.has_succ[j] = true;
                self.pred[i] = Some(t);
                self.visit(pos + 1);
                self.has_succ[j] = false;
            }
        }
        self.pred[i] = None;
        self.active[i] = false;
    }
}

/// Enumerates every integral flow that respects unit capacities, conservation
/// and mandatory nodes, and returns the cheapest (first found on ties).
/// Refuses graphs with more than [`ORACLE_NODE_LIMIT`] feature nodes.
pub fn oracle_enumerate(g: &FlowGraph) -> Result<FlowSolution> {
    let n = g.nodes.len();
    if n > ORACLE_NODE_LIMIT {
        return Err(Error::OracleTooLarge {
            nodes: n,
            limit: ORACLE_NODE_LIMIT,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (g.nodes[i].first_frame, i));
    let mut incoming = vec![Vec::new(); n];
    for (t, tr) in g.transitions.iter().enumerate() {
        incoming[tr.to].push((t, tr.from));
    }
    let mut search = Search {
        g,
        order,
        incoming,
        active: vec![false; n],
        pred: vec![None; n],
        has_succ: vec![false; n],
        best: None,
    };
    search.visit(0);

    let mut sol = FlowSolution::empty(g);
    let Some((_, active, pred)) = search.best else {
        return Ok(sol);
    };
    for i in 0..n {
        if !active[i] {
            continue;
        }
        sol.active[i] = true;
        match pred[i] {
            None => sol.entry[i] = true,
            Some(t) => sol.transitions[t] = true,
        }
    }
    let mut has_succ = vec![false; n];
    for (t, tr) in g.transitions.iter().enumerate() {
        if sol.transitions[t] {
            has_succ[tr.from] = true;
        }
    }
    for i in 0..n {
        sol.exit[i] = active[i] && !has_succ[i];
    }
    sol.objective = sol.cost(g);
    Ok(sol)
}
