//! Exact transport by successive shortest paths on the neighbourhood graph.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use crate::coupling::Block;
use crate::error::{Error, Result};
use crate::grid::LocalCost;

#[derive(Debug, Clone, Copy)]
struct Edge {
    to: usize,
    rev: usize,
    cap: f64,
    cost: f64,
}

struct Graph {
    adj: Vec<Vec<Edge>>,
}

impl Graph {
    fn new(nodes: usize) -> Self {
        Self {
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: f64, cost: f64) -> (usize, usize) {
        let a = self.adj[from].len();
        let b = self.adj[to].len();
        self.adj[from].push(Edge {
            to,
            rev: b,
            cap,
            cost,
        });
        self.adj[to].push(Edge {
            to: from,
            rev: a,
            cap: 0.0,
            cost: -cost,
        });
        (from, a)
    }
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Optimal plan in block layout and its cost.
#[derive(Debug, Clone)]
pub struct TransportSolution {
    pub value: f64,
    pub plan: Block,
}

/// Min-cost transport from `x` to `z` restricted to stored neighbourhood
/// entries. Masses must already balance; see
/// [`wasserstein_exact`](super::wasserstein_exact) for the checked entry
/// point.
pub fn min_cost_transport(
    cost: &Arc<LocalCost>,
    x: &[f64],
    z: &[f64],
) -> Result<TransportSolution> {
    let n = cost.n();
    let source = 2 * n;
    let sink = 2 * n + 1;
    let mut g = Graph::new(2 * n + 2);
    let total: f64 = x.iter().sum();
    let mut entry_arcs = Vec::with_capacity(cost.block_len());
    for i in 0..n {
        if x[i] > 0.0 {
            g.add(source, i, x[i], 0.0);
        }
        for slot in 0..cost.row_len(i) {
            let j = cost.row_targets(i)[slot];
            let arc = g.add(i, n + j, f64::INFINITY, cost.row_costs(i)[slot]);
            entry_arcs.push((cost.flat(i, slot), arc));
        }
    }
    for (j, &zj) in z.iter().enumerate() {
        if zj > 0.0 {
            g.add(n + j, sink, zj, 0.0);
        }
    }

    let cap_eps = 1e-15 * total.max(1e-300);
    let mut potential = vec![0.0; g.adj.len()];
    let mut dist = vec![f64::INFINITY; g.adj.len()];
    let mut prev: Vec<(usize, usize)> = vec![(usize::MAX, 0); g.adj.len()];
    let mut remaining = total;
    let mut heap = BinaryHeap::new();
    while remaining > 1e-13 * total {
        dist.fill(f64::INFINITY);
        dist[source] = 0.0;
        heap.push(Item(0.0, source));
        while let Some(Item(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for (e, a) in g.adj[u].iter().enumerate() {
                if a.cap <= cap_eps {
                    continue;
                }
                let reduced = (a.cost + potential[u] - potential[a.to]).max(0.0);
                let nd = d + reduced;
                if nd < dist[a.to] {
                    dist[a.to] = nd;
                    prev[a.to] = (u, e);
                    heap.push(Item(nd, a.to));
                }
            }
        }
        if !dist[sink].is_finite() {
            return Err(Error::Infeasible(format!(
                "{remaining:e} units of mass cannot reach the target within the neighbourhoods"
            )));
        }
        let cap_d = dist[sink];
        for (p, d) in potential.iter_mut().zip(&dist) {
            *p += d.min(cap_d);
        }
        let mut push = remaining;
        let mut v = sink;
        while v != source {
            let (u, e) = prev[v];
            push = push.min(g.adj[u][e].cap);
            v = u;
        }
        let mut v = sink;
        while v != source {
            let (u, e) = prev[v];
            let rev = g.adj[u][e].rev;
            g.adj[u][e].cap -= push;
            g.adj[v][rev].cap += push;
            v = u;
        }
        remaining -= push;
    }

    let mut values = vec![0.0; cost.block_len()];
    for &(flat, (u, e)) in &entry_arcs {
        let a = g.adj[u][e];
        values[flat] = g.adj[a.to][a.rev].cap;
    }
    let plan = Block::from_values(cost.clone(), values)?;
    Ok(TransportSolution {
        value: plan.transport_cost(),
        plan,
    })
}
