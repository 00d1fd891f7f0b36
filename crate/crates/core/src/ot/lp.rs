//! Exact transport plans for small instances.
//!
//! [`lp_ot_oracle`] solves the transportation LP with successive shortest
//! augmenting paths on the bipartite residual graph. It works for any
//! nonnegative cost matrix and is used as a reference for the closed-form
//! 1D route. [`monotone_coupling`] is the north-west-corner plan, optimal in
//! 1D for convex costs.

use super::DiscreteDistribution;
use crate::error::{Error, Result};

/// Largest `n * m` accepted by [`lp_ot_oracle`].
pub const MAX_CELLS: usize = 64;

const MASS_EPS: f64 = 1e-15;

/// Coupling matrix with its total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// Row-major `n x m` masses.
    pub plan: Vec<Vec<f64>>,
    pub cost: f64,
}

impl TransportPlan {
    pub fn row_sums(&self) -> Vec<f64> {
        self.plan.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let m = self.plan.first().map_or(0, Vec::len);
        (0..m).map(|j| self.plan.iter().map(|r| r[j]).sum()).collect()
    }
}

/// `|p_i - q_j|^p` for every atom pair.
pub fn power_cost_matrix(mu: &DiscreteDistribution, nu: &DiscreteDistribution, p: f64) -> Vec<Vec<f64>> {
    mu.positions()
        .iter()
        .map(|&x| nu.positions().iter().map(|&y| (x - y).abs().powf(p)).collect())
        .collect()
}

/// Exact minimum-cost coupling of `mu` and `nu` under `cost`.
pub fn lp_ot_oracle(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    cost: &[Vec<f64>],
) -> Result<TransportPlan> {
    let (n, m) = (mu.len(), nu.len());
    if n * m > MAX_CELLS {
        return Err(Error::Size { n, m, limit: MAX_CELLS });
    }
    if cost.len() != n || cost.iter().any(|r| r.len() != m) {
        return Err(Error::Shape(format!("cost matrix must be {n}x{m}")));
    }
    if cost.iter().flatten().any(|&c| !(c.is_finite() && c >= 0.0)) {
        return Err(Error::Domain("cost matrix must be finite and nonnegative".into()));
    }

    // Nodes: 0 = super source, 1..=n sources, n+1..=n+m sinks, n+m+1 = super sink.
    let mut graph = FlowGraph::new(n + m + 2);
    let (source, sink) = (0, n + m + 1);
    let unbounded = 2.0;
    for (i, &a) in mu.weights().iter().enumerate() {
        graph.add_edge(source, 1 + i, a, 0.0);
    }
    let mut cells = vec![vec![0usize; m]; n];
    for i in 0..n {
        for j in 0..m {
            cells[i][j] = graph.add_edge(1 + i, 1 + n + j, unbounded, cost[i][j]);
        }
    }
    for (j, &b) in nu.weights().iter().enumerate() {
        graph.add_edge(1 + n + j, sink, b, 0.0);
    }
    graph.min_cost_flow(source, sink);

    let plan: Vec<Vec<f64>> = cells
        .iter()
        .map(|row| row.iter().map(|&e| graph.flow(e)).collect())
        .collect();
    let total = plan
        .iter()
        .zip(cost)
        .flat_map(|(fr, cr)| fr.iter().zip(cr).map(|(f, c)| f * c))
        .sum();
    Ok(TransportPlan { plan, cost: total })
}

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
}

/// Residual graph; edge `2e` is forward and `2e + 1` its reverse.
struct FlowGraph {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
    original_cap: Vec<f64>,
}

impl FlowGraph {
    fn new(nodes: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
            original_cap: Vec::new(),
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: f64, cost: f64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, cost });
        self.edges.push(Edge { to: from, cap: 0.0, cost: -cost });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        self.original_cap.push(cap);
        id
    }

    fn flow(&self, edge: usize) -> f64 {
        (self.original_cap[edge / 2] - self.edges[edge].cap).max(0.0)
    }

    /// Successive shortest paths with Bellman-Ford until no augmenting path
    /// remains.
    fn min_cost_flow(&mut self, source: usize, sink: usize) {
        let nodes = self.adj.len();
        loop {
            let mut dist = vec![f64::INFINITY; nodes];
            let mut pred_edge = vec![usize::MAX; nodes];
            dist[source] = 0.0;
            for _ in 0..nodes {
                let mut changed = false;
                for u in 0..nodes {
                    if !dist[u].is_finite() {
                        continue;
                    }
                    for &e in &self.adj[u] {
                        let edge = &self.edges[e];
                        if edge.cap > MASS_EPS && dist[u] + edge.cost < dist[edge.to] - 1e-12 {
                            dist[edge.to] = dist[u] + edge.cost;
                            pred_edge[edge.to] = e;
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            if !dist[sink].is_finite() {
                return;
            }
            let mut delta = f64::INFINITY;
            let mut v = sink;
            while v != source {
                let e = pred_edge[v];
                delta = delta.min(self.edges[e].cap);
                v = self.edges[e ^ 1].to;
            }
            if delta <= MASS_EPS {
                return;
            }
            let mut v = sink;
            while v != source {
                let e = pred_edge[v];
                self.edges[e].cap -= delta;
                self.edges[e ^ 1].cap += delta;
                v = self.edges[e ^ 1].to;
            }
        }
    }
}

/// North-west-corner coupling: mass is matched in order of position.
pub fn monotone_coupling(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    cost: &[Vec<f64>],
) -> TransportPlan {
    let (a, b) = (mu.weights(), nu.weights());
    let mut plan = vec![vec![0.0; b.len()]; a.len()];
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0], b[0]);
    while i < a.len() && j < b.len() {
        let t = ra.min(rb);
        plan[i][j] += t;
        ra -= t;
        rb -= t;
        if ra <= rb {
            i += 1;
            if i < a.len() {
                ra = a[i];
            }
        } else {
            j += 1;
            if j < b.len() {
                rb = b[j];
            }
        }
    }
    let total = plan
        .iter()
        .zip(cost)
        .flat_map(|(pr, cr)| pr.iter().zip(cr).map(|(f, c)| f * c))
        .sum();
    TransportPlan { plan, cost: total }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirac_to_dirac_single_cell() {
        let (mu, nu) = (DiscreteDistribution::dirac(1.0), DiscreteDistribution::dirac(4.0));
        let plan = lp_ot_oracle(&mu, &nu, &power_cost_matrix(&mu, &nu, 2.0)).unwrap();
        assert_eq!(plan.plan, vec![vec![1.0]]);
        assert_eq!(plan.cost, 9.0);
    }

    #[test]
    fn two_by_one_polytope() {
        // The 2x1 polytope has a single vertex (0.5, 0.5).
        let mu = DiscreteDistribution::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let nu = DiscreteDistribution::dirac(2.0);
        let plan = lp_ot_oracle(&mu, &nu, &power_cost_matrix(&mu, &nu, 2.0)).unwrap();
        assert!((plan.cost - 2.5).abs() < 1e-15);
    }

    #[test]
    fn identical_atoms_give_identity_plan() {
        let mu = DiscreteDistribution::new(vec![0.0, 2.0, 3.0], vec![0.2, 0.5, 0.3]).unwrap();
        let plan = lp_ot_oracle(&mu, &mu, &power_cost_matrix(&mu, &mu, 2.0)).unwrap();
        assert_eq!(plan.cost, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { mu.weights()[i] } else { 0.0 };
                assert!((plan.plan[i][j] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_monotone_cost_is_handled() {
        // anti-diagonal cost forces the crossing plan
        let mu = DiscreteDistribution::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let cost = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let plan = lp_ot_oracle(&mu, &mu, &cost).unwrap();
        assert!(plan.cost.abs() < 1e-15);
        assert!((plan.plan[0][1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn size_limit() {
        let w = vec![1.0 / 9.0; 9];
        let d = DiscreteDistribution::on_grid(w).unwrap();
        let cost = power_cost_matrix(&d, &d, 1.0);
        assert!(matches!(lp_ot_oracle(&d, &d, &cost), Err(Error::Size { n: 9, m: 9, .. })));
    }
}
