//! Least-squares isotonic projection under the coordinatewise partial order
//! on component configurations.
//!
//! The projection is exact: blocks are split recursively, each split solved
//! as a maximum-weight closure problem via max-flow. A violated constraint
//! can therefore never survive, and the objective matches a brute-force
//! least-squares oracle (see tests).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// DAG over point indices; an edge (i, j) constrains g_i ≤ g_j.
/// Stored transitively reduced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialOrder {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl PartialOrder {
    /// Validates indices and acyclicity.
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        for &(a, b) in &edges {
            if a >= n || b >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a},{b}) outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::InvalidParameter(format!("self-loop at {a}")));
            }
        }
        let po = Self { n, edges };
        if po.topological_order().is_none() {
            return Err(Error::DegenerateData("order contains a cycle".into()));
        }
        Ok(po)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    fn topological_order(&self) -> Option<Vec<usize>> {
        let mut indeg = vec![0usize; self.n];
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            indeg[b] += 1;
            adj[a].push(b);
        }
        let mut queue: Vec<usize> = (0..self.n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(self.n);
        while let Some(v) = queue.pop() {
            order.push(v);
            for &w in &adj[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    queue.push(w);
                }
            }
        }
        (order.len() == self.n).then_some(order)
    }
}

/// Comparability order of configuration rows: i precedes j when every
/// coordinate of row i is ≤ the corresponding coordinate of row j. Duplicate
/// rows are ordered by index so the relation stays acyclic. The returned
/// edge set is transitively reduced.
pub fn comparable_pairs(states: &DMatrix<f64>) -> PartialOrder {
    let n = states.nrows();
    let mut rel = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let le = (0..states.ncols()).all(|k| states[(i, k)] <= states[(j, k)]);
            if le {
                let eq = (0..states.ncols()).all(|k| states[(i, k)] == states[(j, k)]);
                rel[i][j] = !eq || i < j;
            }
        }
    }
    // Transitive reduction: the relation is a strict partial order, so an
    // edge is redundant exactly when a two-step path exists.
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if !rel[i][j] {
                continue;
            }
            let redundant = (0..n).any(|k| k != i && k != j && rel[i][k] && rel[k][j]);
            if !redundant {
                edges.push((i, j));
            }
        }
    }
    PartialOrder { n, edges }
}

/// Exact L2 projection onto {g : g_i ≤ g_j for every order edge}, without
/// the probability clamp.
pub fn isotonic_project_raw(values: &[f64], order: &PartialOrder) -> Result<Vec<f64>> {
    if values.len() != order.n {
        return Err(Error::DimensionMismatch(format!(
            "{} values vs order on {} points",
            values.len(),
            order.n
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite value in isotonic input".into()));
    }
    if order.topological_order().is_none() {
        return Err(Error::DegenerateData("order contains a cycle".into()));
    }
    let mut out = values.to_vec();
    let nodes: Vec<usize> = (0..order.n).collect();
    partition_block(values, &order.edges, &nodes, &mut out);
    Ok(out)
}

/// Exact L2 projection, clamped into [0,1] (outputs are probabilities;
/// clamping preserves monotonicity).
pub fn isotonic_project(values: &[f64], order: &PartialOrder) -> Result<Vec<f64>> {
    let mut g = isotonic_project_raw(values, order)?;
    for v in &mut g {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(g)
}

/// Recursive block partitioning. If the max-weight closure of the deviations
/// c_i = v_i − mean is trivial, the whole block takes the mean; otherwise the
/// optimal solution provably separates the closure from its complement, and
/// both halves are solved independently.
fn partition_block(values: &[f64], edges: &[(usize, usize)], nodes: &[usize], out: &mut [f64]) {
    let mean = nodes.iter().map(|&i| values[i]).sum::<f64>() / nodes.len() as f64;
    if nodes.len() == 1 {
        out[nodes[0]] = values[nodes[0]];
        return;
    }
    let local: std::collections::HashMap<usize, usize> =
        nodes.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let local_edges: Vec<(usize, usize)> = edges
        .iter()
        .filter_map(|&(a, b)| Some((*local.get(&a)?, *local.get(&b)?)))
        .collect();
    let c: Vec<f64> = nodes.iter().map(|&i| values[i] - mean).collect();
    let upper = max_weight_closure(&c, &local_edges);
    let gain: f64 = upper.iter().map(|&k| c[k]).sum();
    if upper.is_empty() || upper.len() == nodes.len() || gain <= 1e-12 {
        for &i in nodes {
            out[i] = mean;
        }
        return;
    }
    let in_upper: Vec<bool> = {
        let mut v = vec![false; nodes.len()];
        for &k in &upper {
            v[k] = true;
        }
        v
    };
    let upper_nodes: Vec<usize> = nodes
        .iter()
        .enumerate()
        .filter(|(k, _)| in_upper[*k])
        .map(|(_, &i)| i)
        .collect();
    let lower_nodes: Vec<usize> = nodes
        .iter()
        .enumerate()
        .filter(|(k, _)| !in_upper[*k])
        .map(|(_, &i)| i)
        .collect();
    partition_block(values, edges, &lower_nodes, out);
    partition_block(values, edges, &upper_nodes, out);
}

/// Maximum-weight subset U closed under successors (i ∈ U and i→j forces
/// j ∈ U), solved as min-cut. Returns the optimal U (possibly empty).
fn max_weight_closure(weights: &[f64], edges: &[(usize, usize)]) -> Vec<usize> {
    let n = weights.len();
    let (src, sink) = (n, n + 1);
    let mut flow = Dinic::new(n + 2);
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            flow.add_edge(src, i, w);
        } else if w < 0.0 {
            flow.add_edge(i, sink, -w);
        }
    }
    for &(a, b) in edges {
        flow.add_edge(a, b, f64::INFINITY);
    }
    flow.max_flow(src, sink);
    let reach = flow.residual_reachable(src);
    (0..n).filter(|&i| reach[i]).collect()
}

struct DinicEdge {
    to: usize,
    cap: f64,
    rev: usize,
}

struct Dinic {
    graph: Vec<Vec<DinicEdge>>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

const FLOW_EPS: f64 = 1e-12;

impl Dinic {
    fn new(n: usize) -> Self {
        Self { graph: (0..n).map(|_| Vec::new()).collect(), level: vec![0; n], iter: vec![0; n] }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: f64) {
        let back = self.graph[to].len();
        let fwd = self.graph[from].len();
        self.graph[from].push(DinicEdge { to, cap, rev: back });
        self.graph[to].push(DinicEdge { to: from, cap: 0.0, rev: fwd });
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        let mut queue = std::collections::VecDeque::new();
        self.level[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            for e in &self.graph[v] {
                if e.cap > FLOW_EPS && self.level[e.to] < 0 {
                    self.level[e.to] = self.level[v] + 1;
                    queue.push_back(e.to);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, v: usize, t: usize, f: f64) -> f64 {
        if v == t {
            return f;
        }
        while self.iter[v] < self.graph[v].len() {
            let i = self.iter[v];
            let (to, cap) = {
                let e = &self.graph[v][i];
                (e.to, e.cap)
            };
            if cap > FLOW_EPS && self.level[v] < self.level[to] {
                let d = self.dfs(to, t, f.min(cap));
                if d > FLOW_EPS {
                    let rev = self.graph[v][i].rev;
                    self.graph[v][i].cap -= d;
                    self.graph[to][rev].cap += d;
                    return d;
                }
            }
            self.iter[v] += 1;
        }
        0.0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut total = 0.0;
        while self.bfs(s, t) {
            self.iter.iter_mut().for_each(|i| *i = 0);
            loop {
                let f = self.dfs(s, t, f64::INFINITY);
                if f <= FLOW_EPS {
                    break;
                }
                total += f;
            }
        }
        total
    }

    /// Nodes reachable from `s` over residual capacity (the source side of a
    /// minimum cut once max_flow has run).
    fn residual_reachable(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.graph.len()];
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(v) = stack.pop() {
            for e in &self.graph[v] {
                if e.cap > FLOW_EPS && !seen[e.to] {
                    seen[e.to] = true;
                    stack.push(e.to);
                }
            }
        }
        seen
    }
}

/// Classical pool-adjacent-violators for the chain g_0 ≤ g_1 ≤ … ≤ g_{n−1}.
pub fn pav_chain(values: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    if values.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} values vs {} weights",
            values.len(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| **w <= 0.0) {
        return Err(Error::InvalidParameter(format!("nonpositive weight {w}")));
    }
    // blocks of (weight sum, weighted value sum, member count)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((w, w * v, 1));
        while blocks.len() >= 2 {
            let last = blocks[blocks.len() - 1];
            let prev = blocks[blocks.len() - 2];
            if prev.1 / prev.0 > last.1 / last.0 {
                blocks.pop();
                let top = blocks.last_mut().unwrap();
                top.0 += last.0;
                top.1 += last.1;
                top.2 += last.2;
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (w, wy, count) in blocks {
        let v = wy / w;
        out.extend(std::iter::repeat(v).take(count));
    }
    Ok(out)
}
