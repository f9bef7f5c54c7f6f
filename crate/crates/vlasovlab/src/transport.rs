//! Exact optimal transport between weighted marker clouds via the
//! transportation network simplex, and the phase-space Wasserstein
//! distances built on it.
//!
//! The solver keeps a spanning-tree basis over the bipartite
//! source/sink graph, prices arcs in blocks and falls back to Bland's
//! rule when degenerate pivots stall, so it terminates on exactly
//! degenerate (equal-weight) instances too.

use crate::ensemble::PhaseEnsemble;
use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use serde::Serialize;

pub const DEFAULT_PAIR_CAP: usize = 4_000_000;

/// Transport plan between two weighted point sets: `pairs` holds
/// `(source, sink, mass)` with positive mass; marginals match the
/// respective weight vectors.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingPlan {
    pub pairs: Vec<(usize, usize, f64)>,
    /// Total cost of the plan under the cost it was built with.
    pub cost: f64,
}

impl CouplingPlan {
    /// Identity-index coupling for two ensembles with matching weights.
    pub fn identity(weights: &[f64]) -> Self {
        CouplingPlan {
            pairs: weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(i, w)| (i, i, *w))
                .collect(),
            cost: 0.0,
        }
    }

    /// Check the marginal constraints against the two weight vectors.
    pub fn validate(&self, w1: &[f64], w2: &[f64], tol: f64) -> Result<()> {
        let mut m1 = vec![0.0; w1.len()];
        let mut m2 = vec![0.0; w2.len()];
        for &(i, j, p) in &self.pairs {
            if p < 0.0 {
                return Err(Error::Invalid("negative plan entry".into()));
            }
            m1[i] += p;
            m2[j] += p;
        }
        let scale = w1.iter().sum::<f64>().max(1e-300);
        for (a, b) in m1.iter().zip(w1) {
            if (a - b).abs() > tol * scale {
                return Err(Error::Invalid(format!(
                    "source marginal mismatch: {a} vs {b}"
                )));
            }
        }
        for (a, b) in m2.iter().zip(w2) {
            if (a - b).abs() > tol * scale {
                return Err(Error::Invalid(format!("sink marginal mismatch: {a} vs {b}")));
            }
        }
        Ok(())
    }

    /// Evaluate the plan under a (possibly different) pair cost.
    pub fn evaluate<C: Fn(usize, usize) -> f64>(&self, cost: &C) -> f64 {
        pairwise_sum(self.pairs.len(), &|k| {
            let (i, j, p) = self.pairs[k];
            p * cost(i, j)
        })
    }
}

/// Ground cost between phase-space markers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportCost {
    /// `|x - y|^p + |v - w|^p`: the kinetic product cost (the usual
    /// phase-space `W_p` with unit position weight).
    PhaseSplit,
    /// `|x - y|^p` on the spatial marginals.
    Spatial,
}

pub fn pair_cost<'a>(
    e1: &'a PhaseEnsemble,
    e2: &'a PhaseEnsemble,
    p: f64,
    kind: TransportCost,
) -> impl Fn(usize, usize) -> f64 + 'a {
    move |i: usize, j: usize| {
        let dx2: f64 = e1
            .position(i)
            .iter()
            .zip(e2.position(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        match kind {
            TransportCost::Spatial => pow_p(dx2, p),
            TransportCost::PhaseSplit => {
                let dv2: f64 = e1
                    .velocity(i)
                    .iter()
                    .zip(e2.velocity(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                pow_p(dx2, p) + pow_p(dv2, p)
            }
        }
    }
}

#[inline]
fn pow_p(s2: f64, p: f64) -> f64 {
    if p == 2.0 {
        s2
    } else if p == 1.0 {
        s2.sqrt()
    } else {
        s2.powf(0.5 * p)
    }
}

/// Result of an exact transport solve: `wpp = W_p^p` and the optimal plan.
#[derive(Debug, Clone)]
pub struct OtSolution {
    pub wpp: f64,
    pub plan: CouplingPlan,
}

/// Exact `W_p` between two ensembles, with the kinetic product cost by
/// default. Returns `W_p^p` and the optimal plan.
pub fn wasserstein_p(
    e1: &PhaseEnsemble,
    e2: &PhaseEnsemble,
    p: f64,
    kind: TransportCost,
    pair_cap: usize,
) -> Result<OtSolution> {
    if e1.dim() != e2.dim() {
        return Err(Error::Invalid("dimension mismatch between ensembles".into()));
    }
    let m1 = e1.mass();
    let m2 = e2.mass();
    if (m1 - m2).abs() > 1e-10 * m1.max(m2) {
        return Err(Error::MassMismatch(m1, m2));
    }
    let pairs = e1.len() * e2.len();
    if pairs > pair_cap {
        return Err(Error::TransportTooLarge(pairs, pair_cap));
    }
    let cost = pair_cost(e1, e2, p, kind);
    let plan = solve_transport(e1.weights(), e2.weights(), &cost)?;
    Ok(OtSolution {
        wpp: plan.cost,
        plan,
    })
}

// ---------------------------------------------------------------------------
// Transportation simplex.
// ---------------------------------------------------------------------------

struct Basis {
    m: usize,
    n: usize,
    /// basic arcs as (source, sink, flow)
    arcs: Vec<(usize, usize, f64)>,
    /// adjacency: node -> (neighbor node, arc id); sinks are m + j
    adj: Vec<Vec<(usize, usize)>>,
    parent: Vec<usize>,
    parent_arc: Vec<usize>,
    depth: Vec<usize>,
    pot: Vec<f64>,
}

const NO_NODE: usize = usize::MAX;

impl Basis {
    fn node_count(&self) -> usize {
        self.m + self.n
    }

    fn rebuild_tree<C: Fn(usize, usize) -> f64>(&mut self, cost: &C) {
        let nodes = self.node_count();
        self.adj.iter_mut().for_each(|a| a.clear());
        if self.adj.len() != nodes {
            self.adj = vec![Vec::new(); nodes];
        }
        for (id, &(i, j, _)) in self.arcs.iter().enumerate() {
            self.adj[i].push((self.m + j, id));
            self.adj[self.m + j].push((i, id));
        }
        self.parent = vec![NO_NODE; nodes];
        self.parent_arc = vec![usize::MAX; nodes];
        self.depth = vec![0; nodes];
        self.pot = vec![0.0; nodes];
        let mut stack = vec![0usize];
        let mut seen = vec![false; nodes];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(w, id) in &self.adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    self.parent[w] = u;
                    self.parent_arc[w] = id;
                    self.depth[w] = self.depth[u] + 1;
                    let (i, j, _) = self.arcs[id];
                    let c = cost(i, j);
                    self.pot[w] = c - self.pot[u];
                    stack.push(w);
                }
            }
        }
        debug_assert!(seen.iter().all(|s| *s), "basis is not a spanning tree");
    }

    /// Signed cycle created by the entering arc (i0, j0): arcs along the
    /// tree path from sink j0 to source i0, with -1 for arcs whose flow
    /// decreases when theta is pushed around the cycle.
    fn cycle(&self, i0: usize, j0: usize) -> Vec<(usize, f64)> {
        let mut a = self.m + j0;
        let mut b = i0;
        let mut from_sink: Vec<(usize, f64)> = Vec::new();
        let mut from_source: Vec<(usize, f64)> = Vec::new();
        // climbing from the sink: first hop goes sink -> source: flow -theta,
        // alternating after that; climbing from the source side the first
        // hop goes source -> sink: also -theta seen from the directed cycle?
        // Orientation bookkeeping: pushing theta enters at i0 -> j0. Along
        // the path j0 ... i0 every arc traversed sink->source carries
        // -theta and every arc source->sink +theta.
        while self.depth[a] > self.depth[b] {
            let sign = if a >= self.m { -1.0 } else { 1.0 };
            from_sink.push((self.parent_arc[a], sign));
            a = self.parent[a];
        }
        while self.depth[b] > self.depth[a] {
            // traversing upward from the source side walks the cycle in the
            // opposite direction, so signs flip
            let sign = if b >= self.m { 1.0 } else { -1.0 };
            from_source.push((self.parent_arc[b], sign));
            b = self.parent[b];
        }
        while a != b {
            let sign_a = if a >= self.m { -1.0 } else { 1.0 };
            from_sink.push((self.parent_arc[a], sign_a));
            a = self.parent[a];
            let sign_b = if b >= self.m { 1.0 } else { -1.0 };
            from_source.push((self.parent_arc[b], sign_b));
            b = self.parent[b];
        }
        from_sink.extend(from_source);
        from_sink
    }
}

/// Solve the balanced transportation problem min sum x_ij c(i,j) subject
/// to the supply/demand marginals. Supplies and demands must balance to
/// round-off (the caller rescales); zero weights are allowed.
pub fn solve_transport<C: Fn(usize, usize) -> f64>(
    supply: &[f64],
    demand: &[f64],
    cost: &C,
) -> Result<CouplingPlan> {
    let m = supply.len();
    let n = demand.len();
    if m == 0 || n == 0 {
        return Err(Error::Invalid("empty transport problem".into()));
    }
    let total_a: f64 = supply.iter().sum();
    let total_b: f64 = demand.iter().sum();
    if (total_a - total_b).abs() > 1e-10 * total_a.max(total_b) {
        return Err(Error::MassMismatch(total_a, total_b));
    }
    // rescale demands to balance exactly
    let scale = if total_b > 0.0 { total_a / total_b } else { 1.0 };
    let mut demand: Vec<f64> = demand.iter().map(|d| d * scale).collect();
    let db: f64 = total_a - demand.iter().sum::<f64>();
    if let Some(last) = demand.last_mut() {
        *last = (*last + db).max(0.0);
    }

    // Northwest-corner initial basic feasible solution: m + n - 1 arcs.
    let mut arcs = Vec::with_capacity(m + n - 1);
    {
        let mut rem_a = supply.to_vec();
        let mut rem_b = demand.clone();
        let (mut i, mut j) = (0usize, 0usize);
        loop {
            let q = rem_a[i].min(rem_b[j]);
            arcs.push((i, j, q));
            rem_a[i] -= q;
            rem_b[j] -= q;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if rem_a[i] <= rem_b[j] && i < m - 1 {
                i += 1;
            } else if j < n - 1 {
                j += 1;
            } else {
                i += 1;
            }
        }
    }
    debug_assert_eq!(arcs.len(), m + n - 1);

    let mut basis = Basis {
        m,
        n,
        arcs,
        adj: vec![Vec::new(); m + n],
        parent: Vec::new(),
        parent_arc: Vec::new(),
        depth: Vec::new(),
        pot: Vec::new(),
    };
    basis.rebuild_tree(cost);

    // pricing tolerance relative to the cost magnitude seen so far
    let mut cost_scale = 1e-300f64;
    for &(i, j, _) in &basis.arcs {
        cost_scale = cost_scale.max(cost(i, j).abs());
    }
    let arcs_total = m * n;
    let block = (arcs_total as f64).sqrt() as usize + 16;
    let mut cursor = 0usize;
    let mut stall = 0usize;
    let max_pivots = 80 * (m + n).max(64) * 32;
    let mut optimal = false;

    for _pivot in 0..max_pivots {
        let tol = 1e-13 * cost_scale;
        let bland = stall > 2 * (m + n);
        // entering arc: best in block (or first negative under Bland)
        let mut entering: Option<(usize, usize, f64)> = None;
        let mut scanned = 0usize;
        while scanned < arcs_total {
            let take = block.min(arcs_total - scanned).max(1);
            let mut best: Option<(usize, usize, f64)> = None;
            for k in 0..take {
                let flat = (cursor + k) % arcs_total;
                let i = flat / n;
                let j = flat % n;
                let c = cost(i, j);
                cost_scale = cost_scale.max(c.abs());
                let r = c - basis.pot[i] - basis.pot[m + j];
                if r < -tol {
                    if bland {
                        best = Some((i, j, r));
                        break;
                    }
                    match best {
                        Some((_, _, rb)) if rb <= r => {}
                        _ => best = Some((i, j, r)),
                    }
                }
            }
            scanned += take;
            cursor = (cursor + take) % arcs_total;
            if best.is_some() {
                entering = best;
                break;
            }
        }
        let Some((i0, j0, _)) = entering else {
            optimal = true;
            break;
        };

        let cycle = basis.cycle(i0, j0);
        let mut theta = f64::INFINITY;
        let mut leaving: Option<usize> = None;
        for &(arc_id, sign) in &cycle {
            if sign < 0.0 {
                let f = basis.arcs[arc_id].2;
                if f < theta - 1e-300 || (f <= theta && leaving.is_none_or(|l| arc_id < l)) {
                    if f < theta {
                        theta = f;
                        leaving = Some(arc_id);
                    } else if Some(arc_id) < leaving {
                        leaving = Some(arc_id);
                    }
                }
            }
        }
        let theta = theta.max(0.0);
        let leaving = leaving.ok_or_else(|| {
            Error::Invalid("transport cycle without a blocking arc".into())
        })?;
        for &(arc_id, sign) in &cycle {
            basis.arcs[arc_id].2 = (basis.arcs[arc_id].2 + sign * theta).max(0.0);
        }
        basis.arcs[leaving] = (i0, j0, theta);
        basis.rebuild_tree(cost);
        if theta > 0.0 {
            stall = 0;
        } else {
            stall += 1;
        }
    }

    if !optimal {
        return Err(Error::Invalid(
            "transport simplex exceeded its pivot budget without reaching optimality".into(),
        ));
    }
    let pairs: Vec<(usize, usize, f64)> = basis
        .arcs
        .iter()
        .filter(|(_, _, f)| *f > 0.0)
        .map(|&(i, j, f)| (i, j, f))
        .collect();
    let total_cost = pairwise_sum(pairs.len(), &|k| {
        let (i, j, f) = pairs[k];
        f * cost(i, j)
    });
    Ok(CouplingPlan {
        pairs,
        cost: total_cost,
    })
}
