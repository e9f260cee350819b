//! Exact discrete optimal transport by the primal network simplex method.

use serde::{Deserialize, Serialize};

use super::measure::EmpiricalMeasure;
use super::rho_beta_alpha_flat;
use crate::error::{Error, Result};
use crate::moduli::DiniModulus;

pub const DEFAULT_SOLVER_CAP: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostSpec {
    /// `|x - y|^k` on the full state, reported as the `k`-th root.
    Wk { k: f64 },
    /// `ρ_{β,α}`, order-1 transport.
    RhoBetaAlpha { beta: f64, modulus: DiniModulus },
}

impl CostSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            CostSpec::Wk { k } if !(*k >= 1.0 && k.is_finite()) => {
                Err(Error::Domain(format!("transport order k = {k} must be >= 1")))
            }
            CostSpec::RhoBetaAlpha { beta, .. } if !(*beta > 0.0 && *beta <= 1.0) => {
                Err(Error::Domain(format!("beta = {beta} outside (0, 1]")))
            }
            _ => Ok(()),
        }
    }

    pub fn cost(&self, m: usize, x: &[f64], y: &[f64]) -> f64 {
        match self {
            CostSpec::Wk { k } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                if *k == 2.0 {
                    d2
                } else {
                    d2.sqrt().powf(*k)
                }
            }
            CostSpec::RhoBetaAlpha { beta, modulus } => rho_beta_alpha_flat(m, x, y, *beta, modulus),
        }
    }

    /// Maps the optimal expected cost to the reported distance.
    pub fn finish(&self, optimal_cost: f64) -> f64 {
        match self {
            CostSpec::Wk { k } => optimal_cost.max(0.0).powf(k.recip()),
            CostSpec::RhoBetaAlpha { .. } => optimal_cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportPlan {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows × cols` masses.
    pub mass: Vec<f64>,
}

impl TransportPlan {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mass[i * self.cols + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.mass.chunks_exact(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for row in self.mass.chunks_exact(self.cols) {
            for (acc, v) in s.iter_mut().zip(row) {
                *acc += v;
            }
        }
        s
    }

    /// Largest marginal violation against `(a, b)`.
    pub fn marginal_error(&self, a: &[f64], b: &[f64]) -> f64 {
        let r = self
            .row_sums()
            .iter()
            .zip(a)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let c = self
            .col_sums()
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        r.max(c)
    }
}

/// Kantorovich potentials with `u_i + v_j <= c_ij`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualCertificate {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub dual_value: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportSolution {
    pub value: f64,
    pub optimal_cost: f64,
    pub plan: TransportPlan,
    pub dual: DualCertificate,
    pub pivots: usize,
}

pub fn wasserstein(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, cost: &CostSpec) -> Result<TransportSolution> {
    wasserstein_with_cap(mu, nu, cost, DEFAULT_SOLVER_CAP)
}

pub fn wasserstein_with_cap(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    cost: &CostSpec,
    cap: usize,
) -> Result<TransportSolution> {
    mu.check_same_space(nu)?;
    cost.validate()?;
    let atoms = mu.len() + nu.len();
    if atoms > cap {
        return Err(Error::SizeCap { atoms, cap });
    }
    let m = mu.m();
    let (n1, n2) = (mu.len(), nu.len());
    let mut c = Vec::with_capacity(n1 * n2);
    for i in 0..n1 {
        let x = mu.atom(i);
        for j in 0..n2 {
            c.push(cost.cost(m, x, nu.atom(j)));
        }
    }
    let sol = solve(mu.weights(), nu.weights(), &c)?;
    Ok(TransportSolution {
        value: cost.finish(sol.optimal_cost),
        optimal_cost: sol.optimal_cost,
        plan: sol.plan,
        dual: sol.dual,
        pivots: sol.pivots,
    })
}

/// Distance only.
pub fn wasserstein_value(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, cost: &CostSpec) -> Result<f64> {
    if mu == nu {
        return Ok(0.0);
    }
    Ok(wasserstein(mu, nu, cost)?.value)
}

/// Minimum over permutation couplings of two uniform measures with `n <= 8` atoms.
pub fn wasserstein_bruteforce(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, cost: &CostSpec) -> Result<f64> {
    mu.check_same_space(nu)?;
    cost.validate()?;
    let n = mu.len();
    if nu.len() != n {
        return Err(Error::Oracle(format!("atom counts differ ({n} vs {})", nu.len())));
    }
    if n > 8 {
        return Err(Error::Oracle(format!("{n} atoms exceeds the enumeration limit of 8")));
    }
    let uniform = 1.0 / n as f64;
    let is_uniform = |w: &[f64]| w.iter().all(|x| (x - uniform).abs() <= 1e-12);
    if !is_uniform(mu.weights()) || !is_uniform(nu.weights()) {
        return Err(Error::Oracle("weights must be uniform".into()));
    }
    let m = mu.m();
    let c: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| cost.cost(m, mu.atom(i), nu.atom(j)))
        .collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let total: f64 = p.iter().enumerate().map(|(i, &j)| c[i * n + j]).sum();
        best = best.min(total);
    });
    Ok(cost.finish(best * uniform))
}

fn permute(p: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, visit);
        p.swap(k, i);
    }
}

struct RawSolution {
    optimal_cost: f64,
    plan: TransportPlan,
    dual: DualCertificate,
    pivots: usize,
}

/// Network simplex on the bipartite graph `rows -> cols` with an artificial root.
///
/// Node `i < n1` is a supply node, `n1 + j` a demand node, `n1 + n2` the root.
/// Arc `i * n2 + j` is real; arc `n1 * n2 + v` joins node `v` and the root.
struct Simplex<'a> {
    n1: usize,
    n2: usize,
    cost: &'a [f64],
    art_cost: f64,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    tree_arcs: Vec<usize>,
    pi: Vec<f64>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    // true when the predecessor arc points from the node towards its parent
    up: Vec<bool>,
    depth: Vec<usize>,
    adjacency: Vec<Vec<usize>>,
    stack: Vec<usize>,
}

impl<'a> Simplex<'a> {
    fn nodes(&self) -> usize {
        self.n1 + self.n2 + 1
    }

    fn root(&self) -> usize {
        self.n1 + self.n2
    }

    fn real_arcs(&self) -> usize {
        self.n1 * self.n2
    }

    fn ends(&self, e: usize) -> (usize, usize) {
        let real = self.real_arcs();
        if e < real {
            (e / self.n2, self.n1 + e % self.n2)
        } else {
            let v = e - real;
            if v < self.n1 {
                (v, self.root())
            } else {
                (self.root(), v)
            }
        }
    }

    fn arc_cost(&self, e: usize) -> f64 {
        if e < self.real_arcs() {
            self.cost[e]
        } else {
            self.art_cost
        }
    }

    fn reduced(&self, e: usize) -> f64 {
        let (s, t) = self.ends(e);
        self.arc_cost(e) + self.pi[s] - self.pi[t]
    }

    fn rebuild(&mut self) {
        let nodes = self.nodes();
        for a in self.adjacency.iter_mut() {
            a.clear();
        }
        for k in 0..self.tree_arcs.len() {
            let e = self.tree_arcs[k];
            let (s, t) = self.ends(e);
            self.adjacency[s].push(e);
            self.adjacency[t].push(e);
        }
        let root = self.root();
        self.parent[root] = usize::MAX;
        self.pred[root] = usize::MAX;
        self.depth[root] = 0;
        self.pi[root] = 0.0;
        let mut visited = vec![false; nodes];
        visited[root] = true;
        self.stack.clear();
        self.stack.push(root);
        while let Some(w) = self.stack.pop() {
            for k in 0..self.adjacency[w].len() {
                let e = self.adjacency[w][k];
                let (s, t) = self.ends(e);
                let child = if s == w { t } else { s };
                if visited[child] {
                    continue;
                }
                visited[child] = true;
                self.parent[child] = w;
                self.pred[child] = e;
                self.depth[child] = self.depth[w] + 1;
                // reduced cost zero on tree arcs: c + pi[s] - pi[t] = 0
                if s == child {
                    self.up[child] = true;
                    self.pi[child] = self.pi[w] - self.arc_cost(e);
                } else {
                    self.up[child] = false;
                    self.pi[child] = self.pi[w] + self.arc_cost(e);
                }
                self.stack.push(child);
            }
        }
    }

    fn join(&self, mut a: usize, mut b: usize) -> usize {
        while a != b {
            if self.depth[a] >= self.depth[b] {
                a = self.parent[a];
            } else {
                b = self.parent[b];
            }
        }
        a
    }

    /// Enters arc `e = (u, v)` and restores the tree structure.
    fn pivot(&mut self, e: usize) {
        let (u, v) = self.ends(e);
        let join = self.join(u, v);
        // cycle orientation: u -> v along e, v up to join, join down to u
        let mut delta = f64::INFINITY;
        let mut leaving = usize::MAX;
        let mut w = u;
        while w != join {
            // flow on the u side runs parent -> w: arcs oriented upward decrease
            if self.up[w] {
                let f = self.flow[self.pred[w]];
                if f < delta {
                    delta = f;
                    leaving = self.pred[w];
                }
            }
            w = self.parent[w];
        }
        let mut w = v;
        while w != join {
            if !self.up[w] {
                let f = self.flow[self.pred[w]];
                if f <= delta {
                    delta = f;
                    leaving = self.pred[w];
                }
            }
            w = self.parent[w];
        }
        let delta = delta.max(0.0);
        if delta > 0.0 {
            self.flow[e] += delta;
            let mut w = u;
            while w != join {
                let a = self.pred[w];
                if self.up[w] {
                    self.flow[a] -= delta;
                } else {
                    self.flow[a] += delta;
                }
                w = self.parent[w];
            }
            let mut w = v;
            while w != join {
                let a = self.pred[w];
                if self.up[w] {
                    self.flow[a] += delta;
                } else {
                    self.flow[a] -= delta;
                }
                w = self.parent[w];
            }
        }
        self.flow[leaving] = 0.0;
        self.in_tree[leaving] = false;
        self.in_tree[e] = true;
        let pos = self
            .tree_arcs
            .iter()
            .position(|&a| a == leaving)
            .expect("leaving arc is a tree arc");
        self.tree_arcs[pos] = e;
        self.rebuild();
    }

    /// Recomputes tree flows from the supplies by peeling leaves.
    fn settle_flows(&mut self, supply: &[f64]) {
        let nodes = self.nodes();
        let mut order = Vec::with_capacity(nodes);
        order.push(self.root());
        let mut k = 0;
        while k < order.len() {
            let w = order[k];
            for &e in &self.adjacency[w] {
                let (s, t) = self.ends(e);
                let child = if s == w { t } else { s };
                if self.parent[child] == w && self.pred[child] == e {
                    order.push(child);
                }
            }
            k += 1;
        }
        let mut excess = supply.to_vec();
        for &w in order.iter().skip(1).rev() {
            let e = self.pred[w];
            let p = self.parent[w];
            // net outflow needed from w's subtree through e
            let out = excess[w];
            self.flow[e] = if self.up[w] { out } else { -out };
            excess[p] += out;
        }
    }
}

fn solve(a: &[f64], b: &[f64], cost: &[f64]) -> Result<RawSolution> {
    let (n1, n2) = (a.len(), b.len());
    let max_cost = cost.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
    let nodes = n1 + n2 + 1;
    let arcs = n1 * n2 + n1 + n2;
    let mut s = Simplex {
        n1,
        n2,
        cost,
        art_cost: (max_cost + 1.0) * (n1 + n2) as f64,
        flow: vec![0.0; arcs],
        in_tree: vec![false; arcs],
        tree_arcs: Vec::with_capacity(n1 + n2),
        pi: vec![0.0; nodes],
        parent: vec![usize::MAX; nodes],
        pred: vec![usize::MAX; nodes],
        up: vec![false; nodes],
        depth: vec![0; nodes],
        adjacency: vec![Vec::new(); nodes],
        stack: Vec::with_capacity(nodes),
    };
    let real = n1 * n2;
    for (i, &w) in a.iter().enumerate() {
        s.flow[real + i] = w;
        s.in_tree[real + i] = true;
        s.tree_arcs.push(real + i);
    }
    for (j, &w) in b.iter().enumerate() {
        s.flow[real + n1 + j] = w;
        s.in_tree[real + n1 + j] = true;
        s.tree_arcs.push(real + n1 + j);
    }
    s.rebuild();

    let tol = 1e-13 * (max_cost + 1.0);
    let block = ((arcs as f64).sqrt().ceil() as usize).max(10);
    let mut next = 0usize;
    let mut pivots = 0usize;
    let max_pivots = 50 * arcs + 1000;
    loop {
        let mut best = usize::MAX;
        let mut best_rc = -tol;
        let mut scanned = 0;
        let mut in_block = 0;
        while scanned < arcs {
            let e = next;
            next += 1;
            if next == arcs {
                next = 0;
            }
            scanned += 1;
            in_block += 1;
            if !s.in_tree[e] {
                let rc = s.reduced(e);
                if rc < best_rc {
                    best_rc = rc;
                    best = e;
                }
            }
            if in_block == block {
                if best != usize::MAX {
                    break;
                }
                in_block = 0;
            }
        }
        if best == usize::MAX {
            break;
        }
        s.pivot(best);
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::Divergence {
                step: pivots,
                time: f64::NAN,
            });
        }
    }

    let mut supply = vec![0.0; nodes];
    supply[..n1].copy_from_slice(a);
    for (j, &w) in b.iter().enumerate() {
        supply[n1 + j] = -w;
    }
    s.settle_flows(&supply);
    let artificial = s.flow[real..].iter().fold(0.0f64, |acc, f| acc.max(f.abs()));
    if artificial > 1e-9 {
        return Err(Error::InvalidMeasure(format!(
            "transport left {artificial} mass on artificial arcs"
        )));
    }
    let mass: Vec<f64> = s.flow[..real].iter().map(|f| f.max(0.0)).collect();
    let optimal_cost = crate::stats::sum(mass.iter().zip(cost).map(|(f, c)| f * c));

    let u: Vec<f64> = (0..n1).map(|i| -s.pi[i]).collect();
    let v: Vec<f64> = (0..n2)
        .map(|j| (0..n1).map(|i| cost[i * n2 + j] - u[i]).fold(f64::INFINITY, f64::min))
        .collect();
    let dual_value = crate::stats::sum(
        a.iter()
            .zip(&u)
            .map(|(w, x)| w * x)
            .chain(b.iter().zip(&v).map(|(w, x)| w * x)),
    );
    Ok(RawSolution {
        optimal_cost,
        plan: TransportPlan {
            rows: n1,
            cols: n2,
            mass,
        },
        dual: DualCertificate {
            u,
            v,
            dual_value,
            gap: optimal_cost - dual_value,
        },
        pivots,
    })
}
