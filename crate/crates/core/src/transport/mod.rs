//! Localized Kantorovich-dual distances between finite measures.
//!
//! `dist_B(mu, nu) = sup { sum f (mu - nu) : |f_i - f_j| <= d_ij, |f_i| <= cap_i }`
//! is solved exactly as a min-cost flow with a network simplex.

mod simplex;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::metric::{AmbientNorm, MetricSpaceSample};
use simplex::NetworkSimplex;

/// Cost oracle over the union support of a problem.
#[derive(Debug, Clone)]
pub enum Cost {
    /// Row-major symmetric matrix.
    Matrix { len: usize, data: Vec<f64> },
    /// Points in `R^dim` under an ambient norm.
    Coords {
        dim: usize,
        coords: Vec<f64>,
        norm: AmbientNorm,
    },
}

impl Cost {
    pub fn len(&self) -> usize {
        match self {
            Cost::Matrix { len, .. } => *len,
            Cost::Coords { dim, coords, .. } => coords.len() / dim,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Cost::Matrix { len, data } => data[i * len + j],
            Cost::Coords { dim, coords, norm } => {
                norm.dist(&coords[i * dim..(i + 1) * dim], &coords[j * dim..(j + 1) * dim])
            }
        }
    }

    /// Restriction of a space's metric to the listed points.
    pub fn from_space(space: &MetricSpaceSample, idx: &[usize]) -> Cost {
        if let (true, Some(dim), Some(norm)) = (space.has_coords(), space.ambient_dim(), space.ambient_norm()) {
            let mut coords = Vec::with_capacity(idx.len() * dim);
            for &i in idx {
                coords.extend_from_slice(space.coord(i).expect("coordinates present"));
            }
            return Cost::Coords { dim, coords, norm };
        }
        let len = idx.len();
        let mut data = vec![0.0; len * len];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate().skip(a + 1) {
                let d = space.dist(i, j);
                data[a * len + b] = d;
                data[b * len + a] = d;
            }
        }
        Cost::Matrix { len, data }
    }

    fn subset(&self, idx: &[usize]) -> Cost {
        match self {
            Cost::Matrix { len, data } => {
                let k = idx.len();
                let mut out = vec![0.0; k * k];
                for (a, &i) in idx.iter().enumerate() {
                    for (b, &j) in idx.iter().enumerate() {
                        out[a * k + b] = data[i * len + j];
                    }
                }
                Cost::Matrix { len: k, data: out }
            }
            Cost::Coords { dim, coords, norm } => {
                let mut c = Vec::with_capacity(idx.len() * dim);
                for &i in idx {
                    c.extend_from_slice(&coords[i * dim..(i + 1) * dim]);
                }
                Cost::Coords {
                    dim: *dim,
                    coords: c,
                    norm: *norm,
                }
            }
        }
    }
}

/// Two discrete measures on a common support with per-point caps on `|f|`.
#[derive(Debug, Clone)]
pub struct TransportProblem {
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub caps: Vec<f64>,
    pub cost: Cost,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualSolution {
    pub potentials: Vec<f64>,
    pub value: f64,
    /// Cost of the optimal flow; equals `value` up to rounding.
    pub primal_value: f64,
    /// `max(f_i - f_j - d_ij)` over all pairs, including pairs with a zero-cap point.
    pub lipschitz_residual: f64,
    /// `max(|f_i| - cap_i)`.
    pub cap_residual: f64,
    pub pivots: usize,
    pub arcs: usize,
}

/// How the pairwise constraints are priced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveMode {
    /// Every ordered pair is a candidate arc.
    Dense,
    /// k-nearest-neighbour arcs, then all violated pairs added until none remain.
    Sparse { k: usize },
    /// Dense up to `threshold` active nodes, sparse above.
    Auto { threshold: usize, k: usize },
}

impl Default for SolveMode {
    fn default() -> Self {
        SolveMode::Auto { threshold: 300, k: 8 }
    }
}

const MAX_PIVOTS: usize = 50_000_000;

impl TransportProblem {
    pub fn new(mu: Vec<f64>, nu: Vec<f64>, caps: Vec<f64>, cost: Cost) -> Result<Self> {
        let m = cost.len();
        if mu.len() != m || nu.len() != m || caps.len() != m {
            return domain("mu, nu, caps and the cost oracle must have the same length");
        }
        for v in mu.iter().chain(&nu) {
            if !(v.is_finite() && *v >= 0.0) {
                return domain("masses must be finite and nonnegative");
            }
        }
        for c in &caps {
            if !(*c >= 0.0) {
                return domain("caps must be nonnegative");
            }
        }
        Ok(Self { mu, nu, caps, cost })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn solve(&self) -> Result<DualSolution> {
        self.solve_with(SolveMode::default())
    }

    pub fn solve_with(&self, mode: SolveMode) -> Result<DualSolution> {
        let m = self.len();
        // Zero-cap nodes have f = 0 and merge into the ground.
        let active: Vec<usize> = (0..m).filter(|&i| self.caps[i] > 0.0).collect();
        let zero: Vec<usize> = (0..m).filter(|&i| self.caps[i] <= 0.0).collect();
        let mut potentials = vec![0.0; m];
        if active.is_empty() {
            return Ok(self.finish(potentials, 0.0, 0, 0, 0.0));
        }
        let supply: Vec<f64> = active.iter().map(|&i| self.mu[i] - self.nu[i]).collect();
        let ground: Vec<f64> = active
            .iter()
            .map(|&i| {
                zero.iter()
                    .map(|&k| self.cost.get(i, k))
                    .fold(self.caps[i], f64::min)
            })
            .collect();
        let sub = self.cost.subset(&active);
        let cost_fn = |a: usize, b: usize| sub.get(a, b);
        let scale = ground.iter().cloned().fold(0.0, f64::max);
        let dense = match mode {
            SolveMode::Dense => true,
            SolveMode::Sparse { .. } => false,
            SolveMode::Auto { threshold, .. } => active.len() <= threshold,
        };
        let k = match mode {
            SolveMode::Sparse { k } | SolveMode::Auto { k, .. } => k.max(1),
            SolveMode::Dense => 0,
        };
        let (pots, primal, pivots, arcs, lip_active) = if dense {
            let mut ns = NetworkSimplex::new(supply, ground, &cost_fn, None, scale);
            ns.run(MAX_PIVOTS)?;
            let (_, lip) = violated_pairs(&sub, ns.potentials(), f64::INFINITY);
            (ns.potentials().to_vec(), ns.primal_cost(), ns.pivots, ns.pair_count(), lip)
        } else {
            let pairs = knn_pairs(&sub, k);
            let mut ns = NetworkSimplex::new(supply, ground, &cost_fn, Some(pairs), scale);
            let tol = 1e-12 * scale;
            let lip = loop {
                ns.run(MAX_PIVOTS)?;
                let (viol, lip) = violated_pairs(&sub, ns.potentials(), tol);
                if viol.is_empty() {
                    break lip;
                }
                ns.add_pairs(&viol);
            };
            (ns.potentials().to_vec(), ns.primal_cost(), ns.pivots, ns.pair_count(), lip)
        };
        for (a, &i) in active.iter().enumerate() {
            potentials[i] = pots[a];
        }
        // constraints against zero-cap nodes were folded into the ground costs
        let mut lip = lip_active;
        for &i in &active {
            for &k in &zero {
                lip = lip.max(potentials[i].abs() - self.cost.get(i, k));
            }
        }
        Ok(self.finish(potentials, primal, pivots, arcs, lip))
    }

    fn finish(&self, potentials: Vec<f64>, primal: f64, pivots: usize, arcs: usize, lip: f64) -> DualSolution {
        let m = self.len();
        let value: f64 = (0..m).map(|i| (self.mu[i] - self.nu[i]) * potentials[i]).sum();
        let capr = (0..m)
            .map(|i| potentials[i].abs() - self.caps[i])
            .fold(0.0, f64::max);
        DualSolution {
            potentials,
            value,
            primal_value: primal,
            lipschitz_residual: lip.max(0.0),
            cap_residual: capr.max(0.0),
            pivots,
            arcs,
        }
    }

    /// Solves and checks feasibility to `1e-9` (relative to the largest cap).
    pub fn solve_checked(&self, mode: SolveMode) -> Result<DualSolution> {
        let sol = self.solve_with(mode)?;
        let scale = self.caps.iter().cloned().fold(1.0, f64::max);
        if sol.lipschitz_residual > 1e-9 * scale || sol.cap_residual > 1e-9 * scale {
            return Err(Error::Numeric(format!(
                "dual residuals too large: lipschitz {:.3e}, cap {:.3e}",
                sol.lipschitz_residual, sol.cap_residual
            )));
        }
        Ok(sol)
    }

    /// Problem dump for reproducing solver cases.
    pub fn to_dump(&self) -> ProblemDump {
        let m = self.len();
        let support = (0..m)
            .map(|i| DumpNode {
                id: i,
                mass_mu: self.mu[i],
                mass_nu: self.nu[i],
                cap: self.caps[i],
            })
            .collect();
        let mut edges = Vec::with_capacity(m * m.saturating_sub(1) / 2);
        for i in 0..m {
            for j in (i + 1)..m {
                edges.push(DumpEdge {
                    i,
                    j,
                    d: self.cost.get(i, j),
                });
            }
        }
        ProblemDump { support, edges }
    }

    pub fn from_dump(dump: &ProblemDump) -> Result<Self> {
        let m = dump.support.len();
        let mut pos = std::collections::HashMap::new();
        for (k, node) in dump.support.iter().enumerate() {
            if pos.insert(node.id, k).is_some() {
                return Err(Error::Format(format!("duplicate support id {}", node.id)));
            }
        }
        let mut data = vec![f64::NAN; m * m];
        for k in 0..m {
            data[k * m + k] = 0.0;
        }
        for e in &dump.edges {
            let (Some(&a), Some(&b)) = (pos.get(&e.i), pos.get(&e.j)) else {
                return Err(Error::Format(format!("edge ({}, {}) names unknown ids", e.i, e.j)));
            };
            data[a * m + b] = e.d;
            data[b * m + a] = e.d;
        }
        if data.iter().any(|d| d.is_nan()) {
            return Err(Error::Format("dump does not list every pair".into()));
        }
        Self::new(
            dump.support.iter().map(|s| s.mass_mu).collect(),
            dump.support.iter().map(|s| s.mass_nu).collect(),
            dump.support.iter().map(|s| s.cap).collect(),
            Cost::Matrix { len: m, data },
        )
    }

    pub fn write_dump(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_dump())?)?;
        Ok(())
    }

    pub fn read_dump(path: &Path) -> Result<Self> {
        let dump: ProblemDump = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_dump(&dump)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemDump {
    pub support: Vec<DumpNode>,
    pub edges: Vec<DumpEdge>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DumpNode {
    pub id: usize,
    pub mass_mu: f64,
    pub mass_nu: f64,
    pub cap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DumpEdge {
    pub i: usize,
    pub j: usize,
    pub d: f64,
}

/// Both directions of each point's `k` nearest neighbours.
fn knn_pairs(cost: &Cost, k: usize) -> Vec<(u32, u32)> {
    let m = cost.len();
    let mut out = Vec::with_capacity(2 * m * k);
    let mut row: Vec<(f64, usize)> = Vec::with_capacity(m);
    for i in 0..m {
        row.clear();
        row.extend((0..m).filter(|&j| j != i).map(|j| (cost.get(i, j), j)));
        let kk = k.min(row.len());
        if kk == 0 {
            continue;
        }
        if kk < row.len() {
            row.select_nth_unstable_by(kk - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        for &(_, j) in &row[..kk] {
            out.push((i as u32, j as u32));
            out.push((j as u32, i as u32));
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Pairs `i -> j` with `f_i - f_j > d_ij + tol` (at most the worst few per
/// node) and the largest violation over all pairs.
fn violated_pairs(cost: &Cost, f: &[f64], tol: f64) -> (Vec<(u32, u32)>, f64) {
    let m = f.len();
    let per_node = 4;
    let mut out = Vec::new();
    let mut worst: f64 = 0.0;
    let mut cand: Vec<(f64, usize)> = Vec::new();
    for i in 0..m {
        cand.clear();
        for j in 0..m {
            if j != i {
                let v = f[i] - f[j] - cost.get(i, j);
                worst = worst.max(v);
                if v > tol {
                    cand.push((v, j));
                }
            }
        }
        if cand.len() > per_node {
            cand.select_nth_unstable_by(per_node - 1, |a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            cand.truncate(per_node);
        }
        out.extend(cand.iter().map(|&(_, j)| (i as u32, j as u32)));
    }
    (out, worst)
}

/// Cap of a point at distance `dz` from the center of `B(x, r)`.
pub fn ball_cap(r: f64, dz: f64) -> f64 {
    (r - dz).max(0.0)
}

/// `dist_B(mu, nu)` for `B = B(center, r)`, with `mu`, `nu` indexed by the
/// points of `space`. Points outside `B` have cap 0 and are dropped.
pub fn dist_ball(space: &MetricSpaceSample, mu: &[f64], nu: &[f64], center: usize, r: f64) -> Result<f64> {
    space.check_index(center)?;
    if mu.len() != space.len() || nu.len() != space.len() {
        return domain("measures must have one entry per point");
    }
    if !(r >= 0.0) {
        return domain("radius must be nonnegative");
    }
    let idx: Vec<usize> = (0..space.len())
        .filter(|&i| (mu[i] > 0.0 || nu[i] > 0.0) && space.dist(i, center) < r)
        .collect();
    let caps = idx.iter().map(|&i| ball_cap(r, space.dist(i, center))).collect();
    let prob = TransportProblem::new(
        idx.iter().map(|&i| mu[i]).collect(),
        idx.iter().map(|&i| nu[i]).collect(),
        caps,
        Cost::from_space(space, &idx),
    )?;
    Ok(prob.solve_checked(SolveMode::default())?.value)
}

fn support_diameter(cost: &Cost, m: &[f64]) -> f64 {
    let s: Vec<usize> = (0..m.len()).filter(|&i| m[i] > 0.0).collect();
    let mut d: f64 = 0.0;
    for (a, &i) in s.iter().enumerate() {
        for &j in &s[a + 1..] {
            d = d.max(cost.get(i, j));
        }
    }
    d
}

/// Capped distance with `|f| <= D`, `D = max(diam spt mu, diam spt nu)`.
pub fn tilde_dist(mu: &[f64], nu: &[f64], cost: &Cost) -> Result<f64> {
    let bound = support_diameter(cost, mu).max(support_diameter(cost, nu));
    tilde_dist_bounded(mu, nu, cost, bound)
}

/// Capped distance with an explicit uniform bound `|f| <= bound`.
pub fn tilde_dist_bounded(mu: &[f64], nu: &[f64], cost: &Cost, bound: f64) -> Result<f64> {
    let m = cost.len();
    let prob = TransportProblem::new(mu.to_vec(), nu.to_vec(), vec![bound; m], cost.clone())?;
    Ok(prob.solve_checked(SolveMode::default())?.value)
}

/// Primal optimal transport cost by exhaustive enumeration of basic plans
/// (spanning trees of the source/sink bipartite graph). At most 10 points.
pub fn w1_bruteforce_oracle(mu: &[f64], nu: &[f64], cost: &Cost) -> Result<f64> {
    let m = cost.len();
    if mu.len() != m || nu.len() != m {
        return domain("measures must match the cost oracle");
    }
    if m > 10 {
        return domain("brute-force oracle is limited to 10 points");
    }
    let tm: f64 = mu.iter().sum();
    let tn: f64 = nu.iter().sum();
    if (tm - tn).abs() > 1e-12 * tm.max(tn).max(1.0) {
        return domain("brute-force oracle needs equal total masses");
    }
    let net: Vec<f64> = (0..m).map(|i| mu[i] - nu[i]).collect();
    let src: Vec<usize> = (0..m).filter(|&i| net[i] > 0.0).collect();
    let snk: Vec<usize> = (0..m).filter(|&i| net[i] < 0.0).collect();
    if src.is_empty() || snk.is_empty() {
        return Ok(0.0);
    }
    let edges: Vec<(usize, usize)> = src
        .iter()
        .enumerate()
        .flat_map(|(a, _)| (0..snk.len()).map(move |b| (a, b)))
        .collect();
    let nodes = src.len() + snk.len();
    let need = nodes - 1;
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(need);
    let ctx = Enum {
        src: &src,
        snk: &snk,
        net: &net,
        edges: &edges,
        cost,
        need,
    };
    let parent: Vec<usize> = (0..nodes).collect();
    ctx.recurse(0, &mut chosen, parent, &mut best);
    Ok(best)
}

struct Enum<'a> {
    src: &'a [usize],
    snk: &'a [usize],
    net: &'a [f64],
    edges: &'a [(usize, usize)],
    cost: &'a Cost,
    need: usize,
}

fn find(p: &mut [usize], mut x: usize) -> usize {
    while p[x] != x {
        p[x] = p[p[x]];
        x = p[x];
    }
    x
}

impl Enum<'_> {
    fn recurse(&self, start: usize, chosen: &mut Vec<usize>, parent: Vec<usize>, best: &mut f64) {
        if chosen.len() == self.need {
            if let Some(c) = self.tree_cost(chosen) {
                *best = best.min(c);
            }
            return;
        }
        let remaining = self.edges.len() - start;
        if remaining < self.need - chosen.len() {
            return;
        }
        for e in start..self.edges.len() {
            let (a, b) = self.edges[e];
            let mut p = parent.clone();
            let (ra, rb) = (find(&mut p, a), find(&mut p, self.src.len() + b));
            if ra == rb {
                continue;
            }
            p[ra] = rb;
            chosen.push(e);
            self.recurse(e + 1, chosen, p, best);
            chosen.pop();
        }
    }

    /// Flows on a spanning tree are forced; returns the cost if all are nonnegative.
    fn tree_cost(&self, chosen: &[usize]) -> Option<f64> {
        let ns = self.src.len();
        let nodes = ns + self.snk.len();
        let mut rem: Vec<f64> = self
            .src
            .iter()
            .chain(self.snk)
            .map(|&i| self.net[i].abs())
            .collect();
        let mut deg = vec![0usize; nodes];
        for &e in chosen {
            let (a, b) = self.edges[e];
            deg[a] += 1;
            deg[ns + b] += 1;
        }
        let mut alive = vec![true; chosen.len()];
        let mut total = 0.0;
        let scale: f64 = rem.iter().cloned().fold(0.0, f64::max);
        for _ in 0..chosen.len() {
            // find an alive edge with a leaf endpoint
            let mut picked = None;
            for (k, &e) in chosen.iter().enumerate() {
                if !alive[k] {
                    continue;
                }
                let (a, b) = self.edges[e];
                if deg[a] == 1 {
                    picked = Some((k, a, ns + b));
                    break;
                }
                if deg[ns + b] == 1 {
                    picked = Some((k, ns + b, a));
                    break;
                }
            }
            let (k, leaf, other) = picked?;
            let f = rem[leaf];
            if f < -1e-12 * scale {
                return None;
            }
            rem[other] -= f;
            rem[leaf] = 0.0;
            alive[k] = false;
            deg[leaf] -= 1;
            deg[other] -= 1;
            let (a, b) = self.edges[chosen[k]];
            total += f.max(0.0) * self.cost.get(self.src[a], self.snk[b]);
        }
        if rem.iter().any(|r| r.abs() > 1e-9 * scale.max(1.0)) {
            return None;
        }
        Some(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(xs: &[f64]) -> Cost {
        Cost::Coords {
            dim: 1,
            coords: xs.to_vec(),
            norm: AmbientNorm::L2,
        }
    }

    #[test]
    fn equal_measures_give_zero() {
        let c = line(&[0.0, 1.0, 3.0]);
        let p = TransportProblem::new(vec![1.0, 2.0, 0.5], vec![1.0, 2.0, 0.5], vec![5.0; 3], c).unwrap();
        assert_eq!(p.solve().unwrap().value, 0.0);
    }

    #[test]
    fn single_mass_takes_its_cap() {
        let c = line(&[0.0]);
        let p = TransportProblem::new(vec![1.0], vec![0.0], vec![0.7], c).unwrap();
        assert!((p.solve().unwrap().value - 0.7).abs() < 1e-15);
    }

    #[test]
    fn two_diracs_with_large_caps_give_distance() {
        // vertex enumeration of {|f_a - f_b| <= d, |f_a|,|f_b| <= cap}: the optimum f_a - f_b is d
        let c = line(&[0.0, 1.5]);
        let p = TransportProblem::new(vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0], c).unwrap();
        assert!((p.solve().unwrap().value - 1.5).abs() < 1e-14);
    }

    #[test]
    fn tilde_dist_separated_singletons_uses_support_diameter() {
        // singletons have zero support diameter, so the uniform cap is 0
        let c = line(&[0.0, 3.0]);
        assert_eq!(tilde_dist(&[1.0, 0.0], &[0.0, 1.0], &c).unwrap(), 0.0);
        // two-point supports: D = 1, masses 1 at 0 vs 1 at 3 plus shared mass at 1
        let c = line(&[0.0, 1.0, 3.0, 4.0]);
        let mu = [1.0, 1.0, 0.0, 0.0];
        let nu = [0.0, 0.0, 1.0, 1.0];
        // f in [-1, 1] and 1-Lipschitz: best is f = 1 on spt mu, -1 on spt nu
        assert!((tilde_dist(&mu, &nu, &c).unwrap() - 4.0).abs() < 1e-12);
        // with a bound above the transport distance the cap stops binding
        assert!((tilde_dist_bounded(&mu, &nu, &c, 10.0).unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_mass_difference_pays_the_bound() {
        let c = line(&[0.0, 1.0, 2.0]);
        let mu = [1.0, 1.0, 0.5];
        let nu = [1.0, 1.0, 0.0];
        // D = 2; f = 2 on the unmatched point
        assert!((tilde_dist(&mu, &nu, &c).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bruteforce_basics() {
        let c = line(&[0.0, 2.5]);
        assert_eq!(w1_bruteforce_oracle(&[1.0, 1.0], &[1.0, 1.0], &c).unwrap(), 0.0);
        assert!((w1_bruteforce_oracle(&[1.0, 0.0], &[0.0, 1.0], &c).unwrap() - 2.5).abs() < 1e-15);
        assert!(w1_bruteforce_oracle(&[1.0, 0.0], &[0.0, 2.0], &c).is_err());
    }

    fn random_instance(rng: &mut ChaCha8Rng, m: usize, cap: f64) -> TransportProblem {
        let coords: Vec<f64> = (0..2 * m).map(|_| rng.gen::<f64>()).collect();
        let mu: Vec<f64> = (0..m).map(|_| if rng.gen_bool(0.7) { rng.gen::<f64>() } else { 0.0 }).collect();
        let nu: Vec<f64> = (0..m).map(|_| if rng.gen_bool(0.7) { rng.gen::<f64>() } else { 0.0 }).collect();
        let caps: Vec<f64> = (0..m).map(|_| cap * rng.gen::<f64>()).collect();
        TransportProblem::new(
            mu,
            nu,
            caps,
            Cost::Coords {
                dim: 2,
                coords,
                norm: AmbientNorm::L2,
            },
        )
        .unwrap()
    }

    #[test]
    fn dense_and_sparse_agree_and_are_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in [5, 40, 120] {
            let p = random_instance(&mut rng, m, 0.6);
            let d = p.solve_checked(SolveMode::Dense).unwrap();
            let s = p.solve_checked(SolveMode::Sparse { k: 3 }).unwrap();
            assert!((d.value - s.value).abs() < 1e-9, "{} vs {}", d.value, s.value);
            assert!((d.value - d.primal_value).abs() < 1e-9);
        }
    }

    #[test]
    fn dump_round_trip_preserves_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_instance(&mut rng, 12, 1.0);
        let q = TransportProblem::from_dump(&p.to_dump()).unwrap();
        assert!((p.solve().unwrap().value - q.solve().unwrap().value).abs() < 1e-12);
    }

    #[test]
    fn zero_cap_points_act_as_ground() {
        // mass at 0 against nothing, with a zero-cap point at distance 0.3: f(0) <= 0.3
        let c = line(&[0.0, 0.3]);
        let p = TransportProblem::new(vec![1.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0], c).unwrap();
        assert!((p.solve().unwrap().value - 0.3).abs() < 1e-15);
    }

    #[test]
    fn dist_ball_prunes_outside_points() {
        let s = MetricSpaceSample::from_coords(vec![0.0, 0.5, 3.0], 1, AmbientNorm::L2, vec![1.0; 3], 1).unwrap();
        let v = dist_ball(&s, &[1.0, 0.0, 5.0], &[0.0, 0.0, 0.0], 0, 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }
}
