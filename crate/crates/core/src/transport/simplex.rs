//! Primal network simplex for uncapacitated min-cost flow on a complete (or
//! explicitly listed) graph over `m` nodes plus a ground node.
//!
//! Node `i` has supply `w_i`; the ground absorbs the imbalance. Each node is
//! joined to the ground in both directions at cost `g_i`, and pair arcs cost
//! `d(i, j)`. The optimal potentials `p` (with `p_ground = 0`) maximize
//! `sum w_i p_i` subject to `p_u - p_v <= c(u -> v)` on every arc, which is the
//! capped Kantorovich dual.

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

pub(crate) struct NetworkSimplex<'c> {
    m: usize,
    cost: &'c (dyn Fn(usize, usize) -> f64 + Sync),
    ground: Vec<f64>,
    supply: Vec<f64>,
    parent: Vec<usize>,
    /// Pred arc points from the node to its parent.
    up: Vec<bool>,
    pcost: Vec<f64>,
    flow: Vec<f64>,
    depth: Vec<usize>,
    first_child: Vec<usize>,
    next_sib: Vec<usize>,
    prev_sib: Vec<usize>,
    pot: Vec<f64>,
    pairs: Option<Vec<(u32, u32)>>,
    next_arc: usize,
    tol: f64,
    pub pivots: usize,
    since_refresh: usize,
    stack: Vec<usize>,
}

impl<'c> NetworkSimplex<'c> {
    /// `pairs = None` prices all ordered pairs; otherwise only the listed arcs.
    pub fn new(
        supply: Vec<f64>,
        ground: Vec<f64>,
        cost: &'c (dyn Fn(usize, usize) -> f64 + Sync),
        pairs: Option<Vec<(u32, u32)>>,
        scale: f64,
    ) -> Self {
        let m = supply.len();
        let root = m;
        let mut s = Self {
            m,
            cost,
            ground,
            supply,
            parent: vec![NONE; m + 1],
            up: vec![false; m + 1],
            pcost: vec![0.0; m + 1],
            flow: vec![0.0; m + 1],
            depth: vec![0; m + 1],
            first_child: vec![NONE; m + 1],
            next_sib: vec![NONE; m + 1],
            prev_sib: vec![NONE; m + 1],
            pot: vec![0.0; m + 1],
            pairs,
            next_arc: 0,
            tol: 1e-13 * scale.max(f64::MIN_POSITIVE),
            pivots: 0,
            since_refresh: 0,
            stack: Vec::new(),
        };
        for i in 0..m {
            s.parent[i] = root;
            s.depth[i] = 1;
            s.pcost[i] = s.ground[i];
            if s.supply[i] > 0.0 {
                s.up[i] = true;
                s.flow[i] = s.supply[i];
                s.pot[i] = s.ground[i];
            } else {
                s.up[i] = false;
                s.flow[i] = -s.supply[i];
                s.pot[i] = -s.ground[i];
            }
            s.link(i, root);
        }
        s
    }

    pub fn potentials(&self) -> &[f64] {
        &self.pot[..self.m]
    }

    pub fn primal_cost(&self) -> f64 {
        (0..self.m).map(|i| self.flow[i] * self.pcost[i]).sum()
    }

    pub fn add_pairs(&mut self, extra: &[(u32, u32)]) {
        if let Some(p) = &mut self.pairs {
            p.extend_from_slice(extra);
        }
    }

    pub fn pair_count(&self) -> usize {
        match &self.pairs {
            Some(p) => p.len(),
            None => self.m * self.m.saturating_sub(1),
        }
    }

    fn num_arcs(&self) -> usize {
        2 * self.m + self.pair_count()
    }

    #[inline]
    fn arc(&self, a: usize) -> (usize, usize, f64) {
        let m = self.m;
        if a < 2 * m {
            let i = a / 2;
            if a % 2 == 0 {
                (i, m, self.ground[i])
            } else {
                (m, i, self.ground[i])
            }
        } else {
            let t = a - 2 * m;
            let (i, j) = match &self.pairs {
                Some(p) => (p[t].0 as usize, p[t].1 as usize),
                None => {
                    let i = t / (m - 1);
                    let jj = t % (m - 1);
                    (i, if jj >= i { jj + 1 } else { jj })
                }
            };
            (i, j, (self.cost)(i, j))
        }
    }

    /// Block-search pricing: the most negative reduced cost in the first
    /// block that contains a violation.
    fn find_entering(&mut self) -> Option<(usize, usize, f64)> {
        let total = self.num_arcs();
        if total == 0 {
            return None;
        }
        let block = ((total as f64).sqrt() as usize).max(16);
        let mut best: Option<(usize, usize, f64)> = None;
        let mut best_rc = -self.tol;
        let mut a = self.next_arc % total;
        let mut in_block = 0;
        for _ in 0..total {
            let (u, v, c) = self.arc(a);
            let rc = c - self.pot[u] + self.pot[v];
            if rc < best_rc {
                best_rc = rc;
                best = Some((u, v, c));
            }
            a += 1;
            if a == total {
                a = 0;
            }
            in_block += 1;
            if in_block == block {
                if best.is_some() {
                    self.next_arc = a;
                    return best;
                }
                in_block = 0;
            }
        }
        self.next_arc = a;
        best
    }

    fn link(&mut self, x: usize, p: usize) {
        let f = self.first_child[p];
        self.next_sib[x] = f;
        self.prev_sib[x] = NONE;
        if f != NONE {
            self.prev_sib[f] = x;
        }
        self.first_child[p] = x;
    }

    fn unlink(&mut self, x: usize) {
        let p = self.parent[x];
        let (prev, next) = (self.prev_sib[x], self.next_sib[x]);
        if prev != NONE {
            self.next_sib[prev] = next;
        } else {
            self.first_child[p] = next;
        }
        if next != NONE {
            self.prev_sib[next] = prev;
        }
    }

    fn pivot(&mut self, u: usize, v: usize, c: f64) -> Result<()> {
        let (mut a, mut b) = (u, v);
        while a != b {
            if self.depth[a] > self.depth[b] {
                a = self.parent[a];
            } else if self.depth[b] > self.depth[a] {
                b = self.parent[b];
            } else {
                a = self.parent[a];
                b = self.parent[b];
            }
        }
        let join = a;

        // Leaving arc: strict on the source side, ties go to the target side.
        let mut delta = f64::INFINITY;
        let mut out = NONE;
        let mut source_side = true;
        let mut x = u;
        while x != join {
            if self.up[x] && self.flow[x] < delta {
                delta = self.flow[x];
                out = x;
                source_side = true;
            }
            x = self.parent[x];
        }
        x = v;
        while x != join {
            if !self.up[x] && self.flow[x] <= delta {
                delta = self.flow[x];
                out = x;
                source_side = false;
            }
            x = self.parent[x];
        }
        if out == NONE {
            return Err(Error::Numeric("negative cycle without a blocking arc".into()));
        }
        let delta = delta.max(0.0);
        if delta > 0.0 {
            x = u;
            while x != join {
                if self.up[x] {
                    self.flow[x] = (self.flow[x] - delta).max(0.0);
                } else {
                    self.flow[x] += delta;
                }
                x = self.parent[x];
            }
            x = v;
            while x != join {
                if self.up[x] {
                    self.flow[x] += delta;
                } else {
                    self.flow[x] = (self.flow[x] - delta).max(0.0);
                }
                x = self.parent[x];
            }
        }
        if self.flow[out] != 0.0 && self.flow[out] < 1e-300 {
            self.flow[out] = 0.0;
        }

        let (u_in, v_in, enter_up) = if source_side { (u, v, true) } else { (v, u, false) };
        // Reverse the stem from u_in up to the leaving node.
        let mut x = u_in;
        let mut np = v_in;
        let mut n_up = enter_up;
        let mut n_cost = c;
        let mut n_flow = delta;
        loop {
            let op = self.parent[x];
            let (o_up, o_cost, o_flow) = (self.up[x], self.pcost[x], self.flow[x]);
            self.unlink(x);
            self.parent[x] = np;
            self.up[x] = n_up;
            self.pcost[x] = n_cost;
            self.flow[x] = n_flow;
            self.link(x, np);
            if x == out {
                break;
            }
            np = x;
            n_up = !o_up;
            n_cost = o_cost;
            n_flow = o_flow;
            x = op;
        }

        let target = if enter_up { self.pot[v_in] + c } else { self.pot[v_in] - c };
        let sigma = target - self.pot[u_in];
        self.stack.clear();
        self.stack.push(u_in);
        while let Some(y) = self.stack.pop() {
            self.pot[y] += sigma;
            self.depth[y] = self.depth[self.parent[y]] + 1;
            let mut ch = self.first_child[y];
            while ch != NONE {
                self.stack.push(ch);
                ch = self.next_sib[ch];
            }
        }
        self.pivots += 1;
        self.since_refresh += 1;
        Ok(())
    }

    /// Recomputes all potentials from the tree to remove accumulated drift.
    fn refresh_potentials(&mut self) {
        let root = self.m;
        self.pot[root] = 0.0;
        self.stack.clear();
        let mut ch = self.first_child[root];
        while ch != NONE {
            self.stack.push(ch);
            ch = self.next_sib[ch];
        }
        while let Some(y) = self.stack.pop() {
            let p = self.parent[y];
            self.pot[y] = if self.up[y] { self.pot[p] + self.pcost[y] } else { self.pot[p] - self.pcost[y] };
            let mut ch = self.first_child[y];
            while ch != NONE {
                self.stack.push(ch);
                ch = self.next_sib[ch];
            }
        }
        self.since_refresh = 0;
    }

    pub fn run(&mut self, max_pivots: usize) -> Result<()> {
        let refresh_every = (self.m + 1).max(64);
        let mut fresh = false;
        loop {
            if self.since_refresh >= refresh_every {
                self.refresh_potentials();
            }
            match self.find_entering() {
                Some((u, v, c)) => {
                    if self.pivots >= max_pivots {
                        return Err(Error::Numeric(format!(
                            "network simplex exceeded {max_pivots} pivots"
                        )));
                    }
                    self.pivot(u, v, c)?;
                    fresh = false;
                }
                None if fresh => return Ok(()),
                None => {
                    self.refresh_potentials();
                    fresh = true;
                }
            }
        }
    }
}
