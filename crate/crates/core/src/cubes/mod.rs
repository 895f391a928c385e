//! Nested nets, Christ-David cube trees on finite samples, multi-resolution
//! systems and the one-third-trick shifted lattice in R^n.

mod lattice;
mod multires;

pub use lattice::{find_l_good_cube, LGoodCube, LatticeCube, ShiftedLattice};
pub use multires::{build_multires_systems, covering_cube, sample_pairs, MultiresConfig, MultiresSystem};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::metric::MetricSpaceSample;

/// Default scale ratio.
pub const DEFAULT_RHO: f64 = 0.25;
/// Default inner-ball constant; `2 rho/(1 - rho) + 10 c0 < 1` holds for the default `rho`.
pub const DEFAULT_C0: f64 = 1.0 / 40.0;

/// Nested maximal `rho^k`-nets for `k = k_min..=k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetHierarchy {
    pub rho: f64,
    pub k_min: i32,
    pub k_max: i32,
    /// Net points per level (index `k - k_min`), increasing.
    pub levels: Vec<Vec<usize>>,
    /// `owner[k - k_min][x]`: nearest level-`k` net point to `x` (ties to the
    /// smallest index).
    pub owner: Vec<Vec<usize>>,
}

/// Insertion order used when growing each level.
#[derive(Debug, Clone)]
pub enum NetOrder {
    /// Farthest-point insertion starting from the given point.
    FarthestPoint { start: usize },
    /// Points are offered in the listed order (remaining points by index).
    Priority(Vec<usize>),
}

impl NetHierarchy {
    pub fn len_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, k: i32) -> &[usize] {
        &self.levels[(k - self.k_min) as usize]
    }

    pub fn radius(&self, k: i32) -> f64 {
        self.rho.powi(k)
    }
}

/// Levels from a single point (`rho^k_min >= diam`) down to full resolution
/// (`rho^k_max < min spacing`).
pub fn auto_levels(space: &MetricSpaceSample, rho: f64) -> (i32, i32) {
    let diam = space.diameter();
    let h = space.min_spacing();
    let k_min = if diam > 0.0 { (diam.ln() / rho.ln()).floor() as i32 } else { 0 };
    let k_max = if h.is_finite() && h > 0.0 {
        (h.ln() / rho.ln()).floor() as i32 + 1
    } else {
        k_min
    };
    (k_min, k_max.max(k_min))
}

/// Builds nested nets; the seed picks the farthest-point starting point.
pub fn build_net_hierarchy(
    space: &MetricSpaceSample,
    rho: f64,
    k_min: i32,
    k_max: i32,
    seed: u64,
) -> Result<NetHierarchy> {
    if space.is_empty() {
        return domain("empty space");
    }
    let start = (seed % space.len() as u64) as usize;
    build_nets_ordered(space, rho, k_min, k_max, &NetOrder::FarthestPoint { start })
}

pub fn build_nets_ordered(
    space: &MetricSpaceSample,
    rho: f64,
    k_min: i32,
    k_max: i32,
    order: &NetOrder,
) -> Result<NetHierarchy> {
    if !(rho > 0.0 && rho < 1.0) {
        return domain("rho must lie in (0, 1)");
    }
    if k_min > k_max {
        return domain("k_min must not exceed k_max");
    }
    let n = space.len();
    if n == 0 {
        return domain("empty space");
    }
    let priority: Vec<usize> = match order {
        NetOrder::FarthestPoint { start } => {
            if *start >= n {
                return domain("start point out of range");
            }
            Vec::new()
        }
        NetOrder::Priority(p) => {
            let mut seen = vec![false; n];
            let mut out = Vec::with_capacity(n);
            for x in p.iter().copied().chain(0..n) {
                if x >= n {
                    return domain("priority entry out of range");
                }
                if !seen[x] {
                    seen[x] = true;
                    out.push(x);
                }
            }
            out
        }
    };
    let mut near = vec![f64::INFINITY; n];
    let mut own = vec![usize::MAX; n];
    let mut is_center = vec![false; n];
    let mut centers: Vec<usize> = Vec::new();
    let mut levels = Vec::new();
    let mut owner = Vec::new();

    let add = |c: usize, near: &mut [f64], own: &mut [usize], is_center: &mut [bool], centers: &mut Vec<usize>| {
        is_center[c] = true;
        centers.push(c);
        for i in 0..n {
            let d = space.dist(i, c);
            if d < near[i] || (d == near[i] && c < own[i]) {
                near[i] = d;
                own[i] = c;
            }
        }
    };

    for k in k_min..=k_max {
        let r = rho.powi(k);
        match order {
            NetOrder::FarthestPoint { start } => {
                if centers.is_empty() {
                    add(*start, &mut near, &mut own, &mut is_center, &mut centers);
                }
                loop {
                    let mut best = usize::MAX;
                    let mut bd = r;
                    for i in 0..n {
                        if near[i] > bd {
                            bd = near[i];
                            best = i;
                        }
                    }
                    if best == usize::MAX {
                        break;
                    }
                    add(best, &mut near, &mut own, &mut is_center, &mut centers);
                }
            }
            NetOrder::Priority(_) => {
                for &p in &priority {
                    if !is_center[p] && near[p] > r {
                        add(p, &mut near, &mut own, &mut is_center, &mut centers);
                    }
                }
            }
        }
        let mut lv = centers.clone();
        lv.sort_unstable();
        levels.push(lv);
        owner.push(own.clone());
    }
    Ok(NetHierarchy {
        rho,
        k_min,
        k_max,
        levels,
        owner,
    })
}

/// One Christ-David cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeNode {
    pub id: usize,
    pub level: i32,
    pub center: usize,
    pub parent: Option<usize>,
    #[serde(skip)]
    pub children: Vec<usize>,
    pub members: Vec<usize>,
}

/// Christ-David hierarchy with `ℓ(Q) = 5 rho^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeTree {
    pub rho: f64,
    pub c0: f64,
    pub k_min: i32,
    pub k_max: i32,
    /// Ordered by `(level, center)`; `cubes[i].id == i`.
    pub cubes: Vec<CubeNode>,
    /// Cube ids per level index `k - k_min`.
    pub by_level: Vec<Vec<usize>>,
    /// `point_cube[k - k_min][x]`: the level-`k` cube containing `x`.
    pub point_cube: Vec<Vec<usize>>,
}

impl CubeTree {
    pub fn side(&self, id: usize) -> f64 {
        side_of(self.rho, self.cubes[id].level)
    }

    pub fn level_side(&self, k: i32) -> f64 {
        side_of(self.rho, k)
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn levels(&self) -> std::ops::RangeInclusive<i32> {
        self.k_min..=self.k_max
    }

    pub fn level_cubes(&self, k: i32) -> &[usize] {
        &self.by_level[(k - self.k_min) as usize]
    }

    pub fn cube_of(&self, x: usize, k: i32) -> usize {
        self.point_cube[(k - self.k_min) as usize][x]
    }

    pub fn roots(&self) -> &[usize] {
        &self.by_level[0]
    }

    /// `id` and all of its descendants, in id order.
    pub fn descendants(&self, id: usize) -> Vec<usize> {
        let mut out = vec![id];
        let mut i = 0;
        while i < out.len() {
            out.extend_from_slice(&self.cubes[out[i]].children);
            i += 1;
        }
        out.sort_unstable();
        out
    }

    /// Depth of `id` below `root` (0 for the root itself).
    pub fn depth_below(&self, root: usize, id: usize) -> usize {
        (self.cubes[id].level - self.cubes[root].level) as usize
    }

    pub fn mass(&self, space: &MetricSpaceSample, id: usize) -> f64 {
        self.cubes[id].members.iter().map(|&x| space.weight(x)).sum()
    }

    /// Serializes as `{rho, c0, cubes: [{id, level, center, parent, members}]}`.
    pub fn to_json(&self) -> String {
        let t = TreeJson {
            rho: self.rho,
            c0: self.c0,
            k_min: self.k_min,
            k_max: self.k_max,
            cubes: self.cubes.clone(),
        };
        serde_json::to_string(&t).expect("tree serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: TreeJson = serde_json::from_str(text)?;
        Self::from_nodes(t.rho, t.c0, t.k_min, t.k_max, t.cubes)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Rebuilds children and per-level indices from nodes listed in id order.
    pub fn from_nodes(rho: f64, c0: f64, k_min: i32, k_max: i32, mut cubes: Vec<CubeNode>) -> Result<Self> {
        if k_min > k_max {
            return Err(Error::Format("k_min > k_max".into()));
        }
        let levels = (k_max - k_min + 1) as usize;
        let npts = cubes
            .iter()
            .flat_map(|c| c.members.iter())
            .max()
            .map_or(0, |m| m + 1);
        let mut by_level = vec![Vec::new(); levels];
        let mut point_cube = vec![vec![usize::MAX; npts]; levels];
        for (i, c) in cubes.iter_mut().enumerate() {
            if c.id != i {
                return Err(Error::Format(format!("cube ids must be 0..N in order (found {} at {i})", c.id)));
            }
            if c.level < k_min || c.level > k_max {
                return Err(Error::Format(format!("cube {i} has level {} outside the range", c.level)));
            }
            c.children.clear();
        }
        for i in 0..cubes.len() {
            let li = (cubes[i].level - k_min) as usize;
            by_level[li].push(i);
            for &x in &cubes[i].members {
                point_cube[li][x] = i;
            }
            if let Some(p) = cubes[i].parent {
                if p >= cubes.len() {
                    return Err(Error::Format(format!("cube {i} has unknown parent {p}")));
                }
                cubes[p].children.push(i);
            }
        }
        Ok(Self {
            rho,
            c0,
            k_min,
            k_max,
            cubes,
            by_level,
            point_cube,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct TreeJson {
    rho: f64,
    c0: f64,
    k_min: i32,
    k_max: i32,
    cubes: Vec<CubeNode>,
}

pub fn side_of(rho: f64, k: i32) -> f64 {
    5.0 * rho.powi(k)
}

/// Builds the cube tree: each level-`(k+1)` net point hangs below its nearest
/// level-`k` net point, and a point's level-`k` cube is its level-`k` ancestor.
/// Fails with a construction error if the axioms do not verify.
pub fn build_christ_david(space: &MetricSpaceSample, nets: &NetHierarchy, c0: f64) -> Result<CubeTree> {
    let tree = assemble_tree(space, nets, c0)?;
    let report = verify_cube_axioms(&tree, space, false);
    if let Some(f) = report.failures.first() {
        return Err(Error::Construction(format!(
            "cube axiom {} fails at cube {} (level {}): {}",
            f.axiom, f.cube, f.level, f.detail
        )));
    }
    Ok(tree)
}

/// The tree without verification (used by the verifier's own tests).
pub fn assemble_tree(space: &MetricSpaceSample, nets: &NetHierarchy, c0: f64) -> Result<CubeTree> {
    if !(c0 > 0.0 && c0 < 0.5) {
        return domain("c0 must lie in (0, 1/2)");
    }
    let n = space.len();
    let levels = nets.levels.len();
    if nets.levels[levels - 1].len() != n {
        return domain("the finest net level must contain every point (raise k_max)");
    }
    // anc[l][x]: level-l ancestor center of point x
    let mut anc = vec![vec![0usize; n]; levels];
    anc[levels - 1] = (0..n).collect();
    for l in (0..levels - 1).rev() {
        for x in 0..n {
            anc[l][x] = nets.owner[l][anc[l + 1][x]];
        }
    }
    let mut cubes = Vec::new();
    let mut by_level = Vec::with_capacity(levels);
    let mut point_cube = Vec::with_capacity(levels);
    let mut center_id = vec![usize::MAX; n];
    for l in 0..levels {
        let k = nets.k_min + l as i32;
        let mut ids = Vec::with_capacity(nets.levels[l].len());
        let mut slot = vec![usize::MAX; n];
        for &c in &nets.levels[l] {
            let id = cubes.len();
            let parent = if l == 0 { None } else { Some(center_id[nets.owner[l - 1][c]]) };
            cubes.push(CubeNode {
                id,
                level: k,
                center: c,
                parent,
                children: Vec::new(),
                members: Vec::new(),
            });
            slot[c] = id;
            ids.push(id);
        }
        let mut pc = vec![0usize; n];
        for x in 0..n {
            let id = slot[anc[l][x]];
            cubes[id].members.push(x);
            pc[x] = id;
        }
        for &c in &nets.levels[l] {
            center_id[c] = slot[c];
        }
        by_level.push(ids);
        point_cube.push(pc);
    }
    for i in 0..cubes.len() {
        if let Some(p) = cubes[i].parent {
            cubes[p].children.push(i);
        }
    }
    Ok(CubeTree {
        rho: nets.rho,
        c0,
        k_min: nets.k_min,
        k_max: nets.k_max,
        cubes,
        by_level,
        point_cube,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxiomFailure {
    pub axiom: String,
    pub cube: usize,
    pub level: i32,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub level: i32,
    pub eta: f64,
    /// Mass fraction of points within `eta rho^k` of the complement of their cube.
    pub mass_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CubeAxiomReport {
    pub partition: bool,
    pub nesting: bool,
    pub sandwich: bool,
    pub failures: Vec<AxiomFailure>,
    pub boundary_profile: Vec<BoundaryRow>,
}

impl CubeAxiomReport {
    pub fn passed(&self) -> bool {
        self.partition && self.nesting && self.sandwich
    }
}

/// Exact check of partition, nesting and the ball sandwich
/// `B(x_Q, c0 ℓ) ∩ X ⊆ Q ⊆ B(x_Q, ℓ)`; optionally the small-boundary profile.
pub fn verify_cube_axioms(tree: &CubeTree, space: &MetricSpaceSample, boundary: bool) -> CubeAxiomReport {
    let n = space.len();
    let mut failures = Vec::new();
    let mut fail = |axiom: &str, c: &CubeNode, detail: String| {
        failures.push(AxiomFailure {
            axiom: axiom.into(),
            cube: c.id,
            level: c.level,
            detail,
        })
    };
    let mut partition = true;
    let mut nesting = true;
    let mut sandwich = true;

    // partition: every level covers each point exactly once
    let mut count = vec![0u32; n];
    for k in tree.levels() {
        count.iter_mut().for_each(|c| *c = 0);
        for &id in tree.level_cubes(k) {
            for &x in &tree.cubes[id].members {
                if x < n {
                    count[x] += 1;
                }
            }
        }
        if let Some(x) = (0..n).find(|&x| count[x] != 1) {
            partition = false;
            let id = tree.level_cubes(k).first().copied().unwrap_or(0);
            fail("partition", &tree.cubes[id], format!("point {x} lies in {} level-{k} cubes", count[x]));
        }
    }

    // nesting: children partition their parent
    let mut mark = vec![usize::MAX; n];
    for c in &tree.cubes {
        if c.level == tree.k_max {
            continue;
        }
        for &ch in &c.children {
            for &x in &tree.cubes[ch].members {
                if x < n {
                    mark[x] = c.id;
                }
            }
        }
        let total: usize = c.children.iter().map(|&ch| tree.cubes[ch].members.len()).sum();
        let all_in = c.members.iter().all(|&x| x < n && mark[x] == c.id);
        if total != c.members.len() || !all_in {
            nesting = false;
            fail(
                "nesting",
                c,
                format!("children hold {total} points, cube holds {}", c.members.len()),
            );
        }
    }

    // sandwich
    let h = space.min_spacing();
    for c in &tree.cubes {
        let l = tree.side(c.id);
        if let Some(&x) = c.members.iter().find(|&&x| x >= n || space.dist(x, c.center) > l) {
            sandwich = false;
            fail("sandwich-outer", c, format!("member {x} farther than ℓ(Q) = {l} from the center"));
            continue;
        }
        let inner = tree.c0 * l;
        if inner < h && c.members.contains(&c.center) {
            continue;
        }
        let li = (c.level - tree.k_min) as usize;
        if let Some(y) = (0..n).find(|&y| space.dist(y, c.center) <= inner && tree.point_cube[li][y] != c.id) {
            sandwich = false;
            fail(
                "sandwich-inner",
                c,
                format!("point {y} within c0·ℓ(Q) of the center belongs to another cube"),
            );
        }
    }

    let mut boundary_profile = Vec::new();
    if boundary {
        let total = space.total_mass();
        for (li, k) in tree.levels().enumerate() {
            let pc = &tree.point_cube[li];
            let mut dout = vec![f64::INFINITY; n];
            for x in 0..n {
                for y in 0..n {
                    if pc[y] != pc[x] {
                        dout[x] = dout[x].min(space.dist(x, y));
                    }
                }
            }
            for eta in [0.1, 0.01] {
                let r = eta * tree.rho.powi(k);
                let m: f64 = (0..n).filter(|&x| dout[x] <= r).map(|x| space.weight(x)).sum();
                boundary_profile.push(BoundaryRow {
                    level: k,
                    eta,
                    mass_fraction: m / total,
                });
            }
        }
    }
    CubeAxiomReport {
        partition,
        nesting,
        sandwich,
        failures,
        boundary_profile,
    }
}

/// Default tree: automatic levels, farthest-point nets from `seed`.
pub fn default_tree(space: &MetricSpaceSample, rho: f64, c0: f64, seed: u64) -> Result<CubeTree> {
    let (k_min, k_max) = auto_levels(space, rho);
    let nets = build_net_hierarchy(space, rho, k_min, k_max, seed)?;
    build_christ_david(space, &nets, c0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{generate, GeneratorSpec};
    use crate::metric::AmbientNorm;

    fn line(n: usize) -> MetricSpaceSample {
        let h = 1.0 / n as f64;
        let c: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
        MetricSpaceSample::from_coords(c, 1, AmbientNorm::L2, vec![h; n], 1).unwrap()
    }

    #[test]
    fn single_point_nets() {
        let s = MetricSpaceSample::from_coords(vec![0.3], 1, AmbientNorm::L2, vec![1.0], 1).unwrap();
        let nets = build_net_hierarchy(&s, 0.25, -2, 3, 0).unwrap();
        assert!(nets.levels.iter().all(|l| l == &vec![0]));
        let tree = build_christ_david(&s, &nets, DEFAULT_C0).unwrap();
        assert_eq!(tree.len(), 6);
    }

    #[test]
    fn two_far_points_give_singletons() {
        let s = MetricSpaceSample::from_coords(vec![0.0, 1.0], 1, AmbientNorm::L2, vec![1.0, 1.0], 1).unwrap();
        let nets = build_net_hierarchy(&s, 0.25, 1, 1, 0).unwrap();
        let tree = build_christ_david(&s, &nets, DEFAULT_C0).unwrap();
        assert_eq!(tree.len(), 2);
        assert!(tree.cubes.iter().all(|c| c.members == vec![c.center]));
    }

    #[test]
    fn grid_nets_are_separated_maximal_nested_and_sized() {
        let s = line(1024);
        let (k0, k1) = auto_levels(&s, 0.25);
        let nets = build_net_hierarchy(&s, 0.25, k0, k1, 0).unwrap();
        for (l, lv) in nets.levels.iter().enumerate() {
            let k = k0 + l as i32;
            let r = 0.25f64.powi(k);
            for (a, &i) in lv.iter().enumerate() {
                for &j in &lv[a + 1..] {
                    assert!(s.dist(i, j) > r);
                }
            }
            for x in 0..s.len() {
                assert!(lv.iter().any(|&c| s.dist(x, c) <= r));
            }
            if l + 1 < nets.levels.len() {
                assert!(lv.iter().all(|c| nets.levels[l + 1].binary_search(c).is_ok()));
            }
            let expect = (1.0 / r).min(1024.0);
            let size = lv.len() as f64;
            assert!(size <= 4.0 * expect && size >= expect / 4.0, "level {k}: {size} vs {expect}");
        }
    }

    #[test]
    fn tiny_rho_and_c0_are_accepted_on_a_small_set() {
        let g = generate(&GeneratorSpec::new("grid").dims(2, 2).spacing(1.0 / 14.0)).unwrap();
        // 16 x 16 = 256 points; keep 200
        let coords: Vec<f64> = (0..200).flat_map(|i| g.space.coord(i).unwrap().to_vec()).collect();
        let s = MetricSpaceSample::from_coords(coords, 2, AmbientNorm::L2, vec![1.0; 200], 2).unwrap();
        let rho = 1.0 / 1024.0;
        let (k0, k1) = auto_levels(&s, rho);
        let nets = build_net_hierarchy(&s, rho, k0, k1, 0).unwrap();
        let tree = build_christ_david(&s, &nets, 1.0 / 500.0).unwrap();
        assert!(verify_cube_axioms(&tree, &s, false).passed());
    }

    #[test]
    fn injected_fault_is_localized() {
        let s = line(64);
        let mut tree = default_tree(&s, 0.25, DEFAULT_C0, 0).unwrap();
        // move a point from one cube to a sibling at some mid level
        let k = tree.k_min + 2;
        let ids = tree.level_cubes(k).to_vec();
        let (a, b) = (ids[0], ids[1]);
        let x = tree.cubes[a].center;
        tree.cubes[a].members.retain(|&y| y != x);
        tree.cubes[b].members.push(x);
        let li = (k - tree.k_min) as usize;
        tree.point_cube[li][x] = b;
        let rep = verify_cube_axioms(&tree, &s, false);
        assert!(!rep.passed());
        assert!(rep.failures.iter().any(|f| f.cube == a || f.cube == b));
    }

    #[test]
    fn tree_json_round_trip_is_exact() {
        let s = line(100);
        let tree = default_tree(&s, 0.25, DEFAULT_C0, 3).unwrap();
        let text = tree.to_json();
        let back = CubeTree::from_json(&text).unwrap();
        assert_eq!(back, tree);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn boundary_profile_decreases_in_eta() {
        let g = generate(&GeneratorSpec::new("grid").dims(2, 2).spacing(1.0 / 32.0)).unwrap();
        let tree = default_tree(&g.space, 0.25, DEFAULT_C0, 0).unwrap();
        let rep = verify_cube_axioms(&tree, &g.space, true);
        for pair in rep.boundary_profile.chunks(2) {
            assert!(pair[1].mass_fraction <= pair[0].mass_fraction);
        }
    }
}
