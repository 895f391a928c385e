//! Packing sums of coefficient fields over cube trees: weak and strong
//! Carleson ratios, their depth profile, and the set-theoretic checks on
//! subsets of a root cube.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientField, OUT_OF_BAND};
use crate::cubes::CubeTree;
use crate::error::{domain, Error, Result};
use crate::metric::MetricSpaceSample;

/// Deepest profile bands looked at by the verdict.
const VERDICT_BANDS: usize = 3;

/// Per-cube value in the audited band: `Some(v)`, or `None` for cubes
/// flagged out of band. Other holes fail.
pub fn band_values(tree: &CubeTree, field: &CoefficientField) -> Result<Vec<Option<f64>>> {
    let mut out: Vec<Option<Option<f64>>> = vec![None; tree.len()];
    for e in &field.entries {
        if e.cube >= tree.len() {
            return domain(format!("field entry for unknown cube {}", e.cube));
        }
        let v = match (e.value, &e.flag) {
            (Some(v), _) => Some(v),
            (None, Some(f)) if f.starts_with(OUT_OF_BAND) => None,
            _ => continue,
        };
        out[e.cube] = Some(v);
    }
    let holes: Vec<usize> = (0..tree.len()).filter(|&i| out[i].is_none()).collect();
    if !holes.is_empty() {
        let shown: Vec<String> = holes.iter().take(12).map(|h| h.to_string()).collect();
        return Err(Error::Coverage(format!(
            "{} cubes have no value ({}{})",
            holes.len(),
            shown.join(", "),
            if holes.len() > 12 { ", ..." } else { "" }
        )));
    }
    Ok(out.into_iter().map(|v| v.unwrap()).collect())
}

/// Levels below each cube that still hold in-band cubes (`None` if the cube
/// itself is out of band).
fn band_depths(tree: &CubeTree, vals: &[Option<f64>]) -> Vec<Option<usize>> {
    let mut depth: Vec<Option<usize>> = vec![None; tree.len()];
    for id in (0..tree.len()).rev() {
        if vals[id].is_none() {
            continue;
        }
        let d = tree.cubes[id]
            .children
            .iter()
            .filter_map(|&c| depth[c].map(|x| x + 1))
            .max()
            .unwrap_or(0);
        depth[id] = Some(d);
    }
    depth
}

/// `(weak, strong, weak by level)` under `root`, normalized by `ℓ(R)^n`.
/// Levels are counted from `top`.
fn root_sums(tree: &CubeTree, vals: &[Option<f64>], root: usize, eps: f64, n: usize, top: i32) -> (f64, f64, Vec<f64>) {
    let norm = tree.side(root).powi(n as i32);
    let mut weak = 0.0;
    let mut strong = 0.0;
    let mut by_level: Vec<f64> = Vec::new();
    for q in tree.descendants(root) {
        let Some(v) = vals[q] else { continue };
        let w = tree.side(q).powi(n as i32) / norm;
        let d = (tree.cubes[q].level - top) as usize;
        if by_level.len() <= d {
            by_level.resize(d + 1, 0.0);
        }
        if v > eps {
            weak += w;
            by_level[d] += w;
        }
        strong += v * v * w;
    }
    (weak, strong, by_level)
}

/// `Σ_{Q ⊆ R, β(Q) > eps} ℓ(Q)^n / ℓ(R)^n`.
pub fn packing_sum(tree: &CubeTree, field: &CoefficientField, eps: f64, root: usize, n: usize) -> Result<f64> {
    let vals = band_values(tree, field)?;
    check_root(tree, &vals, root)?;
    Ok(root_sums(tree, &vals, root, eps, n, tree.cubes[root].level).0)
}

/// `Σ_{Q ⊆ R} β(Q)^2 ℓ(Q)^n / ℓ(R)^n`.
pub fn strong_carleson_sum(tree: &CubeTree, field: &CoefficientField, root: usize, n: usize) -> Result<f64> {
    let vals = band_values(tree, field)?;
    check_root(tree, &vals, root)?;
    Ok(root_sums(tree, &vals, root, 0.0, n, tree.cubes[root].level).1)
}

fn check_root(tree: &CubeTree, vals: &[Option<f64>], root: usize) -> Result<()> {
    if root >= tree.len() {
        return domain(format!("unknown root cube {root}"));
    }
    if vals[root].is_none() {
        return domain(format!("root cube {root} lies below the scale floor"));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RootRatio {
    pub root: usize,
    pub level: i32,
    /// In-band levels below the root.
    pub depth: usize,
    pub ratio: f64,
    pub strong: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PackingReport {
    pub kind: String,
    pub eps: f64,
    pub n: usize,
    /// Coarsest and finest audited levels.
    pub band: (i32, i32),
    pub roots: Vec<RootRatio>,
    pub sup: f64,
    pub sup_root: Option<usize>,
    /// Roots were limited to cubes with at least three in-band levels below.
    pub roots_restricted: bool,
    /// `P(k)`: largest ratio over roots counting only bad cubes down to the
    /// `k`-th in-band level. Nondecreasing in `k`.
    pub profile: Vec<f64>,
    pub increments: Vec<f64>,
    /// Heuristic reading of `P(k) / log2(k + 2)` over the deepest bands:
    /// "flat", "growing" or "inconclusive".
    pub verdict: String,
    /// `ratio <= strong / eps^2` on every root.
    pub chebyshev_ok: bool,
}

impl PackingReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "root,depth,eps,ratio")?;
        for r in &self.roots {
            writeln!(f, "{},{},{},{:.17e}", r.root, r.depth, self.eps, r.ratio)?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Verdict from the deepest `VERDICT_BANDS` values of `P(k) / log2(k + 2)`:
/// "flat" when they do not increase, "growing" when they strictly increase.
pub fn profile_verdict(profile: &[f64]) -> &'static str {
    if profile.len() < VERDICT_BANDS {
        return "inconclusive";
    }
    let g: Vec<f64> = profile
        .iter()
        .enumerate()
        .skip(profile.len() - VERDICT_BANDS)
        .map(|(k, p)| p / ((k + 2) as f64).log2())
        .collect();
    if g.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-12) {
        "flat"
    } else if g.windows(2).all(|w| w[1] > w[0]) {
        "growing"
    } else {
        "inconclusive"
    }
}

/// Supremum of the packing ratio over roots in the band, with its depth profile.
pub fn carleson_constant(tree: &CubeTree, field: &CoefficientField, eps: f64, n: usize) -> Result<PackingReport> {
    if !(eps >= 0.0) {
        return domain("eps must be nonnegative");
    }
    let vals = band_values(tree, field)?;
    let depths = band_depths(tree, &vals);
    let in_band: Vec<usize> = (0..tree.len()).filter(|&i| vals[i].is_some()).collect();
    if in_band.is_empty() {
        return Err(Error::Coverage("no cube lies above the scale floor".into()));
    }
    let deep: Vec<usize> = in_band.iter().copied().filter(|&i| depths[i].unwrap() >= 3).collect();
    let roots_restricted = !deep.is_empty();
    let roots = if roots_restricted { deep } else { in_band.clone() };
    let levels: Vec<i32> = in_band.iter().map(|&i| tree.cubes[i].level).collect();
    let (top, bottom) = (*levels.iter().min().unwrap(), *levels.iter().max().unwrap());

    let sums: Vec<(RootRatio, Vec<f64>)> = roots
        .par_iter()
        .map(|&r| {
            let (weak, strong, by_level) = root_sums(tree, &vals, r, eps, n, top);
            (
                RootRatio {
                    root: r,
                    level: tree.cubes[r].level,
                    depth: depths[r].unwrap(),
                    ratio: weak,
                    strong,
                },
                by_level,
            )
        })
        .collect();

    let mut sup = 0.0;
    let mut sup_root = None;
    let mut chebyshev_ok = true;
    let mut profile = vec![0.0f64; (bottom - top) as usize + 1];
    for (r, by_level) in &sums {
        if sup_root.is_none() || r.ratio > sup {
            sup = r.ratio;
            sup_root = Some(r.root);
        }
        if eps > 0.0 && r.ratio > r.strong / (eps * eps) * (1.0 + 1e-12) + 1e-300 {
            chebyshev_ok = false;
        }
        let mut acc = 0.0;
        for (k, p) in profile.iter_mut().enumerate() {
            acc += by_level.get(k).copied().unwrap_or(0.0);
            *p = p.max(acc);
        }
    }
    if !chebyshev_ok {
        return Err(Error::Construction("packing ratio exceeds the strong sum over eps^2".into()));
    }
    let increments: Vec<f64> = profile.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(PackingReport {
        kind: field.kind.name().to_string(),
        eps,
        n,
        band: (top, bottom),
        roots: sums.into_iter().map(|(r, _)| r).collect(),
        sup,
        sup_root,
        roots_restricted,
        verdict: profile_verdict(&profile).to_string(),
        profile,
        increments,
        chebyshev_ok,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RtildeResult {
    pub members: Vec<usize>,
    pub mass: f64,
    pub root_mass: f64,
    pub pass: bool,
}

/// Points of `R` all of whose cubes `Q ⊆ R` keep `mass(Q ∩ F) ≥ (1 - 2 eps) mass(Q)`,
/// and whether they carry at least `eps mass(R)`.
pub fn rtilde_check(
    tree: &CubeTree,
    space: &MetricSpaceSample,
    root: usize,
    f: &[bool],
    eps: f64,
) -> Result<RtildeResult> {
    if root >= tree.len() {
        return domain(format!("unknown root cube {root}"));
    }
    if f.len() != space.len() {
        return domain("subset mask length must match the space");
    }
    if !(0.0..=0.5).contains(&eps) {
        return domain("eps must lie in [0, 1/2]");
    }
    let mass_in = |q: usize| -> (f64, f64) {
        let mut all = 0.0;
        let mut inside = 0.0;
        for &x in &tree.cubes[q].members {
            all += space.weight(x);
            if f[x] {
                inside += space.weight(x);
            }
        }
        (all, inside)
    };
    let (root_mass, root_in) = mass_in(root);
    if root_mass - root_in > eps * root_mass * (1.0 + 1e-12) {
        return domain(format!(
            "mass(R \\ F) = {} exceeds eps mass(R) = {}",
            root_mass - root_in,
            eps * root_mass
        ));
    }
    let mut members = Vec::new();
    let mut stack = vec![root];
    while let Some(q) = stack.pop() {
        let (all, inside) = mass_in(q);
        if inside < (1.0 - 2.0 * eps) * all * (1.0 - 1e-12) {
            continue;
        }
        let ch = &tree.cubes[q].children;
        if ch.is_empty() {
            members.extend_from_slice(&tree.cubes[q].members);
        } else {
            stack.extend_from_slice(ch);
        }
    }
    members.sort_unstable();
    let mass: f64 = members.iter().map(|&x| space.weight(x)).sum();
    Ok(RtildeResult {
        pass: mass >= eps * root_mass * (1.0 - 1e-12),
        members,
        mass,
        root_mass,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JnsReport {
    pub eps: f64,
    /// Bad-ancestor count threshold `N`.
    pub count_bound: usize,
    /// Smallest fraction of a root's mass with at most `N` bad ancestors in it.
    pub eta: f64,
    /// `max(N, 1) / eta`, or infinity when `eta = 0`.
    pub bound: f64,
    /// Largest `Σ_{Q ⊆ R bad} μ(Q) / μ(R)`.
    pub max_mass_ratio: f64,
    pub holds: bool,
}

/// Counting audit for the bad cubes `β > eps`: if every root keeps a
/// fraction `eta` of its mass with at most `N` bad ancestors, the mass packing
/// ratio of every root is at most `max(N, 1) / eta`.
pub fn jns_audit(
    tree: &CubeTree,
    space: &MetricSpaceSample,
    field: &CoefficientField,
    eps: f64,
    count_bound: usize,
) -> Result<JnsReport> {
    let vals = band_values(tree, field)?;
    let bad: Vec<bool> = vals.iter().map(|v| v.is_some_and(|v| v > eps)).collect();
    let masses: Vec<f64> = (0..tree.len()).map(|q| tree.mass(space, q)).collect();
    let roots: Vec<usize> = (0..tree.len()).filter(|&q| vals[q].is_some() && masses[q] > 0.0).collect();
    let per_root: Vec<(f64, f64)> = roots
        .par_iter()
        .map(|&r| {
            let k0 = tree.cubes[r].level;
            let mut low = 0.0;
            for &x in &tree.cubes[r].members {
                let count = (k0..=tree.k_max).filter(|&k| bad[tree.cube_of(x, k)]).count();
                if count <= count_bound {
                    low += space.weight(x);
                }
            }
            let packed: f64 = tree.descendants(r).iter().filter(|&&q| bad[q]).map(|&q| masses[q]).sum();
            (low / masses[r], packed / masses[r])
        })
        .collect();
    let eta = per_root.iter().map(|p| p.0).fold(1.0, f64::min);
    let max_mass_ratio = per_root.iter().map(|p| p.1).fold(0.0, f64::max);
    let bound = if eta > 0.0 { count_bound.max(1) as f64 / eta } else { f64::INFINITY };
    Ok(JnsReport {
        eps,
        count_bound,
        eta,
        bound,
        max_mass_ratio,
        holds: max_mass_ratio <= bound * (1.0 + 1e-12),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{CoefficientKind, FieldEntry};
    use crate::cubes::CubeNode;
    use crate::metric::AmbientNorm;

    /// Exact binary tree over `2^depth` unit-weight points on a line.
    pub(crate) fn binary_tree(depth: u32) -> (CubeTree, MetricSpaceSample) {
        let npts = 1usize << depth;
        let h = 1.0 / npts as f64;
        let coords: Vec<f64> = (0..npts).map(|i| (i as f64 + 0.5) * h).collect();
        let space = MetricSpaceSample::from_coords(coords, 1, AmbientNorm::L2, vec![h; npts], 1).unwrap();
        let mut cubes = Vec::new();
        let mut prev: Vec<usize> = Vec::new();
        for k in 0..=depth {
            let count = 1usize << k;
            let width = npts / count;
            let mut cur = Vec::new();
            for j in 0..count {
                let id = cubes.len();
                cubes.push(CubeNode {
                    id,
                    level: k as i32,
                    center: j * width,
                    parent: if k == 0 { None } else { Some(prev[j / 2]) },
                    children: vec![],
                    members: (j * width..(j + 1) * width).collect(),
                });
                cur.push(id);
            }
            prev = cur;
        }
        (CubeTree::from_nodes(0.5, 0.1, 0, depth as i32, cubes).unwrap(), space)
    }

    pub(crate) fn constant_field(tree: &CubeTree, v: f64) -> CoefficientField {
        CoefficientField {
            kind: CoefficientKind::Osc,
            dilation: 1.0,
            entries: (0..tree.len())
                .map(|i| FieldEntry {
                    cube: i,
                    level: tree.cubes[i].level,
                    side: tree.side(i),
                    value: Some(v),
                    flag: None,
                    c: None,
                    norm: None,
                    plane: None,
                    residual: None,
                })
                .collect(),
        }
    }

    #[test]
    fn constant_fields_on_a_binary_tree() {
        let (tree, _) = binary_tree(5);
        let zero = constant_field(&tree, 0.0);
        assert_eq!(packing_sum(&tree, &zero, 0.1, 0, 1).unwrap(), 0.0);
        assert_eq!(strong_carleson_sum(&tree, &zero, 0, 1).unwrap(), 0.0);
        let one = constant_field(&tree, 1.0);
        assert!((packing_sum(&tree, &one, 0.1, 0, 1).unwrap() - 6.0).abs() < 1e-12);
        assert!((strong_carleson_sum(&tree, &one, 0, 1).unwrap() - 6.0).abs() < 1e-12);
        assert_eq!(packing_sum(&tree, &one, 1.5, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn report_profiles_and_verdicts() {
        let (tree, _) = binary_tree(6);
        let one = carleson_constant(&tree, &constant_field(&tree, 1.0), 0.1, 1).unwrap();
        assert!((one.sup - 7.0).abs() < 1e-12);
        assert_eq!(one.sup_root, Some(0));
        assert_eq!(one.verdict, "growing");
        assert!(one.roots.iter().all(|r| r.depth >= 3));
        let zero = carleson_constant(&tree, &constant_field(&tree, 0.0), 0.1, 1).unwrap();
        assert_eq!(zero.verdict, "flat");
        assert_eq!(zero.sup, 0.0);
    }

    #[test]
    fn single_cube_tree() {
        let (tree, _) = binary_tree(0);
        let r = carleson_constant(&tree, &constant_field(&tree, 1.0), 0.1, 1).unwrap();
        assert_eq!(r.sup, 1.0);
        assert!(!r.roots_restricted);
        assert_eq!(r.verdict, "inconclusive");
    }

    #[test]
    fn holes_are_reported() {
        let (tree, _) = binary_tree(3);
        let mut f = constant_field(&tree, 1.0);
        f.entries[4].value = None;
        f.entries.pop();
        match packing_sum(&tree, &f, 0.1, 0, 1) {
            Err(Error::Coverage(m)) => assert!(m.contains('4') && m.contains("2 cubes")),
            other => panic!("{other:?}"),
        }
        let mut g = constant_field(&tree, 1.0);
        for e in g.entries.iter_mut().filter(|e| e.level == 3) {
            e.value = None;
            e.flag = Some(format!("{OUT_OF_BAND}: below scale floor"));
        }
        assert!((packing_sum(&tree, &g, 0.1, 0, 1).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rtilde_trivial_and_single_child() {
        let (tree, space) = binary_tree(6);
        let all = vec![true; 64];
        let r = rtilde_check(&tree, &space, 0, &all, 0.1).unwrap();
        assert_eq!(r.members.len(), 64);
        assert!(r.pass);
        let r0 = rtilde_check(&tree, &space, 0, &all, 0.0).unwrap();
        assert_eq!(r0.members.len(), 64);
        // remove 4 of 64 points (under 0.1 of the mass) at the start of the left child
        let mut f = all.clone();
        for x in f.iter_mut().take(4) {
            *x = false;
        }
        let r = rtilde_check(&tree, &space, 0, &f, 0.1).unwrap();
        // cubes of 4, 8 and 16 points at the start lose more than 20% of their mass
        assert_eq!(r.members, (16..64).collect::<Vec<_>>());
        assert!(r.pass);
        let mut g = all;
        for x in g.iter_mut().take(10) {
            *x = false;
        }
        assert!(rtilde_check(&tree, &space, 0, &g, 0.1).is_err());
    }

    #[test]
    fn jns_bound_on_constant_fields() {
        let (tree, space) = binary_tree(5);
        let j = jns_audit(&tree, &space, &constant_field(&tree, 1.0), 0.1, 2).unwrap();
        // every point has six bad ancestors in the root
        assert_eq!(j.eta, 0.0);
        assert!(j.holds);
        let j = jns_audit(&tree, &space, &constant_field(&tree, 1.0), 0.1, 6).unwrap();
        assert_eq!(j.eta, 1.0);
        assert!((j.max_mass_ratio - 6.0).abs() < 1e-12);
        assert!(j.holds);
    }
}
