//! Finitely many Christ-David systems such that every small ball sits deep
//! inside a cube of comparable size in one of them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_christ_david, build_nets_ordered, side_of, CubeTree, NetOrder};
use crate::error::{domain, Error, Result};
use crate::metric::MetricSpaceSample;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiresConfig {
    pub rho: f64,
    pub c0: f64,
    pub seed: u64,
    /// Number of random `(x, t)` pairs to cover.
    pub pairs: usize,
    pub max_trees: usize,
}

impl Default for MultiresConfig {
    fn default() -> Self {
        Self {
            rho: super::DEFAULT_RHO,
            c0: super::DEFAULT_C0,
            seed: 0,
            pairs: 1000,
            max_trees: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MultiresSystem {
    pub trees: Vec<CubeTree>,
    pub pairs: Vec<(usize, f64)>,
    /// `(tree, cube)` covering each pair.
    pub witness: Vec<(usize, usize)>,
    /// Empirical `max mass(B(x, 2t)) / mass(B(x, t))` over the pairs.
    pub doubling_estimate: f64,
    /// `C_d^ceil(log2(4/c0))`, the count the doubling argument allows.
    pub tree_bound: f64,
}

/// Random pairs with `x` uniform and `t` log-uniform in `[h/2, diam]`.
pub fn sample_pairs(space: &MetricSpaceSample, count: usize, seed: u64) -> Vec<(usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = space.len();
    let diam = space.diameter().max(f64::MIN_POSITIVE);
    let h = if space.min_spacing().is_finite() { space.min_spacing() } else { diam };
    let (lo, hi) = ((0.5 * h).ln(), diam.ln().max((0.5 * h).ln()));
    (0..count)
        .map(|_| (rng.gen_range(0..n), rng.gen_range(lo..=hi).exp()))
        .collect()
}

/// A cube `Q` of `tree` with `B(x, t) ∩ X ⊆ B(x_Q, c0 ℓ(Q)/2)` and
/// `t <= ℓ(Q) <= 5t/(rho c0)`, given the members of `B(x, t)`.
pub fn covering_cube(tree: &CubeTree, space: &MetricSpaceSample, x: usize, t: f64, ball: &[usize]) -> Option<usize> {
    let hi = 5.0 * t / (tree.rho * tree.c0);
    for k in tree.levels() {
        let l = side_of(tree.rho, k);
        if l < t || l > hi {
            continue;
        }
        let reach = 0.5 * tree.c0 * l;
        for &id in tree.level_cubes(k) {
            let c = tree.cubes[id].center;
            if space.dist(x, c) > reach {
                continue;
            }
            if ball.iter().all(|&y| space.dist(y, c) <= reach) {
                return Some(id);
            }
        }
    }
    None
}

fn level_range(space: &MetricSpaceSample, rho: f64, c0: f64, pairs: &[(usize, f64)]) -> (i32, i32) {
    let diam = space.diameter();
    let t_max = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
    let t_min = pairs.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let top = diam.max(2.0 * t_max / (5.0 * c0)).max(f64::MIN_POSITIVE);
    let k_min = (top.ln() / rho.ln()).floor() as i32;
    let h = space.min_spacing();
    let mut fine = (2.0 * t_min / (5.0 * c0)).max(f64::MIN_POSITIVE);
    if h.is_finite() && h > 0.0 {
        fine = fine.min(h);
    }
    let k_max = (fine.ln() / rho.ln()).floor() as i32 + 1;
    (k_min, k_max.max(k_min))
}

/// Iteratively adds trees until every pair is covered; each new tree offers
/// the points of still-uncovered pairs first (coarsest scale first), so it
/// covers at least one of them.
pub fn build_multires_systems(
    space: &MetricSpaceSample,
    cfg: &MultiresConfig,
    pairs: Option<Vec<(usize, f64)>>,
) -> Result<MultiresSystem> {
    if !(cfg.rho > 0.0 && cfg.rho < 1.0) {
        return domain("rho must lie in (0, 1)");
    }
    if space.is_empty() {
        return domain("empty space");
    }
    let pairs = pairs.unwrap_or_else(|| sample_pairs(space, cfg.pairs, cfg.seed));
    for &(x, t) in &pairs {
        space.check_index(x)?;
        if !(t > 0.0) {
            return domain("pair radii must be positive");
        }
    }
    let n = space.len();
    let (k_min, k_max) = if pairs.is_empty() {
        super::auto_levels(space, cfg.rho)
    } else {
        level_range(space, cfg.rho, cfg.c0, &pairs)
    };
    let balls: Vec<Vec<usize>> = pairs.iter().map(|&(x, t)| space.ball_members(x, t).unwrap()).collect();
    let mut doubling: f64 = 1.0;
    for &(x, t) in &pairs {
        let a = space.ball_mass(x, t)?;
        let b = space.ball_mass(x, 2.0 * t)?;
        doubling = doubling.max(b / a);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut trees: Vec<CubeTree> = Vec::new();
    let mut witness: Vec<Option<(usize, usize)>> = vec![None; pairs.len()];
    let mut first = true;
    loop {
        let open: Vec<usize> = (0..pairs.len()).filter(|&p| witness[p].is_none()).collect();
        if !first && open.is_empty() {
            break;
        }
        if trees.len() >= cfg.max_trees {
            return Err(Error::Construction(format!(
                "{} pairs still uncovered after {} trees",
                open.len(),
                trees.len()
            )));
        }
        let mut order: Vec<usize> = if first {
            vec![(cfg.seed % n as u64) as usize]
        } else {
            let mut o = open.clone();
            o.sort_by(|&a, &b| pairs[b].1.total_cmp(&pairs[a].1).then(a.cmp(&b)));
            o.into_iter().map(|p| pairs[p].0).collect()
        };
        let mut rest: Vec<usize> = (0..n).collect();
        rest.shuffle(&mut rng);
        order.extend(rest);
        let nets = build_nets_ordered(space, cfg.rho, k_min, k_max, &NetOrder::Priority(order))?;
        let tree = build_christ_david(space, &nets, cfg.c0)?;
        let ti = trees.len();
        let mut progress = false;
        for &p in &open {
            let (x, t) = pairs[p];
            if let Some(id) = covering_cube(&tree, space, x, t, &balls[p]) {
                witness[p] = Some((ti, id));
                progress = true;
            }
        }
        trees.push(tree);
        if !first && !progress {
            return Err(Error::Construction("a new tree covered no open pair".into()));
        }
        first = false;
        if pairs.is_empty() {
            break;
        }
    }
    let exp = (4.0 / cfg.c0).log2().ceil();
    Ok(MultiresSystem {
        trees,
        witness: witness.into_iter().map(|w| w.expect("all covered")).collect(),
        pairs,
        doubling_estimate: doubling,
        tree_bound: doubling.powf(exp),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::AmbientNorm;

    #[test]
    fn single_point_needs_one_tree() {
        let s = MetricSpaceSample::from_coords(vec![0.0], 1, AmbientNorm::L2, vec![1.0], 1).unwrap();
        let sys = build_multires_systems(&s, &MultiresConfig::default(), Some(vec![(0, 0.1), (0, 3.0)])).unwrap();
        assert_eq!(sys.trees.len(), 1);
    }

    #[test]
    fn line_pairs_are_covered_within_the_bracket() {
        let n = 256;
        let c: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let s = MetricSpaceSample::from_coords(c, 1, AmbientNorm::L2, vec![1.0 / n as f64; n], 1).unwrap();
        let cfg = MultiresConfig {
            pairs: 300,
            ..Default::default()
        };
        let sys = build_multires_systems(&s, &cfg, None).unwrap();
        for (p, &(x, t)) in sys.pairs.iter().enumerate() {
            let (ti, id) = sys.witness[p];
            let tree = &sys.trees[ti];
            let l = tree.side(id);
            assert!(t <= l && l <= 5.0 * t / (tree.rho * tree.c0));
            let c = tree.cubes[id].center;
            for y in s.ball_members(x, t).unwrap() {
                assert!(s.dist(y, c) <= 0.5 * tree.c0 * l);
            }
        }
        assert!((sys.trees.len() as f64) <= sys.tree_bound);
    }
}
