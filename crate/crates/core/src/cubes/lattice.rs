//! The `2^n` shifted dyadic lattices `D^e_j = D_j + (s_j/3) e`, `e ∈ {0,1}^n`.

use serde::{Deserialize, Serialize};

use super::CubeTree;
use crate::dyadic::Cube;
use crate::error::{domain, Error, Result};
use crate::generators::Chart;
use crate::metric::MetricSpaceSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftedLattice {
    pub root: Cube,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeCube {
    pub level: u32,
    pub shift: Vec<u8>,
    pub index: Vec<i64>,
    pub cube: Cube,
}

impl ShiftedLattice {
    pub fn new(root: Cube) -> Self {
        Self { root }
    }

    pub fn n(&self) -> usize {
        self.root.n()
    }

    pub fn side(&self, j: u32) -> f64 {
        self.root.side / 2f64.powi(j as i32)
    }

    /// Shift vectors in lexicographic order.
    pub fn shifts(&self) -> Vec<Vec<u8>> {
        let n = self.n();
        (0..1usize << n)
            .map(|b| (0..n).map(|i| ((b >> (n - 1 - i)) & 1) as u8).collect())
            .collect()
    }

    pub fn cube(&self, j: u32, shift: &[u8], index: &[i64]) -> LatticeCube {
        let s = self.side(j);
        let corner = (0..self.n())
            .map(|i| self.root.corner[i] + s * shift[i] as f64 / 3.0 + s * index[i] as f64)
            .collect();
        LatticeCube {
            level: j,
            shift: shift.to_vec(),
            index: index.to_vec(),
            cube: Cube { corner, side: s },
        }
    }

    /// The half-open level-`j` cube of family `shift` containing `x`.
    pub fn containing(&self, j: u32, shift: &[u8], x: &[f64]) -> LatticeCube {
        let s = self.side(j);
        let index: Vec<i64> = (0..self.n())
            .map(|i| ((x[i] - self.root.corner[i] - s * shift[i] as f64 / 3.0) / s).floor() as i64)
            .collect();
        self.cube(j, shift, &index)
    }

    /// A level-`j` cube `Q` with `x` in the closed central cube `(2/3)Q`;
    /// the first shift in lexicographic order wins.
    pub fn locate_shifted(&self, x: &[f64], j: u32) -> Result<LatticeCube> {
        if x.len() != self.n() {
            return domain("point dimension does not match the lattice");
        }
        if !self.root.contains_closed(x) {
            return domain("point lies outside the root cube");
        }
        for e in self.shifts() {
            let q = self.containing(j, &e, x);
            if q.cube.in_scaled_closed(x, 2.0 / 3.0) {
                return Ok(q);
            }
        }
        Err(Error::Numeric("no shifted cube has the point in its central two-thirds".into()))
    }

    /// All level-`j` cubes of family `shift` inside the closed root.
    pub fn family(&self, j: u32, shift: &[u8]) -> Vec<LatticeCube> {
        let per = 1i64 << j;
        let n = self.n();
        let lo: Vec<i64> = shift.iter().map(|&e| if e == 1 { -1 } else { 0 }).collect();
        let span = (per + 1) as usize;
        let mut out = Vec::new();
        let mut idx = vec![0usize; n];
        loop {
            let index: Vec<i64> = (0..n).map(|i| lo[i] + idx[i] as i64).collect();
            let q = self.cube(j, shift, &index);
            if self.root.contains_cube(&q.cube) {
                out.push(q);
            }
            let mut a = 0;
            while a < n {
                idx[a] += 1;
                if idx[a] < span {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
            if a == n {
                break;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LGoodCube {
    pub cube: LatticeCube,
    /// `ℓ(I_Q) / ℓ(Q)`.
    pub ratio: f64,
    /// Guaranteed bound `120 L` on the ratio.
    pub bound: f64,
    /// Points of `10 B_Q` (all have parameters inside `I_Q`).
    pub covered: Vec<usize>,
}

/// Smallest lattice cube (finest level, then lexicographic shift) inside the
/// root whose image under the chart covers the sampled points of `10 B_Q`.
pub fn find_l_good_cube(
    chart: &Chart,
    space: &MetricSpaceSample,
    tree: &CubeTree,
    q: usize,
    lattice: &ShiftedLattice,
) -> Result<LGoodCube> {
    if chart.period.is_some() {
        return Err(Error::Unsupported("L-good cubes need a non-periodic chart".into()));
    }
    if chart.params.len() != space.len() {
        return domain("chart samples do not match the space");
    }
    let node = &tree.cubes[q];
    let l = tree.side(q);
    let covered: Vec<usize> = (0..space.len())
        .filter(|&y| space.dist(y, node.center) <= 10.0 * l)
        .collect();
    let n = lattice.n();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for &y in &covered {
        for i in 0..n {
            lo[i] = lo[i].min(chart.params[y][i]);
            hi[i] = hi[i].max(chart.params[y][i]);
        }
    }
    let width = (0..n).map(|i| hi[i] - lo[i]).fold(0.0, f64::max);
    let mut j_start = if width > 0.0 {
        (lattice.root.side / width).log2().floor().max(0.0) as u32
    } else {
        chart.grid.level + 2
    };
    j_start = j_start.min(40);
    for j in (1..=j_start).rev() {
        for e in lattice.shifts() {
            let cand = lattice.containing(j, &e, &lo);
            if cand.cube.contains_closed(&hi) && lattice.root.contains_cube(&cand.cube) {
                return Ok(LGoodCube {
                    ratio: cand.cube.side / l,
                    bound: 120.0 * chart.lipschitz,
                    cube: cand,
                    covered,
                });
            }
        }
    }
    Err(Error::Domain(format!(
        "no lattice cube below the root scale covers 10 B_Q for cube {q}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_thirds_containment_on_random_points() {
        let lat = ShiftedLattice::new(Cube::unit(2));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let j = rng.gen_range(0..12);
            let q = lat.locate_shifted(&x, j).unwrap();
            assert!(q.cube.in_scaled_closed(&x, 2.0 / 3.0));
        }
    }

    #[test]
    fn dyadic_boundary_points_use_a_shifted_family() {
        let lat = ShiftedLattice::new(Cube::unit(1));
        for j in 1..8u32 {
            let s = lat.side(j);
            for k in 1..(1 << j) {
                let x = [k as f64 * s];
                let q = lat.locate_shifted(&x, j).unwrap();
                assert_eq!(q.shift, vec![1]);
                let c = q.cube.center();
                assert!((x[0] - c[0]).abs() < s / 3.0);
            }
        }
    }

    #[test]
    fn families_are_translates_of_the_grid() {
        let lat = ShiftedLattice::new(Cube::unit(2));
        let f = lat.family(2, &[0, 0]);
        assert_eq!(f.len(), 16);
        let g = lat.family(2, &[1, 0]);
        assert_eq!(g.len(), 12);
        for q in &g {
            let off = (q.cube.corner[0] / 0.25).fract();
            assert!((off - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_point_is_rejected() {
        let lat = ShiftedLattice::new(Cube::unit(1));
        assert!(lat.locate_shifted(&[1.5], 2).is_err());
    }
}
