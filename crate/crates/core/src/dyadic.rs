//! Axis-parallel cubes in R^n and the dyadic grid of a root cube.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Half-open cube `[corner, corner + side)^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub corner: Vec<f64>,
    pub side: f64,
}

impl Cube {
    pub fn new(corner: Vec<f64>, side: f64) -> Result<Self> {
        if corner.is_empty() {
            return domain("cube needs at least one coordinate");
        }
        if !(side > 0.0 && side.is_finite()) {
            return domain("cube side must be positive");
        }
        Ok(Self { corner, side })
    }

    pub fn unit(n: usize) -> Self {
        Self {
            corner: vec![0.0; n],
            side: 1.0,
        }
    }

    pub fn n(&self) -> usize {
        self.corner.len()
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.n() as i32)
    }

    pub fn center(&self) -> Vec<f64> {
        self.corner.iter().map(|c| c + 0.5 * self.side).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.corner)
            .all(|(xi, ci)| *xi >= *ci && *xi < ci + self.side)
    }

    /// Closed containment, used for points on the far faces of a root cube.
    pub fn contains_closed(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.corner)
            .all(|(xi, ci)| *xi >= *ci && *xi <= ci + self.side)
    }

    /// Concentric cube scaled by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Cube {
        let c = self.center();
        let s = self.side * lambda;
        Cube {
            corner: c.iter().map(|ci| ci - 0.5 * s).collect(),
            side: s,
        }
    }

    /// True when `x` lies in the closed concentric cube of side `lambda * side`.
    pub fn in_scaled_closed(&self, x: &[f64], lambda: f64) -> bool {
        let c = self.center();
        let half = 0.5 * lambda * self.side;
        x.iter().zip(&c).all(|(xi, ci)| (xi - ci).abs() <= half)
    }

    pub fn contains_cube(&self, other: &Cube) -> bool {
        other.corner.iter().zip(&self.corner).all(|(o, s)| {
            *o >= *s - 1e-12 * self.side && o + other.side <= s + self.side + 1e-12 * self.side
        })
    }
}

/// Dyadic grid of `2^{nJ}` cells of a root cube. Cell `i` has multi-index
/// `(i_0, ..., i_{n-1})` with the first axis varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicGrid {
    pub root: Cube,
    pub level: u32,
}

impl DyadicGrid {
    pub fn new(root: Cube, level: u32) -> Result<Self> {
        if (level as usize) * root.n() > 40 {
            return domain("grid too fine: more than 2^40 cells");
        }
        Ok(Self { root, level })
    }

    pub fn n(&self) -> usize {
        self.root.n()
    }

    pub fn per_axis(&self) -> usize {
        1usize << self.level
    }

    pub fn cell_count(&self) -> usize {
        1usize << (self.level as usize * self.n())
    }

    pub fn cell_side(&self) -> f64 {
        self.root.side / self.per_axis() as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_side().powi(self.n() as i32)
    }

    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let m = self.per_axis();
        let mut out = Vec::with_capacity(self.n());
        for _ in 0..self.n() {
            out.push(i % m);
            i /= m;
        }
        out
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let m = self.per_axis();
        idx.iter().rev().fold(0, |acc, &k| acc * m + k)
    }

    pub fn cell_center(&self, i: usize) -> Vec<f64> {
        let h = self.cell_side();
        self.multi_index(i)
            .iter()
            .zip(&self.root.corner)
            .map(|(&k, c)| c + (k as f64 + 0.5) * h)
            .collect()
    }

    pub fn cell_cube(&self, i: usize) -> Cube {
        let h = self.cell_side();
        Cube {
            corner: self
                .multi_index(i)
                .iter()
                .zip(&self.root.corner)
                .map(|(&k, c)| c + k as f64 * h)
                .collect(),
            side: h,
        }
    }

    /// Cell containing `x` (closed at the far faces of the root).
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if !self.root.contains_closed(x) {
            return None;
        }
        let m = self.per_axis();
        let h = self.cell_side();
        let idx: Vec<usize> = x
            .iter()
            .zip(&self.root.corner)
            .map(|(xi, c)| (((xi - c) / h).floor() as usize).min(m - 1))
            .collect();
        Some(self.flat_index(&idx))
    }

    /// Cells whose centers lie in `cube`.
    pub fn cells_in(&self, cube: &Cube) -> Vec<usize> {
        (0..self.cell_count())
            .filter(|&i| cube.contains(&self.cell_center(i)))
            .collect()
    }

    /// The level-`j` dyadic subcube with the given multi-index.
    pub fn subcube(&self, j: u32, idx: &[usize]) -> Cube {
        let s = self.root.side / (1u64 << j) as f64;
        Cube {
            corner: idx
                .iter()
                .zip(&self.root.corner)
                .map(|(&k, c)| c + k as f64 * s)
                .collect(),
            side: s,
        }
    }
}

/// Volume of the Euclidean unit ball in R^n.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(n - 2) * 2.0 * std::f64::consts::PI / n as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_and_multi_index_round_trip() {
        let g = DyadicGrid::new(Cube::unit(3), 2).unwrap();
        for i in 0..g.cell_count() {
            assert_eq!(g.flat_index(&g.multi_index(i)), i);
            assert_eq!(g.locate(&g.cell_center(i)), Some(i));
        }
    }

    #[test]
    fn unit_ball_volumes() {
        assert_eq!(unit_ball_volume(1), 2.0);
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-14);
    }

    #[test]
    fn far_face_points_are_located() {
        let g = DyadicGrid::new(Cube::unit(2), 3).unwrap();
        assert_eq!(g.locate(&[1.0, 1.0]), Some(g.cell_count() - 1));
        assert_eq!(g.locate(&[1.0 + 1e-9, 0.5]), None);
    }
}
