//! `Osc_E(x, r) = inf_c sup_{y, t} |H^n(B(y,t) ∩ E) - c t^n| / r^n` over a
//! deterministic net of centers and a geometric grid of radii.

use serde::{Deserialize, Serialize};

use super::norms::minimax_scale;
use crate::error::{domain, Result};
use crate::metric::MetricSpaceSample;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OscConfig {
    /// Number of net centers `y` in `B(x, r)`.
    pub centers: usize,
    /// Number of radii in the geometric grid.
    pub scales: usize,
    /// Radii stay above `t_floor_factor * spacing`.
    pub t_floor_factor: f64,
    /// Smallest admissible `r`, in units of the minimum spacing.
    pub floor_factor: f64,
}

impl Default for OscConfig {
    fn default() -> Self {
        Self {
            centers: 24,
            scales: 24,
            t_floor_factor: 1.0,
            floor_factor: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscSample {
    pub center: usize,
    pub t: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OscEvaluation {
    pub value: f64,
    /// Minimizing density constant.
    pub c: f64,
    pub r: f64,
    pub samples: Vec<OscSample>,
}

/// `min_c max |m - c t^n| / r^n` over the given samples.
pub fn osc_value(samples: &[OscSample], r: f64, n: usize) -> (f64, f64) {
    let m: Vec<f64> = samples.iter().map(|s| s.mass).collect();
    let b: Vec<f64> = samples.iter().map(|s| s.t.powi(n as i32)).collect();
    let (c, v) = minimax_scale(&m, &b);
    (v / r.powi(n as i32), c)
}

/// Farthest-point net of `members` starting at `x`, at most `k` points.
pub(crate) fn ball_net(space: &MetricSpaceSample, x: usize, members: &[usize], k: usize) -> Vec<usize> {
    let mut out = vec![x];
    let mut gap: Vec<f64> = members.iter().map(|&y| space.dist(x, y)).collect();
    while out.len() < k.max(1) {
        let (mut bi, mut bd) = (usize::MAX, 0.0);
        for (i, &g) in gap.iter().enumerate() {
            if g > bd {
                bd = g;
                bi = i;
            }
        }
        if bi == usize::MAX {
            break;
        }
        let y = members[bi];
        out.push(y);
        for (i, &z) in members.iter().enumerate() {
            gap[i] = gap[i].min(space.dist(y, z));
        }
    }
    out
}

/// Radii `r (t_floor / r)^{k / scales}` for `k = 0..scales`, all in `(t_floor, r]`.
pub fn radius_grid(r: f64, t_floor: f64, scales: usize) -> Vec<f64> {
    if !(t_floor < r) || scales <= 1 {
        return vec![r];
    }
    let q = t_floor / r;
    (0..scales).map(|k| r * q.powf(k as f64 / scales as f64)).collect()
}

/// Samples `(y, t, mass(B(y,t) ∩ E))` with `y` in a net of `B(x, r)`.
pub fn osc_samples(
    space: &MetricSpaceSample,
    x: usize,
    r: f64,
    mask: Option<&[bool]>,
    cfg: &OscConfig,
) -> Result<Vec<OscSample>> {
    space.check_index(x)?;
    if let Some(m) = mask {
        if m.len() != space.len() {
            return domain("mask length must match the space");
        }
    }
    let spacing = space.min_spacing();
    let spacing = if spacing.is_finite() { spacing } else { 0.0 };
    if !(r > 0.0) || r < cfg.floor_factor * spacing {
        return domain(format!(
            "degenerate scale: r = {r} is below {} x spacing {spacing}",
            cfg.floor_factor
        ));
    }
    let near = space.ball_members(x, 2.0 * r)?;
    let ball: Vec<usize> = near.iter().copied().filter(|&y| space.dist(x, y) <= r).collect();
    let centers = ball_net(space, x, &ball, cfg.centers);
    let radii = radius_grid(r, cfg.t_floor_factor * spacing, cfg.scales);
    let mut out = Vec::with_capacity(centers.len() * radii.len());
    let mut rows: Vec<(f64, f64)> = Vec::with_capacity(near.len());
    for &y in &centers {
        rows.clear();
        for &z in &near {
            let w = match mask {
                Some(m) if !m[z] => 0.0,
                _ => space.weight(z),
            };
            rows.push((space.dist(y, z), w));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cum = Vec::with_capacity(rows.len());
        let mut acc = 0.0;
        for &(_, w) in &rows {
            acc += w;
            cum.push(acc);
        }
        for &t in &radii {
            let k = rows.partition_point(|p| p.0 <= t);
            let mass = if k == 0 { 0.0 } else { cum[k - 1] };
            out.push(OscSample { center: y, t, mass });
        }
    }
    Ok(out)
}

/// `Osc_E(x, r)` (`mask = None` for `E = X`).
pub fn osc_coefficient(
    space: &MetricSpaceSample,
    x: usize,
    r: f64,
    mask: Option<&[bool]>,
    cfg: &OscConfig,
) -> Result<OscEvaluation> {
    let samples = osc_samples(space, x, r, mask, cfg)?;
    let (value, c) = osc_value(&samples, r, space.dim_n());
    Ok(OscEvaluation { value, c, r, samples })
}
