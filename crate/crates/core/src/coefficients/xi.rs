//! `ξ(x, r) = ζ + η` for a map `φ: B(x, r) -> B_{‖·‖}(0, r)`: the additive
//! distortion `ζ` and the covering deficit `η`, minimized over dictionary norms.

use serde::{Deserialize, Serialize};

use super::norms::{md_fit, thin, NormModel, LP_DICTIONARY};
use crate::error::{domain, Error, Result};
use crate::generators::Chart;
use crate::metric::MetricSpaceSample;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct XiConfig {
    /// Ball points used for the distortion pairs.
    pub pair_points: usize,
    /// Grid points per axis for the covering deficit.
    pub grid: usize,
    pub floor_factor: f64,
}

impl Default for XiConfig {
    fn default() -> Self {
        Self {
            pair_points: 64,
            grid: 33,
            floor_factor: 20.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XiEvaluation {
    pub value: f64,
    pub zeta: f64,
    pub eta: f64,
    pub norm: NormModel,
}

fn pca_frame(space: &MetricSpaceSample, x: usize, ball: &[usize], n: usize) -> Result<Vec<Vec<f64>>> {
    let d = space.ambient_dim().unwrap_or(0);
    if d < n {
        return domain("ambient dimension is below n");
    }
    let xc = space.coord(x).unwrap();
    let mut cov = nalgebra::DMatrix::<f64>::zeros(d, d);
    for &y in ball {
        let c = space.coord(y).unwrap();
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += (c[a] - xc[a]) * (c[b] - xc[b]);
            }
        }
    }
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    Ok(order[..n]
        .iter()
        .map(|&k| {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            // deterministic orientation
            let lead = v.iter().copied().fold(0.0, |m: f64, x| if x.abs() > m.abs() { x } else { m });
            if lead < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect())
}

/// `ξ(x, r)`. With a chart `φ` is the parameter offset from `x`; otherwise it
/// is the orthogonal projection onto the principal `n`-plane at `x`. Points
/// that land outside `B_{‖·‖}(0, r)` are pulled radially onto its boundary.
pub fn xi_coefficient(
    space: &MetricSpaceSample,
    chart: Option<&Chart>,
    x: usize,
    r: f64,
    cfg: &XiConfig,
) -> Result<XiEvaluation> {
    space.check_index(x)?;
    let n = space.dim_n();
    if chart.is_none() && !space.has_coords() {
        return Err(Error::Unsupported("xi needs a chart or ambient coordinates".into()));
    }
    let spacing = space.min_spacing();
    let spacing = if spacing.is_finite() { spacing } else { 0.0 };
    if !(r > 0.0) || r < cfg.floor_factor * spacing {
        return domain(format!("degenerate scale: r = {r} is below {} x spacing {spacing}", cfg.floor_factor));
    }
    let ball = space.ball_members(x, r)?;
    let phi: Vec<Vec<f64>> = match chart {
        Some(c) => ball.iter().map(|&y| c.param_diff(y, x)).collect(),
        None => {
            let frame = pca_frame(space, x, &ball, n)?;
            let xc = space.coord(x).unwrap();
            ball.iter()
                .map(|&y| {
                    let c = space.coord(y).unwrap();
                    frame.iter().map(|v| v.iter().zip(c).zip(xc).map(|((a, b), o)| a * (b - o)).sum()).collect()
                })
                .collect()
        }
    };
    let pair_idx = thin((0..ball.len()).collect(), cfg.pair_points);
    let mut pairs = Vec::new();
    for (a, &i) in pair_idx.iter().enumerate() {
        for &j in &pair_idx[a + 1..] {
            let du: Vec<f64> = phi[i].iter().zip(&phi[j]).map(|(p, q)| p - q).collect();
            pairs.push((du, space.dist(ball[i], ball[j])));
        }
    }
    let mut candidates = Vec::new();
    if !pairs.is_empty() {
        candidates.push(md_fit(&pairs, r)?.norm);
    }
    let ps: &[f64] = if n == 1 { &[2.0] } else { &LP_DICTIONARY };
    for &p in ps {
        candidates.push(NormModel::Lp { n, p, scale: 1.0 });
    }
    let mut best: Option<XiEvaluation> = None;
    for norm in candidates {
        let e = xi_for_norm(space, &ball, &phi, &pair_idx, &norm, r, cfg);
        if best.as_ref().is_none_or(|b| e.value < b.value) {
            best = Some(e);
        }
    }
    Ok(best.unwrap())
}

fn xi_for_norm(
    space: &MetricSpaceSample,
    ball: &[usize],
    phi: &[Vec<f64>],
    pair_idx: &[usize],
    norm: &NormModel,
    r: f64,
    cfg: &XiConfig,
) -> XiEvaluation {
    let n = norm.n();
    let img: Vec<Vec<f64>> = phi
        .iter()
        .map(|u| {
            let m = norm.eval(u);
            if m > r {
                u.iter().map(|v| v * r / m).collect()
            } else {
                u.clone()
            }
        })
        .collect();
    let mut zeta: f64 = 0.0;
    for (a, &i) in pair_idx.iter().enumerate() {
        for &j in &pair_idx[a + 1..] {
            let du: Vec<f64> = img[i].iter().zip(&img[j]).map(|(p, q)| p - q).collect();
            zeta = zeta.max((space.dist(ball[i], ball[j]) - norm.eval(&du)).abs());
        }
    }
    // covering deficit over a grid of the normed ball
    let reach = r * norm.coordinate_reach();
    let g = cfg.grid.max(2);
    let mut eta: f64 = 0.0;
    let mut u = vec![0.0; n];
    for t in 0..g.pow(n as u32) {
        let mut rem = t;
        for c in u.iter_mut() {
            *c = -reach + 2.0 * reach * (rem % g) as f64 / (g - 1) as f64;
            rem /= g;
        }
        if norm.eval(&u) > r {
            continue;
        }
        let mut gap = f64::INFINITY;
        for p in &img {
            let du: Vec<f64> = u.iter().zip(p).map(|(a, b)| a - b).collect();
            gap = gap.min(norm.eval(&du));
        }
        eta = eta.max(gap);
    }
    XiEvaluation {
        value: (zeta + eta) / r,
        zeta: zeta / r,
        eta: eta / r,
        norm: norm.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{generate, GeneratorSpec};

    #[test]
    fn flat_segment_has_small_xi() {
        let g = generate(&GeneratorSpec::new("segment").dims(1, 2).spacing(1.0 / 4096.0)).unwrap();
        let e = xi_coefficient(&g.space, g.chart.as_ref(), 2048, 0.1, &XiConfig::default()).unwrap();
        assert!(e.zeta < 1e-9);
        assert!(e.eta < 0.01, "{e:?}");
    }

    #[test]
    fn circle_curvature_shows_and_fades() {
        let h = 2.0 * std::f64::consts::PI / 65536.0;
        let g = generate(&GeneratorSpec::new("circle").spacing(h)).unwrap();
        let mut last = f64::INFINITY;
        for &r in &[0.4, 0.2, 0.1] {
            let e = xi_coefficient(&g.space, g.chart.as_ref(), 0, r, &XiConfig::default()).unwrap();
            assert!(e.value >= 0.05 * r * r, "r = {r}: {e:?}");
            assert!(e.value < last);
            last = e.value;
        }
    }

    #[test]
    fn bare_metric_is_unsupported() {
        let s = MetricSpaceSample::from_matrix(vec![0.0, 1.0, 1.0, 0.0], vec![1.0, 1.0], 1).unwrap();
        assert!(matches!(
            xi_coefficient(&s, None, 0, 1.0, &XiConfig { floor_factor: 0.0, ..Default::default() }),
            Err(Error::Unsupported(_))
        ));
    }
}
