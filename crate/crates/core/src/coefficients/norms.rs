//! Norm dictionary on `R^n`, minimax scaling, coarse metric derivatives
//! `md_f` and the Jacobian `𝒥(s)` of a seminorm.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dyadic::{unit_ball_volume, Cube};
use crate::error::{domain, Error, Result};
use crate::generators::Chart;
use crate::metric::MetricSpaceSample;

/// `ℓ_p` exponents searched by the dictionary.
pub const LP_DICTIONARY: [f64; 5] = [1.0, 1.5, 2.0, 3.0, f64::INFINITY];

/// A norm on `R^n`: a scaled `ℓ_p` norm or `x -> |A x|_2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NormModel {
    Lp { n: usize, p: f64, scale: f64 },
    Matrix { n: usize, a: Vec<f64> },
}

pub fn lp(v: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    } else if p == 2.0 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    } else if p == 1.0 {
        v.iter().map(|x| x.abs()).sum()
    } else {
        v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

impl NormModel {
    pub fn euclidean(n: usize) -> Self {
        NormModel::Lp { n, p: 2.0, scale: 1.0 }
    }

    pub fn matrix(n: usize, a: Vec<f64>) -> Result<Self> {
        if a.len() != n * n {
            return domain("matrix norm needs an n x n matrix");
        }
        let m = DMatrix::from_row_slice(n, n, &a);
        let det = m.determinant();
        if !(det.abs() > 1e-14 * m.norm().powi(n as i32).max(f64::MIN_POSITIVE)) {
            return domain("matrix norm needs an invertible matrix");
        }
        Ok(NormModel::Matrix { n, a })
    }

    pub fn n(&self) -> usize {
        match self {
            NormModel::Lp { n, .. } | NormModel::Matrix { n, .. } => *n,
        }
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        match self {
            NormModel::Lp { p, scale, .. } => scale * lp(v, *p),
            NormModel::Matrix { n, a } => {
                let mut s = 0.0;
                for i in 0..*n {
                    let row: f64 = (0..*n).map(|j| a[i * n + j] * v[j]).sum();
                    s += row * row;
                }
                s.sqrt()
            }
        }
    }

    pub fn tag(&self) -> String {
        match self {
            NormModel::Lp { p, scale, .. } if p.is_infinite() => format!("linf*{scale:.6}"),
            NormModel::Lp { p, scale, .. } => format!("l{p}*{scale:.6}"),
            NormModel::Matrix { .. } => "matrix".into(),
        }
    }

    /// Bi-Lipschitz constant against the Euclidean norm, measured on sampled
    /// unit directions (exact in the limit of the sampling).
    pub fn lipschitz_bound(&self) -> f64 {
        let mut worst: f64 = 1.0;
        for u in sphere_directions(self.n(), 64) {
            let v = self.eval(&u);
            worst = worst.max(v).max(1.0 / v);
        }
        worst
    }

    /// Half-width of a coordinate box containing the unit ball, with margin.
    pub fn coordinate_reach(&self) -> f64 {
        let mut reach: f64 = 0.0;
        for u in sphere_directions(self.n(), 256) {
            let inf = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            reach = reach.max(inf / self.eval(&u));
        }
        1.05 * reach
    }

    pub fn jacobian(&self) -> Result<f64> {
        jacobian_of_seminorm(&|x: &[f64]| self.eval(x), self.n(), 256)
    }
}

/// Deterministic unit directions: all of them for `n = 1`, a circle for
/// `n = 2`, a latitude/longitude net otherwise.
fn sphere_directions(n: usize, k: usize) -> Vec<Vec<f64>> {
    match n {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..k)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / k as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => {
            let mut out = Vec::new();
            for a in 0..n {
                for b in (a + 1)..n {
                    for i in 0..k {
                        let t = 2.0 * PI * i as f64 / k as f64;
                        let mut v = vec![0.0; n];
                        v[a] = t.cos();
                        v[b] = t.sin();
                        out.push(v);
                    }
                }
            }
            let diag = vec![1.0 / (n as f64).sqrt(); n];
            out.push(diag);
            out
        }
    }
}

/// Exact minimizer over `c >= 0` of `max_i |m_i - c b_i|` (all `b_i >= 0`).
pub fn minimax_scale(m: &[f64], b: &[f64]) -> (f64, f64) {
    let eval = |c: f64| m.iter().zip(b).fold(0.0f64, |acc, (mi, bi)| acc.max((mi - c * bi).abs()));
    if m.is_empty() {
        return (0.0, 0.0);
    }
    // U(c) = max(m - c b) decreases, V(c) = max(c b - m) increases.
    let gap = |c: f64| {
        let mut u = f64::NEG_INFINITY;
        let mut v = f64::NEG_INFINITY;
        for (mi, bi) in m.iter().zip(b) {
            u = u.max(mi - c * bi);
            v = v.max(c * bi - mi);
        }
        u - v
    };
    if gap(0.0) <= 0.0 || b.iter().all(|&x| x <= 0.0) {
        return (0.0, eval(0.0));
    }
    let mut hi = 1.0;
    let bmin = b.iter().cloned().filter(|&x| x > 0.0).fold(f64::INFINITY, f64::min);
    let mmax = m.iter().cloned().fold(0.0, f64::max);
    hi = f64::max(hi, 4.0 * mmax / bmin);
    while gap(hi) > 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gap(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Polish: the optimum is where an active decreasing and an active
    // increasing line cross.
    let c = 0.5 * (lo + hi);
    let (mut iu, mut iv) = (0, 0);
    let (mut bu, mut bv) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (i, (mi, bi)) in m.iter().zip(b).enumerate() {
        if mi - c * bi > bu {
            bu = mi - c * bi;
            iu = i;
        }
        if c * bi - mi > bv {
            bv = c * bi - mi;
            iv = i;
        }
    }
    let mut best = (c, eval(c));
    let denom = b[iu] + b[iv];
    if denom > 0.0 {
        let cx = ((m[iu] + m[iv]) / denom).max(0.0);
        let vx = eval(cx);
        if vx < best.1 {
            best = (cx, vx);
        }
    }
    best
}

/// `argmin_{c >= 0} max_i |m_i - c t_i^n|` and its value.
pub fn minimax_constant(samples: &[(f64, f64)], n: usize) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return domain("minimax needs at least one sample");
    }
    if samples.iter().any(|s| !(s.1 > 0.0)) {
        return domain("scales must be positive");
    }
    let m: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let b: Vec<f64> = samples.iter().map(|s| s.1.powi(n as i32)).collect();
    Ok(minimax_scale(&m, &b))
}

/// Best norm for a list of `(u - v, d(g(u), g(v)))` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdFit {
    /// `max |d - ‖Δ‖| / ℓ(Q)`.
    pub value: f64,
    /// `max |d - ‖Δ‖|`.
    pub residual: f64,
    pub norm: NormModel,
    pub pairs: usize,
}

fn max_residual(pairs: &[(Vec<f64>, f64)], norm: &dyn Fn(&[f64]) -> f64) -> f64 {
    pairs.iter().fold(0.0, |m, (dv, d)| m.max((d - norm(dv)).abs()))
}

/// Searches the dictionary (scaled `ℓ_p` norms and a least-squares matrix
/// norm refined by coordinate descent) for the best uniform fit.
pub fn md_fit(pairs: &[(Vec<f64>, f64)], side: f64) -> Result<MdFit> {
    if pairs.is_empty() {
        return domain("md needs at least two samples");
    }
    if !(side > 0.0) {
        return domain("cube side must be positive");
    }
    let n = pairs[0].0.len();
    let dists: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut best: Option<(f64, NormModel)> = None;
    let mut consider = |res: f64, model: NormModel| {
        if best.as_ref().is_none_or(|b| res < b.0) {
            best = Some((res, model));
        }
    };
    for p in LP_DICTIONARY {
        if n == 1 && p != 2.0 {
            continue;
        }
        let b: Vec<f64> = pairs.iter().map(|(dv, _)| lp(dv, p)).collect();
        let (s, res) = minimax_scale(&dists, &b);
        if s > 0.0 {
            consider(res, NormModel::Lp { n, p, scale: s });
        }
    }
    if n >= 2 {
        if let Some((res, a)) = matrix_fit(pairs, n) {
            consider(res, NormModel::Matrix { n, a });
        }
    }
    let (res, norm) = best.ok_or_else(|| Error::Numeric("no norm in the dictionary fits the samples".into()))?;
    Ok(MdFit {
        value: res / side,
        residual: res,
        norm,
        pairs: pairs.len(),
    })
}

fn matrix_fit(pairs: &[(Vec<f64>, f64)], n: usize) -> Option<(f64, Vec<f64>)> {
    // d^2 ≈ Δ^T M Δ, M symmetric: n(n+1)/2 unknowns.
    let k = n * (n + 1) / 2;
    let mut ata = DMatrix::<f64>::zeros(k, k);
    let mut atb = DVector::<f64>::zeros(k);
    let mut row = vec![0.0; k];
    for (dv, d) in pairs {
        let mut t = 0;
        for a in 0..n {
            for b in a..n {
                row[t] = if a == b { dv[a] * dv[a] } else { 2.0 * dv[a] * dv[b] };
                t += 1;
            }
        }
        for i in 0..k {
            atb[i] += row[i] * d * d;
            for j in 0..k {
                ata[(i, j)] += row[i] * row[j];
            }
        }
    }
    let sol = ata.svd(true, true).solve(&atb, 1e-14).ok()?;
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut t = 0;
    for a in 0..n {
        for b in a..n {
            m[(a, b)] = sol[t];
            m[(b, a)] = sol[t];
            t += 1;
        }
    }
    let eig = SymmetricEigen::new(m);
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if !(top > 0.0) {
        return None;
    }
    let clamped = eig.eigenvalues.map(|l| l.max(1e-8 * top).sqrt());
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    let mut a: Vec<f64> = (0..n * n).map(|i| root[(i / n, i % n)]).collect();

    let eval = |a: &[f64]| {
        max_residual(pairs, &|v: &[f64]| {
            let mut s = 0.0;
            for i in 0..n {
                let r: f64 = (0..n).map(|j| a[i * n + j] * v[j]).sum();
                s += r * r;
            }
            s.sqrt()
        })
    };
    let mut cur = eval(&a);
    let mut step = 0.05 * top.sqrt();
    let floor = 1e-7 * top.sqrt();
    let mut sweeps = 0;
    while step > floor && sweeps < 200 {
        sweeps += 1;
        let mut improved = false;
        for e in 0..n * n {
            for sgn in [1.0, -1.0] {
                let old = a[e];
                a[e] = old + sgn * step;
                let v = eval(&a);
                if v < cur {
                    cur = v;
                    improved = true;
                    break;
                }
                a[e] = old;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Some((cur, a))
}

/// Pairs of chart samples inside `cube` (evenly thinned to at most
/// `max_samples` points), with parameter differences and image distances.
pub fn chart_pairs(chart: &Chart, space: &MetricSpaceSample, cube: &Cube, max_samples: usize) -> Vec<(Vec<f64>, f64)> {
    let idx = thin(chart.samples_in(cube), max_samples);
    let mut out = Vec::with_capacity(idx.len() * idx.len().saturating_sub(1) / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            out.push((chart.param_diff(i, j), space.dist(i, j)));
        }
    }
    out
}

/// Keeps at most `k` entries, evenly spaced, always including the first.
pub(crate) fn thin(v: Vec<usize>, k: usize) -> Vec<usize> {
    if v.len() <= k || k == 0 {
        return v;
    }
    let step = v.len() as f64 / k as f64;
    (0..k).map(|i| v[(i as f64 * step) as usize]).collect()
}

/// `md_g(Q)` for the chart `g` on the parameter cube `cube`.
pub fn md_coefficient(chart: &Chart, space: &MetricSpaceSample, cube: &Cube, max_samples: usize) -> Result<MdFit> {
    if cube.n() != chart.n() {
        return domain("cube dimension does not match the chart");
    }
    let pairs = chart_pairs(chart, space, cube, max_samples);
    if pairs.is_empty() {
        return domain("md needs at least two samples in the cube");
    }
    md_fit(&pairs, cube.side)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(k: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let mut x = (PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=k {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) as f64 * x * p2 - (j - 1) as f64 * p3) / j as f64;
            }
            dp = k as f64 * (x * p1 - p2) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn sphere_integral(s: &dyn Fn(&[f64]) -> f64, n: usize, order: usize) -> Option<f64> {
    // values this far below the largest one count as zero
    let tiny = 1e-12 * sphere_directions(n, 64).iter().map(|u| s(u)).fold(0.0, f64::max);
    let mut total = 0.0;
    let mut push = |v: f64, w: f64| -> bool {
        if !(v > tiny) {
            return false;
        }
        total += w * v.powi(-(n as i32));
        true
    };
    match n {
        1 => {
            if !push(s(&[1.0]), 1.0) || !push(s(&[-1.0]), 1.0) {
                return None;
            }
        }
        2 => {
            let h = 2.0 * PI / order as f64;
            for i in 0..order {
                let t = i as f64 * h;
                if !push(s(&[t.cos(), t.sin()]), h) {
                    return None;
                }
            }
        }
        3 => {
            let h = 2.0 * PI / order as f64;
            for (z, wz) in gauss_legendre(order / 2) {
                let rho = (1.0 - z * z).sqrt();
                for i in 0..order {
                    let t = i as f64 * h;
                    if !push(s(&[rho * t.cos(), rho * t.sin(), z]), wz * h) {
                        return None;
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    Some(total)
}

/// `𝒥(s) = α(n) n (∫_{S^{n-1}} s^{-n})^{-1}`, for `n <= 3`. A seminorm that
/// vanishes on a quadrature direction has Jacobian 0.
pub fn jacobian_of_seminorm(s: &dyn Fn(&[f64]) -> f64, n: usize, order: usize) -> Result<f64> {
    if n == 0 || n > 3 {
        return Err(Error::Unsupported(format!("Jacobian quadrature is implemented for n <= 3, got {n}")));
    }
    let order = order.max(16);
    let coarse = match sphere_integral(s, n, order) {
        Some(v) => v,
        None => return Ok(0.0),
    };
    let fine = match sphere_integral(s, n, 2 * order) {
        Some(v) => v,
        None => return Ok(0.0),
    };
    if !fine.is_finite() || (fine - coarse).abs() > 1e-4 * fine {
        return Err(Error::Numeric(format!(
            "sphere quadrature did not converge ({coarse} vs {fine})"
        )));
    }
    Ok(unit_ball_volume(n) * n as f64 / fine)
}
