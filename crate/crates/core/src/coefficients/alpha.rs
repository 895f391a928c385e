//! Ambient alpha numbers: `dist_B(H^n|_E, c H^n_{‖·‖})` against a normed
//! `n`-plane inside the ambient space, divided by `r^{n+1}`.
//!
//! The plane measure is discretized on a lattice of cells of side `δ`
//! anchored at the plane origin, and the sample may be merged onto a net of
//! spacing `q`. Both moves change `∫ f` by at most `mass × displacement` for
//! 1-Lipschitz `f`, so the reported value is the LP optimum plus these two
//! error terms: an upper bound for the ambient alpha over the searched planes.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::norms::jacobian_of_seminorm;
use crate::error::{domain, Error, Result};
use crate::metric::{AmbientNorm, MetricSpaceSample};
use crate::transport::{Cost, SolveMode, TransportProblem};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AlphaConfig {
    /// Net spacing is `r / resolution` (curves).
    pub resolution: f64,
    /// Same for `n >= 2`.
    pub resolution_surface: f64,
    /// Rotations per generator on each side of the PCA plane.
    pub angle_steps: usize,
    /// Rotation angle per step, radians.
    pub angle_step: f64,
    /// Convex search iterations over `c`.
    pub c_iters: usize,
    /// Smallest admissible `r`, in units of the minimum spacing.
    pub floor_factor: f64,
}

impl Default for AlphaConfig {
    fn default() -> Self {
        Self {
            resolution: 256.0,
            resolution_surface: 24.0,
            angle_steps: 2,
            angle_step: 0.05,
            c_iters: 8,
            floor_factor: 20.0,
        }
    }
}

/// An affine `n`-plane `origin + span(basis)` with a Euclidean-orthonormal basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub origin: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
    /// Position in the search (0 is the PCA plane).
    pub id: usize,
}

impl Plane {
    fn point(&self, v: &[f64]) -> Vec<f64> {
        let mut p = self.origin.clone();
        for (k, b) in self.basis.iter().enumerate() {
            for (pi, bi) in p.iter_mut().zip(b) {
                *pi += v[k] * bi;
            }
        }
        p
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        self.basis
            .iter()
            .map(|b| b.iter().zip(x).zip(&self.origin).map(|((bi, xi), oi)| bi * (xi - oi)).sum())
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphaEvaluation {
    /// Certified value `(lp + quantization + quadrature) / r^{n+1}`.
    pub value: f64,
    pub lp_value: f64,
    pub quantization: f64,
    pub quadrature: f64,
    pub c: f64,
    pub plane: Option<Plane>,
    pub norm: String,
    pub lps: usize,
    pub nodes: usize,
    /// Plane cell side and merge scale used.
    pub delta: f64,
    pub q: f64,
}

impl AlphaEvaluation {
    fn empty() -> Self {
        Self {
            value: 0.0,
            lp_value: 0.0,
            quantization: 0.0,
            quadrature: 0.0,
            c: 0.0,
            plane: None,
            norm: String::new(),
            lps: 0,
            nodes: 0,
            delta: 0.0,
            q: 0.0,
        }
    }
}

/// The discretized `H^n|_E` restricted to the open ball.
#[derive(Debug, Clone)]
pub struct BallMeasure {
    pub center: Vec<f64>,
    pub r: f64,
    pub dim: usize,
    pub norm: AmbientNorm,
    pub coords: Vec<f64>,
    pub masses: Vec<f64>,
    /// `Σ w_i d(x_i, rep_i)` from merging onto the net.
    pub quantization: f64,
}

impl BallMeasure {
    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }
}

fn coords_of(space: &MetricSpaceSample) -> Result<(usize, AmbientNorm)> {
    match (space.has_coords(), space.ambient_dim(), space.ambient_norm()) {
        (true, Some(d), Some(norm)) => Ok((d, norm)),
        _ => Err(Error::Unsupported("alpha needs ambient coordinates".into())),
    }
}

/// Points of `E ∩ B(x, r)` (open ball), merged onto a grid of spacing `q`
/// when `q` exceeds the sample spacing. Each cell is represented by its
/// member nearest the cell's weighted centroid.
pub fn ball_measure(space: &MetricSpaceSample, x: usize, r: f64, mask: Option<&[bool]>, q: f64) -> Result<BallMeasure> {
    let (dim, norm) = coords_of(space)?;
    space.check_index(x)?;
    let center = space.coord(x).expect("coordinates").to_vec();
    let members: Vec<usize> = (0..space.len())
        .filter(|&i| mask.is_none_or(|m| m[i]) && space.weight(i) > 0.0 && space.dist(x, i) < r)
        .collect();
    let spacing = space.min_spacing();
    let mut coords = Vec::new();
    let mut masses = Vec::new();
    let mut quantization = 0.0;
    if !(q > spacing) {
        for &i in &members {
            coords.extend_from_slice(space.coord(i).unwrap());
            masses.push(space.weight(i));
        }
    } else {
        let mut groups: std::collections::BTreeMap<Vec<i64>, Vec<usize>> = Default::default();
        for &i in &members {
            let key: Vec<i64> = space.coord(i).unwrap().iter().map(|c| (c / q).floor() as i64).collect();
            groups.entry(key).or_default().push(i);
        }
        for g in groups.values() {
            let w: f64 = g.iter().map(|&i| space.weight(i)).sum();
            let mut cen = vec![0.0; dim];
            for &i in g {
                for (c, v) in cen.iter_mut().zip(space.coord(i).unwrap()) {
                    *c += space.weight(i) * v / w;
                }
            }
            let rep = *g
                .iter()
                .min_by(|&&a, &&b| {
                    norm.dist(space.coord(a).unwrap(), &cen)
                        .total_cmp(&norm.dist(space.coord(b).unwrap(), &cen))
                        .then(a.cmp(&b))
                })
                .unwrap();
            let rp = space.coord(rep).unwrap();
            for &i in g {
                quantization += space.weight(i) * norm.dist(space.coord(i).unwrap(), rp);
            }
            coords.extend_from_slice(rp);
            masses.push(w);
        }
    }
    Ok(BallMeasure {
        center,
        r,
        dim,
        norm,
        coords,
        masses,
        quantization,
    })
}

/// Weighted PCA plane of a ball measure and the remaining (normal) directions.
pub fn pca_plane(ball: &BallMeasure, n: usize) -> Result<(Plane, Vec<Vec<f64>>)> {
    let d = ball.dim;
    if n > d {
        return domain("intrinsic dimension exceeds the ambient dimension");
    }
    let total = ball.total();
    let mut mean = vec![0.0; d];
    for i in 0..ball.masses.len() {
        for (m, v) in mean.iter_mut().zip(ball.point(i)) {
            *m += ball.masses[i] * v / total;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for i in 0..ball.masses.len() {
        let p = ball.point(i);
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += ball.masses[i] * (p[a] - mean[a]) * (p[b] - mean[b]);
            }
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let vec_of = |k: usize| -> Vec<f64> {
        let v: Vec<f64> = (0..d).map(|a| eig.eigenvectors[(a, k)]).collect();
        // deterministic sign: first nonzero entry positive
        let s = v.iter().find(|x| x.abs() > 1e-12).map_or(1.0, |x| x.signum());
        v.iter().map(|x| x * s).collect()
    };
    let basis: Vec<Vec<f64>> = order[..n].iter().map(|&k| vec_of(k)).collect();
    let normals: Vec<Vec<f64>> = order[n..].iter().map(|&k| vec_of(k)).collect();
    Ok((
        Plane {
            origin: mean,
            basis,
            id: 0,
        },
        normals,
    ))
}

/// The PCA plane followed by rotations `±1..±steps` of each tangent
/// direction toward each normal direction.
pub fn plane_family(base: &Plane, normals: &[Vec<f64>], steps: usize, angle: f64) -> Vec<Plane> {
    let mut out = vec![base.clone()];
    for k in 0..base.basis.len() {
        for nv in normals {
            for s in 1..=steps {
                for sgn in [1.0, -1.0] {
                    let t = sgn * s as f64 * angle;
                    let mut p = base.clone();
                    p.basis[k] = base.basis[k].iter().zip(nv).map(|(u, w)| t.cos() * u + t.sin() * w).collect();
                    p.id = out.len();
                    out.push(p);
                }
            }
        }
    }
    out
}

/// Cells of side `delta` on a plane, lattice anchored at the plane origin.
#[derive(Debug, Clone)]
pub struct PlaneCells {
    pub coords: Vec<f64>,
    pub unit_mass: f64,
    /// Ambient radius of a cell around its center.
    pub radius: f64,
    /// `Σ unit_mass × radius` over cells meeting the ball.
    pub quadrature_unit: f64,
    pub jacobian: f64,
}

fn lattice_points(lo: &[i64], hi: &[i64]) -> Vec<Vec<i64>> {
    let n = lo.len();
    let mut out = Vec::new();
    let mut k = lo.to_vec();
    loop {
        out.push(k.clone());
        let mut a = 0;
        while a < n {
            k[a] += 1;
            if k[a] <= hi[a] {
                break;
            }
            k[a] = lo[a];
            a += 1;
        }
        if a == n {
            return out;
        }
    }
}

pub fn plane_cells(ball: &BallMeasure, plane: &Plane, delta: f64) -> Result<PlaneCells> {
    let n = plane.basis.len();
    let norm = ball.norm;
    let jac = jacobian_of_seminorm(&|v: &[f64]| norm.eval(&plane.point(v).iter().zip(&plane.origin).map(|(a, b)| a - b).collect::<Vec<_>>()), n, 256)?;
    let unit_mass = jac * delta.powi(n as i32);
    let mut radius: f64 = 0.0;
    for corner in lattice_points(&vec![0; n], &vec![1; n]) {
        let v: Vec<f64> = corner.iter().map(|&c| if c == 0 { -0.5 * delta } else { 0.5 * delta }).collect();
        let p = plane.point(&v);
        radius = radius.max(norm.dist(&p, &plane.origin));
    }
    // ambient norm >= kappa * Euclidean
    let kappa = match norm {
        AmbientNorm::L2 => 1.0,
        AmbientNorm::Linf => 1.0 / (ball.dim as f64).sqrt(),
    };
    let reach = (ball.r + radius) / kappa;
    let vx = plane.project(&ball.center);
    let lo: Vec<i64> = vx.iter().map(|v| ((v - reach) / delta).floor() as i64).collect();
    let hi: Vec<i64> = vx.iter().map(|v| ((v + reach) / delta).ceil() as i64).collect();
    let count: f64 = lo.iter().zip(&hi).map(|(a, b)| (b - a + 1) as f64).product();
    if count > 4e6 {
        return Err(Error::Numeric("plane quadrature grid too large".into()));
    }
    let mut coords = Vec::new();
    let mut touching = 0usize;
    for k in lattice_points(&lo, &hi) {
        let v: Vec<f64> = k.iter().map(|&a| a as f64 * delta).collect();
        let p = plane.point(&v);
        let dz = norm.dist(&p, &ball.center);
        if dz < ball.r + radius {
            touching += 1;
        }
        if dz < ball.r {
            coords.extend(p);
        }
    }
    Ok(PlaneCells {
        coords,
        unit_mass,
        radius,
        quadrature_unit: touching as f64 * unit_mass * radius,
        jacobian: jac,
    })
}

/// LP value of `dist_B(ball, c · cells)` and its derivative in `c`.
pub fn plane_lp(ball: &BallMeasure, cells: &PlaneCells, c: f64) -> Result<(f64, f64)> {
    let m = ball.masses.len();
    let k = cells.coords.len() / ball.dim;
    let mut coords = ball.coords.clone();
    coords.extend_from_slice(&cells.coords);
    let mut mu = ball.masses.clone();
    mu.resize(m + k, 0.0);
    let mut nu = vec![0.0; m];
    nu.resize(m + k, c * cells.unit_mass);
    let caps: Vec<f64> = (0..m + k)
        .map(|i| (ball.r - ball.norm.dist(&coords[i * ball.dim..(i + 1) * ball.dim], &ball.center)).max(0.0))
        .collect();
    let prob = TransportProblem::new(
        mu,
        nu,
        caps,
        Cost::Coords {
            dim: ball.dim,
            coords,
            norm: ball.norm,
        },
    )?;
    let sol = prob.solve_checked(SolveMode::default())?;
    let slope = -sol.potentials[m..].iter().sum::<f64>() * cells.unit_mass;
    Ok((sol.value, slope))
}

/// Minimizes a convex function of `c >= 0` given values and subgradients,
/// by bracketing and intersecting tangent lines.
pub fn convex_search(f: &mut dyn FnMut(f64) -> Result<(f64, f64)>, c0: f64, iters: usize) -> Result<(f64, f64, usize)> {
    let mut calls = 0;
    let mut eval = |c: f64, calls: &mut usize| -> Result<(f64, f64, f64)> {
        *calls += 1;
        let (v, s) = f(c)?;
        Ok((c, v, s))
    };
    let p0 = eval(c0.max(0.0), &mut calls)?;
    let mut best = (p0.0, p0.1);
    let upd = |best: &mut (f64, f64), p: (f64, f64, f64)| {
        if p.1 < best.1 {
            *best = (p.0, p.1);
        }
    };
    let (mut lo, mut hi);
    if p0.2 >= 0.0 {
        hi = p0;
        if p0.0 == 0.0 {
            return Ok((best.0, best.1, calls));
        }
        let z = eval(0.0, &mut calls)?;
        upd(&mut best, z);
        if z.2 >= 0.0 {
            return Ok((best.0, best.1, calls));
        }
        lo = z;
    } else {
        lo = p0;
        let mut c = 2.0 * p0.0.max(f64::MIN_POSITIVE);
        loop {
            let p = eval(c, &mut calls)?;
            upd(&mut best, p);
            if p.2 >= 0.0 {
                hi = p;
                break;
            }
            lo = p;
            if calls >= iters {
                return Ok((best.0, best.1, calls));
            }
            c *= 2.0;
        }
    }
    while calls < iters {
        let ds = lo.2 - hi.2;
        if ds >= 0.0 {
            break;
        }
        let c = (hi.1 - lo.1 + lo.2 * lo.0 - hi.2 * hi.0) / ds;
        let c = c.clamp(lo.0, hi.0);
        let lower = lo.1 + lo.2 * (c - lo.0);
        if best.1 - lower <= 1e-9 * best.1.abs().max(1e-300) {
            break;
        }
        let p = eval(c, &mut calls)?;
        upd(&mut best, p);
        if p.2 == 0.0 {
            break;
        }
        if p.2 < 0.0 {
            lo = p;
        } else {
            hi = p;
        }
    }
    Ok((best.0, best.1, calls))
}

/// Everything fixed except `c`: certified value and slope.
fn certified(ball: &BallMeasure, cells: &PlaneCells, c: f64) -> Result<(f64, f64)> {
    let (v, s) = plane_lp(ball, cells, c)?;
    Ok((v + ball.quantization + c * cells.quadrature_unit, s + cells.quadrature_unit))
}

/// Ambient `α_{E,X}(x, r)` (`mask = None` for `α_X`).
pub fn alpha_coefficient(
    space: &MetricSpaceSample,
    x: usize,
    r: f64,
    mask: Option<&[bool]>,
    cfg: &AlphaConfig,
) -> Result<AlphaEvaluation> {
    coords_of(space)?;
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
    let n = space.dim_n();
    let res = if n == 1 { cfg.resolution } else { cfg.resolution_surface };
    let q = r / res;
    let ball = ball_measure(space, x, r, mask, q)?;
    if ball.total() <= 0.0 {
        return Ok(AlphaEvaluation::empty());
    }
    let delta = q.max(spacing);
    let (base, normals) = pca_plane(&ball, n)?;
    let planes = plane_family(&base, &normals, cfg.angle_steps, cfg.angle_step);
    let norm_r = r.powi(n as i32 + 1);

    let cells0 = plane_cells(&ball, &planes[0], delta)?;
    let inside = (cells0.coords.len() / ball.dim) as f64 * cells0.unit_mass;
    let c_hat = if inside > 0.0 { ball.total() / inside } else { 1.0 };
    let mut lps = 0;
    let (c0, v0, k) = convex_search(&mut |c| certified(&ball, &cells0, c), c_hat, cfg.c_iters)?;
    lps += k;
    let mut best = (v0, c0, 0usize, cells0);
    for p in planes.iter().skip(1) {
        let cells = plane_cells(&ball, p, delta)?;
        let (v, _) = certified(&ball, &cells, best.1)?;
        lps += 1;
        if v < best.0 {
            best = (v, best.1, p.id, cells);
        }
    }
    if best.2 != 0 {
        let cells = best.3.clone();
        let (c, v, k) = convex_search(&mut |c| certified(&ball, &cells, c), best.1, cfg.c_iters.div_ceil(2))?;
        lps += k;
        if v < best.0 {
            best.0 = v;
            best.1 = c;
        }
    }
    let (value, c, id, cells) = best;
    let quad = c * cells.quadrature_unit;
    Ok(AlphaEvaluation {
        value: value / norm_r,
        lp_value: (value - ball.quantization - quad).max(0.0) / norm_r,
        quantization: ball.quantization / norm_r,
        quadrature: quad / norm_r,
        c,
        plane: Some(planes[id].clone()),
        norm: format!("ambient-{}", ball.norm.tag()),
        lps,
        nodes: ball.masses.len() + cells.coords.len() / ball.dim,
        delta,
        q,
    })
}

/// Certified alpha for a fixed plane, cell size and constant.
pub fn alpha_at(
    space: &MetricSpaceSample,
    x: usize,
    r: f64,
    mask: Option<&[bool]>,
    plane: &Plane,
    delta: f64,
    c: f64,
    q: f64,
) -> Result<AlphaEvaluation> {
    let ball = ball_measure(space, x, r, mask, q)?;
    let n = plane.basis.len();
    let norm_r = r.powi(n as i32 + 1);
    if ball.total() <= 0.0 {
        return Ok(AlphaEvaluation::empty());
    }
    let cells = plane_cells(&ball, plane, delta)?;
    let (lp, _) = plane_lp(&ball, &cells, c)?;
    let quad = c * cells.quadrature_unit;
    Ok(AlphaEvaluation {
        value: (lp + ball.quantization + quad) / norm_r,
        lp_value: lp / norm_r,
        quantization: ball.quantization / norm_r,
        quadrature: quad / norm_r,
        c,
        plane: Some(plane.clone()),
        norm: format!("ambient-{}", ball.norm.tag()),
        lps: 1,
        nodes: ball.masses.len() + cells.coords.len() / ball.dim,
        delta,
        q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn segment(len: f64, h: f64) -> MetricSpaceSample {
        let n = (len / h).round() as usize;
        let mut c = Vec::new();
        for i in 0..n {
            c.push((i as f64 + 0.5) * h);
            c.push(0.0);
        }
        MetricSpaceSample::from_coords(c, 2, AmbientNorm::L2, vec![h; n], 1).unwrap()
    }

    #[test]
    fn flat_segment_alpha_is_discretization_sized() {
        let h = 1.0 / 512.0;
        let s = segment(1.0, h);
        let r = 0.2;
        let a = alpha_coefficient(&s, 256, r, None, &AlphaConfig::default()).unwrap();
        assert!(a.value <= 3.0 * h / r, "alpha = {a:?}");
        assert!((a.c - 1.0).abs() < 0.05);
    }

    #[test]
    fn empty_ball_is_zero() {
        let s = segment(1.0, 1.0 / 256.0);
        let mask = vec![false; s.len()];
        let a = alpha_coefficient(&s, 100, 0.2, Some(&mask), &AlphaConfig::default()).unwrap();
        assert_eq!(a.value, 0.0);
    }

    #[test]
    fn convex_search_finds_the_kink() {
        let mut f = |c: f64| Ok(((c - 1.7).abs() + 0.5, if c < 1.7 { -1.0 } else { 1.0 }));
        let (c, v, _) = convex_search(&mut f, 0.4, 12).unwrap();
        assert!((c - 1.7).abs() < 1e-9 && (v - 0.5).abs() < 1e-9);
        let mut g = |c: f64| Ok((c + 2.0, 1.0));
        let (c, v, _) = convex_search(&mut g, 3.0, 12).unwrap();
        assert_eq!((c, v), (0.0, 2.0));
    }

    #[test]
    fn lp_value_is_monotone_under_ball_inclusion() {
        let h = 1.0 / 256.0;
        let mut c = Vec::new();
        for i in 0..256 {
            let t = (i as f64 + 0.5) * h;
            c.push(t);
            c.push(0.1 * (6.0 * t).sin());
        }
        let s = MetricSpaceSample::from_coords(c, 2, AmbientNorm::L2, vec![h; 256], 1).unwrap();
        let big = ball_measure(&s, 128, 0.3, None, 0.0).unwrap();
        let (plane, _) = pca_plane(&big, 1).unwrap();
        for &(y, t) in &[(128usize, 0.1), (150, 0.12), (110, 0.05)] {
            let a_big = alpha_at(&s, 128, 0.3, None, &plane, h, 1.0, 0.0).unwrap().lp_value;
            let a_small = alpha_at(&s, y, t, None, &plane, h, 1.0, 0.0).unwrap().lp_value;
            assert!(s.dist(128, y) + t <= 0.3);
            assert!(a_small <= (0.3f64 / t).powi(2) * a_big + 1e-12);
        }
    }
}
