//! Cube-adapted alpha numbers on a chart `g`: the glued space
//! `(X ∪ Σ) ⊔ R^n` with metric `ζ_I`, the density `c_{P,I}`, the metric
//! Jacobian field `𝒥_g` and the Haar wavelet term of the bi-Lipschitz
//! alpha estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::norms::{md_fit, thin, NormModel};
use crate::dyadic::{Cube, DyadicGrid};
use crate::error::{domain, Error, Result};
use crate::generators::Chart;
use crate::haar::GridFunction;
use crate::metric::MetricSpaceSample;
use crate::transport::{tilde_dist, Cost};

/// `𝒥_g` per cell of a grid over the chart domain, with the area-formula
/// mass check `Σ 𝒥_g vol(cell)` against the sampled `H^n` mass.
#[derive(Debug, Clone)]
pub struct JacobianField {
    pub field: GridFunction,
    pub predicted_mass: f64,
    pub measured_mass: f64,
}

impl JacobianField {
    pub fn relative_mass_error(&self) -> f64 {
        (self.predicted_mass - self.measured_mass).abs() / self.measured_mass.max(f64::MIN_POSITIVE)
    }
}

fn bucket_samples(chart: &Chart, grid: &DyadicGrid) -> Vec<Vec<usize>> {
    let mut buckets = vec![Vec::new(); grid.cell_count()];
    for (i, u) in chart.params.iter().enumerate() {
        if let Some(c) = grid.locate(u) {
            buckets[c].push(i);
        }
    }
    buckets
}

/// `𝒥_g` on the cells of level `level` over the chart domain, each from the
/// best dictionary norm for the samples in the 3x neighbourhood of the cell.
pub fn metric_jacobian_field(chart: &Chart, space: &MetricSpaceSample, level: u32) -> Result<JacobianField> {
    if chart.params.len() != space.len() {
        return domain("chart samples do not match the space");
    }
    if level > chart.grid.level {
        return domain("field level is finer than the chart samples");
    }
    let grid = DyadicGrid::new(chart.grid.root.clone(), level)?;
    let buckets = bucket_samples(chart, &grid);
    let m = grid.per_axis() as i64;
    let n = grid.n();
    let mut values = Vec::with_capacity(grid.cell_count());
    for cell in 0..grid.cell_count() {
        let mi = grid.multi_index(cell);
        let mut pts = Vec::new();
        for off in 0..3usize.pow(n as u32) {
            let mut rem = off;
            let mut idx = Vec::with_capacity(n);
            let mut ok = true;
            for &k in &mi {
                let d = (rem % 3) as i64 - 1;
                rem /= 3;
                let mut v = k as i64 + d;
                if chart.period.is_some() {
                    v = v.rem_euclid(m);
                } else if v < 0 || v >= m {
                    ok = false;
                }
                idx.push(v as usize);
            }
            if ok {
                pts.extend_from_slice(&buckets[grid.flat_index(&idx)]);
            }
        }
        pts.sort_unstable();
        let pts = thin(pts, 24);
        let mut pairs = Vec::new();
        for (a, &i) in pts.iter().enumerate() {
            for &j in &pts[a + 1..] {
                let d = space.dist(i, j);
                let du = chart.param_diff(i, j);
                if d == 0.0 && du.iter().any(|x| *x != 0.0) {
                    return Err(Error::Domain(format!("chart is not injective: samples {i} and {j} coincide")));
                }
                pairs.push((du, d));
            }
        }
        if pairs.is_empty() {
            return Err(Error::Numeric(format!("cell {cell} has fewer than two samples nearby")));
        }
        let fit = md_fit(&pairs, grid.cell_side())?;
        values.push(fit.norm.jacobian()?);
    }
    let field = GridFunction::new(grid, values)?;
    let predicted = field.values.iter().sum::<f64>() * field.grid.cell_volume();
    Ok(JacobianField {
        field,
        predicted_mass: predicted,
        measured_mass: space.total_mass(),
    })
}

/// Finite sample of `(X ∪ Σ) ⊔ R^n` with the glued metric: `d` on the space
/// side, `‖·‖_I` on the parameter side, and across
/// `ζ(u, y) = min_s ‖u - u_s‖_I + penalty + d(g(u_s), y)`.
#[derive(Debug, Clone)]
pub struct GluedSpace {
    /// Space-side nodes (indices into the sample).
    pub space_nodes: Vec<usize>,
    /// Parameter-side nodes.
    pub cells: Vec<Vec<f64>>,
    pub norm: NormModel,
    /// `2 md_g(I) ℓ(I)`.
    pub penalty: f64,
    len: usize,
    matrix: Vec<f64>,
}

impl GluedSpace {
    pub fn build(
        space: &MetricSpaceSample,
        chart: &Chart,
        space_nodes: Vec<usize>,
        cells: Vec<Vec<f64>>,
        norm: NormModel,
        penalty: f64,
    ) -> Self {
        let m = space_nodes.len();
        let k = cells.len();
        let len = m + k;
        let mut matrix = vec![0.0; len * len];
        for a in 0..m {
            for b in (a + 1)..m {
                let d = space.dist(space_nodes[a], space_nodes[b]);
                matrix[a * len + b] = d;
                matrix[b * len + a] = d;
            }
        }
        let diff = |u: &[f64], v: &[f64]| -> Vec<f64> {
            let mut w: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
            if let Some(p) = chart.period {
                for x in &mut w {
                    *x -= p * (*x / p).round();
                }
            }
            w
        };
        for a in 0..k {
            for b in (a + 1)..k {
                let d = norm.eval(&diff(&cells[a], &cells[b]));
                matrix[(m + a) * len + m + b] = d;
                matrix[(m + b) * len + m + a] = d;
            }
        }
        // cross block: min-plus product of (cell -> anchor) and (anchor -> node)
        let to_anchor: Vec<Vec<f64>> = cells
            .iter()
            .map(|u| space_nodes.iter().map(|&s| norm.eval(&diff(u, &chart.params[s]))).collect())
            .collect();
        for (c, row) in to_anchor.iter().enumerate() {
            for t in 0..m {
                let mut best = f64::INFINITY;
                for s in 0..m {
                    let v = row[s] + matrix[s * len + t];
                    if v < best {
                        best = v;
                    }
                }
                let d = best + penalty;
                matrix[(m + c) * len + t] = d;
                matrix[t * len + m + c] = d;
            }
        }
        Self {
            space_nodes,
            cells,
            norm,
            penalty,
            len,
            matrix,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.len + j]
    }

    pub fn cost(&self) -> Cost {
        Cost::Matrix {
            len: self.len,
            data: self.matrix.clone(),
        }
    }

    /// Triangle inequality on all triples (small spaces) or `samples` random
    /// triples; returns the first violation.
    pub fn triangle_audit(&self, samples: usize, seed: u64) -> Option<String> {
        let n = self.len;
        let tol = 1e-9 * self.matrix.iter().cloned().fold(1.0, f64::max);
        let check = |i: usize, j: usize, k: usize| -> Option<String> {
            let lhs = self.dist(i, j);
            let rhs = self.dist(i, k) + self.dist(k, j);
            (lhs > rhs + tol).then(|| format!("ζ({i},{j}) = {lhs} > ζ({i},{k}) + ζ({k},{j}) = {rhs}"))
        };
        if n.pow(3) <= samples {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        if let Some(e) = check(i, j, k) {
                            return Some(e);
                        }
                    }
                }
            }
            return None;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let (i, j, k) = (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n));
            if let Some(e) = check(i, j, k) {
                return Some(e);
            }
        }
        None
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TildeConfig {
    /// Net and quadrature spacing is `ℓ(I) / resolution` (curves).
    pub resolution: f64,
    pub resolution_surface: f64,
    /// Samples used to fit `‖·‖_I`.
    pub md_samples: usize,
    pub audit_triples: usize,
}

impl Default for TildeConfig {
    fn default() -> Self {
        Self {
            resolution: 128.0,
            resolution_surface: 16.0,
            md_samples: 64,
            audit_triples: 20_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TildeEvaluation {
    /// Certified `α̃_E(I)`.
    pub value: f64,
    pub lp_value: f64,
    pub quantization: f64,
    pub quadrature: f64,
    /// `md_g(I)` with the fitted norm, over the fit sample and all net points.
    pub md: f64,
    pub norm: NormModel,
    /// `c_{P,I} = h_I ⨍_I 𝒥_g χ_P`.
    pub c: f64,
    pub nodes: usize,
}

/// Value of `field` at parameter `u` (nearest cell, clamped to the domain).
fn field_at(field: &GridFunction, u: &[f64]) -> f64 {
    let g = &field.grid;
    let m = g.per_axis();
    let idx: Vec<usize> = u
        .iter()
        .zip(&g.root.corner)
        .map(|(x, c)| (((x - c) / g.cell_side()).floor().max(0.0) as usize).min(m - 1))
        .collect();
    field.values[g.flat_index(&idx)]
}

/// `(1/ℓ(I)^{n+1}) ~dist(H^n|_{g(I) ∩ E}, c_{P,I} H^n_{‖·‖_I}|_I)` in the glued space.
pub fn alpha_cube_adapted(
    chart: &Chart,
    space: &MetricSpaceSample,
    mask: Option<&[bool]>,
    jac: &GridFunction,
    cube: &Cube,
    cfg: &TildeConfig,
) -> Result<TildeEvaluation> {
    let n = chart.n();
    if cube.n() != n {
        return domain("cube dimension does not match the chart");
    }
    let inside = chart.samples_in(cube);
    if inside.len() < 2 {
        return domain("cube holds fewer than two chart samples");
    }
    let side = cube.side;
    let fit_pairs = {
        let idx = thin(inside.clone(), cfg.md_samples);
        let mut p = Vec::new();
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                p.push((chart.param_diff(i, j), space.dist(i, j)));
            }
        }
        p
    };
    let fit = md_fit(&fit_pairs, side)?;
    let norm = fit.norm.clone();
    let res = if n == 1 { cfg.resolution } else { cfg.resolution_surface };
    let q = side / res;

    // c_{P,I}: mean over I of 𝒥_g χ_P, then divided by 𝒥(‖·‖_I)
    let mut jsum = 0.0;
    for &i in &inside {
        if mask.is_none_or(|m| m[i]) {
            jsum += field_at(jac, &chart.params[i]);
        }
    }
    let mean_density = jsum / inside.len() as f64;
    let h_i = 1.0 / norm.jacobian()?;
    let c = h_i * mean_density;

    // E-side net in parameter space; representatives are actual samples
    let members: Vec<usize> = inside.iter().copied().filter(|&i| mask.is_none_or(|m| m[i])).collect();
    let grid_side = chart.grid.cell_side();
    let mut reps = Vec::new();
    let mut rep_mass = Vec::new();
    let mut quantization = 0.0;
    if q > grid_side {
        let mut groups: std::collections::BTreeMap<Vec<i64>, Vec<usize>> = Default::default();
        for &i in &members {
            let key = chart.params[i]
                .iter()
                .zip(&cube.corner)
                .map(|(u, c)| ((u - c) / q).floor() as i64)
                .collect();
            groups.entry(key).or_default().push(i);
        }
        for g in groups.values() {
            let w: f64 = g.iter().map(|&i| space.weight(i)).sum();
            let mut cen = vec![0.0; n];
            for &i in g {
                for (c, u) in cen.iter_mut().zip(&chart.params[i]) {
                    *c += u * space.weight(i) / w;
                }
            }
            let rep = *g
                .iter()
                .min_by(|&&a, &&b| {
                    let da: f64 = chart.params[a].iter().zip(&cen).map(|(x, y)| (x - y).powi(2)).sum();
                    let db: f64 = chart.params[b].iter().zip(&cen).map(|(x, y)| (x - y).powi(2)).sum();
                    da.total_cmp(&db).then(a.cmp(&b))
                })
                .unwrap();
            for &i in g {
                quantization += space.weight(i) * space.dist(i, rep);
            }
            reps.push(rep);
            rep_mass.push(w);
        }
    } else {
        for &i in &members {
            reps.push(i);
            rep_mass.push(space.weight(i));
        }
    }

    // md over the fit sample and the net
    let mut md_res = fit.residual;
    for (a, &i) in reps.iter().enumerate() {
        for &j in &reps[a + 1..] {
            md_res = md_res.max((space.dist(i, j) - norm.eval(&chart.param_diff(i, j))).abs());
        }
    }
    let md = md_res / side;

    // parameter-side quadrature of L^n|_I
    let k = (side / q.max(grid_side)).round().max(1.0) as usize;
    let delta = side / k as f64;
    let mut cells = Vec::with_capacity(k.pow(n as u32));
    for t in 0..k.pow(n as u32) {
        let mut rem = t;
        let u: Vec<f64> = cube
            .corner
            .iter()
            .map(|c| {
                let a = rem % k;
                rem /= k;
                c + (a as f64 + 0.5) * delta
            })
            .collect();
        cells.push(u);
    }
    let mut radius: f64 = 0.0;
    for corner in 0..(1usize << n) {
        let v: Vec<f64> = (0..n).map(|a| if (corner >> a) & 1 == 1 { 0.5 * delta } else { -0.5 * delta }).collect();
        radius = radius.max(norm.eval(&v));
    }
    let cell_mass = mean_density * delta.powi(n as i32);
    let quadrature = cell_mass * cells.len() as f64 * radius;

    let empty = rep_mass.iter().sum::<f64>() <= 0.0;
    let norm_i = side.powi(n as i32 + 1);
    if empty {
        return Ok(TildeEvaluation {
            value: 0.0,
            lp_value: 0.0,
            quantization: 0.0,
            quadrature: 0.0,
            md,
            norm,
            c,
            nodes: 0,
        });
    }
    let penalty = 2.0 * md * side;
    let m = reps.len();
    let kc = cells.len();
    let glued = GluedSpace::build(space, chart, reps, cells, norm.clone(), penalty);
    if let Some(e) = glued.triangle_audit(cfg.audit_triples, 0x5eed) {
        return Err(Error::Construction(format!("glued metric fails the triangle inequality: {e}")));
    }
    let mut mu = rep_mass;
    mu.resize(m + kc, 0.0);
    let mut nu = vec![0.0; m];
    nu.resize(m + kc, cell_mass);
    let lp = tilde_dist(&mu, &nu, &glued.cost())?;
    Ok(TildeEvaluation {
        value: (lp + quantization + quadrature) / norm_i,
        lp_value: lp / norm_i,
        quantization: quantization / norm_i,
        quadrature: quadrature / norm_i,
        md,
        norm: glued.norm,
        c,
        nodes: m + kc,
    })
}

/// `𝒥_g χ_P` resampled on the dyadic grid of `cube` at (about) the chart's
/// sample resolution.
pub fn density_on_cube(chart: &Chart, mask: Option<&[bool]>, jac: &GridFunction, cube: &Cube) -> Result<GridFunction> {
    let ratio = cube.side / chart.grid.cell_side();
    let level = ratio.log2().round().max(1.0) as u32;
    let grid = DyadicGrid::new(cube.clone(), level.min(12))?;
    let locator = &chart.grid;
    let values = (0..grid.cell_count())
        .map(|i| {
            let u = grid.cell_center(i);
            let inside_p = match (mask, locator.locate(&u)) {
                (Some(m), Some(s)) => m[s],
                (Some(_), None) => false,
                (None, _) => true,
            };
            if inside_p {
                field_at(jac, &u)
            } else {
                0.0
            }
        })
        .collect();
    GridFunction::new(grid, values)
}

/// `Σ_{I' ⊆ I} ℓ(I')^{1+n/2} / ℓ(I)^{1+n} ‖Δ_{I'} h‖_2` for `h` on the grid of `I`.
pub fn wavelet_term(h: &GridFunction) -> f64 {
    let n = h.n() as f64;
    let side = h.grid.root.side;
    let norms = h.delta_norms();
    let mut total = 0.0;
    for (j, row) in norms.iter().enumerate() {
        let l = side / (1u64 << j) as f64;
        let w = l.powf(1.0 + 0.5 * n) / side.powf(1.0 + n);
        total += w * row.iter().map(|v| v.sqrt()).sum::<f64>();
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{generate, GeneratorSpec};

    #[test]
    fn jacobian_field_of_identity_and_doubling() {
        let g = generate(&GeneratorSpec::new("chart").chart("identity").dims(2, 2).spacing(1.0 / 16.0)).unwrap();
        let j = metric_jacobian_field(g.chart.as_ref().unwrap(), &g.space, 3).unwrap();
        assert!(j.field.values.iter().all(|v| (v - 1.0).abs() < 1e-9));
        let g = generate(&GeneratorSpec::new("chart").chart("scaled2").dims(2, 2).spacing(1.0 / 16.0)).unwrap();
        let j = metric_jacobian_field(g.chart.as_ref().unwrap(), &g.space, 3).unwrap();
        assert!(j.field.values.iter().all(|v| (v - 4.0).abs() < 1e-9));
        assert!(j.relative_mass_error() < 1e-9);
    }

    #[test]
    fn jacobian_field_of_graph_matches_surface_density() {
        let g = generate(&GeneratorSpec::new("lipschitz_graph").spacing(1.0 / 1024.0)).unwrap();
        let chart = g.chart.as_ref().unwrap();
        let j = metric_jacobian_field(chart, &g.space, 10).unwrap();
        for (i, v) in j.field.values.iter().enumerate() {
            let u = j.field.grid.cell_center(i)[0];
            let p = 0.3 * 2.0 * std::f64::consts::PI * (2.0 * std::f64::consts::PI * u).cos();
            let exact = (1.0 + p * p).sqrt();
            assert!((v - exact).abs() < 0.02 * exact, "cell {i}: {v} vs {exact}");
        }
        assert!(j.relative_mass_error() < 0.02);
    }

    #[test]
    fn isometric_chart_has_small_tilde_alpha() {
        let g = generate(&GeneratorSpec::new("segment").dims(1, 2).spacing(1.0 / 512.0)).unwrap();
        let chart = g.chart.as_ref().unwrap();
        let jac = metric_jacobian_field(chart, &g.space, chart.grid.level).unwrap();
        let cube = Cube::new(vec![0.25], 0.25).unwrap();
        let t = alpha_cube_adapted(chart, &g.space, None, &jac.field, &cube, &TildeConfig::default()).unwrap();
        assert!(t.md < 1e-9);
        assert!((t.c - 1.0).abs() < 1e-9);
        // net and quadrature displacements only
        assert!(t.value < 0.02, "{t:?}");
        let none = vec![false; g.space.len()];
        let e = alpha_cube_adapted(chart, &g.space, Some(&none), &jac.field, &cube, &TildeConfig::default()).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn glued_metric_restrictions() {
        let g = generate(&GeneratorSpec::new("bilip_curve").spacing(1.0 / 64.0)).unwrap();
        let chart = g.chart.as_ref().unwrap();
        let nodes: Vec<usize> = (10..20).collect();
        let cells: Vec<Vec<f64>> = (0..5).map(|i| vec![0.15 + 0.02 * i as f64]).collect();
        let norm = NormModel::Lp { n: 1, p: 2.0, scale: 1.1 };
        let z = GluedSpace::build(&g.space, chart, nodes.clone(), cells, norm, 0.05);
        assert!(z.triangle_audit(1_000_000, 1).is_none());
        assert_eq!(z.dist(0, 3), g.space.dist(10, 13));
        assert!((z.dist(10, 12) - 1.1 * 0.04).abs() < 1e-12);
    }

    #[test]
    fn wavelet_term_of_constant_is_zero() {
        let grid = DyadicGrid::new(Cube::unit(1), 6).unwrap();
        let h = GridFunction::from_fn(grid, |_| 1.3).unwrap();
        assert_eq!(wavelet_term(&h), 0.0);
    }
}
