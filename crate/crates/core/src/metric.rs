//! Finite metric-measure samples: distance oracle, weights, ball queries,
//! the snowflake transform and Ahlfors-regularity scans.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Norm used on ambient coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmbientNorm {
    L2,
    Linf,
}

impl AmbientNorm {
    pub fn tag(self) -> &'static str {
        match self {
            AmbientNorm::L2 => "l2",
            AmbientNorm::Linf => "linf",
        }
    }

    pub fn eval(self, v: &[f64]) -> f64 {
        match self {
            AmbientNorm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            AmbientNorm::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    pub fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            AmbientNorm::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            AmbientNorm::Linf => a
                .iter()
                .zip(b)
                .fold(0.0, |m, (x, y)| m.max((x - y).abs())),
        }
    }
}

#[derive(Debug, Clone)]
enum Oracle {
    Ambient {
        coords: Vec<f64>,
        dim: usize,
        norm: AmbientNorm,
    },
    Matrix {
        data: Vec<f64>,
    },
}

/// Finite weighted point set with a metric oracle; weights stand in for
/// `H^n` restricted to the sample.
///
/// The distance is `base(i, j)^exponent`, where `base` comes from ambient
/// coordinates or a stored matrix and `exponent < 1` encodes a snowflake.
#[derive(Debug, Clone)]
pub struct MetricSpaceSample {
    oracle: Oracle,
    exponent: f64,
    weights: Vec<f64>,
    dim_n: usize,
    min_spacing: OnceLock<f64>,
    diameter: OnceLock<f64>,
}

impl MetricSpaceSample {
    /// Points given by ambient coordinates (row-major, `dim` per point).
    pub fn from_coords(
        coords: Vec<f64>,
        dim: usize,
        norm: AmbientNorm,
        weights: Vec<f64>,
        dim_n: usize,
    ) -> Result<Self> {
        if dim == 0 || coords.len() % dim != 0 {
            return domain("coordinate array length is not a multiple of the ambient dimension");
        }
        if coords.len() / dim != weights.len() {
            return domain("one weight per point is required");
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return domain("non-finite coordinate");
        }
        Self::check_weights(&weights)?;
        Ok(Self {
            oracle: Oracle::Ambient { coords, dim, norm },
            exponent: 1.0,
            weights,
            dim_n,
            min_spacing: OnceLock::new(),
            diameter: OnceLock::new(),
        })
    }

    /// Points given by a full symmetric distance matrix (row-major).
    pub fn from_matrix(data: Vec<f64>, weights: Vec<f64>, dim_n: usize) -> Result<Self> {
        let len = weights.len();
        if data.len() != len * len {
            return domain("distance matrix must be N x N");
        }
        Self::check_weights(&weights)?;
        for i in 0..len {
            if data[i * len + i] != 0.0 {
                return domain(format!("nonzero diagonal entry at {i}"));
            }
            for j in 0..i {
                let a = data[i * len + j];
                if !(a.is_finite() && a >= 0.0) || a != data[j * len + i] {
                    return domain(format!("matrix entry ({i},{j}) is not a symmetric nonnegative length"));
                }
            }
        }
        Ok(Self {
            oracle: Oracle::Matrix { data },
            exponent: 1.0,
            weights,
            dim_n,
            min_spacing: OnceLock::new(),
            diameter: OnceLock::new(),
        })
    }

    fn check_weights(weights: &[f64]) -> Result<()> {
        if weights.is_empty() {
            return domain("a sample needs at least one point");
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return domain(format!("weight of point {i} is not strictly positive"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim_n(&self) -> usize {
        self.dim_n
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Snowflake exponent applied on top of the base metric (1 when none).
    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Ambient dimension when the metric is the ambient-norm distance.
    pub fn ambient_dim(&self) -> Option<usize> {
        match &self.oracle {
            Oracle::Ambient { dim, .. } if self.exponent == 1.0 => Some(*dim),
            _ => None,
        }
    }

    pub fn ambient_norm(&self) -> Option<AmbientNorm> {
        match &self.oracle {
            Oracle::Ambient { norm, .. } if self.exponent == 1.0 => Some(*norm),
            _ => None,
        }
    }

    /// Coordinates of point `i`, when the metric is the ambient one.
    pub fn coord(&self, i: usize) -> Option<&[f64]> {
        match &self.oracle {
            Oracle::Ambient { coords, dim, .. } if self.exponent == 1.0 => {
                Some(&coords[i * dim..(i + 1) * dim])
            }
            _ => None,
        }
    }

    pub fn has_coords(&self) -> bool {
        self.ambient_dim().is_some()
    }

    /// Coordinates of the underlying parameter set, kept even after a
    /// snowflake transform (used for serialization).
    fn base_coords(&self) -> Option<(&[f64], usize, AmbientNorm)> {
        match &self.oracle {
            Oracle::Ambient { coords, dim, norm } => Some((coords, *dim, *norm)),
            Oracle::Matrix { .. } => None,
        }
    }

    fn base_dist(&self, i: usize, j: usize) -> f64 {
        match &self.oracle {
            Oracle::Ambient { coords, dim, norm } => {
                norm.dist(&coords[i * dim..(i + 1) * dim], &coords[j * dim..(j + 1) * dim])
            }
            Oracle::Matrix { data } => data[i * self.len() + j],
        }
    }

    /// Distance between points `i` and `j`.
    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        let b = self.base_dist(i, j);
        if self.exponent == 1.0 {
            b
        } else if self.exponent == 0.5 {
            b.sqrt()
        } else {
            b.powf(self.exponent)
        }
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return domain(format!("point index {i} out of range (N = {})", self.len()));
        }
        Ok(())
    }

    /// Replaces `d` by `d^s`; coordinates are no longer exposed.
    pub fn snowflake_transform(&self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s <= 1.0) {
            return domain(format!("snowflake exponent {s} outside (0, 1]"));
        }
        Ok(Self {
            oracle: self.oracle.clone(),
            exponent: self.exponent * s,
            weights: self.weights.clone(),
            dim_n: self.dim_n,
            min_spacing: OnceLock::new(),
            diameter: OnceLock::new(),
        })
    }

    /// Same points and metric with a new homogeneity exponent `n`.
    pub fn with_dim_n(mut self, dim_n: usize) -> Self {
        self.dim_n = dim_n;
        self
    }

    /// Same points and metric with new weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.len() {
            return domain("one weight per point is required");
        }
        Self::check_weights(&weights)?;
        let mut out = self.clone();
        out.weights = weights;
        Ok(out)
    }

    /// Smallest nonzero pairwise distance (0 for a one-point sample).
    pub fn min_spacing(&self) -> f64 {
        *self.min_spacing.get_or_init(|| {
            let n = self.len();
            let mut best = f64::INFINITY;
            for i in 0..n {
                for j in 0..i {
                    let d = self.dist(i, j);
                    if d > 0.0 && d < best {
                        best = d;
                    }
                }
            }
            if best.is_finite() {
                best
            } else {
                0.0
            }
        })
    }

    pub fn diameter(&self) -> f64 {
        *self.diameter.get_or_init(|| {
            let n = self.len();
            let mut best: f64 = 0.0;
            for i in 0..n {
                for j in 0..i {
                    best = best.max(self.dist(i, j));
                }
            }
            best
        })
    }

    /// Full row-major distance matrix.
    pub fn materialize(&self) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                let d = self.dist(i, j);
                out[i * n + j] = d;
                out[j * n + i] = d;
            }
        }
        out
    }

    /// Mass of the closed ball `B(center, r)`.
    pub fn ball_mass(&self, center: usize, r: f64) -> Result<f64> {
        self.check_index(center)?;
        if !(r >= 0.0) {
            return domain("radius must be nonnegative");
        }
        Ok((0..self.len())
            .filter(|&j| self.dist(center, j) <= r)
            .map(|j| self.weights[j])
            .sum())
    }

    /// Indices of the closed ball `B(center, r)`, increasing.
    pub fn ball_members(&self, center: usize, r: f64) -> Result<Vec<usize>> {
        self.check_index(center)?;
        Ok((0..self.len()).filter(|&j| self.dist(center, j) <= r).collect())
    }

    /// Sorted distance profile around `center`, restricted to `r_max`.
    pub fn ball_profile(&self, center: usize, r_max: f64, mask: Option<&[bool]>) -> BallProfile {
        let mut rows: Vec<(f64, f64)> = (0..self.len())
            .filter_map(|j| {
                let d = self.dist(center, j);
                if d > r_max {
                    return None;
                }
                let w = match mask {
                    Some(m) if !m[j] => 0.0,
                    _ => self.weights[j],
                };
                Some((d, w))
            })
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cum = Vec::with_capacity(rows.len());
        let mut acc = 0.0;
        for &(_, w) in &rows {
            acc += w;
            cum.push(acc);
        }
        BallProfile {
            dists: rows.into_iter().map(|r| r.0).collect(),
            cum,
        }
    }

    /// Exhaustive metric-axiom check over all triples of the first `limit`
    /// points; returns the first violation found.
    pub fn check_metric_axioms(&self, limit: usize, tol: f64) -> Option<String> {
        let m = self.len().min(limit);
        for i in 0..m {
            if self.dist(i, i) != 0.0 {
                return Some(format!("d({i},{i}) != 0"));
            }
            for j in 0..m {
                let dij = self.dist(i, j);
                if (dij - self.dist(j, i)).abs() > tol {
                    return Some(format!("asymmetric pair ({i},{j})"));
                }
                for k in 0..m {
                    if dij > self.dist(i, k) + self.dist(k, j) + tol {
                        return Some(format!("triangle inequality fails on ({i},{j},{k})"));
                    }
                }
            }
        }
        None
    }
}

/// Cumulative ball masses around a fixed center, queried by radius.
#[derive(Debug, Clone)]
pub struct BallProfile {
    dists: Vec<f64>,
    cum: Vec<f64>,
}

impl BallProfile {
    /// Mass of the closed ball of radius `t` (t must not exceed the profile's range).
    pub fn mass(&self, t: f64) -> f64 {
        let k = self.dists.partition_point(|&d| d <= t);
        if k == 0 {
            0.0
        } else {
            self.cum[k - 1]
        }
    }
}

/// Ahlfors-regularity scan over sampled centers and scales.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegularityReport {
    pub n: usize,
    pub c_lower: f64,
    pub c_upper: f64,
    pub scale_range: [f64; 2],
    pub doubling_estimate: f64,
    pub deviation_factor: f64,
    pub median_ratio: f64,
    pub scales: Vec<ScaleRow>,
    /// At least one scale where every scanned annulus `B(x,2r) \ B(x,r)` is empty.
    pub degenerate: bool,
    pub empty_annuli: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleRow {
    pub r: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub flagged: bool,
    pub all_annuli_empty: bool,
}

/// Scans `mass(B(x,r))/r^n` over `centers × scales`.
pub fn ahlfors_scan(
    space: &MetricSpaceSample,
    n: usize,
    centers: &[usize],
    scales: &[f64],
    deviation_factor: f64,
) -> Result<RegularityReport> {
    if scales.is_empty() {
        return domain("empty scale list");
    }
    if centers.is_empty() {
        return domain("empty center list");
    }
    if !(deviation_factor >= 1.0) {
        return domain("deviation factor must be at least 1");
    }
    for &c in centers {
        space.check_index(c)?;
    }
    if let Some(r) = scales.iter().find(|r| !(**r > 0.0)) {
        return domain(format!("scale {r} is not positive"));
    }
    let r_max = scales.iter().cloned().fold(0.0, f64::max);
    let profiles: Vec<BallProfile> = centers
        .iter()
        .map(|&c| space.ball_profile(c, 2.0 * r_max, None))
        .collect();
    let nf = n as i32;
    let mut all_ratios = Vec::new();
    let mut rows = Vec::with_capacity(scales.len());
    let mut doubling: f64 = 1.0;
    let mut empty_annuli = 0usize;
    for &r in scales {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        let mut empties = 0usize;
        for p in &profiles {
            let m = p.mass(r);
            let m2 = p.mass(2.0 * r);
            let ratio = m / r.powi(nf);
            lo = lo.min(ratio);
            hi = hi.max(ratio);
            all_ratios.push(ratio);
            if m > 0.0 {
                doubling = doubling.max(m2 / m);
            }
            if m2 <= m {
                empties += 1;
            }
        }
        empty_annuli += empties;
        rows.push(ScaleRow {
            r,
            min_ratio: lo,
            max_ratio: hi,
            flagged: false,
            all_annuli_empty: empties == profiles.len(),
        });
    }
    all_ratios.sort_by(f64::total_cmp);
    let median = all_ratios[all_ratios.len() / 2];
    for row in &mut rows {
        row.flagged = row.max_ratio > median * deviation_factor || row.min_ratio < median / deviation_factor;
    }
    let c_lower = rows.iter().map(|r| r.min_ratio).fold(f64::INFINITY, f64::min);
    let c_upper = rows.iter().map(|r| r.max_ratio).fold(0.0, f64::max);
    let r_min = scales.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(RegularityReport {
        n,
        c_lower,
        c_upper,
        scale_range: [r_min, r_max],
        doubling_estimate: doubling,
        deviation_factor,
        median_ratio: median,
        degenerate: rows.iter().any(|r| r.all_annuli_empty),
        scales: rows,
        empty_annuli,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct SpaceJson {
    points: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    coords: Option<Vec<Vec<f64>>>,
    weights: Vec<f64>,
    metric: String,
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    norm: Option<AmbientNorm>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    matrix_file: Option<String>,
}

impl MetricSpaceSample {
    /// Writes the JSON form; matrix metrics also get a binary sidecar
    /// `<stem>.dist.bin` next to the JSON file.
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut js = SpaceJson {
            points: self.len(),
            coords: None,
            weights: self.weights.clone(),
            metric: String::new(),
            n: self.dim_n,
            norm: None,
            matrix_file: None,
        };
        let exponent_tag = |e: f64| format!("snowflake({})", e);
        match self.base_coords() {
            Some((coords, dim, norm)) => {
                js.coords = Some(coords.chunks(dim).map(|c| c.to_vec()).collect());
                js.norm = Some(norm);
                js.metric = if self.exponent == 1.0 {
                    "ambient".into()
                } else {
                    exponent_tag(self.exponent)
                };
            }
            None => {
                let stem = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "space".into());
                let name = format!("{stem}.dist.bin");
                let side = path.with_file_name(&name);
                if let Oracle::Matrix { data } = &self.oracle {
                    write_distance_matrix(&side, self.len(), data)?;
                }
                js.matrix_file = Some(name);
                js.metric = if self.exponent == 1.0 {
                    "matrix".into()
                } else {
                    exponent_tag(self.exponent)
                };
            }
        }
        let text = serde_json::to_string_pretty(&js)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let js: SpaceJson = serde_json::from_str(&text)?;
        if js.points != js.weights.len() {
            return Err(Error::Format("points and weights disagree".into()));
        }
        let exponent = parse_metric_tag(&js.metric)?;
        let base = if let Some(coords) = js.coords {
            let dim = coords.first().map(|c| c.len()).unwrap_or(0);
            if coords.iter().any(|c| c.len() != dim) || coords.len() != js.points {
                return Err(Error::Format("ragged coordinate rows".into()));
            }
            let flat: Vec<f64> = coords.into_iter().flatten().collect();
            MetricSpaceSample::from_coords(flat, dim, js.norm.unwrap_or(AmbientNorm::L2), js.weights, js.n)?
        } else {
            let name = js
                .matrix_file
                .ok_or_else(|| Error::Format("matrix metric without matrix_file".into()))?;
            let side = path.with_file_name(name);
            let (count, data) = read_distance_matrix(&side)?;
            if count != js.points {
                return Err(Error::Format("matrix size disagrees with point count".into()));
            }
            MetricSpaceSample::from_matrix(data, js.weights, js.n)?
        };
        if exponent == 1.0 {
            Ok(base)
        } else {
            base.snowflake_transform(exponent)
        }
    }
}

fn parse_metric_tag(tag: &str) -> Result<f64> {
    match tag {
        "ambient" | "matrix" => Ok(1.0),
        t if t.starts_with("snowflake(") && t.ends_with(')') => t["snowflake(".len()..t.len() - 1]
            .parse::<f64>()
            .map_err(|_| Error::Format(format!("bad snowflake exponent in {t:?}"))),
        t => Err(Error::Format(format!("unknown metric tag {t:?}"))),
    }
}

/// Binary distance matrix: 8-byte little-endian point count, then `N*N`
/// little-endian f64 values row-major.
pub fn write_distance_matrix(path: &Path, count: usize, data: &[f64]) -> Result<()> {
    if data.len() != count * count {
        return domain("matrix length is not count^2");
    }
    let mut buf = Vec::with_capacity(8 + 8 * data.len());
    buf.extend_from_slice(&(count as u64).to_le_bytes());
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_distance_matrix(path: &Path) -> Result<(usize, Vec<f64>)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 8 {
        return Err(Error::Format("distance matrix file too short".into()));
    }
    let count = u64::from_le_bytes(buf[0..8].try_into().unwrap()) as usize;
    if buf.len() != 8 + 8 * count * count {
        return Err(Error::Format("distance matrix length does not match its header".into()));
    }
    let data = buf[8..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((count, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, h: f64) -> MetricSpaceSample {
        let coords = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
        MetricSpaceSample::from_coords(coords, 1, AmbientNorm::L2, vec![h; n], 1).unwrap()
    }

    fn grid2(half: i32) -> MetricSpaceSample {
        let mut coords = Vec::new();
        for x in -half..=half {
            for y in -half..=half {
                coords.push(x as f64);
                coords.push(y as f64);
            }
        }
        let n = coords.len() / 2;
        MetricSpaceSample::from_coords(coords, 2, AmbientNorm::L2, vec![1.0; n], 2).unwrap()
    }

    #[test]
    fn zero_radius_ball_is_the_center() {
        let s = line(10, 0.1);
        assert_eq!(s.ball_mass(3, 0.0).unwrap(), 0.1);
    }

    #[test]
    fn grid_ball_count_matches_lattice_enumeration() {
        let s = grid2(5);
        let center = s.len() / 2;
        assert_eq!(s.coord(center).unwrap(), &[0.0, 0.0]);
        // independent count of integer pairs with x^2 + y^2 <= 6.25
        let mut count = 0;
        for x in -3i32..=3 {
            for y in -3i32..=3 {
                if ((x * x + y * y) as f64) <= 6.25 {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 21);
        assert_eq!(s.ball_mass(center, 2.5).unwrap(), count as f64);
    }

    #[test]
    fn invalid_center_is_domain_error() {
        let s = line(4, 1.0);
        assert!(matches!(s.ball_mass(4, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn snowflake_of_distance_four_is_two() {
        let s = MetricSpaceSample::from_coords(vec![0.0, 4.0], 1, AmbientNorm::L2, vec![1.0, 1.0], 1).unwrap();
        let f = s.snowflake_transform(0.5).unwrap();
        assert_eq!(f.dist(0, 1), 2.0);
        assert!(f.coord(0).is_none());
        let same = s.snowflake_transform(1.0).unwrap();
        assert_eq!(same.dist(0, 1), 4.0);
        assert!(s.snowflake_transform(0.0).is_err());
        assert!(s.snowflake_transform(1.5).is_err());
    }

    #[test]
    fn snowflake_keeps_triangle_inequality() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let coords: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
        let s = MetricSpaceSample::from_coords(coords, 2, AmbientNorm::L2, vec![1.0; 100], 1).unwrap();
        let f = s.snowflake_transform(0.5).unwrap();
        assert_eq!(f.check_metric_axioms(100, 1e-12), None);
        assert_eq!(f.total_mass(), s.total_mass());
        assert_eq!(f.len(), s.len());
    }

    #[test]
    fn scan_of_line_gives_density_two() {
        let s = line(2000, 1.0 / 2000.0);
        let centers: Vec<usize> = (800..1200).step_by(20).collect();
        let scales = [0.01, 0.02, 0.05, 0.1];
        let rep = ahlfors_scan(&s, 1, &centers, &scales, 2.0).unwrap();
        assert!((rep.c_lower - 2.0).abs() < 0.06, "{}", rep.c_lower);
        assert!((rep.c_upper - 2.0).abs() < 0.06, "{}", rep.c_upper);
        assert!(rep.doubling_estimate >= 1.0);
        assert!(!rep.degenerate);
    }

    #[test]
    fn scan_below_spacing_is_degenerate() {
        let s = line(20, 1.0);
        let rep = ahlfors_scan(&s, 1, &[3, 7, 11], &[0.2], 2.0).unwrap();
        assert!(rep.degenerate);
        assert!(ahlfors_scan(&s, 1, &[3], &[], 2.0).is_err());
    }

    #[test]
    fn json_round_trip_for_coordinate_and_matrix_spaces() {
        let dir = std::env::temp_dir().join(format!("cc-metric-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let s = line(6, 0.25).snowflake_transform(0.5).unwrap();
        let p = dir.join("a.json");
        s.write_json(&p).unwrap();
        let back = MetricSpaceSample::read_json(&p).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(back.dist(i, j), s.dist(i, j));
            }
        }
        let m = MetricSpaceSample::from_matrix(line(5, 1.0).materialize(), vec![1.0; 5], 1).unwrap();
        let q = dir.join("b.json");
        m.write_json(&q).unwrap();
        let back = MetricSpaceSample::read_json(&q).unwrap();
        assert_eq!(back.materialize(), m.materialize());
        let (count, _) = read_distance_matrix(&dir.join("b.dist.bin")).unwrap();
        assert_eq!(count, 5);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn profile_matches_direct_ball_mass() {
        let s = grid2(4);
        let p = s.ball_profile(40, 10.0, None);
        for r in [0.0, 0.5, 1.0, 1.5, 2.2, 3.0, 4.5] {
            assert_eq!(p.mass(r), s.ball_mass(40, r).unwrap());
        }
    }
}
