//! Piecewise-constant functions on a dyadic grid, Haar differences
//! `Δ_Q h`, truncated energies `Δ_k^h(Q)^2`, means over rasterized sets,
//! oscillation-bad cubes and sandwich families.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dyadic::{Cube, DyadicGrid};
use crate::error::{domain, Error, Result};

/// A dyadic subcube of the root: level `j`, multi-index per axis.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCell {
    pub level: u32,
    pub index: Vec<usize>,
}

impl DyadicCell {
    pub fn root(n: usize) -> Self {
        Self {
            level: 0,
            index: vec![0; n],
        }
    }

    pub fn children(&self) -> Vec<DyadicCell> {
        let n = self.index.len();
        (0..1usize << n)
            .map(|b| DyadicCell {
                level: self.level + 1,
                index: (0..n).map(|a| 2 * self.index[a] + ((b >> a) & 1)).collect(),
            })
            .collect()
    }

    pub fn parent(&self) -> Option<DyadicCell> {
        (self.level > 0).then(|| DyadicCell {
            level: self.level - 1,
            index: self.index.iter().map(|i| i / 2).collect(),
        })
    }

    pub fn flat(&self) -> usize {
        let m = 1usize << self.level;
        self.index.iter().rev().fold(0, |acc, &k| acc * m + k)
    }

    pub fn from_flat(level: u32, n: usize, mut flat: usize) -> Self {
        let m = 1usize << level;
        let index = (0..n)
            .map(|_| {
                let k = flat % m;
                flat /= m;
                k
            })
            .collect();
        Self { level, index }
    }

    /// Geometric cube inside `root`.
    pub fn cube(&self, root: &Cube) -> Cube {
        let s = root.side / (1u64 << self.level) as f64;
        Cube {
            corner: self
                .index
                .iter()
                .zip(&root.corner)
                .map(|(&k, c)| c + k as f64 * s)
                .collect(),
            side: s,
        }
    }

    /// Whether `other` lies inside this cell (or equals it).
    pub fn contains(&self, other: &DyadicCell) -> bool {
        if other.level < self.level {
            return false;
        }
        let sh = other.level - self.level;
        self.index.iter().zip(&other.index).all(|(a, b)| b >> sh == *a)
    }
}

/// Piecewise-constant function on the finest cells of a dyadic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: DyadicGrid,
    pub values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridSidecar {
    n: usize,
    #[serde(rename = "J")]
    level: u32,
    #[serde(rename = "Q0")]
    root: Cube,
}

impl GridFunction {
    pub fn new(grid: DyadicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return domain("one value per finest cell is required");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("grid values must be finite");
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: DyadicGrid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.cell_count()).map(|i| f(&grid.cell_center(i))).collect();
        Self::new(grid, values)
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn level(&self) -> u32 {
        self.grid.level
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn inner(&self, other: &GridFunction) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    fn finest_cells_of(&self, q: &DyadicCell) -> impl Iterator<Item = usize> + '_ {
        let n = self.n();
        let sh = self.level() - q.level;
        let span = 1usize << sh;
        let m = self.grid.per_axis();
        let base: Vec<usize> = q.index.iter().map(|&k| k << sh).collect();
        let count = span.pow(n as u32);
        (0..count).map(move |mut t| {
            let mut flat = 0;
            let mut mul = 1;
            for b in base.iter().take(n) {
                let off = t % span;
                t /= span;
                flat += (b + off) * mul;
                mul *= m;
            }
            flat
        })
    }

    fn check_cell(&self, q: &DyadicCell) -> Result<()> {
        if q.index.len() != self.n() {
            return domain("cell dimension mismatch");
        }
        if q.level > self.level() {
            return domain("cell finer than the raster");
        }
        if q.index.iter().any(|&k| k >= 1usize << q.level) {
            return domain("cell outside the root");
        }
        Ok(())
    }

    /// Mean of `h` over a dyadic cell.
    pub fn mean(&self, q: &DyadicCell) -> Result<f64> {
        self.check_cell(q)?;
        let mut s = 0.0;
        let mut c = 0usize;
        for i in self.finest_cells_of(q) {
            s += self.values[i];
            c += 1;
        }
        Ok(s / c as f64)
    }

    /// Means on every level: `pyramid[j][flat]`.
    pub fn mean_pyramid(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let jmax = self.level();
        let mut out = vec![Vec::new(); jmax as usize + 1];
        out[jmax as usize] = self.values.clone();
        for j in (0..jmax).rev() {
            let m_f = 1usize << (j + 1);
            let m_c = 1usize << j;
            let fine = &out[j as usize + 1];
            let mut coarse = vec![0.0; m_c.pow(n as u32)];
            for (f, v) in fine.iter().enumerate() {
                let mut rem = f;
                let mut flat = 0;
                let mut mul = 1;
                for _ in 0..n {
                    let k = rem % m_f;
                    rem /= m_f;
                    flat += (k / 2) * mul;
                    mul *= m_c;
                }
                coarse[flat] += v;
            }
            let div = (1usize << n) as f64;
            coarse.iter_mut().for_each(|c| *c /= div);
            out[j as usize] = coarse;
        }
        out
    }

    /// `Δ_Q h`: child mean minus `Q`'s mean on each child, zero off `Q`.
    pub fn haar_delta(&self, q: &DyadicCell) -> Result<GridFunction> {
        self.check_cell(q)?;
        if q.level >= self.level() {
            return domain("Δ_Q needs a cube above the finest level");
        }
        let mq = self.mean(q)?;
        let mut values = vec![0.0; self.values.len()];
        for ch in q.children() {
            let d = self.mean(&ch)? - mq;
            for i in self.finest_cells_of(&ch) {
                values[i] = d;
            }
        }
        Ok(GridFunction {
            grid: self.grid.clone(),
            values,
        })
    }

    /// `‖Δ_Q h‖²` from the mean pyramid.
    fn delta_norm_sq_from(&self, pyr: &[Vec<f64>], q: &DyadicCell) -> f64 {
        let mq = pyr[q.level as usize][q.flat()];
        let vol_child = (self.grid.root.side / (1u64 << (q.level + 1)) as f64).powi(self.n() as i32);
        q.children()
            .iter()
            .map(|ch| {
                let d = pyr[ch.level as usize][ch.flat()] - mq;
                d * d * vol_child
            })
            .sum()
    }

    /// `‖Δ_Q h‖²` for every cell above the finest level: `out[j][flat]`.
    pub fn delta_norms(&self) -> Vec<Vec<f64>> {
        let pyr = self.mean_pyramid();
        let n = self.n();
        (0..self.level())
            .map(|j| {
                let count = 1usize << (j as usize * n);
                (0..count)
                    .map(|f| self.delta_norm_sq_from(&pyr, &DyadicCell::from_flat(j, n, f)))
                    .collect()
            })
            .collect()
    }

    /// `Δ_k^h(Q)² = Σ_{j=0..k} Σ_{R ∈ D_j(Q)} ‖Δ_R h‖²`; requires
    /// `level(Q) + k < J`.
    pub fn delta_k_energy(&self, q: &DyadicCell, k: u32) -> Result<f64> {
        self.check_cell(q)?;
        if q.level + k >= self.level() {
            return domain(format!(
                "Δ_k needs {} generations below level {} but the raster stops at {}",
                k + 1,
                q.level,
                self.level()
            ));
        }
        let norms = self.delta_norms();
        Ok(energy_from_norms(&norms, self.n(), q, k))
    }

    /// `Δ_k^h(Q)²` for every cell, truncated at the finest level: `out[j][flat]`.
    pub fn energies(&self, k: u32) -> Vec<Vec<f64>> {
        let norms = self.delta_norms();
        let n = self.n();
        (0..self.level())
            .map(|j| {
                (0..1usize << (j as usize * n))
                    .map(|f| energy_from_norms(&norms, n, &DyadicCell::from_flat(j, n, f), k))
                    .collect()
            })
            .collect()
    }

    /// Exact mean over a rasterized set.
    pub fn mean_over_set(&self, e: &RasterSet) -> Result<f64> {
        if e.mask.len() != self.values.len() {
            return domain("set raster does not match the function raster");
        }
        let mut s = 0.0;
        let mut c = 0usize;
        for (i, &inside) in e.mask.iter().enumerate() {
            if inside {
                s += self.values[i];
                c += 1;
            }
        }
        if c == 0 {
            return domain("mean over an empty set");
        }
        Ok(s / c as f64)
    }

    /// Writes `<stem>.bin` (little-endian f64) and `<stem>.json` ({n, J, Q0}).
    pub fn write(&self, stem: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(stem.with_extension("bin"), bytes)?;
        let side = GridSidecar {
            n: self.n(),
            level: self.level(),
            root: self.grid.root.clone(),
        };
        std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    pub fn read(stem: &Path) -> Result<Self> {
        let side: GridSidecar = serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json"))?)?;
        if side.root.n() != side.n {
            return Err(Error::Format("sidecar n does not match Q0".into()));
        }
        let grid = DyadicGrid::new(side.root, side.level)?;
        let bytes = std::fs::read(stem.with_extension("bin"))?;
        if bytes.len() != grid.cell_count() * 8 {
            return Err(Error::Format(format!(
                "expected {} values, found {} bytes",
                grid.cell_count(),
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Self::new(grid, values)
    }
}

fn energy_from_norms(norms: &[Vec<f64>], n: usize, q: &DyadicCell, k: u32) -> f64 {
    let jmax = norms.len() as u32;
    let mut total = 0.0;
    for d in 0..=k {
        let lv = q.level + d;
        if lv >= jmax {
            break;
        }
        let span = 1usize << d;
        let m = 1usize << lv;
        for t in 0..span.pow(n as u32) {
            let mut rem = t;
            let mut flat = 0;
            let mut mul = 1;
            for a in 0..n {
                let off = rem % span;
                rem /= span;
                flat += ((q.index[a] << d) + off) * mul;
                mul *= m;
            }
            total += norms[lv as usize][flat];
        }
    }
    total
}

/// Subset of the finest cells of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterSet {
    pub grid: DyadicGrid,
    pub mask: Vec<bool>,
}

impl RasterSet {
    pub fn from_fn(grid: &DyadicGrid, inside: impl Fn(&[f64]) -> bool) -> Self {
        let mask = (0..grid.cell_count()).map(|i| inside(&grid.cell_center(i))).collect();
        Self {
            grid: grid.clone(),
            mask,
        }
    }

    pub fn full(grid: &DyadicGrid) -> Self {
        Self {
            grid: grid.clone(),
            mask: vec![true; grid.cell_count()],
        }
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn volume(&self) -> f64 {
        self.count() as f64 * self.grid.cell_volume()
    }

    pub fn intersect(&self, other: &RasterSet) -> RasterSet {
        RasterSet {
            grid: self.grid.clone(),
            mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a && *b).collect(),
        }
    }

    pub fn union(&self, other: &RasterSet) -> RasterSet {
        RasterSet {
            grid: self.grid.clone(),
            mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a || *b).collect(),
        }
    }

    pub fn sym_diff_volume(&self, other: &RasterSet) -> f64 {
        self.mask.iter().zip(&other.mask).filter(|(a, b)| a != b).count() as f64 * self.grid.cell_volume()
    }

    pub fn is_subset(&self, other: &RasterSet) -> bool {
        self.mask.iter().zip(&other.mask).all(|(a, b)| !*a || *b)
    }

    pub fn indicator(&self) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            values: self.mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Carleson-type sums over energies

/// `Σ_{Q ⊆ Q0} Δ_k^h(Q)²` with truncation at the finest level, and the
/// bound `(k+1) ‖h‖∞² ℓ(Q0)^n`.
pub fn strong_wavelet_sum(h: &GridFunction, k: u32) -> (f64, f64) {
    let e = h.energies(k);
    let sum: f64 = e.iter().flatten().sum();
    let bound = (k + 1) as f64 * h.sup_norm().powi(2) * h.grid.root.volume();
    (sum, bound)
}

/// `Σ_{Q: Δ_k(Q)² > δ ℓ(Q)^n} ℓ(Q)^n` and the Chebyshev bound `(1/δ) Σ_Q Δ_k(Q)²`.
pub fn weak_wavelet_sum(h: &GridFunction, k: u32, delta: f64) -> (f64, f64) {
    let e = h.energies(k);
    let n = h.n() as i32;
    let mut weak = 0.0;
    let mut total = 0.0;
    for (j, row) in e.iter().enumerate() {
        let vol = (h.grid.root.side / (1u64 << j) as f64).powi(n);
        for &v in row {
            total += v;
            if v > delta * vol {
                weak += vol;
            }
        }
    }
    (weak, total / delta)
}

// ---------------------------------------------------------------------------
// Oscillation-bad cubes

/// Sampled family of sets attached to each cube via its affine chart `T_Q`
/// from the unit cube.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SetFamily {
    /// `ℓ_p` balls (p ∈ [1, ∞], `f64::INFINITY` for the max norm) inside the
    /// unit cube, centers on a grid, radii from the list.
    NormBalls {
        radii: Vec<f64>,
        centers_per_axis: usize,
        p_norms: Vec<f64>,
    },
    /// Images of the Euclidean ball `B(1/2, radius)` under `u -> A (u - 1/2) + 1/2`
    /// for diagonal/shear maps with bi-Lipschitz constant at most `lipschitz`.
    LinearImages {
        radius: f64,
        lipschitz: f64,
        steps: usize,
    },
}

impl SetFamily {
    /// Members as membership tests on unit-cube coordinates.
    fn members(&self, n: usize) -> Vec<Box<dyn Fn(&[f64]) -> bool + Sync>> {
        let mut out: Vec<Box<dyn Fn(&[f64]) -> bool + Sync>> = Vec::new();
        match self {
            SetFamily::NormBalls {
                radii,
                centers_per_axis,
                p_norms,
            } => {
                let m = (*centers_per_axis).max(1);
                for &r in radii {
                    for &p in p_norms {
                        for t in 0..m.pow(n as u32) {
                            let mut rem = t;
                            let c: Vec<f64> = (0..n)
                                .map(|_| {
                                    let k = rem % m;
                                    rem /= m;
                                    (k as f64 + 0.5) / m as f64
                                })
                                .collect();
                            out.push(Box::new(move |u: &[f64]| lp_norm(u, &c, p) <= r));
                        }
                    }
                }
            }
            SetFamily::LinearImages {
                radius,
                lipschitz,
                steps,
            } => {
                let s = (*steps).max(1);
                for a in 0..=s {
                    let stretch = 1.0 + (lipschitz - 1.0) * a as f64 / s as f64;
                    for axis in 0..n {
                        let r = *radius;
                        out.push(Box::new(move |u: &[f64]| {
                            let mut q = 0.0;
                            for (i, ui) in u.iter().enumerate() {
                                let d = ui - 0.5;
                                let d = if i == axis { d / stretch } else { d };
                                q += d * d;
                            }
                            q.sqrt() <= r
                        }));
                    }
                }
            }
        }
        out
    }
}

fn lp_norm(u: &[f64], c: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        u.iter().zip(c).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    } else {
        u.iter().zip(c).map(|(a, b)| (a - b).abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BadCube {
    pub cell: DyadicCell,
    /// `max_E |⨍_E h - ⨍_Q h|` over the sampled family.
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OscillationReport {
    pub eps: f64,
    pub bad: Vec<BadCube>,
    /// Union of the `eps/2` bad sets of `h+` and `h-`.
    pub split_superset: Vec<DyadicCell>,
    /// `Σ_{Q bad} ℓ(Q)^n / ℓ(Q0)^n`.
    pub packing: f64,
    /// Members dropped for falling under the volume floor.
    pub rejected_members: usize,
    pub audited_cubes: usize,
    /// Empirical `(k, δ)`: no bad cube has `Δ_k(Q)² <= δ ℓ(Q)^n`.
    pub empirical_k_delta: Vec<(u32, f64)>,
}

/// Per-cube maximum deviation `max_E |⨍_E h - ⨍_Q h|` for cubes down to
/// `max_level`, with the number of members rejected by the volume floor.
fn oscillation_values(h: &GridFunction, family: &SetFamily, max_level: u32, vol_floor: f64) -> (Vec<(DyadicCell, f64)>, usize) {
    let n = h.n();
    let members = family.members(n);
    let pyr = h.mean_pyramid();
    // summation rounding, not oscillation
    let noise = 16.0 * f64::EPSILON * h.sup_norm();
    let mut out = Vec::new();
    let mut rejected = 0;
    for j in 0..=max_level.min(h.level()) {
        let sub = h.level() - j;
        let span = 1usize << sub;
        let cells_per = span.pow(n as u32);
        // unit-cube coordinates of the finest cells inside one cube
        let unit: Vec<Vec<f64>> = (0..cells_per)
            .map(|t| {
                let mut rem = t;
                (0..n)
                    .map(|_| {
                        let k = rem % span;
                        rem /= span;
                        (k as f64 + 0.5) / span as f64
                    })
                    .collect()
            })
            .collect();
        let masks: Vec<Vec<bool>> = members.iter().map(|m| unit.iter().map(|u| m(u)).collect()).collect();
        let kept: Vec<&Vec<bool>> = masks
            .iter()
            .filter(|mk| (mk.iter().filter(|&&b| b).count() as f64 / cells_per as f64) >= vol_floor)
            .collect();
        rejected += masks.len() - kept.len();
        let m = 1usize << j;
        for f in 0..m.pow(n as u32) {
            let q = DyadicCell::from_flat(j, n, f);
            let mq = pyr[j as usize][f];
            let fine: Vec<usize> = h.finest_cells_of(&q).collect();
            let mut worst: f64 = 0.0;
            for mk in &kept {
                let mut s = 0.0;
                let mut c = 0usize;
                for (t, &inside) in mk.iter().enumerate() {
                    if inside {
                        s += h.values[fine[t]];
                        c += 1;
                    }
                }
                worst = worst.max((s / c as f64 - mq).abs());
            }
            out.push((q, if worst <= noise { 0.0 } else { worst }));
        }
    }
    (out, rejected)
}

/// Cubes `Q` (levels `0..=max_level`) where some sampled member `E` of the
/// family has `|⨍_E h - ⨍_Q h| > eps`.
pub fn oscillation_bad_cubes(
    h: &GridFunction,
    family: &SetFamily,
    eps: f64,
    max_level: u32,
    vol_floor: f64,
) -> Result<OscillationReport> {
    if !(eps >= 0.0) {
        return domain("eps must be nonnegative");
    }
    let (vals, rejected) = oscillation_values(h, family, max_level, vol_floor);
    let n = h.n() as i32;
    let bad: Vec<BadCube> = vals
        .iter()
        .filter(|(_, v)| *v > eps)
        .map(|(c, v)| BadCube {
            cell: c.clone(),
            value: *v,
        })
        .collect();
    let packing = bad.iter().map(|b| 0.5f64.powi(b.cell.level as i32 * n)).sum();

    let hp = h.map(|v| v.max(0.0));
    let hm = h.map(|v| (-v).max(0.0));
    let (vp, _) = oscillation_values(&hp, family, max_level, vol_floor);
    let (vm, _) = oscillation_values(&hm, family, max_level, vol_floor);
    let split_superset: Vec<DyadicCell> = vp
        .iter()
        .zip(&vm)
        .filter(|(a, b)| a.1 > 0.5 * eps || b.1 > 0.5 * eps)
        .map(|(a, _)| a.0.clone())
        .collect();

    let mut empirical = Vec::new();
    let max_k = h.level().saturating_sub(1).min(6);
    let norms = h.delta_norms();
    for k in 0..=max_k {
        let mut delta = f64::INFINITY;
        for b in &bad {
            if b.cell.level + k < h.level() {
                let e = energy_from_norms(&norms, h.n(), &b.cell, k);
                let vol = (h.grid.root.side / (1u64 << b.cell.level) as f64).powi(n);
                delta = delta.min(e / vol);
            }
        }
        if delta > 0.0 {
            empirical.push((k, if delta.is_finite() { delta } else { f64::MAX }));
        }
    }
    Ok(OscillationReport {
        eps,
        bad,
        split_superset,
        packing,
        rejected_members: rejected,
        audited_cubes: vals.len(),
        empirical_k_delta: empirical,
    })
}

/// Bad-cube CSV: `level,corner,value` with the corner as `;`-separated coordinates.
pub fn write_bad_cubes_csv(path: &Path, root: &Cube, bad: &[BadCube]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "level,corner,value")?;
    for b in bad {
        let c = b.cell.cube(root);
        let corner: Vec<String> = c.corner.iter().map(|x| format!("{x}")).collect();
        writeln!(f, "{},{},{}", b.cell.level, corner.join(";"), b.value)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Sandwich families

#[derive(Debug, Clone)]
pub struct SandwichLevel {
    pub eps: f64,
    /// Tail start `j0(eps)`.
    pub j0: usize,
    pub lower: RasterSet,
    pub upper: RasterSet,
}

#[derive(Debug, Clone)]
pub struct SandwichFamily {
    pub members: Vec<RasterSet>,
    pub levels: Vec<SandwichLevel>,
}

/// Tails `L = ∩_{i >= j0} E_i` and `U = ∪_{i >= j0} E_i` with `j0(eps)`
/// the first tail whose volume ratio reaches `1 - eps`. Requires
/// `vol(E_i △ E_j) <= 2^{1 - min(i,j)} vol(Q0)`.
pub fn sandwich_construct(members: Vec<RasterSet>, eps_list: &[f64]) -> Result<SandwichFamily> {
    if members.is_empty() {
        return domain("empty set sequence");
    }
    let vol0 = members[0].grid.root.volume();
    for i in 0..members.len() {
        if members[i].grid != members[0].grid {
            return domain("all sets must share one raster");
        }
        for j in (i + 1)..members.len() {
            let d = members[i].sym_diff_volume(&members[j]);
            let allowed = 2.0 * 0.5f64.powi(i.min(j) as i32) * vol0;
            if d > allowed * (1.0 + 1e-12) {
                return Err(Error::Domain(format!(
                    "Cauchy rate violated: vol(E_{i} △ E_{j}) = {d} > {allowed}"
                )));
            }
        }
    }
    let count = members.len();
    let mut lower = vec![members[count - 1].clone(); count];
    let mut upper = vec![members[count - 1].clone(); count];
    for j in (0..count - 1).rev() {
        lower[j] = lower[j + 1].intersect(&members[j]);
        upper[j] = upper[j + 1].union(&members[j]);
    }
    let mut sorted: Vec<f64> = eps_list.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut levels = Vec::new();
    let mut j_prev = 0;
    for eps in sorted {
        let ratio = |j: usize| {
            let u = upper[j].volume();
            if u == 0.0 {
                1.0
            } else {
                lower[j].volume() / u
            }
        };
        let mut j0 = j_prev;
        while j0 < count - 1 && ratio(j0) < 1.0 - eps {
            j0 += 1;
        }
        j_prev = j0;
        levels.push(SandwichLevel {
            eps,
            j0,
            lower: lower[j0].clone(),
            upper: upper[j0].clone(),
        });
    }
    Ok(SandwichFamily { members, levels })
}

impl SandwichFamily {
    /// Checks monotonicity, the volume ratio and tail containment; returns the
    /// first violation.
    pub fn check(&self) -> Option<String> {
        for lv in &self.levels {
            let u = lv.upper.volume();
            if u > 0.0 && lv.lower.volume() / u < 1.0 - lv.eps {
                return Some(format!("ratio below 1 - {} at j0 = {}", lv.eps, lv.j0));
            }
            for k in lv.j0..self.members.len() {
                if !lv.lower.is_subset(&self.members[k]) || !self.members[k].is_subset(&lv.upper) {
                    return Some(format!("E_{k} escapes the eps = {} sandwich", lv.eps));
                }
            }
        }
        // levels are sorted by decreasing eps
        for w in self.levels.windows(2) {
            let (big, small) = (&w[0], &w[1]);
            if !big.lower.is_subset(&small.lower) || !small.upper.is_subset(&big.upper) {
                return Some(format!("monotonicity fails between eps {} and {}", big.eps, small.eps));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, j: u32, seed: u64) -> GridFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = DyadicGrid::new(Cube::unit(n), j).unwrap();
        let v = (0..grid.cell_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        GridFunction::new(grid, v).unwrap()
    }

    #[test]
    fn constant_has_zero_delta_and_energy() {
        let g = DyadicGrid::new(Cube::unit(2), 3).unwrap();
        let h = GridFunction::from_fn(g, |_| 2.5).unwrap();
        let d = h.haar_delta(&DyadicCell::root(2)).unwrap();
        assert!(d.values.iter().all(|&v| v == 0.0));
        assert_eq!(h.delta_k_energy(&DyadicCell::root(2), 2).unwrap(), 0.0);
    }

    #[test]
    fn half_indicator_delta() {
        let g = DyadicGrid::new(Cube::unit(1), 4).unwrap();
        let h = GridFunction::from_fn(g, |x| if x[0] < 0.5 { 1.0 } else { 0.0 }).unwrap();
        let d = h.haar_delta(&DyadicCell::root(1)).unwrap();
        for (i, v) in d.values.iter().enumerate() {
            assert_eq!(*v, if i < 8 { 0.5 } else { -0.5 });
        }
    }

    #[test]
    fn finest_level_delta_is_rejected() {
        let h = random(1, 3, 0);
        let q = DyadicCell { level: 3, index: vec![1] };
        assert!(h.haar_delta(&q).is_err());
        assert!(h.delta_k_energy(&DyadicCell::root(1), 3).is_err());
    }

    #[test]
    fn delta_has_zero_mean_and_orthogonality_holds() {
        let h = random(2, 4, 7);
        let a = h.haar_delta(&DyadicCell { level: 1, index: vec![0, 1] }).unwrap();
        let b = h.haar_delta(&DyadicCell { level: 2, index: vec![1, 2] }).unwrap();
        let c = h.haar_delta(&DyadicCell::root(2)).unwrap();
        assert!(a.values.iter().sum::<f64>().abs() < 1e-12);
        assert!(a.inner(&b).abs() < 1e-12);
        assert!(a.inner(&c).abs() < 1e-12);
        assert!(b.inner(&c).abs() < 1e-12);
    }

    #[test]
    fn parseval_identity() {
        for n in [1, 2] {
            let h = random(n, 5, 3);
            let m = h.mean(&DyadicCell::root(n)).unwrap();
            let lhs = h.map(|v| v - m).norm_sq();
            let rhs: f64 = h.delta_norms().iter().flatten().sum();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_rescales_under_affine_change_of_cube() {
        let n = 2;
        let h = random(n, 5, 9);
        let q = DyadicCell { level: 1, index: vec![1, 0] };
        // h restricted to q and pulled back to the unit cube
        let grid = DyadicGrid::new(Cube::unit(n), 4).unwrap();
        let vals: Vec<f64> = (0..grid.cell_count())
            .map(|i| {
                let mi = grid.multi_index(i);
                let fine: Vec<usize> = mi.iter().zip(&q.index).map(|(a, b)| (b << 4) + a).collect();
                h.values[h.grid.flat_index(&fine)]
            })
            .collect();
        let ht = GridFunction::new(grid, vals).unwrap();
        for k in 0..3 {
            let a = h.delta_k_energy(&q, k).unwrap();
            let b = ht.delta_k_energy(&DyadicCell::root(n), k).unwrap();
            assert!((a - 0.25 * b).abs() < 1e-14);
        }
    }

    #[test]
    fn mean_over_sets() {
        let h = random(2, 4, 1);
        let full = RasterSet::full(&h.grid);
        assert!((h.mean_over_set(&full).unwrap() - h.mean(&DyadicCell::root(2)).unwrap()).abs() < 1e-15);
        let e = RasterSet::from_fn(&h.grid, |x| x[0] < 0.3);
        assert_eq!(e.indicator().mean_over_set(&e).unwrap(), 1.0);
        let empty = RasterSet::from_fn(&h.grid, |_| false);
        assert!(h.mean_over_set(&empty).is_err());
    }

    #[test]
    fn linear_function_mean_over_centered_ball() {
        let g = DyadicGrid::new(Cube::unit(2), 7).unwrap();
        let h = GridFunction::from_fn(g.clone(), |x| 2.0 * x[0] - x[1]).unwrap();
        let c = [0.4, 0.55];
        let e = RasterSet::from_fn(&g, |x| ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt() <= 0.2);
        let v = h.mean_over_set(&e).unwrap();
        // raster asymmetry at level 7 moves the mean by at most a cell width
        assert!((v - (2.0 * c[0] - c[1])).abs() < 3.0 / 128.0);
    }

    #[test]
    fn oscillation_edge_cases() {
        let g = DyadicGrid::new(Cube::unit(1), 5).unwrap();
        let fam = SetFamily::NormBalls {
            radii: vec![0.25, 0.4],
            centers_per_axis: 3,
            p_norms: vec![2.0],
        };
        let h = GridFunction::from_fn(g.clone(), |_| 0.7).unwrap();
        assert!(oscillation_bad_cubes(&h, &fam, 0.0, 3, 0.05).unwrap().bad.is_empty());
        let h = random(1, 5, 2);
        let m = h.sup_norm();
        assert!(oscillation_bad_cubes(&h, &fam, 2.0 * m + 1e-12, 3, 0.05).unwrap().bad.is_empty());
        let rep = oscillation_bad_cubes(&h, &fam, 0.1, 3, 0.05).unwrap();
        for b in &rep.bad {
            assert!(rep.split_superset.contains(&b.cell));
        }
    }

    #[test]
    fn sandwich_constant_sequence() {
        let g = DyadicGrid::new(Cube::unit(2), 5).unwrap();
        let e = RasterSet::from_fn(&g, |x| x[0] + x[1] < 0.8);
        let fam = sandwich_construct(vec![e.clone(); 6], &[0.1, 0.01]).unwrap();
        for lv in &fam.levels {
            assert_eq!(lv.lower, e);
            assert_eq!(lv.upper, e);
        }
        assert!(fam.check().is_none());
    }

    #[test]
    fn sandwich_rate_violation_is_reported() {
        let g = DyadicGrid::new(Cube::unit(1), 6).unwrap();
        let a = RasterSet::from_fn(&g, |x| x[0] < 0.5);
        let b = RasterSet::from_fn(&g, |x| x[0] >= 0.5);
        let err = sandwich_construct(vec![a.clone(), a.clone(), a, b], &[0.1]).unwrap_err();
        assert!(err.to_string().contains("E_2"));
    }

    #[test]
    fn grid_function_file_round_trip() {
        let dir = std::env::temp_dir().join(format!("haar-rt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let h = random(2, 3, 4);
        let stem = dir.join("h");
        h.write(&stem).unwrap();
        assert_eq!(GridFunction::read(&stem).unwrap(), h);
        std::fs::remove_dir_all(&dir).ok();
    }
}
