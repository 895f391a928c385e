//! Flatness coefficients per cube of a dyadic system, and their fields.

pub mod alpha;
pub mod glued;
pub mod norms;
pub mod osc;
pub mod xi;

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cubes::{find_l_good_cube, ShiftedLattice};
use crate::cubes::CubeTree;
use crate::error::{domain, Error, Result};
use crate::generators::Chart;
use crate::haar::GridFunction;
use crate::metric::MetricSpaceSample;

pub use alpha::{alpha_at, alpha_coefficient, AlphaConfig, AlphaEvaluation, Plane};
pub use glued::{alpha_cube_adapted, metric_jacobian_field, wavelet_term, GluedSpace, JacobianField, TildeConfig};
pub use norms::{md_coefficient, md_fit, MdFit, NormModel};
pub use osc::{osc_coefficient, OscConfig, OscEvaluation};
pub use xi::{xi_coefficient, XiConfig, XiEvaluation};

/// Flag prefix for cubes outside the audited scale band.
pub const OUT_OF_BAND: &str = "out of band";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientKind {
    Osc,
    OscE,
    Alpha,
    AlphaE,
    AlphaTilde,
    Md,
    Xi,
}

impl CoefficientKind {
    pub const ALL: [CoefficientKind; 7] = [
        CoefficientKind::Osc,
        CoefficientKind::OscE,
        CoefficientKind::Alpha,
        CoefficientKind::AlphaE,
        CoefficientKind::AlphaTilde,
        CoefficientKind::Md,
        CoefficientKind::Xi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CoefficientKind::Osc => "osc",
            CoefficientKind::OscE => "osc_e",
            CoefficientKind::Alpha => "alpha",
            CoefficientKind::AlphaE => "alpha_e",
            CoefficientKind::AlphaTilde => "alpha_tilde",
            CoefficientKind::Md => "md",
            CoefficientKind::Xi => "xi",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown coefficient kind {s:?}")))
    }

    pub fn needs_mask(self) -> bool {
        matches!(self, CoefficientKind::OscE | CoefficientKind::AlphaE)
    }

    pub fn needs_chart(self) -> bool {
        matches!(self, CoefficientKind::AlphaTilde | CoefficientKind::Md)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldEntry {
    pub cube: usize,
    pub level: i32,
    pub side: f64,
    /// `None` when the cube is flagged.
    pub value: Option<f64>,
    pub flag: Option<String>,
    pub c: Option<f64>,
    pub norm: Option<String>,
    pub plane: Option<usize>,
    /// Secondary figure: LP part for alpha, `md` for alpha-tilde, `ζ` for xi.
    pub residual: Option<f64>,
}

impl FieldEntry {
    fn flagged(cube: usize, level: i32, side: f64, why: String) -> Self {
        Self {
            cube,
            level,
            side,
            value: None,
            flag: Some(why),
            c: None,
            norm: None,
            plane: None,
            residual: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    /// Coefficients at cube `Q` are taken on `B(x_Q, dilation ℓ(Q))`.
    pub dilation: f64,
    pub osc: OscConfig,
    pub alpha: AlphaConfig,
    pub tilde: TildeConfig,
    pub xi: XiConfig,
    /// Samples per cube for `md` fits.
    pub md_samples: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            dilation: 1.0,
            osc: OscConfig::default(),
            alpha: AlphaConfig::default(),
            tilde: TildeConfig::default(),
            xi: XiConfig::default(),
            md_samples: 64,
        }
    }
}

/// What a field computation may draw on besides the space and tree.
#[derive(Clone, Copy, Default)]
pub struct FieldInputs<'a> {
    pub chart: Option<&'a Chart>,
    pub mask: Option<&'a [bool]>,
    /// `𝒥_g` over the chart domain; built on demand when absent.
    pub jacobian: Option<&'a GridFunction>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientField {
    pub kind: CoefficientKind,
    pub dilation: f64,
    pub entries: Vec<FieldEntry>,
}

impl CoefficientField {
    pub fn value(&self, cube: usize) -> Option<f64> {
        self.entries.iter().find(|e| e.cube == cube).and_then(|e| e.value)
    }

    pub fn flagged(&self) -> usize {
        self.entries.iter().filter(|e| e.value.is_none()).count()
    }

    /// Moves every entry rejected by `keep` out of the audited band.
    pub fn restrict_band(&mut self, keep: impl Fn(&FieldEntry) -> bool, why: &str) {
        for e in &mut self.entries {
            if !keep(e) {
                e.value = None;
                e.flag = Some(format!("{OUT_OF_BAND}: {why}"));
            }
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "cube,level,side,value,c,norm,plane,residual,flag")?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
        for e in &self.entries {
            writeln!(
                f,
                "{},{},{:.17e},{},{},{},{},{},{}",
                e.cube,
                e.level,
                e.side,
                opt(e.value),
                opt(e.c),
                e.norm.clone().unwrap_or_default(),
                e.plane.map(|p| p.to_string()).unwrap_or_default(),
                opt(e.residual),
                e.flag.as_deref().unwrap_or("").replace(',', ";"),
            )?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn is_scale_error(e: &Error) -> bool {
    matches!(e, Error::Domain(m) if m.starts_with("degenerate scale"))
}

/// Evaluates `kind` on every cube of `tree`. Cubes below the scale floor or
/// without an admissible lattice cube are flagged; other failures abort.
pub fn compute_field(
    kind: CoefficientKind,
    space: &MetricSpaceSample,
    tree: &CubeTree,
    inputs: FieldInputs<'_>,
    cfg: &FieldConfig,
) -> Result<CoefficientField> {
    if !(cfg.dilation > 0.0) {
        return domain("dilation must be positive");
    }
    if let Some(m) = inputs.mask {
        if m.len() != space.len() {
            return domain("mask length must match the space");
        }
    }
    if kind.needs_mask() && inputs.mask.is_none() {
        return domain(format!("{} needs a subset mask", kind.name()));
    }
    if matches!(kind, CoefficientKind::Alpha | CoefficientKind::AlphaE) && !space.has_coords() {
        return Err(Error::Unsupported(format!("{} needs ambient coordinates", kind.name())));
    }
    let built;
    let mut jac = inputs.jacobian;
    let mut lattice = None;
    if kind.needs_chart() {
        let chart = inputs
            .chart
            .ok_or_else(|| Error::Unsupported(format!("{} needs a chart", kind.name())))?;
        if kind == CoefficientKind::AlphaTilde && jac.is_none() {
            built = metric_jacobian_field(chart, space, chart.grid.level)?;
            jac = Some(&built.field);
        }
        lattice = Some(ShiftedLattice::new(chart.grid.root.clone()));
    }
    let mask = match kind {
        CoefficientKind::Osc | CoefficientKind::Alpha | CoefficientKind::Md | CoefficientKind::Xi => None,
        _ => inputs.mask,
    };
    let spacing = space.min_spacing();
    let spacing = if spacing.is_finite() { spacing } else { 0.0 };
    let floor = 20.0 * spacing;

    let entries: Result<Vec<FieldEntry>> = tree
        .cubes
        .par_iter()
        .map(|node| {
            let side = tree.side(node.id);
            let r = cfg.dilation * side;
            let base = FieldEntry {
                cube: node.id,
                level: node.level,
                side,
                value: None,
                flag: None,
                c: None,
                norm: None,
                plane: None,
                residual: None,
            };
            if r < floor {
                return Ok(FieldEntry::flagged(node.id, node.level, side, format!("{OUT_OF_BAND}: below scale floor ({r} < {floor})")));
            }
            let out = match kind {
                CoefficientKind::Osc | CoefficientKind::OscE => {
                    osc_coefficient(space, node.center, r, mask, &cfg.osc).map(|e| FieldEntry {
                        value: Some(e.value),
                        c: Some(e.c),
                        ..base.clone()
                    })
                }
                CoefficientKind::Alpha | CoefficientKind::AlphaE => {
                    alpha_coefficient(space, node.center, r, mask, &cfg.alpha).map(|e| FieldEntry {
                        value: Some(e.value),
                        c: Some(e.c),
                        norm: Some(e.norm.clone()),
                        plane: e.plane.as_ref().map(|p| p.id),
                        residual: Some(e.lp_value),
                        ..base.clone()
                    })
                }
                CoefficientKind::Xi => xi_coefficient(space, inputs.chart, node.center, r, &cfg.xi).map(|e| FieldEntry {
                    value: Some(e.value),
                    norm: Some(e.norm.tag()),
                    residual: Some(e.zeta),
                    ..base.clone()
                }),
                CoefficientKind::Md | CoefficientKind::AlphaTilde => {
                    let chart = inputs.chart.unwrap();
                    let good = match find_l_good_cube(chart, space, tree, node.id, lattice.as_ref().unwrap()) {
                        Ok(g) => g,
                        Err(Error::Domain(m)) => {
                            return Ok(FieldEntry::flagged(node.id, node.level, side, format!("no lattice cube: {m}")))
                        }
                        Err(e) => return Err(e),
                    };
                    if kind == CoefficientKind::Md {
                        md_coefficient(chart, space, &good.cube.cube, cfg.md_samples).map(|f| FieldEntry {
                            value: Some(f.value),
                            norm: Some(f.norm.tag()),
                            residual: Some(f.residual),
                            ..base.clone()
                        })
                    } else {
                        alpha_cube_adapted(chart, space, inputs.mask, jac.unwrap(), &good.cube.cube, &cfg.tilde).map(|t| {
                            FieldEntry {
                                value: Some(t.value),
                                c: Some(t.c),
                                norm: Some(t.norm.tag()),
                                residual: Some(t.md),
                                ..base.clone()
                            }
                        })
                    }
                }
            };
            match out {
                Err(e) if is_scale_error(&e) => Ok(FieldEntry::flagged(node.id, node.level, side, format!("{OUT_OF_BAND}: {e}"))),
                other => other,
            }
        })
        .collect();
    Ok(CoefficientField {
        kind,
        dilation: cfg.dilation,
        entries: entries?,
    })
}
