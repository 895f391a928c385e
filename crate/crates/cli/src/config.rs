use serde::{Deserialize, Serialize};

use carleson_core::coefficients::{CoefficientKind, FieldConfig};
use carleson_core::cubes::{DEFAULT_C0, DEFAULT_RHO};
use carleson_core::generators::GeneratorSpec;
use carleson_core::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeParams {
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_c0")]
    pub c0: f64,
    /// Inclusive level range to audit; other cubes are moved out of band.
    #[serde(default)]
    pub bands: Option<[i32; 2]>,
}

fn default_rho() -> f64 {
    DEFAULT_RHO
}

fn default_c0() -> f64 {
    DEFAULT_C0
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            rho: DEFAULT_RHO,
            c0: DEFAULT_C0,
            bands: None,
        }
    }
}

/// Points of `B(center, radius)` are removed from the subset `E`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSpec {
    pub center: usize,
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AhlforsSpec {
    pub scales: Vec<f64>,
    #[serde(default = "default_centers")]
    pub centers: usize,
    #[serde(default = "default_deviation")]
    pub deviation: f64,
}

fn default_centers() -> usize {
    32
}

fn default_deviation() -> f64 {
    2.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub space: GeneratorSpec,
    #[serde(default)]
    pub tree: TreeParams,
    pub coefficients: Vec<String>,
    /// Search settings shared by every coefficient field.
    #[serde(default)]
    pub field: FieldConfig,
    pub eps: Vec<f64>,
    #[serde(default)]
    pub mask: Option<MaskSpec>,
    #[serde(default)]
    pub ahlfors_scan: Option<AhlforsSpec>,
    /// Overrides `--seed`.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Overrides `--out`.
    #[serde(default)]
    pub out: Option<String>,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn kinds(&self) -> Result<Vec<CoefficientKind>> {
        self.coefficients.iter().map(|s| CoefficientKind::parse(s)).collect()
    }

    /// Everything that can be checked before generating anything.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Domain(m));
        let TreeParams { rho, c0, bands } = self.tree;
        if !(rho > 0.0 && rho < 1.0) {
            return bad(format!("rho = {rho} must lie in (0, 1)"));
        }
        if !(c0 > 0.0) || 2.0 * rho / (1.0 - rho) + 10.0 * c0 >= 1.0 {
            return bad(format!("rho = {rho}, c0 = {c0} violate 2 rho / (1 - rho) + 10 c0 < 1"));
        }
        if let Some([lo, hi]) = bands {
            if lo > hi {
                return bad(format!("empty band [{lo}, {hi}]"));
            }
        }
        if self.eps.is_empty() {
            return bad("eps list is empty".into());
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
            return bad(format!("eps = {e} is not a finite nonnegative number"));
        }
        if self.coefficients.is_empty() {
            return bad("coefficient list is empty".into());
        }
        let kinds = self.kinds()?;
        for (i, k) in kinds.iter().enumerate() {
            if kinds[..i].contains(k) {
                return bad(format!("coefficient {} listed twice", k.name()));
            }
        }
        if kinds.iter().any(|k| k.needs_mask()) && self.mask.is_none() {
            return bad("osc_e / alpha_e need a mask".into());
        }
        if let Some(m) = &self.mask {
            if !(m.radius >= 0.0) {
                return bad("mask radius must be nonnegative".into());
            }
        }
        if !(self.field.dilation > 0.0) {
            return bad("dilation must be positive".into());
        }
        if let Some(a) = &self.ahlfors_scan {
            if a.scales.is_empty() || a.scales.iter().any(|r| !(*r > 0.0)) || a.centers == 0 {
                return bad("ahlfors_scan needs positive scales and at least one center".into());
            }
            if !(a.deviation >= 1.0) {
                return bad("ahlfors_scan deviation must be at least 1".into());
            }
        }
        if let Some(h) = self.space.spacing {
            if !(h > 0.0) {
                return bad(format!("spacing = {h} must be positive"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> PipelineConfig {
        PipelineConfig::parse(r#"{"space": {"kind": "segment", "spacing": 0.01}, "coefficients": ["osc"], "eps": [0.1]}"#)
            .unwrap()
    }

    #[test]
    fn defaults_validate() {
        let c = minimal();
        assert_eq!(c.tree.rho, DEFAULT_RHO);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_tree_and_lists() {
        let mut c = minimal();
        c.tree.rho = 2.0;
        assert!(c.validate().is_err());
        let mut c = minimal();
        c.eps.clear();
        assert!(c.validate().is_err());
        let mut c = minimal();
        c.coefficients = vec!["beta".into()];
        assert!(c.validate().is_err());
        let mut c = minimal();
        c.coefficients = vec!["osc_e".into()];
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_fields_are_format_errors() {
        let e = PipelineConfig::parse(r#"{"space": {"kind": "segment"}, "coefficients": [], "eps": [], "extra": 1}"#);
        assert!(matches!(e, Err(Error::Format(_))));
    }
}
