use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use carleson_core::audit::{carleson_constant, PackingReport};
use carleson_core::coefficients::{compute_field, CoefficientField, FieldInputs};
use carleson_core::cubes::{default_tree, CubeTree};
use carleson_core::generators::{generate, GeneratedSpace};
use carleson_core::metric::{ahlfors_scan, RegularityReport};
use carleson_core::{Error, Result};

use crate::config::PipelineConfig;
use crate::svg;

/// An error with the pipeline stage it came from.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        exit_code(&self.error)
    }

    /// One-line JSON record for stderr.
    pub fn record(&self) -> String {
        serde_json::json!({
            "stage": self.stage,
            "error": error_kind(&self.error),
            "cause": self.error.to_string(),
            "exit": self.exit_code(),
        })
        .to_string()
    }
}

pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Domain(_) => "domain",
        Error::Construction(_) => "construction",
        Error::Numeric(_) => "numeric",
        Error::Coverage(_) => "coverage",
        Error::Unsupported(_) => "unsupported",
        Error::Format(_) => "format",
        Error::Io(_) => "io",
    }
}

/// 2 validation, 3 numeric or construction, 4 coverage, 1 i/o.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Domain(_) | Error::Format(_) | Error::Unsupported(_) => 2,
        Error::Numeric(_) | Error::Construction(_) => 3,
        Error::Coverage(_) => 4,
        Error::Io(_) => 1,
    }
}

fn at<T>(stage: &'static str, r: Result<T>) -> std::result::Result<T, StageError> {
    r.map_err(|error| StageError { stage, error })
}

#[derive(Debug, Serialize)]
pub struct FieldSummary {
    pub kind: String,
    pub evaluated: usize,
    pub flagged: usize,
    pub max: f64,
}

#[derive(Debug, Serialize)]
pub struct AuditSummary {
    pub kind: String,
    pub eps: f64,
    pub sup: f64,
    pub sup_root: Option<usize>,
    pub verdict: String,
    pub band: (i32, i32),
    pub profile: Vec<f64>,
    pub chebyshev_ok: bool,
}

#[derive(Debug, Serialize)]
pub struct AhlforsSummary {
    pub n: usize,
    /// Median of `mass(B(x, r)) / r^n` over the scan.
    pub density_constant: f64,
    pub c_lower: f64,
    pub c_upper: f64,
    pub doubling_estimate: f64,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub space: serde_json::Value,
    pub points: usize,
    pub total_mass: f64,
    pub seed: u64,
    pub rho: f64,
    pub c0: f64,
    pub levels: (i32, i32),
    pub cubes: usize,
    pub fields: Vec<FieldSummary>,
    pub audits: Vec<AuditSummary>,
    pub ahlfors: Option<AhlforsSummary>,
}

/// Everything computed by a run, before anything is written.
pub struct Outcome {
    pub generated: GeneratedSpace,
    pub tree: CubeTree,
    pub fields: Vec<CoefficientField>,
    pub reports: Vec<PackingReport>,
    pub ahlfors: Option<RegularityReport>,
    pub summary: Summary,
}

pub fn compute(cfg: &PipelineConfig, seed: u64) -> std::result::Result<Outcome, StageError> {
    at("config", cfg.validate())?;
    let kinds = at("config", cfg.kinds())?;
    let mut spec = cfg.space.clone();
    spec.seed = seed;
    let generated = at("generate", generate(&spec))?;
    let space = &generated.space;
    let tree = at("tree", default_tree(space, cfg.tree.rho, cfg.tree.c0, seed))?;

    let mask: Option<Vec<bool>> = match &cfg.mask {
        Some(m) => {
            at("mask", space.check_index(m.center))?;
            Some((0..space.len()).map(|i| space.dist(m.center, i) > m.radius).collect())
        }
        None => None,
    };
    let inputs = FieldInputs {
        chart: generated.chart.as_ref(),
        mask: mask.as_deref(),
        jacobian: None,
    };
    let mut fields: Vec<CoefficientField> = at(
        "coefficients",
        kinds
            .par_iter()
            .map(|&k| compute_field(k, space, &tree, inputs, &cfg.field))
            .collect(),
    )?;
    if let Some([lo, hi]) = cfg.tree.bands {
        for f in &mut fields {
            f.restrict_band(|e| (lo..=hi).contains(&e.level), "outside the configured bands");
        }
    }

    let n = space.dim_n();
    let mut reports = Vec::new();
    for f in &fields {
        for &eps in &cfg.eps {
            reports.push(at("audit", carleson_constant(&tree, f, eps, n))?);
        }
    }

    let ahlfors = match &cfg.ahlfors_scan {
        Some(a) => {
            let k = a.centers.min(space.len());
            let centers: Vec<usize> = (0..k).map(|i| i * space.len() / k).collect();
            Some(at("ahlfors_scan", ahlfors_scan(space, n, &centers, &a.scales, a.deviation))?)
        }
        None => None,
    };

    let summary = Summary {
        space: serde_json::to_value(&generated.spec).expect("generator spec serializes"),
        points: space.len(),
        total_mass: space.total_mass(),
        seed,
        rho: tree.rho,
        c0: tree.c0,
        levels: (tree.k_min, tree.k_max),
        cubes: tree.len(),
        fields: fields
            .iter()
            .map(|f| FieldSummary {
                kind: f.kind.name().to_string(),
                evaluated: f.entries.len() - f.flagged(),
                flagged: f.flagged(),
                max: f.entries.iter().filter_map(|e| e.value).fold(0.0, f64::max),
            })
            .collect(),
        audits: reports
            .iter()
            .map(|r| AuditSummary {
                kind: r.kind.clone(),
                eps: r.eps,
                sup: r.sup,
                sup_root: r.sup_root,
                verdict: r.verdict.clone(),
                band: r.band,
                profile: r.profile.clone(),
                chebyshev_ok: r.chebyshev_ok,
            })
            .collect(),
        ahlfors: ahlfors.as_ref().map(|a| AhlforsSummary {
            n: a.n,
            density_constant: a.median_ratio,
            c_lower: a.c_lower,
            c_upper: a.c_upper,
            doubling_estimate: a.doubling_estimate,
        }),
    };
    Ok(Outcome {
        generated,
        tree,
        fields,
        reports,
        ahlfors,
        summary,
    })
}

/// Horizontal position of each point in the heatmaps.
pub fn locations(g: &GeneratedSpace) -> Vec<f64> {
    let s = &g.space;
    (0..s.len())
        .map(|i| match (&g.chart, s.coord(i)) {
            (Some(c), _) => c.params[i][0],
            (None, Some(x)) => x[0],
            (None, None) => i as f64,
        })
        .collect()
}

fn eps_tag(eps: f64) -> String {
    format!("{eps}").replace('.', "p")
}

pub fn write(o: &Outcome, cfg: &PipelineConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    o.generated.space.write_json(&out.join("space.json"))?;
    o.tree.write_json(&out.join("tree.json"))?;
    let loc = locations(&o.generated);
    for f in &o.fields {
        let name = f.kind.name();
        f.write_csv(&out.join(format!("field_{name}.csv")))?;
        f.write_json(&out.join(format!("field_{name}.json")))?;
        std::fs::write(out.join(format!("heatmap_{name}.svg")), svg::heatmap(&o.tree, f, &loc))?;
    }
    for r in &o.reports {
        let stem = format!("packing_{}_eps{}", r.kind, eps_tag(r.eps));
        r.write_csv(&out.join(format!("{stem}.csv")))?;
        r.write_json(&out.join(format!("{stem}.json")))?;
    }
    if let Some(a) = &o.ahlfors {
        std::fs::write(out.join("ahlfors.json"), serde_json::to_string_pretty(a)?)?;
    }
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&o.summary)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&Error::Domain(String::new())), 2);
        assert_eq!(exit_code(&Error::Format(String::new())), 2);
        assert_eq!(exit_code(&Error::Unsupported(String::new())), 2);
        assert_eq!(exit_code(&Error::Numeric(String::new())), 3);
        assert_eq!(exit_code(&Error::Construction(String::new())), 3);
        assert_eq!(exit_code(&Error::Coverage(String::new())), 4);
    }

    #[test]
    fn eps_tags_are_filename_safe() {
        assert_eq!(eps_tag(0.1), "0p1");
        assert_eq!(eps_tag(1.0), "1");
    }
}
