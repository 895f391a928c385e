//! `carleson`: generate spaces, build cube trees, compute coefficient fields
//! and audit their packing conditions.

mod config;
mod pipeline;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use carleson_core::audit::carleson_constant;
use carleson_core::coefficients::{compute_field, CoefficientField, CoefficientKind, FieldConfig, FieldInputs};
use carleson_core::cubes::{default_tree, CubeTree, DEFAULT_C0, DEFAULT_RHO};
use carleson_core::generators::{generate, GeneratedSpace, GeneratorSpec};
use carleson_core::metric::MetricSpaceSample;
use carleson_core::{Error, Result};

use config::PipelineConfig;
use pipeline::StageError;

/// Thread count for the parallel stages; unset means one per core.
const THREADS_ENV: &str = "CARLESON_THREADS";

#[derive(Parser)]
#[command(name = "carleson", version, about = "Dyadic cubes, flatness coefficients and Carleson packing audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a sample space and write it as JSON.
    Gen(GenArgs),
    /// Build the dyadic cube tree of a space.
    Tree(TreeArgs),
    /// Compute one coefficient field over a cube tree.
    Coeff(CoeffArgs),
    /// Audit a coefficient field at one or more thresholds.
    Audit(AuditArgs),
    /// Run the whole pipeline from a config file.
    Run(RunArgs),
}

#[derive(Args)]
struct SpecArgs {
    /// Generator spec file (JSON); its fields take precedence over the flags below.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Generator kind, e.g. segment, lipschitz_graph, bilip_curve, snowflake, four_corner_cantor.
    #[arg(long)]
    kind: Option<String>,
    /// Sample spacing.
    #[arg(long)]
    spacing: Option<f64>,
    /// Recursion depth for Cantor-type kinds.
    #[arg(long)]
    depth: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SpecArgs {
    fn load(&self) -> Result<GeneratorSpec> {
        if let Some(p) = &self.spec {
            return Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?);
        }
        let kind = self
            .kind
            .as_deref()
            .ok_or_else(|| Error::Domain("give --spec or --kind".into()))?;
        let mut s = GeneratorSpec::new(kind).seed(self.seed);
        if let Some(h) = self.spacing {
            s = s.spacing(h);
        }
        if let Some(m) = self.depth {
            s = s.depth(m);
        }
        Ok(s)
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Output space file.
    #[arg(long, default_value = "space.json")]
    out: PathBuf,
}

#[derive(Args)]
struct TreeArgs {
    #[arg(long)]
    space: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RHO)]
    rho: f64,
    #[arg(long, default_value_t = DEFAULT_C0)]
    c0: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "tree.json")]
    out: PathBuf,
}

#[derive(Args)]
struct CoeffArgs {
    /// Space to evaluate on. Chart-based coefficients need --spec instead.
    #[arg(long, conflicts_with = "spec")]
    space: Option<PathBuf>,
    #[command(flatten)]
    gen: SpecArgs,
    #[arg(long)]
    tree: PathBuf,
    /// osc, osc_e, alpha, alpha_e, alpha_tilde, md or xi.
    #[arg(long)]
    coefficient: String,
    /// Coefficients at Q are taken on B(x_Q, dilation l(Q)).
    #[arg(long, default_value_t = 1.0)]
    dilation: f64,
    /// Subset mask for osc_e / alpha_e: remove B(center, radius).
    #[arg(long, requires = "mask_radius")]
    mask_center: Option<usize>,
    #[arg(long)]
    mask_radius: Option<f64>,
    /// Output field (JSON); a CSV with the same stem is written next to it.
    #[arg(long, default_value = "field.json")]
    out: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    field: PathBuf,
    /// Thresholds, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    eps: Vec<f64>,
    /// Exponent of l(Q) in the packing sum.
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value = "packing.json")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory; the config's "out" takes precedence.
    #[arg(long, default_value = "carleson-out")]
    out: PathBuf,
    /// Seed for generation and nets; the config's "seed" takes precedence.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn fail(stage: &'static str) -> impl Fn(Error) -> StageError {
    move |error| StageError { stage, error }
}

type Outcome = std::result::Result<(), StageError>;

fn cmd_gen(a: &GenArgs) -> Outcome {
    let spec = a.spec.load().map_err(fail("config"))?;
    let g = generate(&spec).map_err(fail("generate"))?;
    g.space.write_json(&a.out).map_err(fail("write"))?;
    println!("{} points, total mass {:.6}", g.space.len(), g.space.total_mass());
    Ok(())
}

fn cmd_tree(a: &TreeArgs) -> Outcome {
    let s = MetricSpaceSample::read_json(&a.space).map_err(fail("read"))?;
    let t = default_tree(&s, a.rho, a.c0, a.seed).map_err(fail("tree"))?;
    t.write_json(&a.out).map_err(fail("write"))?;
    println!("{} cubes on levels {}..={}", t.len(), t.k_min, t.k_max);
    Ok(())
}

fn cmd_coeff(a: &CoeffArgs) -> Outcome {
    let kind = CoefficientKind::parse(&a.coefficient).map_err(fail("config"))?;
    let generated: Option<GeneratedSpace> = match &a.space {
        Some(_) => None,
        None => Some(a.gen.load().and_then(|s| generate(&s)).map_err(fail("generate"))?),
    };
    let read;
    let space = match (&a.space, &generated) {
        (Some(p), _) => {
            read = MetricSpaceSample::read_json(p).map_err(fail("read"))?;
            &read
        }
        (None, Some(g)) => &g.space,
        (None, None) => unreachable!(),
    };
    let tree = CubeTree::read_json(&a.tree).map_err(fail("read"))?;
    let mask: Option<Vec<bool>> = match (a.mask_center, a.mask_radius) {
        (Some(c), Some(r)) => {
            space.check_index(c).map_err(fail("mask"))?;
            Some((0..space.len()).map(|i| space.dist(c, i) > r).collect())
        }
        _ => None,
    };
    let cfg = FieldConfig {
        dilation: a.dilation,
        ..FieldConfig::default()
    };
    let inputs = FieldInputs {
        chart: generated.as_ref().and_then(|g| g.chart.as_ref()),
        mask: mask.as_deref(),
        jacobian: None,
    };
    let f = compute_field(kind, space, &tree, inputs, &cfg).map_err(fail("coefficients"))?;
    f.write_json(&a.out).map_err(fail("write"))?;
    f.write_csv(&a.out.with_extension("csv")).map_err(fail("write"))?;
    println!("{}: {} cubes, {} flagged", kind.name(), f.entries.len(), f.flagged());
    Ok(())
}

fn cmd_audit(a: &AuditArgs) -> Outcome {
    let tree = CubeTree::read_json(&a.tree).map_err(fail("read"))?;
    let field = CoefficientField::read_json(&a.field).map_err(fail("read"))?;
    let mut reports = Vec::new();
    for &eps in &a.eps {
        let r = carleson_constant(&tree, &field, eps, a.n).map_err(fail("audit"))?;
        println!("{} eps {eps}: C = {:.6}, {}", r.kind, r.sup, r.verdict);
        reports.push(r);
    }
    let text = serde_json::to_string_pretty(&reports).map_err(|e| fail("write")(e.into()))?;
    std::fs::write(&a.out, text).map_err(|e| fail("write")(e.into()))?;
    Ok(())
}

fn cmd_run(a: &RunArgs) -> Outcome {
    let text = std::fs::read_to_string(&a.config).map_err(|e| fail("config")(e.into()))?;
    let cfg = PipelineConfig::parse(&text).map_err(fail("config"))?;
    let out: PathBuf = cfg.out.as_ref().map(PathBuf::from).unwrap_or_else(|| a.out.clone());
    let seed = cfg.seed.unwrap_or(a.seed);
    let o = pipeline::compute(&cfg, seed)?;
    pipeline::write(&o, &cfg, &out).map_err(fail("write"))?;
    for r in &o.summary.audits {
        println!("{} eps {}: C = {:.6}, {}", r.kind, r.eps, r.sup, r.verdict);
    }
    if let Some(h) = &o.summary.ahlfors {
        println!("ahlfors n = {}: density constant {:.4}", h.n, h.density_constant);
    }
    println!("artifacts in {}", display(&out));
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn init_threads() -> std::result::Result<(), StageError> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .parse()
        .map_err(|_| fail("config")(Error::Domain(format!("{THREADS_ENV}={v:?} is not a thread count"))))?;
    // a second initialization only happens in tests and is harmless
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Tree(a) => cmd_tree(a),
        Command::Coeff(a) => cmd_coeff(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Run(a) => cmd_run(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
