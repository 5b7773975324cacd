//! Orchestration behind the `halfspace` binary.
//!
//! Each subcommand builds a report struct, serializes it, and maps the
//! outcome onto the exit-code contract: 0 ok, 1 usage or IO, 2 when the
//! boundary condition fails the well-posedness test.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use halfspace_core::exppoly::ExpPolyDocument;
use halfspace_core::grid::SampledVec;
use halfspace_core::maxwell::{solve_layer_with_maxwell, MaxwellBcDocument};
use halfspace_core::moments::{matrix_from_rows, SystemDocument};
use halfspace_core::solver::{self, instability_witness, Reduction, SolutionNorms, WitnessSample};
use halfspace_core::transform::{build_decomposition, AnalysisReport};
use halfspace_core::wellposed::{check_general_bc, predicted_counts, PredictedCounts};
use halfspace_core::{
    BcKind, BoundaryOperator, ExpPolyVec, MaxwellBC, MomentSystem, SpectralFactorization,
    SubspaceDecomposition, WellposednessVerdict,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ILL_POSED: i32 = 2;

/// Bounds on `--tol-eig`.
pub const TOL_EIG_RANGE: (f64, f64) = (1e-14, 1e-6);

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] halfspace_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use halfspace_core::Error as E;
        match self {
            CliError::Core(E::Unsolvable(_) | E::NonzeroR2(_) | E::SingularCompatibility(_)) => {
                EXIT_ILL_POSED
            }
            _ => EXIT_USAGE,
        }
    }

    /// Machine-readable form printed on stderr.
    pub fn to_json(&self) -> String {
        let kind = match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Json(_) => "json",
            CliError::Core(_) => "validation",
        };
        serde_json::json!({ "error": kind, "message": self.to_string(), "exit_code": self.exit_code() }).to_string()
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Parser, Debug, Clone)]
#[command(
    name = "halfspace",
    version,
    about = "Analyse and solve linear Grad moment systems in half-space"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Builtin `kramers3[:nu=1]`, `full3d:M=5[,nu=1]`, `reduced:M=3[,nu=1]`, or a system JSON path
    #[arg(long, global = true, default_value = "kramers3")]
    pub system: String,

    /// `grad:chi=1`, `modified:chi=1,H=flux|identity`, `none`, or a BC JSON path
    #[arg(long, global = true)]
    pub bc: Option<String>,

    /// Source h: exp-poly JSON, or CSV rows `y, h_1, …` (norms only)
    #[arg(long, global = true)]
    pub source: Option<PathBuf>,

    /// Decay weight a; defaults to 0.9·min(1/λ_max, min source rate)
    #[arg(long, global = true)]
    pub weight: Option<f64>,

    /// Write the report here instead of stdout
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Absolute zero-eigenvalue threshold, within [1e-14, 1e-6]
    #[arg(long, global = true)]
    pub tol_eig: Option<f64>,

    /// Samples for CSV output of a solution
    #[arg(long, global = true, default_value_t = 513)]
    pub grid_points: usize,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Subcommand, Debug, Clone, PartialEq)]
pub enum Command {
    /// Decomposition and spectral report
    Analyze,
    /// Well-posedness verdict for a boundary condition
    CheckBc,
    /// Closed-form solution for a source and boundary condition
    Solve,
    /// Search for an instability witness
    Probe {
        /// Required ‖z+(0)‖ for a unit-norm source
        #[arg(long, default_value_t = 1e3)]
        target: f64,
    },
    /// Built-in walkthroughs
    Demo {
        #[arg(default_value = "kramers3")]
        name: String,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// Validated run parameters.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub system: String,
    pub bc: Option<String>,
    pub source: Option<PathBuf>,
    pub weight: Option<f64>,
    pub out: Option<PathBuf>,
    pub tol_eig: Option<f64>,
    pub grid_points: usize,
    pub format: Format,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            system: "kramers3".into(),
            bc: None,
            source: None,
            weight: None,
            out: None,
            tol_eig: None,
            grid_points: 513,
            format: Format::Json,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.weight {
            if !(a > 0.0 && a.is_finite()) {
                return Err(usage(format!("--weight must be positive, got {a}")));
            }
        }
        if let Some(t) = self.tol_eig {
            if !(TOL_EIG_RANGE.0..=TOL_EIG_RANGE.1).contains(&t) {
                return Err(usage(format!("--tol-eig {t} outside [1e-14, 1e-6]")));
            }
        }
        if self.grid_points < 2 {
            return Err(usage("--grid-points must be at least 2"));
        }
        Ok(())
    }
}

impl From<Cli> for RunConfig {
    fn from(c: Cli) -> Self {
        Self {
            command: c.command,
            system: c.system,
            bc: c.bc,
            source: c.source,
            weight: c.weight,
            out: c.out,
            tol_eig: c.tol_eig,
            grid_points: c.grid_points,
            format: c.format,
        }
    }
}

/// What `run` produced: the rendered report and the exit status it implies.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub text: String,
    pub exit_code: i32,
}

/// `name:key=value,key=value` → name and pairs.
fn parse_spec(s: &str) -> Result<(String, Vec<(String, String)>)> {
    let (name, rest) = s.split_once(':').unwrap_or((s, ""));
    let mut pairs = Vec::new();
    for kv in rest.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("expected key=value in '{s}', got '{kv}'")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok((name.trim().to_string(), pairs))
}

fn param<T: std::str::FromStr>(
    pairs: &[(String, String)],
    key: &str,
    default: Option<T>,
) -> Result<T> {
    match pairs.iter().find(|(k, _)| k.eq_ignore_ascii_case(key)) {
        Some((_, v)) => v
            .parse()
            .map_err(|_| usage(format!("cannot parse {key}={v}"))),
        None => default.ok_or_else(|| usage(format!("missing parameter {key}"))),
    }
}

fn check_keys(pairs: &[(String, String)], allowed: &[&str]) -> Result<()> {
    for (k, _) in pairs {
        if !allowed.iter().any(|a| a.eq_ignore_ascii_case(k)) {
            return Err(usage(format!(
                "unknown parameter '{k}' (expected one of {allowed:?})"
            )));
        }
    }
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_system(spec: &str) -> Result<MomentSystem> {
    let path = Path::new(spec);
    if spec.ends_with(".json") || path.is_file() {
        let doc: SystemDocument = serde_json::from_str(&read(path)?)?;
        return Ok(MomentSystem::from_document(&doc)?);
    }
    let (name, pairs) = parse_spec(spec)?;
    match name.as_str() {
        "kramers3" => {
            check_keys(&pairs, &["nu"])?;
            Ok(MomentSystem::kramers3(param(&pairs, "nu", Some(1.0))?)?)
        }
        "full3d" => {
            check_keys(&pairs, &["M", "nu"])?;
            Ok(MomentSystem::full3d(
                param(&pairs, "M", None)?,
                param(&pairs, "nu", Some(1.0))?,
            )?)
        }
        "reduced" => {
            check_keys(&pairs, &["M", "nu"])?;
            Ok(MomentSystem::reduced_couette(
                param(&pairs, "M", None)?,
                param(&pairs, "nu", Some(1.0))?,
            )?)
        }
        other => Err(usage(format!("unknown system '{other}'"))),
    }
}

/// A raw boundary operator `B3 · V3ᵀW(0) = g` over the reduced unknowns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomBcDocument {
    pub kind: BcKind,
    #[serde(rename = "B3")]
    pub b3: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<f64>>,
}

/// A boundary condition ready for a given decomposition.
#[derive(Clone, Debug)]
pub enum LoadedBc {
    Maxwell {
        bc: MaxwellBC,
        g1: Option<DVector<f64>>,
        g2: Option<DVector<f64>>,
    },
    Custom(BoundaryOperator),
}

impl LoadedBc {
    pub fn operator(&self, dec: &SubspaceDecomposition) -> Result<BoundaryOperator> {
        match self {
            LoadedBc::Maxwell { bc, .. } => Ok(bc.boundary_operator(dec, None)?),
            LoadedBc::Custom(op) => Ok(op.clone()),
        }
    }

    pub fn kind(&self) -> BcKind {
        match self {
            LoadedBc::Maxwell { bc, .. } => bc.kind,
            LoadedBc::Custom(op) => op.description,
        }
    }
}

pub fn load_bc(spec: Option<&str>, sys: &MomentSystem, dim3: usize) -> Result<LoadedBc> {
    let spec = spec.unwrap_or("none");
    let path = Path::new(spec);
    if spec.ends_with(".json") || path.is_file() {
        let text = read(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        if value.get("B3").is_some() {
            let doc: CustomBcDocument = serde_json::from_value(value)?;
            let b3 = if doc.b3.is_empty() {
                DMatrix::zeros(0, dim3)
            } else {
                matrix_from_rows(&doc.b3)?
            };
            let g = doc
                .g
                .map(DVector::from_vec)
                .unwrap_or_else(|| DVector::zeros(b3.nrows()));
            return Ok(LoadedBc::Custom(BoundaryOperator::new(
                b3,
                g,
                BcKind::Custom,
            )?));
        }
        let doc: MaxwellBcDocument = serde_json::from_value(value)?;
        return Ok(LoadedBc::Maxwell {
            bc: doc.assemble(sys)?,
            g1: doc.g1.map(DVector::from_vec),
            g2: doc.g2.map(DVector::from_vec),
        });
    }
    let (name, pairs) = parse_spec(spec)?;
    let doc = match name.as_str() {
        "none" => {
            check_keys(&pairs, &[])?;
            return Ok(LoadedBc::Custom(BoundaryOperator::homogeneous(
                DMatrix::zeros(0, dim3),
                BcKind::Custom,
            )));
        }
        "grad" => {
            check_keys(&pairs, &["chi"])?;
            MaxwellBcDocument {
                kind: BcKind::Grad,
                chi: param(&pairs, "chi", Some(1.0))?,
                h: None,
                g1: None,
                g2: None,
            }
        }
        "modified" => {
            check_keys(&pairs, &["chi", "H"])?;
            let h: String = param(&pairs, "H", Some("flux".to_string()))?;
            MaxwellBcDocument {
                kind: BcKind::Modified,
                chi: param(&pairs, "chi", Some(1.0))?,
                h: Some(halfspace_core::maxwell::HDocument::Named(h)),
                g1: None,
                g2: None,
            }
        }
        other => return Err(usage(format!("unknown boundary condition '{other}'"))),
    };
    Ok(LoadedBc::Maxwell {
        bc: doc.assemble(sys)?,
        g1: None,
        g2: None,
    })
}

pub enum Source {
    ExpPoly(ExpPolyVec),
    Sampled(SampledVec),
}

pub fn load_source(path: &Path) -> Result<Source> {
    let text = read(path)?;
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        return Ok(Source::Sampled(SampledVec::from_csv(text.as_bytes())?));
    }
    Ok(Source::ExpPoly(ExpPolyVec::from_json(&text)?))
}

/// `0.9·min(1/λ_max, min source rate)`, dropping whichever bound is absent;
/// 1 when neither constrains `a`.
pub fn default_weight(spec: &SpectralFactorization, h: Option<&ExpPolyVec>) -> f64 {
    let bound = [spec.weight_limit(), h.and_then(ExpPolyVec::min_rate)]
        .into_iter()
        .flatten()
        .fold(f64::INFINITY, f64::min);
    if bound.is_finite() {
        0.9 * bound
    } else {
        1.0
    }
}

struct Setup {
    sys: MomentSystem,
    dec: SubspaceDecomposition,
    spec: SpectralFactorization,
}

fn setup(cfg: &RunConfig) -> Result<Setup> {
    let sys = load_system(&cfg.system)?;
    let dec = build_decomposition(&sys)?;
    let spec = SpectralFactorization::new(&dec, cfg.tol_eig)?;
    Ok(Setup { sys, dec, spec })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSummary {
    pub name: String,
    pub dim: usize,
    pub nu: f64,
}

impl SystemSummary {
    fn new(cfg: &RunConfig, sys: &MomentSystem) -> Self {
        Self {
            name: cfg.system.clone(),
            dim: sys.dim(),
            nu: sys.nu(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub system: SystemSummary,
    pub analysis: AnalysisReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<PredictedCounts>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckBcReport {
    pub system: SystemSummary,
    pub bc: BcKind,
    pub verdict: WellposednessVerdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub system: SystemSummary,
    pub bc: BcKind,
    pub a: f64,
    pub verdict: WellposednessVerdict,
    pub reduction: Reduction,
    pub solution: ExpPolyDocument,
    pub w_at_0: Vec<f64>,
    pub z_plus_at_0: Vec<f64>,
    pub z_zero_at_0: Vec<f64>,
    pub z_minus_at_0: Vec<f64>,
    pub norms: SolutionNorms,
    pub residual_sup: f64,
    pub h_sup: f64,
    pub bc_residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compat: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceReport {
    pub a: f64,
    pub h_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<f64>>,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub system: SystemSummary,
    pub bc: BcKind,
    pub a: f64,
    pub target: f64,
    pub witness_found: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_plus0_norm: Option<f64>,
    #[serde(default)]
    pub samples: Vec<WitnessSample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<ExpPolyDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub name: String,
    pub description: String,
    pub source: ExpPolyDocument,
    pub solution: ExpPolyDocument,
    /// `(u1, f3, σ12)` coefficients of `e^{-y}`.
    pub coefficients: Vec<f64>,
    pub expected: Vec<f64>,
    pub max_error: f64,
    pub residual_sup: f64,
    pub reproduced: bool,
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn to_text<T: Serialize>(report: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)? + "\n")
}

fn well_posed(v: &WellposednessVerdict) -> bool {
    v.solvable && v.stable
}

fn analyze(cfg: &RunConfig) -> Result<RunOutput> {
    let s = setup(cfg)?;
    let analysis = AnalysisReport::new(&s.dec, &s.spec);
    let text = match cfg.format {
        Format::Json => to_text(&AnalyzeReport {
            system: SystemSummary::new(cfg, &s.sys),
            predicted: predicted_counts(&s.dec, &s.spec).ok(),
            analysis,
        })?,
        Format::Csv => {
            let mut out = String::from("index,lambda,margin\n");
            for (i, (l, m)) in analysis
                .eigenvalues
                .iter()
                .zip(&analysis.margins)
                .enumerate()
            {
                out.push_str(&format!("{i},{l},{m}\n"));
            }
            out
        }
    };
    Ok(RunOutput {
        text,
        exit_code: EXIT_OK,
    })
}

fn check_bc(cfg: &RunConfig) -> Result<RunOutput> {
    let s = setup(cfg)?;
    let bc = load_bc(cfg.bc.as_deref(), &s.sys, s.spec.dim())?;
    let verdict = check_general_bc(&bc.operator(&s.dec)?, &s.dec, &s.spec)?;
    let exit_code = if well_posed(&verdict) {
        EXIT_OK
    } else {
        EXIT_ILL_POSED
    };
    let report = CheckBcReport {
        system: SystemSummary::new(cfg, &s.sys),
        bc: bc.kind(),
        verdict,
    };
    Ok(RunOutput {
        text: to_text(&report)?,
        exit_code,
    })
}

fn sample_csv(w: &ExpPolyVec, points: usize) -> Result<String> {
    let rate = w.min_rate().unwrap_or(1.0);
    let top = solver::RESIDUAL_SPAN / rate;
    let y: Vec<f64> = (0..points)
        .map(|i| top * i as f64 / (points - 1) as f64)
        .collect();
    let mut buf = Vec::new();
    SampledVec::from_exppoly(w, &y)?.to_csv(&mut buf)?;
    String::from_utf8(buf).map_err(|e| usage(e.to_string()))
}

fn solve(cfg: &RunConfig) -> Result<RunOutput> {
    let s = setup(cfg)?;
    let h = match &cfg.source {
        None => ExpPolyVec::zero(s.sys.dim()),
        Some(p) => match load_source(p)? {
            Source::ExpPoly(h) => h,
            Source::Sampled(f) => return sampled_report(cfg, &s, &f),
        },
    };
    let a = cfg
        .weight
        .unwrap_or_else(|| default_weight(&s.spec, Some(&h)));
    let bc = load_bc(cfg.bc.as_deref(), &s.sys, s.spec.dim())?;
    let verdict = check_general_bc(&bc.operator(&s.dec)?, &s.dec, &s.spec)?;
    let (sol, compat, boundary_residual) = match &bc {
        LoadedBc::Maxwell { bc: mbc, g1, g2 }
            if mbc.kind == BcKind::Modified && mbc.chi_hat > 0.0 =>
        {
            let g1 = g1.clone().unwrap_or_else(|| DVector::zeros(mbc.n));
            let g2 = g2.clone().unwrap_or_else(|| DVector::zeros(mbc.m));
            let ms = solve_layer_with_maxwell(&s.sys, &s.dec, &s.spec, mbc, &g1, &g2, &h, a)?;
            (
                ms.solution,
                Some(vec_of(&ms.compat)),
                Some(ms.boundary_residual),
            )
        }
        other => (
            solver::solve(&s.sys, &s.dec, &s.spec, &other.operator(&s.dec)?, &h, a)?,
            None,
            None,
        ),
    };
    let exit_code = if well_posed(&verdict) {
        EXIT_OK
    } else {
        EXIT_ILL_POSED
    };
    let text = match cfg.format {
        Format::Csv => sample_csv(&sol.w, cfg.grid_points)?,
        Format::Json => to_text(&SolveReport {
            system: SystemSummary::new(cfg, &s.sys),
            bc: bc.kind(),
            a,
            verdict,
            reduction: sol.reduction,
            solution: sol.w.to_document(),
            w_at_0: vec_of(&sol.w.eval(0.0)),
            z_plus_at_0: vec_of(&sol.z_plus0),
            z_zero_at_0: vec_of(&sol.z_zero0),
            z_minus_at_0: vec_of(&sol.z_minus0),
            norms: sol.norms,
            residual_sup: sol.residual_sup,
            h_sup: sol.h_sup,
            bc_residual: sol.bc_residual,
            compat,
            boundary_residual,
        })?,
    };
    Ok(RunOutput { text, exit_code })
}

/// Sampled sources have no closed-form solve; report what the data supports.
fn sampled_report(cfg: &RunConfig, s: &Setup, f: &SampledVec) -> Result<RunOutput> {
    if f.dim() != s.sys.dim() {
        return Err(usage(format!(
            "source has {} components, system has {}",
            f.dim(),
            s.sys.dim()
        )));
    }
    let a = cfg.weight.unwrap_or_else(|| default_weight(&s.spec, None));
    let report = SourceReport {
        a,
        h_norm: f.weighted_norm(a),
        trace: f.trace().ok().map(|t| vec_of(&t)),
        note: "sampled source: weighted norm and trace only; the closed-form solve needs an exp-poly source".into(),
    };
    Ok(RunOutput {
        text: to_text(&report)?,
        exit_code: EXIT_OK,
    })
}

fn probe(cfg: &RunConfig, target: f64) -> Result<RunOutput> {
    let s = setup(cfg)?;
    let a = cfg.weight.unwrap_or_else(|| default_weight(&s.spec, None));
    let bc = load_bc(cfg.bc.as_deref(), &s.sys, s.spec.dim())?;
    let w = instability_witness(&s.sys, &s.dec, &s.spec, &bc.operator(&s.dec)?, a, target)?;
    let mut report = ProbeReport {
        system: SystemSummary::new(cfg, &s.sys),
        bc: bc.kind(),
        a,
        target,
        witness_found: w.is_some(),
        s: None,
        gain: None,
        h_norm: None,
        z_plus0_norm: None,
        samples: Vec::new(),
        h: None,
    };
    if let Some(w) = w {
        report.s = Some(w.s);
        report.gain = Some(w.gain);
        report.h_norm = Some(w.h_norm);
        report.z_plus0_norm = Some(w.z_plus0_norm);
        report.samples = w.samples;
        report.h = Some(w.h.to_document());
    }
    let exit_code = if report.witness_found {
        EXIT_ILL_POSED
    } else {
        EXIT_OK
    };
    Ok(RunOutput {
        text: to_text(&report)?,
        exit_code,
    })
}

fn demo(name: &str) -> Result<RunOutput> {
    if name != "kramers3" {
        return Err(usage(format!(
            "unknown demo '{name}' (available: kramers3)"
        )));
    }
    let sys = MomentSystem::kramers3(1.0)?;
    let dec = build_decomposition(&sys)?;
    let spec = SpectralFactorization::new(&dec, None)?;
    let h = ExpPolyVec::outer(&DVector::from_vec(vec![0.0, 1.0, 0.0]), 1.0, &[1.0])?;
    // n+ = 0: no wall rows are needed.
    let bc = BoundaryOperator::homogeneous(DMatrix::zeros(0, spec.dim()), BcKind::Custom);
    let sol = solver::solve(&sys, &dec, &spec, &bc, &h, 0.5)?;
    let coefficients = match sol.w.terms() {
        [t] if t.rate == 1.0 && t.coeffs.ncols() == 1 => vec_of(&t.coeffs.column(0).into_owned()),
        _ => return Err(usage("solution is not a single e^{-y} mode")),
    };
    let expected = vec![-std::f64::consts::SQRT_2, 1.0, 0.0];
    let max_error = coefficients
        .iter()
        .zip(&expected)
        .map(|(c, e)| (c - e).abs())
        .fold(0.0, f64::max);
    let report = DemoReport {
        name: name.into(),
        description:
            "Kramers system (u1, f3, σ12), ν = 1, source in the f3 equation: h = (0, e^{-y}, 0)"
                .into(),
        source: h.to_document(),
        solution: sol.w.to_document(),
        coefficients,
        expected,
        max_error,
        residual_sup: sol.residual_sup,
        reproduced: max_error <= 1e-12 && sol.residual_sup <= 1e-12,
    };
    Ok(RunOutput {
        text: to_text(&report)?,
        exit_code: EXIT_OK,
    })
}

/// Execute one command and write the report to `--out` or return it.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let out = match &cfg.command {
        Command::Analyze => analyze(cfg)?,
        Command::CheckBc => check_bc(cfg)?,
        Command::Solve => solve(cfg)?,
        Command::Probe { target } => probe(cfg, *target)?,
        Command::Demo { name } => demo(name)?,
    };
    if let Some(path) = &cfg.out {
        fs::write(path, &out.text).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
    }
    Ok(out)
}
