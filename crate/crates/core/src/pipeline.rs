//! End-to-end construction and certification, configuration files, reports
//! and parameter sweeps.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deform::{self, NecessitySearch, SlabMetric};
use crate::geometry::{self, fmt17, CurvatureReport, ModelFiber, WarpProfile};
use crate::glue::{self, BoundaryResiduals, GlueError, GlueOptions, GlueOutcome};
use crate::spectral::{self, BoundaryCondition, EpsWindow, SpectralError, SpectralOptions, SpectrumResult};
use crate::warp::{self, ConstructionParams, WarpError};

/// Name of the environment variable that overrides the sweep worker count.
pub const WORKERS_ENV: &str = "WARPCERT_WORKERS";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("sweep has {runs} combinations, above the cap of {cap}")]
    SweepTooLarge { runs: usize, cap: usize },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
    #[default]
    Both,
}

impl OutputFormat {
    pub fn json(self) -> bool {
        matches!(self, Self::Json | Self::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, Self::Csv | Self::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SpectralModel {
    /// Even double of the glued hypersurface profile.
    #[default]
    Neck,
    /// Closed-form round sphere of dimension `sphere_dim`.
    Sphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    pub model: SpectralModel,
    pub sphere_dim: usize,
    pub k_max: usize,
    pub modes_per_k: usize,
    pub grid: usize,
    pub bc: BoundaryCondition,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        let o = SpectralOptions::default();
        Self {
            model: SpectralModel::Neck,
            sphere_dim: 3,
            k_max: o.k_max,
            modes_per_k: o.modes_per_k,
            grid: o.grid,
            bc: o.bc,
        }
    }
}

impl SpectralConfig {
    pub fn options(&self) -> SpectralOptions {
        SpectralOptions { k_max: self.k_max, modes_per_k: self.modes_per_k, grid: self.grid, bc: self.bc }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlabConfig {
    /// Sample points per side when certifying a slab width.
    pub samples: usize,
    /// Random jets tried by the necessity search.
    pub necessity_trials: usize,
    /// Steps on the path from the round-equator jet to the slab jet.
    pub path_steps: usize,
}

impl Default for SlabConfig {
    fn default() -> Self {
        Self { samples: 64, necessity_trials: 2000, path_steps: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub alpha: Vec<f64>,
    pub lambda0: Vec<f64>,
    pub eps: Vec<f64>,
    /// Values for the matching slope slack `glue.delta`.
    pub t1_slack: Vec<f64>,
    pub max_runs: usize,
    /// Worker threads; `0` means one per available core.
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { alpha: vec![], lambda0: vec![], eps: vec![], t1_slack: vec![], max_runs: 256, workers: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    pub format: OutputFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "warpcert-out".into(), format: OutputFormat::Both }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub construction: ConstructionParams,
    pub glue: GlueOptions,
    pub slab: SlabConfig,
    pub spectral: SpectralConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Structural checks that do not depend on the geometry. Parameter windows
    /// are checked by the pipeline itself and reported as a failed stage.
    pub fn check(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.spectral.k_max > 200 {
            return bad(format!("spectral.k_max = {} is above 200", self.spectral.k_max));
        }
        if self.spectral.modes_per_k < 2 {
            return bad("spectral.modes_per_k must be at least 2".into());
        }
        if self.spectral.model == SpectralModel::Sphere && self.spectral.sphere_dim == 0 {
            return bad("spectral.sphere_dim must be at least 1".into());
        }
        if self.slab.samples < 2 {
            return bad("slab.samples must be at least 2".into());
        }
        if self.construction.grid_points > 10_000_000 {
            return bad("construction.grid_points is above 1e7".into());
        }
        Ok(())
    }
}

/// The complete default configuration, with comments.
pub fn default_config_toml() -> String {
    let c = PipelineConfig::default();
    let p = c.construction;
    let g = c.glue;
    let s = c.spectral;
    let sl = c.slab;
    format!(
        r#"# warpcert configuration (TOML). Every key is optional; omitted keys take
# the values shown here.

# Seed for the randomized necessity search.
seed = {seed}

[construction]
# Dimension of the totally geodesic slice (ambient dimension is n + 1).
n = {n}
# Radius of the geodesic disc removed from the round sphere; 0 < r2 < pi/2.
r2 = {r2:?}
# Target circle radius (the realized radius is reported).
r1 = {r1:?}
# Exponent; n - 2 < alpha < (n - 2) / lambda0^2.
alpha = {alpha:?}
# Slope limit; cos(r2) < lambda0 < 1.
lambda0 = {lambda0:?}
# Normal Ricci curvature along the slice.
eps = {eps:?}
# Integration horizon.
T = {horizon:?}
# Integrator tolerance (relative and absolute).
tol = {tol:?}
grid_points = {grid_points}

[glue]
# Half-width of the blending window around the matching time.
window = {window:?}
# Number of vanishing derivatives of the circle warping at the seam.
flat_order = {flat_order}
# Matching slope slack: t1 is the first grid time with f' >= cos(r2) + delta.
delta = {delta:?}
# Minimum cap length left before r2 after rescaling.
cap_margin = {cap_margin:?}
# Window halvings tried if Ricci positivity fails.
max_retries = {max_retries}
# Tolerance on the circle Ricci component where it vanishes identically.
product_tol = {product_tol:?}

[slab]
samples = {samples}
necessity_trials = {trials}
path_steps = {path_steps}

[spectral]
# "neck" doubles the glued hypersurface profile; "sphere" uses the round sphere.
model = "neck"
sphere_dim = {sphere_dim}
k_max = {k_max}
modes_per_k = {modes_per_k}
# Finite-volume cells; a grid of half this size gives the error estimate.
grid = {sgrid}
# "neumann" or "dirichlet"
bc = "{bc}"

[sweep]
# Cartesian product over the non-empty lists; empty lists keep the base value.
alpha = []
lambda0 = []
eps = []
t1_slack = []
max_runs = {max_runs}
# 0 uses every core; the {env} environment variable overrides this.
workers = 0

[output]
dir = "{dir}"
# "json", "csv" or "both"
format = "both"
"#,
        seed = c.seed,
        n = p.n,
        r2 = p.r2,
        r1 = p.r1,
        alpha = p.alpha,
        lambda0 = p.lambda0,
        eps = p.eps,
        horizon = p.horizon,
        tol = p.tol,
        grid_points = p.grid_points,
        window = g.window,
        flat_order = g.flat_order,
        delta = g.delta,
        cap_margin = g.cap_margin,
        max_retries = g.max_retries,
        product_tol = g.product_tol,
        samples = sl.samples,
        trials = sl.necessity_trials,
        path_steps = sl.path_steps,
        sphere_dim = s.sphere_dim,
        k_max = s.k_max,
        modes_per_k = s.modes_per_k,
        sgrid = s.grid,
        bc = s.bc,
        max_runs = c.sweep.max_runs,
        env = WORKERS_ENV,
        dir = c.output.dir,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Validate,
    Ode,
    Glue,
    Curvature,
    Slab,
    Spectral,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Validate => "validate",
            Self::Ode => "ode",
            Self::Glue => "glue",
            Self::Curvature => "curvature",
            Self::Slab => "slab",
            Self::Spectral => "spectral",
        };
        f.write_str(s)
    }
}

/// How far a run goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    /// Solve and glue.
    Construct,
    /// Construct, then curvature and slab certification.
    Certify,
    /// Construct, then the spectral stage.
    Spectrum,
    All,
}

impl Scope {
    fn runs(self, stage: Stage) -> bool {
        match stage {
            Stage::Validate | Stage::Ode | Stage::Glue => true,
            Stage::Curvature | Stage::Slab => matches!(self, Self::Certify | Self::All),
            Stage::Spectral => matches!(self, Self::Spectrum | Self::All),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "==")]
    Eq,
}

impl Relation {
    fn holds(self, value: f64, bound: f64) -> bool {
        match self {
            Self::Lt => value < bound,
            Self::Le => value <= bound,
            Self::Gt => value > bound,
            Self::Ge => value >= bound,
            Self::Eq => value == bound,
        }
    }
}

/// One named tolerance check with its measured value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub stage: Stage,
    pub value: f64,
    pub relation: Relation,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureKind {
    /// A geometric or certification condition is not met.
    Verdict,
    /// The numerics broke down (integrator failure, non-finite values).
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: Stage,
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeSection {
    pub first_integral_residual: f64,
    /// `[|f'(0)|, |h(0)|, |h'(0) - 1|, |h''(0)|]`
    pub closure_residuals: [f64; 4],
    pub min_f: f64,
    pub min_f2: f64,
    pub min_h1: f64,
    /// Largest `h''` over grid points with `t > 0`.
    pub max_h2_interior: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlueSection {
    pub t1: f64,
    pub window: f64,
    pub flat_order: usize,
    pub attempts: usize,
    pub initial_cap: (f64, f64),
    pub cap_scale: f64,
    pub cap_shift: f64,
    pub seam_left: f64,
    pub seam_right: f64,
    pub seam_mismatch: [f64; 2],
    pub h_seam_jet_max: f64,
    pub support_mismatches: usize,
    pub r1_target: f64,
    pub r1_realized: f64,
    pub t0: f64,
    pub cap_start: f64,
    pub residuals: BoundaryResiduals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSection {
    /// Minimum Ricci component of the unmodified profile on `[0, t1 + window]`.
    pub ivp_min_ric: f64,
    pub ivp_min_scal_hyp: f64,
    /// `min (scal_hyp - (n-1) f^(-a-2) (n-2-a l0^2))` on the unmodified profile.
    pub scalar_bound_residual: f64,
    pub glued_min_ric_modified: f64,
    pub glued_min_ric_circle_product: f64,
    pub glued_min_ric_other_product: f64,
    pub glued_min_ric_tt: f64,
    pub glued_min_ric_sphere: f64,
    pub glued_min_scal_hyp: f64,
    pub extrapolated_points: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabSection {
    pub eps: f64,
    pub sphere_fiber: String,
    pub sphere_delta: f64,
    pub sphere_ric_tt_error: f64,
    pub sphere_ric_fiber_error: f64,
    /// Pointwise slabs along the glued hypersurface.
    pub neck_points: usize,
    pub neck_min_delta: f64,
    pub neck_ric_tt_error: f64,
    pub neck_ric_fiber_error: f64,
    pub necessity: NecessitySearch,
    pub path_min_ric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSection {
    pub model: SpectralModel,
    pub interval: Option<(f64, f64)>,
    pub fiber_dim: usize,
    pub grid: Option<usize>,
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda1_error: f64,
    pub complete_below: f64,
    pub window: Option<EpsWindow>,
    pub eps: f64,
    pub morse_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub scope: Scope,
    pub seed: u64,
    pub params: ConstructionParams,
    pub glue_options: GlueOptions,
    pub spectral_config: SpectralConfig,
    pub violations: Vec<warp::ParamViolation>,
    pub ode: Option<OdeSection>,
    pub glue: Option<GlueSection>,
    pub curvature: Option<CurvatureSection>,
    pub slab: Option<SlabSection>,
    pub spectrum: Option<SpectrumSection>,
    pub checks: Vec<Check>,
    pub error: Option<StageError>,
    pub failed_stage: Option<Stage>,
    pub failing_checks: Vec<String>,
    pub verdict: Verdict,
}

impl CertificationReport {
    /// 0 pass, 1 verdict fail, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match (&self.verdict, &self.error) {
            (Verdict::Pass, _) => 0,
            (Verdict::Fail, Some(StageError { kind: FailureKind::Numerical, .. })) => 3,
            (Verdict::Fail, _) => 1,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Report plus the arrays written to CSV.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub report: CertificationReport,
    pub ivp_profile: Option<WarpProfile>,
    pub glued: Option<WarpProfile>,
    pub curvature: Option<CurvatureReport>,
    pub spectrum: Option<SpectrumResult>,
}

impl PipelineRun {
    pub fn summary_row(&self) -> SummaryRow {
        SummaryRow::from_report(&self.report)
    }
}

struct Builder {
    checks: Vec<Check>,
    error: Option<StageError>,
}

impl Builder {
    fn check(&mut self, stage: Stage, name: &str, value: f64, relation: Relation, bound: f64) {
        let passed = value.is_finite() && relation.holds(value, bound);
        self.checks.push(Check { name: name.into(), stage, value, relation, bound, passed });
    }

    fn fail(&mut self, stage: Stage, kind: FailureKind, message: String) {
        self.error = Some(StageError { stage, kind, message });
    }
}

fn warp_kind(e: &WarpError) -> FailureKind {
    match e {
        WarpError::InvalidParams(_) => FailureKind::Verdict,
        _ => FailureKind::Numerical,
    }
}

fn glue_kind(e: &GlueError) -> FailureKind {
    match e {
        GlueError::Ode(_) | GlueError::CapFitStalled(_) => FailureKind::Numerical,
        _ => FailureKind::Verdict,
    }
}

fn spectral_kind(e: &SpectralError) -> FailureKind {
    match e {
        SpectralError::GridTooCoarse { .. } | SpectralError::NonPositiveProfile { .. } => FailureKind::Numerical,
        _ => FailureKind::Verdict,
    }
}

/// Ricci eigenvalues `(radial, sphere)` of `dt² + f² ds²_{n-1}`.
pub fn hypersurface_ricci(n: usize, f: f64, f1: f64, f2: f64) -> (f64, f64) {
    let m = n as f64 - 1.0;
    (-m * f2 / f, -f2 / f + (m - 1.0) * (1.0 - f1 * f1) / (f * f))
}

/// Even extension of the glued profile about its left end.
pub fn doubled_f(profile: &WarpProfile, t: f64) -> f64 {
    let t0 = profile.t_start();
    profile.eval_f(t0 + (t - t0).abs())
}

/// `[2 t0 - end, end]`, the domain of [`doubled_f`].
pub fn doubled_interval(profile: &WarpProfile) -> (f64, f64) {
    (2.0 * profile.t_start() - profile.t_end(), profile.t_end())
}

fn min_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(f64::INFINITY, f64::min)
}

fn max_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(f64::NEG_INFINITY, f64::max)
}

/// Runs the pipeline up to `scope`. Deterministic given the configuration.
pub fn run_pipeline(config: &PipelineConfig, scope: Scope) -> PipelineRun {
    let p = config.construction;
    let mut b = Builder { checks: Vec::new(), error: None };
    let mut run = PipelineRun {
        report: CertificationReport {
            scope,
            seed: config.seed,
            params: p,
            glue_options: config.glue,
            spectral_config: config.spectral,
            violations: Vec::new(),
            ode: None,
            glue: None,
            curvature: None,
            slab: None,
            spectrum: None,
            checks: Vec::new(),
            error: None,
            failed_stage: None,
            failing_checks: Vec::new(),
            verdict: Verdict::Fail,
        },
        ivp_profile: None,
        glued: None,
        curvature: None,
        spectrum: None,
    };
    stages(config, scope, &mut b, &mut run);
    let report = &mut run.report;
    report.failing_checks = b.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
    let first_failed = b.checks.iter().filter(|c| !c.passed).map(|c| c.stage).min();
    report.failed_stage = match (&b.error, first_failed) {
        (Some(e), Some(s)) => Some(e.stage.min(s)),
        (Some(e), None) => Some(e.stage),
        (None, s) => s,
    };
    report.verdict = if report.failed_stage.is_none() { Verdict::Pass } else { Verdict::Fail };
    report.checks = b.checks;
    report.error = b.error;
    run
}

fn stages(config: &PipelineConfig, scope: Scope, b: &mut Builder, run: &mut PipelineRun) {
    let p = config.construction;

    // validate
    if let Err(v) = warp::validate_params(&p) {
        let msg = v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ");
        run.report.violations = v;
        b.fail(Stage::Validate, FailureKind::Verdict, msg);
        return;
    }

    // ode
    let sy = match warp::solve_ivp(&p).and_then(|prof| warp::derive_h(&prof, &p)) {
        Ok(prof) => prof,
        Err(e) => return b.fail(Stage::Ode, warp_kind(&e), e.to_string()),
    };
    let closure = warp::closure_residuals(&sy);
    let ode = OdeSection {
        first_integral_residual: warp::first_integral_residual(&sy, &p),
        closure_residuals: closure,
        min_f: min_of(sy.f.iter().copied()),
        min_f2: min_of(sy.f2.iter().copied()),
        min_h1: min_of(sy.h1.iter().copied()),
        max_h2_interior: max_of(sy.grid.iter().zip(&sy.h2).filter(|(t, _)| **t > 0.0).map(|(_, v)| *v)),
        points: sy.len(),
    };
    b.check(Stage::Ode, "ode.first_integral_residual", ode.first_integral_residual, Relation::Lt, 1e-9);
    b.check(Stage::Ode, "ode.closure_max", max_of(closure.iter().copied()), Relation::Lt, 1e-10);
    b.check(Stage::Ode, "ode.min_f", ode.min_f, Relation::Ge, 1.0);
    b.check(Stage::Ode, "ode.min_f2", ode.min_f2, Relation::Gt, 0.0);
    b.check(Stage::Ode, "ode.min_h1", ode.min_h1, Relation::Gt, 0.0);
    b.check(Stage::Ode, "ode.max_h2_interior", ode.max_h2_interior, Relation::Lt, 0.0);
    run.report.ode = Some(ode);

    // glue
    let outcome: GlueOutcome = match glue::glue(&sy, &p, &config.glue) {
        Ok(o) => o,
        Err(e) => {
            run.ivp_profile = Some(sy);
            return b.fail(Stage::Glue, glue_kind(&e), e.to_string());
        }
    };
    let blend = &outcome.blend;
    let support_mismatches = (0..sy.len())
        .take_while(|&i| sy.grid[i] < blend.seam_left)
        .filter(|&i| {
            let (a, c) = (&sy, &blend.profile);
            a.grid[i] != c.grid[i]
                || a.f[i] != c.f[i]
                || a.f1[i] != c.f1[i]
                || a.f2[i] != c.f2[i]
                || a.h[i] != c.h[i]
                || a.h1[i] != c.h1[i]
                || a.h2[i] != c.h2[i]
        })
        .count();
    let gs = GlueSection {
        t1: outcome.t1,
        window: blend.params.window,
        flat_order: blend.params.flat_order,
        attempts: blend.attempts,
        initial_cap: outcome.initial_cap,
        cap_scale: blend.params.cap_scale,
        cap_shift: blend.params.cap_shift,
        seam_left: blend.seam_left,
        seam_right: blend.seam_right,
        seam_mismatch: blend.seam_mismatch,
        h_seam_jet_max: max_of(blend.h_seam_jet.iter().map(|v| v.abs())).max(0.0),
        support_mismatches,
        r1_target: p.r1,
        r1_realized: outcome.rescaled.r1_realized,
        t0: outcome.rescaled.t0,
        cap_start: outcome.rescaled.cap_start,
        residuals: outcome.residuals,
    };
    b.check(Stage::Glue, "glue.boundary_residual_max", gs.residuals.max(), Relation::Lt, 1e-8);
    b.check(Stage::Glue, "glue.seam_mismatch_max", gs.seam_mismatch[0].max(gs.seam_mismatch[1]), Relation::Lt, 1e-8);
    b.check(Stage::Glue, "glue.h_seam_jet_max", gs.h_seam_jet_max, Relation::Lt, 1e-8);
    b.check(Stage::Glue, "glue.support_mismatches", gs.support_mismatches as f64, Relation::Eq, 0.0);
    b.check(Stage::Glue, "glue.r1_realized", gs.r1_realized, Relation::Gt, 0.0);
    run.report.glue = Some(gs);
    let glued = outcome.rescaled.profile.clone();

    // curvature
    if scope.runs(Stage::Curvature) {
        match curvature_stage(&sy, &glued, &outcome, &p, config.glue.product_tol, b) {
            Ok((section, report)) => {
                run.report.curvature = Some(section);
                run.curvature = Some(report);
            }
            Err(e) => {
                b.fail(Stage::Curvature, FailureKind::Numerical, e.to_string());
            }
        }
    } else if let Ok(report) = geometry::ricci_doubly_warped(&glued, p.n) {
        run.curvature = Some(report);
    }

    // slab
    if scope.runs(Stage::Slab) && b.error.is_none() {
        match slab_stage(&glued, config, b) {
            Ok(s) => run.report.slab = Some(s),
            Err(e) => b.fail(Stage::Slab, FailureKind::Verdict, e.to_string()),
        }
    }

    // spectral
    if scope.runs(Stage::Spectral) && b.error.is_none() {
        match spectral_stage(&glued, config, b) {
            Ok((section, spectrum)) => {
                run.report.spectrum = Some(section);
                run.spectrum = Some(spectrum);
            }
            Err((section, e)) => {
                run.report.spectrum = section;
                b.fail(Stage::Spectral, spectral_kind(&e), e.to_string());
            }
        }
    }

    run.ivp_profile = Some(sy);
    run.glued = Some(glued);
}

fn curvature_stage(
    sy: &WarpProfile,
    glued: &WarpProfile,
    outcome: &GlueOutcome,
    p: &ConstructionParams,
    product_tol: f64,
    b: &mut Builder,
) -> Result<(CurvatureSection, CurvatureReport), geometry::GeometryError> {
    let mut sy_report = geometry::ricci_doubly_warped(sy, p.n)?;
    sy_report.attach_scalar_bound(sy, p.alpha, p.lambda0);
    let upto = outcome.t1 + outcome.blend.params.window;
    let glued_report = geometry::ricci_doubly_warped(glued, p.n)?;
    let blend = &outcome.blend;
    let section = CurvatureSection {
        ivp_min_ric: sy_report.min_ric_on(0.0, upto),
        ivp_min_scal_hyp: sy_report.min_scal_hyp,
        scalar_bound_residual: sy_report.bound_residual.unwrap_or(f64::NAN),
        glued_min_ric_modified: blend.min_ric_modified,
        glued_min_ric_circle_product: blend.min_ric_circle_product,
        glued_min_ric_other_product: blend.min_ric_other_product,
        glued_min_ric_tt: min_of(glued_report.records.iter().map(|r| r.ric_tt)),
        glued_min_ric_sphere: min_of(glued_report.records.iter().map(|r| r.ric_sphere)),
        glued_min_scal_hyp: glued_report.min_scal_hyp,
        extrapolated_points: glued_report.summary().flags.extrapolated_points,
    };
    let s = Stage::Curvature;
    b.check(s, "curvature.ivp_min_ric", section.ivp_min_ric, Relation::Gt, 0.0);
    b.check(s, "curvature.scalar_bound_residual", section.scalar_bound_residual, Relation::Ge, -1e-8);
    b.check(s, "curvature.glued_min_ric_modified", section.glued_min_ric_modified, Relation::Gt, 0.0);
    b.check(
        s,
        "curvature.glued_min_ric_circle_product",
        section.glued_min_ric_circle_product,
        Relation::Ge,
        -product_tol,
    );
    b.check(s, "curvature.glued_min_ric_other_product", section.glued_min_ric_other_product, Relation::Gt, 0.0);
    b.check(s, "curvature.glued_min_ric_tt", section.glued_min_ric_tt, Relation::Gt, 0.0);
    b.check(s, "curvature.glued_min_ric_sphere", section.glued_min_ric_sphere, Relation::Gt, 0.0);
    b.check(s, "curvature.glued_min_scal_hyp", section.glued_min_scal_hyp, Relation::Gt, 0.0);
    Ok((section, glued_report))
}

fn slab_stage(glued: &WarpProfile, config: &PipelineConfig, b: &mut Builder) -> Result<SlabSection, deform::DeformError> {
    let p = config.construction;
    let n = p.n;
    let eps = p.eps;
    let tol = |scale: f64| 1e-12 * scale.abs().max(1.0);
    let exactness = |slab: &SlabMetric| -> Result<(f64, f64), deform::DeformError> {
        let r = deform::slab_ricci(slab)?;
        let want = (slab.fiber.scal + eps) / slab.fiber.dim as f64;
        let tt = (r.ric_tt - eps).abs() / tol(eps);
        let fib = r
            .ric_fiber
            .iter()
            .zip(&slab.fiber.metric_diag)
            .map(|(v, g)| (v / g - want).abs() / tol(want))
            .fold(0.0, f64::max);
        Ok((tt, fib))
    };

    let sphere = ModelFiber::round_sphere(n, 1.0);
    let sphere_slab = deform::certify(SlabMetric::new(sphere.clone(), eps)?, config.slab.samples)?;
    let (s_tt, s_fib) = exactness(&sphere_slab)?;

    let mut neck_min_delta = f64::INFINITY;
    let mut neck_tt = 0.0f64;
    let mut neck_fib = 0.0f64;
    let mut neck_fiber0 = None;
    for i in 0..glued.len() {
        let (rt, rs) = hypersurface_ricci(n, glued.f[i], glued.f1[i], glued.f2[i]);
        let mut ricci = vec![rs; n];
        ricci[0] = rt;
        let fiber = ModelFiber::new(format!("N(t={})", fmt17(glued.grid[i])), ricci, vec![1.0; n])?;
        let slab = SlabMetric::new(fiber, eps)?;
        let (tt, fib) = exactness(&slab)?;
        neck_tt = neck_tt.max(tt);
        neck_fib = neck_fib.max(fib);
        neck_min_delta = neck_min_delta.min(deform::certify_slab_width(&slab, config.slab.samples)?);
        if i == 0 {
            neck_fiber0 = Some(slab.fiber);
        }
    }
    let neck_fiber0 = neck_fiber0.ok_or(deform::DeformError::NoPositiveWidth)?;
    let necessity = deform::necessity_search(&neck_fiber0, eps, config.slab.necessity_trials, config.seed)?;

    let equator: Vec<f64> = sphere.metric_diag.iter().map(|g| -2.0 * g).collect();
    let path = deform::deformation_path(&sphere_slab, &equator, config.slab.path_steps)?;
    let path_min_ric = min_of(path.iter().map(|q| q.ric_tt.min(q.ric_fiber_min)));

    let section = SlabSection {
        eps,
        sphere_fiber: sphere.id.clone(),
        sphere_delta: sphere_slab.delta,
        sphere_ric_tt_error: s_tt,
        sphere_ric_fiber_error: s_fib,
        neck_points: glued.len(),
        neck_min_delta,
        neck_ric_tt_error: neck_tt,
        neck_ric_fiber_error: neck_fib,
        necessity,
        path_min_ric,
    };
    let s = Stage::Slab;
    // Exactness errors are in units of 1e-12 relative.
    b.check(s, "slab.sphere_ric_tt_error", s_tt, Relation::Le, 1.0);
    b.check(s, "slab.sphere_ric_fiber_error", s_fib, Relation::Le, 1.0);
    b.check(s, "slab.sphere_delta", section.sphere_delta, Relation::Gt, 0.0);
    b.check(s, "slab.neck_ric_tt_error", neck_tt, Relation::Le, 1.0);
    b.check(s, "slab.neck_ric_fiber_error", neck_fib, Relation::Le, 1.0);
    b.check(s, "slab.neck_min_delta", neck_min_delta, Relation::Gt, 0.0);
    b.check(s, "slab.necessity_witnesses", necessity.witnesses as f64, Relation::Gt, 0.0);
    b.check(s, "slab.necessity_refutations", necessity.refutations as f64, Relation::Eq, 0.0);
    b.check(s, "slab.path_min_ric", path_min_ric, Relation::Gt, 0.0);
    Ok(section)
}

type SpectralFailure = (Option<SpectrumSection>, SpectralError);

fn spectral_stage(
    glued: &WarpProfile,
    config: &PipelineConfig,
    b: &mut Builder,
) -> Result<(SpectrumSection, SpectrumResult), SpectralFailure> {
    let sc = config.spectral;
    let eps = config.construction.eps;
    let (spectrum, interval) = match sc.model {
        SpectralModel::Sphere => (spectral::sphere_spectrum(sc.sphere_dim, sc.k_max), None),
        SpectralModel::Neck => {
            let interval = doubled_interval(glued);
            let m = config.construction.n - 1;
            let f = |t: f64| doubled_f(glued, t);
            let s = spectral::warped_interval_spectrum(&f, interval, m, &sc.options()).map_err(|e| (None, e))?;
            (s, Some(interval))
        }
    };
    let l0 = spectrum.lambda0().copied();
    let l1 = spectrum.lambda1().copied();
    let mut section = SpectrumSection {
        model: sc.model,
        interval,
        fiber_dim: spectrum.fiber_dim,
        grid: spectrum.grid,
        lambda0: l0.map_or(f64::NAN, |m| m.value),
        lambda1: l1.map_or(f64::NAN, |m| m.value),
        lambda1_error: l1.map_or(f64::NAN, |m| m.error),
        complete_below: spectrum.complete_below,
        window: None,
        eps,
        morse_index: None,
    };
    let s = Stage::Spectral;
    if spectrum.bc == BoundaryCondition::Neumann {
        b.check(s, "spectral.lambda0_abs", section.lambda0.abs(), Relation::Lt, 1e-8);
    }
    let window = match spectral::certify_index_one(&spectrum) {
        Ok(w) => w,
        Err(e) => return Err((Some(section), e)),
    };
    section.window = Some(window);
    b.check(s, "spectral.window_width", window.upper - window.lower, Relation::Gt, 0.0);
    b.check(s, "spectral.eps_below_window_upper", eps, Relation::Lt, window.upper);
    b.check(s, "spectral.eps_above_window_lower", eps, Relation::Gt, window.lower);
    let index = match spectral::morse_index(&spectrum, eps) {
        Ok(i) => i,
        Err(e) => return Err((Some(section), e)),
    };
    section.morse_index = Some(index);
    b.check(s, "spectral.morse_index", index as f64, Relation::Eq, 1.0);
    Ok((section, spectrum))
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub alpha: f64,
    pub lambda0: f64,
    pub eps: f64,
    pub t1_slack: f64,
    pub verdict: Verdict,
    pub failed_stage: Option<Stage>,
    /// Strict Ricci minimum on the modified region of the glued metric.
    pub min_ric: f64,
    pub r1_realized: f64,
    pub lambda1: f64,
    pub morse_index: Option<usize>,
}

impl SummaryRow {
    pub fn from_report(r: &CertificationReport) -> Self {
        Self {
            alpha: r.params.alpha,
            lambda0: r.params.lambda0,
            eps: r.params.eps,
            t1_slack: r.glue_options.delta,
            verdict: r.verdict,
            failed_stage: r.failed_stage,
            min_ric: r.curvature.as_ref().map_or(f64::NAN, |c| c.glued_min_ric_modified),
            r1_realized: r.glue.as_ref().map_or(f64::NAN, |g| g.r1_realized),
            lambda1: r.spectrum.as_ref().map_or(f64::NAN, |s| s.lambda1),
            morse_index: r.spectrum.as_ref().and_then(|s| s.morse_index),
        }
    }
}

pub const SUMMARY_HEADER: &str = "alpha,lambda0,eps,t1_slack,verdict,failed_stage,min_ric,r1_realized,lambda1,morse_index";

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            fmt17(r.alpha),
            fmt17(r.lambda0),
            fmt17(r.eps),
            fmt17(r.t1_slack),
            match r.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "fail",
            },
            r.failed_stage.map_or(String::new(), |s| s.to_string()),
            fmt17(r.min_ric),
            fmt17(r.r1_realized),
            fmt17(r.lambda1),
            r.morse_index.map_or(String::new(), |i| i.to_string()),
        ));
    }
    out
}

/// Expands the sweep lists into one configuration per combination, in
/// lexicographic order (alpha, lambda0, eps, t1_slack).
pub fn sweep_configs(config: &PipelineConfig) -> Result<Vec<PipelineConfig>, ConfigError> {
    let sw = &config.sweep;
    let or_base = |v: &Vec<f64>, base: f64| if v.is_empty() { vec![base] } else { v.clone() };
    let alphas = or_base(&sw.alpha, config.construction.alpha);
    let lambdas = or_base(&sw.lambda0, config.construction.lambda0);
    let epss = or_base(&sw.eps, config.construction.eps);
    let slacks = or_base(&sw.t1_slack, config.glue.delta);
    let runs = alphas.len() * lambdas.len() * epss.len() * slacks.len();
    if runs > sw.max_runs {
        return Err(ConfigError::SweepTooLarge { runs, cap: sw.max_runs });
    }
    let mut out = Vec::with_capacity(runs);
    for &a in &alphas {
        for &l in &lambdas {
            for &e in &epss {
                for &d in &slacks {
                    let mut c = config.clone();
                    c.construction.alpha = a;
                    c.construction.lambda0 = l;
                    c.construction.eps = e;
                    c.glue.delta = d;
                    c.sweep = SweepConfig::default();
                    out.push(c);
                }
            }
        }
    }
    Ok(out)
}

/// Worker count: the environment variable, then the configuration, then the
/// number of available cores.
pub fn resolve_workers(config: &PipelineConfig) -> Result<usize, ConfigError> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(ConfigError::Invalid(format!("{WORKERS_ENV} = {v:?} is not a positive integer"))),
        };
    }
    if config.sweep.workers > 0 {
        return Ok(config.sweep.workers);
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub reports: Vec<CertificationReport>,
    pub rows: Vec<SummaryRow>,
}

impl SweepOutcome {
    pub fn summary_csv(&self) -> String {
        summary_csv(&self.rows)
    }

    /// Passes only when every run passes.
    pub fn exit_code(&self) -> i32 {
        self.reports.iter().map(CertificationReport::exit_code).max().unwrap_or(0)
    }
}

/// Runs every sweep combination independently on a bounded worker pool.
/// Results keep the order of [`sweep_configs`].
pub fn run_sweep(config: &PipelineConfig, scope: Scope) -> Result<SweepOutcome, ConfigError> {
    let configs = sweep_configs(config)?;
    let workers = resolve_workers(config)?;
    let reports = run_all(&configs, scope, workers)?;
    let rows = reports.iter().map(SummaryRow::from_report).collect();
    Ok(SweepOutcome { reports, rows })
}

#[cfg(feature = "parallel")]
fn run_all(configs: &[PipelineConfig], scope: Scope, workers: usize) -> Result<Vec<CertificationReport>, ConfigError> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ConfigError::Invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| configs.par_iter().map(|c| run_pipeline(c, scope).report).collect()))
}

#[cfg(not(feature = "parallel"))]
fn run_all(configs: &[PipelineConfig], scope: Scope, _workers: usize) -> Result<Vec<CertificationReport>, ConfigError> {
    Ok(configs.iter().map(|c| run_pipeline(c, scope).report).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_template_parses_to_defaults() {
        let parsed = PipelineConfig::from_toml(&default_config_toml()).unwrap();
        assert_eq!(parsed, PipelineConfig::default());
        let round = PipelineConfig::from_toml(&PipelineConfig::default().to_toml()).unwrap();
        assert_eq!(round, PipelineConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::from_toml("[construction]\nbeta = 1.0\n").is_err());
        assert!(PipelineConfig::from_toml("bogus = 1\n").is_err());
        let c = PipelineConfig::from_toml("[construction]\nalpha = 2.1\n").unwrap();
        assert_eq!(c.construction.alpha, 2.1);
        assert_eq!(c.construction.lambda0, 0.9);
    }

    #[test]
    fn sweep_expansion() {
        let mut c = PipelineConfig::default();
        assert_eq!(sweep_configs(&c).unwrap().len(), 1);
        c.sweep.eps = vec![0.1, 0.5];
        c.sweep.alpha = vec![2.1, 2.2, 2.3];
        let v = sweep_configs(&c).unwrap();
        assert_eq!(v.len(), 6);
        assert_eq!((v[1].construction.alpha, v[1].construction.eps), (2.1, 0.5));
        c.sweep.max_runs = 5;
        assert!(matches!(sweep_configs(&c), Err(ConfigError::SweepTooLarge { runs: 6, cap: 5 })));
    }

    #[test]
    fn hypersurface_ricci_of_round_sphere() {
        let t: f64 = 0.8;
        let (rt, rs) = hypersurface_ricci(4, t.sin(), t.cos(), -t.sin());
        assert!((rt - 3.0).abs() < 1e-14);
        assert!((rs - 3.0).abs() < 1e-14);
        let (f, f1, f2) = (1.3, 0.4, 0.2);
        let scal = rt_plus(4, f, f1, f2);
        assert!((scal - geometry::warped_scalar(4, f, f1, f2)).abs() < 1e-13);
    }

    fn rt_plus(n: usize, f: f64, f1: f64, f2: f64) -> f64 {
        let (rt, rs) = hypersurface_ricci(n, f, f1, f2);
        rt + (n as f64 - 1.0) * rs
    }

    #[test]
    fn invalid_alpha_fails_at_validate() {
        let mut c = PipelineConfig::default();
        c.construction.alpha = 2.0;
        let run = run_pipeline(&c, Scope::All);
        assert_eq!(run.report.verdict, Verdict::Fail);
        assert_eq!(run.report.failed_stage, Some(Stage::Validate));
        assert!(run.report.violations.iter().any(|v| v.field == "alpha"));
        assert_eq!(run.report.exit_code(), 1);
    }
}
