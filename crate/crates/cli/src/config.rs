//! Run configuration: strict TOML schema, validation, and construction of the
//! solver objects.
//!
//! Unknown keys are rejected. Every constraint violation is collected so that
//! a single run reports all of them.

use std::fmt;
use std::path::{Path, PathBuf};

use mvsc_core::control::ControlPath;
use mvsc_core::ensemble::Ensemble;
use mvsc_core::forward::sample_initial_ensemble;
use mvsc_core::noise::NoisePlan;
use mvsc_core::optimizer::DescentParams;
use mvsc_core::problem::{CubicReactionDiffusion, LinearQuadratic, LqTables, Problem, TimeGrid, TimeTable};
use mvsc_core::spectral::SpectralField;
use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum ProblemKind {
    #[serde(rename = "lq")]
    Lq,
    #[serde(rename = "cubic_rd")]
    CubicRd,
}

impl ProblemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Lq => "lq",
            ProblemKind::CubicRd => "cubic_rd",
        }
    }

    fn default_q(self) -> f64 {
        match self {
            ProblemKind::Lq => 3.0,
            ProblemKind::CubicRd => 7.0,
        }
    }
}

/// A scalar (broadcast over modes and time), one row of `M` values (constant
/// in time), or one row per time node.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum TableSpec {
    Scalar(f64),
    Row(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

/// A scalar (broadcast over modes) or one value per mode.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum RowSpec {
    Scalar(f64),
    Row(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub problem: ProblemKind,
    #[serde(rename = "T", alias = "horizon")]
    pub horizon: f64,
    #[serde(rename = "n_t", alias = "n_steps")]
    pub n_steps: i64,
    #[serde(rename = "M", alias = "n_modes")]
    pub n_modes: i64,
    #[serde(rename = "N", alias = "n_particles")]
    pub n_particles: i64,
    #[serde(default)]
    pub seed: u64,
    pub q: Option<f64>,
    #[serde(rename = "K", default = "default_bound")]
    pub bound: f64,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub initial: InitialConfig,
    pub cubic: Option<CubicConfig>,
    pub lq: Option<LqConfig>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

fn default_bound() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// Leading sine coefficients of the ensemble mean; missing modes are zero.
    #[serde(default)]
    pub mean: Vec<f64>,
    #[serde(default)]
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubicConfig {
    pub kappa: f64,
    /// Scalar `σ` (mode `k` gets `σ/k`) or one intensity per mode.
    pub sigma: RowSpec,
    /// Control multiplier `b(t, ξ)`: a constant, a profile sampled uniformly on
    /// `[0, 1]`, or one profile per time node. Profiles are interpolated linearly.
    #[serde(default = "unit_b")]
    pub b: TableSpec,
    pub u_bar: Option<TableSpec>,
    pub alpha_bar: Option<TableSpec>,
    #[serde(rename = "u_bar_T")]
    pub u_bar_terminal: Option<RowSpec>,
}

fn unit_b() -> TableSpec {
    TableSpec::Scalar(1.0)
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqConfig {
    pub f_state: Option<TableSpec>,
    pub f_mean: Option<TableSpec>,
    pub f_control: Option<TableSpec>,
    pub b_const: Option<TableSpec>,
    pub b_state: Option<TableSpec>,
    pub b_mean: Option<TableSpec>,
    pub b_control: Option<TableSpec>,
    pub cost_state: Option<TableSpec>,
    pub cost_spread: Option<TableSpec>,
    pub cost_control: Option<TableSpec>,
    pub h_running: Option<TableSpec>,
    pub h_terminal: Option<RowSpec>,
    pub terminal_state: Option<RowSpec>,
    pub terminal_spread: Option<RowSpec>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub step0: f64,
    pub armijo_c: f64,
    pub shrink: f64,
    pub tol: f64,
    pub min_step: f64,
    pub fixed_noise: bool,
    /// Constant initial control, one value per mode (zero by default).
    pub initial_control: Option<RowSpec>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let d = DescentParams::default();
        Self {
            max_iters: d.max_iters,
            step0: d.step0,
            armijo_c: d.armijo_c,
            shrink: d.shrink,
            tol: d.tol,
            min_step: d.min_step,
            fixed_noise: d.fixed_noise,
            initial_control: None,
        }
    }
}

impl OptimizerConfig {
    pub fn params(&self) -> DescentParams {
        DescentParams {
            max_iters: self.max_iters,
            step0: self.step0,
            armijo_c: self.armijo_c,
            shrink: self.shrink,
            tol: self.tol,
            min_step: self.min_step,
            fixed_noise: self.fixed_noise,
        }
    }
}

/// One violated constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config file {0} does not exist")]
    Missing(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config:\n{}", .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
}

impl ConfigError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ConfigError::Invalid(v) => v,
            _ => &[],
        }
    }
}

/// Either instance behind one type.
#[derive(Debug, Clone)]
pub enum Instance {
    Cubic(CubicReactionDiffusion),
    Lq(LinearQuadratic),
}

impl Instance {
    pub fn problem(&self) -> &dyn Problem {
        match self {
            Instance::Cubic(p) => p,
            Instance::Lq(p) => p,
        }
    }
}

/// Fully validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub raw: RawConfig,
    /// SHA-256 of the config file bytes.
    pub hash: String,
    pub kind: ProblemKind,
    pub grid: TimeGrid,
    pub n_modes: usize,
    pub n_particles: usize,
    pub seed: u64,
    pub q: f64,
    pub bound: f64,
    pub instance: Instance,
    pub descent: DescentParams,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn problem(&self) -> &dyn Problem {
        self.instance.problem()
    }

    pub fn noise_plan(&self) -> NoisePlan {
        NoisePlan::new(
            self.seed,
            self.n_particles,
            self.n_modes,
            self.grid.n_steps,
            self.grid.horizon,
        )
        .expect("validated sizes")
    }

    pub fn initial_ensemble(&self) -> Ensemble {
        let mut mean = self.raw.initial.mean.clone();
        mean.resize(self.n_modes, 0.0);
        sample_initial_ensemble(
            self.seed,
            self.n_particles,
            &SpectralField::from_vec(mean),
            self.raw.initial.spread,
        )
    }

    pub fn initial_control(&self) -> ControlPath {
        let value = match &self.raw.optimizer.initial_control {
            None => vec![0.0; self.n_modes],
            Some(spec) => expand_row(spec, self.n_modes),
        };
        ControlPath::constant(
            &SpectralField::from_vec(value),
            self.grid.n_steps,
            self.grid.dt(),
            self.q,
            self.bound,
        )
        .expect("validated control")
    }
}

fn expand_row(spec: &RowSpec, m: usize) -> Vec<f64> {
    match spec {
        RowSpec::Scalar(v) => vec![*v; m],
        RowSpec::Row(r) => r.clone(),
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    if !path.exists() {
        return Err(ConfigError::Missing(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text)?;
    let hash = hex::encode(Sha256::digest(text.as_bytes()));
    validate(raw, hash)
}

struct Checker {
    violations: Vec<Violation>,
}

impl Checker {
    fn require(&mut self, ok: bool, field: &str, rule: impl Into<String>) {
        if !ok {
            self.violations.push(Violation {
                field: field.to_string(),
                rule: rule.into(),
            });
        }
    }

    fn finite_row(&mut self, field: &str, row: &[f64]) {
        self.require(row.iter().all(|v| v.is_finite()), field, "all entries must be finite");
    }

    fn row(&mut self, field: &str, spec: &RowSpec, m: usize) -> Vec<f64> {
        let v = expand_row(spec, m);
        self.require(
            v.len() == m,
            field,
            format!("expected {m} values (one per mode), got {}", v.len()),
        );
        self.finite_row(field, &v);
        v
    }

    fn table(&mut self, field: &str, spec: &TableSpec, m: usize, nodes: usize) -> TimeTable {
        match spec {
            TableSpec::Scalar(v) => {
                self.finite_row(field, &[*v]);
                TimeTable::constant(vec![*v; m])
            }
            TableSpec::Row(r) => {
                self.require(
                    r.len() == m,
                    field,
                    format!("expected {m} values (one per mode), got {}", r.len()),
                );
                self.finite_row(field, r);
                TimeTable::constant(r.clone())
            }
            TableSpec::Rows(rows) => {
                self.require(
                    rows.len() == nodes,
                    field,
                    format!("expected {nodes} rows (one per time node), got {}", rows.len()),
                );
                for r in rows {
                    self.require(
                        r.len() == m,
                        field,
                        format!("expected rows of {m} values, got {}", r.len()),
                    );
                    self.finite_row(field, r);
                }
                TimeTable::from_rows(rows.clone())
            }
        }
    }
}

/// Linear interpolation of a profile sampled uniformly on `[0, 1]`.
fn interpolate(profile: &[f64], xi: f64) -> f64 {
    if profile.len() == 1 {
        return profile[0];
    }
    let s = xi.clamp(0.0, 1.0) * (profile.len() - 1) as f64;
    let i = (s.floor() as usize).min(profile.len() - 2);
    let w = s - i as f64;
    profile[i] * (1.0 - w) + profile[i + 1] * w
}

fn validate(raw: RawConfig, hash: String) -> Result<RunConfig, ConfigError> {
    let mut c = Checker { violations: Vec::new() };
    c.require(
        raw.horizon.is_finite() && raw.horizon > 0.0,
        "T",
        "horizon must be finite and > 0",
    );
    c.require(raw.n_steps >= 1, "n_t", "number of time steps must be >= 1");
    c.require(raw.n_modes >= 1, "M", "number of modes must be >= 1");
    c.require(raw.n_particles >= 1, "N", "number of particles must be >= 1");
    c.require(
        raw.bound.is_finite() && raw.bound > 0.0,
        "K",
        "control budget must be finite and > 0",
    );
    let q = raw.q.unwrap_or(raw.problem.default_q());
    match raw.problem {
        ProblemKind::CubicRd => c.require(
            q > 6.0,
            "q",
            "cubic nonlinearity (r = 3, growth p = 4) in one space dimension requires q > p + 2 = 6",
        ),
        ProblemKind::Lq => c.require(q > 2.0, "q", "linear coefficients (growth p = 0) require q > p + 2 = 2"),
    }
    c.require(
        raw.initial.spread.is_finite() && raw.initial.spread >= 0.0,
        "initial.spread",
        "spread must be finite and >= 0",
    );
    c.finite_row("initial.mean", &raw.initial.mean);
    let opt = &raw.optimizer;
    c.require(opt.step0 > 0.0, "optimizer.step0", "initial step must be > 0");
    c.require(
        opt.armijo_c > 0.0 && opt.armijo_c < 1.0,
        "optimizer.armijo_c",
        "Armijo constant must lie in (0, 1)",
    );
    c.require(
        opt.shrink > 0.0 && opt.shrink < 1.0,
        "optimizer.shrink",
        "backtracking factor must lie in (0, 1)",
    );
    c.require(opt.tol >= 0.0, "optimizer.tol", "tolerance must be >= 0");
    c.require(opt.min_step > 0.0, "optimizer.min_step", "minimum step must be > 0");

    let structural_ok = c.violations.is_empty();
    if !structural_ok {
        return Err(ConfigError::Invalid(c.violations));
    }

    let m = raw.n_modes as usize;
    c.require(
        raw.initial.mean.len() <= m,
        "initial.mean",
        format!("at most {m} coefficients (one per mode)"),
    );
    if let Some(spec) = &opt.initial_control {
        c.row("optimizer.initial_control", spec, m);
    }
    let grid = TimeGrid::new(raw.horizon, raw.n_steps as usize).expect("checked above");
    let nodes = grid.n_steps + 1;

    let instance = match raw.problem {
        ProblemKind::CubicRd => {
            c.require(
                raw.lq.is_none(),
                "lq",
                "section not allowed when problem = \"cubic_rd\"",
            );
            match &raw.cubic {
                None => {
                    c.require(false, "cubic", "section required when problem = \"cubic_rd\"");
                    None
                }
                Some(cfg) => build_cubic(&mut c, cfg, m, grid, q),
            }
        }
        ProblemKind::Lq => {
            c.require(
                raw.cubic.is_none(),
                "cubic",
                "section not allowed when problem = \"lq\"",
            );
            build_lq(&mut c, raw.lq.as_ref().cloned().unwrap_or_default(), m, grid, nodes, q)
        }
    };

    let output_dir = raw.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let descent = opt.params();
    let config = instance.map(|instance| RunConfig {
        hash,
        kind: raw.problem,
        grid,
        n_modes: m,
        n_particles: raw.n_particles as usize,
        seed: raw.seed,
        q,
        bound: raw.bound,
        instance,
        descent,
        output_dir,
        raw,
    });
    if let Some(cfg) = &config {
        let c0 = cfg.initial_control();
        c.require(
            c0.is_feasible(),
            "optimizer.initial_control",
            format!(
                "initial control violates the budget: integral {} > K = {}",
                c0.q_integral(),
                cfg.bound
            ),
        );
    }
    match config {
        Some(cfg) if c.violations.is_empty() => Ok(cfg),
        _ => Err(ConfigError::Invalid(c.violations)),
    }
}

fn build_cubic(c: &mut Checker, cfg: &CubicConfig, m: usize, grid: TimeGrid, q: f64) -> Option<Instance> {
    let nodes = grid.n_steps + 1;
    c.require(cfg.kappa.is_finite(), "cubic.kappa", "must be finite");
    let sigma = match &cfg.sigma {
        RowSpec::Scalar(s) => (1..=m).map(|k| s / k as f64).collect(),
        spec => c.row("cubic.sigma", spec, m),
    };
    c.finite_row("cubic.sigma", &sigma);
    let u_bar = cfg
        .u_bar
        .as_ref()
        .map_or(TimeTable::zeros(m), |s| c.table("cubic.u_bar", s, m, nodes));
    let alpha_bar = cfg
        .alpha_bar
        .as_ref()
        .map_or(TimeTable::zeros(m), |s| c.table("cubic.alpha_bar", s, m, nodes));
    let u_t = cfg
        .u_bar_terminal
        .as_ref()
        .map_or(vec![0.0; m], |s| c.row("cubic.u_bar_T", s, m));
    let b_profiles: Vec<Vec<f64>> = match &cfg.b {
        TableSpec::Scalar(b) => vec![vec![*b]],
        TableSpec::Row(r) => {
            c.require(r.len() >= 2, "cubic.b", "a profile needs at least two samples");
            vec![r.clone()]
        }
        TableSpec::Rows(rows) => {
            c.require(
                rows.len() == nodes,
                "cubic.b",
                format!("expected {nodes} profiles (one per time node), got {}", rows.len()),
            );
            c.require(
                rows.iter().all(|r| r.len() >= 2),
                "cubic.b",
                "a profile needs at least two samples",
            );
            rows.clone()
        }
    };
    for p in &b_profiles {
        c.finite_row("cubic.b", p);
    }
    if !c.violations.is_empty() {
        return None;
    }
    let dt = grid.dt();
    let problem = CubicReactionDiffusion::new(m, grid, cfg.kappa, 0.0)
        .with_b_fn(|t, xi| {
            let k = ((t / dt).round() as usize).min(b_profiles.len() - 1);
            interpolate(&b_profiles[k], xi)
        })
        .with_sigma(sigma)
        .and_then(|p| p.with_references(u_bar, alpha_bar, SpectralField::from_vec(u_t)))
        .and_then(|p| p.with_q(q));
    match problem {
        Ok(p) => Some(Instance::Cubic(p)),
        Err(e) => {
            c.require(false, "cubic", e.to_string());
            None
        }
    }
}

fn build_lq(c: &mut Checker, cfg: LqConfig, m: usize, grid: TimeGrid, nodes: usize, q: f64) -> Option<Instance> {
    let mut table = |name: &str, spec: &Option<TableSpec>| {
        spec.as_ref()
            .map_or(TimeTable::zeros(m), |s| c.table(&format!("lq.{name}"), s, m, nodes))
    };
    let mut t = LqTables {
        f_state: table("f_state", &cfg.f_state),
        f_mean: table("f_mean", &cfg.f_mean),
        f_control: table("f_control", &cfg.f_control),
        b_const: table("b_const", &cfg.b_const),
        b_state: table("b_state", &cfg.b_state),
        b_mean: table("b_mean", &cfg.b_mean),
        b_control: table("b_control", &cfg.b_control),
        cost_state: table("cost_state", &cfg.cost_state),
        cost_spread: table("cost_spread", &cfg.cost_spread),
        cost_control: table("cost_control", &cfg.cost_control),
        h_running: table("h_running", &cfg.h_running),
        ..LqTables::zeros(m)
    };
    if let Some(s) = &cfg.h_terminal {
        t.h_terminal = c.row("lq.h_terminal", s, m);
    }
    if let Some(s) = &cfg.terminal_state {
        t.terminal_state = c.row("lq.terminal_state", s, m);
    }
    if let Some(s) = &cfg.terminal_spread {
        t.terminal_spread = c.row("lq.terminal_spread", s, m);
    }
    for (name, tab) in [
        ("cost_state", &t.cost_state),
        ("cost_spread", &t.cost_spread),
        ("cost_control", &t.cost_control),
    ] {
        c.require(tab.min() >= 0.0, &format!("lq.{name}"), "cost weights must be >= 0");
    }
    for (name, v) in [
        ("terminal_state", &t.terminal_state),
        ("terminal_spread", &t.terminal_spread),
    ] {
        c.require(
            v.iter().all(|&x| x >= 0.0),
            &format!("lq.{name}"),
            "cost weights must be >= 0",
        );
    }
    if !c.violations.is_empty() {
        return None;
    }
    match LinearQuadratic::new(m, grid, t, q) {
        Ok(p) => Some(Instance::Lq(p)),
        Err(e) => {
            c.require(false, "lq", e.to_string());
            None
        }
    }
}
