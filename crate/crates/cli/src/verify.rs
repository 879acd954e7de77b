//! Self-checks runnable from the command line. Each suite produces a table of
//! `(case, quantity, value, lower, upper)` rows with a pass flag.

use std::f64::consts::PI;
use std::str::FromStr;

use anyhow::Result;
use mvsc_core::adjoint::duality_residual;
use mvsc_core::control::ControlPath;
use mvsc_core::ensemble::{wasserstein2, Ensemble};
use mvsc_core::forward::solve;
use mvsc_core::noise::{KeyedGaussian, NoisePlan, Stream};
use mvsc_core::objective::{cost_and_gradient, random_direction};
use mvsc_core::optimizer::{descend, DescentParams, DescentStatus};
use mvsc_core::problem::{
    assumption_probe, monotonicity_scalar_probe, CubicReactionDiffusion, LinearQuadratic, LqTables, TimeGrid,
    TimeTable, PROBE_SLACK,
};
use mvsc_core::spectral::SpectralField;
use mvsc_core::tangent::{gateaux_cost, solve_tangent};

use crate::config::{Instance, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Heat,
    Duality,
    Lq,
    Wasserstein,
    Assumptions,
    All,
}

impl Suite {
    pub const EACH: [Suite; 5] = [
        Suite::Heat,
        Suite::Duality,
        Suite::Lq,
        Suite::Wasserstein,
        Suite::Assumptions,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Heat => "heat",
            Suite::Duality => "duality",
            Suite::Lq => "lq",
            Suite::Wasserstein => "wasserstein",
            Suite::Assumptions => "assumptions",
            Suite::All => "all",
        }
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "heat" => Suite::Heat,
            "duality" => Suite::Duality,
            "lq" => Suite::Lq,
            "wasserstein" => Suite::Wasserstein,
            "assumptions" => Suite::Assumptions,
            "all" => Suite::All,
            other => return Err(format!("unknown suite {other:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub case: String,
    pub quantity: &'static str,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

impl CheckRow {
    fn at_most(case: impl Into<String>, quantity: &'static str, value: f64, upper: f64) -> Self {
        Self {
            case: case.into(),
            quantity,
            value,
            lower: f64::NEG_INFINITY,
            upper,
        }
    }

    fn within(case: impl Into<String>, quantity: &'static str, value: f64, lower: f64, upper: f64) -> Self {
        Self {
            case: case.into(),
            quantity,
            value,
            lower,
            upper,
        }
    }

    pub fn passed(&self) -> bool {
        self.value >= self.lower && self.value <= self.upper
    }
}

pub fn run_suite(suite: Suite, cfg: &RunConfig) -> Result<Vec<CheckRow>> {
    match suite {
        Suite::Heat => heat_order(cfg.grid.horizon, cfg.grid.n_steps),
        Suite::Duality => duality(cfg, 20),
        Suite::Lq => riccati(),
        Suite::Wasserstein => wasserstein(cfg.seed, 50),
        Suite::Assumptions => assumptions(cfg, 10_000),
        Suite::All => {
            let mut rows = Vec::new();
            for s in Suite::EACH {
                rows.extend(run_suite(s, cfg)?);
            }
            Ok(rows)
        }
    }
}

/// Mode-1 heat decay against `e^{−π²T}` at `n_t, 2n_t, 4n_t, 8n_t`; the error
/// must halve (within ±20 %) at every refinement.
pub fn heat_order(horizon: f64, n_t: usize) -> Result<Vec<CheckRow>> {
    let exact = (-PI * PI * horizon).exp();
    let mut errors = Vec::new();
    let mut rows = Vec::new();
    for level in 0..4 {
        let n = n_t << level;
        let grid = TimeGrid::new(horizon, n)?;
        let heat = LinearQuadratic::new(1, grid, LqTables::zeros(1), 3.0)?;
        let plan = NoisePlan::new(0, 1, 1, n, horizon)?;
        let control = ControlPath::zeros(n, 1, grid.dt(), 3.0, 1.0)?;
        let x0 = Ensemble::replicate(&SpectralField::mode(1, 1), 1);
        let bundle = solve(&heat, &control, &plan, &x0)?;
        let err = (bundle.terminal()[0][0] - exact).abs();
        rows.push(CheckRow::at_most(
            format!("n_t={n}"),
            "terminal_error",
            err,
            f64::INFINITY,
        ));
        errors.push(err);
    }
    for (l, w) in errors.windows(2).enumerate() {
        rows.push(CheckRow::within(
            format!("n_t={}/{}", n_t << l, n_t << (l + 1)),
            "error_ratio",
            w[0] / w[1],
            1.6,
            2.4,
        ));
    }
    Ok(rows)
}

/// Adjoint pairing against the tangent route over `tuples` random
/// `(seed, α, β)` on the configured instance.
pub fn duality(cfg: &RunConfig, tuples: usize) -> Result<Vec<CheckRow>> {
    let problem = cfg.problem();
    let x0 = cfg.initial_ensemble();
    let base = ControlPath::zeros(cfg.grid.n_steps, cfg.n_modes, cfg.grid.dt(), cfg.q, f64::MAX)?;
    let mut rows = Vec::new();
    for i in 0..tuples {
        let seed = cfg.seed.wrapping_add(i as u64);
        let plan = NoisePlan::new(seed, cfg.n_particles, cfg.n_modes, cfg.grid.n_steps, cfg.grid.horizon)?;
        let alpha = random_direction(&base, seed, 1_000_000 + i).scaled(0.5);
        let beta = random_direction(&base, seed, i);
        let ev = cost_and_gradient(problem, &alpha, &plan, &x0)?;
        let tangent = solve_tangent(problem, &ev.bundle, &beta)?;
        let gateaux = gateaux_cost(problem, &ev.bundle, &tangent, &beta)?;
        let pairing = ev.gradient.pairing(&beta);
        rows.push(CheckRow::at_most(
            format!("seed={seed}"),
            "gradient_vs_tangent",
            (pairing - gateaux).abs() / (1.0 + gateaux.abs()),
            1e-10,
        ));
        let d = duality_residual(problem, &ev.bundle, &tangent, &ev.adjoint, &beta)?;
        rows.push(CheckRow::at_most(
            format!("seed={seed}"),
            "terminal_vs_path",
            d.absolute / (1.0 + d.terminal_pairing.abs()),
            1e-10,
        ));
    }
    Ok(rows)
}

/// Scalar Riccati equation `−P' = 2aP − (b²/r)P² + w`, `P(T) = g`, integrated
/// with RK4; returns `P` at `n + 1` uniform nodes.
pub fn riccati_path(a: f64, b: f64, r: f64, w: f64, g: f64, horizon: f64, n: usize) -> Vec<f64> {
    let rhs = |p: f64| -(2.0 * a * p - b * b / r * p * p + w);
    let h = horizon / n as f64;
    let mut out = vec![0.0; n + 1];
    out[n] = g;
    let mut p = g;
    for k in (0..n).rev() {
        // integrate backward: dP/ds = −rhs with s = T − t
        let f = |p: f64| -rhs(p);
        let k1 = f(p);
        let k2 = f(p + 0.5 * h * k1);
        let k3 = f(p + 0.5 * h * k2);
        let k4 = f(p + h * k3);
        p += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out[k] = p;
    }
    out
}

/// Closed-loop control `u = −(b/r) P x` with `x' = (a − b² P / r) x`, on the
/// fine grid of `p`.
pub fn closed_loop_control(p: &[f64], a: f64, b: f64, r: f64, x0: f64, horizon: f64) -> Vec<f64> {
    let n = p.len() - 1;
    let h = horizon / n as f64;
    let mut x = x0;
    let mut u = Vec::with_capacity(n + 1);
    for k in 0..=n {
        u.push(-(b / r) * p[k] * x);
        if k < n {
            // RK2 with the Riccati values at both ends of the sub-interval
            let f0 = (a - b * b * p[k] / r) * x;
            let x1 = x + h * f0;
            let f1 = (a - b * b * p[k + 1] / r) * x1;
            x += 0.5 * h * (f0 + f1);
        }
    }
    u
}

/// Deterministic scalar LQ problem solved by the optimizer and compared with
/// the Riccati feedback law in `L²(0, T)`.
pub fn riccati() -> Result<Vec<CheckRow>> {
    let (horizon, n_t) = (1.0, 4000);
    let (shift, b, w, r, g, x0) = (PI * PI - 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
    let grid = TimeGrid::new(horizon, n_t)?;
    let tables = LqTables {
        f_state: TimeTable::constant(vec![shift]),
        f_control: TimeTable::constant(vec![b]),
        cost_state: TimeTable::constant(vec![w]),
        cost_control: TimeTable::constant(vec![r]),
        terminal_state: vec![g],
        ..LqTables::zeros(1)
    };
    let problem = LinearQuadratic::new(1, grid, tables, 3.0)?;
    let plan = NoisePlan::new(0, 1, 1, n_t, horizon)?;
    let start = Ensemble::replicate(&SpectralField::from_vec(vec![x0]), 1);
    let initial = ControlPath::zeros(n_t, 1, grid.dt(), 3.0, 1e6)?;
    let params = DescentParams {
        max_iters: 500,
        tol: 1e-7,
        ..DescentParams::default()
    };
    let out = descend(&problem, &plan, &start, &initial, &params)?;

    let sub = 16;
    let a = shift - PI * PI;
    let p = riccati_path(a, b, r, w, g, horizon, n_t * sub);
    let u = closed_loop_control(&p, a, b, r, x0, horizon);
    let h = horizon / (n_t * sub) as f64;
    let mut dist_sq = 0.0;
    for k in 0..n_t {
        let ak = out.control[k][0];
        for j in 0..sub {
            // trapezoid on each fine cell
            let (u0, u1) = (u[k * sub + j], u[k * sub + j + 1]);
            dist_sq += 0.5 * h * ((ak - u0).powi(2) + (ak - u1).powi(2));
        }
    }
    Ok(vec![
        CheckRow::at_most(
            "scalar_lq",
            "optimizer_converged",
            if out.status == DescentStatus::Converged {
                0.0
            } else {
                1.0
            },
            0.0,
        ),
        CheckRow::at_most("scalar_lq", "l2_distance_to_riccati", dist_sq.sqrt(), 1e-3),
    ])
}

fn brute_force_w2(a: &Ensemble, b: &Ensemble) -> f64 {
    fn go(perm: &mut [usize], start: usize, a: &Ensemble, b: &Ensemble, best: &mut f64) {
        if start == perm.len() {
            let c: f64 = perm.iter().enumerate().map(|(i, &j)| (&a[i] - &b[j]).norm_h_sq()).sum();
            *best = best.min(c);
            return;
        }
        for i in start..perm.len() {
            perm.swap(start, i);
            go(perm, start + 1, a, b, best);
            perm.swap(start, i);
        }
    }
    let mut perm: Vec<usize> = (0..a.len()).collect();
    let mut best = f64::INFINITY;
    go(&mut perm, 0, a, b, &mut best);
    (best / a.len() as f64).sqrt()
}

/// Assignment-based `W₂` against exhaustive permutation search, `N ≤ 8`.
pub fn wasserstein(seed: u64, pairs: usize) -> Result<Vec<CheckRow>> {
    let gen = KeyedGaussian::new(seed);
    let m = 3;
    let mut rows = Vec::new();
    for pair in 0..pairs as u32 {
        let n = 1 + pair as usize % 8;
        let draw = |side: u32| -> Result<Ensemble> {
            Ok(Ensemble::new(
                (0..n as u32)
                    .map(|i| {
                        SpectralField::from_vec(
                            (0..m)
                                .map(|c| gen.normal(Stream::Probe, pair, (side << 16) | i, c))
                                .collect(),
                        )
                    })
                    .collect(),
            )?)
        };
        let (a, b) = (draw(0)?, draw(1)?);
        let diff = (wasserstein2(&a, &b)? - brute_force_w2(&a, &b)).abs();
        rows.push(CheckRow::at_most(
            format!("pair={pair},N={n}"),
            "abs_difference",
            diff,
            1e-12,
        ));
    }
    Ok(rows)
}

/// Sampled structural inequalities on the configured instance, plus the
/// scalar monotonicity of the cubic reaction.
pub fn assumptions(cfg: &RunConfig, samples: usize) -> Result<Vec<CheckRow>> {
    let report = assumption_probe(cfg.problem(), samples, cfg.seed, 1.0);
    let case = cfg.problem().name().to_string();
    let mut rows = vec![
        CheckRow::at_most(case.clone(), "violations", report.violations as f64, 0.0),
        CheckRow::within(
            case.clone(),
            "coercivity_margin",
            report.coercivity_margin,
            -PROBE_SLACK,
            f64::INFINITY,
        ),
        CheckRow::within(
            case.clone(),
            "monotonicity_margin",
            report.monotonicity_margin,
            -PROBE_SLACK,
            f64::INFINITY,
        ),
        CheckRow::within(
            case.clone(),
            "diffusion_margin",
            report.diffusion_margin,
            -PROBE_SLACK,
            f64::INFINITY,
        ),
    ];
    if let Instance::Cubic(_) = cfg.instance {
        let worst = monotonicity_scalar_probe(CubicReactionDiffusion::reaction, samples, cfg.seed, 2.0);
        rows.push(CheckRow::at_most("reaction", "max_monotonicity_product", worst, 0.0));
    }
    Ok(rows)
}
