use std::path::{Path, PathBuf};

use anyhow::Result;
use mvsc_core::ensemble::EmpiricalLaw;
use mvsc_core::forward::solve;
use mvsc_core::objective::{gradcheck, FINITE_DIFFERENCE_TOLERANCE, TANGENT_TOLERANCE};
use mvsc_core::optimizer::{descend, DescentStatus};

use crate::config::RunConfig;
use crate::output::{fmt_f64, Failure, Manifest, OutputSink};
use crate::verify::{run_suite, Suite};

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Simulate,
    Gradcheck { dirs: usize, eps: f64 },
    Optimize { max_iters: Option<usize>, tol: Option<f64> },
    Verify { suite: Suite },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Gradcheck { .. } => "gradcheck",
            Command::Optimize { .. } => "optimize",
            Command::Verify { .. } => "verify",
        }
    }
}

/// Result of a command that ran to completion; `failures` is empty on success.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub failures: Vec<Failure>,
    pub outputs: Vec<PathBuf>,
    pub manifest: PathBuf,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs `command` on a validated config, writing every file into `out_dir`.
pub fn execute(
    cfg: &RunConfig,
    config_path: &Path,
    command: &Command,
    out_dir: &Path,
    emit_gnuplot: bool,
) -> Result<Outcome> {
    let mut sink = OutputSink::new(out_dir, command.name(), &cfg.hash, cfg.seed, emit_gnuplot)?;
    let failures = match command {
        Command::Simulate => simulate(cfg, &mut sink)?,
        Command::Gradcheck { dirs, eps } => run_gradcheck(cfg, &mut sink, *dirs, *eps)?,
        Command::Optimize { max_iters, tol } => optimize(cfg, &mut sink, *max_iters, *tol)?,
        Command::Verify { suite } => verify(cfg, &mut sink, *suite)?,
    };
    let manifest = Manifest::new(
        command.name(),
        cfg.kind.as_str(),
        config_path,
        &cfg.hash,
        cfg.seed,
        sink.written(),
        &failures,
    )
    .write(sink.dir())?;
    Ok(Outcome {
        failures,
        outputs: sink.written().to_vec(),
        manifest,
    })
}

fn simulate(cfg: &RunConfig, sink: &mut OutputSink) -> Result<Vec<Failure>> {
    let problem = cfg.problem();
    let bundle = solve(
        problem,
        &cfg.initial_control(),
        &cfg.noise_plan(),
        &cfg.initial_ensemble(),
    )?;
    let mut rows = Vec::new();
    let mut moments = Vec::new();
    for (k, ens) in bundle.states.iter().enumerate() {
        let t = fmt_f64(cfg.grid.time(k));
        for (i, x) in ens.iter().enumerate() {
            for (m, c) in x.coeffs().iter().enumerate() {
                rows.push(vec![t.clone(), i.to_string(), (m + 1).to_string(), fmt_f64(*c)]);
            }
        }
        let law = EmpiricalLaw::new(ens);
        moments.push(vec![
            t,
            fmt_f64(law.mean().norm_h()),
            fmt_f64(law.second_moment()),
            fmt_f64(ens.moment_q(cfg.q)?),
        ]);
    }
    sink.write_csv("trajectory.csv", &["t", "particle", "mode", "coeff"], rows)?;
    let path = sink.write_csv(
        "moments.csv",
        &["t", "mean_norm_h", "second_moment", "moment_q"],
        moments,
    )?;
    sink.gnuplot(
        &path,
        "ensemble moments",
        1,
        &[(2, "lines"), (3, "lines"), (4, "lines")],
        false,
    )?;
    Ok(Vec::new())
}

fn run_gradcheck(cfg: &RunConfig, sink: &mut OutputSink, dirs: usize, eps: f64) -> Result<Vec<Failure>> {
    let report = gradcheck(
        cfg.problem(),
        &cfg.noise_plan(),
        &cfg.initial_ensemble(),
        &cfg.initial_control(),
        dirs,
        eps,
    )?;
    let rows = report.rows.iter().map(|r| {
        vec![
            r.direction.to_string(),
            fmt_f64(r.adjoint),
            fmt_f64(r.tangent),
            fmt_f64(r.finite_difference),
            fmt_f64(r.relerr_adjoint_tangent),
            fmt_f64(r.relerr_adjoint_fd),
        ]
    });
    let path = sink.write_csv(
        "gradcheck.csv",
        &["dir", "adjoint", "tangent", "fd", "relerr_at", "relerr_afd"],
        rows,
    )?;
    sink.gnuplot(
        &path,
        "gradient check relative errors",
        1,
        &[(5, "points"), (6, "points")],
        true,
    )?;
    let mut failures = Vec::new();
    for r in &report.rows {
        // NaN errors must count as failures
        if r.relerr_adjoint_tangent.is_nan() || r.relerr_adjoint_tangent > TANGENT_TOLERANCE {
            failures.push(Failure::new(
                format!("gradcheck.dir{}.adjoint_vs_tangent", r.direction),
                format!("relative error {:e} > {TANGENT_TOLERANCE:e}", r.relerr_adjoint_tangent),
            ));
        }
        if r.relerr_adjoint_fd.is_nan() || r.relerr_adjoint_fd > FINITE_DIFFERENCE_TOLERANCE {
            failures.push(Failure::new(
                format!("gradcheck.dir{}.adjoint_vs_fd", r.direction),
                format!(
                    "relative error {:e} > {FINITE_DIFFERENCE_TOLERANCE:e}",
                    r.relerr_adjoint_fd
                ),
            ));
        }
    }
    Ok(failures)
}

fn optimize(
    cfg: &RunConfig,
    sink: &mut OutputSink,
    max_iters: Option<usize>,
    tol: Option<f64>,
) -> Result<Vec<Failure>> {
    let mut params = cfg.descent;
    if let Some(n) = max_iters {
        params.max_iters = n;
    }
    if let Some(t) = tol {
        params.tol = t;
    }
    let out = descend(
        cfg.problem(),
        &cfg.noise_plan(),
        &cfg.initial_ensemble(),
        &cfg.initial_control(),
        &params,
    )?;
    let log = out.log.iter().map(|l| {
        vec![
            l.iter.to_string(),
            fmt_f64(l.cost),
            fmt_f64(l.step),
            fmt_f64(l.residual),
            fmt_f64(l.feasibility),
        ]
    });
    let path = sink.write_csv(
        "optimization_log.csv",
        &["iter", "cost", "step", "residual", "feasibility"],
        log,
    )?;
    sink.gnuplot(
        &path,
        "projected gradient descent",
        1,
        &[(2, "linespoints"), (4, "linespoints")],
        true,
    )?;
    let mut control = Vec::new();
    for (k, a) in out.control.values().iter().enumerate() {
        for (m, v) in a.coeffs().iter().enumerate() {
            control.push(vec![fmt_f64(cfg.grid.time(k)), (m + 1).to_string(), fmt_f64(*v)]);
        }
    }
    sink.write_csv("control.csv", &["t", "mode", "value"], control)?;
    Ok(match out.status {
        DescentStatus::Converged => Vec::new(),
        DescentStatus::MaxIterations => vec![Failure::new(
            "optimize.converged",
            format!(
                "residual {:e} > tol {:e} after {} iterations",
                out.residual, params.tol, params.max_iters
            ),
        )],
        DescentStatus::Stalled => vec![Failure::new(
            "optimize.stalled",
            format!(
                "cost no longer decreases at floating-point resolution; residual {:e} > tol {:e}",
                out.residual, params.tol
            ),
        )],
        DescentStatus::LineSearchFailed => vec![Failure::new(
            "optimize.line_search",
            format!("no Armijo step found; residual {:e}", out.residual),
        )],
    })
}

fn verify(cfg: &RunConfig, sink: &mut OutputSink, suite: Suite) -> Result<Vec<Failure>> {
    let suites: Vec<Suite> = match suite {
        Suite::All => Suite::EACH.to_vec(),
        s => vec![s],
    };
    let mut failures = Vec::new();
    for s in suites {
        let rows = run_suite(s, cfg)?;
        for r in rows.iter().filter(|r| !r.passed()) {
            failures.push(Failure::new(
                format!("verify.{}.{}.{}", s.name(), r.case, r.quantity),
                format!("value {:e} outside [{:e}, {:e}]", r.value, r.lower, r.upper),
            ));
        }
        let table = rows.iter().map(|r| {
            vec![
                r.case.clone(),
                r.quantity.to_string(),
                fmt_f64(r.value),
                fmt_f64(r.lower),
                fmt_f64(r.upper),
                r.passed().to_string(),
            ]
        });
        sink.write_csv(
            &format!("verify_{}.csv", s.name()),
            &["case", "quantity", "value", "lower", "upper", "passed"],
            table,
        )?;
    }
    Ok(failures)
}
