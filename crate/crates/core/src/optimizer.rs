//! Projected gradient descent over the admissible controls with Armijo
//! backtracking, and the first-order (Pontryagin) stationarity residual.
//!
//! The admissible set is `{α : Σ dt ‖α_k‖^q <= K}`. Infeasible points are
//! pulled back by radial rescaling, which is not the metric projection onto
//! the `L^q` ball for `q > 2`; shipped configurations keep the constraint
//! inactive at the optimum.

use crate::adjoint::solve_adjoint;
use crate::control::ControlPath;
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::forward::solve;
use crate::noise::{KeyedGaussian, NoisePlan, Stream};
use crate::objective::{cost, cost_and_gradient, gradient, interval_hamiltonian, GradientPath};
use crate::problem::Problem;
use crate::spectral::SpectralField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentParams {
    pub max_iters: usize,
    pub step0: f64,
    pub armijo_c: f64,
    pub shrink: f64,
    /// Stationarity tolerance on [`pontryagin_residual`].
    pub tol: f64,
    /// Line search gives up below this step.
    pub min_step: f64,
    /// Keep the noise keys fixed across iterations (sample-average approximation).
    pub fixed_noise: bool,
}

impl Default for DescentParams {
    fn default() -> Self {
        Self {
            max_iters: 200,
            step0: 0.5,
            armijo_c: 1e-4,
            shrink: 0.5,
            tol: 1e-6,
            min_step: 1e-14,
            fixed_noise: true,
        }
    }
}

impl DescentParams {
    pub fn validate(&self) -> Result<()> {
        let checks: [(&'static str, f64, bool, &'static str); 5] = [
            ("step0", self.step0, self.step0 > 0.0, "step0 > 0"),
            (
                "armijo_c",
                self.armijo_c,
                self.armijo_c > 0.0 && self.armijo_c < 1.0,
                "0 < armijo_c < 1",
            ),
            (
                "shrink",
                self.shrink,
                self.shrink > 0.0 && self.shrink < 1.0,
                "0 < shrink < 1",
            ),
            ("tol", self.tol, self.tol >= 0.0, "tol >= 0"),
            ("min_step", self.min_step, self.min_step > 0.0, "min_step > 0"),
        ];
        for (what, value, ok, rule) in checks {
            if !ok {
                return Err(Error::OutOfRange { what, value, rule });
            }
        }
        Ok(())
    }
}

/// Radial feasibility restoration onto `Σ dt ‖α_k‖^q <= K`.
pub fn project_admissible(control: &ControlPath) -> Result<ControlPath> {
    if !(control.bound > 0.0) {
        return Err(Error::OutOfRange {
            what: "K",
            value: control.bound,
            rule: "K > 0",
        });
    }
    let integral = control.q_integral();
    if integral <= control.bound {
        return Ok(control.clone());
    }
    let s = (control.bound / integral).powf(1.0 / control.q);
    let mut out = control.scaled(s);
    // guard the last ulp so the result is feasible in floating point
    while out.q_integral() > control.bound {
        out = out.scaled(1.0 - f64::EPSILON);
    }
    Ok(out)
}

/// `max_k ‖α_k − Π(α − ∇J)_k‖_U / (1 + ‖α_k‖_U)`.
pub fn residual_from_gradient(control: &ControlPath, grad: &GradientPath) -> Result<f64> {
    let trial = control.with_values(control.values().iter().zip(&grad.values).map(|(a, g)| a - g).collect());
    let projected = project_admissible(&trial)?;
    Ok(control
        .values()
        .iter()
        .zip(projected.values())
        .map(|(a, p)| (a - p).norm_h() / (1.0 + a.norm_h()))
        .fold(0.0, f64::max))
}

/// Projected-gradient stationarity residual at `control`, using the noise of `plan`.
pub fn pontryagin_residual(
    problem: &dyn Problem,
    plan: &NoisePlan,
    x0: &Ensemble,
    control: &ControlPath,
) -> Result<f64> {
    let ev = cost_and_gradient(problem, control, plan, x0)?;
    residual_from_gradient(control, &ev.gradient)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescentStatus {
    Converged,
    MaxIterations,
    LineSearchFailed,
    /// The only acceptable step leaves the cost bit-identical: the residual has
    /// reached the floating-point resolution of the cost.
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLog {
    pub iter: usize,
    pub cost: f64,
    /// accepted step (0 for the initial point)
    pub step: f64,
    pub residual: f64,
    /// `K − Σ dt ‖α_k‖^q`
    pub feasibility: f64,
}

#[derive(Debug, Clone)]
pub struct DescentOutcome {
    pub control: ControlPath,
    pub gradient: GradientPath,
    /// accepted costs, starting with the initial one
    pub history: Vec<f64>,
    pub log: Vec<IterationLog>,
    pub status: DescentStatus,
    pub residual: f64,
}

fn plan_for_iteration(plan: &NoisePlan, params: &DescentParams, iter: usize) -> NoisePlan {
    if params.fixed_noise {
        *plan
    } else {
        NoisePlan {
            seed: plan.seed.wrapping_add(iter as u64),
            ..*plan
        }
    }
}

/// Iterates `α⁺ = Π(α − η∇J)`, accepting when
/// `J(α⁺) <= J(α) − c Σ dt ⟨∇J_k, α_k − α⁺_k⟩`, which is `J(α) − cη‖∇J‖²`
/// whenever the projection is inactive.
pub fn descend(
    problem: &dyn Problem,
    plan: &NoisePlan,
    x0: &Ensemble,
    initial: &ControlPath,
    params: &DescentParams,
) -> Result<DescentOutcome> {
    params.validate()?;
    if !initial.is_feasible() {
        return Err(Error::OutOfRange {
            what: "initial control q-integral",
            value: initial.q_integral(),
            rule: "initial control must satisfy the constraint",
        });
    }
    let mut control = initial.clone();
    let mut ev = cost_and_gradient(problem, &control, &plan_for_iteration(plan, params, 0), x0)?;
    let mut residual = residual_from_gradient(&control, &ev.gradient)?;
    let mut history = vec![ev.cost];
    let mut log = vec![IterationLog {
        iter: 0,
        cost: ev.cost,
        step: 0.0,
        residual,
        feasibility: control.bound - control.q_integral(),
    }];
    let mut status = DescentStatus::MaxIterations;

    for iter in 1..=params.max_iters {
        if residual <= params.tol {
            status = DescentStatus::Converged;
            break;
        }
        let iter_plan = plan_for_iteration(plan, params, iter);
        let reference = if params.fixed_noise {
            ev.cost
        } else {
            cost(problem, &solve(problem, &control, &iter_plan, x0)?)?
        };
        let grad_path = control.with_values(ev.gradient.values.clone());
        let mut step = params.step0;
        let accepted = loop {
            let candidate = project_admissible(&control.offset(-step, &grad_path))?;
            let decrease = params.armijo_c * ev.gradient.pairing(&control.offset(-1.0, &candidate));
            // a blow-up during the trial counts as a rejected step
            if let Ok(bundle) = solve(problem, &candidate, &iter_plan, x0) {
                let trial_cost = cost(problem, &bundle)?;
                if trial_cost <= reference - decrease {
                    break Some((candidate, bundle, trial_cost));
                }
            }
            step *= params.shrink;
            if step < params.min_step {
                break None;
            }
        };
        let Some((candidate, bundle, trial_cost)) = accepted else {
            status = DescentStatus::LineSearchFailed;
            break;
        };
        if params.fixed_noise && trial_cost == reference {
            status = DescentStatus::Stalled;
            break;
        }
        let adjoint = solve_adjoint(problem, &bundle)?;
        let grad = gradient(problem, &bundle, &adjoint)?;
        control = candidate;
        ev.cost = trial_cost;
        ev.gradient = grad;
        residual = residual_from_gradient(&control, &ev.gradient)?;
        history.push(trial_cost);
        log.push(IterationLog {
            iter,
            cost: trial_cost,
            step,
            residual,
            feasibility: control.bound - control.q_integral(),
        });
    }
    if status == DescentStatus::MaxIterations && residual <= params.tol {
        status = DescentStatus::Converged;
    }
    Ok(DescentOutcome {
        control,
        gradient: ev.gradient,
        history,
        log,
        status,
        residual,
    })
}

/// `min_β dJ(α)·(β − α) / ‖β − α‖_{L²}` over the supplied feasible controls.
/// Non-negative (up to tolerance) at a stationary point.
pub fn variational_inequality_margin(grad: &GradientPath, control: &ControlPath, candidates: &[ControlPath]) -> f64 {
    candidates
        .iter()
        .map(|beta| {
            let d = beta.offset(-1.0, control);
            let norm = d.norm_l2();
            if norm == 0.0 {
                0.0
            } else {
                grad.pairing(&d) / norm
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Feasible control with keyed normal entries, rescaled into the admissible set
/// if needed.
pub fn random_feasible_control(like: &ControlPath, seed: u64, index: usize, scale: f64) -> Result<ControlPath> {
    let gen = KeyedGaussian::new(seed);
    let raw = like.with_values(
        (0..like.len())
            .map(|k| {
                SpectralField::from_vec(
                    (0..like.n_modes())
                        .map(|m| scale * gen.normal(Stream::Control, index as u32, k as u32, m as u32))
                        .collect(),
                )
            })
            .collect(),
    );
    project_admissible(&raw)
}

/// Pointwise Hamiltonian minimality: for every interval, the ensemble-averaged
/// discrete Hamiltonian at `α_k` is compared against `samples` trial values
/// `α_k + radius·d` with random unit `d`. Returns the smallest
/// `H(trial) − H(α_k)`; negative values indicate a non-minimizing control.
pub fn hamiltonian_minimality_gap(
    problem: &dyn Problem,
    plan: &NoisePlan,
    x0: &Ensemble,
    control: &ControlPath,
    samples: usize,
    radius: f64,
) -> Result<f64> {
    let bundle = solve(problem, control, plan, x0)?;
    let adjoint = solve_adjoint(problem, &bundle)?;
    let gen = KeyedGaussian::new(plan.seed ^ 0xA5A5_5A5A);
    let mut worst = f64::INFINITY;
    for k in 0..control.len() {
        let h0 = interval_hamiltonian(problem, &bundle, &adjoint, k, &control[k]);
        for s in 0..samples {
            let d = SpectralField::from_vec(
                (0..control.n_modes())
                    .map(|m| gen.normal(Stream::Control, (1 << 20) + s as u32, k as u32, m as u32))
                    .collect(),
            );
            let d = d.scaled(radius / d.norm_h().max(f64::MIN_POSITIVE));
            let trial = &control[k] + &d;
            let h = interval_hamiltonian(problem, &bundle, &adjoint, k, &trial);
            worst = worst.min(h - h0);
        }
    }
    Ok(worst)
}
