//! Interacting-particle, semi-implicit Euler–Maruyama solver for the state equation.
//!
//! Per particle `i` and mode `m`:
//!
//! ```text
//! x_{k+1} = S ⊙ ( x_k + dt F(t_k, x_k, μ_k^N, α_k) + B(t_k, x_k, μ_k^N, α_k) ΔW_k^i ),
//! S_m = 1 / (1 + dt (mπ)²)
//! ```
//!
//! The Laplacian is implicit, drift and diffusion explicit. All particles see
//! the same empirical law `μ_k^N`, computed once per step in particle order.

use rayon::prelude::*;

use crate::control::ControlPath;
use crate::ensemble::{wasserstein2, EmpiricalLaw, Ensemble};
use crate::error::{Error, Result};
use crate::noise::{KeyedGaussian, NoisePlan, Stream};
use crate::problem::Problem;
use crate::spectral::{OperatorSpec, SpectralField};

/// States with H-norm above this abort the run.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

/// Complete forward record: states at every node, the increments that drove
/// them, and the control.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBundle {
    pub states: Vec<Ensemble>,
    /// `noise[k][i]` is `ΔW_k` for particle `i`.
    pub noise: Vec<Vec<Vec<f64>>>,
    pub control: ControlPath,
    pub plan: NoisePlan,
}

impl TrajectoryBundle {
    pub fn n_steps(&self) -> usize {
        self.noise.len()
    }

    pub fn n_particles(&self) -> usize {
        self.states[0].len()
    }

    pub fn n_modes(&self) -> usize {
        self.states[0].n_modes()
    }

    pub fn dt(&self) -> f64 {
        self.plan.dt
    }

    pub fn terminal(&self) -> &Ensemble {
        self.states.last().expect("at least one state")
    }
}

pub(crate) fn check_blow_up(ens: &Ensemble, step: usize) -> Result<()> {
    for (i, p) in ens.iter().enumerate() {
        let norm = p.norm_h();
        if !norm.is_finite() || norm > BLOW_UP_THRESHOLD {
            return Err(Error::BlowUp {
                step,
                particle: i,
                norm,
            });
        }
    }
    Ok(())
}

/// Advances every particle from node `k` to `k + 1`.
pub fn step(
    problem: &dyn Problem,
    k: usize,
    ens: &Ensemble,
    alpha: &SpectralField,
    dw: &[Vec<f64>],
    dt: f64,
) -> Result<Ensemble> {
    if dw.len() != ens.len() {
        return Err(Error::SizeMismatch {
            what: "noise rows",
            expected: ens.len(),
            got: dw.len(),
        });
    }
    if !(dt > 0.0) {
        return Err(Error::OutOfRange {
            what: "dt",
            value: dt,
            rule: "dt > 0",
        });
    }
    let m = problem.n_modes();
    if ens.n_modes() != m || alpha.n_modes() != m {
        return Err(Error::ModeMismatch {
            expected: m,
            got: if ens.n_modes() != m {
                ens.n_modes()
            } else {
                alpha.n_modes()
            },
        });
    }
    let resolvent = OperatorSpec::dirichlet_laplacian(m).resolvent(dt);
    let law = EmpiricalLaw::new(ens);
    let next: Vec<SpectralField> = ens
        .particles()
        .par_iter()
        .zip(dw.par_iter())
        .map(|(x, w)| {
            let mut rhs = x.clone();
            rhs.axpy(dt, &problem.drift(k, x, &law, alpha));
            rhs.axpy(1.0, &problem.diffusion(k, x, &law, alpha, w));
            rhs.hadamard(&resolvent)
        })
        .collect();
    let next = Ensemble::from_particles_unchecked(next);
    check_blow_up(&next, k + 1)?;
    Ok(next)
}

fn check_setup(problem: &dyn Problem, control: &ControlPath, plan: &NoisePlan, x0: &Ensemble) -> Result<()> {
    let grid = problem.grid();
    if plan.n_steps != grid.n_steps || control.len() != plan.n_steps {
        return Err(Error::SizeMismatch {
            what: "time steps (problem grid / noise plan / control)",
            expected: grid.n_steps,
            got: if control.len() != plan.n_steps {
                control.len()
            } else {
                plan.n_steps
            },
        });
    }
    if (plan.dt - grid.dt()).abs() > 1e-12 * grid.dt() {
        return Err(Error::OutOfRange {
            what: "noise plan dt",
            value: plan.dt,
            rule: "noise plan must use the problem's time grid",
        });
    }
    if x0.len() != plan.n_particles {
        return Err(Error::SizeMismatch {
            what: "initial ensemble size",
            expected: plan.n_particles,
            got: x0.len(),
        });
    }
    let m = problem.n_modes();
    for got in [x0.n_modes(), control.n_modes(), plan.n_modes] {
        if got != m {
            return Err(Error::ModeMismatch { expected: m, got });
        }
    }
    Ok(())
}

/// Runs the particle system over the whole horizon.
pub fn solve(
    problem: &dyn Problem,
    control: &ControlPath,
    plan: &NoisePlan,
    x0: &Ensemble,
) -> Result<TrajectoryBundle> {
    check_setup(problem, control, plan, x0)?;
    check_blow_up(x0, 0)?;
    let mut states = Vec::with_capacity(plan.n_steps + 1);
    let mut noise = Vec::with_capacity(plan.n_steps);
    states.push(x0.clone());
    for k in 0..plan.n_steps {
        let dw = plan.wiener_increments(k)?;
        let next = step(problem, k, &states[k], &control[k], &dw, plan.dt)?;
        states.push(next);
        noise.push(dw);
    }
    Ok(TrajectoryBundle {
        states,
        noise,
        control: control.clone(),
        plan: *plan,
    })
}

/// Initial ensemble `x_i = mean + spread · Σ_k ξ_{ik} e_k / k` with keyed
/// standard normals `ξ`.
pub fn sample_initial_ensemble(seed: u64, n_particles: usize, mean: &SpectralField, spread: f64) -> Ensemble {
    let gen = KeyedGaussian::new(seed);
    let particles = (0..n_particles)
        .map(|i| {
            let mut x = mean.clone();
            for k in 0..mean.n_modes() {
                x[k] += spread * gen.normal(Stream::InitialState, i as u32, 0, k as u32) / (k + 1) as f64;
            }
            x
        })
        .collect();
    Ensemble::new(particles).expect("n_particles >= 1")
}

/// Moment monitor along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentReport {
    /// `max_k (1/N) Σ_i ‖x_i(t_k)‖_H^q`
    pub sup_moment: f64,
    /// `(Σ_k dt (1/N) Σ_i ‖x_i(t_k)‖²_V)^{q/2}`, left-endpoint quadrature
    pub v_energy: f64,
}

pub fn moment_report(bundle: &TrajectoryBundle, q: f64) -> Result<MomentReport> {
    let mut sup_moment: f64 = 0.0;
    for s in &bundle.states {
        sup_moment = sup_moment.max(s.moment_q(q)?);
    }
    let dt = bundle.dt();
    let energy: f64 = bundle.states[..bundle.n_steps()]
        .iter()
        .map(|s| dt * s.iter().map(|x| x.norm_v_sq()).sum::<f64>() / s.len() as f64)
        .sum();
    Ok(MomentReport {
        sup_moment,
        v_energy: energy.powf(q / 2.0),
    })
}

/// Result of comparing two controls under common noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzRatio {
    /// `max_k (1/N) Σ_i ‖x_i^α(t_k) − x_i^β(t_k)‖²_H / Σ_k dt ‖α_k − β_k‖²_U`
    pub ratio: f64,
    /// `max_k (1/N) Σ_i ‖x_i^α(t_k) − x_i^β(t_k)‖²_H`
    pub state_gap: f64,
    /// Set when the controls coincide; the ratio is then reported as 0.
    pub identical_controls: bool,
}

pub fn lipschitz_probe(
    problem: &dyn Problem,
    plan: &NoisePlan,
    x0: &Ensemble,
    alpha: &ControlPath,
    beta: &ControlPath,
) -> Result<LipschitzRatio> {
    let a = solve(problem, alpha, plan, x0)?;
    let b = solve(problem, beta, plan, x0)?;
    let mut state_gap: f64 = 0.0;
    for (sa, sb) in a.states.iter().zip(&b.states) {
        state_gap = state_gap.max(sa.paired_distance_sq(sb)?);
    }
    let control_gap = alpha.offset(-1.0, beta).norm_l2().powi(2);
    if control_gap == 0.0 {
        return Ok(LipschitzRatio {
            ratio: 0.0,
            state_gap,
            identical_controls: true,
        });
    }
    Ok(LipschitzRatio {
        ratio: state_gap / control_gap,
        state_gap,
        identical_controls: false,
    })
}

/// `W₂` between the ensembles of two bundles at every node.
pub fn wasserstein_path(a: &TrajectoryBundle, b: &TrajectoryBundle) -> Result<Vec<f64>> {
    a.states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| wasserstein2(x, y))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{CubicReactionDiffusion, LinearQuadratic, LqTables, TimeGrid};
    use std::f64::consts::PI;

    fn heat(m: usize, n_t: usize, horizon: f64) -> LinearQuadratic {
        LinearQuadratic::new(m, TimeGrid::new(horizon, n_t).unwrap(), LqTables::zeros(m), 3.0).unwrap()
    }

    #[test]
    fn heat_only_step_is_diagonal_scaling() {
        let p = heat(3, 10, 1.0);
        let x = SpectralField::from_vec(vec![1.0, 1.0, 1.0]);
        let ens = Ensemble::replicate(&x, 2);
        let dw = vec![vec![0.3; 3]; 2];
        let next = step(&p, 0, &ens, &SpectralField::zeros(3), &dw, 0.1).unwrap();
        for m in 0..3 {
            let expect = 1.0 / (1.0 + 0.1 * ((m + 1) as f64 * PI).powi(2));
            assert_eq!(next[0][m], expect);
        }
    }

    #[test]
    fn zero_state_is_a_fixed_point() {
        let grid = TimeGrid::new(0.5, 20).unwrap();
        let p = CubicReactionDiffusion::new(4, grid, 0.5, 0.0);
        let plan = NoisePlan::new(1, 3, 4, 20, 0.5).unwrap();
        let c = ControlPath::zeros(20, 4, grid.dt(), 7.0, 1.0).unwrap();
        let b = solve(&p, &c, &plan, &Ensemble::zeros(3, 4)).unwrap();
        assert!(b.states.iter().all(|s| s.iter().all(|x| x.norm_h() == 0.0)));
    }

    #[test]
    fn one_step_by_hand() {
        // N = 1, M = 2, cubic with κ = 0.5 and b = 2, hand-evaluated recursion
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let p = CubicReactionDiffusion::new(2, grid, 0.5, 0.4).with_constant_b(2.0);
        let x = SpectralField::from_vec(vec![0.5, 0.0]);
        let a = SpectralField::from_vec(vec![0.1, -0.2]);
        let dw = vec![vec![0.05, -0.02]];
        let dt = 0.1;
        let next = step(&p, 0, &Ensemble::replicate(&x, 1), &a, &dw, dt).unwrap();
        // −(0.5 e₁)³ = −(3/2)(0.125) e₁ + (1/2)(0.125) e₃, e₃ is truncated away
        let f1 = -1.5 * 0.125 + 0.5 * 0.5 + 2.0 * 0.1;
        let f2 = 0.0 + 0.0 + 2.0 * -0.2;
        let c1 = (0.5 + dt * f1 + 0.4 * 0.05) / (1.0 + dt * PI * PI);
        let c2 = (0.0 + dt * f2 + 0.2 * -0.02) / (1.0 + dt * 4.0 * PI * PI);
        assert!((next[0][0] - c1).abs() < 1e-15);
        assert!((next[0][1] - c2).abs() < 1e-15);
    }

    #[test]
    fn heat_terminal_value_is_closed_form() {
        let (n_t, t) = (40, 0.5);
        let p = heat(3, n_t, t);
        let plan = NoisePlan::new(0, 1, 3, n_t, t).unwrap();
        let c = ControlPath::zeros(n_t, 3, t / n_t as f64, 3.0, 1.0).unwrap();
        let x0 = Ensemble::replicate(&SpectralField::mode(3, 1), 1);
        let b = solve(&p, &c, &plan, &x0).unwrap();
        let dt = t / n_t as f64;
        let expect = (1.0 + dt * PI * PI).powi(-(n_t as i32));
        assert!((b.terminal()[0][0] - expect).abs() < 1e-14);
        // sup of the moment is attained at t = 0 under pure decay
        let r = moment_report(&b, 7.0).unwrap();
        assert_eq!(r.sup_moment, x0.moment_q(7.0).unwrap());
    }

    #[test]
    fn blow_up_is_reported_with_step() {
        let grid = TimeGrid::new(1.0, 50).unwrap();
        // explicit −x³ with a huge state and large dt overshoots
        let p = CubicReactionDiffusion::new(1, grid, 0.0, 0.0).with_constant_b(0.0);
        let plan = NoisePlan::new(0, 1, 1, 50, 1.0).unwrap();
        let c = ControlPath::zeros(50, 1, 0.02, 7.0, 1.0).unwrap();
        let x0 = Ensemble::replicate(&SpectralField::from_vec(vec![100.0]), 1);
        match solve(&p, &c, &plan, &x0) {
            Err(Error::BlowUp { step, .. }) => assert!(step >= 1),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn rejects_mismatched_setup() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let p = heat(2, 10, 1.0);
        let plan = NoisePlan::new(0, 2, 2, 10, 1.0).unwrap();
        let c = ControlPath::zeros(9, 2, grid.dt(), 3.0, 1.0).unwrap();
        assert!(solve(&p, &c, &plan, &Ensemble::zeros(2, 2)).is_err());
        let c = ControlPath::zeros(10, 2, grid.dt(), 3.0, 1.0).unwrap();
        assert!(solve(&p, &c, &plan, &Ensemble::zeros(3, 2)).is_err());
    }

    #[test]
    fn lipschitz_probe_degenerate_cases() {
        let grid = TimeGrid::new(0.5, 10).unwrap();
        let plan = NoisePlan::new(3, 4, 3, 10, 0.5).unwrap();
        let x0 = sample_initial_ensemble(3, 4, &SpectralField::zeros(3), 0.5);
        let a = ControlPath::constant(&SpectralField::from_vec(vec![1.0, 0.0, 0.5]), 10, grid.dt(), 7.0, 10.0).unwrap();
        let b = a.scaled(-1.0);
        let p = CubicReactionDiffusion::new(3, grid, 0.5, 0.3);
        let same = lipschitz_probe(&p, &plan, &x0, &a, &a).unwrap();
        assert!(same.identical_controls);
        assert_eq!(same.ratio, 0.0);
        let decoupled = CubicReactionDiffusion::new(3, grid, 0.5, 0.3).with_constant_b(0.0);
        let r = lipschitz_probe(&decoupled, &plan, &x0, &a, &b).unwrap();
        assert_eq!(r.ratio, 0.0);
        let r = lipschitz_probe(&p, &plan, &x0, &a, &b).unwrap();
        assert!(r.ratio > 0.0 && r.ratio.is_finite());
    }
}
