//! Discrete adjoint (costate) of the particle recursion.
//!
//! `P_k^i` is `N` times the derivative of the discrete cost with respect to
//! the state `x_k^i`. It is obtained by transposing the tangent propagator:
//!
//! ```text
//! P_n^i = g_x(x_n^i) + (1/N) Σ_j ∂_μg(x_n^j)(x_n^i)
//! P_k^i = s^i + dt F_xᵀ s^i + (B_x · ΔW_k^i)ᵀ s^i
//!         + (1/N) Σ_j [ dt ∂_μF(x_k^j)(x_k^i)ᵀ + (∂_μB(x_k^j)(x_k^i) · ΔW_k^j)ᵀ ] s^j
//!         + dt [ f_x(x_k^i) + (1/N) Σ_j ∂_μf(x_k^j)(x_k^i) ],       s^i = S ⊙ P_{k+1}^i
//! ```
//!
//! The terms against `ΔW` stand in for the martingale integrand of the
//! continuous backward equation; they vanish when `B` is state- and
//! law-independent.

use rayon::prelude::*;

use crate::control::ControlPath;
use crate::ensemble::{EmpiricalLaw, Ensemble};
use crate::error::Result;
use crate::forward::{check_blow_up, TrajectoryBundle};
use crate::problem::Problem;
use crate::spectral::{OperatorSpec, SpectralField};
use crate::tangent::{check_direction, TangentBundle};

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointBundle {
    pub p_states: Vec<Ensemble>,
}

impl AdjointBundle {
    /// `S ⊙ P_{k+1}^i` for every particle, the costate that pairs with the
    /// increment of interval `k`.
    pub fn propagated(&self, k: usize, dt: f64) -> Vec<SpectralField> {
        let next = &self.p_states[k + 1];
        let resolvent = OperatorSpec::dirichlet_laplacian(next.n_modes()).resolvent(dt);
        next.iter().map(|p| p.hadamard(&resolvent)).collect()
    }
}

/// Terminal costate `g_x + Ê[∂_μg]`.
pub fn terminal_costate(problem: &dyn Problem, bundle: &TrajectoryBundle) -> Ensemble {
    let xs = bundle.terminal();
    let law = EmpiricalLaw::new(xs);
    let inv_n = 1.0 / xs.len() as f64;
    let p: Vec<SpectralField> = (0..xs.len())
        .into_par_iter()
        .map(|i| {
            let mut p = problem.terminal_cost_x(&xs[i], &law);
            for xj in xs {
                p.axpy(inv_n, &problem.terminal_cost_lions(xj, &law, &xs[i]));
            }
            p
        })
        .collect();
    Ensemble::from_particles_unchecked(p)
}

pub fn solve_adjoint(problem: &dyn Problem, bundle: &TrajectoryBundle) -> Result<AdjointBundle> {
    let (n, n_t, dt) = (bundle.n_particles(), bundle.n_steps(), bundle.dt());
    let inv_n = 1.0 / n as f64;
    let resolvent = OperatorSpec::dirichlet_laplacian(bundle.n_modes()).resolvent(dt);

    let mut p_states = vec![Ensemble::zeros(n, bundle.n_modes()); n_t + 1];
    p_states[n_t] = terminal_costate(problem, bundle);
    check_blow_up(&p_states[n_t], n_t)?;

    for k in (0..n_t).rev() {
        let xs = &bundle.states[k];
        let law = EmpiricalLaw::new(xs);
        let alpha = &bundle.control[k];
        let noise = &bundle.noise[k];
        let s: Vec<SpectralField> = p_states[k + 1].iter().map(|p| p.hadamard(&resolvent)).collect();
        let current: Vec<SpectralField> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = &xs[i];
                let w = noise[i].as_slice();
                let mut p = s[i].clone();
                p.axpy(dt, &problem.drift_x_adj(k, x, &law, alpha, &s[i]));
                p.axpy(1.0, &problem.diffusion_x_adj(k, x, &law, alpha, w, &s[i]));
                let mut source = problem.running_cost_x(k, x, &law, alpha);
                for j in 0..n {
                    let xj = &xs[j];
                    p.axpy(dt * inv_n, &problem.drift_lions_adj(k, xj, &law, x, &s[j]));
                    p.axpy(inv_n, &problem.diffusion_lions_adj(k, xj, &law, x, &noise[j], &s[j]));
                    source.axpy(inv_n, &problem.running_cost_lions(k, xj, &law, alpha, x));
                }
                p.axpy(dt, &source);
                p
            })
            .collect();
        let current = Ensemble::from_particles_unchecked(current);
        check_blow_up(&current, k)?;
        p_states[k] = current;
    }
    Ok(AdjointBundle { p_states })
}

/// Both sides of the discrete duality identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityResidual {
    /// `(1/N) Σ_i ⟨P_n^i, Z_n^i⟩`
    pub terminal_pairing: f64,
    /// `Σ_k (1/N) Σ_i [⟨S P_{k+1}^i, dt F_α β_k + (B_α β_k) ΔW_k^i⟩
    ///   − dt ⟨f_x^i + (1/N) Σ_j ∂_μf(x^j)(x^i), Z_k^i⟩]`
    pub path_sum: f64,
    pub absolute: f64,
    pub relative: f64,
}

pub fn duality_residual(
    problem: &dyn Problem,
    bundle: &TrajectoryBundle,
    tangent: &TangentBundle,
    adjoint: &AdjointBundle,
    direction: &ControlPath,
) -> Result<DualityResidual> {
    check_direction(bundle, direction)?;
    let (n, dt) = (bundle.n_particles(), bundle.dt());
    let inv_n = 1.0 / n as f64;

    let terminal_pairing = inv_n
        * adjoint.p_states[bundle.n_steps()]
            .iter()
            .zip(tangent.z_states.last().expect("terminal tangent"))
            .map(|(p, z)| p.dot(z))
            .sum::<f64>();

    let mut path_sum = 0.0;
    for k in 0..bundle.n_steps() {
        let xs = &bundle.states[k];
        let zs = &tangent.z_states[k];
        let law = EmpiricalLaw::new(xs);
        let alpha = &bundle.control[k];
        let beta = &direction[k];
        let s = adjoint.propagated(k, dt);
        let per_particle: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = &xs[i];
                let w = bundle.noise[k][i].as_slice();
                let mut forcing = problem.drift_alpha(k, x, &law, alpha, beta).scaled(dt);
                forcing.axpy(1.0, &problem.diffusion_alpha(k, x, &law, alpha, beta, w));
                let mut source = problem.running_cost_x(k, x, &law, alpha);
                for xj in xs {
                    source.axpy(inv_n, &problem.running_cost_lions(k, xj, &law, alpha, x));
                }
                s[i].dot(&forcing) - dt * source.dot(&zs[i])
            })
            .collect();
        path_sum += inv_n * per_particle.iter().sum::<f64>();
    }

    let absolute = (terminal_pairing - path_sum).abs();
    let scale = terminal_pairing.abs().max(path_sum.abs());
    Ok(DualityResidual {
        terminal_pairing,
        path_sum,
        absolute,
        relative: if absolute == 0.0 { 0.0 } else { absolute / scale },
    })
}
