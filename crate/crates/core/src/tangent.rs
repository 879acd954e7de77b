//! Exact derivative of the discrete forward map in a control direction.
//!
//! For a direction `β` the tangent ensemble follows the forward recursion
//! differentiated term by term, with the recorded noise:
//!
//! ```text
//! z_{k+1}^i = S ⊙ ( z_k^i + dt [F_x z_k^i + F_α β_k + (1/N) Σ_j ∂_μF(x_k^i)(x_k^j)(z_k^j)]
//!                   + [B_x z_k^i + B_α β_k + (1/N) Σ_j ∂_μB(x_k^i)(x_k^j)(z_k^j)] ΔW_k^i ),
//! z_0 = 0
//! ```

use rayon::prelude::*;

use crate::control::ControlPath;
use crate::ensemble::{EmpiricalLaw, Ensemble};
use crate::error::{Error, Result};
use crate::forward::TrajectoryBundle;
use crate::problem::Problem;
use crate::spectral::{OperatorSpec, SpectralField};

#[derive(Debug, Clone, PartialEq)]
pub struct TangentBundle {
    pub z_states: Vec<Ensemble>,
}

pub(crate) fn check_direction(bundle: &TrajectoryBundle, direction: &ControlPath) -> Result<()> {
    if direction.len() != bundle.n_steps() {
        return Err(Error::SizeMismatch {
            what: "direction length",
            expected: bundle.n_steps(),
            got: direction.len(),
        });
    }
    if direction.n_modes() != bundle.n_modes() {
        return Err(Error::ModeMismatch {
            expected: bundle.n_modes(),
            got: direction.n_modes(),
        });
    }
    Ok(())
}

pub fn solve_tangent(
    problem: &dyn Problem,
    bundle: &TrajectoryBundle,
    direction: &ControlPath,
) -> Result<TangentBundle> {
    check_direction(bundle, direction)?;
    let (n, m, dt) = (bundle.n_particles(), bundle.n_modes(), bundle.dt());
    let inv_n = 1.0 / n as f64;
    let resolvent = OperatorSpec::dirichlet_laplacian(m).resolvent(dt);

    let mut z_states = Vec::with_capacity(bundle.n_steps() + 1);
    z_states.push(Ensemble::zeros(n, m));
    for k in 0..bundle.n_steps() {
        let xs = &bundle.states[k];
        let zs = &z_states[k];
        let law = EmpiricalLaw::new(xs);
        let alpha = &bundle.control[k];
        let beta = &direction[k];
        let next: Vec<SpectralField> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (x, z, w) = (&xs[i], &zs[i], bundle.noise[k][i].as_slice());
                let mut drift = problem.drift_x(k, x, &law, alpha, z);
                drift.axpy(1.0, &problem.drift_alpha(k, x, &law, alpha, beta));
                let mut noise = problem.diffusion_x(k, x, &law, alpha, z, w);
                noise.axpy(1.0, &problem.diffusion_alpha(k, x, &law, alpha, beta, w));
                for (y, zj) in xs.iter().zip(zs) {
                    drift.axpy(inv_n, &problem.drift_lions(k, x, &law, y, zj));
                    noise.axpy(inv_n, &problem.diffusion_lions(k, x, &law, y, zj, w));
                }
                let mut rhs = z.clone();
                rhs.axpy(dt, &drift);
                rhs.axpy(1.0, &noise);
                rhs.hadamard(&resolvent)
            })
            .collect();
        z_states.push(Ensemble::from_particles_unchecked(next));
    }
    Ok(TangentBundle { z_states })
}

/// Directional derivative of the discrete cost along `direction`, assembled
/// from the tangent states (left-endpoint quadrature, ensemble average).
pub fn gateaux_cost(
    problem: &dyn Problem,
    bundle: &TrajectoryBundle,
    tangent: &TangentBundle,
    direction: &ControlPath,
) -> Result<f64> {
    check_direction(bundle, direction)?;
    if tangent.z_states.len() != bundle.states.len() {
        return Err(Error::SizeMismatch {
            what: "tangent length",
            expected: bundle.states.len(),
            got: tangent.z_states.len(),
        });
    }
    let (n, dt) = (bundle.n_particles(), bundle.dt());
    let inv_n = 1.0 / n as f64;

    let mut total = 0.0;
    for k in 0..bundle.n_steps() {
        let xs = &bundle.states[k];
        let zs = &tangent.z_states[k];
        let law = EmpiricalLaw::new(xs);
        let alpha = &bundle.control[k];
        let beta = &direction[k];
        let per_particle: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = &xs[i];
                let mut s = problem.running_cost_x(k, x, &law, alpha).dot(&zs[i])
                    + problem.running_cost_alpha(k, x, &law, alpha).dot(beta);
                for (y, zj) in xs.iter().zip(zs) {
                    s += inv_n * problem.running_cost_lions(k, x, &law, alpha, y).dot(zj);
                }
                s
            })
            .collect();
        total += dt * inv_n * per_particle.iter().sum::<f64>();
    }

    let xs = bundle.terminal();
    let zs = tangent.z_states.last().expect("terminal tangent");
    let law = EmpiricalLaw::new(xs);
    let terminal: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = &xs[i];
            let mut s = problem.terminal_cost_x(x, &law).dot(&zs[i]);
            for (y, zj) in xs.iter().zip(zs) {
                s += inv_n * problem.terminal_cost_lions(x, &law, y).dot(zj);
            }
            s
        })
        .collect();
    total += inv_n * terminal.iter().sum::<f64>();
    Ok(total)
}
