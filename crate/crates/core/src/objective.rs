//! Monte Carlo cost, adjoint gradient, Hamiltonian, and the gradient-check harness.

use rayon::prelude::*;

use crate::adjoint::{solve_adjoint, AdjointBundle};
use crate::control::ControlPath;
use crate::ensemble::{EmpiricalLaw, Ensemble};
use crate::error::{Error, Result};
use crate::forward::{solve, TrajectoryBundle};
use crate::noise::{KeyedGaussian, NoisePlan, Stream};
use crate::problem::Problem;
use crate::spectral::{OperatorSpec, SpectralField};
use crate::tangent::{gateaux_cost, solve_tangent};

/// Default agreement thresholds of [`gradcheck`].
pub const TANGENT_TOLERANCE: f64 = 1e-10;
pub const FINITE_DIFFERENCE_TOLERANCE: f64 = 1e-4;

/// `L²` gradient of the discrete cost: `dJ(α)·β = Σ_k dt ⟨∇J_k, β_k⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPath {
    pub values: Vec<SpectralField>,
    pub dt: f64,
}

impl GradientPath {
    pub fn pairing(&self, direction: &ControlPath) -> f64 {
        debug_assert_eq!(self.values.len(), direction.len());
        self.values
            .iter()
            .zip(direction.values())
            .map(|(g, b)| self.dt * g.dot(b))
            .sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.values.iter().map(|g| self.dt * g.norm_h_sq()).sum::<f64>().sqrt()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `(1/N) Σ_i [Σ_k dt f(t_k, x_k^i, μ_k, α_k) + g(x_n^i, μ_n)]`.
pub fn cost(problem: &dyn Problem, bundle: &TrajectoryBundle) -> Result<f64> {
    let dt = bundle.dt();
    let mut total = 0.0;
    for k in 0..bundle.n_steps() {
        let xs = &bundle.states[k];
        let law = EmpiricalLaw::new(xs);
        let alpha = &bundle.control[k];
        let running: f64 = xs.iter().map(|x| problem.running_cost(k, x, &law, alpha)).sum();
        total += dt * running / xs.len() as f64;
    }
    let xs = bundle.terminal();
    let law = EmpiricalLaw::new(xs);
    total += xs.iter().map(|x| problem.terminal_cost(x, &law)).sum::<f64>() / xs.len() as f64;
    if !total.is_finite() {
        return Err(Error::NonFinite("cost"));
    }
    Ok(total)
}

/// Forward solve followed by [`cost`].
pub fn evaluate(problem: &dyn Problem, control: &ControlPath, plan: &NoisePlan, x0: &Ensemble) -> Result<f64> {
    cost(problem, &solve(problem, control, plan, x0)?)
}

/// `∇J_k = (1/N) Σ_i [F_αᵀ s^i + (B_α · ΔW_k^i)ᵀ s^i / dt + f_α(x_k^i)]`, `s^i = S ⊙ P_{k+1}^i`.
pub fn gradient(problem: &dyn Problem, bundle: &TrajectoryBundle, adjoint: &AdjointBundle) -> Result<GradientPath> {
    if adjoint.p_states.len() != bundle.states.len() {
        return Err(Error::SizeMismatch {
            what: "adjoint length",
            expected: bundle.states.len(),
            got: adjoint.p_states.len(),
        });
    }
    let (n, dt) = (bundle.n_particles(), bundle.dt());
    let inv_n = 1.0 / n as f64;
    let values = (0..bundle.n_steps())
        .into_par_iter()
        .map(|k| {
            let xs = &bundle.states[k];
            let law = EmpiricalLaw::new(xs);
            let alpha = &bundle.control[k];
            let s = adjoint.propagated(k, dt);
            let mut g = SpectralField::zeros(bundle.n_modes());
            for i in 0..n {
                let x = &xs[i];
                let w = bundle.noise[k][i].as_slice();
                g.axpy(inv_n, &problem.drift_alpha_adj(k, x, &law, alpha, &s[i]));
                g.axpy(inv_n / dt, &problem.diffusion_alpha_adj(k, x, &law, alpha, w, &s[i]));
                g.axpy(inv_n, &problem.running_cost_alpha(k, x, &law, alpha));
            }
            g
        })
        .collect();
    Ok(GradientPath { values, dt })
}

/// Cost, forward record, costate and gradient at one control.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cost: f64,
    pub bundle: TrajectoryBundle,
    pub adjoint: AdjointBundle,
    pub gradient: GradientPath,
}

pub fn cost_and_gradient(
    problem: &dyn Problem,
    control: &ControlPath,
    plan: &NoisePlan,
    x0: &Ensemble,
) -> Result<Evaluation> {
    let bundle = solve(problem, control, plan, x0)?;
    let cost = cost(problem, &bundle)?;
    let adjoint = solve_adjoint(problem, &bundle)?;
    let gradient = gradient(problem, &bundle, &adjoint)?;
    Ok(Evaluation {
        cost,
        bundle,
        adjoint,
        gradient,
    })
}

/// `H = ⟨Lx + F, p⟩ + ⟨B, q⟩_{L₂} + f` at grid node `k`; `q_op` is a row-major
/// `M × M` operator, absent meaning zero.
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian_at(
    problem: &dyn Problem,
    k: usize,
    x: &SpectralField,
    law: &EmpiricalLaw,
    alpha: &SpectralField,
    p: &SpectralField,
    q_op: Option<&[f64]>,
) -> f64 {
    let op = OperatorSpec::dirichlet_laplacian(x.n_modes());
    let mut flow = x.hadamard(op.eigenvalues());
    flow.axpy(1.0, &problem.drift(k, x, law, alpha));
    let mut h = flow.dot(p) + problem.running_cost(k, x, law, alpha);
    if let Some(q) = q_op {
        let b = problem.diffusion_matrix(k, x, law, alpha);
        h += b.iter().zip(q).map(|(b, q)| b * q).sum::<f64>();
    }
    h
}

/// [`hamiltonian_at`] at physical time `t` with the law of `ens`.
pub fn hamiltonian(
    problem: &dyn Problem,
    t: f64,
    x: &SpectralField,
    ens: &Ensemble,
    alpha: &SpectralField,
    p: &SpectralField,
    q_op: Option<&[f64]>,
) -> Result<f64> {
    let k = problem.grid().node(t)?;
    let m = problem.n_modes();
    for got in [x.n_modes(), alpha.n_modes(), p.n_modes(), ens.n_modes()] {
        if got != m {
            return Err(Error::ModeMismatch { expected: m, got });
        }
    }
    if let Some(q) = q_op {
        if q.len() != m * m {
            return Err(Error::SizeMismatch {
                what: "q operator entries",
                expected: m * m,
                got: q.len(),
            });
        }
    }
    Ok(hamiltonian_at(problem, k, x, &EmpiricalLaw::new(ens), alpha, p, q_op))
}

/// Ensemble-averaged discrete Hamiltonian of interval `k` evaluated at a
/// trial control value, with `p = S ⊙ P_{k+1}^i` and `q = p ⊗ ΔW_k^i / dt`.
/// Its gradient in the control equals `∇J_k`.
pub fn interval_hamiltonian(
    problem: &dyn Problem,
    bundle: &TrajectoryBundle,
    adjoint: &AdjointBundle,
    k: usize,
    trial: &SpectralField,
) -> f64 {
    let dt = bundle.dt();
    let m = bundle.n_modes();
    let xs = &bundle.states[k];
    let law = EmpiricalLaw::new(xs);
    let s = adjoint.propagated(k, dt);
    let total: f64 = (0..xs.len())
        .map(|i| {
            let w = &bundle.noise[k][i];
            let mut q = vec![0.0; m * m];
            for r in 0..m {
                for c in 0..m {
                    q[r * m + c] = s[i][r] * w[c] / dt;
                }
            }
            hamiltonian_at(problem, k, &xs[i], &law, trial, &s[i], Some(&q))
        })
        .sum();
    total / xs.len() as f64
}

/// `|a − b| / max(|a|, |b|)`, zero when both agree exactly.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        0.0
    } else {
        d / a.abs().max(b.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckRow {
    pub direction: usize,
    pub adjoint: f64,
    pub tangent: f64,
    pub finite_difference: f64,
    pub relerr_adjoint_tangent: f64,
    pub relerr_adjoint_fd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub epsilon: f64,
    pub rows: Vec<GradcheckRow>,
    pub failures: usize,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Keyed random direction with standard normal entries.
pub fn random_direction(like: &ControlPath, seed: u64, index: usize) -> ControlPath {
    let gen = KeyedGaussian::new(seed);
    like.with_values(
        (0..like.len())
            .map(|k| {
                SpectralField::from_vec(
                    (0..like.n_modes())
                        .map(|m| gen.normal(Stream::Direction, index as u32, k as u32, m as u32))
                        .collect(),
                )
            })
            .collect(),
    )
}

/// Compares the adjoint pairing, the tangent route and a central difference
/// `(J(α + εβ) − J(α − εβ)) / 2ε` over `n_dirs` keyed random directions, all
/// under the same noise.
pub fn gradcheck(
    problem: &dyn Problem,
    plan: &NoisePlan,
    x0: &Ensemble,
    control: &ControlPath,
    n_dirs: usize,
    epsilon: f64,
) -> Result<GradcheckReport> {
    if !(epsilon > 0.0) {
        return Err(Error::OutOfRange {
            what: "epsilon",
            value: epsilon,
            rule: "epsilon > 0",
        });
    }
    let base = cost_and_gradient(problem, control, plan, x0)?;
    let rows = (0..n_dirs)
        .into_par_iter()
        .map(|d| -> Result<GradcheckRow> {
            let beta = random_direction(control, plan.seed, d);
            let adjoint = base.gradient.pairing(&beta);
            let z = solve_tangent(problem, &base.bundle, &beta)?;
            let tangent = gateaux_cost(problem, &base.bundle, &z, &beta)?;
            let plus = evaluate(problem, &control.offset(epsilon, &beta), plan, x0)?;
            let minus = evaluate(problem, &control.offset(-epsilon, &beta), plan, x0)?;
            let fd = (plus - minus) / (2.0 * epsilon);
            Ok(GradcheckRow {
                direction: d,
                adjoint,
                tangent,
                finite_difference: fd,
                relerr_adjoint_tangent: relative_error(adjoint, tangent),
                relerr_adjoint_fd: relative_error(adjoint, fd),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let failures = rows
        .iter()
        .filter(|r| r.relerr_adjoint_tangent > TANGENT_TOLERANCE || r.relerr_adjoint_fd > FINITE_DIFFERENCE_TOLERANCE)
        .count();
    Ok(GradcheckReport {
        epsilon,
        rows,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::sample_initial_ensemble;
    use crate::problem::{CubicReactionDiffusion, StructureConstants, TimeGrid, TimeTable};

    /// `f ≡ 1`, `g ≡ 0`, heat flow.
    struct UnitCost(TimeGrid);

    impl Problem for UnitCost {
        fn name(&self) -> &str {
            "unit"
        }
        fn n_modes(&self) -> usize {
            2
        }
        fn grid(&self) -> TimeGrid {
            self.0
        }
        fn exponents(&self) -> (f64, f64) {
            (3.0, 0.0)
        }
        fn q_free(&self) -> bool {
            true
        }
        fn drift(&self, _: usize, x: &SpectralField, _: &EmpiricalLaw, _: &SpectralField) -> SpectralField {
            SpectralField::zeros(x.n_modes())
        }
        fn drift_x(
            &self,
            _: usize,
            x: &SpectralField,
            _: &EmpiricalLaw,
            _: &SpectralField,
            _: &SpectralField,
        ) -> SpectralField {
            SpectralField::zeros(x.n_modes())
        }
        fn drift_x_adj(
            &self,
            _: usize,
            x: &SpectralField,
            _: &EmpiricalLaw,
            _: &SpectralField,
            _: &SpectralField,
        ) -> SpectralField {
            SpectralField::zeros(x.n_modes())
        }
        fn drift_alpha(
            &self,
            _: usize,
            x: &SpectralField,
            _: &EmpiricalLaw,
            _: &SpectralField,
            _: &SpectralField,
        ) -> SpectralField {
            SpectralField::zeros(x.n_modes())
        }
        fn drift_alpha_adj(
            &self,
            _: usize,
            x: &SpectralField,
            _: &EmpiricalLaw,
            _: &SpectralField,
            _: &SpectralField,
        ) -> SpectralField {
            SpectralField::zeros(x.n_modes())
        }
        fn diffusion_matrix(&self, _: usize, x: &SpectralField, _: &EmpiricalLaw, _: &SpectralField) -> Vec<f64> {
            vec![0.0; x.n_modes() * x.n_modes()]
        }
        fn running_cost(&self, _: usize, _: &SpectralField, _: &EmpiricalLaw, _: &SpectralField) -> f64 {
            1.0
        }
        fn running_cost_x(&self, _: usize, x: &SpectralField, _: &EmpiricalLaw, _: &SpectralField) -> SpectralField {
            SpectralField::zeros(x.n_modes())
        }
        fn running_cost_alpha(
            &self,
            _: usize,
            x: &SpectralField,
            _: &EmpiricalLaw,
            _: &SpectralField,
        ) -> SpectralField {
            SpectralField::zeros(x.n_modes())
        }
        fn terminal_cost(&self, _: &SpectralField, _: &EmpiricalLaw) -> f64 {
            0.0
        }
        fn terminal_cost_x(&self, x: &SpectralField, _: &EmpiricalLaw) -> SpectralField {
            SpectralField::zeros(x.n_modes())
        }
        fn structure_constants(&self) -> StructureConstants {
            StructureConstants {
                a1: 2.0,
                delta: 2.0,
                c: 0.0,
            }
        }
    }

    #[test]
    fn constant_running_cost_integrates_to_horizon() {
        let grid = TimeGrid::new(0.7, 14).unwrap();
        let p = UnitCost(grid);
        let plan = NoisePlan::new(0, 3, 2, 14, 0.7).unwrap();
        let c = ControlPath::zeros(14, 2, grid.dt(), 3.0, 1.0).unwrap();
        let j = evaluate(&p, &c, &plan, &Ensemble::zeros(3, 2)).unwrap();
        assert!((j - 0.7).abs() < 1e-14);
    }

    fn tracking(b: f64) -> (CubicReactionDiffusion, NoisePlan, TimeGrid) {
        let (m, n_t, t) = (3, 10, 0.5);
        let grid = TimeGrid::new(t, n_t).unwrap();
        let p = CubicReactionDiffusion::new(m, grid, 0.5, 0.3)
            .with_constant_b(b)
            .with_references(
                TimeTable::constant(vec![0.1, 0.0, 0.0]),
                TimeTable::constant(vec![0.5, -0.5, 0.2]),
                SpectralField::from_vec(vec![0.2, 0.0, 0.1]),
            )
            .unwrap();
        (p, NoisePlan::new(2, 4, m, n_t, t).unwrap(), grid)
    }

    #[test]
    fn two_particle_cost_is_average_of_singles() {
        let grid = TimeGrid::new(0.5, 10).unwrap();
        let c = ControlPath::zeros(10, 3, grid.dt(), 7.0, 10.0).unwrap();
        // σ = 0 and κ = 0 decouple the particles exactly
        let p = CubicReactionDiffusion::new(3, grid, 0.0, 0.0)
            .with_references(
                TimeTable::constant(vec![0.1, 0.0, 0.0]),
                TimeTable::zeros(3),
                SpectralField::zeros(3),
            )
            .unwrap();
        let a = SpectralField::from_vec(vec![0.5, 0.1, 0.0]);
        let b = SpectralField::from_vec(vec![-0.3, 0.4, 0.2]);
        let both = evaluate(
            &p,
            &c,
            &NoisePlan::new(0, 2, 3, 10, 0.5).unwrap(),
            &Ensemble::new(vec![a.clone(), b.clone()]).unwrap(),
        )
        .unwrap();
        let one = NoisePlan::new(0, 1, 3, 10, 0.5).unwrap();
        let ja = evaluate(&p, &c, &one, &Ensemble::new(vec![a]).unwrap()).unwrap();
        let jb = evaluate(&p, &c, &one, &Ensemble::new(vec![b]).unwrap()).unwrap();
        assert!((both - 0.5 * (ja + jb)).abs() < 1e-14);
    }

    #[test]
    fn decoupled_gradient_is_control_residual() {
        let (p, plan, grid) = tracking(0.0);
        let x0 = sample_initial_ensemble(1, 4, &SpectralField::zeros(3), 0.2);
        let c = ControlPath::constant(&SpectralField::from_vec(vec![1.0, 2.0, 3.0]), 10, grid.dt(), 7.0, 1e6).unwrap();
        let ev = cost_and_gradient(&p, &c, &plan, &x0).unwrap();
        for (k, g) in ev.gradient.values.iter().enumerate() {
            let expect = (&c[k] - &p.alpha_bar(k)).scaled(2.0);
            assert!((g - &expect).norm_h() < 1e-14);
        }
    }

    #[test]
    fn hamiltonian_affinity() {
        let (p, _, _) = tracking(1.0);
        let x = SpectralField::from_vec(vec![0.3, -0.1, 0.2]);
        let ens = Ensemble::new(vec![x.clone(), x.scaled(0.5)]).unwrap();
        let a = SpectralField::from_vec(vec![0.1, 0.1, 0.1]);
        let pv = SpectralField::from_vec(vec![1.0, -2.0, 0.5]);
        let h0 = hamiltonian(&p, 0.1, &x, &ens, &a, &SpectralField::zeros(3), None).unwrap();
        let f = crate::problem::eval_coefficients(&p, 0.1, &x, &ens, &a)
            .unwrap()
            .running_cost;
        assert_eq!(h0, f);
        let h1 = hamiltonian(&p, 0.1, &x, &ens, &a, &pv, None).unwrap();
        let h2 = hamiltonian(&p, 0.1, &x, &ens, &a, &pv.scaled(2.0), None).unwrap();
        assert!(((h2 - h1) - (h1 - h0)).abs() < 1e-12 * h1.abs().max(1.0));
        let q = vec![0.5; 9];
        let hq = hamiltonian(&p, 0.1, &x, &ens, &a, &SpectralField::zeros(3), Some(&q)).unwrap();
        let h2q = hamiltonian(&p, 0.1, &x, &ens, &a, &SpectralField::zeros(3), Some(&[1.0; 9])).unwrap();
        assert!(((h2q - hq) - (hq - h0)).abs() < 1e-12);
        assert!(hamiltonian(&p, 0.1, &x, &ens, &a, &pv, Some(&[1.0])).is_err());
    }

    #[test]
    fn hamiltonian_vanishes_on_reference() {
        let (p, _, _) = tracking(1.0);
        let u = SpectralField::from_vec(vec![0.1, 0.0, 0.0]);
        let a = SpectralField::from_vec(vec![0.5, -0.5, 0.2]);
        let ens = Ensemble::replicate(&u, 2);
        let h = hamiltonian(&p, 0.2, &u, &ens, &a, &SpectralField::zeros(3), None).unwrap();
        assert_eq!(h, 0.0);
    }

    #[test]
    fn quadratic_only_gradcheck_agrees_to_roundoff() {
        let (p, plan, grid) = tracking(0.0);
        let x0 = sample_initial_ensemble(5, 4, &SpectralField::zeros(3), 0.2);
        let c = ControlPath::constant(&SpectralField::from_vec(vec![0.3, 0.0, -0.1]), 10, grid.dt(), 7.0, 1e6).unwrap();
        let r = gradcheck(&p, &plan, &x0, &c, 3, 1e-3).unwrap();
        for row in &r.rows {
            assert!(row.relerr_adjoint_tangent < 1e-12, "{row:?}");
            assert!(row.relerr_adjoint_fd < 1e-9, "{row:?}");
        }
        assert!(r.passed());
    }
}
