//! Coefficient bundles `(F, B, f, g)` with their Fréchet and empirical Lions derivatives.
//!
//! The state equation is `dX = (LX + F(t, X, μ, α)) dt + B(t, X, μ, α) dW` with
//! running cost `f` and terminal cost `g`. Time enters through the grid node
//! index `k`; the evaluators never see `L`, which lives in the solvers.
//!
//! Law dependence is realized on equal-weight ensembles. For a coefficient
//! `h(x, μ)` the empirical Lions kernel `∂_μh(x, μ)(y)` is the object whose
//! average over the particles `y_j` gives the derivative of `h(x, μ^N)` in the
//! particle positions:
//!
//! ```text
//! d/dε h(x, μ^N(x_j + ε z_j)) = (1/N) Σ_j ∂_μh(x, μ^N)(x_j)(z_j)
//! ```
//!
//! Diffusion is an `M × M` operator acting on truncated noise increments.

mod cubic;
mod lq;
mod probe;

pub use cubic::CubicReactionDiffusion;
pub use lq::{LinearQuadratic, LqTables};
pub use probe::{assumption_probe, monotonicity_scalar_probe, ProbeReport, PROBE_SLACK};

use crate::ensemble::{EmpiricalLaw, Ensemble};
use crate::error::{Error, Result};
use crate::spectral::SpectralField;

/// Diagonal operator tables indexed by time node. A single row is constant in time.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTable {
    rows: Vec<Vec<f64>>,
}

impl TimeTable {
    pub fn constant(row: Vec<f64>) -> Self {
        Self { rows: vec![row] }
    }

    pub fn zeros(n_modes: usize) -> Self {
        Self::constant(vec![0.0; n_modes])
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        assert!(!rows.is_empty(), "time table needs at least one row");
        Self { rows }
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.rows[k.min(self.rows.len() - 1)]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// `sup_t max_m |entry|`.
    pub fn sup_abs(&self) -> f64 {
        self.rows.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    pub fn sup(&self) -> f64 {
        self.rows.iter().flatten().fold(f64::NEG_INFINITY, |a, &v| a.max(v))
    }

    pub fn min(&self) -> f64 {
        self.rows.iter().flatten().fold(f64::INFINITY, |a, &v| a.min(v))
    }

    pub fn is_zero(&self) -> bool {
        self.rows.iter().flatten().all(|&v| v == 0.0)
    }
}

/// Uniform time grid on `[0, T]` with `n_steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::OutOfRange {
                what: "T",
                value: horizon,
                rule: "T > 0",
            });
        }
        if n_steps == 0 {
            return Err(Error::OutOfRange {
                what: "n_t",
                value: 0.0,
                rule: "n_t >= 1",
            });
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Node index carrying time `t` under the left-endpoint convention.
    pub fn node(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(Error::OutOfRange {
                what: "t",
                value: t,
                rule: "0 <= t <= T",
            });
        }
        let k = (t / self.dt() + 1e-9).floor() as usize;
        Ok(k.min(self.n_steps))
    }
}

/// Constants used by the coercivity / monotonicity / diffusion-Lipschitz probes.
///
/// `a1` and `delta` are valid for every sample, `c` is the additive slack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureConstants {
    pub a1: f64,
    pub delta: f64,
    pub c: f64,
}

/// A controlled McKean-Vlasov coefficient bundle.
///
/// Every derivative evaluator is linear in its direction argument (`z`, `beta`
/// or, for diffusion, the pair `(z, w)` with the noise fixed). The `*_adj`
/// variants are the exact transposes with respect to the coefficient inner
/// product. Lions kernels default to zero for law-independent coefficients.
#[allow(clippy::too_many_arguments)]
pub trait Problem: Send + Sync {
    fn name(&self) -> &str;
    fn n_modes(&self) -> usize;
    fn grid(&self) -> TimeGrid;

    /// Integrability exponent `q` and growth exponent `p`.
    fn exponents(&self) -> (f64, f64);

    /// `true` iff `B` depends on neither the state nor the law.
    fn q_free(&self) -> bool;

    fn drift(&self, k: usize, x: &SpectralField, law: &EmpiricalLaw, alpha: &SpectralField) -> SpectralField;
    fn drift_x(
        &self,
        k: usize,
        x: &SpectralField,
        law: &EmpiricalLaw,
        alpha: &SpectralField,
        z: &SpectralField,
    ) -> SpectralField;
    fn drift_x_adj(
        &self,
        k: usize,
        x: &SpectralField,
        law: &EmpiricalLaw,
        alpha: &SpectralField,
        p: &SpectralField,
    ) -> SpectralField;
    fn drift_alpha(
        &self,
        k: usize,
        x: &SpectralField,
        law: &EmpiricalLaw,
        alpha: &SpectralField,
        beta: &SpectralField,
    ) -> SpectralField;
    fn drift_alpha_adj(
        &self,
        k: usize,
        x: &SpectralField,
        law: &EmpiricalLaw,
        alpha: &SpectralField,
        p: &SpectralField,
    ) -> SpectralField;

    /// `∂_μF(t_k, x, μ)(y)(z)`.
    fn drift_lions(
        &self,
        _k: usize,
        x: &SpectralField,
        _law: &EmpiricalLaw,
        _y: &SpectralField,
        _z: &SpectralField,
    ) -> SpectralField {
        SpectralField::zeros(x.n_modes())
    }
    /// `[∂_μF(t_k, x, μ)(y)]ᵀ p`.
    fn drift_lions_adj(
        &self,
        _k: usize,
        x: &SpectralField,
        _law: &EmpiricalLaw,
        _y: &SpectralField,
        _p: &SpectralField,
    ) -> SpectralField {
        SpectralField::zeros(x.n_modes())
    }

    /// Row-major `M × M` matrix of `B(t_k, x, μ, α)`.
    fn diffusion_matrix(&self, k: usize, x: &SpectralField, law: &EmpiricalLaw, alpha: &SpectralField) -> Vec<f64>;

    /// `B(t_k, x, μ, α) w`.
    fn diffusion(
        &self,
        k: usize,
        x: &SpectralField,
        law: &EmpiricalLaw,
        alpha: &SpectralField,
        w: &[f64],
    ) -> SpectralField {
        let m = x.n_modes();
        let b = self.diffusion_matrix(k, x, law, alpha);
        SpectralField::from_vec(
            b.chunks_exact(m)
                .map(|row| row.iter().zip(w).map(|(a, b)| a * b).sum())
                .collect(),
        )
    }

    /// `(B_x(·)(z)) w`.
    fn diffusion_x(
        &self,
        _k: usize,
        x: &SpectralField,
        _law: &EmpiricalLaw,
        _alpha: &SpectralField,
        _z: &SpectralField,
        _w: &[f64],
    ) -> SpectralField {
        SpectralField::zeros(x.n_modes())
    }
    /// Transpose of `z ↦ (B_x(·)(z)) w`, applied to `p`.
    fn diffusion_x_adj(
        &self,
        _k: usize,
        x: &SpectralField,
        _law: &EmpiricalLaw,
        _alpha: &SpectralField,
        _w: &[f64],
        _p: &SpectralField,
    ) -> SpectralField {
        SpectralField::zeros(x.n_modes())
    }
    fn diffusion_alpha(
        &self,
        _k: usize,
        x: &SpectralField,
        _law: &EmpiricalLaw,
        _alpha: &SpectralField,
        _beta: &SpectralField,
        _w: &[f64],
    ) -> SpectralField {
        SpectralField::zeros(x.n_modes())
    }
    fn diffusion_alpha_adj(
        &self,
        _k: usize,
        x: &SpectralField,
        _law: &EmpiricalLaw,
        _alpha: &SpectralField,
        _w: &[f64],
        _p: &SpectralField,
    ) -> SpectralField {
        SpectralField::zeros(x.n_modes())
    }
    /// `(∂_μB(t_k, x, μ)(y)(z)) w`.
    fn diffusion_lions(
        &self,
        _k: usize,
        x: &SpectralField,
        _law: &EmpiricalLaw,
        _y: &SpectralField,
        _z: &SpectralField,
        _w: &[f64],
    ) -> SpectralField {
        SpectralField::zeros(x.n_modes())
    }
    fn diffusion_lions_adj(
        &self,
        _k: usize,
        x: &SpectralField,
        _law: &EmpiricalLaw,
        _y: &SpectralField,
        _w: &[f64],
        _p: &SpectralField,
    ) -> SpectralField {
        SpectralField::zeros(x.n_modes())
    }

    fn running_cost(&self, k: usize, x: &SpectralField, law: &EmpiricalLaw, alpha: &SpectralField) -> f64;
    fn running_cost_x(&self, k: usize, x: &SpectralField, law: &EmpiricalLaw, alpha: &SpectralField) -> SpectralField;
    fn running_cost_alpha(
        &self,
        k: usize,
        x: &SpectralField,
        law: &EmpiricalLaw,
        alpha: &SpectralField,
    ) -> SpectralField;
    /// Gradient kernel `∂_μf(t_k, x, μ, α)(y)`.
    fn running_cost_lions(
        &self,
        _k: usize,
        x: &SpectralField,
        _law: &EmpiricalLaw,
        _alpha: &SpectralField,
        _y: &SpectralField,
    ) -> SpectralField {
        SpectralField::zeros(x.n_modes())
    }

    fn terminal_cost(&self, x: &SpectralField, law: &EmpiricalLaw) -> f64;
    fn terminal_cost_x(&self, x: &SpectralField, law: &EmpiricalLaw) -> SpectralField;
    fn terminal_cost_lions(&self, x: &SpectralField, _law: &EmpiricalLaw, _y: &SpectralField) -> SpectralField {
        SpectralField::zeros(x.n_modes())
    }

    /// Constants for which the structural inequalities are claimed to hold.
    fn structure_constants(&self) -> StructureConstants;
}

/// Which coefficient a Lions kernel is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coefficient {
    Drift,
    /// Diffusion applied to a fixed noise vector.
    Diffusion,
    RunningCost,
    TerminalCost,
}

/// `F` and `f` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientValues {
    pub drift: SpectralField,
    pub running_cost: f64,
}

fn check_modes(problem: &dyn Problem, fields: &[&SpectralField]) -> Result<()> {
    let m = problem.n_modes();
    for f in fields {
        if f.n_modes() != m {
            return Err(Error::ModeMismatch {
                expected: m,
                got: f.n_modes(),
            });
        }
    }
    Ok(())
}

/// Evaluates `F(t, x, μ, α)` and `f(t, x, μ, α)` at physical time `t`.
pub fn eval_coefficients(
    problem: &dyn Problem,
    t: f64,
    x: &SpectralField,
    ens: &Ensemble,
    alpha: &SpectralField,
) -> Result<CoefficientValues> {
    let k = problem.grid().node(t)?;
    check_modes(problem, &[x, alpha, &ens[0]])?;
    let law = EmpiricalLaw::new(ens);
    Ok(CoefficientValues {
        drift: problem.drift(k, x, &law, alpha),
        running_cost: problem.running_cost(k, x, &law, alpha),
    })
}

/// Directional and gradient derivatives at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeValues {
    pub drift_x_z: SpectralField,
    pub drift_alpha_beta: SpectralField,
    pub running_cost_x: SpectralField,
    pub running_cost_alpha: SpectralField,
    pub terminal_cost_x: SpectralField,
}

pub fn eval_derivatives(
    problem: &dyn Problem,
    t: f64,
    x: &SpectralField,
    ens: &Ensemble,
    alpha: &SpectralField,
    z: &SpectralField,
    beta: &SpectralField,
) -> Result<DerivativeValues> {
    let k = problem.grid().node(t)?;
    check_modes(problem, &[x, alpha, z, beta, &ens[0]])?;
    let law = EmpiricalLaw::new(ens);
    Ok(DerivativeValues {
        drift_x_z: problem.drift_x(k, x, &law, alpha, z),
        drift_alpha_beta: problem.drift_alpha(k, x, &law, alpha, beta),
        running_cost_x: problem.running_cost_x(k, x, &law, alpha),
        running_cost_alpha: problem.running_cost_alpha(k, x, &law, alpha),
        terminal_cost_x: problem.terminal_cost_x(x, &law),
    })
}

/// Output of [`lions_apply`]: a field for `F` and `B`, a scalar directional
/// derivative for `f` and `g`.
#[derive(Debug, Clone, PartialEq)]
pub enum LionsValue {
    Field(SpectralField),
    Scalar(f64),
}

/// `(1/N) Σ_j ∂_μh(t_k, x, μ)(y_j)(z_j)` with `μ` the law of `ens_y`.
///
/// For `Diffusion` the kernel is applied to the noise vector `w`; for the cost
/// kernels the result is the directional derivative `(1/N) Σ_j ⟨∂_μh(y_j), z_j⟩`.
#[allow(clippy::too_many_arguments)]
pub fn lions_apply(
    problem: &dyn Problem,
    k: usize,
    ens_y: &Ensemble,
    ens_z: &Ensemble,
    x: &SpectralField,
    alpha: &SpectralField,
    w: &[f64],
    which: Coefficient,
) -> Result<LionsValue> {
    if ens_y.len() != ens_z.len() {
        return Err(Error::SizeMismatch {
            what: "Lions ensembles",
            expected: ens_y.len(),
            got: ens_z.len(),
        });
    }
    check_modes(problem, &[x, &ens_y[0], &ens_z[0]])?;
    let law = EmpiricalLaw::new(ens_y);
    let inv_n = 1.0 / ens_y.len() as f64;
    let value = match which {
        Coefficient::Drift | Coefficient::Diffusion => {
            let mut acc = SpectralField::zeros(x.n_modes());
            for (y, z) in ens_y.iter().zip(ens_z) {
                let term = match which {
                    Coefficient::Drift => problem.drift_lions(k, x, &law, y, z),
                    _ => problem.diffusion_lions(k, x, &law, y, z, w),
                };
                acc.axpy(inv_n, &term);
            }
            LionsValue::Field(acc)
        }
        Coefficient::RunningCost | Coefficient::TerminalCost => {
            let s: f64 = ens_y
                .iter()
                .zip(ens_z)
                .map(|(y, z)| {
                    let kernel = match which {
                        Coefficient::RunningCost => problem.running_cost_lions(k, x, &law, alpha, y),
                        _ => problem.terminal_cost_lions(x, &law, y),
                    };
                    kernel.dot(z)
                })
                .sum();
            LionsValue::Scalar(s * inv_n)
        }
    };
    Ok(value)
}
