use super::{Problem, StructureConstants, TimeGrid, TimeTable};
use crate::ensemble::EmpiricalLaw;
use crate::error::{Error, Result};
use crate::spectral::SpectralField;

/// Diagonal operator tables of the linear-quadratic instance. Every operator
/// acts coefficientwise on the sine basis.
#[derive(Debug, Clone, PartialEq)]
pub struct LqTables {
    pub f_state: TimeTable,
    pub f_mean: TimeTable,
    pub f_control: TimeTable,
    /// Additive noise intensity (state-independent part of `B`).
    pub b_const: TimeTable,
    pub b_state: TimeTable,
    pub b_mean: TimeTable,
    pub b_control: TimeTable,
    pub cost_state: TimeTable,
    pub cost_spread: TimeTable,
    pub cost_control: TimeTable,
    pub h_running: TimeTable,
    pub h_terminal: Vec<f64>,
    pub terminal_state: Vec<f64>,
    pub terminal_spread: Vec<f64>,
}

impl LqTables {
    /// Everything zero: pure heat flow with zero cost.
    pub fn zeros(n_modes: usize) -> Self {
        let z = TimeTable::zeros(n_modes);
        Self {
            f_state: z.clone(),
            f_mean: z.clone(),
            f_control: z.clone(),
            b_const: z.clone(),
            b_state: z.clone(),
            b_mean: z.clone(),
            b_control: z.clone(),
            cost_state: z.clone(),
            cost_spread: z.clone(),
            cost_control: z.clone(),
            h_running: z,
            h_terminal: vec![0.0; n_modes],
            terminal_state: vec![0.0; n_modes],
            terminal_spread: vec![0.0; n_modes],
        }
    }
}

/// Linear-quadratic mean-field problem with diagonal operators:
///
/// ```text
/// F = F₁x + F₂ mean(μ) + F₃α
/// B = diag(σ + B₁x + B₂ mean(μ) + B₃α)
/// f = ⟨x, f₁x⟩ + ⟨x − h₁ mean(μ), f₂(x − h₁ mean(μ))⟩ + ⟨α, f₃α⟩
/// g = ⟨x, g₁x⟩ + ⟨x − h₂ mean(μ), g₂(x − h₂ mean(μ))⟩
/// ```
#[derive(Debug, Clone)]
pub struct LinearQuadratic {
    grid: TimeGrid,
    n_modes: usize,
    t: LqTables,
    q: f64,
}

impl LinearQuadratic {
    pub fn new(n_modes: usize, grid: TimeGrid, tables: LqTables, q: f64) -> Result<Self> {
        let t = &tables;
        let all = [
            &t.f_state,
            &t.f_mean,
            &t.f_control,
            &t.b_const,
            &t.b_state,
            &t.b_mean,
            &t.b_control,
            &t.cost_state,
            &t.cost_spread,
            &t.cost_control,
            &t.h_running,
        ];
        for table in all {
            for row in table.rows() {
                if row.len() != n_modes {
                    return Err(Error::SizeMismatch {
                        what: "LQ table row",
                        expected: n_modes,
                        got: row.len(),
                    });
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("LQ table"));
                }
            }
        }
        for v in [&t.h_terminal, &t.terminal_state, &t.terminal_spread] {
            if v.len() != n_modes {
                return Err(Error::SizeMismatch {
                    what: "LQ terminal table",
                    expected: n_modes,
                    got: v.len(),
                });
            }
        }
        let psd_ok = [&t.cost_state, &t.cost_spread, &t.cost_control]
            .iter()
            .all(|tab| tab.min() >= 0.0)
            && t.terminal_state.iter().chain(&t.terminal_spread).all(|&v| v >= 0.0);
        if !psd_ok {
            return Err(Error::OutOfRange {
                what: "LQ cost weight",
                value: f64::NAN,
                rule: "cost weights f1, f2, f3, g1, g2 must be non-negative",
            });
        }
        if !(q > 2.0) {
            return Err(Error::OutOfRange {
                what: "q",
                value: q,
                rule: "linear-quadratic case (p = 0) requires q > 2",
            });
        }
        Ok(Self {
            grid,
            n_modes,
            t: tables,
            q,
        })
    }

    pub fn tables(&self) -> &LqTables {
        &self.t
    }

    fn spread(&self, x: &SpectralField, mean: &SpectralField, h: &[f64]) -> SpectralField {
        x - &mean.hadamard(h)
    }

    fn noise_product(a: &[f64], z: &SpectralField, w: &[f64]) -> SpectralField {
        SpectralField::from_vec(a.iter().zip(z.coeffs()).zip(w).map(|((a, z), w)| a * z * w).collect())
    }
}

fn weighted_sq(v: &SpectralField, w: &[f64]) -> f64 {
    v.coeffs().iter().zip(w).map(|(c, w)| w * c * c).sum()
}

impl Problem for LinearQuadratic {
    fn name(&self) -> &str {
        "lq"
    }

    fn n_modes(&self) -> usize {
        self.n_modes
    }

    fn grid(&self) -> TimeGrid {
        self.grid
    }

    fn exponents(&self) -> (f64, f64) {
        (self.q, 0.0)
    }

    fn q_free(&self) -> bool {
        self.t.b_state.is_zero() && self.t.b_mean.is_zero()
    }

    fn drift(&self, k: usize, x: &SpectralField, law: &EmpiricalLaw, alpha: &SpectralField) -> SpectralField {
        let mut out = x.hadamard(self.t.f_state.at(k));
        out.axpy(1.0, &law.mean().hadamard(self.t.f_mean.at(k)));
        out.axpy(1.0, &alpha.hadamard(self.t.f_control.at(k)));
        out
    }

    fn drift_x(
        &self,
        k: usize,
        _x: &SpectralField,
        _law: &EmpiricalLaw,
        _alpha: &SpectralField,
        z: &SpectralField,
    ) -> SpectralField {
        z.hadamard(self.t.f_state.at(k))
    }

    fn drift_x_adj(
        &self,
        k: usize,
        _x: &SpectralField,
        _law: &EmpiricalLaw,
        _alpha: &SpectralField,
        p: &SpectralField,
    ) -> SpectralField {
        p.hadamard(self.t.f_state.at(k))
    }

    fn drift_alpha(
        &self,
        k: usize,
        _x: &SpectralField,
        _law: &EmpiricalLaw,
        _alpha: &SpectralField,
        beta: &SpectralField,
    ) -> SpectralField {
        beta.hadamard(self.t.f_control.at(k))
    }

    fn drift_alpha_adj(
        &self,
        k: usize,
        _x: &SpectralField,
        _law: &EmpiricalLaw,
        _alpha: &SpectralField,
        p: &SpectralField,
    ) -> SpectralField {
        p.hadamard(self.t.f_control.at(k))
    }

    fn drift_lions(
        &self,
        k: usize,
        _x: &SpectralField,
        _law: &EmpiricalLaw,
        _y: &SpectralField,
        z: &SpectralField,
    ) -> SpectralField {
        z.hadamard(self.t.f_mean.at(k))
    }

    fn drift_lions_adj(
        &self,
        k: usize,
        _x: &SpectralField,
        _law: &EmpiricalLaw,
        _y: &SpectralField,
        p: &SpectralField,
    ) -> SpectralField {
        p.hadamard(self.t.f_mean.at(k))
    }

    fn diffusion_matrix(&self, k: usize, x: &SpectralField, law: &EmpiricalLaw, alpha: &SpectralField) -> Vec<f64> {
        let m = self.n_modes;
        let d = self.diffusion(k, x, law, alpha, &vec![1.0; m]);
        let mut b = vec![0.0; m * m];
        for (i, v) in d.coeffs().iter().enumerate() {
            b[i * m + i] = *v;
        }
        b
    }

    fn diffusion(
        &self,
        k: usize,
        x: &SpectralField,
        law: &EmpiricalLaw,
        alpha: &SpectralField,
        w: &[f64],
    ) -> SpectralField {
        let (c, bx, bm, ba) = (
            self.t.b_const.at(k),
            self.t.b_state.at(k),
            self.t.b_mean.at(k),
            self.t.b_control.at(k),
        );
        let mean = law.mean();
        SpectralField::from_vec(
            (0..self.n_modes)
                .map(|i| (c[i] + bx[i] * x[i] + bm[i] * mean[i] + ba[i] * alpha[i]) * w[i])
                .collect(),
        )
    }

    fn diffusion_x(
        &self,
        k: usize,
        _x: &SpectralField,
        _law: &EmpiricalLaw,
        _alpha: &SpectralField,
        z: &SpectralField,
        w: &[f64],
    ) -> SpectralField {
        Self::noise_product(self.t.b_state.at(k), z, w)
    }

    fn diffusion_x_adj(
        &self,
        k: usize,
        _x: &SpectralField,
        _law: &EmpiricalLaw,
        _alpha: &SpectralField,
        w: &[f64],
        p: &SpectralField,
    ) -> SpectralField {
        Self::noise_product(self.t.b_state.at(k), p, w)
    }

    fn diffusion_alpha(
        &self,
        k: usize,
        _x: &SpectralField,
        _law: &EmpiricalLaw,
        _alpha: &SpectralField,
        beta: &SpectralField,
        w: &[f64],
    ) -> SpectralField {
        Self::noise_product(self.t.b_control.at(k), beta, w)
    }

    fn diffusion_alpha_adj(
        &self,
        k: usize,
        _x: &SpectralField,
        _law: &EmpiricalLaw,
        _alpha: &SpectralField,
        w: &[f64],
        p: &SpectralField,
    ) -> SpectralField {
        Self::noise_product(self.t.b_control.at(k), p, w)
    }

    fn diffusion_lions(
        &self,
        k: usize,
        _x: &SpectralField,
        _law: &EmpiricalLaw,
        _y: &SpectralField,
        z: &SpectralField,
        w: &[f64],
    ) -> SpectralField {
        Self::noise_product(self.t.b_mean.at(k), z, w)
    }

    fn diffusion_lions_adj(
        &self,
        k: usize,
        _x: &SpectralField,
        _law: &EmpiricalLaw,
        _y: &SpectralField,
        w: &[f64],
        p: &SpectralField,
    ) -> SpectralField {
        Self::noise_product(self.t.b_mean.at(k), p, w)
    }

    fn running_cost(&self, k: usize, x: &SpectralField, law: &EmpiricalLaw, alpha: &SpectralField) -> f64 {
        let s = self.spread(x, law.mean(), self.t.h_running.at(k));
        weighted_sq(x, self.t.cost_state.at(k))
            + weighted_sq(&s, self.t.cost_spread.at(k))
            + weighted_sq(alpha, self.t.cost_control.at(k))
    }

    fn running_cost_x(&self, k: usize, x: &SpectralField, law: &EmpiricalLaw, _alpha: &SpectralField) -> SpectralField {
        let s = self.spread(x, law.mean(), self.t.h_running.at(k));
        let mut g = x.hadamard(self.t.cost_state.at(k)).scaled(2.0);
        g.axpy(2.0, &s.hadamard(self.t.cost_spread.at(k)));
        g
    }

    fn running_cost_alpha(
        &self,
        k: usize,
        _x: &SpectralField,
        _law: &EmpiricalLaw,
        alpha: &SpectralField,
    ) -> SpectralField {
        alpha.hadamard(self.t.cost_control.at(k)).scaled(2.0)
    }

    fn running_cost_lions(
        &self,
        k: usize,
        x: &SpectralField,
        law: &EmpiricalLaw,
        _alpha: &SpectralField,
        _y: &SpectralField,
    ) -> SpectralField {
        let h = self.t.h_running.at(k);
        self.spread(x, law.mean(), h)
            .hadamard(self.t.cost_spread.at(k))
            .hadamard(h)
            .scaled(-2.0)
    }

    fn terminal_cost(&self, x: &SpectralField, law: &EmpiricalLaw) -> f64 {
        let s = self.spread(x, law.mean(), &self.t.h_terminal);
        weighted_sq(x, &self.t.terminal_state) + weighted_sq(&s, &self.t.terminal_spread)
    }

    fn terminal_cost_x(&self, x: &SpectralField, law: &EmpiricalLaw) -> SpectralField {
        let s = self.spread(x, law.mean(), &self.t.h_terminal);
        let mut g = x.hadamard(&self.t.terminal_state).scaled(2.0);
        g.axpy(2.0, &s.hadamard(&self.t.terminal_spread));
        g
    }

    fn terminal_cost_lions(&self, x: &SpectralField, law: &EmpiricalLaw, _y: &SpectralField) -> SpectralField {
        let h = &self.t.h_terminal;
        self.spread(x, law.mean(), h)
            .hadamard(&self.t.terminal_spread)
            .hadamard(h)
            .scaled(-2.0)
    }

    fn structure_constants(&self) -> StructureConstants {
        let t = &self.t;
        let drift = 2.0 + 2.0 * t.f_state.sup().max(0.0) + t.f_mean.sup_abs() + t.f_control.sup_abs();
        let noise = 3.0
            * [&t.b_state, &t.b_mean, &t.b_control]
                .iter()
                .map(|tab| tab.sup_abs().powi(2))
                .fold(0.0, f64::max);
        StructureConstants {
            a1: drift.max(noise),
            delta: 2.0,
            c: 0.0,
        }
    }
}
