use super::{Problem, StructureConstants, TimeGrid, TimeTable};
use crate::ensemble::EmpiricalLaw;
use crate::error::{Error, Result};
use crate::spectral::{Collocation, SpectralField};

/// Growth exponent of the cubic Nemytskii term in one space dimension; the
/// integrability exponent must exceed `p + 2 = 6`.
const CUBIC_GROWTH_EXPONENT: f64 = 4.0;

/// Mean-field reaction-diffusion tracking problem
///
/// ```text
/// dX = (ΔX − X³ + κ·mean(μ) + b_t α) dt + B dW
/// J  = E[ ∫ ‖X − ū_t‖² + ‖α − ᾱ_t‖² dt + ‖X_T − ū_T‖² ]
/// ```
///
/// `−X³` and `b_t α` are pointwise products, evaluated by sine collocation.
/// `B` is the constant diagonal operator with entries `σ_k`.
#[derive(Debug, Clone)]
pub struct CubicReactionDiffusion {
    grid: TimeGrid,
    collocation: Collocation,
    kappa: f64,
    /// multiplier values on the collocation points, per time node
    b: TimeTable,
    sigma: Vec<f64>,
    u_bar: TimeTable,
    alpha_bar: TimeTable,
    u_bar_terminal: SpectralField,
    q: f64,
}

impl CubicReactionDiffusion {
    /// Defaults: `b ≡ 1`, zero references, `q = 7`, `σ_k = sigma / k`.
    pub fn new(n_modes: usize, grid: TimeGrid, kappa: f64, sigma: f64) -> Self {
        let collocation = Collocation::new(n_modes);
        let n_x = collocation.n_points();
        Self {
            grid,
            collocation,
            kappa,
            b: TimeTable::constant(vec![1.0; n_x]),
            sigma: (1..=n_modes).map(|k| sigma / k as f64).collect(),
            u_bar: TimeTable::zeros(n_modes),
            alpha_bar: TimeTable::zeros(n_modes),
            u_bar_terminal: SpectralField::zeros(n_modes),
            q: 7.0,
        }
    }

    pub fn with_constant_b(mut self, b: f64) -> Self {
        self.b = TimeTable::constant(vec![b; self.collocation.n_points()]);
        self
    }

    /// Multiplier given by a function of `(t, ξ)`, sampled on the grid nodes
    /// and collocation points.
    pub fn with_b_fn(mut self, b: impl Fn(f64, f64) -> f64) -> Self {
        let rows = (0..=self.grid.n_steps)
            .map(|k| {
                let t = self.grid.time(k);
                self.collocation.points().iter().map(|&xi| b(t, xi)).collect()
            })
            .collect();
        self.b = TimeTable::from_rows(rows);
        self
    }

    pub fn with_sigma(mut self, sigma: Vec<f64>) -> Result<Self> {
        self.check_len("sigma", sigma.len())?;
        self.sigma = sigma;
        Ok(self)
    }

    pub fn with_references(
        mut self,
        u_bar: TimeTable,
        alpha_bar: TimeTable,
        u_bar_terminal: SpectralField,
    ) -> Result<Self> {
        for row in u_bar.rows().iter().chain(alpha_bar.rows()) {
            self.check_len("reference path", row.len())?;
        }
        self.check_len("terminal reference", u_bar_terminal.n_modes())?;
        self.u_bar = u_bar;
        self.alpha_bar = alpha_bar;
        self.u_bar_terminal = u_bar_terminal;
        Ok(self)
    }

    pub fn with_q(mut self, q: f64) -> Result<Self> {
        if !(q > CUBIC_GROWTH_EXPONENT + 2.0) {
            return Err(Error::OutOfRange {
                what: "q",
                value: q,
                rule: "cubic nonlinearity (r = 3) in d = 1 requires q > 6",
            });
        }
        self.q = q;
        Ok(self)
    }

    fn check_len(&self, what: &'static str, got: usize) -> Result<()> {
        if got != self.n_modes() {
            return Err(Error::SizeMismatch {
                what,
                expected: self.n_modes(),
                got,
            });
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn collocation(&self) -> &Collocation {
        &self.collocation
    }

    pub fn b_sup(&self) -> f64 {
        self.b.sup_abs()
    }

    pub fn u_bar(&self, k: usize) -> SpectralField {
        SpectralField::from_vec(self.u_bar.at(k).to_vec())
    }

    pub fn alpha_bar(&self, k: usize) -> SpectralField {
        SpectralField::from_vec(self.alpha_bar.at(k).to_vec())
    }

    pub fn u_bar_terminal(&self) -> &SpectralField {
        &self.u_bar_terminal
    }

    /// The scalar reaction term `F₁(x) = −x³`.
    pub fn reaction(x: f64) -> f64 {
        -x * x * x
    }

    /// Nemytskii operator `x ↦ −x³` in coefficient space.
    pub fn nemytskii(&self, x: &SpectralField) -> SpectralField {
        let vals: Vec<f64> = self.collocation.synthesize(x).into_iter().map(Self::reaction).collect();
        self.collocation.analyze(&vals)
    }

    fn nemytskii_derivative(&self, x: &SpectralField, z: &SpectralField) -> SpectralField {
        let slope: Vec<f64> = self
            .collocation
            .synthesize(x)
            .into_iter()
            .map(|u| -3.0 * u * u)
            .collect();
        self.collocation.multiply(&slope, z)
    }
}

impl Problem for CubicReactionDiffusion {
    fn name(&self) -> &str {
        "cubic_rd"
    }

    fn n_modes(&self) -> usize {
        self.collocation.n_modes()
    }

    fn grid(&self) -> TimeGrid {
        self.grid
    }

    fn exponents(&self) -> (f64, f64) {
        (self.q, CUBIC_GROWTH_EXPONENT)
    }

    fn q_free(&self) -> bool {
        true
    }

    fn drift(&self, k: usize, x: &SpectralField, law: &EmpiricalLaw, alpha: &SpectralField) -> SpectralField {
        let mut out = self.nemytskii(x);
        out.axpy(self.kappa, law.mean());
        out.axpy(1.0, &self.collocation.multiply(self.b.at(k), alpha));
        out
    }

    fn drift_x(
        &self,
        _k: usize,
        x: &SpectralField,
        _law: &EmpiricalLaw,
        _alpha: &SpectralField,
        z: &SpectralField,
    ) -> SpectralField {
        self.nemytskii_derivative(x, z)
    }

    fn drift_x_adj(
        &self,
        _k: usize,
        x: &SpectralField,
        _law: &EmpiricalLaw,
        _alpha: &SpectralField,
        p: &SpectralField,
    ) -> SpectralField {
        // pointwise multiplication is symmetric under collocation
        self.nemytskii_derivative(x, p)
    }

    fn drift_alpha(
        &self,
        k: usize,
        _x: &SpectralField,
        _law: &EmpiricalLaw,
        _alpha: &SpectralField,
        beta: &SpectralField,
    ) -> SpectralField {
        self.collocation.multiply(self.b.at(k), beta)
    }

    fn drift_alpha_adj(
        &self,
        k: usize,
        _x: &SpectralField,
        _law: &EmpiricalLaw,
        _alpha: &SpectralField,
        p: &SpectralField,
    ) -> SpectralField {
        self.collocation.multiply(self.b.at(k), p)
    }

    fn drift_lions(
        &self,
        _k: usize,
        _x: &SpectralField,
        _law: &EmpiricalLaw,
        _y: &SpectralField,
        z: &SpectralField,
    ) -> SpectralField {
        z.scaled(self.kappa)
    }

    fn drift_lions_adj(
        &self,
        _k: usize,
        _x: &SpectralField,
        _law: &EmpiricalLaw,
        _y: &SpectralField,
        p: &SpectralField,
    ) -> SpectralField {
        p.scaled(self.kappa)
    }

    fn diffusion_matrix(&self, _k: usize, x: &SpectralField, _law: &EmpiricalLaw, _alpha: &SpectralField) -> Vec<f64> {
        let m = x.n_modes();
        let mut b = vec![0.0; m * m];
        for (i, s) in self.sigma.iter().enumerate() {
            b[i * m + i] = *s;
        }
        b
    }

    fn diffusion(
        &self,
        _k: usize,
        _x: &SpectralField,
        _law: &EmpiricalLaw,
        _alpha: &SpectralField,
        w: &[f64],
    ) -> SpectralField {
        SpectralField::from_vec(self.sigma.iter().zip(w).map(|(s, w)| s * w).collect())
    }

    fn running_cost(&self, k: usize, x: &SpectralField, _law: &EmpiricalLaw, alpha: &SpectralField) -> f64 {
        (x - &self.u_bar(k)).norm_h_sq() + (alpha - &self.alpha_bar(k)).norm_h_sq()
    }

    fn running_cost_x(
        &self,
        k: usize,
        x: &SpectralField,
        _law: &EmpiricalLaw,
        _alpha: &SpectralField,
    ) -> SpectralField {
        (x - &self.u_bar(k)).scaled(2.0)
    }

    fn running_cost_alpha(
        &self,
        k: usize,
        _x: &SpectralField,
        _law: &EmpiricalLaw,
        alpha: &SpectralField,
    ) -> SpectralField {
        (alpha - &self.alpha_bar(k)).scaled(2.0)
    }

    fn terminal_cost(&self, x: &SpectralField, _law: &EmpiricalLaw) -> f64 {
        (x - &self.u_bar_terminal).norm_h_sq()
    }

    fn terminal_cost_x(&self, x: &SpectralField, _law: &EmpiricalLaw) -> SpectralField {
        (x - &self.u_bar_terminal).scaled(2.0)
    }

    fn structure_constants(&self) -> StructureConstants {
        // 2⟨Lu,u⟩ = 2‖u‖²_H − 2‖u‖²_V, ⟨−u³,u⟩ ≤ 0, Young on the mean and control terms
        StructureConstants {
            a1: 2.0 + self.kappa.abs() + self.b_sup(),
            delta: 2.0,
            c: 0.0,
        }
    }
}
