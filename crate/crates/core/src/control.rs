use crate::error::{Error, Result};
use crate::spectral::SpectralField;

/// Deterministic, piecewise-constant control: one field per time interval,
/// held at its left endpoint value, with the integral constraint data
/// `Σ dt ‖α_k‖^q <= K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPath {
    values: Vec<SpectralField>,
    dt: f64,
    pub q: f64,
    pub bound: f64,
}

impl ControlPath {
    pub fn new(values: Vec<SpectralField>, dt: f64, q: f64, bound: f64) -> Result<Self> {
        let first = values.first().ok_or(Error::SizeMismatch {
            what: "control length",
            expected: 1,
            got: 0,
        })?;
        let m = first.n_modes();
        if let Some(bad) = values.iter().find(|v| v.n_modes() != m) {
            return Err(Error::ModeMismatch {
                expected: m,
                got: bad.n_modes(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("control path"));
        }
        if !(dt > 0.0) {
            return Err(Error::OutOfRange {
                what: "dt",
                value: dt,
                rule: "dt > 0",
            });
        }
        Ok(Self { values, dt, q, bound })
    }

    pub fn constant(value: &SpectralField, n_steps: usize, dt: f64, q: f64, bound: f64) -> Result<Self> {
        Self::new(vec![value.clone(); n_steps], dt, q, bound)
    }

    pub fn zeros(n_steps: usize, n_modes: usize, dt: f64, q: f64, bound: f64) -> Result<Self> {
        Self::constant(&SpectralField::zeros(n_modes), n_steps, dt, q, bound)
    }

    /// Samples `f(t_k)` at the left endpoints `t_k = k dt`.
    pub fn from_fn(n_steps: usize, dt: f64, q: f64, bound: f64, f: impl Fn(f64) -> SpectralField) -> Result<Self> {
        Self::new((0..n_steps).map(|k| f(k as f64 * dt)).collect(), dt, q, bound)
    }

    /// Same constraint data and grid, new values.
    pub fn with_values(&self, values: Vec<SpectralField>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            values,
            dt: self.dt,
            q: self.q,
            bound: self.bound,
        }
    }

    pub fn values(&self) -> &[SpectralField] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_modes(&self) -> usize {
        self.values[0].n_modes()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `Σ dt ‖α_k‖_U^q`.
    pub fn q_integral(&self) -> f64 {
        self.values.iter().map(|v| self.dt * v.norm_h().powf(self.q)).sum()
    }

    pub fn is_feasible(&self) -> bool {
        self.q_integral() <= self.bound
    }

    /// `Σ dt ⟨a_k, b_k⟩_U`, the pairing between gradients and directions.
    pub fn pairing(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| self.dt * a.dot(b))
            .sum()
    }

    /// `L²([0, T]; U)` norm.
    pub fn norm_l2(&self) -> f64 {
        self.pairing(self).sqrt()
    }

    /// `self + s * dir`
    pub fn offset(&self, s: f64, dir: &Self) -> Self {
        self.with_values(
            self.values
                .iter()
                .zip(&dir.values)
                .map(|(a, d)| {
                    let mut v = a.clone();
                    v.axpy(s, d);
                    v
                })
                .collect(),
        )
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.with_values(self.values.iter().map(|v| v.scaled(s)).collect())
    }
}

impl std::ops::Index<usize> for ControlPath {
    type Output = SpectralField;
    fn index(&self, k: usize) -> &SpectralField {
        &self.values[k]
    }
}
