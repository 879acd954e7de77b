//! Spectral representation of `V ⊂ H ⊂ V*` on the Dirichlet-Laplacian eigenbasis of `(0, 1)`.
//!
//! A field is stored as coefficients `c_k` on `e_k(ξ) = √2 sin(kπξ)`, `k = 1..M`.
//! The three spaces share the coordinate space `ℝ^M`; they differ only in norm:
//!
//! ```text
//! ‖v‖²_H = Σ c_k²            ‖v‖²_V = Σ (1 + (kπ)²) c_k²
//! ```
//!
//! The duality pairing between `V*` and `V` is the coefficient dot product.

use std::f64::consts::{PI, SQRT_2};
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Element of `V ⊂ H` as sine-basis coefficients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpectralField {
    coeffs: Vec<f64>,
}

impl SpectralField {
    /// Wraps coefficients, rejecting NaN/Inf.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("spectral coefficients"));
        }
        Ok(Self { coeffs })
    }

    /// Wraps coefficients without the finiteness check. Used on solver hot paths,
    /// where blow-up is detected separately.
    pub fn from_vec(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(n_modes: usize) -> Self {
        Self {
            coeffs: vec![0.0; n_modes],
        }
    }

    /// `e_k` for 1-based mode index `k`.
    pub fn mode(n_modes: usize, k: usize) -> Self {
        assert!(k >= 1 && k <= n_modes, "mode index {k} out of 1..={n_modes}");
        let mut v = Self::zeros(n_modes);
        v.coeffs[k - 1] = 1.0;
        v
    }

    pub fn n_modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Coefficient dot product, i.e. `⟨u, v⟩_H` and the `V*`/`V` pairing.
    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.n_modes(), other.n_modes());
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn norm_h_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm_h(&self) -> f64 {
        self.norm_h_sq().sqrt()
    }

    pub fn norm_v_sq(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let k = (i + 1) as f64 * PI;
                (1.0 + k * k) * c * c
            })
            .sum()
    }

    /// `(‖v‖_H, ‖v‖_V)`.
    pub fn norms(&self) -> Result<(f64, f64)> {
        if !self.is_finite() {
            return Err(Error::NonFinite("spectral coefficients"));
        }
        Ok((self.norm_h(), self.norm_v_sq().sqrt()))
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Self) {
        debug_assert_eq!(self.n_modes(), x.n_modes());
        for (s, xi) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *s += a * xi;
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_vec(self.coeffs.iter().map(|c| s * c).collect())
    }

    /// Coefficientwise product with a diagonal operator given by its entries.
    pub fn hadamard(&self, diag: &[f64]) -> Self {
        debug_assert_eq!(self.n_modes(), diag.len());
        Self::from_vec(self.coeffs.iter().zip(diag).map(|(c, d)| c * d).collect())
    }

    /// Galerkin projection onto the first `n` modes.
    pub fn project(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n_modes() {
            return Err(Error::OutOfRange {
                what: "projection order",
                value: n as f64,
                rule: "1 <= n <= M",
            });
        }
        let mut out = self.clone();
        out.coeffs[n..].iter_mut().for_each(|c| *c = 0.0);
        Ok(out)
    }

    /// Point evaluation `Σ c_k √2 sin(kπξ)` on an arbitrary grid in `(0, 1)`.
    pub fn to_physical(&self, grid: &[f64]) -> Result<Vec<f64>> {
        if let Some(&bad) = grid.iter().find(|&&x| !(x > 0.0 && x < 1.0)) {
            return Err(Error::OutOfRange {
                what: "grid point",
                value: bad,
                rule: "0 < xi < 1",
            });
        }
        Ok(grid
            .iter()
            .map(|&xi| {
                self.coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c * SQRT_2 * ((i + 1) as f64 * PI * xi).sin())
                    .sum()
            })
            .collect())
    }
}

impl Index<usize> for SpectralField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.coeffs[i]
    }
}

impl IndexMut<usize> for SpectralField {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.coeffs[i]
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, s: f64) -> SpectralField {
        self.scaled(s)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scaled(-1.0)
    }
}

/// The Dirichlet Laplacian truncated to `M` modes, `λ_k = −(kπ)²`.
///
/// With the V-norm above, `⟨Lv, v⟩ = ‖v‖²_H − ‖v‖²_V` holds exactly, so the
/// coercivity constants are `l1 = l2 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    eigenvalues: Vec<f64>,
    pub l1: f64,
    pub l2: f64,
}

impl OperatorSpec {
    pub fn dirichlet_laplacian(n_modes: usize) -> Self {
        assert!(n_modes >= 1, "at least one mode required");
        let eigenvalues = (1..=n_modes)
            .map(|k| {
                let kp = k as f64 * PI;
                -kp * kp
            })
            .collect();
        Self {
            eigenvalues,
            l1: 1.0,
            l2: 1.0,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn apply(&self, v: &SpectralField) -> Result<SpectralField> {
        if v.n_modes() != self.n_modes() {
            return Err(Error::ModeMismatch {
                expected: self.n_modes(),
                got: v.n_modes(),
            });
        }
        Ok(v.hadamard(&self.eigenvalues))
    }

    /// Diagonal of `(I − dt L)^{-1}`, the implicit Euler resolvent.
    pub fn resolvent(&self, dt: f64) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| 1.0 / (1.0 - dt * l)).collect()
    }
}

/// Sine collocation on `n_x = 2M + 1` interior points `ξ_j = j / (n_x + 1)`.
///
/// Discrete orthogonality of the sine basis on this grid gives the exact
/// analysis map `c_k = (1 / (n_x + 1)) Σ_j v_j e_k(ξ_j)`; in matrix form
/// `analysis = Φᵀ / (n_x + 1)` where `Φ_{jk} = e_k(ξ_j)`. Products of three
/// degree-`M` sine series alias only into modes above `M`, so cubic Nemytskii
/// terms are resolved exactly after truncation.
#[derive(Debug, Clone)]
pub struct Collocation {
    n_modes: usize,
    points: Vec<f64>,
    // row-major n_x × M
    basis: Vec<f64>,
}

impl Collocation {
    pub fn new(n_modes: usize) -> Self {
        let n_x = 2 * n_modes + 1;
        let h = 1.0 / (n_x + 1) as f64;
        let points: Vec<f64> = (1..=n_x).map(|j| j as f64 * h).collect();
        let mut basis = Vec::with_capacity(n_x * n_modes);
        for &xi in &points {
            for k in 1..=n_modes {
                basis.push(SQRT_2 * (k as f64 * PI * xi).sin());
            }
        }
        Self { n_modes, points, basis }
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    /// Grid values `Φ c`.
    pub fn synthesize(&self, v: &SpectralField) -> Vec<f64> {
        debug_assert_eq!(v.n_modes(), self.n_modes);
        self.basis
            .chunks_exact(self.n_modes)
            .map(|row| row.iter().zip(v.coeffs()).map(|(b, c)| b * c).sum())
            .collect()
    }

    /// Coefficients `Φᵀ v / (n_x + 1)`, truncated to `M` modes.
    pub fn analyze(&self, values: &[f64]) -> SpectralField {
        debug_assert_eq!(values.len(), self.n_points());
        let w = 1.0 / (self.n_points() + 1) as f64;
        let mut out = vec![0.0; self.n_modes];
        for (row, &val) in self.basis.chunks_exact(self.n_modes).zip(values) {
            for (o, b) in out.iter_mut().zip(row) {
                *o += b * val;
            }
        }
        out.iter_mut().for_each(|o| *o *= w);
        SpectralField::from_vec(out)
    }

    /// Transpose of [`Self::analyze`]: `Φ p / (n_x + 1)`.
    pub fn analyze_adjoint(&self, p: &SpectralField) -> Vec<f64> {
        let w = 1.0 / (self.n_points() + 1) as f64;
        self.synthesize(p).into_iter().map(|v| v * w).collect()
    }

    /// Pointwise multiplication by a grid function, `v ↦ analyze(m ⊙ Φ v)`.
    /// Symmetric in the coefficient inner product.
    pub fn multiply(&self, multiplier: &[f64], v: &SpectralField) -> SpectralField {
        let vals: Vec<f64> = self
            .synthesize(v)
            .into_iter()
            .zip(multiplier)
            .map(|(a, m)| a * m)
            .collect();
        self.analyze(&vals)
    }
}
