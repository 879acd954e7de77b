//! Equal-weight particle ensembles as the empirical surrogate for the law of the state.

use rayon::prelude::*;

use crate::assignment;
use crate::error::{Error, Result};
use crate::spectral::SpectralField;

/// `N` equally weighted fields sharing one mode count.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    particles: Vec<SpectralField>,
}

impl Ensemble {
    pub fn new(particles: Vec<SpectralField>) -> Result<Self> {
        let first = particles.first().ok_or(Error::EmptyEnsemble)?;
        let m = first.n_modes();
        if let Some(bad) = particles.iter().find(|p| p.n_modes() != m) {
            return Err(Error::ModeMismatch {
                expected: m,
                got: bad.n_modes(),
            });
        }
        Ok(Self { particles })
    }

    pub fn zeros(n_particles: usize, n_modes: usize) -> Self {
        assert!(n_particles >= 1);
        Self {
            particles: vec![SpectralField::zeros(n_modes); n_particles],
        }
    }

    /// Every particle equal to `v`.
    pub fn replicate(v: &SpectralField, n_particles: usize) -> Self {
        assert!(n_particles >= 1);
        Self {
            particles: vec![v.clone(); n_particles],
        }
    }

    pub(crate) fn from_particles_unchecked(particles: Vec<SpectralField>) -> Self {
        debug_assert!(!particles.is_empty());
        Self { particles }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn n_modes(&self) -> usize {
        self.particles[0].n_modes()
    }

    pub fn particles(&self) -> &[SpectralField] {
        &self.particles
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SpectralField> {
        self.particles.iter()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            particles: self.particles.iter().map(|p| p.scaled(s)).collect(),
        }
    }

    /// Coefficientwise average, summed in particle order.
    pub fn empirical_mean(&self) -> SpectralField {
        let n = self.len() as f64;
        let mut acc = SpectralField::zeros(self.n_modes());
        for p in &self.particles {
            acc.axpy(1.0, p);
        }
        acc.scaled(1.0 / n)
    }

    /// `(1/N) Σ ‖x_i‖_H^q`.
    pub fn moment_q(&self, q: f64) -> Result<f64> {
        if !(q >= 1.0) {
            return Err(Error::OutOfRange {
                what: "moment exponent q",
                value: q,
                rule: "q >= 1",
            });
        }
        let n = self.len() as f64;
        Ok(self.particles.iter().map(|p| p.norm_h().powf(q)).sum::<f64>() / n)
    }

    /// `(1/N) Σ ‖x_i‖²_H`, i.e. `μ(‖·‖²_H)`.
    pub fn second_moment(&self) -> f64 {
        let n = self.len() as f64;
        self.particles.iter().map(|p| p.norm_h_sq()).sum::<f64>() / n
    }

    /// `(1/N) Σ ‖a_i − b_i‖²_H`, the cost of the identity coupling.
    pub fn paired_distance_sq(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        let n = self.len() as f64;
        Ok(self
            .particles
            .iter()
            .zip(&other.particles)
            .map(|(a, b)| (a - b).norm_h_sq())
            .sum::<f64>()
            / n)
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::SizeMismatch {
                what: "ensemble size",
                expected: self.len(),
                got: other.len(),
            });
        }
        if self.n_modes() != other.n_modes() {
            return Err(Error::ModeMismatch {
                expected: self.n_modes(),
                got: other.n_modes(),
            });
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for Ensemble {
    type Output = SpectralField;
    fn index(&self, i: usize) -> &SpectralField {
        &self.particles[i]
    }
}

impl<'a> IntoIterator for &'a Ensemble {
    type Item = &'a SpectralField;
    type IntoIter = std::slice::Iter<'a, SpectralField>;
    fn into_iter(self) -> Self::IntoIter {
        self.particles.iter()
    }
}

/// An ensemble together with the empirical statistics the coefficient
/// evaluators need, computed once per time step.
#[derive(Debug, Clone)]
pub struct EmpiricalLaw<'a> {
    ensemble: &'a Ensemble,
    mean: SpectralField,
    second_moment: f64,
}

impl<'a> EmpiricalLaw<'a> {
    pub fn new(ensemble: &'a Ensemble) -> Self {
        Self {
            ensemble,
            mean: ensemble.empirical_mean(),
            second_moment: ensemble.second_moment(),
        }
    }

    pub fn ensemble(&self) -> &'a Ensemble {
        self.ensemble
    }

    pub fn mean(&self) -> &SpectralField {
        &self.mean
    }

    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    pub fn len(&self) -> usize {
        self.ensemble.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ensemble.is_empty()
    }
}

/// Exact `W₂` between equal-weight ensembles of equal size.
///
/// Solves the `N × N` linear assignment on squared H-distances; supported
/// envelope is `N <= 256`.
pub fn wasserstein2(a: &Ensemble, b: &Ensemble) -> Result<f64> {
    a.check_same_shape(b)?;
    let n = a.len();
    let cost: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|ij| (&a[ij / n] - &b[ij % n]).norm_h_sq())
        .collect();
    let (_, total) = assignment::solve(&cost, n);
    Ok((total / n as f64).max(0.0).sqrt())
}
