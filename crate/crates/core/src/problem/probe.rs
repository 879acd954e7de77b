//! Sampled checks of the coercivity, monotonicity and diffusion-Lipschitz
//! inequalities for a concrete coefficient bundle.

use super::Problem;
use crate::ensemble::{wasserstein2, EmpiricalLaw, Ensemble};
use crate::noise::{KeyedGaussian, Stream};
use crate::spectral::{OperatorSpec, SpectralField};

/// Slack below which a negative margin counts as a violation, relative to
/// `max(1, |lhs|, |rhs|)`.
pub const PROBE_SLACK: f64 = 1e-9;

const LAW_PARTICLES: usize = 4;

/// Worst margins (`rhs − lhs`) seen per inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub samples: usize,
    pub a1: f64,
    pub delta: f64,
    pub coercivity_margin: f64,
    pub monotonicity_margin: f64,
    pub diffusion_margin: f64,
    pub violations: usize,
}

impl ProbeReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn sample_field(gen: &KeyedGaussian, sample: u32, slot: u32, m: usize, scale: f64) -> SpectralField {
    SpectralField::from_vec(
        (0..m)
            .map(|k| {
                let key = slot * 4096 + k as u32;
                scale * gen.normal(Stream::Probe, sample, key, 0) / (k + 1) as f64
            })
            .collect(),
    )
}

fn sample_ensemble(gen: &KeyedGaussian, sample: u32, slot: u32, m: usize, scale: f64) -> Ensemble {
    let particles = (0..LAW_PARTICLES as u32)
        .map(|j| sample_field(gen, sample, slot * 64 + j, m, scale))
        .collect();
    Ensemble::new(particles).expect("non-empty ensemble")
}

fn hs_distance_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn violated(margin: f64, lhs: f64, rhs: f64) -> bool {
    margin < -PROBE_SLACK * 1f64.max(lhs.abs()).max(rhs.abs())
}

/// Draws `samples` tuples `(u, v, μ, ν, α, β, t)` with coefficients of size
/// `scale` and evaluates both sides of each inequality with the problem's
/// declared structure constants.
pub fn assumption_probe(problem: &dyn Problem, samples: usize, seed: u64, scale: f64) -> ProbeReport {
    let m = problem.n_modes();
    let op = OperatorSpec::dirichlet_laplacian(m);
    let consts = problem.structure_constants();
    let (a1, delta, c) = (consts.a1, consts.delta, consts.c);
    let gen = KeyedGaussian::new(seed);
    let n_nodes = problem.grid().n_steps + 1;

    let mut report = ProbeReport {
        samples,
        a1,
        delta,
        coercivity_margin: f64::INFINITY,
        monotonicity_margin: f64::INFINITY,
        diffusion_margin: f64::INFINITY,
        violations: 0,
    };

    for s in 0..samples as u32 {
        let k = ((gen.uniform(Stream::Probe, s, u32::MAX, 0) * n_nodes as f64) as usize).min(n_nodes - 1);
        let u = sample_field(&gen, s, 0, m, scale);
        let v = sample_field(&gen, s, 1, m, scale);
        let alpha = sample_field(&gen, s, 2, m, scale);
        let beta = sample_field(&gen, s, 3, m, scale);
        let mu = sample_ensemble(&gen, s, 4, m, scale);
        let nu = sample_ensemble(&gen, s, 5, m, scale);
        let law_mu = EmpiricalLaw::new(&mu);
        let law_nu = EmpiricalLaw::new(&nu);

        // coercivity
        let mut total = op.apply(&u).expect("mode count");
        total.axpy(1.0, &problem.drift(k, &u, &law_mu, &alpha));
        let lhs = 2.0 * total.dot(&u);
        let rhs = a1 * (u.norm_h_sq() + mu.second_moment() + alpha.norm_h_sq()) - delta * u.norm_v_sq() + c;
        let margin = rhs - lhs;
        report.coercivity_margin = report.coercivity_margin.min(margin);
        report.violations += violated(margin, lhs, rhs) as usize;

        // monotonicity
        let du = &u - &v;
        let w2 = wasserstein2(&mu, &nu).expect("equal sizes");
        let mut diff = op.apply(&du).expect("mode count");
        diff.axpy(1.0, &problem.drift(k, &u, &law_mu, &alpha));
        diff.axpy(-1.0, &problem.drift(k, &v, &law_nu, &beta));
        let lhs = 2.0 * diff.dot(&du);
        let distance = du.norm_h_sq() + w2 * w2 + (&alpha - &beta).norm_h_sq();
        let rhs = a1 * distance - delta * du.norm_v_sq();
        let margin = rhs - lhs;
        report.monotonicity_margin = report.monotonicity_margin.min(margin);
        report.violations += violated(margin, lhs, rhs) as usize;

        // diffusion Lipschitz
        let bu = problem.diffusion_matrix(k, &u, &law_mu, &alpha);
        let bv = problem.diffusion_matrix(k, &v, &law_nu, &beta);
        let lhs = hs_distance_sq(&bu, &bv);
        let rhs = a1 * distance;
        let margin = rhs - lhs;
        report.diffusion_margin = report.diffusion_margin.min(margin);
        report.violations += violated(margin, lhs, rhs) as usize;
    }
    report
}

/// `max (F(x) − F(y))(x − y)` over `samples` scalar pairs drawn at `scale`.
pub fn monotonicity_scalar_probe(reaction: impl Fn(f64) -> f64, samples: usize, seed: u64, scale: f64) -> f64 {
    let gen = KeyedGaussian::new(seed);
    (0..samples as u32)
        .map(|s| {
            let x = scale * gen.normal(Stream::Probe, s, u32::MAX - 1, 0);
            let y = scale * gen.normal(Stream::Probe, s, u32::MAX - 1, 1);
            (reaction(x) - reaction(y)) * (x - y)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{CubicReactionDiffusion, LinearQuadratic, LqTables, TimeGrid, TimeTable};

    #[test]
    fn cubic_reaction_is_monotone() {
        let worst = monotonicity_scalar_probe(CubicReactionDiffusion::reaction, 10_000, 3, 2.0);
        assert!(worst <= 0.0);
    }

    #[test]
    fn constant_noise_has_zero_diffusion_defect() {
        let p = CubicReactionDiffusion::new(6, TimeGrid::new(0.5, 10).unwrap(), 0.5, 0.3);
        let r = assumption_probe(&p, 200, 1, 1.0);
        assert!(r.passed(), "{r:?}");
        // B is constant, so the left side is exactly zero and the margin is the full right side
        assert!(r.diffusion_margin > 0.0);
    }

    #[test]
    fn lq_probe_passes() {
        let m = 4;
        let mut t = LqTables::zeros(m);
        t.f_state = TimeTable::constant(vec![0.5, -1.0, 2.0, 0.0]);
        t.f_mean = TimeTable::constant(vec![0.3; m]);
        t.f_control = TimeTable::constant(vec![1.0; m]);
        t.b_state = TimeTable::constant(vec![0.2, 0.1, 0.0, 0.4]);
        t.b_mean = TimeTable::constant(vec![0.1; m]);
        t.b_control = TimeTable::constant(vec![0.05; m]);
        let p = LinearQuadratic::new(m, TimeGrid::new(1.0, 8).unwrap(), t, 3.0).unwrap();
        let r = assumption_probe(&p, 500, 2, 1.0);
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn understated_constant_is_caught() {
        // a probe that can never fail is useless: shrink A1 and expect violations
        struct Weak(CubicReactionDiffusion);
        impl Problem for Weak {
            fn name(&self) -> &str {
                "weak"
            }
            fn n_modes(&self) -> usize {
                self.0.n_modes()
            }
            fn grid(&self) -> TimeGrid {
                self.0.grid()
            }
            fn exponents(&self) -> (f64, f64) {
                self.0.exponents()
            }
            fn q_free(&self) -> bool {
                true
            }
            fn drift(&self, k: usize, x: &SpectralField, l: &EmpiricalLaw, a: &SpectralField) -> SpectralField {
                // positive feedback that breaks coercivity at A1 = 0
                let mut d = self.0.drift(k, x, l, a);
                d.axpy(50.0, x);
                d
            }
            fn drift_x(
                &self,
                k: usize,
                x: &SpectralField,
                l: &EmpiricalLaw,
                a: &SpectralField,
                z: &SpectralField,
            ) -> SpectralField {
                self.0.drift_x(k, x, l, a, z)
            }
            fn drift_x_adj(
                &self,
                k: usize,
                x: &SpectralField,
                l: &EmpiricalLaw,
                a: &SpectralField,
                p: &SpectralField,
            ) -> SpectralField {
                self.0.drift_x_adj(k, x, l, a, p)
            }
            fn drift_alpha(
                &self,
                k: usize,
                x: &SpectralField,
                l: &EmpiricalLaw,
                a: &SpectralField,
                b: &SpectralField,
            ) -> SpectralField {
                self.0.drift_alpha(k, x, l, a, b)
            }
            fn drift_alpha_adj(
                &self,
                k: usize,
                x: &SpectralField,
                l: &EmpiricalLaw,
                a: &SpectralField,
                p: &SpectralField,
            ) -> SpectralField {
                self.0.drift_alpha_adj(k, x, l, a, p)
            }
            fn diffusion_matrix(&self, k: usize, x: &SpectralField, l: &EmpiricalLaw, a: &SpectralField) -> Vec<f64> {
                self.0.diffusion_matrix(k, x, l, a)
            }
            fn running_cost(&self, k: usize, x: &SpectralField, l: &EmpiricalLaw, a: &SpectralField) -> f64 {
                self.0.running_cost(k, x, l, a)
            }
            fn running_cost_x(
                &self,
                k: usize,
                x: &SpectralField,
                l: &EmpiricalLaw,
                a: &SpectralField,
            ) -> SpectralField {
                self.0.running_cost_x(k, x, l, a)
            }
            fn running_cost_alpha(
                &self,
                k: usize,
                x: &SpectralField,
                l: &EmpiricalLaw,
                a: &SpectralField,
            ) -> SpectralField {
                self.0.running_cost_alpha(k, x, l, a)
            }
            fn terminal_cost(&self, x: &SpectralField, l: &EmpiricalLaw) -> f64 {
                self.0.terminal_cost(x, l)
            }
            fn terminal_cost_x(&self, x: &SpectralField, l: &EmpiricalLaw) -> SpectralField {
                self.0.terminal_cost_x(x, l)
            }
            fn structure_constants(&self) -> crate::problem::StructureConstants {
                self.0.structure_constants()
            }
        }
        let p = Weak(CubicReactionDiffusion::new(
            4,
            TimeGrid::new(0.5, 10).unwrap(),
            0.5,
            0.3,
        ));
        let r = assumption_probe(&p, 200, 1, 1.0);
        assert!(!r.passed());
    }
}
