//! Independent re-implementations checked against the solver.

use std::f64::consts::PI;

use mvsc_core::control::ControlPath;
use mvsc_core::ensemble::{wasserstein2, Ensemble};
use mvsc_core::forward::{sample_initial_ensemble, solve};
use mvsc_core::noise::{KeyedGaussian, NoisePlan, Stream};
use mvsc_core::problem::{CubicReactionDiffusion, TimeGrid, TimeTable};
use mvsc_core::spectral::SpectralField;

/// `-∫₀¹ u³ e_m dξ` by the trapezoid rule on a fine grid. The integrand is a
/// sine polynomial vanishing at both ends, so the rule is exact up to
/// round-off once the grid resolves its top frequency.
fn projected_cube(c: &[f64], n_quad: usize) -> Vec<f64> {
    let m = c.len();
    let h = 1.0 / n_quad as f64;
    let mut out = vec![0.0; m];
    for j in 1..n_quad {
        let xi = j as f64 * h;
        let u: f64 = c
            .iter()
            .enumerate()
            .map(|(k, a)| a * 2f64.sqrt() * ((k + 1) as f64 * PI * xi).sin())
            .sum();
        for (k, o) in out.iter_mut().enumerate() {
            *o -= h * u.powi(3) * 2f64.sqrt() * ((k + 1) as f64 * PI * xi).sin();
        }
    }
    out
}

#[test]
fn cubic_forward_matches_quadrature_stepper() {
    let (m, n, n_t, t) = (5, 4, 20, 0.5);
    let (kappa, sigma, b) = (0.5, 0.3, 1.5);
    let grid = TimeGrid::new(t, n_t).unwrap();
    let problem = CubicReactionDiffusion::new(m, grid, kappa, sigma).with_constant_b(b);
    let plan = NoisePlan::new(17, n, m, n_t, t).unwrap();
    let x0 = sample_initial_ensemble(17, n, &SpectralField::from_vec(vec![1.2, -0.4, 0.3, 0.0, 0.1]), 0.4);
    let control = ControlPath::from_fn(n_t, grid.dt(), 7.0, 1e3, |s| {
        SpectralField::from_vec(vec![s.sin(), 0.2, -0.3 * s, 0.0, 0.05])
    })
    .unwrap();
    let bundle = solve(&problem, &control, &plan, &x0).unwrap();

    let dt = t / n_t as f64;
    let mut xs: Vec<Vec<f64>> = x0.iter().map(|v| v.coeffs().to_vec()).collect();
    for k in 0..n_t {
        let dw = plan.wiener_increments(k).unwrap();
        let mean: Vec<f64> = (0..m)
            .map(|c| xs.iter().map(|x| x[c]).sum::<f64>() / n as f64)
            .collect();
        let next: Vec<Vec<f64>> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let cube = projected_cube(x, 4000);
                (0..m)
                    .map(|c| {
                        let lam = ((c + 1) as f64 * PI).powi(2);
                        let sig = sigma / (c + 1) as f64;
                        let f = cube[c] + kappa * mean[c] + b * control[k][c];
                        (x[c] + dt * f + sig * dw[i][c]) / (1.0 + dt * lam)
                    })
                    .collect()
            })
            .collect();
        xs = next;
        for (i, x) in xs.iter().enumerate() {
            for (c, want) in x.iter().enumerate() {
                let got = bundle.states[k + 1][i][c];
                assert!(
                    (got - want).abs() <= 1e-10,
                    "step {k}, particle {i}, mode {c}: {got} vs {want}"
                );
            }
        }
    }
}

fn brute_force_w2(a: &Ensemble, b: &Ensemble) -> f64 {
    fn permute(idx: &mut Vec<usize>, start: usize, best: &mut f64, cost: &dyn Fn(&[usize]) -> f64) {
        if start == idx.len() {
            *best = best.min(cost(idx));
            return;
        }
        for i in start..idx.len() {
            idx.swap(start, i);
            permute(idx, start + 1, best, cost);
            idx.swap(start, i);
        }
    }
    let n = a.len();
    let cost = |perm: &[usize]| -> f64 {
        perm.iter()
            .enumerate()
            .map(|(i, &j)| (&a[i] - &b[j]).norm_h_sq())
            .sum::<f64>()
            / n as f64
    };
    let mut best = f64::INFINITY;
    permute(&mut (0..n).collect(), 0, &mut best, &cost);
    best.sqrt()
}

#[test]
fn wasserstein_matches_permutation_minimum() {
    let gen = KeyedGaussian::new(2024);
    for pair in 0..50u32 {
        let n = 1 + (pair as usize % 8);
        let m = 3;
        let draw = |side: u32| {
            Ensemble::new(
                (0..n)
                    .map(|i| {
                        SpectralField::from_vec(
                            (0..m)
                                .map(|c| gen.normal(Stream::Probe, pair, side * 100 + i as u32, c as u32))
                                .collect(),
                        )
                    })
                    .collect(),
            )
            .unwrap()
        };
        let (a, b) = (draw(0), draw(1));
        let fast = wasserstein2(&a, &b).unwrap();
        let slow = brute_force_w2(&a, &b);
        assert!((fast - slow).abs() <= 1e-12, "pair {pair}: {fast} vs {slow}");
    }
}

#[test]
fn heat_flow_is_the_implicit_euler_product() {
    let n_t = 40;
    let grid = TimeGrid::new(0.5, n_t).unwrap();
    let problem = CubicReactionDiffusion::new(3, grid, 0.0, 0.0)
        .with_constant_b(0.0)
        .with_references(TimeTable::zeros(3), TimeTable::zeros(3), SpectralField::zeros(3))
        .unwrap();
    // linear in the coefficient only for a vanishing amplitude; use a tiny one
    let a0 = 1e-6;
    let x0 = Ensemble::replicate(&SpectralField::mode(3, 1).scaled(a0), 1);
    let plan = NoisePlan::new(0, 1, 3, n_t, 0.5).unwrap();
    let c = ControlPath::zeros(n_t, 3, grid.dt(), 7.0, 1.0).unwrap();
    let b = solve(&problem, &c, &plan, &x0).unwrap();
    let s = 1.0 / (1.0 + grid.dt() * PI * PI);
    let expect = a0 * s.powi(n_t as i32);
    // cubic correction is O(a0³)
    assert!((b.terminal()[0][0] - expect).abs() < 1e-16);
}
