//! Finite-difference and transposition checks of every derivative evaluator,
//! plus the discrete duality between tangent and adjoint on both instances.

use mvsc_core::adjoint::{duality_residual, solve_adjoint};
use mvsc_core::control::ControlPath;
use mvsc_core::ensemble::{EmpiricalLaw, Ensemble};
use mvsc_core::forward::{sample_initial_ensemble, solve};
use mvsc_core::noise::{KeyedGaussian, NoisePlan, Stream};
use mvsc_core::objective::{cost_and_gradient, evaluate, gradcheck, random_direction};
use mvsc_core::problem::{
    lions_apply, Coefficient, CubicReactionDiffusion, LinearQuadratic, LionsValue, LqTables, Problem, TimeGrid,
    TimeTable,
};
use mvsc_core::spectral::SpectralField;
use mvsc_core::tangent::{gateaux_cost, solve_tangent};

const M: usize = 4;

fn field(gen: &KeyedGaussian, a: u32, b: u32) -> SpectralField {
    SpectralField::from_vec(
        (0..M)
            .map(|c| 0.5 * gen.normal(Stream::Probe, a, b, c as u32))
            .collect(),
    )
}

fn ensemble(gen: &KeyedGaussian, a: u32, n: usize) -> Ensemble {
    Ensemble::new((0..n).map(|i| field(gen, a, 100 + i as u32)).collect()).unwrap()
}

fn cubic(grid: TimeGrid) -> CubicReactionDiffusion {
    CubicReactionDiffusion::new(M, grid, 0.5, 0.3)
        .with_b_fn(|t, xi| 1.0 + 0.5 * (3.0 * xi).sin() * (1.0 + t))
        .with_references(
            TimeTable::constant(vec![0.3, 0.0, -0.1, 0.0]),
            TimeTable::constant(vec![0.2, 0.1, 0.0, -0.2]),
            SpectralField::from_vec(vec![0.1, 0.2, 0.0, 0.0]),
        )
        .unwrap()
}

fn table(gen: &KeyedGaussian, tag: u32, rows: usize, scale: f64, positive: bool) -> TimeTable {
    TimeTable::from_rows(
        (0..rows)
            .map(|r| {
                (0..M)
                    .map(|c| {
                        let v = scale * gen.normal(Stream::Probe, 9000 + tag, r as u32, c as u32);
                        if positive {
                            v.abs()
                        } else {
                            v
                        }
                    })
                    .collect()
            })
            .collect(),
    )
}

/// Every term of the linear-quadratic family switched on, time-dependent.
fn full_lq(grid: TimeGrid) -> LinearQuadratic {
    let gen = KeyedGaussian::new(77);
    let rows = grid.n_steps + 1;
    let t = LqTables {
        f_state: table(&gen, 0, rows, 1.0, false),
        f_mean: table(&gen, 1, rows, 0.5, false),
        f_control: table(&gen, 2, rows, 1.0, false),
        b_const: table(&gen, 3, rows, 0.3, false),
        b_state: table(&gen, 4, rows, 0.3, false),
        b_mean: table(&gen, 5, rows, 0.3, false),
        b_control: table(&gen, 6, rows, 0.3, false),
        cost_state: table(&gen, 7, rows, 1.0, true),
        cost_spread: table(&gen, 8, rows, 1.0, true),
        cost_control: table(&gen, 9, rows, 1.0, true),
        h_running: table(&gen, 10, rows, 1.0, false),
        h_terminal: vec![0.5, -0.3, 1.0, 0.2],
        terminal_state: vec![1.0, 0.5, 0.2, 0.1],
        terminal_spread: vec![0.4, 0.3, 0.2, 0.1],
    };
    LinearQuadratic::new(M, grid, t, 3.0).unwrap()
}

fn problems() -> Vec<Box<dyn Problem>> {
    let grid = TimeGrid::new(0.5, 10).unwrap();
    vec![Box::new(cubic(grid)), Box::new(full_lq(grid))]
}

fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!(
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs())),
        "{what}: {a} vs {b}"
    );
}

#[test]
fn state_and_control_derivatives_match_central_differences() {
    let gen = KeyedGaussian::new(1);
    for p in problems() {
        let ens = ensemble(&gen, 0, 5);
        let law = EmpiricalLaw::new(&ens);
        let (x, a, z, w) = (
            field(&gen, 1, 0),
            field(&gen, 2, 0),
            field(&gen, 3, 0),
            field(&gen, 4, 0),
        );
        let k = 3;
        let eps = 1e-5;
        let xp = &x + &z.scaled(eps);
        let xm = &x - &z.scaled(eps);
        let ap = &a + &z.scaled(eps);
        let am = &a - &z.scaled(eps);

        let fd = (&p.drift(k, &xp, &law, &a) - &p.drift(k, &xm, &law, &a)).scaled(0.5 / eps);
        assert!(
            (&fd - &p.drift_x(k, &x, &law, &a, &z)).norm_h() < 1e-8,
            "{} drift_x",
            p.name()
        );
        let fd = (&p.drift(k, &x, &law, &ap) - &p.drift(k, &x, &law, &am)).scaled(0.5 / eps);
        assert!(
            (&fd - &p.drift_alpha(k, &x, &law, &a, &z)).norm_h() < 1e-8,
            "{} drift_alpha",
            p.name()
        );

        let wv = w.coeffs();
        let fd = (&p.diffusion(k, &xp, &law, &a, wv) - &p.diffusion(k, &xm, &law, &a, wv)).scaled(0.5 / eps);
        assert!(
            (&fd - &p.diffusion_x(k, &x, &law, &a, &z, wv)).norm_h() < 1e-8,
            "{} diffusion_x",
            p.name()
        );
        let fd = (&p.diffusion(k, &x, &law, &ap, wv) - &p.diffusion(k, &x, &law, &am, wv)).scaled(0.5 / eps);
        assert!(
            (&fd - &p.diffusion_alpha(k, &x, &law, &a, &z, wv)).norm_h() < 1e-8,
            "{} diffusion_alpha",
            p.name()
        );

        let fd = (p.running_cost(k, &xp, &law, &a) - p.running_cost(k, &xm, &law, &a)) * 0.5 / eps;
        assert_close(fd, p.running_cost_x(k, &x, &law, &a).dot(&z), 1e-8, "running_cost_x");
        let fd = (p.running_cost(k, &x, &law, &ap) - p.running_cost(k, &x, &law, &am)) * 0.5 / eps;
        assert_close(
            fd,
            p.running_cost_alpha(k, &x, &law, &a).dot(&z),
            1e-8,
            "running_cost_alpha",
        );
        let fd = (p.terminal_cost(&xp, &law) - p.terminal_cost(&xm, &law)) * 0.5 / eps;
        assert_close(fd, p.terminal_cost_x(&x, &law).dot(&z), 1e-8, "terminal_cost_x");
    }
}

#[test]
fn adjoint_evaluators_are_exact_transposes() {
    let gen = KeyedGaussian::new(2);
    for p in problems() {
        let ens = ensemble(&gen, 0, 5);
        let law = EmpiricalLaw::new(&ens);
        let (x, a, z, q, y) = (
            field(&gen, 1, 0),
            field(&gen, 2, 0),
            field(&gen, 3, 0),
            field(&gen, 4, 0),
            field(&gen, 6, 0),
        );
        let w = field(&gen, 5, 0);
        let wv = w.coeffs();
        let k = 2;
        let pairs = [
            (
                p.drift_x(k, &x, &law, &a, &z).dot(&q),
                z.dot(&p.drift_x_adj(k, &x, &law, &a, &q)),
                "drift_x",
            ),
            (
                p.drift_alpha(k, &x, &law, &a, &z).dot(&q),
                z.dot(&p.drift_alpha_adj(k, &x, &law, &a, &q)),
                "drift_alpha",
            ),
            (
                p.diffusion_x(k, &x, &law, &a, &z, wv).dot(&q),
                z.dot(&p.diffusion_x_adj(k, &x, &law, &a, wv, &q)),
                "diffusion_x",
            ),
            (
                p.diffusion_alpha(k, &x, &law, &a, &z, wv).dot(&q),
                z.dot(&p.diffusion_alpha_adj(k, &x, &law, &a, wv, &q)),
                "diffusion_alpha",
            ),
            (
                p.drift_lions(k, &x, &law, &y, &z).dot(&q),
                z.dot(&p.drift_lions_adj(k, &x, &law, &y, &q)),
                "drift_lions",
            ),
            (
                p.diffusion_lions(k, &x, &law, &y, &z, wv).dot(&q),
                z.dot(&p.diffusion_lions_adj(k, &x, &law, &y, wv, &q)),
                "diffusion_lions",
            ),
        ];
        for (lhs, rhs, what) in pairs {
            assert_close(lhs, rhs, 1e-13, &format!("{} {what}", p.name()));
        }
    }
}

#[test]
fn lions_kernels_match_particle_perturbations() {
    // moving every particle y_j by ε z_j changes h(x, μ) by ε (1/N) Σ_j ∂_μh(y_j)(z_j)
    let gen = KeyedGaussian::new(3);
    for p in problems() {
        let ys = ensemble(&gen, 0, 6);
        let zs = ensemble(&gen, 1, 6);
        let (x, a, w) = (field(&gen, 2, 0), field(&gen, 3, 0), field(&gen, 4, 0));
        let wv = w.coeffs();
        let k = 4;
        let eps = 1e-5;
        let shift = |s: f64| Ensemble::new(ys.iter().zip(&zs).map(|(y, z)| y + &z.scaled(s)).collect()).unwrap();
        let (plus, minus) = (shift(eps), shift(-eps));
        let (lp, lm) = (EmpiricalLaw::new(&plus), EmpiricalLaw::new(&minus));

        let LionsValue::Field(d) = lions_apply(p.as_ref(), k, &ys, &zs, &x, &a, wv, Coefficient::Drift).unwrap() else {
            panic!("drift kernel must be a field")
        };
        let fd = (&p.drift(k, &x, &lp, &a) - &p.drift(k, &x, &lm, &a)).scaled(0.5 / eps);
        assert!((&fd - &d).norm_h() < 1e-8, "{} drift Lions", p.name());

        let LionsValue::Field(d) = lions_apply(p.as_ref(), k, &ys, &zs, &x, &a, wv, Coefficient::Diffusion).unwrap()
        else {
            panic!("diffusion kernel must be a field")
        };
        let fd = (&p.diffusion(k, &x, &lp, &a, wv) - &p.diffusion(k, &x, &lm, &a, wv)).scaled(0.5 / eps);
        assert!((&fd - &d).norm_h() < 1e-8, "{} diffusion Lions", p.name());

        let LionsValue::Scalar(d) = lions_apply(p.as_ref(), k, &ys, &zs, &x, &a, wv, Coefficient::RunningCost).unwrap()
        else {
            panic!("cost kernel must be a scalar")
        };
        let fd = (p.running_cost(k, &x, &lp, &a) - p.running_cost(k, &x, &lm, &a)) * 0.5 / eps;
        assert_close(fd, d, 1e-8, "running cost Lions");

        let LionsValue::Scalar(d) =
            lions_apply(p.as_ref(), k, &ys, &zs, &x, &a, wv, Coefficient::TerminalCost).unwrap()
        else {
            panic!("cost kernel must be a scalar")
        };
        let fd = (p.terminal_cost(&x, &lp) - p.terminal_cost(&x, &lm)) * 0.5 / eps;
        assert_close(fd, d, 1e-8, "terminal cost Lions");
    }
}

#[test]
fn lions_apply_rejects_mismatched_ensembles() {
    let gen = KeyedGaussian::new(4);
    let p = &problems()[0];
    let x = field(&gen, 0, 0);
    let err = lions_apply(
        p.as_ref(),
        0,
        &ensemble(&gen, 1, 3),
        &ensemble(&gen, 2, 4),
        &x,
        &x,
        x.coeffs(),
        Coefficient::Drift,
    );
    assert!(err.is_err());
}

#[test]
fn tangent_adjoint_duality_on_both_instances() {
    for p in problems() {
        let grid = p.grid();
        for seed in 0..5u64 {
            let plan = NoisePlan::new(seed, 6, M, grid.n_steps, grid.horizon).unwrap();
            let x0 = sample_initial_ensemble(seed, 6, &SpectralField::mode(M, 1), 0.4);
            let c = random_direction(
                &ControlPath::zeros(grid.n_steps, M, grid.dt(), 7.0, 1e6).unwrap(),
                seed,
                99,
            )
            .scaled(0.3);
            let beta = random_direction(&c, seed, 7);
            let bundle = solve(p.as_ref(), &c, &plan, &x0).unwrap();
            let adj = solve_adjoint(p.as_ref(), &bundle).unwrap();
            let z = solve_tangent(p.as_ref(), &bundle, &beta).unwrap();
            let d = duality_residual(p.as_ref(), &bundle, &z, &adj, &beta).unwrap();
            assert!(d.relative < 1e-11, "{} seed {seed}: {d:?}", p.name());

            let ev = cost_and_gradient(p.as_ref(), &c, &plan, &x0).unwrap();
            let via_gradient = ev.gradient.pairing(&beta);
            let via_tangent = gateaux_cost(p.as_ref(), &bundle, &z, &beta).unwrap();
            assert!(
                (via_gradient - via_tangent).abs() / (1.0 + via_tangent.abs()) < 1e-11,
                "{} seed {seed}: {via_gradient} vs {via_tangent}",
                p.name()
            );
        }
    }
}

#[test]
fn finite_differences_converge_at_second_order() {
    for p in problems() {
        let grid = p.grid();
        let plan = NoisePlan::new(3, 5, M, grid.n_steps, grid.horizon).unwrap();
        let x0 = sample_initial_ensemble(3, 5, &SpectralField::mode(M, 1), 0.4);
        let c = random_direction(
            &ControlPath::zeros(grid.n_steps, M, grid.dt(), 7.0, 1e6).unwrap(),
            3,
            50,
        )
        .scaled(0.3);
        let beta = random_direction(&c, 3, 1);
        let exact = cost_and_gradient(p.as_ref(), &c, &plan, &x0)
            .unwrap()
            .gradient
            .pairing(&beta);
        let fd = |eps: f64| {
            let jp = evaluate(p.as_ref(), &c.offset(eps, &beta), &plan, &x0).unwrap();
            let jm = evaluate(p.as_ref(), &c.offset(-eps, &beta), &plan, &x0).unwrap();
            ((jp - jm) / (2.0 * eps) - exact).abs()
        };
        let (e1, e2) = (fd(0.08), fd(0.04));
        if p.name() == "lq" {
            // the state is affine in the control and the cost quadratic, so the
            // central difference is exact up to round-off
            assert!(e1.max(e2) < 1e-9 * (1.0 + exact.abs()), "lq: {e1} {e2}");
        } else {
            assert!((3.0..5.0).contains(&(e1 / e2)), "{}: ratio {}", p.name(), e1 / e2);
        }

        let report = gradcheck(p.as_ref(), &plan, &x0, &c, 3, 1e-5).unwrap();
        assert!(report.passed(), "{}: {report:?}", p.name());
    }
}
