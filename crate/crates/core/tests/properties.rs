use proptest::prelude::*;

use isospec::fd::fd_eigenvalues;
use isospec::io::{read_potential_csv, write_potential_csv};
use isospec::linalg::{Mat, Vector};
use isospec::model::{SampledPotential, BUILTIN_PROBLEMS};
use isospec::ode::integrate_ivp;
use isospec::transform::{potential_q_samples, solve_kernel, Perturbation, PerturbationEntry, SelectedMode};
use isospec::verify::{commutator_diagnostic, run_pipeline, PipelineRun, ISOSPECTRAL_TOL};
use isospec::{
    builtin_problem, scan_spectrum, validate_problem, BoundaryPair, Grid, MatrixPotential, Problem, ScanOptions,
    VectorFunction,
};

fn opts(n: usize) -> ScanOptions {
    ScanOptions { grid_nodes: n, ..ScanOptions::default() }
}

fn sym2(a: f64, b: f64, c: f64) -> Mat {
    Mat::from_row_slice(2, 2, &[a, b, b, c])
}

/// `max_x ‖W(x) - W(0)‖ / x` for `W = Y1* Y2' - Y1'* Y2`, relative to the
/// size of the products when the solutions grow.
fn wronskian_drift(pot: &MatrixPotential, lambda: f64, n: usize, y1: (Mat, Mat), y2: (Mat, Mat)) -> f64 {
    let grid = Grid::new(n).unwrap();
    let a = integrate_ivp(pot, lambda, &y1.0, &y1.1, &grid).unwrap();
    let b = integrate_ivp(pot, lambda, &y2.0, &y2.1, &grid).unwrap();
    let w = |i: usize| a.y[i].transpose() * &b.yp[i] - a.yp[i].transpose() * &b.y[i];
    let w0 = w(0);
    let scale = (0..grid.len())
        .map(|i| a.y[i].amax() * b.yp[i].amax() + a.yp[i].amax() * b.y[i].amax())
        .fold(1.0, f64::max);
    (1..grid.len()).map(|i| (w(i) - &w0).amax() / grid.node(i)).fold(0.0, f64::max) / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // RK4 drift grows like h^5 λ^3, so the coarse grid is held to low λ.
    #[test]
    fn wronskian_is_conserved(
        lambda in -4.0..18.0_f64,
        s in (-2.0..2.0_f64, -2.0..2.0_f64, -2.0..2.0_f64),
        mixed in any::<bool>(),
    ) {
        let pot = if mixed {
            MatrixPotential::builtin("rank-one-mixed-2x2").unwrap()
        } else {
            MatrixPotential::ConstantDiagonal(vec![-3.0, 0.0])
        };
        let robin = || (Mat::identity(2, 2), -sym2(s.0, s.1, s.2));
        let dirichlet = || (Mat::zeros(2, 2), -Mat::identity(2, 2));
        prop_assert!(wronskian_drift(&pot, lambda, 401, robin(), dirichlet()) <= 1e-8);
        if lambda <= 4.0 {
            prop_assert!(wronskian_drift(&pot, lambda, 201, robin(), dirichlet()) <= 1e-8);
        }
    }

    #[test]
    fn solutions_are_linear_in_initial_data(
        lambda in -4.0..18.0_f64,
        m in proptest::collection::vec(-3.0..3.0_f64, 4),
    ) {
        let pot = MatrixPotential::builtin("rank-one-mixed-2x2").unwrap();
        let grid = Grid::new(201).unwrap();
        let m = Mat::from_row_slice(2, 2, &m);
        let (y0, yp0) = (Mat::identity(2, 2), sym2(0.5, -1.0, 2.0));
        let base = integrate_ivp(&pot, lambda, &y0, &yp0, &grid).unwrap();
        let mapped = integrate_ivp(&pot, lambda, &(&y0 * &m), &(&yp0 * &m), &grid).unwrap();
        for (a, b) in base.y.iter().zip(&mapped.y) {
            let expected = a * &m;
            prop_assert!((b - &expected).amax() <= 1e-10 * (1.0 + expected.amax()));
        }
    }

    #[test]
    fn commutator_is_rotation_invariant(angle in 0.0..std::f64::consts::TAU) {
        let grid = Grid::new(201).unwrap();
        let q = MatrixPotential::builtin("rank-one-mixed-2x2").unwrap();
        let (c, s) = (angle.cos(), angle.sin());
        let r = Mat::from_row_slice(2, 2, &[c, -s, s, c]);
        let rotated: Vec<Mat> = q.samples_on(&grid).iter().map(|m| r.transpose() * m * &r).collect();
        let rq = MatrixPotential::Sampled(SampledPotential::new(grid.clone(), rotated).unwrap());
        let a = commutator_diagnostic(&q, &grid).unwrap().max_norm;
        let b = commutator_diagnostic(&rq, &grid).unwrap().max_norm;
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
    }

    #[test]
    fn sampled_potential_is_symmetric_and_exact_at_nodes(
        values in proptest::collection::vec(-5.0..5.0_f64, 21 * 3),
        x in 0.0..std::f64::consts::PI,
    ) {
        let grid = Grid::new(21).unwrap();
        let samples: Vec<Mat> = values.chunks(3).map(|v| sym2(v[0], v[1], v[2])).collect();
        let pot = MatrixPotential::Sampled(SampledPotential::new(grid.clone(), samples.clone()).unwrap());
        for (i, s) in samples.iter().enumerate() {
            prop_assert_eq!(&pot.eval(grid.node(i)), s);
        }
        let m = pot.eval(x);
        prop_assert_eq!(m[(0, 1)], m[(1, 0)]);
    }

    #[test]
    fn potential_csv_round_trips(values in proptest::collection::vec(-1e3..1e3_f64, 11 * 3)) {
        let grid = Grid::new(11).unwrap();
        let samples: Vec<Mat> = values.chunks(3).map(|v| sym2(v[0], v[1], v[2])).collect();
        let mut buf = Vec::new();
        write_potential_csv(&mut buf, &grid, &samples).unwrap();
        let back = read_potential_csv(buf.as_slice(), 2).unwrap();
        prop_assert_eq!(back.samples(), samples.as_slice());
        prop_assert_eq!(back.grid(), &grid);
    }

    #[test]
    fn symmetric_pairs_validate_and_skewed_ones_do_not(
        s in (-2.0..2.0_f64, -2.0..2.0_f64, -2.0..2.0_f64),
        skew in 1e-4..1.0_f64,
    ) {
        let pot = MatrixPotential::ConstantDiagonal(vec![-3.0, 0.0]);
        let good = BoundaryPair::new(sym2(s.0, s.1, s.2), Mat::identity(2, 2));
        let p = Problem::new(pot.clone(), good.clone(), BoundaryPair::dirichlet(2)).unwrap();
        prop_assert!(validate_problem(&p).unwrap().passed());

        let mut a = good.a.clone();
        a[(0, 1)] += skew;
        let bad = Problem::new(pot, BoundaryPair::new(a, Mat::identity(2, 2)), BoundaryPair::dirichlet(2)).unwrap();
        prop_assert!(!validate_problem(&bad).unwrap().passed());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn fd_oracle_converges_to_scan(d in (-3.0..3.0_f64, -3.0..3.0_f64)) {
        let p = Problem::new(
            MatrixPotential::ConstantDiagonal(vec![d.0, d.1]),
            BoundaryPair::dirichlet(2),
            BoundaryPair::dirichlet(2),
        )
        .unwrap();
        let scan = scan_spectrum(&p, -4.0, 12.0, opts(401)).unwrap().sigma_sequence();
        let coarse = fd_eigenvalues(&p, 101).unwrap();
        let fine = fd_eigenvalues(&p, 201).unwrap();
        for (j, l) in scan.iter().take(3).enumerate() {
            let (ec, ef) = ((coarse[j] - l).abs(), (fine[j] - l).abs());
            prop_assert!(ef <= 1e-2 && ec / ef >= 3.5, "{} {} {}", l, ec, ef);
        }
    }

    #[test]
    fn transform_is_isospectral(
        which in 0usize..3,
        picks in proptest::collection::vec((0usize..3, 1usize..3, -0.25..2.0_f64), 1..3),
    ) {
        let (name, window) = [
            ("paper-example-2x2", (-5.0, 20.0)),
            ("scalar-zero", (0.5, 20.0)),
            ("neumann-left-scalar", (0.0, 16.0)),
        ][which];
        let p = builtin_problem(name).unwrap();
        let report = scan_spectrum(&p, window.0, window.1, opts(401)).unwrap();
        let mut entries: Vec<PerturbationEntry> = Vec::new();
        for (k, i, c) in picks {
            let i = i.min(report.pairs[k].multiplicity);
            if !entries.iter().any(|e| e.k == k && e.i == i) {
                entries.push(PerturbationEntry::new(k, i, c));
            }
        }
        let run = run_pipeline(&p, &entries, window, 1e-3, opts(401), None).unwrap();
        prop_assert!(run.report.isospectral.passed, "{:?}", run.report.isospectral.matched);
        prop_assert!(run.report.self_adjoint_defect <= 1e-10);
    }
}

fn rk4_error(n: usize) -> f64 {
    let lambda = 2.5_f64;
    let pot = MatrixPotential::ConstantDiagonal(vec![-3.0, 0.0]);
    let grid = Grid::new(n).unwrap();
    let path = integrate_ivp(&pot, lambda, &Mat::zeros(2, 2), &(-Mat::identity(2, 2)), &grid).unwrap();
    let mu = [(lambda + 3.0).sqrt(), lambda.sqrt()];
    path.y
        .iter()
        .zip(grid.nodes())
        .map(|(y, &x)| {
            let exact = Mat::from_diagonal(&Vector::from_vec(vec![-(mu[0] * x).sin() / mu[0], -(mu[1] * x).sin() / mu[1]]));
            (y - exact).amax()
        })
        .fold(0.0, f64::max)
}

#[test]
fn integrator_is_fourth_order() {
    let ratio = rk4_error(101) / rk4_error(201);
    assert!(ratio >= 12.0, "{ratio}");
}

#[test]
fn eigenfunctions_are_orthogonal_on_every_builtin() {
    for name in BUILTIN_PROBLEMS {
        let p = builtin_problem(name).unwrap();
        let report = scan_spectrum(&p, -5.0, 20.0, opts(401)).unwrap();
        let h = report.grid.step();
        let phis: Vec<&VectorFunction> = report.pairs.iter().flat_map(|e| e.phis.iter()).collect();
        for (a, fa) in phis.iter().enumerate() {
            for fb in &phis[a + 1..] {
                let rel = fa.inner(fb, h).abs() / (fa.norm_sq(h) * fb.norm_sq(h)).sqrt();
                assert!(rel <= 1e-8, "{name}: {rel}");
            }
        }
    }
}

#[test]
fn reflexive_isospectrality_on_every_builtin() {
    for name in BUILTIN_PROBLEMS {
        let p = builtin_problem(name).unwrap();
        let r = isospec::verify::check_isospectral(&p, &p, (-5.0, 20.0), ISOSPECTRAL_TOL, opts(201)).unwrap();
        assert!(r.passed && r.max_shift == 0.0, "{name}");
    }
}

#[test]
fn null_space_dimension_matches_rank_gap() {
    let o = opts(401);
    for name in ["paper-example-2x2", "free-2x2", "transformed-mixed-2x2"] {
        let report = scan_spectrum(&builtin_problem(name).unwrap(), -5.0, 20.0, o).unwrap();
        for e in &report.pairs {
            let n = e.relative_sigmas.len();
            let m = e.multiplicity;
            assert!(e.relative_sigmas[n - m..].iter().all(|&s| s <= o.rank_tol), "{name} {}", e.lambda);
            if m < n {
                assert!(e.relative_sigmas[n - m - 1] > o.rank_tol, "{name} {}", e.lambda);
            }
        }
    }
}

#[test]
fn scans_are_deterministic() {
    let p = builtin_problem("transformed-mixed-2x2").unwrap();
    let a = scan_spectrum(&p, -5.0, 10.0, opts(201)).unwrap().entries();
    let b = scan_spectrum(&p, -5.0, 10.0, opts(201)).unwrap().entries();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
}

fn mixed_run(n: usize) -> PipelineRun {
    let p = builtin_problem("paper-example-2x2").unwrap();
    let entry = PerturbationEntry::with_theta(1, 1, 1.0, vec![-2.0, -1.0]);
    run_pipeline(&p, &[entry], (-5.0, 10.0), ISOSPECTRAL_TOL, opts(n), None).unwrap()
}

#[test]
fn residuals_decay_at_second_order() {
    let (coarse, fine) = (mixed_run(201), mixed_run(401));
    for name in ["wave-eq", "trace", "eigen-ode[k=1,i=1]"] {
        let get = |run: &PipelineRun| run.report.residuals.iter().find(|r| r.name == name).unwrap().max_residual;
        let ratio = get(&coarse) / get(&fine);
        assert!(ratio >= 3.5, "{name}: {ratio}");
    }
}

/// `diag(-3, 0) - d/dx [2 M(x) / (1 + ∫_0^x (sin² t + sin² 2t) dt)]`
/// with `M = φ φ*`, `φ = (sin 2x, sin x)`; the derivative by a five-point stencil.
fn displayed_q(x: f64) -> Mat {
    let bracket = |t: f64| {
        let phi = Vector::from_vec(vec![(2.0 * t).sin(), t.sin()]);
        let energy = t - (2.0 * t).sin() / 4.0 - (4.0 * t).sin() / 8.0;
        &phi * phi.transpose() * (2.0 / (1.0 + energy))
    };
    let h = 1e-3;
    let d = (bracket(x - 2.0 * h) - bracket(x - h) * 8.0 + bracket(x + h) * 8.0 - bracket(x + 2.0 * h)) / (12.0 * h);
    Mat::from_diagonal(&Vector::from_vec(vec![-3.0, 0.0])) - d
}

#[test]
fn transformed_potential_matches_displayed_formula() {
    let grid = Grid::new(401).unwrap();
    let xs = grid.nodes();
    let phi = VectorFunction {
        values: xs.iter().map(|&x| Vector::from_vec(vec![(2.0 * x).sin(), x.sin()])).collect(),
        derivs: xs.iter().map(|&x| Vector::from_vec(vec![2.0 * (2.0 * x).cos(), x.cos()])).collect(),
    };
    let dd = xs.iter().map(|&x| Vector::from_vec(vec![-4.0 * (2.0 * x).sin(), -x.sin()])).collect();
    let mode = SelectedMode::from_samples(1, 1, 1.0, 1.0, Vector::from_vec(vec![-2.0, -1.0]), phi, dd, grid.step());
    let pert = Perturbation::from_modes(grid.clone(), 2, vec![mode]).unwrap();
    let kernel = solve_kernel(&pert, &grid).unwrap();
    let q = potential_q_samples(&kernel, &MatrixPotential::ConstantDiagonal(vec![-3.0, 0.0]));
    // The stencil needs x ± 2h inside the domain of the formula; it extends smoothly past [0, π].
    for (i, &x) in xs.iter().enumerate() {
        assert!((&q[i] - displayed_q(x)).amax() <= 1e-8, "x = {x}");
    }

    let run = mixed_run(401);
    for (i, &x) in xs.iter().enumerate() {
        assert!((&run.result.q[i] - displayed_q(x)).amax() <= 1e-6, "x = {x}");
    }
}
