#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;
use std::sync::Arc;

use critdrift_core::field::{bump_lattice_drift, radial_drift, VectorField};
use critdrift_core::lab::linear_fit;
use critdrift_core::lorentz::ScalarField;
use critdrift_core::solver::*;
use critdrift_core::sparse::CsrMatrix;
use critdrift_core::{Domain, Grid, RadialGrid};
use nalgebra::DMatrix;

fn ball(h: f64) -> Arc<Grid> {
    Arc::new(Grid::build(Domain::ball(1.0), h).unwrap())
}

fn cube(h: f64) -> Arc<Grid> {
    Arc::new(Grid::build(Domain::unit_cube(), h).unwrap())
}

fn r2(x: &[f64; 3]) -> f64 {
    x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
}

fn smooth_drift(x: &[f64; 3]) -> [f64; 3] {
    [(PI * x[1]).sin() + 0.5, x[0] * x[2], (PI * x[0]).cos()]
}

fn sss(x: &[f64; 3]) -> f64 {
    (PI * x[0]).sin() * (PI * x[1]).sin() * (PI * x[2]).sin()
}

fn sss_grad(x: &[f64; 3]) -> [f64; 3] {
    let (s, c) = ([0, 1, 2].map(|a| (PI * x[a]).sin()), [0, 1, 2].map(|a| (PI * x[a]).cos()));
    [PI * c[0] * s[1] * s[2], PI * s[0] * c[1] * s[2], PI * s[0] * s[1] * c[2]]
}

/// `-Δu + div(u b) + c u` for the manufactured solution on the unit box.
fn manufactured_rhs(x: &[f64; 3]) -> f64 {
    let u = sss(x);
    let g = sss_grad(x);
    let b = smooth_drift(x);
    let div_b = 0.0;
    let c = 1.0 + x[1];
    3.0 * PI * PI * u + (b[0] * g[0] + b[1] * g[1] + b[2] * g[2]) + u * div_b + c * u
}

fn dense(a: &CsrMatrix) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.n(), a.n());
    for (i, j, v) in a.triplets() {
        m[(i, j)] += v;
    }
    m
}

#[test]
fn lambda_zero_is_the_laplacian() {
    let g = ball(1.0 / 8.0);
    let b = radial_drift(&g, 2.0).unwrap().field;
    let c = ScalarField::constant(&g, 3.0);
    for kind in [OperatorKind::Primal, OperatorKind::Dual] {
        let with = assemble(kind, &g, Some(&b), Some(&c), 0.0, AssemblyOptions::default()).unwrap();
        let without = assemble(kind, &g, None, None, 0.0, AssemblyOptions::default()).unwrap();
        assert_eq!(with.matrix.max_abs_diff(&without.matrix), 0.0);
        assert!(with.matrix.has_symmetric_pattern());
        assert_eq!(with.matrix.max_asymmetry(), 0.0);
    }
}

#[test]
fn rejects_bad_lambda_and_mismatched_fields() {
    let g = ball(1.0 / 8.0);
    let other = ball(1.0 / 8.0);
    let b = VectorField::zeros(&other);
    assert!(assemble(OperatorKind::Primal, &g, None, None, 1.5, AssemblyOptions::default()).is_err());
    assert!(assemble(OperatorKind::Primal, &g, Some(&b), None, 1.0, AssemblyOptions::default()).is_err());
    let neg = ScalarField::constant(&g, -1.0);
    let op = assemble(OperatorKind::Dual, &g, None, Some(&neg), 1.0, AssemblyOptions::default()).unwrap();
    assert_eq!(op.c_nonnegative, Some(false));
}

#[test]
fn laplacian_of_paraboloid_is_one_inside() {
    let h = 1.0 / 16.0;
    let g = ball(h);
    let op = assemble(OperatorKind::Primal, &g, None, None, 1.0, AssemblyOptions::default()).unwrap();
    let u = g.sample(|x| (1.0 - r2(x)) / 6.0);
    let au = op.matrix.apply(&u);
    let vol = h * h * h;
    for i in 0..g.len() {
        if !g.boundary_band()[i] {
            // quadratic: the 7-point stencil is exact away from the boundary
            assert!((au[i] / vol - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn transpose_duality_on_eight_cubed() {
    let g = cube(1.0 / 8.0);
    let b = VectorField::from_fn(&g, smooth_drift).unwrap();
    let c = ScalarField::from_fn(&g, |x| 1.0 + x[1]).unwrap();
    let p = assemble(OperatorKind::Primal, &g, Some(&b), Some(&c), 1.0, AssemblyOptions::centered()).unwrap();
    let d = assemble(OperatorKind::Dual, &g, Some(&b), Some(&c), 1.0, AssemblyOptions::centered()).unwrap();
    assert_eq!(g.len(), 512);
    assert_eq!(p.matrix.max_abs_diff(&d.matrix.transpose()), 0.0);

    let u: Vec<f64> = (0..g.len()).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect();
    let v: Vec<f64> = (0..g.len()).map(|i| ((i * 53 % 97) as f64 / 40.0) - 1.2).collect();
    let lhs: f64 = p.matrix.apply(&u).iter().zip(&v).map(|(a, b)| a * b).sum();
    let rhs: f64 = d.matrix.apply(&v).iter().zip(&u).map(|(a, b)| a * b).sum();
    assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
}

#[test]
fn blend_only_touches_high_peclet_rows() {
    let g = ball(1.0 / 16.0);
    let b = radial_drift(&g, 4.0).unwrap().field;
    let centered = assemble(OperatorKind::Dual, &g, Some(&b), None, 1.0, AssemblyOptions::centered()).unwrap();
    let blended = assemble(OperatorKind::Dual, &g, Some(&b), None, 1.0, AssemblyOptions::default()).unwrap();
    let h = g.spacing();
    let hot: Vec<bool> = b
        .components()
        .iter()
        .map(|c| c.iter().any(|v| v.abs() * h / 2.0 > 1.0))
        .collect();
    assert_eq!(blended.blended_rows, hot.iter().filter(|x| **x).count());
    assert!(blended.blended_rows > 0);
    for i in 0..g.len() {
        let same = centered.matrix.row(i) == blended.matrix.row(i);
        assert_eq!(same, !hot[i], "row {i}");
    }
}

#[test]
fn maximum_principle_at_lambda_zero() {
    let g = ball(1.0 / 16.0);
    let op = assemble(OperatorKind::Primal, &g, None, None, 0.0, AssemblyOptions::default()).unwrap();
    let f = ScalarField::from_fn(&g, |x| if x[0] > 0.2 { 1.0 + x[1].abs() } else { 0.0 }).unwrap();
    let rep = solve(&op, &WeakData::Volume(f), &SolveOptions::default()).unwrap();
    assert!(rep.solution.values().iter().all(|v| *v >= 0.0));
    for (i, row) in (0..g.len()).map(|i| (i, op.matrix.row(i))) {
        let (cols, vals) = row;
        for (j, v) in cols.iter().zip(vals) {
            if *j == i {
                assert!(*v > 0.0);
            } else {
                assert!(*v <= 0.0);
            }
        }
    }
}

#[test]
fn poisson_on_ball_converges_at_second_order() {
    let hs = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
    let mut errs = Vec::new();
    for h in hs {
        let g = ball(h);
        let op = assemble(OperatorKind::Primal, &g, None, None, 1.0, AssemblyOptions::default()).unwrap();
        let rep = solve(&op, &WeakData::Volume(ScalarField::constant(&g, 1.0)), &SolveOptions::default()).unwrap();
        assert!(rep.residual_norm <= 1e-10);
        let err = g
            .coords()
            .iter()
            .zip(rep.solution.values())
            .map(|(x, u)| (u - (1.0 - r2(x)) / 6.0).abs())
            .fold(0.0, f64::max);
        errs.push(err);
        let centre = g.cell_of(&[h / 2.0, h / 2.0, h / 2.0]);
        let i = g.node_at(centre).unwrap();
        assert!((rep.solution.values()[i] - 1.0 / 6.0).abs() < 2.0 * h * h);
    }
    let (_, slope, _) = linear_fit(&hs.map(f64::ln), &errs.iter().map(|e| e.ln()).collect::<Vec<_>>());
    assert!(slope >= 1.8, "order {slope}, errors {errs:?}");
}

fn manufactured_errors(hs: &[f64]) -> Vec<f64> {
    hs.iter()
        .map(|&h| {
            let g = cube(h);
            let b = VectorField::from_fn(&g, smooth_drift).unwrap();
            let c = ScalarField::from_fn(&g, |x| 1.0 + x[1]).unwrap();
            let f = ScalarField::from_fn(&g, manufactured_rhs).unwrap();
            let op = assemble(OperatorKind::Primal, &g, Some(&b), Some(&c), 1.0, AssemblyOptions::default()).unwrap();
            let rep = solve(&op, &WeakData::Volume(f), &SolveOptions::default()).unwrap();
            assert!(rep.residual_norm <= 1e-10);
            g.coords()
                .iter()
                .zip(rep.solution.values())
                .map(|(x, u)| (u - sss(x)).abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

#[test]
fn manufactured_solution_order() {
    let hs = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
    let errs = manufactured_errors(&hs);
    let (_, slope, _) = linear_fit(&hs.map(f64::ln), &errs.iter().map(|e| e.ln()).collect::<Vec<_>>());
    assert!(slope >= 1.8, "order {slope}, errors {errs:?}");
}

#[test]
fn divergence_data_matches_volume_data_for_smooth_g() {
    // div(x, 0, 0) = 1, so both representations describe the same right-hand side
    let g = ball(1.0 / 16.0);
    let op = assemble(OperatorKind::Primal, &g, None, None, 1.0, AssemblyOptions::default()).unwrap();
    let gx = VectorField::from_fn(&g, |x| [x[0] * (1.0 - r2(x)), 0.0, 0.0]).unwrap();
    let fx = ScalarField::from_fn(&g, |x| 1.0 - r2(x) - 2.0 * x[0] * x[0]).unwrap();
    let a = solve(&op, &WeakData::Divergence(gx), &SolveOptions::default()).unwrap().solution;
    let b = solve(&op, &WeakData::Volume(fx), &SolveOptions::default()).unwrap().solution;
    let diff = a.axpy(-1.0, &b).unwrap().max_abs();
    assert!(diff < 0.05 * b.max_abs(), "{diff} vs {}", b.max_abs());
}

#[test]
fn continuation_with_one_step_is_the_direct_solve() {
    let g = ball(1.0 / 16.0);
    let b = bump_lattice_drift(&g, 0.05, 0.125, 3.0).unwrap().field;
    let data = WeakData::Volume(ScalarField::constant(&g, 1.0));
    let opts = SolveOptions::default();
    let cont = continuation_solve(OperatorKind::Primal, &g, Some(&b), None, &data, 1, AssemblyOptions::default(), &opts)
        .unwrap();
    let op = assemble(OperatorKind::Primal, &g, Some(&b), None, 1.0, AssemblyOptions::default()).unwrap();
    let direct = solve(&op, &data, &opts).unwrap();
    assert_eq!(cont.report.solution.values(), direct.solution.values());
    assert_eq!(cont.path.len(), 1);
}

#[test]
fn continuation_is_continuous_for_bump_lattice() {
    let g = ball(1.0 / 16.0);
    let b = bump_lattice_drift(&g, 0.05, 0.125, 3.0).unwrap().field;
    let data = WeakData::Volume(ScalarField::constant(&g, 1.0));
    let opts = SolveOptions::default();
    let cont =
        continuation_solve(OperatorKind::Primal, &g, Some(&b), None, &data, 10, AssemblyOptions::default(), &opts).unwrap();
    assert_eq!(cont.path.len(), 10);
    assert!((cont.path[9].lambda - 1.0).abs() < 1e-15);
    let lap = assemble(OperatorKind::Primal, &g, None, None, 0.0, AssemblyOptions::default()).unwrap();
    let s0 = solve(&lap, &data, &opts).unwrap().solution.max_abs();
    let mut last = s0;
    for step in &cont.path {
        assert!((step.sup_norm - last).abs() <= 0.2 * last);
        last = step.sup_norm;
    }
    let op = assemble(OperatorKind::Primal, &g, Some(&b), None, 1.0, AssemblyOptions::default()).unwrap();
    let direct = solve(&op, &data, &opts).unwrap().solution;
    let diff = direct.axpy(-1.0, &cont.report.solution).unwrap().max_abs();
    assert!(diff <= 1e-8 * direct.max_abs());
}

#[test]
fn gradient_modes() {
    let g = cube(1.0 / 8.0);
    let x1 = ScalarField::from_fn(&g, |x| x[0]).unwrap();
    let free = gradient(&x1, GradientMode::Free);
    assert!(free.components().iter().all(|c| (c[0] - 1.0).abs() < 1e-12 && c[1] == 0.0 && c[2] == 0.0));
    // a quadratic vanishing on x1 = 0 and x1 = 1 is differentiated exactly in Dirichlet mode
    let q = ScalarField::from_fn(&g, |x| x[0] * (1.0 - x[0])).unwrap();
    let d = gradient(&q, GradientMode::Dirichlet);
    for (x, c) in g.coords().iter().zip(d.components()) {
        assert!((c[0] - (1.0 - 2.0 * x[0])).abs() < 1e-12);
    }
}

#[test]
fn sobolev_norm_of_linear_function() {
    let h = 1.0 / 16.0;
    let g = cube(h);
    let u = ScalarField::from_fn(&g, |x| x[0]).unwrap();
    let n = sobolev_norm(&u, 2.0, 1, GradientMode::Free).unwrap();
    // the midpoint rule integrates x1^2 to 1/3 - h^2/12
    let discrete = 1.0 / 3.0 - h * h / 12.0 + 1.0;
    assert!((n * n - discrete).abs() < 1e-10);
    assert!((n * n - 4.0 / 3.0).abs() < h * h);
    let n2 = sobolev_norm(&u, 2.0, 2, GradientMode::Free).unwrap();
    assert!((n2 * n2 - discrete).abs() < 1e-10);
    let z = ScalarField::zeros(&g);
    assert_eq!(sobolev_norm(&z, 2.0, 2, GradientMode::Dirichlet).unwrap(), 0.0);
    assert!(sobolev_norm(&u, 2.0, 3, GradientMode::Free).is_err());
}

#[test]
fn second_order_sobolev_of_quadratic() {
    let g = cube(1.0 / 16.0);
    let u = ScalarField::from_fn(&g, |x| x[0] * x[1]).unwrap();
    let n = sobolev_norm(&u, 2.0, 2, GradientMode::Free).unwrap();
    // ∫ (xy)^2 + y^2 + x^2 + 1 (the mixed second derivative appears once per multi-index)
    let exact = 1.0 / 9.0 + 2.0 / 3.0 + 1.0;
    assert!((n * n - exact).abs() < 0.01, "{}", n * n);
}

#[test]
fn w_minus_one_norm_of_constant() {
    let exact = (4.0 * PI / 45.0).sqrt();
    assert!((exact - 0.5285).abs() < 1e-4);
    let g = ball(1.0 / 32.0);
    let one = ScalarField::constant(&g, 1.0);
    let n1 = w_minus_one_p_norm(&WeakData::Volume(one.clone()), 2.0).unwrap();
    assert!((n1 / exact - 1.0).abs() < 0.02, "{n1}");
    let n2 = w_minus_one_p_norm(&WeakData::Volume(one.scaled(2.0)), 2.0).unwrap();
    assert!((n2 - 2.0 * n1).abs() <= 1e-12 * n1);
    let u = ScalarField::from_fn(&g, |x| (1.0 - r2(x)) / 6.0).unwrap();
    let s = gradient_magnitude(&u, GradientMode::Dirichlet).lp_norm(2.0);
    assert!((s / exact - 1.0).abs() < 0.02, "{s}");
    assert!(w_minus_one_p_norm(&WeakData::Volume(one), 1.0).is_err());
}

#[test]
fn w_minus_one_norm_of_divergence_data_is_lp_of_g() {
    let g = ball(1.0 / 16.0);
    let gf = VectorField::from_fn(&g, |x| [x[1], 2.0, 0.0]).unwrap();
    let n = w_minus_one_p_norm(&WeakData::Divergence(gf.clone()), 3.0).unwrap();
    assert_eq!(n, gf.magnitude().lp_norm(3.0));
}

fn interior_bumps(count: usize, seed: u64) -> Vec<([f64; 3], f64)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let c = [0, 1, 2].map(|_| rng.random_range(0.35..0.65));
            (c, rng.random_range(0.15..0.3))
        })
        .collect()
}

#[test]
fn weak_residual_of_zero_is_zero() {
    let g = ball(1.0 / 8.0);
    let phi = bump_test_function(&g, [0.1, 0.0, 0.0], 0.4).unwrap();
    let z = ScalarField::zeros(&g);
    let r = weak_residual(OperatorKind::Primal, &z, None, None, &WeakData::zero(&g), &phi).unwrap();
    assert_eq!(r, 0.0);
    let bad = ScalarField::constant(&g, 1.0);
    assert!(weak_residual(OperatorKind::Primal, &z, None, None, &WeakData::zero(&g), &bad).is_err());
}

#[test]
fn weak_residual_decays_for_manufactured_problem() {
    let hs = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
    let bumps = interior_bumps(10, 7);
    let mut worst = Vec::new();
    for &h in &hs {
        let g = cube(h);
        let b = VectorField::from_fn(&g, smooth_drift).unwrap();
        let c = ScalarField::from_fn(&g, |x| 1.0 + x[1]).unwrap();
        let data = WeakData::Volume(ScalarField::from_fn(&g, manufactured_rhs).unwrap());
        let op = assemble(OperatorKind::Primal, &g, Some(&b), Some(&c), 1.0, AssemblyOptions::default()).unwrap();
        let u = solve(&op, &data, &SolveOptions::default()).unwrap().solution;
        let mut w: f64 = 0.0;
        for (x0, rho) in &bumps {
            let phi = bump_test_function(&g, *x0, *rho).unwrap();
            let r = weak_residual(OperatorKind::Primal, &u, Some(&b), Some(&c), &data, &phi).unwrap();
            let scale = test_function_scale(&phi);
            assert!(r.abs() <= 10.0 * h * scale * data_scale(&data), "{r}");
            w = w.max(r.abs() / scale);
        }
        worst.push(w);
    }
    let (_, slope, _) = linear_fit(&hs.map(f64::ln), &worst.iter().map(|e| e.ln()).collect::<Vec<_>>());
    assert!(slope >= 0.9, "order {slope} {worst:?}");
}

fn data_scale(d: &WeakData) -> f64 {
    match d {
        WeakData::Volume(f) => f.max_abs(),
        WeakData::Divergence(g) => g.magnitude().max_abs(),
    }
}

#[test]
fn dual_very_weak_and_weak_forms_agree_on_smooth_solution() {
    let g = cube(1.0 / 32.0);
    let b = VectorField::from_fn(&g, smooth_drift).unwrap();
    // dual: -Δv - b·∇v + v = g with v = sss
    let rhs = ScalarField::from_fn(&g, |x| {
        let gr = sss_grad(x);
        let bb = smooth_drift(x);
        3.0 * PI * PI * sss(x) - (bb[0] * gr[0] + bb[1] * gr[1] + bb[2] * gr[2]) + sss(x)
    })
    .unwrap();
    let c = ScalarField::constant(&g, 1.0);
    let data = WeakData::Volume(rhs);
    let op = assemble(OperatorKind::Dual, &g, Some(&b), Some(&c), 1.0, AssemblyOptions::default()).unwrap();
    let v = solve(&op, &data, &SolveOptions::default()).unwrap().solution;
    let phi = bump_test_function(&g, [0.45, 0.5, 0.55], 0.3).unwrap();
    let scale = test_function_scale(&phi) * data_scale(&data);
    let r1 = weak_residual(OperatorKind::Dual, &v, Some(&b), Some(&c), &data, &phi).unwrap();
    let r2 = very_weak_residual(OperatorKind::Dual, &v, Some(&b), Some(&c), &data, &phi).unwrap();
    assert!(r1.abs() < 1e-2 * scale, "{r1} {scale}");
    assert!(r2.abs() < 1e-2 * scale, "{r2} {scale}");
}

fn radial(r0: f64, h: f64) -> Arc<RadialGrid> {
    Arc::new(RadialGrid::on_interval(r0, 1.0, h, 3).unwrap())
}

#[test]
fn radial_laplacian_solves_constant_source() {
    let g = radial(0.0, 1.0 / 200.0);
    let op = assemble_radial(OperatorKind::Dual, &g, 0.0, 0.0, 1.0).unwrap();
    let v = op.solve(&vec![1.0; g.len()]).unwrap();
    for (r, v) in g.nodes().iter().zip(&v) {
        assert!((v - (1.0 - r * r) / 6.0).abs() < 1e-4);
    }
}

#[test]
fn radial_primal_is_transposed_dual() {
    let g = radial(0.01, 0.02);
    let p = assemble_radial(OperatorKind::Primal, &g, 2.0, 0.5, 1.0).unwrap();
    let d = assemble_radial(OperatorKind::Dual, &g, 2.0, 0.5, 1.0).unwrap();
    assert_eq!(p.matrix.max_abs_diff(&d.matrix.transpose()), 0.0);
    assert_eq!(p.laplacian.max_asymmetry(), 0.0);
}

#[test]
fn radial_sigma_matches_dense_svd() {
    for m in [0.0, 0.4, 2.0] {
        let h = 0.05;
        let g = radial(h / 2.0, h);
        let op = assemble_radial(OperatorKind::Dual, &g, m, 0.0, 1.0).unwrap();
        let est = op.singular_values(2000).unwrap();
        let a = dense(&op.matrix);
        let k = dense(&op.laplacian);
        let l = k.clone().cholesky().unwrap().l();
        let li = l.clone().try_inverse().unwrap();
        // K = L L^T; σ(K^{-1/2} A K^{-1/2}) = σ(L^{-1} A L^{-T})
        let s = (&li * &a * li.transpose()).singular_values();
        let smin = s.iter().cloned().fold(f64::INFINITY, f64::min);
        let smax = s.iter().cloned().fold(0.0, f64::max);
        assert!((est.sigma_min / smin - 1.0).abs() < 1e-6, "M={m}: {} vs {smin}", est.sigma_min);
        assert!(est.sigma_max <= smax * (1.0 + 1e-12) && est.sigma_max > 0.98 * smax, "M={m}: {} vs {smax}", est.sigma_max);
    }
}

#[test]
fn radial_sigma_below_and_above_threshold() {
    let mut low = Vec::new();
    let mut high = Vec::new();
    let mut mismatch = 0.0;
    for k in 0..5 {
        let h = 0.016 / 2f64.powi(k);
        let g = radial(h / 2.0, h);
        let lo = assemble_radial(OperatorKind::Dual, &g, 0.4, 0.0, 1.0).unwrap().singular_values(500).unwrap();
        let hi = assemble_radial(OperatorKind::Dual, &g, 2.0, 0.0, 1.0).unwrap().singular_values(500).unwrap();
        low.push(lo.sigma_min);
        high.push(hi.sigma_min);
        let e: Vec<f64> = g.nodes().iter().map(|r| r - 1.0).collect();
        mismatch = profile_mismatch(&hi.vector, &e, g.weights());
    }
    assert!(low.iter().all(|s| *s > 0.2), "{low:?}");
    assert!(high.windows(2).all(|w| w[1] < w[0]), "{high:?}");
    assert!(high[4] < 0.05 * low[4]);
    assert!(mismatch < 0.05, "{mismatch}");
}

#[test]
fn radial_lp_of_profile() {
    let g = radial(0.0, 1e-3);
    let one = vec![1.0; g.len()];
    assert!((radial_lp(&g, &one, 2.0) - (4.0 * PI / 3.0).sqrt()).abs() < 1e-5);
}

#[test]
fn continuation_tracks_sigma_and_signals_near_singularity() {
    let g = ball(1.0 / 8.0);
    let b = radial_drift(&g, 2.0).unwrap().field;
    let data = WeakData::Volume(ScalarField::constant(&g, 1.0));
    let opts = SolveOptions::default().with_sigma();
    let cont =
        continuation_solve(OperatorKind::Primal, &g, Some(&b), None, &data, 4, AssemblyOptions::default(), &opts).unwrap();
    let sig: Vec<f64> = cont.path.iter().map(|s| s.sigma_min.unwrap()).collect();
    assert!(sig.windows(2).all(|w| w[1] < w[0]), "{sig:?}");
    // a threshold above the measured ratio turns the same sweep into a NearSingular signal
    let strict = SolveOptions { near_singular: 0.1, ..opts };
    match continuation_solve(OperatorKind::Primal, &g, Some(&b), None, &data, 4, AssemblyOptions::default(), &strict) {
        Err(critdrift_core::Error::NearSingular { lambda, sigma, norm }) => {
            assert!(lambda > 0.25 && lambda <= 1.0);
            assert!(sigma < 0.1 * norm);
        }
        other => panic!("expected NearSingular, got {:?}", other.map(|r| r.path)),
    }
}

#[test]
fn radial_m2_sigma_shrinks_with_refinement_on_full_grid_too() {
    let mut s = Vec::new();
    for h in [1.0 / 8.0, 1.0 / 16.0] {
        let g = ball(h);
        let b = radial_drift(&g, 2.0).unwrap().field;
        let op = assemble(OperatorKind::Dual, &g, Some(&b), None, 1.0, AssemblyOptions::default()).unwrap();
        s.push(energy_singular_values(&op.matrix, &op.laplacian, 300, 1e-8).unwrap().sigma_min);
    }
    assert!(s[1] < 0.5 * s[0], "{s:?}");
}
