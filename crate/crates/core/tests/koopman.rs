mod common;

use std::sync::Arc;

use faer::Mat;
use proptest::prelude::*;
use rand::Rng;

use kedmd::dynamics::{FlowMap, VectorField};
use kedmd::interpolation::{assemble_matrix, CenterSet, KernelFactorization};
use kedmd::koopman::{Basis, FlowSamples, KoopmanModel, Variant};
use kedmd::wendland::WendlandKernel;

fn duffing_model(seed: u64, n: usize, with_y: bool) -> (KoopmanModel, Arc<CenterSet>) {
    let mut rng = common::rng(seed);
    let x = common::centers(2, common::random_points(&mut rng, n, 2, -1.0, 1.0, 0.08));
    let map = FlowMap::new(VectorField::Duffing, 0.1, 4).unwrap();
    let samples = FlowSamples::from_flow(Arc::clone(&x), &map).unwrap();
    let kernel = WendlandKernel::new(2, 1).unwrap();
    let mut model = KoopmanModel::build(kernel.clone(), samples).unwrap();
    let y = common::centers(
        2,
        common::random_points(&mut rng, n + 10, 2, -1.2, 1.2, 0.08),
    );
    if with_y {
        let fy = Arc::new(KernelFactorization::new(kernel, Arc::clone(&y)).unwrap());
        model = model.with_y(fy).unwrap();
    }
    (model, y)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (u, v)| m.max((u - v).abs()))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn mat_max_diff(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    let mut m = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            m = m.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    m
}

#[test]
fn twenty_seeded_instances_agree_when_images_are_centers() {
    for seed in 0..20 {
        common::inclusion_instance(seed).unwrap();
    }
}

#[test]
fn variants_coincide_on_y_features() {
    // S_Y f = f for f in V_Y, so both approximants are the same
    let (model, y) = duffing_model(7, 30, true);
    let fy = model.y_factorization().unwrap();
    let beta: Vec<f64> = (0..y.len()).map(|j| ((j * 7) % 5) as f64 - 2.0).collect();
    let f_y = fy.eval_centers(&beta, &y).unwrap();
    let f_a = fy.eval_coords(&beta, model.samples().images()).unwrap();
    let a = model.apply_from_flow_values(&f_a).unwrap();
    let b = model.apply_from_y_values(&f_y).unwrap();
    assert!(max_abs_diff(&a.alpha, &b.alpha) <= 1e-8 * max_abs(&a.alpha));
}

#[test]
fn variants_differ_off_y_features() {
    let (model, y) = duffing_model(8, 30, true);
    let f = |p: &[f64]| (2.0 * p[0]).sin() * (p[1] + 0.3).cos();
    let f_y: Vec<f64> = y.points().map(f).collect();
    let f_a: Vec<f64> = model.samples().images().chunks_exact(2).map(f).collect();
    let a = model.apply_from_flow_values(&f_a).unwrap();
    let b = model.apply_from_y_values(&f_y).unwrap();
    assert_eq!(a.variant, Variant::ASamples);
    assert_eq!(b.variant, Variant::YCenters);
    assert!(max_abs_diff(&a.alpha, &b.alpha) > 1e-6);
}

#[test]
fn kedmd_matrix_solves_defining_system() {
    let (model, y) = duffing_model(3, 25, true);
    let m = model.kedmd_matrix().unwrap();
    let x = model.centers();
    let kernel = model.x_factorization().kernel().clone();
    let kxx = assemble_matrix(&kernel, x, x).unwrap();
    let cross = model.cross_matrix().unwrap();
    let lhs = &kxx * &m;
    assert!(mat_max_diff(&lhs, &cross) < 1e-9);

    // M beta reproduces the Y-centers coefficients
    let f_y: Vec<f64> = y.points().map(|p| p[0] * p[1] + 1.0).collect();
    let beta = model.y_factorization().unwrap().solve(&f_y).unwrap();
    let via_matrix: Vec<f64> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * beta[j]).sum())
        .collect();
    let direct = model.apply_from_y_values(&f_y).unwrap();
    assert!(max_abs_diff(&via_matrix, &direct.alpha) <= 1e-8 * max_abs(&direct.alpha).max(1.0));
}

#[test]
fn lagrange_and_canonical_are_conjugate() {
    let (model, y) = duffing_model(4, 20, true);
    let kernel = model.x_factorization().kernel().clone();
    let x = model.centers();
    let kxx = assemble_matrix(&kernel, x, x).unwrap();
    let kyy = assemble_matrix(&kernel, &y, &y).unwrap();
    let canonical = model.matrix_rep(Basis::Canonical).unwrap();
    let lagrange = model.matrix_rep(Basis::Lagrange).unwrap();
    // K_XX M_C = M_L K_YY
    let lhs = &kxx * &canonical;
    let rhs = &lagrange * &kyy;
    assert!(mat_max_diff(&lhs, &rhs) < 1e-9);
}

#[test]
fn missing_y_is_a_state_error() {
    let (model, _) = duffing_model(5, 10, false);
    assert!(matches!(model.kedmd_matrix(), Err(kedmd::Error::State(_))));
    assert!(model.apply_from_y_values(&[0.0; 10]).is_err());
}

#[test]
fn zero_steps_and_bad_lengths_are_rejected() {
    let (model, _) = duffing_model(6, 10, false);
    let n = model.samples().len();
    assert!(model.multistep_from_flow_values(&vec![0.0; n], 0).is_err());
    assert!(model.multistep_self(&vec![0.0; n], 0).is_err());
    assert!(model.apply_from_flow_values(&vec![0.0; n + 1]).is_err());
}

#[test]
fn identity_dynamics_reproduce_the_interpolant() {
    let mut rng = common::rng(11);
    let x = common::centers(2, common::random_points(&mut rng, 30, 2, 0.0, 1.0, 0.1));
    let map = FlowMap::new(VectorField::Identity { dim: 2 }, 0.1, 1).unwrap();
    let samples = FlowSamples::from_flow(Arc::clone(&x), &map).unwrap();
    assert_eq!(samples.images(), x.coords());
    let model = KoopmanModel::build(WendlandKernel::new(2, 2).unwrap(), samples).unwrap();
    let f_x: Vec<f64> = x.points().map(|p| (p[0] - p[1]).exp()).collect();
    let once = model.apply_from_flow_values(&f_x).unwrap();
    let many = model.multistep_from_flow_values(&f_x, 5).unwrap();
    assert!(max_abs_diff(&once.alpha, &many.alpha) <= 1e-8 * max_abs(&once.alpha));
    let z = common::centers(2, common::random_points(&mut rng, 15, 2, 0.0, 1.0, 0.0));
    let p1 = model.predict(&once, &z).unwrap();
    let p5 = model.predict(&many, &z).unwrap();
    assert!(max_abs_diff(&p1, &p5) < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn inclusion_gives_equal_coefficients(seed in 100u64..u64::MAX) {
        if let Err(msg) = common::inclusion_instance(seed) {
            return Err(TestCaseError::fail(msg));
        }
    }

    #[test]
    fn multistep_is_repeated_propagation(seed in any::<u64>(), steps in 1usize..=5) {
        let (model, _) = duffing_model(seed, 20, false);
        let mut rng = common::rng(seed ^ 0x5eed);
        let n = model.samples().len();
        let f_a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let direct = model.multistep_from_flow_values(&f_a, steps).unwrap();
        prop_assert_eq!(direct.steps, steps);
        let mut alpha = model.apply_from_flow_values(&f_a).unwrap().alpha;
        for _ in 1..steps {
            alpha = model.propagate(&alpha).unwrap();
        }
        prop_assert!(max_abs_diff(&alpha, &direct.alpha) <= 1e-10 * max_abs(&alpha).max(1.0));

        // the self variant is one propagation ahead of an interpolant of f_X
        let f_x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let self_n = model.multistep_self(&f_x, steps).unwrap();
        let mut beta = model.x_factorization().solve(&f_x).unwrap();
        for _ in 0..steps {
            beta = model.propagate(&beta).unwrap();
        }
        prop_assert!(max_abs_diff(&beta, &self_n.alpha) <= 1e-10 * max_abs(&beta).max(1.0));
    }

    #[test]
    fn predictions_interpolate_at_centers(seed in any::<u64>()) {
        let (model, _) = duffing_model(seed, 25, false);
        let f_a: Vec<f64> = model.samples().images().chunks_exact(2).map(|p| p[0]).collect();
        let coeffs = model.apply_from_flow_values(&f_a).unwrap();
        let at_x = model.predict(&coeffs, model.centers()).unwrap();
        prop_assert!(max_abs_diff(&at_x, &f_a) < 1e-8);
    }
}
