mod common;

use std::sync::Arc;
use std::time::Instant;

use proptest::prelude::*;

use kedmd::interpolation::{interpolate, CenterSet, FactorOptions, KernelFactorization};
use kedmd::symmetric::GridAxes;
use kedmd::wendland::WendlandKernel;

#[test]
fn hundred_seeded_instances() {
    let start = Instant::now();
    for seed in 0..100 {
        common::interpolation_instance(seed).unwrap();
    }
    assert!(start.elapsed().as_secs() <= 60);
}

#[test]
fn duplicate_centers_are_rejected() {
    let err = CenterSet::new(2, vec![0.0, 0.0, 0.5, 0.5, 0.0, 0.0]).unwrap_err();
    assert!(err.to_string().contains("near-duplicates"), "{err}");
}

#[test]
fn single_center_interpolant() {
    let x = common::centers(2, vec![0.2, 0.3]);
    let kernel = WendlandKernel::new(2, 1).unwrap();
    let fact = Arc::new(KernelFactorization::new(kernel.clone(), x).unwrap());
    let s = interpolate(&fact, vec![2.0]).unwrap();
    let expected = 2.0 / kernel.diagonal();
    assert!((s.alpha()[0] - expected).abs() <= 1e-14 * expected);
    assert_eq!(s.evaluate_at(&[5.0, 5.0]).unwrap(), 0.0);
}

fn symmetric_axis(half: Vec<f64>, with_center: bool, mid: f64) -> Vec<f64> {
    let mut axis: Vec<f64> = half.iter().rev().map(|u| mid - u).collect();
    if with_center {
        axis.push(mid);
    }
    axis.extend(half.iter().map(|u| mid + u));
    axis
}

fn sorted_offsets() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, 1..4).prop_map(|v| {
        let mut acc = 0.0;
        v.into_iter()
            .map(|s| {
                acc += s;
                acc
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn interpolation_suite_holds(seed in 1000u64..u64::MAX) {
        if let Err(msg) = common::interpolation_instance(seed) {
            return Err(TestCaseError::fail(msg));
        }
    }

    #[test]
    fn symmetric_path_matches_envelope_path(
        axes in prop::collection::vec((sorted_offsets(), any::<bool>(), -1.0f64..1.0), 1..=3),
        k in 1usize..=2,
        scale in 0.3f64..2.0,
        values_seed in any::<u64>(),
    ) {
        let d = axes.len();
        let axes: Vec<Vec<f64>> = axes
            .into_iter()
            .map(|(half, c, mid)| symmetric_axis(half, c, mid))
            .collect();
        let grid = GridAxes::new(axes).unwrap();
        let x = Arc::new(CenterSet::from_grid(grid).unwrap());
        let kernel = WendlandKernel::with_scale(d, k, scale).unwrap();
        let sym = KernelFactorization::with_options(
            kernel.clone(),
            Arc::clone(&x),
            &FactorOptions::default(),
        ).unwrap();
        prop_assert!(sym.is_block_diagonalized());
        let plain = KernelFactorization::with_options(
            kernel,
            Arc::clone(&x),
            &FactorOptions { use_symmetry: false, ..FactorOptions::default() },
        ).unwrap();
        prop_assert!(!plain.is_block_diagonalized());

        let mut rng = common::rng(values_seed);
        let b = common::random_points(&mut rng, x.len(), 1, -1.0, 1.0, 0.0);
        let u = sym.solve(&b).unwrap();
        let v = plain.solve(&b).unwrap();
        let vmax = v.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        for (p, q) in u.iter().zip(&v) {
            prop_assert!((p - q).abs() <= 1e-8 * vmax.max(1.0), "{} vs {}", p, q);
        }
    }
}
