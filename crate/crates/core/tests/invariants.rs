use lorentz_limits::billiard::{time_one, time_reversal, FlowPoint, ScattererTable};
use lorentz_limits::homogenize::{correction_finite_difference, drift_correction, Poly, PolyMatrix};
use lorentz_limits::limitlaws::{birkhoff_ensemble, iterated_sums, SymbolicDriver};
use lorentz_limits::martdecomp::{correlation_matrices, decompose, verify_martingale};
use lorentz_limits::symbolic::{BernoulliShift, WindowFunction};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn shift_strategy() -> impl Strategy<Value = BernoulliShift> {
    prop::collection::vec(0.05f64..1.0, 2..=3).prop_map(|w| {
        let total: f64 = w.iter().sum();
        BernoulliShift::new(w.iter().map(|x| x / total).collect()).unwrap()
    })
}

/// Mean-zero window function over `shift` inside `[-3, 3]`.
fn observable(shift: &BernoulliShift, lo: i64, len: i64, values: &[f64]) -> WindowFunction {
    let a = shift.alphabet_size();
    let hi = (lo + len - 1).min(3);
    let size = a.pow((hi - lo + 1) as u32);
    let table = (0..size).map(|i| values[i % values.len()] * (1.0 + i as f64).sin()).collect();
    let f = WindowFunction::new(lo, hi, a, table).unwrap();
    f.add_constant(-shift.expectation(&f))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decomposition_is_exact(
        shift in shift_strategy(),
        lo in -3i64..=3,
        len in 1i64..=4,
        values in prop::collection::vec(-2.0f64..2.0, 1..8),
    ) {
        let phi = observable(&shift, lo, len, &values);
        let r = decompose(&shift, &phi).unwrap();
        prop_assert!(r.residual_decomposition <= 1e-12);
        prop_assert!(r.residual_martingale <= 1e-12);
        prop_assert!(r.m.is_future_measurable());
        prop_assert!(verify_martingale(&shift, &r.m).unwrap() <= 1e-12);
        prop_assert!((r.sigma2_from_m - r.sigma2_green_kubo).abs() <= 1e-10);
        prop_assert!(r.sigma2_from_m >= -1e-12);
    }

    #[test]
    fn coboundaries_have_zero_variance(
        shift in shift_strategy(),
        lo in -3i64..=2,
        values in prop::collection::vec(-2.0f64..2.0, 1..8),
    ) {
        let chi = observable(&shift, lo, 1, &values);
        let phi = chi.shift(1).sub(&chi).unwrap();
        let r = decompose(&shift, &phi).unwrap();
        prop_assert!(r.sigma2_from_m.abs() <= 1e-12);
        prop_assert!(r.is_degenerate());
    }

    #[test]
    fn sigma_matrix_is_symmetric_and_psd(
        shift in shift_strategy(),
        a in prop::collection::vec(-2.0f64..2.0, 1..6),
        b in prop::collection::vec(-2.0f64..2.0, 1..6),
    ) {
        let phis = [observable(&shift, -1, 2, &a), observable(&shift, 0, 2, &b)];
        let (sigma, _) = correlation_matrices(&shift, &phis).unwrap();
        prop_assert!((&sigma - sigma.transpose()).amax() <= 1e-12);
        let eig = sigma.symmetric_eigen();
        prop_assert!(eig.eigenvalues.iter().all(|l| *l >= -1e-10));
    }

    #[test]
    fn drift_correction_matches_finite_differences(
        coeffs in prop::collection::vec(-2.0f64..2.0, 12),
        e in prop::collection::vec(-1.0f64..1.0, 4),
        x in prop::collection::vec(-1.5f64..1.5, 2),
    ) {
        // b_{ij} = c0 + c1 x0 + c2 x1^2 (varies per entry)
        let entries = (0..4)
            .map(|i| {
                let c = &coeffs[3 * i..3 * i + 3];
                Poly::new(2, vec![(c[0], vec![0, 0]), (c[1], vec![1, 0]), (c[2], vec![i as u32 % 2, 2])]).unwrap()
            })
            .collect();
        let b = PolyMatrix::new(2, 2, entries).unwrap();
        let e = DMatrix::from_row_slice(2, 2, &e);
        let drift = drift_correction(vec![Poly::zero(2), Poly::zero(2)], b.clone(), &e).unwrap();
        let fd = correction_finite_difference(&b, &e, &x, 1e-4);
        prop_assert!((drift.correction(&x) - fd).amax() <= 1e-6);
    }

    #[test]
    fn symmetrization_identity_holds_pathwise(seed in any::<u64>()) {
        let shift = BernoulliShift::new(vec![0.3, 0.7]).unwrap();
        let phis = vec![observable(&shift, -1, 2, &[1.0, -0.5]), observable(&shift, 0, 1, &[0.7])];
        let driver = SymbolicDriver::new(shift, phis).unwrap();
        let r = iterated_sums(&driver, 64, 16, seed).unwrap();
        prop_assert!(r.max_symmetrization_residual <= 1e-10);
    }

    #[test]
    fn time_reversal_inverts_the_flow(x in 0.0f64..1.0, y in 0.0f64..1.0, theta in 0.0f64..std::f64::consts::TAU) {
        let table = ScattererTable::reference();
        let p = FlowPoint::new(x, y, theta);
        prop_assume!(p.validate(&table).is_ok());
        let q = time_one(&table, &p).unwrap();
        let back = time_reversal(&time_one(&table, &time_reversal(&q)).unwrap());
        prop_assert!(back.torus_distance(&p) <= 1e-8);
    }
}

#[test]
fn ensembles_depend_only_on_seed_and_member() {
    let shift = BernoulliShift::fair(2);
    let phi = observable(&shift, -2, 3, &[1.0, 0.25, -0.75]);
    let driver = SymbolicDriver::new(shift, vec![phi]).unwrap();
    let a = birkhoff_ensemble(&driver, 100, 40, 9, &[]).unwrap();
    let b = birkhoff_ensemble(&driver, 100, 40, 9, &[]).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let c = pool.install(|| birkhoff_ensemble(&driver, 100, 40, 9, &[]).unwrap());
    let d = birkhoff_ensemble(&driver, 100, 40, 10, &[]).unwrap();
    assert_eq!(a.sums, b.sums);
    assert_eq!(a.sums, c.sums);
    assert_ne!(a.sums, d.sums);
}
