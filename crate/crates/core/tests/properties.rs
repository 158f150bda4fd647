use num_complex::Complex64;
use proptest::prelude::*;
use slitflow::flow::{trace_bundle, weak_momentum_exact};
use slitflow::wavefield::{evaluate_field, sample_on_grid};
use slitflow::weakmeas::{apply_calcite, circular_intensities, extract_momentum, prepare_diagonal, CalciteParams};
use slitflow::{Grid, OpticalConfig, PlaneField};

fn amplitude() -> impl Strategy<Value = Complex64> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn field_is_linear_in_slit_amplitudes(a in amplitude(), b in amplitude(), x in -5e-3..5e-3f64, z in 0.0..8.2f64) {
        prop_assume!(a.norm() > 1e-3 || b.norm() > 1e-3);
        let base = OpticalConfig::default_geometry();
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let both = base.with_amplitudes(a, b).unwrap();
        let upper = base.with_amplitudes(one, zero).unwrap();
        let lower = base.with_amplitudes(zero, one).unwrap();
        let sum = a * evaluate_field(&upper, x, z) + b * evaluate_field(&lower, x, z);
        let scale = (a.norm() + b.norm()) * evaluate_field(&upper, x, z).norm().max(evaluate_field(&lower, x, z).norm());
        prop_assert!((evaluate_field(&both, x, z) - sum).norm() <= 1e-13 * scale + 1e-300);
    }

    #[test]
    fn identical_slits_give_even_fields(a in amplitude(), x in 0.0..5e-3f64, z in 0.0..8.2f64) {
        prop_assume!(a.norm() > 1e-3);
        let c = OpticalConfig::default_geometry().with_amplitudes(a, a).unwrap();
        let (p, m) = (evaluate_field(&c, x, z), evaluate_field(&c, -x, z));
        prop_assert!((p - m).norm() <= 1e-15 * p.norm());
    }

    #[test]
    fn velocity_times_k_is_weak_momentum(x in -5e-2..5e-2f64, z in 0.0..8.2f64) {
        let c = OpticalConfig::default_geometry();
        let s = weak_momentum_exact(&c, x, z);
        if s.valid {
            prop_assert_eq!(c.wavenumber() * s.v, s.k_x_weak);
        } else {
            prop_assert_eq!(s.k_x_weak, 0.0);
        }
    }

    #[test]
    fn calcite_is_unitary(zeta in -1.0..1.0f64, phi0 in -1.0..1.0f64, z in 0.0..0.1f64) {
        let c = OpticalConfig::default_geometry();
        let field = sample_on_grid(&c, z, &Grid::symmetric(3e-3, 1024).unwrap()).unwrap();
        let pair = apply_calcite(&prepare_diagonal(&field), &CalciteParams::new(zeta, phi0), c.wavenumber()).unwrap();
        prop_assert!((pair.power() / field.power() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plane_waves_are_inverted_exactly(m in -400i32..400, zeta in 0.01..60.0f64, phi0 in -0.5..0.5f64) {
        let c = OpticalConfig::default_geometry();
        let k = c.wavenumber();
        let grid = Grid::new(0.0, 1e-5, 1024).unwrap();
        let q = m as f64 * 2.0 * std::f64::consts::PI / (1024.0 * 1e-5);
        let params = CalciteParams::new(zeta, phi0);
        prop_assume!(params.phase(q, k).abs() < 1.5);
        let field = PlaneField::new(0.0, grid, grid.points().map(|x| Complex64::from_polar(1.0, q * x)).collect()).unwrap();
        let (i_r, i_l) = circular_intensities(&apply_calcite(&prepare_diagonal(&field), &params, k).unwrap());
        let p = extract_momentum(&i_r, &i_l, &params, k).unwrap();
        for &kx in &p.kx {
            prop_assert!((kx - q).abs() <= 1e-9 * q.abs() + 1e-14 * k / zeta);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn flow_lines_never_cross(mut starts in prop::collection::vec(-5e-4..5e-4f64, 2..6), z1 in 0.05..1.0f64) {
        starts.sort_by(f64::total_cmp);
        starts.dedup_by(|a, b| (*a - *b).abs() < 1e-7);
        prop_assume!(starts.len() >= 2);
        let c = OpticalConfig::default_geometry();
        let bundle: Vec<_> = trace_bundle(&c, &starts, 0.0, z1, 2000).unwrap().into_iter().map(|t| t.unwrap()).collect();
        let common = bundle.iter().map(|t| t.points.len()).min().unwrap();
        for step in 0..common {
            for pair in bundle.windows(2) {
                prop_assert!(pair[1].points[step].x > pair[0].points[step].x);
            }
        }
    }
}
