use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use slitflow::flow::linspace;
use slitflow::wavefield::{evaluate_field, phase_profile, propagate_spectral, sample_on_grid, wrap_phase};
use slitflow::{Grid, GridSpec, OpticalConfig};

fn intensity(c: &OpticalConfig, x: f64, z: f64) -> f64 {
    evaluate_field(c, x, z).norm_sqr()
}

/// Vertex of the parabola through three equally spaced samples.
fn parabolic_offset(a: f64, b: f64, c: f64) -> f64 {
    0.5 * (a - c) / (a - 2.0 * b + c)
}

/// Interior local extrema of `ys` on `xs`, refined by parabolic fits.
fn extrema(xs: &[f64], ys: &[f64], maxima: bool) -> Vec<f64> {
    let dx = xs[1] - xs[0];
    (1..ys.len() - 1)
        .filter(
            |&i| {
                if maxima {
                    ys[i] > ys[i - 1] && ys[i] >= ys[i + 1]
                } else {
                    ys[i] < ys[i - 1] && ys[i] <= ys[i + 1]
                }
            },
        )
        .map(|i| xs[i] + dx * parabolic_offset(ys[i - 1], ys[i], ys[i + 1]))
        .collect()
}

/// Power spectrum `|FFT|²` of real samples, non-negative angular
/// frequencies only.
fn power_spectrum(values: &[f64], dx: f64) -> (Vec<f64>, Vec<f64>) {
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    let n = buf.len();
    let dk = 2.0 * PI / (n as f64 * dx);
    let ks = (0..n / 2).map(|m| m as f64 * dk).collect();
    let p = buf[..n / 2].iter().map(|s| s.norm_sqr()).collect();
    (ks, p)
}

#[test]
fn far_field_fringe_period_matches_initial_spectrum_beat() {
    let c = OpticalConfig::default_geometry();
    let k = c.wavenumber();

    // Oracle: the z = 0 spectrum carries |1 + e^{i k_x d}|², whose zeros are
    // Δk apart; free propagation maps that beat to a fringe period z Δk / k.
    let grid0 = Grid::symmetric(0.05, 16384).unwrap();
    let mut spec: Vec<Complex64> = grid0.points().map(|x| evaluate_field(&c, x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(spec.len()).process(&mut spec);
    let dk = 2.0 * PI / (spec.len() as f64 * grid0.dx());
    let ks: Vec<f64> = (0..spec.len() / 2).map(|m| m as f64 * dk).collect();
    let power: Vec<f64> = spec[..spec.len() / 2].iter().map(|s| s.norm_sqr()).collect();
    let limit = ks.partition_point(|&kk| kk < 3.0 * 2.0 * PI / c.slit_separation());
    let zeros = extrema(&ks[..limit], &power[..limit], false);
    assert_eq!(zeros.len(), 3, "spectral zeros {zeros:?}");
    let beat = (zeros[2] - zeros[0]) / 2.0;

    for z in [5.0, 8.2] {
        let period_oracle = z * beat / k;
        // Fringe wavenumber of the far-field intensity: the interference term
        // is a Gaussian-windowed cosine, so its spectral peak is a Gaussian
        // and a parabola through the log-spectrum locates it exactly.
        let half = 8.0 * c.beam_width(z);
        let grid = Grid::symmetric(half, 8192).unwrap();
        let ys: Vec<f64> = grid.points().map(|x| intensity(&c, x, z)).collect();
        let (ks, p) = power_spectrum(&ys, grid.dx());
        let skip = ks.partition_point(|&kk| kk < 0.5 * k * c.slit_separation() / z);
        let m = (skip..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        let offset = parabolic_offset(p[m - 1].ln(), p[m].ln(), p[m + 1].ln());
        let fringe_k = ks[m] + offset * (ks[1] - ks[0]);
        let period = 2.0 * PI / fringe_k;
        let fringe = c.fringe_spacing(z);
        assert!((period / period_oracle - 1.0).abs() < 0.01, "z={z}: {period} vs {period_oracle}");
        assert!((period / fringe - 1.0).abs() < 0.01, "z={z}: {period} vs λz/d = {fringe}");
    }
}

#[test]
fn far_field_minima_follow_two_beam_envelope() {
    // Oracle: for two beams A and B the intensity at a fringe minimum is
    // (|A| − |B|)², which is near zero for identical slits.
    let c = OpticalConfig::default_geometry();
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let upper = c.with_amplitudes(one, zero).unwrap();
    let lower = c.with_amplitudes(zero, one).unwrap();
    let z = 8.2;
    let fringe = c.fringe_spacing(z);
    let xs = linspace(-4.0 * fringe, 4.0 * fringe, 64001);
    let ys: Vec<f64> = xs.iter().map(|&x| intensity(&c, x, z)).collect();
    let peak = ys.iter().cloned().fold(0.0, f64::max);
    let minima = extrema(&xs, &ys, false);
    assert!(minima.len() >= 7);
    for x in minima {
        let a = evaluate_field(&upper, x, z).norm();
        let b = evaluate_field(&lower, x, z).norm();
        let envelope = (a - b) * (a - b);
        let got = intensity(&c, x, z);
        assert!((got - envelope).abs() < 1e-5 * peak, "x={x}: {got} vs {envelope}");
        assert!(got < 1e-3 * peak);
    }
}

#[test]
fn unwrapped_phase_matches_dense_analytic_unwrapping() {
    let c = OpticalConfig::default_geometry();
    let z = 8.2;
    let field = sample_on_grid(&c, z, &GridSpec::Auto.resolve(&c, z).unwrap()).unwrap();
    let profile = phase_profile(&field);
    let g = field.grid();
    let fringe = c.fringe_spacing(z);
    let mut checked = 0;
    for i in 0..g.len() - 1 {
        if g.x(i).abs() > 4.0 * fringe || profile.flagged[i] || profile.flagged[i + 1] {
            continue;
        }
        // Manual unwrapping of the analytic phase on 32 sub-steps per cell.
        let sub = linspace(g.x(i), g.x(i + 1), 33);
        let mut increment = 0.0;
        for w in sub.windows(2) {
            let a = evaluate_field(&c, w[0], z).arg();
            let b = evaluate_field(&c, w[1], z).arg();
            increment += wrap_phase(b - a);
        }
        let got = profile.values[i + 1] - profile.values[i];
        assert!((got - increment).abs() < 1e-9, "x={}: {got} vs {increment}", g.x(i));
        checked += 1;
    }
    assert!(checked > 1000);
}

#[test]
fn phase_slope_reverses_across_fringe_minima_of_unequal_slits() {
    // With slit amplitudes A > B the far-field phase is that of the stronger
    // beam plus arg(A + B e^{iΔ}); the extra slope has the sign of
    // B² + A B cos Δ, negative at each minimum (cos Δ = −1) and positive a
    // quarter fringe to either side (cos Δ = 0).
    let one = Complex64::new(1.0, 0.0);
    let c = OpticalConfig::default_geometry().with_amplitudes(one, Complex64::new(0.6, 0.0)).unwrap();
    let upper = c.with_amplitudes(one, Complex64::new(0.0, 0.0)).unwrap();
    let z = 8.2;
    let fringe = c.fringe_spacing(z);
    let grid = Grid::symmetric(3.0 * fringe, 6001).unwrap();
    let values = grid.points().map(|x| evaluate_field(&c, x, z)).collect();
    let field = slitflow::PlaneField::new(z, grid, values).unwrap();
    let profile = phase_profile(&field);
    assert_eq!(profile.flagged_count(), 0);
    let xs: Vec<f64> = grid.points().collect();
    let ys: Vec<f64> = xs.iter().map(|&x| intensity(&c, x, z)).collect();
    let dx = grid.dx();
    let extra = |i: usize| {
        (profile.values[i + 1] - profile.values[i - 1]) / (2.0 * dx)
            - slitflow::flow::weak_momentum_exact(&upper, xs[i], z).k_x_weak
    };
    let q = (0.25 * fringe / dx).round() as usize;
    let mut checked = 0;
    for x_min in extrema(&xs, &ys, false) {
        let i = ((x_min - xs[0]) / dx).round() as usize;
        if i < q + 1 || i + q + 1 >= xs.len() {
            continue;
        }
        assert!(extra(i) < 0.0, "x_min={x_min}");
        assert!(extra(i - q) > 0.0 && extra(i + q) > 0.0, "x_min={x_min}");
        checked += 1;
    }
    assert!(checked >= 4);
}

#[test]
fn spectral_and_analytic_fields_agree() {
    let c = OpticalConfig::default_geometry();
    let grid = GridSpec::Auto.resolve(&c, 8.0).unwrap();
    let start = sample_on_grid(&c, 0.0, &grid).unwrap();
    let p0 = c.total_power();
    assert!((start.power() / p0 - 1.0).abs() < 1e-6);
    for z in [1.0, 4.0, 8.0] {
        let spectral = propagate_spectral(&start, z, c.wavenumber()).unwrap();
        let analytic = sample_on_grid(&c, z, &grid).unwrap();
        let err = spectral.relative_l2(&analytic);
        assert!(err <= 1e-6, "z={z}: relative L2 {err:e}");
        assert!((spectral.power() / p0 - 1.0).abs() < 1e-6);
        assert!((analytic.power() / p0 - 1.0).abs() < 1e-6);
    }
}

#[test]
fn power_is_independent_of_z() {
    let c =
        OpticalConfig::default_geometry().with_amplitudes(Complex64::new(1.0, 0.0), Complex64::new(0.3, 0.7)).unwrap();
    let p0 = c.total_power();
    for z in [0.0, 0.5, 2.75, 5.0, 8.2] {
        let f = sample_on_grid(&c, z, &GridSpec::Auto.resolve(&c, z).unwrap()).unwrap();
        assert!((f.power() / p0 - 1.0).abs() < 1e-6, "z={z}");
    }
}
