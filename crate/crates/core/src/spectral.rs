//! Diagonal multipliers in the transverse-momentum domain.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Spectral power beyond this fraction of the Nyquist wavenumber counts as
/// "near Nyquist" for the aliasing diagnostic.
pub const ALIAS_BAND: f64 = 0.8;

/// Maximum tolerated fraction of spectral power in the near-Nyquist band.
pub const ALIAS_THRESHOLD: f64 = 1e-8;

fn forward(values: &[Complex64]) -> Vec<Complex64> {
    let mut buf = values.to_vec();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

fn inverse(mut spectrum: Vec<Complex64>) -> Vec<Complex64> {
    let n = spectrum.len();
    FftPlanner::new().plan_fft_inverse(n).process(&mut spectrum);
    let scale = 1.0 / n as f64;
    spectrum.iter_mut().for_each(|v| *v *= scale);
    spectrum
}

/// Fraction of the spectral power at `|k| ≥ ALIAS_BAND · k_Nyquist`.
pub fn near_nyquist_fraction(spectrum: &[Complex64], grid: &Grid) -> f64 {
    let cutoff = ALIAS_BAND * grid.nyquist();
    let mut total = 0.0;
    let mut edge = 0.0;
    for (v, k) in spectrum.iter().zip(grid.wavenumbers()) {
        let p = v.norm_sqr();
        total += p;
        if k.abs() >= cutoff {
            edge += p;
        }
    }
    if total > 0.0 {
        edge / total
    } else {
        0.0
    }
}

/// Apply the diagonal multiplier `m(k)` to `values` sampled on `grid`.
///
/// The multiplier receives the bin wavenumber. For even `n` the Nyquist bin
/// stands for both `±k_N` and is given the mean of `m(k_N)` and `m(-k_N)`,
/// which keeps mirror-symmetric inputs mirror-symmetric.
pub fn apply_multiplier<F>(values: &[Complex64], grid: &Grid, multiplier: F) -> Result<Vec<Complex64>>
where
    F: Fn(f64) -> Complex64,
{
    debug_assert_eq!(values.len(), grid.len());
    let mut spectrum = forward(values);
    let fraction = near_nyquist_fraction(&spectrum, grid);
    if fraction > ALIAS_THRESHOLD {
        return Err(Error::Aliasing { fraction });
    }
    let n = values.len();
    for (m, (v, k)) in spectrum.iter_mut().zip(grid.wavenumbers()).enumerate() {
        let factor = if n.is_multiple_of(2) && m == n / 2 {
            0.5 * (multiplier(grid.nyquist()) + multiplier(-grid.nyquist()))
        } else {
            multiplier(k)
        };
        *v *= factor;
    }
    Ok(inverse(spectrum))
}
