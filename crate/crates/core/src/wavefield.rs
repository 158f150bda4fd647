//! The two-Gaussian-slit scalar field and its free paraxial evolution.
//!
//! The propagation distance `z` plays the role of time: the envelope obeys
//! `∂_z ψ = (i / 2k) ∂ₓ² ψ`, whose transfer function in the transverse
//! momentum domain is `exp(-i k_x² Δz / 2k)`.
//!
//! One slit with 1/e² intensity half-width `σ`, centred at `c`, evolves as
//!
//! ```text
//! G(x; z) = √(σ² / s(z)) · exp(-(x - c)² / s(z)),   s(z) = σ² + 2iz/k
//! ```
//!
//! which carries both the width law `w(z) = σ √(1 + (z/z_R)²)` with
//! `z_R = kσ²/2` and the Gouy/curvature phase. The spectral propagator and
//! the calcite multiplier use the same transform convention (`e^{-ikx}`
//! forward), so both routes agree to round-off on resolved grids.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::config::OpticalConfig;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridSpec};
use crate::spectral;

/// Points with `|ψ|²` below this fraction of the peak intensity are nodes.
pub const NODE_THRESHOLD: f64 = 1e-12;

/// Largest tolerated fraction of the beam power outside a sampled grid.
pub const TRUNCATION_THRESHOLD: f64 = 1e-6;

/// Complex amplitude sampled on a uniform grid at distance `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneField {
    z: f64,
    grid: Grid,
    values: Vec<Complex64>,
}

impl PlaneField {
    pub fn new(z: f64, grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!("{} values for a {}-point grid", values.len(), grid.len())));
        }
        if !z.is_finite() || values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidArgument("plane field contains non-finite data".into()));
        }
        Ok(Self { z, grid, values })
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Trapezoid `∫|ψ|² dx`.
    pub fn power(&self) -> f64 {
        self.grid.integrate(&energy_density(self))
    }

    /// `‖self − other‖₂ / ‖other‖₂` over the shared grid.
    pub fn relative_l2(&self, other: &PlaneField) -> f64 {
        let num: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = other.values.iter().map(|b| b.norm_sqr()).sum();
        (num / den).sqrt()
    }
}

fn complex_width(config: &OpticalConfig, z: f64) -> Complex64 {
    let s2 = config.slit_waist() * config.slit_waist();
    Complex64::new(s2, 2.0 * z / config.wavenumber())
}

/// Returns `(ψ, ∂ₓψ)` at `(x, z)` from the closed form.
pub fn field_with_gradient(config: &OpticalConfig, x: f64, z: f64) -> (Complex64, Complex64) {
    let s = complex_width(config, z);
    let inv_s = s.inv();
    let prefactor = (Complex64::new(config.slit_waist() * config.slit_waist(), 0.0) * inv_s).sqrt();
    let (cp, cm) = config.slit_centers();
    let mut psi = Complex64::new(0.0, 0.0);
    let mut grad = Complex64::new(0.0, 0.0);
    for (amp, c) in [(config.amp_plus(), cp), (config.amp_minus(), cm)] {
        if amp == Complex64::new(0.0, 0.0) {
            continue;
        }
        let u = x - c;
        let g = amp * prefactor * (-(u * u) * inv_s).exp();
        psi += g;
        grad += g * (-2.0 * u) * inv_s;
    }
    (psi, grad)
}

/// `ψ(x, z) = a₊ G(x − d/2; z) + a₋ G(x + d/2; z)`.
pub fn evaluate_field(config: &OpticalConfig, x: f64, z: f64) -> Complex64 {
    field_with_gradient(config, x, z).0
}

/// Sample the closed-form field on an explicit grid.
///
/// Fails with [`Error::GridTooSmall`] when more than
/// [`TRUNCATION_THRESHOLD`] of the beam power falls outside the grid.
pub fn sample_on_grid(config: &OpticalConfig, z: f64, grid: &Grid) -> Result<PlaneField> {
    if !(z >= 0.0 && z.is_finite()) {
        return Err(Error::InvalidArgument(format!("plane distance must be finite and >= 0, got {z}")));
    }
    let fraction = config.power_outside(z, grid.x_min(), grid.x_max()) / config.total_power();
    if fraction > TRUNCATION_THRESHOLD {
        return Err(Error::GridTooSmall { fraction });
    }
    let values = grid.points().map(|x| evaluate_field(config, x, z)).collect();
    PlaneField::new(z, *grid, values)
}

pub fn sample_plane(config: &OpticalConfig, z: f64, spec: &GridSpec) -> Result<PlaneField> {
    let grid = spec.resolve(config, z)?;
    sample_on_grid(config, z, &grid)
}

/// Free paraxial propagation by `dz` with the exact transfer function.
pub fn propagate_spectral(field: &PlaneField, dz: f64, wavenumber: f64) -> Result<PlaneField> {
    if !(dz >= 0.0 && dz.is_finite()) {
        return Err(Error::InvalidArgument(format!("propagation step must be finite and >= 0, got {dz}")));
    }
    if dz == 0.0 {
        return Ok(field.clone());
    }
    let phase_rate = -dz / (2.0 * wavenumber);
    let values =
        spectral::apply_multiplier(&field.values, &field.grid, |k| Complex64::from_polar(1.0, phase_rate * k * k))?;
    PlaneField::new(field.z + dz, field.grid, values)
}

/// `u(x_i) = |ψ(x_i)|²`.
pub fn energy_density(field: &PlaneField) -> Vec<f64> {
    field.values.iter().map(|v| v.norm_sqr()).collect()
}

/// Unwrapped phase along `x` with per-point node flags.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseProfile {
    pub values: Vec<f64>,
    /// Set where `|ψ|²` is below the node threshold or where the phase turns
    /// by more than π/2 within one grid step.
    pub flagged: Vec<bool>,
}

impl PhaseProfile {
    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().filter(|&&f| f).count()
    }
}

pub fn phase_profile(field: &PlaneField) -> PhaseProfile {
    let intensity = energy_density(field);
    let peak = intensity.iter().cloned().fold(0.0, f64::max);
    let floor = NODE_THRESHOLD * peak;
    let n = field.values.len();
    let mut values = Vec::with_capacity(n);
    let mut flagged = Vec::with_capacity(n);
    let mut prev_arg = field.values[0].arg();
    values.push(prev_arg);
    flagged.push(!(intensity[0] > floor));
    for i in 1..n {
        let arg = field.values[i].arg();
        let step = wrap_phase(arg - prev_arg);
        values.push(values[i - 1] + step);
        flagged.push(!(intensity[i] > floor) || step.abs() > 0.5 * PI);
        prev_arg = arg;
    }
    PhaseProfile { values, flagged }
}

/// Wrap into `(-π, π]`.
pub fn wrap_phase(p: f64) -> f64 {
    let w = p - 2.0 * PI * (p / (2.0 * PI)).round();
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}
