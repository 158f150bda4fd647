use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Geometry and source parameters of the two-slit field.
///
/// The slit waist `σ` is the 1/e² *intensity* half-width at `z = 0`, so a
/// single slit centred at `c` has the initial amplitude `exp(-(x - c)² / σ²)`.
/// The upper slit (`amp_plus`) sits at `+d/2`, the lower one at `-d/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpticalConfig {
    wavelength: f64,
    wavenumber: f64,
    slit_separation: f64,
    slit_waist: f64,
    amp_plus: Complex64,
    amp_minus: Complex64,
}

impl OpticalConfig {
    pub fn new(
        wavelength: f64,
        slit_separation: f64,
        slit_waist: f64,
        amp_plus: Complex64,
        amp_minus: Complex64,
    ) -> Result<Self> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        positive("wavelength", wavelength)?;
        positive("slit separation", slit_separation)?;
        positive("slit waist", slit_waist)?;
        for (name, a) in [("amp_plus", amp_plus), ("amp_minus", amp_minus)] {
            if !(a.re.is_finite() && a.im.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} is not finite")));
            }
        }
        if amp_plus == Complex64::new(0.0, 0.0) && amp_minus == Complex64::new(0.0, 0.0) {
            return Err(Error::InvalidConfig("both slit amplitudes are zero".into()));
        }
        let config =
            Self { wavelength, wavenumber: 2.0 * PI / wavelength, slit_separation, slit_waist, amp_plus, amp_minus };
        if !(config.total_power() > 0.0) {
            return Err(Error::InvalidConfig("slit amplitudes cancel: the field carries no power".into()));
        }
        Ok(config)
    }

    /// Two identical, in-phase slits of unit amplitude.
    pub fn symmetric(wavelength: f64, slit_separation: f64, slit_waist: f64) -> Result<Self> {
        let one = Complex64::new(1.0, 0.0);
        Self::new(wavelength, slit_separation, slit_waist, one, one)
    }

    /// Default geometry: λ = 1 µm, d = 500 µm, σ = 100 µm, identical slits.
    ///
    /// These optical numbers are not taken from the experiment (which does not
    /// publish them); they are chosen so that the fringes are well resolved on
    /// a few thousand grid points over the 2.75 to 8.2 m imaging range.
    pub fn default_geometry() -> Self {
        Self::symmetric(1.0e-6, 500.0e-6, 100.0e-6).expect("default geometry is valid")
    }

    pub fn with_amplitudes(&self, amp_plus: Complex64, amp_minus: Complex64) -> Result<Self> {
        Self::new(self.wavelength, self.slit_separation, self.slit_waist, amp_plus, amp_minus)
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn wavenumber(&self) -> f64 {
        self.wavenumber
    }

    pub fn slit_separation(&self) -> f64 {
        self.slit_separation
    }

    pub fn slit_waist(&self) -> f64 {
        self.slit_waist
    }

    pub fn amp_plus(&self) -> Complex64 {
        self.amp_plus
    }

    pub fn amp_minus(&self) -> Complex64 {
        self.amp_minus
    }

    /// Slit centres `(+d/2, -d/2)`.
    pub fn slit_centers(&self) -> (f64, f64) {
        (0.5 * self.slit_separation, -0.5 * self.slit_separation)
    }

    pub fn is_mirror_symmetric(&self) -> bool {
        self.amp_plus == self.amp_minus
    }

    /// `z_R = k σ² / 2`.
    pub fn rayleigh_range(&self) -> f64 {
        0.5 * self.wavenumber * self.slit_waist * self.slit_waist
    }

    /// Intensity 1/e² half-width of one slit beam, `w(z) = σ √(1 + (z/z_R)²)`.
    pub fn beam_width(&self, z: f64) -> f64 {
        let t = z / self.rayleigh_range();
        self.slit_waist * (1.0 + t * t).sqrt()
    }

    /// `dw/dz`.
    pub fn beam_width_rate(&self, z: f64) -> f64 {
        let zr = self.rayleigh_range();
        let t = z / zr;
        self.slit_waist * t / (zr * (1.0 + t * t).sqrt())
    }

    /// Far-field fringe period `λ z / d`.
    pub fn fringe_spacing(&self, z: f64) -> f64 {
        self.wavelength * z / self.slit_separation
    }

    /// Exact `∫|ψ|² dx`, independent of `z`.
    pub fn total_power(&self) -> f64 {
        let single = self.slit_waist * (0.5 * PI).sqrt();
        let d = self.slit_separation;
        let overlap = (-d * d / (2.0 * self.slit_waist * self.slit_waist)).exp();
        let cross = (self.amp_plus * self.amp_minus.conj()).re;
        single * (self.amp_plus.norm_sqr() + self.amp_minus.norm_sqr() + 2.0 * cross * overlap)
    }

    /// Upper bound on `|ψ(x, z)|²` over all `x`; used as the peak reference
    /// for node detection when the field is evaluated pointwise.
    pub fn peak_intensity_bound(&self, z: f64) -> f64 {
        let a = self.amp_plus.norm() + self.amp_minus.norm();
        a * a * self.slit_waist / self.beam_width(z)
    }

    /// Upper bound on the power of the field outside `[lo, hi]` at plane `z`.
    pub fn power_outside(&self, z: f64, lo: f64, hi: f64) -> f64 {
        let w = self.beam_width(z);
        let scale = self.slit_waist * (0.5 * PI).sqrt();
        // Power of one normalised beam centred at c outside [lo, hi].
        let tail = |c: f64| {
            let s = std::f64::consts::SQRT_2 / w;
            0.5 * scale * (libm::erfc((hi - c) * s) + libm::erfc((c - lo) * s))
        };
        let (cp, cm) = self.slit_centers();
        let bound = self.amp_plus.norm() * tail(cp).sqrt() + self.amp_minus.norm() * tail(cm).sqrt();
        bound * bound
    }
}

impl Default for OpticalConfig {
    fn default() -> Self {
        Self::default_geometry()
    }
}
