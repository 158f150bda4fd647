use std::f64::consts::PI;

use crate::config::OpticalConfig;
use crate::error::{Error, Result};

/// Uniform transverse grid `x_i = x_min + i Δx`, `i = 0..n`.
///
/// Nodes are computed from the grid centre, so a grid centred on zero is
/// mirror symmetric bit for bit: `x(n - 1 - i) == -x(i)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    center: f64,
    dx: f64,
    n: usize,
}

impl Grid {
    pub fn new(x_min: f64, dx: f64, n: usize) -> Result<Self> {
        if !(dx.is_finite() && dx > 0.0) {
            return Err(Error::InvalidGrid(format!("spacing must be finite and > 0, got {dx}")));
        }
        if !x_min.is_finite() {
            return Err(Error::InvalidGrid("x_min is not finite".into()));
        }
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {n}")));
        }
        Ok(Self { center: x_min + 0.5 * (n - 1) as f64 * dx, dx, n })
    }

    /// Grid of `n` points spaced `dx` around `center`.
    pub fn centered(center: f64, dx: f64, n: usize) -> Result<Self> {
        let g = Self::new(0.0, dx, n)?;
        if !center.is_finite() {
            return Err(Error::InvalidGrid("grid centre is not finite".into()));
        }
        Ok(Self { center, ..g })
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    /// Grid on `[-halfwidth, halfwidth]` with both end points included.
    pub fn symmetric(halfwidth: f64, n: usize) -> Result<Self> {
        if !(halfwidth.is_finite() && halfwidth > 0.0) {
            return Err(Error::InvalidGrid(format!("halfwidth must be finite and > 0, got {halfwidth}")));
        }
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {n}")));
        }
        Ok(Self { center: 0.0, dx: 2.0 * halfwidth / (n - 1) as f64, n })
    }

    pub fn x_min(&self) -> f64 {
        self.x(0)
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x(&self, i: usize) -> f64 {
        self.center + (2.0 * i as f64 - (self.n - 1) as f64) * (0.5 * self.dx)
    }

    /// Index of the cell `[x_i, x_{i+1})` holding `x`, if inside the grid.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        let t = (x - self.x_min()) / self.dx;
        if !(t >= 0.0) || t > (self.n - 1) as f64 {
            return None;
        }
        Some((t.floor() as usize).min(self.n - 2))
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.n - 1)
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.x(i))
    }

    /// Angular wavenumbers of the DFT bins in transform order
    /// (`0, 1, …, n/2 - 1, -n/2, …, -1` times `2π / (n Δx)`).
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n as isize;
        let dk = 2.0 * PI / (self.n as f64 * self.dx);
        (0..n).map(|m| if m < (n + 1) / 2 { m } else { m - n }).map(|m| m as f64 * dk).collect()
    }

    pub fn nyquist(&self) -> f64 {
        PI / self.dx
    }

    /// Trapezoid rule over the grid.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.n);
        let inner: f64 = values[1..self.n - 1].iter().sum();
        self.dx * (inner + 0.5 * (values[0] + values[self.n - 1]))
    }
}

/// How to lay out the transverse grid for a plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GridSpec {
    /// Extent `d + 8 w(z)` around the axis; spacing `πσ/9` so the slit
    /// spectrum is negligible near the Nyquist wavenumber; `n` rounded up to
    /// a power of two, at least 4096.
    Auto,
    /// Symmetric grid of `n` points on `[-halfwidth, halfwidth]`.
    Fixed { n: usize, halfwidth: f64 },
}

/// Smallest auto grid size.
pub const AUTO_MIN_POINTS: usize = 4096;

impl GridSpec {
    /// Resolve to a concrete grid able to hold the beam at plane `z`.
    pub fn resolve(&self, config: &OpticalConfig, z: f64) -> Result<Grid> {
        match *self {
            GridSpec::Fixed { n, halfwidth } => Grid::symmetric(halfwidth, n),
            GridSpec::Auto => {
                let halfwidth = 0.5 * config.slit_separation() + 4.0 * config.beam_width(z);
                let dx_max = PI * config.slit_waist() / 9.0;
                let needed = (2.0 * halfwidth / dx_max).ceil() as usize + 1;
                let n = needed.max(AUTO_MIN_POINTS).next_power_of_two();
                Grid::symmetric(halfwidth, n)
            }
        }
    }
}
