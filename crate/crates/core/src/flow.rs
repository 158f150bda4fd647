//! Energy-flow (Bohmian) velocity field and flow-line integration.
//!
//! For the paraxial envelope the transverse current divided by the energy
//! density is `v = Im(∂ₓψ / ψ) / k = dx/dz`; the weak value of the transverse
//! momentum post-selected on position is `k_x = k v`.

use rayon::prelude::*;

use crate::config::OpticalConfig;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::wavefield::{field_with_gradient, NODE_THRESHOLD};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VelocitySample {
    pub x: f64,
    pub z: f64,
    /// Slope `dx/dz`.
    pub v: f64,
    /// `k · v` [1/m].
    pub k_x_weak: f64,
    /// False inside node regions, where `v` and `k_x_weak` are reported as 0.
    pub valid: bool,
}

/// Exact weak value of the transverse momentum at `(x, z)`, from the
/// analytic derivative of the closed-form field.
///
/// Samples with `|ψ|²` below [`NODE_THRESHOLD`] times the plane's peak
/// intensity bound are returned with `valid = false`.
pub fn weak_momentum_exact(config: &OpticalConfig, x: f64, z: f64) -> VelocitySample {
    let (psi, grad) = field_with_gradient(config, x, z);
    let intensity = psi.norm_sqr();
    let floor = NODE_THRESHOLD * config.peak_intensity_bound(z);
    let current = (grad * psi.conj()).im;
    let k = config.wavenumber();
    let v = current / intensity / k;
    if intensity > floor && v.is_finite() {
        VelocitySample { x, z, v, k_x_weak: k * v, valid: true }
    } else {
        VelocitySample { x, z, v: 0.0, k_x_weak: 0.0, valid: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrajectoryKind {
    Exact,
    Reconstructed,
}

impl TrajectoryKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrajectoryKind::Exact => "exact",
            TrajectoryKind::Reconstructed => "reconstructed",
        }
    }
}

/// Why a trajectory stopped before its final plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TrajectoryStatus {
    Complete,
    /// A node region was entered at this `z`.
    NodeEncountered {
        z: f64,
    },
    /// The path left the x-range covered by the momentum data.
    LeftDomain {
        z: f64,
    },
    /// No valid momentum was available at this `z` (masked region).
    MissingData {
        z: f64,
    },
}

impl TrajectoryStatus {
    pub fn is_complete(&self) -> bool {
        matches!(self, TrajectoryStatus::Complete)
    }

    pub fn describe(&self) -> String {
        match self {
            TrajectoryStatus::Complete => "complete".into(),
            TrajectoryStatus::NodeEncountered { z } => format!("node at z={z}"),
            TrajectoryStatus::LeftDomain { z } => format!("left domain at z={z}"),
            TrajectoryStatus::MissingData { z } => format!("missing data at z={z}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub z: f64,
    pub x: f64,
}

/// One flow line, ordered by strictly increasing `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub kind: TrajectoryKind,
    /// Initial `|ψ(x₀, z₀)|²`.
    pub weight: f64,
    pub status: TrajectoryStatus,
}

impl Trajectory {
    pub fn initial(&self) -> TrajectoryPoint {
        self.points[0]
    }

    pub fn last(&self) -> TrajectoryPoint {
        *self.points.last().expect("trajectory has at least one point")
    }

    /// Linear interpolation of `x` at `z`; `None` outside the recorded range.
    pub fn position_at(&self, z: f64) -> Option<f64> {
        let pts = &self.points;
        if z < pts[0].z || z > self.last().z {
            return None;
        }
        let j = pts.partition_point(|p| p.z <= z);
        if j == 0 {
            return Some(pts[0].x);
        }
        let a = pts[j - 1];
        if a.z == z || j == pts.len() {
            return Some(a.x);
        }
        let b = pts[j];
        let t = (z - a.z) / (b.z - a.z);
        Some(a.x + t * (b.x - a.x))
    }
}

/// Integrate `dx/dz = v(x, z)` with classic fixed-step RK4 from `(x0, z0)` to
/// `z1`, recording every step.
///
/// Entering a node region ends the trajectory early with
/// [`TrajectoryStatus::NodeEncountered`]; a non-finite state is an error.
pub fn trace_trajectory(config: &OpticalConfig, x0: f64, z0: f64, z1: f64, steps: usize) -> Result<Trajectory> {
    if !(z0 >= 0.0 && z1 > z0 && z1.is_finite()) {
        return Err(Error::InvalidArgument(format!("need 0 <= z0 < z1, got z0={z0}, z1={z1}")));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    if !x0.is_finite() {
        return Err(Error::NonFinite { z: z0, x: x0 });
    }
    let weight = field_with_gradient(config, x0, z0).0.norm_sqr();
    let h = (z1 - z0) / steps as f64;
    let velocity = |x: f64, z: f64| {
        let s = weak_momentum_exact(config, x, z);
        s.valid.then_some(s.v)
    };

    let mut points = Vec::with_capacity(steps + 1);
    points.push(TrajectoryPoint { z: z0, x: x0 });
    let mut status = TrajectoryStatus::Complete;
    let mut x = x0;
    for i in 0..steps {
        let z = z0 + i as f64 * h;
        let stages = (|| {
            let k1 = velocity(x, z)?;
            let k2 = velocity(x + 0.5 * h * k1, z + 0.5 * h)?;
            let k3 = velocity(x + 0.5 * h * k2, z + 0.5 * h)?;
            let k4 = velocity(x + h * k3, z + h)?;
            Some((k1, k2, k3, k4))
        })();
        let Some((k1, k2, k3, k4)) = stages else {
            status = TrajectoryStatus::NodeEncountered { z };
            break;
        };
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let z_next = if i + 1 == steps { z1 } else { z0 + (i + 1) as f64 * h };
        if !x.is_finite() {
            return Err(Error::NonFinite { z: z_next, x });
        }
        points.push(TrajectoryPoint { z: z_next, x });
    }
    Ok(Trajectory { points, kind: TrajectoryKind::Exact, weight, status })
}

/// Trace one trajectory per initial position (strictly increasing), in
/// parallel. Output order follows the input; a failing trajectory does not
/// abort the others.
pub fn trace_bundle(
    config: &OpticalConfig,
    initial_positions: &[f64],
    z0: f64,
    z1: f64,
    steps: usize,
) -> Result<Vec<Result<Trajectory>>> {
    check_strictly_increasing(initial_positions)?;
    Ok(initial_positions.par_iter().map(|&x0| trace_trajectory(config, x0, z0, z1, steps)).collect())
}

pub(crate) fn check_strictly_increasing(xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument("no initial positions".into()));
    }
    if let Some(w) = xs.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(format!(
            "initial positions must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// `n` evenly spaced points on `[lo, hi]`, both ends included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// `per_slit` positions spread evenly over ±2σ around each slit centre,
/// lower slit first.
pub fn slit_initial_positions(config: &OpticalConfig, per_slit: usize) -> Vec<f64> {
    let (upper, lower) = config.slit_centers();
    let spread = 2.0 * config.slit_waist();
    let mut xs = linspace(lower - spread, lower + spread, per_slit);
    xs.extend(linspace(upper - spread, upper + spread, per_slit));
    xs
}

/// Weighted histogram of trajectory end points on `bins` equal cells over
/// `[lo, hi]`, normalised to unit total mass. End points outside the range
/// are dropped before normalisation.
pub fn endpoint_histogram(bundle: &[Trajectory], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut hist = vec![0.0; bins];
    let width = (hi - lo) / bins as f64;
    for t in bundle {
        let x = t.last().x;
        if x >= lo && x < hi {
            let b = (((x - lo) / width) as usize).min(bins - 1);
            hist[b] += t.weight;
        }
    }
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        hist.iter_mut().for_each(|h| *h /= total);
    }
    hist
}

/// Relative L2 residual of `∂_z u + ∂ₓ(u v) = 0` at plane `z`, by central
/// differences (`dz` in z, the grid spacing in x), over interior grid points
/// where `u` exceeds `min_fraction` of its maximum.
pub fn continuity_residual(config: &OpticalConfig, z: f64, grid: &Grid, dz: f64, min_fraction: f64) -> f64 {
    let k = config.wavenumber();
    let u = |x: f64, z: f64| field_with_gradient(config, x, z).0.norm_sqr();
    let flux = |x: f64| {
        let (psi, grad) = field_with_gradient(config, x, z);
        (grad * psi.conj()).im / k
    };
    let xs: Vec<f64> = grid.points().collect();
    let us: Vec<f64> = xs.iter().map(|&x| u(x, z)).collect();
    let peak = us.iter().cloned().fold(0.0, f64::max);
    let j: Vec<f64> = xs.iter().map(|&x| flux(x)).collect();
    let dx = grid.dx();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 1..xs.len() - 1 {
        if us[i] < min_fraction * peak {
            continue;
        }
        let du_dz = (u(xs[i], z + dz) - u(xs[i], z - dz)) / (2.0 * dz);
        let dj_dx = (j[i + 1] - j[i - 1]) / (2.0 * dx);
        num += (du_dz + dj_dx).powi(2);
        den += du_dz.powi(2);
    }
    (num / den).sqrt()
}
