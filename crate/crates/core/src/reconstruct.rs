//! Multi-plane datasets and trajectory reconstruction from momentum maps.
//!
//! A trajectory is advanced from plane to plane by the explicit rule
//! `x_{j+1} = x_j + (z_{j+1} − z_j) · k_x(x_j, z_j) / k`, with `k_x` read
//! off plane `j` by interpolation in `x`.

use rayon::prelude::*;

use crate::config::OpticalConfig;
use crate::error::{Error, Result};
use crate::flow::{
    check_strictly_increasing, slit_initial_positions, trace_bundle, weak_momentum_exact, Trajectory, TrajectoryKind,
    TrajectoryPoint, TrajectoryStatus,
};
use crate::grid::{Grid, GridSpec};
use crate::wavefield::sample_on_grid;
use crate::weakmeas::{
    simulate_on_grid, CalciteParams, MomentumProfile, NoiseStream, PhotonBudget, WeakMeasurementRecord,
};

/// Where a dataset's momenta came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataSource {
    /// Simulated calcite measurement and circular readout.
    Simulated,
    /// Exact weak values written straight into the records (oracle data).
    ExactInjected,
}

impl DataSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            DataSource::Simulated => "simulated",
            DataSource::ExactInjected => "exact",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Provenance {
    pub params: CalciteParams,
    pub photon_budget: PhotonBudget,
    pub master_seed: u64,
    pub source: DataSource,
}

/// Ordered measurement planes of one configuration.
#[derive(Clone, Debug)]
pub struct ImagingPlaneSet {
    config: OpticalConfig,
    planes: Vec<WeakMeasurementRecord>,
    provenance: Provenance,
}

impl ImagingPlaneSet {
    pub fn new(config: OpticalConfig, planes: Vec<WeakMeasurementRecord>, provenance: Provenance) -> Result<Self> {
        if planes.len() < 2 {
            return Err(Error::InvalidArgument(format!("a dataset needs at least 2 planes, got {}", planes.len())));
        }
        if let Some(w) = planes.windows(2).find(|w| !(w[1].z > w[0].z)) {
            return Err(Error::InvalidArgument(format!("plane z must increase strictly ({} then {})", w[0].z, w[1].z)));
        }
        let set = Self { config, planes, provenance };
        let (lo, hi) = set.common_interval();
        if !(hi > lo) {
            return Err(Error::InvalidArgument("plane grids share no common x-interval".into()));
        }
        Ok(set)
    }

    pub fn config(&self) -> &OpticalConfig {
        &self.config
    }

    pub fn planes(&self) -> &[WeakMeasurementRecord] {
        &self.planes
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn z_values(&self) -> Vec<f64> {
        self.planes.iter().map(|p| p.z).collect()
    }

    /// Intersection of all plane grids.
    pub fn common_interval(&self) -> (f64, f64) {
        self.planes
            .iter()
            .fold((f64::NEG_INFINITY, f64::INFINITY), |(lo, hi), p| (lo.max(p.grid.x_min()), hi.min(p.grid.x_max())))
    }

    pub fn clamped_count(&self) -> usize {
        self.planes.iter().map(|p| p.momentum.clamped_count()).sum()
    }
}

/// `n` equally spaced planes on `[z0, z1]`.
pub fn plane_positions(n: usize, z0: f64, z1: f64) -> Vec<f64> {
    crate::flow::linspace(z0, z1, n)
}

fn check_plane_list(z_list: &[f64]) -> Result<()> {
    if z_list.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 planes, got {}", z_list.len())));
    }
    check_strictly_increasing(z_list)
}

fn collect_planes(results: Vec<Result<WeakMeasurementRecord>>) -> Result<Vec<WeakMeasurementRecord>> {
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| r.map_err(|e| Error::Plane { index, source: Box::new(e) }))
        .collect()
}

/// One simulated measurement per plane on a shared grid sized for the last
/// plane. Plane `j` draws its shot noise from stream `j` of `master_seed`,
/// so the result does not depend on scheduling.
pub fn build_dataset(
    config: &OpticalConfig,
    z_list: &[f64],
    params: &CalciteParams,
    spec: &GridSpec,
    photon_budget: PhotonBudget,
    master_seed: u64,
) -> Result<ImagingPlaneSet> {
    check_plane_list(z_list)?;
    let grid = spec.resolve(config, *z_list.last().unwrap())?;
    let results: Vec<_> = z_list
        .par_iter()
        .enumerate()
        .map(|(j, &z)| {
            let noise = NoiseStream { master_seed, plane_index: j as u64 };
            simulate_on_grid(config, z, params, &grid, photon_budget, noise)
        })
        .collect();
    let planes = collect_planes(results)?;
    let provenance = Provenance { params: *params, photon_budget, master_seed, source: DataSource::Simulated };
    ImagingPlaneSet::new(*config, planes, provenance)
}

/// Dataset whose momentum maps are the exact weak values; the intensity
/// columns hold `|ψ|²/2` each. Used to separate reconstruction error from
/// measurement error.
pub fn build_exact_dataset(config: &OpticalConfig, z_list: &[f64], spec: &GridSpec) -> Result<ImagingPlaneSet> {
    check_plane_list(z_list)?;
    let grid = spec.resolve(config, *z_list.last().unwrap())?;
    let results: Vec<_> = z_list.par_iter().map(|&z| exact_record(config, z, &grid)).collect();
    let planes = collect_planes(results)?;
    let provenance = Provenance {
        params: CalciteParams::default(),
        photon_budget: PhotonBudget::Noiseless,
        master_seed: 0,
        source: DataSource::ExactInjected,
    };
    ImagingPlaneSet::new(*config, planes, provenance)
}

fn exact_record(config: &OpticalConfig, z: f64, grid: &Grid) -> Result<WeakMeasurementRecord> {
    let field = sample_on_grid(config, z, grid)?;
    let half: Vec<f64> = field.values().iter().map(|v| 0.5 * v.norm_sqr()).collect();
    let samples: Vec<_> = grid.points().map(|x| weak_momentum_exact(config, x, z)).collect();
    let momentum = MomentumProfile {
        kx: samples.iter().map(|s| if s.valid { s.k_x_weak } else { f64::NAN }).collect(),
        valid: samples.iter().map(|s| s.valid).collect(),
        clamped: vec![false; samples.len()],
    };
    Ok(WeakMeasurementRecord {
        z,
        grid: *grid,
        i_l: half.clone(),
        i_r: half,
        momentum,
        params: CalciteParams::default(),
        photon_budget: PhotonBudget::Noiseless,
        noise: None,
    })
}

/// How masked points are handled during interpolation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MaskPolicy {
    /// Interpolate linearly across masked runs shorter than
    /// [`BRIDGE_MAX_GAP`] cells; longer runs stop the trajectory.
    #[default]
    Bridge,
    /// Any masked point inside the interpolation interval stops the trajectory.
    Strict,
}

pub const BRIDGE_MAX_GAP: usize = 5;

impl std::str::FromStr for MaskPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bridge" => Ok(MaskPolicy::Bridge),
            "strict" => Ok(MaskPolicy::Strict),
            _ => Err(Error::InvalidArgument(format!("mask policy must be 'bridge' or 'strict', got '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Lookup {
    Value(f64),
    /// Beyond the outermost valid sample.
    Outside,
    /// Inside a masked region that the policy does not bridge.
    Masked,
}

/// Interpolates one plane's momentum profile in `x`.
///
/// Monotone piecewise-cubic Hermite (Fritsch-Carlson slopes) between valid
/// samples whose neighbours are valid too; linear next to masked points, at
/// the grid edges and across bridged gaps.
#[derive(Clone, Debug)]
pub struct MomentumInterpolant {
    grid: Grid,
    values: Vec<f64>,
    valid: Vec<bool>,
    slopes: Vec<Option<f64>>,
    prev_valid: Vec<Option<usize>>,
    next_valid: Vec<Option<usize>>,
    policy: MaskPolicy,
}

impl MomentumInterpolant {
    pub fn new(grid: Grid, kx: &[f64], valid: &[bool], policy: MaskPolicy) -> Self {
        let n = grid.len();
        let ok = |i: usize| valid[i] && kx[i].is_finite();
        let valid: Vec<bool> = (0..n).map(ok).collect();
        let mut prev_valid = vec![None; n];
        let mut last = None;
        for i in 0..n {
            if valid[i] {
                last = Some(i);
            }
            prev_valid[i] = last;
        }
        let mut next_valid = vec![None; n];
        let mut next = None;
        for i in (0..n).rev() {
            if valid[i] {
                next = Some(i);
            }
            next_valid[i] = next;
        }
        let dx = grid.dx();
        let slopes = (0..n)
            .map(|i| {
                if i == 0 || i + 1 == n || !(valid[i - 1] && valid[i] && valid[i + 1]) {
                    return None;
                }
                let left = (kx[i] - kx[i - 1]) / dx;
                let right = (kx[i + 1] - kx[i]) / dx;
                Some(if left * right <= 0.0 { 0.0 } else { 2.0 * left * right / (left + right) })
            })
            .collect();
        Self { grid, values: kx.to_vec(), valid, slopes, prev_valid, next_valid, policy }
    }

    pub fn from_record(record: &WeakMeasurementRecord, policy: MaskPolicy) -> Self {
        Self::new(record.grid, &record.momentum.kx, &record.momentum.valid, policy)
    }

    pub fn at(&self, x: f64) -> Lookup {
        let Some(cell) = self.grid.cell_of(x) else {
            return Lookup::Outside;
        };
        let dx = self.grid.dx();
        let x0 = self.grid.x(cell);
        if x == x0 && self.valid[cell] {
            return Lookup::Value(self.values[cell]);
        }
        let (Some(lo), Some(hi)) = (self.prev_valid[cell], self.next_valid[cell + 1]) else {
            return Lookup::Outside;
        };
        let gap = hi - lo - 1;
        let (xl, xh) = (self.grid.x(lo), self.grid.x(hi));
        let (yl, yh) = (self.values[lo], self.values[hi]);
        if gap > 0 {
            return match self.policy {
                MaskPolicy::Bridge if gap < BRIDGE_MAX_GAP => Lookup::Value(yl + (x - xl) / (xh - xl) * (yh - yl)),
                _ => Lookup::Masked,
            };
        }
        let t = (x - xl) / dx;
        match (self.slopes[lo], self.slopes[hi]) {
            (Some(ml), Some(mh)) => {
                let t2 = t * t;
                let t3 = t2 * t;
                let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
                let h10 = t3 - 2.0 * t2 + t;
                let h01 = -2.0 * t3 + 3.0 * t2;
                let h11 = t3 - t2;
                Lookup::Value(h00 * yl + h10 * dx * ml + h01 * yh + h11 * dx * mh)
            }
            _ => Lookup::Value(yl + t * (yh - yl)),
        }
    }
}

/// Linear interpolation of `I_L + I_R` at `x`, for trajectory weights.
fn intensity_at(record: &WeakMeasurementRecord, x: f64) -> f64 {
    let Some(cell) = record.grid.cell_of(x) else {
        return 0.0;
    };
    let t = (x - record.grid.x(cell)) / record.grid.dx();
    let a = record.i_l[cell] + record.i_r[cell];
    let b = record.i_l[cell + 1] + record.i_r[cell + 1];
    a + t * (b - a)
}

/// Reconstruct one trajectory per initial position (at the first plane) by
/// plane-to-plane explicit stepping with interpolated momenta.
pub fn reconstruct_trajectories(
    dataset: &ImagingPlaneSet,
    initial_positions: &[f64],
    policy: MaskPolicy,
) -> Result<Vec<Trajectory>> {
    let first = &dataset.planes[0];
    let valid_x: Vec<f64> =
        first.grid.points().zip(&first.momentum.valid).filter_map(|(x, &v)| v.then_some(x)).collect();
    let (Some(&lo), Some(&hi)) = (valid_x.first(), valid_x.last()) else {
        return Err(Error::InvalidArgument("first plane has no valid momentum data".into()));
    };
    if let Some(&x) = initial_positions.iter().find(|&&x| !(x >= lo && x <= hi)) {
        return Err(Error::InvalidArgument(format!(
            "initial position {x} lies outside the first plane's valid range [{lo}, {hi}]"
        )));
    }
    let interpolants: Vec<MomentumInterpolant> =
        dataset.planes.par_iter().map(|p| MomentumInterpolant::from_record(p, policy)).collect();
    let k = dataset.config.wavenumber();
    let (common_lo, common_hi) = dataset.common_interval();
    let planes = &dataset.planes;

    Ok(initial_positions
        .par_iter()
        .map(|&x0| {
            let mut points = vec![TrajectoryPoint { z: planes[0].z, x: x0 }];
            let mut status = TrajectoryStatus::Complete;
            let mut x = x0;
            for j in 0..planes.len() - 1 {
                let z = planes[j].z;
                let kx = match interpolants[j].at(x) {
                    Lookup::Value(v) => v,
                    Lookup::Outside => {
                        status = TrajectoryStatus::LeftDomain { z };
                        break;
                    }
                    Lookup::Masked => {
                        status = TrajectoryStatus::MissingData { z };
                        break;
                    }
                };
                x += (planes[j + 1].z - z) * kx / k;
                if !(x >= common_lo && x <= common_hi) {
                    status = TrajectoryStatus::LeftDomain { z: planes[j + 1].z };
                    break;
                }
                points.push(TrajectoryPoint { z: planes[j + 1].z, x });
            }
            Trajectory { points, kind: TrajectoryKind::Reconstructed, weight: intensity_at(first, x0), status }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryDeviation {
    pub rms: f64,
    pub max: f64,
    /// `|Δx|` at the last compared point.
    pub last: f64,
    pub compared_points: usize,
}

/// Reconstructed-vs-exact deviations for a set of trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub deviations: Vec<TrajectoryDeviation>,
    /// Adjacent-pair order inversions of the reconstructed set, summed over planes.
    pub crossing_count: usize,
    /// Fraction of plane-to-plane steps completed with valid momentum.
    pub coverage: f64,
    pub fringe_spacing_ref: f64,
}

impl ComparisonReport {
    /// Root mean square over every compared point of every trajectory.
    pub fn rms_overall(&self) -> f64 {
        let (sum, count) = self
            .deviations
            .iter()
            .fold((0.0, 0usize), |(s, c), d| (s + d.rms * d.rms * d.compared_points as f64, c + d.compared_points));
        if count == 0 {
            0.0
        } else {
            (sum / count as f64).sqrt()
        }
    }

    pub fn max_rms(&self) -> f64 {
        self.deviations.iter().map(|d| d.rms).fold(0.0, f64::max)
    }

    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().map(|d| d.max).fold(0.0, f64::max)
    }

    /// RMS across trajectories of the deviation at their last compared point.
    pub fn last_plane_rms(&self) -> f64 {
        if self.deviations.is_empty() {
            return 0.0;
        }
        (self.deviations.iter().map(|d| d.last * d.last).sum::<f64>() / self.deviations.len() as f64).sqrt()
    }
}

/// Compare reconstructed trajectories against exact ones, pairwise.
///
/// Exact trajectories are interpolated at the reconstruction planes. Each
/// pair must start at the same `x` to within half of the smaller of the
/// reference fringe spacing and the closest spacing between exact starts,
/// so that the pairing is unambiguous.
pub fn compare_trajectories(
    reconstructed: &[Trajectory],
    exact: &[Trajectory],
    fringe_spacing_ref: f64,
) -> Result<ComparisonReport> {
    if reconstructed.len() != exact.len() {
        return Err(Error::Mismatch(format!(
            "{} reconstructed vs {} exact trajectories",
            reconstructed.len(),
            exact.len()
        )));
    }
    let mut starts: Vec<f64> = exact.iter().map(|t| t.initial().x).collect();
    starts.sort_by(f64::total_cmp);
    let closest = starts.windows(2).map(|w| w[1] - w[0]).fold(fringe_spacing_ref, f64::min);
    let tol = 0.5 * closest;
    let mut deviations = Vec::with_capacity(reconstructed.len());
    for (i, (r, e)) in reconstructed.iter().zip(exact).enumerate() {
        let start = r.initial();
        match e.position_at(start.z) {
            Some(x) if (x - start.x).abs() <= tol => {}
            other => {
                return Err(Error::Mismatch(format!(
                    "trajectory {i}: reconstruction starts at x={} (z={}), exact path gives {:?}",
                    start.x, start.z, other
                )))
            }
        }
        let diffs: Vec<f64> = r.points.iter().filter_map(|p| e.position_at(p.z).map(|x| (p.x - x).abs())).collect();
        let n = diffs.len();
        let rms = (diffs.iter().map(|d| d * d).sum::<f64>() / n as f64).sqrt();
        let max = diffs.iter().cloned().fold(0.0, f64::max);
        deviations.push(TrajectoryDeviation { rms, max, last: *diffs.last().unwrap_or(&0.0), compared_points: n });
    }

    let longest = reconstructed.iter().map(|t| t.points.len()).max().unwrap_or(1);
    let steps_done: usize = reconstructed.iter().map(|t| t.points.len() - 1).sum();
    let coverage = if longest > 1 { steps_done as f64 / (reconstructed.len() * (longest - 1)) as f64 } else { 1.0 };

    Ok(ComparisonReport { deviations, crossing_count: count_crossings(reconstructed), coverage, fringe_spacing_ref })
}

/// Order inversions between neighbouring trajectories (ordered by starting
/// position), counted plane by plane.
pub fn count_crossings(trajectories: &[Trajectory]) -> usize {
    let mut order: Vec<&Trajectory> = trajectories.iter().collect();
    order.sort_by(|a, b| a.initial().x.total_cmp(&b.initial().x));
    let longest = order.iter().map(|t| t.points.len()).max().unwrap_or(0);
    let mut crossings = 0;
    for j in 0..longest {
        let present: Vec<f64> = order.iter().filter_map(|t| t.points.get(j).map(|p| p.x)).collect();
        crossings += present.windows(2).filter(|w| !(w[1] > w[0])).count();
    }
    crossings
}

/// Exact flow lines from the default slit seeding (`per_slit` positions over
/// ±2σ of each slit at `z = 0`), traced to `z_first`; returns their
/// positions there, for use as reconstruction starting points.
pub fn slit_seeded_starts(config: &OpticalConfig, per_slit: usize, z_first: f64, steps: usize) -> Result<Vec<f64>> {
    let seeds = slit_initial_positions(config, per_slit);
    if z_first == 0.0 {
        return Ok(seeds);
    }
    let bundle = trace_bundle(config, &seeds, 0.0, z_first, steps)?;
    let mut starts = Vec::with_capacity(bundle.len());
    for t in bundle {
        let t = t?;
        if t.status.is_complete() {
            starts.push(t.last().x);
        }
    }
    Ok(starts)
}

/// Reconstruction from a dataset together with exact flow lines from the
/// same starting points and their comparison.
#[derive(Clone, Debug)]
pub struct ReconstructionStudy {
    pub reconstructed: Vec<Trajectory>,
    pub exact: Vec<Trajectory>,
    pub report: ComparisonReport,
}

/// Reconstruct from `starts`, trace exact flow lines over the same z-range
/// with `exact_steps` RK4 steps, and compare them with the reference fringe
/// spacing `λ z_final / d`.
pub fn run_study(
    dataset: &ImagingPlaneSet,
    starts: &[f64],
    policy: MaskPolicy,
    exact_steps: usize,
) -> Result<ReconstructionStudy> {
    let zs = dataset.z_values();
    let (z_first, z_last) = (zs[0], *zs.last().unwrap());
    let reconstructed = reconstruct_trajectories(dataset, starts, policy)?;
    let exact = trace_bundle(dataset.config(), starts, z_first, z_last, exact_steps)?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let report = compare_trajectories(&reconstructed, &exact, dataset.config().fringe_spacing(z_last))?;
    Ok(ReconstructionStudy { reconstructed, exact, report })
}
