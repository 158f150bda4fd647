//! The `field`, `trace`, `measure`, `reconstruct` and `all` experiments.

use std::path::Path;

use rayon::prelude::*;
use slitflow::flow::{linspace, slit_initial_positions, trace_bundle, Trajectory, TrajectoryKind};
use slitflow::reconstruct::{build_dataset, run_study, slit_seeded_starts, MaskPolicy};
use slitflow::wavefield::{energy_density, evaluate_field, phase_profile, sample_plane, wrap_phase};
use slitflow::weakmeas::{CalciteParams, PhotonBudget};

use crate::cli::{FieldOpts, MeasureOpts, PolicyArg, ReconstructOpts, TraceOpts};
use crate::config::{PlaneSpec, RunConfig};
use crate::error::{HarnessError, Result};
use crate::io::{self, KeyValues};
use crate::manifest::{list_files, RunManifest, Timings, MANIFEST_NAME};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Verbosity {
    Quiet,
    Normal,
    Verbose,
}

/// Shared settings of one invocation.
#[derive(Debug)]
pub struct Context {
    pub config: RunConfig,
    pub config_hash: String,
    pub seed: u64,
    pub timings: bool,
    pub verbosity: Verbosity,
}

impl Context {
    pub fn new(config: RunConfig, seed: u64) -> Self {
        let config_hash = config.hash();
        Self { config, config_hash, seed, timings: false, verbosity: Verbosity::Quiet }
    }

    fn info(&self, msg: impl AsRef<str>) {
        if self.verbosity >= Verbosity::Normal {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn detail(&self, msg: impl AsRef<str>) {
        if self.verbosity >= Verbosity::Verbose {
            eprintln!("  {}", msg.as_ref());
        }
    }

    fn manifest(&self, experiment: &str, rel_dir: &str) -> RunManifest {
        RunManifest::new(experiment, &self.config_hash, self.seed, rel_dir, Timings::new(self.timings))
    }
}

/// What a command left behind. A numerical failure means outputs were
/// written but some stage reported a diagnostic (exit code 3).
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<String>,
    pub failures: Vec<String>,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn finish(ctx: &Context, dir: &Path, mut manifest: RunManifest, outcome: &mut Outcome) -> Result<()> {
    for f in &outcome.files {
        manifest.add_file(f.clone());
    }
    manifest.details.push("failures", outcome.failures.len());
    for (i, f) in outcome.failures.iter().enumerate() {
        manifest.details.push(format!("failure.{i:03}"), f);
    }
    manifest.write(dir)?;
    outcome.files.push(MANIFEST_NAME.to_string());
    ctx.info(format!("{}: wrote {} files to {}", manifest.experiment, outcome.files.len(), dir.display()));
    Ok(())
}

pub fn cmd_field(ctx: &Context, opts: &FieldOpts, dir: &Path, rel_dir: &str) -> Result<Outcome> {
    create_dir(dir)?;
    let c = &ctx.config;
    let z = opts.z.unwrap_or(c.z_max);
    if !(z.is_finite() && z >= 0.0) {
        return Err(HarnessError::Usage(format!("--z must be >= 0, got {z}")));
    }
    let mut manifest = ctx.manifest("field", rel_dir);
    let mut outcome = Outcome::default();

    let field = manifest.timings.time("sample", || sample_plane(&c.optics, z, &c.grid))?;
    let energy = energy_density(&field);
    let phase = phase_profile(&field);
    io::write_energy_csv(&dir.join("energy.csv"), field.grid(), &energy)?;
    io::write_phase_csv(&dir.join("phase.csv"), field.grid(), &phase)?;
    outcome.files.extend(["energy.csv".to_string(), "phase.csv".to_string()]);
    if opts.with_field {
        io::write_field_csv(&dir.join("field.csv"), &field)?;
        io::field_meta(&field, &c.optics).write(&dir.join("field.meta"))?;
        outcome.files.extend(["field.csv".to_string(), "field.meta".to_string()]);
    }
    manifest
        .details
        .push("z_m", z)
        .push("grid_n", field.grid().len())
        .push("power", field.power())
        .push("analytic_power", c.optics.total_power())
        .push("phase_flagged_points", phase.flagged_count());
    ctx.detail(format!(
        "plane z = {z} m: {} points, {} phase samples flagged",
        field.grid().len(),
        phase.flagged_count()
    ));

    if opts.sweep {
        let planes = opts.sweep_planes.unwrap_or(c.sweep_planes);
        if planes < 2 || opts.sweep_points < 2 {
            return Err(HarnessError::Usage("a sweep needs at least 2 planes and 2 points per plane".into()));
        }
        let (energy_rows, phase_rows) =
            manifest.timings.time("sweep", || sweep(&c.optics, c.z_max, planes, opts.sweep_points));
        io::write_map_csv(&dir.join("energy_map.csv"), "energy", &energy_rows)?;
        io::write_map_csv(&dir.join("phase_map.csv"), "phase_rad", &phase_rows)?;
        outcome.files.extend(["energy_map.csv".to_string(), "phase_map.csv".to_string()]);
        manifest
            .details
            .push("sweep_planes", planes)
            .push("sweep_points", opts.sweep_points)
            .push("sweep_z_max_m", c.z_max);
    }
    finish(ctx, dir, manifest, &mut outcome)?;
    Ok(outcome)
}

type MapRows = Vec<(f64, f64, f64)>;

/// Energy density and wrapped phase on `planes` planes from 0 to `z_max`,
/// each sampled over `±(d/2 + 3 w(z))`.
fn sweep(optics: &slitflow::OpticalConfig, z_max: f64, planes: usize, points: usize) -> (MapRows, MapRows) {
    let blocks: Vec<(MapRows, MapRows)> = linspace(0.0, z_max, planes)
        .into_par_iter()
        .map(|z| {
            let half = 0.5 * optics.slit_separation() + 3.0 * optics.beam_width(z);
            let mut e = Vec::with_capacity(points);
            let mut p = Vec::with_capacity(points);
            for x in linspace(-half, half, points) {
                let psi = evaluate_field(optics, x, z);
                e.push((z, x, psi.norm_sqr()));
                p.push((z, x, wrap_phase(psi.arg())));
            }
            (e, p)
        })
        .collect();
    let mut energy = Vec::with_capacity(planes * points);
    let mut phase = Vec::with_capacity(planes * points);
    for (e, p) in blocks {
        energy.extend(e);
        phase.extend(p);
    }
    (energy, phase)
}

fn trajectory_meta(
    ctx: &Context,
    kind: TrajectoryKind,
    steps: usize,
    z_range: (f64, f64),
    trajectories: &[Trajectory],
) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.push("kind", kind.as_str())
        .push("config_hash", &ctx.config_hash)
        .push("steps", steps)
        .push("z_start_m", z_range.0)
        .push("z_end_m", z_range.1)
        .push("count", trajectories.len())
        .push("complete", trajectories.iter().filter(|t| t.status.is_complete()).count());
    for (id, t) in trajectories.iter().enumerate() {
        if !t.status.is_complete() {
            kv.push(format!("status.{id:03}"), t.status.describe());
        }
    }
    kv
}

fn initial_positions(ctx: &Context, x0: &Option<Vec<f64>>, per_slit: Option<usize>) -> Result<Vec<f64>> {
    match x0 {
        Some(list) => {
            if list.is_empty() {
                return Err(HarnessError::Usage("--x0 needs at least one position".into()));
            }
            if let Some(bad) = list.iter().find(|x| !x.is_finite()) {
                return Err(HarnessError::Usage(format!("--x0 contains a non-finite position {bad}")));
            }
            let mut sorted = list.clone();
            sorted.sort_by(f64::total_cmp);
            if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
                return Err(HarnessError::Usage(format!("--x0 contains the position {} more than once", w[0])));
            }
            Ok(sorted)
        }
        None => {
            let n = per_slit.unwrap_or(ctx.config.per_slit);
            if n == 0 {
                return Err(HarnessError::Usage("--per-slit must be positive".into()));
            }
            Ok(slit_initial_positions(&ctx.config.optics, n))
        }
    }
}

fn run_bundle(
    ctx: &Context,
    xs: &[f64],
    z0: f64,
    z1: f64,
    steps: usize,
    outcome: &mut Outcome,
) -> Result<Vec<Trajectory>> {
    let mut good = Vec::with_capacity(xs.len());
    for (id, r) in trace_bundle(&ctx.config.optics, xs, z0, z1, steps)?.into_iter().enumerate() {
        match r {
            Ok(t) => good.push(t),
            Err(e) => outcome.failures.push(format!("trajectory {id} (x0 = {}): {e}", xs[id])),
        }
    }
    Ok(good)
}

pub fn cmd_trace(ctx: &Context, opts: &TraceOpts, dir: &Path, rel_dir: &str) -> Result<Outcome> {
    let c = &ctx.config;
    let xs = initial_positions(ctx, &opts.x0, opts.per_slit)?;
    let z1 = opts.z1.unwrap_or(c.z_max);
    let steps = opts.steps.unwrap_or(c.trace_steps);
    if !(opts.z0 >= 0.0 && z1 > opts.z0) || steps == 0 {
        return Err(HarnessError::Usage(format!(
            "need 0 <= z0 < z1 and steps > 0, got z0 = {}, z1 = {z1}, steps = {steps}",
            opts.z0
        )));
    }
    create_dir(dir)?;
    let mut manifest = ctx.manifest("trace", rel_dir);
    let mut outcome = Outcome::default();

    let bundle = manifest.timings.time("trace", || run_bundle(ctx, &xs, opts.z0, z1, steps, &mut outcome))?;
    io::write_trajectories_csv(&dir.join("trajectories.csv"), &bundle)?;
    trajectory_meta(ctx, TrajectoryKind::Exact, steps, (opts.z0, z1), &bundle).write(&dir.join("trajectories.meta"))?;
    outcome.files.extend(["trajectories.csv".to_string(), "trajectories.meta".to_string()]);
    let complete = bundle.iter().filter(|t| t.status.is_complete()).count();
    manifest.details.push("trajectories", bundle.len()).push("complete", complete).push("steps", steps);
    ctx.detail(format!("{} trajectories, {complete} complete", bundle.len()));

    if opts.convergence {
        let mut scratch = Outcome::default();
        let fine =
            manifest.timings.time("trace_refined", || run_bundle(ctx, &xs, opts.z0, z1, 2 * steps, &mut scratch))?;
        let mut kv = KeyValues::new();
        kv.push("steps_coarse", steps).push("steps_fine", 2 * steps);
        let mut max_delta: f64 = 0.0;
        let mut deltas = KeyValues::new();
        for (id, (a, b)) in bundle.iter().zip(&fine).enumerate() {
            if a.status.is_complete() && b.status.is_complete() {
                let d = (a.last().x - b.last().x).abs();
                max_delta = max_delta.max(d);
                deltas.push(format!("delta.{id:03}_m"), d);
            }
        }
        kv.push("max_endpoint_delta_m", max_delta);
        for (k, v) in deltas.entries() {
            kv.push(k.clone(), v);
        }
        kv.write(&dir.join("convergence.txt"))?;
        outcome.files.push("convergence.txt".to_string());
        manifest.details.push("max_endpoint_delta_m", max_delta);
    }
    finish(ctx, dir, manifest, &mut outcome)?;
    Ok(outcome)
}

pub fn cmd_measure(ctx: &Context, opts: &MeasureOpts, dir: &Path, rel_dir: &str) -> Result<Outcome> {
    let c = &ctx.config;
    let planes: PlaneSpec = match &opts.planes {
        Some(s) => s.parse().map_err(HarnessError::Usage)?,
        None => c.planes,
    };
    let zeta = opts.zeta.unwrap_or(c.calcite.zeta);
    if !(zeta.is_finite() && zeta > 0.0) {
        return Err(HarnessError::Usage(format!("--zeta must be > 0, got {zeta}")));
    }
    let params = CalciteParams::new(zeta, opts.phi0.unwrap_or(c.calcite.phi0));
    let budget: PhotonBudget = match &opts.photons {
        Some(s) => s.parse().map_err(|e: slitflow::Error| HarnessError::Usage(e.to_string()))?,
        None => c.photon_budget,
    };
    create_dir(dir)?;
    let mut manifest = ctx.manifest("measure", rel_dir);
    let mut outcome = Outcome::default();

    let dataset = manifest
        .timings
        .time("measure", || build_dataset(&c.optics, &planes.positions(), &params, &c.grid, budget, ctx.seed))?;
    outcome.files = manifest.timings.time("write", || io::write_dataset(dir, &dataset))?;
    let min_valid = dataset.planes().iter().map(|p| p.momentum.valid_count()).min().unwrap_or(0);
    manifest
        .details
        .push("planes", planes)
        .push("zeta", params.zeta)
        .push("phi0_rad", params.phi0)
        .push("photon_budget", budget)
        .push("clamped_points", dataset.clamped_count())
        .push("min_valid_points", min_valid);
    ctx.detail(format!("{} planes, {} clamped points", dataset.planes().len(), dataset.clamped_count()));
    finish(ctx, dir, manifest, &mut outcome)?;
    Ok(outcome)
}

pub fn cmd_reconstruct(ctx: &Context, opts: &ReconstructOpts, dir: &Path, rel_dir: &str) -> Result<Outcome> {
    let dataset = io::read_dataset(&opts.dataset)?;
    let per_slit = opts.per_slit.unwrap_or(ctx.config.per_slit);
    let steps = opts.exact_steps.unwrap_or(ctx.config.trace_steps);
    if per_slit == 0 || steps == 0 {
        return Err(HarnessError::Usage("--per-slit and --exact-steps must be positive".into()));
    }
    let policy = match opts.policy {
        PolicyArg::Bridge => MaskPolicy::Bridge,
        PolicyArg::Strict => MaskPolicy::Strict,
    };
    create_dir(dir)?;
    let mut manifest = ctx.manifest("reconstruct", rel_dir);
    let mut outcome = Outcome::default();

    let zs = dataset.z_values();
    let (z_first, z_last) = (zs[0], zs[zs.len() - 1]);
    let study = manifest.timings.time("reconstruct", || {
        let starts = slit_seeded_starts(dataset.config(), per_slit, z_first, steps)?;
        run_study(&dataset, &starts, policy, steps)
    })?;

    io::write_trajectories_csv(&dir.join("reconstructed.csv"), &study.reconstructed)?;
    trajectory_meta(ctx, TrajectoryKind::Reconstructed, zs.len() - 1, (z_first, z_last), &study.reconstructed)
        .write(&dir.join("reconstructed.meta"))?;
    io::write_trajectories_csv(&dir.join("exact.csv"), &study.exact)?;
    trajectory_meta(ctx, TrajectoryKind::Exact, steps, (z_first, z_last), &study.exact)
        .write(&dir.join("exact.meta"))?;

    let r = &study.report;
    let fringe = r.fringe_spacing_ref;
    let mut report = KeyValues::new();
    report
        .push("trajectories", r.deviations.len())
        .push("planes", zs.len())
        .push("z_start_m", z_first)
        .push("z_end_m", z_last)
        .push("fringe_spacing_ref_m", fringe)
        .push("rms_overall_m", r.rms_overall())
        .push("rms_overall_fringes", r.rms_overall() / fringe)
        .push("max_rms_m", r.max_rms())
        .push("max_rms_fringes", r.max_rms() / fringe)
        .push("max_deviation_m", r.max_deviation())
        .push("last_plane_rms_m", r.last_plane_rms())
        .push("crossing_count", r.crossing_count)
        .push("coverage", r.coverage)
        .push("clamped_points", dataset.clamped_count());
    for (id, d) in r.deviations.iter().enumerate() {
        report
            .push(format!("deviation.{id:03}.rms_m"), d.rms)
            .push(format!("deviation.{id:03}.max_m"), d.max)
            .push(format!("deviation.{id:03}.last_m"), d.last)
            .push(format!("deviation.{id:03}.points"), d.compared_points);
    }
    report.write(&dir.join("report.txt"))?;
    outcome
        .files
        .extend(["reconstructed.csv", "reconstructed.meta", "exact.csv", "exact.meta", "report.txt"].map(String::from));
    manifest
        .details
        .push("dataset_planes", zs.len())
        .push("rms_overall_fringes", r.rms_overall() / fringe)
        .push("crossing_count", r.crossing_count)
        .push("coverage", r.coverage);
    ctx.detail(format!(
        "RMS deviation {:.3e} fringe spacings, {} crossings, coverage {}",
        r.rms_overall() / fringe,
        r.crossing_count,
        r.coverage
    ));
    finish(ctx, dir, manifest, &mut outcome)?;
    Ok(outcome)
}

/// Every stage into `field/`, `trace/`, `measure/` and `reconstruct/`, with
/// a top-level manifest covering all files.
pub fn cmd_all(ctx: &Context, dir: &Path) -> Result<Outcome> {
    create_dir(dir)?;
    let mut failures = Vec::new();
    let field = FieldOpts { sweep: true, sweep_points: 400, ..FieldOpts::default() };
    failures.extend(cmd_field(ctx, &field, &dir.join("field"), "field")?.failures);
    failures.extend(cmd_trace(ctx, &TraceOpts::default(), &dir.join("trace"), "trace")?.failures);
    failures.extend(cmd_measure(ctx, &MeasureOpts::default(), &dir.join("measure"), "measure")?.failures);
    let recon =
        ReconstructOpts { dataset: dir.join("measure"), policy: PolicyArg::Bridge, per_slit: None, exact_steps: None };
    failures.extend(cmd_reconstruct(ctx, &recon, &dir.join("reconstruct"), "reconstruct")?.failures);

    let mut outcome = Outcome { files: list_files(dir)?, failures };
    outcome.files.retain(|f| f != MANIFEST_NAME && f != crate::manifest::LOCK_NAME);
    let manifest = ctx.manifest("all", ".");
    finish(ctx, dir, manifest, &mut outcome)?;
    Ok(outcome)
}
