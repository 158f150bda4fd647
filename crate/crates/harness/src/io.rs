//! CSV tables and flat `key = value` sidecar files.
//!
//! Floating-point values are written with Rust's shortest round-trip
//! formatting, so reading a file back reproduces the written numbers exactly.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;
use slitflow::flow::{Trajectory, TrajectoryKind, TrajectoryPoint, TrajectoryStatus};
use slitflow::reconstruct::{DataSource, ImagingPlaneSet, Provenance};
use slitflow::wavefield::PhaseProfile;
use slitflow::weakmeas::{CalciteParams, MomentumProfile, NoiseStream, PhotonBudget, WeakMeasurementRecord};
use slitflow::{Grid, OpticalConfig, PlaneField};

use crate::error::{HarnessError, Result};

pub const FIELD_HEADER: [&str; 3] = ["x_m", "re", "im"];
pub const TRAJECTORY_HEADER: [&str; 4] = ["traj_id", "z_m", "x_m", "weight"];
pub const RECORD_HEADER: [&str; 6] = ["x_m", "I_L", "I_R", "kx_extracted", "valid", "clamped"];
pub const DATASET_MANIFEST: &str = "dataset.txt";

/// Ordered `key = value` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
    source: Option<PathBuf>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn path_for_errors(&self) -> PathBuf {
        self.source.clone().unwrap_or_else(|| PathBuf::from("<memory>"))
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| HarnessError::data(&self.path_for_errors(), format!("missing key '{key}'")))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| HarnessError::data(&self.path_for_errors(), format!("key '{key}' has invalid value '{raw}'")))
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()).map_err(|e| HarnessError::io(path, e))
    }

    pub fn parse_text(text: &str, path: &Path) -> Result<Self> {
        let mut kv = KeyValues { entries: Vec::new(), source: Some(path.to_path_buf()) };
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::data(path, format!("line {}: expected 'key = value'", n + 1)))?;
            kv.entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(kv)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::data(path, format!("cannot read: {e}")))?;
        Self::parse_text(&text, path)
    }
}

fn writer(path: &Path, header: &[&str]) -> Result<csv::Writer<fs::File>> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    Ok(w)
}

fn csv_error(path: &Path, e: csv::Error) -> HarnessError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => HarnessError::io(path, io),
            _ => unreachable!(),
        }
    } else {
        HarnessError::data(path, e.to_string())
    }
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = writer(path, header)?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Rows of a CSV file after checking its header.
fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::data(path, format!("cannot read: {e}")))?;
    let found = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(HarnessError::data(
            path,
            format!("expected header '{}', found '{}'", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    r.records().map(|rec| rec.map_err(|e| csv_error(path, e))).collect()
}

fn field<T: FromStr>(path: &Path, row: &csv::StringRecord, line: usize, col: usize, name: &str) -> Result<T> {
    let raw = row.get(col).unwrap_or("");
    raw.parse().map_err(|_| HarnessError::data(path, format!("row {line}: column '{name}' has invalid value '{raw}'")))
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn parse_flag(path: &Path, row: &csv::StringRecord, line: usize, col: usize, name: &str) -> Result<bool> {
    match row.get(col) {
        Some("1") => Ok(true),
        Some("0") => Ok(false),
        other => Err(HarnessError::data(path, format!("row {line}: column '{name}' must be 0 or 1, got {other:?}"))),
    }
}

/// Optical parameters as sidecar keys, matching the config file names.
pub fn push_optics(kv: &mut KeyValues, config: &OpticalConfig) {
    kv.push("wavelength_m", config.wavelength())
        .push("slit_separation_m", config.slit_separation())
        .push("slit_waist_m", config.slit_waist())
        .push("amp_plus_re", config.amp_plus().re)
        .push("amp_plus_im", config.amp_plus().im)
        .push("amp_minus_re", config.amp_minus().re)
        .push("amp_minus_im", config.amp_minus().im);
}

pub fn read_optics(kv: &KeyValues) -> Result<OpticalConfig> {
    let c = OpticalConfig::new(
        kv.parse("wavelength_m")?,
        kv.parse("slit_separation_m")?,
        kv.parse("slit_waist_m")?,
        Complex64::new(kv.parse("amp_plus_re")?, kv.parse("amp_plus_im")?),
        Complex64::new(kv.parse("amp_minus_re")?, kv.parse("amp_minus_im")?),
    );
    c.map_err(|e| HarnessError::data(&kv.path_for_errors(), e.to_string()))
}

fn push_grid(kv: &mut KeyValues, grid: &Grid) {
    kv.push("grid_center_m", grid.center()).push("grid_dx_m", grid.dx()).push("grid_n", grid.len());
}

fn read_grid(kv: &KeyValues) -> Result<Grid> {
    Grid::centered(kv.parse("grid_center_m")?, kv.parse("grid_dx_m")?, kv.parse("grid_n")?)
        .map_err(|e| HarnessError::data(&kv.path_for_errors(), e.to_string()))
}

fn check_grid_column(path: &Path, grid: &Grid, xs: &[f64]) -> Result<()> {
    if xs.len() != grid.len() {
        return Err(HarnessError::data(path, format!("expected {} rows, found {}", grid.len(), xs.len())));
    }
    let tol = 1e-9 * grid.dx();
    if let Some(i) = (0..xs.len()).find(|&i| (xs[i] - grid.x(i)).abs() > tol) {
        return Err(HarnessError::data(path, format!("row {}: x does not lie on the declared grid", i + 1)));
    }
    Ok(())
}

// ---- plane fields ----

pub fn write_field_csv(path: &Path, field: &PlaneField) -> Result<()> {
    let g = field.grid();
    let rows =
        field.values().iter().enumerate().map(|(i, v)| vec![g.x(i).to_string(), v.re.to_string(), v.im.to_string()]);
    write_rows(path, &FIELD_HEADER, rows)
}

pub fn field_meta(field: &PlaneField, config: &OpticalConfig) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.push("z_m", field.z());
    push_optics(&mut kv, config);
    push_grid(&mut kv, field.grid());
    kv
}

/// Read a field CSV and its sidecar.
pub fn read_field(csv_path: &Path, meta_path: &Path) -> Result<PlaneField> {
    let meta = KeyValues::read(meta_path)?;
    let grid = read_grid(&meta)?;
    let rows = read_rows(csv_path, &FIELD_HEADER)?;
    let mut xs = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        xs.push(field(csv_path, row, i + 1, 0, "x_m")?);
        values.push(Complex64::new(field(csv_path, row, i + 1, 1, "re")?, field(csv_path, row, i + 1, 2, "im")?));
    }
    check_grid_column(csv_path, &grid, &xs)?;
    PlaneField::new(meta.parse("z_m")?, grid, values).map_err(|e| HarnessError::data(csv_path, e.to_string()))
}

pub fn write_energy_csv(path: &Path, grid: &Grid, energy: &[f64]) -> Result<()> {
    let rows = energy.iter().enumerate().map(|(i, u)| vec![grid.x(i).to_string(), u.to_string()]);
    write_rows(path, &["x_m", "energy"], rows)
}

pub fn write_phase_csv(path: &Path, grid: &Grid, phase: &PhaseProfile) -> Result<()> {
    let rows = phase
        .values
        .iter()
        .zip(&phase.flagged)
        .enumerate()
        .map(|(i, (p, &f))| vec![grid.x(i).to_string(), p.to_string(), flag(f).to_string()]);
    write_rows(path, &["x_m", "phase_rad", "flagged"], rows)
}

/// One `(z, x, value)` row per sample, in blocks of constant `z`.
pub fn write_map_csv(path: &Path, value_name: &str, rows: &[(f64, f64, f64)]) -> Result<()> {
    let rows = rows.iter().map(|(z, x, v)| vec![z.to_string(), x.to_string(), v.to_string()]);
    write_rows(path, &["z_m", "x_m", value_name], rows)
}

// ---- trajectories ----

pub fn write_trajectories_csv(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let rows = trajectories.iter().enumerate().flat_map(|(id, t)| {
        t.points.iter().map(move |p| vec![id.to_string(), p.z.to_string(), p.x.to_string(), t.weight.to_string()])
    });
    write_rows(path, &TRAJECTORY_HEADER, rows)
}

/// Read trajectories back; ids must appear in contiguous ascending blocks.
/// The stop reason is not part of the table, so every trajectory reads back
/// as complete.
pub fn read_trajectories_csv(path: &Path, kind: TrajectoryKind) -> Result<Vec<Trajectory>> {
    let mut out: Vec<Trajectory> = Vec::new();
    for (i, row) in read_rows(path, &TRAJECTORY_HEADER)?.iter().enumerate() {
        let line = i + 1;
        let id: usize = field(path, row, line, 0, "traj_id")?;
        let point = TrajectoryPoint { z: field(path, row, line, 1, "z_m")?, x: field(path, row, line, 2, "x_m")? };
        let weight: f64 = field(path, row, line, 3, "weight")?;
        if id + 1 == out.len() {
            out[id].points.push(point);
        } else if id == out.len() {
            out.push(Trajectory { points: vec![point], kind, weight, status: TrajectoryStatus::Complete });
        } else {
            return Err(HarnessError::data(path, format!("row {line}: trajectory id {id} out of order")));
        }
    }
    Ok(out)
}

// ---- measurement records ----

pub fn write_record_csv(path: &Path, record: &WeakMeasurementRecord) -> Result<()> {
    let g = &record.grid;
    let m = &record.momentum;
    let rows = (0..g.len()).map(|i| {
        vec![
            g.x(i).to_string(),
            record.i_l[i].to_string(),
            record.i_r[i].to_string(),
            m.kx[i].to_string(),
            flag(m.valid[i]).to_string(),
            flag(m.clamped[i]).to_string(),
        ]
    });
    write_rows(path, &RECORD_HEADER, rows)
}

pub fn record_meta(record: &WeakMeasurementRecord, master_seed: u64, plane_index: usize) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.push("z_m", record.z)
        .push("zeta", record.params.zeta)
        .push("phi0_rad", record.params.phi0)
        .push("photon_budget", record.photon_budget)
        .push("seed", master_seed)
        .push("plane_index", plane_index)
        .push("valid_points", record.momentum.valid_count())
        .push("clamped_points", record.momentum.clamped_count());
    push_grid(&mut kv, &record.grid);
    kv
}

pub fn read_record(csv_path: &Path, meta_path: &Path) -> Result<WeakMeasurementRecord> {
    let meta = KeyValues::read(meta_path)?;
    let grid = read_grid(&meta)?;
    let rows = read_rows(csv_path, &RECORD_HEADER)?;
    let n = rows.len();
    let (mut xs, mut i_l, mut i_r) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut momentum =
        MomentumProfile { kx: Vec::with_capacity(n), valid: Vec::with_capacity(n), clamped: Vec::with_capacity(n) };
    for (i, row) in rows.iter().enumerate() {
        let line = i + 1;
        xs.push(field(csv_path, row, line, 0, "x_m")?);
        i_l.push(field(csv_path, row, line, 1, "I_L")?);
        i_r.push(field(csv_path, row, line, 2, "I_R")?);
        momentum.kx.push(field(csv_path, row, line, 3, "kx_extracted")?);
        momentum.valid.push(parse_flag(csv_path, row, line, 4, "valid")?);
        momentum.clamped.push(parse_flag(csv_path, row, line, 5, "clamped")?);
    }
    check_grid_column(csv_path, &grid, &xs)?;
    let photon_budget: PhotonBudget = meta.parse("photon_budget")?;
    let noise = match photon_budget {
        PhotonBudget::Noiseless => None,
        PhotonBudget::Photons(_) => {
            Some(NoiseStream { master_seed: meta.parse("seed")?, plane_index: meta.parse("plane_index")? })
        }
    };
    Ok(WeakMeasurementRecord {
        z: meta.parse("z_m")?,
        grid,
        i_l,
        i_r,
        momentum,
        params: CalciteParams::new(meta.parse("zeta")?, meta.parse("phi0_rad")?),
        photon_budget,
        noise,
    })
}

fn plane_stem(index: usize) -> String {
    format!("plane_{index:03}")
}

/// Write every record plus the dataset manifest into `dir`; returns the
/// file names written, relative to `dir`.
pub fn write_dataset(dir: &Path, set: &ImagingPlaneSet) -> Result<Vec<String>> {
    let p = set.provenance();
    let mut files = Vec::new();
    let mut manifest = KeyValues::new();
    push_optics(&mut manifest, set.config());
    manifest
        .push("zeta", p.params.zeta)
        .push("phi0_rad", p.params.phi0)
        .push("photon_budget", p.photon_budget)
        .push("seed", p.master_seed)
        .push("source", p.source.as_str())
        .push("clamped_points", set.clamped_count())
        .push("plane_count", set.planes().len());
    for (j, record) in set.planes().iter().enumerate() {
        let stem = plane_stem(j);
        let csv = format!("{stem}.csv");
        let meta = format!("{stem}.meta");
        write_record_csv(&dir.join(&csv), record)?;
        record_meta(record, p.master_seed, j).write(&dir.join(&meta))?;
        manifest.push(format!("plane.{j:03}"), &csv);
        files.push(csv);
        files.push(meta);
    }
    manifest.write(&dir.join(DATASET_MANIFEST))?;
    files.push(DATASET_MANIFEST.to_string());
    Ok(files)
}

fn parse_source(kv: &KeyValues) -> Result<DataSource> {
    match kv.require("source")? {
        "simulated" => Ok(DataSource::Simulated),
        "exact" => Ok(DataSource::ExactInjected),
        other => Err(HarnessError::data(&kv.path_for_errors(), format!("unknown source '{other}'"))),
    }
}

pub fn read_dataset(dir: &Path) -> Result<ImagingPlaneSet> {
    let manifest_path = dir.join(DATASET_MANIFEST);
    if !manifest_path.is_file() {
        return Err(HarnessError::data(&manifest_path, "dataset manifest not found"));
    }
    let manifest = KeyValues::read(&manifest_path)?;
    let config = read_optics(&manifest)?;
    let count: usize = manifest.parse("plane_count")?;
    let provenance = Provenance {
        params: CalciteParams::new(manifest.parse("zeta")?, manifest.parse("phi0_rad")?),
        photon_budget: manifest.parse("photon_budget")?,
        master_seed: manifest.parse("seed")?,
        source: parse_source(&manifest)?,
    };
    let mut planes = Vec::with_capacity(count);
    for j in 0..count {
        let csv = manifest.require(&format!("plane.{j:03}"))?;
        let csv_path = dir.join(csv);
        let meta_path = csv_path.with_extension("meta");
        planes.push(read_record(&csv_path, &meta_path)?);
    }
    ImagingPlaneSet::new(config, planes, provenance).map_err(|e| HarnessError::data(&manifest_path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use slitflow::flow::trace_bundle;
    use slitflow::reconstruct::build_dataset;
    use slitflow::wavefield::sample_on_grid;
    use slitflow::GridSpec;

    #[test]
    fn key_values_round_trip() {
        let mut kv = KeyValues::new();
        kv.push("a", 1.5e-7).push("b", "text with = sign");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kv.txt");
        kv.write(&path).unwrap();
        let back = KeyValues::read(&path).unwrap();
        assert_eq!(back.parse::<f64>("a").unwrap(), 1.5e-7);
        assert_eq!(back.get("b"), Some("text with = sign"));
        let err = back.require("c").unwrap_err();
        assert!(err.to_string().contains("'c'"));
    }

    #[test]
    fn field_round_trip_is_exact() {
        let c = OpticalConfig::default_geometry();
        let grid = Grid::symmetric(2e-3, 257).unwrap();
        let f = sample_on_grid(&c, 0.05, &grid).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (csv, meta) = (dir.path().join("f.csv"), dir.path().join("f.meta"));
        write_field_csv(&csv, &f).unwrap();
        field_meta(&f, &c).write(&meta).unwrap();
        let back = read_field(&csv, &meta).unwrap();
        assert_eq!(back, f);
        let text = fs::read_to_string(&csv).unwrap();
        assert!(text.starts_with("x_m,re,im\n"));
    }

    #[test]
    fn trajectory_round_trip() {
        let c = OpticalConfig::default_geometry();
        let bundle: Vec<Trajectory> =
            trace_bundle(&c, &[-3e-4, 2.5e-4], 0.0, 0.5, 20).unwrap().into_iter().map(|r| r.unwrap()).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_trajectories_csv(&path, &bundle).unwrap();
        let back = read_trajectories_csv(&path, TrajectoryKind::Exact).unwrap();
        assert_eq!(back, bundle);
    }

    #[test]
    fn dataset_round_trip_with_nan_and_noise() {
        let c = OpticalConfig::default_geometry();
        let spec = GridSpec::Fixed { n: 1024, halfwidth: 4e-3 };
        let set = build_dataset(
            &c,
            &[0.05, 0.1, 0.15],
            &CalciteParams::new(0.1, 0.0),
            &spec,
            PhotonBudget::Photons(50_000),
            9,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_dataset(dir.path(), &set).unwrap();
        assert_eq!(files.len(), 7);
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.config(), set.config());
        assert_eq!(back.provenance(), set.provenance());
        for (a, b) in back.planes().iter().zip(set.planes()) {
            assert_eq!(a.z, b.z);
            assert_eq!(a.grid, b.grid);
            assert_eq!(a.i_l, b.i_l);
            assert_eq!(a.i_r, b.i_r);
            assert_eq!(a.momentum.valid, b.momentum.valid);
            assert_eq!(a.noise, b.noise);
            for (x, y) in a.momentum.kx.iter().zip(&b.momentum.kx) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn bad_header_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "x,y\n1,2\n").unwrap();
        let err = read_trajectories_csv(&path, TrajectoryKind::Exact).unwrap_err();
        assert!(err.to_string().contains("bad.csv"));
        assert!(err.to_string().contains("traj_id"));
    }

    #[test]
    fn missing_dataset_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains(DATASET_MANIFEST));
        assert_eq!(err.exit_code(), 2);
    }
}
