use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::array::{aod_to_position, TweezerArray};
use super::geometry::{geometric_survival, DeviceGeometry, OcclusionLoss};
use crate::error::{ensure, Error, Result};
use crate::fieldmodel::{scattering_rate, FieldModel, SaturationContext};
use crate::heating::HeatingModel;
use crate::quantities::units;
use crate::rng::{stream_id, substream};

/// Stochastic loading and delivery of atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadingModel {
    pub fill_probability: f64,
    pub transport_survival: f64,
    pub shots: u32,
    pub seed: u64,
}

impl Default for LoadingModel {
    fn default() -> Self {
        Self {
            fill_probability: 0.5,
            transport_survival: 0.92,
            shots: 200,
            seed: 1,
        }
    }
}

impl LoadingModel {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("fill_probability", self.fill_probability),
            ("transport_survival", self.transport_survival),
        ] {
            ensure((0.0..=1.0).contains(&p), || format!("{name} must lie in [0, 1], got {p}"))?;
        }
        ensure(self.shots >= 1, || "at least one shot is required".into())
    }
}

/// What the scan coordinate means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanAxis {
    /// Array displacement along x, m.
    Position,
    /// AOD drive-frequency offset, Hz.
    AodFrequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSpec {
    pub axis: ScanAxis,
    pub coordinates: Vec<f64>,
}

impl ScanSpec {
    pub fn positions(coordinates: Vec<f64>) -> Self {
        Self {
            axis: ScanAxis::Position,
            coordinates,
        }
    }

    pub fn displacement(&self, index: usize, array: &TweezerArray) -> f64 {
        let c = self.coordinates[index];
        match self.axis {
            ScanAxis::Position => c,
            ScanAxis::AodFrequency => aod_to_position(c, array),
        }
    }
}

/// Light in the waveguide during the scan.
#[derive(Debug, Clone)]
pub struct ScanHeating {
    pub field: FieldModel,
    pub sat: SaturationContext,
    pub model: HeatingModel,
    pub duration: f64,
    /// Geometry element carrying the light.
    pub waveguide: usize,
}

/// Per-site, per-coordinate survival fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalMap {
    pub rows: usize,
    pub cols: usize,
    pub axis: ScanAxis,
    pub scan_coordinates: Vec<f64>,
    /// `[site][coordinate]`, sites row-major.
    pub per_site_survival: Vec<Vec<f64>>,
    pub shot_counts: Vec<Vec<u32>>,
}

impl SurvivalMap {
    pub fn site(&self, row: usize, col: usize) -> &[f64] {
        &self.per_site_survival[row * self.cols + col]
    }

    /// Writes `site_row,site_col,coordinate,survival,shots`, with the
    /// coordinate in µm (position scans) or MHz (AOD scans).
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "site_row,site_col,coordinate,survival,shots")?;
        let scale = coordinate_scale(self.axis);
        for (site, (surv, shots)) in self.per_site_survival.iter().zip(&self.shot_counts).enumerate() {
            let (r, c) = (site / self.cols, site % self.cols);
            for (k, coord) in self.scan_coordinates.iter().enumerate() {
                writeln!(out, "{r},{c},{},{},{}", coord / scale, surv[k], shots[k])?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, axis: ScanAxis, path: &Path) -> Result<Self> {
        let err = |row: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
        let expected = ["site_row", "site_col", "coordinate", "survival", "shots"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(err(1, format!("expected header {}", expected.join(","))));
        }
        let scale = coordinate_scale(axis);
        let mut cells = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| err(row, e.to_string()))?;
            let field = |k: usize| rec.get(k).ok_or_else(|| err(row, format!("missing column {}", expected[k])));
            let r: usize = field(0)?.parse().map_err(|e| err(row, format!("site_row: {e}")))?;
            let c: usize = field(1)?.parse().map_err(|e| err(row, format!("site_col: {e}")))?;
            let x: f64 = field(2)?.parse().map_err(|e| err(row, format!("coordinate: {e}")))?;
            let s: f64 = field(3)?.parse().map_err(|e| err(row, format!("survival: {e}")))?;
            let n: u32 = field(4)?.parse().map_err(|e| err(row, format!("shots: {e}")))?;
            if !(0.0..=1.0).contains(&s) {
                return Err(err(row, format!("survival {s} outside [0, 1]")));
            }
            cells.push((r, c, x * scale, s, n));
        }
        if cells.is_empty() {
            return Err(err(2, "no data rows".into()));
        }
        let rows = cells.iter().map(|c| c.0).max().unwrap() + 1;
        let cols = cells.iter().map(|c| c.1).max().unwrap() + 1;
        let mut coords: Vec<f64> = cells.iter().map(|c| c.2).collect();
        coords.sort_by(f64::total_cmp);
        coords.dedup();
        let nc = coords.len();
        let mut surv = vec![vec![f64::NAN; nc]; rows * cols];
        let mut shots = vec![vec![0; nc]; rows * cols];
        for (r, c, x, s, n) in cells {
            let k = coords.binary_search_by(|p| p.total_cmp(&x)).unwrap();
            surv[r * cols + c][k] = s;
            shots[r * cols + c][k] = n;
        }
        if surv.iter().flatten().any(|v| v.is_nan()) {
            return Err(err(1, "map does not cover every site at every coordinate".into()));
        }
        Ok(Self {
            rows,
            cols,
            axis,
            scan_coordinates: coords,
            per_site_survival: surv,
            shot_counts: shots,
        })
    }
}

fn coordinate_scale(axis: ScanAxis) -> f64 {
    match axis {
        ScanAxis::Position => units::UM,
        ScanAxis::AodFrequency => units::MHZ,
    }
}

/// Deterministic survival probability of the atom in one cell, before
/// loading and transport.
pub fn cell_survival(
    position: [f64; 3],
    geometry: &DeviceGeometry,
    waist: f64,
    loss: &OcclusionLoss,
    heating: Option<&ScanHeating>,
) -> Result<f64> {
    let geo = geometric_survival(position[0], position[1], geometry, waist, loss)?;
    let Some(h) = heating else {
        return Ok(geo);
    };
    let y = geometry
        .transverse_offset(h.waveguide, position[0], position[1])
        .ok_or_else(|| Error::InvalidParameter(format!("geometry has no element {}", h.waveguide)))?;
    match h.field.intensity_at(y, position[2]) {
        Ok(intensity) => {
            let rate = scattering_rate(intensity, &h.sat)?;
            Ok(geo * h.model.survival(rate, h.duration)?)
        }
        // on top of the structure the occlusion loss decides
        Err(Error::OutOfDomain(_)) if geo < 0.5 => Ok(geo),
        Err(e) => Err(e),
    }
}

/// Simulates a scan: for every site, coordinate and shot an atom is loaded
/// with `fill_probability`, delivered with `transport_survival` and then
/// survives with the cell probability. The reported survival is the
/// fraction of shots that end with an atom in the site.
///
/// Each (site, coordinate) cell owns the ChaCha stream
/// `stream_id(site, coordinate)` and draws exactly three uniforms per shot
/// (loading, transport, survival), so a draw is fixed by
/// (seed, site, coordinate, shot, stage).
pub fn simulate_scan(
    geometry: &DeviceGeometry,
    array: &TweezerArray,
    scan: &ScanSpec,
    heating: Option<&ScanHeating>,
    loading: &LoadingModel,
    loss: &OcclusionLoss,
) -> Result<SurvivalMap> {
    loading.validate()?;
    array.validate()?;
    geometry.validate()?;
    loss.validate()?;
    ensure(scan.coordinates.iter().all(|c| c.is_finite()), || {
        "scan coordinates must be finite".into()
    })?;
    let nc = scan.coordinates.len();
    let cells: Vec<(f64, u32)> = (0..array.len() * nc)
        .into_par_iter()
        .map(|cell| {
            let (site, k) = (cell / nc, cell % nc);
            let (row, col) = array.row_col(site);
            let mut pos = array.site_position(row, col);
            pos[0] += scan.displacement(k, array);
            let p = cell_survival(pos, geometry, array.waist, loss, heating).map_err(|e| Error::Site {
                site,
                source: Box::new(e),
            })?;
            let mut rng = substream(loading.seed, stream_id(site as u32, k as u32));
            let mut survivors = 0u32;
            for _ in 0..loading.shots {
                let loaded = rng.random::<f64>() < loading.fill_probability;
                let delivered = rng.random::<f64>() < loading.transport_survival;
                let survived = rng.random::<f64>() < p;
                if loaded && delivered && survived {
                    survivors += 1;
                }
            }
            Ok((f64::from(survivors) / f64::from(loading.shots), loading.shots))
        })
        .collect::<Result<_>>()?;

    let mut per_site_survival = Vec::with_capacity(array.len());
    let mut shot_counts = Vec::with_capacity(array.len());
    for chunk in cells.chunks(nc.max(1)).take(array.len()) {
        per_site_survival.push(chunk.iter().map(|c| c.0).collect());
        shot_counts.push(chunk.iter().map(|c| c.1).collect());
    }
    if nc == 0 {
        per_site_survival = vec![Vec::new(); array.len()];
        shot_counts = vec![Vec::new(); array.len()];
    }
    Ok(SurvivalMap {
        rows: array.rows,
        cols: array.cols,
        axis: scan.axis,
        scan_coordinates: scan.coordinates.clone(),
        per_site_survival,
        shot_counts,
    })
}
