//! Evanescent-field intensity models, optical depth and scattering rate.
//!
//! Coordinates are taken in the waveguide cross-section plane: `y` lies in
//! the device plane, `z` along the device normal, with the waveguide axis at
//! the origin.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, invalid, Error, Result};
use crate::quantities::{units, PhysicalConstants};

/// `I(r) = P/(πρ) · e^{-2r/ρ} / r`, valid for `r ≥ r_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticEvanescentModel {
    /// Guided power, W.
    pub power: f64,
    /// Decay length ρ, m.
    pub decay_length: f64,
    /// Smallest radius at which the asymptotic law is evaluated, m.
    pub r_min: f64,
}

pub const DEFAULT_R_MIN: f64 = 90e-9;

impl AnalyticEvanescentModel {
    pub fn new(power: f64, decay_length: f64, r_min: f64) -> Result<Self> {
        let m = Self {
            power,
            decay_length,
            r_min,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.power >= 0.0 && self.power.is_finite(), || {
            format!("power must be non-negative, got {}", self.power)
        })?;
        ensure(self.decay_length > 0.0 && self.decay_length.is_finite(), || {
            format!("decay length must be positive, got {}", self.decay_length)
        })?;
        ensure(self.r_min > 0.0 && self.r_min.is_finite(), || {
            format!("r_min must be positive, got {}", self.r_min)
        })
    }

    pub fn intensity(&self, r: f64) -> Result<f64> {
        if !(r >= self.r_min) {
            return Err(Error::OutOfDomain(format!(
                "r = {:.3} nm is inside the validity cutoff r_min = {:.3} nm",
                r / units::NM,
                self.r_min / units::NM
            )));
        }
        Ok(intensity_law(self.power, self.decay_length, r))
    }
}

/// The bare law without the domain check; also the fit model.
pub fn intensity_law(power: f64, decay_length: f64, r: f64) -> f64 {
    power / (PI * decay_length) / r * (-2.0 * r / decay_length).exp()
}

/// Externally computed mode intensity, normalised per watt of guided power.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedMode {
    y_grid: Vec<f64>,
    z_grid: Vec<f64>,
    /// Row-major, `intensity[iy * nz + iz]`, W/m² per W.
    intensity: Vec<f64>,
    /// Core width × height, m.
    pub cross_section: (f64, f64),
}

pub const DEFAULT_CROSS_SECTION: (f64, f64) = (180e-9, 200e-9);

impl TabulatedMode {
    pub fn new(y_grid: Vec<f64>, z_grid: Vec<f64>, intensity: Vec<f64>) -> Result<Self> {
        ensure(y_grid.len() >= 2 && z_grid.len() >= 2, || {
            format!(
                "grid needs at least 2 nodes per axis, got {}×{}",
                y_grid.len(),
                z_grid.len()
            )
        })?;
        ensure(intensity.len() == y_grid.len() * z_grid.len(), || {
            format!(
                "intensity has {} values for a {}×{} grid",
                intensity.len(),
                y_grid.len(),
                z_grid.len()
            )
        })?;
        check_uniform(&y_grid, "y")?;
        check_uniform(&z_grid, "z")?;
        if let Some(v) = intensity.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(invalid(format!("intensity values must be non-negative, found {v}")));
        }
        Ok(Self {
            y_grid,
            z_grid,
            intensity,
            cross_section: DEFAULT_CROSS_SECTION,
        })
    }

    pub fn y_grid(&self) -> &[f64] {
        &self.y_grid
    }

    pub fn z_grid(&self) -> &[f64] {
        &self.z_grid
    }

    pub fn node(&self, iy: usize, iz: usize) -> f64 {
        self.intensity[iy * self.z_grid.len() + iz]
    }

    /// Bilinear interpolation of the normalised grid times `power`.
    pub fn sample(&self, y: f64, z: f64, power: f64) -> Result<f64> {
        let (iy, ty) = locate(&self.y_grid, y).ok_or_else(|| {
            Error::OutOfDomain(format!("y = {:.3} nm outside the tabulated grid", y / units::NM))
        })?;
        let (iz, tz) = locate(&self.z_grid, z).ok_or_else(|| {
            Error::OutOfDomain(format!("z = {:.3} nm outside the tabulated grid", z / units::NM))
        })?;
        let v00 = self.node(iy, iz);
        let v01 = self.node(iy, iz + 1);
        let v10 = self.node(iy + 1, iz);
        let v11 = self.node(iy + 1, iz + 1);
        let v = (1.0 - ty) * ((1.0 - tz) * v00 + tz * v01) + ty * ((1.0 - tz) * v10 + tz * v11);
        Ok(v * power)
    }

    /// Reads `y_nm,z_nm,intensity_per_W` rows covering a complete
    /// rectangular grid, in any row order.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_reader(file, path)
    }

    pub fn from_reader<R: std::io::Read>(reader: R, path: &Path) -> Result<Self> {
        let parse_err = |row: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        let expected = ["y_nm", "z_nm", "intensity_per_W"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(parse_err(1, format!("expected header {}", expected.join(","))));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| parse_err(row, e.to_string()))?;
            let mut vals = [0.0; 3];
            for (k, v) in vals.iter_mut().enumerate() {
                *v = rec
                    .get(k)
                    .ok_or_else(|| parse_err(row, "missing column".into()))?
                    .parse()
                    .map_err(|e| parse_err(row, format!("column {}: {e}", expected[k])))?;
            }
            rows.push(vals);
        }
        if rows.is_empty() {
            return Err(parse_err(2, "no data rows".into()));
        }
        let axis = |k: usize| {
            let mut v: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let ys = axis(0);
        let zs = axis(1);
        let nz = zs.len();
        let mut grid = vec![f64::NAN; ys.len() * nz];
        for (i, r) in rows.iter().enumerate() {
            let iy = ys.binary_search_by(|p| p.total_cmp(&r[0])).unwrap();
            let iz = zs.binary_search_by(|p| p.total_cmp(&r[1])).unwrap();
            let slot = &mut grid[iy * nz + iz];
            if !slot.is_nan() {
                return Err(parse_err(i + 2, format!("duplicate node ({}, {})", r[0], r[1])));
            }
            *slot = r[2];
        }
        if grid.iter().any(|v| v.is_nan()) {
            return Err(parse_err(
                rows.len() + 1,
                format!("incomplete grid: {} rows for {}×{} nodes", rows.len(), ys.len(), nz),
            ));
        }
        let to_si = |v: Vec<f64>| v.into_iter().map(|x| x * units::NM).collect();
        Self::new(to_si(ys), to_si(zs), grid)
    }
}

fn check_uniform(grid: &[f64], name: &str) -> Result<()> {
    let step = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    ensure(step > 0.0, || format!("{name} grid must be ascending"))?;
    for (i, w) in grid.windows(2).enumerate() {
        let d = w[1] - w[0];
        if (d - step).abs() > 1e-9 * step {
            return Err(invalid(format!(
                "{name} grid spacing not uniform at node {i}: {d} vs {step}"
            )));
        }
    }
    Ok(())
}

/// Cell index and fractional offset for `x`, or `None` outside the grid.
fn locate(grid: &[f64], x: f64) -> Option<(usize, f64)> {
    let n = grid.len();
    if !(x >= grid[0] && x <= grid[n - 1]) {
        return None;
    }
    let i = match grid.binary_search_by(|p| p.total_cmp(&x)) {
        Ok(i) => i.min(n - 2),
        Err(i) => i - 1,
    };
    let t = (x - grid[i]) / (grid[i + 1] - grid[i]);
    Some((i, t))
}

/// Either field source, evaluated at a point of the cross-section plane.
#[derive(Debug, Clone)]
pub enum FieldModel {
    /// Radial law evaluated at `r = hypot(y, z)`.
    Analytic(AnalyticEvanescentModel),
    Tabulated { mode: TabulatedMode, power: f64 },
}

impl FieldModel {
    pub fn intensity_at(&self, y: f64, z: f64) -> Result<f64> {
        match self {
            FieldModel::Analytic(m) => m.intensity(y.hypot(z)),
            FieldModel::Tabulated { mode, power } => mode.sample(y, z, *power),
        }
    }

    pub fn power(&self) -> f64 {
        match self {
            FieldModel::Analytic(m) => m.power,
            FieldModel::Tabulated { power, .. } => *power,
        }
    }

    /// Same field with a different guided power.
    pub fn with_power(&self, power: f64) -> Self {
        match self {
            FieldModel::Analytic(m) => FieldModel::Analytic(AnalyticEvanescentModel { power, ..*m }),
            FieldModel::Tabulated { mode, .. } => FieldModel::Tabulated {
                mode: mode.clone(),
                power,
            },
        }
    }

    /// Radius below which the field is undefined, if the model has one.
    pub fn r_min(&self) -> Option<f64> {
        match self {
            FieldModel::Analytic(m) => Some(m.r_min),
            FieldModel::Tabulated { .. } => None,
        }
    }
}

/// Saturation intensity and the line parameters it was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationContext {
    pub i_sat: f64,
    pub gamma: f64,
    pub sigma_0: f64,
    pub omega_0: f64,
}

impl SaturationContext {
    /// `I_sat = ħω₀Γ / 2σ₀`.
    pub fn from_constants(c: &PhysicalConstants) -> Self {
        Self {
            i_sat: c.hbar * c.omega_0 * c.gamma / (2.0 * c.sigma_0),
            gamma: c.gamma,
            sigma_0: c.sigma_0,
            omega_0: c.omega_0,
        }
    }

    pub fn saturation(&self, intensity: f64) -> f64 {
        intensity / self.i_sat
    }
}

/// Single-atom optical depth per unit guided power, σ₀I/P.
pub fn optical_depth(sigma_0: f64, intensity: f64, power: f64) -> Result<f64> {
    ensure(power > 0.0, || format!("optical depth needs positive power, got {power}"))?;
    Ok(sigma_0 * intensity / power)
}

/// `R_sc = (Γ/2) s/(1+s)` with `s = I/I_sat`.
pub fn scattering_rate(intensity: f64, sat: &SaturationContext) -> Result<f64> {
    ensure(intensity >= 0.0, || format!("intensity must be non-negative, got {intensity}"))?;
    let s = sat.saturation(intensity);
    if s.is_infinite() {
        return Ok(0.5 * sat.gamma);
    }
    Ok(0.5 * sat.gamma * s / (1.0 + s))
}
