use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Rectangular tweezer array in the array frame: columns step along x,
/// rows along y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweezerArray {
    pub rows: usize,
    pub cols: usize,
    /// m
    pub pitch: f64,
    /// Position of site (0, 0), m.
    pub origin: [f64; 3],
    /// 1/e² intensity radius, m.
    pub waist: f64,
    /// Displacement per unit AOD drive-frequency offset, m/Hz.
    pub aod_calibration: f64,
    /// Optional per-site displacement, row-major; empty means none.
    #[serde(default)]
    pub site_offsets: Vec<[f64; 3]>,
}

impl TweezerArray {
    pub fn new(rows: usize, cols: usize, pitch: f64, origin: [f64; 3], waist: f64, aod_calibration: f64) -> Result<Self> {
        let a = Self {
            rows,
            cols,
            pitch,
            origin,
            waist,
            aod_calibration,
            site_offsets: Vec::new(),
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.rows >= 1 && self.cols >= 1, || "array needs at least one site".into())?;
        ensure(self.pitch > 0.0, || format!("pitch must be positive, got {}", self.pitch))?;
        ensure(self.waist > 0.0, || format!("waist must be positive, got {}", self.waist))?;
        ensure(self.aod_calibration > 0.0, || {
            format!("AOD calibration must be positive, got {}", self.aod_calibration)
        })?;
        ensure(
            self.site_offsets.is_empty() || self.site_offsets.len() == self.len(),
            || format!("{} site offsets for {} sites", self.site_offsets.len(), self.len()),
        )
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn row_col(&self, index: usize) -> (usize, usize) {
        (index / self.cols, index % self.cols)
    }

    pub fn site_position(&self, row: usize, col: usize) -> [f64; 3] {
        let mut p = [
            self.origin[0] + col as f64 * self.pitch,
            self.origin[1] + row as f64 * self.pitch,
            self.origin[2],
        ];
        if let Some(off) = self.site_offsets.get(self.index(row, col)) {
            for k in 0..3 {
                p[k] += off[k];
            }
        }
        p
    }
}

/// Displacement produced by an AOD frequency offset.
pub fn aod_to_position(freq_offset: f64, array: &TweezerArray) -> f64 {
    array.aod_calibration * freq_offset
}

pub fn position_to_aod(position: f64, array: &TweezerArray) -> f64 {
    position / array.aod_calibration
}
