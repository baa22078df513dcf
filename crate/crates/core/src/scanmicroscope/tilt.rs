use serde::{Deserialize, Serialize};

use super::array::{aod_to_position, TweezerArray};
use super::scan::{ScanAxis, SurvivalMap};
use crate::error::{ensure, Error, Result};
use crate::inference::lsq::linear_fit;

/// Relative in-plane rotation between array and structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltEstimate {
    /// rad, positive when the loss line moves towards +x with increasing y.
    pub tilt: f64,
    pub std_error: f64,
    /// `(row y, loss-line x)` for each row, m.
    pub row_centres: Vec<(f64, f64)>,
    pub residual_norm: f64,
}

/// Loss centre of one site's scan, in scan displacement (m), or `None` when
/// the normalised loss never reaches one half.
///
/// Survival is normalised to the site's baseline (mean of the upper quartile)
/// so loading and transport losses drop out; the centre is the centroid of
/// the normalised loss `1 − s/s_ref` over the cells where it exceeds 0.5.
pub fn loss_centre(displacements: &[f64], survival: &[f64]) -> Option<f64> {
    let mut sorted: Vec<f64> = survival.to_vec();
    sorted.sort_by(f64::total_cmp);
    let top = &sorted[sorted.len() - sorted.len().div_ceil(4)..];
    let reference = top.iter().sum::<f64>() / top.len() as f64;
    if reference <= 0.0 {
        return None;
    }
    let (mut wsum, mut xsum) = (0.0, 0.0);
    for (x, s) in displacements.iter().zip(survival) {
        let loss = 1.0 - s / reference;
        if loss >= 0.5 {
            wsum += loss;
            xsum += loss * x;
        }
    }
    (wsum > 0.0).then(|| xsum / wsum)
}

/// Fits the loss line across rows: per row, the loss centres of its sites
/// are converted to the x position of the structure and averaged; a straight
/// line `x(y)` through the row centres gives `tilt = atan(slope)`.
pub fn tilt_estimate(map: &SurvivalMap, array: &TweezerArray) -> Result<TiltEstimate> {
    ensure(map.rows >= 2, || format!("tilt needs at least 2 rows, map has {}", map.rows))?;
    ensure(map.rows == array.rows && map.cols == array.cols, || {
        format!(
            "map is {}×{} but the array is {}×{}",
            map.rows, map.cols, array.rows, array.cols
        )
    })?;
    let displacements: Vec<f64> = map
        .scan_coordinates
        .iter()
        .map(|c| match map.axis {
            ScanAxis::Position => *c,
            ScanAxis::AodFrequency => aod_to_position(*c, array),
        })
        .collect();

    let mut ys = Vec::with_capacity(map.rows);
    let mut xs = Vec::with_capacity(map.rows);
    for row in 0..map.rows {
        let mut hits = Vec::new();
        let mut y = 0.0;
        for col in 0..map.cols {
            let site = array.site_position(row, col);
            y += site[1];
            if let Some(c) = loss_centre(&displacements, map.site(row, col)) {
                hits.push(site[0] + c);
            }
        }
        if hits.is_empty() {
            return Err(Error::InsufficientSignal(format!(
                "row {row}: no site shows a loss feature below half of its baseline"
            )));
        }
        ys.push(y / map.cols as f64);
        xs.push(hits.iter().sum::<f64>() / hits.len() as f64);
    }
    let fit = linear_fit(&ys, &xs, None)?;
    let tilt = fit.slope.atan();
    Ok(TiltEstimate {
        tilt,
        std_error: fit.se_slope / (1.0 + fit.slope * fit.slope),
        row_centres: ys.into_iter().zip(xs).collect(),
        residual_norm: fit.residual_norm,
    })
}
