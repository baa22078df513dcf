use std::path::Path;

use libm::erf;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::quantities::units;

/// Axis-aligned rectangle in the device frame. `width` is the extent along
/// device x, `length` along device y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub name: String,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub length: f64,
    pub thickness: f64,
}

impl Rect {
    pub fn new(name: impl Into<String>, cx: f64, cy: f64, width: f64, length: f64, thickness: f64) -> Result<Self> {
        let r = Self {
            name: name.into(),
            cx,
            cy,
            width,
            length,
            thickness,
        };
        ensure(
            [width, length, thickness].iter().all(|v| *v > 0.0 && v.is_finite()),
            || format!("element {}: width, length and thickness must be positive", r.name),
        )?;
        Ok(r)
    }
}

/// Nanostructure layout seen by the tweezer array.
///
/// The device frame is rotated by `tilt` relative to the array frame: a
/// structure running along device y appears in the array frame as the line
/// `x = y·tan(tilt)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceGeometry {
    pub elements: Vec<Rect>,
    pub tilt: f64,
    /// Unit vector of the guiding direction, device frame.
    pub waveguide_axis: [f64; 2],
    /// Out-of-plane focus offset for sites on the −x side of an element, m.
    #[serde(default)]
    pub focus_offset_left: f64,
    /// Same for the +x side.
    #[serde(default)]
    pub focus_offset_right: f64,
    /// Tweezer wavelength, used for the Rayleigh range of the offsets.
    pub trap_wavelength: f64,
}

pub const MAX_TILT: f64 = 0.1;
pub const TRAP_WAVELENGTH: f64 = 933e-9;

impl DeviceGeometry {
    pub fn new(elements: Vec<Rect>, tilt: f64) -> Result<Self> {
        let g = Self {
            elements,
            tilt,
            waveguide_axis: [0.0, 1.0],
            focus_offset_left: 0.0,
            focus_offset_right: 0.0,
            trap_wavelength: TRAP_WAVELENGTH,
        };
        g.validate()?;
        Ok(g)
    }

    /// No structure at all.
    pub fn empty() -> Self {
        Self::new(Vec::new(), 0.0).expect("empty geometry is valid")
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.tilt.abs() < MAX_TILT, || {
            format!("|tilt| = {} rad must stay below {MAX_TILT}", self.tilt.abs())
        })?;
        for e in &self.elements {
            Rect::new(e.name.clone(), e.cx, e.cy, e.width, e.length, e.thickness)?;
        }
        let [ax, ay] = self.waveguide_axis;
        ensure(((ax * ax + ay * ay).sqrt() - 1.0).abs() < 1e-9, || {
            "waveguide axis must be a unit vector".into()
        })?;
        ensure(self.trap_wavelength > 0.0, || "trap wavelength must be positive".into())
    }

    /// Maps an array-frame point into the device frame.
    pub fn to_device(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.tilt.sin_cos();
        (x * c - y * s, x * s + y * c)
    }

    /// Signed in-plane distance from the centre line of element `index`
    /// (device x offset) for an array-frame point.
    pub fn transverse_offset(&self, index: usize, x: f64, y: f64) -> Option<f64> {
        let e = self.elements.get(index)?;
        let (xd, _) = self.to_device(x, y);
        Some(xd - e.cx)
    }

    /// Same geometry rigidly translated by `(dx, dy)` in the array frame.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let (ddx, ddy) = self.to_device(dx, dy);
        let mut g = self.clone();
        for e in &mut g.elements {
            e.cx += ddx;
            e.cy += ddy;
        }
        g
    }

    /// Reads `name,cx_um,cy_um,width_um,length_um,thickness_um` rows with an
    /// optional leading `# tilt_deg=<value>` line.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |row: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            message,
        };
        let mut tilt_deg = 0.0;
        let mut header_seen = false;
        let mut elements = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let row = i + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("tilt_deg=") {
                    tilt_deg = v.trim().parse().map_err(|e| err(row, format!("tilt_deg: {e}")))?;
                }
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if !header_seen {
                let expected = ["name", "cx_um", "cy_um", "width_um", "length_um", "thickness_um"];
                if cols != expected {
                    return Err(err(row, format!("expected header {}", expected.join(","))));
                }
                header_seen = true;
                continue;
            }
            if cols.len() != 6 {
                return Err(err(row, format!("expected 6 columns, found {}", cols.len())));
            }
            let mut v = [0.0; 5];
            for (k, slot) in v.iter_mut().enumerate() {
                *slot = cols[k + 1]
                    .parse::<f64>()
                    .map_err(|e| err(row, format!("column {}: {e}", k + 2)))?
                    * units::UM;
            }
            elements.push(
                Rect::new(cols[0], v[0], v[1], v[2], v[3], v[4]).map_err(|e| err(row, e.to_string()))?,
            );
        }
        if !header_seen {
            return Err(err(1, "missing header".into()));
        }
        Self::new(elements, tilt_deg * units::DEG)
    }
}

/// Fraction of a Gaussian spot (1/e² radius `w`, centred at `(x, y)`)
/// falling on the interval product `[x1,x2]×[y1,y2]`.
fn gaussian_box_fraction(x: f64, y: f64, w: f64, x1: f64, x2: f64, y1: f64, y2: f64) -> f64 {
    let k = std::f64::consts::SQRT_2 / w;
    let fx = 0.5 * (erf(k * (x2 - x)) - erf(k * (x1 - x)));
    let fy = 0.5 * (erf(k * (y2 - y)) - erf(k * (y1 - y)));
    fx * fy
}

/// Fraction `O` of the tweezer power intercepted by the structure, for a
/// trap centred at the array-frame point `(x, y)`; elements are summed and
/// the total capped at one.
pub fn occluded_fraction(x: f64, y: f64, geometry: &DeviceGeometry, waist: f64) -> f64 {
    let (xd, yd) = geometry.to_device(x, y);
    let z_r = std::f64::consts::PI * waist * waist / geometry.trap_wavelength;
    let mut total = 0.0;
    for e in &geometry.elements {
        let dz = if xd < e.cx {
            geometry.focus_offset_left
        } else {
            geometry.focus_offset_right
        };
        let w = waist * (1.0 + (dz / z_r).powi(2)).sqrt();
        total += gaussian_box_fraction(
            xd,
            yd,
            w,
            e.cx - 0.5 * e.width,
            e.cx + 0.5 * e.width,
            e.cy - 0.5 * e.length,
            e.cy + 0.5 * e.length,
        );
    }
    total.min(1.0)
}

/// Maps the intercepted fraction to a survival probability.
///
/// Survival is `(1 − O)^κ` with κ fixed by the fraction at which half of the
/// atoms are lost. `half_loss_fraction = 0.5` gives the bare `1 − O`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcclusionLoss {
    pub half_loss_fraction: f64,
}

/// Phenomenological sensitivity: about 1.25 % of the tweezer power on the
/// structure halves the survival, which places the half-loss point of a
/// 180 nm beam where its edge reaches the 1/e² radius of a 1.2 µm waist.
pub const DEFAULT_HALF_LOSS_FRACTION: f64 = 0.0125;

impl Default for OcclusionLoss {
    fn default() -> Self {
        Self {
            half_loss_fraction: DEFAULT_HALF_LOSS_FRACTION,
        }
    }
}

impl OcclusionLoss {
    pub fn validate(&self) -> Result<()> {
        ensure(self.half_loss_fraction > 0.0 && self.half_loss_fraction < 1.0, || {
            format!(
                "half_loss_fraction must lie in (0, 1), got {}",
                self.half_loss_fraction
            )
        })
    }

    pub fn exponent(&self) -> f64 {
        std::f64::consts::LN_2 / -(-self.half_loss_fraction).ln_1p()
    }

    pub fn survival(&self, occluded: f64) -> f64 {
        if occluded >= 1.0 {
            return 0.0;
        }
        (self.exponent() * (-occluded).ln_1p()).exp()
    }
}

/// Survival of an atom whose tweezer, centred at `(x, y)`, partly falls on
/// the structure. Light in the waveguide plays no role here.
pub fn geometric_survival(x: f64, y: f64, geometry: &DeviceGeometry, waist: f64, loss: &OcclusionLoss) -> Result<f64> {
    ensure(waist > 0.0 && waist.is_finite(), || format!("waist must be positive, got {waist}"))?;
    Ok(loss.survival(occluded_fraction(x, y, geometry, waist)))
}
