//! Run configuration: one JSON document with unit-suffixed keys, converted
//! to SI when the run is assembled.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldmodel::{AnalyticEvanescentModel, FieldModel, TabulatedMode, DEFAULT_R_MIN};
use crate::heating::HeatingOptions;
use crate::inference::{RecaptureOptions, ThermometryOptions};
use crate::quantities::{self, units, PhysicalConstants, TrapSpec};
use crate::rng::derive_seed;
use crate::scanmicroscope::{LoadingModel, OcclusionLoss, ScanAxis, ScanSpec, TweezerArray};

// purposes for seed derivation
const SEED_SCAN: u64 = 1;
const SEED_INNER: u64 = 2;
const SEED_BOOTSTRAP: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub constants: ConstantsBlock,
    #[serde(default)]
    pub trap: TrapBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub array: Option<ArrayBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanBlock>,
    #[serde(default)]
    pub loading: LoadingBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heating: Option<HeatingBlock>,
    #[serde(default)]
    pub occlusion: OcclusionBlock,
    #[serde(default)]
    pub fc_matrix: FcMatrixBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitBlock>,
    #[serde(default)]
    pub thermometry: ThermometryBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsBlock {
    pub atom_mass_kg: f64,
    pub wavelength_d2_nm: f64,
    #[serde(rename = "gamma_2pi_MHz")]
    pub gamma_2pi_mhz: f64,
    #[serde(rename = "omega_recoil_2pi_kHz")]
    pub omega_recoil_2pi_khz: f64,
    /// Defaults to the two-level value 3λ²/2π.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_0_m2: Option<f64>,
    #[serde(rename = "hbar_Js")]
    pub hbar_js: f64,
    #[serde(rename = "k_boltzmann_J_K")]
    pub k_boltzmann_j_k: f64,
    pub gravity_m_s2: f64,
}

impl Default for ConstantsBlock {
    fn default() -> Self {
        Self {
            atom_mass_kg: quantities::CESIUM_MASS,
            wavelength_d2_nm: 852.347,
            gamma_2pi_mhz: 5.2227,
            omega_recoil_2pi_khz: 2.0663,
            sigma_0_m2: None,
            hbar_js: quantities::HBAR,
            k_boltzmann_j_k: quantities::K_BOLTZMANN,
            gravity_m_s2: 9.81,
        }
    }
}

impl ConstantsBlock {
    pub fn to_constants(&self) -> Result<PhysicalConstants> {
        let wavelength = self.wavelength_d2_nm * units::NM;
        let c = PhysicalConstants {
            hbar: self.hbar_js,
            k_boltzmann: self.k_boltzmann_j_k,
            atom_mass: self.atom_mass_kg,
            wavelength_d2: wavelength,
            gamma: 2.0 * PI * self.gamma_2pi_mhz * units::MHZ,
            omega_0: quantities::transition_frequency(wavelength),
            omega_recoil: 2.0 * PI * self.omega_recoil_2pi_khz * units::KHZ,
            sigma_0: self
                .sigma_0_m2
                .unwrap_or_else(|| quantities::two_level_cross_section(wavelength)),
            gravity: self.gravity_m_s2,
        };
        c.validate().map_err(|e| Error::Config(format!("constants: {e}")))?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrapBlock {
    #[serde(rename = "depth_uK")]
    pub depth_uk: f64,
    #[serde(rename = "omega_trap_2pi_kHz")]
    pub omega_trap_2pi_khz: f64,
    pub waist_um: f64,
}

impl Default for TrapBlock {
    fn default() -> Self {
        Self {
            depth_uk: 340.0,
            omega_trap_2pi_khz: 30.1,
            waist_um: 1.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldBlock {
    Analytic {
        #[serde(rename = "power_pW")]
        power_pw: f64,
        decay_length_nm: f64,
        #[serde(default = "default_r_min_nm")]
        r_min_nm: f64,
    },
    Tabulated {
        /// CSV `y_nm,z_nm,intensity_per_W`.
        path: PathBuf,
        #[serde(rename = "power_pW")]
        power_pw: f64,
    },
}

fn default_r_min_nm() -> f64 {
    DEFAULT_R_MIN / units::NM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayBlock {
    pub rows: usize,
    pub cols: usize,
    #[serde(default = "default_pitch")]
    pub pitch_um: f64,
    #[serde(default)]
    pub origin_um: [f64; 3],
    #[serde(default = "default_aod", rename = "aod_calibration_um_per_MHz")]
    pub aod_calibration_um_per_mhz: f64,
}

fn default_pitch() -> f64 {
    5.0
}

fn default_aod() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    #[serde(default = "default_axis")]
    pub axis: ScanAxis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_um: Option<f64>,
    #[serde(default, rename = "start_MHz", skip_serializing_if = "Option::is_none")]
    pub start_mhz: Option<f64>,
    #[serde(default, rename = "stop_MHz", skip_serializing_if = "Option::is_none")]
    pub stop_mhz: Option<f64>,
    #[serde(default, rename = "step_MHz", skip_serializing_if = "Option::is_none")]
    pub step_mhz: Option<f64>,
    #[serde(default = "default_shots")]
    pub shots: u32,
    /// Derived from the top-level seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Light in the waveguide during the scan (needs `field` and `heating`).
    #[serde(default)]
    pub with_light: bool,
    /// Geometry element carrying the light; the first element when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waveguide_element: Option<String>,
}

fn default_axis() -> ScanAxis {
    ScanAxis::Position
}

fn default_shots() -> u32 {
    200
}

impl ScanBlock {
    /// Scan coordinates in SI (m or Hz), from `start` to `stop` inclusive.
    pub fn to_spec(&self) -> Result<ScanSpec> {
        let (range, scale, unit) = match self.axis {
            ScanAxis::Position => ([self.start_um, self.stop_um, self.step_um], units::UM, "um"),
            ScanAxis::AodFrequency => ([self.start_mhz, self.stop_mhz, self.step_mhz], units::MHZ, "MHz"),
        };
        let other = match self.axis {
            ScanAxis::Position => [self.start_mhz, self.stop_mhz, self.step_mhz],
            ScanAxis::AodFrequency => [self.start_um, self.stop_um, self.step_um],
        };
        if other.iter().any(Option::is_some) {
            return Err(Error::Config(format!(
                "scan: axis {:?} takes start_{unit}/stop_{unit}/step_{unit} only",
                self.axis
            )));
        }
        let [Some(start), Some(stop), Some(step)] = range else {
            return Err(Error::Config(format!("scan: start_{unit}, stop_{unit} and step_{unit} are required")));
        };
        if !(step > 0.0 && stop >= start && start.is_finite() && stop.is_finite()) {
            return Err(Error::Config(format!(
                "scan: need step_{unit} > 0 and stop_{unit} ≥ start_{unit}"
            )));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        let coordinates = (0..=n).map(|i| (start + i as f64 * step) * scale).collect();
        Ok(ScanSpec {
            axis: self.axis,
            coordinates,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadingBlock {
    pub fill_probability: f64,
    pub transport_survival: f64,
}

impl Default for LoadingBlock {
    fn default() -> Self {
        let d = LoadingModel::default();
        Self {
            fill_probability: d.fill_probability,
            transport_survival: d.transport_survival,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatingBlock {
    #[serde(rename = "temperature_uK")]
    pub temperature_uk: f64,
    pub pulse_ms: f64,
    pub n_trunc: usize,
    pub double_kick: bool,
    pub position_average: bool,
    /// Height of the trap centres above the waveguide centre.
    pub site_z_nm: f64,
}

impl Default for HeatingBlock {
    fn default() -> Self {
        Self {
            temperature_uk: 40.0,
            pulse_ms: 6.0,
            n_trunc: 130,
            double_kick: false,
            position_average: false,
            site_z_nm: 0.0,
        }
    }
}

impl HeatingBlock {
    pub fn options(&self) -> HeatingOptions {
        HeatingOptions {
            double_kick: self.double_kick,
            position_average: self.position_average,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcclusionBlock {
    pub half_loss_fraction: f64,
    pub focus_offset_left_um: f64,
    pub focus_offset_right_um: f64,
}

impl Default for OcclusionBlock {
    fn default() -> Self {
        Self {
            half_loss_fraction: OcclusionLoss::default().half_loss_fraction,
            focus_offset_left_um: 0.0,
            focus_offset_right_um: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FcMatrixBlock {
    /// Overrides the Lamb-Dicke parameter derived from constants and trap.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Overrides `heating.n_trunc`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_trunc: Option<usize>,
    /// Columns `m ≤ report_max_m` enter the completeness flag.
    pub report_max_m: usize,
}

impl Default for FcMatrixBlock {
    fn default() -> Self {
        Self {
            eta: None,
            n_trunc: None,
            report_max_m: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    Decay,
    Temperature,
    Tilt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitBlock {
    pub kind: FitKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Fixed guided power of a decay fit; defaults to the field block's.
    #[serde(default, rename = "power_pW", skip_serializing_if = "Option::is_none")]
    pub power_pw: Option<f64>,
    #[serde(default)]
    pub free_prefactor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermometryBlock {
    pub axial_ratio: f64,
    /// 0 means as many samples as the observation.
    pub inner_samples: u32,
    pub bootstrap: usize,
    #[serde(rename = "t_min_uK")]
    pub t_min_uk: f64,
    #[serde(rename = "t_max_uK")]
    pub t_max_uk: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap_seed: Option<u64>,
}

impl Default for ThermometryBlock {
    fn default() -> Self {
        let d = ThermometryOptions::default();
        Self {
            axial_ratio: d.recapture.axial_ratio,
            inner_samples: d.inner_samples,
            bootstrap: d.bootstrap,
            t_min_uk: d.t_min / units::UK,
            t_max_uk: d.t_max / units::UK,
            inner_seed: None,
            bootstrap_seed: None,
        }
    }
}

impl RunConfig {
    /// Parses a configuration file; relative paths are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let base = std::path::absolute(base).map_err(|source| Error::Io {
            path: base.to_path_buf(),
            source,
        })?;
        cfg.rebase(&base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(FieldBlock::Tabulated { path, .. }) = &mut self.field {
            fix(path);
        }
        if let Some(p) = &mut self.geometry_file {
            fix(p);
        }
        if let Some(p) = self.fit.as_mut().and_then(|f| f.input.as_mut()) {
            fix(p);
        }
        if let Some(p) = &mut self.output_dir {
            fix(p);
        }
    }

    /// Applies a command-line seed: it replaces the top-level seed and
    /// drops the seeds previously derived from it.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = seed;
        if let Some(s) = &mut self.scan {
            s.seed = None;
        }
        self.thermometry.inner_seed = None;
        self.thermometry.bootstrap_seed = None;
    }

    /// Fills every derived default so the echoed configuration reproduces
    /// the run on its own.
    pub fn resolve(&mut self) -> Result<()> {
        let seed = self.seed;
        if let Some(s) = &mut self.scan {
            s.seed.get_or_insert(derive_seed(seed, SEED_SCAN));
        }
        self.thermometry.inner_seed.get_or_insert(derive_seed(seed, SEED_INNER));
        self.thermometry
            .bootstrap_seed
            .get_or_insert(derive_seed(seed, SEED_BOOTSTRAP));
        if self.constants.sigma_0_m2.is_none() {
            let wavelength = self.constants.wavelength_d2_nm * units::NM;
            self.constants.sigma_0_m2 = Some(quantities::two_level_cross_section(wavelength));
        }
        self.validate()
    }

    /// Checks cross-block consistency and that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        let exists = |what: &str, p: &Path| {
            if p.is_file() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what}: no such file {}", p.display())))
            }
        };
        if let Some(FieldBlock::Tabulated { path, .. }) = &self.field {
            exists("field.path", path)?;
        }
        if let Some(p) = &self.geometry_file {
            exists("geometry_file", p)?;
        }
        if let Some(p) = self.fit.as_ref().and_then(|f| f.input.as_ref()) {
            exists("fit.input", p)?;
        }
        if let Some(s) = &self.scan {
            if s.with_light && (self.field.is_none() || self.heating.is_none()) {
                return Err(Error::Config(
                    "scan.with_light needs both a field and a heating block".into(),
                ));
            }
            s.to_spec()?;
        }
        self.constants.to_constants()?;
        Ok(())
    }

    pub fn constants(&self) -> Result<PhysicalConstants> {
        self.constants.to_constants()
    }

    /// Trap with the truncation of the heating block (130 without one).
    pub fn trap(&self, constants: &PhysicalConstants) -> Result<TrapSpec> {
        let n = self.heating.as_ref().map_or(130, |h| h.n_trunc);
        TrapSpec::new(
            constants.k_boltzmann * self.trap.depth_uk * units::UK,
            2.0 * PI * self.trap.omega_trap_2pi_khz * units::KHZ,
            self.trap.waist_um * units::UM,
            n,
            constants,
        )
        .map_err(|e| Error::Config(format!("trap/heating: {e}")))
    }

    pub fn field(&self) -> Result<FieldModel> {
        match &self.field {
            None => Err(Error::Config("a field block is required".into())),
            Some(FieldBlock::Analytic {
                power_pw,
                decay_length_nm,
                r_min_nm,
            }) => AnalyticEvanescentModel::new(power_pw * units::PW, decay_length_nm * units::NM, r_min_nm * units::NM)
                .map(FieldModel::Analytic)
                .map_err(|e| Error::Config(format!("field: {e}"))),
            Some(FieldBlock::Tabulated { path, power_pw }) => {
                if !(*power_pw >= 0.0) {
                    return Err(Error::Config(format!("field: power_pW must be ≥ 0, got {power_pw}")));
                }
                Ok(FieldModel::Tabulated {
                    mode: TabulatedMode::from_csv(path)?,
                    power: power_pw * units::PW,
                })
            }
        }
    }

    pub fn heating(&self) -> Result<&HeatingBlock> {
        self.heating
            .as_ref()
            .ok_or_else(|| Error::Config("a heating block is required".into()))
    }

    pub fn scan(&self) -> Result<&ScanBlock> {
        self.scan
            .as_ref()
            .ok_or_else(|| Error::Config("a scan block is required".into()))
    }

    pub fn array(&self) -> Result<TweezerArray> {
        let a = self
            .array
            .as_ref()
            .ok_or_else(|| Error::Config("an array block is required".into()))?;
        TweezerArray::new(
            a.rows,
            a.cols,
            a.pitch_um * units::UM,
            a.origin_um.map(|v| v * units::UM),
            self.trap.waist_um * units::UM,
            a.aod_calibration_um_per_mhz * units::UM / units::MHZ,
        )
        .map_err(|e| Error::Config(format!("array: {e}")))
    }

    pub fn loading(&self) -> Result<LoadingModel> {
        let scan = self.scan()?;
        let l = LoadingModel {
            fill_probability: self.loading.fill_probability,
            transport_survival: self.loading.transport_survival,
            shots: scan.shots,
            seed: scan.seed.unwrap_or_else(|| derive_seed(self.seed, SEED_SCAN)),
        };
        l.validate().map_err(|e| Error::Config(format!("loading: {e}")))?;
        Ok(l)
    }

    pub fn occlusion(&self) -> Result<OcclusionLoss> {
        let o = OcclusionLoss {
            half_loss_fraction: self.occlusion.half_loss_fraction,
        };
        o.validate().map_err(|e| Error::Config(format!("occlusion: {e}")))?;
        Ok(o)
    }

    pub fn thermometry(&self) -> ThermometryOptions {
        let t = &self.thermometry;
        ThermometryOptions {
            recapture: RecaptureOptions {
                axial_ratio: t.axial_ratio,
            },
            inner_seed: t.inner_seed.unwrap_or_else(|| derive_seed(self.seed, SEED_INNER)),
            inner_samples: t.inner_samples,
            t_min: t.t_min_uk * units::UK,
            t_max: t.t_max_uk * units::UK,
            bootstrap: t.bootstrap,
            bootstrap_seed: t.bootstrap_seed.unwrap_or_else(|| derive_seed(self.seed, SEED_BOOTSTRAP)),
            log_tolerance: ThermometryOptions::default().log_tolerance,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_library_defaults() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        let c = cfg.constants().unwrap();
        let d = PhysicalConstants::default();
        for (a, b) in [
            (c.gamma, d.gamma),
            (c.omega_recoil, d.omega_recoil),
            (c.sigma_0, d.sigma_0),
            (c.wavelength_d2, d.wavelength_d2),
        ] {
            assert!((a / b - 1.0).abs() < 1e-14);
        }
        let t = cfg.trap(&c).unwrap();
        assert!((t.depth / TrapSpec::default().depth - 1.0).abs() < 1e-14);
        assert_eq!(t.n_trunc, 130);
    }

    #[test]
    fn unknown_keys_are_reported() {
        let e = serde_json::from_str::<RunConfig>("{\n \"trap\": {\"depth_mK\": 1}\n}").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("depth_mK") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn scan_ranges() {
        let s: ScanBlock =
            serde_json::from_str(r#"{"start_um": -1, "stop_um": 1, "step_um": 0.1}"#).unwrap();
        let spec = s.to_spec().unwrap();
        assert_eq!(spec.coordinates.len(), 21);
        assert!((spec.coordinates[20] - 1e-6).abs() < 1e-18);
        let mixed: ScanBlock =
            serde_json::from_str(r#"{"start_um": -1, "stop_um": 1, "step_MHz": 0.1}"#).unwrap();
        assert!(mixed.to_spec().is_err());
        let aod: ScanBlock = serde_json::from_str(
            r#"{"axis": "aod_frequency", "start_MHz": -2, "stop_MHz": 2, "step_MHz": 0.5}"#,
        )
        .unwrap();
        assert_eq!(aod.to_spec().unwrap().coordinates[0], -2e6);
    }

    #[test]
    fn seeds_derive_from_the_top_level_seed() {
        let mut a: RunConfig =
            serde_json::from_str(r#"{"seed": 5, "scan": {"start_um": 0, "stop_um": 1, "step_um": 1}}"#).unwrap();
        a.resolve().unwrap();
        let scan_seed = a.scan.as_ref().unwrap().seed.unwrap();
        a.override_seed(6);
        a.resolve().unwrap();
        assert_ne!(a.scan.as_ref().unwrap().seed.unwrap(), scan_seed);
    }
}
