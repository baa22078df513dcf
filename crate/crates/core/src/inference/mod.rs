//! Parameter estimation: evanescent decay-length fits, release-recapture
//! thermometry and the least-squares machinery they share with tilt fits.

pub mod decay;
pub mod lsq;
pub mod thermometry;

use serde::{Deserialize, Serialize};

pub use decay::{fit_decay_length, DecayFitOptions, DecaySample};
pub use thermometry::{
    fit_temperature, release_recapture_simulate, RecaptureEnsemble, RecaptureOptions, ReleaseRecaptureCurve,
    ThermometryOptions,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParam {
    pub name: String,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Vec<FitParam>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    /// The estimate sits on a search bound.
    pub at_bound: bool,
    /// Per-point residuals in the space the fit minimised.
    pub residuals: Vec<f64>,
}

/// One line of the JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub param: String,
    pub value: f64,
    pub std_error: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual_norm: f64,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<&FitParam> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.param(name).map(|p| p.value)
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.param(name).map(|p| p.std_error)
    }

    pub fn summary(&self) -> Vec<ParamSummary> {
        self.params
            .iter()
            .map(|p| ParamSummary {
                param: p.name.clone(),
                value: p.value,
                std_error: p.std_error,
                converged: self.converged,
                iterations: self.iterations,
                residual_norm: self.residual_norm,
            })
            .collect()
    }
}
