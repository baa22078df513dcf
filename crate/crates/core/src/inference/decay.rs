//! Decay-length fit of the evanescent intensity law in log-intensity space.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lsq::{linear_fit, solve, Model, SolverOptions};
use super::{FitParam, FitResult};
use crate::error::{ensure, invalid, Result};
use crate::fieldmodel::intensity_law;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecaySample {
    /// Distance from the waveguide centre, m.
    pub r: f64,
    /// W/m²
    pub intensity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DecayFitOptions {
    /// Fit the power as a free prefactor instead of holding it fixed.
    pub free_prefactor: bool,
    pub solver: SolverOptions,
}

/// Residuals in scaled units: `x = r/s`, `q = ρ/s`, `c = ln(P/(π s²))`.
struct LogLaw {
    x: Vec<f64>,
    log_i: Vec<f64>,
    fixed_c: Option<f64>,
}

impl LogLaw {
    fn split(&self, p: &[f64]) -> (f64, f64) {
        match self.fixed_c {
            Some(c) => (p[0], c),
            None => (p[0], p[1]),
        }
    }
}

impl Model for LogLaw {
    fn residuals(&self, p: &[f64]) -> DVector<f64> {
        let (q, c) = self.split(p);
        DVector::from_iterator(
            self.x.len(),
            self.x
                .iter()
                .zip(&self.log_i)
                .map(|(x, li)| li - (c - q.ln() - x.ln() - 2.0 * x / q)),
        )
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let (q, _) = self.split(p);
        let cols = if self.fixed_c.is_some() { 1 } else { 2 };
        DMatrix::from_fn(self.x.len(), cols, |i, k| {
            if k == 0 {
                1.0 / q - 2.0 * self.x[i] / (q * q)
            } else {
                -1.0
            }
        })
    }
}

fn check_samples(samples: &[DecaySample], weights: Option<&[f64]>) -> Result<()> {
    ensure(samples.len() >= 3, || {
        format!("decay fit needs at least 3 samples, got {}", samples.len())
    })?;
    for (i, s) in samples.iter().enumerate() {
        if !(s.r > 0.0 && s.r.is_finite() && s.intensity > 0.0 && s.intensity.is_finite()) {
            return Err(invalid(format!(
                "sample {i}: r = {} m, I = {} W/m² (both must be positive)",
                s.r, s.intensity
            )));
        }
    }
    if let Some(w) = weights {
        ensure(w.len() == samples.len(), || {
            format!("{} weights for {} samples", w.len(), samples.len())
        })?;
        ensure(w.iter().all(|v| *v > 0.0 && v.is_finite()), || "weights must be positive".into())?;
    }
    Ok(())
}

/// Σ w (ln I − ln I_model)², the quantity `fit_decay_length` minimises.
pub fn decay_objective(samples: &[DecaySample], power: f64, decay_length: f64, weights: Option<&[f64]>) -> f64 {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let w = weights.map_or(1.0, |w| w[i]);
            let e = s.intensity.ln() - intensity_law(power, decay_length, s.r).ln();
            w * e * e
        })
        .sum()
}

/// Fits the decay length ρ of `I(r) = P/(πρr)·exp(−2r/ρ)` to intensity samples.
///
/// Returns `decay_length` (m) and, with a free prefactor, the effective
/// `power` (W). The start comes from the straight line through
/// `ln(I·r)` against `r`, whose slope is `−2/ρ`.
pub fn fit_decay_length(
    samples: &[DecaySample],
    power: f64,
    weights: Option<&[f64]>,
    opts: &DecayFitOptions,
) -> Result<FitResult> {
    check_samples(samples, weights)?;
    if !opts.free_prefactor {
        ensure(power > 0.0 && power.is_finite(), || {
            format!("power must be positive with a fixed prefactor, got {power}")
        })?;
    }
    let scale = samples.iter().map(|s| s.r).fold(0.0, f64::max);
    let x: Vec<f64> = samples.iter().map(|s| s.r / scale).collect();
    let log_i: Vec<f64> = samples.iter().map(|s| s.intensity.ln()).collect();

    let line_y: Vec<f64> = x.iter().zip(&log_i).map(|(x, li)| li + x.ln()).collect();
    let line = linear_fit(&x, &line_y, weights)?;
    let q0 = if line.slope < 0.0 { -2.0 / line.slope } else { 1.0 };
    let c_fixed = power.ln() - PI.ln() - 2.0 * scale.ln();

    let model = LogLaw {
        x,
        log_i,
        fixed_c: (!opts.free_prefactor).then_some(c_fixed),
    };
    let start: Vec<f64> = if opts.free_prefactor {
        vec![q0, line.intercept + q0.ln()]
    } else {
        vec![q0]
    };
    let w = DVector::from_iterator(samples.len(), (0..samples.len()).map(|i| weights.map_or(1.0, |w| w[i])));
    let sol = solve(&model, &w, &start, &opts.solver)?;
    let se = sol.std_errors(samples.len());

    let mut params = vec![FitParam {
        name: "decay_length".into(),
        value: sol.params[0] * scale,
        std_error: se[0] * scale,
    }];
    if opts.free_prefactor {
        let p_eff = PI * scale * scale * sol.params[1].exp();
        params.push(FitParam {
            name: "power".into(),
            value: p_eff,
            std_error: p_eff * se[1],
        });
    }
    let residuals: Vec<f64> = model.residuals(&sol.params).iter().copied().collect();
    Ok(FitResult {
        params,
        residual_norm: sol.rss.sqrt(),
        iterations: sol.iterations,
        converged: sol.converged,
        gradient_norm: sol.gradient_norm,
        at_bound: false,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use proptest::prelude::*;

    fn forward(rho: f64, power: f64, n: usize) -> Vec<DecaySample> {
        (0..n)
            .map(|i| {
                let r = 0.2e-6 + (5e-6 - 0.2e-6) * i as f64 / (n - 1) as f64;
                DecaySample {
                    r,
                    intensity: intensity_law(power, rho, r),
                }
            })
            .collect()
    }

    #[test]
    fn noiseless_round_trip() {
        let s = forward(743.2e-9, 400e-12, 50);
        let f = fit_decay_length(&s, 400e-12, None, &DecayFitOptions::default()).unwrap();
        assert!(f.converged);
        let rho = f.value("decay_length").unwrap();
        assert!((rho / 743.2e-9 - 1.0).abs() < 1e-9, "{rho}");
        assert!(f.residuals.iter().all(|e| e.abs() < 1e-9));
    }

    #[test]
    fn free_prefactor_ignores_scale() {
        let s = forward(1000e-9, 1e-9, 30);
        let opts = DecayFitOptions {
            free_prefactor: true,
            ..Default::default()
        };
        let base = fit_decay_length(&s, 0.0, None, &opts).unwrap();
        for c in [1e-6, 0.37, 42.0, 1e9] {
            let scaled: Vec<_> = s
                .iter()
                .map(|p| DecaySample {
                    r: p.r,
                    intensity: p.intensity * c,
                })
                .collect();
            let f = fit_decay_length(&scaled, 0.0, None, &opts).unwrap();
            let (a, b) = (base.value("decay_length").unwrap(), f.value("decay_length").unwrap());
            assert!((a / b - 1.0).abs() < 1e-10, "c={c}: {a} vs {b}");
            assert!((f.value("power").unwrap() / (c * 1e-9) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn preconditions() {
        let s = forward(743.2e-9, 400e-12, 3);
        let opts = DecayFitOptions::default();
        assert!(matches!(fit_decay_length(&s[..2], 400e-12, None, &opts), Err(Error::InvalidParameter(_))));
        let mut bad = s.clone();
        bad[1].intensity = 0.0;
        assert!(matches!(fit_decay_length(&bad, 400e-12, None, &opts), Err(Error::InvalidParameter(_))));
        bad[1].intensity = 1.0;
        bad[0].r = -1e-7;
        assert!(fit_decay_length(&bad, 400e-12, None, &opts).is_err());
        assert!(fit_decay_length(&s, 0.0, None, &opts).is_err());
    }

    fn noisy(seed: u64) -> Vec<DecaySample> {
        use rand::Rng;
        let mut rng = crate::rng::substream(seed, 0);
        forward(743.2e-9, 400e-12, 50)
            .into_iter()
            .map(|s| DecaySample {
                r: s.r,
                intensity: s.intensity * (1.0 + 0.05 * (rng.random::<f64>() - 0.5) * 12f64.sqrt()),
            })
            .collect()
    }

    #[test]
    fn gradient_vanishes_against_finite_differences() {
        let s = noisy(3);
        let f = fit_decay_length(&s, 400e-12, None, &DecayFitOptions::default()).unwrap();
        let rho = f.value("decay_length").unwrap();
        // derivative with respect to ln ρ, so the check is unit free
        let h = 1e-6;
        let up = decay_objective(&s, 400e-12, rho * (1.0 + h), None);
        let down = decay_objective(&s, 400e-12, rho * (1.0 - h), None);
        let g = (up - down) / (2.0 * h);
        assert!(g.abs() < 1e-8, "{g}");
        assert!(f.gradient_norm < 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn unit_rescaling_equivariance(rho_nm in 200.0f64..3000.0, seed in 0u64..1000, k in 0usize..3) {
            let factor = [1e6, 1e9, 1e-3][k];
            let mut s = noisy(seed);
            for p in &mut s {
                p.intensity *= (intensity_law(400e-12, rho_nm * 1e-9, p.r) / intensity_law(400e-12, 743.2e-9, p.r)).max(1e-300);
            }
            let opts = DecayFitOptions { free_prefactor: true, ..Default::default() };
            let a = fit_decay_length(&s, 0.0, None, &opts).unwrap();
            let rescaled: Vec<_> = s.iter().map(|p| DecaySample { r: p.r * factor, intensity: p.intensity / (factor * factor) }).collect();
            let b = fit_decay_length(&rescaled, 0.0, None, &opts).unwrap();
            let (ra, rb) = (a.value("decay_length").unwrap(), b.value("decay_length").unwrap());
            prop_assert!((rb / (ra * factor) - 1.0).abs() < 1e-10, "{} vs {}", ra, rb);
        }
    }
}
