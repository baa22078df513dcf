//! Release-recapture thermometry: Monte Carlo forward model and a
//! golden-section temperature fit.

use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FitParam, FitResult};
use crate::error::{ensure, Error, Result};
use crate::quantities::{PhysicalConstants, TrapSpec};
use crate::rng::{derive_seed, substream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseRecaptureCurve {
    /// s, ascending
    pub release_times: Vec<f64>,
    pub survival: Vec<f64>,
    pub n_samples: u32,
    pub seed: u64,
}

impl ReleaseRecaptureCurve {
    pub fn validate(&self) -> Result<()> {
        ensure(self.release_times.len() == self.survival.len(), || {
            format!(
                "{} release times but {} survival values",
                self.release_times.len(),
                self.survival.len()
            )
        })?;
        ensure(self.n_samples >= 1, || "n_samples must be at least 1".into())?;
        ensure(self.release_times.iter().all(|t| *t >= 0.0 && t.is_finite()), || {
            "release times must be finite and non-negative".into()
        })?;
        ensure(self.release_times.windows(2).all(|w| w[0] < w[1]), || {
            "release times must be strictly ascending".into()
        })?;
        ensure(self.survival.iter().all(|s| (0.0..=1.0).contains(s)), || {
            "survival values must lie in [0, 1]".into()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecaptureOptions {
    /// Axial trap frequency as a fraction of the radial one.
    pub axial_ratio: f64,
}

impl Default for RecaptureOptions {
    fn default() -> Self {
        Self { axial_ratio: 0.2 }
    }
}

/// A fixed set of standard-normal draws, six per atom (three position,
/// three velocity components). Scaling by `√T` turns it into a thermal
/// ensemble at any temperature, so curves at different temperatures share
/// their random numbers.
#[derive(Debug, Clone)]
pub struct RecaptureEnsemble {
    normals: Vec<[f64; 6]>,
    seed: u64,
}

impl RecaptureEnsemble {
    pub fn new(n_samples: u32, seed: u64) -> Result<Self> {
        ensure(n_samples >= 1, || "n_samples must be at least 1".into())?;
        let normals = (0..n_samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, u64::from(i));
                std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal))
            })
            .collect();
        Ok(Self { normals, seed })
    }

    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }

    /// Recapture fraction at each release time.
    pub fn curve(
        &self,
        temperature: f64,
        trap: &TrapSpec,
        constants: &PhysicalConstants,
        release_times: &[f64],
        opts: &RecaptureOptions,
    ) -> Result<ReleaseRecaptureCurve> {
        ensure(temperature >= 0.0 && temperature.is_finite(), || {
            format!("temperature must be non-negative, got {temperature}")
        })?;
        ensure(opts.axial_ratio > 0.0, || "axial ratio must be positive".into())?;
        ensure(release_times.iter().all(|t| *t >= 0.0 && t.is_finite()), || {
            "release times must be finite and non-negative".into()
        })?;
        ensure(release_times.windows(2).all(|w| w[0] < w[1]), || {
            "release times must be strictly ascending".into()
        })?;
        let m = constants.atom_mass;
        let u0 = trap.depth;
        let w0 = trap.waist;
        let omega_r = trap.omega_trap;
        let omega_z = omega_r * opts.axial_ratio;
        let z_r = (2.0 * u0 / (m * omega_z * omega_z)).sqrt();
        let kt = constants.k_boltzmann * temperature;
        let sigma_r = (kt / m).sqrt() / omega_r;
        let sigma_z = (kt / m).sqrt() / omega_z;
        let sigma_v = (kt / m).sqrt();
        let g = constants.gravity;

        let recaptured = |n: &[f64; 6], t: f64| -> bool {
            let x = n[0] * sigma_r + n[3] * sigma_v * t;
            let y = n[1] * sigma_r + n[4] * sigma_v * t - 0.5 * g * t * t;
            let z = n[2] * sigma_z + n[5] * sigma_v * t;
            let vx = n[3] * sigma_v;
            let vy = n[4] * sigma_v - g * t;
            let vz = n[5] * sigma_v;
            let kinetic = 0.5 * m * (vx * vx + vy * vy + vz * vz);
            let axial = 1.0 + (z / z_r).powi(2);
            let potential = -u0 / axial * (-2.0 * (x * x + y * y) / (w0 * w0 * axial)).exp();
            kinetic + potential < 0.0
        };

        let counts = self
            .normals
            .par_chunks(1024)
            .map(|chunk| {
                let mut c = vec![0u64; release_times.len()];
                for n in chunk {
                    for (k, t) in release_times.iter().enumerate() {
                        if *t == 0.0 || recaptured(n, *t) {
                            c[k] += 1;
                        }
                    }
                }
                c
            })
            .reduce(
                || vec![0u64; release_times.len()],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        let n = self.len() as f64;
        Ok(ReleaseRecaptureCurve {
            release_times: release_times.to_vec(),
            survival: counts.into_iter().map(|c| c as f64 / n).collect(),
            n_samples: self.len() as u32,
            seed: self.seed,
        })
    }
}

/// Simulated release-recapture curve.
///
/// Positions are drawn from the harmonic thermal distribution and velocities
/// from Maxwell-Boltzmann; each atom flies ballistically under gravity
/// (along −y) and is recaptured when its kinetic energy plus the Gaussian
/// tweezer potential at the recapture instant is negative. At zero release
/// time the trap never switches off and every atom is kept.
pub fn release_recapture_simulate(
    temperature: f64,
    trap: &TrapSpec,
    constants: &PhysicalConstants,
    release_times: &[f64],
    n_samples: u32,
    seed: u64,
    opts: &RecaptureOptions,
) -> Result<ReleaseRecaptureCurve> {
    RecaptureEnsemble::new(n_samples, seed)?.curve(temperature, trap, constants, release_times, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermometryOptions {
    pub recapture: RecaptureOptions,
    /// Seed of the simulation compared against inside the search.
    pub inner_seed: u64,
    /// Samples per simulated curve; 0 means as many as the observation.
    pub inner_samples: u32,
    /// Search interval, K.
    pub t_min: f64,
    pub t_max: f64,
    /// Bootstrap resamples for the standard error.
    pub bootstrap: usize,
    pub bootstrap_seed: u64,
    /// Golden-section stopping width in ln T.
    pub log_tolerance: f64,
}

impl Default for ThermometryOptions {
    fn default() -> Self {
        Self {
            recapture: RecaptureOptions::default(),
            inner_seed: 0x5eed,
            inner_samples: 0,
            t_min: 0.1e-6,
            t_max: 1e-3,
            bootstrap: 24,
            bootstrap_seed: 7,
            log_tolerance: 1e-4,
        }
    }
}

/// χ² between an observed curve and a simulated one, with the binomial
/// variance of both.
pub fn recapture_chi2(observed: &ReleaseRecaptureCurve, simulated: &ReleaseRecaptureCurve) -> f64 {
    let inv_n = 1.0 / f64::from(observed.n_samples) + 1.0 / f64::from(simulated.n_samples);
    let floor = 1.0 / f64::from(observed.n_samples.max(simulated.n_samples));
    observed
        .survival
        .iter()
        .zip(&simulated.survival)
        .map(|(o, s)| {
            let p = 0.5 * (o + s);
            let var = (p * (1.0 - p)).max(floor) * inv_n;
            (o - s).powi(2) / var
        })
        .sum()
}

struct Search<'a> {
    ensemble: &'a RecaptureEnsemble,
    trap: &'a TrapSpec,
    constants: &'a PhysicalConstants,
    opts: &'a ThermometryOptions,
}

struct SearchResult {
    temperature: f64,
    chi2: f64,
    iterations: usize,
    at_bound: bool,
}

impl Search<'_> {
    fn chi2(&self, observed: &ReleaseRecaptureCurve, log_t: f64) -> Result<f64> {
        let sim = self.ensemble.curve(
            log_t.exp(),
            self.trap,
            self.constants,
            &observed.release_times,
            &self.opts.recapture,
        )?;
        Ok(recapture_chi2(observed, &sim))
    }

    /// Coarse grid over ln T to bracket the global minimum, then
    /// golden-section inside the bracket.
    fn run(&self, observed: &ReleaseRecaptureCurve) -> Result<SearchResult> {
        const GRID: usize = 41;
        let (lo, hi) = (self.opts.t_min.ln(), self.opts.t_max.ln());
        let nodes: Vec<f64> = (0..GRID).map(|i| lo + (hi - lo) * i as f64 / (GRID - 1) as f64).collect();
        let values = nodes
            .iter()
            .map(|lt| self.chi2(observed, *lt))
            .collect::<Result<Vec<_>>>()?;
        let best = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("non-empty grid");
        let mut a = nodes[best.saturating_sub(1)];
        let mut b = nodes[(best + 1).min(GRID - 1)];

        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let mut fc = self.chi2(observed, c)?;
        let mut fd = self.chi2(observed, d)?;
        let mut iterations = GRID;
        while b - a > self.opts.log_tolerance {
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = self.chi2(observed, c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = self.chi2(observed, d)?;
            }
            iterations += 1;
        }
        let (mut log_t, mut chi2) = if fc <= fd { (c, fc) } else { (d, fd) };
        // the grid nodes themselves stay candidates (the objective is piecewise constant)
        if values[best] < chi2 {
            log_t = nodes[best];
            chi2 = values[best];
        }
        let at_bound = (log_t - lo).abs() <= 2.0 * self.opts.log_tolerance
            || (hi - log_t).abs() <= 2.0 * self.opts.log_tolerance;
        Ok(SearchResult {
            temperature: log_t.exp(),
            chi2,
            iterations,
            at_bound,
        })
    }
}

/// Recovers the temperature behind an observed release-recapture curve.
///
/// The objective compares against a simulation with a fixed inner seed, so
/// it is deterministic. The standard error comes from a parametric
/// bootstrap: binomial resamples of the best-fit curve, each refitted
/// against a simulation with a fresh inner seed, so it covers both the
/// observation and the simulation noise.
pub fn fit_temperature(
    observed: &ReleaseRecaptureCurve,
    trap: &TrapSpec,
    constants: &PhysicalConstants,
    opts: &ThermometryOptions,
) -> Result<FitResult> {
    observed.validate()?;
    ensure(observed.release_times.len() >= 3, || {
        format!(
            "thermometry needs at least 3 release times, got {}",
            observed.release_times.len()
        )
    })?;
    ensure(0.0 < opts.t_min && opts.t_min < opts.t_max, || {
        format!("invalid search interval [{}, {}] K", opts.t_min, opts.t_max)
    })?;
    let max = observed.survival.iter().copied().fold(f64::MIN, f64::max);
    let min = observed.survival.iter().copied().fold(f64::MAX, f64::min);
    if max - min < 0.2 {
        return Err(Error::InsufficientSignal(format!(
            "observed survival only drops by {:.3} (at least 0.2 needed)",
            max - min
        )));
    }
    let inner_samples = if opts.inner_samples == 0 {
        observed.n_samples
    } else {
        opts.inner_samples
    };
    let ensemble = RecaptureEnsemble::new(inner_samples, opts.inner_seed)?;
    let search = Search {
        ensemble: &ensemble,
        trap,
        constants,
        opts,
    };
    let best = search.run(observed)?;
    let fitted = ensemble.curve(best.temperature, trap, constants, &observed.release_times, &opts.recapture)?;

    let replicas = (0..opts.bootstrap)
        .into_par_iter()
        .map(|b| -> Result<f64> {
            let mut rng = substream(opts.bootstrap_seed, b as u64);
            let resampled = ReleaseRecaptureCurve {
                survival: fitted
                    .survival
                    .iter()
                    .map(|p| {
                        let k = Binomial::new(u64::from(observed.n_samples), p.clamp(0.0, 1.0))
                            .expect("probability in range")
                            .sample(&mut rng);
                        k as f64 / f64::from(observed.n_samples)
                    })
                    .collect(),
                ..observed.clone()
            };
            let inner = RecaptureEnsemble::new(inner_samples, derive_seed(opts.inner_seed, b as u64 + 1))?;
            let s = Search {
                ensemble: &inner,
                trap,
                constants,
                opts,
            };
            Ok(s.run(&resampled)?.temperature)
        })
        .collect::<Result<Vec<f64>>>()?;
    let std_error = if replicas.len() >= 2 {
        let mean = replicas.iter().sum::<f64>() / replicas.len() as f64;
        (replicas.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (replicas.len() - 1) as f64).sqrt()
    } else {
        f64::NAN
    };

    let residuals: Vec<f64> = observed
        .survival
        .iter()
        .zip(&fitted.survival)
        .map(|(o, s)| o - s)
        .collect();
    Ok(FitResult {
        params: vec![FitParam {
            name: "temperature".into(),
            value: best.temperature,
            std_error,
        }],
        residual_norm: best.chi2.sqrt(),
        iterations: best.iterations,
        converged: !best.at_bound,
        gradient_norm: 0.0,
        at_bound: best.at_bound,
        residuals,
    })
}
