//! Recoil heating of a trapped atom on a truncated harmonic ladder.
//!
//! Every scattered photon redistributes the motional populations with the
//! Franck-Condon factors `|<n|D(η)|m>|²`. Population pushed beyond the last
//! kept level is lost, so the total population left after a pulse is the
//! survival probability.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::fieldmodel::{scattering_rate, FieldModel, SaturationContext};
use crate::quantities::{bound_state_count, lamb_dicke, PhysicalConstants, TrapSpec};

/// Mean event count at and below which the Poisson spread of the number of
/// scattering events is kept explicitly.
pub const POISSON_THRESHOLD: f64 = 50.0;
/// Above this many events `apply_events` switches to repeated squaring.
pub const SQUARING_THRESHOLD: u64 = 64;
const POISSON_TAIL: f64 = 1e-9;

/// Transition probabilities between oscillator levels for one recoil kick.
/// Entry `(n, m)` is the probability to go from `m` to `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FranckCondonMatrix {
    eta: f64,
    probs: DMatrix<f64>,
}

impl FranckCondonMatrix {
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn size(&self) -> usize {
        self.probs.nrows()
    }

    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.probs[(n, m)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.probs
    }

    pub fn column_sum(&self, m: usize) -> f64 {
        self.probs.column(m).sum()
    }

    /// Per-kick population leaking out of the kept levels from level `m`.
    pub fn column_deficit(&self, m: usize) -> f64 {
        1.0 - self.column_sum(m)
    }
}

/// Builds the Franck-Condon matrix for Lamb-Dicke parameter `eta` on
/// `n_trunc` levels.
///
/// For `n ≥ m`:
/// `|<n|D(η)|m>|² = e^{-η²} (m!/n!) η^{2(n-m)} [L_m^{(n-m)}(η²)]²`,
/// evaluated in the log domain; the lower triangle follows by symmetry.
pub fn franck_condon_matrix(eta: f64, n_trunc: usize) -> Result<FranckCondonMatrix> {
    ensure(n_trunc >= 2, || format!("n_trunc must be at least 2, got {n_trunc}"))?;
    ensure(eta >= 0.0 && eta.is_finite(), || {
        format!("Lamb-Dicke parameter must be non-negative, got {eta}")
    })?;
    if eta >= 1.0 {
        return Err(Error::UnsupportedRegime(format!(
            "Lamb-Dicke parameter {eta} ≥ 1 is outside the supported regime"
        )));
    }
    let mut probs = DMatrix::<f64>::zeros(n_trunc, n_trunc);
    if eta == 0.0 {
        probs.fill_with_identity();
        return Ok(FranckCondonMatrix { eta, probs });
    }

    let x = eta * eta;
    let ln_eta = eta.ln();
    let ln_fact = log_factorials(n_trunc);
    let mut laguerre = vec![0.0; n_trunc];
    for offset in 0..n_trunc {
        let count = n_trunc - offset;
        generalized_laguerre(offset as f64, x, &mut laguerre[..count]);
        for m in 0..count {
            let n = m + offset;
            let l = laguerre[m];
            let p = if l == 0.0 {
                0.0
            } else {
                let ln_p = -x + ln_fact[m] - ln_fact[n]
                    + 2.0 * offset as f64 * ln_eta
                    + 2.0 * l.abs().ln();
                ln_p.exp()
            };
            probs[(n, m)] = p;
            probs[(m, n)] = p;
        }
    }
    Ok(FranckCondonMatrix { eta, probs })
}

/// `ln k!` for `k = 0..n`.
fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Fills `out[k] = L_k^{(alpha)}(x)` by the three-term recurrence.
fn generalized_laguerre(alpha: f64, x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = 1.0 + alpha - x;
    for k in 1..out.len() - 1 {
        let kf = k as f64;
        out[k + 1] = ((2.0 * kf + 1.0 + alpha - x) * out[k] - (kf + alpha) * out[k - 1]) / (kf + 1.0);
    }
}

/// Populations of the kept oscillator levels. A total below one is
/// population already lost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionalState {
    pub pop: Vec<f64>,
}

impl MotionalState {
    pub fn new(pop: Vec<f64>) -> Result<Self> {
        ensure(pop.iter().all(|p| *p >= 0.0 && p.is_finite()), || {
            "populations must be non-negative".into()
        })?;
        let total: f64 = pop.iter().sum();
        ensure(total <= 1.0 + 1e-12, || format!("total population {total} exceeds 1"))?;
        Ok(Self { pop })
    }

    pub fn ground(n_trunc: usize) -> Self {
        let mut pop = vec![0.0; n_trunc];
        pop[0] = 1.0;
        Self { pop }
    }

    pub fn len(&self) -> usize {
        self.pop.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pop.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.pop.iter().sum()
    }

    pub fn mean_level(&self) -> f64 {
        let t = self.total();
        self.pop.iter().enumerate().map(|(n, p)| n as f64 * p).sum::<f64>() / t
    }
}

/// Boltzmann populations `∝ exp(-nħω_T/k_BT)`, normalised over all bound
/// levels of the trap and then cut to `trap.n_trunc`.
pub fn thermal_state(
    temperature: f64,
    trap: &TrapSpec,
    constants: &PhysicalConstants,
) -> Result<MotionalState> {
    ensure(temperature >= 0.0 && temperature.is_finite(), || {
        format!("temperature must be non-negative, got {temperature}")
    })?;
    trap.validate(constants)?;
    let ladder = bound_state_count(trap.depth, trap.omega_trap, constants)?;
    let n_trunc = trap.n_trunc;
    if temperature == 0.0 {
        return Ok(MotionalState::ground(n_trunc));
    }
    let x = constants.hbar * trap.omega_trap / (constants.k_boltzmann * temperature);
    let weights: Vec<f64> = (0..ladder.max(n_trunc)).map(|n| (-(n as f64) * x).exp()).collect();
    let norm: f64 = weights[..ladder].iter().sum();
    let pop = weights[..n_trunc].iter().map(|w| w / norm).collect();
    Ok(MotionalState { pop })
}

/// Bose occupation `1/(e^{ħω/k_BT} - 1)` of the untruncated oscillator.
pub fn mean_thermal_occupation(temperature: f64, omega: f64, constants: &PhysicalConstants) -> f64 {
    if temperature == 0.0 {
        return 0.0;
    }
    1.0 / (constants.hbar * omega / (constants.k_boltzmann * temperature)).exp_m1()
}

fn check_sizes(state: &MotionalState, fc: &FranckCondonMatrix) -> Result<()> {
    ensure(state.len() == fc.size(), || {
        format!(
            "state has {} levels but the Franck-Condon matrix has {}",
            state.len(),
            fc.size()
        )
    })
}

/// Applies `k` scattering events: returns `fc^k · pop`.
pub fn apply_events(state: &MotionalState, fc: &FranckCondonMatrix, k: u64) -> Result<MotionalState> {
    check_sizes(state, fc)?;
    if k > SQUARING_THRESHOLD {
        return apply_events_by_squaring(state, fc, k);
    }
    let mut v = DVector::from_column_slice(&state.pop);
    for _ in 0..k {
        v = &fc.probs * v;
    }
    Ok(into_state(v))
}

/// `fc^k · pop` by binary exponentiation of the matrix, for any `k`.
pub fn apply_events_by_squaring(
    state: &MotionalState,
    fc: &FranckCondonMatrix,
    mut k: u64,
) -> Result<MotionalState> {
    check_sizes(state, fc)?;
    let mut v = DVector::from_column_slice(&state.pop);
    let mut base = fc.probs.clone();
    while k > 0 {
        if k & 1 == 1 {
            v = &base * v;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    Ok(into_state(v))
}

fn into_state(v: DVector<f64>) -> MotionalState {
    // rounding can produce -0.0 or -1e-300 entries; populations stay physical
    MotionalState {
        pop: v.iter().map(|p| p.max(0.0)).collect(),
    }
}

/// Survival after a pulse with mean event count `rate·duration`.
///
/// Up to [`POISSON_THRESHOLD`] events the Poisson distribution of the event
/// number is summed explicitly; above it the count is rounded to the nearest
/// integer.
pub fn survival_probability(
    state0: &MotionalState,
    fc: &FranckCondonMatrix,
    rate: f64,
    duration: f64,
) -> Result<f64> {
    check_sizes(state0, fc)?;
    ensure(rate >= 0.0 && rate.is_finite(), || format!("rate must be non-negative, got {rate}"))?;
    ensure(duration >= 0.0 && duration.is_finite(), || {
        format!("duration must be non-negative, got {duration}")
    })?;
    let mean = rate * duration;
    if mean > POISSON_THRESHOLD {
        let k = mean.round() as u64;
        return Ok(apply_events(state0, fc, k)?.total().clamp(0.0, 1.0));
    }
    let mut v = DVector::from_column_slice(&state0.pop);
    let survival = poisson_mixture(mean, |_| {
        let total = v.sum();
        v = &fc.probs * &v;
        total
    });
    Ok(survival.clamp(0.0, 1.0))
}

/// `Σ_k Pois(k; mean) · total(k)`, with `total` called for k = 0, 1, 2, …
/// until the accumulated Poisson mass exceeds `1 - 1e-9`.
fn poisson_mixture(mean: f64, mut total: impl FnMut(u64) -> f64) -> f64 {
    let mut pmf = (-mean).exp();
    let mut mass = 0.0;
    let mut acc = 0.0;
    let mut k = 0u64;
    loop {
        acc += pmf * total(k);
        mass += pmf;
        if mass > 1.0 - POISSON_TAIL {
            break;
        }
        k += 1;
        pmf *= mean / k as f64;
    }
    acc
}

/// Model switches with no counterpart in the baseline heating model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HeatingOptions {
    /// Two recoil kicks (absorption and emission) per scattering event.
    #[serde(default)]
    pub double_kick: bool,
    /// Average survival over the thermal position spread along the scan
    /// axis instead of evaluating at the trap centre.
    #[serde(default)]
    pub position_average: bool,
}

/// Precomputed heating model for one trap, temperature and truncation.
///
/// Uses the eigendecomposition of the symmetric Franck-Condon matrix so that
/// the retained population after `k` kicks costs O(n) per evaluation. Event
/// statistics follow [`survival_probability`].
#[derive(Debug, Clone)]
pub struct HeatingModel {
    eigenvalues: Vec<f64>,
    weights: Vec<f64>,
    kicks_per_event: u64,
    initial_total: f64,
}

impl HeatingModel {
    pub fn new(fc: &FranckCondonMatrix, state0: &MotionalState, options: HeatingOptions) -> Result<Self> {
        check_sizes(state0, fc)?;
        let eig = SymmetricEigen::new(fc.probs.clone());
        let s = DVector::from_column_slice(&state0.pop);
        let mut weights = Vec::with_capacity(fc.size());
        for i in 0..fc.size() {
            let q = eig.eigenvectors.column(i);
            weights.push(q.sum() * q.dot(&s));
        }
        Ok(Self {
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            weights,
            kicks_per_event: if options.double_kick { 2 } else { 1 },
            initial_total: state0.total(),
        })
    }

    pub fn for_trap(
        trap: &TrapSpec,
        constants: &PhysicalConstants,
        temperature: f64,
        options: HeatingOptions,
    ) -> Result<Self> {
        let eta = lamb_dicke(constants, trap)?;
        let fc = franck_condon_matrix(eta, trap.n_trunc)?;
        let state0 = thermal_state(temperature, trap, constants)?;
        Self::new(&fc, &state0, options)
    }

    /// Total population after `k` scattering events.
    pub fn retained(&self, events: u64) -> f64 {
        if events == 0 {
            return self.initial_total;
        }
        let kicks = events.saturating_mul(self.kicks_per_event);
        let exp = i32::try_from(kicks).unwrap_or(i32::MAX);
        let total: f64 = self
            .eigenvalues
            .iter()
            .zip(&self.weights)
            .map(|(l, w)| w * l.powi(exp))
            .sum();
        total.clamp(0.0, 1.0)
    }

    pub fn survival(&self, rate: f64, duration: f64) -> Result<f64> {
        ensure(rate >= 0.0 && rate.is_finite(), || format!("rate must be non-negative, got {rate}"))?;
        ensure(duration >= 0.0 && duration.is_finite(), || {
            format!("duration must be non-negative, got {duration}")
        })?;
        let mean = rate * duration;
        if mean > POISSON_THRESHOLD {
            return Ok(self.retained(mean.round() as u64));
        }
        Ok(poisson_mixture(mean, |k| self.retained(k)).clamp(0.0, 1.0))
    }
}

/// A trap centre in the waveguide cross-section plane, m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SitePosition {
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurvePoint {
    /// Scan coordinate: device-plane displacement (m) or pulse duration (s).
    pub coordinate: f64,
    pub intensity: f64,
    pub saturation: f64,
    pub rate: f64,
    pub n_events_mean: f64,
    pub survival: f64,
}

/// Pulse and thermal parameters shared by every site of a survival curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    pub temperature: f64,
    pub duration: f64,
    pub options: HeatingOptions,
}

// 7-point Gauss-Hermite rule (physicists' weight e^{-x²}).
const GH_NODES: [f64; 7] = [
    -2.651_961_356_835_233,
    -1.673_551_628_767_471,
    -0.816_287_882_858_964_7,
    0.0,
    0.816_287_882_858_964_7,
    1.673_551_628_767_471,
    2.651_961_356_835_233,
];
const GH_WEIGHTS: [f64; 7] = [
    0.000_971_781_245_099_519_2,
    0.054_515_582_819_127_03,
    0.425_607_252_610_127_8,
    0.810_264_617_556_807_3,
    0.425_607_252_610_127_8,
    0.054_515_582_819_127_03,
    0.000_971_781_245_099_519_2,
];

/// Evaluates the survival at each site: intensity at the trap centre,
/// saturation, scattering rate, then the heating model.
pub fn survival_vs_position(
    sites: &[SitePosition],
    field: &FieldModel,
    sat: &SaturationContext,
    trap: &TrapSpec,
    constants: &PhysicalConstants,
    pulse: &PulseSpec,
) -> Result<Vec<SurvivalCurvePoint>> {
    let model = HeatingModel::for_trap(trap, constants, pulse.temperature, pulse.options)?;
    survival_vs_position_with(&model, sites, field, sat, trap, constants, pulse)
}

/// As [`survival_vs_position`] with a prebuilt heating model.
pub fn survival_vs_position_with(
    model: &HeatingModel,
    sites: &[SitePosition],
    field: &FieldModel,
    sat: &SaturationContext,
    trap: &TrapSpec,
    constants: &PhysicalConstants,
    pulse: &PulseSpec,
) -> Result<Vec<SurvivalCurvePoint>> {
    let spread = (constants.k_boltzmann * pulse.temperature / constants.atom_mass).sqrt() / trap.omega_trap;
    sites
        .par_iter()
        .enumerate()
        .map(|(i, site)| {
            site_point(model, site, field, sat, pulse, spread).map_err(|e| Error::Site {
                site: i,
                source: Box::new(e),
            })
        })
        .collect()
}

fn site_point(
    model: &HeatingModel,
    site: &SitePosition,
    field: &FieldModel,
    sat: &SaturationContext,
    pulse: &PulseSpec,
    spread: f64,
) -> Result<SurvivalCurvePoint> {
    let intensity = field.intensity_at(site.y, site.z)?;
    let rate = scattering_rate(intensity, sat)?;
    let survival = if pulse.options.position_average && spread > 0.0 {
        let mut acc = 0.0;
        for (x, w) in GH_NODES.iter().zip(GH_WEIGHTS) {
            let y = site.y + std::f64::consts::SQRT_2 * spread * x;
            // nodes inside the structure count as lost
            let s = match field.intensity_at(y, site.z) {
                Ok(i) => model.survival(scattering_rate(i, sat)?, pulse.duration)?,
                Err(Error::OutOfDomain(_)) => 0.0,
                Err(e) => return Err(e),
            };
            acc += w * s;
        }
        acc / std::f64::consts::PI.sqrt()
    } else {
        model.survival(rate, pulse.duration)?
    };
    Ok(SurvivalCurvePoint {
        coordinate: site.y,
        intensity,
        saturation: sat.saturation(intensity),
        rate,
        n_events_mean: rate * pulse.duration,
        survival,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantities::units;
    use proptest::prelude::*;

    /// `<n|D(η)|m>` from the normal-ordered series
    /// `e^{-η²/2} √(m!n!) Σ_j (-1)^j η^{n-m+2j} / (j!(m-j)!(n-m+j)!)`
    /// with integer factorials.
    fn displacement_element(n: usize, m: usize, eta: f64) -> f64 {
        fn fact(k: usize) -> u64 {
            (1..=k as u64).product()
        }
        let mut sum = 0.0;
        for j in 0..=m {
            if n + j < m {
                continue;
            }
            let denom = fact(j) * fact(m - j) * fact(n + j - m);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * eta.powi((n + 2 * j - m) as i32) / denom as f64;
        }
        (-eta * eta / 2.0).exp() * ((fact(m) * fact(n)) as f64).sqrt() * sum
    }

    #[test]
    fn small_ladder_matches_series() {
        for eta in [0.1, 0.26, 0.262, 0.5, 0.9] {
            let fc = franck_condon_matrix(eta, 4).unwrap();
            for n in 0..4 {
                for m in 0..4 {
                    let d = displacement_element(n, m, eta);
                    assert!((fc.get(n, m) - d * d).abs() < 1e-12, "eta={eta} ({n},{m})");
                }
            }
        }
    }

    #[test]
    fn identity_at_zero_eta() {
        let fc = franck_condon_matrix(0.0, 50).unwrap();
        assert_eq!(fc.matrix(), &DMatrix::<f64>::identity(50, 50));
        let s = MotionalState::new(vec![0.2; 50].iter().map(|p| p / 10.0).collect()).unwrap();
        assert_eq!(apply_events(&s, &fc, 1000).unwrap(), s);
    }

    #[test]
    fn ground_entry_and_errors() {
        let fc = franck_condon_matrix(0.262, 130).unwrap();
        assert!((fc.get(0, 0) - (-0.262f64 * 0.262).exp()).abs() < 1e-14);
        assert!((fc.get(0, 0) - 0.9337).abs() < 1e-4);
        assert!(matches!(franck_condon_matrix(1.0, 10), Err(Error::UnsupportedRegime(_))));
        assert!(matches!(franck_condon_matrix(0.3, 1), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn completeness_and_structure() {
        for eta in [0.1, 0.26, 0.262, 0.5] {
            let fc = franck_condon_matrix(eta, 400).unwrap();
            for m in 0..=20 {
                assert!((fc.column_sum(m) - 1.0).abs() < 1e-9, "eta={eta} m={m}");
            }
        }
        let fc = franck_condon_matrix(0.262, 130).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for m in 0..130 {
            let deficit = fc.column_deficit(m);
            assert!(deficit >= -1e-12);
            assert!(deficit >= prev - 1e-12, "m={m}");
            prev = deficit;
            for n in 0..130 {
                let p = fc.get(n, m);
                assert!((0.0..=1.0).contains(&p));
                assert_eq!(p, fc.get(m, n));
            }
        }
    }

    #[test]
    fn thermal_examples() {
        let c = PhysicalConstants::default();
        let trap = TrapSpec::default();
        let g = thermal_state(0.0, &trap, &c).unwrap();
        assert_eq!(g.pop[0], 1.0);
        assert_eq!(g.total(), 1.0);
        let nbar = mean_thermal_occupation(40e-6, trap.omega_trap, &c);
        assert!((nbar - 27.2).abs() < 0.05, "{nbar}");
        let s = thermal_state(40.0 * units::UK, &trap, &c).unwrap();
        assert!(s.total() >= 0.98 && s.total() <= 1.0);
        // tail beyond 130 of 235 bound levels: (1 - q^130)/(1 - q^235)
        let q = (-c.hbar * trap.omega_trap / (c.k_boltzmann * 40e-6)).exp();
        assert!((s.total() - (1.0 - q.powi(130)) / (1.0 - q.powi(235))).abs() < 1e-12);
        assert!(thermal_state(-1.0, &trap, &c).is_err());
    }

    #[test]
    fn apply_events_examples() {
        let c = PhysicalConstants::default();
        let trap = TrapSpec::default();
        let fc = franck_condon_matrix(0.262, trap.n_trunc).unwrap();
        let s = thermal_state(40e-6, &trap, &c).unwrap();
        assert_eq!(apply_events(&s, &fc, 0).unwrap(), s);
        let once = apply_events(&apply_events(&s, &fc, 1).unwrap(), &fc, 1).unwrap();
        let squared = apply_events_by_squaring(&s, &fc, 2).unwrap();
        for (a, b) in once.pop.iter().zip(&squared.pop) {
            assert!((a - b).abs() < 1e-12);
        }
        let direct = (0..100).try_fold(s.clone(), |st, _| apply_events(&st, &fc, 1)).unwrap();
        let fast = apply_events(&s, &fc, 100).unwrap();
        for (a, b) in direct.pop.iter().zip(&fast.pop) {
            assert!((a - b).abs() < 1e-12);
        }
        let short = MotionalState::ground(10);
        assert!(apply_events(&short, &fc, 1).is_err());
    }

    #[test]
    fn survival_examples() {
        let c = PhysicalConstants::default();
        let trap = TrapSpec::default();
        let fc = franck_condon_matrix(0.262, trap.n_trunc).unwrap();
        let ground = MotionalState::ground(trap.n_trunc);
        assert_eq!(survival_probability(&ground, &fc, 1e6, 0.0).unwrap(), 1.0);
        let id = franck_condon_matrix(0.0, trap.n_trunc).unwrap();
        assert_eq!(survival_probability(&ground, &id, 1e7, 1.0).unwrap(), 1.0);
        assert!(survival_probability(&ground, &fc, -1.0, 1.0).is_err());
        assert!(survival_probability(&ground, &fc, 1.0, -1.0).is_err());

        // near the loss edge so the comparison is not trivially 1 vs 1
        let hot = thermal_state(40e-6, &trap.with_n_trunc(60, &c).unwrap(), &c).unwrap();
        let fc60 = franck_condon_matrix(0.262, 60).unwrap();
        let poisson = survival_probability(&hot, &fc60, 50.0, 1.0).unwrap();
        let det = apply_events(&hot, &fc60, 50).unwrap().total();
        assert!((poisson - det).abs() < 0.01, "{poisson} vs {det}");
        assert!(poisson < hot.total());
    }

    #[test]
    fn spectral_route_matches_direct() {
        let c = PhysicalConstants::default();
        let trap = TrapSpec::default();
        let fc = franck_condon_matrix(0.262, trap.n_trunc).unwrap();
        let s = thermal_state(40e-6, &trap, &c).unwrap();
        let model = HeatingModel::new(&fc, &s, HeatingOptions::default()).unwrap();
        for (rate, t) in [(0.0, 1.0), (10.0, 1.0), (50.0, 1.0), (1e3, 0.3), (1e5, 6e-3), (1e6, 6e-3), (1.6e7, 6e-3)] {
            let a = survival_probability(&s, &fc, rate, t).unwrap();
            let b = model.survival(rate, t).unwrap();
            assert!((a - b).abs() < 1e-9, "rate={rate}: {a} vs {b}");
        }
        let dbl = HeatingModel::new(&fc, &s, HeatingOptions { double_kick: true, ..Default::default() }).unwrap();
        assert!((dbl.retained(400) - model.retained(800)).abs() < 1e-12);
    }

    #[test]
    fn truncation_monotone() {
        let c = PhysicalConstants::default();
        let base = TrapSpec::default();
        let mut prev = 0.0;
        for n in [60, 130, 235] {
            let trap = base.with_n_trunc(n, &c).unwrap();
            let fc = franck_condon_matrix(0.262, n).unwrap();
            let s = thermal_state(40e-6, &trap, &c).unwrap();
            let surv = survival_probability(&s, &fc, 2e5, 6e-3).unwrap();
            assert!(surv >= prev, "n={n}: {surv} < {prev}");
            prev = surv;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn events_keep_population_physical(eta in 0.0f64..0.9, k in 0u64..200, seed in 0u64..1000) {
            let n = 40;
            let fc = franck_condon_matrix(eta, n).unwrap();
            let raw: Vec<f64> = (0..n).map(|i| (((seed + 7 * i as u64) % 13) as f64) + 0.5).collect();
            let sum: f64 = raw.iter().sum();
            let s = MotionalState::new(raw.iter().map(|v| v / sum).collect()).unwrap();
            let out = apply_events(&s, &fc, k).unwrap();
            prop_assert!(out.pop.iter().all(|p| *p >= 0.0));
            prop_assert!(out.total() <= s.total() + 1e-12);
            let more = apply_events(&s, &fc, k + 1).unwrap();
            prop_assert!(more.total() <= out.total() + 1e-12);
        }

        #[test]
        fn survival_monotone_in_duration_and_rate(rate in 0.0f64..1e5, t in 0.0f64..2e-3, dt in 0.0f64..2e-3, dr in 0.0f64..1e5) {
            let c = PhysicalConstants::default();
            let trap = TrapSpec::default().with_n_trunc(60, &c).unwrap();
            let fc = franck_condon_matrix(0.262, 60).unwrap();
            let s = thermal_state(40e-6, &trap, &c).unwrap();
            let base = survival_probability(&s, &fc, rate, t).unwrap();
            // the Poisson/rounded hand-off at 50 events has a Jensen gap of ~2e-5
            prop_assert!(survival_probability(&s, &fc, rate, t + dt).unwrap() <= base + 1e-4);
            prop_assert!(survival_probability(&s, &fc, rate + dr, t).unwrap() <= base + 1e-4);
        }
    }
}
