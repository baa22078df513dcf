//! Physical constants, unit conventions and the trap scalars shared by every
//! other module.
//!
//! Everything inside the crate is SI. The [`units`] factors are used at the
//! file and command-line boundaries only, e.g. `743.0 * units::NM`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, invalid, Result};

/// Multiplicative factors from common lab units to SI.
pub mod units {
    pub const NM: f64 = 1e-9;
    pub const UM: f64 = 1e-6;
    pub const MM: f64 = 1e-3;
    pub const UK: f64 = 1e-6;
    pub const KHZ: f64 = 1e3;
    pub const MHZ: f64 = 1e6;
    pub const MS: f64 = 1e-3;
    pub const US: f64 = 1e-6;
    pub const PW: f64 = 1e-12;
    pub const NW: f64 = 1e-9;
    pub const DEG: f64 = std::f64::consts::PI / 180.0;
}

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const K_BOLTZMANN: f64 = 1.380_649e-23;
/// 133Cs atomic mass.
pub const CESIUM_MASS: f64 = 132.905_451_961 * 1.660_539_066_60e-27;
pub const CESIUM_D2_WAVELENGTH: f64 = 852.347e-9;
pub const CESIUM_D2_LINEWIDTH: f64 = 2.0 * PI * 5.2227e6;
pub const CESIUM_D2_RECOIL: f64 = 2.0 * PI * 2.0663e3;

/// Atomic and universal constants. Defaults are the Cs D2 line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// J·s
    pub hbar: f64,
    /// J/K
    pub k_boltzmann: f64,
    /// kg
    pub atom_mass: f64,
    /// Transition wavelength, m.
    pub wavelength_d2: f64,
    /// Natural linewidth, rad/s.
    pub gamma: f64,
    /// Transition angular frequency, rad/s.
    pub omega_0: f64,
    /// Free-space recoil angular frequency, rad/s.
    pub omega_recoil: f64,
    /// Effective resonant cross-section, m².
    pub sigma_0: f64,
    /// m/s²
    pub gravity: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        let lambda = CESIUM_D2_WAVELENGTH;
        Self {
            hbar: HBAR,
            k_boltzmann: K_BOLTZMANN,
            atom_mass: CESIUM_MASS,
            wavelength_d2: lambda,
            gamma: CESIUM_D2_LINEWIDTH,
            omega_0: transition_frequency(lambda),
            omega_recoil: CESIUM_D2_RECOIL,
            sigma_0: two_level_cross_section(lambda),
            gravity: 9.81,
        }
    }
}

/// ω₀ = 2πc/λ.
pub fn transition_frequency(wavelength: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / wavelength
}

/// Two-level resonant cross-section 3λ²/2π.
pub fn two_level_cross_section(wavelength: f64) -> f64 {
    3.0 * wavelength * wavelength / (2.0 * PI)
}

impl PhysicalConstants {
    /// Builds a constant set for an arbitrary two-level transition, deriving
    /// ω₀, the recoil frequency and the two-level cross-section from the
    /// wavelength and mass.
    pub fn from_transition(atom_mass: f64, wavelength: f64, gamma: f64) -> Result<Self> {
        let mut c = Self {
            atom_mass,
            wavelength_d2: wavelength,
            gamma,
            ..Self::default()
        };
        ensure(wavelength > 0.0 && atom_mass > 0.0, || {
            format!("wavelength ({wavelength}) and mass ({atom_mass}) must be positive")
        })?;
        c.omega_0 = transition_frequency(wavelength);
        c.sigma_0 = two_level_cross_section(wavelength);
        c.omega_recoil = c.derived_recoil();
        c.validate()?;
        Ok(c)
    }

    /// ħk²/2m for k = 2π/λ.
    pub fn derived_recoil(&self) -> f64 {
        let k = 2.0 * PI / self.wavelength_d2;
        self.hbar * k * k / (2.0 * self.atom_mass)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("hbar", self.hbar),
            ("k_boltzmann", self.k_boltzmann),
            ("atom_mass", self.atom_mass),
            ("wavelength_d2", self.wavelength_d2),
            ("gamma", self.gamma),
            ("omega_0", self.omega_0),
            ("omega_recoil", self.omega_recoil),
            ("sigma_0", self.sigma_0),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("constant {name} must be positive, got {v}")));
            }
        }
        ensure(self.gravity.is_finite() && self.gravity >= 0.0, || {
            format!("gravity must be non-negative, got {}", self.gravity)
        })
    }
}

/// Tweezer trap parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapSpec {
    /// Trap depth U, J.
    pub depth: f64,
    /// Radial angular trap frequency, rad/s.
    pub omega_trap: f64,
    /// 1/e² intensity radius, m.
    pub waist: f64,
    /// Number of oscillator levels kept.
    pub n_trunc: usize,
}

impl Default for TrapSpec {
    fn default() -> Self {
        Self {
            depth: K_BOLTZMANN * 340e-6,
            omega_trap: 2.0 * PI * 30.1e3,
            waist: 1.2e-6,
            n_trunc: 130,
        }
    }
}

impl TrapSpec {
    pub fn new(
        depth: f64,
        omega_trap: f64,
        waist: f64,
        n_trunc: usize,
        constants: &PhysicalConstants,
    ) -> Result<Self> {
        let trap = Self {
            depth,
            omega_trap,
            waist,
            n_trunc,
        };
        trap.validate(constants)?;
        Ok(trap)
    }

    pub fn with_n_trunc(self, n_trunc: usize, constants: &PhysicalConstants) -> Result<Self> {
        Self::new(self.depth, self.omega_trap, self.waist, n_trunc, constants)
    }

    pub fn validate(&self, constants: &PhysicalConstants) -> Result<()> {
        ensure(self.waist > 0.0 && self.waist.is_finite(), || {
            format!("waist must be positive, got {}", self.waist)
        })?;
        let bound = bound_state_count(self.depth, self.omega_trap, constants)?;
        ensure(self.n_trunc >= 2 && self.n_trunc <= bound, || {
            format!(
                "n_trunc = {} must lie in [2, {bound}] (bound states of the trap)",
                self.n_trunc
            )
        })
    }

    /// Number of bound oscillator levels below the trap depth.
    pub fn bound_states(&self, constants: &PhysicalConstants) -> Result<usize> {
        bound_state_count(self.depth, self.omega_trap, constants)
    }
}

/// η = √(ω_r/ω_T).
pub fn lamb_dicke(constants: &PhysicalConstants, trap: &TrapSpec) -> Result<f64> {
    lamb_dicke_from(constants.omega_recoil, trap.omega_trap)
}

pub fn lamb_dicke_from(omega_recoil: f64, omega_trap: f64) -> Result<f64> {
    ensure(omega_trap > 0.0 && omega_trap.is_finite(), || {
        format!("trap frequency must be positive, got {omega_trap}")
    })?;
    ensure(omega_recoil >= 0.0, || {
        format!("recoil frequency must be non-negative, got {omega_recoil}")
    })?;
    Ok((omega_recoil / omega_trap).sqrt())
}

/// ⌊U / ħω_T⌋.
pub fn bound_state_count(depth: f64, omega_trap: f64, constants: &PhysicalConstants) -> Result<usize> {
    ensure(depth > 0.0 && depth.is_finite(), || {
        format!("trap depth must be positive, got {depth}")
    })?;
    ensure(omega_trap > 0.0 && omega_trap.is_finite(), || {
        format!("trap frequency must be positive, got {omega_trap}")
    })?;
    let quanta = depth / (constants.hbar * omega_trap);
    // guard the exact-multiple case against a ratio landing at n - 1e-16
    let rounded = quanta.round();
    let n = if (quanta - rounded).abs() <= 1e-9 * rounded.max(1.0) {
        rounded
    } else {
        quanta.floor()
    };
    Ok(n as usize)
}
