//! Jerk-limited ("S-curve") point-to-point moves for the focal-plane
//! transport stage.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionSample {
    pub time: f64,
    pub position: f64,
    pub velocity: f64,
    pub acceleration: f64,
}

/// A symmetric move from 0 to `distance`: acceleration ramps linearly over
/// `jerk_time`, holds, ramps back; then cruise; then the mirror image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionProfile {
    pub samples: Vec<MotionSample>,
    pub distance: f64,
    /// Limits requested by the caller.
    pub v_max: f64,
    pub a_max: f64,
    pub jerk_time: f64,
    /// Peak velocity and acceleration actually used.
    pub v_peak: f64,
    pub a_peak: f64,
    /// True when the move was too short for the requested acceleration.
    pub acceleration_reduced: bool,
    pub duration: f64,
}

impl MotionProfile {
    /// Kinematic state at time `t`, clamped to `[0, duration]`.
    pub fn state_at(&self, t: f64) -> MotionSample {
        let shape = Shape {
            v: self.v_peak,
            a: self.a_peak,
            tj: self.jerk_time,
            distance: self.distance,
            duration: self.duration,
        };
        shape.state(t.clamp(0.0, self.duration))
    }
}

#[derive(Debug, Clone, Copy)]
struct Shape {
    v: f64,
    a: f64,
    tj: f64,
    distance: f64,
    duration: f64,
}

impl Shape {
    fn accel_time(&self) -> f64 {
        self.v / self.a + self.tj
    }

    /// First half of the move (acceleration phase plus cruise up to the
    /// midpoint is handled by `state`).
    fn accel_phase(&self, t: f64) -> (f64, f64, f64) {
        let (a, tj) = (self.a, self.tj);
        let j = a / tj;
        let t_hold = self.v / a - tj;
        if t <= tj {
            return (j * t.powi(3) / 6.0, 0.5 * j * t * t, j * t);
        }
        let p1 = j * tj.powi(3) / 6.0;
        let v1 = 0.5 * a * tj;
        if t <= tj + t_hold {
            let u = t - tj;
            return (p1 + v1 * u + 0.5 * a * u * u, v1 + a * u, a);
        }
        let p2 = p1 + v1 * t_hold + 0.5 * a * t_hold * t_hold;
        let v2 = v1 + a * t_hold;
        let u = t - tj - t_hold;
        (
            p2 + v2 * u + 0.5 * a * u * u - j * u.powi(3) / 6.0,
            v2 + a * u - 0.5 * j * u * u,
            a - j * u,
        )
    }

    fn state(&self, t: f64) -> MotionSample {
        let half = 0.5 * self.duration;
        if t > half {
            // mirror image about the midpoint
            let m = self.state(self.duration - t);
            return MotionSample {
                time: t,
                position: self.distance - m.position,
                velocity: m.velocity,
                acceleration: -m.acceleration,
            };
        }
        let ta = self.accel_time();
        let (position, velocity, acceleration) = if t <= ta {
            self.accel_phase(t)
        } else {
            let (p, _, _) = self.accel_phase(ta);
            (p + self.v * (t - ta), self.v, 0.0)
        };
        MotionSample {
            time: t,
            position,
            velocity,
            acceleration,
        }
    }
}

/// Plans a jerk-limited move of length `distance`, sampled every `dt` (the
/// last sample lands exactly on the end of the move).
///
/// When `distance` is too short to reach `v_max`, the cruise is dropped and
/// the peak velocity lowered; when even that cannot keep `a_max` with ramps
/// of `jerk_time`, the peak acceleration is lowered and
/// `acceleration_reduced` is set.
pub fn transport_profile(distance: f64, v_max: f64, a_max: f64, jerk_time: f64, dt: f64) -> Result<MotionProfile> {
    ensure(distance >= 0.0 && distance.is_finite(), || {
        format!("distance must be non-negative, got {distance}")
    })?;
    for (name, v) in [("v_max", v_max), ("a_max", a_max), ("jerk_time", jerk_time), ("dt", dt)] {
        ensure(v > 0.0 && v.is_finite(), || format!("{name} must be positive, got {v}"))?;
    }
    if distance == 0.0 {
        return Ok(MotionProfile {
            samples: vec![MotionSample {
                time: 0.0,
                position: 0.0,
                velocity: 0.0,
                acceleration: 0.0,
            }],
            distance,
            v_max,
            a_max,
            jerk_time,
            v_peak: 0.0,
            a_peak: 0.0,
            acceleration_reduced: false,
            duration: 0.0,
        });
    }

    // ramps of jerk_time need v ≥ a·tj
    let mut a = a_max.min(v_max / jerk_time);
    let mut reduced = a < a_max;
    let mut v = v_max;
    if v * (v / a + jerk_time) > distance {
        // no cruise: v²/a + v·tj = D
        v = 0.5 * a * (-jerk_time + (jerk_time * jerk_time + 4.0 * distance / a).sqrt());
        if v < a * jerk_time {
            // triangular acceleration: D = 2 a tj²
            a = distance / (2.0 * jerk_time * jerk_time);
            v = a * jerk_time;
            reduced = true;
        }
    }
    let accel_time = v / a + jerk_time;
    let cruise = (distance - v * accel_time) / v;
    let duration = 2.0 * accel_time + cruise.max(0.0);
    let shape = Shape {
        v,
        a,
        tj: jerk_time,
        distance,
        duration,
    };

    let steps = (duration / dt).floor() as usize;
    let mut samples: Vec<MotionSample> = (0..=steps).map(|i| shape.state(i as f64 * dt)).collect();
    if samples.last().is_some_and(|s| s.time < duration) {
        samples.push(shape.state(duration));
    }
    let last = samples.last_mut().expect("at least one sample");
    last.position = distance;
    last.velocity = 0.0;

    Ok(MotionProfile {
        samples,
        distance,
        v_max,
        a_max,
        jerk_time,
        v_peak: v,
        a_peak: a,
        acceleration_reduced: reduced,
        duration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_distance() {
        let p = transport_profile(0.0, 0.1, 1.0, 0.01, 1e-3).unwrap();
        assert_eq!(p.samples.len(), 1);
        assert_eq!(p.samples[0].position, 0.0);
    }

    #[test]
    fn long_move_to_loading_region() {
        let d = 3.6e-3;
        let p = transport_profile(d, 5e-3, 0.05, 0.05, 1e-3).unwrap();
        let last = p.samples.last().unwrap();
        assert!((last.position - d).abs() < 1e-12);
        assert_eq!(last.velocity, 0.0);
        assert!(p.samples.iter().all(|s| s.velocity.abs() <= 5e-3 * (1.0 + 1e-12)));
        assert!(p.samples.iter().all(|s| s.acceleration.abs() <= 0.05 * (1.0 + 1e-12)));
        assert!(!p.acceleration_reduced);
        // the cruise really reaches v_max
        assert!(p.samples.iter().any(|s| (s.velocity - 5e-3).abs() < 1e-12));
        for t in [0.0, 0.013, 0.2, 0.5 * p.duration, p.duration - 0.01] {
            let sum = p.state_at(t).position + p.state_at(p.duration - t).position;
            assert!((sum - d).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn short_move_reduces_acceleration() {
        let p = transport_profile(1e-6, 1.0, 10.0, 0.01, 1e-4).unwrap();
        assert!(p.acceleration_reduced);
        assert!(p.a_peak < 10.0);
        assert!((p.samples.last().unwrap().position - 1e-6).abs() < 1e-15);
        assert!(transport_profile(-1.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(transport_profile(1.0, 0.0, 1.0, 1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn limits_and_endpoints(d in 1e-6f64..1e-2, v in 1e-4f64..1e-1, a in 1e-3f64..10.0, tj in 1e-4f64..0.1) {
            let dt = 1e-3f64.min(d / v / 10.0).max(1e-6);
            let p = transport_profile(d, v, a, tj, dt).unwrap();
            prop_assume!(p.samples.len() < 200_000);
            let first = p.samples[0];
            let last = *p.samples.last().unwrap();
            prop_assert_eq!(first.position, 0.0);
            prop_assert_eq!(first.velocity, 0.0);
            prop_assert!((last.position - d).abs() <= 1e-12);
            prop_assert_eq!(last.velocity, 0.0);
            for s in &p.samples {
                prop_assert!(s.velocity.abs() <= v * (1.0 + 1e-9));
                prop_assert!(s.acceleration.abs() <= a * (1.0 + 1e-9));
                prop_assert!(s.velocity >= -1e-15);
            }
            for w in p.samples.windows(2) {
                prop_assert!(w[1].position >= w[0].position - 1e-15);
            }
        }
    }
}
