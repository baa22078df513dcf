//! Acceptance suite: each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use atomscan::fieldmodel::{intensity_law, AnalyticEvanescentModel, FieldModel, SaturationContext};
use atomscan::heating::{
    franck_condon_matrix, survival_vs_position_with, HeatingModel, HeatingOptions, PulseSpec, SitePosition,
};
use atomscan::inference::decay::DecayFitOptions;
use atomscan::inference::{fit_decay_length, fit_temperature, release_recapture_simulate, DecaySample, ThermometryOptions};
use atomscan::quantities::{bound_state_count, lamb_dicke, units, PhysicalConstants, TrapSpec};
use atomscan::scanmicroscope::{
    loss_centre, simulate_scan, tilt_estimate, DeviceGeometry, LoadingModel, OcclusionLoss, Rect, ScanSpec,
    TweezerArray,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn lamb_dicke_value() -> Outcome {
    let eta = lamb_dicke(&PhysicalConstants::default(), &TrapSpec::default()).unwrap();
    outcome((eta - 0.262).abs() <= 0.005, format!("eta = {eta:.5}"))
}

fn ladder_size() -> Outcome {
    let n = bound_state_count(
        units::UK * 340.0 * atomscan::quantities::K_BOLTZMANN,
        2.0 * std::f64::consts::PI * 30.1e3,
        &PhysicalConstants::default(),
    )
    .unwrap();
    outcome((230..=245).contains(&n), format!("bound states = {n}"))
}

fn fc_completeness() -> Outcome {
    let fc = franck_condon_matrix(0.262, 400).unwrap();
    let worst = (0..=20).map(|m| (fc.column_sum(m) - 1.0).abs()).fold(0.0, f64::max);
    let id = franck_condon_matrix(0.0, 400).unwrap();
    let identity = (0..400).all(|n| (0..400).all(|m| id.get(n, m) == if n == m { 1.0 } else { 0.0 }));
    outcome(
        worst <= 1e-9 && identity,
        format!("max |column sum - 1| (m <= 20) = {worst:.2e}, eta = 0 identity: {identity}"),
    )
}

fn factorial(n: u64) -> u64 {
    (1..=n).product()
}

/// <n|D(eta)|m> for real eta from the finite normal-ordered series.
fn displacement_element(n: u64, m: u64, eta: f64) -> f64 {
    let pref = ((factorial(n) * factorial(m)) as f64).sqrt() * (-eta * eta / 2.0).exp();
    let mut sum = 0.0;
    for k in 0..=n.min(m) {
        let denom = (factorial(k) * factorial(n - k) * factorial(m - k)) as f64;
        let sign = if (m - k).is_multiple_of(2) { 1.0 } else { -1.0 };
        sum += sign * eta.powi((n - k) as i32) * eta.powi((m - k) as i32) / denom;
    }
    pref * sum
}

fn small_ladder_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for eta in [0.1, 0.26, 0.262, 0.5, 0.9] {
        let fc = franck_condon_matrix(eta, 4).unwrap();
        for n in 0..4 {
            for m in 0..4 {
                let d = displacement_element(n, m, eta);
                worst = worst.max((fc.get(n as usize, m as usize) - d * d).abs());
            }
        }
    }
    outcome(worst <= 1e-12, format!("max deviation from series = {worst:.2e}"))
}

fn decay_round_trip() -> Outcome {
    let (rho, power) = (743.2e-9, 400e-12);
    let radii: Vec<f64> = (0..50).map(|i| 0.2e-6 + 4.8e-6 * i as f64 / 49.0).collect();
    let clean: Vec<DecaySample> = radii
        .iter()
        .map(|&r| DecaySample {
            r,
            intensity: intensity_law(power, rho, r),
        })
        .collect();
    let opts = DecayFitOptions::default();
    let f = fit_decay_length(&clean, power, None, &opts).unwrap();
    let clean_err = (f.value("decay_length").unwrap() / rho - 1.0).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let noisy: Vec<DecaySample> = clean
        .iter()
        .map(|s| DecaySample {
            r: s.r,
            intensity: s.intensity * (1.0 + noise.sample(&mut rng)),
        })
        .collect();
    let g = fit_decay_length(&noisy, power, None, &opts).unwrap();
    let (est, se) = (g.value("decay_length").unwrap(), g.std_error("decay_length").unwrap());
    let z = (est - rho).abs() / se;
    outcome(
        clean_err <= 1e-3 && z <= 3.0 && f.converged && g.converged,
        format!(
            "noiseless rel. error = {clean_err:.1e}; noisy rho = {:.2} ± {:.2} nm ({z:.2} sigma)",
            est / units::NM,
            se / units::NM
        ),
    )
}

fn operating_point(n_trunc: usize) -> (PhysicalConstants, TrapSpec, FieldModel, PulseSpec, HeatingModel) {
    let c = PhysicalConstants::default();
    let trap = TrapSpec::default().with_n_trunc(n_trunc, &c).unwrap();
    let field = FieldModel::Analytic(AnalyticEvanescentModel::new(400e-12, 743e-9, 90e-9).unwrap());
    let pulse = PulseSpec {
        temperature: 40e-6,
        duration: 6e-3,
        options: HeatingOptions::default(),
    };
    let model = HeatingModel::for_trap(&trap, &c, pulse.temperature, pulse.options).unwrap();
    (c, trap, field, pulse, model)
}

fn survival_curve(n_trunc: usize, radii: &[f64]) -> Vec<f64> {
    let (c, trap, field, pulse, model) = operating_point(n_trunc);
    let sites: Vec<SitePosition> = radii.iter().map(|&y| SitePosition { y, z: 0.0 }).collect();
    let sat = SaturationContext::from_constants(&c);
    survival_vs_position_with(&model, &sites, &field, &sat, &trap, &c, &pulse)
        .unwrap()
        .iter()
        .map(|p| p.survival)
        .collect()
}

fn survival_shape() -> Outcome {
    // 10 nm grid from the domain cutoff outwards
    let radii: Vec<f64> = (0..=791).map(|i| 90e-9 + 10e-9 * i as f64).collect();
    let s = survival_curve(130, &radii);
    let max_rise = s.windows(2).map(|w| w[0] - w[1]).fold(f64::MIN, f64::max);
    let monotone = max_rise <= 0.0;
    let far = radii.iter().zip(&s).filter(|(r, _)| **r > 4e-6).all(|(_, v)| *v > 0.95);
    let near = s[0] < 0.05;
    let crossings: Vec<f64> = radii
        .windows(2)
        .zip(s.windows(2))
        .filter(|(_, w)| (w[0] - 0.5) * (w[1] - 0.5) < 0.0 || w[1] == 0.5)
        .map(|(r, _)| r[1])
        .collect();
    outcome(
        monotone && far && near && crossings.len() == 1,
        format!(
            "S(r_min) = {:.2e}, min S(r > 4 um) = {:.4}, 0.5 crossings at {:?} um, largest outward drop = {:.1e}",
            s[0],
            radii
                .iter()
                .zip(&s)
                .filter(|(r, _)| **r > 4e-6)
                .map(|(_, v)| *v)
                .fold(1.0, f64::min),
            crossings.iter().map(|r| (r / units::UM * 100.0).round() / 100.0).collect::<Vec<_>>(),
            max_rise.max(0.0)
        ),
    )
}

fn truncation_monotonicity() -> Outcome {
    let radii: Vec<f64> = (0..=395).map(|i| 100e-9 + 20e-9 * i as f64).collect();
    let curves: Vec<Vec<f64>> = [60, 130, 235].iter().map(|n| survival_curve(*n, &radii)).collect();
    let mut worst = f64::MIN;
    for w in curves.windows(2) {
        for (a, b) in w[0].iter().zip(&w[1]) {
            worst = worst.max(a - b);
        }
    }
    outcome(
        worst <= 0.0,
        format!("{} sites, max S(smaller n_trunc) - S(larger n_trunc) = {worst:.2e}", radii.len()),
    )
}

fn waveguide(tilt_deg: f64) -> DeviceGeometry {
    DeviceGeometry::new(
        vec![Rect::new("waveguide", 0.0, 0.0, 180e-9, 2e-3, 200e-9).unwrap()],
        tilt_deg * units::DEG,
    )
    .unwrap()
}

fn tilt_recovery() -> Outcome {
    let geo = waveguide(0.5);
    let array = TweezerArray::new(8, 8, 5e-6, [0.0; 3], 1.2e-6, 0.5e-12).unwrap();
    let coords: Vec<f64> = (0..=820).map(|i| -38e-6 + 50e-9 * i as f64).collect();
    let loading = LoadingModel {
        shots: 500,
        seed: 8,
        ..Default::default()
    };
    let map = simulate_scan(&geo, &array, &ScanSpec::positions(coords), None, &loading, &OcclusionLoss::default()).unwrap();
    let t = tilt_estimate(&map, &array).unwrap();
    let deg = t.tilt / units::DEG;
    outcome(
        (deg / 0.5 - 1.0).abs() <= 0.1,
        format!("tilt = {deg:.4} ± {:.4} deg", t.std_error / units::DEG),
    )
}

fn loss_width() -> Outcome {
    let geo = waveguide(0.0);
    let array = TweezerArray::new(8, 1, 5e-6, [0.0; 3], 1.2e-6, 0.5e-12).unwrap();
    let coords: Vec<f64> = (0..=600).map(|i| -3e-6 + 10e-9 * i as f64).collect();
    let loading = LoadingModel {
        shots: 500,
        seed: 9,
        ..Default::default()
    };
    let map = simulate_scan(&geo, &array, &ScanSpec::positions(coords.clone()), None, &loading, &OcclusionLoss::default()).unwrap();
    // average the rows, normalise to the far-field baseline, read off the half-loss points
    let n = coords.len();
    let mean: Vec<f64> = (0..n)
        .map(|k| (0..8).map(|r| map.site(r, 0)[k]).sum::<f64>() / 8.0)
        .collect();
    let mut sorted = mean.clone();
    sorted.sort_by(f64::total_cmp);
    let top = &sorted[n - n / 4..];
    let baseline = top.iter().sum::<f64>() / top.len() as f64;
    let norm: Vec<f64> = mean.iter().map(|s| s / baseline).collect();
    let cross = |k: usize| {
        let t = (0.5 - norm[k]) / (norm[k + 1] - norm[k]);
        coords[k] + t * (coords[k + 1] - coords[k])
    };
    let left = (0..n - 1).find(|&k| norm[k] >= 0.5 && norm[k + 1] < 0.5).map(cross);
    let right = (0..n - 1).rev().find(|&k| norm[k] < 0.5 && norm[k + 1] >= 0.5).map(cross);
    let centre = loss_centre(&coords, &mean).unwrap_or(f64::NAN);
    match (left, right) {
        (Some(l), Some(r)) => {
            let width = (r - l) / units::UM;
            outcome(
                (2.4..=3.0).contains(&width),
                format!("half-loss width = {width:.3} um (centre {:.3} um)", centre / units::UM),
            )
        }
        _ => outcome(false, "no half-loss region found"),
    }
}

fn thermometry_round_trip() -> Outcome {
    let c = PhysicalConstants::default();
    let trap = TrapSpec::default();
    let times: Vec<f64> = (0..9).map(|i| i as f64 * 10.0 * units::US).collect();
    let truth = 40.0 * units::UK;
    let run = |data_seed: u64, inner_seed: u64, bootstrap_seed: u64| {
        let obs = release_recapture_simulate(truth, &trap, &c, &times, 10_000, data_seed, &Default::default()).unwrap();
        let opts = ThermometryOptions {
            inner_seed,
            bootstrap_seed,
            ..Default::default()
        };
        let f = fit_temperature(&obs, &trap, &c, &opts).unwrap();
        (f.value("temperature").unwrap(), f.std_error("temperature").unwrap())
    };
    let (t1, s1) = run(101, 201, 301);
    let (t2, s2) = run(102, 202, 302);
    let within = [t1, t2].iter().all(|t| (t / truth - 1.0).abs() <= 0.15);
    let combined = (s1 * s1 + s2 * s2).sqrt();
    let robust = (t1 - t2).abs() < 2.0 * combined;
    outcome(
        within && robust,
        format!(
            "T = {:.2} ± {:.2} uK and {:.2} ± {:.2} uK; |difference| = {:.2} combined sigma",
            t1 / units::UK,
            s1 / units::UK,
            t2 / units::UK,
            s2 / units::UK,
            (t1 - t2).abs() / combined
        ),
    )
}

fn scan_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(
        root.join("waveguide.csv"),
        "# tilt_deg=0.5\nname,cx_um,cy_um,width_um,length_um,thickness_um\nwaveguide,0,0,0.18,2000,0.2\n",
    )
    .unwrap();
    std::fs::write(
        root.join("scan.json"),
        r#"{
  "seed": 17,
  "geometry_file": "waveguide.csv",
  "array": {"rows": 8, "cols": 8, "pitch_um": 5},
  "scan": {"start_um": -38, "stop_um": 3, "step_um": 0.05, "shots": 500}
}"#,
    )
    .unwrap();
    let run = |workers: &str| -> Option<(Vec<u8>, Vec<u8>)> {
        let out = root.join(format!("out{workers}"));
        let status = Command::new(env!("CARGO_BIN_EXE_atomscan"))
            .args(["scan", "--config"])
            .arg(root.join("scan.json"))
            .args(["--workers", workers, "--out"])
            .arg(&out)
            .output()
            .ok()?;
        if !status.status.success() {
            return None;
        }
        let read = |f: &str| std::fs::read(Path::new(&out).join(f)).ok();
        Some((read("survival_map.csv")?, read("scan_summary.json")?))
    };
    let results: Vec<_> = ["1", "4", "8"].iter().map(|w| run(w)).collect();
    let ok = results.iter().all(Option::is_some) && results.windows(2).all(|w| w[0] == w[1]);
    let size = results[0].as_ref().map_or(0, |r| r.0.len());
    outcome(ok, format!("survival_map.csv ({size} bytes) and scan_summary.json identical for 1, 4, 8 workers: {ok}"))
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 11] = [
        ("Lamb-Dicke value", lamb_dicke_value, Duration::from_millis(1)),
        ("Ladder size", ladder_size, Duration::from_millis(1)),
        ("Franck-Condon completeness", fc_completeness, Duration::from_secs(5)),
        ("Small-ladder oracle equivalence", small_ladder_oracle, Duration::from_secs(1)),
        ("Decay-length round trip", decay_round_trip, Duration::from_secs(1)),
        ("Survival-model shape", survival_shape, Duration::from_secs(30)),
        ("Truncation monotonicity", truncation_monotonicity, Duration::from_secs(120)),
        ("Tilt recovery", tilt_recovery, Duration::from_secs(60)),
        ("Geometric loss width", loss_width, Duration::from_secs(30)),
        ("Thermometry round trip", thermometry_round_trip, Duration::from_secs(120)),
        ("Determinism across workers", scan_determinism, Duration::from_secs(60)),
    ];
    let mut failures = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *limit;
        let passed = result.passed && in_time;
        if !passed {
            failures += 1;
        }
        println!(
            "[{}] {:>2}. {name}: {} ({:.3?}, limit {:?}{})",
            if passed { "PASS" } else { "FAIL" },
            i + 1,
            result.detail,
            elapsed,
            limit,
            if in_time { "" } else { ", too slow" }
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
