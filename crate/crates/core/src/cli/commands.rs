use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::config::{FitKind, RunConfig};
use crate::error::{Error, Result};
use crate::fieldmodel::SaturationContext;
use crate::heating::{franck_condon_matrix, survival_vs_position_with, HeatingModel, PulseSpec, SitePosition};
use crate::inference::decay::DecayFitOptions;
use crate::inference::{fit_decay_length, fit_temperature, DecaySample, FitParam, FitResult, ReleaseRecaptureCurve};
use crate::quantities::{lamb_dicke, units};
use crate::scanmicroscope::{
    simulate_scan, tilt_estimate, DeviceGeometry, ScanAxis, ScanHeating, ScanSpec, SurvivalMap, TiltEstimate,
};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes a file through `body`, mapping I/O failures to the path.
fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    body(&mut out).and_then(|_| out.flush()).map_err(io_err(path))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_file(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)?;
        writeln!(out)
    })
}

/// Echoes the effective configuration next to the outputs.
pub fn write_resolved(cfg: &RunConfig, out_dir: &Path) -> Result<PathBuf> {
    let path = out_dir.join("resolved_config.json");
    write_json(&path, cfg)?;
    Ok(path)
}

pub fn cmd_fc_matrix(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let c = cfg.constants()?;
    let eta = match cfg.fc_matrix.eta {
        Some(eta) => eta,
        None => lamb_dicke(&c, &cfg.trap(&c)?)?,
    };
    let n = cfg
        .fc_matrix
        .n_trunc
        .unwrap_or_else(|| cfg.heating.as_ref().map_or(130, |h| h.n_trunc));
    let fc = franck_condon_matrix(eta, n)?;

    let csv_path = out_dir.join("fc_matrix.csv");
    write_file(&csv_path, |out| {
        write!(out, "n")?;
        for m in 0..n {
            write!(out, ",m{m}")?;
        }
        writeln!(out)?;
        for i in 0..n {
            write!(out, "{i}")?;
            for m in 0..n {
                write!(out, ",{}", fc.get(i, m))?;
            }
            writeln!(out)?;
        }
        Ok(())
    })?;

    let sums: Vec<f64> = (0..n).map(|m| fc.column_sum(m)).collect();
    let deficits: Vec<f64> = (0..n).map(|m| fc.column_deficit(m)).collect();
    let checked = cfg.fc_matrix.report_max_m.min(n - 1);
    let max_deficit = deficits[..=checked].iter().copied().fold(0.0, f64::max);
    let report = json!({
        "eta": eta,
        "n_trunc": n,
        "report_max_m": checked,
        "max_column_deficit": max_deficit,
        "complete": max_deficit < 1e-6,
        "column_sums": sums,
        "column_deficits": deficits,
    });
    let json_path = out_dir.join("fc_matrix_report.json");
    write_json(&json_path, &report)?;
    Ok(vec![csv_path, json_path])
}

fn displacements(spec: &ScanSpec, cfg: &RunConfig) -> Result<Vec<f64>> {
    match spec.axis {
        ScanAxis::Position => Ok(spec.coordinates.clone()),
        ScanAxis::AodFrequency => {
            let array = cfg.array()?;
            Ok((0..spec.coordinates.len()).map(|i| spec.displacement(i, &array)).collect())
        }
    }
}

pub fn cmd_survival(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let c = cfg.constants()?;
    let trap = cfg.trap(&c)?;
    let field = cfg.field()?;
    let heat = cfg.heating()?;
    let spec = cfg.scan()?.to_spec()?;
    let xs = displacements(&spec, cfg)?;
    let z = heat.site_z_nm * units::NM;
    let sat = SaturationContext::from_constants(&c);
    let pulse = PulseSpec {
        temperature: heat.temperature_uk * units::UK,
        duration: heat.pulse_ms * units::MS,
        options: heat.options(),
    };
    let model = HeatingModel::for_trap(&trap, &c, pulse.temperature, pulse.options)?;

    // points where the field is undefined are reported, not evaluated
    let mut violations = Vec::new();
    let mut sites = Vec::new();
    let mut kept = Vec::new();
    for (i, x) in xs.iter().enumerate() {
        match field.intensity_at(*x, z) {
            Ok(_) => {
                sites.push(SitePosition { y: *x, z });
                kept.push(i);
            }
            Err(Error::OutOfDomain(m)) => violations.push(json!({
                "displacement_um": x / units::UM,
                "reason": m,
            })),
            Err(e) => return Err(e),
        }
    }
    let points = survival_vs_position_with(&model, &sites, &field, &sat, &trap, &c, &pulse)?;

    let csv_path = out_dir.join("survival_vs_position.csv");
    write_file(&csv_path, |out| {
        writeln!(out, "displacement_um,intensity_W_m2,s,R_sc_per_s,survival")?;
        for (i, p) in kept.iter().zip(&points) {
            writeln!(
                out,
                "{},{},{},{},{}",
                xs[*i] / units::UM,
                p.intensity,
                p.saturation,
                p.rate,
                p.survival
            )?;
        }
        Ok(())
    })?;

    let mut crossings = Vec::new();
    for w in kept.windows(2).zip(points.windows(2)) {
        let ((i0, i1), (a, b)) = ((w.0[0], w.0[1]), (&w.1[0], &w.1[1]));
        if i1 == i0 + 1 && (a.survival - 0.5) * (b.survival - 0.5) < 0.0 {
            let t = (0.5 - a.survival) / (b.survival - a.survival);
            crossings.push((xs[i0] + t * (xs[i1] - xs[i0])) / units::UM);
        }
    }
    let summary = json!({
        "points": points.len(),
        "half_survival_crossings_um": crossings,
        "out_of_domain": violations,
    });
    let json_path = out_dir.join("survival_summary.json");
    write_json(&json_path, &summary)?;
    Ok(vec![csv_path, json_path])
}

fn tilt_json(t: &TiltEstimate) -> serde_json::Value {
    json!({
        "tilt_rad": t.tilt,
        "std_error_rad": t.std_error,
        "tilt_deg": t.tilt / units::DEG,
        "std_error_deg": t.std_error / units::DEG,
        "residual_norm_um": t.residual_norm / units::UM,
        "row_centres_um": t.row_centres.iter().map(|(y, x)| [y / units::UM, x / units::UM]).collect::<Vec<_>>(),
    })
}

pub fn cmd_scan(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let geometry_path = cfg
        .geometry_file
        .as_ref()
        .ok_or_else(|| Error::Config("geometry_file is required for a scan".into()))?;
    let mut geometry = DeviceGeometry::from_csv(geometry_path)?;
    geometry.focus_offset_left = cfg.occlusion.focus_offset_left_um * units::UM;
    geometry.focus_offset_right = cfg.occlusion.focus_offset_right_um * units::UM;
    geometry.validate()?;
    let array = cfg.array()?;
    let scan_block = cfg.scan()?;
    let spec = scan_block.to_spec()?;
    let loading = cfg.loading()?;
    let loss = cfg.occlusion()?;

    let heating = if scan_block.with_light {
        let c = cfg.constants()?;
        let trap = cfg.trap(&c)?;
        let heat = cfg.heating()?;
        let waveguide = match &scan_block.waveguide_element {
            Some(name) => geometry
                .elements
                .iter()
                .position(|e| &e.name == name)
                .ok_or_else(|| Error::Config(format!("scan.waveguide_element: no element named {name}")))?,
            None if geometry.elements.is_empty() => {
                return Err(Error::Config("scan.with_light needs a waveguide element".into()))
            }
            None => 0,
        };
        Some(ScanHeating {
            field: cfg.field()?,
            sat: SaturationContext::from_constants(&c),
            model: HeatingModel::for_trap(&trap, &c, heat.temperature_uk * units::UK, heat.options())?,
            duration: heat.pulse_ms * units::MS,
            waveguide,
        })
    } else {
        None
    };

    let map = simulate_scan(&geometry, &array, &spec, heating.as_ref(), &loading, &loss)?;
    let csv_path = out_dir.join("survival_map.csv");
    write_file(&csv_path, |out| map.write_csv(out))?;

    let n_cells = (map.rows * map.cols * map.scan_coordinates.len()) as f64;
    let mean = map.per_site_survival.iter().flatten().sum::<f64>() / n_cells.max(1.0);
    let (tilt, warning) = if map.rows < 2 {
        (None, Some("tilt needs at least 2 rows".to_string()))
    } else {
        match tilt_estimate(&map, &array) {
            Ok(t) => (Some(tilt_json(&t)), None),
            Err(Error::InsufficientSignal(m)) => (None, Some(m)),
            Err(e) => return Err(e),
        }
    };
    let summary = json!({
        "rows": map.rows,
        "cols": map.cols,
        "coordinates": map.scan_coordinates.len(),
        "shots": loading.shots,
        "seed": loading.seed,
        "with_light": scan_block.with_light,
        "mean_survival": mean,
        "tilt": tilt,
        "tilt_warning": warning,
    });
    let json_path = out_dir.join("scan_summary.json");
    write_json(&json_path, &summary)?;
    Ok(vec![csv_path, json_path])
}

fn parse_err(path: &Path, row: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row,
        message: message.into(),
    }
}

/// Reads a numeric CSV with the given required columns (and optional extra
/// ones), returning rows of values in header order of `required ++ optional`.
fn read_table(path: &Path, required: &[&str], optional: &[&str]) -> Result<Vec<Vec<Option<f64>>>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file);
    let headers = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(parse_err(path, 1, "empty input: missing header"));
    }
    let index = |name: &str| headers.iter().position(|h| h == name);
    let mut columns = Vec::new();
    for name in required {
        columns.push(Some(index(name).ok_or_else(|| {
            parse_err(path, 1, format!("missing column {name} (expected {})", required.join(",")))
        })?));
    }
    columns.extend(optional.iter().map(|n| index(n)));
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| parse_err(path, row, e.to_string()))?;
        let mut values = Vec::with_capacity(columns.len());
        for (k, col) in columns.iter().enumerate() {
            let name = if k < required.len() { required[k] } else { optional[k - required.len()] };
            let v = match col {
                None => None,
                Some(c) => {
                    let s = rec.get(*c).unwrap_or("");
                    if s.is_empty() && k >= required.len() {
                        None
                    } else {
                        Some(s.parse::<f64>().map_err(|e| parse_err(path, row, format!("{name}: {e}")))?)
                    }
                }
            };
            values.push(v);
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 2, "no data rows"));
    }
    Ok(rows)
}

fn write_fit_json(path: &Path, kind: &str, fit: &FitResult, extra: serde_json::Value) -> Result<()> {
    let doc = json!({
        "kind": kind,
        "parameters": fit.summary(),
        "at_bound": fit.at_bound,
        "gradient_norm": fit.gradient_norm,
        "details": extra,
    });
    write_json(path, &doc)
}

pub fn cmd_fit(cfg: &RunConfig, input: Option<&Path>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let block = cfg
        .fit
        .as_ref()
        .ok_or_else(|| Error::Config("a fit block is required".into()))?;
    let input = input
        .or(block.input.as_deref())
        .ok_or_else(|| Error::Config("fit input file missing (fit.input or --input)".into()))?;
    let json_path = out_dir.join("fit_result.json");
    let csv_path = out_dir.join("fit_residuals.csv");
    match block.kind {
        FitKind::Decay => {
            let rows = read_table(input, &["r_nm", "intensity_W_m2"], &["weight"])?;
            let samples: Vec<DecaySample> = rows
                .iter()
                .map(|r| DecaySample {
                    r: r[0].unwrap() * units::NM,
                    intensity: r[1].unwrap(),
                })
                .collect();
            let weights: Option<Vec<f64>> = if rows.iter().any(|r| r[2].is_some()) {
                Some(rows.iter().map(|r| r[2].unwrap_or(1.0)).collect())
            } else {
                None
            };
            let power = match block.power_pw {
                Some(p) => p * units::PW,
                None if block.free_prefactor => 0.0,
                None => cfg.field()?.power(),
            };
            let fit = fit_decay_length(
                &samples,
                power,
                weights.as_deref(),
                &DecayFitOptions {
                    free_prefactor: block.free_prefactor,
                    ..Default::default()
                },
            )?;
            write_fit_json(
                &json_path,
                "decay",
                &fit,
                json!({
                    "decay_length_nm": fit.value("decay_length").unwrap() / units::NM,
                    "std_error_nm": fit.std_error("decay_length").unwrap() / units::NM,
                    "samples": samples.len(),
                }),
            )?;
            write_file(&csv_path, |out| {
                writeln!(out, "r_nm,intensity_W_m2,log_residual")?;
                for (s, e) in samples.iter().zip(&fit.residuals) {
                    writeln!(out, "{},{},{}", s.r / units::NM, s.intensity, e)?;
                }
                Ok(())
            })?;
        }
        FitKind::Temperature => {
            let rows = read_table(input, &["release_time_us", "survival", "n_samples"], &[])?;
            let n = rows[0][2].unwrap();
            if rows.iter().any(|r| r[2].unwrap() != n) || !(n >= 1.0 && n.fract() == 0.0 && n <= f64::from(u32::MAX)) {
                return Err(parse_err(input, 2, "n_samples must be one positive integer for every row"));
            }
            let observed = ReleaseRecaptureCurve {
                release_times: rows.iter().map(|r| r[0].unwrap() * units::US).collect(),
                survival: rows.iter().map(|r| r[1].unwrap()).collect(),
                n_samples: n as u32,
                seed: 0,
            };
            observed.validate().map_err(|e| parse_err(input, 2, e.to_string()))?;
            let c = cfg.constants()?;
            let trap = cfg.trap(&c)?;
            let fit = fit_temperature(&observed, &trap, &c, &cfg.thermometry())?;
            write_fit_json(
                &json_path,
                "temperature",
                &fit,
                json!({
                    "temperature_uK": fit.value("temperature").unwrap() / units::UK,
                    "std_error_uK": fit.std_error("temperature").unwrap() / units::UK,
                }),
            )?;
            write_file(&csv_path, |out| {
                writeln!(out, "release_time_us,survival,residual")?;
                for ((t, s), e) in observed.release_times.iter().zip(&observed.survival).zip(&fit.residuals) {
                    writeln!(out, "{},{},{}", t / units::US, s, e)?;
                }
                Ok(())
            })?;
        }
        FitKind::Tilt => {
            let axis = cfg.scan.as_ref().map_or(ScanAxis::Position, |s| s.axis);
            let file = File::open(input).map_err(io_err(input))?;
            let map = SurvivalMap::read_csv(file, axis, input)?;
            let array = cfg.array()?;
            let t = tilt_estimate(&map, &array)?;
            let fit = FitResult {
                params: vec![FitParam {
                    name: "tilt".into(),
                    value: t.tilt,
                    std_error: t.std_error,
                }],
                residual_norm: t.residual_norm,
                iterations: 1,
                converged: true,
                gradient_norm: 0.0,
                at_bound: false,
                residuals: Vec::new(),
            };
            write_fit_json(&json_path, "tilt", &fit, tilt_json(&t))?;
            let slope = t.tilt.tan();
            let n = t.row_centres.len() as f64;
            let (my, mx) = t
                .row_centres
                .iter()
                .fold((0.0, 0.0), |a, (y, x)| (a.0 + y / n, a.1 + x / n));
            write_file(&csv_path, |out| {
                writeln!(out, "row,y_um,centre_um,residual_um")?;
                for (i, (y, x)) in t.row_centres.iter().enumerate() {
                    let model = mx + slope * (y - my);
                    writeln!(out, "{i},{},{},{}", y / units::UM, x / units::UM, (x - model) / units::UM)?;
                }
                Ok(())
            })?;
        }
    }
    Ok(vec![json_path, csv_path])
}
