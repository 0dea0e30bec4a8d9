use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use qspeckle_core::io::{
    read_f64_le, read_json, sidecar_path, write_f64_le, write_json, write_pgm16,
};
use qspeckle_core::numerics::pearson;
use qspeckle_core::{
    apply_scatterer, build_input_state, coincidence_map, ensemble_correlations,
    estimate_coincidences, fov_widths, propagate, regime_boundaries, speckle_widths,
    synthesize_frames, CoincidenceMap, EstimatorConfig, FrameDtype, GammaWindow, Grid1D, MapMode,
    NoiseParams, PairRate, RegimeReport, WidthCurve,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{CliError, Result};

const MANIFEST: &str = "manifest.json";

/// Everything needed to re-derive a run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: RunConfig,
    pub realization_seeds: Vec<u64>,
    pub z_max_cm: f64,
    pub regime: RegimeReport,
    pub maps: Vec<MapEntry>,
    pub screens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEntry {
    pub z_cm: f64,
    pub single: String,
    pub mean: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MapSidecar {
    rows: usize,
    cols: usize,
    pitch_um: f64,
    z_cm: f64,
    n_realizations: usize,
    mode: MapMode,
    units: String,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn z_tag(z: f64) -> String {
    format!("z{z:07.3}cm")
}

fn core_io(path: &Path) -> impl Fn(qspeckle_core::Error) -> CliError + '_ {
    move |e| match e {
        qspeckle_core::Error::Io(io) => CliError::io(path, io),
        other => CliError::Core(other),
    }
}

fn save_map(dir: &Path, name: &str, map: &CoincidenceMap) -> Result<String> {
    let file = format!("{name}.f64");
    let path = dir.join(&file);
    let values = map.values.as_standard_layout();
    write_f64_le(&path, values.as_slice().expect("standard layout")).map_err(core_io(&path))?;
    let (rows, cols) = map.values.dim();
    write_json(
        &sidecar_path(&path),
        &MapSidecar {
            rows,
            cols,
            pitch_um: map.grid.pitch_um(),
            z_cm: map.z_cm,
            n_realizations: map.n_realizations,
            mode: map.mode,
            units: "coincidence probability density (arbitrary units), axes x1 rows / x2 columns in pitch_um".into(),
        },
    )
    .map_err(core_io(&path))?;
    let pgm = dir.join(format!("{name}.pgm"));
    write_pgm16(&pgm, &map.values).map_err(core_io(&pgm))?;
    Ok(file)
}

fn load_map(path: &Path) -> Result<CoincidenceMap> {
    let meta: MapSidecar = read_json(&sidecar_path(path)).map_err(core_io(path))?;
    let values = read_f64_le(path).map_err(core_io(path))?;
    let values = Array2::from_shape_vec((meta.rows, meta.cols), values)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(CoincidenceMap {
        grid: Grid1D::new(meta.rows, meta.pitch_um)?,
        values,
        z_cm: meta.z_cm,
        n_realizations: meta.n_realizations,
        mode: meta.mode,
    })
}

/// Propagate the ensemble and write maps, screens and the manifest to `out`.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    cfg.check_aliasing()?;
    ensure_dir(out)?;
    let spec = cfg.ensemble_spec()?;
    let window = GammaWindow {
        anchor_um: (0.0, 0.0),
        half_width_px: 0,
    };
    log::info!(
        "simulating {} realizations on {} x {} um, z = {:?} cm",
        spec.realizations,
        cfg.grid_n,
        cfg.pitch_um,
        cfg.z_list_cm
    );
    let stats = ensemble_correlations(&spec, &window)?;
    let mut maps = Vec::new();
    for s in &stats {
        let tag = z_tag(s.mean_map.z_cm);
        maps.push(MapEntry {
            z_cm: s.mean_map.z_cm,
            single: save_map(out, &format!("single_{tag}"), &s.first_map)?,
            mean: save_map(out, &format!("mean_{tag}"), &s.mean_map)?,
        });
    }
    let screen_dir = out.join("screens");
    ensure_dir(&screen_dir)?;
    let mut screens = Vec::new();
    for i in 0..spec.realizations {
        let name = format!("screens/screen_{i:04}.f64");
        let path = out.join(&name);
        spec.screen(i)?.save(&path).map_err(core_io(&path))?;
        screens.push(name);
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        realization_seeds: (0..spec.realizations as u64)
            .map(|i| spec.master_seed.wrapping_add(i))
            .collect(),
        z_max_cm: spec.aliasing_distance_cm(),
        regime: regime_boundaries(&spec.source, cfg.sigma0_um)?,
        maps,
        screens,
    };
    let path = out.join(MANIFEST);
    write_json(&path, &manifest).map_err(core_io(&path))?;
    Ok(manifest)
}

/// Extract widths from a simulated run directory.
pub fn analyze(run: &Path, out: &Path) -> Result<WidthCurve> {
    let mpath = run.join(MANIFEST);
    let manifest: Manifest = read_json(&mpath).map_err(core_io(&mpath))?;
    ensure_dir(out)?;
    let cfg = &manifest.config;
    let opts = cfg.width_options();
    let mut curve = WidthCurve {
        z_cm: Vec::new(),
        w_plus_um: Vec::new(),
        w_minus_um: Vec::new(),
        l_plus_mm: Vec::new(),
        l_minus_mm: Vec::new(),
        threshold: opts.threshold,
        blur_um: opts.blur_um,
        seed: cfg.seed,
    };
    for entry in &manifest.maps {
        let single = load_map(&run.join(&entry.single))?;
        let mean = load_map(&run.join(&entry.mean))?;
        let w = speckle_widths(&single, &opts)?;
        let (l_plus, l_minus) = match fov_widths(&mean) {
            Ok(l) => (l.l_plus_mm, l.l_minus_mm),
            Err(qspeckle_core::Error::FitQuality(msg)) => {
                log::warn!("z = {} cm: field of view not measured ({msg})", entry.z_cm);
                (f64::NAN, f64::NAN)
            }
            Err(e) => return Err(e.into()),
        };
        let pgm = out.join(format!("autocorr_{}.pgm", z_tag(entry.z_cm)));
        write_pgm16(&pgm, &w.autocorrelation).map_err(core_io(&pgm))?;
        curve.z_cm.push(entry.z_cm);
        curve.w_plus_um.push(w.w_plus_um);
        curve.w_minus_um.push(w.w_minus_um);
        curve.l_plus_mm.push(l_plus);
        curve.l_minus_mm.push(l_minus);
    }
    let csv = out.join("widths.csv");
    curve.write_csv(&csv).map_err(core_io(&csv))?;
    let rpath = out.join("regime.json");
    write_json(&rpath, &regime_json(&manifest.regime, &curve.z_cm)).map_err(core_io(&rpath))?;
    Ok(curve)
}

#[derive(Serialize)]
struct RegimeRow {
    z_cm: f64,
    regime: qspeckle_core::Regime,
    predicted: qspeckle_core::PredictedWidths,
}

#[derive(Serialize)]
struct RegimeJson<'a> {
    report: &'a RegimeReport,
    per_z: Vec<RegimeRow>,
}

fn regime_json<'a>(report: &'a RegimeReport, z: &[f64]) -> RegimeJson<'a> {
    RegimeJson {
        report,
        per_z: z
            .iter()
            .map(|&z| RegimeRow {
                z_cm: z,
                regime: report.regime(z),
                predicted: report.widths(z),
            })
            .collect(),
    }
}

/// Predicted width curves and crossover distances.
pub fn theory(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    ensure_dir(out)?;
    let report = regime_boundaries(&cfg.source()?, cfg.sigma0_um)?;
    let z_top = cfg.z_list_cm.iter().cloned().fold(report.z_ff_cm, f64::max) * 1.2;
    let steps = 200;
    let mut text = String::from("z_cm,w_plus_um,w_minus_um,l_plus_mm,l_minus_mm\n");
    for i in 1..=steps {
        let z = z_top * i as f64 / steps as f64;
        let w = report.widths(z);
        text.push_str(&format!(
            "{z},{},{},{},{}\n",
            w.w_plus_um, w.w_minus_um, w.l_plus_mm, w.l_minus_mm
        ));
    }
    let csv = out.join("theory.csv");
    fs::write(&csv, text).map_err(|e| CliError::io(&csv, e))?;
    let b = out.join("boundaries.json");
    write_json(&b, &regime_json(&report, &cfg.z_list_cm)).map_err(core_io(&b))?;
    Ok(csv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramesReport {
    pub n_frames: usize,
    pub pixels: usize,
    pub seed: u64,
    /// Pearson correlation with the ground truth outside the diagonal band.
    pub pearson_off_band: f64,
    /// RMS difference of the peak-normalised maps outside the band.
    pub rms_peak_normalized: f64,
}

fn bin_map(map: &CoincidenceMap, f: usize) -> Result<CoincidenceMap> {
    let n = map.values.nrows() / f;
    let values = Array2::from_shape_fn((n, n), |(i, j)| {
        let mut s = 0.0;
        for a in 0..f {
            for b in 0..f {
                s += map.values[[i * f + a, j * f + b]];
            }
        }
        s
    });
    Ok(CoincidenceMap {
        grid: Grid1D::new(n, map.grid.pitch_um() * f as f64)?,
        values,
        ..map.clone()
    })
}

/// Synthesize camera frames from a simulated map and score the estimator.
pub fn frames(cfg: &RunConfig, out: &Path) -> Result<FramesReport> {
    cfg.validate()?;
    let fc = cfg
        .frames
        .clone()
        .ok_or_else(|| CliError::Config("the frames command needs a \"frames\" section".into()))?;
    let mut zcfg = cfg.clone();
    zcfg.z_list_cm = vec![fc.z_cm];
    zcfg.check_aliasing()?;
    ensure_dir(out)?;
    let spec = zcfg.ensemble_spec()?;
    let field = apply_scatterer(
        &build_input_state(spec.grid, &spec.source)?,
        &spec.screen(0)?,
    )?;
    let psi = propagate(&field, fc.z_cm, spec.method)?;
    let truth = bin_map(&coincidence_map(&psi), fc.bin)?;
    let stack = synthesize_frames(
        &truth,
        fc.n_frames,
        PairRate::Poisson(fc.pairs_per_frame),
        &NoiseParams {
            dark_rate: fc.dark_rate,
            background_rate: fc.background_rate,
        },
        cfg.seed,
    )?;
    let fpath = out.join("frames.u16");
    stack
        .save(&fpath, FrameDtype::U16)
        .map_err(core_io(&fpath))?;
    let est_cfg = EstimatorConfig {
        blur_px: fc.blur_px,
        exclusion_half_width: fc.exclusion_half_width,
        ..Default::default()
    };
    let estimate = estimate_coincidences(&stack, &est_cfg)?;
    save_map(out, "truth", &truth)?;
    save_map(out, "estimate", &estimate)?;

    let band = fc.exclusion_half_width;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for ((i, j), &v) in truth.values.indexed_iter() {
        if i.abs_diff(j) > band {
            a.push(v);
            b.push(estimate.values[[i, j]]);
        }
    }
    let peak = |x: &[f64]| x.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let (pa, pb) = (peak(&a), peak(&b));
    let rms = (a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x / pa - y / pb).powi(2))
        .sum::<f64>()
        / a.len() as f64)
        .sqrt();
    let report = FramesReport {
        n_frames: stack.n_frames(),
        pixels: stack.pixels(),
        seed: cfg.seed,
        pearson_off_band: pearson(&a, &b).unwrap_or(0.0),
        rms_peak_normalized: rms,
    };
    let rpath = out.join("frames_report.json");
    write_json(&rpath, &report).map_err(core_io(&rpath))?;
    Ok(report)
}
