//! The four subcommands and their output files.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use squidsim_core::numfmt::sig9;
use squidsim_core::spectrum::{extract_four_level_model, level_diagram, predict_resonances, SpectrumError};
use squidsim_core::sweep::{
    detect_features, diagram_at, run_sweep, BiasCurve, FeatureReport, SweepError, SweepGrid, SweepSpec,
};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::svg::{heatmap, line_plot, Marker, PlotError, PlotSpec, Series};
use crate::verify::{run_verify, VerifyReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Plot(#[from] PlotError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{failed} verification check(s) failed")]
    VerifyFailed { failed: usize },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(e) if e.is_parse() => "parse_error",
            CliError::Config(_) => "validation_error",
            CliError::Spectrum(_) => "spectrum_error",
            CliError::Sweep(_) => "sweep_error",
            CliError::Plot(_) => "plot_error",
            CliError::Io { .. } => "io_error",
            CliError::VerifyFailed { .. } => "verify_failed",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::VerifyFailed { .. } => 1,
            CliError::Config(e) if e.is_parse() => 2,
            CliError::Config(_) => 3,
            CliError::Spectrum(_) | CliError::Sweep(_) | CliError::Plot(_) => 4,
            CliError::Io { .. } => 5,
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}

/// Writes output files stamped with the config hash.
pub struct OutputWriter<'a> {
    cfg: &'a RunConfig,
    hash: String,
    pub files: Vec<PathBuf>,
}

impl<'a> OutputWriter<'a> {
    pub fn new(cfg: &'a RunConfig) -> Result<Self, CliError> {
        std::fs::create_dir_all(&cfg.out_dir).map_err(|e| io_err(&cfg.out_dir, e))?;
        Ok(Self { cfg, hash: cfg.hash(), files: Vec::new() })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    fn write(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.cfg.out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| io_err(&path, e))?;
        self.files.push(path);
        Ok(())
    }

    pub fn config_echo(&mut self) -> Result<(), CliError> {
        let body = format!("# config_sha256={}\n{}", self.hash, self.cfg.effective_ini());
        self.write("effective_config.ini", &body)
    }

    pub fn csv(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        if !self.cfg.formats.csv {
            return Ok(());
        }
        let body = format!("# config_sha256={}\n{body}", self.hash);
        self.write(name, &body)
    }

    pub fn json(&mut self, name: &str, value: Value) -> Result<(), CliError> {
        if !self.cfg.formats.json {
            return Ok(());
        }
        let doc = json!({ "config_sha256": self.hash, "config": self.cfg.settings_ini(), "data": value });
        let mut body = serde_json::to_string_pretty(&doc).expect("JSON values serialize");
        body.push('\n');
        self.write(name, &body)
    }

    pub fn svg(&mut self, name: &str, render: impl FnOnce(&str) -> Result<String, PlotError>) -> Result<(), CliError> {
        if !self.cfg.formats.svg {
            return Ok(());
        }
        let body = render(&self.hash)?;
        self.write(name, &body)
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("types serialize")
}

/// Level diagram, four-level model and resonance positions.
///
/// A failed model extraction is recorded in the model file rather than
/// aborting, since the diagram itself is still meaningful.
pub fn cmd_levels(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let w = &cfg.window;
    let d = level_diagram(&cfg.circuit, (w.bias_min, w.bias_max), w.n_bias, &w.grid)?;
    let hits = predict_resonances(&d, cfg.drive_f, cfg.sweep.n_max);
    let model = extract_four_level_model(&d);
    let mut out = OutputWriter::new(cfg)?;
    out.config_echo()?;
    out.csv("levels_diagram.csv", &d.to_csv())?;
    let (model_json, error_json) = match &model {
        Ok(m) => (to_value(m), Value::Null),
        Err(e) => (Value::Null, Value::String(e.to_string())),
    };
    out.json(
        "levels_model.json",
        json!({
            "model": model_json,
            "extraction_error": error_json,
            "circuit_flags": cfg.circuit.validate().iter().map(|f| f.to_string()).collect::<Vec<_>>(),
            "drive_frequency_ghz": cfg.drive_f,
            "resonances": to_value(&hits),
        }),
    )?;
    let n_levels = d.n_levels();
    let series: Vec<Series> = (0..n_levels)
        .map(|k| Series {
            name: format!("level {k}"),
            xs: d.biases.clone(),
            ys: d.spectra.iter().map(|s| s.energies[k]).collect(),
        })
        .collect();
    let markers: Vec<Marker> = hits
        .iter()
        .map(|h| Marker { x: h.bias, label: format!("n={} {}-{}", h.n, h.lower.label(), h.upper.label()) })
        .collect();
    out.svg("levels.svg", |hash| {
        line_plot(&PlotSpec::lines("Energy levels", "flux bias (Phi0)", "E/h (GHz)"), &series, &markers, hash)
    })?;
    Ok(out.files)
}

/// Undriven step curve plus one driven trace at `[drive] power`.
pub fn cmd_scan(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let biases = cfg.sweep.bias_axis();
    let diagram = diagram_at(&cfg.circuit, &biases, &cfg.grid)?;
    let curve = BiasCurve::from_diagram(&diagram);
    let spec = SweepSpec { n_power: 1, p_min: cfg.scan_power, p_max: cfg.scan_power, shots: None, ..cfg.sweep };
    let grid = run_sweep(&cfg.circuit, &spec, &cfg.calibration, &cfg.rates, &cfg.window)?;
    let driven: Vec<f64> = grid.column(0).into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();

    let mut out = OutputWriter::new(cfg)?;
    out.config_echo()?;
    let mut csv = String::from("bias,p_right_no_mw,p_right_driven\n");
    for ((b, p0), p1) in biases.iter().zip(&curve.populations).zip(&driven) {
        csv.push_str(&format!("{},{},{}\n", sig9(*b), sig9(*p0), sig9(*p1)));
    }
    out.csv("scan_curve.csv", &csv)?;
    out.json(
        "scan_curve.json",
        json!({
            "biases": biases,
            "p_right_no_mw": curve.populations,
            "p_right_driven": grid.column(0),
            "power_dbm": cfg.scan_power,
            "phi_rf": grid.amplitudes[0],
            "solver": spec.solver.as_str(),
            "failures": to_value(&grid.failures),
        }),
    )?;
    let series = vec![
        Series { name: "no MW".into(), xs: biases.clone(), ys: curve.populations.clone() },
        Series { name: format!("{} dBm", cfg.scan_power), xs: biases.clone(), ys: driven },
    ];
    out.svg("scan.svg", |hash| {
        line_plot(&PlotSpec::lines("Right-well population", "flux bias (Phi0)", "P(R)"), &series, &[], hash)
    })?;
    Ok(out.files)
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub grid: SweepGrid,
    pub baseline: BiasCurve,
    pub features: FeatureReport,
    pub files: Vec<PathBuf>,
}

/// Bias × power map with feature detection.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<SweepOutcome, CliError> {
    let grid = run_sweep(&cfg.circuit, &cfg.sweep, &cfg.calibration, &cfg.rates, &cfg.window)?;
    let diagram = diagram_at(&cfg.circuit, &grid.biases, &cfg.grid)?;
    let baseline = BiasCurve::from_diagram(&diagram);
    let features = detect_features(&grid, &baseline, &diagram, cfg.drive_f, cfg.sweep.n_max)?;

    let mut out = OutputWriter::new(cfg)?;
    out.config_echo()?;
    out.csv("sweep_grid.csv", &grid.to_csv())?;
    out.json("sweep_grid.json", json!({ "grid": to_value(&grid), "baseline": to_value(&baseline), "calibration": to_value(&cfg.calibration) }))?;
    out.json("sweep_features.json", to_value(&features))?;
    out.svg("sweep_heatmap.svg", |hash| render_heatmap(&grid, hash))?;
    Ok(SweepOutcome { grid, baseline, features, files: out.files })
}

fn render_heatmap(grid: &SweepGrid, hash: &str) -> Result<String, PlotError> {
    let finite = grid.powers.iter().all(|p| p.is_finite());
    // a drive-off axis has no finite position; fall back to the column index
    let (ys, label) = if finite {
        (grid.powers.clone(), "MW power (dBm)")
    } else {
        ((0..grid.powers.len()).map(|j| j as f64).collect(), "power index")
    };
    let solver = grid.solver.as_str();
    heatmap(
        &PlotSpec::heatmap(&format!("Right-well population ({solver} solver)"), "flux bias (Phi0)", label),
        &grid.biases,
        &ys,
        &grid.values,
        hash,
    )
}

/// Runs the self-checks; the caller decides the exit status.
pub fn cmd_verify(cfg: &RunConfig) -> VerifyReport {
    run_verify(cfg)
}
