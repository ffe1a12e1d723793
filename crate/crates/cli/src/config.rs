//! INI run configuration: `[section]` headers and `key = value` lines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use squidsim_core::dynamics::{DecoherenceRates, DriveParams};
use squidsim_core::spectrum::EigenGridSpec;
use squidsim_core::sweep::{ModelWindow, PowerCalibration, Solver, SweepSpec};
use squidsim_core::CircuitParams;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid config: {0}")]
    Validation(String),
}

impl ConfigError {
    pub fn is_parse(&self) -> bool {
        matches!(self, ConfigError::Parse { .. } | ConfigError::Io { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OutputFormats {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

/// Fully validated configuration with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub circuit: CircuitParams,
    /// Whether βL (rather than Ic) was the given quantity.
    pub beta_l_given: bool,
    pub grid: EigenGridSpec,
    pub window: ModelWindow,
    pub drive_f: f64,
    pub duration: f64,
    /// Power of the single-power trace in `scan` (dBm).
    pub scan_power: f64,
    pub rates: DecoherenceRates,
    pub calibration: PowerCalibration,
    pub sweep: SweepSpec,
    pub out_dir: PathBuf,
    pub formats: OutputFormats,
}

const KNOWN_KEYS: &[(&str, &[&str])] = &[
    ("circuit", &["L", "C", "Ic", "beta_L", "phi_cjj"]),
    ("spectrum", &["half_width", "n_points", "n_levels", "bias_min", "bias_max", "n_bias"]),
    ("drive", &["f", "duration", "power"]),
    ("rates", &["gamma1", "gamma_inter", "gamma2"]),
    ("calibration", &["p_ref", "phi_rf_ref"]),
    ("sweep", &["bias_min", "bias_max", "n_bias", "p_min", "p_max", "n_power", "solver", "shots", "seed", "n_max"]),
    ("output", &["directory", "formats"]),
];

/// Raw key/value pairs by section, with unknown or repeated keys rejected.
struct Sections(BTreeMap<String, BTreeMap<String, String>>);

impl Sections {
    /// Reads `[section]` headers, `key = value` lines, blank lines and
    /// comments starting with `#` or `;`.
    fn parse_text(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let parse_err = |line: usize, message: String| ConfigError::Parse { path: origin.to_string(), line, message };
        let mut out: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| parse_err(line_no, format!("unterminated section header '{line}'")))?
                    .trim();
                if name.is_empty() {
                    return Err(parse_err(line_no, "empty section name".into()));
                }
                if !KNOWN_KEYS.iter().any(|(s, _)| *s == name) {
                    return Err(ConfigError::Validation(format!("unknown section [{name}] (line {line_no})")));
                }
                out.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(line_no, format!("expected 'key = value', got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(parse_err(line_no, "missing key before '='".into()));
            }
            let Some(section) = &current else {
                return Err(parse_err(line_no, format!("key '{key}' appears before any [section]")));
            };
            let keys = KNOWN_KEYS.iter().find(|(s, _)| s == section).map(|(_, k)| *k).unwrap_or(&[]);
            if !keys.contains(&key) {
                return Err(ConfigError::Validation(format!("unknown key '{key}' in [{section}] (line {line_no})")));
            }
            let entry = out.entry(section.clone()).or_default();
            if entry.insert(key.to_string(), value.to_string()).is_some() {
                return Err(ConfigError::Validation(format!("key '{key}' given twice in [{section}] (line {line_no})")));
            }
        }
        Ok(Self(out))
    }

    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.0.get(section).and_then(|s| s.get(key)).map(String::as_str)
    }

    fn parse<T: std::str::FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, ConfigError> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| ConfigError::Validation(format!("[{section}] {key} = '{v}' is not a valid value"))),
        }
    }

    fn opt_f64(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        self.raw(section, key).map(|_| self.parse(section, key, 0.0)).transpose()
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_config(&text, &path.display().to_string())
}

/// Parses config text; `origin` names the source in error messages.
pub fn parse_config(text: &str, origin: &str) -> Result<RunConfig, ConfigError> {
    build(&Sections::parse_text(text, origin)?)
}

fn build(s: &Sections) -> Result<RunConfig, ConfigError> {
    let v = |e: String| ConfigError::Validation(e);
    let nominal = CircuitParams::nominal();
    let l = s.parse("circuit", "L", nominal.inductance)?;
    let c = s.parse("circuit", "C", nominal.capacitance)?;
    let phi_cjj = s.parse("circuit", "phi_cjj", 0.0)?;
    let ic = s.opt_f64("circuit", "Ic")?;
    let beta = s.opt_f64("circuit", "beta_L")?;
    let beta_l_given = ic.is_none();
    let circuit = match (ic, beta) {
        (Some(_), Some(_)) => return Err(v("give exactly one of Ic and beta_L in [circuit]".into())),
        (Some(ic), None) => CircuitParams::new(l, c, ic, 0.5, phi_cjj),
        (None, b) => {
            // βL refers to the modulated critical current at the given phi_cjj
            let scale = (std::f64::consts::PI * phi_cjj).cos().abs();
            if scale < 1e-12 {
                return Err(v("beta_L is unreachable where |cos(pi phi_cjj)| = 0".into()));
            }
            CircuitParams::from_beta_l(l, c, b.unwrap_or(nominal.beta_l()), 0.5)
                .and_then(|p| CircuitParams::new(l, c, p.critical_current / scale, 0.5, phi_cjj))
        }
    }
    .map_err(|e| v(e.to_string()))?;

    let grid = EigenGridSpec::centered(
        0.5,
        s.parse("spectrum", "half_width", EigenGridSpec::DEFAULT_HALF_WIDTH)?,
        s.parse("spectrum", "n_points", EigenGridSpec::DEFAULT_POINTS)?,
        s.parse("spectrum", "n_levels", EigenGridSpec::DEFAULT_LEVELS)?,
    )
    .map_err(|e| v(e.to_string()))?;
    let dw = ModelWindow::default();
    let window = ModelWindow {
        bias_min: s.parse("spectrum", "bias_min", dw.bias_min)?,
        bias_max: s.parse("spectrum", "bias_max", dw.bias_max)?,
        n_bias: s.parse("spectrum", "n_bias", dw.n_bias)?,
        grid,
    };
    if window.n_bias < 2 || !(window.bias_min < window.bias_max) {
        return Err(v(format!(
            "[spectrum] needs n_bias >= 2 and bias_min < bias_max, got {} on [{}, {}]",
            window.n_bias, window.bias_min, window.bias_max
        )));
    }

    let ds = SweepSpec::default();
    let drive_f = s.parse("drive", "f", ds.f)?;
    let duration = s.parse("drive", "duration", ds.duration)?;
    let scan_power: f64 = s.parse("drive", "power", 0.0)?;
    DriveParams::new(drive_f, 0.0, duration).map_err(|e| v(e.to_string()))?;
    if !scan_power.is_finite() && scan_power != f64::NEG_INFINITY {
        return Err(v(format!("[drive] power must be finite or -inf, got {scan_power}")));
    }

    let dr = DecoherenceRates::default();
    let rates = DecoherenceRates {
        gamma1: s.parse("rates", "gamma1", dr.gamma1)?,
        gamma_inter: s.parse("rates", "gamma_inter", dr.gamma_inter)?,
        gamma2: s.parse("rates", "gamma2", dr.gamma2)?,
    };
    rates.validate().map_err(|e| v(e.to_string()))?;

    let dc = PowerCalibration::default();
    let calibration = PowerCalibration {
        p_ref: s.parse("calibration", "p_ref", dc.p_ref)?,
        phi_rf_ref: s.parse("calibration", "phi_rf_ref", dc.phi_rf_ref)?,
    };
    calibration.validate().map_err(|e| v(e.to_string()))?;

    let shots = match s.raw("sweep", "shots") {
        None | Some("none") => None,
        Some(_) => Some(s.parse::<u64>("sweep", "shots", 0)?),
    };
    let sweep = SweepSpec {
        bias_min: s.parse("sweep", "bias_min", ds.bias_min)?,
        bias_max: s.parse("sweep", "bias_max", ds.bias_max)?,
        n_bias: s.parse("sweep", "n_bias", ds.n_bias)?,
        p_min: s.parse("sweep", "p_min", ds.p_min)?,
        p_max: s.parse("sweep", "p_max", ds.p_max)?,
        n_power: s.parse("sweep", "n_power", ds.n_power)?,
        f: drive_f,
        solver: s.parse("sweep", "solver", ds.solver)?,
        duration,
        shots,
        seed: s.parse("sweep", "seed", ds.seed)?,
        n_max: s.parse("sweep", "n_max", ds.n_max)?,
    };
    sweep.validate().map_err(|e| v(e.to_string()))?;

    let out_dir = PathBuf::from(s.raw("output", "directory").unwrap_or("out"));
    let mut formats = OutputFormats { csv: false, json: false, svg: false };
    for f in s.raw("output", "formats").unwrap_or("csv,json,svg").split(',').map(str::trim) {
        match f {
            "csv" => formats.csv = true,
            "json" => formats.json = true,
            "svg" => formats.svg = true,
            "" => {}
            other => return Err(v(format!("[output] unknown format '{other}' (expected csv, json, svg)"))),
        }
    }

    Ok(RunConfig {
        circuit,
        beta_l_given,
        grid,
        window,
        drive_f,
        duration,
        scan_power,
        rates,
        calibration,
        sweep,
        out_dir,
        formats,
    })
}

impl RunConfig {
    pub fn defaults() -> Self {
        parse_config("", "<defaults>").expect("defaults are valid")
    }

    pub fn with_solver(mut self, solver: Solver) -> Self {
        self.sweep.solver = solver;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.sweep.seed = seed;
        self
    }

    pub fn drive(&self, phi_rf: f64) -> DriveParams {
        DriveParams { f: self.drive_f, phi_rf, duration: self.duration }
    }

    /// Canonical INI text of every effective setting, defaults included.
    pub fn effective_ini(&self) -> String {
        let mut o = self.settings_ini();
        let _ = writeln!(o, "\n[output]");
        let _ = writeln!(o, "directory = {}", self.out_dir.display());
        let f = &self.formats;
        let names: Vec<&str> = [(f.csv, "csv"), (f.json, "json"), (f.svg, "svg")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| *n)
            .collect();
        let _ = writeln!(o, "formats = {}", names.join(","));
        o
    }

    /// Canonical INI text of the settings that determine results, i.e.
    /// everything except `[output]`.
    ///
    /// Floats use Rust's shortest round-trip formatting, so the text and its
    /// hash depend only on the values.
    pub fn settings_ini(&self) -> String {
        let mut o = String::new();
        let p = &self.circuit;
        let _ = writeln!(o, "[circuit]");
        let _ = writeln!(o, "L = {:?}", p.inductance);
        let _ = writeln!(o, "C = {:?}", p.capacitance);
        if self.beta_l_given {
            let _ = writeln!(o, "beta_L = {:?}", p.beta_l());
        } else {
            let _ = writeln!(o, "Ic = {:?}", p.critical_current);
        }
        let _ = writeln!(o, "phi_cjj = {:?}", p.phi_cjj);
        let _ = writeln!(o, "\n[spectrum]");
        let _ = writeln!(o, "half_width = {:?}", self.grid.half_width());
        let _ = writeln!(o, "n_points = {}", self.grid.n_points);
        let _ = writeln!(o, "n_levels = {}", self.grid.n_levels);
        let _ = writeln!(o, "bias_min = {:?}", self.window.bias_min);
        let _ = writeln!(o, "bias_max = {:?}", self.window.bias_max);
        let _ = writeln!(o, "n_bias = {}", self.window.n_bias);
        let _ = writeln!(o, "\n[drive]");
        let _ = writeln!(o, "f = {:?}", self.drive_f);
        let _ = writeln!(o, "duration = {:?}", self.duration);
        let _ = writeln!(o, "power = {:?}", self.scan_power);
        let _ = writeln!(o, "\n[rates]");
        let _ = writeln!(o, "gamma1 = {:?}", self.rates.gamma1);
        let _ = writeln!(o, "gamma_inter = {:?}", self.rates.gamma_inter);
        let _ = writeln!(o, "gamma2 = {:?}", self.rates.gamma2);
        let _ = writeln!(o, "\n[calibration]");
        let _ = writeln!(o, "p_ref = {:?}", self.calibration.p_ref);
        let _ = writeln!(o, "phi_rf_ref = {:?}", self.calibration.phi_rf_ref);
        let w = &self.sweep;
        let _ = writeln!(o, "\n[sweep]");
        let _ = writeln!(o, "bias_min = {:?}", w.bias_min);
        let _ = writeln!(o, "bias_max = {:?}", w.bias_max);
        let _ = writeln!(o, "n_bias = {}", w.n_bias);
        let _ = writeln!(o, "p_min = {:?}", w.p_min);
        let _ = writeln!(o, "p_max = {:?}", w.p_max);
        let _ = writeln!(o, "n_power = {}", w.n_power);
        let _ = writeln!(o, "solver = {}", w.solver.as_str());
        match w.shots {
            Some(n) => {
                let _ = writeln!(o, "shots = {n}");
            }
            None => {
                let _ = writeln!(o, "shots = none");
            }
        }
        let _ = writeln!(o, "seed = {}", w.seed);
        let _ = writeln!(o, "n_max = {}", w.n_max);
        o
    }

    /// SHA-256 of [`RunConfig::settings_ini`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.settings_ini().as_bytes()))
    }
}
