//! Flat dotted-key configuration, figure presets and the effective-config echo.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;

use noma_vlc::experiment::{DEFAULT_SEED, REFERENCE_LED_HEIGHT, REFERENCE_RADII, REFERENCE_THRESHOLDS};
use noma_vlc::{NoiseParams, Objective, QosMetric};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{location}unknown key `{key}`")]
    UnknownKey { key: String, location: String },
    #[error("{location}key `{key}`: {message}")]
    Invalid {
        key: String,
        location: String,
        message: String,
    },
    #[error("preset `{0}` is not available (known: fig1-fig3, fig6-fig11)")]
    Preset(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelMode {
    Static,
    Mobility,
}

impl fmt::Display for ChannelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelMode::Static => "static",
            ChannelMode::Mobility => "mobility",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateAllocation {
    Grpa,
    Proposed,
}

impl fmt::Display for RateAllocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RateAllocation::Grpa => "grpa",
            RateAllocation::Proposed => "proposed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub noise_alpha: f64,
    pub noise_beta: f64,
    pub noise_nu: u32,
    pub noise_truncation: usize,
    pub channel_mode: ChannelMode,
    pub half_angle_deg: f64,
    pub led_height: f64,
    pub radii: Vec<f64>,
    pub h_min: f64,
    pub h_max: f64,
    pub users: usize,
    pub thresholds: Vec<f64>,
    pub snr_start_db: f64,
    pub snr_stop_db: f64,
    pub snr_step_db: f64,
    pub rate_samples: usize,
    pub pdf_samples: usize,
    pub pdf_bins: usize,
    pub mobility_tuples: usize,
    pub seed: u64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub pdf_grid_points: usize,
    pub rate_allocation: RateAllocation,
    pub qos_metric: QosMetric,
    pub objective: Objective,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub allocate_snr_db: f64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let noise = NoiseParams::reference();
        Self {
            noise_alpha: noise.alpha(),
            noise_beta: noise.beta(),
            noise_nu: noise.nu(),
            noise_truncation: noise.truncation_m(),
            channel_mode: ChannelMode::Static,
            half_angle_deg: 50.0,
            led_height: REFERENCE_LED_HEIGHT,
            radii: REFERENCE_RADII.to_vec(),
            h_min: 1.0,
            h_max: 3.0,
            users: REFERENCE_THRESHOLDS.len(),
            thresholds: REFERENCE_THRESHOLDS.to_vec(),
            snr_start_db: 0.0,
            snr_stop_db: 30.0,
            snr_step_db: 2.0,
            rate_samples: 100_000,
            pdf_samples: 1_000_000,
            pdf_bins: 200,
            mobility_tuples: 100_000,
            seed: DEFAULT_SEED,
            phi_min: -15.0,
            phi_max: 15.0,
            pdf_grid_points: 301,
            rate_allocation: RateAllocation::Grpa,
            qos_metric: QosMetric::HalfLog2,
            objective: Objective::Exact,
            epsilon: noma_vlc::alloc::DEFAULT_EPSILON,
            max_iterations: noma_vlc::alloc::DEFAULT_MAX_ITERATIONS,
            allocate_snr_db: 20.0,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Number(f64),
    Text(String),
    List(Vec<f64>),
}

/// Every accepted key, in echo order.
pub const KEYS: [&str; 30] = [
    "noise.alpha",
    "noise.beta",
    "noise.nu",
    "noise.truncation",
    "channel.mode",
    "channel.half_angle_deg",
    "channel.led_height",
    "channel.radii",
    "channel.h_min",
    "channel.h_max",
    "users.count",
    "users.thresholds",
    "sweep.snr_start_db",
    "sweep.snr_stop_db",
    "sweep.snr_step_db",
    "mc.rate_samples",
    "mc.pdf_samples",
    "mc.pdf_bins",
    "mc.mobility_tuples",
    "mc.seed",
    "pdf.phi_min",
    "pdf.phi_max",
    "pdf.grid_points",
    "rates.allocation",
    "alloc.metric",
    "alloc.objective",
    "alloc.epsilon",
    "alloc.max_iterations",
    "alloc.snr_db",
    "output_dir",
];

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(inner) => flatten(&key, inner, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

/// "line N: " for the first line mentioning the key's last segment, or empty.
fn locate(source: &str, key: &str) -> String {
    let leaf = key.rsplit('.').next().unwrap_or(key);
    source
        .lines()
        .position(|l| {
            let t = l.trim_start();
            t.starts_with(key) || t.starts_with(leaf)
        })
        .map(|i| format!("line {}: ", i + 1))
        .unwrap_or_default()
}

fn to_value(key: &str, v: &toml::Value, location: &str) -> Result<Value, ConfigError> {
    let invalid = |message: &str| ConfigError::Invalid {
        key: key.to_string(),
        location: location.to_string(),
        message: message.to_string(),
    };
    match v {
        toml::Value::Float(x) => Ok(Value::Number(*x)),
        toml::Value::Integer(i) => Ok(Value::Number(*i as f64)),
        toml::Value::String(s) => Ok(Value::Text(s.clone())),
        toml::Value::Array(items) => items
            .iter()
            .map(|item| match item {
                toml::Value::Float(x) => Ok(*x),
                toml::Value::Integer(i) => Ok(*i as f64),
                _ => Err(invalid("lists must hold numbers")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Value::List),
        _ => Err(invalid("unsupported value type")),
    }
}

impl ExperimentConfig {
    /// Preset for a figure name (`fig1`, …, `fig11`).
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let base = Self::default();
        let mobility = |half_angle_deg: f64, h_max: f64| Self {
            channel_mode: ChannelMode::Mobility,
            half_angle_deg,
            h_min: 1.0,
            h_max,
            ..Self::default()
        };
        Ok(match name {
            "fig1" => base,
            "fig2" | "fig10" => Self {
                half_angle_deg: 50.0,
                ..base
            },
            "fig3" => Self {
                half_angle_deg: 60.0,
                ..base
            },
            "fig6" | "fig11" => mobility(50.0, 3.0),
            "fig7" => mobility(50.0, 5.0),
            "fig8" => mobility(60.0, 3.0),
            "fig9" => mobility(60.0, 5.0),
            other => return Err(ConfigError::Preset(other.to_string())),
        })
    }

    /// Applies `key = value` pairs from TOML text on top of `self`.
    pub fn merge_toml(mut self, source: &str, origin: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = toml::from_str(source).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        let mut flat = BTreeMap::new();
        flatten("", &table, &mut flat);
        for (key, raw) in &flat {
            let location = locate(source, key);
            if !KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey {
                    key: key.clone(),
                    location,
                });
            }
            let value = to_value(key, raw, &location)?;
            self.set(key, value, &location)?;
        }
        self.validate()?;
        Ok(self)
    }

    fn set(&mut self, key: &str, value: Value, location: &str) -> Result<(), ConfigError> {
        let invalid = |message: String| ConfigError::Invalid {
            key: key.to_string(),
            location: location.to_string(),
            message,
        };
        let number = |v: &Value| match v {
            Value::Number(x) => Ok(*x),
            _ => Err(invalid("expected a number".into())),
        };
        let count = |v: &Value| -> Result<usize, ConfigError> {
            let x = number(v)?;
            if x >= 0.0 && x.fract() == 0.0 && x <= 1e12 {
                Ok(x as usize)
            } else {
                Err(invalid(format!("expected a non-negative integer, got {x}")))
            }
        };
        let list = |v: &Value| match v {
            Value::List(xs) => Ok(xs.clone()),
            _ => Err(invalid("expected a list of numbers".into())),
        };
        let text = |v: &Value| match v {
            Value::Text(s) => Ok(s.clone()),
            _ => Err(invalid("expected a string".into())),
        };
        match key {
            "noise.alpha" => self.noise_alpha = number(&value)?,
            "noise.beta" => self.noise_beta = number(&value)?,
            "noise.nu" => {
                self.noise_nu = u32::try_from(count(&value)?).map_err(|_| invalid("nu out of range".into()))?
            }
            "noise.truncation" => self.noise_truncation = count(&value)?,
            "channel.mode" => {
                self.channel_mode = match text(&value)?.as_str() {
                    "static" => ChannelMode::Static,
                    "mobility" => ChannelMode::Mobility,
                    other => return Err(invalid(format!("expected `static` or `mobility`, got `{other}`"))),
                }
            }
            "channel.half_angle_deg" => self.half_angle_deg = number(&value)?,
            "channel.led_height" => self.led_height = number(&value)?,
            "channel.radii" => self.radii = list(&value)?,
            "channel.h_min" => self.h_min = number(&value)?,
            "channel.h_max" => self.h_max = number(&value)?,
            "users.count" => self.users = count(&value)?,
            "users.thresholds" => self.thresholds = list(&value)?,
            "sweep.snr_start_db" => self.snr_start_db = number(&value)?,
            "sweep.snr_stop_db" => self.snr_stop_db = number(&value)?,
            "sweep.snr_step_db" => self.snr_step_db = number(&value)?,
            "mc.rate_samples" => self.rate_samples = count(&value)?,
            "mc.pdf_samples" => self.pdf_samples = count(&value)?,
            "mc.pdf_bins" => self.pdf_bins = count(&value)?,
            "mc.mobility_tuples" => self.mobility_tuples = count(&value)?,
            "mc.seed" => {
                self.seed = match &value {
                    Value::Text(s) => s.parse().map_err(|_| invalid(format!("`{s}` is not a u64")))?,
                    v => count(v)? as u64,
                }
            }
            "pdf.phi_min" => self.phi_min = number(&value)?,
            "pdf.phi_max" => self.phi_max = number(&value)?,
            "pdf.grid_points" => self.pdf_grid_points = count(&value)?,
            "rates.allocation" => {
                self.rate_allocation = match text(&value)?.as_str() {
                    "grpa" => RateAllocation::Grpa,
                    "proposed" => RateAllocation::Proposed,
                    other => return Err(invalid(format!("expected `grpa` or `proposed`, got `{other}`"))),
                }
            }
            "alloc.metric" => {
                self.qos_metric = match text(&value)?.as_str() {
                    "half_log2" => QosMetric::HalfLog2,
                    "log2" => QosMetric::Log2,
                    other => return Err(invalid(format!("expected `half_log2` or `log2`, got `{other}`"))),
                }
            }
            "alloc.objective" => {
                self.objective = match text(&value)?.as_str() {
                    "exact" => Objective::Exact,
                    "approximate" => Objective::Approximate,
                    other => return Err(invalid(format!("expected `exact` or `approximate`, got `{other}`"))),
                }
            }
            "alloc.epsilon" => self.epsilon = number(&value)?,
            "alloc.max_iterations" => self.max_iterations = count(&value)?,
            "alloc.snr_db" => self.allocate_snr_db = number(&value)?,
            "output_dir" => self.output_dir = PathBuf::from(text(&value)?),
            _ => unreachable!("keys are checked against KEYS"),
        }
        Ok(())
    }

    /// Checks cross-key consistency and the invariants of the embedded model types.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, message: String| ConfigError::Invalid {
            key: key.to_string(),
            location: String::new(),
            message,
        };
        self.noise().map_err(|e| invalid("noise", e.to_string()))?;
        if self.users == 0 {
            return Err(invalid("users.count", "need at least one user".into()));
        }
        if self.thresholds.len() != self.users {
            return Err(invalid(
                "users.thresholds",
                format!("{} thresholds for {} users", self.thresholds.len(), self.users),
            ));
        }
        noma_vlc::QosSpec::new(self.thresholds.clone(), 1.0).map_err(|e| invalid("users.thresholds", e.to_string()))?;
        if !(self.epsilon > 0.0) || self.max_iterations == 0 {
            return Err(invalid("alloc", "epsilon and max_iterations must be positive".into()));
        }
        if self.radii.len() != self.users {
            return Err(invalid(
                "channel.radii",
                format!("{} radii for {} users", self.radii.len(), self.users),
            ));
        }
        if self.radii.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || !(self.led_height > 0.0) {
            return Err(invalid(
                "channel.radii",
                "radii must be non-negative and the LED height positive".into(),
            ));
        }
        noma_vlc::experiment::static_gains(self.half_angle_deg, &self.radii, self.led_height)
            .map_err(|e| invalid("channel", e.to_string()))?;
        noma_vlc::experiment::mobility_model(self.half_angle_deg, self.h_min, self.h_max)
            .map_err(|e| invalid("channel", e.to_string()))?;
        noma_vlc::experiment::snr_grid(self.snr_start_db, self.snr_stop_db, self.snr_step_db)
            .map_err(|e| invalid("sweep", e.to_string()))?;
        if self.rate_samples < noma_vlc::rate::MIN_ENTROPY_SAMPLES {
            return Err(invalid(
                "mc.rate_samples",
                format!("must be at least {}", noma_vlc::rate::MIN_ENTROPY_SAMPLES),
            ));
        }
        if self.pdf_samples == 0 || self.pdf_bins < 2 || self.mobility_tuples == 0 {
            return Err(invalid(
                "mc",
                "sample counts must be positive and pdf_bins at least 2".into(),
            ));
        }
        if !(self.phi_max > self.phi_min) || self.pdf_grid_points < 2 {
            return Err(invalid(
                "pdf",
                "need phi_min < phi_max and at least two grid points".into(),
            ));
        }
        Ok(())
    }

    pub fn noise(&self) -> noma_vlc::Result<NoiseParams> {
        NoiseParams::new(self.noise_alpha, self.noise_beta, self.noise_nu, self.noise_truncation)
    }

    /// Every key with its effective value; loading this text reproduces the configuration.
    pub fn echo(&self) -> String {
        let list = |xs: &[f64]| {
            let body: Vec<String> = xs.iter().map(|x| format!("{x:?}")).collect();
            format!("[{}]", body.join(", "))
        };
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("noise.alpha", format!("{:?}", self.noise_alpha));
        line("noise.beta", format!("{:?}", self.noise_beta));
        line("noise.nu", self.noise_nu.to_string());
        line("noise.truncation", self.noise_truncation.to_string());
        line("channel.mode", format!("\"{}\"", self.channel_mode));
        line("channel.half_angle_deg", format!("{:?}", self.half_angle_deg));
        line("channel.led_height", format!("{:?}", self.led_height));
        line("channel.radii", list(&self.radii));
        line("channel.h_min", format!("{:?}", self.h_min));
        line("channel.h_max", format!("{:?}", self.h_max));
        line("users.count", self.users.to_string());
        line("users.thresholds", list(&self.thresholds));
        line("sweep.snr_start_db", format!("{:?}", self.snr_start_db));
        line("sweep.snr_stop_db", format!("{:?}", self.snr_stop_db));
        line("sweep.snr_step_db", format!("{:?}", self.snr_step_db));
        line("mc.rate_samples", self.rate_samples.to_string());
        line("mc.pdf_samples", self.pdf_samples.to_string());
        line("mc.pdf_bins", self.pdf_bins.to_string());
        line("mc.mobility_tuples", self.mobility_tuples.to_string());
        line("mc.seed", format!("\"{}\"", self.seed));
        line("pdf.phi_min", format!("{:?}", self.phi_min));
        line("pdf.phi_max", format!("{:?}", self.phi_max));
        line("pdf.grid_points", self.pdf_grid_points.to_string());
        line("rates.allocation", format!("\"{}\"", self.rate_allocation));
        line("alloc.metric", format!("\"{}\"", self.qos_metric));
        line("alloc.objective", format!("\"{}\"", self.objective));
        line("alloc.epsilon", format!("{:?}", self.epsilon));
        line("alloc.max_iterations", self.max_iterations.to_string());
        line("alloc.snr_db", format!("{:?}", self.allocate_snr_db));
        line("output_dir", format!("{:?}", self.output_dir.display().to_string()));
        out
    }
}
