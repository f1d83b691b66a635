//! Flat key-value experiment configuration.
//!
//! Config files hold one `key = value` pair per line; `#` starts a comment.
//! Command-line flags override file values, file values override the
//! environment (`TGLAB_OUT` for the output directory), and everything has a
//! documented default. Every run report echoes the fully resolved
//! configuration in the same format, so a report reproduces its run without
//! the original command line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use tglab_core::probe::{LossWeighting, ProbeConfig, ProbeKind, TimeDistribution};
use tglab_core::types::{EffectiveRankKind, Spectrum, TargetKind};

use crate::CliError;

/// Environment variable overriding the default output directory.
pub const OUT_ENV_VAR: &str = "TGLAB_OUT";
const DEFAULT_OUT: &str = "tglab-out";

/// Parsed key-value file with duplicate and syntax diagnostics.
#[derive(Debug, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str, source: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(idx) => &raw[..idx],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::config(format!(
                    "{source}:{}: expected 'key = value', got '{raw}'",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(CliError::config(format!(
                    "{source}:{}: empty key",
                    lineno + 1
                )));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(CliError::config(format!(
                    "{source}:{}: duplicate key '{key}'",
                    lineno + 1
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.entries.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Rejects keys outside the subcommand's documented set.
    pub fn check_known(&self, known: &[&str]) -> Result<(), CliError> {
        for key in self.entries.keys() {
            if !known.contains(&key.as_str()) {
                return Err(CliError::config(format!(
                    "unknown config key '{key}' (known keys: {})",
                    known.join(", ")
                )));
            }
        }
        Ok(())
    }
}

fn parse_field<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| CliError::config(format!("config field '{key}': {e} (value '{value}')")))
}

fn get_or<T: FromStr>(kv: &KeyValues, key: &str, default: T) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    match kv.get(key) {
        Some(v) => parse_field(key, v),
        None => Ok(default),
    }
}

/// A spectrum given either as an explicit comma list or as the geometric
/// family `geo:<dim>:<top>:<ratio>`.
#[derive(Debug, Clone)]
pub struct SpectrumSpec {
    pub text: String,
    pub spectrum: Spectrum,
}

impl SpectrumSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let trimmed = text.trim();
        let spectrum = if let Some(rest) = trimmed.strip_prefix("geo:") {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 3 {
                return Err(CliError::config(format!(
                    "geometric spectrum must be geo:<dim>:<top>:<ratio>, got '{trimmed}'"
                )));
            }
            let dim: usize = parse_field("spectrum dim", parts[0])?;
            let top: f64 = parse_field("spectrum top", parts[1])?;
            let ratio: f64 = parse_field("spectrum ratio", parts[2])?;
            Spectrum::geometric(dim, top, ratio)
                .map_err(|e| CliError::config(format!("spectrum: {e}")))?
        } else {
            let values: Vec<f64> = trimmed
                .split(',')
                .map(|s| parse_field("spectrum", s.trim()))
                .collect::<Result<_, _>>()?;
            Spectrum::new(values).map_err(|e| CliError::config(format!("spectrum: {e}")))?
        };
        Ok(Self {
            text: trimmed.to_string(),
            spectrum,
        })
    }
}

fn parse_f64_list(kv: &KeyValues, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
    match kv.get(key) {
        None => Ok(default.to_vec()),
        Some(text) => text
            .split(',')
            .map(|s| parse_field(key, s.trim()))
            .collect(),
    }
}

/// Output format for the primary tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    /// CSV tables plus a JSON run report.
    Csv,
    /// JSON run report only (tables embedded).
    Json,
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        })
    }
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

/// Settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct CommonConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub format: OutputFormat,
    pub strict: bool,
}


impl CommonConfig {
    pub fn resolve(kv: &KeyValues) -> Result<Self, CliError> {
        let out = match kv.get("out") {
            Some(v) => PathBuf::from(v),
            None => std::env::var_os(OUT_ENV_VAR)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
        };
        Ok(Self {
            seed: get_or(kv, "seed", 0)?,
            out,
            format: get_or(kv, "format", OutputFormat::Csv)?,
            strict: get_or(kv, "strict", false)?,
        })
    }

    fn echo(&self, into: &mut BTreeMap<String, String>) {
        into.insert("seed".into(), self.seed.to_string());
        into.insert("out".into(), self.out.display().to_string());
        into.insert("format".into(), self.format.to_string());
        into.insert("strict".into(), self.strict.to_string());
    }
}

fn parse_targets(kv: &KeyValues, key: &str) -> Result<Vec<TargetKind>, CliError> {
    match kv.get(key) {
        None => Ok(TargetKind::ALL.to_vec()),
        Some(text) => text
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<TargetKind>()
                    .map_err(|e| CliError::config(format!("config field '{key}': {e}")))
            })
            .collect(),
    }
}

#[derive(Debug, Clone)]
pub struct GeometryConfig {
    pub spectrum: SpectrumSpec,
    pub t_grid: Vec<f64>,
    pub targets: Vec<TargetKind>,
    pub effective_rank: EffectiveRankKind,
    pub common: CommonConfig,
}

impl GeometryConfig {
    pub const KEYS: [&'static str; 8] = [
        "spectrum",
        "t_grid",
        "targets",
        "effective_rank",
        "seed",
        "out",
        "format",
        "strict",
    ];

    pub fn resolve(kv: &KeyValues) -> Result<Self, CliError> {
        kv.check_known(&Self::KEYS)?;
        let spectrum = SpectrumSpec::parse(
            kv.get("spectrum")
                .ok_or_else(|| CliError::config("missing required key 'spectrum'"))?,
        )?;
        let effective_rank = match kv.get("effective_rank").unwrap_or("participation-ratio") {
            "participation-ratio" => EffectiveRankKind::ParticipationRatio,
            "spectral-entropy" => EffectiveRankKind::SpectralEntropy,
            other => {
                return Err(CliError::config(format!(
                    "config field 'effective_rank': unknown value '{other}'"
                )))
            }
        };
        Ok(Self {
            spectrum,
            t_grid: parse_f64_list(kv, "t_grid", &[0.1, 0.25, 0.5, 0.75, 0.9])?,
            targets: parse_targets(kv, "targets")?,
            effective_rank,
            common: CommonConfig::resolve(kv)?,
        })
    }

    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("spectrum".into(), self.spectrum.text.clone());
        map.insert("t_grid".into(), join_f64(&self.t_grid));
        map.insert(
            "targets".into(),
            self.targets
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        map.insert(
            "effective_rank".into(),
            match self.effective_rank {
                EffectiveRankKind::ParticipationRatio => "participation-ratio".into(),
                EffectiveRankKind::SpectralEntropy => "spectral-entropy".into(),
            },
        );
        self.common.echo(&mut map);
        map
    }
}

#[derive(Debug, Clone)]
pub struct McValidateConfig {
    pub spectrum: SpectrumSpec,
    pub t_values: Vec<f64>,
    pub n: usize,
    pub k: usize,
    pub common: CommonConfig,
}

impl McValidateConfig {
    pub const KEYS: [&'static str; 8] = [
        "spectrum",
        "t_values",
        "n",
        "k",
        "seed",
        "out",
        "format",
        "strict",
    ];

    pub fn resolve(kv: &KeyValues) -> Result<Self, CliError> {
        kv.check_known(&Self::KEYS)?;
        let spectrum = SpectrumSpec::parse(
            kv.get("spectrum")
                .ok_or_else(|| CliError::config("missing required key 'spectrum'"))?,
        )?;
        let config = Self {
            spectrum,
            t_values: parse_f64_list(kv, "t_values", &[0.25, 0.5, 0.75])?,
            n: get_or(kv, "n", 200_000)?,
            k: get_or(kv, "k", 1024)?,
            common: CommonConfig::resolve(kv)?,
        };
        if config.n < 2 {
            return Err(CliError::config("n must be at least 2"));
        }
        if config.k < 2 || config.k > config.n {
            return Err(CliError::config(format!(
                "k must satisfy 2 <= k <= n, got k = {}, n = {}",
                config.k, config.n
            )));
        }
        Ok(config)
    }

    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("spectrum".into(), self.spectrum.text.clone());
        map.insert("t_values".into(), join_f64(&self.t_values));
        map.insert("n".into(), self.n.to_string());
        map.insert("k".into(), self.k.to_string());
        self.common.echo(&mut map);
        map
    }
}

#[derive(Debug, Clone)]
pub struct ProbeCmdConfig {
    pub spectrum: SpectrumSpec,
    pub probe: ProbeConfig,
    pub common: CommonConfig,
}

impl ProbeCmdConfig {
    pub const KEYS: [&'static str; 17] = [
        "spectrum",
        "kind",
        "hidden_width",
        "learning_rate",
        "beta1",
        "beta2",
        "epsilon",
        "batch_size",
        "steps",
        "t_lo",
        "t_hi",
        "fixed_t",
        "weighting",
        "seed",
        "out",
        "format",
        "strict",
    ];

    pub fn resolve(kv: &KeyValues) -> Result<Self, CliError> {
        kv.check_known(&Self::KEYS)?;
        let spectrum = SpectrumSpec::parse(
            kv.get("spectrum")
                .ok_or_else(|| CliError::config("missing required key 'spectrum'"))?,
        )?;
        let common = CommonConfig::resolve(kv)?;
        let defaults = ProbeConfig::default();
        let kind = match kv.get("kind").unwrap_or("mlp") {
            "mlp" => ProbeKind::Mlp,
            "linear" => ProbeKind::LinearPerCoordinate,
            other => {
                return Err(CliError::config(format!(
                    "config field 'kind': unknown value '{other}' (expected linear or mlp)"
                )))
            }
        };
        let time_distribution = match kv.get("fixed_t") {
            Some(v) => TimeDistribution::Fixed {
                t: parse_field("fixed_t", v)?,
            },
            None => TimeDistribution::Uniform {
                lo: get_or(kv, "t_lo", 1e-3)?,
                hi: get_or(kv, "t_hi", 1.0 - 1e-3)?,
            },
        };
        let weighting = match kv.get("weighting").unwrap_or("unweighted") {
            "unweighted" => LossWeighting::Unweighted,
            "clean-readout" => LossWeighting::CleanReadoutWeighted,
            other => {
                return Err(CliError::config(format!(
                    "config field 'weighting': unknown value '{other}' \
                     (expected unweighted or clean-readout)"
                )))
            }
        };
        let probe = ProbeConfig {
            kind,
            hidden_width: get_or(kv, "hidden_width", defaults.hidden_width)?,
            learning_rate: get_or(kv, "learning_rate", defaults.learning_rate)?,
            beta1: get_or(kv, "beta1", defaults.beta1)?,
            beta2: get_or(kv, "beta2", defaults.beta2)?,
            epsilon: get_or(kv, "epsilon", defaults.epsilon)?,
            batch_size: get_or(kv, "batch_size", defaults.batch_size)?,
            steps: get_or(kv, "steps", defaults.steps)?,
            time_distribution,
            weighting,
            seed: common.seed,
        };
        probe
            .validate()
            .map_err(|e| CliError::config(format!("probe config: {e}")))?;
        Ok(Self {
            spectrum,
            probe,
            common,
        })
    }

    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("spectrum".into(), self.spectrum.text.clone());
        map.insert(
            "kind".into(),
            match self.probe.kind {
                ProbeKind::Mlp => "mlp".into(),
                ProbeKind::LinearPerCoordinate => "linear".into(),
            },
        );
        map.insert("hidden_width".into(), self.probe.hidden_width.to_string());
        map.insert("learning_rate".into(), self.probe.learning_rate.to_string());
        map.insert("beta1".into(), self.probe.beta1.to_string());
        map.insert("beta2".into(), self.probe.beta2.to_string());
        map.insert("epsilon".into(), self.probe.epsilon.to_string());
        map.insert("batch_size".into(), self.probe.batch_size.to_string());
        map.insert("steps".into(), self.probe.steps.to_string());
        match self.probe.time_distribution {
            TimeDistribution::Fixed { t } => {
                map.insert("fixed_t".into(), t.to_string());
            }
            TimeDistribution::Uniform { lo, hi } => {
                map.insert("t_lo".into(), lo.to_string());
                map.insert("t_hi".into(), hi.to_string());
            }
        }
        map.insert(
            "weighting".into(),
            match self.probe.weighting {
                LossWeighting::Unweighted => "unweighted".into(),
                LossWeighting::CleanReadoutWeighted => "clean-readout".into(),
            },
        );
        self.common.echo(&mut map);
        map
    }
}

/// Probe field attached to a sampling run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleProbe {
    None,
    Linear,
    Mlp,
}

#[derive(Debug, Clone)]
pub struct SampleConfig {
    pub spectrum: SpectrumSpec,
    pub steps: usize,
    pub n: usize,
    /// None means "auto": 1.0 unless the spectrum has zero directions or a
    /// clean probe drives the flow.
    pub t_max: Option<f64>,
    pub probe: SampleProbe,
    pub probe_target: TargetKind,
    pub probe_steps: u64,
    pub export_endpoints: bool,
    pub common: CommonConfig,
}

impl SampleConfig {
    pub const KEYS: [&'static str; 12] = [
        "spectrum",
        "steps",
        "n",
        "t_max",
        "probe",
        "probe_target",
        "probe_steps",
        "export_endpoints",
        "seed",
        "out",
        "format",
        "strict",
    ];

    pub fn resolve(kv: &KeyValues) -> Result<Self, CliError> {
        kv.check_known(&Self::KEYS)?;
        let spectrum = SpectrumSpec::parse(
            kv.get("spectrum")
                .ok_or_else(|| CliError::config("missing required key 'spectrum'"))?,
        )?;
        let probe = match kv.get("probe").unwrap_or("none") {
            "none" => SampleProbe::None,
            "linear" => SampleProbe::Linear,
            "mlp" => SampleProbe::Mlp,
            other => {
                return Err(CliError::config(format!(
                    "config field 'probe': unknown value '{other}' \
                     (expected none, linear, or mlp)"
                )))
            }
        };
        let probe_target = match kv.get("probe_target") {
            None => TargetKind::Clean,
            Some(v) => v
                .parse::<TargetKind>()
                .map_err(|e| CliError::config(format!("config field 'probe_target': {e}")))?,
        };
        if probe != SampleProbe::None && probe_target == TargetKind::Noise {
            return Err(CliError::config(
                "noise probes cannot drive the flow: their velocity readout \
                 divides by t, which vanishes at the t = 0 start",
            ));
        }
        let config = Self {
            spectrum,
            steps: get_or(kv, "steps", 50)?,
            n: get_or(kv, "n", 50_000)?,
            t_max: match kv.get("t_max") {
                Some(v) => Some(parse_field("t_max", v)?),
                None => None,
            },
            probe,
            probe_target,
            probe_steps: get_or(kv, "probe_steps", 10_000)?,
            export_endpoints: get_or(kv, "export_endpoints", false)?,
            common: CommonConfig::resolve(kv)?,
        };
        if config.steps == 0 {
            return Err(CliError::config("steps must be at least 1"));
        }
        if config.n < 2 {
            return Err(CliError::config("n must be at least 2"));
        }
        Ok(config)
    }

    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("spectrum".into(), self.spectrum.text.clone());
        map.insert("steps".into(), self.steps.to_string());
        map.insert("n".into(), self.n.to_string());
        if let Some(t_max) = self.t_max {
            map.insert("t_max".into(), t_max.to_string());
        }
        map.insert(
            "probe".into(),
            match self.probe {
                SampleProbe::None => "none".into(),
                SampleProbe::Linear => "linear".into(),
                SampleProbe::Mlp => "mlp".into(),
            },
        );
        map.insert("probe_target".into(), self.probe_target.to_string());
        map.insert("probe_steps".into(), self.probe_steps.to_string());
        map.insert(
            "export_endpoints".into(),
            self.export_endpoints.to_string(),
        );
        self.common.echo(&mut map);
        map
    }
}

fn join_f64(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Renders a resolved configuration back to the on-disk format.
pub fn render_config(map: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (key, value) in map {
        out.push_str(key);
        out.push_str(" = ");
        out.push_str(value);
        out.push('\n');
    }
    out
}
