//! Run configuration: one JSON document, one master seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, TimeZone, Utc};
use coalition_core::formation::{FormationParams, Provenance};
use coalition_core::market::{GridPolicy, QuantileMode};
use coalition_core::powermodel::{AgentRanges, RampShape};
use coalition_core::resilience::FailureMode;
use coalition_core::weather::{GapFill, SynthParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Not echoed into artifacts, so that runs into different directories
    /// stay byte-identical.
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    pub weather: WeatherConfig,
    pub agents: AgentsConfig,
    pub policy: PolicyConfig,
    pub formation: FormationConfig,
    pub resilience: ResilienceConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            output_dir: PathBuf::from("out"),
            weather: WeatherConfig::default(),
            agents: AgentsConfig::default(),
            policy: PolicyConfig::default(),
            formation: FormationConfig::default(),
            resilience: ResilienceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum WeatherConfig {
    Synthetic {
        #[serde(default = "default_zones")]
        zones: usize,
        #[serde(default = "default_lat_range")]
        lat_range: (f64, f64),
        #[serde(default = "default_lon_range")]
        lon_range: (f64, f64),
        #[serde(default = "default_start")]
        start: DateTime<Utc>,
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default = "default_period_hours")]
        period_hours: i64,
        #[serde(default)]
        params: SynthParams,
    },
    Csv {
        path: PathBuf,
        /// Zone id → (latitude, longitude) in degrees.
        locations: BTreeMap<String, (f64, f64)>,
        #[serde(default = "default_period_hours")]
        period_hours: i64,
        #[serde(default)]
        fill: GapFill,
    },
}

fn default_zones() -> usize {
    20
}
fn default_lat_range() -> (f64, f64) {
    (43.0, 50.0)
}
fn default_lon_range() -> (f64, f64) {
    (-2.0, 7.0)
}
fn default_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2015, 1, 1, 0, 0, 0).unwrap()
}
/// Seven years at three-hour resolution.
fn default_steps() -> usize {
    20_440
}
fn default_period_hours() -> i64 {
    3
}

impl Default for WeatherConfig {
    fn default() -> Self {
        WeatherConfig::Synthetic {
            zones: default_zones(),
            lat_range: default_lat_range(),
            lon_range: default_lon_range(),
            start: default_start(),
            steps: default_steps(),
            period_hours: default_period_hours(),
            params: SynthParams::default(),
        }
    }
}

impl WeatherConfig {
    pub fn period_hours(&self) -> i64 {
        match self {
            WeatherConfig::Synthetic { period_hours, .. } | WeatherConfig::Csv { period_hours, .. } => *period_hours,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentsConfig {
    pub count: usize,
    /// Seed of the random configurations; derived from the master seed
    /// when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub ranges: AgentRanges,
    /// Explicit agent configurations (JSON array) replacing the random
    /// population; `count` is then ignored.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub configs: Option<PathBuf>,
    pub ramp: RampShape,
}

impl Default for AgentsConfig {
    fn default() -> Self {
        AgentsConfig {
            count: 100,
            seed: None,
            ranges: AgentRanges::default(),
            configs: None,
            ramp: RampShape::default(),
        }
    }
}

/// Utility size exponent: a number, or calibrated from the population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSetting {
    Value(f64),
    Mode(AlphaMode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaMode {
    /// The closed-form `alpha_star` at N̄ = ⌊N / n_coal⌋, used as is.
    Auto,
    /// `1 + alpha_star`, the exact stationarity exponent of the mean field.
    AutoExponent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub p_min: f64,
    pub phi: f64,
    pub p_max: f64,
    pub lambda_rate: f64,
    pub alpha: AlphaSetting,
    pub quantile: QuantileMode,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            p_min: 1_000.0,
            phi: 0.3,
            p_max: 100_000.0,
            lambda_rate: 1.0,
            alpha: AlphaSetting::Mode(AlphaMode::Auto),
            quantile: QuantileMode::Empirical,
        }
    }
}

impl PolicyConfig {
    /// The policy with a resolved exponent.
    pub fn with_alpha(&self, alpha: f64) -> GridPolicy {
        GridPolicy {
            p_min: self.p_min,
            phi: self.phi,
            p_max: self.p_max,
            alpha,
            lambda_rate: self.lambda_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormationConfig {
    pub n_coal: usize,
    pub k: usize,
    pub loop_max: usize,
    pub beta: f64,
    pub algorithms: Vec<Provenance>,
}

impl Default for FormationConfig {
    fn default() -> Self {
        FormationConfig {
            n_coal: 5,
            k: 3,
            loop_max: 1000,
            beta: 0.01,
            algorithms: Provenance::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResilienceConfig {
    pub psi: Vec<f64>,
    pub replicates: usize,
    pub failure_mode: FailureMode,
    /// Minimum-contract levels to sweep; defaults to the policy's P_min and
    /// four times it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_min_levels: Option<Vec<f64>>,
}

impl Default for ResilienceConfig {
    fn default() -> Self {
        ResilienceConfig {
            psi: (0..10).map(|i| i as f64 / 10.0).collect(),
            replicates: 100,
            failure_mode: FailureMode::Disconnect,
            p_min_levels: None,
        }
    }
}

/// Re-labels a parameter-domain error from the core library.
fn config_error(e: coalition_core::Error) -> CliError {
    match e {
        coalition_core::Error::Config(m) | coalition_core::Error::Validation(m) => CliError::Config(m),
        other => CliError::Config(other.to_string()),
    }
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_str(&text).map_err(|source| CliError::ConfigParse {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let WeatherConfig::Csv { path: p, .. } = &mut config.weather {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(p) = &mut config.agents.configs {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        match &self.weather {
            WeatherConfig::Synthetic {
                zones,
                lat_range,
                lon_range,
                steps,
                period_hours,
                params,
                ..
            } => {
                if *zones == 0 {
                    return bad("weather.zones must be >= 1".into());
                }
                if *steps == 0 {
                    return bad("weather.steps must be >= 1".into());
                }
                if *period_hours <= 0 {
                    return bad("weather.period_hours must be positive".into());
                }
                if !(lat_range.0 <= lat_range.1 && (-90.0..=90.0).contains(&lat_range.0) && lat_range.1 <= 90.0) {
                    return bad("weather.lat_range must be an ordered latitude interval".into());
                }
                if !(lon_range.0 <= lon_range.1) {
                    return bad("weather.lon_range must be ordered".into());
                }
                params.validate().map_err(config_error)?;
            }
            WeatherConfig::Csv {
                path,
                locations,
                period_hours,
                ..
            } => {
                if !path.is_file() {
                    return bad(format!("weather file {} does not exist", path.display()));
                }
                if locations.is_empty() {
                    return bad("weather.locations must give coordinates for every zone".into());
                }
                if *period_hours <= 0 {
                    return bad("weather.period_hours must be positive".into());
                }
            }
        }
        match &self.agents.configs {
            Some(p) if !p.is_file() => return bad(format!("agent configuration file {} does not exist", p.display())),
            Some(_) => {}
            None if self.agents.count == 0 => return bad("agents.count must be >= 1".into()),
            None => {}
        }
        let p = &self.policy;
        let alpha = match p.alpha {
            AlphaSetting::Value(a) => a,
            AlphaSetting::Mode(_) => 0.0,
        };
        p.with_alpha(alpha).validate().map_err(config_error)?;
        self.formation_params(0).validate().map_err(config_error)?;
        if self.formation.algorithms.is_empty() {
            return bad("formation.algorithms must not be empty".into());
        }
        let r = &self.resilience;
        if r.replicates == 0 {
            return bad("resilience.replicates must be >= 1".into());
        }
        if r.psi.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return bad("resilience.psi values must lie in [0, 1]".into());
        }
        if self.p_min_levels().iter().any(|x| !(*x >= 0.0)) {
            return bad("resilience.p_min_levels must be >= 0".into());
        }
        Ok(())
    }

    pub fn formation_params(&self, seed: u64) -> FormationParams {
        FormationParams {
            n_coal: self.formation.n_coal,
            k: self.formation.k,
            loop_max: self.formation.loop_max,
            beta: self.formation.beta,
            seed,
            mode: self.policy.quantile,
        }
    }

    pub fn p_min_levels(&self) -> Vec<f64> {
        self.resilience
            .p_min_levels
            .clone()
            .unwrap_or_else(|| vec![self.policy.p_min, 4.0 * self.policy.p_min])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn alpha_accepts_numbers_and_modes() {
        let p: PolicyConfig = serde_json::from_str(r#"{"alpha": 0.5}"#).unwrap();
        assert_eq!(p.alpha, AlphaSetting::Value(0.5));
        let p: PolicyConfig = serde_json::from_str(r#"{"alpha": "auto-exponent"}"#).unwrap();
        assert_eq!(p.alpha, AlphaSetting::Mode(AlphaMode::AutoExponent));
        assert!(serde_json::from_str::<PolicyConfig>(r#"{"alpha": "sometimes"}"#).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sead": 3}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"formation": {"kk": 3}}"#).is_err());
    }

    #[test]
    fn invalid_domains_are_config_errors() {
        let mut c = RunConfig::default();
        c.policy.phi = 1.5;
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        let mut c = RunConfig::default();
        c.formation.k = 1;
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        let mut c = RunConfig::default();
        c.resilience.psi = vec![0.0, 1.2];
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn missing_weather_file_is_a_config_error() {
        let c: RunConfig = serde_json::from_str(
            r#"{"weather": {"source": "csv", "path": "/nonexistent.csv", "locations": {"z": [48, 2]}}}"#,
        )
        .unwrap();
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn echo_omits_output_dir() {
        let v = serde_json::to_value(RunConfig::default()).unwrap();
        assert!(v.get("output_dir").is_none());
        assert_eq!(v["weather"]["source"], "synthetic");
    }

    #[test]
    fn default_levels_are_low_and_four_times() {
        assert_eq!(RunConfig::default().p_min_levels(), vec![1_000.0, 4_000.0]);
    }
}
