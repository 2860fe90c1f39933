//! Power curves and net production traces.
//!
//! An agent's net production is the sum of its wind turbine and PV outputs
//! minus the sum of its loads (heating plus appliances). All power values are
//! in watts.

use std::collections::HashMap;
use std::f64::consts::PI;

use chrono::{DateTime, Datelike, Utc};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derived_rng;
use crate::weather::{solar_hour, WeatherDataset, ZoneSeries, MAX_OKTA};

pub const SOLAR_CONSTANT: f64 = 1367.0;
pub const CLEAR_SKY_TRANSMITTANCE: f64 = 0.75;
/// Floor on sin(elevation) in the air-mass exponent, avoids the horizon singularity.
pub const MIN_SIN_ELEVATION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindTurbineSpec {
    /// m/s
    pub cut_in: f64,
    /// m/s
    pub rated_speed: f64,
    /// m/s
    pub cut_out: f64,
    /// W
    pub rated_power: f64,
}

impl WindTurbineSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.cut_in && self.cut_in < self.rated_speed && self.rated_speed < self.cut_out) {
            return Err(Error::Config(format!(
                "turbine speeds must satisfy 0 < cut_in < rated_speed < cut_out, got {} / {} / {}",
                self.cut_in, self.rated_speed, self.cut_out
            )));
        }
        if !(self.rated_power > 0.0) {
            return Err(Error::Config("turbine rated_power must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RampShape {
    #[default]
    Cubic,
    Linear,
}

pub fn wind_power(spec: &WindTurbineSpec, wind_speed: f64) -> f64 {
    wind_power_with(spec, wind_speed, RampShape::Cubic)
}

pub fn wind_power_with(spec: &WindTurbineSpec, wind_speed: f64, ramp: RampShape) -> f64 {
    let v = wind_speed;
    if v < spec.cut_in || v >= spec.cut_out {
        0.0
    } else if v >= spec.rated_speed {
        spec.rated_power
    } else {
        let fraction = match ramp {
            RampShape::Cubic => (v.powi(3) - spec.cut_in.powi(3)) / (spec.rated_speed.powi(3) - spec.cut_in.powi(3)),
            RampShape::Linear => (v - spec.cut_in) / (spec.rated_speed - spec.cut_in),
        };
        spec.rated_power * fraction
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PVArraySpec {
    /// m²
    pub surface: f64,
    pub efficiency: f64,
}

impl PVArraySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.surface > 0.0) {
            return Err(Error::Config("PV surface must be positive".into()));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::Config("PV efficiency must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

pub fn pv_power(spec: &PVArraySpec, radiance: f64) -> f64 {
    spec.surface * radiance * spec.efficiency
}

/// Sine of the solar elevation angle from declination/hour-angle geometry.
pub fn sin_solar_elevation(latitude: f64, longitude: f64, t: &DateTime<Utc>) -> f64 {
    let day_of_year = t.ordinal() as f64;
    let declination = (23.45 * (2.0 * PI * (284.0 + day_of_year) / 365.0).sin()).to_radians();
    let hour_angle = (15.0 * (solar_hour(t, longitude) - 12.0)).to_radians();
    let lat = latitude.to_radians();
    lat.sin() * declination.sin() + lat.cos() * declination.cos() * hour_angle.cos()
}

/// Clear-sky radiance in W/m² on a horizontal surface; zero at night.
pub fn clear_sky_radiance(latitude: f64, longitude: f64, t: &DateTime<Utc>) -> f64 {
    let s = sin_solar_elevation(latitude, longitude, t);
    if s <= 0.0 {
        return 0.0;
    }
    let atmosphere = CLEAR_SKY_TRANSMITTANCE.powf(1.0 / s.max(MIN_SIN_ELEVATION));
    SOLAR_CONSTANT * s * atmosphere
}

/// Cloud degradation factor η = 1 − 0.75·(N/8)^3.4.
pub fn cloud_factor(nebulosity: u8) -> f64 {
    1.0 - 0.75 * (nebulosity as f64 / MAX_OKTA as f64).powf(3.4)
}

pub fn degrade_radiance(clear_sky: f64, nebulosity: u8) -> f64 {
    clear_sky * cloud_factor(nebulosity)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec {
    /// Thermal exchange surface, m².
    pub exchange_surface: f64,
    /// Thermal resistance, K·m²/W.
    pub thermal_resistance: f64,
    /// Desired inside temperature, °C.
    pub target_temp: f64,
    /// Sum of appliance powers, W.
    pub max_power: f64,
    /// Average fraction of `max_power` drawn in each hour of the day.
    pub hourly_profile: Vec<f64>,
    /// Standard deviation of the additive noise on the hourly fraction.
    pub noise_sigma: f64,
}

impl LoadSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.exchange_surface > 0.0) {
            return Err(Error::Config("load exchange_surface must be positive".into()));
        }
        if !(self.thermal_resistance > 0.0) {
            return Err(Error::Config("load thermal_resistance must be positive".into()));
        }
        if !(self.max_power >= 0.0) {
            return Err(Error::Config("load max_power must be non-negative".into()));
        }
        if self.hourly_profile.len() != 24 {
            return Err(Error::Config(format!(
                "hourly_profile must have 24 entries, found {}",
                self.hourly_profile.len()
            )));
        }
        if self.hourly_profile.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config("hourly_profile fractions must lie in [0, 1]".into()));
        }
        if !(self.noise_sigma >= 0.0) || !self.target_temp.is_finite() {
            return Err(Error::Config(
                "load noise_sigma must be >= 0 and target_temp finite".into(),
            ));
        }
        Ok(())
    }
}

/// Resistive heating demand, clamped at zero when it is warmer outside.
pub fn heating_load(spec: &LoadSpec, outside_temp: f64) -> f64 {
    (spec.exchange_surface / spec.thermal_resistance * (spec.target_temp - outside_temp)).max(0.0)
}

pub fn electronic_load(spec: &LoadSpec, hour_of_day: usize, noise_draw: f64) -> f64 {
    (spec.max_power * (spec.hourly_profile[hour_of_day] + noise_draw)).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProsumerConfig {
    pub agent_id: String,
    pub zone_id: String,
    #[serde(default)]
    pub turbines: Vec<WindTurbineSpec>,
    #[serde(default)]
    pub pv_arrays: Vec<PVArraySpec>,
    #[serde(default)]
    pub loads: Vec<LoadSpec>,
}

impl ProsumerConfig {
    pub fn validate(&self) -> Result<()> {
        self.turbines.iter().try_for_each(WindTurbineSpec::validate)?;
        self.pv_arrays.iter().try_for_each(PVArraySpec::validate)?;
        self.loads.iter().try_for_each(LoadSpec::validate)?;
        Ok(())
    }
}

/// Net production of one agent on the dataset time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductionTrace {
    pub agent_id: String,
    /// Net power P(t) = production − consumption, W.
    pub values: Vec<f64>,
    /// Consumption component alone, when known. Needed for production-only
    /// failure semantics.
    pub consumption: Option<Vec<f64>>,
}

impl ProductionTrace {
    pub fn new(agent_id: impl Into<String>, values: Vec<f64>) -> Self {
        ProductionTrace {
            agent_id: agent_id.into(),
            values,
            consumption: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    #[serde(default)]
    pub ramp: RampShape,
}

/// Per-zone inputs shared by all agents of the zone.
struct ZoneDrivers {
    wind: Vec<f64>,
    temperature: Vec<f64>,
    radiance: Vec<f64>,
    hour: Vec<usize>,
}

impl ZoneDrivers {
    fn new(zone: &ZoneSeries) -> Self {
        let mut drivers = ZoneDrivers {
            wind: Vec::with_capacity(zone.samples.len()),
            temperature: Vec::with_capacity(zone.samples.len()),
            radiance: Vec::with_capacity(zone.samples.len()),
            hour: Vec::with_capacity(zone.samples.len()),
        };
        for s in &zone.samples {
            drivers.wind.push(s.wind_speed);
            drivers.temperature.push(s.temperature);
            let clear = clear_sky_radiance(zone.latitude, zone.longitude, &s.timestamp);
            drivers.radiance.push(degrade_radiance(clear, s.nebulosity));
            drivers
                .hour
                .push((solar_hour(&s.timestamp, zone.longitude).floor() as usize).min(23));
        }
        drivers
    }
}

pub fn simulate_traces(
    dataset: &WeatherDataset,
    configs: &[ProsumerConfig],
    seed: u64,
) -> Result<Vec<ProductionTrace>> {
    simulate_traces_with(dataset, configs, seed, SimOptions::default())
}

/// Simulates every agent's net production. Agents run in parallel; each
/// load draws its noise from a stream keyed by (seed, agent id, load index).
pub fn simulate_traces_with(
    dataset: &WeatherDataset,
    configs: &[ProsumerConfig],
    seed: u64,
    options: SimOptions,
) -> Result<Vec<ProductionTrace>> {
    if dataset.is_empty() {
        return Err(Error::EmptyRange("weather dataset has no samples".into()));
    }
    for config in configs {
        config.validate()?;
        if dataset.zone(&config.zone_id).is_none() {
            return Err(Error::Config(format!(
                "agent {} references unknown zone {}",
                config.agent_id, config.zone_id
            )));
        }
    }
    let drivers: HashMap<&str, ZoneDrivers> = dataset
        .zones()
        .par_iter()
        .map(|z| (z.zone_id.as_str(), ZoneDrivers::new(z)))
        .collect();

    let traces = configs
        .par_iter()
        .map(|config| agent_trace(config, &drivers[config.zone_id.as_str()], seed, options))
        .collect();
    Ok(traces)
}

fn agent_trace(config: &ProsumerConfig, zone: &ZoneDrivers, seed: u64, options: SimOptions) -> ProductionTrace {
    let n = zone.wind.len();
    let mut production = vec![0.0; n];
    for turbine in &config.turbines {
        for (p, &v) in production.iter_mut().zip(&zone.wind) {
            *p += wind_power_with(turbine, v, options.ramp);
        }
    }
    for pv in &config.pv_arrays {
        for (p, &psi) in production.iter_mut().zip(&zone.radiance) {
            *p += pv_power(pv, psi);
        }
    }
    let mut consumption = vec![0.0; n];
    for (index, load) in config.loads.iter().enumerate() {
        let mut rng = derived_rng(
            seed,
            &["load-noise".into(), config.agent_id.as_str().into(), index.into()],
        );
        for (t, c) in consumption.iter_mut().enumerate().take(n) {
            let z: f64 = rng.sample(StandardNormal);
            *c += heating_load(load, zone.temperature[t]) + electronic_load(load, zone.hour[t], load.noise_sigma * z);
        }
    }
    let values = production.iter().zip(&consumption).map(|(p, c)| p - c).collect();
    ProductionTrace {
        agent_id: config.agent_id.clone(),
        values,
        consumption: Some(consumption),
    }
}

// ---------------------------------------------------------------------------
// Random agent configurations
// ---------------------------------------------------------------------------

/// Sampling ranges for random agent configurations. Counts are inclusive
/// integer ranges, magnitudes are uniform over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentRanges {
    pub turbines: (usize, usize),
    pub pv_arrays: (usize, usize),
    pub loads: (usize, usize),
    pub turbine_rated_power: (f64, f64),
    pub turbine_cut_in: (f64, f64),
    pub turbine_rated_speed: (f64, f64),
    pub turbine_cut_out: (f64, f64),
    pub pv_surface: (f64, f64),
    pub pv_efficiency: (f64, f64),
    pub exchange_surface: (f64, f64),
    pub thermal_resistance: (f64, f64),
    pub target_temp: (f64, f64),
    pub max_power: (f64, f64),
    pub noise_sigma: (f64, f64),
    /// Per-hour perturbation applied to the base daily profile.
    pub profile_jitter: f64,
}

impl Default for AgentRanges {
    fn default() -> Self {
        AgentRanges {
            turbines: (0, 2),
            pv_arrays: (0, 4),
            loads: (1, 3),
            turbine_rated_power: (5_000.0, 15_000.0),
            turbine_cut_in: (2.5, 3.5),
            turbine_rated_speed: (11.0, 13.0),
            turbine_cut_out: (24.0, 26.0),
            pv_surface: (10.0, 40.0),
            pv_efficiency: (0.15, 0.22),
            exchange_surface: (30.0, 100.0),
            thermal_resistance: (2.0, 5.0),
            target_temp: (18.0, 21.0),
            max_power: (300.0, 1_000.0),
            noise_sigma: (0.02, 0.1),
            profile_jitter: 0.05,
        }
    }
}

const RESIDENTIAL_PROFILE: [f64; 24] = [
    0.20, 0.15, 0.15, 0.15, 0.15, 0.20, 0.35, 0.50, 0.45, 0.30, 0.25, 0.25, 0.30, 0.25, 0.25, 0.25, 0.30, 0.45, 0.60,
    0.70, 0.65, 0.50, 0.35, 0.25,
];

const BUSINESS_PROFILE: [f64; 24] = [
    0.10, 0.10, 0.10, 0.10, 0.10, 0.10, 0.20, 0.40, 0.70, 0.80, 0.80, 0.75, 0.70, 0.80, 0.80, 0.75, 0.60, 0.40, 0.20,
    0.15, 0.10, 0.10, 0.10, 0.10,
];

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Draws `n_agents` random configurations spread uniformly over `zone_ids`.
/// Agent ids are `a000`, `a001`, ... so lexicographic order is index order.
pub fn random_configs(
    n_agents: usize,
    zone_ids: &[String],
    ranges: &AgentRanges,
    seed: u64,
) -> Result<Vec<ProsumerConfig>> {
    if zone_ids.is_empty() {
        return Err(Error::Config("random agents need at least one zone".into()));
    }
    let width = n_agents.saturating_sub(1).to_string().len().max(3);
    let configs = (0..n_agents)
        .map(|i| {
            let agent_id = format!("a{i:0width$}");
            let mut rng = derived_rng(seed, &["agent-config".into(), agent_id.as_str().into()]);
            let zone_id = zone_ids.choose(&mut rng).cloned().unwrap_or_default();
            let n_turbines = rng.random_range(ranges.turbines.0..=ranges.turbines.1);
            let n_pv = rng.random_range(ranges.pv_arrays.0..=ranges.pv_arrays.1);
            let n_loads = rng.random_range(ranges.loads.0..=ranges.loads.1);
            let turbines = (0..n_turbines)
                .map(|_| WindTurbineSpec {
                    cut_in: uniform(&mut rng, ranges.turbine_cut_in),
                    rated_speed: uniform(&mut rng, ranges.turbine_rated_speed),
                    cut_out: uniform(&mut rng, ranges.turbine_cut_out),
                    rated_power: uniform(&mut rng, ranges.turbine_rated_power),
                })
                .collect();
            let pv_arrays = (0..n_pv)
                .map(|_| PVArraySpec {
                    surface: uniform(&mut rng, ranges.pv_surface),
                    efficiency: uniform(&mut rng, ranges.pv_efficiency),
                })
                .collect();
            let loads = (0..n_loads)
                .map(|_| {
                    let base = if rng.random_bool(0.7) {
                        &RESIDENTIAL_PROFILE
                    } else {
                        &BUSINESS_PROFILE
                    };
                    let hourly_profile = base
                        .iter()
                        .map(|f| {
                            (f + uniform(&mut rng, (-ranges.profile_jitter, ranges.profile_jitter))).clamp(0.0, 1.0)
                        })
                        .collect();
                    LoadSpec {
                        exchange_surface: uniform(&mut rng, ranges.exchange_surface),
                        thermal_resistance: uniform(&mut rng, ranges.thermal_resistance),
                        target_temp: uniform(&mut rng, ranges.target_temp),
                        max_power: uniform(&mut rng, ranges.max_power),
                        hourly_profile,
                        noise_sigma: uniform(&mut rng, ranges.noise_sigma),
                    }
                })
                .collect();
            ProsumerConfig {
                agent_id,
                zone_id,
                turbines,
                pv_arrays,
                loads,
            }
        })
        .collect::<Vec<_>>();
    for config in &configs {
        config.validate()?;
    }
    Ok(configs)
}
