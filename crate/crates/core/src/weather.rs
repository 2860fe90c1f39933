//! Zone weather series: CSV ingestion and seeded synthesis.
//!
//! A dataset is a set of zones sharing one uniform time axis. Each zone
//! carries wind speed, nebulosity (okta) and temperature samples.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, Datelike, TimeDelta, Timelike, Utc};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed::{derived_rng, SeedPart};

pub const CSV_HEADER: [&str; 5] = [
    "zone_id",
    "timestamp",
    "wind_speed_ms",
    "nebulosity_okta",
    "temperature_c",
];

pub const MAX_OKTA: u8 = 8;

/// Three hours, the sampling period of the reference station data.
pub fn default_period() -> TimeDelta {
    TimeDelta::hours(3)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSample {
    pub timestamp: DateTime<Utc>,
    /// m/s
    pub wind_speed: f64,
    pub nebulosity: u8,
    /// °C
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoneSeries {
    pub zone_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub period: TimeDelta,
    pub samples: Vec<WeatherSample>,
}

impl ZoneSeries {
    pub fn validate(&self) -> Result<()> {
        if self.period <= TimeDelta::zero() {
            return Err(Error::Validation(format!(
                "zone {}: period must be positive",
                self.zone_id
            )));
        }
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(Error::Validation(format!(
                "zone {}: latitude {} outside [-90, 90]",
                self.zone_id, self.latitude
            )));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if !(s.wind_speed.is_finite() && s.wind_speed >= 0.0) {
                return Err(Error::Validation(format!(
                    "zone {} sample {i}: wind speed {} must be finite and >= 0",
                    self.zone_id, s.wind_speed
                )));
            }
            if s.nebulosity > MAX_OKTA {
                return Err(Error::Validation(format!(
                    "zone {} sample {i}: nebulosity {} outside 0..=8",
                    self.zone_id, s.nebulosity
                )));
            }
            if !s.temperature.is_finite() {
                return Err(Error::Validation(format!(
                    "zone {} sample {i}: temperature is not finite",
                    self.zone_id
                )));
            }
        }
        for pair in self.samples.windows(2) {
            if pair[1].timestamp - pair[0].timestamp != self.period {
                return Err(Error::Alignment(format!(
                    "zone {}: samples at {} and {} are not one period apart",
                    self.zone_id, pair[0].timestamp, pair[1].timestamp
                )));
            }
        }
        Ok(())
    }
}

/// Zones sharing an identical time axis. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherDataset {
    zones: Vec<ZoneSeries>,
}

impl WeatherDataset {
    pub fn new(zones: Vec<ZoneSeries>) -> Result<Self> {
        let mut seen = HashSet::new();
        for zone in &zones {
            if !seen.insert(zone.zone_id.as_str()) {
                return Err(Error::Validation(format!("duplicate zone id {}", zone.zone_id)));
            }
            zone.validate()?;
        }
        if let Some(first) = zones.first() {
            let axis = |z: &ZoneSeries| (z.samples.first().map(|s| s.timestamp), z.period, z.samples.len());
            let reference = axis(first);
            for zone in &zones[1..] {
                if axis(zone) != reference {
                    return Err(Error::Alignment(format!(
                        "zone {} does not share the time axis of zone {}",
                        zone.zone_id, first.zone_id
                    )));
                }
            }
        }
        Ok(WeatherDataset { zones })
    }

    pub fn zones(&self) -> &[ZoneSeries] {
        &self.zones
    }

    pub fn zone(&self, zone_id: &str) -> Option<&ZoneSeries> {
        self.zones.iter().find(|z| z.zone_id == zone_id)
    }

    /// Number of samples per zone.
    pub fn len(&self) -> usize {
        self.zones.first().map_or(0, |z| z.samples.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn period(&self) -> Option<TimeDelta> {
        self.zones.first().map(|z| z.period)
    }

    pub fn timestamps(&self) -> Vec<DateTime<Utc>> {
        self.zones
            .first()
            .map(|z| z.samples.iter().map(|s| s.timestamp).collect())
            .unwrap_or_default()
    }
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// What to do with missing samples inside a zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapFill {
    #[default]
    Reject,
    /// Repeat the last sample across gaps of at most two missing samples.
    Hold,
}

pub const MAX_HELD_SAMPLES: i32 = 2;

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub period: TimeDelta,
    pub fill: GapFill,
    /// Zone coordinates (latitude, longitude) in degrees. The CSV schema does
    /// not carry them, and every ingested zone must have an entry.
    pub locations: HashMap<String, (f64, f64)>,
}

impl IngestOptions {
    pub fn new(period: TimeDelta, locations: HashMap<String, (f64, f64)>) -> Self {
        IngestOptions {
            period,
            fill: GapFill::Reject,
            locations,
        }
    }

    pub fn with_fill(mut self, fill: GapFill) -> Self {
        self.fill = fill;
        self
    }
}

pub fn ingest_weather_csv(path: impl AsRef<Path>, options: &IngestOptions) -> Result<WeatherDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_weather_csv(file, path, options)
}

pub fn read_weather_csv<R: Read>(reader: R, source: &Path, options: &IngestOptions) -> Result<WeatherDataset> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        message,
    };

    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let header: Vec<&str> = header.iter().map(str::trim).collect();
    if header != CSV_HEADER {
        return Err(parse_err(1, format!("expected header `{}`", CSV_HEADER.join(","))));
    }

    let mut by_zone: BTreeMap<String, Vec<WeatherSample>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != CSV_HEADER.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", CSV_HEADER.len(), record.len()),
            ));
        }
        let field = |i: usize| record[i].trim();
        let zone_id = field(0);
        if zone_id.is_empty() {
            return Err(parse_err(line, "empty zone_id".into()));
        }
        let timestamp = DateTime::parse_from_rfc3339(field(1))
            .map_err(|e| parse_err(line, format!("bad timestamp `{}`: {e}", field(1))))?
            .with_timezone(&Utc);
        let number = |i: usize| -> Result<f64> {
            let v: f64 = field(i)
                .parse()
                .map_err(|_| parse_err(line, format!("bad {} `{}`", CSV_HEADER[i], field(i))))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(line, format!("non-finite {}", CSV_HEADER[i])))
            }
        };
        let wind_speed = number(2)?;
        let temperature = number(4)?;
        let okta: i64 = field(3)
            .parse()
            .map_err(|_| parse_err(line, format!("bad nebulosity_okta `{}`", field(3))))?;
        if !(0..=MAX_OKTA as i64).contains(&okta) {
            return Err(Error::Validation(format!(
                "{}: line {line}: nebulosity {okta} outside 0..=8",
                source.display()
            )));
        }
        if wind_speed < 0.0 {
            return Err(Error::Validation(format!(
                "{}: line {line}: negative wind speed {wind_speed}",
                source.display()
            )));
        }
        by_zone.entry(zone_id.to_string()).or_default().push(WeatherSample {
            timestamp,
            wind_speed,
            nebulosity: okta as u8,
            temperature,
        });
    }

    let mut zones = Vec::with_capacity(by_zone.len());
    for (zone_id, mut samples) in by_zone {
        samples.sort_by_key(|s| s.timestamp);
        let samples = regularize(&zone_id, samples, options.period, options.fill)?;
        let &(latitude, longitude) = options
            .locations
            .get(&zone_id)
            .ok_or_else(|| Error::Validation(format!("no coordinates configured for zone {zone_id}")))?;
        zones.push(ZoneSeries {
            zone_id,
            latitude,
            longitude,
            period: options.period,
            samples,
        });
    }
    WeatherDataset::new(zones)
}

fn regularize(
    zone_id: &str,
    samples: Vec<WeatherSample>,
    period: TimeDelta,
    fill: GapFill,
) -> Result<Vec<WeatherSample>> {
    if period <= TimeDelta::zero() {
        return Err(Error::Validation("period must be positive".into()));
    }
    let mut out: Vec<WeatherSample> = Vec::with_capacity(samples.len());
    for sample in samples {
        if let Some(prev) = out.last() {
            let gap = sample.timestamp - prev.timestamp;
            if gap.is_zero() {
                return Err(Error::Alignment(format!(
                    "zone {zone_id}: duplicate timestamp {}",
                    sample.timestamp
                )));
            }
            if gap != period {
                let steps = gap.num_milliseconds() / period.num_milliseconds();
                let exact = period * steps as i32 == gap;
                let missing = steps - 1;
                let fillable = fill == GapFill::Hold && exact && missing >= 1 && missing <= MAX_HELD_SAMPLES as i64;
                if !fillable {
                    return Err(Error::Alignment(format!(
                        "zone {zone_id}: non-uniform spacing between {} and {}",
                        prev.timestamp, sample.timestamp
                    )));
                }
                let held = prev.clone();
                for k in 1..=missing as i32 {
                    out.push(WeatherSample {
                        timestamp: held.timestamp + period * k,
                        ..held.clone()
                    });
                }
            }
        }
        out.push(sample);
    }
    Ok(out)
}

/// Writes a dataset using the ingestion schema.
pub fn write_weather_csv<W: std::io::Write>(dataset: &WeatherDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CSV_HEADER)?;
    for zone in dataset.zones() {
        for s in &zone.samples {
            wtr.write_record([
                zone.zone_id.clone(),
                format_timestamp(&s.timestamp),
                s.wind_speed.to_string(),
                s.nebulosity.to_string(),
                s.temperature.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ZoneSpec {
    pub zone_id: String,
    pub latitude: f64,
    pub longitude: f64,
}

impl ZoneSpec {
    pub fn new(zone_id: impl Into<String>, latitude: f64, longitude: f64) -> Self {
        ZoneSpec {
            zone_id: zone_id.into(),
            latitude,
            longitude,
        }
    }
}

/// Parameters of the synthetic weather generator.
///
/// Each variable is a deterministic seasonal shape plus a unit-variance
/// AR(1) residual scaled by `*_noise`. The residual mixes a regional part,
/// shared by nearby zones through a Gaussian kernel over a lattice of latent
/// factors, with a zone-local part. AR coefficients are per sample.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub temp_mean: f64,
    pub temp_annual_amplitude: f64,
    pub temp_diurnal_amplitude: f64,
    pub temp_noise: f64,
    pub temp_ar: f64,
    pub wind_baseline: f64,
    pub wind_seasonal_amplitude: f64,
    pub wind_noise: f64,
    pub wind_ar: f64,
    pub nebulosity_center: f64,
    pub nebulosity_scale: f64,
    pub nebulosity_ar: f64,
    /// Fraction of residual variance carried by the regional component.
    pub regional_share: f64,
    /// Kernel width (and lattice spacing) of the regional field, degrees.
    pub correlation_length_deg: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            temp_mean: 12.0,
            temp_annual_amplitude: 8.0,
            temp_diurnal_amplitude: 4.0,
            temp_noise: 2.0,
            temp_ar: 0.95,
            wind_baseline: 6.0,
            wind_seasonal_amplitude: 1.5,
            wind_noise: 3.0,
            wind_ar: 0.85,
            nebulosity_center: 4.5,
            nebulosity_scale: 2.8,
            nebulosity_ar: 0.8,
            regional_share: 0.95,
            correlation_length_deg: 0.7,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        for (name, ar) in [
            ("temp_ar", self.temp_ar),
            ("wind_ar", self.wind_ar),
            ("nebulosity_ar", self.nebulosity_ar),
        ] {
            if !(0.0..1.0).contains(&ar) {
                return Err(Error::Validation(format!("{name} must lie in [0, 1)")));
            }
        }
        if !(0.0..=1.0).contains(&self.regional_share) {
            return Err(Error::Validation("regional_share must lie in [0, 1]".into()));
        }
        if !(self.correlation_length_deg > 0.0) {
            return Err(Error::Validation("correlation_length_deg must be positive".into()));
        }
        if self.temp_noise < 0.0 || self.wind_noise < 0.0 || self.nebulosity_scale < 0.0 {
            return Err(Error::Validation("noise scales must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Variable {
    Temperature,
    Wind,
    Nebulosity,
}

impl Variable {
    const ALL: [Variable; 3] = [Variable::Temperature, Variable::Wind, Variable::Nebulosity];

    fn label(self) -> &'static str {
        match self {
            Variable::Temperature => "temperature",
            Variable::Wind => "wind",
            Variable::Nebulosity => "nebulosity",
        }
    }

    fn ar(self, p: &SynthParams) -> f64 {
        match self {
            Variable::Temperature => p.temp_ar,
            Variable::Wind => p.wind_ar,
            Variable::Nebulosity => p.nebulosity_ar,
        }
    }
}

/// Lattice nodes further than this many kernel widths are ignored.
const KERNEL_RADIUS: i64 = 3;

fn ar1_unit(rng: &mut ChaCha8Rng, n: usize, coefficient: f64) -> Vec<f64> {
    let innovation = (1.0 - coefficient * coefficient).sqrt();
    let mut out = Vec::with_capacity(n);
    let mut x: f64 = rng.sample(StandardNormal);
    for _ in 0..n {
        out.push(x);
        let e: f64 = rng.sample(StandardNormal);
        x = coefficient * x + innovation * e;
    }
    out
}

/// Synthesizes weather with [`SynthParams::default`].
pub fn synthesize_weather(
    zone_specs: &[ZoneSpec],
    start: DateTime<Utc>,
    n_steps: usize,
    period: TimeDelta,
    seed: u64,
) -> Result<WeatherDataset> {
    synthesize_weather_with(zone_specs, start, n_steps, period, seed, &SynthParams::default())
}

pub fn synthesize_weather_with(
    zone_specs: &[ZoneSpec],
    start: DateTime<Utc>,
    n_steps: usize,
    period: TimeDelta,
    seed: u64,
    params: &SynthParams,
) -> Result<WeatherDataset> {
    if n_steps == 0 {
        return Err(Error::EmptyRange("n_steps must be at least 1".into()));
    }
    if period <= TimeDelta::zero() {
        return Err(Error::Validation("period must be positive".into()));
    }
    params.validate()?;
    let mut ids = HashSet::new();
    for spec in zone_specs {
        if !ids.insert(spec.zone_id.as_str()) {
            return Err(Error::Validation(format!("duplicate zone id {}", spec.zone_id)));
        }
    }

    let timestamps: Vec<DateTime<Utc>> = (0..n_steps).map(|k| start + period * k as i32).collect();
    let spacing = params.correlation_length_deg;
    let mut lattice: HashMap<(Variable, i64, i64), Vec<f64>> = HashMap::new();
    let mut zones = Vec::with_capacity(zone_specs.len());

    for spec in zone_specs {
        // Kernel weights over nearby lattice nodes, normalized to unit variance.
        let ci = (spec.latitude / spacing).round() as i64;
        let cj = (spec.longitude / spacing).round() as i64;
        let mut nodes = Vec::new();
        for i in ci - KERNEL_RADIUS..=ci + KERNEL_RADIUS {
            for j in cj - KERNEL_RADIUS..=cj + KERNEL_RADIUS {
                let d_lat = spec.latitude - i as f64 * spacing;
                let d_lon = spec.longitude - j as f64 * spacing;
                let d2 = (d_lat * d_lat + d_lon * d_lon) / (spacing * spacing);
                nodes.push((i, j, (-d2 / 2.0).exp()));
            }
        }
        let norm = nodes.iter().map(|n| n.2 * n.2).sum::<f64>().sqrt();

        let mut residual: HashMap<Variable, Vec<f64>> = HashMap::new();
        for var in Variable::ALL {
            let ar = var.ar(params);
            let mut shared = vec![0.0; n_steps];
            for &(i, j, w) in &nodes {
                let series = lattice.entry((var, i, j)).or_insert_with(|| {
                    let mut rng = derived_rng(
                        seed,
                        &[
                            "lattice".into(),
                            var.label().into(),
                            SeedPart::Signed(i),
                            SeedPart::Signed(j),
                        ],
                    );
                    ar1_unit(&mut rng, n_steps, ar)
                });
                let w = w / norm;
                for (acc, v) in shared.iter_mut().zip(series.iter()) {
                    *acc += w * v;
                }
            }
            let mut rng = derived_rng(
                seed,
                &["local".into(), spec.zone_id.as_str().into(), var.label().into()],
            );
            let local = ar1_unit(&mut rng, n_steps, ar);
            let a = params.regional_share.sqrt();
            let b = (1.0 - params.regional_share).sqrt();
            let mixed = shared.iter().zip(&local).map(|(s, l)| a * s + b * l).collect();
            residual.insert(var, mixed);
        }

        let samples = timestamps
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let season = seasonal_phase(t);
                let solar_hour = solar_hour(t, spec.longitude);
                let temperature = params.temp_mean - params.temp_annual_amplitude * season.cos()
                    + params.temp_diurnal_amplitude * (2.0 * PI * (solar_hour - 15.0) / 24.0).cos()
                    + params.temp_noise * residual[&Variable::Temperature][k];
                let wind_speed = (params.wind_baseline
                    + params.wind_seasonal_amplitude * season.cos()
                    + params.wind_noise * residual[&Variable::Wind][k])
                    .max(0.0);
                let okta = (params.nebulosity_center + params.nebulosity_scale * residual[&Variable::Nebulosity][k])
                    .round()
                    .clamp(0.0, MAX_OKTA as f64) as u8;
                WeatherSample {
                    timestamp: *t,
                    wind_speed,
                    nebulosity: okta,
                    temperature,
                }
            })
            .collect();

        zones.push(ZoneSeries {
            zone_id: spec.zone_id.clone(),
            latitude: spec.latitude,
            longitude: spec.longitude,
            period,
            samples,
        });
    }
    WeatherDataset::new(zones)
}

/// Annual phase in radians, zero in mid-January (coldest, windiest).
fn seasonal_phase(t: &DateTime<Utc>) -> f64 {
    let day = t.ordinal0() as f64 + t.num_seconds_from_midnight() as f64 / 86_400.0;
    2.0 * PI * (day - 15.0) / 365.25
}

/// Local solar hour from UTC and longitude (degrees east), in [0, 24).
pub fn solar_hour(t: &DateTime<Utc>, longitude: f64) -> f64 {
    let utc_hours = t.hour() as f64 + t.minute() as f64 / 60.0 + t.second() as f64 / 3600.0;
    (utc_hours + longitude / 15.0).rem_euclid(24.0)
}

/// Zone specs scattered uniformly in a latitude/longitude box.
pub fn random_zone_specs(n_zones: usize, lat_range: (f64, f64), lon_range: (f64, f64), seed: u64) -> Vec<ZoneSpec> {
    let mut rng = derived_rng(seed, &["zones".into()]);
    (0..n_zones)
        .map(|i| {
            let lat = rng.random_range(lat_range.0..=lat_range.1);
            let lon = rng.random_range(lon_range.0..=lon_range.1);
            ZoneSpec::new(format!("z{i:03}"), lat, lon)
        })
        .collect()
}
