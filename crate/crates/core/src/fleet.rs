//! Household energy series: ingestion, synthesis and daily peak/off-peak
//! ledgers.
//!
//! All energies are kWh per sample, prices are $/kWh. A day starts at hour 0
//! and the off-peak energy of a day is every non-peak sample of that calendar
//! day (the evening tail and the early morning of the same date).

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_INTERVAL_HOURS: u32 = 4;

/// Panel area as a fraction of floor area for synthesized houses.
pub const PANEL_AREA_FRACTION: f64 = 0.10;

/// One prosumer household.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseProfile {
    id: String,
    floor_area: f64,
    panel_area: f64,
    storage_capacity: f64,
    consumption: Vec<f64>,
    generation: Vec<f64>,
    interval_hours: u32,
}

impl HouseProfile {
    pub fn new(
        id: impl Into<String>,
        floor_area: f64,
        panel_area: f64,
        storage_capacity: f64,
        consumption: Vec<f64>,
        generation: Vec<f64>,
        interval_hours: u32,
    ) -> Result<Self> {
        let id = id.into();
        if interval_hours == 0 || 24 % interval_hours != 0 {
            return Err(Error::Config(format!(
                "interval_hours must divide 24, got {interval_hours}"
            )));
        }
        for (name, v) in [
            ("floor_area", floor_area),
            ("panel_area", panel_area),
            ("storage_capacity", storage_capacity),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Validation(format!("house {id}: {name} = {v}")));
            }
        }
        if consumption.len() != generation.len() {
            return Err(Error::Schema(format!(
                "house {id}: consumption has {} samples, generation {}",
                consumption.len(),
                generation.len()
            )));
        }
        let per_day = (24 / interval_hours) as usize;
        if !consumption.len().is_multiple_of(per_day) {
            return Err(Error::Schema(format!(
                "house {id}: {} samples of {interval_hours} h do not cover whole days",
                consumption.len()
            )));
        }
        for (t, (&c, &g)) in consumption.iter().zip(&generation).enumerate() {
            if !(c.is_finite() && c >= 0.0 && g.is_finite() && g >= 0.0) {
                return Err(Error::Validation(format!(
                    "house {id}: sample {t} has consumption {c}, generation {g}"
                )));
            }
        }
        Ok(Self {
            id,
            floor_area,
            panel_area,
            storage_capacity,
            consumption,
            generation,
            interval_hours,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn floor_area(&self) -> f64 {
        self.floor_area
    }

    /// Installed PV panel area, m². Metadata only: generation arrives as data.
    pub fn panel_area(&self) -> f64 {
        self.panel_area
    }

    pub fn storage_capacity(&self) -> f64 {
        self.storage_capacity
    }

    pub fn consumption(&self) -> &[f64] {
        &self.consumption
    }

    pub fn generation(&self) -> &[f64] {
        &self.generation
    }

    pub fn interval_hours(&self) -> u32 {
        self.interval_hours
    }

    pub fn samples_per_day(&self) -> usize {
        (24 / self.interval_hours) as usize
    }

    pub fn days(&self) -> usize {
        self.consumption.len() / self.samples_per_day()
    }
}

/// Time-of-use net-metering tariff.
///
/// Buying from the grid costs `peak_buy`/`offpeak_buy`, exporting earns
/// `peak_sell`/`offpeak_sell`. The peak window is `[peak_start_hour,
/// peak_end_hour)` of every day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTariff", into = "RawTariff")]
pub struct TariffSchedule {
    peak_buy: f64,
    offpeak_buy: f64,
    peak_sell: f64,
    offpeak_sell: f64,
    peak_start_hour: u32,
    peak_end_hour: u32,
}

#[derive(Serialize, Deserialize)]
struct RawTariff {
    lambda_h: f64,
    lambda_l: f64,
    mu_h: f64,
    mu_l: f64,
    peak_start_hour: u32,
    peak_end_hour: u32,
}

impl TryFrom<RawTariff> for TariffSchedule {
    type Error = Error;

    fn try_from(r: RawTariff) -> Result<Self> {
        TariffSchedule::new(
            r.lambda_h,
            r.lambda_l,
            r.mu_h,
            r.mu_l,
            r.peak_start_hour,
            r.peak_end_hour,
        )
    }
}

impl From<TariffSchedule> for RawTariff {
    fn from(t: TariffSchedule) -> Self {
        RawTariff {
            lambda_h: t.peak_buy,
            lambda_l: t.offpeak_buy,
            mu_h: t.peak_sell,
            mu_l: t.offpeak_sell,
            peak_start_hour: t.peak_start_hour,
            peak_end_hour: t.peak_end_hour,
        }
    }
}

impl TariffSchedule {
    /// Prices in $/kWh. Requires `peak_buy >= peak_sell`,
    /// `offpeak_buy >= offpeak_sell` and `peak_sell >= offpeak_buy`.
    pub fn new(
        peak_buy: f64,
        offpeak_buy: f64,
        peak_sell: f64,
        offpeak_sell: f64,
        peak_start_hour: u32,
        peak_end_hour: u32,
    ) -> Result<Self> {
        let prices = [peak_buy, offpeak_buy, peak_sell, offpeak_sell];
        if prices.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config(format!("prices must be finite and >= 0: {prices:?}")));
        }
        if peak_buy < peak_sell || offpeak_buy < offpeak_sell || peak_sell < offpeak_buy {
            return Err(Error::Config(format!(
                "tariff violates peak_buy >= peak_sell >= offpeak_buy, offpeak_buy >= offpeak_sell: {prices:?}"
            )));
        }
        if peak_start_hour >= peak_end_hour
            || peak_end_hour > 24
            || peak_end_hour - peak_start_hour >= 24
        {
            return Err(Error::Config(format!(
                "peak window [{peak_start_hour}, {peak_end_hour}) must be nonempty and shorter than 24 h"
            )));
        }
        Ok(Self {
            peak_buy,
            offpeak_buy,
            peak_sell,
            offpeak_sell,
            peak_start_hour,
            peak_end_hour,
        })
    }

    /// Same as [`TariffSchedule::new`] with prices quoted in ¢/kWh.
    pub fn from_cents(
        peak_buy: f64,
        offpeak_buy: f64,
        peak_sell: f64,
        offpeak_sell: f64,
        peak_start_hour: u32,
        peak_end_hour: u32,
    ) -> Result<Self> {
        Self::new(
            peak_buy / 100.0,
            offpeak_buy / 100.0,
            peak_sell / 100.0,
            offpeak_sell / 100.0,
            peak_start_hour,
            peak_end_hour,
        )
    }

    /// 54/22 ¢ buy, 30/13 ¢ sell, peak from 8 h to 20 h.
    pub fn reference() -> Self {
        Self::from_cents(54.0, 22.0, 30.0, 13.0, 8, 20).expect("reference tariff is valid")
    }

    pub fn peak_buy(&self) -> f64 {
        self.peak_buy
    }

    pub fn offpeak_buy(&self) -> f64 {
        self.offpeak_buy
    }

    pub fn peak_sell(&self) -> f64 {
        self.peak_sell
    }

    pub fn offpeak_sell(&self) -> f64 {
        self.offpeak_sell
    }

    pub fn peak_start_hour(&self) -> u32 {
        self.peak_start_hour
    }

    pub fn peak_end_hour(&self) -> u32 {
        self.peak_end_hour
    }

    pub fn is_peak_hour(&self, hour: u32) -> bool {
        (self.peak_start_hour..self.peak_end_hour).contains(&hour)
    }
}

impl Default for TariffSchedule {
    fn default() -> Self {
        Self::reference()
    }
}

/// One house-day split into peak and off-peak energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyEnergy {
    pub house_id: String,
    pub day: usize,
    pub peak_consumption: f64,
    pub offpeak_consumption: f64,
    pub peak_generation: f64,
    pub offpeak_generation: f64,
    /// Storage capacity, cycled once per day.
    pub storage: f64,
}

impl DailyEnergy {
    /// A house-day with all quantities given directly (kWh).
    pub fn new(
        house_id: impl Into<String>,
        day: usize,
        peak_consumption: f64,
        offpeak_consumption: f64,
        peak_generation: f64,
        offpeak_generation: f64,
        storage: f64,
    ) -> Self {
        Self {
            house_id: house_id.into(),
            day,
            peak_consumption,
            offpeak_consumption,
            peak_generation,
            offpeak_generation,
            storage,
        }
    }
}

/// Splits every day of `profile` into peak and off-peak totals.
///
/// Samples are attributed by their start hour. The peak window edges must
/// fall on sample boundaries.
pub fn aggregate_daily(profile: &HouseProfile, tariff: &TariffSchedule) -> Result<Vec<DailyEnergy>> {
    let step = profile.interval_hours();
    if !tariff.peak_start_hour().is_multiple_of(step) || !tariff.peak_end_hour().is_multiple_of(step) {
        return Err(Error::Alignment(format!(
            "peak window [{}, {}) is not aligned to {step} h samples",
            tariff.peak_start_hour(),
            tariff.peak_end_hour()
        )));
    }
    let per_day = profile.samples_per_day();
    let days = profile
        .consumption()
        .chunks(per_day)
        .zip(profile.generation().chunks(per_day))
        .enumerate()
        .map(|(day, (load, gen))| {
            let mut d = DailyEnergy::new(profile.id(), day, 0.0, 0.0, 0.0, 0.0, profile.storage_capacity());
            for (slot, (&c, &g)) in load.iter().zip(gen).enumerate() {
                if tariff.is_peak_hour(slot as u32 * step) {
                    d.peak_consumption += c;
                    d.peak_generation += g;
                } else {
                    d.offpeak_consumption += c;
                    d.offpeak_generation += g;
                }
            }
            d
        })
        .collect();
    Ok(days)
}

/// Daily ledgers of a whole fleet, keyed by house id.
#[derive(Debug, Clone)]
pub struct FleetLedger {
    days: usize,
    houses: BTreeMap<String, Vec<DailyEnergy>>,
}

impl FleetLedger {
    pub fn build(profiles: &[HouseProfile], tariff: &TariffSchedule) -> Result<Self> {
        let days = profiles.first().map_or(0, HouseProfile::days);
        let mut houses = BTreeMap::new();
        for p in profiles {
            if p.days() != days {
                return Err(Error::Schema(format!(
                    "house {} covers {} days, expected {days}",
                    p.id(),
                    p.days()
                )));
            }
            if houses.insert(p.id().to_string(), aggregate_daily(p, tariff)?).is_some() {
                return Err(Error::Schema(format!("duplicate house id {}", p.id())));
            }
        }
        Ok(Self { days, houses })
    }

    pub fn days(&self) -> usize {
        self.days
    }

    pub fn house_ids(&self) -> impl Iterator<Item = &str> {
        self.houses.keys().map(String::as_str)
    }

    pub fn contains(&self, house_id: &str) -> bool {
        self.houses.contains_key(house_id)
    }

    pub fn house(&self, house_id: &str) -> Option<&[DailyEnergy]> {
        self.houses.get(house_id).map(Vec::as_slice)
    }

    /// Entries of the given houses for one day, in the order requested.
    pub fn day_entries<S: AsRef<str>>(&self, house_ids: &[S], day: usize) -> Result<Vec<DailyEnergy>> {
        house_ids
            .iter()
            .map(|id| {
                let id = id.as_ref();
                self.houses
                    .get(id)
                    .and_then(|days| days.get(day))
                    .cloned()
                    .ok_or_else(|| Error::Input(format!("no ledger entry for house {id} on day {day}")))
            })
            .collect()
    }
}

pub const FLEET_CSV_HEADER: [&str; 7] = [
    "house_id",
    "floor_area_m2",
    "panel_area_m2",
    "storage_kwh",
    "t_index",
    "consumption_kwh",
    "generation_kwh",
];

#[derive(Debug, Serialize, Deserialize)]
struct FleetRow {
    house_id: String,
    floor_area_m2: f64,
    panel_area_m2: f64,
    storage_kwh: f64,
    t_index: usize,
    consumption_kwh: f64,
    generation_kwh: f64,
}

struct PendingHouse {
    floor_area: f64,
    panel_area: f64,
    storage: f64,
    samples: Vec<(usize, f64, f64)>,
}

/// Reads a fleet CSV (one row per house-sample).
pub fn ingest_fleet<R: Read>(source: R, interval_hours: u32) -> Result<Vec<HouseProfile>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let header = reader.headers()?.clone();
    if header.iter().ne(FLEET_CSV_HEADER.iter().copied()) {
        return Err(Error::Schema(format!(
            "unexpected header {:?}, expected {:?}",
            header.iter().collect::<Vec<_>>(),
            FLEET_CSV_HEADER
        )));
    }

    let mut order: Vec<String> = Vec::new();
    let mut pending: HashMap<String, PendingHouse> = HashMap::new();
    for record in reader.deserialize::<FleetRow>() {
        let row = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        if row.consumption_kwh < 0.0 || row.generation_kwh < 0.0 {
            return Err(Error::Validation(format!(
                "house {} sample {}: negative energy (consumption {}, generation {})",
                row.house_id, row.t_index, row.consumption_kwh, row.generation_kwh
            )));
        }
        match pending.get_mut(&row.house_id) {
            Some(h) => {
                if h.floor_area != row.floor_area_m2
                    || h.panel_area != row.panel_area_m2
                    || h.storage != row.storage_kwh
                {
                    return Err(Error::Schema(format!(
                        "house {}: static attributes differ between rows",
                        row.house_id
                    )));
                }
                h.samples.push((row.t_index, row.consumption_kwh, row.generation_kwh));
            }
            None => {
                order.push(row.house_id.clone());
                pending.insert(
                    row.house_id,
                    PendingHouse {
                        floor_area: row.floor_area_m2,
                        panel_area: row.panel_area_m2,
                        storage: row.storage_kwh,
                        samples: vec![(row.t_index, row.consumption_kwh, row.generation_kwh)],
                    },
                );
            }
        }
    }

    let mut profiles = Vec::with_capacity(order.len());
    let mut expected_len = None;
    for id in order {
        let mut h = pending.remove(&id).expect("every ordered id is pending");
        h.samples.sort_by_key(|s| s.0);
        if h.samples.iter().enumerate().any(|(i, s)| s.0 != i) {
            return Err(Error::Schema(format!(
                "house {id}: t_index values are not exactly 0..{}",
                h.samples.len()
            )));
        }
        match expected_len {
            None => expected_len = Some(h.samples.len()),
            Some(n) if n != h.samples.len() => {
                return Err(Error::Schema(format!(
                    "ragged series: house {id} has {} samples, expected {n}",
                    h.samples.len()
                )))
            }
            Some(_) => {}
        }
        let (consumption, generation) = h.samples.iter().map(|s| (s.1, s.2)).unzip();
        profiles.push(HouseProfile::new(
            id,
            h.floor_area,
            h.panel_area,
            h.storage,
            consumption,
            generation,
            interval_hours,
        )?);
    }
    Ok(profiles)
}

pub fn ingest_fleet_file(path: impl AsRef<Path>, interval_hours: u32) -> Result<Vec<HouseProfile>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    ingest_fleet(std::io::BufReader::new(file), interval_hours)
}

/// Canonical fleet CSV emitter; [`ingest_fleet`] reads it back bit-exactly.
pub fn write_fleet_csv<W: Write>(sink: W, fleet: &[HouseProfile]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(true)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    for house in fleet {
        for (t, (&c, &g)) in house.consumption().iter().zip(house.generation()).enumerate() {
            writer.serialize(FleetRow {
                house_id: house.id().to_string(),
                floor_area_m2: house.floor_area(),
                panel_area_m2: house.panel_area(),
                storage_kwh: house.storage_capacity(),
                t_index: t,
                consumption_kwh: c,
                generation_kwh: g,
            })?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Parameters of the synthetic fleet generator.
///
/// `load_scale` is the mean daily consumption per m² of floor area
/// (kWh/m²/day); `solar_scale` the mean daily clear-sky yield per m² of
/// panel (kWh/m²/day); `jitter` the relative spread of the panel area
/// around 10 % of the floor area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetSynthesisConfig {
    pub houses: usize,
    pub days: usize,
    #[serde(default = "default_interval_hours")]
    pub interval_hours: u32,
    pub floor_area_range: [f64; 2],
    pub storage_range_kwh: [f64; 2],
    pub load_scale: f64,
    pub solar_scale: f64,
    pub jitter: f64,
    #[serde(default)]
    pub seed: u64,
    /// Relative amplitude of the annual load cycle (summer peak).
    #[serde(default = "default_load_seasonality")]
    pub load_seasonality: f64,
    /// Relative amplitude of the annual solar cycle.
    #[serde(default = "default_solar_seasonality")]
    pub solar_seasonality: f64,
    /// Log-normal sigma of the per house-day load noise.
    #[serde(default = "default_daily_noise")]
    pub daily_noise: f64,
    /// Day-to-day autocorrelation of the shared weather state.
    #[serde(default = "default_weather_persistence")]
    pub weather_persistence: f64,
    /// Relative load response to a one-sigma temperature anomaly.
    #[serde(default = "default_weather_load_response")]
    pub weather_load_response: f64,
}

fn default_interval_hours() -> u32 {
    DEFAULT_INTERVAL_HOURS
}

fn default_load_seasonality() -> f64 {
    0.25
}

fn default_solar_seasonality() -> f64 {
    0.3
}

fn default_daily_noise() -> f64 {
    0.15
}

fn default_weather_persistence() -> f64 {
    0.95
}

fn default_weather_load_response() -> f64 {
    0.15
}

impl Default for FleetSynthesisConfig {
    /// A 113-house year averaging about 29.6 kWh of consumption per house
    /// and day, with generation near 74 % of consumption.
    fn default() -> Self {
        Self {
            houses: 113,
            days: 365,
            interval_hours: DEFAULT_INTERVAL_HOURS,
            floor_area_range: [120.0, 280.0],
            storage_range_kwh: [2.0, 15.4],
            load_scale: 0.136,
            solar_scale: 1.479,
            jitter: 0.1,
            seed: 0,
            load_seasonality: default_load_seasonality(),
            solar_seasonality: default_solar_seasonality(),
            daily_noise: default_daily_noise(),
            weather_persistence: default_weather_persistence(),
            weather_load_response: default_weather_load_response(),
        }
    }
}

impl FleetSynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.houses == 0 || self.days == 0 {
            return Err(Error::Config(format!(
                "houses and days must be positive (houses {}, days {})",
                self.houses, self.days
            )));
        }
        if self.interval_hours == 0 || 24 % self.interval_hours != 0 {
            return Err(Error::Config(format!(
                "interval_hours must divide 24, got {}",
                self.interval_hours
            )));
        }
        for (name, [lo, hi]) in [
            ("floor_area_range", self.floor_area_range),
            ("storage_range_kwh", self.storage_range_kwh),
        ] {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return Err(Error::Config(format!("{name} [{lo}, {hi}] is not a valid range")));
            }
        }
        let scalars = [
            ("load_scale", self.load_scale),
            ("solar_scale", self.solar_scale),
            ("jitter", self.jitter),
            ("load_seasonality", self.load_seasonality),
            ("solar_seasonality", self.solar_seasonality),
            ("daily_noise", self.daily_noise),
            ("weather_persistence", self.weather_persistence),
            ("weather_load_response", self.weather_load_response),
        ];
        for (name, v) in scalars {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.jitter >= 1.0
            || self.load_seasonality >= 1.0
            || self.solar_seasonality >= 1.0
            || self.weather_persistence >= 1.0
        {
            return Err(Error::Config(
                "jitter, seasonal amplitudes and weather_persistence must be below 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Relative residential load by hour of day: quiet nights, a morning
/// shoulder and an evening peak.
const HOURLY_LOAD_SHAPE: [f64; 24] = [
    0.55, 0.50, 0.48, 0.47, 0.48, 0.55, 0.75, 0.95, 1.00, 0.90, 0.85, 0.85, //
    0.88, 0.90, 0.95, 1.05, 1.20, 1.45, 1.65, 1.70, 1.55, 1.25, 0.95, 0.70,
];

const SUNRISE_HOUR: f64 = 6.0;
const SUNSET_HOUR: f64 = 18.0;

/// Fraction of daily load falling into each sample slot.
fn load_slot_fractions(interval_hours: u32) -> Vec<f64> {
    let total: f64 = HOURLY_LOAD_SHAPE.iter().sum();
    HOURLY_LOAD_SHAPE
        .chunks(interval_hours as usize)
        .map(|c| c.iter().sum::<f64>() / total)
        .collect()
}

/// Fraction of daily clear-sky irradiance in each slot, using a half-sine
/// between sunrise and sunset integrated exactly over the slot.
fn solar_slot_fractions(interval_hours: u32) -> Vec<f64> {
    let day_len = SUNSET_HOUR - SUNRISE_HOUR;
    let cumulative = |h: f64| {
        let h = h.clamp(SUNRISE_HOUR, SUNSET_HOUR);
        (1.0 - (PI * (h - SUNRISE_HOUR) / day_len).cos()) / 2.0
    };
    (0..24 / interval_hours)
        .map(|s| {
            let start = (s * interval_hours) as f64;
            cumulative(start + interval_hours as f64) - cumulative(start)
        })
        .collect()
}

/// Generates a deterministic synthetic fleet from `config` and `seed`.
///
/// House ids are `h0001`, `h0002`, ... Weather (clear-sky index) is shared by
/// the whole fleet per day; load noise is per house-day.
pub fn synthesize_fleet(config: &FleetSynthesisConfig, seed: u64) -> Result<Vec<HouseProfile>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = |rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]| if hi > lo { rng.random_range(lo..hi) } else { lo };

    let load_slots = load_slot_fractions(config.interval_hours);
    let solar_slots = solar_slot_fractions(config.interval_hours);
    let year = 365.0;

    // Shared weather: two stationary AR(1) states with unit variance, one
    // for temperature (drives load) and one for cloud cover.
    let rho = config.weather_persistence;
    let innovation = (1.0 - rho * rho).sqrt();
    let mut temperature = 0.0;
    let mut cloud = 0.0;
    let mut clear_sky = Vec::with_capacity(config.days);
    let mut load_season = Vec::with_capacity(config.days);
    for d in 0..config.days {
        let (zt, zc): (f64, f64) = (standard_normal(&mut rng), standard_normal(&mut rng));
        if d == 0 {
            (temperature, cloud) = (zt, zc);
        } else {
            temperature = rho * temperature + innovation * zt;
            cloud = rho * cloud + innovation * zc;
        }
        let phase = 2.0 * PI * d as f64 / year;
        let solar_season = 1.0 + config.solar_seasonality * (phase - 2.0 * PI * 172.0 / year).cos();
        // logistic map of the cloud state onto a clear-sky index in (0.5, 1)
        clear_sky.push(solar_season * (1.0 - 0.5 / (1.0 + (-1.5 * cloud - 1.0).exp())));
        let season = 1.0 + config.load_seasonality * (phase - 2.0 * PI * 200.0 / year).cos();
        load_season.push((season * (1.0 + config.weather_load_response * temperature)).max(0.0));
    }

    let sigma = config.daily_noise;
    let daily_noise = LogNormal::new(-sigma * sigma / 2.0, sigma)
        .map_err(|e| Error::Config(format!("daily_noise: {e}")))?;
    let house_noise = LogNormal::new(-0.02, 0.2).expect("constant parameters are valid");

    let width = config.houses.to_string().len().max(4);
    let mut fleet = Vec::with_capacity(config.houses);
    for h in 0..config.houses {
        let floor_area = uniform(&mut rng, config.floor_area_range);
        let panel_area = PANEL_AREA_FRACTION * floor_area * (1.0 + config.jitter * rng.random_range(-1.0..=1.0));
        let storage = uniform(&mut rng, config.storage_range_kwh);
        let appetite = house_noise.sample(&mut rng);

        let samples = config.days * load_slots.len();
        let mut consumption = Vec::with_capacity(samples);
        let mut generation = Vec::with_capacity(samples);
        for d in 0..config.days {
            let daily_load = config.load_scale * floor_area * appetite * load_season[d] * daily_noise.sample(&mut rng);
            let daily_solar = config.solar_scale * panel_area * clear_sky[d];
            consumption.extend(load_slots.iter().map(|f| daily_load * f));
            generation.extend(solar_slots.iter().map(|f| daily_solar * f));
        }
        fleet.push(HouseProfile::new(
            format!("h{:0width$}", h + 1),
            floor_area,
            panel_area,
            storage,
            consumption,
            generation,
            config.interval_hours,
        )?);
    }
    Ok(fleet)
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    rand_distr::StandardNormal.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn house(consumption: Vec<f64>, generation: Vec<f64>) -> HouseProfile {
        HouseProfile::new("h", 100.0, 10.0, 2.0, consumption, generation, 4).unwrap()
    }

    #[test]
    fn uniform_profile_splits_evenly() {
        let p = house(vec![1.0; 6], vec![0.0; 6]);
        let d = aggregate_daily(&p, &TariffSchedule::reference()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].peak_consumption, 3.0);
        assert_eq!(d[0].offpeak_consumption, 3.0);
        assert_eq!(d[0].storage, 2.0);
    }

    #[test]
    fn zero_profile_gives_zero_ledger() {
        let p = house(vec![0.0; 12], vec![0.0; 12]);
        for d in aggregate_daily(&p, &TariffSchedule::reference()).unwrap() {
            assert_eq!(
                [d.peak_consumption, d.offpeak_consumption, d.peak_generation, d.offpeak_generation],
                [0.0; 4]
            );
        }
    }

    #[test]
    fn misaligned_peak_window_is_rejected() {
        let p = house(vec![1.0; 6], vec![0.0; 6]);
        let tariff = TariffSchedule::new(0.5, 0.2, 0.3, 0.1, 9, 20).unwrap();
        assert!(matches!(aggregate_daily(&p, &tariff), Err(Error::Alignment(_))));
    }

    #[test]
    fn solar_generation_lands_in_peak_window() {
        // Direct summation over sample start hours: slots start at 0,4,...,20.
        let gen = solar_slot_fractions(4);
        let p = house(vec![0.0; 6], gen.iter().map(|f| 10.0 * f).collect());
        let d = &aggregate_daily(&p, &TariffSchedule::reference()).unwrap()[0];
        let expected_peak: f64 = [2, 3, 4].iter().map(|&s| 10.0 * gen[s]).sum();
        let expected_off: f64 = [0, 1, 5].iter().map(|&s| 10.0 * gen[s]).sum();
        assert!((d.peak_generation - expected_peak).abs() < 1e-12);
        assert!((d.offpeak_generation - expected_off).abs() < 1e-12);
        assert!(d.peak_generation > 0.9 * 10.0);
    }

    #[test]
    fn slot_fractions_sum_to_one() {
        for step in [1, 2, 3, 4, 6, 8, 12, 24] {
            assert!((load_slot_fractions(step).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((solar_slot_fractions(step).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn profile_rejects_partial_days_and_bad_intervals() {
        assert!(matches!(
            HouseProfile::new("x", 1.0, 0.1, 0.0, vec![0.0; 5], vec![0.0; 5], 4),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            HouseProfile::new("x", 1.0, 0.1, 0.0, vec![0.0; 5], vec![0.0; 5], 5),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            HouseProfile::new("x", 1.0, 0.1, 0.0, vec![0.0, -1.0, 0.0, 0.0, 0.0, 0.0], vec![0.0; 6], 4),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn tariff_invariants() {
        assert!(TariffSchedule::new(0.54, 0.22, 0.30, 0.13, 8, 20).is_ok());
        // peak sell below off-peak buy
        assert!(TariffSchedule::new(0.54, 0.22, 0.20, 0.13, 8, 20).is_err());
        // sell above buy
        assert!(TariffSchedule::new(0.54, 0.22, 0.60, 0.13, 8, 20).is_err());
        assert!(TariffSchedule::new(0.54, 0.22, 0.30, 0.13, 20, 8).is_err());
        assert!(TariffSchedule::new(0.54, 0.22, 0.30, 0.13, 0, 24).is_err());
        let t = TariffSchedule::reference();
        assert_eq!((t.peak_buy(), t.offpeak_buy(), t.peak_sell(), t.offpeak_sell()), (0.54, 0.22, 0.30, 0.13));
    }

    #[test]
    fn tariff_json_uses_price_symbols() {
        let json = serde_json::to_value(TariffSchedule::reference()).unwrap();
        assert_eq!(json["lambda_h"], 0.54);
        assert_eq!(json["mu_l"], 0.13);
        let bad = r#"{"lambda_h":0.1,"lambda_l":0.2,"mu_h":0.3,"mu_l":0.1,"peak_start_hour":8,"peak_end_hour":20}"#;
        assert!(serde_json::from_str::<TariffSchedule>(bad).is_err());
    }

    #[test]
    fn synthesis_rejects_empty_fleet() {
        let cfg = FleetSynthesisConfig {
            houses: 0,
            ..Default::default()
        };
        assert!(matches!(synthesize_fleet(&cfg, 1), Err(Error::Config(_))));
        let cfg = FleetSynthesisConfig {
            days: 0,
            ..Default::default()
        };
        assert!(matches!(synthesize_fleet(&cfg, 1), Err(Error::Config(_))));
    }

    #[test]
    fn null_fleet_is_all_zero() {
        let cfg = FleetSynthesisConfig {
            houses: 1,
            days: 1,
            load_scale: 0.0,
            solar_scale: 0.0,
            ..Default::default()
        };
        let fleet = synthesize_fleet(&cfg, 7).unwrap();
        assert_eq!(fleet[0].consumption(), &[0.0; 6]);
        assert_eq!(fleet[0].generation(), &[0.0; 6]);
    }

    #[test]
    fn panel_area_tracks_floor_area() {
        let cfg = FleetSynthesisConfig {
            houses: 50,
            days: 1,
            ..Default::default()
        };
        for h in synthesize_fleet(&cfg, 3).unwrap() {
            let ratio = h.panel_area() / (PANEL_AREA_FRACTION * h.floor_area());
            assert!((1.0 - cfg.jitter..=1.0 + cfg.jitter).contains(&ratio));
        }
    }
}
