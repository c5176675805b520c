//! Synthetic worlds with known ground truth: census cells, an ILI curve,
//! a query stream whose A1 share follows the curve, and case-control
//! samples from a planted behavioral model.
//!
//! Every generator is a pure function of the config. Independent parts of
//! a world draw from separate ChaCha streams of the same seed, so changing
//! one part (say the query volume) leaves the others untouched.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal, Poisson, StandardNormal};

use crate::calendar::{day_start_timestamp, mmwr_week};
use crate::casecontrol::{inv_logit, logit, CaseControlSample};
use crate::error::{Error, Result};
use crate::forecast::{A1Panel, IliSeries, SeriesMode};
use crate::kv::KeyValues;
use crate::mrp::{CellCounts, CellKey, Census, CensusCell, DailyCounts, Scope, StateCode, WindowDataset, ZipMap};
use crate::taxonomy::{Label, QueryRecord, Zipcode};

pub const STATE_CODES: [&str; 51] = [
    "AK", "AL", "AR", "AZ", "CA", "CO", "CT", "DC", "DE", "FL", "GA", "HI", "IA", "ID", "IL", "IN", "KS", "KY", "LA",
    "MA", "MD", "ME", "MI", "MN", "MO", "MS", "MT", "NC", "ND", "NE", "NH", "NJ", "NM", "NV", "NY", "OH", "OK", "OR",
    "PA", "RI", "SC", "SD", "TN", "TX", "UT", "VA", "VT", "WA", "WI", "WV", "WY",
];

pub const A1_TEMPLATES: [&str; 12] = [
    "flu symptoms",
    "what are the symptoms of the flu",
    "how long does the flu last",
    "fever and cough",
    "do i have the flu",
    "is the flu contagious",
    "sore throat remedies",
    "flu treatment",
    "cough medicine for adults",
    "fever in adults",
    "influenza symptoms",
    "swollen glands and fever",
];

pub const A2_TEMPLATES: [&str; 8] = [
    "spanish flu",
    "bird flu news",
    "flu shot near me",
    "flu vaccine side effects",
    "swine flu history",
    "flu outbreak news",
    "influenza pandemic",
    "flu deaths statistics",
];

pub const OTHER_TEMPLATES: [&str; 6] = [
    "weather tomorrow",
    "pizza near me",
    "movie times",
    "football scores",
    "cheap flights",
    "banana bread recipe",
];

/// Case-control covariates in sample column order.
pub const CC_COLUMNS: [&str; 7] = ["volume", "female", "parent", "spouse", "age", "hh_ili", "resp_ili"];
/// Formula matching the planted case-control model.
pub const CC_FORMULA: &str = "hh_ili + volume + female + parent + female:parent + spouse + age + resp_ili";

const STREAM_CELLS: u64 = 1;
const STREAM_ILI: u64 = 2;
const STREAM_COUNTS: u64 = 3;
const STREAM_TEXT: u64 = 4;
const STREAM_POPULATION: u64 = 5;
const STREAM_SAMPLE: u64 = 6;
const STREAM_WINDOW: u64 = 7;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub seed: u64,
    pub states: usize,
    pub cells_per_state: usize,
    /// Mean zipcodes per cell (drawn uniformly from 1..=2m-1).
    pub zips_per_cell: usize,
    pub sd_state: f64,
    pub sd_edu: f64,
    pub sd_age: f64,
    pub sd_child: f64,
    pub sd_edu_age: f64,
    /// Effect of standardized cell income on the A1 logit.
    pub income_coef: f64,
    /// A1 share of flagged queries when every effect is zero.
    pub a1_base: f64,
    /// Slope of the A1 logit on the weekly ILI value.
    pub gamma: f64,
    /// Mean flagged queries per cell per day before intensity.
    pub queries_per_day: f64,
    /// Log-sd of per-cell search intensity.
    pub intensity_sd: f64,
    /// Mean unflagged queries per cell per day.
    pub other_per_day: f64,
    pub start_date: NaiveDate,
    pub weeks: usize,
    pub ili_baseline: f64,
    pub ili_amplitude: f64,
    /// MMWR week of the seasonal peak.
    pub ili_peak_week: f64,
    pub ili_width: f64,
    pub ili_noise_sd: f64,
    pub ili_noise_ar: f64,
    /// Population rate of A1 searching among all users.
    pub tau_true: f64,
    pub rr_household_ili: f64,
    pub rr_volume: f64,
    pub rr_father: f64,
    pub rr_resp_ili: f64,
    pub n_cases: usize,
    pub n_controls: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 1,
            states: 6,
            cells_per_state: 16,
            zips_per_cell: 3,
            sd_state: 0.5,
            sd_edu: 0.3,
            sd_age: 0.3,
            sd_child: 0.2,
            sd_edu_age: 0.2,
            income_coef: 0.2,
            a1_base: 0.3,
            gamma: 0.25,
            queries_per_day: 2.0,
            intensity_sd: 0.5,
            other_per_day: 0.5,
            start_date: NaiveDate::from_ymd_opt(2011, 10, 2).unwrap(),
            weeks: 208,
            ili_baseline: 1.0,
            ili_amplitude: 4.0,
            ili_peak_week: 6.0,
            ili_width: 4.0,
            ili_noise_sd: 0.25,
            ili_noise_ar: 0.5,
            tau_true: 1.2e-5,
            rr_household_ili: 1.57,
            rr_volume: 1.32,
            rr_father: 8.75,
            rr_resp_ili: 1.5,
            n_cases: 136,
            n_controls: 514,
        }
    }
}

pub const WORLD_KEYS: [&str; 30] = [
    "seed",
    "states",
    "cells_per_state",
    "zips_per_cell",
    "sd_state",
    "sd_edu",
    "sd_age",
    "sd_child",
    "sd_edu_age",
    "income_coef",
    "a1_base",
    "gamma",
    "queries_per_day",
    "intensity_sd",
    "other_per_day",
    "start_date",
    "weeks",
    "ili_baseline",
    "ili_amplitude",
    "ili_peak_week",
    "ili_width",
    "ili_noise_sd",
    "ili_noise_ar",
    "tau_true",
    "rr_household_ili",
    "rr_volume",
    "rr_father",
    "rr_resp_ili",
    "n_cases",
    "n_controls",
];

impl WorldConfig {
    /// Defaults overridden by the keys present in `kv`. Keys that do not
    /// belong to a world config are ignored so a pipeline config can carry
    /// both.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut c = WorldConfig::default();
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = kv.get(stringify!($field))? { c.$field = v; })*
            };
        }
        set!(
            seed, states, cells_per_state, zips_per_cell, sd_state, sd_edu, sd_age, sd_child, sd_edu_age,
            income_coef, a1_base, gamma, queries_per_day, intensity_sd, other_per_day, start_date, weeks,
            ili_baseline, ili_amplitude, ili_peak_week, ili_width, ili_noise_sd, ili_noise_ar, tau_true,
            rr_household_ili, rr_volume, rr_father, rr_resp_ili, n_cases, n_controls
        );
        c.validate()?;
        Ok(c)
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let kv = KeyValues::parse(text, source)?;
        kv.reject_unknown(&WORLD_KEYS)?;
        Self::from_kv(&kv)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let kv = KeyValues::from_file(path)?;
        kv.reject_unknown(&WORLD_KEYS)?;
        Self::from_kv(&kv)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.states == 0 || self.states > STATE_CODES.len() {
            return bad(format!("states must be in 1..={}", STATE_CODES.len()));
        }
        if self.cells_per_state == 0 || self.cells_per_state > 64 {
            return bad("cells_per_state must be in 1..=64".into());
        }
        if self.zips_per_cell == 0 {
            return bad("zips_per_cell must be positive".into());
        }
        for (name, v) in [
            ("sd_state", self.sd_state),
            ("sd_edu", self.sd_edu),
            ("sd_age", self.sd_age),
            ("sd_child", self.sd_child),
            ("sd_edu_age", self.sd_edu_age),
            ("intensity_sd", self.intensity_sd),
            ("ili_noise_sd", self.ili_noise_sd),
            ("queries_per_day", self.queries_per_day),
            ("other_per_day", self.other_per_day),
            ("ili_baseline", self.ili_baseline),
            ("ili_amplitude", self.ili_amplitude),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        for (name, v) in [("tau_true", self.tau_true), ("a1_base", self.a1_base)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0, 1)"));
            }
        }
        if !(self.ili_noise_ar > -1.0 && self.ili_noise_ar < 1.0) {
            return bad("ili_noise_ar must lie in (-1, 1)".into());
        }
        if !(self.ili_width > 0.0) {
            return bad("ili_width must be positive".into());
        }
        for (name, v) in [
            ("rr_household_ili", self.rr_household_ili),
            ("rr_volume", self.rr_volume),
            ("rr_father", self.rr_father),
            ("rr_resp_ili", self.rr_resp_ili),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.weeks < 160 {
            return bad("weeks must be at least 160".into());
        }
        if self.start_date.weekday() != Weekday::Sun {
            return bad(format!("start_date {} is not a Sunday", self.start_date));
        }
        if self.n_cases == 0 || self.n_controls == 0 {
            return bad("n_cases and n_controls must be positive".into());
        }
        Ok(())
    }

    pub fn week_dates(&self) -> Vec<NaiveDate> {
        (0..self.weeks).map(|k| self.start_date + Duration::weeks(k as i64)).collect()
    }
}

/// Planted varying intercepts.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueEffects {
    pub state: BTreeMap<StateCode, f64>,
    pub edu: [f64; 4],
    pub age: [f64; 4],
    pub child: [f64; 4],
    pub edu_age: [[f64; 4]; 4],
}

#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub census: Census,
    pub zipmap: ZipMap,
    /// Zipcodes of each census cell, in census order.
    pub cell_zips: Vec<Vec<Zipcode>>,
    pub effects: TrueEffects,
    /// Search intensity multiplier per census cell.
    pub intensity: Vec<f64>,
    /// A1 logit per census cell without the ILI term.
    pub base_eta: Vec<f64>,
}

fn normals<const N: usize>(rng: &mut ChaCha8Rng, sd: f64) -> [f64; N] {
    std::array::from_fn(|_| sd * rng.sample::<f64, _>(StandardNormal))
}

pub fn gen_world(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let mut rng = stream(config.seed, STREAM_CELLS);
    let mut combos: Vec<(u8, u8, u8)> = Vec::with_capacity(64);
    for e in 1..=4u8 {
        for a in 1..=4u8 {
            for c in 1..=4u8 {
                combos.push((e, a, c));
            }
        }
    }
    combos.shuffle(&mut rng);
    combos.truncate(config.cells_per_state);

    let states: Vec<StateCode> = STATE_CODES[..config.states]
        .iter()
        .map(|s| StateCode::new(s))
        .collect::<Result<_>>()?;
    let effects = TrueEffects {
        state: states
            .iter()
            .map(|s| (s.clone(), config.sd_state * rng.sample::<f64, _>(StandardNormal)))
            .collect(),
        edu: normals(&mut rng, config.sd_edu),
        age: normals(&mut rng, config.sd_age),
        child: normals(&mut rng, config.sd_child),
        edu_age: std::array::from_fn(|_| normals(&mut rng, config.sd_edu_age)),
    };

    let mut cells = Vec::new();
    for s in &states {
        for &(e, a, c) in &combos {
            let n_zip = rng.gen_range(1..=2 * config.zips_per_cell - 1) as f64;
            let income = (35_000.0 + 7_000.0 * f64::from(e) + 5_000.0 * rng.sample::<f64, _>(StandardNormal)).max(10_000.0);
            cells.push(CensusCell {
                key: CellKey::new(s.clone(), e, a, c)?,
                n_zip,
                mean_income: income.round(),
            });
        }
    }
    let census = Census::new(cells)?;

    let mut zipmap = ZipMap::new();
    let mut cell_zips = Vec::with_capacity(census.len());
    let mut next = 10_000u32;
    for cell in census.cells() {
        let mut zips = Vec::new();
        for _ in 0..cell.n_zip as usize {
            let z = Zipcode::new(&format!("{next:05}"))?;
            next += 1;
            zipmap.insert(z.clone(), cell.key.clone());
            zips.push(z);
        }
        cell_zips.push(zips);
    }

    let incomes: Vec<f64> = census.cells().iter().map(|c| c.mean_income).collect();
    let m = incomes.iter().sum::<f64>() / incomes.len() as f64;
    let sd = (incomes.iter().map(|v| (v - m).powi(2)).sum::<f64>() / incomes.len() as f64).sqrt();
    let base = logit(config.a1_base);
    let base_eta = census
        .cells()
        .iter()
        .map(|c| {
            let k = &c.key;
            let (e, a) = (usize::from(k.edu - 1), usize::from(k.age - 1));
            let z = if sd > 0.0 { (c.mean_income - m) / sd } else { 0.0 };
            base + effects.state[&k.state]
                + effects.edu[e]
                + effects.age[a]
                + effects.child[usize::from(k.child - 1)]
                + effects.edu_age[e][a]
                + config.income_coef * z
        })
        .collect();
    let intensity = census
        .cells()
        .iter()
        .map(|c| (config.intensity_sd * rng.sample::<f64, _>(StandardNormal) + 0.15 * (f64::from(c.key.edu) - 2.5)).exp())
        .collect();

    Ok(World {
        config: config.clone(),
        census,
        zipmap,
        cell_zips,
        effects,
        intensity,
        base_eta,
    })
}

impl World {
    /// True A1 probability per census cell at weekly ILI value `ili`.
    pub fn cell_probabilities(&self, ili: f64) -> Vec<f64> {
        self.base_eta
            .iter()
            .map(|eta| inv_logit(eta + self.config.gamma * ili))
            .collect()
    }

    /// Census-weighted true A1 share within `scope`.
    pub fn true_signal(&self, ili: f64, scope: &Scope) -> Result<f64> {
        crate::mrp::poststratify(&self.cell_probabilities(ili), &self.census, scope)
    }

    pub fn states(&self) -> Vec<StateCode> {
        self.census.states()
    }
}

/// Noiseless curve: a cosine season plus a Gaussian epidemic bump centred
/// on the peak week.
pub fn ili_clean(config: &WorldConfig) -> Vec<f64> {
    config
        .week_dates()
        .iter()
        .map(|d| {
            let w = f64::from(mmwr_week(*d).1);
            let raw = (w - config.ili_peak_week).rem_euclid(52.0);
            let dist = raw.min(52.0 - raw);
            let season = 0.5 * (1.0 + (2.0 * std::f64::consts::PI * dist / 52.0).cos());
            let bump = (-dist * dist / (2.0 * config.ili_width * config.ili_width)).exp();
            config.ili_baseline + config.ili_amplitude * (0.3 * season + 0.7 * bump)
        })
        .collect()
}

/// Stationary AR(1) noise with marginal sd `ili_noise_sd`.
pub fn ili_noise(config: &WorldConfig) -> Vec<f64> {
    let mut rng = stream(config.seed, STREAM_ILI);
    let (sd, ar) = (config.ili_noise_sd, config.ili_noise_ar);
    let innov = sd * (1.0 - ar * ar).sqrt();
    let mut out = Vec::with_capacity(config.weeks);
    let mut prev = sd * rng.sample::<f64, _>(StandardNormal);
    for _ in 0..config.weeks {
        out.push(prev);
        prev = ar * prev + innov * rng.sample::<f64, _>(StandardNormal);
    }
    out
}

/// Weekly national ILI rate (percent), floored at zero.
pub fn gen_ili_curve(config: &WorldConfig) -> Result<IliSeries> {
    config.validate()?;
    let values = ili_clean(config)
        .iter()
        .zip(ili_noise(config))
        .map(|(c, n)| (c + n).max(0.0))
        .collect();
    IliSeries::new("US", SeriesMode::Rate, config.week_dates(), values)
}

/// Flagged and A1 counts per cell per day.
pub fn gen_daily_counts(world: &World, ili: &IliSeries) -> Result<DailyCounts> {
    let config = &world.config;
    let mut rng = stream(config.seed, STREAM_COUNTS);
    let mut daily = DailyCounts::new();
    for (week, &value) in ili.weeks().iter().zip(ili.values()) {
        let probs = world.cell_probabilities(value);
        for offset in 0..7 {
            let day = *week + Duration::days(offset);
            let mut cells = BTreeMap::new();
            for (j, cell) in world.census.cells().iter().enumerate() {
                let lambda = config.queries_per_day * world.intensity[j];
                let n = if lambda > 0.0 {
                    Poisson::new(lambda)
                        .map_err(|e| Error::Numerical(e.to_string()))?
                        .sample(&mut rng) as u64
                } else {
                    0
                };
                if n == 0 {
                    continue;
                }
                let a1 = Binomial::new(n, probs[j])
                    .map_err(|e| Error::Numerical(e.to_string()))?
                    .sample(&mut rng);
                cells.insert(cell.key.clone(), CellCounts { flagged: n, a1 });
            }
            daily.insert(day, cells);
        }
    }
    Ok(daily)
}

/// Query records realising [`gen_daily_counts`], plus unflagged noise
/// queries, sorted by timestamp. Labels are the generator's truth.
pub fn gen_query_stream(world: &World, ili: &IliSeries) -> Result<Vec<QueryRecord>> {
    let daily = gen_daily_counts(world, ili)?;
    let config = &world.config;
    let mut rng = stream(config.seed, STREAM_TEXT);
    let index: BTreeMap<&CellKey, usize> = world
        .census
        .cells()
        .iter()
        .enumerate()
        .map(|(j, c)| (&c.key, j))
        .collect();
    let mut out = Vec::new();
    let mut push = |rng: &mut ChaCha8Rng, day: NaiveDate, j: usize, text: &str, label: Label| {
        let zips = &world.cell_zips[j];
        let zip = zips[rng.gen_range(0..zips.len())].clone();
        let ts = day_start_timestamp(day) + rng.gen_range(0..86_400);
        let mut q = QueryRecord::new(ts, zip, text);
        q.label = label;
        out.push(q);
    };
    for (day, cells) in &daily {
        for (key, c) in cells {
            let j = index[key];
            for i in 0..c.flagged {
                if i < c.a1 {
                    let t = A1_TEMPLATES[rng.gen_range(0..A1_TEMPLATES.len())];
                    push(&mut rng, *day, j, t, Label::A1);
                } else {
                    let t = A2_TEMPLATES[rng.gen_range(0..A2_TEMPLATES.len())];
                    push(&mut rng, *day, j, t, Label::A2);
                }
            }
        }
        if config.other_per_day > 0.0 {
            for j in 0..world.census.len() {
                let n = Poisson::new(config.other_per_day * world.intensity[j])
                    .map_err(|e| Error::Numerical(e.to_string()))?
                    .sample(&mut rng) as u64;
                for _ in 0..n {
                    let t = OTHER_TEMPLATES[rng.gen_range(0..OTHER_TEMPLATES.len())];
                    push(&mut rng, *day, j, t, Label::NonIli);
                }
            }
        }
    }
    out.sort_by(|a, b| (a.timestamp, a.zipcode.as_str()).cmp(&(b.timestamp, b.zipcode.as_str())));
    Ok(out)
}

/// Weekly A1 counts per query text and flagged totals from labeled
/// queries, indexed by `weeks` (Sunday starts).
pub fn a1_panel(queries: &[QueryRecord], weeks: &[NaiveDate]) -> A1Panel {
    let pos: BTreeMap<NaiveDate, usize> = weeks.iter().enumerate().map(|(i, w)| (*w, i)).collect();
    let mut per_query: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut denominators = vec![0.0; weeks.len()];
    for q in queries {
        if !q.label.is_flagged() {
            continue;
        }
        let week = crate::calendar::week_start(crate::calendar::utc_date(q.timestamp));
        let Some(&i) = pos.get(&week) else { continue };
        denominators[i] += 1.0;
        if q.label == Label::A1 {
            per_query
                .entry(q.normalized_text.clone())
                .or_insert_with(|| vec![0.0; weeks.len()])[i] += 1.0;
        }
    }
    let (queries, counts) = per_query.into_iter().unzip();
    A1Panel {
        weeks: weeks.to_vec(),
        queries,
        counts,
        denominators,
    }
}

/// One window with at most `cap` flagged queries per cell, drawn at ILI
/// value `ili`. Returns the window and the true per-cell probabilities.
pub fn gen_sparse_window(world: &World, ili: f64, mean_per_cell: f64, cap: u64, seed: u64) -> Result<(WindowDataset, Vec<f64>)> {
    let mut rng = stream(seed, STREAM_WINDOW);
    let probs = world.cell_probabilities(ili);
    let mut counts = BTreeMap::new();
    for (j, cell) in world.census.cells().iter().enumerate() {
        let lambda = mean_per_cell * world.intensity[j];
        if lambda <= 0.0 {
            continue;
        }
        let n = (Poisson::new(lambda)
            .map_err(|e| Error::Numerical(e.to_string()))?
            .sample(&mut rng) as u64)
            .min(cap);
        if n == 0 {
            continue;
        }
        let a1 = Binomial::new(n, probs[j])
            .map_err(|e| Error::Numerical(e.to_string()))?
            .sample(&mut rng);
        counts.insert(cell.key.clone(), CellCounts { flagged: n, a1 });
    }
    Ok((
        WindowDataset {
            end: world.config.start_date,
            days: 3,
            window_days: 3,
            counts,
        },
        probs,
    ))
}

/// A case-control sample with the model that generated it.
#[derive(Debug, Clone)]
pub struct CaseControlWorld {
    pub sample: CaseControlSample,
    pub intercept: f64,
    /// Planted slopes in the order of [`CC_FORMULA`] terms.
    pub slopes: Vec<(String, f64)>,
    /// Population means of [`CC_COLUMNS`].
    pub reference: Vec<f64>,
    /// Relative risk of household ILI at the reference profile.
    pub rr_true: f64,
    pub tau_true: f64,
}

const VOLUME_MAX: f64 = 9.492;

fn draw_person(rng: &mut ChaCha8Rng, volume: &Normal<f64>) -> [f64; 7] {
    let b = |rng: &mut ChaCha8Rng, p: f64| if rng.gen_bool(p) { 1.0 } else { 0.0 };
    [
        volume.sample(rng).clamp(0.0, VOLUME_MAX),
        b(rng, 0.61),
        b(rng, 0.315),
        b(rng, 0.509),
        f64::from(rng.gen_range(1..=7u8)),
        b(rng, 0.349),
        b(rng, 0.245),
    ]
}

struct Planted {
    b0: f64,
    /// volume, female, parent, female:parent, spouse, age, hh_ili, resp_ili
    b: [f64; 8],
}

impl Planted {
    fn eta(&self, x: &[f64; 7]) -> f64 {
        self.b0
            + self.b[0] * x[0]
            + self.b[1] * x[1]
            + self.b[2] * x[2]
            + self.b[3] * x[1] * x[2]
            + self.b[4] * x[3]
            + self.b[5] * x[4]
            + self.b[6] * x[5]
            + self.b[7] * x[6]
    }

    fn max_probability(&self) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for bits in 0..32u32 {
            let bit = |i: u32| f64::from((bits >> i) & 1);
            for vol in [0.0, VOLUME_MAX] {
                for age in [1.0, 7.0] {
                    let x = [vol, bit(0), bit(1), bit(2), age, bit(3), bit(4)];
                    best = best.max(self.eta(&x));
                }
            }
        }
        inv_logit(best)
    }
}

/// Samples `n_cases` outcome-1 and `n_controls` outcome-0 respondents from
/// a population whose planted model has base rate `tau_true` and a
/// household-ILI relative risk of `rr_household_ili` at the population
/// mean profile.
pub fn gen_casecontrol(config: &WorldConfig, n_cases: usize, n_controls: usize, seed: u64) -> Result<CaseControlWorld> {
    config.validate()?;
    if n_cases == 0 || n_controls == 0 {
        return Err(Error::Domain("case and control counts must be positive".into()));
    }
    let volume = Normal::new(5.688, 1.61).map_err(|e| Error::Numerical(e.to_string()))?;
    let mut pop_rng = stream(config.seed, STREAM_POPULATION);
    let population: Vec<[f64; 7]> = (0..20_000).map(|_| draw_person(&mut pop_rng, &volume)).collect();
    let mut reference = [0.0; 7];
    for x in &population {
        for (r, v) in reference.iter_mut().zip(x) {
            *r += v / population.len() as f64;
        }
    }

    let mut planted = Planted {
        b0: 0.0,
        b: [
            config.rr_volume.ln(),
            0.0,
            config.rr_father.ln(),
            -config.rr_father.ln(),
            0.0,
            0.0,
            config.rr_household_ili.ln(),
            config.rr_resp_ili.ln(),
        ],
    };
    let at = |hh: f64| {
        let mut x = reference;
        x[5] = hh;
        x
    };
    let (x1, x0) = (at(1.0), at(0.0));
    for _ in 0..20 {
        let (mut lo, mut hi) = (-60.0, 10.0);
        for _ in 0..64 {
            planted.b0 = 0.5 * (lo + hi);
            let rate = population.iter().map(|x| inv_logit(planted.eta(x))).sum::<f64>() / population.len() as f64;
            if rate > config.tau_true {
                hi = planted.b0;
            } else {
                lo = planted.b0;
            }
        }
        let p0 = inv_logit(planted.eta(&x0));
        let b_hh = logit(config.rr_household_ili * p0) - planted.eta(&x0);
        let step = (b_hh - planted.b[6]).abs();
        planted.b[6] = b_hh;
        if step < 1e-12 {
            break;
        }
    }
    let rr_true = inv_logit(planted.eta(&x1)) / inv_logit(planted.eta(&x0));

    let mut rng = stream(seed, STREAM_SAMPLE);
    let max_p = planted.max_probability();
    let mut rows = Vec::with_capacity(n_cases + n_controls);
    let mut y = Vec::with_capacity(n_cases + n_controls);
    while y.len() < n_cases {
        let x = draw_person(&mut rng, &volume);
        if rng.gen::<f64>() * max_p < inv_logit(planted.eta(&x)) {
            rows.push(x.to_vec());
            y.push(1u8);
        }
    }
    while y.len() < n_cases + n_controls {
        let x = draw_person(&mut rng, &volume);
        if rng.gen::<f64>() >= inv_logit(planted.eta(&x)) {
            rows.push(x.to_vec());
            y.push(0u8);
        }
    }
    let sample = CaseControlSample::new(CC_COLUMNS.iter().map(|s| s.to_string()).collect(), rows, y)?;
    let names = ["volume", "female", "parent", "female:parent", "spouse", "age", "hh_ili", "resp_ili"];
    Ok(CaseControlWorld {
        sample,
        intercept: planted.b0,
        slopes: names.iter().zip(planted.b).map(|(n, b)| (n.to_string(), b)).collect(),
        reference: reference.to_vec(),
        rr_true,
        tau_true: config.tau_true,
    })
}
