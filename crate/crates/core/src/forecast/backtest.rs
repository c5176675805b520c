use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forecast::lasso::{fit_lasso_ar, lambda_ladder, select_lambda, FittedLassoAr, DEFAULT_LAGS};
use crate::forecast::sarima::{select_sarima, FittedSarima, SarimaGrid, SarimaOptions};
use crate::forecast::series::{fill_gaps, A1Panel, ExogSignal, IliSeries, SeriesMode};

pub const DEFAULT_TRAIN_WEEKS: usize = 156;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelFamily {
    SarimaHist,
    SarimaMrp,
    SarimaA1,
    LassoHist,
    LassoA1,
}

pub const ALL_FAMILIES: [ModelFamily; 5] = [
    ModelFamily::SarimaHist,
    ModelFamily::SarimaMrp,
    ModelFamily::SarimaA1,
    ModelFamily::LassoHist,
    ModelFamily::LassoA1,
];

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::SarimaHist => "SARIMA-HIST",
            ModelFamily::SarimaMrp => "SARIMA-MRP",
            ModelFamily::SarimaA1 => "SARIMA-A1",
            ModelFamily::LassoHist => "LASSO-HIST",
            ModelFamily::LassoA1 => "LASSO-A1",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('_', "-");
        ALL_FAMILIES
            .iter()
            .copied()
            .find(|m| m.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown model family `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    pub train_weeks: usize,
    pub horizons: Vec<usize>,
    pub grid: SarimaGrid,
    pub sarima: SarimaOptions,
    pub lasso_lags: usize,
    pub ladder_size: usize,
    pub ladder_ratio: f64,
    pub holdout: f64,
    pub seed: u64,
    /// Restricts the origins (1-based index of the last training week).
    pub origins: Option<Vec<usize>>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            train_weeks: DEFAULT_TRAIN_WEEKS,
            horizons: vec![1, 2],
            grid: SarimaGrid::default(),
            sarima: SarimaOptions::default(),
            lasso_lags: DEFAULT_LAGS,
            ladder_size: 20,
            ladder_ratio: 1e-4,
            holdout: 0.2,
            seed: 1,
            origins: None,
        }
    }
}

/// Exogenous inputs aligned week-for-week with the target series.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExogInputs<'a> {
    pub mrp: Option<&'a ExogSignal>,
    pub a1: Option<&'a A1Panel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow {
    /// 1-based index of the last training week.
    pub origin: usize,
    pub origin_week: NaiveDate,
    pub horizon: usize,
    pub model: ModelFamily,
    pub geo: String,
    pub forecast: f64,
    pub actual: f64,
    /// Selected SARIMA orders or LASSO penalty.
    pub detail: String,
}

/// A fitted model from any family.
#[derive(Debug, Clone)]
pub enum Forecaster {
    Sarima(FittedSarima),
    Lasso(FittedLassoAr),
}

impl Forecaster {
    /// Point forecasts for steps `1..=h`; `exog_future[j]` holds column `j`
    /// for the same steps. Rate forecasts are floored at zero.
    pub fn forecast(&self, h: usize, exog_future: &[Vec<f64>], mode: SeriesMode) -> Result<Vec<f64>> {
        let raw = match self {
            Forecaster::Sarima(f) => {
                if f.has_exog() {
                    let col = exog_future
                        .first()
                        .ok_or_else(|| Error::MissingExog("SARIMA model needs future exogenous values".into()))?;
                    f.forecast(h, Some(col))?
                } else {
                    f.forecast(h, None)?
                }
            }
            Forecaster::Lasso(f) => f.forecast(h, exog_future)?,
        };
        Ok(match mode {
            SeriesMode::Rate => raw.into_iter().map(|v| v.max(0.0)).collect(),
            SeriesMode::Count => raw,
        })
    }

    pub fn describe(&self) -> String {
        match self {
            Forecaster::Sarima(f) => f.spec.to_string(),
            Forecaster::Lasso(f) => format!("lambda={:e}", f.lambda),
        }
    }
}

/// Origins with a full training window and every horizon observed.
pub fn feasible_origins(n: usize, train_weeks: usize, max_h: usize) -> Vec<usize> {
    if n < train_weeks + max_h {
        return Vec::new();
    }
    (train_weeks..=n - max_h).collect()
}

fn origin_seed(seed: u64, origin: usize) -> u64 {
    seed ^ (origin as u64).wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Filled exogenous columns over `range`, split at `split`.
fn filled_columns(columns: &[Vec<Option<f64>>], range: std::ops::Range<usize>) -> Result<Vec<Vec<f64>>> {
    columns
        .iter()
        .map(|c| {
            let (v, report) = fill_gaps(&c[range.clone()])?;
            if report.interpolated + report.carried > 0 {
                log::debug!(
                    "exogenous gaps: {} interpolated, {} carried",
                    report.interpolated,
                    report.carried
                );
            }
            Ok(v)
        })
        .collect()
}

/// Exogenous columns for `family` over `range`, the first `train` values
/// being the training window.
fn family_exog(
    family: ModelFamily,
    exog: &ExogInputs<'_>,
    range: std::ops::Range<usize>,
    train: usize,
) -> Result<Vec<Vec<f64>>> {
    let panel = || {
        exog.a1
            .ok_or_else(|| Error::MissingExog(format!("{family} needs an A1 panel")))
    };
    match family {
        ModelFamily::SarimaHist | ModelFamily::LassoHist => Ok(Vec::new()),
        ModelFamily::SarimaMrp => {
            let s = exog
                .mrp
                .ok_or_else(|| Error::MissingExog("SARIMA-MRP needs an MRP signal".into()))?;
            filled_columns(&s.columns[..1], range)
        }
        ModelFamily::SarimaA1 | ModelFamily::LassoA1 => {
            let p = panel()?;
            let active = p.active_queries(range.start..range.start + train);
            if active.is_empty() {
                return Err(Error::MissingExog("no A1 query has volume in the training window".into()));
            }
            let cols = filled_columns(&p.logit_columns(&active, range.clone()), 0..range.len())?;
            if family == ModelFamily::LassoA1 {
                return Ok(cols);
            }
            let m = cols.len() as f64;
            Ok(vec![(0..range.len())
                .map(|i| cols.iter().map(|c| c[i]).sum::<f64>() / m)
                .collect()])
        }
    }
}

/// Fits `family` on `y_train` and the training part of `exog`.
pub fn fit_family(
    family: ModelFamily,
    y_train: &[f64],
    exog_train: &[Vec<f64>],
    config: &BacktestConfig,
    seed: u64,
) -> Result<Forecaster> {
    match family {
        ModelFamily::SarimaHist | ModelFamily::SarimaMrp | ModelFamily::SarimaA1 => {
            let opts = SarimaOptions {
                seed,
                ..config.sarima.clone()
            };
            let x = exog_train.first().map(Vec::as_slice);
            Ok(Forecaster::Sarima(select_sarima(y_train, x, &config.grid, &opts)?.fit))
        }
        ModelFamily::LassoHist | ModelFamily::LassoA1 => {
            let p = config.lasso_lags;
            let ladder = lambda_ladder(y_train, exog_train, p, config.ladder_size, config.ladder_ratio)?;
            let choice = select_lambda(y_train, exog_train, p, &ladder, config.holdout)?;
            Ok(Forecaster::Lasso(fit_lasso_ar(y_train, exog_train, p, choice.lambda)?))
        }
    }
}

fn run_origin(
    y: &IliSeries,
    family: ModelFamily,
    exog: &ExogInputs<'_>,
    config: &BacktestConfig,
    origin: usize,
    max_h: usize,
) -> Result<Vec<ForecastRow>> {
    let train = config.train_weeks;
    let start = origin - train;
    let values = y.values();
    let exog_cols = family_exog(family, exog, start..origin + max_h, train)?;
    let exog_train: Vec<Vec<f64>> = exog_cols.iter().map(|c| c[..train].to_vec()).collect();
    let exog_future: Vec<Vec<f64>> = exog_cols.iter().map(|c| c[train..].to_vec()).collect();
    let model = fit_family(family, &values[start..origin], &exog_train, config, origin_seed(config.seed, origin))?;
    let preds = model.forecast(max_h, &exog_future, y.mode())?;
    Ok(config
        .horizons
        .iter()
        .map(|&h| ForecastRow {
            origin,
            origin_week: y.weeks()[origin - 1],
            horizon: h,
            model: family,
            geo: y.geo().to_owned(),
            forecast: preds[h - 1],
            actual: values[origin + h - 1],
            detail: model.describe(),
        })
        .collect())
}

/// Rolling-origin backtest: each origin refits on the trailing training
/// window only and forecasts every horizon.
pub fn rolling_backtest(
    y: &IliSeries,
    family: ModelFamily,
    exog: ExogInputs<'_>,
    config: &BacktestConfig,
) -> Result<Vec<ForecastRow>> {
    if config.horizons.is_empty() || config.horizons.iter().any(|&h| h == 0) {
        return Err(Error::Config("horizons must be positive".into()));
    }
    if let Some(s) = exog.mrp {
        if s.len() != y.len() {
            return Err(Error::Domain("MRP signal is not aligned with the ILI series".into()));
        }
    }
    if let Some(p) = exog.a1 {
        if p.weeks.len() != y.len() {
            return Err(Error::Domain("A1 panel is not aligned with the ILI series".into()));
        }
    }
    let max_h = *config.horizons.iter().max().unwrap();
    let all = feasible_origins(y.len(), config.train_weeks, max_h);
    if all.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} weeks; need at least {}",
            y.len(),
            config.train_weeks + max_h
        )));
    }
    let origins: Vec<usize> = match &config.origins {
        Some(o) => o.iter().copied().filter(|t| all.contains(t)).collect(),
        None => all,
    };
    let per_origin: Vec<Result<Vec<ForecastRow>>> = origins
        .par_iter()
        .map(|&t| run_origin(y, family, &exog, config, t, max_h))
        .collect();
    let mut rows = Vec::new();
    for r in per_origin {
        rows.extend(r?);
    }
    rows.sort_by(|a, b| (a.origin, a.horizon).cmp(&(b.origin, b.horizon)));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::sarima::SarimaSpec;
    use chrono::Duration;

    fn series(values: Vec<f64>) -> IliSeries {
        let d0 = NaiveDate::from_ymd_opt(2012, 1, 1).unwrap();
        let weeks = (0..values.len()).map(|i| d0 + Duration::weeks(i as i64)).collect();
        IliSeries::new("US", SeriesMode::Rate, weeks, values).unwrap()
    }

    fn quick() -> BacktestConfig {
        BacktestConfig {
            grid: SarimaGrid::single(SarimaSpec::new(1, 0, 0, 0, 0, 0)),
            lasso_lags: 4,
            ..Default::default()
        }
    }

    #[test]
    fn exactly_one_origin_for_158_weeks() {
        assert_eq!(feasible_origins(158, 156, 2), vec![156]);
        assert!(feasible_origins(157, 156, 2).is_empty());
        let y = series((0..158).map(|t| 2.0 + (t as f64 * 0.3).sin()).collect());
        let rows = rolling_backtest(&y, ModelFamily::SarimaHist, ExogInputs::default(), &quick()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].origin, rows[0].horizon, rows[1].horizon), (156, 1, 2));
        assert_eq!(rows[1].actual, y.values()[157]);
    }

    #[test]
    fn families_parse() {
        for f in ALL_FAMILIES {
            assert_eq!(f.name().parse::<ModelFamily>().unwrap(), f);
        }
        assert_eq!("sarima_mrp".parse::<ModelFamily>().unwrap(), ModelFamily::SarimaMrp);
        assert!("arima".parse::<ModelFamily>().is_err());
    }

    #[test]
    fn exogenous_family_needs_its_signal() {
        let y = series(vec![1.0; 160]);
        assert!(rolling_backtest(&y, ModelFamily::SarimaMrp, ExogInputs::default(), &quick()).is_err());
    }

    #[test]
    fn rate_forecasts_are_floored() {
        let y = series((0..160).map(|t| if t < 150 { 1.0 + 0.01 * (t % 3) as f64 } else { 0.0 }).collect());
        let mut cfg = quick();
        cfg.grid = SarimaGrid::single(SarimaSpec::new(0, 1, 0, 0, 0, 0));
        let rows = rolling_backtest(&y, ModelFamily::LassoHist, ExogInputs::default(), &cfg).unwrap();
        assert!(rows.iter().all(|r| r.forecast >= 0.0));
    }
}
