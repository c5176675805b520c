//! Weekly ILI forecasters and the rolling-origin backtest.

pub mod backtest;
pub mod lasso;
pub mod optim;
pub mod sarima;
pub mod series;

pub use backtest::{
    feasible_origins, fit_family, rolling_backtest, BacktestConfig, ExogInputs, ForecastRow, Forecaster,
    ModelFamily, ALL_FAMILIES, DEFAULT_TRAIN_WEEKS,
};
pub use lasso::{fit_lasso_ar, lambda_ladder, lambda_max, select_lambda, FittedLassoAr, LambdaChoice, DEFAULT_LAGS};
pub use optim::{nelder_mead, Minimum, NelderMeadOptions};
pub use sarima::{
    fit_sarima, pacf_to_coefs, select_sarima, FittedSarima, SarimaGrid, SarimaOptions, SarimaSpec, Selection, SEASON,
};
pub use series::{
    fill_gaps, logit_volume, A1Panel, ExogKind, ExogSignal, FillReport, IliSeries, SeriesMode, LOGIT_CLAMP,
};
