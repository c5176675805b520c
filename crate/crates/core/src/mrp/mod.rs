//! Cell-level smoothing of the A1 share and poststratification to state
//! and national signals.

pub mod cells;
pub mod fit;
pub mod signal;
pub mod window;

pub use cells::{
    bin_census, modal_band, quartile_edges, quartile_of, CellKey, Census, CensusCell, StateCode, ZipCensusRow,
    ZipMap, DEFAULT_AGE_BANDS,
};
pub use fit::{fit_mrp, predict_cells, raw_state_shares, Group, MrpFit, MrpLevels, MrpOptions, GROUPS};
pub use signal::{mrp_signal, poststratify, signal_from_windows, scope_series, weekly_aggregate, Scope, SignalRow, WeeklyValue};
pub use window::{build_windows, windows_from_daily, CellCounts, DailyCounts, WindowDataset, Windows, DEFAULT_WINDOW_DAYS};
