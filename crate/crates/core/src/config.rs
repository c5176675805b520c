//! Pipeline configuration: a flat `key = value` file plus command-line
//! overrides, validated in full before any command does work.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::forecast::{ModelFamily, SarimaGrid, SeriesMode, ALL_FAMILIES, DEFAULT_LAGS, SEASON};
use crate::kv::KeyValues;
use crate::mrp::{Scope, DEFAULT_WINDOW_DAYS};
use crate::synth::{WorldConfig, WORLD_KEYS};
use crate::taxonomy::DEFAULT_FLAG_TERMS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Label,
    Expand,
    CaseControl,
    Mrp,
    Backtest,
    Synth,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Label => "label",
            Command::Expand => "expand",
            Command::CaseControl => "casecontrol",
            Command::Mrp => "mrp",
            Command::Backtest => "backtest",
            Command::Synth => "synth",
            Command::Report => "report",
        }
    }
}

/// Input file keys.
pub const PATH_KEYS: [&str; 11] = [
    "queries",
    "census",
    "zipmap",
    "ili",
    "rules",
    "labels",
    "embeddings",
    "casecontrol",
    "formula",
    "a1_panel",
    "mrp_signal",
];

const SETTING_KEYS: [&str; 32] = [
    "out",
    "flag_terms",
    "tau",
    "n_draws",
    "contrasts",
    "window_days",
    "scopes",
    "train_years",
    "train_weeks",
    "horizons",
    "models",
    "mode",
    "geos",
    "sarima_p",
    "sarima_d",
    "sarima_q",
    "sarima_sp",
    "sarima_sd",
    "sarima_sq",
    "sarima_restarts",
    "lasso_lags",
    "ladder_size",
    "ladder_ratio",
    "holdout",
    "season_start_week",
    "season_end_week",
    "expand_k",
    "embed_dim",
    "embed_window",
    "embed_epochs",
    "embed_min_count",
    "forecasts",
];

/// Values given on the command line; they win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub queries: Option<PathBuf>,
    pub census: Option<PathBuf>,
    pub zipmap: Option<PathBuf>,
    pub ili: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub casecontrol: Option<PathBuf>,
    pub formula: Option<PathBuf>,
    pub a1_panel: Option<PathBuf>,
    pub mrp_signal: Option<PathBuf>,
}

impl Paths {
    fn get(&self, key: &str) -> Option<&PathBuf> {
        match key {
            "queries" => self.queries.as_ref(),
            "census" => self.census.as_ref(),
            "zipmap" => self.zipmap.as_ref(),
            "ili" => self.ili.as_ref(),
            "rules" => self.rules.as_ref(),
            "labels" => self.labels.as_ref(),
            "embeddings" => self.embeddings.as_ref(),
            "casecontrol" => self.casecontrol.as_ref(),
            "formula" => self.formula.as_ref(),
            "a1_panel" => self.a1_panel.as_ref(),
            "mrp_signal" => self.mrp_signal.as_ref(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub out: PathBuf,
    pub seed: u64,
    pub flag_terms: Vec<String>,
    pub tau: f64,
    pub n_draws: usize,
    /// Binary columns contrasted at 1 versus 0.
    pub contrasts: Vec<String>,
    pub window_days: usize,
    /// `None` means national plus every census state.
    pub scopes: Option<Vec<Scope>>,
    pub train_weeks: usize,
    pub horizons: Vec<usize>,
    pub models: Vec<ModelFamily>,
    pub mode: SeriesMode,
    /// ILI geos to backtest; `None` means all in the file.
    pub geos: Option<Vec<String>>,
    pub grid: SarimaGrid,
    pub sarima_restarts: usize,
    pub lasso_lags: usize,
    pub ladder_size: usize,
    pub ladder_ratio: f64,
    pub holdout: f64,
    pub season_start_week: u32,
    pub season_end_week: u32,
    pub expand_k: usize,
    pub embed_dim: usize,
    pub embed_window: usize,
    pub embed_epochs: usize,
    pub embed_min_count: usize,
    /// Forecast file read by `report`; defaults to `out/forecasts.csv`.
    pub forecasts: Option<PathBuf>,
    pub world: WorldConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let grid = SarimaGrid::default();
        PipelineConfig {
            paths: Paths::default(),
            out: PathBuf::from("out"),
            seed: 1,
            flag_terms: DEFAULT_FLAG_TERMS.iter().map(|s| s.to_string()).collect(),
            tau: 1.2e-5,
            n_draws: 10_000,
            contrasts: vec!["hh_ili".into()],
            window_days: DEFAULT_WINDOW_DAYS,
            scopes: None,
            train_weeks: 3 * 52,
            horizons: vec![1, 2],
            models: ALL_FAMILIES.to_vec(),
            mode: SeriesMode::Rate,
            geos: None,
            grid,
            sarima_restarts: 2,
            lasso_lags: DEFAULT_LAGS,
            ladder_size: 20,
            ladder_ratio: 1e-4,
            holdout: 0.2,
            season_start_week: 40,
            season_end_week: 20,
            expand_k: 50,
            embed_dim: 32,
            embed_window: 3,
            embed_epochs: 10,
            embed_min_count: 1,
            forecasts: None,
            world: WorldConfig::default(),
        }
    }
}

/// Keys each command cannot run without.
fn required_keys(cmd: Command) -> &'static [&'static str] {
    match cmd {
        Command::Label | Command::Expand => &["queries"],
        Command::CaseControl => &["casecontrol"],
        Command::Mrp => &["queries", "census"],
        Command::Backtest => &["ili"],
        Command::Synth | Command::Report => &[],
    }
}

/// Input files each command reads when configured.
fn used_paths(cmd: Command) -> &'static [&'static str] {
    match cmd {
        Command::Label => &["queries", "rules", "labels"],
        Command::Expand => &["queries", "rules", "labels", "embeddings"],
        Command::CaseControl => &["casecontrol", "formula"],
        Command::Mrp => &["queries", "census", "zipmap", "rules", "labels"],
        Command::Backtest => &["ili", "mrp_signal", "a1_panel", "queries", "rules", "labels"],
        Command::Synth | Command::Report => &[],
    }
}

fn resolve(base: &Path, raw: &str) -> PathBuf {
    let p = PathBuf::from(raw);
    if raw == "." {
        base.to_path_buf()
    } else if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    /// Parses `kv` for `cmd`. Relative paths resolve against `base`.
    /// Every problem found is reported; missing keys are listed together.
    pub fn from_kv(kv: &KeyValues, base: &Path, cmd: Command, overrides: &Overrides) -> Result<Self> {
        let mut allowed: Vec<&str> = PATH_KEYS.iter().chain(SETTING_KEYS.iter()).copied().collect();
        allowed.extend(WORLD_KEYS.iter());
        kv.reject_unknown(&allowed)?;

        let missing: Vec<String> = required_keys(cmd)
            .iter()
            .filter(|k| !kv.contains(k))
            .map(|k| k.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingKeys(missing));
        }

        let mut c = PipelineConfig::default();
        let path = |k: &str| kv.get_str(k).filter(|s| !s.is_empty()).map(|s| resolve(base, s));
        c.paths = Paths {
            queries: path("queries"),
            census: path("census"),
            zipmap: path("zipmap"),
            ili: path("ili"),
            rules: path("rules"),
            labels: path("labels"),
            embeddings: path("embeddings"),
            casecontrol: path("casecontrol"),
            formula: path("formula"),
            a1_panel: path("a1_panel"),
            mrp_signal: path("mrp_signal"),
        };
        c.forecasts = path("forecasts");
        if let Some(o) = path("out") {
            c.out = o;
        }
        if let Some(v) = kv.get("seed")? {
            c.seed = v;
        }
        if let Some(v) = kv.get_list("flag_terms")? {
            c.flag_terms = v;
        }
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = kv.get(stringify!($field))? { c.$field = v; })*
            };
        }
        set!(
            tau, n_draws, window_days, mode, sarima_restarts, lasso_lags, ladder_size, ladder_ratio, holdout,
            season_start_week, season_end_week, expand_k, embed_dim, embed_window, embed_epochs, embed_min_count
        );
        if let Some(v) = kv.get_list("contrasts")? {
            c.contrasts = v;
        }
        if let Some(v) = kv.get::<usize>("train_years")? {
            c.train_weeks = 52 * v;
        }
        if let Some(v) = kv.get("train_weeks")? {
            c.train_weeks = v;
        }
        if let Some(v) = kv.get_list("horizons")? {
            c.horizons = v;
        }
        if let Some(v) = kv.get_list::<String>("scopes")? {
            c.scopes = if v.len() == 1 && v[0] == "all" {
                None
            } else {
                Some(v.iter().map(|s| s.parse()).collect::<Result<_>>().map_err(|e| {
                    Error::Config(format!("{}: scopes: {e}", kv.source()))
                })?)
            };
        }
        if let Some(v) = kv.get_list::<ModelFamily>("models")? {
            c.models = v;
        }
        if let Some(v) = kv.get_list::<String>("geos")? {
            c.geos = Some(v);
        }
        for (key, field) in [
            ("sarima_p", &mut c.grid.p),
            ("sarima_d", &mut c.grid.d),
            ("sarima_q", &mut c.grid.q),
            ("sarima_sp", &mut c.grid.sp),
            ("sarima_sd", &mut c.grid.sd),
            ("sarima_sq", &mut c.grid.sq),
        ] {
            if let Some(v) = kv.get_list(key)? {
                *field = v;
            }
        }
        c.grid.period = SEASON;
        c.world = WorldConfig::from_kv(kv)?;
        if let Some(s) = overrides.seed {
            c.seed = s;
            c.world.seed = s;
        }
        if let Some(o) = &overrides.out {
            c.out = o.clone();
        }
        c.validate(cmd)?;
        Ok(c)
    }

    pub fn from_file(path: &Path, cmd: Command, overrides: &Overrides) -> Result<Self> {
        let kv = KeyValues::from_file(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_kv(&kv, &base, cmd, overrides)
    }

    /// Defaults plus overrides, for commands run without a config file.
    pub fn defaults(cmd: Command, overrides: &Overrides) -> Result<Self> {
        Self::from_kv(&KeyValues::parse("", "<defaults>")?, Path::new("."), cmd, overrides)
    }

    /// Checks every setting, collecting all problems into one error.
    pub fn validate(&self, cmd: Command) -> Result<()> {
        let mut problems = Vec::new();
        for key in used_paths(cmd) {
            if let Some(p) = self.paths.get(key) {
                if !p.exists() {
                    problems.push(format!("{key}: {} does not exist", p.display()));
                }
            }
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            problems.push(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        if self.horizons.is_empty() || self.horizons.iter().any(|h| !(1..=2).contains(h)) {
            problems.push("horizons must be a non-empty subset of {1, 2}".into());
        }
        if self.n_draws < crate::casecontrol::MIN_DRAWS {
            problems.push(format!("n_draws must be at least {}", crate::casecontrol::MIN_DRAWS));
        }
        if self.window_days == 0 {
            problems.push("window_days must be positive".into());
        }
        if self.train_weeks < 8 {
            problems.push("train_weeks must be at least 8".into());
        }
        if self.models.is_empty() {
            problems.push("models must not be empty".into());
        }
        if !(self.ladder_ratio > 0.0 && self.ladder_ratio < 1.0) {
            problems.push("ladder_ratio must lie in (0, 1)".into());
        }
        if self.ladder_size == 0 {
            problems.push("ladder_size must be positive".into());
        }
        if !(self.holdout > 0.0 && self.holdout < 1.0) {
            problems.push("holdout must lie in (0, 1)".into());
        }
        if self.lasso_lags == 0 {
            problems.push("lasso_lags must be positive".into());
        }
        if !(1..=53).contains(&self.season_start_week) || !(1..=53).contains(&self.season_end_week) {
            problems.push("season weeks must lie in 1..=53".into());
        }
        if self.season_end_week >= self.season_start_week {
            problems.push("season_end_week must precede season_start_week".into());
        }
        if self.expand_k == 0 || self.embed_dim == 0 || self.embed_epochs == 0 || self.embed_window == 0 {
            problems.push("expand_k and embedding settings must be positive".into());
        }
        let g = &self.grid;
        if [&g.p, &g.d, &g.q, &g.sp, &g.sd, &g.sq].iter().any(|v| v.is_empty()) {
            problems.push("SARIMA grid lists must not be empty".into());
        }
        if cmd == Command::Backtest {
            let needs_mrp = self.models.contains(&ModelFamily::SarimaMrp);
            if needs_mrp && self.paths.mrp_signal.is_none() {
                problems.push("model SARIMA-MRP needs `mrp_signal`".into());
            }
            let needs_a1 = self.models.iter().any(|m| matches!(m, ModelFamily::SarimaA1 | ModelFamily::LassoA1));
            if needs_a1 && self.paths.a1_panel.is_none() && self.paths.queries.is_none() {
                problems.push("A1 models need `a1_panel` or `queries`".into());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, cmd: Command) -> Result<PipelineConfig> {
        let kv = KeyValues::parse(text, "p.cfg").unwrap();
        PipelineConfig::from_kv(&kv, Path::new("."), cmd, &Overrides::default())
    }

    #[test]
    fn missing_keys_are_listed_together() {
        match parse("", Command::Mrp) {
            Err(Error::MissingKeys(k)) => assert_eq!(k, vec!["queries".to_string(), "census".into()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_problems_are_reported() {
        let err = parse("tau = 2\nhorizons = 1, 3\nqueries = /nonexistent/q.csv\n", Command::Label)
            .unwrap_err()
            .to_string();
        assert!(err.contains("tau") && err.contains("horizons") && err.contains("/nonexistent/q.csv"), "{err}");
    }

    #[test]
    fn settings_parse_and_override() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("ili.csv"), "week_start,value\n").unwrap();
        let kv = KeyValues::parse(
            "ili = ili.csv\ntrain_years = 2\nmodels = SARIMA-HIST, LASSO_HIST\nsarima_p = 0,1\nseed = 4\n",
            "p.cfg",
        )
        .unwrap();
        let o = Overrides { seed: Some(9), out: None };
        let c = PipelineConfig::from_kv(&kv, dir.path(), Command::Backtest, &o).unwrap();
        assert_eq!(c.train_weeks, 104);
        assert_eq!(c.models, vec![ModelFamily::SarimaHist, ModelFamily::LassoHist]);
        assert_eq!(c.grid.p, vec![0, 1]);
        assert_eq!(c.seed, 9);
        assert_eq!(c.paths.ili, Some(dir.path().join("ili.csv")));
    }

    #[test]
    fn unknown_keys_and_missing_exog_are_rejected() {
        assert!(parse("colour = red\n", Command::Synth).is_err());
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("ili.csv"), "").unwrap();
        let kv = KeyValues::parse("ili = ili.csv\n", "p.cfg").unwrap();
        let err = PipelineConfig::from_kv(&kv, dir.path(), Command::Backtest, &Overrides::default())
            .unwrap_err()
            .to_string();
        assert!(err.contains("mrp_signal") && err.contains("a1_panel"), "{err}");
    }
}
