//! The commands behind the `ilinow` binary. Each reads its inputs from
//! the validated config, delegates to the library, and writes its outputs
//! atomically under the output directory. Every command returns the files
//! it wrote.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde_json::json;

use crate::casecontrol::{
    correct_intercept, expected_density, fit_logit, risk_contrast, CaseControlSample, FittedLogit, Formula,
};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::{compare_report, comparison_charts, line_chart_svg, season_report};
use crate::forecast::{
    rolling_backtest, A1Panel, BacktestConfig, ExogInputs, ExogKind, ExogSignal, ForecastRow, IliSeries, ModelFamily,
    SarimaOptions,
};
use crate::io;
use crate::mrp::{mrp_signal, scope_series, weekly_aggregate, Census, MrpOptions, Scope, SignalRow, ZipMap};
use crate::synth;
use crate::taxonomy::{
    expand_seed, label_records, train_embeddings, EmbeddingModel, KeywordRules, Label, LabelOverrides, QueryRecord,
    TrainParams,
};

fn rules(config: &PipelineConfig) -> Result<KeywordRules> {
    match &config.paths.rules {
        Some(p) => KeywordRules::from_file(&config.flag_terms, p),
        None => KeywordRules::parse(&config.flag_terms, KeywordRules::builtin_rules_text(), "<builtin>"),
    }
}

fn overrides(config: &PipelineConfig) -> Result<LabelOverrides> {
    match &config.paths.labels {
        Some(p) => LabelOverrides::from_file(p),
        None => Ok(LabelOverrides::default()),
    }
}

fn labeled_queries(config: &PipelineConfig, relabel: bool) -> Result<Vec<QueryRecord>> {
    let path = config
        .paths
        .queries
        .as_ref()
        .ok_or_else(|| Error::MissingKeys(vec!["queries".into()]))?;
    let mut queries = io::read_queries(path)?;
    let has_labels = queries.iter().any(|q| q.label != Label::Unlabeled);
    if relabel || !has_labels {
        label_records(&mut queries, &rules(config)?, &overrides(config)?);
    }
    log::info!("read {} queries from {}", queries.len(), path.display());
    Ok(queries)
}

/// Labels every query with the rules and overrides.
pub fn cmd_label(config: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let queries = labeled_queries(config, true)?;
    let mut counts: BTreeMap<Label, usize> = BTreeMap::new();
    for q in &queries {
        *counts.entry(q.label).or_default() += 1;
    }
    for (label, n) in &counts {
        log::info!("{label}: {n}");
    }
    let out = config.out_path("labeled_queries.csv");
    io::write_queries(&out, &queries, true)?;
    Ok(vec![out])
}

/// Ranks non-A1 query texts by similarity to the A1 texts for review.
pub fn cmd_expand(config: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let queries = labeled_queries(config, false)?;
    let mut label_of: BTreeMap<&str, Label> = BTreeMap::new();
    for q in &queries {
        label_of.insert(&q.normalized_text, q.label);
    }
    let seeds: Vec<String> = label_of
        .iter()
        .filter(|(_, l)| **l == Label::A1)
        .map(|(t, _)| t.to_string())
        .collect();
    let candidates: Vec<String> = label_of
        .iter()
        .filter(|(_, l)| **l != Label::A1)
        .map(|(t, _)| t.to_string())
        .collect();
    if seeds.is_empty() {
        return Err(Error::InsufficientData("no A1 queries to expand from".into()));
    }
    let mut written = Vec::new();
    let model = match &config.paths.embeddings {
        Some(p) => EmbeddingModel::from_file(p)?,
        None => {
            let corpus: Vec<String> = label_of.keys().map(|s| s.to_string()).collect();
            let params = TrainParams {
                dim: config.embed_dim,
                window: config.embed_window,
                epochs: config.embed_epochs,
                min_count: config.embed_min_count,
                seed: config.seed,
                ..TrainParams::default()
            };
            let model = train_embeddings(&corpus, &params)?;
            let path = config.out_path("embeddings.txt");
            io::write_atomic(&path, model.to_text().as_bytes())?;
            written.push(path);
            model
        }
    };
    let ranked = expand_seed(&seeds, &candidates, &model, config.expand_k)?;
    let out = config.out_path("expansion.csv");
    io::write_rows(
        &out,
        &["query", "similarity", "current_label"],
        ranked
            .iter()
            .map(|e| vec![e.query.clone(), e.similarity.to_string(), label_of[e.query.as_str()].to_string()]),
    )?;
    written.push(out);
    Ok(written)
}

fn column_means(sample: &CaseControlSample, rows: impl Iterator<Item = usize>) -> Vec<f64> {
    let mut sum = vec![0.0; sample.columns().len()];
    let mut n = 0.0;
    for i in rows {
        for (s, v) in sum.iter_mut().zip(&sample.rows()[i]) {
            *s += v;
        }
        n += 1.0;
    }
    sum.iter().map(|s| s / n).collect()
}

/// Design rows with `column` set to 1 and 0 at the control means.
pub fn contrast_profiles(
    sample: &CaseControlSample,
    formula: &Formula,
    column: &str,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let j = sample
        .column_index(column)
        .ok_or_else(|| Error::Config(format!("contrast column `{column}` is not in the sample")))?;
    let controls = (0..sample.len()).filter(|&i| sample.outcomes()[i] == 0);
    let mut reference = column_means(sample, controls);
    reference[j] = 1.0;
    let x1 = formula.design_row(sample.columns(), &reference)?;
    reference[j] = 0.0;
    let x0 = formula.design_row(sample.columns(), &reference)?;
    Ok((x1, x0))
}

fn coefficient_map(fit: &FittedLogit) -> serde_json::Value {
    fit.names
        .iter()
        .zip(fit.coefficients.iter())
        .map(|(n, b)| (n.clone(), json!(b)))
        .collect::<serde_json::Map<_, _>>()
        .into()
}

fn histogram(values: &[f64], bins: usize) -> (Vec<String>, Vec<f64>) {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0.0; bins];
    for v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1.0;
    }
    let labels = (0..bins).map(|b| format!("{:.3e}", lo + (b as f64 + 0.5) * width)).collect();
    (labels, counts)
}

/// Fits, corrects and contrasts the behavioral model.
pub fn cmd_casecontrol(config: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let path = config.paths.casecontrol.as_ref().expect("validated");
    let sample = io::read_casecontrol(path)?;
    let formula = match &config.paths.formula {
        Some(p) => Formula::parse(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => Formula::main_effects(sample.columns()),
    };
    let fit = fit_logit(&sample, &formula)?;
    let corrected = correct_intercept(&fit, config.tau)?;
    log::info!(
        "fit {} rows, {} cases, {} iterations",
        sample.len(),
        sample.n_cases(),
        fit.convergence.iterations
    );
    let mut contrasts = Vec::new();
    for (k, column) in config.contrasts.iter().enumerate() {
        let (x1, x0) = contrast_profiles(&sample, &formula, column)?;
        let rc = risk_contrast(&corrected, &x1, &x0, config.n_draws, config.seed.wrapping_add(k as u64))?;
        contrasts.push(json!({ "column": column, "contrast": rc }));
    }
    let controls = (0..sample.len()).filter(|&i| sample.outcomes()[i] == 0);
    let reference = formula.design_row(sample.columns(), &column_means(&sample, controls))?;
    let draws = expected_density(&corrected, &reference, config.n_draws, config.seed)?;
    let se: Vec<f64> = (0..fit.coefficients.len()).map(|i| fit.covariance[(i, i)].sqrt()).collect();
    let covariance: Vec<Vec<f64>> = (0..fit.covariance.nrows())
        .map(|i| fit.covariance.row(i).iter().copied().collect())
        .collect();
    let mut sorted = draws.clone();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| crate::casecontrol::percentile_sorted(&sorted, p);
    let report = json!({
        "n": sample.len(),
        "n_cases": sample.n_cases(),
        "y_bar": fit.y_bar,
        "tau": config.tau,
        "terms": fit.names,
        "beta": coefficient_map(&fit),
        "beta_corrected": coefficient_map(&corrected),
        "std_error": fit.names.iter().cloned().zip(se).collect::<BTreeMap<_, _>>(),
        "covariance": covariance,
        "convergence": fit.convergence,
        "contrasts": contrasts,
        "reference_rate": {
            "point": corrected.probability(&reference),
            "mean": draws.iter().sum::<f64>() / draws.len() as f64,
            "ci": [q(0.025), q(0.975)],
        },
    });
    let out = config.out_path("casecontrol_report.json");
    io::write_atomic(&out, (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
    let (labels, counts) = histogram(&draws, 40);
    let svg = line_chart_svg(
        "Simulated search rate at the reference profile",
        &labels,
        &[("draws".to_string(), counts)],
    );
    let svg_path = config.out_path("casecontrol_density.svg");
    io::write_atomic(&svg_path, svg.as_bytes())?;
    Ok(vec![out, svg_path])
}

fn census_and_zipmap(config: &PipelineConfig) -> Result<(Census, ZipMap)> {
    let (census, implied) = io::read_census(config.paths.census.as_ref().expect("validated"))?;
    match (&config.paths.zipmap, implied) {
        (Some(p), _) => Ok((census, io::read_zipmap(p)?)),
        (None, Some(z)) => Ok((census, z)),
        (None, None) => Err(Error::MissingKeys(vec!["zipmap".into()])),
    }
}

/// Daily MRP estimates for every configured scope.
pub fn cmd_mrp(config: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let queries = labeled_queries(config, false)?;
    let (census, zipmap) = census_and_zipmap(config)?;
    let scopes = match &config.scopes {
        Some(s) => s.clone(),
        None => std::iter::once(Scope::National)
            .chain(census.states().into_iter().map(Scope::State))
            .collect(),
    };
    let rows = mrp_signal(&queries, &census, &zipmap, &scopes, config.window_days, &MrpOptions::default())?;
    log::info!("{} signal rows over {} scopes", rows.len(), scopes.len());
    let out = config.out_path("mrp_signal.csv");
    io::write_signal(&out, &rows)?;
    Ok(vec![out])
}

fn geo_scope(geo: &str) -> Result<Scope> {
    if geo.eq_ignore_ascii_case("US") || geo.eq_ignore_ascii_case("national") {
        Ok(Scope::National)
    } else {
        geo.parse()
    }
}

fn a1_panel(config: &PipelineConfig) -> Result<A1Panel> {
    if let Some(p) = &config.paths.a1_panel {
        return io::read_a1_panel(p);
    }
    let queries = labeled_queries(config, false)?;
    let weeks: BTreeSet<_> = queries
        .iter()
        .map(|q| crate::calendar::week_start(crate::calendar::utc_date(q.timestamp)))
        .collect();
    Ok(synth::a1_panel(&queries, &weeks.into_iter().collect::<Vec<_>>()))
}

pub fn backtest_config(config: &PipelineConfig) -> BacktestConfig {
    BacktestConfig {
        train_weeks: config.train_weeks,
        horizons: config.horizons.clone(),
        grid: config.grid.clone(),
        sarima: SarimaOptions {
            restarts: config.sarima_restarts,
            seed: config.seed,
            ..SarimaOptions::default()
        },
        lasso_lags: config.lasso_lags,
        ladder_size: config.ladder_size,
        ladder_ratio: config.ladder_ratio,
        holdout: config.holdout,
        seed: config.seed,
        origins: None,
    }
}

fn report_files(config: &PipelineConfig, rows: &[ForecastRow]) -> Result<Vec<PathBuf>> {
    let metrics = compare_report(rows)?;
    let seasons = season_report(rows, config.season_start_week, config.season_end_week)?;
    let mut written = Vec::new();
    let path = config.out_path("metrics.csv");
    io::write_metrics(&path, &metrics)?;
    written.push(path);
    let path = config.out_path("season_metrics.csv");
    io::write_metrics(&path, &seasons)?;
    written.push(path);
    for m in &metrics {
        log::info!(
            "{} {} h={}: rmse {:.4} mae {:.4}{}",
            m.model,
            m.geo,
            m.horizon,
            m.rmse,
            m.mae,
            if m.winner { " *" } else { "" }
        );
    }
    for (name, svg) in comparison_charts(rows) {
        let path = config.out_path(&name);
        io::write_atomic(&path, svg.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

/// Rolling-origin backtests of the configured model families per geo.
pub fn cmd_backtest(config: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let all = io::read_ili(config.paths.ili.as_ref().expect("validated"), config.mode)?;
    let series: Vec<IliSeries> = match &config.geos {
        Some(g) => {
            let found: BTreeSet<&str> = all.iter().map(|s| s.geo()).collect();
            if let Some(missing) = g.iter().find(|x| !found.contains(x.as_str())) {
                return Err(Error::Config(format!("geo {missing} is not in the ILI file")));
            }
            all.into_iter().filter(|s| g.contains(&s.geo().to_string())).collect()
        }
        None => all,
    };
    let signal: Option<Vec<SignalRow>> = match &config.paths.mrp_signal {
        Some(p) if config.models.contains(&ModelFamily::SarimaMrp) => Some(io::read_signal(p)?),
        _ => None,
    };
    let needs_a1 = config
        .models
        .iter()
        .any(|m| matches!(m, ModelFamily::SarimaA1 | ModelFamily::LassoA1));
    let panel = if needs_a1 { Some(a1_panel(config)?) } else { None };
    let bt = backtest_config(config);
    let mut rows = Vec::new();
    for y in &series {
        let mrp = match &signal {
            Some(rows) => {
                let daily = scope_series(rows, &geo_scope(y.geo())?);
                if daily.is_empty() {
                    return Err(Error::MissingExog(format!("no MRP signal for geo {}", y.geo())));
                }
                let weekly: Vec<_> = weekly_aggregate(&daily)
                    .into_iter()
                    .map(|w| (w.week_start, w.value))
                    .collect();
                Some(ExogSignal::align(ExogKind::Mrp, "mrp", y.weeks(), &weekly))
            }
            None => None,
        };
        let a1 = panel.as_ref().map(|p| p.aligned_to(y.weeks()));
        for &family in &config.models {
            log::info!("backtesting {family} on {}", y.geo());
            let exog = ExogInputs {
                mrp: mrp.as_ref(),
                a1: a1.as_ref(),
            };
            rows.extend(rolling_backtest(y, family, exog, &bt)?);
        }
    }
    let out = config.out_path("forecasts.csv");
    io::write_forecasts(&out, &rows)?;
    let mut written = vec![out];
    written.extend(report_files(config, &rows)?);
    Ok(written)
}

/// Metrics, season metrics and charts from an existing forecasts file.
pub fn cmd_report(config: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let path = config.forecasts.clone().unwrap_or_else(|| config.out_path("forecasts.csv"));
    if !path.exists() {
        return Err(Error::Config(format!("forecasts file {} does not exist", path.display())));
    }
    let rows = io::read_forecasts(&path)?;
    report_files(config, &rows)
}

/// Writes a complete synthetic world plus a pipeline config that points
/// at it.
pub fn cmd_synth(config: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let wc = &config.world;
    let world = synth::gen_world(wc)?;
    let ili = synth::gen_ili_curve(wc)?;
    let queries = synth::gen_query_stream(&world, &ili)?;
    let cc = synth::gen_casecontrol(wc, wc.n_cases, wc.n_controls, wc.seed)?;
    log::info!(
        "world: {} cells, {} weeks, {} queries",
        world.census.len(),
        wc.weeks,
        queries.len()
    );

    let mut written = Vec::new();
    let mut put = |name: &str| {
        let p = config.out_path(name);
        written.push(p.clone());
        p
    };
    io::write_queries(&put("queries.csv"), &queries, false)?;
    io::write_cells(&put("cells.csv"), &world.census)?;
    io::write_zipmap(&put("zipmap.csv"), &world.zipmap)?;
    io::write_ili(&put("ili.csv"), std::slice::from_ref(&ili))?;
    io::write_a1_panel(&put("a1_panel.csv"), &synth::a1_panel(&queries, ili.weeks()))?;
    io::write_casecontrol(&put("casecontrol.csv"), &cc.sample)?;
    io::write_atomic(&put("formula.txt"), format!("{}\n", synth::CC_FORMULA).as_bytes())?;

    let truth_signal: Vec<f64> = ili
        .values()
        .iter()
        .map(|v| world.true_signal(*v, &Scope::National))
        .collect::<Result<_>>()?;
    let truth = json!({
        "seed": wc.seed,
        "state_effects": world.effects.state.iter().map(|(k, v)| (k.to_string(), json!(v))).collect::<serde_json::Map<_, _>>(),
        "edu_effects": world.effects.edu,
        "age_effects": world.effects.age,
        "child_effects": world.effects.child,
        "edu_age_effects": world.effects.edu_age,
        "national_a1_share": truth_signal,
        "casecontrol": {
            "intercept": cc.intercept,
            "slopes": cc.slopes.iter().map(|(n, b)| (n.clone(), json!(b))).collect::<serde_json::Map<_, _>>(),
            "reference": cc.reference,
            "rr_household_ili": cc.rr_true,
            "tau": cc.tau_true,
        },
    });
    io::write_atomic(&put("truth.json"), (serde_json::to_string_pretty(&truth)? + "\n").as_bytes())?;

    let cfg = format!(
        "# synthetic world, seed {}\n\
         queries = queries.csv\n\
         census = cells.csv\n\
         zipmap = zipmap.csv\n\
         ili = ili.csv\n\
         a1_panel = a1_panel.csv\n\
         casecontrol = casecontrol.csv\n\
         formula = formula.txt\n\
         mrp_signal = mrp_signal.csv\n\
         out = .\n\
         seed = {}\n\
         tau = {}\n",
        wc.seed, config.seed, wc.tau_true
    );
    io::write_atomic(&put("pipeline.cfg"), cfg.as_bytes())?;
    Ok(written)
}

