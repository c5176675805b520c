//! Forecast accuracy metrics, model comparison and charts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::calendar::season_of;
use crate::error::{Error, Result};
use crate::forecast::{ForecastRow, ModelFamily};

fn check(forecasts: &[f64], actuals: &[f64]) -> Result<()> {
    if forecasts.len() != actuals.len() {
        return Err(Error::Domain(format!(
            "{} forecasts for {} actuals",
            forecasts.len(),
            actuals.len()
        )));
    }
    if forecasts.is_empty() {
        return Err(Error::Domain("no forecasts to score".into()));
    }
    Ok(())
}

pub fn rmse(forecasts: &[f64], actuals: &[f64]) -> Result<f64> {
    check(forecasts, actuals)?;
    let sse: f64 = forecasts.iter().zip(actuals).map(|(f, a)| (f - a).powi(2)).sum();
    Ok((sse / forecasts.len() as f64).sqrt())
}

pub fn mae(forecasts: &[f64], actuals: &[f64]) -> Result<f64> {
    check(forecasts, actuals)?;
    let s: f64 = forecasts.iter().zip(actuals).map(|(f, a)| (f - a).abs()).sum();
    Ok(s / forecasts.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mape {
    /// Percent.
    pub value: f64,
    /// Pairs skipped because the actual was zero.
    pub excluded: usize,
}

pub fn mape(forecasts: &[f64], actuals: &[f64]) -> Result<Mape> {
    check(forecasts, actuals)?;
    let mut sum = 0.0;
    let mut used = 0usize;
    for (f, a) in forecasts.iter().zip(actuals) {
        if *a != 0.0 {
            sum += ((f - a) / a).abs();
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::Domain("MAPE undefined: every actual is zero".into()));
    }
    Ok(Mape {
        value: 100.0 * sum / used as f64,
        excluded: forecasts.len() - used,
    })
}

pub fn pearson(forecasts: &[f64], actuals: &[f64]) -> Result<f64> {
    check(forecasts, actuals)?;
    let n = forecasts.len() as f64;
    let mf = forecasts.iter().sum::<f64>() / n;
    let ma = actuals.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (f, a) in forecasts.iter().zip(actuals) {
        let (dx, dy) = (f - mf, a - ma);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Domain("correlation undefined: zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub model: ModelFamily,
    pub geo: String,
    pub horizon: usize,
    /// Season label, or `None` for the whole backtest.
    pub season: Option<String>,
    pub rmse: f64,
    pub mape: Option<f64>,
    pub mape_excluded: usize,
    pub mae: f64,
    pub pearson: Option<f64>,
    pub n: usize,
    /// Lowest RMSE within its (geo, horizon, season) group; ties all win.
    pub winner: bool,
}

fn score(model: ModelFamily, geo: &str, horizon: usize, season: Option<String>, f: &[f64], a: &[f64]) -> Result<MetricRow> {
    let m = mape(f, a).ok();
    Ok(MetricRow {
        model,
        geo: geo.to_owned(),
        horizon,
        season,
        rmse: rmse(f, a)?,
        mape: m.map(|m| m.value),
        mape_excluded: m.map_or(f.len(), |m| m.excluded),
        mae: mae(f, a)?,
        pearson: pearson(f, a).ok(),
        n: f.len(),
        winner: false,
    })
}

type GroupKey = (String, usize);

/// Forecast rows per (geo, horizon), restricted to origins every model has.
fn joined(rows: &[ForecastRow]) -> BTreeMap<GroupKey, BTreeMap<ModelFamily, Vec<&ForecastRow>>> {
    let mut groups: BTreeMap<GroupKey, BTreeMap<ModelFamily, Vec<&ForecastRow>>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.geo.clone(), r.horizon))
            .or_default()
            .entry(r.model)
            .or_default()
            .push(r);
    }
    for models in groups.values_mut() {
        let common: BTreeSet<usize> = models
            .values()
            .map(|v| v.iter().map(|r| r.origin).collect::<BTreeSet<_>>())
            .reduce(|a, b| a.intersection(&b).copied().collect())
            .unwrap_or_default();
        for v in models.values_mut() {
            v.retain(|r| common.contains(&r.origin));
            v.sort_by_key(|r| r.origin);
        }
    }
    groups
}

fn flag_winners(rows: &mut [MetricRow]) {
    let mut best: BTreeMap<(String, usize, Option<String>), f64> = BTreeMap::new();
    for r in rows.iter() {
        let e = best
            .entry((r.geo.clone(), r.horizon, r.season.clone()))
            .or_insert(f64::INFINITY);
        *e = e.min(r.rmse);
    }
    for r in rows.iter_mut() {
        r.winner = r.rmse == best[&(r.geo.clone(), r.horizon, r.season.clone())];
    }
}

/// Metrics per (model, geo, horizon) over the origins shared by all models.
pub fn compare_report(rows: &[ForecastRow]) -> Result<Vec<MetricRow>> {
    let mut out = Vec::new();
    for ((geo, h), models) in joined(rows) {
        for (model, rs) in models {
            if rs.is_empty() {
                return Err(Error::InsufficientData(format!(
                    "no common origins for {geo} at horizon {h}"
                )));
            }
            let f: Vec<f64> = rs.iter().map(|r| r.forecast).collect();
            let a: Vec<f64> = rs.iter().map(|r| r.actual).collect();
            out.push(score(model, &geo, h, None, &f, &a)?);
        }
    }
    if out.is_empty() {
        return Err(Error::InsufficientData("no forecasts to compare".into()));
    }
    flag_winners(&mut out);
    Ok(out)
}

/// Metrics per season, seasons running from `start_week` to `end_week`
/// of the target week.
pub fn season_report(rows: &[ForecastRow], start_week: u32, end_week: u32) -> Result<Vec<MetricRow>> {
    let mut out = Vec::new();
    for ((geo, h), models) in joined(rows) {
        for (model, rs) in models {
            let mut by_season: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
            for r in rs {
                let target = r.origin_week + chrono::Duration::weeks(r.horizon as i64);
                if let Some(s) = season_of(target, start_week, end_week) {
                    let e = by_season.entry(s).or_default();
                    e.0.push(r.forecast);
                    e.1.push(r.actual);
                }
            }
            for (season, (f, a)) in by_season {
                out.push(score(model, &geo, h, Some(season), &f, &a)?);
            }
        }
    }
    flag_winners(&mut out);
    Ok(out)
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;
const PALETTE: [&str; 5] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e"];

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_owned()
}

fn polyline(points: &[(f64, f64)], color: &str, dash: bool) -> String {
    let pts: Vec<String> = points.iter().map(|(x, y)| format!("{:.2},{:.2}", x, y)).collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{} points=\"{}\"/>\n",
        if dash { " stroke-dasharray=\"4 3\"" } else { "" },
        pts.join(" ")
    )
}

/// Line chart of named series over a shared x axis of labels.
pub fn line_chart_svg(title: &str, labels: &[String], series: &[(String, Vec<f64>)]) -> String {
    let n = labels.len().max(2);
    let (mut lo, mut hi) = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let x = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / (n - 1) as f64;
    let y = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{MARGIN}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{b}\" stroke=\"black\"/>",
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    for (v, anchor) in [(lo, HEIGHT - MARGIN), (hi, MARGIN)] {
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{anchor:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{}</text>",
            MARGIN - 4.0,
            fmt_num(v)
        );
    }
    if let (Some(first), Some(last)) = (labels.first(), labels.last()) {
        for (label, i, anchor) in [(first, 0, "start"), (last, labels.len() - 1, "end")] {
            let _ = writeln!(
                svg,
                "<text x=\"{:.2}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"{anchor}\">{}</text>",
                x(i),
                HEIGHT - MARGIN + 14.0,
                escape(label)
            );
        }
    }
    for (k, (name, values)) in series.iter().enumerate() {
        let color = if k == 0 { "black" } else { PALETTE[(k - 1) % PALETTE.len()] };
        let pts: Vec<(f64, f64)> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, v)| (x(i), y(*v)))
            .collect();
        svg.push_str(&polyline(&pts, color, k > 0));
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{}</text>",
            WIDTH - MARGIN + 4.0 - 120.0,
            MARGIN + 14.0 * k as f64,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One chart per (geo, horizon): actuals and each model's forecasts over
/// the shared origins. Returns `(file name, svg)` pairs.
pub fn comparison_charts(rows: &[ForecastRow]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for ((geo, h), models) in joined(rows) {
        let Some(first) = models.values().next() else { continue };
        if first.is_empty() {
            continue;
        }
        let labels: Vec<String> = first
            .iter()
            .map(|r| (r.origin_week + chrono::Duration::weeks(r.horizon as i64)).to_string())
            .collect();
        let mut series = vec![("actual".to_owned(), first.iter().map(|r| r.actual).collect())];
        for (model, rs) in &models {
            series.push((model.name().to_owned(), rs.iter().map(|r| r.forecast).collect()));
        }
        let title = format!("{geo}: forecasts vs actual, h = {h}");
        out.push((format!("compare_{geo}_{h}.svg"), line_chart_svg(&title, &labels, &series)));
    }
    out
}
