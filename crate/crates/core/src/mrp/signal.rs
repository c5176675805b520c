use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::calendar::week_start;
use crate::error::{Error, Result};
use crate::mrp::cells::{Census, StateCode, ZipMap};
use crate::mrp::fit::{fit_mrp, predict_cells, MrpOptions};
use crate::mrp::window::{build_windows, WindowDataset};
use crate::taxonomy::QueryRecord;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scope {
    National,
    State(StateCode),
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::National => f.write_str("national"),
            Scope::State(s) => write!(f, "{s}"),
        }
    }
}

impl std::str::FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("national") {
            Ok(Scope::National)
        } else {
            Ok(Scope::State(StateCode::new(s)?))
        }
    }
}

/// Census-weighted mean of per-cell predictions within `scope`.
/// `predictions` follows census order.
pub fn poststratify(predictions: &[f64], census: &Census, scope: &Scope) -> Result<f64> {
    if predictions.len() != census.len() {
        return Err(Error::Domain(format!(
            "{} predictions for {} census cells",
            predictions.len(),
            census.len()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (cell, &p) in census.cells().iter().zip(predictions) {
        let in_scope = match scope {
            Scope::National => true,
            Scope::State(s) => &cell.key.state == s,
        };
        if in_scope && cell.n_zip > 0.0 {
            num += cell.n_zip * p;
            den += cell.n_zip;
        }
    }
    if den > 0.0 {
        Ok(num / den)
    } else {
        Err(Error::Domain(format!("zero census weight in scope {scope}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalRow {
    pub date: NaiveDate,
    pub scope: Scope,
    /// `None` when the window has no flagged queries.
    pub estimate: Option<f64>,
    pub n_flagged: u64,
    pub partial: bool,
}

fn window_rows(
    window: &WindowDataset,
    census: &Census,
    scopes: &[Scope],
    options: &MrpOptions,
) -> Result<Vec<SignalRow>> {
    let flagged_in = |scope: &Scope| -> u64 {
        window
            .counts
            .iter()
            .filter(|(k, _)| match scope {
                Scope::National => true,
                Scope::State(s) => &k.state == s,
            })
            .map(|(_, c)| c.flagged)
            .sum()
    };
    let preds = if window.n_flagged() > 0 {
        let fit = fit_mrp(window, census, options)?;
        Some(predict_cells(&fit, census))
    } else {
        None
    };
    scopes
        .iter()
        .map(|scope| {
            let estimate = match &preds {
                Some(p) => Some(poststratify(p, census, scope)?),
                None => None,
            };
            Ok(SignalRow {
                date: window.end,
                scope: scope.clone(),
                estimate,
                n_flagged: flagged_in(scope),
                partial: window.is_partial(),
            })
        })
        .collect()
}

/// Daily MRP signal for each scope, ordered by date then scope order.
pub fn mrp_signal(
    queries: &[QueryRecord],
    census: &Census,
    zipmap: &ZipMap,
    scopes: &[Scope],
    window_days: usize,
    options: &MrpOptions,
) -> Result<Vec<SignalRow>> {
    if queries.is_empty() {
        return Err(Error::InsufficientData("no queries for the MRP signal".into()));
    }
    let windows = build_windows(queries, zipmap, window_days);
    signal_from_windows(&windows.windows, census, scopes, options)
}

/// Fits, predicts and poststratifies each window, in parallel.
pub fn signal_from_windows(
    windows: &[WindowDataset],
    census: &Census,
    scopes: &[Scope],
    options: &MrpOptions,
) -> Result<Vec<SignalRow>> {
    let per_window: Vec<Result<Vec<SignalRow>>> = windows
        .par_iter()
        .map(|w| window_rows(w, census, scopes, options))
        .collect();
    let mut rows = Vec::with_capacity(windows.len() * scopes.len());
    for r in per_window {
        rows.extend(r?);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeeklyValue {
    /// Sunday starting the MMWR week.
    pub week_start: NaiveDate,
    pub value: Option<f64>,
    /// Days in the week with a value.
    pub n_days: usize,
    pub partial: bool,
}

/// Mean of the available daily values per Sunday-start week. Weeks are
/// emitted from the first to the last week touched by `daily`.
pub fn weekly_aggregate(daily: &[(NaiveDate, Option<f64>)]) -> Vec<WeeklyValue> {
    let mut acc: BTreeMap<NaiveDate, (f64, usize)> = BTreeMap::new();
    for (d, v) in daily {
        let e = acc.entry(week_start(*d)).or_insert((0.0, 0));
        if let Some(v) = v {
            e.0 += v;
            e.1 += 1;
        }
    }
    let (Some(&first), Some(&last)) = (acc.keys().next(), acc.keys().next_back()) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut w = first;
    while w <= last {
        let (sum, n) = acc.get(&w).copied().unwrap_or((0.0, 0));
        out.push(WeeklyValue {
            week_start: w,
            value: (n > 0).then(|| sum / n as f64),
            n_days: n,
            partial: n < 7,
        });
        w += chrono::Duration::days(7);
    }
    out
}

/// Daily estimates for one scope, in date order.
pub fn scope_series(rows: &[SignalRow], scope: &Scope) -> Vec<(NaiveDate, Option<f64>)> {
    rows.iter()
        .filter(|r| &r.scope == scope)
        .map(|r| (r.date, r.estimate))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::day_start_timestamp;
    use crate::mrp::cells::{CellKey, CensusCell};
    use crate::taxonomy::{Label, Zipcode};
    use chrono::Duration;
    use proptest::prelude::*;

    fn cells(weights: &[f64]) -> Census {
        let states = ["AK", "AL", "AR", "AZ", "CA"];
        Census::new(
            weights
                .iter()
                .enumerate()
                .map(|(i, &w)| CensusCell {
                    key: CellKey::new(
                        StateCode::new(states[i % 5]).unwrap(),
                        (i / 5 % 4) as u8 + 1,
                        (i / 20 % 4) as u8 + 1,
                        (i / 80 % 4) as u8 + 1,
                    )
                    .unwrap(),
                    n_zip: w,
                    mean_income: 1.0,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn weighted_mean_examples() {
        let c = cells(&[1.0, 3.0]);
        let ak = Scope::State(StateCode::new("AK").unwrap());
        assert!((poststratify(&[0.2, 0.6], &c, &Scope::National).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(poststratify(&[0.2, 0.6], &c, &ak).unwrap(), 0.2);
        let eq = cells(&[2.0, 2.0, 2.0]);
        assert!((poststratify(&[0.1, 0.2, 0.6], &eq, &Scope::National).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn zero_weight_scope_is_an_error() {
        let c = cells(&[0.0, 3.0]);
        let ak = Scope::State(StateCode::new("AK").unwrap());
        assert!(poststratify(&[0.2, 0.6], &c, &ak).is_err());
        let ca = Scope::State(StateCode::new("CA").unwrap());
        assert!(poststratify(&[0.2, 0.6], &c, &ca).is_err());
    }

    proptest! {
        #[test]
        fn convex_and_scale_invariant(
            pairs in prop::collection::vec((0.0f64..1.0, 0.01f64..50.0), 1..40),
            scale in 0.001f64..1000.0,
        ) {
            let (p, w): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            // both tables share keys, so census order matches
            let c = cells(&w);
            let scaled = cells(&w.iter().map(|x| x * scale).collect::<Vec<_>>());
            let sorted = p.clone();
            let est = poststratify(&sorted, &c, &Scope::National).unwrap();
            let lo = p.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(est >= lo - 1e-15 && est <= hi + 1e-15);
            let est2 = poststratify(&sorted, &scaled, &Scope::National).unwrap();
            prop_assert!((est - est2).abs() < 1e-12);
        }
    }

    #[test]
    fn weekly_means_and_partial_weeks() {
        // 2016-01-03 is a Sunday
        let sun = NaiveDate::from_ymd_opt(2016, 1, 3).unwrap();
        let full: Vec<_> = (0..7).map(|i| (sun + Duration::days(i), Some(i as f64 + 1.0))).collect();
        let w = weekly_aggregate(&full);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].value, Some(4.0));
        assert!(!w[0].partial);

        let part: Vec<_> = (0..3).map(|i| (sun + Duration::days(i), Some(2.0 * i as f64))).collect();
        let w = weekly_aggregate(&part);
        assert_eq!(w[0].value, Some(2.0));
        assert!(w[0].partial && w[0].n_days == 3);

        let gap = vec![(sun, Some(1.0)), (sun + Duration::days(14), None)];
        let w = weekly_aggregate(&gap);
        assert_eq!(w.len(), 3);
        assert_eq!(w[1].value, None);
        assert_eq!(w[2].value, None);
    }

    fn stream(days: i64, per_day: &[(usize, bool)]) -> (Vec<QueryRecord>, Census, ZipMap) {
        let d0 = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap();
        let key = CellKey::new(StateCode::new("NY").unwrap(), 2, 3, 1).unwrap();
        let zip = Zipcode::new("10001").unwrap();
        let mut zm = ZipMap::new();
        zm.insert(zip.clone(), key.clone());
        let census = Census::new(vec![CensusCell { key, n_zip: 4.0, mean_income: 60_000.0 }]).unwrap();
        let mut qs = Vec::new();
        for d in 0..days {
            let (n, _) = per_day[d as usize % per_day.len()];
            for i in 0..n {
                let mut q = QueryRecord::new(day_start_timestamp(d0 + Duration::days(d)) + i as i64, zip.clone(), "flu");
                q.label = if i % 3 == 0 { Label::A1 } else { Label::A2 };
                qs.push(q);
            }
        }
        (qs, census, zm)
    }

    #[test]
    fn single_cell_signal_is_raw_window_share() {
        let (qs, census, zm) = stream(6, &[(3, true), (5, true), (4, true)]);
        let rows = mrp_signal(&qs, &census, &zm, &[Scope::National], 3, &MrpOptions::default()).unwrap();
        assert_eq!(rows.len(), 6);
        // per day: 3 -> 1 A1, 5 -> 2, 4 -> 2
        let a1 = [1.0, 2.0, 2.0];
        let n = [3.0, 5.0, 4.0];
        for (d, r) in rows.iter().enumerate() {
            let lo = d.saturating_sub(2);
            let (mut num, mut den) = (0.0, 0.0);
            for k in lo..=d {
                num += a1[k % 3];
                den += n[k % 3];
            }
            assert!((r.estimate.unwrap() - num / den).abs() < 1e-6, "day {d}");
            assert_eq!(r.partial, d < 2);
        }
    }

    #[test]
    fn constant_stream_gives_constant_signal() {
        let (qs, census, zm) = stream(8, &[(6, true)]);
        let rows = mrp_signal(&qs, &census, &zm, &[Scope::National], 3, &MrpOptions::default()).unwrap();
        let first = rows[0].estimate.unwrap();
        assert!(rows.iter().all(|r| (r.estimate.unwrap() - first).abs() < 1e-9));
    }
}
