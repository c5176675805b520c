use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};

use crate::calendar::utc_date;
use crate::mrp::cells::{CellKey, ZipMap};
use crate::taxonomy::{Label, QueryRecord};

pub const DEFAULT_WINDOW_DAYS: usize = 3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CellCounts {
    pub flagged: u64,
    pub a1: u64,
}

impl CellCounts {
    fn add(&mut self, other: CellCounts) {
        self.flagged += other.flagged;
        self.a1 += other.a1;
    }
}

/// Flagged and A1 counts per cell over the days ending at `end`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowDataset {
    pub end: NaiveDate,
    /// Days actually covered; fewer than the window length at the start
    /// of the data.
    pub days: usize,
    pub window_days: usize,
    pub counts: BTreeMap<CellKey, CellCounts>,
}

impl WindowDataset {
    pub fn is_partial(&self) -> bool {
        self.days < self.window_days
    }

    pub fn n_flagged(&self) -> u64 {
        self.counts.values().map(|c| c.flagged).sum()
    }

    pub fn n_a1(&self) -> u64 {
        self.counts.values().map(|c| c.a1).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Windows {
    pub windows: Vec<WindowDataset>,
    /// Flagged queries whose zipcode is not in the zip map.
    pub dropped_unmapped: usize,
}

/// One window per calendar day between the first and last query, each
/// pooling the trailing `window_days` days (fewer at the start).
pub fn build_windows(queries: &[QueryRecord], zipmap: &ZipMap, window_days: usize) -> Windows {
    let window_days = window_days.max(1);
    let mut daily = DailyCounts::new();
    let mut dropped = 0usize;
    let mut first: Option<NaiveDate> = None;
    let mut last: Option<NaiveDate> = None;
    for q in queries {
        let day = utc_date(q.timestamp);
        first = Some(first.map_or(day, |f| f.min(day)));
        last = Some(last.map_or(day, |l| l.max(day)));
        if !q.label.is_flagged() {
            continue;
        }
        let Some(key) = zipmap.get(&q.zipcode) else {
            dropped += 1;
            continue;
        };
        let c = daily.entry(day).or_default().entry(key.clone()).or_default();
        c.flagged += 1;
        if q.label == Label::A1 {
            c.a1 += 1;
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} flagged queries with unmapped zipcodes");
    }
    let (Some(first), Some(last)) = (first, last) else {
        return Windows {
            windows: Vec::new(),
            dropped_unmapped: dropped,
        };
    };
    Windows {
        windows: windows_from_daily(&daily, first, last, window_days),
        dropped_unmapped: dropped,
    }
}

/// Daily counts per cell.
pub type DailyCounts = BTreeMap<NaiveDate, BTreeMap<CellKey, CellCounts>>;

/// One window per day in `first..=last` from per-day cell counts.
pub fn windows_from_daily(daily: &DailyCounts, first: NaiveDate, last: NaiveDate, window_days: usize) -> Vec<WindowDataset> {
    let window_days = window_days.max(1);
    let mut windows = Vec::new();
    let mut day = first;
    while day <= last {
        let start = (day - Duration::days(window_days as i64 - 1)).max(first);
        let mut counts: BTreeMap<CellKey, CellCounts> = BTreeMap::new();
        for (_, cells) in daily.range(start..=day) {
            for (k, c) in cells {
                counts.entry(k.clone()).or_default().add(*c);
            }
        }
        windows.push(WindowDataset {
            end: day,
            days: (day - start).num_days() as usize + 1,
            window_days,
            counts,
        });
        day += Duration::days(1);
    }
    windows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::day_start_timestamp;
    use crate::mrp::cells::StateCode;
    use crate::taxonomy::Zipcode;

    fn rec(day: NaiveDate, zip: &str, label: Label) -> QueryRecord {
        let mut q = QueryRecord::new(day_start_timestamp(day) + 100, Zipcode::new(zip).unwrap(), "flu");
        q.label = label;
        q
    }

    fn setup() -> (ZipMap, NaiveDate) {
        let key = CellKey::new(StateCode::new("NY").unwrap(), 1, 1, 1).unwrap();
        let mut zm = ZipMap::new();
        zm.insert(Zipcode::new("10001").unwrap(), key);
        (zm, NaiveDate::from_ymd_opt(2016, 1, 1).unwrap())
    }

    #[test]
    fn three_day_window_counts() {
        let (zm, d0) = setup();
        let qs = vec![
            rec(d0, "10001", Label::A1),
            rec(d0 + Duration::days(1), "10001", Label::A1),
            rec(d0 + Duration::days(2), "10001", Label::A2),
        ];
        let w = build_windows(&qs, &zm, 3);
        assert_eq!(w.windows.len(), 3);
        let last = &w.windows[2];
        assert_eq!((last.n_flagged(), last.n_a1()), (3, 2));
        assert!(!last.is_partial());
        assert!(w.windows[0].is_partial() && w.windows[1].is_partial());
    }

    #[test]
    fn unmapped_zipcodes_dropped() {
        let (zm, d0) = setup();
        let qs = vec![rec(d0, "10001", Label::A1), rec(d0, "99999", Label::A1)];
        let w = build_windows(&qs, &zm, 3);
        assert_eq!(w.dropped_unmapped, 1);
        assert_eq!(w.windows[0].n_flagged(), 1);
    }

    #[test]
    fn ten_days_give_ten_windows() {
        let (zm, d0) = setup();
        let qs: Vec<_> = (0..10).map(|i| rec(d0 + Duration::days(i), "10001", Label::A1)).collect();
        let w = build_windows(&qs, &zm, 3);
        assert_eq!(w.windows.len(), 10);
        let days: Vec<usize> = w.windows.iter().map(|x| x.days).collect();
        assert_eq!(days, vec![1, 2, 3, 3, 3, 3, 3, 3, 3, 3]);
        assert!(w.windows.iter().all(|x| x.n_flagged() <= 3));
    }

    #[test]
    fn unflagged_queries_only_extend_the_range() {
        let (zm, d0) = setup();
        let qs = vec![rec(d0, "10001", Label::A1), rec(d0 + Duration::days(5), "10001", Label::NonIli)];
        let w = build_windows(&qs, &zm, 3);
        assert_eq!(w.windows.len(), 6);
        assert_eq!(w.windows[5].n_flagged(), 0);
        assert!(build_windows(&[], &zm, 3).windows.is_empty());
    }
}
