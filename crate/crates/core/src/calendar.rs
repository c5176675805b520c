//! Calendar helpers: UTC days and MMWR (CDC epidemiological) weeks.
//!
//! MMWR weeks start on Sunday. Week 1 of a year is the first Sunday-start
//! week containing at least four days of that calendar year, which is the
//! week containing January 4th.

use chrono::{Datelike, Duration, NaiveDate, Weekday};

const SECONDS_PER_DAY: i64 = 86_400;

/// UTC calendar date of a unix timestamp (seconds).
pub fn utc_date(timestamp: i64) -> NaiveDate {
    let days = timestamp.div_euclid(SECONDS_PER_DAY);
    NaiveDate::from_ymd_opt(1970, 1, 1).unwrap() + Duration::days(days)
}

/// Unix timestamp of midnight UTC on `date`.
pub fn day_start_timestamp(date: NaiveDate) -> i64 {
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap();
    (date - epoch).num_days() * SECONDS_PER_DAY
}

/// Sunday on or before `date`.
pub fn week_start(date: NaiveDate) -> NaiveDate {
    let offset = date.weekday().num_days_from_sunday() as i64;
    date - Duration::days(offset)
}

fn week_one_start(year: i32) -> NaiveDate {
    week_start(NaiveDate::from_ymd_opt(year, 1, 4).unwrap())
}

/// MMWR year and week number (1..=53) of `date`.
pub fn mmwr_week(date: NaiveDate) -> (i32, u32) {
    let start = week_start(date);
    let mut year = date.year();
    if start >= week_one_start(year + 1) {
        year += 1;
    } else if start < week_one_start(year) {
        year -= 1;
    }
    let week = (start - week_one_start(year)).num_days() / 7 + 1;
    (year, week as u32)
}

/// Season label for a date under a season that runs from MMWR week
/// `start_week` of one year to `end_week` of the next, e.g. "2015/2016".
/// Dates outside the season window return `None`.
pub fn season_of(date: NaiveDate, start_week: u32, end_week: u32) -> Option<String> {
    let (year, week) = mmwr_week(date);
    if week >= start_week {
        Some(format!("{}/{}", year, year + 1))
    } else if week <= end_week {
        Some(format!("{}/{}", year - 1, year))
    } else {
        None
    }
}

pub fn is_sunday(date: NaiveDate) -> bool {
    date.weekday() == Weekday::Sun
}
