use std::fmt;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};

use crate::casecontrol::logit;
use crate::error::{Error, Result};

/// Clamp applied to shares before the logit.
pub const LOGIT_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesMode {
    Rate,
    Count,
}

impl fmt::Display for SeriesMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SeriesMode::Rate => "rate",
            SeriesMode::Count => "count",
        })
    }
}

impl FromStr for SeriesMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rate" => Ok(SeriesMode::Rate),
            "count" => Ok(SeriesMode::Count),
            other => Err(Error::Config(format!("unknown series mode `{other}`"))),
        }
    }
}

/// Weekly ILI observations for one geography.
#[derive(Debug, Clone, PartialEq)]
pub struct IliSeries {
    geo: String,
    mode: SeriesMode,
    weeks: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl IliSeries {
    /// Weeks must be consecutive (7 days apart).
    pub fn new(geo: impl Into<String>, mode: SeriesMode, weeks: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if weeks.len() != values.len() {
            return Err(Error::Domain(format!("{} weeks but {} values", weeks.len(), values.len())));
        }
        if let Some(w) = weeks.windows(2).find(|w| w[1] - w[0] != Duration::days(7)) {
            return Err(Error::Domain(format!("weeks {} and {} are not consecutive", w[0], w[1])));
        }
        for (w, &v) in weeks.iter().zip(&values) {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!("week {w}: value {v} must be finite and non-negative")));
            }
            if mode == SeriesMode::Count && v.fract() != 0.0 {
                return Err(Error::Domain(format!("week {w}: count {v} is not an integer")));
            }
        }
        Ok(IliSeries {
            geo: geo.into(),
            mode,
            weeks,
            values,
        })
    }

    pub fn geo(&self) -> &str {
        &self.geo
    }

    pub fn mode(&self) -> SeriesMode {
        self.mode
    }

    pub fn weeks(&self) -> &[NaiveDate] {
        &self.weeks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// First `n` weeks.
    pub fn truncated(&self, n: usize) -> IliSeries {
        let n = n.min(self.len());
        IliSeries {
            geo: self.geo.clone(),
            mode: self.mode,
            weeks: self.weeks[..n].to_vec(),
            values: self.values[..n].to_vec(),
        }
    }

    pub fn position(&self, week: NaiveDate) -> Option<usize> {
        self.weeks.binary_search(&week).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExogKind {
    Mrp,
    A1Mean,
    A1Panel,
}

/// Exogenous columns aligned week-for-week with an [`IliSeries`]; gaps are
/// explicit `None`s.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogSignal {
    pub kind: ExogKind,
    pub names: Vec<String>,
    pub columns: Vec<Vec<Option<f64>>>,
}

impl ExogSignal {
    pub fn new(kind: ExogKind, names: Vec<String>, columns: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Domain("exogenous names and columns differ in number".into()));
        }
        if let Some(c) = columns.first() {
            if columns.iter().any(|x| x.len() != c.len()) {
                return Err(Error::Domain("exogenous columns differ in length".into()));
            }
        }
        Ok(ExogSignal { kind, names, columns })
    }

    pub fn single(kind: ExogKind, name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        ExogSignal {
            kind,
            names: vec![name.into()],
            columns: vec![values],
        }
    }

    /// Aligns a dated series onto `weeks`; absent weeks become `None`.
    pub fn align(kind: ExogKind, name: impl Into<String>, weeks: &[NaiveDate], dated: &[(NaiveDate, Option<f64>)]) -> Self {
        let lookup: std::collections::HashMap<NaiveDate, Option<f64>> = dated.iter().copied().collect();
        let values = weeks.iter().map(|w| lookup.get(w).copied().flatten()).collect();
        Self::single(kind, name, values)
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }
}

/// Weekly A1 counts per query string plus the flagged totals they are
/// shares of.
#[derive(Debug, Clone, PartialEq)]
pub struct A1Panel {
    pub weeks: Vec<NaiveDate>,
    pub queries: Vec<String>,
    /// `counts[query][week]`.
    pub counts: Vec<Vec<f64>>,
    pub denominators: Vec<f64>,
}

impl A1Panel {
    /// Logit share columns for `queries` over `range` of weeks.
    pub fn logit_columns(&self, query_idx: &[usize], range: std::ops::Range<usize>) -> Vec<Vec<Option<f64>>> {
        query_idx
            .iter()
            .map(|&q| logit_volume(&self.counts[q][range.clone()], &self.denominators[range.clone()]))
            .collect()
    }

    /// Queries with nonzero total volume over `range`.
    pub fn active_queries(&self, range: std::ops::Range<usize>) -> Vec<usize> {
        (0..self.queries.len())
            .filter(|&q| self.counts[q][range.clone()].iter().sum::<f64>() > 0.0)
            .collect()
    }

    /// Re-indexes onto `weeks`; weeks without panel data get a zero
    /// denominator (missing).
    pub fn aligned_to(&self, weeks: &[NaiveDate]) -> A1Panel {
        let pos: Vec<Option<usize>> = weeks.iter().map(|w| self.weeks.binary_search(w).ok()).collect();
        A1Panel {
            weeks: weeks.to_vec(),
            queries: self.queries.clone(),
            counts: self
                .counts
                .iter()
                .map(|c| pos.iter().map(|p| p.map_or(0.0, |i| c[i])).collect())
                .collect(),
            denominators: pos.iter().map(|p| p.map_or(0.0, |i| self.denominators[i])).collect(),
        }
    }
}

/// `logit(clamp(count / denominator))`; zero denominators give `None`.
pub fn logit_volume(counts: &[f64], denominators: &[f64]) -> Vec<Option<f64>> {
    counts
        .iter()
        .zip(denominators)
        .map(|(&c, &d)| (d > 0.0).then(|| logit((c / d).clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP))))
        .collect()
}

/// What [`fill_gaps`] did to a column.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FillReport {
    pub interpolated: usize,
    pub carried: usize,
}

/// Fills interior gaps by linear interpolation and edge gaps with the
/// nearest observation. Errors if the column has no observation at all.
pub fn fill_gaps(values: &[Option<f64>]) -> Result<(Vec<f64>, FillReport)> {
    let known: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    let (Some(&first), Some(&last)) = (known.first(), known.last()) else {
        return Err(Error::MissingExog("exogenous column has no observed values in the window".into()));
    };
    let mut out = vec![0.0; values.len()];
    let mut report = FillReport::default();
    for i in 0..values.len() {
        out[i] = if let Some(v) = values[i] {
            v
        } else if i < first {
            report.carried += 1;
            values[first].unwrap()
        } else if i > last {
            report.carried += 1;
            values[last].unwrap()
        } else {
            report.interpolated += 1;
            let k = known.partition_point(|&j| j < i);
            let (a, b) = (known[k - 1], known[k]);
            let (va, vb) = (values[a].unwrap(), values[b].unwrap());
            va + (vb - va) * (i - a) as f64 / (b - a) as f64
        };
    }
    Ok((out, report))
}
