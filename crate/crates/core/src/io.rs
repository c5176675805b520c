//! CSV readers and writers for every file the pipeline consumes or emits.
//!
//! Readers report schema problems as `file:line:column`. Writers go through
//! a temporary file in the target directory and a rename, so a failed run
//! never leaves a partial file behind.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime};
use csv::StringRecord;

use crate::casecontrol::CaseControlSample;
use crate::error::{Error, Result};
use crate::eval::MetricRow;
use crate::forecast::{A1Panel, ForecastRow, IliSeries, ModelFamily, SeriesMode};
use crate::mrp::{bin_census, CellKey, Census, CensusCell, Scope, SignalRow, StateCode, ZipCensusRow, ZipMap};
use crate::taxonomy::{QueryRecord, Zipcode};

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(tmp.path(), std::fs::Permissions::from_mode(0o644)).map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Serializes a header and rows as RFC-4180 CSV and writes atomically.
pub fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    };
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    write_atomic(path, &bytes)
}

/// A parsed CSV file with its header and 1-based source line numbers.
pub struct Table {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<(u64, StringRecord)>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, path)
    }

    pub fn from_reader(reader: impl std::io::Read, path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let to_schema = |e: csv::Error| {
            let line = e.position().map_or(0, |p| p.line());
            Error::schema(path, line, 0, e.to_string())
        };
        let headers: Vec<String> = r.headers().map_err(to_schema)?.iter().map(|h| h.trim().to_owned()).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(to_schema)?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Table {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Indices of the required columns; all missing names in one error.
    pub fn require(&self, names: &[&str]) -> Result<Vec<usize>> {
        let missing: Vec<&str> = names.iter().copied().filter(|n| self.column(n).is_none()).collect();
        if !missing.is_empty() {
            return Err(Error::schema(
                &self.path,
                1,
                0,
                format!("missing columns {}", missing.join(", ")),
            ));
        }
        Ok(names.iter().map(|n| self.column(n).unwrap()).collect())
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn rows(&self) -> &[(u64, StringRecord)] {
        &self.rows
    }

    pub fn error(&self, line: u64, col: usize, message: impl Into<String>) -> Error {
        Error::schema(&self.path, line, col + 1, message)
    }

    pub fn raw<'a>(&self, row: &'a (u64, StringRecord), col: usize) -> Result<&'a str> {
        row.1
            .get(col)
            .map(str::trim)
            .ok_or_else(|| self.error(row.0, col, format!("missing field `{}`", self.headers[col])))
    }

    pub fn parse<T: FromStr>(&self, row: &(u64, StringRecord), col: usize) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(row, col)?;
        raw.parse::<T>()
            .map_err(|e| self.error(row.0, col, format!("{}: cannot parse `{raw}`: {e}", self.headers[col])))
    }

    /// Like [`Table::parse`] but rejects NaN and infinities.
    pub fn parse_f64(&self, row: &(u64, StringRecord), col: usize) -> Result<f64> {
        let v: f64 = self.parse(row, col)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.error(row.0, col, format!("{}: value must be finite", self.headers[col])))
        }
    }

    fn path(&self) -> &Path {
        &self.path
    }
}

/// Integer unix seconds, RFC 3339, or `YYYY-MM-DD HH:MM:SS` (UTC).
pub fn parse_timestamp(s: &str) -> std::result::Result<i64, String> {
    if let Ok(v) = s.parse::<i64>() {
        return Ok(v);
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.timestamp());
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S")
        .map(|t| t.and_utc().timestamp())
        .map_err(|_| "expected unix seconds or an RFC 3339 time".to_owned())
}

pub fn format_timestamp(ts: i64) -> String {
    DateTime::from_timestamp(ts, 0)
        .map(|t| t.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| ts.to_string())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `timestamp,zipcode,raw_text[,label]`. Rows without a label column (or
/// with an empty label) are `UNLABELED`.
pub fn read_queries(path: &Path) -> Result<Vec<QueryRecord>> {
    let t = Table::read(path)?;
    let cols = t.require(&["timestamp", "zipcode", "raw_text"])?;
    let label_col = t.column("label");
    let mut out = Vec::with_capacity(t.rows().len());
    for row in t.rows() {
        let raw_ts = t.raw(row, cols[0])?;
        let ts = parse_timestamp(raw_ts).map_err(|e| t.error(row.0, cols[0], format!("timestamp `{raw_ts}`: {e}")))?;
        let zip = Zipcode::new(t.raw(row, cols[1])?).map_err(|e| t.error(row.0, cols[1], e.to_string()))?;
        let text = row.1.get(cols[2]).unwrap_or_default();
        let mut q = QueryRecord::new(ts, zip, text);
        if let Some(c) = label_col {
            if !t.raw(row, c)?.is_empty() {
                q.label = t.parse(row, c)?;
            }
        }
        out.push(q);
    }
    Ok(out)
}

pub fn write_queries(path: &Path, queries: &[QueryRecord], with_label: bool) -> Result<()> {
    let header: &[&str] = if with_label {
        &["timestamp", "zipcode", "raw_text", "label"]
    } else {
        &["timestamp", "zipcode", "raw_text"]
    };
    write_rows(
        path,
        header,
        queries.iter().map(|q| {
            let mut r = vec![format_timestamp(q.timestamp), q.zipcode.to_string(), q.raw_text.clone()];
            if with_label {
                r.push(q.label.to_string());
            }
            r
        }),
    )
}

fn cell_key(t: &Table, row: &(u64, StringRecord), cols: &[usize]) -> Result<CellKey> {
    let state = StateCode::new(t.raw(row, cols[0])?).map_err(|e| t.error(row.0, cols[0], e.to_string()))?;
    let edu: u8 = t.parse(row, cols[1])?;
    let age: u8 = t.parse(row, cols[2])?;
    let child: u8 = t.parse(row, cols[3])?;
    CellKey::new(state, edu, age, child).map_err(|e| t.error(row.0, cols[1], e.to_string()))
}

/// Pre-binned `state,edu_q,age_band,child_q,n_zip,mean_income`.
pub fn read_cells(path: &Path) -> Result<Census> {
    let t = Table::read(path)?;
    cells_from_table(&t)
}

fn cells_from_table(t: &Table) -> Result<Census> {
    let cols = t.require(&["state", "edu_q", "age_band", "child_q", "n_zip", "mean_income"])?;
    let mut cells = Vec::new();
    for row in t.rows() {
        let key = cell_key(t, row, &cols[..4])?;
        let n_zip = t.parse_f64(row, cols[4])?;
        if n_zip < 0.0 {
            return Err(t.error(row.0, cols[4], "n_zip must be non-negative"));
        }
        cells.push(CensusCell {
            key,
            n_zip,
            mean_income: t.parse_f64(row, cols[5])?,
        });
    }
    Census::new(cells).map_err(|e| Error::schema(t.path(), 0, 0, e.to_string()))
}

pub fn write_cells(path: &Path, census: &Census) -> Result<()> {
    write_rows(
        path,
        &["state", "edu_q", "age_band", "child_q", "n_zip", "mean_income"],
        census.cells().iter().map(|c| {
            vec![
                c.key.state.to_string(),
                c.key.edu.to_string(),
                c.key.age.to_string(),
                c.key.child.to_string(),
                c.n_zip.to_string(),
                c.mean_income.to_string(),
            ]
        }),
    )
}

/// Zipcode-level `zipcode,state,edu_quartile_source,age_band_shares,
/// children_quartile_source,mean_income`, with the age band shares
/// separated by `;` inside their field.
pub fn read_zip_census(path: &Path) -> Result<Vec<ZipCensusRow>> {
    let t = Table::read(path)?;
    zip_rows_from_table(&t)
}

fn zip_rows_from_table(t: &Table) -> Result<Vec<ZipCensusRow>> {
    let cols = t.require(&[
        "zipcode",
        "state",
        "edu_quartile_source",
        "age_band_shares",
        "children_quartile_source",
        "mean_income",
    ])?;
    let mut out = Vec::new();
    for row in t.rows() {
        let zipcode = Zipcode::new(t.raw(row, cols[0])?).map_err(|e| t.error(row.0, cols[0], e.to_string()))?;
        let state = StateCode::new(t.raw(row, cols[1])?).map_err(|e| t.error(row.0, cols[1], e.to_string()))?;
        let shares = t
            .raw(row, cols[3])?
            .split(';')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| t.error(row.0, cols[3], format!("age_band_shares: {e}")))?;
        out.push(ZipCensusRow {
            zipcode,
            state,
            edu_source: t.parse_f64(row, cols[2])?,
            age_band_shares: shares,
            children_source: t.parse_f64(row, cols[4])?,
            mean_income: t.parse_f64(row, cols[5])?,
        });
    }
    Ok(out)
}

/// Either census layout, detected from the header. The zipcode-level
/// layout also yields the zip map implied by the binning.
pub fn read_census(path: &Path) -> Result<(Census, Option<ZipMap>)> {
    let t = Table::read(path)?;
    if t.column("zipcode").is_some() {
        let rows = zip_rows_from_table(&t)?;
        let (census, zipmap) = bin_census(&rows).map_err(|e| Error::schema(path, 0, 0, e.to_string()))?;
        Ok((census, Some(zipmap)))
    } else {
        Ok((cells_from_table(&t)?, None))
    }
}

/// `zipcode,state,edu_q,age_band,child_q`.
pub fn read_zipmap(path: &Path) -> Result<ZipMap> {
    let t = Table::read(path)?;
    let cols = t.require(&["zipcode", "state", "edu_q", "age_band", "child_q"])?;
    let mut map = ZipMap::new();
    for row in t.rows() {
        let zip = Zipcode::new(t.raw(row, cols[0])?).map_err(|e| t.error(row.0, cols[0], e.to_string()))?;
        let key = cell_key(&t, row, &cols[1..])?;
        if map.insert(zip.clone(), key).is_some() {
            return Err(t.error(row.0, cols[0], format!("duplicate zipcode {zip}")));
        }
    }
    Ok(map)
}

pub fn write_zipmap(path: &Path, zipmap: &ZipMap) -> Result<()> {
    let sorted: BTreeMap<&Zipcode, &CellKey> = zipmap.iter().collect();
    write_rows(
        path,
        &["zipcode", "state", "edu_q", "age_band", "child_q"],
        sorted.into_iter().map(|(z, k)| {
            vec![
                z.to_string(),
                k.state.to_string(),
                k.edu.to_string(),
                k.age.to_string(),
                k.child.to_string(),
            ]
        }),
    )
}

/// `week_start,value[,geo,mode]`, one series per geo (sorted by geo).
/// Without a geo column the series is `US`; without a mode column the
/// mode is `default_mode`. Weeks must be consecutive Sundays.
pub fn read_ili(path: &Path, default_mode: SeriesMode) -> Result<Vec<IliSeries>> {
    let t = Table::read(path)?;
    let cols = t.require(&["week_start", "value"])?;
    let (geo_col, mode_col) = (t.column("geo"), t.column("mode"));
    let mut by_geo: BTreeMap<String, (SeriesMode, Vec<(NaiveDate, f64, u64)>)> = BTreeMap::new();
    for row in t.rows() {
        let week: NaiveDate = t.parse(row, cols[0])?;
        if !crate::calendar::is_sunday(week) {
            return Err(t.error(row.0, cols[0], format!("week_start {week} is not a Sunday")));
        }
        let value = t.parse_f64(row, cols[1])?;
        let geo = match geo_col {
            Some(c) => t.raw(row, c)?.to_owned(),
            None => "US".to_owned(),
        };
        let mode = match mode_col {
            Some(c) => t.parse(row, c)?,
            None => default_mode,
        };
        let entry = by_geo.entry(geo.clone()).or_insert((mode, Vec::new()));
        if entry.0 != mode {
            return Err(t.error(row.0, mode_col.unwrap_or(0), format!("geo {geo} mixes modes")));
        }
        entry.1.push((week, value, row.0));
    }
    let mut out = Vec::new();
    for (geo, (mode, mut rows)) in by_geo {
        rows.sort_by_key(|r| r.0);
        for w in rows.windows(2) {
            if w[1].0 - w[0].0 != Duration::days(7) {
                return Err(t.error(
                    w[1].2,
                    cols[0],
                    format!("geo {geo}: week {} does not follow {}", w[1].0, w[0].0),
                ));
            }
        }
        let weeks = rows.iter().map(|r| r.0).collect();
        let values = rows.iter().map(|r| r.1).collect();
        out.push(IliSeries::new(geo, mode, weeks, values).map_err(|e| Error::schema(path, 0, 0, e.to_string()))?);
    }
    Ok(out)
}

pub fn write_ili(path: &Path, series: &[IliSeries]) -> Result<()> {
    write_rows(
        path,
        &["week_start", "value", "geo", "mode"],
        series.iter().flat_map(|s| {
            s.weeks()
                .iter()
                .zip(s.values())
                .map(|(w, v)| vec![w.to_string(), v.to_string(), s.geo().to_owned(), s.mode().to_string()])
                .collect::<Vec<_>>()
        }),
    )
}

/// Long `week_start,query,count,denominator`. A row with an empty query
/// carries a denominator for a week without A1 counts.
pub fn read_a1_panel(path: &Path) -> Result<A1Panel> {
    let t = Table::read(path)?;
    let cols = t.require(&["week_start", "query", "count", "denominator"])?;
    let mut denominators: BTreeMap<NaiveDate, (f64, u64)> = BTreeMap::new();
    let mut counts: BTreeMap<(String, NaiveDate), f64> = BTreeMap::new();
    let mut queries = BTreeSet::new();
    for row in t.rows() {
        let week: NaiveDate = t.parse(row, cols[0])?;
        let count = t.parse_f64(row, cols[2])?;
        let denom = t.parse_f64(row, cols[3])?;
        if count < 0.0 || denom < 0.0 {
            return Err(t.error(row.0, cols[2], "counts must be non-negative"));
        }
        match denominators.get(&week) {
            Some(&(d, first)) if d != denom => {
                return Err(t.error(
                    row.0,
                    cols[3],
                    format!("denominator {denom} for {week} differs from {d} on line {first}"),
                ))
            }
            _ => {
                denominators.entry(week).or_insert((denom, row.0));
            }
        }
        let query = t.raw(row, cols[1])?;
        if !query.is_empty() {
            queries.insert(query.to_owned());
            if counts.insert((query.to_owned(), week), count).is_some() {
                return Err(t.error(row.0, cols[1], format!("duplicate row for `{query}` in {week}")));
            }
        }
    }
    let weeks: Vec<NaiveDate> = denominators.keys().copied().collect();
    let queries: Vec<String> = queries.into_iter().collect();
    let counts = queries
        .iter()
        .map(|q| weeks.iter().map(|w| counts.get(&(q.clone(), *w)).copied().unwrap_or(0.0)).collect())
        .collect();
    Ok(A1Panel {
        denominators: weeks.iter().map(|w| denominators[w].0).collect(),
        weeks,
        queries,
        counts,
    })
}

pub fn write_a1_panel(path: &Path, panel: &A1Panel) -> Result<()> {
    let mut rows = Vec::new();
    for (i, w) in panel.weeks.iter().enumerate() {
        let denom = panel.denominators[i].to_string();
        if panel.queries.is_empty() {
            rows.push(vec![w.to_string(), String::new(), "0".into(), denom]);
            continue;
        }
        for (q, c) in panel.queries.iter().zip(&panel.counts) {
            rows.push(vec![w.to_string(), q.clone(), c[i].to_string(), denom.clone()]);
        }
    }
    write_rows(path, &["week_start", "query", "count", "denominator"], rows)
}

/// `y,<covariates...>` with `y` in {0, 1}.
pub fn read_casecontrol(path: &Path) -> Result<CaseControlSample> {
    let t = Table::read(path)?;
    let y_col = t.require(&["y"])?[0];
    let cov: Vec<usize> = (0..t.headers().len()).filter(|&c| c != y_col).collect();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for row in t.rows() {
        let v: u8 = t.parse(row, y_col)?;
        if v > 1 {
            return Err(t.error(row.0, y_col, "y must be 0 or 1"));
        }
        y.push(v);
        rows.push(cov.iter().map(|&c| t.parse_f64(row, c)).collect::<Result<Vec<_>>>()?);
    }
    let names = cov.iter().map(|&c| t.headers()[c].clone()).collect();
    CaseControlSample::new(names, rows, y).map_err(|e| Error::schema(path, 0, 0, e.to_string()))
}

pub fn write_casecontrol(path: &Path, sample: &CaseControlSample) -> Result<()> {
    let mut header = vec!["y"];
    header.extend(sample.columns().iter().map(String::as_str));
    write_rows(
        path,
        &header,
        sample.rows().iter().zip(sample.outcomes()).map(|(r, y)| {
            let mut out = vec![y.to_string()];
            out.extend(r.iter().map(|v| v.to_string()));
            out
        }),
    )
}

pub fn write_signal(path: &Path, rows: &[SignalRow]) -> Result<()> {
    write_rows(
        path,
        &["date", "scope", "estimate", "n_flagged", "partial_flag"],
        rows.iter().map(|r| {
            vec![
                r.date.to_string(),
                r.scope.to_string(),
                fmt_opt(r.estimate),
                r.n_flagged.to_string(),
                u8::from(r.partial).to_string(),
            ]
        }),
    )
}

pub fn read_signal(path: &Path) -> Result<Vec<SignalRow>> {
    let t = Table::read(path)?;
    let cols = t.require(&["date", "scope", "estimate", "n_flagged", "partial_flag"])?;
    t.rows()
        .iter()
        .map(|row| {
            let est = t.raw(row, cols[2])?;
            let partial: u8 = t.parse(row, cols[4])?;
            Ok(SignalRow {
                date: t.parse(row, cols[0])?,
                scope: t.parse::<Scope>(row, cols[1])?,
                estimate: if est.is_empty() { None } else { Some(t.parse_f64(row, cols[2])?) },
                n_flagged: t.parse(row, cols[3])?,
                partial: partial != 0,
            })
        })
        .collect()
}

pub fn write_forecasts(path: &Path, rows: &[ForecastRow]) -> Result<()> {
    write_rows(
        path,
        &["origin_week", "horizon", "model", "geo", "forecast", "actual", "detail"],
        rows.iter().map(|r| {
            vec![
                r.origin_week.to_string(),
                r.horizon.to_string(),
                r.model.to_string(),
                r.geo.clone(),
                r.forecast.to_string(),
                r.actual.to_string(),
                r.detail.clone(),
            ]
        }),
    )
}

/// Origins are renumbered 1.. in order of origin week, which preserves
/// the joins the reports make.
pub fn read_forecasts(path: &Path) -> Result<Vec<ForecastRow>> {
    let t = Table::read(path)?;
    let cols = t.require(&["origin_week", "horizon", "model", "geo", "forecast", "actual"])?;
    let detail = t.column("detail");
    let mut rows = t
        .rows()
        .iter()
        .map(|row| {
            Ok(ForecastRow {
                origin: 0,
                origin_week: t.parse(row, cols[0])?,
                horizon: t.parse(row, cols[1])?,
                model: t.parse::<ModelFamily>(row, cols[2])?,
                geo: t.raw(row, cols[3])?.to_owned(),
                forecast: t.parse_f64(row, cols[4])?,
                actual: t.parse_f64(row, cols[5])?,
                detail: detail.map(|c| row.1.get(c).unwrap_or_default().to_owned()).unwrap_or_default(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let weeks: BTreeSet<NaiveDate> = rows.iter().map(|r| r.origin_week).collect();
    let index: BTreeMap<NaiveDate, usize> = weeks.into_iter().enumerate().map(|(i, w)| (w, i + 1)).collect();
    for r in &mut rows {
        r.origin = index[&r.origin_week];
    }
    Ok(rows)
}

/// `model,geo,horizon[,season],rmse,mape,mae,pearson,n`; the season column
/// is written when any row carries a season.
pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let seasonal = rows.iter().any(|r| r.season.is_some());
    let mut header = vec!["model", "geo", "horizon"];
    if seasonal {
        header.push("season");
    }
    header.extend(["rmse", "mape", "mae", "pearson", "n"]);
    write_rows(
        path,
        &header,
        rows.iter().map(|r| {
            let mut out = vec![r.model.to_string(), r.geo.clone(), r.horizon.to_string()];
            if seasonal {
                out.push(r.season.clone().unwrap_or_default());
            }
            out.extend([
                r.rmse.to_string(),
                fmt_opt(r.mape),
                r.mae.to_string(),
                fmt_opt(r.pearson),
                r.n.to_string(),
            ]);
            out
        }),
    )
}
