//! Poststratification cells and the census tables that weight them.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::casecontrol::percentile_sorted;
use crate::error::{Error, Result};
use crate::taxonomy::Zipcode;

pub const QUARTILES: u8 = 4;
pub const DEFAULT_AGE_BANDS: [&str; 4] = ["18-29", "30-44", "45-64", "65+"];
/// Upper bound on configurable age bands.
pub const MAX_AGE_BANDS: u8 = 16;

/// Two-letter uppercase state (or district) code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateCode(String);

impl StateCode {
    pub fn new(code: &str) -> Result<Self> {
        if code.len() == 2 && code.bytes().all(|b| b.is_ascii_uppercase()) {
            Ok(StateCode(code.to_owned()))
        } else {
            Err(Error::Domain(format!("invalid state code `{code}`")))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StateCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// State x education quartile x age band x children-per-household quartile.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub state: StateCode,
    pub edu: u8,
    pub age: u8,
    pub child: u8,
}

impl CellKey {
    pub fn new(state: StateCode, edu: u8, age: u8, child: u8) -> Result<Self> {
        let quartile = 1..=QUARTILES;
        if !quartile.contains(&edu) {
            return Err(Error::Domain(format!("education quartile {edu} outside 1..=4")));
        }
        if !quartile.contains(&child) {
            return Err(Error::Domain(format!("children quartile {child} outside 1..=4")));
        }
        if !(1..=MAX_AGE_BANDS).contains(&age) {
            return Err(Error::Domain(format!("age band {age} outside 1..={MAX_AGE_BANDS}")));
        }
        Ok(CellKey {
            state,
            edu,
            age,
            child,
        })
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/e{}/a{}/c{}", self.state, self.edu, self.age, self.child)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusCell {
    pub key: CellKey,
    /// Number of zipcodes in the cell.
    pub n_zip: f64,
    pub mean_income: f64,
}

/// The cell universe with its poststratification weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Census {
    cells: Vec<CensusCell>,
}

impl Census {
    pub fn new(mut cells: Vec<CensusCell>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InsufficientData("census has no cells".into()));
        }
        for c in &cells {
            if !(c.n_zip >= 0.0) || !c.n_zip.is_finite() {
                return Err(Error::Domain(format!("cell {} has invalid weight {}", c.key, c.n_zip)));
            }
            if !c.mean_income.is_finite() {
                return Err(Error::Domain(format!("cell {} has invalid income", c.key)));
            }
        }
        cells.sort_by(|a, b| a.key.cmp(&b.key));
        if let Some(w) = cells.windows(2).find(|w| w[0].key == w[1].key) {
            return Err(Error::Domain(format!("duplicate census cell {}", w[0].key)));
        }
        Ok(Census { cells })
    }

    /// Cells sorted by key.
    pub fn cells(&self) -> &[CensusCell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn states(&self) -> Vec<StateCode> {
        let mut s: Vec<StateCode> = self.cells.iter().map(|c| c.key.state.clone()).collect();
        s.dedup();
        s
    }

    pub fn find(&self, key: &CellKey) -> Option<&CensusCell> {
        self.cells
            .binary_search_by(|c| c.key.cmp(key))
            .ok()
            .map(|i| &self.cells[i])
    }
}

/// Zipcode to cell assignment.
pub type ZipMap = HashMap<Zipcode, CellKey>;

/// Zipcode-level census row before binning.
#[derive(Debug, Clone, PartialEq)]
pub struct ZipCensusRow {
    pub zipcode: Zipcode,
    pub state: StateCode,
    /// Share of adults with a college education.
    pub edu_source: f64,
    /// Population share of each age band.
    pub age_band_shares: Vec<f64>,
    /// Children per household.
    pub children_source: f64,
    pub mean_income: f64,
}

/// Right-closed quartile bin edges (25th, 50th and 75th percentiles).
pub fn quartile_edges(values: &[f64]) -> [f64; 3] {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    [
        percentile_sorted(&v, 0.25),
        percentile_sorted(&v, 0.5),
        percentile_sorted(&v, 0.75),
    ]
}

/// Quartile (1..=4) of `value`; boundary values fall into the lower bin.
pub fn quartile_of(value: f64, edges: &[f64; 3]) -> u8 {
    edges.iter().take_while(|&&e| value > e).count() as u8 + 1
}

/// Largest share wins; ties go to the lower band.
pub fn modal_band(shares: &[f64]) -> u8 {
    let mut best = 0;
    for (i, &s) in shares.iter().enumerate() {
        if s > shares[best] {
            best = i;
        }
    }
    best as u8 + 1
}

/// Bins zipcode rows into cells on the national quartiles and aggregates
/// zipcode counts and mean income per cell.
pub fn bin_census(rows: &[ZipCensusRow]) -> Result<(Census, ZipMap)> {
    if rows.is_empty() {
        return Err(Error::InsufficientData("no census rows".into()));
    }
    let n_bands = rows[0].age_band_shares.len();
    if n_bands == 0 || n_bands > MAX_AGE_BANDS as usize {
        return Err(Error::Domain(format!("unsupported number of age bands {n_bands}")));
    }
    if let Some(r) = rows.iter().find(|r| r.age_band_shares.len() != n_bands) {
        return Err(Error::Domain(format!(
            "zipcode {} has {} age bands (expected {n_bands})",
            r.zipcode,
            r.age_band_shares.len()
        )));
    }
    let edu_edges = quartile_edges(&rows.iter().map(|r| r.edu_source).collect::<Vec<_>>());
    let child_edges = quartile_edges(&rows.iter().map(|r| r.children_source).collect::<Vec<_>>());

    let mut zipmap = ZipMap::new();
    let mut agg: BTreeMap<CellKey, (f64, f64)> = BTreeMap::new();
    for r in rows {
        let key = CellKey::new(
            r.state.clone(),
            quartile_of(r.edu_source, &edu_edges),
            modal_band(&r.age_band_shares),
            quartile_of(r.children_source, &child_edges),
        )?;
        if zipmap.insert(r.zipcode.clone(), key.clone()).is_some() {
            return Err(Error::Domain(format!("duplicate zipcode {}", r.zipcode)));
        }
        let e = agg.entry(key).or_insert((0.0, 0.0));
        e.0 += 1.0;
        e.1 += r.mean_income;
    }
    let cells = agg
        .into_iter()
        .map(|(key, (n, income))| CensusCell {
            key,
            n_zip: n,
            mean_income: income / n,
        })
        .collect();
    Ok((Census::new(cells)?, zipmap))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(s: &str) -> StateCode {
        StateCode::new(s).unwrap()
    }

    #[test]
    fn key_ranges_enforced() {
        assert!(CellKey::new(st("NY"), 1, 1, 4).is_ok());
        assert!(CellKey::new(st("NY"), 0, 1, 1).is_err());
        assert!(CellKey::new(st("NY"), 1, 1, 5).is_err());
        assert!(CellKey::new(st("NY"), 1, 0, 1).is_err());
        assert!(StateCode::new("ny").is_err());
        assert!(StateCode::new("NYC").is_err());
    }

    #[test]
    fn quartiles_are_right_closed() {
        let v: Vec<f64> = (1..=8).map(f64::from).collect();
        let e = quartile_edges(&v);
        assert_eq!(e, [2.75, 4.5, 6.25]);
        assert_eq!(quartile_of(2.75, &e), 1);
        assert_eq!(quartile_of(2.76, &e), 2);
        assert_eq!(quartile_of(4.5, &e), 2);
        assert_eq!(quartile_of(8.0, &e), 4);
        let flat = quartile_edges(&[3.0; 5]);
        assert_eq!(quartile_of(3.0, &flat), 1);
    }

    #[test]
    fn modal_band_ties_go_low() {
        assert_eq!(modal_band(&[0.1, 0.4, 0.4, 0.1]), 2);
        assert_eq!(modal_band(&[0.7, 0.1, 0.1, 0.1]), 1);
        assert_eq!(modal_band(&[0.1, 0.1, 0.1, 0.7]), 4);
    }

    #[test]
    fn binning_aggregates_cells() {
        let rows: Vec<ZipCensusRow> = (0..8)
            .map(|i| ZipCensusRow {
                zipcode: Zipcode::new(&format!("{:05}", 10000 + i)).unwrap(),
                state: st(if i < 4 { "NY" } else { "NM" }),
                edu_source: (i % 4) as f64,
                age_band_shares: vec![0.5, 0.2, 0.2, 0.1],
                children_source: 1.0,
                mean_income: 1000.0 * i as f64,
            })
            .collect();
        let (census, zipmap) = bin_census(&rows).unwrap();
        assert_eq!(zipmap.len(), 8);
        // edu values 0,1,2,3 twice: edges 0.75, 1.5, 2.25 -> quartiles 1..4
        assert_eq!(census.len(), 8);
        let total: f64 = census.cells().iter().map(|c| c.n_zip).sum();
        assert_eq!(total, 8.0);
        let k = &zipmap[&Zipcode::new("10003").unwrap()];
        assert_eq!((k.edu, k.age, k.child), (4, 1, 1));
    }

    #[test]
    fn census_rejects_duplicates_and_bad_weights() {
        let key = CellKey::new(st("DE"), 1, 1, 1).unwrap();
        let cell = CensusCell { key: key.clone(), n_zip: 1.0, mean_income: 1.0 };
        assert!(Census::new(vec![cell.clone(), cell.clone()]).is_err());
        let bad = CensusCell { key, n_zip: -1.0, mean_income: 1.0 };
        assert!(Census::new(vec![bad]).is_err());
        assert!(Census::new(vec![]).is_err());
    }
}
