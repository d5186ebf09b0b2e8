//! Reported-case data ingestion: a simple long-format CSV and the JHU CSSE
//! wide-format global time series.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use csv::StringRecord;

use crate::error::{KecError, Result};
use crate::real::{r, Real};

/// Whether the `infected` column counts currently active or cumulative cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfectedKind {
    Active,
    Cumulative,
}

/// Daily reported infected/recovered counts for one region.
///
/// Counts are stored as population fractions when a population was supplied
/// at load time, otherwise as raw counts.
#[derive(Debug, Clone, PartialEq)]
pub struct EpiSeries<R> {
    pub region: String,
    pub dates: Vec<NaiveDate>,
    pub infected: Vec<R>,
    pub recovered: Vec<R>,
}

impl<R: Real> EpiSeries<R> {
    pub fn validate(&self) -> Result<()> {
        if self.dates.len() != self.infected.len() || self.dates.len() != self.recovered.len() {
            return Err(KecError::LengthMismatch {
                expected: self.dates.len(),
                got: self.infected.len().min(self.recovered.len()),
            });
        }
        if self.dates.is_empty() {
            return Err(KecError::Data(format!("series for {} is empty", self.region)));
        }
        for w in self.dates.windows(2) {
            if (w[1] - w[0]).num_days() != 1 {
                return Err(KecError::Data(format!(
                    "dates must be consecutive days, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        for (k, (&i, &rec)) in self.infected.iter().zip(&self.recovered).enumerate() {
            if !(i >= R::zero()) || !(rec >= R::zero()) {
                return Err(KecError::Data(format!(
                    "negative count on {}: infected = {i}, recovered = {rec}",
                    self.dates[k]
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Index of `date` within the series.
    pub fn index_of(&self, date: NaiveDate) -> Result<usize> {
        let first = self.dates[0];
        let off = (date - first).num_days();
        if off < 0 || off as usize >= self.dates.len() {
            return Err(KecError::Data(format!(
                "date {date} outside the series range {first}..={}",
                self.dates[self.dates.len() - 1]
            )));
        }
        Ok(off as usize)
    }

    /// Inclusive sub-series between two dates.
    pub fn window(&self, start: NaiveDate, end: NaiveDate) -> Result<EpiSeries<R>> {
        let i0 = self.index_of(start)?;
        let i1 = self.index_of(end)?;
        if i1 < i0 {
            return Err(KecError::Data(format!("window {start}..={end} is empty")));
        }
        Ok(EpiSeries {
            region: self.region.clone(),
            dates: self.dates[i0..=i1].to_vec(),
            infected: self.infected[i0..=i1].to_vec(),
            recovered: self.recovered[i0..=i1].to_vec(),
        })
    }

    fn rescale(&mut self, population: Option<R>) -> Result<()> {
        if let Some(pop) = population {
            if pop <= R::zero() {
                return Err(KecError::InvalidParameter(format!(
                    "population {pop} must be positive"
                )));
            }
            for v in self.infected.iter_mut().chain(self.recovered.iter_mut()) {
                *v = *v / pop;
            }
        }
        Ok(())
    }
}

fn parse_count<R: Real>(field: &str, line: usize, col: &str) -> Result<R> {
    let v: f64 = field.trim().parse().map_err(|_| {
        KecError::Data(format!("line {line}: cannot parse {col} value {field:?}"))
    })?;
    if v < 0.0 {
        return Err(KecError::Data(format!("line {line}: negative {col} count {v}")));
    }
    Ok(r(v))
}

/// Long-format CSV with header `date,infected,recovered`, dates as
/// YYYY-MM-DD, one row per day.
pub fn load_simple_csv<R: Real>(
    path: &Path,
    region: &str,
    population: Option<R>,
) -> Result<EpiSeries<R>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| KecError::Data(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| KecError::Data(format!("{}: {e}", path.display())))?
        .clone();
    let expected = ["date", "infected", "recovered"];
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(KecError::Data(format!(
            "expected header date,infected,recovered, got {}",
            got.join(",")
        )));
    }
    let mut series = EpiSeries {
        region: region.to_string(),
        dates: Vec::new(),
        infected: Vec::new(),
        recovered: Vec::new(),
    };
    for (k, row) in reader.records().enumerate() {
        let line = k + 2; // header is line 1
        let row = row.map_err(|e| KecError::Data(format!("line {line}: {e}")))?;
        if row.len() != 3 {
            return Err(KecError::Data(format!("line {line}: expected 3 fields, got {}", row.len())));
        }
        let date = NaiveDate::parse_from_str(row[0].trim(), "%Y-%m-%d")
            .map_err(|_| KecError::Data(format!("line {line}: bad date {:?}", &row[0])))?;
        series.dates.push(date);
        series.infected.push(parse_count(&row[1], line, "infected")?);
        series.recovered.push(parse_count(&row[2], line, "recovered")?);
    }
    series.rescale(population)?;
    series.validate()?;
    Ok(series)
}

/// Parse one JHU wide-format file, summing all rows of `region` over the
/// province column. Returns date -> count.
fn load_jhu_wide(path: &Path, region: &str) -> Result<BTreeMap<NaiveDate, f64>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| KecError::Data(format!("{}: {e}", path.display())))?;
    let headers: StringRecord = reader
        .headers()
        .map_err(|e| KecError::Data(format!("{}: {e}", path.display())))?
        .clone();
    if headers.len() < 5 {
        return Err(KecError::Data(format!(
            "{}: expected JHU wide layout with date columns after Long",
            path.display()
        )));
    }
    let mut dates = Vec::with_capacity(headers.len() - 4);
    for h in headers.iter().skip(4) {
        let d = NaiveDate::parse_from_str(h.trim(), "%m/%d/%y")
            .map_err(|_| KecError::Data(format!("{}: bad date column {h:?}", path.display())))?;
        dates.push(d);
    }
    let mut totals = vec![0.0f64; dates.len()];
    let mut found = false;
    for (k, row) in reader.records().enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| KecError::Data(format!("line {line}: {e}")))?;
        if row.get(1).map(str::trim) != Some(region) {
            continue;
        }
        found = true;
        for (c, slot) in totals.iter_mut().enumerate() {
            let field = row.get(c + 4).ok_or_else(|| {
                KecError::Data(format!("line {line}: missing column {}", c + 5))
            })?;
            let v: f64 = field.trim().parse().map_err(|_| {
                KecError::Data(format!("line {line}: cannot parse count {field:?}"))
            })?;
            *slot += v;
        }
    }
    if !found {
        return Err(KecError::Data(format!(
            "region {region:?} not present in {}",
            path.display()
        )));
    }
    Ok(dates.into_iter().zip(totals).collect())
}

/// JHU CSSE global time series: the wide confirmed and recovered files,
/// aligned on their common dates. `Active` infected is confirmed − recovered
/// (floored at zero against reporting glitches); `Cumulative` keeps the raw
/// confirmed counts.
pub fn load_jhu_csv<R: Real>(
    confirmed_path: &Path,
    recovered_path: &Path,
    region: &str,
    kind: InfectedKind,
    population: Option<R>,
) -> Result<EpiSeries<R>> {
    let confirmed = load_jhu_wide(confirmed_path, region)?;
    let recovered = load_jhu_wide(recovered_path, region)?;
    let mut series = EpiSeries {
        region: region.to_string(),
        dates: Vec::new(),
        infected: Vec::new(),
        recovered: Vec::new(),
    };
    for (&date, &conf) in &confirmed {
        let Some(&rec) = recovered.get(&date) else { continue };
        let infected = match kind {
            InfectedKind::Active => (conf - rec).max(0.0),
            InfectedKind::Cumulative => conf,
        };
        series.dates.push(date);
        series.infected.push(r(infected));
        series.recovered.push(r(rec));
    }
    if series.dates.is_empty() {
        return Err(KecError::Data(format!(
            "confirmed and recovered files share no dates for {region:?}"
        )));
    }
    series.rescale(population)?;
    series.validate()?;
    Ok(series)
}
