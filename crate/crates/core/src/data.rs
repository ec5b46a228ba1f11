//! Age–period mortality data: HMD 1x1 ingestion, the validated
//! [`MortalitySurface`], and log central death rates.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which value column of an HMD 1x1 table to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
    Total,
}

impl Sex {
    fn column(self) -> usize {
        match self {
            Sex::Female => 2,
            Sex::Male => 3,
            Sex::Total => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Female => "female",
            Sex::Male => "male",
            Sex::Total => "total",
        }
    }
}

impl FromStr for Sex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "female" | "f" => Ok(Sex::Female),
            "male" | "m" => Ok(Sex::Male),
            "total" | "t" => Ok(Sex::Total),
            other => Err(Error::InvalidArgument(format!("unknown gender column '{other}'"))),
        }
    }
}

/// One parsed row of an HMD table. `value` is `None` for the `.` marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmdRow {
    pub year: i32,
    pub age: u32,
    pub value: Option<f64>,
}

/// Parses an HMD 1x1 table (`Deaths_1x1.txt` / `Exposures_1x1.txt`).
///
/// The first two lines are headers. Blank lines and a `Year Age ...` column
/// header are also skipped, which covers the published files where the column
/// header is the third line. The open age group `110+` is read as 110.
pub fn parse_hmd_table(text: &str, sex: Sex) -> Result<Vec<HmdRow>> {
    let col = sex.column();
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if idx < 2 {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() || fields[0].eq_ignore_ascii_case("year") {
            continue;
        }
        if fields.len() != 5 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 5 columns, found {}", fields.len()),
            });
        }
        let year: i32 = fields[0].parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("unparsable year '{}'", fields[0]),
        })?;
        let age_field = fields[1].trim_end_matches('+');
        let age: u32 = age_field.parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("unparsable age '{}'", fields[1]),
        })?;
        let raw = fields[col];
        let value = if raw == "." {
            None
        } else {
            Some(raw.parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("unparsable value '{raw}'"),
            })?)
        };
        rows.push(HmdRow { year, age, value });
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(rows)
}

/// Deaths and central exposures on an age × year grid.
///
/// Matrices are indexed `[(age_index, year_index)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MortalitySurface {
    ages: Vec<u32>,
    years: Vec<i32>,
    deaths: DMatrix<f64>,
    exposures: DMatrix<f64>,
}

impl MortalitySurface {
    /// Validates and assembles a surface.
    pub fn new(
        ages: Vec<u32>,
        years: Vec<i32>,
        deaths: DMatrix<f64>,
        exposures: DMatrix<f64>,
    ) -> Result<Self> {
        if ages.is_empty() || years.is_empty() {
            return Err(Error::Dimension("surface needs at least one age and one year".into()));
        }
        if ages.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::InvalidArgument("ages must increase with unit step".into()));
        }
        if years.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::InvalidArgument("years must increase with unit step".into()));
        }
        let shape = (ages.len(), years.len());
        if deaths.shape() != shape || exposures.shape() != shape {
            return Err(Error::Dimension(format!(
                "expected {}x{} deaths and exposures, got {:?} and {:?}",
                shape.0,
                shape.1,
                deaths.shape(),
                exposures.shape()
            )));
        }
        for (i, &age) in ages.iter().enumerate() {
            for (j, &year) in years.iter().enumerate() {
                let e = exposures[(i, j)];
                if !(e > 0.0) || !e.is_finite() {
                    return Err(Error::NonPositiveExposure { age, year, value: e });
                }
                let d = deaths[(i, j)];
                if !(d >= 0.0) || !d.is_finite() {
                    return Err(Error::NegativeDeaths { age, year, value: d });
                }
            }
        }
        Ok(Self { ages, years, deaths, exposures })
    }

    pub fn ages(&self) -> &[u32] {
        &self.ages
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn deaths(&self) -> &DMatrix<f64> {
        &self.deaths
    }

    pub fn exposures(&self) -> &DMatrix<f64> {
        &self.exposures
    }

    pub fn n_ages(&self) -> usize {
        self.ages.len()
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn age_index(&self, age: u32) -> Option<usize> {
        self.ages.iter().position(|&a| a == age)
    }

    pub fn year_index(&self, year: i32) -> Option<usize> {
        self.years.iter().position(|&y| y == year)
    }

    /// Sub-surface restricted to `[year_from, year_to]`.
    pub fn slice_years(&self, year_from: i32, year_to: i32) -> Result<Self> {
        let (a, b) = match (self.year_index(year_from), self.year_index(year_to)) {
            (Some(a), Some(b)) if a <= b => (a, b),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "years {year_from}-{year_to} not inside {}-{}",
                    self.years[0],
                    self.years[self.years.len() - 1]
                )))
            }
        };
        let n = b - a + 1;
        Ok(Self {
            ages: self.ages.clone(),
            years: self.years[a..=b].to_vec(),
            deaths: self.deaths.columns(a, n).into_owned(),
            exposures: self.exposures.columns(a, n).into_owned(),
        })
    }

    /// Copy of this surface with the deaths matrix replaced.
    pub fn with_deaths(&self, deaths: DMatrix<f64>) -> Result<Self> {
        Self::new(self.ages.clone(), self.years.clone(), deaths, self.exposures.clone())
    }

    /// Writes the export CSV `age,year,deaths,exposures,log_rate`.
    ///
    /// Floats use the shortest round-trip representation, so
    /// [`MortalitySurface::from_csv`] reproduces the surface bit-exactly.
    /// Zero-death cells leave `log_rate` empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("age,year,deaths,exposures,log_rate\n");
        for (i, &age) in self.ages.iter().enumerate() {
            for (j, &year) in self.years.iter().enumerate() {
                let d = self.deaths[(i, j)];
                let e = self.exposures[(i, j)];
                let _ = write!(out, "{age},{year},{d},{e},");
                if d > 0.0 {
                    let _ = write!(out, "{}", (d / e).ln());
                }
                out.push('\n');
            }
        }
        out
    }

    /// Parses the export CSV written by [`MortalitySurface::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut cells: HashMap<(u32, i32), (f64, f64)> = HashMap::new();
        let mut ages = Vec::new();
        let mut years = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if idx == 0 || line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::Parse { line: idx + 1, msg: "expected 5 fields".into() });
            }
            let bad = |what: &str| Error::Parse { line: idx + 1, msg: format!("bad {what}") };
            let age: u32 = f[0].parse().map_err(|_| bad("age"))?;
            let year: i32 = f[1].parse().map_err(|_| bad("year"))?;
            let d: f64 = f[2].parse().map_err(|_| bad("deaths"))?;
            let e: f64 = f[3].parse().map_err(|_| bad("exposures"))?;
            if !ages.contains(&age) {
                ages.push(age);
            }
            if !years.contains(&year) {
                years.push(year);
            }
            cells.insert((age, year), (d, e));
        }
        if cells.is_empty() {
            return Err(Error::EmptyInput);
        }
        ages.sort_unstable();
        years.sort_unstable();
        let mut deaths = DMatrix::zeros(ages.len(), years.len());
        let mut exposures = DMatrix::zeros(ages.len(), years.len());
        for (i, &age) in ages.iter().enumerate() {
            for (j, &year) in years.iter().enumerate() {
                let (d, e) = cells.get(&(age, year)).ok_or(Error::MissingCell { age, year })?;
                deaths[(i, j)] = *d;
                exposures[(i, j)] = *e;
            }
        }
        Self::new(ages, years, deaths, exposures)
    }
}

/// Assembles a [`MortalitySurface`] over the requested rectangle from parsed
/// deaths and exposures tables.
pub fn build_surface(
    deaths: &[HmdRow],
    exposures: &[HmdRow],
    age_min: u32,
    age_max: u32,
    year_min: i32,
    year_max: i32,
) -> Result<MortalitySurface> {
    if age_min > age_max || year_min > year_max {
        return Err(Error::InvalidArgument("empty age or year range".into()));
    }
    let index = |rows: &[HmdRow]| -> HashMap<(u32, i32), Option<f64>> {
        rows.iter().map(|r| ((r.age, r.year), r.value)).collect()
    };
    let d_idx = index(deaths);
    let e_idx = index(exposures);
    let ages: Vec<u32> = (age_min..=age_max).collect();
    let years: Vec<i32> = (year_min..=year_max).collect();
    let mut d = DMatrix::zeros(ages.len(), years.len());
    let mut e = DMatrix::zeros(ages.len(), years.len());
    for (i, &age) in ages.iter().enumerate() {
        for (j, &year) in years.iter().enumerate() {
            let lookup = |idx: &HashMap<(u32, i32), Option<f64>>| {
                idx.get(&(age, year)).copied().flatten().ok_or(Error::MissingCell { age, year })
            };
            d[(i, j)] = lookup(&d_idx)?;
            e[(i, j)] = lookup(&e_idx)?;
        }
    }
    MortalitySurface::new(ages, years, d, e)
}

/// Log central death rates with zero-death cells flagged.
///
/// Flagged cells hold `-inf` in `logm`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRateSurface {
    pub ages: Vec<u32>,
    pub years: Vec<i32>,
    pub logm: DMatrix<f64>,
    pub zero_deaths: DMatrix<bool>,
}

impl LogRateSurface {
    pub fn is_flagged(&self, age_idx: usize, year_idx: usize) -> bool {
        self.zero_deaths[(age_idx, year_idx)]
    }

    pub fn has_flags(&self) -> bool {
        self.zero_deaths.iter().any(|&f| f)
    }

    /// Series for one age across all years.
    pub fn age_row(&self, age: u32) -> Option<Vec<f64>> {
        let i = self.ages.iter().position(|&a| a == age)?;
        Some(self.logm.row(i).iter().copied().collect())
    }
}

pub fn log_rates(surface: &MortalitySurface) -> LogRateSurface {
    let (na, ny) = (surface.n_ages(), surface.n_years());
    let mut logm = DMatrix::zeros(na, ny);
    let mut flags = DMatrix::from_element(na, ny, false);
    for i in 0..na {
        for j in 0..ny {
            let d = surface.deaths[(i, j)];
            if d > 0.0 {
                logm[(i, j)] = (d / surface.exposures[(i, j)]).ln();
            } else {
                logm[(i, j)] = f64::NEG_INFINITY;
                flags[(i, j)] = true;
            }
        }
    }
    LogRateSurface {
        ages: surface.ages.clone(),
        years: surface.years.clone(),
        logm,
        zero_deaths: flags,
    }
}
