//! Company registry, rating targets and market-capitalization bands.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{EsgError, Result};

pub const SMALL_CAP_LIMIT: f64 = 2e9;
pub const LARGE_CAP_LIMIT: f64 = 1e10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Company {
    pub id: String,
    pub name_long: String,
    pub name_short: String,
    /// Single token used by the repeat filter.
    pub name_oneword: String,
    pub market_cap_usd: Option<f64>,
}

impl Company {
    /// The three name variants, longest first.
    pub fn name_variants(&self) -> [&str; 3] {
        [&self.name_long, &self.name_short, &self.name_oneword]
    }

    pub fn cap_band(&self) -> CapBand {
        band_of(self.market_cap_usd).unwrap_or(CapBand::Unknown)
    }

    fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(EsgError::Validation("company id is empty".into()));
        }
        if self.name_oneword.is_empty() || self.name_oneword.chars().any(char::is_whitespace) {
            return Err(EsgError::Validation(format!(
                "company {}: name_oneword {:?} must be a single token",
                self.id, self.name_oneword
            )));
        }
        band_of(self.market_cap_usd)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub company_id: String,
    pub year: i32,
    pub rating: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CapBand {
    SmallCap,
    MidCap,
    LargeCap,
    Unknown,
}

impl CapBand {
    pub const ALL: [CapBand; 4] = [CapBand::SmallCap, CapBand::MidCap, CapBand::LargeCap, CapBand::Unknown];
}

impl fmt::Display for CapBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CapBand::SmallCap => "small",
            CapBand::MidCap => "mid",
            CapBand::LargeCap => "large",
            CapBand::Unknown => "unknown",
        })
    }
}

/// Both limits belong to the mid band.
pub fn band_of(market_cap_usd: Option<f64>) -> Result<CapBand> {
    let Some(cap) = market_cap_usd else {
        return Ok(CapBand::Unknown);
    };
    if !cap.is_finite() || cap < 0.0 {
        return Err(EsgError::OutOfRange { what: "market_cap_usd".into(), value: cap });
    }
    Ok(if cap < SMALL_CAP_LIMIT {
        CapBand::SmallCap
    } else if cap <= LARGE_CAP_LIMIT {
        CapBand::MidCap
    } else {
        CapBand::LargeCap
    })
}

/// Validated companies and ratings with lookup indices.
#[derive(Clone, Debug, Default)]
pub struct Catalog {
    companies: Vec<Company>,
    ratings: Vec<RatingRecord>,
    by_id: HashMap<String, usize>,
    rating_index: HashMap<(String, i32), usize>,
}

impl Catalog {
    pub fn new(companies: Vec<Company>, ratings: Vec<RatingRecord>) -> Result<Self> {
        let mut by_id = HashMap::new();
        for (i, c) in companies.iter().enumerate() {
            c.validate()?;
            if by_id.insert(c.id.clone(), i).is_some() {
                return Err(EsgError::DuplicateKey(format!("company {}", c.id)));
            }
        }
        let mut rating_index = HashMap::new();
        for (i, r) in ratings.iter().enumerate() {
            check_rating(r)?;
            if !by_id.contains_key(&r.company_id) {
                return Err(EsgError::Validation(format!("rating for unknown company {}", r.company_id)));
            }
            if rating_index.insert((r.company_id.clone(), r.year), i).is_some() {
                return Err(EsgError::DuplicateKey(format!("({}, {})", r.company_id, r.year)));
            }
        }
        Ok(Self { companies, ratings, by_id, rating_index })
    }

    pub fn companies(&self) -> &[Company] {
        &self.companies
    }

    pub fn ratings(&self) -> &[RatingRecord] {
        &self.ratings
    }

    pub fn company(&self, id: &str) -> Option<&Company> {
        self.by_id.get(id).map(|&i| &self.companies[i])
    }

    pub fn rating(&self, company_id: &str, year: i32) -> Option<f64> {
        self.rating_index.get(&(company_id.to_string(), year)).map(|&i| self.ratings[i].rating)
    }

    /// Ratings of one year keyed by company.
    pub fn ratings_for_year(&self, year: i32) -> BTreeMap<&str, f64> {
        self.ratings.iter().filter(|r| r.year == year).map(|r| (r.company_id.as_str(), r.rating)).collect()
    }

    pub fn into_parts(self) -> (Vec<Company>, Vec<RatingRecord>) {
        (self.companies, self.ratings)
    }

    /// Reads `companies.csv` and `ratings.csv` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let (companies, ratings) = load_catalog(&dir.join(COMPANIES_FILE), &dir.join(RATINGS_FILE))?;
        Self::new(companies, ratings)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        save_catalog(&self.companies, &self.ratings, &dir.join(COMPANIES_FILE), &dir.join(RATINGS_FILE))
    }
}

pub const COMPANIES_FILE: &str = "companies.csv";
pub const RATINGS_FILE: &str = "ratings.csv";

fn check_rating(r: &RatingRecord) -> Result<()> {
    if !(0.0..=100.0).contains(&r.rating) {
        return Err(EsgError::OutOfRange { what: format!("rating of ({}, {})", r.company_id, r.year), value: r.rating });
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct CompanyRow {
    company_id: String,
    name_long: String,
    name_short: String,
    name_oneword: String,
    market_cap_usd: Option<f64>,
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<(u64, T)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| EsgError::parse(path, 0, e))?;
    let headers = reader.headers().map_err(|e| EsgError::parse(path, 1, e))?.clone();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            EsgError::parse(path, line, e)
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record.deserialize(Some(&headers)).map_err(|e| EsgError::parse(path, line, e))?;
        out.push((line, row));
    }
    Ok(out)
}

/// Loads and validates a company file and a rating file.
///
/// Errors carry the offending line number.
pub fn load_catalog(companies_csv: &Path, ratings_csv: &Path) -> Result<(Vec<Company>, Vec<RatingRecord>)> {
    let mut companies = Vec::new();
    let mut ids = HashSet::new();
    for (line, row) in read_rows::<CompanyRow>(companies_csv)? {
        let company = Company {
            id: row.company_id,
            name_long: row.name_long,
            name_short: row.name_short,
            name_oneword: row.name_oneword,
            market_cap_usd: row.market_cap_usd,
        };
        company.validate().map_err(|e| EsgError::parse(companies_csv, line, e))?;
        if !ids.insert(company.id.clone()) {
            return Err(EsgError::DuplicateKey(format!("company {} (line {line})", company.id)));
        }
        companies.push(company);
    }
    let mut ratings = Vec::new();
    let mut keys = HashSet::new();
    for (line, r) in read_rows::<RatingRecord>(ratings_csv)? {
        check_rating(&r).map_err(|e| EsgError::parse(ratings_csv, line, e))?;
        if !keys.insert((r.company_id.clone(), r.year)) {
            return Err(EsgError::DuplicateKey(format!("({}, {}) (line {line})", r.company_id, r.year)));
        }
        ratings.push(r);
    }
    Ok((companies, ratings))
}

pub fn save_catalog(companies: &[Company], ratings: &[RatingRecord], companies_csv: &Path, ratings_csv: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(companies_csv)?;
    for c in companies {
        w.serialize(CompanyRow {
            company_id: c.id.clone(),
            name_long: c.name_long.clone(),
            name_short: c.name_short.clone(),
            name_oneword: c.name_oneword.clone(),
            market_cap_usd: c.market_cap_usd,
        })?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(ratings_csv)?;
    for r in ratings {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
