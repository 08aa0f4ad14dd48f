//! Company-month dossiers and the most-recent cap.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, FixedOffset};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::ingest::CompanyId;

pub const DEFAULT_CAP: usize = 15;

/// A calendar month, rendered `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    year: i32,
    month: u32,
}

impl Month {
    pub fn new(year: i32, month: u32) -> Option<Self> {
        (1..=12).contains(&month).then_some(Self { year, month })
    }

    pub fn of(ts: &DateTime<FixedOffset>) -> Self {
        Self {
            year: ts.year(),
            month: ts.month(),
        }
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    pub fn succ(self) -> Self {
        if self.month == 12 {
            Self {
                year: self.year + 1,
                month: 1,
            }
        } else {
            Self {
                year: self.year,
                month: self.month + 1,
            }
        }
    }

    /// Inclusive range of months.
    pub fn range_inclusive(from: Month, to: Month) -> Vec<Month> {
        let mut out = Vec::new();
        let mut m = from;
        while m <= to {
            out.push(m);
            m = m.succ();
        }
        out
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (y, m) = s.split_once('-').ok_or_else(|| format!("bad month `{s}`"))?;
        let year = y.parse().map_err(|_| format!("bad month `{s}`"))?;
        let month = m.parse().map_err(|_| format!("bad month `{s}`"))?;
        Month::new(year, month).ok_or_else(|| format!("bad month `{s}`"))
    }
}

impl Serialize for Month {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A one-sentence English summary of a timely disclosure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisclosureSummary {
    pub disclosed_at: DateTime<FixedOffset>,
    pub title: String,
    pub summary: String,
}

/// A summary tagged with its company, as persisted by the ingest step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompanySummary {
    pub company_id: CompanyId,
    pub company_name: String,
    #[serde(flatten)]
    pub entry: DisclosureSummary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthlyDossier {
    pub company_id: CompanyId,
    pub company_name: String,
    pub month: Month,
    entries: Vec<DisclosureSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DossierError {
    #[error("entries are not in ascending time order (position {0})")]
    Unsorted(usize),
    #[error("no entries for {company} {month}")]
    Empty { company: CompanyId, month: Month },
    #[error("entry dated {at} lies outside {month}")]
    OutOfMonth { at: String, month: Month },
    #[error("{count} entries exceed the cap of {cap}")]
    OverCap { count: usize, cap: usize },
    #[error("summary at position {0} is empty")]
    EmptySummary(usize),
}

fn check_sorted<T: Timestamped>(entries: &[T]) -> Result<(), DossierError> {
    match entries
        .windows(2)
        .position(|w| w[1].timestamp() < w[0].timestamp())
    {
        Some(i) => Err(DossierError::Unsorted(i + 1)),
        None => Ok(()),
    }
}

/// Buckets summaries by (company, calendar month). Within a bucket entries are
/// sorted ascending by time; ties keep input order, so a later feed position
/// counts as more recent.
pub fn group_by_company_month(
    items: Vec<CompanySummary>,
) -> BTreeMap<(CompanyId, Month), Vec<DisclosureSummary>> {
    let mut buckets: BTreeMap<(CompanyId, Month), Vec<DisclosureSummary>> = BTreeMap::new();
    for item in items {
        let month = Month::of(&item.entry.disclosed_at);
        buckets
            .entry((item.company_id, month))
            .or_default()
            .push(item.entry);
    }
    for bucket in buckets.values_mut() {
        bucket.sort_by_key(|e| e.disclosed_at);
    }
    buckets
}

/// Keeps the `limit` most recent entries: the suffix of length
/// `min(len, limit)`.
pub fn cap_most_recent<T: Timestamped + Clone>(entries: &[T], limit: usize) -> Result<Vec<T>, DossierError> {
    check_sorted(entries)?;
    let start = entries.len().saturating_sub(limit);
    Ok(entries[start..].to_vec())
}

pub trait Timestamped {
    fn timestamp(&self) -> DateTime<FixedOffset>;
}

impl Timestamped for DisclosureSummary {
    fn timestamp(&self) -> DateTime<FixedOffset> {
        self.disclosed_at
    }
}

impl MonthlyDossier {
    /// Validates and builds a dossier. An empty entry list yields
    /// [`DossierError::Empty`], which callers treat as a skipped month.
    pub fn build(
        company_id: CompanyId,
        company_name: impl Into<String>,
        month: Month,
        entries: Vec<DisclosureSummary>,
        cap: usize,
    ) -> Result<Self, DossierError> {
        if entries.is_empty() {
            return Err(DossierError::Empty {
                company: company_id,
                month,
            });
        }
        if entries.len() > cap {
            return Err(DossierError::OverCap {
                count: entries.len(),
                cap,
            });
        }
        check_sorted(&entries)?;
        for (i, e) in entries.iter().enumerate() {
            if Month::of(&e.disclosed_at) != month {
                return Err(DossierError::OutOfMonth {
                    at: e.disclosed_at.to_rfc3339(),
                    month,
                });
            }
            if e.summary.trim().is_empty() {
                return Err(DossierError::EmptySummary(i));
            }
        }
        Ok(Self {
            company_id,
            company_name: company_name.into(),
            month,
            entries,
        })
    }

    pub fn entries(&self) -> &[DisclosureSummary] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rows(&self) -> Vec<DossierRow> {
        self.entries.iter().map(DossierRow::from).collect()
    }

    /// Canonical prompt rendering: one paragraph per entry with `Date:`,
    /// `Time:` and `Details:` lines.
    pub fn render(&self) -> String {
        self.rows()
            .iter()
            .map(|r| format!("Date: {}\nTime: {}\nDetails: {}", r.date, r.time, r.details))
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// Re-checks the invariants, for dossiers read back from disk.
    pub fn validate(&self, cap: usize) -> Result<(), DossierError> {
        Self::build(
            self.company_id.clone(),
            self.company_name.clone(),
            self.month,
            self.entries.clone(),
            cap,
        )
        .map(|_| ())
    }
}

/// One Date / Time / Details row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DossierRow {
    pub date: String,
    pub time: String,
    pub details: String,
}

impl From<&DisclosureSummary> for DossierRow {
    fn from(e: &DisclosureSummary) -> Self {
        Self {
            date: e.disclosed_at.format("%Y-%m-%d").to_string(),
            time: e.disclosed_at.format("%H:%M").to_string(),
            details: format!("{}: {}", e.title.trim(), e.summary.trim()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedMonth {
    pub company_id: CompanyId,
    pub month: Month,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DossierSet {
    pub dossiers: Vec<MonthlyDossier>,
    /// Company-months inside the requested period with no timely disclosure.
    pub skipped: Vec<SkippedMonth>,
    /// Entries dropped by the recency cap.
    pub trimmed: usize,
}

/// Groups and caps in one pass. When `period` is given, every company
/// seen in the input is checked against every month of the period and empty
/// months are listed as skipped; entries outside the period are ignored.
pub fn build_dossiers(
    items: Vec<CompanySummary>,
    cap: usize,
    period: Option<(Month, Month)>,
) -> Result<DossierSet, DossierError> {
    let names: BTreeMap<CompanyId, String> = items
        .iter()
        .map(|i| (i.company_id.clone(), i.company_name.clone()))
        .collect();
    let companies: BTreeSet<CompanyId> = names.keys().cloned().collect();
    let buckets = group_by_company_month(items);

    let mut set = DossierSet::default();
    let keys: Vec<(CompanyId, Month)> = match period {
        Some((from, to)) => {
            let months = Month::range_inclusive(from, to);
            companies
                .iter()
                .flat_map(|c| months.iter().map(move |m| (c.clone(), *m)))
                .collect()
        }
        None => buckets.keys().cloned().collect(),
    };
    for (company, month) in keys {
        let bucket = buckets.get(&(company.clone(), month)).map(Vec::as_slice).unwrap_or(&[]);
        if bucket.is_empty() {
            set.skipped.push(SkippedMonth {
                company_id: company,
                month,
            });
            continue;
        }
        let kept = cap_most_recent(bucket, cap)?;
        set.trimmed += bucket.len() - kept.len();
        let name = names[&company].clone();
        set.dossiers
            .push(MonthlyDossier::build(company, name, month, kept, cap)?);
    }
    Ok(set)
}
