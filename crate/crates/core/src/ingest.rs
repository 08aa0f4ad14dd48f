//! Disclosure feed parsing and periodic-report filtering.
//!
//! The canonical feed is UTF-8 JSON lines, one disclosure per line, with keys
//! `company_id`, `company_name`, `date` (`YYYY-MM-DD`), `time` (`HH:MM`),
//! `title`, `body` and `category`. Other sources plug in through
//! [`FeedAdapter`].

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, FixedOffset, NaiveDate, NaiveDateTime, NaiveTime, TimeZone};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Korea Standard Time, UTC+09:00. No daylight saving.
pub const KST_OFFSET_SECS: i32 = 9 * 3600;

pub fn kst() -> FixedOffset {
    FixedOffset::east_opt(KST_OFFSET_SECS).expect("valid offset")
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CompanyId(pub String);

impl CompanyId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CompanyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportType {
    Timely,
    FairReport,
    BusinessReport,
    SemiAnnualReport,
    QuarterlyReport,
    OtherPeriodic,
}

impl ReportType {
    pub fn is_periodic(self) -> bool {
        self != ReportType::Timely
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReportType::Timely => "timely",
            ReportType::FairReport => "fair_report",
            ReportType::BusinessReport => "business_report",
            ReportType::SemiAnnualReport => "semi_annual_report",
            ReportType::QuarterlyReport => "quarterly_report",
            ReportType::OtherPeriodic => "other_periodic",
        }
    }
}

/// One disclosure record after normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disclosure {
    pub company_id: CompanyId,
    pub company_name: String,
    pub disclosed_at: DateTime<FixedOffset>,
    pub title: String,
    pub body: String,
    pub report_type: ReportType,
}

/// Raw feed, records kept in feed order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedDocument {
    pub source_id: String,
    pub records: Vec<RawRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawRecord {
    Entry(RawEntry),
    /// A line that could not be decoded; carries the decoder message.
    Malformed(String),
}

/// A feed entry before validation. Missing keys are entry errors.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEntry {
    #[serde(default)]
    pub company_id: Option<String>,
    #[serde(default)]
    pub company_name: Option<String>,
    #[serde(default)]
    pub date: Option<String>,
    #[serde(default)]
    pub time: Option<String>,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub body: Option<String>,
    #[serde(default)]
    pub category: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeedFormat {
    #[default]
    JsonLines,
}

impl std::str::FromStr for FeedFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" | "json-lines" | "ndjson" => Ok(FeedFormat::JsonLines),
            other => Err(format!("unknown feed format `{other}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("feed is not valid UTF-8 (byte offset {0})")]
    Encoding(usize),
    #[error("feed could not be read: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EntryErrorKind {
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("invalid date `{0}`")]
    InvalidDate(String),
    #[error("invalid time `{0}`")]
    InvalidTime(String),
}

/// A rejected feed entry. `index` is the zero-based entry position in the feed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("entry {index}: {kind}")]
pub struct EntryError {
    pub index: usize,
    pub kind: EntryErrorKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedFeed {
    pub disclosures: Vec<Disclosure>,
    pub errors: Vec<EntryError>,
}

impl ParsedFeed {
    pub fn entry_count(&self) -> usize {
        self.disclosures.len() + self.errors.len()
    }
}

/// Seam for feed sources other than the canonical JSON-lines file.
pub trait FeedAdapter {
    fn read(&self, raw: &[u8]) -> Result<FeedDocument, FormatError>;
}

pub struct JsonLinesAdapter {
    pub source_id: String,
}

impl FeedAdapter for JsonLinesAdapter {
    fn read(&self, raw: &[u8]) -> Result<FeedDocument, FormatError> {
        let text = std::str::from_utf8(raw).map_err(|e| FormatError::Encoding(e.valid_up_to()))?;
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|line| match serde_json::from_str::<RawEntry>(line) {
                Ok(entry) => RawRecord::Entry(entry),
                Err(err) => RawRecord::Malformed(err.to_string()),
            })
            .collect();
        Ok(FeedDocument {
            source_id: self.source_id.clone(),
            records,
        })
    }
}

/// Maps category/title keywords to report types. Matching is
/// case-insensitive substring search, category first, then title; the first
/// matching rule wins. Anything unmatched is a timely disclosure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportClassifier {
    pub rules: Vec<KeywordRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordRule {
    pub keyword: String,
    pub report_type: ReportType,
}

impl Default for ReportClassifier {
    fn default() -> Self {
        let rule = |k: &str, t| KeywordRule {
            keyword: k.to_string(),
            report_type: t,
        };
        use ReportType::*;
        Self {
            rules: vec![
                rule("semi-annual report", SemiAnnualReport),
                rule("semiannual report", SemiAnnualReport),
                rule("half-year report", SemiAnnualReport),
                rule("반기보고서", SemiAnnualReport),
                rule("quarterly report", QuarterlyReport),
                rule("분기보고서", QuarterlyReport),
                rule("business report", BusinessReport),
                rule("annual report", BusinessReport),
                rule("사업보고서", BusinessReport),
                rule("fair report", FairReport),
                rule("공정공시", FairReport),
                rule("periodic", OtherPeriodic),
            ],
        }
    }
}

impl ReportClassifier {
    pub fn classify(&self, category: Option<&str>, title: &str) -> ReportType {
        let find = |text: &str| {
            let lower = text.to_lowercase();
            self.rules
                .iter()
                .find(|r| lower.contains(&r.keyword.to_lowercase()))
                .map(|r| r.report_type)
        };
        if let Some(cat) = category {
            if cat.eq_ignore_ascii_case("timely") {
                return ReportType::Timely;
            }
            if let Some(t) = find(cat) {
                return t;
            }
        }
        find(title).unwrap_or(ReportType::Timely)
    }
}

#[derive(Debug, Clone)]
pub struct IngestConfig {
    pub offset: FixedOffset,
    pub classifier: ReportClassifier,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            offset: kst(),
            classifier: ReportClassifier::default(),
        }
    }
}

/// Parses a raw feed into disclosures. Malformed entries are reported in
/// [`ParsedFeed::errors`] with their feed index; only an unreadable document
/// fails the whole call.
pub fn parse_feed(raw: &[u8], format: FeedFormat, config: &IngestConfig) -> Result<ParsedFeed, FormatError> {
    let doc = match format {
        FeedFormat::JsonLines => JsonLinesAdapter {
            source_id: "jsonl".into(),
        }
        .read(raw)?,
    };
    Ok(normalize(&doc, config))
}

pub fn normalize(doc: &FeedDocument, config: &IngestConfig) -> ParsedFeed {
    let mut out = ParsedFeed::default();
    for (index, record) in doc.records.iter().enumerate() {
        let result = match record {
            RawRecord::Entry(entry) => normalize_entry(entry, config),
            RawRecord::Malformed(msg) => Err(EntryErrorKind::Malformed(msg.clone())),
        };
        match result {
            Ok(d) => out.disclosures.push(d),
            Err(kind) => out.errors.push(EntryError { index, kind }),
        }
    }
    out
}

fn required<'a>(value: &'a Option<String>, name: &'static str) -> Result<&'a str, EntryErrorKind> {
    match value.as_deref().map(str::trim) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(EntryErrorKind::MissingField(name)),
    }
}

fn normalize_entry(entry: &RawEntry, config: &IngestConfig) -> Result<Disclosure, EntryErrorKind> {
    let company_id = required(&entry.company_id, "company_id")?;
    let date = required(&entry.date, "date")?;
    let title = required(&entry.title, "title")?;
    let date = NaiveDate::parse_from_str(date, "%Y-%m-%d")
        .map_err(|_| EntryErrorKind::InvalidDate(date.to_string()))?;
    // A missing time is tolerated as midnight; a present but bad one is not.
    let time = match entry.time.as_deref().map(str::trim).filter(|t| !t.is_empty()) {
        None => NaiveTime::MIN,
        Some(t) => NaiveTime::parse_from_str(t, "%H:%M")
            .map_err(|_| EntryErrorKind::InvalidTime(t.to_string()))?,
    };
    let disclosed_at = config
        .offset
        .from_local_datetime(&NaiveDateTime::new(date, time))
        .single()
        .expect("fixed offsets are unambiguous");
    let company_name = entry
        .company_name
        .as_deref()
        .map(str::trim)
        .filter(|n| !n.is_empty())
        .unwrap_or(company_id)
        .to_string();
    Ok(Disclosure {
        company_id: CompanyId::new(company_id),
        company_name,
        disclosed_at,
        title: title.to_string(),
        body: entry.body.clone().unwrap_or_default(),
        report_type: config.classifier.classify(entry.category.as_deref(), title),
    })
}

/// Keeps only timely disclosures, preserving order.
pub fn filter_timely(items: Vec<Disclosure>) -> Vec<Disclosure> {
    items
        .into_iter()
        .filter(|d| d.report_type == ReportType::Timely)
        .collect()
}

/// Token estimate: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TokenStats {
    pub count: usize,
    pub total_tokens: usize,
    pub mean_tokens: f64,
}

/// Per-report-type token statistics over title + body.
pub fn corpus_stats(items: &[Disclosure]) -> BTreeMap<ReportType, TokenStats> {
    let mut stats: BTreeMap<ReportType, TokenStats> = BTreeMap::new();
    for d in items {
        let s = stats.entry(d.report_type).or_default();
        s.count += 1;
        s.total_tokens += estimate_tokens(&d.title) + estimate_tokens(&d.body);
    }
    for s in stats.values_mut() {
        s.mean_tokens = s.total_tokens as f64 / s.count as f64;
    }
    stats
}
