//! Rubric prompts and parsing of the model's score reply.

use std::fmt;
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dossier::{MonthlyDossier, Month};
use crate::gateway::{CompletionRequest, Gateway, GatewayError, ModelConfig, Purpose};
use crate::ingest::CompanyId;

const RUBRIC_V1: &str = include_str!("../assets/rubric-v1.toml");

pub const LABELS: [&str; 5] = ["Very Negative", "Negative", "Neutral", "Positive", "Very Positive"];

/// A sentiment score on the 1..=5 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Score(u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("score {0} is outside 1..=5")]
pub struct ScoreRangeError(pub i64);

impl Score {
    pub const MIN: Score = Score(1);
    pub const MAX: Score = Score(5);

    pub fn new(v: u8) -> Result<Self, ScoreRangeError> {
        if (1..=5).contains(&v) {
            Ok(Score(v))
        } else {
            Err(ScoreRangeError(v as i64))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn label(self) -> &'static str {
        LABELS[self.0 as usize - 1]
    }

    pub fn all() -> impl Iterator<Item = Score> {
        (1..=5).map(Score)
    }
}

impl TryFrom<u8> for Score {
    type Error = ScoreRangeError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Score::new(v)
    }
}

impl TryFrom<i64> for Score {
    type Error = ScoreRangeError;

    fn try_from(v: i64) -> Result<Self, Self::Error> {
        u8::try_from(v)
            .ok()
            .and_then(|v| Score::new(v).ok())
            .ok_or(ScoreRangeError(v))
    }
}

impl From<Score> for u8 {
    fn from(s: Score) -> u8 {
        s.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Criterion {
    pub score: u8,
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rubric {
    pub version: String,
    pub preamble: String,
    criteria: Vec<Criterion>,
}

#[derive(Debug, Error)]
pub enum RubricError {
    #[error("rubric file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("rubric must define scores 1..=5 exactly once each")]
    Criteria,
}

impl Rubric {
    /// The rubric shipped with the crate.
    pub fn v1() -> &'static Rubric {
        static RUBRIC: OnceLock<Rubric> = OnceLock::new();
        RUBRIC.get_or_init(|| Rubric::from_toml(RUBRIC_V1).expect("bundled rubric is valid"))
    }

    pub fn from_toml(text: &str) -> Result<Self, RubricError> {
        let mut rubric: Rubric = toml::from_str(text)?;
        rubric.criteria.sort_by_key(|c| c.score);
        let keys: Vec<u8> = rubric.criteria.iter().map(|c| c.score).collect();
        if keys != [1, 2, 3, 4, 5] {
            return Err(RubricError::Criteria);
        }
        Ok(rubric)
    }

    pub fn criteria(&self) -> &[Criterion] {
        &self.criteria
    }

    /// `"1 (Very Negative): ..."` lines.
    pub fn criteria_text(&self) -> String {
        self.criteria
            .iter()
            .map(|c| format!("{} ({}): {}", c.score, c.label, c.text))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub const FORMAT_INSTRUCTION: &str = "Respond in exactly this format:\n\
Score: <an integer from 1 to 5> (<label>)\n\
Reasons: <a brief explanation of the reasons for the score>";

/// Rubric and output format go in the system text; the dossier in the user text.
pub fn build_rating_prompt(dossier: &MonthlyDossier, rubric: &Rubric) -> CompletionRequest {
    let system = format!(
        "{}\n\nScoring criteria:\n{}\n\n{}",
        rubric.preamble.trim(),
        rubric.criteria_text(),
        FORMAT_INSTRUCTION
    );
    let user = format!(
        "Company: {}\nMonth: {}\n\n{}",
        dossier.company_name,
        dossier.month,
        dossier.render()
    );
    CompletionRequest::new(system, user).with_purpose(Purpose::Rate)
}

/// Canonical response format, the inverse of [`parse_rating`].
pub fn render_rating(score: Score, rationale: &str) -> String {
    format!("Score: {} ({})\nReasons: {}", score, score.label(), rationale)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no score between 1 and 5 found in response")]
    Unparseable,
    #[error("ambiguous score: {0}")]
    Ambiguous(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedRating {
    pub score: Score,
    /// May be empty for a bare score.
    pub rationale: String,
}

fn score_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?im)^[ \t>*#_|-]*(?:sentiment\s+)?(?:rating\s+score|score|rating)[ \t*_]*[:=]").unwrap()
    })
}

fn reasons_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?im)^[ \t>*#_|.,;\x{2014}\x{2013}-]*(?:reasons?(?:\s+for\s+the\s+score)?|rationale|explanation)[ \t*_]*[:=]").unwrap()
    })
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+(?:\.\d+)?").unwrap())
}

fn label_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[ \t*_]*\(([^)\n]*)\)").unwrap())
}

/// A located score: value plus the byte span of the score token (and label,
/// when present) within the response.
struct ScoreHit {
    score: Score,
    line_start: usize,
    end: usize,
}

/// Checks an optional `(Label)` right after the number at `after`.
fn check_label(text: &str, after: usize, score: Score) -> Result<usize, ParseError> {
    let Some(caps) = label_re().captures(&text[after..]) else {
        return Ok(after);
    };
    let label = caps[1].trim();
    let end = after + caps.get(0).unwrap().end();
    match LABELS.iter().position(|l| l.eq_ignore_ascii_case(label)) {
        Some(i) if i + 1 != score.get() as usize => Err(ParseError::Ambiguous(format!(
            "score {score} is labelled \"{label}\""
        ))),
        _ => Ok(end),
    }
}

fn labeled_hits(text: &str) -> Result<Vec<ScoreHit>, ParseError> {
    let mut hits = Vec::new();
    for m in score_line_re().find_iter(text) {
        let line_end = text[m.end()..].find('\n').map_or(text.len(), |i| m.end() + i);
        let field = &text[m.end()..line_end];
        let found = number_re().find_iter(field).find_map(|n| {
            let s = n.as_str();
            if s.contains('.') {
                return None;
            }
            s.parse::<i64>()
                .ok()
                .and_then(|v| Score::try_from(v).ok())
                .map(|score| (score, m.end() + n.end()))
        });
        if let Some((score, after)) = found {
            let end = check_label(text, after, score)?;
            hits.push(ScoreHit {
                score,
                line_start: m.start(),
                end,
            });
        }
    }
    Ok(hits)
}

fn is_table_chrome(line: &str) -> bool {
    let t = line.trim();
    t.starts_with('|') && !t.chars().any(|c| c.is_ascii_digit())
}

/// Score at the start of the first content line: `2`, `2 (Negative) ...`,
/// or a markdown table row `| 2 (Negative) | ... |`.
fn leading_hit(text: &str) -> Result<Option<ScoreHit>, ParseError> {
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        if line.trim().is_empty() || is_table_chrome(line) {
            continue;
        }
        let trimmed = line.trim_start_matches(|c: char| c.is_whitespace() || "|>*#_".contains(c));
        let num_start = start + (line.len() - trimmed.len());
        let digits = trimmed.chars().take_while(char::is_ascii_digit).count();
        if digits == 0 {
            return Ok(None);
        }
        let after = num_start + digits;
        let mut rest = text[after..].chars();
        let ok_follow = match rest.next() {
            None => true,
            Some(c) if c.is_whitespace() || "()-\u{2014}\u{2013}:|*/,".contains(c) => true,
            Some('.') => rest.next().is_none_or(char::is_whitespace),
            _ => false,
        };
        if !ok_follow {
            return Ok(None);
        }
        let Ok(score) = text[num_start..after].parse::<i64>().map_err(|_| ()).and_then(|v| Score::try_from(v).map_err(|_| ())) else {
            return Ok(None);
        };
        let end = check_label(text, after, score)?;
        return Ok(Some(ScoreHit {
            score,
            line_start: start,
            end,
        }));
    }
    Ok(None)
}

fn clean(s: &str) -> String {
    s.trim()
        .trim_start_matches(|c: char| c.is_whitespace() || "-\u{2014}\u{2013}:|,.;*_".contains(c))
        .trim_end_matches(|c: char| c.is_whitespace() || "|*_".contains(c))
        .to_string()
}

/// Extracts the score and rationale from a model response.
///
/// A labelled line (`Score: 2`, `Rating Score: 2 (Negative)`) takes priority;
/// otherwise the first content line must start with the score. Two labelled
/// lines with different scores, or a score whose parenthesised label names a
/// different score, are ambiguous.
pub fn parse_rating(raw: &str) -> Result<ParsedRating, ParseError> {
    let hits = labeled_hits(raw)?;
    let hit = match hits.split_first() {
        Some((first, rest)) => {
            if let Some(other) = rest.iter().find(|h| h.score != first.score) {
                return Err(ParseError::Ambiguous(format!(
                    "conflicting score lines: {} and {}",
                    first.score, other.score
                )));
            }
            hits.into_iter().next().unwrap()
        }
        None => leading_hit(raw)?.ok_or(ParseError::Unparseable)?,
    };

    let tail = &raw[hit.end..];
    let head = &raw[..hit.line_start];
    let rationale = if let Some(m) = reasons_re().find(tail) {
        clean(&tail[m.end()..])
    } else if !clean(tail).is_empty() {
        clean(tail)
    } else if let Some(m) = reasons_re().find(head) {
        clean(&head[m.end()..])
    } else {
        clean(head)
    };
    Ok(ParsedRating {
        score: hit.score,
        rationale,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentRating {
    pub company_id: CompanyId,
    #[serde(default)]
    pub company_name: String,
    pub month: Month,
    pub score: Score,
    pub rationale: String,
    pub model_id: String,
    pub raw_response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingFailure {
    pub company_id: CompanyId,
    #[serde(default)]
    pub company_name: String,
    pub month: Month,
    pub model_id: String,
    pub reason: String,
}

/// One line of a ratings file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RatingRecord {
    Rated(SentimentRating),
    Failed(RatingFailure),
}

impl RatingRecord {
    pub fn key(&self) -> (&CompanyId, Month, &str) {
        match self {
            RatingRecord::Rated(r) => (&r.company_id, r.month, &r.model_id),
            RatingRecord::Failed(f) => (&f.company_id, f.month, &f.model_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RatingError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("response unreadable twice: {first}; then {second}")]
    Parse { first: String, second: String },
}

fn parse_for_rating(raw: &str) -> Result<ParsedRating, String> {
    match parse_rating(raw) {
        Ok(p) if p.rationale.is_empty() => Err("response has a score but no reasons".into()),
        Ok(p) => Ok(p),
        Err(e) => Err(e.to_string()),
    }
}

fn reask_request(original: &CompletionRequest, problem: &str) -> CompletionRequest {
    let mut req = original.clone();
    req.user = format!(
        "{}\n\nYour previous reply could not be used ({problem}). Answer again using exactly the required format:\n{}",
        original.user, FORMAT_INSTRUCTION
    );
    req
}

/// Rates one dossier. An unusable reply is re-asked once before failing.
pub fn rate_dossier(
    dossier: &MonthlyDossier,
    rubric: &Rubric,
    gateway: &Gateway,
    config: &ModelConfig,
) -> Result<SentimentRating, RatingError> {
    let request = build_rating_prompt(dossier, rubric);
    let first = gateway.complete(&request, config)?;
    let (parsed, raw) = match parse_for_rating(&first.text) {
        Ok(p) => (p, first.text),
        Err(problem) => {
            tracing::info!(company = %dossier.company_id, month = %dossier.month, %problem, "re-asking");
            let second = gateway.complete(&reask_request(&request, &problem), config)?;
            match parse_for_rating(&second.text) {
                Ok(p) => (p, second.text),
                Err(again) => {
                    return Err(RatingError::Parse {
                        first: problem,
                        second: again,
                    })
                }
            }
        }
    };
    Ok(SentimentRating {
        company_id: dossier.company_id.clone(),
        company_name: dossier.company_name.clone(),
        month: dossier.month,
        score: parsed.score,
        rationale: parsed.rationale,
        model_id: config.model_id.clone(),
        raw_response: raw,
    })
}

/// Rates every dossier in parallel; output order follows input order and
/// failures are recorded rather than aborting the run.
pub fn rate_all(
    dossiers: &[MonthlyDossier],
    rubric: &Rubric,
    gateway: &Gateway,
    config: &ModelConfig,
) -> Vec<RatingRecord> {
    dossiers
        .par_iter()
        .map(|d| match rate_dossier(d, rubric, gateway, config) {
            Ok(r) => RatingRecord::Rated(r),
            Err(e) => RatingRecord::Failed(RatingFailure {
                company_id: d.company_id.clone(),
                company_name: d.company_name.clone(),
                month: d.month,
                model_id: config.model_id.clone(),
                reason: e.to_string(),
            }),
        })
        .collect()
}
