//! Joins model ratings with human consensus and computes agreement per
//! condition and per company. Score histograms come from the same join.

mod render;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjust::Condition;
use crate::dossier::{Month, SkippedMonth};
use crate::ingest::CompanyId;
use crate::metrics::{aggregate_human, AgreementSummary, InterRaterAgreement, PairedScores};
use crate::rating::{RatingFailure, RatingRecord, Score};

pub use render::{render_report, write_report, RenderedFile, ReportFormat};

/// Two experts' scores for one company-month and their consensus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AssessmentRecord")]
pub struct HumanAssessment {
    pub company_id: CompanyId,
    pub month: Month,
    pub expert_scores: Vec<Score>,
    pub consensus: Score,
}

#[derive(Deserialize)]
struct AssessmentRecord {
    company_id: CompanyId,
    month: Month,
    expert_scores: Vec<Score>,
    #[serde(default)]
    consensus: Option<Score>,
}

impl TryFrom<AssessmentRecord> for HumanAssessment {
    type Error = String;

    fn try_from(r: AssessmentRecord) -> Result<Self, Self::Error> {
        let [a, b] = r.expert_scores[..] else {
            return Err(format!(
                "{} {}: expected 2 expert scores, got {}",
                r.company_id,
                r.month,
                r.expert_scores.len()
            ));
        };
        let h = HumanAssessment::new(r.company_id, r.month, a, b);
        match r.consensus {
            Some(c) if c != h.consensus => Err(format!(
                "{} {}: consensus {c} does not match expert scores",
                h.company_id, h.month
            )),
            _ => Ok(h),
        }
    }
}

impl HumanAssessment {
    pub fn new(company_id: CompanyId, month: Month, e1: Score, e2: Score) -> Self {
        Self {
            company_id,
            month,
            expert_scores: vec![e1, e2],
            consensus: aggregate_human(e1, e2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ConditionKey {
    pub condition: Condition,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanyRow {
    pub company_name: String,
    pub summary: AgreementSummary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    /// `human`, or `<model_id>/<condition>`.
    pub source: String,
    /// Counts for scores 1..=5.
    pub counts: [usize; 5],
}

impl Histogram {
    fn tally<'a>(source: String, scores: impl IntoIterator<Item = &'a Score>) -> Self {
        let mut counts = [0; 5];
        for s in scores {
            counts[s.get() as usize - 1] += 1;
        }
        Self { source, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub conditions: Vec<Condition>,
    pub per_condition: BTreeMap<ConditionKey, AgreementSummary>,
    pub per_company_condition: Condition,
    /// model id → company id → row.
    pub per_company: BTreeMap<String, BTreeMap<CompanyId, CompanyRow>>,
    pub distributions: Vec<Histogram>,
    pub skipped_months: Vec<SkippedMonth>,
    /// Company-months dropped for a model because its rating failed.
    pub excluded: Vec<RatingFailure>,
    pub inter_rater: Option<InterRaterAgreement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Error)]
#[error("ratings and assessments do not join: {}", self.describe())]
pub struct JoinError {
    pub ratings_without_assessment: Vec<String>,
    pub assessments_without_rating: Vec<String>,
    pub duplicates: Vec<String>,
}

impl JoinError {
    fn is_empty(&self) -> bool {
        self.ratings_without_assessment.is_empty()
            && self.assessments_without_rating.is_empty()
            && self.duplicates.is_empty()
    }

    fn describe(&self) -> String {
        let mut parts = Vec::new();
        if !self.ratings_without_assessment.is_empty() {
            parts.push(format!("no assessment for [{}]", self.ratings_without_assessment.join(", ")));
        }
        if !self.assessments_without_rating.is_empty() {
            parts.push(format!("no rating for [{}]", self.assessments_without_rating.join(", ")));
        }
        if !self.duplicates.is_empty() {
            parts.push(format!("duplicates [{}]", self.duplicates.join(", ")));
        }
        parts.join("; ")
    }
}

fn key_str(model: Option<&str>, company: &CompanyId, month: Month) -> String {
    match model {
        Some(m) => format!("{m}:{company}:{month}"),
        None => format!("{company}:{month}"),
    }
}

/// Per model, the joined (consensus, raw model score) pairs in assessment
/// order, with company ids alongside.
struct Joined {
    companies: Vec<(CompanyId, String)>,
    human: Vec<Score>,
    model: Vec<Score>,
}

/// Runs the full comparison. Every rating needs an assessment and every
/// assessment needs a rating or a recorded failure for each model.
pub fn run_evaluation(
    ratings: &[RatingRecord],
    humans: &[HumanAssessment],
    conditions: &[Condition],
    per_company_condition: Condition,
) -> Result<EvaluationReport, JoinError> {
    let mut err = JoinError::default();

    let mut human_index: BTreeMap<(CompanyId, Month), &HumanAssessment> = BTreeMap::new();
    for h in humans {
        if human_index.insert((h.company_id.clone(), h.month), h).is_some() {
            err.duplicates.push(key_str(None, &h.company_id, h.month));
        }
    }

    let mut by_model: BTreeMap<&str, BTreeMap<(CompanyId, Month), &RatingRecord>> = BTreeMap::new();
    for rec in ratings {
        let (company, month, model) = rec.key();
        let slot = by_model.entry(model).or_default();
        if slot.insert((company.clone(), month), rec).is_some() {
            err.duplicates.push(key_str(Some(model), company, month));
        }
        if !human_index.contains_key(&(company.clone(), month)) {
            err.ratings_without_assessment.push(key_str(Some(model), company, month));
        }
    }

    let mut joined: BTreeMap<&str, Joined> = BTreeMap::new();
    let mut excluded = Vec::new();
    for (model, recs) in &by_model {
        let j = joined.entry(model).or_insert(Joined {
            companies: Vec::new(),
            human: Vec::new(),
            model: Vec::new(),
        });
        for (key, h) in &human_index {
            match recs.get(key) {
                Some(RatingRecord::Rated(r)) => {
                    j.companies.push((r.company_id.clone(), r.company_name.clone()));
                    j.human.push(h.consensus);
                    j.model.push(r.score);
                }
                Some(RatingRecord::Failed(f)) => excluded.push(f.clone()),
                None => err
                    .assessments_without_rating
                    .push(key_str(Some(model), &key.0, key.1)),
            }
        }
    }
    if !err.is_empty() {
        return Err(err);
    }

    let mut conditions: Vec<Condition> = conditions.to_vec();
    conditions.sort();
    conditions.dedup();

    let mut per_condition = BTreeMap::new();
    let mut distributions = vec![Histogram::tally(
        "human".into(),
        human_index.values().map(|h| &h.consensus),
    )];
    let mut per_company = BTreeMap::new();

    for (model, j) in &joined {
        for &condition in &conditions {
            let adjusted: Vec<Score> = j.model.iter().map(|s| condition.apply(*s)).collect();
            distributions.push(Histogram::tally(format!("{model}/{condition}"), &adjusted));
            if let Ok(p) = PairedScores::new(j.human.clone(), adjusted) {
                per_condition.insert(
                    ConditionKey {
                        condition,
                        model_id: model.to_string(),
                    },
                    p.summary(),
                );
            }
        }

        let mut groups: BTreeMap<&CompanyId, (String, Vec<Score>, Vec<Score>)> = BTreeMap::new();
        for (i, (company, name)) in j.companies.iter().enumerate() {
            let g = groups.entry(company).or_insert_with(|| (name.clone(), Vec::new(), Vec::new()));
            g.1.push(j.human[i]);
            g.2.push(per_company_condition.apply(j.model[i]));
        }
        let rows = groups
            .into_iter()
            .filter_map(|(company, (name, h, m))| {
                let summary = PairedScores::new(h, m).ok()?.summary();
                let company_name = if name.is_empty() { company.to_string() } else { name };
                Some((company.clone(), CompanyRow { company_name, summary }))
            })
            .collect();
        per_company.insert(model.to_string(), rows);
    }

    let inter_rater = {
        let (a, b): (Vec<Score>, Vec<Score>) = human_index
            .values()
            .filter_map(|h| match h.expert_scores[..] {
                [x, y] => Some((x, y)),
                _ => None,
            })
            .unzip();
        InterRaterAgreement::between(&a, &b).ok()
    };

    Ok(EvaluationReport {
        conditions,
        per_condition,
        per_company_condition,
        per_company,
        distributions,
        skipped_months: Vec::new(),
        excluded,
        inter_rater,
    })
}

impl EvaluationReport {
    pub fn with_skipped(mut self, skipped: Vec<SkippedMonth>) -> Self {
        self.skipped_months = skipped;
        self
    }

    pub fn summary(&self, condition: Condition, model_id: &str) -> Option<&AgreementSummary> {
        self.per_condition.get(&ConditionKey {
            condition,
            model_id: model_id.to_string(),
        })
    }

    pub fn models(&self) -> BTreeSet<&str> {
        self.per_company.keys().map(String::as_str).collect()
    }

    pub fn histogram(&self, source: &str) -> Option<&Histogram> {
        self.distributions.iter().find(|h| h.source == source)
    }
}
