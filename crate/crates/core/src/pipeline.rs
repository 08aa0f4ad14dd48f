//! Feed to ratings in one call: parse, keep timely disclosures, summarize,
//! build dossiers and rate them with each configured model.

use chrono::{DateTime, FixedOffset};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dossier::{build_dossiers, CompanySummary, DossierError, DossierSet, Month, DEFAULT_CAP};
use crate::gateway::{Gateway, ModelConfig};
use crate::ingest::{filter_timely, parse_feed, CompanyId, Disclosure, EntryError, FeedFormat, FormatError, IngestConfig};
use crate::rating::{rate_all, RatingRecord, Rubric};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryFailure {
    pub company_id: CompanyId,
    pub disclosed_at: DateTime<FixedOffset>,
    pub title: String,
    pub reason: String,
}

/// Summarizes in parallel. Output keeps input order; a failed disclosure is
/// reported and left out of the summaries.
pub fn summarize_all(
    items: &[Disclosure],
    gateway: &Gateway,
    config: &ModelConfig,
) -> (Vec<CompanySummary>, Vec<SummaryFailure>) {
    let results: Vec<_> = items.par_iter().map(|d| (d, gateway.summarize(d, config))).collect();
    let mut summaries = Vec::with_capacity(items.len());
    let mut failures = Vec::new();
    for (d, result) in results {
        match result {
            Ok(entry) => summaries.push(CompanySummary {
                company_id: d.company_id.clone(),
                company_name: d.company_name.clone(),
                entry,
            }),
            Err(e) => failures.push(SummaryFailure {
                company_id: d.company_id.clone(),
                disclosed_at: d.disclosed_at,
                title: d.title.clone(),
                reason: e.to_string(),
            }),
        }
    }
    (summaries, failures)
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub cap: usize,
    /// When set, empty company-months inside it are listed as skipped.
    pub period: Option<(Month, Month)>,
    pub summary_model: ModelConfig,
    pub rating_models: Vec<ModelConfig>,
}

impl PipelineOptions {
    pub fn new(summary_model: ModelConfig, rating_models: Vec<ModelConfig>) -> Self {
        Self {
            cap: DEFAULT_CAP,
            period: None,
            summary_model,
            rating_models,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub entry_errors: Vec<EntryError>,
    pub periodic_excluded: usize,
    pub summary_failures: Vec<SummaryFailure>,
    pub dossiers: DossierSet,
    /// All models, in option order, each in dossier order.
    pub ratings: Vec<RatingRecord>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Feed(#[from] FormatError),
    #[error(transparent)]
    Dossier(#[from] DossierError),
}

pub fn run(
    feed: &[u8],
    ingest: &IngestConfig,
    gateway: &Gateway,
    rubric: &Rubric,
    options: &PipelineOptions,
) -> Result<PipelineRun, PipelineError> {
    let parsed = parse_feed(feed, FeedFormat::JsonLines, ingest)?;
    let total = parsed.disclosures.len();
    let timely = filter_timely(parsed.disclosures);
    let periodic_excluded = total - timely.len();
    let (summaries, summary_failures) = summarize_all(&timely, gateway, &options.summary_model);
    let dossiers = build_dossiers(summaries, options.cap, options.period)?;
    let ratings = options
        .rating_models
        .iter()
        .flat_map(|m| rate_all(&dossiers.dossiers, rubric, gateway, m))
        .collect();
    tracing::info!(
        disclosures = total,
        periodic_excluded,
        dossiers = dossiers.dossiers.len(),
        skipped = dossiers.skipped.len(),
        "pipeline finished"
    );
    Ok(PipelineRun {
        entry_errors: parsed.errors,
        periodic_excluded,
        summary_failures,
        dossiers,
        ratings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::MockBackend;
    use crate::synthetic::{cj_cgv_feed, synthetic_feed, SynthSpec};

    #[test]
    fn cj_cgv_through_mock() {
        let gw = Gateway::new(MockBackend::standard());
        let opts = PipelineOptions::new(ModelConfig::new("mock-sum"), vec![ModelConfig::new("mock-a")]);
        let run = run(cj_cgv_feed().as_bytes(), &IngestConfig::default(), &gw, Rubric::v1(), &opts).unwrap();
        assert_eq!(run.dossiers.dossiers.len(), 1);
        assert_eq!(run.dossiers.dossiers[0].len(), 7);
        assert_eq!(run.ratings.len(), 1);
        assert!(matches!(run.ratings[0], RatingRecord::Rated(_)));
    }

    #[test]
    fn periodic_reports_are_dropped() {
        let spec = SynthSpec {
            companies: 4,
            ..SynthSpec::default()
        };
        let gw = Gateway::new(MockBackend::standard());
        let mut opts = PipelineOptions::new(ModelConfig::new("s"), vec![ModelConfig::new("r")]);
        opts.period = Some((spec.from, spec.to));
        let run = run(synthetic_feed(&spec).as_bytes(), &IngestConfig::default(), &gw, Rubric::v1(), &opts).unwrap();
        assert!(run.periodic_excluded > 0);
        assert!(run.entry_errors.is_empty() && run.summary_failures.is_empty());
        assert_eq!(run.dossiers.dossiers.len() + run.dossiers.skipped.len(), 4 * 17);
        assert!(run.dossiers.dossiers.iter().all(|d| d.len() <= 15));
    }
}
