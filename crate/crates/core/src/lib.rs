//! Monthly sentiment monitoring of corporate disclosures.
//!
//! [`ingest`] normalizes feeds. Disclosures are summarized through
//! [`gateway`] and grouped into monthly dossiers by [`dossier`].
//! [`rating`] scores each dossier on a five-point scale and [`adjust`]
//! remaps scores. [`evaluation`] compares them with expert ratings using
//! [`metrics`]. Expert ratings are collected through [`annotation`].
//! [`pipeline`] chains the stages. [`synthetic`] generates fixtures.

pub mod adjust;
pub mod annotation;
pub mod dossier;
pub mod evaluation;
pub mod gateway;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod rating;
pub mod synthetic;

pub use adjust::{apply_condition, Condition};
pub use dossier::{build_dossiers, CompanySummary, DisclosureSummary, DossierSet, Month, MonthlyDossier, SkippedMonth};
pub use evaluation::{run_evaluation, EvaluationReport, HumanAssessment};
pub use gateway::{CompletionRequest, Gateway, GatewayConfig, ModelConfig};
pub use ingest::{CompanyId, Disclosure, ReportType};
pub use metrics::{AgreementSummary, InterRaterAgreement, PairedScores};
pub use rating::{parse_rating, rate_dossier, RatingRecord, Rubric, Score, SentimentRating};
