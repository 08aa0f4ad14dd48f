//! Human annotation backend: serves dossiers to raters one at a time, records
//! their scores in an append-only log and exports two-expert consensus.

pub mod http;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dossier::{Month, MonthlyDossier};
use crate::evaluation::HumanAssessment;
use crate::ingest::CompanyId;
use crate::metrics::InterRaterAgreement;
use crate::rating::{Rubric, Score};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskKey {
    pub company_id: CompanyId,
    pub month: Month,
}

impl std::fmt::Display for TaskKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.company_id, self.month)
    }
}

impl From<&MonthlyDossier> for TaskKey {
    fn from(d: &MonthlyDossier) -> Self {
        Self {
            company_id: d.company_id.clone(),
            month: d.month,
        }
    }
}

/// Rater roster (TOML).
///
/// ```toml
/// admin_token = "s3cret"
///
/// [[raters]]
/// id = "expert-a"
/// token = "token-a"
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaterRoster {
    #[serde(default)]
    pub admin_token: Option<String>,
    pub raters: Vec<RaterEntry>,
}

/// Raters whose scores make up one assessment. Larger cohorts split the
/// tasks between them through `assigned`.
pub const RATERS_PER_TASK: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaterEntry {
    pub id: String,
    pub token: String,
    /// Task keys (`company:YYYY-MM`) in order; every task when absent.
    #[serde(default)]
    pub assigned: Option<Vec<String>>,
}

impl RaterRoster {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub completed: usize,
    pub total: usize,
}

#[derive(Debug, Clone)]
pub struct RaterSession {
    pub rater_id: String,
    pub assigned: Vec<TaskKey>,
    /// Current score per completed task.
    pub completed: BTreeMap<TaskKey, Score>,
    pub started_at: Option<DateTime<Utc>>,
    token: String,
}

impl RaterSession {
    pub fn progress(&self) -> Progress {
        Progress {
            completed: self.completed.len(),
            total: self.assigned.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingSubmission {
    pub rater_id: String,
    pub company_id: CompanyId,
    pub month: Month,
    /// Unvalidated.
    pub score: i64,
    #[serde(default)]
    pub idempotency_key: Option<String>,
}

/// One line of the submission log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub rater_id: String,
    pub company_id: CompanyId,
    pub month: Month,
    pub score: Score,
    pub submitted_at: DateTime<Utc>,
    /// The value this entry replaced, if any.
    #[serde(default)]
    pub previous: Option<Score>,
    #[serde(default)]
    pub idempotency_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Ack {
    pub progress: Progress,
    pub overwritten: bool,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskView {
    pub company_id: CompanyId,
    pub company_name: String,
    pub month: Month,
    pub rows: Vec<crate::dossier::DossierRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NextTask<'a> {
    Task {
        dossier: &'a MonthlyDossier,
        rubric: &'a Rubric,
        progress: Progress,
    },
    Done {
        progress: Progress,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportBundle {
    pub assessments: Vec<HumanAssessment>,
    pub inter_rater: Option<InterRaterAgreement>,
}

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("unknown rater `{0}`")]
    UnknownRater(String),
    #[error("unknown task {0}")]
    UnknownTask(TaskKey),
    #[error("score {0} is outside 1..=5")]
    InvalidScore(i64),
    #[error("task {task} is not assigned to rater `{rater}`")]
    NotAssigned { rater: String, task: TaskKey },
    #[error("incomplete coverage: {} missing (rater, task) pair(s)", missing.len())]
    Incomplete { missing: Vec<(String, TaskKey)> },
    #[error("task {task} has {found} rater(s), export requires {required}")]
    RaterCount { task: TaskKey, found: usize, required: usize },
    #[error("roster: {0}")]
    Roster(String),
    #[error("submission log: {0}")]
    Storage(#[from] io::Error),
}

/// Rater sessions over a fixed task list, backed by a durable log. Not locked;
/// [`http`] wraps it in a mutex.
pub struct AnnotationStore {
    tasks: Vec<MonthlyDossier>,
    index: HashMap<TaskKey, usize>,
    rubric: Rubric,
    sessions: BTreeMap<String, RaterSession>,
    admin_token: Option<String>,
    audit: Vec<LogEntry>,
    log: Option<(PathBuf, File)>,
}

impl AnnotationStore {
    /// In-memory store (no durability); for tests and dry runs.
    pub fn in_memory(tasks: Vec<MonthlyDossier>, roster: &RaterRoster) -> Result<Self, AnnotationError> {
        let index: HashMap<TaskKey, usize> = tasks.iter().enumerate().map(|(i, d)| (TaskKey::from(d), i)).collect();
        if index.len() != tasks.len() {
            return Err(AnnotationError::Roster("duplicate task keys in dossier set".into()));
        }
        let mut sessions = BTreeMap::new();
        let mut tokens = BTreeSet::new();
        for r in &roster.raters {
            if !tokens.insert(r.token.clone()) || roster.admin_token.as_deref() == Some(r.token.as_str()) {
                return Err(AnnotationError::Roster(format!("token of rater `{}` is not unique", r.id)));
            }
            let assigned = match &r.assigned {
                None => tasks.iter().map(TaskKey::from).collect(),
                Some(keys) => keys
                    .iter()
                    .map(|k| {
                        let key = parse_task_key(k).ok_or_else(|| AnnotationError::Roster(format!("bad task key `{k}`")))?;
                        if index.contains_key(&key) {
                            Ok(key)
                        } else {
                            Err(AnnotationError::UnknownTask(key))
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            };
            let session = RaterSession {
                rater_id: r.id.clone(),
                assigned,
                completed: BTreeMap::new(),
                started_at: None,
                token: r.token.clone(),
            };
            if sessions.insert(r.id.clone(), session).is_some() {
                return Err(AnnotationError::Roster(format!("duplicate rater `{}`", r.id)));
            }
        }
        Ok(Self {
            tasks,
            index,
            rubric: Rubric::v1().clone(),
            sessions,
            admin_token: roster.admin_token.clone(),
            audit: Vec::new(),
            log: None,
        })
    }

    /// Durable store: replays `log_path` if it exists, then appends to it.
    pub fn open(tasks: Vec<MonthlyDossier>, roster: &RaterRoster, log_path: &Path) -> Result<Self, AnnotationError> {
        let mut store = Self::in_memory(tasks, roster)?;
        if log_path.exists() {
            let reader = BufReader::new(File::open(log_path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: LogEntry = serde_json::from_str(&line).map_err(|e| {
                    io::Error::new(io::ErrorKind::InvalidData, format!("{}:{}: {e}", log_path.display(), i + 1))
                })?;
                store.apply(entry)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(log_path)?;
        store.log = Some((log_path.to_path_buf(), file));
        Ok(store)
    }

    pub fn rubric(&self) -> &Rubric {
        &self.rubric
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.log.as_ref().map(|(p, _)| p.as_path())
    }

    /// Rater id owning `token`, if any.
    pub fn rater_for_token(&self, token: &str) -> Option<&str> {
        self.sessions
            .values()
            .find(|s| s.token == token)
            .map(|s| s.rater_id.as_str())
    }

    pub fn is_admin_token(&self, token: &str) -> bool {
        self.admin_token.as_deref() == Some(token)
    }

    pub fn session(&self, rater_id: &str) -> Result<&RaterSession, AnnotationError> {
        self.sessions
            .get(rater_id)
            .ok_or_else(|| AnnotationError::UnknownRater(rater_id.to_string()))
    }

    pub fn progress(&self, rater_id: &str) -> Result<Progress, AnnotationError> {
        Ok(self.session(rater_id)?.progress())
    }

    pub fn next_task(&mut self, rater_id: &str) -> Result<NextTask<'_>, AnnotationError> {
        let session = self
            .sessions
            .get_mut(rater_id)
            .ok_or_else(|| AnnotationError::UnknownRater(rater_id.to_string()))?;
        session.started_at.get_or_insert_with(Utc::now);
        let session = &self.sessions[rater_id];
        let progress = session.progress();
        match session.assigned.iter().find(|k| !session.completed.contains_key(*k)) {
            Some(key) => Ok(NextTask::Task {
                dossier: &self.tasks[self.index[key]],
                rubric: &self.rubric,
                progress,
            }),
            None => Ok(NextTask::Done { progress }),
        }
    }

    pub fn submit(&mut self, sub: RatingSubmission) -> Result<Ack, AnnotationError> {
        self.submit_at(sub, Utc::now())
    }

    /// The log entry is synced to disk before in-memory state changes.
    pub fn submit_at(&mut self, sub: RatingSubmission, at: DateTime<Utc>) -> Result<Ack, AnnotationError> {
        let score = u8::try_from(sub.score)
            .ok()
            .and_then(|v| Score::new(v).ok())
            .ok_or(AnnotationError::InvalidScore(sub.score))?;
        let session = self.session(&sub.rater_id)?;
        let task = TaskKey {
            company_id: sub.company_id.clone(),
            month: sub.month,
        };
        if !session.assigned.contains(&task) {
            return Err(AnnotationError::NotAssigned {
                rater: sub.rater_id.clone(),
                task,
            });
        }
        if let Some(key) = &sub.idempotency_key {
            if let Some(prior) = self
                .audit
                .iter()
                .find(|e| e.rater_id == sub.rater_id && e.idempotency_key.as_ref() == Some(key))
            {
                return Ok(Ack {
                    progress: session.progress(),
                    overwritten: prior.previous.is_some(),
                    seq: prior.seq,
                });
            }
        }
        let entry = LogEntry {
            seq: self.audit.len() as u64 + 1,
            rater_id: sub.rater_id,
            company_id: sub.company_id,
            month: sub.month,
            score,
            submitted_at: at,
            previous: session.completed.get(&task).copied(),
            idempotency_key: sub.idempotency_key,
        };
        if let Some((_, file)) = &mut self.log {
            let mut line = serde_json::to_string(&entry).map_err(io::Error::other)?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.sync_data()?;
        }
        let overwritten = entry.previous.is_some();
        let seq = entry.seq;
        let rater = entry.rater_id.clone();
        self.apply(entry)?;
        Ok(Ack {
            progress: self.sessions[&rater].progress(),
            overwritten,
            seq,
        })
    }

    fn apply(&mut self, entry: LogEntry) -> Result<(), AnnotationError> {
        let task = TaskKey {
            company_id: entry.company_id.clone(),
            month: entry.month,
        };
        let session = self
            .sessions
            .get_mut(&entry.rater_id)
            .ok_or_else(|| AnnotationError::UnknownRater(entry.rater_id.clone()))?;
        if !session.assigned.contains(&task) {
            return Err(AnnotationError::NotAssigned {
                rater: entry.rater_id.clone(),
                task,
            });
        }
        session.completed.insert(task, entry.score);
        self.audit.push(entry);
        Ok(())
    }

    /// Every log entry, oldest first.
    pub fn audit_log(&self) -> &[LogEntry] {
        &self.audit
    }

    /// One assessment per task in task order, experts ordered by rater id.
    pub fn export_assessments(&self) -> Result<ExportBundle, AnnotationError> {
        let mut missing = Vec::new();
        for s in self.sessions.values() {
            for key in &s.assigned {
                if !s.completed.contains_key(key) {
                    missing.push((s.rater_id.clone(), key.clone()));
                }
            }
        }
        if !missing.is_empty() {
            return Err(AnnotationError::Incomplete { missing });
        }
        let mut assessments = Vec::with_capacity(self.tasks.len());
        let (mut first, mut second) = (Vec::new(), Vec::new());
        for d in &self.tasks {
            let key = TaskKey::from(d);
            let scores: Vec<Score> = self
                .sessions
                .values()
                .filter_map(|s| s.completed.get(&key).copied())
                .collect();
            if scores.len() != RATERS_PER_TASK {
                return Err(AnnotationError::RaterCount {
                    task: key,
                    found: scores.len(),
                    required: RATERS_PER_TASK,
                });
            }
            first.push(scores[0]);
            second.push(scores[1]);
            assessments.push(HumanAssessment::new(key.company_id, key.month, scores[0], scores[1]));
        }
        let inter_rater = InterRaterAgreement::between(&first, &second).ok();
        Ok(ExportBundle {
            assessments,
            inter_rater,
        })
    }

    pub fn task_view(dossier: &MonthlyDossier) -> TaskView {
        TaskView {
            company_id: dossier.company_id.clone(),
            company_name: dossier.company_name.clone(),
            month: dossier.month,
            rows: dossier.rows(),
        }
    }
}

fn parse_task_key(s: &str) -> Option<TaskKey> {
    let (company, month) = s.rsplit_once(':')?;
    Some(TaskKey {
        company_id: CompanyId::new(company),
        month: month.parse().ok()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dossier::DisclosureSummary;
    use chrono::TimeZone;

    pub(crate) fn tasks(n: u32) -> Vec<MonthlyDossier> {
        (1..=n)
            .map(|i| {
                let month = Month::new(2022 + (i as i32 - 1) / 12, (i - 1) % 12 + 1).unwrap();
                let at = crate::ingest::kst()
                    .with_ymd_and_hms(month.year(), month.month(), 10, 9, 30, 0)
                    .unwrap();
                MonthlyDossier::build(
                    CompanyId::new("079160"),
                    "CJ CGV",
                    month,
                    vec![DisclosureSummary {
                        disclosed_at: at,
                        title: "Loan Decision".into(),
                        summary: format!("Loan number {i}."),
                    }],
                    15,
                )
                .unwrap()
            })
            .collect()
    }

    pub(crate) fn roster() -> RaterRoster {
        toml::from_str(
            r#"
            admin_token = "admin"
            [[raters]]
            id = "expert-a"
            token = "ta"
            [[raters]]
            id = "expert-b"
            token = "tb"
            "#,
        )
        .unwrap()
    }

    fn sub(rater: &str, d: &MonthlyDossier, score: i64) -> RatingSubmission {
        RatingSubmission {
            rater_id: rater.into(),
            company_id: d.company_id.clone(),
            month: d.month,
            score,
            idempotency_key: None,
        }
    }

    #[test]
    fn fresh_session_starts_at_first_task() {
        let t = tasks(3);
        let mut store = AnnotationStore::in_memory(t.clone(), &roster()).unwrap();
        match store.next_task("expert-a").unwrap() {
            NextTask::Task { dossier, progress, .. } => {
                assert_eq!(dossier, &t[0]);
                assert_eq!(progress, Progress { completed: 0, total: 3 });
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(store.next_task("nobody"), Err(AnnotationError::UnknownRater(_))));
    }

    #[test]
    fn submit_validates_and_advances() {
        let t = tasks(2);
        let mut store = AnnotationStore::in_memory(t.clone(), &roster()).unwrap();
        assert!(matches!(store.submit(sub("expert-a", &t[0], 6)), Err(AnnotationError::InvalidScore(6))));
        assert_eq!(store.progress("expert-a").unwrap().completed, 0);
        let ack = store.submit(sub("expert-a", &t[0], 3)).unwrap();
        assert_eq!(ack.progress, Progress { completed: 1, total: 2 });
        assert!(!ack.overwritten);
        match store.next_task("expert-a").unwrap() {
            NextTask::Task { dossier, .. } => assert_eq!(dossier, &t[1]),
            other => panic!("{other:?}"),
        }
        store.submit(sub("expert-a", &t[1], 4)).unwrap();
        assert!(matches!(store.next_task("expert-a").unwrap(), NextTask::Done { .. }));
        // the other rater is untouched
        assert_eq!(store.progress("expert-b").unwrap().completed, 0);
    }

    #[test]
    fn resubmission_overwrites_with_audit() {
        let t = tasks(1);
        let mut store = AnnotationStore::in_memory(t.clone(), &roster()).unwrap();
        store.submit(sub("expert-a", &t[0], 2)).unwrap();
        let ack = store.submit(sub("expert-a", &t[0], 4)).unwrap();
        assert!(ack.overwritten);
        assert_eq!(ack.progress.completed, 1);
        let audit = store.audit_log();
        assert_eq!(audit.len(), 2);
        assert_eq!(audit[1].previous, Some(Score::new(2).unwrap()));
        assert_eq!(store.session("expert-a").unwrap().completed.values().next(), Some(&Score::new(4).unwrap()));
    }

    #[test]
    fn unassigned_task_is_refused() {
        let t = tasks(2);
        let mut r = roster();
        r.raters[0].assigned = Some(vec![format!("079160:{}", t[0].month)]);
        let mut store = AnnotationStore::in_memory(t.clone(), &r).unwrap();
        assert!(matches!(
            store.submit(sub("expert-a", &t[1], 3)),
            Err(AnnotationError::NotAssigned { .. })
        ));
    }

    #[test]
    fn idempotent_retry_does_not_duplicate() {
        let t = tasks(1);
        let mut store = AnnotationStore::in_memory(t.clone(), &roster()).unwrap();
        let mut s = sub("expert-a", &t[0], 3);
        s.idempotency_key = Some("k1".into());
        let a = store.submit(s.clone()).unwrap();
        let b = store.submit(s).unwrap();
        assert_eq!(a, b);
        assert_eq!(store.audit_log().len(), 1);
    }

    #[test]
    fn export_requires_full_coverage() {
        let t = tasks(2);
        let mut store = AnnotationStore::in_memory(t.clone(), &roster()).unwrap();
        for d in &t {
            store.submit(sub("expert-a", d, 3)).unwrap();
        }
        store.submit(sub("expert-b", &t[0], 4)).unwrap();
        match store.export_assessments() {
            Err(AnnotationError::Incomplete { missing }) => {
                assert_eq!(missing, vec![("expert-b".to_string(), TaskKey::from(&t[1]))]);
            }
            other => panic!("{other:?}"),
        }
        store.submit(sub("expert-b", &t[1], 5)).unwrap();
        let bundle = store.export_assessments().unwrap();
        let consensus: Vec<u8> = bundle.assessments.iter().map(|a| a.consensus.get()).collect();
        assert_eq!(consensus, [3, 4]);
        assert_eq!(bundle.inter_rater.unwrap().agreement, 0.0);
    }

    #[test]
    fn perfect_agreement_export() {
        let t = tasks(3);
        let mut store = AnnotationStore::in_memory(t.clone(), &roster()).unwrap();
        for (d, s) in t.iter().zip([1, 3, 5]) {
            store.submit(sub("expert-a", d, s)).unwrap();
            store.submit(sub("expert-b", d, s)).unwrap();
        }
        let ir = store.export_assessments().unwrap().inter_rater.unwrap();
        assert_eq!((ir.agreement, ir.kappa), (1.0, Some(1.0)));
    }

    #[test]
    fn log_replay_restores_state() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("subs.jsonl");
        let t = tasks(2);
        {
            let mut store = AnnotationStore::open(t.clone(), &roster(), &log).unwrap();
            store.submit(sub("expert-a", &t[0], 2)).unwrap();
            store.submit(sub("expert-a", &t[0], 3)).unwrap();
            store.submit(sub("expert-b", &t[1], 5)).unwrap();
        }
        let store = AnnotationStore::open(t, &roster(), &log).unwrap();
        assert_eq!(store.audit_log().len(), 3);
        assert_eq!(store.progress("expert-a").unwrap().completed, 1);
        assert_eq!(store.progress("expert-b").unwrap().completed, 1);
    }

    #[test]
    fn roster_rejects_shared_tokens() {
        let mut r = roster();
        r.raters[1].token = "ta".into();
        assert!(matches!(AnnotationStore::in_memory(tasks(1), &r), Err(AnnotationError::Roster(_))));
    }
}
