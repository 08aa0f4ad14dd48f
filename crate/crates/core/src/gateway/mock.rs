use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::{BackendError, BackendReply, CompletionBackend, CompletionRequest, ModelConfig, Purpose, Usage};
use crate::rating::Score;

type Responder = dyn Fn(&CompletionRequest, &ModelConfig) -> String + Send + Sync;
type Script = VecDeque<Result<String, BackendError>>;

/// Deterministic in-process backend.
///
/// Resolution order per call: a per-fingerprint script, then the global fault
/// queue, then the canned fingerprint table, then the responder function.
pub struct MockBackend {
    canned: HashMap<String, String>,
    responder: Box<Responder>,
    faults: Mutex<VecDeque<BackendError>>,
    scripts: Mutex<HashMap<String, Script>>,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn with_responder(f: impl Fn(&CompletionRequest, &ModelConfig) -> String + Send + Sync + 'static) -> Self {
        Self {
            canned: HashMap::new(),
            responder: Box::new(f),
            faults: Mutex::new(VecDeque::new()),
            scripts: Mutex::new(HashMap::new()),
            calls: AtomicUsize::new(0),
        }
    }

    /// Replies with the user text.
    pub fn echo() -> Self {
        Self::with_responder(|req, _| req.user.clone())
    }

    /// Replies with a fixed text.
    pub fn constant(text: impl Into<String>) -> Self {
        let text = text.into();
        Self::with_responder(move |_, _| text.clone())
    }

    /// Summaries are the first sentence of the disclosure body; ratings are a
    /// score derived from a hash of the dossier text, in the canonical
    /// `Score:` / `Reasons:` format.
    pub fn standard() -> Self {
        Self::with_responder(|req, cfg| match req.purpose {
            Purpose::Summarize => {
                let body = req.user.split_once("\n\n").map(|(_, b)| b).unwrap_or(&req.user);
                first_sentence(body).to_string()
            }
            Purpose::Rate | Purpose::Other => {
                let digest = Sha256::digest(format!("{}\u{0}{}", cfg.model_id, req.user).as_bytes());
                let score = Score::new(digest[0] % 5 + 1).expect("in range");
                format!(
                    "Score: {} ({})\nReasons: Deterministic mock assessment of {} disclosure rows.",
                    score.get(),
                    score.label(),
                    req.user.matches("\nDate: ").count() + usize::from(req.user.starts_with("Date: "))
                )
            }
        })
    }

    /// Canned reply for an exact request under a model id.
    pub fn with_response(mut self, request: &CompletionRequest, model_id: &str, text: impl Into<String>) -> Self {
        self.canned.insert(request.fingerprint(model_id), text.into());
        self
    }

    /// Failures returned, in order, before normal responses resume.
    pub fn with_faults(self, faults: impl IntoIterator<Item = BackendError>) -> Self {
        self.faults.lock().unwrap().extend(faults);
        self
    }

    /// Scripted outcomes for one request fingerprint, consumed in order.
    pub fn with_script(
        self,
        request: &CompletionRequest,
        model_id: &str,
        outcomes: impl IntoIterator<Item = Result<String, BackendError>>,
    ) -> Self {
        self.scripts
            .lock()
            .unwrap()
            .entry(request.fingerprint(model_id))
            .or_default()
            .extend(outcomes);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl CompletionBackend for MockBackend {
    fn complete(&self, request: &CompletionRequest, config: &ModelConfig) -> Result<BackendReply, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let fingerprint = request.fingerprint(&config.model_id);
        let scripted = self
            .scripts
            .lock()
            .unwrap()
            .get_mut(&fingerprint)
            .and_then(VecDeque::pop_front);
        let text = match scripted {
            Some(outcome) => outcome?,
            None => {
                if let Some(fault) = self.faults.lock().unwrap().pop_front() {
                    return Err(fault);
                }
                match self.canned.get(&fingerprint) {
                    Some(t) => t.clone(),
                    None => (self.responder)(request, config),
                }
            }
        };
        Ok(BackendReply {
            usage: Usage {
                prompt_tokens: request.estimated_tokens() as u64,
                completion_tokens: crate::ingest::estimate_tokens(&text) as u64,
            },
            text,
        })
    }
}

/// Text up to and including the first sentence terminator followed by
/// whitespace or end of text.
pub fn first_sentence(text: &str) -> &str {
    let text = text.trim();
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?' | '。') {
            match chars.peek() {
                None => return text,
                Some((_, next)) if next.is_whitespace() => return &text[..i + c.len_utf8()],
                _ => {}
            }
        }
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_sentence_rules() {
        assert_eq!(first_sentence("One. Two."), "One.");
        assert_eq!(first_sentence("Price is 7,630 KRW. Done"), "Price is 7,630 KRW.");
        assert_eq!(first_sentence("Rate of 7.37% applies. Next"), "Rate of 7.37% applies.");
        assert_eq!(first_sentence("  no terminator  "), "no terminator");
        assert_eq!(first_sentence(""), "");
    }

    #[test]
    fn script_takes_precedence_and_then_falls_through() {
        let req = CompletionRequest::new("s", "u");
        let cfg = ModelConfig::new("m");
        let mock = MockBackend::constant("fallback").with_script(
            &req,
            "m",
            [Err(BackendError::Timeout), Ok("scripted".to_string())],
        );
        assert_eq!(mock.complete(&req, &cfg), Err(BackendError::Timeout));
        assert_eq!(mock.complete(&req, &cfg).unwrap().text, "scripted");
        assert_eq!(mock.complete(&req, &cfg).unwrap().text, "fallback");
        assert_eq!(mock.calls(), 3);
    }

    #[test]
    fn canned_table_by_fingerprint() {
        let req = CompletionRequest::new("s", "u");
        let mock = MockBackend::constant("other").with_response(&req, "m", "canned");
        assert_eq!(mock.complete(&req, &ModelConfig::new("m")).unwrap().text, "canned");
        assert_eq!(mock.complete(&req, &ModelConfig::new("n")).unwrap().text, "other");
    }

    #[test]
    fn standard_rating_is_stable() {
        let req = CompletionRequest::new("rubric", "Date: 2023-06-01\nTime: 09:00\nDetails: x").with_purpose(Purpose::Rate);
        let cfg = ModelConfig::new("m");
        let a = MockBackend::standard().complete(&req, &cfg).unwrap().text;
        let b = MockBackend::standard().complete(&req, &cfg).unwrap().text;
        assert_eq!(a, b);
        assert!(a.starts_with("Score: "));
        assert!(a.contains("1 disclosure rows"));
    }
}
