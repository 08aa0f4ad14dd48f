use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendError, BackendReply, CompletionBackend, CompletionRequest, ModelConfig, Purpose, Usage};

const CASSETTE_VERSION: u32 = 1;
const PREVIEW_CHARS: usize = 160;

/// Request fingerprint → recorded response.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cassette {
    pub version: u32,
    pub entries: BTreeMap<String, CassetteEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub model_id: String,
    pub purpose: Purpose,
    /// Start of the user text, for humans reading the file.
    pub request_preview: String,
    pub response: String,
}

impl Cassette {
    pub fn new() -> Self {
        Self {
            version: CASSETTE_VERSION,
            entries: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cassette: Cassette =
            serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        if cassette.version != CASSETTE_VERSION {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("unsupported cassette version {}", cassette.version),
            ));
        }
        Ok(cassette)
    }

    /// Writes via a temporary file and rename.
    /// The exact text `save` writes.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("cassette serializes");
        text.push('\n');
        text
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_json())?;
        std::fs::rename(tmp, path)
    }

    pub fn insert(&mut self, request: &CompletionRequest, model_id: &str, response: impl Into<String>) {
        self.entries.insert(
            request.fingerprint(model_id),
            CassetteEntry {
                model_id: model_id.to_string(),
                purpose: request.purpose,
                request_preview: request.user.chars().take(PREVIEW_CHARS).collect(),
                response: response.into(),
            },
        );
    }

    pub fn lookup(&self, request: &CompletionRequest, model_id: &str) -> Option<&str> {
        self.entries
            .get(&request.fingerprint(model_id))
            .map(|e| e.response.as_str())
    }
}

pub enum CassetteMode {
    /// Misses are errors; nothing is written.
    Replay,
    /// Misses go to the inner backend and are appended to the file.
    Record {
        inner: Box<dyn CompletionBackend>,
        path: PathBuf,
    },
}

pub struct CassetteBackend {
    cassette: Mutex<Cassette>,
    mode: CassetteMode,
}

impl CassetteBackend {
    pub fn replay(cassette: Cassette) -> Self {
        Self {
            cassette: Mutex::new(cassette),
            mode: CassetteMode::Replay,
        }
    }

    pub fn open(path: &Path) -> io::Result<Self> {
        Ok(Self::replay(Cassette::load(path)?))
    }

    /// Record mode; an existing file at `path` is loaded and extended.
    pub fn record(inner: Box<dyn CompletionBackend>, path: PathBuf) -> io::Result<Self> {
        let cassette = if path.exists() {
            Cassette::load(&path)?
        } else {
            Cassette::new()
        };
        Ok(Self {
            cassette: Mutex::new(cassette),
            mode: CassetteMode::Record { inner, path },
        })
    }

    pub fn snapshot(&self) -> Cassette {
        self.cassette.lock().unwrap().clone()
    }
}

impl CompletionBackend for CassetteBackend {
    fn complete(&self, request: &CompletionRequest, config: &ModelConfig) -> Result<BackendReply, BackendError> {
        if let Some(text) = self.cassette.lock().unwrap().lookup(request, &config.model_id) {
            return Ok(BackendReply {
                text: text.to_string(),
                usage: Usage::default(),
            });
        }
        match &self.mode {
            CassetteMode::Replay => Err(BackendError::NotRecorded(request.fingerprint(&config.model_id))),
            CassetteMode::Record { inner, path } => {
                let reply = inner.complete(request, config)?;
                let mut cassette = self.cassette.lock().unwrap();
                cassette.insert(request, &config.model_id, reply.text.clone());
                cassette
                    .save(path)
                    .map_err(|e| BackendError::Transport(format!("cassette write failed: {e}")))?;
                Ok(reply)
            }
        }
    }
}
