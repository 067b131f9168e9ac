//! Listening-test server state: blinded screens, rating/flag ingestion with
//! an append-only JSONL log, and CSV exports.
//!
//! Every acknowledged write is one log line, fsynced before the ack. On
//! open the log is replayed through the same validation path, so a restart
//! reproduces the exact pre-crash state. A truncated final line (a write
//! that never got acked) is skipped.

mod http;

pub use http::{router, serve, AppState};

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ConfigError, KeyValues};
use crate::mushra::{
    write_flags, write_ratings, Assignment, ErrorCategory, ErrorFlag, MushraError, Rating, Severity,
};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown listener {0}")]
    UnknownListener(String),
    #[error("unknown stimulus {0}")]
    UnknownStimulus(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("invalid submission: {0}")]
    Validation(String),
    #[error("log line {line}: {detail}")]
    Log { line: usize, detail: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mushra(#[from] MushraError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u16,
    pub assignment: PathBuf,
    pub audio_root: PathBuf,
    pub log: PathBuf,
    /// Mixed into stimulus tokens so they cannot be recomputed by clients.
    pub token_salt: String,
}

pub const SERVICE_KEYS: &[&str] = &[
    "bind",
    "port",
    "assignment",
    "audio_root",
    "log",
    "token_salt",
];

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
            assignment: "assignment.json".into(),
            audio_root: ".".into(),
            log: "eval_log.jsonl".into(),
            token_salt: "ssws".into(),
        }
    }
}

impl ServiceConfig {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self, ConfigError> {
        kv.reject_unknown(SERVICE_KEYS)?;
        let d = Self::default();
        Ok(Self {
            bind: kv.get_or("bind", d.bind)?,
            port: kv.get_or("port", d.port)?,
            assignment: kv
                .get_or::<String>("assignment", d.assignment.display().to_string())?
                .into(),
            audio_root: kv
                .get_or::<String>("audio_root", d.audio_root.display().to_string())?
                .into(),
            log: kv
                .get_or::<String>("log", d.log.display().to_string())?
                .into(),
            token_salt: kv.get_or("token_salt", d.token_salt)?,
        })
    }
}

/// One blinded stimulus on a screen.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotPayload {
    pub slot: String,
    pub token: String,
    pub audio_url: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum NextScreen {
    Screen {
        screen_id: String,
        utterance_id: String,
        /// 1-based position in the listener's list.
        index: usize,
        total: usize,
        slots: Vec<SlotPayload>,
    },
    Done {
        completed: usize,
        total: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotFlag {
    pub slot: String,
    pub category: String,
    pub severity: String,
    #[serde(default)]
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingSubmission {
    pub screen_id: String,
    /// Slot id → integer score in 0..=100.
    pub scores: BTreeMap<String, i64>,
    #[serde(default)]
    pub flags: Vec<SlotFlag>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagSubmission {
    pub screen_id: String,
    pub flags: Vec<SlotFlag>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub accepted: bool,
    pub screen_id: String,
    pub completed: usize,
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LogRecord {
    Ratings {
        listener: String,
        submission: RatingSubmission,
        timestamp: String,
    },
    Flags {
        listener: String,
        submission: FlagSubmission,
    },
}

pub fn slot_label(i: usize) -> String {
    let mut s = String::new();
    let mut n = i;
    loop {
        s.insert(0, (b'A' + (n % 26) as u8) as char);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    s
}

fn now_timestamp() -> String {
    let d = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .unwrap_or_default();
    format!("{}.{:03}", d.as_secs(), d.subsec_millis())
}

pub struct EvalStore {
    assignment: Assignment,
    audio_root: PathBuf,
    listener_index: HashMap<String, usize>,
    cursors: Vec<usize>,
    /// token → (utterance, system)
    tokens: HashMap<String, (String, String)>,
    ratings: Vec<Rating>,
    flags: Vec<ErrorFlag>,
    log: Option<File>,
    clock: fn() -> String,
    salt: String,
}

impl EvalStore {
    /// In-memory store with no persistence.
    pub fn new(assignment: Assignment, audio_root: impl Into<PathBuf>, salt: &str) -> Self {
        let mut tokens = HashMap::new();
        for u in &assignment.utterances {
            for s in &assignment.systems {
                tokens.insert(stimulus_token(salt, &u.id, s), (u.id.clone(), s.clone()));
            }
        }
        let listener_index = assignment
            .listeners
            .iter()
            .enumerate()
            .map(|(i, l)| (l.listener_id.clone(), i))
            .collect();
        Self {
            cursors: vec![0; assignment.listeners.len()],
            assignment,
            audio_root: audio_root.into(),
            listener_index,
            tokens,
            ratings: Vec::new(),
            flags: Vec::new(),
            log: None,
            clock: now_timestamp,
            salt: salt.to_string(),
        }
    }

    /// Replays `log` (if present) and appends to it from then on.
    pub fn open(
        assignment: Assignment,
        audio_root: impl Into<PathBuf>,
        salt: &str,
        log: &Path,
    ) -> Result<Self, ServiceError> {
        let mut store = Self::new(assignment, audio_root, salt);
        if log.exists() {
            let text = std::fs::read_to_string(log)?;
            let mut good_end = 0;
            let mut lines = text.split_inclusive('\n').enumerate().peekable();
            while let Some((i, line)) = lines.next() {
                let is_last = lines.peek().is_none();
                if line.trim().is_empty() {
                    good_end += line.len();
                    continue;
                }
                let rec: LogRecord = match serde_json::from_str(line.trim_end()) {
                    Ok(r) => r,
                    Err(e) if is_last => {
                        log::warn!("dropping truncated final log line: {e}");
                        break;
                    }
                    Err(e) => {
                        return Err(ServiceError::Log {
                            line: i + 1,
                            detail: e.to_string(),
                        })
                    }
                };
                store.apply(rec).map_err(|e| ServiceError::Log {
                    line: i + 1,
                    detail: e.to_string(),
                })?;
                good_end += line.len();
            }
            let f = OpenOptions::new().write(true).open(log)?;
            if good_end < text.len() {
                f.set_len(good_end as u64)?;
            }
            if !text[..good_end].is_empty() && !text[..good_end].ends_with('\n') {
                let mut f = OpenOptions::new().append(true).open(log)?;
                f.write_all(b"\n")?;
            }
        }
        store.log = Some(OpenOptions::new().create(true).append(true).open(log)?);
        Ok(store)
    }

    pub fn from_config(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let a = Assignment::load(&config.assignment)?;
        Self::open(a, &config.audio_root, &config.token_salt, &config.log)
    }

    /// Replaces the timestamp source (tests use a fixed clock).
    pub fn set_clock(&mut self, clock: fn() -> String) {
        self.clock = clock;
    }

    pub fn assignment(&self) -> &Assignment {
        &self.assignment
    }

    pub fn ratings(&self) -> &[Rating] {
        &self.ratings
    }

    pub fn flags(&self) -> &[ErrorFlag] {
        &self.flags
    }

    fn listener(&self, id: &str) -> Result<usize, ServiceError> {
        self.listener_index
            .get(id)
            .copied()
            .ok_or_else(|| ServiceError::UnknownListener(id.to_string()))
    }

    pub fn next_screen(&self, listener: &str) -> Result<NextScreen, ServiceError> {
        let li = self.listener(listener)?;
        let screens = &self.assignment.listeners[li].screens;
        let cursor = self.cursors[li];
        let Some(sc) = screens.get(cursor) else {
            return Ok(NextScreen::Done {
                completed: cursor,
                total: screens.len(),
            });
        };
        let slots = sc
            .system_order
            .iter()
            .enumerate()
            .map(|(k, sys)| {
                let token = stimulus_token(&self.salt, &sc.utterance_id, sys);
                SlotPayload {
                    slot: slot_label(k),
                    audio_url: format!("/audio/{token}.wav"),
                    token,
                }
            })
            .collect();
        Ok(NextScreen::Screen {
            screen_id: sc.screen_id.clone(),
            utterance_id: sc.utterance_id.clone(),
            index: cursor + 1,
            total: screens.len(),
            slots,
        })
    }

    /// Finds the listener's screen by id; `current_only` requires it to be
    /// the one at the cursor.
    fn screen_for(
        &self,
        li: usize,
        screen_id: &str,
        current_only: bool,
    ) -> Result<usize, ServiceError> {
        let screens = &self.assignment.listeners[li].screens;
        let pos = screens
            .iter()
            .position(|s| s.screen_id == screen_id)
            .ok_or_else(|| {
                ServiceError::Conflict(format!(
                    "screen {screen_id} is not assigned to this listener"
                ))
            })?;
        let cursor = self.cursors[li];
        if current_only && pos < cursor {
            return Err(ServiceError::Conflict(format!(
                "screen {screen_id} was already submitted"
            )));
        }
        if pos > cursor || (current_only && pos != cursor) {
            return Err(ServiceError::Conflict(format!(
                "screen {screen_id} is not the current screen"
            )));
        }
        Ok(pos)
    }

    fn build_flags(
        &self,
        li: usize,
        pos: usize,
        flags: &[SlotFlag],
    ) -> Result<Vec<ErrorFlag>, ServiceError> {
        let l = &self.assignment.listeners[li];
        let sc = &l.screens[pos];
        flags
            .iter()
            .map(|f| {
                let k = (0..sc.system_order.len())
                    .find(|&k| slot_label(k) == f.slot)
                    .ok_or_else(|| ServiceError::Validation(format!("unknown slot {}", f.slot)))?;
                let category: ErrorCategory = f
                    .category
                    .parse()
                    .map_err(|e: MushraError| ServiceError::Validation(e.to_string()))?;
                let severity: Severity = f
                    .severity
                    .parse()
                    .map_err(|e: MushraError| ServiceError::Validation(e.to_string()))?;
                Ok(ErrorFlag {
                    annotator_id: l.listener_id.clone(),
                    utterance_id: sc.utterance_id.clone(),
                    system: sc.system_order[k].clone(),
                    category,
                    severity,
                    note: f.note.clone(),
                })
            })
            .collect()
    }

    fn check_ratings(
        &self,
        li: usize,
        sub: &RatingSubmission,
    ) -> Result<(usize, Vec<(String, i64)>), ServiceError> {
        let pos = self.screen_for(li, &sub.screen_id, true)?;
        let sc = &self.assignment.listeners[li].screens[pos];
        let n = sc.system_order.len();
        let mut mapped = Vec::with_capacity(n);
        for (k, sys) in sc.system_order.iter().enumerate() {
            let slot = slot_label(k);
            let score = *sub.scores.get(&slot).ok_or_else(|| {
                ServiceError::Validation(format!("missing score for slot {slot}"))
            })?;
            if !(0..=100).contains(&score) {
                return Err(ServiceError::Validation(format!(
                    "score {score} for slot {slot} outside 0..=100"
                )));
            }
            mapped.push((sys.clone(), score));
        }
        if let Some(extra) = sub
            .scores
            .keys()
            .find(|s| !(0..n).any(|k| slot_label(k) == **s))
        {
            return Err(ServiceError::Validation(format!("unknown slot {extra}")));
        }
        Ok((pos, mapped))
    }

    fn apply(&mut self, rec: LogRecord) -> Result<Ack, ServiceError> {
        match rec {
            LogRecord::Ratings {
                listener,
                submission,
                timestamp,
            } => {
                let li = self.listener(&listener)?;
                let (pos, mapped) = self.check_ratings(li, &submission)?;
                let flags = self.build_flags(li, pos, &submission.flags)?;
                let uid = self.assignment.listeners[li].screens[pos]
                    .utterance_id
                    .clone();
                let domain = self
                    .assignment
                    .utterance(&uid)
                    .map(|u| u.domain.clone())
                    .unwrap_or_default();
                for (system, score) in mapped {
                    self.ratings.push(Rating {
                        listener_id: listener.clone(),
                        utterance_id: uid.clone(),
                        domain: domain.clone(),
                        system,
                        score: score as f64,
                        timestamp: timestamp.clone(),
                    });
                }
                self.flags.extend(flags);
                self.cursors[li] = pos + 1;
                Ok(self.ack(li, submission.screen_id))
            }
            LogRecord::Flags {
                listener,
                submission,
            } => {
                let li = self.listener(&listener)?;
                let pos = self.screen_for(li, &submission.screen_id, false)?;
                let flags = self.build_flags(li, pos, &submission.flags)?;
                self.flags.extend(flags);
                Ok(self.ack(li, submission.screen_id))
            }
        }
    }

    fn ack(&self, li: usize, screen_id: String) -> Ack {
        let total = self.assignment.listeners[li].screens.len();
        Ack {
            accepted: true,
            screen_id,
            completed: self.cursors[li],
            done: self.cursors[li] >= total,
        }
    }

    /// Validates, logs (fsync), then applies.
    fn commit(&mut self, rec: LogRecord) -> Result<Ack, ServiceError> {
        match &rec {
            LogRecord::Ratings {
                listener,
                submission,
                ..
            } => {
                let li = self.listener(listener)?;
                let (pos, _) = self.check_ratings(li, submission)?;
                self.build_flags(li, pos, &submission.flags)?;
            }
            LogRecord::Flags {
                listener,
                submission,
            } => {
                let li = self.listener(listener)?;
                let pos = self.screen_for(li, &submission.screen_id, false)?;
                self.build_flags(li, pos, &submission.flags)?;
            }
        }
        if let Some(f) = self.log.as_mut() {
            let mut line =
                serde_json::to_string(&rec).map_err(|e| ServiceError::Validation(e.to_string()))?;
            line.push('\n');
            f.write_all(line.as_bytes())?;
            f.sync_data()?;
        }
        self.apply(rec)
    }

    pub fn submit_ratings(
        &mut self,
        listener: &str,
        submission: RatingSubmission,
    ) -> Result<Ack, ServiceError> {
        let timestamp = (self.clock)();
        self.commit(LogRecord::Ratings {
            listener: listener.to_string(),
            submission,
            timestamp,
        })
    }

    /// Flags may target the current screen or any already-submitted one.
    pub fn submit_flags(
        &mut self,
        listener: &str,
        submission: FlagSubmission,
    ) -> Result<Ack, ServiceError> {
        self.commit(LogRecord::Flags {
            listener: listener.to_string(),
            submission,
        })
    }

    pub fn export_ratings(&self) -> Result<Vec<u8>, ServiceError> {
        let mut buf = Vec::new();
        write_ratings(&mut buf, &self.ratings)?;
        Ok(buf)
    }

    pub fn export_flags(&self) -> Result<Vec<u8>, ServiceError> {
        let mut buf = Vec::new();
        write_flags(&mut buf, &self.flags)?;
        Ok(buf)
    }

    /// Resolves a stimulus token to its audio file under the audio root.
    pub fn audio_path(&self, token: &str) -> Result<PathBuf, ServiceError> {
        let (u, s) = self
            .tokens
            .get(token)
            .ok_or_else(|| ServiceError::UnknownStimulus(token.to_string()))?;
        let rel = self
            .assignment
            .utterance(u)
            .and_then(|x| x.audio.get(s))
            .filter(|p| !p.is_empty())
            .ok_or_else(|| ServiceError::UnknownStimulus(token.to_string()))?;
        Ok(self.audio_root.join(rel))
    }
}

/// Opaque, stable identifier for one (utterance, system) stimulus.
pub fn stimulus_token(salt: &str, utterance: &str, system: &str) -> String {
    let mut h = Sha256::new();
    for part in [salt, utterance, system] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    h.finalize()
        .iter()
        .take(16)
        .map(|b| format!("{b:02x}"))
        .collect()
}
