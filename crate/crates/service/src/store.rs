//! Registry of live sessions with an optional append-only event log.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, PoisonError, RwLock};

use serde::{Deserialize, Serialize};

use crate::api::{CreateSession, SessionState, SessionView, SubmitAnswer};
use crate::error::{Result, ServiceError};
use crate::session::Session;

/// One line of a session's event log.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum LogEvent {
    Created { id: String, request: Box<CreateSession> },
    Answered { token: String, ranking: Vec<usize> },
}

struct Entry {
    /// Serializes mutations of one session.
    session: Mutex<Session>,
    /// Last published snapshot; reads never wait for a selection step.
    view: RwLock<SessionView>,
}

pub struct SessionStore {
    sessions: RwLock<HashMap<String, Arc<Entry>>>,
    log_dir: Option<PathBuf>,
}

impl SessionStore {
    /// An empty store that keeps sessions in memory only.
    pub fn in_memory() -> Self {
        Self {
            sessions: RwLock::new(HashMap::new()),
            log_dir: None,
        }
    }

    /// A store that logs every session under `dir` and restores the sessions
    /// already logged there.
    pub fn with_log_dir(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut sessions = HashMap::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        paths.retain(|p| p.extension().is_some_and(|x| x == "jsonl"));
        paths.sort();
        for path in paths {
            let session = recover(&path)?;
            let view = session.view()?;
            sessions.insert(session.id().to_string(), Arc::new(Entry::new(session, view)));
        }
        Ok(Self {
            sessions: RwLock::new(sessions),
            log_dir: Some(dir),
        })
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap_or_else(PoisonError::into_inner).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn create(&self, request: CreateSession) -> Result<SessionView> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Session::create(id.clone(), &request)?;
        let view = session.view()?;
        if let Some(dir) = &self.log_dir {
            let mut file = OpenOptions::new()
                .write(true)
                .create_new(true)
                .open(log_path(dir, &id))?;
            append(
                &mut file,
                &LogEvent::Created {
                    id: id.clone(),
                    request: Box::new(request),
                },
            )?;
        }
        self.sessions
            .write()
            .unwrap_or_else(PoisonError::into_inner)
            .insert(id, Arc::new(Entry::new(session, view.clone())));
        Ok(view)
    }

    pub fn get(&self, id: &str) -> Result<SessionView> {
        Ok(self
            .entry(id)?
            .view
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .clone())
    }

    /// Applies an answer to the pending question. On error the session is unchanged.
    pub fn submit(&self, id: &str, answer: SubmitAnswer) -> Result<SessionView> {
        let entry = self.entry(id)?;
        let mut session = entry.session.lock().unwrap_or_else(PoisonError::into_inner);
        session.check(&answer)?;
        let before = entry.publish_state(SessionState::Selecting);
        let outcome = session.prepare(&answer).and_then(|next| {
            if let Some(dir) = &self.log_dir {
                let mut file = OpenOptions::new().append(true).open(log_path(dir, id))?;
                append(
                    &mut file,
                    &LogEvent::Answered {
                        token: answer.token.clone(),
                        ranking: answer.ranking.clone(),
                    },
                )?;
            }
            Ok(next)
        });
        match outcome {
            Ok(next) => {
                session.commit(next);
                let view = session.view()?;
                *entry.view.write().unwrap_or_else(PoisonError::into_inner) = view.clone();
                Ok(view)
            }
            Err(e) => {
                *entry.view.write().unwrap_or_else(PoisonError::into_inner) = before;
                Err(e)
            }
        }
    }

    /// Runs `f` on the session while holding its lock.
    pub fn with_session<T>(&self, id: &str, f: impl FnOnce(&Session) -> T) -> Result<T> {
        let entry = self.entry(id)?;
        let session = entry.session.lock().unwrap_or_else(PoisonError::into_inner);
        Ok(f(&session))
    }

    fn entry(&self, id: &str) -> Result<Arc<Entry>> {
        self.sessions
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }
}

impl Entry {
    fn new(session: Session, view: SessionView) -> Self {
        Self {
            session: Mutex::new(session),
            view: RwLock::new(view),
        }
    }

    /// Sets the published state and returns the previous snapshot.
    fn publish_state(&self, state: SessionState) -> SessionView {
        let mut view = self.view.write().unwrap_or_else(PoisonError::into_inner);
        let before = view.clone();
        view.state = state;
        before
    }
}

fn log_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.jsonl"))
}

fn append(file: &mut File, event: &LogEvent) -> Result<()> {
    let mut line = serde_json::to_string(event).map_err(|e| ServiceError::Storage(e.to_string()))?;
    line.push('\n');
    file.write_all(line.as_bytes())?;
    file.sync_data()?;
    Ok(())
}

/// Rebuilds a session by replaying its log. A torn final line, left by a
/// crash during a write, is ignored.
fn recover(path: &Path) -> Result<Session> {
    let storage = |msg: String| ServiceError::Storage(format!("{}: {msg}", path.display()));
    let lines: Vec<String> = BufReader::new(File::open(path)?)
        .lines()
        .collect::<std::io::Result<_>>()?;
    let mut session: Option<Session> = None;
    for (i, line) in lines.iter().enumerate() {
        let event: LogEvent = match serde_json::from_str(line) {
            Ok(e) => e,
            Err(_) if i + 1 == lines.len() && i > 0 => break,
            Err(e) => return Err(storage(format!("line {}: {e}", i + 1))),
        };
        match (event, session.as_mut()) {
            (LogEvent::Created { id, request }, None) => session = Some(Session::create(id, &request)?),
            (LogEvent::Answered { token, ranking }, Some(s)) => {
                let next = s.prepare(&SubmitAnswer { token, ranking })?;
                s.commit(next);
            }
            _ => return Err(storage(format!("line {}: event out of order", i + 1))),
        }
    }
    session.ok_or_else(|| storage("empty log".into()))
}
