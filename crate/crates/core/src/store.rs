//! File-backed workspace.
//!
//! Layout under the root directory:
//!
//! ```text
//! schema.json
//! datasets/<name>.json
//! sessions/<id>.json
//! ```
//!
//! Every mutation is applied to a copy, written to disk atomically (temp
//! file in the same directory, fsync, rename) and only then made visible in
//! memory. A failed write leaves both the file and the in-memory state as
//! they were. Each dataset and session has its own lock, so writers to one
//! entity are serialized while readers get a consistent snapshot.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::Serialize;
use thiserror::Error;

use crate::agreement::{align, AlignError, Disagreement, ResolutionSession, SessionError};
use crate::model::{
    load_schema, parse, serialize, validate_dialogue, validate_turn, Dialogue, DialogueCollection,
    LabelSchema, ParseError, SchemaError, Turn,
};

pub const SCHEMA_FILE: &str = "schema.json";
pub const DATASETS_DIR: &str = "datasets";
pub const SESSIONS_DIR: &str = "sessions";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corrupt file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },
    #[error("no label schema is configured for this workspace")]
    SchemaMissing,
    #[error("invalid name `{0}`: use letters, digits, `.`, `_` or `-`")]
    InvalidName(String),
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("dataset `{0}` already exists")]
    DatasetExists(String),
    #[error("unknown dialogue `{0}`")]
    UnknownDialogue(String),
    #[error("dialogue `{dialogue}` has no turn {index}")]
    UnknownTurn { dialogue: String, index: usize },
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error(transparent)]
    Validation(#[from] ParseError),
    #[error(transparent)]
    Session(#[from] SessionError),
}

impl From<AlignError> for StoreError {
    fn from(e: AlignError) -> Self {
        StoreError::Session(SessionError::Align(e))
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Called between writing the temp file and renaming it into place.
/// Returning an error aborts the save, as a crash at that point would.
pub type FaultHook = Arc<dyn Fn(&Path) -> io::Result<()> + Send + Sync>;

/// Writes `bytes` to `path` so that readers only ever see the old or the new
/// content.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    atomic_write_with(path, bytes, |_| Ok(()))
}

pub fn atomic_write_with(
    path: &Path,
    bytes: &[u8],
    before_rename: impl FnOnce(&Path) -> io::Result<()>,
) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("file");
    let mut tmp = tempfile::Builder::new()
        .prefix(&format!(".{file_name}."))
        .suffix(".tmp")
        .tempfile_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    before_rename(tmp.path())?;
    tmp.persist(path).map_err(|e| e.error)?;
    if let Ok(d) = fs::File::open(dir) {
        // Directory fsync is not supported everywhere; the rename already happened.
        let _ = d.sync_all();
    }
    Ok(())
}

/// Dataset names and session ids become file names.
pub fn is_valid_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('.')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

/// Maps an arbitrary string onto a valid name.
pub fn sanitize_name(raw: &str) -> String {
    let s: String = raw
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    let s = s.trim_start_matches('.').to_string();
    if s.is_empty() {
        "unnamed".to_string()
    } else {
        s
    }
}

/// A file skipped while opening the workspace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoadIssue {
    pub path: PathBuf,
    pub reason: String,
}

/// An edit to one dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Edit {
    AddDialogue { name: Option<String> },
    ReplaceDialogue { id: String, dialogue: Dialogue },
    RenameDialogue { id: String, name: String },
    DeleteDialogue { id: String },
    /// Appends a turn; its index is assigned.
    AddTurn { dialogue_id: String, turn: Turn },
    ReplaceTurn {
        dialogue_id: String,
        index: usize,
        turn: Turn,
    },
    /// Removes a turn and renumbers the rest.
    DeleteTurn { dialogue_id: String, index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum EditOutcome {
    Dialogue(Dialogue),
    Turn(Turn),
    Deleted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetSummary {
    pub name: String,
    pub dialogues: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionSummary {
    pub id: String,
    pub dialogue_id: String,
    pub annotators: usize,
    pub disagreements: usize,
    pub unresolved: usize,
}

type Shared<T> = Arc<RwLock<T>>;

pub struct Store {
    root: PathBuf,
    schema: Option<Arc<LabelSchema>>,
    datasets: RwLock<BTreeMap<String, Shared<DialogueCollection>>>,
    sessions: RwLock<BTreeMap<String, Shared<ResolutionSession>>>,
    fault: RwLock<Option<FaultHook>>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("root", &self.root).finish()
    }
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>, StoreError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| {
            p.is_file()
                && p.extension().is_some_and(|e| e == "json")
                && !p
                    .file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with('.'))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string()
}

impl Store {
    /// Loads a workspace. Unreadable or invalid dataset and session files are
    /// skipped and reported. `schema_override` replaces `schema.json`.
    pub fn open(
        root: impl AsRef<Path>,
        schema_override: Option<LabelSchema>,
    ) -> Result<(Store, Vec<LoadIssue>), StoreError> {
        let root = root.as_ref().to_path_buf();
        let meta = fs::metadata(&root).map_err(io_err(&root))?;
        if !meta.is_dir() {
            return Err(StoreError::Io {
                path: root,
                source: io::Error::new(io::ErrorKind::NotADirectory, "not a directory"),
            });
        }
        let mut issues = Vec::new();
        let schema = match schema_override {
            Some(s) => Some(s),
            None => {
                let path = root.join(SCHEMA_FILE);
                match fs::read_to_string(&path) {
                    Ok(text) => match load_schema(&text) {
                        Ok(s) => Some(s),
                        Err(e) => {
                            issues.push(LoadIssue {
                                path,
                                reason: e.to_string(),
                            });
                            None
                        }
                    },
                    Err(e) if e.kind() == io::ErrorKind::NotFound => None,
                    Err(e) => {
                        issues.push(LoadIssue {
                            path,
                            reason: e.to_string(),
                        });
                        None
                    }
                }
            }
        };
        let mut datasets = BTreeMap::new();
        let mut sessions = BTreeMap::new();
        let dataset_files = json_files(&root.join(DATASETS_DIR))?;
        let session_files = json_files(&root.join(SESSIONS_DIR))?;
        match &schema {
            None => {
                for path in dataset_files.into_iter().chain(session_files) {
                    issues.push(LoadIssue {
                        path,
                        reason: "cannot validate without a label schema".into(),
                    });
                }
            }
            Some(schema) => {
                for path in dataset_files {
                    let name = stem(&path);
                    let loaded = fs::read_to_string(&path)
                        .map_err(|e| e.to_string())
                        .and_then(|text| parse(&text, schema).map_err(|e| e.to_string()));
                    match loaded {
                        Ok(c) if is_valid_name(&name) => {
                            datasets.insert(name, Arc::new(RwLock::new(c)));
                        }
                        Ok(_) => issues.push(LoadIssue {
                            path,
                            reason: StoreError::InvalidName(name).to_string(),
                        }),
                        Err(reason) => issues.push(LoadIssue { path, reason }),
                    }
                }
                for path in session_files {
                    let id = stem(&path);
                    let loaded = fs::read_to_string(&path)
                        .map_err(|e| e.to_string())
                        .and_then(|text| {
                            ResolutionSession::from_json(&text, schema).map_err(|e| e.to_string())
                        });
                    match loaded {
                        Ok(s) if is_valid_name(&id) => {
                            sessions.insert(id, Arc::new(RwLock::new(s)));
                        }
                        Ok(_) => issues.push(LoadIssue {
                            path,
                            reason: StoreError::InvalidName(id).to_string(),
                        }),
                        Err(reason) => issues.push(LoadIssue { path, reason }),
                    }
                }
            }
        }
        for issue in &issues {
            tracing::warn!(path = %issue.path.display(), reason = %issue.reason, "skipped file");
        }
        Ok((
            Store {
                root,
                schema: schema.map(Arc::new),
                datasets: RwLock::new(datasets),
                sessions: RwLock::new(sessions),
                fault: RwLock::new(None),
            },
            issues,
        ))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn schema(&self) -> Result<Arc<LabelSchema>, StoreError> {
        self.schema.clone().ok_or(StoreError::SchemaMissing)
    }

    /// Installs a hook run before every rename, for fault-injection tests.
    pub fn set_fault_hook(&self, hook: Option<FaultHook>) {
        *self.fault.write().expect("fault lock") = hook;
    }

    pub fn dataset_path(&self, name: &str) -> PathBuf {
        self.root.join(DATASETS_DIR).join(format!("{name}.json"))
    }

    pub fn session_path(&self, id: &str) -> PathBuf {
        self.root.join(SESSIONS_DIR).join(format!("{id}.json"))
    }

    fn write(&self, path: &Path, text: &str) -> Result<(), StoreError> {
        let hook = self.fault.read().expect("fault lock").clone();
        atomic_write_with(path, text.as_bytes(), |tmp| match &hook {
            Some(h) => h(tmp),
            None => Ok(()),
        })
        .map_err(io_err(path))
    }

    fn dataset_entry(&self, name: &str) -> Result<Shared<DialogueCollection>, StoreError> {
        self.datasets
            .read()
            .expect("datasets lock")
            .get(name)
            .cloned()
            .ok_or_else(|| StoreError::UnknownDataset(name.to_string()))
    }

    fn session_entry(&self, id: &str) -> Result<Shared<ResolutionSession>, StoreError> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownSession(id.to_string()))
    }

    pub fn datasets(&self) -> Vec<DatasetSummary> {
        self.datasets
            .read()
            .expect("datasets lock")
            .iter()
            .map(|(name, c)| DatasetSummary {
                name: name.clone(),
                dialogues: c.read().expect("dataset lock").dialogues.len(),
            })
            .collect()
    }

    /// Snapshot of a dataset.
    pub fn dataset(&self, name: &str) -> Result<DialogueCollection, StoreError> {
        Ok(self.dataset_entry(name)?.read().expect("dataset lock").clone())
    }

    pub fn dialogue(&self, dataset: &str, id: &str) -> Result<Dialogue, StoreError> {
        self.dataset_entry(dataset)?
            .read()
            .expect("dataset lock")
            .dialogue(id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownDialogue(id.to_string()))
    }

    /// Canonical text of a dataset, identical to its file on disk.
    pub fn export_dataset(&self, name: &str) -> Result<String, StoreError> {
        Ok(serialize(&self.dataset_entry(name)?.read().expect("dataset lock")))
    }

    pub fn save_dataset(&self, name: &str) -> Result<(), StoreError> {
        let entry = self.dataset_entry(name)?;
        let guard = entry.write().expect("dataset lock");
        self.write(&self.dataset_path(name), &serialize(&guard))
    }

    /// Adds a new dataset and writes it out.
    pub fn insert_dataset(
        &self,
        name: &str,
        collection: DialogueCollection,
    ) -> Result<(), StoreError> {
        if !is_valid_name(name) {
            return Err(StoreError::InvalidName(name.to_string()));
        }
        collection.validate(&*self.schema()?)?;
        let mut map = self.datasets.write().expect("datasets lock");
        if map.contains_key(name) {
            return Err(StoreError::DatasetExists(name.to_string()));
        }
        self.write(&self.dataset_path(name), &serialize(&collection))?;
        map.insert(name.to_string(), Arc::new(RwLock::new(collection)));
        Ok(())
    }

    pub fn delete_dataset(&self, name: &str) -> Result<(), StoreError> {
        let mut map = self.datasets.write().expect("datasets lock");
        if !map.contains_key(name) {
            return Err(StoreError::UnknownDataset(name.to_string()));
        }
        let path = self.dataset_path(name);
        match fs::remove_file(&path) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(io_err(&path)(e)),
        }
        map.remove(name);
        Ok(())
    }

    /// Applies an edit and autosaves. On any error nothing changes.
    pub fn mutate(&self, dataset: &str, edit: Edit) -> Result<EditOutcome, StoreError> {
        let schema = self.schema()?;
        let entry = self.dataset_entry(dataset)?;
        let mut guard = entry.write().expect("dataset lock");
        let mut next = guard.clone();
        let outcome = apply_edit(&mut next, edit, &schema)?;
        self.write(&self.dataset_path(dataset), &serialize(&next))?;
        *guard = next;
        Ok(outcome)
    }

    pub fn sessions(&self) -> Vec<SessionSummary> {
        self.sessions
            .read()
            .expect("sessions lock")
            .iter()
            .map(|(id, s)| {
                let s = s.read().expect("session lock");
                SessionSummary {
                    id: id.clone(),
                    dialogue_id: s.set().dialogue_id().to_string(),
                    annotators: s.set().annotator_count(),
                    disagreements: s.disagreements().len(),
                    unresolved: s.unresolved(),
                }
            })
            .collect()
    }

    pub fn session(&self, id: &str) -> Result<ResolutionSession, StoreError> {
        Ok(self.session_entry(id)?.read().expect("session lock").clone())
    }

    pub fn save_session(&self, id: &str) -> Result<(), StoreError> {
        let entry = self.session_entry(id)?;
        let guard = entry.write().expect("session lock");
        self.write(&self.session_path(id), &guard.to_json())
    }

    /// Groups annotator copies by dialogue and opens (or extends) one session
    /// per dialogue. The session id is derived from the dialogue id.
    /// Nothing is stored unless every group aligns.
    pub fn create_sessions(
        &self,
        copies: Vec<(String, Dialogue)>,
    ) -> Result<Vec<(String, ResolutionSession)>, StoreError> {
        let schema = self.schema()?;
        let mut map = self.sessions.write().expect("sessions lock");
        let mut grouped: Vec<(String, Vec<(String, Dialogue)>)> = Vec::new();
        for (annotator, d) in copies {
            validate_dialogue(&d, &schema, &format!("annotators.{annotator}"))?;
            match grouped.iter_mut().find(|(id, _)| *id == d.id) {
                Some((_, g)) => g.push((annotator, d)),
                None => grouped.push((d.id.clone(), vec![(annotator, d)])),
            }
        }
        let mut prepared = Vec::new();
        for (dialogue_id, group) in grouped {
            let id = sanitize_name(&dialogue_id);
            let session = match map.get(&id) {
                Some(existing) => {
                    let existing = existing.read().expect("session lock").clone();
                    if existing.set().dialogue_id() != dialogue_id {
                        return Err(StoreError::Session(SessionError::Corrupt(format!(
                            "session id `{id}` is taken by dialogue `{}`",
                            existing.set().dialogue_id()
                        ))));
                    }
                    existing.add_annotators(&schema, group)?
                }
                None => {
                    let mut sets = align(group)?;
                    ResolutionSession::new(sets.remove(0), &schema)
                }
            };
            prepared.push((id, session));
        }
        for (id, session) in &prepared {
            self.write(&self.session_path(id), &session.to_json())?;
        }
        for (id, session) in &prepared {
            match map.get(id) {
                Some(entry) => *entry.write().expect("session lock") = session.clone(),
                None => {
                    map.insert(id.clone(), Arc::new(RwLock::new(session.clone())));
                }
            }
        }
        Ok(prepared)
    }

    /// Accepts one disagreement and autosaves the session.
    pub fn accept(
        &self,
        id: &str,
        turn: usize,
        label: &str,
        value: Option<crate::model::LabelValue>,
    ) -> Result<Disagreement, StoreError> {
        let schema = self.schema()?;
        let entry = self.session_entry(id)?;
        let mut guard = entry.write().expect("session lock");
        let mut next = guard.clone();
        let accepted = next.accept(&schema, turn, label, value)?.clone();
        self.write(&self.session_path(id), &next.to_json())?;
        *guard = next;
        Ok(accepted)
    }
}

fn apply_edit(
    c: &mut DialogueCollection,
    edit: Edit,
    schema: &LabelSchema,
) -> Result<EditOutcome, StoreError> {
    fn find<'a>(c: &'a mut DialogueCollection, id: &str) -> Result<&'a mut Dialogue, StoreError> {
        c.dialogue_mut(id)
            .ok_or_else(|| StoreError::UnknownDialogue(id.to_string()))
    }
    match edit {
        Edit::AddDialogue { name } => {
            let id = c.next_dialogue_id();
            let d = Dialogue::new(id.clone(), name.unwrap_or(id));
            c.dialogues.push(d.clone());
            Ok(EditOutcome::Dialogue(d))
        }
        Edit::ReplaceDialogue { id, mut dialogue } => {
            dialogue.id = id.clone();
            dialogue.reindex();
            validate_dialogue(&dialogue, schema, "dialogue")?;
            *find(c, &id)? = dialogue.clone();
            Ok(EditOutcome::Dialogue(dialogue))
        }
        Edit::RenameDialogue { id, name } => {
            let d = find(c, &id)?;
            d.name = name;
            Ok(EditOutcome::Dialogue(d.clone()))
        }
        Edit::DeleteDialogue { id } => {
            let pos = c
                .dialogues
                .iter()
                .position(|d| d.id == id)
                .ok_or(StoreError::UnknownDialogue(id))?;
            c.dialogues.remove(pos);
            Ok(EditOutcome::Deleted)
        }
        Edit::AddTurn { dialogue_id, turn } => {
            validate_turn(&turn, schema, "turn")?;
            let d = find(c, &dialogue_id)?;
            Ok(EditOutcome::Turn(d.push_turn(turn).clone()))
        }
        Edit::ReplaceTurn {
            dialogue_id,
            index,
            mut turn,
        } => {
            validate_turn(&turn, schema, "turn")?;
            let d = find(c, &dialogue_id)?;
            let slot = d.turns.get_mut(index).ok_or(StoreError::UnknownTurn {
                dialogue: dialogue_id,
                index,
            })?;
            turn.index = index;
            *slot = turn.clone();
            Ok(EditOutcome::Turn(turn))
        }
        Edit::DeleteTurn { dialogue_id, index } => {
            let d = find(c, &dialogue_id)?;
            if index >= d.turns.len() {
                return Err(StoreError::UnknownTurn {
                    dialogue: dialogue_id,
                    index,
                });
            }
            d.turns.remove(index);
            d.reindex();
            Ok(EditOutcome::Deleted)
        }
    }
}

/// Errors from [`load_schema_file`].
#[derive(Debug, Error)]
pub enum SchemaFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

pub fn load_schema_file(path: &Path) -> Result<LabelSchema, SchemaFileError> {
    let text = fs::read_to_string(path).map_err(|source| SchemaFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(load_schema(&text)?)
}
