//! Plate whitelist, legality decisions, and the append-only patrol event
//! log: one line-delimited JSON document per event, durable before the
//! append returns.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::recognizer::PlateString;

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },
    #[error("{path} line {line}: duplicate plate {plate}")]
    DuplicatePlate {
        path: PathBuf,
        line: usize,
        plate: String,
    },
}

/// One whitelist row: who may park, and when the permission holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub plate: PlateString,
    /// Free-text owner label; empty means unknown.
    pub owner_label: String,
    pub valid_from: Option<DateTime<Utc>>,
    pub valid_to: Option<DateTime<Utc>>,
}

impl RegistryEntry {
    pub fn new(
        plate: PlateString,
        owner_label: impl Into<String>,
        valid_from: Option<DateTime<Utc>>,
        valid_to: Option<DateTime<Utc>>,
    ) -> Result<Self, String> {
        if let (Some(a), Some(b)) = (valid_from, valid_to) {
            if a > b {
                return Err(format!("valid_from {a} is after valid_to {b}"));
            }
        }
        Ok(Self {
            plate,
            owner_label: owner_label.into(),
            valid_from,
            valid_to,
        })
    }

    /// True when `at` falls inside the validity window, absent bounds open.
    pub fn valid_at(&self, at: DateTime<Utc>) -> bool {
        self.valid_from.is_none_or(|from| at >= from) && self.valid_to.is_none_or(|to| at <= to)
    }
}

/// In-memory whitelist keyed by plate. Immutable after load; reloads build
/// a fresh value the caller swaps in.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    entries: BTreeMap<String, RegistryEntry>,
}

impl Registry {
    pub fn from_entries(
        entries: impl IntoIterator<Item = RegistryEntry>,
    ) -> Result<Self, String> {
        let mut map = BTreeMap::new();
        for e in entries {
            let key = e.plate.as_str().to_owned();
            if map.insert(key.clone(), e).is_some() {
                return Err(format!("duplicate plate {key}"));
            }
        }
        Ok(Self { entries: map })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, plate: &PlateString) -> Option<&RegistryEntry> {
        self.entries.get(plate.as_str())
    }

    pub fn contains(&self, plate: &PlateString) -> bool {
        self.entries.contains_key(plate.as_str())
    }

    /// Entries in plate order (deterministic).
    pub fn iter(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.entries.values()
    }
}

/// Loads the whitelist from a CSV file: `plate,owner,valid_from,valid_to`,
/// one record per line, trailing fields omittable, empty fields allowed,
/// `#` comment lines and blank lines skipped. Timestamps are RFC 3339, or a
/// bare `YYYY-MM-DD` which reads as midnight UTC (the file is meant to be
/// hand-edited). Duplicate plates are a hard error: silent last-wins would
/// let a typo grant the wrong car permission.
pub fn load_registry(path: impl AsRef<Path>) -> Result<Registry, RegistryError> {
    let path = path.as_ref();
    let io_err = |source| RegistryError::Io {
        path: path.to_owned(),
        source,
    };
    let raw = std::fs::read_to_string(path).map_err(io_err)?;

    let mut rows: Vec<(usize, csv::StringRecord)> = Vec::new();
    {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(raw.as_bytes());
        for rec in rdr.records() {
            let rec = rec.map_err(|e| RegistryError::Parse {
                path: path.to_owned(),
                line: e
                    .position()
                    .map(|p| p.line() as usize)
                    .unwrap_or_default(),
                detail: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or_default();
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            rows.push((line, rec));
        }
    }

    let parse_err = |line: usize, detail: String| RegistryError::Parse {
        path: path.to_owned(),
        line,
        detail,
    };

    let mut entries = BTreeMap::new();
    for (line, rec) in rows {
        if rec.len() > 4 {
            return Err(parse_err(
                line,
                format!("expected at most 4 fields (plate,owner,valid_from,valid_to), got {}", rec.len()),
            ));
        }
        let field = |i: usize| rec.get(i).unwrap_or("");
        let plate = crate::recognizer::normalize_plate(field(0))
            .map_err(|e| parse_err(line, e.to_string()))?;
        let owner = field(1).to_owned();
        let bound = |i: usize, name: &str| -> Result<Option<DateTime<Utc>>, RegistryError> {
            let text = field(i);
            if text.is_empty() {
                return Ok(None);
            }
            parse_timestamp(text)
                .map(Some)
                .map_err(|detail| parse_err(line, format!("{name}: {detail}")))
        };
        let valid_from = bound(2, "valid_from")?;
        let valid_to = bound(3, "valid_to")?;
        let entry = RegistryEntry::new(plate.clone(), owner, valid_from, valid_to)
            .map_err(|detail| parse_err(line, detail))?;
        if entries.insert(plate.as_str().to_owned(), entry).is_some() {
            return Err(RegistryError::DuplicatePlate {
                path: path.to_owned(),
                line,
                plate: plate.as_str().to_owned(),
            });
        }
    }
    Ok(Registry { entries })
}

/// RFC 3339, or a bare date read as midnight UTC.
fn parse_timestamp(text: &str) -> Result<DateTime<Utc>, String> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
        return Ok(dt.with_timezone(&Utc));
    }
    if let Ok(date) = chrono::NaiveDate::parse_from_str(text, "%Y-%m-%d") {
        let midnight = date.and_hms_opt(0, 0, 0).expect("00:00:00 exists");
        return Ok(DateTime::from_naive_utc_and_offset(midnight, Utc));
    }
    Err(format!(
        "{text:?} is neither RFC 3339 nor YYYY-MM-DD"
    ))
}

/// Legality of an observed plate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Legal,
    Illegal,
    Unreadable,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Legal => "legal",
            Verdict::Illegal => "illegal",
            Verdict::Unreadable => "unreadable",
        }
    }
}

/// Pure decision: legal iff the plate is registered and `at` falls inside
/// its validity window (absent bounds open).
pub fn check_legality(reg: &Registry, plate: &PlateString, at: DateTime<Utc>) -> Verdict {
    match reg.get(plate) {
        Some(entry) if entry.valid_at(at) => Verdict::Legal,
        _ => Verdict::Illegal,
    }
}

/// One observation from the patrol loop: what was read (or why not), where
/// and when, what was decided, and whether the manager was notified.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatrolEvent {
    /// Present unless the verdict is unreadable.
    pub plate: Option<PlateString>,
    /// Present iff the verdict is unreadable.
    pub failure_reason: Option<String>,
    pub captured_at: DateTime<Utc>,
    /// Slot or zone identifier.
    pub place: String,
    pub verdict: Verdict,
    /// Backend summary label, e.g. `dual/heuristic/baseline/binary`.
    pub backend: String,
    pub notified: bool,
}

impl PatrolEvent {
    /// Event for a successfully read plate. `verdict` must not be
    /// unreadable; use [`PatrolEvent::unreadable`] for that case.
    pub fn read(
        plate: PlateString,
        captured_at: DateTime<Utc>,
        place: impl Into<String>,
        verdict: Verdict,
        backend: impl Into<String>,
        notified: bool,
    ) -> Result<Self, String> {
        if verdict == Verdict::Unreadable {
            return Err("a read plate cannot carry the unreadable verdict".into());
        }
        Ok(Self {
            plate: Some(plate),
            failure_reason: None,
            captured_at,
            place: place.into(),
            verdict,
            backend: backend.into(),
            notified,
        })
    }

    /// Event for an exhausted recognition attempt.
    pub fn unreadable(
        failure_reason: impl Into<String>,
        captured_at: DateTime<Utc>,
        place: impl Into<String>,
        backend: impl Into<String>,
        notified: bool,
    ) -> Self {
        Self {
            plate: None,
            failure_reason: Some(failure_reason.into()),
            captured_at,
            place: place.into(),
            verdict: Verdict::Unreadable,
            backend: backend.into(),
            notified,
        }
    }

    /// The type invariant: plate absent iff verdict unreadable.
    pub fn is_well_formed(&self) -> bool {
        (self.verdict == Verdict::Unreadable) == self.plate.is_none()
    }
}

/// A persisted event with its log sequence number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredEvent {
    pub seq: u64,
    #[serde(flatten)]
    pub event: PatrolEvent,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("event log {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("event log {path}: {source}")]
    Encode {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("event {detail}")]
    Malformed { detail: String },
}

/// Append-only event log: one JSON document per line, fsynced before the
/// sequence number is returned. Appends from concurrent callers serialize
/// on an internal lock. Opening tolerates a torn final line (a crash
/// mid-write) by truncating to the last complete, parseable record.
pub struct EventStore {
    path: PathBuf,
    inner: Mutex<StoreInner>,
}

struct StoreInner {
    file: File,
    next_seq: u64,
}

impl EventStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_owned();
        let io_err = |source| StoreError::Io {
            path: path.clone(),
            source,
        };

        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(io_err)?;

        // Scan for the last complete record; anything after it is a torn
        // tail from a crash and gets truncated away.
        let mut good_end: u64 = 0;
        let mut last_seq: u64 = 0;
        {
            let mut reader = BufReader::new(&mut file);
            reader.seek(SeekFrom::Start(0)).map_err(io_err)?;
            let mut pos: u64 = 0;
            let mut line = String::new();
            loop {
                line.clear();
                let n = reader.read_line(&mut line).map_err(io_err)? as u64;
                if n == 0 {
                    break;
                }
                pos += n;
                if !line.ends_with('\n') {
                    break; // torn tail: no newline was ever written
                }
                match serde_json::from_str::<StoredEvent>(line.trim_end()) {
                    Ok(ev) => {
                        last_seq = ev.seq;
                        good_end = pos;
                    }
                    Err(_) => break, // torn or corrupt: keep the prefix
                }
            }
        }
        file.set_len(good_end).map_err(io_err)?;
        file.seek(SeekFrom::End(0)).map_err(io_err)?;

        Ok(Self {
            path,
            inner: Mutex::new(StoreInner {
                file,
                next_seq: last_seq + 1,
            }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one event; returns its sequence number once the bytes are
    /// synced to disk.
    pub fn append(&self, event: &PatrolEvent) -> Result<u64, StoreError> {
        if !event.is_well_formed() {
            return Err(StoreError::Malformed {
                detail: format!(
                    "verdict {} with plate {:?}",
                    event.verdict.as_str(),
                    event.plate
                ),
            });
        }
        let mut inner = self.inner.lock().expect("event store lock");
        let seq = inner.next_seq;
        let stored = StoredEvent {
            seq,
            event: event.clone(),
        };
        let mut line = serde_json::to_string(&stored).map_err(|source| StoreError::Encode {
            path: self.path.clone(),
            source,
        })?;
        line.push('\n');
        let io_err = |source| StoreError::Io {
            path: self.path.clone(),
            source,
        };
        inner.file.write_all(line.as_bytes()).map_err(io_err)?;
        inner.file.sync_data().map_err(io_err)?;
        inner.next_seq += 1;
        Ok(seq)
    }

    /// Sequence number the next append will get.
    pub fn next_seq(&self) -> u64 {
        self.inner.lock().expect("event store lock").next_seq
    }
}

/// Reads persisted events with seq > `since`, in log order. Tolerates a
/// torn final line the same way [`EventStore::open`] does.
pub fn read_events(path: impl AsRef<Path>, since: u64) -> Result<Vec<StoredEvent>, StoreError> {
    let path = path.as_ref();
    let raw = match std::fs::read_to_string(path) {
        Ok(raw) => raw,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => {
            return Err(StoreError::Io {
                path: path.to_owned(),
                source,
            })
        }
    };
    let mut events = Vec::new();
    for chunk in raw.split_inclusive('\n') {
        if !chunk.ends_with('\n') {
            break;
        }
        match serde_json::from_str::<StoredEvent>(chunk.trim_end()) {
            Ok(ev) => {
                if ev.seq > since {
                    events.push(ev);
                }
            }
            Err(_) => break,
        }
    }
    Ok(events)
}
