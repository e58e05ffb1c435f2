//! Append-only, hash-chained audit log.
//!
//! Each event commits to its predecessor: `self_hash` is the digest of the
//! canonical encoding of `(seq, actor_id, action, resource_ref,
//! payload_digest, prev_hash, timestamp)`, and `prev_hash` of event `n` is the
//! `self_hash` of event `n - 1` (all zeros for the genesis event). The payload
//! itself is stored alongside its digest so that edits to it are detected too.
//!
//! On disk the log is a sequence of length-prefixed records (big-endian `u32`
//! length, then canonical JSON). The first record is the [`AuditHeader`]. The
//! same content can be exported as line-delimited JSON for external checks.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest as _, Sha256, Sha512};
use thiserror::Error;

use crate::canonical::{canonical_value, to_canonical_string};
use crate::ids::ActorId;
use crate::time::Timestamp;

pub const FORMAT_NAME: &str = "mentorloop-audit";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("audit storage failure: {0}")]
    Storage(#[from] io::Error),
    #[error("audit record encoding failure: {0}")]
    Encoding(#[from] serde_json::Error),
    #[error("malformed audit log: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DigestAlgorithm {
    #[default]
    Sha256,
    Sha512,
}

impl DigestAlgorithm {
    pub fn digest(self, bytes: &[u8]) -> Digest {
        match self {
            DigestAlgorithm::Sha256 => Digest(Sha256::digest(bytes).to_vec()),
            DigestAlgorithm::Sha512 => Digest(Sha512::digest(bytes).to_vec()),
        }
    }

    pub fn zero(self) -> Digest {
        match self {
            DigestAlgorithm::Sha256 => Digest(vec![0; 32]),
            DigestAlgorithm::Sha512 => Digest(vec![0; 64]),
        }
    }
}

impl std::str::FromStr for DigestAlgorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sha256" | "sha-256" => Ok(DigestAlgorithm::Sha256),
            "sha512" | "sha-512" => Ok(DigestAlgorithm::Sha512),
            other => Err(format!("unsupported digest algorithm `{other}`")),
        }
    }
}

/// Raw digest bytes, hex encoded in every text form.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Digest(pub Vec<u8>);

impl Digest {
    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(&s).map(Digest).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditHeader {
    pub format: String,
    pub version: u32,
    pub digest: DigestAlgorithm,
}

impl AuditHeader {
    pub fn new(digest: DigestAlgorithm) -> Self {
        Self {
            format: FORMAT_NAME.to_owned(),
            version: FORMAT_VERSION,
            digest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub seq: u64,
    pub timestamp: Timestamp,
    pub actor_id: ActorId,
    pub action: String,
    pub resource_ref: String,
    pub payload: Value,
    pub payload_digest: Digest,
    pub prev_hash: Digest,
    pub self_hash: Digest,
}

impl AuditEvent {
    pub fn compute_self_hash(&self, alg: DigestAlgorithm) -> Digest {
        let material = json!({
            "seq": self.seq,
            "actor_id": self.actor_id,
            "action": self.action,
            "resource_ref": self.resource_ref,
            "payload_digest": self.payload_digest.to_hex(),
            "prev_hash": self.prev_hash.to_hex(),
            "timestamp": self.timestamp,
        });
        alg.digest(canonical_value(&material).as_bytes())
    }
}

pub fn payload_digest(alg: DigestAlgorithm, payload: &Value) -> Digest {
    alg.digest(canonical_value(payload).as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainStatus {
    Valid,
    BrokenAt(u64),
}

impl fmt::Display for ChainStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainStatus::Valid => f.write_str("Valid"),
            ChainStatus::BrokenAt(n) => write!(f, "BrokenAt({n})"),
        }
    }
}

/// Check every link of the chain; report the first position that fails.
pub fn verify_chain(alg: DigestAlgorithm, events: &[AuditEvent]) -> ChainStatus {
    let mut prev = alg.zero();
    for (i, event) in events.iter().enumerate() {
        let ok = event.seq == i as u64
            && event.prev_hash == prev
            && event.payload_digest == payload_digest(alg, &event.payload)
            && event.self_hash == event.compute_self_hash(alg);
        if !ok {
            return ChainStatus::BrokenAt(i as u64);
        }
        prev = event.self_hash.clone();
    }
    ChainStatus::Valid
}

/// Durable destination for encoded records.
pub trait AuditSink: Send {
    /// Persist one record. On error nothing of the record may remain.
    fn append(&mut self, record: &[u8]) -> io::Result<()>;
}

/// Keeps nothing; the in-memory event list is the only copy.
#[derive(Debug, Default)]
pub struct MemorySink;

impl AuditSink for MemorySink {
    fn append(&mut self, _record: &[u8]) -> io::Result<()> {
        Ok(())
    }
}

#[derive(Debug)]
pub struct FileSink {
    file: File,
}

impl FileSink {
    fn write_framed(&mut self, record: &[u8]) -> io::Result<()> {
        let len = u32::try_from(record.len())
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "record too large"))?;
        let start = self.file.seek(SeekFrom::End(0))?;
        let mut frame = Vec::with_capacity(record.len() + 4);
        frame.extend_from_slice(&len.to_be_bytes());
        frame.extend_from_slice(record);
        let result = self.file.write_all(&frame).and_then(|_| self.file.sync_data());
        if result.is_err() {
            // Roll back so a partial frame never survives.
            let _ = self.file.set_len(start);
        }
        result
    }
}

impl AuditSink for FileSink {
    fn append(&mut self, record: &[u8]) -> io::Result<()> {
        self.write_framed(record)
    }
}

pub struct AuditLog {
    header: AuditHeader,
    events: Vec<AuditEvent>,
    sink: Box<dyn AuditSink>,
}

impl fmt::Debug for AuditLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AuditLog")
            .field("header", &self.header)
            .field("events", &self.events.len())
            .finish()
    }
}

impl AuditLog {
    pub fn in_memory(alg: DigestAlgorithm) -> Self {
        Self::with_sink(alg, Box::new(MemorySink))
    }

    pub fn with_sink(alg: DigestAlgorithm, sink: Box<dyn AuditSink>) -> Self {
        Self {
            header: AuditHeader::new(alg),
            events: Vec::new(),
            sink,
        }
    }

    /// Open (or create) a length-prefixed log file and resume appending.
    pub fn open_file(path: &Path, alg: DigestAlgorithm) -> Result<Self, AuditError> {
        let exists = path.exists() && std::fs::metadata(path)?.len() > 0;
        if exists {
            let (header, events) = read_framed(path)?;
            if header.digest != alg {
                return Err(AuditError::Malformed(format!(
                    "log uses {:?}, configuration asks for {:?}",
                    header.digest, alg
                )));
            }
            let file = OpenOptions::new().append(true).open(path)?;
            return Ok(Self {
                header,
                events,
                sink: Box::new(FileSink { file }),
            });
        }
        let file = OpenOptions::new()
            .create(true)
            .read(true)
            .write(true)
            .truncate(true)
            .open(path)?;
        let mut sink = FileSink { file };
        let header = AuditHeader::new(alg);
        sink.append(to_canonical_string(&header)?.as_bytes())?;
        Ok(Self {
            header,
            events: Vec::new(),
            sink: Box::new(sink),
        })
    }

    pub fn header(&self) -> &AuditHeader {
        &self.header
    }

    pub fn algorithm(&self) -> DigestAlgorithm {
        self.header.digest
    }

    pub fn events(&self) -> &[AuditEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Append one event. Either the event is persisted and linked, or the log
    /// is left exactly as it was.
    pub fn append(
        &mut self,
        actor_id: &ActorId,
        action: &str,
        resource_ref: &str,
        payload: Value,
        timestamp: Timestamp,
    ) -> Result<AuditEvent, AuditError> {
        let alg = self.header.digest;
        let prev_hash = self
            .events
            .last()
            .map(|e| e.self_hash.clone())
            .unwrap_or_else(|| alg.zero());
        let mut event = AuditEvent {
            seq: self.events.len() as u64,
            timestamp,
            actor_id: actor_id.clone(),
            action: action.to_owned(),
            resource_ref: resource_ref.to_owned(),
            payload_digest: payload_digest(alg, &payload),
            payload,
            prev_hash,
            self_hash: Digest(Vec::new()),
        };
        event.self_hash = event.compute_self_hash(alg);
        let record = to_canonical_string(&event)?;
        self.sink.append(record.as_bytes())?;
        self.events.push(event.clone());
        Ok(event)
    }

    pub fn verify(&self) -> ChainStatus {
        verify_chain(self.header.digest, &self.events)
    }

    /// Line-delimited export: header line, then one event per line.
    pub fn export_jsonl<W: Write>(&self, mut out: W) -> Result<(), AuditError> {
        writeln!(out, "{}", to_canonical_string(&self.header)?)?;
        for e in &self.events {
            writeln!(out, "{}", to_canonical_string(e)?)?;
        }
        Ok(())
    }
}

fn parse_header(bytes: &[u8]) -> Result<AuditHeader, AuditError> {
    let header: AuditHeader = serde_json::from_slice(bytes)
        .map_err(|e| AuditError::Malformed(format!("bad header: {e}")))?;
    if header.format != FORMAT_NAME {
        return Err(AuditError::Malformed(format!("unknown format `{}`", header.format)));
    }
    if header.version != FORMAT_VERSION {
        return Err(AuditError::Malformed(format!("unsupported version {}", header.version)));
    }
    Ok(header)
}

fn read_framed(path: &Path) -> Result<(AuditHeader, Vec<AuditEvent>), AuditError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let mut records = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        if pos + 4 > bytes.len() {
            return Err(AuditError::Malformed(format!("truncated length prefix at byte {pos}")));
        }
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().expect("4 bytes")) as usize;
        pos += 4;
        if pos + len > bytes.len() {
            return Err(AuditError::Malformed(format!("truncated record at byte {pos}")));
        }
        records.push(&bytes[pos..pos + len]);
        pos += len;
    }
    let (first, rest) = records
        .split_first()
        .ok_or_else(|| AuditError::Malformed("empty file".into()))?;
    let header = parse_header(first)?;
    let events = rest
        .iter()
        .enumerate()
        .map(|(i, r)| {
            serde_json::from_slice(r)
                .map_err(|e| AuditError::Malformed(format!("record {i}: {e}")))
        })
        .collect::<Result<_, _>>()?;
    Ok((header, events))
}

fn read_jsonl(path: &Path) -> Result<(AuditHeader, Vec<AuditEvent>), AuditError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate().filter(|(_, l)| {
        l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true)
    });
    let (_, first) = lines
        .next()
        .ok_or_else(|| AuditError::Malformed("empty file".into()))?;
    let header = parse_header(first?.as_bytes())?;
    let mut events = Vec::new();
    for (lineno, line) in lines {
        let line = line?;
        events.push(
            serde_json::from_str(&line)
                .map_err(|e| AuditError::Malformed(format!("line {}: {e}", lineno + 1)))?,
        );
    }
    Ok((header, events))
}

/// Read a log in either the framed or the line-delimited form.
pub fn read_log(path: &Path) -> Result<(AuditHeader, Vec<AuditEvent>), AuditError> {
    let mut first = [0u8; 1];
    let n = File::open(path)?.read(&mut first)?;
    if n == 1 && first[0] == b'{' {
        read_jsonl(path)
    } else {
        read_framed(path)
    }
}
