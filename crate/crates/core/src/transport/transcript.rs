//! Append-only record of every session frame a party sent or received.
//!
//! Frames are stored as the session layer saw them: before channel
//! encryption on send and after decryption on receive. Timestamps are a
//! logical counter, so two runs with the same seeds produce byte-identical
//! transcripts whatever the transport.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::transport::frame::{ProtocolId, WireMessage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub timestamp: u64,
    pub direction: Direction,
    pub peer: usize,
    #[serde(with = "hex::serde")]
    pub frame: Vec<u8>,
}

impl Record {
    pub fn message(&self) -> WireMessage {
        WireMessage::deframe(&self.frame)
            .ok()
            .flatten()
            .map(|(msg, _)| msg)
            .expect("transcript frames are well formed")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TranscriptError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    records: Vec<Record>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, direction: Direction, peer: usize, msg: &WireMessage) {
        let frame = msg.frame().expect("session frames respect the size limit");
        self.records.push(Record {
            timestamp: self.records.len() as u64,
            direction,
            peer,
            frame,
        });
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn messages(&self) -> impl Iterator<Item = (&Record, WireMessage)> {
        self.records.iter().map(|r| (r, r.message()))
    }

    /// Messages that belong to a protocol rather than to the handshake.
    pub fn protocol_messages(&self) -> impl Iterator<Item = (&Record, WireMessage)> {
        self.messages()
            .filter(|(_, msg)| msg.protocol != ProtocolId::Handshake)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TranscriptError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(line).map_err(|e| TranscriptError::Schema {
                line: i + 1,
                message: e.to_string(),
            })?;
            match WireMessage::deframe(&record.frame) {
                Ok(Some((_, used))) if used == record.frame.len() => {}
                _ => {
                    return Err(TranscriptError::Schema {
                        line: i + 1,
                        message: "frame is not exactly one well-formed frame".into(),
                    })
                }
            }
            records.push(record);
        }
        Ok(Transcript { records })
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), TranscriptError> {
        let mut file = fs::File::create(path)?;
        file.write_all(self.to_jsonl().as_bytes())?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self, TranscriptError> {
        let reader = BufReader::new(fs::File::open(path)?);
        let mut text = String::new();
        for line in reader.lines() {
            text.push_str(&line?);
            text.push('\n');
        }
        Self::from_jsonl(&text)
    }
}
