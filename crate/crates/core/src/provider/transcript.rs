//! Transcript files: JSON Lines of `(request_tag, prompt_hash, temperature,
//! response_text)` plus the producing model. Entries are written sorted by
//! tag so the file is independent of request completion order.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::ProviderError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_tag: String,
    /// SHA-256 of the prompt. Empty in hand-written fixtures, which disables
    /// the prompt check on replay.
    #[serde(default)]
    pub prompt_hash: String,
    #[serde(default)]
    pub temperature: f64,
    pub response_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

/// Collects entries from concurrent calls; one entry per tag (last write wins).
#[derive(Debug, Default)]
pub struct TranscriptRecorder {
    entries: Mutex<BTreeMap<String, TranscriptEntry>>,
}

impl TranscriptRecorder {
    /// Starts from an existing transcript so resumed runs keep earlier entries.
    pub fn seeded(entries: Vec<TranscriptEntry>) -> Self {
        TranscriptRecorder { entries: Mutex::new(entries.into_iter().map(|e| (e.request_tag.clone(), e)).collect()) }
    }

    pub fn record(&self, entry: TranscriptEntry) {
        self.entries.lock().expect("recorder lock").insert(entry.request_tag.clone(), entry);
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().expect("recorder lock").values().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("recorder lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Persists everything `recorder` has seen to `path`.
pub fn record_transcript(recorder: &TranscriptRecorder, path: &Path) -> io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut out = BufWriter::new(fs::File::create(&tmp)?);
        for entry in recorder.entries() {
            serde_json::to_writer(&mut out, &entry)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
    }
    fs::rename(tmp, path)
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptEntry>, ProviderError> {
    let err = |message: String| ProviderError::Transcript { path: path.to_path_buf(), message };
    let file = fs::File::open(path).map_err(|e| err(e.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: TranscriptEntry = serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
        out.push(entry);
    }
    Ok(out)
}
