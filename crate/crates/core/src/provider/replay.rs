use std::collections::HashMap;
use std::path::Path;

use super::transcript::{read_transcript, TranscriptEntry};
use super::{BackendError, BackendReply, CompletionBackend, CompletionRequest, ProviderError};

/// Serves recorded responses by request tag. Read-only after load.
#[derive(Debug)]
pub struct ReplayBackend {
    entries: HashMap<String, TranscriptEntry>,
    default_model: String,
}

impl ReplayBackend {
    pub fn load(path: &Path, default_model: &str) -> Result<Self, ProviderError> {
        Ok(ReplayBackend::from_entries(read_transcript(path)?, default_model))
    }

    pub fn from_entries(entries: Vec<TranscriptEntry>, default_model: &str) -> Self {
        ReplayBackend {
            entries: entries.into_iter().map(|e| (e.request_tag.clone(), e)).collect(),
            default_model: default_model.to_string(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl CompletionBackend for ReplayBackend {
    fn call(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError> {
        let entry = self
            .entries
            .get(&request.request_tag)
            .ok_or_else(|| BackendError::Fatal(ProviderError::ReplayMiss(request.request_tag.clone())))?;
        if !entry.prompt_hash.is_empty() && entry.prompt_hash != request.prompt_hash() {
            return Err(BackendError::Fatal(ProviderError::ReplayPromptMismatch { tag: request.request_tag.clone() }));
        }
        Ok(BackendReply { text: entry.response_text.clone(), model: entry.model.clone().unwrap_or_else(|| self.default_model.clone()) })
    }
}
