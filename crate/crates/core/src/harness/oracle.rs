//! Plaintext inverted index used as ground truth.

use std::collections::HashMap;

use crate::protocol::FileId;

#[derive(Clone, Debug, Default)]
pub struct PlaintextOracle {
    index: HashMap<String, Vec<FileId>>,
    files: usize,
}

impl PlaintextOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add<S: AsRef<str>>(&mut self, id: FileId, keywords: &[S]) {
        for w in keywords {
            self.index.entry(w.as_ref().to_owned()).or_default().push(id);
        }
        self.files += 1;
    }

    /// Ids containing `keyword`, newest first.
    pub fn query(&self, keyword: &str) -> Vec<FileId> {
        self.index
            .get(keyword)
            .map(|ids| ids.iter().rev().copied().collect())
            .unwrap_or_default()
    }

    pub fn count(&self, keyword: &str) -> u64 {
        self.index.get(keyword).map_or(0, |ids| ids.len() as u64)
    }

    /// All keywords seen, sorted.
    pub fn keywords(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.index.keys().map(String::as_str).collect();
        v.sort_unstable();
        v
    }

    pub fn keyword_count(&self) -> usize {
        self.index.len()
    }

    pub fn file_count(&self) -> usize {
        self.files
    }
}
