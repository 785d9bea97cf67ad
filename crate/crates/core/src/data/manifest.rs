use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::label::{Domain, EmotionLabel, NUM_CLASSES};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Relative path or inline id of the image.
    pub image: String,
    pub label: EmotionLabel,
    pub domain: Domain,
}

/// Validated, non-empty list of labelled images with its class histogram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
    counts: [usize; NUM_CLASSES],
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("manifest"));
        }
        let counts = histogram(&entries);
        Ok(Self { entries, counts })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn counts(&self) -> [usize; NUM_CLASSES] {
        self.counts
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> Vec<EmotionLabel> {
        self.entries.iter().map(|e| e.label).collect()
    }

    pub fn all_in_domain(&self, domain: Domain) -> bool {
        self.entries.iter().all(|e| e.domain == domain)
    }
}

fn histogram(entries: &[ManifestEntry]) -> [usize; NUM_CLASSES] {
    let mut counts = [0; NUM_CLASSES];
    for e in entries {
        counts[e.label.index()] += 1;
    }
    counts
}

/// Per-class image counts, indexed by label.
pub fn class_distribution(manifest: &DatasetManifest) -> [usize; NUM_CLASSES] {
    manifest.counts
}
