use std::path::Path;

use super::NetworkError;
use crate::codec::{deserialize, GopStream};
use crate::sampler::read_manifest;

/// Encoded videos and their labels, held in memory.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub items: Vec<(GopStream, usize)>,
}

impl Dataset {
    pub fn new(items: Vec<(GopStream, usize)>) -> Self {
        Self { items }
    }

    /// Loads every `.gops` file listed in a JSON-lines manifest.
    pub fn load(manifest: &Path) -> Result<Self, NetworkError> {
        let entries = read_manifest(manifest)?;
        let items = entries
            .into_iter()
            .map(|e| {
                let bytes = std::fs::read(&e.path)?;
                Ok((deserialize(&bytes)?, e.label))
            })
            .collect::<Result<_, NetworkError>>()?;
        Ok(Self { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// One more than the largest label.
    pub fn num_classes(&self) -> usize {
        self.items.iter().map(|(_, l)| l + 1).max().unwrap_or(0)
    }
}
