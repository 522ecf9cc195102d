use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fsio::{atomic_write, digest_bytes, digest_file};
use super::StoreError;

/// Digest of one artifact written by a pipeline stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactDigest {
    pub stage: String,
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
}

/// Provenance record for one run: what went in, what came out.
///
/// Carries no wall-clock values, so two runs with identical inputs produce
/// byte-identical manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub round: u32,
    pub config: BTreeMap<String, String>,
    pub corpus_digest: String,
    pub labels_digest: String,
    pub artifacts: Vec<ArtifactDigest>,
}

impl RunManifest {
    /// The run id is derived from the inputs: config, corpus, labels and round.
    pub fn new(round: u32, config: BTreeMap<String, String>, corpus_digest: String, labels_digest: String) -> Self {
        let mut seed = serde_json::to_vec(&config).expect("config serializes");
        seed.extend_from_slice(corpus_digest.as_bytes());
        seed.extend_from_slice(labels_digest.as_bytes());
        seed.extend_from_slice(&round.to_le_bytes());
        let run_id = format!("r{round:04}-{}", &digest_bytes(&seed)[..12]);
        Self {
            run_id,
            round,
            config,
            corpus_digest,
            labels_digest,
            artifacts: Vec::new(),
        }
    }

    /// Hashes `dir/rel` and records it under `stage`.
    pub fn record_file(&mut self, stage: &str, dir: &Path, rel: &str) -> Result<(), StoreError> {
        let sha256 = digest_file(&dir.join(rel))?;
        self.artifacts.push(ArtifactDigest {
            stage: stage.to_string(),
            path: rel.to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn artifact(&self, rel: &str) -> Option<&ArtifactDigest> {
        self.artifacts.iter().find(|a| a.path == rel)
    }

    /// Re-hashes every recorded artifact and returns the paths that no longer match.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>, StoreError> {
        let mut bad = Vec::new();
        for a in &self.artifacts {
            let p = dir.join(&a.path);
            if !p.exists() || digest_file(&p)? != a.sha256 {
                bad.push(a.path.clone());
            }
        }
        Ok(bad)
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        bytes.push(b'\n');
        atomic_write(path, &bytes)
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let bytes = std::fs::read(path).map_err(|e| StoreError::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| StoreError::Malformed {
            path: path.display().to_string(),
            line: e.line(),
            reason: e.to_string(),
        })
    }
}
