use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

use sbpp::colgen::PatternCache;
use sbpp::{Confidence, Instance};

/// Key for a pattern set: services, capacity and the column-generation
/// demands. Alpha is deliberately left out and checked on load instead.
pub fn fingerprint(instance: &Instance) -> Result<String> {
    let existing = instance.cluster().initial.column_totals();
    let demands: Vec<u64> = instance.request().demands.iter().zip(&existing).map(|(&m, &z)| u64::from(m) + z).collect();
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(instance.services())?);
    hasher.update(instance.capacity().to_bits().to_le_bytes());
    hasher.update(serde_json::to_vec(&demands)?);
    Ok(hex::encode(hasher.finalize()))
}

pub fn path_for(dir: &Path, instance: &Instance) -> Result<PathBuf> {
    Ok(dir.join(format!("{}.json", fingerprint(instance)?)))
}

/// The cached pattern set if present and generated for the same inputs.
pub fn load(dir: &Path, instance: &Instance, conf: Confidence) -> Result<Option<PatternCache>> {
    let path = path_for(dir, instance)?;
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let cache: PatternCache = match serde_json::from_str(&text) {
        Ok(c) => c,
        Err(e) => {
            log::warn!("ignoring unreadable cache {}: {e}", path.display());
            return Ok(None);
        }
    };
    if !cache.matches(instance.services(), instance.capacity(), conf) {
        log::info!("cache {} was built for alpha {}, regenerating", path.display(), cache.alpha);
        return Ok(None);
    }
    Ok(Some(cache))
}

pub fn store(dir: &Path, instance: &Instance, cache: &PatternCache) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = path_for(dir, instance)?;
    fs::write(&path, serde_json::to_vec(cache)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
