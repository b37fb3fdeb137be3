//! On-disk cache of brute-force optima, one JSON sidecar per instance hash.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use worms::oracle::{brute_force_worms, SearchBudget};
use worms::{Schedule, WormsInstance};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimumEntry {
    pub instance_hash: String,
    pub opt_cost: u64,
    pub schedule: Schedule,
}

fn entry_path(dir: &Path, hash: &str) -> PathBuf {
    dir.join(format!("{hash}.opt.json"))
}

/// Looks the optimum up in `dir` first; solves and stores it on a miss.
/// A corrupt or mismatched sidecar is ignored and rewritten.
pub fn optimum(
    instance: &WormsInstance,
    budget: &SearchBudget,
    dir: Option<&Path>,
) -> worms::Result<OptimumEntry> {
    let hash = instance.content_hash();
    if let Some(dir) = dir {
        if let Ok(text) = fs::read_to_string(entry_path(dir, &hash)) {
            if let Ok(e) = serde_json::from_str::<OptimumEntry>(&text) {
                if e.instance_hash == hash {
                    return Ok(e);
                }
            }
        }
    }
    let (schedule, opt_cost) = brute_force_worms(instance, budget)?;
    let entry = OptimumEntry { instance_hash: hash.clone(), opt_cost, schedule };
    if let Some(dir) = dir {
        // best effort: a read-only cache just means recomputing next time
        let _ = fs::create_dir_all(dir)
            .and_then(|_| fs::write(entry_path(dir, &hash), serde_json::to_string_pretty(&entry).unwrap()));
    }
    Ok(entry)
}
