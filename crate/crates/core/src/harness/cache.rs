use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::Result;
use crate::tm::{
    build_frequency_table_with, load_table, persist_table, table_checksum, CensusMode, CensusOptions,
    OutputFrequencyTable, SpaceId,
};

pub const CACHE_ENV: &str = "COLLAPSE_LAB_CACHE";
pub const DEFAULT_CACHE_DIR: &str = ".ctm-cache";

/// Census tables on disk, built on first use and reused after.
#[derive(Clone, Debug)]
pub struct TableCache {
    dir: PathBuf,
}

#[derive(Clone, Debug)]
pub struct CachedTable {
    pub path: PathBuf,
    pub table: OutputFrequencyTable,
    pub checksum: String,
    /// Loaded from disk rather than built.
    pub hit: bool,
}

fn key_lock(path: &Path) -> Arc<Mutex<()>> {
    static LOCKS: OnceLock<Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>> = OnceLock::new();
    let mut map = LOCKS
        .get_or_init(Default::default)
        .lock()
        .unwrap_or_else(|e| e.into_inner());
    map.entry(path.to_path_buf()).or_default().clone()
}

impl TableCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        TableCache { dir: dir.into() }
    }

    /// `explicit`, else `$COLLAPSE_LAB_CACHE`, else `.ctm-cache`.
    pub fn resolve(explicit: Option<&Path>) -> Self {
        match explicit {
            Some(d) => TableCache::new(d),
            None => match std::env::var_os(CACHE_ENV) {
                Some(d) if !d.is_empty() => TableCache::new(d),
                _ => TableCache::new(DEFAULT_CACHE_DIR),
            },
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(space: &SpaceId, mode: &CensusMode) -> String {
        match mode {
            CensusMode::Exhaustive => space.to_string(),
            CensusMode::Sampled { k, seed } => format!("{space}-sample{k}-seed{seed}"),
        }
    }

    pub fn path_for(&self, space: &SpaceId, mode: &CensusMode) -> PathBuf {
        self.dir.join(format!("{}.ctm", Self::key(space, mode)))
    }

    /// Loads the table if a valid copy is cached, otherwise builds and
    /// stores it. Corrupt or mismatched files are rebuilt.
    pub fn ensure(
        &self,
        n_states: usize,
        n_symbols: usize,
        budget: u64,
        mode: CensusMode,
        exhaustive_limit: u64,
    ) -> Result<CachedTable> {
        let space = SpaceId::new(n_states, n_symbols, budget);
        let path = self.path_for(&space, &mode);
        let lock = key_lock(&path);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());

        if path.exists() {
            match load_table(&path) {
                Ok(table) if table.space == space && sampled_total_ok(&table, &mode) => {
                    log::info!("table cache hit: {}", path.display());
                    let checksum = table_checksum(&table);
                    return Ok(CachedTable {
                        path,
                        table,
                        checksum,
                        hit: true,
                    });
                }
                Ok(table) => log::warn!("cached table {} describes {}, rebuilding", path.display(), table.space),
                Err(e) => log::warn!("cached table {} unusable ({e}), rebuilding", path.display()),
            }
        }
        log::info!("building census table {}", Self::key(&space, &mode));
        let opts = CensusOptions {
            mode,
            exhaustive_limit,
            ..CensusOptions::default()
        };
        let table = build_frequency_table_with(n_states, n_symbols, budget, &opts)?;
        persist_table(&table, &path)?;
        let checksum = table_checksum(&table);
        Ok(CachedTable {
            path,
            table,
            checksum,
            hit: false,
        })
    }
}

fn sampled_total_ok(table: &OutputFrequencyTable, mode: &CensusMode) -> bool {
    match mode {
        CensusMode::Sampled { k, .. } => table.total_machines == *k,
        CensusMode::Exhaustive => true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tm::DEFAULT_EXHAUSTIVE_LIMIT;

    #[test]
    fn build_then_hit_then_repair() {
        let tmp = tempfile::tempdir().unwrap();
        let cache = TableCache::new(tmp.path());
        let first = cache
            .ensure(1, 2, 100, CensusMode::Exhaustive, DEFAULT_EXHAUSTIVE_LIMIT)
            .unwrap();
        assert!(!first.hit);
        let second = cache
            .ensure(1, 2, 100, CensusMode::Exhaustive, DEFAULT_EXHAUSTIVE_LIMIT)
            .unwrap();
        assert!(second.hit);
        assert_eq!(second.table, first.table);
        assert_eq!(second.checksum, first.checksum);

        std::fs::write(&first.path, "garbage").unwrap();
        let third = cache
            .ensure(1, 2, 100, CensusMode::Exhaustive, DEFAULT_EXHAUSTIVE_LIMIT)
            .unwrap();
        assert!(!third.hit);
        assert_eq!(third.table, first.table);

        let sampled = CensusMode::Sampled { k: 10, seed: 3 };
        let s = cache.ensure(1, 2, 100, sampled, DEFAULT_EXHAUSTIVE_LIMIT).unwrap();
        assert_ne!(s.path, first.path);
        assert_eq!(s.table.total_machines, 10);
    }
}
