//! Retraining on index subsets, with an optional shared model cache.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::gbdt::{fingerprint, train, Dataset, GbdtModel, LossFamily, TrainConfig};

pub const CACHE_DIR_ENV: &str = "TREEINF_CACHE_DIR";

struct Entry {
    model: Arc<GbdtModel>,
    bytes: usize,
    last_used: AtomicU64,
}

/// Byte-bounded LRU cache of compact retrained models.
///
/// Lookups take a shared lock; insertion and eviction take the write lock.
pub struct ModelCache {
    capacity_bytes: usize,
    clock: AtomicU64,
    inner: RwLock<(HashMap<String, Entry>, usize)>,
}

impl std::fmt::Debug for ModelCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelCache")
            .field("capacity_bytes", &self.capacity_bytes)
            .field("len", &self.len())
            .finish()
    }
}

impl ModelCache {
    pub fn new(capacity_bytes: usize) -> Self {
        Self {
            capacity_bytes,
            clock: AtomicU64::new(0),
            inner: RwLock::new((HashMap::new(), 0)),
        }
    }

    pub fn get(&self, key: &str) -> Option<Arc<GbdtModel>> {
        let guard = self.inner.read();
        let entry = guard.0.get(key)?;
        entry
            .last_used
            .store(self.clock.fetch_add(1, Ordering::Relaxed), Ordering::Relaxed);
        Some(entry.model.clone())
    }

    pub fn insert(&self, key: String, model: Arc<GbdtModel>) {
        let bytes = model.approx_bytes();
        if bytes > self.capacity_bytes {
            return;
        }
        let mut guard = self.inner.write();
        let (map, used) = &mut *guard;
        if map.contains_key(&key) {
            return;
        }
        while *used + bytes > self.capacity_bytes {
            let oldest = map
                .iter()
                .min_by_key(|(k, e)| (e.last_used.load(Ordering::Relaxed), (*k).clone()))
                .map(|(k, _)| k.clone());
            match oldest {
                Some(k) => {
                    let e = map.remove(&k).expect("present");
                    *used -= e.bytes;
                }
                None => break,
            }
        }
        *used += bytes;
        let tick = self.clock.fetch_add(1, Ordering::Relaxed);
        map.insert(
            key,
            Entry {
                model,
                bytes,
                last_used: AtomicU64::new(tick),
            },
        );
    }

    pub fn len(&self) -> usize {
        self.inner.read().0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn used_bytes(&self) -> usize {
        self.inner.read().1
    }
}

/// Trains the reference model on any subset of one dataset.
#[derive(Debug, Clone)]
pub struct Retrainer {
    dataset: Arc<Dataset>,
    config: TrainConfig,
    loss: LossFamily,
    base_key: String,
    cache: Option<Arc<ModelCache>>,
    disk_dir: Option<PathBuf>,
}

impl Retrainer {
    pub fn new(dataset: Arc<Dataset>, config: TrainConfig, loss: LossFamily) -> Self {
        let base_key = fingerprint(&dataset, &config, loss);
        Self {
            dataset,
            config,
            loss,
            base_key,
            cache: None,
            disk_dir: None,
        }
    }

    pub fn with_cache(mut self, cache: Arc<ModelCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_disk_cache(mut self, dir: impl Into<PathBuf>) -> Self {
        self.disk_dir = Some(dir.into());
        self
    }

    /// Enables the disk cache when the cache directory variable is set.
    pub fn with_env_disk_cache(self) -> Self {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => self.with_disk_cache(dir),
            _ => self,
        }
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn loss(&self) -> LossFamily {
        self.loss
    }

    pub fn n(&self) -> usize {
        self.dataset.n_rows()
    }

    pub fn train_full(&self) -> Result<GbdtModel> {
        train(&self.dataset, &self.config, self.loss)
    }

    /// Full model on `keep` (ascending row order) with relabelled rows.
    pub fn train_on(&self, keep: &[usize], relabel: &[(usize, f64)]) -> Result<GbdtModel> {
        let wrap = |e: Error| Error::Retrain {
            subset: describe(keep, relabel, self.n()),
            source: Box::new(e),
        };
        let data = if relabel.is_empty() {
            self.dataset.subset(keep)
        } else {
            self.dataset.with_targets(relabel).and_then(|d| d.subset(keep))
        }
        .map_err(wrap)?;
        train(&data, &self.config, self.loss).map_err(wrap)
    }

    /// Compact model on `keep` with relabelled rows, served from cache
    /// when possible.
    pub fn compact_on(&self, keep: &[usize], relabel: &[(usize, f64)]) -> Result<Arc<GbdtModel>> {
        let key = self.subset_key(keep, relabel);
        if let Some(cache) = &self.cache {
            if let Some(m) = cache.get(&key) {
                return Ok(m);
            }
        }
        let from_disk = self.disk_dir.as_ref().and_then(|dir| {
            let text = std::fs::read_to_string(dir.join(format!("{key}.json"))).ok()?;
            GbdtModel::from_json(&text).ok()
        });
        let model = match from_disk {
            Some(m) => Arc::new(m),
            None => {
                let m = Arc::new(self.train_on(keep, relabel)?.compact());
                if let Some(dir) = &self.disk_dir {
                    std::fs::create_dir_all(dir)?;
                    let tmp = dir.join(format!("{key}.json.tmp"));
                    std::fs::write(&tmp, m.to_json()?)?;
                    std::fs::rename(&tmp, dir.join(format!("{key}.json")))?;
                }
                m
            }
        };
        if let Some(cache) = &self.cache {
            cache.insert(key, model.clone());
        }
        Ok(model)
    }

    /// All rows except `removed`, ascending.
    pub fn complement(&self, removed: &[usize]) -> Result<Vec<usize>> {
        let n = self.n();
        let mut mask = vec![true; n];
        for &r in removed {
            if r >= n {
                return Err(invalid(format!("training index {r} out of range for n = {n}")));
            }
            mask[r] = false;
        }
        let keep: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
        if keep.is_empty() {
            return Err(invalid("cannot remove every training instance"));
        }
        Ok(keep)
    }

    fn subset_key(&self, keep: &[usize], relabel: &[(usize, f64)]) -> String {
        let mut h = Sha256::new();
        h.update(self.base_key.as_bytes());
        h.update((keep.len() as u64).to_le_bytes());
        for &i in keep {
            h.update((i as u64).to_le_bytes());
        }
        let mut sorted = relabel.to_vec();
        sorted.sort_by_key(|p| p.0);
        for (i, y) in sorted {
            h.update((i as u64).to_le_bytes());
            h.update(y.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn describe(keep: &[usize], relabel: &[(usize, f64)], n: usize) -> String {
    let mut mask = vec![false; n];
    for &i in keep {
        if i < n {
            mask[i] = true;
        }
    }
    let removed: Vec<usize> = (0..n).filter(|&i| !mask[i]).collect();
    let mut s = format!("{} of {n} rows kept", keep.len());
    if !removed.is_empty() && removed.len() <= 16 {
        s.push_str(&format!(", removed {removed:?}"));
    }
    if !relabel.is_empty() {
        s.push_str(&format!(", {} relabelled", relabel.len()));
    }
    s
}
