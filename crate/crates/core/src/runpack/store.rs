//! Per-host cache of installed images.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use super::RunpackImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    LocalDisk,
    NetworkFetched,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("package '{name}' is already installed with hash {existing}, refusing {offered}")]
    Conflict { name: String, existing: String, offered: String },
}

/// Readers see either the old or the new complete entry.
#[derive(Debug, Default, Clone)]
pub struct PackStore {
    entries: Arc<RwLock<BTreeMap<String, (Arc<RunpackImage>, Origin)>>>,
}

impl PackStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Installs an image. Re-installing the same hash is a no-op; a different hash
    /// for an installed name is refused.
    pub fn insert(&self, image: Arc<RunpackImage>, origin: Origin) -> Result<Arc<RunpackImage>, StoreError> {
        let mut map = self.entries.write().expect("pack store lock");
        if let Some((existing, _)) = map.get(&image.name) {
            if existing.hash == image.hash {
                return Ok(existing.clone());
            }
            return Err(StoreError::Conflict {
                name: image.name.clone(),
                existing: existing.hash_hex(),
                offered: image.hash_hex(),
            });
        }
        map.insert(image.name.clone(), (image.clone(), origin));
        Ok(image)
    }

    pub fn resolve(&self, name: &str) -> Option<Arc<RunpackImage>> {
        self.entries.read().expect("pack store lock").get(name).map(|(i, _)| i.clone())
    }

    pub fn origin(&self, name: &str) -> Option<Origin> {
        self.entries.read().expect("pack store lock").get(name).map(|(_, o)| *o)
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.read().expect("pack store lock").keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("pack store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{translate, SourceUnit};
    use crate::runpack::compile;

    fn img(src: &str) -> Arc<RunpackImage> {
        Arc::new(compile(&translate(&[SourceUnit::new("a.hlo", src)]).unwrap()).unwrap())
    }

    #[test]
    fn resolve_after_install_and_unknown() {
        let s = PackStore::new();
        let a = img("package p; class A {}");
        s.insert(a.clone(), Origin::LocalDisk).unwrap();
        assert_eq!(s.resolve("p").unwrap().hash, a.hash);
        assert!(s.resolve("q").is_none());
    }

    #[test]
    fn different_hash_is_refused() {
        let s = PackStore::new();
        s.insert(img("package p; class A {}"), Origin::NetworkFetched).unwrap();
        s.insert(img("package p; class A {}"), Origin::LocalDisk).unwrap();
        assert_eq!(s.origin("p"), Some(Origin::NetworkFetched));
        assert!(s.insert(img("package p; class B {}"), Origin::LocalDisk).is_err());
    }
}
