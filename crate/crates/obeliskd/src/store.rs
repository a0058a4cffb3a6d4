//! Keyed record stores: in-memory maps with optional directory-backed
//! persistence. Every mutation lands on disk before the call returns, so
//! the service itself stays stateless.

use serde::de::DeserializeOwned;
use serde::Serialize;
use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Mutex;

pub struct Store<V> {
    dir: Option<PathBuf>,
    map: Mutex<HashMap<String, V>>,
}

impl<V: Serialize + DeserializeOwned + Clone> Store<V> {
    /// Opens the store, loading any records persisted under
    /// `<root>/<name>/`.
    pub fn open(root: Option<&std::path::Path>, name: &str) -> anyhow::Result<Store<V>> {
        let mut map = HashMap::new();
        let dir = match root {
            Some(root) => {
                let dir = root.join(name);
                std::fs::create_dir_all(&dir)?;
                for entry in std::fs::read_dir(&dir)? {
                    let path = entry?.path();
                    if path.extension().is_some_and(|e| e == "json") {
                        let stem = path.file_stem().unwrap().to_string_lossy();
                        let key = String::from_utf8(hex::decode(stem.as_bytes())?)?;
                        let value = serde_json::from_slice(&std::fs::read(&path)?)?;
                        map.insert(key, value);
                    }
                }
                Some(dir)
            }
            None => None,
        };
        Ok(Store {
            dir,
            map: Mutex::new(map),
        })
    }

    fn path_for(&self, key: &str) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(format!("{}.json", hex::encode(key))))
    }

    pub fn get(&self, key: &str) -> Option<V> {
        self.map.lock().unwrap().get(key).cloned()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.map.lock().unwrap().contains_key(key)
    }

    pub fn put(&self, key: &str, value: V) {
        if let Some(path) = self.path_for(key) {
            let tmp = path.with_extension("tmp");
            std::fs::write(&tmp, serde_json::to_vec(&value).expect("serialize record"))
                .expect("persist record");
            std::fs::rename(&tmp, &path).expect("persist record");
        }
        self.map.lock().unwrap().insert(key.to_string(), value);
    }

    /// Atomic read-modify-write under the store lock.
    pub fn update<R>(&self, key: &str, f: impl FnOnce(&mut V) -> R) -> Option<R> {
        let mut guard = self.map.lock().unwrap();
        let value = guard.get_mut(key)?;
        let out = f(value);
        if let Some(path) = self.path_for(key) {
            let tmp = path.with_extension("tmp");
            std::fs::write(&tmp, serde_json::to_vec(value).expect("serialize record"))
                .expect("persist record");
            std::fs::rename(&tmp, &path).expect("persist record");
        }
        Some(out)
    }

    pub fn remove(&self, key: &str) -> Option<V> {
        if let Some(path) = self.path_for(key) {
            let _ = std::fs::remove_file(path);
        }
        self.map.lock().unwrap().remove(key)
    }

    pub fn keys(&self) -> Vec<String> {
        self.map.lock().unwrap().keys().cloned().collect()
    }

    pub fn filter(&self, pred: impl Fn(&V) -> bool) -> Vec<(String, V)> {
        self.map
            .lock()
            .unwrap()
            .iter()
            .filter(|(_, v)| pred(v))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn persists_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let store: Store<Vec<u32>> = Store::open(Some(dir.path()), "things").unwrap();
        store.put("a:b", vec![1, 2, 3]);
        store.put("c", vec![4]);
        store.remove("c");
        drop(store);
        let store: Store<Vec<u32>> = Store::open(Some(dir.path()), "things").unwrap();
        assert_eq!(store.get("a:b"), Some(vec![1, 2, 3]));
        assert_eq!(store.get("c"), None);
    }
}
