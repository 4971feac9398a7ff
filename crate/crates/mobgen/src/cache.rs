//! Content-addressed artifact cache.
//!
//! Each stage result lives in `<root>/<stage>-<key>/`, where the key is a
//! BLAKE3 hash over the stage's input bytes and parameters. Entries are
//! built in a scratch directory and renamed into place, so a directory that
//! exists is complete.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const CACHE_ENV: &str = "MOBGEN_CACHE";
pub const DEFAULT_CACHE_DIR: &str = ".mobgen-cache";

/// Incremental cache key. Every field is length-prefixed so adjacent
/// values cannot run into each other.
pub struct KeyBuilder(blake3::Hasher);

impl KeyBuilder {
    pub fn new(stage: &str) -> Self {
        let mut h = blake3::Hasher::new();
        h.update(b"mobgen-cache/1");
        let mut k = KeyBuilder(h);
        k.str(stage);
        k
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.0.update(&(b.len() as u64).to_le_bytes());
        self.0.update(b);
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    /// Hashes the file contents, not its name or timestamp.
    pub fn file(&mut self, path: &Path) -> Result<&mut Self> {
        let digest = hash_file(path)?;
        Ok(self.bytes(digest.as_bytes()))
    }

    pub fn optional_file(&mut self, path: Option<&Path>) -> Result<&mut Self> {
        match path {
            Some(p) => {
                self.u64(1);
                self.file(p)
            }
            None => Ok(self.u64(0)),
        }
    }

    pub fn finish(&self) -> String {
        self.0.finalize().to_hex()[..32].to_string()
    }
}

pub fn hash_file(path: &Path) -> Result<blake3::Hash> {
    let mut h = blake3::Hasher::new();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    h.update_reader(f).map_err(|e| Error::io(path, e))?;
    Ok(h.finalize())
}

#[derive(Clone, Debug)]
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Cache { root: root.into() }
    }

    /// `$MOBGEN_CACHE` if set, else `fallback`.
    pub fn from_env(fallback: &Path) -> Self {
        match std::env::var_os(CACHE_ENV) {
            Some(v) if !v.is_empty() => Cache::new(PathBuf::from(v)),
            _ => Cache::new(fallback),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry_dir(&self, stage: &str, key: &str) -> PathBuf {
        self.root.join(format!("{stage}-{key}"))
    }

    /// Loads the entry if present, otherwise runs `build` into a scratch
    /// directory and publishes it. Returns the value and whether it was a hit.
    pub fn get_or_build<T>(
        &self,
        stage: &str,
        key: &str,
        load: impl FnOnce(&Path) -> Result<T>,
        build: impl FnOnce(&Path) -> Result<T>,
    ) -> Result<(T, bool)> {
        let dir = self.entry_dir(stage, key);
        if dir.is_dir() {
            log::info!("cache hit: {stage} {key}");
            return Ok((load(&dir)?, true));
        }
        log::info!("cache miss: {stage} {key}, building");
        let scratch = self
            .root
            .join(format!(".tmp-{stage}-{key}-{}", std::process::id()));
        if scratch.exists() {
            std::fs::remove_dir_all(&scratch).map_err(|e| Error::io(&scratch, e))?;
        }
        std::fs::create_dir_all(&scratch).map_err(|e| Error::io(&scratch, e))?;
        let value = match build(&scratch) {
            Ok(v) => v,
            Err(e) => {
                let _ = std::fs::remove_dir_all(&scratch);
                return Err(e);
            }
        };
        if let Err(e) = std::fs::rename(&scratch, &dir) {
            // Another process published the same entry first.
            let _ = std::fs::remove_dir_all(&scratch);
            if !dir.is_dir() {
                return Err(Error::io(&dir, e));
            }
        }
        Ok((value, false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_depends_on_every_field() {
        let a = KeyBuilder::new("s").str("ab").str("c").finish();
        let b = KeyBuilder::new("s").str("a").str("bc").finish();
        let c = KeyBuilder::new("t").str("ab").str("c").finish();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, KeyBuilder::new("s").str("ab").str("c").finish());
    }

    #[test]
    fn second_lookup_is_a_hit() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path());
        let build = |d: &Path| {
            std::fs::write(d.join("x"), b"42").unwrap();
            Ok(42)
        };
        let load = |d: &Path| Ok(std::fs::read_to_string(d.join("x")).unwrap().parse::<i32>().unwrap());
        assert_eq!(cache.get_or_build("s", "k", load, build).unwrap(), (42, false));
        assert_eq!(
            cache.get_or_build("s", "k", load, |_| panic!("rebuilt")).unwrap(),
            (42, true)
        );
    }

    #[test]
    fn failed_build_leaves_no_entry() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path());
        let r: Result<(i32, bool)> = cache.get_or_build("s", "k", |_| Ok(0), |_| Err(Error::parse("boom")));
        assert!(r.is_err());
        assert!(!cache.entry_dir("s", "k").exists());
    }
}
