//! Artifact files and the LP cache.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

/// Writes `<stem>.json`, `<stem>.csv`, `<stem>*.svg` and, last, the
/// `<stem>.meta.json` holding everything that varies between reruns.
pub struct Artifacts {
    dir: PathBuf,
    stem: String,
    started: SystemTime,
    clock: Instant,
    meta: Map<String, Value>,
    written: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path, stem: &str) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            stem: stem.to_string(),
            started: SystemTime::now(),
            clock: Instant::now(),
            meta: Map::new(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: String, text: &str) -> Result<()> {
        let path = self.dir.join(&name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(name);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, report: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(report)?;
        text.push('\n');
        self.write(format!("{}.json", self.stem), &text)
    }

    pub fn csv(&mut self, text: &str) -> Result<()> {
        self.write(format!("{}.csv", self.stem), text)
    }

    pub fn csv_named(&mut self, suffix: &str, text: &str) -> Result<()> {
        self.write(format!("{}-{suffix}.csv", self.stem), text)
    }

    pub fn svg(&mut self, suffix: &str, text: &str) -> Result<()> {
        let name = if suffix.is_empty() { format!("{}.svg", self.stem) } else { format!("{}-{suffix}.svg", self.stem) };
        self.write(name, text)
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        self.meta.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn finish(mut self) -> Result<()> {
        let started = self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let mut meta = json!({
            "version": env!("CARGO_PKG_VERSION"),
            "args": std::env::args().collect::<Vec<_>>(),
            "started_unix": started,
            "elapsed_seconds": self.clock.elapsed().as_secs_f64(),
            "threads": rayon::current_num_threads(),
        });
        meta.as_object_mut().unwrap().append(&mut self.meta);
        meta["files"] = json!(self.written);
        let text = serde_json::to_string_pretty(&meta)? + "\n";
        let path = self.dir.join(format!("{}.meta.json", self.stem));
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

/// Hex SHA-256 of the given byte chunks, each length-prefixed.
pub fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn f64_bytes(v: &[f64]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_bits().to_le_bytes()).collect()
}

/// Looks `key` up in `$MMS_LAB_CACHE` and otherwise computes and stores the
/// value. Returns whether it was a hit. Without the variable nothing is
/// cached; unreadable entries are recomputed.
pub fn cached<T, F>(key: &str, compute: F) -> Result<(T, bool)>
where
    T: Serialize + DeserializeOwned,
    F: FnOnce() -> Result<T>,
{
    let Some(dir) = std::env::var_os("MMS_LAB_CACHE").filter(|d| !d.is_empty()) else {
        return Ok((compute()?, false));
    };
    let path = Path::new(&dir).join(format!("{key}.json"));
    if let Some(v) = fs::read_to_string(&path).ok().and_then(|s| serde_json::from_str(&s).ok()) {
        return Ok((v, true));
    }
    let v = compute()?;
    fs::create_dir_all(&dir).with_context(|| format!("creating cache {}", path.display()))?;
    // write then rename, so a concurrent reader never sees a partial entry
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, serde_json::to_string(&v)?)?;
    fs::rename(&tmp, &path)?;
    Ok((v, false))
}
