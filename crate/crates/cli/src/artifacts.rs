//! Output-directory bookkeeping: the writer lock and run manifests.

use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::io::sha256_file;

pub const LOCK_FILE: &str = ".interprop.lock";

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<OutputLock> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(OutputLock { path })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                let holder = fs::read_to_string(&path).unwrap_or_default();
                bail!(
                    "{} is locked by process {} (delete {} if no run is active)",
                    dir.display(),
                    holder.trim(),
                    path.display()
                )
            }
            Err(e) => Err(e).with_context(|| format!("creating {}", path.display())),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// `key = value` record of a command run: parameters, input digests and
/// output digests. Contains nothing time- or host-dependent, so identical
/// runs produce identical manifests.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Manifest {
        let mut m = Manifest::default();
        m.set("command", command);
        m
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Records the digest and size of a file written to `dir`.
    pub fn output(&mut self, dir: &Path, name: &str) -> Result<()> {
        let p = dir.join(name);
        let bytes = fs::metadata(&p).with_context(|| format!("stat {}", p.display()))?.len();
        self.set(format!("output.{name}"), format!("sha256:{} bytes:{bytes}", sha256_file(&p)?));
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = String::from("# interprop run manifest\n");
        for (k, v) in &self.entries {
            text.push_str(&format!("{k} = {v}\n"));
        }
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut m = Manifest::default();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => m.set(k.trim(), v.trim()),
                None => bail!("{}: malformed line '{line}'", path.display()),
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let d = tempfile::tempdir().unwrap();
        let a = OutputLock::acquire(d.path()).unwrap();
        let err = OutputLock::acquire(d.path()).unwrap_err().to_string();
        assert!(err.contains("locked"), "{err}");
        drop(a);
        assert!(!d.path().join(LOCK_FILE).exists());
        OutputLock::acquire(d.path()).unwrap();
    }

    #[test]
    fn manifest_round_trip() {
        let d = tempfile::tempdir().unwrap();
        std::fs::write(d.path().join("f.txt"), "abc").unwrap();
        let mut m = Manifest::new("build-graph");
        m.set("param.k", 5);
        m.set("param.k", 6);
        m.set("param.empty", "");
        m.output(d.path(), "f.txt").unwrap();
        let p = d.path().join("manifest.txt");
        m.write(&p).unwrap();
        let back = Manifest::read(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.get("param.k"), Some("6"));
        assert!(back.get("output.f.txt").unwrap().ends_with("bytes:3"));
    }
}
