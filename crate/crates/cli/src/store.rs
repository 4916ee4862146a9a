//! State directory layout, atomic writes and the command lock.

use std::fs::{self, File, OpenOptions, TryLockError};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::Failure;

/// Set to `abort-before-rename:N` or `abort-after-write:N` to kill the process
/// around the N-th atomic write (1-based).
pub const FAULT_ENV: &str = "UNLEARN_FAULT";

static WRITES: AtomicUsize = AtomicUsize::new(0);

fn fault(stage: &str, n: usize) {
    let Ok(spec) = std::env::var(FAULT_ENV) else {
        return;
    };
    if let Some((s, k)) = spec.split_once(':') {
        if s == stage && k.trim().parse() == Ok(n) {
            std::process::abort();
        }
    }
}

/// Writes via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let n = WRITES.fetch_add(1, Ordering::SeqCst) + 1;
    let io = |e: std::io::Error| Failure::Io(format!("{}: {e}", path.display()));
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut f = File::create(&tmp).map_err(io)?;
        f.write_all(bytes).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    fault("abort-before-rename", n);
    fs::rename(&tmp, path).map_err(io)?;
    fault("abort-after-write", n);
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| Failure::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Reads a JSON envelope. Missing files are a usage error (wrong phase),
/// unparseable ones are corruption.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Failure::Usage(format!("{} does not exist", path.display())))
        }
        Err(e) => return Err(Failure::Io(format!("{}: {e}", path.display()))),
    };
    serde_json::from_str(&text).map_err(|e| Failure::Corrupt(format!("{}: {e}", path.display())))
}

/// Paths inside a state directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn config_text(&self) -> PathBuf {
        self.root.join("config.txt")
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("pub").join("config.json")
    }

    pub fn setup_dir(&self) -> PathBuf {
        self.root.join("pub").join("setup")
    }

    pub fn state(&self) -> PathBuf {
        self.root.join("state.json")
    }

    pub fn holdout(&self) -> PathBuf {
        self.root.join("holdout.json")
    }

    pub fn commitment(&self, i: usize) -> PathBuf {
        self.root.join("commitments").join(format!("com_{i}.json"))
    }

    pub fn init_proof(&self) -> PathBuf {
        self.root.join("proofs").join("init.json")
    }

    pub fn update_proof(&self, i: usize) -> PathBuf {
        self.root.join("proofs").join(format!("update_{i}.json"))
    }

    pub fn unlearn_proof(&self, i: usize, uid: u64) -> PathBuf {
        self.root.join("proofs").join(format!("unlearn_{i}_{uid}.json"))
    }

    fn lock_path(&self) -> PathBuf {
        self.root.join(".lock")
    }

    /// Exclusive advisory lock, released when the guard drops or the process
    /// dies.
    pub fn lock(&self) -> Result<LockGuard, Failure> {
        fs::create_dir_all(&self.root).map_err(|e| Failure::Io(format!("{}: {e}", self.root.display())))?;
        let path = self.lock_path();
        let f = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        match f.try_lock() {
            Ok(()) => Ok(LockGuard { _file: f }),
            Err(TryLockError::WouldBlock) => Err(Failure::Usage(format!(
                "{} is locked by another command",
                self.root.display()
            ))),
            Err(TryLockError::Error(e)) => Err(Failure::Io(format!("{}: {e}", path.display()))),
        }
    }
}

pub struct LockGuard {
    _file: File,
}
