//! Evicting benchmark inputs from the OS page cache before a timed run.

use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::os::unix::io::AsRawFd;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheProtocol {
    /// Nothing was evicted.
    Warm,
    /// `/proc/sys/vm/drop_caches` accepted a write.
    DropCaches,
    /// Each input file was synced and advised `POSIX_FADV_DONTNEED`.
    FadviseDontNeed,
    /// A decoy file at least twice the memory budget was read through.
    DecoyThrash,
}

impl fmt::Display for CacheProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CacheProtocol::Warm => "warm",
            CacheProtocol::DropCaches => "drop_caches",
            CacheProtocol::FadviseDontNeed => "fadvise_dontneed",
            CacheProtocol::DecoyThrash => "decoy_thrash",
        })
    }
}

fn drop_caches() -> bool {
    // SAFETY: sync(2) takes no arguments and cannot fail.
    unsafe { libc::sync() };
    OpenOptions::new()
        .write(true)
        .open("/proc/sys/vm/drop_caches")
        .and_then(|mut f| f.write_all(b"1\n"))
        .is_ok()
}

fn fadvise_dontneed(path: &Path) -> bool {
    let Ok(file) = File::open(path) else {
        return false;
    };
    // Dirty pages are not dropped, so flush first.
    if file.sync_all().is_err() {
        return false;
    }
    // SAFETY: the descriptor is owned by `file` and valid for this call.
    let rc = unsafe { libc::posix_fadvise(file.as_raw_fd(), 0, 0, libc::POSIX_FADV_DONTNEED) };
    rc == 0
}

fn thrash(decoy: &Path, size: u64) -> Result<()> {
    let current = fs::metadata(decoy).map(|m| m.len()).unwrap_or(0);
    if current < size {
        let mut f = File::create(decoy)?;
        let block = vec![0xA5u8; 1 << 20];
        let mut written = 0;
        while written < size {
            f.write_all(&block)?;
            written += block.len() as u64;
        }
        f.sync_all()?;
    }
    let mut f = File::open(decoy)?;
    let mut buf = vec![0u8; 1 << 20];
    while f.read(&mut buf)? > 0 {}
    Ok(())
}

/// Evicts `files` from the page cache with the strongest method available:
/// a global drop, per-file `fadvise`, or reading a decoy of
/// `2 * memory_budget` bytes at `decoy`. Returns the protocol that ran.
pub fn make_cold<P: AsRef<Path>>(files: &[P], decoy: &Path, memory_budget: u64) -> Result<CacheProtocol> {
    if drop_caches() {
        return Ok(CacheProtocol::DropCaches);
    }
    if files.iter().all(|p| fadvise_dontneed(p.as_ref())) {
        return Ok(CacheProtocol::FadviseDontNeed);
    }
    thrash(decoy, memory_budget.saturating_mul(2))?;
    Ok(CacheProtocol::DecoyThrash)
}
