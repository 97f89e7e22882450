//! Parallel verification of artifact files.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use castleforge::certify::{verify_artifact, ArtifactReport};
use castleforge::{Error, Result};

pub fn verify_file(path: &Path) -> Result<ArtifactReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    verify_artifact(&text)
}

/// Verifies `paths` on up to `jobs` threads; results keep input order.
pub fn verify_all(paths: &[&Path], jobs: usize) -> Vec<Result<ArtifactReport>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<ArtifactReport>>>> = Mutex::new((0..paths.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, paths.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= paths.len() {
                    break;
                }
                let r = verify_file(paths[i]);
                slots.lock().expect("no poisoned workers")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("no poisoned workers").into_iter().map(|r| r.expect("every file visited")).collect()
}
