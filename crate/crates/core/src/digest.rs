use std::path::Path;

use sha2::{Digest, Sha256};
use walkdir::WalkDir;

pub fn sha256_hex(data: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(data.as_ref()))
}

pub fn file_digest(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(std::fs::read(path)?))
}

/// Digest over every regular file under `root` (relative path + content), in
/// sorted order. Paths whose first component is in `skip` are ignored.
pub fn tree_digest(root: &Path, skip: &[&str]) -> std::io::Result<String> {
    let mut hasher = Sha256::new();
    let walker = WalkDir::new(root).sort_by_file_name().into_iter().filter_entry(|e| {
        let rel = e.path().strip_prefix(root).unwrap_or(e.path());
        match rel.components().next() {
            Some(first) => !skip.iter().any(|s| first.as_os_str() == *s),
            None => true,
        }
    });
    for entry in walker {
        let entry = entry.map_err(std::io::Error::other)?;
        let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
        if entry.file_type().is_file() {
            hasher.update(rel.to_string_lossy().as_bytes());
            hasher.update([0u8]);
            hasher.update(Sha256::digest(std::fs::read(entry.path())?));
        } else if entry.file_type().is_dir() {
            hasher.update(b"dir:");
            hasher.update(rel.to_string_lossy().as_bytes());
            hasher.update([0u8]);
        }
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Rough token estimate used for context budgets and pre-flight cost estimates.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_digest_tracks_content_and_skips() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "one").unwrap();
        std::fs::create_dir(dir.path().join(".cache")).unwrap();
        let d1 = tree_digest(dir.path(), &[".cache"]).unwrap();
        std::fs::write(dir.path().join(".cache/x"), "noise").unwrap();
        assert_eq!(d1, tree_digest(dir.path(), &[".cache"]).unwrap());
        std::fs::write(dir.path().join("a.txt"), "two").unwrap();
        assert_ne!(d1, tree_digest(dir.path(), &[".cache"]).unwrap());
    }

    #[test]
    fn token_estimate_rounds_up() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcde"), 2);
    }
}
