use std::path::Path;

use walkdir::WalkDir;

pub const MAX_TREE_DEPTH: usize = 4;
pub const MAX_TREE_ENTRIES: usize = 2000;

/// Serialized listing of `root`: one relative path per line, directories
/// suffixed with `/`, `.git` skipped.
pub fn directory_tree(root: &Path, max_depth: usize, max_entries: usize) -> std::io::Result<String> {
    let mut lines = Vec::new();
    let mut truncated = false;
    let walker = WalkDir::new(root)
        .min_depth(1)
        .max_depth(max_depth)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.file_name() != ".git");
    for entry in walker {
        let entry = entry.map_err(std::io::Error::other)?;
        if lines.len() == max_entries {
            truncated = true;
            break;
        }
        let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
        let mut line = rel.to_string_lossy().replace('\\', "/");
        if entry.file_type().is_dir() {
            line.push('/');
        }
        lines.push(line);
    }
    if truncated {
        lines.push(format!("... (listing truncated at {max_entries} entries)"));
    }
    Ok(lines.join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_and_entry_limits() {
        let dir = tempfile::tempdir().unwrap();
        let deep = dir.path().join("a/b/c/d/e");
        std::fs::create_dir_all(&deep).unwrap();
        std::fs::write(deep.join("f.txt"), "x").unwrap();
        let tree = directory_tree(dir.path(), 4, 100).unwrap();
        assert_eq!(tree, "a/\na/b/\na/b/c/\na/b/c/d/");
        let tree = directory_tree(dir.path(), 4, 2).unwrap();
        assert_eq!(tree.lines().count(), 3);
        assert!(tree.ends_with("truncated at 2 entries)"));
    }
}
