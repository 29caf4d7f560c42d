use std::path::{Component, Path, PathBuf};

use super::SandboxError;

/// Maps an agent-supplied path onto the host filesystem, refusing anything that
/// lands outside `root`. Absolute paths are accepted when they sit under
/// `guest_root` (the workdir as seen by commands) or `root` itself.
/// Symlinks in the existing part of the path are followed before checking.
pub fn resolve_inside(root: &Path, guest_root: &Path, requested: &str) -> Result<PathBuf, SandboxError> {
    let escape = || SandboxError::PathEscapesSandbox(requested.to_string());
    let req = Path::new(requested);
    let rel: PathBuf = if req.is_absolute() {
        if let Ok(r) = req.strip_prefix(guest_root) {
            r.to_path_buf()
        } else if let Ok(r) = req.strip_prefix(root) {
            r.to_path_buf()
        } else {
            return Err(escape());
        }
    } else {
        req.to_path_buf()
    };

    let mut parts: Vec<&std::ffi::OsStr> = Vec::new();
    for c in rel.components() {
        match c {
            Component::Normal(p) => parts.push(p),
            Component::CurDir => {}
            Component::ParentDir => {
                if parts.pop().is_none() {
                    return Err(escape());
                }
            }
            Component::RootDir | Component::Prefix(_) => return Err(escape()),
        }
    }
    let mut out = root.to_path_buf();
    out.extend(parts);

    // Follow symlinks of the deepest existing ancestor.
    let canon_root = root.canonicalize().map_err(|_| escape())?;
    let mut probe = out.as_path();
    loop {
        if probe.symlink_metadata().is_ok() {
            let real = match probe.canonicalize() {
                Ok(r) => r,
                // Dangling link: judge by its target text.
                Err(_) => {
                    let target = std::fs::read_link(probe).map_err(|_| escape())?;
                    let joined = probe.parent().unwrap_or(root).join(target);
                    if joined.is_absolute() && !lexically_inside(&joined, &canon_root, root) {
                        return Err(escape());
                    }
                    break;
                }
            };
            if !real.starts_with(&canon_root) {
                return Err(escape());
            }
            break;
        }
        match probe.parent() {
            Some(p) => probe = p,
            None => break,
        }
    }
    Ok(out)
}

fn lexically_inside(path: &Path, canon_root: &Path, root: &Path) -> bool {
    let mut parts: Vec<Component> = Vec::new();
    for c in path.components() {
        match c {
            Component::ParentDir => {
                parts.pop();
            }
            Component::CurDir => {}
            other => parts.push(other),
        }
    }
    let norm: PathBuf = parts.iter().collect();
    norm.starts_with(canon_root) || norm.starts_with(root)
}
