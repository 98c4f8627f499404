//! Logical path rules: absolute, `/`-separated, no empty, `.` or `..`
//! segments, at most 4096 bytes.

use thiserror::Error;

pub const MAX_PATH_BYTES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid logical path {path:?}: {reason}")]
pub struct InvalidPath {
    pub path: String,
    pub reason: &'static str,
}

pub fn validate(path: &str) -> Result<(), InvalidPath> {
    let bad = |reason| Err(InvalidPath { path: path.to_string(), reason });
    if path.len() > MAX_PATH_BYTES {
        return bad("longer than 4096 bytes");
    }
    if !path.starts_with('/') {
        return bad("not absolute");
    }
    if path == "/" {
        return Ok(());
    }
    if path.ends_with('/') {
        return bad("trailing slash");
    }
    for seg in path[1..].split('/') {
        match seg {
            "" => return bad("empty segment"),
            "." | ".." => return bad("dot segment"),
            _ => {}
        }
    }
    if path.contains('\0') {
        return bad("contains NUL");
    }
    Ok(())
}

/// Parent of a validated path; `None` for the root.
pub fn parent(path: &str) -> Option<&str> {
    if path == "/" {
        return None;
    }
    match path.rfind('/') {
        Some(0) => Some("/"),
        Some(i) => Some(&path[..i]),
        None => None,
    }
}

pub fn join(base: &str, name: &str) -> String {
    if base == "/" {
        format!("/{name}")
    } else {
        format!("{base}/{name}")
    }
}

/// Resolves `p` against `base` when it is relative.
pub fn resolve(base: &str, p: &str) -> String {
    if p.starts_with('/') {
        p.to_string()
    } else {
        join(base, p)
    }
}
