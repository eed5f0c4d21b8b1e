//! Filename resolution against the sandbox root.

use std::path::{Component, Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathResolution {
    Resolved(PathBuf),
    Denied { reason: String },
}

/// Resolve a client-supplied filename against the sandbox root.
///
/// With `f1_naive` set this is the flawed behavior: a plain lexical join
/// where `..` segments and absolute filenames escape the root. Hardened
/// behavior rejects absolute filenames, any `..` segment, and (when the
/// filesystem can be consulted) anything whose canonicalized location
/// falls outside the root — which catches symlink hops.
pub fn resolve_path(root: &Path, filename: &str, f1_naive: bool) -> PathResolution {
    if f1_naive {
        // Sloppy string-level handling: join, then fold `.`/`..` textually
        // without ever asking the filesystem.
        return PathResolution::Resolved(lexical_normalize(&root.join(filename)));
    }

    let candidate = Path::new(filename);
    if candidate.is_absolute() {
        return PathResolution::Denied {
            reason: "absolute filename".into(),
        };
    }
    if candidate
        .components()
        .any(|c| matches!(c, Component::ParentDir))
    {
        return PathResolution::Denied {
            reason: "filename contains a parent (`..`) segment".into(),
        };
    }
    let joined = root.join(candidate);
    // Containment check against the real filesystem where possible. The
    // lexical rules above already hold, so this only adds symlink safety;
    // when the tree does not exist (pure-path callers) it is skipped.
    if let Ok(canon_root) = root.canonicalize() {
        let mut probe = joined.clone();
        while !probe.exists() {
            match probe.parent() {
                Some(parent) => probe = parent.to_path_buf(),
                None => break,
            }
        }
        if let Ok(canon_probe) = probe.canonicalize() {
            if !canon_probe.starts_with(&canon_root) {
                return PathResolution::Denied {
                    reason: "resolved location is outside the sandbox root".into(),
                };
            }
        }
    }
    PathResolution::Resolved(joined)
}

/// Fold `.` and `..` components textually. `/a/b/../../x` becomes `/x`;
/// `..` at the filesystem root stays at the root, matching kernel path
/// walking.
fn lexical_normalize(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for comp in path.components() {
        match comp {
            Component::Prefix(p) => out.push(p.as_os_str()),
            Component::RootDir => out.push(Component::RootDir.as_os_str()),
            Component::CurDir => {}
            Component::ParentDir => {
                let popped =
                    matches!(out.components().next_back(), Some(Component::Normal(_))) && out.pop();
                if !popped && !matches!(out.components().next_back(), Some(Component::RootDir)) {
                    out.push(Component::ParentDir.as_os_str());
                }
            }
            Component::Normal(name) => out.push(name),
        }
    }
    out
}
