//! Media URIs.
//!
//! Requests refer to media by root-relative URIs so that traces and input
//! digests do not depend on where a dataset or run directory lives:
//! `dataset://<rel>` resolves against the dataset root, `run://<rel>`
//! against the run output directory. Anything else is taken as a path.

use std::path::{Path, PathBuf};

pub const DATASET_SCHEME: &str = "dataset://";
pub const RUN_SCHEME: &str = "run://";

pub fn dataset_uri(rel: &Path) -> String {
    format!("{DATASET_SCHEME}{}", slashed(rel))
}

pub fn run_uri(rel: &Path) -> String {
    format!("{RUN_SCHEME}{}", slashed(rel))
}

fn slashed(rel: &Path) -> String {
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MediaResolver {
    pub dataset_root: Option<PathBuf>,
    pub run_root: Option<PathBuf>,
}

impl MediaResolver {
    pub fn new(dataset_root: impl Into<PathBuf>, run_root: impl Into<PathBuf>) -> Self {
        Self {
            dataset_root: Some(dataset_root.into()),
            run_root: Some(run_root.into()),
        }
    }

    pub fn resolve(&self, uri: &str) -> PathBuf {
        if let Some(rel) = uri.strip_prefix(DATASET_SCHEME) {
            join(self.dataset_root.as_deref(), rel)
        } else if let Some(rel) = uri.strip_prefix(RUN_SCHEME) {
            join(self.run_root.as_deref(), rel)
        } else {
            PathBuf::from(uri.strip_prefix("file://").unwrap_or(uri))
        }
    }
}

fn join(root: Option<&Path>, rel: &str) -> PathBuf {
    match root {
        Some(r) => r.join(rel),
        None => PathBuf::from(rel),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolves_schemes() {
        let r = MediaResolver::new("/data", "/runs/a");
        let uri = dataset_uri(Path::new("frames/c1/00000.png"));
        assert_eq!(uri, "dataset://frames/c1/00000.png");
        assert_eq!(r.resolve(&uri), PathBuf::from("/data/frames/c1/00000.png"));
        assert_eq!(
            r.resolve(&run_uri(Path::new("overlays/x.png"))),
            PathBuf::from("/runs/a/overlays/x.png")
        );
        assert_eq!(r.resolve("file:///tmp/a.wav"), PathBuf::from("/tmp/a.wav"));
    }
}
