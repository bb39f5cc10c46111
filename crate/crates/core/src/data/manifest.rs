use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{DatasetError, Error, Result};

/// Label names by class id: 0 = NORMAL, 1 = PNEUMONIA (the positive class).
pub const CLASS_NAMES: [&str; 2] = ["NORMAL", "PNEUMONIA"];

const IMAGE_EXTENSIONS: [&str; 4] = ["jpeg", "jpg", "png", "pgm"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
    Val,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Val => "val",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "val" => Ok(Split::Val),
            other => Err(Error::Config(format!(
                "unknown split {other:?}, expected train, test or val"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub path: PathBuf,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub split: Split,
    pub records: Vec<ImageRecord>,
    pub class_counts: [usize; 2],
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn is_image(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false)
}

/// Scans `root/<split>/{NORMAL,PNEUMONIA}/` for image files. Records are
/// ordered NORMAL first, each class sorted lexicographically by path.
pub fn load_manifest(root: impl AsRef<Path>, split: Split) -> Result<DatasetManifest> {
    let split_dir = root.as_ref().join(split.dir_name());
    if !split_dir.is_dir() {
        return Err(DatasetError::Layout(format!(
            "split directory {} does not exist",
            split_dir.display()
        ))
        .into());
    }
    let mut records = Vec::new();
    let mut class_counts = [0usize; 2];
    for (label, class) in CLASS_NAMES.iter().enumerate() {
        let dir = split_dir.join(class);
        if !dir.is_dir() {
            return Err(
                DatasetError::Layout(format!("missing class folder {}", dir.display())).into(),
            );
        }
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| is_image(p))
            .collect();
        paths.sort();
        class_counts[label] = paths.len();
        records.extend(paths.into_iter().map(|path| ImageRecord { path, label }));
    }
    if records.is_empty() {
        return Err(DatasetError::Empty(split_dir).into());
    }
    Ok(DatasetManifest {
        split,
        records,
        class_counts,
    })
}
