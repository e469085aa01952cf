use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::image::is_image_file;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
    ExternalTest,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Val, Split::Test, Split::ExternalTest];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::ExternalTest => "external_test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const TRAIN_DIR_NAMES: [&str; 1] = ["train"];
const VAL_DIR_NAMES: [&str; 2] = ["val", "validation"];

/// Discovered directory structure for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitLayout {
    pub train_dir: PathBuf,
    pub val_dir: PathBuf,
    pub test_dir: PathBuf,
    pub external_test_dir: Option<PathBuf>,
    /// Sorted lexicographically.
    pub class_names: Vec<String>,
    pub per_split_counts: BTreeMap<Split, BTreeMap<String, usize>>,
}

impl SplitLayout {
    pub fn dir(&self, split: Split) -> Option<&Path> {
        match split {
            Split::Train => Some(&self.train_dir),
            Split::Val => Some(&self.val_dir),
            Split::Test => Some(&self.test_dir),
            Split::ExternalTest => self.external_test_dir.as_deref(),
        }
    }

    pub fn splits(&self) -> Vec<Split> {
        Split::ALL
            .into_iter()
            .filter(|s| self.per_split_counts.contains_key(s))
            .collect()
    }

    pub fn counts(&self, split: Split) -> Option<&BTreeMap<String, usize>> {
        self.per_split_counts.get(&split)
    }

    pub fn total(&self, split: Split) -> usize {
        self.counts(split).map(|c| c.values().sum()).unwrap_or(0)
    }
}

/// Finds the train, validation, test and optional external test folders and
/// counts the images in every class folder.
pub fn discover_splits(
    train_val_root: &Path,
    test_root: &Path,
    external_root: Option<&Path>,
) -> Result<SplitLayout> {
    if !train_val_root.is_dir() {
        return Err(Error::Layout(format!(
            "train/val root {} is not a directory",
            train_val_root.display()
        )));
    }
    let expected = "expected <root>/train/<class>/<image> and <root>/{val|validation}/<class>/<image>";
    let train_dir = find_subdir(train_val_root, &TRAIN_DIR_NAMES).ok_or_else(|| {
        Error::Layout(format!(
            "no train folder under {}; {expected}",
            train_val_root.display()
        ))
    })?;
    let val_dir = find_subdir(train_val_root, &VAL_DIR_NAMES).ok_or_else(|| {
        Error::Layout(format!(
            "no val or validation folder under {}; {expected}",
            train_val_root.display()
        ))
    })?;
    if !test_root.is_dir() {
        return Err(Error::Layout(format!(
            "test folder {} is not a directory",
            test_root.display()
        )));
    }

    let train = count_classes(&train_dir)?;
    let val = count_classes(&val_dir)?;
    let train_set: BTreeSet<&String> = train.keys().collect();
    let val_set: BTreeSet<&String> = val.keys().collect();
    if train_set != val_set {
        let difference = train_set
            .symmetric_difference(&val_set)
            .map(|s| s.to_string())
            .collect();
        return Err(Error::ClassMismatch {
            left: "train".into(),
            right: "val".into(),
            difference,
        });
    }

    let check_subset = |name: &str, counts: &BTreeMap<String, usize>| -> Result<()> {
        let novel: Vec<String> = counts
            .keys()
            .filter(|c| !train.contains_key(*c))
            .cloned()
            .collect();
        if novel.is_empty() {
            Ok(())
        } else {
            Err(Error::ClassMismatch {
                left: "train".into(),
                right: name.into(),
                difference: novel,
            })
        }
    };

    let test = count_classes(test_root)?;
    check_subset("test", &test)?;

    let mut per_split_counts = BTreeMap::new();
    let class_names: Vec<String> = train.keys().cloned().collect();

    let external_test_dir = match external_root {
        Some(root) => {
            if !root.is_dir() {
                return Err(Error::Layout(format!(
                    "external test folder {} is not a directory",
                    root.display()
                )));
            }
            let ext = count_classes(root)?;
            check_subset("external_test", &ext)?;
            per_split_counts.insert(Split::ExternalTest, ext);
            Some(root.to_path_buf())
        }
        None => None,
    };
    per_split_counts.insert(Split::Train, train);
    per_split_counts.insert(Split::Val, val);
    per_split_counts.insert(Split::Test, test);

    Ok(SplitLayout {
        train_dir,
        val_dir,
        test_dir: test_root.to_path_buf(),
        external_test_dir,
        class_names,
        per_split_counts,
    })
}

fn find_subdir(root: &Path, names: &[&str]) -> Option<PathBuf> {
    names
        .iter()
        .map(|n| root.join(n))
        .find(|p| p.is_dir())
}

/// Sorted image files directly inside `dir`.
pub(crate) fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_image_file(&path) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Class folder name to sorted image files.
pub(crate) fn class_files(dir: &Path) -> Result<BTreeMap<String, Vec<PathBuf>>> {
    let mut classes = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_dir() {
            continue;
        }
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Layout(format!("non UTF-8 class folder {}", path.display())))?
            .to_string();
        if name.starts_with('.') {
            continue;
        }
        let files = list_images(&path)?;
        if files.is_empty() {
            return Err(Error::Layout(format!(
                "class folder {} contains no images",
                path.display()
            )));
        }
        classes.insert(name, files);
    }
    if classes.is_empty() {
        return Err(Error::Layout(format!(
            "{} contains no class folders",
            dir.display()
        )));
    }
    Ok(classes)
}

fn count_classes(dir: &Path) -> Result<BTreeMap<String, usize>> {
    Ok(class_files(dir)?
        .into_iter()
        .map(|(k, v)| (k, v.len()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch_images(dir: &Path, n: usize) {
        std::fs::create_dir_all(dir).unwrap();
        for i in 0..n {
            image::RgbImage::new(2, 2)
                .save(dir.join(format!("img_{i:03}.png")))
                .unwrap();
        }
    }

    #[test]
    fn two_class_tree() {
        let root = tempfile::tempdir().unwrap();
        let tv = root.path().join("tv");
        let test = root.path().join("test");
        for class in ["dogs", "cats"] {
            touch_images(&tv.join("train").join(class), 3);
            touch_images(&tv.join("val").join(class), 2);
            touch_images(&test.join(class), 1);
        }
        std::fs::write(tv.join("train/cats/readme.txt"), "x").unwrap();
        let layout = discover_splits(&tv, &test, None).unwrap();
        assert_eq!(layout.class_names, vec!["cats", "dogs"]);
        assert_eq!(layout.counts(Split::Train).unwrap()["cats"], 3);
        assert_eq!(layout.counts(Split::Val).unwrap()["dogs"], 2);
        assert_eq!(layout.counts(Split::Test).unwrap()["dogs"], 1);
        assert!(layout.external_test_dir.is_none());
        assert_eq!(layout.splits(), vec![Split::Train, Split::Val, Split::Test]);
    }

    #[test]
    fn validation_folder_name_accepted() {
        let root = tempfile::tempdir().unwrap();
        touch_images(&root.path().join("tv/train/a"), 1);
        touch_images(&root.path().join("tv/validation/a"), 1);
        touch_images(&root.path().join("test/a"), 1);
        let layout =
            discover_splits(&root.path().join("tv"), &root.path().join("test"), None).unwrap();
        assert!(layout.val_dir.ends_with("validation"));
    }

    #[test]
    fn extra_val_class_reported() {
        let root = tempfile::tempdir().unwrap();
        let tv = root.path().join("tv");
        for class in ["cats", "dogs"] {
            touch_images(&tv.join("train").join(class), 1);
            touch_images(&tv.join("val").join(class), 1);
            touch_images(&root.path().join("test").join(class), 1);
        }
        touch_images(&tv.join("val/birds"), 1);
        match discover_splits(&tv, &root.path().join("test"), None) {
            Err(Error::ClassMismatch { difference, .. }) => assert_eq!(difference, vec!["birds"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_val_folder() {
        let root = tempfile::tempdir().unwrap();
        touch_images(&root.path().join("tv/train/a"), 1);
        touch_images(&root.path().join("test/a"), 1);
        let err = discover_splits(&root.path().join("tv"), &root.path().join("test"), None)
            .unwrap_err();
        assert!(matches!(err, Error::Layout(ref m) if m.contains("validation")));
    }

    #[test]
    fn empty_class_folder() {
        let root = tempfile::tempdir().unwrap();
        touch_images(&root.path().join("tv/train/a"), 1);
        std::fs::create_dir_all(root.path().join("tv/train/b")).unwrap();
        touch_images(&root.path().join("tv/val/a"), 1);
        touch_images(&root.path().join("test/a"), 1);
        let err = discover_splits(&root.path().join("tv"), &root.path().join("test"), None)
            .unwrap_err();
        assert!(matches!(err, Error::Layout(ref m) if m.contains("no images")));
    }

    #[test]
    fn test_may_omit_but_not_add_classes() {
        let root = tempfile::tempdir().unwrap();
        let tv = root.path().join("tv");
        for class in ["a", "b"] {
            touch_images(&tv.join("train").join(class), 1);
            touch_images(&tv.join("val").join(class), 1);
        }
        touch_images(&root.path().join("test/a"), 2);
        let layout = discover_splits(&tv, &root.path().join("test"), None).unwrap();
        assert_eq!(layout.total(Split::Test), 2);

        touch_images(&root.path().join("ext/z"), 1);
        let err = discover_splits(&tv, &root.path().join("test"), Some(&root.path().join("ext")))
            .unwrap_err();
        assert!(matches!(err, Error::ClassMismatch { ref right, .. } if right == "external_test"));
    }
}
