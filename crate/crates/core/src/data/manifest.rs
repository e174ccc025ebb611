use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::{Provenance, AUGMENTATIONS};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;
pub const MIN_ORIGINALS_PER_CLASS: usize = 10;

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!(
                "unknown split '{other}' (expected train, val or test)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub path: PathBuf,
    pub label: usize,
    pub split: Split,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|r| !(0.0..=1.0).contains(r)) || ((all.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "split ratios must be in [0, 1] and sum to 1, got {}/{}/{}",
                self.train, self.val, self.test
            )));
        }
        Ok(())
    }
}

impl FromStr for SplitRatios {
    type Err = Error;

    /// `"0.8,0.1,0.1"` as train,val,test.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::invalid(format!("bad ratios '{s}'")))?;
        let [train, val, test] = parts[..] else {
            return Err(Error::invalid(format!("expected three ratios, got '{s}'")));
        };
        let r = SplitRatios { train, val, test };
        r.validate()?;
        Ok(r)
    }
}

/// Per-split sample counts for a class of `n` originals: each split gets
/// `floor(ratio * n)`, then the leftover samples go one at a time to train,
/// val, test in that order. Every count is within one sample of its exact
/// share.
pub fn split_counts(n: usize, ratios: &SplitRatios) -> [usize; 3] {
    let shares = [ratios.train, ratios.val, ratios.test];
    let mut counts = shares.map(|r| (r * n as f64 + 1e-9).floor() as usize);
    let mut leftover = n - counts.iter().sum::<usize>().min(n);
    for c in counts.iter_mut() {
        if leftover == 0 {
            break;
        }
        *c += 1;
        leftover -= 1;
    }
    counts
}

/// Per-class record counts by split (originals and augmented variants).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub class: String,
    pub train_originals: usize,
    pub train_augmented: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub class_names: Vec<String>,
    pub records: Vec<ImageRecord>,
}

impl DatasetManifest {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Record indices belonging to `split`, in manifest order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn class_counts(&self) -> Vec<ClassCounts> {
        let mut counts: Vec<ClassCounts> = self
            .class_names
            .iter()
            .map(|c| ClassCounts {
                class: c.clone(),
                train_originals: 0,
                train_augmented: 0,
                val: 0,
                test: 0,
            })
            .collect();
        for r in &self.records {
            let c = &mut counts[r.label];
            match (r.split, r.provenance) {
                (Split::Train, Provenance::Original) => c.train_originals += 1,
                (Split::Train, _) => c.train_augmented += 1,
                (Split::Val, _) => c.val += 1,
                (Split::Test, _) => c.test += 1,
            }
        }
        counts
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::invalid(format!(
                "manifest version {} is not supported (expected {MANIFEST_VERSION})",
                self.version
            )));
        }
        if self.class_names.len() < 2 {
            return Err(Error::invalid("manifest needs at least two classes"));
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.label >= self.num_classes() {
                return Err(Error::LabelOutOfRange {
                    label: r.label,
                    classes: self.num_classes(),
                });
            }
            if r.provenance != Provenance::Original && r.split != Split::Train {
                return Err(Error::invalid(format!(
                    "record {i}: augmented variant {} assigned to {}",
                    r.provenance.name(),
                    r.split
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: DatasetManifest = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// `(path, label)` pairs of original images.
pub type LabelledPaths = Vec<(PathBuf, usize)>;

/// Scans `root/<class_name>/<image files>`. Classes are sorted by name, files
/// by path. Returns the class table and `(path, label)` pairs.
pub fn scan_dataset(root: &Path) -> Result<(Vec<String>, LabelledPaths)> {
    if !root.is_dir() {
        return Err(Error::Layout(format!("{} is not a directory", root.display())));
    }
    let mut class_dirs: Vec<PathBuf> = fs::read_dir(root)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(Error::Layout(format!(
            "{} contains no class directories",
            root.display()
        )));
    }

    let mut class_names = Vec::with_capacity(class_dirs.len());
    let mut originals = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        let name = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Layout(format!("non UTF-8 class directory {}", dir.display())))?
            .to_string();
        let mut files: Vec<PathBuf> = fs::read_dir(dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .filter(|p| p.is_file() && is_image(p))
            .collect();
        if files.is_empty() {
            return Err(Error::Layout(format!("class '{name}' has no images")));
        }
        files.sort();
        originals.extend(files.into_iter().map(|p| (p, label)));
        class_names.push(name);
    }
    Ok((class_names, originals))
}

/// Stratified split of the originals. Within each class the originals are
/// shuffled with `seed` and cut by [`split_counts`]. With `augment`, each
/// train original is followed by its four augmented variants; validation
/// and test only ever hold originals.
pub fn split_dataset(
    class_names: Vec<String>,
    originals: &[(PathBuf, usize)],
    ratios: &SplitRatios,
    seed: u64,
    augment: bool,
) -> Result<DatasetManifest> {
    ratios.validate()?;
    let classes = class_names.len();
    let mut by_class: Vec<Vec<&PathBuf>> = vec![Vec::new(); classes];
    for (path, label) in originals {
        by_class
            .get_mut(*label)
            .ok_or(Error::LabelOutOfRange { label: *label, classes })?
            .push(path);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for (label, mut paths) in by_class.into_iter().enumerate() {
        if paths.len() < MIN_ORIGINALS_PER_CLASS {
            return Err(Error::ClassTooSmall {
                class: class_names[label].clone(),
                count: paths.len(),
                min: MIN_ORIGINALS_PER_CLASS,
            });
        }
        paths.sort();
        let mut order: Vec<usize> = (0..paths.len()).collect();
        order.shuffle(&mut rng);
        let [n_train, n_val, _] = split_counts(paths.len(), ratios);
        let mut assigned = vec![Split::Test; paths.len()];
        for (rank, &i) in order.iter().enumerate() {
            assigned[i] = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
        for (path, split) in paths.into_iter().zip(assigned) {
            records.push(ImageRecord {
                path: path.clone(),
                label,
                split,
                provenance: Provenance::Original,
            });
            if augment && split == Split::Train {
                records.extend(AUGMENTATIONS.iter().map(|&p| ImageRecord {
                    path: path.clone(),
                    label,
                    split,
                    provenance: p,
                }));
            }
        }
    }

    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        seed,
        class_names,
        records,
    };
    manifest.validate()?;
    Ok(manifest)
}
