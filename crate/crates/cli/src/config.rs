use std::path::{Path, PathBuf};

use leafnet::data::{SplitRatios, IMAGE_SIZE};
use leafnet::layers::Padding;
use leafnet::model::{DEFAULT_CONV_FILTERS, DEFAULT_DENSE_UNITS, DEFAULT_DROPOUT};
use leafnet::optim::OptimizerKind;
use leafnet::Precision;
use serde::Deserialize;

use crate::args::{PrepareArgs, Shared, TrainArgs};
use crate::error::{CliError, Result};

/// Settings readable from `--config`. Every field is optional; a flag on
/// the command line wins over the file, the file over the default.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub dataset_root: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub ratios: SplitRatios,
    pub augment: bool,
    pub cache_images: bool,
    pub image_size: usize,
    pub conv_filters: Vec<usize>,
    pub dense_units: usize,
    pub dropout: f64,
    pub padding: Padding,
    pub optimizer: OptimizerKind,
    pub learning_rate: Option<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    pub precision: Precision,
    pub track_best: bool,
    pub timing: bool,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            dataset_root: None,
            manifest: None,
            out: PathBuf::from("leafnet-out"),
            seed: 0,
            ratios: SplitRatios::default(),
            augment: true,
            cache_images: true,
            image_size: IMAGE_SIZE,
            conv_filters: DEFAULT_CONV_FILTERS.to_vec(),
            dense_units: DEFAULT_DENSE_UNITS,
            dropout: DEFAULT_DROPOUT,
            padding: Padding::Valid,
            optimizer: OptimizerKind::Adam,
            learning_rate: None,
            batch_size: 32,
            epochs: 10,
            precision: Precision::F32,
            track_best: true,
            timing: false,
        }
    }
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    /// Defaults, then the config file if given, then the global flags.
    pub fn resolve(shared: &Shared) -> Result<Self> {
        let mut cfg = match &shared.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        if let Some(seed) = shared.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &shared.out {
            cfg.out = out.clone();
        }
        Ok(cfg)
    }

    pub fn apply_prepare(&mut self, args: &PrepareArgs) {
        if let Some(root) = &args.dataset_root {
            self.dataset_root = Some(root.clone());
        }
        if let Some(r) = args.ratios {
            self.ratios = r;
        }
        if args.no_augment {
            self.augment = false;
        }
    }

    pub fn apply_train(&mut self, args: &TrainArgs) {
        if let Some(m) = &args.manifest {
            self.manifest = Some(m.clone());
        }
        if let Some(o) = args.optimizer {
            self.optimizer = o;
        }
        if args.lr.is_some() {
            self.learning_rate = args.lr;
        }
        if let Some(b) = args.batch_size {
            self.batch_size = b;
        }
        if let Some(e) = args.epochs {
            self.epochs = e;
        }
        if let Some(p) = args.padding {
            self.padding = p;
        }
        if let Some(s) = args.image_size {
            self.image_size = s;
        }
        if let Some(f) = &args.conv_filters {
            self.conv_filters = f.clone();
        }
        if let Some(p) = args.precision {
            self.precision = p;
        }
        if let Some(t) = args.track_best {
            self.track_best = t;
        }
        self.timing |= args.timing;
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.manifest.clone().unwrap_or_else(|| self.out.join("manifest.json"))
    }
}
