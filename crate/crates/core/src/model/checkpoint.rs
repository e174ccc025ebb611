//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! "LFNT" | u32 version | u64 header length | JSON header
//! then per tensor: u32 rank | rank x u32 extents | f32 values
//! ```
//!
//! Tensors follow the network's state order (parameters and BN running
//! statistics, layer by layer), then the optimizer buffers.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::Network;
use super::spec::ModelSpec;
use super::trainer::{best_epoch, BestModel, EpochMetrics, Trainer, TrainingConfig};
use crate::data::DatasetManifest;
use crate::error::{Error, Result};
use crate::optim::{Optimizer, OptimizerState};
use crate::tensor::{Real, Tensor};

pub const MAGIC: &[u8; 4] = b"LFNT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    class_names: Vec<String>,
    /// Completed epochs; together with `config.seed` this fixes every
    /// random stream of the next epoch.
    epoch: usize,
    config: TrainingConfig,
    optimizer_step: u64,
    history: Vec<EpochMetrics>,
    tensor_count: usize,
}

/// Everything needed to predict with a model or continue training it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T = f32> {
    pub class_names: Vec<String>,
    pub network: Network<T>,
    pub optimizer: Optimizer<T>,
    pub config: TrainingConfig,
    pub history: Vec<EpochMetrics>,
}

impl<T: Real> Checkpoint<T> {
    pub fn from_trainer(trainer: &Trainer<T>, class_names: &[String]) -> Self {
        Checkpoint {
            class_names: class_names.to_vec(),
            network: trainer.network.clone(),
            optimizer: trainer.optimizer.clone(),
            config: trainer.config,
            history: trainer.history.clone(),
        }
    }

    /// The snapshot kept for the best validation epoch, if any.
    pub fn best_of(trainer: &Trainer<T>, class_names: &[String]) -> Option<Self> {
        let best = trainer.best.as_ref()?;
        Some(Checkpoint {
            class_names: class_names.to_vec(),
            network: best.network.clone(),
            optimizer: best.optimizer.clone(),
            config: trainer.config,
            history: trainer.history[..best.epoch].to_vec(),
        })
    }

    pub fn epoch(&self) -> usize {
        self.history.len()
    }

    /// Trainer that continues exactly where this checkpoint stopped.
    /// `max_epochs` replaces the stored limit. If the last recorded epoch
    /// is the best one so far, this network becomes the tracked best model.
    pub fn into_trainer(self, max_epochs: usize) -> Result<Trainer<T>> {
        let config = TrainingConfig {
            max_epochs,
            precision: T::PRECISION,
            ..self.config
        };
        config.validate()?;
        let epoch = self.epoch();
        let best = match best_epoch(&self.history) {
            Some(i) if config.track_best_validation && i + 1 == epoch => Some(BestModel {
                epoch,
                val_accuracy: self.history[i].val_accuracy,
                network: self.network.clone(),
                optimizer: self.optimizer.clone(),
            }),
            _ => None,
        };
        Ok(Trainer {
            network: self.network,
            optimizer: self.optimizer,
            config,
            history: self.history,
            best,
        })
    }

    /// Refuses a manifest whose class table differs from the model's.
    pub fn check_manifest(&self, manifest: &DatasetManifest) -> Result<()> {
        if manifest.class_names != self.class_names {
            return Err(Error::Incompatible(format!(
                "checkpoint classes {:?} differ from manifest classes {:?}",
                self.class_names, manifest.class_names
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let tensors: Vec<&Tensor<T>> = self
            .network
            .state_tensors()
            .into_iter()
            .chain(self.optimizer.state.buffers.iter().flat_map(|b| b.tensors()))
            .collect();
        let header = Header {
            spec: self.network.spec().clone(),
            class_names: self.class_names.clone(),
            epoch: self.epoch(),
            config: self.config,
            optimizer_step: self.optimizer.state.step,
            history: self.history.clone(),
            tensor_count: tensors.len(),
        };
        let json = serde_json::to_vec(&header)?;
        let payload: usize = tensors.iter().map(|t| 4 + 4 * t.rank() + 4 * t.len()).sum();
        let mut out = Vec::with_capacity(16 + json.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in tensors {
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parses a whole checkpoint; nothing is returned unless every check
    /// passes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).map_err(|_| Error::BadMagic)? != MAGIC {
            return Err(Error::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let len = usize::try_from(r.u64()?).map_err(|_| Error::Truncated)?;
        let header: Header = serde_json::from_slice(r.take(len)?)?;
        if header.epoch != header.history.len() {
            return Err(Error::Incompatible("epoch count disagrees with history".into()));
        }
        if header.class_names.len() != header.spec.num_classes {
            return Err(Error::Incompatible(format!(
                "{} class names for a {}-class model",
                header.class_names.len(),
                header.spec.num_classes
            )));
        }

        let mut network = Network::<T>::build(header.spec.clone(), 0)?;
        let shapes = network.param_shapes();
        let refs: Vec<&[usize]> = shapes.iter().map(Vec::as_slice).collect();
        let mut state = OptimizerState::new(header.config.optimizer.family, &refs)?;
        state.step = header.optimizer_step;

        let mut targets: Vec<&mut Tensor<T>> = network.state_tensors_mut();
        targets.extend(state.buffers.iter_mut().flat_map(|b| b.tensors_mut()));
        if targets.len() != header.tensor_count {
            return Err(Error::Incompatible(format!(
                "checkpoint holds {} tensors, model needs {}",
                header.tensor_count,
                targets.len()
            )));
        }
        for target in targets {
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            if shape != target.shape() {
                return Err(Error::shape("checkpoint tensor", target.shape(), &shape));
            }
            let raw = r.take(4 * target.len())?;
            for (dst, chunk) in target.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
                let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
                *dst = T::from_f64(v as f64);
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Incompatible(format!(
                "{} unexpected trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            class_names: header.class_names,
            network,
            optimizer: Optimizer::from_state(header.config.optimizer, state)?,
            config: header.config,
            history: header.history,
        })
    }

    /// Writes to a sibling temporary file first so a crash never leaves a
    /// half-written checkpoint under `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(Error::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{OptimizerConfig, OptimizerKind};

    fn checkpoint() -> Checkpoint<f32> {
        let cfg = TrainingConfig {
            optimizer: OptimizerConfig::new(OptimizerKind::RmsProp),
            max_epochs: 2,
            ..Default::default()
        };
        let mut t = Trainer::<f32>::new(ModelSpec::stack(8, &[2], 4, 0.1, 3), cfg).unwrap();
        // make the optimizer buffers non-trivial
        let grads: Vec<Tensor<f32>> = t
            .network
            .params()
            .iter()
            .map(|p| Tensor::from_fn(p.shape(), |i| (i as f32).sin()).unwrap())
            .collect();
        t.optimizer.step(&mut t.network.params_mut(), &grads).unwrap();
        Checkpoint::from_trainer(&t, &["a".into(), "b".into(), "c".into()])
    }

    #[test]
    fn byte_round_trip() {
        let ck = checkpoint();
        let bytes = ck.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"LFNT");
        let back = Checkpoint::<f32>::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = checkpoint().to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::<f32>::from_bytes(&bad), Err(Error::BadMagic)));
        assert!(matches!(Checkpoint::<f32>::from_bytes(b"LF"), Err(Error::BadMagic)));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            Checkpoint::<f32>::from_bytes(&bad),
            Err(Error::VersionMismatch { found: 9, expected: 1 })
        ));

        for cut in [10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                Checkpoint::<f32>::from_bytes(&bytes[..cut]),
                Err(Error::Truncated)
            ));
        }
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(
            Checkpoint::<f32>::from_bytes(&extra),
            Err(Error::Incompatible(_))
        ));
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.lfnt");
        let ck = checkpoint();
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::<f32>::load(&path).unwrap(), ck);
        assert!(matches!(
            Checkpoint::<f32>::load(&dir.path().join("none.lfnt")),
            Err(Error::MissingFile(_))
        ));
    }
}
