use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::Network;
use super::spec::ModelSpec;
use crate::data::{batch_order, Dataset, ImagePipeline, Split};
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::loss::{cross_entropy, softmax, PROB_FLOOR};
use crate::metrics::{compute_metrics, ConfusionMatrix, MetricsReport};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::tensor::{argmax_slice, Precision, Real, Tensor};

/// Salt separating the dropout stream from the shuffling stream.
const DROPOUT_SALT: u64 = 0x5DEE_CE66_D1CE_5EED;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub precision: Precision,
    /// Keep a copy of the model from the epoch with the best validation
    /// accuracy.
    pub track_best_validation: bool,
    /// Fill the `seconds` column with wall time. Off by default so logs of
    /// identical runs are byte-identical.
    pub record_timing: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            optimizer: OptimizerConfig::default(),
            batch_size: 32,
            max_epochs: 10,
            seed: 0,
            precision: Precision::F32,
            track_best_validation: true,
            record_timing: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub wall_time: f64,
}

pub const EPOCH_CSV_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc,seconds";

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.3}",
            self.epoch, self.train_loss, self.train_accuracy, self.val_loss, self.val_accuracy, self.wall_time
        )
    }
}

pub fn epochs_to_csv(rows: &[EpochMetrics]) -> String {
    let mut s = String::from(EPOCH_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}

/// Parses an epoch log. Errors carry the 1-based line number.
pub fn parse_epoch_csv(text: &str) -> Result<Vec<EpochMetrics>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == EPOCH_CSV_HEADER => {}
        Some((i, h)) => {
            return Err(Error::Malformed {
                line: i + 1,
                reason: format!("expected header '{EPOCH_CSV_HEADER}', found '{h}'"),
            })
        }
        None => return Err(Error::Empty("epoch csv".into())),
    }
    let mut rows: Vec<EpochMetrics> = Vec::new();
    for (i, line) in lines {
        let bad = |reason: String| Error::Malformed { line: i + 1, reason };
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 6 {
            return Err(bad(format!("expected 6 fields, found {}", cells.len())));
        }
        let epoch: usize = cells[0].parse().map_err(|_| bad(format!("bad epoch '{}'", cells[0])))?;
        let mut vals = [0.0f64; 5];
        for (v, cell) in vals.iter_mut().zip(&cells[1..]) {
            *v = cell.parse().map_err(|_| bad(format!("bad number '{cell}'")))?;
        }
        let row = EpochMetrics {
            epoch,
            train_loss: vals[0],
            train_accuracy: vals[1],
            val_loss: vals[2],
            val_accuracy: vals[3],
            wall_time: vals[4],
        };
        if !(0.0..=1.0).contains(&row.train_accuracy) || !(0.0..=1.0).contains(&row.val_accuracy) {
            return Err(bad("accuracy outside [0, 1]".into()));
        }
        if rows.last().is_some_and(|prev| prev.epoch >= epoch) {
            return Err(bad("epoch indices must be strictly increasing".into()));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Empty("epoch csv".into()));
    }
    Ok(rows)
}

/// Index into `rows` of the highest validation accuracy, earliest on ties.
pub fn best_epoch(rows: &[EpochMetrics]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in rows.iter().enumerate() {
        if best.is_none_or(|b| r.val_accuracy > rows[b].val_accuracy) {
            best = Some(i);
        }
    }
    best
}

/// Model and optimizer as they were after the best validation epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct BestModel<T> {
    pub epoch: usize,
    pub val_accuracy: f64,
    pub network: Network<T>,
    pub optimizer: Optimizer<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trainer<T> {
    pub network: Network<T>,
    pub optimizer: Optimizer<T>,
    pub config: TrainingConfig,
    pub history: Vec<EpochMetrics>,
    pub best: Option<BestModel<T>>,
}

impl<T: Real> Trainer<T> {
    /// Fresh model initialised from `config.seed`.
    pub fn new(spec: ModelSpec, config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        if config.precision != T::PRECISION {
            return Err(Error::invalid(format!(
                "trainer precision {:?} does not match configured {:?}",
                T::PRECISION,
                config.precision
            )));
        }
        let network = Network::build(spec, config.seed)?;
        let shapes = network.param_shapes();
        let refs: Vec<&[usize]> = shapes.iter().map(Vec::as_slice).collect();
        let optimizer = Optimizer::new(config.optimizer, &refs)?;
        Ok(Trainer {
            network,
            optimizer,
            config,
            history: Vec::new(),
            best: None,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.history.len()
    }

    fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        check_classes(&self.network, dataset)?;
        let size = dataset.pipeline.image_size();
        let [h, w, _] = self.network.spec().input_shape;
        if size != h || size != w {
            return Err(Error::Incompatible(format!(
                "pipeline produces {size}x{size} images but the model expects {h}x{w}"
            )));
        }
        Ok(())
    }

    /// One pass over the shuffled train split followed by validation.
    /// `epoch` is 1-based.
    pub fn run_epoch(&mut self, dataset: &Dataset, epoch: usize) -> Result<EpochMetrics> {
        self.check_dataset(dataset)?;
        let start = Instant::now();
        let order = batch_order(
            &dataset.manifest,
            Split::Train,
            self.config.batch_size,
            self.config.seed,
            epoch as u64,
        )?;
        let mut dropout_rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ DROPOUT_SALT);
        dropout_rng.set_stream(epoch as u64);
        let skip_singletons = self.network.has_batchnorm();

        let (mut loss_sum, mut correct, mut seen) = (0.0f64, 0usize, 0usize);
        let network = &mut self.network;
        let optimizer = &mut self.optimizer;
        crate::data::prefetch::<T>(dataset, order, |i, batch| {
            // batch statistics are undefined for a single sample
            if skip_singletons && batch.len() < 2 {
                return Ok(());
            }
            let pass = network.forward(&batch.images, Mode::Train, &mut dropout_rng)?;
            let probs = softmax(&pass.logits);
            let (loss, d_logits) = match probs.and_then(|p| cross_entropy(&p, &batch.labels).map(|r| (p, r))) {
                Ok((p, (loss, d))) if loss.is_finite() => {
                    let c = p.shape()[1];
                    correct += p
                        .data()
                        .chunks(c)
                        .zip(&batch.labels)
                        .filter(|(row, &l)| argmax_slice(row) == l)
                        .count();
                    (loss, d)
                }
                Ok(_) | Err(Error::NonFinite(_)) => {
                    let first = &dataset.manifest.records[batch.records[0]];
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: i,
                        first_record: format!("{} ({})", first.path.display(), first.provenance.name()),
                    });
                }
                Err(e) => return Err(e),
            };
            let grads = network.backward(&pass, &d_logits)?;
            optimizer.step(&mut network.params_mut(), &grads)?;
            loss_sum += loss.to_f64() * batch.len() as f64;
            seen += batch.len();
            Ok(())
        })?;
        if seen == 0 {
            return Err(Error::Empty("train split after dropping single-sample batches".into()));
        }

        let val = evaluate(&self.network, dataset, Split::Val, self.config.batch_size)?;
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss_sum / seen as f64,
            train_accuracy: correct as f64 / seen as f64,
            val_loss: val.loss,
            val_accuracy: val.report.accuracy,
            wall_time: if self.config.record_timing {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        let improved = self.history.iter().all(|h| metrics.val_accuracy > h.val_accuracy);
        self.history.push(metrics);
        if self.config.track_best_validation && improved {
            self.best = Some(BestModel {
                epoch,
                val_accuracy: metrics.val_accuracy,
                network: self.network.clone(),
                optimizer: self.optimizer.clone(),
            });
        }
        Ok(metrics)
    }

    /// Trains until `config.max_epochs` epochs are done, calling `on_epoch`
    /// after each one. Continues from the recorded history when resumed.
    pub fn fit_with(&mut self, dataset: &Dataset, mut on_epoch: impl FnMut(&EpochMetrics)) -> Result<()> {
        self.config.validate()?;
        if dataset.manifest.indices(Split::Val).is_empty() {
            return Err(Error::Empty("val split".into()));
        }
        for epoch in self.epochs_done() + 1..=self.config.max_epochs {
            let m = self.run_epoch(dataset, epoch)?;
            on_epoch(&m);
        }
        Ok(())
    }

    pub fn fit(&mut self, dataset: &Dataset) -> Result<()> {
        self.fit_with(dataset, |_| {})
    }
}

/// Builds a model from `spec` and trains it on `dataset`.
pub fn train<T: Real>(spec: ModelSpec, dataset: &Dataset, config: TrainingConfig) -> Result<Trainer<T>> {
    let mut trainer = Trainer::new(spec, config)?;
    trainer.fit(dataset)?;
    Ok(trainer)
}

fn check_classes<T: Real>(network: &Network<T>, dataset: &Dataset) -> Result<()> {
    if network.num_classes() != dataset.num_classes() {
        return Err(Error::Incompatible(format!(
            "model has {} classes but the dataset has {}",
            network.num_classes(),
            dataset.num_classes()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub confusion: ConfusionMatrix,
    /// Mean cross-entropy over the split.
    pub loss: f64,
    /// Predicted class per record, in manifest order of the split.
    pub predictions: Vec<usize>,
}

/// Inference-mode metrics over one split. Samples are independent in this
/// mode, so the result does not depend on `batch_size`.
pub fn evaluate<T: Real>(
    network: &Network<T>,
    dataset: &Dataset,
    split: Split,
    batch_size: usize,
) -> Result<Evaluation> {
    check_classes(network, dataset)?;
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    let indices = dataset.manifest.indices(split);
    if indices.is_empty() {
        return Err(Error::Empty(format!("{split} split")));
    }
    let order: Vec<Vec<usize>> = indices.chunks(batch_size).map(<[usize]>::to_vec).collect();
    let c = network.num_classes();
    let mut confusion = ConfusionMatrix::new(dataset.class_names().to_vec());
    let mut predictions = Vec::new();
    let mut loss_sum = 0.0f64;
    crate::data::prefetch::<T>(dataset, order, |_, batch| {
        let probs = network.predict_proba(&batch.images)?;
        for (row, &label) in probs.data().chunks(c).zip(&batch.labels) {
            let pred = argmax_slice(row);
            confusion.record(label, pred)?;
            predictions.push(pred);
            loss_sum -= row[label].to_f64().max(PROB_FLOOR).ln();
        }
        Ok(())
    })?;
    let n = predictions.len();
    Ok(Evaluation {
        report: compute_metrics(&confusion)?,
        confusion,
        loss: loss_sum / n as f64,
        predictions,
    })
}

/// Preprocesses one image and ranks all classes by probability, highest
/// first (lower class index first on ties).
pub fn predict<T: Real>(
    network: &Network<T>,
    pipeline: &ImagePipeline,
    path: &Path,
    class_names: &[String],
) -> Result<Vec<(String, f64)>> {
    if class_names.len() != network.num_classes() {
        return Err(Error::Incompatible(format!(
            "{} class names for a {}-class model",
            class_names.len(),
            network.num_classes()
        )));
    }
    let img = pipeline.load_original(path)?;
    let mut shape = vec![1];
    shape.extend_from_slice(img.shape());
    let input = Tensor::new(&shape, img.data().iter().map(|&v| T::from_f64(v as f64)).collect())?;
    let probs = network.predict_proba(&input)?;
    let mut ranked: Vec<(String, f64)> = class_names
        .iter()
        .cloned()
        .zip(probs.data().iter().map(|&p| p.to_f64()))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(epoch: usize, val: f64) -> EpochMetrics {
        EpochMetrics {
            epoch,
            train_loss: 0.5,
            train_accuracy: 0.75,
            val_loss: 0.25,
            val_accuracy: val,
            wall_time: 0.0,
        }
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = TrainingConfig::default();
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(cfg.optimizer.learning_rate, 0.001);
        assert!(TrainingConfig { max_epochs: 0, ..cfg }.validate().is_err());
        assert!(TrainingConfig { batch_size: 0, ..cfg }.validate().is_err());
        let spec = ModelSpec::stack(8, &[2], 4, 0.1, 2);
        assert!(Trainer::<f64>::new(spec, cfg).is_err());
    }

    #[test]
    fn epoch_csv_round_trip() {
        let rows = vec![row(1, 0.5), row(2, 0.125)];
        let text = epochs_to_csv(&rows);
        assert!(text.starts_with("epoch,train_loss,train_acc,val_loss,val_acc,seconds\n"));
        assert_eq!(parse_epoch_csv(&text).unwrap(), rows);
    }

    #[test]
    fn epoch_csv_errors_name_the_line() {
        let text = format!("{EPOCH_CSV_HEADER}\n1,0.1,0.5,0.2,0.5,0\n2,0.1,oops,0.2,0.5,0\n");
        match parse_epoch_csv(&text) {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_epoch_csv("a,b\n").is_err());
        assert!(parse_epoch_csv(&format!("{EPOCH_CSV_HEADER}\n")).is_err());
        let backwards = format!("{EPOCH_CSV_HEADER}\n2,0,0,0,0,0\n1,0,0,0,0,0\n");
        assert!(parse_epoch_csv(&backwards).is_err());
    }

    #[test]
    fn best_epoch_prefers_earlier_on_ties() {
        let rows = vec![row(1, 0.5), row(2, 0.75), row(3, 0.75), row(4, 0.5)];
        assert_eq!(best_epoch(&rows), Some(1));
        assert_eq!(best_epoch(&[]), None);
    }
}
