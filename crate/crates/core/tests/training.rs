mod common;

use common::*;
use leafnet::data::Split;
use leafnet::metrics::{compute_metrics, confusion};
use leafnet::model::{best_epoch, evaluate, predict, Checkpoint, ModelSpec, Trainer, TrainingConfig};
use leafnet::optim::{OptimizerConfig, OptimizerKind};
use leafnet::{Error, Tensor};

fn spec() -> ModelSpec {
    ModelSpec::stack(32, &[8, 16], 32, 0.1, 2)
}

fn config(kind: OptimizerKind, epochs: usize) -> TrainingConfig {
    TrainingConfig {
        optimizer: OptimizerConfig::new(kind),
        batch_size: 8,
        max_epochs: epochs,
        seed: 3,
        ..Default::default()
    }
}

fn dataset(dir: &std::path::Path) -> leafnet::data::Dataset {
    write_blob_dataset(dir, 20, 32, 17);
    load_dataset(dir, 32, 2, false)
}

#[test]
fn zero_epochs_rejected_and_one_epoch_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(dir.path());
    assert!(Trainer::<f32>::new(spec(), config(OptimizerKind::Adam, 0)).is_err());

    let cfg = TrainingConfig {
        track_best_validation: false,
        ..config(OptimizerKind::Adam, 1)
    };
    let t = leafnet::model::train::<f32>(spec(), &ds, cfg).unwrap();
    assert_eq!(t.history.len(), 1);
    assert_eq!(t.history[0].epoch, 1);
    assert!(t.best.is_none());
}

#[test]
fn zero_learning_rate_leaves_parameters_alone() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(dir.path());
    for kind in OptimizerKind::ALL {
        let cfg = TrainingConfig {
            optimizer: OptimizerConfig::new(kind).with_learning_rate(0.0),
            ..config(kind, 1)
        };
        let mut t = Trainer::<f32>::new(spec(), cfg).unwrap();
        let before: Vec<Tensor<f32>> = t.network.params().into_iter().cloned().collect();
        t.run_epoch(&ds, 1).unwrap();
        let after: Vec<Tensor<f32>> = t.network.params().into_iter().cloned().collect();
        assert_eq!(before, after, "{kind}");
        assert!(t.optimizer.state.step > 0);
    }
}

#[test]
fn evaluation_is_batch_size_invariant_and_matches_a_direct_tally() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(dir.path());
    let t = leafnet::model::train::<f32>(spec(), &ds, config(OptimizerKind::Adam, 2)).unwrap();
    for split in Split::ALL {
        let one = evaluate(&t.network, &ds, split, 1).unwrap();
        let many = evaluate(&t.network, &ds, split, 32).unwrap();
        assert_eq!(one, many);

        let truth: Vec<usize> = ds
            .manifest
            .indices(split)
            .iter()
            .map(|&i| ds.manifest.records[i].label)
            .collect();
        let direct = compute_metrics(&confusion(&one.predictions, &truth, 2).unwrap()).unwrap();
        assert_eq!(direct.accuracy, one.report.accuracy);
        assert_eq!(direct.f1, one.report.f1);
    }
}

#[test]
fn memorised_model_predicts_its_training_images() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(dir.path());
    let mut t = Trainer::<f32>::new(spec(), config(OptimizerKind::Adam, 200)).unwrap();
    let mut epoch = 0;
    while evaluate(&t.network, &ds, Split::Train, 32).unwrap().report.accuracy < 1.0 {
        epoch += 1;
        assert!(epoch <= 200, "did not memorise the train split");
        t.run_epoch(&ds, epoch).unwrap();
    }
    let eval = evaluate(&t.network, &ds, Split::Train, 32).unwrap();
    assert_eq!([eval.report.precision, eval.report.recall, eval.report.f1], [1.0; 3]);

    for &i in &ds.manifest.indices(Split::Train) {
        let record = &ds.manifest.records[i];
        let ranked = predict(&t.network, &ds.pipeline, &record.path, ds.class_names()).unwrap();
        assert_eq!(ranked.len(), 2);
        assert_eq!(ranked[0].0, ds.class_names()[record.label]);
        assert!(ranked[0].1 >= ranked[1].1);
        assert!((ranked.iter().map(|r| r.1).sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn class_count_mismatch_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(dir.path());
    let t = Trainer::<f32>::new(
        ModelSpec::stack(32, &[8, 16], 32, 0.1, 3),
        config(OptimizerKind::Adam, 1),
    )
    .unwrap();
    assert!(matches!(
        evaluate(&t.network, &ds, Split::Test, 4),
        Err(Error::Incompatible(_))
    ));
    let ck = Checkpoint::from_trainer(&t, &["a".into(), "b".into(), "c".into()]);
    assert!(matches!(ck.check_manifest(&ds.manifest), Err(Error::Incompatible(_))));
    let mut t = t;
    assert!(t.run_epoch(&ds, 1).is_err());
}

#[test]
fn non_finite_loss_names_epoch_and_batch() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(dir.path());
    let mut t = Trainer::<f32>::new(spec(), config(OptimizerKind::SgdMomentum, 1)).unwrap();
    let last = t.network.params_mut().len() - 1;
    t.network.params_mut()[last].data_mut()[0] = f32::NAN;
    match t.run_epoch(&ds, 4) {
        Err(Error::NonFiniteLoss {
            epoch,
            batch,
            first_record,
        }) => {
            assert_eq!((epoch, batch), (4, 0));
            assert!(first_record.contains(".png"));
        }
        other => panic!("expected a non-finite loss error, got {other:?}"),
    }
}

#[test]
fn best_model_tracks_the_earliest_top_validation_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(dir.path());
    let t = leafnet::model::train::<f32>(spec(), &ds, config(OptimizerKind::RmsProp, 6)).unwrap();
    let best = t.best.as_ref().unwrap();
    assert_eq!(Some(best.epoch - 1), best_epoch(&t.history));
    let ck = Checkpoint::best_of(&t, ds.class_names()).unwrap();
    assert_eq!(ck.epoch(), best.epoch);
    let replay = evaluate(&ck.network, &ds, Split::Val, 8).unwrap();
    assert_eq!(replay.report.accuracy, t.history[best.epoch - 1].val_accuracy);
}

#[test]
fn single_sample_batches_are_skipped_with_batch_norm() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(dir.path());
    let n = ds.manifest.indices(Split::Train).len();
    // batch size n-1 leaves a final batch of one
    let cfg = TrainingConfig {
        batch_size: n - 1,
        ..config(OptimizerKind::Adam, 1)
    };
    let t = leafnet::model::train::<f32>(spec(), &ds, cfg).unwrap();
    assert_eq!(t.optimizer.state.step, 1);
}

#[test]
fn double_precision_training_runs() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(dir.path());
    let cfg = TrainingConfig {
        precision: leafnet::Precision::F64,
        ..config(OptimizerKind::Adam, 1)
    };
    let t = leafnet::model::train::<f64>(spec(), &ds, cfg).unwrap();
    assert!(t.history[0].train_loss.is_finite());
    let ck = Checkpoint::from_trainer(&t, ds.class_names());
    let back = Checkpoint::<f64>::from_bytes(&ck.to_bytes().unwrap()).unwrap();
    assert_eq!(back.history, t.history);
}
