use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Arc, Mutex};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::augment::AugmentConfig;
use super::image::preprocess;
use super::manifest::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// A batch of preprocessed images `[b, h, w, 3]` in `[0, 1]` with labels.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub images: Tensor<T>,
    pub labels: Vec<usize>,
    /// Manifest indices of the records in this batch.
    pub records: Vec<usize>,
}

impl<T> Batch<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Decode → resize → rescale, then the record's augmentation. Preprocessed
/// originals can optionally be kept in memory.
#[derive(Debug)]
pub struct ImagePipeline {
    image_size: usize,
    augment: AugmentConfig,
    cache: Option<Mutex<HashMap<PathBuf, Arc<Tensor<f32>>>>>,
}

impl ImagePipeline {
    pub fn new(image_size: usize) -> Self {
        ImagePipeline {
            image_size,
            augment: AugmentConfig::default(),
            cache: None,
        }
    }

    pub fn with_augment(mut self, augment: AugmentConfig) -> Self {
        self.augment = augment;
        self
    }

    pub fn with_cache(mut self, enabled: bool) -> Self {
        self.cache = enabled.then(|| Mutex::new(HashMap::new()));
        self
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    pub fn augment_config(&self) -> &AugmentConfig {
        &self.augment
    }

    pub fn load_original(&self, path: &Path) -> Result<Arc<Tensor<f32>>> {
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.lock().expect("image cache poisoned").get(path) {
                return Ok(Arc::clone(hit));
            }
        }
        let img = Arc::new(preprocess(path, self.image_size)?);
        if let Some(cache) = &self.cache {
            cache
                .lock()
                .expect("image cache poisoned")
                .insert(path.to_path_buf(), Arc::clone(&img));
        }
        Ok(img)
    }

    pub fn load(&self, record: &super::manifest::ImageRecord) -> Result<Tensor<f32>> {
        let original = self.load_original(&record.path)?;
        self.augment.apply(record.provenance, &original)
    }
}

/// A manifest paired with the pipeline that materialises its records.
#[derive(Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub pipeline: ImagePipeline,
}

impl Dataset {
    pub fn new(manifest: DatasetManifest, pipeline: ImagePipeline) -> Result<Self> {
        manifest.validate()?;
        Ok(Dataset { manifest, pipeline })
    }

    pub fn num_classes(&self) -> usize {
        self.manifest.num_classes()
    }

    pub fn class_names(&self) -> &[String] {
        &self.manifest.class_names
    }

    /// Loads the given records in parallel; output order follows `indices`.
    pub fn load_batch<T: Real>(&self, indices: &[usize]) -> Result<Batch<T>> {
        if indices.is_empty() {
            return Err(Error::Empty("batch".into()));
        }
        let images: Vec<Tensor<f32>> = indices
            .par_iter()
            .map(|&i| self.pipeline.load(&self.manifest.records[i]))
            .collect::<Result<_>>()?;
        let shape = images[0].shape().to_vec();
        if let Some(bad) = images.iter().find(|t| t.shape() != shape.as_slice()) {
            return Err(Error::shape("batch images", &shape, bad.shape()));
        }
        let mut data = Vec::with_capacity(images.len() * images[0].len());
        for img in &images {
            data.extend(img.data().iter().map(|&v| T::from_f64(v as f64)));
        }
        let mut batch_shape = vec![indices.len()];
        batch_shape.extend(shape);
        Ok(Batch {
            images: Tensor::new(&batch_shape, data)?,
            labels: indices.iter().map(|&i| self.manifest.records[i].label).collect(),
            records: indices.to_vec(),
        })
    }
}

/// Record indices of `split`, cut into batches. The train split is shuffled
/// with a stream derived from `(shuffle_seed, epoch)`; validation and test
/// keep manifest order. The last partial batch is kept.
pub fn batch_order(
    manifest: &DatasetManifest,
    split: Split,
    batch_size: usize,
    shuffle_seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    let mut indices = manifest.indices(split);
    if indices.is_empty() {
        return Err(Error::Empty(format!("{split} split")));
    }
    if split == Split::Train {
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
        rng.set_stream(epoch);
        indices.shuffle(&mut rng);
    }
    Ok(indices.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Lazily loaded batch stream.
pub struct BatchIter<'a, T> {
    dataset: &'a Dataset,
    order: std::vec::IntoIter<Vec<usize>>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Real> Iterator for BatchIter<'_, T> {
    type Item = Result<Batch<T>>;

    fn next(&mut self) -> Option<Self::Item> {
        self.order.next().map(|idx| self.dataset.load_batch(&idx))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.order.size_hint()
    }
}

pub fn make_batches<T: Real>(
    dataset: &Dataset,
    split: Split,
    batch_size: usize,
    shuffle_seed: u64,
    epoch: u64,
) -> Result<BatchIter<'_, T>> {
    let order = batch_order(&dataset.manifest, split, batch_size, shuffle_seed, epoch)?;
    Ok(BatchIter {
        dataset,
        order: order.into_iter(),
        _marker: std::marker::PhantomData,
    })
}

/// Loads batches on a background thread, at most two ahead of the consumer.
/// Stops at the first error from either side.
pub(crate) fn prefetch<T: Real>(
    dataset: &Dataset,
    order: Vec<Vec<usize>>,
    mut consume: impl FnMut(usize, Batch<T>) -> Result<()>,
) -> Result<()> {
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::sync_channel::<Result<Batch<T>>>(2);
        scope.spawn(move || {
            for idx in order {
                let loaded = dataset.load_batch(&idx);
                let failed = loaded.is_err();
                if tx.send(loaded).is_err() || failed {
                    break;
                }
            }
        });
        for (i, batch) in rx.iter().enumerate() {
            consume(i, batch?)?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split_dataset, Provenance, SplitRatios};

    fn manifest(n_per_class: usize, augment: bool) -> DatasetManifest {
        let originals: Vec<(PathBuf, usize)> = (0..2 * n_per_class)
            .map(|i| (PathBuf::from(format!("x/{i:03}.png")), i % 2))
            .collect();
        split_dataset(
            vec!["a".into(), "b".into()],
            &originals,
            &SplitRatios::default(),
            9,
            augment,
        )
        .unwrap()
    }

    #[test]
    fn batch_sizes_keep_remainder() {
        let mut m = manifest(50, false);
        for r in &mut m.records {
            r.split = Split::Train;
        }
        let order = batch_order(&m, Split::Train, 32, 1, 0).unwrap();
        let sizes: Vec<usize> = order.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![32, 32, 32, 4]);
    }

    #[test]
    fn shuffling_is_deterministic_and_complete() {
        let m = manifest(40, true);
        let a = batch_order(&m, Split::Train, 32, 5, 3).unwrap();
        assert_eq!(a, batch_order(&m, Split::Train, 32, 5, 3).unwrap());
        assert_ne!(a, batch_order(&m, Split::Train, 32, 5, 4).unwrap());

        let mut flat: Vec<usize> = a.concat();
        flat.sort_unstable();
        assert_eq!(flat, m.indices(Split::Train));

        let val = batch_order(&m, Split::Val, 3, 5, 0).unwrap();
        assert_eq!(val.concat(), m.indices(Split::Val));
        assert_eq!(val, batch_order(&m, Split::Val, 3, 99, 7).unwrap());
    }

    #[test]
    fn empty_split_rejected() {
        let mut m = manifest(10, false);
        m.records.retain(|r| r.split != Split::Test);
        assert!(matches!(batch_order(&m, Split::Test, 4, 0, 0), Err(Error::Empty(_))));
        assert!(batch_order(&m, Split::Train, 0, 0, 0).is_err());
    }

    #[test]
    fn loads_images_with_augmentation() {
        let dir = tempfile::tempdir().unwrap();
        let mut originals = Vec::new();
        for i in 0..20 {
            let p = dir.path().join(format!("{i}.png"));
            let v = (i * 12) as u8;
            image::RgbImage::from_fn(6, 4, |x, _| image::Rgb([v, (x * 40) as u8, 255]))
                .save(&p)
                .unwrap();
            originals.push((p, i % 2));
        }
        let m = split_dataset(
            vec!["a".into(), "b".into()],
            &originals,
            &SplitRatios::default(),
            2,
            true,
        )
        .unwrap();
        let ds = Dataset::new(m, ImagePipeline::new(8).with_cache(true)).unwrap();
        let mut seen = 0;
        for batch in make_batches::<f32>(&ds, Split::Train, 7, 0, 0).unwrap() {
            let batch = batch.unwrap();
            assert_eq!(&batch.images.shape()[1..], &[8, 8, 3]);
            assert!(batch.images.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(batch.labels.iter().all(|&l| l < 2));
            seen += batch.len();
        }
        assert_eq!(seen, ds.manifest.indices(Split::Train).len());

        // a flip_h record equals the mirrored original
        let idx = ds
            .manifest
            .records
            .iter()
            .position(|r| r.provenance == Provenance::FlipH)
            .unwrap();
        let flipped = ds.pipeline.load(&ds.manifest.records[idx]).unwrap();
        let original = ds.pipeline.load_original(&ds.manifest.records[idx].path).unwrap();
        assert_eq!(crate::data::flip_horizontal(&original).unwrap(), flipped);
    }

    #[test]
    fn prefetch_preserves_order_and_stops_on_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut originals = Vec::new();
        for i in 0..20 {
            let p = dir.path().join(format!("{i}.png"));
            image::RgbImage::from_pixel(3, 3, image::Rgb([i as u8, 0, 0]))
                .save(&p)
                .unwrap();
            originals.push((p, i % 2));
        }
        let m = split_dataset(
            vec!["a".into(), "b".into()],
            &originals,
            &SplitRatios::default(),
            2,
            false,
        )
        .unwrap();
        let ds = Dataset::new(m, ImagePipeline::new(3)).unwrap();
        let order = batch_order(&ds.manifest, Split::Train, 5, 1, 0).unwrap();
        let mut got = Vec::new();
        prefetch::<f32>(&ds, order.clone(), |i, b| {
            assert_eq!(b.records, order[i]);
            got.push(i);
            Ok(())
        })
        .unwrap();
        assert_eq!(got, (0..order.len()).collect::<Vec<_>>());

        std::fs::remove_file(&ds.manifest.records[order[1][0]].path).unwrap();
        let err = prefetch::<f32>(&ds, order, |_, _| Ok(())).unwrap_err();
        assert!(matches!(err, Error::MissingFile(_)));
    }
}
