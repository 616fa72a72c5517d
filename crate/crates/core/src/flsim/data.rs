use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::DataConfig;
use super::FlError;

/// Row-major feature matrix with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<usize>, classes: usize) -> Self {
        assert_eq!(features.len(), dim * labels.len(), "feature matrix shape");
        assert!(labels.iter().all(|&l| l < classes), "label out of range");
        Dataset {
            features,
            dim,
            labels,
            classes,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// Gaussian blobs: one random centre per class, samples scattered around
/// it. Rows are grouped by class.
pub fn synthetic_blobs<R: Rng + ?Sized>(cfg: &DataConfig, rng: &mut R) -> Dataset {
    let centre_dist = Normal::new(0.0, cfg.separation).expect("separation >= 0");
    let noise_dist = Normal::new(0.0, cfg.noise).expect("noise >= 0");
    let centres: Vec<Vec<f64>> = (0..cfg.classes)
        .map(|_| (0..cfg.features).map(|_| centre_dist.sample(rng)).collect())
        .collect();
    let total = cfg.classes * cfg.samples_per_class;
    let mut features = Vec::with_capacity(total * cfg.features);
    let mut labels = Vec::with_capacity(total);
    for (class, centre) in centres.iter().enumerate() {
        for _ in 0..cfg.samples_per_class {
            features.extend(centre.iter().map(|c| c + noise_dist.sample(rng)));
            labels.push(class);
        }
    }
    Dataset::new(features, cfg.features, labels, cfg.classes)
}

/// A dataset with its client partition.
#[derive(Clone, Debug)]
pub struct ToyDataset {
    pub data: Dataset,
    /// Sample indices held by each client.
    pub partition: Vec<Vec<usize>>,
}

/// Label-sorted shards dealt to clients, `classes_per_client` shards each.
/// Every shard holds a single class, so a client sees at most
/// `classes_per_client` distinct labels.
pub fn partition_noniid<R: Rng + ?Sized>(
    data: &Dataset,
    n_clients: usize,
    classes_per_client: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>, FlError> {
    if n_clients == 0 || classes_per_client == 0 {
        return Err(FlError::Config(
            "need at least one client and one class per client".into(),
        ));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.classes()];
    for i in 0..data.len() {
        by_class[data.label(i)].push(i);
    }
    by_class.retain(|c| !c.is_empty());
    let shards = n_clients * classes_per_client;
    let classes = by_class.len();
    if classes > shards {
        return Err(FlError::InfeasiblePartition { classes, shards });
    }
    let mut pool: Vec<Vec<usize>> = Vec::with_capacity(shards);
    for (c, members) in by_class.iter().enumerate() {
        let count = shards / classes + usize::from(c < shards % classes);
        if members.len() < count {
            return Err(FlError::InfeasiblePartition { classes, shards });
        }
        let (base, extra) = (members.len() / count, members.len() % count);
        let mut start = 0;
        for k in 0..count {
            let len = base + usize::from(k < extra);
            pool.push(members[start..start + len].to_vec());
            start += len;
        }
    }
    pool.shuffle(rng);
    Ok(pool
        .chunks(classes_per_client)
        .map(|chunk| {
            let mut idx: Vec<usize> = chunk.concat();
            idx.sort_unstable();
            idx
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientData {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Holds out `round(len · fraction)` samples for testing, keeping at least
/// one for training.
pub fn split_train_test<R: Rng + ?Sized>(indices: &[usize], fraction: f64, rng: &mut R) -> ClientData {
    let mut shuffled = indices.to_vec();
    shuffled.shuffle(rng);
    let test_len = ((indices.len() as f64 * fraction).round() as usize).min(indices.len().saturating_sub(1));
    let mut test = shuffled.split_off(indices.len() - test_len);
    shuffled.sort_unstable();
    test.sort_unstable();
    ClientData { train: shuffled, test }
}
