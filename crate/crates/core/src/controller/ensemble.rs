use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{ensure, Error, Result};
use crate::kv::KeyValues;
use crate::nn::{train, MlpParams, RegressionSet, TrainConfig};
use crate::pipeline::{Dataset, Normalization};
use crate::seed;

/// How many networks to train and how to randomise their regularisation.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub member_count: usize,
    pub lambda_mean: f64,
    pub lambda_std: f64,
    /// Smallest λ a member may receive.
    pub lambda_floor: f64,
    /// Template for every member; its `l2_weight` and `seed` are overridden.
    pub train: TrainConfig,
    pub master_seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            member_count: 20,
            lambda_mean: 1e-4,
            lambda_std: 1e-4,
            lambda_floor: 1e-8,
            train: TrainConfig::default(),
            master_seed: 0,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.member_count >= 1, || {
            Error::Configuration("member_count must be >= 1".into())
        })?;
        ensure(self.lambda_floor > 0.0 && self.lambda_floor.is_finite(), || {
            Error::Configuration(format!("lambda_floor {} must be > 0", self.lambda_floor))
        })?;
        ensure(self.lambda_mean.is_finite() && self.lambda_std.is_finite() && self.lambda_std >= 0.0, || {
            Error::Configuration("lambda mean and std must be finite, std >= 0".into())
        })?;
        self.train.validate()
    }

    /// Seed owned by member `k`; all of its randomness derives from it.
    pub fn member_seed(&self, k: usize) -> u64 {
        seed::split(self.master_seed, k as u64)
    }

    /// Unclamped Gaussian λ draw of member `k`.
    pub fn raw_lambda(&self, k: usize) -> f64 {
        let mut rng = seed::rng(seed::split(self.member_seed(k), 2));
        let z: f64 = StandardNormal.sample(&mut rng);
        self.lambda_mean + self.lambda_std * z
    }
}

/// One λ per member, clamped below at `lambda_floor`.
pub fn draw_lambdas(config: &EnsembleConfig) -> Vec<f64> {
    (0..config.member_count)
        .map(|k| config.raw_lambda(k).max(config.lambda_floor))
        .collect()
}

/// `n` indices drawn uniformly with replacement.
pub fn bootstrap_indices(n: usize, seed_value: u64) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let mut rng = seed::rng(seed_value);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// A same-size resample of `dataset` drawn with replacement.
pub fn bootstrap_resample(dataset: &Dataset, seed_value: u64) -> Dataset {
    Dataset {
        header: dataset.header,
        samples: bootstrap_indices(dataset.len(), seed_value)
            .into_iter()
            .map(|i| dataset.samples[i].clone())
            .collect(),
    }
}

/// Network inputs with targets in units of `power_scale_w`.
pub fn regression_set(dataset: &Dataset) -> Result<RegressionSet> {
    ensure(!dataset.is_empty(), || Error::InvalidInput("empty dataset".into()))?;
    let norm = dataset.header.normalization;
    norm.validate()?;
    let cols = dataset.samples[0].inputs.len();
    ensure(dataset.samples.iter().all(|s| s.inputs.len() == cols), || {
        Error::InvalidInput("samples differ in feature length".into())
    })?;
    let inputs = Array2::from_shape_fn((dataset.len(), cols), |(i, j)| dataset.samples[i].inputs[j]);
    let targets = Array1::from_iter(dataset.samples.iter().map(|s| s.target_power / norm.power_scale_w));
    RegressionSet::new(inputs, targets)
}

/// Normalized start and end displacements seen in training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub start_min: f64,
    pub start_max: f64,
    pub end_min: f64,
    pub end_max: f64,
}

impl Envelope {
    pub fn of(dataset: &Dataset) -> Self {
        let mut e = Envelope {
            start_min: f64::INFINITY,
            start_max: f64::NEG_INFINITY,
            end_min: f64::INFINITY,
            end_max: f64::NEG_INFINITY,
        };
        for s in &dataset.samples {
            let (a, b) = (s.inputs[1], s.inputs[s.inputs.len() - 1]);
            e.start_min = e.start_min.min(a);
            e.start_max = e.start_max.max(a);
            e.end_min = e.end_min.min(b);
            e.end_max = e.end_max.max(b);
        }
        e
    }

    /// True when a feature vector starts and ends inside the training ranges.
    pub fn contains(&self, features: &[f64]) -> bool {
        let (a, b) = (features[1], features[features.len() - 1]);
        (self.start_min..=self.start_max).contains(&a) && (self.end_min..=self.end_max).contains(&b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub params: MlpParams,
    pub lambda: f64,
    pub seed: u64,
    pub bootstrap_seed: u64,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

/// Trained networks sharing one architecture and one normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub members: Vec<Member>,
    pub normalization: Normalization,
    pub envelope: Envelope,
    /// Opaque identifier of the training data, carried into the bundle.
    pub dataset_fingerprint: String,
}

impl Ensemble {
    pub fn validate(&self) -> Result<()> {
        ensure(!self.members.is_empty(), || Error::Configuration("ensemble has no members".into()))?;
        self.normalization.validate()?;
        let sizes = self.members[0].params.sizes();
        for m in &self.members {
            m.params.validate()?;
            ensure(m.params.sizes() == sizes, || {
                Error::Configuration("ensemble members differ in shape".into())
            })?;
        }
        Ok(())
    }

    /// Largest power a member may output, W.
    pub fn power_max(&self) -> f64 {
        self.normalization.power_scale_w
    }

    /// Writes `bundle.txt` and one `member_NN.txt` per network into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(BUNDLE_MANIFEST), self.manifest_text())?;
        for (k, m) in self.members.iter().enumerate() {
            fs::write(dir.join(member_file(k)), m.params.to_text())?;
        }
        Ok(())
    }

    pub fn manifest_text(&self) -> String {
        let mut kv = KeyValues::new();
        kv.set("format", BUNDLE_FORMAT);
        kv.set("member_count", self.members.len());
        kv.set("stroke_mm", self.normalization.stroke_mm);
        kv.set("power_scale_w", self.normalization.power_scale_w);
        kv.set("dataset_fingerprint", &self.dataset_fingerprint);
        kv.set("envelope_start_min", self.envelope.start_min);
        kv.set("envelope_start_max", self.envelope.start_max);
        kv.set("envelope_end_min", self.envelope.end_min);
        kv.set("envelope_end_max", self.envelope.end_max);
        for (k, m) in self.members.iter().enumerate() {
            kv.set(&format!("member.{k}.file"), member_file(k));
            kv.set(&format!("member.{k}.seed"), m.seed);
            kv.set(&format!("member.{k}.bootstrap_seed"), m.bootstrap_seed);
            kv.set(&format!("member.{k}.lambda"), m.lambda);
            if let (Some(t), Some(v)) = (m.train_loss.last(), m.val_loss.last()) {
                kv.set(&format!("member.{k}.final_train_loss"), t);
                kv.set(&format!("member.{k}.final_val_loss"), v);
            }
        }
        kv.to_text()
    }

    /// Reads a bundle written by [`Ensemble::save`]. Loss histories are not
    /// stored in the bundle; loaded members carry only their final losses.
    pub fn load(dir: &Path) -> Result<Self> {
        let kv = KeyValues::parse(&fs::read_to_string(dir.join(BUNDLE_MANIFEST))?)?;
        let format: String = kv.require("format")?;
        ensure(format == BUNDLE_FORMAT, || Error::Parse(format!("unknown bundle format {format}")))?;
        let count: usize = kv.require("member_count")?;
        let mut members = Vec::with_capacity(count);
        for k in 0..count {
            let file: String = kv.require(&format!("member.{k}.file"))?;
            let params = MlpParams::from_text(&fs::read_to_string(dir.join(&file))?)?;
            let last = |key: &str| -> Result<Vec<f64>> {
                Ok(kv.parse_opt::<f64>(&format!("member.{k}.{key}"))?.into_iter().collect())
            };
            members.push(Member {
                params,
                lambda: kv.require(&format!("member.{k}.lambda"))?,
                seed: kv.require(&format!("member.{k}.seed"))?,
                bootstrap_seed: kv.require(&format!("member.{k}.bootstrap_seed"))?,
                train_loss: last("final_train_loss")?,
                val_loss: last("final_val_loss")?,
            });
        }
        let ens = Ensemble {
            members,
            normalization: Normalization {
                stroke_mm: kv.require("stroke_mm")?,
                power_scale_w: kv.require("power_scale_w")?,
            },
            envelope: Envelope {
                start_min: kv.require("envelope_start_min")?,
                start_max: kv.require("envelope_start_max")?,
                end_min: kv.require("envelope_end_min")?,
                end_max: kv.require("envelope_end_max")?,
            },
            dataset_fingerprint: kv.require("dataset_fingerprint")?,
        };
        ens.validate().map_err(|e| Error::Parse(format!("bundle: {e}")))?;
        Ok(ens)
    }
}

pub const BUNDLE_MANIFEST: &str = "bundle.txt";
const BUNDLE_FORMAT: &str = "thermal-muscle-ensemble-1";

pub fn member_file(k: usize) -> String {
    format!("member_{k:02}.txt")
}

/// Trains member `k` alone. Its result depends only on the master seed and `k`.
pub fn train_member(data: &RegressionSet, config: &EnsembleConfig, k: usize) -> Result<Member> {
    let member_seed = config.member_seed(k);
    let bootstrap_seed = seed::split(member_seed, 0);
    let lambda = config.raw_lambda(k).max(config.lambda_floor);
    let rows = bootstrap_indices(data.len(), bootstrap_seed);
    let resampled = RegressionSet::new(
        data.inputs.select(ndarray::Axis(0), &rows),
        data.targets.select(ndarray::Axis(0), &rows),
    )?;
    let tc = TrainConfig {
        l2_weight: lambda,
        seed: seed::split(member_seed, 1),
        ..config.train.clone()
    };
    let report = train(&resampled, &tc).map_err(|e| Error::Member {
        member: k,
        source: Box::new(e),
    })?;
    Ok(Member {
        params: report.params,
        lambda,
        seed: member_seed,
        bootstrap_seed,
        train_loss: report.train_loss,
        val_loss: report.val_loss,
    })
}

/// Trains every member, concurrently where threads are available.
pub fn train_ensemble(dataset: &Dataset, config: &EnsembleConfig, dataset_fingerprint: &str) -> Result<Ensemble> {
    config.validate()?;
    ensure(dataset.len() >= 2, || {
        Error::InvalidInput(format!("need at least 2 samples, got {}", dataset.len()))
    })?;
    let data = regression_set(dataset)?;
    let members = (0..config.member_count)
        .into_par_iter()
        .map(|k| train_member(&data, config, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        members,
        normalization: dataset.header.normalization,
        envelope: Envelope::of(dataset),
        dataset_fingerprint: dataset_fingerprint.to_string(),
    })
}
