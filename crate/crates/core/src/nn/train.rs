use std::fmt::Write as _;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;

use super::{adam_step, init_params, loss_and_grad, AdamState, Batch, MlpParams};
use crate::error::{ensure, Error, Result};
use crate::seed;

pub const LOSS_CSV_HEADER: &str = "epoch,train_loss,val_loss";

/// Full training recipe for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_init: f64,
    /// Per-epoch multiplicative learning-rate factor.
    pub lr_decay: f64,
    pub l2_weight: f64,
    pub seed: u64,
    /// Fraction of rows held out for validation.
    pub val_fraction: f64,
    /// Hidden layer widths; input and output widths come from the data.
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10_000,
            lr_init: 1e-3,
            lr_decay: 0.9997,
            l2_weight: 1e-4,
            seed: 0,
            val_fraction: 0.3,
            hidden: vec![100, 50, 50, 20, 20, 20],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Error::InvalidInput(m);
        ensure(self.epochs >= 1, || bad("epochs must be >= 1".into()))?;
        ensure(self.lr_init.is_finite() && self.lr_init > 0.0, || {
            bad(format!("lr_init {} must be > 0", self.lr_init))
        })?;
        ensure(self.lr_decay > 0.0 && self.lr_decay <= 1.0, || {
            bad(format!("lr_decay {} must lie in (0, 1]", self.lr_decay))
        })?;
        ensure(self.l2_weight.is_finite() && self.l2_weight >= 0.0, || {
            bad(format!("l2_weight {} must be >= 0", self.l2_weight))
        })?;
        ensure(self.val_fraction > 0.0 && self.val_fraction < 1.0, || {
            bad(format!("val_fraction {} must lie in (0, 1)", self.val_fraction))
        })?;
        ensure(self.hidden.iter().all(|&h| h > 0), || bad("hidden widths must be > 0".into()))?;
        Ok(())
    }
}

/// Exponential decay: `lr_init · lr_decay^epoch`.
pub fn lr_schedule(epoch: usize, lr_init: f64, lr_decay: f64) -> f64 {
    lr_init * lr_decay.powf(epoch as f64)
}

/// Rows of inputs with one scalar target each.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSet {
    pub inputs: Array2<f64>,
    pub targets: Array1<f64>,
}

impl RegressionSet {
    pub fn new(inputs: Array2<f64>, targets: Array1<f64>) -> Result<Self> {
        ensure(inputs.nrows() == targets.len(), || {
            Error::InvalidInput("inputs and targets differ in length".into())
        })?;
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Regularised objective per epoch, evaluated before that epoch's update.
    pub train_loss: Vec<f64>,
    /// Validation mean squared error after each epoch's update.
    pub val_loss: Vec<f64>,
    pub params: MlpParams,
    pub train_rows: Vec<usize>,
    pub val_rows: Vec<usize>,
}

impl TrainReport {
    pub fn final_train_loss(&self) -> f64 {
        *self.train_loss.last().expect("at least one epoch")
    }

    pub fn final_val_loss(&self) -> f64 {
        *self.val_loss.last().expect("at least one epoch")
    }

    pub fn loss_csv(&self) -> String {
        let mut out = String::from(LOSS_CSV_HEADER);
        out.push('\n');
        for (e, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            let _ = writeln!(out, "{e},{t},{v}");
        }
        out
    }
}

/// Trains one network with full-batch Adam.
///
/// Rows are shuffled with a seeded generator and split into training and
/// validation parts; at least one row lands on each side. Identical rows
/// (as produced by bootstrap resampling) are merged into weighted rows,
/// which leaves the objective unchanged.
pub fn train(data: &RegressionSet, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let n = data.len();
    ensure(n >= 2, || Error::InvalidInput(format!("need at least 2 samples, got {n}")))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::split(config.seed, 0)));
    let n_val = ((n as f64 * config.val_fraction).round() as usize).clamp(1, n - 1);
    let val_rows = order[..n_val].to_vec();
    let train_rows = order[n_val..].to_vec();
    let train_batch = Batch::from_rows(data.inputs.view(), data.targets.view(), &train_rows)?;
    let val_batch = Batch::from_rows(data.inputs.view(), data.targets.view(), &val_rows)?;

    let mut sizes = vec![data.inputs.ncols()];
    sizes.extend(&config.hidden);
    sizes.push(1);
    let mut params = init_params(&sizes, seed::split(config.seed, 1))?;
    let mut adam = AdamState::new(&params);

    let mut train_loss = Vec::with_capacity(config.epochs);
    let mut val_loss = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (loss, grads) = loss_and_grad(&params, &train_batch, config.l2_weight);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        adam_step(&mut adam, &mut params, &grads, lr_schedule(epoch, config.lr_init, config.lr_decay));
        let val = val_batch.mse(&params);
        if !val.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        train_loss.push(loss);
        val_loss.push(val);
    }
    Ok(TrainReport {
        train_loss,
        val_loss,
        params,
        train_rows,
        val_rows,
    })
}
