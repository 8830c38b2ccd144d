use std::collections::HashMap;
use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand_distr::{Distribution, Normal};

use crate::error::{ensure, Error, Result};
use crate::seed;

/// Layer widths of the trajectory-to-power network: 100 (t, d) pairs in,
/// six rectifier layers, one linear output.
pub const CONTROLLER_LAYERS: [usize; 8] = [200, 100, 50, 50, 20, 20, 20, 1];

const PARAMS_MAGIC: &str = "thermal-muscle-mlp 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `fan_in × fan_out`, so a batch propagates as `X · W + b`.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

/// Gradients share the parameter layout.
pub type Gradients = MlpParams;

impl MlpParams {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        check_sizes(sizes)?;
        Ok(Self {
            layers: sizes
                .windows(2)
                .map(|w| Layer {
                    weights: Array2::zeros((w[0], w[1])),
                    biases: Array1::zeros(w[1]),
                })
                .collect(),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    biases: Array1::zeros(l.biases.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers.first().map_or(0, |l| l.weights.nrows())];
        s.extend(self.layers.iter().map(|l| l.weights.ncols()));
        s
    }

    pub fn input_len(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weights.nrows())
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        ensure(!self.layers.is_empty(), || Error::InvalidInput("network has no layers".into()))?;
        for (i, l) in self.layers.iter().enumerate() {
            ensure(l.weights.ncols() == l.biases.len(), || {
                Error::InvalidInput(format!("layer {i}: weight and bias widths differ"))
            })?;
            if let Some(next) = self.layers.get(i + 1) {
                ensure(l.weights.ncols() == next.weights.nrows(), || {
                    Error::InvalidInput(format!("layers {i} and {} do not chain", i + 1))
                })?;
            }
            ensure(
                l.weights.iter().chain(l.biases.iter()).all(|v| v.is_finite()),
                || Error::InvalidInput(format!("layer {i}: non-finite value")),
            )?;
        }
        Ok(())
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_sq_sum(&self) -> f64 {
        self.layers.iter().map(|l| l.weights.iter().map(|w| w * w).sum::<f64>()).sum()
    }

    /// Every weight and bias in layer order, weights row-major first.
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weights.iter().copied());
            out.extend(l.biases.iter().copied());
        }
        out
    }

    /// Mutable access to the value at position `index` of [`values`](Self::values).
    pub fn value_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            let nw = l.weights.len();
            if index < nw {
                let cols = l.weights.ncols();
                return &mut l.weights[(index / cols, index % cols)];
            }
            index -= nw;
            if index < l.biases.len() {
                return &mut l.biases[index];
            }
            index -= l.biases.len();
        }
        panic!("parameter index out of range");
    }

    /// Network outputs for each row of `inputs` (`batch × out`).
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut a = inputs.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = a.dot(&l.weights);
            z += &l.biases;
            if i < last {
                z.mapv_inplace(relu);
            }
            a = z;
        }
        a
    }

    /// Versioned text dump; every value is written in shortest round-trip
    /// form so parsing restores the parameters bit for bit.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(PARAMS_MAGIC);
        out.push('\n');
        let sizes: Vec<String> = self.sizes().iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "sizes {}", sizes.join(" "));
        for (i, l) in self.layers.iter().enumerate() {
            let _ = writeln!(out, "layer {i} {} {}", l.weights.nrows(), l.weights.ncols());
            for row in l.weights.rows() {
                out.push('w');
                for v in row {
                    let _ = write!(out, " {v}");
                }
                out.push('\n');
            }
            out.push('b');
            for v in &l.biases {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let perr = |m: String| Error::Parse(format!("network parameters: {m}"));
        let mut lines = text.lines();
        ensure(lines.next() == Some(PARAMS_MAGIC), || perr("unknown format line".into()))?;
        let sizes: Vec<usize> = lines
            .next()
            .and_then(|l| l.strip_prefix("sizes "))
            .ok_or_else(|| perr("missing sizes line".into()))?
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| perr(format!("bad size {s:?}"))))
            .collect::<Result<_>>()?;
        check_sizes(&sizes).map_err(|e| perr(e.to_string()))?;
        let mut params = MlpParams::zeros(&sizes)?;
        let parse_vals = |line: Option<&str>, tag: char, n: usize| -> Result<Vec<f64>> {
            let line = line.ok_or_else(|| perr("unexpected end of file".into()))?;
            let rest = line
                .strip_prefix(tag)
                .ok_or_else(|| perr(format!("expected `{tag}` line")))?;
            let v: Vec<f64> = rest
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| perr(format!("bad value {s:?}"))))
                .collect::<Result<_>>()?;
            ensure(v.len() == n, || perr(format!("expected {n} values, got {}", v.len())))?;
            Ok(v)
        };
        for (i, l) in params.layers.iter_mut().enumerate() {
            let expect = format!("layer {i} {} {}", l.weights.nrows(), l.weights.ncols());
            ensure(lines.next() == Some(expect.as_str()), || perr(format!("expected `{expect}`")))?;
            let cols = l.weights.ncols();
            for mut row in l.weights.rows_mut() {
                let v = parse_vals(lines.next(), 'w', cols)?;
                row.assign(&ArrayView1::from(&v));
            }
            let b = parse_vals(lines.next(), 'b', l.biases.len())?;
            l.biases.assign(&ArrayView1::from(&b));
        }
        params.validate()?;
        Ok(params)
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    ensure(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), || {
        Error::InvalidInput(format!("invalid layer sizes {sizes:?}"))
    })
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// He-style initialisation: weights `N(0, 2 / fan_in)`, biases zero.
pub fn init_params(sizes: &[usize], seed: u64) -> Result<MlpParams> {
    let mut params = MlpParams::zeros(sizes)?;
    let mut rng = seed::rng(seed);
    for l in &mut params.layers {
        let fan_in = l.weights.nrows() as f64;
        let dist = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
        l.weights.iter_mut().for_each(|w| *w = dist.sample(&mut rng));
    }
    Ok(params)
}

/// Scalar output for a single input vector.
pub fn forward(params: &MlpParams, input: &[f64]) -> Result<f64> {
    ensure(input.len() == params.input_len(), || {
        Error::InvalidInput(format!(
            "input has {} values, network expects {}",
            input.len(),
            params.input_len()
        ))
    })?;
    ensure(params.sizes().last() == Some(&1), || {
        Error::InvalidInput("network output is not scalar".into())
    })?;
    ensure(input.iter().all(|v| v.is_finite()), || {
        Error::InvalidInput("non-finite input".into())
    })?;
    let x = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
    Ok(params.forward_batch(x)[(0, 0)])
}

/// A full batch. `weights` are per-row multiplicities, so a bootstrap
/// resample can be stored once per distinct row.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Array2<f64>,
    pub targets: Array1<f64>,
    pub weights: Array1<f64>,
}

impl Batch {
    pub fn new(inputs: Array2<f64>, targets: Array1<f64>) -> Result<Self> {
        let n = targets.len();
        Self::weighted(inputs, targets, Array1::ones(n))
    }

    pub fn weighted(inputs: Array2<f64>, targets: Array1<f64>, weights: Array1<f64>) -> Result<Self> {
        ensure(inputs.nrows() == targets.len() && targets.len() == weights.len(), || {
            Error::InvalidInput("batch inputs, targets and weights differ in length".into())
        })?;
        ensure(!targets.is_empty(), || Error::InvalidInput("empty batch".into()))?;
        ensure(weights.iter().all(|w| *w > 0.0 && w.is_finite()), || {
            Error::InvalidInput("row weights must be positive".into())
        })?;
        Ok(Self {
            inputs,
            targets,
            weights,
        })
    }

    /// Collapses identical rows of the selected indices into one weighted row.
    pub fn from_rows(inputs: ArrayView2<f64>, targets: ArrayView1<f64>, rows: &[usize]) -> Result<Self> {
        let mut slot: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut keep: Vec<usize> = Vec::new();
        let mut counts: Vec<f64> = Vec::new();
        for &r in rows {
            let mut key: Vec<u64> = inputs.row(r).iter().map(|v| v.to_bits()).collect();
            key.push(targets[r].to_bits());
            match slot.get(&key) {
                Some(&s) => counts[s] += 1.0,
                None => {
                    slot.insert(key, keep.len());
                    keep.push(r);
                    counts.push(1.0);
                }
            }
        }
        Self::weighted(
            inputs.select(Axis(0), &keep),
            targets.select(Axis(0), &keep),
            Array1::from(counts),
        )
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.sum()
    }

    /// Weighted mean squared error of `params` on this batch.
    pub fn mse(&self, params: &MlpParams) -> f64 {
        let out = params.forward_batch(self.inputs.view());
        let mut acc = 0.0;
        for ((o, t), w) in out.column(0).iter().zip(&self.targets).zip(&self.weights) {
            acc += w * (o - t) * (o - t);
        }
        acc / self.total_weight()
    }
}

/// Regularised loss `MSE + λ·Σw²` and its gradient by backpropagation.
pub fn loss_and_grad(params: &MlpParams, batch: &Batch, l2_weight: f64) -> (f64, Gradients) {
    let last = params.layers.len() - 1;
    // activations[0] is the input; activations[i + 1] is the output of layer i
    let mut activations: Vec<Array2<f64>> = Vec::with_capacity(params.layers.len() + 1);
    activations.push(batch.inputs.clone());
    for (i, l) in params.layers.iter().enumerate() {
        let mut z = activations[i].dot(&l.weights);
        z += &l.biases;
        if i < last {
            z.mapv_inplace(relu);
        }
        activations.push(z);
    }

    let total = batch.total_weight();
    let out = &activations[last + 1];
    let mut mse = 0.0;
    let mut delta = Array2::<f64>::zeros(out.raw_dim());
    Zip::from(delta.rows_mut())
        .and(out.rows())
        .and(&batch.targets)
        .and(&batch.weights)
        .for_each(|mut d, o, &t, &w| {
            for (dv, ov) in d.iter_mut().zip(o.iter()) {
                let r = ov - t;
                mse += w * r * r;
                *dv = 2.0 * w * r / total;
            }
        });
    let loss = mse / total + l2_weight * params.weight_sq_sum();

    let mut grads = params.zeros_like();
    for i in (0..=last).rev() {
        let l = &params.layers[i];
        let g = &mut grads.layers[i];
        g.weights = activations[i].t().dot(&delta);
        if l2_weight != 0.0 {
            g.weights.scaled_add(2.0 * l2_weight, &l.weights);
        }
        g.biases = delta.sum_axis(Axis(0));
        if i > 0 {
            let mut prev = delta.dot(&l.weights.t());
            // rectifier derivative: pass only where the activation was positive
            Zip::from(&mut prev)
                .and(&activations[i])
                .for_each(|p, &a| {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                });
            delta = prev;
        }
    }
    (loss, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy(w1: f64, b1: f64, w2: f64, b2: f64) -> MlpParams {
        MlpParams {
            layers: vec![
                Layer {
                    weights: array![[w1]],
                    biases: array![b1],
                },
                Layer {
                    weights: array![[w2]],
                    biases: array![b2],
                },
            ],
        }
    }

    #[test]
    fn hand_evaluated_toy_net() {
        let p = toy(1.0, -0.5, 2.0, 0.0);
        assert_eq!(forward(&p, &[1.0]).unwrap(), 1.0);
        assert_eq!(forward(&p, &[0.0]).unwrap(), 0.0);
        // dead unit: scaling its incoming weight changes nothing
        let dead = toy(3.0, -0.5, 2.0, 0.7);
        assert_eq!(forward(&dead, &[-1.0]).unwrap(), 0.7);
        let dead_scaled = toy(30.0, -0.5, 2.0, 0.7);
        assert_eq!(forward(&dead_scaled, &[-1.0]).unwrap(), 0.7);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = MlpParams::zeros(&CONTROLLER_LAYERS).unwrap();
        let x: Vec<f64> = (0..200).map(|k| k as f64 * 0.1 - 3.0).collect();
        assert_eq!(forward(&p, &x).unwrap(), 0.0);
        assert!(forward(&p, &x[..10]).is_err());
        let mut bad = x.clone();
        bad[3] = f64::NAN;
        assert!(forward(&p, &bad).is_err());
    }

    #[test]
    fn init_is_seeded_and_scaled() {
        let a = init_params(&CONTROLLER_LAYERS, 11).unwrap();
        let b = init_params(&CONTROLLER_LAYERS, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_params(&CONTROLLER_LAYERS, 12).unwrap());
        assert!(a.layers.iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
        let w = &a.layers[0].weights;
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        assert!(n >= 1e4);
        assert!((var / (2.0 / 200.0) - 1.0).abs() < 0.2, "{var}");
    }

    #[test]
    fn perfect_fit_has_zero_loss_and_gradient() {
        let p = toy(1.0, 0.0, 2.0, 0.5);
        let x = array![[1.0], [2.0]];
        let y = p.forward_batch(x.view()).column(0).to_owned();
        let (loss, g) = loss_and_grad(&p, &Batch::new(x, y).unwrap(), 0.0);
        assert_eq!(loss, 0.0);
        assert!(g.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn regulariser_gradient_on_zero_mse() {
        let p = toy(1.5, 0.0, -2.0, 0.5);
        let x = array![[1.0], [2.0]];
        let y = p.forward_batch(x.view()).column(0).to_owned();
        let lambda = 0.01;
        let (loss, g) = loss_and_grad(&p, &Batch::new(x, y).unwrap(), lambda);
        assert!((loss - lambda * (1.5 * 1.5 + 4.0)).abs() < 1e-15);
        assert!((g.layers[0].weights[(0, 0)] - 2.0 * lambda * 1.5).abs() < 1e-15);
        assert!((g.layers[1].weights[(0, 0)] - 2.0 * lambda * -2.0).abs() < 1e-15);
        assert_eq!(g.layers[0].biases[0], 0.0);
    }

    #[test]
    fn weighted_rows_equal_duplicated_rows() {
        let p = init_params(&[3, 4, 1], 2).unwrap();
        let x = array![[0.1, 0.2, 0.3], [1.0, -1.0, 0.5], [0.0, 0.4, -0.2]];
        let y = array![0.3, -0.1, 0.8];
        let rows = [0, 1, 1, 2, 1, 0];
        let dup = Batch::new(x.select(Axis(0), &rows), y.select(Axis(0), &rows)).unwrap();
        let merged = Batch::from_rows(x.view(), y.view(), &rows).unwrap();
        assert_eq!(merged.targets.len(), 3);
        assert_eq!(merged.weights.to_vec(), vec![2.0, 3.0, 1.0]);
        let (l1, g1) = loss_and_grad(&p, &dup, 1e-3);
        let (l2, g2) = loss_and_grad(&p, &merged, 1e-3);
        assert!((l1 - l2).abs() <= 1e-14 * l1.abs());
        for (a, b) in g1.values().iter().zip(g2.values()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-12));
        }
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let p = init_params(&[5, 4, 3, 1], 8).unwrap();
        let text = p.to_text();
        let back = MlpParams::from_text(&text).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.to_text(), text);
        assert!(MlpParams::from_text(&text.replace("sizes 5", "sizes 6")).is_err());
        assert!(MlpParams::from_text("nope").is_err());
    }
}
