use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::Rng;
use thermal_muscle::nn::{
    forward, init_params, loss_and_grad, train, Batch, MlpParams, RegressionSet, TrainConfig,
    CONTROLLER_LAYERS,
};
use thermal_muscle::seed;

/// Loss written out with plain loops, independent of the library's matrix code.
fn naive_loss(p: &MlpParams, batch: &Batch, l2: f64) -> f64 {
    let mut acc = 0.0;
    for r in 0..batch.targets.len() {
        let mut a: Vec<f64> = batch.inputs.row(r).to_vec();
        for (i, l) in p.layers.iter().enumerate() {
            let mut z = vec![0.0; l.biases.len()];
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = l.biases[j];
                for (k, ak) in a.iter().enumerate() {
                    *zj += ak * l.weights[(k, j)];
                }
                if i + 1 < p.layers.len() {
                    *zj = zj.max(0.0);
                }
            }
            a = z;
        }
        let e = a[0] - batch.targets[r];
        acc += batch.weights[r] * e * e;
    }
    let reg: f64 = p.layers.iter().flat_map(|l| l.weights.iter()).map(|w| w * w).sum();
    acc / batch.weights.sum() + l2 * reg
}

fn random_batch(rng: &mut impl Rng, rows: usize, cols: usize) -> Batch {
    let x = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0));
    let y = Array1::from_shape_fn(rows, |_| rng.random_range(-1.0..1.0));
    let w = Array1::from_shape_fn(rows, |_| rng.random_range(1..4) as f64);
    Batch::weighted(x, y, w).unwrap()
}

#[test]
fn gradients_match_central_differences() {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for case in 0..24u64 {
        let mut rng = seed::rng(1000 + case);
        let sizes: Vec<usize> = match case % 3 {
            0 => vec![4, 3, 1],
            1 => vec![3, 5, 4, 1],
            _ => vec![5, 4, 3, 2, 1],
        };
        let mut p = init_params(&sizes, case).unwrap();
        for l in &mut p.layers {
            l.biases.mapv_inplace(|_| rng.random_range(-0.3..0.3));
        }
        let batch = random_batch(&mut rng, 6, sizes[0]);
        let l2 = if case % 2 == 0 { 0.0 } else { rng.random_range(1e-4..1e-1) };

        let (loss, grads) = loss_and_grad(&p, &batch, l2);
        assert!((loss - naive_loss(&p, &batch, l2)).abs() < 1e-12 * loss.max(1.0));

        let analytic = grads.values();
        for (i, a) in analytic.iter().enumerate() {
            let mut plus = p.clone();
            *plus.value_mut(i) += h;
            let mut minus = p.clone();
            *minus.value_mut(i) -= h;
            let numeric = (naive_loss(&plus, &batch, l2) - naive_loss(&minus, &batch, l2)) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn zero_l2_gives_pure_mse_gradient() {
    let mut rng = seed::rng(5);
    let p = init_params(&[4, 3, 1], 5).unwrap();
    let batch = random_batch(&mut rng, 5, 4);
    let (loss, g0) = loss_and_grad(&p, &batch, 0.0);
    assert_eq!(loss, batch.mse(&p));
    let (_, g1) = loss_and_grad(&p, &batch, 0.01);
    for (l, (a, b)) in p.layers.iter().zip(g0.layers.iter().zip(&g1.layers)) {
        for ((w, x), y) in l.weights.iter().zip(&a.weights).zip(&b.weights) {
            assert!((y - x - 0.02 * w).abs() < 1e-14);
        }
        assert_eq!(a.biases, b.biases);
    }
}

#[test]
fn dead_rectifier_ignores_its_incoming_weight() {
    let mut p = MlpParams::zeros(&[1, 2, 1]).unwrap();
    p.layers[0].weights[(0, 0)] = -1.0;
    p.layers[0].weights[(0, 1)] = 1.0;
    p.layers[1].weights[(0, 0)] = 3.0;
    p.layers[1].weights[(1, 0)] = 2.0;
    let before = forward(&p, &[0.5]).unwrap();
    p.layers[0].weights[(0, 0)] = -7.0;
    assert_eq!(forward(&p, &[0.5]).unwrap(), before);
    assert_eq!(before, 1.0);
}

#[test]
fn controller_network_shape() {
    let p = init_params(&CONTROLLER_LAYERS, 1).unwrap();
    assert_eq!(p.sizes(), CONTROLLER_LAYERS.to_vec());
    assert!(forward(&p, &[0.0; 200]).unwrap().is_finite());
    assert!(forward(&p, &[0.0; 199]).is_err());
    assert!(forward(&p, &[f64::NAN; 200]).is_err());
}

fn small_config(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        l2_weight: 0.0,
        seed,
        hidden: vec![16, 16],
        lr_init: 1e-2,
        lr_decay: 0.999,
        ..TrainConfig::default()
    }
}

#[test]
fn memorises_a_single_training_row() {
    // two rows with a 0.3 split leave exactly one for training
    let data = RegressionSet::new(
        Array2::from_shape_vec((2, 3), vec![0.2, -0.4, 0.9, 0.1, 0.1, 0.1]).unwrap(),
        Array1::from(vec![0.7, -0.2]),
    )
    .unwrap();
    let report = train(&data, &small_config(2000, 3)).unwrap();
    assert_eq!(report.train_rows.len(), 1);
    assert_eq!(report.val_rows.len(), 1);
    assert!(report.final_train_loss() < 1e-6, "{}", report.final_train_loss());
}

fn mean_task(rows: usize, cols: usize, seed_value: u64) -> RegressionSet {
    let mut rng = seed::rng(seed_value);
    let x = Array2::from_shape_fn((rows, cols), |_| rng.random_range(0.0..1.0));
    let y = x.mean_axis(ndarray::Axis(1)).unwrap();
    RegressionSet::new(x, y).unwrap()
}

#[test]
fn learns_the_mean_of_its_inputs() {
    let data = mean_task(400, 10, 11);
    let cfg = TrainConfig { lr_init: 3e-3, lr_decay: 0.9995, ..small_config(3000, 4) };
    let report = train(&data, &cfg).unwrap();
    assert!(report.final_val_loss() < 1e-3, "{}", report.final_val_loss());
    assert!(report.final_train_loss() < report.train_loss[0]);
    assert_eq!(report.train_loss.len(), 3000);
    assert_eq!(report.val_loss.len(), 3000);
    assert!(report.train_loss.iter().chain(&report.val_loss).all(|l| l.is_finite() && *l >= 0.0));
    assert_eq!(report.val_rows.len(), 120);
}

#[test]
fn training_is_deterministic_per_seed() {
    let data = mean_task(40, 5, 2);
    let a = train(&data, &small_config(50, 9)).unwrap();
    let b = train(&data, &small_config(50, 9)).unwrap();
    assert_eq!(a, b);
    let c = train(&data, &small_config(50, 10)).unwrap();
    assert_ne!(a.train_loss, c.train_loss);
    let csv = a.loss_csv();
    assert!(csv.starts_with("epoch,train_loss,val_loss\n0,"));
    assert_eq!(csv.lines().count(), 51);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn batch_order_does_not_change_loss_or_gradient(s in any::<u64>(), rot in 1usize..7) {
        let mut rng = seed::rng(s);
        let p = init_params(&[3, 4, 1], s).unwrap();
        let batch = random_batch(&mut rng, 7, 3);
        let perm: Vec<usize> = (0..7).map(|i| (i * 3 + rot) % 7).collect();
        let shuffled = Batch::weighted(
            batch.inputs.select(ndarray::Axis(0), &perm),
            batch.targets.select(ndarray::Axis(0), &perm),
            batch.weights.select(ndarray::Axis(0), &perm),
        ).unwrap();
        let (l1, g1) = loss_and_grad(&p, &batch, 1e-3);
        let (l2, g2) = loss_and_grad(&p, &shuffled, 1e-3);
        prop_assert!((l1 - l2).abs() <= 1e-12 * l1.abs().max(1e-300));
        for (a, b) in g1.values().iter().zip(g2.values()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-12));
        }
    }

    #[test]
    fn learning_rate_is_positive_and_non_increasing(decay in 0.99f64..=1.0, e in 0usize..20_000) {
        let a = thermal_muscle::nn::lr_schedule(e, 1e-3, decay);
        let b = thermal_muscle::nn::lr_schedule(e + 1, 1e-3, decay);
        prop_assert!(a > 0.0 && b > 0.0 && b <= a);
    }
}
