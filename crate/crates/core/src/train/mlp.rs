use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};
use crate::schedule::log_checkpoints;
use crate::train::{Checkpoint, RunRecord};

/// Two fully connected layers with a ReLU hidden layer, softmax
/// cross-entropy, plain minibatch SGD with weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoLayerConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub classes: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    /// Inputs are mapped to `(x − offset) · scale` before the first layer.
    pub input_offset: f64,
    pub input_scale: f64,
    pub checkpoints_per_decade: usize,
}

impl Default for TwoLayerConfig {
    fn default() -> Self {
        TwoLayerConfig {
            input_dim: 1024,
            hidden: 512,
            classes: 10,
            lr: 0.005,
            weight_decay: 5e-4,
            momentum: 0.0,
            batch_size: 64,
            steps: 2000,
            seed: 0,
            input_offset: 127.5,
            input_scale: 1.0 / 127.5,
            checkpoints_per_decade: 50,
        }
    }
}

impl TwoLayerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lr, self.input_scale];
        if positive.iter().any(|&x| !(x > 0.0)) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidParameter(
                "lr and input_scale must be positive, weight_decay non-negative".into(),
            ));
        }
        if self.momentum != 0.0 {
            return Err(Error::InvalidParameter("momentum is not supported".into()));
        }
        if self.input_dim == 0 || self.hidden == 0 || self.classes < 2 || self.batch_size == 0 || self.steps == 0 {
            return Err(Error::InvalidParameter(
                "input_dim, hidden, batch_size and steps must be positive; classes >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// Network parameters. Weight matrices are `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLayerNet {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

impl TwoLayerNet {
    /// Uniform fan-in initialisation, `U(−1/√fan_in, 1/√fan_in)` for weights
    /// and biases alike.
    pub fn init(config: &TwoLayerConfig) -> Self {
        let mut rng = stream_rng(config.seed, stream::INIT);
        let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
            let k = 1.0 / (fan_in as f64).sqrt();
            DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-k..k))
        };
        let w1 = uniform(config.hidden, config.input_dim, config.input_dim);
        let b1 = uniform(config.hidden, 1, config.input_dim).column(0).into_owned();
        let w2 = uniform(config.classes, config.hidden, config.hidden);
        let b2 = uniform(config.classes, 1, config.hidden).column(0).into_owned();
        TwoLayerNet { w1, b1, w2, b2 }
    }

    /// Pre-activations and logits for a batch (rows are samples).
    fn forward(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut z1 = x * self.w1.transpose();
        for mut row in z1.row_iter_mut() {
            row += self.b1.transpose();
        }
        let a = z1.map(|v| v.max(0.0));
        let mut z2 = &a * self.w2.transpose();
        for mut row in z2.row_iter_mut() {
            row += self.b2.transpose();
        }
        (z1, z2)
    }

    pub fn logits(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.forward(x).1
    }
}

fn softmax_rows(z: &mut DMatrix<f64>) {
    for mut row in z.row_iter_mut() {
        let m = row.max();
        let s: f64 = row.iter().map(|v| (v - m).exp()).sum();
        row.apply(|v| *v = (*v - m).exp() / s);
    }
}

fn batch_matrix(data: &LabeledDataset, idx: &[usize], config: &TwoLayerConfig) -> DMatrix<f64> {
    let d = data.dim();
    DMatrix::from_fn(idx.len(), d, |r, c| (data.row(idx[r])[c] - config.input_offset) * config.input_scale)
}

/// Accuracy and mean cross-entropy of `net` on `data`.
pub fn evaluate_net(net: &TwoLayerNet, data: &LabeledDataset, config: &TwoLayerConfig) -> (f64, f64) {
    let chunk = 1024;
    let (mut hits, mut loss) = (0usize, 0.0);
    let idx: Vec<usize> = (0..data.len()).collect();
    for part in idx.chunks(chunk) {
        let x = batch_matrix(data, part, config);
        let logits = net.logits(&x);
        for (r, &i) in part.iter().enumerate() {
            let row = logits.row(r);
            let label = data.label(i);
            let arg = row.transpose().argmax().0;
            if arg == label {
                hits += 1;
            }
            let m = row.max();
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[label];
        }
    }
    let n = data.len() as f64;
    (hits as f64 / n, loss / n)
}

/// One SGD step on the batch `idx`; returns the batch loss.
pub fn sgd_step_net(net: &mut TwoLayerNet, data: &LabeledDataset, idx: &[usize], config: &TwoLayerConfig) -> f64 {
    let x = batch_matrix(data, idx, config);
    let (z1, mut p) = net.forward(&x);
    softmax_rows(&mut p);
    let b = idx.len() as f64;
    let mut loss = 0.0;
    for (r, &i) in idx.iter().enumerate() {
        let label = data.label(i);
        loss -= p[(r, label)].max(f64::MIN_POSITIVE).ln();
        p[(r, label)] -= 1.0;
    }
    let dz2 = p / b;
    let a = z1.map(|v| v.max(0.0));
    let dw2 = dz2.transpose() * &a;
    let db2 = dz2.row_sum().transpose();
    let mut dz1 = &dz2 * &net.w2;
    dz1.zip_apply(&z1, |g, z| {
        if z <= 0.0 {
            *g = 0.0
        }
    });
    let dw1 = dz1.transpose() * &x;
    let db1 = dz1.row_sum().transpose();
    let (lr, wd) = (config.lr, config.weight_decay);
    net.w1 -= (dw1 + &net.w1 * wd) * lr;
    net.b1 -= (db1 + &net.b1 * wd) * lr;
    net.w2 -= (dw2 + &net.w2 * wd) * lr;
    net.b2 -= (db2 + &net.b2 * wd) * lr;
    loss / b
}

/// Minibatch SGD for `config.steps` steps, sampling batches by walking a
/// fresh permutation of the training set each epoch. Evaluates on `eval`
/// at log-spaced steps.
pub fn train_two_layer(
    config: &TwoLayerConfig,
    train: &LabeledDataset,
    eval: &LabeledDataset,
    ids: (&str, &str),
) -> Result<(RunRecord, TwoLayerNet)> {
    config.validate()?;
    for (i, d) in [train.dim(), eval.dim()].into_iter().enumerate() {
        if d != config.input_dim {
            return Err(Error::DimensionMismatch {
                index: i,
                expected: config.input_dim,
                got: d,
            });
        }
    }
    for data in [train, eval] {
        if let Some(&label) = data.labels().iter().find(|&&l| l >= config.classes) {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: config.classes,
            });
        }
    }
    let started = Instant::now();
    let schedule = log_checkpoints(config.steps, config.checkpoints_per_decade);
    let mut net = TwoLayerNet::init(config);
    let mut rng = stream_rng(config.seed, stream::SHUFFLE);
    let mut order = train.shuffled_indices(&mut rng);
    let mut pos = 0;
    let mut checkpoints = Vec::with_capacity(schedule.len());
    let mut next = 0;
    let mut batch = Vec::with_capacity(config.batch_size);
    for step in 0..=config.steps {
        if schedule.get(next) == Some(&step) {
            let (accuracy, loss) = evaluate_net(&net, eval, config);
            if !loss.is_finite() {
                return Err(Error::Divergence { step, norm: f64::INFINITY });
            }
            checkpoints.push(Checkpoint {
                step,
                accuracy,
                loss,
                angles: Vec::new(),
            });
            next += 1;
        }
        if step == config.steps {
            break;
        }
        batch.clear();
        while batch.len() < config.batch_size {
            if pos == order.len() {
                order = train.shuffled_indices(&mut rng);
                pos = 0;
            }
            batch.push(order[pos]);
            pos += 1;
        }
        let l = sgd_step_net(&mut net, train, &batch, config);
        if !l.is_finite() {
            return Err(Error::Divergence { step, norm: f64::INFINITY });
        }
    }
    let record = RunRecord {
        config: serde_json::to_value(config)?,
        seed: config.seed,
        train_dataset: ids.0.to_string(),
        eval_dataset: ids.1.to_string(),
        reference_names: Vec::new(),
        checkpoints,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok((record, net))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n: usize, seed: u64, d: usize, classes: usize) -> LabeledDataset {
        let mut rng = stream_rng(seed, 0);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let c = i % classes;
            rows.push(
                (0..d)
                    .map(|j| {
                        let centre = if j % classes == c { 3.0 } else { 0.0 };
                        centre + rng.random_range(-1.0..1.0)
                    })
                    .collect::<Vec<f64>>(),
            );
            labels.push(c);
        }
        LabeledDataset::from_rows(&rows, labels, classes).unwrap()
    }

    fn cfg(d: usize, classes: usize) -> TwoLayerConfig {
        TwoLayerConfig {
            input_dim: d,
            hidden: 16,
            classes,
            lr: 0.1,
            steps: 300,
            batch_size: 16,
            input_offset: 0.0,
            input_scale: 1.0,
            ..Default::default()
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data = blobs(8, 1, 5, 3);
        let c = TwoLayerConfig {
            weight_decay: 0.0,
            lr: 1.0,
            ..cfg(5, 3)
        };
        let net = TwoLayerNet::init(&c);
        let idx: Vec<usize> = (0..8).collect();
        let loss = |n: &TwoLayerNet| {
            let x = batch_matrix(&data, &idx, &c);
            let z = n.logits(&x);
            idx.iter()
                .enumerate()
                .map(|(r, &i)| {
                    let row = z.row(r);
                    let m = row.max();
                    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - row[data.label(i)]
                })
                .sum::<f64>()
                / 8.0
        };
        let mut stepped = net.clone();
        sgd_step_net(&mut stepped, &data, &idx, &c);
        let h = 1e-6;
        for (r, col) in [(0, 0), (3, 2), (7, 4)] {
            let mut a = net.clone();
            let mut b = net.clone();
            a.w1[(r, col)] += h;
            b.w1[(r, col)] -= h;
            let g = (loss(&a) - loss(&b)) / (2.0 * h);
            assert!((net.w1[(r, col)] - stepped.w1[(r, col)] - g).abs() < 1e-7);
        }
        for (r, col) in [(0, 0), (2, 9)] {
            let mut a = net.clone();
            let mut b = net.clone();
            a.w2[(r, col)] += h;
            b.w2[(r, col)] -= h;
            let g = (loss(&a) - loss(&b)) / (2.0 * h);
            assert!((net.w2[(r, col)] - stepped.w2[(r, col)] - g).abs() < 1e-7);
        }
    }

    #[test]
    fn learns_separable_blobs() {
        let train = blobs(600, 2, 6, 3);
        let eval = blobs(300, 3, 6, 3);
        let (r, _) = train_two_layer(&cfg(6, 3), &train, &eval, ("t", "e")).unwrap();
        assert!(r.final_accuracy() > 0.95, "{}", r.final_accuracy());
    }

    #[test]
    fn bitwise_reproducible() {
        let train = blobs(200, 2, 6, 3);
        let eval = blobs(100, 3, 6, 3);
        let a = train_two_layer(&cfg(6, 3), &train, &eval, ("t", "e")).unwrap();
        let b = train_two_layer(&cfg(6, 3), &train, &eval, ("t", "e")).unwrap();
        assert_eq!(a.0.checkpoints, b.0.checkpoints);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn random_labels_stay_near_chance() {
        // labels independent of the inputs on both sides: nothing learned on
        // the training set can transfer
        let train = blobs(600, 2, 6, 3).with_random_labels(&mut stream_rng(9, 0));
        let eval = blobs(3000, 3, 6, 3).with_random_labels(&mut stream_rng(10, 0));
        let (r, _) = train_two_layer(&cfg(6, 3), &train, &eval, ("t", "e")).unwrap();
        let se = (1.0 / 3.0 * 2.0 / 3.0 / 3000.0f64).sqrt();
        assert!((r.final_accuracy() - 1.0 / 3.0).abs() < 4.0 * se, "{}", r.final_accuracy());
    }

    #[test]
    fn same_seed_same_initial_weights() {
        let c = cfg(6, 3);
        assert_eq!(TwoLayerNet::init(&c), TwoLayerNet::init(&c));
        let c2 = TwoLayerConfig { seed: 1, ..c.clone() };
        assert_ne!(TwoLayerNet::init(&c), TwoLayerNet::init(&c2));
    }

    #[test]
    fn rejects_bad_labels() {
        let train = blobs(30, 2, 6, 3);
        let c = TwoLayerConfig { classes: 2, ..cfg(6, 2) };
        assert!(matches!(
            train_two_layer(&c, &train, &train, ("t", "e")),
            Err(Error::LabelOutOfRange { .. })
        ));
    }
}
