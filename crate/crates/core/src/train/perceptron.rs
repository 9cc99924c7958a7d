use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analytic::{alignment, evaluate_weights, preactivation};
use crate::data::{LabeledDataset, SampleSource};
use crate::error::{Error, Result};
use crate::gflow::{Activation, DIVERGENCE_NORM};
use crate::rng::{stream, stream_rng};
use crate::schedule::log_checkpoints;
use crate::train::{Checkpoint, RunRecord};

/// Online or finite-sample SGD on `(σ(w·x/√D) − y)²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptronConfig {
    pub dim: usize,
    pub activation: Activation,
    pub eta: f64,
    pub steps: usize,
    pub seed: u64,
    /// Standard deviation of the i.i.d. normal initial weights.
    pub init_scale: f64,
    pub checkpoints_per_decade: usize,
}

impl Default for PerceptronConfig {
    fn default() -> Self {
        PerceptronConfig {
            dim: 10,
            activation: Activation::Tanh,
            eta: 0.05,
            steps: 300_000,
            seed: 0,
            init_scale: 1.0,
            checkpoints_per_decade: 50,
        }
    }
}

impl PerceptronConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidParameter(format!("eta = {} must be >= 0", self.eta)));
        }
        if self.steps == 0 {
            return Err(Error::InvalidParameter("steps must be at least 1".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidParameter("dim must be positive".into()));
        }
        Ok(())
    }

    pub fn initial_weights(&self) -> DVector<f64> {
        let mut rng = stream_rng(self.seed, stream::INIT);
        DVector::from_fn(self.dim, |_, _| self.init_scale * rng.sample::<f64, _>(StandardNormal))
    }
}

/// Reference direction tracked during training.
#[derive(Debug, Clone)]
pub struct Reference {
    pub name: String,
    pub direction: DVector<f64>,
}

impl Reference {
    pub fn new(name: &str, direction: &DVector<f64>) -> Self {
        Reference {
            name: name.to_string(),
            direction: direction.clone(),
        }
    }
}

/// One SGD step: `w ← w − η ∂_w (σ(λ) − y)²`.
pub fn sgd_step(w: &mut DVector<f64>, x: &[f64], y: f64, eta: f64, activation: &Activation) {
    let l = preactivation(w, x);
    let g = 2.0 * (activation.value(l) - y) * activation.derivative(l) / (x.len() as f64).sqrt();
    for (wi, xi) in w.iter_mut().zip(x) {
        *wi -= eta * g * xi;
    }
}

struct Recorder<'a> {
    config: &'a PerceptronConfig,
    eval: &'a LabeledDataset,
    references: &'a [Reference],
    checkpoints: Vec<Checkpoint>,
}

impl Recorder<'_> {
    fn record(&mut self, step: usize, w: &DVector<f64>) -> Result<()> {
        let ev = evaluate_weights(w, 0.0, &self.config.activation, self.eval)?;
        let angles = self
            .references
            .iter()
            .map(|r| alignment(w, &r.direction).unwrap_or(f64::NAN))
            .collect();
        self.checkpoints.push(Checkpoint {
            step,
            accuracy: ev.accuracy,
            loss: ev.square_loss,
            angles,
        });
        Ok(())
    }
}

fn check_dims(config: &PerceptronConfig, dims: &[usize], references: &[Reference]) -> Result<()> {
    let ref_dims = references.iter().map(|r| r.direction.len());
    for (i, d) in dims.iter().copied().chain(ref_dims).enumerate() {
        if d != config.dim {
            return Err(Error::DimensionMismatch {
                index: i,
                expected: config.dim,
                got: d,
            });
        }
    }
    Ok(())
}

fn finish(
    config: &PerceptronConfig,
    train_id: &str,
    eval_id: &str,
    references: &[Reference],
    checkpoints: Vec<Checkpoint>,
    started: Instant,
) -> Result<RunRecord> {
    Ok(RunRecord {
        config: serde_json::to_value(config)?,
        seed: config.seed,
        train_dataset: train_id.to_string(),
        eval_dataset: eval_id.to_string(),
        reference_names: references.iter().map(|r| r.name.clone()).collect(),
        checkpoints,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

/// Online learning: a fresh sample from `source` at every step.
pub fn train_perceptron_online(
    config: &PerceptronConfig,
    source: &mut dyn SampleSource,
    eval: &LabeledDataset,
    references: &[Reference],
    ids: (&str, &str),
) -> Result<RunRecord> {
    config.validate()?;
    check_dims(config, &[source.dim(), eval.dim()], references)?;
    let started = Instant::now();
    let schedule = log_checkpoints(config.steps, config.checkpoints_per_decade);
    let mut rec = Recorder {
        config,
        eval,
        references,
        checkpoints: Vec::with_capacity(schedule.len()),
    };
    let mut w = config.initial_weights();
    let mut x = vec![0.0; config.dim];
    let mut next = 0;
    for step in 0..=config.steps {
        if schedule.get(next) == Some(&step) {
            rec.record(step, &w)?;
            next += 1;
            let norm = w.norm();
            if !(norm <= DIVERGENCE_NORM) {
                return Err(Error::Divergence { step, norm });
            }
        }
        if step == config.steps {
            break;
        }
        let y = source.draw(&mut x);
        sgd_step(&mut w, &x, y, config.eta, &config.activation);
    }
    finish(config, ids.0, ids.1, references, rec.checkpoints, started)
}

#[derive(Debug, Clone)]
pub struct FiniteRun {
    /// Best evaluation accuracy over the checkpoints.
    pub early_stop_accuracy: f64,
    pub record: RunRecord,
}

/// SGD over a fixed dataset, visited in a fresh random order every epoch.
pub fn train_perceptron_finite(
    config: &PerceptronConfig,
    fixed: &LabeledDataset,
    eval: &LabeledDataset,
    references: &[Reference],
    ids: (&str, &str),
) -> Result<FiniteRun> {
    config.validate()?;
    if fixed.is_empty() {
        return Err(Error::InvalidParameter("empty training set".into()));
    }
    check_dims(config, &[fixed.dim(), eval.dim()], references)?;
    let ys = fixed.signed_labels()?;
    let started = Instant::now();
    let schedule = log_checkpoints(config.steps, config.checkpoints_per_decade);
    let mut rec = Recorder {
        config,
        eval,
        references,
        checkpoints: Vec::with_capacity(schedule.len()),
    };
    let mut rng = stream_rng(config.seed, stream::SHUFFLE);
    let mut order = fixed.shuffled_indices(&mut rng);
    let mut pos = 0;
    let mut w = config.initial_weights();
    let mut next = 0;
    for step in 0..=config.steps {
        if schedule.get(next) == Some(&step) {
            rec.record(step, &w)?;
            next += 1;
            let norm = w.norm();
            if !(norm <= DIVERGENCE_NORM) {
                return Err(Error::Divergence { step, norm });
            }
        }
        if step == config.steps {
            break;
        }
        if pos == order.len() {
            order = fixed.shuffled_indices(&mut rng);
            pos = 0;
        }
        let i = order[pos];
        pos += 1;
        sgd_step(&mut w, fixed.row(i), ys[i], config.eta, &config.activation);
    }
    let record = finish(config, ids.0, ids.1, references, rec.checkpoints, started)?;
    Ok(FiniteRun {
        early_stop_accuracy: record.best_accuracy(),
        record,
    })
}
