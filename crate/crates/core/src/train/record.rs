use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// One evaluation point of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: usize,
    pub accuracy: f64,
    pub loss: f64,
    /// Angles to the run's reference directions, in the order of
    /// [`RunRecord::reference_names`].
    pub angles: Vec<f64>,
}

/// Result of a training run: checkpoints plus the configuration that
/// produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: Value,
    pub seed: u64,
    pub train_dataset: String,
    pub eval_dataset: String,
    pub reference_names: Vec<String>,
    pub checkpoints: Vec<Checkpoint>,
    /// Not written to the CSV or sidecar, so that those stay reproducible.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl RunRecord {
    pub fn steps(&self) -> Vec<usize> {
        self.checkpoints.iter().map(|c| c.step).collect()
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.checkpoints.iter().map(|c| c.accuracy).collect()
    }

    pub fn final_accuracy(&self) -> f64 {
        self.checkpoints.last().map_or(f64::NAN, |c| c.accuracy)
    }

    pub fn best_accuracy(&self) -> f64 {
        self.checkpoints
            .iter()
            .map(|c| c.accuracy)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Angle series to the named reference.
    pub fn angle_series(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.reference_names.iter().position(|n| n == name)?;
        Some(self.checkpoints.iter().map(|c| c.angles[i]).collect())
    }

    /// Checkpoint index where the angle to `name` is smallest (first one on
    /// ties).
    pub fn argmin_angle(&self, name: &str) -> Option<usize> {
        let s = self.angle_series(name)?;
        let mut best = 0;
        for (i, &a) in s.iter().enumerate() {
            if a < s[best] {
                best = i;
            }
        }
        Some(best)
    }

    /// CSV columns: `step, train_dataset, eval_dataset, accuracy, loss`, then
    /// `theta_<name>` per reference.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec![
            "step".to_string(),
            "train_dataset".into(),
            "eval_dataset".into(),
            "accuracy".into(),
            "loss".into(),
        ];
        header.extend(self.reference_names.iter().map(|n| format!("theta_{n}")));
        w.write_record(&header)?;
        for c in &self.checkpoints {
            let mut row = vec![
                c.step.to_string(),
                self.train_dataset.clone(),
                self.eval_dataset.clone(),
                c.accuracy.to_string(),
                c.loss.to_string(),
            ];
            row.extend(c.angles.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON sidecar with the config snapshot and column schema.
    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        let v = serde_json::json!({
            "config": self.config,
            "seed": self.seed,
            "train_dataset": self.train_dataset,
            "eval_dataset": self.eval_dataset,
            "reference_names": self.reference_names,
            "columns": {
                "step": "SGD steps taken before evaluation",
                "accuracy": "fraction of the evaluation set classified correctly",
                "loss": "mean loss on the evaluation set",
                "theta_*": "angle in radians between the weights and a reference direction",
            },
        });
        std::fs::write(path, serde_json::to_string_pretty(&v)? + "\n")?;
        Ok(())
    }

    /// Read a run back from its CSV and sidecar.
    pub fn read(csv_path: &Path, sidecar: &Path) -> Result<Self> {
        let meta: Value = serde_json::from_str(&std::fs::read_to_string(sidecar)?)?;
        let names: Vec<String> = meta
            .get("reference_names")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .unwrap_or_default();
        let mut r = csv::Reader::from_path(csv_path)?;
        let mut checkpoints = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Format {
                        path: csv_path.to_path_buf(),
                        reason: format!("bad field {i}"),
                    })
            };
            checkpoints.push(Checkpoint {
                step: num(0)? as usize,
                accuracy: num(3)?,
                loss: num(4)?,
                angles: (0..names.len()).map(|i| num(5 + i)).collect::<Result<_>>()?,
            });
        }
        let s = |k: &str| meta.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
        Ok(RunRecord {
            config: meta.get("config").cloned().unwrap_or(Value::Null),
            seed: meta.get("seed").and_then(Value::as_u64).unwrap_or(0),
            train_dataset: s("train_dataset"),
            eval_dataset: s("eval_dataset"),
            reference_names: names,
            checkpoints,
            wall_clock_secs: 0.0,
        })
    }
}

/// Mean and sample standard deviation of `xs`.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-checkpoint comparison of two groups of runs (seeds) on the same
/// schedule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveGap {
    pub step: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    /// Noise band: `sqrt(s_a²/n_a + s_b²/n_b)`, floored by the binomial
    /// standard error of the evaluation set.
    pub sigma: f64,
}

impl CurveGap {
    pub fn separated(&self, k: f64) -> bool {
        (self.mean_a - self.mean_b).abs() > k * self.sigma
    }
}

/// Gap statistics at every shared checkpoint. `eval_size` is the number of
/// evaluation samples behind each accuracy.
pub fn curve_gaps(a: &[RunRecord], b: &[RunRecord], eval_size: usize) -> Result<Vec<CurveGap>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParameter("need at least one run per group".into()));
    }
    let steps = a[0].steps();
    for r in a.iter().chain(b) {
        if r.steps() != steps {
            return Err(Error::InvalidParameter("runs use different checkpoint schedules".into()));
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let m = eval_size.max(1) as f64;
    Ok(steps
        .iter()
        .enumerate()
        .map(|(i, &step)| {
            let xa: Vec<f64> = a.iter().map(|r| r.checkpoints[i].accuracy).collect();
            let xb: Vec<f64> = b.iter().map(|r| r.checkpoints[i].accuracy).collect();
            let (ma, sa) = mean_std(&xa);
            let (mb, sb) = mean_std(&xb);
            let seeds = (sa * sa / na + sb * sb / nb).sqrt();
            let binom = ((ma * (1.0 - ma) / na + mb * (1.0 - mb) / nb) / m).sqrt();
            CurveGap {
                step,
                mean_a: ma,
                mean_b: mb,
                sigma: seeds.max(binom),
            }
        })
        .collect())
}

/// First checkpoint step at which the mean curves of `a` and `b` differ by
/// more than three noise bands and stay apart for `persistence` consecutive
/// checkpoints. `None` if they never separate.
pub fn divergence_step(
    a: &[RunRecord],
    b: &[RunRecord],
    eval_size: usize,
    persistence: usize,
) -> Result<Option<usize>> {
    let gaps = curve_gaps(a, b, eval_size)?;
    let p = persistence.max(1);
    for i in 0..gaps.len() {
        let end = (i + p).min(gaps.len());
        if gaps[i..end].iter().all(|g| g.separated(3.0)) {
            return Ok(Some(gaps[i].step));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(acc: &[f64]) -> RunRecord {
        RunRecord {
            config: Value::Null,
            seed: 0,
            train_dataset: "a".into(),
            eval_dataset: "b".into(),
            reference_names: vec!["x".into()],
            checkpoints: acc
                .iter()
                .enumerate()
                .map(|(i, &a)| Checkpoint {
                    step: i * 10,
                    accuracy: a,
                    loss: 1.0 - a,
                    angles: vec![(i as f64 - 2.0).abs()],
                })
                .collect(),
            wall_clock_secs: 1.0,
        }
    }

    #[test]
    fn divergence_detected_after_agreement() {
        let a = vec![run(&[0.5, 0.6, 0.7, 0.8, 0.9]), run(&[0.5, 0.61, 0.71, 0.81, 0.91])];
        let b = vec![run(&[0.5, 0.6, 0.7, 0.7, 0.7]), run(&[0.5, 0.61, 0.71, 0.71, 0.71])];
        assert_eq!(divergence_step(&a, &b, 100_000, 1).unwrap(), Some(30));
        assert_eq!(divergence_step(&a, &a, 100_000, 1).unwrap(), None);
    }

    #[test]
    fn persistence_ignores_blips() {
        let a = vec![run(&[0.5, 0.9, 0.5, 0.5]), run(&[0.5, 0.9, 0.5, 0.5])];
        let b = vec![run(&[0.5, 0.5, 0.5, 0.5]), run(&[0.5, 0.5, 0.5, 0.5])];
        assert_eq!(divergence_step(&a, &b, 1000, 1).unwrap(), Some(10));
        assert_eq!(divergence_step(&a, &b, 1000, 2).unwrap(), None);
    }

    #[test]
    fn argmin_and_csv_round_trip() {
        let r = run(&[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(r.argmin_angle("x"), Some(2));
        let dir = tempfile::tempdir().unwrap();
        let (c, s) = (dir.path().join("r.csv"), dir.path().join("r.json"));
        r.write_csv(&c).unwrap();
        r.write_sidecar(&s).unwrap();
        let back = RunRecord::read(&c, &s).unwrap();
        assert_eq!(back.checkpoints, r.checkpoints);
        let text = std::fs::read_to_string(&c).unwrap();
        assert!(text.starts_with("step,train_dataset,eval_dataset,accuracy,loss,theta_x\n"));
    }
}
