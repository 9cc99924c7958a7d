use std::collections::BTreeSet;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::gflow::Trajectory;
use crate::train::{mean_std, RunRecord};

/// A training run tagged with the condition it belongs to (e.g. the
/// training set).
#[derive(Debug, Clone)]
pub struct LabeledRun {
    pub group: String,
    pub record: RunRecord,
}

impl LabeledRun {
    /// File stem of the run's CSV and sidecar.
    pub fn stem(&self) -> String {
        format!("{}_seed{}", self.group, self.record.seed)
    }
}

/// Seed-aggregated statistics of one group at one step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub group: String,
    pub step: usize,
    pub n_seeds: usize,
    /// `(name, mean, sample std)`.
    pub metrics: Vec<(String, f64, f64)>,
}

impl SummaryRow {
    pub fn from_values(group: &str, step: usize, metrics: &[(&str, Vec<f64>)]) -> Self {
        let n_seeds = metrics.first().map_or(0, |m| m.1.len());
        SummaryRow {
            group: group.to_string(),
            step,
            n_seeds,
            metrics: metrics
                .iter()
                .map(|(name, xs)| {
                    let (m, s) = mean_std(xs);
                    (name.to_string(), m, s)
                })
                .collect(),
        }
    }

    pub fn metric(&self, name: &str) -> Option<(f64, f64)> {
        self.metrics.iter().find(|m| m.0 == name).map(|m| (m.1, m.2))
    }
}

/// Plain string table written as CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn groups_in_order<'a>(names: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut seen = BTreeSet::new();
    names.filter(|g| seen.insert(*g)).collect()
}

/// Mean and standard deviation over seeds of accuracy, loss and every
/// angle, per group and checkpoint. Runs of one group must share their
/// checkpoint schedule and reference list.
pub fn summarize_runs(runs: &[LabeledRun]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for g in groups_in_order(runs.iter().map(|r| r.group.as_str())) {
        let members: Vec<&RunRecord> = runs.iter().filter(|r| r.group == g).map(|r| &r.record).collect();
        let first = members[0];
        for (i, c) in first.checkpoints.iter().enumerate() {
            let col = |f: &dyn Fn(&RunRecord) -> f64| members.iter().map(|r| f(r)).collect::<Vec<_>>();
            let mut metrics: Vec<(String, Vec<f64>)> = vec![
                ("accuracy".into(), col(&|r| r.checkpoints[i].accuracy)),
                ("loss".into(), col(&|r| r.checkpoints[i].loss)),
            ];
            for (j, name) in first.reference_names.iter().enumerate() {
                metrics.push((format!("theta_{name}"), col(&|r| r.checkpoints[i].angles[j])));
            }
            let named: Vec<(&str, Vec<f64>)> = metrics.iter().map(|(n, v)| (n.as_str(), v.clone())).collect();
            out.push(SummaryRow::from_values(g, c.step, &named));
        }
    }
    out
}

/// As [`summarize_runs`] for gradient-flow trajectories, over the steps
/// every seed of a group reached.
pub fn summarize_trajectories(trajectories: &[(String, u64, Trajectory)]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for g in groups_in_order(trajectories.iter().map(|t| t.0.as_str())) {
        let members: Vec<&Trajectory> = trajectories.iter().filter(|t| t.0 == g).map(|t| &t.2).collect();
        let len = members.iter().map(|t| t.checkpoints.len()).min().unwrap_or(0);
        for i in 0..len {
            let col = |f: &dyn Fn(&crate::gflow::GfCheckpoint) -> f64| {
                members.iter().map(|t| f(&t.checkpoints[i])).collect::<Vec<_>>()
            };
            out.push(SummaryRow::from_values(
                g,
                members[0].checkpoints[i].step,
                &[
                    ("norm_w", col(&|c| c.norm_w)),
                    ("accuracy", col(&|c| c.accuracy)),
                    ("loss", col(&|c| c.loss)),
                    ("theta_naive", col(&|c| c.theta_naive)),
                    ("theta_lda", col(&|c| c.theta_lda)),
                    ("theta_corr", col(&|c| c.theta_corr)),
                    ("theta_oracle", col(&|c| c.theta_oracle)),
                ],
            ));
        }
    }
    out
}

/// `group, step, n_seeds`, then `<metric>_mean, <metric>_std` for every
/// metric in order of first appearance; cells of metrics a group lacks stay
/// empty.
pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        for m in &r.metrics {
            if !names.contains(&m.0.as_str()) {
                names.push(&m.0);
            }
        }
    }
    let mut header = vec!["group".to_string(), "step".into(), "n_seeds".into()];
    for n in &names {
        header.push(format!("{n}_mean"));
        header.push(format!("{n}_std"));
    }
    let mut t = Table {
        header,
        rows: Vec::with_capacity(rows.len()),
    };
    for r in rows {
        let mut row = vec![r.group.clone(), r.step.to_string(), r.n_seeds.to_string()];
        for n in &names {
            match r.metric(n) {
                Some((m, s)) => {
                    row.push(m.to_string());
                    row.push(s.to_string());
                }
                None => row.extend([String::new(), String::new()]),
            }
        }
        t.push(row);
    }
    t.write(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::Checkpoint;

    fn rec(seed: u64, acc: &[f64]) -> RunRecord {
        RunRecord {
            config: serde_json::Value::Null,
            seed,
            train_dataset: "a".into(),
            eval_dataset: "b".into(),
            reference_names: vec!["r".into()],
            checkpoints: acc
                .iter()
                .enumerate()
                .map(|(i, &a)| Checkpoint {
                    step: i,
                    accuracy: a,
                    loss: 0.0,
                    angles: vec![a / 2.0],
                })
                .collect(),
            wall_clock_secs: 0.0,
        }
    }

    #[test]
    fn groups_and_moments() {
        let runs = vec![
            LabeledRun { group: "x".into(), record: rec(0, &[0.5, 0.7]) },
            LabeledRun { group: "y".into(), record: rec(0, &[0.1, 0.2]) },
            LabeledRun { group: "x".into(), record: rec(1, &[0.7, 0.9]) },
        ];
        let s = summarize_runs(&runs);
        assert_eq!(s.len(), 4);
        assert_eq!(s[0].group, "x");
        assert_eq!(s[0].n_seeds, 2);
        let (m, sd) = s[1].metric("accuracy").unwrap();
        assert!((m - 0.8).abs() < 1e-15 && (sd - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(s[1].metric("theta_r").unwrap().0, 0.4);
        assert_eq!(s[2].group, "y");
        assert_eq!(s[2].n_seeds, 1);
    }
}
