use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::analytic::{
    alignment, correction_classifier, correction_direction, linear_discriminant, naive_classifier,
    oracle_classifier, solve_psd, whitened_base, LinearClassifier, DEFAULT_C3,
};
use crate::data::{
    cifar10c_mapping, cifar_split_paths, coarse_grain_labels, fit_gaussian_clone, load_cifar_binary,
    sample_clone, sample_rectangular, CloneMode, GaussianMixtureClone, Grouping, LabeledDataset,
    RectangularParams, RectangularSource, SampleSource,
};
use crate::error::{Error, Result};
use crate::gflow::{
    integrate_gf_recording, steady_state, taylor_coefficients, References, StatsSource, Trajectory,
    TruncationScheme,
};
use crate::harness::{ExperimentConfig, LabeledRun, SummaryRow, Table};
use crate::rng::{derive_seed, stream, stream_rng};
use crate::stats::{estimate_class_stats, FourthOrderTensor, DEFAULT_DENSE_CAP};
use crate::train::{
    curve_gaps, divergence_step, mean_std, train_perceptron_finite, train_perceptron_online,
    train_two_layer, PerceptronConfig, Reference, RunRecord, TwoLayerConfig,
};

// child seeds of `data_seed`
const EVAL_DATA: u64 = 1;
const CLONE_FIT: u64 = 2;
const FROZEN: u64 = 3;
const CLONE_SAMPLE: u64 = 4;

/// Everything an experiment produces before it is written to disk.
#[derive(Debug, Default)]
pub struct Outcome {
    pub runs: Vec<LabeledRun>,
    /// `(group, seed, trajectory)`.
    pub trajectories: Vec<(String, u64, Trajectory)>,
    /// Extra CSV tables by file name.
    pub tables: Vec<(String, Table)>,
    pub summary: Vec<SummaryRow>,
    pub findings: Value,
}

fn num(x: f64) -> String {
    x.to_string()
}

/// Exact-moment classifiers of the rectangle distribution: naive, LDA,
/// `w¹ + c₃w²`, the correction direction `w²` and the oracle.
pub fn population_classifiers(p: &RectangularParams, c3: f64) -> Result<Vec<(&'static str, LinearClassifier)>> {
    let stats = p.population_stats()?;
    let naive = naive_classifier(&stats)?;
    let lda = linear_discriminant(&stats)?;
    let w1 = whitened_base(&stats, &lda)?;
    let mut u = DVector::zeros(p.dim);
    for positive in [false, true] {
        u += p.class_cumulants(positive, DEFAULT_DENSE_CAP)?.order(4).contract_tail(&w1);
    }
    let w2 = -solve_psd(&stats.within_class_covariance, &u)?;
    Ok(vec![
        ("naive", naive),
        ("lda", lda),
        ("correction", LinearClassifier::new(&w1 + &w2 * c3, 0.0)?),
        ("correction_direction", LinearClassifier::new(w2, 0.0)?),
        ("oracle", oracle_classifier(p)?),
    ])
}

/// Reference directions tracked by the perceptron runs. The correction
/// reference is the correction direction on its own.
pub fn rect_references(p: &RectangularParams) -> Result<Vec<Reference>> {
    let all = population_classifiers(p, DEFAULT_C3)?;
    let pick = |name: &str| all.iter().find(|c| c.0 == name).map(|c| c.1.weight().clone()).unwrap();
    Ok(vec![
        Reference::new("naive", &pick("naive")),
        Reference::new("lda", &pick("lda")),
        Reference::new("correction", &pick("correction_direction")),
        Reference::new("oracle", &pick("oracle")),
    ])
}

fn rect_eval(cfg: &ExperimentConfig) -> Result<LabeledDataset> {
    sample_rectangular(&cfg.rect, cfg.eval_size, derive_seed(cfg.data_seed, EVAL_DATA))
}

/// Full and isotropic clones of a large rectangle sample.
fn rect_clones(cfg: &ExperimentConfig) -> Result<(GaussianMixtureClone, GaussianMixtureClone)> {
    let fit = sample_rectangular(
        &cfg.rect,
        cfg.perceptron.clone_fit_size,
        derive_seed(cfg.data_seed, CLONE_FIT),
    )?;
    let g = Grouping::identity(2);
    Ok((
        fit_gaussian_clone(&fit, CloneMode::Full, &g, None)?,
        fit_gaussian_clone(&fit, CloneMode::Isotropic, &g, None)?,
    ))
}

fn perceptron_config(cfg: &ExperimentConfig, seed: u64) -> PerceptronConfig {
    PerceptronConfig {
        dim: cfg.rect.dim,
        activation: cfg.perceptron.activation.clone(),
        eta: cfg.perceptron.eta,
        steps: cfg.perceptron.steps,
        seed,
        init_scale: cfg.perceptron.init_scale,
        checkpoints_per_decade: cfg.perceptron.checkpoints_per_decade,
    }
}

fn runs_of<'a>(runs: &'a [LabeledRun], group: &str) -> Vec<RunRecord> {
    runs.iter().filter(|r| r.group == group).map(|r| r.record.clone()).collect::<Vec<_>>()
}

fn accuracy_stats(records: &[RunRecord], f: impl Fn(&RunRecord) -> f64) -> Value {
    let xs: Vec<f64> = records.iter().map(f).collect();
    let (m, s) = mean_std(&xs);
    json!({ "mean": m, "std": s, "per_seed": xs })
}

/// Mean accuracy over the checkpoints in the second half of the run.
fn plateau(r: &RunRecord) -> f64 {
    let last = r.checkpoints.last().map_or(0, |c| c.step);
    let tail: Vec<f64> = r
        .checkpoints
        .iter()
        .filter(|c| 2 * c.step >= last)
        .map(|c| c.accuracy)
        .collect();
    tail.iter().sum::<f64>() / tail.len() as f64
}

fn classifier_row(seed: u64, name: &str, c: &LinearClassifier, oracle: &DVector<f64>, p: &RectangularParams) -> Vec<String> {
    let mut row = vec![
        seed.to_string(),
        name.to_string(),
        num(alignment(c.weight(), oracle).unwrap_or(f64::NAN)),
        num(p.accuracy(c.weight(), c.bias())),
    ];
    row.extend(c.weight().iter().map(|x| num(*x)));
    row
}

pub fn rect_boundaries(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = &cfg.rect;
    let oracle = oracle_classifier(p)?.weight().clone();
    let per_seed: Vec<Vec<(String, LinearClassifier)>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let data = sample_rectangular(p, cfg.analytic.sample_size, seed)?;
            let stats = estimate_class_stats(&data, &Grouping::identity(2))?;
            let lda = linear_discriminant(&stats)?;
            let within = FourthOrderTensor::WithinCumulant;
            let corr = correction_classifier(&data, &stats, &lda, within, DEFAULT_C3)?;
            let dir = correction_direction(&data, &stats, &lda, within)?;
            Ok(vec![
                ("naive".to_string(), naive_classifier(&stats)?),
                ("lda".to_string(), lda),
                ("correction".to_string(), corr),
                ("correction_direction".to_string(), dir),
                ("oracle".to_string(), oracle_classifier(p)?),
            ])
        })
        .collect::<Result<_>>()?;
    let mut header = vec!["seed", "classifier", "theta_oracle", "accuracy"];
    let wcols: Vec<String> = (0..p.dim).map(|i| format!("w_{i}")).collect();
    header.extend(wcols.iter().map(String::as_str));
    let mut boundaries = Table::new(&header);
    let mut angles = Table::new(&["seed", "a", "b", "theta"]);
    let mut summary = Vec::new();
    for (seed, cls) in cfg.seeds.iter().zip(&per_seed) {
        for (name, c) in cls {
            boundaries.push(classifier_row(*seed, name, c, &oracle, p));
        }
        for (i, (na, a)) in cls.iter().enumerate() {
            for (nb, b) in &cls[i + 1..] {
                angles.push(vec![seed.to_string(), na.clone(), nb.clone(), num(alignment(a.weight(), b.weight())?)]);
            }
        }
    }
    for (k, (name, _)) in per_seed[0].iter().enumerate() {
        let th: Vec<f64> = per_seed.iter().map(|c| alignment(c[k].1.weight(), &oracle).unwrap()).collect();
        let acc: Vec<f64> = per_seed.iter().map(|c| p.accuracy(c[k].1.weight(), 0.0)).collect();
        summary.push(SummaryRow::from_values(name, 0, &[("theta_oracle", th), ("accuracy", acc)]));
    }
    let exact = population_classifiers(p, DEFAULT_C3)?;
    let mut exact_json = serde_json::Map::new();
    for (name, c) in &exact {
        exact_json.insert(
            name.to_string(),
            json!({
                "weight": c.weight().as_slice(),
                "theta_oracle": alignment(c.weight(), &oracle)?,
                "accuracy": p.accuracy(c.weight(), 0.0),
            }),
        );
    }
    let mut pairwise = serde_json::Map::new();
    for (i, (a, ca)) in exact.iter().enumerate() {
        for (b, cb) in &exact[i + 1..] {
            pairwise.insert(format!("{a}|{b}"), json!(alignment(ca.weight(), cb.weight())?));
        }
    }
    let findings = json!({
        "c3": DEFAULT_C3,
        "exact": exact_json,
        "exact_pairwise_angles": pairwise,
    });
    Ok(Outcome {
        tables: vec![("boundaries.csv".into(), boundaries), ("angles.csv".into(), angles)],
        summary,
        findings,
        ..Default::default()
    })
}

pub fn rect_alignment(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = cfg.rect;
    let eval = rect_eval(cfg)?;
    let refs = rect_references(&p)?;
    let runs: Vec<LabeledRun> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut src = RectangularSource::new(p, seed)?;
            let record = train_perceptron_online(&perceptron_config(cfg, seed), &mut src, &eval, &refs, ("rect", "rect"))?;
            Ok(LabeledRun {
                group: "rect".into(),
                record,
            })
        })
        .collect::<Result<_>>()?;
    let mut per_seed = Vec::new();
    let mut ordered = 0;
    for r in &runs {
        let arg = |n: &str| r.record.argmin_angle(n).map(|i| r.record.checkpoints[i].step);
        let (a, b, c) = (arg("naive"), arg("lda"), arg("correction"));
        let ok = a < b && b < c;
        ordered += ok as usize;
        per_seed.push(json!({
            "seed": r.record.seed,
            "argmin_step_naive": a,
            "argmin_step_lda": b,
            "argmin_step_correction": c,
            "ordered": ok,
            "final_accuracy": r.record.final_accuracy(),
        }));
    }
    let reference_accuracy: serde_json::Map<String, Value> = refs
        .iter()
        .map(|r| (r.name.clone(), json!(p.accuracy(&r.direction, 0.0))))
        .collect();
    let findings = json!({
        "per_seed": per_seed,
        "ordered_seeds": ordered,
        "seeds": runs.len(),
        "majority_ordered": 2 * ordered > runs.len(),
        "reference_accuracy": reference_accuracy,
    });
    Ok(Outcome {
        summary: crate::harness::summarize_runs(&runs),
        runs,
        findings,
        ..Default::default()
    })
}

pub fn rect_clone_collapse(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = cfg.rect;
    let eval = rect_eval(cfg)?;
    let refs = rect_references(&p)?;
    let (gm, iso) = rect_clones(cfg)?;
    let per_seed: Vec<Vec<LabeledRun>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let pc = perceptron_config(cfg, seed);
            let mut out = Vec::new();
            let mut sources: Vec<(&str, Box<dyn SampleSource>)> = vec![
                ("rect", Box::new(RectangularSource::new(p, seed)?)),
                ("gm", Box::new(gm.source(seed)?)),
                ("isogm", Box::new(iso.source(seed)?)),
            ];
            for (name, src) in sources.iter_mut() {
                let record = train_perceptron_online(&pc, src.as_mut(), &eval, &refs, (name, "rect"))?;
                out.push(LabeledRun {
                    group: name.to_string(),
                    record,
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let runs: Vec<LabeledRun> = per_seed.into_iter().flatten().collect();
    let (rect, gmr, isor) = (runs_of(&runs, "rect"), runs_of(&runs, "gm"), runs_of(&runs, "isogm"));
    let n_eval = eval.len();
    let lda_acc = p.accuracy(&refs[1].direction, 0.0);
    let findings = json!({
        "lda_accuracy": lda_acc,
        "oracle_accuracy": p.accuracy(&refs[3].direction, 0.0),
        "persistence": cfg.persistence,
        "plateau": {
            "rect": accuracy_stats(&rect, plateau),
            "gm": accuracy_stats(&gmr, plateau),
            "isogm": accuracy_stats(&isor, plateau),
        },
        "final": {
            "rect": accuracy_stats(&rect, RunRecord::final_accuracy),
            "gm": accuracy_stats(&gmr, RunRecord::final_accuracy),
            "isogm": accuracy_stats(&isor, RunRecord::final_accuracy),
        },
        "divergence_step": {
            "gm_vs_rect": divergence_step(&gmr, &rect, n_eval, cfg.persistence)?,
            "isogm_vs_rect": divergence_step(&isor, &rect, n_eval, cfg.persistence)?,
            "isogm_vs_gm": divergence_step(&isor, &gmr, n_eval, cfg.persistence)?,
        },
    });
    Ok(Outcome {
        summary: crate::harness::summarize_runs(&runs),
        runs,
        findings,
        ..Default::default()
    })
}

pub fn truncated_gf(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = cfg.rect;
    let g = &cfg.gflow;
    let frozen = sample_rectangular(&p, g.sample_size, derive_seed(cfg.data_seed, FROZEN))?;
    let eval = rect_eval(cfg)?;
    let src = StatsSource::from_sample(&frozen)?;
    let top = g.series_orders.iter().chain(&g.polynomial_orders).copied().max().unwrap_or(0);
    let e = taylor_coefficients(&g.activation, top.max(1))?;
    let stats = estimate_class_stats(&frozen, &Grouping::identity(2))?;
    let naive = naive_classifier(&stats)?;
    let lda = linear_discriminant(&stats)?;
    let corr = correction_direction(&frozen, &stats, &lda, FourthOrderTensor::WithinCumulant)?;
    let oracle = oracle_classifier(&p)?;
    let ss1 = steady_state(1, &src, &e, DEFAULT_C3)?;
    let refs = References {
        naive: Some(naive.weight().clone()),
        lda: Some(lda.weight().clone()),
        correction: Some(corr.weight().clone()),
        oracle: Some(oracle.weight().clone()),
    };
    let mut plan: Vec<(TruncationScheme, usize)> = Vec::new();
    plan.extend(g.series_orders.iter().map(|&k| (TruncationScheme::Series, k)));
    plan.extend(g.polynomial_orders.iter().map(|&k| (TruncationScheme::ActivationPolynomial, k)));
    let per_seed: Vec<Vec<(String, u64, Trajectory)>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = stream_rng(seed, stream::INIT);
            let w0 = DVector::from_fn(p.dim, |_, _| g.init_scale * rng.sample::<f64, _>(StandardNormal));
            plan.iter()
                .map(|&(scheme, order)| {
                    let gc = crate::gflow::GfConfig {
                        order,
                        scheme,
                        eta: g.eta,
                        steps: g.steps,
                        checkpoints_per_decade: g.checkpoints_per_decade,
                    };
                    let t = integrate_gf_recording(&w0, &e, &src, &gc, &eval, &refs)?;
                    Ok((format!("{}_K{order}", scheme.name()), seed, t))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let trajectories: Vec<(String, u64, Trajectory)> = per_seed.into_iter().flatten().collect();
    let mut groups = serde_json::Map::new();
    for &(scheme, order) in &plan {
        let name = format!("{}_K{order}", scheme.name());
        let members: Vec<&(String, u64, Trajectory)> = trajectories.iter().filter(|t| t.0 == name).collect();
        let mut seeds = Vec::new();
        for (_, seed, t) in &members {
            let w = &t.final_weight;
            let k1 = trajectories
                .iter()
                .find(|o| o.0 == "series_K1" && o.1 == *seed)
                .and_then(|o| alignment(w, &o.2.final_weight).ok());
            seeds.push(json!({
                "seed": seed,
                "diverged_at": t.divergence.map(|d| d.0),
                "final_norm": w.norm(),
                "final_accuracy": t.last().accuracy,
                "theta_naive": alignment(w, naive.weight())?,
                "theta_lda": alignment(w, lda.weight())?,
                "theta_steady_state_k1": alignment(w, ss1.weight())?,
                "theta_final_series_k1": k1,
                "theta_oracle": alignment(w, oracle.weight())?,
            }));
        }
        groups.insert(name, json!(seeds));
    }
    let findings = json!({
        "sample_size": g.sample_size,
        "eta": g.eta,
        "steps": g.steps,
        "lda_accuracy": p.accuracy(lda.weight(), 0.0),
        "runs": groups,
    });
    Ok(Outcome {
        summary: crate::harness::summarize_trajectories(&trajectories),
        trajectories,
        findings,
        ..Default::default()
    })
}

pub fn correction_controls(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = &cfg.rect;
    let oracle = oracle_classifier(p)?.weight().clone();
    let c3s = &cfg.analytic.c3;
    // per seed: (theta_lda, [(mode, theta_direction, [theta_combined per c3])])
    type SeedResult = (f64, Vec<(FourthOrderTensor, f64, Vec<f64>)>);
    let per_seed: Vec<SeedResult> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let data = sample_rectangular(p, cfg.analytic.sample_size, seed)?;
            let stats = estimate_class_stats(&data, &Grouping::identity(2))?;
            let lda = linear_discriminant(&stats)?;
            let mut modes = Vec::new();
            for mode in FourthOrderTensor::ALL {
                let d = correction_direction(&data, &stats, &lda, mode)?;
                let combined = c3s
                    .iter()
                    .map(|&c3| {
                        let c = correction_classifier(&data, &stats, &lda, mode, c3)?;
                        alignment(c.weight(), &oracle)
                    })
                    .collect::<Result<Vec<_>>>()?;
                modes.push((mode, alignment(d.weight(), &oracle)?, combined));
            }
            Ok((alignment(lda.weight(), &oracle)?, modes))
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(&["seed", "mode", "kind", "c3", "theta_oracle", "theta_lda_oracle", "improves"]);
    for (seed, (th_lda, modes)) in cfg.seeds.iter().zip(&per_seed) {
        for (mode, th_dir, combined) in modes {
            let row = |kind: &str, c3: String, th: f64| {
                vec![
                    seed.to_string(),
                    mode.name().to_string(),
                    kind.to_string(),
                    c3,
                    num(th),
                    num(*th_lda),
                    ((th < *th_lda) as u8).to_string(),
                ]
            };
            table.push(row("direction", String::new(), *th_dir));
            for (c3, th) in c3s.iter().zip(combined) {
                table.push(row("combined", num(*c3), *th));
            }
        }
    }
    let mut summary = Vec::new();
    let mut by_mode = serde_json::Map::new();
    let lda_th: Vec<f64> = per_seed.iter().map(|s| s.0).collect();
    summary.push(SummaryRow::from_values("lda", 0, &[("theta_oracle", lda_th.clone())]));
    for (mi, mode) in FourthOrderTensor::ALL.iter().enumerate() {
        let dir: Vec<f64> = per_seed.iter().map(|s| s.1[mi].1).collect();
        summary.push(SummaryRow::from_values(
            &format!("{}_direction", mode.name()),
            0,
            &[("theta_oracle", dir.clone())],
        ));
        let mut combined = serde_json::Map::new();
        for (ci, c3) in c3s.iter().enumerate() {
            let th: Vec<f64> = per_seed.iter().map(|s| s.1[mi].2[ci]).collect();
            summary.push(SummaryRow::from_values(
                &format!("{}_c3={c3}", mode.name()),
                0,
                &[("theta_oracle", th.clone())],
            ));
            combined.insert(
                c3.to_string(),
                json!({
                    "theta_oracle": th,
                    "improves_all_seeds": th.iter().zip(&lda_th).all(|(a, b)| a < b),
                }),
            );
        }
        by_mode.insert(
            mode.name().to_string(),
            json!({
                "direction_theta_oracle": dir,
                "direction_improves_all_seeds": dir.iter().zip(&lda_th).all(|(a, b)| a < b),
                "direction_improves_any_seed": dir.iter().zip(&lda_th).any(|(a, b)| a < b),
                "combined": combined,
            }),
        );
    }
    let findings = json!({ "lda_theta_oracle": lda_th, "modes": by_mode });
    Ok(Outcome {
        tables: vec![("controls.csv".into(), table)],
        summary,
        findings,
        ..Default::default()
    })
}

/// Least-squares slope of `log(1 − acc)` against `log n`.
fn log_log_slope(ns: &[usize], acc: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .zip(acc)
        .filter(|(_, &a)| a < 1.0)
        .map(|(&n, &a)| ((n as f64).ln(), (1.0 - a).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn finite_sample(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = cfg.rect;
    let f = &cfg.finite;
    let eval = rect_eval(cfg)?;
    let refs = rect_references(&p)?;
    let (gm, _) = rect_clones(cfg)?;
    let lda_acc = p.accuracy(&refs[1].direction, 0.0);
    let jobs: Vec<(u64, usize)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| f.sizes.iter().map(move |&n| (s, n)))
        .collect();
    let results: Vec<[LabeledRun; 2]> = jobs
        .par_iter()
        .map(|&(seed, n)| {
            let pc = PerceptronConfig {
                eta: f.eta,
                steps: f.steps,
                checkpoints_per_decade: f.checkpoints_per_decade,
                ..perceptron_config(cfg, seed)
            };
            let data_seed = derive_seed(seed, n as u64);
            let rect = sample_rectangular(&p, 2 * n, data_seed)?;
            let clone = sample_clone(&gm, n, data_seed)?;
            let a = train_perceptron_finite(&pc, &rect, &eval, &refs, ("rect", "rect"))?;
            let b = train_perceptron_finite(&pc, &clone, &eval, &refs, ("gm", "rect"))?;
            Ok([
                LabeledRun {
                    group: format!("rect_n{n}"),
                    record: a.record,
                },
                LabeledRun {
                    group: format!("gm_n{n}"),
                    record: b.record,
                },
            ])
        })
        .collect::<Result<_>>()?;
    let runs: Vec<LabeledRun> = results.into_iter().flatten().collect();
    let m = eval.len() as f64;
    let mut per_size = Vec::new();
    let mut summary = Vec::new();
    let (mut rect_means, mut gm_means) = (Vec::new(), Vec::new());
    for &n in &f.sizes {
        let best = |g: &str| -> Vec<f64> {
            runs.iter().filter(|r| r.group == g).map(|r| r.record.best_accuracy()).collect()
        };
        let (ra, ga) = (best(&format!("rect_n{n}")), best(&format!("gm_n{n}")));
        let (rm, rs) = mean_std(&ra);
        let (gmn, gs) = mean_std(&ga);
        let k = ra.len() as f64;
        let binom = |a: f64| (a * (1.0 - a) / m).sqrt();
        // band of the difference of means, floored by the evaluation noise
        let sigma = ((rs * rs + gs * gs) / k).sqrt().max((binom(rm).powi(2) + binom(gmn).powi(2)).sqrt());
        // per-run spread of the clone-trained accuracy
        let gm_sigma = gs.max(binom(gmn));
        rect_means.push(rm);
        gm_means.push(gmn);
        summary.push(SummaryRow::from_values(&format!("rect_n{n}"), n, &[("early_stop_accuracy", ra.clone())]));
        summary.push(SummaryRow::from_values(&format!("gm_n{n}"), n, &[("early_stop_accuracy", ga.clone())]));
        per_size.push(json!({
            "n_per_class": n,
            "rect": { "mean": rm, "std": rs, "per_seed": ra },
            "gm": { "mean": gmn, "std": gs, "per_seed": ga },
            "sigma": sigma,
            "separated": (rm - gmn).abs() > 3.0 * sigma,
            "gm_sigma": gm_sigma,
            "gm_below_lda_bound": gmn <= lda_acc + 3.0 * gm_sigma,
        }));
    }
    let separated: Vec<bool> = per_size.iter().map(|v| v["separated"].as_bool().unwrap_or(false)).collect();
    // smallest n from which every larger n is separated as well
    let crossover = (0..separated.len())
        .find(|&i| separated[i..].iter().all(|&s| s))
        .map(|i| f.sizes[i]);
    let findings = json!({
        "lda_accuracy": lda_acc,
        "sizes": per_size,
        "crossover_n_per_class": crossover,
        "log_log_slope": {
            "rect": log_log_slope(&f.sizes, &rect_means),
            "gm": log_log_slope(&f.sizes, &gm_means),
        },
    });
    Ok(Outcome {
        runs,
        summary,
        findings,
        ..Default::default()
    })
}

/// Grayscale CIFAR-10 train subset and test subset.
fn load_cifar(cfg: &ExperimentConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    let dir = cfg
        .mlp
        .cifar_dir
        .as_ref()
        .ok_or_else(|| Error::Config("mlp.cifar_dir is required for CIFAR experiments".into()))?;
    let load = |train: bool, per_class: usize| -> Result<LabeledDataset> {
        let paths = cifar_split_paths(dir, train);
        if let Some(missing) = paths.iter().find(|p| !p.exists()) {
            return Err(Error::MissingFile(missing.clone()));
        }
        let d = load_cifar_binary(&paths, true)?;
        Ok(if per_class == 0 { d } else { d.take_per_class(per_class) })
    };
    Ok((load(true, cfg.mlp.per_class)?, load(false, cfg.mlp.eval_per_class)?))
}

fn mlp_config(cfg: &ExperimentConfig, dim: usize, classes: usize, seed: u64) -> TwoLayerConfig {
    let m = &cfg.mlp;
    TwoLayerConfig {
        input_dim: dim,
        hidden: m.hidden,
        classes,
        lr: m.lr,
        weight_decay: m.weight_decay,
        batch_size: m.batch_size,
        steps: m.steps,
        seed,
        checkpoints_per_decade: m.checkpoints_per_decade,
        ..Default::default()
    }
}

/// Train one network per (seed, training set), all evaluated on `eval`.
fn train_sets(
    cfg: &ExperimentConfig,
    sets: &[(&str, &LabeledDataset)],
    eval: &LabeledDataset,
    classes: usize,
) -> Result<Vec<LabeledRun>> {
    let jobs: Vec<(u64, usize)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| (0..sets.len()).map(move |i| (s, i)))
        .collect();
    jobs.par_iter()
        .map(|&(seed, i)| {
            let (name, data) = sets[i];
            let (record, _) = train_two_layer(&mlp_config(cfg, data.dim(), classes, seed), data, eval, (name, "real"))?;
            Ok(LabeledRun {
                group: name.to_string(),
                record,
            })
        })
        .collect()
}

fn clip(cfg: &ExperimentConfig) -> Option<(f64, f64)> {
    cfg.mlp.clip.then_some((0.0, 255.0))
}

pub fn mlp_clone_collapse(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (train, test) = load_cifar(cfg)?;
    let g = Grouping::identity(10);
    let per = train.class_counts().into_iter().min().unwrap_or(0);
    let s = derive_seed(cfg.data_seed, CLONE_SAMPLE);
    let iso = sample_clone(&fit_gaussian_clone(&train, CloneMode::Isotropic, &g, clip(cfg))?, per, s)?;
    let gm = sample_clone(&fit_gaussian_clone(&train, CloneMode::Full, &g, clip(cfg))?, per, s)?;
    let runs = train_sets(cfg, &[("isogm", &iso), ("gm", &gm), ("real", &train)], &test, 10)?;
    let (i, gmr, real) = (runs_of(&runs, "isogm"), runs_of(&runs, "gm"), runs_of(&runs, "real"));
    let n = test.len();
    let findings = json!({
        "train_size": train.len(),
        "eval_size": n,
        "persistence": cfg.persistence,
        "divergence_step": {
            "isogm_vs_real": divergence_step(&i, &real, n, cfg.persistence)?,
            "gm_vs_real": divergence_step(&gmr, &real, n, cfg.persistence)?,
        },
        "final": {
            "isogm": accuracy_stats(&i, RunRecord::final_accuracy),
            "gm": accuracy_stats(&gmr, RunRecord::final_accuracy),
            "real": accuracy_stats(&real, RunRecord::final_accuracy),
        },
        "best": {
            "isogm": accuracy_stats(&i, RunRecord::best_accuracy),
            "gm": accuracy_stats(&gmr, RunRecord::best_accuracy),
            "real": accuracy_stats(&real, RunRecord::best_accuracy),
        },
    });
    Ok(Outcome {
        summary: crate::harness::summarize_runs(&runs),
        runs,
        findings,
        ..Default::default()
    })
}

pub fn cifar10c_mixtures(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (train, test) = load_cifar(cfg)?;
    let map = cifar10c_mapping();
    let (coarse, coarse_test) = (coarse_grain_labels(&train, &map)?, coarse_grain_labels(&test, &map)?);
    let per = train.class_counts().into_iter().min().unwrap_or(0);
    let s = derive_seed(cfg.data_seed, CLONE_SAMPLE);
    let two = fit_gaussian_clone(&coarse, CloneMode::Full, &Grouping::identity(2), clip(cfg))?;
    // five fine classes per superclass: match the sample count of the ten-component clone
    let two = sample_clone(&two, 5 * per, s)?;
    let ten = fit_gaussian_clone(&train, CloneMode::Full, &Grouping::identity(10), clip(cfg))?
        .with_component_labels(map.as_slice(), 2)?;
    let ten = sample_clone(&ten, per, s)?;
    let runs = train_sets(cfg, &[("gm2", &two), ("gm10", &ten), ("real", &coarse)], &coarse_test, 2)?;
    let (r2, r10, real) = (runs_of(&runs, "gm2"), runs_of(&runs, "gm10"), runs_of(&runs, "real"));
    let n = coarse_test.len();
    let d2 = divergence_step(&r2, &real, n, cfg.persistence)?;
    let d10 = divergence_step(&r10, &real, n, cfg.persistence)?;
    // agreement window: checkpoints before either clone leaves the real curve
    let window_end = [d2, d10].into_iter().flatten().min();
    let gaps = curve_gaps(&r2, &r10, n)?;
    let window: Vec<_> = gaps
        .iter()
        .filter(|g| window_end.is_none_or(|e| g.step < e))
        .collect();
    let last = gaps.last().expect("at least one checkpoint");
    let findings = json!({
        "train_size": coarse.len(),
        "eval_size": n,
        "persistence": cfg.persistence,
        "divergence_step": {
            "gm2_vs_real": d2,
            "gm10_vs_real": d10,
            "gm2_vs_gm10": divergence_step(&r2, &r10, n, cfg.persistence)?,
        },
        "window_end_step": window_end,
        "window_checkpoints": window.len(),
        "window_indistinguishable": window.iter().all(|g| !g.separated(3.0)),
        "final": {
            "gm2": accuracy_stats(&r2, RunRecord::final_accuracy),
            "gm10": accuracy_stats(&r10, RunRecord::final_accuracy),
            "real": accuracy_stats(&real, RunRecord::final_accuracy),
        },
        "final_gm10_ge_gm2": last.mean_b >= last.mean_a,
    });
    Ok(Outcome {
        summary: crate::harness::summarize_runs(&runs),
        runs,
        findings,
        ..Default::default()
    })
}
