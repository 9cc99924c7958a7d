//! Monte-Carlo checks. Tolerances are 3σ bands of the estimators involved.

use dsb::analytic::{alignment, correction_direction, evaluate, linear_discriminant, naive_classifier};
use dsb::data::{
    fit_gaussian_clone, sample_clone, sample_rectangular, CloneComponent, CloneMode, GaussianMixtureClone,
    Grouping, LabeledDataset, RectangularParams, RectangularSource, SampleSource,
};
use dsb::gflow::{
    gf_rhs, integrate_gf, taylor_coefficients, Activation, GfCheckpoint, GfConfig, References, StatsSource,
    TruncationScheme,
};
use dsb::rng::{stream, stream_rng};
use dsb::stats::{estimate_class_stats, FourthOrderTensor, MomentSet, DEFAULT_DENSE_CAP};
use dsb::train::{train_perceptron_online, PerceptronConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn skewed(seed: u64, n: usize, dim: usize) -> LabeledDataset {
    let mut rng = stream_rng(seed, stream::DATA);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..dim)
                .map(|j| {
                    let e: f64 = rng.random_range(0.0f64..1.0).powi(2);
                    (i % 2) as f64 * (1.0 + j as f64) + 2.0 * e + 0.5 * rng.random_range(-1.0..1.0)
                })
                .collect()
        })
        .collect();
    LabeledDataset::from_rows(&rows, (0..n).map(|i| i % 2).collect(), 2).unwrap()
}

#[test]
fn fit_then_sample_recovers_clone_moments() {
    let data = skewed(1, 400, 4);
    let n_per_class = 500_000;
    for mode in [CloneMode::Isotropic, CloneMode::Full] {
        let clone = fit_gaussian_clone(&data, mode, &Grouping::identity(2), None).unwrap();
        let sample = sample_clone(&clone, n_per_class, 11).unwrap();
        let s = estimate_class_stats(&sample, &Grouping::identity(2)).unwrap();
        let n = n_per_class as f64;
        for (c, comp) in clone.components.iter().enumerate() {
            let cov = comp.covariance();
            for i in 0..4 {
                let se = (cov[(i, i)] / n).sqrt();
                let z = (s.class_means[c][i] - comp.mean[i]) / se;
                assert!(z.abs() < 3.0, "{} mean {c},{i}: z = {z}", mode.name());
                for j in 0..4 {
                    let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / n).sqrt();
                    let z = (s.class_covariances[c][(i, j)] - cov[(i, j)]) / se;
                    assert!(z.abs() < 3.0, "{} cov {c},{i},{j}: z = {z}", mode.name());
                }
            }
        }
    }
}

#[test]
fn pooled_third_moment_vanishes_at_root_n_rate() {
    // x → −x, y → −y symmetry makes E x⊗3 = 0; the estimate shrinks as n^{-1/2}
    let p = RectangularParams::default();
    let sizes = [1_000usize, 10_000, 100_000];
    let mut logs = Vec::new();
    for &n in &sizes {
        let mut ms = 0.0;
        let reps = 6;
        for seed in 0..reps {
            let data = sample_rectangular(&p, n, 100 + seed).unwrap();
            let m = MomentSet::empirical(data.rows(), p.dim, DEFAULT_DENSE_CAP).unwrap();
            ms += m.order(3).as_slice().iter().map(|x| x * x).sum::<f64>();
        }
        logs.push(((n as f64).ln(), (ms / reps as f64).sqrt().ln()));
    }
    let (x0, y0) = logs[0];
    let (x1, y1) = logs[logs.len() - 1];
    let slope = (y1 - y0) / (x1 - x0);
    assert!((slope + 0.5).abs() < 0.1, "slope {slope}");
}

/// Two Gaussians sharing an anisotropic covariance.
fn shared_covariance_mixture(theta: f64, ratio: f64) -> GaussianMixtureClone {
    let (c, s) = (theta.cos(), theta.sin());
    let rot = DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]);
    let cov = &rot * DMatrix::from_diagonal(&DVector::from_vec(vec![ratio, 1.0, 0.5])) * rot.transpose();
    let factor = cov.cholesky().unwrap().l();
    let mean = DVector::from_vec(vec![0.6, 0.3, 0.2]);
    let component = |label: usize, sign: f64| CloneComponent {
        label,
        weight: 0.5,
        mean: &mean * sign,
        scale: 0.0,
        factor: Some(factor.clone()),
    };
    GaussianMixtureClone {
        mode: CloneMode::Full,
        dim: 3,
        num_classes: 2,
        components: vec![component(0, -1.0), component(1, 1.0)],
        clip_range: None,
    }
}

#[test]
fn lda_beats_naive_on_anisotropic_gaussians() {
    let eval_per_class = 100_000;
    for (k, (theta, ratio)) in [(0.4, 8.0), (1.0, 20.0), (-0.7, 4.0)].into_iter().enumerate() {
        let mix = shared_covariance_mixture(theta, ratio);
        mix.validate().unwrap();
        let train = sample_clone(&mix, 2000, k as u64).unwrap();
        let eval = sample_clone(&mix, eval_per_class, 1000 + k as u64).unwrap();
        let s = estimate_class_stats(&train, &Grouping::identity(2)).unwrap();
        let naive = evaluate(&naive_classifier(&s).unwrap(), &eval).unwrap().accuracy;
        let lda = evaluate(&linear_discriminant(&s).unwrap(), &eval).unwrap().accuracy;
        // both use the same eval points; bound the paired difference crudely
        let sigma = (2.0 * 0.25 / (2 * eval_per_class) as f64).sqrt();
        assert!(lda >= naive - 3.0 * sigma, "case {k}: lda {lda} naive {naive}");
        assert!(lda > naive, "case {k}: lda {lda} naive {naive}");
    }
}

#[test]
fn second_order_terms_add_nothing_beyond_the_mean_direction() {
    let p = RectangularParams::default();
    let (per_class, chunk) = (5_000_000usize, 250_000usize);
    let mut parts = Vec::new();
    let mut buf = vec![0.0; chunk * p.dim];
    for (c, positive) in [(0u64, false), (1, true)] {
        let mut rng = stream_rng(2718, stream::CLASS + c);
        let mut acc: Option<MomentSet> = None;
        for _ in 0..per_class / chunk {
            for row in buf.chunks_mut(p.dim) {
                p.draw_class(&mut rng, positive, row);
            }
            let m = MomentSet::empirical(buf.chunks(p.dim), p.dim, DEFAULT_DENSE_CAP).unwrap();
            let w = (chunk as f64) / per_class as f64;
            acc = Some(match acc {
                None => MomentSet::mixture(&[(w, &m)]).unwrap(),
                Some(a) => MomentSet::mixture(&[(1.0, &a), (w, &m)]).unwrap(),
            });
        }
        parts.push((0.5, if positive { 1.0 } else { -1.0 }, acc.unwrap()));
    }
    // class covariances from the raw moments
    let within = parts.iter().fold(DMatrix::zeros(p.dim, p.dim), |k, (_, _, m)| {
        let mu = m.order(1).to_vector();
        k + m.order(2).to_matrix() - &mu * mu.transpose()
    });
    let source = StatsSource::from_class_moments(parts).unwrap();
    let mdiff = source.mean_difference();
    let w = within.clone().cholesky().unwrap().solve(&mdiff);
    let e = taylor_coefficients(&Activation::Tanh, 2).unwrap();
    let r2 = gf_rhs(&w, &e, &source, 2, TruncationScheme::Series).unwrap()
        - gf_rhs(&w, &e, &source, 1, TruncationScheme::Series).unwrap();
    // span{m, κ_w w} is the line of m here, since κ_w w = m at the discriminant
    assert!(alignment(&(&within * &w), &mdiff).unwrap() < 1e-10);
    let u = mdiff.normalize();
    let residual = &r2 - &u * u.dot(&r2);
    let rel = residual.norm() / r2.norm();
    eprintln!("relative residual {rel:.3e}");
    assert!(r2.norm() > 1e-3, "order-2 term unexpectedly absent");
    assert!(rel < 1e-3, "relative residual {rel}");
}

fn rect_flow_setup(seed: u64, n: usize) -> (StatsSource, LabeledDataset, References) {
    let p = RectangularParams::default();
    let frozen = sample_rectangular(&p, n, seed).unwrap();
    let eval = sample_rectangular(&p, 2000, seed + 1).unwrap();
    let stats = estimate_class_stats(&frozen, &Grouping::identity(2)).unwrap();
    let lda = linear_discriminant(&stats).unwrap();
    let refs = References {
        naive: Some(naive_classifier(&stats).unwrap().weight().clone()),
        lda: Some(lda.weight().clone()),
        correction: Some(
            correction_direction(&frozen, &stats, &lda, FourthOrderTensor::WithinCumulant)
                .unwrap()
                .weight()
                .clone(),
        ),
        oracle: None,
    };
    (StatsSource::from_sample(&frozen).unwrap(), eval, refs)
}

fn small_init(seed: u64) -> DVector<f64> {
    let mut rng = stream_rng(seed, stream::INIT);
    DVector::from_fn(10, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal))
}

#[test]
fn halving_the_step_barely_moves_the_endpoint() {
    let (src, eval, _) = rect_flow_setup(7, 20_000);
    let analytic = StatsSource::analytic_rectangular(&RectangularParams::default()).unwrap();
    let e = taylor_coefficients(&Activation::Tanh, 3).unwrap();
    let cases = [
        (&analytic, TruncationScheme::Series, 1, 2000.0),
        (&src, TruncationScheme::ActivationPolynomial, 3, 300.0),
    ];
    for (source, scheme, order, horizon) in cases {
        let run = |eta: f64| {
            let cfg = GfConfig {
                order,
                scheme,
                eta,
                steps: (horizon / eta) as usize,
                checkpoints_per_decade: 1,
            };
            integrate_gf(&small_init(0), &e, source, &cfg, &eval, &References::default())
                .unwrap()
                .final_weight
        };
        let theta = alignment(&run(0.1), &run(0.05)).unwrap();
        assert!(theta < 0.005, "{} K={order}: {theta}", scheme.name());
    }
}

#[test]
fn anti_hebbian_flow_moves_along_the_mean_difference() {
    let (src, eval, _) = rect_flow_setup(3, 5000);
    let mut e = taylor_coefficients(&Activation::Tanh, 0).unwrap();
    e.gamma.iter_mut().for_each(|g| *g = 0.0);
    let w0 = small_init(5);
    let cfg = GfConfig {
        order: 0,
        scheme: TruncationScheme::Series,
        eta: 0.1,
        steps: 100_000,
        checkpoints_per_decade: 1,
    };
    let w = integrate_gf(&w0, &e, &src, &cfg, &eval, &References::default())
        .unwrap()
        .final_weight;
    let m = src.mean_difference();
    assert!(alignment(&(&w - &w0), &m).unwrap() < 1e-9);
    assert!(alignment(&w, &m).unwrap() < 1e-3);
}

#[test]
fn third_order_flow_visits_naive_then_lda_then_correction() {
    let (src, eval, refs) = rect_flow_setup(7, 20_000);
    let e = taylor_coefficients(&Activation::Tanh, 3).unwrap();
    let cfg = GfConfig {
        order: 3,
        scheme: TruncationScheme::ActivationPolynomial,
        eta: 0.1,
        steps: 5000,
        checkpoints_per_decade: 20,
    };
    for seed in 0..3 {
        let t = integrate_gf(&small_init(seed), &e, &src, &cfg, &eval, &refs).unwrap();
        let argmin = |f: fn(&GfCheckpoint) -> f64| {
            t.checkpoints
                .iter()
                .min_by(|a, b| f(a).total_cmp(&f(b)))
                .unwrap()
                .step
        };
        let steps = [
            argmin(|c| c.theta_naive),
            argmin(|c| c.theta_lda),
            argmin(|c| c.theta_corr),
        ];
        assert!(steps[0] < steps[1] && steps[1] < steps[2], "seed {seed}: {steps:?}");
    }
}

#[test]
fn online_loss_decreases_at_small_step() {
    let p = RectangularParams::default();
    let eval = sample_rectangular(&p, 20_000, 99).unwrap();
    let cfg = PerceptronConfig {
        eta: 0.005,
        steps: 20_000,
        checkpoints_per_decade: 5,
        ..PerceptronConfig::default()
    };
    let mut source = RectangularSource::new(p, 4).unwrap();
    assert_eq!(source.dim(), 10);
    let rec = train_perceptron_online(&cfg, &mut source, &eval, &[], ("rect", "rect")).unwrap();
    let losses: Vec<f64> = rec.checkpoints.iter().map(|c| c.loss).collect();
    // SGD noise band: 2% relative
    for pair in losses.windows(2) {
        assert!(pair[1] <= pair[0] * 1.02 + 1e-3, "{losses:?}");
    }
    assert!(losses[losses.len() - 1] < 0.5 * losses[0], "{losses:?}");
}
