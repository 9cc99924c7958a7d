use dsb::analytic::{
    alignment, correction_classifier, correction_direction, linear_discriminant, naive_classifier,
};
use dsb::data::{
    fit_gaussian_clone, load_cifar_binary, sample_clone, sample_rectangular, to_cifar_bytes, CloneMode,
    Grouping, LabeledDataset, RectangularParams,
};
use dsb::gflow::{gf_rhs, taylor_coefficients, Activation, StatsSource, TruncationScheme};
use dsb::rng::{stream, stream_rng};
use dsb::stats::{
    contract_fourth_order, cumulants_from_moments, estimate_class_stats, moments_from_cumulants,
    CumulantSet, DenseTensor, FourthOrderTensor, MomentSet, DEFAULT_DENSE_CAP,
};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;

fn random_symmetric(order: usize, dim: usize, rng: &mut impl Rng) -> DenseTensor {
    let n = dim.pow(order as u32);
    let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    DenseTensor::from_vec(order, dim, data).unwrap().symmetrized()
}

/// Two classes of skewed, heavy-ish tailed data.
fn non_gaussian(seed: u64, n: usize, dim: usize, balanced: bool) -> LabeledDataset {
    let mut rng = stream_rng(seed, stream::DATA);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = if balanced { i % 2 } else { usize::from(rng.random_bool(0.4)) };
        let shift = if label == 1 { 0.7 } else { -0.3 };
        rows.push(
            (0..dim)
                .map(|j| {
                    let u: f64 = rng.random_range(0.0..1.0);
                    shift * (j + 1) as f64 / dim as f64 + u * u * u - 0.25 + 0.3 * rng.random_range(-1.0..1.0)
                })
                .collect(),
        );
        labels.push(label);
    }
    // both classes need at least two members
    labels[0] = 0;
    labels[1] = 0;
    labels[2] = 1;
    labels[3] = 1;
    LabeledDataset::from_rows(&rows, labels, 2).unwrap()
}

/// Dense-tensor version of the streaming fourth-order contraction.
fn dense_within_cumulant(data: &LabeledDataset, v: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(data.dim());
    for c in 0..2 {
        let rows = data.rows().zip(data.labels()).filter(|(_, &l)| l == c).map(|(r, _)| r);
        let m = MomentSet::empirical(rows, data.dim(), DEFAULT_DENSE_CAP).unwrap();
        out += cumulants_from_moments(&m).unwrap().order(4).contract_tail(v);
    }
    out
}

fn angle(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    alignment(a, b).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cumulant_round_trip(dim in 1usize..=4, seed in any::<u64>()) {
        let mut rng = stream_rng(seed, stream::INIT);
        let tensors = (1..=4).map(|k| random_symmetric(k, dim, &mut rng)).collect::<Vec<_>>();
        let [a, b, c, d] = <[DenseTensor; 4]>::try_from(tensors).unwrap();
        let cum = CumulantSet::new(a, b, c, d).unwrap();
        let back = cumulants_from_moments(&moments_from_cumulants(&cum).unwrap()).unwrap();
        prop_assert!(back.relative_distance(&cum, 1.0) < 1e-12);
    }

    #[test]
    fn empirical_tensors_are_exactly_symmetric(dim in 1usize..=5, n in 1usize..40, seed in any::<u64>()) {
        let mut rng = stream_rng(seed, stream::DATA);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let m = MomentSet::empirical(rows.iter().map(|r| r.as_slice()), dim, DEFAULT_DENSE_CAP).unwrap();
        for k in 1..=4 {
            prop_assert_eq!(m.order(k).asymmetry(), 0.0);
        }
        let labels = (0..n).map(|i| i % 2).collect::<Vec<_>>();
        if n >= 4 {
            let data = LabeledDataset::from_rows(&rows, labels, 2).unwrap();
            let s = estimate_class_stats(&data, &Grouping::identity(2)).unwrap();
            for m in s.class_covariances.iter().chain([&s.pooled_second_moment, &s.within_class_covariance]) {
                prop_assert_eq!(m, &m.transpose());
            }
        }
    }

    #[test]
    fn streaming_contraction_matches_dense(dim in 1usize..=8, seed in any::<u64>()) {
        let data = non_gaussian(seed, 120, dim, false);
        let stats = estimate_class_stats(&data, &Grouping::identity(2)).unwrap();
        let mut rng = stream_rng(seed, stream::EVAL);
        let v = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        let fast = contract_fourth_order(&data, &stats, &v, FourthOrderTensor::WithinCumulant).unwrap();
        let dense = dense_within_cumulant(&data, &v);
        prop_assert!((&fast - &dense).norm() <= 1e-8 * dense.norm().max(1e-300));
    }

    #[test]
    fn pooled_decomposition_on_balanced_data(dim in 1usize..=6, half in 2usize..60, seed in any::<u64>()) {
        let data = non_gaussian(seed, 2 * half, dim, true);
        let s = estimate_class_stats(&data, &Grouping::identity(2)).unwrap();
        let nc = half as f64;
        let rhs = &s.within_class_covariance * ((nc - 1.0) / nc / 2.0) + s.between_class().unwrap() / 4.0;
        let scale = s.pooled_second_moment.amax().max(1.0);
        prop_assert!((&s.pooled_second_moment - rhs).amax() < 1e-12 * scale);
    }

    #[test]
    fn rectangle_samples_stay_in_their_supports(
        a in 0.1f64..3.0, b in 0.1f64..2.0, mu1 in -2.0f64..2.0, gap in 0.01f64..1.0,
        dim in 2usize..6, seed in any::<u64>(),
    ) {
        let p = RectangularParams { dim, a, b, mu1, mu2: b + gap };
        let data = sample_rectangular(&p, 101, seed).unwrap();
        prop_assert_eq!(data.class_counts(), vec![50, 51]);
        for (x, &l) in data.rows().zip(data.labels()) {
            let s = if l == 1 { 1.0 } else { -1.0 };
            prop_assert!((x[0] - s * mu1).abs() <= a);
            prop_assert!((x[1] - s * p.mu2).abs() <= b);
        }
        prop_assert_eq!(sample_rectangular(&p, 101, seed).unwrap(), data);
    }

    #[test]
    fn clipped_clone_samples_respect_bounds(lo in -2.0f64..0.0, width in 0.01f64..3.0, seed in any::<u64>()) {
        let data = non_gaussian(seed, 60, 3, false);
        let hi = lo + width;
        for mode in [CloneMode::Isotropic, CloneMode::Full] {
            let clone = fit_gaussian_clone(&data, mode, &Grouping::identity(2), Some((lo, hi))).unwrap();
            let sample = sample_clone(&clone, 50, seed).unwrap();
            let (min, max) = sample.inputs().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            prop_assert!(min >= lo && max <= hi);
        }
    }

    #[test]
    fn cifar_records_round_trip(records in prop::collection::vec((0u8..10, prop::collection::vec(any::<u8>(), 3072)), 1..5)) {
        let bytes: Vec<u8> = records.iter().flat_map(|(l, px)| std::iter::once(*l).chain(px.iter().copied())).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.bin");
        std::fs::write(&path, &bytes).unwrap();
        let data = load_cifar_binary(&[&path], false).unwrap();
        prop_assert_eq!(to_cifar_bytes(&data).unwrap(), bytes);
    }

    #[test]
    fn classifiers_are_scale_invariant(scale in prop_oneof![1e-3f64..1.0, 1.0f64..1e3], seed in 0u64..1000) {
        let data = sample_rectangular(&RectangularParams::default(), 400, seed).unwrap();
        let scaled = data.affine(0.0, scale);
        let g = Grouping::identity(2);
        let (s, t) = (estimate_class_stats(&data, &g).unwrap(), estimate_class_stats(&scaled, &g).unwrap());
        let (la, lb) = (linear_discriminant(&s).unwrap(), linear_discriminant(&t).unwrap());
        prop_assert!(angle(naive_classifier(&s).unwrap().weight(), naive_classifier(&t).unwrap().weight()) < 1e-10);
        prop_assert!(angle(la.weight(), lb.weight()) < 1e-10);
        for mode in FourthOrderTensor::ALL {
            let a = correction_classifier(&data, &s, &la, mode, 0.05).unwrap();
            let b = correction_classifier(&scaled, &t, &lb, mode, 0.05).unwrap();
            prop_assert!(angle(a.weight(), b.weight()) < 1e-10);
            let a = correction_direction(&data, &s, &la, mode).unwrap();
            let b = correction_direction(&scaled, &t, &lb, mode).unwrap();
            prop_assert!(angle(a.weight(), b.weight()) < 1e-10);
        }
    }

    #[test]
    fn zeroed_higher_orders_equal_lower_order_flow(low in 0usize..3, extra in 1usize..3, seed in any::<u64>(), erf in any::<bool>()) {
        let high = (low + extra).min(3);
        prop_assume!(high > low);
        let act = if erf { Activation::ErfScaled } else { Activation::Tanh };
        let source = StatsSource::from_sample(&sample_rectangular(&RectangularParams::default(), 200, seed).unwrap()).unwrap();
        let mut rng = stream_rng(seed, stream::INIT);
        let w = DVector::from_fn(10, |_, _| rng.random_range(-2.0..2.0));
        let full = taylor_coefficients(&act, high).unwrap();
        let lower = taylor_coefficients(&act, low).unwrap();
        let a = gf_rhs(&w, &full.truncated(low), &source, high, TruncationScheme::Series).unwrap();
        let b = gf_rhs(&w, &lower, &source, low, TruncationScheme::Series).unwrap();
        prop_assert_eq!(a, b);
        // the polynomial scheme truncates σ itself, so σ' loses β̃ above `low` too
        let mut poly = full.clone();
        for k in low + 1..poly.beta.len() {
            poly.beta[k] = 0.0;
            poly.beta_tilde[k] = 0.0;
        }
        let a = gf_rhs(&w, &poly, &source, high, TruncationScheme::ActivationPolynomial).unwrap();
        let b = gf_rhs(&w, &lower, &source, low, TruncationScheme::ActivationPolynomial).unwrap();
        prop_assert_eq!(a, b);
    }
}
