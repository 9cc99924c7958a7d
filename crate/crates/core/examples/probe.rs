use dsb::analytic::*;
use dsb::data::*;
use dsb::gflow::*;
use dsb::stats::*;
use dsb::rng::*;
use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
fn main() {
    let p = RectangularParams::default();
    let n: usize = std::env::args().nth(1).unwrap().parse().unwrap();
    let frozen = sample_rectangular(&p, n, 7).unwrap();
    let eval = sample_rectangular(&p, 2000, 8).unwrap();
    let src = StatsSource::from_sample(&frozen).unwrap();
    let e = taylor_coefficients(&Activation::Tanh, 3).unwrap();
    let stats = estimate_class_stats(&frozen, &Grouping::identity(2)).unwrap();
    let lda = linear_discriminant(&stats).unwrap();
    let refs = References {
        naive: Some(naive_classifier(&stats).unwrap().weight().clone()),
        lda: Some(lda.weight().clone()),
        correction: Some(correction_direction(&frozen, &stats, &lda, FourthOrderTensor::WithinCumulant).unwrap().weight().clone()),
        oracle: None,
    };
    for seed in 0..3 {
        let mut rng = stream_rng(seed, stream::INIT);
        let w0 = DVector::from_fn(10, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal));
        let gc = GfConfig { order: 3, scheme: TruncationScheme::ActivationPolynomial, eta: 0.1, steps: 20000, checkpoints_per_decade: 20 };
        let t = integrate_gf(&w0, &e, &src, &gc, &eval, &refs).unwrap();
        let am = |f: &dyn Fn(&GfCheckpoint) -> f64| t.checkpoints.iter().min_by(|a, b| f(a).partial_cmp(&f(b)).unwrap()).map(|c| (c.step, f(c))).unwrap();
        println!("{:?} {:?} {:?}", am(&|c| c.theta_naive), am(&|c| c.theta_lda), am(&|c| c.theta_corr));
    }
}
