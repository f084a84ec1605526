use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wiretap_core::closed_form::{omega_term, theta_capacity};
use wiretap_core::matrix_rand::{gram_schmidt_complete, sample_haar_semiunitary, svd_right_basis, ComplexMatrix};
use wiretap_core::oracle::secrecy_rate_covariance;
use wiretap_core::quantizer::{
    assemble_precoder, build_rvq_codebook, distortion_bound_eta, distortion_bound_mu, estimate_distortion, quantize,
};
use wiretap_core::secrecy_mc::{
    bob_signal_floor, mc_ergodic, mc_ergodic_many, mc_log_det_wishart, secrecy_rate_perfect, secrecy_rate_quantized,
    ChannelRealization, CodebookPolicy, Quantity,
};
use wiretap_core::system_model::SystemConfig;

const CONFIGS: [(usize, usize, usize, f64, f64, f64); 6] = [
    (4, 2, 2, 1.0, 1.0, 1.0),
    (4, 2, 2, 0.7, 3.0, 2.0),
    (4, 2, 1, 1.5, 0.5, 0.5),
    (3, 1, 2, 2.0, 2.0, 1.0),
    (2, 1, 1, 3.0, 2.0, 1.0),
    (6, 2, 3, 1.0, 0.0, 1.0),
];

fn full_basis(h: &ComplexMatrix, n_a: usize, n_b: usize) -> ComplexMatrix {
    let basis = svd_right_basis(h).unwrap();
    let mut m = ComplexMatrix::zeros(n_a, n_a);
    m.columns_mut(0, n_b).copy_from(basis.v_tilde.as_matrix());
    m.columns_mut(n_b, n_a - n_b).copy_from(basis.z.as_matrix());
    m
}

#[test]
fn perfect_rate_matches_joint_covariance_mi() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for &(n_a, n_b, n_e, alpha, beta, gamma) in &CONFIGS {
        let cfg = SystemConfig::new(n_a, n_b, n_e, alpha, beta, gamma, 0).unwrap();
        for _ in 0..10 {
            let ch = ChannelRealization::sample(&cfg, &mut rng);
            let oracle = secrecy_rate_covariance(&cfg, &ch.h, &ch.g, &full_basis(&ch.h, n_a, n_b)).unwrap();
            let rate = secrecy_rate_perfect(&cfg, &ch).unwrap();
            assert!((rate - oracle).abs() < 1e-8, "{rate} vs {oracle}");
        }
    }
}

#[test]
fn quantized_rate_matches_joint_covariance_mi() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for &(n_a, n_b, n_e, alpha, beta, gamma) in &CONFIGS {
        let cfg = SystemConfig::new(n_a, n_b, n_e, alpha, beta, gamma, 3).unwrap();
        let cb = build_rvq_codebook(n_a, n_b, 3, &mut rng).unwrap();
        for _ in 0..10 {
            let ch = ChannelRealization::sample(&cfg, &mut rng);
            let v = svd_right_basis(&ch.h).unwrap().v_tilde;
            let q = quantize(&cb, &v).unwrap();
            let full = gram_schmidt_complete(&q.codeword).unwrap();
            let oracle = secrecy_rate_covariance(&cfg, &ch.h, &ch.g, full.as_matrix()).unwrap();
            let rate = secrecy_rate_quantized(&cfg, &ch, &cb).unwrap();
            assert!((rate - oracle).abs() < 1e-8, "{rate} vs {oracle}");
        }
    }
}

#[test]
fn bob_signal_never_below_floor() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for &(n_a, n_b, n_e, alpha, beta, gamma) in &CONFIGS {
        let cfg = SystemConfig::new(n_a, n_b, n_e, alpha, beta, gamma, 2).unwrap();
        let cb = build_rvq_codebook(n_a, n_b, 2, &mut rng).unwrap();
        for _ in 0..20 {
            let ch = ChannelRealization::sample(&cfg, &mut rng);
            let v = svd_right_basis(&ch.h).unwrap().v_tilde;
            let pre = assemble_precoder(&quantize(&cb, &v).unwrap()).unwrap();
            let (num, floor) = bob_signal_floor(&cfg, &ch.h, &pre).unwrap();
            assert!(num >= floor - 1e-10, "{num} < {floor}");
        }
    }
}

#[test]
fn siso_log_det_matches_closed_form() {
    let est = mc_log_det_wishart(1, 1, 1.0, 20_000, 5).unwrap();
    assert!(est.agrees_with(0.860_347_382_270_886, 4.0), "{est:?}");
    let est = mc_log_det_wishart(2, 3, 4.0, 20_000, 6).unwrap();
    assert!(est.agrees_with(theta_capacity(2, 3, 4.0).unwrap(), 4.0), "{est:?}");
}

#[test]
fn eve_term_unchanged_by_quantized_precoder() {
    // G is independent of the precoder, so both Eve terms share a law.
    let cfg = SystemConfig::new(4, 2, 2, 1.0, 2.0, 1.0, 3).unwrap();
    let a = mc_ergodic(&cfg, Quantity::EveOmegaTerm, 20_000, 7, &CodebookPolicy::FreshPerTrial).unwrap();
    let b = mc_ergodic(
        &cfg,
        Quantity::EveOmegaTermQuantized,
        20_000,
        8,
        &CodebookPolicy::FreshPerTrial,
    )
    .unwrap();
    let z = (a.mean - b.mean) / a.stderr.hypot(b.stderr);
    assert!(z.abs() < 4.0, "{a:?} vs {b:?}");
    let closed = omega_term(&cfg).unwrap();
    assert!(a.agrees_with(closed, 4.0), "{a:?} vs {closed}");
}

#[test]
fn stderr_halves_when_trials_quadruple() {
    let cfg = SystemConfig::new(4, 2, 2, 1.0, 1.0, 1.0, 4).unwrap();
    let small = mc_ergodic(&cfg, Quantity::RateLoss, 4_000, 9, &CodebookPolicy::FreshPerTrial).unwrap();
    let large = mc_ergodic(&cfg, Quantity::RateLoss, 16_000, 10, &CodebookPolicy::FreshPerTrial).unwrap();
    let ratio = small.stderr / large.stderr;
    assert!((ratio - 2.0).abs() < 0.4, "ratio {ratio}");
}

#[test]
fn shared_draws_make_loss_the_difference_of_rates() {
    let cfg = SystemConfig::new(4, 2, 2, 1.0, 1.0, 1.0, 4).unwrap();
    let q = [Quantity::RatePerfect, Quantity::RateQuantized, Quantity::RateLoss];
    let est = mc_ergodic_many(&cfg, &q, 2_000, 11, &CodebookPolicy::FreshPerTrial).unwrap();
    assert!((est[0].mean - est[1].mean - est[2].mean).abs() < 1e-10);
    assert!(est[2].mean > 0.0);
    // Pairing shrinks the spread well below that of either rate.
    assert!(est[2].stderr < est[0].stderr);
}

#[test]
fn fixed_and_fresh_codebooks_agree_on_average() {
    let cfg = SystemConfig::new(2, 1, 1, 1.0, 2.0, 1.0, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cb = Arc::new(build_rvq_codebook(2, 1, 6, &mut rng).unwrap());
    let fresh = mc_ergodic(&cfg, Quantity::RateLoss, 20_000, 13, &CodebookPolicy::FreshPerTrial).unwrap();
    let fixed = mc_ergodic(&cfg, Quantity::RateLoss, 20_000, 14, &CodebookPolicy::Fixed(cb)).unwrap();
    let z = (fresh.mean - fixed.mean) / fresh.stderr.hypot(fixed.stderr);
    // A single random codebook is itself one draw, so allow a wider band.
    assert!(z.abs() < 6.0, "{fresh:?} vs {fixed:?}");
}

#[test]
fn null_leakage_shrinks_with_feedback() {
    let mut prev = f64::INFINITY;
    for bits in [0, 2, 4, 6, 8] {
        let cfg = SystemConfig::new(2, 1, 1, 1.0, 1.0, 1.0, bits).unwrap();
        let est = mc_ergodic(&cfg, Quantity::NullLeakage, 4_000, 15, &CodebookPolicy::FreshPerTrial).unwrap();
        assert!(est.mean < prev, "B={bits}: {} !< {prev}", est.mean);
        prev = est.mean;
    }
}

#[test]
fn distortion_lies_between_bounds() {
    for (n, p, bits) in [(2, 1, 4), (4, 2, 6)] {
        let k = 2f64.powi(bits as i32);
        let est = estimate_distortion(n, p, bits, 4_000, 16).unwrap();
        let mu = distortion_bound_mu(n, p, k).unwrap();
        let eta = distortion_bound_eta(n, p, k, 0.5).unwrap();
        assert!(mu <= est.mean + 3.0 * est.stderr, "{mu} > {est:?}");
        assert!(est.mean - 3.0 * est.stderr <= eta, "{est:?} > {eta}");
    }
}

#[test]
fn haar_first_entry_follows_beta_law() {
    // |v_1|² of a uniform unit vector in C^4 has CDF 1 − (1 − x)³.
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 10_000;
    let mut xs: Vec<f64> = (0..n)
        .map(|_| sample_haar_semiunitary(4, 1, &mut rng).as_matrix()[(0, 0)].norm_sqr())
        .collect();
    xs.sort_by(f64::total_cmp);
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = 1.0 - (1.0 - x).powi(3);
            (cdf - i as f64 / n as f64)
                .abs()
                .max(((i + 1) as f64 / n as f64 - cdf).abs())
        })
        .fold(0.0, f64::max);
    // 1% critical value.
    assert!(d < 1.63 / (n as f64).sqrt(), "KS statistic {d}");
}

#[test]
fn estimates_do_not_depend_on_pool_size() {
    let cfg = SystemConfig::new(4, 2, 2, 1.0, 2.0, 1.0, 5).unwrap();
    let q = [Quantity::RateLoss, Quantity::RateQuantizedClipped];
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mc_ergodic_many(&cfg, &q, 3_000, 18, &CodebookPolicy::FreshPerTrial).unwrap())
    };
    let one = run(1);
    for t in [2, 8] {
        let other = run(t);
        for (a, b) in one.iter().zip(&other) {
            assert_eq!(a.mean.to_bits(), b.mean.to_bits());
            assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
        }
    }
}
