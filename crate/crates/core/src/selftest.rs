//! Quick oracle checks runnable from the command line.

use std::fmt;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::closed_form::{scaled_upper_incomplete_gamma, theta_capacity};
use crate::error::Result;
use crate::matrix_rand::{gram_schmidt_complete, sample_haar_semiunitary, svd_right_basis, ComplexMatrix};
use crate::oracle::{
    scaled_incomplete_gamma_quadrature, secrecy_rate_covariance, siso_capacity_quadrature, theta_quadrature,
};
use crate::quantizer::{build_rvq_codebook, quantize, quantize_brute_force, Codebook, CodebookKind};
use crate::secrecy_mc::{mc_log_det_wishart, secrecy_rate_perfect, secrecy_rate_quantized, ChannelRealization};
use crate::system_model::SystemConfig;

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn check(name: &str, run: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    match run() {
        Ok((passed, detail)) => CheckResult {
            name: name.into(),
            passed,
            detail,
        },
        Err(e) => CheckResult {
            name: name.into(),
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn incomplete_gamma() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for a in [-12i64, -5, -1, 0, 1, 3] {
        for b in [0.05, 0.7, 1.0, 3.0, 25.0] {
            let exact = scaled_upper_incomplete_gamma(a, b)?;
            let quad = scaled_incomplete_gamma_quadrature(a as f64, b)?;
            worst = worst.max(((exact - quad) / quad).abs());
        }
    }
    Ok((worst < 1e-9, format!("max relative error {worst:.2e}")))
}

fn theta_vs_density() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for (m, n) in [(1, 1), (1, 3), (2, 2), (2, 4), (3, 5)] {
        for x in [0.1, 1.0, 10.0] {
            worst = worst.max((theta_capacity(m, n, x)? - theta_quadrature(m, n, x)?).abs());
        }
    }
    let siso = (theta_capacity(1, 1, 1.0)? - siso_capacity_quadrature(1.0)?).abs();
    worst = worst.max(siso);
    Ok((worst < 1e-8, format!("max absolute error {worst:.2e} bits")))
}

fn theta_vs_mc() -> Result<(bool, String)> {
    let (m, n, x) = (2, 4, 1.0);
    let est = mc_log_det_wishart(m, n, x, 20_000, 11)?;
    let closed = theta_capacity(m, n, x)?;
    let z = (est.mean - closed) / est.stderr;
    Ok((
        z.abs() < 4.0,
        format!("closed {closed:.5}, MC {:.5} ± {:.5}", est.mean, est.stderr),
    ))
}

fn rates_vs_covariance() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for (n_a, n_b, n_e, beta) in [(4, 2, 2, 1.0), (4, 2, 2, 3.0), (3, 1, 2, 0.5), (2, 1, 1, 2.0)] {
        let cfg = SystemConfig::new(n_a, n_b, n_e, 1.3, beta, 0.8, 4)?;
        let cb = build_rvq_codebook(n_a, n_b, 4, &mut rng)?;
        for _ in 0..5 {
            let ch = ChannelRealization::sample(&cfg, &mut rng);
            let basis = svd_right_basis(&ch.h)?;
            let mut full = ComplexMatrix::zeros(n_a, n_a);
            full.columns_mut(0, n_b).copy_from(basis.v_tilde.as_matrix());
            full.columns_mut(n_b, n_a - n_b).copy_from(basis.z.as_matrix());
            let oracle = secrecy_rate_covariance(&cfg, &ch.h, &ch.g, &full)?;
            worst = worst.max((secrecy_rate_perfect(&cfg, &ch)? - oracle).abs());

            let q = quantize(&cb, &basis.v_tilde)?;
            let v_hat = gram_schmidt_complete(&q.codeword)?;
            let oracle_q = secrecy_rate_covariance(&cfg, &ch.h, &ch.g, v_hat.as_matrix())?;
            worst = worst.max((secrecy_rate_quantized(&cfg, &ch, &cb)? - oracle_q).abs());
        }
    }
    Ok((worst < 1e-8, format!("max deviation {worst:.2e} bits")))
}

fn exact_quantization() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = SystemConfig::new(4, 2, 2, 1.0, 2.0, 1.0, 2)?;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let ch = ChannelRealization::sample(&cfg, &mut rng);
        let truth = svd_right_basis(&ch.h)?.v_tilde;
        let decoys: Vec<_> = (0..3).map(|_| sample_haar_semiunitary(4, 2, &mut rng)).collect();
        let mut entries = decoys;
        entries.insert(1, truth);
        let cb = Codebook::from_entries(CodebookKind::Rvq, 2, &entries)?;
        worst = worst.max((secrecy_rate_quantized(&cfg, &ch, &cb)? - secrecy_rate_perfect(&cfg, &ch)?).abs());
    }
    Ok((worst < 1e-8, format!("max |R_SQ − R_S| {worst:.2e}")))
}

fn search_vs_brute_force() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut mismatches = 0;
    for (n, p, bits) in [(2, 1, 6), (4, 2, 8), (8, 1, 7)] {
        let cb = build_rvq_codebook(n, p, bits, &mut rng)?;
        for _ in 0..20 {
            let v = sample_haar_semiunitary(n, p, &mut rng);
            if quantize(&cb, &v)?.index != quantize_brute_force(&cb, &v)?.index {
                mismatches += 1;
            }
        }
    }
    Ok((mismatches == 0, format!("{mismatches} index mismatches in 60 searches")))
}

fn unitary_completion() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for (n, p) in [(2, 1), (4, 2), (6, 1), (5, 4)] {
        let w = sample_haar_semiunitary(n, p, &mut rng);
        let u = gram_schmidt_complete(&w)?;
        let m = u.as_matrix();
        let defect = (m.adjoint() * m - ComplexMatrix::identity(n, n)).norm();
        let lead = (m.columns(0, p) - w.as_matrix()).map(|z: Complex64| z.norm()).max();
        worst = worst.max(defect).max(lead);
    }
    Ok((worst < 1e-12, format!("max defect {worst:.2e}")))
}

/// Runs every check.
pub fn run_selftest() -> Vec<CheckResult> {
    vec![
        check("incomplete_gamma_vs_quadrature", incomplete_gamma),
        check("theta_vs_eigenvalue_density", theta_vs_density),
        check("theta_vs_monte_carlo", theta_vs_mc),
        check("secrecy_rates_vs_joint_covariance", rates_vs_covariance),
        check("exact_quantization_identity", exact_quantization),
        check("codebook_search_vs_brute_force", search_vs_brute_force),
        check("unitary_completion", unitary_completion),
    ]
}
