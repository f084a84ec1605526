//! Independent reference computations used by the test suites and by
//! `selftest`: adaptive quadrature, the Laguerre eigenvalue-density form of
//! the Wishart ergodic capacity, and mutual information from explicit joint
//! covariance matrices.

use std::f64::consts::LOG2_E;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrix_rand::ComplexMatrix;
use crate::system_model::{SystemConfig, SIGMA_B_SQ};

// Gauss–Kronrod 7/15 nodes and weights on [−1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (j, (&x, &w)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let s = f(c - h * x) + f(c + h * x);
        kron += w * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    let mut intervals = vec![(a, b)];
    let mut total = 0.0;
    let mut pending: Vec<(f64, f64, f64, f64)> = Vec::new();
    for _ in 0..2000 {
        pending.clear();
        for &(lo, hi) in &intervals {
            let (v, e) = gk15(&f, lo, hi);
            pending.push((lo, hi, v, e));
        }
        let estimate: f64 = pending.iter().map(|p| p.2).sum::<f64>() + total;
        let tol = rel_tol * estimate.abs().max(1e-300);
        let per = tol / (pending.len() as f64).max(1.0);
        intervals.clear();
        for &(lo, hi, v, e) in &pending {
            if e <= per || (hi - lo) < 1e-15 * (1.0 + lo.abs()) {
                total += v;
            } else {
                let mid = 0.5 * (lo + hi);
                intervals.push((lo, mid));
                intervals.push((mid, hi));
            }
        }
        if intervals.is_empty() {
            if !total.is_finite() {
                return Err(Error::NonFinite("quadrature result".into()));
            }
            return Ok(total);
        }
    }
    Err(Error::NonFinite("quadrature did not converge".into()))
}

/// `∫_0^∞ f(t) dt` through the map `t = u / (1 − u)`.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, rel_tol: f64) -> Result<f64> {
    integrate(
        |u| {
            if u >= 1.0 {
                return 0.0;
            }
            let t = u / (1.0 - u);
            let v = f(t) / ((1.0 - u) * (1.0 - u));
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        rel_tol,
    )
}

/// `e^b Γ(a, b) = b^a ∫_0^∞ (1+s)^(a−1) e^(−bs) ds` by quadrature.
pub fn scaled_incomplete_gamma_quadrature(a: f64, b: f64) -> Result<f64> {
    let integral = integrate_half_line(|s| ((a - 1.0) * s.ln_1p() - b * s).exp(), 1e-14)?;
    Ok(b.powf(a) * integral)
}

/// `∫_0^∞ log₂(1 + x·t) e^(−t) dt`, the single-antenna ergodic capacity.
pub fn siso_capacity_quadrature(x: f64) -> Result<f64> {
    integrate_half_line(|t| (x * t).ln_1p() * (-t).exp(), 1e-14).map(|v| v * LOG2_E)
}

/// Generalised Laguerre polynomial `L_k^(d)(x)`.
fn laguerre(k: usize, d: usize, x: f64) -> f64 {
    let d = d as f64;
    let (mut prev, mut cur) = (1.0, 1.0 + d - x);
    if k == 0 {
        return prev;
    }
    for j in 1..k {
        let j = j as f64;
        let next = ((2.0 * j + 1.0 + d - x) * cur - (j + d) * prev) / (j + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Wishart ergodic capacity from the unordered eigenvalue density:
/// `∫ log₂(1+xλ) Σ_k k!/(k+d)! [L_k^(d)(λ)]² λ^d e^(−λ) dλ`, `d = n − m`.
pub fn theta_quadrature(m: usize, n: usize, x: f64) -> Result<f64> {
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!("need 1 <= m <= n, got m={m}, n={n}")));
    }
    let d = n - m;
    let ln_ratio: Vec<f64> = (0..m).map(|k| (1..=d).map(|i| -((k + i) as f64).ln()).sum()).collect();
    let density = |l: f64| -> f64 {
        let s: f64 = (0..m).map(|k| ln_ratio[k].exp() * laguerre(k, d, l).powi(2)).sum();
        s * (d as f64 * l.ln() - l).exp()
    };
    integrate_half_line(|l| (x * l).ln_1p() * density(l), 1e-13).map(|v| v * LOG2_E)
}

fn ln_det_hpd(m: &ComplexMatrix) -> Result<f64> {
    let det = m.clone().lu().determinant();
    if !(det.re > 0.0) || det.im.abs() > 1e-8 * det.re {
        return Err(Error::NotPositiveSemidefinite(format!("covariance determinant {det}")));
    }
    Ok(det.re.ln())
}

/// `I(u; r)` in bits for `r = A·u + noise`, from the joint covariance of
/// `(u, r)`. `signal_cov` is `Cov(u)`, `other_cov` the covariance of
/// everything else in `r`.
fn mi_from_joint(a: &ComplexMatrix, signal_cov: &ComplexMatrix, other_cov: &ComplexMatrix) -> Result<f64> {
    let (nr, nu) = a.shape();
    let cross = a * signal_cov;
    let r_cov = &cross * a.adjoint() + other_cov;
    let mut joint = ComplexMatrix::zeros(nu + nr, nu + nr);
    joint.view_mut((0, 0), (nu, nu)).copy_from(signal_cov);
    joint.view_mut((nu, nu), (nr, nr)).copy_from(&r_cov);
    joint.view_mut((nu, 0), (nr, nu)).copy_from(&cross);
    joint.view_mut((0, nu), (nu, nr)).copy_from(&cross.adjoint());
    Ok((ln_det_hpd(signal_cov)? + ln_det_hpd(&r_cov)? - ln_det_hpd(&joint)?) * LOG2_E)
}

/// Secrecy rate `I(u; y) − I(u; z)` of the transmission `x = P·[u; v]`,
/// `y = Hx + n_B`, `z = Gx + n_E`, computed from joint covariances. The
/// artificial noise `v` is treated as unknown Gaussian noise at both receivers.
pub fn secrecy_rate_covariance(
    cfg: &SystemConfig,
    h: &ComplexMatrix,
    g: &ComplexMatrix,
    precoder: &ComplexMatrix,
) -> Result<f64> {
    let (n_a, n_b) = (cfg.n_a(), cfg.n_b());
    if precoder.shape() != (n_a, n_a) || h.shape() != (n_b, n_a) || g.shape() != (cfg.n_e(), n_a) {
        return Err(Error::ShapeMismatch(
            "oracle inputs do not match the configuration".into(),
        ));
    }
    let c = |x: f64| Complex64::new(x, 0.0);
    let su = ComplexMatrix::identity(n_b, n_b) * c(cfg.sigma_u_sq());
    let info = precoder.columns(0, n_b).into_owned();
    let an = precoder.columns(n_b, n_a - n_b).into_owned();
    let sv = cfg.sigma_v_sq();

    let other = |ch: &ComplexMatrix, noise: f64| -> ComplexMatrix {
        let hz = ch * &an;
        &hz * hz.adjoint() * c(sv) + ComplexMatrix::identity(ch.nrows(), ch.nrows()) * c(noise)
    };
    let bob = mi_from_joint(&(h * &info), &su, &other(h, SIGMA_B_SQ))?;
    let eve = mi_from_joint(&(g * &info), &su, &other(g, cfg.sigma_e_sq()))?;
    Ok(bob - eve)
}
