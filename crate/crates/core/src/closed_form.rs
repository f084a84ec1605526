//! Analytic quantities: the Wishart ergodic-capacity function Θ and its
//! incomplete-gamma machinery, the rate-loss bounds, the large-system
//! asymptote, the Ω determinant formula and the capacity bounds built on it.
//!
//! Internal evaluation is in nats; every public rate is returned in bits.

use std::f64::consts::LOG2_E;

use log::warn;
use nalgebra::DMatrix;
use statrs::function::factorial::{binomial, factorial};

use crate::error::{Error, Result};
use crate::quantizer::{distortion_bound_eta, DEFAULT_ZETA};
use crate::system_model::{derive_dims, SystemConfig};

/// Euler–Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
/// Half-width of the band around β = 1 routed to the Θ branch of Ω.
pub const BETA_ONE_BAND: f64 = 1e-9;
/// Condition number of `R^(k)` above which a warning is logged.
pub const CONDITION_WARN: f64 = 1e12;

const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;
const CF_MAX_ITER: usize = 100_000;

/// Modified Lentz evaluation of `e^b b^(−a) Γ(a, b)` for `b > 0`; converges
/// quickly once `b > a + 1`.
fn gamma_cf(a: f64, b: f64) -> Result<f64> {
    let mut bb = b + 1.0 - a;
    let mut c = 1.0 / CF_TINY;
    let mut d = 1.0 / bb;
    let mut h = d;
    for i in 1..CF_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        bb += 2.0;
        d = an * d + bb;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = bb + an / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            return Ok(h);
        }
    }
    Err(Error::NonFinite(format!(
        "incomplete gamma continued fraction did not converge (a={a}, b={b})"
    )))
}

/// Exponential integral `E₁(x)` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument(format!("E1 needs a finite x > 0, got {x}")));
    }
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs().max(1e-300) {
                break;
            }
        }
        Ok(-EULER_GAMMA - x.ln() - sum)
    } else {
        Ok((-x).exp() * gamma_cf(0.0, x)?)
    }
}

/// `eˣ E₁(x)`, finite for all `x > 0`.
pub fn scaled_exp_integral_e1(x: f64) -> Result<f64> {
    if x > 1.0 && x.is_finite() {
        gamma_cf(0.0, x)
    } else {
        Ok(x.exp() * exp_integral_e1(x)?)
    }
}

/// `T_j(b) = b^j e^b Γ(−j, b)` for `j = 0..=j_max`.
///
/// For `b ≤ 1` the values follow from the recurrence
/// `T_j = (1 − b·T_{j−1}) / j` seeded with `T_0 = e^b E₁(b)`, which damps
/// rounding error by `b/j` per step. For `b > 1` the same recurrence loses
/// digits to cancellation, so each `T_j` comes from the continued fraction.
pub fn normalized_gamma_tail(j_max: usize, b: f64) -> Result<Vec<f64>> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "incomplete gamma needs a finite b > 0, got {b}"
        )));
    }
    let mut t = Vec::with_capacity(j_max + 1);
    if b <= 1.0 {
        t.push(scaled_exp_integral_e1(b)?);
        for j in 1..=j_max {
            let prev = t[j - 1];
            t.push((1.0 - b * prev) / j as f64);
        }
    } else {
        for j in 0..=j_max {
            t.push(gamma_cf(-(j as f64), b)?);
        }
    }
    Ok(t)
}

/// `e^b Γ(a, b)` for integer `a`.
pub fn scaled_upper_incomplete_gamma(a: i64, b: f64) -> Result<f64> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "incomplete gamma needs a finite b > 0, got {b}"
        )));
    }
    if a >= 1 {
        // (a−1)! Σ_{k<a} b^k / k!
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..a {
            term *= b / k as f64;
            sum += term;
        }
        Ok(factorial((a - 1) as u64) * sum)
    } else {
        let j = (-a) as usize;
        let t = normalized_gamma_tail(j, b)?;
        Ok(t[j] * (a as f64 * b.ln()).exp())
    }
}

/// Upper incomplete gamma `Γ(a, b) = ∫_b^∞ x^(a−1) e^(−x) dx` for integer `a`.
pub fn upper_incomplete_gamma(a: i64, b: f64) -> Result<f64> {
    if a >= 1 {
        return Ok(scaled_upper_incomplete_gamma(a, b)? * (-b).exp());
    }
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "incomplete gamma needs a finite b > 0, got {b}"
        )));
    }
    let j = (-a) as usize;
    let t = normalized_gamma_tail(j, b)?;
    Ok(t[j] * (a as f64 * b.ln() - b).exp())
}

fn factorial_f(n: usize) -> f64 {
    factorial(n as u64)
}

/// `E[ln det(I_m + x·W)]` in nats for `W = HHᴴ`, `H` an `m × n` standard
/// complex Gaussian matrix.
fn theta_nats(m: usize, n: usize, x: f64) -> Result<f64> {
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "theta needs 1 <= m <= n, got m={m}, n={n}"
        )));
    }
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument(format!("theta needs a finite x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let d = n - m;
    // e^{1/x} x^{−j} Γ(−j, 1/x) = T_j(1/x); partial sums over j.
    let t = normalized_gamma_tail(d + 2 * m, 1.0 / x)?;
    let mut partial = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    for v in &t {
        acc += v;
        partial.push(acc);
    }
    let mut total = 0.0;
    for k in 0..m {
        for l in 0..=k {
            let outer = factorial_f(2 * l) * binomial((2 * (k - l)) as u64, (k - l) as u64)
                / (factorial_f(l) * factorial_f(d + l));
            for i in 0..=(2 * l) {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let coef = sign * outer * factorial_f(d + i) / (2f64.powi((2 * k - i) as i32) * factorial_f(i))
                    * binomial((2 * (l + d)) as u64, (2 * l - i) as u64);
                total += coef * partial[d + i];
            }
        }
    }
    Ok(total)
}

/// Θ(m, n, x): ergodic `E[log₂ det(I_m + x·HHᴴ)]` for an `m × n` standard
/// complex Gaussian `H`, in bits. Requires `m ≤ n`; `x = 0` gives 0.
pub fn theta_capacity(m: usize, n: usize, x: f64) -> Result<f64> {
    Ok(theta_nats(m, n, x)? * LOG2_E)
}

/// Rate-loss upper bound `UB` with the default ζ.
pub fn loss_upper_bound_theorem2(cfg: &SystemConfig) -> Result<f64> {
    loss_upper_bound_theorem2_with_zeta(cfg, DEFAULT_ZETA)
}

/// `Θ(N_B,N_A,αγ) − Θ(N_B,N_A,θ_min) + Θ(N_B,N_A,αβγ·η/N_B)` in bits.
pub fn loss_upper_bound_theorem2_with_zeta(cfg: &SystemConfig, zeta: f64) -> Result<f64> {
    let (n_a, n_b) = (cfg.n_a(), cfg.n_b());
    let dims = derive_dims(cfg);
    let eta = distortion_bound_eta(n_a, n_b, cfg.codebook_size(), zeta)?;
    let snr = cfg.alpha() * cfg.gamma();
    let leak = cfg.alpha() * cfg.beta() * cfg.gamma() * eta / n_b as f64;
    Ok(theta_capacity(n_b, n_a, snr)? - theta_capacity(n_b, n_a, dims.theta_min)? + theta_capacity(n_b, n_a, leak)?)
}

/// Earlier heuristic rate-loss bound evaluated at distortion `d_value`.
pub fn loss_upper_bound_heuristic(cfg: &SystemConfig, d_value: f64) -> Result<f64> {
    let (n_a, n_b) = (cfg.n_a() as f64, cfg.n_b() as f64);
    if !(d_value >= 0.0 && d_value < n_b) {
        return Err(Error::InvalidArgument(format!(
            "distortion {d_value} must lie in [0, {n_b})"
        )));
    }
    let (a, b, g) = (cfg.alpha(), cfg.beta(), cfg.gamma());
    let first = n_b * ((n_b + a * b * g * n_a * d_value) / (n_b - d_value)).log2();
    let second = n_b * (1.0 + 1.0 / (a * g * (n_a - n_b))).log2();
    Ok(first + second)
}

/// Large-system rate loss for single-antenna Bob and Eve at total power
/// `P`, AN ratio β and feedback bits per transmit antenna `B̄`.
pub fn asymptotic_loss(p_total: f64, beta: f64, b_bar: f64) -> Result<f64> {
    if !(p_total > 0.0) || !p_total.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "p_total must be positive, got {p_total}"
        )));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    if !(b_bar >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "b_bar must be nonnegative, got {b_bar}"
        )));
    }
    let q = 2f64.powf(-b_bar);
    Ok((1.0 + p_total / beta).log2() + (1.0 + q * p_total).log2()
        - (1.0 + p_total + (1.0 - beta) / beta * (1.0 - q) * p_total).log2())
}

/// The two distinct eigenvalues of `diag(1/θ_i)` with their multiplicities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigStructure {
    pub mu1: f64,
    pub mu2: f64,
    pub m1: usize,
    pub m2: usize,
}

impl EigStructure {
    pub fn new(cfg: &SystemConfig) -> Result<Self> {
        let (a, b) = (cfg.alpha(), cfg.beta());
        if b == 0.0 {
            return Err(Error::InvalidArgument(
                "no artificial noise: 1/(αβ) is unbounded".into(),
            ));
        }
        if (b - 1.0).abs() < BETA_ONE_BAND {
            return Err(Error::InvalidArgument(format!(
                "beta = {b} is within {BETA_ONE_BAND:e} of 1"
            )));
        }
        let info = (1.0 / a, cfg.n_b());
        let noise = (1.0 / (a * b), cfg.n_a() - cfg.n_b());
        let (first, second) = if info.0 > noise.0 { (info, noise) } else { (noise, info) };
        Ok(Self {
            mu1: first.0,
            mu2: second.0,
            m1: first.1,
            m2: second.1,
        })
    }
}

/// Which formula produced Ω.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmegaBranch {
    /// β = 1 (within the guard band): Θ(N̂_min, N̂_max, α).
    Theta,
    /// β = 0: only the information streams reach Eve.
    NoNoise,
    /// Sum of determinants.
    Determinant,
}

/// Ω with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaEval {
    /// Bits.
    pub value: f64,
    pub branch: OmegaBranch,
    /// Some first-branch entry hit a negative falling-factorial order and
    /// was set to zero.
    pub falling_factorial_zeroed: bool,
    /// Largest condition number over the `R^(k)`; 1 off the determinant path.
    pub max_condition: f64,
}

/// `Γ_k(n) = Π_{i=1}^k (n−i)!`.
fn multi_factorial(k: usize, n: usize) -> f64 {
    (1..=k).map(|i| factorial_f(n - i)).product()
}

/// Ω by the determinant formula; fails inside the β = 1 guard band and
/// for β = 0.
pub fn omega_determinant(cfg: &SystemConfig) -> Result<OmegaEval> {
    let eig = EigStructure::new(cfg)?;
    let n_a = cfg.n_a();
    let n_e = cfg.n_e();
    let dims = derive_dims(cfg);
    let nmin = dims.nhat_min;
    let mu = [eig.mu1, eig.mu2];
    let m = [eig.m1, eig.m2];

    let sign = if (n_e * (n_a - nmin)).is_multiple_of(2) {
        1.0
    } else {
        -1.0
    };
    let num = mu[0].powi((m[0] * n_e) as i32) * mu[1].powi((m[1] * n_e) as i32);
    let den = multi_factorial(nmin, n_e)
        * multi_factorial(m[0], m[0])
        * multi_factorial(m[1], m[1])
        * (mu[0] - mu[1]).powi((m[0] * m[1]) as i32);
    let k_const = sign * num / den;

    // Row data: e_i (zero-based group), d_i.
    let rows: Vec<(usize, usize)> = (1..=n_a)
        .map(|i| {
            let e = if i <= m[0] { 0 } else { 1 };
            let d = m[..=e].iter().sum::<usize>() - i;
            (e, d)
        })
        .collect();
    let max_phi = n_e - nmin + nmin - 1 + rows.iter().map(|r| r.1).max().unwrap_or(0);
    let tails = [
        normalized_gamma_tail(max_phi, mu[0])?,
        normalized_gamma_tail(max_phi, mu[1])?,
    ];

    let mut zeroed = false;
    let mut total = 0.0;
    let mut max_condition: f64 = 1.0;
    for k in 1..=nmin {
        let mut r = DMatrix::<f64>::zeros(n_a, n_a);
        for (i, &(e, d)) in rows.iter().enumerate() {
            let me = mu[e];
            let sgn = if d % 2 == 0 { 1.0 } else { -1.0 };
            for j in 1..=n_a {
                let phi = n_e - nmin + j - 1 + d;
                r[(i, j - 1)] = if j > nmin {
                    if n_a < j + d {
                        zeroed = true;
                        0.0
                    } else {
                        let p = n_a - j - d;
                        me.powi(p as i32) * factorial_f(n_a - j) / factorial_f(p)
                    }
                } else if j != k {
                    sgn * factorial_f(phi) / me.powi(phi as i32 + 1)
                } else {
                    // Σ_l e^μ Γ(l−φ, μ)/μ^{l+1} = μ^{−(φ+1)} Σ_{s≤φ} T_s(μ).
                    let s: f64 = tails[e][..=phi].iter().sum();
                    sgn * factorial_f(phi) * s / me.powi(phi as i32 + 1)
                };
            }
        }
        let sv = r.clone().singular_values();
        let smax = sv.max();
        let smin = sv.min();
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if cond > CONDITION_WARN {
            warn!("R^({k}) has condition number {cond:.3e}; the Omega determinant may be inaccurate");
        }
        max_condition = max_condition.max(cond);
        let det = r.lu().determinant();
        if !det.is_finite() {
            return Err(Error::NonFinite(format!("det R^({k}) = {det}")));
        }
        total += det;
    }
    let value = k_const * total * LOG2_E;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("Omega = {value}")));
    }
    Ok(OmegaEval {
        value,
        branch: OmegaBranch::Determinant,
        falling_factorial_zeroed: zeroed,
        max_condition,
    })
}

/// Ω = E log₂ det(I + α(GṼ)(GṼ)ᴴ + αβ(GZ)(GZ)ᴴ) with diagnostics.
pub fn omega_term_detailed(cfg: &SystemConfig) -> Result<OmegaEval> {
    let dims = derive_dims(cfg);
    let theta_only = |m: usize, n: usize, branch| -> Result<OmegaEval> {
        Ok(OmegaEval {
            value: theta_capacity(m, n, cfg.alpha())?,
            branch,
            falling_factorial_zeroed: false,
            max_condition: 1.0,
        })
    };
    if cfg.beta() == 0.0 {
        let (n_b, n_e) = (cfg.n_b(), cfg.n_e());
        return theta_only(n_b.min(n_e), n_b.max(n_e), OmegaBranch::NoNoise);
    }
    if (cfg.beta() - 1.0).abs() < BETA_ONE_BAND {
        return theta_only(dims.nhat_min, dims.nhat_max, OmegaBranch::Theta);
    }
    omega_determinant(cfg)
}

/// Ω in bits.
pub fn omega_term(cfg: &SystemConfig) -> Result<f64> {
    Ok(omega_term_detailed(cfg)?.value)
}

/// Closed-form ergodic secrecy rate with perfect CSI:
/// `Θ(N_B,N_A,αγ) + Θ(N_min,N_max,αβ) − Ω`.
pub fn ergodic_secrecy_rate_closed(cfg: &SystemConfig) -> Result<f64> {
    let dims = derive_dims(cfg);
    let a = cfg.alpha();
    Ok(
        theta_capacity(cfg.n_b(), cfg.n_a(), a * cfg.gamma())?
            + theta_capacity(dims.n_min, dims.n_max, a * cfg.beta())?
            - omega_term(cfg)?,
    )
}

/// Lower bound on the ergodic secrecy capacity with quantized CSI, default ζ.
pub fn capacity_lower_bound(cfg: &SystemConfig) -> Result<f64> {
    capacity_lower_bound_with_zeta(cfg, DEFAULT_ZETA)
}

/// `Θ(N_min,N_max,αβ) − Ω + Θ(N_B,N_A,θ_min) − Θ(N_B,N_A,αβγ·η/N_B)`.
pub fn capacity_lower_bound_with_zeta(cfg: &SystemConfig, zeta: f64) -> Result<f64> {
    let dims = derive_dims(cfg);
    let (n_a, n_b) = (cfg.n_a(), cfg.n_b());
    let (a, b, g) = (cfg.alpha(), cfg.beta(), cfg.gamma());
    let eta = distortion_bound_eta(n_a, n_b, cfg.codebook_size(), zeta)?;
    Ok(
        theta_capacity(dims.n_min, dims.n_max, a * b)? - omega_term(cfg)? + theta_capacity(n_b, n_a, dims.theta_min)?
            - theta_capacity(n_b, n_a, a * b * g * eta / n_b as f64)?,
    )
}

/// Bob's ergodic capacity `Θ(N_B, N_A, αγ)`, a ceiling on any secrecy rate.
pub fn bob_capacity(cfg: &SystemConfig) -> Result<f64> {
    theta_capacity(cfg.n_b(), cfg.n_a(), cfg.alpha() * cfg.gamma())
}

/// Every closed-form quantity for one configuration, in bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSet {
    pub ub_theorem2: f64,
    /// `None` when the distortion fed to the heuristic is not below `N_B`.
    pub ub_heuristic: Option<f64>,
    pub ergodic_rs_closed: f64,
    pub omega: f64,
    pub c_lb_q: f64,
    pub c_bob: f64,
}

/// Evaluates the [`BoundSet`]; the heuristic uses `d_value`, or η when
/// `None`.
pub fn bound_set(cfg: &SystemConfig, zeta: f64, d_value: Option<f64>) -> Result<BoundSet> {
    let d = match d_value {
        Some(d) => d,
        None => distortion_bound_eta(cfg.n_a(), cfg.n_b(), cfg.codebook_size(), zeta)?,
    };
    let ub_heuristic = if d < cfg.n_b() as f64 {
        Some(loss_upper_bound_heuristic(cfg, d)?)
    } else {
        None
    };
    Ok(BoundSet {
        ub_theorem2: loss_upper_bound_theorem2_with_zeta(cfg, zeta)?,
        ub_heuristic,
        ergodic_rs_closed: ergodic_secrecy_rate_closed(cfg)?,
        omega: omega_term(cfg)?,
        c_lb_q: capacity_lower_bound_with_zeta(cfg, zeta)?,
        c_bob: bob_capacity(cfg)?,
    })
}
