//! Instantaneous secrecy rates with perfect and quantized feedback, and
//! Monte Carlo estimation of their ergodic averages.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix_rand::{
    gram_schmidt_complete, log_det_eye_plus, sample_gaussian, scaled_gram, svd_right_basis, ComplexMatrix, SemiUnitary,
    SvdBasis,
};
use crate::montecarlo::{run_scalar, run_trials, MCEstimate};
use crate::quantizer::{assemble_precoder, quantize, quantize_fresh_rvq, Codebook, Precoder};
use crate::system_model::{derive_dims, SystemConfig};

/// One draw of Bob's channel `H` (`n_b × n_a`) and Eve's channel `G` (`n_e × n_a`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: ComplexMatrix,
    pub g: ComplexMatrix,
}

impl ChannelRealization {
    pub fn new(cfg: &SystemConfig, h: ComplexMatrix, g: ComplexMatrix) -> Result<Self> {
        if h.shape() != (cfg.n_b(), cfg.n_a()) || g.shape() != (cfg.n_e(), cfg.n_a()) {
            return Err(Error::ShapeMismatch(format!(
                "channels {:?} and {:?} do not match the configuration",
                h.shape(),
                g.shape()
            )));
        }
        if h.iter().chain(g.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("channel entry".into()));
        }
        Ok(Self { h, g })
    }

    /// Draws `H` then `G` with i.i.d. `CN(0, 1)` entries.
    pub fn sample<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Self {
        let h = sample_gaussian(cfg.n_b(), cfg.n_a(), rng);
        let g = sample_gaussian(cfg.n_e(), cfg.n_a(), rng);
        Self { h, g }
    }
}

/// How the feedback codebook is chosen in Monte Carlo runs.
#[derive(Debug, Clone)]
pub enum CodebookPolicy {
    /// A new RVQ codebook for every channel draw.
    FreshPerTrial,
    /// One codebook shared by all trials.
    Fixed(Arc<Codebook>),
    /// Feedback returns the true `Ṽ`, as if the codebook contained it.
    Exact,
}

impl CodebookPolicy {
    pub fn label(&self) -> String {
        match self {
            CodebookPolicy::FreshPerTrial => "fresh_per_trial".into(),
            CodebookPolicy::Fixed(cb) => format!("fixed_{}", cb.kind()),
            CodebookPolicy::Exact => "exact".into(),
        }
    }
}

/// Per-realization quantity averaged by [`mc_ergodic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantity {
    /// `R_S` with perfect feedback.
    RatePerfect,
    /// `R_S,Q` with quantized feedback.
    RateQuantized,
    /// `R_S − R_S,Q` on the same realization.
    RateLoss,
    /// `log₂|I + αγHHᴴ|`.
    BobCapacityTerm,
    /// `log₂|I + α(GṼ)(GṼ)ᴴ + αβ(GZ)(GZ)ᴴ|`.
    EveOmegaTerm,
    /// As [`Quantity::EveOmegaTerm`] with `(Ṽ_j, Ẑ)` in place of `(Ṽ, Z)`.
    EveOmegaTermQuantized,
    /// `‖HẐ‖_F`, the residual of Bob's channel on the noise directions.
    NullLeakage,
    /// `max(R_S, 0)`.
    RatePerfectClipped,
    /// `max(R_S,Q, 0)`.
    RateQuantizedClipped,
    /// `max(R_S, 0) − max(R_S,Q, 0)` on the same realization.
    RateLossClipped,
}

impl Quantity {
    pub const ALL: [Quantity; 10] = [
        Quantity::RatePerfect,
        Quantity::RateQuantized,
        Quantity::RateLoss,
        Quantity::BobCapacityTerm,
        Quantity::EveOmegaTerm,
        Quantity::EveOmegaTermQuantized,
        Quantity::NullLeakage,
        Quantity::RatePerfectClipped,
        Quantity::RateQuantizedClipped,
        Quantity::RateLossClipped,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::RatePerfect => "rate_perfect",
            Quantity::RateQuantized => "rate_quantized",
            Quantity::RateLoss => "rate_loss",
            Quantity::BobCapacityTerm => "bob_capacity_term",
            Quantity::EveOmegaTerm => "eve_omega_term",
            Quantity::EveOmegaTermQuantized => "eve_omega_term_quantized",
            Quantity::NullLeakage => "null_leakage",
            Quantity::RatePerfectClipped => "rate_perfect_clipped",
            Quantity::RateQuantizedClipped => "rate_quantized_clipped",
            Quantity::RateLossClipped => "rate_loss_clipped",
        }
    }

    fn needs_perfect(self) -> bool {
        matches!(
            self,
            Quantity::RatePerfect
                | Quantity::RateLoss
                | Quantity::EveOmegaTerm
                | Quantity::RatePerfectClipped
                | Quantity::RateLossClipped
        )
    }

    fn needs_quantized(self) -> bool {
        matches!(
            self,
            Quantity::RateQuantized
                | Quantity::RateLoss
                | Quantity::EveOmegaTermQuantized
                | Quantity::NullLeakage
                | Quantity::RateQuantizedClipped
                | Quantity::RateLossClipped
        )
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Quantity::ALL
            .iter()
            .copied()
            .find(|q| q.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown quantity '{s}'")))
    }
}

fn cx(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Eve-side log-determinants for a given split `[info | an]` of the precoder.
struct EveTerms {
    /// `log₂|I + α(G·info)(G·info)ᴴ + αβ(G·an)(G·an)ᴴ|`
    total: f64,
    /// `log₂|I + αβ(G·an)(G·an)ᴴ|`
    noise_only: f64,
}

/// Takes `G·info` and `G·an`.
fn eve_terms(cfg: &SystemConfig, g_info: &ComplexMatrix, g_an: &ComplexMatrix) -> Result<EveTerms> {
    let (a, b) = (cfg.alpha(), cfg.beta());
    let noise = scaled_gram(g_an, a * b);
    let total = scaled_gram(g_info, a) + &noise;
    Ok(EveTerms {
        total: log_det_eye_plus(&total)?,
        noise_only: log_det_eye_plus(&noise)?,
    })
}

fn bob_capacity_term(cfg: &SystemConfig, h: &ComplexMatrix) -> Result<f64> {
    log_det_eye_plus(&scaled_gram(h, cfg.alpha() * cfg.gamma()))
}

/// Bob's quantized-feedback term: `log₂|I + αγ(HṼ_j)(HṼ_j)ᴴ + αβγ(HẐ)(HẐ)ᴴ| − log₂|I + αβγ(HẐ)(HẐ)ᴴ|`.
fn bob_quantized_terms(cfg: &SystemConfig, h: &ComplexMatrix, pre: &Precoder) -> Result<(f64, f64)> {
    let (a, b, g) = (cfg.alpha(), cfg.beta(), cfg.gamma());
    let leak = scaled_gram(&(h * pre.an_block()), a * b * g);
    let signal = scaled_gram(&(h * pre.info_block()), a * g) + &leak;
    Ok((log_det_eye_plus(&signal)?, log_det_eye_plus(&leak)?))
}

fn rate_perfect_from(cfg: &SystemConfig, ch: &ChannelRealization, basis: &SvdBasis) -> Result<(f64, EveTerms)> {
    let bob = bob_capacity_term(cfg, &ch.h)?;
    let eve = eve_terms(
        cfg,
        &(&ch.g * basis.v_tilde.as_matrix()),
        &(&ch.g * basis.z.as_matrix()),
    )?;
    Ok((bob + eve.noise_only - eve.total, eve))
}

fn rate_quantized_from(cfg: &SystemConfig, ch: &ChannelRealization, pre: &Precoder) -> Result<(f64, EveTerms)> {
    let (bob_num, bob_den) = bob_quantized_terms(cfg, &ch.h, pre)?;
    let eve = eve_terms(cfg, &(&ch.g * pre.info_block()), &(&ch.g * pre.an_block()))?;
    Ok((bob_num - bob_den - (eve.total - eve.noise_only), eve))
}

/// Achievable secrecy rate with perfect feedback, in bits. May be negative.
pub fn secrecy_rate_perfect(cfg: &SystemConfig, ch: &ChannelRealization) -> Result<f64> {
    let basis = svd_right_basis(&ch.h)?;
    Ok(rate_perfect_from(cfg, ch, &basis)?.0)
}

/// Achievable secrecy rate when Alice precodes with the completion of the
/// codeword nearest to Bob's `Ṽ`. The artificial noise leaking into Bob's
/// channel is treated as noise.
pub fn secrecy_rate_quantized(cfg: &SystemConfig, ch: &ChannelRealization, codebook: &Codebook) -> Result<f64> {
    if (codebook.n_a(), codebook.n_b()) != (cfg.n_a(), cfg.n_b()) {
        return Err(Error::ShapeMismatch(
            "codebook shape does not match the configuration".into(),
        ));
    }
    let basis = svd_right_basis(&ch.h)?;
    let pre = assemble_precoder(&quantize(codebook, &basis.v_tilde)?)?;
    Ok(rate_quantized_from(cfg, ch, &pre)?.0)
}

/// Secrecy rate for an explicit precoder `[Ṽ_j | Ẑ]`.
pub fn secrecy_rate_with_precoder(cfg: &SystemConfig, ch: &ChannelRealization, pre: &Precoder) -> Result<f64> {
    Ok(rate_quantized_from(cfg, ch, pre)?.0)
}

fn feedback_precoder<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    v_tilde: &SemiUnitary,
    policy: &CodebookPolicy,
    rng: &mut R,
) -> Result<Precoder> {
    let q = match policy {
        CodebookPolicy::FreshPerTrial => quantize_fresh_rvq(cfg.n_a(), cfg.n_b(), cfg.feedback_bits(), v_tilde, rng)?,
        CodebookPolicy::Fixed(cb) => quantize(cb, v_tilde)?,
        CodebookPolicy::Exact => {
            return Precoder::from_unitary(gram_schmidt_complete(v_tilde)?, cfg.n_b());
        }
    };
    assemble_precoder(&q)
}

/// Evaluates every quantity in `quantities` on one fresh realization drawn
/// from `rng` (channel first, then any codebook).
pub fn evaluate_trial<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    quantities: &[Quantity],
    policy: &CodebookPolicy,
    rng: &mut R,
    out: &mut [f64],
) -> Result<()> {
    let ch = ChannelRealization::sample(cfg, rng);
    let need_p = quantities.iter().any(|q| q.needs_perfect());
    let need_q = quantities.iter().any(|q| q.needs_quantized());
    let basis = if need_p || need_q {
        Some(svd_right_basis(&ch.h)?)
    } else {
        None
    };

    let perfect = match (&basis, need_p) {
        (Some(b), true) => Some(rate_perfect_from(cfg, &ch, b)?),
        _ => None,
    };
    let quantized = match (&basis, need_q) {
        (Some(b), true) => {
            let pre = feedback_precoder(cfg, &b.v_tilde, policy, rng)?;
            let leak = (&ch.h * pre.an_block()).norm();
            let (rate, eve) = rate_quantized_from(cfg, &ch, &pre)?;
            Some((rate, eve, leak))
        }
        _ => None,
    };

    for (slot, q) in out.iter_mut().zip(quantities) {
        let p = || perfect.as_ref().expect("perfect-CSI terms computed");
        let qz = || quantized.as_ref().expect("quantized terms computed");
        *slot = match q {
            Quantity::RatePerfect => p().0,
            Quantity::RateQuantized => qz().0,
            Quantity::RateLoss => p().0 - qz().0,
            Quantity::BobCapacityTerm => bob_capacity_term(cfg, &ch.h)?,
            Quantity::EveOmegaTerm => p().1.total,
            Quantity::EveOmegaTermQuantized => qz().1.total,
            Quantity::NullLeakage => qz().2,
            Quantity::RatePerfectClipped => p().0.max(0.0),
            Quantity::RateQuantizedClipped => qz().0.max(0.0),
            Quantity::RateLossClipped => p().0.max(0.0) - qz().0.max(0.0),
        };
    }
    Ok(())
}

fn check_policy(cfg: &SystemConfig, policy: &CodebookPolicy) -> Result<()> {
    if let CodebookPolicy::Fixed(cb) = policy {
        if (cb.n_a(), cb.n_b()) != (cfg.n_a(), cfg.n_b()) {
            return Err(Error::ShapeMismatch(format!(
                "codebook is {}x{}, configuration needs {}x{}",
                cb.n_a(),
                cb.n_b(),
                cfg.n_a(),
                cfg.n_b()
            )));
        }
    }
    Ok(())
}

/// Ergodic averages of several quantities over the same channel draws.
pub fn mc_ergodic_many(
    cfg: &SystemConfig,
    quantities: &[Quantity],
    trials: u64,
    seed: u64,
    policy: &CodebookPolicy,
) -> Result<Vec<MCEstimate>> {
    check_policy(cfg, policy)?;
    run_trials(
        seed,
        trials,
        quantities.len(),
        || (),
        |_, rng, _, out| evaluate_trial(cfg, quantities, policy, rng, out),
    )
}

/// Ergodic average of one quantity.
pub fn mc_ergodic(
    cfg: &SystemConfig,
    quantity: Quantity,
    trials: u64,
    seed: u64,
    policy: &CodebookPolicy,
) -> Result<MCEstimate> {
    Ok(mc_ergodic_many(cfg, &[quantity], trials, seed, policy)?[0])
}

/// Monte Carlo `E[log₂|I_m + x·HHᴴ|]` for `m × n` standard Gaussian `H`.
pub fn mc_log_det_wishart(m: usize, n: usize, x: f64, trials: u64, seed: u64) -> Result<MCEstimate> {
    if m == 0 || n == 0 || !(x >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bad Wishart parameters m={m}, n={n}, x={x}"
        )));
    }
    run_scalar(seed, trials, |rng, _| {
        let h = sample_gaussian(m, n, rng);
        log_det_eye_plus(&(&h * h.adjoint() * cx(x)))
    })
}

/// `log₂|I + αγ(HṼ_j)(HṼ_j)ᴴ + αβγ(HẐ)(HẐ)ᴴ|` and `log₂|I + θ_min·HHᴴ|`
/// for one realization; the first never falls below the second.
pub fn bob_signal_floor(cfg: &SystemConfig, h: &ComplexMatrix, pre: &Precoder) -> Result<(f64, f64)> {
    let (num, _) = bob_quantized_terms(cfg, h, pre)?;
    let floor = log_det_eye_plus(&scaled_gram(h, derive_dims(cfg).theta_min))?;
    Ok((num, floor))
}
