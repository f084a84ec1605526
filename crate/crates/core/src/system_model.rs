//! System parameters of the artificial-noise wiretap link.
//!
//! A configuration is stored as antenna counts plus the three power ratios
//!
//! * `alpha = σ_u² / σ_E²` (Eve's SNR),
//! * `beta  = σ_v² / σ_u²` (artificial-noise allocation),
//! * `gamma = σ_E² / σ_B²` (Eve-to-Bob noise ratio),
//!
//! with Bob's noise variance fixed to one. Transmit powers are always
//! derived from these, never stored, so a config cannot hold inconsistent
//! power figures.

use serde::Deserialize;

use crate::error::{Error, Result};

/// Bob's noise variance. Every other power is expressed relative to it.
pub const SIGMA_B_SQ: f64 = 1.0;

/// Antenna geometry, power ratios and feedback budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemConfig {
    n_a: usize,
    n_b: usize,
    n_e: usize,
    alpha: f64,
    beta: f64,
    gamma: f64,
    feedback_bits: u32,
}

impl SystemConfig {
    pub fn new(
        n_a: usize,
        n_b: usize,
        n_e: usize,
        alpha: f64,
        beta: f64,
        gamma: f64,
        feedback_bits: u32,
    ) -> Result<Self> {
        if n_b == 0 {
            return Err(Error::InvalidConfig("n_b must be at least 1".into()));
        }
        if n_b >= n_a {
            return Err(Error::InvalidConfig(format!(
                "n_b ({n_b}) must be smaller than n_a ({n_a}) so that H has a null space"
            )));
        }
        if n_e == 0 {
            return Err(Error::InvalidConfig("n_e must be at least 1".into()));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidConfig(format!("alpha must be positive, got {alpha}")));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidConfig(format!("beta must be nonnegative, got {beta}")));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidConfig(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self {
            n_a,
            n_b,
            n_e,
            alpha,
            beta,
            gamma,
            feedback_bits,
        })
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }

    pub fn n_e(&self) -> usize {
        self.n_e
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn feedback_bits(&self) -> u32 {
        self.feedback_bits
    }

    /// Number of codewords, `2^B`.
    pub fn codebook_size(&self) -> f64 {
        (self.feedback_bits as f64).exp2()
    }

    /// Bob's SNR, `σ_u² / σ_B² = αγ`.
    pub fn snr_bob(&self) -> f64 {
        self.alpha * self.gamma
    }

    /// Eve's SNR, `σ_u² / σ_E² = α`.
    pub fn snr_eve(&self) -> f64 {
        self.alpha
    }

    /// Per-entry variance of the information vector.
    pub fn sigma_u_sq(&self) -> f64 {
        self.alpha * self.gamma * SIGMA_B_SQ
    }

    /// Per-entry variance of the artificial noise.
    pub fn sigma_v_sq(&self) -> f64 {
        self.alpha * self.beta * self.gamma * SIGMA_B_SQ
    }

    /// Eve's noise variance.
    pub fn sigma_e_sq(&self) -> f64 {
        self.gamma * SIGMA_B_SQ
    }

    pub fn with_feedback_bits(self, feedback_bits: u32) -> Self {
        Self { feedback_bits, ..self }
    }

    pub fn with_beta(self, beta: f64) -> Result<Self> {
        Self::new(
            self.n_a,
            self.n_b,
            self.n_e,
            self.alpha,
            beta,
            self.gamma,
            self.feedback_bits,
        )
    }

    pub fn with_alpha(self, alpha: f64) -> Result<Self> {
        Self::new(
            self.n_a,
            self.n_b,
            self.n_e,
            alpha,
            self.beta,
            self.gamma,
            self.feedback_bits,
        )
    }

    pub fn with_n_e(self, n_e: usize) -> Result<Self> {
        Self::new(
            self.n_a,
            self.n_b,
            n_e,
            self.alpha,
            self.beta,
            self.gamma,
            self.feedback_bits,
        )
    }
}

/// Average transmit powers implied by a configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBudget {
    /// `E‖u‖² = αγ·n_b`
    pub p_u: f64,
    /// `E‖v‖² = αβγ·(n_a − n_b)`
    pub p_v: f64,
    pub p_total: f64,
}

pub fn derive_powers(cfg: &SystemConfig) -> PowerBudget {
    let p_u = cfg.sigma_u_sq() * cfg.n_b as f64;
    let p_v = cfg.sigma_v_sq() * (cfg.n_a - cfg.n_b) as f64;
    PowerBudget {
        p_u,
        p_v,
        p_total: p_u + p_v,
    }
}

/// Solves the power constraint `P = αγ·n_b + αβγ·(n_a − n_b)` for `α`.
pub fn config_from_total_power(
    p_total: f64,
    beta: f64,
    gamma: f64,
    n_a: usize,
    n_b: usize,
    n_e: usize,
    feedback_bits: u32,
) -> Result<SystemConfig> {
    if !(p_total.is_finite() && p_total > 0.0) {
        return Err(Error::InvalidConfig(format!("p_total must be positive, got {p_total}")));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidConfig(format!("gamma must be positive, got {gamma}")));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::InvalidConfig(format!("beta must be nonnegative, got {beta}")));
    }
    let weight = gamma * (n_b as f64 + beta * n_a.saturating_sub(n_b) as f64);
    if weight <= 0.0 {
        return Err(Error::InvalidConfig(
            "cannot solve for alpha: no power-carrying streams (n_b = 0 and beta = 0)".into(),
        ));
    }
    SystemConfig::new(n_a, n_b, n_e, p_total / weight, beta, gamma, feedback_bits)
}

/// Dimension constants and per-stream power ratios used by the closed forms.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedDims {
    /// `min{n_e, n_a − n_b}`
    pub n_min: usize,
    /// `max{n_e, n_a − n_b}`
    pub n_max: usize,
    /// `min{n_e, n_a}`
    pub nhat_min: usize,
    /// `max{n_e, n_a}`
    pub nhat_max: usize,
    /// `θ_i = α` for the first `n_b` streams, `αβ` for the rest.
    pub theta_vec: Vec<f64>,
    /// `min{αγ, αβγ}`
    pub theta_min: f64,
}

pub fn derive_dims(cfg: &SystemConfig) -> DerivedDims {
    let an_dims = cfg.n_a - cfg.n_b;
    let theta_vec = (0..cfg.n_a)
        .map(|i| if i < cfg.n_b { cfg.alpha } else { cfg.alpha * cfg.beta })
        .collect();
    DerivedDims {
        n_min: cfg.n_e.min(an_dims),
        n_max: cfg.n_e.max(an_dims),
        nhat_min: cfg.n_e.min(cfg.n_a),
        nhat_max: cfg.n_e.max(cfg.n_a),
        theta_vec,
        theta_min: (cfg.alpha * cfg.gamma).min(cfg.alpha * cfg.beta * cfg.gamma),
    }
}

/// Key-value run configuration as read from disk.
///
/// ```text
/// n_a = 4
/// n_b = 2
/// n_e = 2
/// alpha = 1.0        # or: p_total = 4.0 (exactly one of the two)
/// beta = 1.0
/// gamma = 1.0
/// feedback_bits = 8
/// seed = 7           # optional
/// trials = 100000    # optional
/// ```
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub n_a: usize,
    pub n_b: usize,
    pub n_e: usize,
    pub alpha: Option<f64>,
    pub p_total: Option<f64>,
    pub beta: f64,
    pub gamma: f64,
    #[serde(default)]
    pub feedback_bits: u32,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.power_spec()?;
        Ok(file)
    }

    /// Which of `alpha` / `p_total` fixes the power level.
    pub fn power_spec(&self) -> Result<PowerSpec> {
        match (self.alpha, self.p_total) {
            (Some(a), None) => Ok(PowerSpec::Alpha(a)),
            (None, Some(p)) => Ok(PowerSpec::TotalPower(p)),
            _ => Err(Error::Parse(
                "exactly one of `alpha` and `p_total` must be given".into(),
            )),
        }
    }

    pub fn to_config(&self) -> Result<SystemConfig> {
        self.power_spec()?
            .resolve(self.n_a, self.n_b, self.n_e, self.beta, self.gamma, self.feedback_bits)
    }
}

/// How the absolute power level of a configuration is pinned down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerSpec {
    Alpha(f64),
    TotalPower(f64),
}

impl PowerSpec {
    pub fn resolve(
        self,
        n_a: usize,
        n_b: usize,
        n_e: usize,
        beta: f64,
        gamma: f64,
        feedback_bits: u32,
    ) -> Result<SystemConfig> {
        match self {
            PowerSpec::Alpha(alpha) => SystemConfig::new(n_a, n_b, n_e, alpha, beta, gamma, feedback_bits),
            PowerSpec::TotalPower(p) => config_from_total_power(p, beta, gamma, n_a, n_b, n_e, feedback_bits),
        }
    }
}
