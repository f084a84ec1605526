//! Seeded, chunked Monte Carlo runner.
//!
//! Trial `t` always draws from its own ChaCha8 stream `(seed, t)`. Trials are
//! grouped into fixed-size chunks, each chunk accumulates in trial order, and
//! chunk summaries are merged in chunk order. The result is therefore the
//! same bit pattern for any rayon pool size.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Trials per work unit.
pub const CHUNK_SIZE: u64 = 1024;

/// Mean and standard error of a Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCEstimate {
    pub mean: f64,
    /// Sample standard deviation over `√trials`.
    pub stderr: f64,
    pub trials: u64,
    pub seed: u64,
}

impl MCEstimate {
    /// `|mean − value| ≤ k·stderr`.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr
    }
}

/// Streaming mean/variance (Welford), mergeable with Chan's update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let (na, nb) = (self.n as f64, other.n as f64);
        self.mean += delta * nb / n as f64;
        self.m2 += other.m2 + delta * delta * na * nb / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn estimate(&self, seed: u64) -> MCEstimate {
        MCEstimate {
            mean: self.mean,
            stderr: (self.variance() / self.n as f64).sqrt(),
            trials: self.n,
            seed,
        }
    }
}

/// RNG for one trial: the run seed selects the key, the trial index the stream.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// SplitMix64 finaliser applied to `seed ⊕ golden·(index+1)`; used to give
/// grid points unrelated seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `trials` independent trials, each writing `width` values, and
/// returns one estimate per value slot.
///
/// `init` builds per-chunk scratch state; `trial` receives the scratch, the
/// trial's RNG, the trial index and the output slots. The first error in
/// trial order aborts the run, as does any non-finite output.
pub fn run_trials<S, I, F>(seed: u64, trials: u64, width: usize, init: I, trial: F) -> Result<Vec<MCEstimate>>
where
    I: Fn() -> S + Sync,
    F: Fn(&mut S, &mut ChaCha8Rng, u64, &mut [f64]) -> Result<()> + Sync,
{
    if trials < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 trials, got {trials}")));
    }
    if width == 0 {
        return Err(Error::InvalidArgument("no quantities requested".into()));
    }
    let chunks = trials.div_ceil(CHUNK_SIZE);
    let partial: Vec<Result<Vec<Welford>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut scratch = init();
            let mut acc = vec![Welford::default(); width];
            let mut out = vec![0.0; width];
            let start = c * CHUNK_SIZE;
            let end = (start + CHUNK_SIZE).min(trials);
            for t in start..end {
                let mut rng = trial_rng(seed, t);
                trial(&mut scratch, &mut rng, t, &mut out)?;
                for (k, (a, &x)) in acc.iter_mut().zip(&out).enumerate() {
                    if !x.is_finite() {
                        return Err(Error::NonFinite(format!("trial {t}, quantity {k}: {x}")));
                    }
                    a.push(x);
                }
            }
            Ok(acc)
        })
        .collect();

    let mut total = vec![Welford::default(); width];
    for chunk in partial {
        for (t, c) in total.iter_mut().zip(chunk?) {
            t.merge(&c);
        }
    }
    Ok(total.iter().map(|w| w.estimate(seed)).collect())
}

/// Single-quantity convenience wrapper around [`run_trials`].
pub fn run_scalar<F>(seed: u64, trials: u64, f: F) -> Result<MCEstimate>
where
    F: Fn(&mut ChaCha8Rng, u64) -> Result<f64> + Sync,
{
    let est = run_trials(
        seed,
        trials,
        1,
        || (),
        |_, rng, t, out| {
            out[0] = f(rng, t)?;
            Ok(())
        },
    )?;
    Ok(est[0])
}
