//! Feedback quantization: RVQ and sphere codebooks, chordal-distance
//! search, precoder assembly, and the distortion function with its bounds.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrixView, Dyn, U1};
use num_complex::Complex64;
use rand::Rng;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::matrix_rand::{
    fill_haar_columns, gram_schmidt_complete, sample_haar_semiunitary, ComplexMatrix, SemiUnitary,
};
use crate::montecarlo::{run_trials, MCEstimate};

/// Default cap on the number of codewords a codebook may hold.
pub const DEFAULT_CODEBOOK_CAP: usize = 1 << 24;
/// Default ζ in the distortion upper bound.
pub const DEFAULT_ZETA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CodebookKind {
    Rvq,
    Sphere,
}

impl fmt::Display for CodebookKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CodebookKind::Rvq => "rvq",
            CodebookKind::Sphere => "sphere",
        })
    }
}

impl FromStr for CodebookKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rvq" => Ok(CodebookKind::Rvq),
            "sphere" => Ok(CodebookKind::Sphere),
            other => Err(Error::Parse(format!("unknown codebook kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
enum SearchIndex {
    /// Score each codeword as `‖cᴴv‖_F²` directly.
    Direct,
    /// Real embedding of each projector `ccᴴ` (length `n²` per codeword) so
    /// that `tr(P_v P_c)` is a dot product.
    Projector(Vec<f32>),
}

/// `2^B` semi-unitary `n_a × n_b` codewords stored contiguously (each
/// codeword column-major).
#[derive(Debug, Clone)]
pub struct Codebook {
    n_a: usize,
    n_b: usize,
    feedback_bits: u32,
    kind: CodebookKind,
    data: Vec<Complex64>,
    index: SearchIndex,
}

/// Result of quantizing one subspace.
#[derive(Debug, Clone)]
pub struct QuantizationResult {
    /// One-based codeword index `j ∈ [1, 2^B]`.
    pub index: usize,
    pub codeword: SemiUnitary,
    pub distance_sq: f64,
}

/// Absolute single-precision screening margin per data stream; the f32
/// score error is below `2e-6·p`.
const SCREEN_MARGIN: f32 = 1e-4;

/// Dot product with four independent partial sums.
fn dot32(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 4];
    let (mut ca, mut cb) = (a.chunks_exact(4), b.chunks_exact(4));
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s += x * y;
    }
    s
}

/// Unitary precoder `[Ṽ_j | Ẑ]`.
#[derive(Debug, Clone)]
pub struct Precoder {
    v_hat: SemiUnitary,
    n_b: usize,
}

impl Precoder {
    /// Wraps an `n_a × n_a` unitary whose first `n_b` columns carry the data.
    pub fn from_unitary(v_hat: SemiUnitary, n_b: usize) -> Result<Self> {
        if v_hat.nrows() != v_hat.ncols() || n_b == 0 || n_b >= v_hat.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "precoder must be square with 0 < n_b < n_a, got {}x{} and n_b={n_b}",
                v_hat.nrows(),
                v_hat.ncols()
            )));
        }
        Ok(Self { v_hat, n_b })
    }

    pub fn v_hat(&self) -> &SemiUnitary {
        &self.v_hat
    }

    /// First `n_b` columns (the quantized codeword).
    pub fn info_block(&self) -> DMatrixView<'_, Complex64, U1, Dyn> {
        self.v_hat.as_matrix().columns(0, self.n_b)
    }

    /// Last `n_a − n_b` columns (the artificial-noise directions).
    pub fn an_block(&self) -> DMatrixView<'_, Complex64, U1, Dyn> {
        let n = self.v_hat.ncols();
        self.v_hat.as_matrix().columns(self.n_b, n - self.n_b)
    }
}

/// Number of codewords for `bits` feedback bits, checked against `cap`.
pub fn codebook_len(bits: u32, cap: usize) -> Result<usize> {
    let requested = 1u128.checked_shl(bits).unwrap_or(u128::MAX);
    if bits >= 64 || requested > cap as u128 {
        return Err(Error::CodebookTooLarge { requested, cap });
    }
    Ok(requested as usize)
}

fn use_projector_index(n: usize, p: usize) -> bool {
    n * n < 4 * n * p * p
}

/// Writes the real projector embedding of the column-major `n × p` matrix `x`.
fn projector_features(x: &[Complex64], n: usize, p: usize, out: &mut [f64]) {
    let s2 = std::f64::consts::SQRT_2;
    let mut f = 0;
    for a in 0..n {
        out[f] = (0..p).map(|k| x[k * n + a].norm_sqr()).sum();
        f += 1;
    }
    for a in 0..n {
        for b in (a + 1)..n {
            let pab: Complex64 = (0..p).map(|k| x[k * n + a] * x[k * n + b].conj()).sum();
            out[f] = s2 * pab.re;
            out[f + 1] = s2 * pab.im;
            f += 2;
        }
    }
}

/// `‖cᴴv‖_F²` for column-major `n × p` slices.
fn overlap(c: &[Complex64], v: &[Complex64], n: usize, p: usize) -> f64 {
    let mut s = 0.0;
    for k in 0..p {
        let ck = &c[k * n..(k + 1) * n];
        for l in 0..p {
            let vl = &v[l * n..(l + 1) * n];
            let ip: Complex64 = ck.iter().zip(vl).map(|(a, b)| a.conj() * b).sum();
            s += ip.norm_sqr();
        }
    }
    s
}

impl Codebook {
    fn from_raw(n_a: usize, n_b: usize, feedback_bits: u32, kind: CodebookKind, data: Vec<Complex64>) -> Self {
        let per = n_a * n_b;
        let index = if use_projector_index(n_a, n_b) {
            let nf = n_a * n_a;
            let mut feats = vec![0.0f32; data.len() / per * nf];
            let mut buf = vec![0.0; nf];
            for (c, out) in data.chunks_exact(per).zip(feats.chunks_exact_mut(nf)) {
                projector_features(c, n_a, n_b, &mut buf);
                for (o, &x) in out.iter_mut().zip(&buf) {
                    *o = x as f32;
                }
            }
            SearchIndex::Projector(feats)
        } else {
            SearchIndex::Direct
        };
        Self {
            n_a,
            n_b,
            feedback_bits,
            kind,
            data,
            index,
        }
    }

    /// Builds a codebook from explicit codewords, validating count, shape
    /// and semi-unitarity.
    pub fn from_entries(kind: CodebookKind, feedback_bits: u32, entries: &[SemiUnitary]) -> Result<Self> {
        let expected = codebook_len(feedback_bits, DEFAULT_CODEBOOK_CAP)?;
        if entries.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "{} codewords given for B={feedback_bits}, expected {expected}",
                entries.len()
            )));
        }
        let (n_a, n_b) = (entries[0].nrows(), entries[0].ncols());
        if n_b >= n_a {
            return Err(Error::ShapeMismatch(format!("codewords must be tall, got {n_a}x{n_b}")));
        }
        if kind == CodebookKind::Sphere && (n_a, n_b) != (2, 1) {
            return Err(Error::ShapeMismatch("sphere codebooks are 2x1".into()));
        }
        let mut data = Vec::with_capacity(expected * n_a * n_b);
        for e in entries {
            if e.nrows() != n_a || e.ncols() != n_b {
                return Err(Error::ShapeMismatch("codewords differ in shape".into()));
            }
            let checked = SemiUnitary::new(e.as_matrix().clone())?;
            data.extend_from_slice(checked.as_matrix().as_slice());
        }
        Ok(Self::from_raw(n_a, n_b, feedback_bits, kind, data))
    }

    pub fn len(&self) -> usize {
        self.data.len() / (self.n_a * self.n_b)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }

    pub fn feedback_bits(&self) -> u32 {
        self.feedback_bits
    }

    pub fn kind(&self) -> CodebookKind {
        self.kind
    }

    fn slice(&self, i: usize) -> &[Complex64] {
        let per = self.n_a * self.n_b;
        &self.data[i * per..(i + 1) * per]
    }

    /// Codeword `i` (zero-based).
    pub fn codeword(&self, i: usize) -> SemiUnitary {
        SemiUnitary::new_unchecked(ComplexMatrix::from_column_slice(self.n_a, self.n_b, self.slice(i)))
    }

    pub fn iter(&self) -> impl Iterator<Item = SemiUnitary> + '_ {
        (0..self.len()).map(|i| self.codeword(i))
    }

    /// Zero-based index of the codeword closest to `v` (lowest index on ties).
    fn nearest(&self, v: &[Complex64]) -> usize {
        let (n, p) = (self.n_a, self.n_b);
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        match &self.index {
            SearchIndex::Direct => {
                for (i, c) in self.data.chunks_exact(n * p).enumerate() {
                    let s = overlap(c, v, n, p);
                    if s > best_score {
                        best_score = s;
                        best = i;
                    }
                }
            }
            SearchIndex::Projector(feats) => {
                let nf = n * n;
                let mut q = vec![0.0; nf];
                projector_features(v, n, p, &mut q);
                let q: Vec<f32> = q.iter().map(|&x| x as f32).collect();
                // Screen in single precision, keeping every codeword whose
                // score is within the rounding margin of the leader, then
                // rescore those exactly.
                let margin = SCREEN_MARGIN * p as f32;
                let mut lead = f32::NEG_INFINITY;
                let mut cands: Vec<(usize, f32)> = Vec::new();
                for (i, f) in feats.chunks_exact(nf).enumerate() {
                    let s = dot32(f, &q);
                    if s > lead - margin {
                        if s > lead {
                            lead = s;
                            cands.retain(|&(_, t)| t > lead - margin);
                        }
                        cands.push((i, s));
                    }
                }
                for (i, _) in cands {
                    let s = overlap(&self.data[i * n * p..(i + 1) * n * p], v, n, p);
                    if s > best_score {
                        best_score = s;
                        best = i;
                    }
                }
            }
        }
        best
    }

    /// Writes the text export: a header line `n_a n_b B kind`, then one
    /// block per codeword with one line per row of `re im` pairs, blocks
    /// separated by blank lines.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {} {} {}", self.n_a, self.n_b, self.feedback_bits, self.kind)?;
        for c in self.iter() {
            writeln!(w)?;
            let m = c.as_matrix();
            for r in 0..self.n_a {
                let row: Vec<String> = (0..self.n_b)
                    .map(|k| format!("{} {}", m[(r, k)].re, m[(r, k)].im))
                    .collect();
                writeln!(w, "{}", row.join(" "))?;
            }
        }
        Ok(())
    }

    /// Parses the format produced by [`Codebook::write_text`].
    pub fn read_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty codebook file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Parse(format!("bad header '{header}'")));
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("'{s}': {e}")));
        let n_a = parse_usize(fields[0])?;
        let n_b = parse_usize(fields[1])?;
        let bits: u32 = fields[2]
            .parse()
            .map_err(|e| Error::Parse(format!("'{}': {e}", fields[2])))?;
        let kind: CodebookKind = fields[3].parse()?;
        if n_b == 0 || n_b >= n_a {
            return Err(Error::Parse(format!("bad dimensions {n_a}x{n_b}")));
        }
        let len = codebook_len(bits, DEFAULT_CODEBOOK_CAP)?;
        let mut entries = Vec::with_capacity(len);
        for e in 0..len {
            let mut m = ComplexMatrix::zeros(n_a, n_b);
            for r in 0..n_a {
                let line = lines
                    .next()
                    .ok_or_else(|| Error::Parse(format!("codeword {} truncated", e + 1)))?;
                let nums: Vec<f64> = line
                    .split_whitespace()
                    .map(|s| s.parse::<f64>().map_err(|err| Error::Parse(format!("'{s}': {err}"))))
                    .collect::<Result<_>>()?;
                if nums.len() != 2 * n_b {
                    return Err(Error::Parse(format!(
                        "codeword {} row {} has {} numbers",
                        e + 1,
                        r + 1,
                        nums.len()
                    )));
                }
                for k in 0..n_b {
                    m[(r, k)] = Complex64::new(nums[2 * k], nums[2 * k + 1]);
                }
            }
            entries.push(SemiUnitary::new(m)?);
        }
        if lines.next().is_some() {
            return Err(Error::Parse("trailing data after last codeword".into()));
        }
        Self::from_entries(kind, bits, &entries)
    }
}

/// `2^B` independent Haar codewords drawn from `rng`.
pub fn build_rvq_codebook<R: Rng + ?Sized>(
    n_a: usize,
    n_b: usize,
    feedback_bits: u32,
    rng: &mut R,
) -> Result<Codebook> {
    build_rvq_codebook_capped(n_a, n_b, feedback_bits, DEFAULT_CODEBOOK_CAP, rng)
}

pub fn build_rvq_codebook_capped<R: Rng + ?Sized>(
    n_a: usize,
    n_b: usize,
    feedback_bits: u32,
    cap: usize,
    rng: &mut R,
) -> Result<Codebook> {
    check_shape(n_a, n_b)?;
    let len = codebook_len(feedback_bits, cap)?;
    let per = n_a * n_b;
    let mut data = vec![Complex64::new(0.0, 0.0); len * per];
    for c in data.chunks_exact_mut(per) {
        fill_haar_columns(c, n_a, n_b, rng);
    }
    Ok(Codebook::from_raw(n_a, n_b, feedback_bits, CodebookKind::Rvq, data))
}

fn check_shape(n_a: usize, n_b: usize) -> Result<()> {
    if n_b == 0 || n_b >= n_a {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= n_b < n_a, got n_a={n_a}, n_b={n_b}"
        )));
    }
    Ok(())
}

/// Deterministic `2 × 1` codebook that grids the Bloch sphere: `t_i` sets
/// the polar coordinate and `φ_i` the phase.
pub fn build_sphere_codebook(feedback_bits: u32) -> Result<Codebook> {
    if feedback_bits == 0 {
        return Err(Error::InvalidArgument("sphere codebook needs B >= 1".into()));
    }
    let len = codebook_len(feedback_bits, DEFAULT_CODEBOOK_CAP)?;
    let phase_steps = 1usize << feedback_bits.div_ceil(2);
    let polar_steps = (1usize << (feedback_bits / 2)) as f64;
    let mut data = Vec::with_capacity(2 * len);
    for i in 1..=len {
        let ring = i.div_ceil(phase_steps) as f64;
        let t = -1.0 + (2.0 * ring - 1.0) / polar_steps;
        let phi = 2.0 * std::f64::consts::PI * (i % phase_steps) as f64 / phase_steps as f64;
        let half = 0.5 * t.acos();
        data.push(Complex64::new(half.cos(), 0.0));
        data.push(Complex64::from_polar(half.sin(), phi));
    }
    Ok(Codebook::from_raw(2, 1, feedback_bits, CodebookKind::Sphere, data))
}

/// Squared chordal distance `p − ‖aᴴb‖_F²`, clamped to `[0, p]`.
pub fn chordal_distance_sq(a: &SemiUnitary, b: &SemiUnitary) -> f64 {
    assert_eq!(
        (a.nrows(), a.ncols()),
        (b.nrows(), b.ncols()),
        "chordal distance needs equal shapes"
    );
    let (n, p) = (a.nrows(), a.ncols());
    let d = p as f64 - overlap(a.as_matrix().as_slice(), b.as_matrix().as_slice(), n, p);
    d.clamp(0.0, p as f64)
}

fn check_query(codebook: &Codebook, v: &SemiUnitary) -> Result<()> {
    if (v.nrows(), v.ncols()) != (codebook.n_a, codebook.n_b) {
        return Err(Error::ShapeMismatch(format!(
            "query is {}x{}, codebook is {}x{}",
            v.nrows(),
            v.ncols(),
            codebook.n_a,
            codebook.n_b
        )));
    }
    Ok(())
}

/// Nearest codeword in chordal distance; ties go to the lowest index.
pub fn quantize(codebook: &Codebook, v_tilde: &SemiUnitary) -> Result<QuantizationResult> {
    check_query(codebook, v_tilde)?;
    let i = codebook.nearest(v_tilde.as_matrix().as_slice());
    let codeword = codebook.codeword(i);
    let distance_sq = chordal_distance_sq(&codeword, v_tilde);
    Ok(QuantizationResult {
        index: i + 1,
        codeword,
        distance_sq,
    })
}

/// Plain linear scan recomputing every distance with
/// [`chordal_distance_sq`]; reference for [`quantize`].
pub fn quantize_brute_force(codebook: &Codebook, v_tilde: &SemiUnitary) -> Result<QuantizationResult> {
    check_query(codebook, v_tilde)?;
    let mut best = (0, f64::INFINITY);
    for (i, c) in codebook.iter().enumerate() {
        let d = chordal_distance_sq(&c, v_tilde);
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(QuantizationResult {
        index: best.0 + 1,
        codeword: codebook.codeword(best.0),
        distance_sq: best.1,
    })
}

/// Quantizes against a fresh RVQ codebook drawn from `rng` without storing
/// it. Identical to `quantize(&build_rvq_codebook(.., rng)?, v)`.
pub fn quantize_fresh_rvq<R: Rng + ?Sized>(
    n_a: usize,
    n_b: usize,
    feedback_bits: u32,
    v_tilde: &SemiUnitary,
    rng: &mut R,
) -> Result<QuantizationResult> {
    check_shape(n_a, n_b)?;
    if (v_tilde.nrows(), v_tilde.ncols()) != (n_a, n_b) {
        return Err(Error::ShapeMismatch("query shape differs from codebook shape".into()));
    }
    let len = codebook_len(feedback_bits, DEFAULT_CODEBOOK_CAP)?;
    let per = n_a * n_b;
    let v = v_tilde.as_matrix().as_slice();
    let projector = use_projector_index(n_a, n_b);
    let mut q = vec![0.0; if projector { n_a * n_a } else { 0 }];
    let mut f = q.clone();
    if projector {
        projector_features(v, n_a, n_b, &mut q);
    }
    let mut cur = vec![Complex64::new(0.0, 0.0); per];
    let mut best = cur.clone();
    let mut best_i = 0;
    let mut best_score = f64::NEG_INFINITY;
    for i in 0..len {
        fill_haar_columns(&mut cur, n_a, n_b, rng);
        let s = if projector {
            projector_features(&cur, n_a, n_b, &mut f);
            f.iter().zip(&q).map(|(a, b)| a * b).sum()
        } else {
            overlap(&cur, v, n_a, n_b)
        };
        if s > best_score {
            best_score = s;
            best_i = i;
            best.copy_from_slice(&cur);
        }
    }
    let codeword = SemiUnitary::new_unchecked(ComplexMatrix::from_column_slice(n_a, n_b, &best));
    let distance_sq = chordal_distance_sq(&codeword, v_tilde);
    Ok(QuantizationResult {
        index: best_i + 1,
        codeword,
        distance_sq,
    })
}

/// Completes the quantized codeword to the unitary precoder `[Ṽ_j | Ẑ]`.
pub fn assemble_precoder(q: &QuantizationResult) -> Result<Precoder> {
    let v_hat = gram_schmidt_complete(&q.codeword)?;
    Ok(Precoder {
        v_hat,
        n_b: q.codeword.ncols(),
    })
}

/// Monte Carlo estimate of `D(n, p, 2^B) = E d²(Ṽ_j, Ṽ)` with a fresh RVQ
/// codebook per trial and a Haar-distributed input subspace.
pub fn estimate_distortion(n: usize, p: usize, feedback_bits: u32, trials: u64, seed: u64) -> Result<MCEstimate> {
    check_shape(n, p)?;
    codebook_len(feedback_bits, DEFAULT_CODEBOOK_CAP)?;
    let est = run_trials(
        seed,
        trials,
        1,
        || (),
        |_, rng, _, out| {
            let v = sample_haar_semiunitary(n, p, rng);
            out[0] = quantize_fresh_rvq(n, p, feedback_bits, &v, rng)?.distance_sq;
            Ok(())
        },
    )?;
    Ok(est[0])
}

/// Distortion of a fixed codebook against Haar-distributed inputs.
pub fn estimate_distortion_fixed(codebook: &Codebook, trials: u64, seed: u64) -> Result<MCEstimate> {
    let (n, p) = (codebook.n_a(), codebook.n_b());
    let est = run_trials(
        seed,
        trials,
        1,
        || (),
        |_, rng, _, out| {
            let v = sample_haar_semiunitary(n, p, rng);
            out[0] = quantize(codebook, &v)?.distance_sq;
            Ok(())
        },
    )?;
    Ok(est[0])
}

fn check_bound_args(n: usize, p: usize, codebook_size: f64) -> Result<()> {
    if p == 0 || p >= n {
        return Err(Error::InvalidArgument(format!("need 0 < p < n, got n={n}, p={p}")));
    }
    if !(codebook_size >= 1.0) || !codebook_size.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "codebook size {codebook_size} must be >= 1"
        )));
    }
    Ok(())
}

/// Volume constant `c(n, p)` of a metric ball on the Grassmannian.
pub fn ball_constant_c(n: usize, p: usize) -> Result<f64> {
    check_bound_args(n, p, 1.0)?;
    let q = (p * (n - p)) as f64;
    let m = p.min(n - p);
    let mut ln_c = -ln_gamma(q + 1.0);
    for i in 1..=m {
        ln_c += ln_gamma((n - i + 1) as f64) - ln_gamma((m - i + 1) as f64);
    }
    Ok(ln_c.exp())
}

/// Lower bound `μ(n, p, K)` on the RVQ distortion.
pub fn distortion_bound_mu(n: usize, p: usize, codebook_size: f64) -> Result<f64> {
    check_bound_args(n, p, codebook_size)?;
    let q = (p * (n - p)) as f64;
    let kc = codebook_size * ball_constant_c(n, p)?;
    Ok(q / (q + 1.0) * kc.powf(-1.0 / q))
}

/// Upper bound `η(n, p, K)` on the RVQ distortion for a given `ζ ∈ (0, 1)`.
pub fn distortion_bound_eta(n: usize, p: usize, codebook_size: f64, zeta: f64) -> Result<f64> {
    check_bound_args(n, p, codebook_size)?;
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(Error::InvalidArgument(format!("zeta must lie in (0, 1), got {zeta}")));
    }
    let q = (p * (n - p)) as f64;
    let kc = codebook_size * ball_constant_c(n, p)?;
    Ok(gamma(1.0 / q) / q * kc.powf(-1.0 / q) + p as f64 * (-kc.powf(1.0 - zeta)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix_rand::sample_gaussian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn std_cols(n: usize, cols: std::ops::Range<usize>) -> SemiUnitary {
        let eye = ComplexMatrix::identity(n, n);
        SemiUnitary::new(eye.columns(cols.start, cols.len()).into_owned()).unwrap()
    }

    #[test]
    fn rvq_sizes_and_determinism() {
        let cb = build_rvq_codebook(4, 2, 0, &mut rng(1)).unwrap();
        assert_eq!(cb.len(), 1);
        let cb = build_rvq_codebook(4, 2, 3, &mut rng(1)).unwrap();
        assert_eq!(cb.len(), 8);
        for c in cb.iter() {
            assert!(crate::matrix_rand::orthonormality_defect(c.as_matrix()) < 1e-10);
        }
        let again = build_rvq_codebook(4, 2, 3, &mut rng(1)).unwrap();
        assert_eq!(cb.data, again.data);
    }

    #[test]
    fn codebook_cap_enforced() {
        let err = build_rvq_codebook_capped(2, 1, 5, 16, &mut rng(0)).unwrap_err();
        assert!(matches!(err, Error::CodebookTooLarge { requested: 32, cap: 16 }));
        assert!(codebook_len(25, DEFAULT_CODEBOOK_CAP).is_err());
        assert!(codebook_len(200, DEFAULT_CODEBOOK_CAP).is_err());
    }

    #[test]
    fn sphere_codebook_one_bit() {
        let cb = build_sphere_codebook(1).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let a = cb.codeword(0).into_inner();
        let b = cb.codeword(1).into_inner();
        assert!((a[(0, 0)] - Complex64::new(h, 0.0)).norm() < 1e-15);
        assert!((a[(1, 0)] - Complex64::new(-h, 0.0)).norm() < 1e-15);
        assert!((b[(0, 0)] - Complex64::new(h, 0.0)).norm() < 1e-15);
        assert!((b[(1, 0)] - Complex64::new(h, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn sphere_codebook_two_bits() {
        let cb = build_sphere_codebook(2).unwrap();
        // t = cos(2θ) where the first entry is cos θ; phase of the second entry is φ.
        let mut seen = Vec::new();
        for c in cb.iter() {
            let m = c.into_inner();
            let t = 2.0 * m[(0, 0)].re.powi(2) - 1.0;
            let phi = m[(1, 0)].arg().rem_euclid(2.0 * std::f64::consts::PI);
            seen.push(((t * 2.0).round() as i32, (phi / std::f64::consts::PI).round() as i32));
        }
        assert_eq!(seen, vec![(-1, 1), (-1, 0), (1, 1), (1, 0)]);
    }

    #[test]
    fn sphere_codebooks_unit_norm_and_distinct() {
        for b in 1..=10 {
            let cb = build_sphere_codebook(b).unwrap();
            let entries: Vec<_> = cb.iter().collect();
            for e in &entries {
                assert!((e.as_matrix().norm() - 1.0).abs() < 1e-12);
            }
            for i in 0..entries.len() {
                for j in (i + 1)..entries.len() {
                    assert!(
                        chordal_distance_sq(&entries[i], &entries[j]) > 1e-9,
                        "B={b}: {i} vs {j}"
                    );
                }
            }
        }
        assert!(build_sphere_codebook(0).is_err());
    }

    #[test]
    fn chordal_distance_examples() {
        let a = std_cols(4, 0..2);
        let b = std_cols(4, 2..4);
        assert_eq!(chordal_distance_sq(&a, &a), 0.0);
        assert_eq!(chordal_distance_sq(&a, &b), 2.0);
        let mut r = rng(2);
        for _ in 0..20 {
            let x = sample_haar_semiunitary(5, 2, &mut r);
            let y = sample_haar_semiunitary(5, 2, &mut r);
            let oracle = (x.projector() - y.projector()).norm_squared() / 2.0;
            assert!((chordal_distance_sq(&x, &y) - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn quantize_finds_member_and_single_entry() {
        let mut r = rng(3);
        let mut entries: Vec<_> = (0..8).map(|_| sample_haar_semiunitary(4, 2, &mut r)).collect();
        let v = sample_haar_semiunitary(4, 2, &mut r);
        entries[5] = v.clone();
        let cb = Codebook::from_entries(CodebookKind::Rvq, 3, &entries).unwrap();
        let q = quantize(&cb, &v).unwrap();
        assert_eq!(q.index, 6);
        assert!(q.distance_sq < 1e-12);

        let single = build_rvq_codebook(4, 2, 0, &mut r).unwrap();
        let q = quantize(&single, &v).unwrap();
        assert_eq!(q.index, 1);
        assert_eq!(q.distance_sq, chordal_distance_sq(&q.codeword, &v));
    }

    #[test]
    fn quantize_matches_brute_force() {
        let mut r = rng(4);
        for (n, p) in [(2, 1), (4, 2), (10, 1), (5, 3)] {
            let cb = build_rvq_codebook(n, p, 6, &mut r).unwrap();
            for _ in 0..50 {
                let v = sample_haar_semiunitary(n, p, &mut r);
                let a = quantize(&cb, &v).unwrap();
                let b = quantize_brute_force(&cb, &v).unwrap();
                assert_eq!(a.index, b.index);
                assert_eq!(a.distance_sq, b.distance_sq);
            }
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let v = std_cols(3, 0..1);
        let w = std_cols(3, 1..2);
        let cb = Codebook::from_entries(CodebookKind::Rvq, 2, &[w.clone(), v.clone(), v.clone(), w]).unwrap();
        assert_eq!(quantize(&cb, &v).unwrap().index, 2);
    }

    #[test]
    fn streaming_rvq_equals_stored() {
        for (n, p, b) in [(2, 1, 5), (4, 2, 6), (10, 1, 4)] {
            let mut r = rng(5);
            let v = sample_haar_semiunitary(n, p, &mut r);
            let mut r1 = rng(99);
            let mut r2 = rng(99);
            let stored = quantize(&build_rvq_codebook(n, p, b, &mut r1).unwrap(), &v).unwrap();
            let streamed = quantize_fresh_rvq(n, p, b, &v, &mut r2).unwrap();
            assert_eq!(stored.index, streamed.index);
            assert_eq!(stored.codeword, streamed.codeword);
            assert_eq!(stored.distance_sq, streamed.distance_sq);
        }
    }

    #[test]
    fn precoder_blocks() {
        let mut r = rng(6);
        let cb = build_rvq_codebook(4, 2, 4, &mut r).unwrap();
        let v = sample_haar_semiunitary(4, 2, &mut r);
        let q = quantize(&cb, &v).unwrap();
        let pre = assemble_precoder(&q).unwrap();
        assert_eq!(pre.info_block().into_owned(), *q.codeword.as_matrix());
        assert_eq!(pre.an_block().ncols(), 2);
        assert!(crate::matrix_rand::orthonormality_defect(pre.v_hat().as_matrix()) < 1e-10);
    }

    #[test]
    fn exact_feedback_nulls_channel() {
        let mut r = rng(7);
        let h = sample_gaussian(2, 4, &mut r);
        let basis = crate::matrix_rand::svd_right_basis(&h).unwrap();
        let cb = Codebook::from_entries(CodebookKind::Rvq, 0, std::slice::from_ref(&basis.v_tilde)).unwrap();
        let pre = assemble_precoder(&quantize(&cb, &basis.v_tilde).unwrap()).unwrap();
        assert!((&h * pre.an_block()).norm() < 1e-8);
    }

    #[test]
    fn distortion_of_one_random_line() {
        let est = estimate_distortion(2, 1, 0, 100_000, 8).unwrap();
        assert!(est.agrees_with(0.5, 3.0), "{est:?}");
    }

    #[test]
    fn distortion_decreases_with_bits() {
        let means: Vec<f64> = (0..=10)
            .map(|b| estimate_distortion(2, 1, b, 4000, 9).unwrap().mean)
            .collect();
        for w in means.windows(2) {
            assert!(w[1] < w[0], "{means:?}");
        }
    }

    #[test]
    fn bound_constants() {
        assert!((ball_constant_c(2, 1).unwrap() - 1.0).abs() < 1e-12);
        assert!((ball_constant_c(4, 2).unwrap() - 0.5).abs() < 1e-12);
        // n < 2p branch equals the n >= 2p branch of the complementary dimension.
        assert!((ball_constant_c(5, 3).unwrap() - ball_constant_c(5, 2).unwrap()).abs() < 1e-12);
        for b in 0..12 {
            let k = 2f64.powi(b);
            assert!((distortion_bound_mu(2, 1, k).unwrap() - 2f64.powi(-(b + 1))).abs() < 1e-15);
        }
        assert!(distortion_bound_eta(4, 2, 16.0, 0.0).is_err());
        assert!(distortion_bound_eta(4, 2, 16.0, 1.0).is_err());
        assert!(distortion_bound_mu(2, 2, 4.0).is_err());
    }

    #[test]
    fn eta_hand_values() {
        // q = 1: Γ(1)·K⁻¹ + exp(−√K).
        let k: f64 = 64.0;
        let eta = distortion_bound_eta(2, 1, k, 0.5).unwrap();
        assert!((eta - (1.0 / k + (-k.sqrt()).exp())).abs() < 1e-15);
        // q = 4, c = 1/2.
        let k: f64 = 256.0;
        let expect = gamma(0.25) / 4.0 * (k / 2.0).powf(-0.25) + 2.0 * (-(k / 2.0).sqrt()).exp();
        assert!((distortion_bound_eta(4, 2, k, 0.5).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn text_round_trip() {
        let cb = build_rvq_codebook(4, 2, 3, &mut rng(10)).unwrap();
        let mut buf = Vec::new();
        cb.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("4 2 3 rvq\n"));
        let back = Codebook::read_text(&text).unwrap();
        assert_eq!(back.data, cb.data);
        assert_eq!(back.kind(), CodebookKind::Rvq);

        let sphere = build_sphere_codebook(4).unwrap();
        let mut buf = Vec::new();
        sphere.write_text(&mut buf).unwrap();
        let back = Codebook::read_text(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.data, sphere.data);
        assert!(Codebook::read_text("4 2 1 rvq\n1 0 0 0\n").is_err());
    }
}
