//! Dense complex matrix kernel: Gaussian and Haar sampling, the right
//! singular basis of a wide channel, Gram-Schmidt completion and
//! `log₂ det(I + A)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

/// Tolerance on `‖XᴴX − I‖_F` accepted by [`SemiUnitary::new`].
pub const SEMI_UNITARY_TOL: f64 = 1e-10;
/// Smallest/largest singular value ratio below which a channel counts as rank deficient.
pub const RANK_TOL: f64 = 1e-12;
/// Completion candidates with a smaller residual norm are skipped.
pub const COMPLETION_SKIP_TOL: f64 = 1e-8;
/// Smallest admissible Cholesky pivot of `I + A`.
pub const PSD_PIVOT_TOL: f64 = 1e-12;

/// An `n × p` matrix (`n ≥ p`) with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiUnitary {
    mat: ComplexMatrix,
}

impl SemiUnitary {
    pub fn new(mat: ComplexMatrix) -> Result<Self> {
        let deviation = orthonormality_defect(&mat);
        if mat.nrows() < mat.ncols() || mat.ncols() == 0 || !(deviation <= SEMI_UNITARY_TOL) {
            return Err(Error::NotSemiUnitary { deviation });
        }
        Ok(Self { mat })
    }

    /// Caller guarantees orthonormal columns (up to rounding).
    pub(crate) fn new_unchecked(mat: ComplexMatrix) -> Self {
        debug_assert!(orthonormality_defect(&mat) <= SEMI_UNITARY_TOL);
        Self { mat }
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn into_inner(self) -> ComplexMatrix {
        self.mat
    }

    pub fn nrows(&self) -> usize {
        self.mat.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.mat.ncols()
    }

    /// Orthogonal projector `X Xᴴ` onto the column span.
    pub fn projector(&self) -> ComplexMatrix {
        &self.mat * self.mat.adjoint()
    }
}

/// `‖XᴴX − I‖_F`.
pub fn orthonormality_defect(mat: &ComplexMatrix) -> f64 {
    let gram = mat.adjoint() * mat;
    let eye = ComplexMatrix::identity(gram.nrows(), gram.ncols());
    (gram - eye).norm()
}

/// Right singular basis of a full-row-rank `n_b × n_a` channel, split into
/// its row space and null space.
#[derive(Debug, Clone)]
pub struct SvdBasis {
    /// First `n_b` right singular vectors.
    pub v_tilde: SemiUnitary,
    /// Orthonormal basis of the null space, `n_a × (n_a − n_b)`.
    pub z: SemiUnitary,
    /// Descending.
    pub singular_values: Vec<f64>,
}

/// Matrix of i.i.d. `CN(0, 1)` entries.
pub fn sample_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(rows, cols);
    fill_gaussian(m.as_mut_slice(), rng);
    m
}

/// Fills a buffer with i.i.d. `CN(0, 1)` samples (real and imaginary parts
/// each of variance 1/2).
pub fn fill_gaussian<R: Rng + ?Sized>(buf: &mut [Complex64], rng: &mut R) {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    for z in buf.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z = Complex64::new(re * scale, im * scale);
    }
}

/// Haar-distributed `n × p` matrix with orthonormal columns.
pub fn sample_haar_semiunitary<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> SemiUnitary {
    assert!(n >= p && p >= 1, "need n >= p >= 1, got n={n}, p={p}");
    let mut m = ComplexMatrix::zeros(n, p);
    fill_haar_columns(m.as_mut_slice(), n, p, rng);
    SemiUnitary::new_unchecked(m)
}

/// Writes a Haar-distributed `n × p` semi-unitary matrix into `buf`
/// (column-major, length `n·p`).
///
/// This is the QR of a complex Gaussian matrix. Gram-Schmidt produces the
/// factorisation whose `R` has a real positive diagonal, so the usual phase
/// correction `Q ← Q·diag(conj(r_kk)/|r_kk|)` is already the identity and the
/// result is exactly Haar rather than merely orthonormal.
pub fn fill_haar_columns<R: Rng + ?Sized>(buf: &mut [Complex64], n: usize, p: usize, rng: &mut R) {
    debug_assert_eq!(buf.len(), n * p);
    loop {
        fill_gaussian(buf, rng);
        if orthonormalize_columns(buf, n, p) {
            return;
        }
    }
}

/// In-place Gram-Schmidt with one re-orthogonalisation pass. Returns false
/// if a column collapses (probability zero for Gaussian input).
fn orthonormalize_columns(buf: &mut [Complex64], n: usize, p: usize) -> bool {
    for k in 0..p {
        let (done, rest) = buf.split_at_mut(k * n);
        let col = &mut rest[..n];
        for _ in 0..2 {
            for j in 0..k {
                let q = &done[j * n..(j + 1) * n];
                let r: Complex64 = q.iter().zip(col.iter()).map(|(a, b)| a.conj() * b).sum();
                for (c, a) in col.iter_mut().zip(q) {
                    *c -= r * a;
                }
            }
        }
        let norm = col.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 1e-300) {
            return false;
        }
        let inv = 1.0 / norm;
        for c in col.iter_mut() {
            *c *= inv;
        }
    }
    true
}

/// Row-space / null-space split of `h` via its SVD.
pub fn svd_right_basis(h: &ComplexMatrix) -> Result<SvdBasis> {
    let (n_b, n_a) = h.shape();
    if n_b == 0 || n_b >= n_a {
        return Err(Error::ShapeMismatch(format!(
            "channel must be wide with at least one row, got {n_b}x{n_a}"
        )));
    }
    let svd = h.clone().svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::NonFinite("SVD did not return right singular vectors".into()))?;
    let singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    let largest = singular_values[0];
    let smallest = singular_values[n_b - 1];
    if !largest.is_finite() || !(smallest >= RANK_TOL * largest) || largest == 0.0 {
        let ratio = if largest > 0.0 { smallest / largest } else { 0.0 };
        return Err(Error::RankDeficient { ratio });
    }
    let v_tilde = SemiUnitary::new(v_t.adjoint())?;
    let full = gram_schmidt_complete(&v_tilde)?;
    let z = SemiUnitary::new_unchecked(full.as_matrix().columns(n_b, n_a - n_b).into_owned());
    Ok(SvdBasis {
        v_tilde,
        z,
        singular_values,
    })
}

/// Completes a semi-unitary `n × p` matrix to an `n × n` unitary by running
/// Gram-Schmidt over `[v, e_1, e_2, …]`, skipping standard basis vectors
/// whose residual falls below [`COMPLETION_SKIP_TOL`]. The first `p` columns
/// of the result are copied from `v` unchanged.
pub fn gram_schmidt_complete(v: &SemiUnitary) -> Result<SemiUnitary> {
    let (n, p) = (v.nrows(), v.ncols());
    let mut out = ComplexMatrix::zeros(n, n);
    out.columns_mut(0, p).copy_from(v.as_matrix());
    let buf = out.as_mut_slice();
    let mut filled = p;
    let mut candidate = vec![Complex64::new(0.0, 0.0); n];
    for e in 0..n {
        if filled == n {
            break;
        }
        candidate.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        candidate[e] = Complex64::new(1.0, 0.0);
        let (done, _) = buf.split_at(filled * n);
        for _ in 0..2 {
            for j in 0..filled {
                let q = &done[j * n..(j + 1) * n];
                let r: Complex64 = q.iter().zip(&candidate).map(|(a, b)| a.conj() * b).sum();
                for (c, a) in candidate.iter_mut().zip(q) {
                    *c -= r * a;
                }
            }
        }
        let norm = candidate.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm < COMPLETION_SKIP_TOL {
            continue;
        }
        let dst = &mut buf[filled * n..(filled + 1) * n];
        for (d, c) in dst.iter_mut().zip(&candidate) {
            *d = c / norm;
        }
        filled += 1;
    }
    if filled < n {
        return Err(Error::CompletionFailed {
            found: filled - p,
            needed: n - p,
        });
    }
    SemiUnitary::new(out)
}

/// `log₂ det(I + A)` for Hermitian positive semidefinite `A`, via a Cholesky
/// factorisation of `I + A`.
pub fn log_det_eye_plus(a: &ComplexMatrix) -> Result<f64> {
    let m = a.nrows();
    if a.ncols() != m {
        return Err(Error::ShapeMismatch(format!(
            "expected a square matrix, got {}x{}",
            m,
            a.ncols()
        )));
    }
    let scale = a.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
    if !scale.is_finite() {
        return Err(Error::NonFinite("log_det_eye_plus input".into()));
    }
    for i in 0..m {
        for j in 0..=i {
            if (a[(i, j)] - a[(j, i)].conj()).norm() > 1e-10 * scale {
                return Err(Error::NotPositiveSemidefinite(format!(
                    "entry ({i},{j}) breaks Hermitian symmetry"
                )));
            }
        }
    }

    // Lower-triangular Cholesky of I + A, row by row.
    let mut l = ComplexMatrix::zeros(m, m);
    let mut log_det = 0.0;
    for j in 0..m {
        let mut d = 1.0 + a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d >= PSD_PIVOT_TOL) {
            return Err(Error::NotPositiveSemidefinite(format!("pivot {j} of I + A is {d:.3e}")));
        }
        let ljj = d.sqrt();
        l[(j, j)] = Complex64::new(ljj, 0.0);
        log_det += d.ln();
        for i in (j + 1)..m {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(log_det * std::f64::consts::LOG2_E)
}

/// `scale · X Xᴴ`.
pub fn scaled_gram(x: &ComplexMatrix, scale: f64) -> ComplexMatrix {
    (x * x.adjoint()) * Complex64::new(scale, 0.0)
}
