//! Dense complex linear algebra on top of system LAPACK/BLAS.
//!
//! Matrices are `ndarray` arrays in standard (row-major) layout; the FFI
//! shims below do the row-major <-> column-major bookkeeping once, behind
//! safe wrappers. Only the two routines that dominate runtime are bound:
//! `zheev` (Hermitian eigendecomposition) and `zgemm` (matrix product).

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{BdfError, Result};

pub type CMatrix = Array2<Complex64>;
pub type CVector = Array1<Complex64>;

extern "C" {
    fn zheev_(
        jobz: *const u8,
        uplo: *const u8,
        n: *const i32,
        a: *mut Complex64,
        lda: *const i32,
        w: *mut f64,
        work: *mut Complex64,
        lwork: *const i32,
        rwork: *mut f64,
        info: *mut i32,
    );

    #[allow(clippy::too_many_arguments)]
    fn zgemm_(
        transa: *const u8,
        transb: *const u8,
        m: *const i32,
        n: *const i32,
        k: *const i32,
        alpha: *const Complex64,
        a: *const Complex64,
        lda: *const i32,
        b: *const Complex64,
        ldb: *const i32,
        beta: *const Complex64,
        c: *mut Complex64,
        ldc: *const i32,
    );
}

/// Which side-operation to apply to a factor of [`matmul`].
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Op {
    None,
    /// Conjugate transpose.
    Adjoint,
}

/// Dense product `op(a) * op(b)` via BLAS.
///
/// Row-major arrays are handed to the column-major BLAS as their transposes:
/// `C^T = op(b)^T * op(a)^T`, so the factors swap sides and `Adjoint` becomes
/// a plain conjugate on the buffer BLAS already sees transposed.
pub fn matmul(a: &CMatrix, opa: Op, b: &CMatrix, opb: Op) -> CMatrix {
    let (am, ak) = match opa {
        Op::None => (a.nrows(), a.ncols()),
        Op::Adjoint => (a.ncols(), a.nrows()),
    };
    let (bk, bn) = match opb {
        Op::None => (b.nrows(), b.ncols()),
        Op::Adjoint => (b.ncols(), b.nrows()),
    };
    assert_eq!(ak, bk, "inner dimensions must agree");

    let a_buf = as_standard(a);
    let b_buf = as_standard(b);
    let mut c = vec![Complex64::new(0.0, 0.0); am * bn];

    // Column-major view of a row-major buffer is the transpose, so:
    //   C_rm = op(a) op(b)  <=>  C_cm = [op(b)]^T [op(a)]^T.
    // For the buffer x_rm seen as x^T by BLAS: [x]^T   -> trans = 'N'
    //                                          [x^H]^T -> trans = 'C' on x^T
    // is wrong ((x^T)^H = conj x), so Adjoint is implemented by asking BLAS
    // for the conjugate-transpose of the transposed buffer *and* swapping
    // the logical dimensions, which is exactly ((x^T)^H)^T = x^H. Dimension
    // bookkeeping below is in BLAS (column-major) terms.
    let (ta, lda) = match opa {
        Op::None => (b'N', ak as i32),
        Op::Adjoint => (b'C', am as i32),
    };
    let (tb, ldb) = match opb {
        Op::None => (b'N', bn as i32),
        Op::Adjoint => (b'C', bk as i32),
    };
    let m = bn as i32; // rows of C_cm
    let n = am as i32; // cols of C_cm
    let k = ak as i32;
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    unsafe {
        zgemm_(
            &tb,
            &ta,
            &m,
            &n,
            &k,
            &one,
            b_buf.as_ptr(),
            &ldb,
            a_buf.as_ptr(),
            &lda,
            &zero,
            c.as_mut_ptr(),
            &m,
        );
    }
    Array2::from_shape_vec((am, bn), c).expect("gemm output shape")
}

fn as_standard(a: &CMatrix) -> std::borrow::Cow<'_, [Complex64]> {
    match a.as_slice() {
        Some(s) => std::borrow::Cow::Borrowed(s),
        None => std::borrow::Cow::Owned(a.iter().cloned().collect()),
    }
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// columns. Each eigenvector is rotated to a deterministic phase (largest
/// modulus entry real and positive) so repeated runs produce identical
/// output down to the last bit.
pub fn eigh(a: &CMatrix) -> Result<(Array1<f64>, CMatrix)> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "eigh needs a square matrix");
    if n == 0 {
        return Ok((Array1::zeros(0), Array2::zeros((0, 0))));
    }
    // The row-major buffer read column-major is A^T = conj(A) for Hermitian
    // A; its eigenvalues agree with A's and eigenvectors conjugate.
    let mut buf: Vec<Complex64> = as_standard(a).into_owned();
    let mut vals = vec![0.0f64; n];
    let mut rwork = vec![0.0f64; std::cmp::max(1, 3 * n - 2)];
    let jobz = b'V';
    let uplo = b'L';
    let ni = n as i32;
    let mut info = 0i32;

    let mut work_query = [Complex64::new(0.0, 0.0)];
    let lwork_query = -1i32;
    unsafe {
        zheev_(
            &jobz,
            &uplo,
            &ni,
            buf.as_mut_ptr(),
            &ni,
            vals.as_mut_ptr(),
            work_query.as_mut_ptr(),
            &lwork_query,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(BdfError::Linalg(format!("zheev workspace query failed: info={info}")));
    }
    let lwork = work_query[0].re as i32;
    let mut work = vec![Complex64::new(0.0, 0.0); lwork.max(1) as usize];
    unsafe {
        zheev_(
            &jobz,
            &uplo,
            &ni,
            buf.as_mut_ptr(),
            &ni,
            vals.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(BdfError::Linalg(format!("zheev failed: info={info}")));
    }

    // buf now holds eigenvectors of conj(A) column-major; conjugating gives
    // eigenvectors of A. Assemble row-major with vectors as columns.
    let mut vecs = Array2::zeros((n, n));
    for j in 0..n {
        for i in 0..n {
            vecs[(i, j)] = buf[i + j * n].conj();
        }
    }
    fix_phases(&mut vecs);
    Ok((Array1::from_vec(vals), vecs))
}

/// Rotate each column so its largest-modulus entry is real positive.
fn fix_phases(vecs: &mut CMatrix) {
    let (n, m) = (vecs.nrows(), vecs.ncols());
    for j in 0..m {
        let mut best = 0usize;
        let mut best_norm = 0.0f64;
        for i in 0..n {
            let nr = vecs[(i, j)].norm_sqr();
            if nr > best_norm * (1.0 + 1e-12) {
                best = i;
                best_norm = nr;
            }
        }
        if best_norm > 0.0 {
            let z = vecs[(best, j)];
            let phase = z / z.norm();
            for i in 0..n {
                vecs[(i, j)] *= phase.conj();
            }
        }
    }
}

/// Hermitian part `(a + a^H)/2`, used to scrub accumulated roundoff.
pub fn hermitize(a: &mut CMatrix) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)].conj());
            a[(i, j)] = m;
            a[(j, i)] = m.conj();
        }
        a[(i, i)] = Complex64::new(a[(i, i)].re, 0.0);
    }
}

pub fn trace(a: &CMatrix) -> Complex64 {
    a.diag().sum()
}

/// `tr(a b)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    assert_eq!(a.ncols(), b.nrows());
    assert_eq!(a.nrows(), b.ncols());
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn frobenius_norm(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Operator norm of a Hermitian matrix (largest eigenvalue magnitude).
pub fn op_norm_hermitian(a: &CMatrix) -> Result<f64> {
    let (vals, _) = eigh(a)?;
    Ok(vals.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Projector onto the span of columns `lo..hi` of `vecs`.
pub fn projector_from_columns(vecs: &CMatrix, lo: usize, hi: usize) -> CMatrix {
    let sel = vecs.slice(ndarray::s![.., lo..hi]).to_owned();
    matmul(&sel, Op::None, &sel, Op::Adjoint)
}

/// `exp(k)` for anti-Hermitian `k` (so the result is unitary), computed
/// through the Hermitian eigendecomposition of `i k`.
pub fn expm_antihermitian(k: &CMatrix) -> Result<CMatrix> {
    let i = Complex64::new(0.0, 1.0);
    let mut h = k.mapv(|z| i * z);
    hermitize(&mut h);
    let (vals, vecs) = eigh(&h)?;
    // exp(k) = exp(-i h) = V diag(e^{-i lambda}) V^H
    let mut scaled = vecs.clone();
    for (j, lam) in vals.iter().enumerate() {
        let ph = Complex64::from_polar(1.0, -lam);
        scaled.column_mut(j).mapv_inplace(|z| z * ph);
    }
    Ok(matmul(&scaled, Op::None, &vecs, Op::Adjoint))
}
