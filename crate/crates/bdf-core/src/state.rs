//! Admissible one-body states.
//!
//! A state is a Hermitian `Q` with `-Pi <= Q <= 1 - Pi` for a reference
//! projector `Pi`; equivalently all eigenvalues of `Q + Pi` lie in `[0, 1]`.
//! For the relativistic model `Pi` is the dressed vacuum projector and `Q`
//! the deviation from it; for the nonrelativistic model `Pi = 0` and
//! `Q` is an ordinary density matrix.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{BdfError, Result};
use crate::linalg::{eigh, CMatrix};

#[derive(Clone, Copy, Debug)]
pub struct Occupations {
    pub min: f64,
    pub max: f64,
}

const HERMITICITY_TOL: f64 = 1e-10;

pub fn check_hermitian(q: &CMatrix, tol: f64) -> Result<()> {
    let n = q.nrows();
    if n != q.ncols() {
        return Err(BdfError::Invariant("state matrix not square".into()));
    }
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((q[(i, j)] - q[(j, i)].conj()).norm());
        }
    }
    if worst > tol {
        return Err(BdfError::Invariant(format!(
            "state not Hermitian: defect {worst:.3e}"
        )));
    }
    Ok(())
}

/// Verify `eigs(Q + Pi) in [-tol, 1 + tol]`; returns the extreme
/// occupations so callers can report how tight the constraint sits.
pub fn check_admissible(q: &CMatrix, pi: &CMatrix, tol: f64) -> Result<Occupations> {
    check_hermitian(q, HERMITICITY_TOL)?;
    let sum = q + pi;
    let (vals, _) = eigh(&sum)?;
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min < -tol || max > 1.0 + tol {
        return Err(BdfError::Invariant(format!(
            "occupations [{min:.3e}, {max:.3e}] leave [0, 1] by more than {tol:.1e}"
        )));
    }
    Ok(Occupations { min, max })
}

/// Charge of a state relative to the reference: `Re tr Q`. On a finite
/// lattice the projector-relative trace coincides with the plain trace.
pub fn charge(q: &CMatrix) -> f64 {
    q.diag().sum().re
}

pub fn random_hermitian<R: Rng>(n: usize, scale: f64, rng: &mut R) -> CMatrix {
    let mut a = CMatrix::zeros((n, n));
    for i in 0..n {
        a[(i, i)] = Complex64::new(scale * rng.gen_range(-1.0..1.0), 0.0);
        for j in (i + 1)..n {
            let z = Complex64::new(
                scale * rng.gen_range(-1.0..1.0),
                scale * rng.gen_range(-1.0..1.0),
            );
            a[(i, j)] = z;
            a[(j, i)] = z.conj();
        }
    }
    a
}

/// Random admissible state: draw a random Hermitian matrix, squash its
/// spectrum into `[0, 1]` through a logistic map, subtract `Pi`.
pub fn random_admissible<R: Rng>(pi: &CMatrix, spread: f64, rng: &mut R) -> CMatrix {
    let n = pi.nrows();
    let h = random_hermitian(n, spread, rng);
    let (vals, vecs) = eigh(&h).expect("random Hermitian eigensolve");
    let mut out = CMatrix::zeros((n, n));
    for k in 0..n {
        let occ = 1.0 / (1.0 + (-vals[k]).exp());
        let v = vecs.column(k);
        for r in 0..n {
            for c in 0..n {
                out[(r, c)] += occ * v[r] * v[c].conj();
            }
        }
    }
    &out - pi
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_states_are_admissible() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 12;
        let h = random_hermitian(n, 1.0, &mut rng);
        let (_, vecs) = eigh(&h).unwrap();
        // a projector onto the first 5 columns as the reference
        let mut pi = CMatrix::zeros((n, n));
        for k in 0..5 {
            let v = vecs.column(k);
            for r in 0..n {
                for c in 0..n {
                    pi[(r, c)] += v[r] * v[c].conj();
                }
            }
        }
        for _ in 0..4 {
            let q = random_admissible(&pi, 2.0, &mut rng);
            let occ = check_admissible(&q, &pi, 1e-9).unwrap();
            assert!(occ.min >= -1e-9 && occ.max <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn inadmissible_states_are_rejected() {
        let n = 6;
        let pi = CMatrix::zeros((n, n));
        let mut q = CMatrix::zeros((n, n));
        q[(0, 0)] = Complex64::new(1.7, 0.0);
        assert!(check_admissible(&q, &pi, 1e-9).is_err());
        let mut nh = CMatrix::zeros((n, n));
        nh[(0, 1)] = Complex64::new(0.3, 0.0);
        assert!(check_hermitian(&nh, 1e-10).is_err());
    }
}
