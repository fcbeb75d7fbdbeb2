//! Geometry of projector pairs.
//!
//! Any two orthogonal projectors `P` and `Pi` decompose into invariant
//! blocks: directions kept (in both ranges), created (in `ran P` but
//! orthogonal to `ran Pi`), annihilated (in `ran Pi`, killed by `P`), and
//! two-dimensional rotations. The rotation data comes from the compression
//! `S = Y^H P Y` on an orthonormal basis `Y` of `ran Pi`: an eigenvalue
//! `c in (0, 1)` with eigenvector `u` pairs with
//! `v = (1 - Pi) P u / sqrt(c (1 - c))` and mixing weight
//! `lambda = sqrt((1 - c)/c)`, and `(u + lambda v)/sqrt(1 + lambda^2)` lies
//! in `ran P`. Reconstruction from the parts is exact and tested.
//!
//! The overlap amplitude between the quasi-free vacua labelled by the two
//! projectors is `prod_j (1 + lambda_j^2)^{-1/2}` when no direction is
//! created or annihilated outright, and zero otherwise.

use ndarray::s;
use num_complex::Complex64;

use crate::density::{coulomb_pairing, density_of, ChargeDensity};
use crate::energy::{bdf_energy, exchange_term, mean_field_operator};
use crate::error::{BdfError, Result};
use crate::lattice::MomentumLattice;
use crate::linalg::{eigh, expm_antihermitian, matmul, CMatrix, CVector, Op};

#[derive(Clone, Debug)]
pub struct RotatedPair {
    /// Unit vector in `ran Pi`.
    pub occupied: CVector,
    /// Unit vector in `ker Pi` it rotates toward.
    pub empty: CVector,
    /// Mixing weight `tan` of the rotation angle.
    pub lambda: f64,
}

#[derive(Clone, Debug)]
pub struct ProjectorDecomposition {
    /// `ran P` directions orthogonal to `ran Pi`.
    pub created: Vec<CVector>,
    /// `ran Pi` directions annihilated by `P`.
    pub annihilated: Vec<CVector>,
    /// Directions common to both ranges.
    pub kept: Vec<CVector>,
    pub rotations: Vec<RotatedPair>,
    /// `rank P - rank Pi`.
    pub relative_charge: i64,
}

impl ProjectorDecomposition {
    /// Rebuild `P` from the parts.
    pub fn reconstruct(&self, dim: usize) -> CMatrix {
        let mut p = CMatrix::zeros((dim, dim));
        let mut add = |v: &CVector, w: f64| {
            for r in 0..dim {
                for c in 0..dim {
                    p[(r, c)] += w * v[r] * v[c].conj();
                }
            }
        };
        for f in &self.created {
            add(f, 1.0);
        }
        for k in &self.kept {
            add(k, 1.0);
        }
        for rot in &self.rotations {
            let w = 1.0 / (1.0 + rot.lambda * rot.lambda);
            let mixed: CVector = rot
                .occupied
                .iter()
                .zip(rot.empty.iter())
                .map(|(u, v)| u + rot.lambda * v)
                .collect();
            add(&mixed, w);
        }
        p
    }

    /// Overlap amplitude of the two labelled quasi-free vacua.
    pub fn amplitude(&self) -> f64 {
        if !self.created.is_empty() || !self.annihilated.is_empty() || self.relative_charge != 0 {
            return 0.0;
        }
        self.rotations
            .iter()
            .map(|r| 1.0 / (1.0 + r.lambda * r.lambda).sqrt())
            .product()
    }
}

/// Verify a matrix is a projector within `tol` and return its rank.
pub fn projector_rank(p: &CMatrix, tol: f64) -> Result<usize> {
    let (vals, _) = eigh(p)?;
    let mut rank = 0usize;
    for &v in vals.iter() {
        if (v - 1.0).abs() <= tol {
            rank += 1;
        } else if v.abs() > tol {
            return Err(BdfError::Invariant(format!(
                "eigenvalue {v} is neither 0 nor 1 within {tol:.1e}"
            )));
        }
    }
    Ok(rank)
}

/// Split a projector pair into kept, created, annihilated, and rotated
/// directions. `tol` separates occupation eigenvalues from 0 and 1.
pub fn decompose_projector_pair(
    p: &CMatrix,
    pi: &CMatrix,
    tol: f64,
) -> Result<ProjectorDecomposition> {
    let n = p.nrows();
    if pi.nrows() != n || p.ncols() != n || pi.ncols() != n {
        return Err(BdfError::Invariant("projector dimensions differ".into()));
    }
    let rank_p = projector_rank(p, 1e-8)?;
    let rank_pi = projector_rank(pi, 1e-8)?;

    // split the reference basis: eigh sorts ascending, zeros first
    let (pi_vals, pi_vecs) = eigh(pi)?;
    let m = pi_vals.iter().filter(|v| **v > 0.5).count();
    let x = pi_vecs.slice(s![.., ..n - m]).to_owned(); // ker Pi
    let y = pi_vecs.slice(s![.., n - m..]).to_owned(); // ran Pi

    // compression of P on ran Pi
    let py = matmul(p, Op::None, &y, Op::None);
    let s_mat = matmul(&y, Op::Adjoint, &py, Op::None);
    let (c_vals, c_vecs) = eigh(&s_mat)?;

    let mut kept = Vec::new();
    let mut annihilated = Vec::new();
    let mut rotations = Vec::new();
    for j in 0..m {
        let c = c_vals[j].clamp(0.0, 1.0);
        let w = c_vecs.column(j);
        let u: CVector = (0..n)
            .map(|r| (0..m).map(|k| y[(r, k)] * w[k]).sum())
            .collect();
        if c >= 1.0 - tol {
            kept.push(u);
        } else if c <= tol {
            annihilated.push(u);
        } else {
            // v = (1 - Pi) P u / sqrt(c (1 - c))
            let pu: CVector = (0..n)
                .map(|r| (0..n).map(|k| p[(r, k)] * u[k]).sum())
                .collect();
            let pi_pu: CVector = (0..n)
                .map(|r| (0..n).map(|k| pi[(r, k)] * pu[k]).sum())
                .collect();
            let mut v: CVector = &pu - &pi_pu;
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            v.mapv_inplace(|z| z / norm);
            rotations.push(RotatedPair {
                occupied: u,
                empty: v,
                lambda: ((1.0 - c) / c).sqrt(),
            });
        }
    }

    // created directions: eigenvalue-1 eigenvectors of the compression on ker Pi
    let mut created = Vec::new();
    if n > m {
        let px = matmul(p, Op::None, &x, Op::None);
        let t_mat = matmul(&x, Op::Adjoint, &px, Op::None);
        let (t_vals, t_vecs) = eigh(&t_mat)?;
        for j in 0..n - m {
            if t_vals[j] >= 1.0 - tol {
                let w = t_vecs.column(j);
                let f: CVector = (0..n)
                    .map(|r| (0..n - m).map(|k| x[(r, k)] * w[k]).sum())
                    .collect();
                created.push(f);
            }
        }
    }

    rotations.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap());
    Ok(ProjectorDecomposition {
        created,
        annihilated,
        kept,
        rotations,
        relative_charge: rank_p as i64 - rank_pi as i64,
    })
}

/// Conjugate a projector by `exp(K)` for anti-Hermitian `K`: a smooth
/// chart of the projector manifold around `pi`.
pub fn rotate_projector(pi: &CMatrix, k: &CMatrix) -> Result<CMatrix> {
    let u = expm_antihermitian(k)?;
    let upi = matmul(&u, Op::None, pi, Op::None);
    Ok(matmul(&upi, Op::None, &u, Op::Adjoint))
}

pub struct PurifyOutcome {
    pub q: CMatrix,
    pub transfers: usize,
    pub energy_before: f64,
    pub energy_after: f64,
}

/// Push fractional occupations to 0 or 1 without raising the energy above
/// the input's.
///
/// Transfers between two eigendirections of `Q + Pi` keep the state
/// admissible and restrict the energy to an exact quadratic in the moved
/// amount. Self-direct cancels self-exchange, so only the cross coupling
/// survives in the quadratic coefficient; because the kernel drops its
/// zero mode, the cross exchange can exceed the direct term and a pair
/// restriction can turn convex, meaning every endpoint of that pair climbs.
/// The loop therefore takes the best endpoint move across all fractional
/// pairs while the running total stays at or below zero, funds climbs with
/// descent banked by earlier moves, and descends to an interior vertex to
/// grow the bank when every endpoint is out of budget. At most one
/// fractional occupation survives (none when the total charge is an
/// integer); if no extremal state is reachable at or below the starting
/// energy the routine reports non-convergence instead of raising it.
pub fn lieb_purify(
    lattice: &MomentumLattice,
    h: &CMatrix,
    alpha: f64,
    nu: &ChargeDensity,
    q: &CMatrix,
    pi: &CMatrix,
    tol: f64,
) -> Result<PurifyOutcome> {
    let n = q.nrows();
    let dmat = q + pi;
    let (mut occ, vecs) = eigh(&dmat)?;
    for c in occ.iter_mut() {
        *c = c.clamp(0.0, 1.0);
    }
    let energy_before = bdf_energy(lattice, h, alpha, nu, q).total();

    let column = |j: usize| -> CVector { vecs.column(j).to_owned() };
    let rank_one = |j: usize| -> CMatrix {
        let v = column(j);
        let mut m = CMatrix::zeros((n, n));
        for r in 0..n {
            for c in 0..n {
                m[(r, c)] = v[r] * v[c].conj();
            }
        }
        m
    };

    let rebuild = |occ: &[f64]| -> CMatrix {
        let mut d = CMatrix::zeros((n, n));
        for (j, &w) in occ.iter().enumerate() {
            if w != 0.0 {
                d = d + rank_one(j).mapv(|z| z * Complex64::new(w, 0.0));
            }
        }
        &d - pi
    };

    let fractional =
        |occ: &[f64]| -> Vec<usize> {
            (0..n)
                .filter(|&j| occ[j] > tol && occ[j] < 1.0 - tol)
                .collect()
        };

    let mut transfers = 0usize;
    let mut occ_vec: Vec<f64> = occ.to_vec();
    // running exact energy change; the acceptance condition below keeps it
    // at or under one slack at every accepted state
    let mut banked = 0.0f64;
    loop {
        let frac = fractional(&occ_vec);
        if frac.len() < 2 {
            break;
        }
        if transfers > 8 * n * n {
            return Err(BdfError::NonConvergence {
                what: "occupation purification".into(),
                residual: frac.len() as f64,
                iterations: transfers,
            });
        }
        let current_q = rebuild(&occ_vec);
        let f = mean_field_operator(lattice, h, alpha, nu, &current_q);

        // cheapest endpoint move and deepest interior descent over all pairs
        let mut best_end: Option<(usize, usize, f64, f64)> = None;
        let mut best_vertex: Option<(usize, usize, f64, f64)> = None;
        let mut slack = 1e-13f64;
        for (s, &i) in frac.iter().enumerate() {
            for &j in &frac[s + 1..] {
                let delta = &rank_one(i) - &rank_one(j);
                let a = crate::linalg::trace_product(&f, &delta).re;
                let rho_d = density_of(lattice, &delta);
                let b = 0.5
                    * alpha
                    * (coulomb_pairing(lattice, &rho_d, &rho_d)
                        - exchange_term(lattice, &delta));
                slack = slack.max(1e-13 * (1.0 + a.abs() + b.abs()));
                // admissible transfer interval for occ_i + t, occ_j - t
                let lo = (-occ_vec[i]).max(occ_vec[j] - 1.0);
                let hi = (1.0 - occ_vec[i]).min(occ_vec[j]);
                for (t, val) in [(lo, a * lo + b * lo * lo), (hi, a * hi + b * hi * hi)] {
                    if best_end.is_none_or(|(_, _, _, v)| val < v) {
                        best_end = Some((i, j, t, val));
                    }
                }
                if b > 0.0 {
                    let t_star = (-a / (2.0 * b)).clamp(lo, hi);
                    let val = a * t_star + b * t_star * t_star;
                    if best_vertex.is_none_or(|(_, _, _, v)| val < v) {
                        best_vertex = Some((i, j, t_star, val));
                    }
                }
            }
        }
        let (i, j, t, val) = best_end.expect("two fractional levels give a pair");
        if banked + val <= slack {
            occ_vec[i] = (occ_vec[i] + t).clamp(0.0, 1.0);
            occ_vec[j] = (occ_vec[j] - t).clamp(0.0, 1.0);
            banked += val;
            transfers += 1;
            continue;
        }
        match best_vertex {
            // both levels stay fractional, but the descent funds later climbs
            Some((vi, vj, vt, vval)) if vval < -slack => {
                occ_vec[vi] = (occ_vec[vi] + vt).clamp(0.0, 1.0);
                occ_vec[vj] = (occ_vec[vj] - vt).clamp(0.0, 1.0);
                banked += vval;
                transfers += 1;
            }
            _ => {
                return Err(BdfError::NonConvergence {
                    what: "occupation purification: every remaining transfer raises the energy"
                        .into(),
                    residual: frac.len() as f64,
                    iterations: transfers,
                });
            }
        }
    }

    let q_out = rebuild(&occ_vec);
    let energy_after = bdf_energy(lattice, h, alpha, nu, &q_out).total();
    Ok(PurifyOutcome {
        q: q_out,
        transfers,
        energy_before,
        energy_after,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::ExternalDensity;
    use crate::state::random_hermitian;
    use crate::vacuum::{solve_vacuum_lattice, LatticeVacuumConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn projector_from_columns(vecs: &CMatrix, cols: std::ops::Range<usize>) -> CMatrix {
        let n = vecs.nrows();
        let mut p = CMatrix::zeros((n, n));
        for k in cols {
            for r in 0..n {
                for c in 0..n {
                    p[(r, c)] += vecs[(r, k)] * vecs[(c, k)].conj();
                }
            }
        }
        p
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    fn det(mut a: CMatrix) -> Complex64 {
        let n = a.nrows();
        let mut result = Complex64::new(1.0, 0.0);
        for col in 0..n {
            let mut piv = col;
            for r in col + 1..n {
                if a[(r, col)].norm() > a[(piv, col)].norm() {
                    piv = r;
                }
            }
            if a[(piv, col)].norm() < 1e-300 {
                return Complex64::new(0.0, 0.0);
            }
            if piv != col {
                for c in 0..n {
                    let tmp = a[(col, c)];
                    a[(col, c)] = a[(piv, c)];
                    a[(piv, c)] = tmp;
                }
                result = -result;
            }
            result *= a[(col, col)];
            for r in col + 1..n {
                let factor = a[(r, col)] / a[(col, col)];
                for c in col..n {
                    let sub = factor * a[(col, c)];
                    a[(r, c)] -= sub;
                }
            }
        }
        result
    }

    /// Independent amplitude oracle: |det(Y^H B)| over orthonormal bases of
    /// the two ranges (the overlap of the corresponding determinantal
    /// states).
    fn amplitude_oracle(p: &CMatrix, pi: &CMatrix) -> f64 {
        let n = p.nrows();
        let (pv, pvecs) = eigh(p).unwrap();
        let (qv, qvecs) = eigh(pi).unwrap();
        let np = pv.iter().filter(|v| **v > 0.5).count();
        let nq = qv.iter().filter(|v| **v > 0.5).count();
        if np != nq {
            return 0.0;
        }
        let b = pvecs.slice(s![.., n - np..]).to_owned();
        let y = qvecs.slice(s![.., n - nq..]).to_owned();
        det(matmul(&y, Op::Adjoint, &b, Op::None)).norm()
    }

    #[test]
    fn rotated_projector_decomposes_and_reconstructs() {
        let n = 12;
        let m = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (_, basis) = eigh(&random_hermitian(n, 1.0, &mut rng)).unwrap();
        let pi = projector_from_columns(&basis, 0..m);
        let k = random_hermitian(n, 0.25, &mut rng).mapv(|z| Complex64::new(0.0, 1.0) * z);
        let p = rotate_projector(&pi, &k).unwrap();

        let dec = decompose_projector_pair(&p, &pi, 1e-10).unwrap();
        assert_eq!(dec.relative_charge, 0);
        let back = dec.reconstruct(n);
        assert!(crate::linalg::frobenius_norm(&(&back - &p)) < 1e-9);

        let amp = dec.amplitude();
        assert!(amp > 0.0 && amp <= 1.0);
        let oracle = amplitude_oracle(&p, &pi);
        assert!((amp - oracle).abs() < 1e-9, "{amp} vs {oracle}");
    }

    #[test]
    fn planar_rotations_give_tangent_weights() {
        // Rotate e1 toward e3 by 45 degrees and e2 toward e4 by atan(2):
        // weights are the tangents and the amplitude is
        // cos(pi/4) * cos(atan 2) = 1/sqrt(10).
        let n = 4;
        let mut pi = CMatrix::zeros((n, n));
        pi[(0, 0)] = Complex64::new(1.0, 0.0);
        pi[(1, 1)] = Complex64::new(1.0, 0.0);
        let mut k = CMatrix::zeros((n, n));
        let th1 = PI / 4.0;
        let th2 = 2.0f64.atan();
        k[(0, 2)] = Complex64::new(th1, 0.0);
        k[(2, 0)] = Complex64::new(-th1, 0.0);
        k[(1, 3)] = Complex64::new(th2, 0.0);
        k[(3, 1)] = Complex64::new(-th2, 0.0);
        let p = rotate_projector(&pi, &k).unwrap();

        let dec = decompose_projector_pair(&p, &pi, 1e-10).unwrap();
        assert_eq!(dec.rotations.len(), 2);
        assert!((dec.rotations[0].lambda - 1.0).abs() < 1e-10);
        assert!((dec.rotations[1].lambda - 2.0).abs() < 1e-10);
        let amp = dec.amplitude();
        assert!((amp - 1.0 / 10.0f64.sqrt()).abs() < 1e-12, "{amp}");
        assert!((amp - 0.3162277660168379).abs() < 1e-12);

        // single 45-degree rotation: amplitude 1/sqrt(2)
        let mut k1 = CMatrix::zeros((n, n));
        k1[(0, 2)] = Complex64::new(th1, 0.0);
        k1[(2, 0)] = Complex64::new(-th1, 0.0);
        let p1 = rotate_projector(&pi, &k1).unwrap();
        let dec1 = decompose_projector_pair(&p1, &pi, 1e-10).unwrap();
        let amp1 = dec1.amplitude();
        assert!((amp1 - 1.0 / 2.0f64.sqrt()).abs() < 1e-12);
        assert!((amp1 - amplitude_oracle(&p1, &pi)).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_moves_kill_the_amplitude() {
        let n = 6;
        let mut pi = CMatrix::zeros((n, n));
        pi[(0, 0)] = Complex64::new(1.0, 0.0);
        pi[(1, 1)] = Complex64::new(1.0, 0.0);

        // full 90-degree rotation: one direction annihilated, one created
        let mut k = CMatrix::zeros((n, n));
        k[(0, 2)] = Complex64::new(PI / 2.0, 0.0);
        k[(2, 0)] = Complex64::new(-PI / 2.0, 0.0);
        let p = rotate_projector(&pi, &k).unwrap();
        let dec = decompose_projector_pair(&p, &pi, 1e-10).unwrap();
        assert_eq!(dec.created.len(), 1);
        assert_eq!(dec.annihilated.len(), 1);
        assert_eq!(dec.kept.len(), 1);
        assert_eq!(dec.relative_charge, 0);
        assert_eq!(dec.amplitude(), 0.0);
        assert!((amplitude_oracle(&p, &pi)).abs() < 1e-12);
        let back = dec.reconstruct(n);
        assert!(crate::linalg::frobenius_norm(&(&back - &p)) < 1e-10);

        // add one particle: charge sector changes, amplitude vanishes
        let mut p_plus = pi.clone();
        p_plus[(4, 4)] = Complex64::new(1.0, 0.0);
        let dec2 = decompose_projector_pair(&p_plus, &pi, 1e-10).unwrap();
        assert_eq!(dec2.relative_charge, 1);
        assert_eq!(dec2.created.len(), 1);
        assert_eq!(dec2.amplitude(), 0.0);
    }

    #[test]
    fn charge_bookkeeping_tracks_trace() {
        // relative charge from rank counting equals the trace of P - Pi
        let n = 10;
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let (_, basis) = eigh(&random_hermitian(n, 1.0, &mut rng)).unwrap();
        for (mp, mpi) in [(4usize, 4usize), (6, 4), (3, 5)] {
            let p = projector_from_columns(&basis, 0..mp);
            let pi = projector_from_columns(&basis, 0..mpi);
            let dec = decompose_projector_pair(&p, &pi, 1e-10).unwrap();
            assert_eq!(dec.relative_charge, mp as i64 - mpi as i64);
            let tr: Complex64 = (&p - &pi).diag().sum();
            assert!((tr.re - dec.relative_charge as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn purification_clears_fractional_occupations() {
        let lat = MomentumLattice::build(2.0 * PI, 1.2, 4).unwrap();
        let alpha = 0.2;
        let vac = solve_vacuum_lattice(&lat, alpha, 1.0, &LatticeVacuumConfig::default()).unwrap();
        let pi = vac.projector_matrix(&lat);
        let h = vac.dressed_matrix(&lat);
        let nu = ExternalDensity::point_like(1.0, 0.5).sample(&lat);

        // fill two mean-field levels fractionally above the vacuum
        let (_, vecs) = eigh(&h).unwrap();
        let n = lat.total_dim();
        let n_minus = n / 2;
        let mut q = CMatrix::zeros((n, n));
        for (slot, w) in [(n_minus, 0.7), (n_minus + 1, 0.3)] {
            let v = vecs.column(slot);
            for r in 0..n {
                for c in 0..n {
                    q[(r, c)] += w * v[r] * v[c].conj();
                }
            }
        }
        let charge_before = crate::state::charge(&q);
        let out = lieb_purify(&lat, &h, alpha, &nu, &q, &pi, 1e-9).unwrap();
        assert!(out.transfers >= 1);
        assert!(out.energy_after <= out.energy_before + 1e-10);
        assert!((crate::state::charge(&out.q) - charge_before).abs() < 1e-9);
        // final occupations integral
        let (occ, _) = eigh(&(&out.q + &pi)).unwrap();
        for &c in occ.iter() {
            assert!(c.abs() < 1e-8 || (c - 1.0).abs() < 1e-8, "occupation {c}");
        }
        let occ_check = crate::state::check_admissible(&out.q, &pi, 1e-8).unwrap();
        assert!(occ_check.min > -1e-8);
    }
}
