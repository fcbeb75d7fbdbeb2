//! The mean-field energy functional and its gradient.
//!
//! For a one-body operator `h`, coupling `alpha`, external density `nu` and
//! state `Q`,
//!
//! `E(Q) = tr(h Q) - alpha D(rho_Q, nu) + (alpha/2) D(rho_Q, rho_Q)
//!         - (alpha/2) Ex(Q)`,
//!
//! where `Ex(Q) = tr(Q conv(Q))` with the Coulomb kernel convolution. The
//! gradient is the mean-field operator
//!
//! `F(Q) = h + alpha V[rho_Q - nu] - alpha conv(Q)`,
//!
//! with `V[rho](p, q) = W(p - q) rhohat(p - q)`. Since the functional is
//! quadratic, `E(Q + t Delta) = E(Q) + a t + b t^2` exactly, with
//! `a = tr(F(Q) Delta)` and `b = (alpha/2)(D(rho_Delta, rho_Delta)
//! - Ex(Delta))`; the self-consistent iteration exploits this.

use num_complex::Complex64;

use crate::density::{coulomb_pairing, density_of, ChargeDensity};
use crate::lattice::MomentumLattice;
use crate::linalg::{trace_product, CMatrix};

/// Signed energy components; `total` is their sum.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct EnergyBreakdown {
    /// `tr(h Q)`
    pub one_body: f64,
    /// `-alpha D(rho_Q, nu)`
    pub source: f64,
    /// `+(alpha/2) D(rho_Q, rho_Q)`
    pub hartree: f64,
    /// `-(alpha/2) Ex(Q)`
    pub exchange: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.one_body + self.source + self.hartree + self.exchange
    }
}

/// `Ex(Q) = Re tr(Q conv(Q))`.
pub fn exchange_term(lattice: &MomentumLattice, q: &CMatrix) -> f64 {
    let conv = lattice.convolve(q);
    trace_product(q, &conv).re
}

/// Multiplication operator `V[rho](p, q) = W(p - q) rhohat(p - q) I`.
pub fn potential_matrix(lattice: &MomentumLattice, rho: &ChargeDensity) -> CMatrix {
    let sd = lattice.spinor_dim;
    let m = lattice.n_modes();
    let mut v = CMatrix::zeros((m * sd, m * sd));
    for d in 0..lattice.n_diffs() {
        let w = lattice.coulomb_w(d);
        if w == 0.0 {
            continue;
        }
        let coeff = w * rho.values[d];
        for &(i, j) in lattice.pairs_for(d) {
            let (r0, c0) = (i as usize * sd, j as usize * sd);
            for s in 0..sd {
                v[(r0 + s, c0 + s)] += coeff;
            }
        }
    }
    v
}

pub fn bdf_energy(
    lattice: &MomentumLattice,
    h: &CMatrix,
    alpha: f64,
    nu: &ChargeDensity,
    q: &CMatrix,
) -> EnergyBreakdown {
    let rho = density_of(lattice, q);
    EnergyBreakdown {
        one_body: trace_product(h, q).re,
        source: -alpha * coulomb_pairing(lattice, &rho, nu),
        hartree: 0.5 * alpha * coulomb_pairing(lattice, &rho, &rho),
        exchange: -0.5 * alpha * exchange_term(lattice, q),
    }
}

/// Gradient of the energy at `Q`.
pub fn mean_field_operator(
    lattice: &MomentumLattice,
    h: &CMatrix,
    alpha: f64,
    nu: &ChargeDensity,
    q: &CMatrix,
) -> CMatrix {
    let rho = density_of(lattice, q);
    let eff = rho.difference(nu);
    assemble_mean_field(lattice, h, alpha, &eff, &lattice.convolve(q))
}

/// Mean-field operator from precomputed pieces: `eff = rho_Q - nu` and
/// `conv_q = conv(Q)`. The self-consistent loop caches both.
pub fn assemble_mean_field(
    lattice: &MomentumLattice,
    h: &CMatrix,
    alpha: f64,
    eff: &ChargeDensity,
    conv_q: &CMatrix,
) -> CMatrix {
    let mut f = potential_matrix(lattice, eff);
    f.zip_mut_with(conv_q, |v, c| *v = Complex64::new(alpha, 0.0) * (*v - c));
    &f + h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::ExternalDensity;
    use crate::state::{random_admissible, random_hermitian};
    use crate::vacuum::{negative_projector, solve_vacuum_lattice, LatticeVacuumConfig};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn seven_mode() -> MomentumLattice {
        MomentumLattice::build(2.0 * PI, 1.2, 4).unwrap()
    }

    /// Brute-force exchange: loop over all block pairs related by a common
    /// shift, no reuse of the convolution code path.
    fn exchange_oracle(lat: &MomentumLattice, q: &CMatrix) -> f64 {
        let sd = lat.spinor_dim;
        let m = lat.n_modes();
        let vol = lat.volume();
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                for r in 0..m {
                    for s in 0..m {
                        let ni = lat.modes[i];
                        let nj = lat.modes[j];
                        let nr = lat.modes[r];
                        let ns = lat.modes[s];
                        let shift = [nr[0] - ni[0], nr[1] - ni[1], nr[2] - ni[2]];
                        if [ns[0] - nj[0], ns[1] - nj[1], ns[2] - nj[2]] != shift {
                            continue;
                        }
                        let d = match lat.diff_index_of(&shift) {
                            Some(d) => d,
                            None => continue,
                        };
                        let w = lat.coulomb_w(d);
                        if w == 0.0 {
                            continue;
                        }
                        // tr[ Q(i,j) Q(r,s)^H ]
                        let mut t = Complex64::new(0.0, 0.0);
                        for a in 0..sd {
                            for b in 0..sd {
                                t += q[(i * sd + a, j * sd + b)]
                                    * q[(r * sd + a, s * sd + b)].conj();
                            }
                        }
                        acc += (w * t).re / vol;
                    }
                }
            }
        }
        acc
    }

    #[test]
    fn exchange_matches_brute_force_oracle() {
        let lat = seven_mode();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let q = random_hermitian(lat.total_dim(), 0.7, &mut rng);
        let fast = exchange_term(&lat, &q);
        let slow = exchange_oracle(&lat, &q);
        assert!(
            (fast - slow).abs() < 1e-10 * (1.0 + slow.abs()),
            "{fast} vs {slow}"
        );
        // Cauchy-Schwarz bound per shift: |Ex(Q)| <= (sum_d W_d / L^3) |Q|_F^2.
        // The kernel itself has zero spatial mean, so Ex has no fixed sign.
        let wsum: f64 = (0..lat.n_diffs()).map(|d| lat.coulomb_w(d)).sum();
        let bound = wsum / lat.volume() * crate::linalg::frobenius_norm(&q).powi(2);
        assert!(fast.abs() <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn potential_trace_identity() {
        // tr(V[rho'] Q) = D(rho_Q, rho') ties the potential builder to the
        // pairing through two independent code paths.
        let lat = seven_mode();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let q = random_hermitian(lat.total_dim(), 1.0, &mut rng);
        let qp = random_hermitian(lat.total_dim(), 1.0, &mut rng);
        let rho_p = density_of(&lat, &qp);
        let v = potential_matrix(&lat, &rho_p);
        let lhs = trace_product(&v, &q).re;
        let rhs = coulomb_pairing(&lat, &density_of(&lat, &q), &rho_p);
        assert!((lhs - rhs).abs() < 1e-11 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn energy_expands_exactly_to_second_order() {
        // E(Q + t Delta) = E(Q) + a t + b t^2 with a = tr(F(Q) Delta),
        // b = (alpha/2)(D(rho_D, rho_D) - Ex(Delta)); exact since the
        // functional is quadratic.
        let lat = seven_mode();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let alpha = 0.37;
        let nu = ExternalDensity::point_like(1.3, 0.5).sample(&lat);
        let h = lat.one_body_matrix(1.0);
        let q = random_hermitian(lat.total_dim(), 0.5, &mut rng);
        let delta = random_hermitian(lat.total_dim(), 0.8, &mut rng);

        let e0 = bdf_energy(&lat, &h, alpha, &nu, &q).total();
        let f = mean_field_operator(&lat, &h, alpha, &nu, &q);
        let a = trace_product(&f, &delta).re;
        let rho_d = density_of(&lat, &delta);
        let b = 0.5
            * alpha
            * (coulomb_pairing(&lat, &rho_d, &rho_d) - exchange_term(&lat, &delta));

        for &t in &[0.3, 0.7, -0.45, 1.0] {
            let shifted = &q + &delta.mapv(|z| z * Complex64::new(t, 0.0));
            let direct = bdf_energy(&lat, &h, alpha, &nu, &shifted).total();
            let predicted = e0 + a * t + b * t * t;
            assert!(
                (direct - predicted).abs() < 1e-9 * (1.0 + direct.abs()),
                "t={t}: {direct} vs {predicted}"
            );
        }
    }

    #[test]
    fn rank_one_self_interaction_cancels() {
        // For Q = |phi><phi| the direct and exchange terms coincide, and
        // the self-generated field annihilates phi mode by mode.
        let lat = seven_mode();
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let n = lat.total_dim();
        let mut phi = ndarray::Array1::<Complex64>::zeros(n);
        for v in phi.iter_mut() {
            *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let norm = phi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        phi.mapv_inplace(|z| z / norm);
        let mut q = Array2::zeros((n, n));
        for r in 0..n {
            for c in 0..n {
                q[(r, c)] = phi[r] * phi[c].conj();
            }
        }
        let rho = density_of(&lat, &q);
        let direct = coulomb_pairing(&lat, &rho, &rho);
        let ex = exchange_term(&lat, &q);
        assert!((direct - ex).abs() < 1e-12 * (1.0 + direct.abs()));

        let v = potential_matrix(&lat, &rho);
        let conv = lat.convolve(&q);
        let residual = (&v - &conv)
            .dot(&phi)
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(residual < 1e-12, "self-field leak {residual}");
    }

    #[test]
    fn translation_invariant_states_carry_no_density() {
        // Block-diagonal states have rhohat supported on the zero mode, so
        // source and Hartree terms vanish identically.
        let lat = seven_mode();
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let m = lat.n_modes();
        let symbols: Vec<CMatrix> = (0..m).map(|_| random_hermitian(4, 1.0, &mut rng)).collect();
        let q = lat.block_diagonal(&symbols);
        let rho = density_of(&lat, &q);
        for d in 0..lat.n_diffs() {
            if lat.diff_vector(d) != [0, 0, 0] {
                assert!(rho.values[d].norm() < 1e-14);
            }
        }
        let nu = ExternalDensity::point_like(1.0, 0.5).sample(&lat);
        let e = bdf_energy(&lat, &lat.one_body_matrix(1.0), 0.5, &nu, &q);
        assert!(e.source.abs() < 1e-12);
        assert!(e.hartree.abs() < 1e-12);
    }

    #[test]
    fn vacuum_projector_is_critical_point_of_global_energy() {
        // With nu = 0 the dressed vacuum satisfies P = chi_{<0}(F(P - P)),
        // i.e. Q = 0 is self-consistent: the mean-field operator at Q = 0
        // relative to the dressed vacuum reproduces the dressed operator.
        let lat = seven_mode();
        let alpha = 0.2;
        let vac = solve_vacuum_lattice(&lat, alpha, 1.0, &LatticeVacuumConfig::default()).unwrap();
        let pi = vac.projector_matrix(&lat);
        let d_dressed = vac.dressed_matrix(&lat);

        // F at Q = 0 is h_dressed itself; its negative projector must be pi.
        let nu = ChargeDensity::zero(&lat);
        let q0: CMatrix = Array2::zeros(pi.raw_dim());
        let f = mean_field_operator(&lat, &d_dressed, alpha, &nu, &q0);
        assert!(crate::linalg::frobenius_norm(&(&f - &d_dressed)) < 1e-12);
        let m = lat.n_modes();
        for i in 0..m {
            let block = f.slice(ndarray::s![4 * i..4 * i + 4, 4 * i..4 * i + 4]).to_owned();
            let p = negative_projector(&block, 1e-10).unwrap();
            let pi_block = pi
                .slice(ndarray::s![4 * i..4 * i + 4, 4 * i..4 * i + 4])
                .to_owned();
            assert!(crate::linalg::frobenius_norm(&(&p - &pi_block)) < 1e-10);
        }
    }

    #[test]
    fn admissible_states_have_bounded_energy_pieces() {
        let lat = seven_mode();
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let vac = solve_vacuum_lattice(&lat, 0.1, 1.0, &LatticeVacuumConfig::default()).unwrap();
        let pi = vac.projector_matrix(&lat);
        let nu = ExternalDensity::point_like(1.0, 0.5).sample(&lat);
        let h = vac.dressed_matrix(&lat);
        let wsum: f64 = (0..lat.n_diffs()).map(|d| lat.coulomb_w(d)).sum();
        for _ in 0..3 {
            let q = random_admissible(&pi, 1.5, &mut rng);
            let e = bdf_energy(&lat, &h, 0.1, &nu, &q);
            assert!(e.total().is_finite());
            assert!(e.hartree >= -1e-12);
            let bound =
                0.05 * wsum / lat.volume() * crate::linalg::frobenius_norm(&q).powi(2);
            assert!(e.exchange.abs() <= bound * (1.0 + 1e-12));
        }
    }
}
