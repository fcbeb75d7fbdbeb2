//! Charge densities in the Fourier picture.
//!
//! A density is stored as its Fourier coefficients on the lattice's
//! difference vectors, so the Coulomb pairing
//!
//! `D(f, g) = 4 pi L^3 sum_{k != 0} conj(fhat(k)) ghat(k) / |k|^2`
//!
//! is a weighted dot product. The zero mode is excluded throughout: the
//! model subtracts the uniform background, and every consumer of the kernel
//! (direct term, exchange term, potentials) drops it consistently.

use num_complex::Complex64;

use crate::error::{BdfError, Result};
use crate::lattice::MomentumLattice;
use crate::linalg::CMatrix;

/// Fourier coefficients aligned with `lattice.diffs`.
#[derive(Clone, Debug)]
pub struct ChargeDensity {
    pub values: Vec<Complex64>,
}

impl ChargeDensity {
    pub fn zero(lattice: &MomentumLattice) -> Self {
        ChargeDensity {
            values: vec![Complex64::new(0.0, 0.0); lattice.n_diffs()],
        }
    }

    /// Total charge `L^3 rhohat(0)`.
    pub fn total_charge(&self, lattice: &MomentumLattice) -> f64 {
        let d0 = lattice
            .diff_index_of(&[0, 0, 0])
            .expect("zero diff always present");
        (self.values[d0] * lattice.volume()).re
    }

    /// Largest violation of the reality symmetry `fhat(-k) = conj(fhat(k))`.
    pub fn reality_defect(&self, lattice: &MomentumLattice) -> f64 {
        let mut worst = 0.0f64;
        for d in 0..lattice.n_diffs() {
            let neg = lattice.diff_negation(d);
            worst = worst.max((self.values[d] - self.values[neg].conj()).norm());
        }
        worst
    }

    /// `self += w * other`.
    pub fn scaled_add(&mut self, other: &ChargeDensity, w: f64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += w * b;
        }
    }

    pub fn scaled(&self, w: f64) -> ChargeDensity {
        ChargeDensity {
            values: self.values.iter().map(|v| w * v).collect(),
        }
    }

    pub fn difference(&self, other: &ChargeDensity) -> ChargeDensity {
        ChargeDensity {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

/// Density of a one-body operator: `rhohat(k) = (1/L^3) sum_p tr Q(p+k, p)`.
pub fn density_of(lattice: &MomentumLattice, q: &CMatrix) -> ChargeDensity {
    let sd = lattice.spinor_dim;
    let vol = lattice.volume();
    let mut values = vec![Complex64::new(0.0, 0.0); lattice.n_diffs()];
    for (d, value) in values.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(i, j) in lattice.pairs_for(d) {
            let (r0, c0) = (i as usize * sd, j as usize * sd);
            for s in 0..sd {
                acc += q[(r0 + s, c0 + s)];
            }
        }
        *value = acc / vol;
    }
    ChargeDensity { values }
}

/// `D(f, g)`; real for densities with the reality symmetry.
pub fn coulomb_pairing(lattice: &MomentumLattice, f: &ChargeDensity, g: &ChargeDensity) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for d in 0..lattice.n_diffs() {
        acc += lattice.coulomb_w(d) * f.values[d].conj() * g.values[d];
    }
    (acc * lattice.volume()).re
}

/// One Gaussian lump of external charge.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct GaussianCharge {
    pub charge: f64,
    pub center: [f64; 3],
    pub width: f64,
}

/// External density: a finite mixture of Gaussians, handled through its
/// Fourier transform `sum_j Z_j exp(-i k.c_j) exp(-w_j^2 |k|^2 / 2)`.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ExternalDensity {
    pub gaussians: Vec<GaussianCharge>,
}

impl ExternalDensity {
    pub fn point_like(charge: f64, width: f64) -> Self {
        ExternalDensity {
            gaussians: vec![GaussianCharge {
                charge,
                center: [0.0; 3],
                width,
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for g in &self.gaussians {
            if g.width <= 0.0 || !g.width.is_finite() {
                return Err(BdfError::Config(format!(
                    "gaussian width must be positive, got {}",
                    g.width
                )));
            }
            if !g.charge.is_finite() {
                return Err(BdfError::Config("gaussian charge must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn total_charge(&self) -> f64 {
        self.gaussians.iter().map(|g| g.charge).sum()
    }

    /// Box Fourier coefficient at wave vector `k` (includes the `1/L^3`).
    pub fn fourier_at(&self, k: [f64; 3], volume: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        for g in &self.gaussians {
            let phase = -(k[0] * g.center[0] + k[1] * g.center[1] + k[2] * g.center[2]);
            let damp = (-0.5 * g.width * g.width * k2).exp();
            acc += g.charge * damp * Complex64::from_polar(1.0, phase);
        }
        acc / volume
    }

    pub fn sample(&self, lattice: &MomentumLattice) -> ChargeDensity {
        let vol = lattice.volume();
        let values = (0..lattice.n_diffs())
            .map(|d| self.fourier_at(lattice.diff_momentum(d), vol))
            .collect();
        ChargeDensity { values }
    }

    /// Coulomb self-energy `D(nu, nu)` on the given lattice.
    pub fn self_energy(&self, lattice: &MomentumLattice) -> f64 {
        let s = self.sample(lattice);
        coulomb_pairing(lattice, &s, &s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        use rand::Rng;
        let mut a = CMatrix::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        let ah = a.mapv(|z| z.conj()).reversed_axes();
        (&a + &ah).mapv(|z| 0.5 * z)
    }

    #[test]
    fn operator_density_is_real_symmetric() {
        let lat = MomentumLattice::build(2.0 * PI, 1.2, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = random_hermitian(lat.total_dim(), &mut rng);
        let rho = density_of(&lat, &q);
        assert!(rho.reality_defect(&lat) < 1e-13);
        // total charge equals the trace
        let tr: Complex64 = q.diag().sum();
        assert!((rho.total_charge(&lat) - tr.re).abs() < 1e-12);
    }

    #[test]
    fn pairing_is_symmetric_and_positive() {
        let lat = MomentumLattice::build(2.0 * PI, 1.2, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = density_of(&lat, &random_hermitian(lat.total_dim(), &mut rng));
        let g = density_of(&lat, &random_hermitian(lat.total_dim(), &mut rng));
        let fg = coulomb_pairing(&lat, &f, &g);
        let gf = coulomb_pairing(&lat, &g, &f);
        assert!((fg - gf).abs() < 1e-12);
        assert!(coulomb_pairing(&lat, &f, &f) >= 0.0);
        let defect = coulomb_pairing(&lat, &f, &g).powi(2)
            - coulomb_pairing(&lat, &f, &f) * coulomb_pairing(&lat, &g, &g);
        assert!(defect <= 1e-12, "Cauchy-Schwarz violated: {defect}");
    }

    #[test]
    fn gaussian_density_matches_hand_values() {
        let lat = MomentumLattice::build(2.0 * PI, 1.2, 4).unwrap();
        let nu = ExternalDensity::point_like(2.0, 0.5);
        let s = nu.sample(&lat);
        let d0 = lat.diff_index_of(&[0, 0, 0]).unwrap();
        let vol = (2.0 * PI).powi(3);
        assert!((s.values[d0].re - 2.0 / vol).abs() < 1e-15);
        assert!((s.total_charge(&lat) - 2.0).abs() < 1e-12);
        // |k| = 1 coefficient: (Z/L^3) exp(-width^2/2)
        let d1 = lat.diff_index_of(&[1, 0, 0]).unwrap();
        let expect = 2.0 / vol * (-0.125f64).exp();
        assert!((s.values[d1].re - expect).abs() < 1e-15);
        assert!(s.values[d1].im.abs() < 1e-15);
        assert!(s.reality_defect(&lat) < 1e-15);
    }

    #[test]
    fn off_center_gaussian_keeps_reality_symmetry() {
        let lat = MomentumLattice::build(2.0 * PI, 1.2, 4).unwrap();
        let nu = ExternalDensity {
            gaussians: vec![
                GaussianCharge {
                    charge: 1.0,
                    center: [0.7, -0.3, 1.1],
                    width: 0.4,
                },
                GaussianCharge {
                    charge: 0.5,
                    center: [-1.2, 0.0, 0.2],
                    width: 0.6,
                },
            ],
        };
        nu.validate().unwrap();
        let s = nu.sample(&lat);
        assert!(s.reality_defect(&lat) < 1e-15);
        assert!((s.total_charge(&lat) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn bad_width_is_rejected() {
        let nu = ExternalDensity::point_like(1.0, 0.0);
        assert!(nu.validate().is_err());
    }
}
