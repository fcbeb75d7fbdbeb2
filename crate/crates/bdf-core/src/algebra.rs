//! Dirac and Pauli matrices in the standard representation.

use ndarray::array;
use num_complex::Complex64;

use crate::linalg::CMatrix;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// The 4x4 Clifford generators: three anticommuting `alpha` matrices and
/// `beta`, with `alpha_i alpha_j + alpha_j alpha_i = 2 delta_ij` and
/// `alpha_i beta + beta alpha_i = 0`.
pub struct DiracAlgebra {
    pub alpha: [CMatrix; 3],
    pub beta: CMatrix,
}

impl DiracAlgebra {
    pub fn new() -> Self {
        let z = c(0.0, 0.0);
        let o = c(1.0, 0.0);
        let i = c(0.0, 1.0);
        let alpha1 = array![
            [z, z, z, o],
            [z, z, o, z],
            [z, o, z, z],
            [o, z, z, z]
        ];
        let alpha2 = array![
            [z, z, z, -i],
            [z, z, i, z],
            [z, -i, z, z],
            [i, z, z, z]
        ];
        let alpha3 = array![
            [z, z, o, z],
            [z, z, z, -o],
            [o, z, z, z],
            [z, -o, z, z]
        ];
        let beta = array![
            [o, z, z, z],
            [z, o, z, z],
            [z, z, -o, z],
            [z, z, z, -o]
        ];
        DiracAlgebra {
            alpha: [alpha1, alpha2, alpha3],
            beta,
        }
    }

    /// Free Dirac symbol `c alpha.k + c^2 beta` at momentum `k`.
    pub fn dirac_symbol(&self, k: [f64; 3], light_speed: f64) -> CMatrix {
        let mut m = self.beta.mapv(|z| z * light_speed * light_speed);
        for (a, ki) in self.alpha.iter().zip(k.iter()) {
            m = m + a.mapv(|z| z * light_speed * ki);
        }
        m
    }
}

impl Default for DiracAlgebra {
    fn default() -> Self {
        Self::new()
    }
}

/// 2x2 Pauli matrices, used by the two-spinor non-relativistic reference.
pub fn pauli() -> [CMatrix; 3] {
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    [
        array![[z, o], [o, z]],
        array![[z, -i], [i, z]],
        array![[o, z], [z, -o]],
    ]
}
