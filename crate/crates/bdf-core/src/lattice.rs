//! Periodic momentum lattice, cutoff in the ball `|k| <= cutoff`.
//!
//! Modes are the vectors `k = (2 pi / L) n`, `n` integer, stored in
//! lexicographic order of `n`. One-body operators are dense matrices over
//! `modes x spinor components`, indexed `mode * spinor_dim + component`, so
//! translation-invariant operators are block-diagonal with one
//! `spinor_dim x spinor_dim` block per mode.
//!
//! The Coulomb multiplier is `W(k) = 4 pi / |k|^2` with `W(0) = 0`: dropping
//! the zero mode implements the neutralizing background that makes the
//! periodic Coulomb problem well posed.

use std::collections::HashMap;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::algebra::DiracAlgebra;
use crate::error::{BdfError, Result};
use crate::linalg::CMatrix;

/// Hard ceiling on `total_dim` so accidental huge lattices fail fast
/// instead of thrashing: dense storage is `total_dim^2` complex numbers.
pub const DEFAULT_DIM_CAP: usize = 2500;

pub struct MomentumLattice {
    pub box_length: f64,
    pub cutoff: f64,
    pub spinor_dim: usize,
    /// Integer mode coordinates, lexicographically sorted.
    pub modes: Vec<[i32; 3]>,
    mode_index: HashMap<[i32; 3], usize>,
    /// All distinct mode differences `n_i - n_j`, lexicographically sorted.
    diffs: Vec<[i32; 3]>,
    /// `diff_table[i * M + j]` = index into `diffs` of `n_i - n_j`.
    diff_table: Vec<u32>,
    /// For each diff `d`: the pairs `(i, j)` with `n_i - k_d = n_j`.
    pairs: Vec<Vec<(u32, u32)>>,
    /// For each mode `i`: the diffs `d` with `n_i - k_d` on the lattice,
    /// together with the index of the shifted mode.
    per_mode: Vec<Vec<(u32, u32)>>,
    /// Coulomb multiplier per diff.
    coulomb: Vec<f64>,
    /// `reversal[i]` = index of mode `-n_i`.
    reversal: Vec<usize>,
    dirac: DiracAlgebra,
}

impl MomentumLattice {
    pub fn build(box_length: f64, cutoff: f64, spinor_dim: usize) -> Result<Self> {
        Self::build_with_cap(box_length, cutoff, spinor_dim, DEFAULT_DIM_CAP)
    }

    pub fn build_with_cap(
        box_length: f64,
        cutoff: f64,
        spinor_dim: usize,
        dim_cap: usize,
    ) -> Result<Self> {
        if box_length <= 0.0 || !box_length.is_finite() {
            return Err(BdfError::Config(format!(
                "box length must be positive and finite, got {box_length}"
            )));
        }
        if cutoff <= 0.0 || !cutoff.is_finite() {
            return Err(BdfError::Config(format!(
                "momentum cutoff must be positive and finite, got {cutoff}"
            )));
        }
        if spinor_dim != 2 && spinor_dim != 4 {
            return Err(BdfError::Config(format!(
                "spinor dimension must be 2 or 4, got {spinor_dim}"
            )));
        }

        let step = 2.0 * std::f64::consts::PI / box_length;
        // Relative slack keeps deliberate on-shell modes (|k| == cutoff) in,
        // and keeps paired lattices (L, c*cutoff) vs (c*L, cutoff) consistent.
        let r2_max = (cutoff / step).powi(2) * (1.0 + 1e-12);
        let n_max = (cutoff / step * (1.0 + 1e-9)).floor() as i32;

        let mut modes = Vec::new();
        for n0 in -n_max..=n_max {
            for n1 in -n_max..=n_max {
                for n2 in -n_max..=n_max {
                    let r2 = (n0 * n0 + n1 * n1 + n2 * n2) as f64;
                    if r2 <= r2_max {
                        modes.push([n0, n1, n2]);
                    }
                }
            }
        }
        modes.sort_unstable();
        let total_dim = modes.len() * spinor_dim;
        if total_dim > dim_cap {
            return Err(BdfError::Config(format!(
                "lattice has total dimension {total_dim} ({} modes x {spinor_dim}), over the cap {dim_cap}",
                modes.len()
            )));
        }

        let mode_index: HashMap<[i32; 3], usize> =
            modes.iter().enumerate().map(|(i, n)| (*n, i)).collect();

        let m = modes.len();
        let mut diff_set: Vec<[i32; 3]> = Vec::new();
        {
            let mut seen = std::collections::HashSet::new();
            for a in &modes {
                for b in &modes {
                    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
                    if seen.insert(d) {
                        diff_set.push(d);
                    }
                }
            }
        }
        diff_set.sort_unstable();
        let diff_index: HashMap<[i32; 3], u32> = diff_set
            .iter()
            .enumerate()
            .map(|(i, n)| (*n, i as u32))
            .collect();

        let mut diff_table = vec![0u32; m * m];
        for (i, a) in modes.iter().enumerate() {
            for (j, b) in modes.iter().enumerate() {
                let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
                diff_table[i * m + j] = diff_index[&d];
            }
        }

        let mut pairs: Vec<Vec<(u32, u32)>> = vec![Vec::new(); diff_set.len()];
        let mut per_mode: Vec<Vec<(u32, u32)>> = vec![Vec::new(); m];
        for i in 0..m {
            for j in 0..m {
                let d = diff_table[i * m + j];
                pairs[d as usize].push((i as u32, j as u32));
                per_mode[i].push((d, j as u32));
            }
        }

        let coulomb: Vec<f64> = diff_set
            .iter()
            .map(|n| {
                let k2 = step * step * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]) as f64;
                if k2 == 0.0 {
                    0.0
                } else {
                    4.0 * std::f64::consts::PI / k2
                }
            })
            .collect();

        let reversal: Vec<usize> = modes
            .iter()
            .map(|n| mode_index[&[-n[0], -n[1], -n[2]]])
            .collect();

        Ok(MomentumLattice {
            box_length,
            cutoff,
            spinor_dim,
            modes,
            mode_index,
            diffs: diff_set,
            diff_table,
            pairs,
            per_mode,
            coulomb,
            reversal,
            dirac: DiracAlgebra::new(),
        })
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn total_dim(&self) -> usize {
        self.modes.len() * self.spinor_dim
    }

    pub fn volume(&self) -> f64 {
        self.box_length.powi(3)
    }

    pub fn momentum(&self, i: usize) -> [f64; 3] {
        let s = 2.0 * std::f64::consts::PI / self.box_length;
        let n = self.modes[i];
        [s * n[0] as f64, s * n[1] as f64, s * n[2] as f64]
    }

    pub fn momentum_norm(&self, i: usize) -> f64 {
        let k = self.momentum(i);
        (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt()
    }

    pub fn mode_of(&self, n: &[i32; 3]) -> Option<usize> {
        self.mode_index.get(n).copied()
    }

    pub fn n_diffs(&self) -> usize {
        self.diffs.len()
    }

    pub fn diff_index(&self, i: usize, j: usize) -> usize {
        self.diff_table[i * self.modes.len() + j] as usize
    }

    pub fn diff_vector(&self, d: usize) -> [i32; 3] {
        self.diffs[d]
    }

    pub fn diff_momentum(&self, d: usize) -> [f64; 3] {
        let s = 2.0 * std::f64::consts::PI / self.box_length;
        let n = self.diffs[d];
        [s * n[0] as f64, s * n[1] as f64, s * n[2] as f64]
    }

    /// Index of the diff `-k_d`.
    pub fn diff_negation(&self, d: usize) -> usize {
        let n = self.diffs[d];
        let neg = [-n[0], -n[1], -n[2]];
        self.diffs.binary_search(&neg).expect("diff set is symmetric")
    }

    /// Index of a difference vector, if representable on this lattice.
    pub fn diff_index_of(&self, n: &[i32; 3]) -> Option<usize> {
        self.diffs.binary_search(n).ok()
    }

    /// All ordered mode pairs `(i, j)` with `n_i - n_j = k_d`.
    pub fn pairs_for(&self, d: usize) -> &[(u32, u32)] {
        &self.pairs[d]
    }

    /// Coulomb multiplier `4 pi / |k_d|^2` (zero on the zero mode).
    pub fn coulomb_w(&self, d: usize) -> f64 {
        self.coulomb[d]
    }

    /// Index of the mode `-n_i`.
    pub fn reversed_mode(&self, i: usize) -> usize {
        self.reversal[i]
    }

    pub fn dirac(&self) -> &DiracAlgebra {
        &self.dirac
    }

    /// Free one-body operator: the Dirac symbol `c alpha.k + c^2 beta` for
    /// four-spinors, the kinetic symbol `|k|^2 / 2` for two-spinors.
    pub fn one_body_matrix(&self, light_speed: f64) -> CMatrix {
        let dim = self.total_dim();
        let sd = self.spinor_dim;
        let mut h = Array2::zeros((dim, dim));
        for i in 0..self.n_modes() {
            let k = self.momentum(i);
            if sd == 4 {
                let blk = self.dirac.dirac_symbol(k, light_speed);
                for s in 0..4 {
                    for t in 0..4 {
                        h[(i * 4 + s, i * 4 + t)] = blk[(s, t)];
                    }
                }
            } else {
                let e = 0.5 * (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]);
                for s in 0..2 {
                    h[(i * 2 + s, i * 2 + s)] = Complex64::new(e, 0.0);
                }
            }
        }
        h
    }

    /// Coulomb-weighted kernel convolution of a dense one-body operator:
    ///
    /// `B(p, q) = (1/L^3) sum_k W(k) A(p - k, q - k)`,
    ///
    /// both shifted arguments restricted to the lattice. This is the matrix
    /// of the operator with position kernel `A(x, y) / |x - y|` (periodized
    /// Coulomb, zero mode dropped). It preserves Hermiticity and reduces to
    /// a per-mode multiplication for block-diagonal `A`.
    pub fn convolve(&self, a: &CMatrix) -> CMatrix {
        let sd = self.spinor_dim;
        let dim = self.total_dim();
        assert_eq!(a.nrows(), dim, "operator does not match lattice");
        assert_eq!(a.ncols(), dim, "operator does not match lattice");
        let inv_vol = 1.0 / self.volume();
        let mut b: CMatrix = Array2::zeros((dim, dim));

        b.axis_chunks_iter_mut(Axis(0), sd)
            .into_par_iter()
            .enumerate()
            .for_each(|(i, mut rows)| {
                for &(d, i_shift) in &self.per_mode[i] {
                    let w = self.coulomb[d as usize];
                    if w == 0.0 {
                        continue;
                    }
                    let w = w * inv_vol;
                    for &(j, j_shift) in &self.pairs[d as usize] {
                        let (j, j_shift) = (j as usize, j_shift as usize);
                        for s in 0..sd {
                            for t in 0..sd {
                                let v = a[(i_shift as usize * sd + s, j_shift * sd + t)];
                                rows[(s, j * sd + t)] += w * v;
                            }
                        }
                    }
                }
            });
        b
    }

    /// Translation-invariant reduction of [`convolve`]: per-mode symbols in,
    /// per-mode symbols out, `T(p) = (1/L^3) sum_q W(p - q) S(q)`.
    pub fn convolve_symbols(&self, s: &[CMatrix]) -> Vec<CMatrix> {
        assert_eq!(s.len(), self.n_modes());
        let sd = self.spinor_dim;
        let inv_vol = 1.0 / self.volume();
        (0..self.n_modes())
            .map(|i| {
                let mut out: CMatrix = Array2::zeros((sd, sd));
                for (j, sj) in s.iter().enumerate() {
                    let w = self.coulomb[self.diff_index(i, j)];
                    if w == 0.0 {
                        continue;
                    }
                    out.scaled_add(Complex64::new(w * inv_vol, 0.0), sj);
                }
                out
            })
            .collect()
    }

    /// Expand per-mode symbols into the dense block-diagonal operator.
    pub fn block_diagonal(&self, symbols: &[CMatrix]) -> CMatrix {
        assert_eq!(symbols.len(), self.n_modes());
        let sd = self.spinor_dim;
        let mut out: CMatrix = Array2::zeros((self.total_dim(), self.total_dim()));
        for (i, blk) in symbols.iter().enumerate() {
            for s in 0..sd {
                for t in 0..sd {
                    out[(i * sd + s, i * sd + t)] = blk[(s, t)];
                }
            }
        }
        out
    }

    /// Apply the momentum-reversal permutation `p -> -p` on both sides:
    /// `(R A R)(p, q) = A(-p, -q)`.
    pub fn reverse_operator(&self, a: &CMatrix) -> CMatrix {
        let sd = self.spinor_dim;
        let dim = self.total_dim();
        let mut out: CMatrix = Array2::zeros((dim, dim));
        for i in 0..self.n_modes() {
            let ri = self.reversal[i];
            for j in 0..self.n_modes() {
                let rj = self.reversal[j];
                for s in 0..sd {
                    for t in 0..sd {
                        out[(i * sd + s, j * sd + t)] = a[(ri * sd + s, rj * sd + t)];
                    }
                }
            }
        }
        out
    }
}
