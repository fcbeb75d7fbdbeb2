//! Self-consistent free vacuum.
//!
//! The translation-invariant vacuum projector solves
//!
//! `P(p) = 1_{(-inf,0)}( D0(p) - alpha * T[P - 1/2](p) )`,
//!
//! where `T` is the Coulomb kernel convolution. The dressed symbol keeps the
//! free form `g1(|p|) alpha.omega_p + g0(|p|) beta`, so the fixed point
//! reduces to two scalar functions on `[0, cutoff]`.
//!
//! Two independent solvers are provided. `solve_symbol_radial` works in the
//! rotation-invariant continuum: projecting the self-consistency equation on
//! the `beta` and `alpha.omega` components and doing the angular integrals
//! in closed form (Legendre Q-functions) leaves one-dimensional integral
//! equations,
//!
//! `g0(p) = c^2 + (alpha/pi) int_0^L (q/p) Q0(t) g0(q)/(2 E(q)) dq`,
//! `g1(p) = c p  + (alpha/pi) int_0^L (q/p) Q1(t) g1(q)/(2 E(q)) dq`,
//!
//! with `t = (p^2+q^2)/(2pq)`, `E = sqrt(g0^2 + g1^2)`. The kernels carry an
//! integrable log singularity at `q = p`, handled by panel splitting.
//! `solve_vacuum_lattice` iterates the projector directly on a momentum
//! lattice with no rotational reduction; the two must agree, and tests hold
//! them to that.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{BdfError, Result};
use crate::lattice::MomentumLattice;
use crate::linalg::{eigh, frobenius_norm, CMatrix};
use crate::quad::{gauss_legendre, integrate_panels, Pchip};

/// `(q/p) Q0((p^2+q^2)/(2pq))`, continued by 2 at `p = 0`.
pub fn kernel_scalar(p: f64, q: f64) -> f64 {
    if q == 0.0 {
        return 0.0;
    }
    if p == 0.0 {
        return 2.0;
    }
    let x = if p < q { p / q } else { q / p };
    if x < 1e-4 {
        // ln((1+x)/(1-x)) = 2x(1 + x^2/3 + x^4/5 + ...)
        let l = 2.0 * x * (1.0 + x * x / 3.0 + x.powi(4) / 5.0);
        (q / p) * l
    } else {
        (q / p) * ((1.0 + x) / (1.0 - x)).ln()
    }
}

/// `(q/p) Q1((p^2+q^2)/(2pq))`, continued by 0 at `p = 0`.
pub fn kernel_vector(p: f64, q: f64) -> f64 {
    if q == 0.0 || p == 0.0 {
        return 0.0;
    }
    let x = if p < q { p / q } else { q / p };
    let t = (p * p + q * q) / (2.0 * p * q);
    if x < 1e-4 {
        // t*ln(...) - 1 = (4/3) x^2 + (8/15) x^4 + ...
        let series = (4.0 / 3.0) * x * x + (8.0 / 15.0) * x.powi(4);
        (q / p) * series
    } else {
        let l = ((1.0 + x) / (1.0 - x)).ln();
        (q / p) * (t * l - 1.0)
    }
}

#[derive(Clone, Debug)]
pub struct RadialConfig {
    pub n_grid: usize,
    pub panel_points: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Fixed-point mixing weight on the new iterate, adaptively halved if
    /// the residual grows.
    pub mixing: f64,
}

impl Default for RadialConfig {
    fn default() -> Self {
        RadialConfig {
            n_grid: 96,
            panel_points: 16,
            tol: 1e-12,
            max_iter: 400,
            mixing: 1.0,
        }
    }
}

/// Dressed vacuum symbol on a radial grid.
pub struct VacuumSymbol {
    pub alpha: f64,
    pub cutoff: f64,
    pub light_speed: f64,
    pub grid: Vec<f64>,
    pub g0: Vec<f64>,
    pub g1: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    g0_interp: Pchip,
    g1_interp: Pchip,
}

impl VacuumSymbol {
    pub fn g0_at(&self, p: f64) -> f64 {
        self.g0_interp.eval(p)
    }

    pub fn g1_at(&self, p: f64) -> f64 {
        self.g1_interp.eval(p)
    }

    pub fn energy_at(&self, p: f64) -> f64 {
        self.g0_at(p).hypot(self.g1_at(p))
    }

    /// Minimum of `E(p) = sqrt(g0^2 + g1^2)` over a dense sample, returned
    /// as `(min, argmin)`. For the physical branch the minimizer sits at the
    /// origin, which callers may assert via `argmin == 0`.
    pub fn threshold(&self) -> (f64, f64) {
        let n = 4000;
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=n {
            let p = self.cutoff * i as f64 / n as f64;
            let e = self.energy_at(p);
            if e < best.0 {
                best = (e, p);
            }
        }
        best
    }
}

/// Shared radial grid: sinh-graded toward the origin, endpoints included.
pub fn radial_grid(cutoff: f64, n: usize) -> Vec<f64> {
    let s = 4.0f64;
    (0..n)
        .map(|i| {
            let u = i as f64 / (n - 1) as f64;
            cutoff * (s * u).sinh() / s.sinh()
        })
        .collect()
}

fn quadrature_breaks(p: f64, cutoff: f64) -> Vec<f64> {
    let mut b = vec![0.0];
    for e in [1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.2, 0.35, 0.5, 0.65, 0.8, 0.9, 1.0] {
        b.push(cutoff * e);
    }
    if p > 0.0 && p < cutoff {
        b.push(p);
        for j in 1..=14 {
            let off = p * 0.5f64.powi(j);
            if p - off > 0.0 {
                b.push(p - off);
            }
            if p + off < cutoff {
                b.push(p + off);
            }
        }
    }
    b.sort_by(|a, b| a.partial_cmp(b).unwrap());
    b.dedup_by(|a, b| (*a - *b).abs() < 1e-15 * cutoff);
    b
}

/// Solve the radial self-consistency equations.
pub fn solve_symbol_radial(
    alpha: f64,
    cutoff: f64,
    light_speed: f64,
    cfg: &RadialConfig,
) -> Result<VacuumSymbol> {
    check_coupling(alpha)?;
    if cutoff <= 0.0 || !cutoff.is_finite() || light_speed <= 0.0 || !light_speed.is_finite() {
        return Err(BdfError::Config(
            "cutoff and light speed must be positive".into(),
        ));
    }
    let c2 = light_speed * light_speed;
    let grid = radial_grid(cutoff, cfg.n_grid);
    let n = grid.len();
    let mut g0: Vec<f64> = vec![c2; n];
    let mut g1: Vec<f64> = grid.iter().map(|p| light_speed * p).collect();

    let (nodes, weights) = gauss_legendre(cfg.panel_points);
    let breaks: Vec<Vec<f64>> = grid.iter().map(|&p| quadrature_breaks(p, cutoff)).collect();

    let mut theta = cfg.mixing;
    let mut prev_res = f64::INFINITY;
    for iter in 0..cfg.max_iter {
        // Interpolate the smooth ratios g/(2E) between grid nodes.
        let ratio0: Vec<f64> = (0..n)
            .map(|i| g0[i] / (2.0 * g0[i].hypot(g1[i])))
            .collect();
        let ratio1: Vec<f64> = (0..n)
            .map(|i| g1[i] / (2.0 * g0[i].hypot(g1[i])))
            .collect();
        let h0 = Pchip::new(grid.clone(), ratio0);
        let h1 = Pchip::new(grid.clone(), ratio1);

        let mut res = 0.0f64;
        let mut g0_new = vec![0.0; n];
        let mut g1_new = vec![0.0; n];
        for i in 0..n {
            let p = grid[i];
            let int0 = integrate_panels(
                &mut |q| kernel_scalar(p, q) * h0.eval(q),
                &breaks[i],
                &nodes,
                &weights,
            );
            let int1 = integrate_panels(
                &mut |q| kernel_vector(p, q) * h1.eval(q),
                &breaks[i],
                &nodes,
                &weights,
            );
            g0_new[i] = c2 + alpha / std::f64::consts::PI * int0;
            g1_new[i] = light_speed * p + alpha / std::f64::consts::PI * int1;
            let scale = c2 + light_speed * p;
            res = res.max(((g0_new[i] - g0[i]).abs() + (g1_new[i] - g1[i]).abs()) / scale);
        }
        if !res.is_finite() {
            return Err(BdfError::NonConvergence {
                what: "radial vacuum iteration".into(),
                residual: res,
                iterations: iter,
            });
        }
        if res > prev_res * 1.2 {
            theta = (theta * 0.5).max(0.05);
        }
        prev_res = res;
        for i in 0..n {
            g0[i] = (1.0 - theta) * g0[i] + theta * g0_new[i];
            g1[i] = (1.0 - theta) * g1[i] + theta * g1_new[i];
        }
        if res < cfg.tol {
            let g0_interp = Pchip::new(grid.clone(), g0.clone());
            let g1_interp = Pchip::new(grid.clone(), g1.clone());
            return Ok(VacuumSymbol {
                alpha,
                cutoff,
                light_speed,
                grid,
                g0,
                g1,
                iterations: iter + 1,
                residual: res,
                g0_interp,
                g1_interp,
            });
        }
    }
    Err(BdfError::NonConvergence {
        what: "radial vacuum iteration".into(),
        residual: prev_res,
        iterations: cfg.max_iter,
    })
}

/// The coupling must stay under `4/pi` (Kato bound for the Coulomb kernel);
/// everything downstream assumes it.
pub fn check_coupling(alpha: f64) -> Result<()> {
    let cap = 4.0 / std::f64::consts::PI;
    if !(0.0..cap).contains(&alpha) {
        return Err(BdfError::Config(format!(
            "coupling alpha = {alpha} outside [0, 4/pi = {cap:.6})"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct LatticeVacuumConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Abort if an eigenvalue of the iterate's mean-field symbol comes
    /// within this distance of zero (gap closure).
    pub gap_tol: f64,
}

impl Default for LatticeVacuumConfig {
    fn default() -> Self {
        LatticeVacuumConfig {
            tol: 1e-13,
            max_iter: 200,
            gap_tol: 1e-8,
        }
    }
}

/// Converged translation-invariant vacuum on a momentum lattice.
pub struct FreeVacuumProjector {
    pub alpha: f64,
    pub light_speed: f64,
    /// Per-mode projector symbols `P(p)`.
    pub symbols: Vec<CMatrix>,
    /// Per-mode dressed operator symbols.
    pub dressed: Vec<CMatrix>,
    /// Extracted `beta` component per mode.
    pub g0: Vec<f64>,
    /// Longitudinal `alpha.omega_p` component per mode (0 at the origin).
    pub g1: Vec<f64>,
    /// Size of the transverse alpha component, a cubic-lattice artifact
    /// that vanishes in the rotation-invariant continuum.
    pub g1_transverse: Vec<f64>,
    /// Positive eigenvalue of the dressed symbol per mode.
    pub energies: Vec<f64>,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    /// Set when the residual failed to decrease monotonically over the last
    /// ten iterations.
    pub tail_not_monotone: bool,
}

impl FreeVacuumProjector {
    /// Threshold `min_p E(p)` and the index of the minimizing mode.
    pub fn threshold(&self) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0usize);
        for (i, &e) in self.energies.iter().enumerate() {
            if e < best.0 {
                best = (e, i);
            }
        }
        best
    }

    pub fn projector_matrix(&self, lattice: &MomentumLattice) -> CMatrix {
        lattice.block_diagonal(&self.symbols)
    }

    pub fn dressed_matrix(&self, lattice: &MomentumLattice) -> CMatrix {
        lattice.block_diagonal(&self.dressed)
    }
}

/// Iterate the projector fixed point on the lattice.
pub fn solve_vacuum_lattice(
    lattice: &MomentumLattice,
    alpha: f64,
    light_speed: f64,
    cfg: &LatticeVacuumConfig,
) -> Result<FreeVacuumProjector> {
    check_coupling(alpha)?;
    if lattice.spinor_dim != 4 {
        return Err(BdfError::Config(
            "vacuum projector needs the four-spinor lattice".into(),
        ));
    }
    let m = lattice.n_modes();
    let dirac = lattice.dirac();
    let free: Vec<CMatrix> = (0..m)
        .map(|i| dirac.dirac_symbol(lattice.momentum(i), light_speed))
        .collect();

    // start from the free projector
    let mut proj: Vec<CMatrix> = free
        .iter()
        .map(|f| negative_projector(f, 0.0).expect("free symbol is gapped"))
        .collect();

    let half = Complex64::new(0.5, 0.0);
    let mut history = Vec::new();
    for iter in 0..cfg.max_iter {
        let shifted: Vec<CMatrix> = proj
            .iter()
            .map(|p| {
                let mut s = p.clone();
                for d in 0..4 {
                    s[(d, d)] -= half;
                }
                s
            })
            .collect();
        let conv = lattice.convolve_symbols(&shifted);
        let dressed: Vec<CMatrix> = (0..m)
            .map(|i| &free[i] - &conv[i].mapv(|z| z * alpha))
            .collect();

        let mut new_proj = Vec::with_capacity(m);
        let mut res = 0.0f64;
        for i in 0..m {
            let p = negative_projector(&dressed[i], cfg.gap_tol).map_err(|e| match e {
                BdfError::Invariant(msg) => BdfError::Invariant(format!(
                    "vacuum gap closed at mode {:?}: {msg}",
                    lattice.modes[i]
                )),
                other => other,
            })?;
            res = res.max(frobenius_norm(&(&p - &proj[i])));
            new_proj.push(p);
        }
        proj = new_proj;
        history.push(res);
        if res < cfg.tol {
            let final_dressed = dressed;
            return Ok(finish_lattice_vacuum(
                lattice,
                alpha,
                light_speed,
                proj,
                final_dressed,
                iter + 1,
                history,
            ));
        }
    }
    Err(BdfError::NonConvergence {
        what: "lattice vacuum iteration".into(),
        residual: *history.last().unwrap_or(&f64::NAN),
        iterations: cfg.max_iter,
    })
}

fn finish_lattice_vacuum(
    lattice: &MomentumLattice,
    alpha: f64,
    light_speed: f64,
    proj: Vec<CMatrix>,
    dressed: Vec<CMatrix>,
    iterations: usize,
    history: Vec<f64>,
) -> FreeVacuumProjector {
    let m = lattice.n_modes();
    let dirac = lattice.dirac();
    let mut g0 = Vec::with_capacity(m);
    let mut g1 = Vec::with_capacity(m);
    let mut g1t = Vec::with_capacity(m);
    for (i, d) in dressed.iter().enumerate() {
        let b_comp = 0.25 * trace_with(&dirac.beta, d);
        let mut avec = [0.0f64; 3];
        for (j, a) in dirac.alpha.iter().enumerate() {
            avec[j] = 0.25 * trace_with(a, d);
        }
        let k = lattice.momentum(i);
        let knorm = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
        let (long, trans) = if knorm > 0.0 {
            let omega = [k[0] / knorm, k[1] / knorm, k[2] / knorm];
            let l = avec[0] * omega[0] + avec[1] * omega[1] + avec[2] * omega[2];
            let t2 = (avec[0] - l * omega[0]).powi(2)
                + (avec[1] - l * omega[1]).powi(2)
                + (avec[2] - l * omega[2]).powi(2);
            (l, t2.sqrt())
        } else {
            (0.0, (avec[0].powi(2) + avec[1].powi(2) + avec[2].powi(2)).sqrt())
        };
        g0.push(b_comp);
        g1.push(long);
        g1t.push(trans);
    }
    // Dressed symbols come in +-E pairs; record the smallest positive level.
    let mut energies = Vec::with_capacity(m);
    for d in &dressed {
        let (vals, _) = eigh(d).expect("4x4 eigensolve");
        let epos = vals
            .iter()
            .filter(|v| **v > 0.0)
            .fold(f64::INFINITY, |a, &b| a.min(b));
        energies.push(epos);
    }
    let tail_not_monotone = history
        .iter()
        .rev()
        .take(10)
        .collect::<Vec<_>>()
        .windows(2)
        .any(|w| *w[0] > w[1].max(1e-15));
    FreeVacuumProjector {
        alpha,
        light_speed,
        symbols: proj,
        dressed,
        g0,
        g1,
        g1_transverse: g1t,
        energies,
        iterations,
        residual_history: history,
        tail_not_monotone,
    }
}

fn trace_with(a: &CMatrix, b: &CMatrix) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc.re
}

/// Spectral projector onto the negative eigenspace of a small Hermitian
/// matrix; errors if any eigenvalue sits within `gap_tol` of zero.
pub fn negative_projector(h: &CMatrix, gap_tol: f64) -> Result<CMatrix> {
    let (vals, vecs) = eigh(h)?;
    if vals.iter().any(|v| v.abs() <= gap_tol) {
        return Err(BdfError::Invariant(format!(
            "eigenvalue {:.3e} within {gap_tol:.1e} of zero",
            vals.iter().fold(f64::INFINITY, |a, &b| if b.abs() < a.abs() { b } else { a })
        )));
    }
    let n_neg = vals.iter().filter(|v| **v < 0.0).count();
    let mut p: CMatrix = Array2::zeros((h.nrows(), h.ncols()));
    for j in 0..n_neg {
        let v = vecs.column(j);
        for r in 0..h.nrows() {
            for s in 0..h.ncols() {
                p[(r, s)] += v[r] * v[s].conj();
            }
        }
    }
    Ok(p)
}
