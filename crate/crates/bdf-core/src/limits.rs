//! Asymptotic regimes of the charged model.
//!
//! Two limits admit exact reference problems on the same lattice. When the
//! coupling shrinks while `coupling * source` is held fixed, the functional
//! linearizes and the optimal states are fillings of the one-body operator
//! with the frozen attractive potential. When the light speed grows with
//! the cutoff tied to it, the model collapses onto a two-spinor
//! Hartree-Fock problem once the rest energy per particle is subtracted.
//! A scaling identity connects parameter sets at different light speeds
//! exactly and cross-checks every term of the functional at once.

use std::f64::consts::PI;

use ndarray::s;
use num_complex::Complex64;

use crate::density::{ChargeDensity, ExternalDensity};
use crate::energy::potential_matrix;
use crate::error::{BdfError, Result};
use crate::lattice::MomentumLattice;
use crate::linalg::{self, CMatrix, Op};
use crate::scf::{minimize_charge, MeanFieldModel, ScfConfig, ScfReport};
use crate::vacuum::{check_coupling, solve_vacuum_lattice, LatticeVacuumConfig};

/// Number of interior rungs on the potential-strength homotopy.
const HOMOTOPY_STEPS: usize = 10;

/// Abort when a sampled spectrum comes this close to zero.
const GAP_PROXIMITY: f64 = 1e-6;

/// One rung of the potential-strength homotopy.
#[derive(Clone, Debug, serde::Serialize)]
pub struct HomotopyPoint {
    pub t: f64,
    /// Distance of the spectrum to zero at this strength.
    pub gap_to_zero: f64,
    pub negative_levels: usize,
}

/// Diagonalized one-body model `h_free - V[source]` on the full lattice.
///
/// Valid only while no level touches zero as the potential is switched on:
/// the constructor samples the homotopy and refuses sources that close the
/// gap, so the vacuum charge of every returned model is unambiguous.
pub struct LinearModel<'a> {
    /// The same operator packaged for the self-consistent solver, with zero
    /// coupling: warm starts and charge scans reuse one code path.
    pub model: MeanFieldModel<'a>,
    /// Full spectrum, ascending.
    pub eigenvalues: Vec<f64>,
    /// Levels pulled into `(0, threshold)`, nondecreasing.
    pub gap_levels_positive: Vec<f64>,
    /// Levels pushed into `(-threshold, 0)`, nonincreasing.
    pub gap_levels_negative: Vec<f64>,
    /// Filled-sea charge relative to the free vacuum.
    pub vacuum_charge: i64,
    /// Sea relaxation energy: filling the lowest levels instead of the
    /// free negative modes. Nonpositive.
    pub vacuum_energy: f64,
    /// Free continuum edge of this lattice.
    pub threshold: f64,
    pub homotopy: Vec<HomotopyPoint>,
    vectors: CMatrix,
    reference_energy: f64,
    n_minus: usize,
    n_sea: usize,
}

impl<'a> LinearModel<'a> {
    /// Minimal energy in the integer charge sector `n`: Aufbau sum over the
    /// lowest levels, measured from the free sea.
    pub fn charge_energy(&self, n: i64) -> Result<f64> {
        let total = self.n_minus as i64 + n;
        if total < 0 || total > self.eigenvalues.len() as i64 {
            return Err(BdfError::Config(format!(
                "charge {n} infeasible on a lattice with {} levels",
                self.eigenvalues.len()
            )));
        }
        let filled: f64 = self.eigenvalues[..total as usize].iter().sum();
        Ok(filled - self.reference_energy)
    }

    /// The `n` lowest levels above zero, as orthonormal columns.
    pub fn bound_orbitals(&self, n: usize) -> Result<CMatrix> {
        if self.n_sea + n > self.eigenvalues.len() {
            return Err(BdfError::Config(format!(
                "requested {n} orbitals, only {} levels above zero",
                self.eigenvalues.len() - self.n_sea
            )));
        }
        Ok(self
            .vectors
            .slice(s![.., self.n_sea..self.n_sea + n])
            .to_owned())
    }

    /// Projector on all levels below zero.
    pub fn sea_projector(&self) -> CMatrix {
        linalg::projector_from_columns(&self.vectors, 0, self.n_sea)
    }
}

/// Cap on `integral of the scaled source` below which an attractive well
/// provably cannot pull a level through zero, so the vacuum stays neutral.
pub fn neutrality_cap() -> f64 {
    2.0 / (PI / 2.0 + 2.0 / PI)
}

/// Diagonalize the one-body operator with the potential of `source` and
/// certify the switch-on path.
///
/// `source` is the product of coupling and external density, held fixed.
/// The homotopy `t -> h_free - t V` is sampled on an 11-point grid; if any
/// sample has a level within [`GAP_PROXIMITY`] of zero, or the count of
/// negative levels drifts between samples, the vacuum charge is judged
/// ill-conditioned and the construction aborts.
pub fn linear_model<'a>(
    lattice: &'a MomentumLattice,
    source: &ChargeDensity,
) -> Result<LinearModel<'a>> {
    let free = solve_vacuum_lattice(lattice, 0.0, 1.0, &LatticeVacuumConfig::default())?;
    let threshold = free.threshold().0;
    let pi = free.projector_matrix(lattice);
    let h_free = free.dressed_matrix(lattice);
    let v = potential_matrix(lattice, source);
    let n_minus = 2 * lattice.n_modes();

    let mut homotopy = Vec::with_capacity(HOMOTOPY_STEPS + 1);
    let mut last = None;
    for j in 0..=HOMOTOPY_STEPS {
        let t = j as f64 / HOMOTOPY_STEPS as f64;
        let ht = &h_free - &(&v * Complex64::new(t, 0.0));
        let (vals, vecs) = linalg::eigh(&ht)?;
        let gap_to_zero = vals.iter().fold(f64::INFINITY, |a, &x| a.min(x.abs()));
        let negative_levels = vals.iter().filter(|&&x| x < 0.0).count();
        homotopy.push(HomotopyPoint {
            t,
            gap_to_zero,
            negative_levels,
        });
        if gap_to_zero < GAP_PROXIMITY {
            return Err(BdfError::Invariant(format!(
                "gap closes while switching the potential on: \
                 |eigenvalue| = {gap_to_zero:.3e} at strength t = {t:.2}"
            )));
        }
        if j > 0 && negative_levels != homotopy[0].negative_levels {
            return Err(BdfError::Invariant(format!(
                "a level crossed zero between strengths t = {:.2} and t = {:.2}: \
                 vacuum charge is path-dependent",
                homotopy[j - 1].t, t
            )));
        }
        last = Some((vals, vecs));
    }
    let (vals, vectors) = last.expect("homotopy has at least one rung");

    let n_sea = vals.iter().filter(|&&x| x < 0.0).count();
    let reference_energy = linalg::trace_product(&(&h_free - &v), &pi).re;
    let sea_sum: f64 = vals.iter().take(n_sea).sum();
    let eigenvalues = vals.to_vec();
    let mut gap_levels_positive: Vec<f64> = eigenvalues
        .iter()
        .copied()
        .filter(|&x| x > 0.0 && x < threshold * (1.0 - 1e-9))
        .collect();
    gap_levels_positive.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut gap_levels_negative: Vec<f64> = eigenvalues
        .iter()
        .copied()
        .filter(|&x| x < 0.0 && x > -threshold * (1.0 - 1e-9))
        .collect();
    gap_levels_negative.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let model = MeanFieldModel {
        lattice,
        h: &h_free - &v,
        pi,
        n_ref: n_minus,
        coupling: 0.0,
        nu: ChargeDensity::zero(lattice),
    };
    Ok(LinearModel {
        model,
        eigenvalues,
        gap_levels_positive,
        gap_levels_negative,
        vacuum_charge: n_sea as i64 - n_minus as i64,
        vacuum_energy: sea_sum - reference_energy,
        threshold,
        homotopy,
        vectors,
        reference_energy,
        n_minus,
        n_sea,
    })
}

/// Convergence record for one coupling strength in the scan.
#[derive(Clone, Debug, serde::Serialize)]
pub struct WeakCouplingEntry {
    pub alpha: f64,
    pub energy: f64,
    /// Excess over the linear-model value; shrinks with the coupling.
    pub linear_gap: f64,
    /// Smallest squared singular value of the orbital overlap matrix.
    pub orbital_overlap: f64,
    /// Frobenius distance between the occupied-sea projectors of the two
    /// models.
    pub vacuum_distance: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct WeakCouplingReport {
    pub n: i64,
    /// Linear-model energy the scan converges to.
    pub linear_energy: f64,
    pub entries: Vec<WeakCouplingEntry>,
    /// Least-squares fit `energy(alpha) = intercept + slope * alpha` over
    /// the converged entries.
    pub fit_intercept: f64,
    pub fit_slope: f64,
    /// Gaps to the linear value nonincreasing along the scan.
    pub gaps_shrink: bool,
}

/// Solve the full model along a decreasing coupling list with the scaled
/// source held fixed, and compare against the linear model.
///
/// Solver failures are recorded per entry (energy `NaN`), never dropped.
pub fn weak_coupling_scan(
    lattice: &MomentumLattice,
    source: &ChargeDensity,
    n: i64,
    alphas: &[f64],
    cfg: &ScfConfig,
) -> Result<WeakCouplingReport> {
    if alphas.is_empty() {
        return Err(BdfError::Config("empty coupling list".into()));
    }
    for w in alphas.windows(2) {
        if w[1] >= w[0] {
            return Err(BdfError::Config(
                "coupling list must be strictly decreasing".into(),
            ));
        }
    }
    if n < 0 {
        return Err(BdfError::Config(
            "orbital comparison needs a nonnegative charge".into(),
        ));
    }

    let lin = linear_model(lattice, source)?;
    let linear_energy = lin.charge_energy(n)?;
    let lin_orbitals = lin.bound_orbitals(n as usize)?;
    let sea = lin.sea_projector();

    let mut entries = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        check_coupling(alpha)?;
        if alpha <= 0.0 {
            return Err(BdfError::Config("couplings must be positive".into()));
        }
        let nu = source.scaled(1.0 / alpha);
        let outcome = solve_vacuum_lattice(lattice, alpha, 1.0, &LatticeVacuumConfig::default())
            .and_then(|vac| {
                let model = MeanFieldModel::relativistic(lattice, &vac, nu);
                minimize_charge(&model, n as f64, None, cfg).map(|(q, rep)| (model.pi, q, rep))
            });
        match outcome {
            Ok((pi, q, rep)) => {
                let (_, qvecs) = linalg::eigh(&q)?;
                let dim = q.nrows();
                let orbitals = qvecs.slice(s![.., dim - n as usize..]).to_owned();
                let orbital_overlap = if n == 0 {
                    1.0
                } else {
                    let o = linalg::matmul(&lin_orbitals, Op::Adjoint, &orbitals, Op::None);
                    let gram = linalg::matmul(&o, Op::Adjoint, &o, Op::None);
                    let (gvals, _) = linalg::eigh(&gram)?;
                    gvals[0]
                };
                let filled = linalg::matmul(&orbitals, Op::None, &orbitals, Op::Adjoint);
                let occupied = &q + &pi - &filled;
                let vacuum_distance = linalg::frobenius_norm(&(&occupied - &sea));
                entries.push(WeakCouplingEntry {
                    alpha,
                    energy: rep.energy_total,
                    linear_gap: rep.energy_total - linear_energy,
                    orbital_overlap,
                    vacuum_distance,
                    converged: rep.converged,
                    iterations: rep.iterations,
                });
            }
            Err(_) => entries.push(WeakCouplingEntry {
                alpha,
                energy: f64::NAN,
                linear_gap: f64::NAN,
                orbital_overlap: f64::NAN,
                vacuum_distance: f64::NAN,
                converged: false,
                iterations: 0,
            }),
        }
    }

    let fit: Vec<(f64, f64)> = entries
        .iter()
        .filter(|e| e.converged)
        .map(|e| (e.alpha, e.energy))
        .collect();
    let (fit_slope, fit_intercept) = least_squares_line(&fit);
    let gaps_shrink = entries
        .windows(2)
        .all(|w| match (w[0].converged, w[1].converged) {
            (true, true) => w[1].linear_gap.abs() <= w[0].linear_gap.abs() + 1e-12,
            _ => false,
        });

    Ok(WeakCouplingReport {
        n,
        linear_energy,
        entries,
        fit_intercept,
        fit_slope,
        gaps_shrink,
    })
}

/// Slope and intercept of the least-squares line through `points`;
/// `(NaN, NaN)` when fewer than two points are given.
fn least_squares_line(points: &[(f64, f64)]) -> (f64, f64) {
    if points.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let m = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = m * sxx - sx * sx;
    let slope = (m * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / m;
    (slope, intercept)
}

/// Explicit linear-growth certificate `E(n) >= kappa1 |n| - kappa2`.
#[derive(Clone, Debug, serde::Serialize)]
pub struct GrowthCertificate {
    pub kappa1: f64,
    pub kappa2: f64,
    pub satisfied: bool,
}

/// Construct the certificate from sampled sector energies: `kappa2` clears
/// the minimum, `kappa1` is the worst normalized margin over nonzero
/// charges.
pub fn growth_certificate(points: &[(i64, f64)]) -> Result<GrowthCertificate> {
    if points.iter().any(|p| !p.1.is_finite()) {
        return Err(BdfError::Config(
            "growth certificate needs finite energies".into(),
        ));
    }
    let min_e = points
        .iter()
        .map(|p| p.1)
        .fold(f64::INFINITY, f64::min);
    let kappa2 = 0.05 + (-min_e).max(0.0);
    let kappa1 = points
        .iter()
        .filter(|p| p.0 != 0)
        .map(|p| (p.1 + kappa2) / p.0.abs() as f64)
        .fold(f64::INFINITY, f64::min);
    if !kappa1.is_finite() {
        return Err(BdfError::Config(
            "growth certificate needs a nonzero charge sample".into(),
        ));
    }
    Ok(GrowthCertificate {
        kappa1,
        kappa2,
        satisfied: kappa1 > 0.0,
    })
}

/// Converged two-spinor reference problem.
pub struct HartreeFockResult {
    pub energy: f64,
    /// Occupied orbitals as orthonormal columns.
    pub orbitals: CMatrix,
    /// Rayleigh quotients of the orbitals in the final mean field,
    /// ascending.
    pub orbital_energies: Vec<f64>,
    /// Frobenius defect of the orbital Gram matrix from the identity.
    pub gram_defect: f64,
    /// Worst deviation of an occupied level of the state from one.
    pub occupation_defect: f64,
    pub report: ScfReport,
}

/// Minimize the two-spinor functional at integer particle number `n`.
///
/// Same optimizer as the full model, kinetic symbol swapped: energy
/// comparisons across the two never mix solver idiosyncrasies.
pub fn hartree_fock_solve(
    lattice: &MomentumLattice,
    nu: &ChargeDensity,
    n: i64,
    coupling: f64,
    cfg: &ScfConfig,
) -> Result<HartreeFockResult> {
    if lattice.spinor_dim != 2 {
        return Err(BdfError::Config(
            "the reference problem lives on the two-spinor lattice".into(),
        ));
    }
    if n < 0 {
        return Err(BdfError::Config("particle number must be nonnegative".into()));
    }
    let model = MeanFieldModel::nonrelativistic(lattice, coupling, nu.clone());
    let (q, report) = minimize_charge(&model, n as f64, None, cfg)?;
    let (qvals, qvecs) = linalg::eigh(&q)?;
    let dim = q.nrows();
    let n = n as usize;
    let orbitals = qvecs.slice(s![.., dim - n..]).to_owned();
    let occupation_defect = qvals
        .iter()
        .rev()
        .take(n)
        .fold(0.0f64, |a, &x| a.max((x - 1.0).abs()));
    let f = model.mean_field(&q);
    let fo = linalg::matmul(&f, Op::None, &orbitals, Op::None);
    let mut orbital_energies: Vec<f64> = (0..n)
        .map(|i| {
            orbitals
                .column(i)
                .iter()
                .zip(fo.column(i).iter())
                .map(|(a, b)| (a.conj() * b).re)
                .sum()
        })
        .collect();
    orbital_energies.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let gram = linalg::matmul(&orbitals, Op::Adjoint, &orbitals, Op::None);
    let eye = CMatrix::eye(n);
    let gram_defect = linalg::frobenius_norm(&(&gram - &eye));
    Ok(HartreeFockResult {
        energy: report.energy_total,
        orbitals,
        orbital_energies,
        gram_defect,
        occupation_defect,
        report,
    })
}

/// Convergence record for one light speed.
#[derive(Clone, Debug, serde::Serialize)]
pub struct NonRelEntry {
    pub light_speed: f64,
    pub cutoff: f64,
    pub dim: usize,
    /// Dressed rest energy per particle, subtracted from the total.
    pub rest_energy: f64,
    /// The dressed dispersion attains its minimum at zero momentum.
    pub threshold_at_origin: bool,
    pub energy: f64,
    /// Total minus `n` rest energies; converges to the reference value.
    pub excess_energy: f64,
    /// Two-spinor value on this entry's own momentum set.
    pub matched_reference: f64,
    /// Distance of the excess to the scan-wide reference value.
    pub reference_gap: f64,
    /// Mean weight of the lower spinor pair across occupied orbitals.
    pub lower_spinor_weight: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct NonRelReport {
    pub n: i64,
    /// Two-spinor value on the finest scanned momentum set. Gaps are
    /// measured against this one number: per-entry references move with
    /// the basis and would mask the trend in the light speed.
    pub reference_energy: f64,
    pub entries: Vec<NonRelEntry>,
    /// Reference gaps strictly decreasing along the scan.
    pub gaps_shrink: bool,
    /// Decay exponent of the lower-spinor weight over the last two
    /// entries, where the momentum set has stabilized.
    pub lower_weight_exponent: f64,
}

/// Scan increasing light speeds with the cutoff tied as `lambda0 * c`,
/// comparing the excess energy against the two-spinor problem.
pub fn nonrel_scan(
    box_length: f64,
    lambda0: f64,
    nu_spec: &ExternalDensity,
    n: i64,
    light_speeds: &[f64],
    cfg: &ScfConfig,
) -> Result<NonRelReport> {
    if light_speeds.is_empty() {
        return Err(BdfError::Config("empty light-speed list".into()));
    }
    for w in light_speeds.windows(2) {
        if w[1] <= w[0] {
            return Err(BdfError::Config(
                "light speeds must be strictly increasing".into(),
            ));
        }
    }
    if lambda0 <= 0.0 || !lambda0.is_finite() || light_speeds[0] <= 0.0 {
        return Err(BdfError::Config(
            "cutoff ratio and light speeds must be positive".into(),
        ));
    }
    nu_spec.validate()?;
    if n < 1 {
        return Err(BdfError::Config("the scan needs at least one particle".into()));
    }

    let finest = MomentumLattice::build(box_length, lambda0 * light_speeds.last().unwrap(), 2)?;
    let reference_energy =
        hartree_fock_solve(&finest, &nu_spec.sample(&finest), n, 1.0, cfg)?.energy;

    let mut entries = Vec::with_capacity(light_speeds.len());
    for &c in light_speeds {
        let cutoff = lambda0 * c;
        let lattice = MomentumLattice::build(box_length, cutoff, 4)?;
        let origin = lattice.mode_of(&[0, 0, 0]).ok_or_else(|| {
            BdfError::Config("the scan lattice must contain the zero mode".into())
        })?;
        let vac = solve_vacuum_lattice(&lattice, 1.0, c, &LatticeVacuumConfig::default())?;
        let rest_energy = vac.g0[origin];
        let (thr, thr_mode) = vac.threshold();
        let threshold_at_origin =
            thr_mode == origin && (thr - rest_energy).abs() <= 1e-9 * rest_energy.abs();

        let lattice2 = MomentumLattice::build(box_length, cutoff, 2)?;
        let matched = hartree_fock_solve(&lattice2, &nu_spec.sample(&lattice2), n, 1.0, cfg)?;

        let nu = nu_spec.sample(&lattice);
        let model = MeanFieldModel::relativistic(&lattice, &vac, nu);
        match minimize_charge(&model, n as f64, None, cfg) {
            Ok((q, rep)) => {
                let (_, qvecs) = linalg::eigh(&q)?;
                let dim = q.nrows();
                let orbitals = qvecs.slice(s![.., dim - n as usize..]).to_owned();
                let mut lower = 0.0;
                for i in 0..n as usize {
                    let col = orbitals.column(i);
                    for m in 0..lattice.n_modes() {
                        lower += col[4 * m + 2].norm_sqr() + col[4 * m + 3].norm_sqr();
                    }
                }
                let lower_spinor_weight = lower / n as f64;
                let excess_energy = rep.energy_total - n as f64 * rest_energy;
                entries.push(NonRelEntry {
                    light_speed: c,
                    cutoff,
                    dim,
                    rest_energy,
                    threshold_at_origin,
                    energy: rep.energy_total,
                    excess_energy,
                    matched_reference: matched.energy,
                    reference_gap: (excess_energy - reference_energy).abs(),
                    lower_spinor_weight,
                    converged: rep.converged,
                });
            }
            Err(_) => entries.push(NonRelEntry {
                light_speed: c,
                cutoff,
                dim: lattice.total_dim(),
                rest_energy,
                threshold_at_origin,
                energy: f64::NAN,
                excess_energy: f64::NAN,
                matched_reference: matched.energy,
                reference_gap: f64::NAN,
                lower_spinor_weight: f64::NAN,
                converged: false,
            }),
        }
    }

    let gaps_shrink = entries
        .windows(2)
        .all(|w| match (w[0].converged, w[1].converged) {
            (true, true) => w[1].reference_gap < w[0].reference_gap,
            _ => false,
        });
    let tail: Vec<(f64, f64)> = entries
        .iter()
        .filter(|e| e.converged && e.lower_spinor_weight > 0.0)
        .map(|e| (e.light_speed.ln(), e.lower_spinor_weight.ln()))
        .collect();
    let (slope, _) = least_squares_line(&tail[tail.len().saturating_sub(2)..]);
    Ok(NonRelReport {
        n,
        reference_energy,
        entries,
        gaps_shrink,
        lower_weight_exponent: -slope,
    })
}

/// Result of running the same physical problem in two parameterizations.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ScalingCheck {
    pub light_speed: f64,
    pub dim: usize,
    /// Energy at light speed `c`, cutoff `lambda0 * c`, unit coupling.
    pub energy_left: f64,
    /// Energy at unit light speed, cutoff `lambda0`, coupling `1/c`, on
    /// the box stretched by `c` with the source widened by `c`.
    pub energy_right: f64,
    /// `c^2 * energy_right`; equals `energy_left` up to solver tolerance.
    pub scaled_right: f64,
    pub relative_residual: f64,
    /// Worst per-mode defect between the left dressed symbols and the
    /// rescaled right ones.
    pub symbol_defect: f64,
}

/// Verify the exact parameter scaling on a paired lattice pair.
///
/// Stretching lengths by `c` maps mode `2 pi m / L` to `2 pi m / (c L)`,
/// so the two mode sets carry identical integer labels and every term of
/// the functional transports exactly; the energies must agree to rounding
/// after multiplying the stretched side by `c^2`.
pub fn scaling_identity_check(
    box_length: f64,
    lambda0: f64,
    nu_spec: &ExternalDensity,
    n: i64,
    light_speed: f64,
    cfg: &ScfConfig,
) -> Result<ScalingCheck> {
    let c = light_speed;
    if c <= 0.0 || !c.is_finite() {
        return Err(BdfError::Config("light speed must be positive".into()));
    }
    check_coupling(1.0 / c)?;
    nu_spec.validate()?;

    let left = MomentumLattice::build(box_length, lambda0 * c, 4)?;
    let right = MomentumLattice::build(c * box_length, lambda0, 4)?;
    if left.modes != right.modes {
        return Err(BdfError::Config(format!(
            "lattices are not paired: {} modes against {}",
            left.n_modes(),
            right.n_modes()
        )));
    }

    let nu_right = ExternalDensity {
        gaussians: nu_spec
            .gaussians
            .iter()
            .map(|g| crate::density::GaussianCharge {
                charge: g.charge,
                center: [g.center[0] * c, g.center[1] * c, g.center[2] * c],
                width: g.width * c,
            })
            .collect(),
    };

    let vac_cfg = LatticeVacuumConfig::default();
    let vac_left = solve_vacuum_lattice(&left, 1.0, c, &vac_cfg)?;
    let vac_right = solve_vacuum_lattice(&right, 1.0 / c, 1.0, &vac_cfg)?;
    let mut symbol_defect = 0.0f64;
    for (a, b) in vac_left.dressed.iter().zip(vac_right.dressed.iter()) {
        let scaled = b * Complex64::new(c * c, 0.0);
        symbol_defect = symbol_defect.max(linalg::frobenius_norm(&(a - &scaled)));
    }

    let model_left = MeanFieldModel::relativistic(&left, &vac_left, nu_spec.sample(&left));
    let model_right = MeanFieldModel::relativistic(&right, &vac_right, nu_right.sample(&right));
    let (_, rep_left) = minimize_charge(&model_left, n as f64, None, cfg)?;
    let (_, rep_right) = minimize_charge(&model_right, n as f64, None, cfg)?;

    let energy_left = rep_left.energy_total;
    let energy_right = rep_right.energy_total;
    let scaled_right = c * c * energy_right;
    Ok(ScalingCheck {
        light_speed: c,
        dim: left.total_dim(),
        energy_left,
        energy_right,
        scaled_right,
        relative_residual: (energy_left - scaled_right).abs() / (1.0 + energy_left.abs()),
        symbol_defect,
    })
}
