//! One function per subcommand. Every task writes its artifacts into the
//! run directory and prints a one-line summary; errors bubble up to the
//! exit-code mapping in `main`.

use bdf_core::density::ChargeDensity;
use bdf_core::error::{BdfError, Result};
use bdf_core::hvz::{
    check_binding, check_bounds, check_concavity_and_lipschitz, check_pair_suppression,
    scan_energies,
};
use bdf_core::lattice::MomentumLattice;
use bdf_core::limits::{nonrel_scan, scaling_identity_check, weak_coupling_scan};
use bdf_core::linalg::{eigh, matmul, CMatrix, Op};
use bdf_core::scf::{minimize_charge, MeanFieldModel};
use bdf_core::state::{charge, random_admissible, random_hermitian};
use bdf_core::structure::{decompose_projector_pair, lieb_purify};
use bdf_core::vacuum::{
    solve_symbol_radial, solve_vacuum_lattice, FreeVacuumProjector, LatticeVacuumConfig,
    RadialConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::io::{load_state, save_state, write_csv, write_json, RunDir};

/// Tolerances for the curve-analysis reports, matching the test suite.
const BOUNDS_TOL: f64 = 1e-9;
const CONCAVITY_TOL: f64 = 1e-8;
const BINDING_TOL: f64 = 5e-9;

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn build_lattice(cfg: &RunConfig) -> Result<MomentumLattice> {
    let lattice = MomentumLattice::build(
        cfg.lattice.box_length,
        cfg.lattice.cutoff,
        cfg.lattice.spinor_dim,
    )?;
    cfg.ensure_dim(lattice.total_dim())?;
    Ok(lattice)
}

fn dressed_vacuum(cfg: &RunConfig, lattice: &MomentumLattice) -> Result<FreeVacuumProjector> {
    solve_vacuum_lattice(
        lattice,
        cfg.model.alpha,
        cfg.model.light_speed,
        &LatticeVacuumConfig::default(),
    )
}

pub fn free_vacuum(cfg: &RunConfig, dir: &RunDir) -> Result<()> {
    let sym = solve_symbol_radial(
        cfg.model.alpha,
        cfg.lattice.cutoff,
        cfg.model.light_speed,
        &RadialConfig::default(),
    )?;
    let rows: Vec<Vec<String>> = sym
        .grid
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            vec![
                fmt(p),
                fmt(sym.g0[i]),
                fmt(sym.g1[i]),
                fmt(sym.energy_at(p)),
            ]
        })
        .collect();
    write_csv(&dir.file("symbol.csv"), &["p", "g0", "g1", "energy"], &rows)?;
    let (threshold, at) = sym.threshold();
    write_json(
        &dir.file("report.json"),
        &serde_json::json!({
            "alpha": sym.alpha,
            "cutoff": sym.cutoff,
            "light_speed": sym.light_speed,
            "iterations": sym.iterations,
            "residual": sym.residual,
            "g0_origin": sym.g0_at(0.0),
            "threshold": threshold,
            "threshold_momentum": at,
        }),
    )?;
    println!(
        "free-vacuum: g0(0) = {:.12}, threshold {:.12} after {} iterations",
        sym.g0_at(0.0),
        threshold,
        sym.iterations
    );
    Ok(())
}

pub fn vacuum(cfg: &RunConfig, dir: &RunDir) -> Result<()> {
    let lattice = build_lattice(cfg)?;
    let vac = dressed_vacuum(cfg, &lattice)?;
    let rows: Vec<Vec<String>> = (0..lattice.n_modes())
        .map(|i| {
            let n = lattice.modes[i];
            vec![
                n[0].to_string(),
                n[1].to_string(),
                n[2].to_string(),
                fmt(lattice.momentum_norm(i)),
                fmt(vac.g0[i]),
                fmt(vac.g1[i]),
                fmt(vac.g1_transverse[i]),
                fmt(vac.energies[i]),
            ]
        })
        .collect();
    write_csv(
        &dir.file("modes.csv"),
        &["n1", "n2", "n3", "p", "g0", "g1", "g1_transverse", "energy"],
        &rows,
    )?;
    let (threshold, mode) = vac.threshold();
    write_json(
        &dir.file("report.json"),
        &serde_json::json!({
            "dim": lattice.total_dim(),
            "modes": lattice.n_modes(),
            "threshold": threshold,
            "threshold_mode": mode,
            "iterations": vac.iterations,
            "residual": vac.residual_history.last(),
            "tail_not_monotone": vac.tail_not_monotone,
        }),
    )?;
    println!(
        "vacuum: {} modes, threshold {:.12}, {} iterations",
        lattice.n_modes(),
        threshold,
        vac.iterations
    );
    Ok(())
}

pub fn ground_state(cfg: &RunConfig, dir: &RunDir) -> Result<()> {
    let lattice = build_lattice(cfg)?;
    let vac = dressed_vacuum(cfg, &lattice)?;
    let nu = cfg.external_density().sample(&lattice);
    let model = MeanFieldModel::relativistic(&lattice, &vac, nu);
    let (q, report) = minimize_charge(&model, cfg.task.charge, None, &cfg.scf_config())?;
    let (threshold, _) = vac.threshold();
    let history: Vec<Vec<String>> = report
        .history
        .iter()
        .enumerate()
        .map(|(i, &(e, r))| vec![i.to_string(), fmt(e), fmt(r)])
        .collect();
    write_csv(
        &dir.file("history.csv"),
        &["iteration", "energy", "residual"],
        &history,
    )?;
    write_json(
        &dir.file("report.json"),
        &serde_json::json!({
            "target_charge": cfg.task.charge,
            "threshold": threshold,
            "report": report,
        }),
    )?;
    save_state(
        &dir.file("state.bin"),
        &lattice,
        cfg.model.alpha,
        cfg.model.light_speed,
        &q,
        &model.pi,
    )?;
    println!(
        "ground-state: charge {:.6}, energy {:.12}, mu {:.6}, gap {:.3e}, {} iterations",
        report.charge, report.energy_total, report.mu, report.gap, report.iterations
    );
    if !report.converged {
        return Err(BdfError::NonConvergence {
            what: "ground-state minimization".into(),
            residual: report.residual,
            iterations: report.iterations,
        });
    }
    Ok(())
}

pub fn hvz_scan(cfg: &RunConfig, dir: &RunDir) -> Result<()> {
    if cfg.task.charges.is_empty() {
        return Err(BdfError::Config("task.charges is empty".into()));
    }
    let lattice = build_lattice(cfg)?;
    let vac = dressed_vacuum(cfg, &lattice)?;
    let source = cfg.external_density();
    let self_energy = source.self_energy(&lattice);
    let origin = lattice
        .mode_of(&[0, 0, 0])
        .ok_or_else(|| BdfError::Config("lattice has no zero mode".into()))?;
    let g00 = vac.g0[origin];
    let (threshold, _) = vac.threshold();
    let scf = cfg.scf_config();

    let model = MeanFieldModel::relativistic(&lattice, &vac, source.sample(&lattice));
    let curve = scan_energies(&model, &cfg.task.charges, &scf);
    let mut free_charges: Vec<f64> = vec![0.0];
    free_charges.extend(cfg.task.k_window.iter().map(|&k| k.abs() as f64));
    let free_model =
        MeanFieldModel::relativistic(&lattice, &vac, ChargeDensity::zero(&lattice));
    let free = scan_energies(&free_model, &free_charges, &scf);

    for (name, c) in [("curve.csv", &curve), ("free_curve.csv", &free)] {
        let rows: Vec<Vec<String>> = c
            .points
            .iter()
            .map(|p| {
                vec![
                    fmt(p.q),
                    fmt(p.energy),
                    fmt(p.mu),
                    fmt(p.gap),
                    p.converged.to_string(),
                    p.iterations.to_string(),
                ]
            })
            .collect();
        write_csv(
            &dir.file(name),
            &["q", "energy", "mu", "gap", "converged", "iterations"],
            &rows,
        )?;
    }

    let bounds = check_bounds(&curve, threshold, g00, cfg.model.alpha, self_energy, BOUNDS_TOL);
    let shape = check_concavity_and_lipschitz(&curve, g00, CONCAVITY_TOL);
    let binding = check_binding(&curve, &free, cfg.task.binding_n, &cfg.task.k_window, BINDING_TOL)?;
    let suppression = check_pair_suppression(
        g00,
        threshold,
        cfg.model.alpha,
        self_energy,
        cfg.task.binding_n,
    );
    write_json(
        &dir.file("analysis.json"),
        &serde_json::json!({
            "bounds": bounds,
            "concavity": shape,
            "binding": binding,
            "pair_suppression": suppression,
        }),
    )?;
    let worst = binding
        .entries
        .iter()
        .map(|e| e.margin)
        .fold(f64::INFINITY, f64::min);
    println!(
        "hvz-scan: {} points, envelope {}, concave {}, smallest binding margin {:.6e}",
        curve.points.len(),
        bounds.all_pass,
        shape.concave,
        worst
    );
    Ok(())
}

pub fn weak_coupling(cfg: &RunConfig, dir: &RunDir) -> Result<()> {
    let lattice = build_lattice(cfg)?;
    let nu = cfg.external_density().sample(&lattice);
    let report = weak_coupling_scan(
        &lattice,
        &nu,
        cfg.task.particles,
        &cfg.task.alphas,
        &cfg.scf_config(),
    )?;
    let rows: Vec<Vec<String>> = report
        .entries
        .iter()
        .map(|e| {
            vec![
                fmt(e.alpha),
                fmt(e.energy),
                fmt(e.linear_gap),
                fmt(e.orbital_overlap),
                fmt(e.vacuum_distance),
                e.converged.to_string(),
                e.iterations.to_string(),
            ]
        })
        .collect();
    write_csv(
        &dir.file("entries.csv"),
        &[
            "alpha",
            "energy",
            "linear_gap",
            "orbital_overlap",
            "vacuum_distance",
            "converged",
            "iterations",
        ],
        &rows,
    )?;
    write_json(&dir.file("report.json"), &report)?;
    println!(
        "weak-coupling: linear value {:.12}, fit intercept {:.12}, gaps shrink {}",
        report.linear_energy, report.fit_intercept, report.gaps_shrink
    );
    Ok(())
}

pub fn nonrel_limit(cfg: &RunConfig, dir: &RunDir) -> Result<()> {
    if cfg.task.light_speeds.is_empty() {
        return Err(BdfError::Config("task.light_speeds is empty".into()));
    }
    let finest_c = cfg.task.light_speeds.iter().cloned().fold(0.0, f64::max);
    let probe = MomentumLattice::build(cfg.lattice.box_length, cfg.task.lambda0 * finest_c, 4)?;
    cfg.ensure_dim(probe.total_dim())?;
    let source = cfg.external_density();
    let report = nonrel_scan(
        cfg.lattice.box_length,
        cfg.task.lambda0,
        &source,
        cfg.task.particles,
        &cfg.task.light_speeds,
        &cfg.scf_config(),
    )?;
    let rows: Vec<Vec<String>> = report
        .entries
        .iter()
        .map(|e| {
            vec![
                fmt(e.light_speed),
                fmt(e.cutoff),
                e.dim.to_string(),
                fmt(e.rest_energy),
                fmt(e.excess_energy),
                fmt(e.matched_reference),
                fmt(e.reference_gap),
                fmt(e.lower_spinor_weight),
                e.converged.to_string(),
            ]
        })
        .collect();
    write_csv(
        &dir.file("entries.csv"),
        &[
            "light_speed",
            "cutoff",
            "dim",
            "rest_energy",
            "excess_energy",
            "matched_reference",
            "reference_gap",
            "lower_spinor_weight",
            "converged",
        ],
        &rows,
    )?;
    let scaling = match cfg.task.scaling_light_speed {
        Some(c) => Some(scaling_identity_check(
            cfg.lattice.box_length,
            cfg.task.lambda0,
            &source,
            cfg.task.particles,
            c,
            &cfg.scf_config(),
        )?),
        None => None,
    };
    write_json(
        &dir.file("report.json"),
        &serde_json::json!({ "scan": report, "scaling": scaling }),
    )?;
    println!(
        "nonrel-limit: reference {:.12}, gaps shrink {}, lower-spinor exponent {:.3}",
        report.reference_energy, report.gaps_shrink, report.lower_weight_exponent
    );
    if let Some(s) = scaling {
        println!(
            "nonrel-limit: scaling residual {:.3e} at c = {}",
            s.relative_residual, s.light_speed
        );
    }
    Ok(())
}

pub fn decompose(dir: &RunDir, input: &std::path::Path) -> Result<()> {
    let state = load_state(input)?;
    let p = &state.q + &state.pi;
    let dec = decompose_projector_pair(&p, &state.pi, 1e-8)?;
    let lambdas: Vec<f64> = dec.rotations.iter().map(|r| r.lambda).collect();
    write_json(
        &dir.file("report.json"),
        &serde_json::json!({
            "input": input.display().to_string(),
            "dim": p.nrows(),
            "box_length": state.box_length,
            "cutoff": state.cutoff,
            "spinor_dim": state.spinor_dim,
            "alpha": state.alpha,
            "light_speed": state.light_speed,
            "relative_charge": dec.relative_charge,
            "kept": dec.kept.len(),
            "created": dec.created.len(),
            "annihilated": dec.annihilated.len(),
            "lambdas": lambdas,
            "amplitude": dec.amplitude(),
        }),
    )?;
    println!(
        "decompose: relative charge {}, {} rotated pairs, amplitude {:.12}",
        dec.relative_charge,
        lambdas.len(),
        dec.amplitude()
    );
    Ok(())
}

struct Selftest {
    failures: usize,
    index: usize,
}

impl Selftest {
    fn check(&mut self, pass: bool, detail: &str) {
        self.index += 1;
        println!(
            "selftest {:02} {}: {detail}",
            self.index,
            if pass { "pass" } else { "FAIL" }
        );
        if !pass {
            self.failures += 1;
        }
    }
}

/// Deterministic invariant sweep over every solver layer; a fresh checkout
/// must exit 0.
pub fn selftest(cfg: &RunConfig, dir: &RunDir) -> Result<()> {
    let mut t = Selftest {
        failures: 0,
        index: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let alpha = 0.5;

    // dressed symbol chain inequality on the radial grid
    let sym = solve_symbol_radial(alpha, 5.0, 1.0, &RadialConfig::default())?;
    let violations = sym
        .grid
        .iter()
        .enumerate()
        .filter(|&(i, &x)| {
            let slack = 1e-12 * (1.0 + x);
            sym.g1[i] < x - slack || sym.g1[i] > x * sym.g0[i] + slack
        })
        .count();
    t.check(
        violations == 0,
        &format!("symbol chain inequality, {violations} violations"),
    );

    // lattice vacuum: per-mode projector idempotent and commuting with the
    // dressed symbol, threshold above the bare mass
    let lattice = MomentumLattice::build(2.0 * std::f64::consts::PI, 1.0, 4)?;
    let vac = solve_vacuum_lattice(&lattice, alpha, 1.0, &LatticeVacuumConfig::default())?;
    let mut worst = 0.0f64;
    for (p, d) in vac.symbols.iter().zip(&vac.dressed) {
        let pp = matmul(p, Op::None, p, Op::None);
        let pd = matmul(p, Op::None, d, Op::None);
        let dp = matmul(d, Op::None, p, Op::None);
        let frob = |m: &CMatrix| m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max(frob(&(&pp - p))).max(frob(&(&pd - &dp)));
    }
    let (threshold, _) = vac.threshold();
    t.check(
        worst < 1e-9 && threshold >= 1.0,
        &format!("vacuum symbols: defect {worst:.2e}, threshold {threshold:.6}"),
    );

    // energy floor on random admissible states
    let source = cfg.external_density();
    let nu = source.sample(&lattice);
    let self_energy = source.self_energy(&lattice);
    let model = MeanFieldModel::relativistic(&lattice, &vac, nu.clone());
    let mut min_shifted = f64::INFINITY;
    for _ in 0..100 {
        let q = random_admissible(&model.pi, 1.5, &mut rng);
        min_shifted = min_shifted.min(model.energy(&q).total() + 0.5 * alpha * self_energy);
    }
    t.check(
        min_shifted >= -1e-10,
        &format!("energy floor over 100 states: minimum {min_shifted:.3e}"),
    );

    // one-particle ground state: stationary, gapped, extremal, below the
    // free upper bound
    let (q1, report) = minimize_charge(&model, 1.0, None, &cfg.scf_config())?;
    let (occ, _) = eigh(&(&q1 + &model.pi))?;
    let fractional = occ.iter().filter(|&&x| x > 1e-6 && x < 1.0 - 1e-6).count();
    let origin = lattice.mode_of(&[0, 0, 0]).expect("zero mode");
    t.check(
        report.converged
            && report.residual < 1e-8
            && report.gap >= -1e-12
            && fractional == 0
            && report.energy_total <= vac.g0[origin] + 1e-9,
        &format!(
            "ground state q=1: residual {:.1e}, gap {:.2e}, {} fractional, energy {:.6}",
            report.residual, report.gap, fractional, report.energy_total
        ),
    );

    // purification on random fractional states
    let mut ok = true;
    let mut detail = String::new();
    for s in 0..20 {
        let q = random_admissible(&model.pi, 1.2, &mut rng);
        let out = lieb_purify(&lattice, &model.h, alpha, &nu, &q, &model.pi, 1e-10)?;
        let (occ, _) = eigh(&(&out.q + &model.pi))?;
        let frac = occ.iter().filter(|&&x| x > 1e-8 && x < 1.0 - 1e-8).count();
        if frac > 1
            || (charge(&out.q) - charge(&q)).abs() > 1e-9
            || out.energy_after > out.energy_before + 1e-10
        {
            ok = false;
            detail = format!("state {s}: {frac} fractional");
            break;
        }
    }
    t.check(ok, &format!("purification over 20 states {detail}"));

    // projector-pair decomposition round trip
    let mut worst_rebuild = 0.0f64;
    let mut worst_trace = 0.0f64;
    for _ in 0..50 {
        let dim = rng.gen_range(4..=16);
        let r1 = rng.gen_range(1..dim);
        let r2 = rng.gen_range(1..dim);
        let pi = leading_projector(&random_hermitian(dim, 1.0, &mut rng), r1)?;
        let p = leading_projector(&random_hermitian(dim, 1.0, &mut rng), r2)?;
        let dec = decompose_projector_pair(&p, &pi, 1e-8)?;
        let rebuilt = dec.reconstruct(dim);
        let frob = (&rebuilt - &p).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        worst_rebuild = worst_rebuild.max(frob);
        let tr: num_complex::Complex64 = (&p - &pi).diag().iter().sum();
        worst_trace = worst_trace
            .max((tr.re - dec.relative_charge as f64).abs() + tr.im.abs());
    }
    t.check(
        worst_rebuild < 1e-10 && worst_trace < 1e-10,
        &format!("decomposition round trip: residual {worst_rebuild:.1e}, trace defect {worst_trace:.1e}"),
    );

    write_json(
        &dir.file("report.json"),
        &serde_json::json!({ "checks": t.index, "failures": t.failures }),
    )?;
    if t.failures > 0 {
        return Err(BdfError::Invariant(format!(
            "selftest: {} of {} checks failed",
            t.failures, t.index
        )));
    }
    println!("selftest: all {} checks passed", t.index);
    Ok(())
}

fn leading_projector(seed: &CMatrix, rank: usize) -> Result<CMatrix> {
    let (_, vecs) = eigh(seed)?;
    let dim = seed.nrows();
    let cols = vecs.slice(ndarray::s![.., dim - rank..]).to_owned();
    Ok(matmul(&cols, Op::None, &cols, Op::Adjoint))
}
