// Copyright 2026 Thermalsim Contributors
// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite: one PASS/FAIL line per criterion, with pinned tolerances.
//!
//! Criteria that are known to fail with the default conventions are listed in
//! `KNOWN_FAILURES`; the process exits nonzero only when the observed failures differ from
//! that list, so an unexpected pass is reported just like an unexpected failure.
//!
//! Set `THERMALSIM_LARGE=1` to add the six-qubit trajectory comparison (slow).

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use thermalsim::analysis::{fixed_point, trace_distance};
use thermalsim::collision::{
    channel_averaged, channel_kls, channel_randomized_bath, channel_single, Ladder, ProtocolParams,
};
use thermalsim::config::{ExperimentConfig, ExperimentKind};
use thermalsim::experiments::{
    self, averaged_series, default_observables, fixpoint_point, gap_point, resonance_beta_point,
    resonance_error_point, trajectory_steps,
};
use thermalsim::linalg::{self, CMat};
use thermalsim::operators::{build_mixed_field_ising, gibbs_state, spectral_decompose, DensityMatrix, SpectralSystem};
use thermalsim::sampler::{
    build_coherent_ls, build_jump_operators, jump_operator_quadrature, kms_residual, GaussianFilter,
    GeneratorKind, JumpSet, LambShiftMethod, SamplerParts, Superoperator,
};
use thermalsim::trajectories::{
    ensemble_stats, fit_contraction, randomized_bath_ensemble, variance_bound, TrajectoryEnsemble,
};

const KNOWN_FAILURES: [&str; 2] = ["trajectory variance", "randomized bath comparison"];

const G: f64 = 0.9045;
const H: f64 = 0.809;
const SEED: u64 = 0;
const TRAJECTORIES: usize = 50;

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
    seconds: f64,
    budget: f64,
}

fn model(n: usize) -> SpectralSystem {
    spectral_decompose(&build_mixed_field_ising(n, G, H, false).unwrap(), 1e-9).unwrap()
}

fn protocol(n: usize, j: f64, t: f64, beta: f64) -> ProtocolParams {
    let f = GaussianFilter::new(1.0, beta).unwrap();
    ProtocolParams::new(j, t, 1.0, f, JumpSet::x_plus_z(n, false).unwrap())
}

/// Ordinary least squares slope of `ln y` on `ln x`.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

/// Top-level gap `E₁ − E₂` from a fresh eigenvalue solve.
fn top_gap(n: usize) -> f64 {
    let h = build_mixed_field_ising(n, G, H, false).unwrap();
    let mut e = linalg::eigvalsh(h.matrix()).unwrap().to_vec();
    e.sort_by(f64::total_cmp);
    e[e.len() - 1] - e[e.len() - 2]
}

fn within_factor(value: f64, target: f64, factor: f64) -> bool {
    value >= target / factor && value <= target * factor
}

fn kms() -> (bool, String) {
    let sys = model(2);
    let mut worst: f64 = 0.0;
    for beta in [0.5, 1.0, 2.0] {
        let p = protocol(2, 0.1, 10.0, beta);
        let gen = SamplerParts::build(&sys, &p.jumps, &p.filter).unwrap().generator(GeneratorKind::DetailedBalance).unwrap();
        let rho = gibbs_state(&sys, beta).unwrap();
        let stationarity = linalg::trace_norm(&gen.apply(rho.matrix())).unwrap();
        let residual = kms_residual(&gen, &rho).unwrap();
        worst = worst.max(stationarity).max(residual);
    }
    (worst <= 1e-8, format!("worst of |L[rho_beta]|_1 and KMS residual = {worst:.2e} (tol 1e-8)"))
}

fn channel_validity() -> (bool, String) {
    let sys = model(2);
    // (J, T, beta, x, omega)
    let points = [
        (0.1, 10.0, 1.0, 0.0, 1.5),
        (0.25, 10.0, 1.0, -0.7, 0.3),
        (0.05, 8.0, 0.5, 1.2, 2.9),
        (0.3, 12.0, 2.0, -2.0, 0.0),
        (0.01, 2.0 * PI * 4.0 / top_gap(2), 1.0, 0.4, 3.0),
    ];
    let mut worst_tp: f64 = 0.0;
    let mut worst_choi: f64 = 0.0;
    for (j, t, beta, x, w) in points {
        let p = protocol(2, j, t, beta);
        let gen = SamplerParts::build(&sys, &p.jumps, &p.filter).unwrap().generator(GeneratorKind::LambShift).unwrap();
        let channels: Vec<Superoperator> = vec![
            channel_single(&sys, &p, x).unwrap().to_superoperator(),
            channel_averaged(&sys, &p).unwrap().to_superoperator(),
            channel_single(&sys, &p, 0.0).unwrap().to_superoperator(),
            channel_kls(&sys, &p, &gen).unwrap().to_superoperator(),
            channel_randomized_bath(&sys, &p, w, x).unwrap().to_superoperator(),
        ];
        for s in &channels {
            worst_tp = worst_tp.max(s.trace_preservation_residual());
            worst_choi = worst_choi.max(-s.choi_min_eigenvalue().unwrap());
        }
    }
    (
        worst_tp <= 1e-8 && worst_choi <= 1e-8,
        format!("max TP residual {worst_tp:.2e}, most negative Choi eigenvalue {:.2e} (tol 1e-8)", -worst_choi),
    )
}

fn gap_scaling() -> (bool, String) {
    let sys = model(2);
    let grid = [0.02, 0.04, 0.08, 0.16];
    let base = protocol(2, 0.1, 10.0, 1.0);
    let parts = SamplerParts::build(&sys, &base.jumps, &base.filter).unwrap();
    let pts: Vec<_> = grid.iter().map(|&j| gap_point(&sys, &base.with_j(j), &parts, 0.01).unwrap()).collect();
    let families = [
        ("K", pts.iter().map(|p| p.gap_k).collect::<Vec<_>>()),
        ("K0", pts.iter().map(|p| p.gap_k0).collect()),
        ("expLLS", pts.iter().map(|p| p.gap_exp_lls).collect()),
        ("expLDB", pts.iter().map(|p| p.gap_exp_ldb).collect()),
    ];
    let mut ok = true;
    let mut parts_txt = Vec::new();
    for (name, y) in &families {
        let s = slope(&grid, y);
        ok &= (s - 2.0).abs() <= 0.1;
        parts_txt.push(format!("{name} {s:.3}"));
    }
    (ok, format!("slopes {} (want 2 +/- 0.1)", parts_txt.join(", ")))
}

fn fixed_point_scaling() -> (bool, String) {
    let sys = model(2);
    let grid = [0.02, 0.04, 0.08, 0.16];
    let base = protocol(2, 0.1, 10.0, 1.0);
    let rho_b = gibbs_state(&sys, 1.0).unwrap();
    let err: Vec<f64> = grid
        .iter()
        .map(|&j| {
            let k = channel_averaged(&sys, &base.with_j(j)).unwrap().to_superoperator();
            trace_distance(fixed_point(&k).unwrap().matrix(), rho_b.matrix()).unwrap()
        })
        .collect();
    let s = slope(&grid, &err);
    ((s - 2.0).abs() <= 0.15, format!("slope {s:.3} (want 2 +/- 0.15)"))
}

fn approximate_fixed_point_residual() -> (bool, String) {
    let sys = model(2);
    let grid = [0.05, 0.1, 0.2, 0.3];
    let base = protocol(2, 0.1, 10.0, 1.0);
    let parts = SamplerParts::build(&sys, &base.jumps, &base.filter).unwrap();
    let r: Vec<f64> = grid.iter().map(|&j| fixpoint_point(&sys, &base.with_j(j), &parts).unwrap().residual_rho_tilde).collect();
    let s = slope(&grid, &r);
    ((s - 4.0).abs() <= 0.3, format!("slope {s:.3} (want 4 +/- 0.3)"))
}

fn resonance_peaks() -> (bool, String) {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::ResonanceSweepT);
    cfg.j = 0.01;
    let out = experiments::compute(&cfg).unwrap();
    let table = &out.tables[0];
    let t = table.column("T").unwrap();
    let k0 = table.column("abs_rho12_K0").unwrap();
    let k = table.column("abs_rho12_K").unwrap();
    let w12 = top_gap(2);
    let mut ok = true;
    let mut found = Vec::new();
    let mut kk = (6.0 * w12 / (2.0 * PI)).ceil();
    while 2.0 * PI * kk / w12 <= 14.0 {
        let tk = 2.0 * PI * kk / w12;
        let peak = (1..t.len() - 1)
            .filter(|&i| k0[i] > k0[i - 1] && k0[i] > k0[i + 1] && (t[i] - tk).abs() <= 0.01 * tk)
            .max_by(|&a, &b| k0[a].total_cmp(&k0[b]));
        match peak {
            Some(i) => {
                let ratio = k0[i] / k[i];
                ok &= ratio >= 10.0;
                found.push(format!("k={kk}: T={:.4} ratio {ratio:.1e}", t[i]));
            }
            None => {
                ok = false;
                found.push(format!("k={kk}: no local maximum near T={tk:.4}"));
            }
        }
        kk += 1.0;
    }
    (ok && !found.is_empty(), found.join("; "))
}

fn resonance_prediction() -> (bool, String) {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::ResonanceSweepBeta);
    cfg.j = 0.01;
    let mut worst_rel: f64 = 0.0;
    let mut worst_k: f64 = 0.0;
    for i in 0..10 {
        let beta = 0.2 + 0.2 * i as f64;
        let p = resonance_beta_point(&cfg, beta).unwrap();
        for e in 0..3 {
            worst_rel = worst_rel.max((p.predicted[e] - p.k0[e]).abs() / p.k0[e].abs());
        }
        worst_k = worst_k.max(p.tracedist_k);
    }
    let tol_k = 10.0 * cfg.j * cfg.j;
    (
        worst_rel <= 0.05 && worst_k <= tol_k,
        format!("max relative deviation {worst_rel:.2e} (tol 5e-2); max |rho_fix(K)-rho_beta|_1 {worst_k:.2e} (tol {tol_k:.0e})"),
    )
}

fn resonance_plateau() -> (bool, String) {
    let sys = model(2);
    let t_res = 2.0 * PI * 4.0 / top_gap(2);
    let base = protocol(2, 0.01, t_res, 1.0);
    let parts = SamplerParts::build(&sys, &base.jumps, &base.filter).unwrap();
    let gen = parts.generator(GeneratorKind::LambShift).unwrap();
    let pred = thermalsim::analysis::resonance_solve(&sys, &gen, t_res, 1e-6).unwrap();
    let a = resonance_error_point(&sys, &base.with_j(0.01), &pred.rho0).unwrap();
    let b = resonance_error_point(&sys, &base.with_j(0.04), &pred.rho0).unwrap();
    let contrast = a.tracedist_k0 / a.tracedist_k;
    let plateau = (b.tracedist_k0 - a.tracedist_k0).abs() / b.tracedist_k0;
    let drop = b.tracedist_k / a.tracedist_k;
    let ok = contrast > 10.0 && plateau < 0.25 && (drop / 16.0 - 1.0).abs() <= 0.3;
    (ok, format!("K0/K at J=0.01 {contrast:.1e} (>10); K0 change {plateau:.3} (<0.25); K drop {drop:.2} (16 +/- 30%)"))
}

struct TrajectoryRun {
    j: f64,
    time_only: TrajectoryEnsemble,
    bath: Option<TrajectoryEnsemble>,
    averaged: Vec<Vec<f64>>,
    variance_ok: bool,
    variance_txt: String,
}

fn run_trajectories(n: usize, j: f64, ladder: Ladder, with_bath: bool) -> TrajectoryRun {
    let sys = model(n);
    let mut p = protocol(n, j, 10.0, 1.0);
    p.ladder = ladder;
    let obs = default_observables(&sys).unwrap();
    let rho0 = DensityMatrix::maximally_mixed(sys.dim());
    let k = channel_averaged(&sys, &p).unwrap().to_superoperator();
    let cfg = ExperimentConfig::defaults(ExperimentKind::Trajectories);
    let m = trajectory_steps(&cfg, &k).unwrap();
    let time_only = ensemble_stats(&sys, &p, TRAJECTORIES, m, &rho0, &obs, SEED).unwrap();
    let bath = with_bath.then(|| randomized_bath_ensemble(&sys, &p, TRAJECTORIES, m, &rho0, &obs, SEED).unwrap());
    let averaged = averaged_series(&k, &rho0, &obs, m);
    let fix = fixed_point(&k).unwrap();
    let mut variance_ok = true;
    let mut txt = Vec::new();
    for (i, o) in obs.iter().enumerate() {
        let fit = fit_contraction(&k, o.op.matrix(), &fix, 20, 200).unwrap();
        let bound = variance_bound(&sys, &p, o.op.matrix(), m, fit.c, fit.tau).unwrap();
        let v = time_only.variance_decomposition(i, m - 1);
        variance_ok &= v.total <= bound;
        txt.push(format!("{} Var {:.2e} <= {:.2e}", o.name, v.total, bound));
    }
    TrajectoryRun { j, time_only, bath, averaged, variance_ok, variance_txt: txt.join(", ") }
}

fn trajectory_variance(runs: &[TrajectoryRun], large: Option<&[(f64, f64, f64)]>) -> (bool, String) {
    let targets = [(0.1, 0.008, 0.019), (0.25, 0.034, 0.051)];
    let mut ok = true;
    let mut txt = Vec::new();
    for (r, (j, th, tzz)) in runs.iter().zip(targets) {
        assert_eq!(r.j, j);
        let (sh, szz) = (r.time_only.final_std(0), r.time_only.final_std(1));
        let good_h = within_factor(sh, th, 2.0);
        let good_zz = within_factor(szz, tzz, 2.0);
        ok &= good_h && good_zz && r.variance_ok;
        txt.push(format!(
            "J={j} M={}: sigma_H {sh:.4} vs {th} [{}], sigma_ZZ {szz:.4} vs {tzz} [{}], {}",
            r.time_only.steps(),
            if good_h { "ok" } else { "off" },
            if good_zz { "ok" } else { "off" },
            r.variance_txt
        ));
    }
    match large {
        Some(rows) => {
            for &(j, s6, s2) in rows {
                ok &= s6 < s2;
                txt.push(format!("n=6 J={j}: sigma_ZZ {s6:.4} < n=2 {s2:.4}"));
            }
        }
        None => txt.push("n=6 comparison not run (THERMALSIM_LARGE unset)".into()),
    }
    (ok, txt.join("; "))
}

fn bath_comparison(runs: &[TrajectoryRun]) -> (bool, String) {
    let targets = [(0.1, 0.040), (0.25, 0.106)];
    let mut ok = true;
    let mut txt = Vec::new();
    for (r, (j, target)) in runs.iter().zip(targets) {
        let bath = r.bath.as_ref().expect("bath ensemble");
        let (sb, st) = (bath.final_std(0), r.time_only.final_std(0));
        let good = within_factor(sb, target, 2.0) && sb > st;
        ok &= good;
        txt.push(format!("J={j}: sigma_H {sb:.4} vs {target} (time-only {st:.4}) [{}]", if good { "ok" } else { "off" }));
    }
    (ok, txt.join("; "))
}

fn oracle_equivalences(runs: &[TrajectoryRun]) -> (bool, String) {
    let mut ok = true;
    let mut ls_worst: f64 = 0.0;
    let mut jump_worst: f64 = 0.0;
    for n in [1, 2] {
        let sys = model(n);
        let p = protocol(n, 0.1, 10.0, 1.0);
        let a = build_coherent_ls(&sys, &p.jumps, &p.filter, LambShiftMethod::FrequencyDomain).unwrap();
        let b = build_coherent_ls(&sys, &p.jumps, &p.filter, LambShiftMethod::TimeQuadrature).unwrap();
        ls_worst = ls_worst.max(linalg::max_abs((a - b).view()));
        let fast = build_jump_operators(&sys, &p.jumps, &p.filter).unwrap();
        for (op, l) in p.jumps.ops().iter().zip(&fast) {
            let slow: CMat = jump_operator_quadrature(&sys, op, &p.filter).unwrap();
            jump_worst = jump_worst.max(linalg::max_abs((l - &slow).view()));
        }
    }
    ok &= ls_worst <= 1e-6 && jump_worst <= 1e-8;
    let mut worst_ratio: f64 = 0.0;
    for r in runs {
        let e = &r.time_only;
        for (i, s) in e.summary.iter().enumerate() {
            for m in [10usize, 100, 1000] {
                let ratio = (s.mean[m - 1] - r.averaged[i][m - 1]).abs() / s.stderr[m - 1];
                worst_ratio = worst_ratio.max(ratio);
            }
        }
    }
    ok &= worst_ratio <= 4.0;
    (
        ok,
        format!(
            "G_LS {ls_worst:.2e} (tol 1e-6), jumps {jump_worst:.2e} (tol 1e-8), self-averaging worst {worst_ratio:.2} stderr (tol 4)"
        ),
    )
}

fn timed(name: &'static str, budget: f64, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let clock = Instant::now();
    let (passed, detail) = f();
    Outcome { name, passed, detail, seconds: clock.elapsed().as_secs_f64(), budget }
}

fn report(o: &Outcome) {
    let tag = if o.passed { "PASS" } else { "FAIL" };
    let slow = if o.seconds > o.budget { " [over time budget]" } else { "" };
    println!("{tag} {}: {} ({:.1} s, budget {:.0} s){slow}", o.name, o.detail, o.seconds, o.budget);
}

fn main() -> ExitCode {
    let large = std::env::var("THERMALSIM_LARGE").map(|v| v == "1").unwrap_or(false);
    let mut outcomes = Vec::new();
    let mut run = |o: Outcome| {
        report(&o);
        outcomes.push(o);
    };
    run(timed("kms fixed point", 5.0, kms));
    run(timed("channel validity", 60.0, channel_validity));
    run(timed("gap scaling", 300.0, gap_scaling));
    run(timed("fixed-point error scaling", 300.0, fixed_point_scaling));
    run(timed("approximate fixed-point residual", 120.0, approximate_fixed_point_residual));
    run(timed("resonance peaks", 600.0, resonance_peaks));
    run(timed("degenerate perturbation prediction", 60.0, resonance_prediction));
    run(timed("non-perturbative resonance error", 60.0, resonance_plateau));

    let clock = Instant::now();
    let runs: Vec<TrajectoryRun> = [0.1, 0.25].iter().map(|&j| run_trajectories(2, j, Ladder::Half, true)).collect();
    let traj_seconds = clock.elapsed().as_secs_f64();
    let large_rows = large.then(|| {
        [0.1, 0.25]
            .iter()
            .zip(&runs)
            .map(|(&j, r2)| {
                let r6 = run_trajectories(6, j, Ladder::Half, false);
                (j, r6.time_only.final_std(1), r2.time_only.final_std(1))
            })
            .collect::<Vec<_>>()
    });
    let mut o = timed("trajectory variance", 900.0, || trajectory_variance(&runs, large_rows.as_deref()));
    o.seconds += traj_seconds;
    run(o);
    run(timed("randomized bath comparison", 900.0, || bath_comparison(&runs)));
    run(timed("oracle equivalences", 60.0, || oracle_equivalences(&runs)));

    let unit: Vec<String> = [0.1, 0.25]
        .iter()
        .map(|&j| {
            let r = run_trajectories(2, j, Ladder::Unit, true);
            format!(
                "J={j}: sigma_H {:.4}, sigma_ZZ {:.4}, randomized-bath sigma_H {:.4}",
                r.time_only.final_std(0),
                r.time_only.final_std(1),
                r.bath.as_ref().map_or(f64::NAN, |b| b.final_std(0))
            )
        })
        .collect();
    println!("INFO unit ladder (coupling doubled): {}", unit.join("; "));

    let failed: BTreeSet<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
    let known: BTreeSet<&str> = KNOWN_FAILURES.into_iter().collect();
    println!(
        "{} of {} criteria passed; known failures: {}",
        outcomes.len() - failed.len(),
        outcomes.len(),
        KNOWN_FAILURES.join(", ")
    );
    if failed == known {
        ExitCode::SUCCESS
    } else {
        for f in failed.difference(&known) {
            println!("unexpected failure: {f}");
        }
        for f in known.difference(&failed) {
            println!("unexpected pass (update KNOWN_FAILURES): {f}");
        }
        ExitCode::FAILURE
    }
}
