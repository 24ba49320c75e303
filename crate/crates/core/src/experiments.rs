// Copyright 2026 Thermalsim Contributors
// SPDX-License-Identifier: Apache-2.0

//! Named experiments: each computes one family of curves and writes CSV tables plus a
//! `manifest.json` run record into the output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    approximate_fixed_point, fixed_point, resonance_solve, spectral_gap, trace_distance,
};
use crate::collision::{
    channel_averaged, channel_kls, channel_randomized_bath, channel_single, ProtocolParams,
};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::operators::{gibbs_state, pauli_on, DensityMatrix, HermitianOperator, Pauli, SpectralSystem};
use crate::quad;
use crate::sampler::{
    build_coherent_ls, build_jump_operators, jump_operator_quadrature, kms_residual, GeneratorKind,
    LambShiftMethod, SamplerParts, Superoperator,
};
use crate::trajectories::{
    ensemble_stats, fit_contraction, randomized_bath_ensemble, variance_bound, Observable,
    TrajectoryEnsemble,
};

/// Trace-preservation and Choi positivity tolerance for channel checks.
pub const CPTP_TOLERANCE: f64 = 1e-8;

/// Resonance detection threshold `|e^{iωT} − 1|` for the degenerate solver.
pub const RESONANCE_DELTA: f64 = 1e-6;

/// In-memory CSV table; values are written with 17 significant digits.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => format_float(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

/// `%.16e`: 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match &r[k] {
                    Cell::Num(x) => *x,
                    Cell::Int(i) => *i as f64,
                    _ => f64::NAN,
                })
                .collect(),
        )
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(&self.name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(path)
    }
}

/// A pass/fail diagnostic computed alongside an experiment.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, passed: value <= tolerance }
    }
}

/// Everything an experiment produced, before it is written.
#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize)]
struct FileRecord {
    name: String,
    rows: usize,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    version: &'static str,
    experiment: ExperimentKind,
    started_unix_seconds: u64,
    wall_time_seconds: f64,
    config: &'a ExperimentConfig,
    files: Vec<FileRecord>,
    checks: &'a [Check],
    notes: &'a [String],
}

/// Version string embedded at build time (`git describe` when available).
pub const VERSION: &str = match option_env!("THERMALSIM_GIT_DESCRIBE") {
    Some(v) => v,
    None => env!("CARGO_PKG_VERSION"),
};

/// Names of the CSV files an experiment will write.
pub fn planned_files(cfg: &ExperimentConfig) -> Vec<String> {
    let mut out: Vec<String> = match cfg.experiment {
        ExperimentKind::GapSweepJ => vec!["gap_vs_J.csv".into()],
        ExperimentKind::FixpointSweepJ => vec!["fixpoint_vs_J.csv".into(), "approx_fixpoint_vs_J.csv".into()],
        ExperimentKind::ResonanceSweepT => vec!["offdiag_vs_T.csv".into()],
        ExperimentKind::ResonanceSweepBeta => vec!["resonance_vs_beta.csv".into()],
        ExperimentKind::ResonanceTraceDist => vec!["resonance_trace_dist.csv".into()],
        ExperimentKind::Trajectories => vec![
            "trajectories.csv".into(),
            "trajectory_summary.csv".into(),
            "variance.csv".into(),
        ],
        ExperimentKind::RandomizedBath => vec![
            "trajectories_randomized_bath.csv".into(),
            "trajectory_summary_randomized_bath.csv".into(),
            "bath_comparison.csv".into(),
        ],
        ExperimentKind::Validate => vec!["validate.csv".into()],
    };
    out.push("manifest.json".into());
    out
}

/// Run `cfg`, writing into `cfg.output_dir`. Existing outputs are an error unless `force`.
/// A failed check in `validate` is reported as [`Error::Invariant`] after the files are written.
pub fn run_experiment(cfg: &ExperimentConfig, force: bool) -> Result<ExperimentOutput> {
    let dir = &cfg.output_dir;
    if !force {
        for f in planned_files(cfg) {
            if dir.join(&f).exists() {
                return Err(Error::Config(format!(
                    "{} already exists (use --force to overwrite)",
                    dir.join(&f).display()
                )));
            }
        }
    }
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let out = compute(cfg)?;
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for t in &out.tables {
        t.write(dir)?;
        files.push(FileRecord { name: t.name.clone(), rows: t.rows.len() });
    }
    let manifest = Manifest {
        version: VERSION,
        experiment: cfg.experiment,
        started_unix_seconds: started,
        wall_time_seconds: clock.elapsed().as_secs_f64(),
        config: cfg,
        files,
        checks: &out.checks,
        notes: &out.notes,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    if cfg.experiment == ExperimentKind::Validate {
        let failed: Vec<&str> = out.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        if !failed.is_empty() {
            return Err(Error::Invariant(format!("validation failed: {}", failed.join(", "))));
        }
    }
    Ok(out)
}

/// Compute an experiment's tables without touching the filesystem.
pub fn compute(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let sys = cfg.system()?;
    let base = cfg.protocol(&sys)?;
    let mut out = ExperimentOutput { notes: base.warnings(), ..Default::default() };
    match cfg.experiment {
        ExperimentKind::GapSweepJ => gap_sweep(cfg, &sys, &base, &mut out)?,
        ExperimentKind::FixpointSweepJ => fixpoint_sweep(cfg, &sys, &base, &mut out)?,
        ExperimentKind::ResonanceSweepT => resonance_sweep_t(cfg, &sys, &base, &mut out)?,
        ExperimentKind::ResonanceSweepBeta => resonance_sweep_beta(cfg, &mut out)?,
        ExperimentKind::ResonanceTraceDist => resonance_trace_dist(cfg, &sys, &base, &mut out)?,
        ExperimentKind::Trajectories => trajectories(cfg, &sys, &base, &mut out, false)?,
        ExperimentKind::RandomizedBath => trajectories(cfg, &sys, &base, &mut out, true)?,
        ExperimentKind::Validate => validate(cfg, &sys, &base, &mut out)?,
    }
    Ok(out)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).map(|(a, b)| (a.ln(), b.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Spectral gaps of `𝒦`, `𝒦_0`, `e^{J²ℒ_LS}` and `e^{J²ℒ_DB}` at one coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapPoint {
    pub j: f64,
    pub gap_k: f64,
    pub gap_k0: f64,
    pub gap_exp_lls: f64,
    pub gap_exp_ldb: f64,
}

pub fn gap_point(sys: &SpectralSystem, params: &ProtocolParams, parts: &SamplerParts, epsilon: f64) -> Result<GapPoint> {
    let gap = |s: &Superoperator| -> Result<f64> { Ok(spectral_gap(s, &fixed_point(s)?, epsilon)?.lambda_gap) };
    let je2 = params.effective_coupling().powi(2);
    let k = channel_averaged(sys, params)?.to_superoperator();
    let k0 = channel_single(sys, params, 0.0)?.to_superoperator();
    let lls = parts.generator(GeneratorKind::LambShift)?.to_superoperator().exp(je2)?;
    let ldb = parts.generator(GeneratorKind::DetailedBalance)?.to_superoperator().exp(je2)?;
    Ok(GapPoint { j: params.j, gap_k: gap(&k)?, gap_k0: gap(&k0)?, gap_exp_lls: gap(&lls)?, gap_exp_ldb: gap(&ldb)? })
}

fn gap_sweep(cfg: &ExperimentConfig, sys: &SpectralSystem, base: &ProtocolParams, out: &mut ExperimentOutput) -> Result<()> {
    let parts = SamplerParts::build(sys, &base.jumps, &base.filter)?;
    let grid = cfg.sweep.grid()?;
    let points = grid
        .par_iter()
        .map(|&j| gap_point(sys, &base.with_j(j), &parts, cfg.epsilon))
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new("gap_vs_J.csv", &["J", "gap_K", "gap_K0", "gap_expLLS", "gap_expLDB"]);
    for p in &points {
        t.push(vec![p.j.into(), p.gap_k.into(), p.gap_k0.into(), p.gap_exp_lls.into(), p.gap_exp_ldb.into()]);
    }
    if grid.len() >= 2 {
        for col in ["gap_K", "gap_K0", "gap_expLLS", "gap_expLDB"] {
            let s = loglog_slope(&grid, &t.column(col).unwrap_or_default());
            out.notes.push(format!("log-log slope of {col} vs J: {s:.4}"));
        }
    }
    out.tables.push(t);
    Ok(())
}

/// Fixed-point errors of `𝒦` and `𝒦_0`, and the residual of `ρ̃ = ρ_β + J²σ` under `𝒦_LS`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixpointPoint {
    pub j: f64,
    pub tracedist_k: f64,
    pub tracedist_k0: f64,
    pub residual_rho_tilde: f64,
    pub residual_rho_beta: f64,
}

pub fn fixpoint_point(sys: &SpectralSystem, params: &ProtocolParams, parts: &SamplerParts) -> Result<FixpointPoint> {
    let rho_b = gibbs_state(sys, params.filter.beta)?;
    let k = channel_averaged(sys, params)?.to_superoperator();
    let k0 = channel_single(sys, params, 0.0)?.to_superoperator();
    let gen = parts.generator(GeneratorKind::LambShift)?;
    let kls = channel_kls(sys, params, &gen)?;
    let sigma = approximate_fixed_point(sys, parts, params, RESONANCE_DELTA)?;
    let residual = |r: &CMat| linalg::trace_norm(&(kls.apply(r) - r));
    Ok(FixpointPoint {
        j: params.j,
        tracedist_k: trace_distance(fixed_point(&k)?.matrix(), rho_b.matrix())?,
        tracedist_k0: trace_distance(fixed_point(&k0)?.matrix(), rho_b.matrix())?,
        residual_rho_tilde: residual(&sigma.rho_tilde)?,
        residual_rho_beta: residual(rho_b.matrix())?,
    })
}

fn fixpoint_sweep(cfg: &ExperimentConfig, sys: &SpectralSystem, base: &ProtocolParams, out: &mut ExperimentOutput) -> Result<()> {
    let parts = SamplerParts::build(sys, &base.jumps, &base.filter)?;
    let grid = cfg.sweep.grid()?;
    let points = grid
        .par_iter()
        .map(|&j| fixpoint_point(sys, &base.with_j(j), &parts))
        .collect::<Result<Vec<_>>>()?;
    let mut a = Table::new("fixpoint_vs_J.csv", &["J", "tracedist_K", "tracedist_K0"]);
    let mut b = Table::new("approx_fixpoint_vs_J.csv", &["J", "residual_rho_tilde", "residual_rho_beta"]);
    for p in &points {
        a.push(vec![p.j.into(), p.tracedist_k.into(), p.tracedist_k0.into()]);
        b.push(vec![p.j.into(), p.residual_rho_tilde.into(), p.residual_rho_beta.into()]);
    }
    if grid.len() >= 2 {
        let s = loglog_slope(&grid, &a.column("tracedist_K").unwrap_or_default());
        out.notes.push(format!("log-log slope of tracedist_K vs J: {s:.4}"));
        let s = loglog_slope(&grid, &b.column("residual_rho_tilde").unwrap_or_default());
        out.notes.push(format!("log-log slope of residual_rho_tilde vs J: {s:.4}"));
    }
    out.tables.extend([a, b]);
    Ok(())
}

/// Index of energy level `level` (1 = highest) in the ascending eigenbasis.
pub fn level_index(sys: &SpectralSystem, level: usize) -> usize {
    sys.dim() - level
}

/// `|⟨E_a|ρ|E_b⟩|` for levels counted downward from the top.
pub fn level_element(sys: &SpectralSystem, rho: &CMat, a: usize, b: usize) -> f64 {
    let e = sys.to_eigenbasis(rho);
    e[[level_index(sys, a), level_index(sys, b)]].norm()
}

/// Cycle lengths `2πk/|ω|` in `[lo, hi]` for every distinct nonzero Bohr frequency.
pub fn resonance_times(sys: &SpectralSystem, lo: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for c in sys.bohr_frequencies() {
        if c.nu <= 1e-9 {
            continue;
        }
        let period = 2.0 * std::f64::consts::PI / c.nu;
        let mut k = (lo / period).ceil().max(1.0);
        while k * period <= hi {
            out.push(k * period);
            k += 1.0;
        }
    }
    out
}

/// `|ρ₁₂|` of the `𝒦_0` and `𝒦` fixed points at cycle length `t`.
pub fn offdiag_point(sys: &SpectralSystem, params: &ProtocolParams) -> Result<(f64, f64)> {
    let k0 = fixed_point(&channel_single(sys, params, 0.0)?.to_superoperator())?;
    let k = fixed_point(&channel_averaged(sys, params)?.to_superoperator())?;
    Ok((level_element(sys, k0.matrix(), 1, 2), level_element(sys, k.matrix(), 1, 2)))
}

fn resonance_sweep_t(cfg: &ExperimentConfig, sys: &SpectralSystem, base: &ProtocolParams, out: &mut ExperimentOutput) -> Result<()> {
    let mut grid = cfg.sweep.grid()?;
    let lo = grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let extra = resonance_times(sys, lo, hi);
    out.notes.push(format!("{} exact resonance times added to the T grid", extra.len()));
    grid.extend(extra);
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let rows = grid
        .par_iter()
        .map(|&t| offdiag_point(sys, &base.with_t(t)).map(|(a, b)| (t, a, b)))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new("offdiag_vs_T.csv", &["T", "abs_rho12_K0", "abs_rho12_K"]);
    for (t, a, b) in rows {
        table.push(vec![t.into(), a.into(), b.into()]);
    }
    out.tables.push(table);
    Ok(())
}

/// Tracked elements at one inverse temperature on resonance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResonanceBetaPoint {
    pub beta: f64,
    pub k0: [f64; 3],
    pub predicted: [f64; 3],
    pub k: [f64; 3],
    pub gibbs: [f64; 3],
    pub tracedist_k: f64,
}

fn tracked(sys: &SpectralSystem, rho: &CMat) -> [f64; 3] {
    [level_element(sys, rho, 1, 1), level_element(sys, rho, 1, 2), level_element(sys, rho, 3, 3)]
}

pub fn resonance_beta_point(cfg: &ExperimentConfig, beta: f64) -> Result<ResonanceBetaPoint> {
    let mut c = cfg.clone();
    c.beta = beta;
    let sys = c.system()?;
    let p = c.protocol(&sys)?;
    let parts = SamplerParts::build(&sys, &p.jumps, &p.filter)?;
    let gen = parts.generator(GeneratorKind::LambShift)?;
    let sol = resonance_solve(&sys, &gen, p.t, RESONANCE_DELTA)?;
    let rho_b = gibbs_state(&sys, beta)?;
    let k0 = fixed_point(&channel_single(&sys, &p, 0.0)?.to_superoperator())?;
    let k = fixed_point(&channel_averaged(&sys, &p)?.to_superoperator())?;
    Ok(ResonanceBetaPoint {
        beta,
        k0: tracked(&sys, k0.matrix()),
        predicted: tracked(&sys, sol.rho0.matrix()),
        k: tracked(&sys, k.matrix()),
        gibbs: tracked(&sys, rho_b.matrix()),
        tracedist_k: trace_distance(k.matrix(), rho_b.matrix())?,
    })
}

fn resonance_sweep_beta(cfg: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let grid = cfg.sweep.grid()?;
    let points = grid.par_iter().map(|&b| resonance_beta_point(cfg, b)).collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(
        "resonance_vs_beta.csv",
        &[
            "beta", "abs_rho11_K0", "abs_rho12_K0", "abs_rho33_K0", "abs_rho11_pred", "abs_rho12_pred",
            "abs_rho33_pred", "abs_rho11_K", "abs_rho12_K", "abs_rho33_K", "abs_rho11_beta",
            "abs_rho12_beta", "abs_rho33_beta", "tracedist_K",
        ],
    );
    for p in &points {
        let mut row: Vec<Cell> = vec![p.beta.into()];
        for v in [p.k0, p.predicted, p.k, p.gibbs] {
            row.extend(v.iter().map(|&x| Cell::from(x)));
        }
        row.push(p.tracedist_k.into());
        t.push(row);
    }
    out.tables.push(t);
    Ok(())
}

/// Fixed-point errors on resonance: `𝒦_0`, `𝒦` and the degenerate prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResonanceErrorPoint {
    pub j: f64,
    pub tracedist_k0: f64,
    pub tracedist_k: f64,
    pub tracedist_pred: f64,
}

pub fn resonance_error_point(sys: &SpectralSystem, params: &ProtocolParams, predicted: &DensityMatrix) -> Result<ResonanceErrorPoint> {
    let rho_b = gibbs_state(sys, params.filter.beta)?;
    let k0 = fixed_point(&channel_single(sys, params, 0.0)?.to_superoperator())?;
    let k = fixed_point(&channel_averaged(sys, params)?.to_superoperator())?;
    Ok(ResonanceErrorPoint {
        j: params.j,
        tracedist_k0: trace_distance(k0.matrix(), rho_b.matrix())?,
        tracedist_k: trace_distance(k.matrix(), rho_b.matrix())?,
        tracedist_pred: trace_distance(predicted.matrix(), rho_b.matrix())?,
    })
}

fn resonance_trace_dist(cfg: &ExperimentConfig, sys: &SpectralSystem, base: &ProtocolParams, out: &mut ExperimentOutput) -> Result<()> {
    let parts = SamplerParts::build(sys, &base.jumps, &base.filter)?;
    let gen = parts.generator(GeneratorKind::LambShift)?;
    let sol = resonance_solve(sys, &gen, base.t, RESONANCE_DELTA)?;
    let grid = cfg.sweep.grid()?;
    let points = grid
        .par_iter()
        .map(|&j| resonance_error_point(sys, &base.with_j(j), &sol.rho0))
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new("resonance_trace_dist.csv", &["J", "tracedist_K0", "tracedist_K", "tracedist_pred"]);
    for p in &points {
        t.push(vec![p.j.into(), p.tracedist_k0.into(), p.tracedist_k.into(), p.tracedist_pred.into()]);
    }
    out.notes.push(format!("cycle length T = {:.17}", base.t));
    out.tables.push(t);
    Ok(())
}

/// Energy and the nearest-neighbour `Z₁Z₂` correlator of the first bond.
pub fn default_observables(sys: &SpectralSystem) -> Result<Vec<Observable>> {
    let n = sys.hamiltonian().n_qubits();
    let mut obs = vec![Observable::new("H", sys.hamiltonian().clone())];
    if n >= 2 {
        let zz = pauli_on(Pauli::Z, 0, n).dot(&pauli_on(Pauli::Z, 1, n));
        obs.push(Observable::new("Z1Z2", HermitianOperator::new(zz)?));
    }
    Ok(obs)
}

/// Steps per trajectory: the configured value, or `max(2000, ⌈8/λ_gap⌉)` of `𝒦`.
pub fn trajectory_steps(cfg: &ExperimentConfig, k: &Superoperator) -> Result<usize> {
    if cfg.steps > 0 {
        return Ok(cfg.steps);
    }
    let gap = spectral_gap(k, &fixed_point(k)?, cfg.epsilon)?.lambda_gap;
    Ok(((8.0 / gap).ceil() as usize).max(2000))
}

fn series_table(name: &str, per_j: &[(f64, TrajectoryEnsemble)]) -> Table {
    let names = &per_j[0].1.observable_names;
    let mut header = vec!["J", "trajectory", "step"];
    header.extend(names.iter().map(|s| s.as_str()));
    let mut t = Table::new(name, &header);
    for (j, e) in per_j {
        for (i, r) in e.records.iter().enumerate() {
            for m in 0..e.steps() {
                let mut row: Vec<Cell> = vec![(*j).into(), i.into(), (m + 1).into()];
                row.extend(r.values.iter().map(|v| Cell::from(v[m])));
                t.push(row);
            }
        }
    }
    t
}

fn trajectories(
    cfg: &ExperimentConfig,
    sys: &SpectralSystem,
    base: &ProtocolParams,
    out: &mut ExperimentOutput,
    bath: bool,
) -> Result<()> {
    let obs = default_observables(sys)?;
    let rho0 = DensityMatrix::maximally_mixed(sys.dim());
    let suffix = if bath { "_randomized_bath" } else { "" };
    let mut ensembles = Vec::new();
    let mut summary = Table::new(
        &format!("trajectory_summary{suffix}.csv"),
        &["J", "step", "observable", "mean", "std", "stderr", "averaged_channel"],
    );
    let mut variance = Table::new(
        "variance.csv",
        &[
            "J", "observable", "steps", "final_std", "shot_noise", "sequence_variance", "total_variance",
            "bound", "C", "tau_mix",
        ],
    );
    let mut comparison =
        Table::new("bath_comparison.csv", &["J", "observable", "steps", "std_time_only", "std_randomized_bath"]);
    for j in cfg.sweep.grid()? {
        let p = base.with_j(j);
        let k = channel_averaged(sys, &p)?.to_superoperator();
        let m = trajectory_steps(cfg, &k)?;
        let e = if bath {
            randomized_bath_ensemble(sys, &p, cfg.trajectories, m, &rho0, &obs, cfg.seed)?
        } else {
            ensemble_stats(sys, &p, cfg.trajectories, m, &rho0, &obs, cfg.seed)?
        };
        let averaged = averaged_series(&k, &rho0, &obs, m);
        for (k_o, name) in e.observable_names.iter().enumerate() {
            let s = &e.summary[k_o];
            let rows = s.mean.iter().zip(&s.std).zip(&s.stderr).zip(&averaged[k_o]);
            for (step, (((&mean, &std), &stderr), &avg)) in rows.enumerate() {
                summary.push(vec![
                    j.into(),
                    (step + 1).into(),
                    name.as_str().into(),
                    mean.into(),
                    std.into(),
                    stderr.into(),
                    avg.into(),
                ]);
            }
        }
        if bath {
            let time_only = ensemble_stats(sys, &p, cfg.trajectories, m, &rho0, &obs, cfg.seed)?;
            for (k_o, name) in e.observable_names.iter().enumerate() {
                comparison.push(vec![
                    j.into(),
                    name.as_str().into(),
                    m.into(),
                    time_only.final_std(k_o).into(),
                    e.final_std(k_o).into(),
                ]);
            }
        } else {
            let fix = fixed_point(&k)?;
            for (k_o, o) in obs.iter().enumerate() {
                let fit = fit_contraction(&k, o.op.matrix(), &fix, 20, 200)?;
                let bound = variance_bound(sys, &p, o.op.matrix(), m, fit.c, fit.tau)?;
                let v = e.variance_decomposition(k_o, m - 1);
                variance.push(vec![
                    j.into(),
                    o.name.as_str().into(),
                    m.into(),
                    e.final_std(k_o).into(),
                    v.shot_noise.into(),
                    v.sequence.into(),
                    v.total.into(),
                    bound.into(),
                    fit.c.into(),
                    fit.tau.into(),
                ]);
            }
        }
        for (k_o, name) in e.observable_names.iter().enumerate() {
            let (drift, se) = e.plateau(k_o);
            out.notes.push(format!(
                "J = {j}: {name} final std {:.4e}; mean drift over last 20% {drift:.3e} vs stderr {se:.3e}",
                e.final_std(k_o)
            ));
        }
        ensembles.push((j, e));
    }
    out.tables.push(series_table(&format!("trajectories{suffix}.csv"), &ensembles));
    out.tables.push(summary);
    out.tables.push(if bath { comparison } else { variance });
    Ok(())
}

/// `Tr[O 𝒦^m ρ₀]` for `m = 1..=steps`, indexed `[observable][step]`.
pub fn averaged_series(k: &Superoperator, rho0: &DensityMatrix, obs: &[Observable], steps: usize) -> Vec<Vec<f64>> {
    let mut rho = rho0.matrix().clone();
    let mut out = vec![Vec::with_capacity(steps); obs.len()];
    for _ in 0..steps {
        rho = k.apply(&rho);
        for (i, o) in obs.iter().enumerate() {
            out[i].push(linalg::trace(&o.op.matrix().dot(&rho)).re);
        }
    }
    out
}

fn validate(cfg: &ExperimentConfig, sys: &SpectralSystem, base: &ProtocolParams, out: &mut ExperimentOutput) -> Result<()> {
    let mut checks = Vec::new();
    for beta in [0.5, 1.0, 2.0] {
        let mut c = cfg.clone();
        c.beta = beta;
        let p = c.protocol(sys)?;
        let parts = SamplerParts::build(sys, &p.jumps, &p.filter)?;
        let gen = parts.generator(GeneratorKind::DetailedBalance)?;
        let rho = gibbs_state(sys, beta)?;
        checks.push(Check::at_most(
            format!("kms_fixed_point beta={beta}"),
            linalg::trace_norm(&gen.apply(rho.matrix()))?,
            1e-8,
        ));
        checks.push(Check::at_most(format!("kms_residual beta={beta}"), kms_residual(&gen, &rho)?, 1e-8));
    }
    let parts = SamplerParts::build(sys, &base.jumps, &base.filter)?;
    let cptp = |name: &str, s: &Superoperator, checks: &mut Vec<Check>| -> Result<()> {
        checks.push(Check::at_most(format!("{name} trace preservation"), s.trace_preservation_residual(), CPTP_TOLERANCE));
        checks.push(Check::at_most(format!("{name} choi negativity"), (-s.choi_min_eigenvalue()?).max(0.0), CPTP_TOLERANCE));
        Ok(())
    };
    cptp("K_x(x=0.4)", &channel_single(sys, base, 0.4)?.to_superoperator(), &mut checks)?;
    cptp("K", &channel_averaged(sys, base)?.to_superoperator(), &mut checks)?;
    cptp("K_0", &channel_single(sys, base, 0.0)?.to_superoperator(), &mut checks)?;
    let gen = parts.generator(GeneratorKind::LambShift)?;
    cptp("K_LS", &channel_kls(sys, base, &gen)?.to_superoperator(), &mut checks)?;
    let w = 0.5 * base.bath_omega_max;
    cptp("randomized bath", &channel_randomized_bath(sys, base, w, -0.3)?.to_superoperator(), &mut checks)?;

    let fast = build_jump_operators(sys, &base.jumps, &base.filter)?;
    let slow = base
        .jumps
        .ops()
        .iter()
        .map(|a| jump_operator_quadrature(sys, a, &base.filter))
        .collect::<Result<Vec<_>>>()?;
    let jump_err = fast.iter().zip(&slow).map(|(a, b)| linalg::max_abs((a - b).view())).fold(0.0, f64::max);
    checks.push(Check::at_most("jump operators bohr vs time quadrature", jump_err, 1e-8));
    if sys.dim() <= 4 {
        let a = build_coherent_ls(sys, &base.jumps, &base.filter, LambShiftMethod::FrequencyDomain)?;
        let b = build_coherent_ls(sys, &base.jumps, &base.filter, LambShiftMethod::TimeQuadrature)?;
        checks.push(Check::at_most("lamb shift frequency vs time quadrature", linalg::max_abs((a - b).view()), 1e-6));
    }
    let mut doubled = base.clone();
    doubled.quadrature_nodes = 2 * base.quadrature_nodes + 1;
    let k1 = channel_averaged(sys, base)?.to_superoperator();
    let k2 = channel_averaged(sys, &doubled)?.to_superoperator();
    checks.push(Check::at_most("gauss-hermite node doubling", k1.distance_frobenius(&k2), 1e-8));
    let rule = quad::gaussian_average_rule(base.quadrature_nodes, 1.0)?;
    let second: f64 = rule.iter().map(|(x, w)| w * x * x).sum();
    checks.push(Check::at_most("gauss-hermite second moment", (second - 0.5).abs(), 1e-12));

    let mut t = Table::new("validate.csv", &["check", "value", "tolerance", "passed"]);
    for c in &checks {
        t.push(vec![c.name.as_str().into(), c.value.into(), c.tolerance.into(), c.passed.into()]);
    }
    out.tables.push(t);
    out.checks = checks;
    Ok(())
}

/// Propagations needing more qubits than this are gated behind an explicit opt-in.
pub const LARGE_QUBITS: usize = 8;

/// Rough wall time of `cfg` in seconds, from one timed integrator step.
pub fn estimate_runtime(cfg: &ExperimentConfig) -> Result<f64> {
    let sys = cfg.system()?;
    let p = cfg.protocol(&sys)?;
    let sb = p.system_bath(&sys, crate::collision::BathModel::Trivial)?;
    let mut psi = sb.initial_columns(&[0]);
    let clock = Instant::now();
    sb.cf4_step(&mut psi, 0.0, sb.step())?;
    let per_step = clock.elapsed().as_secs_f64();
    let steps = crate::collision::Window::for_protocol(&sb, p.t).steps as f64;
    let points = cfg.sweep.grid()?.len() as f64;
    let passes = match cfg.experiment {
        ExperimentKind::Trajectories | ExperimentKind::RandomizedBath => 3.0,
        ExperimentKind::Validate => 8.0,
        _ => 2.0,
    };
    Ok(per_step * steps * points * passes / rayon::current_num_threads() as f64)
}
