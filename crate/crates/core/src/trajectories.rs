// Copyright 2026 Thermalsim Contributors
// SPDX-License-Identifier: Apache-2.0

//! Stochastic realizations of the protocol: seeded draw sequences, per-step observable
//! records, ensemble statistics and the variance bound.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::collision::{
    channel_randomized_bath, channel_single, BathModel, ChannelFactory, KrausChannel, ProtocolParams,
};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::operators::{DensityMatrix, HermitianOperator, SpectralSystem};
use crate::sampler::Superoperator;

/// Draws of `x` beyond this many `T0` are rejected and redrawn.
pub const X_CUTOFF: f64 = 6.0;

/// Bath frequencies are binned to this fraction of `ω_max` when channels are cached.
pub const OMEGA_BIN_FRACTION: f64 = 1e-3;

/// Snapshot storage allowed for the shared time-only factory.
const TIME_ONLY_BUDGET: usize = 64 << 20;

/// Snapshot storage allowed per cached bath-frequency factory.
const PER_OMEGA_BUDGET: usize = 64 << 10;

/// Which random parameters each cycle draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Only the evolution time is random.
    TimeOnly,
    /// Evolution time and bath splitting are both random.
    TimeAndBath,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Draw {
    pub x: f64,
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomSequence {
    pub seed: u64,
    pub draws: Vec<Draw>,
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trajectory `index`: `splitmix64(base + (index + 1) · 0x9e3779b97f4a7c15)`.
pub fn split_seed(base: u64, index: u64) -> u64 {
    splitmix64(base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// `M` i.i.d. draws: `x ~ N(0, T0²/2)` truncated at `±6 T0`, and for the bath variant
/// `ω ~ U[0, ω_max]`. ChaCha8 seeded with `seed`; each step draws `x` first, then `ω`.
pub fn sample_sequence(
    params: &ProtocolParams,
    m: usize,
    seed: u64,
    variant: Variant,
) -> Result<RandomSequence> {
    if m == 0 {
        return Err(Error::InvalidInput("a sequence needs at least one step".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = params.t0 / std::f64::consts::SQRT_2;
    let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let limit = X_CUTOFF * params.t0;
    let mut draws = Vec::with_capacity(m);
    for _ in 0..m {
        let x = if params.t0 == 0.0 {
            0.0
        } else {
            loop {
                let x: f64 = normal.sample(&mut rng);
                if x.abs() <= limit {
                    break x;
                }
            }
        };
        let omega = match variant {
            Variant::TimeOnly => None,
            Variant::TimeAndBath => Some(rng.gen::<f64>() * params.bath_omega_max),
        };
        draws.push(Draw { x, omega });
    }
    Ok(RandomSequence { seed, draws })
}

/// An observable with a display name.
#[derive(Debug, Clone)]
pub struct Observable {
    pub name: String,
    pub op: HermitianOperator,
}

impl Observable {
    pub fn new(name: impl Into<String>, op: HermitianOperator) -> Self {
        Self { name: name.into(), op }
    }
}

/// Values of `Tr[Oρ]` and `Tr[O²ρ]` after each step, indexed `[observable][step]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub values: Vec<Vec<f64>>,
    pub second_moments: Vec<Vec<f64>>,
}

/// Supplies `𝒦_x` (or `𝒦_{x,ω}`) for a fixed set of sequences.
///
/// Time-only draws share one factory. Bath draws are binned on `ω` and each bin gets its own
/// factory, built in parallel up front. With `exact_channels` every draw is propagated afresh.
pub struct ChannelSource<'a> {
    sys: &'a SpectralSystem,
    params: &'a ProtocolParams,
    time_only: Option<ChannelFactory>,
    by_omega: BTreeMap<u64, ChannelFactory>,
    omega_bin: f64,
}

impl<'a> ChannelSource<'a> {
    pub fn new(sys: &'a SpectralSystem, params: &'a ProtocolParams, sequences: &[RandomSequence]) -> Result<Self> {
        params.validate(sys)?;
        let omega_bin = OMEGA_BIN_FRACTION * params.bath_omega_max;
        let mut source = Self { sys, params, time_only: None, by_omega: BTreeMap::new(), omega_bin };
        if params.exact_channels {
            return Ok(source);
        }
        let (lo, hi) = x_range(sequences);
        let has_time_only = sequences.iter().any(|s| s.draws.iter().any(|d| d.omega.is_none()));
        if has_time_only {
            source.time_only =
                Some(ChannelFactory::new(sys, params, BathModel::Trivial, lo, hi, TIME_ONLY_BUDGET)?);
        }
        let mut bins: Vec<u64> = sequences
            .iter()
            .flat_map(|s| s.draws.iter().filter_map(|d| d.omega.map(|w| source.bin_of(w))))
            .collect();
        bins.sort_unstable();
        bins.dedup();
        let built: Vec<(u64, ChannelFactory)> = bins
            .par_iter()
            .map(|&b| {
                let omega = source.bin_center(b);
                let bath = BathModel::Randomized { omega };
                ChannelFactory::new(sys, params, bath, lo, hi, PER_OMEGA_BUDGET).map(|f| (b, f))
            })
            .collect::<Result<_>>()?;
        source.by_omega = built.into_iter().collect();
        Ok(source)
    }

    fn bin_of(&self, omega: f64) -> u64 {
        if self.omega_bin > 0.0 {
            (omega / self.omega_bin).floor() as u64
        } else {
            0
        }
    }

    fn bin_center(&self, bin: u64) -> f64 {
        ((bin as f64 + 0.5) * self.omega_bin).min(self.params.bath_omega_max)
    }

    /// Bath frequency actually used for a draw.
    pub fn effective_omega(&self, omega: f64) -> f64 {
        if self.params.exact_channels {
            omega
        } else {
            self.bin_center(self.bin_of(omega))
        }
    }

    pub fn channel(&self, draw: &Draw) -> Result<KrausChannel> {
        match (draw.omega, self.params.exact_channels) {
            (None, true) => channel_single(self.sys, self.params, draw.x),
            (Some(w), true) => channel_randomized_bath(self.sys, self.params, w, draw.x),
            (None, false) => match &self.time_only {
                Some(f) => f.channel(draw.x),
                None => channel_single(self.sys, self.params, draw.x),
            },
            (Some(w), false) => match self.by_omega.get(&self.bin_of(w)) {
                Some(f) => f.channel(draw.x),
                None => channel_randomized_bath(self.sys, self.params, self.effective_omega(w), draw.x),
            },
        }
    }

    /// Apply every draw of `seq` to `rho0`, recording the observables after each step.
    pub fn run(&self, seq: &RandomSequence, rho0: &DensityMatrix, observables: &[Observable]) -> Result<TrajectoryRecord> {
        let d = self.sys.dim();
        if rho0.dim() != d {
            return Err(Error::Dimension(format!("state of dimension {} on a {d}-level system", rho0.dim())));
        }
        for o in observables {
            if o.op.dim() != d {
                return Err(Error::Dimension(format!("observable {} has dimension {}", o.name, o.op.dim())));
            }
        }
        let squares: Vec<CMat> = observables.iter().map(|o| o.op.matrix().dot(o.op.matrix())).collect();
        let m = seq.draws.len();
        let mut values = vec![Vec::with_capacity(m); observables.len()];
        let mut second = vec![Vec::with_capacity(m); observables.len()];
        let mut rho = rho0.matrix().clone();
        for draw in &seq.draws {
            rho = self.channel(draw)?.apply(&rho);
            for (k, o) in observables.iter().enumerate() {
                values[k].push(expect(o.op.matrix(), &rho));
                second[k].push(expect(&squares[k], &rho));
            }
        }
        Ok(TrajectoryRecord { values, second_moments: second })
    }
}

fn expect(o: &CMat, rho: &CMat) -> f64 {
    linalg::trace(&o.dot(rho)).re
}

fn x_range(sequences: &[RandomSequence]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for d in sequences.iter().flat_map(|s| s.draws.iter()) {
        lo = lo.min(d.x);
        hi = hi.max(d.x);
    }
    if lo > hi {
        (0.0, 0.0)
    } else {
        (lo, hi)
    }
}

/// One trajectory: `ℰ_M = 𝒦_{x_M} ∘ ⋯ ∘ 𝒦_{x_1}` applied to `rho0`.
pub fn run_trajectory(
    sys: &SpectralSystem,
    params: &ProtocolParams,
    seq: &RandomSequence,
    rho0: &DensityMatrix,
    observables: &[Observable],
) -> Result<TrajectoryRecord> {
    ChannelSource::new(sys, params, std::slice::from_ref(seq))?.run(seq, rho0, observables)
}

/// Per-step ensemble mean, sample standard deviation and standard error of the mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesSummary {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Split of the observable variance at one step into sequence-averaged shot noise
/// `E[⟨O²⟩ − ⟨O⟩²]` and the sequence-to-sequence spread `E[⟨O⟩²] − E[⟨O⟩]²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceDecomposition {
    pub shot_noise: f64,
    pub sequence: f64,
    /// `E[⟨O²⟩] − E[⟨O⟩]²`, computed directly.
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryEnsemble {
    pub variant: Variant,
    pub observable_names: Vec<String>,
    pub sequences: Vec<RandomSequence>,
    /// `[trajectory]` records.
    pub records: Vec<TrajectoryRecord>,
    /// `[observable]` summaries.
    pub summary: Vec<SeriesSummary>,
}

impl TrajectoryEnsemble {
    fn from_records(
        variant: Variant,
        observables: &[Observable],
        sequences: Vec<RandomSequence>,
        records: Vec<TrajectoryRecord>,
    ) -> Self {
        let n = records.len() as f64;
        let summary = (0..observables.len())
            .map(|k| {
                let steps = records.first().map_or(0, |r| r.values[k].len());
                let mut s = SeriesSummary { mean: vec![], std: vec![], stderr: vec![] };
                for m in 0..steps {
                    let mean = records.iter().map(|r| r.values[k][m]).sum::<f64>() / n;
                    let var = records.iter().map(|r| (r.values[k][m] - mean).powi(2)).sum::<f64>() / (n - 1.0);
                    s.mean.push(mean);
                    s.std.push(var.sqrt());
                    s.stderr.push((var / n).sqrt());
                }
                s
            })
            .collect();
        Self {
            variant,
            observable_names: observables.iter().map(|o| o.name.clone()).collect(),
            sequences,
            records,
            summary,
        }
    }

    pub fn steps(&self) -> usize {
        self.summary.first().map_or(0, |s| s.mean.len())
    }

    /// Sample standard deviation of `⟨O⟩` across trajectories at the last step.
    pub fn final_std(&self, observable: usize) -> f64 {
        *self.summary[observable].std.last().unwrap_or(&f64::NAN)
    }

    /// Variance split at `step` (0-based), with population (`1/n`) averages so that
    /// `shot_noise + sequence = total` up to rounding.
    pub fn variance_decomposition(&self, observable: usize, step: usize) -> VarianceDecomposition {
        let n = self.records.len() as f64;
        let v = |r: &TrajectoryRecord| r.values[observable][step];
        let s = |r: &TrajectoryRecord| r.second_moments[observable][step];
        let mean = self.records.iter().map(v).sum::<f64>() / n;
        let mean_sq = self.records.iter().map(|r| v(r) * v(r)).sum::<f64>() / n;
        let second = self.records.iter().map(s).sum::<f64>() / n;
        let shot = self.records.iter().map(|r| s(r) - v(r) * v(r)).sum::<f64>() / n;
        VarianceDecomposition { shot_noise: shot, sequence: mean_sq - mean * mean, total: second - mean * mean }
    }

    /// Largest change of the mean over the last fifth of the run, next to the final stderr.
    pub fn plateau(&self, observable: usize) -> (f64, f64) {
        let s = &self.summary[observable];
        let m = s.mean.len();
        if m == 0 {
            return (f64::NAN, f64::NAN);
        }
        let tail = &s.mean[m - (m / 5).max(1)..];
        let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (hi - lo, s.stderr[m - 1])
    }
}

#[allow(clippy::too_many_arguments)]
fn run_ensemble(
    sys: &SpectralSystem,
    params: &ProtocolParams,
    n_traj: usize,
    m: usize,
    rho0: &DensityMatrix,
    observables: &[Observable],
    base_seed: u64,
    variant: Variant,
) -> Result<TrajectoryEnsemble> {
    if n_traj < 2 {
        return Err(Error::InvalidInput("an ensemble needs at least two trajectories".into()));
    }
    let sequences = (0..n_traj as u64)
        .map(|i| sample_sequence(params, m, split_seed(base_seed, i), variant))
        .collect::<Result<Vec<_>>>()?;
    let source = ChannelSource::new(sys, params, &sequences)?;
    let records = sequences
        .par_iter()
        .map(|s| source.run(s, rho0, observables))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryEnsemble::from_records(variant, observables, sequences, records))
}

/// `n_traj` time-only trajectories of `m` steps with seeds split from `base_seed`.
pub fn ensemble_stats(
    sys: &SpectralSystem,
    params: &ProtocolParams,
    n_traj: usize,
    m: usize,
    rho0: &DensityMatrix,
    observables: &[Observable],
    base_seed: u64,
) -> Result<TrajectoryEnsemble> {
    run_ensemble(sys, params, n_traj, m, rho0, observables, base_seed, Variant::TimeOnly)
}

/// As [`ensemble_stats`], with a random bath splitting drawn each cycle.
pub fn randomized_bath_ensemble(
    sys: &SpectralSystem,
    params: &ProtocolParams,
    n_traj: usize,
    m: usize,
    rho0: &DensityMatrix,
    observables: &[Observable],
    base_seed: u64,
) -> Result<TrajectoryEnsemble> {
    run_ensemble(sys, params, n_traj, m, rho0, observables, base_seed, Variant::TimeAndBath)
}

/// Exponential contraction of `𝒦†ⁿ[O − Tr(ρ_fix O) I]` in operator norm.
#[derive(Debug, Clone, Serialize)]
pub struct ContractionFit {
    pub c: f64,
    pub tau: f64,
    /// `‖𝒦†ⁿ[O − Tr(ρ_fix O) I]‖_∞ / ‖O‖_∞` for `n = 0..=n_max`.
    pub norms: Vec<f64>,
}

/// Fit `τ` by least squares on `ln g_n` over `n ∈ [n_min, n_max]`, then take the smallest
/// `C` with `g_n ≤ C e^{−n/τ}` on that range.
pub fn fit_contraction(
    channel: &Superoperator,
    o: &CMat,
    rho_fix: &DensityMatrix,
    n_min: usize,
    n_max: usize,
) -> Result<ContractionFit> {
    if n_min >= n_max {
        return Err(Error::InvalidInput("contraction fit needs n_min < n_max".into()));
    }
    let d = channel.dim();
    let o_norm = linalg::operator_norm(o)?;
    if o_norm == 0.0 {
        return Err(Error::InvalidInput("observable is zero".into()));
    }
    let adj = channel.adjoint();
    let mut cur = o - &(linalg::identity(d) * linalg::re(rho_fix.expectation(o)));
    let mut norms = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            cur = adj.apply(&cur);
        }
        norms.push(linalg::operator_norm(&cur)? / o_norm);
    }
    let pts: Vec<(f64, f64)> = (n_min..=n_max)
        .filter(|&n| norms[n] > 0.0)
        .map(|n| (n as f64, norms[n].ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::NonConvergence { what: "contraction fit".into(), residual: 0.0 });
    }
    let np = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / np;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / np;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::NonConvergence { what: "contraction fit (no decay)".into(), residual: slope });
    }
    let tau = -1.0 / slope;
    let c = (n_min..=n_max).map(|n| norms[n] * (n as f64 / tau).exp()).fold(0.0, f64::max);
    Ok(ContractionFit { c, tau, norms })
}

/// Upper bound on `Var(O)` after `m` steps:
/// `‖O‖² + C² T0² (4/π) ‖H‖² ‖O‖² (1 − e^{−2m/τ}) / (1 − e^{−2/τ})`.
pub fn variance_bound(
    sys: &SpectralSystem,
    params: &ProtocolParams,
    o: &CMat,
    m: usize,
    c: f64,
    tau: f64,
) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidInput("tau must be positive".into()));
    }
    let o2 = linalg::operator_norm(o)?.powi(2);
    let h2 = linalg::operator_norm(sys.hamiltonian().matrix())?.powi(2);
    let geometric = (-(-2.0 * m as f64 / tau).exp_m1()) / (-(-2.0 / tau).exp_m1());
    let spread = c * c * params.t0 * params.t0 * 4.0 / std::f64::consts::PI * h2 * o2 * geometric;
    Ok(o2 + spread)
}
