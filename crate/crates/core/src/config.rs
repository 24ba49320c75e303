// Copyright 2026 Thermalsim Contributors
// SPDX-License-Identifier: Apache-2.0

//! Experiment configuration: a flat `key = value` file plus command-line overrides.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! # comment (also allowed after a value)
//! key = value
//! ```
//!
//! Keys are case-sensitive, blank lines are ignored, repeated keys keep the last value and
//! unknown keys are rejected. Overrides given as `key=value` apply after the file.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::collision::{Ladder, ProtocolParams};
use crate::error::{Error, Result};
use crate::operators::{build_mixed_field_ising, spectral_decompose, SpectralSystem};
use crate::sampler::{GaussianFilter, JumpSet};

/// Bohr frequencies closer than this are merged.
pub const BOHR_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    GapSweepJ,
    FixpointSweepJ,
    ResonanceSweepT,
    ResonanceSweepBeta,
    ResonanceTraceDist,
    Trajectories,
    RandomizedBath,
    Validate,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::GapSweepJ,
        ExperimentKind::FixpointSweepJ,
        ExperimentKind::ResonanceSweepT,
        ExperimentKind::ResonanceSweepBeta,
        ExperimentKind::ResonanceTraceDist,
        ExperimentKind::Trajectories,
        ExperimentKind::RandomizedBath,
        ExperimentKind::Validate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::GapSweepJ => "gap_sweep_j",
            ExperimentKind::FixpointSweepJ => "fixpoint_sweep_j",
            ExperimentKind::ResonanceSweepT => "resonance_sweep_t",
            ExperimentKind::ResonanceSweepBeta => "resonance_sweep_beta",
            ExperimentKind::ResonanceTraceDist => "resonance_trace_dist",
            ExperimentKind::Trajectories => "trajectories",
            ExperimentKind::RandomizedBath => "randomized_bath",
            ExperimentKind::Validate => "validate",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

/// Cycle length: a number, or the `k`-th resonance `2πk/ω₁₂` of the top two levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleTime {
    Value(f64),
    Resonant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub scale: Scale,
    /// Explicit grid; replaces `min`/`max`/`points` when non-empty.
    pub values: Vec<f64>,
}

impl SweepSpec {
    fn range(min: f64, max: f64, points: usize, scale: Scale) -> Self {
        Self { min, max, points, scale, values: Vec::new() }
    }

    fn list(values: &[f64]) -> Self {
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Self { min, max, points: values.len(), scale: Scale::Linear, values: values.to_vec() }
    }

    pub fn grid(&self) -> Result<Vec<f64>> {
        if !self.values.is_empty() {
            return Ok(self.values.clone());
        }
        if self.points == 0 {
            return Err(Error::Config("sweep_points must be positive".into()));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::Config("sweep needs finite sweep_min <= sweep_max".into()));
        }
        if self.points == 1 {
            return Ok(vec![self.min]);
        }
        let n = (self.points - 1) as f64;
        match self.scale {
            Scale::Linear => Ok((0..self.points).map(|i| self.min + (self.max - self.min) * i as f64 / n).collect()),
            Scale::Log => {
                if self.min <= 0.0 {
                    return Err(Error::Config("log sweep needs sweep_min > 0".into()));
                }
                let ratio = self.max / self.min;
                Ok((0..self.points).map(|i| self.min * ratio.powf(i as f64 / n)).collect())
            }
        }
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub n: usize,
    pub g: f64,
    pub h: f64,
    pub periodic: bool,
    pub beta: f64,
    pub sigma_f: f64,
    #[serde(rename = "T")]
    pub t: CycleTime,
    pub resonance_k: u32,
    #[serde(rename = "T0")]
    pub t0: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub jump_norm_unit: bool,
    pub ladder: Ladder,
    pub integrator_step: f64,
    pub quadrature_nodes: usize,
    pub bath_omega_max: f64,
    pub max_qubits: usize,
    pub exact_channels: bool,
    pub sweep: SweepSpec,
    pub trajectories: usize,
    /// Steps per trajectory; 0 picks `max(2000, 8/λ_gap)` from the averaged channel.
    pub steps: usize,
    pub epsilon: f64,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Worker threads; `None` means one per core.
    pub threads: Option<usize>,
}

/// Keys accepted in files and overrides.
pub const KEYS: [&str; 29] = [
    "experiment",
    "n",
    "g",
    "h",
    "boundary",
    "beta",
    "sigma_f",
    "T",
    "resonance_k",
    "T0",
    "J",
    "jump_norm",
    "ladder",
    "integrator_step",
    "quadrature_nodes",
    "bath_omega_max",
    "max_qubits",
    "exact_channels",
    "sweep_min",
    "sweep_max",
    "sweep_points",
    "sweep_scale",
    "sweep_values",
    "trajectories",
    "steps",
    "epsilon",
    "output_dir",
    "seed",
    "threads",
];

impl ExperimentConfig {
    /// Defaults for `kind`: the paper model and protocol, plus a sweep suited to the experiment.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let mut c = Self {
            experiment: kind,
            n: 2,
            g: 0.9045,
            h: 0.809,
            periodic: false,
            beta: 1.0,
            sigma_f: 1.0,
            t: CycleTime::Value(10.0),
            resonance_k: 4,
            t0: 1.0,
            j: 0.1,
            jump_norm_unit: false,
            ladder: Ladder::Half,
            integrator_step: 0.02,
            quadrature_nodes: 21,
            bath_omega_max: 3.0,
            max_qubits: 12,
            exact_channels: false,
            sweep: SweepSpec::range(0.02, 0.16, 4, Scale::Log),
            trajectories: 50,
            steps: 0,
            epsilon: 0.01,
            output_dir: PathBuf::from("out"),
            seed: 0,
            threads: None,
        };
        match kind {
            ExperimentKind::ResonanceSweepT => {
                c.j = 0.01;
                c.sweep = SweepSpec::range(6.0, 14.0, 401, Scale::Linear);
            }
            ExperimentKind::ResonanceSweepBeta => {
                c.j = 0.01;
                c.t = CycleTime::Resonant;
                c.sweep = SweepSpec::range(0.2, 2.0, 10, Scale::Linear);
            }
            ExperimentKind::ResonanceTraceDist => {
                c.t = CycleTime::Resonant;
                c.sweep = SweepSpec::range(0.005, 0.16, 6, Scale::Log);
            }
            ExperimentKind::Trajectories | ExperimentKind::RandomizedBath => {
                c.sweep = SweepSpec::list(&[0.1, 0.25]);
            }
            _ => {}
        }
        c
    }

    /// Defaults for `kind`, then `file` contents, then `overrides` in order.
    pub fn resolve(kind: ExperimentKind, file: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut c = Self::defaults(kind);
        if let Some(text) = file {
            for (lineno, line) in text.lines().enumerate() {
                let body = line.split('#').next().unwrap_or("").trim();
                if body.is_empty() {
                    continue;
                }
                let (k, v) = body
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
                c.set(k.trim(), v.trim())
                    .map_err(|e| Error::Config(format!("line {}: {}", lineno + 1, strip_config(e))))?;
            }
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{o}' is not key=value")))?;
            c.set(k.trim(), v.trim())?;
        }
        if c.experiment != kind {
            return Err(Error::Config(format!(
                "config names experiment '{}' but '{kind}' was requested",
                c.experiment
            )));
        }
        c.check()?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "experiment" => self.experiment = value.parse()?,
            "n" => self.n = parse(key, value)?,
            "g" => self.g = parse(key, value)?,
            "h" => self.h = parse(key, value)?,
            "boundary" => {
                self.periodic = match value {
                    "open" => false,
                    "periodic" => true,
                    _ => return Err(bad(key, value, "open or periodic")),
                }
            }
            "beta" => self.beta = parse(key, value)?,
            "sigma_f" => self.sigma_f = parse(key, value)?,
            "T" => {
                self.t = if value == "resonant" { CycleTime::Resonant } else { CycleTime::Value(parse(key, value)?) }
            }
            "resonance_k" => self.resonance_k = parse(key, value)?,
            "T0" => self.t0 = parse(key, value)?,
            "J" => self.j = parse(key, value)?,
            "jump_norm" => {
                self.jump_norm_unit = match value {
                    "none" => false,
                    "unit" => true,
                    _ => return Err(bad(key, value, "none or unit")),
                }
            }
            "ladder" => {
                self.ladder = match value {
                    "half" => Ladder::Half,
                    "unit" => Ladder::Unit,
                    _ => return Err(bad(key, value, "half or unit")),
                }
            }
            "integrator_step" => self.integrator_step = parse(key, value)?,
            "quadrature_nodes" => self.quadrature_nodes = parse(key, value)?,
            "bath_omega_max" => self.bath_omega_max = parse(key, value)?,
            "max_qubits" => self.max_qubits = parse(key, value)?,
            "exact_channels" => self.exact_channels = parse(key, value)?,
            "sweep_min" => {
                self.sweep.min = parse(key, value)?;
                self.sweep.values.clear();
            }
            "sweep_max" => {
                self.sweep.max = parse(key, value)?;
                self.sweep.values.clear();
            }
            "sweep_points" => {
                self.sweep.points = parse(key, value)?;
                self.sweep.values.clear();
            }
            "sweep_scale" => {
                self.sweep.scale = match value {
                    "linear" => Scale::Linear,
                    "log" => Scale::Log,
                    _ => return Err(bad(key, value, "linear or log")),
                };
                self.sweep.values.clear();
            }
            "sweep_values" => {
                let v = value
                    .split(',')
                    .map(|s| parse::<f64>(key, s.trim()))
                    .collect::<Result<Vec<_>>>()?;
                self.sweep = SweepSpec::list(&v);
            }
            "trajectories" => self.trajectories = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "seed" => self.seed = parse(key, value)?,
            "threads" => {
                self.threads = if value == "auto" { None } else { Some(parse(key, value)?) };
            }
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    fn check(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.n < 1 {
            return fail("n must be at least 1");
        }
        if !(self.beta > 0.0) {
            return fail("beta must be positive");
        }
        if !(self.sigma_f > 0.0) {
            return fail("sigma_f must be positive");
        }
        if let CycleTime::Value(t) = self.t {
            if !(t > 0.0) {
                return fail("T must be positive");
            }
        }
        if self.resonance_k == 0 {
            return fail("resonance_k must be positive");
        }
        if self.trajectories < 2 {
            return fail("trajectories must be at least 2");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return fail("epsilon must lie in (0, 1)");
        }
        if self.threads == Some(0) {
            return fail("threads must be positive or auto");
        }
        self.sweep.grid().map(|_| ())
    }

    pub fn system(&self) -> Result<SpectralSystem> {
        let h = build_mixed_field_ising(self.n, self.g, self.h, self.periodic)?;
        spectral_decompose(&h, BOHR_TOLERANCE)
    }

    /// Cycle length in time units for `sys`.
    pub fn cycle_time(&self, sys: &SpectralSystem) -> Result<f64> {
        match self.t {
            CycleTime::Value(t) => Ok(t),
            CycleTime::Resonant => resonant_time(sys, self.resonance_k),
        }
    }

    pub fn protocol(&self, sys: &SpectralSystem) -> Result<ProtocolParams> {
        let filter = GaussianFilter::new(self.sigma_f, self.beta)?;
        let jumps = JumpSet::x_plus_z(self.n, self.jump_norm_unit)?;
        let mut p = ProtocolParams::new(self.j, self.cycle_time(sys)?, self.t0, filter, jumps);
        p.integrator_step = self.integrator_step;
        p.quadrature_nodes = self.quadrature_nodes;
        p.bath_omega_max = self.bath_omega_max;
        p.ladder = self.ladder;
        p.max_qubits = self.max_qubits;
        p.exact_channels = self.exact_channels;
        p.validate(sys).map_err(|e| Error::Config(strip_config(e)))?;
        Ok(p)
    }

    /// System plus bath qubits the propagation has to hold.
    pub fn total_qubits(&self) -> usize {
        2 * self.n
    }
}

/// `2πk/ω₁₂`, with levels counted downward from the top of the spectrum.
pub fn resonant_time(sys: &SpectralSystem, k: u32) -> Result<f64> {
    let e = sys.energies();
    let d = e.len();
    if d < 2 {
        return Err(Error::InvalidInput("resonance needs at least two levels".into()));
    }
    let w = e[d - 1] - e[d - 2];
    if w <= 0.0 {
        return Err(Error::InvalidInput("top two levels are degenerate".into()));
    }
    Ok(2.0 * std::f64::consts::PI * k as f64 / w)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse '{value}' for key '{key}'")))
}

fn bad(key: &str, value: &str, allowed: &str) -> Error {
    Error::Config(format!("'{value}' for key '{key}', expected {allowed}"))
}

fn strip_config(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}
