// Copyright 2026 Thermalsim Contributors
// SPDX-License-Identifier: Apache-2.0

//! The collision protocol: couple the system to fresh bath qubits through a filtered
//! interaction, evolve for a randomized time, trace the bath out and repeat.

mod channel;
mod propagate;

pub use channel::{
    channel_averaged, channel_kls, channel_randomized_bath, channel_single, ChannelFactory,
    KrausChannel, MixtureChannel,
};
pub use propagate::{propagate_from_start, BathModel, SystemBath, Window, COUPLING_CUTOFF, DENSE_LIMIT};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::operators::{HermitianOperator, SpectralSystem};
use crate::sampler::{GaussianFilter, JumpSet};

/// Normalization of the bath ladder operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Ladder {
    /// `B = |0⟩⟨1|`, the `(X ± iY)/2` convention.
    Half,
    /// `B = 2|0⟩⟨1|`, the `X ± iY` convention.
    Unit,
}

impl Ladder {
    pub fn factor(self) -> f64 {
        match self {
            Ladder::Half => 1.0,
            Ladder::Unit => 2.0,
        }
    }
}

/// Every knob of one protocol cycle.
#[derive(Debug, Clone)]
pub struct ProtocolParams {
    pub j: f64,
    pub t: f64,
    pub t0: f64,
    pub filter: GaussianFilter,
    pub jumps: JumpSet,
    pub integrator_step: f64,
    pub quadrature_nodes: usize,
    pub bath_omega_max: f64,
    pub ladder: Ladder,
    pub max_qubits: usize,
    /// Build every trajectory channel by a fresh propagation instead of the shared snapshots.
    pub exact_channels: bool,
}

impl ProtocolParams {
    pub fn new(j: f64, t: f64, t0: f64, filter: GaussianFilter, jumps: JumpSet) -> Self {
        Self {
            j,
            t,
            t0,
            filter,
            jumps,
            integrator_step: 0.02,
            quadrature_nodes: 21,
            bath_omega_max: 3.0,
            ladder: Ladder::Half,
            max_qubits: 12,
            exact_channels: false,
        }
    }

    pub fn with_j(&self, j: f64) -> Self {
        Self { j, ..self.clone() }
    }

    pub fn with_t(&self, t: f64) -> Self {
        Self { t, ..self.clone() }
    }

    /// Coupling constant multiplying `f(t) A ⊗ |1⟩⟨0| + h.c.`.
    pub fn effective_coupling(&self) -> f64 {
        self.j * self.ladder.factor()
    }

    pub fn validate(&self, sys: &SpectralSystem) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(what.to_string()));
        if !(self.j >= 0.0 && self.j.is_finite()) {
            return bad("J must be finite and nonnegative");
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return bad("T must be positive");
        }
        if !(self.t0 >= 0.0 && self.t0.is_finite()) {
            return bad("T0 must be nonnegative");
        }
        if self.quadrature_nodes == 0 || self.quadrature_nodes.is_multiple_of(2) {
            return bad("quadrature_nodes must be a positive odd integer");
        }
        if !(self.bath_omega_max >= 0.0) {
            return bad("bath_omega_max must be nonnegative");
        }
        if self.jumps.dim() != sys.dim() {
            return Err(Error::Dimension(format!(
                "jump operators on dimension {}, system has {}",
                self.jumps.dim(),
                sys.dim()
            )));
        }
        if !(self.integrator_step > 0.0 && self.integrator_step <= self.filter.sigma_f / 4.0) {
            return bad("integrator_step must lie in (0, sigma_f/4]");
        }
        let qubits = sys.hamiltonian().n_qubits() + self.jumps.len();
        if qubits > self.max_qubits {
            return Err(Error::InvalidInput(format!(
                "{qubits} system and bath qubits exceed max_qubits = {}",
                self.max_qubits
            )));
        }
        Ok(())
    }

    /// Regime assumptions that are reported but not enforced.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.t0 > 0.0 {
            if self.filter.sigma_f >= self.t {
                out.push(format!("sigma_f = {} is not below T = {}", self.filter.sigma_f, self.t));
            }
            if self.t0 >= self.t {
                out.push(format!("T0 = {} is not below T = {}", self.t0, self.t));
            }
        }
        out
    }

    pub fn system_bath(&self, sys: &SpectralSystem, bath: BathModel) -> Result<SystemBath> {
        self.validate(sys)?;
        SystemBath::new(
            sys,
            &self.jumps,
            self.filter,
            self.effective_coupling(),
            bath,
            self.integrator_step,
            self.max_qubits,
        )
    }

    /// Bath reset state as `(basis index, probability)` pairs.
    pub fn bath_reset(&self, sb: &SystemBath, bath: BathModel) -> Vec<(usize, f64)> {
        match bath {
            BathModel::Trivial => vec![(0, 1.0)],
            BathModel::Randomized { .. } => {
                let e = sb.bath_energies();
                let beta = self.filter.beta;
                let min = e.iter().cloned().fold(f64::INFINITY, f64::min);
                let w: Vec<f64> = e.iter().map(|&x| (-beta * (x - min)).exp()).collect();
                let z: f64 = w.iter().sum();
                w.into_iter()
                    .enumerate()
                    .map(|(b, p)| (b, p / z))
                    .filter(|&(_, p)| p > 0.0)
                    .collect()
            }
        }
    }
}

/// Joint Hamiltonian `H ⊗ I_B + I_S ⊗ H_B + J V(t)` at time `t`.
pub fn system_bath_hamiltonian(
    sys: &SpectralSystem,
    params: &ProtocolParams,
    t: f64,
) -> Result<HermitianOperator> {
    params.system_bath(sys, BathModel::Trivial)?.dense_hamiltonian(t)
}

/// System unitary `e^{-iHt}` as a Kraus channel.
pub fn free_channel(sys: &SpectralSystem, t: f64) -> KrausChannel {
    KrausChannel::unitary(sys.evolution(t))
}

pub(crate) fn kraus_from_columns(
    sb: &SystemBath,
    reset: &[(usize, f64)],
    psi: &CMat,
    pre: Option<&CMat>,
) -> Vec<CMat> {
    let d_s = sb.system_dim();
    let d_b = sb.bath_dim();
    let mut ops = Vec::with_capacity(reset.len() * d_b);
    for (k, &(_, p)) in reset.iter().enumerate() {
        let amp = p.sqrt();
        for m in 0..d_b {
            let e = CMat::from_shape_fn((d_s, d_s), |(i, j)| psi[[i * d_b + m, k * d_s + j]] * amp);
            ops.push(match pre {
                Some(u) => e.dot(u),
                None => e,
            });
        }
    }
    ops
}
