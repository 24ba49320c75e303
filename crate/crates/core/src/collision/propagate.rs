// Copyright 2026 Thermalsim Contributors
// SPDX-License-Identifier: Apache-2.0

//! Time evolution of the joint system-bath state.
//!
//! Joint basis index is `s · 2^{n_B} + b` (system first, bath qubit 0 leftmost). The coupling
//! `V(t) = Σ_a f(t) A_a ⊗ B_a† + h.c.` is integrated with a fourth-order commutator-free
//! Magnus scheme inside the window where `|f(t)|` exceeds [`COUPLING_CUTOFF`]; outside it the
//! evolution is free and applied exactly from the system spectrum.

use ndarray::{s, Array1, Array2};
use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::linalg::{self, dagger, CMat, CVec, C64, I, ZERO};
use crate::operators::{HermitianOperator, SpectralSystem};
use crate::sampler::{GaussianFilter, JumpSet};

/// Filter magnitude below which the interaction is treated as switched off.
pub const COUPLING_CUTOFF: f64 = 1e-17;

/// Joint dimensions up to this size use dense exponentials; larger ones use Lanczos.
pub const DENSE_LIMIT: usize = 256;

const SQRT3_6: f64 = 0.288_675_134_594_812_9;

/// Shape of the bath Hamiltonian and of the filter entering the coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BathModel {
    /// `H_B = I`, complex filter, bath reset to `|0…0⟩`.
    Trivial,
    /// `H_B = -(ω/2) Σ_a Z_a`, real filter, bath reset to its Gibbs state.
    Randomized { omega: f64 },
}

#[derive(Debug, Clone)]
enum Ops {
    Dense { h0: CMat, w: CMat },
    Sparse { h0: CsMat<C64>, w: CsMat<C64>, wd: CsMat<C64> },
}

/// Joint Hamiltonian `H_S ⊗ I + I ⊗ H_B + J (f(t) W + f*(t) W†)` with `W = Σ_a A_a ⊗ B_a†`.
#[derive(Debug, Clone)]
pub struct SystemBath {
    sys: SpectralSystem,
    d_s: usize,
    n_b: usize,
    bath_energies: Vec<f64>,
    coupling: f64,
    filter: GaussianFilter,
    real_filter: bool,
    ops: Ops,
    dt: f64,
}

impl SystemBath {
    pub fn new(
        sys: &SpectralSystem,
        jumps: &JumpSet,
        filter: GaussianFilter,
        coupling: f64,
        bath: BathModel,
        dt: f64,
        max_qubits: usize,
    ) -> Result<Self> {
        let d_s = sys.dim();
        if jumps.dim() != d_s {
            return Err(Error::Dimension(format!(
                "jump operators on dimension {}, system has {d_s}",
                jumps.dim()
            )));
        }
        let n_s = sys.hamiltonian().n_qubits();
        let n_b = jumps.len();
        if n_s + n_b > max_qubits {
            return Err(Error::InvalidInput(format!(
                "{} system + {} bath qubits exceed the limit of {max_qubits}",
                n_s, n_b
            )));
        }
        if !(dt > 0.0 && dt <= filter.sigma_f / 4.0) {
            return Err(Error::InvalidInput(format!(
                "integrator step {dt} must lie in (0, σ_f/4 = {}]",
                filter.sigma_f / 4.0
            )));
        }
        let d_b = 1usize << n_b;
        let bath_energies: Vec<f64> = match bath {
            BathModel::Trivial => vec![1.0; d_b],
            BathModel::Randomized { omega } => (0..d_b)
                .map(|b| {
                    (0..n_b)
                        .map(|a| if bit(b, a, n_b) { omega / 2.0 } else { -omega / 2.0 })
                        .sum()
                })
                .collect(),
        };
        let dim = d_s * d_b;
        let mut h0 = TriMat::new((dim, dim));
        let hs = sys.hamiltonian().matrix();
        for s in 0..d_s {
            for s2 in 0..d_s {
                let v = hs[[s, s2]];
                if v != ZERO {
                    for b in 0..d_b {
                        h0.add_triplet(s * d_b + b, s2 * d_b + b, v);
                    }
                }
            }
        }
        for s in 0..d_s {
            for (b, &e) in bath_energies.iter().enumerate() {
                if e != 0.0 {
                    h0.add_triplet(s * d_b + b, s * d_b + b, C64::new(e, 0.0));
                }
            }
        }
        let mut w = TriMat::new((dim, dim));
        for (a, op) in jumps.ops().iter().enumerate() {
            for s in 0..d_s {
                for s2 in 0..d_s {
                    let v = op[[s, s2]];
                    if v == ZERO {
                        continue;
                    }
                    for b in 0..d_b {
                        if !bit(b, a, n_b) {
                            let raised = b | (1 << (n_b - 1 - a));
                            w.add_triplet(s * d_b + raised, s2 * d_b + b, v);
                        }
                    }
                }
            }
        }
        let h0: CsMat<C64> = h0.to_csr();
        let w: CsMat<C64> = w.to_csr();
        let ops = if dim <= DENSE_LIMIT {
            Ops::Dense {
                h0: to_dense(&h0),
                w: to_dense(&w),
            }
        } else {
            let wd = w.transpose_view().to_csr().map(|z| z.conj());
            Ops::Sparse { h0, w, wd }
        };
        Ok(Self {
            sys: sys.clone(),
            d_s,
            n_b,
            bath_energies,
            coupling,
            filter,
            real_filter: matches!(bath, BathModel::Randomized { .. }),
            ops,
            dt,
        })
    }

    pub fn dim(&self) -> usize {
        self.d_s << self.n_b
    }

    pub fn system_dim(&self) -> usize {
        self.d_s
    }

    pub fn bath_dim(&self) -> usize {
        1 << self.n_b
    }

    pub fn bath_energies(&self) -> &[f64] {
        &self.bath_energies
    }

    pub fn system(&self) -> &SpectralSystem {
        &self.sys
    }

    pub fn step(&self) -> f64 {
        self.dt
    }

    /// Filter entering the coupling at time `t`.
    pub fn filter_value(&self, t: f64) -> C64 {
        if self.real_filter {
            let s2 = self.filter.sigma_f * self.filter.sigma_f;
            C64::new((2.0 / (std::f64::consts::PI * s2)).sqrt() * (-2.0 * t * t / s2).exp(), 0.0)
        } else {
            self.filter.value(t)
        }
    }

    /// Half-width of the window outside which `|f(t)| < COUPLING_CUTOFF`.
    pub fn active_half_width(&self) -> f64 {
        let s = self.filter.sigma_f;
        let peak = (2.0 / (std::f64::consts::PI * s * s)).sqrt();
        let shift = if self.real_filter {
            0.0
        } else {
            self.filter.beta * self.filter.beta / (8.0 * s * s)
        };
        s * (((peak / COUPLING_CUTOFF).ln() + shift) / 2.0).max(0.0).sqrt()
    }

    /// Dense joint Hamiltonian at time `t`.
    pub fn dense_hamiltonian(&self, t: f64) -> Result<HermitianOperator> {
        let c = self.filter_value(t) * self.coupling;
        let m = match &self.ops {
            Ops::Dense { h0, w } => h0 + &w.mapv(|z| z * c) + dagger(w).mapv(|z| z * c.conj()),
            Ops::Sparse { h0, w, wd } => {
                to_dense(h0) + to_dense(w).mapv(|z| z * c) + to_dense(wd).mapv(|z| z * c.conj())
            }
        };
        HermitianOperator::new(m)
    }

    /// `exp(-i h (H0/2 + c W + c* W†))` applied to every column of `psi`.
    fn exp_apply(&self, psi: &mut CMat, h: f64, c: C64) -> Result<()> {
        match &self.ops {
            Ops::Dense { h0, w } => {
                let m = h0.mapv(|z| z * 0.5) + w.mapv(|z| z * c) + dagger(w).mapv(|z| z * c.conj());
                let u = linalg::unitary_evolution(&m, h)?;
                *psi = u.dot(psi);
            }
            Ops::Sparse { h0, w, wd } => {
                let apply = |v: &CVec| -> CVec {
                    let mut y = spmv(h0, v);
                    y.mapv_inplace(|z| z * 0.5);
                    y.scaled_add(c, &spmv(w, v));
                    y.scaled_add(c.conj(), &spmv(wd, v));
                    y
                };
                for mut col in psi.columns_mut() {
                    let v = col.to_owned();
                    col.assign(&lanczos_expmv(&apply, &v, h, 0)?);
                }
            }
        }
        Ok(())
    }

    /// One commutator-free fourth-order step from `t` to `t + h`.
    pub fn cf4_step(&self, psi: &mut CMat, t: f64, h: f64) -> Result<()> {
        let (a1, a2) = (0.25 + SQRT3_6, 0.25 - SQRT3_6);
        let f1 = self.filter_value(t + (0.5 - SQRT3_6) * h) * self.coupling;
        let f2 = self.filter_value(t + (0.5 + SQRT3_6) * h) * self.coupling;
        self.exp_apply(psi, h, f1 * a1 + f2 * a2)?;
        self.exp_apply(psi, h, f1 * a2 + f2 * a1)
    }

    /// Exact coupling-free evolution over `tau`.
    pub fn free_evolve(&self, psi: &mut CMat, tau: f64) {
        if tau == 0.0 {
            return;
        }
        let u = self.sys.evolution(tau);
        let d_b = self.bath_dim();
        let phases: Array1<C64> = self
            .bath_energies
            .iter()
            .map(|&e| (-I * e * tau).exp())
            .collect();
        for mut col in psi.columns_mut() {
            let m = Array2::from_shape_fn((self.d_s, d_b), |(s, b)| col[s * d_b + b]);
            let out = u.dot(&m) * phases.view().insert_axis(ndarray::Axis(0));
            for s in 0..self.d_s {
                for b in 0..d_b {
                    col[s * d_b + b] = out[[s, b]];
                }
            }
        }
    }

    /// Columns `|j⟩ ⊗ |b⟩` for every system index `j` and each listed bath index `b`,
    /// ordered bath-major: column `k · D_S + j` starts in `|j⟩ ⊗ |b_k⟩`.
    pub fn initial_columns(&self, bath_states: &[usize]) -> CMat {
        let d_b = self.bath_dim();
        let mut psi = Array2::zeros((self.dim(), self.d_s * bath_states.len()));
        for (k, &b) in bath_states.iter().enumerate() {
            for j in 0..self.d_s {
                psi[[j * d_b + b, k * self.d_s + j]] = C64::new(1.0, 0.0);
            }
        }
        psi
    }
}

/// Uniform step grid `t_k = start + k·dt` over the active window.
#[derive(Debug, Clone, Copy)]
pub struct Window {
    pub start: f64,
    pub steps: usize,
    pub dt: f64,
}

impl Window {
    /// Window covering `[max(-T/2, -t_c), t_c]`, where `t_c` is the active half-width.
    pub fn for_protocol(sb: &SystemBath, t_total: f64) -> Self {
        let tc = sb.active_half_width();
        let start = (-t_total / 2.0).max(-tc);
        let steps = if tc > start {
            ((tc - start) / sb.step() - 1e-9).ceil() as usize
        } else {
            0
        };
        Self {
            start,
            steps,
            dt: sb.step(),
        }
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start + k as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.time(self.steps)
    }

    /// Largest grid index whose time does not exceed `t`.
    pub fn index_below(&self, t: f64) -> usize {
        let k = ((t - self.start) / self.dt + 1e-9).floor();
        (k.max(0.0) as usize).min(self.steps)
    }

    /// Evolve `psi` from grid index `k` (full steps) to time `t` (final partial step).
    pub fn advance(&self, sb: &SystemBath, psi: &mut CMat, k: usize, t: f64) -> Result<()> {
        let target = self.index_below(t);
        for i in k..target {
            sb.cf4_step(psi, self.time(i), self.dt)?;
        }
        let rest = t - self.time(target.max(k));
        if rest > 1e-13 {
            sb.cf4_step(psi, self.time(target.max(k)), rest)?;
        }
        Ok(())
    }
}

/// Integrate from `t = -T/2` with initial states `|j⟩ ⊗ |b⟩`, recording the columns at each
/// `t = T/2 + x`. `x_values` must be sorted ascending.
pub fn propagate_from_start(
    sb: &SystemBath,
    t_total: f64,
    bath_states: &[usize],
    x_values: &[f64],
) -> Result<Vec<CMat>> {
    if x_values.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("shift values must be sorted".into()));
    }
    let win = Window::for_protocol(sb, t_total);
    let init = sb.initial_columns(bath_states);
    let mut psi = init.clone();
    sb.free_evolve(&mut psi, win.start + t_total / 2.0);
    let mut k = 0;
    let mut out = Vec::with_capacity(x_values.len());
    for &x in x_values {
        let te = t_total / 2.0 + x;
        if te < -t_total / 2.0 - 1e-12 {
            return Err(Error::InvalidInput(format!("shift {x} gives negative evolution time")));
        }
        if te < win.start {
            let mut free = init.clone();
            sb.free_evolve(&mut free, te + t_total / 2.0);
            out.push(free);
        } else if te >= win.end() {
            while k < win.steps {
                sb.cf4_step(&mut psi, win.time(k), win.dt)?;
                k += 1;
            }
            let mut snap = psi.clone();
            sb.free_evolve(&mut snap, te - win.end());
            out.push(snap);
        } else {
            let target = win.index_below(te);
            while k < target {
                sb.cf4_step(&mut psi, win.time(k), win.dt)?;
                k += 1;
            }
            let mut snap = psi.clone();
            win.advance(sb, &mut snap, k, te)?;
            out.push(snap);
        }
    }
    Ok(out)
}

fn bit(b: usize, a: usize, n_b: usize) -> bool {
    (b >> (n_b - 1 - a)) & 1 == 1
}

fn to_dense(m: &CsMat<C64>) -> CMat {
    let mut out = Array2::zeros((m.rows(), m.cols()));
    for (r, row) in m.outer_iterator().enumerate() {
        for (c, &val) in row.iter() {
            out[[r, c]] += val;
        }
    }
    out
}

fn spmv(m: &CsMat<C64>, v: &CVec) -> CVec {
    let mut y = Array1::zeros(m.rows());
    for (r, row) in m.outer_iterator().enumerate() {
        let mut acc = ZERO;
        for (c, &val) in row.iter() {
            acc += val * v[c];
        }
        y[r] = acc;
    }
    y
}

/// `exp(-i τ A) v` for Hermitian `A` by Lanczos; halves `τ` when the Krylov space is too small.
fn lanczos_expmv(apply: &impl Fn(&CVec) -> CVec, v: &CVec, tau: f64, depth: usize) -> Result<CVec> {
    const M_MAX: usize = 40;
    const TOL: f64 = 1e-13;
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(v.clone());
    }
    let mut basis: Vec<CVec> = vec![v.mapv(|z| z / norm)];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    for j in 0..M_MAX {
        let mut w = apply(&basis[j]);
        let a = basis[j].iter().zip(w.iter()).map(|(p, q)| p.conj() * q).sum::<C64>().re;
        w.scaled_add(C64::new(-a, 0.0), &basis[j]);
        if j > 0 {
            w.scaled_add(C64::new(-beta[j - 1], 0.0), &basis[j - 1]);
        }
        // Full reorthogonalization keeps the basis orthonormal at this size.
        for q in &basis {
            let ov = q.iter().zip(w.iter()).map(|(p, r)| p.conj() * r).sum::<C64>();
            w.scaled_add(-ov, q);
        }
        alpha.push(a);
        let b = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let m = j + 1;
        let small = tridiagonal_exp_first_column(&alpha, &beta, tau)?;
        let err = b * small[m - 1].norm();
        if err < TOL || b < 1e-14 {
            let mut out: CVec = Array1::zeros(v.len());
            for (q, c) in basis.iter().zip(small.iter()) {
                out.scaled_add(*c * norm, q);
            }
            return Ok(out);
        }
        beta.push(b);
        basis.push(w.mapv(|z| z / b));
    }
    if depth > 30 {
        return Err(Error::NonConvergence {
            what: "Lanczos exponential".into(),
            residual: tau,
        });
    }
    let half = lanczos_expmv(apply, v, tau / 2.0, depth + 1)?;
    lanczos_expmv(apply, &half, tau / 2.0, depth + 1)
}

fn tridiagonal_exp_first_column(alpha: &[f64], beta: &[f64], tau: f64) -> Result<CVec> {
    let m = alpha.len();
    let mut t = Array2::zeros((m, m));
    for i in 0..m {
        t[[i, i]] = C64::new(alpha[i], 0.0);
        if i + 1 < m {
            t[[i, i + 1]] = C64::new(beta[i], 0.0);
            t[[i + 1, i]] = C64::new(beta[i], 0.0);
        }
    }
    let u = linalg::unitary_evolution(&t, tau)?;
    Ok(u.slice(s![.., 0]).to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{build_mixed_field_ising, spectral_decompose};

    fn setup(coupling: f64, dt: f64, n: usize) -> SystemBath {
        let h = build_mixed_field_ising(n, 0.9045, 0.809, false).unwrap();
        let sys = spectral_decompose(&h, 1e-9).unwrap();
        let jumps = JumpSet::x_plus_z(n, false).unwrap();
        let f = GaussianFilter::new(1.0, 1.0).unwrap();
        SystemBath::new(&sys, &jumps, f, coupling, BathModel::Trivial, dt, 12).unwrap()
    }

    #[test]
    fn hamiltonian_is_hermitian_and_decays() {
        let sb = setup(0.3, 0.02, 2);
        for t in [-3.0, 0.0, 2.7] {
            assert!(sb.dense_hamiltonian(t).is_ok());
        }
        let far = sb.dense_hamiltonian(11.0).unwrap();
        let free = setup(0.0, 0.02, 2).dense_hamiltonian(11.0).unwrap();
        assert!(linalg::max_abs((far.matrix() - free.matrix()).view()) < 1e-20);
        assert!(sb.active_half_width() > 4.0 && sb.active_half_width() < 5.0);
    }

    #[test]
    fn oversized_step_rejected() {
        let h = build_mixed_field_ising(1, 0.0, 1.0, false).unwrap();
        let sys = spectral_decompose(&h, 1e-9).unwrap();
        let jumps = JumpSet::x_plus_z(1, false).unwrap();
        let f = GaussianFilter::new(1.0, 1.0).unwrap();
        assert!(SystemBath::new(&sys, &jumps, f, 0.1, BathModel::Trivial, 0.3, 12).is_err());
        assert!(SystemBath::new(&sys, &jumps, f, 0.1, BathModel::Trivial, 0.1, 1).is_err());
    }

    #[test]
    fn lanczos_matches_dense_exponential() {
        let sb = setup(0.2, 0.02, 2);
        let Ops::Dense { h0, w } = &sb.ops else { panic!() };
        let c = C64::new(0.3, -0.1);
        let m = h0.mapv(|z| z * 0.5) + w.mapv(|z| z * c) + dagger(w).mapv(|z| z * c.conj());
        let u = linalg::unitary_evolution(&m, 0.7).unwrap();
        let v: CVec = Array1::from_shape_fn(16, |i| C64::new(i as f64, 1.0 - i as f64 * 0.1));
        let apply = |x: &CVec| m.dot(x);
        let got = lanczos_expmv(&apply, &v, 0.7, 0).unwrap();
        let want = u.dot(&v);
        let err = (&got - &want).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-11, "{err}");
        let long = lanczos_expmv(&apply, &v, 40.0, 0).unwrap();
        let want = linalg::unitary_evolution(&m, 40.0).unwrap().dot(&v);
        assert!((&long - &want).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-10);
    }
}
