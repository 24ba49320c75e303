// Copyright 2026 Thermalsim Contributors
// SPDX-License-Identifier: Apache-2.0

use ndarray::Array2;

use super::propagate::{propagate_from_start, BathModel, SystemBath, Window};
use super::{kraus_from_columns, ProtocolParams};
use crate::error::{Error, Result};
use crate::linalg::{self, dagger, CMat};
use crate::operators::SpectralSystem;
use crate::quad;
use crate::sampler::{LindbladGenerator, Superoperator};

/// Completely positive map in Kraus form, `ρ ↦ Σ_k E_k ρ E_k†`.
#[derive(Debug, Clone)]
pub struct KrausChannel {
    dim: usize,
    ops: Vec<CMat>,
}

impl KrausChannel {
    pub fn new(ops: Vec<CMat>) -> Result<Self> {
        let dim = ops
            .first()
            .ok_or_else(|| Error::InvalidInput("channel needs at least one Kraus operator".into()))?
            .nrows();
        if ops.iter().any(|e| e.dim() != (dim, dim)) {
            return Err(Error::Dimension("Kraus operators differ in shape".into()));
        }
        Ok(Self { dim, ops })
    }

    pub fn unitary(u: CMat) -> Self {
        Self {
            dim: u.nrows(),
            ops: vec![u],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ops(&self) -> &[CMat] {
        &self.ops
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        let mut out = Array2::zeros(rho.dim());
        for e in &self.ops {
            out = out + e.dot(rho).dot(&dagger(e));
        }
        out
    }

    /// `ρ ↦ U_after 𝒦[U_before ρ U_before†] U_after†`.
    pub fn sandwiched(&self, after: &CMat, before: &CMat) -> Self {
        Self {
            dim: self.dim,
            ops: self.ops.iter().map(|e| after.dot(e).dot(before)).collect(),
        }
    }

    pub fn to_superoperator(&self) -> Superoperator {
        Superoperator::from_kraus(&self.ops).expect("shapes checked at construction")
    }

    /// `max |Σ E†E - I|`.
    pub fn trace_preservation_residual(&self) -> f64 {
        let mut s = Array2::zeros((self.dim, self.dim));
        for e in &self.ops {
            s = s + dagger(e).dot(e);
        }
        linalg::max_abs((s - linalg::identity(self.dim)).view())
    }

    pub fn choi_min_eigenvalue(&self) -> Result<f64> {
        self.to_superoperator().choi_min_eigenvalue()
    }

    pub fn check_cptp(&self, tol: f64) -> Result<()> {
        check_superoperator(&self.to_superoperator(), tol)
    }
}

/// Convex combination of Kraus channels.
#[derive(Debug, Clone)]
pub struct MixtureChannel {
    components: Vec<(f64, KrausChannel)>,
}

impl MixtureChannel {
    pub fn new(components: Vec<(f64, KrausChannel)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput("empty mixture".into()));
        }
        let dim = components[0].1.dim();
        if components.iter().any(|(w, c)| !(*w > 0.0) || c.dim() != dim) {
            return Err(Error::InvalidInput(
                "mixture weights must be positive and dimensions equal".into(),
            ));
        }
        let total: f64 = components.iter().map(|c| c.0).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("mixture weights sum to {total}")));
        }
        Ok(Self { components })
    }

    pub fn single(channel: KrausChannel) -> Self {
        Self {
            components: vec![(1.0, channel)],
        }
    }

    pub fn components(&self) -> &[(f64, KrausChannel)] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].1.dim()
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        let mut out = Array2::zeros(rho.dim());
        for (w, c) in &self.components {
            out.scaled_add(linalg::re(*w), &c.apply(rho));
        }
        out
    }

    pub fn to_superoperator(&self) -> Superoperator {
        let mut s = Superoperator::zeros(self.dim());
        for (w, c) in &self.components {
            s.add_scaled(&c.to_superoperator(), *w);
        }
        s
    }

    pub fn check_cptp(&self, tol: f64) -> Result<()> {
        check_superoperator(&self.to_superoperator(), tol)
    }
}

fn check_superoperator(s: &Superoperator, tol: f64) -> Result<()> {
    let tp = s.trace_preservation_residual();
    if tp > tol {
        return Err(Error::Invariant(format!("trace preservation residual {tp:.3e}")));
    }
    let min = s.choi_min_eigenvalue()?;
    if min < -tol {
        return Err(Error::Invariant(format!("Choi matrix eigenvalue {min:.3e}")));
    }
    Ok(())
}

/// `𝒦_x`: one cycle ending at `t = T/2 + x`.
pub fn channel_single(sys: &SpectralSystem, params: &ProtocolParams, x: f64) -> Result<KrausChannel> {
    single_with_bath(sys, params, BathModel::Trivial, x)
}

/// Appendix variant with bath Hamiltonian `-(ω/2) Σ Z`, a real filter and a thermal bath reset.
pub fn channel_randomized_bath(
    sys: &SpectralSystem,
    params: &ProtocolParams,
    omega: f64,
    x: f64,
) -> Result<KrausChannel> {
    if !(0.0..=params.bath_omega_max).contains(&omega) {
        return Err(Error::InvalidInput(format!(
            "bath frequency {omega} outside [0, {}]",
            params.bath_omega_max
        )));
    }
    single_with_bath(sys, params, BathModel::Randomized { omega }, x)
}

fn single_with_bath(
    sys: &SpectralSystem,
    params: &ProtocolParams,
    bath: BathModel,
    x: f64,
) -> Result<KrausChannel> {
    let sb = params.system_bath(sys, bath)?;
    let reset = params.bath_reset(&sb, bath);
    let states: Vec<usize> = reset.iter().map(|r| r.0).collect();
    let psi = propagate_from_start(&sb, params.t, &states, &[x])?;
    KrausChannel::new(kraus_from_columns(&sb, &reset, &psi[0], None))
}

/// `𝒦 = ∫ p(x) 𝒦_x dx` by Gauss–Hermite quadrature, sharing one propagation pass.
pub fn channel_averaged(sys: &SpectralSystem, params: &ProtocolParams) -> Result<MixtureChannel> {
    let sb = params.system_bath(sys, BathModel::Trivial)?;
    let reset = params.bath_reset(&sb, BathModel::Trivial);
    let rule = quad::gaussian_average_rule(params.quadrature_nodes, params.t0)?;
    let xs: Vec<f64> = rule.iter().map(|r| r.0).collect();
    let cols = propagate_from_start(&sb, params.t, &[0], &xs)?;
    let components = rule
        .iter()
        .zip(cols.iter())
        .map(|(&(_, w), psi)| Ok((w, KrausChannel::new(kraus_from_columns(&sb, &reset, psi, None))?)))
        .collect::<Result<Vec<_>>>()?;
    MixtureChannel::new(components)
}

/// `∫ p(x) 𝒰(T/2 + x) ∘ e^{J² ℒ} ∘ 𝒰(T/2) dx` with `J` the effective coupling.
pub fn channel_kls(
    sys: &SpectralSystem,
    params: &ProtocolParams,
    gen: &LindbladGenerator,
) -> Result<MixtureChannel> {
    params.validate(sys)?;
    if gen.dim() != sys.dim() {
        return Err(Error::Dimension("generator and system differ in dimension".into()));
    }
    let je = params.effective_coupling();
    let e = gen.to_superoperator().exp(je * je)?;
    let kraus = KrausChannel::new(e.to_kraus(1e-12, 1e-8)?)?;
    let before = sys.evolution(params.t / 2.0);
    let rule = quad::gaussian_average_rule(params.quadrature_nodes, params.t0)?;
    let components = rule
        .iter()
        .map(|&(x, w)| (w, kraus.sandwiched(&sys.evolution(params.t / 2.0 + x), &before)))
        .collect();
    MixtureChannel::new(components)
}

/// Fast `𝒦_x` for arbitrary shifts: stores snapshots of the interaction-window propagation
/// and the Kraus form at the window's end, then finishes each request with free evolution or
/// a few integrator steps.
#[derive(Debug, Clone)]
pub struct ChannelFactory {
    sb: SystemBath,
    t_total: f64,
    win: Window,
    reset: Vec<(usize, f64)>,
    before: CMat,
    snapshots: Vec<(usize, CMat)>,
    after_window: Vec<CMat>,
}

impl ChannelFactory {
    /// Prepare channels for shifts in `[x_min, x_max]`, keeping snapshot storage under
    /// `memory_budget` bytes.
    pub fn new(
        sys: &SpectralSystem,
        params: &ProtocolParams,
        bath: BathModel,
        x_min: f64,
        x_max: f64,
        memory_budget: usize,
    ) -> Result<Self> {
        let sb = params.system_bath(sys, bath)?;
        let reset = params.bath_reset(&sb, bath);
        let states: Vec<usize> = reset.iter().map(|r| r.0).collect();
        let win = Window::for_protocol(&sb, params.t);
        let before = sys.evolution(win.start + params.t / 2.0);
        let k_lo = win.index_below(params.t / 2.0 + x_min);
        let k_hi = win.index_below(params.t / 2.0 + x_max).min(win.steps);
        let mut psi = sb.initial_columns(&states);
        let bytes = psi.len() * std::mem::size_of::<crate::linalg::C64>();
        let count = if k_hi >= k_lo { k_hi - k_lo + 1 } else { 0 };
        let stride = ((count * bytes) as f64 / memory_budget.max(1) as f64).ceil().max(1.0) as usize;
        let mut snapshots = Vec::new();
        for k in 0..win.steps {
            if k >= k_lo && k <= k_hi && (k - k_lo).is_multiple_of(stride) {
                snapshots.push((k, psi.clone()));
            }
            sb.cf4_step(&mut psi, win.time(k), win.dt)?;
        }
        if win.steps >= k_lo && win.steps <= k_hi && (win.steps - k_lo).is_multiple_of(stride) {
            snapshots.push((win.steps, psi.clone()));
        }
        let after_window = kraus_from_columns(&sb, &reset, &psi, Some(&before));
        Ok(Self {
            sb,
            t_total: params.t,
            win,
            reset,
            before,
            snapshots,
            after_window,
        })
    }

    pub fn system_bath(&self) -> &SystemBath {
        &self.sb
    }

    /// `𝒦_x` for this factory's protocol.
    pub fn channel(&self, x: f64) -> Result<KrausChannel> {
        let te = self.t_total / 2.0 + x;
        let sys = self.sb.system();
        if te < -self.t_total / 2.0 - 1e-12 {
            return Err(Error::InvalidInput(format!("shift {x} gives negative evolution time")));
        }
        if te < self.win.start {
            return Ok(KrausChannel::unitary(sys.evolution(te + self.t_total / 2.0)));
        }
        if te >= self.win.end() {
            let after = sys.evolution(te - self.win.end());
            return KrausChannel::new(self.after_window.iter().map(|e| after.dot(e)).collect());
        }
        let target = self.win.index_below(te);
        let (k, mut psi) = match self.snapshots.iter().rev().find(|(k, _)| *k <= target) {
            Some((k, s)) => (*k, s.clone()),
            None => {
                let states: Vec<usize> = self.reset.iter().map(|r| r.0).collect();
                (0, self.sb.initial_columns(&states))
            }
        };
        self.win.advance(&self.sb, &mut psi, k, te)?;
        KrausChannel::new(kraus_from_columns(&self.sb, &self.reset, &psi, Some(&self.before)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::Ladder;
    use crate::operators::{build_mixed_field_ising, gibbs_state, spectral_decompose};
    use crate::sampler::{GaussianFilter, GeneratorKind, JumpSet, SamplerParts};

    fn paper(j: f64) -> (SpectralSystem, ProtocolParams) {
        let h = build_mixed_field_ising(2, 0.9045, 0.809, false).unwrap();
        let sys = spectral_decompose(&h, 1e-9).unwrap();
        let f = GaussianFilter::new(1.0, 1.0).unwrap();
        let p = ProtocolParams::new(j, 10.0, 1.0, f, JumpSet::x_plus_z(2, false).unwrap());
        (sys, p)
    }

    fn superop_distance(a: &Superoperator, b: &Superoperator) -> f64 {
        linalg::max_abs((a.matrix() - b.matrix()).view())
    }

    #[test]
    fn decoupled_cycle_is_free_evolution() {
        let (sys, p) = paper(0.0);
        for x in [0.0, -0.8, 1.3] {
            let k = channel_single(&sys, &p, x).unwrap();
            let u = KrausChannel::unitary(sys.evolution(10.0 + x));
            assert!(superop_distance(&k.to_superoperator(), &u.to_superoperator()) < 1e-9);
        }
    }

    #[test]
    fn columns_stay_orthonormal_and_match_free_evolution() {
        let (sys, p) = paper(0.1);
        let sb = p.system_bath(&sys, BathModel::Trivial).unwrap();
        let xs = [-2.0, -0.5, 0.0, 0.3, 2.0];
        for psi in propagate_from_start(&sb, 10.0, &[0], &xs).unwrap() {
            let gram = dagger(&psi).dot(&psi);
            assert!(linalg::max_abs((gram - linalg::identity(4)).view()) < 1e-8);
        }
        let (sys0, p0) = paper(0.0);
        let sb0 = p0.system_bath(&sys0, BathModel::Trivial).unwrap();
        let cols = propagate_from_start(&sb0, 10.0, &[0], &[0.7]).unwrap();
        let u = sys0.evolution(10.7);
        let phase = crate::linalg::C64::new(0.0, -10.7).exp();
        for j in 0..4 {
            for i in 0..4 {
                assert!((cols[0][[i * 4, j]] - u[[i, j]] * phase).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn step_halving_is_converged_and_fourth_order() {
        let (sys, mut p) = paper(0.25);
        let run = |p: &ProtocolParams| {
            let sb = p.system_bath(&sys, BathModel::Trivial).unwrap();
            propagate_from_start(&sb, 10.0, &[0], &[0.0]).unwrap().remove(0)
        };
        let reference = {
            p.integrator_step = 0.0125;
            run(&p)
        };
        let mut errs = Vec::new();
        for dt in [0.2, 0.1, 0.05] {
            p.integrator_step = dt;
            errs.push(linalg::max_abs((&run(&p) - &reference).view()));
        }
        assert!(errs[0] / errs[1] >= 4.0 && errs[1] / errs[2] >= 4.0, "{errs:?}");
        p.integrator_step = 0.02;
        let a = run(&p);
        p.integrator_step = 0.01;
        assert!(linalg::max_abs((&run(&p) - &a).view()) < 1e-8);
    }

    #[test]
    fn channels_are_cptp() {
        let (sys, p) = paper(0.1);
        channel_single(&sys, &p, 0.0).unwrap().check_cptp(1e-8).unwrap();
        channel_averaged(&sys, &p).unwrap().check_cptp(1e-8).unwrap();
        channel_randomized_bath(&sys, &p, 0.0, 0.4).unwrap().check_cptp(1e-8).unwrap();
        channel_randomized_bath(&sys, &p, 2.5, -0.4).unwrap().check_cptp(1e-8).unwrap();
        let parts = SamplerParts::build(&sys, &p.jumps, &p.filter).unwrap();
        let gen = parts.generator(GeneratorKind::LambShift).unwrap();
        channel_kls(&sys, &p, &gen).unwrap().check_cptp(1e-8).unwrap();
    }

    #[test]
    fn zero_width_average_is_the_single_channel() {
        let (sys, mut p) = paper(0.1);
        p.t0 = 0.0;
        let avg = channel_averaged(&sys, &p).unwrap();
        assert_eq!(avg.components().len(), 1);
        let single = channel_single(&sys, &p, 0.0).unwrap();
        assert_eq!(avg.to_superoperator().matrix(), single.to_superoperator().matrix());
    }

    #[test]
    fn node_doubling_converges() {
        let (sys, mut p) = paper(0.1);
        let a = channel_averaged(&sys, &p).unwrap().to_superoperator();
        p.quadrature_nodes = 41;
        let b = channel_averaged(&sys, &p).unwrap().to_superoperator();
        assert!(a.distance_frobenius(&b) < 1e-8);
    }

    #[test]
    fn factory_matches_direct_propagation() {
        let (sys, p) = paper(0.25);
        let f = ChannelFactory::new(&sys, &p, BathModel::Trivial, -6.0, 6.0, 1 << 16).unwrap();
        for x in [-5.9, -1.234, -0.6, 0.0, 0.31, 4.0] {
            let a = f.channel(x).unwrap().to_superoperator();
            let b = channel_single(&sys, &p, x).unwrap().to_superoperator();
            assert!(superop_distance(&a, &b) < 1e-10, "x = {x}");
        }
        let g = ChannelFactory::new(&sys, &p, BathModel::Randomized { omega: 1.7 }, -6.0, 6.0, 1 << 12)
            .unwrap();
        for x in [-1.1, 0.2] {
            let a = g.channel(x).unwrap().to_superoperator();
            let b = channel_randomized_bath(&sys, &p, 1.7, x).unwrap().to_superoperator();
            assert!(superop_distance(&a, &b) < 1e-10, "x = {x}");
        }
    }

    #[test]
    fn kls_tracks_the_collision_channel_to_fourth_order() {
        let (sys, p) = paper(0.0);
        let parts = SamplerParts::build(&sys, &p.jumps, &p.filter).unwrap();
        let gen = parts.generator(GeneratorKind::LambShift).unwrap();
        let mut q = p.clone();
        q.t0 = 0.0;
        let dist = |j: f64| {
            let q = q.with_j(j);
            let k = channel_single(&sys, &q, 0.0).unwrap().to_superoperator();
            let kls = channel_kls(&sys, &q, &gen).unwrap().to_superoperator();
            k.distance_frobenius(&kls)
        };
        let slope = (dist(0.1) / dist(0.05)).log2();
        assert!((slope - 4.0).abs() < 0.3, "{slope}");
    }

    #[test]
    fn detailed_balance_exponential_fixes_gibbs() {
        let (sys, p) = paper(0.0);
        let parts = SamplerParts::build(&sys, &p.jumps, &p.filter).unwrap();
        let gen = parts.generator(GeneratorKind::DetailedBalance).unwrap();
        let rho = gibbs_state(&sys, 1.0).unwrap();
        for j in [0.1, 0.5] {
            let e = gen.to_superoperator().exp(j * j).unwrap();
            let out = e.apply(rho.matrix());
            assert!(linalg::trace_norm(&(out - rho.matrix())).unwrap() < 1e-9);
        }
        let zero = channel_kls(&sys, &p, &gen).unwrap();
        let out = zero.apply(rho.matrix());
        assert!(linalg::trace_norm(&(out - rho.matrix())).unwrap() < 1e-12);
    }

    #[test]
    fn unit_ladder_doubles_coupling() {
        let (_, mut p) = paper(0.1);
        p.ladder = Ladder::Unit;
        assert_eq!(p.effective_coupling(), 0.2);
    }
}
