// Copyright 2026 Thermalsim Contributors
// SPDX-License-Identifier: Apache-2.0

//! Fixed points, spectral gaps, perturbative fixed-point corrections and bound diagnostics.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::collision::ProtocolParams;
use crate::error::{Error, Result};
use crate::linalg::{self, dagger, kron, re, CMat, CVec, C64, I, ONE, ZERO};
use crate::operators::{gibbs_state, DensityMatrix, SpectralSystem};
use crate::sampler::{LindbladGenerator, SamplerParts, Superoperator};

/// Eigenvalues within this distance of 1 count as a fixed point.
pub const FIXED_POINT_TOLERANCE: f64 = 1e-8;

/// Superoperators larger than this use a linear solve instead of a full eigendecomposition.
const EIG_LIMIT: usize = 1024;

/// Unique fixed point of a channel, Hermitized and normalized to unit trace.
pub fn fixed_point(channel: &Superoperator) -> Result<DensityMatrix> {
    let d = channel.dim();
    let vec = if d * d <= EIG_LIMIT {
        fixed_vector_eig(channel)?
    } else {
        fixed_vector_solve(channel)?
    };
    let m = linalg::hermitian_part(&linalg::unvec_col(&vec, d));
    let tr = linalg::trace(&m).re;
    if tr.abs() < 1e-300 {
        return Err(Error::Invariant("fixed point has zero trace".into()));
    }
    DensityMatrix::new(m.mapv(|z| z / tr))
}

fn fixed_vector_eig(channel: &Superoperator) -> Result<CVec> {
    let (w, v) = linalg::eig(channel.matrix())?;
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| (w[a] - ONE).norm().total_cmp(&(w[b] - ONE).norm()));
    let best = order[0];
    let gap = (w[best] - ONE).norm();
    if gap > FIXED_POINT_TOLERANCE {
        return Err(Error::Invariant(format!(
            "no eigenvalue within {FIXED_POINT_TOLERANCE:e} of 1 (closest is {})",
            w[best]
        )));
    }
    if order.len() > 1 && (w[order[1]] - ONE).norm() <= FIXED_POINT_TOLERANCE {
        return Err(Error::DegenerateFixedPoint(format!(
            "eigenvalues {} and {} both lie within {FIXED_POINT_TOLERANCE:e} of 1",
            w[best], w[order[1]]
        )));
    }
    Ok(v.column(best).to_owned())
}

/// Solve `(S - 1) v = 0` with one equation replaced by `Tr v = 1`.
fn fixed_vector_solve(channel: &Superoperator) -> Result<CVec> {
    let d = channel.dim();
    let n = d * d;
    let mut a = channel.matrix() - &linalg::identity(n);
    for j in 0..n {
        a[[0, j]] = if j % d == j / d { ONE } else { ZERO };
    }
    let mut b = Array1::zeros(n);
    b[0] = ONE;
    let v = linalg::inverse(&a)?.dot(&b);
    let residual = (channel.matrix().dot(&v) - &v).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if residual > FIXED_POINT_TOLERANCE {
        return Err(Error::DegenerateFixedPoint(format!("linear solve residual {residual:.3e}")));
    }
    Ok(v)
}

/// `‖ρ₁ - ρ₂‖₁`.
pub fn trace_distance(a: &CMat, b: &CMat) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    linalg::trace_norm_hermitian(&linalg::hermitian_part(&(a - b)))
}

/// `ρ ↦ (1 - p) ρ + p Tr(ρ) I/D`.
pub fn depolarizing(d: usize, p: f64) -> Superoperator {
    let n = d * d;
    let mut m = linalg::identity(n).mapv(|z| z * (1.0 - p));
    for i in 0..d {
        for j in 0..d {
            m[[i + d * i, j + d * j]] += re(p / d as f64);
        }
    }
    Superoperator::new(d, m).expect("square by construction")
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub lambda_gap: f64,
    pub s2: f64,
    #[serde(skip)]
    pub fixed_point: DensityMatrix,
    pub mixing_bound: f64,
    pub min_fixed_eigenvalue: f64,
    pub epsilon: f64,
}

/// Gap `1 - s₂` of `ρ^{-1/4} 𝒦[ρ^{1/4} · ρ^{1/4}] ρ^{-1/4}` and the mixing-time bound
/// `log(2‖ρ^{-1/2}‖/ε)/λ_gap`.
pub fn spectral_gap(channel: &Superoperator, rho_fix: &DensityMatrix, epsilon: f64) -> Result<GapReport> {
    let (w, v) = linalg::eigh(rho_fix.matrix())?;
    let min = w.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 1e-12 {
        return Err(Error::InvalidInput(format!(
            "fixed point is rank deficient (smallest eigenvalue {min:.3e})"
        )));
    }
    let floored = w.mapv(|x| x.max(1e-14));
    let power = |p: f64| linalg::from_spectrum(&v, &floored.mapv(|x| re(x.powf(p))));
    let (q, qi) = (power(0.25), power(-0.25));
    let left = kron(&qi.t().to_owned(), &qi);
    let right = kron(&q.t().to_owned(), &q);
    let sym = left.dot(channel.matrix()).dot(&right);
    let mut s = linalg::singular_values(&sym)?.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let s2 = s.get(1).copied().unwrap_or(0.0);
    let lambda_gap = 1.0 - s2;
    let mixing_bound = (2.0 / min.sqrt() / epsilon).ln() / lambda_gap;
    Ok(GapReport {
        lambda_gap,
        s2,
        fixed_point: rho_fix.clone(),
        mixing_bound,
        min_fixed_eigenvalue: min,
        epsilon,
    })
}

/// First-order correction `σ` with `ρ̃ = ρ_β + J² σ`.
#[derive(Debug, Clone)]
pub struct SigmaCorrection {
    pub matrix: CMat,
    pub eigenbasis: CMat,
    pub trace_norm: f64,
    pub rho_tilde: CMat,
    pub min_denominator: f64,
}

/// `σ_ab = -i D_ab [ΔG̃, ρ_β]_ab / (1 - D_ab)` with `D_ab = e^{-ω²T₀²/4 - iωT}`,
/// `ΔG̃_ab = e^{iω_ab T/2} ΔG_ab` in the energy eigenbasis, and `σ_aa = 0`.
pub fn approximate_fixed_point(
    sys: &SpectralSystem,
    parts: &SamplerParts,
    params: &ProtocolParams,
    floor: f64,
) -> Result<SigmaCorrection> {
    let d = sys.dim();
    let beta = params.filter.beta;
    let rho = gibbs_state(sys, beta)?;
    let p = crate::operators::gibbs_weights(sys.energies(), beta);
    let dg = sys.to_eigenbasis(&parts.delta_g());
    let mut sigma = Array2::<C64>::zeros((d, d));
    let mut min_den = f64::INFINITY;
    for a in 0..d {
        for b in 0..d {
            if a == b {
                continue;
            }
            let w = sys.omega(a, b);
            let damp = (-w * w * params.t0 * params.t0 / 4.0).exp();
            let dab = (-I * w * params.t).exp() * damp;
            let den = ONE - dab;
            min_den = min_den.min(den.norm());
            if den.norm() < floor {
                return Err(Error::Resonance {
                    a,
                    b,
                    omega: w,
                    magnitude: den.norm(),
                });
            }
            let comm = dg[[a, b]] * (I * w * params.t / 2.0).exp() * (p[b] - p[a]);
            sigma[[a, b]] = -I * dab * comm / den;
        }
    }
    let matrix = sys.from_eigenbasis(&sigma);
    let je = params.effective_coupling();
    let rho_tilde = rho.matrix() + &matrix.mapv(|z| z * je * je);
    Ok(SigmaCorrection {
        trace_norm: linalg::trace_norm(&matrix)?,
        matrix,
        eigenbasis: sigma,
        rho_tilde,
        min_denominator: min_den,
    })
}

#[derive(Debug, Clone)]
pub struct ResonanceSolution {
    pub resonant_pairs: Vec<(usize, usize)>,
    pub rho0: DensityMatrix,
    /// `ρ^(0)` in the energy eigenbasis (ascending energies).
    pub rho0_eigenbasis: CMat,
    pub residual: f64,
    pub null_dimension: usize,
}

/// Degenerate perturbation theory at a stroboscopic resonance: the operator supported on
/// pairs with `|e^{iω_ab T} - 1| < δ_res` (the diagonal included) annihilated there by the
/// frame-shifted generator `𝒰(-T/2) ℒ 𝒰(T/2)`, with unit trace.
pub fn resonance_solve(
    sys: &SpectralSystem,
    gen: &LindbladGenerator,
    t: f64,
    delta_res: f64,
) -> Result<ResonanceSolution> {
    let d = sys.dim();
    let half = sys.evolution(t / 2.0);
    let forward = Superoperator::conjugation(&half);
    let backward = Superoperator::conjugation(&dagger(&half));
    let shifted = forward.then(&gen.to_superoperator()).then(&backward);
    let v = sys.vectors();
    let p = kron(&v.mapv(|z| z.conj()), v);
    let le = dagger(&p).dot(shifted.matrix()).dot(&p);

    let mut pairs = Vec::new();
    let mut idx = Vec::new();
    for j in 0..d {
        for i in 0..d {
            if ((I * sys.omega(i, j) * t).exp() - ONE).norm() < delta_res {
                idx.push(i + d * j);
                if i != j {
                    pairs.push((i, j));
                }
            }
        }
    }
    let k = idx.len();
    let m = Array2::from_shape_fn((k, k), |(r, c)| le[[idx[r], idx[c]]]);
    let sv = linalg::singular_values(&m)?;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let null_dimension = sv.iter().filter(|&&s| s <= 1e-9 * smax.max(1e-300)).count() + (k - sv.len());
    if null_dimension != 1 {
        return Err(Error::DegenerateFixedPoint(format!(
            "projected generator has a {null_dimension}-dimensional null space"
        )));
    }
    let mut a = Array2::<C64>::zeros((k + 1, k));
    a.slice_mut(ndarray::s![..k, ..]).assign(&m);
    for (c, &ix) in idx.iter().enumerate() {
        if ix % d == ix / d {
            a[[k, c]] = ONE;
        }
    }
    let mut b = Array1::zeros(k + 1);
    b[k] = ONE;
    let (sol, _) = linalg::least_squares(&a, &b)?;
    let residual = m.dot(&sol).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut full = Array1::zeros(d * d);
    for (c, &ix) in idx.iter().enumerate() {
        full[ix] = sol[c];
    }
    let r = linalg::hermitian_part(&linalg::unvec_col(&full, d));
    let tr = linalg::trace(&r).re;
    let r = r.mapv(|z| z / tr);
    let min = linalg::eigvalsh(&r)?.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-6 {
        return Err(Error::Invariant(format!("resonance solution has eigenvalue {min:.3e}")));
    }
    let lab = sys.from_eigenbasis(&r);
    let rho0 = DensityMatrix::new(clip_to_state(&lab)?)?;
    Ok(ResonanceSolution {
        resonant_pairs: pairs,
        rho0,
        rho0_eigenbasis: r,
        residual,
        null_dimension,
    })
}

/// Remove negative eigenvalues no larger than the solver tolerance so the state passes the
/// density-matrix checks; anything larger has been rejected by the caller.
fn clip_to_state(m: &CMat) -> Result<CMat> {
    let (w, v) = linalg::eigh(m)?;
    let w = w.mapv(|x| x.max(0.0));
    let s: f64 = w.sum();
    Ok(linalg::from_spectrum(&v, &w.mapv(|x| re(x / s))))
}

/// Structural terms of the fixed-point error bound with every unspecified constant set to 1.
/// These are order-of-magnitude diagnostics, not certified bounds.
#[derive(Debug, Clone, Serialize)]
pub struct Theorem1Terms {
    pub constants: &'static str,
    pub two_epsilon: f64,
    pub tail: f64,
    pub sigma_term: f64,
    pub channel_j2: f64,
    pub lindblad_j2: f64,
    pub total: f64,
}

pub fn theorem1_terms(params: &ProtocolParams, epsilon: f64, t_mix: f64) -> Theorem1Terms {
    let nb = params.jumps.len() as f64;
    let beta = params.filter.beta;
    let s = params.filter.sigma_f;
    let j2 = params.effective_coupling().powi(2);
    let (t, t0) = (params.t, params.t0);
    let poly = beta / s.powi(3) * t.powi(6) / t0.powi(4);
    let two_epsilon = 2.0 * epsilon;
    let tail = t_mix * nb * (beta * beta / (4.0 * s * s)).exp() * (-t * t / (2.0 * s * s + 4.0 * t0 * t0)).exp();
    let sigma_term = j2 * nb * poly * (9.0 * beta * beta / (4.0 * s * s)).exp();
    let channel_j2 = t_mix * j2 * nb * nb * (beta * beta / (2.0 * s * s)).exp();
    let lindblad_j2 = t_mix * j2 * nb * nb * (1.0 + poly) * (5.0 * beta * beta / (2.0 * s * s)).exp();
    Theorem1Terms {
        constants: "all big-O constants set to 1",
        two_epsilon,
        tail,
        sigma_term,
        channel_j2,
        lindblad_j2,
        total: two_epsilon + tail + sigma_term + channel_j2 + lindblad_j2,
    }
}

/// Lower estimate of `‖Φ‖_{1→1}`: maximum over a trace-normalized Hermitian operator basis and
/// `probes` Haar-random pure states drawn from `seed`.
pub fn one_to_one_norm_estimate(map: &Superoperator, probes: usize, seed: u64) -> Result<f64> {
    let d = map.dim();
    let mut best: f64 = 0.0;
    let mut consider = |x: &CMat| -> Result<()> {
        let out = map.apply(x);
        best = best.max(linalg::trace_norm(&out)? / linalg::trace_norm(x)?);
        Ok(())
    };
    for i in 0..d {
        for j in i..d {
            let mut x = Array2::<C64>::zeros((d, d));
            if i == j {
                x[[i, i]] = ONE;
                consider(&x)?;
            } else {
                x[[i, j]] = re(0.5);
                x[[j, i]] = re(0.5);
                consider(&x)?;
                x[[i, j]] = -I * 0.5;
                x[[j, i]] = I * 0.5;
                consider(&x)?;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..probes {
        consider(&linalg::random_pure_state(d, &mut rng))?;
    }
    Ok(best)
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    pub lhs: f64,
    pub rhs: f64,
    pub channel_distance: f64,
    pub holds: bool,
}

/// Check `‖ρ₁ - ρ₂‖₁ ≤ ε + τ₁ ‖𝒦₁ - 𝒦₂‖_{1→1}` with the norm estimated from 200 probe states.
pub fn lemma_inequality_check(
    k1: &Superoperator,
    k2: &Superoperator,
    epsilon: f64,
    tau1: u64,
) -> Result<LemmaReport> {
    let r1 = fixed_point(k1)?;
    let r2 = fixed_point(k2)?;
    let diff = Superoperator::new(k1.dim(), k1.matrix() - k2.matrix())?;
    let channel_distance = one_to_one_norm_estimate(&diff, 200, 0x5eed)?;
    let lhs = trace_distance(r1.matrix(), r2.matrix())?;
    let rhs = epsilon + tau1 as f64 * channel_distance;
    Ok(LemmaReport {
        lhs,
        rhs,
        channel_distance,
        holds: lhs <= rhs,
    })
}
