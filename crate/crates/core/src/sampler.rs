// Copyright 2026 Thermalsim Contributors
// SPDX-License-Identifier: Apache-2.0

//! Filter function, jump operators, coherent terms and Lindblad generators.

use errorfunctions::RealErrorFunctions;
use ndarray::Array2;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{self, dagger, kron, re, CMat, C64, I, ZERO};
use crate::operators::{pauli_on, DensityMatrix, Pauli, SpectralSystem};
use crate::quad;

/// Gaussian filter `f(t) = √(2/(πσ²)) exp(-2(t - iβ/4)²/σ²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFilter {
    pub sigma_f: f64,
    pub beta: f64,
}

impl GaussianFilter {
    pub fn new(sigma_f: f64, beta: f64) -> Result<Self> {
        if !(sigma_f > 0.0 && sigma_f.is_finite()) {
            return Err(Error::InvalidInput(format!("filter width {sigma_f}")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidInput(format!("inverse temperature {beta}")));
        }
        Ok(Self { sigma_f, beta })
    }

    pub fn value(&self, t: f64) -> C64 {
        let s2 = self.sigma_f * self.sigma_f;
        let z = C64::new(t, -self.beta / 4.0);
        ((-2.0 / s2) * z * z).exp() * (2.0 / (PI * s2)).sqrt()
    }

    /// `∫ f(t) e^{-iνt} dt = e^{βν/4} e^{-σ²ν²/8}`.
    pub fn fourier(&self, nu: f64) -> f64 {
        (self.beta * nu / 4.0 - self.sigma_f * self.sigma_f * nu * nu / 8.0).exp()
    }

    /// Truncation window used by every time-domain integral.
    pub fn window(&self) -> (f64, f64) {
        let w = 12.0 * self.sigma_f + self.beta;
        (-w, w)
    }

    /// Time-domain quadrature of [`Self::fourier`].
    pub fn fourier_quadrature(&self, nu: f64) -> Result<C64> {
        let (a, b) = self.window();
        quad::simpson_refined(
            |t| self.value(t) * (-I * nu * t).exp(),
            a,
            b,
            256,
            1e-12,
            10,
            "filter Fourier quadrature",
        )
    }
}

/// Coupling operators `A_a`, closed under Hermitian conjugation.
#[derive(Debug, Clone)]
pub struct JumpSet {
    labels: Vec<String>,
    ops: Vec<CMat>,
}

impl JumpSet {
    pub fn new(entries: Vec<(String, CMat)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidInput("empty jump set".into()));
        }
        let d = entries[0].1.nrows();
        for (label, op) in &entries {
            if op.dim() != (d, d) {
                return Err(Error::Dimension(format!("jump {label} has shape {:?}", op.dim())));
            }
        }
        for (label, op) in &entries {
            let adj = dagger(op);
            let closed = entries
                .iter()
                .any(|(_, other)| linalg::max_abs((&adj - other).view()) < 1e-12);
            if !closed {
                return Err(Error::InvalidInput(format!(
                    "jump set is not closed under conjugation (missing adjoint of {label})"
                )));
            }
        }
        let (labels, ops) = entries.into_iter().unzip();
        Ok(Self { labels, ops })
    }

    /// `X_a + Z_a` on every site, optionally rescaled to unit operator norm.
    pub fn x_plus_z(n: usize, normalize: bool) -> Result<Self> {
        let scale = if normalize { 1.0 / 2f64.sqrt() } else { 1.0 };
        let entries = (0..n)
            .map(|a| {
                let op = (pauli_on(Pauli::X, a, n) + pauli_on(Pauli::Z, a, n)).mapv(|z| z * scale);
                (format!("X{a}+Z{a}"), op)
            })
            .collect();
        Self::new(entries)
    }

    pub fn ops(&self) -> &[CMat] {
        &self.ops
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.ops[0].nrows()
    }

    pub fn max_operator_norm(&self) -> Result<f64> {
        self.ops
            .iter()
            .try_fold(0.0f64, |m, a| Ok(m.max(linalg::operator_norm(a)?)))
    }
}

/// Linear map on `D×D` matrices, stored as a `D²×D²` matrix acting on column-stacked vectors.
#[derive(Debug, Clone)]
pub struct Superoperator {
    dim: usize,
    matrix: CMat,
}

impl Superoperator {
    pub fn new(dim: usize, matrix: CMat) -> Result<Self> {
        if matrix.dim() != (dim * dim, dim * dim) {
            return Err(Error::Dimension(format!(
                "superoperator on dimension {dim} needs a {0}x{0} matrix, got {1:?}",
                dim * dim,
                matrix.dim()
            )));
        }
        Ok(Self { dim, matrix })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            matrix: Array2::zeros((dim * dim, dim * dim)),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            matrix: linalg::identity(dim * dim),
        }
    }

    /// `ρ ↦ Σ_k E_k ρ E_k†`.
    pub fn from_kraus(ops: &[CMat]) -> Result<Self> {
        let d = ops
            .first()
            .ok_or_else(|| Error::InvalidInput("no Kraus operators".into()))?
            .nrows();
        let mut m = Array2::zeros((d * d, d * d));
        for e in ops {
            if e.dim() != (d, d) {
                return Err(Error::Dimension(format!("Kraus operator {:?}", e.dim())));
            }
            m = m + kron(&e.mapv(|z| z.conj()), e);
        }
        Ok(Self { dim: d, matrix: m })
    }

    /// `ρ ↦ U ρ U†`.
    pub fn conjugation(u: &CMat) -> Self {
        Self {
            dim: u.nrows(),
            matrix: kron(&u.mapv(|z| z.conj()), u),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn apply(&self, x: &CMat) -> CMat {
        linalg::unvec_col(&self.matrix.dot(&linalg::vec_col(x)), self.dim)
    }

    /// The map `x ↦ next(self(x))`.
    pub fn then(&self, next: &Superoperator) -> Superoperator {
        Self {
            dim: self.dim,
            matrix: next.matrix.dot(&self.matrix),
        }
    }

    pub fn scaled(&self, s: f64) -> Superoperator {
        Self {
            dim: self.dim,
            matrix: self.matrix.mapv(|z| z * s),
        }
    }

    pub fn add_scaled(&mut self, other: &Superoperator, w: f64) {
        self.matrix.scaled_add(re(w), &other.matrix);
    }

    /// `exp(s · self)`.
    pub fn exp(&self, s: f64) -> Result<Superoperator> {
        Ok(Self {
            dim: self.dim,
            matrix: linalg::expm(&self.matrix.mapv(|z| z * s))?,
        })
    }

    /// Adjoint with respect to the Frobenius inner product.
    pub fn adjoint(&self) -> Superoperator {
        Self {
            dim: self.dim,
            matrix: dagger(&self.matrix),
        }
    }

    /// Choi matrix `Σ_ij E_ij ⊗ S(E_ij)`, row index `i·D + a`.
    pub fn choi(&self) -> CMat {
        let d = self.dim;
        Array2::from_shape_fn((d * d, d * d), |(r, c)| {
            let (i, a) = (r / d, r % d);
            let (j, b) = (c / d, c % d);
            self.matrix[[a + d * b, i + d * j]]
        })
    }

    pub fn choi_min_eigenvalue(&self) -> Result<f64> {
        let w = linalg::eigvalsh(&self.choi())?;
        Ok(w.iter().cloned().fold(f64::INFINITY, f64::min))
    }

    /// `max |Tr S(E_ij) - δ_ij|` over matrix units.
    pub fn trace_preservation_residual(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for col in 0..d * d {
            let tr: C64 = (0..d).map(|a| self.matrix[[a + d * a, col]]).sum();
            let target = if col % d == col / d { 1.0 } else { 0.0 };
            worst = worst.max((tr - re(target)).norm());
        }
        worst
    }

    /// Kraus form from the Choi eigendecomposition; eigenvalues below `cutoff` are dropped,
    /// eigenvalues below `-negative_tolerance` are reported as an error.
    pub fn to_kraus(&self, cutoff: f64, negative_tolerance: f64) -> Result<Vec<CMat>> {
        let d = self.dim;
        let (w, v) = linalg::eigh(&self.choi())?;
        let min = w.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -negative_tolerance {
            return Err(Error::Invariant(format!(
                "map is not completely positive: Choi eigenvalue {min:.3e}"
            )));
        }
        let mut ops = Vec::new();
        for (k, &lam) in w.iter().enumerate() {
            if lam <= cutoff {
                continue;
            }
            let s = lam.sqrt();
            ops.push(Array2::from_shape_fn((d, d), |(a, i)| v[[i * d + a, k]] * s));
        }
        Ok(ops)
    }

    pub fn distance_frobenius(&self, other: &Superoperator) -> f64 {
        linalg::frobenius(&(&self.matrix - &other.matrix))
    }
}

/// Jump operators plus a Hermitian coherent term.
#[derive(Debug, Clone)]
pub struct LindbladGenerator {
    jumps: Vec<CMat>,
    coherent: CMat,
}

impl LindbladGenerator {
    pub fn new(jumps: Vec<CMat>, coherent: CMat) -> Result<Self> {
        let d = coherent.nrows();
        if jumps.iter().any(|l| l.dim() != (d, d)) || coherent.ncols() != d {
            return Err(Error::Dimension("generator operators disagree in shape".into()));
        }
        let scale = linalg::max_abs(coherent.view()).max(1.0);
        let r = linalg::hermiticity_residual(&coherent);
        if r > 1e-10 * scale {
            return Err(Error::Invariant(format!("coherent term not Hermitian ({r:.3e})")));
        }
        Ok(Self {
            jumps,
            coherent: linalg::hermitian_part(&coherent),
        })
    }

    pub fn dim(&self) -> usize {
        self.coherent.nrows()
    }

    pub fn jumps(&self) -> &[CMat] {
        &self.jumps
    }

    pub fn coherent(&self) -> &CMat {
        &self.coherent
    }

    /// Dissipative part only: `Σ L ρ L† - ½{L†L, ρ}`.
    pub fn dissipate(&self, rho: &CMat) -> CMat {
        let mut out = Array2::zeros(rho.dim());
        for l in &self.jumps {
            let ld = dagger(l);
            let ldl = ld.dot(l);
            out = out + l.dot(rho).dot(&ld) - (ldl.dot(rho) + rho.dot(&ldl)).mapv(|z| z * 0.5);
        }
        out
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        self.dissipate(rho) - linalg::commutator(&self.coherent, rho).mapv(|z| z * I)
    }

    pub fn to_superoperator(&self) -> Superoperator {
        let d = self.dim();
        let id = linalg::identity(d);
        let g = &self.coherent;
        let mut m = (kron(&id, g) - kron(&g.t().to_owned(), &id)).mapv(|z| -I * z);
        for l in &self.jumps {
            let ldl = dagger(l).dot(l);
            m = m + kron(&l.mapv(|z| z.conj()), l)
                - (kron(&id, &ldl) + kron(&ldl.t().to_owned(), &id)).mapv(|z| z * 0.5);
        }
        Superoperator { dim: d, matrix: m }
    }
}

/// `L_a = ∫ f(t) A_a(t) dt = Σ_ν f̂(-ν) A_ν`, with `A(t) = e^{iHt} A e^{-iHt}`.
pub fn build_jump_operators(
    sys: &SpectralSystem,
    jumps: &JumpSet,
    filter: &GaussianFilter,
) -> Result<Vec<CMat>> {
    check_dim(sys, jumps)?;
    let d = sys.dim();
    Ok(jumps
        .ops()
        .iter()
        .map(|a| {
            let ae = sys.to_eigenbasis(a);
            let le = Array2::from_shape_fn((d, d), |(i, j)| {
                ae[[i, j]] * filter.fourier(-sys.bohr_of_pair(i, j))
            });
            sys.from_eigenbasis(&le)
        })
        .collect())
}

/// Jump operator by time-domain Simpson quadrature of `∫ f(t) A(t) dt`, elementwise in the eigenbasis.
pub fn jump_operator_quadrature(
    sys: &SpectralSystem,
    a: &CMat,
    filter: &GaussianFilter,
) -> Result<CMat> {
    let d = sys.dim();
    let ae = sys.to_eigenbasis(a);
    let (lo, hi) = filter.window();
    let mut le = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            let w = sys.omega(i, j);
            let v = quad::simpson_refined(
                |t| filter.value(t) * (I * w * t).exp(),
                lo,
                hi,
                512,
                1e-12,
                10,
                "jump operator quadrature",
            )?;
            le[[i, j]] = ae[[i, j]] * v;
        }
    }
    Ok(sys.from_eigenbasis(&le))
}

/// `G_DB = (i/2) Σ_a Σ_ν tanh(βν/4) (L_a† L_a)_ν`.
pub fn build_coherent_db(sys: &SpectralSystem, l_ops: &[CMat], filter: &GaussianFilter) -> CMat {
    let d = sys.dim();
    let mut m = Array2::<C64>::zeros((d, d));
    for l in l_ops {
        let le = sys.to_eigenbasis(l);
        m = m + dagger(&le).dot(&le);
    }
    let g = Array2::from_shape_fn((d, d), |(i, k)| {
        m[[i, k]] * I * 0.5 * (filter.beta * sys.bohr_of_pair(i, k) / 4.0).tanh()
    });
    sys.from_eigenbasis(&g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambShiftMethod {
    FrequencyDomain,
    TimeQuadrature,
}

/// `∬ sign(t1 - t2) f(t1) e^{iν1 t1} f*(t2) e^{iν2 t2} dt1 dt2` in closed form (Dawson kernel).
pub fn lamb_shift_kernel(filter: &GaussianFilter, nu1: f64, nu2: f64) -> C64 {
    let s = filter.sigma_f;
    let b = filter.beta;
    let kappa = 0.5 * (nu1 - nu2) + b / (s * s);
    let envelope = (-s * s * (nu1 + nu2).powi(2) / 16.0 + b * b / (4.0 * s * s)).exp();
    I * (2.0 / PI.sqrt()) * envelope * (kappa * s / 2.0).dawson()
}

/// Same double integral by nested Simpson quadrature. The sign kernel is handled through the
/// cumulative inner integral `P(t1) = 2 C(t1) - C(∞)`.
pub fn lamb_shift_kernel_quadrature(filter: &GaussianFilter, nu1: f64, nu2: f64) -> Result<C64> {
    let (lo, hi) = filter.window();
    let inner = |t: f64| filter.value(t).conj() * (I * nu2 * t).exp();
    let outer = |t: f64| filter.value(t) * (I * nu1 * t).exp();
    let evaluate = |intervals: usize| {
        let h = (hi - lo) / intervals as f64;
        let c = quad::cumulative_simpson(inner, lo, h, intervals + 1);
        let total = c[intervals];
        let mut acc = ZERO;
        for (k, ck) in c.iter().enumerate() {
            let w = if k == 0 || k == intervals {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += outer(lo + k as f64 * h) * (*ck * 2.0 - total) * w;
        }
        acc * (h / 3.0)
    };
    let mut n = 512;
    let mut prev = evaluate(n);
    let mut change = f64::INFINITY;
    for _ in 0..8 {
        n *= 2;
        let next = evaluate(n);
        change = (next - prev).norm();
        prev = next;
        if change < 1e-9 {
            return Ok(prev);
        }
    }
    Err(Error::NonConvergence {
        what: "Lamb-shift double integral".into(),
        residual: change,
    })
}

/// `G_LS = -(1/2i) Σ_a ∬ sign(t1 - t2) f*(t2) f(t1) A_a†(t2) A_a(t1) dt1 dt2`.
pub fn build_coherent_ls(
    sys: &SpectralSystem,
    jumps: &JumpSet,
    filter: &GaussianFilter,
    method: LambShiftMethod,
) -> Result<CMat> {
    check_dim(sys, jumps)?;
    let d = sys.dim();
    let mut kernel = Array2::<C64>::zeros((d * d, d));
    // kernel[(i*d + j), k] = K(ω_jk, ω_ij)
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                let (nu1, nu2) = (sys.omega(j, k), sys.omega(i, j));
                kernel[[i * d + j, k]] = match method {
                    LambShiftMethod::FrequencyDomain => lamb_shift_kernel(filter, nu1, nu2),
                    LambShiftMethod::TimeQuadrature => lamb_shift_kernel_quadrature(filter, nu1, nu2)?,
                };
            }
        }
    }
    let prefactor = -1.0 / (2.0 * I);
    let mut g = Array2::<C64>::zeros((d, d));
    for a in jumps.ops() {
        let ae = sys.to_eigenbasis(a);
        let ad = dagger(&ae);
        for i in 0..d {
            for k in 0..d {
                let mut acc = ZERO;
                for j in 0..d {
                    acc += ad[[i, j]] * ae[[j, k]] * kernel[[i * d + j, k]];
                }
                g[[i, k]] += prefactor * acc;
            }
        }
    }
    Ok(sys.from_eigenbasis(&g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    DetailedBalance,
    LambShift,
}

/// All ingredients of both generators for one system, filter and jump set.
#[derive(Debug, Clone)]
pub struct SamplerParts {
    pub jumps: Vec<CMat>,
    pub g_db: CMat,
    pub g_ls: CMat,
}

impl SamplerParts {
    pub fn build(sys: &SpectralSystem, jumps: &JumpSet, filter: &GaussianFilter) -> Result<Self> {
        let l = build_jump_operators(sys, jumps, filter)?;
        let g_db = build_coherent_db(sys, &l, filter);
        let g_ls = build_coherent_ls(sys, jumps, filter, LambShiftMethod::FrequencyDomain)?;
        Ok(Self { jumps: l, g_db, g_ls })
    }

    /// `ΔG = G_LS - G_DB`.
    pub fn delta_g(&self) -> CMat {
        &self.g_ls - &self.g_db
    }

    pub fn generator(&self, kind: GeneratorKind) -> Result<LindbladGenerator> {
        let g = match kind {
            GeneratorKind::DetailedBalance => self.g_db.clone(),
            GeneratorKind::LambShift => self.g_ls.clone(),
        };
        LindbladGenerator::new(self.jumps.clone(), g)
    }
}

pub fn assemble_generator(
    kind: GeneratorKind,
    sys: &SpectralSystem,
    jumps: &JumpSet,
    filter: &GaussianFilter,
) -> Result<LindbladGenerator> {
    SamplerParts::build(sys, jumps, filter)?.generator(kind)
}

/// `‖ℒ† - Γ⁻¹∘ℒ∘Γ‖_F` with `Γ[X] = ρ^{1/2} X ρ^{1/2}`.
pub fn kms_residual(gen: &LindbladGenerator, rho: &DensityMatrix) -> Result<f64> {
    let (w, v) = linalg::eigh(rho.matrix())?;
    let min = w.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 1e-300 {
        return Err(Error::InvalidInput(format!(
            "reference state is rank deficient (smallest eigenvalue {min:.3e})"
        )));
    }
    let sqrt = linalg::from_spectrum(&v, &w.mapv(|x| re(x.sqrt())));
    let isqrt = linalg::from_spectrum(&v, &w.mapv(|x| re(1.0 / x.sqrt())));
    let gamma = kron(&sqrt.t().to_owned(), &sqrt);
    let gamma_inv = kron(&isqrt.t().to_owned(), &isqrt);
    let l = gen.to_superoperator();
    let rhs = gamma_inv.dot(l.matrix()).dot(&gamma);
    Ok(linalg::frobenius(&(dagger(l.matrix()) - rhs)))
}

fn check_dim(sys: &SpectralSystem, jumps: &JumpSet) -> Result<()> {
    if jumps.dim() != sys.dim() {
        return Err(Error::Dimension(format!(
            "jump operators act on dimension {}, system has {}",
            jumps.dim(),
            sys.dim()
        )));
    }
    Ok(())
}
