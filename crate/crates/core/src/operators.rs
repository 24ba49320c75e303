// Copyright 2026 Thermalsim Contributors
// SPDX-License-Identifier: Apache-2.0

//! Spin Hamiltonians, eigendecompositions, Bohr-frequency projections and Gibbs states.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg::{self, dagger, re, CMat, C64, I, ONE, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

pub fn pauli(p: Pauli) -> CMat {
    let m = match p {
        Pauli::I => [ONE, ZERO, ZERO, ONE],
        Pauli::X => [ZERO, ONE, ONE, ZERO],
        Pauli::Y => [ZERO, -I, I, ZERO],
        Pauli::Z => [ONE, ZERO, ZERO, -ONE],
    };
    Array2::from_shape_vec((2, 2), m.to_vec()).expect("2x2")
}

/// Place a single-qubit operator on `site` of an `n`-qubit register (site 0 is the leftmost factor).
pub fn embed(op: &CMat, site: usize, n: usize) -> CMat {
    let mut out = linalg::identity(1);
    for k in 0..n {
        let f = if k == site { op.clone() } else { linalg::identity(2) };
        out = linalg::kron(&out, &f);
    }
    out
}

pub fn pauli_on(p: Pauli, site: usize, n: usize) -> CMat {
    embed(&pauli(p), site, n)
}

/// Dense Hermitian matrix on a register of qubits.
#[derive(Debug, Clone)]
pub struct HermitianOperator {
    matrix: CMat,
}

impl HermitianOperator {
    pub fn new(matrix: CMat) -> Result<Self> {
        let d = matrix.nrows();
        if d == 0 || matrix.ncols() != d || !d.is_power_of_two() {
            return Err(Error::Dimension(format!(
                "expected a square matrix of power-of-two size, got {:?}",
                matrix.dim()
            )));
        }
        let scale = linalg::max_abs(matrix.view()).max(1.0);
        let r = linalg::hermiticity_residual(&matrix);
        if r > 1e-12 * scale {
            return Err(Error::InvalidInput(format!(
                "operator is not Hermitian (residual {r:.3e})"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }
}

/// `Σ_i Z_i Z_{i+1} + g X_i + h Z_i`, with the wrap-around bond only when `periodic`.
pub fn build_mixed_field_ising(n: usize, g: f64, h: f64, periodic: bool) -> Result<HermitianOperator> {
    if n == 0 {
        return Err(Error::InvalidInput("Ising chain needs at least one site".into()));
    }
    let d = 1usize << n;
    let mut m = Array2::<C64>::zeros((d, d));
    for i in 0..n {
        m = m + pauli_on(Pauli::X, i, n).mapv(|z| z * g) + pauli_on(Pauli::Z, i, n).mapv(|z| z * h);
    }
    // For n = 2 the wrap-around bond repeats the single open bond.
    let bonds = if periodic && n > 1 { n } else { n - 1 };
    for b in 0..bonds {
        let j = (b + 1) % n;
        m = m + pauli_on(Pauli::Z, b, n).dot(&pauli_on(Pauli::Z, j, n));
    }
    HermitianOperator::new(m)
}

/// One cluster of (numerically) equal Bohr frequencies.
#[derive(Debug, Clone)]
pub struct BohrCluster {
    pub nu: f64,
    pub pairs: Vec<(usize, usize)>,
}

/// Hamiltonian with its eigendecomposition and clustered Bohr frequencies.
#[derive(Debug, Clone)]
pub struct SpectralSystem {
    hamiltonian: HermitianOperator,
    energies: Array1<f64>,
    vectors: CMat,
    bohr: Vec<BohrCluster>,
    cluster_of_pair: Array2<usize>,
    tolerance: f64,
}

type Cluster = (Vec<f64>, Vec<(usize, usize)>);

/// Eigendecomposition with ascending energies and phase-fixed eigenvectors,
/// plus Bohr frequencies merged when within `delta_bohr` (relative to the spectral width).
pub fn spectral_decompose(h: &HermitianOperator, delta_bohr: f64) -> Result<SpectralSystem> {
    let (energies, mut vectors) = linalg::eigh(h.matrix())?;
    let d = energies.len();
    for j in 0..d {
        let mut col = vectors.column_mut(j);
        if let Some(z) = col.iter().copied().find(|z| z.norm() > 1e-12) {
            let phase = z.conj() / z.norm();
            col.mapv_inplace(|w| w * phase);
        }
    }
    let width = energies[d - 1] - energies[0];
    let tolerance = delta_bohr * width.max(1.0);

    let mut diffs: Vec<(f64, usize, usize)> = Vec::with_capacity(d * d);
    for a in 0..d {
        for b in 0..d {
            diffs.push((energies[a] - energies[b], a, b));
        }
    }
    diffs.sort_by(|x, y| x.0.total_cmp(&y.0));
    // Each cluster holds its frequencies and the level pairs that produced them.
    let mut clusters: Vec<Cluster> = Vec::new();
    for (w, a, b) in diffs {
        match clusters.last_mut() {
            Some((ws, ps)) if w - ws.last().copied().unwrap_or(w) <= tolerance => {
                ws.push(w);
                ps.push((a, b));
            }
            _ => clusters.push((vec![w], vec![(a, b)])),
        }
    }
    let means: Vec<f64> = clusters
        .iter()
        .map(|(ws, _)| ws.iter().sum::<f64>() / ws.len() as f64)
        .collect();
    let n = clusters.len();
    let mut bohr = Vec::with_capacity(n);
    let mut cluster_of_pair = Array2::zeros((d, d));
    for (k, (_, pairs)) in clusters.into_iter().enumerate() {
        // Mirror clusters get exactly opposite representatives.
        let nu = 0.5 * (means[k] - means[n - 1 - k]);
        for &(a, b) in &pairs {
            cluster_of_pair[[a, b]] = k;
        }
        bohr.push(BohrCluster { nu, pairs });
    }
    Ok(SpectralSystem {
        hamiltonian: h.clone(),
        energies,
        vectors,
        bohr,
        cluster_of_pair,
        tolerance,
    })
}

impl SpectralSystem {
    pub fn hamiltonian(&self) -> &HermitianOperator {
        &self.hamiltonian
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &Array1<f64> {
        &self.energies
    }

    pub fn vectors(&self) -> &CMat {
        &self.vectors
    }

    pub fn bohr_frequencies(&self) -> &[BohrCluster] {
        &self.bohr
    }

    pub fn bohr_tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Exact eigenvalue difference `E_a - E_b`.
    pub fn omega(&self, a: usize, b: usize) -> f64 {
        self.energies[a] - self.energies[b]
    }

    /// Clustered representative of `E_a - E_b`.
    pub fn bohr_of_pair(&self, a: usize, b: usize) -> f64 {
        self.bohr[self.cluster_of_pair[[a, b]]].nu
    }

    pub fn find_cluster(&self, nu: f64) -> Option<usize> {
        self.bohr
            .iter()
            .position(|c| (c.nu - nu).abs() <= self.tolerance.max(1e-12))
    }

    pub fn to_eigenbasis(&self, a: &CMat) -> CMat {
        dagger(&self.vectors).dot(a).dot(&self.vectors)
    }

    pub fn from_eigenbasis(&self, a: &CMat) -> CMat {
        self.vectors.dot(a).dot(&dagger(&self.vectors))
    }

    /// `Σ_{E1 - E2 ∈ ν} |E1⟩⟨E1|A|E2⟩⟨E2|`.
    pub fn bohr_project(&self, a: &CMat, nu: f64) -> Result<CMat> {
        if a.dim() != (self.dim(), self.dim()) {
            return Err(Error::Dimension(format!(
                "operator {:?} vs system dimension {}",
                a.dim(),
                self.dim()
            )));
        }
        let k = self
            .find_cluster(nu)
            .ok_or_else(|| Error::InvalidInput(format!("{nu} is not a Bohr frequency")))?;
        let ae = self.to_eigenbasis(a);
        let mut out = Array2::zeros(ae.dim());
        for &(i, j) in &self.bohr[k].pairs {
            out[[i, j]] = ae[[i, j]];
        }
        Ok(self.from_eigenbasis(&out))
    }

    /// `exp(-i H t)` from the stored spectrum.
    pub fn evolution(&self, t: f64) -> CMat {
        let phases = self.energies.mapv(|e| (-I * e * t).exp());
        linalg::from_spectrum(&self.vectors, &phases)
    }
}

/// Density matrix (Hermitian, unit trace, positive semidefinite).
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    matrix: CMat,
}

impl DensityMatrix {
    pub fn new(matrix: CMat) -> Result<Self> {
        let h = linalg::hermiticity_residual(&matrix);
        if h > 1e-10 {
            return Err(Error::Invariant(format!("density matrix not Hermitian ({h:.3e})")));
        }
        let tr = linalg::trace(&matrix);
        if (tr - ONE).norm() > 1e-10 {
            return Err(Error::Invariant(format!("density matrix trace {tr}")));
        }
        let min = linalg::eigvalsh(&matrix)?.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -1e-9 {
            return Err(Error::Invariant(format!(
                "density matrix has negative eigenvalue {min:.3e}"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self {
            matrix: linalg::identity(d).mapv(|z| z / d as f64),
        }
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn expectation(&self, o: &CMat) -> f64 {
        linalg::trace(&o.dot(&self.matrix)).re
    }
}

/// `e^{-βH} / Z` built from the spectrum with shifted exponents.
pub fn gibbs_state(sys: &SpectralSystem, beta: f64) -> Result<DensityMatrix> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::InvalidInput(format!("inverse temperature {beta}")));
    }
    let weights = gibbs_weights(sys.energies(), beta);
    let m = linalg::from_spectrum(sys.vectors(), &weights.mapv(re));
    DensityMatrix::new(linalg::hermitian_part(&m))
}

pub fn gibbs_weights(energies: &Array1<f64>, beta: f64) -> Array1<f64> {
    let e0 = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let w = energies.mapv(|e| (-beta * (e - e0)).exp());
    let z = w.sum();
    w / z
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn paper_system() -> SpectralSystem {
        let h = build_mixed_field_ising(2, 0.9045, 0.809, false).unwrap();
        spectral_decompose(&h, 1e-9).unwrap()
    }

    #[test]
    fn single_site_is_a_field() {
        let h = build_mixed_field_ising(1, 0.0, 1.0, false).unwrap();
        let sys = spectral_decompose(&h, 1e-9).unwrap();
        assert_abs_diff_eq!(sys.energies()[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(sys.energies()[1], 1.0, epsilon = 1e-14);
        let nus: Vec<f64> = sys.bohr_frequencies().iter().map(|c| c.nu).collect();
        assert_eq!(nus.len(), 3);
        assert_abs_diff_eq!(nus[0], -2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(nus[1], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(nus[2], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_empty_chain() {
        assert!(build_mixed_field_ising(0, 1.0, 1.0, false).is_err());
    }

    #[test]
    fn identity_has_only_zero_frequency() {
        let h = HermitianOperator::new(linalg::identity(4)).unwrap();
        let sys = spectral_decompose(&h, 1e-9).unwrap();
        assert_eq!(sys.bohr_frequencies().len(), 1);
        assert_eq!(sys.bohr_frequencies()[0].nu, 0.0);
        assert_eq!(sys.bohr_frequencies()[0].pairs.len(), 16);
    }

    #[test]
    fn two_site_spectrum_matches_reference_values() {
        // Reference eigenvalues from an independent extended-precision diagonalization.
        let expected = [-2.303343263, -1.0, 0.234036020, 3.069307243];
        let sys = paper_system();
        for (e, x) in sys.energies().iter().zip(expected) {
            assert_abs_diff_eq!(*e, x, epsilon = 1e-8);
        }
    }

    #[test]
    fn top_pair_resonates_near_8_86() {
        let sys = paper_system();
        let omega = sys.omega(3, 2);
        let k = omega * 8.86 / (2.0 * std::f64::consts::PI);
        assert!((k - k.round()).abs() / k.round() < 0.005);
        assert_eq!(k.round(), 4.0);
    }

    #[test]
    fn projection_of_x_under_z_field() {
        let h = HermitianOperator::new(pauli(Pauli::Z)).unwrap();
        let sys = spectral_decompose(&h, 1e-9).unwrap();
        let p = sys.bohr_project(&pauli(Pauli::X), 2.0).unwrap();
        // |+1⟩⟨-1| in the computational basis: eigenvector order is (-1, +1) = (|1⟩, |0⟩).
        assert_abs_diff_eq!(p[[0, 1]].norm(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p[[1, 0]].norm(), 0.0, epsilon = 1e-14);
        assert!(sys.bohr_project(&pauli(Pauli::X), 1.0).is_err());
    }

    #[test]
    fn projection_adjoint_symmetry_against_double_loop() {
        let sys = paper_system();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = linalg::random_matrix(4, &mut rng);
        for c in sys.bohr_frequencies() {
            let p = sys.bohr_project(&a, c.nu).unwrap();
            let q = sys.bohr_project(&dagger(&a), -c.nu).unwrap();
            assert!(linalg::max_abs((&dagger(&p) - &q).view()) < 1e-12);
            // Double loop over eigenpairs with exact differences.
            let mut oracle = Array2::<C64>::zeros((4, 4));
            for i in 0..4 {
                for j in 0..4 {
                    if (sys.omega(i, j) - c.nu).abs() < 1e-8 {
                        let vi = sys.vectors().column(i).to_owned();
                        let vj = sys.vectors().column(j).to_owned();
                        let amp = vi.mapv(|z| z.conj()).dot(&a.dot(&vj));
                        oracle = oracle + linalg::outer(&vi, &vj).mapv(|z| z * amp);
                    }
                }
            }
            assert!(linalg::max_abs((&p - &oracle).view()) < 1e-12);
        }
    }

    #[test]
    fn gibbs_limits() {
        let sys = paper_system();
        let r0 = gibbs_state(&sys, 0.0).unwrap();
        assert!(linalg::max_abs((r0.matrix() - &linalg::identity(4).mapv(|z| z / 4.0)).view()) < 1e-14);
        let hz = HermitianOperator::new(pauli(Pauli::Z)).unwrap();
        let sz = spectral_decompose(&hz, 1e-9).unwrap();
        let cold = gibbs_state(&sz, 50.0).unwrap();
        assert!(cold.matrix()[[1, 1]].re >= 1.0 - 1e-20);
    }

    #[test]
    fn gibbs_energy_matches_direct_exponential() {
        let sys = paper_system();
        let h = sys.hamiltonian().matrix();
        let e = linalg::expm(&h.mapv(|z| -z)).unwrap();
        let z = linalg::trace(&e);
        let oracle = (linalg::trace(&h.dot(&e)) / z).re;
        let rho = gibbs_state(&sys, 1.0).unwrap();
        assert_abs_diff_eq!(rho.expectation(h), oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(oracle, -1.8757, epsilon = 1e-4);
    }

    #[test]
    fn periodic_two_site_doubles_the_bond() {
        let open = build_mixed_field_ising(2, 0.5, 0.3, false).unwrap();
        let ring = build_mixed_field_ising(2, 0.5, 0.3, true).unwrap();
        let zz = pauli_on(Pauli::Z, 0, 2).dot(&pauli_on(Pauli::Z, 1, 2));
        assert!(linalg::max_abs((ring.matrix() - open.matrix() - zz).view()) < 1e-15);
        let three = build_mixed_field_ising(3, 0.0, 0.0, true).unwrap();
        assert_abs_diff_eq!(linalg::trace(&three.matrix().dot(three.matrix())).re, 3.0 * 8.0, epsilon = 1e-12);
    }
}
