// Copyright 2026 Thermalsim Contributors
// SPDX-License-Identifier: Apache-2.0

//! Dense complex linear algebra helpers.
//!
//! Vectorization is column stacking throughout the crate: `vec(X)[i + D*j] = X[i, j]`,
//! so `vec(A X B) = (Bᵀ ⊗ A) vec(X)` and the map `X ↦ L X L†` is `conj(L) ⊗ L`.

use ndarray::{s, Array1, Array2, ArrayView2, ShapeBuilder};
use ndarray_linalg::{Eig, Eigh, Inverse, Norm, SVD, UPLO};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = Array2<C64>;
pub type CVec = Array1<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn identity(n: usize) -> CMat {
    Array2::eye(n)
}

pub fn dagger(a: &CMat) -> CMat {
    a.t().mapv(|z| z.conj())
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == ZERO {
                continue;
            }
            out.slice_mut(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc])
                .assign(&b.mapv(|z| z * aij));
        }
    }
    out
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a.dot(b) - b.dot(a)
}

pub fn trace(a: &CMat) -> C64 {
    a.diag().sum()
}

/// Column-stacking vectorization.
pub fn vec_col(a: &CMat) -> CVec {
    let d = a.nrows();
    let mut v = Array1::zeros(d * a.ncols());
    for j in 0..a.ncols() {
        for i in 0..d {
            v[i + d * j] = a[[i, j]];
        }
    }
    v
}

pub fn unvec_col(v: &CVec, d: usize) -> CMat {
    Array2::from_shape_fn((d, v.len() / d), |(i, j)| v[i + d * j])
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + &dagger(a)).mapv(|z| z * 0.5)
}

pub fn max_abs(a: ArrayView2<C64>) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub fn hermiticity_residual(a: &CMat) -> f64 {
    max_abs((a - &dagger(a)).view())
}

pub fn frobenius(a: &CMat) -> f64 {
    a.norm_l2()
}

pub fn eigh(a: &CMat) -> Result<(Array1<f64>, CMat)> {
    // LAPACK sees a row-major array as its transpose; hand it column-major storage instead.
    let mut f = Array2::zeros(a.dim().f());
    f.assign(&hermitian_part(a));
    f.eigh(UPLO::Upper)
        .map_err(|e| Error::Linalg(format!("Hermitian eigendecomposition: {e}")))
}

pub fn eigvalsh(a: &CMat) -> Result<Array1<f64>> {
    Ok(eigh(a)?.0)
}

/// General (non-Hermitian) eigendecomposition.
pub fn eig(a: &CMat) -> Result<(CVec, CMat)> {
    a.eig()
        .map_err(|e| Error::Linalg(format!("eigendecomposition: {e}")))
}

pub fn singular_values(a: &CMat) -> Result<Array1<f64>> {
    let (_, s, _) = a
        .svd(false, false)
        .map_err(|e| Error::Linalg(format!("SVD: {e}")))?;
    Ok(s)
}

/// Full SVD `A = U diag(s) V†`, returning `(U, s, V†)`.
pub fn svd(a: &CMat) -> Result<(CMat, Array1<f64>, CMat)> {
    let mut f = Array2::zeros(a.dim().f());
    f.assign(a);
    let (u, s, vt) = f
        .svd(true, true)
        .map_err(|e| Error::Linalg(format!("SVD: {e}")))?;
    match (u, vt) {
        (Some(u), Some(vt)) => Ok((u, s, vt)),
        _ => Err(Error::Linalg("SVD returned no singular vectors".into())),
    }
}

/// Minimum-norm least-squares solution of `A x = b`, with the singular values of `A`.
pub fn least_squares(a: &CMat, b: &CVec) -> Result<(CVec, Array1<f64>)> {
    let (u, s, vt) = svd(a)?;
    let cutoff = s.iter().cloned().fold(0.0, f64::max) * 1e-13;
    let ub = dagger(&u).dot(b);
    let mut y = Array1::zeros(vt.nrows());
    for (k, &sk) in s.iter().enumerate() {
        if sk > cutoff {
            y[k] = ub[k] / sk;
        }
    }
    Ok((dagger(&vt).dot(&y), s))
}

pub fn inverse(a: &CMat) -> Result<CMat> {
    a.inv().map_err(|e| Error::Linalg(format!("inverse: {e}")))
}

/// Trace norm: sum of singular values.
pub fn trace_norm(a: &CMat) -> Result<f64> {
    Ok(singular_values(a)?.sum())
}

/// Trace norm of a matrix known to be Hermitian (sum of absolute eigenvalues).
pub fn trace_norm_hermitian(a: &CMat) -> Result<f64> {
    Ok(eigvalsh(a)?.iter().map(|x| x.abs()).sum())
}

pub fn operator_norm(a: &CMat) -> Result<f64> {
    Ok(singular_values(a)?.iter().cloned().fold(0.0, f64::max))
}

/// Apply a real function to the spectrum of a Hermitian matrix.
pub fn hermitian_function(a: &CMat, f: impl Fn(f64) -> f64) -> Result<CMat> {
    let (w, v) = eigh(a)?;
    Ok(from_spectrum(&v, &w.mapv(|x| re(f(x)))))
}

/// `V diag(d) V†`.
pub fn from_spectrum(v: &CMat, d: &CVec) -> CMat {
    let scaled = v * &d.view().insert_axis(ndarray::Axis(0));
    scaled.dot(&dagger(v))
}

/// `exp(-i t H)` for Hermitian `H` via its spectrum.
pub fn unitary_evolution(h: &CMat, t: f64) -> Result<CMat> {
    let (w, v) = eigh(h)?;
    Ok(from_spectrum(&v, &w.mapv(|e| (-I * e * t).exp())))
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Matrix exponential by Padé-13 scaling and squaring.
pub fn expm(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    const THETA13: f64 = 5.371920351148152;
    let squarings = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a.mapv(|z| z / 2f64.powi(squarings));
    let id = identity(n);
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let b = |k: usize| re(PADE13[k]);
    let u_inner = &a6.mapv(|z| z * b(13)) + &a4.mapv(|z| z * b(11)) + &a2.mapv(|z| z * b(9));
    let u = a.dot(
        &(a6.dot(&u_inner)
            + &a6.mapv(|z| z * b(7))
            + &a4.mapv(|z| z * b(5))
            + &a2.mapv(|z| z * b(3))
            + &id.mapv(|z| z * b(1))),
    );
    let v_inner = &a6.mapv(|z| z * b(12)) + &a4.mapv(|z| z * b(10)) + &a2.mapv(|z| z * b(8));
    let v = a6.dot(&v_inner)
        + &a6.mapv(|z| z * b(6))
        + &a4.mapv(|z| z * b(4))
        + &a2.mapv(|z| z * b(2))
        + &id.mapv(|z| z * b(0));
    let mut r = inverse(&(&v - &u))?.dot(&(&v + &u));
    for _ in 0..squarings {
        r = r.dot(&r);
    }
    Ok(r)
}

/// Haar-random pure state as a density matrix.
pub fn random_pure_state<R: Rng>(d: usize, rng: &mut R) -> CMat {
    let mut psi: CVec = Array1::from_shape_fn(d, |_| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let n = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    psi.mapv_inplace(|z| z / n);
    outer(&psi, &psi)
}

/// Random density matrix from a Ginibre draw, `G G† / Tr`.
pub fn random_density<R: Rng>(d: usize, rng: &mut R) -> CMat {
    let g = random_matrix(d, rng);
    let r = g.dot(&dagger(&g));
    let t = trace(&r);
    r.mapv(|z| z / t)
}

pub fn random_matrix<R: Rng>(d: usize, rng: &mut R) -> CMat {
    Array2::from_shape_fn((d, d), |_| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

pub fn random_hermitian<R: Rng>(d: usize, rng: &mut R) -> CMat {
    hermitian_part(&random_matrix(d, rng))
}

pub fn outer(a: &CVec, b: &CVec) -> CMat {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j].conj())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn column_stacking_matches_kron_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, x, b) = (
            random_matrix(3, &mut rng),
            random_matrix(3, &mut rng),
            random_matrix(3, &mut rng),
        );
        let lhs = vec_col(&a.dot(&x).dot(&b));
        let rhs = kron(&b.t().to_owned(), &a).dot(&vec_col(&x));
        assert!(max_abs((lhs - rhs).insert_axis(ndarray::Axis(0)).view()) < 1e-12);
        assert_eq!(unvec_col(&vec_col(&x), 3), x);
    }

    #[test]
    fn expm_agrees_with_spectral_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for scale in [0.01, 1.0, 30.0] {
            let h = random_hermitian(5, &mut rng).mapv(|z| z * scale);
            let a = h.mapv(|z| -I * z);
            let e1 = expm(&a).unwrap();
            let e2 = unitary_evolution(&h, 1.0).unwrap();
            assert!(max_abs((&e1 - &e2).view()) < 1e-10 * scale.max(1.0));
        }
    }

    #[test]
    fn expm_of_nilpotent_is_polynomial() {
        let mut n = Array2::zeros((3, 3));
        n[[0, 1]] = re(2.0);
        n[[1, 2]] = re(3.0);
        let e = expm(&n).unwrap();
        assert_abs_diff_eq!(e[[0, 2]].re, 3.0, epsilon = 1e-13);
        assert_abs_diff_eq!(e[[0, 1]].re, 2.0, epsilon = 1e-13);
    }

    #[test]
    fn trace_norm_of_orthogonal_pure_states_is_two() {
        let mut p = Array2::zeros((2, 2));
        p[[0, 0]] = ONE;
        let mut q = Array2::zeros((2, 2));
        q[[1, 1]] = ONE;
        assert_abs_diff_eq!(trace_norm(&(&p - &q)).unwrap(), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(trace_norm_hermitian(&(&p - &q)).unwrap(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn eigendecompositions_reconstruct_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_hermitian(6, &mut rng);
        let (w, v) = eigh(&h).unwrap();
        assert!(max_abs((&from_spectrum(&v, &w.mapv(re)) - &h).view()) < 1e-12);
        let a = random_matrix(5, &mut rng);
        let (w, v) = eig(&a).unwrap();
        let r = a.dot(&v) - &v * &w.view().insert_axis(ndarray::Axis(0));
        assert!(max_abs(r.view()) < 1e-12);
        assert!(max_abs((inverse(&a).unwrap().dot(&a) - identity(5)).view()) < 1e-12);
        let tall = Array2::from_shape_fn((7, 4), |(i, j)| a[[i % 5, j]] + re(i as f64));
        let (u, s, vt) = svd(&tall).unwrap();
        let k = s.len();
        let rec = u.slice(s![.., ..k]).to_owned()
            * s.mapv(re).view().insert_axis(ndarray::Axis(0));
        assert!(max_abs((rec.dot(&vt.slice(s![..k, ..])) - &tall).view()) < 1e-12);
        let x: CVec = Array1::from_shape_fn(4, |i| C64::new(i as f64, 1.0));
        let (sol, _) = least_squares(&tall, &tall.dot(&x)).unwrap();
        assert!(sol.iter().zip(x.iter()).all(|(p, q)| (p - q).norm() < 1e-12));
    }
}
