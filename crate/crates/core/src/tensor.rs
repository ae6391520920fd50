//! Dense complex linear algebra kernel.
//!
//! Everything else in the crate is built on the handful of routines here:
//! a phase-fixed thin SVD, a descending Hermitian eigendecomposition, the
//! exponential of a Hermitian generator, and a row-major [`ComplexTensor`]
//! for reshapes and axis permutations. Matrices are `faer::Mat<C64>`.
//!
//! All routines are pure; they never mutate their inputs and are safe to
//! call from many threads.

use faer::{Mat, Side};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

pub use num_complex::Complex64 as C64;

/// Dense complex matrix, column-major storage.
pub type CMat = Mat<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const IM: C64 = C64::new(0.0, 1.0);

/// Relative asymmetry tolerated by [`eigh`] before it refuses the input.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Eigenvalues of a density matrix below `-NEGATIVE_EIG_TOL` are an error.
pub const NEGATIVE_EIG_TOL: f64 = 1e-10;

pub fn identity(n: usize) -> CMat {
    Mat::identity(n, n)
}

pub fn zeros(nrows: usize, ncols: usize) -> CMat {
    Mat::zeros(nrows, ncols)
}

/// Builds a matrix from row slices. Panics on ragged input; meant for
/// literals.
pub fn from_rows(rows: &[&[C64]]) -> CMat {
    let ncols = rows.first().map_or(0, |r| r.len());
    assert!(rows.iter().all(|r| r.len() == ncols), "ragged rows");
    Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

pub fn from_real_rows(rows: &[&[f64]]) -> CMat {
    let ncols = rows.first().map_or(0, |r| r.len());
    assert!(rows.iter().all(|r| r.len() == ncols), "ragged rows");
    Mat::from_fn(rows.len(), ncols, |i, j| C64::new(rows[i][j], 0.0))
}

pub fn column(v: &[C64]) -> CMat {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

pub fn diag(values: &[C64]) -> CMat {
    Mat::from_fn(values.len(), values.len(), |i, j| if i == j { values[i] } else { ZERO })
}

pub fn dagger(m: &CMat) -> CMat {
    m.adjoint().to_owned()
}

pub fn transpose(m: &CMat) -> CMat {
    m.transpose().to_owned()
}

pub fn conj(m: &CMat) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].conj())
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kron(b)
}

pub fn scale(m: &CMat, s: C64) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s)
}

pub fn scale_real(m: &CMat, s: f64) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s)
}

pub fn frobenius(m: &CMat) -> f64 {
    m.norm_l2()
}

pub fn frobenius_sq(m: &CMat) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            acc += m[(i, j)].norm_sqr();
        }
    }
    acc
}

/// Frobenius inner product `Tr(a† b)`.
pub fn inner(a: &CMat, b: &CMat) -> C64 {
    debug_assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut acc = ZERO;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)].conj() * b[(i, j)];
        }
    }
    acc
}

pub fn trace(m: &CMat) -> C64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

pub fn is_finite(m: &CMat) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].re.is_finite() && m[(i, j)].im.is_finite()))
}

/// `‖m†m − I‖_F`; zero for isometries (orthonormal columns).
pub fn isometry_residual(m: &CMat) -> f64 {
    let g = m.adjoint() * m;
    frobenius(&(g - identity(m.ncols())))
}

/// `‖m†m − I‖_F` for square `m`; infinite for non-square input.
pub fn unitarity_residual(m: &CMat) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    isometry_residual(m)
}

pub fn hermiticity_residual(m: &CMat) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    frobenius(&(m - m.adjoint()))
}

pub fn ensure_unitary(m: &CMat, tol: f64) -> Result<()> {
    let r = unitarity_residual(m);
    if r.is_finite() && r <= tol {
        Ok(())
    } else {
        Err(Error::NotUnitary(r))
    }
}

pub fn pauli_x() -> CMat {
    from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
}

pub fn pauli_y() -> CMat {
    from_rows(&[&[ZERO, -IM], &[IM, ZERO]])
}

pub fn pauli_z() -> CMat {
    from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]])
}

pub fn paulis() -> [CMat; 3] {
    [pauli_x(), pauli_y(), pauli_z()]
}

/// Trace over the second factor of a `d1·d2`-dimensional operator whose
/// first factor is the most significant index.
pub fn partial_trace_second(m: &CMat, d1: usize, d2: usize) -> CMat {
    debug_assert_eq!(m.nrows(), d1 * d2);
    Mat::from_fn(d1, d1, |a, b| (0..d2).map(|k| m[(a * d2 + k, b * d2 + k)]).sum())
}

/// Trace over the first factor, see [`partial_trace_second`].
pub fn partial_trace_first(m: &CMat, d1: usize, d2: usize) -> CMat {
    debug_assert_eq!(m.nrows(), d1 * d2);
    Mat::from_fn(d2, d2, |a, b| (0..d1).map(|k| m[(k * d2 + a, k * d2 + b)]).sum())
}

/// Phase that rotates the largest-magnitude entry of column `j` onto the
/// positive real axis (first index wins ties).
fn column_phase(m: &CMat, j: usize) -> C64 {
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for i in 0..m.nrows() {
        let a = m[(i, j)].norm();
        if a > best_abs {
            best_abs = a;
            best = i;
        }
    }
    if best_abs <= 0.0 {
        ONE
    } else {
        m[(best, j)] / best_abs
    }
}

#[derive(Clone, Debug)]
pub struct Svd {
    /// Left singular vectors as orthonormal columns.
    pub u: CMat,
    /// Singular values, non-increasing.
    pub s: Vec<f64>,
    /// Right singular vectors as orthonormal rows.
    pub vh: CMat,
}

impl Svd {
    pub fn reconstruct(&self) -> CMat {
        let mut us = self.u.clone();
        for (j, &s) in self.s.iter().enumerate() {
            for i in 0..us.nrows() {
                us[(i, j)] *= s;
            }
        }
        &us * &self.vh
    }
}

/// Thin SVD `M = U·diag(s)·Vh` with `k = min(rows, cols)` singular triples.
///
/// The phase of every left singular vector is fixed by making its
/// largest-magnitude entry real and positive; the matching row of `Vh`
/// absorbs the conjugate phase.
pub fn svd(m: &CMat) -> Result<Svd> {
    if !is_finite(m) {
        return Err(Error::NonFinite("svd input"));
    }
    let (r, c) = (m.nrows(), m.ncols());
    let k = r.min(c);
    if k == 0 {
        return Ok(Svd { u: zeros(r, 0), s: vec![], vh: zeros(0, c) });
    }
    let dec = m.thin_svd().map_err(|e| Error::Decomposition(format!("svd: {e:?}")))?;
    let s_raw: Vec<f64> = (0..k).map(|i| dec.S().column_vector()[i].re).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s_raw[b].total_cmp(&s_raw[a]));
    let u_raw = dec.U();
    let v_raw = dec.V();
    let mut u = Mat::from_fn(r, k, |i, j| u_raw[(i, order[j])]);
    let mut vh = Mat::from_fn(k, c, |i, j| v_raw[(j, order[i])].conj());
    let s: Vec<f64> = order.iter().map(|&i| s_raw[i].max(0.0)).collect();
    for j in 0..k {
        let ph = column_phase(&u, j);
        let phc = ph.conj();
        for i in 0..r {
            u[(i, j)] *= phc;
        }
        for i in 0..c {
            vh[(j, i)] *= ph;
        }
    }
    Ok(Svd { u, s, vh })
}

#[derive(Clone, Debug)]
pub struct Eigh {
    /// Eigenvalues, non-increasing.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, matching `values`.
    pub vectors: CMat,
}

impl Eigh {
    /// The first `r` eigenvectors as a `dim × r` isometry.
    pub fn leading(&self, r: usize) -> CMat {
        self.vectors.subcols(0, r).to_owned()
    }
}

/// Hermitian eigendecomposition with eigenvalues in descending order.
///
/// The input is symmetrized before decomposition; an asymmetry above
/// `HERMITIAN_TOL·‖H‖_F` is rejected. Eigenvector phases follow the same
/// convention as [`svd`].
pub fn eigh(h: &CMat) -> Result<Eigh> {
    if h.nrows() != h.ncols() {
        return invalid(format!("eigh needs a square matrix, got {}x{}", h.nrows(), h.ncols()));
    }
    if !is_finite(h) {
        return Err(Error::NonFinite("eigh input"));
    }
    let n = h.nrows();
    if n == 0 {
        return Ok(Eigh { values: vec![], vectors: zeros(0, 0) });
    }
    let asym = hermiticity_residual(h);
    let norm = frobenius(h);
    if asym > HERMITIAN_TOL * norm.max(f64::MIN_POSITIVE) && asym > 0.0 {
        return Err(Error::NotHermitian(asym / norm.max(f64::MIN_POSITIVE)));
    }
    let sym = Mat::from_fn(n, n, |i, j| (h[(i, j)] + h[(j, i)].conj()) * 0.5);
    let dec = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Decomposition(format!("eigh: {e:?}")))?;
    let s = dec.S().column_vector();
    let raw: Vec<f64> = (0..n).map(|i| s[i].re).collect();
    // faer returns ascending order; a stable sort keeps its ordering among
    // exactly equal values.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]));
    let u = dec.U();
    let mut vectors = Mat::from_fn(n, n, |i, j| u[(i, order[j])]);
    for j in 0..n {
        let phc = column_phase(&vectors, j).conj();
        for i in 0..n {
            vectors[(i, j)] *= phc;
        }
    }
    Ok(Eigh { values: order.iter().map(|&i| raw[i]).collect(), vectors })
}

/// Eigendecomposition of a density matrix with eigenvalues clipped to
/// `[0, 1]`. Values below `-NEGATIVE_EIG_TOL` are an error.
pub fn density_spectrum(rho: &CMat) -> Result<Eigh> {
    let mut e = eigh(rho)?;
    if let Some(&min) = e.values.last() {
        if min < -NEGATIVE_EIG_TOL {
            return Err(Error::NegativeEigenvalue(min));
        }
    }
    for v in &mut e.values {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(e)
}

/// `exp(−i·t·H)` for Hermitian `H`, evaluated through [`eigh`].
pub fn expm_hermitian(h: &CMat, t: f64) -> Result<CMat> {
    if !t.is_finite() {
        return Err(Error::NonFinite("time step"));
    }
    let e = eigh(h)?;
    let n = h.nrows();
    let phases: Vec<C64> = e.values.iter().map(|&l| C64::from_polar(1.0, -t * l)).collect();
    let mut vd = e.vectors.clone();
    for j in 0..n {
        for i in 0..n {
            vd[(i, j)] *= phases[j];
        }
    }
    Ok(&vd * e.vectors.adjoint())
}

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn random_matrix<R: Rng + ?Sized>(nrows: usize, ncols: usize, rng: &mut R) -> CMat {
    Mat::from_fn(nrows, ncols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let g = random_matrix(n, n, rng);
    Mat::from_fn(n, n, |i, j| (g[(i, j)] + g[(j, i)].conj()) * 0.5)
}

/// Haar-random unitary: polar factor of a Ginibre matrix.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let g = random_matrix(n, n, rng);
    polar_factor(&g).expect("Ginibre matrix is finite")
}

/// Closest unitary (isometry) to `m` in Frobenius norm, `U·Vh` of its SVD.
pub fn polar_factor(m: &CMat) -> Result<CMat> {
    let d = svd(m)?;
    Ok(&d.u * &d.vh)
}

/// Row-major dense tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

impl ComplexTensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        if shape.contains(&0) {
            return invalid(format!("tensor extents must be positive, got {shape:?}"));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return invalid(format!("shape {shape:?} needs {len} entries, got {}", data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(shape, vec![ZERO; len])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    fn strides(shape: &[usize]) -> Vec<usize> {
        let mut s = vec![1; shape.len()];
        for k in (0..shape.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * shape[k + 1];
        }
        s
    }

    /// New tensor whose axis `k` is axis `axes[k]` of `self`.
    pub fn permute(&self, axes: &[usize]) -> Result<Self> {
        let rank = self.shape.len();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
            return invalid(format!("{axes:?} is not a permutation of 0..{rank}"));
        }
        let old_strides = Self::strides(&self.shape);
        let new_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let src_strides: Vec<usize> = axes.iter().map(|&a| old_strides[a]).collect();
        let mut out = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; rank];
        for _ in 0..self.data.len() {
            let off: usize = idx.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
            out.push(self.data[off]);
            for k in (0..rank).rev() {
                idx[k] += 1;
                if idx[k] < new_shape[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        Self::new(new_shape, out)
    }

    /// Groups the first `split` axes into rows and the rest into columns.
    pub fn to_matrix(&self, split: usize) -> Result<CMat> {
        if split > self.shape.len() {
            return invalid("matrix split beyond tensor rank");
        }
        let rows: usize = self.shape[..split].iter().product();
        let cols: usize = self.shape[split..].iter().product();
        Ok(Mat::from_fn(rows, cols, |i, j| self.data[i * cols + j]))
    }

    pub fn from_matrix(m: &CMat) -> Self {
        let (r, c) = (m.nrows(), m.ncols());
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                data.push(m[(i, j)]);
            }
        }
        Self { shape: vec![r, c], data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn svd_of_identity_has_unit_values() {
        let d = svd(&identity(4)).unwrap();
        for s in &d.s {
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn svd_of_rank_deficient_diagonal() {
        let m = from_real_rows(&[&[3.0, 0.0], &[0.0, 0.0]]);
        let d = svd(&m).unwrap();
        assert!((d.s[0] - 3.0).abs() < 1e-14);
        assert!(d.s[1].abs() < 1e-14);
        // Phase convention makes the leading left vector exactly e_0.
        assert!((d.u[(0, 0)] - ONE).norm() < 1e-14);
        assert!(frobenius(&(d.reconstruct() - &m)) < 1e-13);
    }

    #[test]
    fn svd_rejects_nan() {
        let mut m = identity(2);
        m[(0, 1)] = C64::new(f64::NAN, 0.0);
        assert!(matches!(svd(&m), Err(Error::NonFinite(_))));
    }

    #[test]
    fn svd_phase_convention_holds() {
        let m = random_matrix(5, 3, &mut rng(3));
        let d = svd(&m).unwrap();
        for j in 0..3 {
            let mut best = ZERO;
            for i in 0..5 {
                if d.u[(i, j)].norm() > best.norm() {
                    best = d.u[(i, j)];
                }
            }
            assert!(best.im.abs() < 1e-14 && best.re > 0.0);
        }
    }

    #[test]
    fn eigh_pauli_z_and_identity() {
        let e = eigh(&pauli_z()).unwrap();
        assert_eq!(e.values, vec![1.0, -1.0]);
        let e = eigh(&identity(2)).unwrap();
        assert!(e.values.iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn eigh_of_plus_projector() {
        let h = C64::new(0.5, 0.0);
        let rho = from_rows(&[&[h, h], &[h, h]]);
        let e = density_spectrum(&rho).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14 && e.values[1].abs() < 1e-14);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors[(0, 0)] - C64::new(s, 0.0)).norm() < 1e-12);
        assert!((e.vectors[(1, 0)] - C64::new(s, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn eigh_rejects_non_hermitian() {
        let m = from_real_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
        assert!(matches!(eigh(&m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn density_spectrum_rejects_negative() {
        let m = from_real_rows(&[&[1.1, 0.0], &[0.0, -0.1]]);
        assert!(matches!(density_spectrum(&m), Err(Error::NegativeEigenvalue(_))));
    }

    #[test]
    fn expm_at_zero_time_is_identity() {
        let h = random_hermitian(4, &mut rng(1));
        let u = expm_hermitian(&h, 0.0).unwrap();
        assert!(frobenius(&(u - identity(4))) < 1e-13);
    }

    #[test]
    fn expm_pauli_x_closed_form() {
        for &theta in &[0.1, 0.7, 2.3, -1.1] {
            let u = expm_hermitian(&pauli_x(), theta).unwrap();
            let expected = scale_real(&identity(2), theta.cos()) - scale(&pauli_x(), IM * theta.sin());
            assert!(frobenius(&(u - expected)) < 1e-13);
        }
    }

    #[test]
    fn tensor_permute_and_reshape() {
        let data: Vec<C64> = (0..24).map(|k| C64::new(k as f64, 0.0)).collect();
        let t = ComplexTensor::new(vec![2, 3, 4], data).unwrap();
        let p = t.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        // p[k, i, j] == t[i, j, k]
        assert_eq!(p.data()[1 * 6 + 1 * 3 + 2], C64::new((1 * 12 + 2 * 4 + 1) as f64, 0.0));
        let back = p.permute(&[1, 2, 0]).unwrap();
        assert_eq!(back, t);
        let r = t.clone().reshape(vec![6, 4]).unwrap();
        assert_eq!(r.data(), t.data());
        assert!(t.clone().reshape(vec![5, 5]).is_err());
        let m = t.to_matrix(1).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (2, 12));
        assert_eq!(m[(1, 5)], C64::new(17.0, 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn svd_reconstructs(rows in 1usize..=64, cols in 1usize..=64, seed in any::<u64>()) {
            let m = random_matrix(rows, cols, &mut rng(seed));
            let d = svd(&m).unwrap();
            let rel = frobenius(&(d.reconstruct() - &m)) / frobenius(&m);
            prop_assert!(rel <= 1e-12, "relative residual {rel}");
            prop_assert!(isometry_residual(&d.u) < 1e-12);
            prop_assert!(isometry_residual(&dagger(&d.vh)) < 1e-12);
            prop_assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn eigh_satisfies_eigen_equation(n in 1usize..=24, seed in any::<u64>()) {
            let h = random_hermitian(n, &mut rng(seed));
            let e = eigh(&h).unwrap();
            prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(isometry_residual(&e.vectors) < 1e-10);
            for j in 0..n {
                let v = e.vectors.subcols(j, 1).to_owned();
                let r = &h * &v - scale_real(&v, e.values[j]);
                prop_assert!(frobenius(&r) < 1e-10);
            }
        }

        #[test]
        fn expm_is_unitary_and_additive(n in 1usize..=8, t1 in -3.0f64..3.0, t2 in -3.0f64..3.0, seed in any::<u64>()) {
            let h = random_hermitian(n, &mut rng(seed));
            let a = expm_hermitian(&h, t1).unwrap();
            let b = expm_hermitian(&h, t2).unwrap();
            let ab = expm_hermitian(&h, t1 + t2).unwrap();
            prop_assert!(unitarity_residual(&a) < 1e-10);
            prop_assert!(frobenius(&(&a * &b - ab)) < 1e-10);
        }
    }
}
