//! Minimal dense linear algebra for the small matrices this crate works with.
//!
//! Everything here targets matrices of dimension at most 16; storage is
//! row-major `f64` and the SVD is a one-sided Jacobi sweep, which is the
//! simplest method that is fully accurate at these sizes.

use crate::error::{Error, Result};

/// Relative singular-value cutoff used when no explicit tolerance is given.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

const MAX_JACOBI_SWEEPS: usize = 200;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major entries, rejecting NaN/Inf.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry(format!("matrix entry {bad}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    /// Diagonal matrix from the given entries.
    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in entries.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Column vector.
    pub fn col_vec(v: &[f64]) -> Self {
        Self { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.data[i * self.cols..(i + 1) * self.cols].to_vec()).collect()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::ShapeMismatch(format!(
                "matvec {}x{} by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += self.get(i, j) * v[j];
            }
            out[i] = acc;
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeMismatch(format!(
                "add {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Euclidean inner product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Thin singular value decomposition `M = U * diag(sigma) * V^T`.
///
/// `u` is m-by-r and `v` is n-by-r with orthonormal columns, r = min(m, n),
/// and `sigma` is sorted descending.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdFactors {
    pub fn sigma_max(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma.last().copied().unwrap_or(0.0)
    }

    /// Reassembles `U * diag(sigma) * V^T`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let us = {
            let mut m = self.u.clone();
            for i in 0..m.rows() {
                for (j, s) in self.sigma.iter().enumerate() {
                    m.set(i, j, m.get(i, j) * s);
                }
            }
            m
        };
        us.matmul(&self.v.transpose()).expect("conformable by construction")
    }
}

/// One-sided Jacobi SVD for matrices up to 16x16.
pub fn svd(m: &DenseMatrix) -> Result<SvdFactors> {
    if !m.is_finite() {
        return Err(Error::NonFiniteEntry("svd input".into()));
    }
    if m.rows() > 16 || m.cols() > 16 {
        return Err(Error::ShapeMismatch(format!(
            "svd limited to 16x16, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if m.rows() >= m.cols() {
        svd_tall(m)
    } else {
        // Decompose the transpose and swap the factors.
        let f = svd_tall(&m.transpose())?;
        Ok(SvdFactors { u: f.v, sigma: f.sigma, v: f.u })
    }
}

/// Hestenes one-sided Jacobi on the columns of a tall (m >= n) matrix.
fn svd_tall(m: &DenseMatrix) -> Result<SvdFactors> {
    let (rows, cols) = (m.rows(), m.cols());
    // Columns of `a` are rotated in place; `v` accumulates the rotations.
    let mut a: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| m.get(i, j)).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..cols).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let eps = f64::EPSILON;
    let mut converged = cols < 2;
    for _sweep in 0..MAX_JACOBI_SWEEPS {
        if converged {
            break;
        }
        converged = true;
        let max_norm2 = a.iter().map(|col| dot(col, col)).fold(0.0, f64::max);
        if max_norm2 == 0.0 {
            break;
        }
        // Columns whose norm sits at the round-off floor of the matrix carry
        // numerically-zero singular values; their dot products cannot be
        // driven to zero and rotating them never converges.
        let zero2 = eps * eps * max_norm2;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                if alpha.min(beta) <= zero2 {
                    continue;
                }
                let gamma = dot(&a[p], &a[q]);
                if gamma.abs() <= eps * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let (ap, aq) = (a[p][i], a[q][i]);
                    a[p][i] = c * ap - s * aq;
                    a[q][i] = s * ap + c * aq;
                }
                for i in 0..cols {
                    let (vp, vq) = (v[p][i], v[q][i]);
                    v[p][i] = c * vp - s * vq;
                    v[q][i] = s * vp + c * vq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::IterationLimit(MAX_JACOBI_SWEEPS));
    }

    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = a.iter().map(|col| norm2(col)).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));
    let sigma_max = norms[order[0]];

    let mut u = DenseMatrix::zeros(rows, cols);
    let mut vm = DenseMatrix::zeros(cols, cols);
    let mut sigma = Vec::with_capacity(cols);
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(cols);
    for (k, &idx) in order.iter().enumerate() {
        let s = norms[idx];
        sigma.push(s);
        // A column at the round-off floor is an unconverged noise direction;
        // normalizing it would break U's orthonormality, so complete the
        // basis instead. Its singular value is reported as measured.
        let col = if s > 1e-13 * sigma_max {
            a[idx].iter().map(|x| x / s).collect()
        } else {
            orthonormal_completion(&u_cols, rows)
        };
        for i in 0..rows {
            u.set(i, k, col[i]);
        }
        u_cols.push(col);
        for i in 0..cols {
            vm.set(i, k, v[idx][i]);
        }
    }
    Ok(SvdFactors { u, sigma, v: vm })
}

/// Unit vector orthogonal to all of `existing` (each of length `dim`).
fn orthonormal_completion(existing: &[Vec<f64>], dim: usize) -> Vec<f64> {
    for seed in 0..dim {
        let mut cand = vec![0.0; dim];
        cand[seed] = 1.0;
        for col in existing {
            let proj = dot(&cand, col);
            for i in 0..dim {
                cand[i] -= proj * col[i];
            }
        }
        let n = norm2(&cand);
        if n > 1e-8 {
            return cand.iter().map(|x| x / n).collect();
        }
    }
    // Unreachable: fewer than `dim` columns can never span all of R^dim.
    panic!("failed to complete orthonormal basis");
}

/// Moore-Penrose pseudoinverse.
///
/// Singular values at or below `rank_tol * sigma_max * max(rows, cols)` are
/// treated as zero.
pub fn pinv(m: &DenseMatrix, rank_tol: f64) -> Result<DenseMatrix> {
    let f = svd(m)?;
    let cutoff = rank_tol * f.sigma_max() * m.rows().max(m.cols()) as f64;
    let inv_sigma: Vec<f64> =
        f.sigma.iter().map(|&s| if s > cutoff && s > 0.0 { 1.0 / s } else { 0.0 }).collect();
    // M^+ = V * diag(1/sigma) * U^T
    let mut vs = f.v.clone();
    for i in 0..vs.rows() {
        for (j, inv) in inv_sigma.iter().enumerate() {
            vs.set(i, j, vs.get(i, j) * inv);
        }
    }
    let p = vs.matmul(&f.u.transpose())?;
    // One Newton-Schulz step squares the round-off residual, which would
    // otherwise scale with the condition number of the kept spectrum.
    let two_i = DenseMatrix::identity(m.rows()).scale(2.0);
    p.matmul(&two_i.sub(&m.matmul(&p)?)?)
}

/// Pseudoinverse with the default relative rank tolerance.
pub fn pinv_default(m: &DenseMatrix) -> Result<DenseMatrix> {
    pinv(m, DEFAULT_RANK_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        DenseMatrix::new(rows, cols, data).unwrap()
    }

    #[test]
    fn identity_svd() {
        let f = svd(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(f.sigma, vec![1.0, 1.0, 1.0]);
        assert!(f.u.sub(&DenseMatrix::identity(3)).unwrap().max_abs() < 1e-12);
        assert!(f.v.sub(&DenseMatrix::identity(3)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn diagonal_svd_with_zero() {
        let m = DenseMatrix::diag(&[3.0, 0.0]);
        let f = svd(&m).unwrap();
        assert_eq!(f.sigma, vec![3.0, 0.0]);
        let utu = f.u.transpose().matmul(&f.u).unwrap();
        assert!(utu.sub(&DenseMatrix::identity(2)).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn svd_reconstructs_rectangular() {
        let m = random_matrix(3, 5, 7);
        let f = svd(&m).unwrap();
        let err = f.reconstruct().sub(&m).unwrap().max_abs();
        assert!(err <= 1e-10 * (1.0 + f.sigma_max()), "reconstruction error {err}");
    }

    #[test]
    fn svd_orthonormal_factors() {
        for (r, c, seed) in [(4, 4, 1), (2, 6, 2), (6, 2, 3), (1, 5, 4)] {
            let m = random_matrix(r, c, seed);
            let f = svd(&m).unwrap();
            let k = r.min(c);
            let utu = f.u.transpose().matmul(&f.u).unwrap();
            let vtv = f.v.transpose().matmul(&f.v).unwrap();
            assert!(utu.sub(&DenseMatrix::identity(k)).unwrap().max_abs() <= 1e-10);
            assert!(vtv.sub(&DenseMatrix::identity(k)).unwrap().max_abs() <= 1e-10);
            assert!(f.sigma.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn singular_values_match_characteristic_polynomial() {
        use crate::verify::eig_sym_characteristic;
        for (n, seed) in [(2, 11), (2, 12), (3, 13), (3, 14), (3, 15)] {
            let m = random_matrix(n, n, seed);
            let f = svd(&m).unwrap();
            let gram = m.transpose().matmul(&m).unwrap();
            let eig = eig_sym_characteristic(&gram);
            for (s, e) in f.sigma.iter().zip(eig) {
                assert!((s - e.max(0.0).sqrt()).abs() < 1e-8, "sigma {s} vs sqrt-eig {e}");
            }
        }
    }

    #[test]
    fn pinv_identity() {
        let p = pinv_default(&DenseMatrix::identity(3)).unwrap();
        assert!(p.sub(&DenseMatrix::identity(3)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn pinv_diagonal_with_zero_singular_value() {
        let m = DenseMatrix::diag(&[4.0, 0.0]);
        let p = pinv_default(&m).unwrap();
        let expect = DenseMatrix::diag(&[0.25, 0.0]);
        assert!(p.sub(&expect).unwrap().max_abs() < 1e-12);
    }

    fn penrose_max_violation(m: &DenseMatrix, p: &DenseMatrix) -> f64 {
        let mpm = m.matmul(p).unwrap().matmul(m).unwrap();
        let pmp = p.matmul(m).unwrap().matmul(p).unwrap();
        let mp = m.matmul(p).unwrap();
        let pm = p.matmul(m).unwrap();
        [
            mpm.sub(m).unwrap().max_abs(),
            pmp.sub(p).unwrap().max_abs(),
            mp.sub(&mp.transpose()).unwrap().max_abs(),
            pm.sub(&pm.transpose()).unwrap().max_abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    #[test]
    fn pinv_penrose_rectangular() {
        let m = random_matrix(3, 5, 42);
        let p = pinv_default(&m).unwrap();
        assert!(penrose_max_violation(&m, &p) <= 1e-9);
    }

    #[test]
    fn pinv_involution_full_rank() {
        let m = random_matrix(4, 4, 5);
        let p = pinv_default(&m).unwrap();
        let pp = pinv_default(&p).unwrap();
        assert!(pp.sub(&m).unwrap().max_abs() <= 1e-8);
    }

    #[test]
    fn matvec_identity_and_norm() {
        let v = vec![1.5, -2.0];
        assert_eq!(DenseMatrix::identity(2).matvec(&v).unwrap(), v);
        assert_eq!(norm2(&[3.0, 4.0]), 5.0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = DenseMatrix::zeros(2, 3);
        let b = DenseMatrix::zeros(2, 3);
        assert!(matches!(a.matmul(&b), Err(Error::ShapeMismatch(_))));
        assert!(matches!(a.matvec(&[1.0, 2.0]), Err(Error::ShapeMismatch(_))));
        assert!(matches!(
            a.add(&DenseMatrix::zeros(3, 2)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn constructor_rejects_non_finite() {
        assert!(matches!(
            DenseMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFiniteEntry(_))
        ));
    }

    proptest! {
        #[test]
        fn transpose_of_product_is_reversed_product(seed in 0u64..500) {
            let a = random_matrix(2, 3, seed);
            let b = random_matrix(3, 4, seed.wrapping_add(1000));
            let lhs = a.matmul(&b).unwrap().transpose();
            let rhs = b.transpose().matmul(&a.transpose()).unwrap();
            prop_assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-12);
        }

        #[test]
        fn pinv_penrose_all_small_shapes(
            rows in 1usize..=6,
            cols in 1usize..=6,
            seed in 0u64..200,
        ) {
            let m = random_matrix(rows, cols, seed);
            let p = pinv_default(&m).unwrap();
            prop_assert!(penrose_max_violation(&m, &p) <= 1e-9);
        }

        #[test]
        fn svd_reconstruction_all_small_shapes(
            rows in 1usize..=6,
            cols in 1usize..=6,
            seed in 0u64..200,
        ) {
            let m = random_matrix(rows, cols, seed);
            let f = svd(&m).unwrap();
            let err = f.reconstruct().sub(&m).unwrap().max_abs();
            prop_assert!(err <= 1e-10 * (1.0 + f.sigma_max()));
        }
    }
}
