//! Frozen projection pairs `(L, R)` and the implicit Kronecker dictionary
//! `Psi = (R^T kron L) * c`.
//!
//! Coefficient index `k` addresses core entry `(i, j)` of the `a x b` core in
//! column-major order, `k = i + j * a`. Column `k` of `Psi` is
//! `c * (row_j(R)^T kron col_i(L))`, so `Psi * vec(Y) = c * vec(L * Y * R)`.
//! `Psi` itself (mn x ab) is never formed.

use crate::error::{CosaError, Result};
use crate::numerics::{dot, matmul, norm2, Matrix};
use crate::randgen::{derive_seed, gaussian_matrix};
use crate::rip::SparseVector;

/// Seeded frozen projections `L` (m x a) and `R` (b x n).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionPair {
    m: usize,
    n: usize,
    a: usize,
    b: usize,
    seed: u64,
    l: Matrix,
    r: Matrix,
    orthonormalized: bool,
}

impl ProjectionPair {
    /// Draws `L` from `derive_seed(seed, 0)` one column at a time and `R` from
    /// `derive_seed(seed, 1)` one row at a time. Both fills are prefix stable, so a
    /// pair with a larger core and the same seed extends this one.
    /// With `orthonormalize`, the columns of `L` and the rows of `R` are made
    /// orthonormal by Gram-Schmidt.
    pub fn new(seed: u64, m: usize, n: usize, a: usize, b: usize, orthonormalize: bool) -> Result<Self> {
        if a == 0 || b == 0 || m == 0 || n == 0 {
            return Err(CosaError::arg(format!(
                "projection dims must be positive, got m={m} n={n} a={a} b={b}"
            )));
        }
        if a > m || b > n {
            return Err(CosaError::arg(format!(
                "core ({a}, {b}) must not exceed layer ({m}, {n})"
            )));
        }
        let mut l = gaussian_matrix(derive_seed(seed, 0), a, m).transpose();
        let mut r = gaussian_matrix(derive_seed(seed, 1), b, n);
        if orthonormalize {
            l = orthonormal_columns(&l)?;
            r = orthonormal_columns(&r.transpose())?.transpose();
        }
        Ok(ProjectionPair {
            m,
            n,
            a,
            b,
            seed,
            l,
            r,
            orthonormalized: orthonormalize,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn a(&self) -> usize {
        self.a
    }
    pub fn b(&self) -> usize {
        self.b
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn left(&self) -> &Matrix {
        &self.l
    }
    pub fn right(&self) -> &Matrix {
        &self.r
    }
    pub fn orthonormalized(&self) -> bool {
        self.orthonormalized
    }

    /// Number of dictionary atoms, `a * b`.
    pub fn atoms(&self) -> usize {
        self.a * self.b
    }

    #[cfg(test)]
    pub(crate) fn replace_factors_for_tests(&mut self, l: Matrix, r: Matrix) {
        assert_eq!(l.shape(), self.l.shape());
        assert_eq!(r.shape(), self.r.shape());
        self.l = l;
        self.r = r;
    }

    /// `L * Y * R` for an `a x b` core, evaluated as `L * (Y * R)`.
    pub fn synthesize(&self, y: &Matrix) -> Result<Matrix> {
        if y.shape() != (self.a, self.b) {
            return Err(CosaError::shape("synthesize", (self.a, self.b), y.shape()));
        }
        matmul(&self.l, &matmul(y, &self.r)?)
    }
}

/// Modified Gram-Schmidt with one reorthogonalization pass.
fn orthonormal_columns(a: &Matrix) -> Result<Matrix> {
    let (rows, cols) = a.shape();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cols);
    for j in 0..cols {
        let mut v = a.col_vec(j);
        for _pass in 0..2 {
            for q in &basis {
                let proj = dot(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= proj * qi;
                }
            }
        }
        let norm = norm2(&v);
        if norm < 1e-12 {
            return Err(CosaError::Numerical(format!(
                "gram-schmidt hit a dependent column at index {j}"
            )));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    Ok(Matrix::from_fn(rows, cols, |i, j| basis[j][i]))
}

/// Read-only view of a pair as a dictionary, with the factor Gram matrices cached.
///
/// The scale `c` is `1 / sqrt(m n)` for Gaussian pairs, which gives columns of
/// unit expected norm; orthonormalized pairs already have unit columns and use `c = 1`.
#[derive(Debug, Clone)]
pub struct DictionaryView<'a> {
    pair: &'a ProjectionPair,
    normalization: f64,
    /// `L^T L` (a x a)
    gram_left: Matrix,
    /// `R R^T` (b x b)
    gram_right: Matrix,
}

impl<'a> DictionaryView<'a> {
    pub fn new(pair: &'a ProjectionPair) -> Self {
        let normalization = if pair.orthonormalized {
            1.0
        } else {
            1.0 / ((pair.m * pair.n) as f64).sqrt()
        };
        let lt = pair.l.transpose();
        let gram_left = matmul(&lt, &pair.l).expect("square by construction");
        let gram_right = matmul(&pair.r, &pair.r.transpose()).expect("square by construction");
        DictionaryView {
            pair,
            normalization,
            gram_left,
            gram_right,
        }
    }

    pub fn pair(&self) -> &ProjectionPair {
        self.pair
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// `(i, j)` core position of coefficient `k`.
    #[inline]
    pub fn atom_position(&self, k: usize) -> (usize, usize) {
        (k % self.pair.a, k / self.pair.a)
    }

    /// `<psi_k, psi_l>` from the factor Gram matrices.
    #[inline]
    pub fn atom_inner(&self, k: usize, l: usize) -> f64 {
        let (ik, jk) = self.atom_position(k);
        let (il, jl) = self.atom_position(l);
        self.normalization * self.normalization * self.gram_left.get(ik, il) * self.gram_right.get(jk, jl)
    }

    /// Euclidean norm of every atom, indexed like the coefficients.
    pub fn atom_norms(&self) -> Vec<f64> {
        (0..self.pair.atoms()).map(|k| self.atom_inner(k, k).sqrt()).collect()
    }

    /// `Psi * alpha` reshaped to `m x n`, for a dense column-major core vector.
    pub fn apply_dense(&self, alpha: &[f64]) -> Result<Matrix> {
        let p = self.pair;
        if alpha.len() != p.atoms() {
            return Err(CosaError::shape("apply_dictionary", (p.atoms(), 1), (alpha.len(), 1)));
        }
        let y = Matrix::from_col_major(p.a, p.b, alpha)?;
        Ok(p.synthesize(&y)?.scale(self.normalization))
    }

    /// `Psi * alpha` for a sparse coefficient vector. Only the rows of `Y`, columns of
    /// `L` and rows of `R` touched by the support take part in the product.
    pub fn apply_sparse(&self, alpha: &SparseVector) -> Result<Matrix> {
        let p = self.pair;
        if alpha.dim() != p.atoms() {
            return Err(CosaError::shape("apply_dictionary", (p.atoms(), 1), (alpha.dim(), 1)));
        }
        let mut rows_used: Vec<usize> = Vec::new();
        let mut cols_used: Vec<usize> = Vec::new();
        for &k in alpha.support() {
            let (i, j) = self.atom_position(k);
            if !rows_used.contains(&i) {
                rows_used.push(i);
            }
            if !cols_used.contains(&j) {
                cols_used.push(j);
            }
        }
        rows_used.sort_unstable();
        cols_used.sort_unstable();
        let mut y_sub = Matrix::zeros(rows_used.len(), cols_used.len());
        for (&k, &v) in alpha.support().iter().zip(alpha.values()) {
            let (i, j) = self.atom_position(k);
            let ri = rows_used.binary_search(&i).unwrap();
            let cj = cols_used.binary_search(&j).unwrap();
            y_sub.set(ri, cj, v);
        }
        let l_sub = Matrix::from_fn(p.m, rows_used.len(), |r, c| p.l.get(r, rows_used[c]));
        let r_sub = Matrix::from_fn(cols_used.len(), p.n, |r, c| p.r.get(cols_used[r], c));
        Ok(matmul(&l_sub, &matmul(&y_sub, &r_sub)?)?.scale(self.normalization))
    }

    /// `||Psi * alpha||^2` from the factor Gram matrices, `O(s^2)` per vector.
    pub fn sparse_energy(&self, alpha: &SparseVector) -> Result<f64> {
        if alpha.dim() != self.pair.atoms() {
            return Err(CosaError::shape(
                "sparse_energy",
                (self.pair.atoms(), 1),
                (alpha.dim(), 1),
            ));
        }
        let support = alpha.support();
        let values = alpha.values();
        let mut total = 0.0;
        for (p, &kp) in support.iter().enumerate() {
            let mut row = 0.0;
            for (q, &kq) in support.iter().enumerate() {
                row += values[q] * self.atom_inner(kp, kq);
            }
            total += values[p] * row;
        }
        Ok(total)
    }

    /// Raw correlations `Psi^T vec(E)`, returned as the `a x b` matrix `c * L^T E R^T`.
    /// Entry `(i, j)` is `<psi_(i,j), vec(E)>`; divide by the atom norms for cosines.
    pub fn correlation_map(&self, e: &Matrix) -> Result<Matrix> {
        let p = self.pair;
        if e.shape() != (p.m, p.n) {
            return Err(CosaError::shape("correlation_map", (p.m, p.n), e.shape()));
        }
        let lt_e = matmul(&p.l.transpose(), e)?;
        Ok(matmul(&lt_e, &p.r.transpose())?.scale(self.normalization))
    }

    /// Mutual coherence of the normalized atoms, `max(mu_L, mu_R)`.
    ///
    /// The cosine between atoms `(i, j)` and `(k, l)` factors as
    /// `cos_L(i, k) * cos_R(j, l)`, so the maximum over distinct atoms is reached
    /// when one factor is an identical column (cosine 1).
    pub fn coherence(&self) -> Result<f64> {
        let p = self.pair;
        if p.atoms() < 2 {
            return Err(CosaError::arg("coherence needs at least two atoms"));
        }
        Ok(max_off_diagonal_cosine(&self.gram_left).max(max_off_diagonal_cosine(&self.gram_right)))
    }
}

/// Largest `|G_ij| / sqrt(G_ii G_jj)` over `i != j`; 0 for a 1x1 Gram matrix.
fn max_off_diagonal_cosine(gram: &Matrix) -> f64 {
    let n = gram.rows();
    let mut best = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let denom = (gram.get(i, i) * gram.get(j, j)).sqrt();
            if denom > 0.0 {
                best = best.max(gram.get(i, j).abs() / denom);
            }
        }
    }
    best
}

/// Convenience wrapper over [`DictionaryView::coherence`].
pub fn coherence(view: &DictionaryView<'_>) -> Result<f64> {
    view.coherence()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randgen::RngStream;
    use proptest::prelude::*;

    /// Dense `c * (R^T kron L)`, mn x ab, column-major vec conventions on both sides.
    fn materialized_psi(pair: &ProjectionPair, c: f64) -> Matrix {
        let (m, n, a, b) = (pair.m(), pair.n(), pair.a(), pair.b());
        let rt = pair.right().transpose();
        let mut psi = Matrix::zeros(m * n, a * b);
        // standard Kronecker block layout: block (q, j) of R^T kron L is R^T[q][j] * L
        for q in 0..n {
            for j in 0..b {
                for p in 0..m {
                    for i in 0..a {
                        psi.set(q * m + p, j * a + i, c * rt.get(q, j) * pair.left().get(p, i));
                    }
                }
            }
        }
        psi
    }

    fn mat_vec(a: &Matrix, x: &[f64]) -> Vec<f64> {
        (0..a.rows()).map(|i| dot(a.row(i), x)).collect()
    }

    fn random_vec(seed: u64, len: usize) -> Vec<f64> {
        let mut rng = RngStream::new(seed);
        (0..len).map(|_| rng.next_normal()).collect()
    }

    #[test]
    fn pair_regenerates() {
        let p1 = ProjectionPair::new(7, 512, 256, 32, 8, false).unwrap();
        let p2 = ProjectionPair::new(7, 512, 256, 32, 8, false).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(p1.left(), &gaussian_matrix(derive_seed(7, 0), 32, 512).transpose());
        assert_eq!(p1.right(), &gaussian_matrix(derive_seed(7, 1), 8, 256));
    }

    #[test]
    fn larger_core_extends_smaller() {
        let small = ProjectionPair::new(19, 30, 20, 4, 3, false).unwrap();
        let big = ProjectionPair::new(19, 30, 20, 9, 7, false).unwrap();
        for i in 0..30 {
            for j in 0..4 {
                assert_eq!(small.left().get(i, j), big.left().get(i, j));
            }
        }
        for i in 0..3 {
            assert_eq!(small.right().row(i), big.right().row(i));
        }
    }

    #[test]
    fn pair_rejects_expansion() {
        assert!(ProjectionPair::new(1, 4, 4, 5, 2, false).is_err());
        assert!(ProjectionPair::new(1, 4, 4, 2, 5, false).is_err());
        assert!(ProjectionPair::new(1, 4, 4, 0, 2, false).is_err());
    }

    #[test]
    fn orthonormalized_pair_is_orthonormal() {
        let p = ProjectionPair::new(3, 40, 30, 12, 9, true).unwrap();
        let ltl = p.left().transpose().matmul(p.left()).unwrap();
        let rrt = p.right().matmul(&p.right().transpose()).unwrap();
        assert!(ltl.max_abs_diff(&Matrix::identity(12)).unwrap() <= 1e-10);
        assert!(rrt.max_abs_diff(&Matrix::identity(9)).unwrap() <= 1e-10);
    }

    #[test]
    fn full_orthonormal_dictionary_is_isometric() {
        let p = ProjectionPair::new(11, 6, 5, 6, 5, true).unwrap();
        let view = DictionaryView::new(&p);
        for seed in 0..10 {
            let alpha = random_vec(seed, 30);
            let out = view.apply_dense(&alpha).unwrap();
            let ratio = crate::numerics::frobenius_norm(&out).powi(2) / dot(&alpha, &alpha);
            assert!((ratio - 1.0).abs() <= 1e-10, "{ratio}");
        }
    }

    #[test]
    fn apply_zero_and_rank_one() {
        let p = ProjectionPair::new(5, 4, 3, 2, 2, false).unwrap();
        let view = DictionaryView::new(&p);
        assert!(view.apply_dense(&[0.0; 4]).unwrap().is_zero());

        let p = ProjectionPair::new(8, 5, 4, 1, 1, false).unwrap();
        let view = DictionaryView::new(&p);
        let out = view.apply_dense(&[2.5]).unwrap();
        let c = 1.0 / 20f64.sqrt();
        let want = Matrix::from_fn(5, 4, |i, j| 2.5 * p.left().get(i, 0) * p.right().get(0, j) * c);
        assert!(out.max_abs_diff(&want).unwrap() <= 1e-14);
    }

    #[test]
    fn apply_matches_materialized_kronecker() {
        let p = ProjectionPair::new(21, 3, 4, 2, 2, false).unwrap();
        let view = DictionaryView::new(&p);
        let c = 1.0 / 12f64.sqrt();
        let psi = materialized_psi(&p, c);
        let alpha = random_vec(4, 4);
        let got = view.apply_dense(&alpha).unwrap().vec_col_major();
        let want = mat_vec(&psi, &alpha);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12);
        }
    }

    #[test]
    fn sparse_apply_and_energy_agree_with_dense() {
        let p = ProjectionPair::new(2, 9, 7, 4, 3, false).unwrap();
        let view = DictionaryView::new(&p);
        let sv = SparseVector::new(12, vec![0, 5, 6, 11], vec![1.5, -0.5, 2.0, 0.25]).unwrap();
        let dense = view.apply_dense(&sv.to_dense()).unwrap();
        let sparse = view.apply_sparse(&sv).unwrap();
        assert!(dense.max_abs_diff(&sparse).unwrap() <= 1e-13);
        let energy = crate::numerics::frobenius_norm(&dense).powi(2);
        assert!((view.sparse_energy(&sv).unwrap() - energy).abs() <= 1e-12 * energy.max(1.0));
    }

    #[test]
    fn shape_errors() {
        let p = ProjectionPair::new(2, 9, 7, 4, 3, false).unwrap();
        let view = DictionaryView::new(&p);
        assert!(view.apply_dense(&[1.0; 5]).is_err());
        assert!(view.correlation_map(&Matrix::zeros(7, 9)).is_err());
        let single = ProjectionPair::new(2, 3, 3, 1, 1, false).unwrap();
        assert!(DictionaryView::new(&single).coherence().is_err());
    }

    #[test]
    fn coherence_matches_brute_force() {
        for seed in 0..8 {
            let p = ProjectionPair::new(seed, 3, 4, 2, 2, false).unwrap();
            let view = DictionaryView::new(&p);
            let psi = materialized_psi(&p, view.normalization());
            let cols: Vec<Vec<f64>> = (0..4).map(|k| psi.col_vec(k)).collect();
            let mut brute = 0.0_f64;
            for i in 0..4 {
                for j in (i + 1)..4 {
                    let cos = dot(&cols[i], &cols[j]) / (norm2(&cols[i]) * norm2(&cols[j]));
                    brute = brute.max(cos.abs());
                }
            }
            assert!((view.coherence().unwrap() - brute).abs() <= 1e-12);
        }
    }

    #[test]
    fn orthonormal_coherence_vanishes() {
        let p = ProjectionPair::new(4, 20, 16, 6, 5, true).unwrap();
        assert!(DictionaryView::new(&p).coherence().unwrap() <= 1e-10);
    }

    #[test]
    fn correlation_map_matches_materialized_transpose() {
        let p = ProjectionPair::new(13, 3, 4, 2, 2, false).unwrap();
        let view = DictionaryView::new(&p);
        let psi = materialized_psi(&p, view.normalization());
        let e = gaussian_matrix(99, 3, 4);
        let got = view.correlation_map(&e).unwrap().vec_col_major();
        let want = mat_vec(&psi.transpose(), &e.vec_col_major());
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12);
        }
        assert!(view.correlation_map(&Matrix::zeros(3, 4)).unwrap().is_zero());
    }

    #[test]
    fn correlation_map_isolates_orthonormal_atom() {
        let p = ProjectionPair::new(6, 10, 8, 4, 3, true).unwrap();
        let view = DictionaryView::new(&p);
        let k = 2 + 4; // (i, j) = (2, 1)
        let mut alpha = vec![0.0; 12];
        alpha[k] = 1.0;
        let corr = view.correlation_map(&view.apply_dense(&alpha).unwrap()).unwrap();
        // Unit atoms: the matched entry is exactly <psi_k, psi_k> = 1.
        assert!((corr.get(2, 1) - 1.0).abs() <= 1e-10);
        for i in 0..4 {
            for j in 0..3 {
                if (i, j) != (2, 1) {
                    assert!(corr.get(i, j).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn atom_norms_concentrate_at_proxy_scale() {
        let p = ProjectionPair::new(1, 512, 256, 32, 8, false).unwrap();
        let norms = DictionaryView::new(&p).atom_norms();
        assert!(norms.iter().all(|&v| (0.8..=1.2).contains(&v)), "{norms:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn kronecker_vec_identity(seed in any::<u64>(), m in 1usize..=6, n in 1usize..=6, a_frac in 0.0f64..1.0, b_frac in 0.0f64..1.0) {
            let a = 1 + (a_frac * m as f64) as usize % m;
            let b = 1 + (b_frac * n as f64) as usize % n;
            let p = ProjectionPair::new(seed, m, n, a, b, false).unwrap();
            let y = gaussian_matrix(seed ^ 0xABCD, a, b);
            let lhs = p.synthesize(&y).unwrap().vec_col_major();
            let rhs = mat_vec(&materialized_psi(&p, 1.0), &y.vec_col_major());
            for (l, r) in lhs.iter().zip(&rhs) {
                prop_assert!((l - r).abs() <= 1e-12);
            }
        }
    }
}
