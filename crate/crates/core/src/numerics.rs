//! Dense row-major matrices and the handful of kernels the rest of the crate needs.
//!
//! Every reduction runs in a fixed order (row-major outer loops, the summation
//! index innermost), so results are bit-reproducible across runs and thread counts.

use std::fmt;

use crate::error::{CosaError, Result};

/// Dense `rows x cols` matrix of `f64`, stored row-major.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{})", self.rows, self.cols)?;
        if self.data.len() <= 64 {
            f.debug_list()
                .entries(self.data.chunks(self.cols.max(1)))
                .finish()?;
        }
        Ok(())
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CosaError::arg(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested row slices. Panics on ragged input; meant for fixtures.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Column vector from a slice.
    pub fn column(values: &[f64]) -> Self {
        Matrix {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col_vec(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |x, y| x + y)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |x, y| x - y)
    }

    fn zip_with(&self, other: &Matrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(CosaError::shape(op, self.shape(), other.shape()));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&x, &y)| f(x, y))
                .collect(),
        })
    }

    /// Largest absolute entrywise difference; shapes must agree.
    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        Ok(self
            .sub(other)?
            .data
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs())))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Column-major vectorization, `vec(A)[i + j*rows] = A[i][j]`.
    pub fn vec_col_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(self.get(i, j));
            }
        }
        out
    }

    /// Inverse of [`Matrix::vec_col_major`].
    pub fn from_col_major(rows: usize, cols: usize, v: &[f64]) -> Result<Matrix> {
        if v.len() != rows * cols {
            return Err(CosaError::arg(format!(
                "column-major vector of length {} cannot fill {rows}x{cols}",
                v.len()
            )));
        }
        Ok(Matrix::from_fn(rows, cols, |i, j| v[i + j * rows]))
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        matmul(self, other)
    }
}

/// `A * B` with the summation index innermost. B is transposed up front so the
/// inner loop is contiguous; the order of additions is unchanged.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(CosaError::shape("matmul", a.shape(), b.shape()));
    }
    let bt = b.transpose();
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let ar = a.row(i);
        for j in 0..b.cols {
            out.data[i * b.cols + j] = dot(ar, bt.row(j));
        }
    }
    Ok(out)
}

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y) {
        acc += a * b;
    }
    acc
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn frobenius_norm(a: &Matrix) -> f64 {
    a.data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Linear-interpolation percentile on rank `q * (N - 1)` of the sorted values.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(CosaError::arg("percentile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(CosaError::arg(format!("percentile fraction {q} outside [0, 1]")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CosaError::arg("percentile input contains non-finite values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    if lo == hi {
        return Ok(sorted[lo]);
    }
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Arithmetic mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Singular values in non-increasing order, with optional factors such that
/// `A = U * diag(sigma) * V^T` (`U` is rows x k, `V` is cols x k, k = min(rows, cols)).
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub singular_values: Vec<f64>,
    pub u: Option<Matrix>,
    pub v: Option<Matrix>,
}

const SVD_MAX_DIM: usize = 4096;
const SVD_MAX_SWEEPS: usize = 60;
const SVD_TOL: f64 = 1e-12;

pub fn jacobi_svd(a: &Matrix) -> Result<SvdResult> {
    svd_impl(a, true)
}

/// Singular values only.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    Ok(svd_impl(a, false)?.singular_values)
}

/// One-sided (Hestenes) Jacobi. Works on the columns of A, or of A^T when A is wide.
fn svd_impl(a: &Matrix, want_factors: bool) -> Result<SvdResult> {
    if a.rows > SVD_MAX_DIM || a.cols > SVD_MAX_DIM {
        return Err(CosaError::arg(format!(
            "svd input {}x{} exceeds the {SVD_MAX_DIM} per-side limit",
            a.rows, a.cols
        )));
    }
    if a.rows == 0 || a.cols == 0 {
        return Err(CosaError::arg("svd of an empty matrix"));
    }
    let wide = a.cols > a.rows;
    let work_src = if wide { a.transpose() } else { a.clone() };
    let (m, n) = work_src.shape();

    // columns stored contiguously
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| work_src.col_vec(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let total: f64 = cols.iter().map(|c| dot(c, c)).sum();
    let negligible = total * 1e-32;

    let mut converged = false;
    let mut residual = 0.0_f64;
    for _sweep in 0..SVD_MAX_SWEEPS {
        let mut rotated = false;
        residual = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let gamma = dot(&cols[p], &cols[q]);
                let rel = gamma.abs() / (alpha * beta).sqrt();
                if rel <= SVD_TOL {
                    continue;
                }
                residual = residual.max(rel);
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                if want_factors {
                    rotate(&mut v, p, q, c, s);
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(CosaError::Numerical(format!(
            "jacobi svd did not converge in {SVD_MAX_SWEEPS} sweeps (off-diagonal residual {residual:e})"
        )));
    }

    let norms: Vec<f64> = cols.iter().map(|c| norm2(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let singular_values: Vec<f64> = order.iter().map(|&k| norms[k]).collect();

    if !want_factors {
        return Ok(SvdResult {
            singular_values,
            u: None,
            v: None,
        });
    }

    let mut u_mat = Matrix::zeros(m, n);
    let mut v_mat = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        for i in 0..m {
            let val = if sigma > 0.0 { cols[src][i] / sigma } else { 0.0 };
            u_mat.set(i, dst, val);
        }
        for i in 0..n {
            v_mat.set(i, dst, v[src][i]);
        }
    }
    let (u, v) = if wide { (v_mat, u_mat) } else { (u_mat, v_mat) };
    Ok(SvdResult {
        singular_values,
        u: Some(u),
        v: Some(v),
    })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let cp = &mut head[p];
    let cq = &mut tail[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Ratio below which the smallest singular value is treated as zero.
pub const RANK_DEFICIENT_RATIO: f64 = 1e-14;

/// `sigma_max / sigma_min`, or `f64::INFINITY` when the matrix is numerically
/// rank deficient (`sigma_min < 1e-14 * sigma_max`).
pub fn condition_number(a: &Matrix) -> Result<f64> {
    if a.is_zero() {
        return Err(CosaError::arg("condition number of a zero matrix"));
    }
    let sv = singular_values(a)?;
    Ok(condition_from_singular_values(&sv))
}

pub(crate) fn condition_from_singular_values(sv: &[f64]) -> f64 {
    let max = sv[0];
    let min = *sv.last().unwrap();
    if min < RANK_DEFICIENT_RATIO * max {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solve the symmetric positive definite system `G x = rhs` by Cholesky.
/// Returns `None` if `G` is not numerically positive definite.
pub(crate) fn cholesky_solve(g: &[f64], n: usize, rhs: &[f64]) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = g[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = rhs[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randgen::gaussian_matrix;
    use proptest::prelude::*;

    /// j-i-k nesting, no transpose; the reversed-order oracle for matmul.
    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = vec![0.0; a.rows() * b.cols()];
        for j in 0..b.cols() {
            for i in 0..a.rows() {
                let mut s = 0.0;
                for k in (0..a.cols()).rev() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out[i * b.cols() + j] = s;
            }
        }
        Matrix::from_vec(a.rows(), b.cols(), out).unwrap()
    }

    /// Cyclic two-sided Jacobi eigenvalues of a symmetric matrix.
    fn symmetric_eigenvalues(s: &Matrix) -> Vec<f64> {
        let n = s.rows();
        let mut a: Vec<Vec<f64>> = (0..n).map(|i| s.row(i).to_vec()).collect();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i][j] * a[i][j])
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let sn = t * c;
                    for k in 0..n {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - sn * akq;
                        a[k][q] = sn * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - sn * aqk;
                        a[q][k] = sn * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        ev.sort_by(|x, y| y.total_cmp(x));
        ev
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let a = gaussian_matrix(3, 3, 4);
        assert_eq!(Matrix::identity(3).matmul(&a).unwrap(), a);
        let p = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let q = Matrix::from_rows(&[&[5.0], &[6.0]]);
        assert_eq!(p.matmul(&q).unwrap(), Matrix::from_rows(&[&[17.0], &[39.0]]));
    }

    #[test]
    fn matmul_matches_reversed_nesting_oracle() {
        let a = gaussian_matrix(11, 7, 5);
        let b = gaussian_matrix(12, 5, 3);
        let got = a.matmul(&b).unwrap();
        let want = naive_matmul(&a, &b);
        assert!(got.max_abs_diff(&want).unwrap() <= 1e-12);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(4, 5)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("4x5"), "{msg}");
    }

    #[test]
    fn frobenius_cases() {
        assert_eq!(frobenius_norm(&Matrix::zeros(4, 3)), 0.0);
        assert_eq!(frobenius_norm(&Matrix::from_rows(&[&[3.0, 4.0]])), 5.0);
        let a = gaussian_matrix(21, 10, 10);
        let mut acc = 0.0;
        for i in 0..10 {
            for j in 0..10 {
                acc += a.get(i, j).powi(2);
            }
        }
        assert!((frobenius_norm(&a) - acc.sqrt()).abs() <= 1e-12);
    }

    #[test]
    fn percentile_cases() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5).unwrap(), 3.0);
        assert!((percentile(&[0.0, 10.0], 0.95).unwrap() - 9.5).abs() < 1e-12);
        for q in [0.0, 0.3, 0.95, 1.0] {
            assert_eq!(percentile(&[2.5; 7], q).unwrap(), 2.5);
        }
        assert!(percentile(&[], 0.5).is_err());
        assert!(percentile(&[1.0], 1.5).is_err());
    }

    #[test]
    fn svd_diagonal_and_rank_one() {
        let sv = singular_values(&Matrix::diag(&[3.0, 1.0])).unwrap();
        assert!((sv[0] - 3.0).abs() < 1e-14 && (sv[1] - 1.0).abs() < 1e-14);

        // |u| = 2, |v| = 3
        let u = [2.0 / 3.0_f64.sqrt(); 3];
        let v = [0.0, 3.0, 0.0, 0.0];
        let a = Matrix::from_fn(3, 4, |i, j| u[i] * v[j]);
        let sv = singular_values(&a).unwrap();
        assert!((sv[0] - 6.0).abs() < 1e-12, "{sv:?}");
        assert!(sv[1..].iter().all(|&s| s.abs() < 1e-12));
    }

    #[test]
    fn svd_matches_gram_eigenvalues() {
        let a = gaussian_matrix(77, 8, 5);
        let sv = singular_values(&a).unwrap();
        let ev = symmetric_eigenvalues(&a.transpose().matmul(&a).unwrap());
        for (s, e) in sv.iter().zip(&ev) {
            assert!((s * s - e).abs() <= 1e-8 * ev[0], "{s} {e}");
        }
    }

    #[test]
    fn svd_reconstructs_wide_and_tall() {
        for (r, c) in [(9, 4), (4, 9), (6, 6)] {
            let a = gaussian_matrix(r as u64 * 31 + c as u64, r, c);
            let svd = jacobi_svd(&a).unwrap();
            let u = svd.u.unwrap();
            let v = svd.v.unwrap();
            let k = r.min(c);
            assert_eq!(u.shape(), (r, k));
            assert_eq!(v.shape(), (c, k));
            let us = Matrix::from_fn(r, k, |i, j| u.get(i, j) * svd.singular_values[j]);
            let rec = us.matmul(&v.transpose()).unwrap();
            let err = frobenius_norm(&rec.sub(&a).unwrap());
            assert!(err <= 1e-9 * frobenius_norm(&a), "{err}");
        }
    }

    #[test]
    fn condition_number_cases() {
        assert!((condition_number(&Matrix::identity(4)).unwrap() - 1.0).abs() < 1e-14);
        assert!((condition_number(&Matrix::diag(&[10.0, 0.1])).unwrap() - 100.0).abs() < 1e-10);
        let deficient = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0], &[1.0, 0.0, 1.0]]);
        assert_eq!(condition_number(&deficient).unwrap(), f64::INFINITY);
        assert!(condition_number(&Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn cholesky_solves_spd() {
        let g = [4.0, 2.0, 2.0, 3.0];
        let x = cholesky_solve(&g, 2, &[2.0, 1.0]).unwrap();
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-14);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-14);
        assert!(cholesky_solve(&[1.0, 1.0, 1.0, 1.0], 2, &[1.0, 1.0]).is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn matmul_is_associative(seed in any::<u64>(), p in 1usize..12, q in 1usize..12, r in 1usize..12, s in 1usize..12) {
            let a = gaussian_matrix(seed, p, q);
            let b = gaussian_matrix(seed ^ 1, q, r);
            let c = gaussian_matrix(seed ^ 2, r, s);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let scale = frobenius_norm(&left).max(1.0);
            prop_assert!(left.max_abs_diff(&right).unwrap() <= 1e-10 * scale);
        }

        #[test]
        fn svd_energy_matches_frobenius(seed in any::<u64>(), r in 1usize..10, c in 1usize..10) {
            let a = gaussian_matrix(seed, r, c);
            let sv = singular_values(&a).unwrap();
            prop_assert!(sv.windows(2).all(|w| w[0] >= w[1]));
            let energy: f64 = sv.iter().map(|s| s * s).sum();
            let f2 = frobenius_norm(&a).powi(2);
            prop_assert!((energy - f2).abs() <= 1e-9 * f2);
        }

        #[test]
        fn percentile_monotone_and_bounded(values in prop::collection::vec(-1e3f64..1e3, 1..40), q1 in 0.0f64..=1.0, q2 in 0.0f64..=1.0) {
            let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
            let a = percentile(&values, lo).unwrap();
            let b = percentile(&values, hi).unwrap();
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(a <= b);
            prop_assert!(a >= min && b <= max);
        }

        #[test]
        fn kernels_are_pure(seed in any::<u64>()) {
            let a = gaussian_matrix(seed, 6, 5);
            let b = gaussian_matrix(seed ^ 9, 5, 4);
            let (x, y) = (a.matmul(&b).unwrap(), a.matmul(&b).unwrap());
            prop_assert_eq!(x.data(), y.data());
            prop_assert_eq!(singular_values(&a).unwrap(), singular_values(&a).unwrap());
        }
    }
}
