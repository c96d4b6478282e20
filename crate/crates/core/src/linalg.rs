//! Dense row-major matrices and a symmetric eigensolver.

use crate::error::{Error, Result};

/// Default convergence threshold for [`jacobi_eigh`], relative to the input's
/// Frobenius norm (floored at 1).
pub const JACOBI_TOL: f64 = 1e-10;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Asymmetry tolerated by [`jacobi_eigh`], relative to the largest entry
/// (floored at 1).
const SYMMETRY_TOL: f64 = 1e-10;

/// Dense real matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                context: "matrix data length",
                expected: rows * cols,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!(
                "non-finite matrix entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Dimension {
                    context: "matrix row length",
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact panics on a zero chunk size
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        matmul(self, other)
    }

    /// New matrix holding the given rows, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// New matrix holding the given columns, in order.
    pub fn select_columns(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * indices.len());
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(indices.iter().map(|&c| row[c]));
        }
        Matrix {
            rows: self.rows,
            cols: indices.len(),
            data,
        }
    }

    /// Largest absolute entry-wise difference; infinite on shape mismatch.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Standard matrix product `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Dimension {
            context: "matmul inner dimension",
            expected: a.cols,
            found: b.rows,
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let a_row = a.row(i);
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Eigenpairs of a symmetric matrix.
///
/// Eigenvalues are sorted in descending order and column `j` of
/// `eigenvectors` belongs to `eigenvalues[j]`. Each column is oriented so that
/// its largest-magnitude entry is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl EigenDecomposition {
    /// `P Λ Pᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.eigenvalues.len();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for (k, lambda) in self.eigenvalues.iter().enumerate() {
                    s += self.eigenvectors.get(i, k) * lambda * self.eigenvectors.get(j, k);
                }
                out.set(i, j, s);
            }
        }
        out
    }
}

/// Cyclic Jacobi eigensolver with the default tolerance and sweep limit.
pub fn eigh(sym: &Matrix) -> Result<EigenDecomposition> {
    jacobi_eigh(sym, JACOBI_TOL, JACOBI_MAX_SWEEPS)
}

/// Diagonalizes a symmetric matrix with cyclic Jacobi rotations.
///
/// Sweeps stop once the off-diagonal Frobenius norm drops below
/// `tol * max(1, ‖sym‖_F)`.
pub fn jacobi_eigh(sym: &Matrix, tol: f64, max_sweeps: usize) -> Result<EigenDecomposition> {
    let n = sym.rows;
    if sym.cols != n {
        return Err(Error::arg(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            sym.rows, sym.cols
        )));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::arg(format!("tolerance must be positive, got {tol}")));
    }
    let scale = sym.data.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (sym.get(i, j) - sym.get(j, i)).abs();
            if d > SYMMETRY_TOL * scale {
                return Err(Error::arg(format!(
                    "matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {d:e}"
                )));
            }
        }
    }

    let mut a = sym.clone();
    // symmetrize so rotations act on an exactly symmetric matrix
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a.get(i, j) + a.get(j, i));
            a.set(i, j, m);
            a.set(j, i, m);
        }
    }
    let threshold = tol * sym.frobenius_norm().max(1.0);
    let mut v = Matrix::identity(n);

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&a);
        if off < threshold {
            break;
        }
        if sweeps == max_sweeps {
            return Err(Error::Convergence {
                sweeps,
                off_norm: off,
            });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
        sweeps += 1;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).total_cmp(&a.get(i, i)).then(i.cmp(&j)));

    let eigenvalues: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut eigenvectors = v.select_columns(&order);
    for c in 0..n {
        let mut pivot = 0;
        for r in 1..n {
            if eigenvectors.get(r, c).abs() > eigenvectors.get(pivot, c).abs() {
                pivot = r;
            }
        }
        if eigenvectors.get(pivot, c) < 0.0 {
            for r in 0..n {
                let x = eigenvectors.get(r, c);
                eigenvectors.set(r, c, -x);
            }
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let mut s = 0.0;
    for i in 0..a.rows {
        for j in 0..a.cols {
            if i != j {
                s += a.get(i, j) * a.get(i, j);
            }
        }
    }
    s.sqrt()
}

/// Applies the rotation that zeroes `a[p][q]`, accumulating it into `v`.
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = a.get(p, q);
    if apq == 0.0 {
        return;
    }
    let app = a.get(p, p);
    let aqq = a.get(q, q);
    let theta = (aqq - app) / (2.0 * apq);
    // smaller root of t² + 2θt - 1 = 0, stable for large |θ|
    let t = if theta.is_infinite() {
        0.0
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    if t == 0.0 {
        a.set(p, q, 0.0);
        a.set(q, p, 0.0);
        return;
    }
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = a.rows;

    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        a.set(k, p, new_kp);
        a.set(p, k, new_kp);
        a.set(k, q, new_kq);
        a.set(q, k, new_kq);
    }
    a.set(p, p, app - t * apq);
    a.set(q, q, aqq + t * apq);
    a.set(p, q, 0.0);
    a.set(q, p, 0.0);

    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::new(rows, cols, data).unwrap()
    }

    fn random_symmetric(n: usize, rng: &mut impl Rng) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let x = rng.random_range(-1.0..1.0);
                m.set(i, j, x);
                m.set(j, i, x);
            }
        }
        m
    }

    fn naive_product(a: &Matrix, b: &Matrix) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; b.cols()]; a.rows()];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                for k in 0..a.cols() {
                    *cell += a.get(i, k) * b.get(k, j);
                }
            }
        }
        out
    }

    #[test]
    fn identity_times_matrix() {
        let mut rng = seed::rng(1);
        let a = random_matrix(3, 4, &mut rng);
        assert_eq!(Matrix::identity(3).matmul(&a).unwrap(), a);
    }

    #[test]
    fn small_product() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let p = a.matmul(&b).unwrap();
        assert_eq!(p.shape(), (2, 1));
        assert_eq!(p.as_slice(), &[2.0, 4.0]);
    }

    #[test]
    fn product_matches_triple_loop() {
        let mut rng = seed::rng(2);
        let a = random_matrix(4, 3, &mut rng);
        let b = random_matrix(3, 5, &mut rng);
        let p = matmul(&a, &b).unwrap();
        let oracle = naive_product(&a, &b);
        for (i, row) in oracle.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((p.get(i, j) - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn product_shape_mismatch() {
        let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0]).is_err());
    }

    #[test]
    fn diagonal_input() {
        let d = eigh(&Matrix::from_diag(&[2.0, 1.0])).unwrap();
        assert_eq!(d.eigenvalues, vec![2.0, 1.0]);
        assert_eq!(d.eigenvectors, Matrix::identity(2));

        let d = eigh(&Matrix::from_diag(&[1.0, 3.0, 2.0])).unwrap();
        assert_eq!(d.eigenvalues, vec![3.0, 2.0, 1.0]);
        assert_eq!(d.eigenvectors.column(0), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn exchange_matrix() {
        let m = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let d = eigh(&m).unwrap();
        assert!((d.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((d.eigenvalues[1] + 1.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = d.eigenvectors.column(0);
        let v1 = d.eigenvectors.column(1);
        assert!((v0[0] - h).abs() < 1e-12 && (v0[1] - h).abs() < 1e-12);
        // (1,-1)/√2 up to sign; entries tie in magnitude so the first wins
        assert!((v1[0] - h).abs() < 1e-12 && (v1[1] + h).abs() < 1e-12);
    }

    #[test]
    fn random_symmetric_reconstructs() {
        let mut rng = seed::rng(3);
        let m = random_symmetric(6, &mut rng);
        let d = eigh(&m).unwrap();
        assert!(d.reconstruct().max_abs_diff(&m) < 1e-8);
        let ptp = d.eigenvectors.transpose().matmul(&d.eigenvectors).unwrap();
        assert!(ptp.max_abs_diff(&Matrix::identity(6)) < 1e-8);
        assert!(d.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eigh_argument_errors() {
        assert!(matches!(
            eigh(&Matrix::zeros(2, 3)),
            Err(Error::Argument(_))
        ));
        let asym = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(eigh(&asym), Err(Error::Argument(_))));
    }

    #[test]
    fn eigh_reports_non_convergence() {
        let mut rng = seed::rng(4);
        let m = random_symmetric(8, &mut rng);
        assert!(matches!(
            jacobi_eigh(&m, 1e-10, 0),
            Err(Error::Convergence { sweeps: 0, .. })
        ));
    }

    #[test]
    fn psd_eigenvalues_nonnegative() {
        let mut rng = seed::rng(5);
        let x = random_matrix(3, 7, &mut rng);
        // rank 3, so four eigenvalues are zero up to rounding
        let gram = x.transpose().matmul(&x).unwrap();
        let d = eigh(&gram).unwrap();
        assert!(d.eigenvalues.iter().all(|&l| l >= -1e-10));
    }

    proptest! {
        #[test]
        fn matmul_is_associative(s in any::<u64>(), m in 1usize..5, n in 1usize..5, p in 1usize..5, q in 1usize..5) {
            let mut rng = seed::rng(s);
            let a = random_matrix(m, n, &mut rng);
            let b = random_matrix(n, p, &mut rng);
            let c = random_matrix(p, q, &mut rng);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            prop_assert!(left.max_abs_diff(&right) < 1e-9);
        }

        #[test]
        fn eigh_invariants(s in any::<u64>(), n in 1usize..12) {
            let mut rng = seed::rng(s);
            let m = random_symmetric(n, &mut rng);
            let d = eigh(&m).unwrap();
            prop_assert!(d.reconstruct().max_abs_diff(&m) < 1e-8);
            let ptp = d.eigenvectors.transpose().matmul(&d.eigenvectors).unwrap();
            prop_assert!(ptp.max_abs_diff(&Matrix::identity(n)) < 1e-8);
            prop_assert!(d.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
