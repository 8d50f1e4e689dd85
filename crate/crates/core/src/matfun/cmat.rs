//! Small complex dense-matrix helpers backing the spectral computations.

use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn matmul(&self, other: &CMat) -> CMat {
        assert_eq!(self.cols, other.rows);
        let mut out = CMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                if aik == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += aik * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(&other.data) {
            *v -= w;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Right-multiply by a diagonal matrix given as a vector.
    pub fn mul_diag(&self, diag: &[Complex64]) -> CMat {
        assert_eq!(self.cols, diag.len());
        let mut out = self.clone();
        for i in 0..out.rows {
            for j in 0..out.cols {
                out[(i, j)] *= diag[j];
            }
        }
        out
    }

    /// Inverse by LU with partial pivoting; `None` if numerically singular.
    pub fn invert(&self) -> Option<CMat> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut lu = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].norm();
            for i in k + 1..n {
                let v = lu[(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best < 1e-300 {
                return None;
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = t;
                }
            }
            let piv = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / piv;
                lu[(i, k)] = f;
                for j in k + 1..n {
                    let v = lu[(k, j)];
                    lu[(i, j)] -= f * v;
                }
            }
        }
        let mut inv = CMat::zeros(n, n);
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for e in 0..n {
            for (i, c) in col.iter_mut().enumerate() {
                *c = if perm[i] == e {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
            for i in 0..n {
                for k in 0..i {
                    let v = lu[(i, k)] * col[k];
                    col[i] -= v;
                }
            }
            for i in (0..n).rev() {
                for k in i + 1..n {
                    let v = lu[(i, k)] * col[k];
                    col[i] -= v;
                }
                col[i] /= lu[(i, i)];
            }
            for i in 0..n {
                inv[(i, e)] = col[i];
            }
        }
        Some(inv)
    }

    /// Largest imaginary magnitude, used to confirm a matrix is real.
    pub fn max_imag_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.im.abs()))
    }

    pub fn real_part(&self) -> crate::mat::Mat {
        let mut out = crate::mat::Mat::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self[(i, j)].re;
            }
        }
        out
    }

    pub fn from_real(m: &crate::mat::Mat) -> CMat {
        let mut out = CMat::zeros(m.rows(), m.cols());
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                out[(i, j)] = Complex64::new(m[(i, j)], 0.0);
            }
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_inverse_roundtrip() {
        let mut a = CMat::zeros(2, 2);
        a[(0, 0)] = Complex64::new(1.0, 1.0);
        a[(0, 1)] = Complex64::new(2.0, -0.5);
        a[(1, 0)] = Complex64::new(0.0, 3.0);
        a[(1, 1)] = Complex64::new(-1.0, 0.25);
        let inv = a.invert().unwrap();
        let prod = a.matmul(&inv);
        let err = prod.sub(&CMat::identity(2)).frobenius_norm();
        assert!(err < 1e-13, "err = {err}");
    }
}
