//! Dense row-major `f64` matrices.
//!
//! This is the storage type shared by every module: model parameters,
//! observation batches, latent states and gradients are all `Mat`s.
//! Vectors are 1×n or n×1 matrices.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn row_vector(v: &[f64]) -> Self {
        Mat {
            rows: 1,
            cols: v.len(),
            data: v.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Rows `r0..r0+nr` as a new matrix.
    pub fn row_block(&self, r0: usize, nr: usize) -> Mat {
        assert!(r0 + nr <= self.rows);
        Mat {
            rows: nr,
            cols: self.cols,
            data: self.data[r0 * self.cols..(r0 + nr) * self.cols].to_vec(),
        }
    }

    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Mat {
        assert!(r0 + nr <= self.rows && c0 + nc <= self.cols);
        let mut out = Mat::zeros(nr, nc);
        for i in 0..nr {
            let src = &self.row(r0 + i)[c0..c0 + nc];
            out.row_mut(i).copy_from_slice(src);
        }
        out
    }

    /// Same data, new shape (row-major order preserved).
    pub fn reshape(&self, rows: usize, cols: usize) -> Mat {
        assert_eq!(rows * cols, self.data.len(), "reshape size mismatch");
        Mat {
            rows,
            cols,
            data: self.data.clone(),
        }
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn norm_1(&self) -> f64 {
        let mut best = 0.0f64;
        for j in 0..self.cols {
            let mut s = 0.0;
            for i in 0..self.rows {
                s += self[(i, j)].abs();
            }
            best = best.max(s);
        }
        best
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn scale(&self, c: f64) -> Mat {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= c;
        }
        out
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!(self.shape(), other.shape());
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(&other.data) {
            *v += w;
        }
        out
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!(self.shape(), other.shape());
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(&other.data) {
            *v -= w;
        }
        out
    }

    pub fn hadamard(&self, other: &Mat) -> Mat {
        assert_eq!(self.shape(), other.shape());
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(&other.data) {
            *v *= w;
        }
        out
    }

    /// `self += c * other`, in place.
    pub fn axpy(&mut self, c: f64, other: &Mat) {
        assert_eq!(self.shape(), other.shape());
        for (v, w) in self.data.iter_mut().zip(&other.data) {
            *v += c * w;
        }
    }

    /// Adds `row` (1×m) to every row of `self` (n×m).
    pub fn add_row_broadcast(&self, row: &Mat) -> Mat {
        assert_eq!(row.rows, 1);
        assert_eq!(row.cols, self.cols);
        let mut out = self.clone();
        for i in 0..out.rows {
            for (v, w) in out.row_mut(i).iter_mut().zip(&row.data) {
                *v += w;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        matmul(self, other, false, false)
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// `op(a) * op(b)` where `op` is optional transposition.
///
/// The kernel iterates i-k-j over row slices so the inner loop is a
/// contiguous axpy; transposed operands are materialized first.
pub fn matmul(a: &Mat, b: &Mat, ta: bool, tb: bool) -> Mat {
    let at;
    let bt;
    let a = if ta {
        at = a.transpose();
        &at
    } else {
        a
    };
    let b = if tb {
        bt = b.transpose();
        &bt
    } else {
        b
    };
    assert_eq!(
        a.cols, b.rows,
        "matmul shape mismatch: {}x{} * {}x{}",
        a.rows, a.cols, b.rows, b.cols
    );
    let mut out = Mat::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let arow = a.row(i);
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let brow = b.row(k);
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
    out
}

/// Inverse by LU with partial pivoting. `None` when a pivot underflows.
pub fn invert(a: &Mat) -> Option<Mat> {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut p = k;
        let mut best = lu[(k, k)].abs();
        for i in k + 1..n {
            let v = lu[(i, k)].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best < f64::MIN_POSITIVE * 16.0 {
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
    let mut inv = Mat::zeros(n, n);
    let mut col = vec![0.0; n];
    for e in 0..n {
        for (i, c) in col.iter_mut().enumerate() {
            *c = if perm[i] == e { 1.0 } else { 0.0 };
        }
        for i in 0..n {
            for k in 0..i {
                col[i] -= lu[(i, k)] * col[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                col[i] -= lu[(i, k)] * col[k];
            }
            col[i] /= lu[(i, i)];
        }
        for i in 0..n {
            inv[(i, e)] = col[i];
        }
    }
    Some(inv)
}

// Floats serialize as decimal strings with 17 significant digits, which
// parse back to the identical bits.
impl Serialize for Mat {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            rows: usize,
            cols: usize,
            data: &'a [String],
        }
        let data: Vec<String> = self.data.iter().map(|v| format!("{v:.16e}")).collect();
        Repr {
            rows: self.rows,
            cols: self.cols,
            data: &data,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Mat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            rows: usize,
            cols: usize,
            data: Vec<String>,
        }
        let r = Repr::deserialize(deserializer)?;
        if r.data.len() != r.rows * r.cols {
            return Err(D::Error::custom("matrix data length mismatch"));
        }
        let mut data = Vec::with_capacity(r.data.len());
        for s in &r.data {
            data.push(s.parse::<f64>().map_err(D::Error::custom)?);
        }
        Ok(Mat {
            rows: r.rows,
            cols: r.cols,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_hand_computation() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = Mat::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]);
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_transpose_flags() {
        let a = Mat::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let b = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let reference = a.transpose().matmul(&b.transpose());
        let fused = matmul(&a, &b, true, true);
        assert_eq!(reference, fused);
    }

    #[test]
    fn invert_roundtrip() {
        let a = Mat::from_rows(&[
            vec![4.0, 1.0, 0.0],
            vec![-2.0, 3.0, 1.0],
            vec![0.5, 0.0, 2.0],
        ]);
        let inv = invert(&a).unwrap();
        let prod = a.matmul(&inv);
        let err = prod.sub(&Mat::identity(3)).frobenius_norm();
        assert!(err < 1e-12, "err = {err}");
    }

    #[test]
    fn invert_singular_is_none() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(invert(&a).is_none());
    }

    #[test]
    fn serde_roundtrip_is_bit_exact() {
        let a = Mat::from_rows(&[vec![std::f64::consts::PI, 1.0 / 3.0], vec![-0.1, 1e-300]]);
        let s = serde_json::to_string(&a).unwrap();
        let b: Mat = serde_json::from_str(&s).unwrap();
        assert_eq!(a, b);
        let s2 = serde_json::to_string(&b).unwrap();
        assert_eq!(s, s2);
    }
}
