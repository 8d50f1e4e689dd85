//! Dense matrix-function kernel for real square matrices: complex
//! eigendecomposition, matrix exponential, principal matrix logarithm,
//! fractional powers and the orthogonality defect.
//!
//! Everything here is a pure function of its inputs; correctness is
//! defined operationally through reconstruction residuals rather than
//! symbolic checks.

mod cmat;
mod eig;

pub use cmat::CMat;

use crate::mat::{matmul, Mat};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Residual threshold that operationally defines diagonalizability.
pub const DIAG_RESIDUAL_TOL: f64 = 1e-8;

/// Number of Taylor terms in the scaled exponential series.
pub const EXP_SERIES_TERMS: usize = 30;

#[derive(Debug, Error)]
pub enum MatFunError {
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix is numerically non-diagonalizable (residual {residual:.3e} exceeds {tol:.1e})")]
    NonDiagonalizable { residual: f64, tol: f64 },
    #[error("eigenvalue {re:.6e}{im:+.6e}i lies on the closed negative real axis; no principal logarithm")]
    NegativeRealEigenvalue { re: f64, im: f64 },
    #[error("matrix is too ill-conditioned (condition estimate {cond:.3e})")]
    IllConditioned { cond: f64 },
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
}

pub type Result<T> = std::result::Result<T, MatFunError>;

/// A real square matrix with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    mat: Mat,
}

impl SquareMatrix {
    pub fn new(mat: Mat) -> Result<Self> {
        if mat.rows() != mat.cols() || mat.rows() == 0 {
            return Err(MatFunError::NotSquare {
                rows: mat.rows(),
                cols: mat.cols(),
            });
        }
        if !mat.all_finite() {
            return Err(MatFunError::NonFinite);
        }
        Ok(SquareMatrix { mat })
    }

    pub fn identity(dim: usize) -> Self {
        SquareMatrix {
            mat: Mat::identity(dim),
        }
    }

    /// Plane rotation by `theta`, the workhorse of periodic latent dynamics.
    pub fn rotation_2d(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        SquareMatrix {
            mat: Mat::from_rows(&[vec![c, -s], vec![s, c]]),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.mat
    }

    pub fn into_mat(self) -> Mat {
        self.mat
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mat[(i, j)]
    }
}

/// Continuous-time generator: `exp(entries)` reproduces the discrete
/// matrix it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMatrix {
    mat: Mat,
}

impl GeneratorMatrix {
    /// Wraps a directly-parameterized generator (the continuous
    /// formulation trains L itself).
    pub fn from_mat(mat: Mat) -> Result<Self> {
        if mat.rows() != mat.cols() || mat.rows() == 0 {
            return Err(MatFunError::NotSquare {
                rows: mat.rows(),
                cols: mat.cols(),
            });
        }
        if !mat.all_finite() {
            return Err(MatFunError::NonFinite);
        }
        Ok(GeneratorMatrix { mat })
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.mat
    }

    pub fn into_mat(self) -> Mat {
        self.mat
    }

    /// `exp(t * L)` as a discrete evolution matrix.
    pub fn exp_scaled(&self, t: f64) -> Result<SquareMatrix> {
        let scaled = self.mat.scale(t);
        if !scaled.all_finite() {
            return Err(MatFunError::NonFinite);
        }
        SquareMatrix::new(expm(&scaled))
    }
}

/// Complex spectral form `K = V diag(values) V^-1`, eigenvalues ordered
/// by descending modulus, ties broken by ascending phase.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    vectors: CMat,
    values: Vec<Complex64>,
}

impl EigenDecomposition {
    pub fn vectors(&self) -> &CMat {
        &self.vectors
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// `V diag(f(values)) V^-1` for a scalar spectral map `f`.
    fn spectral_map(&self, f: impl Fn(Complex64) -> Complex64) -> Result<CMat> {
        let mapped: Vec<Complex64> = self.values.iter().map(|&l| f(l)).collect();
        let vinv = self
            .vectors
            .invert()
            .ok_or(MatFunError::NonDiagonalizable {
                residual: f64::INFINITY,
                tol: DIAG_RESIDUAL_TOL,
            })?;
        Ok(self.vectors.mul_diag(&mapped).matmul(&vinv))
    }
}

/// Complex eigendecomposition of a real square matrix.
///
/// Diagonalizability is detected a posteriori: the relative residual
/// `||K V - V diag(values)||_F / ||K||_F` must stay below 1e-8.
pub fn eig_complex(m: &SquareMatrix) -> Result<EigenDecomposition> {
    let a = m.as_mat();
    if !a.all_finite() {
        return Err(MatFunError::NonFinite);
    }
    let n = m.dim();
    let raw = eig::real_eig(a);

    // Assemble complex eigenpairs from the packed real storage.
    let mut vectors = CMat::zeros(n, n);
    let mut values = vec![Complex64::new(0.0, 0.0); n];
    let mut j = 0;
    while j < n {
        if raw.e[j] == 0.0 {
            values[j] = Complex64::new(raw.d[j], 0.0);
            for i in 0..n {
                vectors[(i, j)] = Complex64::new(raw.v[(i, j)], 0.0);
            }
            j += 1;
        } else {
            // Conjugate pair: column j holds the real part, j+1 the
            // imaginary part of the eigenvector for d[j] + i e[j].
            values[j] = Complex64::new(raw.d[j], raw.e[j]);
            values[j + 1] = Complex64::new(raw.d[j + 1], raw.e[j + 1]);
            for i in 0..n {
                let re = raw.v[(i, j)];
                let im = raw.v[(i, j + 1)];
                vectors[(i, j)] = Complex64::new(re, im);
                vectors[(i, j + 1)] = Complex64::new(re, -im);
            }
            j += 2;
        }
    }

    // Deterministic normalization: unit norm, largest entry real positive.
    for j in 0..n {
        let col = vectors.column(j);
        let norm = col.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(MatFunError::NonDiagonalizable {
                residual: f64::INFINITY,
                tol: DIAG_RESIDUAL_TOL,
            });
        }
        let lead = col
            .iter()
            .cloned()
            .max_by(|a, b| a.norm_sqr().partial_cmp(&b.norm_sqr()).unwrap())
            .unwrap();
        let phase = lead / lead.norm();
        let scale = phase.conj() / norm;
        for i in 0..n {
            vectors[(i, j)] *= scale;
        }
    }

    // Order: descending modulus, ties by ascending phase.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (ma, mb) = (values[a].norm(), values[b].norm());
        mb.partial_cmp(&ma)
            .unwrap()
            .then(values[a].arg().partial_cmp(&values[b].arg()).unwrap())
    });
    let mut sorted_vectors = CMat::zeros(n, n);
    let mut sorted_values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        sorted_values.push(values[src]);
        for i in 0..n {
            sorted_vectors[(i, dst)] = vectors[(i, src)];
        }
    }

    let decomp = EigenDecomposition {
        vectors: sorted_vectors,
        values: sorted_values,
    };

    let residual = eig_residual(m, &decomp);
    if !residual.is_finite() || residual > DIAG_RESIDUAL_TOL {
        return Err(MatFunError::NonDiagonalizable {
            residual,
            tol: DIAG_RESIDUAL_TOL,
        });
    }
    Ok(decomp)
}

/// `||K V - V diag(values)||_F / ||K||_F`.
pub fn eig_residual(m: &SquareMatrix, decomp: &EigenDecomposition) -> f64 {
    let kc = CMat::from_real(m.as_mat());
    let kv = kc.matmul(decomp.vectors());
    let vl = decomp.vectors().mul_diag(decomp.values());
    let denom = m.as_mat().frobenius_norm().max(f64::MIN_POSITIVE);
    kv.sub(&vl).frobenius_norm() / denom
}

/// Scaling-and-squaring Taylor exponential on a raw matrix.
pub(crate) fn expm(a: &Mat) -> Mat {
    let n = a.rows();
    let norm = a.norm_1();
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let b = a.scale(0.5f64.powi(s));
    let mut acc = Mat::identity(n).add(&b);
    let mut term = b.clone();
    for k in 2..=EXP_SERIES_TERMS {
        term = term.matmul(&b).scale(1.0 / k as f64);
        acc = acc.add(&term);
    }
    for _ in 0..s {
        acc = acc.matmul(&acc);
    }
    acc
}

/// Matrix exponential of a square matrix.
pub fn matrix_exp(m: &SquareMatrix) -> Result<SquareMatrix> {
    SquareMatrix::new(expm(m.as_mat()))
}

/// Matrix exponential of a generator.
pub fn matrix_exp_generator(l: &GeneratorMatrix) -> Result<SquareMatrix> {
    SquareMatrix::new(expm(l.as_mat()))
}

fn on_closed_negative_real_axis(l: Complex64) -> bool {
    let scale = 1.0 + l.norm();
    l.im.abs() <= 1e-12 * scale && l.re <= 1e-12 * scale
}

/// Principal matrix logarithm through the complex eigendecomposition.
///
/// Requires every eigenvalue off the closed negative real axis; the
/// result is validated by re-exponentiation.
pub fn matrix_log_principal(k: &SquareMatrix) -> Result<GeneratorMatrix> {
    let decomp = eig_complex(k)?;
    for &l in decomp.values() {
        if on_closed_negative_real_axis(l) {
            return Err(MatFunError::NegativeRealEigenvalue { re: l.re, im: l.im });
        }
    }
    let logc = decomp.spectral_map(|l| l.ln())?;
    let log_real = logc.real_part();

    let back = expm(&log_real);
    let denom = k.as_mat().frobenius_norm().max(f64::MIN_POSITIVE);
    let residual = back.sub(k.as_mat()).frobenius_norm() / denom;
    if !residual.is_finite() || residual > DIAG_RESIDUAL_TOL {
        return Err(MatFunError::NonDiagonalizable {
            residual,
            tol: DIAG_RESIDUAL_TOL,
        });
    }
    Ok(GeneratorMatrix { mat: log_real })
}

/// Fractional power `K^tau = exp(tau * log K)`.
pub fn fractional_power(k: &SquareMatrix, tau: f64) -> Result<SquareMatrix> {
    if tau == 0.0 {
        return Ok(SquareMatrix::identity(k.dim()));
    }
    let log = matrix_log_principal(k)?;
    log.exp_scaled(tau)
}

/// `||K K^T - I||_F^2`, zero exactly when K is orthogonal.
pub fn orthogonality_defect(k: &SquareMatrix) -> Result<f64> {
    if !k.as_mat().all_finite() {
        return Err(MatFunError::NonFinite);
    }
    let kkt = matmul(k.as_mat(), k.as_mat(), false, true);
    let diff = kkt.sub(&Mat::identity(k.dim()));
    Ok(diff.sum_squares())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = rng.gen_range(-scale..scale);
            }
        }
        m
    }

    fn random_skew(rng: &mut ChaCha8Rng, n: usize, norm_target: f64) -> Mat {
        let raw = random_matrix(rng, n, 1.0);
        let mut skew = raw.sub(&raw.transpose()).scale(0.5);
        let f = skew.frobenius_norm();
        if f > 0.0 {
            skew = skew.scale(norm_target / f);
        }
        skew
    }

    #[test]
    fn eig_identity_has_unit_spectrum() {
        let decomp = eig_complex(&SquareMatrix::identity(3)).unwrap();
        for &l in decomp.values() {
            assert!((l - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn eig_rotation_quarter_turn() {
        let k = SquareMatrix::rotation_2d(std::f64::consts::FRAC_PI_2);
        let decomp = eig_complex(&k).unwrap();
        // Ascending phase under equal modulus: -i first, then +i.
        assert!((decomp.values()[0] - Complex64::new(0.0, -1.0)).norm() < 1e-12);
        assert!((decomp.values()[1] - Complex64::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn eig_symmetric_2x2_matches_quadratic_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let (a, b, c) = (
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let m = SquareMatrix::new(Mat::from_rows(&[vec![a, b], vec![b, c]])).unwrap();
            // Roots of x^2 - (a+c)x + (ac - b^2).
            let tr = a + c;
            let det = a * c - b * b;
            let disc = (tr * tr / 4.0 - det).sqrt();
            let mut expect = [tr / 2.0 + disc, tr / 2.0 - disc];
            expect.sort_by(|x, y| y.abs().partial_cmp(&x.abs()).unwrap());
            let decomp = eig_complex(&m).unwrap();
            let got: Vec<f64> = decomp.values().iter().map(|l| l.re).collect();
            for (g, ex) in got.iter().zip(expect.iter()) {
                assert!((g - ex).abs() < 1e-10, "got {g}, expected {ex}");
            }
        }
    }

    #[test]
    fn eig_reconstruction_residual_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &n in &[2usize, 3, 5, 8, 13, 21, 32] {
            let m = SquareMatrix::new(random_matrix(&mut rng, n, 1.0)).unwrap();
            match eig_complex(&m) {
                Ok(decomp) => {
                    let res = eig_residual(&m, &decomp);
                    assert!(res <= DIAG_RESIDUAL_TOL, "dim {n}: residual {res}");
                }
                Err(MatFunError::NonDiagonalizable { .. }) => {
                    // Random matrices are occasionally near-defective;
                    // surfacing that is the contract.
                }
                Err(e) => panic!("unexpected error: {e}"),
            }
        }
    }

    #[test]
    fn eig_order_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = SquareMatrix::new(random_matrix(&mut rng, 6, 1.0)).unwrap();
        let a = eig_complex(&m).unwrap();
        let b = eig_complex(&m).unwrap();
        assert_eq!(a.values(), b.values());
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(a.vectors()[(i, j)], b.vectors()[(i, j)]);
            }
        }
        let mods: Vec<f64> = a.values().iter().map(|l| l.norm()).collect();
        for w in mods.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
    }

    #[test]
    fn exp_zero_is_identity() {
        let z = SquareMatrix::new(Mat::zeros(4, 4)).unwrap();
        let e = matrix_exp(&z).unwrap();
        assert_eq!(e.as_mat(), &Mat::identity(4));
    }

    #[test]
    fn exp_skew_is_rotation() {
        let theta = 0.3;
        let l = Mat::from_rows(&[vec![0.0, -theta], vec![theta, 0.0]]);
        let e = expm(&l);
        let r = SquareMatrix::rotation_2d(theta);
        assert!(e.sub(r.as_mat()).frobenius_norm() < 1e-14);
    }

    #[test]
    fn exp_nilpotent_terminates() {
        let n = Mat::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        let e = expm(&n);
        let expect = Mat::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]);
        assert!(e.sub(&expect).frobenius_norm() < 1e-15);
    }

    #[test]
    fn exp_agrees_with_truncated_series_oracle() {
        // Plain 30-term Taylor series, no scaling: valid for small norms.
        fn series_oracle(a: &Mat) -> Mat {
            let n = a.rows();
            let mut acc = Mat::identity(n);
            let mut term = Mat::identity(n);
            for k in 1..=EXP_SERIES_TERMS {
                term = term.matmul(a).scale(1.0 / k as f64);
                acc = acc.add(&term);
            }
            acc
        }
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for &n in &[2usize, 4, 7] {
            let a = random_matrix(&mut rng, n, 0.2);
            let got = expm(&a);
            let want = series_oracle(&a);
            let rel = got.sub(&want).frobenius_norm() / want.frobenius_norm();
            assert!(rel < 1e-10, "dim {n}: rel {rel}");
        }
    }

    #[test]
    fn log_identity_is_zero() {
        let l = matrix_log_principal(&SquareMatrix::identity(3)).unwrap();
        assert!(l.as_mat().frobenius_norm() < 1e-12);
    }

    #[test]
    fn log_rotation_recovers_skew() {
        let theta = 0.3;
        let k = SquareMatrix::rotation_2d(theta);
        let l = matrix_log_principal(&k).unwrap();
        let expect = Mat::from_rows(&[vec![0.0, -theta], vec![theta, 0.0]]);
        assert!(l.as_mat().sub(&expect).frobenius_norm() < 1e-12);
    }

    #[test]
    fn log_exp_roundtrip_on_random_skew() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &n in &[2usize, 4, 8, 16] {
            let skew = random_skew(&mut rng, n, 2.5);
            let k = SquareMatrix::new(expm(&skew)).unwrap();
            let l = matrix_log_principal(&k).unwrap();
            let err = l.as_mat().sub(&skew).frobenius_norm();
            assert!(err < 1e-8, "dim {n}: err {err}");
        }
    }

    #[test]
    fn log_rejects_negative_real_eigenvalue() {
        let k = SquareMatrix::new(Mat::from_rows(&[vec![-1.0, 0.0], vec![0.0, 2.0]])).unwrap();
        match matrix_log_principal(&k) {
            Err(MatFunError::NegativeRealEigenvalue { .. }) => {}
            other => panic!("expected NegativeRealEigenvalue, got {other:?}"),
        }
    }

    #[test]
    fn fractional_power_basics() {
        let k = SquareMatrix::rotation_2d(0.4);
        let half = fractional_power(&k, 0.5).unwrap();
        let expect = SquareMatrix::rotation_2d(0.2);
        assert!(half.as_mat().sub(expect.as_mat()).frobenius_norm() < 1e-12);

        let zero = fractional_power(&k, 0.0).unwrap();
        assert!(zero.as_mat().sub(&Mat::identity(2)).frobenius_norm() <= 1e-12);

        let one = fractional_power(&k, 1.0).unwrap();
        assert!(one.as_mat().sub(k.as_mat()).frobenius_norm() < 1e-10);
    }

    #[test]
    fn fractional_power_two_is_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let skew = random_skew(&mut rng, 4, 1.0);
        let k = SquareMatrix::new(expm(&skew)).unwrap();
        let sq = fractional_power(&k, 2.0).unwrap();
        let direct = k.as_mat().matmul(k.as_mat());
        assert!(sq.as_mat().sub(&direct).frobenius_norm() < 1e-9);
    }

    #[test]
    fn fractional_power_semigroup() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let skew = random_skew(&mut rng, 6, 1.5);
        let k = SquareMatrix::new(expm(&skew)).unwrap();
        for &(a, b) in &[(0.3, 0.9), (-1.5, 2.0), (-0.7, -0.6), (2.0, -2.0)] {
            let lhs = fractional_power(&k, a + b).unwrap();
            let rhs = fractional_power(&k, a)
                .unwrap()
                .as_mat()
                .matmul(fractional_power(&k, b).unwrap().as_mat());
            let err = lhs.as_mat().sub(&rhs).frobenius_norm();
            assert!(err < 1e-8, "a={a} b={b}: err {err}");
        }
    }

    #[test]
    fn orthogonality_defect_values() {
        assert_eq!(
            orthogonality_defect(&SquareMatrix::identity(5)).unwrap(),
            0.0
        );
        let two_i = SquareMatrix::new(Mat::identity(3).scale(2.0)).unwrap();
        assert!((orthogonality_defect(&two_i).unwrap() - 27.0).abs() < 1e-12);

        // Brute-force oracle on a random matrix.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let k = SquareMatrix::new(random_matrix(&mut rng, 4, 1.0)).unwrap();
        let mut brute = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let mut s = 0.0;
                for l in 0..4 {
                    s += k.get(i, l) * k.get(j, l);
                }
                if i == j {
                    s -= 1.0;
                }
                brute += s * s;
            }
        }
        let got = orthogonality_defect(&k).unwrap();
        assert!((got - brute).abs() < 1e-12 * brute.max(1.0));
    }

    #[test]
    fn norm_preservation_for_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let skew = random_skew(&mut rng, 8, 2.0);
        let k = SquareMatrix::new(expm(&skew)).unwrap();
        assert!(orthogonality_defect(&k).unwrap() <= 1e-20);
        let z = Mat::from_vec(8, 1, (0..8).map(|i| (i as f64) - 3.5).collect());
        let kz = k.as_mat().matmul(&z);
        let drift = (kz.frobenius_norm() - z.frobenius_norm()).abs();
        assert!(drift <= 1e-12 * z.frobenius_norm());
    }

    #[test]
    fn rotation_periodicity() {
        for q in 2..=64usize {
            let k = SquareMatrix::rotation_2d(2.0 * std::f64::consts::PI / q as f64);
            let mut acc = Mat::identity(2);
            for _ in 0..q {
                acc = acc.matmul(k.as_mat());
            }
            let err = acc.sub(&Mat::identity(2)).frobenius_norm();
            assert!(err < 1e-10, "q={q}: err {err}");
        }
    }
}
