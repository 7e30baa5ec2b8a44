//! Dense symmetric kernels shared by the solver, the data generator and the
//! metrics.
//!
//! Everything here is a pure function of its inputs. Matrices are dense
//! `nalgebra` matrices; [`SymmetricMatrix`] is a thin wrapper that guarantees
//! exact (bitwise) symmetry.

use std::fs::File;
use std::io::{Read, Write};
use std::ops::Deref;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// General dense matrix (data matrices, the hub component `V` and its dual).
pub type GeneralMatrix = DMatrix<f64>;

/// A dense `p x p` matrix with `a[(i, j)] == a[(j, i)]` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    /// Wraps `m`, rejecting non-square, empty or asymmetric input.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::EmptyMatrix);
        }
        let p = m.nrows();
        for j in 0..p {
            for i in (j + 1)..p {
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(SymmetricMatrix(m))
    }

    /// Returns `(m + m^T) / 2`.
    pub fn symmetrize(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::EmptyMatrix);
        }
        Ok(Self::symmetrize_square(m))
    }

    pub(crate) fn symmetrize_square(m: &DMatrix<f64>) -> Self {
        let p = m.nrows();
        let mut out = m.clone();
        for j in 0..p {
            for i in (j + 1)..p {
                let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
                out[(i, j)] = avg;
                out[(j, i)] = avg;
            }
        }
        SymmetricMatrix(out)
    }

    /// Wraps a matrix that is symmetric by construction (sums and
    /// elementwise maps of symmetric operands).
    pub(crate) fn assume_symmetric(m: DMatrix<f64>) -> Self {
        debug_assert!(m.nrows() == m.ncols());
        debug_assert!(
            (0..m.nrows()).all(|j| (0..j).all(|i| m[(i, j)] == m[(j, i)])),
            "matrix assumed symmetric is not"
        );
        SymmetricMatrix(m)
    }

    pub fn identity(p: usize) -> Self {
        SymmetricMatrix(DMatrix::identity(p, p))
    }

    pub fn zeros(p: usize) -> Self {
        SymmetricMatrix(DMatrix::zeros(p, p))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymmetricMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// Builds a symmetric matrix from row-major rows; rows must form a
    /// symmetric square grid.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Elementwise map; `f` is applied to both triangles identically so the
    /// result stays symmetric.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        SymmetricMatrix(self.0.map(f))
    }
}

impl Deref for SymmetricMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl Serialize for SymmetricMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        to_rows(&self.0).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SymmetricMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        SymmetricMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter writing a `DMatrix` as a row-major array of arrays.
pub mod serde_rows {
    use super::*;

    pub fn serialize<S: Serializer>(
        m: &DMatrix<f64>,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        to_rows(m).serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        matrix_from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::EmptyMatrix);
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(Error::EmptyMatrix);
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::MalformedMatrix(format!(
            "row {i} has {} entries, expected {ncols}",
            r.len()
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// `sign(a) * max(|a| - b, 0)`.
#[inline]
pub fn soft_threshold(a: f64, b: f64) -> f64 {
    debug_assert!(b >= 0.0);
    if a > b {
        a - b
    } else if a < -b {
        a + b
    } else {
        0.0
    }
}

/// Elementwise [`soft_threshold`].
pub fn soft_threshold_matrix(m: &DMatrix<f64>, b: f64) -> DMatrix<f64> {
    m.map(|a| soft_threshold(a, b))
}

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Orthogonal matrix whose columns are the eigenvectors.
    pub vectors: DMatrix<f64>,
    pub values: DVector<f64>,
}

impl EigenDecomposition {
    /// `U diag(f(d)) U^T`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[k]);
        }
        &scaled * self.vectors.transpose()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.reconstruct_with(|d| d)
    }

    pub fn min_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

pub fn sym_eigen(a: &SymmetricMatrix) -> Result<EigenDecomposition> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("eigendecomposition input"));
    }
    let eig = SymmetricEigen::try_new(a.as_matrix().clone(), f64::EPSILON, 0)
        .ok_or(Error::NonFinite("eigendecomposition"))?;
    let p = a.dim();
    let mut order: Vec<usize> = (0..p).collect();
    // stable: equal eigenvalues keep the solver's order
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let values = DVector::from_iterator(p, order.iter().map(|&k| eig.eigenvalues[k]));
    let vectors = DMatrix::from_fn(p, p, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(EigenDecomposition { vectors, values })
}

/// Lower-triangular `L` with `L L^T = a`.
pub fn cholesky(a: &SymmetricMatrix) -> Result<DMatrix<f64>> {
    let p = a.dim();
    let mut l = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        // also catches NaN
        if !(pivot > 0.0) {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: pivot,
            });
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..p {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// `log det a` through the Cholesky factor.
pub fn log_det_pd(a: &SymmetricMatrix) -> Result<f64> {
    let l = cholesky(a)?;
    Ok(2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Sum of absolute off-diagonal entries.
pub fn l1_offdiag(m: &DMatrix<f64>) -> f64 {
    let mut total = 0.0;
    for (j, col) in m.column_iter().enumerate() {
        for (i, x) in col.iter().enumerate() {
            if i != j {
                total += x.abs();
            }
        }
    }
    total
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// l1 norm of column `j` with its diagonal entry removed.
pub fn column_l1_offdiag(m: &DMatrix<f64>, j: usize) -> f64 {
    m.column(j)
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != j)
        .map(|(_, x)| x.abs())
        .sum()
}

/// l2 norm of column `j` with its diagonal entry removed.
pub fn column_l2_offdiag(m: &DMatrix<f64>, j: usize) -> f64 {
    m.column(j)
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != j)
        .map(|(_, x)| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Maximum-likelihood covariance `(1/n) Xc^T Xc` of the column-centred data.
pub fn empirical_covariance(x: &DMatrix<f64>) -> Result<SymmetricMatrix> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::DegenerateSample { n });
    }
    let p = x.ncols();
    if p == 0 {
        return Err(Error::EmptyMatrix);
    }
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
    }
    let mut s = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        for i in 0..=j {
            let v = centered.column(i).dot(&centered.column(j)) / n as f64;
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(SymmetricMatrix(s))
}

/// Parses a dense matrix: one row per line, comma-separated decimals, no
/// header. Ragged rows are rejected.
pub fn read_matrix_csv<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::MalformedMatrix(e.to_string()))?;
        let row = rec
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|_| {
                    Error::MalformedMatrix(format!("row {i}: cannot parse {field:?} as a number"))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    matrix_from_rows(&rows)
}

pub fn write_matrix_csv<W: Write>(writer: W, m: &DMatrix<f64>) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    for row in m.row_iter() {
        wtr.write_record(row.iter().map(|x| x.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    read_matrix_csv(File::open(path)?)
}

pub fn save_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_matrix_csv(File::create(path)?, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(rng: &mut ChaCha8Rng, p: usize) -> SymmetricMatrix {
        let m = DMatrix::from_fn(p, p, |_, _| rng.random_range(-3.0..3.0));
        SymmetricMatrix::symmetrize(&m).unwrap()
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-2.5, 1.0), -1.5);
        assert_eq!(soft_threshold(1.0, 1.0), 0.0);
    }

    proptest! {
        #[test]
        fn soft_threshold_is_odd(a in -100.0f64..100.0, b in 0.0f64..50.0) {
            prop_assert_eq!(soft_threshold(-a, b), -soft_threshold(a, b));
        }
    }

    #[test]
    fn new_rejects_asymmetric_and_non_square() {
        assert!(matches!(
            SymmetricMatrix::new(dmatrix![1.0, 2.0; 3.0, 1.0]),
            Err(Error::NotSymmetric { .. })
        ));
        assert!(matches!(
            SymmetricMatrix::new(DMatrix::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
        assert!(matches!(
            SymmetricMatrix::new(DMatrix::zeros(0, 0)),
            Err(Error::EmptyMatrix)
        ));
    }

    #[test]
    fn eigen_identity() {
        let e = sym_eigen(&SymmetricMatrix::identity(3)).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 1.0, 1.0]);
        let utu = e.vectors.transpose() * &e.vectors;
        assert!((utu - DMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn eigen_diagonal_sorted_descending() {
        let e = sym_eigen(&SymmetricMatrix::from_diagonal(&[-1.0, 2.0])).unwrap();
        assert_eq!(e.values.as_slice(), &[2.0, -1.0]);
        // first eigenvector is +-e2
        assert!((e.vectors[(1, 0)].abs() - 1.0).abs() < 1e-14);
        assert!(e.vectors[(0, 0)].abs() < 1e-14);
    }

    #[test]
    fn eigen_swap_matrix() {
        // characteristic polynomial x^2 - 1
        let a = SymmetricMatrix::new(dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        let e = sym_eigen(&a).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14);
        assert!((e.values[1] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigen_rejects_non_finite() {
        let a = SymmetricMatrix::from_diagonal(&[1.0, f64::NAN]);
        assert!(matches!(sym_eigen(&a), Err(Error::NonFinite(_))));
    }

    #[test]
    fn eigen_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let p = rng.random_range(1..=20);
            let a = random_symmetric(&mut rng, p);
            let e = sym_eigen(&a).unwrap();
            let scale = 1.0 + a.norm();
            assert!((e.reconstruct() - a.as_matrix()).norm() <= 1e-8 * scale);
            let utu = e.vectors.transpose() * &e.vectors;
            assert!((utu - DMatrix::identity(p, p)).norm() <= 1e-8 * p as f64);
            assert!(e.values.as_slice().windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn cholesky_examples() {
        let l = cholesky(&SymmetricMatrix::identity(2)).unwrap();
        assert_eq!(l, DMatrix::identity(2, 2));

        let l = cholesky(&SymmetricMatrix::from_diagonal(&[4.0, 9.0])).unwrap();
        assert_eq!(l, dmatrix![2.0, 0.0; 0.0, 3.0]);

        let a = SymmetricMatrix::new(dmatrix![4.0, 2.0; 2.0, 5.0]).unwrap();
        let l = cholesky(&a).unwrap();
        assert_eq!(l, dmatrix![2.0, 0.0; 1.0, 2.0]);
    }

    #[test]
    fn cholesky_matches_eigen_definiteness() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut seen_pd = 0;
        let mut seen_not = 0;
        for _ in 0..500 {
            let p = rng.random_range(1..=8);
            let b = random_symmetric(&mut rng, p);
            // shift so roughly half the draws are PD
            let shift = rng.random_range(-1.0..6.0);
            let a =
                SymmetricMatrix::assume_symmetric(b.as_matrix() + DMatrix::identity(p, p) * shift);
            let min_eig = sym_eigen(&a).unwrap().min_value();
            if min_eig.abs() < 1e-10 {
                continue;
            }
            match cholesky(&a) {
                Ok(l) => {
                    assert!(min_eig > 0.0);
                    let err = (&l * l.transpose() - a.as_matrix()).norm();
                    assert!(err <= 1e-8 * (1.0 + a.norm()));
                    seen_pd += 1;
                }
                Err(Error::NotPositiveDefinite { .. }) => {
                    assert!(min_eig < 0.0);
                    seen_not += 1;
                }
                Err(e) => panic!("unexpected {e}"),
            }
        }
        assert!(seen_pd > 50 && seen_not > 50);
    }

    #[test]
    fn norm_examples() {
        assert_eq!(l1_offdiag(&DMatrix::identity(3, 3)), 0.0);
        assert_eq!(frobenius(&dmatrix![0.0, 3.0; 4.0, 0.0]), 5.0);
        let m = dmatrix![1.0, 0.0, 0.0; 0.0, 7.0, 0.0; -2.0, 0.0, 9.0];
        // column 1 is (1, diag, -2); the diagonal 50 must be ignored
        let col = dmatrix![0.0, 1.0, 0.0; 0.0, 50.0, 0.0; 0.0, -2.0, 0.0];
        assert!((column_l2_offdiag(&col, 1) - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(column_l1_offdiag(&col, 1), 3.0);
        assert_eq!(l1_offdiag(&m), 2.0);
    }

    #[test]
    fn covariance_examples() {
        let s = empirical_covariance(&dmatrix![1.0; -1.0]).unwrap();
        assert_eq!(s.as_matrix(), &dmatrix![1.0]);

        let s = empirical_covariance(&dmatrix![1.0, 2.0; 1.0, 2.0; 1.0, 2.0]).unwrap();
        assert_eq!(s.as_matrix(), &DMatrix::zeros(2, 2));

        let s = empirical_covariance(&dmatrix![1.0, 2.0; 3.0, 4.0; 5.0, 6.0]).unwrap();
        let expected = 8.0 / 3.0;
        assert!(s.iter().all(|v| (v - expected).abs() < 1e-14));

        assert!(matches!(
            empirical_covariance(&dmatrix![1.0, 2.0]),
            Err(Error::DegenerateSample { n: 1 })
        ));
    }

    #[test]
    fn covariance_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let n = rng.random_range(2..12);
            let p = rng.random_range(1..10);
            let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-5.0..5.0));
            let s = empirical_covariance(&x).unwrap();
            let min = sym_eigen(&s).unwrap().min_value();
            assert!(min >= -1e-10 * s.trace().max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn csv_round_trip_and_ragged_rows() {
        let m = dmatrix![1.5, -2.0, 1e-20; 0.1, 3.0, 4.0];
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(!text.contains('e'), "decimal notation only: {text}");
        assert_eq!(read_matrix_csv(buf.as_slice()).unwrap(), m);

        let ragged = "1,2,3\n4,5\n";
        assert!(matches!(
            read_matrix_csv(ragged.as_bytes()),
            Err(Error::MalformedMatrix(_))
        ));
        assert!(matches!(
            read_matrix_csv("1,x\n".as_bytes()),
            Err(Error::MalformedMatrix(_))
        ));
    }
}
