//! PCA reduction of per-arm embeddings into feature vectors.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::scalar::Scalar;

/// Per-arm embedding vectors, arm `i` in row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    rows: Matrix<T>,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn new(rows: Matrix<T>) -> Result<Self> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(Error::Config("embedding table is empty".into()));
        }
        if rows.rows_iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config(
                "embedding table has non-finite entries".into(),
            ));
        }
        Ok(EmbeddingTable { rows })
    }

    /// Reads `arm_id,e_1,…,e_p`; arm ids must cover `0..K` exactly once.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows: Vec<Option<Vec<T>>> = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(format!("embedding row {}: {e}", line + 1)))?;
            let bad = |what: &str| Error::Parse(format!("embedding row {}: bad {what}", line + 1));
            let arm: usize = rec
                .get(0)
                .unwrap_or("")
                .parse()
                .map_err(|_| bad("arm_id"))?;
            let values = rec
                .iter()
                .skip(1)
                .map(|f| f.parse::<f64>().map(T::lit).map_err(|_| bad("value")))
                .collect::<Result<Vec<T>>>()?;
            if rows.len() <= arm {
                rows.resize(arm + 1, None);
            }
            if rows[arm].replace(values).is_some() {
                return Err(Error::Config(format!(
                    "arm {arm} appears twice in the embeddings"
                )));
            }
        }
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.ok_or_else(|| Error::Config(format!("arm {i} has no embedding"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(Matrix::from_rows(&rows)?)
    }

    pub fn num_arms(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> &Matrix<T> {
        &self.rows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca<T> {
    /// K×d reduced features `φ(x) = U_dᵀ(e(x) − ē)`.
    pub features: Matrix<T>,
    /// p×d, orthonormal columns.
    pub basis: Matrix<T>,
    pub mean: Vec<T>,
    /// Leading d eigenvalues of the covariance, descending.
    pub explained_variance: Vec<T>,
}

/// Projects centered embeddings on the top-`d` eigenvectors of the
/// population covariance. Each eigenvector's first nonzero entry is positive.
pub fn pca_reduce<T: Scalar>(embeddings: &EmbeddingTable<T>, d: usize) -> Result<Pca<T>> {
    let (k, p) = (embeddings.num_arms(), embeddings.dim());
    if d == 0 || d > k.min(p) {
        return Err(Error::Config(format!(
            "PCA dimension must lie in 1..={}, got {d}",
            k.min(p)
        )));
    }
    let kk = T::of_usize(k);
    let mean: Vec<T> = (0..p)
        .map(|j| embeddings.rows.rows_iter().map(|r| r[j]).sum::<T>() / kk)
        .collect();
    let centered: Vec<Vec<T>> = embeddings
        .rows
        .rows_iter()
        .map(|r| r.iter().zip(&mean).map(|(&v, &m)| v - m).collect())
        .collect();
    let c = Matrix::from_rows(&centered)?;
    let mut cov = c.transpose().matmul(&c)?;
    for i in 0..p {
        for j in 0..p {
            cov[(i, j)] /= kk;
        }
    }
    let (values, vectors) = cov.symmetric_eigen()?;

    let tiny = T::epsilon().sqrt();
    let columns: Vec<Vec<T>> = (0..d)
        .map(|j| {
            let mut u = vectors.column(j);
            if let Some(&first) = u.iter().find(|v| v.abs() > tiny) {
                if first < T::zero() {
                    u.iter_mut().for_each(|v| *v = -*v);
                }
            }
            u
        })
        .collect();
    let basis = Matrix::from_columns(&columns)?;
    let features: Vec<Vec<T>> = centered
        .iter()
        .map(|e| columns.iter().map(|u| dot(u, e)).collect())
        .collect();
    Ok(Pca {
        features: Matrix::from_rows(&features)?,
        basis,
        mean,
        explained_variance: values[..d].to_vec(),
    })
}

/// Writes `arm_id,phi_1,…,phi_d`.
pub fn write_features<T: Scalar, W: Write>(features: &Matrix<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Parse(format!("writing features: {e}"));
    let mut header = vec!["arm_id".to_string()];
    header.extend((1..=features.ncols()).map(|j| format!("phi_{j}")));
    w.write_record(&header).map_err(csv_err)?;
    for (i, row) in features.rows_iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|v| format!("{v}")));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| Error::Parse(format!("writing features: {e}")))
}

/// Reads a feature file written by [`write_features`] (same layout as the
/// embedding CSV).
pub fn read_features<T: Scalar, R: Read>(reader: R) -> Result<Matrix<T>> {
    Ok(EmbeddingTable::from_csv(reader)?.rows)
}
