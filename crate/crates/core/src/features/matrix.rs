use serde::{Deserialize, Serialize};

/// Sparse row-major (CSR) feature matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
    names: Vec<String>,
}

impl FeatureMatrix {
    /// Builds a matrix from per-row `(column, value)` lists. Entries in a row
    /// must be sorted by column with no duplicates.
    pub fn from_rows(dim: usize, rows: Vec<Vec<(u32, f64)>>, names: Vec<String>) -> Self {
        let nnz = rows.iter().map(Vec::len).sum();
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        indptr.push(0);
        for row in rows {
            for (j, v) in row {
                debug_assert!((j as usize) < dim);
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        FeatureMatrix {
            dim,
            indptr,
            indices,
            values,
            names,
        }
    }

    /// Dense rows, mostly for tests and small synthetic inputs.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let sparse = rows
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j as u32, *v))
                    .collect()
            })
            .collect();
        let names = (0..dim).map(|j| format!("x{j}")).collect();
        FeatureMatrix::from_rows(dim, sparse, names)
    }

    pub fn rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let (idx, val) = self.row(i);
        for (&j, &v) in idx.iter().zip(val) {
            out[j as usize] = v;
        }
        out
    }

    /// Rows `rows` of this matrix, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let picked = rows
            .iter()
            .map(|&r| {
                let (idx, val) = self.row(r);
                idx.iter().copied().zip(val.iter().copied()).collect()
            })
            .collect();
        FeatureMatrix::from_rows(self.dim, picked, self.names.clone())
    }

    /// Vertical concatenation; both matrices must have the same width.
    pub fn vstack(&self, other: &FeatureMatrix) -> FeatureMatrix {
        assert_eq!(self.dim, other.dim, "vstack width mismatch");
        let mut out = self.clone();
        let base = out.indices.len();
        out.indices.extend_from_slice(&other.indices);
        out.values.extend_from_slice(&other.values);
        out.indptr.extend(other.indptr[1..].iter().map(|p| p + base));
        out
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
