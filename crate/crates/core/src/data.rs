use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major table of `n` observations of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    dim: usize,
    values: Vec<f64>,
    column_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::InvalidDimension(format!("dataset needs at least 2 rows, got {n}")));
        }
        let dim = rows[0].len();
        let mut values = Vec::with_capacity(n * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::Layout { expected: dim, got: row.len() });
            }
            values.extend_from_slice(row);
        }
        Ok(Dataset { n, dim, values, column_names: None })
    }

    pub fn from_row_major(n: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimension(format!("dataset needs at least 2 rows, got {n}")));
        }
        if values.len() != n * dim {
            return Err(Error::Layout { expected: n * dim, got: values.len() });
        }
        Ok(Dataset { n, dim, values, column_names: None })
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dim {
            return Err(Error::Layout { expected: self.dim, got: names.len() });
        }
        self.column_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim.max(1)).take(self.n)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.dim];
        for row in self.rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.n as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        let mut out = Dataset::from_row_major(idx.len(), self.dim, values)?;
        out.column_names = self.column_names.clone();
        Ok(out)
    }

    /// Every row repeated `times` times (used for scaling-law checks).
    pub fn replicate(&self, times: usize) -> Self {
        let mut values = Vec::with_capacity(self.values.len() * times);
        for _ in 0..times {
            values.extend_from_slice(&self.values);
        }
        Dataset {
            n: self.n * times,
            dim: self.dim,
            values,
            column_names: self.column_names.clone(),
        }
    }
}

/// Sorted set of free (nonzero) parameter indices, 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActiveSet {
    indices: Vec<usize>,
    p: usize,
}

impl ActiveSet {
    pub fn new(mut indices: Vec<usize>, p: usize) -> Result<Self> {
        indices.sort_unstable();
        let len = indices.len();
        indices.dedup();
        if indices.len() != len {
            return Err(Error::InvalidArgument("duplicate indices in active set".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&j| j >= p) {
            return Err(Error::InvalidArgument(format!("index {bad} out of range for dimension {p}")));
        }
        Ok(ActiveSet { indices, p })
    }

    pub fn full(p: usize) -> Self {
        ActiveSet { indices: (0..p).collect(), p }
    }

    pub fn empty(p: usize) -> Self {
        ActiveSet { indices: Vec::new(), p }
    }

    /// Indices with nonzero entries in `theta`.
    pub fn support(theta: &[f64]) -> Self {
        ActiveSet {
            indices: theta.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, _)| j).collect(),
            p: theta.len(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn dimension(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }

    /// Position of `j` within the active set.
    pub fn position(&self, j: usize) -> Option<usize> {
        self.indices.binary_search(&j).ok()
    }

    /// Compose with a subset given as positions into this set.
    pub fn compose(&self, inner: &ActiveSet) -> Result<ActiveSet> {
        if inner.p != self.len() {
            return Err(Error::InvalidArgument(format!(
                "nested active set has dimension {} but outer set has {} entries",
                inner.p,
                self.len()
            )));
        }
        ActiveSet::new(inner.indices.iter().map(|&k| self.indices[k]).collect(), self.p)
    }

    /// Scatter values for the active coordinates into a full-length vector.
    pub fn expand(&self, values: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.p];
        for (&j, &v) in self.indices.iter().zip(values) {
            full[j] = v;
        }
        full
    }

    pub fn gather(&self, full: &[f64]) -> Vec<f64> {
        self.indices.iter().map(|&j| full[j]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_rejects_ragged_and_tiny() {
        assert!(Dataset::from_rows(&[vec![1.0]]).is_err());
        assert!(matches!(
            Dataset::from_rows(&[vec![1.0, 2.0], vec![1.0]]),
            Err(Error::Layout { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn active_set_validation() {
        assert!(ActiveSet::new(vec![0, 0], 3).is_err());
        assert!(ActiveSet::new(vec![3], 3).is_err());
        let a = ActiveSet::new(vec![4, 1, 0], 5).unwrap();
        assert_eq!(a.indices(), &[0, 1, 4]);
        assert_eq!(a.expand(&[1.0, 2.0, 3.0]), vec![1.0, 2.0, 0.0, 0.0, 3.0]);
        let inner = ActiveSet::new(vec![0, 2], 3).unwrap();
        assert_eq!(a.compose(&inner).unwrap().indices(), &[0, 4]);
    }
}
