//! CSV ingestion and design construction.

use std::path::Path;

use nalgebra::DMatrix;
use tiltfit_core::Dataset;

use crate::error::{CliError, Result};

/// A numeric table split into covariates and a response.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    /// `n × k` covariates in file order (response column removed).
    pub covariates: DMatrix<f64>,
    pub response: Vec<f64>,
    pub labels: Vec<String>,
    pub response_label: String,
}

impl Ingested {
    pub fn n(&self) -> usize {
        self.response.len()
    }

    /// Rows `(x_1..x_k, y)`, the layout the regression models read.
    pub fn regression_dataset(&self, design: &DMatrix<f64>) -> Result<Dataset> {
        let k = design.ncols();
        let mut values = Vec::with_capacity(self.n() * (k + 1));
        for i in 0..self.n() {
            values.extend(design.row(i).iter());
            values.push(self.response[i]);
        }
        Ok(Dataset::from_row_major(self.n(), k + 1, values)?)
    }
}

/// Every column of a header-led numeric CSV, as a dataset with column names.
pub fn read_numeric_csv(path: &Path) -> Result<Dataset> {
    let (labels, rows) = read_rows(path)?;
    let n = rows.len();
    let dim = labels.len();
    Dataset::from_row_major(n, dim, rows.into_iter().flatten().collect())?
        .with_column_names(labels)
        .map_err(Into::into)
}

/// Read `path`, taking `response_column` as the response and every other
/// column as a covariate. With `log_response` the response is log-transformed.
pub fn ingest_csv(path: &Path, response_column: &str, log_response: bool) -> Result<Ingested> {
    let (labels, rows) = read_rows(path)?;
    let target = labels
        .iter()
        .position(|l| l == response_column)
        .ok_or_else(|| CliError::Data(format!("{}: no response column '{response_column}'", path.display())))?;
    let n = rows.len();
    let k = labels.len() - 1;
    let mut covariates = DMatrix::zeros(n, k);
    let mut response = Vec::with_capacity(n);
    for (i, row) in rows.iter().enumerate() {
        let mut c = 0;
        for (j, &v) in row.iter().enumerate() {
            if j == target {
                if log_response {
                    if v <= 0.0 {
                        return Err(CliError::Data(format!(
                            "{}: row {}: response {v} has no logarithm",
                            path.display(),
                            i + 2
                        )));
                    }
                    response.push(v.ln());
                } else {
                    response.push(v);
                }
            } else {
                covariates[(i, c)] = v;
                c += 1;
            }
        }
    }
    let response_label = labels[target].clone();
    let labels = labels.into_iter().enumerate().filter(|(j, _)| *j != target).map(|(_, l)| l).collect();
    Ok(Ingested { covariates, response, labels, response_label })
}

fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    let labels: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: unreadable header: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if labels.is_empty() || labels.iter().all(String::is_empty) {
        return Err(CliError::Data(format!("{}: missing header row", path.display())));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // line numbers count the header as line 1
        let line = i + 2;
        let record = record.map_err(|e| CliError::Data(format!("{}: line {line}: {e}", path.display())))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    CliError::Data(format!(
                        "{}: line {line}, column {} ('{}'): '{cell}' is not a finite number",
                        path.display(),
                        j + 1,
                        labels[j]
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    Ok((labels, rows))
}

/// Number of columns produced by [`expand_interactions`] for `k` covariates.
pub fn interaction_width(k: usize, add_intercept: bool) -> usize {
    add_intercept as usize + k + k * (k.saturating_sub(1)) / 2
}

/// Intercept (optional), main effects, then pairwise products `x_j·x_l`
/// (`j < l`) in lexicographic order. Product labels read `a*b`.
pub fn expand_interactions(covariates: &DMatrix<f64>, labels: &[String], add_intercept: bool) -> Result<(DMatrix<f64>, Vec<String>)> {
    let (n, k) = covariates.shape();
    if labels.len() != k {
        return Err(CliError::Data(format!("{} labels for {k} covariate columns", labels.len())));
    }
    let width = interaction_width(k, add_intercept);
    let mut out = DMatrix::zeros(n, width);
    let mut names = Vec::with_capacity(width);
    let mut col = 0;
    if add_intercept {
        out.column_mut(0).fill(1.0);
        names.push("(Intercept)".to_string());
        col = 1;
    }
    for j in 0..k {
        out.set_column(col, &covariates.column(j));
        names.push(labels[j].clone());
        col += 1;
    }
    for j in 0..k {
        for l in j + 1..k {
            out.set_column(col, &covariates.column(j).component_mul(&covariates.column(l)));
            names.push(format!("{}*{}", labels[j], labels[l]));
            col += 1;
        }
    }
    Ok((out, names))
}

/// Center and scale each column to unit sample variance (divisor `n − 1`).
/// Returns the transformed matrix and the `(mean, sd)` of every column.
pub fn standardize(x: &DMatrix<f64>, labels: &[String]) -> Result<(DMatrix<f64>, Vec<(f64, f64)>)> {
    let (n, k) = x.shape();
    if n < 2 {
        return Err(CliError::Data("standardization needs at least two rows".into()));
    }
    let mut out = x.clone();
    let mut transform = Vec::with_capacity(k);
    for j in 0..k {
        let col = x.column(j);
        let mean = col.mean();
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        if !(sd > 0.0) {
            return Err(CliError::Data(format!("column '{}' is constant", labels.get(j).map_or("?", |s| s.as_str()))));
        }
        out.column_mut(j).apply(|v| *v = (*v - mean) / sd);
        transform.push((mean, sd));
    }
    Ok((out, transform))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (1..=k).map(|j| format!("x{j}")).collect()
    }

    #[test]
    fn expansion_examples() {
        let x = DMatrix::from_row_slice(1, 2, &[2.0, 3.0]);
        let (d, l) = expand_interactions(&x, &names(2), true).unwrap();
        assert_eq!(d.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 3.0, 6.0]);
        assert_eq!(l, vec!["(Intercept)", "x1", "x2", "x1*x2"]);
        assert_eq!(interaction_width(13, true), 92);
        let zero = DMatrix::zeros(1, 13);
        let (d, l) = expand_interactions(&zero, &names(13), true).unwrap();
        assert_eq!(d.ncols(), 92);
        assert_eq!(d[(0, 0)], 1.0);
        assert!(d.row(0).iter().skip(1).all(|v| *v == 0.0));
        assert_eq!(l[14], "x1*x2");
        assert_eq!(l[91], "x12*x13");
    }

    #[test]
    fn standardize_gives_unit_variance() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let (z, t) = standardize(&x, &names(1)).unwrap();
        assert_eq!(t, vec![(2.0, 1.0)]);
        assert_eq!(z.column(0).iter().copied().collect::<Vec<_>>(), vec![-1.0, 0.0, 1.0]);
        let c = DMatrix::from_element(3, 1, 4.0);
        assert!(matches!(standardize(&c, &names(1)), Err(CliError::Data(_))));
    }
}
