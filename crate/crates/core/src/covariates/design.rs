use serde::{Deserialize, Serialize};

use crate::error::{LosError, Result};

pub const INTERCEPT: &str = "intercept";

/// Row-major numeric design matrix. Column 0 is always the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    column_names: Vec<String>,
    n_rows: usize,
    values: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(column_names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if column_names.first().map(String::as_str) != Some(INTERCEPT) {
            return Err(LosError::Shape("first design column must be the intercept".into()));
        }
        let d = column_names.len();
        if !values.len().is_multiple_of(d) {
            return Err(LosError::Shape(format!(
                "{} values do not fill rows of {d} columns",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LosError::Shape("design values must be finite".into()));
        }
        let n_rows = values.len() / d;
        Ok(DesignMatrix { column_names, n_rows, values })
    }

    pub fn intercept_only(n_rows: usize) -> Self {
        DesignMatrix {
            column_names: vec![INTERCEPT.to_string()],
            n_rows,
            values: vec![1.0; n_rows],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols() + j]
    }

    /// New matrix made of the given rows, in order (duplicates allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols());
        for &i in rows {
            values.extend_from_slice(self.row(i));
        }
        DesignMatrix {
            column_names: self.column_names.clone(),
            n_rows: rows.len(),
            values,
        }
    }

    /// Stack two matrices with identical columns.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.column_names != other.column_names {
            return Err(LosError::Shape("cannot stack design matrices with different columns".into()));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(DesignMatrix {
            column_names: self.column_names.clone(),
            n_rows: self.n_rows + other.n_rows,
            values,
        })
    }
}
