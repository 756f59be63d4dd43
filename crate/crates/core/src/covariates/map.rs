use serde::{Deserialize, Serialize};

use super::design::{DesignMatrix, INTERCEPT};
use super::link::{Link, Target};
use crate::error::{LosError, Result};

/// `s(x) = h(β·x_s)` for one model parameter.
///
/// `columns` names the design columns entering the linear predictor, in the
/// order of `beta`. A constant map has the single column `intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterMap {
    pub target: Target,
    pub columns: Vec<String>,
    pub beta: Vec<f64>,
    pub link: Link,
}

impl ParameterMap {
    pub fn new(target: Target, columns: Vec<String>, beta: Vec<f64>, link: Link) -> Result<Self> {
        let map = ParameterMap { target, columns, beta, link };
        map.validate()?;
        Ok(map)
    }

    /// Constant map reproducing `value` through `link`.
    pub fn constant(target: Target, value: f64, link: Link) -> Result<Self> {
        Self::new(target, vec![INTERCEPT.to_string()], vec![link.inverse(value)], link)
    }

    pub fn validate(&self) -> Result<()> {
        self.link.check(self.target)?;
        if self.columns.is_empty() {
            return Err(LosError::Shape(format!("map for `{}` selects no columns", self.target.name())));
        }
        if self.columns.len() != self.beta.len() {
            return Err(LosError::Shape(format!(
                "map for `{}` has {} columns but {} coefficients",
                self.target.name(),
                self.columns.len(),
                self.beta.len()
            )));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(LosError::domain(format!(
                "non-finite coefficient in map for `{}`",
                self.target.name()
            )));
        }
        Ok(())
    }

    pub fn is_constant(&self) -> bool {
        self.columns.len() == 1 && self.columns[0] == INTERCEPT
    }

    /// Indices of the selected columns within `matrix`.
    pub fn resolve(&self, matrix: &DesignMatrix) -> Result<Vec<usize>> {
        self.columns
            .iter()
            .map(|c| {
                matrix
                    .column_index(c)
                    .ok_or_else(|| LosError::Shape(format!("design has no column `{c}`")))
            })
            .collect()
    }

    /// Parameter value for one design row, given indices from [`Self::resolve`].
    pub fn value_at(&self, row: &[f64], idx: &[usize]) -> f64 {
        let eta: f64 = idx.iter().zip(&self.beta).map(|(&j, b)| row[j] * b).sum();
        self.link.apply(eta)
    }

    /// Element-wise `h(x_i·β)` over the rows of `matrix`.
    pub fn apply(&self, matrix: &DesignMatrix) -> Result<Vec<f64>> {
        self.validate()?;
        let idx = self.resolve(matrix)?;
        Ok((0..matrix.n_rows())
            .map(|i| self.value_at(matrix.row(i), &idx))
            .collect())
    }
}
