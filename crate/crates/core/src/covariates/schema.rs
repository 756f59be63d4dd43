//! Feature schema: which raw fields exist, how they are encoded into design
//! columns, and which columns drive which model parameter.
//!
//! The schema is written in TOML:
//!
//! ```toml
//! los_column = "los_days"      # optional, this is the default
//! missing = "reject"           # or "drop_row"
//!
//! [[field]]
//! name = "age"
//! type = "numeric"
//! min = 0.0
//! max = 120.0
//!
//! [[field]]
//! name = "day_of_arrival"
//! type = "categorical"
//! levels = ["Sun", "Mon", "Tue", "Wed", "Thu", "Fri", "Sat"]
//! reference = "Sun"
//!
//! [[field]]
//! name = "drg"
//! type = "categorical"
//! transform = "prefix2"        # keep the first two characters
//! max_levels = 634
//!
//! [[parameter]]
//! target = "m"
//! features = ["drg", "age"]
//! link = "identity"            # optional, defaults per target
//! ```
//!
//! Without any `[[parameter]]` table, every field drives the lag parameters
//! (`p`, `r`, `lambda`, `nu`, whichever the model has) and `m`; write
//! `parameter = []` for a covariate-free model.
//!
//! Categorical fields without `levels` get the sorted distinct (transformed)
//! values of the training records; the first becomes the reference level unless
//! `reference` says otherwise. Encoding drops the reference level.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::design::{DesignMatrix, INTERCEPT};
use super::link::{Link, Target};
use super::map::ParameterMap;
use crate::data_io::StayRecord;
use crate::error::{LosError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Numeric,
    Categorical,
}

/// Value transform applied to a categorical field before level lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Transform {
    /// Keep the first `n` characters.
    Prefix(usize),
}

impl TryFrom<String> for Transform {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        match s.strip_prefix("prefix").map(str::parse::<usize>) {
            Some(Ok(n)) if n > 0 => Ok(Transform::Prefix(n)),
            _ => Err(format!("unknown transform `{s}` (expected prefixN, e.g. prefix2)")),
        }
    }
}

impl From<Transform> for String {
    fn from(t: Transform) -> String {
        match t {
            Transform::Prefix(n) => format!("prefix{n}"),
        }
    }
}

impl Transform {
    pub fn apply(self, raw: &str) -> String {
        match self {
            Transform::Prefix(n) => raw.chars().take(n).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: FieldKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<Transform>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_levels: Option<usize>,
}

impl FieldSpec {
    pub fn numeric(name: &str) -> Self {
        FieldSpec {
            name: name.to_string(),
            kind: FieldKind::Numeric,
            levels: None,
            reference: None,
            transform: None,
            min: None,
            max: None,
            max_levels: None,
        }
    }

    pub fn categorical(name: &str) -> Self {
        FieldSpec {
            kind: FieldKind::Categorical,
            ..Self::numeric(name)
        }
    }

    pub fn with_levels(mut self, levels: &[&str], reference: &str) -> Self {
        self.levels = Some(levels.iter().map(|s| s.to_string()).collect());
        self.reference = Some(reference.to_string());
        self
    }

    pub fn with_range(mut self, min: f64, max: f64) -> Self {
        self.min = Some(min);
        self.max = Some(max);
        self
    }

    pub fn with_max_levels(mut self, n: usize) -> Self {
        self.max_levels = Some(n);
        self
    }

    pub fn with_transform(mut self, t: Transform) -> Self {
        self.transform = Some(t);
        self
    }

    /// Level string for a raw categorical value.
    pub fn level_of(&self, raw: &str) -> String {
        match self.transform {
            Some(t) => t.apply(raw),
            None => raw.to_string(),
        }
    }

    fn reference_level(&self) -> Option<&str> {
        self.reference
            .as_deref()
            .or_else(|| self.levels.as_ref().and_then(|l| l.first()).map(String::as_str))
    }

    /// Encoded column names contributed by this field.
    fn columns(&self) -> Result<Vec<String>> {
        match self.kind {
            FieldKind::Numeric => Ok(vec![self.name.clone()]),
            FieldKind::Categorical => {
                let levels = self.levels.as_ref().ok_or_else(|| {
                    LosError::Config(format!("levels of `{}` are not resolved", self.name))
                })?;
                let reference = self.reference_level();
                Ok(levels
                    .iter()
                    .filter(|l| Some(l.as_str()) != reference)
                    .map(|l| format!("{}={}", self.name, l))
                    .collect())
            }
        }
    }
}

/// A raw field value as read from a record.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Numeric(f64),
    Category(String),
    Missing,
}

impl fmt::Display for FieldValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldValue::Numeric(v) => write!(f, "{v}"),
            FieldValue::Category(s) => f.write_str(s),
            FieldValue::Missing => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    Reject,
    DropRow,
}

/// Which features enter the linear predictor of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub target: Target,
    #[serde(default)]
    pub features: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<Link>,
}

/// Parameters driven by every schema field when the schema declares no
/// `[[parameter]]` entries: the lag parameters and the recovery location.
/// Mixing weight, short-stay parameters and recovery scale stay constant.
pub const DEFAULT_TARGETS: [Target; 5] = [Target::P, Target::R, Target::Lambda, Target::Nu, Target::M];

fn default_los_column() -> String {
    "los_days".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    #[serde(default = "default_los_column")]
    pub los_column: String,
    #[serde(default)]
    pub missing: MissingPolicy,
    #[serde(default, rename = "field")]
    pub fields: Vec<FieldSpec>,
    /// `None` applies [`DEFAULT_TARGETS`]; an empty list keeps the model
    /// covariate-free.
    #[serde(default, rename = "parameter", skip_serializing_if = "Option::is_none")]
    pub parameters: Option<Vec<ParameterSpec>>,
}

impl Default for FeatureSchema {
    fn default() -> Self {
        FeatureSchema {
            los_column: default_los_column(),
            missing: MissingPolicy::Reject,
            fields: Vec::new(),
            parameters: None,
        }
    }
}

impl FeatureSchema {
    pub fn from_toml(text: &str) -> Result<Self> {
        let schema: FeatureSchema =
            toml::from_str(text).map_err(|e| LosError::Config(format!("schema: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LosError::Config(format!("schema: {e}")))
    }

    /// The patient and hospital features of a typical admissions extract,
    /// with their maximum cardinalities. DRG codes are cut to two characters.
    pub fn hospital_default() -> Self {
        let fields = vec![
            FieldSpec::numeric("age").with_range(0.0, 130.0),
            FieldSpec::categorical("gender").with_max_levels(3),
            FieldSpec::categorical("marital_status").with_max_levels(4),
            FieldSpec::categorical("ethnicity").with_max_levels(5),
            FieldSpec::categorical("country").with_max_levels(50),
            FieldSpec::categorical("disease_type").with_max_levels(9),
            FieldSpec::categorical("drg")
                .with_transform(Transform::Prefix(2))
                .with_max_levels(634),
            FieldSpec::numeric("hour_of_arrival").with_range(0.0, 24.0),
            FieldSpec::categorical("day_of_arrival")
                .with_levels(&["Sun", "Mon", "Tue", "Wed", "Thu", "Fri", "Sat"], "Sun"),
            FieldSpec::numeric("month_of_arrival").with_range(1.0, 12.0),
            FieldSpec::categorical("admission_type").with_max_levels(4),
            FieldSpec::categorical("admission_unit").with_max_levels(46),
            FieldSpec::categorical("discharge_unit").with_max_levels(46),
            FieldSpec::categorical("care_type").with_max_levels(4),
        ];
        FeatureSchema {
            fields,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for f in &self.fields {
            if !seen.insert(f.name.as_str()) || f.name == self.los_column {
                return Err(LosError::Config(format!("duplicate field `{}`", f.name)));
            }
            if let (Some(levels), Some(r)) = (&f.levels, &f.reference) {
                if !levels.contains(r) {
                    return Err(LosError::Config(format!(
                        "reference level `{r}` of `{}` is not among its levels",
                        f.name
                    )));
                }
            }
            if let (Some(levels), Some(max)) = (&f.levels, f.max_levels) {
                if levels.len() > max {
                    return Err(LosError::Config(format!(
                        "`{}` declares {} levels, more than its maximum {max}",
                        f.name,
                        levels.len()
                    )));
                }
            }
        }
        for p in self.parameters.iter().flatten() {
            if p.target == Target::N {
                return Err(LosError::Config(
                    "the Binomial size n cannot depend on covariates".into(),
                ));
            }
            if let Some(link) = p.link {
                link.check(p.target)?;
            }
            for feat in &p.features {
                if self.field_index(feat).is_none() {
                    return Err(LosError::Config(format!(
                        "parameter `{}` uses unknown feature `{feat}`",
                        p.target.name()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    /// Check one raw value against the field's declared range or levels.
    pub fn check_value(&self, field: usize, value: &FieldValue, row: usize) -> Result<()> {
        let spec = &self.fields[field];
        let err = |reason: String| LosError::Schema {
            row,
            field: spec.name.clone(),
            reason,
        };
        match (spec.kind, value) {
            (_, FieldValue::Missing) => Ok(()),
            (FieldKind::Numeric, FieldValue::Numeric(v)) => {
                if !v.is_finite() {
                    return Err(err(format!("value {v} is not finite")));
                }
                if spec.min.is_some_and(|m| *v < m) || spec.max.is_some_and(|m| *v > m) {
                    return Err(err(format!("value {v} is outside the declared range")));
                }
                Ok(())
            }
            (FieldKind::Categorical, FieldValue::Category(s)) => {
                if let Some(levels) = &spec.levels {
                    let level = spec.level_of(s);
                    if !levels.contains(&level) {
                        return Err(err(format!("unknown level `{level}`")));
                    }
                }
                Ok(())
            }
            (FieldKind::Numeric, FieldValue::Category(s)) => Err(err(format!("`{s}` is not numeric"))),
            (FieldKind::Categorical, FieldValue::Numeric(v)) => Err(err(format!("unexpected number {v}"))),
        }
    }

    /// Copy of the schema with undeclared categorical levels taken from
    /// `records`.
    pub fn resolve_levels(&self, records: &[StayRecord]) -> Result<FeatureSchema> {
        let mut out = self.clone();
        for (j, f) in out.fields.iter_mut().enumerate() {
            if f.kind != FieldKind::Categorical || f.levels.is_some() {
                continue;
            }
            let mut seen = BTreeSet::new();
            for r in records {
                if let Some(FieldValue::Category(s)) = r.features.get(j) {
                    seen.insert(f.level_of(s));
                }
            }
            if let Some(max) = f.max_levels {
                if seen.len() > max {
                    return Err(LosError::Schema {
                        row: 0,
                        field: f.name.clone(),
                        reason: format!("{} distinct levels exceed the maximum {max}", seen.len()),
                    });
                }
            }
            f.levels = Some(seen.into_iter().collect());
        }
        out.validate()?;
        Ok(out)
    }

    /// Design column names: intercept first, then each field in order.
    pub fn column_names(&self) -> Result<Vec<String>> {
        let mut names = vec![INTERCEPT.to_string()];
        for f in &self.fields {
            names.extend(f.columns()?);
        }
        Ok(names)
    }

    /// Encode records into a design matrix (numeric fields as is,
    /// categorical fields one-hot with the reference level dropped).
    pub fn encode(&self, records: &[StayRecord]) -> Result<DesignMatrix> {
        let names = self.column_names()?;
        let mut values = Vec::with_capacity(records.len() * names.len());
        for rec in records {
            if rec.features.len() != self.fields.len() {
                return Err(LosError::Shape(format!(
                    "record at row {} has {} features, schema declares {}",
                    rec.row,
                    rec.features.len(),
                    self.fields.len()
                )));
            }
            values.push(1.0);
            for (f, v) in self.fields.iter().zip(&rec.features) {
                let err = |reason: String| LosError::Schema {
                    row: rec.row,
                    field: f.name.clone(),
                    reason,
                };
                match (f.kind, v) {
                    (FieldKind::Numeric, FieldValue::Numeric(x)) => values.push(*x),
                    (FieldKind::Categorical, FieldValue::Category(s)) => {
                        let level = f.level_of(s);
                        let levels = f.levels.as_ref().expect("levels resolved by column_names");
                        if !levels.contains(&level) {
                            return Err(err(format!("unknown level `{level}`")));
                        }
                        let reference = f.reference_level();
                        for l in levels.iter().filter(|l| Some(l.as_str()) != reference) {
                            values.push(if *l == level { 1.0 } else { 0.0 });
                        }
                    }
                    (_, FieldValue::Missing) => return Err(err("missing value".into())),
                    _ => return Err(err(format!("value `{v}` does not match the field type"))),
                }
            }
        }
        DesignMatrix::new(names, values)
    }

    /// Design columns contributed by the named features.
    pub fn feature_columns(&self, features: &[String]) -> Result<Vec<String>> {
        let mut cols = Vec::new();
        for name in features {
            let idx = self
                .field_index(name)
                .ok_or_else(|| LosError::Config(format!("unknown feature `{name}`")))?;
            cols.extend(self.fields[idx].columns()?);
        }
        Ok(cols)
    }

    /// The declared `[[parameter]]` entries, or every field on each of
    /// [`DEFAULT_TARGETS`] that `has_target` accepts when none are declared.
    pub fn parameter_specs(&self, has_target: impl Fn(Target) -> bool) -> Vec<ParameterSpec> {
        match &self.parameters {
            Some(specs) => specs.clone(),
            None if self.fields.is_empty() => Vec::new(),
            None => DEFAULT_TARGETS
                .iter()
                .filter(|t| has_target(**t))
                .map(|&target| ParameterSpec {
                    target,
                    features: self.fields.iter().map(|f| f.name.clone()).collect(),
                    link: None,
                })
                .collect(),
        }
    }

    /// One [`ParameterMap`] per entry of [`Self::parameter_specs`]. The
    /// intercept starts at the link-inverse of `base(target)`, other
    /// coefficients at zero.
    pub fn build_maps(&self, base: impl Fn(Target) -> Option<f64>) -> Result<Vec<ParameterMap>> {
        self.parameter_specs(|t| base(t).is_some())
            .iter()
            .map(|p| {
                let link = p.link.unwrap_or_else(|| p.target.default_link());
                let value = base(p.target).ok_or_else(|| {
                    LosError::Config(format!(
                        "model has no parameter `{}` to attach covariates to",
                        p.target.name()
                    ))
                })?;
                let mut columns = vec![INTERCEPT.to_string()];
                columns.extend(self.feature_columns(&p.features)?);
                let mut beta = vec![0.0; columns.len()];
                beta[0] = link.inverse(value);
                ParameterMap::new(p.target, columns, beta, link)
            })
            .collect()
    }
}
