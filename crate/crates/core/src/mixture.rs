//! The two-class length-of-stay model: with probability `1 - pi` a stay is
//! short and log-normal, with probability `pi` it is long and follows a
//! [`ConvolutiveLongStay`].
//!
//! Any scalar parameter can be made row-dependent through a
//! [`ParameterMap`]. Rows sharing the same values in every mapped column share
//! one resolved model (and one lag table), so evaluation cost scales with the
//! number of distinct covariate patterns rather than the number of rows.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convolution::ConvolutiveLongStay;
use crate::covariates::{DesignMatrix, ParameterMap, Target};
use crate::data_io::StayRecord;
use crate::dist::{ContDistSpec, ContFamily, CountDistSpec, PmfTable};
use crate::error::{LosError, Result};
use crate::math::log_add_exp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixture")]
pub struct MixtureModel {
    /// Probability of a long stay.
    pub pi: f64,
    pub short: ContDistSpec,
    pub long: ConvolutiveLongStay,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parameter_maps: Vec<ParameterMap>,
}

#[derive(Deserialize)]
struct RawMixture {
    pi: f64,
    short: ContDistSpec,
    long: ConvolutiveLongStay,
    #[serde(default)]
    parameter_maps: Vec<ParameterMap>,
}

impl TryFrom<RawMixture> for MixtureModel {
    type Error = LosError;
    fn try_from(raw: RawMixture) -> Result<Self> {
        let model = MixtureModel {
            pi: raw.pi,
            short: raw.short,
            long: raw.long,
            parameter_maps: raw.parameter_maps,
        };
        model.validate()?;
        Ok(model)
    }
}

impl MixtureModel {
    pub fn new(pi: f64, short: ContDistSpec, long: ConvolutiveLongStay) -> Result<Self> {
        let model = MixtureModel {
            pi,
            short,
            long,
            parameter_maps: Vec::new(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_maps(mut self, maps: Vec<ParameterMap>) -> Result<Self> {
        self.parameter_maps = maps;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        // The closed interval is accepted so that the single-component
        // reductions can be expressed; estimators keep pi strictly inside.
        if !(0.0..=1.0).contains(&self.pi) {
            return Err(LosError::domain(format!("pi must lie in [0, 1], got {}", self.pi)));
        }
        if self.short.family != ContFamily::LogNormal {
            return Err(LosError::domain("the short-stay component must be LogNormal"));
        }
        self.short.validate()?;
        self.long.validate()?;
        let mut seen = Vec::new();
        for map in &self.parameter_maps {
            map.validate()?;
            if seen.contains(&map.target) {
                return Err(LosError::Config(format!(
                    "two parameter maps target `{}`",
                    map.target.name()
                )));
            }
            seen.push(map.target);
            if map.target == Target::N {
                return Err(LosError::Config("the Binomial size n cannot depend on covariates".into()));
            }
            if self.get(map.target).is_none() {
                return Err(LosError::Config(format!(
                    "a {} lag has no parameter `{}`",
                    self.long.count.family_name(),
                    map.target.name()
                )));
            }
        }
        Ok(())
    }

    pub fn is_covariate_free(&self) -> bool {
        self.parameter_maps.is_empty()
    }

    /// The scalar parameters this model exposes, in a fixed order.
    pub fn targets(&self) -> Vec<Target> {
        let mut t = vec![Target::Pi, Target::MuS, Target::SigmaS];
        t.extend(count_targets(&self.long.count));
        t.extend([Target::M, Target::Sigma]);
        t
    }

    /// Current value of a scalar parameter, `None` if the model has no such
    /// parameter. Row-dependent parameters report their base value.
    pub fn get(&self, target: Target) -> Option<f64> {
        use CountDistSpec::*;
        let count = &self.long.count;
        match target {
            Target::Pi => Some(self.pi),
            Target::MuS => Some(self.short.mu),
            Target::SigmaS => Some(self.short.sigma),
            Target::M => Some(self.long.cont.mu),
            Target::Sigma => Some(self.long.cont.sigma),
            Target::P => match *count {
                NegBin { p, .. } | Binomial { p, .. } => Some(p),
                _ => None,
            },
            Target::R => match *count {
                NegBin { r, .. } => Some(r),
                _ => None,
            },
            Target::Lambda => match *count {
                Poisson { lambda } | Cmp { lambda, .. } => Some(lambda),
                _ => None,
            },
            Target::Nu => match *count {
                Cmp { nu, .. } => Some(nu),
                _ => None,
            },
            Target::N => match *count {
                Binomial { n, .. } => Some(n as f64),
                _ => None,
            },
        }
    }

    /// Overwrite a scalar parameter without validating the result.
    pub fn set(&mut self, target: Target, v: f64) -> Result<()> {
        use CountDistSpec::*;
        let missing = || {
            LosError::Config(format!("model has no parameter `{}`", target.name()))
        };
        match target {
            Target::Pi => self.pi = v,
            Target::MuS => self.short.mu = v,
            Target::SigmaS => self.short.sigma = v,
            Target::M => self.long.cont.mu = v,
            Target::Sigma => self.long.cont.sigma = v,
            Target::P => match &mut self.long.count {
                NegBin { p, .. } | Binomial { p, .. } => *p = v,
                _ => return Err(missing()),
            },
            Target::R => match &mut self.long.count {
                NegBin { r, .. } => *r = v,
                _ => return Err(missing()),
            },
            Target::Lambda => match &mut self.long.count {
                Poisson { lambda } | Cmp { lambda, .. } => *lambda = v,
                _ => return Err(missing()),
            },
            Target::Nu => match &mut self.long.count {
                Cmp { nu, .. } => *nu = v,
                _ => return Err(missing()),
            },
            Target::N => match &mut self.long.count {
                Binomial { n, .. } if v >= 0.0 && v.fract() == 0.0 => *n = v as u64,
                _ => return Err(missing()),
            },
        }
        Ok(())
    }

    pub fn map_for(&self, target: Target) -> Option<&ParameterMap> {
        self.parameter_maps.iter().find(|m| m.target == target)
    }

    /// Covariate-free model for one design row.
    pub fn at_row(&self, design: &DesignMatrix, i: usize) -> Result<MixtureModel> {
        let mut m = self.base();
        for map in &self.parameter_maps {
            let idx = map.resolve(design)?;
            m.set(map.target, map.value_at(design.row(i), &idx))?;
        }
        m.validate()?;
        Ok(m)
    }

    /// This model with the parameter maps dropped.
    pub fn base(&self) -> MixtureModel {
        MixtureModel {
            parameter_maps: Vec::new(),
            ..self.clone()
        }
    }

    fn require_free(&self) -> Result<()> {
        if self.is_covariate_free() {
            Ok(())
        } else {
            Err(LosError::Config(
                "model depends on covariates; resolve it for a row first".into(),
            ))
        }
    }

    /// `(ln f_S(y), ln f_L(y))` for a covariate-free model.
    pub fn ln_components(&self, y: f64, table: &PmfTable) -> (f64, f64) {
        (self.short.ln_pdf(y), self.long.ln_pdf_with(y, table))
    }

    /// `ln((1 - pi) f_S(y) + pi f_L(y))` for a covariate-free model.
    pub fn ln_pdf_with(&self, y: f64, table: &PmfTable) -> f64 {
        if self.pi == 0.0 {
            return self.short.ln_pdf(y);
        }
        if self.pi == 1.0 {
            return self.long.ln_pdf_with(y, table);
        }
        let (ls, ll) = self.ln_components(y, table);
        log_add_exp((-self.pi).ln_1p() + ls, self.pi.ln() + ll)
    }

    pub fn pdf_with(&self, y: f64, table: &PmfTable) -> f64 {
        if self.pi == 0.0 {
            return self.short.pdf(y);
        }
        if self.pi == 1.0 {
            return self.long.pdf_with(y, table);
        }
        self.ln_pdf_with(y, table).exp()
    }

    pub fn cdf_with(&self, y: f64, table: &PmfTable) -> f64 {
        if self.pi == 0.0 {
            return self.short.cdf(y);
        }
        if self.pi == 1.0 {
            return self.long.cdf_with(y, table);
        }
        ((1.0 - self.pi) * self.short.cdf(y) + self.pi * self.long.cdf_with(y, table)).clamp(0.0, 1.0)
    }

    pub fn pdf(&self, y: f64) -> Result<f64> {
        self.require_free()?;
        Ok(self.pdf_with(y, &self.long.table()?))
    }

    pub fn ln_pdf(&self, y: f64) -> Result<f64> {
        self.require_free()?;
        Ok(self.ln_pdf_with(y, &self.long.table()?))
    }

    pub fn cdf(&self, y: f64) -> Result<f64> {
        self.require_free()?;
        Ok(self.cdf_with(y, &self.long.table()?))
    }

    pub fn mean(&self) -> Result<f64> {
        self.require_free()?;
        if self.pi == 0.0 {
            return Ok(self.short.mean());
        }
        if self.pi == 1.0 {
            return self.long.mean();
        }
        Ok((1.0 - self.pi) * self.short.mean() + self.pi * self.long.mean()?)
    }

    /// Variance of a covariate-free model.
    pub fn variance(&self) -> Result<f64> {
        self.require_free()?;
        let (ms, ml) = (self.short.mean(), self.long.mean()?);
        let m = (1.0 - self.pi) * ms + self.pi * ml;
        let second = (1.0 - self.pi) * (self.short.variance() + ms * ms)
            + self.pi * (self.long.variance()? + ml * ml);
        Ok(second - m * m)
    }

    /// Sampler state for a covariate-free model.
    pub fn sampler(&self) -> Result<MixtureSampler<'_>> {
        self.require_free()?;
        let table = match self.long.count {
            CountDistSpec::Cmp { .. } | CountDistSpec::Multinomial { .. } => {
                Some(PmfTable::new(&self.long.count, 1e-14)?)
            }
            _ => None,
        };
        Ok(MixtureSampler { model: self, table })
    }

    /// `n` draws and whether each came from the long component.
    pub fn sample_labeled<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(Vec<f64>, Vec<bool>)> {
        let s = self.sampler()?;
        let mut y = Vec::with_capacity(n);
        let mut long = Vec::with_capacity(n);
        for _ in 0..n {
            let (v, l) = s.draw(rng)?;
            y.push(v);
            long.push(l);
        }
        Ok((y, long))
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        Ok(self.sample_labeled(n, rng)?.0)
    }

    /// One draw per design row, with parameters resolved for that row.
    pub fn sample_design<R: Rng + ?Sized>(&self, design: &DesignMatrix, rng: &mut R) -> Result<Vec<f64>> {
        let groups = RowGroups::new(self, design)?;
        let resolved = Resolved::new(self, design, &groups)?;
        let samplers = resolved
            .models
            .iter()
            .map(|m| m.sampler())
            .collect::<Result<Vec<_>>>()?;
        (0..design.n_rows())
            .map(|i| Ok(samplers[groups.group_of(i)].draw(rng)?.0))
            .collect()
    }

    /// Pointwise log density over a data set.
    pub fn ln_pdf_rows(&self, data: &LosData) -> Result<Vec<f64>> {
        data.check_positive()?;
        let groups = RowGroups::new(self, &data.design)?;
        let resolved = Resolved::new(self, &data.design, &groups)?;
        Ok(data
            .y
            .par_iter()
            .enumerate()
            .map(|(i, &y)| {
                let g = groups.group_of(i);
                resolved.models[g].ln_pdf_with(y, &resolved.tables[g])
            })
            .collect())
    }

    /// Observed-data log-likelihood `Σ_i ln f(y_i | x_i)`, summed in row order.
    pub fn loglik(&self, data: &LosData) -> Result<f64> {
        Ok(self.ln_pdf_rows(data)?.iter().sum())
    }
}

fn count_targets(count: &CountDistSpec) -> Vec<Target> {
    match count {
        CountDistSpec::NegBin { .. } => vec![Target::R, Target::P],
        CountDistSpec::Poisson { .. } => vec![Target::Lambda],
        CountDistSpec::Cmp { .. } => vec![Target::Lambda, Target::Nu],
        CountDistSpec::Binomial { .. } => vec![Target::N, Target::P],
        CountDistSpec::Multinomial { .. } => vec![],
    }
}

pub struct MixtureSampler<'a> {
    model: &'a MixtureModel,
    table: Option<PmfTable>,
}

impl MixtureSampler<'_> {
    /// One draw and whether it is a long stay.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(f64, bool)> {
        let u: f64 = rng.random();
        if u < self.model.pi {
            let k = match &self.table {
                Some(t) => t.sample(rng),
                None => self.model.long.count.sample(rng)?,
            };
            Ok((k as f64 + self.model.long.cont.sample(rng), true))
        } else {
            Ok((self.model.short.sample(rng), false))
        }
    }
}

/// Rows partitioned by their values in the columns any parameter map reads.
#[derive(Debug, Clone)]
pub struct RowGroups {
    row_group: Vec<usize>,
    representatives: Vec<usize>,
    sizes: Vec<usize>,
}

impl RowGroups {
    pub fn new(model: &MixtureModel, design: &DesignMatrix) -> Result<Self> {
        let n = design.n_rows();
        let mut cols: Vec<usize> = Vec::new();
        for map in &model.parameter_maps {
            cols.extend(map.resolve(design)?);
        }
        cols.sort_unstable();
        cols.dedup();
        if cols.iter().all(|&j| j == 0) {
            return Ok(RowGroups {
                row_group: vec![0; n],
                representatives: vec![0],
                sizes: vec![n],
            });
        }
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut row_group = Vec::with_capacity(n);
        let mut representatives = Vec::new();
        let mut sizes = Vec::new();
        for i in 0..n {
            let row = design.row(i);
            let key: Vec<u64> = cols.iter().map(|&j| row[j].to_bits()).collect();
            let g = *index.entry(key).or_insert_with(|| {
                representatives.push(i);
                sizes.push(0);
                representatives.len() - 1
            });
            sizes[g] += 1;
            row_group.push(g);
        }
        Ok(RowGroups {
            row_group,
            representatives,
            sizes,
        })
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn group_of(&self, row: usize) -> usize {
        self.row_group[row]
    }

    pub fn size(&self, g: usize) -> usize {
        self.sizes[g]
    }

    pub fn representative(&self, g: usize) -> usize {
        self.representatives[g]
    }
}

/// One covariate-free model and lag table per row group.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub models: Vec<MixtureModel>,
    pub tables: Vec<PmfTable>,
}

impl Resolved {
    pub fn new(model: &MixtureModel, design: &DesignMatrix, groups: &RowGroups) -> Result<Self> {
        if design.n_rows() == 0 {
            let base = model.base();
            let table = base.long.table()?;
            return Ok(Resolved {
                models: vec![base],
                tables: vec![table],
            });
        }
        let mut models = Vec::with_capacity(groups.len());
        let mut tables = Vec::with_capacity(groups.len());
        for g in 0..groups.len() {
            let m = model.at_row(design, groups.representative(g))?;
            tables.push(m.long.table()?);
            models.push(m);
        }
        Ok(Resolved { models, tables })
    }

    /// Resolved models only, without building lag tables.
    pub fn models(model: &MixtureModel, design: &DesignMatrix, groups: &RowGroups) -> Result<Vec<MixtureModel>> {
        if design.n_rows() == 0 || model.is_covariate_free() {
            return Ok(vec![model.base(); groups.len().max(1)]);
        }
        (0..groups.len())
            .map(|g| model.at_row(design, groups.representative(g)))
            .collect()
    }

    /// Population CDF: the group CDFs averaged with weights proportional to
    /// group sizes.
    pub fn marginal_cdf(&self, groups: &RowGroups, y: f64) -> f64 {
        let n: usize = (0..groups.len()).map(|g| groups.size(g)).sum();
        let s: f64 = (0..groups.len())
            .map(|g| groups.size(g) as f64 * self.models[g].cdf_with(y, &self.tables[g]))
            .sum();
        (s / n as f64).clamp(0.0, 1.0)
    }
}

/// Observed stays with their encoded covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct LosData {
    pub y: Vec<f64>,
    pub design: DesignMatrix,
    /// Source row number of each observation, used in error messages.
    pub rows: Vec<usize>,
}

impl LosData {
    pub fn new(y: Vec<f64>, design: DesignMatrix) -> Result<Self> {
        let rows = (1..=y.len()).collect();
        Self::with_rows(y, design, rows)
    }

    pub fn with_rows(y: Vec<f64>, design: DesignMatrix, rows: Vec<usize>) -> Result<Self> {
        if design.n_rows() != y.len() || rows.len() != y.len() {
            return Err(LosError::Shape(format!(
                "{} stays but {} design rows and {} row labels",
                y.len(),
                design.n_rows(),
                rows.len()
            )));
        }
        let data = LosData { y, design, rows };
        data.check_positive()?;
        Ok(data)
    }

    /// Stays without covariates.
    pub fn from_y(y: Vec<f64>) -> Result<Self> {
        let design = DesignMatrix::intercept_only(y.len());
        Self::new(y, design)
    }

    /// Stays and design from parsed records (records without a stay are an
    /// error).
    pub fn from_records(records: &[StayRecord], design: DesignMatrix) -> Result<Self> {
        let mut y = Vec::with_capacity(records.len());
        for r in records {
            match r.los_days {
                Some(v) => y.push(v),
                None => {
                    return Err(LosError::DataDomain {
                        row: r.row,
                        reason: "length of stay is missing".into(),
                    })
                }
            }
        }
        let rows = records.iter().map(|r| r.row).collect();
        Self::with_rows(y, design, rows)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn check_positive(&self) -> Result<()> {
        for (i, &y) in self.y.iter().enumerate() {
            if !(y > 0.0 && y.is_finite()) {
                return Err(LosError::DataDomain {
                    row: self.rows[i],
                    reason: format!("length of stay must be positive and finite, got {y}"),
                });
            }
        }
        Ok(())
    }

    pub fn select(&self, idx: &[usize]) -> LosData {
        LosData {
            y: idx.iter().map(|&i| self.y[i]).collect(),
            design: self.design.select_rows(idx),
            rows: idx.iter().map(|&i| self.rows[i]).collect(),
        }
    }

    pub fn concat(&self, other: &LosData) -> Result<LosData> {
        let mut y = self.y.clone();
        y.extend_from_slice(&other.y);
        let mut rows = self.rows.clone();
        rows.extend_from_slice(&other.rows);
        Ok(LosData {
            y,
            design: self.design.concat(&other.design)?,
            rows,
        })
    }
}

pub fn mix_pdf(model: &MixtureModel, y: f64) -> Result<f64> {
    model.validate()?;
    model.pdf(y)
}

pub fn mix_cdf(model: &MixtureModel, y: f64) -> Result<f64> {
    model.validate()?;
    model.cdf(y)
}

pub fn mix_mean(model: &MixtureModel) -> Result<f64> {
    model.validate()?;
    model.mean()
}

pub fn mix_loglik(model: &MixtureModel, data: &LosData) -> Result<f64> {
    model.validate()?;
    model.loglik(data)
}

pub fn mix_sample<R: Rng + ?Sized>(model: &MixtureModel, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    model.validate()?;
    model.sample(n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariates::{Link, INTERCEPT};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference() -> MixtureModel {
        MixtureModel::new(
            0.3,
            ContDistSpec::lognormal(-1.0, 0.5).unwrap(),
            ConvolutiveLongStay::new(
                CountDistSpec::negbin(2.0, 0.4).unwrap(),
                ContDistSpec::normal(4.0, 1.0).unwrap(),
            )
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn degenerate_weights_reduce_exactly() {
        let mut m = reference();
        m.pi = 1.0;
        assert_eq!(m.pdf(4.5).unwrap(), m.long.pdf(4.5).unwrap());
        assert_eq!(m.cdf(4.5).unwrap(), m.long.cdf(4.5).unwrap());
        m.pi = 0.0;
        assert_eq!(m.pdf(0.4).unwrap(), m.short.pdf(0.4));
        assert_eq!(m.mean().unwrap(), m.short.mean());
    }

    #[test]
    fn hand_combined_density() {
        let m = reference();
        let want = 0.7 * m.short.pdf(4.5) + 0.3 * m.long.pdf(4.5).unwrap();
        assert!((m.pdf(4.5).unwrap() - want).abs() < 1e-15);
        let mean = 0.3 * 7.0 + 0.7 * (-1.0f64 + 0.125).exp();
        assert!((m.mean().unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn loglik_rejects_non_positive() {
        let data = LosData::from_y(vec![1.0, 2.0]).unwrap();
        assert!(reference().loglik(&data).is_ok());
        match LosData::from_y(vec![1.0, -1.0]) {
            Err(LosError::DataDomain { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn get_set_round_trip() {
        let mut m = reference();
        for t in m.targets() {
            let v = m.get(t).unwrap();
            m.set(t, v).unwrap();
        }
        assert_eq!(m, reference());
        assert!(m.get(Target::Lambda).is_none());
        assert!(m.set(Target::Nu, 1.0).is_err());
    }

    #[test]
    fn covariate_rows_resolve_through_maps() {
        let design = DesignMatrix::new(
            vec![INTERCEPT.into(), "x".into()],
            vec![1.0, 0.0, 1.0, 1.0, 1.0, 0.0],
        )
        .unwrap();
        let map = ParameterMap::new(Target::M, vec![INTERCEPT.into(), "x".into()], vec![4.0, 1.5], Link::Identity)
            .unwrap();
        let m = reference().with_maps(vec![map]).unwrap();
        assert_eq!(m.at_row(&design, 1).unwrap().long.cont.mu, 5.5);
        let groups = RowGroups::new(&m, &design).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups.group_of(2), 0);
        let data = LosData::new(vec![5.0, 6.0, 0.3], design).unwrap();
        let by_row: f64 = (0..3)
            .map(|i| m.at_row(&data.design, i).unwrap().ln_pdf(data.y[i]).unwrap())
            .sum();
        assert!((m.loglik(&data).unwrap() - by_row).abs() < 1e-12);
        assert!(m.pdf(1.0).is_err());
    }

    #[test]
    fn sampler_long_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (_, long) = reference().sample_labeled(200_000, &mut rng).unwrap();
        let frac = long.iter().filter(|l| **l).count() as f64 / long.len() as f64;
        assert!((frac - 0.3).abs() < 0.005);
    }

    #[test]
    fn json_round_trip() {
        let m = reference();
        let s = serde_json::to_string(&m).unwrap();
        let back: MixtureModel = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
        let bad = s.replace("\"pi\":0.3", "\"pi\":1.3");
        assert!(serde_json::from_str::<MixtureModel>(&bad).is_err());
    }
}
