//! Mapping between a [`MixtureModel`] and the flat unconstrained vector the
//! optimizers work on.
//!
//! Each free scalar parameter contributes `link.inverse(value)` under its
//! default link; each covariate-driven parameter contributes its coefficient
//! vector; Multinomial weights contribute log-ratios against weight 0. The
//! Binomial size is never free.

use crate::covariates::Target;
use crate::dist::CountDistSpec;
use crate::error::{LosError, Result};
use crate::mixture::MixtureModel;

/// Parameters that can be updated independently of one another in an M-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Mixing,
    Short,
    Count,
    Cont,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::Mixing, Block::Short, Block::Count, Block::Cont];

    pub fn of(target: Target) -> Block {
        match target {
            Target::Pi => Block::Mixing,
            Target::MuS | Target::SigmaS => Block::Short,
            Target::P | Target::R | Target::Lambda | Target::Nu | Target::N => Block::Count,
            Target::M | Target::Sigma => Block::Cont,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SlotKind {
    Scalar(Target),
    Mapped(Target),
    Weights,
}

#[derive(Debug, Clone)]
struct Slot {
    kind: SlotKind,
    offset: usize,
    len: usize,
}

/// Floor applied to Multinomial weights before taking logs.
const WEIGHT_FLOOR: f64 = 1e-300;
const RATIO_CLAMP: f64 = 700.0;

#[derive(Debug, Clone)]
pub struct Layout {
    slots: Vec<Slot>,
    dim: usize,
}

impl Layout {
    /// Free parameters of `model` in the given blocks, excluding `fixed`.
    pub fn new(model: &MixtureModel, fixed: &[Target], blocks: &[Block]) -> Layout {
        let mut slots = Vec::new();
        let mut dim = 0;
        for t in model.targets() {
            if t == Target::N || fixed.contains(&t) || !blocks.contains(&Block::of(t)) {
                continue;
            }
            let (kind, len) = match model.map_for(t) {
                Some(map) => (SlotKind::Mapped(t), map.beta.len()),
                None => (SlotKind::Scalar(t), 1),
            };
            slots.push(Slot { kind, offset: dim, len });
            dim += len;
        }
        if let CountDistSpec::Multinomial { weights } = &model.long.count {
            if blocks.contains(&Block::Count) && weights.len() > 1 {
                let len = weights.len() - 1;
                slots.push(Slot { kind: SlotKind::Weights, offset: dim, len });
                dim += len;
            }
        }
        Layout { slots, dim }
    }

    /// Every free parameter.
    pub fn full(model: &MixtureModel, fixed: &[Target]) -> Layout {
        Self::new(model, fixed, &Block::ALL)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.dim == 0
    }

    /// Whether the layout only holds scalar (covariate-free) parameters.
    pub fn all_scalar(&self) -> bool {
        self.slots.iter().all(|s| !matches!(s.kind, SlotKind::Mapped(_)))
    }

    pub fn pack(&self, model: &MixtureModel) -> Vec<f64> {
        let mut theta = vec![0.0; self.dim];
        for s in &self.slots {
            match s.kind {
                SlotKind::Scalar(t) => {
                    let v = model.get(t).expect("layout built for this model");
                    theta[s.offset] = t.default_link().inverse(v);
                }
                SlotKind::Mapped(t) => {
                    let map = model.map_for(t).expect("layout built for this model");
                    theta[s.offset..s.offset + s.len].copy_from_slice(&map.beta);
                }
                SlotKind::Weights => {
                    if let CountDistSpec::Multinomial { weights } = &model.long.count {
                        let w0 = weights[0].max(WEIGHT_FLOOR).ln();
                        for j in 0..s.len {
                            theta[s.offset + j] = weights[j + 1].max(WEIGHT_FLOOR).ln() - w0;
                        }
                    }
                }
            }
        }
        theta
    }

    /// Copy of `template` with the layout's parameters taken from `theta`.
    pub fn unpack(&self, theta: &[f64], template: &MixtureModel) -> Result<MixtureModel> {
        if theta.len() != self.dim {
            return Err(LosError::Shape(format!(
                "parameter vector has length {}, layout needs {}",
                theta.len(),
                self.dim
            )));
        }
        let mut m = template.clone();
        for s in &self.slots {
            let part = &theta[s.offset..s.offset + s.len];
            match s.kind {
                SlotKind::Scalar(t) => m.set(t, t.default_link().apply(part[0]))?,
                SlotKind::Mapped(t) => {
                    let map = m
                        .parameter_maps
                        .iter_mut()
                        .find(|p| p.target == t)
                        .expect("layout built for this model");
                    map.beta.copy_from_slice(part);
                }
                SlotKind::Weights => {
                    let ratios: Vec<f64> = std::iter::once(0.0)
                        .chain(part.iter().map(|v| v.clamp(-RATIO_CLAMP, RATIO_CLAMP)))
                        .collect();
                    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = ratios.iter().map(|r| (r - max).exp()).collect();
                    let total: f64 = e.iter().sum();
                    m.long.count = CountDistSpec::Multinomial {
                        weights: e.iter().map(|v| v / total).collect(),
                    };
                }
            }
        }
        m.validate()?;
        Ok(m)
    }

    /// Human-readable name of each coordinate.
    pub fn labels(&self, model: &MixtureModel) -> Vec<String> {
        let mut out = vec![String::new(); self.dim];
        for s in &self.slots {
            match s.kind {
                SlotKind::Scalar(t) => out[s.offset] = t.name().to_string(),
                SlotKind::Mapped(t) => {
                    let map = model.map_for(t).expect("layout built for this model");
                    for (j, c) in map.columns.iter().enumerate() {
                        out[s.offset + j] = format!("{}[{c}]", t.name());
                    }
                }
                SlotKind::Weights => {
                    for j in 0..s.len {
                        out[s.offset + j] = format!("weight[{}]", j + 1);
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convolution::ConvolutiveLongStay;
    use crate::covariates::{Link, ParameterMap, INTERCEPT};
    use crate::dist::ContDistSpec;

    fn model(count: CountDistSpec) -> MixtureModel {
        MixtureModel::new(
            0.3,
            ContDistSpec::lognormal(-1.0, 0.5).unwrap(),
            ConvolutiveLongStay::new(count, ContDistSpec::normal(4.0, 1.0).unwrap()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn pack_unpack_round_trip() {
        let m = model(CountDistSpec::negbin(2.0, 0.4).unwrap());
        let l = Layout::full(&m, &[]);
        assert_eq!(l.dim(), 7);
        let back = l.unpack(&l.pack(&m), &m).unwrap();
        for t in m.targets() {
            assert!((back.get(t).unwrap() - m.get(t).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn fixed_and_blocks() {
        let m = model(CountDistSpec::binomial(5, 0.3).unwrap());
        let l = Layout::full(&m, &[Target::Pi]);
        assert_eq!(l.labels(&m), vec!["mu_S", "sigma_S", "p", "m", "sigma"]);
        let c = Layout::new(&m, &[], &[Block::Count]);
        assert_eq!(c.dim(), 1);
    }

    #[test]
    fn multinomial_weights_softmax() {
        let m = model(CountDistSpec::multinomial(vec![0.2, 0.5, 0.3]).unwrap());
        let l = Layout::new(&m, &[], &[Block::Count]);
        assert_eq!(l.dim(), 2);
        let back = l.unpack(&l.pack(&m), &m).unwrap();
        match back.long.count {
            CountDistSpec::Multinomial { weights } => {
                for (a, b) in weights.iter().zip([0.2, 0.5, 0.3]) {
                    assert!((a - b).abs() < 1e-14);
                }
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn mapped_parameters_use_coefficients() {
        let map = ParameterMap::new(Target::M, vec![INTERCEPT.into(), "x".into()], vec![4.0, 1.5], Link::Identity)
            .unwrap();
        let m = model(CountDistSpec::negbin(2.0, 0.4).unwrap()).with_maps(vec![map]).unwrap();
        let l = Layout::new(&m, &[], &[Block::Cont]);
        assert_eq!(l.pack(&m), vec![4.0, 1.5, 0.0]);
        assert!(!l.all_scalar());
        let out = l.unpack(&[3.0, -1.0, 0.5f64.ln()], &m).unwrap();
        assert_eq!(out.map_for(Target::M).unwrap().beta, vec![3.0, -1.0]);
        assert!((out.long.cont.sigma - 0.5).abs() < 1e-15);
        // Extreme coordinates still give a valid model.
        assert!(l.unpack(&[1e9, -1e9, -1e9], &m).is_ok());
    }
}
