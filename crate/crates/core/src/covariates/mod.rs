//! Covariate-dependent parameters: `s(x) = h(β_s · x_s)`.

mod design;
mod link;
mod map;
mod schema;

pub use design::{DesignMatrix, INTERCEPT};
pub use link::{Domain, Link, Target};
pub use map::ParameterMap;
pub use schema::{
    FeatureSchema, FieldKind, FieldSpec, FieldValue, MissingPolicy, ParameterSpec, Transform,
    DEFAULT_TARGETS,
};
