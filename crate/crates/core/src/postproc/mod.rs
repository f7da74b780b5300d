//! Layers and classifier applied after pooling.

pub mod fewshot;
pub mod logreg;
pub mod normalize;

pub use fewshot::{fewshot_eval, fewshot_split, FewShotConfig, FewShotRow};
pub use logreg::{
    predict, train_logreg, train_logreg_traced, LinearModel, Prediction, TrainConfig, TrainTrace,
    DEFAULT_LAMBDA,
};
pub use normalize::{
    l2_normalize, l2_normalize_backward, signed_sqrt, signed_sqrt_backward, NormalizedDescriptor,
    SIGNED_SQRT_EPS,
};
