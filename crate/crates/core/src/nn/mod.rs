//! Feed-forward regressor from a feature window to the four LF parameters.

pub mod checkpoint;
pub mod gradcheck;
mod label;
mod model;
mod train;

pub use label::{predict_batch, predict_lf, LfLabel, Prediction, TA_RANGE, TE_MAX, TP_RANGE};
pub use model::{
    loss, sigmoid, BatchNorm, BnCache, Dense, ForwardCache, MlpModel, Mode, BN_EPS, BN_MOMENTUM,
    HIDDEN, OUTPUTS, STAT_NAMES, TENSOR_NAMES,
};
pub use train::{batch_inputs, batch_labels, train, train_model, TrainConfig, TrainReport};
