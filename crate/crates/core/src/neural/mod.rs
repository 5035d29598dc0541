pub mod io;
pub mod layers;
pub mod predictor;
pub mod tensor;
pub mod train;

pub use io::{load_model, model_from_bytes, model_hash, model_to_bytes, save_model, ModelHash};
pub use predictor::{laplace_nll, laplace_nll_grad, BinPredictor, ModelKind, PredictorModel, Weights};
pub use train::{gradient_check, train, train_with_report, MaskSampling, TrainConfig, TrainReport};
