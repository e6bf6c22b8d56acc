//! Edge-featured graph attention network for graph classification, with
//! hand-written reverse-mode gradients.

mod model;
mod tensor;
mod train;

pub use model::{
    attention, cross_entropy, first_layer_output, forward, graph_loss_and_grad, loss_and_grad,
    predict, saliency, softmax, ForwardCache, GatLayerParams, GnnError, GraphInput, LayerCache,
    Mode, ModelParams, SaliencyMap, CLASSES, DEFAULT_DROPOUT, DEFAULT_HIDDEN, DEFAULT_LEAKY_SLOPE,
};
pub use tensor::Mat;
pub use train::{
    cross_validate, evaluate, f1_score, kfold, ponzi_probability, prepare, train, CrossValidation,
    MetricSummary, Metrics, TrainConfig, TrainedModel,
};
