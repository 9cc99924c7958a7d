//! SGD training of the perceptron and of a two-layer network.

mod mlp;
mod perceptron;
mod record;

pub use mlp::{evaluate_net, sgd_step_net, train_two_layer, TwoLayerConfig, TwoLayerNet};
pub use perceptron::{
    sgd_step, train_perceptron_finite, train_perceptron_online, FiniteRun, PerceptronConfig,
    Reference,
};
pub use record::{curve_gaps, divergence_step, mean_std, Checkpoint, CurveGap, RunRecord};
