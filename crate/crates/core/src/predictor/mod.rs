//! LSTM encoder-decoder predictors, one per channel-scale stream.

mod lstm;
mod model;
mod train;
mod weights;

pub use lstm::LstmCell;
pub use model::{argmax, EdModel, EdShape, Workspace, PROB_FLOOR};
pub use train::{
    compute_loss, objective, objective_and_gradient, pair_seed, train, train_bank, SequenceSet, TrainConfig,
    TrainOutcome,
};

#[cfg(test)]
mod tests;
