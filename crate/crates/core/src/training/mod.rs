//! Fine-tuning loop with reduce-on-plateau, early stopping and best-epoch restore.

mod config;
mod history;
mod loss;
mod schedule;
mod trainer;

pub use config::{Monitor, TrainingConfig};
pub use history::{EpochRecord, TrainingHistory};
pub use loss::{cross_entropy, cross_entropy_from_probs, cross_entropy_rows, scalar, PROB_EPS};
pub use schedule::{best_epoch, monitored, plateau_step, should_stop, stale_epochs};
pub use trainer::{check_finite_loss, train, NanDiagnostics, TrainOptions, TrainOutcome, ADAM_EPS};
