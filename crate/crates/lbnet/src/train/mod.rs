//! Optimization: loss, learning-rate schedule, Adam, checkpoints, and the
//! step driver.

pub mod adam;
pub mod checkpoint;
pub mod loss;
pub mod run;
pub mod schedule;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use loss::l1_loss;
pub use run::{train, StepLog, TrainOptions};
pub use schedule::cosine_lr;
