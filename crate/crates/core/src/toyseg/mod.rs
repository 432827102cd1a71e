//! Synthetic binary segmentation used to train the fusion decoder end to end.
//!
//! Images hold one to three bright ellipses or rectangles on a noisy
//! background. A fixed, untrained encoder turns each image into a feature
//! pyramid (value, horizontal gradient, vertical gradient, local mean, then
//! average pooling), so the fusion parameters are the only trainable part.

mod ablation;
mod config;
mod data;
mod pgm;
mod pyramid;
mod train;

pub use ablation::{order_cap_ablation, AblationReport, AblationRow};
pub use config::TrainConfig;
pub use data::{synth_dataset, Sample};
pub use pgm::{load_dataset, read_pgm, save_dataset, write_pgm};
pub use pyramid::{align_stages, make_pyramid, ENCODER_CHANNELS};
pub use train::{
    datasets, dice_score, evaluate, initial_params, loss_terms, pipeline_gradcheck,
    predict_logits, train, train_step, EpochMetrics, GradcheckReport, TrainReport, DICE_SMOOTH,
    GRADCHECK_TOLERANCE,
};
