//! Weakly-supervised video summarization: a transformer summarizer trained
//! by generating dense video captions from score-weighted frame features,
//! with an image-text prior as auxiliary supervision, knapsack keyshot
//! selection and the multi-annotator F1 evaluation protocol.

pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod nn;
pub mod tensor;
pub mod types;
pub mod vocab;

pub use error::{Error, Result};
pub use tensor::Matrix;
pub use types::{
    CaptionEvent, CaptionerOutput, ClipPrior, DenseCaptionAnnotation, FrameFeatures,
    GroundTruthSummary, SummaryScores,
};
