//! Shared domain types. Construction is free-form; [`Validate::validate`]
//! checks every invariant and returns the instance unchanged, so validated
//! values can be treated as immutable and shared across threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Invariant checking, uniform across the domain types.
pub trait Validate: Sized {
    fn validate(self) -> Result<Self>;
}

fn check_video_id(type_name: &'static str, id: &str) -> Result<()> {
    if id.is_empty() {
        return Err(Error::validation(type_name, "video_id", "must be non-empty"));
    }
    if !id
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        || id.starts_with('.')
    {
        return Err(Error::validation(
            type_name,
            "video_id",
            format!("{id:?} contains characters unsafe for file names"),
        ));
    }
    Ok(())
}

/// Per-video frame features from a frozen visual encoder, stored row-major
/// as T rows of D 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub video_id: String,
    pub num_frames: usize,
    pub dim: usize,
    pub data: Vec<f32>,
    pub fps: f64,
    pub duration_sec: f64,
}

impl FrameFeatures {
    pub fn new(
        video_id: impl Into<String>,
        num_frames: usize,
        dim: usize,
        data: Vec<f32>,
        fps: f64,
        duration_sec: f64,
    ) -> Self {
        FrameFeatures {
            video_id: video_id.into(),
            num_frames,
            dim,
            data,
            fps,
            duration_sec,
        }
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    /// Feature matrix lifted to f64 for computation.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.num_frames, self.dim, |r, c| {
            self.data[r * self.dim + c] as f64
        })
    }
}

impl Validate for FrameFeatures {
    fn validate(self) -> Result<Self> {
        const TY: &str = "FrameFeatures";
        check_video_id(TY, &self.video_id)?;
        if self.num_frames < 1 {
            return Err(Error::validation(TY, "num_frames", "T must be >= 1"));
        }
        if self.dim < 1 {
            return Err(Error::validation(TY, "dim", "D must be >= 1"));
        }
        if self.data.len() != self.num_frames * self.dim {
            return Err(Error::validation(
                TY,
                "features",
                format!(
                    "expected {}x{}={} values, got {}",
                    self.num_frames,
                    self.dim,
                    self.num_frames * self.dim,
                    self.data.len()
                ),
            ));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(TY, "features", "contains NaN or Inf"));
        }
        if !(self.fps > 0.0) {
            return Err(Error::validation(TY, "fps", "must be > 0"));
        }
        if !(self.duration_sec > 0.0) {
            return Err(Error::validation(TY, "duration_sec", "must be > 0"));
        }
        let expected = self.duration_sec * self.fps;
        if (self.num_frames as f64 - expected).abs() > 1.0 + 1e-9 {
            return Err(Error::validation(
                TY,
                "num_frames",
                format!(
                    "T={} inconsistent with duration*fps={:.3} (tolerance: 1 frame)",
                    self.num_frames, expected
                ),
            ));
        }
        Ok(self)
    }
}

/// One (start, end, sentence) caption event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionEvent {
    pub start_sec: f64,
    pub end_sec: f64,
    pub sentence: Vec<String>,
}

/// Dense caption annotation for one video: the weak supervision signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseCaptionAnnotation {
    pub video_id: String,
    pub events: Vec<CaptionEvent>,
    pub duration_sec: f64,
}

impl Validate for DenseCaptionAnnotation {
    fn validate(self) -> Result<Self> {
        const TY: &str = "DenseCaptionAnnotation";
        check_video_id(TY, &self.video_id)?;
        if self.events.is_empty() {
            return Err(Error::validation(
                TY,
                "events",
                format!("video {:?} has no caption events", self.video_id),
            ));
        }
        for (i, ev) in self.events.iter().enumerate() {
            if !(0.0 <= ev.start_sec && ev.start_sec < ev.end_sec && ev.end_sec <= self.duration_sec)
            {
                return Err(Error::validation(
                    TY,
                    "events",
                    format!(
                        "event {i} of {:?}: need 0 <= start < end <= duration, got [{}, {}] with duration {}",
                        self.video_id, ev.start_sec, ev.end_sec, self.duration_sec
                    ),
                ));
            }
            if ev.sentence.is_empty() {
                return Err(Error::validation(
                    TY,
                    "events",
                    format!("event {i} of {:?} has an empty sentence", self.video_id),
                ));
            }
        }
        Ok(self)
    }
}

/// Frame-wise summary scores in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryScores {
    pub video_id: String,
    pub scores: Vec<f32>,
}

impl SummaryScores {
    pub fn to_f64(&self) -> Vec<f64> {
        self.scores.iter().map(|&s| s as f64).collect()
    }
}

impl Validate for SummaryScores {
    fn validate(self) -> Result<Self> {
        const TY: &str = "SummaryScores";
        check_video_id(TY, &self.video_id)?;
        if self.scores.is_empty() {
            return Err(Error::validation(TY, "scores", "must be non-empty"));
        }
        if let Some(bad) = self
            .scores
            .iter()
            .find(|s| !s.is_finite() || **s < 0.0 || **s > 1.0)
        {
            return Err(Error::validation(
                TY,
                "scores",
                format!("scores out of [0,1]: found {bad}"),
            ));
        }
        Ok(self)
    }
}

/// Binary per-frame prior with mask semantics: 1 marks frames that should be
/// scored as summary-worthy, 0 means unconstrained (not excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct ClipPrior {
    pub video_id: String,
    pub prior: Vec<f32>,
}

impl Validate for ClipPrior {
    fn validate(self) -> Result<Self> {
        const TY: &str = "ClipPrior";
        check_video_id(TY, &self.video_id)?;
        if self.prior.is_empty() {
            return Err(Error::validation(TY, "prior", "must be non-empty"));
        }
        if let Some(bad) = self.prior.iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(Error::validation(
                TY,
                "prior",
                format!("prior not binary: found {bad}"),
            ));
        }
        Ok(self)
    }
}

/// Multi-annotator ground truth: per-annotator frame scores, shot
/// boundaries tiling [0, T), and the annotator consensus.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthSummary {
    pub video_id: String,
    pub annotator_scores: Vec<Vec<f32>>,
    pub shot_boundaries: Vec<usize>,
    pub consensus_scores: Vec<f32>,
}

impl GroundTruthSummary {
    /// Builds the record computing the consensus as the per-frame mean over
    /// annotators.
    pub fn with_consensus(
        video_id: impl Into<String>,
        annotator_scores: Vec<Vec<f32>>,
        shot_boundaries: Vec<usize>,
    ) -> Self {
        let t = annotator_scores.first().map_or(0, Vec::len);
        let a = annotator_scores.len().max(1) as f64;
        let consensus = (0..t)
            .map(|i| {
                let sum: f64 = annotator_scores
                    .iter()
                    .map(|row| *row.get(i).unwrap_or(&0.0) as f64)
                    .sum();
                (sum / a) as f32
            })
            .collect();
        GroundTruthSummary {
            video_id: video_id.into(),
            annotator_scores,
            shot_boundaries,
            consensus_scores: consensus,
        }
    }

    pub fn num_frames(&self) -> usize {
        self.consensus_scores.len()
    }

    pub fn num_annotators(&self) -> usize {
        self.annotator_scores.len()
    }
}

impl Validate for GroundTruthSummary {
    fn validate(self) -> Result<Self> {
        const TY: &str = "GroundTruthSummary";
        check_video_id(TY, &self.video_id)?;
        if self.annotator_scores.is_empty() {
            return Err(Error::validation(TY, "annotator_scores", "need A >= 1"));
        }
        let t = self.consensus_scores.len();
        if t == 0 {
            return Err(Error::validation(TY, "consensus_scores", "must be non-empty"));
        }
        for (a, row) in self.annotator_scores.iter().enumerate() {
            if row.len() != t {
                return Err(Error::validation(
                    TY,
                    "annotator_scores",
                    format!("annotator {a} has {} frames, expected {t}", row.len()),
                ));
            }
        }
        if self.shot_boundaries.first() != Some(&0) || self.shot_boundaries.last() != Some(&t) {
            return Err(Error::validation(
                TY,
                "shot_boundaries",
                format!("must start at 0 and end at T={t}"),
            ));
        }
        if !self.shot_boundaries.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::validation(
                TY,
                "shot_boundaries",
                "must be strictly increasing",
            ));
        }
        let a = self.annotator_scores.len() as f64;
        for i in 0..t {
            let mean: f64 = self
                .annotator_scores
                .iter()
                .map(|row| row[i] as f64)
                .sum::<f64>()
                / a;
            if (mean - self.consensus_scores[i] as f64).abs() > 1e-6 {
                return Err(Error::validation(
                    TY,
                    "consensus_scores",
                    format!(
                        "frame {i}: consensus {} differs from annotator mean {mean}",
                        self.consensus_scores[i]
                    ),
                ));
            }
        }
        Ok(self)
    }
}

/// One event proposal: a normalized temporal segment, a confidence logit and
/// per-step caption logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub center: f64,
    pub width: f64,
    pub confidence_logit: f64,
    pub caption_logits: Matrix,
}

impl Proposal {
    pub fn start(&self) -> f64 {
        self.center - 0.5 * self.width
    }

    pub fn end(&self) -> f64 {
        self.center + 0.5 * self.width
    }
}

/// Raw captioner output: a fixed number of proposals plus event-count
/// logits over {0..N_max}.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionerOutput {
    pub proposals: Vec<Proposal>,
    pub event_count_logits: Vec<f64>,
}

impl Validate for CaptionerOutput {
    fn validate(self) -> Result<Self> {
        const TY: &str = "CaptionerOutput";
        if self.proposals.is_empty() {
            return Err(Error::validation(TY, "proposals", "must be non-empty"));
        }
        for (i, p) in self.proposals.iter().enumerate() {
            if !(p.width > 0.0) {
                return Err(Error::validation(
                    TY,
                    "proposals",
                    format!("proposal {i} has non-positive width {}", p.width),
                ));
            }
            if !p.center.is_finite() || !p.confidence_logit.is_finite() {
                return Err(Error::validation(
                    TY,
                    "proposals",
                    format!("proposal {i} has non-finite fields"),
                ));
            }
        }
        if self.event_count_logits.is_empty() {
            return Err(Error::validation(TY, "event_count_logits", "must be non-empty"));
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn features(t: usize, d: usize) -> FrameFeatures {
        FrameFeatures::new("v1", t, d, vec![0.5; t * d], 2.0, t as f64 / 2.0)
    }

    #[test]
    fn wellformed_features_pass() {
        let f = features(10, 512);
        let validated = f.clone().validate().unwrap();
        assert_eq!(validated, f);
    }

    #[test]
    fn score_out_of_range_rejected() {
        let s = SummaryScores {
            video_id: "v1".into(),
            scores: vec![0.5, 1.2],
        };
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("scores out of [0,1]"), "{err}");
    }

    #[test]
    fn prior_must_be_binary() {
        let p = ClipPrior {
            video_id: "v1".into(),
            prior: vec![0.0, 0.5],
        };
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("prior not binary"), "{err}");
    }

    #[test]
    fn frame_count_must_match_duration() {
        let mut f = features(10, 4);
        f.duration_sec = 100.0; // implies 200 frames at fps=2
        assert!(f.validate().is_err());
    }

    #[test]
    fn caption_events_checked() {
        let ann = DenseCaptionAnnotation {
            video_id: "v1".into(),
            events: vec![CaptionEvent {
                start_sec: 4.0,
                end_sec: 4.0,
                sentence: vec!["a".into()],
            }],
            duration_sec: 10.0,
        };
        assert!(ann.validate().is_err());
    }

    #[test]
    fn consensus_mismatch_rejected() {
        let mut gt = GroundTruthSummary::with_consensus(
            "v1",
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0, 2],
        );
        assert!(gt.clone().validate().is_ok());
        gt.consensus_scores[0] = 0.9;
        assert!(gt.validate().is_err());
    }

    #[test]
    fn unsafe_video_id_rejected() {
        let f = FrameFeatures::new("../evil", 2, 2, vec![0.0; 4], 2.0, 1.0);
        assert!(f.validate().is_err());
    }

    proptest! {
        // validate(validate(x)) == validate(x) on arbitrary score vectors
        #[test]
        fn validate_idempotent(scores in proptest::collection::vec(0.0f32..=1.0, 1..64)) {
            let s = SummaryScores { video_id: "v1".into(), scores };
            let once = s.clone().validate().unwrap();
            let twice = once.clone().validate().unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn out_of_range_always_rejected(bad in 1.0f32..10.0, at in 0usize..8) {
            let mut scores = vec![0.5f32; 8];
            scores[at] = 1.0 + bad;
            let s = SummaryScores { video_id: "v1".into(), scores };
            prop_assert!(s.validate().is_err());
        }
    }
}
