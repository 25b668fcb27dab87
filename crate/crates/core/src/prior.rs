//! Image-text prior generation: per-frame object-presence scoring against a
//! fixed label set, threshold clipping, run-length filtering and binary
//! prior emission.
//!
//! For each label column independently, frames whose softmax similarity
//! exceeds `tau` form runs; a run qualifies when it is strictly longer than
//! `min_run_frames` and strictly shorter than `max_run_fraction * T`.
//! Qualifying runs from all labels are OR-merged into the prior.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Matrix;
use crate::types::{ClipPrior, Validate};

/// The 100-object label set shipped with the crate. Changing it changes the
/// priors, so its hash is recorded in run manifests.
pub const DEFAULT_LABELS: &str = include_str!("../assets/object_labels.txt");

pub const DEFAULT_PROMPT_TEMPLATE: &str = "An image of [object].";
pub const DEFAULT_TAU: f64 = 0.4;
pub const DEFAULT_MIN_RUN_FRAMES: usize = 10;
pub const DEFAULT_MAX_RUN_FRACTION: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct PriorConfig {
    pub labels: Vec<String>,
    pub prompt_template: String,
    pub tau: f64,
    pub min_run_frames: usize,
    pub max_run_fraction: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            labels: default_labels(),
            prompt_template: DEFAULT_PROMPT_TEMPLATE.to_string(),
            tau: DEFAULT_TAU,
            min_run_frames: DEFAULT_MIN_RUN_FRAMES,
            max_run_fraction: DEFAULT_MAX_RUN_FRACTION,
        }
    }
}

impl PriorConfig {
    pub fn validate(self) -> Result<Self> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!(
                "prior tau must be in (0,1), got {}",
                self.tau
            )));
        }
        if self.min_run_frames < 1 {
            return Err(Error::Config("min_run_frames must be >= 1".into()));
        }
        if !(self.max_run_fraction > 0.0 && self.max_run_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "max_run_fraction must be in (0,1], got {}",
                self.max_run_fraction
            )));
        }
        if self.labels.is_empty() {
            return Err(Error::Config("label set is empty".into()));
        }
        Ok(self)
    }

    /// Prompt sentences, one per label.
    pub fn prompts(&self) -> Vec<String> {
        self.labels
            .iter()
            .map(|l| self.prompt_template.replace("[object]", l))
            .collect()
    }

    /// SHA-256 of the label set, recorded in experiment manifests.
    pub fn label_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for l in &self.labels {
            hasher.update(l.as_bytes());
            hasher.update(b"\n");
        }
        hex_string(&hasher.finalize())
    }
}

pub fn default_labels() -> Vec<String> {
    DEFAULT_LABELS
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn load_labels(path: &std::path::Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    let labels: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if labels.is_empty() {
        return Err(Error::Config(format!(
            "label file {} is empty",
            path.display()
        )));
    }
    Ok(labels)
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Computes the T x K similarity matrix: rows of both inputs are
/// L2-normalized (copies), scaled dot products are softmaxed over the label
/// axis, so each row is the distribution of label confidences for one frame.
pub fn build_similarity(
    frame_feats: &Matrix,
    text_feats: &Matrix,
    logit_scale: f64,
) -> Result<Matrix> {
    if frame_feats.cols() != text_feats.cols() {
        return Err(Error::Shape(format!(
            "frame dim {} != text dim {}",
            frame_feats.cols(),
            text_feats.cols()
        )));
    }
    let f = normalize_rows(frame_feats, "frame")?;
    let t = normalize_rows(text_feats, "text")?;
    let logits = f.matmul(&t.transpose()).scale(logit_scale);

    let (rows, cols) = (logits.rows(), logits.cols());
    let mut m = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for c in 0..cols {
            let e = (row[c] - max).exp();
            m.set(r, c, e);
            z += e;
        }
        for c in 0..cols {
            m.set(r, c, m.at(r, c) / z);
        }
    }
    Ok(m)
}

fn normalize_rows(m: &Matrix, what: &str) -> Result<Matrix> {
    let mut out = m.clone();
    for r in 0..m.rows() {
        let norm: f64 = m.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::Shape(format!("{what} row {r} has zero norm")));
        }
        for c in 0..m.cols() {
            out.set(r, c, m.at(r, c) / norm);
        }
    }
    Ok(out)
}

/// Extracts the binary prior from a row-stochastic similarity matrix.
pub fn extract_prior(video_id: &str, m: &Matrix, cfg: &PriorConfig) -> Result<ClipPrior> {
    let t = m.rows();
    let max_len = cfg.max_run_fraction * t as f64;
    let mut prior = vec![0.0f32; t];
    for k in 0..m.cols() {
        let mut run_start = None;
        for i in 0..=t {
            let above = i < t && m.at(i, k) > cfg.tau;
            match (run_start, above) {
                (None, true) => run_start = Some(i),
                (Some(s), false) => {
                    let len = i - s;
                    if len > cfg.min_run_frames && (len as f64) < max_len {
                        for p in prior.iter_mut().take(i).skip(s) {
                            *p = 1.0;
                        }
                    }
                    run_start = None;
                }
                _ => {}
            }
        }
    }
    ClipPrior {
        video_id: video_id.to_string(),
        prior,
    }
    .validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force oracle: examine every (t, k), enumerate runs by rescanning.
    pub(crate) fn extract_prior_oracle(m: &Matrix, cfg: &PriorConfig) -> Vec<f32> {
        let t = m.rows();
        let mut prior = vec![0.0f32; t];
        for k in 0..m.cols() {
            for start in 0..t {
                // a run starts here iff above tau and previous is not
                if m.at(start, k) <= cfg.tau {
                    continue;
                }
                if start > 0 && m.at(start - 1, k) > cfg.tau {
                    continue;
                }
                let mut end = start;
                while end < t && m.at(end, k) > cfg.tau {
                    end += 1;
                }
                let len = end - start;
                if len > cfg.min_run_frames && (len as f64) < cfg.max_run_fraction * t as f64 {
                    for p in prior.iter_mut().take(end).skip(start) {
                        *p = 1.0;
                    }
                }
            }
        }
        prior
    }

    fn cfg() -> PriorConfig {
        PriorConfig::default()
    }

    fn single_column_run(t: usize, lo: usize, hi: usize) -> Matrix {
        // one label column with values above tau on [lo, hi)
        Matrix::from_fn(t, 1, |r, _| if r >= lo && r < hi { 0.9 } else { 0.1 })
    }

    #[test]
    fn qualifying_run_marked() {
        // T=40, run of 15 on frames 5..20: 10 < 15 < 20 = 0.5*40
        let m = single_column_run(40, 5, 20);
        let p = extract_prior("v", &m, &cfg()).unwrap();
        for (i, v) in p.prior.iter().enumerate() {
            let expect = if (5..20).contains(&i) { 1.0 } else { 0.0 };
            assert_eq!(*v, expect, "frame {i}");
        }
    }

    #[test]
    fn short_run_excluded() {
        let m = single_column_run(40, 5, 13); // length 8 <= 10
        let p = extract_prior("v", &m, &cfg()).unwrap();
        assert!(p.prior.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn long_run_excluded() {
        // T=20, run of 15 >= 0.5*20 = 10
        let m = single_column_run(20, 2, 17);
        let p = extract_prior("v", &m, &cfg()).unwrap();
        assert!(p.prior.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn runs_from_different_labels_or_merged() {
        // T=60: label 0 spikes on 5..20, label 1 on 12..26; both qualify
        let t = 60;
        let m = Matrix::from_fn(t, 2, |r, c| {
            let hot = match c {
                0 => (5..20).contains(&r),
                _ => (12..26).contains(&r),
            };
            if hot {
                0.8
            } else {
                0.05
            }
        });
        let p = extract_prior("v", &m, &cfg()).unwrap();
        for (i, v) in p.prior.iter().enumerate() {
            let expect = if (5..26).contains(&i) { 1.0 } else { 0.0 };
            assert_eq!(*v, expect, "frame {i}");
            assert_eq!(extract_prior_oracle(&m, &cfg())[i], expect);
        }
    }

    #[test]
    fn matches_oracle_on_random_matrices() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for case in 0..200 {
            let t = rng.gen_range(1..=50);
            let k = rng.gen_range(1..=10);
            let mut cfg = cfg();
            cfg.tau = rng.gen_range(0.05..0.95);
            cfg.min_run_frames = rng.gen_range(1..=12);
            cfg.max_run_fraction = rng.gen_range(0.1..=1.0);
            let m = Matrix::from_fn(t, k, |_, _| rng.gen::<f64>());
            let got = extract_prior("v", &m, &cfg).unwrap();
            let want = extract_prior_oracle(&m, &cfg);
            assert_eq!(got.prior, want, "case {case}: T={t} K={k}");
        }
    }

    #[test]
    fn similarity_rows_stochastic_and_saturating() {
        // frame 0 aligned with text 0 and orthogonal to text 1
        let frames = Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        let texts = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let m = build_similarity(&frames, &texts, 100.0).unwrap();
        assert!(m.at(0, 0) > 0.999);
        assert!(m.at(0, 1) < 1e-3);

        // equidistant frame: exactly symmetric
        let frames = Matrix::from_vec(1, 2, vec![1.0, 1.0]).unwrap();
        let m = build_similarity(&frames, &texts, 100.0).unwrap();
        assert!((m.at(0, 0) - 0.5).abs() < 1e-12);
        assert!((m.at(0, 1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn similarity_row_sums_one() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let frames = Matrix::from_fn(50, 16, |_, _| rng.gen_range(-1.0..1.0));
        let texts = Matrix::from_fn(100, 16, |_, _| rng.gen_range(-1.0..1.0));
        let m = build_similarity(&frames, &texts, 100.0).unwrap();
        for r in 0..m.rows() {
            let s: f64 = m.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-5, "row {r} sums to {s}");
        }
    }

    #[test]
    fn zero_norm_row_rejected() {
        let frames = Matrix::zeros(3, 4);
        let texts = Matrix::ones(2, 4);
        assert!(build_similarity(&frames, &texts, 100.0).is_err());
    }

    #[test]
    fn thresholded_mask_monotone_in_tau() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let m = Matrix::from_fn(30, 1, |_, _| rng.gen::<f64>());
        let above = |tau: f64| -> Vec<bool> { (0..30).map(|t| m.at(t, 0) > tau).collect() };
        let low = above(0.3);
        let high = above(0.6);
        for t in 0..30 {
            assert!(!high[t] || low[t], "mask at tau=0.6 must be subset of tau=0.3");
        }
    }

    #[test]
    fn default_label_set_has_100_entries() {
        let labels = default_labels();
        assert_eq!(labels.len(), 100);
        let cfg = PriorConfig::default();
        let prompts = cfg.prompts();
        assert_eq!(prompts.len(), 100);
        assert_eq!(prompts[0], format!("An image of {}.", labels[0]));
        assert_eq!(cfg.label_hash().len(), 64);
    }

    #[test]
    fn config_bounds_validated() {
        let mut c = PriorConfig::default();
        c.tau = 1.5;
        assert!(c.validate().is_err());
    }
}
