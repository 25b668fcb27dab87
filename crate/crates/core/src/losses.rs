//! Training losses: caption loss components (segment gIoU, confidence focal
//! loss, event-count and caption cross-entropies), the masked prior loss,
//! length regularization, variance loss, the weighted total, and the
//! fine-tune MSE.
//!
//! Every loss exists in two forms: a pure evaluation used for oracles and
//! reports, and a tape version used by training. The two are cross-checked
//! against each other in tests, and the tape gradients are checked against
//! central finite differences.

use crate::error::{Error, Result};
use crate::graph::{sigmoid_scalar, softplus_scalar, Graph, Var};
use crate::tensor::Matrix;
use crate::types::{CaptionerOutput, DenseCaptionAnnotation};
use crate::vocab::{Vocabulary, EOS, PAD};

pub const FOCAL_ALPHA: f64 = 0.25;
pub const FOCAL_GAMMA: f64 = 2.0;

/// Loss weights.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub beta_giou: f64,
    pub beta_cls: f64,
    pub beta_ec: f64,
    pub beta_pred: f64,
    pub beta_cap: f64,
    pub beta_prior: f64,
    pub beta_len: f64,
    pub beta_var: f64,
    /// Target mean score for the length regularizer.
    pub target_length: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            beta_giou: 4.0,
            beta_cls: 2.0,
            beta_ec: 0.5,
            beta_pred: 0.5,
            beta_cap: 2.0,
            beta_prior: 10.0,
            beta_len: 0.5,
            beta_var: 0.5,
            target_length: 0.3,
        }
    }
}

impl LossWeights {
    pub fn validate(self) -> Result<Self> {
        let named = [
            ("beta_giou", self.beta_giou),
            ("beta_cls", self.beta_cls),
            ("beta_ec", self.beta_ec),
            ("beta_pred", self.beta_pred),
            ("beta_cap", self.beta_cap),
            ("beta_prior", self.beta_prior),
            ("beta_len", self.beta_len),
            ("beta_var", self.beta_var),
        ];
        for (name, v) in named {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.target_length > 0.0 && self.target_length < 1.0) {
            return Err(Error::Config(format!(
                "target_length must be in (0,1), got {}",
                self.target_length
            )));
        }
        Ok(self)
    }
}

// ---------------------------------------------------------------------------
// pure losses
// ---------------------------------------------------------------------------

/// 1-D generalized IoU of two segments, in [-1, 1].
pub fn giou_1d(a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    if !(a.0 < a.1) || !(b.0 < b.1) {
        return Err(Error::Shape(format!(
            "degenerate segment: [{}, {}] vs [{}, {}]",
            a.0, a.1, b.0, b.1
        )));
    }
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    let hull = a.1.max(b.1) - a.0.min(b.0);
    Ok(inter / union - (hull - union) / hull)
}

/// Focal loss over proposal confidence logits; matched proposals are the
/// positives. Mean over proposals, alpha=0.25, gamma=2.
pub fn focal_loss(confidence_logits: &[f64], matched: &[bool]) -> f64 {
    assert_eq!(confidence_logits.len(), matched.len());
    if confidence_logits.is_empty() {
        return 0.0;
    }
    let total: f64 = confidence_logits
        .iter()
        .zip(matched)
        .map(|(&x, &pos)| {
            let p = sigmoid_scalar(x);
            if pos {
                FOCAL_ALPHA * (1.0 - p).powf(FOCAL_GAMMA) * softplus_scalar(-x)
            } else {
                (1.0 - FOCAL_ALPHA) * p.powf(FOCAL_GAMMA) * softplus_scalar(x)
            }
        })
        .sum();
    total / confidence_logits.len() as f64
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&v| v - lse).collect()
}

/// Cross-entropy of the event-count class; the ground-truth count is clamped
/// to the maximum class.
pub fn event_count_loss(count_logits: &[f64], gt_count: usize) -> f64 {
    let class = gt_count.min(count_logits.len() - 1);
    -log_softmax(count_logits)[class]
}

/// Builds the training target for a caption: tokens, then EOS, padded (or
/// truncated) to `max_len` with PAD.
pub fn caption_target(tokens: &[String], vocab: &Vocabulary, max_len: usize) -> Vec<usize> {
    let mut ids = vocab.encode(tokens);
    ids.truncate(max_len.saturating_sub(1));
    ids.push(EOS);
    ids.resize(max_len, PAD);
    ids
}

/// Mean token cross-entropy over non-PAD target positions, teacher-forced.
/// An all-PAD target is defined as 0.
pub fn caption_token_loss_from_ids(caption_logits: &Matrix, target_ids: &[usize]) -> f64 {
    assert_eq!(caption_logits.rows(), target_ids.len());
    let mut total = 0.0;
    let mut count = 0usize;
    for (step, &id) in target_ids.iter().enumerate() {
        if id == PAD {
            continue;
        }
        total -= log_softmax(caption_logits.row(step))[id];
        count += 1;
    }
    if count == 0 {
        log::warn!("caption target is all PAD; token loss defined as 0");
        return 0.0;
    }
    total / count as f64
}

/// String-token wrapper: out-of-vocabulary tokens map to UNK, never error.
pub fn caption_token_loss(
    caption_logits: &Matrix,
    gt_tokens: &[String],
    vocab: &Vocabulary,
) -> f64 {
    let target = caption_target(gt_tokens, vocab, caption_logits.rows());
    caption_token_loss_from_ids(caption_logits, &target)
}

/// Weighted caption loss: segment gIoU (as 1 - gIoU, averaged over matched
/// pairs), confidence focal loss, event-count cross-entropy and caption
/// cross-entropy.
pub fn caption_loss(
    pred: &CaptionerOutput,
    gt: &DenseCaptionAnnotation,
    assignment: &[(usize, usize)],
    vocab: &Vocabulary,
    w: &LossWeights,
) -> Result<f64> {
    let n = pred.proposals.len();
    let mut matched = vec![false; n];
    let mut giou_total = 0.0;
    let mut cap_total = 0.0;
    for &(event_idx, prop_idx) in assignment {
        let ev = &gt.events[event_idx];
        let p = &pred.proposals[prop_idx];
        matched[prop_idx] = true;
        let gt_seg = (ev.start_sec / gt.duration_sec, ev.end_sec / gt.duration_sec);
        giou_total += 1.0 - giou_1d((p.start(), p.end()), gt_seg)?;
        cap_total += caption_token_loss(&p.caption_logits, &ev.sentence, vocab);
    }
    let m = assignment.len();
    let l_giou = if m > 0 { giou_total / m as f64 } else { 0.0 };
    let l_pred = if m > 0 { cap_total / m as f64 } else { 0.0 };

    let logits: Vec<f64> = pred.proposals.iter().map(|p| p.confidence_logit).collect();
    let l_cls = focal_loss(&logits, &matched);
    let l_ec = event_count_loss(
        &pred.event_count_logits,
        gt.events.len().min(pred.event_count_logits.len() - 1),
    );
    Ok(w.beta_giou * l_giou + w.beta_cls * l_cls + w.beta_ec * l_ec + w.beta_pred * l_pred)
}

/// MSE between the prior-masked scores and the prior, over all positions.
/// Positions where the prior is 0 contribute exactly 0.
pub fn prior_loss(scores: &[f64], prior: &[f64]) -> Result<f64> {
    if scores.len() != prior.len() {
        return Err(Error::Shape(format!(
            "scores length {} != prior length {}",
            scores.len(),
            prior.len()
        )));
    }
    let t = scores.len() as f64;
    Ok(scores
        .iter()
        .zip(prior)
        .map(|(&s, &p)| {
            let d = p * s - p;
            d * d
        })
        .sum::<f64>()
        / t)
}

/// Squared gap between the mean score and the target length.
pub fn length_loss(scores: &[f64], target: f64) -> f64 {
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    (mean - target) * (mean - target)
}

/// 0.25 minus the population variance; minimized when the scores are
/// maximally spread (variance 0.25 for values in [0,1]).
pub fn variance_loss(scores: &[f64]) -> f64 {
    let t = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / t;
    let var = scores.iter().map(|&s| (s - mean) * (s - mean)).sum::<f64>() / t;
    0.25 - var
}

/// Per-video loss components in report form.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossComponents {
    pub caption: f64,
    pub prior: f64,
    pub length: f64,
    pub variance: f64,
}

/// Weighted sum of the pre-training loss components.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> f64 {
    w.beta_cap * c.caption + w.beta_prior * c.prior + w.beta_len * c.length + w.beta_var * c.variance
}

/// Plain MSE against ground-truth scores already rescaled to [0,1].
pub fn finetune_mse(scores: &[f64], gt: &[f64]) -> Result<f64> {
    if scores.len() != gt.len() {
        return Err(Error::Shape(format!(
            "scores length {} != ground truth length {}",
            scores.len(),
            gt.len()
        )));
    }
    let t = scores.len() as f64;
    Ok(scores
        .iter()
        .zip(gt)
        .map(|(&s, &g)| (s - g) * (s - g))
        .sum::<f64>()
        / t)
}

/// Min-max rescales annotator scores to [0,1]; a constant vector maps to 0.5.
pub fn rescale_unit(scores: &[f32]) -> Vec<f64> {
    let lo = scores.iter().cloned().fold(f32::INFINITY, f32::min) as f64;
    let hi = scores.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    if hi - lo < 1e-12 {
        return vec![0.5; scores.len()];
    }
    scores
        .iter()
        .map(|&s| (s as f64 - lo) / (hi - lo))
        .collect()
}

// ---------------------------------------------------------------------------
// tape losses
// ---------------------------------------------------------------------------

/// Broadcast a 1x1 scalar to a column of length `rows`.
fn broadcast_scalar(g: &mut Graph, s: Var, rows: usize) -> Var {
    let ones = g.constant(Matrix::ones(rows, 1));
    g.matmul(ones, s)
}

pub fn tape_prior_loss(g: &mut Graph, scores: Var, prior: &[f64]) -> Var {
    assert_eq!(scores.cols, 1);
    assert_eq!(scores.rows, prior.len());
    let p = g.constant(Matrix::from_fn(prior.len(), 1, |r, _| prior[r]));
    let masked = g.mul(p, scores);
    let d = g.sub(masked, p);
    let sq = g.mul(d, d);
    g.mean_all(sq)
}

pub fn tape_length_loss(g: &mut Graph, scores: Var, target: f64) -> Var {
    let mean = g.mean_all(scores);
    let d = g.add_scalar(mean, -target);
    g.mul(d, d)
}

pub fn tape_variance_loss(g: &mut Graph, scores: Var) -> Var {
    let mean = g.mean_all(scores);
    let mean_bc = broadcast_scalar(g, mean, scores.rows);
    let d = g.sub(scores, mean_bc);
    let sq = g.mul(d, d);
    let var = g.mean_all(sq);
    let neg = g.scale(var, -1.0);
    g.add_scalar(neg, 0.25)
}

pub fn tape_focal_loss(g: &mut Graph, confidence_logits: Var, matched: &[bool]) -> Var {
    assert_eq!(confidence_logits.cols, 1);
    assert_eq!(confidence_logits.rows, matched.len());
    let n = matched.len();
    let mask = g.constant(Matrix::from_fn(n, 1, |r, _| if matched[r] { 1.0 } else { 0.0 }));
    let inv_mask = g.constant(Matrix::from_fn(n, 1, |r, _| if matched[r] { 0.0 } else { 1.0 }));

    let p = g.sigmoid(confidence_logits);
    let one = g.constant(Matrix::ones(n, 1));
    let one_minus_p = g.sub(one, p);
    let neg_x = g.scale(confidence_logits, -1.0);
    let sp_neg = g.softplus(neg_x); // -ln p
    let sp_pos = g.softplus(confidence_logits); // -ln (1-p)

    let omp_sq = g.mul(one_minus_p, one_minus_p);
    let pos = g.mul(omp_sq, sp_neg);
    let pos = g.scale(pos, FOCAL_ALPHA);
    let pos = g.mul(pos, mask);

    let p_sq = g.mul(p, p);
    let neg = g.mul(p_sq, sp_pos);
    let neg = g.scale(neg, 1.0 - FOCAL_ALPHA);
    let neg = g.mul(neg, inv_mask);

    let both = g.add(pos, neg);
    g.mean_all(both)
}

pub fn tape_cross_entropy(g: &mut Graph, logits_row: Var, class: usize) -> Var {
    assert_eq!(logits_row.rows, 1);
    assert!(class < logits_row.cols);
    let ls = g.log_softmax_rows(logits_row);
    let onehot = g.constant(Matrix::from_fn(1, logits_row.cols, |_, c| {
        if c == class {
            1.0
        } else {
            0.0
        }
    }));
    let picked = g.mul(ls, onehot);
    let s = g.sum_all(picked);
    g.scale(s, -1.0)
}

/// Mean token cross-entropy over non-PAD positions of a teacher-forced
/// caption; 0 when the target is all PAD.
pub fn tape_caption_token_loss(g: &mut Graph, caption_logits: Var, target_ids: &[usize]) -> Var {
    assert_eq!(caption_logits.rows, target_ids.len());
    let count = target_ids.iter().filter(|&&id| id != PAD).count();
    if count == 0 {
        return g.scalar_const(0.0);
    }
    let ls = g.log_softmax_rows(caption_logits);
    let pick = g.constant(Matrix::from_fn(
        caption_logits.rows,
        caption_logits.cols,
        |r, c| {
            if target_ids[r] != PAD && c == target_ids[r] {
                1.0
            } else {
                0.0
            }
        },
    ));
    let picked = g.mul(ls, pick);
    let s = g.sum_all(picked);
    g.scale(s, -1.0 / count as f64)
}

/// Mean (1 - gIoU) between predicted (center, width) rows and constant
/// ground-truth (start, end) rows.
pub fn tape_giou_loss(g: &mut Graph, pred_center_width: Var, gt_segments: &[(f64, f64)]) -> Var {
    assert_eq!(pred_center_width.cols, 2);
    assert_eq!(pred_center_width.rows, gt_segments.len());
    let m = gt_segments.len();
    let c = g.slice_cols(pred_center_width, 0, 1);
    let w = g.slice_cols(pred_center_width, 1, 2);
    let half_w = g.scale(w, 0.5);
    let s1 = g.sub(c, half_w);
    let e1 = g.add(c, half_w);
    let s2 = g.constant(Matrix::from_fn(m, 1, |r, _| gt_segments[r].0));
    let e2 = g.constant(Matrix::from_fn(m, 1, |r, _| gt_segments[r].1));

    let inter_hi = g.min_elem(e1, e2);
    let inter_lo = g.max_elem(s1, s2);
    let inter_raw = g.sub(inter_hi, inter_lo);
    let inter = g.relu(inter_raw);

    let len1 = g.sub(e1, s1);
    let len2 = g.sub(e2, s2);
    let sum_len = g.add(len1, len2);
    let union = g.sub(sum_len, inter);

    let hull_hi = g.max_elem(e1, e2);
    let hull_lo = g.min_elem(s1, s2);
    let hull = g.sub(hull_hi, hull_lo);

    let iou = g.div(inter, union);
    let gap = g.sub(hull, union);
    let penalty = g.div(gap, hull);
    let giou = g.sub(iou, penalty);
    let neg = g.scale(giou, -1.0);
    let one_minus = g.add_scalar(neg, 1.0);
    g.mean_all(one_minus)
}
