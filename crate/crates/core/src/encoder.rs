//! Bridge to the frozen vision-language encoder.
//!
//! The real encoder is an optional external dependency; everything in this
//! crate (tests, training loops, the CLI) runs against the deterministic
//! stub, which hashes each input together with a seed into a pseudo-random
//! unit vector. Precomputed feature rows pass straight through with shape
//! validation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Matrix;
use crate::types::{FrameFeatures, Validate};

/// Default temperature applied to cosine similarities.
pub const DEFAULT_LOGIT_SCALE: f64 = 100.0;

#[derive(Debug, Clone)]
enum Backend {
    /// Fully deterministic hash-based encoder.
    Stub { seed: u64 },
}

/// Handle to a frozen encoder. Read-only after construction; encode calls
/// may run concurrently.
#[derive(Debug, Clone)]
pub struct EncoderHandle {
    name: String,
    embed_dim: usize,
    logit_scale: f64,
    backend: Backend,
}

/// Frame input accepted by [`EncoderHandle::encode_frames`].
#[derive(Debug, Clone)]
pub enum FrameInput {
    /// Raw frame payloads (any bytes; the stub only hashes them).
    Raw(Vec<Vec<u8>>),
    /// Rows precomputed by an external encoder; passed through after
    /// dimension validation.
    Precomputed(Vec<Vec<f32>>),
}

impl EncoderHandle {
    pub fn stub(embed_dim: usize, seed: u64) -> Self {
        EncoderHandle {
            name: "stub".to_string(),
            embed_dim,
            logit_scale: DEFAULT_LOGIT_SCALE,
            backend: Backend::Stub { seed },
        }
    }

    /// Resolves a handle by name. Only the stub ships with the crate; real
    /// encoder weights would be an external download and are not bundled.
    pub fn from_name(name: &str, embed_dim: usize, seed: u64) -> Result<Self> {
        match name {
            "stub" => Ok(EncoderHandle::stub(embed_dim, seed)),
            other => Err(Error::Config(format!(
                "encoder {other:?} is not available in this build; \
                 use \"stub\" or precomputed features"
            ))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn logit_scale(&self) -> f64 {
        self.logit_scale
    }

    pub fn with_logit_scale(mut self, scale: f64) -> Self {
        self.logit_scale = scale;
        self
    }

    /// Hash (seed, content) into a deterministic unit vector.
    fn embed_bytes(&self, content: &[u8]) -> Vec<f32> {
        let Backend::Stub { seed } = self.backend;
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update((content.len() as u64).to_le_bytes());
        hasher.update(content);
        let digest = hasher.finalize();
        let mut rng_seed = [0u8; 32];
        rng_seed.copy_from_slice(&digest);
        let mut rng = ChaCha12Rng::from_seed(rng_seed);

        let mut v: Vec<f64> = (0..self.embed_dim)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-9 {
            // astronomically unlikely; keep the vector valid anyway
            v[0] = 1.0;
            return v.iter().map(|&x| x as f32).collect();
        }
        v.iter().map(|&x| (x / norm) as f32).collect()
    }

    /// Encodes a frame sequence into validated [`FrameFeatures`].
    pub fn encode_frames(
        &self,
        video_id: &str,
        fps: f64,
        duration_sec: f64,
        input: FrameInput,
    ) -> Result<FrameFeatures> {
        let rows: Vec<Vec<f32>> = match input {
            FrameInput::Raw(frames) => {
                if frames.is_empty() {
                    return Err(Error::Shape("empty frame sequence".into()));
                }
                frames.iter().map(|f| self.embed_bytes(f)).collect()
            }
            FrameInput::Precomputed(rows) => {
                if rows.is_empty() {
                    return Err(Error::Shape("empty frame sequence".into()));
                }
                for (t, row) in rows.iter().enumerate() {
                    if row.len() != self.embed_dim {
                        return Err(Error::Shape(format!(
                            "frame {t} has dimension {}, expected {}",
                            row.len(),
                            self.embed_dim
                        )));
                    }
                    if row.iter().all(|v| *v == 0.0) {
                        return Err(Error::Shape(format!(
                            "frame {t} is a zero row; features must be L2-normalizable"
                        )));
                    }
                }
                rows
            }
        };
        let t = rows.len();
        let mut data = Vec::with_capacity(t * self.embed_dim);
        for row in rows {
            data.extend_from_slice(&row);
        }
        FrameFeatures::new(video_id, t, self.embed_dim, data, fps, duration_sec).validate()
    }

    /// Encodes sentences into a K x D matrix, deterministic per handle.
    pub fn encode_texts(&self, sentences: &[String]) -> Result<Matrix> {
        if sentences.is_empty() {
            return Err(Error::Shape("empty sentence list".into()));
        }
        let mut rows = Vec::with_capacity(sentences.len());
        for (i, s) in sentences.iter().enumerate() {
            if s.trim().is_empty() {
                return Err(Error::Shape(format!("sentence {i} is empty")));
            }
            rows.push(
                self.embed_bytes(format!("text:{s}").as_bytes())
                    .into_iter()
                    .map(f64::from)
                    .collect::<Vec<_>>(),
            );
        }
        let k = rows.len();
        Matrix::from_vec(k, self.embed_dim, rows.concat())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames(n: usize) -> Vec<Vec<u8>> {
        (0..n).map(|i| format!("frame-{i}").into_bytes()).collect()
    }

    #[test]
    fn stub_frames_deterministic() {
        let h = EncoderHandle::stub(16, 7);
        let a = h
            .encode_frames("v1", 2.0, 2.5, FrameInput::Raw(frames(5)))
            .unwrap();
        let b = h
            .encode_frames("v1", 2.0, 2.5, FrameInput::Raw(frames(5)))
            .unwrap();
        assert_eq!(a.num_frames, 5);
        assert_eq!(a.dim, 16);
        for (x, y) in a.data.iter().zip(b.data.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn stub_depends_on_seed_and_content() {
        let h1 = EncoderHandle::stub(16, 7);
        let h2 = EncoderHandle::stub(16, 8);
        let a = h1
            .encode_frames("v1", 2.0, 1.0, FrameInput::Raw(frames(2)))
            .unwrap();
        let b = h2
            .encode_frames("v1", 2.0, 1.0, FrameInput::Raw(frames(2)))
            .unwrap();
        assert_ne!(a.data, b.data);
        // rows are unit-normalized
        let norm: f32 = a.row(0).iter().map(|v| v * v).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() < 1e-3);
    }

    #[test]
    fn precomputed_passthrough_and_dim_check() {
        let h = EncoderHandle::stub(512, 0);
        let rows = vec![vec![0.25f32; 512]; 10];
        let f = h
            .encode_frames("v1", 2.0, 5.0, FrameInput::Precomputed(rows.clone()))
            .unwrap();
        assert_eq!(f.row(3), &rows[3][..]);

        let bad = vec![vec![0.25f32; 256]; 10];
        assert!(h
            .encode_frames("v1", 2.0, 5.0, FrameInput::Precomputed(bad))
            .is_err());
    }

    #[test]
    fn text_encoding_deterministic_rows() {
        let h = EncoderHandle::stub(32, 3);
        let sents = vec!["a dog".to_string(), "a dog".to_string()];
        let m = h.encode_texts(&sents).unwrap();
        assert_eq!(m.rows(), 2);
        assert_eq!(m.row(0), m.row(1));
        assert!(h.encode_texts(&["".to_string()]).is_err());
    }

    #[test]
    fn hundred_prompts_shape() {
        let h = EncoderHandle::stub(512, 1);
        let sents: Vec<String> = (0..100).map(|i| format!("An image of thing {i}.")).collect();
        let m = h.encode_texts(&sents).unwrap();
        assert_eq!((m.rows(), m.cols()), (100, 512));
    }

    #[test]
    fn unknown_encoder_name_rejected() {
        assert!(EncoderHandle::from_name("vit-b16", 512, 0).is_err());
    }
}
