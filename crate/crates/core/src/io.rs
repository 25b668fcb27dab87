//! Dataset ingestion and the bit-exact on-disk feature container.
//!
//! Container layout, shared by features, priors and score vectors:
//! 16-byte header (magic, version, rows, cols as little-endian u32), then
//! rows*cols little-endian f32 values, then a CRC32 over header+payload.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    CaptionEvent, DenseCaptionAnnotation, FrameFeatures, GroundTruthSummary, Validate,
};

pub const CONTAINER_MAGIC: u32 = 0x4643_5356; // "VSCF" in LE byte order
pub const CONTAINER_VERSION: u32 = 1;

pub const FEATURE_EXT: &str = "vfeat";
pub const PRIOR_EXT: &str = "prior";
pub const SCORE_EXT: &str = "score";

// ---------------------------------------------------------------------------
// binary container
// ---------------------------------------------------------------------------

pub fn write_container(path: &Path, rows: u32, cols: u32, data: &[f32]) -> Result<()> {
    if data.len() != rows as usize * cols as usize {
        return Err(Error::Shape(format!(
            "container payload length {} does not match {rows}x{cols}",
            data.len()
        )));
    }
    let mut bytes = Vec::with_capacity(16 + data.len() * 4 + 4);
    bytes.extend_from_slice(&CONTAINER_MAGIC.to_le_bytes());
    bytes.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    bytes.extend_from_slice(&rows.to_le_bytes());
    bytes.extend_from_slice(&cols.to_le_bytes());
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_container(path: &Path) -> Result<(u32, u32, Vec<f32>)> {
    let bytes = fs::read(path)?;
    let display = path.display().to_string();
    if bytes.len() < 20 {
        return Err(Error::Parse {
            path: display,
            message: format!("container too short ({} bytes)", bytes.len()),
        });
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let magic = u32_at(0);
    if magic != CONTAINER_MAGIC {
        return Err(Error::Parse {
            path: display,
            message: format!("bad magic {magic:#010x}"),
        });
    }
    let version = u32_at(4);
    if version != CONTAINER_VERSION {
        return Err(Error::Parse {
            path: display,
            message: format!("unsupported container version {version}"),
        });
    }
    let rows = u32_at(8);
    let cols = u32_at(12);
    let payload_len = rows as usize * cols as usize * 4;
    if bytes.len() != 16 + payload_len + 4 {
        return Err(Error::Parse {
            path: display,
            message: format!(
                "expected {} bytes for {rows}x{cols}, found {}",
                16 + payload_len + 4,
                bytes.len()
            ),
        });
    }
    let stored = u32::from_le_bytes(bytes[16 + payload_len..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..16 + payload_len]);
    if stored != computed {
        return Err(Error::Checksum {
            path: display,
            stored,
            computed,
        });
    }
    let data = bytes[16..16 + payload_len]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((rows, cols, data))
}

/// Writes a length-T column vector (priors, score vectors).
pub fn write_vector_container(path: &Path, data: &[f32]) -> Result<()> {
    write_container(path, data.len() as u32, 1, data)
}

pub fn read_vector_container(path: &Path) -> Result<Vec<f32>> {
    let (rows, cols, data) = read_container(path)?;
    if cols != 1 {
        return Err(Error::Parse {
            path: path.display().to_string(),
            message: format!("expected a column vector, found {rows}x{cols}"),
        });
    }
    Ok(data)
}

// ---------------------------------------------------------------------------
// feature store
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IndexEntry {
    pub num_frames: u32,
    pub dim: u32,
    pub fps: f64,
    pub duration_sec: f64,
    pub bytes: u64,
}

/// Directory of per-video feature containers plus a JSON index carrying the
/// metadata the container itself does not hold (fps, duration).
#[derive(Debug)]
pub struct FeatureStore {
    root: PathBuf,
    index: BTreeMap<String, IndexEntry>,
}

impl FeatureStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let index_path = root.join("index.json");
        let index = if index_path.exists() {
            serde_json::from_str(&fs::read_to_string(&index_path)?)?
        } else {
            BTreeMap::new()
        };
        Ok(FeatureStore { root, index })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    pub fn contains(&self, video_id: &str) -> bool {
        self.index.contains_key(video_id)
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn entry(&self, video_id: &str) -> Option<&IndexEntry> {
        self.index.get(video_id)
    }

    fn feature_path(&self, video_id: &str) -> PathBuf {
        self.root.join(format!("{video_id}.{FEATURE_EXT}"))
    }

    fn persist_index(&self) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.index)?;
        fs::write(self.root.join("index.json"), json)?;
        Ok(())
    }

    pub fn write_features(&mut self, features: &FrameFeatures) -> Result<()> {
        let f = features.clone().validate()?;
        let path = self.feature_path(&f.video_id);
        write_container(&path, f.num_frames as u32, f.dim as u32, &f.data)?;
        let bytes = fs::metadata(&path)?.len();
        self.index.insert(
            f.video_id.clone(),
            IndexEntry {
                num_frames: f.num_frames as u32,
                dim: f.dim as u32,
                fps: f.fps,
                duration_sec: f.duration_sec,
                bytes,
            },
        );
        self.persist_index()
    }

    pub fn read_features(&self, video_id: &str) -> Result<FrameFeatures> {
        let entry = self
            .index
            .get(video_id)
            .ok_or_else(|| Error::UnknownVideo(video_id.to_string()))?;
        let (rows, cols, data) = read_container(&self.feature_path(video_id))?;
        if rows != entry.num_frames || cols != entry.dim {
            return Err(Error::Parse {
                path: self.feature_path(video_id).display().to_string(),
                message: format!(
                    "container is {rows}x{cols} but index says {}x{}",
                    entry.num_frames, entry.dim
                ),
            });
        }
        FrameFeatures::new(
            video_id,
            rows as usize,
            cols as usize,
            data,
            entry.fps,
            entry.duration_sec,
        )
        .validate()
    }
}

// ---------------------------------------------------------------------------
// caption annotation ingestion
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct RawCaptionRecord {
    duration: f64,
    timestamps: Vec<[f64; 2]>,
    sentences: Vec<String>,
}

#[derive(Debug)]
pub struct CaptionIngest {
    pub annotations: Vec<DenseCaptionAnnotation>,
    /// Events dropped because end <= start.
    pub dropped_events: usize,
}

/// Parses a dense-caption JSON file: an object mapping video id to
/// `{duration, timestamps: [[s, e], ...], sentences: [...]}`.
///
/// Timestamps and sentences are zipped positionally; degenerate events
/// (end <= start) are dropped and counted. Output is sorted by video id.
pub fn ingest_anet_captions(path: &Path) -> Result<CaptionIngest> {
    let text = fs::read_to_string(path)?;
    let raw: BTreeMap<String, RawCaptionRecord> =
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;

    let mut annotations = Vec::with_capacity(raw.len());
    let mut dropped = 0usize;
    for (video_id, rec) in raw {
        if rec.timestamps.len() != rec.sentences.len() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                message: format!(
                    "video {video_id:?}: {} timestamps but {} sentences",
                    rec.timestamps.len(),
                    rec.sentences.len()
                ),
            });
        }
        let mut events = Vec::new();
        for (ts, sentence) in rec.timestamps.iter().zip(&rec.sentences) {
            if ts[1] <= ts[0] {
                dropped += 1;
                log::warn!(
                    "dropping degenerate event [{}, {}] of video {video_id:?}",
                    ts[0],
                    ts[1]
                );
                continue;
            }
            events.push(CaptionEvent {
                start_sec: ts[0],
                end_sec: ts[1],
                sentence: crate::vocab::tokenize(sentence),
            });
        }
        let ann = DenseCaptionAnnotation {
            video_id,
            events,
            duration_sec: rec.duration,
        }
        .validate()?;
        annotations.push(ann);
    }
    Ok(CaptionIngest {
        annotations,
        dropped_events: dropped,
    })
}

#[derive(Debug)]
pub struct SidecarIngest {
    pub annotations: Vec<DenseCaptionAnnotation>,
    /// Video ids present in the sidecar but absent from the known-id set.
    pub orphans: Vec<String>,
}

/// Ingests a caption sidecar (same schema as [`ingest_anet_captions`]) and
/// reconciles it against a known id set. Unknown ids are reported, not fatal.
pub fn ingest_caption_sidecar(path: &Path, known_ids: &BTreeSet<String>) -> Result<SidecarIngest> {
    let ingest = ingest_anet_captions(path)?;
    let mut annotations = Vec::new();
    let mut orphans = Vec::new();
    for ann in ingest.annotations {
        if known_ids.contains(&ann.video_id) {
            annotations.push(ann);
        } else {
            orphans.push(ann.video_id);
        }
    }
    Ok(SidecarIngest {
        annotations,
        orphans,
    })
}

/// Writes the reconciliation report as JSON lines.
pub fn write_reconciliation_report(path: &Path, orphans: &[String]) -> Result<()> {
    let mut out = String::new();
    for id in orphans {
        out.push_str(&serde_json::to_string(&serde_json::json!({
            "video_id": id,
            "reason": "missing_features",
        }))?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// summary dataset ingestion
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryLayout {
    Tvsum,
    Summe,
}

impl SummaryLayout {
    fn annotator_range(self) -> (usize, usize) {
        match self {
            SummaryLayout::Tvsum => (20, 20),
            SummaryLayout::Summe => (15, 18),
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawSummaryRecord {
    video_id: String,
    #[serde(default)]
    fps: Option<f64>,
    annotator_scores: Vec<Vec<f32>>,
    #[serde(default)]
    shot_boundaries: Option<Vec<usize>>,
}

#[derive(Debug)]
pub struct SummaryIngest {
    pub summaries: Vec<GroundTruthSummary>,
    /// Video ids whose shot boundaries had to be synthesized.
    pub synthetic_boundaries: Vec<String>,
}

const DEFAULT_FPS: f64 = 2.0;

/// Loads per-video summary annotation records (`*.json`) from a directory.
///
/// Each record carries per-annotator frame scores and, optionally, shot
/// boundaries. Missing boundaries fall back to uniform shots of `2*fps`
/// frames and the video is flagged. Output is sorted by video id.
pub fn ingest_summary_dataset(dir: &Path, layout: SummaryLayout) -> Result<SummaryIngest> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map_or(false, |e| e == "json"))
        .collect();
    paths.sort();

    let mut records = Vec::new();
    for path in &paths {
        let rec: RawSummaryRecord =
            serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        records.push((path.clone(), rec));
    }
    records.sort_by(|a, b| a.1.video_id.cmp(&b.1.video_id));

    let (lo, hi) = layout.annotator_range();
    let mut summaries = Vec::new();
    let mut synthetic = Vec::new();
    for (path, rec) in records {
        let t = rec
            .annotator_scores
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                message: format!("video {:?} has no annotators", rec.video_id),
            })?;
        for (a, row) in rec.annotator_scores.iter().enumerate() {
            if row.len() != t {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    message: format!(
                        "video {:?}: annotator {a} has {} frames, expected {t}",
                        rec.video_id,
                        row.len()
                    ),
                });
            }
        }
        let a = rec.annotator_scores.len();
        if a < lo || a > hi {
            log::warn!(
                "video {:?} has {a} annotators, outside the usual {lo}..={hi} for {layout:?}",
                rec.video_id
            );
        }
        let boundaries = match rec.shot_boundaries {
            Some(b) => b,
            None => {
                synthetic.push(rec.video_id.clone());
                uniform_boundaries(t, rec.fps.unwrap_or(DEFAULT_FPS))
            }
        };
        let gt = GroundTruthSummary::with_consensus(rec.video_id, rec.annotator_scores, boundaries)
            .validate()?;
        summaries.push(gt);
    }
    Ok(SummaryIngest {
        summaries,
        synthetic_boundaries: synthetic,
    })
}

/// Uniform fallback shots of `2*fps` frames (about two seconds).
pub fn uniform_boundaries(num_frames: usize, fps: f64) -> Vec<usize> {
    let shot_len = ((2.0 * fps).round() as usize).max(1);
    let mut b: Vec<usize> = (0..num_frames).step_by(shot_len).collect();
    b.push(num_frames);
    b.dedup();
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample_features(id: &str, t: usize, d: usize) -> FrameFeatures {
        let data: Vec<f32> = (0..t * d).map(|i| (i as f32 * 0.37).sin()).collect();
        FrameFeatures::new(id, t, d, data, 2.0, t as f64 / 2.0)
    }

    #[test]
    fn feature_roundtrip_bit_exact() {
        let dir = tempdir().unwrap();
        let mut store = FeatureStore::open(dir.path()).unwrap();
        let f = sample_features("v1", 7, 512);
        store.write_features(&f).unwrap();
        let back = store.read_features("v1").unwrap();
        assert_eq!(back, f);
        // bit-exact: compare the raw u32 patterns too
        for (a, b) in f.data.iter().zip(back.data.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn unknown_id_errors() {
        let dir = tempdir().unwrap();
        let store = FeatureStore::open(dir.path()).unwrap();
        assert!(matches!(
            store.read_features("zzz"),
            Err(Error::UnknownVideo(_))
        ));
    }

    #[test]
    fn flipped_byte_fails_checksum() {
        let dir = tempdir().unwrap();
        let mut store = FeatureStore::open(dir.path()).unwrap();
        store.write_features(&sample_features("v1", 4, 8)).unwrap();
        let path = dir.path().join("v1.vfeat");
        let mut bytes = fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(
            store.read_features("v1"),
            Err(Error::Checksum { .. })
        ));
    }

    #[test]
    fn anet_ingest_basic_and_degenerate() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("caps.json");
        fs::write(
            &path,
            r#"{"v1": {"duration": 10.0, "timestamps": [[0,4],[5,9]], "sentences": ["a man runs","b"]},
               "v2": {"duration": 10.0, "timestamps": [[4,4],[1,3]], "sentences": ["x","y"]}}"#,
        )
        .unwrap();
        let ingest = ingest_anet_captions(&path).unwrap();
        assert_eq!(ingest.annotations.len(), 2);
        assert_eq!(ingest.annotations[0].video_id, "v1");
        assert_eq!(ingest.annotations[0].events.len(), 2);
        assert_eq!(
            ingest.annotations[0].events[0].sentence,
            vec!["a", "man", "runs"]
        );
        assert_eq!(ingest.annotations[1].events.len(), 1);
        assert_eq!(ingest.dropped_events, 1);
    }

    #[test]
    fn anet_ingest_rejects_length_mismatch() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("caps.json");
        fs::write(
            &path,
            r#"{"v1": {"duration": 10.0, "timestamps": [[0,4],[5,9]], "sentences": ["a"]}}"#,
        )
        .unwrap();
        assert!(ingest_anet_captions(&path).is_err());
    }

    #[test]
    fn sidecar_reports_orphans() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("sidecar.json");
        fs::write(
            &path,
            r#"{"known": {"duration": 5.0, "timestamps": [[0,2]], "sentences": ["a dog"]},
               "stranger": {"duration": 5.0, "timestamps": [[0,2]], "sentences": ["b"]}}"#,
        )
        .unwrap();
        let known: BTreeSet<String> = ["known".to_string()].into_iter().collect();
        let ingest = ingest_caption_sidecar(&path, &known).unwrap();
        assert_eq!(ingest.annotations.len(), 1);
        assert_eq!(ingest.orphans, vec!["stranger".to_string()]);
    }

    #[test]
    fn sidecar_empty_events_is_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("sidecar.json");
        fs::write(
            &path,
            r#"{"v1": {"duration": 5.0, "timestamps": [], "sentences": []}}"#,
        )
        .unwrap();
        let known: BTreeSet<String> = ["v1".to_string()].into_iter().collect();
        assert!(ingest_caption_sidecar(&path, &known).is_err());
    }

    #[test]
    fn summary_ingest_counts_and_fallback() {
        let dir = tempdir().unwrap();
        // 20 annotators, explicit boundaries
        let rec1 = serde_json::json!({
            "video_id": "a_video",
            "annotator_scores": vec![vec![0.5f32; 100]; 20],
            "shot_boundaries": [0, 50, 100],
        });
        // missing boundaries, fps 5 -> shot length 10 -> 10 uniform shots
        let rec2 = serde_json::json!({
            "video_id": "b_video",
            "fps": 5.0,
            "annotator_scores": vec![vec![0.25f32; 100]; 20],
        });
        fs::write(dir.path().join("a.json"), rec1.to_string()).unwrap();
        fs::write(dir.path().join("b.json"), rec2.to_string()).unwrap();

        let ingest = ingest_summary_dataset(dir.path(), SummaryLayout::Tvsum).unwrap();
        assert_eq!(ingest.summaries.len(), 2);
        assert_eq!(ingest.summaries[0].num_annotators(), 20);
        assert_eq!(ingest.summaries[0].consensus_scores.len(), 100);
        assert_eq!(ingest.synthetic_boundaries, vec!["b_video".to_string()]);
        let b = &ingest.summaries[1];
        assert_eq!(b.shot_boundaries.len(), 11); // 10 shots
        assert_eq!(b.shot_boundaries[1], 10);
    }

    #[test]
    fn summary_ingest_rejects_ragged_annotators() {
        let dir = tempdir().unwrap();
        let rec = serde_json::json!({
            "video_id": "v",
            "annotator_scores": [[0.5, 0.5], [0.5]],
            "shot_boundaries": [0, 2],
        });
        fs::write(dir.path().join("v.json"), rec.to_string()).unwrap();
        assert!(ingest_summary_dataset(dir.path(), SummaryLayout::Summe).is_err());
    }

    #[test]
    fn ingestion_is_deterministic() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("caps.json");
        fs::write(
            &path,
            r#"{"z9": {"duration": 4.0, "timestamps": [[0,2]], "sentences": ["z"]},
               "a1": {"duration": 4.0, "timestamps": [[0,2]], "sentences": ["a"]}}"#,
        )
        .unwrap();
        let first = ingest_anet_captions(&path).unwrap();
        let second = ingest_anet_captions(&path).unwrap();
        assert_eq!(first.annotations, second.annotations);
        assert_eq!(first.annotations[0].video_id, "a1");
    }
}
