//! Face verification against a frontal reference embedding.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::perception::{rng_stream, NoiseModel, StreamId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("embedding is empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding has non-finite components"));
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::invalid("embedding has zero norm"));
        }
        Ok(Embedding(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Cosine of the angle between two embeddings, in `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("dimension mismatch: {} vs {}", a.len(), b.len())));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::invalid("zero-norm embedding"));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Shape of the synthetic embedding: the first two components rotate with
/// bearing, the third grows with distance from the reference range, and the
/// rest are pure noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticEmbeddingParams {
    pub dim: usize,
    /// Rotation of the embedding per radian of bearing.
    pub bearing_gain: f64,
    /// Weight of the relative range offset.
    pub range_gain: f64,
    pub reference_range_m: f64,
}

impl Default for SyntheticEmbeddingParams {
    fn default() -> Self {
        SyntheticEmbeddingParams {
            dim: 8,
            bearing_gain: 1.0,
            range_gain: 4.0,
            reference_range_m: 1.5,
        }
    }
}

impl SyntheticEmbeddingParams {
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.dim < 3 {
            out.push(format!("embedding.dim: need at least 3, got {}", self.dim));
        }
        for (name, v) in [("bearing_gain", self.bearing_gain), ("range_gain", self.range_gain)] {
            if !(v >= 0.0 && v.is_finite()) {
                out.push(format!("embedding.{name}: must be >= 0, got {v}"));
            }
        }
        if !(self.reference_range_m > 0.0 && self.reference_range_m.is_finite()) {
            out.push(format!(
                "embedding.reference_range_m: must be > 0, got {}",
                self.reference_range_m
            ));
        }
        out
    }

    /// Noise-free embedding at a bearing (radians) and range (metres).
    pub fn clean(&self, bearing: f64, range: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.dim.max(3)];
        let a = self.bearing_gain * bearing;
        v[0] = a.cos();
        v[1] = a.sin();
        v[2] = self.range_gain * (range - self.reference_range_m) / self.reference_range_m;
        v
    }
}

/// Per-component noise sigma at a range: the configured scale times `range / 5 m`.
pub fn embedding_noise_sigma(noise: &NoiseModel, range: f64) -> f64 {
    noise.embedding_sigma * range / 5.0
}

/// Synthetic embedding with range-scaled Gaussian noise drawn from `rng`.
pub fn synthetic_embedding<R: Rng>(
    bearing: f64,
    range: f64,
    noise: &NoiseModel,
    params: &SyntheticEmbeddingParams,
    rng: &mut R,
) -> Result<Embedding> {
    if !(range > 0.0 && range.is_finite() && bearing.is_finite()) {
        return Err(Error::invalid(format!("bad view: bearing {bearing}, range {range}")));
    }
    let sigma = embedding_noise_sigma(noise, range);
    let mut v = params.clean(bearing, range);
    for x in &mut v {
        let z: f64 = rng.sample(StandardNormal);
        *x += sigma * z;
    }
    Embedding::new(v)
}

/// What an embedding provider sees of one face detection. The bearing and
/// range are ground truth, available to the synthetic provider only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceObservation {
    pub timestamp: f64,
    pub bbox: BoundingBox,
    pub bearing: f64,
    pub range: f64,
}

/// Source of face embeddings. Implement this to plug in a real face network.
pub trait EmbeddingProvider {
    /// Embedding of the enrolled frontal face.
    fn reference(&self) -> Embedding;
    fn embed(&mut self, observation: &FaceObservation) -> Result<Embedding>;
}

/// Provider built on [`synthetic_embedding`].
pub struct SyntheticEmbedder {
    params: SyntheticEmbeddingParams,
    noise: NoiseModel,
    rng: ChaCha8Rng,
}

impl SyntheticEmbedder {
    pub fn new(params: SyntheticEmbeddingParams, noise: NoiseModel) -> Self {
        SyntheticEmbedder {
            rng: rng_stream(noise.seed, StreamId::Embedding as u64),
            params,
            noise,
        }
    }
}

impl EmbeddingProvider for SyntheticEmbedder {
    fn reference(&self) -> Embedding {
        Embedding(self.params.clean(0.0, self.params.reference_range_m))
    }

    fn embed(&mut self, observation: &FaceObservation) -> Result<Embedding> {
        synthetic_embedding(observation.bearing, observation.range, &self.noise, &self.params, &mut self.rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRecord {
    pub timestamp: f64,
    pub similarity: f64,
    pub range: f64,
    pub bearing: f64,
}

/// Similarity of each observation to the provider's reference.
pub fn record_similarity<P: EmbeddingProvider + ?Sized>(
    observations: &[FaceObservation],
    provider: &mut P,
) -> Result<Vec<SimilarityRecord>> {
    let reference = provider.reference();
    observations
        .iter()
        .map(|o| {
            let e = provider.embed(o)?;
            Ok(SimilarityRecord {
                timestamp: o.timestamp,
                similarity: cosine_similarity(e.as_slice(), reference.as_slice())?,
                range: o.range,
                bearing: o.bearing,
            })
        })
        .collect()
}

pub fn write_similarity_csv<W: Write>(out: W, records: &[SimilarityRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time_s", "similarity", "range_m", "bearing_rad"])?;
    for r in records {
        w.write_record([
            r.timestamp.to_string(),
            r.similarity.to_string(),
            r.range.to_string(),
            r.bearing.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
