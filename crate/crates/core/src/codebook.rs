//! Spectral-shape codebooks: generalized Lloyd training over LSF vectors
//! and the `CBK1` binary file format.
//!
//! File layout (all little-endian):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `CBK1`                            |
//! | 4      | 2    | version, `1`                            |
//! | 6      | 1    | kind, `0` speech / `1` noise            |
//! | 7      | 2    | order `P`                               |
//! | 9      | 4    | entry count `N`                         |
//! | 13     | 8NP  | entries, `f64` LSFs in radians          |

use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linpred::{ar_to_lsf, levinson_durbin, lsf_to_ar, squared_distance, ArModel, LsfVector};
use crate::signal::{autocorrelation_of, Frame};

pub const MAGIC: &[u8; 4] = b"CBK1";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 13;

pub const SPEAKER_CODEBOOK_SIZE: usize = 64;
pub const GENERAL_CODEBOOK_SIZE: usize = 256;
pub const NOISE_CODEBOOK_SIZE: usize = 8;

/// Frames quieter than this are treated as silence and skipped in training.
pub const SILENCE_ENERGY: f64 = 1e-8;
pub const MAX_LLOYD_ITERATIONS: usize = 100;
pub const LLOYD_TOLERANCE: f64 = 1e-6;
const SPLIT_PERTURBATION: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodebookKind {
    Speech,
    Noise,
}

impl CodebookKind {
    fn tag(self) -> u8 {
        match self {
            CodebookKind::Speech => 0,
            CodebookKind::Noise => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    kind: CodebookKind,
    order: usize,
    entries: Vec<LsfVector>,
}

impl Codebook {
    pub fn new(kind: CodebookKind, entries: Vec<LsfVector>) -> Result<Self> {
        let order = entries
            .first()
            .ok_or_else(|| Error::invalid("codebook needs at least one entry"))?
            .order();
        if entries.iter().any(|e| e.order() != order) {
            return Err(Error::invalid("codebook entries have mixed orders"));
        }
        Ok(Self {
            kind,
            order,
            entries,
        })
    }

    /// Codebook from AR models; each is converted to LSFs.
    pub fn from_models(kind: CodebookKind, models: &[ArModel]) -> Result<Self> {
        let entries = models.iter().map(ar_to_lsf).collect::<Result<Vec<_>>>()?;
        Self::new(kind, entries)
    }

    pub fn kind(&self) -> CodebookKind {
        self.kind
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LsfVector] {
        &self.entries
    }

    /// Entries as unit-variance AR models.
    pub fn models(&self) -> Result<Vec<ArModel>> {
        self.entries.iter().map(lsf_to_ar).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.order * self.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.kind.tag());
        out.extend_from_slice(&(self.order as u16).to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for e in &self.entries {
            for w in e.as_slice() {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |offset: usize, message: String| Error::Format { offset, message };
        let need = |offset: usize, len: usize, what: &str| {
            if bytes.len() < offset + len {
                Err(fmt(
                    bytes.len(),
                    format!("truncated {what}: need {} bytes, have {}", offset + len, bytes.len()),
                ))
            } else {
                Ok(&bytes[offset..offset + len])
            }
        };
        let magic = need(0, 4, "magic")?;
        if magic != MAGIC {
            return Err(fmt(0, format!("bad magic {:?}", String::from_utf8_lossy(magic))));
        }
        let version = u16::from_le_bytes(need(4, 2, "version")?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(fmt(4, format!("unsupported version {version}")));
        }
        let kind = match need(6, 1, "kind")?[0] {
            0 => CodebookKind::Speech,
            1 => CodebookKind::Noise,
            k => return Err(fmt(6, format!("unknown kind {k}"))),
        };
        let order = u16::from_le_bytes(need(7, 2, "order")?.try_into().unwrap()) as usize;
        if order == 0 {
            return Err(fmt(7, "order must be positive".into()));
        }
        let count = u32::from_le_bytes(need(9, 4, "count")?.try_into().unwrap()) as usize;
        if count == 0 {
            return Err(fmt(9, "entry count must be positive".into()));
        }
        let body = need(HEADER_LEN, count * order * 8, "entry table")?;
        if bytes.len() != HEADER_LEN + body.len() {
            return Err(fmt(
                HEADER_LEN + body.len(),
                format!("{} trailing bytes", bytes.len() - HEADER_LEN - body.len()),
            ));
        }
        let mut entries = Vec::with_capacity(count);
        for (i, chunk) in body.chunks_exact(order * 8).enumerate() {
            let lsf: Vec<f64> = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            let entry = LsfVector::new(lsf)
                .map_err(|e| fmt(HEADER_LEN + i * order * 8, format!("entry {i}: {e}")))?;
            entries.push(entry);
        }
        Codebook::new(kind, entries)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Result of Lloyd training.
#[derive(Debug, Clone)]
pub struct Training {
    pub codebook: Codebook,
    /// Mean squared LSF distortion after each assignment step.
    pub distortion: Vec<f64>,
    pub training_vectors: usize,
}

/// LSF vector of one frame's order-`P` LP fit, or `None` for silent or
/// degenerate frames.
pub fn frame_lsf(samples: &[f64], order: usize) -> Option<LsfVector> {
    let energy: f64 = samples.iter().map(|x| x * x).sum();
    if energy < SILENCE_ENERGY || samples.len() <= order {
        return None;
    }
    let r = autocorrelation_of(samples, order).ok()?;
    let model = levinson_durbin(&r).ok()?;
    ar_to_lsf(&model).ok()
}

/// Trains a `size`-entry codebook of order `order` from `frames`.
pub fn train(
    frames: &[Frame],
    size: usize,
    order: usize,
    seed: u64,
    kind: CodebookKind,
) -> Result<Training> {
    if size == 0 || order == 0 {
        return Err(Error::invalid("codebook size and order must be positive"));
    }
    let vectors: Vec<Vec<f64>> = frames
        .iter()
        .filter_map(|f| frame_lsf(&f.samples, order))
        .map(LsfVector::into_vec)
        .collect();
    train_vectors(&vectors, size, seed, kind)
}

/// Generalized Lloyd iteration on precomputed LSF vectors.
pub fn train_vectors(
    vectors: &[Vec<f64>],
    size: usize,
    seed: u64,
    kind: CodebookKind,
) -> Result<Training> {
    if vectors.len() < size {
        return Err(Error::invalid(format!(
            "{} usable training frames, need at least {size}",
            vectors.len()
        )));
    }
    let dim = vectors[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = sample(&mut rng, vectors.len(), size)
        .into_iter()
        .map(|i| vectors[i].clone())
        .collect();
    let mut assignment = vec![0usize; vectors.len()];
    let mut trace = Vec::new();

    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut total = 0.0;
        for (v, slot) in vectors.iter().zip(assignment.iter_mut()) {
            let (best, d) = nearest(&centroids, v);
            *slot = best;
            total += d;
        }
        let distortion = total / vectors.len() as f64;
        let converged = match trace.last() {
            Some(&prev) => prev == 0.0 || (prev - distortion) / prev < LLOYD_TOLERANCE,
            None => distortion == 0.0,
        };
        trace.push(distortion);
        if converged {
            break;
        }

        let mut sums = vec![vec![0.0; dim]; size];
        let mut counts = vec![0usize; size];
        for (v, &c) in vectors.iter().zip(&assignment) {
            counts[c] += 1;
            sums[c].iter_mut().zip(v).for_each(|(s, x)| *s += x);
        }
        for (c, (sum, &n)) in centroids.iter_mut().zip(sums.iter().zip(&counts)) {
            if n > 0 {
                *c = sum.iter().map(|s| s / n as f64).collect();
            }
        }
        repair_empty_cells(&mut centroids, &counts, vectors, &assignment);
    }

    let entries = centroids
        .into_iter()
        .map(LsfVector::new)
        .collect::<Result<Vec<_>>>()?;
    Ok(Training {
        codebook: Codebook::new(kind, entries)?,
        distortion: trace,
        training_vectors: vectors.len(),
    })
}

fn nearest(centroids: &[Vec<f64>], v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(c, v);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Moves each empty centroid next to the centroid of the cell with the
/// largest total distortion.
fn repair_empty_cells(
    centroids: &mut [Vec<f64>],
    counts: &[usize],
    vectors: &[Vec<f64>],
    assignment: &[usize],
) {
    let mut cell_distortion = vec![0.0; centroids.len()];
    for (v, &c) in vectors.iter().zip(assignment) {
        cell_distortion[c] += squared_distance(&centroids[c], v);
    }
    for empty in (0..centroids.len()).filter(|&i| counts[i] == 0) {
        let donor = (0..centroids.len())
            .max_by(|&a, &b| cell_distortion[a].total_cmp(&cell_distortion[b]))
            .unwrap();
        let base = &centroids[donor];
        let up: Vec<f64> = base.iter().map(|w| w + SPLIT_PERTURBATION).collect();
        let down: Vec<f64> = base.iter().map(|w| w - SPLIT_PERTURBATION).collect();
        let split = if LsfVector::new(up.clone()).is_ok() {
            up
        } else if LsfVector::new(down.clone()).is_ok() {
            down
        } else {
            base.clone()
        };
        centroids[empty] = split;
        // the donor's spread is now shared
        cell_distortion[donor] /= 2.0;
        cell_distortion[empty] = cell_distortion[donor];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linpred::ArModel;
    use crate::signal::Channel;
    use crate::synth;

    fn frames_of(signal: &[f64], m: usize) -> Vec<Frame> {
        signal
            .chunks_exact(m)
            .enumerate()
            .map(|(i, c)| Frame::new(c.to_vec(), i, Channel::Left))
            .collect()
    }

    fn toy_codebook(n: usize, p: usize) -> Codebook {
        let entries = (0..n)
            .map(|i| {
                let lsf: Vec<f64> = (1..=p)
                    .map(|k| k as f64 * std::f64::consts::PI / (p + 1) as f64 + 0.001 * i as f64)
                    .collect();
                LsfVector::new(lsf).unwrap()
            })
            .collect();
        Codebook::new(CodebookKind::Speech, entries).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let cb = toy_codebook(64, 14);
        let bytes = cb.to_bytes();
        assert_eq!(bytes.len(), 13 + 64 * 14 * 8);
        let back = Codebook::from_bytes(&bytes).unwrap();
        assert_eq!(back, cb);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let mut bytes = toy_codebook(4, 3).to_bytes();
        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            Codebook::from_bytes(&bad),
            Err(Error::Format { offset: 0, .. })
        ));
        bytes.truncate(13 + 20);
        match Codebook::from_bytes(&bytes) {
            Err(Error::Format { offset, message }) => {
                assert_eq!(offset, 33);
                assert!(message.contains("entry table"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            Codebook::from_bytes(&bytes[..7]),
            Err(Error::Format { offset: 7, .. })
        ));
    }

    #[test]
    fn unordered_entry_is_rejected() {
        let mut bytes = toy_codebook(2, 2).to_bytes();
        // swap the two LSFs of entry 1
        let e1 = 13 + 16;
        let (a, b) = (bytes[e1..e1 + 8].to_vec(), bytes[e1 + 8..e1 + 16].to_vec());
        bytes[e1..e1 + 8].copy_from_slice(&b);
        bytes[e1 + 8..e1 + 16].copy_from_slice(&a);
        assert!(matches!(
            Codebook::from_bytes(&bytes),
            Err(Error::Format { offset: 29, .. })
        ));
    }

    #[test]
    fn single_centroid_is_mean_frame_lsf() {
        let truth = ArModel::new(vec![1.2, -0.6, 0.1], 1e-3).unwrap();
        let mut rng = synth::rng(11);
        let x = synth::ar_process(&mut rng, &truth, 200 * 400, 500);
        let frames = frames_of(&x, 200);
        let t = train(&frames, 1, 3, 1, CodebookKind::Speech).unwrap();
        // oracle: average of per-frame LP solutions in the LSF domain
        let mut mean = vec![0.0; 3];
        for f in x.chunks_exact(200) {
            let m = levinson_durbin(&autocorrelation_of(f, 3).unwrap()).unwrap();
            for (acc, v) in mean.iter_mut().zip(ar_to_lsf(&m).unwrap().as_slice()) {
                *acc += v / 400.0;
            }
        }
        let got = t.codebook.entries()[0].as_slice();
        for (g, m) in got.iter().zip(&mean) {
            assert!((g - m).abs() < 1e-9, "{got:?} vs {mean:?}");
        }
        // and close to the generating model
        let d = t.codebook.entries()[0]
            .squared_distance(&ar_to_lsf(&truth).unwrap())
            .sqrt();
        assert!(d < 0.05, "{d}");
    }

    #[test]
    fn two_clusters_separate() {
        let a = ArModel::new(vec![0.9, -0.5], 1e-3).unwrap();
        let b = ArModel::new(vec![-0.8, -0.3], 1e-3).unwrap();
        let mut rng = synth::rng(2);
        let mut frames = Vec::new();
        for i in 0..100 {
            let m = if i % 2 == 0 { &a } else { &b };
            let x = synth::ar_process(&mut rng, m, 200, 100);
            frames.push(Frame::new(x, i, Channel::Left));
        }
        let t = train(&frames, 2, 2, 5, CodebookKind::Speech).unwrap();
        let la = ar_to_lsf(&a).unwrap();
        let lb = ar_to_lsf(&b).unwrap();
        let e = t.codebook.entries();
        let near_a = e.iter().map(|c| c.squared_distance(&la)).fold(f64::MAX, f64::min);
        let near_b = e.iter().map(|c| c.squared_distance(&lb)).fold(f64::MAX, f64::min);
        assert!(near_a.sqrt() < 0.1 && near_b.sqrt() < 0.1, "{near_a} {near_b}");
        assert!(t.distortion.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn too_few_frames() {
        let frames = vec![Frame::new(vec![0.0; 200], 0, Channel::Left)];
        assert!(matches!(
            train(&frames, 1, 2, 0, CodebookKind::Noise),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn duplicate_vectors_trigger_repair() {
        // 3 identical vectors + 1 distinct, 3 cells: empty cells must be split
        let v = vec![vec![0.5, 1.0], vec![0.5, 1.0], vec![0.5, 1.0], vec![1.5, 2.5]];
        let t = train_vectors(&v, 3, 9, CodebookKind::Noise).unwrap();
        assert_eq!(t.codebook.len(), 3);
        assert!(t.distortion.windows(2).all(|w| w[1] <= w[0]));
    }
}
