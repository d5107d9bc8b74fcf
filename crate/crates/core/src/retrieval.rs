//! Place-recognition gating and attention-based loop-closure verification.
//!
//! Verification compares two frames' head-averaged query/key tokens. For the
//! retrieved frame (image 1) and the query frame (image 2):
//!
//! ```text
//! A = softmax(Q₂ K₁ᵀ / √d)      B = softmax(Q₁ K₁ᵀ / √d)      (row-wise)
//! γ_t = max_rows A[·, t] / max_rows B[·, t]
//! α   = mean of the ⌈f·N⌉ largest γ_t
//! ```
//!
//! `α` is not clamped and may exceed 1.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::submap::{FrameId, SubmapId};

pub const DEFAULT_RETRIEVAL_THRESHOLD: f64 = 0.95;
pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.85;
pub const DEFAULT_TOP_FRACTION: f64 = 0.25;
const GAMMA_DENOMINATOR_FLOOR: f64 = 1e-12;

/// Query and key tokens for one frame, `N × d` each.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSet {
    q: DMatrix<f64>,
    k: DMatrix<f64>,
}

impl TokenSet {
    pub fn new(q: DMatrix<f64>, k: DMatrix<f64>) -> Result<Self> {
        if q.shape() != k.shape() {
            return Err(Error::DimensionMismatch(format!(
                "query tokens {:?} vs key tokens {:?}",
                q.shape(),
                k.shape()
            )));
        }
        if !q.iter().chain(k.iter()).all(|v| v.is_finite()) {
            return Err(Error::DimensionMismatch("non-finite token entries".into()));
        }
        Ok(Self { q, k })
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn len(&self) -> usize {
        self.q.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.q.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.q.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub threshold: f64,
    pub top_fraction: f64,
    /// Divide logits by `√d` before the softmax.
    pub scale_logits: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_MATCH_THRESHOLD,
            top_fraction: DEFAULT_TOP_FRACTION,
            scale_logits: true,
        }
    }
}

/// Row-wise softmax of `q·kᵀ` (optionally divided by `√d`).
pub fn attention_scores(
    q: &DMatrix<f64>,
    k: &DMatrix<f64>,
    scale_logits: bool,
) -> Result<DMatrix<f64>> {
    if q.ncols() != k.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "query dim {} vs key dim {}",
            q.ncols(),
            k.ncols()
        )));
    }
    let mut logits = q * k.transpose();
    if scale_logits && q.ncols() > 0 {
        logits /= (q.ncols() as f64).sqrt();
    }
    for mut row in logits.row_iter_mut() {
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    Ok(logits)
}

fn column_max(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.max()))
}

/// Per-key-token attention ratios `γ_t` of image 2's queries against image 1.
pub fn match_gamma(
    image1: &TokenSet,
    q2: &DMatrix<f64>,
    scale_logits: bool,
) -> Result<DVector<f64>> {
    let cross = attention_scores(q2, image1.k(), scale_logits)?;
    let own = attention_scores(image1.q(), image1.k(), scale_logits)?;
    let num = column_max(&cross);
    let den = column_max(&own);
    Ok(num.zip_map(&den, |n, d| n / d.max(GAMMA_DENOMINATOR_FLOOR)))
}

/// Mean of the `⌈fraction·N⌉` largest entries.
pub fn match_score(gamma: &DVector<f64>, top_fraction: f64) -> f64 {
    if gamma.is_empty() {
        return f64::NAN;
    }
    let mut sorted: Vec<f64> = gamma.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    // Guard against products like 0.1 * 30 = 3.0000000000000004 rounding up.
    let count = ((top_fraction * sorted.len() as f64) - 1e-9)
        .ceil()
        .max(1.0) as usize;
    let count = count.min(sorted.len());
    sorted[..count].iter().sum::<f64>() / count as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub score: f64,
    pub accepted: bool,
}

/// Scores a retrieval candidate. The retrieved frame plays image 1 (its own
/// queries and keys); the query frame contributes image 2's queries.
pub fn verify_pair(
    query: &TokenSet,
    retrieved: &TokenSet,
    cfg: &VerifyConfig,
) -> Result<Verification> {
    let gamma = match_gamma(retrieved, query.q(), cfg.scale_logits)?;
    let score = match_score(&gamma, cfg.top_fraction);
    Ok(Verification {
        score,
        accepted: score >= cfg.threshold,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorEntry {
    pub frame_id: FrameId,
    pub submap_id: SubmapId,
    pub descriptor: DVector<f64>,
}

/// Linear-scan descriptor store. Readers borrow shared, the pipeline writes.
#[derive(Debug, Clone, Default)]
pub struct DescriptorDb {
    entries: Vec<DescriptorEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaceMatch {
    pub frame_id: FrameId,
    pub submap_id: SubmapId,
    pub similarity: f64,
}

impl DescriptorDb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, frame_id: FrameId) -> bool {
        self.entries.iter().any(|e| e.frame_id == frame_id)
    }

    pub fn entries(&self) -> &[DescriptorEntry] {
        &self.entries
    }

    pub fn insert(
        &mut self,
        frame_id: FrameId,
        submap_id: SubmapId,
        descriptor: DVector<f64>,
    ) -> Result<()> {
        if (descriptor.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::DimensionMismatch(format!(
                "descriptor for frame {frame_id} has norm {}",
                descriptor.norm()
            )));
        }
        if let Some(first) = self.entries.first() {
            if first.descriptor.len() != descriptor.len() {
                return Err(Error::DimensionMismatch(format!(
                    "descriptor length {} vs {}",
                    descriptor.len(),
                    first.descriptor.len()
                )));
            }
        }
        self.entries.push(DescriptorEntry {
            frame_id,
            submap_id,
            descriptor,
        });
        Ok(())
    }

    /// Up to `top_k` entries at or above `threshold`, best first. Entries from
    /// the current and the immediately previous submap (and any later one) are skipped.
    pub fn query_top_k(
        &self,
        desc: &DVector<f64>,
        current_submap: SubmapId,
        threshold: f64,
        top_k: usize,
    ) -> Vec<PlaceMatch> {
        let mut hits: Vec<PlaceMatch> = self
            .entries
            .iter()
            .filter(|e| e.submap_id + 1 < current_submap && e.descriptor.len() == desc.len())
            .map(|e| PlaceMatch {
                frame_id: e.frame_id,
                submap_id: e.submap_id,
                similarity: e.descriptor.dot(desc),
            })
            .filter(|m| m.similarity >= threshold)
            .collect();
        // Stable sort keeps insertion order among ties.
        hits.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
        hits.truncate(top_k);
        hits
    }

    pub fn query_place(
        &self,
        desc: &DVector<f64>,
        current_submap: SubmapId,
        threshold: f64,
    ) -> Option<PlaceMatch> {
        self.query_top_k(desc, current_submap, threshold, 1)
            .into_iter()
            .next()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> DVector<f64> {
        let d = DVector::from_column_slice(v);
        let n = d.norm();
        d / n
    }

    #[test]
    fn empty_db_returns_none() {
        let db = DescriptorDb::new();
        assert!(db.query_place(&unit(&[1.0, 0.0]), 5, 0.95).is_none());
    }

    #[test]
    fn finds_itself_in_older_submap() {
        let mut db = DescriptorDb::new();
        let d = unit(&[0.3, 0.4, 0.5]);
        db.insert(7, 0, d.clone()).unwrap();
        let m = db.query_place(&d, 2, 0.95).unwrap();
        assert_eq!(m.frame_id, 7);
        assert!((m.similarity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn picks_highest_similarity() {
        let q = unit(&[1.0, 0.0, 0.0]);
        let make = |s: f64| DVector::from_column_slice(&[s, (1.0 - s * s).sqrt(), 0.0]);
        let mut db = DescriptorDb::new();
        db.insert(1, 0, make(0.96)).unwrap();
        db.insert(2, 1, make(0.99)).unwrap();
        // Linear-scan oracle.
        let best = db
            .entries()
            .iter()
            .max_by(|a, b| a.descriptor.dot(&q).total_cmp(&b.descriptor.dot(&q)))
            .unwrap();
        let m = db.query_place(&q, 3, 0.95).unwrap();
        assert_eq!(m.frame_id, best.frame_id);
        assert_eq!(m.frame_id, 2);
        assert!((m.similarity - 0.99).abs() < 1e-12);
    }

    #[test]
    fn excludes_current_and_previous_submap() {
        let d = unit(&[1.0, 1.0]);
        let mut db = DescriptorDb::new();
        db.insert(1, 4, d.clone()).unwrap();
        db.insert(2, 5, d.clone()).unwrap();
        assert!(db.query_place(&d, 5, 0.5).is_none());
        assert_eq!(db.query_place(&d, 6, 0.5).unwrap().frame_id, 1);
    }

    #[test]
    fn below_threshold_is_none() {
        let mut db = DescriptorDb::new();
        db.insert(1, 0, unit(&[1.0, 0.0])).unwrap();
        assert!(db.query_place(&unit(&[1.0, 1.0]), 5, 0.95).is_none());
    }

    #[test]
    fn attention_trivial_cases() {
        let one = DMatrix::from_row_slice(1, 2, &[0.3, -0.2]);
        let a = attention_scores(&one, &one, true).unwrap();
        assert_eq!(a[(0, 0)], 1.0);

        let q = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -3.0, 0.5]);
        let a = attention_scores(&q, &k, true).unwrap();
        assert_eq!((a[(0, 0)], a[(0, 1)]), (0.5, 0.5));
    }

    #[test]
    fn attention_two_by_two_by_hand() {
        let eye = DMatrix::<f64>::identity(2, 2);
        let a = attention_scores(&eye, &eye, true).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let hi = s.exp() / (s.exp() + 1.0);
        let lo = 1.0 / (s.exp() + 1.0);
        assert!((a[(0, 0)] - hi).abs() < 1e-15 && (a[(0, 1)] - lo).abs() < 1e-15);
        assert!((a[(1, 1)] - hi).abs() < 1e-15 && (a[(1, 0)] - lo).abs() < 1e-15);
    }

    #[test]
    fn attention_dimension_mismatch() {
        let q = DMatrix::zeros(2, 3);
        let k = DMatrix::zeros(2, 4);
        assert!(matches!(
            attention_scores(&q, &k, true),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn gamma_identity_is_exactly_one() {
        let q = DMatrix::from_fn(5, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let k = DMatrix::from_fn(5, 4, |i, j| ((i * 2 + j * 5) % 7) as f64 * 0.3);
        let t = TokenSet::new(q.clone(), k).unwrap();
        let g = match_gamma(&t, &q, true).unwrap();
        assert!(g.iter().all(|&v| v == 1.0));

        let single = TokenSet::new(
            DMatrix::from_element(1, 3, 0.5),
            DMatrix::from_element(1, 3, 0.5),
        )
        .unwrap();
        assert_eq!(match_gamma(&single, single.q(), true).unwrap()[0], 1.0);
    }

    #[test]
    fn gamma_matches_brute_force() {
        let q1 = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.5, 0.5]);
        let k1 = DMatrix::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 2.0, -1.0, 1.0]);
        let q2 = DMatrix::from_row_slice(3, 2, &[0.0, 1.5, 1.0, 1.0, -0.5, 0.0]);
        let tok = TokenSet::new(q1.clone(), k1.clone()).unwrap();
        let g = match_gamma(&tok, &q2, true).unwrap();

        // Exhaustive oracle over every (row, column) pair with scalar arithmetic.
        let softmax_entry = |q: &DMatrix<f64>, row: usize, col: usize| {
            let logit =
                |c: usize| (q[(row, 0)] * k1[(c, 0)] + q[(row, 1)] * k1[(c, 1)]) / 2f64.sqrt();
            let denom: f64 = (0..3).map(|c| logit(c).exp()).sum();
            logit(col).exp() / denom
        };
        for t in 0..3 {
            let num = (0..3)
                .map(|r| softmax_entry(&q2, r, t))
                .fold(f64::MIN, f64::max);
            let den = (0..3)
                .map(|r| softmax_entry(&q1, r, t))
                .fold(f64::MIN, f64::max);
            assert!(
                (g[t] - num / den).abs() < 1e-12,
                "t={t}: {} vs {}",
                g[t],
                num / den
            );
        }
    }

    #[test]
    fn score_examples() {
        assert_eq!(match_score(&DVector::from_element(8, 1.0), 0.25), 1.0);
        let g = DVector::from_column_slice(&[4.0, 3.0, 2.0, 1.0]);
        assert_eq!(match_score(&g, 0.25), 4.0);
        assert_eq!(match_score(&g, 0.5), 3.5);
        let g = DVector::from_column_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(match_score(&g, 0.5), 3.5);
    }

    #[test]
    fn identical_token_sets_verify() {
        let q = DMatrix::from_fn(6, 3, |i, j| (i as f64 - j as f64) * 0.4);
        let k = DMatrix::from_fn(6, 3, |i, j| (i * j) as f64 * 0.1);
        let t = TokenSet::new(q, k).unwrap();
        let v = verify_pair(&t, &t, &VerifyConfig::default()).unwrap();
        assert_eq!(v.score, 1.0);
        assert!(v.accepted);
    }

    #[test]
    fn token_shape_checked() {
        assert!(TokenSet::new(DMatrix::zeros(2, 3), DMatrix::zeros(3, 3)).is_err());
    }
}
