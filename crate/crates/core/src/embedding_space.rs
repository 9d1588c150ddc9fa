//! Segment embeddings and the Mahalanobis geometry induced by the
//! within-class covariance of a labeled training set.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEmbedding {
    pub segment_id: String,
    pub vector: Vec<f64>,
}

impl SegmentEmbedding {
    pub fn new(segment_id: impl Into<String>, vector: Vec<f64>) -> Result<Self> {
        let segment_id = segment_id.into();
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(segment_id));
        }
        Ok(SegmentEmbedding { segment_id, vector })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Training embedding with its speaker label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledEmbedding {
    pub segment_id: String,
    pub speaker: String,
    pub vector: Vec<f64>,
}

/// Scales `v` to unit Euclidean norm; zero vectors are returned unchanged.
pub fn unit_normalize(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / norm).collect()
    }
}

/// Embeddings keyed by segment id, all of one dimension.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingSet {
    pub fn new(
        embeddings: impl IntoIterator<Item = SegmentEmbedding>,
        normalize: bool,
    ) -> Result<Self> {
        let mut set = EmbeddingSet::default();
        for e in embeddings {
            if set.vectors.is_empty() {
                set.dim = e.dim();
            } else if e.dim() != set.dim {
                return Err(Error::DimensionMismatch {
                    expected: set.dim,
                    got: e.dim(),
                });
            }
            if e.vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(e.segment_id));
            }
            let v = if normalize {
                unit_normalize(&e.vector)
            } else {
                e.vector
            };
            set.vectors.insert(e.segment_id, v);
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, segment_id: &str) -> Option<&[f64]> {
        self.vectors.get(segment_id).map(Vec::as_slice)
    }

    pub fn require(&self, segment_id: &str) -> Result<&[f64]> {
        self.get(segment_id)
            .ok_or_else(|| Error::MissingEmbedding(segment_id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CovarianceSource {
    Training { segments: usize, speakers: usize },
    Identity,
}

/// Within-class covariance `W` plus the ridge `epsilon` added before inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct WithinClassCovariance {
    pub matrix: DMatrix<f64>,
    pub epsilon: f64,
    pub source: CovarianceSource,
}

impl WithinClassCovariance {
    /// Plain Euclidean geometry.
    pub fn identity(dim: usize) -> Self {
        WithinClassCovariance {
            matrix: DMatrix::identity(dim, dim),
            epsilon: 0.0,
            source: CovarianceSource::Identity,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `1e-6 * trace(W) / d`.
    pub fn default_epsilon(matrix: &DMatrix<f64>) -> f64 {
        let d = matrix.nrows().max(1) as f64;
        1e-6 * matrix.trace() / d
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn regularized(&self) -> DMatrix<f64> {
        let d = self.dim();
        &self.matrix + DMatrix::identity(d, d) * self.epsilon
    }

    pub fn mahalanobis(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        mahalanobis(a, b, &self.matrix, self.epsilon)
    }

    pub fn whitener(&self) -> Result<Whitener> {
        Whitener::new(&self.matrix, self.epsilon)
    }
}

#[derive(Default)]
struct SpeakerMoments {
    count: usize,
    mean: Vec<f64>,
    comoment: Vec<f64>,
}

/// `W = 1/n * sum_s sum_i (u_i^s - mean_s)(u_i^s - mean_s)^T`.
///
/// Residual co-moments are accumulated per speaker in a single streaming pass.
/// `epsilon` is set to [`WithinClassCovariance::default_epsilon`].
pub fn compute_within_class_cov(training: &[LabeledEmbedding]) -> Result<WithinClassCovariance> {
    let first = training
        .first()
        .ok_or(Error::EmptyInput("training set has no embeddings"))?;
    let d = first.vector.len();
    let mut speakers: BTreeMap<&str, SpeakerMoments> = BTreeMap::new();
    for item in training {
        if item.vector.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: item.vector.len(),
            });
        }
        if item.vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(item.segment_id.clone()));
        }
        let acc = speakers
            .entry(&item.speaker)
            .or_insert_with(|| SpeakerMoments {
                count: 0,
                mean: vec![0.0; d],
                comoment: vec![0.0; d * d],
            });
        acc.count += 1;
        let n = acc.count as f64;
        let before: Vec<f64> = item
            .vector
            .iter()
            .zip(&acc.mean)
            .map(|(x, m)| x - m)
            .collect();
        for (m, delta) in acc.mean.iter_mut().zip(&before) {
            *m += delta / n;
        }
        let after: Vec<f64> = item
            .vector
            .iter()
            .zip(&acc.mean)
            .map(|(x, m)| x - m)
            .collect();
        for r in 0..d {
            for c in 0..d {
                acc.comoment[r * d + c] += before[r] * after[c];
            }
        }
    }
    let n = training.len() as f64;
    let mut w = DMatrix::zeros(d, d);
    for acc in speakers.values() {
        for r in 0..d {
            for c in 0..d {
                w[(r, c)] += acc.comoment[r * d + c];
            }
        }
    }
    w /= n;
    let w = (&w + w.transpose()) * 0.5;
    let epsilon = WithinClassCovariance::default_epsilon(&w);
    Ok(WithinClassCovariance {
        matrix: w,
        epsilon,
        source: CovarianceSource::Training {
            segments: training.len(),
            speakers: speakers.len(),
        },
    })
}

fn check_square(w: &DMatrix<f64>, dim: usize) -> Result<()> {
    if w.nrows() != w.ncols() || w.nrows() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: w.nrows(),
        });
    }
    Ok(())
}

/// `sqrt((a - b)^T (W + eps I)^-1 (a - b))`, solved through a Cholesky factor.
pub fn mahalanobis(a: &[f64], b: &[f64], w: &DMatrix<f64>, epsilon: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    check_square(w, a.len())?;
    let d = a.len();
    let reg = w + DMatrix::identity(d, d) * epsilon;
    let chol = reg.cholesky().ok_or(Error::SingularCovariance)?;
    let diff = DVector::from_iterator(d, a.iter().zip(b).map(|(x, y)| x - y));
    // solve L y = diff, then |y|^2 = diff^T (L L^T)^-1 diff
    let y = chol
        .l()
        .solve_lower_triangular(&diff)
        .ok_or(Error::SingularCovariance)?;
    Ok(y.norm())
}

/// Linear map `x -> (W + eps I)^(-1/2) x`.
#[derive(Debug, Clone)]
pub struct Whitener {
    transform: DMatrix<f64>,
}

impl Whitener {
    pub fn new(w: &DMatrix<f64>, epsilon: f64) -> Result<Self> {
        check_square(w, w.nrows())?;
        let d = w.nrows();
        let reg = w + DMatrix::identity(d, d) * epsilon;
        let reg = (&reg + reg.transpose()) * 0.5;
        let eig = reg.symmetric_eigen();
        let top = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
        let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &l| m.min(l));
        let tol = 1e-12 * top.max(1.0);
        if min < -tol {
            return Err(Error::NotPositiveSemidefinite(min));
        }
        if min <= tol {
            return Err(Error::SingularCovariance);
        }
        let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
        let transform =
            &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();
        Ok(Whitener { transform })
    }

    pub fn dim(&self) -> usize {
        self.transform.nrows()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let v = DVector::from_column_slice(x);
        Ok((&self.transform * v).iter().copied().collect())
    }
}

pub fn whiten(embeddings: &[Vec<f64>], w: &DMatrix<f64>, epsilon: f64) -> Result<Vec<Vec<f64>>> {
    let whitener = Whitener::new(w, epsilon)?;
    embeddings.iter().map(|x| whitener.apply(x)).collect()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
