//! Candidate scoring against the target set and shrinkage-ratio filtering.

use std::cmp::Ordering;
use std::path::Path;

use rayon::prelude::*;

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    /// Squared distance to the mean target embedding.
    #[default]
    Mmd,
    /// Sum over targets of one minus cosine similarity.
    Cosine,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mmd" => Ok(Metric::Mmd),
            "cosine" | "cs" => Ok(Metric::Cosine),
            other => Err(Error::Config(format!("unknown metric '{other}' (expected mmd or cosine)"))),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Mmd => "mmd",
            Metric::Cosine => "cosine",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub candidate_id: String,
    pub distance: f64,
    /// 1-based position in ascending distance order.
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub k: f64,
    pub metric: Metric,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            k: 0.8,
            metric: Metric::Mmd,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        validate_k(self.k)
    }
}

fn validate_k(k: f64) -> Result<()> {
    if k > 0.0 && k <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("shrinkage ratio k must satisfy 0 < k <= 1, got {k}")))
    }
}

/// `⌊n_a · k⌋`, with a small allowance so that decimal ratios such as
/// `0.29 · 100` are not floored one below their exact value.
pub fn kept_count(n_a: usize, k: f64) -> usize {
    ((n_a as f64) * k + 1e-9).floor() as usize
}

/// Target embeddings prepared for repeated scoring: the mean vector and the
/// target norms are computed once.
#[derive(Debug, Clone)]
pub struct TargetSet {
    dim: usize,
    mean: Vec<f64>,
    targets: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

impl TargetSet {
    pub fn new(targets: &[EmbeddingVector]) -> Result<Self> {
        let first = targets
            .first()
            .ok_or_else(|| Error::InvalidDataset("target embedding set is empty".into()))?;
        let dim = first.dim();
        let mut mean = vec![0.0; dim];
        for t in targets {
            if t.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: t.dim(),
                    context: Some(format!("target '{}'", t.source_id)),
                });
            }
            for (m, v) in mean.iter_mut().zip(&t.values) {
                *m += v;
            }
        }
        let n = targets.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        Ok(Self {
            dim,
            mean,
            targets: targets.iter().map(|t| t.values.clone()).collect(),
            norms: targets.iter().map(|t| norm(&t.values)).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    fn check(&self, candidate: &[f64]) -> Result<()> {
        if candidate.len() != self.dim {
            return Err(Error::dimension(self.dim, candidate.len()));
        }
        Ok(())
    }

    pub fn mmd_sq(&self, candidate: &[f64]) -> Result<f64> {
        self.check(candidate)?;
        Ok(self
            .mean
            .iter()
            .zip(candidate)
            .map(|(m, c)| (m - c) * (m - c))
            .sum())
    }

    /// Cosine distance plus the number of terms that involved a zero-norm
    /// vector; each such term contributes 1.
    pub fn cosine_dist(&self, candidate: &[f64]) -> Result<(f64, usize)> {
        self.check(candidate)?;
        let c_norm = norm(candidate);
        let mut total = 0.0;
        let mut zero_terms = 0;
        for (t, &t_norm) in self.targets.iter().zip(&self.norms) {
            if c_norm == 0.0 || t_norm == 0.0 {
                zero_terms += 1;
                total += 1.0;
                continue;
            }
            let cos = dot(t, candidate) / (t_norm * c_norm);
            total += (1.0 - cos).clamp(0.0, 2.0);
        }
        Ok((total, zero_terms))
    }

    pub fn distance(&self, metric: Metric, candidate: &[f64]) -> Result<(f64, usize)> {
        match metric {
            Metric::Mmd => self.mmd_sq(candidate).map(|d| (d, 0)),
            Metric::Cosine => self.cosine_dist(candidate),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Squared Euclidean distance between `candidate` and the mean of `targets`.
pub fn mmd_sq(candidate: &EmbeddingVector, targets: &[EmbeddingVector]) -> Result<f64> {
    TargetSet::new(targets)?.mmd_sq(&candidate.values)
}

/// `Σ_j (1 − cos(t_j, candidate))`. Zero-norm vectors count as similarity 0.
pub fn cosine_dist(candidate: &EmbeddingVector, targets: &[EmbeddingVector]) -> Result<f64> {
    TargetSet::new(targets)?.cosine_dist(&candidate.values).map(|(d, _)| d)
}

fn by_distance_then_id(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then_with(|| a.candidate_id.cmp(&b.candidate_id))
}

/// Sorts by ascending distance (ties by id) and assigns ranks from 1.
pub fn rank(mut scored: Vec<ScoredCandidate>) -> Vec<ScoredCandidate> {
    scored.sort_by(by_distance_then_id);
    for (i, s) in scored.iter_mut().enumerate() {
        s.rank = i + 1;
    }
    scored
}

#[derive(Debug, Clone)]
pub struct ScoreOutcome {
    /// Ranked, ascending distance.
    pub scored: Vec<ScoredCandidate>,
    pub zero_norm_terms: usize,
}

/// Scores every candidate against the targets and ranks them.
pub fn score_candidates(
    candidates: &[EmbeddingVector],
    targets: &[EmbeddingVector],
    metric: Metric,
) -> Result<ScoreOutcome> {
    let set = TargetSet::new(targets)?;
    let results: Vec<(ScoredCandidate, usize)> = candidates
        .par_iter()
        .map(|c| {
            let (distance, zero) = set.distance(metric, &c.values).map_err(|e| match e {
                Error::Dimension { expected, found, .. } => Error::Dimension {
                    expected,
                    found,
                    context: Some(format!("candidate '{}'", c.source_id)),
                },
                other => other,
            })?;
            Ok((
                ScoredCandidate {
                    candidate_id: c.source_id.clone(),
                    distance,
                    rank: 0,
                },
                zero,
            ))
        })
        .collect::<Result<_>>()?;
    let zero_norm_terms = results.iter().map(|(_, z)| z).sum();
    Ok(ScoreOutcome {
        scored: rank(results.into_iter().map(|(s, _)| s).collect()),
        zero_norm_terms,
    })
}

/// Keeps the `⌊n_a·k⌋` candidates with the smallest distance, ties broken by
/// ascending id. Returned ids are in ascending distance order.
pub fn filter_top_k(scored: &[ScoredCandidate], k: f64) -> Result<Vec<String>> {
    validate_k(k)?;
    if scored.is_empty() {
        return Err(Error::InvalidDataset("no candidates to filter".into()));
    }
    if let Some(bad) = scored.iter().find(|s| !s.distance.is_finite() || s.distance < 0.0) {
        return Err(Error::InvalidDataset(format!(
            "candidate '{}' has invalid distance {}",
            bad.candidate_id, bad.distance
        )));
    }
    let n_b = kept_count(scored.len(), k);
    if n_b == 0 {
        return Err(Error::EmptySelection { n_a: scored.len(), k });
    }
    let mut refs: Vec<&ScoredCandidate> = scored.iter().collect();
    if n_b < refs.len() {
        refs.select_nth_unstable_by(n_b - 1, |a, b| by_distance_then_id(a, b));
        refs.truncate(n_b);
    }
    refs.sort_by(|a, b| by_distance_then_id(a, b));
    Ok(refs.into_iter().map(|s| s.candidate_id.clone()).collect())
}

/// Writes `candidate_id,distance,rank,kept` rows in rank order; the first
/// `n_kept` ranks are marked kept.
pub fn write_scores_csv(path: &Path, scored: &[ScoredCandidate], n_kept: usize) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut ordered: Vec<&ScoredCandidate> = scored.iter().collect();
    ordered.sort_by_key(|s| s.rank);
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["candidate_id", "distance", "rank", "kept"]).map_err(csv_err)?;
    for s in ordered {
        w.write_record([
            s.candidate_id.as_str(),
            &s.distance.to_string(),
            &s.rank.to_string(),
            if s.rank <= n_kept { "1" } else { "0" },
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a score CSV. Only `candidate_id` and `distance` are required;
/// ranks are recomputed.
pub fn read_scores_csv(path: &Path) -> Result<Vec<ScoredCandidate>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = r.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidDataset(format!("{}: missing column '{name}'", path.display())))
    };
    let (id_col, dist_col) = (col("candidate_id")?, col("distance")?);
    let mut out = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let id = record.get(id_col).unwrap_or_default().to_string();
        let raw = record.get(dist_col).unwrap_or_default();
        let distance: f64 = raw.parse().map_err(|_| {
            Error::InvalidDataset(format!("{}: row {}: invalid distance '{raw}'", path.display(), i + 2))
        })?;
        out.push(ScoredCandidate {
            candidate_id: id,
            distance,
            rank: 0,
        });
    }
    Ok(rank(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec(), "v", 0)
    }

    fn sc(id: &str, d: f64) -> ScoredCandidate {
        ScoredCandidate {
            candidate_id: id.into(),
            distance: d,
            rank: 0,
        }
    }

    #[test]
    fn mmd_examples() {
        assert_eq!(mmd_sq(&ev(&[2.0, 3.0]), &[ev(&[1.0, 2.0]), ev(&[3.0, 4.0])]).unwrap(), 0.0);
        assert_eq!(mmd_sq(&ev(&[3.0, 4.0]), &[ev(&[0.0, 0.0])]).unwrap(), 25.0);
        assert_eq!(mmd_sq(&ev(&[0.3, -1.2]), &[ev(&[0.3, -1.2])]).unwrap(), 0.0);
        assert!(mmd_sq(&ev(&[1.0]), &[ev(&[1.0, 2.0])]).is_err());
        assert!(mmd_sq(&ev(&[1.0]), &[]).is_err());
    }

    #[test]
    fn cosine_examples() {
        let targets = [ev(&[1.0, 2.0, 0.0]), ev(&[2.0, 4.0, 0.0]), ev(&[0.5, 1.0, 0.0])];
        assert!(cosine_dist(&ev(&[3.0, 6.0, 0.0]), &targets).unwrap().abs() < 1e-12);
        assert!((cosine_dist(&ev(&[0.0, 0.0, 5.0]), &targets).unwrap() - 3.0).abs() < 1e-12);
        assert!((cosine_dist(&ev(&[-1.0, -2.0]), &[ev(&[1.0, 2.0])]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_zero_norm_counts_as_one() {
        let set = TargetSet::new(&[ev(&[1.0, 0.0]), ev(&[0.0, 0.0])]).unwrap();
        let (d, zeros) = set.cosine_dist(&[1.0, 0.0]).unwrap();
        assert_eq!(zeros, 1);
        assert!((d - 1.0).abs() < 1e-12);
        let (d, zeros) = set.cosine_dist(&[0.0, 0.0]).unwrap();
        assert_eq!((d, zeros), (2.0, 2));
    }

    #[test]
    fn filter_examples() {
        let scored: Vec<_> = [0.5, 0.1, 0.9, 0.3, 0.7]
            .iter()
            .enumerate()
            .map(|(i, &d)| sc(&format!("c{i}"), d))
            .collect();
        assert_eq!(filter_top_k(&scored, 0.8).unwrap(), vec!["c1", "c3", "c0", "c4"]);
        assert_eq!(filter_top_k(&scored, 1.0).unwrap(), vec!["c1", "c3", "c0", "c4", "c2"]);
        let ten: Vec<_> = (0..10).map(|i| sc(&format!("c{i}"), i as f64)).collect();
        assert_eq!(filter_top_k(&ten, 0.8).unwrap().len(), 8);
    }

    #[test]
    fn filter_errors() {
        let one = vec![sc("a", 1.0)];
        assert!(matches!(filter_top_k(&one, 0.5), Err(Error::EmptySelection { .. })));
        assert!(filter_top_k(&one, 0.0).is_err());
        assert!(filter_top_k(&one, 1.5).is_err());
        assert!(filter_top_k(&[], 0.5).is_err());
        assert!(filter_top_k(&[sc("a", f64::NAN)], 1.0).is_err());
    }

    #[test]
    fn ties_break_by_id() {
        let scored = vec![sc("b", 1.0), sc("a", 1.0), sc("c", 0.5), sc("d", 1.0)];
        assert_eq!(filter_top_k(&scored, 0.75).unwrap(), vec!["c", "a", "b"]);
    }

    #[test]
    fn kept_count_handles_decimal_ratios() {
        assert_eq!(kept_count(100, 0.29), 29);
        assert_eq!(kept_count(10, 0.8), 8);
        assert_eq!(kept_count(3, 0.1), 0);
        assert_eq!(kept_count(7, 1.0), 7);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let scored = rank(vec![sc("x", 0.25), sc("y", 0.1 + 0.2), sc("z", 0.0)]);
        write_scores_csv(&path, &scored, 2).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("candidate_id,distance,rank,kept\nz,0,1,1\nx,0.25,2,1\n"), "{text}");
        assert_eq!(read_scores_csv(&path).unwrap(), scored);
    }
}
