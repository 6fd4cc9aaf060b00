//! Probability vectors over classes and per-node fields of them.

use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that a vector sums to one.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A distribution over `|C|` classes. Entries are nonnegative and sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn uniform(class_count: usize) -> Self {
        assert!(class_count > 0);
        ProbVector(vec![1.0 / class_count as f64; class_count])
    }

    pub fn one_hot(class_count: usize, class: usize) -> Self {
        let mut v = vec![0.0; class_count];
        v[class] = 1.0;
        ProbVector(v)
    }

    /// Validates an already-normalized vector.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::validation("empty probability vector"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::validation(format!("probability vector has negative or non-finite entry: {values:?}")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::validation(format!("probability vector sums to {sum}")));
        }
        Ok(ProbVector(values))
    }

    /// Normalizes nonnegative weights. Returns `None` when the mass is zero or not finite.
    pub fn from_weights(mut values: Vec<f64>) -> Option<Self> {
        let sum: f64 = values.iter().sum();
        if !(sum.is_finite() && sum > 0.0) || values.iter().any(|v| *v < 0.0 || v.is_nan()) {
            return None;
        }
        values.iter_mut().for_each(|v| *v /= sum);
        Some(ProbVector(values))
    }

    /// Softmax of arbitrary finite logits.
    pub fn softmax(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        ProbVector::from_weights(exps).expect("softmax of finite logits has positive mass")
    }

    /// Normalizes `exp(log_weights - max)`. `None` when every entry is `-inf`.
    pub fn from_log_weights(log_weights: &[f64]) -> Option<Self> {
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return None;
        }
        ProbVector::from_weights(log_weights.iter().map(|l| (l - max).exp()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn value(&self, class: usize) -> f64 {
        self.0[class]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest entry; ties go to the smallest class index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (c, &v) in self.0.iter().enumerate().skip(1) {
            if v > self.0[best] {
                best = c;
            }
        }
        best
    }

    /// `(1 - w) * self + w * uniform`, renormalized.
    pub fn mix_uniform(&self, w: f64) -> Self {
        let u = 1.0 / self.len() as f64;
        let mixed = self.0.iter().map(|p| (1.0 - w) * p + w * u).collect();
        ProbVector::from_weights(mixed).expect("mixture of distributions has unit mass")
    }

    pub fn is_on_simplex(&self) -> bool {
        let sum: f64 = self.0.iter().sum();
        self.0.iter().all(|v| v.is_finite() && *v >= 0.0) && (sum - 1.0).abs() <= SIMPLEX_TOL
    }

    pub fn l1_distance(&self, other: &ProbVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// Predicted class distribution and label for one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub node: usize,
    pub distribution: ProbVector,
    pub label: usize,
}

impl Prediction {
    pub fn new(node: usize, distribution: ProbVector) -> Self {
        let label = distribution.argmax();
        Prediction { node, distribution, label }
    }
}

/// Formats a float so that parsing it back yields the identical value.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// One distribution per node, indexed by dense node id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorField {
    class_count: usize,
    vectors: Vec<ProbVector>,
}

impl PriorField {
    pub fn new(class_count: usize, vectors: Vec<ProbVector>) -> Result<Self> {
        if let Some((i, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != class_count) {
            return Err(Error::validation(format!("node {i} has {} entries, expected {class_count}", v.len())));
        }
        Ok(PriorField { class_count, vectors })
    }

    pub fn uniform(node_count: usize, class_count: usize) -> Self {
        PriorField { class_count, vectors: vec![ProbVector::uniform(class_count); node_count] }
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, node: usize) -> &ProbVector {
        &self.vectors[node]
    }

    pub fn set(&mut self, node: usize, v: ProbVector) {
        assert_eq!(v.len(), self.class_count);
        self.vectors[node] = v;
    }

    pub fn vectors(&self) -> &[ProbVector] {
        &self.vectors
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &ProbVector)> {
        self.vectors.iter().enumerate()
    }

    /// `node_id p0 p1 ...` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, v) in self.iter() {
            out.push_str(&i.to_string());
            for p in v.as_slice() {
                out.push(' ');
                out.push_str(&fmt_f64(*p));
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut vectors: Vec<Option<ProbVector>> = Vec::new();
        let mut class_count = None;
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let parse_err = |msg: String| Error::Parse { path: path.to_path_buf(), line: lineno + 1, msg };
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut toks = line.split_whitespace();
            let node: usize = toks
                .next()
                .unwrap()
                .parse()
                .map_err(|e| parse_err(format!("bad node id: {e}")))?;
            let vals = toks
                .map(|t| t.parse::<f64>().map_err(|e| parse_err(format!("bad probability {t:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            match class_count {
                None => class_count = Some(vals.len()),
                Some(c) if c != vals.len() => return Err(parse_err(format!("expected {c} probabilities, got {}", vals.len()))),
                _ => {}
            }
            let v = ProbVector::new(vals).map_err(|e| parse_err(e.to_string()))?;
            if vectors.len() <= node {
                vectors.resize(node + 1, None);
            }
            vectors[node] = Some(v);
        }
        let class_count = class_count.ok_or_else(|| Error::validation(format!("{}: no vectors", path.display())))?;
        let vectors = vectors
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| Error::validation(format!("{}: node {i} missing", path.display()))))
            .collect::<Result<Vec<_>>>()?;
        PriorField::new(class_count, vectors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_tie_goes_to_smallest_index() {
        let v = ProbVector::new(vec![0.4, 0.2, 0.4]).unwrap();
        assert_eq!(v.argmax(), 0);
        assert_eq!(ProbVector::uniform(5).argmax(), 0);
    }

    #[test]
    fn rejects_bad_vectors() {
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVector::new(vec![f64::NAN, 1.0]).is_err());
        assert!(ProbVector::from_weights(vec![0.0, 0.0]).is_none());
        assert!(ProbVector::from_log_weights(&[f64::NEG_INFINITY; 3]).is_none());
    }

    #[test]
    fn softmax_of_extreme_logits_stays_on_simplex() {
        let v = ProbVector::softmax(&[1e300, -1e300, 0.0]);
        assert!(v.is_on_simplex());
        assert_eq!(v.argmax(), 0);
    }

    #[test]
    fn fmt_round_trips() {
        for x in [0.0, 1e-300, 0.1, 1.0 / 3.0, 2.5e-7, 123456.789, -4.2e20, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn prior_field_text_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.txt");
        let field = PriorField::new(
            3,
            vec![
                ProbVector::uniform(3),
                ProbVector::from_weights(vec![1e-300, 0.3, 0.7]).unwrap(),
                ProbVector::one_hot(3, 1),
            ],
        )
        .unwrap();
        field.write(&path).unwrap();
        assert_eq!(PriorField::read(&path).unwrap(), field);
    }
}
