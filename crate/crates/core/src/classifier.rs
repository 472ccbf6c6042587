//! Patch labelling by minimum class residual, and image-level decisions from
//! the resulting label grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{class_residuals, AlsfModel, ResidualMode};
use crate::numerics::{Matrix, Vector};
use crate::par::{map_indices, ExecPolicy};

/// Columns per work item when classifying a batch.
const CHUNK: usize = 256;

/// Index of the smallest value; ties go to the lowest index.
fn argmin(values: impl Iterator<Item = f64>) -> (usize, f64, f64) {
    let mut best = (0, f64::INFINITY);
    let mut second = f64::INFINITY;
    for (i, v) in values.enumerate() {
        if v < best.1 {
            second = best.1;
            best = (i, v);
        } else if v < second {
            second = v;
        }
    }
    (best.0, best.1, second)
}

/// Class with the smallest residual for one patch.
pub fn classify_patch(y: &Vector, model: &AlsfModel, mode: ResidualMode) -> Result<usize> {
    let batch = Matrix::from_column_slice(y.len(), 1, y.as_slice());
    Ok(classify_batch(&batch, model, mode, ExecPolicy::Sequential)?.0[0])
}

/// Labels and margins (second-best minus best residual) for every column.
pub fn classify_batch(
    batch: &Matrix,
    model: &AlsfModel,
    mode: ResidualMode,
    policy: ExecPolicy,
) -> Result<(Vec<usize>, Vec<f64>)> {
    if batch.nrows() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "patch length {}, model dimension {}",
            batch.nrows(),
            model.dim()
        )));
    }
    let n = batch.ncols();
    let chunks = n.div_ceil(CHUNK);
    let parts = map_indices(policy, chunks, |i| {
        let start = i * CHUNK;
        let width = CHUNK.min(n - start);
        let residuals = class_residuals(&batch.columns(start, width).into_owned(), model, mode)?;
        Ok(residuals
            .column_iter()
            .map(|col| {
                let (label, best, second) = argmin(col.iter().cloned());
                (label, second - best)
            })
            .collect::<Vec<_>>())
    });
    let mut labels = Vec::with_capacity(n);
    let mut margins = Vec::with_capacity(n);
    for part in parts {
        for (l, m) in part? {
            labels.push(l);
            margins.push(m);
        }
    }
    Ok((labels, margins))
}

/// Per-cell labels of one image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub rows: usize,
    pub cols: usize,
    pub labels: Vec<usize>,
    pub scores: Vec<f64>,
}

impl PatchGrid {
    pub fn new(rows: usize, cols: usize, labels: Vec<usize>, scores: Vec<f64>) -> Result<Self> {
        if labels.len() != rows * cols || scores.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for a {rows}x{cols} grid",
                labels.len()
            )));
        }
        Ok(PatchGrid {
            rows,
            cols,
            labels,
            scores,
        })
    }

    pub fn label(&self, row: usize, col: usize) -> usize {
        self.labels[row * self.cols + col]
    }

    fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Classifies a row-major batch of `rows * cols` patches into a grid.
pub fn classify_grid(
    batch: &Matrix,
    rows: usize,
    cols: usize,
    model: &AlsfModel,
    mode: ResidualMode,
    policy: ExecPolicy,
) -> Result<PatchGrid> {
    if batch.ncols() != rows * cols {
        return Err(Error::ShapeMismatch(format!(
            "{} patches for a {rows}x{cols} grid",
            batch.ncols()
        )));
    }
    let (labels, scores) = classify_batch(batch, model, mode, policy)?;
    PatchGrid::new(rows, cols, labels, scores)
}

/// Fraction of cells labelled `positive_class`.
pub fn score_ratio(grid: &PatchGrid, positive_class: usize) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let hits = grid.labels.iter().filter(|&&l| l == positive_class).count();
    Ok(hits as f64 / grid.labels.len() as f64)
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

/// Cell count of the largest 8-connected region labelled `positive_class`.
pub fn score_largest_region(grid: &PatchGrid, positive_class: usize) -> Result<usize> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let (rows, cols) = (grid.rows, grid.cols);
    let positive = |r: usize, c: usize| grid.label(r, c) == positive_class;
    let mut sets = DisjointSet::new(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            if !positive(r, c) {
                continue;
            }
            // Already-visited neighbours: W, NW, N, NE.
            let mut link = |rr: usize, cc: usize| {
                if positive(rr, cc) {
                    sets.union(r * cols + c, rr * cols + cc);
                }
            };
            if c > 0 {
                link(r, c - 1);
            }
            if r > 0 {
                link(r - 1, c);
                if c > 0 {
                    link(r - 1, c - 1);
                }
                if c + 1 < cols {
                    link(r - 1, c + 1);
                }
            }
        }
    }
    let mut best = 0;
    for r in 0..rows {
        for c in 0..cols {
            if positive(r, c) {
                let root = sets.find(r * cols + c);
                best = best.max(sets.size[root]);
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdFit {
    pub threshold: f64,
    pub balanced_accuracy: f64,
}

/// Mean of per-class recall for the decision `score > threshold`.
pub fn balanced_accuracy(scores: &[f64], positives: &[bool], threshold: f64) -> f64 {
    let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &p) in scores.iter().zip(positives) {
        let predicted = s > threshold;
        if p {
            pos += 1;
            tp += predicted as usize;
        } else {
            neg += 1;
            tn += !predicted as usize;
        }
    }
    0.5 * (tp as f64 / pos as f64 + tn as f64 / neg as f64)
}

/// Candidate thresholds: `-inf`, the midpoints between consecutive distinct
/// sorted scores, and `+inf`.
pub fn threshold_candidates(scores: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut out = vec![f64::NEG_INFINITY];
    out.extend(sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    out.push(f64::INFINITY);
    out
}

/// Threshold maximizing training balanced accuracy; ties go to the smallest.
pub fn learn_threshold(scores: &[f64], positives: &[bool]) -> Result<ThresholdFit> {
    if scores.len() != positives.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores, {} labels",
            scores.len(),
            positives.len()
        )));
    }
    if !positives.iter().any(|&p| p) || positives.iter().all(|&p| p) {
        return Err(Error::DegenerateLabels(
            "threshold learning needs images of both classes".into(),
        ));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFiniteInput("image scores"));
    }
    let mut best = ThresholdFit {
        threshold: f64::NEG_INFINITY,
        balanced_accuracy: f64::NEG_INFINITY,
    };
    for t in threshold_candidates(scores) {
        let ba = balanced_accuracy(scores, positives, t);
        if ba > best.balanced_accuracy {
            best = ThresholdFit {
                threshold: t,
                balanced_accuracy: ba,
            };
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    /// Fraction of positive patches.
    Ratio,
    /// Largest 8-connected positive region, in patches.
    Region,
}

impl RuleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleKind::Ratio => "ratio",
            RuleKind::Region => "region",
        }
    }
}

/// Image is positive iff its score is strictly above `threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionRule {
    pub kind: RuleKind,
    pub positive_class: usize,
    pub threshold: f64,
}

impl DecisionRule {
    /// Ratio thresholds must lie in `[0, 1]`, region thresholds must be
    /// non-negative integers; `+-inf` are accepted as sweep sentinels.
    pub fn new(kind: RuleKind, positive_class: usize, threshold: f64) -> Result<Self> {
        let ok = if threshold.is_infinite() {
            true
        } else {
            match kind {
                RuleKind::Ratio => (0.0..=1.0).contains(&threshold),
                RuleKind::Region => threshold >= 0.0 && threshold.fract() == 0.0,
            }
        };
        if !ok {
            return Err(Error::InvalidRule(format!(
                "{} threshold {threshold} out of range",
                kind.as_str()
            )));
        }
        Ok(DecisionRule {
            kind,
            positive_class,
            threshold,
        })
    }

    /// Builds a rule from a swept threshold. Region midpoints are floored,
    /// which keeps the decision unchanged on integer scores; ratio
    /// midpoints already lie in `[0, 1]`.
    pub fn from_learned(kind: RuleKind, positive_class: usize, threshold: f64) -> Result<Self> {
        let t = match kind {
            RuleKind::Region if threshold.is_finite() => threshold.floor().max(0.0),
            _ => threshold,
        };
        DecisionRule::new(kind, positive_class, t)
    }

    pub fn score(&self, grid: &PatchGrid) -> Result<f64> {
        match self.kind {
            RuleKind::Ratio => score_ratio(grid, self.positive_class),
            RuleKind::Region => Ok(score_largest_region(grid, self.positive_class)? as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageDecision {
    pub positive: bool,
    pub score: f64,
}

pub fn decide_image(grid: &PatchGrid, rule: &DecisionRule) -> Result<ImageDecision> {
    let score = rule.score(grid)?;
    Ok(ImageDecision {
        positive: score > rule.threshold,
        score,
    })
}
