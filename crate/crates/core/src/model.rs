//! Model, data and code containers plus exact evaluation of the training
//! objective and of the per-class classification residual.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{hstack, nuclear_norm, Matrix, Vector};

/// Slack allowed on the unit-column constraint after floating-point rescaling.
pub const COLUMN_NORM_SLACK: f64 = 1e-9;

/// Learned analysis and synthesis blocks.
///
/// `class_dicts[c]` is `d x k_c`, `class_analysis[c]` is `k_c x d`,
/// `shared_dict` is `d x k_0` and `shared_analysis` is `k_0 x d`. With
/// `k_0 == 0` the shared blocks are empty and the model is a plain
/// class-specific analysis-synthesis pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AlsfModel {
    pub class_dicts: Vec<Matrix>,
    pub shared_dict: Matrix,
    pub class_analysis: Vec<Matrix>,
    pub shared_analysis: Matrix,
    pub labels: Vec<String>,
}

impl AlsfModel {
    pub fn num_classes(&self) -> usize {
        self.class_dicts.len()
    }

    pub fn dim(&self) -> usize {
        self.shared_dict.nrows()
    }

    pub fn class_atoms(&self) -> Vec<usize> {
        self.class_dicts.iter().map(|d| d.ncols()).collect()
    }

    pub fn shared_atoms(&self) -> usize {
        self.shared_dict.ncols()
    }

    /// Checks shapes, finiteness and the unit-column constraint.
    pub fn validate(&self) -> Result<()> {
        let c = self.class_dicts.len();
        if c == 0 {
            return Err(Error::DimensionMismatch("model has no classes".into()));
        }
        if self.class_analysis.len() != c || self.labels.len() != c {
            return Err(Error::DimensionMismatch(format!(
                "{} dictionaries, {} analysis blocks, {} labels",
                c,
                self.class_analysis.len(),
                self.labels.len()
            )));
        }
        let d = self.dim();
        let k0 = self.shared_atoms();
        if self.shared_analysis.shape() != (k0, d) {
            return Err(Error::DimensionMismatch(format!(
                "shared analysis is {:?}, expected ({k0}, {d})",
                self.shared_analysis.shape()
            )));
        }
        for (i, (dict, ana)) in self.class_dicts.iter().zip(&self.class_analysis).enumerate() {
            let k = dict.ncols();
            if dict.nrows() != d || k == 0 || ana.shape() != (k, d) {
                return Err(Error::DimensionMismatch(format!(
                    "class {i}: dictionary {:?}, analysis {:?}, d = {d}",
                    dict.shape(),
                    ana.shape()
                )));
            }
        }
        let blocks = self
            .class_dicts
            .iter()
            .chain(&self.class_analysis)
            .chain([&self.shared_dict, &self.shared_analysis]);
        for b in blocks {
            if !b.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteInput("model block"));
            }
        }
        for dict in self.class_dicts.iter().chain([&self.shared_dict]) {
            if dict.column_iter().any(|col| col.norm() > 1.0 + COLUMN_NORM_SLACK) {
                return Err(Error::Degenerate("dictionary column norm exceeds 1".into()));
            }
        }
        Ok(())
    }

    /// The stacked analysis operator `[A_1; ...; A_C; A_0]`.
    pub fn stacked_analysis(&self) -> Matrix {
        let blocks: Vec<&Matrix> = self
            .class_analysis
            .iter()
            .chain([&self.shared_analysis])
            .collect();
        crate::numerics::vstack(&blocks).expect("analysis blocks share d")
    }

    fn check_class(&self, c: usize) -> Result<()> {
        if c < self.num_classes() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "class index {c} out of range for {} classes",
                self.num_classes()
            )))
        }
    }

    fn check_signal(&self, len: usize) -> Result<()> {
        if len == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "signal length {len}, model dimension {}",
                self.dim()
            )))
        }
    }
}

/// Per-class patch matrices and the global mean column.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub per_class: Vec<Matrix>,
    pub mean: Vector,
    pub labels: Vec<String>,
}

impl TrainingSet {
    pub fn new(per_class: Vec<Matrix>, labels: Vec<String>) -> Result<TrainingSet> {
        if per_class.is_empty() {
            return Err(Error::InsufficientData("no classes".into()));
        }
        if labels.len() != per_class.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} classes but {} labels",
                per_class.len(),
                labels.len()
            )));
        }
        let d = per_class[0].nrows();
        if d == 0 {
            return Err(Error::DimensionMismatch("feature dimension is 0".into()));
        }
        for (c, y) in per_class.iter().enumerate() {
            if y.nrows() != d {
                return Err(Error::DimensionMismatch(format!(
                    "class {c} has {} rows, expected {d}",
                    y.nrows()
                )));
            }
            if y.ncols() == 0 {
                return Err(Error::EmptyClass(c));
            }
            crate::numerics::ensure_finite(y, "training data")?;
        }
        let total: usize = per_class.iter().map(|y| y.ncols()).sum();
        let mut sum = Vector::zeros(d);
        for y in &per_class {
            for col in y.column_iter() {
                sum += col;
            }
        }
        let mean = sum / total as f64;
        Ok(TrainingSet {
            per_class,
            mean,
            labels,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.per_class.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.per_class.iter().map(|y| y.ncols()).collect()
    }

    pub fn total(&self) -> usize {
        self.class_counts().iter().sum()
    }

    /// All classes side by side, in class order.
    pub fn all(&self) -> Matrix {
        let blocks: Vec<&Matrix> = self.per_class.iter().collect();
        hstack(&blocks).expect("classes share d")
    }

    /// Every class except `c`, side by side. Empty (`d x 0`) when `C == 1`.
    pub fn complement(&self, c: usize) -> Matrix {
        let blocks: Vec<&Matrix> = self
            .per_class
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != c)
            .map(|(_, y)| y)
            .collect();
        if blocks.is_empty() {
            return Matrix::zeros(self.dim(), 0);
        }
        hstack(&blocks).expect("classes share d")
    }

    pub fn complement_count(&self, c: usize) -> usize {
        self.total() - self.per_class[c].ncols()
    }

    /// `Y_c - Y^m`.
    pub fn centered(&self, c: usize) -> Matrix {
        let mut y = self.per_class[c].clone();
        for mut col in y.column_iter_mut() {
            col -= &self.mean;
        }
        y
    }

    fn check_class(&self, c: usize) -> Result<()> {
        if c < self.num_classes() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!("class index {c} out of range")))
        }
    }
}

/// Coefficient blocks `X_cc` (`k_c x N_c`) and `X_0c` (`k_0 x N_c`).
#[derive(Debug, Clone, PartialEq)]
pub struct Codes {
    pub class_codes: Vec<Matrix>,
    pub shared_codes: Vec<Matrix>,
}

impl Codes {
    /// Codes consistent with the analysis operators: `X_cc = A_c Y_c`,
    /// `X_0c = A_0 Y_c`.
    pub fn from_analysis(model: &AlsfModel, data: &TrainingSet) -> Codes {
        let class_codes = model
            .class_analysis
            .iter()
            .zip(&data.per_class)
            .map(|(a, y)| a * y)
            .collect();
        let shared_codes = data
            .per_class
            .iter()
            .map(|y| &model.shared_analysis * y)
            .collect();
        Codes {
            class_codes,
            shared_codes,
        }
    }

    pub fn check(&self, model: &AlsfModel, data: &TrainingSet) -> Result<()> {
        let c = model.num_classes();
        if data.num_classes() != c || self.class_codes.len() != c || self.shared_codes.len() != c
        {
            return Err(Error::DimensionMismatch("class counts differ".into()));
        }
        if data.dim() != model.dim() {
            return Err(Error::DimensionMismatch(format!(
                "data dimension {}, model dimension {}",
                data.dim(),
                model.dim()
            )));
        }
        for i in 0..c {
            let n = data.per_class[i].ncols();
            if self.class_codes[i].shape() != (model.class_dicts[i].ncols(), n)
                || self.shared_codes[i].shape() != (model.shared_atoms(), n)
            {
                return Err(Error::DimensionMismatch(format!("code shapes for class {i}")));
            }
        }
        Ok(())
    }
}

/// How many coefficient refinement passes, the update order and the scalar
/// weights of the training objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// Nuclear-norm weight on the shared dictionary.
    pub eta: f64,
    /// Ridge on each class analysis operator.
    pub eta1: f64,
    /// Balance between the analysis and synthesis parts.
    pub tau: f64,
    /// Weight pulling shared features of every class towards the mean.
    pub lambda1: f64,
    /// Coupling between class codes and class analysis features.
    pub lambda2: f64,
    /// Coupling between shared codes and shared analysis features.
    pub lambda3: f64,
    pub k_per_class: usize,
    pub k_shared: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub code_sweeps: usize,
    /// Solve both code blocks of a class jointly instead of alternating.
    pub joint_code_solve: bool,
    pub ridge_a0: f64,
    pub block_order: BlockOrder,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            eta: 0.1,
            eta1: 1e-3,
            tau: 1.0,
            lambda1: 1e-2,
            lambda2: 1e-2,
            lambda3: 1e-2,
            k_per_class: 400,
            k_shared: 100,
            max_iters: 30,
            rel_tol: 1e-4,
            code_sweeps: 1,
            joint_code_solve: false,
            ridge_a0: 1e-6,
            block_order: BlockOrder::ClassFirst,
            seed: 0,
        }
    }
}

/// Order of the two phases inside one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BlockOrder {
    /// Per-class blocks (codes, analysis, dictionary), then the shared blocks.
    #[default]
    ClassFirst,
    /// Shared blocks first, then the per-class blocks.
    SharedFirst,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("eta", self.eta),
            ("eta1", self.eta1),
            ("tau", self.tau),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("ridge_a0", self.ridge_a0),
        ];
        for (name, w) in weights {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidHyperparams(format!("{name} must be >= 0, got {w}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidHyperparams("max_iters must be >= 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidHyperparams("rel_tol must be > 0".into()));
        }
        if self.code_sweeps == 0 {
            return Err(Error::InvalidHyperparams("code_sweeps must be >= 1".into()));
        }
        if self.k_per_class == 0 {
            return Err(Error::InvalidHyperparams("k_per_class must be >= 1".into()));
        }
        Ok(())
    }
}

/// The unweighted pieces of the training objective, summed over classes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveTerms {
    /// `sum_c ||Y_c - D_c X_cc - D_0 X_0c||^2`
    pub reconstruction: f64,
    /// `sum_c (1/N_cbar) ||A_c Y_cbar||^2`
    pub suppression: f64,
    /// `sum_c ||A_0 (Y_c - Y^m)||^2`
    pub mean_alignment: f64,
    /// `sum_c ||X_cc - A_c Y_c||^2`
    pub class_coupling: f64,
    /// `sum_c ||X_0c - A_0 Y_c||^2`
    pub shared_coupling: f64,
    /// `||D_0||_*`, counted once.
    pub nuclear: f64,
}

impl ObjectiveTerms {
    pub fn total(&self, hp: &Hyperparams) -> f64 {
        self.reconstruction
            + hp.eta * self.nuclear
            + hp.tau * (self.suppression + hp.lambda1 * self.mean_alignment)
            + hp.tau * hp.lambda2 * self.class_coupling
            + hp.tau * hp.lambda3 * self.shared_coupling
    }
}

fn sq(m: &Matrix) -> f64 {
    m.norm_squared()
}

pub(crate) fn reconstruction_residual(
    model: &AlsfModel,
    codes: &Codes,
    data: &TrainingSet,
    c: usize,
) -> Matrix {
    &data.per_class[c]
        - &model.class_dicts[c] * &codes.class_codes[c]
        - &model.shared_dict * &codes.shared_codes[c]
}

fn suppression_term(model: &AlsfModel, data: &TrainingSet, c: usize) -> f64 {
    let n_bar = data.complement_count(c);
    if n_bar == 0 {
        return 0.0;
    }
    sq(&(&model.class_analysis[c] * data.complement(c))) / n_bar as f64
}

/// Per-class synthesis cost `||Y_c - D_c X_cc - D_0 X_0c||^2 + eta ||D_0||_*`.
pub fn eval_f(
    model: &AlsfModel,
    codes: &Codes,
    data: &TrainingSet,
    c: usize,
    eta: f64,
) -> Result<f64> {
    codes.check(model, data)?;
    model.check_class(c)?;
    let rec = sq(&reconstruction_residual(model, codes, data, c));
    let nuc = if eta != 0.0 {
        eta * nuclear_norm(&model.shared_dict)
    } else {
        0.0
    };
    Ok(rec + nuc)
}

/// Per-class analysis cost
/// `(1/N_cbar) ||A_c Y_cbar||^2 + lambda1 ||A_0 (Y_c - Y^m)||^2`.
///
/// With a single class the complement is empty and the first term is 0.
pub fn eval_g(model: &AlsfModel, data: &TrainingSet, c: usize, lambda1: f64) -> Result<f64> {
    model.check_class(c)?;
    data.check_class(c)?;
    if data.dim() != model.dim() || data.num_classes() != model.num_classes() {
        return Err(Error::DimensionMismatch("model and data disagree".into()));
    }
    let align = sq(&(&model.shared_analysis * data.centered(c)));
    Ok(suppression_term(model, data, c) + lambda1 * align)
}

pub fn eval_terms(model: &AlsfModel, codes: &Codes, data: &TrainingSet) -> Result<ObjectiveTerms> {
    codes.check(model, data)?;
    let mut t = ObjectiveTerms {
        nuclear: nuclear_norm(&model.shared_dict),
        ..Default::default()
    };
    for c in 0..model.num_classes() {
        let y = &data.per_class[c];
        t.reconstruction += sq(&reconstruction_residual(model, codes, data, c));
        t.suppression += suppression_term(model, data, c);
        t.mean_alignment += sq(&(&model.shared_analysis * data.centered(c)));
        t.class_coupling += sq(&(&codes.class_codes[c] - &model.class_analysis[c] * y));
        t.shared_coupling += sq(&(&codes.shared_codes[c] - &model.shared_analysis * y));
    }
    Ok(t)
}

/// Full training objective, with the nuclear norm of `D_0` counted once.
pub fn eval_objective(
    model: &AlsfModel,
    codes: &Codes,
    data: &TrainingSet,
    hp: &Hyperparams,
) -> Result<f64> {
    Ok(eval_terms(model, codes, data)?.total(hp))
}

/// Analysis features of one signal, split per block.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeSlices {
    pub class: Vec<Vector>,
    pub shared: Vector,
}

/// `A y` split into the class slices and the shared slice. Matrix-vector
/// products only.
pub fn extract_code(y: &Vector, model: &AlsfModel) -> Result<CodeSlices> {
    model.check_signal(y.len())?;
    Ok(CodeSlices {
        class: model.class_analysis.iter().map(|a| a * y).collect(),
        shared: &model.shared_analysis * y,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualMode {
    /// `||y - D_c A_c y - D_0 A_0 y||^2`
    #[default]
    SharedSubtracted,
    /// `||y - D_c A_c y||^2`
    Plain,
}

pub fn class_residual(y: &Vector, model: &AlsfModel, c: usize, mode: ResidualMode) -> Result<f64> {
    model.check_class(c)?;
    model.check_signal(y.len())?;
    let mut r = y - &model.class_dicts[c] * (&model.class_analysis[c] * y);
    if mode == ResidualMode::SharedSubtracted && model.shared_atoms() > 0 {
        r -= &model.shared_dict * (&model.shared_analysis * y);
    }
    Ok(r.norm_squared())
}

/// Residuals of every column of `batch` against every class, as a
/// `C x n` matrix. Same arithmetic as [`class_residual`], batched.
pub fn class_residuals(batch: &Matrix, model: &AlsfModel, mode: ResidualMode) -> Result<Matrix> {
    model.check_signal(batch.nrows())?;
    let n = batch.ncols();
    let base = if mode == ResidualMode::SharedSubtracted && model.shared_atoms() > 0 {
        batch - &model.shared_dict * (&model.shared_analysis * batch)
    } else {
        batch.clone()
    };
    let mut out = Matrix::zeros(model.num_classes(), n);
    for (c, (dict, ana)) in model.class_dicts.iter().zip(&model.class_analysis).enumerate() {
        let r = &base - dict * (ana * batch);
        for (j, col) in r.column_iter().enumerate() {
            out[(c, j)] = col.norm_squared();
        }
    }
    Ok(out)
}
