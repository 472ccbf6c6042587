//! Alternating block minimization of the joint analysis-synthesis objective.
//!
//! One outer iteration runs, per class, the code update, the class analysis
//! update and the class dictionary update, then the shared analysis update
//! and the shared dictionary update (or the two phases swapped, see
//! [`BlockOrder`]). Every block update is a closed-form least-squares solve;
//! the shared dictionary additionally goes through singular value
//! thresholding. Dictionaries are projected back onto unit-norm columns after
//! each of their updates.

mod cv;

pub use cv::{cross_validate, CvResult};

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    eval_objective, AlsfModel, BlockOrder, Codes, Hyperparams, TrainingSet,
};
use crate::numerics::{
    hstack, nuclear_norm, project_columns_unit, pseudoinverse, solve_lsq_left, solve_lsq_right,
    svt, vstack, Matrix,
};
use crate::par::{map_indices, ExecPolicy};

/// Conditioning ridge of the class dictionary solve.
pub const DICT_RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Codes(usize),
    ClassAnalysis(usize),
    ClassDict(usize),
    SharedAnalysis,
    SharedDict,
}

/// Subobjective of one block before and after its solve. For dictionaries
/// "after" is measured before the unit-column projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockStep {
    pub block: Block,
    pub before: f64,
    pub after: f64,
}

impl BlockStep {
    fn unchanged(block: Block, value: f64) -> BlockStep {
        BlockStep {
            block,
            before: value,
            after: value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIters,
    RelTol,
    /// The objective reached exactly zero; the relative change is undefined.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Objective at initialization followed by one value per iteration.
    pub objective_trace: Vec<f64>,
    /// Block steps of every iteration, in execution order.
    pub block_trace: Vec<Vec<BlockStep>>,
    pub iterations_run: usize,
    pub stop_reason: StopReason,
}

/// Initial dictionaries, analysis operators and codes.
///
/// Class dictionaries start from `k_per_class` data columns drawn without
/// replacement, the shared dictionary from the leading left singular vectors
/// of all data, and the analysis operators from the pseudoinverse of
/// `[D_1, ..., D_C, D_0]`.
pub fn init_model(data: &TrainingSet, hp: &Hyperparams) -> Result<(AlsfModel, Codes)> {
    hp.validate()?;
    for (c, n) in data.class_counts().into_iter().enumerate() {
        if n == 0 {
            return Err(Error::InsufficientData(format!("class {c} is empty")));
        }
    }
    let all = data.all();
    if all.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateInit("training data is identically zero".into()));
    }
    let d = data.dim();
    let k = hp.k_per_class;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);

    let mut class_dicts = Vec::with_capacity(data.num_classes());
    for (c, y) in data.per_class.iter().enumerate() {
        let n = y.ncols();
        let mut picks = rand::seq::index::sample(&mut rng, n, k.min(n)).into_vec();
        if n < k {
            warn!("class {c} has {n} samples but {k} atoms were requested; reusing samples");
            picks.extend((n..k).map(|i| i % n));
        }
        let mut dict = Matrix::zeros(d, k);
        for (j, &i) in picks.iter().enumerate() {
            dict.set_column(j, &y.column(i));
        }
        class_dicts.push(project_columns_unit(&dict)?);
    }

    let shared_dict = leading_left_singular_vectors(&all, hp.k_shared);

    let mut blocks: Vec<&Matrix> = class_dicts.iter().collect();
    blocks.push(&shared_dict);
    let stacked = pseudoinverse(&hstack(&blocks)?)?;
    let mut class_analysis = Vec::with_capacity(class_dicts.len());
    let mut at = 0;
    for dict in &class_dicts {
        class_analysis.push(stacked.rows(at, dict.ncols()).into_owned());
        at += dict.ncols();
    }
    let shared_analysis = stacked.rows(at, hp.k_shared).into_owned();

    let model = AlsfModel {
        class_dicts,
        shared_dict,
        class_analysis,
        shared_analysis,
        labels: data.labels.clone(),
    };
    let codes = Codes::from_analysis(&model, data);
    Ok((model, codes))
}

fn leading_left_singular_vectors(y: &Matrix, k: usize) -> Matrix {
    let d = y.nrows();
    let mut out = Matrix::zeros(d, k);
    if k == 0 {
        return out;
    }
    let svd = y.clone().svd(true, false);
    let u = svd.u.expect("svd computed with u");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    for (j, &i) in order.iter().take(k).enumerate() {
        out.set_column(j, &u.column(i));
    }
    out
}

fn weight_sqrt(w: f64) -> f64 {
    w.max(0.0).sqrt()
}

/// Subobjective of the code update for one class.
pub fn codes_subobjective(
    y: &Matrix,
    dict: &Matrix,
    analysis: &Matrix,
    shared_dict: &Matrix,
    shared_analysis: &Matrix,
    class_code: &Matrix,
    shared_code: &Matrix,
    hp: &Hyperparams,
) -> f64 {
    let rec = y - dict * class_code - shared_dict * shared_code;
    rec.norm_squared()
        + hp.tau * hp.lambda2 * (class_code - analysis * y).norm_squared()
        + hp.tau * hp.lambda3 * (shared_code - shared_analysis * y).norm_squared()
}

struct ClassView<'a> {
    y: &'a Matrix,
    complement: &'a Matrix,
    dict: &'a Matrix,
    analysis: &'a Matrix,
    class_code: &'a Matrix,
    shared_code: &'a Matrix,
}

struct SharedView<'a> {
    dict: &'a Matrix,
    analysis: &'a Matrix,
}

fn codes_step(
    view: &ClassView,
    shared: &SharedView,
    hp: &Hyperparams,
    c: usize,
) -> Result<(Matrix, Matrix, BlockStep)> {
    let y = view.y;
    let objective = |xc: &Matrix, x0: &Matrix| {
        codes_subobjective(y, view.dict, view.analysis, shared.dict, shared.analysis, xc, x0, hp)
    };
    let before = objective(view.class_code, view.shared_code);
    let k = view.dict.ncols();
    let k0 = shared.dict.ncols();
    let w2 = weight_sqrt(hp.tau * hp.lambda2);
    let w3 = weight_sqrt(hp.tau * hp.lambda3);
    let class_feat = view.analysis * y;
    let shared_feat = shared.analysis * y;

    let (xc, x0) = if hp.joint_code_solve && k0 > 0 {
        let mut g = Matrix::zeros(y.nrows() + k + k0, k + k0);
        g.view_mut((0, 0), (y.nrows(), k)).copy_from(view.dict);
        g.view_mut((0, k), (y.nrows(), k0)).copy_from(shared.dict);
        g.view_mut((y.nrows(), 0), (k, k)).fill_diagonal(w2);
        g.view_mut((y.nrows() + k, k), (k0, k0)).fill_diagonal(w3);
        let h = vstack(&[y, &(&class_feat * w2), &(&shared_feat * w3)])?;
        let x = solve_lsq_left(&g, &h, 0.0)?;
        (x.rows(0, k).into_owned(), x.rows(k, k0).into_owned())
    } else {
        let class_system = vstack(&[view.dict, &(Matrix::identity(k, k) * w2)])?;
        let shared_system = vstack(&[shared.dict, &(Matrix::identity(k0, k0) * w3)])?;
        let mut xc = view.class_code.clone();
        let mut x0 = view.shared_code.clone();
        for _ in 0..hp.code_sweeps {
            if k0 > 0 {
                let h = vstack(&[&(y - view.dict * &xc), &(&shared_feat * w3)])?;
                x0 = solve_lsq_left(&shared_system, &h, 0.0)?;
            }
            let h = vstack(&[&(y - shared.dict * &x0), &(&class_feat * w2)])?;
            xc = solve_lsq_left(&class_system, &h, 0.0)?;
        }
        (xc, x0)
    };
    let after = objective(&xc, &x0);
    Ok((xc, x0, BlockStep { block: Block::Codes(c), before, after }))
}

/// Subobjective of the class analysis update:
/// `(1/N_cbar) ||A Y_cbar||^2 + lambda2 ||X_cc - A Y_c||^2 + eta1 ||A||^2`.
pub fn class_analysis_subobjective(
    analysis: &Matrix,
    y: &Matrix,
    complement: &Matrix,
    class_code: &Matrix,
    hp: &Hyperparams,
) -> f64 {
    let suppression = if complement.ncols() > 0 {
        (analysis * complement).norm_squared() / complement.ncols() as f64
    } else {
        0.0
    };
    suppression
        + hp.lambda2 * (class_code - analysis * y).norm_squared()
        + hp.eta1 * analysis.norm_squared()
}

fn class_analysis_step(view: &ClassView, hp: &Hyperparams, c: usize) -> Result<(Matrix, BlockStep)> {
    let objective =
        |a: &Matrix| class_analysis_subobjective(a, view.y, view.complement, view.class_code, hp);
    let before = objective(view.analysis);
    let w2 = weight_sqrt(hp.lambda2);
    let k = view.analysis.nrows();
    let n_bar = view.complement.ncols();
    let (g, h) = if n_bar > 0 {
        let scale = (1.0 / n_bar as f64).sqrt();
        (
            hstack(&[&(view.complement * scale), &(view.y * w2)])?,
            hstack(&[&Matrix::zeros(k, n_bar), &(view.class_code * w2)])?,
        )
    } else {
        (view.y * w2, view.class_code * w2)
    };
    let a = solve_lsq_right(&g, &h, hp.eta1)?;
    let after = objective(&a);
    Ok((a, BlockStep { block: Block::ClassAnalysis(c), before, after }))
}

/// Subobjective of the class dictionary update:
/// `||(Y_c - D_0 X_0c) - D X_cc||^2 + DICT_RIDGE ||D||^2`.
pub fn class_dict_subobjective(dict: &Matrix, target: &Matrix, class_code: &Matrix) -> f64 {
    (target - dict * class_code).norm_squared() + DICT_RIDGE * dict.norm_squared()
}

/// Least-squares class dictionary before the feasibility projection.
fn class_dict_step(
    view: &ClassView,
    shared: &SharedView,
    c: usize,
) -> Result<(Matrix, BlockStep)> {
    let target = view.y - shared.dict * view.shared_code;
    let before = class_dict_subobjective(view.dict, &target, view.class_code);
    if view.class_code.iter().all(|&v| v == 0.0) {
        debug!("class {c}: all-zero codes, keeping dictionary");
        return Ok((view.dict.clone(), BlockStep::unchanged(Block::ClassDict(c), before)));
    }
    let dict = solve_lsq_right(view.class_code, &target, DICT_RIDGE)?;
    let after = class_dict_subobjective(&dict, &target, view.class_code);
    Ok((dict, BlockStep { block: Block::ClassDict(c), before, after }))
}

/// Weight of the mean-deviation blocks in the shared analysis system,
/// `lambda1 / lambda3`.
fn mean_ratio(hp: &Hyperparams) -> Result<f64> {
    if hp.lambda1 == 0.0 {
        Ok(0.0)
    } else if hp.lambda3 == 0.0 {
        Err(Error::WeightError(
            "lambda3 = 0 with lambda1 > 0 leaves the shared analysis system undefined".into(),
        ))
    } else {
        Ok(hp.lambda1 / hp.lambda3)
    }
}

/// Subobjective of the shared analysis update:
/// `sum_c ||A Y_c - X_0c||^2 + (lambda1/lambda3) ||A (Y_c - Y^m)||^2 + ridge_a0 ||A||^2`.
pub fn shared_analysis_subobjective(
    analysis: &Matrix,
    data: &TrainingSet,
    shared_codes: &[Matrix],
    hp: &Hyperparams,
) -> Result<f64> {
    let ratio = mean_ratio(hp)?;
    let mut total = hp.ridge_a0 * analysis.norm_squared();
    for (c, y) in data.per_class.iter().enumerate() {
        total += (analysis * y - &shared_codes[c]).norm_squared();
        if ratio > 0.0 {
            total += ratio * (analysis * data.centered(c)).norm_squared();
        }
    }
    Ok(total)
}

/// Closed-form update of `A_0` from the stacked system over all classes.
pub fn update_analysis_shared(
    model: &AlsfModel,
    codes: &Codes,
    data: &TrainingSet,
    hp: &Hyperparams,
) -> Result<(Matrix, BlockStep)> {
    codes.check(model, data)?;
    let ratio = mean_ratio(hp)?;
    let before =
        shared_analysis_subobjective(&model.shared_analysis, data, &codes.shared_codes, hp)?;
    let k0 = model.shared_atoms();
    if k0 == 0 {
        return Ok((
            model.shared_analysis.clone(),
            BlockStep::unchanged(Block::SharedAnalysis, before),
        ));
    }
    let w = ratio.sqrt();
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for (c, y) in data.per_class.iter().enumerate() {
        inputs.push(y.clone());
        targets.push(codes.shared_codes[c].clone());
        if w > 0.0 {
            inputs.push(data.centered(c) * w);
            targets.push(Matrix::zeros(k0, y.ncols()));
        }
    }
    let g = hstack(&inputs.iter().collect::<Vec<_>>())?;
    let h = hstack(&targets.iter().collect::<Vec<_>>())?;
    let a0 = solve_lsq_right(&g, &h, hp.ridge_a0)?;
    let after = shared_analysis_subobjective(&a0, data, &codes.shared_codes, hp)?;
    Ok((a0, BlockStep { block: Block::SharedAnalysis, before, after }))
}

/// Least-squares target of the shared dictionary step:
/// `M = [Y_c - D_c X_cc]_c * pinv([X_0c]_c)`.
pub fn shared_dict_target(model: &AlsfModel, codes: &Codes, data: &TrainingSet) -> Result<Matrix> {
    codes.check(model, data)?;
    let residuals: Vec<Matrix> = (0..model.num_classes())
        .map(|c| &data.per_class[c] - &model.class_dicts[c] * &codes.class_codes[c])
        .collect();
    let r = hstack(&residuals.iter().collect::<Vec<_>>())?;
    let x0 = hstack(&codes.shared_codes.iter().collect::<Vec<_>>())?;
    if x0.iter().all(|&v| v == 0.0) {
        return Err(Error::RankError("shared codes are identically zero".into()));
    }
    Ok(r * pseudoinverse(&x0)?)
}

/// `||M - D||^2 + eta ||D||_*`, the proximal problem solved for `D_0`.
pub fn shared_dict_subobjective(dict: &Matrix, target: &Matrix, eta: f64) -> f64 {
    (target - dict).norm_squared() + eta * nuclear_norm(dict)
}

/// Shared dictionary step: least-squares target followed by singular value
/// thresholding at `eta / 2` (the objective has no 1/2 factor) and the
/// unit-column projection.
pub fn update_dict_shared(
    model: &AlsfModel,
    codes: &Codes,
    data: &TrainingSet,
    hp: &Hyperparams,
) -> Result<(Matrix, BlockStep)> {
    let (dict, step) = update_dict_shared_unprojected(model, codes, data, hp)?;
    Ok((project_columns_unit(&dict)?, step))
}

/// The thresholded shared dictionary before the unit-column projection.
pub fn update_dict_shared_unprojected(
    model: &AlsfModel,
    codes: &Codes,
    data: &TrainingSet,
    hp: &Hyperparams,
) -> Result<(Matrix, BlockStep)> {
    if model.shared_atoms() == 0 {
        return Ok((model.shared_dict.clone(), BlockStep::unchanged(Block::SharedDict, 0.0)));
    }
    let target = shared_dict_target(model, codes, data)?;
    let before = shared_dict_subobjective(&model.shared_dict, &target, hp.eta);
    let dict = if hp.eta > 0.0 {
        svt(&target, hp.eta / 2.0)?
    } else {
        target.clone()
    };
    let after = shared_dict_subobjective(&dict, &target, hp.eta);
    Ok((dict, BlockStep { block: Block::SharedDict, before, after }))
}

fn class_view<'a>(
    model: &'a AlsfModel,
    codes: &'a Codes,
    data: &'a TrainingSet,
    complement: &'a Matrix,
    c: usize,
) -> ClassView<'a> {
    ClassView {
        y: &data.per_class[c],
        complement,
        dict: &model.class_dicts[c],
        analysis: &model.class_analysis[c],
        class_code: &codes.class_codes[c],
        shared_code: &codes.shared_codes[c],
    }
}

fn shared_view(model: &AlsfModel) -> SharedView<'_> {
    SharedView {
        dict: &model.shared_dict,
        analysis: &model.shared_analysis,
    }
}

fn check_class(model: &AlsfModel, c: usize) -> Result<()> {
    if c < model.num_classes() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!("class index {c} out of range")))
    }
}

/// Alternating closed-form update of `X_cc` and `X_0c` for class `c`.
pub fn update_codes(
    model: &AlsfModel,
    codes: &Codes,
    data: &TrainingSet,
    hp: &Hyperparams,
    c: usize,
) -> Result<(Matrix, Matrix, BlockStep)> {
    codes.check(model, data)?;
    check_class(model, c)?;
    let complement = Matrix::zeros(data.dim(), 0);
    codes_step(&class_view(model, codes, data, &complement, c), &shared_view(model), hp, c)
}

pub fn update_analysis_class(
    model: &AlsfModel,
    codes: &Codes,
    data: &TrainingSet,
    hp: &Hyperparams,
    c: usize,
) -> Result<(Matrix, BlockStep)> {
    codes.check(model, data)?;
    check_class(model, c)?;
    let complement = data.complement(c);
    class_analysis_step(&class_view(model, codes, data, &complement, c), hp, c)
}

/// Class dictionary step; keeps the previous dictionary when `X_cc == 0`.
pub fn update_dict_class(
    model: &AlsfModel,
    codes: &Codes,
    data: &TrainingSet,
    c: usize,
) -> Result<(Matrix, BlockStep)> {
    let (dict, step) = update_dict_class_unprojected(model, codes, data, c)?;
    Ok((project_columns_unit(&dict)?, step))
}

/// The least-squares solution of the class dictionary step, before the
/// unit-column projection.
pub fn update_dict_class_unprojected(
    model: &AlsfModel,
    codes: &Codes,
    data: &TrainingSet,
    c: usize,
) -> Result<(Matrix, BlockStep)> {
    codes.check(model, data)?;
    check_class(model, c)?;
    let complement = Matrix::zeros(data.dim(), 0);
    class_dict_step(&class_view(model, codes, data, &complement, c), &shared_view(model), c)
}

struct ClassUpdate {
    dict: Matrix,
    analysis: Matrix,
    class_code: Matrix,
    shared_code: Matrix,
    steps: [BlockStep; 3],
}

fn class_phase(
    model: &mut AlsfModel,
    codes: &mut Codes,
    data: &TrainingSet,
    complements: &[Matrix],
    hp: &Hyperparams,
    policy: ExecPolicy,
    steps: &mut Vec<BlockStep>,
) -> Result<()> {
    let snapshot_model: &AlsfModel = model;
    let snapshot_codes: &Codes = codes;
    let updates = map_indices(policy, data.num_classes(), |c| -> Result<ClassUpdate> {
        let shared = shared_view(snapshot_model);
        let view = class_view(snapshot_model, snapshot_codes, data, &complements[c], c);
        let (class_code, shared_code, s_codes) = codes_step(&view, &shared, hp, c)?;
        let view = ClassView {
            class_code: &class_code,
            shared_code: &shared_code,
            ..view
        };
        let (analysis, s_analysis) = class_analysis_step(&view, hp, c)?;
        let (dict, s_dict) = class_dict_step(&view, &shared, c)?;
        Ok(ClassUpdate {
            dict: project_columns_unit(&dict)?,
            analysis,
            class_code,
            shared_code,
            steps: [s_codes, s_analysis, s_dict],
        })
    });
    for (c, update) in updates.into_iter().enumerate() {
        let u = update?;
        model.class_dicts[c] = u.dict;
        model.class_analysis[c] = u.analysis;
        codes.class_codes[c] = u.class_code;
        codes.shared_codes[c] = u.shared_code;
        steps.extend(u.steps);
    }
    Ok(())
}

fn shared_phase(
    model: &mut AlsfModel,
    codes: &Codes,
    data: &TrainingSet,
    hp: &Hyperparams,
    steps: &mut Vec<BlockStep>,
) -> Result<()> {
    if model.shared_atoms() == 0 {
        return Ok(());
    }
    let (a0, step) = update_analysis_shared(model, codes, data, hp)?;
    model.shared_analysis = a0;
    steps.push(step);
    match update_dict_shared(model, codes, data, hp) {
        Ok((d0, step)) => {
            model.shared_dict = d0;
            steps.push(step);
        }
        Err(Error::RankError(msg)) => {
            debug!("keeping shared dictionary: {msg}");
            let value = hp.eta * nuclear_norm(&model.shared_dict);
            steps.push(BlockStep::unchanged(Block::SharedDict, value));
        }
        Err(e) => return Err(e),
    }
    Ok(())
}

/// Trains with the default (parallel) execution policy.
pub fn train(data: &TrainingSet, hp: &Hyperparams) -> Result<(AlsfModel, TrainReport)> {
    train_with(data, hp, ExecPolicy::default())
}

/// Trains a model. Per-class updates inside one phase only read their own
/// class blocks and the shared blocks, so `policy` does not change results.
pub fn train_with(
    data: &TrainingSet,
    hp: &Hyperparams,
    policy: ExecPolicy,
) -> Result<(AlsfModel, TrainReport)> {
    hp.validate()?;
    if model_has_shared(hp) {
        mean_ratio(hp)?;
    }
    let (mut model, mut codes) = init_model(data, hp)?;
    let complements: Vec<Matrix> = (0..data.num_classes()).map(|c| data.complement(c)).collect();

    let initial = eval_objective(&model, &codes, data, hp)?;
    if !initial.is_finite() {
        return Err(Error::Degenerate(format!("initial objective is {initial}")));
    }
    let mut trace = vec![initial];
    let mut block_trace = Vec::new();
    let mut stop_reason = StopReason::MaxIters;

    for iter in 0..hp.max_iters {
        let mut steps = Vec::new();
        match hp.block_order {
            BlockOrder::ClassFirst => {
                class_phase(&mut model, &mut codes, data, &complements, hp, policy, &mut steps)?;
                shared_phase(&mut model, &codes, data, hp, &mut steps)?;
            }
            BlockOrder::SharedFirst => {
                shared_phase(&mut model, &codes, data, hp, &mut steps)?;
                class_phase(&mut model, &mut codes, data, &complements, hp, policy, &mut steps)?;
            }
        }
        block_trace.push(steps);

        let value = eval_objective(&model, &codes, data, hp)?;
        if !value.is_finite() {
            return Err(Error::Degenerate(format!(
                "objective became {value} at iteration {}",
                iter + 1
            )));
        }
        let prev = *trace.last().expect("trace starts with the initial value");
        trace.push(value);
        debug!("iteration {}: objective {value:.6e}", iter + 1);
        if prev == 0.0 {
            stop_reason = StopReason::Degenerate;
            break;
        }
        if ((prev - value) / prev).abs() < hp.rel_tol {
            stop_reason = StopReason::RelTol;
            break;
        }
    }
    model.validate()?;
    let iterations_run = trace.len() - 1;
    Ok((
        model,
        TrainReport {
            objective_trace: trace,
            block_trace,
            iterations_run,
            stop_reason,
        },
    ))
}

fn model_has_shared(hp: &Hyperparams) -> bool {
    hp.k_shared > 0
}
