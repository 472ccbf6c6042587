//! Reference implementations used as test oracles. Everything here is
//! written from the defining formulas with plain loops or direct matrix
//! products, without calling the crate's solvers.

#![allow(dead_code)]

use alsf::model::{AlsfModel, Codes, Hyperparams, TrainingSet};
use alsf::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn unit_columns(mut m: Matrix) -> Matrix {
    for mut col in m.column_iter_mut() {
        let n = col.norm();
        if n > 1.0 {
            col /= n;
        }
    }
    m
}

/// Random feasible model, random codes and random data.
pub fn random_instance(
    d: usize,
    k: usize,
    k0: usize,
    n: usize,
    classes: usize,
    seed: u64,
) -> (AlsfModel, Codes, TrainingSet) {
    let mut r = rng(seed);
    let per_class: Vec<Matrix> = (0..classes).map(|_| uniform(d, n, &mut r)).collect();
    let labels: Vec<String> = (0..classes).map(|c| format!("c{c}")).collect();
    let data = TrainingSet::new(per_class, labels.clone()).unwrap();
    let model = AlsfModel {
        class_dicts: (0..classes).map(|_| unit_columns(uniform(d, k, &mut r))).collect(),
        shared_dict: unit_columns(uniform(d, k0, &mut r)),
        class_analysis: (0..classes).map(|_| uniform(k, d, &mut r)).collect(),
        shared_analysis: uniform(k0, d, &mut r),
        labels,
    };
    let codes = Codes {
        class_codes: (0..classes).map(|_| uniform(k, n, &mut r)).collect(),
        shared_codes: (0..classes).map(|_| uniform(k0, n, &mut r)).collect(),
    };
    (model, codes, data)
}

/// `||a - b||_F / max(||a||_F, ||b||_F)`; 0 when both vanish.
pub fn rel_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

pub fn rel_scalar(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

// ---------------------------------------------------------------------------
// Singular values by one-sided Jacobi rotations.

/// Singular values in descending order, from cyclic one-sided Jacobi
/// orthogonalization of the columns.
pub fn jacobi_singular_values(m: &Matrix) -> Vec<f64> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    // Work on the orientation with fewer columns.
    let (r, c, get): (usize, usize, Box<dyn Fn(usize, usize) -> f64>) = if cols <= rows {
        (rows, cols, Box::new(|i, j| m[(i, j)]))
    } else {
        (cols, rows, Box::new(|i, j| m[(j, i)]))
    };
    let mut a: Vec<Vec<f64>> = (0..c).map(|j| (0..r).map(|i| get(i, j)).collect()).collect();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..c {
            for q in p + 1..c {
                let alpha: f64 = a[p].iter().map(|v| v * v).sum();
                let beta: f64 = a[q].iter().map(|v| v * v).sum();
                let gamma: f64 = a[p].iter().zip(&a[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for i in 0..r {
                    let (x, y) = (a[p][i], a[q][i]);
                    a[p][i] = cs * x - sn * y;
                    a[q][i] = sn * x + cs * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut s: Vec<f64> = a.iter().map(|col| col.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

pub fn jacobi_nuclear_norm(m: &Matrix) -> f64 {
    jacobi_singular_values(m).iter().sum()
}

// ---------------------------------------------------------------------------
// Objective terms written out from their definitions.

/// Columns of every class except `c`, concatenated in class order.
pub fn complement_of(data: &TrainingSet, c: usize) -> Matrix {
    let d = data.per_class[0].nrows();
    let cols: Vec<_> = data
        .per_class
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != c)
        .flat_map(|(_, y)| y.column_iter().map(|col| col.into_owned()).collect::<Vec<_>>())
        .collect();
    if cols.is_empty() {
        Matrix::zeros(d, 0)
    } else {
        Matrix::from_columns(&cols)
    }
}

/// Mean of every training column, by explicit summation.
pub fn global_mean(data: &TrainingSet) -> Vec<f64> {
    let d = data.per_class[0].nrows();
    let mut sum = vec![0.0; d];
    let mut n = 0usize;
    for y in &data.per_class {
        for j in 0..y.ncols() {
            for i in 0..d {
                sum[i] += y[(i, j)];
            }
            n += 1;
        }
    }
    sum.iter().map(|s| s / n as f64).collect()
}

pub fn sq(m: &Matrix) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Unweighted terms: reconstruction, suppression, mean alignment, class
/// coupling, shared coupling, nuclear norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Terms {
    pub reconstruction: f64,
    pub suppression: f64,
    pub mean_alignment: f64,
    pub class_coupling: f64,
    pub shared_coupling: f64,
    pub nuclear: f64,
}

pub fn direct_terms(model: &AlsfModel, codes: &Codes, data: &TrainingSet) -> Terms {
    let mean = global_mean(data);
    let mut t = Terms {
        reconstruction: 0.0,
        suppression: 0.0,
        mean_alignment: 0.0,
        class_coupling: 0.0,
        shared_coupling: 0.0,
        nuclear: jacobi_nuclear_norm(&model.shared_dict),
    };
    for (c, y) in data.per_class.iter().enumerate() {
        let dc = &model.class_dicts[c];
        let ac = &model.class_analysis[c];
        let xcc = &codes.class_codes[c];
        let x0c = &codes.shared_codes[c];
        let rec = y - dc * xcc - &model.shared_dict * x0c;
        t.reconstruction += sq(&rec);
        let comp = complement_of(data, c);
        if comp.ncols() > 0 {
            t.suppression += sq(&(ac * &comp)) / comp.ncols() as f64;
        }
        let centered = Matrix::from_fn(y.nrows(), y.ncols(), |i, j| y[(i, j)] - mean[i]);
        t.mean_alignment += sq(&(&model.shared_analysis * centered));
        t.class_coupling += sq(&(xcc - ac * y));
        t.shared_coupling += sq(&(x0c - &model.shared_analysis * y));
    }
    t
}

pub fn direct_objective(model: &AlsfModel, codes: &Codes, data: &TrainingSet, hp: &Hyperparams) -> f64 {
    let t = direct_terms(model, codes, data);
    t.reconstruction
        + hp.eta * t.nuclear
        + hp.tau * t.suppression
        + hp.tau * hp.lambda1 * t.mean_alignment
        + hp.tau * hp.lambda2 * t.class_coupling
        + hp.tau * hp.lambda3 * t.shared_coupling
}

/// The basic joint model without shared blocks: per class, reconstruction
/// `||Y_c - D_c X_cc||^2`, suppression `(1/N_cbar) ||A_c Y_cbar||^2` and
/// coupling `||X_cc - A_c Y_c||^2`, evaluated entry by entry.
pub fn baseline_terms(model: &AlsfModel, codes: &Codes, data: &TrainingSet) -> (f64, f64, f64) {
    let (mut rec, mut supp, mut coup) = (0.0, 0.0, 0.0);
    for (c, y) in data.per_class.iter().enumerate() {
        let (d, n) = y.shape();
        let dc = &model.class_dicts[c];
        let ac = &model.class_analysis[c];
        let x = &codes.class_codes[c];
        let k = dc.ncols();
        for j in 0..n {
            for i in 0..d {
                let mut v = y[(i, j)];
                for a in 0..k {
                    v -= dc[(i, a)] * x[(a, j)];
                }
                rec += v * v;
            }
            for a in 0..k {
                let mut v = x[(a, j)];
                for i in 0..d {
                    v -= ac[(a, i)] * y[(i, j)];
                }
                coup += v * v;
            }
        }
        let comp = complement_of(data, c);
        let mut s = 0.0;
        for j in 0..comp.ncols() {
            for a in 0..k {
                let mut v = 0.0;
                for i in 0..d {
                    v += ac[(a, i)] * comp[(i, j)];
                }
                s += v * v;
            }
        }
        if comp.ncols() > 0 {
            supp += s / comp.ncols() as f64;
        }
    }
    (rec, supp, coup)
}

// ---------------------------------------------------------------------------
// Normal equations of every block subproblem, from the gradients.

/// Gradient optimality of the `X_0c` solve with `X_cc` held at `xcc_old`:
/// `(D_0^T D_0 + t3 I) X_0c = D_0^T (Y_c - D_c X_cc) + t3 A_0 Y_c`.
pub fn shared_code_residual(
    model: &AlsfModel,
    y: &Matrix,
    c: usize,
    xcc_old: &Matrix,
    x0: &Matrix,
    hp: &Hyperparams,
) -> f64 {
    let d0 = &model.shared_dict;
    let t3 = hp.tau * hp.lambda3;
    let lhs = d0.transpose() * d0 * x0 + x0 * t3;
    let rhs = d0.transpose() * (y - &model.class_dicts[c] * xcc_old)
        + &model.shared_analysis * y * t3;
    rel_diff(&lhs, &rhs)
}

/// `(D_c^T D_c + t2 I) X_cc = D_c^T (Y_c - D_0 X_0c) + t2 A_c Y_c`.
pub fn class_code_residual(
    model: &AlsfModel,
    y: &Matrix,
    c: usize,
    xcc: &Matrix,
    x0: &Matrix,
    hp: &Hyperparams,
) -> f64 {
    let dc = &model.class_dicts[c];
    let t2 = hp.tau * hp.lambda2;
    let lhs = dc.transpose() * dc * xcc + xcc * t2;
    let rhs = dc.transpose() * (y - &model.shared_dict * x0) + &model.class_analysis[c] * y * t2;
    rel_diff(&lhs, &rhs)
}

/// `A_c ((1/N_cbar) Y_cbar Y_cbar^T + l2 Y_c Y_c^T + eta1 I) = l2 X_cc Y_c^T`.
pub fn class_analysis_residual(
    data: &TrainingSet,
    c: usize,
    xcc: &Matrix,
    a: &Matrix,
    hp: &Hyperparams,
) -> f64 {
    let y = &data.per_class[c];
    let comp = complement_of(data, c);
    let d = y.nrows();
    let mut gram = y * y.transpose() * hp.lambda2 + Matrix::identity(d, d) * hp.eta1;
    if comp.ncols() > 0 {
        gram += &comp * comp.transpose() / comp.ncols() as f64;
    }
    let lhs = a * gram;
    let rhs = xcc * y.transpose() * hp.lambda2;
    rel_diff(&lhs, &rhs)
}

/// `A_0 (sum_c Y_c Y_c^T + (l1/l3) (Y_c - Y^m)(Y_c - Y^m)^T + r I) = sum_c X_0c Y_c^T`.
pub fn shared_analysis_residual(data: &TrainingSet, codes: &Codes, a0: &Matrix, hp: &Hyperparams) -> f64 {
    let mean = global_mean(data);
    let d = mean.len();
    let ratio = if hp.lambda1 == 0.0 { 0.0 } else { hp.lambda1 / hp.lambda3 };
    let mut gram = Matrix::identity(d, d) * hp.ridge_a0;
    let mut rhs = Matrix::zeros(a0.nrows(), d);
    for (c, y) in data.per_class.iter().enumerate() {
        let centered = Matrix::from_fn(d, y.ncols(), |i, j| y[(i, j)] - mean[i]);
        gram += y * y.transpose() + &centered * centered.transpose() * ratio;
        rhs += &codes.shared_codes[c] * y.transpose();
    }
    rel_diff(&(a0 * gram), &rhs)
}

/// `D_c (X_cc X_cc^T + r I) = (Y_c - D_0 X_0c) X_cc^T`.
pub fn class_dict_residual(
    model: &AlsfModel,
    codes: &Codes,
    data: &TrainingSet,
    c: usize,
    dict: &Matrix,
    ridge: f64,
) -> f64 {
    let x = &codes.class_codes[c];
    let k = x.nrows();
    let target = &data.per_class[c] - &model.shared_dict * &codes.shared_codes[c];
    let lhs = dict * (x * x.transpose() + Matrix::identity(k, k) * ridge);
    rel_diff(&lhs, &(target * x.transpose()))
}

/// Residual and stacked shared codes of the shared dictionary step:
/// `R = [Y_c - D_c X_cc]_c`, `X_0 = [X_0c]_c`.
pub fn shared_dict_system(model: &AlsfModel, codes: &Codes, data: &TrainingSet) -> (Matrix, Matrix) {
    let d = data.per_class[0].nrows();
    let k0 = model.shared_dict.ncols();
    let n: usize = data.per_class.iter().map(|y| y.ncols()).sum();
    let mut r = Matrix::zeros(d, n);
    let mut x0 = Matrix::zeros(k0, n);
    let mut at = 0;
    for (c, y) in data.per_class.iter().enumerate() {
        let m = y.ncols();
        r.columns_mut(at, m)
            .copy_from(&(y - &model.class_dicts[c] * &codes.class_codes[c]));
        x0.columns_mut(at, m).copy_from(&codes.shared_codes[c]);
        at += m;
    }
    (r, x0)
}

/// `M X_0 X_0^T = R X_0^T`, the normal equations of `min ||R - M X_0||`.
pub fn shared_target_residual(r: &Matrix, x0: &Matrix, m: &Matrix) -> f64 {
    rel_diff(&(m * x0 * x0.transpose()), &(r * x0.transpose()))
}

// ---------------------------------------------------------------------------
// Nearest-subspace classification with the generating bases.

/// Orthonormal basis of the span of the columns, by modified Gram-Schmidt.
pub fn orthonormalize(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for col in columns {
        let mut v = col.clone();
        for q in &out {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= dot * qi;
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-10 {
            out.push(v.iter().map(|x| x / n).collect());
        }
    }
    out
}

fn columns_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().cloned().collect()).collect()
}

/// Class whose span (class basis plus shared basis) leaves the smallest
/// projection residual.
pub struct NearestSubspace {
    bases: Vec<Vec<Vec<f64>>>,
}

impl NearestSubspace {
    pub fn new(class_bases: &[Matrix], shared: &Matrix) -> Self {
        let bases = class_bases
            .iter()
            .map(|b| {
                let mut cols = columns_of(b);
                cols.extend(columns_of(shared));
                orthonormalize(&cols)
            })
            .collect();
        NearestSubspace { bases }
    }

    pub fn classify(&self, y: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (c, q) in self.bases.iter().enumerate() {
            let mut r = y.to_vec();
            for b in q {
                let dot: f64 = r.iter().zip(b).map(|(a, b)| a * b).sum();
                for (ri, bi) in r.iter_mut().zip(b) {
                    *ri -= dot * bi;
                }
            }
            let res: f64 = r.iter().map(|v| v * v).sum();
            if res < best.1 {
                best = (c, res);
            }
        }
        best.0
    }

    pub fn accuracy(&self, set: &TrainingSet) -> f64 {
        let (mut ok, mut n) = (0usize, 0usize);
        for (c, y) in set.per_class.iter().enumerate() {
            for col in y.column_iter() {
                let v: Vec<f64> = col.iter().cloned().collect();
                ok += usize::from(self.classify(&v) == c);
                n += 1;
            }
        }
        ok as f64 / n as f64
    }
}
