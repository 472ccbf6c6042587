//! Timing harness comparing analysis-operator classification with a
//! per-patch iterative sparse coder.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::classifier::classify_batch;
use crate::error::{Error, Result};
use crate::instrument::{record_solver_call, solver_invocations};
use crate::model::{AlsfModel, ResidualMode};
use crate::numerics::{hstack, pseudoinverse, Matrix, Vector};
use crate::par::ExecPolicy;

/// Patches per image in the reference protocol (a 272x205 image cut into
/// 20x20 tiles gives a 10x13 grid).
pub const PATCHES_PER_IMAGE: usize = 130;

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn unit_columns(mut m: Matrix) -> Matrix {
    for mut col in m.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
    m
}

/// A model with random unit-norm atoms and pseudoinverse analysis operators.
/// Only its shape matters for timing.
pub fn synthetic_model(
    d: usize,
    classes: usize,
    k_per_class: usize,
    k_shared: usize,
    seed: u64,
) -> Result<AlsfModel> {
    if d == 0 || classes == 0 || k_per_class == 0 {
        return Err(Error::DimensionError(format!(
            "d = {d}, classes = {classes}, k_per_class = {k_per_class}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let class_dicts: Vec<Matrix> = (0..classes)
        .map(|_| unit_columns(gaussian(d, k_per_class, &mut rng)))
        .collect();
    let shared_dict = unit_columns(gaussian(d, k_shared, &mut rng));
    let class_analysis = class_dicts.iter().map(pseudoinverse).collect::<Result<Vec<_>>>()?;
    let shared_analysis = if k_shared == 0 {
        Matrix::zeros(0, d)
    } else {
        pseudoinverse(&shared_dict)?
    };
    Ok(AlsfModel {
        class_dicts,
        shared_dict,
        class_analysis,
        shared_analysis,
        labels: (0..classes).map(|c| format!("class{c}")).collect(),
    })
}

/// Random patches with entries in `[0, 1)`, as columns.
pub fn random_patches(d: usize, n: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(d, n, |_, _| rand::Rng::random::<f64>(&mut rng))
}

/// Lasso coordinate descent over the concatenated model dictionary,
/// `min 0.5 ||y - D x||^2 + lambda ||x||_1`, then classification by the
/// class whose code part reconstructs `y` best.
#[derive(Debug, Clone)]
pub struct CoordinateDescent {
    dict: Matrix,
    gram: Matrix,
    /// Atom range of every class inside `dict`.
    blocks: Vec<(usize, usize)>,
    pub lambda: f64,
    pub iterations: usize,
}

impl CoordinateDescent {
    pub fn new(model: &AlsfModel, lambda: f64, iterations: usize) -> Result<Self> {
        let mut parts: Vec<&Matrix> = model.class_dicts.iter().collect();
        parts.push(&model.shared_dict);
        let dict = hstack(&parts)?;
        let gram = dict.transpose() * &dict;
        let mut blocks = Vec::with_capacity(model.num_classes());
        let mut at = 0;
        for d in &model.class_dicts {
            blocks.push((at, d.ncols()));
            at += d.ncols();
        }
        Ok(CoordinateDescent {
            dict,
            gram,
            blocks,
            lambda,
            iterations,
        })
    }

    /// Sparse code of one patch. Counts as one iterative-solver invocation.
    pub fn encode(&self, y: &Vector) -> Vector {
        record_solver_call();
        let k = self.dict.ncols();
        let mut x = Vector::zeros(k);
        // r = D^T y - G x, kept current as x changes.
        let mut r = self.dict.tr_mul(y);
        for _ in 0..self.iterations {
            for j in 0..k {
                let g = self.gram[(j, j)];
                if g <= 0.0 {
                    continue;
                }
                let rho = r[j] + g * x[j];
                let new = soft(rho, self.lambda) / g;
                let delta = new - x[j];
                if delta != 0.0 {
                    r.axpy(-delta, &self.gram.column(j), 1.0);
                    x[j] = new;
                }
            }
        }
        x
    }

    pub fn classify(&self, y: &Vector) -> usize {
        let x = self.encode(y);
        let mut best = (0, f64::INFINITY);
        for (c, &(start, len)) in self.blocks.iter().enumerate() {
            let approx = self.dict.columns(start, len) * x.rows(start, len);
            let r = (y - approx).norm_squared();
            if r < best.1 {
                best = (c, r);
            }
        }
        best.0
    }

    pub fn classify_batch(&self, batch: &Matrix) -> Vec<usize> {
        batch
            .column_iter()
            .map(|col| self.classify(&col.into_owned()))
            .collect()
    }
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

pub fn median(samples: &mut [Duration]) -> Duration {
    samples.sort_unstable();
    let n = samples.len();
    if n == 0 {
        return Duration::ZERO;
    }
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2
    }
}

/// Wall time of `repetitions` runs of `f`, after one untimed warm-up run.
pub fn time_runs<T>(repetitions: usize, mut f: impl FnMut() -> T) -> Vec<Duration> {
    std::hint::black_box(f());
    (0..repetitions)
        .map(|_| {
            let start = Instant::now();
            std::hint::black_box(f());
            start.elapsed()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub n_patches: usize,
    pub repetitions: usize,
    /// Patches coded by the baseline per repetition; the baseline is timed
    /// on a prefix of the batch because it is far slower.
    pub baseline_patches: usize,
    pub baseline_iterations: usize,
    pub baseline_lambda: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            n_patches: 1300,
            repetitions: 5,
            baseline_patches: 26,
            baseline_iterations: 50,
            baseline_lambda: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub d: usize,
    pub atoms: usize,
    pub n_patches: usize,
    pub baseline_patches: usize,
    pub repetitions: usize,
    /// Median seconds per patch.
    pub alsf_per_patch: f64,
    pub baseline_per_patch: f64,
    /// Solver invocations counted while timing the analysis path.
    pub alsf_solver_calls: u64,
    pub baseline_solver_calls: u64,
}

impl BenchReport {
    pub fn speedup(&self) -> f64 {
        self.baseline_per_patch / self.alsf_per_patch
    }

    pub fn render(&self) -> String {
        let img = PATCHES_PER_IMAGE as f64;
        format!(
            "d = {}\natoms = {}\nn_patches = {}\nbaseline_patches = {}\nrepetitions = {}\n\
             alsf_solver_calls = {}\nbaseline_solver_calls = {}\n\n[timings]\n\
             alsf_seconds_per_patch = {:.6e}\nbaseline_seconds_per_patch = {:.6e}\n\
             alsf_seconds_per_image = {:.6}\nbaseline_seconds_per_image = {:.6}\n\
             speedup = {:.2}\n",
            self.d,
            self.atoms,
            self.n_patches,
            self.baseline_patches,
            self.repetitions,
            self.alsf_solver_calls,
            self.baseline_solver_calls,
            self.alsf_per_patch,
            self.baseline_per_patch,
            self.alsf_per_patch * img,
            self.baseline_per_patch * img,
            self.speedup(),
        )
    }
}

/// Median per-patch time of sequential analysis-operator classification.
pub fn time_alsf(model: &AlsfModel, batch: &Matrix, repetitions: usize) -> Result<f64> {
    classify_batch(batch, model, ResidualMode::default(), ExecPolicy::Sequential)?;
    let mut t = time_runs(repetitions, || {
        classify_batch(batch, model, ResidualMode::default(), ExecPolicy::Sequential)
    });
    Ok(median(&mut t).as_secs_f64() / batch.ncols() as f64)
}

/// Times both paths on the same random patches, single-threaded.
pub fn run_bench(model: &AlsfModel, cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.n_patches == 0 || cfg.repetitions == 0 {
        return Err(Error::DimensionError(
            "n_patches and repetitions must be positive".into(),
        ));
    }
    let d = model.dim();
    let batch = random_patches(d, cfg.n_patches, cfg.seed);

    let before = solver_invocations();
    let alsf_per_patch = time_alsf(model, &batch, cfg.repetitions)?;
    let alsf_solver_calls = solver_invocations() - before;

    let baseline = CoordinateDescent::new(model, cfg.baseline_lambda, cfg.baseline_iterations)?;
    let m = cfg.baseline_patches.clamp(1, cfg.n_patches);
    let prefix = batch.columns(0, m).into_owned();
    let before = solver_invocations();
    let mut t = time_runs(cfg.repetitions, || baseline.classify_batch(&prefix));
    let baseline_solver_calls = solver_invocations() - before;
    let baseline_per_patch = median(&mut t).as_secs_f64() / m as f64;

    Ok(BenchReport {
        d,
        atoms: model.class_atoms().iter().sum::<usize>() + model.shared_atoms(),
        n_patches: cfg.n_patches,
        baseline_patches: m,
        repetitions: cfg.repetitions,
        alsf_per_patch,
        baseline_per_patch,
        alsf_solver_calls,
        baseline_solver_calls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinate_descent_matches_least_squares_without_penalty() {
        let model = synthetic_model(12, 2, 2, 1, 3).unwrap();
        let cd = CoordinateDescent::new(&model, 0.0, 500).unwrap();
        let y = random_patches(12, 1, 4).column(0).into_owned();
        let x = cd.encode(&y);
        // Normal equations D^T (D x - y) = 0 for the 5-atom full-rank dictionary.
        let grad = cd.dict.tr_mul(&(&cd.dict * &x - &y));
        assert!(grad.amax() < 1e-8, "{grad}");
    }

    #[test]
    fn large_penalty_gives_zero_code() {
        let model = synthetic_model(8, 2, 2, 1, 3).unwrap();
        let cd = CoordinateDescent::new(&model, 1e6, 5).unwrap();
        let y = random_patches(8, 1, 4).column(0).into_owned();
        assert_eq!(cd.encode(&y).amax(), 0.0);
    }

    #[test]
    fn median_of_even_and_odd() {
        let ms = Duration::from_millis;
        assert_eq!(median(&mut [ms(3), ms(1), ms(2)]), ms(2));
        assert_eq!(median(&mut [ms(4), ms(1), ms(2), ms(3)]), Duration::from_micros(2500));
    }

    #[test]
    fn rejects_empty_batch() {
        let model = synthetic_model(8, 2, 2, 1, 3).unwrap();
        let cfg = BenchConfig {
            n_patches: 0,
            ..BenchConfig::default()
        };
        assert!(matches!(run_bench(&model, &cfg), Err(Error::DimensionError(_))));
    }
}
