//! Ground-truth generator: disjoint class subspaces plus one shared subspace.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TrainingSet;
use crate::numerics::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub d: usize,
    pub classes: usize,
    pub class_subspace_dim: usize,
    pub shared_subspace_dim: usize,
    pub noise_sigma: f64,
    pub patches_per_class: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            d: 100,
            classes: 2,
            class_subspace_dim: 5,
            shared_subspace_dim: 3,
            noise_sigma: 0.01,
            patches_per_class: 400,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::DimensionError(m));
        if self.d == 0 || self.classes == 0 || self.class_subspace_dim == 0 {
            return err("d, classes and class_subspace_dim must be positive".into());
        }
        if self.patches_per_class == 0 {
            return err("patches_per_class must be positive".into());
        }
        if self.class_subspace_dim * self.classes + self.shared_subspace_dim > self.d {
            return err(format!(
                "{} classes x {} + {} shared dimensions exceed d = {}",
                self.classes, self.class_subspace_dim, self.shared_subspace_dim, self.d
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return err(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub set: TrainingSet,
    /// Class of every column of `set.all()`.
    pub labels: Vec<usize>,
    /// Orthonormal `d x class_subspace_dim` basis per class.
    pub class_bases: Vec<Matrix>,
    /// Orthonormal `d x shared_subspace_dim` basis.
    pub shared_basis: Matrix,
}

impl SynthData {
    /// The first `n_train` columns of every class and the rest.
    pub fn split(&self, n_train: usize) -> Result<(TrainingSet, TrainingSet)> {
        let mut train = Vec::new();
        let mut held = Vec::new();
        for y in &self.set.per_class {
            if n_train == 0 || n_train >= y.ncols() {
                return Err(Error::DimensionError(format!(
                    "cannot split {} columns at {n_train}",
                    y.ncols()
                )));
            }
            train.push(y.columns(0, n_train).into_owned());
            held.push(y.columns(n_train, y.ncols() - n_train).into_owned());
        }
        Ok((
            TrainingSet::new(train, self.set.labels.clone())?,
            TrainingSet::new(held, self.set.labels.clone())?,
        ))
    }
}

fn unit_gaussian(dim: usize, rng: &mut ChaCha8Rng) -> Vector {
    loop {
        let v = Vector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 0.0 {
            return v / n;
        }
    }
}

pub fn class_label(c: usize) -> String {
    format!("class{c}")
}

/// Draws the subspaces and `patches_per_class` samples per class. Each sample
/// is a unit-norm combination of its class basis, plus a unit-norm
/// combination of the shared basis, plus white noise of scale `noise_sigma`.
pub fn synth_generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let m = spec.class_subspace_dim;
    let total = m * spec.classes + spec.shared_subspace_dim;
    let raw = Matrix::from_fn(spec.d, total, |_, _| StandardNormal.sample(&mut rng));
    let q = raw.qr().q();
    let class_bases: Vec<Matrix> =
        (0..spec.classes).map(|c| q.columns(c * m, m).into_owned()).collect();
    let shared_basis = q.columns(m * spec.classes, spec.shared_subspace_dim).into_owned();

    let mut per_class = Vec::with_capacity(spec.classes);
    let mut labels = Vec::new();
    for (c, basis) in class_bases.iter().enumerate() {
        let mut y = Matrix::zeros(spec.d, spec.patches_per_class);
        for j in 0..spec.patches_per_class {
            let mut col = basis * unit_gaussian(m, &mut rng);
            if spec.shared_subspace_dim > 0 {
                col += &shared_basis * unit_gaussian(spec.shared_subspace_dim, &mut rng);
            }
            if spec.noise_sigma > 0.0 {
                for v in col.iter_mut() {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *v += spec.noise_sigma * e;
                }
            }
            y.set_column(j, &col);
        }
        per_class.push(y);
        labels.extend(std::iter::repeat_n(c, spec.patches_per_class));
    }
    let names = (0..spec.classes).map(class_label).collect();
    Ok(SynthData {
        set: TrainingSet::new(per_class, names)?,
        labels,
        class_bases,
        shared_basis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_classes_have_bounded_rank() {
        let spec = SynthSpec {
            d: 20,
            classes: 2,
            class_subspace_dim: 3,
            shared_subspace_dim: 0,
            noise_sigma: 0.0,
            patches_per_class: 30,
            seed: 1,
        };
        let data = synth_generate(&spec).unwrap();
        for y in &data.set.per_class {
            assert!(crate::numerics::numerical_rank(y, 1e-10) <= 3);
        }
    }

    #[test]
    fn same_seed_same_output() {
        let spec = SynthSpec {
            patches_per_class: 20,
            ..Default::default()
        };
        assert_eq!(synth_generate(&spec).unwrap(), synth_generate(&spec).unwrap());
    }

    #[test]
    fn zero_noise_patches_avoid_other_subspaces() {
        let spec = SynthSpec {
            d: 30,
            noise_sigma: 0.0,
            patches_per_class: 25,
            ..Default::default()
        };
        let data = synth_generate(&spec).unwrap();
        for (c, y) in data.set.per_class.iter().enumerate() {
            let without_shared = y - &data.shared_basis * (data.shared_basis.transpose() * y);
            for (o, basis) in data.class_bases.iter().enumerate() {
                if o != c {
                    assert!((basis.transpose() * &without_shared).amax() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn invalid_specs() {
        let spec = SynthSpec {
            d: 10,
            class_subspace_dim: 5,
            shared_subspace_dim: 1,
            ..Default::default()
        };
        assert!(matches!(synth_generate(&spec), Err(Error::DimensionError(_))));
        let spec = SynthSpec {
            noise_sigma: -1.0,
            ..Default::default()
        };
        assert!(synth_generate(&spec).is_err());
    }
}
