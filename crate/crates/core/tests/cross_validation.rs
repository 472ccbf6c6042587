use alsf::data::{synth_generate, SynthSpec};
use alsf::trainer::cross_validate;
use alsf::{Error, ExecPolicy, Hyperparams, Matrix, TrainingSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn data() -> TrainingSet {
    synth_generate(&SynthSpec {
        d: 36,
        class_subspace_dim: 4,
        shared_subspace_dim: 4,
        patches_per_class: 90,
        seed: 3,
        ..SynthSpec::default()
    })
    .unwrap()
    .set
}

fn hp(eta: f64) -> Hyperparams {
    Hyperparams {
        eta,
        k_per_class: 4,
        k_shared: 6,
        max_iters: 10,
        ..Hyperparams::default()
    }
}

/// Class components of unit scale under a shared component `shared_gain`
/// times stronger.
fn shared_heavy(shared_gain: f64) -> TrainingSet {
    let truth = synth_generate(&SynthSpec {
        d: 36,
        class_subspace_dim: 4,
        shared_subspace_dim: 4,
        patches_per_class: 1,
        seed: 4,
        ..SynthSpec::default()
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut gauss = |rows: usize, cols: usize| -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
    };
    let n = 90;
    let per_class = truth
        .class_bases
        .iter()
        .map(|b| {
            b * gauss(4, n) + &truth.shared_basis * gauss(4, n) * shared_gain + gauss(36, n) * 0.01
        })
        .collect();
    TrainingSet::new(per_class, vec!["a".into(), "b".into()]).unwrap()
}

#[test]
fn selects_the_clearly_superior_point() {
    // eta = 1e6 thresholds D_0 to zero, and five atoms per class cannot
    // cover both their class and the stronger shared directions.
    let set = shared_heavy(1.5);
    let good = Hyperparams {
        k_per_class: 5,
        k_shared: 4,
        max_iters: 30,
        ..hp(0.1)
    };
    let bad = Hyperparams { eta: 1e6, ..good.clone() };
    let grid = [bad.clone(), good, bad];
    let r = cross_validate(&set, &grid, 3, 0, ExecPolicy::Parallel).unwrap();
    assert_eq!(r.best_index, 1);
    assert_eq!(r.best, grid[1]);
    assert!(r.mean_scores[1] > r.mean_scores[0] + 0.1, "{:?}", r.mean_scores);
}

#[test]
fn single_point_grid_reports_its_folds() {
    let r = cross_validate(&data(), &[hp(0.1)], 3, 0, ExecPolicy::Sequential).unwrap();
    assert_eq!(r.best_index, 0);
    assert_eq!(r.scores.len(), 1);
    assert_eq!(r.scores[0].len(), 3);
    let mean = r.scores[0].iter().sum::<f64>() / 3.0;
    assert!((r.mean_scores[0] - mean).abs() < 1e-15);
}

#[test]
fn identical_points_tie_to_the_first() {
    let r = cross_validate(&data(), &[hp(0.5), hp(0.5)], 2, 1, ExecPolicy::Parallel).unwrap();
    assert_eq!(r.mean_scores[0], r.mean_scores[1]);
    assert_eq!(r.best_index, 0);
}

#[test]
fn policy_does_not_change_scores() {
    let grid = [hp(0.1), hp(1.0)];
    let a = cross_validate(&data(), &grid, 3, 5, ExecPolicy::Parallel).unwrap();
    let b = cross_validate(&data(), &grid, 3, 5, ExecPolicy::Sequential).unwrap();
    assert_eq!(a, b);
}

#[test]
fn too_few_samples_for_the_folds() {
    let set = TrainingSet::new(
        vec![alsf::Matrix::identity(4, 2), alsf::Matrix::identity(4, 3)],
        vec!["a".into(), "b".into()],
    )
    .unwrap();
    assert!(matches!(
        cross_validate(&set, &[hp(0.1)], 3, 0, ExecPolicy::Sequential),
        Err(Error::InsufficientData(_))
    ));
}
