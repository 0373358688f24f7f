use super::*;
use crate::field::ScalarField;
use alloc::vec;

fn points_1d(x: f64) -> SyntheticSpec {
    SyntheticSpec::DiscretePoints { atoms: vec![vec![x]], masses: vec![1.0] }
}

/// 1-D setup with an affine critic `f(x) = w·x + b`, fake at 0 and real at 1.
fn linear_1d(metric: LossKind, penalty: PenaltySpec, lr: f64) -> Trainer {
    let cfg = TrainConfig {
        metric,
        penalty,
        critic: MlpConfig::new(1, 0, 0, 1),
        generator: MlpConfig::new(1, 0, 0, 1),
        adam: AdamConfig { lr, ..AdamConfig::default() },
        batch_size: 4,
        data: points_1d(1.0),
        fix_generator: true,
        fake_data: Some(points_1d(0.0)),
        ..TrainConfig::default()
    };
    Trainer::new(cfg).unwrap()
}

fn affine(w: &[f64], b: f64) -> Params {
    vec![Tensor::matrix(w.len(), 1, w.to_vec()).unwrap(), Tensor::vector(vec![b])]
}

fn col(xs: &[f64]) -> Tensor {
    Tensor::matrix(xs.len(), 1, xs.to_vec()).unwrap()
}

#[test]
fn linear_critic_ascends_toward_real() {
    let mut t = linear_1d(LossKind::Linear, PenaltySpec::maxgp(0.0), 0.01);
    t.set_critic_params(affine(&[0.5], 0.0)).unwrap();
    let s = t.critic_step(&col(&[1.0; 4]), &col(&[0.0; 4])).unwrap();
    // J = f(0) − f(1) = −w
    assert!((s.loss + 0.5).abs() < 1e-15);
    assert_eq!(s.k_hat, 0.5);
    assert!(t.critic_params()[0].data()[0] > 0.5);
    assert_eq!(t.critic_params()[1].data()[0], 0.0);
}

#[test]
fn strong_maxgp_shrinks_gradient_norm() {
    let mut t = linear_1d(LossKind::Linear, PenaltySpec::maxgp(1e3), 0.01);
    t.set_critic_params(affine(&[1.0], 0.0)).unwrap();
    let (real, fake) = (col(&[1.0; 4]), col(&[0.0; 4]));
    let ks: Vec<f64> = (0..200).map(|_| t.critic_step(&real, &fake).unwrap().k_hat).collect();
    assert_eq!(ks[0], 1.0);
    assert!(ks[199] < 0.05, "{}", ks[199]);
    assert!(ks[..100].windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn identical_batches_give_constant_critic() {
    let atoms = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
    let cfg = TrainConfig {
        critic: MlpConfig::new(2, 8, 1, 1),
        adam: AdamConfig { lr: 3e-4, ..AdamConfig::default() },
        penalty: PenaltySpec::maxgp(1.0),
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(cfg.clone()).unwrap();
    let batch = Tensor::from_rows(&atoms.iter().map(Vec::as_slice).collect::<Vec<_>>());
    for _ in 0..2000 {
        t.critic_step(&batch, &batch).unwrap();
    }
    let f: Vec<f64> = atoms.iter().map(|a| mlp_forward(&cfg.critic, t.critic_params(), a)[0]).collect();
    let spread = f.iter().cloned().fold(f64::MIN, f64::max) - f.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread <= 1e-3, "{f:?}");
}

fn generator_against(critic: Params) -> Trainer {
    let cfg = TrainConfig {
        critic: MlpConfig::new(2, 0, 0, 1),
        generator: MlpConfig::new(2, 8, 1, 2),
        adam: AdamConfig { lr: 1e-2, ..AdamConfig::default() },
        batch_size: 32,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(cfg).unwrap();
    t.set_critic_params(critic).unwrap();
    t
}

fn mean_x1(x: &Tensor) -> f64 {
    x.row_iter().map(|r| r[0]).sum::<f64>() / x.rows() as f64
}

#[test]
fn generator_moves_up_the_critic() {
    let mut t = generator_against(affine(&[1.0, 0.0], 0.0));
    let probe = t.noise_batch();
    let before = mean_x1(&t.generate(&probe).unwrap());
    let mut losses = Vec::new();
    for _ in 0..50 {
        let z = t.noise_batch();
        losses.push(t.generator_step(&z).unwrap());
    }
    let after = mean_x1(&t.generate(&probe).unwrap());
    assert!(after > before + 0.2, "{before} -> {after}");
    assert!(losses[49] < losses[0]);
}

#[test]
fn constant_critic_leaves_generator_unchanged() {
    let mut t = generator_against(affine(&[0.0, 0.0], 3.0));
    let before = t.gen_params().to_vec();
    for _ in 0..5 {
        let z = t.noise_batch();
        assert_eq!(t.generator_step(&z).unwrap(), -3.0);
    }
    assert_eq!(t.gen_params(), before.as_slice());
}

fn small_cfg() -> TrainConfig {
    TrainConfig {
        critic: MlpConfig::new(2, 16, 1, 1),
        generator: MlpConfig::new(2, 16, 1, 2),
        batch_size: 32,
        iterations: 20,
        n_critic: 2,
        field_resolution: [5, 4],
        drift_window: 10,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_iterations_report_initial_field() {
    let cfg = TrainConfig { iterations: 0, ..small_cfg() };
    let init = Trainer::new(cfg.clone()).unwrap();
    let mut field = init.critic_field().unwrap();
    let r = train(cfg).unwrap();
    assert!(r.records.is_empty());
    assert_eq!(r.drift, None);
    let grid = r.field.unwrap();
    assert_eq!(grid.values.len(), 20);
    assert_eq!(grid.grads.len(), 20);
    let pts = grid.points();
    let rows: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
    let (v, _) = field.values_and_grads(&Tensor::from_rows(&rows)).unwrap();
    assert_eq!(v, grid.values);
}

#[test]
fn series_have_iteration_length_and_runs_repeat() {
    let a = train(small_cfg()).unwrap();
    assert_eq!(a.records.len(), 20);
    assert!(a.drift.unwrap() >= 0.0);
    let b = train(small_cfg()).unwrap();
    assert_eq!(a, b);
    let c = train(TrainConfig { seed: 1, ..small_cfg() }).unwrap();
    assert_ne!(a.records, c.records);
}

#[test]
fn fixed_generator_is_bit_identical() {
    let cfg = TrainConfig { fix_generator: true, ..small_cfg() };
    let init = Trainer::new(cfg.clone()).unwrap().gen_params().to_vec();
    let r = train(cfg).unwrap();
    assert_eq!(r.gen_params, init);
    assert!(r.records.iter().all(|rec| rec.gen_loss == -rec.mean_f_fake));
    let moved = train(small_cfg()).unwrap();
    assert_ne!(moved.gen_params, init);
}

fn disjoint_points(metric: LossKind, penalty: PenaltySpec, iterations: usize) -> TrainConfig {
    TrainConfig {
        metric,
        penalty,
        critic: MlpConfig::new(2, 16, 1, 1),
        adam: AdamConfig { lr: 1e-3, ..AdamConfig::default() },
        n_critic: 1,
        iterations,
        batch_size: 16,
        data: SyntheticSpec::DiscretePoints { atoms: vec![vec![1.0, 0.0]], masses: vec![1.0] },
        fix_generator: true,
        fake_data: Some(SyntheticSpec::DiscretePoints { atoms: vec![vec![-1.0, 0.0]], masses: vec![1.0] }),
        ..TrainConfig::default()
    }
}

#[test]
fn unpenalized_linear_critic_is_unbounded() {
    let r = train(disjoint_points(LossKind::Linear, PenaltySpec::maxgp(0.0), 2000)).unwrap();
    let k = r.series(|rec| rec.k_hat);
    assert!(k[1999] > k[499], "{} vs {}", k[1999], k[499]);
    let loss = r.series(|rec| rec.disc_loss);
    assert!(loss[1999] < loss[499]);
}

#[test]
fn maxgp_loss_has_a_floor() {
    let r = train(disjoint_points(LossKind::Logistic, PenaltySpec::maxgp(1.0), 1000)).unwrap();
    let loss = r.series(|rec| rec.disc_loss);
    assert!(loss.iter().all(|l| l.is_finite() && *l > 0.0));
    let k = r.series(|rec| rec.k_hat);
    assert!(k[999] < 2.0, "{}", k[999]);
}

#[test]
fn overflow_aborts_with_iteration_and_term() {
    let mut t = linear_1d(LossKind::Exponential, PenaltySpec::maxgp(0.0), 0.01);
    t.set_critic_params(affine(&[-1e4], 0.0)).unwrap();
    let err = t.iterate().unwrap_err();
    assert_eq!(err, TrainError::NonFinite { iteration: 0, term: "critic loss" });
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        TrainConfig { n_critic: 0, ..small_cfg() },
        TrainConfig { batch_size: 0, ..small_cfg() },
        TrainConfig { adam: AdamConfig { lr: 0.0, ..AdamConfig::default() }, ..small_cfg() },
        TrainConfig { alpha: Some(1.0), ..small_cfg() },
        TrainConfig { metric: LossKind::Hinge, ..small_cfg() },
        TrainConfig { critic: MlpConfig::new(3, 4, 1, 1), ..small_cfg() },
        TrainConfig { critic: MlpConfig::new(2, 4, 1, 2), ..small_cfg() },
        TrainConfig { fake_data: Some(points_1d(0.0)), ..small_cfg() },
        TrainConfig { drift_window: 0, ..small_cfg() },
        TrainConfig { field_resolution: [1, 5], ..small_cfg() },
    ];
    for cfg in bad {
        assert!(Trainer::new(cfg.clone()).is_err(), "{cfg:?}");
    }
}

#[test]
fn critic_step_rejects_empty_batches() {
    let mut t = linear_1d(LossKind::Linear, PenaltySpec::maxgp(1.0), 0.01);
    let empty = Tensor::matrix(0, 1, vec![]).unwrap();
    assert!(matches!(t.critic_step(&empty, &col(&[0.0])), Err(TrainError::Contract(_))));
}

#[test]
fn smax_list_tracks_largest_norms() {
    let mut t = linear_1d(LossKind::Linear, PenaltySpec { smax: 3, ..PenaltySpec::maxgp(1.0) }, 0.01);
    t.critic_step(&col(&[1.0; 4]), &col(&[0.0; 4])).unwrap();
    assert_eq!(t.smax().len(), 3);
    let n = t.smax().norms();
    assert!(n.windows(2).all(|w| w[0] >= w[1]));
}
