//! Property suites behind `lipgan verify`.

use lipgan_core::autodiff::{fd_check, fd_check_coords};
use lipgan_core::field::LinearField;
use lipgan_core::loss::{check_admissible, make_metric, LossKind, DEFAULT_GRID};
use lipgan_core::ot::{
    bounding_pairs, compact_dual, line_gradient_check, scaling_check, verify_duality, DiscreteDist, DualMode,
};
use lipgan_core::penalty::{grad_norm_node, PenaltySpec};
use lipgan_core::train::{train, AdamConfig, MlpConfig, MlpNodes, SyntheticSpec, TrainConfig};
use lipgan_core::{ExprGraph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Grad,
    Admissible,
    Theorems,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Grad => "grad",
            Suite::Admissible => "admissible",
            Suite::Theorems => "theorems",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Property {
    pub name: String,
    pub passed: bool,
    /// The measured quantity compared against `threshold`.
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub passed: bool,
    pub properties: Vec<Property>,
}

fn at_most(name: &str, value: f64, threshold: f64, detail: String) -> Property {
    Property { name: name.into(), passed: value <= threshold, value, threshold, detail }
}

pub fn run_suite(suite: Suite) -> SuiteReport {
    let properties = match suite {
        Suite::Grad => grad_suite(),
        Suite::Admissible => admissible_suite(),
        Suite::Theorems => theorem_suite(),
    };
    SuiteReport { suite: suite.name(), passed: properties.iter().all(|p| p.passed), properties }
}

/// The unit-gap lines: atoms `(1, zᵢ)` against `(0, zᵢ)` with
/// `zᵢ = (i + ½)/m`, uniform masses.
pub fn lines_instance(m: usize) -> (DiscreteDist, DiscreteDist) {
    let zs: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect();
    let real = DiscreteDist::uniform(zs.iter().map(|&z| vec![1.0, z]).collect()).expect("distinct atoms");
    let fake = DiscreteDist::uniform(zs.iter().map(|&z| vec![0.0, z]).collect()).expect("distinct atoms");
    (real, fake)
}

/// Random atoms in `[-1, 1]^d` with random positive masses.
pub fn random_dist(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DiscreteDist {
    loop {
        let atoms: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut masses: Vec<f64> = raw.iter().map(|m| m / total).collect();
        let head: f64 = masses[..n - 1].iter().sum();
        masses[n - 1] = 1.0 - head;
        if let Ok(dist) = DiscreteDist::new(atoms, masses) {
            return dist;
        }
    }
}

/// Pre-activations of a relu network on every row of `x`.
fn preactivations(cfg: &MlpConfig, params: &[Tensor], x: &Tensor) -> Vec<f64> {
    let mut out = Vec::new();
    for row in x.row_iter() {
        let mut h = row.to_vec();
        for l in 0..=cfg.depth {
            let (w, b) = (&params[2 * l], &params[2 * l + 1]);
            let m = w.shape()[1];
            let mut z = b.data().to_vec();
            for (p, hp) in h.iter().enumerate() {
                for (j, zj) in z.iter_mut().enumerate() {
                    *zj += hp * w.data()[p * m + j];
                }
            }
            if l < cfg.depth {
                out.extend_from_slice(&z);
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            h = z;
        }
    }
    out
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).expect("shape")
}

/// Largest relative FD error of `sum(f(x))` and of the gp/maxgp penalties
/// with respect to the parameters of `nets` random relu MLPs. With
/// `sample = Some(c)` at most `c` random coordinates of each parameter
/// tensor are checked, otherwise all of them.
pub fn mlp_fd_errors(
    seed: u64,
    nets: usize,
    max_width: usize,
    with_penalties: bool,
    sample: Option<usize>,
) -> (f64, f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut first, mut second, mut skipped) = (0.0f64, 0.0f64, 0);
    let mut done = 0;
    while done < nets {
        let depth = rng.random_range(0..=2);
        let cfg = MlpConfig::new(rng.random_range(1..=3), rng.random_range(1..=max_width), depth, 1);
        let mut g = ExprGraph::new();
        let x = g.input("x");
        let net = MlpNodes::declare(&mut g, &cfg, "net");
        let out = net.forward(&mut g, x);
        let total = g.sum(out);
        let params: Vec<Tensor> = cfg
            .sizes()
            .windows(2)
            .flat_map(|w| [random_tensor(&mut rng, &[w[0], w[1]], 1.0), random_tensor(&mut rng, &[w[1]], 0.5)])
            .collect();
        let xs = random_tensor(&mut rng, &[3, cfg.input_dim], 2.0);
        if preactivations(&cfg, &params, &xs).iter().any(|v| v.abs() < 1e-4) {
            skipped += 1;
            continue;
        }
        net.bind(&mut g, &params).expect("shapes");
        g.bind(x, xs).expect("input");
        let norms = grad_norm_node(&mut g, out, x).expect("differentiable");
        let gp = PenaltySpec::gp(1.0, 1.0).node(&mut g, norms);
        let maxgp = PenaltySpec::maxgp(1.0).node(&mut g, norms);
        for (&p, value) in net.params.iter().zip(&params) {
            let n = value.numel();
            let coords: Vec<usize> = match sample {
                Some(c) if c < n => (0..c).map(|_| rng.random_range(0..n)).collect(),
                _ => (0..n).collect(),
            };
            let mut worst = |out| fd_check_coords(&mut g, out, p, 1e-6, &coords).expect("fd").max_rel_error;
            first = first.max(worst(total));
            if with_penalties {
                second = second.max(worst(gp)).max(worst(maxgp));
            }
        }
        done += 1;
    }
    (first, second, skipped)
}

fn grad_suite() -> Vec<Property> {
    let (first, second, skipped) = mlp_fd_errors(0, 20, 16, true, None);
    let mut props = vec![
        at_most("mlp_first_order_fd", first, 1e-4, format!("20 random relu MLPs, {skipped} redrawn near a kink")),
        at_most("penalty_double_backward_fd", second, 1e-3, "gp and maxgp penalties w.r.t. parameters".into()),
    ];
    let mut g = ExprGraph::new();
    let x = g.input("x");
    let t = g.tanh(x);
    let s = g.sigmoid(t);
    let sp = g.softplus(x);
    let e = g.exp(s);
    let sq = g.square(sp);
    let r = g.sqrt(sq);
    let l = g.log(e);
    let prod = g.mul(r, l);
    let y = g.sum(prod);
    g.bind(x, Tensor::vector(vec![-1.3, -0.2, 0.4, 2.2])).expect("input");
    let err = fd_check(&mut g, y, x, 1e-6).expect("fd").max_rel_error;
    props.push(at_most("smooth_unary_chain_fd", err, 1e-6, "tanh, sigmoid, softplus, exp, sqrt, log".into()));
    props
}

fn admissible_suite() -> Vec<Property> {
    let (lo, hi, step) = DEFAULT_GRID;
    LossKind::ALL
        .into_iter()
        .map(|kind| {
            let expected = !matches!(kind, LossKind::Quadratic | LossKind::Hinge);
            let metric = make_metric(kind, kind.has_alpha().then_some(1.0)).expect("valid");
            let r = check_admissible(&metric, lo, hi, step).expect("valid grid");
            Property {
                name: format!("admissible_{}", kind.name()),
                passed: r.admissible == expected,
                value: if r.admissible { 1.0 } else { 0.0 },
                threshold: if expected { 1.0 } else { 0.0 },
                detail: format!(
                    "monotone {:?}, convex {:?}, balance point {:?}",
                    r.strictly_monotone, r.convex, r.balance_point
                ),
            }
        })
        .collect()
}

fn theorem_suite() -> Vec<Property> {
    let mut props = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let mut gap = 0.0f64;
    for _ in 0..20 {
        let (n, m) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let p = random_dist(&mut rng, n, 2);
        let q = random_dist(&mut rng, m, 2);
        gap = gap.max(verify_duality(&p, &q).map(|r| r.max_gap).unwrap_or(f64::INFINITY));
    }
    props.push(at_most("duality_random_2d", gap, 1e-6, "20 instances, up to 6 atoms per side".into()));

    let (real, fake) = lines_instance(20);
    let (found, objective) = match compact_dual(&real, &fake) {
        Ok(sol) => {
            let step: Vec<f64> = sol.in_real.iter().map(|&r| if r { 1.0 } else { 0.0 }).collect();
            let pairs = bounding_pairs(&step, &sol.points, 1.0, 1e-3).unwrap_or_default();
            ((0..20).filter(|&i| pairs.contains(&(i, 20 + i))).count(), sol.objective)
        }
        Err(_) => (0, f64::NAN),
    };
    props.push(at_most(
        "bounding_pairs_lines",
        20.0 - found as f64,
        0.0,
        format!("{found} of 20 aligned real/fake pairs bound the step potential; compact objective {objective}"),
    ));

    let mut f = LinearField::new(vec![1.2, -1.6], 0.3);
    let dev = line_gradient_check(&mut f, &[0.0, 0.0], &[0.6, -0.8], 2.0, 11, 1e-9)
        .map(|r| r.max_cosine_deviation.max(r.max_slope_deviation))
        .unwrap_or(f64::INFINITY);
    props.push(at_most("line_gradient_linear", dev, 1e-9, "f = 2⟨v, x⟩ along v".into()));

    let spec = SyntheticSpec::DiscretePoints {
        atoms: vec![vec![-1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.5], vec![0.5, -1.0]],
        masses: vec![0.25; 4],
    };
    let cfg = TrainConfig {
        penalty: PenaltySpec::maxgp(1.0),
        critic: MlpConfig::new(2, 32, 2, 1),
        adam: AdamConfig { lr: 3e-4, ..AdamConfig::default() },
        n_critic: 1,
        iterations: 5000,
        batch_size: 64,
        data: spec.clone(),
        fix_generator: true,
        fake_data: Some(spec),
        field_resolution: [2, 2],
        ..TrainConfig::default()
    };
    let k = train(cfg).map(|r| r.records.last().map_or(f64::NAN, |x| x.k_hat)).unwrap_or(f64::INFINITY);
    props.push(at_most("nash_identical_distributions", k, 0.05, "final k̂ with real = fake, logistic + maxgp".into()));

    let mut worst = 0.0f64;
    for _ in 0..10 {
        let p = random_dist(&mut rng, 4, 2);
        let q = random_dist(&mut rng, 3, 2);
        for k in [0.5, 2.0, 7.0] {
            worst = worst.max(scaling_check(&p, &q, k).map(|r| r.gap.abs()).unwrap_or(f64::INFINITY));
        }
    }
    props.push(at_most("k_scaling", worst, 1e-9, "10 instances, k in {0.5, 2, 7}".into()));

    let kr_subset = {
        let p = random_dist(&mut rng, 5, 2);
        let q = random_dist(&mut rng, 5, 2);
        lipgan_core::ot::kr_dual(&p, &q).map(|s| s.max_violation(DualMode::Compact)).unwrap_or(f64::INFINITY)
    };
    props.push(at_most("kr_solution_is_compact_feasible", kr_subset, 1e-9, "constraint subset".into()));
    props
}
