use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scalar(g: &mut ExprGraph, id: NodeId) -> f64 {
    g.eval(id).unwrap().item().unwrap()
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// A relu MLP `x → f(x)` with its own parameter inputs.
struct Mlp {
    x: NodeId,
    params: Vec<NodeId>,
    out: NodeId,
    sizes: Vec<usize>,
}

fn build_mlp(g: &mut ExprGraph, sizes: &[usize]) -> Mlp {
    let x = g.input("x");
    let mut h = x;
    let mut params = Vec::new();
    for l in 0..sizes.len() - 1 {
        let wt = g.input("w");
        let b = g.input("b");
        params.push(wt);
        params.push(b);
        let z = g.matmul(h, wt);
        let z = g.add_row(z, b);
        h = if l + 2 < sizes.len() { g.relu(z) } else { z };
    }
    Mlp { x, params, out: h, sizes: sizes.to_vec() }
}

fn bind_mlp(g: &mut ExprGraph, m: &Mlp, rng: &mut ChaCha8Rng, batch: usize) -> Vec<Tensor> {
    let mut values = Vec::new();
    for (i, w) in m.sizes.windows(2).enumerate() {
        let wt = random_tensor(rng, &[w[0], w[1]], 1.0);
        let b = random_tensor(rng, &[w[1]], 0.5);
        g.bind(m.params[2 * i], wt.clone()).unwrap();
        g.bind(m.params[2 * i + 1], b.clone()).unwrap();
        values.push(wt);
        values.push(b);
    }
    let x = random_tensor(rng, &[batch, m.sizes[0]], 2.0);
    g.bind(m.x, x.clone()).unwrap();
    values.push(x);
    values
}

/// Straight-line forward pass; returns outputs and every preactivation.
fn mlp_by_hand(sizes: &[usize], values: &[Tensor]) -> (Vec<f64>, Vec<f64>) {
    let x = values.last().unwrap();
    let mut pre = Vec::new();
    let mut rows: Vec<Vec<f64>> = x.row_iter().map(|r| r.to_vec()).collect();
    let layers = sizes.len() - 1;
    for l in 0..layers {
        let (w, b) = (&values[2 * l], &values[2 * l + 1]);
        let (k, m) = (sizes[l], sizes[l + 1]);
        rows = rows
            .iter()
            .map(|r| {
                (0..m)
                    .map(|j| {
                        let mut s = b.data()[j];
                        for p in 0..k {
                            s += r[p] * w.data()[p * m + j];
                        }
                        pre.push(s);
                        if l + 1 < layers {
                            s.max(0.0)
                        } else {
                            s
                        }
                    })
                    .collect()
            })
            .collect();
    }
    (rows.into_iter().flatten().collect(), pre)
}

/// True if some relu preactivation is too close to the kink for central
/// differences with a small step to be meaningful.
fn near_kink(pre: &[f64]) -> bool {
    pre.iter().any(|v| v.abs() < 1e-4)
}

fn random_sizes(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let hidden = rng.random_range(1..=2);
    let mut sizes = vec![rng.random_range(1..=3)];
    for _ in 0..hidden {
        sizes.push(rng.random_range(2..=8));
    }
    sizes.push(1);
    sizes
}

#[test]
fn square_and_sigmoid_values() {
    let mut g = ExprGraph::new();
    let x = g.input("x");
    let y = g.square(x);
    let s = g.sigmoid(x);
    g.bind(x, Tensor::scalar(3.0)).unwrap();
    assert_eq!(scalar(&mut g, y), 9.0);
    g.bind(x, Tensor::scalar(0.0)).unwrap();
    assert_eq!(scalar(&mut g, s), 0.5);
}

#[test]
fn mlp_forward_matches_direct_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut g = ExprGraph::new();
    let m = build_mlp(&mut g, &[2, 8, 1]);
    let values = bind_mlp(&mut g, &m, &mut rng, 5);
    // mean(relu(Wx + b)) over the hidden layer, straight from the numbers.
    let z = g.matmul(m.x, m.params[0]);
    let z = g.add_row(z, m.params[1]);
    let h = g.relu(z);
    let y = g.mean(h);
    let got = scalar(&mut g, y);
    let (_, pre) = mlp_by_hand(&[2, 8, 1], &values);
    let hidden: Vec<f64> = pre[..5 * 8].iter().map(|v| v.max(0.0)).collect();
    let expected = hidden.iter().sum::<f64>() / hidden.len() as f64;
    assert!((got - expected).abs() <= 1e-14 * expected.abs().max(1.0));

    let out = g.eval(m.out).unwrap().data().to_vec();
    let (by_hand, _) = mlp_by_hand(&[2, 8, 1], &values);
    for (a, b) in out.iter().zip(&by_hand) {
        assert!((a - b).abs() <= 1e-13 * b.abs().max(1.0));
    }
}

#[test]
fn first_derivatives() {
    let mut g = ExprGraph::new();
    let x = g.input("x");
    let y = g.square(x);
    let s = g.sigmoid(x);
    g.bind(x, Tensor::scalar(3.0)).unwrap();
    assert_eq!(g.gradient(y, &[x]).unwrap()[0].item(), Some(6.0));
    g.bind(x, Tensor::scalar(0.0)).unwrap();
    assert_eq!(g.gradient(s, &[x]).unwrap()[0].item(), Some(0.25));
}

#[test]
fn gradient_leaves_graph_unchanged() {
    let mut g = ExprGraph::new();
    let x = g.input("x");
    let y = g.exp(x);
    g.bind(x, Tensor::scalar(0.5)).unwrap();
    let n = g.len();
    g.gradient(y, &[x]).unwrap();
    assert_eq!(g.len(), n);
}

#[test]
fn mlp_parameter_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 10 {
        let sizes = random_sizes(&mut rng);
        let mut g = ExprGraph::new();
        let m = build_mlp(&mut g, &sizes);
        let values = bind_mlp(&mut g, &m, &mut rng, 4);
        if near_kink(&mlp_by_hand(&sizes, &values).1) {
            continue;
        }
        let sq = g.square(m.out);
        let loss = g.mean(sq);
        for &p in &m.params {
            let r = fd_check(&mut g, loss, p, 1e-5).unwrap();
            assert!(r.max_rel_error <= 1e-4, "sizes {sizes:?}: {r:?}");
        }
        checked += 1;
    }
}

#[test]
fn gradient_graph_hand_examples() {
    // f = θx, g(θ) = ‖∇ₓf‖² = θ².
    let mut g = ExprGraph::new();
    let x = g.input("x");
    let th = g.input("theta");
    let f = g.mul(th, x);
    let dfdx = g.gradient_graph(f, x).unwrap();
    let pen = g.square(dfdx);
    g.bind(x, Tensor::scalar(0.7)).unwrap();
    g.bind(th, Tensor::scalar(3.0)).unwrap();
    assert_eq!(scalar(&mut g, pen), 9.0);
    assert_eq!(g.gradient(pen, &[th]).unwrap()[0].item(), Some(6.0));

    // f = θ₁x + θ₂x², at x = 1: g = (θ₁ + 2θ₂)².
    let mut g = ExprGraph::new();
    let x = g.input("x");
    let t1 = g.input("t1");
    let t2 = g.input("t2");
    let a = g.mul(t1, x);
    let x2 = g.square(x);
    let b = g.mul(t2, x2);
    let f = g.add(a, b);
    let dfdx = g.gradient_graph(f, x).unwrap();
    let pen = g.square(dfdx);
    g.bind(x, Tensor::scalar(1.0)).unwrap();
    g.bind(t1, Tensor::scalar(0.5)).unwrap();
    g.bind(t2, Tensor::scalar(-1.25)).unwrap();
    let s = 0.5 + 2.0 * -1.25;
    assert_eq!(scalar(&mut g, pen), s * s);
    let grads = g.gradient(pen, &[t1, t2]).unwrap();
    assert_eq!(grads[0].item(), Some(2.0 * s));
    assert_eq!(grads[1].item(), Some(4.0 * s));
}

/// `mean((‖∇ₓ Σf‖_row − 1)²)` for an MLP, as built for the gradient penalty.
fn gp_penalty(g: &mut ExprGraph, m: &Mlp) -> NodeId {
    let s = g.sum(m.out);
    let gx = g.gradient_graph(s, m.x).unwrap();
    let norms = g.row_norm(gx);
    let dev = g.offset(norms, -1.0);
    let sq = g.square(dev);
    g.mean(sq)
}

fn maxgp_penalty(g: &mut ExprGraph, m: &Mlp) -> NodeId {
    let s = g.sum(m.out);
    let gx = g.gradient_graph(s, m.x).unwrap();
    let norms = g.row_norm(gx);
    let mx = g.max(norms);
    g.square(mx)
}

#[test]
fn double_backward_penalties_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut checked = 0;
    while checked < 10 {
        let sizes = vec![2, rng.random_range(3..=8), 1];
        let mut g = ExprGraph::new();
        let m = build_mlp(&mut g, &sizes);
        let values = bind_mlp(&mut g, &m, &mut rng, 3);
        if near_kink(&mlp_by_hand(&sizes, &values).1) {
            continue;
        }
        for pen in [gp_penalty(&mut g, &m), maxgp_penalty(&mut g, &m)] {
            for &p in &m.params {
                let r = fd_check(&mut g, pen, p, 1e-6).unwrap();
                assert!(r.max_rel_error <= 1e-3, "{r:?}");
            }
        }
        checked += 1;
    }
}

#[test]
fn second_derivative_of_smooth_scalar() {
    // d²/dx² of tanh(x)·exp(x) at x = 0.3 against a hand formula.
    let mut g = ExprGraph::new();
    let x = g.input("x");
    let t = g.tanh(x);
    let e = g.exp(x);
    let f = g.mul(t, e);
    let d1 = g.gradient_graph(f, x).unwrap();
    let d2 = g.gradient_graph(d1, x).unwrap();
    let v: f64 = 0.3;
    g.bind(x, Tensor::scalar(v)).unwrap();
    let (th, ex) = (v.tanh(), v.exp());
    let sech2 = 1.0 - th * th;
    let expected = ex * (th + 2.0 * sech2 - 2.0 * th * sech2);
    assert!((scalar(&mut g, d2) - expected).abs() < 1e-13);
}

#[test]
fn fd_check_linear_map_is_exact() {
    let mut g = ExprGraph::new();
    let x = g.input("x");
    let w = g.constant(Tensor::matrix(3, 1, vec![0.5, -2.0, 3.25]).unwrap());
    let y = g.matmul(x, w);
    let y = g.sum(y);
    g.bind(x, Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.0, 4.0]).unwrap()).unwrap();
    let r = fd_check(&mut g, y, x, 1e-3).unwrap();
    assert!(r.max_rel_error <= 1e-9, "{r:?}");
    assert_eq!(r.coords.len(), 6);
}

#[test]
fn fd_of_exp_at_one() {
    let mut g = ExprGraph::new();
    let x = g.input("x");
    let y = g.exp(x);
    g.bind(x, Tensor::scalar(1.0)).unwrap();
    let r = fd_check(&mut g, y, x, 1e-5).unwrap();
    assert!((r.numeric[0] - core::f64::consts::E).abs() <= 1e-6);
    assert!((r.analytic[0] - core::f64::consts::E).abs() <= 1e-15);
}

#[test]
fn fd_check_random_mlps_hundred_seeds() {
    let mut done = 0;
    let mut seed = 0;
    while done < 100 {
        seed += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let sizes = random_sizes(&mut rng);
        let mut g = ExprGraph::new();
        let m = build_mlp(&mut g, &sizes);
        let values = bind_mlp(&mut g, &m, &mut rng, 3);
        if near_kink(&mlp_by_hand(&sizes, &values).1) {
            continue;
        }
        let loss = g.mean(m.out);
        for &p in &m.params {
            let r = fd_check(&mut g, loss, p, 1e-5).unwrap();
            assert!(r.max_rel_error <= 1e-4, "seed {seed}: {r:?}");
        }
        done += 1;
    }
}

#[test]
fn fd_check_restores_binding() {
    let mut g = ExprGraph::new();
    let x = g.input("x");
    let y = g.square(x);
    let y = g.sum(y);
    let v = Tensor::vector(vec![1.0, 2.0]);
    g.bind(x, v.clone()).unwrap();
    fd_check_coords(&mut g, y, x, 1e-4, &[1]).unwrap();
    assert_eq!(g.value(x), Some(&v));
}

#[test]
fn fd_check_rejects_bad_epsilon() {
    let mut g = ExprGraph::new();
    let x = g.input("x");
    g.bind(x, Tensor::scalar(1.0)).unwrap();
    for eps in [0.0, -1e-3, f64::NAN] {
        assert!(matches!(fd_check(&mut g, x, x, eps), Err(GraphError::Contract(_))));
    }
}

#[test]
fn relative_error_floor() {
    assert_eq!(relative_error(1e-12, 0.0), 1e-12 / REL_ERROR_FLOOR);
    assert_eq!(relative_error(2.0, 1.0), 0.5);
}

#[test]
fn shape_mismatch_names_node() {
    let mut g = ExprGraph::new();
    let a = g.input("a");
    let b = g.input("b");
    let c = g.add(a, b);
    g.bind(a, Tensor::vector(vec![1.0, 2.0])).unwrap();
    g.bind(b, Tensor::vector(vec![1.0, 2.0, 3.0])).unwrap();
    match g.eval(c) {
        Err(GraphError::ShapeMismatch { node, op, left, right }) => {
            assert_eq!(node, c);
            assert_eq!(op, "add");
            assert_eq!(left, vec![2]);
            assert_eq!(right, vec![3]);
        }
        other => panic!("{other:?}"),
    }
    let msg = g.eval(c).unwrap_err().to_string();
    assert!(msg.contains(&c.to_string()), "{msg}");
}

#[test]
fn domain_errors() {
    let mut g = ExprGraph::new();
    let x = g.input("x");
    let l = g.log(x);
    let s = g.sqrt(x);
    g.bind(x, Tensor::vector(vec![1.0, -2.0])).unwrap();
    assert_eq!(g.eval(l), Err(GraphError::Domain { node: l, op: "log", value: -2.0 }));
    assert_eq!(g.eval(s), Err(GraphError::Domain { node: s, op: "sqrt", value: -2.0 }));
}

#[test]
fn log_of_zero_is_non_finite() {
    let mut g = ExprGraph::new();
    let x = g.input("x");
    let l = g.log(x);
    g.bind(x, Tensor::scalar(0.0)).unwrap();
    assert_eq!(g.eval(l), Err(GraphError::NonFinite { node: l, op: "log" }));
}

#[test]
fn unbound_input() {
    let mut g = ExprGraph::new();
    let x = g.input("x");
    let y = g.exp(x);
    assert_eq!(g.eval(y), Err(GraphError::Unbound { node: x, name: "x".into() }));
}

#[test]
fn bind_rejects_non_inputs() {
    let mut g = ExprGraph::new();
    let c = g.scalar(1.0);
    assert_eq!(g.bind(c, Tensor::scalar(2.0)), Err(GraphError::NotAnInput(c)));
}

#[test]
fn non_scalar_output_is_contract_error() {
    let mut g = ExprGraph::new();
    let x = g.input("x");
    let y = g.square(x);
    g.bind(x, Tensor::vector(vec![1.0, 2.0])).unwrap();
    let err = g.gradient(y, &[x]).unwrap_err();
    assert!(matches!(err, GraphError::NonScalarOutput { .. }), "{err:?}");
}

#[test]
fn unsupported_op_is_reported_by_kind() {
    let mut g = ExprGraph::new();
    let x = g.input("x");
    let u = g.row_normalize(x);
    let s = g.sum(u);
    let err = g.gradient_graph(s, x).unwrap_err();
    assert_eq!(err, GraphError::Unsupported { op: "row_normalize" });
    assert!(err.to_string().contains("row_normalize"));
}

#[test]
fn relu_second_derivative_is_zero_at_kink() {
    let mut g = ExprGraph::new();
    let x = g.input("x");
    let r = g.relu(x);
    let d1 = g.gradient_graph(r, x).unwrap();
    let d2 = g.gradient_graph(d1, x).unwrap();
    for v in [-1.0, 0.0, 1.0] {
        g.bind(x, Tensor::scalar(v)).unwrap();
        assert_eq!(scalar(&mut g, d2), 0.0);
        assert_eq!(scalar(&mut g, d1), if v > 0.0 { 1.0 } else { 0.0 });
    }
}

#[test]
fn max_backpropagates_to_first_tie() {
    let mut g = ExprGraph::new();
    let x = g.input("x");
    let m = g.max(x);
    g.bind(x, Tensor::vector(vec![1.0, 3.0, 3.0, 2.0])).unwrap();
    assert_eq!(scalar(&mut g, m), 3.0);
    let grad = g.gradient(m, &[x]).unwrap().remove(0);
    assert_eq!(grad.data(), &[0.0, 1.0, 0.0, 0.0]);
}

#[test]
fn unreachable_wrt_gets_zeros() {
    let mut g = ExprGraph::new();
    let x = g.input("x");
    let z = g.input("z");
    let y = g.exp(x);
    g.bind(x, Tensor::scalar(0.0)).unwrap();
    g.bind(z, Tensor::vector(vec![1.0, 2.0])).unwrap();
    let grads = g.gradient(y, &[x, z]).unwrap();
    assert_eq!(grads[0].item(), Some(1.0));
    assert_eq!(grads[1], Tensor::zeros(&[2]));
}

#[test]
fn graph_is_reusable_across_batch_sizes() {
    let mut g = ExprGraph::new();
    let m = build_mlp(&mut g, &[2, 4, 1]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    bind_mlp(&mut g, &m, &mut rng, 5);
    assert_eq!(g.eval(m.out).unwrap().shape(), &[5, 1]);
    g.bind(m.x, random_tensor(&mut rng, &[9, 2], 1.0)).unwrap();
    assert_eq!(g.eval(m.out).unwrap().shape(), &[9, 1]);
}

#[test]
fn mixed_ops_gradients_match_finite_differences() {
    // Exercises the less common ops: div, mul_col, row_dot, mul_scalar,
    // sum_rows, transpose, softplus, log, sqrt.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut g = ExprGraph::new();
    let a = g.input("a");
    let c = g.input("c");
    let s = g.input("s");
    let at = g.transpose(a);
    let gram = g.matmul(a, at); // [n,n]
    let rs = g.sum_rows(gram); // [n]
    let sp = g.softplus(rs);
    let w = g.mul_col(a, sp);
    let d = g.row_dot(w, a);
    let sq = g.square(c);
    let den = g.offset(sq, 1.0);
    let q = g.div(d, den);
    let e = g.mul_scalar(q, s);
    let ee = g.square(e);
    let ee = g.offset(ee, 1.0);
    let r = g.sqrt(ee);
    let l = g.log(r);
    let out = g.sum(l);
    g.bind(a, random_tensor(&mut rng, &[3, 2], 1.0)).unwrap();
    g.bind(c, random_tensor(&mut rng, &[3], 1.0)).unwrap();
    g.bind(s, Tensor::scalar(0.7)).unwrap();
    for wrt in [a, c, s] {
        let r = fd_check(&mut g, out, wrt, 1e-6).unwrap();
        assert!(r.max_rel_error <= 1e-6, "{r:?}");
    }
}

fn smooth_graph(g: &mut ExprGraph, x: NodeId, w: NodeId) -> (NodeId, NodeId) {
    let z = g.matmul(x, w);
    let t = g.tanh(z);
    let f = g.sum(t);
    let sq = g.square(x);
    let sg = g.sigmoid(sq);
    let g2 = g.mean(sg);
    (f, g2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = ExprGraph::new();
        let x = g.input("x");
        let w = g.input("w");
        let (f, h) = smooth_graph(&mut g, x, w);
        let fa = g.scale(f, a);
        let hb = g.scale(h, b);
        let combo = g.add(fa, hb);
        g.bind(x, random_tensor(&mut rng, &[4, 3], 1.5)).unwrap();
        g.bind(w, random_tensor(&mut rng, &[3, 2], 1.5)).unwrap();
        let gc = g.gradient(combo, &[x, w]).unwrap();
        let gf = g.gradient(f, &[x, w]).unwrap();
        let gh = g.gradient(h, &[x, w]).unwrap();
        for k in 0..2 {
            for ((c, u), v) in gc[k].data().iter().zip(gf[k].data()).zip(gh[k].data()) {
                let expect = a * u + b * v;
                prop_assert!((c - expect).abs() <= 1e-12 * expect.abs().max(1.0));
            }
        }
    }

    #[test]
    fn evaluation_is_deterministic(seed in any::<u64>()) {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut g = ExprGraph::new();
            let m = build_mlp(&mut g, &[2, 6, 6, 1]);
            bind_mlp(&mut g, &m, &mut rng, 4);
            let pen = gp_penalty(&mut g, &m);
            let v = g.eval(pen).unwrap().clone();
            let grads = g.gradient(pen, &m.params).unwrap();
            (v, grads)
        };
        let (v1, g1) = run();
        let (v2, g2) = run();
        prop_assert_eq!(v1.data()[0].to_bits(), v2.data()[0].to_bits());
        for (a, b) in g1.iter().zip(&g2) {
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn rebinding_matches_fresh_graph(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x1 = random_tensor(&mut rng, &[3, 3], 2.0);
        let x2 = random_tensor(&mut rng, &[3, 3], 2.0);
        let wv = random_tensor(&mut rng, &[3, 2], 2.0);

        let mut g = ExprGraph::new();
        let x = g.input("x");
        let w = g.input("w");
        let (f, _) = smooth_graph(&mut g, x, w);
        g.bind(w, wv.clone()).unwrap();
        g.bind(x, x1).unwrap();
        g.eval(f).unwrap();
        g.gradient(f, &[w]).unwrap();
        g.bind(x, x2.clone()).unwrap();
        let reused = (g.eval(f).unwrap().clone(), g.gradient(f, &[w]).unwrap());

        let mut fresh = ExprGraph::new();
        let x = fresh.input("x");
        let w = fresh.input("w");
        let (f, _) = smooth_graph(&mut fresh, x, w);
        fresh.bind(w, wv).unwrap();
        fresh.bind(x, x2).unwrap();
        let new = (fresh.eval(f).unwrap().clone(), fresh.gradient(f, &[w]).unwrap());
        prop_assert_eq!(reused, new);
    }
}
