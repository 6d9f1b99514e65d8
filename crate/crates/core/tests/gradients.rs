//! Reverse-mode gradients against central finite differences.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recurdepth::ndcore::{NdError, Tape, Tensor, Var, LAYER_NORM_EPS};

type Graph = dyn Fn(&mut Tape, &[Var]) -> Var;

/// Central differences with step `h` over every input coordinate.
fn numeric_grads(inputs: &[Tensor], graph: &Graph, h: f64) -> Vec<Vec<f64>> {
    let eval = |xs: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = graph(&mut tape, &vars);
        tape.value(out).item().unwrap()
    };
    let mut out = Vec::new();
    for i in 0..inputs.len() {
        let mut g = Vec::new();
        for j in 0..inputs[i].numel() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            g.push((eval(&plus) - eval(&minus)) / (2.0 * h));
        }
        out.push(g);
    }
    out
}

fn analytic_grads(inputs: &[Tensor], graph: &Graph) -> Vec<Vec<f64>> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = graph(&mut tape, &vars);
    let grads = tape.backward(out).unwrap();
    vars.iter()
        .zip(inputs)
        .map(|(&v, t)| grads.get_or_zeros(v, t.numel()))
        .collect()
}

/// Relative error with a floor of 1 on the denominator scale so near-zero
/// gradients are compared absolutely.
fn assert_close(analytic: &[Vec<f64>], numeric: &[Vec<f64>], tol: f64) {
    for (a, n) in analytic.iter().zip(numeric) {
        for (x, y) in a.iter().zip(n) {
            let rel = (x - y).abs() / x.abs().max(y.abs()).max(1.0);
            assert!(rel <= tol, "analytic {x} vs numeric {y} (rel {rel:e})");
        }
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

fn check(inputs: Vec<Tensor>, graph: &Graph) {
    let a = analytic_grads(&inputs, graph);
    let n = numeric_grads(&inputs, graph, 1e-6);
    assert_close(&a, &n, 1e-5);
}

#[test]
fn sum_gives_ones() {
    let x = Tensor::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
    let g = analytic_grads(&[x], &|t, v| t.sum(v[0]).unwrap());
    assert_eq!(g[0], vec![1.0; 4]);
}

#[test]
fn sum_tanh_gives_sech_squared() {
    let x = Tensor::from_rows(&[vec![0.3, -1.2, 2.5]]).unwrap();
    let g = analytic_grads(&[x.clone()], &|t, v| {
        let y = t.tanh(v[0]).unwrap();
        t.sum(y).unwrap()
    });
    for (gi, xi) in g[0].iter().zip(x.data()) {
        assert!((gi - (1.0 - xi.tanh().powi(2))).abs() < 1e-15);
    }
}

#[test]
fn each_unary_op_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&mut rng, &[3, 4], 1.5);
    let ops: Vec<(&str, Box<Graph>)> = vec![
        ("tanh", Box::new(|t, v| { let y = t.tanh(v[0]).unwrap(); t.sum(y).unwrap() })),
        ("sigmoid", Box::new(|t, v| { let y = t.sigmoid(v[0]).unwrap(); t.sum(y).unwrap() })),
        ("exp", Box::new(|t, v| { let y = t.exp(v[0]).unwrap(); t.mean(y).unwrap() })),
        ("square", Box::new(|t, v| { let y = t.square(v[0]).unwrap(); t.sum(y).unwrap() })),
        ("affine", Box::new(|t, v| { let y = t.affine(v[0], -2.5, 0.3).unwrap(); let y = t.square(y).unwrap(); t.sum(y).unwrap() })),
        ("log_softmax", Box::new(|t, v| { let y = t.log_softmax(v[0]).unwrap(); let y = t.gather(y, &[0, 3, 1]).unwrap(); t.sum(y).unwrap() })),
        ("sum_rows", Box::new(|t, v| { let y = t.sum_rows(v[0]).unwrap(); let y = t.square(y).unwrap(); t.sum(y).unwrap() })),
    ];
    for (name, g) in &ops {
        let a = analytic_grads(&[x.clone()], g.as_ref());
        let n = numeric_grads(&[x.clone()], g.as_ref(), 1e-6);
        for (ai, ni) in a[0].iter().zip(&n[0]) {
            let rel = (ai - ni).abs() / ai.abs().max(ni.abs()).max(1.0);
            assert!(rel <= 1e-5, "{name}: {ai} vs {ni}");
        }
    }
}

#[test]
fn relu_and_clamp_away_from_kinks() {
    // Inputs kept at least 0.1 from the kink points.
    let x = Tensor::from_rows(&[vec![-0.9, -0.2, 0.35, 0.6, 1.4, 2.0]]).unwrap();
    check(vec![x.clone()], &|t, v| {
        let y = t.relu(v[0]).unwrap();
        let y = t.square(y).unwrap();
        t.sum(y).unwrap()
    });
    check(vec![x], &|t, v| {
        let y = t.clamp(v[0], -0.5, 0.8).unwrap();
        let y = t.square(y).unwrap();
        t.sum(y).unwrap()
    });
}

#[test]
fn binary_ops_and_concat() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random(&mut rng, &[2, 3], 1.0);
    let b = random(&mut rng, &[2, 3], 1.0);
    check(vec![a.clone(), b.clone()], &|t, v| {
        let s = t.add(v[0], v[1]).unwrap();
        let d = t.sub(v[0], v[1]).unwrap();
        let p = t.mul(s, d).unwrap();
        let m = t.minimum(p, v[0]).unwrap();
        let c = t.concat(m, v[1]).unwrap();
        let c = t.tanh(c).unwrap();
        t.sum(c).unwrap()
    });
    check(vec![a.clone()], &|t, v| {
        let p = t.mul(v[0], v[0]).unwrap();
        t.mean(p).unwrap()
    });
}

#[test]
fn matmul_add_and_layer_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&mut rng, &[4, 5], 1.0);
    let w = random(&mut rng, &[5, 3], 1.0);
    let b = random(&mut rng, &[3], 1.0);
    let g = random(&mut rng, &[3], 1.0);
    let be = random(&mut rng, &[3], 1.0);
    check(vec![x, w, b, g, be], &|t, v| {
        let h = t.matmul_add(v[0], v[1], v[2]).unwrap();
        let h = t.layer_norm(h, v[3], v[4], LAYER_NORM_EPS).unwrap();
        let h = t.sigmoid(h).unwrap();
        let h = t.log_softmax(h).unwrap();
        let h = t.gather(h, &[2, 0, 1, 1]).unwrap();
        t.sum(h).unwrap()
    });
}

#[test]
fn backward_is_repeatable_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&mut rng, &[3, 4], 1.0);
    let w = random(&mut rng, &[4, 4], 1.0);
    let b = random(&mut rng, &[4], 1.0);
    let mut tape = Tape::new();
    let (vx, vw, vb) = (tape.leaf(x), tape.leaf(w), tape.leaf(b));
    let h = tape.matmul_add(vx, vw, vb).unwrap();
    let h = tape.tanh(h).unwrap();
    let loss = tape.sum(h).unwrap();
    let g1 = tape.backward(loss).unwrap();
    let g2 = tape.backward(loss).unwrap();
    for v in [vx, vw, vb] {
        let (a, b) = (g1.get(v).unwrap(), g2.get(v).unwrap());
        assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn backward_errors() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::zeros(&[2, 2]));
    assert!(matches!(tape.backward(x), Err(NdError::NonScalarLoss(_))));
    let other = Tape::new();
    assert!(matches!(other.backward(x), Err(NdError::NoTape(_))));
}

#[test]
fn layer_norm_rows_are_standardized() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let x = random(&mut rng, &[3, 16], 4.0);
        let out = recurdepth::ndcore::layer_norm(
            &x,
            &Tensor::filled(&[16], 1.0),
            &Tensor::zeros(&[16]),
            LAYER_NORM_EPS,
        )
        .unwrap();
        for i in 0..3 {
            let row = out.row(i);
            let mean = row.iter().sum::<f64>() / 16.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
            let xr = x.row(i);
            let xm = xr.iter().sum::<f64>() / 16.0;
            let xv = xr.iter().map(|v| (v - xm).powi(2)).sum::<f64>() / 16.0;
            assert!(mean.abs() <= 1e-9);
            assert!((var - xv / (xv + LAYER_NORM_EPS)).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn random_composite_graph_matches_finite_differences(seed in any::<u64>(), rows in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[rows, 3], 1.0);
        let w1 = random(&mut rng, &[3, 4], 1.0);
        let b1 = random(&mut rng, &[4], 0.5);
        let w2 = random(&mut rng, &[8, 2], 1.0);
        let b2 = random(&mut rng, &[2], 0.5);
        let g = random(&mut rng, &[4], 1.0);
        let be = random(&mut rng, &[4], 1.0);
        let inputs = vec![x, w1, b1, w2, b2, g, be];
        let graph: &Graph = &|t, v| {
            let h = t.matmul_add(v[0], v[1], v[2]).unwrap();
            let n = t.layer_norm(h, v[5], v[6], LAYER_NORM_EPS).unwrap();
            let s = t.sigmoid(n).unwrap();
            let th = t.tanh(h).unwrap();
            let one_minus = t.affine(s, -1.0, 1.0).unwrap();
            let mix = t.mul(one_minus, th).unwrap();
            let c = t.concat(mix, s).unwrap();
            let o = t.matmul_add(c, v[3], v[4]).unwrap();
            let lp = t.log_softmax(o).unwrap();
            let e = t.exp(lp).unwrap();
            let ent = t.mul(e, lp).unwrap();
            let r = t.sum_rows(ent).unwrap();
            t.mean(r).unwrap()
        };
        let a = analytic_grads(&inputs, graph);
        let n = numeric_grads(&inputs, graph, 1e-6);
        for (ai, ni) in a.iter().flatten().zip(n.iter().flatten()) {
            let rel = (ai - ni).abs() / ai.abs().max(ni.abs()).max(1.0);
            prop_assert!(rel <= 1e-5, "{} vs {}", ai, ni);
        }
    }
}

/// `out = I + f * (c - I)` from primitive ops.
fn composed_iru(t: &mut Tape, v: &[Var]) -> Var {
    let (x, c, fw, fb, iw, ib) = (v[0], v[1], v[2], v[3], v[4], v[5]);
    let tc = t.tanh(c).unwrap();
    let xc = t.concat(x, tc).unwrap();
    let pre_f = t.matmul_add(xc, fw, fb).unwrap();
    let f = t.sigmoid(pre_f).unwrap();
    let pre_i = t.matmul_add(xc, iw, ib).unwrap();
    let i = t.tanh(pre_i).unwrap();
    let gap = t.sub(c, i).unwrap();
    let kept = t.mul(f, gap).unwrap();
    t.add(i, kept).unwrap()
}

fn iru_inputs(seed: u64, batch: usize, h: usize) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        random(&mut rng, &[batch, h], 1.5),
        random(&mut rng, &[batch, h], 2.0),
        random(&mut rng, &[2 * h, h], 0.8),
        random(&mut rng, &[h], 0.5),
        random(&mut rng, &[2 * h, h], 0.8),
        random(&mut rng, &[h], 0.5),
        random(&mut rng, &[batch, h], 1.0),
    ]
}

fn weighted(t: &mut Tape, out: Var, w: Var) -> Var {
    let p = t.mul(out, w).unwrap();
    t.sum(p).unwrap()
}

#[test]
fn fused_iru_matches_composed_ops() {
    let inputs = iru_inputs(17, 5, 4);
    let fused: &Graph = &|t, v| {
        let out = t.iru(v[0], v[1], v[2], v[3], v[4], v[5]).unwrap();
        weighted(t, out, v[6])
    };
    let composed: &Graph = &|t, v| {
        let out = composed_iru(t, v);
        weighted(t, out, v[6])
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let a = tape.iru(vars[0], vars[1], vars[2], vars[3], vars[4], vars[5]).unwrap();
    let b = composed_iru(&mut tape, &vars);
    assert!(tape.value(a).max_abs_diff(tape.value(b)) <= 1e-15);

    let ga = analytic_grads(&inputs, fused);
    let gb = analytic_grads(&inputs, composed);
    for (x, y) in ga.iter().flatten().zip(gb.iter().flatten()) {
        assert!((x - y).abs() <= 1e-13, "{x} vs {y}");
    }
    assert_close(&ga, &numeric_grads(&inputs, fused, 1e-6), 1e-7);
}

#[test]
fn fused_iru_rejects_mismatched_shapes() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::zeros(&[2, 3]));
    let c = tape.leaf(Tensor::zeros(&[2, 4]));
    let w = tape.leaf(Tensor::zeros(&[8, 4]));
    let b = tape.leaf(Tensor::zeros(&[4]));
    assert!(tape.iru(x, c, w, b, w, b).is_err());
}
