//! Per-primitive agreement between reverse-mode gradients and the
//! central-difference oracle, plus the mixed Hessian-vector checks.

use tensor_ad::{
    backward_grad, bind, finite_diff_grad, finite_diff_hvp, forward_eval, relative_error,
    seeded_init, Bindings, Graph, GraphBuilder, InitScheme, NodeId, Tensor, FD_STEP,
};

fn check_grads(graph: &Graph, bindings: &Bindings, tol: f64) {
    let names: Vec<String> = bindings.keys().cloned().collect();
    let grads = backward_grad(graph, bindings, &names).unwrap();
    for name in &names {
        let oracle = finite_diff_grad(
            |t: &Tensor| {
                let mut b = bindings.clone();
                b.insert(name.clone(), t.clone());
                forward_eval(graph, &b)
            },
            &bindings[name],
            FD_STEP,
        )
        .unwrap();
        let err = relative_error(grads.expect(name), &oracle);
        assert!(
            err <= tol,
            "leaf {name}: relative error {err} exceeds {tol}\nanalytic {:?}\noracle {:?}",
            grads.expect(name).data(),
            oracle.data()
        );
    }
}

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
    seeded_init(shape, InitScheme::Uniform { lo: -2.0, hi: 2.0 }, seed)
}

/// Keep relu inputs away from the kink so the symmetric oracle is valid.
fn rand_tensor_off_kink(shape: &[usize], seed: u64) -> Tensor {
    rand_tensor(shape, seed).map(|v| if v.abs() < 1e-3 { v + 2e-3 } else { v })
}

#[test]
fn elementwise_binary_ops() {
    for (i, op) in ["add", "sub", "mul", "div"].iter().enumerate() {
        let mut gb = GraphBuilder::new();
        let a = gb.leaf("a");
        let b = gb.leaf("b");
        let c = match *op {
            "add" => gb.add(a, b),
            "sub" => gb.sub(a, b),
            "mul" => gb.mul(a, b),
            _ => gb.div(a, b),
        };
        let out = gb.sum(c);
        let g = gb.finish(out).unwrap();
        // Keep divisors away from zero.
        let bv = rand_tensor(&[2, 3], 100 + i as u64).map(|v| v + 3.0);
        let bindings = bind([("a", rand_tensor(&[2, 3], i as u64)), ("b", bv)]);
        check_grads(&g, &bindings, 1e-6);
    }
}

#[test]
fn unary_ops() {
    for (i, op) in ["neg", "scale", "tanh", "relu", "sigmoid"].iter().enumerate() {
        let mut gb = GraphBuilder::new();
        let x = gb.leaf("x");
        let y: NodeId = match *op {
            "neg" => gb.neg(x),
            "scale" => gb.scale(x, -1.7),
            "tanh" => gb.tanh(x),
            "relu" => gb.relu(x),
            _ => gb.sigmoid(x),
        };
        let out = gb.sum(y);
        let g = gb.finish(out).unwrap();
        let bindings = bind([("x", rand_tensor_off_kink(&[7], 200 + i as u64))]);
        check_grads(&g, &bindings, 1e-6);
    }
}

#[test]
fn reductions() {
    for (i, op) in ["sum", "mean", "squared_norm"].iter().enumerate() {
        let mut gb = GraphBuilder::new();
        let x = gb.leaf("x");
        let y = match *op {
            "sum" => gb.sum(x),
            "mean" => gb.mean(x),
            _ => gb.squared_norm(x),
        };
        let g = gb.finish(y).unwrap();
        let bindings = bind([("x", rand_tensor(&[3, 2], 300 + i as u64))]);
        check_grads(&g, &bindings, 1e-6);
    }
}

#[test]
fn matmul_add_row_scale_by_index() {
    let mut gb = GraphBuilder::new();
    let a = gb.leaf("a");
    let b = gb.leaf("b");
    let row = gb.leaf("row");
    let logits = gb.leaf("logits");
    let prod = gb.matmul(a, b);
    let shifted = gb.add_row(prod, row);
    let sm = gb.softmax(logits);
    let coeff = gb.index(sm, 1);
    let scaled = gb.scale_by(shifted, coeff);
    let flat = gb.flatten(scaled);
    let out = gb.squared_norm(flat);
    let g = gb.finish(out).unwrap();
    let bindings = bind([
        ("a", rand_tensor(&[3, 2], 1)),
        ("b", rand_tensor(&[2, 4], 2)),
        ("row", rand_tensor(&[4], 3)),
        ("logits", rand_tensor(&[3], 4)),
    ]);
    check_grads(&g, &bindings, 1e-6);
}

#[test]
fn softmax_rank2() {
    let mut gb = GraphBuilder::new();
    let x = gb.leaf("x");
    let w = gb.leaf("w");
    let sm = gb.softmax(x);
    let weighted = gb.mul(sm, w);
    let out = gb.sum(weighted);
    let g = gb.finish(out).unwrap();
    let bindings = bind([("x", rand_tensor(&[4, 3], 11)), ("w", rand_tensor(&[4, 3], 12))]);
    check_grads(&g, &bindings, 1e-6);
}

#[test]
fn cross_entropy_logits_grad() {
    let mut gb = GraphBuilder::new();
    let z = gb.leaf("z");
    let t = gb.leaf("t");
    let ce = gb.cross_entropy_logits(z, t);
    let out = gb.mean(ce);
    let g = gb.finish(out).unwrap();
    let mut targets = Tensor::zeros(&[4, 3]);
    for i in 0..4 {
        targets.data_mut()[i * 3 + (i % 3)] = 1.0;
    }
    let bindings = bind([("z", rand_tensor(&[4, 3], 21)), ("t", targets)]);
    check_grads(&g, &bindings, 1e-6);
}

/// Two-parameter logistic model on a single sample: gradient matches the
/// oracle to 1e-7 relative.
#[test]
fn logistic_model_tight_agreement() {
    let mut gb = GraphBuilder::new();
    let w = gb.leaf("w");
    let x = gb.leaf("x");
    let t = gb.leaf("t");
    let z = gb.matmul(x, w);
    let ce = gb.cross_entropy_logits(z, t);
    let out = gb.mean(ce);
    let g = gb.finish(out).unwrap();
    let bindings = bind([
        ("w", Tensor::new(vec![2, 2], vec![0.4, -0.3, 0.7, 0.1]).unwrap()),
        ("x", Tensor::new(vec![1, 2], vec![1.2, -0.8]).unwrap()),
        ("t", Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap()),
    ]);
    let grads = backward_grad(&g, &bindings, &["w"]).unwrap();
    let oracle = finite_diff_grad(
        |wt: &Tensor| {
            let mut b = bindings.clone();
            b.insert("w".into(), wt.clone());
            forward_eval(&g, &b)
        },
        &bindings["w"],
        FD_STEP,
    )
    .unwrap();
    let err = relative_error(grads.expect("w"), &oracle);
    assert!(err <= 1e-7, "relative error {err}");
}

/// Random 10-dimensional quadratic: the finite-difference HVP matches the
/// explicitly assembled Hessian product.
#[test]
fn hvp_matches_explicit_hessian() {
    let dim = 10;
    let m = seeded_init(&[dim, dim], InitScheme::Uniform { lo: -1.0, hi: 1.0 }, 5);
    // Symmetrize: H = (M + M^T) / 2.
    let mt = m.transpose().unwrap();
    let h = m.add(&mt).unwrap().scale(0.5);
    let grad_fn = |p: &Tensor| {
        let col = Tensor::new(vec![dim, 1], p.data().to_vec()).unwrap();
        let hp = h.matmul(&col).unwrap();
        Tensor::new(vec![dim], hp.data().to_vec())
    };
    let params = rand_tensor(&[dim], 6);
    let dir = rand_tensor(&[dim], 7);
    let fd = finite_diff_hvp(grad_fn, &params, &dir).unwrap();
    let exact = grad_fn(&dir).unwrap();
    let err = relative_error(&fd, &exact);
    assert!(err <= 1e-6, "relative error {err}");
}

#[test]
fn hvp_bilinear_within_1e10() {
    // L = a^T M w  =>  grad_a = M w is linear in w; the finite difference
    // is exact up to rounding.
    let m = seeded_init(&[4, 4], InitScheme::Uniform { lo: -1.0, hi: 1.0 }, 8);
    let grad_fn = |w: &Tensor| {
        let col = Tensor::new(vec![4, 1], w.data().to_vec()).unwrap();
        let mw = m.matmul(&col).unwrap();
        Tensor::new(vec![4], mw.data().to_vec())
    };
    let w = rand_tensor(&[4], 9);
    let v = rand_tensor(&[4], 10);
    let fd = finite_diff_hvp(grad_fn, &w, &v).unwrap();
    let exact = grad_fn(&v).unwrap();
    assert!(relative_error(&fd, &exact) <= 1e-10);
}
