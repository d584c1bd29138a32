//! Engine-level behavior: problem validation, one-step updates against
//! hand-rolled arithmetic, hypergradients against closed forms and
//! finite-difference oracles, and solve-loop contracts.

use mlo_engine::{
    AccessLog, DataSources, GroupState, MLOProblem, ParamGroup, Role, StageSpec, TensorGroup,
    TermKind, TermSense, ValTerm, ValidationSpec,
};
use tensor_ad::{
    finite_diff_grad, relative_error, Bindings, Graph, GraphBuilder, Tensor, FD_STEP,
};

fn scalar_group(name: &str, role: Role, lr: f64, v: f64) -> ParamGroup {
    ParamGroup::new(
        name,
        role,
        lr,
        TensorGroup::new(vec![(format!("{name}.0"), Tensor::from_vec(vec![v]))]),
    )
    .unwrap()
}

fn vec_group(name: &str, role: Role, lr: f64, v: Vec<f64>) -> ParamGroup {
    ParamGroup::new(
        name,
        role,
        lr,
        TensorGroup::new(vec![(format!("{name}.0"), Tensor::from_vec(v))]),
    )
    .unwrap()
}

/// loss = 1/2 ||w - a||^2 over leaves `w.0`, `a.0`.
fn quadratic_pull(w_leaf: &str, a_leaf: &str) -> Graph {
    let mut gb = GraphBuilder::new();
    let w = gb.leaf(w_leaf);
    let a = gb.leaf(a_leaf);
    let d = gb.sub(w, a);
    let n = gb.squared_norm(d);
    let out = gb.scale(n, 0.5);
    gb.finish(out).unwrap()
}

/// loss = 1/2 ||x - c||^2 for a constant target.
fn quadratic_to_const(leaf: &str, c: f64, dim: usize) -> Graph {
    let mut gb = GraphBuilder::new();
    let x = gb.leaf(leaf);
    let target = gb.constant(Tensor::from_vec(vec![c; dim]));
    let d = gb.sub(x, target);
    let n = gb.squared_norm(d);
    let out = gb.scale(n, 0.5);
    gb.finish(out).unwrap()
}

fn bilevel_quadratic(eta_w: f64, eta_a: f64, w0: f64, a0: f64, c: f64) -> MLOProblem {
    let groups = vec![
        scalar_group("w", Role::Weights, eta_w, w0),
        scalar_group("a", Role::Architecture, eta_a, a0),
    ];
    let stages = vec![StageSpec {
        index: 1,
        active: vec!["w".into()],
        supporting: vec!["a".into()],
        loss: quadratic_pull("w.0", "a.0"),
        interaction: None,
        tradeoff: 0.0,
        data: vec![],
        discard_after: vec![],
    }];
    let validation = ValidationSpec {
        remaining: vec!["a".into()],
        terms: vec![ValTerm {
            name: "val".into(),
            kind: TermKind::Plain(quadratic_to_const("~w.0", c, 1)),
            weight: 1.0,
            sense: TermSense::Minimize,
        }],
        ascend: vec![],
        data: vec![],
    };
    MLOProblem::build(groups, stages, validation).unwrap()
}

#[test]
fn build_accepts_minimal_bilevel() {
    let p = bilevel_quadratic(0.1, 0.05, 1.0, 0.0, 2.0);
    assert_eq!(p.stage_count(), 1);
}

#[test]
fn build_rejects_reuse_after_learned() {
    let groups = vec![
        scalar_group("w", Role::Weights, 0.1, 1.0),
        scalar_group("u", Role::Encoder, 0.1, 1.0),
        scalar_group("a", Role::Architecture, 0.1, 0.0),
    ];
    let stages = vec![
        StageSpec {
            index: 1,
            active: vec!["w".into()],
            supporting: vec!["a".into()],
            loss: quadratic_pull("w.0", "a.0"),
            interaction: None,
            tradeoff: 0.0,
            data: vec![],
            discard_after: vec![],
        },
        StageSpec {
            index: 2,
            active: vec!["u".into()],
            // `w` was active in stage 1 and may not support stage 2.
            supporting: vec!["w".into()],
            loss: quadratic_pull("u.0", "w.0"),
            interaction: None,
            tradeoff: 0.0,
            data: vec![],
            discard_after: vec![],
        },
    ];
    let validation = ValidationSpec {
        remaining: vec!["a".into()],
        terms: vec![ValTerm {
            name: "val".into(),
            kind: TermKind::Plain(quadratic_to_const("~u.0", 0.0, 1)),
            weight: 1.0,
            sense: TermSense::Minimize,
        }],
        ascend: vec![],
        data: vec![],
    };
    let err = MLOProblem::build(groups, stages, validation).unwrap_err();
    assert!(matches!(err, mlo_engine::EngineError::ReuseAfterLearned { .. }), "{err}");
}

#[test]
fn build_rejects_active_supporting_overlap() {
    let groups = vec![
        scalar_group("w", Role::Weights, 0.1, 1.0),
        scalar_group("a", Role::Architecture, 0.1, 0.0),
    ];
    let stages = vec![StageSpec {
        index: 1,
        active: vec!["w".into()],
        supporting: vec!["w".into(), "a".into()],
        loss: quadratic_pull("w.0", "a.0"),
        interaction: None,
        tradeoff: 0.0,
        data: vec![],
        discard_after: vec![],
    }];
    let validation = ValidationSpec {
        remaining: vec!["a".into()],
        terms: vec![],
        ascend: vec![],
        data: vec![],
    };
    let err = MLOProblem::build(groups, stages, validation).unwrap_err();
    assert!(matches!(err, mlo_engine::EngineError::ActiveSupportingOverlap { .. }), "{err}");
}

#[test]
fn build_rejects_orphan_group() {
    let groups = vec![
        scalar_group("w", Role::Weights, 0.1, 1.0),
        scalar_group("a", Role::Architecture, 0.1, 0.0),
        scalar_group("lonely", Role::Head, 0.1, 0.0),
    ];
    let stages = vec![StageSpec {
        index: 1,
        active: vec!["w".into()],
        supporting: vec!["a".into()],
        loss: quadratic_pull("w.0", "a.0"),
        interaction: None,
        tradeoff: 0.0,
        data: vec![],
        discard_after: vec![],
    }];
    let validation = ValidationSpec {
        remaining: vec!["a".into(), "lonely".into()],
        terms: vec![ValTerm {
            name: "val".into(),
            kind: TermKind::Plain(quadratic_to_const("~w.0", 0.0, 1)),
            weight: 1.0,
            sense: TermSense::Minimize,
        }],
        ascend: vec![],
        data: vec![],
    };
    // `lonely` is listed as remaining, so it is not an orphan; drop it from
    // remaining to trigger the orphan check.
    let err = MLOProblem::build(
        groups,
        stages,
        ValidationSpec { remaining: vec!["a".into()], ..validation },
    )
    .unwrap_err();
    assert!(matches!(err, mlo_engine::EngineError::RemainingMismatch { .. } | mlo_engine::EngineError::OrphanGroup { .. }), "{err}");
}

#[test]
fn one_step_update_quadratic() {
    // L = 1/2 w^2, w = 1, eta = 0.1 -> w' = 0.9
    let groups = vec![
        scalar_group("w", Role::Weights, 0.1, 1.0),
        scalar_group("a", Role::Architecture, 0.0, 0.0),
    ];
    let stages = vec![StageSpec {
        index: 1,
        active: vec!["w".into()],
        supporting: vec![],
        loss: quadratic_to_const("w.0", 0.0, 1),
        interaction: None,
        tradeoff: 0.0,
        data: vec![],
        discard_after: vec![],
    }];
    let validation = ValidationSpec {
        remaining: vec!["a".into()],
        terms: vec![ValTerm {
            name: "val".into(),
            kind: TermKind::Plain(quadratic_pull("~w.0", "a.0")),
            weight: 1.0,
            sense: TermSense::Minimize,
        }],
        ascend: vec![],
        data: vec![],
    };
    let p = MLOProblem::build(groups, stages, validation).unwrap();
    let state = p.initial_state();
    let mut log = AccessLog::default();
    let approx = mlo_engine::Approximations::default();
    let out = p
        .one_step_update(1, &state, &approx, &Bindings::new(), &mut log)
        .unwrap();
    let w = out["w"].get("w.0").unwrap().data()[0];
    assert!((w - 0.9).abs() < 1e-15, "w' = {w}");
}

#[test]
fn one_step_update_with_interaction_cancels() {
    // gamma = 1, I = 1/2 (w-2)^2, L = 1/2 w^2, w = 1, eta = 0.1:
    // w' = 1 - 0.1 (1 + (1-2)) = 1.0
    let groups = vec![
        scalar_group("w", Role::Weights, 0.1, 1.0),
        scalar_group("a", Role::Architecture, 0.0, 0.0),
    ];
    let stages = vec![StageSpec {
        index: 1,
        active: vec!["w".into()],
        supporting: vec![],
        loss: quadratic_to_const("w.0", 0.0, 1),
        interaction: Some(quadratic_to_const("w.0", 2.0, 1)),
        tradeoff: 1.0,
        data: vec![],
        discard_after: vec![],
    }];
    let validation = ValidationSpec {
        remaining: vec!["a".into()],
        terms: vec![ValTerm {
            name: "val".into(),
            kind: TermKind::Plain(quadratic_pull("~w.0", "a.0")),
            weight: 1.0,
            sense: TermSense::Minimize,
        }],
        ascend: vec![],
        data: vec![],
    };
    let p = MLOProblem::build(groups, stages, validation).unwrap();
    let state = p.initial_state();
    let mut log = AccessLog::default();
    let out = p
        .one_step_update(1, &state, &mlo_engine::Approximations::default(), &Bindings::new(), &mut log)
        .unwrap();
    let w = out["w"].get("w.0").unwrap().data()[0];
    assert!((w - 1.0).abs() < 1e-15, "w' = {w}");
}

/// Logistic stage on four points: the engine's step equals an explicit
/// softmax-gradient loop.
#[test]
fn one_step_update_matches_hand_rolled_logistic() {
    let x = vec![[0.5, -1.0], [1.5, 0.25], [-0.75, 0.5], [0.1, 1.2]];
    let labels = [0usize, 1, 0, 1];
    let w0 = vec![0.3, -0.2, 0.1, 0.4]; // [2,2] row-major
    let eta = 0.05;

    let mut gb = GraphBuilder::new();
    let w = gb.leaf("w.0");
    let xs = gb.constant(Tensor::new(vec![4, 2], x.iter().flatten().cloned().collect()).unwrap());
    let mut t = Tensor::zeros(&[4, 2]);
    for (i, &l) in labels.iter().enumerate() {
        t.data_mut()[i * 2 + l] = 1.0;
    }
    let ts = gb.constant(t);
    let z = gb.matmul(xs, w);
    let ce = gb.cross_entropy_logits(z, ts);
    let loss = gb.mean(ce);
    let loss_graph = gb.finish(loss).unwrap();

    let groups = vec![
        ParamGroup::new(
            "w",
            Role::Weights,
            eta,
            TensorGroup::new(vec![(
                "w.0".to_string(),
                Tensor::new(vec![2, 2], w0.clone()).unwrap(),
            )]),
        )
        .unwrap(),
        scalar_group("a", Role::Architecture, 0.0, 0.0),
    ];
    let stages = vec![StageSpec {
        index: 1,
        active: vec!["w".into()],
        supporting: vec![],
        loss: loss_graph,
        interaction: None,
        tradeoff: 0.0,
        data: vec![],
        discard_after: vec![],
    }];
    let validation = ValidationSpec {
        remaining: vec!["a".into()],
        terms: vec![ValTerm {
            name: "val".into(),
            kind: TermKind::Plain({
                let mut gb = GraphBuilder::new();
                let wl = gb.leaf("~w.0");
                let a = gb.leaf("a.0");
                let s = gb.squared_norm(wl);
                let sa = gb.squared_norm(a);
                let out = gb.add(s, sa);
                gb.finish(out).unwrap()
            }),
            weight: 1.0,
            sense: TermSense::Minimize,
        }],
        ascend: vec![],
        data: vec![],
    };
    let p = MLOProblem::build(groups, stages, validation).unwrap();
    let state = p.initial_state();
    let mut log = AccessLog::default();
    let out = p
        .one_step_update(1, &state, &mlo_engine::Approximations::default(), &Bindings::new(), &mut log)
        .unwrap();
    let engine_w = out["w"].get("w.0").unwrap();

    // Hand-rolled: grad = x^T (softmax(z) - t) / 4, w' = w - eta grad.
    let mut grad = vec![0.0; 4];
    for (i, xi) in x.iter().enumerate() {
        let z0 = xi[0] * w0[0] + xi[1] * w0[2];
        let z1 = xi[0] * w0[1] + xi[1] * w0[3];
        let m = z0.max(z1);
        let e0 = (z0 - m).exp();
        let e1 = (z1 - m).exp();
        let p0 = e0 / (e0 + e1);
        let p1 = e1 / (e0 + e1);
        let d = [
            p0 - if labels[i] == 0 { 1.0 } else { 0.0 },
            p1 - if labels[i] == 1 { 1.0 } else { 0.0 },
        ];
        for r in 0..2 {
            for c in 0..2 {
                grad[r * 2 + c] += xi[r] * d[c] / 4.0;
            }
        }
    }
    for i in 0..4 {
        let expect = w0[i] - eta * grad[i];
        let got = engine_w.data()[i];
        assert!((expect - got).abs() <= 1e-12, "entry {i}: {expect} vs {got}");
    }
}

#[test]
fn validation_objective_hand_quadratic() {
    // w' = w - eta (w - a); objective = 1/2 (w' - c)^2.
    let (eta_w, w0, a0, c) = (0.1, 1.0, 0.3, 2.0);
    let p = bilevel_quadratic(eta_w, 0.05, w0, a0, c);
    let state = p.initial_state();
    let mut log = AccessLog::default();
    let (obj, terms) = p
        .validation_objective(&state, &Bindings::new(), &mut log)
        .unwrap();
    let w1 = w0 - eta_w * (w0 - a0);
    let expect = 0.5 * (w1 - c) * (w1 - c);
    assert!((obj - expect).abs() < 1e-14, "{obj} vs {expect}");
    assert_eq!(terms.len(), 1);
    assert!((terms[0].value - expect).abs() < 1e-14);
}

#[test]
fn hypergradient_matches_closed_form_quadratic() {
    let (eta_w, w0, a0, c) = (0.1, 0.05, 1.0, 0.3);
    let p = bilevel_quadratic(eta_w, 0.05, w0, a0, 2.0);
    let _ = c;
    let state = p.initial_state();
    let mut log = AccessLog::default();
    let out = p.hypergradients(&state, &Bindings::new(), &mut log).unwrap();
    // G(a) = 1/2 (w(1-eta) + eta a - 2)^2; dG/da = eta (w' - 2).
    let w1 = w0 * (1.0 - eta_w) + eta_w * a0;
    let expect = eta_w * (w1 - 2.0);
    let got = out.gradients["a"].get("a.0").unwrap().data()[0];
    let rel = (got - expect).abs() / expect.abs().max(1e-12);
    assert!(rel <= 1e-6, "closed form {expect}, engine {got}");
}

#[test]
fn constant_validation_loss_leaves_remaining_unchanged() {
    let groups = vec![
        scalar_group("w", Role::Weights, 0.1, 1.0),
        scalar_group("a", Role::Architecture, 0.5, 0.7),
    ];
    let stages = vec![StageSpec {
        index: 1,
        active: vec!["w".into()],
        supporting: vec!["a".into()],
        loss: quadratic_pull("w.0", "a.0"),
        interaction: None,
        tradeoff: 0.0,
        data: vec![],
        discard_after: vec![],
    }];
    // Validation loss reads ~w but is constant in it (scaled by zero).
    let validation = ValidationSpec {
        remaining: vec!["a".into()],
        terms: vec![ValTerm {
            name: "flat".into(),
            kind: TermKind::Plain({
                let mut gb = GraphBuilder::new();
                let w = gb.leaf("~w.0");
                let s = gb.squared_norm(w);
                let z = gb.scale(s, 0.0);
                gb.finish(z).unwrap()
            }),
            weight: 1.0,
            sense: TermSense::Minimize,
        }],
        ascend: vec![],
        data: vec![],
    };
    let p = MLOProblem::build(groups, stages, validation).unwrap();
    let mut state = p.initial_state();
    let mut log = AccessLog::default();
    p.hyper_step(&mut state, &Bindings::new(), &mut log).unwrap();
    assert_eq!(state["a"].get("a.0").unwrap().data()[0], 0.7);
}

/// Nonquadratic two-stage chain: the engine hypergradient agrees with a
/// central-difference sweep of the unrolled objective within 1e-4.
#[test]
fn hypergradient_matches_fd_oracle_on_chain() {
    let dim = 3;
    let groups = vec![
        vec_group("w1", Role::Weights, 0.07, vec![0.4, -0.2, 0.6]),
        vec_group("w2", Role::Encoder, 0.09, vec![-0.3, 0.5, 0.1]),
        vec_group("a", Role::Architecture, 0.05, vec![0.2, -0.4, 0.3]),
    ];
    // Stage 1: loss = 1/2 ||w1 - tanh(a)||^2.
    let stage1_loss = {
        let mut gb = GraphBuilder::new();
        let w = gb.leaf("w1.0");
        let a = gb.leaf("a.0");
        let ta = gb.tanh(a);
        let d = gb.sub(w, ta);
        let n = gb.squared_norm(d);
        let out = gb.scale(n, 0.5);
        gb.finish(out).unwrap()
    };
    // Stage 2: loss = 1/2 ||w2 - sigmoid(a)||^2, interaction = ||w2 - ~w1||^2.
    let stage2_loss = {
        let mut gb = GraphBuilder::new();
        let w = gb.leaf("w2.0");
        let a = gb.leaf("a.0");
        let sa = gb.sigmoid(a);
        let d = gb.sub(w, sa);
        let n = gb.squared_norm(d);
        let out = gb.scale(n, 0.5);
        gb.finish(out).unwrap()
    };
    let stage2_inter = {
        let mut gb = GraphBuilder::new();
        let w = gb.leaf("w2.0");
        let prev = gb.leaf("~w1.0");
        let d = gb.sub(w, prev);
        let n = gb.squared_norm(d);
        gb.finish(n).unwrap()
    };
    // Validation: mean of tanh(~w2)^2 plus coupling to a.
    let val = {
        let mut gb = GraphBuilder::new();
        let w2 = gb.leaf("~w2.0");
        let a = gb.leaf("a.0");
        let t = gb.tanh(w2);
        let sq = gb.mul(t, t);
        let s = gb.sum(sq);
        let pa = gb.sigmoid(a);
        let paw = gb.mul(pa, w2);
        let s2 = gb.sum(paw);
        let out = gb.add(s, s2);
        gb.finish(out).unwrap()
    };
    let stages = vec![
        StageSpec {
            index: 1,
            active: vec!["w1".into()],
            supporting: vec!["a".into()],
            loss: stage1_loss,
            interaction: None,
            tradeoff: 0.0,
            data: vec![],
            discard_after: vec![],
        },
        StageSpec {
            index: 2,
            active: vec!["w2".into()],
            supporting: vec!["a".into()],
            loss: stage2_loss,
            interaction: Some(stage2_inter),
            tradeoff: 0.8,
            data: vec![],
            discard_after: vec![],
        },
    ];
    let validation = ValidationSpec {
        remaining: vec!["a".into()],
        terms: vec![ValTerm {
            name: "val".into(),
            kind: TermKind::Plain(val),
            weight: 1.0,
            sense: TermSense::Minimize,
        }],
        ascend: vec![],
        data: vec![],
    };
    let p = MLOProblem::build(groups, stages, validation).unwrap();
    let state = p.initial_state();
    let mut log = AccessLog::default();
    let out = p.hypergradients(&state, &Bindings::new(), &mut log).unwrap();

    let base = state["a"].get("a.0").unwrap().clone();
    let oracle = finite_diff_grad(
        |t: &Tensor| {
            let mut s: GroupState = state.clone();
            s.insert(
                "a".into(),
                TensorGroup::new(vec![("a.0".to_string(), t.clone())]),
            );
            let mut log = AccessLog::default();
            let (obj, _) = p
                .validation_objective(&s, &Bindings::new(), &mut log)
                .expect("objective evaluates");
            Ok(obj)
        },
        &base,
        FD_STEP,
    )
    .unwrap();
    let got = out.gradients["a"].get("a.0").unwrap();
    let err = relative_error(got, &oracle);
    assert!(err <= 1e-4, "relative error {err}\nengine {:?}\noracle {:?}", got.data(), oracle.data());
    let _ = dim;
}

/// Flipping a term's sense exactly negates its hypergradient contribution.
#[test]
fn maximize_sense_negates_contribution() {
    let build = |sense: TermSense| {
        let groups = vec![
            scalar_group("w", Role::Weights, 0.1, 1.0),
            scalar_group("a", Role::Architecture, 0.05, 0.3),
        ];
        let stages = vec![StageSpec {
            index: 1,
            active: vec!["w".into()],
            supporting: vec!["a".into()],
            loss: quadratic_pull("w.0", "a.0"),
            interaction: None,
            tradeoff: 0.0,
            data: vec![],
            discard_after: vec![],
        }];
        let validation = ValidationSpec {
            remaining: vec!["a".into()],
            terms: vec![ValTerm {
                name: "val".into(),
                kind: TermKind::Plain(quadratic_to_const("~w.0", 2.0, 1)),
                weight: 1.0,
                sense,
            }],
            ascend: vec![],
            data: vec![],
        };
        MLOProblem::build(groups, stages, validation).unwrap()
    };
    let p_min = build(TermSense::Minimize);
    let p_max = build(TermSense::Maximize);
    let mut log = AccessLog::default();
    let g_min = p_min
        .hypergradients(&p_min.initial_state(), &Bindings::new(), &mut log)
        .unwrap();
    let g_max = p_max
        .hypergradients(&p_max.initial_state(), &Bindings::new(), &mut log)
        .unwrap();
    let a = g_min.gradients["a"].get("a.0").unwrap().data()[0];
    let b = g_max.gradients["a"].get("a.0").unwrap().data()[0];
    assert_eq!(a, -b);
}

#[test]
fn zero_learn_rates_are_a_fixed_point() {
    let p = bilevel_quadratic(0.0, 0.0, 1.0, 0.3, 2.0);
    let report = p.solve(&DataSources::new(), 5, 42).unwrap();
    assert_eq!(report.state["w"].get("w.0").unwrap().data()[0], 1.0);
    assert_eq!(report.state["a"].get("a.0").unwrap().data()[0], 0.3);
}

#[test]
fn bilevel_solve_reduces_validation_loss() {
    let p = bilevel_quadratic(0.1, 0.1, 1.0, 0.0, 2.0);
    let report = p.solve(&DataSources::new(), 200, 1).unwrap();
    let first = report.metrics.first().unwrap().get("objective").unwrap();
    let last = report.metrics.last().unwrap().get("objective").unwrap();
    assert!(last < first, "objective {first} -> {last}");
}

#[test]
fn identical_seeds_give_bit_identical_metrics() {
    let p = bilevel_quadratic(0.1, 0.1, 1.0, 0.0, 2.0);
    let a = p.solve(&DataSources::new(), 20, 7).unwrap();
    let b = p.solve(&DataSources::new(), 20, 7).unwrap();
    for (ra, rb) in a.metrics.iter().zip(&b.metrics) {
        assert_eq!(ra.iteration, rb.iteration);
        for (k, v) in &ra.scalars {
            assert_eq!(v.to_bits(), rb.scalars[k].to_bits(), "key {k}");
        }
    }
}

/// Stage k reads only approximations from stages strictly before k; the
/// validation stage (consumer K+1) may read any stage.
#[test]
fn access_log_respects_stage_order() {
    let groups = vec![
        scalar_group("w1", Role::Weights, 0.1, 0.4),
        scalar_group("w2", Role::Encoder, 0.1, -0.2),
        scalar_group("a", Role::Architecture, 0.05, 0.1),
    ];
    let stage2_inter = {
        let mut gb = GraphBuilder::new();
        let w = gb.leaf("w2.0");
        let prev = gb.leaf("~w1.0");
        let d = gb.sub(w, prev);
        let n = gb.squared_norm(d);
        gb.finish(n).unwrap()
    };
    let stages = vec![
        StageSpec {
            index: 1,
            active: vec!["w1".into()],
            supporting: vec!["a".into()],
            loss: quadratic_pull("w1.0", "a.0"),
            interaction: None,
            tradeoff: 0.0,
            data: vec![],
            discard_after: vec![],
        },
        StageSpec {
            index: 2,
            active: vec!["w2".into()],
            supporting: vec!["a".into()],
            loss: quadratic_pull("w2.0", "a.0"),
            interaction: Some(stage2_inter),
            tradeoff: 1.0,
            data: vec![],
            discard_after: vec![],
        },
    ];
    let validation = ValidationSpec {
        remaining: vec!["a".into()],
        terms: vec![ValTerm {
            name: "val".into(),
            kind: TermKind::Plain(quadratic_to_const("~w2.0", 1.0, 1)),
            weight: 1.0,
            sense: TermSense::Minimize,
        }],
        ascend: vec![],
        data: vec![],
    };
    let p = MLOProblem::build(groups, stages, validation).unwrap();
    let report = p.solve(&DataSources::new(), 3, 0).unwrap();
    assert!(!report.access.reads.is_empty());
    for &(consumer, producer) in &report.access.reads {
        assert!(
            producer < consumer,
            "stage {consumer} read approximation from stage {producer}"
        );
    }
    // Stage 2 must actually read stage 1's output.
    assert!(report.access.reads.contains(&(2, 1)));
    // The validation stage reads stage 2's output.
    assert!(report.access.reads.contains(&(3, 2)));
}
