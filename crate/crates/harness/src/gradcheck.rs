use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use il::{chained_objective, il_arch_grad, IlConfig, IlSetup, IlShape};
use lpt::{
    arch_hypergrad, creator_hypergrad, unroll, unrolled_objective, LptConfig, LptSetup, LptShape,
};
use mlo_engine::{DataSources, LabeledSet, TensorGroup};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use tensor_ad::{
    backward_grad, bind, derive_seed, finite_diff_grad, finite_diff_hvp, forward_eval,
    relative_error, seeded_init, Bindings, Graph, GraphBuilder, InitScheme, Tensor, FD_STEP,
};

/// Outcome of one named comparison.
#[derive(Debug, Clone)]
pub struct TagResult {
    pub tag: String,
    pub max_rel_err: f64,
    pub tol: f64,
}

impl TagResult {
    pub fn pass(&self) -> bool {
        self.max_rel_err.is_finite() && self.max_rel_err <= self.tol
    }
}

#[derive(Debug)]
pub struct GradcheckReport {
    pub entries: Vec<TagResult>,
}

impl GradcheckReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass())
    }

    pub fn first_failure(&self) -> Option<&TagResult> {
        self.entries.iter().find(|e| !e.pass())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{:<22} max_rel_err={:<12.3e} tol={:<8.0e} {}",
                e.tag,
                e.max_rel_err,
                e.tol,
                if e.pass() { "PASS" } else { "FAIL" }
            );
        }
        s
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradcheckOptions {
    /// Number of random graphs for the primitive sweep.
    pub graph_count: usize,
    /// Number of seeded hypergradient instances per tag.
    pub instance_count: usize,
    /// Self-test hook: flip the sign of the named tag's analytic value so
    /// the comparison must fail.
    pub corrupt_tag: Option<String>,
}

impl GradcheckOptions {
    pub fn quick() -> Self {
        GradcheckOptions { graph_count: 10, instance_count: 3, corrupt_tag: None }
    }
}

fn rt(shape: &[usize], seed: u64) -> Tensor {
    seeded_init(shape, InitScheme::Uniform { lo: -2.0, hi: 2.0 }, seed)
}

/// A graph exercising every primitive, with randomized dimensions and a
/// randomized tail of extra elementwise ops.
pub fn random_graph(seed: u64) -> (Graph, Bindings) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..5usize);
    let m = rng.gen_range(2..5usize);
    let p = rng.gen_range(2..4usize);

    let mut gb = GraphBuilder::new();
    let x = gb.leaf("x"); // [n, m]
    let w = gb.leaf("w"); // [m, p]
    let row = gb.leaf("row"); // [p]
    let mix = gb.leaf("mix"); // [p]
    let elems = gb.leaf("elems"); // [n, p]
    let denom = gb.leaf("denom"); // [n, p], bounded away from zero
    let targets = gb.leaf("targets"); // [n, p] one-hot

    let prod = gb.matmul(x, w);
    let shifted = gb.add_row(prod, row);
    let t = gb.tanh(shifted);
    let r = gb.relu(shifted);
    let s = gb.sigmoid(shifted);
    let mut acc = gb.add(t, r);
    acc = gb.sub(acc, s);
    acc = gb.mul(acc, elems);
    acc = gb.div(acc, denom);
    let sm = gb.softmax(mix);
    let c = gb.index(sm, rng.gen_range(0..p));
    acc = gb.scale_by(acc, c);
    acc = gb.neg(acc);
    acc = gb.scale(acc, rng.gen_range(0.5..1.5));

    // Random extra elementwise tail.
    for _ in 0..rng.gen_range(0..3usize) {
        acc = match rng.gen_range(0..3u8) {
            0 => gb.tanh(acc),
            1 => gb.sigmoid(acc),
            _ => gb.mul(acc, elems),
        };
    }

    let ce = gb.cross_entropy_logits(shifted, targets);
    let ce_mean = gb.mean(ce);
    let flat = gb.flatten(acc);
    let sq = gb.squared_norm(flat);
    let total = gb.sum(acc);
    let combined = gb.add(sq, total);
    let combined = gb.add(combined, ce_mean);
    let graph = gb.finish(combined).expect("random graph");

    let mut onehot = Tensor::zeros(&[n, p]);
    for i in 0..n {
        let j = (seed as usize + i) % p;
        onehot.data_mut()[i * p + j] = 1.0;
    }
    // Keep relu inputs off the kink and divisors away from zero.
    let bindings = bind([
        ("x", rt(&[n, m], seed ^ 1).map(|v| if v.abs() < 1e-3 { v + 5e-3 } else { v })),
        ("w", rt(&[m, p], seed ^ 2)),
        ("row", rt(&[p], seed ^ 3)),
        ("mix", rt(&[p], seed ^ 4)),
        ("elems", rt(&[n, p], seed ^ 5)),
        ("denom", rt(&[n, p], seed ^ 6).map(|v| v.signum().max(0.0) * 2.0 + v * 0.2 + 1.5)),
        ("targets", onehot),
    ]);
    (graph, bindings)
}

/// Max norm-wise relative error of reverse-mode gradients against central
/// differences over `count` random graphs.
pub fn max_err_random_graphs(seed: u64, count: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let (graph, bindings) = random_graph(derive_seed(seed, "gradcheck-graph", i as u64));
        let names: Vec<String> = bindings.keys().cloned().collect();
        let grads = backward_grad(&graph, &bindings, &names)?;
        for name in &names {
            let oracle = finite_diff_grad(
                |t: &Tensor| {
                    let mut b = bindings.clone();
                    b.insert(name.clone(), t.clone());
                    forward_eval(&graph, &b)
                },
                &bindings[name],
                FD_STEP,
            )?;
            worst = worst.max(relative_error(grads.expect(name), &oracle));
        }
    }
    Ok(worst)
}

/// Max relative error of the direction-normalized finite-difference product
/// against explicitly assembled Hessian products on random quadratics.
pub fn max_err_hvp_quadratic(seed: u64, count: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let s = derive_seed(seed, "gradcheck-quadratic", i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let dim = rng.gen_range(2..=20usize);
        let m = seeded_init(&[dim, dim], InitScheme::Uniform { lo: -1.0, hi: 1.0 }, s ^ 1);
        let h = m.add(&m.transpose()?)?.scale(0.5);
        let b = rt(&[dim], s ^ 2);
        let grad_fn = |p: &Tensor| {
            let col = Tensor::new(vec![dim, 1], p.data().to_vec())?;
            let hp = h.matmul(&col)?;
            Tensor::new(vec![dim], hp.data().to_vec())?.add(&b)
        };
        let params = rt(&[dim], s ^ 3);
        let dir = rt(&[dim], s ^ 4);
        let fd = finite_diff_hvp(grad_fn, &params, &dir)?;
        let exact = {
            let col = Tensor::new(vec![dim, 1], dir.data().to_vec())?;
            let hv = h.matmul(&col)?;
            Tensor::new(vec![dim], hv.data().to_vec())?
        };
        worst = worst.max(relative_error(&fd, &exact));
    }
    Ok(worst)
}

/// Same check on bilinear objectives, where the product is exact up to
/// rounding.
pub fn max_err_hvp_bilinear(seed: u64, count: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let s = derive_seed(seed, "gradcheck-bilinear", i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let dim = rng.gen_range(2..=12usize);
        let m = seeded_init(&[dim, dim], InitScheme::Uniform { lo: -1.0, hi: 1.0 }, s ^ 1);
        let grad_fn = |p: &Tensor| {
            let col = Tensor::new(vec![dim, 1], p.data().to_vec())?;
            let mp = m.matmul(&col)?;
            Tensor::new(vec![dim], mp.data().to_vec())
        };
        let params = rt(&[dim], s ^ 2);
        let dir = rt(&[dim], s ^ 3);
        let fd = finite_diff_hvp(grad_fn, &params, &dir)?;
        let exact = grad_fn(&dir)?;
        worst = worst.max(relative_error(&fd, &exact));
    }
    Ok(worst)
}

fn blob_set(n: usize, seed: u64) -> LabeledSet {
    let jitter = seeded_init(&[n, 2], InitScheme::Normal { mean: 0.0, std: 0.6 }, seed);
    let mut x = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let cx = if class == 0 { -1.5 } else { 1.5 };
        x.push(vec![cx + jitter.at2(i, 0), jitter.at2(i, 1)]);
        labels.push(class);
    }
    LabeledSet::new(x, labels, 2)
}

/// Compact instance (always <= 100 parameters) carrying the config's step
/// sizes, tradeoffs, and flags.
fn compact_lpt(config: &RunConfig, seed: u64) -> Result<(LptSetup, DataSources, Bindings)> {
    let shape = LptShape { dim: 2, classes: 2, mixed_layers: 1, encoder_hidden: 3, bank_size: 16 };
    let lc = LptConfig {
        lambda: config.lambda_value(),
        gamma: config.gamma,
        ablation: config.ablation,
        include_direct_creator_path: config.include_direct_creator_path,
        eta_arch: config.eta_arch,
        xi_testee: config.xi_testee,
        xi_encoder: config.xi_encoder,
        xi_executor: config.xi_executor,
        eta_creator: config.eta_creator,
        batch_train: 8,
        batch_bank: 10,
        batch_val: 10,
        seed,
    };
    assert!(shape.param_count(lc.ablation) <= 100);
    let mut sources = DataSources::new();
    sources.insert(lpt::SET_TRAIN, blob_set(16, derive_seed(seed, "gc-train", 0)), 8);
    sources.insert(lpt::SET_VAL, blob_set(16, derive_seed(seed, "gc-val", 0)), 10);
    sources.insert(lpt::SET_BANK, blob_set(16, derive_seed(seed, "gc-bank", 0)), 10);
    let setup = LptSetup::new(shape, lc, seed)?;
    let mut data = Bindings::new();
    sources.bind_iteration(seed, 0, &setup.data_bindings(), &mut data)?;
    if setup.config.ablation == lpt::AblationMode::DifficultyOnly {
        data.insert("bank.sel".into(), setup.bank_selection_matrix(16, 0));
    }
    Ok((setup, sources, data))
}

fn compact_il(config: &RunConfig, seed: u64) -> Result<(IlSetup, DataSources, Bindings)> {
    let shape = IlShape {
        dim: 2,
        classes: 2,
        mixed_layers: 1,
        ops: vec![
            toy_nas::OpKind::Identity,
            toy_nas::OpKind::Zero,
            toy_nas::OpKind::Linear,
            toy_nas::OpKind::LinearTanh,
        ],
    };
    let ic = IlConfig {
        learners: 2,
        rounds: 2,
        lambda: config.lambda_value().min(10.0),
        eta: if config.eta > 0.0 { config.eta } else { 0.01 },
        batch_train: 8,
        batch_val: 8,
        seed,
    };
    assert!(shape.param_count(&ic) <= 100);
    let mut sources = DataSources::new();
    for k in 1..=2usize {
        sources.insert(&il::train_set(k), blob_set(16, derive_seed(seed, "gc-il-tr", k as u64)), 8);
        sources.insert(&il::val_set(k), blob_set(16, derive_seed(seed, "gc-il-val", k as u64)), 8);
    }
    let setup = IlSetup::new(shape, ic, seed)?;
    let mut data = Bindings::new();
    sources.bind_iteration(seed, 0, &setup.data_bindings(), &mut data)?;
    Ok((setup, sources, data))
}

fn fd_over_group(
    base: &TensorGroup,
    mut objective: impl FnMut(&TensorGroup) -> Result<f64>,
) -> Result<TensorGroup> {
    let mut out = Vec::new();
    for (idx, (name, tensor)) in base.items().iter().enumerate() {
        let grad = finite_diff_grad(
            |t: &Tensor| {
                let replaced = TensorGroup::new(
                    base.items()
                        .iter()
                        .enumerate()
                        .map(|(j, (n, old))| {
                            (n.clone(), if j == idx { t.clone() } else { old.clone() })
                        })
                        .collect(),
                );
                objective(&replaced).map_err(|_| tensor_ad::AdError::non_finite("probe"))
            },
            tensor,
            FD_STEP,
        )?;
        out.push((name.clone(), grad));
    }
    Ok(TensorGroup::new(out))
}

fn group_rel_err(a: &TensorGroup, b: &TensorGroup) -> f64 {
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for ((_, x), (_, y)) in a.items().iter().zip(b.items()) {
        for (u, v) in x.data().iter().zip(y.data()) {
            diff += (u - v) * (u - v);
            na += u * u;
            nb += v * v;
        }
    }
    diff.sqrt() / na.sqrt().max(nb.sqrt()).max(1e-8)
}

/// Run every comparison and report the max relative error per tag.
pub fn run_gradcheck(config: &RunConfig, opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let seed = config.seed;
    let corrupt = |tag: &str, g: TensorGroup| -> TensorGroup {
        if opts.corrupt_tag.as_deref() == Some(tag) {
            g.scale(-1.0)
        } else {
            g
        }
    };
    let mut entries = Vec::new();

    entries.push(TagResult {
        tag: "autodiff_primitives".into(),
        max_rel_err: max_err_random_graphs(seed, opts.graph_count.max(1))?,
        tol: 1e-6,
    });
    entries.push(TagResult {
        tag: "hvp_quadratic".into(),
        max_rel_err: max_err_hvp_quadratic(seed, 20)?,
        tol: 1e-2,
    });
    entries.push(TagResult {
        tag: "hvp_bilinear".into(),
        max_rel_err: max_err_hvp_bilinear(seed, 10)?,
        tol: 1e-10,
    });

    // Tester-stage gradients against central differences.
    {
        let mut worst: f64 = 0.0;
        for i in 0..opts.instance_count.max(1) {
            let (setup, _, data) = compact_lpt(config, derive_seed(seed, "gc-lpt-s2", i as u64))?;
            if setup.config.ablation == lpt::AblationMode::DifficultyOnly {
                break; // no tester stage in this mode
            }
            let state = setup.initial_state();
            let stage2 = setup.graphs.stage2_loss.as_ref().expect("stage II");
            let bindings = setup.bind_for(&[stage2], &state, None, &data)?;
            for group in [lpt::G_ENCODER, lpt::G_EXECUTOR] {
                let analytic = corrupt(
                    "tester_step",
                    mlo_engine::group_grad(stage2, &bindings, &state[group], |n| n.to_string())?,
                );
                let oracle = fd_over_group(&state[group], |g| {
                    let mut b = bindings.clone();
                    g.bind_into(&mut b, |n| n.to_string());
                    Ok(forward_eval(stage2, &b)?)
                })?;
                worst = worst.max(group_rel_err(&analytic, &oracle));
            }
            // A zero direction must yield a zero second-order contribution,
            // not an error, inside hypergradient assembly; spot-check here.
            let zero = state[lpt::G_ENCODER].zeros_like();
            let none = mlo_engine::group_fd_hvp(
                |_| Ok(vec![state[lpt::G_CREATOR].zeros_like()]),
                &state[lpt::G_ENCODER],
                &zero,
            )?;
            assert!(none.is_none());
        }
        entries.push(TagResult { tag: "tester_step".into(), max_rel_err: worst, tol: 1e-6 });
    }

    // Architecture and creator hypergradients against the unrolled
    // objective.
    {
        let mut worst_arch: f64 = 0.0;
        let mut worst_cre: f64 = 0.0;
        for i in 0..opts.instance_count.max(1) {
            let (setup, _, data) = compact_lpt(config, derive_seed(seed, "gc-lpt-hg", i as u64))?;
            let state = setup.initial_state();
            let u = unroll(&setup, &state, &data)?;

            let g_arch = corrupt("arch_hypergrad", arch_hypergrad(&setup, &state, &data, &u)?);
            let oracle_arch = fd_over_group(&state[lpt::G_ARCH], |g| {
                let mut s = state.clone();
                s.insert(lpt::G_ARCH.to_string(), g.clone());
                Ok(unrolled_objective(&setup, &s, &data)?)
            })?;
            worst_arch = worst_arch.max(group_rel_err(&g_arch, &oracle_arch));

            let cre_group = if setup.config.ablation == lpt::AblationMode::DifficultyOnly {
                lpt::G_SELECTOR
            } else {
                lpt::G_CREATOR
            };
            let g_cre = corrupt("creator_hypergrad", creator_hypergrad(&setup, &state, &data, &u)?);
            let oracle_cre = fd_over_group(&state[cre_group], |g| {
                let mut s = state.clone();
                s.insert(cre_group.to_string(), g.clone());
                Ok(unrolled_objective(&setup, &s, &data)?)
            })?;
            worst_cre = worst_cre.max(group_rel_err(&g_cre, &oracle_cre));
        }
        entries.push(TagResult { tag: "arch_hypergrad".into(), max_rel_err: worst_arch, tol: 1e-3 });
        entries.push(TagResult { tag: "creator_hypergrad".into(), max_rel_err: worst_cre, tol: 1e-3 });
    }

    // Stage steps against the generic engine's one-step updates.
    {
        let mut worst: f64 = 0.0;
        let (setup, sources, data) = compact_lpt(config, derive_seed(seed, "gc-lpt-eq", 0))?;
        if setup.config.ablation != lpt::AblationMode::DifficultyOnly {
            let problem = lpt::build_engine_problem(&setup)?;
            let state = setup.initial_state();
            let mut log = mlo_engine::AccessLog::default();
            let (approx, _) = problem.approximate_stages(&state, &data, &mut log)?;
            let u = unroll(&setup, &state, &data)?;
            for g in [lpt::G_WEIGHTS, lpt::G_ENCODER, lpt::G_EXECUTOR] {
                let module = corrupt("weight_step", u.get(g).clone());
                let engine = approx.get(g).expect("approximated");
                let denom = engine.norm2().max(1.0);
                worst = worst.max(module.max_abs_diff(engine) / denom);
            }
            let _ = sources;
        }
        entries.push(TagResult { tag: "weight_step".into(), max_rel_err: worst, tol: 1e-12 });
    }

    // Interleaved chain steps against the generic engine.
    {
        let mut worst: f64 = 0.0;
        let (setup, _, data) = compact_il(config, derive_seed(seed, "gc-il-eq", 0))?;
        let problem = il::build_engine_problem(&setup)?;
        let state = setup.initial_state();
        let mut log = mlo_engine::AccessLog::default();
        let (approx, _) = problem.approximate_stages(&state, &data, &mut log)?;
        let chain = il::build_chain(&setup, &state, &data)?;
        for (group, value) in &chain.by_group {
            let module = corrupt("chain_step", value.clone());
            let engine = approx.get(group).expect("approximated");
            let denom = engine.norm2().max(1.0);
            worst = worst.max(module.max_abs_diff(engine) / denom);
        }
        entries.push(TagResult { tag: "chain_step".into(), max_rel_err: worst, tol: 1e-12 });
    }

    // Architecture step through the full chain against the chained
    // objective.
    {
        let mut worst: f64 = 0.0;
        for i in 0..opts.instance_count.max(1) {
            let (setup, _, data) = compact_il(config, derive_seed(seed, "gc-il-hg", i as u64))?;
            let state = setup.initial_state();
            let chain = il::build_chain(&setup, &state, &data)?;
            let g = corrupt("il_arch_step", il_arch_grad(&setup, &state, &data, &chain)?);
            let oracle = fd_over_group(&state[il::G_ARCH], |a| {
                let mut s = state.clone();
                s.insert(il::G_ARCH.to_string(), a.clone());
                Ok(chained_objective(&setup, &s, &data)?)
            })?;
            worst = worst.max(group_rel_err(&g, &oracle));
        }
        entries.push(TagResult { tag: "il_arch_step".into(), max_rel_err: worst, tol: 1e-3 });
    }

    let report = GradcheckReport { entries };
    Ok(report)
}

/// Convert a failed report into the tolerance error (exit code 4).
pub fn require_pass(report: &GradcheckReport) -> Result<()> {
    match report.first_failure() {
        None => Ok(()),
        Some(f) => Err(HarnessError::Tolerance {
            tag: f.tag.clone(),
            err: f.max_rel_err,
            tol: f.tol,
        }),
    }
}
