use crate::graphs::LptGraphs;
use crate::model::{init_groups, AblationMode, LptConfig, LptShape};
use crate::{
    LptError, Result, G_ARCH, G_CREATOR, G_ENCODER, G_EXECUTOR, G_SELECTOR, G_WEIGHTS, SET_BANK,
    SET_TRAIN, SET_VAL,
};
use mlo_engine::{
    group_fd_hvp, group_grad, sample_indices, DataBinding, DataSources, GroupState, MetricsRecord,
    ParamGroup, TensorGroup, CARDINALITY_FLOOR,
};
use std::collections::BTreeMap;
use tensor_ad::{backward_grad, evaluate, Bindings, Graph, Tensor};

fn ident(name: &str) -> String {
    name.to_string()
}

fn tilde(name: &str) -> String {
    format!("~{name}")
}

/// One fully configured LPT run: dimensions, step sizes, parameter groups
/// with their initial values, and the evaluation graphs.
#[derive(Debug)]
pub struct LptSetup {
    pub shape: LptShape,
    pub config: LptConfig,
    pub groups: Vec<ParamGroup>,
    pub graphs: LptGraphs,
}

/// One-step approximations of the inner stages for the current iteration.
#[derive(Debug, Clone)]
pub struct Unrolled {
    pub by_group: BTreeMap<String, TensorGroup>,
}

impl Unrolled {
    pub fn get(&self, group: &str) -> &TensorGroup {
        &self.by_group[group]
    }
}

impl LptSetup {
    pub fn new(shape: LptShape, config: LptConfig, init_seed: u64) -> Result<Self> {
        let groups = init_groups(&shape, &config, init_seed)?;
        let graphs = LptGraphs::build(&shape, &config);
        Ok(LptSetup { shape, config, groups, graphs })
    }

    pub fn initial_state(&self) -> GroupState {
        self.groups
            .iter()
            .map(|g| (g.name.clone(), g.value.clone()))
            .collect()
    }

    pub fn group(&self, name: &str) -> &ParamGroup {
        self.groups
            .iter()
            .find(|g| g.name == name)
            .unwrap_or_else(|| panic!("unknown group `{name}`"))
    }

    pub fn lr(&self, name: &str) -> f64 {
        self.group(name).lr
    }

    /// Which datasets feed which graph leaves.
    pub fn data_bindings(&self) -> Vec<DataBinding> {
        let mut out = vec![
            DataBinding::new(SET_TRAIN, "ee.x", "ee.y"),
            DataBinding::new(SET_BANK, "bank.x", "bank.y"),
        ];
        if self.config.ablation != AblationMode::DifficultyOnly {
            out.push(DataBinding::new(SET_TRAIN, "er.x", "er.y"));
            out.push(DataBinding::new(SET_VAL, "val.x", "val.y"));
        }
        out
    }

    /// Bind every leaf the graphs reference: data from `data`, `~` leaves
    /// from the unrolled approximations, the rest from committed state.
    pub fn bind_for(
        &self,
        graphs: &[&Graph],
        state: &GroupState,
        unrolled: Option<&Unrolled>,
        data: &Bindings,
    ) -> Result<Bindings> {
        let mut out = Bindings::new();
        for graph in graphs {
            for leaf in graph.leaf_names() {
                if out.contains_key(leaf) {
                    continue;
                }
                if let Some(t) = data.get(leaf) {
                    out.insert(leaf.to_string(), t.clone());
                    continue;
                }
                if let Some(base) = leaf.strip_prefix('~') {
                    let owner = self.owner_of(base)?;
                    let u = unrolled.ok_or_else(|| {
                        LptError::Engine(mlo_engine::EngineError::MissingApproximation {
                            group: owner.to_string(),
                            stage: 0,
                        })
                    })?;
                    let tensor = u.get(owner).get(base).expect("leaf in group");
                    out.insert(leaf.to_string(), tensor.clone());
                    continue;
                }
                let owner = self.owner_of(leaf)?;
                let tensor = state[owner].get(leaf).expect("leaf in group");
                out.insert(leaf.to_string(), tensor.clone());
            }
        }
        Ok(out)
    }

    fn owner_of(&self, leaf: &str) -> Result<&str> {
        self.groups
            .iter()
            .find(|g| g.value.get(leaf).is_some())
            .map(|g| g.name.as_str())
            .ok_or_else(|| {
                LptError::Engine(mlo_engine::EngineError::UnresolvedLeaf {
                    leaf: leaf.to_string(),
                    context: "lpt".to_string(),
                })
            })
    }

    /// The one-hot bank-batch selection matrix for the selection-scalar
    /// mode, derived from the same index draw as the bank minibatch.
    pub fn bank_selection_matrix(&self, bank_len: usize, iteration: usize) -> Tensor {
        let idx = sample_indices(
            self.config.seed,
            SET_BANK,
            iteration,
            bank_len,
            self.config.batch_bank,
        );
        let mut sel = Tensor::zeros(&[idx.len(), bank_len]);
        for (row, &i) in idx.iter().enumerate() {
            sel.data_mut()[row * bank_len + i] = 1.0;
        }
        sel
    }
}

/// Stage I: one gradient step on the testee weights; the architecture is
/// untouched.
pub fn stage1_weight_step(setup: &LptSetup, state: &GroupState, data: &Bindings) -> Result<TensorGroup> {
    let graph = &setup.graphs.stage1_loss;
    let bindings = setup.bind_for(&[graph], state, None, data)?;
    let grad = group_grad(graph, &bindings, &state[G_WEIGHTS], ident)?;
    let mut updated = state[G_WEIGHTS].clone();
    updated.axpy(-setup.lr(G_WEIGHTS), &grad)?;
    Ok(updated)
}

/// Stage II: one gradient step on encoder and executor with the creator
/// frozen. The created-test term's gradient flows through both the
/// selection probabilities and the executor loss.
pub fn stage2_tester_step(
    setup: &LptSetup,
    state: &GroupState,
    data: &Bindings,
) -> Result<(TensorGroup, TensorGroup)> {
    let graph = setup
        .graphs
        .stage2_loss
        .as_ref()
        .expect("stage II exists outside the selection-scalar mode");
    let bindings = setup.bind_for(&[graph], state, None, data)?;
    let g_enc = group_grad(graph, &bindings, &state[G_ENCODER], ident)?;
    let g_exec = group_grad(graph, &bindings, &state[G_EXECUTOR], ident)?;
    let mut enc = state[G_ENCODER].clone();
    enc.axpy(-setup.lr(G_ENCODER), &g_enc)?;
    let mut exec = state[G_EXECUTOR].clone();
    exec.axpy(-setup.lr(G_EXECUTOR), &g_exec)?;
    Ok((enc, exec))
}

/// Chain stage I (and stage II when present) from the committed state.
pub fn unroll(setup: &LptSetup, state: &GroupState, data: &Bindings) -> Result<Unrolled> {
    let mut by_group = BTreeMap::new();
    by_group.insert(G_WEIGHTS.to_string(), stage1_weight_step(setup, state, data)?);
    if setup.config.ablation != AblationMode::DifficultyOnly {
        let (enc, exec) = stage2_tester_step(setup, state, data)?;
        by_group.insert(G_ENCODER.to_string(), enc);
        by_group.insert(G_EXECUTOR.to_string(), exec);
    }
    Ok(Unrolled { by_group })
}

/// Values of the interaction ratio at the unrolled parameters.
pub fn interaction_values(
    setup: &LptSetup,
    state: &GroupState,
    data: &Bindings,
    unrolled: &Unrolled,
) -> Result<(f64, f64)> {
    let bindings = setup.bind_for(
        &[&setup.graphs.ratio_num, &setup.graphs.ratio_den],
        state,
        Some(unrolled),
        data,
    )?;
    let n = evaluate(&setup.graphs.ratio_num, &bindings)?.scalar();
    let d = evaluate(&setup.graphs.ratio_den, &bindings)?.scalar();
    if d.abs() < CARDINALITY_FLOOR {
        return Err(LptError::DivisionDegenerate(d));
    }
    Ok((n, d))
}

/// Descent gradient of the normalized interaction with respect to the
/// architecture: the direct term at the unrolled weights minus the
/// weight-step correction, a finite-difference mixed-second-derivative
/// product along the unrolled-loss gradient.
pub fn arch_hypergrad(
    setup: &LptSetup,
    state: &GroupState,
    data: &Bindings,
    unrolled: &Unrolled,
) -> Result<TensorGroup> {
    let num = &setup.graphs.ratio_num;
    let bindings = setup.bind_for(&[num, &setup.graphs.ratio_den], state, Some(unrolled), data)?;
    let (_, d) = interaction_values(setup, state, data, unrolled)?;
    let coeff = 1.0 / d;

    let mut wrt = state[G_ARCH].present_leaves(num, ident);
    wrt.extend(state[G_WEIGHTS].present_leaves(num, tilde));
    let gm = backward_grad(num, &bindings, &wrt)?;
    let direct = state[G_ARCH].grad_from(num, &gm, ident);
    let v_w = state[G_WEIGHTS].grad_from(num, &gm, tilde);

    let mut g = state[G_ARCH].zeros_like();
    g.axpy(coeff, &direct)?;

    // Correction through the weight step: perturb W along the unrolled
    // gradient and difference the architecture gradient of the training
    // loss. A vanishing direction contributes zero.
    let stage1 = &setup.graphs.stage1_loss;
    let stage1_bindings = setup.bind_for(&[stage1], state, None, data)?;
    let grads_at = |w: &TensorGroup| -> mlo_engine::Result<Vec<TensorGroup>> {
        let mut b = stage1_bindings.clone();
        w.bind_into(&mut b, ident);
        Ok(vec![group_grad(stage1, &b, &state[G_ARCH], ident)?])
    };
    if let Some(hvps) = group_fd_hvp(grads_at, &state[G_WEIGHTS], &v_w)? {
        g.axpy(coeff * -setup.lr(G_WEIGHTS), &hvps[0])?;
    }
    Ok(g)
}

/// Ascent gradient of `interaction / cardinality - lambda * tester
/// validation loss` with respect to the test creator (or the selection
/// scalars in the selection-scalar mode).
///
/// The quotient rule is applied piecewise: the numerator, the cardinality,
/// and the validation term each contribute a direct part and chained parts
/// through the encoder/executor steps, the latter via finite-difference
/// products along that piece's own adjoint direction.
pub fn creator_hypergrad(
    setup: &LptSetup,
    state: &GroupState,
    data: &Bindings,
    unrolled: &Unrolled,
) -> Result<TensorGroup> {
    let num = &setup.graphs.ratio_num;
    let den = &setup.graphs.ratio_den;
    let (n, d) = interaction_values(setup, state, data, unrolled)?;
    let coeff_num = 1.0 / d;
    let coeff_den = -n / (d * d);

    if setup.config.ablation == AblationMode::DifficultyOnly {
        let bindings = setup.bind_for(&[num, den], state, Some(unrolled), data)?;
        let sel = &state[G_SELECTOR];
        let gm_n = backward_grad(num, &bindings, &sel.present_leaves(num, ident))?;
        let gm_d = backward_grad(den, &bindings, &sel.present_leaves(den, ident))?;
        let mut g = sel.zeros_like();
        g.axpy(coeff_num, &sel.grad_from(num, &gm_n, ident))?;
        g.axpy(coeff_den, &sel.grad_from(den, &gm_d, ident))?;
        return Ok(g);
    }

    let val = setup.graphs.tester_val.as_ref().expect("validation term");
    let bindings = setup.bind_for(&[num, den, val], state, Some(unrolled), data)?;
    let cre = &state[G_CREATOR];
    let enc = &state[G_ENCODER];
    let exec = &state[G_EXECUTOR];
    let coeff_val = -setup.config.lambda; // maximize-sense term in the ascent objective

    let stage2 = setup.graphs.stage2_loss.as_ref().expect("stage II");
    let stage2_bindings = setup.bind_for(&[stage2], state, None, data)?;
    let chain_through = |perturbed_group: &TensorGroup,
                         base: &TensorGroup,
                         direction: &TensorGroup|
     -> Result<Option<TensorGroup>> {
        let _ = perturbed_group;
        let grads_at = |p: &TensorGroup| -> mlo_engine::Result<Vec<TensorGroup>> {
            let mut b = stage2_bindings.clone();
            p.bind_into(&mut b, ident);
            Ok(vec![group_grad(stage2, &b, cre, ident)?])
        };
        Ok(group_fd_hvp(grads_at, base, direction)?.map(|mut v| v.remove(0)))
    };

    let mut g = cre.zeros_like();

    // Numerator piece: direct selection path (flag-controlled) plus the
    // encoder-step chain.
    {
        let mut wrt = cre.present_leaves(num, ident);
        wrt.extend(enc.present_leaves(num, tilde));
        let gm = backward_grad(num, &bindings, &wrt)?;
        if setup.config.include_direct_creator_path {
            g.axpy(coeff_num, &cre.grad_from(num, &gm, ident))?;
        }
        let v_enc = enc.grad_from(num, &gm, tilde);
        if let Some(h) = chain_through(enc, enc, &v_enc)? {
            g.axpy(coeff_num * -setup.lr(G_ENCODER), &h)?;
        }
    }

    // Cardinality piece: the direct path is always present.
    {
        let mut wrt = cre.present_leaves(den, ident);
        wrt.extend(enc.present_leaves(den, tilde));
        let gm = backward_grad(den, &bindings, &wrt)?;
        g.axpy(coeff_den, &cre.grad_from(den, &gm, ident))?;
        let v_enc = enc.grad_from(den, &gm, tilde);
        if let Some(h) = chain_through(enc, enc, &v_enc)? {
            g.axpy(coeff_den * -setup.lr(G_ENCODER), &h)?;
        }
    }

    // Tester validation piece: chains through both stage-II updates.
    {
        let mut wrt = enc.present_leaves(val, tilde);
        wrt.extend(exec.present_leaves(val, tilde));
        let gm = backward_grad(val, &bindings, &wrt)?;
        let v_enc = enc.grad_from(val, &gm, tilde);
        if let Some(h) = chain_through(enc, enc, &v_enc)? {
            g.axpy(coeff_val * -setup.lr(G_ENCODER), &h)?;
        }
        let v_exec = exec.grad_from(val, &gm, tilde);
        let grads_at = |p: &TensorGroup| -> mlo_engine::Result<Vec<TensorGroup>> {
            let mut b = stage2_bindings.clone();
            p.bind_into(&mut b, ident);
            Ok(vec![group_grad(stage2, &b, cre, ident)?])
        };
        if let Some(mut h) = group_fd_hvp(grads_at, exec, &v_exec)? {
            g.axpy(coeff_val * -setup.lr(G_EXECUTOR), &h.remove(0))?;
        }
    }

    Ok(g)
}

fn step<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| LptError::Step { step: name, source: Box::new(e) })
}

/// One full iteration: compute all updates from the iteration-start
/// values, then apply them in the algorithm's order — descend the
/// architecture, ascend the creator, commit the tester step, commit the
/// weight step.
pub fn lpt_iterate(
    setup: &LptSetup,
    state: &mut GroupState,
    sources: &DataSources,
    iteration: usize,
) -> Result<MetricsRecord> {
    let mut data = Bindings::new();
    sources.bind_iteration(setup.config.seed, iteration, &setup.data_bindings(), &mut data)?;
    if setup.config.ablation == AblationMode::DifficultyOnly {
        let bank_len = sources
            .get(SET_BANK)
            .ok_or_else(|| mlo_engine::EngineError::UnknownDataset(SET_BANK.into()))?
            .len();
        data.insert("bank.sel".to_string(), setup.bank_selection_matrix(bank_len, iteration));
    }

    let unrolled = step("unroll", unroll(setup, state, &data))?;
    let g_arch = step("arch-update", arch_hypergrad(setup, state, &data, &unrolled))?;
    let creator_group = if setup.config.ablation == AblationMode::DifficultyOnly {
        G_SELECTOR
    } else {
        G_CREATOR
    };
    let g_cre = step("creator-update", creator_hypergrad(setup, state, &data, &unrolled))?;

    let mut record = MetricsRecord::new(iteration);
    {
        let (n, d) = interaction_values(setup, state, &data, &unrolled)?;
        record.set("interaction", n / d);
        record.set("cardinality", d);
        let b1 = setup.bind_for(&[&setup.graphs.stage1_loss], state, None, &data)?;
        record.set(
            "testee_train_loss",
            evaluate(&setup.graphs.stage1_loss, &b1)?.scalar(),
        );
        if let Some(stage2) = &setup.graphs.stage2_loss {
            let b2 = setup.bind_for(&[stage2], state, None, &data)?;
            record.set("tester_train_loss", evaluate(stage2, &b2)?.scalar());
        }
        if let Some(val) = &setup.graphs.tester_val {
            let bv = setup.bind_for(&[val], state, Some(&unrolled), &data)?;
            record.set("tester_val_loss", evaluate(val, &bv)?.scalar());
        }
        record.set("arch_grad_norm", g_arch.norm2());
        record.set("creator_grad_norm", g_cre.norm2());
    }

    // Apply: A descends, C ascends, stage approximations commit.
    {
        let arch = state.get_mut(G_ARCH).expect("arch group");
        arch.axpy(-setup.lr(G_ARCH), &g_arch)?;
        if !arch.all_finite() {
            return Err(tensor_ad::AdError::non_finite("architecture update").into());
        }
    }
    {
        let lr = setup.lr(creator_group);
        let c = state.get_mut(creator_group).expect("creator group");
        c.axpy(lr, &g_cre)?;
        if !c.all_finite() {
            return Err(tensor_ad::AdError::non_finite("creator update").into());
        }
    }
    for (group, value) in &unrolled.by_group {
        state.insert(group.clone(), value.clone());
    }
    Ok(record)
}
