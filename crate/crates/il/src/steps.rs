use crate::setup::{head_group, weight_group, IlConfig, IlSetup};
use crate::{IlError, Result, G_ARCH};
use mlo_engine::{
    group_fd_hvp, group_grad, DataSources, GroupState, MetricsRecord, TensorGroup,
};
use std::collections::BTreeMap;
use tensor_ad::{backward_grad, evaluate, Bindings};

fn ident(name: &str) -> String {
    name.to_string()
}

fn tilde(name: &str) -> String {
    format!("~{name}")
}

/// The recursive chain of one iteration: encoder approximations for every
/// stage in flat order plus head approximations for the final round.
#[derive(Debug, Clone)]
pub struct IlChain {
    /// `by_group` holds both the chained encoder values and the final-round
    /// head values, keyed by group name.
    pub by_group: BTreeMap<String, TensorGroup>,
}

impl IlChain {
    pub fn weights(&self, learner: usize, round: usize) -> &TensorGroup {
        &self.by_group[&weight_group(learner, round)]
    }

    pub fn head(&self, learner: usize, round: usize) -> &TensorGroup {
        &self.by_group[&head_group(learner, round)]
    }
}

/// First stage: a plain one-step update, no predecessor to anchor to.
pub fn il_first_stage_step(
    setup: &IlSetup,
    state: &GroupState,
    data: &Bindings,
) -> Result<TensorGroup> {
    let loss = &setup.graphs.stage_loss[0];
    let bindings = setup.bind_for(&[loss], state, None, data)?;
    let wname = weight_group(1, 1);
    let grad = group_grad(loss, &bindings, &state[&wname], ident)?;
    let mut w = state[&wname].clone();
    w.axpy(-setup.config.eta, &grad)?;
    Ok(w)
}

/// Any later stage: one gradient step on the stage loss plus the proximal
/// pull `2 eta lambda (W - W_prev)` toward the predecessor's approximation.
pub fn il_chain_step(
    setup: &IlSetup,
    state: &GroupState,
    data: &Bindings,
    stage: usize,
    predecessor: &TensorGroup,
) -> Result<TensorGroup> {
    let (m, k) = setup.schedule.round_learner(stage);
    let loss = &setup.graphs.stage_loss[stage - 1];
    let bindings = setup.bind_for(&[loss], state, None, data)?;
    let wname = weight_group(k, m);
    let grad = group_grad(loss, &bindings, &state[&wname], ident)?;
    let mut w = state[&wname].clone();
    w.axpy(-setup.config.eta, &grad)?;
    // Proximal term: -eta * lambda * 2 (W - W_prev).
    let mut pull = state[&wname].clone();
    pull.axpy(-1.0, predecessor)?;
    w.axpy(-2.0 * setup.config.eta * setup.config.lambda, &pull)?;
    if !w.all_finite() {
        return Err(IlError::Stage {
            round: m,
            learner: k,
            source: Box::new(tensor_ad::AdError::non_finite("chain step").into()),
        });
    }
    Ok(w)
}

/// Final-round head step: one gradient step at the committed weights.
pub fn il_head_step(setup: &IlSetup, state: &GroupState, data: &Bindings, learner: usize) -> Result<TensorGroup> {
    let m = setup.config.rounds;
    let stage = setup.schedule.stage_of(m, learner);
    let loss = &setup.graphs.stage_loss[stage - 1];
    let bindings = setup.bind_for(&[loss], state, None, data)?;
    let hname = head_group(learner, m);
    let grad = group_grad(loss, &bindings, &state[&hname], ident)?;
    let mut h = state[&hname].clone();
    h.axpy(-setup.config.eta, &grad)?;
    Ok(h)
}

/// Run the whole recursive chain from the committed state.
pub fn build_chain(setup: &IlSetup, state: &GroupState, data: &Bindings) -> Result<IlChain> {
    let mut by_group = BTreeMap::new();
    let mut prev: Option<TensorGroup> = None;
    for stage in 1..=setup.schedule.stage_count() {
        let (m, k) = setup.schedule.round_learner(stage);
        let w = match &prev {
            None => il_first_stage_step(setup, state, data)?,
            Some(p) => il_chain_step(setup, state, data, stage, p)?,
        };
        by_group.insert(weight_group(k, m), w.clone());
        prev = Some(w);
    }
    for k in 1..=setup.config.learners {
        by_group.insert(head_group(k, setup.config.rounds), il_head_step(setup, state, data, k)?);
    }
    Ok(IlChain { by_group })
}

/// Sum of the learners' validation losses at the chained approximations.
pub fn chained_objective(setup: &IlSetup, state: &GroupState, data: &Bindings) -> Result<f64> {
    let chain = build_chain(setup, state, data)?;
    let mut total = 0.0;
    for term in &setup.graphs.val_terms {
        let bindings = setup.bind_for(&[term], state, Some(&chain.by_group), data)?;
        total += evaluate(term, &bindings)?.scalar();
    }
    Ok(total)
}

/// Architecture gradient of the summed validation losses through the full
/// chain. Each learner's term is backpropagated independently: the direct
/// part, a head-step correction, and a walk down the encoder chain where
/// each stage contributes a finite-difference mixed-derivative product and
/// hands `2 eta lambda` times its adjoint to its predecessor.
pub fn il_arch_grad(
    setup: &IlSetup,
    state: &GroupState,
    data: &Bindings,
    chain: &IlChain,
) -> Result<TensorGroup> {
    let eta = setup.config.eta;
    let lambda = setup.config.lambda;
    let arch = &state[G_ARCH];
    let mut g = arch.zeros_like();

    for (k0, term) in setup.graphs.val_terms.iter().enumerate() {
        let k = k0 + 1;
        let m = setup.config.rounds;
        let wname = weight_group(k, m);
        let hname = head_group(k, m);
        let bindings = setup.bind_for(&[term], state, Some(&chain.by_group), data)?;

        let mut wrt = arch.present_leaves(term, ident);
        wrt.extend(state[&wname].present_leaves(term, tilde));
        wrt.extend(state[&hname].present_leaves(term, tilde));
        let gm = backward_grad(term, &bindings, &wrt)?;

        // Direct architecture dependence of this validation term.
        g.axpy(1.0, &arch.grad_from(term, &gm, ident))?;

        // Head-step correction at the final-round stage.
        let v_h = state[&hname].grad_from(term, &gm, tilde);
        let stage = setup.schedule.stage_of(m, k);
        let stage_loss = &setup.graphs.stage_loss[stage - 1];
        let stage_bindings = setup.bind_for(&[stage_loss], state, None, data)?;
        let grads_at_h = |p: &TensorGroup| -> mlo_engine::Result<Vec<TensorGroup>> {
            let mut b = stage_bindings.clone();
            p.bind_into(&mut b, ident);
            Ok(vec![group_grad(stage_loss, &b, arch, ident)?])
        };
        if let Some(mut h) = group_fd_hvp(grads_at_h, &state[&hname], &v_h)? {
            g.axpy(-eta, &h.remove(0))?;
        }

        // Walk the encoder chain back to the first stage.
        let mut v = state[&wname].grad_from(term, &gm, tilde);
        let mut s = stage;
        loop {
            if v.norm2() == 0.0 {
                break;
            }
            let (sm, sk) = setup.schedule.round_learner(s);
            let w_s = weight_group(sk, sm);
            let loss_s = &setup.graphs.stage_loss[s - 1];
            let bindings_s = setup.bind_for(&[loss_s], state, None, data)?;
            let grads_at = |p: &TensorGroup| -> mlo_engine::Result<Vec<TensorGroup>> {
                let mut b = bindings_s.clone();
                p.bind_into(&mut b, ident);
                Ok(vec![group_grad(loss_s, &b, arch, ident)?])
            };
            if let Some(mut h) = group_fd_hvp(grads_at, &state[&w_s], &v)? {
                g.axpy(-eta, &h.remove(0))?;
            }
            match setup.schedule.predecessor(s) {
                Some(prev) => {
                    // Adjoint through the proximal anchor.
                    v = v.scale(2.0 * eta * lambda);
                    s = prev;
                }
                None => break,
            }
        }
    }
    Ok(g)
}

/// One full iteration of the interleaving algorithm: chain all encoder
/// stages in round-major order, step the final-round heads, update the
/// architecture through the chain, then commit (heads of earlier rounds
/// are discarded).
pub fn il_iterate(
    setup: &IlSetup,
    state: &mut GroupState,
    sources: &DataSources,
    iteration: usize,
) -> Result<MetricsRecord> {
    let mut data = Bindings::new();
    sources.bind_iteration(setup.config.seed, iteration, &setup.data_bindings(), &mut data)?;

    let chain = build_chain(setup, state, &data)?;
    let g_arch = il_arch_grad(setup, state, &data, &chain)?;

    let mut record = MetricsRecord::new(iteration);
    for stage in 1..=setup.schedule.stage_count() {
        let (m, k) = setup.schedule.round_learner(stage);
        let loss = &setup.graphs.stage_loss[stage - 1];
        let bindings = setup.bind_for(&[loss], state, None, &data)?;
        record.set(
            &format!("stage_loss_m{m}_k{k}"),
            evaluate(loss, &bindings)?.scalar(),
        );
        if let Some(prev) = setup.schedule.predecessor(stage) {
            let (pm, pk) = setup.schedule.round_learner(prev);
            let mut d = chain.by_group[&weight_group(k, m)].clone();
            d.axpy(-1.0, &chain.by_group[&weight_group(pk, pm)])?;
            record.set(&format!("enc_dist_m{m}_k{k}"), d.norm2());
        }
    }
    for (k0, term) in setup.graphs.val_terms.iter().enumerate() {
        let bindings = setup.bind_for(&[term], state, Some(&chain.by_group), &data)?;
        record.set(
            &format!("val_loss_k{}", k0 + 1),
            evaluate(term, &bindings)?.scalar(),
        );
    }
    record.set("arch_grad_norm", g_arch.norm2());

    // Commit: architecture descends; every encoder stage commits its
    // approximation; only final-round heads are kept.
    {
        let arch = state.get_mut(G_ARCH).expect("arch");
        arch.axpy(-setup.config.eta, &g_arch)?;
        if !arch.all_finite() {
            return Err(tensor_ad::AdError::non_finite("architecture update").into());
        }
    }
    for stage in 1..=setup.schedule.stage_count() {
        let (m, k) = setup.schedule.round_learner(stage);
        let name = weight_group(k, m);
        state.insert(name.clone(), chain.by_group[&name].clone());
    }
    for k in 1..=setup.config.learners {
        let name = head_group(k, setup.config.rounds);
        state.insert(name.clone(), chain.by_group[&name].clone());
    }
    Ok(record)
}

/// The joint baseline's configuration: the same learners and data, but a
/// single round and no proximal coupling. The tradeoff knob has no effect
/// on it by construction.
pub fn jl_config(config: &IlConfig) -> IlConfig {
    IlConfig {
        rounds: 1,
        lambda: 0.0,
        ..config.clone()
    }
}

/// One iteration of the joint baseline: simultaneous one-step updates of
/// every learner's weights and head, then one architecture step on the
/// summed validation losses.
pub fn jl_iterate(
    setup: &IlSetup,
    state: &mut GroupState,
    sources: &DataSources,
    iteration: usize,
) -> Result<MetricsRecord> {
    debug_assert_eq!(setup.config.rounds, 1);
    debug_assert_eq!(setup.config.lambda, 0.0);
    il_iterate(setup, state, sources, iteration)
}
