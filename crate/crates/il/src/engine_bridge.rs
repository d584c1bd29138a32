use crate::setup::{head_group, weight_group, IlSetup};
use crate::{train_set, val_set, Result, G_ARCH};
use mlo_engine::{
    DataBinding, MLOProblem, StageSpec, TermKind, TermSense, ValTerm, ValidationSpec,
};

/// Express the interleaving run as a generic (M*K)-stage problem. Heads of
/// non-final rounds are approximated per stage but discarded at commit
/// time. One engine iteration must reproduce `il_iterate`
/// parameter-for-parameter.
pub fn build_engine_problem(setup: &IlSetup) -> Result<MLOProblem> {
    let mut stages = Vec::new();
    for stage in 1..=setup.schedule.stage_count() {
        let (m, k) = setup.schedule.round_learner(stage);
        let discard_after = if m < setup.config.rounds {
            vec![head_group(k, m)]
        } else {
            vec![]
        };
        let interaction = setup.graphs.stage_inter[stage - 1].clone();
        stages.push(StageSpec {
            index: stage,
            active: vec![weight_group(k, m), head_group(k, m)],
            supporting: vec![G_ARCH.into()],
            loss: setup.graphs.stage_loss[stage - 1].clone(),
            tradeoff: if interaction.is_some() { setup.config.lambda } else { 0.0 },
            interaction,
            data: vec![DataBinding::new(
                &train_set(k),
                &format!("k{k}.x"),
                &format!("k{k}.y"),
            )],
            discard_after,
        });
    }
    let mut terms = Vec::new();
    let mut data = Vec::new();
    for k in 1..=setup.config.learners {
        terms.push(ValTerm {
            name: format!("val_k{k}"),
            kind: TermKind::Plain(setup.graphs.val_terms[k - 1].clone()),
            weight: 1.0,
            sense: TermSense::Minimize,
        });
        data.push(DataBinding::new(
            &val_set(k),
            &format!("k{k}v.x"),
            &format!("k{k}v.y"),
        ));
    }
    let validation = ValidationSpec {
        remaining: vec![G_ARCH.into()],
        terms,
        ascend: vec![],
        data,
    };
    Ok(MLOProblem::build(setup.groups.clone(), stages, validation)?)
}
