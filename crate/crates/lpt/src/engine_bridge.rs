use crate::model::AblationMode;
use crate::steps::LptSetup;
use crate::{Result, G_ARCH, G_CREATOR, G_ENCODER, G_EXECUTOR, G_WEIGHTS, SET_BANK, SET_TRAIN, SET_VAL};
use mlo_engine::{
    DataBinding, MLOProblem, StageSpec, TermKind, TermSense, ValTerm, ValidationSpec,
};

/// Express the configured LPT run as a generic two-stage problem with a
/// min–max validation stage: the architecture descends the normalized
/// interaction while the creator ascends it and descends its own
/// validation loss. One engine iteration must reproduce `lpt_iterate`
/// parameter-for-parameter.
pub fn build_engine_problem(setup: &LptSetup) -> Result<MLOProblem> {
    assert!(
        setup.config.ablation != AblationMode::DifficultyOnly,
        "the selection-scalar mode has no stage II and is run by lpt_iterate alone"
    );
    let graphs = &setup.graphs;
    let stages = vec![
        StageSpec {
            index: 1,
            active: vec![G_WEIGHTS.into()],
            supporting: vec![G_ARCH.into()],
            loss: graphs.stage1_loss.clone(),
            interaction: None,
            tradeoff: 0.0,
            data: vec![DataBinding::new(SET_TRAIN, "ee.x", "ee.y")],
            discard_after: vec![],
        },
        StageSpec {
            index: 2,
            active: vec![G_ENCODER.into(), G_EXECUTOR.into()],
            supporting: vec![G_CREATOR.into()],
            loss: graphs.stage2_loss.clone().expect("stage II"),
            interaction: None,
            tradeoff: 0.0,
            data: vec![
                DataBinding::new(SET_TRAIN, "er.x", "er.y"),
                DataBinding::new(SET_BANK, "bank.x", "bank.y"),
            ],
            discard_after: vec![],
        },
    ];
    let validation = ValidationSpec {
        remaining: vec![G_ARCH.into(), G_CREATOR.into()],
        terms: vec![
            ValTerm {
                name: "interaction".into(),
                kind: TermKind::Ratio {
                    numerator: graphs.ratio_num.clone(),
                    denominator: graphs.ratio_den.clone(),
                },
                weight: 1.0,
                sense: TermSense::Minimize,
            },
            ValTerm {
                name: "tester_val".into(),
                kind: TermKind::Plain(graphs.tester_val.clone().expect("validation term")),
                weight: setup.config.lambda,
                sense: TermSense::Maximize,
            },
        ],
        ascend: vec![G_CREATOR.into()],
        data: vec![
            DataBinding::new(SET_BANK, "bank.x", "bank.y"),
            DataBinding::new(SET_VAL, "val.x", "val.y"),
        ],
    };
    Ok(MLOProblem::build(setup.groups.clone(), stages, validation)?)
}
