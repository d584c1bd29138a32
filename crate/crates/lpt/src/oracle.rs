use crate::model::AblationMode;
use crate::steps::{unroll, LptSetup};
use crate::Result;
use mlo_engine::{GroupState, CARDINALITY_FLOOR};
use tensor_ad::{evaluate, Bindings};

/// Straight-line evaluation of the unrolled objective
/// `interaction / cardinality - lambda * tester validation loss`
/// from a committed state. Recomputes the one-step stage approximations on
/// every call, so central differences of this function over any committed
/// parameter probe the exact objective the hypergradients approximate.
pub fn unrolled_objective(setup: &LptSetup, state: &GroupState, data: &Bindings) -> Result<f64> {
    let unrolled = unroll(setup, state, data)?;
    let bindings = setup.bind_for(
        &[&setup.graphs.ratio_num, &setup.graphs.ratio_den],
        state,
        Some(&unrolled),
        data,
    )?;
    let n = evaluate(&setup.graphs.ratio_num, &bindings)?.scalar();
    let d = evaluate(&setup.graphs.ratio_den, &bindings)?.scalar();
    if d.abs() < CARDINALITY_FLOOR {
        return Err(crate::LptError::DivisionDegenerate(d));
    }
    let mut objective = n / d;
    if setup.config.ablation != AblationMode::DifficultyOnly {
        let val = setup.graphs.tester_val.as_ref().expect("validation term");
        let bv = setup.bind_for(&[val], state, Some(&unrolled), data)?;
        objective -= setup.config.lambda * evaluate(val, &bv)?.scalar();
    }
    Ok(objective)
}

/// Probe helper: evaluate the unrolled objective with one group's value
/// replaced, for finite-difference sweeps.
pub struct ObjectiveProbe<'a> {
    pub setup: &'a LptSetup,
    pub state: &'a GroupState,
    pub data: &'a Bindings,
}

impl ObjectiveProbe<'_> {
    pub fn with_group(&self, group: &str, value: mlo_engine::TensorGroup) -> Result<f64> {
        let mut s = self.state.clone();
        s.insert(group.to_string(), value);
        unrolled_objective(self.setup, &s, self.data)
    }
}
