use crate::data::DataBinding;
use crate::error::{EngineError, Result};
use crate::group::{is_approx_leaf, strip_approx, ParamGroup, TensorGroup};
use std::collections::{BTreeMap, BTreeSet};
use tensor_ad::Graph;

/// One learning stage: an optimization problem over the active groups with
/// the supporting groups frozen, optionally coupled to earlier stages by an
/// interaction term weighted by `tradeoff`.
#[derive(Debug, Clone)]
pub struct StageSpec {
    /// 1-based position in the stage order.
    pub index: usize,
    pub active: Vec<String>,
    pub supporting: Vec<String>,
    pub loss: Graph,
    pub interaction: Option<Graph>,
    pub tradeoff: f64,
    pub data: Vec<DataBinding>,
    /// Active groups whose one-step approximations are computed but not
    /// committed at the end of an iteration (discarded stage outputs).
    pub discard_after: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermSense {
    Minimize,
    Maximize,
}

impl TermSense {
    /// Sign with which the term enters the scalar objective.
    pub fn sign(self) -> f64 {
        match self {
            TermSense::Minimize => 1.0,
            TermSense::Maximize => -1.0,
        }
    }
}

/// A validation-stage term: either a plain scalar graph or a ratio of two
/// graphs (loss normalized by a size term). Ratios are first-class so the
/// quotient rule is applied piecewise, matching the specialized algorithms.
#[derive(Debug, Clone)]
pub enum TermKind {
    Plain(Graph),
    Ratio { numerator: Graph, denominator: Graph },
}

#[derive(Debug, Clone)]
pub struct ValTerm {
    pub name: String,
    pub kind: TermKind,
    pub weight: f64,
    pub sense: TermSense,
}

impl ValTerm {
    pub fn graphs(&self) -> Vec<&Graph> {
        match &self.kind {
            TermKind::Plain(g) => vec![g],
            TermKind::Ratio { numerator, denominator } => vec![numerator, denominator],
        }
    }
}

/// The top-level problem over the remaining (never stage-active) groups.
/// Groups listed in `ascend` take gradient-ascent steps on the combined
/// objective; the rest descend — this expresses min–max validation stages
/// as sign-flipped simultaneous updates.
#[derive(Debug, Clone)]
pub struct ValidationSpec {
    pub remaining: Vec<String>,
    pub terms: Vec<ValTerm>,
    pub ascend: Vec<String>,
    pub data: Vec<DataBinding>,
}

/// A validated K-stage + validation problem.
#[derive(Debug)]
pub struct MLOProblem {
    pub groups: Vec<ParamGroup>,
    pub stages: Vec<StageSpec>,
    pub validation: ValidationSpec,
    /// leaf name -> owning group name
    leaf_owner: BTreeMap<String, String>,
    /// group name -> stage index where it is active (if any)
    producer: BTreeMap<String, usize>,
}

/// Current committed values per group.
pub type GroupState = BTreeMap<String, TensorGroup>;

impl MLOProblem {
    /// Validate the specs and assemble the problem. Rejects overlap between
    /// active and supporting sets, reuse of learned groups, orphan groups,
    /// and any leaf that resolves to nothing.
    pub fn build(
        groups: Vec<ParamGroup>,
        stages: Vec<StageSpec>,
        validation: ValidationSpec,
    ) -> Result<Self> {
        let mut leaf_owner = BTreeMap::new();
        let mut names = BTreeSet::new();
        for g in &groups {
            if !names.insert(g.name.clone()) {
                return Err(EngineError::DuplicateGroup(g.name.clone()));
            }
            for leaf in g.value.names() {
                if leaf_owner.insert(leaf.to_string(), g.name.clone()).is_some() {
                    return Err(EngineError::DuplicateLeaf(leaf.to_string()));
                }
            }
        }

        for (i, s) in stages.iter().enumerate() {
            if s.index != i + 1 {
                return Err(EngineError::BadStageOrder(s.index));
            }
            if !s.tradeoff.is_finite() || s.tradeoff < 0.0 {
                return Err(EngineError::BadTradeoff(format!("stage {}", s.index)));
            }
            for g in &s.active {
                if s.supporting.contains(g) {
                    return Err(EngineError::ActiveSupportingOverlap {
                        group: g.clone(),
                        stage: s.index,
                    });
                }
            }
        }

        // A group active at stage k may not be active or supporting later.
        let mut producer: BTreeMap<String, usize> = BTreeMap::new();
        for s in &stages {
            for g in &s.active {
                if producer.contains_key(g) {
                    return Err(EngineError::ReuseAfterLearned {
                        group: g.clone(),
                        stage: s.index,
                    });
                }
            }
            for g in &s.supporting {
                if producer.contains_key(g) {
                    return Err(EngineError::ReuseAfterLearned {
                        group: g.clone(),
                        stage: s.index,
                    });
                }
            }
            for g in &s.active {
                producer.insert(g.clone(), s.index);
            }
        }

        // Remaining groups are exactly those never active in any stage.
        let remaining: BTreeSet<&str> = validation.remaining.iter().map(|s| s.as_str()).collect();
        for g in &groups {
            let ever_active = producer.contains_key(&g.name);
            let is_remaining = remaining.contains(g.name.as_str());
            if ever_active && is_remaining {
                return Err(EngineError::RemainingMismatch {
                    group: g.name.clone(),
                    detail: "stage-active group listed as remaining".into(),
                });
            }
            if !ever_active && !is_remaining {
                return Err(EngineError::RemainingMismatch {
                    group: g.name.clone(),
                    detail: "never active but not listed as remaining".into(),
                });
            }
        }
        for g in &validation.ascend {
            if !remaining.contains(g.as_str()) {
                return Err(EngineError::RemainingMismatch {
                    group: g.clone(),
                    detail: "ascend entry is not a remaining group".into(),
                });
            }
        }

        // Orphans: groups no stage touches and validation never reads.
        let mut referenced: BTreeSet<String> = BTreeSet::new();
        for s in &stages {
            referenced.extend(s.active.iter().cloned());
            referenced.extend(s.supporting.iter().cloned());
        }
        referenced.extend(validation.remaining.iter().cloned());
        for g in &groups {
            if !referenced.contains(&g.name) {
                return Err(EngineError::OrphanGroup { group: g.name.clone() });
            }
        }

        let problem = MLOProblem {
            groups,
            stages,
            validation,
            leaf_owner,
            producer,
        };
        problem.check_leaves()?;
        Ok(problem)
    }

    fn check_leaves(&self) -> Result<()> {
        let data_leaves = |data: &[DataBinding]| -> BTreeSet<String> {
            data.iter()
                .flat_map(|b| [b.x_leaf.clone(), b.y_leaf.clone()])
                .collect()
        };
        let check_graph = |graph: &Graph,
                               context: &str,
                               stage_index: Option<usize>,
                               data: &BTreeSet<String>|
         -> Result<()> {
            for leaf in graph.leaf_names() {
                if data.contains(leaf) {
                    continue;
                }
                if is_approx_leaf(leaf) {
                    let owner = self.leaf_owner.get(strip_approx(leaf)).ok_or_else(|| {
                        EngineError::UnresolvedLeaf { leaf: leaf.into(), context: context.into() }
                    })?;
                    let produced = *self.producer.get(owner).ok_or_else(|| {
                        EngineError::UnresolvedLeaf { leaf: leaf.into(), context: context.into() }
                    })?;
                    if let Some(k) = stage_index {
                        if produced >= k {
                            return Err(EngineError::StageOrderViolation {
                                stage: k,
                                group: owner.clone(),
                                producer: produced,
                            });
                        }
                    }
                } else if !self.leaf_owner.contains_key(leaf) {
                    return Err(EngineError::UnresolvedLeaf {
                        leaf: leaf.into(),
                        context: context.into(),
                    });
                }
            }
            Ok(())
        };

        for s in &self.stages {
            let data = data_leaves(&s.data);
            let ctx = format!("stage {} loss", s.index);
            check_graph(&s.loss, &ctx, Some(s.index), &data)?;
            if let Some(i) = &s.interaction {
                let ctx = format!("stage {} interaction", s.index);
                check_graph(i, &ctx, Some(s.index), &data)?;
            }
        }
        let data = data_leaves(&self.validation.data);
        for t in &self.validation.terms {
            for g in t.graphs() {
                check_graph(g, &format!("validation term `{}`", t.name), None, &data)?;
            }
        }
        Ok(())
    }

    pub fn group(&self, name: &str) -> &ParamGroup {
        self.groups
            .iter()
            .find(|g| g.name == name)
            .unwrap_or_else(|| panic!("unknown group `{name}`"))
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    /// Stage index where a group is active, if any.
    pub fn producer_of(&self, group: &str) -> Option<usize> {
        self.producer.get(group).copied()
    }

    pub fn owner_of_leaf(&self, leaf: &str) -> Option<&str> {
        self.leaf_owner.get(leaf).map(|s| s.as_str())
    }

    /// Fresh mutable state initialized from the groups' values.
    pub fn initial_state(&self) -> GroupState {
        self.groups
            .iter()
            .map(|g| (g.name.clone(), g.value.clone()))
            .collect()
    }

    /// Data bindings across all stages and the validation spec.
    pub fn all_data_bindings(&self) -> Vec<DataBinding> {
        let mut out: Vec<DataBinding> = Vec::new();
        for s in &self.stages {
            out.extend(s.data.iter().cloned());
        }
        out.extend(self.validation.data.iter().cloned());
        out
    }
}
