use crate::schedule::IlSchedule;
use crate::{train_set, val_set, IlError, Result, G_ARCH};
use mlo_engine::{DataBinding, GroupState, ParamGroup, Role, TensorGroup};
use tensor_ad::{derive_seed, seeded_init, Bindings, Graph, GraphBuilder, InitScheme, Tensor};
use toy_nas::{arch_logits_init, encoder_weights_init, mixed_hidden, MixedSpec, OpKind};

/// Encoder weight group name for learner k in round m.
pub fn weight_group(learner: usize, round: usize) -> String {
    format!("w{learner}_{round}")
}

/// Head weight group name for learner k in round m.
pub fn head_group(learner: usize, round: usize) -> String {
    format!("h{learner}_{round}")
}

#[derive(Debug, Clone)]
pub struct IlConfig {
    pub learners: usize,
    pub rounds: usize,
    /// Proximal tradeoff pulling each stage toward its predecessor.
    pub lambda: f64,
    /// Single step size used by weight, head, and architecture updates.
    pub eta: f64,
    pub batch_train: usize,
    pub batch_val: usize,
    pub seed: u64,
}

impl Default for IlConfig {
    fn default() -> Self {
        IlConfig {
            learners: 2,
            rounds: 2,
            lambda: 100.0,
            eta: 0.01,
            batch_train: 16,
            batch_val: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IlShape {
    pub dim: usize,
    pub classes: usize,
    pub mixed_layers: usize,
    /// Candidate menu used by every layer.
    pub ops: Vec<OpKind>,
}

impl IlShape {
    pub fn standard(dim: usize, classes: usize, mixed_layers: usize) -> Self {
        IlShape { dim, classes, mixed_layers, ops: toy_nas::STANDARD_OPS.to_vec() }
    }

    pub fn mixed_spec(&self) -> MixedSpec {
        MixedSpec {
            input_dim: self.dim,
            classes: self.classes,
            layer_ops: vec![self.ops.clone(); self.mixed_layers],
        }
    }

    pub fn param_count(&self, config: &IlConfig) -> usize {
        let spec = self.mixed_spec();
        let enc: usize = spec
            .layer_ops
            .iter()
            .map(|menu| {
                menu.iter().filter(|o| o.has_weights()).count() * (self.dim * self.dim + self.dim)
            })
            .sum();
        let head = self.dim * self.classes + self.classes;
        spec.arch_param_count() + config.learners * config.rounds * (enc + head)
    }
}

/// Graphs for every stage and validation term, indexed by flat stage order.
#[derive(Debug, Clone)]
pub struct IlGraphs {
    pub stage_loss: Vec<Graph>,
    /// Proximal anchor to the predecessor; `None` for the very first stage.
    pub stage_inter: Vec<Option<Graph>>,
    /// Per-learner validation loss at the final round's approximations.
    pub val_terms: Vec<Graph>,
}

#[derive(Debug)]
pub struct IlSetup {
    pub config: IlConfig,
    pub shape: IlShape,
    pub schedule: IlSchedule,
    pub groups: Vec<ParamGroup>,
    pub graphs: IlGraphs,
}

fn head_logits(gb: &mut GraphBuilder, head_prefix: &str, hidden: tensor_ad::NodeId) -> tensor_ad::NodeId {
    let w = gb.leaf(&format!("{head_prefix}.w"));
    let b = gb.leaf(&format!("{head_prefix}.b"));
    let z = gb.matmul(hidden, w);
    gb.add_row(z, b)
}

impl IlSetup {
    pub fn new(shape: IlShape, config: IlConfig, init_seed: u64) -> Result<Self> {
        let spec = shape.mixed_spec();
        let schedule = IlSchedule {
            learners: config.learners,
            rounds: config.rounds,
            lambda: config.lambda,
        };

        let mut groups = vec![ParamGroup::new(
            G_ARCH,
            Role::Architecture,
            config.eta,
            TensorGroup::new(arch_logits_init(&spec, G_ARCH, init_seed)),
        )?];
        for (m, k) in schedule.order() {
            let wname = weight_group(k, m);
            groups.push(ParamGroup::new(
                wname.clone(),
                Role::Encoder,
                config.eta,
                TensorGroup::new(encoder_weights_init(
                    &spec,
                    &wname,
                    derive_seed(init_seed, &wname, 3),
                )),
            )?);
            let hname = head_group(k, m);
            groups.push(ParamGroup::new(
                hname.clone(),
                Role::Head,
                config.eta,
                TensorGroup::new(vec![
                    (
                        format!("{hname}.w"),
                        seeded_init(
                            &[shape.dim, shape.classes],
                            InitScheme::Normal { mean: 0.0, std: 0.5 },
                            derive_seed(init_seed, &hname, 4),
                        ),
                    ),
                    (format!("{hname}.b"), Tensor::zeros(&[shape.classes])),
                ]),
            )?);
        }

        // Stage graphs in flat order.
        let mut stage_loss = Vec::new();
        let mut stage_inter = Vec::new();
        for (m, k) in schedule.order() {
            let wname = weight_group(k, m);
            let hname = head_group(k, m);
            let loss = {
                let mut gb = GraphBuilder::new();
                let x = gb.leaf(&format!("k{k}.x"));
                let y = gb.leaf(&format!("k{k}.y"));
                let hid = mixed_hidden(&mut gb, &spec, G_ARCH, &wname, x);
                let logits = head_logits(&mut gb, &hname, hid);
                let ce = gb.cross_entropy_logits(logits, y);
                let out = gb.mean(ce);
                gb.finish(out).expect("stage loss")
            };
            stage_loss.push(loss);

            let s = schedule.stage_of(m, k);
            let inter = schedule.predecessor(s).map(|prev| {
                let (pm, pk) = schedule.round_learner(prev);
                let prev_name = weight_group(pk, pm);
                let mut gb = GraphBuilder::new();
                let mut total: Option<tensor_ad::NodeId> = None;
                // Squared distance between the full weight sets, leaf by leaf.
                let template = encoder_weights_init(&spec, &wname, 0);
                for (leaf, _) in &template {
                    let suffix = leaf.strip_prefix(&format!("{wname}.")).expect("prefixed");
                    let a = gb.leaf(leaf);
                    let b = gb.leaf(&format!("~{prev_name}.{suffix}"));
                    let d = gb.sub(a, b);
                    let n = gb.squared_norm(d);
                    total = Some(match total {
                        Some(t) => gb.add(t, n),
                        None => n,
                    });
                }
                let out = total.expect("at least one weight leaf");
                gb.finish(out).expect("stage interaction")
            });
            stage_inter.push(inter);
        }

        // Validation terms: one per learner, at the final round.
        let mut val_terms = Vec::new();
        for k in 1..=config.learners {
            let wname = weight_group(k, config.rounds);
            let hname = head_group(k, config.rounds);
            let mut gb = GraphBuilder::new();
            let x = gb.leaf(&format!("k{k}v.x"));
            let y = gb.leaf(&format!("k{k}v.y"));
            let hid = mixed_hidden(&mut gb, &spec, G_ARCH, &format!("~{wname}"), x);
            let logits = head_logits(&mut gb, &format!("~{hname}"), hid);
            let ce = gb.cross_entropy_logits(logits, y);
            let out = gb.mean(ce);
            val_terms.push(gb.finish(out).expect("validation term"));
        }

        Ok(IlSetup {
            config,
            shape,
            schedule,
            groups,
            graphs: IlGraphs { stage_loss, stage_inter, val_terms },
        })
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

    pub fn data_bindings(&self) -> Vec<DataBinding> {
        let mut out = Vec::new();
        for k in 1..=self.config.learners {
            out.push(DataBinding::new(&train_set(k), &format!("k{k}.x"), &format!("k{k}.y")));
            out.push(DataBinding::new(&val_set(k), &format!("k{k}v.x"), &format!("k{k}v.y")));
        }
        out
    }

    /// Bind graph leaves from data, chain approximations (`~` names), and
    /// committed state.
    pub fn bind_for(
        &self,
        graphs: &[&Graph],
        state: &GroupState,
        approx: Option<&std::collections::BTreeMap<String, TensorGroup>>,
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
                    let map = approx.ok_or(IlError::MissingPredecessor { round: 0, learner: 0 })?;
                    let group = map.get(owner).ok_or_else(|| {
                        let (m, k) = self.stage_of_group(owner);
                        IlError::MissingPredecessor { round: m, learner: k }
                    })?;
                    out.insert(leaf.to_string(), group.get(base).expect("leaf in group").clone());
                    continue;
                }
                let owner = self.owner_of(leaf)?;
                out.insert(
                    leaf.to_string(),
                    state[owner].get(leaf).expect("leaf in group").clone(),
                );
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
                IlError::Engine(mlo_engine::EngineError::UnresolvedLeaf {
                    leaf: leaf.to_string(),
                    context: "il".to_string(),
                })
            })
    }

    fn stage_of_group(&self, group: &str) -> (usize, usize) {
        for (m, k) in self.schedule.order() {
            if weight_group(k, m) == group || head_group(k, m) == group {
                return (m, k);
            }
        }
        (0, 0)
    }
}
