use crate::data::DataSources;
use crate::error::{EngineError, Result};
use crate::group::{approx_leaf, is_approx_leaf, strip_approx, TensorGroup};
use crate::metrics::MetricsRecord;
use crate::problem::{GroupState, MLOProblem, StageSpec, TermKind};
use std::collections::BTreeMap;
use std::time::Instant;
use tensor_ad::{backward_grad, evaluate, Bindings, Graph};

/// One-step approximations of each stage's optimum, keyed by group.
#[derive(Debug, Clone, Default)]
pub struct Approximations {
    by_group: BTreeMap<String, TensorGroup>,
}

impl Approximations {
    pub fn get(&self, group: &str) -> Option<&TensorGroup> {
        self.by_group.get(group)
    }

    pub fn insert(&mut self, group: String, value: TensorGroup) {
        self.by_group.insert(group, value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TensorGroup)> {
        self.by_group.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// Which stage read which earlier stage's approximation. The validation
/// stage is recorded as consumer `K + 1`.
#[derive(Debug, Default)]
pub struct AccessLog {
    pub reads: Vec<(usize, usize)>,
}

impl AccessLog {
    fn record(&mut self, consumer: usize, producer: usize) {
        if !self.reads.contains(&(consumer, producer)) {
            self.reads.push((consumer, producer));
        }
    }
}

/// Value of one validation term (the ratio already divided out).
#[derive(Debug, Clone)]
pub struct TermValue {
    pub name: String,
    pub value: f64,
}

/// Everything one hypergradient evaluation produces.
#[derive(Debug)]
pub struct HyperOutput {
    pub gradients: BTreeMap<String, TensorGroup>,
    pub approx: Approximations,
    pub objective: f64,
    pub terms: Vec<TermValue>,
    pub stage_losses: Vec<f64>,
}

/// Report of a full `solve` run.
#[derive(Debug)]
pub struct SolveReport {
    pub state: GroupState,
    pub metrics: Vec<MetricsRecord>,
    pub access: AccessLog,
}

/// Floor below which a ratio term's denominator is considered degenerate.
pub const CARDINALITY_FLOOR: f64 = 1e-8;

/// Finite-difference product of a mixed second derivative with a direction,
/// at the group level: perturbs `base` by `±a·direction` with
/// `a = 0.01 / ||direction||`, calls `grads_at` for the target gradients,
/// and returns the centered differences. `None` when the direction is zero
/// (the product is zero; callers skip the contribution).
pub fn group_fd_hvp<F>(
    grads_at: F,
    base: &TensorGroup,
    direction: &TensorGroup,
) -> Result<Option<Vec<TensorGroup>>>
where
    F: Fn(&TensorGroup) -> Result<Vec<TensorGroup>>,
{
    let norm = direction.norm2();
    if norm == 0.0 {
        return Ok(None);
    }
    let alpha = 0.01 / norm;

    let mut plus = base.clone();
    plus.axpy(alpha, direction)?;
    let gp = grads_at(&plus)?;

    let mut minus = base.clone();
    minus.axpy(-alpha, direction)?;
    let gm = grads_at(&minus)?;

    let mut out = Vec::with_capacity(gp.len());
    for (p, m) in gp.into_iter().zip(gm) {
        let mut d = p;
        d.axpy(-1.0, &m)?;
        out.push(d.scale(1.0 / (2.0 * alpha)));
    }
    Ok(Some(out))
}

/// Gradient of a graph's output with respect to one group, with zeros for
/// leaves the graph does not reference. `rename` maps stored tensor names
/// to graph leaf names (identity for committed values, `~`-prefixing for
/// approximations).
pub fn group_grad(
    graph: &Graph,
    bindings: &Bindings,
    value: &TensorGroup,
    rename: impl Fn(&str) -> String + Copy,
) -> Result<TensorGroup> {
    let wrt = value.present_leaves(graph, rename);
    if wrt.is_empty() {
        return Ok(value.zeros_like());
    }
    let gm = backward_grad(graph, bindings, &wrt)?;
    Ok(value.grad_from(graph, &gm, rename))
}

fn ident(name: &str) -> String {
    name.to_string()
}

impl MLOProblem {
    /// Bind every leaf the given graphs need: data leaves from `data`,
    /// `~`-prefixed leaves from stage approximations (recording the access),
    /// everything else from committed state.
    fn bind_graphs(
        &self,
        graphs: &[&Graph],
        state: &GroupState,
        approx: &Approximations,
        data: &Bindings,
        consumer: usize,
        log: &mut AccessLog,
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
                if is_approx_leaf(leaf) {
                    let base = strip_approx(leaf);
                    let owner = self.owner_of_leaf(base).ok_or_else(|| {
                        EngineError::UnresolvedLeaf {
                            leaf: leaf.to_string(),
                            context: format!("consumer {consumer}"),
                        }
                    })?;
                    let producer = self.producer_of(owner).expect("validated at build");
                    let group = approx.get(owner).ok_or_else(|| {
                        EngineError::MissingApproximation {
                            group: owner.to_string(),
                            stage: producer,
                        }
                    })?;
                    let tensor = group.get(base).expect("leaf in owning group");
                    out.insert(leaf.to_string(), tensor.clone());
                    log.record(consumer, producer);
                    continue;
                }
                let owner = self.owner_of_leaf(leaf).ok_or_else(|| {
                    EngineError::UnresolvedLeaf {
                        leaf: leaf.to_string(),
                        context: format!("consumer {consumer}"),
                    }
                })?;
                let tensor = state[owner].get(leaf).expect("leaf in owning group");
                out.insert(leaf.to_string(), tensor.clone());
            }
        }
        Ok(out)
    }

    fn stage_graphs<'a>(&self, stage: &'a StageSpec) -> Vec<&'a Graph> {
        let mut graphs = vec![&stage.loss];
        if let Some(i) = &stage.interaction {
            graphs.push(i);
        }
        graphs
    }

    /// Gradient of a stage's full objective (loss plus weighted
    /// interaction) with respect to one group, under graph-leaf renaming.
    fn stage_objective_grad(
        &self,
        stage: &StageSpec,
        bindings: &Bindings,
        value: &TensorGroup,
        rename: impl Fn(&str) -> String + Copy,
    ) -> Result<TensorGroup> {
        let mut total = group_grad(&stage.loss, bindings, value, rename)?;
        if let Some(inter) = &stage.interaction {
            let gi = group_grad(inter, bindings, value, rename)?;
            total.axpy(stage.tradeoff, &gi)?;
        }
        Ok(total)
    }

    /// One-step gradient-descent approximation of a stage's optimum, with
    /// earlier optima replaced by their approximations.
    pub fn one_step_update(
        &self,
        stage_index: usize,
        state: &GroupState,
        approx: &Approximations,
        data: &Bindings,
        log: &mut AccessLog,
    ) -> Result<BTreeMap<String, TensorGroup>> {
        let stage = &self.stages[stage_index - 1];
        let bindings = self.bind_graphs(&self.stage_graphs(stage), state, approx, data, stage.index, log)?;
        let mut out = BTreeMap::new();
        for gname in &stage.active {
            let group = self.group(gname);
            let current = &state[gname];
            let grad = self.stage_objective_grad(stage, &bindings, current, ident)?;
            let mut updated = current.clone();
            updated.axpy(-group.lr, &grad)?;
            if !updated.all_finite() {
                return Err(tensor_ad::AdError::non_finite(format!("stage {} update of `{gname}`", stage.index)).into());
            }
            out.insert(gname.clone(), updated);
        }
        Ok(out)
    }

    /// Chain `one_step_update` through all stages in order.
    pub fn approximate_stages(
        &self,
        state: &GroupState,
        data: &Bindings,
        log: &mut AccessLog,
    ) -> Result<(Approximations, Vec<f64>)> {
        let mut approx = Approximations::default();
        let mut losses = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let bindings =
                self.bind_graphs(&[&stage.loss], state, &approx, data, stage.index, log)?;
            losses.push(evaluate(&stage.loss, &bindings)?.scalar());
            let updated = self.one_step_update(stage.index, state, &approx, data, log)?;
            for (g, v) in updated {
                approx.insert(g, v);
            }
        }
        Ok((approx, losses))
    }

    fn term_value(
        &self,
        term: &crate::problem::ValTerm,
        bindings: &Bindings,
    ) -> Result<f64> {
        match &term.kind {
            TermKind::Plain(g) => Ok(evaluate(g, bindings)?.scalar()),
            TermKind::Ratio { numerator, denominator } => {
                let n = evaluate(numerator, bindings)?.scalar();
                let d = evaluate(denominator, bindings)?.scalar();
                if d.abs() < CARDINALITY_FLOOR {
                    return Err(EngineError::DivisionDegenerate {
                        term: term.name.clone(),
                        value: d,
                    });
                }
                Ok(n / d)
            }
        }
    }

    /// The approximated validation objective with precomputed stage
    /// approximations. Maximize-sense terms enter with a negative sign.
    pub fn validation_objective_with(
        &self,
        state: &GroupState,
        approx: &Approximations,
        data: &Bindings,
        log: &mut AccessLog,
    ) -> Result<(f64, Vec<TermValue>)> {
        let consumer = self.stage_count() + 1;
        let mut objective = 0.0;
        let mut values = Vec::new();
        for term in &self.validation.terms {
            let bindings =
                self.bind_graphs(&term.graphs(), state, approx, data, consumer, log)?;
            let v = self.term_value(term, &bindings)?;
            objective += term.sense.sign() * term.weight * v;
            values.push(TermValue { name: term.name.clone(), value: v });
        }
        if !objective.is_finite() {
            return Err(tensor_ad::AdError::non_finite("validation objective").into());
        }
        Ok((objective, values))
    }

    /// The approximated validation objective, chaining fresh one-step
    /// approximations for all stages first.
    pub fn validation_objective(
        &self,
        state: &GroupState,
        data: &Bindings,
        log: &mut AccessLog,
    ) -> Result<(f64, Vec<TermValue>)> {
        let (approx, _) = self.approximate_stages(state, data, log)?;
        self.validation_objective_with(state, &approx, data, log)
    }

    /// Hypergradients of the approximated validation objective with respect
    /// to every remaining group.
    ///
    /// Each validation term contributes an independent adjoint stream
    /// (ratio terms contribute one stream per quotient piece). A stream
    /// seeds adjoints at the stage outputs its graph references, then runs
    /// backward through the stages: each traversed stage adds a
    /// finite-difference mixed-second-derivative product for every
    /// remaining group its objective references and forwards a scaled
    /// adjoint to every earlier stage output it references.
    pub fn hypergradients(
        &self,
        state: &GroupState,
        data: &Bindings,
        log: &mut AccessLog,
    ) -> Result<HyperOutput> {
        let consumer = self.stage_count() + 1;
        let (approx, stage_losses) = self.approximate_stages(state, data, log)?;

        let mut gradients: BTreeMap<String, TensorGroup> = self
            .validation
            .remaining
            .iter()
            .map(|g| (g.clone(), state[g].zeros_like()))
            .collect();

        let mut objective = 0.0;
        let mut term_values = Vec::new();

        // (graph, coefficient) pieces per term.
        for term in &self.validation.terms {
            let bindings =
                self.bind_graphs(&term.graphs(), state, &approx, data, consumer, log)?;
            let s = term.sense.sign() * term.weight;
            let pieces: Vec<(&Graph, f64)> = match &term.kind {
                TermKind::Plain(g) => {
                    let v = evaluate(g, &bindings)?.scalar();
                    objective += s * v;
                    term_values.push(TermValue { name: term.name.clone(), value: v });
                    vec![(g, s)]
                }
                TermKind::Ratio { numerator, denominator } => {
                    let n = evaluate(numerator, &bindings)?.scalar();
                    let d = evaluate(denominator, &bindings)?.scalar();
                    if d.abs() < CARDINALITY_FLOOR {
                        return Err(EngineError::DivisionDegenerate {
                            term: term.name.clone(),
                            value: d,
                        });
                    }
                    objective += s * (n / d);
                    term_values.push(TermValue { name: term.name.clone(), value: n / d });
                    vec![(numerator, s / d), (denominator, -s * n / (d * d))]
                }
            };

            for (graph, coeff) in pieces {
                self.accumulate_piece(
                    graph, coeff, state, &approx, data, &bindings, &mut gradients, log,
                )?;
            }
        }

        if !objective.is_finite() {
            return Err(tensor_ad::AdError::non_finite("validation objective").into());
        }
        Ok(HyperOutput { gradients, approx, objective, terms: term_values, stage_losses })
    }

    /// Direct gradient plus chained stage contributions for one piece.
    #[allow(clippy::too_many_arguments)]
    fn accumulate_piece(
        &self,
        graph: &Graph,
        coeff: f64,
        state: &GroupState,
        approx: &Approximations,
        data: &Bindings,
        bindings: &Bindings,
        gradients: &mut BTreeMap<String, TensorGroup>,
        log: &mut AccessLog,
    ) -> Result<()> {
        // Which stage outputs and remaining groups does the piece touch?
        let mut wrt: Vec<String> = Vec::new();
        for g in &self.validation.remaining {
            wrt.extend(state[g].present_leaves(graph, ident));
        }
        let produced: Vec<&str> = self
            .groups
            .iter()
            .map(|g| g.name.as_str())
            .filter(|g| self.producer_of(g).is_some())
            .collect();
        for p in &produced {
            wrt.extend(state[*p].present_leaves(graph, approx_leaf));
        }
        if wrt.is_empty() {
            return Ok(());
        }
        let gm = backward_grad(graph, bindings, &wrt)?;

        // Direct dependence on remaining groups.
        for g in &self.validation.remaining {
            let direct = state[g].grad_from(graph, &gm, ident);
            gradients.get_mut(g).expect("remaining").axpy(coeff, &direct)?;
        }

        // Adjoint stream seeded at referenced stage outputs.
        let mut stream: BTreeMap<String, TensorGroup> = BTreeMap::new();
        for p in &produced {
            if !state[*p].present_leaves(graph, approx_leaf).is_empty() {
                stream.insert(p.to_string(), state[*p].grad_from(graph, &gm, approx_leaf));
            }
        }

        for stage in self.stages.iter().rev() {
            for gname in &stage.active {
                let Some(direction) = stream.remove(gname) else { continue };
                let group = self.group(gname);
                let stage_bindings = self.bind_graphs(
                    &self.stage_graphs(stage),
                    state,
                    approx,
                    data,
                    stage.index,
                    log,
                )?;

                // Targets: remaining groups plus earlier stage outputs that
                // this stage's objective references.
                let mut remaining_targets: Vec<&str> = Vec::new();
                for r in &self.validation.remaining {
                    let present = self.stage_graphs(stage).iter().any(|g| {
                        !state[r].present_leaves(g, ident).is_empty()
                    });
                    if present {
                        remaining_targets.push(r);
                    }
                }
                let mut earlier_targets: Vec<&str> = Vec::new();
                for p in self.groups.iter().map(|g| g.name.as_str()) {
                    if let Some(prod) = self.producer_of(p) {
                        if prod < stage.index {
                            let present = self.stage_graphs(stage).iter().any(|g| {
                                !state[p].present_leaves(g, approx_leaf).is_empty()
                            });
                            if present {
                                earlier_targets.push(
                                    self.groups
                                        .iter()
                                        .find(|g| g.name == p)
                                        .map(|g| g.name.as_str())
                                        .unwrap(),
                                );
                            }
                        }
                    }
                }
                if remaining_targets.is_empty() && earlier_targets.is_empty() {
                    continue;
                }

                let grads_at = |perturbed: &TensorGroup| -> Result<Vec<TensorGroup>> {
                    let mut b = stage_bindings.clone();
                    perturbed.bind_into(&mut b, ident);
                    let mut out = Vec::new();
                    for r in &remaining_targets {
                        out.push(self.stage_objective_grad(stage, &b, &state[*r], ident)?);
                    }
                    for p in &earlier_targets {
                        out.push(self.stage_objective_grad(stage, &b, &state[*p], approx_leaf)?);
                    }
                    Ok(out)
                };

                let Some(hvps) = group_fd_hvp(grads_at, &state[gname], &direction)? else {
                    continue;
                };
                let mut it = hvps.into_iter();
                for r in &remaining_targets {
                    let hvp = it.next().expect("aligned");
                    gradients
                        .get_mut(*r)
                        .expect("remaining")
                        .axpy(coeff * -group.lr, &hvp)?;
                }
                for p in &earlier_targets {
                    let hvp = it.next().expect("aligned");
                    let entry = stream
                        .entry(p.to_string())
                        .or_insert_with(|| state[*p].zeros_like());
                    entry.axpy(-group.lr, &hvp)?;
                }
            }
        }
        Ok(())
    }

    /// One gradient step on every remaining group: ascend groups climb the
    /// combined objective, the rest descend it. Returns the hypergradient
    /// output for inspection.
    pub fn hyper_step(
        &self,
        state: &mut GroupState,
        data: &Bindings,
        log: &mut AccessLog,
    ) -> Result<HyperOutput> {
        let out = self.hypergradients(state, data, log)?;
        for g in &self.validation.remaining {
            let group = self.group(g);
            let sign = if self.validation.ascend.contains(g) { 1.0 } else { -1.0 };
            let value = state.get_mut(g).expect("remaining group");
            value.axpy(sign * group.lr, &out.gradients[g])?;
            if !value.all_finite() {
                return Err(tensor_ad::AdError::non_finite(format!("hyper step of `{g}`")).into());
            }
        }
        Ok(out)
    }

    /// Full optimization loop: per iteration, approximate all stages in
    /// order, step the remaining groups on the approximated objective, then
    /// commit the stage approximations (except discarded ones).
    pub fn solve(&self, sources: &DataSources, iterations: usize, seed: u64) -> Result<SolveReport> {
        let mut state = self.initial_state();
        let mut log = AccessLog::default();
        let mut metrics = Vec::with_capacity(iterations);
        let all_bindings = self.all_data_bindings();
        let start = Instant::now();

        for t in 0..iterations {
            let mut data = Bindings::new();
            sources.bind_iteration(seed, t, &all_bindings, &mut data)?;

            let wrap = |e: EngineError| EngineError::AtIteration { iteration: t, source: Box::new(e) };
            let out = self.hyper_step(&mut state, &data, &mut log).map_err(wrap)?;

            for stage in &self.stages {
                for g in &stage.active {
                    if stage.discard_after.contains(g) {
                        continue;
                    }
                    state.insert(g.clone(), out.approx.get(g).expect("approximated").clone());
                }
            }

            let mut scalars = BTreeMap::new();
            scalars.insert("objective".to_string(), out.objective);
            for tv in &out.terms {
                scalars.insert(format!("term:{}", tv.name), tv.value);
            }
            for (k, loss) in out.stage_losses.iter().enumerate() {
                scalars.insert(format!("stage{}_loss", k + 1), *loss);
            }
            for (g, grad) in &out.gradients {
                scalars.insert(format!("grad_norm:{g}"), grad.norm2());
            }
            metrics.push(MetricsRecord {
                iteration: t,
                scalars,
                wall_time_s: start.elapsed().as_secs_f64(),
            });
        }

        Ok(SolveReport { state, metrics, access: log })
    }
}
