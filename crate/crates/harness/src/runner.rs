use crate::config::{Mode, RunConfig};
use crate::data::{generate_data, DatasetBundle};
use crate::error::{HarnessError, Result};
use il::{il_iterate, jl_config, jl_iterate, IlConfig, IlSetup, IlShape};
use lpt::{lpt_iterate, LptConfig, LptSetup, LptShape};
use mlo_engine::{
    group_grad, sample_indices, DataSources, GroupState, LabeledSet, MetricsRecord, TensorGroup,
};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use tensor_ad::{bind, derive_seed, Bindings, Tensor};
use toy_nas::{train_discrete, DiscreteArch, MixedSpec, ModelGraph, ModelParams};

/// What one experiment leaves behind.
#[derive(Debug)]
pub struct RunOutcome {
    pub test_accuracy: f64,
    pub mean_interaction: Option<f64>,
    pub mean_cardinality: Option<f64>,
    pub arch: DiscreteArch,
    pub metrics_path: PathBuf,
    pub arch_path: PathBuf,
}

pub fn lpt_shape(config: &RunConfig) -> LptShape {
    LptShape {
        dim: config.dim,
        classes: config.classes,
        mixed_layers: config.mixed_layers,
        encoder_hidden: config.encoder_hidden,
        bank_size: config.n_val,
    }
}

pub fn lpt_config(config: &RunConfig) -> LptConfig {
    LptConfig {
        lambda: config.lambda_value(),
        gamma: config.gamma,
        ablation: config.ablation,
        include_direct_creator_path: config.include_direct_creator_path,
        eta_arch: config.eta_arch,
        xi_testee: config.xi_testee,
        xi_encoder: config.xi_encoder,
        xi_executor: config.xi_executor,
        eta_creator: config.eta_creator,
        batch_train: config.batch_train,
        batch_bank: config.batch_bank,
        batch_val: config.batch_val,
        seed: config.seed,
    }
}

pub fn il_config(config: &RunConfig) -> IlConfig {
    IlConfig {
        learners: config.learners,
        rounds: config.rounds,
        lambda: config.lambda_value(),
        eta: config.eta,
        batch_train: config.batch_train,
        batch_val: config.batch_val,
        seed: config.seed,
    }
}

pub fn lpt_sources(config: &RunConfig, bundle: &DatasetBundle) -> DataSources {
    let mut src = DataSources::new();
    src.insert(lpt::SET_TRAIN, bundle.learners[0].train.clone(), config.batch_train);
    src.insert(lpt::SET_VAL, bundle.learners[0].val.clone(), config.batch_val);
    src.insert(lpt::SET_BANK, bundle.bank.clone(), config.batch_bank);
    src
}

pub fn il_sources(config: &RunConfig, bundle: &DatasetBundle) -> DataSources {
    let mut src = DataSources::new();
    for (k0, splits) in bundle.learners.iter().enumerate() {
        let k = k0 + 1;
        src.insert(&il::train_set(k), splits.train.clone(), config.batch_train);
        src.insert(&il::val_set(k), splits.val.clone(), config.batch_val);
    }
    src
}

struct MetricsWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl MetricsWriter {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join("metrics.jsonl");
        Ok(MetricsWriter { out: BufWriter::new(File::create(&path)?), path })
    }

    fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        if !record.all_finite() {
            return Err(HarnessError::numeric(format!(
                "non-finite metric at iteration {}",
                record.iteration
            )));
        }
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.out.flush()?;
        Ok(self.path)
    }
}

fn concat_sets(a: &LabeledSet, b: &LabeledSet) -> LabeledSet {
    let mut x = a.x.clone();
    x.extend(b.x.iter().cloned());
    let mut labels = a.labels.clone();
    labels.extend(b.labels.iter().cloned());
    LabeledSet::new(x, labels, a.classes)
}

/// Train the discretized architecture from scratch on train+val and report
/// test accuracy.
fn evaluate_arch(
    config: &RunConfig,
    arch: &DiscreteArch,
    splits: &crate::data::LearnerSplits,
    eval_seed: u64,
) -> Result<f64> {
    let spec = MixedSpec::new(config.dim, config.classes, config.mixed_layers);
    let train = concat_sets(&splits.train, &splits.val);
    let report = train_discrete(
        &spec,
        arch,
        &train.features(),
        &train.one_hot(),
        &splits.test.features(),
        &splits.test.labels,
        config.eval_epochs,
        config.eval_lr,
        eval_seed,
    )?;
    Ok(report.test_accuracy)
}

fn derive_from_state(spec: &MixedSpec, state: &GroupState) -> DiscreteArch {
    let logits: Vec<Tensor> = state["arch"]
        .items()
        .iter()
        .map(|(_, t)| t.clone())
        .collect();
    DiscreteArch::derive(&spec.layer_ops, &logits)
}

/// One-level baseline: jointly descend architecture logits and weights on
/// the training loss alone.
fn run_baseline(
    config: &RunConfig,
    bundle: &DatasetBundle,
    writer: &mut MetricsWriter,
) -> Result<GroupState> {
    let spec = MixedSpec::new(config.dim, config.classes, config.mixed_layers);
    let params = ModelParams::init(&spec, "arch", "w", config.seed);
    let mg = ModelGraph::mixed(&spec, "arch", "w", "ee.x", "ee.y");
    let train = &bundle.learners[0].train;

    let mut arch = TensorGroup::new(params.arch);
    let mut weights = TensorGroup::new(params.weights);
    for t in 0..config.iterations_value() {
        let idx = sample_indices(config.seed, lpt::SET_TRAIN, t, train.len(), config.batch_train);
        let mini = train.select(&idx);
        let mut bindings: Bindings = bind([("ee.x", mini.features()), ("ee.y", mini.one_hot())]);
        arch.bind_into(&mut bindings, |n| n.to_string());
        weights.bind_into(&mut bindings, |n| n.to_string());

        let g_arch = group_grad(&mg.graph, &bindings, &arch, |n| n.to_string())?;
        let g_w = group_grad(&mg.graph, &bindings, &weights, |n| n.to_string())?;
        arch.axpy(-config.eta_arch, &g_arch)?;
        weights.axpy(-config.xi_testee, &g_w)?;
        if !arch.all_finite() || !weights.all_finite() {
            return Err(HarnessError::numeric(format!("non-finite parameters at iteration {t}")));
        }

        let mut record = MetricsRecord::new(t);
        record.set("train_loss", tensor_ad::forward_eval(&mg.graph, &bindings)?);
        record.set("arch_grad_norm", g_arch.norm2());
        record.set("weights_grad_norm", g_w.norm2());
        writer.write(&record)?;
    }
    let mut state = GroupState::new();
    state.insert("arch".to_string(), arch);
    state.insert("w".to_string(), weights);
    Ok(state)
}

/// Run the configured mode: iterate, derive the final architecture, train
/// it from scratch, and persist metrics plus the architecture file.
pub fn run_experiment(config: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    config.validate()?;
    if config.mode == Mode::Gradcheck {
        return Err(HarnessError::config(
            "gradcheck has its own entry point; use the gradcheck subcommand",
        ));
    }
    let bundle = generate_data(config, config.seed)?;
    let mut writer = MetricsWriter::create(out_dir)?;
    let iterations = config.iterations_value();
    let spec = MixedSpec::new(config.dim, config.classes, config.mixed_layers);

    let mut interaction_sum = 0.0;
    let mut cardinality_sum = 0.0;
    let mut lpt_metrics = false;

    let state = match config.mode {
        Mode::Lpt => {
            let setup = LptSetup::new(lpt_shape(config), lpt_config(config), config.seed)?;
            let sources = lpt_sources(config, &bundle);
            let mut state = setup.initial_state();
            for t in 0..iterations {
                let record = lpt_iterate(&setup, &mut state, &sources, t)?;
                interaction_sum += record.get("interaction").unwrap_or(f64::NAN);
                cardinality_sum += record.get("cardinality").unwrap_or(f64::NAN);
                writer.write(&record)?;
            }
            lpt_metrics = true;
            state
        }
        Mode::Il => {
            let setup = IlSetup::new(
                IlShape::standard(config.dim, config.classes, config.mixed_layers),
                il_config(config),
                config.seed,
            )?;
            let sources = il_sources(config, &bundle);
            let mut state = setup.initial_state();
            for t in 0..iterations {
                let record = il_iterate(&setup, &mut state, &sources, t)?;
                writer.write(&record)?;
            }
            state
        }
        Mode::Jl => {
            let setup = IlSetup::new(
                IlShape::standard(config.dim, config.classes, config.mixed_layers),
                jl_config(&il_config(config)),
                config.seed,
            )?;
            let sources = il_sources(config, &bundle);
            let mut state = setup.initial_state();
            for t in 0..iterations {
                let record = jl_iterate(&setup, &mut state, &sources, t)?;
                writer.write(&record)?;
            }
            state
        }
        Mode::Baseline => run_baseline(config, &bundle, &mut writer)?,
        Mode::Gradcheck => unreachable!(),
    };

    let metrics_path = writer.finish()?;
    let arch = derive_from_state(&spec, &state);
    let arch_path = out_dir.join("final_arch.txt");
    fs::write(&arch_path, arch.to_lines())?;

    // Search-then-evaluate: train the discretized model from scratch.
    let test_accuracy = match config.mode {
        Mode::Il | Mode::Jl => {
            let mut total = 0.0;
            for (k, splits) in bundle.learners.iter().enumerate() {
                total += evaluate_arch(config, &arch, splits, derive_seed(config.seed, "eval", k as u64))?;
            }
            total / bundle.learners.len() as f64
        }
        _ => evaluate_arch(config, &arch, &bundle.learners[0], derive_seed(config.seed, "eval", 0))?,
    };

    Ok(RunOutcome {
        test_accuracy,
        mean_interaction: lpt_metrics.then(|| interaction_sum / iterations as f64),
        mean_cardinality: lpt_metrics.then(|| cardinality_sum / iterations as f64),
        arch,
        metrics_path,
        arch_path,
    })
}
