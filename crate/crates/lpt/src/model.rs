use crate::{LptError, Result, G_ARCH, G_CREATOR, G_ENCODER, G_EXECUTOR, G_SELECTOR, G_WEIGHTS};
use mlo_engine::{ParamGroup, Role, TensorGroup};
use tensor_ad::{derive_seed, evaluate, seeded_init, Bindings, InitScheme, Tensor};
use toy_nas::{MixedSpec, ModelParams};

/// Which parts of the tester participate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationMode {
    /// Encoder + creator selection, tester trained on its own data and the
    /// created test.
    Full,
    /// Per-example selection scalars instead of the encoder/creator pair;
    /// the tester training stage is dropped.
    DifficultyOnly,
    /// Tester trained solely on the created test.
    TestOnly,
}

/// Step sizes, tradeoffs, batch sizes, and mode flags for one LPT run.
#[derive(Debug, Clone)]
pub struct LptConfig {
    /// Difficulty-vs-meaningfulness tradeoff in the creator objective.
    pub lambda: f64,
    /// Weight of the created-test loss in the tester training stage.
    pub gamma: f64,
    pub ablation: AblationMode,
    /// Include the direct selection-probability path in the creator's
    /// numerator gradient (the denominator always keeps it).
    pub include_direct_creator_path: bool,
    pub eta_arch: f64,
    pub xi_testee: f64,
    pub xi_encoder: f64,
    pub xi_executor: f64,
    pub eta_creator: f64,
    pub batch_train: usize,
    pub batch_bank: usize,
    pub batch_val: usize,
    pub seed: u64,
}

impl Default for LptConfig {
    fn default() -> Self {
        LptConfig {
            lambda: 1.0,
            gamma: 1.0,
            ablation: AblationMode::Full,
            include_direct_creator_path: true,
            eta_arch: 0.05,
            xi_testee: 0.05,
            xi_encoder: 0.05,
            xi_executor: 0.05,
            eta_creator: 3e-4,
            batch_train: 16,
            batch_bank: 32,
            batch_val: 32,
            seed: 0,
        }
    }
}

/// Model dimensions.
#[derive(Debug, Clone)]
pub struct LptShape {
    pub dim: usize,
    pub classes: usize,
    pub mixed_layers: usize,
    pub encoder_hidden: usize,
    /// Size of the full test bank (needed for the selection-scalar mode).
    pub bank_size: usize,
}

impl LptShape {
    pub fn mixed_spec(&self) -> MixedSpec {
        MixedSpec::new(self.dim, self.classes, self.mixed_layers)
    }

    /// Total scalar parameter count across all groups of the given mode.
    pub fn param_count(&self, mode: AblationMode) -> usize {
        let spec = self.mixed_spec();
        let testee = spec.arch_param_count() + spec.weight_param_count();
        match mode {
            AblationMode::DifficultyOnly => testee + self.bank_size,
            _ => {
                let enc = self.dim * self.encoder_hidden + self.encoder_hidden;
                let cre = self.encoder_hidden + 1;
                let exec = self.encoder_hidden * self.classes + self.classes;
                testee + enc + cre + exec
            }
        }
    }
}

/// Architecture logits plus network weights of the searching model.
#[derive(Debug, Clone)]
pub struct Testee {
    pub arch: ParamGroup,
    pub weights: ParamGroup,
}

/// Encoder, test creator, and target-task executor of the testing model.
/// The creator is a single linear layer producing one selection logit per
/// example.
#[derive(Debug, Clone)]
pub struct Tester {
    pub encoder: ParamGroup,
    pub creator: ParamGroup,
    pub executor: ParamGroup,
}

/// Seeded initial parameter groups for the configured mode.
pub fn init_groups(shape: &LptShape, config: &LptConfig, seed: u64) -> Result<Vec<ParamGroup>> {
    let spec = shape.mixed_spec();
    let params = ModelParams::init(&spec, G_ARCH, G_WEIGHTS, seed);
    let mut groups = vec![
        ParamGroup::new(
            G_ARCH,
            Role::Architecture,
            config.eta_arch,
            TensorGroup::new(params.arch),
        )?,
        ParamGroup::new(
            G_WEIGHTS,
            Role::Weights,
            config.xi_testee,
            TensorGroup::new(params.weights),
        )?,
    ];
    match config.ablation {
        AblationMode::DifficultyOnly => {
            groups.push(ParamGroup::new(
                G_SELECTOR,
                Role::Creator,
                config.eta_creator,
                TensorGroup::new(vec![(
                    "sel.theta".to_string(),
                    Tensor::zeros(&[shape.bank_size, 1]),
                )]),
            )?);
        }
        _ => {
            let h = shape.encoder_hidden;
            groups.push(ParamGroup::new(
                G_ENCODER,
                Role::Encoder,
                config.xi_encoder,
                TensorGroup::new(vec![
                    (
                        "enc.w".to_string(),
                        seeded_init(
                            &[shape.dim, h],
                            InitScheme::Normal { mean: 0.0, std: 0.5 },
                            derive_seed(seed, "enc.w", 10),
                        ),
                    ),
                    ("enc.b".to_string(), Tensor::zeros(&[h])),
                ]),
            )?);
            groups.push(ParamGroup::new(
                G_CREATOR,
                Role::Creator,
                config.eta_creator,
                TensorGroup::new(vec![
                    (
                        "cre.w".to_string(),
                        seeded_init(
                            &[h, 1],
                            InitScheme::Normal { mean: 0.0, std: 0.5 },
                            derive_seed(seed, "cre.w", 11),
                        ),
                    ),
                    ("cre.b".to_string(), Tensor::zeros(&[1])),
                ]),
            )?);
            groups.push(ParamGroup::new(
                G_EXECUTOR,
                Role::Executor,
                config.xi_executor,
                TensorGroup::new(vec![
                    (
                        "exec.w".to_string(),
                        seeded_init(
                            &[h, shape.classes],
                            InitScheme::Normal { mean: 0.0, std: 0.5 },
                            derive_seed(seed, "exec.w", 12),
                        ),
                    ),
                    ("exec.b".to_string(), Tensor::zeros(&[shape.classes])),
                ]),
            )?);
        }
    }
    Ok(groups)
}

/// Per-example selection probabilities over a bank batch, with the derived
/// quantities the interaction needs.
#[derive(Debug, Clone)]
pub struct RelaxedTest {
    pub bank_ids: Vec<usize>,
    pub probs: Vec<f64>,
}

impl RelaxedTest {
    pub fn new(bank_ids: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        if bank_ids.len() != probs.len() {
            return Err(LptError::LengthMismatch(bank_ids.len(), probs.len()));
        }
        debug_assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
        Ok(RelaxedTest { bank_ids, probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Sum of selection probabilities: the relaxed test size.
pub fn test_cardinality(test: &RelaxedTest) -> f64 {
    test.probs.iter().sum()
}

/// Per-example losses weighted by selection probabilities and summed.
pub fn relaxed_weighted_loss(per_example: &[f64], test: &RelaxedTest) -> Result<f64> {
    if per_example.len() != test.probs.len() {
        return Err(LptError::LengthMismatch(per_example.len(), test.probs.len()));
    }
    Ok(per_example
        .iter()
        .zip(&test.probs)
        .map(|(l, f)| f * l)
        .sum())
}

/// Evaluate `sigmoid(creator(encoder(d)))` for every example of a bank
/// batch with the tester's current parameters.
pub fn select_probabilities(
    probs_graph: &crate::graphs::ProbsGraph,
    encoder: &TensorGroup,
    creator: &TensorGroup,
    bank_x: &Tensor,
    bank_ids: Vec<usize>,
) -> Result<RelaxedTest> {
    let mut bindings = Bindings::new();
    encoder.bind_into(&mut bindings, |n| n.to_string());
    creator.bind_into(&mut bindings, |n| n.to_string());
    bindings.insert("bank.x".to_string(), bank_x.clone());
    let eval = evaluate(&probs_graph.graph, &bindings)?;
    let probs = eval.tensor(probs_graph.probs).data().to_vec();
    RelaxedTest::new(bank_ids, probs)
}
