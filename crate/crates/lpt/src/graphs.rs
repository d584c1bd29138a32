use crate::model::{AblationMode, LptConfig, LptShape};
use tensor_ad::{Graph, GraphBuilder, NodeId};
use toy_nas::{mixed_logits, MixedSpec};

/// A probabilities graph: scalar output (the cardinality) plus the node
/// holding the per-example probabilities.
#[derive(Debug, Clone)]
pub struct ProbsGraph {
    pub graph: Graph,
    pub probs: NodeId,
}

/// All graphs one LPT run evaluates. Leaf conventions: committed values
/// use plain names (`arch.*`, `w.*`, `enc.*`, `cre.*`, `exec.*`,
/// `sel.theta`), one-step approximations use `~`-prefixed names, and data
/// enters through `ee.*`, `er.*`, `val.*`, `bank.*`.
#[derive(Debug, Clone)]
pub struct LptGraphs {
    /// Testee training loss (mean cross-entropy) over `ee.x` / `ee.y`.
    pub stage1_loss: Graph,
    /// Tester training loss; absent in the selection-scalar mode.
    pub stage2_loss: Option<Graph>,
    /// Numerator of the interaction: selection-weighted testee loss on the
    /// bank, evaluated at `~w` (and `~enc` in full mode).
    pub ratio_num: Graph,
    /// Denominator: the relaxed test cardinality at `~enc`.
    pub ratio_den: Graph,
    /// Tester validation loss at `~enc` / `~exec`; absent in the
    /// selection-scalar mode.
    pub tester_val: Option<Graph>,
    /// Current-parameter selection probabilities on a bank batch.
    pub probs: ProbsGraph,
}

fn encoder_hidden(gb: &mut GraphBuilder, enc_prefix: &str, x: NodeId) -> NodeId {
    let w = gb.leaf(&format!("{enc_prefix}.w"));
    let b = gb.leaf(&format!("{enc_prefix}.b"));
    let z = gb.matmul(x, w);
    let z = gb.add_row(z, b);
    gb.tanh(z)
}

/// `f(d) = sigmoid(creator(encoder(d)))`, flattened to one probability per
/// example.
fn selection_probs(gb: &mut GraphBuilder, enc_prefix: &str, x: NodeId) -> NodeId {
    let h = encoder_hidden(gb, enc_prefix, x);
    let w = gb.leaf("cre.w");
    let b = gb.leaf("cre.b");
    let z = gb.matmul(h, w);
    let z = gb.add_row(z, b);
    let s = gb.sigmoid(z);
    gb.flatten(s)
}

/// Selection scalars `s(d) = sigmoid(theta_d)` gathered for the current
/// bank batch by a one-hot selection matrix bound at `bank.sel`.
fn selection_scalars(gb: &mut GraphBuilder) -> NodeId {
    let sel = gb.leaf("bank.sel");
    let theta = gb.leaf("sel.theta");
    let picked = gb.matmul(sel, theta);
    let s = gb.sigmoid(picked);
    gb.flatten(s)
}

fn executor_ce(gb: &mut GraphBuilder, enc_prefix: &str, exec_prefix: &str, x: NodeId, y: NodeId) -> NodeId {
    let h = encoder_hidden(gb, enc_prefix, x);
    let w = gb.leaf(&format!("{exec_prefix}.w"));
    let b = gb.leaf(&format!("{exec_prefix}.b"));
    let z = gb.matmul(h, w);
    let z = gb.add_row(z, b);
    gb.cross_entropy_logits(z, y)
}

fn testee_ce(gb: &mut GraphBuilder, spec: &MixedSpec, weight_prefix: &str, x: NodeId, y: NodeId) -> NodeId {
    let logits = mixed_logits(gb, spec, "arch", weight_prefix, x);
    gb.cross_entropy_logits(logits, y)
}

impl LptGraphs {
    pub fn build(shape: &LptShape, config: &LptConfig) -> Self {
        let spec = shape.mixed_spec();

        let stage1_loss = {
            let mut gb = GraphBuilder::new();
            let x = gb.leaf("ee.x");
            let y = gb.leaf("ee.y");
            let ce = testee_ce(&mut gb, &spec, "w", x, y);
            let loss = gb.mean(ce);
            gb.finish(loss).expect("stage1 graph")
        };

        let difficulty_only = config.ablation == AblationMode::DifficultyOnly;

        let stage2_loss = (!difficulty_only).then(|| {
            let mut gb = GraphBuilder::new();
            let bx = gb.leaf("bank.x");
            let by = gb.leaf("bank.y");
            let f = selection_probs(&mut gb, "enc", bx);
            let ce_bank = executor_ce(&mut gb, "enc", "exec", bx, by);
            let weighted = gb.mul(f, ce_bank);
            let bank_term = gb.sum(weighted);
            let bank_term = gb.scale(bank_term, config.gamma);
            let out = if config.ablation == AblationMode::TestOnly {
                bank_term
            } else {
                let ex = gb.leaf("er.x");
                let ey = gb.leaf("er.y");
                let ce_er = executor_ce(&mut gb, "enc", "exec", ex, ey);
                let er_term = gb.mean(ce_er);
                gb.add(er_term, bank_term)
            };
            gb.finish(out).expect("stage2 graph")
        });

        let ratio_num = {
            let mut gb = GraphBuilder::new();
            let bx = gb.leaf("bank.x");
            let by = gb.leaf("bank.y");
            let f = if difficulty_only {
                selection_scalars(&mut gb)
            } else {
                selection_probs(&mut gb, "~enc", bx)
            };
            let ce = testee_ce(&mut gb, &spec, "~w", bx, by);
            let weighted = gb.mul(f, ce);
            let out = gb.sum(weighted);
            gb.finish(out).expect("numerator graph")
        };

        let ratio_den = {
            let mut gb = GraphBuilder::new();
            let f = if difficulty_only {
                selection_scalars(&mut gb)
            } else {
                let bx = gb.leaf("bank.x");
                selection_probs(&mut gb, "~enc", bx)
            };
            let out = gb.sum(f);
            gb.finish(out).expect("denominator graph")
        };

        let tester_val = (!difficulty_only).then(|| {
            let mut gb = GraphBuilder::new();
            let vx = gb.leaf("val.x");
            let vy = gb.leaf("val.y");
            let ce = executor_ce(&mut gb, "~enc", "~exec", vx, vy);
            let out = gb.mean(ce);
            gb.finish(out).expect("tester validation graph")
        });

        let probs = {
            let mut gb = GraphBuilder::new();
            let f = if difficulty_only {
                selection_scalars(&mut gb)
            } else {
                let bx = gb.leaf("bank.x");
                selection_probs(&mut gb, "enc", bx)
            };
            let out = gb.sum(f);
            ProbsGraph { probs: f, graph: gb.finish(out).expect("probs graph") }
        };

        LptGraphs {
            stage1_loss,
            stage2_loss,
            ratio_num,
            ratio_den,
            tester_val,
            probs,
        }
    }
}
