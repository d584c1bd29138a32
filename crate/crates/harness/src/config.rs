use crate::error::{HarnessError, Result};
use lpt::AblationMode;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Lpt,
    Il,
    Jl,
    Baseline,
    Gradcheck,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Lpt => "lpt",
            Mode::Il => "il",
            Mode::Jl => "jl",
            Mode::Baseline => "baseline",
            Mode::Gradcheck => "gradcheck",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "lpt" => Mode::Lpt,
            "il" => Mode::Il,
            "jl" => Mode::Jl,
            "baseline" => Mode::Baseline,
            "gradcheck" => Mode::Gradcheck,
            other => return Err(HarnessError::config(format!("unknown mode `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Blobs,
    TwoMoons,
    XorGrid,
}

impl Generator {
    pub fn as_str(self) -> &'static str {
        match self {
            Generator::Blobs => "blobs",
            Generator::TwoMoons => "two-moons",
            Generator::XorGrid => "xor-grid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "blobs" => Generator::Blobs,
            "two-moons" => Generator::TwoMoons,
            "xor-grid" => Generator::XorGrid,
            other => return Err(HarnessError::config(format!("unknown generator `{other}`"))),
        })
    }
}

fn ablation_str(a: AblationMode) -> &'static str {
    match a {
        AblationMode::Full => "full",
        AblationMode::DifficultyOnly => "difficulty-only",
        AblationMode::TestOnly => "test-only",
    }
}

fn parse_ablation(s: &str) -> Result<AblationMode> {
    Ok(match s {
        "full" => AblationMode::Full,
        "difficulty-only" => AblationMode::DifficultyOnly,
        "test-only" => AblationMode::TestOnly,
        other => return Err(HarnessError::config(format!("unknown ablation `{other}`"))),
    })
}

/// Every knob of one run. `lambda` and `iterations` default per mode when
/// left unset. The flat key-value config file, CLI overrides, and the
/// `SKILLEARN_SEED` environment variable all funnel through `set`.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,

    // data
    pub generator: Generator,
    pub classes: usize,
    pub dim: usize,
    pub separation: f64,
    pub noise: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub bank_corruption: f64,

    // model
    pub mixed_layers: usize,
    pub encoder_hidden: usize,

    // step sizes
    pub eta_arch: f64,
    pub xi_testee: f64,
    pub xi_encoder: f64,
    pub xi_executor: f64,
    pub eta_creator: f64,
    pub eta: f64,

    // tradeoffs
    pub lambda: Option<f64>,
    pub gamma: f64,

    // schedule
    pub learners: usize,
    pub rounds: usize,

    // loop sizes
    pub iterations: Option<usize>,
    pub batch_train: usize,
    pub batch_bank: usize,
    pub batch_val: usize,

    // discrete evaluation
    pub eval_epochs: usize,
    pub eval_lr: f64,

    // lpt flags
    pub ablation: AblationMode,
    pub include_direct_creator_path: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Lpt,
            seed: 0,
            generator: Generator::Blobs,
            classes: 2,
            dim: 2,
            separation: 3.0,
            noise: 0.5,
            n_train: 48,
            n_val: 160,
            n_test: 400,
            bank_corruption: 0.1,
            mixed_layers: 2,
            encoder_hidden: 4,
            eta_arch: 0.05,
            xi_testee: 0.05,
            xi_encoder: 0.05,
            xi_executor: 0.05,
            eta_creator: 3e-4,
            eta: 0.01,
            lambda: None,
            gamma: 1.0,
            learners: 2,
            rounds: 2,
            iterations: None,
            batch_train: 16,
            batch_bank: 32,
            batch_val: 32,
            eval_epochs: 500,
            eval_lr: 0.1,
            ablation: AblationMode::Full,
            include_direct_creator_path: true,
        }
    }
}

impl RunConfig {
    /// The tradeoff knob, defaulting per mode (1 for the test-passing
    /// formulation, 100 for the proximal chain).
    pub fn lambda_value(&self) -> f64 {
        self.lambda.unwrap_or(match self.mode {
            Mode::Il | Mode::Jl => 100.0,
            _ => 1.0,
        })
    }

    /// Iteration budget, defaulting per mode.
    pub fn iterations_value(&self) -> usize {
        self.iterations.unwrap_or(match self.mode {
            Mode::Il | Mode::Jl => 200,
            _ => 300,
        })
    }

    /// Apply one key/value pair (used by file parsing and CLI overrides).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |k: &str, v: &str| HarnessError::config(format!("bad value `{v}` for `{k}`"));
        macro_rules! num {
            ($field:ident, $ty:ty) => {{
                self.$field = value.parse::<$ty>().map_err(|_| bad(key, value))?;
            }};
        }
        match key {
            "mode" => self.mode = Mode::parse(value)?,
            "seed" => num!(seed, u64),
            "generator" => self.generator = Generator::parse(value)?,
            "classes" => num!(classes, usize),
            "dim" => num!(dim, usize),
            "separation" => num!(separation, f64),
            "noise" => num!(noise, f64),
            "n_train" => num!(n_train, usize),
            "n_val" => num!(n_val, usize),
            "n_test" => num!(n_test, usize),
            "bank_corruption" => num!(bank_corruption, f64),
            "mixed_layers" => num!(mixed_layers, usize),
            "encoder_hidden" => num!(encoder_hidden, usize),
            "eta_arch" => num!(eta_arch, f64),
            "xi_testee" => num!(xi_testee, f64),
            "xi_encoder" => num!(xi_encoder, f64),
            "xi_executor" => num!(xi_executor, f64),
            "eta_creator" => num!(eta_creator, f64),
            "eta" => num!(eta, f64),
            "lambda" => self.lambda = Some(value.parse().map_err(|_| bad(key, value))?),
            "gamma" => num!(gamma, f64),
            "learners" => num!(learners, usize),
            "rounds" => num!(rounds, usize),
            "iterations" => self.iterations = Some(value.parse().map_err(|_| bad(key, value))?),
            "batch_train" => num!(batch_train, usize),
            "batch_bank" => num!(batch_bank, usize),
            "batch_val" => num!(batch_val, usize),
            "eval_epochs" => num!(eval_epochs, usize),
            "eval_lr" => num!(eval_lr, f64),
            "ablation" => self.ablation = parse_ablation(value)?,
            "include_direct_creator_path" => {
                self.include_direct_creator_path = value.parse().map_err(|_| bad(key, value))?
            }
            other => return Err(HarnessError::config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Parse a flat `key = value` document (with `#` comments) on top of
    /// the current values.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(HarnessError::config(format!(
                    "line {}: expected `key = value`, got `{raw}`",
                    lineno + 1
                )));
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Environment override: `SKILLEARN_SEED` wins over file and flags.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var("SKILLEARN_SEED") {
            self.seed = v
                .parse()
                .map_err(|_| HarnessError::config(format!("bad SKILLEARN_SEED `{v}`")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("eta_arch", self.eta_arch),
            ("xi_testee", self.xi_testee),
            ("xi_encoder", self.xi_encoder),
            ("xi_executor", self.xi_executor),
            ("eta_creator", self.eta_creator),
            ("eta", self.eta),
            ("gamma", self.gamma),
            ("noise", self.noise),
            ("bank_corruption", self.bank_corruption),
        ];
        for (name, v) in nonneg {
            if !v.is_finite() || v < 0.0 {
                return Err(HarnessError::config(format!("`{name}` must be finite and >= 0")));
            }
        }
        if let Some(l) = self.lambda {
            if !l.is_finite() || l < 0.0 {
                return Err(HarnessError::config("`lambda` must be finite and >= 0"));
            }
        }
        if self.iterations_value() < 1 {
            return Err(HarnessError::config("`iterations` must be >= 1"));
        }
        if self.classes < 2 {
            return Err(HarnessError::config("`classes` must be >= 2"));
        }
        if self.learners < 1 || self.rounds < 1 {
            return Err(HarnessError::config("`learners` and `rounds` must be >= 1"));
        }
        if self.mixed_layers < 1 {
            return Err(HarnessError::config("`mixed_layers` must be >= 1"));
        }
        match self.generator {
            Generator::TwoMoons | Generator::XorGrid => {
                if self.dim != 2 || self.classes != 2 {
                    return Err(HarnessError::config(format!(
                        "generator `{}` requires dim = 2 and classes = 2",
                        self.generator.as_str()
                    )));
                }
            }
            Generator::Blobs => {
                if self.dim < 2 {
                    return Err(HarnessError::config("`dim` must be >= 2 for blobs"));
                }
            }
        }
        if self.bank_corruption > 1.0 {
            return Err(HarnessError::config("`bank_corruption` must be <= 1"));
        }
        Ok(())
    }

    /// Render the full-default config document (what `init-config` writes).
    pub fn to_document(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# flat key = value configuration; `#` starts a comment");
        let _ = writeln!(s, "mode = {}", self.mode.as_str());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s);
        let _ = writeln!(s, "# synthetic data");
        let _ = writeln!(s, "generator = {}", self.generator.as_str());
        let _ = writeln!(s, "classes = {}", self.classes);
        let _ = writeln!(s, "dim = {}", self.dim);
        let _ = writeln!(s, "separation = {}", self.separation);
        let _ = writeln!(s, "noise = {}", self.noise);
        let _ = writeln!(s, "n_train = {}", self.n_train);
        let _ = writeln!(s, "n_val = {}", self.n_val);
        let _ = writeln!(s, "n_test = {}", self.n_test);
        let _ = writeln!(s, "bank_corruption = {}", self.bank_corruption);
        let _ = writeln!(s);
        let _ = writeln!(s, "# model sizes");
        let _ = writeln!(s, "mixed_layers = {}", self.mixed_layers);
        let _ = writeln!(s, "encoder_hidden = {}", self.encoder_hidden);
        let _ = writeln!(s);
        let _ = writeln!(s, "# step sizes");
        let _ = writeln!(s, "eta_arch = {}", self.eta_arch);
        let _ = writeln!(s, "xi_testee = {}", self.xi_testee);
        let _ = writeln!(s, "xi_encoder = {}", self.xi_encoder);
        let _ = writeln!(s, "xi_executor = {}", self.xi_executor);
        let _ = writeln!(s, "eta_creator = {}", self.eta_creator);
        let _ = writeln!(s, "eta = {}", self.eta);
        let _ = writeln!(s);
        let _ = writeln!(s, "# tradeoffs; lambda omitted -> mode default (lpt/baseline: 1, il/jl: 100)");
        if let Some(l) = self.lambda {
            let _ = writeln!(s, "lambda = {l}");
        } else {
            let _ = writeln!(s, "# lambda = 1");
        }
        let _ = writeln!(s, "gamma = {}", self.gamma);
        let _ = writeln!(s);
        let _ = writeln!(s, "# interleaving schedule");
        let _ = writeln!(s, "learners = {}", self.learners);
        let _ = writeln!(s, "rounds = {}", self.rounds);
        let _ = writeln!(s);
        let _ = writeln!(s, "# budgets; iterations omitted -> mode default (lpt/baseline: 300, il/jl: 200)");
        if let Some(it) = self.iterations {
            let _ = writeln!(s, "iterations = {it}");
        } else {
            let _ = writeln!(s, "# iterations = 300");
        }
        let _ = writeln!(s, "batch_train = {}", self.batch_train);
        let _ = writeln!(s, "batch_bank = {}", self.batch_bank);
        let _ = writeln!(s, "batch_val = {}", self.batch_val);
        let _ = writeln!(s);
        let _ = writeln!(s, "# discrete-architecture evaluation");
        let _ = writeln!(s, "eval_epochs = {}", self.eval_epochs);
        let _ = writeln!(s, "eval_lr = {}", self.eval_lr);
        let _ = writeln!(s);
        let _ = writeln!(s, "# test-passing flags");
        let _ = writeln!(s, "ablation = {}", ablation_str(self.ablation));
        let _ = writeln!(
            s,
            "include_direct_creator_path = {}",
            self.include_direct_creator_path
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn document_round_trips() {
        let base = RunConfig::default();
        let doc = base.to_document();
        let mut parsed = RunConfig::default();
        parsed.apply_file(&doc).unwrap();
        assert_eq!(parsed.mode, base.mode);
        assert_eq!(parsed.n_train, base.n_train);
        assert_eq!(parsed.eta_creator, base.eta_creator);
        assert_eq!(parsed.lambda, base.lambda);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut c = RunConfig::default();
        assert!(c.apply_file("warp_factor = 9\n").is_err());
    }

    #[test]
    fn mode_defaults_for_lambda_and_iterations() {
        let mut c = RunConfig::default();
        c.mode = Mode::Lpt;
        assert_eq!(c.lambda_value(), 1.0);
        assert_eq!(c.iterations_value(), 300);
        c.mode = Mode::Il;
        assert_eq!(c.lambda_value(), 100.0);
        assert_eq!(c.iterations_value(), 200);
        c.set("lambda", "7.5").unwrap();
        assert_eq!(c.lambda_value(), 7.5);
    }

    #[test]
    fn generator_constraints_enforced() {
        let mut c = RunConfig::default();
        c.set("generator", "two-moons").unwrap();
        c.set("dim", "3").unwrap();
        assert!(c.validate().is_err());
        c.set("dim", "2").unwrap();
        assert!(c.validate().is_ok());
    }
}
