//! Run configuration: one structured file covering the simulator, dataset,
//! encoder, policy, trainer, and evaluation settings.
//!
//! Defaults follow the reference configuration throughout (sequence length 50,
//! 257 visual tokens of width 384, a 4-layer temporal transformer, Adam at
//! 9.0e-5 with cosine annealing, batch 16, up to 50 epochs). `RunConfig::desk()`
//! is a reduced preset that trains in minutes on a single core.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Simulator settings: phantom generation, catheter kinematics, rendering,
/// and demonstration rollouts.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Side length of the square world / rendered frame, in pixels.
    pub world_size: f64,
    /// Rendered frame resolution (square, >= 32).
    pub resolution: usize,
    /// Number of labeled targets on the phantom.
    pub n_targets: usize,
    /// Demonstration repetitions per target.
    pub repetitions: usize,
    /// Std of the clipped Gaussian action noise applied to the expert.
    pub noise_scale: f64,
    /// Max insertion speed, px/s at full translation command.
    pub v_max: f64,
    /// Max base rotation speed, rad/s at full rotation command.
    pub omega_max: f64,
    /// Max knob bend rate, units/s at full knob command.
    pub kappa_max: f64,
    /// Integration step, seconds.
    pub dt: f64,
    /// Goal tolerance, px.
    pub eps_goal: f64,
    /// Rollout step cap before an episode is rejected.
    pub step_cap: usize,
    /// Length of the steerable tip segment, px.
    pub tip_len: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            world_size: 224.0,
            resolution: 224,
            n_targets: 9,
            repetitions: 5,
            noise_scale: 0.05,
            v_max: 10.0,
            omega_max: 0.5,
            kappa_max: 1.0,
            dt: 0.1,
            eps_goal: 5.0,
            step_cap: 5000,
            tip_len: 6.0,
        }
    }
}

/// Dataset construction: sliding windows and split ratios.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Window length N (model input sequence length).
    pub window: usize,
    /// Sliding-window stride.
    pub stride: usize,
    /// Train/val/test ratios used when the corpus does not match the
    /// reference shape (9 scenarios x 5 repetitions).
    pub ratios: [f64; 3],
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            window: 50,
            stride: 1,
            ratios: [0.6, 0.2, 0.2],
        }
    }
}

/// Which vision backend produces patch tokens.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum EncoderBackend {
    /// Frozen pretrained ViT (weights loaded from `weights_path`).
    Pretrained,
    /// Deterministic seeded random-projection stub.
    Stub,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub backend: EncoderBackend,
    /// Stub embedding width d.
    pub stub_dim: usize,
    /// Stub projection seed.
    pub stub_seed: u64,
    /// Path to pretrained ViT weights (container file). May also be given
    /// via the CATHNAV_VIT_WEIGHTS environment variable.
    pub weights_path: Option<String>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            backend: EncoderBackend::Pretrained,
            stub_dim: 64,
            stub_seed: 7,
            weights_path: None,
        }
    }
}

/// Policy network hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Sequence length N.
    pub n: usize,
    /// Visual tokens per frame P (CLS included).
    pub p: usize,
    /// Embedding width d.
    pub d: usize,
    /// Heads in the cross-attention fusion block.
    pub cross_heads: usize,
    /// Temporal transformer encoder layers.
    pub tf_layers: usize,
    /// Heads per transformer layer.
    pub tf_heads: usize,
    /// Transformer feed-forward width.
    pub ffn_dim: usize,
    /// Action-head layer widths; must end in 3.
    pub head_dims: Vec<usize>,
    /// Dropout inside transformer layers (0 elsewhere).
    pub dropout: f64,
    /// Additive mask value for blocked attention logits.
    pub mask_neg: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            n: 50,
            p: 257,
            d: 384,
            cross_heads: 8,
            tf_layers: 4,
            tf_heads: 8,
            ffn_dim: 1024,
            head_dims: vec![512, 256, 128, 3],
            dropout: 0.1,
            mask_neg: -1e9,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d % self.cross_heads != 0 || self.d % self.tf_heads != 0 {
            return Err(Error::Config(format!(
                "embedding width {} must be divisible by cross_heads {} and tf_heads {}",
                self.d, self.cross_heads, self.tf_heads
            )));
        }
        if self.head_dims.last() != Some(&3) {
            return Err(Error::Config("head_dims must end in 3".into()));
        }
        if self.n == 0 || self.p == 0 {
            return Err(Error::Config("n and p must be >= 1".into()));
        }
        Ok(())
    }
}

/// LSTM baseline hyperparameters (kinematics-only model).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LstmConfig {
    pub n: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            n: 50,
            hidden: 128,
            layers: 2,
        }
    }
}

/// Supervised training loop settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Initial learning rate for Adam.
    pub lr: f64,
    /// Cosine annealing horizon; defaults to max_epochs when absent.
    pub t_max: Option<usize>,
    pub early_stop_patience: usize,
    /// Minimum val-MSE improvement that resets patience.
    pub min_delta: f64,
    /// Optional global gradient-norm clip.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            max_epochs: 50,
            lr: 9.0e-5,
            t_max: None,
            early_stop_patience: 5,
            min_delta: 1e-5,
            grad_clip: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn t_max(&self) -> usize {
        self.t_max.unwrap_or(self.max_epochs)
    }
}

/// Evaluation / ablation settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Retrain per ablation condition instead of zero-shot transforms on the
    /// baseline checkpoint.
    pub retrain: bool,
    /// Seed for false-goal donor sampling.
    pub seed: u64,
    /// Histogram bins for error plots.
    pub hist_bins: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            retrain: false,
            seed: 0,
            hist_bins: 40,
        }
    }
}

/// Merged run configuration; every command consumes the relevant section.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; sections derive their own streams from it.
    pub seed: u64,
    /// Output root directory.
    pub out_root: String,
    pub sim: SimConfig,
    pub data: DataConfig,
    pub encoder: EncoderConfig,
    pub policy: PolicyConfig,
    pub lstm: LstmConfig,
    pub trainer: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Reduced configuration for fast single-core runs: 64x64 frames, stub
    /// encoder (P=17, d=64), 16-step windows, 2 transformer layers.
    pub fn desk() -> Self {
        let mut cfg = Self::default();
        cfg.sim.resolution = 64;
        cfg.sim.dt = 0.3;
        cfg.sim.v_max = 8.0;
        cfg.sim.step_cap = 2000;
        cfg.data.window = 16;
        cfg.encoder.backend = EncoderBackend::Stub;
        cfg.encoder.stub_dim = 64;
        cfg.policy.n = 16;
        cfg.policy.p = 17;
        cfg.policy.d = 64;
        cfg.policy.cross_heads = 4;
        cfg.policy.tf_layers = 2;
        cfg.policy.tf_heads = 4;
        cfg.policy.ffn_dim = 256;
        cfg.lstm.n = 16;
        cfg.trainer.max_epochs = 40;
        cfg.trainer.early_stop_patience = 8;
        cfg.trainer.lr = 3.0e-4;
        cfg
    }

    /// Cross-section consistency: the policy, encoder, and dataset must agree
    /// on N and P.
    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        if self.data.window != self.policy.n {
            return Err(Error::Config(format!(
                "data.window ({}) must equal policy.n ({})",
                self.data.window, self.policy.n
            )));
        }
        if self.lstm.n != self.policy.n {
            return Err(Error::Config(format!(
                "lstm.n ({}) must equal policy.n ({})",
                self.lstm.n, self.policy.n
            )));
        }
        if self.sim.resolution < 32 {
            return Err(Error::Config("sim.resolution must be >= 32".into()));
        }
        if self.sim.n_targets == 0 {
            return Err(Error::Config("sim.n_targets must be >= 1".into()));
        }
        match self.encoder.backend {
            EncoderBackend::Stub => {
                let grid = self.sim.resolution / crate::encoder::STUB_PATCH;
                let expect = grid * grid + 1;
                if self.sim.resolution % crate::encoder::STUB_PATCH != 0 || expect != self.policy.p
                {
                    return Err(Error::Config(format!(
                        "stub backend at resolution {} yields {} tokens, policy.p is {}",
                        self.sim.resolution, expect, self.policy.p
                    )));
                }
                if self.encoder.stub_dim != self.policy.d {
                    return Err(Error::Config(format!(
                        "encoder.stub_dim ({}) must equal policy.d ({})",
                        self.encoder.stub_dim, self.policy.d
                    )));
                }
            }
            EncoderBackend::Pretrained => {
                if self.policy.p != 257 || self.policy.d != 384 {
                    return Err(Error::Config(
                        "pretrained backend emits P=257, d=384 tokens".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    /// Content hash of the effective configuration; used as the run id.
    /// The output root is excluded so moving artifacts does not orphan them.
    pub fn run_id(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hashed = self.clone();
        hashed.out_root = String::new();
        let mut h = Sha256::new();
        h.update(hashed.to_toml().as_bytes());
        let digest = h.finalize();
        let mut s = String::new();
        for b in digest.iter().take(6) {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }
}
