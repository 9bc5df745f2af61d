//! Run configuration: network architecture, loss weights and the
//! co-teaching hyperparameters, plus the flat `key = value` config file
//! format the CLI consumes.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Fixed stereo-matcher architecture sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchConfig {
    pub in_channels: usize,
    pub feat_channels: usize,
    pub agg_channels: usize,
    pub refine_channels: usize,
    /// Disparity hypotheses at quarter resolution; full-resolution range is
    /// `[0, 4 * (d_max_coarse - 1)]`.
    pub d_max_coarse: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            in_channels: 3,
            feat_channels: 16,
            agg_channels: 16,
            refine_channels: 8,
            d_max_coarse: 16,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_max_coarse < 2 {
            return Err(Error::InvalidArch(format!(
                "d_max_coarse must be >= 2, got {}",
                self.d_max_coarse
            )));
        }
        if self.in_channels < 1
            || self.feat_channels < 1
            || self.agg_channels < 1
            || self.refine_channels < 1
        {
            return Err(Error::InvalidArch("channel widths must be >= 1".into()));
        }
        Ok(())
    }

    /// Maximum full-resolution disparity the matcher can regress.
    pub fn d_max_full(&self) -> f32 {
        4.0 * (self.d_max_coarse as f32 - 1.0)
    }
}

/// Weights of the hybrid loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// SSIM/L1 mix of the photometric term.
    pub alpha: f32,
    /// Smoothness weight.
    pub lambda1: f32,
    /// Data-augmentation weight.
    pub lambda2: f32,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 0.85, lambda1: 0.1, lambda2: 0.5 }
    }
}

/// Everything the dual-network training loop needs.
#[derive(Debug, Clone, PartialEq)]
pub struct CoTeachConfig {
    /// Initial learning rate.
    pub eta: f32,
    /// Occlusion-threshold depth: the schedule floors at `1 - tau`.
    pub tau: f64,
    /// Epoch at which the threshold schedule reaches its floor.
    pub t_k: usize,
    /// Total epochs.
    pub t_max: usize,
    /// Iterations per epoch; 0 means one pass over the dataset.
    pub n_max: usize,
    pub batch: usize,
    /// Per-epoch exponential learning-rate multiplier.
    pub decay: f32,
    pub weights: LossWeights,
    pub seed_a: u64,
    pub seed_b: u64,
    /// Seed for epoch shuffling and augmentation sampling.
    pub data_seed: u64,
    /// Exchange occlusion estimates between the two networks.
    pub swap: bool,
    /// Apply the decreasing occlusion-probability threshold.
    pub dynamic_threshold: bool,
    pub use_smoothness: bool,
    pub use_augmentation: bool,
    /// Left-right-consistency occlusion estimator parameters.
    pub gamma1: f32,
    pub gamma2: f32,
    pub arch: ArchConfig,
}

impl Default for CoTeachConfig {
    fn default() -> Self {
        let t_max = 40;
        CoTeachConfig {
            eta: 1e-4,
            tau: 0.7,
            // t_k = 0.2 * t_max
            t_k: t_max / 5,
            t_max,
            n_max: 0,
            batch: 2,
            decay: 0.97,
            weights: LossWeights::default(),
            seed_a: 1,
            seed_b: 2,
            data_seed: 7,
            swap: true,
            dynamic_threshold: true,
            use_smoothness: true,
            use_augmentation: true,
            gamma1: 0.1,
            gamma2: 1.0,
            arch: ArchConfig::default(),
        }
    }
}

impl CoTeachConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let bad = |msg: String| Err::<(), _>(Error::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.tau) {
            bad(format!("tau {} outside [0, 1]", self.tau))?;
        }
        if self.t_k < 1 || self.t_k > self.t_max {
            bad(format!("need 1 <= t_k <= t_max, got t_k={} t_max={}", self.t_k, self.t_max))?;
        }
        if self.eta <= 0.0 {
            bad(format!("eta must be positive, got {}", self.eta))?;
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            bad(format!("decay {} outside (0, 1]", self.decay))?;
        }
        if self.batch < 1 {
            bad("batch must be >= 1".into())?;
        }
        if !(0.0..=1.0).contains(&self.weights.alpha) {
            bad(format!("alpha {} outside [0, 1]", self.weights.alpha))?;
        }
        if self.weights.lambda1 < 0.0 || self.weights.lambda2 < 0.0 {
            bad("lambda weights must be >= 0".into())?;
        }
        Ok(())
    }

    /// Table-style ablation presets: each tag toggles the swap, the dynamic
    /// threshold and the optional loss terms on top of `self`.
    pub fn ablation_preset(&self, tag: char) -> Result<CoTeachConfig> {
        let mut c = self.clone();
        let (swap, dt, sm, da) = match tag {
            'a' => (false, false, true, true),
            'b' => (true, false, true, true),
            'c' => (false, true, true, true),
            'd' => (true, true, false, false),
            'e' => (true, true, true, false),
            'f' => (true, true, false, true),
            'g' => (true, true, true, true),
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "unknown ablation tag '{tag}', expected a..g"
                )))
            }
        };
        c.swap = swap;
        c.dynamic_threshold = dt;
        c.use_smoothness = sm;
        c.use_augmentation = da;
        Ok(c)
    }

    /// Serialize to the flat `key = value` text format.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(w, "eta = {}", self.eta);
        let _ = writeln!(w, "tau = {}", self.tau);
        let _ = writeln!(w, "t_k = {}", self.t_k);
        let _ = writeln!(w, "t_max = {}", self.t_max);
        let _ = writeln!(w, "n_max = {}", self.n_max);
        let _ = writeln!(w, "batch = {}", self.batch);
        let _ = writeln!(w, "decay = {}", self.decay);
        let _ = writeln!(w, "alpha = {}", self.weights.alpha);
        let _ = writeln!(w, "lambda1 = {}", self.weights.lambda1);
        let _ = writeln!(w, "lambda2 = {}", self.weights.lambda2);
        let _ = writeln!(w, "seed_a = {}", self.seed_a);
        let _ = writeln!(w, "seed_b = {}", self.seed_b);
        let _ = writeln!(w, "data_seed = {}", self.data_seed);
        let _ = writeln!(w, "swap = {}", self.swap);
        let _ = writeln!(w, "dynamic_threshold = {}", self.dynamic_threshold);
        let _ = writeln!(w, "use_smoothness = {}", self.use_smoothness);
        let _ = writeln!(w, "use_augmentation = {}", self.use_augmentation);
        let _ = writeln!(w, "gamma1 = {}", self.gamma1);
        let _ = writeln!(w, "gamma2 = {}", self.gamma2);
        let _ = writeln!(w, "in_channels = {}", self.arch.in_channels);
        let _ = writeln!(w, "feat_channels = {}", self.arch.feat_channels);
        let _ = writeln!(w, "agg_channels = {}", self.arch.agg_channels);
        let _ = writeln!(w, "refine_channels = {}", self.arch.refine_channels);
        let _ = writeln!(w, "d_max_coarse = {}", self.arch.d_max_coarse);
        s
    }

    /// Parse the flat text format. Missing keys keep their defaults;
    /// unknown keys are rejected.
    pub fn from_config_text(text: &str) -> Result<CoTeachConfig> {
        let mut c = CoTeachConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| {
                Error::InvalidConfig(format!("line {}: bad {} value '{}'", lineno + 1, what, value))
            };
            match key {
                "eta" => c.eta = value.parse().map_err(|_| bad("float"))?,
                "tau" => c.tau = value.parse().map_err(|_| bad("float"))?,
                "t_k" => c.t_k = value.parse().map_err(|_| bad("integer"))?,
                "t_max" => c.t_max = value.parse().map_err(|_| bad("integer"))?,
                "n_max" => c.n_max = value.parse().map_err(|_| bad("integer"))?,
                "batch" => c.batch = value.parse().map_err(|_| bad("integer"))?,
                "decay" => c.decay = value.parse().map_err(|_| bad("float"))?,
                "alpha" => c.weights.alpha = value.parse().map_err(|_| bad("float"))?,
                "lambda1" => c.weights.lambda1 = value.parse().map_err(|_| bad("float"))?,
                "lambda2" => c.weights.lambda2 = value.parse().map_err(|_| bad("float"))?,
                "seed_a" => c.seed_a = value.parse().map_err(|_| bad("integer"))?,
                "seed_b" => c.seed_b = value.parse().map_err(|_| bad("integer"))?,
                "data_seed" => c.data_seed = value.parse().map_err(|_| bad("integer"))?,
                "swap" => c.swap = value.parse().map_err(|_| bad("bool"))?,
                "dynamic_threshold" => c.dynamic_threshold = value.parse().map_err(|_| bad("bool"))?,
                "use_smoothness" => c.use_smoothness = value.parse().map_err(|_| bad("bool"))?,
                "use_augmentation" => c.use_augmentation = value.parse().map_err(|_| bad("bool"))?,
                "gamma1" => c.gamma1 = value.parse().map_err(|_| bad("float"))?,
                "gamma2" => c.gamma2 = value.parse().map_err(|_| bad("float"))?,
                "in_channels" => c.arch.in_channels = value.parse().map_err(|_| bad("integer"))?,
                "feat_channels" => c.arch.feat_channels = value.parse().map_err(|_| bad("integer"))?,
                "agg_channels" => c.arch.agg_channels = value.parse().map_err(|_| bad("integer"))?,
                "refine_channels" => c.arch.refine_channels = value.parse().map_err(|_| bad("integer"))?,
                "d_max_coarse" => c.arch.d_max_coarse = value.parse().map_err(|_| bad("integer"))?,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "line {}: unknown key '{}'",
                        lineno + 1,
                        other
                    )))
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<CoTeachConfig> {
        Self::from_config_text(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_config_text())?;
        Ok(())
    }
}
