//! Flags that mirror run-configuration keys. Each one is applied through
//! the same key/value parser as the configuration file, after it.

use anyhow::anyhow;
use molguide::ga::{apply_setting, GaConfig};
use molguide::guidance::GuidanceConfig;

use crate::support::{input, CmdResult};

#[derive(clap::Args, Debug, Default)]
pub struct GuidanceFlags {
    /// Weight of guide similarity against the base logits, in [0, 1].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Sampling temperature.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Random Fourier feature count; 0 compares raw embeddings.
    #[arg(long)]
    pub rff_dim: Option<usize>,
    /// Kernel temperature of the random features.
    #[arg(long)]
    pub rff_temp: Option<f64>,
    /// Restrict each step to the k most likely base tokens; 0 disables.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Z-score logits and similarities before mixing (on/off).
    #[arg(long)]
    pub standardize: Option<String>,
    /// Maximum generated tokens.
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(clap::Args, Debug, Default)]
pub struct GaFlags {
    /// Oracle-call budget.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Number of best-score guides per generation.
    #[arg(long)]
    pub guides: Option<usize>,
    /// Additional diversity guides per generation.
    #[arg(long)]
    pub diversity: Option<usize>,
    /// Exploration by crossover (on) or random corpus picks (off).
    #[arg(long)]
    pub crossover: Option<String>,
    /// Any other configuration key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

fn apply(ga: &mut GaConfig, g: &mut GuidanceConfig, key: &str, value: String) -> CmdResult {
    apply_setting(ga, g, 0, key, &value).map_err(|e| input(anyhow!("--{key}: {}", e.message)))
}

impl GuidanceFlags {
    pub fn apply(&self, ga: &mut GaConfig, g: &mut GuidanceConfig) -> CmdResult {
        let pairs = [
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("tau", self.tau.map(|v| v.to_string())),
            ("rff_dim", self.rff_dim.map(|v| v.to_string())),
            ("rff_temp", self.rff_temp.map(|v| v.to_string())),
            ("top_k", self.top_k.map(|v| v.to_string())),
            ("standardize", self.standardize.clone()),
            ("max_len", self.max_len.map(|v| v.to_string())),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                apply(ga, g, key, v)?;
            }
        }
        Ok(())
    }
}

impl GaFlags {
    pub fn apply(&self, ga: &mut GaConfig, g: &mut GuidanceConfig) -> CmdResult {
        let pairs = [
            ("budget", self.budget.map(|v| v.to_string())),
            ("num_guides", self.guides.map(|v| v.to_string())),
            ("diversity_guides", self.diversity.map(|v| v.to_string())),
            ("crossover_enabled", self.crossover.clone()),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                apply(ga, g, key, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| input(anyhow!("--set expects KEY=VALUE, got {kv:?}")))?;
            apply(ga, g, k.trim(), v.trim().to_owned())?;
        }
        Ok(())
    }
}
