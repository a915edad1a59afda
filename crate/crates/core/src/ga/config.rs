use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::guidance::GuidanceConfig;
use crate::rff::RffSettings;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("config line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub num_guides: usize,
    pub report_k: usize,
    pub budget: usize,
    pub diversity_guides: usize,
    pub gen_per_guide: usize,
    pub max_gen_size: usize,
    pub guide_prune_pct: f64,
    pub prune_topk: usize,
    /// Exploration by crossover of guides when set, otherwise by unscored
    /// corpus molecules.
    pub crossover_enabled: bool,
    pub exploration_candidates: usize,
    pub exploitation_trigger: f64,
    pub exploitation_alpha: f64,
    pub exploitation_tau: f64,
    pub stop_no_change: usize,
    pub init_pool_size: usize,
    pub discard_invalid: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            num_guides: 3,
            report_k: 10,
            budget: 10_000,
            diversity_guides: 1,
            gen_per_guide: 20,
            max_gen_size: 120,
            guide_prune_pct: 75.0,
            prune_topk: 10,
            crossover_enabled: true,
            exploration_candidates: 40,
            exploitation_trigger: 0.95,
            exploitation_alpha: 0.4,
            exploitation_tau: 0.15,
            stop_no_change: 500,
            init_pool_size: 100,
            discard_invalid: true,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            (self.num_guides >= 1, "num_guides must be >= 1"),
            (self.budget >= 1, "budget must be >= 1"),
            (self.report_k >= 1, "report_k must be >= 1"),
            (self.prune_topk >= 1, "prune_topk must be >= 1"),
            (self.gen_per_guide >= 1, "gen_per_guide must be >= 1"),
            (self.max_gen_size >= 1, "max_gen_size must be >= 1"),
            (self.stop_no_change >= 1, "stop_no_change must be >= 1"),
            (
                (0.0..=100.0).contains(&self.guide_prune_pct),
                "guide_prune_pct must lie in [0, 100]",
            ),
            (
                (0.0..=1.0).contains(&self.exploitation_alpha),
                "exploitation_alpha must lie in [0, 1]",
            ),
            (
                self.exploitation_tau > 0.0 && self.exploitation_tau.is_finite(),
                "exploitation_tau must be finite and > 0",
            ),
            (
                self.exploitation_trigger.is_finite(),
                "exploitation_trigger must be finite",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err((*msg).to_owned()),
            None => Ok(()),
        }
    }
}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError {
        line,
        message: format!("invalid value {v:?} for {key}"),
    })
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "on" | "1" | "yes" => Ok(true),
        "false" | "off" | "0" | "no" => Ok(false),
        _ => Err(ConfigError {
            line,
            message: format!("invalid boolean {v:?} for {key}"),
        }),
    }
}

/// Applies one `key = value` setting. Guidance keys are `alpha`, `tau`,
/// `standardize`, `top_k`, `max_len`, `rff_dim`, `rff_temp`, `rff_seed`;
/// `rff_dim = 0` and `top_k = none` disable those options.
pub fn apply_setting(
    ga: &mut GaConfig,
    guidance: &mut GuidanceConfig,
    line: usize,
    key: &str,
    value: &str,
) -> Result<(), ConfigError> {
    let v = value.trim();
    let rff = |g: &mut GuidanceConfig| g.rff.get_or_insert_with(RffSettings::default).to_owned();
    match key.trim() {
        "num_guides" => ga.num_guides = parse_value(line, key, v)?,
        "report_k" => ga.report_k = parse_value(line, key, v)?,
        "budget" => ga.budget = parse_value(line, key, v)?,
        "diversity_guides" => ga.diversity_guides = parse_value(line, key, v)?,
        "gen_per_guide" => ga.gen_per_guide = parse_value(line, key, v)?,
        "max_gen_size" => ga.max_gen_size = parse_value(line, key, v)?,
        "guide_prune_pct" => ga.guide_prune_pct = parse_value(line, key, v)?,
        "prune_topk" => ga.prune_topk = parse_value(line, key, v)?,
        "crossover_enabled" => ga.crossover_enabled = parse_bool(line, key, v)?,
        "exploration_candidates" => ga.exploration_candidates = parse_value(line, key, v)?,
        "exploitation_trigger" => ga.exploitation_trigger = parse_value(line, key, v)?,
        "exploitation_alpha" => ga.exploitation_alpha = parse_value(line, key, v)?,
        "exploitation_tau" => ga.exploitation_tau = parse_value(line, key, v)?,
        "stop_no_change" => ga.stop_no_change = parse_value(line, key, v)?,
        "init_pool_size" => ga.init_pool_size = parse_value(line, key, v)?,
        "discard_invalid" => ga.discard_invalid = parse_bool(line, key, v)?,
        "alpha" => guidance.alpha = parse_value(line, key, v)?,
        "tau" => guidance.tau = parse_value(line, key, v)?,
        "standardize" => guidance.standardize = parse_bool(line, key, v)?,
        "max_len" => guidance.max_len = parse_value(line, key, v)?,
        "top_k" => {
            guidance.top_k = match v {
                "none" | "off" | "0" => None,
                _ => Some(parse_value(line, key, v)?),
            }
        }
        "rff_dim" => {
            let d: usize = parse_value(line, key, v)?;
            guidance.rff = (d > 0).then(|| RffSettings {
                num_features: d,
                ..rff(guidance)
            });
        }
        "rff_temp" => {
            let t = parse_value(line, key, v)?;
            guidance.rff = Some(RffSettings {
                temperature: t,
                ..rff(guidance)
            });
        }
        "rff_seed" => {
            let s = parse_value(line, key, v)?;
            guidance.rff = Some(RffSettings { seed: s, ..rff(guidance) });
        }
        other => {
            return Err(ConfigError {
                line,
                message: format!("unknown key {other:?}"),
            })
        }
    }
    Ok(())
}

/// Parses a flat `key = value` file on top of the defaults. Blank lines and
/// `#` comments are ignored.
pub fn parse_run_config(text: &str) -> Result<(GaConfig, GuidanceConfig), ConfigError> {
    let mut ga = GaConfig::default();
    let mut guidance = GuidanceConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError {
            line: i + 1,
            message: format!("expected key = value, got {line:?}"),
        })?;
        apply_setting(&mut ga, &mut guidance, i + 1, k, v)?;
    }
    validate_pair(&ga, &guidance)?;
    Ok((ga, guidance))
}

pub fn validate_pair(ga: &GaConfig, guidance: &GuidanceConfig) -> Result<(), ConfigError> {
    let as_err = |message| ConfigError { line: 0, message };
    ga.validate().map_err(as_err)?;
    guidance.validate().map_err(|e| as_err(e.to_string()))
}

/// Renders every setting as `key = value`, one per line, in a fixed order.
/// With `include_run_identity` false the budget line is omitted so that
/// configurations differing only in budget render identically.
pub fn render_run_config(ga: &GaConfig, guidance: &GuidanceConfig, include_run_identity: bool) -> String {
    let mut s = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    put("num_guides", ga.num_guides.to_string());
    put("report_k", ga.report_k.to_string());
    if include_run_identity {
        put("budget", ga.budget.to_string());
    }
    put("diversity_guides", ga.diversity_guides.to_string());
    put("gen_per_guide", ga.gen_per_guide.to_string());
    put("max_gen_size", ga.max_gen_size.to_string());
    put("guide_prune_pct", ga.guide_prune_pct.to_string());
    put("prune_topk", ga.prune_topk.to_string());
    put("crossover_enabled", ga.crossover_enabled.to_string());
    put("exploration_candidates", ga.exploration_candidates.to_string());
    put("exploitation_trigger", ga.exploitation_trigger.to_string());
    put("exploitation_alpha", ga.exploitation_alpha.to_string());
    put("exploitation_tau", ga.exploitation_tau.to_string());
    put("stop_no_change", ga.stop_no_change.to_string());
    put("init_pool_size", ga.init_pool_size.to_string());
    put("discard_invalid", ga.discard_invalid.to_string());
    put("alpha", guidance.alpha.to_string());
    put("tau", guidance.tau.to_string());
    put("standardize", guidance.standardize.to_string());
    put(
        "top_k",
        guidance.top_k.map_or("none".into(), |k| k.to_string()),
    );
    put("max_len", guidance.max_len.to_string());
    match guidance.rff {
        None => put("rff_dim", "0".into()),
        Some(r) => {
            put("rff_dim", r.num_features.to_string());
            put("rff_temp", r.temperature.to_string());
            put("rff_seed", r.seed.to_string());
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let (ga, g) = (GaConfig::default(), GuidanceConfig::default());
        let text = render_run_config(&ga, &g, true);
        assert_eq!(parse_run_config(&text).unwrap(), (ga, g));
    }

    #[test]
    fn parses_overrides_and_comments() {
        let text = "# ablation\nbudget = 500\ncrossover_enabled = off\nrff_dim = 768 # on\nrff_temp=0.008\ntop_k = 5\n";
        let (ga, g) = parse_run_config(text).unwrap();
        assert_eq!(ga.budget, 500);
        assert!(!ga.crossover_enabled);
        assert_eq!(g.rff.unwrap().num_features, 768);
        assert_eq!(g.rff.unwrap().temperature, 0.008);
        assert_eq!(g.top_k, Some(5));
        let (_, g) = parse_run_config("rff_dim = 0").unwrap();
        assert_eq!(g.rff, None);
        let text = render_run_config(&ga, &g, true);
        assert_eq!(parse_run_config(&text).unwrap(), (ga, g));
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(parse_run_config("bogus = 1").unwrap_err().line, 1);
        assert_eq!(parse_run_config("\nbudget").unwrap_err().line, 2);
        assert!(parse_run_config("num_guides = 0").is_err());
        assert!(parse_run_config("guide_prune_pct = 101").is_err());
        assert!(parse_run_config("alpha = 2").is_err());
        assert!(parse_run_config("standardize = maybe").is_err());
    }

    #[test]
    fn identity_free_rendering_ignores_budget() {
        let a = GaConfig::default();
        let b = GaConfig {
            budget: 7,
            ..GaConfig::default()
        };
        let g = GuidanceConfig::default();
        assert_eq!(render_run_config(&a, &g, false), render_run_config(&b, &g, false));
        assert_ne!(render_run_config(&a, &g, true), render_run_config(&b, &g, true));
    }
}
