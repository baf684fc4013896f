//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::Path;

use o2o_core::augment::{
    BufferCapacities, Generation, GeneratorConfig, MixConfig, OfflineConfig, OnlineConfig, Paradigm,
};
use o2o_core::env::{parse_mix, EnvSpec, MixEntry};
use o2o_core::rl::AgentConfig;

use crate::error::{LabError, LabResult};

/// Fine-tuning variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Baseline,
    Cfdg,
    CfdgNoGuidance,
    CfdgNoOfflineDa,
}

impl Mode {
    pub const ALL: [Mode; 4] = [
        Mode::Baseline,
        Mode::Cfdg,
        Mode::CfdgNoGuidance,
        Mode::CfdgNoOfflineDa,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Cfdg => "cfdg",
            Mode::CfdgNoGuidance => "cfdg_no_guidance",
            Mode::CfdgNoOfflineDa => "cfdg_no_offline_da",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s)
    }

    pub fn augments(self) -> bool {
        self != Mode::Baseline
    }
}

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Result<Self, String> {
                s.parse().map_err(|e| format!("cannot parse `{s}`: {e}"))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

plain_value!(u64, usize, f64, bool, String);

impl ConfigValue for Vec<u64> {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|e| format!("cannot parse seed `{p}`: {e}"))
            })
            .collect()
    }
    fn render(&self) -> String {
        self.iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl ConfigValue for Paradigm {
    fn parse_value(s: &str) -> Result<Self, String> {
        Paradigm::parse(s)
            .ok_or_else(|| format!("unknown paradigm `{s}` (expected concat5050 or oorb)"))
    }
    fn render(&self) -> String {
        self.as_str().to_string()
    }
}

impl ConfigValue for Mode {
    fn parse_value(s: &str) -> Result<Self, String> {
        Mode::parse(s).ok_or_else(|| format!("unknown mode `{s}`"))
    }
    fn render(&self) -> String {
        self.as_str().to_string()
    }
}

macro_rules! experiment_config {
    ($( $(#[doc = $doc:expr])* $field:ident : $ty:ty = $default:expr ),* $(,)?) => {
        /// Every knob of an experiment. Each field is a config key of the same name.
        #[derive(Debug, Clone, PartialEq)]
        pub struct ExperimentConfig {
            $( $(#[doc = $doc])* pub $field: $ty, )*
        }

        impl Default for ExperimentConfig {
            fn default() -> Self {
                ExperimentConfig { $( $field: $default, )* }
            }
        }

        impl ExperimentConfig {
            /// All keys in file order with their one-line descriptions.
            pub const KEYS: &'static [(&'static str, &'static str)] = &[
                $( (stringify!($field), concat!($($doc),*)), )*
            ];

            fn set(&mut self, key: &str, value: &str) -> LabResult<()> {
                match key {
                    $( stringify!($field) => {
                        self.$field = <$ty as ConfigValue>::parse_value(value)
                            .map_err(|m| LabError::validation(key, m))?;
                    } )*
                    _ => return Err(LabError::validation(key, "unknown config key")),
                }
                Ok(())
            }

            fn render_value(&self, key: &str) -> Option<String> {
                match key {
                    $( stringify!($field) => Some(self.$field.render()), )*
                    _ => None,
                }
            }
        }
    };
}

experiment_config! {
    /// Experiment name; outputs go to `<out_dir>/<exp>/`.
    exp: String = "default".to_string(),
    /// Output root directory.
    out_dir: String = "out".to_string(),
    /// Environment: pointmass2d or fourroom.
    env: String = "pointmass2d".to_string(),
    /// Comma-separated master seeds.
    seeds: Vec<u64> = vec![0, 1, 2, 3, 4],
    /// Fine-tuning variant used when the command line gives none.
    mode: Mode = Mode::Cfdg,
    /// Offline dataset size in transitions.
    dataset_size: usize = 10_000,
    /// Behavior mix as comma-separated `behavior:fraction[:noise]` entries (behavior: expert, medium, random).
    dataset_mix: String = MixEntry::medium(1.0).describe(),
    /// Offline pre-training gradient steps.
    offline_steps: u64 = 20_000,
    /// Online environment steps.
    online_steps: u64 = 5_000,
    /// Gradient steps per online environment step.
    updates_per_step: usize = 1,
    /// Learning-curve cadence in steps (offline and online).
    eval_every: u64 = 250,
    /// Evaluation episodes per curve row.
    eval_episodes: usize = 20,
    /// Seed of the rollouts that measure the normalization references.
    ref_seed: u64 = 1_000_003,
    /// Episodes used to measure the random and expert reference returns.
    ref_episodes: usize = 50,
    /// Agent minibatch size.
    batch_size: usize = 256,
    /// Gaussian action noise while collecting online data.
    exploration_noise: f64 = 0.1,
    /// Discount factor.
    gamma: f64 = 0.99,
    /// Expectile of the value regression.
    tau_expectile: f64 = 0.7,
    /// Inverse temperature of the advantage weights.
    awr_beta: f64 = 3.0,
    /// Target-critic averaging rate.
    polyak_rho: f64 = 0.005,
    /// Weight of the gated conservative regularizer.
    lambda_cql_weight: f64 = 1.0,
    /// Critic learning rate.
    lr_q: f64 = 3e-4,
    /// Policy learning rate.
    lr_pi: f64 = 3e-4,
    /// Value learning rate.
    lr_v: f64 = 3e-4,
    /// Policy-sampled actions per state in the regularizer.
    n_policy_actions: usize = 4,
    /// Noise on those policy-sampled actions.
    cql_action_noise: f64 = 0.2,
    /// Hidden width of the agent networks.
    agent_hidden_width: usize = 64,
    /// Layer count of the agent networks.
    agent_depth: usize = 3,
    /// Batch composition: concat5050 or oorb.
    paradigm: Paradigm = Paradigm::Concat5050,
    /// Synthetic fraction of each batch.
    r: f64 = 1.0 / 3.0,
    /// Share of generated samples labeled online.
    syn_online_fraction: f64 = 0.8,
    /// Probability that an oorb batch draws online data.
    oorb_p: f64 = 0.5,
    /// Environment steps between generator refreshes.
    refresh_every: u64 = 500,
    /// Samples generated at each refresh.
    gen_count_per_refresh: usize = 5_000,
    /// Guidance weight.
    guidance_w: f64 = 1.0,
    /// Online buffer capacity.
    capacity_online: usize = 1_000_000,
    /// Offline buffer capacity.
    capacity_offline: usize = 1_000_000,
    /// Online synthetic buffer capacity.
    capacity_syn_online: usize = 1_000_000,
    /// Offline synthetic buffer capacity.
    capacity_syn_offline: usize = 1_000_000,
    /// Denoiser hidden width.
    denoiser_hidden_width: usize = 256,
    /// Denoiser layer count.
    denoiser_depth: usize = 4,
    /// Sinusoidal features of the noise level (even).
    denoiser_sigma_features: usize = 12,
    /// Label dropout probability.
    p_uncond: f64 = 0.1,
    /// Sampler steps.
    sampler_steps: usize = 32,
    /// Denoiser updates per refresh.
    denoiser_updates_per_refresh: usize = 2_000,
    /// Denoiser minibatch size.
    denoiser_batch_size: usize = 256,
    /// Peak denoiser learning rate of each refresh.
    denoiser_lr_max: f64 = 3e-4,
    /// Final denoiser learning rate of each refresh.
    denoiser_lr_min: f64 = 3e-6,
    /// Reinitialize the denoiser at every refresh.
    denoiser_retrain: bool = false,
    /// Histogram bins per dimension for divergence reports.
    js_bins: usize = 20,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> LabResult<Self> {
        let mut cfg = ExperimentConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                LabError::validation(format!("line {}", n + 1), "expected `key = value`")
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> LabResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::parse(&text)
    }

    /// Every key with its description as a comment.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (key, doc) in Self::KEYS {
            let value = self.render_value(key).unwrap_or_default();
            let _ = writeln!(out, "# {}\n{key} = {value}", doc.trim());
        }
        out
    }

    pub fn save(&self, path: &Path) -> LabResult<()> {
        crate::formats::write_file(path, self.render().as_bytes())
    }

    pub fn env_spec(&self) -> LabResult<EnvSpec> {
        EnvSpec::by_name(&self.env).ok_or_else(|| {
            LabError::validation(
                "env",
                format!(
                    "unknown environment `{}` (known: {})",
                    self.env,
                    EnvSpec::names().join(", ")
                ),
            )
        })
    }

    pub fn mix_entries(&self) -> LabResult<Vec<MixEntry>> {
        parse_mix(&self.dataset_mix).map_err(|e| LabError::validation("dataset_mix", e.to_string()))
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            gamma: self.gamma,
            tau_expectile: self.tau_expectile,
            awr_beta: self.awr_beta,
            polyak_rho: self.polyak_rho,
            lambda_cql_weight: self.lambda_cql_weight,
            lr_q: self.lr_q,
            lr_pi: self.lr_pi,
            lr_v: self.lr_v,
            n_policy_actions: self.n_policy_actions,
            cql_action_noise: self.cql_action_noise,
            hidden_width: self.agent_hidden_width,
            depth: self.agent_depth,
        }
    }

    /// Composition settings for `mode`; the baseline disables synthetic data
    /// and never refreshes.
    pub fn mix_config(&self, mode: Mode) -> MixConfig {
        let mut mix = MixConfig {
            r: self.r,
            syn_online_fraction: self.syn_online_fraction,
            oorb_p: self.oorb_p,
            refresh_every: self.refresh_every,
            gen_count_per_refresh: self.gen_count_per_refresh,
            paradigm: self.paradigm,
            guidance_w: self.guidance_w,
        };
        match mode {
            Mode::Baseline => {
                mix.r = 0.0;
                mix.refresh_every = self.online_steps.saturating_add(1);
            }
            Mode::CfdgNoOfflineDa => mix.syn_online_fraction = 1.0,
            Mode::Cfdg | Mode::CfdgNoGuidance => {}
        }
        mix
    }

    pub fn generator_config(&self, mode: Mode) -> GeneratorConfig {
        GeneratorConfig {
            hidden_width: self.denoiser_hidden_width,
            depth: self.denoiser_depth,
            sigma_features: self.denoiser_sigma_features,
            p_uncond: self.p_uncond,
            sampler_steps: self.sampler_steps,
            updates_per_refresh: self.denoiser_updates_per_refresh,
            batch_size: self.denoiser_batch_size,
            lr_max: self.denoiser_lr_max,
            lr_min: self.denoiser_lr_min,
            retrain_from_scratch: self.denoiser_retrain,
            generation: if mode == Mode::CfdgNoGuidance {
                Generation::Unconditional
            } else {
                Generation::Guided
            },
        }
    }

    pub fn capacities(&self) -> BufferCapacities {
        BufferCapacities {
            online: self.capacity_online,
            offline: self.capacity_offline,
            syn_online: self.capacity_syn_online,
            syn_offline: self.capacity_syn_offline,
        }
    }

    pub fn offline_config(&self, seed: u64) -> OfflineConfig {
        OfflineConfig {
            steps: self.offline_steps,
            batch_size: self.batch_size,
            eval_every: self.eval_every,
            eval_episodes: self.eval_episodes,
            seed,
        }
    }

    pub fn online_config(&self, seed: u64) -> OnlineConfig {
        OnlineConfig {
            total_steps: self.online_steps,
            batch_size: self.batch_size,
            updates_per_step: self.updates_per_step,
            eval_every: self.eval_every,
            eval_episodes: self.eval_episodes,
            exploration_noise: self.exploration_noise,
            seed,
        }
    }

    /// Checks every field against its documented range.
    pub fn validate(&self) -> LabResult<()> {
        let bad = |field: &str, msg: &str| Err(LabError::validation(field, msg));
        if self.exp.is_empty() || self.exp.contains(['/', '\\']) {
            return bad("exp", "must be a nonempty name without path separators");
        }
        self.env_spec()?;
        self.mix_entries()?;
        if self.seeds.is_empty() {
            return bad("seeds", "at least one seed is required");
        }
        if self.dataset_size == 0 {
            return bad("dataset_size", "must be at least 1");
        }
        if self.eval_every == 0 || self.eval_episodes == 0 {
            return bad("eval_every", "cadence and episode count must be positive");
        }
        if self.batch_size < 3 {
            return bad("batch_size", "must be at least 3");
        }
        if self.updates_per_step == 0 {
            return bad("updates_per_step", "must be at least 1");
        }
        if !(self.exploration_noise >= 0.0) {
            return bad("exploration_noise", "must be nonnegative");
        }
        if self.ref_episodes == 0 {
            return bad("ref_episodes", "must be at least 1");
        }
        if self.js_bins == 0 {
            return bad("js_bins", "must be at least 1");
        }
        self.agent_config()
            .validate()
            .map_err(|e| LabError::validation("agent", e.to_string()))?;
        self.mix_config(Mode::Cfdg)
            .validate()
            .map_err(|e| LabError::validation("mix", e.to_string()))?;
        self.generator_config(Mode::Cfdg)
            .validate()
            .map_err(|e| LabError::validation("denoiser", e.to_string()))?;
        let caps = self.capacities();
        if [caps.online, caps.offline, caps.syn_online, caps.syn_offline].contains(&0) {
            return bad("capacity", "buffer capacities must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.r = 0.1 + 0.2;
        cfg.seeds = vec![3, 9];
        cfg.paradigm = Paradigm::Oorb;
        cfg.lr_q = 1.234_567_890_123e-7;
        assert_eq!(ExperimentConfig::parse(&cfg.render()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::parse("gama = 0.9").unwrap_err();
        assert!(err.to_string().contains("gama"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = ExperimentConfig::parse("# header\n\nr = 0.25 # trailing\n").unwrap();
        assert_eq!(cfg.r, 0.25);
    }

    #[test]
    fn bad_env_names_field() {
        let err = ExperimentConfig::parse("env = moon").unwrap_err();
        assert!(err.to_string().contains("env"));
    }

    #[test]
    fn baseline_disables_augmentation() {
        let cfg = ExperimentConfig::default();
        let mix = cfg.mix_config(Mode::Baseline);
        assert_eq!(mix.r, 0.0);
        assert!(mix.refresh_every > cfg.online_steps);
        assert_eq!(
            cfg.mix_config(Mode::CfdgNoOfflineDa).syn_online_fraction,
            1.0
        );
        assert_eq!(
            cfg.generator_config(Mode::CfdgNoGuidance).generation,
            Generation::Unconditional
        );
    }
}
