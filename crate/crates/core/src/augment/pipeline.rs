use alloc::vec::Vec;

use rand::Rng as _;

use super::buffer::{BufferSet, ReplayBuffer};
use super::compose::{compose_batch, round_half_up, MixConfig};
use crate::diffusion::{
    denoise_train_step, generate_transitions, ConditionLabel, Denoiser, DenoiserShape,
    NoiseSchedule, TrainNoise, TrainerState, TransitionCodec,
};
use crate::env::{env_step, rollout, EnvSpec, Policy, ScoreRefs, Transition};
use crate::numkernel::{LrSchedule, Matrix};
use crate::rl::{train_step, Agent, AgentConfig, AgentPolicy, Sample, Source, StepDiagnostics};
use crate::rng::{stream, substream, Rng, Stream};
use crate::{Error, Result};

/// How synthetic samples are drawn from the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generation {
    /// Label-conditioned sampling combined with guidance weight `w`.
    Guided,
    /// Unconditional model (every training label dropped) sampled with the
    /// `Null` label and no guidance.
    Unconditional,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorConfig {
    pub hidden_width: usize,
    pub depth: usize,
    pub sigma_features: usize,
    pub p_uncond: f64,
    pub sampler_steps: usize,
    /// Denoiser updates per refresh.
    pub updates_per_refresh: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    /// Reinitialize the denoiser at every refresh instead of fine-tuning it.
    pub retrain_from_scratch: bool,
    pub generation: Generation,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            hidden_width: 256,
            depth: 4,
            sigma_features: 12,
            p_uncond: 0.1,
            sampler_steps: 32,
            updates_per_refresh: 2000,
            batch_size: 256,
            lr_max: 3e-4,
            lr_min: 3e-6,
            retrain_from_scratch: false,
            generation: Generation::Guided,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 || self.depth < 2 || !self.sigma_features.is_multiple_of(2) {
            return Err(Error::invalid(
                "denoiser needs width >= 1, depth >= 2 and an even number of sigma features",
            ));
        }
        if !(0.0..=1.0).contains(&self.p_uncond) {
            return Err(Error::invalid("p_uncond must be in [0, 1]"));
        }
        if self.sampler_steps == 0 || self.updates_per_refresh == 0 || self.batch_size < 2 {
            return Err(Error::invalid(
                "sampler steps, refresh updates and batch size must be positive",
            ));
        }
        if !(self.lr_max > 0.0 && self.lr_min >= 0.0 && self.lr_min <= self.lr_max) {
            return Err(Error::invalid(
                "denoiser learning rates must satisfy 0 <= lr_min <= lr_max, lr_max > 0",
            ));
        }
        Ok(())
    }

    fn effective_p_uncond(&self) -> f64 {
        match self.generation {
            Generation::Guided => self.p_uncond,
            Generation::Unconditional => 1.0,
        }
    }
}

/// The generative model carried across refreshes. The codec is fitted at
/// the first refresh and then frozen.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Generator {
    pub denoiser: Option<Denoiser>,
    pub codec: Option<TransitionCodec>,
    pub trainer: Option<TrainerState>,
    pub refreshes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefreshStats {
    pub index: u64,
    pub mean_loss: f64,
    pub n_online: usize,
    pub n_offline: usize,
}

/// True on positive multiples of `refresh_every`.
pub fn maybe_refresh(step: u64, cfg: &MixConfig) -> bool {
    step > 0 && cfg.refresh_every > 0 && step.is_multiple_of(cfg.refresh_every)
}

fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z =
        seed ^ a.wrapping_mul(0xBF58_476D_1CE4_E5B9) ^ b.wrapping_mul(0x94D0_49BB_1331_11EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn encode_all(codec: &TransitionCodec, buf: &ReplayBuffer) -> Result<Matrix> {
    let mut data = Vec::with_capacity(buf.len() * codec.dim());
    for t in buf.transitions() {
        data.extend(codec.encode(t)?);
    }
    Matrix::from_vec(buf.len(), codec.dim(), data)
}

/// Updates the model on `d_on` and `d_off` with their true labels, then
/// replaces both synthetic buffers with freshly generated samples.
///
/// Each denoiser batch holds equal halves of online and offline rows so the
/// two labels get equal weight however small `d_on` is.
pub fn refresh_and_generate(
    buffers: &mut BufferSet,
    generator: &mut Generator,
    spec: &EnvSpec,
    mix: &MixConfig,
    gcfg: &GeneratorConfig,
    seed: u64,
) -> Result<RefreshStats> {
    gcfg.validate()?;
    if buffers.d_on.is_empty() || buffers.d_off.is_empty() {
        return Err(Error::invalid(
            "model refresh needs nonempty online and offline buffers",
        ));
    }
    let index = generator.refreshes;
    if generator.codec.is_none() {
        let corpus: Vec<Transition> = buffers
            .d_on
            .transitions()
            .chain(buffers.d_off.transitions())
            .cloned()
            .collect();
        generator.codec = Some(TransitionCodec::fit(&corpus)?);
    }
    let codec = generator
        .codec
        .as_ref()
        .ok_or(Error::invalid("codec missing"))?;
    let on = encode_all(codec, &buffers.d_on)?;
    let off = encode_all(codec, &buffers.d_off)?;

    let schedule = LrSchedule::new(gcfg.lr_max, gcfg.lr_min, gcfg.updates_per_refresh as u64)?;
    if generator.denoiser.is_none() || gcfg.retrain_from_scratch {
        let shape = DenoiserShape {
            data_dim: codec.dim(),
            hidden_width: gcfg.hidden_width,
            depth: gcfg.depth,
            sigma_features: gcfg.sigma_features,
        };
        let mut init_rng = substream(seed, Stream::DiffusionTrain, 2 * index);
        let d = Denoiser::new(shape, gcfg.effective_p_uncond(), &mut init_rng)?;
        generator.trainer = Some(TrainerState::new(&d, schedule));
        generator.denoiser = Some(d);
    } else if let Some(tr) = generator.trainer.as_mut() {
        tr.restart(schedule);
    }
    let (Some(denoiser), Some(trainer)) = (generator.denoiser.as_mut(), generator.trainer.as_mut())
    else {
        return Err(Error::invalid("generator state is incomplete"));
    };
    denoiser.p_uncond = gcfg.effective_p_uncond();

    let mut rng = substream(seed, Stream::DiffusionTrain, 2 * index + 1);
    let noise = TrainNoise::default();
    let b = gcfg.batch_size;
    let half = b / 2;
    let mut batch = Matrix::zeros(b, codec.dim());
    let mut labels = alloc::vec![ConditionLabel::Online; b];
    labels[half..]
        .iter_mut()
        .for_each(|l| *l = ConditionLabel::Offline);
    let mut loss_sum = 0.0;
    for _ in 0..gcfg.updates_per_refresh {
        for i in 0..b {
            let src = if i < half { &on } else { &off };
            let k = rng.random_range(0..src.rows());
            batch.row_mut(i).copy_from_slice(src.row(k));
        }
        loss_sum += denoise_train_step(denoiser, &batch, &labels, &noise, &mut rng, trainer)?.loss;
    }

    let sampler = NoiseSchedule::edm(gcfg.sampler_steps)?;
    let n_online = round_half_up(mix.syn_online_fraction * mix.gen_count_per_refresh as f64)
        .min(mix.gen_count_per_refresh);
    let n_offline = mix.gen_count_per_refresh - n_online;
    let (on_label, off_label, w) = match gcfg.generation {
        Generation::Guided => (
            ConditionLabel::Online,
            ConditionLabel::Offline,
            mix.guidance_w,
        ),
        Generation::Unconditional => (ConditionLabel::Null, ConditionLabel::Null, 0.0),
    };
    let denoiser = &*denoiser;
    let syn_on = generate_transitions(
        denoiser,
        codec,
        spec,
        on_label,
        w,
        &sampler,
        n_online,
        mix_seed(seed, index, 1),
    )?;
    let syn_off = generate_transitions(
        denoiser,
        codec,
        spec,
        off_label,
        w,
        &sampler,
        n_offline,
        mix_seed(seed, index, 2),
    )?;
    buffers.d_on_syn.clear();
    buffers.d_on_syn.extend(syn_on);
    buffers.d_off_syn.clear();
    buffers.d_off_syn.extend(syn_off);
    generator.refreshes += 1;
    Ok(RefreshStats {
        index,
        mean_loss: loss_sum / gcfg.updates_per_refresh as f64,
        n_online,
        n_offline,
    })
}

/// One evaluation point of a learning curve. Loss columns average the
/// updates since the previous row and are NaN when there were none.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub step: u64,
    pub episode_return: f64,
    pub normalized_score: f64,
    pub loss_q: f64,
    pub loss_pi: f64,
    pub loss_v: f64,
}

/// Mean return of the noiseless policy and its normalized score.
pub fn evaluate(
    spec: &EnvSpec,
    agent: &Agent,
    seed: u64,
    n_episodes: usize,
    refs: &ScoreRefs,
) -> Result<(f64, f64)> {
    let (_, ret) = rollout(spec, &AgentPolicy { agent, noise: 0.0 }, seed, n_episodes)?;
    Ok((ret, refs.normalize(ret)?))
}

#[derive(Default)]
struct LossAccumulator {
    sum: StepDiagnostics,
    n: usize,
}

impl LossAccumulator {
    fn add(&mut self, d: &StepDiagnostics) {
        self.sum.loss_q += d.loss_q;
        self.sum.loss_pi += d.loss_pi;
        self.sum.loss_v += d.loss_v;
        self.n += 1;
    }

    fn row(&mut self, step: u64, ret: f64, score: f64) -> CurveRow {
        let n = if self.n == 0 { f64::NAN } else { self.n as f64 };
        let row = CurveRow {
            step,
            episode_return: ret,
            normalized_score: score,
            loss_q: self.sum.loss_q / n,
            loss_pi: self.sum.loss_pi / n,
            loss_v: self.sum.loss_v / n,
        };
        *self = LossAccumulator::default();
        row
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfflineConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub seed: u64,
}

/// Trains on uniformly drawn offline batches. The curve has a row at step 0
/// and at every multiple of `eval_every`.
pub fn pretrain_offline(
    agent: &mut Agent,
    d_off: &ReplayBuffer,
    spec: &EnvSpec,
    cfg: &AgentConfig,
    ocfg: &OfflineConfig,
    refs: &ScoreRefs,
) -> Result<Vec<CurveRow>> {
    cfg.validate()?;
    if ocfg.eval_every == 0 || ocfg.batch_size == 0 {
        return Err(Error::invalid("eval_every and batch_size must be positive"));
    }
    if d_off.source() != Source::Offline {
        return Err(Error::invalid(
            "offline pre-training expects the offline buffer",
        ));
    }
    let mut agent_rng = substream(ocfg.seed, Stream::Agent, 1);
    let mut batch_rng = substream(ocfg.seed, Stream::Composition, 1);
    let mut acc = LossAccumulator::default();
    let mut curve = Vec::new();
    let (ret, score) = evaluate(spec, agent, ocfg.seed, ocfg.eval_episodes, refs)?;
    curve.push(acc.row(0, ret, score));
    let mut batch: Vec<Sample> = Vec::with_capacity(ocfg.batch_size);
    for step in 1..=ocfg.steps {
        batch.clear();
        d_off.sample_into(ocfg.batch_size, &mut batch_rng, &mut batch)?;
        acc.add(&train_step(agent, &batch, cfg, &mut agent_rng)?);
        if step % ocfg.eval_every == 0 {
            let (ret, score) = evaluate(spec, agent, ocfg.seed, ocfg.eval_episodes, refs)?;
            curve.push(acc.row(step, ret, score));
        }
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineConfig {
    pub total_steps: u64,
    pub batch_size: usize,
    /// Gradient steps per environment step.
    pub updates_per_step: usize,
    pub eval_every: u64,
    pub eval_episodes: usize,
    /// Std of the Gaussian noise added to actions while collecting.
    pub exploration_noise: f64,
    pub seed: u64,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            total_steps: 5000,
            batch_size: 256,
            updates_per_step: 1,
            eval_every: 250,
            eval_episodes: 20,
            exploration_noise: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineOutcome {
    pub curve: Vec<CurveRow>,
    pub refreshes: Vec<RefreshStats>,
}

/// The online phase: collect one step, refresh the generator on schedule,
/// then train on composed batches. Until the first refresh fills the
/// synthetic buffers, batches hold real data only.
#[allow(clippy::too_many_arguments)]
pub fn run_online_phase(
    agent: &mut Agent,
    buffers: &mut BufferSet,
    generator: &mut Generator,
    spec: &EnvSpec,
    cfg: &AgentConfig,
    mix: &MixConfig,
    gcfg: &GeneratorConfig,
    ocfg: &OnlineConfig,
    refs: &ScoreRefs,
) -> Result<OnlineOutcome> {
    cfg.validate()?;
    mix.validate()?;
    if ocfg.eval_every == 0 || ocfg.batch_size < 3 {
        return Err(Error::invalid(
            "eval_every must be positive and batch_size at least 3",
        ));
    }
    if buffers.d_off.is_empty() {
        return Err(Error::Composition {
            buffer: Source::Offline.as_str(),
        });
    }
    let mut env_rng: Rng = stream(ocfg.seed, Stream::Env);
    let mut agent_rng = stream(ocfg.seed, Stream::Agent);
    let mut batch_rng = stream(ocfg.seed, Stream::Composition);
    let real_only = MixConfig { r: 0.0, ..*mix };

    let mut acc = LossAccumulator::default();
    let mut curve = Vec::new();
    let mut refreshes = Vec::new();
    let (ret, score) = evaluate(spec, agent, ocfg.seed, ocfg.eval_episodes, refs)?;
    curve.push(acc.row(0, ret, score));

    let mut state = spec.sample_start(&mut env_rng);
    let mut episode_step = 0;
    for step in 1..=ocfg.total_steps {
        let action = AgentPolicy {
            agent,
            noise: ocfg.exploration_noise,
        }
        .act(&state, &mut env_rng)?;
        episode_step += 1;
        let out = env_step(spec, &state, &action, episode_step)?;
        let terminal = out.terminal;
        buffers.d_on.push(Transition {
            state: core::mem::take(&mut state),
            action,
            reward: out.reward,
            next_state: out.next_state.clone(),
            terminal,
        });
        state = if terminal {
            episode_step = 0;
            spec.sample_start(&mut env_rng)
        } else {
            out.next_state
        };

        if maybe_refresh(step, mix) {
            refreshes.push(refresh_and_generate(
                buffers, generator, spec, mix, gcfg, ocfg.seed,
            )?);
        }
        let have_synthetic = !(buffers.d_on_syn.is_empty() && buffers.d_off_syn.is_empty());
        let step_mix = if have_synthetic { mix } else { &real_only };
        for _ in 0..ocfg.updates_per_step {
            let batch = compose_batch(buffers, ocfg.batch_size, step_mix, &mut batch_rng)?;
            acc.add(&train_step(agent, &batch, cfg, &mut agent_rng)?);
        }
        if step % ocfg.eval_every == 0 {
            let (ret, score) = evaluate(spec, agent, ocfg.seed, ocfg.eval_episodes, refs)?;
            curve.push(acc.row(step, ret, score));
        }
    }
    Ok(OnlineOutcome { curve, refreshes })
}
