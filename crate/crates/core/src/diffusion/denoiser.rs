use alloc::vec::Vec;

use rand::Rng as _;

use crate::numkernel::math::{cos, exp, ln, sin, sqrt};
use crate::numkernel::{AdamState, LrSchedule, Matrix, Mlp, MlpShape};
use crate::rng::{standard_normal, Rng};
use crate::{Error, Result};

/// Conditioning label; `Null` selects the unconditional model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConditionLabel {
    Offline,
    Online,
    Null,
}

impl ConditionLabel {
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        match self {
            ConditionLabel::Offline => 0,
            ConditionLabel::Online => 1,
            ConditionLabel::Null => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConditionLabel::Offline => "offline",
            ConditionLabel::Online => "online",
            ConditionLabel::Null => "null",
        }
    }
}

/// Anything that maps noisy rows at given noise levels and labels to
/// denoised estimates of the clean rows.
pub trait Denoise {
    fn denoise(
        &self,
        x_noisy: &Matrix,
        sigmas: &[f64],
        labels: &[ConditionLabel],
    ) -> Result<Matrix>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiserShape {
    pub data_dim: usize,
    pub hidden_width: usize,
    pub depth: usize,
    /// Number of sinusoidal features of `c_noise` (even).
    pub sigma_features: usize,
}

impl DenoiserShape {
    pub fn new(data_dim: usize) -> Self {
        DenoiserShape {
            data_dim,
            hidden_width: 256,
            depth: 4,
            sigma_features: 12,
        }
    }
}

/// EDM-preconditioned residual MLP with classifier-free label dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    pub net: Mlp,
    pub data_dim: usize,
    pub sigma_features: usize,
    /// Probability that a training label is replaced by `Null`.
    pub p_uncond: f64,
    pub sigma_data: f64,
}

impl Denoiser {
    pub fn new(shape: DenoiserShape, p_uncond: f64, rng: &mut Rng) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_uncond) {
            return Err(Error::invalid("p_uncond must be in [0, 1]"));
        }
        if !shape.sigma_features.is_multiple_of(2) {
            return Err(Error::invalid("sigma_features must be even"));
        }
        let net = Mlp::new(
            MlpShape {
                input: shape.data_dim + shape.sigma_features + ConditionLabel::COUNT,
                hidden_width: shape.hidden_width,
                depth: shape.depth,
                output: shape.data_dim,
                residual: true,
            },
            rng,
        )?;
        Ok(Denoiser {
            net,
            data_dim: shape.data_dim,
            sigma_features: shape.sigma_features,
            p_uncond,
            sigma_data: 1.0,
        })
    }

    /// Rebuilds a denoiser around a restored network.
    pub fn from_net(
        net: Mlp,
        data_dim: usize,
        sigma_features: usize,
        p_uncond: f64,
        sigma_data: f64,
    ) -> Result<Self> {
        if net.input_dim() != data_dim + sigma_features + ConditionLabel::COUNT
            || net.output_dim() != data_dim
        {
            return Err(Error::invalid(
                "denoiser network does not match data and embedding dimensions",
            ));
        }
        Ok(Denoiser {
            net,
            data_dim,
            sigma_features,
            p_uncond,
            sigma_data,
        })
    }

    pub fn c_skip(&self, sigma: f64) -> f64 {
        let sd2 = self.sigma_data * self.sigma_data;
        sd2 / (sigma * sigma + sd2)
    }

    pub fn c_out(&self, sigma: f64) -> f64 {
        sigma * self.sigma_data / sqrt(sigma * sigma + self.sigma_data * self.sigma_data)
    }

    pub fn c_in(&self, sigma: f64) -> f64 {
        1.0 / sqrt(sigma * sigma + self.sigma_data * self.sigma_data)
    }

    pub fn c_noise(sigma: f64) -> f64 {
        ln(sigma) / 4.0
    }

    /// Training loss weight `(sigma^2 + sigma_data^2) / (sigma * sigma_data)^2`.
    pub fn loss_weight(&self, sigma: f64) -> f64 {
        (sigma * sigma + self.sigma_data * self.sigma_data)
            / (sigma * self.sigma_data * sigma * self.sigma_data)
    }

    fn sigma_embedding(&self, sigma: f64, out: &mut [f64]) {
        let c = Self::c_noise(sigma);
        let pairs = self.sigma_features / 2;
        for k in 0..pairs {
            let freq = core::f64::consts::PI * (1u64 << k) as f64 / 4.0;
            out[2 * k] = sin(freq * c);
            out[2 * k + 1] = cos(freq * c);
        }
    }

    fn network_input(
        &self,
        x_noisy: &Matrix,
        sigmas: &[f64],
        labels: &[ConditionLabel],
    ) -> Result<Matrix> {
        let n = x_noisy.rows();
        if x_noisy.cols() != self.data_dim || sigmas.len() != n || labels.len() != n {
            return Err(Error::invalid("denoiser inputs have inconsistent shapes"));
        }
        let width = self.data_dim + self.sigma_features + ConditionLabel::COUNT;
        let mut input = Matrix::zeros(n, width);
        for i in 0..n {
            let sigma = sigmas[i];
            if !(sigma > 0.0) {
                return Err(Error::invalid("denoiser noise level must be positive"));
            }
            let c_in = self.c_in(sigma);
            let row = input.row_mut(i);
            for (dst, src) in row[..self.data_dim].iter_mut().zip(x_noisy.row(i)) {
                *dst = c_in * src;
            }
            self.sigma_embedding(
                sigma,
                &mut row[self.data_dim..self.data_dim + self.sigma_features],
            );
            row[self.data_dim + self.sigma_features + labels[i].index()] = 1.0;
        }
        Ok(input)
    }
}

impl Denoise for Denoiser {
    fn denoise(
        &self,
        x_noisy: &Matrix,
        sigmas: &[f64],
        labels: &[ConditionLabel],
    ) -> Result<Matrix> {
        let f = self
            .net
            .forward_batch(&self.network_input(x_noisy, sigmas, labels)?)?;
        let mut out = Matrix::zeros(x_noisy.rows(), self.data_dim);
        for i in 0..x_noisy.rows() {
            let (skip, c_out) = (self.c_skip(sigmas[i]), self.c_out(sigmas[i]));
            for ((o, x), fv) in out.row_mut(i).iter_mut().zip(x_noisy.row(i)).zip(f.row(i)) {
                *o = skip * x + c_out * fv;
            }
        }
        Ok(out)
    }
}

/// Log-normal training distribution of noise levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainNoise {
    pub p_mean: f64,
    pub p_std: f64,
}

impl Default for TrainNoise {
    fn default() -> Self {
        TrainNoise {
            p_mean: -1.2,
            p_std: 1.2,
        }
    }
}

impl TrainNoise {
    pub fn draw(&self, rng: &mut Rng) -> f64 {
        exp(self.p_mean + self.p_std * standard_normal(rng))
    }
}

/// Mean over rows and dimensions of `lambda(sigma) * (D(x0 + sigma n) - x0)^2`.
pub fn denoising_loss<D: Denoise + ?Sized>(
    model: &D,
    x0: &Matrix,
    sigmas: &[f64],
    noise: &Matrix,
    labels: &[ConditionLabel],
    sigma_data: f64,
) -> Result<f64> {
    if x0.shape() != noise.shape() || sigmas.len() != x0.rows() {
        return Err(Error::invalid("loss inputs have inconsistent shapes"));
    }
    let mut noisy = x0.clone();
    for i in 0..x0.rows() {
        for (v, n) in noisy.row_mut(i).iter_mut().zip(noise.row(i)) {
            *v += sigmas[i] * n;
        }
    }
    let d = model.denoise(&noisy, sigmas, labels)?;
    let mut total = 0.0;
    for i in 0..x0.rows() {
        let s = sigmas[i];
        let weight = (s * s + sigma_data * sigma_data) / (s * sigma_data * s * sigma_data);
        let sq: f64 = d
            .row(i)
            .iter()
            .zip(x0.row(i))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += weight * sq;
    }
    Ok(total / (x0.rows() * x0.cols()).max(1) as f64)
}

/// Adam state and cosine schedule of a denoiser training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub opt: AdamState,
    pub schedule: LrSchedule,
    pub step: u64,
}

impl TrainerState {
    pub fn new(model: &Denoiser, schedule: LrSchedule) -> Self {
        TrainerState {
            opt: AdamState::new(&model.net),
            schedule,
            step: 0,
        }
    }

    /// Restarts the cosine schedule for a new budget, keeping Adam moments.
    pub fn restart(&mut self, schedule: LrSchedule) {
        self.schedule = schedule;
        self.step = 0;
    }

    fn lr(&self) -> Result<f64> {
        let lr = self.schedule.at(self.step.min(self.schedule.total_steps))?;
        Ok(lr.max(1e-12))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainStats {
    pub loss: f64,
    /// Samples whose label was dropped to `Null` in this step.
    pub n_null: usize,
    pub n: usize,
}

/// One Adam step on a batch of clean encoded rows with their true labels.
pub fn denoise_train_step(
    model: &mut Denoiser,
    batch: &Matrix,
    labels: &[ConditionLabel],
    noise_dist: &TrainNoise,
    rng: &mut Rng,
    trainer: &mut TrainerState,
) -> Result<TrainStats> {
    let n = batch.rows();
    if n == 0 || labels.len() != n {
        return Err(Error::invalid(
            "denoiser batch must be nonempty with one label per row",
        ));
    }
    if batch.cols() != model.data_dim {
        return Err(Error::invalid("denoiser batch has the wrong width"));
    }
    if labels.contains(&ConditionLabel::Null) {
        return Err(Error::invalid(
            "training labels must be Offline or Online; Null arises only from dropout",
        ));
    }
    let mut effective = Vec::with_capacity(n);
    let mut sigmas = Vec::with_capacity(n);
    let mut noisy = batch.clone();
    let mut n_null = 0;
    for (i, label) in labels.iter().enumerate() {
        let dropped = model.p_uncond > 0.0 && rng.random::<f64>() < model.p_uncond;
        if dropped {
            n_null += 1;
        }
        effective.push(if dropped {
            ConditionLabel::Null
        } else {
            *label
        });
        let sigma = noise_dist.draw(rng);
        sigmas.push(sigma);
        for v in noisy.row_mut(i) {
            *v += sigma * standard_normal(rng);
        }
    }
    let input = model.network_input(&noisy, &sigmas, &effective)?;
    let dim = model.data_dim;
    let denom = (n * dim) as f64;
    // With F_target = (x0 - c_skip * x_noisy) / c_out, lambda * c_out^2 = 1 so the
    // weighted loss on D equals the plain squared error on F.
    let model_ref = &*model;
    let (loss, grads) = model_ref.net.grad(&input, |f| {
        let mut d = Matrix::zeros(n, dim);
        let mut loss = 0.0;
        for i in 0..n {
            let (skip, c_out) = (model_ref.c_skip(sigmas[i]), model_ref.c_out(sigmas[i]));
            for j in 0..dim {
                let target = (batch.get(i, j) - skip * noisy.get(i, j)) / c_out;
                let e = f.get(i, j) - target;
                loss += e * e;
                d.set(i, j, 2.0 * e / denom);
            }
        }
        (loss / denom, d)
    })?;
    let lr = trainer.lr()?;
    trainer.opt.step(&mut model.net, &grads, lr)?;
    trainer.step += 1;
    Ok(TrainStats { loss, n_null, n })
}

/// Runs `steps` minibatch updates drawing rows uniformly with replacement.
/// Returns the per-step losses.
pub fn train_denoiser(
    model: &mut Denoiser,
    data: &Matrix,
    labels: &[ConditionLabel],
    steps: usize,
    batch_size: usize,
    noise_dist: &TrainNoise,
    trainer: &mut TrainerState,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if data.rows() == 0 || labels.len() != data.rows() {
        return Err(Error::invalid(
            "denoiser training data must be nonempty with one label per row",
        ));
    }
    let mut losses = Vec::with_capacity(steps);
    let mut batch = Matrix::zeros(batch_size, data.cols());
    let mut batch_labels = alloc::vec![ConditionLabel::Offline; batch_size];
    for _ in 0..steps {
        for i in 0..batch_size {
            let k = rng.random_range(0..data.rows());
            batch.row_mut(i).copy_from_slice(data.row(k));
            batch_labels[i] = labels[k];
        }
        losses
            .push(denoise_train_step(model, &batch, &batch_labels, noise_dist, rng, trainer)?.loss);
    }
    Ok(losses)
}
