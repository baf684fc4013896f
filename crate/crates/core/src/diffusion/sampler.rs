use alloc::vec::Vec;

use super::codec::TransitionCodec;
use super::denoiser::{ConditionLabel, Denoise};
use crate::env::{EnvSpec, Transition};
use crate::numkernel::math::{pow, sqrt};
use crate::numkernel::Matrix;
use crate::rng::{standard_normal, substream, Stream};
use crate::{Error, Result};

/// Rows drawn per independent noise stream.
pub const SAMPLE_CHUNK: usize = 256;

/// Karras noise levels plus the churn settings of the stochastic sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
    pub sigmas: Vec<f64>,
    pub s_churn: f64,
    pub s_tmin: f64,
    pub s_tmax: f64,
    pub s_noise: f64,
}

impl NoiseSchedule {
    /// `sigma_i = (smax^(1/rho) + i/(n-1) (smin^(1/rho) - smax^(1/rho)))^rho`.
    pub fn karras(n_steps: usize, sigma_min: f64, sigma_max: f64, rho: f64) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::invalid("noise schedule needs at least one step"));
        }
        if !(sigma_min > 0.0 && sigma_max > sigma_min && rho > 0.0) {
            return Err(Error::invalid(
                "noise schedule requires 0 < sigma_min < sigma_max and rho > 0",
            ));
        }
        let (lo, hi) = (pow(sigma_min, 1.0 / rho), pow(sigma_max, 1.0 / rho));
        let sigmas = if n_steps == 1 {
            alloc::vec![sigma_max]
        } else {
            (0..n_steps)
                .map(|i| pow(hi + i as f64 / (n_steps - 1) as f64 * (lo - hi), rho))
                .collect()
        };
        Ok(NoiseSchedule {
            sigma_min,
            sigma_max,
            rho,
            sigmas,
            s_churn: 40.0,
            s_tmin: 0.05,
            s_tmax: 50.0,
            s_noise: 1.003,
        })
    }

    /// Default range `[0.002, 80]` with `rho = 7`.
    pub fn edm(n_steps: usize) -> Result<Self> {
        Self::karras(n_steps, 0.002, 80.0, 7.0)
    }

    /// Deterministic variant (no churn).
    pub fn without_churn(mut self) -> Self {
        self.s_churn = 0.0;
        self
    }

    pub fn n_steps(&self) -> usize {
        self.sigmas.len()
    }

    fn gamma(&self, sigma: f64) -> f64 {
        if self.s_churn > 0.0 && sigma >= self.s_tmin && sigma <= self.s_tmax {
            (self.s_churn / self.n_steps() as f64).min(core::f64::consts::SQRT_2 - 1.0)
        } else {
            0.0
        }
    }
}

/// `x0 + sigma * noise`.
pub fn forward_noise(x0: &[f64], sigma: f64, noise: &[f64]) -> Result<Vec<f64>> {
    if x0.len() != noise.len() {
        return Err(Error::invalid("forward_noise: x0 and noise lengths differ"));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid("forward_noise: sigma must be nonnegative"));
    }
    Ok(x0.iter().zip(noise).map(|(x, n)| x + sigma * n).collect())
}

/// Guided noise estimate `(1 + w) eps_cond - w eps_uncond`.
pub fn cfg_score(eps_cond: &[f64], eps_uncond: &[f64], w: f64) -> Result<Vec<f64>> {
    if eps_cond.len() != eps_uncond.len() {
        return Err(Error::invalid("cfg_score: score lengths differ"));
    }
    Ok(eps_cond
        .iter()
        .zip(eps_uncond)
        .map(|(c, u)| (1.0 + w) * c - w * u)
        .collect())
}

/// Implied gradient of `log p(c | x)`: `-(eps_cond - eps_uncond) / sigma`.
pub fn classifier_grad_estimate(
    eps_cond: &[f64],
    eps_uncond: &[f64],
    sigma: f64,
) -> Result<Vec<f64>> {
    if eps_cond.len() != eps_uncond.len() {
        return Err(Error::invalid(
            "classifier_grad_estimate: score lengths differ",
        ));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid(
            "classifier_grad_estimate: sigma must be positive",
        ));
    }
    Ok(eps_cond
        .iter()
        .zip(eps_uncond)
        .map(|(c, u)| -(c - u) / sigma)
        .collect())
}

/// Guided denoised estimate for every row of `x` at a shared `sigma`.
fn guided_denoise<D: Denoise + ?Sized>(
    model: &D,
    x: &Matrix,
    sigma: f64,
    label: ConditionLabel,
    w: f64,
) -> Result<Matrix> {
    let n = x.rows();
    if label == ConditionLabel::Null || w == 0.0 {
        return model.denoise(x, &alloc::vec![sigma; n], &alloc::vec![label; n]);
    }
    // Conditional and unconditional rows share one forward pass.
    let mut stacked = Matrix::zeros(2 * n, x.cols());
    stacked.as_mut_slice()[..n * x.cols()].copy_from_slice(x.as_slice());
    stacked.as_mut_slice()[n * x.cols()..].copy_from_slice(x.as_slice());
    let mut labels = alloc::vec![label; n];
    labels.resize(2 * n, ConditionLabel::Null);
    let d = model.denoise(&stacked, &alloc::vec![sigma; 2 * n], &labels)?;
    let mut out = Matrix::zeros(n, x.cols());
    for i in 0..n {
        let xi = x.row(i);
        let eps_c: Vec<f64> = xi
            .iter()
            .zip(d.row(i))
            .map(|(a, b)| (a - b) / sigma)
            .collect();
        let eps_u: Vec<f64> = xi
            .iter()
            .zip(d.row(n + i))
            .map(|(a, b)| (a - b) / sigma)
            .collect();
        let eps = cfg_score(&eps_c, &eps_u, w)?;
        for ((o, a), e) in out.row_mut(i).iter_mut().zip(xi).zip(eps) {
            *o = a - sigma * e;
        }
    }
    Ok(out)
}

fn sample_chunk<D: Denoise + ?Sized>(
    model: &D,
    dim: usize,
    label: ConditionLabel,
    w: f64,
    schedule: &NoiseSchedule,
    n: usize,
    rng: &mut crate::rng::Rng,
) -> Result<Matrix> {
    let mut x = Matrix::zeros(n, dim);
    let s0 = schedule.sigmas[0];
    x.as_mut_slice()
        .iter_mut()
        .for_each(|v| *v = s0 * standard_normal(rng));
    let steps = schedule.n_steps();
    for i in 0..steps {
        let t_cur = schedule.sigmas[i];
        let t_next = if i + 1 < steps {
            schedule.sigmas[i + 1]
        } else {
            0.0
        };
        let gamma = schedule.gamma(t_cur);
        let t_hat = t_cur * (1.0 + gamma);
        if gamma > 0.0 {
            let scale = sqrt(t_hat * t_hat - t_cur * t_cur) * schedule.s_noise;
            x.as_mut_slice()
                .iter_mut()
                .for_each(|v| *v += scale * standard_normal(rng));
        }
        let denoised = guided_denoise(model, &x, t_hat, label, w)?;
        let mut d_cur = Matrix::zeros(n, dim);
        for ((d, xv), dv) in d_cur
            .as_mut_slice()
            .iter_mut()
            .zip(x.as_slice())
            .zip(denoised.as_slice())
        {
            *d = (xv - dv) / t_hat;
        }
        let mut x_next = x.clone();
        for (xn, d) in x_next.as_mut_slice().iter_mut().zip(d_cur.as_slice()) {
            *xn += (t_next - t_hat) * d;
        }
        if t_next > 0.0 {
            let denoised = guided_denoise(model, &x_next, t_next, label, w)?;
            for (((xn, xh), d), dn) in x_next
                .as_mut_slice()
                .iter_mut()
                .zip(x.as_slice())
                .zip(d_cur.as_slice())
                .zip(denoised.as_slice())
            {
                let d_prime = (*xn - dn) / t_next;
                *xn = xh + (t_next - t_hat) * 0.5 * (d + d_prime);
            }
        }
        x = x_next;
    }
    if !x.all_finite() {
        return Err(Error::Numeric {
            layer: 0,
            context: "sampling",
        });
    }
    Ok(x)
}

/// Draws `n` encoded vectors of width `dim` with guidance weight `w`.
/// Rows are produced in chunks of [`SAMPLE_CHUNK`], each from its own
/// substream of `seed`, and concatenated in chunk order.
pub fn sample<D: Denoise + ?Sized>(
    model: &D,
    dim: usize,
    label: ConditionLabel,
    w: f64,
    schedule: &NoiseSchedule,
    n: usize,
    seed: u64,
) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least one"));
    }
    if !w.is_finite() {
        return Err(Error::invalid("guidance weight must be finite"));
    }
    let mut data = Vec::with_capacity(n * dim);
    let mut done = 0;
    let mut chunk = 0u64;
    while done < n {
        let m = SAMPLE_CHUNK.min(n - done);
        let mut rng = substream(seed, Stream::DiffusionSample, chunk);
        data.extend_from_slice(
            sample_chunk(model, dim, label, w, schedule, m, &mut rng)?.as_slice(),
        );
        done += m;
        chunk += 1;
    }
    Matrix::from_vec(n, dim, data)
}

/// Samples, decodes and clips `n` transitions into the environment.
pub fn generate_transitions<D: Denoise + ?Sized>(
    model: &D,
    codec: &TransitionCodec,
    spec: &EnvSpec,
    label: ConditionLabel,
    w: f64,
    schedule: &NoiseSchedule,
    n: usize,
    seed: u64,
) -> Result<Vec<Transition>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if codec.state_dim != spec.state_dim || codec.action_dim != spec.action_dim {
        return Err(Error::invalid(
            "codec dimensions do not match the environment",
        ));
    }
    let x = sample(model, codec.dim(), label, w, schedule, n, seed)?;
    x.iter_rows()
        .map(|row| {
            let mut t = codec.decode(row)?;
            TransitionCodec::clip_to_env(&mut t, spec);
            Ok(t)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints_and_order() {
        let s = NoiseSchedule::edm(32).unwrap();
        assert_eq!(s.sigmas.len(), 32);
        assert!((s.sigmas[0] - 80.0).abs() < 1e-9);
        assert!((s.sigmas[31] - 0.002).abs() < 1e-12);
        assert!(s.sigmas.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn guidance_arithmetic() {
        assert_eq!(
            cfg_score(&[1.0, 0.0], &[0.0, 1.0], 2.0).unwrap(),
            [3.0, -2.0]
        );
        assert_eq!(
            classifier_grad_estimate(&[2.0, 0.0], &[0.0, 0.0], 2.0).unwrap(),
            [-1.0, 0.0]
        );
        assert!(classifier_grad_estimate(&[1.0], &[1.0], 0.0).is_err());
        assert!(cfg_score(&[1.0], &[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn forward_noise_edges() {
        assert_eq!(
            forward_noise(&[1.0, 2.0], 0.0, &[5.0, 6.0]).unwrap(),
            [1.0, 2.0]
        );
        assert_eq!(
            forward_noise(&[1.0, 2.0], 3.0, &[0.0, 0.0]).unwrap(),
            [1.0, 2.0]
        );
    }
}
