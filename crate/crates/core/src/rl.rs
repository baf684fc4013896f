//! IQL-style base learner with a source-gated conservative regularizer.
//!
//! Networks: critic `Q(s, a)`, its Polyak-averaged target, a state value
//! `V(s)` fitted by expectile regression, and a deterministic policy
//! `tanh(f(s))` extracted by advantage-weighted regression.
//!
//! The critic minimizes, per sample, `lambda_i * w * R_i + 0.5 * td_i^2`
//! where `R_i = mean_j Q(s_i, a_ij) - Q(s_i, a_i)` over actions `a_ij`
//! sampled around the current policy, `w` is `lambda_cql_weight` and
//! `lambda_i` is 0 for online-sourced samples and 1 otherwise.

use alloc::vec::Vec;

use crate::env::{Policy, Transition};
use crate::numkernel::math::{exp, tanh};
use crate::numkernel::{AdamState, Gradients, Matrix, Mlp, MlpShape};
use crate::rng::{standard_normal, Rng};
use crate::{Error, Result};

/// Which buffer a training sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Online,
    Offline,
    SynOnline,
    SynOffline,
}

impl Source {
    pub const ALL: [Source; 4] = [
        Source::Online,
        Source::Offline,
        Source::SynOnline,
        Source::SynOffline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Online => "online",
            Source::Offline => "offline",
            Source::SynOnline => "syn_online",
            Source::SynOffline => "syn_offline",
        }
    }
}

/// Regularizer gate: 0 for online (real or synthetic) samples, 1 otherwise.
pub fn select_lambda(source: Source) -> f64 {
    match source {
        Source::Online | Source::SynOnline => 0.0,
        Source::Offline | Source::SynOffline => 1.0,
    }
}

/// A transition tagged with the buffer it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub transition: Transition,
    pub source: Source,
}

impl Sample {
    pub fn new(transition: Transition, source: Source) -> Self {
        Sample { transition, source }
    }

    pub fn lambda(&self) -> f64 {
        select_lambda(self.source)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentConfig {
    pub gamma: f64,
    pub tau_expectile: f64,
    pub awr_beta: f64,
    pub polyak_rho: f64,
    pub lambda_cql_weight: f64,
    pub lr_q: f64,
    pub lr_pi: f64,
    pub lr_v: f64,
    /// Policy-sampled actions per state inside the regularizer.
    pub n_policy_actions: usize,
    /// Gaussian noise added to the policy action for those samples.
    pub cql_action_noise: f64,
    pub hidden_width: usize,
    pub depth: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.99,
            tau_expectile: 0.7,
            awr_beta: 3.0,
            polyak_rho: 0.005,
            lambda_cql_weight: 1.0,
            lr_q: 3e-4,
            lr_pi: 3e-4,
            lr_v: 3e-4,
            n_policy_actions: 4,
            cql_action_noise: 0.2,
            hidden_width: 64,
            depth: 3,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.gamma) {
            return Err(Error::invalid("gamma must be in (0, 1)"));
        }
        if !open_unit(self.tau_expectile) {
            return Err(Error::invalid("tau_expectile must be in (0, 1)"));
        }
        if !(self.awr_beta > 0.0) {
            return Err(Error::invalid("awr_beta must be positive"));
        }
        if !(self.polyak_rho > 0.0 && self.polyak_rho <= 1.0) {
            return Err(Error::invalid("polyak_rho must be in (0, 1]"));
        }
        if !(self.lambda_cql_weight >= 0.0) {
            return Err(Error::invalid("lambda_cql_weight must be nonnegative"));
        }
        if !(self.lr_q > 0.0 && self.lr_pi > 0.0 && self.lr_v > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if self.n_policy_actions == 0 {
            return Err(Error::invalid("n_policy_actions must be at least 1"));
        }
        if !(self.cql_action_noise >= 0.0) {
            return Err(Error::invalid("cql_action_noise must be nonnegative"));
        }
        if self.hidden_width == 0 || self.depth < 2 {
            return Err(Error::invalid(
                "agent networks need width >= 1 and depth >= 2",
            ));
        }
        Ok(())
    }
}

/// The four networks of the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    pub critic: Mlp,
    pub target_critic: Mlp,
    pub value: Mlp,
    pub policy: Mlp,
}

/// Networks plus their optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub params: AgentParams,
    pub critic_opt: AdamState,
    pub value_opt: AdamState,
    pub policy_opt: AdamState,
    pub state_dim: usize,
    pub action_dim: usize,
}

/// Scalar summaries of one [`train_step`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepDiagnostics {
    /// Mean squared TD residual.
    pub loss_q: f64,
    /// Mean of `lambda_i * R_i`.
    pub cql: f64,
    pub loss_v: f64,
    pub loss_pi: f64,
}

impl Agent {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        cfg: &AgentConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let net = |input, output, rng: &mut Rng| {
            Mlp::new(
                MlpShape {
                    input,
                    hidden_width: cfg.hidden_width,
                    depth: cfg.depth,
                    output,
                    residual: false,
                },
                rng,
            )
        };
        let critic = net(state_dim + action_dim, 1, rng)?;
        let value = net(state_dim, 1, rng)?;
        let policy = net(state_dim, action_dim, rng)?;
        Ok(Self::from_params(
            AgentParams {
                target_critic: critic.clone(),
                critic,
                value,
                policy,
            },
            state_dim,
            action_dim,
        ))
    }

    /// Wraps existing networks with fresh optimizer state.
    pub fn from_params(params: AgentParams, state_dim: usize, action_dim: usize) -> Self {
        Agent {
            critic_opt: AdamState::new(&params.critic),
            value_opt: AdamState::new(&params.value),
            policy_opt: AdamState::new(&params.policy),
            params,
            state_dim,
            action_dim,
        }
    }

    pub fn check(&self) -> Result<()> {
        let p = &self.params;
        if !p.critic.same_shape(&p.target_critic) {
            return Err(Error::invalid("critic and target critic shapes differ"));
        }
        if p.policy.output_dim() != self.action_dim || p.policy.input_dim() != self.state_dim {
            return Err(Error::invalid(
                "policy dimensions do not match the environment",
            ));
        }
        if p.critic.input_dim() != self.state_dim + self.action_dim
            || p.value.input_dim() != self.state_dim
        {
            return Err(Error::invalid("critic or value input dimension mismatch"));
        }
        Ok(())
    }

    /// Deterministic policy actions for each row of `states`.
    pub fn policy_actions(&self, states: &Matrix) -> Result<Matrix> {
        let mut out = self.params.policy.forward_batch(states)?;
        out.as_mut_slice().iter_mut().for_each(|v| *v = tanh(*v));
        Ok(out)
    }

    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        let m = Matrix::from_vec(1, state.len(), state.to_vec())?;
        Ok(self.policy_actions(&m)?.into_vec())
    }
}

/// Deterministic agent policy with optional clipped Gaussian exploration noise.
pub struct AgentPolicy<'a> {
    pub agent: &'a Agent,
    pub noise: f64,
}

impl Policy for AgentPolicy<'_> {
    fn act(&self, state: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let mut a = self.agent.act(state)?;
        if self.noise > 0.0 {
            for v in a.iter_mut() {
                *v = (*v + self.noise * standard_normal(rng)).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }
}

/// Column-stacked views of a batch.
pub struct BatchMatrices {
    pub states: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_states: Matrix,
    pub terminals: Vec<bool>,
}

impl BatchMatrices {
    pub fn from_transitions<'a, I>(items: I, state_dim: usize, action_dim: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Transition>,
    {
        let mut s = Vec::new();
        let mut a = Vec::new();
        let mut ns = Vec::new();
        let mut rewards = Vec::new();
        let mut terminals = Vec::new();
        for t in items {
            if t.state.len() != state_dim
                || t.next_state.len() != state_dim
                || t.action.len() != action_dim
            {
                return Err(Error::invalid(
                    "transition dimensions do not match the agent",
                ));
            }
            s.extend_from_slice(&t.state);
            a.extend_from_slice(&t.action);
            ns.extend_from_slice(&t.next_state);
            rewards.push(t.reward);
            terminals.push(t.terminal);
        }
        let n = rewards.len();
        if n == 0 {
            return Err(Error::invalid("empty batch"));
        }
        Ok(BatchMatrices {
            states: Matrix::from_vec(n, state_dim, s)?,
            actions: Matrix::from_vec(n, action_dim, a)?,
            rewards,
            next_states: Matrix::from_vec(n, state_dim, ns)?,
            terminals,
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

fn column(m: &Matrix) -> Vec<f64> {
    m.as_slice().to_vec()
}

/// `r + gamma * (1 - terminal) * Q_target(s', pi(s'))`, never differentiated.
pub fn td_targets(agent: &Agent, batch: &BatchMatrices, gamma: f64) -> Result<Vec<f64>> {
    let next_actions = agent.policy_actions(&batch.next_states)?;
    let q_next = column(
        &agent
            .params
            .target_critic
            .forward_batch(&batch.next_states.hconcat(&next_actions)?)?,
    );
    Ok(batch
        .rewards
        .iter()
        .zip(&batch.terminals)
        .zip(&q_next)
        .map(|((r, done), q)| if *done { *r } else { r + gamma * q })
        .collect())
}

/// Mean squared TD residual and its gradient with respect to the critic.
pub fn td_loss(batch: &[Transition], agent: &Agent, gamma: f64) -> Result<(f64, Gradients)> {
    let m = BatchMatrices::from_transitions(batch, agent.state_dim, agent.action_dim)?;
    let targets = td_targets(agent, &m, gamma)?;
    let n = m.len() as f64;
    agent
        .params
        .critic
        .grad(&m.states.hconcat(&m.actions)?, |q| {
            let mut d = Matrix::zeros(q.rows(), 1);
            let mut loss = 0.0;
            for (i, y) in targets.iter().enumerate() {
                let delta = y - q.get(i, 0);
                loss += delta * delta;
                d.set(i, 0, -2.0 * delta / n);
            }
            (loss / n, d)
        })
}

/// Draws `n_actions` noisy policy actions per state (one matrix per draw,
/// drawn in draw-major order).
pub fn sample_policy_actions(
    agent: &Agent,
    states: &Matrix,
    n_actions: usize,
    noise: f64,
    rng: &mut Rng,
) -> Result<Vec<Matrix>> {
    let base = agent.policy_actions(states)?;
    Ok((0..n_actions)
        .map(|_| {
            let mut a = base.clone();
            for v in a.as_mut_slice() {
                *v = (*v + noise * standard_normal(rng)).clamp(-1.0, 1.0);
            }
            a
        })
        .collect())
}

/// Conservative regularizer `mean_i [mean_j Q(s_i, a_ij) - Q(s_i, a_i)]`
/// with the policy actions supplied, and its critic gradient.
pub fn cql_regularizer(
    batch: &[Transition],
    agent: &Agent,
    policy_actions: &[Matrix],
) -> Result<(f64, Gradients)> {
    let m = BatchMatrices::from_transitions(batch, agent.state_dim, agent.action_dim)?;
    let ones = alloc::vec![1.0; m.len()];
    let (_, cql, grads) = critic_objective_inner(agent, &m, None, &ones, 1.0, policy_actions, 0.0)?;
    Ok((cql, grads))
}

/// Per-sample `lambda_i`-gated critic objective of one training step.
///
/// Returns `(td, gated_cql, grads)` where the optimized scalar is
/// `mean_i [0.5 * td_i^2 + weight * lambda_i * R_i]`.
pub fn critic_objective(
    agent: &Agent,
    batch: &[Sample],
    policy_actions: &[Matrix],
    cfg: &AgentConfig,
) -> Result<(f64, f64, Gradients)> {
    let m = BatchMatrices::from_transitions(
        batch.iter().map(|s| &s.transition),
        agent.state_dim,
        agent.action_dim,
    )?;
    let lambdas: Vec<f64> = batch.iter().map(Sample::lambda).collect();
    let targets = td_targets(agent, &m, cfg.gamma)?;
    critic_objective_inner(
        agent,
        &m,
        Some(&targets),
        &lambdas,
        cfg.lambda_cql_weight,
        policy_actions,
        0.5,
    )
}

/// Shared critic pass: data rows followed by every policy-action block, one
/// forward and one backward through the critic.
fn critic_objective_inner(
    agent: &Agent,
    m: &BatchMatrices,
    targets: Option<&[f64]>,
    lambdas: &[f64],
    cql_weight: f64,
    policy_actions: &[Matrix],
    td_coef: f64,
) -> Result<(f64, f64, Gradients)> {
    let n = m.len();
    let blocks = policy_actions.len();
    let uses_cql = cql_weight != 0.0 && lambdas.iter().any(|l| *l != 0.0);
    if uses_cql && blocks == 0 {
        return Err(Error::invalid(
            "regularizer needs at least one policy action per state",
        ));
    }
    for a in policy_actions {
        if a.shape() != m.actions.shape() {
            return Err(Error::invalid("policy action block shape mismatch"));
        }
    }
    let data_in = m.states.hconcat(&m.actions)?;
    let mut rows = Vec::with_capacity(n * (1 + blocks) * data_in.cols());
    rows.extend_from_slice(data_in.as_slice());
    if uses_cql {
        for a in policy_actions {
            rows.extend_from_slice(m.states.hconcat(a)?.as_slice());
        }
    }
    let total_rows = rows.len() / data_in.cols();
    let input = Matrix::from_vec(total_rows, data_in.cols(), rows)?;
    let nf = n as f64;
    let mut td = 0.0;
    let mut cql = 0.0;
    let (_, grads) = agent.params.critic.grad(&input, |q| {
        let mut d = Matrix::zeros(q.rows(), 1);
        for i in 0..n {
            let q_data = q.get(i, 0);
            let mut g = 0.0;
            if let Some(t) = targets {
                let delta = t[i] - q_data;
                td += delta * delta;
                g -= 2.0 * td_coef * delta / nf;
            }
            if uses_cql {
                let q_pi =
                    (0..blocks).map(|b| q.get(n * (b + 1) + i, 0)).sum::<f64>() / blocks as f64;
                cql += lambdas[i] * (q_pi - q_data);
                let coef = cql_weight * lambdas[i] / nf;
                g -= coef;
                for b in 0..blocks {
                    d.set(n * (b + 1) + i, 0, coef / blocks as f64);
                }
            }
            d.set(i, 0, g);
        }
        (0.0, d)
    })?;
    Ok((td / nf, cql / nf, grads))
}

/// Asymmetric squared loss `|tau - 1{u < 0}| * u^2`.
pub fn expectile_loss(u: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::invalid("expectile tau must be in (0, 1)"));
    }
    Ok(expectile_weight(u, tau) * u * u)
}

#[inline]
fn expectile_weight(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        1.0 - tau
    } else {
        tau
    }
}

/// Expectile regression of `V(s)` toward `Q_target(s, a)`.
pub fn value_loss(batch: &BatchMatrices, agent: &Agent, tau: f64) -> Result<(f64, Gradients)> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::invalid("expectile tau must be in (0, 1)"));
    }
    let q = column(
        &agent
            .params
            .target_critic
            .forward_batch(&batch.states.hconcat(&batch.actions)?)?,
    );
    let n = batch.len() as f64;
    agent.params.value.grad(&batch.states, |v| {
        let mut d = Matrix::zeros(v.rows(), 1);
        let mut loss = 0.0;
        for (i, qi) in q.iter().enumerate() {
            let u = qi - v.get(i, 0);
            let w = expectile_weight(u, tau);
            loss += w * u * u;
            d.set(i, 0, -2.0 * w * u / n);
        }
        (loss / n, d)
    })
}

pub const AWR_MAX_WEIGHT: f64 = 100.0;

/// `min(exp(beta * (Q_target(s, a) - V(s))), 100)` per sample.
pub fn awr_weights(batch: &BatchMatrices, agent: &Agent, beta: f64) -> Result<Vec<f64>> {
    let q = column(
        &agent
            .params
            .target_critic
            .forward_batch(&batch.states.hconcat(&batch.actions)?)?,
    );
    let v = column(&agent.params.value.forward_batch(&batch.states)?);
    Ok(q.iter()
        .zip(&v)
        .map(|(q, v)| exp(beta * (q - v)).min(AWR_MAX_WEIGHT))
        .collect())
}

/// Advantage-weighted squared action error and its policy gradient.
pub fn awr_policy_loss(batch: &[Transition], agent: &Agent, beta: f64) -> Result<(f64, Gradients)> {
    if !(beta > 0.0) {
        return Err(Error::invalid("awr beta must be positive"));
    }
    let m = BatchMatrices::from_transitions(batch, agent.state_dim, agent.action_dim)?;
    let weights = awr_weights(&m, agent, beta)?;
    policy_loss_weighted(&m, agent, &weights)
}

fn policy_loss_weighted(
    m: &BatchMatrices,
    agent: &Agent,
    weights: &[f64],
) -> Result<(f64, Gradients)> {
    let n = m.len() as f64;
    let act_dim = agent.action_dim;
    agent.params.policy.grad(&m.states, |raw| {
        let mut d = Matrix::zeros(raw.rows(), act_dim);
        let mut loss = 0.0;
        for (i, w) in weights.iter().enumerate() {
            for j in 0..act_dim {
                let pi = tanh(raw.get(i, j));
                let e = pi - m.actions.get(i, j);
                loss += w * e * e;
                d.set(i, j, w * 2.0 * e * (1.0 - pi * pi) / n);
            }
        }
        (loss / n, d)
    })
}

/// `target <- (1 - rho) * target + rho * online`.
pub fn polyak_update(target: &mut Mlp, online: &Mlp, rho: f64) -> Result<()> {
    target.polyak_toward(online, rho)
}

/// One update of value, critic, and policy followed by the target update.
pub fn train_step(
    agent: &mut Agent,
    batch: &[Sample],
    cfg: &AgentConfig,
    rng: &mut Rng,
) -> Result<StepDiagnostics> {
    let m = BatchMatrices::from_transitions(
        batch.iter().map(|s| &s.transition),
        agent.state_dim,
        agent.action_dim,
    )?;

    let (loss_v, g_v) = value_loss(&m, agent, cfg.tau_expectile)?;
    agent
        .value_opt
        .step(&mut agent.params.value, &g_v, cfg.lr_v)?;

    let policy_actions = sample_policy_actions(
        agent,
        &m.states,
        cfg.n_policy_actions,
        cfg.cql_action_noise,
        rng,
    )?;
    let (loss_q, cql, g_q) = critic_objective(agent, batch, &policy_actions, cfg)?;
    agent
        .critic_opt
        .step(&mut agent.params.critic, &g_q, cfg.lr_q)?;

    let weights = awr_weights(&m, agent, cfg.awr_beta)?;
    let (loss_pi, g_pi) = policy_loss_weighted(&m, agent, &weights)?;
    agent
        .policy_opt
        .step(&mut agent.params.policy, &g_pi, cfg.lr_pi)?;

    polyak_update(
        &mut agent.params.target_critic,
        &agent.params.critic,
        cfg.polyak_rho,
    )?;
    Ok(StepDiagnostics {
        loss_q,
        cql,
        loss_v,
        loss_pi,
    })
}
