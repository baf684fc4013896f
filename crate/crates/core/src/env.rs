//! Toy continuous-control environments and offline data collection.
//!
//! Two environments are built in:
//!
//! - `pointmass2d`: a point in `[-2, 2]^2` moved by `0.1 * action` per step,
//!   dense reward `-|next - goal|`, goal `(1, 0)`, horizon 50, episodes start
//!   uniformly in `[-1, -0.5] x [-0.5, 0.5]`.
//! - `fourroom`: the square `[0, 2]^2` split into four rooms by walls at
//!   `x = 1` and `y = 1`, each wall pierced by two doorways of width 0.2
//!   centred at 0.5 and 1.5. Movement that would cross a wall outside a
//!   doorway is cancelled along that axis. Sparse reward 1 on reaching the
//!   goal `(1.7, 1.7)` (radius 0.15), 0 otherwise; horizon 120; starts
//!   uniformly in `[0.1, 0.6]^2`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::numkernel::math::sqrt;
use crate::rng::{standard_normal, stream, Rng, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    PointMass,
    FourRoom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: String,
    pub kind: EnvKind,
    pub state_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
    pub goal: Vec<f64>,
    pub goal_radius: f64,
    pub step_scale: f64,
    /// Closed per-dimension state interval.
    pub bounds: Vec<(f64, f64)>,
    /// Initial states are drawn uniformly from this box.
    pub start_low: Vec<f64>,
    pub start_high: Vec<f64>,
}

const DOOR_CENTRES: [f64; 2] = [0.5, 1.5];
const DOOR_HALF_WIDTH: f64 = 0.1;

impl EnvSpec {
    pub fn point_mass() -> Self {
        EnvSpec {
            name: "pointmass2d".into(),
            kind: EnvKind::PointMass,
            state_dim: 2,
            action_dim: 2,
            horizon: 50,
            goal: alloc::vec![1.0, 0.0],
            goal_radius: 0.1,
            step_scale: 0.1,
            bounds: alloc::vec![(-2.0, 2.0), (-2.0, 2.0)],
            start_low: alloc::vec![-1.0, -0.5],
            start_high: alloc::vec![-0.5, 0.5],
        }
    }

    pub fn four_room() -> Self {
        EnvSpec {
            name: "fourroom".into(),
            kind: EnvKind::FourRoom,
            state_dim: 2,
            action_dim: 2,
            horizon: 120,
            goal: alloc::vec![1.7, 1.7],
            goal_radius: 0.15,
            step_scale: 0.1,
            bounds: alloc::vec![(0.0, 2.0), (0.0, 2.0)],
            start_low: alloc::vec![0.1, 0.1],
            start_high: alloc::vec![0.6, 0.6],
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "pointmass2d" => Some(Self::point_mass()),
            "fourroom" => Some(Self::four_room()),
            _ => None,
        }
    }

    pub fn names() -> &'static [&'static str] {
        &["pointmass2d", "fourroom"]
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.state_dim;
        if d == 0 || self.action_dim == 0 || self.horizon == 0 {
            return Err(Error::invalid(
                "environment dimensions and horizon must be positive",
            ));
        }
        if self.goal.len() != d
            || self.bounds.len() != d
            || self.start_low.len() != d
            || self.start_high.len() != d
        {
            return Err(Error::invalid("environment vectors must match state_dim"));
        }
        if !(self.step_scale > 0.0) {
            return Err(Error::invalid("step_scale must be positive"));
        }
        for i in 0..d {
            let (lo, hi) = self.bounds[i];
            if !(lo <= self.goal[i] && self.goal[i] <= hi) {
                return Err(Error::invalid("goal outside bounds"));
            }
            if !(lo <= self.start_low[i]
                && self.start_low[i] <= self.start_high[i]
                && self.start_high[i] <= hi)
            {
                return Err(Error::invalid("start region outside bounds"));
            }
        }
        Ok(())
    }

    pub fn in_bounds(&self, state: &[f64]) -> bool {
        state.len() == self.state_dim
            && state
                .iter()
                .zip(&self.bounds)
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    pub fn clip_state(&self, state: &mut [f64]) {
        for (v, (lo, hi)) in state.iter_mut().zip(&self.bounds) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn goal_distance(&self, state: &[f64]) -> f64 {
        distance(state, &self.goal)
    }

    pub fn sample_start(&self, rng: &mut Rng) -> Vec<f64> {
        self.start_low
            .iter()
            .zip(&self.start_high)
            .map(|(lo, hi)| {
                if lo < hi {
                    rng.random_range(*lo..*hi)
                } else {
                    *lo
                }
            })
            .collect()
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// One environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

impl Transition {
    pub fn check(&self, spec: &EnvSpec) -> Result<()> {
        if self.state.len() != spec.state_dim || self.next_state.len() != spec.state_dim {
            return Err(Error::invalid("transition state dimension mismatch"));
        }
        if self.action.len() != spec.action_dim
            || self.action.iter().any(|a| !(-1.0..=1.0).contains(a))
        {
            return Err(Error::invalid("transition action outside [-1, 1]"));
        }
        if !self.reward.is_finite() {
            return Err(Error::invalid("non-finite reward"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
}

/// Advances the environment.
///
/// `step_index` is the 1-based index of this step within the episode; the
/// episode ends when the goal is reached or `step_index == horizon`.
pub fn env_step(
    spec: &EnvSpec,
    state: &[f64],
    action: &[f64],
    step_index: usize,
) -> Result<StepOutcome> {
    if action.len() != spec.action_dim {
        return Err(Error::invalid(format!(
            "action has {} entries, expected {}",
            action.len(),
            spec.action_dim
        )));
    }
    if action.iter().any(|a| !(-1.0..=1.0).contains(a)) {
        return Err(Error::invalid("action outside [-1, 1]"));
    }
    if !spec.in_bounds(state) {
        return Err(Error::invalid("state outside environment bounds"));
    }
    let mut next: Vec<f64> = state
        .iter()
        .zip(action)
        .map(|(s, a)| s + spec.step_scale * a)
        .collect();
    spec.clip_state(&mut next);
    if spec.kind == EnvKind::FourRoom {
        block_walls(state, &mut next);
    }
    let dist = spec.goal_distance(&next);
    let reached = dist < spec.goal_radius;
    let reward = match spec.kind {
        EnvKind::PointMass => -dist,
        EnvKind::FourRoom => {
            if reached {
                1.0
            } else {
                0.0
            }
        }
    };
    Ok(StepOutcome {
        next_state: next,
        reward,
        terminal: reached || step_index >= spec.horizon,
    })
}

fn in_door(coord: f64) -> bool {
    DOOR_CENTRES
        .iter()
        .any(|c| (coord - c).abs() <= DOOR_HALF_WIDTH)
}

/// Cancels motion along an axis whose wall (at 1.0) would be crossed outside a doorway.
fn block_walls(from: &[f64], to: &mut [f64]) {
    for axis in 0..2 {
        let other = 1 - axis;
        let (a, b) = (from[axis] - 1.0, to[axis] - 1.0);
        if a * b < 0.0 {
            let t = a / (a - b);
            let cross = from[other] + t * (to[other] - from[other]);
            if !in_door(cross) {
                to[axis] = from[axis];
            }
        }
    }
}

/// Maps a state to an action in `[-1, 1]^A`.
pub trait Policy {
    fn act(&self, state: &[f64], rng: &mut Rng) -> Result<Vec<f64>>;
}

impl<F: Fn(&[f64]) -> Vec<f64>> Policy for F {
    fn act(&self, state: &[f64], _rng: &mut Rng) -> Result<Vec<f64>> {
        Ok(self(state))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behavior {
    /// Scripted straight-line (or doorway-routed) motion toward the goal.
    Expert,
    /// Uniform actions on `[-1, 1]^A`.
    Random,
}

impl Behavior {
    pub fn as_str(self) -> &'static str {
        match self {
            Behavior::Expert => "expert",
            Behavior::Random => "random",
        }
    }
}

/// A behavior policy: scripted or uniform, plus clipped Gaussian action noise.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    spec: EnvSpec,
    pub behavior: Behavior,
    pub noise_scale: f64,
}

impl ScriptedPolicy {
    pub fn new(spec: &EnvSpec, behavior: Behavior, noise_scale: f64) -> Self {
        ScriptedPolicy {
            spec: spec.clone(),
            behavior,
            noise_scale,
        }
    }

    pub fn expert(spec: &EnvSpec) -> Self {
        Self::new(spec, Behavior::Expert, 0.0)
    }

    /// Expert with Gaussian action noise of standard deviation 0.3.
    pub fn medium(spec: &EnvSpec) -> Self {
        Self::new(spec, Behavior::Expert, MEDIUM_NOISE)
    }

    pub fn random(spec: &EnvSpec) -> Self {
        Self::new(spec, Behavior::Random, 0.0)
    }

    fn waypoint(&self, state: &[f64]) -> Vec<f64> {
        match self.spec.kind {
            EnvKind::PointMass => self.spec.goal.clone(),
            EnvKind::FourRoom => {
                let (right, top) = (state[0] > 1.0, state[1] > 1.0);
                match (right, top) {
                    (true, true) => self.spec.goal.clone(),
                    (false, false) => alloc::vec![1.1, 0.5],
                    (true, false) => alloc::vec![1.5, 1.1],
                    (false, true) => alloc::vec![1.1, 1.5],
                }
            }
        }
    }
}

pub const MEDIUM_NOISE: f64 = 0.3;

/// Action toward `target`, scaled uniformly so no component exceeds 1.
pub fn greedy_action(spec: &EnvSpec, state: &[f64], target: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = state
        .iter()
        .zip(target)
        .map(|(s, g)| (g - s) / spec.step_scale)
        .collect();
    let peak = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 1.0 {
        a.iter_mut().for_each(|v| *v /= peak);
    }
    a.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
    a
}

impl Policy for ScriptedPolicy {
    fn act(&self, state: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let mut a = match self.behavior {
            Behavior::Expert => greedy_action(&self.spec, state, &self.waypoint(state)),
            Behavior::Random => (0..self.spec.action_dim)
                .map(|_| rng.random_range(-1.0..=1.0))
                .collect(),
        };
        if self.noise_scale > 0.0 {
            for v in a.iter_mut() {
                *v = (*v + self.noise_scale * standard_normal(rng)).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    /// Undiscounted sum of rewards.
    pub episode_return: f64,
}

/// Runs one episode from `start`.
pub fn run_episode<P: Policy + ?Sized>(
    spec: &EnvSpec,
    policy: &P,
    start: &[f64],
    rng: &mut Rng,
) -> Result<Trajectory> {
    let mut state = start.to_vec();
    let mut transitions = Vec::new();
    let mut episode_return = 0.0;
    for step in 1..=spec.horizon {
        let action = policy.act(&state, rng)?;
        let out = env_step(spec, &state, &action, step)?;
        episode_return += out.reward;
        let terminal = out.terminal;
        transitions.push(Transition {
            state: core::mem::take(&mut state),
            action,
            reward: out.reward,
            next_state: out.next_state.clone(),
            terminal,
        });
        state = out.next_state;
        if terminal {
            break;
        }
    }
    Ok(Trajectory {
        transitions,
        episode_return,
    })
}

/// `n_episodes` episodes from start states drawn with `seed`; returns the
/// trajectories and their mean return.
pub fn rollout<P: Policy + ?Sized>(
    spec: &EnvSpec,
    policy: &P,
    seed: u64,
    n_episodes: usize,
) -> Result<(Vec<Trajectory>, f64)> {
    let mut rng = stream(seed, Stream::Eval);
    let mut out = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let start = spec.sample_start(&mut rng);
        out.push(run_episode(spec, policy, &start, &mut rng)?);
    }
    let mean = if out.is_empty() {
        0.0
    } else {
        out.iter().map(|t| t.episode_return).sum::<f64>() / out.len() as f64
    };
    Ok((out, mean))
}

/// One tier of a behavior mix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixEntry {
    pub behavior: Behavior,
    pub fraction: f64,
    pub noise_scale: f64,
}

impl MixEntry {
    pub fn expert(fraction: f64) -> Self {
        MixEntry {
            behavior: Behavior::Expert,
            fraction,
            noise_scale: 0.0,
        }
    }

    pub fn medium(fraction: f64) -> Self {
        MixEntry {
            behavior: Behavior::Expert,
            fraction,
            noise_scale: MEDIUM_NOISE,
        }
    }

    pub fn random(fraction: f64) -> Self {
        MixEntry {
            behavior: Behavior::Random,
            fraction,
            noise_scale: 0.0,
        }
    }

    /// `behavior:fraction:noise`, the form stored in dataset metadata.
    pub fn describe(&self) -> String {
        format!(
            "{}:{}:{}",
            self.behavior.as_str(),
            self.fraction,
            self.noise_scale
        )
    }

    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || {
            Error::invalid(format!(
                "bad mix entry `{s}`, expected behavior:fraction[:noise]"
            ))
        };
        let behavior = match *parts.first().ok_or_else(bad)? {
            "expert" => Behavior::Expert,
            "random" => Behavior::Random,
            "medium" => {
                return parts
                    .get(1)
                    .and_then(|f| f.parse().ok())
                    .map(MixEntry::medium)
                    .ok_or_else(bad)
            }
            _ => return Err(bad()),
        };
        let fraction = parts.get(1).and_then(|f| f.parse().ok()).ok_or_else(bad)?;
        let noise_scale = match parts.get(2) {
            Some(n) => n.parse().map_err(|_| bad())?,
            None => 0.0,
        };
        if parts.len() > 3 {
            return Err(bad());
        }
        Ok(MixEntry {
            behavior,
            fraction,
            noise_scale,
        })
    }
}

pub fn describe_mix(mix: &[MixEntry]) -> String {
    mix.iter()
        .map(MixEntry::describe)
        .collect::<Vec<_>>()
        .join(",")
}

pub fn parse_mix(s: &str) -> Result<Vec<MixEntry>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(MixEntry::parse)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub env: String,
    pub mix: String,
    pub seed: u64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    pub transitions: Vec<Transition>,
    pub meta: DatasetMeta,
    /// Number of transitions contributed by each mix tier, in mix order.
    pub tier_counts: Vec<usize>,
}

/// Splits `n` by `fractions` with the largest-remainder rule, so each count
/// is within one of `fraction * n` and the counts sum to `n`.
pub fn apportion(fractions: &[f64], n: usize) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = exact
        .iter()
        .map(|e| crate::numkernel::math::floor(*e) as usize)
        .collect();
    let mut left = n.saturating_sub(counts.iter().sum());
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.partial_cmp(&ra)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Collects exactly `n` transitions, tier by tier, from whole episodes
/// (the final episode of a tier is truncated to hit the count).
pub fn build_offline_dataset(
    spec: &EnvSpec,
    mix: &[MixEntry],
    n: usize,
    seed: u64,
) -> Result<OfflineDataset> {
    spec.validate()?;
    if mix.is_empty() {
        return Err(Error::invalid("behavior mix is empty"));
    }
    if n == 0 {
        return Err(Error::invalid("dataset size must be at least 1"));
    }
    let total: f64 = mix.iter().map(|m| m.fraction).sum();
    if mix
        .iter()
        .any(|m| !(m.fraction >= 0.0) || !(m.noise_scale >= 0.0))
        || (total - 1.0).abs() > 1e-9
    {
        return Err(Error::invalid(
            "mix fractions must be nonnegative and sum to 1",
        ));
    }
    let fractions: Vec<f64> = mix.iter().map(|m| m.fraction).collect();
    let tier_counts = apportion(&fractions, n);
    let mut rng = stream(seed, Stream::Dataset);
    let mut transitions = Vec::with_capacity(n);
    for (entry, &count) in mix.iter().zip(&tier_counts) {
        let policy = ScriptedPolicy::new(spec, entry.behavior, entry.noise_scale);
        let mut got = 0;
        while got < count {
            let start = spec.sample_start(&mut rng);
            let traj = run_episode(spec, &policy, &start, &mut rng)?;
            for t in traj.transitions.into_iter().take(count - got) {
                transitions.push(t);
                got += 1;
            }
        }
    }
    Ok(OfflineDataset {
        transitions,
        meta: DatasetMeta {
            env: spec.name.clone(),
            mix: describe_mix(mix),
            seed,
            size: n,
        },
        tier_counts,
    })
}

/// `100 * (raw - random_ref) / (expert_ref - random_ref)`.
pub fn normalized_score(raw: f64, random_ref: f64, expert_ref: f64) -> Result<f64> {
    if !(expert_ref > random_ref) {
        return Err(Error::invalid(
            "expert reference must exceed random reference",
        ));
    }
    Ok(100.0 * (raw - random_ref) / (expert_ref - random_ref))
}

/// Mean returns of the random and expert behavior policies, used as the
/// normalization endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRefs {
    pub random: f64,
    pub expert: f64,
}

impl ScoreRefs {
    pub fn measure(spec: &EnvSpec, seed: u64, n_episodes: usize) -> Result<Self> {
        let (_, random) = rollout(spec, &ScriptedPolicy::random(spec), seed, n_episodes)?;
        let (_, expert) = rollout(spec, &ScriptedPolicy::expert(spec), seed, n_episodes)?;
        Ok(ScoreRefs { random, expert })
    }

    pub fn normalize(&self, raw: f64) -> Result<f64> {
        normalized_score(raw, self.random, self.expert)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn pm() -> EnvSpec {
        EnvSpec::point_mass()
    }

    #[test]
    fn goal_is_a_fixed_point() {
        let s = pm();
        let out = env_step(&s, &[1.0, 0.0], &[0.0, 0.0], 1).unwrap();
        assert_eq!(out.next_state, vec![1.0, 0.0]);
        assert_eq!(out.reward, 0.0);
        assert!(out.terminal);
    }

    #[test]
    fn step_arithmetic() {
        let out = env_step(&pm(), &[0.0, 0.0], &[1.0, 0.0], 1).unwrap();
        assert_eq!(out.next_state, vec![0.1, 0.0]);
        assert!((out.reward + 0.9).abs() < 1e-15);
        assert!(!out.terminal);
    }

    #[test]
    fn boundary_clips() {
        let out = env_step(&pm(), &[2.0, -1.95], &[1.0, -1.0], 1).unwrap();
        assert_eq!(out.next_state, vec![2.0, -2.0]);
    }

    #[test]
    fn horizon_terminates() {
        let s = pm();
        assert!(
            env_step(&s, &[0.0, 0.0], &[0.0, 0.0], s.horizon)
                .unwrap()
                .terminal
        );
    }

    #[test]
    fn bad_actions_rejected() {
        assert!(env_step(&pm(), &[0.0, 0.0], &[1.5, 0.0], 1).is_err());
        assert!(env_step(&pm(), &[0.0, 0.0], &[f64::NAN, 0.0], 1).is_err());
        assert!(env_step(&pm(), &[0.0, 0.0], &[0.0], 1).is_err());
        assert!(env_step(&pm(), &[3.0, 0.0], &[0.0, 0.0], 1).is_err());
    }

    #[test]
    fn walls_block_outside_doorways() {
        let s = EnvSpec::four_room();
        let blocked = env_step(&s, &[0.95, 0.2], &[1.0, 0.0], 1).unwrap();
        assert_eq!(blocked.next_state, vec![0.95, 0.2]);
        let through = env_step(&s, &[0.95, 0.5], &[1.0, 0.0], 1).unwrap();
        assert!((through.next_state[0] - 1.05).abs() < 1e-12);
    }

    #[test]
    fn expert_reaches_fourroom_goal() {
        let s = EnvSpec::four_room();
        let (trajs, mean) = rollout(&s, &ScriptedPolicy::expert(&s), 3, 10).unwrap();
        assert_eq!(mean, 1.0);
        assert!(trajs.iter().all(|t| t.transitions.last().unwrap().terminal));
    }

    #[test]
    fn zero_policy_from_goal_is_one_step() {
        let mut s = pm();
        s.start_low = s.goal.clone();
        s.start_high = s.goal.clone();
        let (trajs, mean) = rollout(&s, &|_: &[f64]| vec![0.0, 0.0], 0, 1).unwrap();
        assert_eq!(trajs[0].transitions.len(), 1);
        assert_eq!(mean, 0.0);
    }

    #[test]
    fn apportion_is_exact() {
        assert_eq!(apportion(&[0.5, 0.5], 1000), vec![500, 500]);
        assert_eq!(apportion(&[1.0 / 3.0; 3], 10).iter().sum::<usize>(), 10);
        assert_eq!(apportion(&[0.25, 0.75], 3), vec![1, 2]);
    }

    #[test]
    fn mix_parsing() {
        let mix = parse_mix("expert:0.5:0, medium:0.25,random:0.25").unwrap();
        assert_eq!(mix[1], MixEntry::medium(0.25));
        assert_eq!(parse_mix(&describe_mix(&mix)).unwrap(), mix);
        assert!(parse_mix("walk:1").is_err());
    }

    #[test]
    fn empty_mix_and_bad_fractions() {
        assert!(build_offline_dataset(&pm(), &[], 10, 0).is_err());
        assert!(build_offline_dataset(&pm(), &[MixEntry::expert(0.7)], 10, 0).is_err());
    }

    #[test]
    fn normalized_score_endpoints() {
        assert_eq!(normalized_score(-80.0, -80.0, -10.0).unwrap(), 0.0);
        assert_eq!(normalized_score(-10.0, -80.0, -10.0).unwrap(), 100.0);
        assert_eq!(normalized_score(-45.0, -80.0, -10.0).unwrap(), 50.0);
        assert!(normalized_score(0.0, 1.0, 1.0).is_err());
    }
}
