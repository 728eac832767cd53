//! Monte Carlo policy evaluation and the cost-ratio experiments.
//!
//! Episodes start from a fresh inquiry: the load is uniform on `[0, d_max]`,
//! so the initial level follows the region-length distribution, and the
//! information is one slot old at the first decision. Two modes:
//!
//! - `RandomWalk` evolves the latent load by one truncated-Gaussian step per
//!   slot and classifies it through the curve. The clairvoyant earns the
//!   informed payoff on the *same* trajectory, so the per-episode cost
//!   (ideal minus reward) uses common random numbers and is nonnegative slot
//!   by slot.
//! - `Kernel` draws the revealed level from the cached transition matrix on
//!   inquiry and accrues exact expected rewards between inquiries, making
//!   each episode an unbiased sample of the DP value.
//!
//! The scalar value of a policy is its value at age 1 averaged over levels
//! by region length. Exact-evaluation cost is the policy's clairvoyant
//! companion value minus its own value, the expectation of the kernel-mode
//! episode cost.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kernel::TransitionKernel;
use crate::lmp_curve::LmpCurve;
use crate::load_model::LoadLaw;
use crate::mdp::{
    self, evaluate_policy, informed_payoff, net_utility, Action, MdpState, ModelConfig,
    PolicyTable,
};
use crate::policies::{make_policy, PolicyKind};
use crate::{Error, Result};

/// Discounted tail mass allowed past the episode end.
const TAIL_MASS: f64 = 1e-4;

/// How an episode produces randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    /// Latent load path by iterated one-slot truncated steps.
    RandomWalk,
    /// Level transitions drawn from the cached kernel; expected rewards
    /// between inquiries.
    Kernel,
}

/// Initial condition of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StartRule {
    /// Fresh inquiry at time zero with the load uniform on `[0, d_max]`.
    #[default]
    FreshInquiryUniformLoad,
}

/// Simulation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub episodes: usize,
    /// Slots per episode; must leave a discounted tail of at most 1e-4.
    pub slots: u32,
    pub base_seed: u64,
    pub mode: SimMode,
    pub start: StartRule,
}

impl SimConfig {
    pub fn new(episodes: usize, slots: u32, base_seed: u64, mode: SimMode) -> Self {
        SimConfig {
            episodes,
            slots,
            base_seed,
            mode,
            start: StartRule::default(),
        }
    }

    /// Fewest slots that truncate the discounted tail below 1e-4.
    pub fn min_slots(beta: f64, horizon: u32) -> u32 {
        let needed = (TAIL_MASS.ln() / beta.ln()).ceil() as u32;
        needed.max(horizon)
    }

    fn validate(&self, config: &ModelConfig) -> Result<()> {
        if self.episodes < 1 {
            return Err(Error::invalid("episodes", "must be >= 1"));
        }
        let needed = Self::min_slots(config.beta, config.horizon);
        if self.slots < needed {
            return Err(Error::invalid(
                "slots_per_episode",
                format!(
                    "{} slots leave a discounted tail above {TAIL_MASS:e} at beta {}; need >= {needed}",
                    self.slots, config.beta
                ),
            ));
        }
        Ok(())
    }
}

/// Discounted accumulators of one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStats {
    /// Discounted policy reward, inquiry costs included.
    pub discounted_reward: f64,
    /// Discounted clairvoyant reward on the same randomness.
    pub discounted_ideal: f64,
    /// `discounted_ideal - discounted_reward`.
    pub cost: f64,
    pub inquiry_count: u32,
}

/// Per-policy aggregate over all episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySummary {
    pub kind: PolicyKind,
    pub episodes: usize,
    pub mean_reward: f64,
    pub stderr_reward: f64,
    pub mean_ideal: f64,
    pub mean_cost: f64,
    pub stderr_cost: f64,
    pub mean_inquiries: f64,
}

/// Experiment output: one summary per policy plus cost ratios against the
/// first (reference) policy.
#[derive(Debug, Clone)]
pub struct ExperimentTable {
    pub rows: Vec<PolicySummary>,
    /// `mean_cost(first) / mean_cost(row)`; NaN when the denominator is zero.
    pub cost_ratios: Vec<f64>,
}

/// Compensated (Kahan) accumulator so aggregation order cannot perturb sums.
#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum
    }
}

fn mean_stderr(sum: Kahan, sum_sq: Kahan, n: usize) -> (f64, f64) {
    let mean = sum.value() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = ((sum_sq.value() - n as f64 * mean * mean) / (n as f64 - 1.0)).max(0.0);
    (mean, (var / n as f64).sqrt())
}

/// Episode driver bound to one model configuration.
pub struct Simulator<'a> {
    config: &'a ModelConfig,
    curve: &'a LmpCurve,
    law: &'a LoadLaw,
    kernel: &'a TransitionKernel,
    /// `stale[i][j]`: consume for level `i`, billed at level `j`.
    stale: Vec<Vec<f64>>,
    /// Informed payoff per level.
    informed: Vec<f64>,
    /// Expected hold reward per state, kernel mode.
    hold_reward: Vec<Vec<f64>>,
    /// Expected informed payoff per state, kernel mode clairvoyant.
    informed_expected: Vec<Vec<f64>>,
}

impl<'a> Simulator<'a> {
    pub fn new(
        config: &'a ModelConfig,
        curve: &'a LmpCurve,
        law: &'a LoadLaw,
        kernel: &'a TransitionKernel,
    ) -> Result<Self> {
        if kernel.horizon() != config.horizon {
            return Err(Error::invalid(
                "horizon",
                format!(
                    "kernel horizon {} != config horizon {}",
                    kernel.horizon(),
                    config.horizon
                ),
            ));
        }
        if kernel.num_levels() != curve.num_levels() {
            return Err(Error::invalid("curve", "kernel level count mismatch"));
        }
        if law.d_max() != curve.d_max() {
            return Err(Error::invalid("d_max", "law and curve disagree"));
        }
        let k = curve.num_levels();
        let mut stale = vec![vec![0.0; k]; k];
        let mut informed = vec![0.0; k];
        for j in 0..k {
            informed[j] = informed_payoff(config, curve.price(j))?;
            for (i, row) in stale.iter_mut().enumerate() {
                row[j] = net_utility(config, curve.price(i), curve.price(j))?;
            }
        }
        let t = config.horizon as usize;
        let mut hold_reward = vec![vec![0.0; t + 1]; k];
        let mut informed_expected = vec![vec![0.0; t + 1]; k];
        for i in 0..k {
            for age in 1..=config.horizon {
                let state = MdpState { level: i, age };
                hold_reward[i][age as usize] = mdp::reward_hold(config, curve, kernel, state)?;
                informed_expected[i][age as usize] = kernel
                    .row(age, i)
                    .iter()
                    .enumerate()
                    .map(|(j, &p)| p * informed[j])
                    .sum();
            }
        }
        Ok(Simulator {
            config,
            curve,
            law,
            kernel,
            stale,
            informed,
            hold_reward,
            informed_expected,
        })
    }

    fn check_policy(&self, policy: &PolicyTable) -> Result<()> {
        if policy.num_levels() != self.curve.num_levels()
            || policy.horizon() != self.config.horizon
        {
            return Err(Error::invalid("policy", "dimensions do not match problem"));
        }
        Ok(())
    }

    /// Runs episode `episode` of the configured batch. The random stream
    /// depends only on `(base_seed, episode)`, so policies compared on the
    /// same indices share trajectories in random-walk mode.
    pub fn run_episode(
        &self,
        policy: &PolicyTable,
        sim: &SimConfig,
        episode: u64,
    ) -> Result<EpisodeStats> {
        self.check_policy(policy)?;
        sim.validate(self.config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(sim.base_seed);
        rng.set_stream(episode);
        match sim.mode {
            SimMode::RandomWalk => self.episode_random_walk(policy, sim, &mut rng),
            SimMode::Kernel => self.episode_kernel(policy, sim, &mut rng),
        }
    }

    fn episode_random_walk(
        &self,
        policy: &PolicyTable,
        sim: &SimConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<EpisodeStats> {
        let StartRule::FreshInquiryUniformLoad = sim.start;
        let mut load = rng.gen::<f64>() * self.curve.d_max();
        let mut known = self.curve.price_of_load(load)?;
        let mut age = 1u32;
        let mut reward = Kahan::default();
        let mut ideal = Kahan::default();
        let mut discount = 1.0;
        let mut inquiries = 0u32;
        for _ in 0..sim.slots {
            load = self.law.sample_step(load, rng)?;
            let true_level = self.curve.price_of_load(load)?;
            match policy.action(known, age) {
                Action::Hold => {
                    reward.add(discount * self.stale[known][true_level]);
                    age += 1;
                }
                Action::Inquire => {
                    reward.add(discount * (self.informed[true_level] - self.config.comm_cost));
                    known = true_level;
                    age = 1;
                    inquiries += 1;
                }
            }
            ideal.add(discount * self.informed[true_level]);
            discount *= self.config.beta;
        }
        Ok(EpisodeStats {
            discounted_reward: reward.value(),
            discounted_ideal: ideal.value(),
            cost: ideal.value() - reward.value(),
            inquiry_count: inquiries,
        })
    }

    fn episode_kernel(
        &self,
        policy: &PolicyTable,
        sim: &SimConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<EpisodeStats> {
        let StartRule::FreshInquiryUniformLoad = sim.start;
        let start_load = rng.gen::<f64>() * self.curve.d_max();
        let mut level = self.curve.price_of_load(start_load)?;
        let mut age = 1u32;
        let mut reward = Kahan::default();
        let mut ideal = Kahan::default();
        let mut discount = 1.0;
        let mut inquiries = 0u32;
        for _ in 0..sim.slots {
            match policy.action(level, age) {
                Action::Hold => {
                    reward.add(discount * self.hold_reward[level][age as usize]);
                    ideal.add(discount * self.informed_expected[level][age as usize]);
                    age += 1;
                }
                Action::Inquire => {
                    let j = draw_categorical(self.kernel.row(age, level), rng);
                    reward.add(discount * (self.informed[j] - self.config.comm_cost));
                    ideal.add(discount * self.informed[j]);
                    level = j;
                    age = 1;
                    inquiries += 1;
                }
            }
            discount *= self.config.beta;
        }
        Ok(EpisodeStats {
            discounted_reward: reward.value(),
            discounted_ideal: ideal.value(),
            cost: ideal.value() - reward.value(),
            inquiry_count: inquiries,
        })
    }

    /// Runs the whole batch for one policy and aggregates.
    pub fn run_policy(
        &self,
        kind: PolicyKind,
        policy: &PolicyTable,
        sim: &SimConfig,
    ) -> Result<PolicySummary> {
        self.check_policy(policy)?;
        sim.validate(self.config)?;
        let mut reward = Kahan::default();
        let mut reward_sq = Kahan::default();
        let mut ideal = Kahan::default();
        let mut cost = Kahan::default();
        let mut cost_sq = Kahan::default();
        let mut inquiries = Kahan::default();
        for episode in 0..sim.episodes {
            let stats = self.run_episode(policy, sim, episode as u64)?;
            reward.add(stats.discounted_reward);
            reward_sq.add(stats.discounted_reward * stats.discounted_reward);
            ideal.add(stats.discounted_ideal);
            cost.add(stats.cost);
            cost_sq.add(stats.cost * stats.cost);
            inquiries.add(stats.inquiry_count as f64);
        }
        let n = sim.episodes;
        let (mean_reward, stderr_reward) = mean_stderr(reward, reward_sq, n);
        let (mean_cost, stderr_cost) = mean_stderr(cost, cost_sq, n);
        Ok(PolicySummary {
            kind,
            episodes: n,
            mean_reward,
            stderr_reward,
            mean_ideal: ideal.value() / n as f64,
            mean_cost,
            stderr_cost,
            mean_inquiries: inquiries.value() / n as f64,
        })
    }

    /// Simulates every policy on the same episode indices and reports cost
    /// ratios of the first policy over each of the others.
    pub fn run_experiment(
        &self,
        policies: &[(PolicyKind, PolicyTable)],
        sim: &SimConfig,
    ) -> Result<ExperimentTable> {
        if policies.len() < 2 {
            return Err(Error::invalid("policies", "need at least 2 to compare"));
        }
        let rows: Vec<PolicySummary> = policies
            .iter()
            .map(|(kind, table)| self.run_policy(*kind, table, sim))
            .collect::<Result<_>>()?;
        let reference = rows[0].mean_cost;
        let cost_ratios = rows
            .iter()
            .map(|row| {
                if row.mean_cost == 0.0 {
                    f64::NAN
                } else {
                    reference / row.mean_cost
                }
            })
            .collect();
        Ok(ExperimentTable { rows, cost_ratios })
    }
}

fn draw_categorical(row: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    row.len() - 1
}

/// Which model parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Theta,
    CommCost,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Theta => "theta",
            SweepAxis::CommCost => "cost",
        }
    }
}

/// How a sweep evaluates policy costs.
#[derive(Debug, Clone, Copy)]
pub enum SweepEval<'s> {
    /// Deterministic: each policy's exact cost at the canonical start state
    /// (clairvoyant companion minus policy value), the expectation of the
    /// kernel-mode episode cost.
    Exact,
    /// Monte Carlo with the given simulation settings.
    Simulate(&'s SimConfig),
}

/// Default grids bracketing the model defaults theta 200 and cost 10.
pub fn default_axis_values(axis: SweepAxis) -> Vec<f64> {
    match axis {
        SweepAxis::Theta => vec![25.0, 50.0, 100.0, 200.0, 400.0],
        SweepAxis::CommCost => vec![1.0, 2.0, 5.0, 10.0, 20.0, 40.0],
    }
}

/// One sweep cell: costs and ratios of the four standard policies.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub bus: String,
    pub axis: SweepAxis,
    pub axis_value: f64,
    pub ratio_opt_always: f64,
    pub ratio_opt_never: f64,
    pub ratio_opt_myopic: f64,
    pub cost_opt: f64,
    pub cost_always: f64,
    pub cost_never: f64,
    pub cost_myopic: f64,
    pub stderr_opt: f64,
    pub stderr_always: f64,
    pub stderr_never: f64,
    pub stderr_myopic: f64,
}

fn ratio(numerator: f64, denominator: f64) -> f64 {
    if denominator == 0.0 {
        f64::NAN
    } else {
        numerator / denominator
    }
}

/// Sweeps one axis over `values` for every curve, evaluating the optimal,
/// always, never and myopic policies in each cell.
pub fn sweep(
    axis: SweepAxis,
    values: &[f64],
    curves: &[LmpCurve],
    model: &ModelConfig,
    theta: f64,
    eval: SweepEval,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::invalid("values", "sweep needs at least one value"));
    }
    for w in values.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::invalid("values", "must be positive and ascending"));
        }
    }
    if !values[0].is_finite() || values[0] <= 0.0 {
        return Err(Error::invalid("values", "must be positive and ascending"));
    }

    let mut rows = Vec::with_capacity(curves.len() * values.len());
    for curve in curves {
        // The kernel depends on theta only; reuse it along a cost axis.
        let mut cached: Option<(f64, LoadLaw, TransitionKernel)> = None;
        for &value in values {
            let (theta_v, cost_v) = match axis {
                SweepAxis::Theta => (value, model.comm_cost),
                SweepAxis::CommCost => (theta, value),
            };
            let rebuild = match &cached {
                Some((t, _, _)) => *t != theta_v,
                None => true,
            };
            if rebuild {
                let law = LoadLaw::new(theta_v, curve.d_max())?;
                let kernel = TransitionKernel::build(curve, &law, model.horizon)?;
                cached = Some((theta_v, law, kernel));
            }
            let (_, law, kernel) = cached.as_ref().unwrap();

            let config = ModelConfig::new(model.beta, cost_v, model.horizon, model.utility_scale)?;
            let solved = mdp::solve(&config, curve, kernel)?;
            let tables = [
                (
                    PolicyKind::Optimal,
                    make_policy(PolicyKind::Optimal, Some(&solved), &config, curve, kernel)?,
                ),
                (
                    PolicyKind::Always,
                    make_policy(PolicyKind::Always, None, &config, curve, kernel)?,
                ),
                (
                    PolicyKind::Never,
                    make_policy(PolicyKind::Never, None, &config, curve, kernel)?,
                ),
                (
                    PolicyKind::Myopic,
                    make_policy(PolicyKind::Myopic, None, &config, curve, kernel)?,
                ),
            ];

            let (costs, stderrs) = match eval {
                SweepEval::Exact => {
                    let mut costs = [0.0; 4];
                    for (slot, (_, table)) in costs.iter_mut().zip(&tables) {
                        *slot = evaluate_policy(&config, curve, kernel, table)?.start_cost();
                    }
                    (costs, [0.0; 4])
                }
                SweepEval::Simulate(sim) => {
                    let simulator = Simulator::new(&config, curve, law, kernel)?;
                    let experiment = simulator.run_experiment(&tables, sim)?;
                    let mut costs = [0.0; 4];
                    let mut stderrs = [0.0; 4];
                    for (i, row) in experiment.rows.iter().enumerate() {
                        costs[i] = row.mean_cost;
                        stderrs[i] = row.stderr_cost;
                    }
                    (costs, stderrs)
                }
            };

            rows.push(SweepRow {
                bus: curve.bus_id().to_string(),
                axis,
                axis_value: value,
                ratio_opt_always: ratio(costs[0], costs[1]),
                ratio_opt_never: ratio(costs[0], costs[2]),
                ratio_opt_myopic: ratio(costs[0], costs[3]),
                cost_opt: costs[0],
                cost_always: costs[1],
                cost_never: costs[2],
                cost_myopic: costs[3],
                stderr_opt: stderrs[0],
                stderr_always: stderrs[1],
                stderr_never: stderrs[2],
                stderr_myopic: stderrs[3],
            });
        }
    }
    Ok(rows)
}

/// Writes sweep rows as CSV.
pub fn write_sweep_csv(rows: &[SweepRow], mut out: impl Write) -> Result<()> {
    writeln!(
        out,
        "bus,axis,axis_value,ratio_opt_always,ratio_opt_never,ratio_opt_myopic,\
         cost_opt,cost_always,cost_never,cost_myopic,\
         stderr_opt,stderr_always,stderr_never,stderr_myopic"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.bus,
            r.axis.name(),
            r.axis_value,
            r.ratio_opt_always,
            r.ratio_opt_never,
            r.ratio_opt_myopic,
            r.cost_opt,
            r.cost_always,
            r.cost_never,
            r.cost_myopic,
            r.stderr_opt,
            r.stderr_always,
            r.stderr_never,
            r.stderr_myopic
        )?;
    }
    Ok(())
}

/// Writes experiment tables as CSV, one row per (bus, policy).
pub fn write_experiment_csv(
    entries: &[(&str, &ExperimentTable)],
    mut out: impl Write,
) -> Result<()> {
    writeln!(
        out,
        "bus,policy,episodes,mean_reward,stderr_reward,mean_cost,stderr_cost,\
         mean_inquiries,cost_ratio_first_over_this"
    )?;
    for (bus, table) in entries {
        for (row, ratio) in table.rows.iter().zip(&table.cost_ratios) {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                bus,
                row.kind,
                row.episodes,
                row.mean_reward,
                row.stderr_reward,
                row.mean_cost,
                row.stderr_cost,
                row.mean_inquiries,
                ratio
            )?;
        }
    }
    Ok(())
}
