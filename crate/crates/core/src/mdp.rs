//! The inquiry MDP and its dynamic-programming solution.
//!
//! A state is `(level, age)`: the price level observed at the last inquiry
//! and how many slots ago that was. Each slot the appliance either holds
//! (consume at the stale optimum, billed at the true price) or inquires
//! (pay `c`, learn the price, consume at the informed optimum). Holding is
//! unavailable at `age == horizon`: an inquiry is forced at most every `T`
//! slots.
//!
//! The value function satisfies
//!
//! ```text
//! R(i, d) = max( r_hold(i, d)    + beta * R(i, d+1),            d < T
//!                r_inquire(i, d) + beta * sum_j K_ij(d) R(j, 1) )
//! ```
//!
//! solved by value iteration to a 1e-9 sup-norm residual, which at
//! `beta = 0.99` bounds the value error by about 1e-7, far below reward
//! scale. Ties break toward holding: when inquiring buys nothing, save the
//! communication.

use std::io::{BufRead, Write};

use crate::kernel::TransitionKernel;
use crate::lmp_curve::LmpCurve;
use crate::{Error, Result};

/// Sup-norm convergence tolerance for value iteration and policy evaluation.
pub const VALUE_TOL: f64 = 1e-9;
/// Sweep cap before reporting non-convergence.
pub const MAX_SWEEPS: usize = 100_000;

/// Scalar model parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    /// Discount factor, in (0, 1).
    pub beta: f64,
    /// Cost of one price inquiry, in $.
    pub comm_cost: f64,
    /// Forced-inquiry bound T, in slots.
    pub horizon: u32,
    /// Utility scale `a` in `U(x) = a log x`, in $.
    pub utility_scale: f64,
}

impl ModelConfig {
    pub fn new(beta: f64, comm_cost: f64, horizon: u32, utility_scale: f64) -> Result<Self> {
        if !beta.is_finite() || beta <= 0.0 || beta >= 1.0 {
            return Err(Error::invalid("beta", format!("{beta} must lie in (0, 1)")));
        }
        if comm_cost < 0.0 || !comm_cost.is_finite() {
            return Err(Error::invalid("cost", format!("{comm_cost} must be >= 0")));
        }
        if horizon < 1 {
            return Err(Error::invalid("horizon", "must be >= 1 slot"));
        }
        if utility_scale <= 0.0 || !utility_scale.is_finite() {
            return Err(Error::invalid("scale", format!("{utility_scale} must be > 0")));
        }
        Ok(ModelConfig {
            beta,
            comm_cost,
            horizon,
            utility_scale,
        })
    }

    /// Reference defaults: beta 0.99, c 10, T 10, a 100.
    pub fn defaults() -> Self {
        ModelConfig {
            beta: 0.99,
            comm_cost: 10.0,
            horizon: 10,
            utility_scale: 100.0,
        }
    }
}

/// One MDP state: price level of the last inquiry and its age in slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MdpState {
    pub level: usize,
    /// Slots since the last inquiry, in `1..=horizon`.
    pub age: u32,
}

/// Inquiry action. `Hold` consumes at the stale optimum; `Inquire` pays `c`
/// for the current price.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Hold,
    Inquire,
}

impl Action {
    pub fn as_u8(self) -> u8 {
        match self {
            Action::Hold => 0,
            Action::Inquire => 1,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Action::Hold),
            1 => Ok(Action::Inquire),
            _ => Err(Error::invalid("action", format!("{v} is not 0 or 1"))),
        }
    }
}

/// A stationary action table over all `K x T` states. Inquiry is forced at
/// `age == horizon` by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyTable {
    num_levels: usize,
    horizon: u32,
    actions: Vec<Action>,
}

impl PolicyTable {
    pub fn from_fn(
        num_levels: usize,
        horizon: u32,
        mut f: impl FnMut(usize, u32) -> Action,
    ) -> Result<Self> {
        let mut actions = Vec::with_capacity(num_levels * horizon as usize);
        for level in 0..num_levels {
            for age in 1..=horizon {
                let action = f(level, age);
                if age == horizon && action != Action::Inquire {
                    return Err(Error::invalid(
                        "policy",
                        format!("level {level} holds at age {age}; inquiry is forced at the bound"),
                    ));
                }
                actions.push(action);
            }
        }
        Ok(PolicyTable {
            num_levels,
            horizon,
            actions,
        })
    }

    pub fn num_levels(&self) -> usize {
        self.num_levels
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn action(&self, level: usize, age: u32) -> Action {
        self.actions[state_index(self.horizon, level, age)]
    }
}

pub(crate) fn state_index(horizon: u32, level: usize, age: u32) -> usize {
    debug_assert!(age >= 1 && age <= horizon);
    level * horizon as usize + (age as usize - 1)
}

/// The DP solution: values, greedy policy and convergence diagnostics.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    num_levels: usize,
    horizon: u32,
    values: Vec<f64>,
    pub policy: PolicyTable,
    /// Final sup-norm change between sweeps.
    pub residual: f64,
    pub iterations: usize,
    /// Sup-norm change per sweep, for contraction diagnostics.
    pub sup_diffs: Vec<f64>,
    /// Value at age 1 averaged over levels by region length.
    pub start_value: f64,
}

impl ValueFunction {
    pub fn value(&self, level: usize, age: u32) -> f64 {
        self.values[state_index(self.horizon, level, age)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn num_levels(&self) -> usize {
        self.num_levels
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }
}

/// Values of a fixed policy (no maximization), together with the clairvoyant
/// companion value: what an agent earning the informed payoff every slot at
/// zero cost collects along the same state process. Their difference is the
/// policy's exact cost (staleness penalties plus inquiry fees), the
/// deterministic limit of the kernel-mode episode cost.
#[derive(Debug, Clone)]
pub struct PolicyValues {
    num_levels: usize,
    horizon: u32,
    values: Vec<f64>,
    ideal_values: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// Value at age 1 averaged over levels by region length.
    pub start_value: f64,
    /// Clairvoyant companion value at the same start distribution.
    pub ideal_start_value: f64,
}

impl PolicyValues {
    pub fn value(&self, level: usize, age: u32) -> f64 {
        self.values[state_index(self.horizon, level, age)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn ideal_value(&self, level: usize, age: u32) -> f64 {
        self.ideal_values[state_index(self.horizon, level, age)]
    }

    pub fn ideal_values(&self) -> &[f64] {
        &self.ideal_values
    }

    /// Exact discounted cost at the canonical start: clairvoyant companion
    /// minus policy value. Nonnegative, since the informed payoff dominates
    /// the stale payoff slot by slot.
    pub fn start_cost(&self) -> f64 {
        self.ideal_start_value - self.start_value
    }

    pub fn num_levels(&self) -> usize {
        self.num_levels
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }
}

/// Optimal consumption under price `p`: the inverse marginal utility
/// `a / p` for logarithmic utility.
pub fn consumption(config: &ModelConfig, price: f64) -> Result<f64> {
    if price <= 0.0 || !price.is_finite() {
        return Err(Error::invalid("price", format!("{price} must be > 0")));
    }
    Ok(config.utility_scale / price)
}

/// Net payoff of consuming at the optimum for `assumed_price` while billed
/// at `true_price`: `U(x(assumed)) - true * x(assumed)`.
pub fn net_utility(config: &ModelConfig, assumed_price: f64, true_price: f64) -> Result<f64> {
    if true_price <= 0.0 || !true_price.is_finite() {
        return Err(Error::invalid("price", format!("{true_price} must be > 0")));
    }
    let x = consumption(config, assumed_price)?;
    let a = config.utility_scale;
    Ok(a * x.ln() - true_price * x)
}

/// Payoff when the assumed price is the true one; the best any consumer can
/// do at that price.
pub fn informed_payoff(config: &ModelConfig, price: f64) -> Result<f64> {
    net_utility(config, price, price)
}

fn check_state(kernel: &TransitionKernel, state: MdpState) -> Result<()> {
    if state.level >= kernel.num_levels() {
        return Err(Error::invalid(
            "level",
            format!("{} outside 0..{}", state.level, kernel.num_levels()),
        ));
    }
    if state.age < 1 || state.age > kernel.horizon() {
        return Err(Error::invalid(
            "age",
            format!("{} outside 1..={}", state.age, kernel.horizon()),
        ));
    }
    Ok(())
}

/// Expected current-slot reward for holding in `state`: consume at the stale
/// optimum, billed at the true price averaged over the kernel row.
pub fn reward_hold(
    config: &ModelConfig,
    curve: &LmpCurve,
    kernel: &TransitionKernel,
    state: MdpState,
) -> Result<f64> {
    check_state(kernel, state)?;
    let assumed = curve.price(state.level);
    let row = kernel.row(state.age, state.level);
    let mut total = 0.0;
    for (j, &p) in row.iter().enumerate() {
        total += p * net_utility(config, assumed, curve.price(j))?;
    }
    Ok(total)
}

/// Expected current-slot reward for inquiring in `state`: learn the price,
/// consume at its optimum, pay the communication cost.
pub fn reward_inquire(
    config: &ModelConfig,
    curve: &LmpCurve,
    kernel: &TransitionKernel,
    state: MdpState,
) -> Result<f64> {
    check_state(kernel, state)?;
    let row = kernel.row(state.age, state.level);
    let mut total = 0.0;
    for (j, &p) in row.iter().enumerate() {
        total += p * informed_payoff(config, curve.price(j))?;
    }
    Ok(total - config.comm_cost)
}

fn check_problem(
    config: &ModelConfig,
    curve: &LmpCurve,
    kernel: &TransitionKernel,
) -> Result<()> {
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
        return Err(Error::invalid(
            "curve",
            format!(
                "kernel has {} levels, curve has {}",
                kernel.num_levels(),
                curve.num_levels()
            ),
        ));
    }
    Ok(())
}

/// Per-state rewards for both actions, precomputed.
struct Rewards {
    k: usize,
    t: u32,
    hold: Vec<f64>,
    inquire: Vec<f64>,
}

impl Rewards {
    fn compute(config: &ModelConfig, curve: &LmpCurve, kernel: &TransitionKernel) -> Result<Self> {
        let k = curve.num_levels();
        let t = config.horizon;
        let mut hold = vec![0.0; k * t as usize];
        let mut inquire = vec![0.0; k * t as usize];
        for level in 0..k {
            for age in 1..=t {
                let state = MdpState { level, age };
                let idx = state_index(t, level, age);
                hold[idx] = reward_hold(config, curve, kernel, state)?;
                inquire[idx] = reward_inquire(config, curve, kernel, state)?;
            }
        }
        Ok(Rewards {
            k,
            t,
            hold,
            inquire,
        })
    }
}

fn inquire_value(
    kernel: &TransitionKernel,
    values: &[f64],
    t: u32,
    level: usize,
    age: u32,
    r_inquire: f64,
    beta: f64,
) -> f64 {
    let row = kernel.row(age, level);
    let continuation: f64 = row
        .iter()
        .enumerate()
        .map(|(j, &p)| p * values[state_index(t, j, 1)])
        .sum();
    r_inquire + beta * continuation
}

fn start_value_of(curve: &LmpCurve, horizon: u32, values: &[f64]) -> f64 {
    curve
        .region_weights()
        .iter()
        .enumerate()
        .map(|(i, w)| w * values[state_index(horizon, i, 1)])
        .sum()
}

/// Solves the inquiry MDP by value iteration and extracts the greedy policy.
pub fn solve(
    config: &ModelConfig,
    curve: &LmpCurve,
    kernel: &TransitionKernel,
) -> Result<ValueFunction> {
    check_problem(config, curve, kernel)?;
    let rewards = Rewards::compute(config, curve, kernel)?;
    let (k, t) = (rewards.k, rewards.t);
    let beta = config.beta;

    let mut values = vec![0.0; k * t as usize];
    let mut next = values.clone();
    let mut sup_diffs = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..MAX_SWEEPS {
        let mut diff = 0.0f64;
        for level in 0..k {
            for age in 1..=t {
                let idx = state_index(t, level, age);
                let inq = inquire_value(kernel, &values, t, level, age, rewards.inquire[idx], beta);
                let new = if age < t {
                    let hold = rewards.hold[idx] + beta * values[state_index(t, level, age + 1)];
                    hold.max(inq)
                } else {
                    inq
                };
                diff = diff.max((new - values[idx]).abs());
                next[idx] = new;
            }
        }
        std::mem::swap(&mut values, &mut next);
        sup_diffs.push(diff);
        iterations += 1;
        if diff <= VALUE_TOL {
            converged = true;
            break;
        }
    }
    let residual = *sup_diffs.last().unwrap();
    if !converged {
        return Err(Error::NoConvergence {
            iterations,
            residual,
        });
    }

    // Greedy policy from the converged values; ties break toward holding.
    let policy = PolicyTable::from_fn(k, t, |level, age| {
        if age == t {
            return Action::Inquire;
        }
        let idx = state_index(t, level, age);
        let inq = inquire_value(kernel, &values, t, level, age, rewards.inquire[idx], beta);
        let hold = rewards.hold[idx] + beta * values[state_index(t, level, age + 1)];
        if inq > hold {
            Action::Inquire
        } else {
            Action::Hold
        }
    })?;

    let start_value = start_value_of(curve, t, &values);
    Ok(ValueFunction {
        num_levels: k,
        horizon: t,
        values,
        policy,
        residual,
        iterations,
        sup_diffs,
        start_value,
    })
}

/// Exact discounted value of a fixed policy: the fixed point of its Bellman
/// operator, without maximization.
pub fn evaluate_policy(
    config: &ModelConfig,
    curve: &LmpCurve,
    kernel: &TransitionKernel,
    policy: &PolicyTable,
) -> Result<PolicyValues> {
    check_problem(config, curve, kernel)?;
    if policy.num_levels() != curve.num_levels() || policy.horizon() != config.horizon {
        return Err(Error::invalid(
            "policy",
            format!(
                "policy is {}x{}, problem is {}x{}",
                policy.num_levels(),
                policy.horizon(),
                curve.num_levels(),
                config.horizon
            ),
        ));
    }
    let rewards = Rewards::compute(config, curve, kernel)?;
    let (k, t) = (rewards.k, rewards.t);
    let beta = config.beta;

    let mut values = vec![0.0; k * t as usize];
    let mut ideal = values.clone();
    let mut next = values.clone();
    let mut next_ideal = values.clone();
    let mut iterations = 0;
    let mut residual = f64::INFINITY;

    while iterations < MAX_SWEEPS {
        let mut diff = 0.0f64;
        for level in 0..k {
            for age in 1..=t {
                let idx = state_index(t, level, age);
                // The clairvoyant earns the expected informed payoff every
                // slot, free of the inquiry fee, along the same state chain.
                let informed = rewards.inquire[idx] + config.comm_cost;
                let (new, new_ideal) = match policy.action(level, age) {
                    Action::Hold => {
                        let follow = state_index(t, level, age + 1);
                        (
                            rewards.hold[idx] + beta * values[follow],
                            informed + beta * ideal[follow],
                        )
                    }
                    Action::Inquire => (
                        inquire_value(kernel, &values, t, level, age, rewards.inquire[idx], beta),
                        inquire_value(kernel, &ideal, t, level, age, informed, beta),
                    ),
                };
                diff = diff
                    .max((new - values[idx]).abs())
                    .max((new_ideal - ideal[idx]).abs());
                next[idx] = new;
                next_ideal[idx] = new_ideal;
            }
        }
        std::mem::swap(&mut values, &mut next);
        std::mem::swap(&mut ideal, &mut next_ideal);
        iterations += 1;
        residual = diff;
        if diff <= VALUE_TOL {
            let start_value = start_value_of(curve, t, &values);
            let ideal_start_value = start_value_of(curve, t, &ideal);
            return Ok(PolicyValues {
                num_levels: k,
                horizon: t,
                values,
                ideal_values: ideal,
                residual,
                iterations,
                start_value,
                ideal_start_value,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations,
        residual,
    })
}

/// Writes policy/value tables as CSV, one row per state, possibly spanning
/// several buses.
pub fn write_policy_csv(
    entries: &[(&LmpCurve, &PolicyTable, &[f64])],
    mut out: impl Write,
) -> Result<()> {
    writeln!(out, "bus,level,price,age,action,value")?;
    for (curve, policy, values) in entries {
        for level in 0..policy.num_levels() {
            for age in 1..=policy.horizon() {
                let idx = state_index(policy.horizon(), level, age);
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    curve.bus_id(),
                    level,
                    curve.price(level),
                    age,
                    policy.action(level, age).as_u8(),
                    values[idx]
                )?;
            }
        }
    }
    Ok(())
}

/// A policy dump read back from CSV.
#[derive(Debug, Clone)]
pub struct ParsedPolicy {
    pub bus_id: String,
    pub policy: PolicyTable,
    /// Dumped values in state order.
    pub values: Vec<f64>,
}

/// Parses a CSV produced by [`write_policy_csv`].
pub fn parse_policy_csv(reader: impl BufRead) -> Result<ParsedPolicy> {
    let mut rows: Vec<(usize, u32, u8, f64)> = Vec::new();
    let mut bus_id = String::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if n == 0 {
            if line.trim() != "bus,level,price,age,action,value" {
                return Err(Error::Parse(format!("unexpected header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 6 {
            return Err(Error::Parse(format!("row {}: expected 6 cells", n + 1)));
        }
        if !bus_id.is_empty() && bus_id != cells[0] {
            return Err(Error::Parse(format!(
                "dump mixes buses {bus_id:?} and {:?}; evaluate one bus at a time",
                cells[0]
            )));
        }
        bus_id = cells[0].to_string();
        let level: usize = cells[1]
            .parse()
            .map_err(|_| Error::Parse(format!("row {}: bad level {:?}", n + 1, cells[1])))?;
        let age: u32 = cells[3]
            .parse()
            .map_err(|_| Error::Parse(format!("row {}: bad age {:?}", n + 1, cells[3])))?;
        let action: u8 = cells[4]
            .parse()
            .map_err(|_| Error::Parse(format!("row {}: bad action {:?}", n + 1, cells[4])))?;
        let value: f64 = cells[5]
            .parse()
            .map_err(|_| Error::Parse(format!("row {}: bad value {:?}", n + 1, cells[5])))?;
        rows.push((level, age, action, value));
    }
    if rows.is_empty() {
        return Err(Error::Parse("no state rows".into()));
    }
    let k = rows.iter().map(|r| r.0).max().unwrap() + 1;
    let t = rows.iter().map(|r| r.1).max().unwrap();
    if rows.len() != k * t as usize {
        return Err(Error::Parse(format!(
            "{} rows for a {k}x{t} state grid",
            rows.len()
        )));
    }
    let mut actions = vec![None; k * t as usize];
    let mut values = vec![0.0; k * t as usize];
    for (level, age, action, value) in rows {
        if level >= k || age < 1 || age > t {
            return Err(Error::Parse(format!("state ({level}, {age}) out of grid")));
        }
        let idx = state_index(t, level, age);
        if actions[idx].is_some() {
            return Err(Error::Parse(format!("duplicate state ({level}, {age})")));
        }
        actions[idx] = Some(Action::from_u8(action)?);
        values[idx] = value;
    }
    let policy = PolicyTable::from_fn(k, t, |level, age| {
        actions[state_index(t, level, age)].unwrap()
    })?;
    Ok(ParsedPolicy {
        bus_id,
        policy,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmp_curve::LmpTable;
    use crate::load_model::LoadLaw;
    use approx::assert_relative_eq;

    fn pjm_curve(bus: &str) -> LmpCurve {
        let tables = LmpTable::parse_csv_path(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../data/pjm5.csv"
        ))
        .unwrap();
        let t = tables.into_iter().find(|t| t.bus_id == bus).unwrap();
        LmpCurve::from_table(&t).unwrap()
    }

    /// Two levels: price 10 on [0, 500), price 20 on [500, 1000].
    pub(crate) fn toy_curve() -> LmpCurve {
        let t = LmpTable::new("toy", vec![0.0, 500.0, 1000.0], vec![10.0, 20.0, 20.0]).unwrap();
        LmpCurve::from_table(&t).unwrap()
    }

    fn toy_problem(theta: f64, c: f64) -> (ModelConfig, LmpCurve, TransitionKernel) {
        let curve = toy_curve();
        let config = ModelConfig::new(0.9, c, 3, 100.0).unwrap();
        let law = LoadLaw::new(theta, curve.d_max()).unwrap();
        let kernel = TransitionKernel::build(&curve, &law, 3).unwrap();
        (config, curve, kernel)
    }

    #[test]
    fn consumption_closed_form() {
        let config = ModelConfig::defaults();
        assert_eq!(consumption(&config, 10.0).unwrap(), 10.0);
        assert_eq!(consumption(&config, 100.0).unwrap(), 1.0);
        assert!(consumption(&config, 0.0).is_err());
        assert!(consumption(&config, -5.0).is_err());
    }

    #[test]
    fn net_utility_frozen_value() {
        let config = ModelConfig::defaults();
        // 100*ln(100/14) - 15*(100/14)
        assert_relative_eq!(
            net_utility(&config, 14.0, 15.0).unwrap(),
            89.46842849442613,
            max_relative = 1e-12
        );
    }

    #[test]
    fn net_utility_informed_is_a_log_a_over_p_minus_a() {
        let config = ModelConfig::defaults();
        for p in [10.0, 14.0, 16.98, 39.94] {
            let a = config.utility_scale;
            assert_relative_eq!(
                informed_payoff(&config, p).unwrap(),
                a * (a / p).ln() - a,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn config_invariants_enforced() {
        assert!(ModelConfig::new(1.0, 10.0, 10, 100.0).is_err());
        assert!(ModelConfig::new(0.0, 10.0, 10, 100.0).is_err());
        assert!(ModelConfig::new(0.99, -1.0, 10, 100.0).is_err());
        assert!(ModelConfig::new(0.99, 10.0, 0, 100.0).is_err());
        assert!(ModelConfig::new(0.99, 10.0, 10, 0.0).is_err());
    }

    #[test]
    fn reward_hold_constant_price_curve() {
        let t = LmpTable::new("flat", vec![0.0, 100.0], vec![10.0, 10.0]).unwrap();
        let curve = LmpCurve::from_table(&t).unwrap();
        let config = ModelConfig::new(0.9, 2.0, 3, 100.0).unwrap();
        let law = LoadLaw::new(50.0, 100.0).unwrap();
        let kernel = TransitionKernel::build(&curve, &law, 3).unwrap();
        for age in 1..=3 {
            let state = MdpState { level: 0, age };
            let hold = reward_hold(&config, &curve, &kernel, state).unwrap();
            let inq = reward_inquire(&config, &curve, &kernel, state).unwrap();
            let informed = informed_payoff(&config, 10.0).unwrap();
            assert_relative_eq!(hold, informed, max_relative = 1e-12);
            assert_relative_eq!(inq, informed - 2.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn rewards_degenerate_to_informed_payoff_at_tiny_theta() {
        let curve = pjm_curve("A");
        let config = ModelConfig::defaults();
        let law = LoadLaw::new(1e-8, curve.d_max()).unwrap();
        let kernel = TransitionKernel::build(&curve, &law, 10).unwrap();
        for level in 0..curve.num_levels() {
            let state = MdpState { level, age: 5 };
            let hold = reward_hold(&config, &curve, &kernel, state).unwrap();
            let informed = informed_payoff(&config, curve.price(level)).unwrap();
            assert_relative_eq!(hold, informed, max_relative = 1e-4);
        }
    }

    #[test]
    fn inquiry_dominates_holding_up_to_cost() {
        let curve = pjm_curve("A");
        let config = ModelConfig::defaults();
        let law = LoadLaw::new(200.0, curve.d_max()).unwrap();
        let kernel = TransitionKernel::build(&curve, &law, 10).unwrap();
        for level in 0..curve.num_levels() {
            for age in 1..=10 {
                let state = MdpState { level, age };
                let hold = reward_hold(&config, &curve, &kernel, state).unwrap();
                let inq = reward_inquire(&config, &curve, &kernel, state).unwrap();
                assert!(
                    inq + config.comm_cost >= hold - 1e-12,
                    "state ({level}, {age}): {inq} + c < {hold}"
                );
            }
        }
    }

    #[test]
    fn state_preconditions_enforced() {
        let (config, curve, kernel) = toy_problem(200.0, 1.0);
        assert!(reward_hold(&config, &curve, &kernel, MdpState { level: 2, age: 1 }).is_err());
        assert!(reward_hold(&config, &curve, &kernel, MdpState { level: 0, age: 0 }).is_err());
        assert!(reward_hold(&config, &curve, &kernel, MdpState { level: 0, age: 4 }).is_err());
    }

    #[test]
    fn enormous_cost_means_hold_until_forced() {
        let (config, curve, kernel) = {
            let curve = toy_curve();
            let config = ModelConfig::new(0.9, 1e6, 3, 100.0).unwrap();
            let law = LoadLaw::new(200.0, curve.d_max()).unwrap();
            let kernel = TransitionKernel::build(&curve, &law, 3).unwrap();
            (config, curve, kernel)
        };
        let solution = solve(&config, &curve, &kernel).unwrap();
        for level in 0..2 {
            for age in 1..=3 {
                let expected = if age == 3 { Action::Inquire } else { Action::Hold };
                assert_eq!(solution.policy.action(level, age), expected);
            }
        }
    }

    #[test]
    fn forced_inquiry_at_bound() {
        let (config, curve, kernel) = toy_problem(200.0, 1.0);
        let solution = solve(&config, &curve, &kernel).unwrap();
        for level in 0..2 {
            assert_eq!(solution.policy.action(level, 3), Action::Inquire);
        }
        assert!(solution.residual <= VALUE_TOL);
    }

    #[test]
    fn evaluating_the_optimal_policy_reproduces_its_values() {
        let (config, curve, kernel) = toy_problem(200.0, 1.0);
        let solution = solve(&config, &curve, &kernel).unwrap();
        let eval = evaluate_policy(&config, &curve, &kernel, &solution.policy).unwrap();
        for level in 0..2 {
            for age in 1..=3 {
                assert!(
                    (solution.value(level, age) - eval.value(level, age)).abs() < 1e-6,
                    "state ({level}, {age})"
                );
            }
        }
        assert!((solution.start_value - eval.start_value).abs() < 1e-6);
    }

    #[test]
    fn no_baseline_policy_beats_the_solution() {
        use crate::policies::{make_policy, PolicyKind};
        let curve = pjm_curve("A");
        let config = ModelConfig::defaults();
        let law = LoadLaw::new(200.0, curve.d_max()).unwrap();
        let kernel = TransitionKernel::build(&curve, &law, 10).unwrap();
        let solution = solve(&config, &curve, &kernel).unwrap();
        let kinds = [
            PolicyKind::Always,
            PolicyKind::Never,
            PolicyKind::Myopic,
            PolicyKind::Periodic(2),
            PolicyKind::Periodic(5),
        ];
        for kind in kinds {
            let table = make_policy(kind, None, &config, &curve, &kernel).unwrap();
            let eval = evaluate_policy(&config, &curve, &kernel, &table).unwrap();
            for level in 0..curve.num_levels() {
                for age in 1..=10 {
                    assert!(
                        eval.value(level, age) <= solution.value(level, age) + 1e-6,
                        "{kind} beats the solution at ({level}, {age})"
                    );
                }
            }
        }
    }

    #[test]
    fn always_inquire_matches_cramer_closed_form() {
        // Under always-inquire only age-1 states recur, so the two age-1
        // values solve (I - beta*K(1)) v = r with
        // r_i = sum_j K_ij(1) g(q_j) - c. Invert the 2x2 system directly.
        let (config, curve, kernel) = toy_problem(200.0, 1.0);
        let g: Vec<f64> = (0..2)
            .map(|j| informed_payoff(&config, curve.price(j)).unwrap())
            .collect();
        let k1 = [kernel.row(1, 0).to_vec(), kernel.row(1, 1).to_vec()];
        let r = [
            k1[0][0] * g[0] + k1[0][1] * g[1] - config.comm_cost,
            k1[1][0] * g[0] + k1[1][1] * g[1] - config.comm_cost,
        ];
        let b = config.beta;
        // A = I - beta*K(1)
        let a11 = 1.0 - b * k1[0][0];
        let a12 = -b * k1[0][1];
        let a21 = -b * k1[1][0];
        let a22 = 1.0 - b * k1[1][1];
        let det = a11 * a22 - a12 * a21;
        let v0 = (r[0] * a22 - a12 * r[1]) / det;
        let v1 = (a11 * r[1] - r[0] * a21) / det;

        let always = PolicyTable::from_fn(2, 3, |_, _| Action::Inquire).unwrap();
        let eval = evaluate_policy(&config, &curve, &kernel, &always).unwrap();
        assert!((eval.value(0, 1) - v0).abs() < 1e-6, "{} vs {v0}", eval.value(0, 1));
        assert!((eval.value(1, 1) - v1).abs() < 1e-6, "{} vs {v1}", eval.value(1, 1));

        let weights = curve.region_weights();
        let start = weights[0] * v0 + weights[1] * v1;
        assert!((eval.start_value - start).abs() < 1e-6);
    }

    #[test]
    fn sup_diffs_contract_at_beta() {
        let curve = pjm_curve("A");
        let config = ModelConfig::defaults();
        let law = LoadLaw::new(200.0, curve.d_max()).unwrap();
        let kernel = TransitionKernel::build(&curve, &law, 10).unwrap();
        let solution = solve(&config, &curve, &kernel).unwrap();
        let diffs = &solution.sup_diffs;
        let tail = &diffs[diffs.len().saturating_sub(100)..];
        for w in tail.windows(2) {
            assert!(
                w[1] <= config.beta * w[0] + 1e-11,
                "contraction violated: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn value_non_increasing_in_cost() {
        let curve = pjm_curve("B");
        let law = LoadLaw::new(200.0, curve.d_max()).unwrap();
        let kernel = TransitionKernel::build(&curve, &law, 10).unwrap();
        let mut prev: Option<ValueFunction> = None;
        for c in [0.0, 1.0, 5.0, 10.0, 50.0] {
            let config = ModelConfig::new(0.99, c, 10, 100.0).unwrap();
            let solution = solve(&config, &curve, &kernel).unwrap();
            if let Some(p) = &prev {
                for idx in 0..solution.values().len() {
                    assert!(
                        solution.values()[idx] <= p.values()[idx] + 1e-7,
                        "value rose with c at state {idx}"
                    );
                }
            }
            prev = Some(solution);
        }
    }

    #[test]
    fn non_convergence_reported_at_sweep_cap() {
        let curve = toy_curve();
        let config = ModelConfig::new(0.999999, 1.0, 3, 100.0).unwrap();
        let law = LoadLaw::new(200.0, curve.d_max()).unwrap();
        let kernel = TransitionKernel::build(&curve, &law, 3).unwrap();
        assert!(matches!(
            solve(&config, &curve, &kernel),
            Err(Error::NoConvergence { .. })
        ));
    }

    #[test]
    fn policy_csv_round_trips() {
        let (config, curve, kernel) = toy_problem(200.0, 1.0);
        let solution = solve(&config, &curve, &kernel).unwrap();
        let mut buf = Vec::new();
        write_policy_csv(&[(&curve, &solution.policy, solution.values())], &mut buf).unwrap();
        let parsed = parse_policy_csv(buf.as_slice()).unwrap();
        assert_eq!(parsed.bus_id, "toy");
        assert_eq!(parsed.policy, solution.policy);
        let eval = evaluate_policy(&config, &curve, &kernel, &parsed.policy).unwrap();
        for (a, b) in parsed.values.iter().zip(eval.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn policy_table_rejects_hold_at_bound() {
        assert!(PolicyTable::from_fn(2, 3, |_, _| Action::Hold).is_err());
    }
}
