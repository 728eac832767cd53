//! The myopic rule and baseline inquiry strategies.
//!
//! The myopic rule compares the communication cost against the expected
//! staleness penalty of this slot alone: the payoff lost by consuming at the
//! optimum for the old price `q_i` while billed at the true price `q_j`,
//! averaged over the kernel row. The penalty is
//!
//! ```text
//! penalty(i, j) = a * (q_j/q_i - 1 - ln(q_j/q_i)) >= 0
//! ```
//!
//! zero exactly when the price has not moved. Inquire when `c` is below the
//! expected penalty, hold otherwise; this is the same comparison as taking
//! the larger of the two instantaneous rewards.

use std::fmt;
use std::str::FromStr;

use crate::kernel::TransitionKernel;
use crate::lmp_curve::LmpCurve;
use crate::mdp::{Action, MdpState, ModelConfig, PolicyTable, ValueFunction};
use crate::{Error, Result};

/// The policy families the experiments compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    /// Greedy policy of the solved MDP.
    Optimal,
    /// Inquire when the one-slot staleness penalty exceeds the cost.
    Myopic,
    /// Inquire every slot.
    Always,
    /// Hold until the forced bound.
    Never,
    /// Inquire once the information age reaches `n`.
    Periodic(u32),
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::Optimal => write!(f, "optimal"),
            PolicyKind::Myopic => write!(f, "myopic"),
            PolicyKind::Always => write!(f, "always"),
            PolicyKind::Never => write!(f, "never"),
            PolicyKind::Periodic(n) => write!(f, "periodic:{n}"),
        }
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimal" => Ok(PolicyKind::Optimal),
            "myopic" => Ok(PolicyKind::Myopic),
            "always" => Ok(PolicyKind::Always),
            "never" => Ok(PolicyKind::Never),
            other => match other.strip_prefix("periodic:") {
                Some(n) => n
                    .parse::<u32>()
                    .map(PolicyKind::Periodic)
                    .map_err(|_| Error::invalid("policy", format!("bad period {n:?}"))),
                None => Err(Error::invalid("policy", format!("unknown kind {other:?}"))),
            },
        }
    }
}

/// Staleness penalty of consuming for price level `i` when the true level is
/// `j`: the informed payoff at `q_j` minus the stale payoff.
pub fn penalty(config: &ModelConfig, curve: &LmpCurve, i: usize, j: usize) -> f64 {
    let y = curve.price(j) / curve.price(i);
    config.utility_scale * (y - 1.0 - y.ln())
}

/// The myopic action: inquire exactly when the expected one-slot staleness
/// penalty exceeds the communication cost. Forced inquiry at the age bound.
pub fn myopic_action(
    config: &ModelConfig,
    curve: &LmpCurve,
    kernel: &TransitionKernel,
    state: MdpState,
) -> Action {
    if state.age >= kernel.horizon() {
        return Action::Inquire;
    }
    let row = kernel.row(state.age, state.level);
    let expected_penalty: f64 = row
        .iter()
        .enumerate()
        .map(|(j, &p)| p * penalty(config, curve, state.level, j))
        .sum();
    if config.comm_cost < expected_penalty {
        Action::Inquire
    } else {
        Action::Hold
    }
}

/// Builds the full action table for a policy kind. `Optimal` copies the
/// solved policy and requires `solved`.
pub fn make_policy(
    kind: PolicyKind,
    solved: Option<&ValueFunction>,
    config: &ModelConfig,
    curve: &LmpCurve,
    kernel: &TransitionKernel,
) -> Result<PolicyTable> {
    let k = curve.num_levels();
    let t = config.horizon;
    match kind {
        PolicyKind::Optimal => {
            let solved = solved.ok_or_else(|| {
                Error::invalid("policy", "optimal policy requires a solved value function")
            })?;
            if solved.policy.num_levels() != k || solved.policy.horizon() != t {
                return Err(Error::invalid(
                    "policy",
                    format!(
                        "solved policy is {}x{}, problem is {k}x{t}",
                        solved.policy.num_levels(),
                        solved.policy.horizon()
                    ),
                ));
            }
            Ok(solved.policy.clone())
        }
        PolicyKind::Myopic => PolicyTable::from_fn(k, t, |level, age| {
            myopic_action(config, curve, kernel, MdpState { level, age })
        }),
        PolicyKind::Always => make_policy(PolicyKind::Periodic(1), None, config, curve, kernel),
        PolicyKind::Never => make_policy(PolicyKind::Periodic(t), None, config, curve, kernel),
        PolicyKind::Periodic(n) => {
            if n < 1 || n > t {
                return Err(Error::invalid(
                    "policy",
                    format!("period {n} outside 1..={t}"),
                ));
            }
            PolicyTable::from_fn(k, t, |_, age| {
                if age >= n {
                    Action::Inquire
                } else {
                    Action::Hold
                }
            })
        }
    }
}
