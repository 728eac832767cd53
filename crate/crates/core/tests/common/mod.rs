//! Independent oracles shared by the integration suites.
//!
//! Everything here recomputes expected values through routes the library does
//! not use: rejection sampling against `rand_distr::Normal`, fixed-step
//! Simpson quadrature, direct linear solves and policy enumeration. Only the
//! curve's load-to-level classification is shared with the implementation.

#![allow(dead_code)]

use priceinq::kernel::TransitionKernel;
use priceinq::lmp_curve::{LmpCurve, LmpTable};
use priceinq::mdp::{Action, ModelConfig, PolicyTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn pjm_curves() -> Vec<LmpCurve> {
    LmpTable::parse_csv_path(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/pjm5.csv"))
        .unwrap()
        .iter()
        .map(|t| LmpCurve::from_table(t).unwrap())
        .collect()
}

pub fn pjm_curve(bus: &str) -> LmpCurve {
    pjm_curves()
        .into_iter()
        .find(|c| c.bus_id() == bus)
        .unwrap()
}

/// Two levels: price 10 on [0, 500), price 20 on [500, 1000].
pub fn toy_curve() -> LmpCurve {
    let t = LmpTable::new("toy", vec![0.0, 500.0, 1000.0], vec![10.0, 20.0, 20.0]).unwrap();
    LmpCurve::from_table(&t).unwrap()
}

/// One draw from Normal(mean, var) restricted to [0, d_max] by rejection.
pub fn truncated_draw(rng: &mut ChaCha8Rng, mean: f64, var: f64, d_max: f64) -> f64 {
    let normal = Normal::new(mean, var.sqrt()).unwrap();
    loop {
        let x = normal.sample(rng);
        if (0.0..=d_max).contains(&x) {
            return x;
        }
    }
}

/// Uniform draw over the (possibly disconnected) region of level `i`.
pub fn uniform_over_region(rng: &mut ChaCha8Rng, curve: &LmpCurve, i: usize) -> f64 {
    let level = curve.level(i);
    let mut u: f64 = rng.gen::<f64>() * level.length;
    for &(lo, hi) in &level.pieces {
        let len = hi - lo;
        if u < len {
            return lo + u;
        }
        u -= len;
    }
    let last = level.pieces.last().unwrap();
    last.1
}

/// Monte Carlo estimate of one kernel row: start uniform over the region of
/// level `i`, jump once with variance `theta * delta`, classify the landing
/// level. Returns landing frequencies.
pub fn mc_kernel_row(
    curve: &LmpCurve,
    theta: f64,
    i: usize,
    delta: u32,
    samples: usize,
    seed: u64,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; curve.num_levels()];
    let var = theta * delta as f64;
    for _ in 0..samples {
        let d0 = uniform_over_region(&mut rng, curve, i);
        let d = truncated_draw(&mut rng, d0, var, curve.d_max());
        counts[curve.price_of_load(d).unwrap()] += 1;
    }
    counts
        .into_iter()
        .map(|c| c as f64 / samples as f64)
        .collect()
}

/// Fixed-step composite Simpson rule with `2n` panels.
pub fn simpson_fixed(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let m = 2 * n;
    let h = (b - a) / m as f64;
    let mut sum = f(a) + f(b);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + k as f64 * h);
    }
    sum * h / 3.0
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        assert!(a[col][col].abs() > 1e-14, "singular system");
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x
}

fn oracle_state_index(horizon: u32, level: usize, age: u32) -> usize {
    level * horizon as usize + (age as usize - 1)
}

/// Exact discounted value of a fixed policy by direct linear solve, with
/// rewards recomputed from the kernel and closed-form utilities.
pub fn policy_value_by_linear_solve(
    config: &ModelConfig,
    curve: &LmpCurve,
    kernel: &TransitionKernel,
    policy: &PolicyTable,
) -> Vec<f64> {
    let k = curve.num_levels();
    let t = config.horizon;
    let n = k * t as usize;
    let a_scale = config.utility_scale;
    let informed = |q: f64| a_scale * (a_scale / q).ln() - a_scale;
    let stale = |qi: f64, qj: f64| a_scale * (a_scale / qi).ln() - qj * (a_scale / qi);

    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for level in 0..k {
        for age in 1..=t {
            let row = oracle_state_index(t, level, age);
            a[row][row] = 1.0;
            let kr = kernel.row(age, level);
            match policy.action(level, age) {
                Action::Hold => {
                    b[row] = kr
                        .iter()
                        .enumerate()
                        .map(|(j, &p)| p * stale(curve.price(level), curve.price(j)))
                        .sum();
                    a[row][oracle_state_index(t, level, age + 1)] -= config.beta;
                }
                Action::Inquire => {
                    b[row] = kr
                        .iter()
                        .enumerate()
                        .map(|(j, &p)| p * informed(curve.price(j)))
                        .sum::<f64>()
                        - config.comm_cost;
                    for (j, &p) in kr.iter().enumerate() {
                        a[row][oracle_state_index(t, j, 1)] -= config.beta * p;
                    }
                }
            }
        }
    }
    gauss_solve(a, b)
}

/// Every stationary policy table over K levels and horizon T (inquiry forced
/// at T), enumerated by the free-state bitmask.
pub fn all_policies(k: usize, t: u32) -> Vec<PolicyTable> {
    let free = k * (t as usize - 1);
    assert!(free <= 20, "enumeration too large");
    (0..1u64 << free)
        .map(|mask| {
            PolicyTable::from_fn(k, t, |level, age| {
                if age == t {
                    return Action::Inquire;
                }
                let bit = level * (t as usize - 1) + (age as usize - 1);
                if mask >> bit & 1 == 1 {
                    Action::Inquire
                } else {
                    Action::Hold
                }
            })
            .unwrap()
        })
        .collect()
}

/// Pointwise maximum over all stationary policies of the exact value, the
/// brute-force optimum the solver must match.
pub fn enumeration_optimum(
    config: &ModelConfig,
    curve: &LmpCurve,
    kernel: &TransitionKernel,
) -> Vec<f64> {
    let k = curve.num_levels();
    let t = config.horizon;
    let mut best = vec![f64::NEG_INFINITY; k * t as usize];
    for policy in all_policies(k, t) {
        let values = policy_value_by_linear_solve(config, curve, kernel, &policy);
        for (slot, v) in best.iter_mut().zip(values) {
            *slot = slot.max(v);
        }
    }
    best
}

/// Standard error of a Monte Carlo proportion whose true value is `p`.
pub fn proportion_se(p: f64, samples: usize) -> f64 {
    (p * (1.0 - p) / samples as f64).sqrt()
}
