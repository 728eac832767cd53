//! Price-level transition matrices.
//!
//! `entry(delta, i, j)` is the probability that the price level is `j` a gap
//! of `delta` slots after it was observed to be `i`: the load starts uniform
//! on the region of level `i`, evolves by the truncated-Gaussian law, and is
//! classified by the region it lands in. The inner integral over the target
//! region is a difference of conditional CDF values (exact per piece), which
//! reduces the double integral to a 1-D quadrature over the source region.

use std::io::Write;

use crate::lmp_curve::LmpCurve;
use crate::load_model::LoadLaw;
use crate::quad::adaptive_simpson;
use crate::{Error, Result};

/// Quadrature tolerance for each connected piece of the outer integral.
const QUAD_TOL: f64 = 1e-9;
/// Row sums further than this from 1 signal a quadrature or curve bug.
const ROW_SUM_TOL: f64 = 1e-8;

/// Probability of moving from level `i` to level `j` over a gap of `delta`
/// slots.
pub fn kernel_entry(
    curve: &LmpCurve,
    law: &LoadLaw,
    i: usize,
    j: usize,
    delta: u32,
) -> Result<f64> {
    entry_with_tol(curve, law, i, j, delta, QUAD_TOL)
}

pub(crate) fn entry_with_tol(
    curve: &LmpCurve,
    law: &LoadLaw,
    i: usize,
    j: usize,
    delta: u32,
    tol: f64,
) -> Result<f64> {
    let k = curve.num_levels();
    if i >= k || j >= k {
        return Err(Error::invalid(
            "level",
            format!("index ({i}, {j}) outside 0..{k}"),
        ));
    }
    if delta < 1 {
        return Err(Error::invalid("delta", "gap must be >= 1 slot"));
    }
    if law.d_max() != curve.d_max() {
        return Err(Error::invalid(
            "d_max",
            format!("law d_max {} != curve d_max {}", law.d_max(), curve.d_max()),
        ));
    }

    let source = curve.level(i);
    let target_pieces = curve.level(j).pieces.clone();
    let mass_in_target = |d0: f64| -> f64 {
        let conditional = law.conditional(d0, delta);
        target_pieces
            .iter()
            .map(|&(lo, hi)| conditional.mass(lo, hi))
            .sum()
    };

    let mut integral = 0.0;
    for &(lo, hi) in &source.pieces {
        integral += adaptive_simpson(&mass_in_target, lo, hi, tol)?;
    }
    Ok(integral / source.length)
}

/// The matrix family `K(delta)` for `delta = 1..=horizon`, cached.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    num_levels: usize,
    horizon: u32,
    /// One row-major `K x K` matrix per gap, index `delta - 1`.
    matrices: Vec<Vec<f64>>,
}

impl TransitionKernel {
    /// Computes and caches all matrices. Rows are renormalized by their sum;
    /// a sum further than 1e-8 from 1 is an error.
    pub fn build(curve: &LmpCurve, law: &LoadLaw, horizon: u32) -> Result<Self> {
        if horizon < 1 {
            return Err(Error::invalid("horizon", "must be >= 1"));
        }
        let k = curve.num_levels();
        let mut matrices = Vec::with_capacity(horizon as usize);
        for delta in 1..=horizon {
            let mut matrix = vec![0.0; k * k];
            for i in 0..k {
                let row = &mut matrix[i * k..(i + 1) * k];
                for (j, cell) in row.iter_mut().enumerate() {
                    *cell = kernel_entry(curve, law, i, j, delta)?;
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() >= ROW_SUM_TOL {
                    return Err(Error::RowSumDeviation { row: i, delta, sum });
                }
                for cell in row.iter_mut() {
                    *cell /= sum;
                }
            }
            matrices.push(matrix);
        }
        Ok(TransitionKernel {
            num_levels: k,
            horizon,
            matrices,
        })
    }

    pub fn num_levels(&self) -> usize {
        self.num_levels
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn entry(&self, delta: u32, i: usize, j: usize) -> f64 {
        self.row(delta, i)[j]
    }

    /// Row `i` of the matrix for gap `delta`.
    pub fn row(&self, delta: u32, i: usize) -> &[f64] {
        debug_assert!((1..=self.horizon).contains(&delta));
        let k = self.num_levels;
        &self.matrices[(delta - 1) as usize][i * k..(i + 1) * k]
    }

    /// Long-format dump `bus,delta,i,j,prob`, one row per entry. Set
    /// `header` when this is the first kernel written to the stream.
    pub fn write_long_csv(&self, bus: &str, header: bool, mut out: impl Write) -> Result<()> {
        if header {
            writeln!(out, "bus,delta,i,j,prob")?;
        }
        for delta in 1..=self.horizon {
            for i in 0..self.num_levels {
                for j in 0..self.num_levels {
                    writeln!(out, "{bus},{delta},{i},{j},{}", self.entry(delta, i, j))?;
                }
            }
        }
        Ok(())
    }

    /// Matrix-format dump of a single gap: header `i,j0..`, one row per
    /// source level.
    pub fn write_matrix_csv(&self, delta: u32, mut out: impl Write) -> Result<()> {
        write!(out, "i")?;
        for j in 0..self.num_levels {
            write!(out, ",j{j}")?;
        }
        writeln!(out)?;
        for i in 0..self.num_levels {
            write!(out, "{i}")?;
            for j in 0..self.num_levels {
                write!(out, ",{}", self.entry(delta, i, j))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}
