//! The general symmetric AMP orbit.
//!
//! Iterates `x^{t+1} = A f(x^t; t) - B_t f(x^{t-1}; t-1)` on row vectors
//! in `R^q`, with `f` separable across rows through a
//! [`GroupNonlinearity`] and `B_t` the average Jacobian of `f(.; t)` at
//! `x^t`. The history term at `t = 0` is zero (`f(x^{-1}; -1) = 0`).

use super::nonlinearity::{validate_jacobian, GroupNonlinearity};
use crate::{Error, Result};
use ndarray::{Array2, Axis};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// A symmetric AMP instance: matrix, row groups, side information, the
/// separable nonlinearity, and the initial state.
pub struct SymmetricInstance<G: GroupNonlinearity> {
    pub matrix: Array2<f64>,
    /// Group id per row, each in `0..q`.
    pub groups: Vec<usize>,
    /// Side information `y_i`, one row per matrix row.
    pub side_info: Array2<f64>,
    /// Initial state `x^0`.
    pub initial: Array2<f64>,
    pub nonlinearity: G,
}

impl<G: GroupNonlinearity> SymmetricInstance<G> {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn q(&self) -> usize {
        self.nonlinearity.q()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        let q = self.q();
        if self.matrix.ncols() != n {
            return Err(Error::DimensionMismatch("matrix is not square".into()));
        }
        if self.groups.len() != n {
            return Err(Error::DimensionMismatch("one group id per row required".into()));
        }
        if self.side_info.dim() != (n, q) || self.initial.dim() != (n, q) {
            return Err(Error::DimensionMismatch(format!(
                "side_info/initial must be {n}x{q}"
            )));
        }
        let num_groups = self.groups.iter().max().map_or(0, |&g| g + 1);
        let mut counts = vec![0usize; num_groups];
        for &g in &self.groups {
            counts[g] += 1;
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::DimensionMismatch("every group must be nonempty".into()));
        }
        Ok(())
    }
}

/// Per-iteration record of a symmetric orbit.
#[derive(Debug, Clone)]
pub struct OrbitTrace {
    /// States `x^0 .. x^T`.
    pub xs: Vec<Array2<f64>>,
    /// Onsager matrices `B_0 .. B_{T-1}`.
    pub onsager: Vec<Array2<f64>>,
    /// Per state, per group: `(1/|C_a|) sum_{i in C_a} x_i x_i^T`.
    pub group_moments: Vec<Vec<Array2<f64>>>,
}

#[derive(Debug, Clone, Copy)]
pub struct SymmetricAmpOptions {
    /// Check user Jacobians against finite differences on a few rows at
    /// every iteration.
    pub validate_jacobians: bool,
    /// Abort once any entry exceeds this magnitude.
    pub divergence_cap: f64,
}

impl Default for SymmetricAmpOptions {
    fn default() -> Self {
        SymmetricAmpOptions { validate_jacobians: false, divergence_cap: 1e12 }
    }
}

/// Runs the orbit for `t_max` steps, returning states `x^0 .. x^{t_max}`.
pub fn symmetric_amp_run<G: GroupNonlinearity>(
    instance: &SymmetricInstance<G>,
    t_max: usize,
    options: SymmetricAmpOptions,
) -> Result<OrbitTrace> {
    instance.validate()?;
    let n = instance.n();
    let q = instance.q();
    let g = &instance.nonlinearity;

    let mut xs = vec![instance.initial.clone()];
    let mut onsager = Vec::with_capacity(t_max);
    let mut m_prev: Array2<f64> = Array2::zeros((n, q));

    for t in 0..t_max {
        let x_t = &xs[t];
        if options.validate_jacobians {
            for &i in &[0, n / 2, n - 1] {
                validate_jacobian(
                    g,
                    x_t.row(i),
                    instance.side_info.row(i),
                    instance.groups[i],
                    t,
                    i,
                )?;
            }
        }

        let mut m_t = Array2::zeros((n, q));
        let eval_row = |i: usize, out: &mut [f64]| {
            g.eval(
                x_t.row(i),
                instance.side_info.row(i),
                instance.groups[i],
                t,
                ndarray::ArrayViewMut1::from(out),
            );
        };
        {
            let slice = m_t.as_slice_mut().expect("m_t is contiguous");
            #[cfg(feature = "parallel")]
            slice.par_chunks_mut(q).enumerate().for_each(|(i, out)| eval_row(i, out));
            #[cfg(not(feature = "parallel"))]
            slice.chunks_mut(q).enumerate().for_each(|(i, out)| eval_row(i, out));
        }

        // B_t = (1/N) sum_i Jacobian of f(.; t) at x^t_i.
        let mut b_t = Array2::zeros((q, q));
        let mut jac = Array2::zeros((q, q));
        for i in 0..n {
            g.jacobian(x_t.row(i), instance.side_info.row(i), instance.groups[i], t, jac.view_mut());
            b_t += &jac;
        }
        b_t /= n as f64;

        // Rowwise B_t v_i becomes M B_t^T in matrix form.
        let x_next = instance.matrix.dot(&m_t) - m_prev.dot(&b_t.t());
        for &v in x_next.iter() {
            if !v.is_finite() || v.abs() > options.divergence_cap {
                return Err(Error::Divergence {
                    iteration: t + 1,
                    what: format!("orbit entry {v}"),
                });
            }
        }
        onsager.push(b_t);
        m_prev = m_t;
        xs.push(x_next);
    }

    let group_moments = xs.iter().map(|x| per_group_moments(x, &instance.groups, q)).collect();
    Ok(OrbitTrace { xs, onsager, group_moments })
}

fn per_group_moments(x: &Array2<f64>, groups: &[usize], q: usize) -> Vec<Array2<f64>> {
    let num_groups = groups.iter().max().map_or(0, |&g| g + 1);
    let mut sums = vec![Array2::zeros((q, q)); num_groups];
    let mut counts = vec![0usize; num_groups];
    for (i, row) in x.axis_iter(Axis(0)).enumerate() {
        let a = groups[i];
        counts[a] += 1;
        for r in 0..q {
            for c in 0..q {
                sums[a][(r, c)] += row[r] * row[c];
            }
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        *s /= c.max(1) as f64;
    }
    sums
}
