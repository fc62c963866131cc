//! Row-separable nonlinearity families.
//!
//! An orbit nonlinearity maps each row through `g(x, y_i, a, t)` where
//! `x` is the row state, `y_i` fixed side information, `a` the row's
//! group, and `t` the iteration. Implementations supply the analytic
//! `q x q` Jacobian in `x`; the Onsager operators are built from its
//! group-weighted average every iteration.

use crate::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1, ArrayViewMut2};

pub trait GroupNonlinearity: Sync {
    /// Row dimension `q`.
    fn q(&self) -> usize;

    /// Writes `g(x, y, group, t)` into `out`.
    fn eval(
        &self,
        x: ArrayView1<'_, f64>,
        y: ArrayView1<'_, f64>,
        group: usize,
        t: usize,
        out: ArrayViewMut1<'_, f64>,
    );

    /// Writes the Jacobian `d g / d x` (rows index outputs) into `out`.
    fn jacobian(
        &self,
        x: ArrayView1<'_, f64>,
        y: ArrayView1<'_, f64>,
        group: usize,
        t: usize,
        out: ArrayViewMut2<'_, f64>,
    );
}

/// Checks the analytic Jacobian of `g` against central finite differences
/// at one point. Used by the debug mode of the orbit runners and by tests.
pub fn validate_jacobian(
    g: &dyn GroupNonlinearity,
    x: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
    group: usize,
    t: usize,
    row_for_error: usize,
) -> Result<()> {
    let q = g.q();
    let h = 1e-6;
    let mut analytic = Array2::zeros((q, q));
    g.jacobian(x, y, group, t, analytic.view_mut());
    let mut plus = Array1::zeros(q);
    let mut minus = Array1::zeros(q);
    let mut xp = x.to_owned();
    for c in 0..q {
        let x0 = x[c];
        xp[c] = x0 + h;
        g.eval(xp.view(), y, group, t, plus.view_mut());
        xp[c] = x0 - h;
        g.eval(xp.view(), y, group, t, minus.view_mut());
        xp[c] = x0;
        for r in 0..q {
            let fd = (plus[r] - minus[r]) / (2.0 * h);
            let a = analytic[(r, c)];
            if (a - fd).abs() > 1e-4 * (1.0 + a.abs()) {
                return Err(Error::JacobianMismatch { row: row_for_error, analytic: a, numeric: fd });
            }
        }
    }
    Ok(())
}

/// Per-group linear maps `g(x, y, a, t) = G_a x`; handy for closed-form
/// recursions in tests.
pub struct LinearByGroup {
    pub mats: Vec<Array2<f64>>,
}

impl GroupNonlinearity for LinearByGroup {
    fn q(&self) -> usize {
        self.mats[0].nrows()
    }

    fn eval(
        &self,
        x: ArrayView1<'_, f64>,
        _y: ArrayView1<'_, f64>,
        group: usize,
        _t: usize,
        mut out: ArrayViewMut1<'_, f64>,
    ) {
        out.assign(&self.mats[group].dot(&x));
    }

    fn jacobian(
        &self,
        _x: ArrayView1<'_, f64>,
        _y: ArrayView1<'_, f64>,
        group: usize,
        _t: usize,
        mut out: ArrayViewMut2<'_, f64>,
    ) {
        out.assign(&self.mats[group]);
    }
}

/// Scalar (`q = 1`) nonlinearity from value/derivative closures of
/// `(x, y, t)`.
pub struct ScalarNonlinearity<F, D>
where
    F: Fn(f64, f64, usize) -> f64 + Sync,
    D: Fn(f64, f64, usize) -> f64 + Sync,
{
    pub f: F,
    pub df: D,
}

impl<F, D> GroupNonlinearity for ScalarNonlinearity<F, D>
where
    F: Fn(f64, f64, usize) -> f64 + Sync,
    D: Fn(f64, f64, usize) -> f64 + Sync,
{
    fn q(&self) -> usize {
        1
    }

    fn eval(
        &self,
        x: ArrayView1<'_, f64>,
        y: ArrayView1<'_, f64>,
        _group: usize,
        t: usize,
        mut out: ArrayViewMut1<'_, f64>,
    ) {
        out[0] = (self.f)(x[0], y[0], t);
    }

    fn jacobian(
        &self,
        x: ArrayView1<'_, f64>,
        y: ArrayView1<'_, f64>,
        _group: usize,
        t: usize,
        mut out: ArrayViewMut2<'_, f64>,
    ) {
        out[(0, 0)] = (self.df)(x[0], y[0], t);
    }
}
