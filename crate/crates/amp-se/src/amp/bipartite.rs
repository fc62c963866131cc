//! The bipartite (rectangular) AMP orbit.
//!
//! Paired sequences on row vectors in `R^q`:
//!
//! ```text
//! u^t     = A~   e^(v^t, y; t)   - B_t h^(u^{t-1}, w; t-1)
//! v^{t+1} = A~^T h^(u^t, w; t)   - D_t e^(v^t, y; t)
//! ```
//!
//! where `e^`/`h^` apply the row nonlinearities and `B_t`, `D_t` average
//! `de/dv` resp. `dh/du` over all rows, scaled by `1/m`. The orbit starts
//! from `v^1`; the history term of the first step is zero.

use super::nonlinearity::GroupNonlinearity;
use crate::{Error, Result};
use ndarray::{Array2, ArrayViewMut1};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

const DIVERGENCE_CAP: f64 = 1e12;

/// A bipartite orbit instance. Column rows (`v`-side) carry side info `y`
/// and groups `col_groups`; matrix rows (`u`-side) carry `w` and
/// `row_groups`.
pub struct BipartiteInstance<E: GroupNonlinearity, H: GroupNonlinearity> {
    pub a_tilde: Array2<f64>,
    pub e: E,
    pub h: H,
    /// Side info for the `v`-side, `n x q`.
    pub y: Array2<f64>,
    /// Side info for the `u`-side, `m x q`.
    pub w: Array2<f64>,
    /// Initial `v^1`, `n x q`.
    pub v1: Array2<f64>,
    pub col_groups: Vec<usize>,
    pub row_groups: Vec<usize>,
}

/// Paired traces of a bipartite run.
#[derive(Debug, Clone)]
pub struct BipartiteTrace {
    /// `us[t - 1]` is `u^t`, for `t = 1 ..= T`.
    pub us: Vec<Array2<f64>>,
    /// `vs[t - 1]` is `v^t`, for `t = 1 ..= T + 1`.
    pub vs: Vec<Array2<f64>>,
    /// Correction operators `B_t`, `t = 1 ..= T`.
    pub b_ops: Vec<Array2<f64>>,
    /// Correction operators `D_t`, `t = 1 ..= T`.
    pub d_ops: Vec<Array2<f64>>,
}

fn apply_rows<G: GroupNonlinearity>(
    g: &G,
    x: &Array2<f64>,
    side: &Array2<f64>,
    groups: &[usize],
    t: usize,
) -> Array2<f64> {
    let (rows, q) = x.dim();
    let mut out = Array2::zeros((rows, q));
    let eval_row = |i: usize, buf: &mut [f64]| {
        g.eval(x.row(i), side.row(i), groups[i], t, ArrayViewMut1::from(buf));
    };
    let slice = out.as_slice_mut().expect("contiguous");
    #[cfg(feature = "parallel")]
    slice.par_chunks_mut(q).enumerate().for_each(|(i, buf)| eval_row(i, buf));
    #[cfg(not(feature = "parallel"))]
    slice.chunks_mut(q).enumerate().for_each(|(i, buf)| eval_row(i, buf));
    out
}

fn averaged_jacobian<G: GroupNonlinearity>(
    g: &G,
    x: &Array2<f64>,
    side: &Array2<f64>,
    groups: &[usize],
    t: usize,
    normalizer: f64,
) -> Array2<f64> {
    let q = x.ncols();
    let mut total = Array2::zeros((q, q));
    let mut jac = Array2::zeros((q, q));
    for i in 0..x.nrows() {
        g.jacobian(x.row(i), side.row(i), groups[i], t, jac.view_mut());
        total += &jac;
    }
    total / normalizer
}

/// Runs `t_max` paired steps from `v^1`.
pub fn bipartite_amp_run<E: GroupNonlinearity, H: GroupNonlinearity>(
    instance: &BipartiteInstance<E, H>,
    t_max: usize,
) -> Result<BipartiteTrace> {
    let (m, n) = instance.a_tilde.dim();
    let q = instance.e.q();
    if instance.h.q() != q {
        return Err(Error::DimensionMismatch("e and h disagree on q".into()));
    }
    if instance.y.dim() != (n, q) || instance.v1.dim() != (n, q) || instance.w.dim() != (m, q) {
        return Err(Error::DimensionMismatch("side info / initial shapes disagree".into()));
    }
    if instance.col_groups.len() != n || instance.row_groups.len() != m {
        return Err(Error::DimensionMismatch("group vectors disagree with matrix".into()));
    }

    let mut trace = BipartiteTrace {
        us: Vec::with_capacity(t_max),
        vs: vec![instance.v1.clone()],
        b_ops: Vec::with_capacity(t_max),
        d_ops: Vec::with_capacity(t_max),
    };
    let mut h_prev: Option<Array2<f64>> = None;

    for t in 1..=t_max {
        let v_t = trace.vs.last().expect("v^t present").clone();
        let e_t = apply_rows(&instance.e, &v_t, &instance.y, &instance.col_groups, t);
        let b_t = averaged_jacobian(
            &instance.e,
            &v_t,
            &instance.y,
            &instance.col_groups,
            t,
            m as f64,
        );
        let mut u_t = instance.a_tilde.dot(&e_t);
        if let Some(h_last) = &h_prev {
            u_t -= &h_last.dot(&b_t.t());
        }
        check_finite(&u_t, t, "u")?;

        let h_t = apply_rows(&instance.h, &u_t, &instance.w, &instance.row_groups, t);
        let d_t = averaged_jacobian(
            &instance.h,
            &u_t,
            &instance.w,
            &instance.row_groups,
            t,
            m as f64,
        );
        let v_next = instance.a_tilde.t().dot(&h_t) - e_t.dot(&d_t.t());
        check_finite(&v_next, t, "v")?;

        trace.us.push(u_t);
        trace.vs.push(v_next);
        trace.b_ops.push(b_t);
        trace.d_ops.push(d_t);
        h_prev = Some(h_t);
    }
    Ok(trace)
}

fn check_finite(x: &Array2<f64>, t: usize, what: &str) -> Result<()> {
    for &v in x.iter() {
        if !v.is_finite() || v.abs() > DIVERGENCE_CAP {
            return Err(Error::Divergence { iteration: t, what: format!("{what} entry {v}") });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amp::nonlinearity::LinearByGroup;
    use ndarray::array;

    fn zero_family(q: usize) -> LinearByGroup {
        LinearByGroup { mats: vec![Array2::zeros((q, q))] }
    }

    #[test]
    fn null_dynamics() {
        let inst = BipartiteInstance {
            a_tilde: Array2::from_elem((3, 4), 0.5),
            e: zero_family(2),
            h: zero_family(2),
            y: Array2::zeros((4, 2)),
            w: Array2::zeros((3, 2)),
            v1: Array2::ones((4, 2)),
            col_groups: vec![0; 4],
            row_groups: vec![0; 3],
        };
        let trace = bipartite_amp_run(&inst, 3).unwrap();
        for u in &trace.us {
            assert!(u.iter().all(|&v| v == 0.0));
        }
        for v in &trace.vs[1..] {
            assert!(v.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn one_step_matches_hand_arithmetic() {
        // m = n = 2, q = 2, linear e and h; the first step has no history
        // term, so u^1 = A~ (E v) rowwise and
        // v^2 = A~^T (H u^1) - (E v^1) D^T with D = (2/m) H.
        let e_mat = array![[1.0, 2.0], [0.0, 1.0]];
        let h_mat = array![[0.5, 0.0], [1.0, -1.0]];
        let a_tilde = array![[1.0, -1.0], [2.0, 0.5]];
        let v1 = array![[1.0, 0.0], [0.0, 1.0]];

        let inst = BipartiteInstance {
            a_tilde: a_tilde.clone(),
            e: LinearByGroup { mats: vec![e_mat.clone()] },
            h: LinearByGroup { mats: vec![h_mat.clone()] },
            y: Array2::zeros((2, 2)),
            w: Array2::zeros((2, 2)),
            v1: v1.clone(),
            col_groups: vec![0; 2],
            row_groups: vec![0; 2],
        };
        let trace = bipartite_amp_run(&inst, 1).unwrap();

        // ê(v) has rows (E v_k)^T, i.e. v E^T in matrix form.
        let e_v = v1.dot(&e_mat.t());
        let u1 = a_tilde.dot(&e_v);
        assert_eq!(trace.us[0], u1);

        let h_u = u1.dot(&h_mat.t());
        let d = h_mat.mapv(|x| x * 2.0 / 2.0); // (1/m) * m copies of H
        let v2 = a_tilde.t().dot(&h_u) - e_v.dot(&d.t());
        let dv = (&trace.vs[1] - &v2).iter().map(|x| x.abs()).fold(0.0f64, f64::max);
        assert!(dv < 1e-14, "deviation {dv}");
    }

    #[test]
    fn rejects_shape_mismatch() {
        let inst = BipartiteInstance {
            a_tilde: Array2::zeros((3, 4)),
            e: zero_family(2),
            h: zero_family(2),
            y: Array2::zeros((4, 2)),
            w: Array2::zeros((2, 2)), // wrong: should be 3 x 2
            v1: Array2::zeros((4, 2)),
            col_groups: vec![0; 4],
            row_groups: vec![0; 3],
        };
        assert!(bipartite_amp_run(&inst, 1).is_err());
    }
}
