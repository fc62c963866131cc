//! Embedding a compressed-sensing AMP run into the symmetric orbit.
//!
//! After the change of variables `r~^t = w - r^t`,
//! `x~^{t+1} = x - (Q^t .* A)^T r^t - x^t`, the CS iteration becomes a
//! bipartite orbit on `q = L_r + L_c` dimensional rows driven by two
//! families:
//!
//! ```text
//! e(v, y, a; t) = sqrt(L_r) { eta_{t-1,a}(y(a) - v(a)) - y(a) } [ sqrt(W[r, a]) ]_r
//! h(u, w, a; t) = sqrt(L_r) ( u(a) - w(a) ) [ sqrt(W[a, c]) Q~^t[a, c] ]_c
//! ```
//!
//! with the irrelevant entries set to zero, and the bipartite orbit in
//! turn embeds into one symmetric instance on `N = m + n` rows whose
//! nonlinearity alternates: even steps apply `e` on the column side, odd
//! steps apply `h` on the row side, both scaled by
//! `sqrt((delta + 1) / delta)` with `delta = m / n`.
//!
//! Time alignment: the symmetric step at even time `2t` applies `e` with
//! time argument `t + 1`, the odd step `2t + 1` applies `h` with `t + 1`.
//! With that convention the three orbits agree exactly:
//! `x_s^{2t}` equals `v^{t+1}` on column rows and `x_s^{2t+1}` equals
//! `u^{t+1}` on matrix rows, for every finite instance.

use super::bipartite::BipartiteInstance;
use super::nonlinearity::GroupNonlinearity;
use super::symmetric::SymmetricInstance;
use crate::amp::compute_q;
use crate::ensemble::{sample_sensing_matrix_with_cap, EnsembleSpec, SensingMatrix, DEFAULT_ENTRY_CAP};
use crate::priors::Prior;
use crate::rng::substream;
use crate::se::{coupled_se_run, SeSchedule};
use crate::{Error, Result};
use ndarray::{s, Array1, Array2, ArrayView1, ArrayViewMut1, ArrayViewMut2};
use rand::Rng;
use rand_distr::StandardNormal;

const ATILDE_SALT: u64 = 0x6174_696c; // "atil"
const SIGNAL_SALT: u64 = 2;
const NOISE_SALT: u64 = 3;
const DIAG_BLOCK_SALT: u64 = 0x6469_6167; // "diag"

/// A concrete CS instance: the sensing matrix in both raw and normalized
/// form, signal, noise, measurements, and the precomputed SE schedule.
#[derive(Debug, Clone)]
pub struct CsProblem {
    pub a: SensingMatrix,
    /// `A~[i, j] = A[i, j] / sqrt(L_r W[g(i), g(j)])`, i.i.d. `N(0, 1/m)`.
    pub a_tilde: Array2<f64>,
    pub x: Array1<f64>,
    pub w: Array1<f64>,
    pub y: Array1<f64>,
    pub prior: Prior,
    pub noise_var: f64,
    pub schedule: SeSchedule,
}

impl CsProblem {
    /// Samples a full instance. The normalized matrix is drawn first and
    /// the sensing matrix derived from it, so both representations exist
    /// exactly (fresh Gaussians fill `A~` where `W` vanishes).
    pub fn sample(
        spec: &EnsembleSpec,
        prior: &Prior,
        noise_var: f64,
        t_horizon: usize,
        seed: u64,
    ) -> Result<CsProblem> {
        let (m, n) = (spec.m(), spec.n());
        if m.checked_mul(n).map_or(true, |e| e > DEFAULT_ENTRY_CAP) {
            return Err(Error::MemoryCap { rows: m, cols: n, cap: DEFAULT_ENTRY_CAP });
        }
        let w_mat = spec.coupling();
        let lr = w_mat.lr() as f64;
        let sd = (1.0 / m as f64).sqrt();
        let mut a_tilde = Array2::zeros((m, n));
        for (i, mut row) in a_tilde.rows_mut().into_iter().enumerate() {
            let mut rng = substream(seed, &[ATILDE_SALT, i as u64]);
            for v in row.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = sd * z;
            }
        }
        let mut values = a_tilde.clone();
        for (i, mut row) in values.rows_mut().into_iter().enumerate() {
            let r = spec.row_group(i);
            for (j, v) in row.iter_mut().enumerate() {
                let wrc = w_mat.get(r, spec.col_group(j));
                *v *= (lr * wrc).sqrt();
            }
        }
        let a = SensingMatrix::from_parts(values, spec.clone(), seed);

        let x = Array1::from(prior.sample(n, crate::rng::mix(seed, &[SIGNAL_SALT])));
        let mut rng = substream(seed, &[NOISE_SALT]);
        let w: Array1<f64> = (0..m)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * noise_var.sqrt())
            .collect();
        let y = a.values().dot(&x) + &w;
        let schedule = coupled_se_run(w_mat, spec.delta(), noise_var, prior, t_horizon, 0.0)?;
        Ok(CsProblem { a, a_tilde, x, w, y, prior: prior.clone(), noise_var, schedule })
    }

    /// Change-of-variables residual `r~^t = w - r^t`.
    pub fn r_tilde(&self, r_t: &Array1<f64>) -> Array1<f64> {
        &self.w - r_t
    }

    /// Change-of-variables iterate `x~^{t+1} = x - v_eff^t` where
    /// `v_eff^t = x^t + (Q^t .* A)^T r^t` is the effective observation.
    pub fn x_tilde_next(&self, effective_obs_t: &Array1<f64>) -> Array1<f64> {
        &self.x - effective_obs_t
    }
}

/// Shared tables for the `e`/`h` families: per-time effective snrs,
/// per-time `Q~` matrices, and `sqrt(W)`.
#[derive(Debug, Clone)]
struct EmbedTables {
    lr: usize,
    lc: usize,
    /// `snr_by_time[t]` is the per-column-group effective snr at time `t`.
    snr_by_time: Vec<Vec<f64>>,
    /// `q_by_time[t]` is `Q~^t`; entry 0 is unused (the sentinel time).
    q_by_time: Vec<Array2<f64>>,
    sqrt_w: Array2<f64>,
    prior: Prior,
}

impl EmbedTables {
    fn new(schedule: &SeSchedule, t_horizon: usize) -> Result<EmbedTables> {
        let w = schedule.coupling();
        let (lr, lc) = (w.lr(), w.lc());
        let mut snr_by_time = Vec::with_capacity(t_horizon + 1);
        let mut q_by_time = Vec::with_capacity(t_horizon + 1);
        for t in 0..=t_horizon {
            snr_by_time.push(schedule.effective_snr(t));
            if t == 0 {
                // Q~^0 would divide by the infinite sentinel; it is never
                // evaluated, a placeholder keeps indexing direct.
                q_by_time.push(Array2::zeros((lr, lc)));
            } else {
                q_by_time.push(compute_q(w, schedule.phi_at(t))?);
            }
        }
        Ok(EmbedTables {
            lr,
            lc,
            snr_by_time,
            q_by_time,
            sqrt_w: w.entries().mapv(f64::sqrt),
            prior: schedule.prior().clone(),
        })
    }

    fn q(&self) -> usize {
        self.lr + self.lc
    }
}

/// The `e` family: column-side nonlinearity of the bipartite orbit.
#[derive(Debug, Clone)]
pub struct EmbedE {
    tables: std::sync::Arc<EmbedTables>,
}

impl GroupNonlinearity for EmbedE {
    fn q(&self) -> usize {
        self.tables.q()
    }

    fn eval(
        &self,
        x: ArrayView1<'_, f64>,
        y: ArrayView1<'_, f64>,
        group: usize,
        t: usize,
        mut out: ArrayViewMut1<'_, f64>,
    ) {
        let tb = &self.tables;
        assert!(t >= 1 && t < tb.snr_by_time.len(), "e evaluated outside the table horizon");
        let snr = tb.snr_by_time[t - 1][group];
        let stats = tb.prior.posterior(y[group] - x[group], snr);
        let factor = (tb.lr as f64).sqrt() * (stats.mean - y[group]);
        out.fill(0.0);
        for r in 0..tb.lr {
            out[r] = factor * tb.sqrt_w[(r, group)];
        }
    }

    fn jacobian(
        &self,
        x: ArrayView1<'_, f64>,
        y: ArrayView1<'_, f64>,
        group: usize,
        t: usize,
        mut out: ArrayViewMut2<'_, f64>,
    ) {
        let tb = &self.tables;
        assert!(t >= 1 && t < tb.snr_by_time.len(), "e evaluated outside the table horizon");
        let snr = tb.snr_by_time[t - 1][group];
        let stats = tb.prior.posterior(y[group] - x[group], snr);
        // d/dv eta(y - v) = -eta'(y - v), only on input coordinate `group`.
        let factor = -(tb.lr as f64).sqrt() * stats.mean_derivative;
        out.fill(0.0);
        for r in 0..tb.lr {
            out[(r, group)] = factor * tb.sqrt_w[(r, group)];
        }
    }
}

/// The `h` family: row-side nonlinearity of the bipartite orbit.
#[derive(Debug, Clone)]
pub struct EmbedH {
    tables: std::sync::Arc<EmbedTables>,
}

impl GroupNonlinearity for EmbedH {
    fn q(&self) -> usize {
        self.tables.q()
    }

    fn eval(
        &self,
        x: ArrayView1<'_, f64>,
        y: ArrayView1<'_, f64>,
        group: usize,
        t: usize,
        mut out: ArrayViewMut1<'_, f64>,
    ) {
        let tb = &self.tables;
        assert!(t >= 1 && t < tb.q_by_time.len(), "h evaluated outside the table horizon");
        let factor = (tb.lr as f64).sqrt() * (x[group] - y[group]);
        let q_t = &tb.q_by_time[t];
        out.fill(0.0);
        for c in 0..tb.lc {
            out[c] = factor * tb.sqrt_w[(group, c)] * q_t[(group, c)];
        }
    }

    fn jacobian(
        &self,
        _x: ArrayView1<'_, f64>,
        _y: ArrayView1<'_, f64>,
        group: usize,
        t: usize,
        mut out: ArrayViewMut2<'_, f64>,
    ) {
        let tb = &self.tables;
        assert!(t >= 1 && t < tb.q_by_time.len(), "h evaluated outside the table horizon");
        let factor = (tb.lr as f64).sqrt();
        let q_t = &tb.q_by_time[t];
        out.fill(0.0);
        for c in 0..tb.lc {
            out[(c, group)] = factor * tb.sqrt_w[(group, c)] * q_t[(group, c)];
        }
    }
}

/// The symmetric instance's nonlinearity: alternates `e` (column groups,
/// even steps) and `h` (row groups, odd steps), scaled by
/// `sqrt((delta + 1) / delta)`.
#[derive(Debug, Clone)]
pub struct SpatialCouplingG {
    e: EmbedE,
    h: EmbedH,
    scale: f64,
    lr: usize,
}

impl SpatialCouplingG {
    /// `delta` here is the total aspect ratio `m / n`.
    fn new(e: EmbedE, h: EmbedH, delta_total: f64) -> SpatialCouplingG {
        let lr = e.tables.lr;
        SpatialCouplingG { e, h, scale: ((delta_total + 1.0) / delta_total).sqrt(), lr }
    }
}

impl GroupNonlinearity for SpatialCouplingG {
    fn q(&self) -> usize {
        self.e.q()
    }

    fn eval(
        &self,
        x: ArrayView1<'_, f64>,
        y: ArrayView1<'_, f64>,
        group: usize,
        t: usize,
        mut out: ArrayViewMut1<'_, f64>,
    ) {
        if t % 2 == 0 {
            if group < self.lr {
                out.fill(0.0);
            } else {
                self.e.eval(x, y, group - self.lr, t / 2 + 1, out.view_mut());
                out *= self.scale;
            }
        } else if group < self.lr {
            self.h.eval(x, y, group, (t + 1) / 2, out.view_mut());
            out *= self.scale;
        } else {
            out.fill(0.0);
        }
    }

    fn jacobian(
        &self,
        x: ArrayView1<'_, f64>,
        y: ArrayView1<'_, f64>,
        group: usize,
        t: usize,
        mut out: ArrayViewMut2<'_, f64>,
    ) {
        if t % 2 == 0 {
            if group < self.lr {
                out.fill(0.0);
            } else {
                self.e.jacobian(x, y, group - self.lr, t / 2 + 1, out.view_mut());
                out *= self.scale;
            }
        } else if group < self.lr {
            self.h.jacobian(x, y, group, (t + 1) / 2, out.view_mut());
            out *= self.scale;
        } else {
            out.fill(0.0);
        }
    }
}

/// Both orbit instances produced from one CS problem.
pub struct Embedding {
    pub symmetric: SymmetricInstance<SpatialCouplingG>,
    pub bipartite: BipartiteInstance<EmbedE, EmbedH>,
    pub m: usize,
    pub n: usize,
    pub lr: usize,
    pub lc: usize,
}

/// Builds the bipartite instance and the symmetric instance of a CS
/// problem. `seed` draws the diagonal blocks `B_1`, `B_2`.
///
/// The initial `v^1` encodes `x~^1 = x - E(X)`; its value is immaterial
/// because the first-step denoiser is constant (`snr(0) = 0`).
pub fn build_embedding(problem: &CsProblem, seed: u64) -> Result<Embedding> {
    let spec = problem.a.spec();
    let (m, n) = (spec.m(), spec.n());
    let w_mat = spec.coupling();
    let (lr, lc) = (w_mat.lr(), w_mat.lc());
    let q = lr + lc;
    let horizon = problem.schedule.horizon();
    let tables = std::sync::Arc::new(EmbedTables::new(&problem.schedule, horizon)?);
    let e = EmbedE { tables: tables.clone() };
    let h = EmbedH { tables };

    // Side info: the u-side sees the noise, the v-side the signal, each
    // at its own group coordinate; starred entries are zero.
    let mut w_side = Array2::zeros((m, q));
    for i in 0..m {
        w_side[(i, spec.row_group(i))] = problem.w[i];
    }
    let mut y_side = Array2::zeros((n, q));
    for j in 0..n {
        y_side[(j, spec.col_group(j))] = problem.x[j];
    }
    let mean = problem.prior.mean();
    let mut v1 = Array2::zeros((n, q));
    for j in 0..n {
        v1[(j, spec.col_group(j))] = problem.x[j] - mean;
    }
    let row_groups: Vec<usize> = (0..m).map(|i| spec.row_group(i)).collect();
    let col_groups: Vec<usize> = (0..n).map(|j| spec.col_group(j)).collect();

    let bipartite = BipartiteInstance {
        a_tilde: problem.a_tilde.clone(),
        e: e.clone(),
        h: h.clone(),
        y: y_side.clone(),
        w: w_side.clone(),
        v1: v1.clone(),
        col_groups: col_groups.clone(),
        row_groups: row_groups.clone(),
    };

    // A_s = sqrt(delta/(delta+1)) [[B1, A~], [A~^T, B2]] with
    // B_k = C_k + C_k^T and C_k entries N(0, 1/(2m)); delta = m/n makes
    // A_s exactly the symmetric Gaussian ensemble on N = m + n.
    let delta_total = m as f64 / n as f64;
    let big_n = m + n;
    let mut a_s = Array2::zeros((big_n, big_n));
    let sd = (1.0 / (2.0 * m as f64)).sqrt();
    let mut rng = substream(seed, &[DIAG_BLOCK_SALT, 1]);
    let mut c1 = Array2::zeros((m, m));
    for v in c1.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = sd * z;
    }
    let mut rng = substream(seed, &[DIAG_BLOCK_SALT, 2]);
    let mut c2 = Array2::zeros((n, n));
    for v in c2.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = sd * z;
    }
    let scale = (delta_total / (delta_total + 1.0)).sqrt();
    {
        let b1 = &c1 + &c1.t();
        a_s.slice_mut(s![..m, ..m]).assign(&(&b1 * scale));
        let b2 = &c2 + &c2.t();
        a_s.slice_mut(s![m.., m..]).assign(&(&b2 * scale));
        a_s.slice_mut(s![..m, m..]).assign(&(&problem.a_tilde * scale));
        a_s.slice_mut(s![m.., ..m]).assign(&(&problem.a_tilde.t() * scale));
    }

    let mut groups = row_groups;
    groups.extend(col_groups.iter().map(|&g| lr + g));
    let mut side_info = Array2::zeros((big_n, q));
    side_info.slice_mut(s![..m, ..]).assign(&w_side);
    side_info.slice_mut(s![m.., ..]).assign(&y_side);
    let mut initial = Array2::zeros((big_n, q));
    initial.slice_mut(s![m.., ..]).assign(&v1);

    let symmetric = SymmetricInstance {
        matrix: a_s,
        groups,
        side_info,
        initial,
        nonlinearity: SpatialCouplingG::new(e, h, delta_total),
    };

    Ok(Embedding { symmetric, bipartite, m, n, lr, lc })
}

/// The pieces of the general state evolution induced by the embedding:
/// group fractions, the nonlinearity, side-info samplers, and the exact
/// initial second moments.
pub struct SpatialCouplingSeParts {
    pub g: SpatialCouplingG,
    pub fractions: Vec<f64>,
    pub samplers: Vec<crate::se::SideInfoSampler>,
    pub sigma_hat0: Vec<Array2<f64>>,
    pub lr: usize,
    pub lc: usize,
    pub schedule: SeSchedule,
}

/// Builds the state-evolution-side embedding for a CS problem class
/// `(W, delta, sigma^2, prior)` without sampling any matrices.
pub fn spatial_coupling_se_parts(
    w: &crate::ensemble::CouplingMatrix,
    delta: f64,
    noise_var: f64,
    prior: &Prior,
    t_horizon: usize,
) -> Result<SpatialCouplingSeParts> {
    let (lr, lc) = (w.lr(), w.lc());
    let q = lr + lc;
    let schedule = coupled_se_run(w, delta, noise_var, prior, t_horizon, 0.0)?;
    let tables = std::sync::Arc::new(EmbedTables::new(&schedule, t_horizon)?);
    let e = EmbedE { tables: tables.clone() };
    let h = EmbedH { tables };
    // delta in the embedding scale is the total aspect ratio
    // m/n = delta * L_r / L_c.
    let delta_total = delta * lr as f64 / lc as f64;
    let g = SpatialCouplingG::new(e, h, delta_total);

    // c_a = m0/(m+n) on row groups and n0/(m+n) on column groups; only
    // the ratio delta enters.
    let denom = delta * lr as f64 + lc as f64;
    let mut fractions = vec![delta / denom; lr];
    fractions.extend(vec![1.0 / denom; lc]);

    let mut samplers: Vec<crate::se::SideInfoSampler> = Vec::with_capacity(q);
    for a in 0..lr {
        let sd = noise_var.sqrt();
        samplers.push(Box::new(move |rng, out| {
            out.fill(0.0);
            let z: f64 = rng.sample(StandardNormal);
            out[a] = sd * z;
        }));
    }
    for a in 0..lc {
        let p = prior.clone();
        samplers.push(Box::new(move |rng, out| {
            out.fill(0.0);
            out[a] = p.draw(rng);
        }));
    }

    // Initial second moments: zero on row groups; on column group a the
    // time-0 output is scale * e(., .; 1) whose denoiser is the constant
    // prior mean, so the expectation is exact.
    let var = prior.variance();
    let scale2 = (delta_total + 1.0) / delta_total;
    let mut sigma_hat0 = vec![Array2::zeros((q, q)); lr];
    for a in 0..lc {
        let mut block = Array2::zeros((q, q));
        for r in 0..lr {
            for c in 0..lr {
                block[(r, c)] =
                    scale2 * lr as f64 * (w.get(r, a) * w.get(c, a)).sqrt() * var;
            }
        }
        sigma_hat0.push(block);
    }

    Ok(SpatialCouplingSeParts { g, fractions, samplers, sigma_hat0, lr, lc, schedule })
}
