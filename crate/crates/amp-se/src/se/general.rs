//! The general matrix-valued state evolution.
//!
//! For a symmetric orbit with groups `a`, fractions `c_a`, side-info laws
//! `P_a` and nonlinearity `g`, the recursion is
//!
//! ```text
//! Sigma^t     = sum_b c_b SigmaHat^{t-1}_b
//! SigmaHat^t_a = E{ g(Z, Y_a, a, t) g(Z, Y_a, a, t)^T },  Z ~ N(0, Sigma^t)
//! ```
//!
//! The expectation is evaluated by Monte Carlo in fixed-size batches with
//! per-batch RNG substreams, folded in batch order, so the result is
//! deterministic for a fixed `(seed, mc_samples)` and independent of the
//! thread count. `Z` is drawn through a symmetric eigendecomposition
//! square root with negative eigenvalues clipped at zero.

use crate::amp::GroupNonlinearity;
use crate::{Error, Result};
use ndarray::{Array1, Array2};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

const GENERAL_SE_SALT: u64 = 0x6773_6500; // "gse"
const BATCH: usize = 16_384;

/// Writes the side-info vector for one draw.
pub type SideInfoSampler = Box<dyn Fn(&mut dyn RngCore, &mut [f64]) + Sync + Send>;

/// One step of the matrix recursion.
#[derive(Debug, Clone)]
pub struct GeneralSeState {
    pub t: usize,
    /// `Sigma^t`, symmetric PSD.
    pub sigma: Array2<f64>,
    /// `SigmaHat^t_a` per group.
    pub sigma_hat: Vec<Array2<f64>>,
    /// Cross-batch standard error of each `SigmaHat^t_a` entry.
    pub sigma_hat_se: Vec<Array2<f64>>,
    pub group_fractions: Vec<f64>,
}

/// Symmetric PSD square root; eigenvalues below `1e-12 * trace` clip to
/// zero, eigenvalues below `-1e-8` are an upstream error.
fn psd_sqrt(sigma: &Array2<f64>) -> Result<Array2<f64>> {
    let q = sigma.nrows();
    let dm = nalgebra::DMatrix::from_fn(q, q, |i, j| sigma[(i, j)]);
    let eig = dm.symmetric_eigen();
    let trace: f64 = (0..q).map(|i| sigma[(i, i)]).sum();
    let clip = 1e-12 * trace.abs();
    let mut vals = Vec::with_capacity(q);
    for &lambda in eig.eigenvalues.iter() {
        if lambda < -1e-8 {
            return Err(Error::NotPsd { eigenvalue: lambda });
        }
        vals.push(if lambda <= clip { 0.0 } else { lambda.sqrt() });
    }
    let mut root = Array2::zeros((q, q));
    for i in 0..q {
        for j in 0..q {
            root[(i, j)] = eig.eigenvectors[(i, j)] * vals[j];
        }
    }
    Ok(root)
}

struct BatchMoment {
    sum: Array2<f64>,
    count: usize,
}

fn batch_moment(
    g: &dyn GroupNonlinearity,
    sampler: &SideInfoSampler,
    root: &Array2<f64>,
    group: usize,
    t: usize,
    count: usize,
    seed: u64,
    batch_index: u64,
) -> BatchMoment {
    let q = g.q();
    let mut rng =
        crate::rng::substream(seed, &[GENERAL_SE_SALT, t as u64, group as u64, batch_index]);
    let mut xi = Array1::zeros(q);
    let mut z = Array1::zeros(q);
    let mut y = vec![0.0; q];
    let mut out = Array1::zeros(q);
    let mut sum = Array2::zeros((q, q));
    for _ in 0..count {
        for v in xi.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        z.assign(&root.dot(&xi));
        sampler(&mut rng, &mut y);
        g.eval(z.view(), ndarray::ArrayView1::from(&y[..]), group, t, out.view_mut());
        for r in 0..q {
            for c in 0..=r {
                sum[(r, c)] += out[r] * out[c];
            }
        }
    }
    BatchMoment { sum, count }
}

fn monte_carlo_second_moment(
    g: &dyn GroupNonlinearity,
    sampler: &SideInfoSampler,
    root: &Array2<f64>,
    group: usize,
    t: usize,
    mc_samples: usize,
    seed: u64,
) -> (Array2<f64>, Array2<f64>) {
    let q = g.q();
    let batches: Vec<(u64, usize)> = (0..mc_samples.div_ceil(BATCH))
        .map(|b| (b as u64, BATCH.min(mc_samples - b * BATCH)))
        .collect();
    let run = |&(b, count): &(u64, usize)| batch_moment(g, sampler, root, group, t, count, seed, b);
    #[cfg(feature = "parallel")]
    let results: Vec<BatchMoment> = batches.par_iter().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<BatchMoment> = batches.iter().map(run).collect();

    let mut mean = Array2::zeros((q, q));
    for b in &results {
        mean += &b.sum;
    }
    mean /= mc_samples as f64;

    // Cross-batch standard error of the mean, from per-batch means.
    let mut se = Array2::zeros((q, q));
    if results.len() > 1 {
        let nb = results.len() as f64;
        for r in 0..q {
            for c in 0..=r {
                let mut var = 0.0;
                for b in &results {
                    let bm = b.sum[(r, c)] / b.count as f64;
                    var += (bm - mean[(r, c)]) * (bm - mean[(r, c)]);
                }
                se[(r, c)] = (var / (nb * (nb - 1.0))).sqrt();
                se[(c, r)] = se[(r, c)];
            }
        }
    }
    for r in 0..q {
        for c in 0..r {
            mean[(c, r)] = mean[(r, c)];
        }
    }
    (mean, se)
}

/// Runs the matrix recursion for `t_max` steps and returns the states
/// `t = 1 ..= t_max`.
pub fn general_se_run(
    group_fractions: &[f64],
    samplers: &[SideInfoSampler],
    g: &dyn GroupNonlinearity,
    sigma_hat0: &[Array2<f64>],
    t_max: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<Vec<GeneralSeState>> {
    let groups = group_fractions.len();
    let q = g.q();
    if groups == 0 || samplers.len() != groups || sigma_hat0.len() != groups {
        return Err(Error::DimensionMismatch(
            "fractions, samplers and sigma_hat0 must describe the same groups".into(),
        ));
    }
    let total: f64 = group_fractions.iter().sum();
    if group_fractions.iter().any(|&c| c <= 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "group fractions must be positive and sum to 1, got sum {total}"
        )));
    }
    for m in sigma_hat0 {
        if m.dim() != (q, q) {
            return Err(Error::DimensionMismatch("sigma_hat0 blocks must be q x q".into()));
        }
        for i in 0..q {
            for j in 0..q {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 {
                    return Err(Error::NotPsd { eigenvalue: f64::NAN });
                }
            }
        }
    }
    if mc_samples == 0 {
        return Err(Error::Config("mc_samples must be positive".into()));
    }

    let mut states = Vec::with_capacity(t_max);
    let mut prev_hat: Vec<Array2<f64>> = sigma_hat0.to_vec();
    for t in 1..=t_max {
        let mut sigma = Array2::zeros((q, q));
        for (c, hat) in group_fractions.iter().zip(&prev_hat) {
            sigma.scaled_add(*c, hat);
        }
        let root = psd_sqrt(&sigma)?;
        let mut sigma_hat = Vec::with_capacity(groups);
        let mut sigma_hat_se = Vec::with_capacity(groups);
        for a in 0..groups {
            let (mean, se) =
                monte_carlo_second_moment(g, &samplers[a], &root, a, t, mc_samples, seed);
            sigma_hat.push(mean);
            sigma_hat_se.push(se);
        }
        prev_hat = sigma_hat.clone();
        states.push(GeneralSeState {
            t,
            sigma,
            sigma_hat,
            sigma_hat_se,
            group_fractions: group_fractions.to_vec(),
        });
    }
    Ok(states)
}

/// Writes `t, sigma_diag, index, value` rows for each state.
pub fn write_sigma_diag_csv<W: std::io::Write>(
    states: &[GeneralSeState],
    out: &mut W,
) -> Result<()> {
    writeln!(out, "t,kind,index,value")?;
    for state in states {
        for i in 0..state.sigma.nrows() {
            writeln!(
                out,
                "{},sigma_diag,{i},{}",
                state.t,
                crate::harness::fmt_float(state.sigma[(i, i)])
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amp::ScalarNonlinearity;
    use crate::amp::LinearByGroup;
    use ndarray::array;

    fn rademacher_sampler() -> SideInfoSampler {
        Box::new(|rng, out| {
            out[0] = if (rng.next_u32() & 1) == 0 { -1.0 } else { 1.0 };
        })
    }

    fn zero_sampler(q: usize) -> SideInfoSampler {
        Box::new(move |_rng, out| out[..q].fill(0.0))
    }

    #[test]
    fn identity_nonlinearity_preserves_second_moment() {
        let g = ScalarNonlinearity { f: |x, _, _| x, df: |_, _, _| 1.0 };
        let states = general_se_run(
            &[1.0],
            &[zero_sampler(1)],
            &g,
            &[array![[1.0]]],
            5,
            400_000,
            7,
        )
        .unwrap();
        for s in &states {
            assert!((s.sigma[(0, 0)] - 1.0).abs() < 0.02, "t={} sigma={}", s.t, s.sigma[(0, 0)]);
        }
    }

    #[test]
    fn side_info_only_nonlinearity_is_constant_one() {
        let g = ScalarNonlinearity { f: |_, y, _| y, df: |_, _, _| 0.0 };
        let states = general_se_run(
            &[1.0],
            &[rademacher_sampler()],
            &g,
            &[array![[1.0]]],
            4,
            100_000,
            3,
        )
        .unwrap();
        for s in &states {
            assert!((s.sigma_hat[0][(0, 0)] - 1.0).abs() < 1e-12);
            assert!((s.sigma[(0, 0)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_two_group_matches_closed_form() {
        // g_a(x) = G_a x gives Sigma^{t+1} = sum_a c_a G_a Sigma^t G_a^T.
        let g1 = array![[0.6, 0.2], [0.0, 0.5]];
        let g2 = array![[0.9, -0.1], [0.3, 0.4]];
        let g = LinearByGroup { mats: vec![g1.clone(), g2.clone()] };
        let sigma0 = array![[1.0, 0.2], [0.2, 0.8]];
        let hat0: Vec<Array2<f64>> = vec![
            g1.dot(&sigma0).dot(&g1.t()),
            g2.dot(&sigma0).dot(&g2.t()),
        ];
        let states = general_se_run(
            &[0.5, 0.5],
            &[zero_sampler(2), zero_sampler(2)],
            &g,
            &hat0,
            4,
            400_000,
            11,
        )
        .unwrap();

        let mut expect = sigma0;
        for s in &states {
            expect = 0.5 * g1.dot(&expect).dot(&g1.t()) + 0.5 * g2.dot(&expect).dot(&g2.t());
            for i in 0..2 {
                for j in 0..2 {
                    let tol = 0.02 * expect[(i, j)].abs().max(0.05);
                    assert!(
                        (s.sigma[(i, j)] - expect[(i, j)]).abs() < tol,
                        "t={} ({i},{j}): {} vs {}",
                        s.t,
                        s.sigma[(i, j)],
                        expect[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn sigma_is_exact_mixture_of_previous_hats() {
        let g = ScalarNonlinearity { f: |x, _, _| x.tanh(), df: |x, _, _| {
            let t = x.tanh();
            1.0 - t * t
        } };
        let states = general_se_run(
            &[0.25, 0.75],
            &[zero_sampler(1), zero_sampler(1)],
            &g,
            &[array![[2.0]], array![[1.0]]],
            3,
            50_000,
            5,
        )
        .unwrap();
        assert_eq!(states[0].sigma[(0, 0)], 0.25 * 2.0 + 0.75 * 1.0);
        for k in 1..states.len() {
            let expect = 0.25 * states[k - 1].sigma_hat[0][(0, 0)]
                + 0.75 * states[k - 1].sigma_hat[1][(0, 0)];
            assert_eq!(states[k].sigma[(0, 0)], expect);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let g = ScalarNonlinearity { f: |x, y, _| x.tanh() + 0.5 * y, df: |x, _, _| {
            let t = x.tanh();
            1.0 - t * t
        } };
        let run = || {
            general_se_run(&[1.0], &[rademacher_sampler()], &g, &[array![[1.5]]], 3, 70_000, 9)
                .unwrap()
        };
        let a = run();
        let b = run();
        for (sa, sb) in a.iter().zip(&b) {
            assert_eq!(sa.sigma, sb.sigma);
            assert_eq!(sa.sigma_hat[0], sb.sigma_hat[0]);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = ScalarNonlinearity { f: |x, _, _| x, df: |_, _, _| 1.0 };
        // fractions do not sum to one
        assert!(general_se_run(&[0.4], &[zero_sampler(1)], &g, &[array![[1.0]]], 2, 100, 1)
            .is_err());
        // asymmetric sigma_hat0
        let bad = array![[1.0, 0.5], [0.0, 1.0]];
        let g2 = LinearByGroup { mats: vec![Array2::eye(2)] };
        assert!(general_se_run(&[1.0], &[zero_sampler(2)], &g2, &[bad], 2, 100, 1).is_err());
    }

    #[test]
    fn psd_sqrt_reproduces_covariance() {
        let sigma = array![[2.0, 0.3, 0.0], [0.3, 1.0, -0.2], [0.0, -0.2, 0.5]];
        let root = psd_sqrt(&sigma).unwrap();
        let recon = root.dot(&root.t());
        for (a, b) in recon.iter().zip(sigma.iter()) {
            approx::assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn psd_sqrt_clips_tiny_negatives_and_rejects_real_ones() {
        let nearly = array![[1.0, 1.0], [1.0, 1.0 - 1e-13]];
        assert!(psd_sqrt(&nearly).is_ok());
        let indefinite = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(psd_sqrt(&indefinite), Err(Error::NotPsd { .. })));
    }
}
