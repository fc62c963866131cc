//! Scalar signal priors with exact posterior statistics.
//!
//! A [`Prior`] is a mixture of point masses ("atoms") and Gaussian
//! components. For this family the posterior under a Gaussian-noise
//! observation `Y = X + snr^{-1/2} Z` is available in closed form:
//! atoms contribute reweighted point masses, Gaussian components combine
//! conjugately. That gives the Bayes denoiser `eta`, its derivative
//! `eta' = snr * Var(X | Y = y)`, and — after one outer quadrature over
//! the observation — `mmse(snr)`.

use crate::quad::GaussHermite;
use crate::rng::substream;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

const WEIGHT_TOL: f64 = 1e-12;
const SAMPLE_SALT: u64 = 0x7072_696f_7273; // stream tag for prior sampling

/// Default node count for the outer observation quadrature in `mmse`.
pub const DEFAULT_QUAD_NODES: usize = 127;

/// A mixture law: point masses plus Gaussian components.
///
/// Serialized form matches the config fragment
/// `{"atoms": [[value, weight], ...], "gaussians": [[weight, mean, variance], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPrior", into = "RawPrior")]
pub struct Prior {
    atoms: Vec<(f64, f64)>,
    gaussians: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawPrior {
    #[serde(default)]
    atoms: Vec<(f64, f64)>,
    #[serde(default)]
    gaussians: Vec<(f64, f64, f64)>,
}

impl TryFrom<RawPrior> for Prior {
    type Error = Error;
    fn try_from(raw: RawPrior) -> Result<Prior> {
        Prior::new(raw.atoms, raw.gaussians)
    }
}

impl From<Prior> for RawPrior {
    fn from(p: Prior) -> RawPrior {
        RawPrior { atoms: p.atoms, gaussians: p.gaussians }
    }
}

/// Posterior statistics of `X` given one observation `Y = X + snr^{-1/2} Z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorStats {
    /// Posterior mean, the denoiser value `eta(y; snr)`.
    pub mean: f64,
    /// Posterior variance `Var(X | Y = y)`.
    pub variance: f64,
    /// Derivative of the denoiser in `y`; equals `snr * variance`.
    pub mean_derivative: f64,
}

impl Prior {
    /// Builds a prior from atom `(value, weight)` pairs and Gaussian
    /// `(weight, mean, variance)` triples, validating the mixture.
    pub fn new(atoms: Vec<(f64, f64)>, gaussians: Vec<(f64, f64, f64)>) -> Result<Prior> {
        if atoms.is_empty() && gaussians.is_empty() {
            return Err(Error::InvalidPrior("mixture has no components".into()));
        }
        let mut total = 0.0;
        for &(v, w) in &atoms {
            if !v.is_finite() || !w.is_finite() {
                return Err(Error::InvalidPrior(format!("non-finite atom ({v}, {w})")));
            }
            if w < 0.0 {
                return Err(Error::InvalidPrior(format!("negative atom weight {w}")));
            }
            total += w;
        }
        for &(w, mu, var) in &gaussians {
            if !w.is_finite() || !mu.is_finite() || !var.is_finite() {
                return Err(Error::InvalidPrior(format!(
                    "non-finite gaussian component ({w}, {mu}, {var})"
                )));
            }
            if w < 0.0 {
                return Err(Error::InvalidPrior(format!("negative gaussian weight {w}")));
            }
            if var <= 0.0 {
                return Err(Error::InvalidPrior(format!("gaussian variance {var} must be positive")));
            }
            total += w;
        }
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidPrior(format!("weights sum to {total}, expected 1")));
        }
        for i in 0..atoms.len() {
            for j in i + 1..atoms.len() {
                if atoms[i].0 == atoms[j].0 {
                    return Err(Error::InvalidPrior(format!("duplicate atom value {}", atoms[i].0)));
                }
            }
        }
        Ok(Prior { atoms, gaussians })
    }

    /// Standard normal prior.
    pub fn unit_gaussian() -> Prior {
        Prior::new(vec![], vec![(1.0, 0.0, 1.0)]).unwrap()
    }

    /// `N(mean, var)` prior.
    pub fn gaussian(mean: f64, var: f64) -> Result<Prior> {
        Prior::new(vec![], vec![(1.0, mean, var)])
    }

    /// Sparse Bernoulli-Gaussian law: an atom at zero with weight
    /// `1 - eps` and a Gaussian `N(mean, var)` with weight `eps`.
    pub fn bernoulli_gaussian(eps: f64, mean: f64, var: f64) -> Result<Prior> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::InvalidPrior(format!("eps {eps} outside [0, 1]")));
        }
        if eps == 0.0 {
            return Prior::new(vec![(0.0, 1.0)], vec![]);
        }
        if eps == 1.0 {
            return Prior::gaussian(mean, var);
        }
        Prior::new(vec![(0.0, 1.0 - eps)], vec![(eps, mean, var)])
    }

    /// Equal-weight atoms at `-1` and `+1`.
    pub fn symmetric_binary() -> Prior {
        Prior::new(vec![(-1.0, 0.5), (1.0, 0.5)], vec![]).unwrap()
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn gaussians(&self) -> &[(f64, f64, f64)] {
        &self.gaussians
    }

    /// Mixture mean.
    pub fn mean(&self) -> f64 {
        let a: f64 = self.atoms.iter().map(|&(v, w)| w * v).sum();
        let g: f64 = self.gaussians.iter().map(|&(w, mu, _)| w * mu).sum();
        a + g
    }

    /// Mixture second moment.
    pub fn second_moment(&self) -> f64 {
        let a: f64 = self.atoms.iter().map(|&(v, w)| w * v * v).sum();
        let g: f64 = self.gaussians.iter().map(|&(w, mu, var)| w * (var + mu * mu)).sum();
        a + g
    }

    /// Mixture variance, exact from moments.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        (self.second_moment() - m * m).max(0.0)
    }

    /// Upper Rényi information dimension: the weight of the absolutely
    /// continuous part, i.e. the total Gaussian weight.
    pub fn renyi_upper_dimension(&self) -> f64 {
        self.gaussians.iter().map(|&(w, _, _)| w).sum()
    }

    /// Posterior statistics of `X` given `Y = X + snr^{-1/2} Z = y`.
    ///
    /// At `snr = 0` the observation is uninformative and the prior
    /// mean/variance are returned with zero derivative.
    pub fn denoise(&self, y: f64, snr: f64) -> Result<PosteriorStats> {
        if !y.is_finite() {
            return Err(Error::NonFinite(format!("observation y = {y}")));
        }
        if snr < 0.0 || !snr.is_finite() {
            return Err(Error::NegativeSnr(snr));
        }
        Ok(self.posterior(y, snr))
    }

    /// Infallible denoiser core; inputs assumed validated.
    pub(crate) fn posterior(&self, y: f64, snr: f64) -> PosteriorStats {
        if snr == 0.0 {
            return PosteriorStats {
                mean: self.mean(),
                variance: self.variance(),
                mean_derivative: 0.0,
            };
        }
        let tau = 1.0 / snr;

        // Log marginal density of each component at y, up to a shared
        // constant; max-subtracted for stable responsibilities.
        let n = self.atoms.len() + self.gaussians.len();
        let mut loglik = Vec::with_capacity(n);
        for &(v, w) in &self.atoms {
            let d = y - v;
            let ll = if w > 0.0 {
                w.ln() - 0.5 * tau.ln() - d * d / (2.0 * tau)
            } else {
                f64::NEG_INFINITY
            };
            loglik.push(ll);
        }
        for &(w, mu, var) in &self.gaussians {
            let s2 = var + tau;
            let d = y - mu;
            let ll = if w > 0.0 {
                w.ln() - 0.5 * s2.ln() - d * d / (2.0 * s2)
            } else {
                f64::NEG_INFINITY
            };
            loglik.push(ll);
        }
        let max_ll = loglik.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        debug_assert!(max_ll.is_finite(), "all components have zero likelihood");

        let mut norm = 0.0;
        let mut mean = 0.0;
        let mut second = 0.0;
        for (k, &(v, _)) in self.atoms.iter().enumerate() {
            let r = (loglik[k] - max_ll).exp();
            norm += r;
            mean += r * v;
            second += r * v * v;
        }
        let off = self.atoms.len();
        for (k, &(_, mu, var)) in self.gaussians.iter().enumerate() {
            let r = (loglik[off + k] - max_ll).exp();
            // Gaussian-Gaussian conjugacy within the component.
            let post_var = var * tau / (var + tau);
            let post_mean = (tau * mu + var * y) / (var + tau);
            norm += r;
            mean += r * post_mean;
            second += r * (post_var + post_mean * post_mean);
        }
        mean /= norm;
        second /= norm;
        let variance = (second - mean * mean).max(0.0);
        PosteriorStats { mean, variance, mean_derivative: snr * variance }
    }

    /// Minimum mean square error of estimating `X` from `sqrt(snr) X + Z`.
    ///
    /// Evaluated as `E_Y[Var(X | Y)]` by Gauss–Hermite quadrature over the
    /// observation, one rule per mixture component. The result is checked
    /// against a doubled-node rule; disagreement beyond tolerance is an
    /// error carrying both values.
    pub fn mmse(&self, snr: f64) -> Result<f64> {
        self.mmse_with_nodes(snr, DEFAULT_QUAD_NODES)
    }

    /// `mmse` with an explicit node count for the outer quadrature.
    pub fn mmse_with_nodes(&self, snr: f64, nodes: usize) -> Result<f64> {
        if snr < 0.0 || !snr.is_finite() {
            return Err(Error::NegativeSnr(snr));
        }
        if snr == 0.0 {
            return Ok(self.variance());
        }
        let coarse = self.mmse_quadrature(snr, nodes);
        let fine = self.mmse_quadrature(snr, 2 * nodes);
        let scale = coarse.abs().max(fine.abs()).max(self.variance());
        if (coarse - fine).abs() > 1e-6 * scale + 1e-12 {
            return Err(Error::QuadratureDivergence {
                nodes,
                value: coarse,
                nodes2: 2 * nodes,
                value2: fine,
            });
        }
        Ok(fine)
    }

    fn mmse_quadrature(&self, snr: f64, nodes: usize) -> f64 {
        let tau = 1.0 / snr;
        let rule = GaussHermite::cached(nodes);
        let mut acc = 0.0;
        // Marginal of Y is itself a mixture; integrate Var(X | Y) under
        // each component's marginal with a matched center and width.
        for &(v, w) in &self.atoms {
            if w > 0.0 {
                acc += w * rule.gaussian_expectation(v, tau, |y| self.posterior(y, snr).variance);
            }
        }
        for &(w, mu, var) in &self.gaussians {
            if w > 0.0 {
                acc += w
                    * rule.gaussian_expectation(mu, var + tau, |y| self.posterior(y, snr).variance);
            }
        }
        acc
    }

    /// One draw from the mixture using the caller's generator.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut u: f64 = rng.gen();
        for &(v, w) in &self.atoms {
            if u < w {
                return v;
            }
            u -= w;
        }
        for &(w, mu, var) in &self.gaussians {
            if u < w {
                let z: f64 = rng.sample(StandardNormal);
                return mu + var.sqrt() * z;
            }
            u -= w;
        }
        // Weight round-off: fall back to the last component's draw.
        match (self.gaussians.last(), self.atoms.last()) {
            (Some(&(_, mu, var)), _) => {
                let z: f64 = rng.sample(StandardNormal);
                mu + var.sqrt() * z
            }
            (None, Some(&(v, _))) => v,
            (None, None) => unreachable!("validated prior has a component"),
        }
    }

    /// `count` i.i.d. draws, deterministic for a fixed seed.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, &[SAMPLE_SALT]);
        (0..count).map(|_| self.draw(&mut rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn three_atom() -> Prior {
        Prior::new(vec![(-1.0, 0.05), (0.0, 0.9), (1.0, 0.05)], vec![]).unwrap()
    }

    #[test]
    fn variance_of_unit_gaussian() {
        assert_abs_diff_eq!(Prior::unit_gaussian().variance(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn variance_of_symmetric_atoms() {
        assert_abs_diff_eq!(Prior::symmetric_binary().variance(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn variance_of_bernoulli_gaussian() {
        let p = Prior::bernoulli_gaussian(0.1, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(p.variance(), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn denoise_gaussian_is_linear_shrinkage() {
        let p = Prior::unit_gaussian();
        let stats = p.denoise(2.0, 1.0).unwrap();
        assert_abs_diff_eq!(stats.mean, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.variance, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.mean_derivative, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn denoise_symmetric_prior_at_zero() {
        for prior in [Prior::symmetric_binary(), Prior::unit_gaussian(), three_atom()] {
            for snr in [0.0, 0.3, 1.0, 10.0] {
                let stats = prior.denoise(0.0, snr).unwrap();
                assert_abs_diff_eq!(stats.mean, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn denoise_two_atoms_is_tanh() {
        let p = Prior::symmetric_binary();
        let stats = p.denoise(0.5, 1.0).unwrap();
        assert_abs_diff_eq!(stats.mean, 0.5f64.tanh(), epsilon = 1e-12);
        // eta' = s * Var = 1 - tanh^2 here, the derivative of tanh(sy).
        assert_abs_diff_eq!(stats.mean_derivative, 1.0 - 0.5f64.tanh().powi(2), epsilon = 1e-12);
    }

    #[test]
    fn denoise_two_atoms_matches_monte_carlo_bayes() {
        // Conditional-mean estimate by windowing 1e6 (X, Y) pairs around
        // y = 0.5; window half-width 0.01 keeps the bias far below the
        // Monte Carlo band.
        let p = Prior::symmetric_binary();
        let n = 1_000_000usize;
        let mut rng = substream(991, &[7]);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut count = 0usize;
        for _ in 0..n {
            let x: f64 = if rng.gen::<f64>() < 0.5 { -1.0 } else { 1.0 };
            let z: f64 = rng.sample(StandardNormal);
            let y = x + z;
            if (y - 0.5).abs() < 0.01 {
                sum += x;
                sumsq += x * x;
                count += 1;
            }
        }
        let mc = sum / count as f64;
        let var = (sumsq / count as f64 - mc * mc).max(0.0);
        let se = (var / count as f64).sqrt();
        let eta = p.denoise(0.5, 1.0).unwrap().mean;
        assert!(
            (eta - mc).abs() < 4.0 * se,
            "eta={eta} mc={mc} se={se} count={count}"
        );
    }

    #[test]
    fn mmse_gaussian_closed_form() {
        let p = Prior::unit_gaussian();
        assert_abs_diff_eq!(p.mmse(1.0).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.mmse(3.0).unwrap(), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn mmse_at_zero_snr_is_variance() {
        for prior in [Prior::unit_gaussian(), three_atom(), Prior::bernoulli_gaussian(0.1, 0.0, 1.0).unwrap()] {
            assert_abs_diff_eq!(prior.mmse(0.0).unwrap(), prior.variance(), epsilon = 1e-15);
        }
    }

    /// Independent posterior mean for the three-atom prior, written from
    /// the likelihood ratios alone (no shared code with `posterior`).
    fn three_atom_eta(y: f64, s: f64) -> f64 {
        let comps = [(-1.0, 0.05), (0.0, 0.9), (1.0, 0.05)];
        let mut num = 0.0;
        let mut den = 0.0;
        for (v, w) in comps {
            let l = w * (-s * (y - v) * (y - v) / 2.0).exp();
            num += l * v;
            den += l;
        }
        num / den
    }

    #[test]
    fn mmse_three_atom_matches_monte_carlo_oracle() {
        // Brute-force oracle: 1e7 draws of (X, Z), squared error of the
        // hand-written posterior mean. Seeded, so the run is repeatable;
        // the frozen value below is its output.
        let s = 5.0;
        let n = 10_000_000usize;
        let mut rng = substream(4242, &[11]);
        let inv_sqrt_s = (1.0 / s).sqrt();
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let u: f64 = rng.gen();
            let x = if u < 0.05 {
                -1.0
            } else if u < 0.95 {
                0.0
            } else {
                1.0
            };
            let z: f64 = rng.sample(StandardNormal);
            let y = x + inv_sqrt_s * z;
            let e = x - three_atom_eta(y, s);
            sum += e * e;
            sumsq += e * e * e * e;
        }
        let mc = sum / n as f64;
        let se = ((sumsq / n as f64 - mc * mc).max(0.0) / n as f64).sqrt();
        let quad = three_atom().mmse(s).unwrap();
        assert!((quad - mc).abs() < 3.0 * se, "quad={quad} mc={mc} se={se}");
    }

    #[test]
    fn sample_point_mass() {
        let p = Prior::new(vec![(0.0, 1.0)], vec![]).unwrap();
        assert_eq!(p.sample(5, 1), vec![0.0; 5]);
    }

    #[test]
    fn sample_unit_gaussian_moments() {
        let xs = Prior::unit_gaussian().sample(1_000_000, 7);
        let mean: f64 = xs.iter().sum::<f64>() / xs.len() as f64;
        let var: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.004, "mean={mean}");
        assert!((var - 1.0).abs() < 0.01, "var={var}");
    }

    #[test]
    fn sample_bernoulli_gaussian_zero_fraction() {
        let p = Prior::bernoulli_gaussian(0.1, 0.0, 1.0).unwrap();
        let xs = p.sample(1_000_000, 3);
        let zeros = xs.iter().filter(|&&x| x == 0.0).count() as f64;
        let frac = zeros / xs.len() as f64;
        // binomial band: 4 * sqrt(p(1-p)/n)
        let band = 4.0 * (0.9f64 * 0.1 / 1e6).sqrt();
        assert!((frac - 0.9).abs() < band, "frac={frac} band={band}");
    }

    #[test]
    fn sample_is_deterministic() {
        let p = Prior::bernoulli_gaussian(0.3, 0.5, 2.0).unwrap();
        assert_eq!(p.sample(100, 9), p.sample(100, 9));
    }

    #[test]
    fn renyi_dimension_examples() {
        assert_abs_diff_eq!(Prior::unit_gaussian().renyi_upper_dimension(), 1.0);
        assert_abs_diff_eq!(Prior::symmetric_binary().renyi_upper_dimension(), 0.0);
        let bg = Prior::bernoulli_gaussian(0.1, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(bg.renyi_upper_dimension(), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn derivative_matches_finite_differences_on_grid() {
        let priors = [
            Prior::unit_gaussian(),
            Prior::symmetric_binary(),
            Prior::bernoulli_gaussian(0.1, 0.0, 1.0).unwrap(),
            Prior::new(vec![(0.5, 0.2)], vec![(0.5, -1.0, 0.3), (0.3, 2.0, 1.5)]).unwrap(),
        ];
        let h = 1e-5;
        for prior in &priors {
            for snr in [0.1, 1.0, 5.0, 50.0] {
                for iy in -6..=6 {
                    let y = iy as f64 * 0.5;
                    let stats = prior.denoise(y, snr).unwrap();
                    let fd = (prior.denoise(y + h, snr).unwrap().mean
                        - prior.denoise(y - h, snr).unwrap().mean)
                        / (2.0 * h);
                    assert!(
                        (stats.mean_derivative - fd).abs() <= 1e-5 * (1.0 + stats.mean_derivative.abs()),
                        "prior={prior:?} y={y} snr={snr} analytic={} fd={fd}",
                        stats.mean_derivative
                    );
                }
            }
        }
    }

    #[test]
    fn mmse_is_nonincreasing_in_snr() {
        let priors = [
            Prior::unit_gaussian(),
            Prior::bernoulli_gaussian(0.1, 0.0, 1.0).unwrap(),
            three_atom(),
        ];
        for prior in &priors {
            let mut last = f64::INFINITY;
            for k in 0..50 {
                let s = 0.05 * (k as f64) * (k as f64);
                let m = prior.mmse(s).unwrap();
                assert!(m <= last + 1e-12, "mmse increased at s={s}: {m} > {last}");
                last = m;
            }
        }
    }

    #[test]
    fn mmse_upper_bounds() {
        let prior = Prior::bernoulli_gaussian(0.2, 0.3, 2.0).unwrap();
        let var = prior.variance();
        for s in [0.01, 0.1, 1.0, 10.0, 1000.0] {
            let m = prior.mmse(s).unwrap();
            assert!(m <= 1.0 / s + 1e-9, "mmse({s})={m} exceeds 1/s");
            assert!(m <= var + 1e-12, "mmse({s})={m} exceeds Var(X)={var}");
        }
    }

    #[test]
    fn stein_identity_monte_carlo() {
        // E{Z phi(Z)} = sigma^2 E{phi'(Z)} for Z ~ N(0, sigma^2); the
        // per-sample difference has mean zero, tested at 4 standard errors.
        let prior = Prior::bernoulli_gaussian(0.15, 0.0, 1.0).unwrap();
        let sigma2 = 0.49f64;
        let snr = 2.0;
        let n = 200_000usize;
        let mut rng = substream(20_24, &[5]);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let z: f64 = rng.sample::<f64, _>(StandardNormal) * sigma2.sqrt();
            let st = prior.posterior(z, snr);
            let d = z * st.mean - sigma2 * st.mean_derivative;
            sum += d;
            sumsq += d * d;
        }
        let mean = sum / n as f64;
        let se = ((sumsq / n as f64 - mean * mean).max(0.0) / n as f64).sqrt();
        assert!(mean.abs() < 4.0 * se, "stein residual {mean} vs se {se}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Prior::unit_gaussian().denoise(f64::NAN, 1.0).is_err());
        assert!(Prior::unit_gaussian().denoise(f64::INFINITY, 1.0).is_err());
        assert!(Prior::unit_gaussian().denoise(0.0, -1.0).is_err());
        assert!(Prior::unit_gaussian().mmse(-0.5).is_err());
    }

    #[test]
    fn rejects_bad_mixtures() {
        assert!(Prior::new(vec![], vec![]).is_err());
        assert!(Prior::new(vec![(0.0, 0.5)], vec![]).is_err()); // weights != 1
        assert!(Prior::new(vec![(0.0, 0.5), (0.0, 0.5)], vec![]).is_err()); // duplicate atoms
        assert!(Prior::new(vec![], vec![(1.0, 0.0, 0.0)]).is_err()); // zero variance
        assert!(Prior::new(vec![(0.0, 1.2), (1.0, -0.2)], vec![]).is_err()); // negative weight
    }

    #[test]
    fn config_fragment_round_trip() {
        let p = Prior::new(vec![(0.0, 0.9)], vec![(0.1, 0.0, 1.0)]).unwrap();
        let text = toml::to_string(&p).unwrap();
        let back: Prior = toml::from_str(&text).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn deserialization_enforces_invariants() {
        let bad = r#"
            atoms = [[0.0, 0.9]]
            gaussians = [[0.2, 0.0, 1.0]]
        "#;
        assert!(toml::from_str::<Prior>(bad).is_err());
    }
}
