//! Coupling matrices and Gaussian sensing-matrix ensembles.
//!
//! A sensing matrix is drawn blockwise: rows are split into `L_r` groups
//! of `m0`, columns into `L_c` groups of `n0`, and entry `(i, j)` is
//! `N(0, W[g(i), g(j)] / m0)` where `W` is a roughly row-stochastic
//! coupling matrix (every row sum in `[1/2, 2]`). Sampling is keyed by
//! `(seed, row)` substreams, so the generated matrix does not depend on
//! fill order or thread count.

use crate::rng::substream;
use crate::{Error, Result};
use ndarray::{Array2, ArrayView2, s};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

const SENSING_SALT: u64 = 0x73656e73; // "sens"
const SYMMETRIC_SALT: u64 = 0x73796d6d; // "symm"

/// Default cap on `m * n` for dense sensing matrices (1.6 GB of f64).
pub const DEFAULT_ENTRY_CAP: usize = 200_000_000;

/// Nonnegative block-variance profile `W` with `L_r` rows and `L_c` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    entries: Array2<f64>,
}

/// Outcome of checking the rough row-stochasticity invariants.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CouplingReport {
    /// Rows whose sum falls outside `[1/2, 2]`, with the sum.
    pub row_violations: Vec<(usize, f64)>,
    /// Columns with no strictly positive entry.
    pub zero_columns: Vec<usize>,
}

impl CouplingReport {
    pub fn is_ok(&self) -> bool {
        self.row_violations.is_empty() && self.zero_columns.is_empty()
    }
}

impl std::fmt::Display for CouplingReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (r, sum) in &self.row_violations {
            writeln!(f, "row {r} sum {sum} outside [1/2, 2]")?;
        }
        for c in &self.zero_columns {
            writeln!(f, "column {c} has no positive entry")?;
        }
        Ok(())
    }
}

/// Checks the coupling invariants on a raw grid: row sums in `[1/2, 2]`
/// and at least one positive entry per column.
pub fn validate_coupling(entries: &Array2<f64>) -> CouplingReport {
    let mut report = CouplingReport::default();
    for (r, row) in entries.rows().into_iter().enumerate() {
        let sum: f64 = row.sum();
        if !(0.5..=2.0).contains(&sum) {
            report.row_violations.push((r, sum));
        }
    }
    for (c, col) in entries.columns().into_iter().enumerate() {
        if !col.iter().any(|&w| w > 0.0) {
            report.zero_columns.push(c);
        }
    }
    report
}

impl CouplingMatrix {
    /// Wraps a grid after checking entry sanity and the coupling invariants.
    pub fn new(entries: Array2<f64>) -> Result<CouplingMatrix> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::CouplingViolation("empty coupling matrix".into()));
        }
        for &w in entries.iter() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::CouplingViolation(format!("entry {w} not finite nonnegative")));
            }
        }
        let report = validate_coupling(&entries);
        if !report.is_ok() {
            return Err(Error::CouplingViolation(report.to_string()));
        }
        Ok(CouplingMatrix { entries })
    }

    /// The single-block matrix `[1]`, the i.i.d. special case.
    pub fn single_block() -> CouplingMatrix {
        CouplingMatrix { entries: Array2::ones((1, 1)) }
    }

    pub fn lr(&self) -> usize {
        self.entries.nrows()
    }

    pub fn lc(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[(r, c)]
    }
}

/// Band coupling: `W[r, c] = profile[|r - c|]` inside the band, zero
/// outside, with each row rescaled to sum exactly one.
pub fn band_coupling(lr: usize, lc: usize, profile: &[f64]) -> Result<CouplingMatrix> {
    if lr == 0 || lc == 0 {
        return Err(Error::CouplingViolation("band dimensions must be positive".into()));
    }
    if profile.is_empty() || profile.len() > lr.max(lc) {
        return Err(Error::CouplingViolation(format!(
            "profile length {} must be in 1..={}",
            profile.len(),
            lr.max(lc)
        )));
    }
    if profile.iter().all(|&p| p == 0.0) {
        return Err(Error::CouplingViolation("profile is all zero".into()));
    }
    if profile.iter().any(|&p| !p.is_finite() || p < 0.0) {
        return Err(Error::CouplingViolation("profile entries must be finite nonnegative".into()));
    }
    let mut entries = Array2::zeros((lr, lc));
    for r in 0..lr {
        for c in 0..lc {
            let d = r.abs_diff(c);
            if d < profile.len() {
                entries[(r, c)] = profile[d];
            }
        }
    }
    for mut row in entries.rows_mut() {
        let sum: f64 = row.sum();
        if sum == 0.0 {
            return Err(Error::CouplingViolation(
                "a band row has no support; widen the profile or shrink L_r".into(),
            ));
        }
        row.mapv_inplace(|w| w / sum);
    }
    CouplingMatrix::new(entries)
}

/// Ensemble parameters: the coupling matrix plus per-group block sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    coupling: CouplingMatrix,
    m0: usize,
    n0: usize,
}

impl EnsembleSpec {
    pub fn new(coupling: CouplingMatrix, m0: usize, n0: usize) -> Result<EnsembleSpec> {
        if m0 == 0 || n0 == 0 {
            return Err(Error::DimensionMismatch("m0 and n0 must be positive".into()));
        }
        Ok(EnsembleSpec { coupling, m0, n0 })
    }

    pub fn coupling(&self) -> &CouplingMatrix {
        &self.coupling
    }

    pub fn m0(&self) -> usize {
        self.m0
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    /// Total row count `m = m0 * L_r`.
    pub fn m(&self) -> usize {
        self.m0 * self.coupling.lr()
    }

    /// Total column count `n = n0 * L_c`.
    pub fn n(&self) -> usize {
        self.n0 * self.coupling.lc()
    }

    /// Undersampling parameter `delta = m0 / n0`.
    pub fn delta(&self) -> f64 {
        self.m0 as f64 / self.n0 as f64
    }

    /// Group of row `i`: contiguous blocks of `m0`.
    pub fn row_group(&self, i: usize) -> usize {
        i / self.m0
    }

    /// Group of column `j`: contiguous blocks of `n0`.
    pub fn col_group(&self, j: usize) -> usize {
        j / self.n0
    }
}

/// A sampled sensing matrix together with its provenance.
#[derive(Debug, Clone)]
pub struct SensingMatrix {
    values: Array2<f64>,
    spec: EnsembleSpec,
    seed: u64,
}

impl SensingMatrix {
    /// Wraps values derived elsewhere with the same block law, e.g. the
    /// rescaling `A = sqrt(L_r W) .* A~` used by the symmetric embedding.
    pub(crate) fn from_parts(values: Array2<f64>, spec: EnsembleSpec, seed: u64) -> SensingMatrix {
        debug_assert_eq!(values.dim(), (spec.m(), spec.n()));
        SensingMatrix { values, spec, seed }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// View of block `(r, c)`.
    pub fn block(&self, r: usize, c: usize) -> ArrayView2<'_, f64> {
        let m0 = self.spec.m0;
        let n0 = self.spec.n0;
        self.values.slice(s![r * m0..(r + 1) * m0, c * n0..(c + 1) * n0])
    }
}

/// Draws `A` from the ensemble `M(W, m0, n0)` with the default memory cap.
pub fn sample_sensing_matrix(spec: &EnsembleSpec, seed: u64) -> Result<SensingMatrix> {
    sample_sensing_matrix_with_cap(spec, seed, DEFAULT_ENTRY_CAP)
}

/// Draws `A` from the ensemble with an explicit cap on `m * n`.
pub fn sample_sensing_matrix_with_cap(
    spec: &EnsembleSpec,
    seed: u64,
    cap: usize,
) -> Result<SensingMatrix> {
    let m = spec.m();
    let n = spec.n();
    if m.checked_mul(n).map_or(true, |e| e > cap) {
        return Err(Error::MemoryCap { rows: m, cols: n, cap });
    }
    // Per-row standard deviations by column group.
    let m0 = spec.m0;
    let n0 = spec.n0;
    let lc = spec.coupling.lc();
    let mut values = Array2::zeros((m, n));
    let fill_row = |i: usize, row: &mut [f64]| {
        let r = i / m0;
        let mut rng = substream(seed, &[SENSING_SALT, i as u64]);
        for c in 0..lc {
            let w = spec.coupling.get(r, c);
            let seg = &mut row[c * n0..(c + 1) * n0];
            if w == 0.0 {
                seg.fill(0.0);
            } else {
                let sd = (w / m0 as f64).sqrt();
                for v in seg.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = sd * z;
                }
            }
        }
    };
    let slice = values.as_slice_mut().expect("freshly allocated matrix is contiguous");
    #[cfg(feature = "parallel")]
    slice.par_chunks_mut(n).enumerate().for_each(|(i, row)| fill_row(i, row));
    #[cfg(not(feature = "parallel"))]
    slice.chunks_mut(n).enumerate().for_each(|(i, row)| fill_row(i, row));

    Ok(SensingMatrix { values, spec: spec.clone(), seed })
}

/// Draws the symmetric matrix `A = G + G^T` with `G` having i.i.d.
/// `N(0, 1/(2N))` entries, so off-diagonal entries of `A` are `N(0, 1/N)`
/// and diagonal entries `N(0, 2/N)`.
pub fn sample_symmetric_matrix(n: usize, seed: u64) -> Array2<f64> {
    assert!(n >= 1, "dimension must be positive");
    let mut g = Array2::zeros((n, n));
    let sd = (1.0 / (2.0 * n as f64)).sqrt();
    let fill_row = |i: usize, row: &mut [f64]| {
        let mut rng = substream(seed, &[SYMMETRIC_SALT, i as u64]);
        for v in row.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = sd * z;
        }
    };
    let slice = g.as_slice_mut().expect("freshly allocated matrix is contiguous");
    #[cfg(feature = "parallel")]
    slice.par_chunks_mut(n).enumerate().for_each(|(i, row)| fill_row(i, row));
    #[cfg(not(feature = "parallel"))]
    slice.chunks_mut(n).enumerate().for_each(|(i, row)| fill_row(i, row));

    // Symmetrize in place: A = G + G^T.
    for i in 0..n {
        let gii = g[(i, i)];
        g[(i, i)] = 2.0 * gii;
        for j in i + 1..n {
            let s = g[(i, j)] + g[(j, i)];
            g[(i, j)] = s;
            g[(j, i)] = s;
        }
    }
    g
}

/// Config fragment for a coupling matrix: either the explicit grid or a
/// band construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CouplingConfig {
    Band {
        band: BandConfig,
    },
    Explicit {
        #[serde(rename = "Lr")]
        lr: usize,
        #[serde(rename = "Lc")]
        lc: usize,
        rows: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandConfig {
    #[serde(rename = "Lr")]
    pub lr: usize,
    #[serde(rename = "Lc")]
    pub lc: usize,
    pub profile: Vec<f64>,
}

impl CouplingConfig {
    pub fn build(&self) -> Result<CouplingMatrix> {
        match self {
            CouplingConfig::Band { band } => band_coupling(band.lr, band.lc, &band.profile),
            CouplingConfig::Explicit { lr, lc, rows } => {
                if rows.len() != *lr || rows.iter().any(|r| r.len() != *lc) {
                    return Err(Error::Config(format!(
                        "coupling rows do not match Lr={lr}, Lc={lc}"
                    )));
                }
                let mut entries = Array2::zeros((*lr, *lc));
                for (r, row) in rows.iter().enumerate() {
                    for (c, &w) in row.iter().enumerate() {
                        entries[(r, c)] = w;
                    }
                }
                CouplingMatrix::new(entries)
            }
        }
    }
}
