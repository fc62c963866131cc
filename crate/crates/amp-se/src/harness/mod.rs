//! Config-driven experiment runner behind the `amp-se` CLI.
//!
//! Experiments are TOML configs (see [`ExperimentConfig`]); each runner
//! returns a structured outcome plus the CSV it would emit. Output is
//! deterministic for a fixed config: trial `k` always runs at seed
//! `base_seed + k` and aggregation folds in trial order.

mod checks;
mod config;
mod runner;

pub use checks::{
    run_embed_check, run_general_se_check, EmbedCheckOutcome, GeneralSeCheckOutcome,
    PsiGateResult,
};
pub use config::{
    ExperimentConfig, ExperimentKind, SweepConfig, Tolerances, DEFAULT_MC_SAMPLES,
};
pub use runner::{
    run_cs_monte_carlo, run_delta_sweep, run_se_only, CsMcOutcome, SweepOutcome, TrialResult,
};

/// Floats in CSV output carry 17 significant digits, enough to round-trip
/// an f64 exactly.
pub fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_csv_format() {
        for v in [0.1, 2.2 / 3.2, 1e-300, -123.456e77, 0.0] {
            let s = fmt_float(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(v, back, "{s}");
        }
        assert_eq!(fmt_float(f64::INFINITY), "inf");
        assert_eq!(fmt_float(f64::NAN), "NaN");
    }
}
