//! Reconstruction fidelity, sample-budget accounting and the model premise
//! checks.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reconstruction::SubbandDiagnostics;
use crate::sampling::separate_baseline;
use crate::spectral::{total_bandwidth, PsdSpec, SubbandPlan};
use crate::synthesis::MixingMatrix;

/// Floor reported for an exact reconstruction.
pub const NMSE_FLOOR_DB: f64 = -300.0;

/// NMSE threshold when every subband width divides `T`.
pub const NMSE_DIVISIBLE_DB: f64 = -120.0;
/// NMSE threshold when some subband is sampled at non-uniform positions.
pub const NMSE_NON_DIVISIBLE_DB: f64 = -80.0;

/// `10·log₁₀(Σ|X − X̂|² / Σ|X|²)`, clamped below at [`NMSE_FLOOR_DB`].
pub fn nmse_db(reference: &DMatrix<f64>, estimate: &DMatrix<f64>) -> Result<f64> {
    if reference.shape() != estimate.shape() {
        return Err(Error::DimensionError(format!(
            "shapes differ: {:?} vs {:?}",
            reference.shape(),
            estimate.shape()
        )));
    }
    let power = reference.norm_squared();
    if power == 0.0 {
        return Err(Error::ZeroReference);
    }
    let err = (reference - estimate).norm_squared();
    if err == 0.0 {
        return Ok(NMSE_FLOOR_DB);
    }
    Ok((10.0 * (err / power).log10()).max(NMSE_FLOOR_DB))
}

/// Acceptance threshold for a plan: strict when all widths divide `T`.
pub fn nmse_threshold_db(plan: &SubbandPlan) -> f64 {
    let t = plan.grid.len();
    if plan.subbands.iter().all(|s| t.is_multiple_of(s.width())) {
        NMSE_DIVISIBLE_DB
    } else {
        NMSE_NON_DIVISIBLE_DB
    }
}

/// Conditions under which the mixed channels are guaranteed correlated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PremiseReport {
    pub n_gt_m: bool,
    pub all_powers_positive: bool,
    pub all_rows_nonzero: bool,
    pub verdict: bool,
}

/// Checks `N > M`, every latent power positive and every row of `U`
/// nonzero.
pub fn check_correlatedness_premises(u: &DMatrix<f64>, powers: &[f64]) -> Result<PremiseReport> {
    if powers.len() != u.ncols() {
        return Err(Error::SizeMismatch {
            expected: u.ncols(),
            found: powers.len(),
        });
    }
    let n_gt_m = u.nrows() > u.ncols();
    let all_powers_positive = powers.iter().all(|&p| p > 0.0);
    let all_rows_nonzero = (0..u.nrows()).all(|i| u.row(i).iter().any(|&v| v != 0.0));
    Ok(PremiseReport {
        n_gt_m,
        all_powers_positive,
        all_rows_nonzero,
        verdict: n_gt_m && all_powers_positive && all_rows_nonzero,
    })
}

/// Outcome of one acquisition/reconstruction run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub nmse_db: f64,
    pub nmse_threshold_db: f64,
    pub density: f64,
    pub theoretical_density: f64,
    /// Samples actually taken.
    pub sample_count: usize,
    /// `B` in bins.
    pub total_bandwidth: usize,
    pub grid_len: usize,
    pub channels: usize,
    pub multiband_total_samples: usize,
    pub baseline_total_samples: usize,
    pub max_condition: f64,
    pub subbands: Vec<SubbandDiagnostics>,
    pub seeds: Vec<u64>,
    pub config: serde_json::Value,
}

/// The run took at least `B` samples (exact integer comparison) and met
/// its NMSE threshold.
pub fn verify_density_bound(report: &ExperimentReport) -> bool {
    report.sample_count >= report.total_bandwidth && report.nmse_db <= report.nmse_threshold_db
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateComparison {
    pub multiband: usize,
    pub separate: usize,
    pub ratio: f64,
}

/// Multi-band budget `B` against sampling every channel separately.
pub fn rate_comparison(u: &MixingMatrix, specs: &[PsdSpec]) -> Result<RateComparison> {
    let multiband = total_bandwidth(specs)?;
    let separate = separate_baseline(u, specs)?.total;
    let ratio = if multiband == 0 {
        1.0
    } else {
        separate as f64 / multiband as f64
    };
    Ok(RateComparison {
        multiband,
        separate,
        ratio,
    })
}
