//! Per-subband temporal interpolation and spatial lift, summed over
//! subbands.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dft::Dft;
use crate::error::{Error, Result};
use crate::linalg;
use crate::sampling::{ComplexSignals, SampleSet};
use crate::spectral::{Subband, SubbandPlan};
use crate::synthesis::{MixingMatrix, Role, SignalEnsemble};

/// Temporal systems above this condition number are treated as singular.
pub const MAX_TEMPORAL_CONDITION: f64 = 1e12;

/// Tolerance on the imaginary part of a summed reconstruction, relative to
/// its peak magnitude.
pub const IMAGINARY_TOLERANCE: f64 = 1e-8;

/// `Φ^l = U^l·(U_sᴴU_s)⁻¹·U_sᴴ`, lifting the `|Γ^l|` acquired channels of a
/// subband to all `N` channels.
#[derive(Debug, Clone)]
pub struct SpatialInterpolator {
    pub phi: DMatrix<f64>,
    /// Condition number of `U_s^l`.
    pub condition: f64,
}

impl SpatialInterpolator {
    pub fn new(u: &MixingMatrix, active: &[usize], rows: &[usize]) -> Result<Self> {
        if rows.len() != active.len() {
            return Err(Error::DimensionError(format!(
                "{} selected rows for {} active sources",
                rows.len(),
                active.len()
            )));
        }
        let u_l = u.columns(active);
        let u_s = u_l.select_rows(rows);
        let condition = linalg::condition_number(&u_s);
        let qr = u_s.qr();
        // (U_sᵀU_s)⁻¹U_sᵀ = R⁻¹Qᵀ.
        let pinv = qr
            .r()
            .solve_upper_triangular(&qr.q().transpose())
            .ok_or_else(|| {
                Error::RankDeficient(format!(
                    "U(Ξ, Γ) singular for rows {rows:?}, sources {active:?}"
                ))
            })?;
        Ok(SpatialInterpolator {
            phi: u_l * pinv,
            condition,
        })
    }

    pub fn outputs(&self) -> usize {
        self.phi.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.phi.ncols()
    }
}

/// `X̂^l = Φ^l·X̂^l(Ξ^l, ·)`.
pub fn spatial_interpolate(
    interp: &SpatialInterpolator,
    signals: &ComplexSignals,
) -> Result<ComplexSignals> {
    if signals.nrows() != interp.inputs() {
        return Err(Error::DimensionError(format!(
            "spatial interpolator takes {} channels, got {}",
            interp.inputs(),
            signals.nrows()
        )));
    }
    Ok(interp.phi.map(|v| Complex64::new(v, 0.0)) * signals)
}

/// Exact bandlimited interpolation on the periodic grid: the unique sequence
/// whose DFT lives on `[lo, hi)` and that passes through the samples.
///
/// The `W×W` system has entries `e^{+j2πkt_i/T}/√T`. For uniform positions
/// with `W | T` this is a scaled DFT and the solution is the Dirichlet kernel
/// interpolant modulated to the subband center.
#[derive(Debug, Clone)]
pub struct TemporalInterpolator {
    lo: usize,
    hi: usize,
    times: Vec<usize>,
    dft: Dft,
    qr: nalgebra::linalg::QR<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
    pub condition: f64,
}

impl TemporalInterpolator {
    pub fn new(lo: usize, hi: usize, times: &[usize], len: usize) -> Result<Self> {
        let width = hi
            .checked_sub(lo)
            .filter(|&w| w > 0 && hi <= len)
            .ok_or_else(|| {
                Error::DimensionError(format!("bin range [{lo}, {hi}) invalid for length {len}"))
            })?;
        if times.len() != width {
            return Err(Error::DimensionError(format!(
                "{} positions for a subband of width {width}",
                times.len()
            )));
        }
        if times.iter().any(|&t| t >= len) {
            return Err(Error::DomainError(format!(
                "positions must lie in [0, {len})"
            )));
        }
        let scale = 1.0 / (len as f64).sqrt();
        let system = DMatrix::from_fn(width, width, |i, j| {
            let phase = ((lo + j) * times[i]) % len;
            Complex64::from_polar(
                scale,
                2.0 * std::f64::consts::PI * phase as f64 / len as f64,
            )
        });
        let condition = linalg::condition_number(&system);
        if !(condition <= MAX_TEMPORAL_CONDITION) {
            return Err(Error::SingularSystem { condition });
        }
        Ok(TemporalInterpolator {
            lo,
            hi,
            times: times.to_vec(),
            dft: Dft::new(len),
            qr: system.qr(),
            condition,
        })
    }

    pub fn for_subband(subband: &Subband, times: &[usize], len: usize) -> Result<Self> {
        TemporalInterpolator::new(subband.lo, subband.hi, times, len)
    }

    pub fn times(&self) -> &[usize] {
        &self.times
    }

    /// DFT coefficients (unitary scaling) on the subband bins.
    pub fn coefficients(&self, samples: &[Complex64]) -> Result<Vec<Complex64>> {
        if samples.len() != self.times.len() {
            return Err(Error::SizeMismatch {
                expected: self.times.len(),
                found: samples.len(),
            });
        }
        let rhs = DVector::from_column_slice(samples);
        let c = self.qr.solve(&rhs).ok_or(Error::SingularSystem {
            condition: self.condition,
        })?;
        Ok(c.iter().copied().collect())
    }

    /// Evaluates the interpolant on all `T` grid points.
    pub fn interpolate(&self, samples: &[Complex64]) -> Result<Vec<Complex64>> {
        let coeffs = self.coefficients(samples)?;
        let len = self.dft.len();
        let mut spectrum = vec![Complex64::new(0.0, 0.0); len];
        spectrum[self.lo..self.hi].copy_from_slice(&coeffs);
        let scale = (len as f64).sqrt();
        Ok(self
            .dft
            .inverse(&spectrum)
            .into_iter()
            .map(|v| v * scale)
            .collect())
    }
}

/// One-shot form of [`TemporalInterpolator::interpolate`].
pub fn temporal_interpolate(
    samples: &[Complex64],
    times: &[usize],
    subband: &Subband,
    len: usize,
) -> Result<Vec<Complex64>> {
    TemporalInterpolator::for_subband(subband, times, len)?.interpolate(samples)
}

/// Solve diagnostics for one subband.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubbandDiagnostics {
    pub l: usize,
    pub width: usize,
    pub temporal_condition: f64,
    pub spatial_condition: f64,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub signals: SignalEnsemble,
    pub diagnostics: Vec<SubbandDiagnostics>,
    /// Largest `|Im x̂|` before the real part was taken.
    pub imaginary_residue: f64,
}

impl Reconstruction {
    pub fn max_condition(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.temporal_condition.max(d.spatial_condition))
            .fold(1.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructOptions {
    /// Fail with [`Error::ImaginaryResidue`] if the summed output is not real.
    pub check_imaginary: bool,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions {
            check_imaginary: true,
        }
    }
}

/// Rebuilds one subband on all channels from its samples.
pub fn reconstruct_subband(
    samples: &crate::sampling::SubbandSamples,
    subband: &Subband,
    u: &MixingMatrix,
    len: usize,
) -> Result<(ComplexSignals, SubbandDiagnostics)> {
    let temporal = TemporalInterpolator::for_subband(subband, &samples.times, len)?;
    let mut selected = ComplexSignals::zeros(samples.rows.len(), len);
    for i in 0..samples.rows.len() {
        let row: Vec<Complex64> = samples.values.row(i).iter().copied().collect();
        let full = temporal.interpolate(&row)?;
        selected
            .row_mut(i)
            .iter_mut()
            .zip(full)
            .for_each(|(d, v)| *d = v);
    }
    let spatial = SpatialInterpolator::new(u, &subband.active, &samples.rows)?;
    let lifted = spatial_interpolate(&spatial, &selected)?;
    let diag = SubbandDiagnostics {
        l: samples.l,
        width: subband.width(),
        temporal_condition: temporal.condition,
        spatial_condition: spatial.condition,
    };
    Ok((lifted, diag))
}

/// `X̂ = Σ_l Φ^l·Ω^l(samples of subband l)`.
pub fn reconstruct(
    samples: &SampleSet,
    plan: &SubbandPlan,
    u: &MixingMatrix,
) -> Result<Reconstruction> {
    reconstruct_with(samples, plan, u, ReconstructOptions::default())
}

pub fn reconstruct_with(
    samples: &SampleSet,
    plan: &SubbandPlan,
    u: &MixingMatrix,
    options: ReconstructOptions,
) -> Result<Reconstruction> {
    if samples.grid != plan.grid {
        return Err(Error::GridMismatch {
            expected: plan.grid.len(),
            found: samples.grid.len(),
        });
    }
    if samples.n != u.n() || plan.sources != u.m() {
        return Err(Error::DimensionError(format!(
            "samples cover {} channels and plan {} sources; mixing matrix is {}x{}",
            samples.n,
            plan.sources,
            u.n(),
            u.m()
        )));
    }
    let len = plan.grid.len();
    let parts = samples
        .subbands
        .par_iter()
        .map(|sb| {
            let subband = plan.subbands.get(sb.l).ok_or_else(|| {
                Error::DimensionError(format!("sample set references missing subband {}", sb.l))
            })?;
            if sb.rows.len() != subband.active.len() {
                return Err(Error::DimensionError(format!(
                    "subband {} has {} rows for {} active sources",
                    sb.l,
                    sb.rows.len(),
                    subband.active.len()
                )));
            }
            reconstruct_subband(sb, subband, u, len)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut total = ComplexSignals::zeros(samples.n, len);
    let mut diagnostics = Vec::with_capacity(parts.len());
    for (part, diag) in parts {
        total += part;
        diagnostics.push(diag);
    }
    let residue = total.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    let scale = total.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let tolerance = IMAGINARY_TOLERANCE * scale;
    if options.check_imaginary && residue > tolerance {
        return Err(Error::ImaginaryResidue { residue, tolerance });
    }
    let signals = SignalEnsemble::new(Role::Reconstructed, total.map(|v| v.re))?;
    Ok(Reconstruction {
        signals,
        diagnostics,
        imaginary_residue: residue,
    })
}
