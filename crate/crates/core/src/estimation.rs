//! Real-data path: principal-component estimates of the mixing matrix and
//! latent sources, periodogram PSDs and support thresholding.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dft::Dft;
use crate::error::{Error, Result};
use crate::spectral::{Block, FrequencyGrid, PsdSpec};
use crate::synthesis::{empirical_cross_correlation, MixingMatrix, Role, SignalEnsemble};

/// How many principal components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentCount {
    Fixed(usize),
    /// Smallest `M` whose components explain at least this fraction of the
    /// total variance.
    VarianceFraction(f64),
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    /// `N×M`, orthogonal columns scaled by singular values / `√T`.
    pub mixing: DMatrix<f64>,
    /// `M×T`, unit mean power rows.
    pub latents: DMatrix<f64>,
    /// Per-channel means removed before the decomposition.
    pub means: Vec<f64>,
    /// All `N` singular values of the centered data, descending.
    pub singular_values: Vec<f64>,
    pub retained_variance: f64,
    pub components: usize,
}

/// Principal-component split `X − mean ≈ Û·Â` with singular values
/// absorbed into `Û`.
pub fn estimate_latents(x_raw: &DMatrix<f64>, count: ComponentCount) -> Result<EstimationResult> {
    let (n, t) = x_raw.shape();
    if n < 2 || t <= n {
        return Err(Error::InsufficientData(format!(
            "need T > N >= 2, got N={n}, T={t}"
        )));
    }
    let means: Vec<f64> = (0..n).map(|i| x_raw.row(i).mean()).collect();
    let centered = DMatrix::from_fn(n, t, |i, j| x_raw[(i, j)] - means[i]);

    let svd = centered.svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();

    let energy: f64 = sv.iter().map(|s| s * s).sum();
    let cutoff = sv[0] * (n.max(t) as f64) * f64::EPSILON;
    let rank = sv.iter().filter(|&&s| s > cutoff).count();
    let components = match count {
        ComponentCount::Fixed(m) => m,
        ComponentCount::VarianceFraction(target) => {
            if !(target > 0.0 && target <= 1.0) {
                return Err(Error::DomainError(format!(
                    "variance fraction must lie in (0, 1], got {target}"
                )));
            }
            let mut acc = 0.0;
            let mut m = sv.len();
            for (i, s) in sv.iter().enumerate() {
                acc += s * s;
                if acc >= target * energy * (1.0 - 1e-12) {
                    m = i + 1;
                    break;
                }
            }
            m
        }
    };
    if components == 0 || components > rank {
        return Err(Error::DegenerateCovariance {
            rank,
            requested: components,
        });
    }

    let scale = (t as f64).sqrt();
    let mut mixing = DMatrix::zeros(n, components);
    let mut latents = DMatrix::zeros(components, t);
    for (c, &idx) in order.iter().take(components).enumerate() {
        // Sign fixed so the largest-magnitude loading is positive.
        let col = u.column(idx);
        let pivot = col
            .iter()
            .cloned()
            .fold(0.0_f64, |a, v| if v.abs() > a.abs() { v } else { a });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            mixing[(i, c)] = sign * col[i] * sv[c] / scale;
        }
        for j in 0..t {
            latents[(c, j)] = sign * v_t[(idx, j)] * scale;
        }
    }
    let retained: f64 = sv.iter().take(components).map(|s| s * s).sum();
    Ok(EstimationResult {
        mixing,
        latents,
        means,
        singular_values: sv,
        retained_variance: if energy > 0.0 { retained / energy } else { 1.0 },
        components,
    })
}

/// Raw periodogram `|DFT(a)(k)|² / T`.
pub fn empirical_psd(a: &[f64]) -> Vec<f64> {
    let t = a.len();
    if t == 0 {
        return Vec::new();
    }
    Dft::new(t)
        .forward_real(a)
        .iter()
        .map(|c| c.norm_sqr() / t as f64)
        .collect()
}

pub const DEFAULT_THRESHOLD: f64 = 0.05;

/// Bins whose PSD reaches `fraction · max`, unioned with their mirrors.
pub fn support_mask(psd: &[f64], fraction: f64) -> Result<Vec<bool>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::DomainError(format!(
            "threshold fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let max = psd.iter().cloned().fold(0.0_f64, f64::max);
    if !(max > 0.0) {
        return Err(Error::EmptySupport);
    }
    let t = psd.len();
    let keep: Vec<bool> = psd.iter().map(|&p| p >= fraction * max).collect();
    Ok((0..t).map(|k| keep[k] || keep[(t - k) % t]).collect())
}

/// Thresholded support as a [`PsdSpec`]: one block per maximal run of kept
/// bins on `[0, T/2]`, level = mean mirrored PSD over the run.
pub fn threshold_support(psd: &[f64], fraction: f64) -> Result<PsdSpec> {
    let grid = FrequencyGrid::new(psd.len())?;
    let mask = support_mask(psd, fraction)?;
    let t = grid.len();
    let half = grid.nyquist();
    let sym = |k: usize| 0.5 * (psd[k] + psd[(t - k) % t]);
    let mut blocks = Vec::new();
    let mut k = 0;
    while k <= half {
        if !mask[k] {
            k += 1;
            continue;
        }
        let lo = k;
        while k <= half && mask[k] {
            k += 1;
        }
        let level = (lo..k).map(sym).sum::<f64>() / (k - lo) as f64;
        blocks.push(Block::new(lo, k, level));
    }
    PsdSpec::from_positive_blocks(grid, blocks)
}

/// Zeroes every DFT bin of `a` outside the spec's support.
pub fn filter_to_support(a: &[f64], spec: &PsdSpec) -> Result<Vec<f64>> {
    if a.len() != spec.grid().len() {
        return Err(Error::SizeMismatch {
            expected: spec.grid().len(),
            found: a.len(),
        });
    }
    let dft = Dft::new(a.len());
    let mut spectrum = dft.forward_real(a);
    let dense = spec.dense();
    for (k, v) in spectrum.iter_mut().enumerate() {
        if dense[k] == 0.0 {
            *v = num_complex::Complex64::new(0.0, 0.0);
        }
    }
    Ok(dft.inverse(&spectrum).iter().map(|v| v.re).collect())
}

/// Thresholded spec of one latent plus the latent filtered to it.
pub fn threshold_latent(a: &[f64], fraction: f64) -> Result<(PsdSpec, Vec<f64>)> {
    let spec = threshold_support(&empirical_psd(a), fraction)?;
    let filtered = filter_to_support(a, &spec)?;
    Ok((spec, filtered))
}

/// Largest normalized circular cross-correlation magnitude between two
/// distinct rows over all lags. Zero means uncorrelated at every lag.
pub fn max_cross_correlation(rows: &DMatrix<f64>) -> f64 {
    let t = rows.ncols();
    let rows: Vec<Vec<f64>> = (0..rows.nrows())
        .map(|i| rows.row(i).iter().copied().collect())
        .collect();
    let power: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>() / t as f64)
        .collect();
    let mut worst = 0.0_f64;
    for a in 0..rows.len() {
        for b in a + 1..rows.len() {
            let norm = (power[a] * power[b]).sqrt();
            if norm == 0.0 {
                continue;
            }
            let r = empirical_cross_correlation(&rows[a], &rows[b], t / 2)
                .expect("rows share one length");
            worst = r.iter().fold(worst, |w, v| w.max(v.abs() / norm));
        }
    }
    worst
}

/// Everything the sampling pipeline needs from a raw corpus.
#[derive(Debug, Clone)]
pub struct RealPipeline {
    pub estimation: EstimationResult,
    pub mixing: MixingMatrix,
    /// Periodograms of the unthresholded latent estimates.
    pub psds: Vec<Vec<f64>>,
    pub specs: Vec<PsdSpec>,
    /// Latents filtered to their thresholded supports.
    pub latents: SignalEnsemble,
    /// `Û·Â_thresholded` (centered).
    pub observed: SignalEnsemble,
    /// Max normalized cross-correlation between thresholded latents.
    pub latent_cross_correlation: f64,
}

/// Truncates the first `n` series to `t` samples, estimates latents,
/// thresholds each one and recomposes the observations.
pub fn prepare_real_pipeline(
    series: &[Vec<f64>],
    t: usize,
    n: usize,
    count: ComponentCount,
    fraction: f64,
) -> Result<RealPipeline> {
    if series.len() < n {
        return Err(Error::InsufficientData(format!(
            "{n} channels requested but only {} series available",
            series.len()
        )));
    }
    if let Some((i, s)) = series.iter().take(n).enumerate().find(|(_, s)| s.len() < t) {
        return Err(Error::InsufficientData(format!(
            "series {i} has {} samples, need {t}",
            s.len()
        )));
    }
    FrequencyGrid::new(t)?;
    let raw = DMatrix::from_fn(n, t, |i, j| series[i][j]);
    let estimation = estimate_latents(&raw, count)?;
    let m = estimation.components;

    let mut psds = Vec::with_capacity(m);
    let mut specs = Vec::with_capacity(m);
    let mut filtered = DMatrix::zeros(m, t);
    for c in 0..m {
        let a: Vec<f64> = estimation.latents.row(c).iter().copied().collect();
        let psd = empirical_psd(&a);
        let spec = threshold_support(&psd, fraction)?;
        let f = filter_to_support(&a, &spec)?;
        filtered
            .row_mut(c)
            .iter_mut()
            .zip(f)
            .for_each(|(d, v)| *d = v);
        psds.push(psd);
        specs.push(spec);
    }
    let mixing = MixingMatrix::new(estimation.mixing.clone())?;
    let observed = SignalEnsemble::new(Role::Observed, mixing.matrix() * &filtered)?;
    let latent_cross_correlation = max_cross_correlation(&filtered);
    let latents = SignalEnsemble::new(Role::Latent, filtered)?;
    Ok(RealPipeline {
        estimation,
        mixing,
        psds,
        specs,
        latents,
        observed,
        latent_cross_correlation,
    })
}
