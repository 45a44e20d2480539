//! Latent WSS source synthesis from prescribed PSDs and linear mixing into
//! correlated observations.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::spectral::{FrequencyGrid, PsdSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Latent,
    Observed,
    Reconstructed,
}

impl Role {
    pub fn code(self) -> u8 {
        match self {
            Role::Latent => 0,
            Role::Observed => 1,
            Role::Reconstructed => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Role> {
        match code {
            0 => Some(Role::Latent),
            1 => Some(Role::Observed),
            2 => Some(Role::Reconstructed),
            _ => None,
        }
    }
}

/// A finite multichannel real signal, one row per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalEnsemble {
    role: Role,
    grid: FrequencyGrid,
    data: DMatrix<f64>,
}

impl SignalEnsemble {
    pub fn new(role: Role, data: DMatrix<f64>) -> Result<Self> {
        let grid = FrequencyGrid::new(data.ncols())?;
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!(
                "non-finite sample at channel {}, time {}",
                bad % data.nrows(),
                bad / data.nrows()
            )));
        }
        Ok(SignalEnsemble { role, grid, data })
    }

    pub fn from_rows(role: Role, rows: &[Vec<f64>]) -> Result<Self> {
        let t = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != t) {
            return Err(Error::SizeMismatch {
                expected: t,
                found: bad.len(),
            });
        }
        SignalEnsemble::new(role, DMatrix::from_fn(rows.len(), t, |i, j| rows[i][j]))
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn grid(&self) -> FrequencyGrid {
        self.grid
    }

    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.data.row(i).iter().copied().collect()
    }
}

/// `N×M` full-column-rank mixing matrix with no all-zero row.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix(DMatrix<f64>);

impl MixingMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let (n, m) = entries.shape();
        if m == 0 || n < m {
            return Err(Error::DimensionError(format!(
                "mixing matrix must have N >= M >= 1, got {n}x{m}"
            )));
        }
        if let Some(row) = (0..n).find(|&i| entries.row(i).iter().all(|&v| v == 0.0)) {
            return Err(Error::RankDeficient(format!(
                "row {row} of the mixing matrix is zero"
            )));
        }
        let r = linalg::rank(&entries);
        if r < m {
            return Err(Error::RankDeficient(format!(
                "mixing matrix has rank {r} < {m}"
            )));
        }
        Ok(MixingMatrix(entries))
    }

    /// Observed channel count `N`.
    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    /// Latent source count `M`.
    pub fn m(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn condition_number(&self) -> f64 {
        linalg::condition_number(&self.0)
    }

    /// Columns restricted to `sources`.
    pub fn columns(&self, sources: &[usize]) -> DMatrix<f64> {
        self.0.select_columns(sources)
    }
}

pub const MAX_MIXING_CONDITION: f64 = 1e6;
const MIXING_RETRIES: usize = 100;

/// I.i.d. standard normal entries, redrawn until full column rank, no zero
/// row and condition number at most [`MAX_MIXING_CONDITION`].
pub fn random_mixing_matrix(n: usize, m: usize, seed: u64) -> Result<MixingMatrix> {
    if m == 0 || n < m {
        return Err(Error::DimensionError(format!(
            "need N >= M >= 1, got N={n}, M={m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MIXING_RETRIES {
        let entries = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        if let Ok(u) = MixingMatrix::new(entries) {
            if u.condition_number() <= MAX_MIXING_CONDITION {
                return Ok(u);
            }
        }
    }
    Err(Error::RankDeficient(format!(
        "no well-conditioned {n}x{m} mixing matrix after {MIXING_RETRIES} draws"
    )))
}

/// Random phases `φ_{m,k}` for the strictly positive bins `k = 1..T/2-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDraw {
    pub seed: u64,
    /// `M × (T/2 − 1)`; column `j` holds bin `k = j + 1`.
    pub phases: DMatrix<f64>,
}

impl PhaseDraw {
    pub fn draw(sources: usize, grid: FrequencyGrid, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols = grid.nyquist() - 1;
        let phases = DMatrix::from_fn(sources, cols, |_, _| rng.random_range(0.0..2.0 * PI));
        PhaseDraw { seed, phases }
    }

    pub fn row(&self, m: usize) -> Vec<f64> {
        self.phases.row(m).iter().copied().collect()
    }
}

/// One real sample path:
///
/// `A(t) = (1/√T)·(√S(0) + (−1)^t·√S(T/2) + Σ_{k=1}^{T/2−1} 2√S(k)·cos(2πkt/T + φ_k))`.
///
/// Every bin carries a single sinusoid, so the periodogram of the output is
/// exactly `S(k)` on the grid.
pub fn synthesize_latent(spec: &PsdSpec, phases: &[f64]) -> Result<Vec<f64>> {
    let grid = spec.grid();
    let t = grid.len();
    let half = grid.nyquist();
    if phases.len() != half - 1 {
        return Err(Error::SizeMismatch {
            expected: half - 1,
            found: phases.len(),
        });
    }
    let scale = 1.0 / (t as f64).sqrt();
    let dc = spec.level(0).sqrt();
    let nyq = spec.level(half).sqrt();
    let tones: Vec<(usize, f64, f64)> = spec
        .support()
        .filter(|&k| k >= 1 && k < half)
        .map(|k| (k, 2.0 * spec.level(k).sqrt(), phases[k - 1]))
        .collect();
    let out = (0..t)
        .map(|n| {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let mut acc = dc + sign * nyq;
            for &(k, amp, phi) in &tones {
                // Reduce kn mod T before scaling to keep the argument small.
                let arg = 2.0 * PI * ((k * n) % t) as f64 / t as f64 + phi;
                acc += amp * arg.cos();
            }
            scale * acc
        })
        .collect();
    Ok(out)
}

/// Synthesizes one latent channel per spec, phases taken row by row.
pub fn synthesize_latents(specs: &[PsdSpec], phases: &PhaseDraw) -> Result<SignalEnsemble> {
    if phases.phases.nrows() != specs.len() {
        return Err(Error::SizeMismatch {
            expected: specs.len(),
            found: phases.phases.nrows(),
        });
    }
    let rows = specs
        .iter()
        .enumerate()
        .map(|(m, s)| synthesize_latent(s, &phases.row(m)))
        .collect::<Result<Vec<_>>>()?;
    SignalEnsemble::from_rows(Role::Latent, &rows)
}

/// `X = U·A`.
pub fn mix(u: &MixingMatrix, latent: &SignalEnsemble) -> Result<SignalEnsemble> {
    if latent.channels() != u.m() {
        return Err(Error::DimensionError(format!(
            "mixing matrix expects {} latent channels, got {}",
            u.m(),
            latent.channels()
        )));
    }
    SignalEnsemble::new(Role::Observed, u.matrix() * latent.data())
}

/// Circular cross-correlation `R(τ) = (1/T)·Σ_t a(t)·b((t−τ) mod T)` for
/// `τ = −max_lag..=max_lag`; element `i` holds lag `i − max_lag`.
pub fn empirical_cross_correlation(a: &[f64], b: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let t = a.len();
    if b.len() != t {
        return Err(Error::SizeMismatch {
            expected: t,
            found: b.len(),
        });
    }
    if max_lag >= t {
        return Err(Error::DomainError(format!(
            "max_lag {max_lag} must be below length {t}"
        )));
    }
    let lags = -(max_lag as isize)..=(max_lag as isize);
    Ok(lags
        .map(|tau| {
            let s: f64 = (0..t)
                .map(|n| {
                    let j = (n as isize - tau).rem_euclid(t as isize) as usize;
                    a[n] * b[j]
                })
                .sum();
            s / t as f64
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dft::Dft;
    use crate::spectral::{random_psd_spec, Block, RandomPsdParams};

    fn grid(t: usize) -> FrequencyGrid {
        FrequencyGrid::new(t).unwrap()
    }

    #[test]
    fn zero_spectrum_gives_zero_signal() {
        let spec = PsdSpec::new(grid(16), []).unwrap();
        let a = synthesize_latent(&spec, &[0.3; 7]).unwrap();
        assert!(a.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_tone_closed_form() {
        let t = 32;
        let k0 = 5;
        let spec =
            PsdSpec::from_positive_blocks(grid(t), [Block::new(k0, k0 + 1, t as f64)]).unwrap();
        let a = synthesize_latent(&spec, &vec![0.0; t / 2 - 1]).unwrap();
        for (n, v) in a.iter().enumerate() {
            let expected = 2.0 * (2.0 * PI * (k0 * n) as f64 / t as f64).cos();
            assert!((v - expected).abs() < 1e-12, "t={n}: {v} vs {expected}");
        }
        let spectrum = Dft::new(t).forward_real(&a);
        for (k, c) in spectrum.iter().enumerate() {
            let p = c.norm_sqr() / t as f64;
            if k == k0 || k == t - k0 {
                assert!((p - t as f64).abs() < 1e-9);
            } else {
                assert!(p < 1e-20);
            }
        }
    }

    #[test]
    fn phase_length_checked() {
        let spec = PsdSpec::new(grid(16), []).unwrap();
        assert!(matches!(
            synthesize_latent(&spec, &[0.0; 3]),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn periodogram_reproduces_prescribed_levels() {
        let g = grid(256);
        let spec = random_psd_spec(g, 11, &RandomPsdParams::default()).unwrap();
        let phases = PhaseDraw::draw(1, g, 5);
        let a = synthesize_latent(&spec, &phases.row(0)).unwrap();
        let spectrum = Dft::new(256).forward_real(&a);
        let dense = spec.dense();
        let peak = dense.iter().cloned().fold(0.0, f64::max);
        for (k, c) in spectrum.iter().enumerate() {
            let p = c.norm_sqr() / 256.0;
            if dense[k] == 0.0 {
                assert!(p <= 1e-18 * peak, "bin {k} leaks {p}");
            } else {
                assert!((p - dense[k]).abs() <= 1e-10 * dense[k]);
            }
        }
    }

    #[test]
    fn phases_in_range_and_seeded() {
        let d = PhaseDraw::draw(3, grid(64), 9);
        assert!(d.phases.iter().all(|&p| (0.0..2.0 * PI).contains(&p)));
        assert_eq!(d, PhaseDraw::draw(3, grid(64), 9));
        assert_eq!(d.phases.shape(), (3, 31));
    }

    #[test]
    fn mixing_matrix_generation() {
        let u = random_mixing_matrix(3, 3, 4).unwrap();
        assert_eq!(linalg::rank(u.matrix()), 3);
        assert!(matches!(
            random_mixing_matrix(2, 3, 0),
            Err(Error::DimensionError(_))
        ));
        assert_eq!(
            random_mixing_matrix(8, 4, 1).unwrap(),
            random_mixing_matrix(8, 4, 1).unwrap()
        );
    }

    #[test]
    fn mixing_matrix_validation() {
        let zero_row = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            MixingMatrix::new(zero_row),
            Err(Error::RankDeficient(_))
        ));
        let dependent = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(matches!(
            MixingMatrix::new(dependent),
            Err(Error::RankDeficient(_))
        ));
    }

    fn latent_pair(t: usize) -> SignalEnsemble {
        let g = grid(t);
        let specs = [
            PsdSpec::from_positive_blocks(g, [Block::new(2, 6, 1.0)]).unwrap(),
            PsdSpec::from_positive_blocks(g, [Block::new(9, 12, 2.0)]).unwrap(),
        ];
        synthesize_latents(&specs, &PhaseDraw::draw(2, g, 3)).unwrap()
    }

    #[test]
    fn identity_mix_is_noop() {
        let a = latent_pair(32);
        let x = mix(&MixingMatrix::new(DMatrix::identity(2, 2)).unwrap(), &a).unwrap();
        assert_eq!(x.data(), a.data());
        assert_eq!(x.role(), Role::Observed);
    }

    #[test]
    fn duplicated_row_duplicates_channel() {
        let a = latent_pair(32);
        let u = MixingMatrix::new(DMatrix::from_row_slice(
            3,
            2,
            &[0.5, -1.0, 0.5, -1.0, 2.0, 0.1],
        ))
        .unwrap();
        let x = mix(&u, &a).unwrap();
        assert_eq!(x.row(0), x.row(1));
    }

    #[test]
    fn zero_latent_channel_drops_its_column() {
        let mut data = latent_pair(32).into_data();
        data.row_mut(1).fill(0.0);
        let a = SignalEnsemble::new(Role::Latent, data.clone()).unwrap();
        let u = random_mixing_matrix(4, 2, 2).unwrap();
        let x = mix(&u, &a).unwrap();
        let reduced = u.columns(&[0]) * data.rows(0, 1);
        assert!((x.data() - reduced).norm() < 1e-14);
    }

    #[test]
    fn mix_dimension_checked() {
        let a = latent_pair(32);
        let u = random_mixing_matrix(4, 3, 2).unwrap();
        assert!(matches!(mix(&u, &a), Err(Error::DimensionError(_))));
    }

    #[test]
    fn cross_correlation_basics() {
        let ones = vec![1.0; 16];
        let zeros = vec![0.0; 16];
        assert!(empirical_cross_correlation(&ones, &ones, 5)
            .unwrap()
            .iter()
            .all(|&r| (r - 1.0).abs() < 1e-15));
        assert!(empirical_cross_correlation(&ones, &zeros, 5)
            .unwrap()
            .iter()
            .all(|&r| r == 0.0));
        assert!(matches!(
            empirical_cross_correlation(&ones, &zeros[..4], 1),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn disjoint_supports_are_circularly_uncorrelated() {
        let a = latent_pair(64);
        let r = empirical_cross_correlation(&a.row(0), &a.row(1), 63).unwrap();
        let scale = (a.row(0).iter().map(|v| v * v).sum::<f64>()
            * a.row(1).iter().map(|v| v * v).sum::<f64>())
        .sqrt()
            / 64.0;
        assert!(r.iter().all(|v| v.abs() <= 1e-10 * scale));
    }
}
