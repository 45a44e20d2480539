//! Acquisition: ideal bandpass extraction per subband, spatial row
//! selection, uniform-as-possible temporal decimation, and sample
//! accounting.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dft::Dft;
use crate::error::{Error, Result};
use crate::linalg;
use crate::spectral::{FrequencyGrid, PsdSpec, Subband, SubbandPlan};
use crate::synthesis::{MixingMatrix, SignalEnsemble};

/// Complex `channels × T` signal.
pub type ComplexSignals = DMatrix<Complex64>;

/// DFTs of every channel of an observed ensemble, computed once and masked
/// per subband.
#[derive(Debug, Clone)]
pub struct ChannelSpectra {
    dft: Dft,
    spectra: ComplexSignals,
}

impl ChannelSpectra {
    pub fn new(x: &SignalEnsemble) -> Self {
        let dft = Dft::new(x.len());
        let mut spectra = ComplexSignals::zeros(x.channels(), x.len());
        for i in 0..x.channels() {
            let s = dft.forward_real(&x.row(i));
            spectra
                .row_mut(i)
                .iter_mut()
                .zip(s)
                .for_each(|(d, v)| *d = v);
        }
        ChannelSpectra { dft, spectra }
    }

    pub fn grid_len(&self) -> usize {
        self.dft.len()
    }

    /// Ideal bandpass output of the listed channels for bins `[lo, hi)`.
    pub fn band(&self, lo: usize, hi: usize, rows: &[usize]) -> ComplexSignals {
        let t = self.dft.len();
        let mut out = ComplexSignals::zeros(rows.len(), t);
        let mut buf = vec![Complex64::new(0.0, 0.0); t];
        for (r, &i) in rows.iter().enumerate() {
            buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            for k in lo..hi {
                buf[k] = self.spectra[(i, k)];
            }
            let time = self.dft.inverse(&buf);
            out.row_mut(r)
                .iter_mut()
                .zip(time)
                .for_each(|(d, v)| *d = v);
        }
        out
    }
}

/// `X ∗ h^l` with `H^l` the indicator of the subband's bins, for all
/// channels.
pub fn subband_component(x: &SignalEnsemble, subband: &Subband) -> Result<ComplexSignals> {
    if subband.hi > x.len() || subband.lo >= subband.hi {
        return Err(Error::GridMismatch {
            expected: x.len(),
            found: subband.hi,
        });
    }
    let rows: Vec<usize> = (0..x.channels()).collect();
    Ok(ChannelSpectra::new(x).band(subband.lo, subband.hi, &rows))
}

/// Channels `Ξ^l` acquired in one subband.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSelection {
    /// Strictly increasing channel indices, `|Ξ^l| = |Γ^l|`.
    pub rows: Vec<usize>,
    /// Condition number of `U(Ξ^l, Γ^l)`.
    pub condition: f64,
}

/// Picks `|Γ|` rows of `U(·, Γ)` by column-pivoted orthogonalization of its
/// transpose, so the best-conditioned rows come first.
pub fn select_rows(u: &MixingMatrix, active: &[usize]) -> Result<RowSelection> {
    if active.is_empty() || active.iter().any(|&m| m >= u.m()) {
        return Err(Error::DimensionError(format!(
            "active set {active:?} is empty or exceeds {} sources",
            u.m()
        )));
    }
    let sub = u.columns(active);
    let pivots =
        linalg::pivoted_columns(&sub.transpose(), active.len(), 1e-12).map_err(|step| {
            Error::RankDeficient(format!(
                "U(·, {active:?}) has only {step} independent rows, need {}",
                active.len()
            ))
        })?;
    let mut rows = pivots;
    rows.sort_unstable();
    let condition = linalg::condition_number(&sub.select_rows(&rows));
    Ok(RowSelection { rows, condition })
}

/// `t_i = ⌊i·T/W⌋` for `i = 0..W`.
pub fn temporal_positions(width: usize, len: usize) -> Result<Vec<usize>> {
    if width == 0 || width > len {
        return Err(Error::DomainError(format!(
            "need 1 <= W <= T, got W={width}, T={len}"
        )));
    }
    Ok((0..width).map(|i| i * len / width).collect())
}

/// Samples taken in one subband.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSamples {
    /// Index into the plan's subband list.
    pub l: usize,
    pub rows: Vec<usize>,
    pub times: Vec<usize>,
    /// `rows.len() × times.len()`.
    pub values: ComplexSignals,
}

impl SubbandSamples {
    pub fn count(&self) -> usize {
        self.values.len()
    }
}

/// Every spatio-temporal sample of one acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub grid: FrequencyGrid,
    /// Observed channel count.
    pub n: usize,
    pub subbands: Vec<SubbandSamples>,
}

impl SampleSet {
    pub fn count(&self) -> usize {
        self.subbands.iter().map(SubbandSamples::count).sum()
    }

    pub fn subband(&self, l: usize) -> Option<&SubbandSamples> {
        self.subbands.iter().find(|s| s.l == l)
    }

    /// Copy with subband `l` removed; used to demonstrate sampling below the
    /// bound.
    pub fn without_subband(&self, l: usize) -> SampleSet {
        SampleSet {
            grid: self.grid,
            n: self.n,
            subbands: self.subbands.iter().filter(|s| s.l != l).cloned().collect(),
        }
    }

    /// Value-wise `a·self + b·other` for two sets from the same plan.
    pub fn combine(&self, a: f64, other: &SampleSet, b: f64) -> Result<SampleSet> {
        if self.subbands.len() != other.subbands.len() || self.n != other.n {
            return Err(Error::DimensionError(
                "sample sets come from different plans".into(),
            ));
        }
        let subbands = self
            .subbands
            .iter()
            .zip(&other.subbands)
            .map(|(x, y)| {
                if x.l != y.l || x.rows != y.rows || x.times != y.times {
                    return Err(Error::DimensionError(format!(
                        "subband {} layouts differ",
                        x.l
                    )));
                }
                Ok(SubbandSamples {
                    values: x.values.map(|v| v * a) + y.values.map(|v| v * b),
                    ..x.clone()
                })
            })
            .collect::<Result<_>>()?;
        Ok(SampleSet {
            grid: self.grid,
            n: self.n,
            subbands,
        })
    }
}

/// Samples all subbands of `x`: bandpass, restrict to `Ξ^l`, read at the
/// temporal positions for width `W^l`.
pub fn acquire(x: &SignalEnsemble, plan: &SubbandPlan, u: &MixingMatrix) -> Result<SampleSet> {
    if x.grid() != plan.grid {
        return Err(Error::GridMismatch {
            expected: plan.grid.len(),
            found: x.len(),
        });
    }
    if x.channels() != u.n() || plan.sources != u.m() {
        return Err(Error::DimensionError(format!(
            "signal has {} channels and plan {} sources; mixing matrix is {}x{}",
            x.channels(),
            plan.sources,
            u.n(),
            u.m()
        )));
    }
    let spectra = ChannelSpectra::new(x);
    let subbands = plan
        .subbands
        .par_iter()
        .enumerate()
        .map(|(l, sb)| {
            let selection = select_rows(u, &sb.active)?;
            let times = temporal_positions(sb.width(), x.len())?;
            let band = spectra.band(sb.lo, sb.hi, &selection.rows);
            let values = band.select_columns(&times);
            Ok(SubbandSamples {
                l,
                rows: selection.rows,
                times,
                values,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleSet {
        grid: plan.grid,
        n: x.channels(),
        subbands,
    })
}

/// `|S| / (T·N)`.
pub fn sampling_density(samples: &SampleSet) -> f64 {
    if samples.n == 0 {
        return 0.0;
    }
    samples.count() as f64 / (samples.grid.len() * samples.n) as f64
}

/// Sample budget when each channel is sampled on its own at the rate of its
/// own spectral support.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparateBaseline {
    pub per_channel: Vec<usize>,
    pub total: usize,
}

/// Channel `n` occupies the union of the supports of the sources it mixes
/// with nonzero weight.
pub fn separate_baseline(u: &MixingMatrix, specs: &[PsdSpec]) -> Result<SeparateBaseline> {
    if specs.len() != u.m() {
        return Err(Error::DimensionError(format!(
            "{} specs for a mixing matrix with {} sources",
            specs.len(),
            u.m()
        )));
    }
    let Some(grid) = specs.first().map(PsdSpec::grid) else {
        return Ok(SeparateBaseline {
            per_channel: vec![0; u.n()],
            total: 0,
        });
    };
    let dense: Vec<Vec<f64>> = specs.iter().map(PsdSpec::dense).collect();
    let per_channel: Vec<usize> = (0..u.n())
        .map(|n| {
            (0..grid.len())
                .filter(|&k| (0..u.m()).any(|m| u.matrix()[(n, m)] != 0.0 && dense[m][k] > 0.0))
                .count()
        })
        .collect();
    let total = per_channel.iter().sum();
    Ok(SeparateBaseline { per_channel, total })
}

#[derive(Serialize, Deserialize)]
struct SampleSetDocument {
    #[serde(rename = "T")]
    len: usize,
    #[serde(rename = "N")]
    n: usize,
    subbands: Vec<SubbandDocument>,
}

#[derive(Serialize, Deserialize)]
struct SubbandDocument {
    l: usize,
    rows: Vec<usize>,
    times: Vec<usize>,
    values: Vec<[f64; 2]>,
}

impl Serialize for SampleSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let subbands = self
            .subbands
            .iter()
            .map(|sb| SubbandDocument {
                l: sb.l,
                rows: sb.rows.clone(),
                times: sb.times.clone(),
                values: (0..sb.values.nrows())
                    .flat_map(|i| (0..sb.values.ncols()).map(move |j| (i, j)))
                    .map(|(i, j)| [sb.values[(i, j)].re, sb.values[(i, j)].im])
                    .collect(),
            })
            .collect();
        SampleSetDocument {
            len: self.grid.len(),
            n: self.n,
            subbands,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SampleSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = SampleSetDocument::deserialize(d)?;
        let grid = FrequencyGrid::new(doc.len).map_err(D::Error::custom)?;
        let subbands = doc
            .subbands
            .into_iter()
            .map(|sb| {
                let (r, c) = (sb.rows.len(), sb.times.len());
                if sb.values.len() != r * c {
                    return Err(D::Error::custom(format!(
                        "subband {} lists {} values for {r} rows x {c} times",
                        sb.l,
                        sb.values.len()
                    )));
                }
                if sb.times.iter().any(|&t| t >= doc.len) || sb.rows.iter().any(|&i| i >= doc.n) {
                    return Err(D::Error::custom(format!(
                        "subband {} index out of range",
                        sb.l
                    )));
                }
                let values = DMatrix::from_fn(r, c, |i, j| {
                    Complex64::new(sb.values[i * c + j][0], sb.values[i * c + j][1])
                });
                Ok(SubbandSamples {
                    l: sb.l,
                    rows: sb.rows,
                    times: sb.times,
                    values,
                })
            })
            .collect::<std::result::Result<_, _>>()?;
        Ok(SampleSet {
            grid,
            n: doc.n,
            subbands,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{partition_subbands, total_bandwidth, Block, RandomPsdParams};
    use crate::synthesis::{mix, random_mixing_matrix, synthesize_latents, PhaseDraw, Role};
    use std::f64::consts::PI;

    fn grid(t: usize) -> FrequencyGrid {
        FrequencyGrid::new(t).unwrap()
    }

    #[test]
    fn positions() {
        assert_eq!(
            temporal_positions(16, 16).unwrap(),
            (0..16).collect::<Vec<_>>()
        );
        assert_eq!(temporal_positions(4, 16).unwrap(), vec![0, 4, 8, 12]);
        assert_eq!(temporal_positions(3, 16).unwrap(), vec![0, 5, 10]);
        assert!(matches!(
            temporal_positions(0, 16),
            Err(Error::DomainError(_))
        ));
        assert!(matches!(
            temporal_positions(17, 16),
            Err(Error::DomainError(_))
        ));
    }

    #[test]
    fn row_selection_examples() {
        let id = MixingMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(select_rows(&id, &[0, 2]).unwrap().rows, vec![0, 2]);

        let col = MixingMatrix::new(DMatrix::from_row_slice(2, 1, &[1.0, 2.0])).unwrap();
        assert_eq!(select_rows(&col, &[0]).unwrap().rows, vec![1]);
    }

    #[test]
    fn selected_block_is_invertible() {
        let u = random_mixing_matrix(8, 4, 3).unwrap();
        for active in [vec![0], vec![1, 3], vec![0, 1, 2, 3]] {
            let sel = select_rows(&u, &active).unwrap();
            let det = u.columns(&active).select_rows(&sel.rows).determinant();
            assert!(det.abs() > 1e-8);
            assert!(sel.rows.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(sel, select_rows(&u, &active).unwrap());
        }
    }

    #[test]
    fn tone_component_is_half_amplitude_exponential() {
        let t = 32;
        let k0 = 3;
        let x: Vec<f64> = (0..t)
            .map(|n| (2.0 * PI * (k0 * n) as f64 / t as f64 + 0.4).cos())
            .collect();
        let x = SignalEnsemble::from_rows(Role::Observed, &[x]).unwrap();
        let sb = Subband {
            lo: 2,
            hi: 5,
            active: vec![0],
        };
        let c = subband_component(&x, &sb).unwrap();
        for n in 0..t {
            let expected =
                0.5 * Complex64::from_polar(1.0, 2.0 * PI * (k0 * n) as f64 / t as f64 + 0.4);
            assert!((c[(0, n)] - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn block_plus_mirror_reassembles_signal() {
        let g = grid(64);
        let spec = PsdSpec::from_positive_blocks(g, [Block::new(5, 9, 1.0)]).unwrap();
        let a = synthesize_latents(std::slice::from_ref(&spec), &PhaseDraw::draw(1, g, 1)).unwrap();
        let plan = partition_subbands(&[spec]).unwrap();
        let sum = plan
            .subbands
            .iter()
            .map(|sb| subband_component(&a, sb).unwrap())
            .fold(ComplexSignals::zeros(1, 64), |acc, c| acc + c);
        let err: f64 = (0..64)
            .map(|n| (sum[(0, n)] - Complex64::new(a.data()[(0, n)], 0.0)).norm_sqr())
            .sum();
        assert!(err.sqrt() <= 1e-12 * a.data().norm());
    }

    #[test]
    fn structural_zero_row_gives_zero_component() {
        let g = grid(64);
        let specs = [
            PsdSpec::from_positive_blocks(g, [Block::new(2, 6, 1.0)]).unwrap(),
            PsdSpec::from_positive_blocks(g, [Block::new(10, 14, 1.0)]).unwrap(),
        ];
        // Channel 2 only sees source 1.
        let u = MixingMatrix::new(DMatrix::from_row_slice(
            3,
            2,
            &[1.0, 0.5, -0.3, 2.0, 0.0, 1.0],
        ))
        .unwrap();
        let x = mix(
            &u,
            &synthesize_latents(&specs, &PhaseDraw::draw(2, g, 8)).unwrap(),
        )
        .unwrap();
        let plan = partition_subbands(&specs).unwrap();
        let sb = plan.subbands.iter().find(|s| s.active == vec![0]).unwrap();
        let c = subband_component(&x, sb).unwrap();
        assert!(c.row(2).iter().all(|v| v.norm() < 1e-15));
        assert!(c.row(0).iter().any(|v| v.norm() > 1e-3));
    }

    fn random_setup(
        t: usize,
        n: usize,
        m: usize,
        seed: u64,
    ) -> (Vec<PsdSpec>, MixingMatrix, SignalEnsemble) {
        let g = grid(t);
        let specs: Vec<_> = (0..m)
            .map(|i| random_psd_spec_for(g, seed * 31 + i as u64))
            .collect();
        let u = random_mixing_matrix(n, m, seed).unwrap();
        let a = synthesize_latents(&specs, &PhaseDraw::draw(m, g, seed + 1)).unwrap();
        (specs, u.clone(), mix(&u, &a).unwrap())
    }

    fn random_psd_spec_for(g: FrequencyGrid, seed: u64) -> PsdSpec {
        crate::spectral::random_psd_spec(
            g,
            seed,
            &RandomPsdParams {
                width_range: (2, (g.len() / 16).max(2)),
                ..RandomPsdParams::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn acquire_counts_total_bandwidth() {
        let (specs, u, x) = random_setup(512, 8, 4, 2);
        let plan = partition_subbands(&specs).unwrap();
        let s = acquire(&x, &plan, &u).unwrap();
        let b = total_bandwidth(&specs).unwrap();
        assert_eq!(s.count(), b);
        assert!(b < 8 * 512);
        assert_eq!(sampling_density(&s), b as f64 / (512.0 * 8.0));
        for sb in &s.subbands {
            let w = plan.subbands[sb.l].width();
            assert_eq!(sb.times.len(), w);
            assert_eq!(sb.rows.len(), plan.subbands[sb.l].active.len());
        }
    }

    #[test]
    fn zero_signal_still_counts() {
        let (specs, u, x) = random_setup(128, 4, 2, 5);
        let zero = SignalEnsemble::new(Role::Observed, DMatrix::zeros(4, 128)).unwrap();
        let plan = partition_subbands(&specs).unwrap();
        let s = acquire(&zero, &plan, &u).unwrap();
        assert_eq!(s.count(), total_bandwidth(&specs).unwrap());
        assert!(s
            .subbands
            .iter()
            .all(|sb| sb.values.iter().all(|v| v.norm() == 0.0)));
        drop(x);
    }

    #[test]
    fn full_band_single_channel_is_nyquist() {
        let g = grid(16);
        let spec = PsdSpec::new(g, [Block::new(0, 16, 1.0)]).unwrap();
        let a = synthesize_latents(std::slice::from_ref(&spec), &PhaseDraw::draw(1, g, 0)).unwrap();
        let u = MixingMatrix::new(DMatrix::identity(1, 1)).unwrap();
        let x = mix(&u, &a).unwrap();
        let plan = partition_subbands(&[spec]).unwrap();
        let s = acquire(&x, &plan, &u).unwrap();
        assert_eq!(s.count(), 16);
        for n in 0..16 {
            assert!(
                (s.subbands[0].values[(0, n)] - Complex64::new(x.data()[(0, n)], 0.0)).norm()
                    < 1e-14
            );
        }
    }

    #[test]
    fn density_edge_cases() {
        let empty = SampleSet {
            grid: grid(8),
            n: 2,
            subbands: vec![],
        };
        assert_eq!(sampling_density(&empty), 0.0);
        let full = SampleSet {
            grid: grid(8),
            n: 1,
            subbands: vec![SubbandSamples {
                l: 0,
                rows: vec![0],
                times: (0..8).collect(),
                values: ComplexSignals::zeros(1, 8),
            }],
        };
        assert_eq!(sampling_density(&full), 1.0);
    }

    #[test]
    fn baseline_counts() {
        let g = grid(64);
        let specs = vec![
            PsdSpec::from_positive_blocks(g, [Block::new(2, 6, 1.0)]).unwrap(),
            PsdSpec::from_positive_blocks(g, [Block::new(4, 10, 1.0)]).unwrap(),
        ];
        let dense = random_mixing_matrix(3, 2, 1).unwrap();
        let base = separate_baseline(&dense, &specs).unwrap();
        // Union of [2,10) and its mirror.
        assert_eq!(base.per_channel, vec![16, 16, 16]);
        assert_eq!(base.total, 48);

        let sparse =
            MixingMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(
            separate_baseline(&sparse, &specs).unwrap().per_channel,
            vec![8, 12]
        );

        let single = vec![specs[0].clone()];
        let u = random_mixing_matrix(8, 1, 2).unwrap();
        assert_eq!(separate_baseline(&u, &single).unwrap().total, 8 * 8);
    }

    #[test]
    fn json_layout() {
        let (specs, u, x) = random_setup(64, 3, 2, 9);
        let plan = partition_subbands(&specs).unwrap();
        let s = acquire(&x, &plan, &u).unwrap();
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        assert_eq!(v["T"], 64);
        assert_eq!(v["N"], 3);
        let first = &v["subbands"][0];
        let rows = first["rows"].as_array().unwrap().len();
        let times = first["times"].as_array().unwrap().len();
        assert_eq!(first["values"].as_array().unwrap().len(), rows * times);
        let back: SampleSet = serde_json::from_value(v).unwrap();
        assert_eq!(back, s);
    }
}
