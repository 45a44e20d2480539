//! Monte Carlo trial runners behind the sweep, comparison and real-data
//! reports.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{prepare_real_pipeline, ComponentCount, RealPipeline};
use crate::metrics::{self, nmse_db, nmse_threshold_db, ExperimentReport};
use crate::reconstruction::{reconstruct_with, ReconstructOptions, TemporalInterpolator};
use crate::sampling::{
    acquire, sampling_density, separate_baseline, temporal_positions, ChannelSpectra, SampleSet,
};
use crate::spectral::{
    partition_subbands, random_psd_spec, total_bandwidth, FrequencyGrid, PsdSpec, RandomPsdParams,
    SubbandPlan,
};
use crate::synthesis::{
    mix, random_mixing_matrix, synthesize_latents, MixingMatrix, PhaseDraw, SignalEnsemble,
};

/// SplitMix64 finalizer over `(master, index)`; the fixed rule used to give
/// every trial its own seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const MIXING_STREAM: u64 = 1 << 32;
const PHASE_STREAM: u64 = 1 << 33;

/// Shape of one synthetic trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub t: usize,
    pub n: usize,
    pub m: usize,
    pub psd: RandomPsdParams,
}

/// Everything drawn for one trial.
#[derive(Debug, Clone)]
pub struct Trial {
    pub seed: u64,
    pub specs: Vec<PsdSpec>,
    pub mixing: MixingMatrix,
    pub phases: PhaseDraw,
    pub latent: SignalEnsemble,
    pub observed: SignalEnsemble,
    pub plan: SubbandPlan,
}

impl Trial {
    pub fn generate(config: &SyntheticConfig, seed: u64) -> Result<Trial> {
        let grid = FrequencyGrid::new(config.t)?;
        let specs = (0..config.m)
            .map(|m| random_psd_spec(grid, derive_seed(seed, m as u64), &config.psd))
            .collect::<Result<Vec<_>>>()?;
        let mixing = random_mixing_matrix(config.n, config.m, derive_seed(seed, MIXING_STREAM))?;
        let phases = PhaseDraw::draw(config.m, grid, derive_seed(seed, PHASE_STREAM));
        let latent = synthesize_latents(&specs, &phases)?;
        let observed = mix(&mixing, &latent)?;
        let plan = partition_subbands(&specs)?;
        Ok(Trial {
            seed,
            specs,
            mixing,
            phases,
            latent,
            observed,
            plan,
        })
    }
}

/// Result of acquiring and reconstructing one trial with the multi-band
/// scheme.
#[derive(Debug, Clone)]
pub struct MultibandOutcome {
    pub samples: SampleSet,
    pub reconstruction: SignalEnsemble,
    pub report: ExperimentReport,
}

/// Acquire, optionally drop one subband's samples, reconstruct, evaluate.
pub fn run_multiband(
    observed: &SignalEnsemble,
    plan: &SubbandPlan,
    mixing: &MixingMatrix,
    specs: &[PsdSpec],
    ablate: Option<usize>,
) -> Result<MultibandOutcome> {
    let mut samples = acquire(observed, plan, mixing)?;
    if let Some(l) = ablate {
        if l >= plan.len() {
            return Err(Error::DomainError(format!(
                "cannot drop subband {l}: plan has {} subbands",
                plan.len()
            )));
        }
        samples = samples.without_subband(l);
    }
    let options = ReconstructOptions {
        check_imaginary: ablate.is_none(),
    };
    let rec = reconstruct_with(&samples, plan, mixing, options)?;
    let b = total_bandwidth(specs)?;
    let t = plan.grid.len();
    let n = mixing.n();
    let report = ExperimentReport {
        nmse_db: nmse_db(observed.data(), rec.signals.data())?,
        nmse_threshold_db: nmse_threshold_db(plan),
        density: sampling_density(&samples),
        theoretical_density: b as f64 / (t * n) as f64,
        sample_count: samples.count(),
        total_bandwidth: b,
        grid_len: t,
        channels: n,
        multiband_total_samples: b,
        baseline_total_samples: separate_baseline(mixing, specs)?.total,
        max_condition: rec.max_condition(),
        subbands: rec.diagnostics.clone(),
        seeds: vec![],
        config: serde_json::Value::Null,
    };
    Ok(MultibandOutcome {
        samples,
        reconstruction: rec.signals,
        report,
    })
}

/// Separate sampling: each channel acquired on every subband it occupies at
/// that subband's rate, reconstructed with the same exact bandlimited solve.
/// Returns `(sample count, reconstruction)`.
pub fn run_separate(
    observed: &SignalEnsemble,
    plan: &SubbandPlan,
    mixing: &MixingMatrix,
) -> Result<(usize, SignalEnsemble)> {
    let t = plan.grid.len();
    let spectra = ChannelSpectra::new(observed);
    let mut total = DMatrix::<Complex64>::zeros(observed.channels(), t);
    let mut count = 0;
    for sb in &plan.subbands {
        let rows: Vec<usize> = (0..observed.channels())
            .filter(|&n| sb.active.iter().any(|&m| mixing.matrix()[(n, m)] != 0.0))
            .collect();
        if rows.is_empty() {
            continue;
        }
        let times = temporal_positions(sb.width(), t)?;
        let interp = TemporalInterpolator::for_subband(sb, &times, t)?;
        let band = spectra.band(sb.lo, sb.hi, &rows);
        for (r, &n) in rows.iter().enumerate() {
            let samples: Vec<Complex64> = times.iter().map(|&ti| band[(r, ti)]).collect();
            count += samples.len();
            let full = interp.interpolate(&samples)?;
            total
                .row_mut(n)
                .iter_mut()
                .zip(full)
                .for_each(|(d, v)| *d += v);
        }
    }
    let rec = SignalEnsemble::new(crate::synthesis::Role::Reconstructed, total.map(|v| v.re))?;
    Ok((count, rec))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::DomainError(format!("cannot start worker pool: {e}")))
}

/// `M = round(ratio·N)`, at least 1.
pub fn sources_for_ratio(n: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::DomainError(format!(
            "M/N ratio must lie in (0, 1], got {ratio}"
        )));
    }
    Ok(((ratio * n as f64).round() as usize).clamp(1, n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub t: usize,
    pub n: usize,
    pub ratios: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub psd: RandomPsdParams,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
    pub ablate_drop_subband: Option<usize>,
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio: f64,
    pub m: usize,
    pub trial: usize,
    pub seed: u64,
    pub report: ExperimentReport,
    pub verified: bool,
}

/// Runs `trials` trials per ratio. Output order is (ratio, trial) no matter
/// how the pool schedules the work.
pub fn sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    if config.trials == 0 {
        return Err(Error::DomainError("trials must be at least 1".into()));
    }
    let jobs: Vec<(usize, f64, usize, usize)> = config
        .ratios
        .iter()
        .enumerate()
        .map(|(ri, &ratio)| Ok((ri, ratio, sources_for_ratio(config.n, ratio)?)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flat_map(|(ri, ratio, m)| (0..config.trials).map(move |trial| (ri, ratio, m, trial)))
        .collect();
    pool(config.workers)?.install(|| {
        jobs.par_iter()
            .map(|&(ri, ratio, m, trial)| {
                let index = (ri * config.trials + trial) as u64;
                let seed = derive_seed(config.seed, index);
                let synth = SyntheticConfig {
                    t: config.t,
                    n: config.n,
                    m,
                    psd: config.psd,
                };
                let tr = Trial::generate(&synth, seed)?;
                let mut out = run_multiband(
                    &tr.observed,
                    &tr.plan,
                    &tr.mixing,
                    &tr.specs,
                    config.ablate_drop_subband,
                )?;
                out.report.seeds = vec![config.seed, seed];
                out.report.config = serde_json::to_value(synth)?;
                let verified = metrics::verify_density_bound(&out.report);
                Ok(SweepRow {
                    ratio,
                    m,
                    trial,
                    seed,
                    report: out.report,
                    verified,
                })
            })
            .collect()
    })
}

/// `ratio,m,trial,seed,nmse_db,density,theoretical_density,samples,total_bandwidth,max_condition,verified`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(
        "ratio,m,trial,seed,nmse_db,density,theoretical_density,samples,total_bandwidth,max_condition,verified\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.ratio,
            r.m,
            r.trial,
            r.seed,
            r.report.nmse_db,
            r.report.density,
            r.report.theoretical_density,
            r.report.sample_count,
            r.report.total_bandwidth,
            r.report.max_condition,
            r.verified
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub t: usize,
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    pub seed: u64,
    pub psd: RandomPsdParams,
    pub workers: usize,
}

/// Multi-band against separate sampling on one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub trial: usize,
    pub seed: u64,
    pub multiband_samples: usize,
    pub separate_samples: usize,
    /// Samples divided by `T`.
    pub multiband_rate: f64,
    pub separate_rate: f64,
    pub multiband_nmse_db: f64,
    pub separate_nmse_db: f64,
}

pub fn compare(config: &CompareConfig) -> Result<Vec<CompareRow>> {
    if config.trials == 0 {
        return Err(Error::DomainError("trials must be at least 1".into()));
    }
    let synth = SyntheticConfig {
        t: config.t,
        n: config.n,
        m: config.m,
        psd: config.psd,
    };
    pool(config.workers)?.install(|| {
        (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let seed = derive_seed(config.seed, trial as u64);
                let tr = Trial::generate(&synth, seed)?;
                let mb = run_multiband(&tr.observed, &tr.plan, &tr.mixing, &tr.specs, None)?;
                let (separate_samples, sep) = run_separate(&tr.observed, &tr.plan, &tr.mixing)?;
                let t = config.t as f64;
                Ok(CompareRow {
                    trial,
                    seed,
                    multiband_samples: mb.report.sample_count,
                    separate_samples,
                    multiband_rate: mb.report.sample_count as f64 / t,
                    separate_rate: separate_samples as f64 / t,
                    multiband_nmse_db: mb.report.nmse_db,
                    separate_nmse_db: nmse_db(tr.observed.data(), sep.data())?,
                })
            })
            .collect()
    })
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut s = String::from(
        "trial,seed,multiband_samples,separate_samples,multiband_rate,separate_rate,multiband_nmse_db,separate_nmse_db\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.trial,
            r.seed,
            r.multiband_samples,
            r.separate_samples,
            r.multiband_rate,
            r.separate_rate,
            r.multiband_nmse_db,
            r.separate_nmse_db
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealConfig {
    pub t: usize,
    pub n: usize,
    pub components: ComponentCount,
    pub fraction: f64,
}

#[derive(Debug, Clone)]
pub struct RealOutcome {
    pub pipeline: RealPipeline,
    pub outcome: MultibandOutcome,
}

/// Real-data path: estimate, threshold, then run the multi-band scheme on
/// the thresholded observations.
pub fn run_real(series: &[Vec<f64>], config: &RealConfig) -> Result<RealOutcome> {
    let pipeline = prepare_real_pipeline(
        series,
        config.t,
        config.n,
        config.components,
        config.fraction,
    )?;
    let plan = partition_subbands(&pipeline.specs)?;
    let mut outcome = run_multiband(
        &pipeline.observed,
        &plan,
        &pipeline.mixing,
        &pipeline.specs,
        None,
    )?;
    outcome.report.config = serde_json::to_value(config)?;
    Ok(RealOutcome { pipeline, outcome })
}
