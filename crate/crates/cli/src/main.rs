//! `multiband`: synthesize, sample, reconstruct and evaluate correlated
//! multichannel signals, and run the Monte Carlo sweeps.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use multiband::experiment::{
    compare, compare_csv, derive_seed, run_real, sweep, sweep_csv, CompareConfig, RealConfig,
    SweepConfig, SyntheticConfig, Trial,
};
use multiband::io::{self, load_corpus};
use multiband::metrics::{nmse_db, nmse_threshold_db, verify_density_bound};
use multiband::reconstruction::reconstruct;
use multiband::sampling::{acquire, sampling_density, SampleSet};
use multiband::spectral::{partition_subbands, total_bandwidth, PsdSpec};
use multiband::synthesis::{Role, SignalEnsemble};
use multiband::ErrorClass;
use serde_json::json;

use config::{ConfigError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "multiband", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for trial-level parallelism (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Drop this subband's samples before reconstruction.
    #[arg(long, global = true)]
    ablate_drop_subband: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// NMSE and density over M/N ratios and seeded trials.
    Sweep,
    /// Multi-band against per-channel sampling on identical realizations.
    Compare,
    /// Estimate latents from a corpus, threshold, sample and reconstruct.
    Real {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Generate one synthetic ensemble with its mixing matrix and PSDs.
    Synth,
    /// Sample an observed ensemble on its multi-band plan.
    Acquire {
        #[arg(long)]
        observed: Option<PathBuf>,
        #[arg(long)]
        mixing: Option<PathBuf>,
        #[arg(long)]
        psd: Option<PathBuf>,
    },
    /// Reconstruct an ensemble from a sample set.
    Reconstruct {
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        mixing: Option<PathBuf>,
        #[arg(long)]
        psd: Option<PathBuf>,
    },
    /// NMSE between a reference and an estimated ensemble.
    Eval {
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        estimate: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Core(multiband::Error),
    /// Run completed but some report failed its bound check.
    Unverified(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<multiband::Error> for Failure {
    fn from(e: multiband::Error) -> Self {
        Failure::Core(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Core(e)) => {
            let (label, code) = match e.class() {
                ErrorClass::Config => ("config error", 2),
                ErrorClass::Data => ("data error", 3),
                ErrorClass::Numerical => ("numerical failure", 4),
            };
            eprintln!("{label}: {e}");
            ExitCode::from(code)
        }
        Err(Failure::Unverified(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(4)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.trials = trials;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    if let Some(workers) = cli.workers {
        cfg.workers = workers;
    }
    if cli.ablate_drop_subband.is_some() {
        cfg.ablate_drop_subband = cli.ablate_drop_subband;
    }
    match cli.command {
        Command::Sweep => {
            cfg.validate()?;
            cmd_sweep(&cfg)
        }
        Command::Compare => {
            cfg.validate()?;
            cmd_compare(&cfg)
        }
        Command::Real { corpus } => {
            override_path(&mut cfg.corpus, corpus);
            cfg.validate()?;
            cmd_real(&cfg)
        }
        Command::Synth => {
            cfg.validate()?;
            cmd_synth(&cfg)
        }
        Command::Acquire {
            observed,
            mixing,
            psd,
        } => {
            override_path(&mut cfg.observed, observed);
            override_path(&mut cfg.mixing, mixing);
            override_path(&mut cfg.psd, psd);
            cmd_acquire(&cfg)
        }
        Command::Reconstruct {
            samples,
            mixing,
            psd,
        } => {
            override_path(&mut cfg.samples, samples);
            override_path(&mut cfg.mixing, mixing);
            override_path(&mut cfg.psd, psd);
            cmd_reconstruct(&cfg)
        }
        Command::Eval {
            reference,
            estimate,
        } => {
            override_path(&mut cfg.reference, reference);
            override_path(&mut cfg.estimate, estimate);
            cmd_eval(&cfg)
        }
    }
}

fn override_path(slot: &mut Option<PathBuf>, flag: Option<PathBuf>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn write_text(path: &Path, text: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| multiband::Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| multiband::Error::io(path, e).into())
}

fn read_ensemble(path: &Path, role: Role) -> CliResult<SignalEnsemble> {
    let binary = path.extension().is_some_and(|e| e == "bin");
    Ok(if binary {
        io::read_ensemble_binary(path)?.with_role(role)
    } else {
        io::read_ensemble_csv(path, role)?
    })
}

fn cmd_sweep(cfg: &ExperimentConfig) -> CliResult {
    let sc = SweepConfig {
        t: cfg.t,
        n: cfg.n,
        ratios: cfg.ratios.clone(),
        trials: cfg.trials,
        seed: cfg.seed,
        psd: cfg.psd_params(),
        workers: cfg.workers,
        ablate_drop_subband: cfg.ablate_drop_subband,
    };
    let rows = sweep(&sc)?;
    write_text(&cfg.out.join("sweep.csv"), &sweep_csv(&rows))?;
    io::write_json(
        &cfg.out.join("sweep.json"),
        &json!({ "config": cfg, "rows": rows }),
    )?;
    let failed = rows.iter().filter(|r| !r.verified).count();
    let worst = rows
        .iter()
        .map(|r| r.report.nmse_db)
        .fold(f64::NEG_INFINITY, f64::max);
    println!(
        "sweep: {} trials, {} verified, worst NMSE {worst:.1} dB -> {}",
        rows.len(),
        rows.len() - failed,
        cfg.out.display()
    );
    if failed > 0 && cfg.ablate_drop_subband.is_none() {
        return Err(Failure::Unverified(format!(
            "{failed} of {} trials failed the density/NMSE check",
            rows.len()
        )));
    }
    Ok(())
}

fn cmd_compare(cfg: &ExperimentConfig) -> CliResult {
    let cc = CompareConfig {
        t: cfg.t,
        n: cfg.n,
        m: cfg.m.unwrap_or((cfg.n / 2).max(1)),
        trials: cfg.trials,
        seed: cfg.seed,
        psd: cfg.psd_params(),
        workers: cfg.workers,
    };
    let rows = compare(&cc)?;
    write_text(&cfg.out.join("compare.csv"), &compare_csv(&rows))?;
    io::write_json(
        &cfg.out.join("compare.json"),
        &json!({ "config": cfg, "m": cc.m, "rows": rows }),
    )?;
    let mean = |f: fn(&multiband::experiment::CompareRow) -> f64| {
        rows.iter().map(f).sum::<f64>() / rows.len() as f64
    };
    println!(
        "compare: mean rate multiband {:.3} vs separate {:.3}; mean NMSE {:.1} vs {:.1} dB",
        mean(|r| r.multiband_rate),
        mean(|r| r.separate_rate),
        mean(|r| r.multiband_nmse_db),
        mean(|r| r.separate_nmse_db)
    );
    Ok(())
}

fn cmd_real(cfg: &ExperimentConfig) -> CliResult {
    let corpus = cfg.require(&cfg.corpus, "corpus")?;
    let series = load_corpus(corpus)?;
    let values: Vec<Vec<f64>> = series.iter().map(|s| s.values.clone()).collect();
    let rc = RealConfig {
        t: cfg.t,
        n: cfg.n,
        components: cfg.component_count(),
        fraction: cfg.threshold,
    };
    let real = run_real(&values, &rc)?;
    let p = &real.pipeline;
    let report = &real.outcome.report;
    let verified = verify_density_bound(report);

    io::write_json(
        &cfg.out.join("real_report.json"),
        &json!({
            "report": report,
            "verified": verified,
            "channels": series.iter().take(cfg.n).map(|s| &s.name).collect::<Vec<_>>(),
            "components": p.estimation.components,
            "retained_variance": p.estimation.retained_variance,
            "singular_values": p.estimation.singular_values,
            "latent_max_cross_correlation": p.latent_cross_correlation,
            "specs": p.specs,
        }),
    )?;

    let mut psd = String::from("bin");
    for m in 0..p.psds.len() {
        let _ = write!(psd, ",latent{m},support{m}");
    }
    psd.push('\n');
    for k in 0..cfg.t {
        let _ = write!(psd, "{k}");
        for (m, spec) in p.psds.iter().zip(&p.specs) {
            let _ = write!(psd, ",{},{}", m[k], u8::from(spec.level(k) > 0.0));
        }
        psd.push('\n');
    }
    write_text(&cfg.out.join("real_psd.csv"), &psd)?;

    // Series carry the channel means that were removed before estimation.
    let rec = real.outcome.reconstruction.data();
    let obs = p.observed.data();
    for (i, s) in series.iter().take(cfg.n).enumerate() {
        let mean = p.estimation.means[i];
        let mut text = String::from("t,raw,original,reconstruction,error\n");
        for t in 0..cfg.t {
            let _ = writeln!(
                text,
                "{t},{},{},{},{}",
                s.values[t],
                obs[(i, t)] + mean,
                rec[(i, t)] + mean,
                rec[(i, t)] - obs[(i, t)]
            );
        }
        write_text(
            &cfg.out
                .join("real_channels")
                .join(format!("channel_{i:02}.csv")),
            &text,
        )?;
    }
    println!(
        "real: N={} M={} NMSE {:.1} dB, density {:.4} (bound {:.4}), latent max |xcorr| {:.3}",
        cfg.n,
        p.estimation.components,
        report.nmse_db,
        report.density,
        report.theoretical_density,
        p.latent_cross_correlation
    );
    if !verified {
        return Err(Failure::Unverified(format!(
            "real-data reconstruction NMSE {:.1} dB above threshold {:.1} dB",
            report.nmse_db, report.nmse_threshold_db
        )));
    }
    Ok(())
}

fn cmd_synth(cfg: &ExperimentConfig) -> CliResult {
    let m = cfg.sources()?;
    let sc = SyntheticConfig {
        t: cfg.t,
        n: cfg.n,
        m,
        psd: cfg.psd_params(),
    };
    let seed = derive_seed(cfg.seed, 0);
    let trial = Trial::generate(&sc, seed)?;
    io::write_ensemble_csv(&cfg.out.join("observed.csv"), &trial.observed)?;
    io::write_ensemble_binary(&cfg.out.join("observed.bin"), &trial.observed)?;
    io::write_ensemble_csv(&cfg.out.join("latent.csv"), &trial.latent)?;
    io::write_mixing_csv(&cfg.out.join("mixing.csv"), &trial.mixing)?;
    io::write_json(&cfg.out.join("psd.json"), &trial.specs)?;
    io::write_json(
        &cfg.out.join("synth.json"),
        &json!({
            "config": sc,
            "seeds": [cfg.seed, seed],
            "total_bandwidth": total_bandwidth(&trial.specs)?,
            "mixing_condition": trial.mixing.condition_number(),
            "plan": trial.plan,
        }),
    )?;
    println!(
        "synth: N={} M={m} T={} B={} -> {}",
        cfg.n,
        cfg.t,
        trial.plan.total_samples(),
        cfg.out.display()
    );
    Ok(())
}

fn load_model(
    cfg: &ExperimentConfig,
) -> CliResult<(multiband::synthesis::MixingMatrix, Vec<PsdSpec>)> {
    let mixing = io::read_mixing_csv(cfg.require(&cfg.mixing, "mixing")?)?;
    let specs: Vec<PsdSpec> = io::read_json(cfg.require(&cfg.psd, "psd")?)?;
    Ok((mixing, specs))
}

fn cmd_acquire(cfg: &ExperimentConfig) -> CliResult {
    let observed = read_ensemble(cfg.require(&cfg.observed, "observed")?, Role::Observed)?;
    let (mixing, specs) = load_model(cfg)?;
    let plan = partition_subbands(&specs)?;
    let mut samples = acquire(&observed, &plan, &mixing)?;
    if let Some(l) = cfg.ablate_drop_subband {
        samples = samples.without_subband(l);
    }
    io::write_json(&cfg.out.join("samples.json"), &samples)?;
    println!(
        "acquire: {} samples over {} subbands (B = {}), density {:.4}",
        samples.count(),
        plan.len(),
        plan.total_samples(),
        sampling_density(&samples)
    );
    Ok(())
}

fn cmd_reconstruct(cfg: &ExperimentConfig) -> CliResult {
    let samples: SampleSet = io::read_json(cfg.require(&cfg.samples, "samples")?)?;
    let (mixing, specs) = load_model(cfg)?;
    let plan = partition_subbands(&specs)?;
    let rec = reconstruct(&samples, &plan, &mixing)?;
    io::write_ensemble_csv(&cfg.out.join("reconstructed.csv"), &rec.signals)?;
    let b = total_bandwidth(&specs)?;
    let mut meta = json!({
        "grid_len": plan.grid.len(),
        "channels": samples.n,
        "sample_count": samples.count(),
        "total_bandwidth": b,
        "density": sampling_density(&samples),
        "theoretical_density": b as f64 / (plan.grid.len() * samples.n) as f64,
        "imaginary_residue": rec.imaginary_residue,
        "max_condition": rec.max_condition(),
        "subbands": rec.diagnostics,
        "nmse_threshold_db": nmse_threshold_db(&plan),
    });
    if let Some(path) = &cfg.reference {
        let reference = read_ensemble(path, Role::Observed)?;
        meta["nmse_db"] = json!(nmse_db(reference.data(), rec.signals.data())?);
    }
    io::write_json(&cfg.out.join("reconstructed.json"), &meta)?;
    println!(
        "reconstruct: {} channels x {} -> {}",
        samples.n,
        plan.grid.len(),
        cfg.out.display()
    );
    Ok(())
}

fn cmd_eval(cfg: &ExperimentConfig) -> CliResult {
    let reference = read_ensemble(cfg.require(&cfg.reference, "reference")?, Role::Observed)?;
    let estimate = read_ensemble(cfg.require(&cfg.estimate, "estimate")?, Role::Reconstructed)?;
    let nmse = nmse_db(reference.data(), estimate.data())?;
    io::write_json(&cfg.out.join("eval.json"), &json!({ "nmse_db": nmse }))?;
    println!("eval: NMSE {nmse:.2} dB");
    Ok(())
}
