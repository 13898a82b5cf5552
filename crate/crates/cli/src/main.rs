use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use consensus_core::evalcli::checks::{operator_checks, unet_check};
use consensus_core::evalcli::report::write_metrics_csv;
use consensus_core::evalcli::{
    format_table, load_config, load_dataset, report, save_dataset, score, simulate_dataset, train_objective, Dataset,
    ExperimentConfig, Method,
};
use consensus_core::model::UnetConfig;
use consensus_core::numerics::{save_tensor, Rng, TensorData};
use consensus_core::pair::{Image, Modality};
use consensus_core::theorem_lab::{convergence_experiment, write_convergence_csv, XDist};
use consensus_core::trainer::{load_checkpoint, save_checkpoint, train_from, write_log_csv, Objective, TrainState};
use consensus_core::{Error, Result};

/// Consensus denoising laboratory.
///
/// Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O error.
#[derive(Parser)]
#[command(name = "consensus", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a CT corpus (odd/even view split) and write it to disk.
    SimulateCt {
        #[arg(long)]
        config: PathBuf,
        /// Output directory [default: <out_dir>/data].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate an MR corpus (split k-space masks) and write it to disk.
    SimulateMr {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one objective; checkpoints after every epoch.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// noise2clean | noise2noise | consensus [default: from config].
        #[arg(long)]
        objective: Option<String>,
        /// Checkpoint directory [default: <out_dir>/checkpoints/<objective>].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from this checkpoint directory.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Corpus written by simulate-* [default: <out_dir>/data if present, else simulated].
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Denoise the test slices of a corpus with a checkpoint.
    Denoise {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the input and every available checkpoint on the test slices.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Directory holding noise2noise/, consensus/, noise2clean/ [default: <out_dir>/checkpoints].
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        /// Where metrics.csv goes [default: <out_dir>].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scalar-gain convergence of the noisy-target minimizer to the clean-target one.
    VerifyTheorem {
        /// Comma-separated sample sizes.
        #[arg(long, default_value = "100,1000,10000,100000,1000000")]
        sizes: String,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Clean-value distribution: `constant:C` or `uniform:A,B`.
        #[arg(long, default_value = "constant:1")]
        x_dist: String,
        #[arg(long, default_value = "theorem.csv")]
        out: PathBuf,
    },
    /// Finite-difference checks of every operator and a whole U-Net.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sampled coordinates per tensor for the U-Net check.
        #[arg(long, default_value_t = 20)]
        coords: usize,
        /// Input side for the U-Net check.
        #[arg(long, default_value_t = 16)]
        size: usize,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Full report: metrics CSVs, SSIM provenance and PGM previews.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        /// Report directory [default: <out_dir>/report].
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn data_for(cfg: &ExperimentConfig, data: Option<&Path>) -> Result<Dataset> {
    let default = cfg.out_dir.join("data");
    match data {
        Some(d) => load_dataset(d),
        None if default.join("manifest.txt").exists() => load_dataset(&default),
        None => {
            eprintln!("simulating {} train / {} test slices", cfg.slices_train, cfg.slices_test);
            simulate_dataset(cfg)
        }
    }
}

fn simulate(config: &Path, out: Option<PathBuf>, modality: Modality) -> Result<()> {
    let cfg = load_config(config)?;
    if cfg.modality != modality {
        return Err(Error::Config(format!(
            "{} is a {} config",
            config.display(),
            cfg.modality.label()
        )));
    }
    let out = out.unwrap_or_else(|| cfg.out_dir.join("data"));
    let ds = simulate_dataset(&cfg)?;
    save_dataset(&out, &ds)?;
    println!("wrote {} train / {} test slices to {}", ds.train.len(), ds.test.len(), out.display());
    Ok(())
}

fn train(
    config: &Path,
    objective: Option<String>,
    out: Option<PathBuf>,
    resume: Option<PathBuf>,
    seed: Option<u64>,
    data: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.train.seed = s;
    }
    if let Some(o) = objective {
        cfg.train.objective = Objective::parse(&o)?;
    }
    let objective = cfg.train.objective;
    let data = data_for(&cfg, data.as_deref())?;
    let out = out.unwrap_or_else(|| cfg.out_dir.join("checkpoints").join(objective.label()));
    let report_epoch = |o: Objective, r: &consensus_core::trainer::EpochLog| {
        println!(
            "{o} epoch {:>3}: L_n {:.6e} L_w {:.4e} L_r {:.6e} L {:.6e} val rmse {:.3} ssim {:.2}",
            r.epoch, r.l_n, r.l_w, r.l_r, r.total, r.val_rmse, r.val_ssim
        );
    };
    let state = match resume {
        Some(dir) => {
            let state = load_checkpoint(&dir, Some(&cfg.train))?;
            println!("resuming {} from epoch {}", dir.display(), state.epoch);
            train_from(state, &data.train, &data.test, |s, row| {
                report_epoch(objective, row);
                save_checkpoint(s, &out)
            })?
        }
        None => train_objective(&cfg.train, objective, &data, Some(&out), report_epoch)?,
    };
    save_checkpoint(&state, &out)?;
    write_log_csv(&out.join("log.csv"), &state.log)?;
    println!("checkpoint: {}", out.display());
    Ok(())
}

fn denoise(checkpoint: &Path, data: &Path, out: &Path) -> Result<()> {
    let state = load_checkpoint(checkpoint, None)?;
    let ds = load_dataset(data)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for (i, pair) in ds.test.iter().enumerate() {
        let z = state.denoise(pair)?;
        let path = out.join(format!("{i:04}_denoised.cndt"));
        let dims = [z.height(), z.width()];
        match &z {
            Image::Real(g) => save_tensor(&path, &dims, &TensorData::F64(g.data().to_vec()))?,
            Image::Complex(g) => save_tensor(&path, &dims, &TensorData::ComplexF64(g.data().to_vec()))?,
        }
        let reference = pair.clean.as_ref().unwrap_or(&pair.est);
        consensus_core::evalcli::report::write_preview(&out.join(format!("{i:04}_denoised.pgm")), &z, reference)?;
    }
    println!("denoised {} slices into {}", ds.test.len(), out.display());
    Ok(())
}

fn load_states(dir: &Path, cfg: &ExperimentConfig) -> Result<Vec<TrainState>> {
    let mut states = Vec::new();
    for o in Objective::ALL {
        let sub = dir.join(o.label());
        if sub.join("state.txt").exists() {
            let state = load_checkpoint(&sub, None)?;
            if state.modality != cfg.modality {
                return Err(Error::Config(format!("{} holds a {} model", sub.display(), state.modality.label())));
            }
            states.push(state);
        }
    }
    if states.is_empty() {
        eprintln!("no checkpoints under {}; scoring the input only", dir.display());
    }
    Ok(states)
}

fn evaluate_or_report(
    config: &Path,
    data: Option<PathBuf>,
    checkpoints: Option<PathBuf>,
    out: Option<PathBuf>,
    full: bool,
) -> Result<()> {
    let cfg = load_config(config)?;
    let data = data_for(&cfg, data.as_deref())?;
    let ckpt = checkpoints.unwrap_or_else(|| cfg.out_dir.join("checkpoints"));
    let states = load_states(&ckpt, &cfg)?;
    let rows = score(&data, &states)?;
    print!("{}", format_table(&rows, cfg.modality));
    if full {
        let out = out.unwrap_or_else(|| cfg.out_dir.join("report"));
        let mut methods = vec![Method::Input];
        for s in &states {
            methods.push(Method::Trained(s.config.objective.label(), s));
        }
        report(&out, &rows, cfg.modality, data.test.first().map(|p| (p, &methods[..])))?;
        println!("report: {}", out.display());
    } else {
        let out = out.unwrap_or_else(|| cfg.out_dir.clone());
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        write_metrics_csv(&out.join("metrics.csv"), &rows, cfg.modality)?;
        println!("metrics: {}", out.join("metrics.csv").display());
    }
    Ok(())
}

fn parse_x_dist(s: &str) -> Result<XDist> {
    let bad = || Error::Config(format!("x-dist {s:?}: expected constant:C or uniform:A,B"));
    let (kind, args) = s.split_once(':').ok_or_else(bad)?;
    let nums: Vec<f64> = args
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    match (kind, nums.as_slice()) {
        ("constant", [c]) => Ok(XDist::Constant(*c)),
        ("uniform", [a, b]) if a < b => Ok(XDist::Uniform(*a, *b)),
        _ => Err(bad()),
    }
}

fn verify_theorem(sizes: &str, trials: usize, sigma: f64, seed: u64, x_dist: &str, out: &Path) -> Result<()> {
    let sizes: Vec<usize> = sizes
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| *v >= 2.0 && v.fract() == 0.0)
                .map(|v| v as usize)
                .ok_or_else(|| Error::Config(format!("sample size {s:?}")))
        })
        .collect::<Result<_>>()?;
    let table = convergence_experiment(&sizes, trials, sigma, parse_x_dist(x_dist)?, &Rng::new(seed))?;
    println!("{:>10} {:>14} {:>14}", "N", "median gap", "median theta_c");
    for &(n, gap) in &table.medians {
        println!("{n:>10} {gap:>14.6e} {:>14.6}", table.median_theta_c(n));
    }
    println!("log-log slope: {:.4}", table.slope);
    write_convergence_csv(out, &table)?;
    println!("csv: {}", out.display());
    Ok(())
}

fn gradcheck(seed: u64, coords: usize, size: usize, tol: f64) -> Result<()> {
    let mut checks = operator_checks(seed)?;
    for channels in [1, 2] {
        checks.push(unet_check(UnetConfig::desk(channels), size, coords, seed)?);
    }
    let mut failed = Vec::new();
    for c in &checks {
        let ok = c.report.passes(tol);
        println!(
            "{} {:<36} max rel err {:.3e} ({} checked, {} kinks skipped)",
            if ok { "ok  " } else { "FAIL" },
            c.name,
            c.report.max_rel_error,
            c.report.checked,
            c.report.skipped_kinks
        );
        if !ok {
            failed.push(c.name.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("gradient check failed for {}", failed.join(", "))))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SimulateCt { config, out } => simulate(&config, out, Modality::Ct),
        Command::SimulateMr { config, out } => simulate(&config, out, Modality::Mr),
        Command::Train {
            config,
            objective,
            out,
            resume,
            seed,
            data,
        } => train(&config, objective, out, resume, seed, data),
        Command::Denoise { checkpoint, data, out } => denoise(&checkpoint, &data, &out),
        Command::Evaluate {
            config,
            data,
            checkpoints,
            out,
        } => evaluate_or_report(&config, data, checkpoints, out, false),
        Command::VerifyTheorem {
            sizes,
            trials,
            sigma,
            seed,
            x_dist,
            out,
        } => verify_theorem(&sizes, trials, sigma, seed, &x_dist, &out),
        Command::Gradcheck { seed, coords, size, tol } => gradcheck(seed, coords, size, tol),
        Command::Report {
            config,
            data,
            checkpoints,
            out,
        } => evaluate_or_report(&config, data, checkpoints, out, true),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
