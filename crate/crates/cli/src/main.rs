//! `oteq` command-line interface.
//!
//! Exit codes: 0 on success, 1 when training aborts on a non-finite loss,
//! 2 on usage, configuration or I/O errors.

use clap::{Parser, Subcommand, ValueEnum};
use oteq::dataset::{generate, write_dataset, DatasetSpec, EvalSet, MANIFEST};
use oteq::eval::{cross_eval, evaluate, format_table, write_cross_eval_csv, Calibration, NamedModel, CENTS_THRESHOLD};
use oteq::io::read_distribution_csv;
use oteq::losses::stability_sweep;
use oteq::ot::{normalize, project_tangent, wasserstein_grad, DiscreteDistribution};
use oteq::trainer::{train, Objective, TrainConfig, TrainedModel};
use oteq::{Error, Result};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "oteq", version, about = "1D optimal transport losses for self-supervised pitch estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Wasserstein cost and distance between two `position,weight` CSV files.
    Dist {
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        /// Ground cost exponent, at least 1.
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Also print the cost gradient with respect to both weight vectors.
        #[arg(long)]
        grad: bool,
    },
    /// Writes a synthetic harmonic-tone dataset.
    Gen {
        /// Dataset JSON; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Trains an encoder and writes a checkpoint plus a metrics log.
    Train {
        /// Training JSON; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config objective.
        #[arg(long, value_enum)]
        objective: Option<ObjectiveArg>,
        /// Overrides the config checkpoint path.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Continues from the checkpoint, appending to its metrics log.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluates a checkpoint on a generated dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory written by `gen`.
        #[arg(long)]
        data: PathBuf,
        /// Calibration JSON overriding the one stored in the checkpoint.
        #[arg(long)]
        calib: Option<PathBuf>,
        /// Writes per-frame cents errors to this CSV.
        #[arg(long)]
        cents_csv: Option<PathBuf>,
    },
    /// Evaluates every model on every set listed in a JSON manifest.
    CrossEval {
        #[arg(long)]
        manifest: PathBuf,
        /// Writes the rows to this CSV as well.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Overflow and finiteness of both equivariance losses on adversarial pairs.
    BenchStability {
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        nbins: Vec<usize>,
        #[arg(long, default_value_t = 24)]
        k_max: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    PestoOt,
    PestoBaseline,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::PestoOt => Objective::PestoOt,
            ObjectiveArg::PestoBaseline => Objective::PestoBaseline,
        }
    }
}

/// Cross-evaluation manifest; relative paths resolve against its directory.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CrossEvalManifest {
    models: Vec<ModelEntry>,
    sets: Vec<SetEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelEntry {
    name: String,
    checkpoint: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SetEntry {
    name: Option<String>,
    data: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Up to 12 significant digits, trailing zeros trimmed.
fn sig12(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-5..15).contains(&exp) {
        return format!("{v:.11e}");
    }
    let s = format!("{:.*}", (11 - exp).max(0) as usize, v);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Sorts atoms by position, merges duplicates and normalizes the weights.
fn load_distribution(path: &Path) -> Result<DiscreteDistribution> {
    let (positions, weights) = read_distribution_csv(path)?;
    let mut atoms: Vec<(f64, f64)> = positions.into_iter().zip(weights).collect();
    if atoms.iter().any(|(p, _)| !p.is_finite()) {
        return Err(Error::Domain(format!("{}: positions must be finite", path.display())));
    }
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    for (p, w) in atoms {
        match merged.last_mut() {
            Some(last) if last.0 == p => last.1 += w,
            _ => merged.push((p, w)),
        }
    }
    let (positions, weights): (Vec<f64>, Vec<f64>) = merged.into_iter().unzip();
    let weights = normalize(&weights).map_err(|e| Error::DegenerateInput(format!("{}: {e}", path.display())))?;
    DiscreteDistribution::new(positions, weights)
}

fn cmd_dist(mu: &Path, nu: &Path, p: f64, grad: bool) -> Result<()> {
    let (mu_d, nu_d) = (load_distribution(mu)?, load_distribution(nu)?);
    let g = wasserstein_grad(&mu_d, &nu_d, p)?;
    println!("cost {}", sig12(g.cost));
    println!("distance {}", sig12(g.cost.powf(1.0 / p)));
    if grad {
        println!("side,position,gradient");
        for (side, d, gv) in [("mu", &mu_d, &g.grad_mu), ("nu", &nu_d, &g.grad_nu)] {
            for (x, v) in d.positions().iter().zip(project_tangent(gv)) {
                println!("{side},{},{}", sig12(*x), sig12(v));
            }
        }
    }
    Ok(())
}

fn cmd_gen(config: Option<&Path>, out: &Path, seed: u64) -> Result<()> {
    let spec: DatasetSpec = match config {
        Some(path) => read_json(path)?,
        None => DatasetSpec::default(),
    };
    spec.validate()?;
    let records = generate(&spec, seed)?;
    let manifest = write_dataset(out, &spec, seed, &records)?;
    println!("wrote {} tones to {}", manifest.tones.len(), out.join(MANIFEST).display());
    Ok(())
}

fn cmd_train(
    config: Option<&Path>,
    seed: Option<u64>,
    objective: Option<ObjectiveArg>,
    checkpoint: Option<PathBuf>,
    resume: bool,
) -> Result<()> {
    let mut cfg = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            TrainConfig::from_json(&text)?
        }
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = objective {
        cfg.objective = o.into();
    }
    if let Some(c) = checkpoint {
        cfg.checkpoint_path = c;
    }
    let model = train(cfg.clone(), resume)?;
    let summary = serde_json::json!({
        "checkpoint": cfg.checkpoint_path,
        "metrics": cfg.metrics_path(),
        "steps": cfg.steps,
        "calibration": model.calibration,
    });
    println!("{summary:#}");
    Ok(())
}

fn cmd_eval(checkpoint: &Path, data: &Path, calib: Option<&Path>, cents_csv: Option<&Path>) -> Result<()> {
    let model = TrainedModel::load(checkpoint)?;
    let calibration: Calibration = match calib {
        Some(path) => read_json(path)?,
        None => model.calibration,
    };
    let set = EvalSet::load(data)?;
    let report = evaluate(&model.encoder, &calibration, &model.frontend, &set)?;
    if let Some(path) = cents_csv {
        report.write_cents_csv(path)?;
    }
    let summary = serde_json::json!({
        "set": report.set,
        "rpa": report.rpa,
        "rca": report.rca,
        "frames": report.frames,
        "threshold_cents": CENTS_THRESHOLD,
        "unvoiced_frames": "skipped",
    });
    println!("{summary:#}");
    Ok(())
}

fn cmd_cross_eval(manifest: &Path, out: Option<&Path>) -> Result<()> {
    let m: CrossEvalManifest = read_json(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let models = m
        .models
        .iter()
        .map(|e| Ok((e.name.clone(), TrainedModel::load(&base.join(&e.checkpoint))?)))
        .collect::<Result<Vec<_>>>()?;
    let sets = m
        .sets
        .iter()
        .map(|e| {
            let mut set = EvalSet::load(&base.join(&e.data))?;
            if let Some(name) = &e.name {
                set.name = name.clone();
            }
            Ok(set)
        })
        .collect::<Result<Vec<_>>>()?;
    let named: Vec<NamedModel<'_, _>> = models
        .iter()
        .map(|(name, t)| NamedModel {
            train_set: name.clone(),
            model: &t.encoder,
            calibration: t.calibration,
            frontend: &t.frontend,
        })
        .collect();
    let rows = cross_eval(&named, &sets)?;
    if let Some(path) = out {
        write_cross_eval_csv(path, &rows)?;
    }
    print!("{}", format_table(&rows));
    Ok(())
}

fn cmd_bench_stability(alphas: &[f64], nbins: &[usize], k_max: usize) -> Result<()> {
    let cells = stability_sweep(alphas, nbins, k_max)?;
    println!("alpha,n_bins,max_power,equiv_overflow,equiv_finite,ot_finite,ot_max");
    for c in cells {
        println!(
            "{},{},{},{},{},{},{}",
            c.alpha,
            c.n_bins,
            sig12(c.max_power),
            c.equiv_overflow,
            c.equiv_finite,
            c.ot_finite,
            sig12(c.ot_max)
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Dist { mu, nu, p, grad } => cmd_dist(&mu, &nu, p, grad),
        Command::Gen { config, out, seed } => cmd_gen(config.as_deref(), &out, seed),
        Command::Train {
            config,
            seed,
            objective,
            checkpoint,
            resume,
        } => cmd_train(config.as_deref(), seed, objective, checkpoint, resume),
        Command::Eval {
            checkpoint,
            data,
            calib,
            cents_csv,
        } => cmd_eval(&checkpoint, &data, calib.as_deref(), cents_csv.as_deref()),
        Command::CrossEval { manifest, out } => cmd_cross_eval(&manifest, out.as_deref()),
        Command::BenchStability { alphas, nbins, k_max } => cmd_bench_stability(&alphas, &nbins, k_max),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NonFiniteLoss { .. } => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
