use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use msfuse::diffarray::{Eager, Shape, Tensor};
use msfuse::fusecore::{
    fuse_forward_order_capped, load_checkpoint, save_checkpoint, Checkpoint, FuseConfig,
    FuseParams, StageInput, MAX_ORDER,
};
use msfuse::multistep::{Family, MultistepScheme};
use msfuse::orderlab::{
    run_order_study, scheduler_ode_check, standard_suite, LinearOdeCase, StudyScheme,
    DEFAULT_RESOLUTIONS,
};
use msfuse::toyseg::{evaluate, load_dataset, pipeline_gradcheck, save_dataset, synth_dataset, train, TrainConfig};
use msfuse::Error;

/// Adams multistep coefficients, order studies, fusion traces and the toy
/// segmentation demo.
#[derive(Parser)]
#[command(name = "msfuse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the b_j coefficients of an Adams scheme, oldest to newest.
    Coeffs {
        #[arg(long)]
        family: String,
        #[arg(long)]
        steps: usize,
    },
    /// Empirical convergence orders of every scheme on the benchmark suite.
    OrderStudy {
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the stage-by-stage scheme schedule for L stages.
    Trace {
        #[arg(long = "L", value_name = "L")]
        levels: usize,
        #[arg(long, default_value_t = MAX_ORDER)]
        max_order: usize,
    },
    /// Compare the scheduler with the closed-form linear memory ODE.
    OdeCheck,
    /// Tape gradients against central differences on a tiny pipeline.
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Write a synthetic dataset as PGM pairs.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the fusion decoder on synthetic data.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Per-epoch CSV destination.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Checkpoint directory.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Mean Dice of a checkpoint on a PGM dataset.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
}

/// Outcome that maps onto the exit-code contract.
enum Failure {
    Usage(anyhow::Error),
    Check(String),
    Runtime(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_)
            | Error::Config(_)
            | Error::Input(_)
            | Error::Format { .. }
            | Error::UnsupportedScheme { .. } => Failure::Usage(e.into()),
            other => Failure::Runtime(other.into()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn usage(err: anyhow::Error) -> Failure {
    Failure::Usage(err)
}

fn write_or_print(out: Option<&Path>, text: &str) -> CmdResult {
    match out {
        Some(p) => fs::write(p, text)
            .with_context(|| format!("writing {}", p.display()))
            .map_err(usage),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_coeffs(family: &str, steps: usize) -> CmdResult {
    let family: Family = family.parse()?;
    let scheme = MultistepScheme::new(family, steps)?;
    println!("{}", scheme.format_coeffs(" "));
    Ok(())
}

fn cmd_order_study(out: Option<&Path>) -> CmdResult {
    let study = run_order_study(&StudyScheme::all(), &standard_suite(), &DEFAULT_RESOLUTIONS)?;
    write_or_print(out, &study.to_csv())?;
    let summary = study.summary("decay");
    eprint!("{summary}");
    if study.claims("decay").iter().any(|c| !c.pass) {
        return Err(Failure::Check("order slope outside tolerance on decay".into()));
    }
    Ok(())
}

fn cmd_trace(levels: usize, max_order: usize) -> CmdResult {
    let params = FuseParams::zeros(&FuseConfig::new(vec![1; levels.max(1)], 1))?;
    let stages: Vec<StageInput> = (1..=levels)
        .map(|i| StageInput::new(i, Tensor::zeros(Shape::new(1, 1, 1))))
        .collect();
    let (_, trace) = fuse_forward_order_capped(&mut Eager, &params, &stages, (1, 1), max_order)?;
    print!("{trace}");
    if trace.rhs_evaluations != levels {
        return Err(Failure::Check(format!(
            "rhs evaluated {} times for {levels} stages",
            trace.rhs_evaluations
        )));
    }
    Ok(())
}

fn cmd_ode_check() -> CmdResult {
    let case = LinearOdeCase {
        a: 0.5,
        b: 1.0,
        drive: 1.0,
    };
    let report = scheduler_ode_check(&[4, 8, 16], case)?;
    print!("{}", report.to_text());
    let (e4, e16) = (report.error_at(4).unwrap_or(f64::NAN), report.error_at(16).unwrap_or(f64::NAN));
    if !(e16 < e4) {
        return Err(Failure::Check(format!("error at L=16 ({e16:.3e}) not below L=4 ({e4:.3e})")));
    }
    if !(e16 <= 1e-2) {
        return Err(Failure::Check(format!("error at L=16 ({e16:.3e}) above 1e-2")));
    }
    println!("PASS error decreases with L and is {e16:.3e} at L=16");
    Ok(())
}

fn cmd_gradcheck(seed: u64) -> CmdResult {
    let report = pipeline_gradcheck(seed)?;
    print!("{report}");
    if !report.passed() {
        return Err(Failure::Check(format!(
            "gradient relative error {:.3e} above {:.0e}",
            report.max_rel_error(),
            report.tolerance
        )));
    }
    Ok(())
}

fn cmd_synth(out: &Path, n: usize, size: usize, seed: u64) -> CmdResult {
    let data = synth_dataset(n, size, size, seed)?;
    save_dataset(out, &data, seed)?;
    println!("# seed={seed}");
    println!("wrote {n} samples of {size}x{size} to {}", out.display());
    Ok(())
}

fn cmd_train(config: &Path, metrics: Option<&Path>, ckpt: Option<&Path>, seed: Option<u64>) -> CmdResult {
    let text = fs::read_to_string(config)
        .with_context(|| format!("reading config {}", config.display()))
        .map_err(usage)?;
    let mut cfg = TrainConfig::parse(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = train(&cfg)?;
    println!("# seed={}", cfg.seed);
    let last = report.epochs.last().expect("at least one epoch");
    println!(
        "epochs={} train_loss={:.6} val_dice={:.4}",
        last.epoch, last.train_loss, report.final_val_dice
    );
    if let Some(p) = metrics {
        write_or_print(Some(p), &report.metrics_csv())?;
    }
    if let Some(dir) = ckpt {
        save_checkpoint(
            dir,
            &Checkpoint {
                params: report.params,
                max_order: cfg.max_order,
            },
        )?;
    }
    Ok(())
}

fn cmd_eval(ckpt: &Path, data: &Path) -> CmdResult {
    if !ckpt.is_dir() {
        return Err(usage(anyhow::anyhow!("checkpoint {} not found", ckpt.display())));
    }
    let ckpt = load_checkpoint(ckpt)?;
    let samples = load_dataset(data)?;
    let dice = evaluate(&ckpt.params, &samples, ckpt.max_order)?;
    println!("samples={} dice={dice:.4}", samples.len());
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Coeffs { family, steps } => cmd_coeffs(&family, steps),
        Command::OrderStudy { out } => cmd_order_study(out.as_deref()),
        Command::Trace { levels, max_order } => cmd_trace(levels, max_order),
        Command::OdeCheck => cmd_ode_check(),
        Command::Gradcheck { seed } => cmd_gradcheck(seed),
        Command::Synth { out, n, size, seed } => cmd_synth(&out, n, size, seed),
        Command::Train {
            config,
            metrics,
            ckpt,
            seed,
        } => cmd_train(&config, metrics.as_deref(), ckpt.as_deref(), seed),
        Command::Eval { ckpt, data } => cmd_eval(&ckpt, &data),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
