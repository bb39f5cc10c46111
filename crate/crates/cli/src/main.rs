//! `lpn`: inspect, gradient-check, train, evaluate and predict.
//!
//! Exit codes: 0 ok, 1 other failure, 2 config, 3 dataset, 4 checkpoint,
//! 5 no predictions, 6 gradient check failed.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lpn_core::data::{load_manifest, PreprocessConfig, Split, CLASS_NAMES};
use lpn_core::model::{count_params, init_params, load_weights, shape_trace, Architecture};
use lpn_core::train::{
    emit_reports, evaluate, gradient_check, history_csv, predict_files, train, GradCheckConfig,
    ManifestSource,
};
use lpn_core::Error;
use serde_json::json;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "lpn", version, about = "LightPneumoNet chest X-ray classifier")]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true, env = "LPN_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the layer table, output shapes and parameter counts.
    Inspect {
        #[arg(long, default_value = "lightpneumonet")]
        architecture: String,
    },
    /// Compare backpropagation with finite differences on the reduced network.
    Gradcheck {
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of seeds, starting at `--seed`.
        #[arg(long, default_value_t = 3)]
        runs: u64,
    },
    /// Train from a JSON config.
    Train {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Score a checkpoint on a dataset split.
    Evaluate {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short = 'm', long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Classify image files, printing one JSON line each.
    Predict {
        #[arg(short = 'm', long)]
        checkpoint: PathBuf,
        /// Include both class probabilities.
        #[arg(long)]
        both: bool,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Print the effective configuration.
    Config {
        #[arg(short, long)]
        config: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }

    fn with_code(code: u8) -> impl Fn(Error) -> Failure {
        move |e| Failure::new(code, e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) => 2,
            Error::Dataset(_) => 3,
            Error::Checkpoint(_) => 4,
            _ => 1,
        };
        Failure::new(code, e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Inspect { architecture } => inspect(&architecture),
        Command::Gradcheck {
            tolerance,
            seed,
            runs,
        } => gradcheck(tolerance, seed, runs),
        Command::Train { config } => cmd_train(&config),
        Command::Evaluate {
            config,
            checkpoint,
            split,
        } => cmd_evaluate(&config, &checkpoint, &split),
        Command::Predict {
            checkpoint,
            both,
            images,
        } => predict(&checkpoint, both, &images),
        Command::Config { config } => show_config(config.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn shape(dims: &[usize]) -> String {
    let inner: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
    format!("({})", inner.join(", "))
}

fn parse_architecture(name: &str) -> Result<Architecture, Failure> {
    Architecture::ALL
        .into_iter()
        .find(|a| a.name() == name)
        .ok_or_else(|| Failure::new(2, format!("unknown architecture {name:?}")))
}

fn inspect(name: &str) -> CmdResult {
    let spec = parse_architecture(name)?.spec();
    let trace = shape_trace(&spec)?;
    let counts = count_params(&spec)?;
    println!(
        "{:<12} {:<10} {:<18} {:>10}",
        "Layer", "Type", "Output shape", "Params"
    );
    println!("{}", "-".repeat(53));
    println!(
        "{:<12} {:<10} {:<18} {:>10}",
        "input",
        "Input",
        shape(&trace.input),
        0
    );
    for e in &trace.entries {
        println!(
            "{:<12} {:<10} {:<18} {:>10}",
            e.name,
            e.kind,
            shape(&e.output),
            thousands(e.params)
        );
    }
    println!("{}", "-".repeat(53));
    println!("Total params: {}", thousands(counts.total));
    println!(
        "Trainable params: {} ({:.2} MiB)",
        thousands(counts.total),
        counts.mib_f32()
    );
    println!("Non-trainable params: 0");
    println!(
        "Weights size: {} bytes (f32)",
        thousands(counts.bytes_f32())
    );
    Ok(())
}

fn gradcheck(tolerance: f64, seed: u64, runs: u64) -> CmdResult {
    if tolerance.is_nan() || tolerance <= 0.0 || runs == 0 {
        return Err(Failure::new(2, "tolerance and runs must be positive"));
    }
    let mut all_passed = true;
    for seed in seed..seed + runs {
        let report = gradient_check(&GradCheckConfig {
            seed,
            tolerance,
            ..Default::default()
        })?;
        println!("seed {seed}");
        println!(
            "  {:<10} {:>12} {:>8} {:>8}  status",
            "group", "rel_error", "checked", "skipped"
        );
        for g in &report.groups {
            let ok = g.checked > 0 && g.error <= tolerance;
            println!(
                "  {:<10} {:>12.3e} {:>8} {:>8}  {}",
                g.name,
                g.error,
                g.checked,
                g.skipped,
                if ok { "pass" } else { "FAIL" }
            );
        }
        println!("  max {:.3e} (tolerance {tolerance:e})", report.max_error);
        all_passed &= report.passed;
    }
    if all_passed {
        println!("gradient check passed");
        Ok(())
    } else {
        Err(Failure::new(6, "gradient check failed"))
    }
}

fn cmd_train(config_path: &Path) -> CmdResult {
    let cfg = RunConfig::load(config_path)?;
    let spec = cfg.architecture.spec();
    let manifest = load_manifest(&cfg.dataset_root, Split::Train).map_err(Failure::with_code(3))?;
    println!(
        "training {} on {} images ({} NORMAL, {} PNEUMONIA)",
        cfg.architecture,
        manifest.len(),
        manifest.class_counts[0],
        manifest.class_counts[1]
    );
    let source = ManifestSource {
        manifest: &manifest,
        preprocess: cfg.preprocess.clone(),
        augmentation: cfg.augment.then(|| cfg.augmentation.clone()),
        seed: cfg.seed,
    };
    let init = init_params(&spec, cfg.seed)?;
    let outcome = train(&spec, &source, init, &cfg.train_config(), &mut |e| {
        println!(
            "epoch {:>3}  loss {:.6}  accuracy {:.4}  {:.1}s",
            e.epoch, e.loss, e.accuracy, e.seconds
        );
    })?;
    let history_path = cfg.out_dir.join("history.csv");
    fs::write(&history_path, history_csv(&outcome.history))
        .map_err(|e| Failure::new(1, format!("{}: {e}", history_path.display())))?;
    println!(
        "best epoch {} (loss {:.6}){}; checkpoints in {}",
        outcome.best_epoch,
        outcome.best_loss,
        if outcome.stopped_early {
            ", stopped early"
        } else {
            ""
        },
        cfg.out_dir.display()
    );
    Ok(())
}

fn cmd_evaluate(config_path: &Path, checkpoint: &Path, split: &str) -> CmdResult {
    let cfg = RunConfig::load(config_path)?;
    let split: Split = split.parse()?;
    let spec = cfg.architecture.spec();
    let params = load_weights(checkpoint, &spec).map_err(Failure::with_code(4))?;
    let manifest = load_manifest(&cfg.dataset_root, split).map_err(Failure::with_code(3))?;
    let report = evaluate(&params, &spec, &manifest, &cfg.preprocess, cfg.batch_size)
        .map_err(Failure::with_code(3))?;
    for (path, reason) in &report.failures {
        eprintln!("warning: skipped {}: {reason}", path.display());
    }
    emit_reports(&cfg.out_dir, &report.metrics, &report.confusion, None)?;
    let m = &report.metrics;
    let cm = &report.confusion;
    println!(
        "{split}: {} images, tp {} fp {} fn {} tn {}",
        cm.total(),
        cm.tp,
        cm.fp,
        cm.fn_,
        cm.tn
    );
    println!(
        "accuracy {:.4}  precision {:.4}  recall {:.4}  f1 {:.4}",
        m.accuracy, m.precision, m.recall, m.f1
    );
    for name in &m.undefined {
        eprintln!("warning: {name} has a zero denominator, reported as 0");
    }
    Ok(())
}

fn predict(checkpoint: &Path, both: bool, images: &[PathBuf]) -> CmdResult {
    let (arch, params) = Architecture::load_any(checkpoint).map_err(Failure::with_code(4))?;
    let spec = arch.spec();
    let pre = PreprocessConfig {
        target_size: [spec.input[0], spec.input[1]],
        ..Default::default()
    };
    let mut successes = 0;
    for result in predict_files(&params, &spec, images, &pre) {
        match result {
            Ok(p) => {
                successes += 1;
                let mut record = json!({
                    "path": p.path.display().to_string(),
                    "label": CLASS_NAMES[p.class],
                    "probability": p.probs[p.class],
                });
                if both {
                    record["probabilities"] = json!({
                        CLASS_NAMES[0]: p.probs[0],
                        CLASS_NAMES[1]: p.probs[1],
                    });
                }
                println!("{record}");
            }
            Err(e) => eprintln!("warning: {e}"),
        }
    }
    if successes == 0 {
        return Err(Failure::new(5, "no image could be classified"));
    }
    Ok(())
}

fn show_config(path: Option<&Path>) -> CmdResult {
    let cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    print!("{}", cfg.to_pretty_json());
    Ok(())
}
