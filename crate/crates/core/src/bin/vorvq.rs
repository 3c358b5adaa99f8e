use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vorvq::harness::{
    ablate, ablation_csv, codebooks_csv, eval_disentangle, gradcheck_all, load_model, train_to_dir,
    ExperimentConfig,
};
use vorvq::quantizer::load_bundle;

#[derive(Parser)]
#[command(name = "vorvq", version, about = "Variance-ordered residual vector quantization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one variant and write metrics.csv plus the model bundle.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train continuous, rvq and vo_rvq on identical data and compare.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster enhanced vs noisy embeddings of a trained model.
    EvalDisentangle {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Finite-difference check of every differentiable op.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Dump the codebooks of a bundle as CSV.
    ExportCodebooks {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn output_dir(cfg: &ExperimentConfig, out: Option<PathBuf>, fallback: &str) -> PathBuf {
    out.or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| Path::new("runs").join(fallback))
}

fn run(cli: Cli) -> vorvq::Result<bool> {
    match cli.command {
        Command::Train { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = output_dir(&cfg, out, cfg.quantizer.name());
            let outcome = train_to_dir(&cfg, &dir)?;
            if let Some(r) = outcome.final_record() {
                println!("step {} total {:.6e} clean_mse {:.6e}", r.step, r.total, r.clean_mse);
                if let Some(c) = r.clustering {
                    println!(
                        "accuracy {:.4} macro_recall {:.4} macro_f1 {:.4}",
                        c.accuracy, c.macro_recall, c.macro_f1
                    );
                }
            }
            println!("wrote {}", dir.display());
        }
        Command::Ablate { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let csv = ablation_csv(&ablate(&cfg)?);
            print!("{csv}");
            let dir = output_dir(&cfg, out, "ablation");
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("ablation.csv"), csv)?;
        }
        Command::EvalDisentangle { bundle, seed } => {
            let (model, cfg) = load_model(&bundle)?;
            let report = eval_disentangle(&model, &cfg, seed)?;
            println!("clean_mse {:.6e}", report.clean_mse);
            match report.clustering {
                Some(c) => println!(
                    "accuracy {:.4} macro_recall {:.4} macro_f1 {:.4}",
                    c.accuracy, c.macro_recall, c.macro_f1
                ),
                None => println!("continuous model: no clustering metrics"),
            }
        }
        Command::Gradcheck { points, seed } => {
            let report = gradcheck_all(points, seed)?;
            print!("{report}");
            if !report.all_passed() {
                eprintln!("failed: {}", report.failures().join(", "));
                return Ok(false);
            }
        }
        Command::ExportCodebooks { bundle, out } => {
            let b = load_bundle(&bundle)?;
            fs::write(&out, codebooks_csv(&b))?;
            println!("wrote {}", out.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
