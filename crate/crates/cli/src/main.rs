use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wiretap_core::experiments::{
    run_experiment, run_figure_preset, ExperimentSpec, FigureId, PolicySpec, PresetOverrides,
};
use wiretap_core::quantizer::{build_rvq_codebook, build_sphere_codebook};
use wiretap_core::selftest::run_selftest;

#[derive(Parser)]
#[command(
    name = "wiretap",
    version,
    about = "Secrecy-rate experiments for artificial-noise MIMO wiretap links with quantized feedback"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reproduce one of the figure sweeps (fig1..fig4).
    Figure {
        id: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Eve's antenna count (fig1).
        #[arg(long)]
        n_e: Option<usize>,
        /// Comma-separated feedback bit counts (fig3).
        #[arg(long, value_delimiter = ',')]
        bits: Option<Vec<u32>>,
        /// auto, fresh or fixed.
        #[arg(long)]
        policy: Option<String>,
    },
    /// Run a sweep described by a TOML file.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Codebook utilities.
    Codebook {
        #[command(subcommand)]
        action: CodebookAction,
    },
    /// Run the built-in oracle checks.
    Selftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Rvq,
    Sphere,
}

#[derive(Subcommand)]
enum CodebookAction {
    /// Write a codebook as text.
    Export {
        #[arg(long, value_enum, default_value = "rvq")]
        kind: Kind,
        #[arg(long, default_value_t = 2)]
        n_a: usize,
        #[arg(long, default_value_t = 1)]
        n_b: usize,
        #[arg(long)]
        bits: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Figure {
            id,
            seed,
            trials,
            out,
            n_e,
            bits,
            policy,
        } => {
            let id: FigureId = id.parse()?;
            let overrides = PresetOverrides {
                seed,
                trials,
                n_e,
                series_bits: bits,
                grid: None,
                policy: policy.map(|p| p.parse::<PolicySpec>()).transpose()?,
            };
            let (result, csv, meta) = run_figure_preset(id, &overrides, &out)?;
            print!("{}", result.summary());
            println!("wrote {} and {}", csv.display(), meta.display());
        }
        Command::Sweep {
            spec,
            seed,
            trials,
            out,
        } => {
            let mut spec = ExperimentSpec::from_file(&spec)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(t) = trials {
                spec.trials = t;
            }
            let result = run_experiment(&spec)?;
            let (csv, meta) = result.write_files(&out, &spec.name)?;
            print!("{}", result.summary());
            println!("wrote {} and {}", csv.display(), meta.display());
        }
        Command::Codebook {
            action:
                CodebookAction::Export {
                    kind,
                    n_a,
                    n_b,
                    bits,
                    seed,
                    out,
                },
        } => {
            let cb = match kind {
                Kind::Rvq => build_rvq_codebook(n_a, n_b, bits, &mut ChaCha8Rng::seed_from_u64(seed))?,
                Kind::Sphere => {
                    if (n_a, n_b) != (2, 1) {
                        bail!("the sphere codebook exists only for n_a = 2, n_b = 1");
                    }
                    build_sphere_codebook(bits)?
                }
            };
            match out {
                Some(path) => {
                    let f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    cb.write_text(BufWriter::new(f))
                        .with_context(|| format!("writing {}", path.display()))?;
                }
                None => cb.write_text(std::io::stdout().lock()).context("writing to stdout")?,
            }
        }
        Command::Selftest => {
            let results = run_selftest();
            for r in &results {
                println!("{r}");
            }
            return Ok(results.iter().all(|r| r.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
