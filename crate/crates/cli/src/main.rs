use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::LevelFilter;
use ptyfuse::container;
use ptyfuse::pipeline::{self, PropagationMethod};
use ptyfuse::{CliError, CliResult, RunConfig};
use ptyfuse_core::scan::overlap_fraction;

#[derive(Parser)]
#[command(
    name = "ptyfuse",
    version,
    about = "Multi-sensor ptychography: simulate, reconstruct, evaluate"
)]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the scan, noise and optimizer seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    output: PathBuf,

    /// Comma-separated sensor names to use.
    #[arg(long, global = true, value_delimiter = ',')]
    sensors: Option<Vec<String>>,

    /// Only print warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset and write it with the ground truth.
    Simulate,
    /// Reconstruct the object from a dataset.
    Reconstruct {
        /// Dataset file written by `simulate`.
        dataset: PathBuf,
    },
    /// Fringe visibility of every configured line set.
    Evaluate {
        /// Reconstruction files; each becomes a table column.
        #[arg(required = true)]
        reconstructions: Vec<PathBuf>,
    },
    /// Reconstruct one dataset with a ladder of detector configurations.
    Ablate,
    /// Propagate a single field.
    Propagate {
        /// Field file (real or complex).
        input: PathBuf,
        /// Distance, meters.
        #[arg(long)]
        z: f64,
        /// Window offset along x, meters.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        x0: f64,
        /// Window offset along y, meters.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        y0: f64,
        #[arg(long, value_enum, default_value_t = Method::Shifted)]
        method: Method,
        /// Embedding factor of the padded method.
        #[arg(long, default_value_t = 4)]
        pad: usize,
    },
    /// Generate a scan pattern.
    ScanGen,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Asm,
    Shifted,
    Padded,
}

fn load_config(common: &Common) -> CliResult<RunConfig> {
    let config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    Ok(match common.seed {
        Some(seed) => config.with_seed(seed),
        None => config,
    })
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Column names: file stems, or parent directory names when stems repeat.
fn column_names(paths: &[PathBuf]) -> Vec<String> {
    let stems: Vec<String> = paths.iter().map(|p| file_stem(p)).collect();
    let unique = stems
        .iter()
        .enumerate()
        .all(|(i, s)| !stems[..i].contains(s));
    if unique {
        return stems;
    }
    paths
        .iter()
        .map(|p| match p.parent().and_then(Path::file_name) {
            Some(dir) => dir.to_string_lossy().into_owned(),
            None => p.display().to_string(),
        })
        .collect()
}

fn run(cli: Cli) -> CliResult<()> {
    let common = &cli.common;
    let out = &common.output;
    match cli.command {
        Command::Simulate => {
            let config = load_config(common)?;
            let sim = pipeline::simulate(&config, common.sensors.as_deref())?;
            pipeline::write_simulation(out, &sim, config.noise)?;
            print!("{}", sim.summary);
        }
        Command::Reconstruct { dataset } => {
            let config = load_config(common)?;
            let (dataset, _) = container::read_dataset(&dataset)?;
            pipeline::check_geometry(&config, &dataset)?;
            let rec = pipeline::reconstruct_dataset(&config, &dataset, common.sensors.as_deref())?;
            pipeline::write_reconstruction(out, &config, &rec)?;
            if let Some(last) = rec.history.last() {
                println!(
                    "final loss {:.6e} after {} epochs",
                    last.loss,
                    rec.history.len()
                );
            } else {
                println!("no epochs run; wrote the initial guess");
            }
        }
        Command::Evaluate { reconstructions } => {
            let config = load_config(common)?;
            let objects = reconstructions
                .iter()
                .zip(column_names(&reconstructions))
                .map(|(p, name)| Ok((name, container::read_complex(p)?.0)))
                .collect::<CliResult<Vec<_>>>()?;
            let table = pipeline::evaluate(&config, &objects)?;
            pipeline::create_dir(out)?;
            pipeline::write_text(&out.join(pipeline::VISIBILITY_FILE), &table)?;
            print!("{table}");
        }
        Command::Ablate => {
            let config = load_config(common)?;
            let ablation = pipeline::ablate(&config)?;
            pipeline::write_ablation(out, &config, &ablation)?;
            print!("{}", ablation.table);
        }
        Command::Propagate {
            input,
            z,
            x0,
            y0,
            method,
            pad,
        } => {
            let (field, label) = container::read_complex(&input)?;
            let method = match method {
                Method::Asm => PropagationMethod::Asm,
                Method::Shifted => PropagationMethod::Shifted,
                Method::Padded => PropagationMethod::Padded { pad_factor: pad },
            };
            let result = pipeline::propagate(&field, method, z, x0, y0)?;
            pipeline::create_dir(out)?;
            let path = out.join("propagated.ptyf");
            container::write_complex(&path, &result, &format!("{label} at z={z:e}"))?;
            println!("wrote {}", path.display());
        }
        Command::ScanGen => {
            let config = load_config(common)?;
            let scan = config.scan_pattern()?;
            pipeline::create_dir(out)?;
            pipeline::write_text(&out.join(pipeline::SCAN_FILE), &scan.to_text())?;
            println!("positions\t{}", scan.len());
            println!(
                "overlap_fraction\t{:.4}",
                overlap_fraction(&scan, config.probe.diameter)?
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.common.quiet {
        LevelFilter::Warn
    } else {
        LevelFilter::Info
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .parse_env("PTYFUSE_LOG")
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_status(&e))
        }
    }
}

fn exit_status(e: &CliError) -> u8 {
    e.exit_code() as u8
}
