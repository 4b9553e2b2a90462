use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ris_noma::experiment::{fit_slope, run_with_threads, summary, ExperimentSpec, Preset, SweepAxis, SweepResult};
use ris_noma::Result;

const THREADS_ENV: &str = "RIS_NOMA_THREADS";

#[derive(Parser)]
#[command(name = "ris-noma", version, about = "RIS-aided NOMA link-level analytics and Monte Carlo sweeps")]
struct Cli {
    /// List the built-in presets and exit.
    #[arg(long)]
    list_presets: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or custom sweep and write the CSV table.
    Run {
        #[arg(long)]
        preset: String,
        /// Key-value config file applied on top of the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Fit the high-SNR slope (or diversity order for op_* metrics) of a CSV column.
    FitSlope {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        metric: String,
        /// Restrict to one curve family.
        #[arg(long = "case")]
        case_label: Option<String>,
        /// Axis of the table.
        #[arg(long, default_value = "snr_dbm")]
        axis: String,
    },
}

fn threads() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| ris_noma::Error::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn run_command(
    preset: &str,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    trials: Option<u64>,
) -> Result<()> {
    let preset: Preset = preset.parse()?;
    let mut spec = ExperimentSpec::from_preset(preset);
    if let Some(path) = config {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| ris_noma::Error::Io(format!("{}: {e}", path.display())))?;
        spec.apply_config_text(&text)?;
    }
    if let Some(t) = trials {
        spec.set_trials(t);
    }
    if let Some(s) = seed {
        spec.set_seed(s);
    }
    let table = run_with_threads(&spec, threads()?)?;
    let digest = summary(&spec, &table);
    match out {
        Some(path) => {
            let f = File::create(&path).map_err(|e| ris_noma::Error::Io(format!("{}: {e}", path.display())))?;
            table.write_csv(BufWriter::new(f))?;
            print!("{digest}");
            println!("wrote {} rows to {}", table.rows.len(), path.display());
        }
        None => {
            table.write_csv(io::stdout().lock())?;
            eprint!("{digest}");
        }
    }
    Ok(())
}

fn fit_command(input: PathBuf, metric: &str, case_label: Option<String>, axis: &str) -> Result<()> {
    let axis: SweepAxis = axis.parse()?;
    let f = File::open(&input).map_err(|e| ris_noma::Error::Io(format!("{}: {e}", input.display())))?;
    let table = SweepResult::read_csv(f)?;
    let labels = match case_label {
        Some(l) => vec![l],
        None => table.case_labels(),
    };
    let mut stdout = io::stdout().lock();
    for label in labels {
        let slope = fit_slope(&table, metric, Some(&label), axis)?;
        writeln!(stdout, "{label}\t{metric}\t{slope:.6}").map_err(ris_noma::Error::from)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.list_presets {
        for p in Preset::ALL {
            println!("{:<8} {}", p.name(), p.description());
        }
        return ExitCode::SUCCESS;
    }
    let result = match cli.command {
        Some(Command::Run {
            preset,
            config,
            out,
            seed,
            trials,
        }) => run_command(&preset, config, out, seed, trials),
        Some(Command::FitSlope {
            input,
            metric,
            case_label,
            axis,
        }) => fit_command(input, &metric, case_label, &axis),
        None => {
            eprintln!("nothing to do; see --help");
            return ExitCode::from(2);
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
