//! Command-line entry point: run simulations, check expectations, emit
//! study stimuli.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use sim2real::expect::{check_expectations, parse_expectations};
use sim2real::experiments::{emit_table, parse_results_csv, run_suite, SimConfig, TableFormat};
use sim2real::stimuli::{generate_stimuli, write_stimuli, StimuliConfig};
use sim2real::Error;

#[derive(Parser)]
#[command(
    name = "sim2real",
    version,
    about = "Simulate proxy humans using feature-attribution explanations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation suite and write result tables.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long, env = "SIM2REAL_OUT_DIR", default_value = "results")]
        out: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Format of the human-readable table; results.csv is always written.
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Check a results directory against an expectation file.
    Check {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        expect: PathBuf,
    },
    /// Select study stimuli and write them as a stimulus file.
    Stimuli {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn simulate(config: &Path, out: &Path, seed: Option<u64>, format: &str) -> Result<(), Error> {
    let format: TableFormat = format.parse()?;
    let mut cfg = SimConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    let output = run_suite(&cfg)?;
    write(&out.join("results.csv"), &emit_table(&output.table, TableFormat::Csv))?;
    if format == TableFormat::Markdown {
        write(
            &out.join("results.md"),
            &emit_table(&output.table, TableFormat::Markdown),
        )?;
    }
    write(&out.join("trees.tsv"), &output.trees)?;
    let created_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    write(
        &out.join("meta.toml"),
        &format!(
            "config_hash = \"{}\"\nseed = {}\ncreated_utc_ms = {created_ms}\n\n[config]\n{}",
            cfg.hash(),
            cfg.seed,
            cfg.to_toml()
        ),
    )?;
    print!("{}", emit_table(&output.table, format));
    Ok(())
}

fn check(results: &Path, expect: &Path) -> Result<bool, Error> {
    let csv_path = results.join("results.csv");
    let table = parse_results_csv(&read(&csv_path)?, &csv_path.display().to_string())?;
    let expectations = parse_expectations(&read(expect)?, &expect.display().to_string())?;
    let report = check_expectations(&table, &expectations);
    for v in &report.verdicts {
        println!("{v}");
    }
    let failed = report.verdicts.iter().filter(|v| !v.passed).count();
    println!("{} assertions, {} failed", report.verdicts.len(), failed);
    Ok(report.passed())
}

fn stimuli(config: &Path, out: &Path) -> Result<(), Error> {
    let cfg = StimuliConfig::load(config)?;
    let set = generate_stimuli(&cfg)?;
    write(out, &write_stimuli(&set))?;
    let counts = set.category_counts();
    eprintln!(
        "wrote {} rows; test items per category: {:?}; candidate pool {}",
        set.rows.len(),
        counts,
        set.pool_used
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            format,
        } => simulate(config, out, *seed, format).map(|_| true),
        Command::Check { results, expect } => check(results, expect),
        Command::Stimuli { config, out } => stimuli(config, out).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
