use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use consensus_core::dynamics;
use consensus_core::harness::{self, ExperimentConfig, HarnessError, OutputWriter};
use consensus_core::verify;

const EXIT_OK: u8 = 0;
const EXIT_CONFIG: u8 = 1;
const EXIT_PARTIAL: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "consensus-sim",
    version,
    about = "Asynchronous averaging on dynamic graphs with selective neighborhood contraction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Execute a single run with the config's base parameters.
    Run(ConfigArgs),
    /// Execute every (cell, seed) pair of the config's grid.
    Sweep(ConfigArgs),
    /// Run the built-in property suite and print a pass/fail table.
    Verify {
        /// Emit machine-readable JSON instead of a table.
        #[arg(long)]
        json: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-run both figure grids (one seed per panel) and lay out their data.
    FiguresData {
        #[arg(long, default_value = "figures-data")]
        output_dir: PathBuf,
        /// Root seed of the per-panel seeds.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        force: bool,
    },
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set q_shrink=0.002` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// `run`: the run seed. `sweep`: root of the derived seed batch.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's `output_dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

fn load(args: &ConfigArgs, seed_key: Option<&str>) -> Result<ExperimentConfig, String> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| format!("cannot read {}: {e}", args.config.display()))?;
    let mut overrides = args.overrides.clone();
    if let (Some(key), Some(seed)) = (seed_key, args.seed) {
        overrides.push(format!("{key}={seed}"));
    }
    harness::load_config_with_overrides(&text, &overrides).map_err(|e| e.to_string())
}

fn output_dir(args: &ConfigArgs, config: &ExperimentConfig) -> PathBuf {
    args.output_dir
        .clone()
        .unwrap_or_else(|| config.output_dir.clone())
}

fn report_harness_error(e: &HarnessError) -> u8 {
    eprintln!("error: {e}");
    EXIT_CONFIG
}

fn cmd_run(args: &ConfigArgs) -> u8 {
    let config = match load(args, None) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let seed = args.seed.unwrap_or(config.seeds[0]);
    let writer = match OutputWriter::new(output_dir(args, &config), args.force) {
        Ok(w) => w,
        Err(e) => return report_harness_error(&e.into()),
    };
    let files = writer.run_paths(&config.base.cell(), seed);
    for path in [&files.trajectory_csv, &files.run_json] {
        if let Err(e) = writer.ensure_writable(path) {
            return report_harness_error(&e.into());
        }
    }
    let record = match dynamics::run(&config.base, seed, config.run_options()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("run failed: {e}");
            return EXIT_PARTIAL;
        }
    };
    if let Err(e) = writer.write_run(&record) {
        return report_harness_error(&e.into());
    }
    match record.t_stop {
        Some(t) => println!("seed {seed}: t_stop = {t}"),
        None => println!("seed {seed}: no stopping time within {} steps", config.base.horizon),
    }
    println!(
        "wrote {} and {}",
        files.trajectory_csv.display(),
        files.run_json.display()
    );
    EXIT_OK
}

fn cmd_sweep(args: &ConfigArgs) -> u8 {
    let config = match load(args, Some("root_seed")) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let writer = match OutputWriter::new(output_dir(args, &config), args.force) {
        Ok(w) => w,
        Err(e) => return report_harness_error(&e.into()),
    };
    let summary = match harness::run_sweep(&config, Some(&writer)) {
        Ok(s) => s,
        Err(e) => return report_harness_error(&e),
    };
    for cell in &summary.cells {
        let median = cell
            .median_t_stop
            .map_or_else(|| "no stop".to_owned(), |t| t.to_string());
        println!(
            "{}: median t_stop {median}, {} of {} runs without stopping time",
            cell.cell.tag(),
            cell.non_stopping,
            cell.runs.len()
        );
    }
    println!("wrote {}", writer.dir().join(harness::SUMMARY_FILE).display());
    let failures = summary.failures();
    if failures > 0 {
        eprintln!("{failures} run(s) failed; see summary.json");
        EXIT_PARTIAL
    } else {
        EXIT_OK
    }
}

fn cmd_verify(json: bool, seed: u64) -> u8 {
    let rows = verify::run_suite(seed);
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&rows).expect("rows are serializable")
        );
    } else {
        print!("{}", verify::format_table(&rows));
    }
    if rows.iter().all(|r| r.passed) {
        EXIT_OK
    } else {
        EXIT_PARTIAL
    }
}

fn cmd_figures_data(out: &Path, seed: u64, force: bool) -> u8 {
    match harness::figures_data(out, seed, force) {
        Ok(layouts) => {
            for layout in &layouts {
                println!(
                    "{}: {} panels ({} x {})",
                    layout.figure,
                    layout.panels.len(),
                    layout.rows,
                    layout.cols
                );
                for panel in &layout.panels {
                    println!(
                        "  row {} col {}: q_shrink={} q_flip={} {}",
                        panel.row, panel.col, panel.q_shrink, panel.q_flip, panel.subtitle
                    );
                }
            }
            println!("wrote {}", out.display());
            EXIT_OK
        }
        Err(e) => report_harness_error(&e),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Verify { json, seed } => cmd_verify(*json, *seed),
        Command::FiguresData {
            output_dir,
            seed,
            force,
        } => cmd_figures_data(output_dir, *seed, *force),
    };
    ExitCode::from(code)
}
