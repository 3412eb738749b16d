use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use orscale_core::harness::{
    ablation_runs, emit_csv, emit_summary, experiments, fixture, load_csv, preset, run_bundle,
    summary_from_rows, write_summary, SummaryRow, FIXTURE_NAMES, PRESET_NAMES,
};
use orscale_core::{run, HarnessError, HyperParams, RunConfig, Variant};

/// Trust-ratio Muon experiments on toy objectives.
#[derive(Parser)]
#[command(name = "orscale", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one TOML config and write `<id>.csv` plus `summary.csv`.
    Run {
        config: PathBuf,
        /// Output directory; defaults to the config's `output`, then `out`.
        #[arg(long, env = "ORSCALE_OUT_DIR")]
        out: Option<PathBuf>,
    },
    /// Run a named preset bundle and print its checks.
    Preset {
        name: String,
        #[arg(long, env = "ORSCALE_OUT_DIR", default_value = "out")]
        out: PathBuf,
        /// Skip the metric evaluation after the runs.
        #[arg(long)]
        no_eval: bool,
    },
    /// Run every design-space variant on a fixture name or config file.
    Ablate {
        fixture: String,
        #[arg(long, env = "ORSCALE_OUT_DIR", default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Aggregate the per-run CSVs of a directory into a summary table.
    Report { dir: PathBuf },
    /// List preset and fixture names.
    List,
}

fn print_summary(rows: &[SummaryRow]) -> Result<(), HarnessError> {
    write_summary(rows, std::io::stdout().lock())
}

fn cmd_run(config: &Path, out: Option<PathBuf>) -> Result<(), HarnessError> {
    let cfg = RunConfig::load(config)?;
    let dir = out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let traces = run_bundle(std::slice::from_ref(&cfg), &dir)?;
    print_summary(
        &traces
            .iter()
            .map(SummaryRow::from_trace)
            .collect::<Vec<_>>(),
    )
}

fn cmd_preset(name: &str, out: &Path, no_eval: bool) -> Result<(), HarnessError> {
    let bundle = preset(name)?;
    eprintln!("{}: {}", bundle.name, bundle.description);
    let traces = run_bundle(&bundle.runs, out)?;
    print_summary(
        &traces
            .iter()
            .map(SummaryRow::from_trace)
            .collect::<Vec<_>>(),
    )?;
    if !no_eval {
        for report in experiments::evaluate(bundle.name)? {
            println!("{report}");
        }
    }
    Ok(())
}

fn cmd_ablate(
    name: &str,
    out: &Path,
    steps: Option<u64>,
    seed: Option<u64>,
) -> Result<(), HarnessError> {
    let path = Path::new(name);
    let mut base = if path.is_file() {
        RunConfig::load(path)?
    } else {
        let model = fixture(name)?;
        let hp = HyperParams::orscale_lm();
        RunConfig::new(format!("ablate_{name}"), Variant::OrScaleLm, model)
            .with_steps(200)
            .with_hyper(hp)
    };
    if let Some(s) = steps {
        base.steps = s;
    }
    if let Some(s) = seed {
        base.seed = s;
    }
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let mut traces = Vec::new();
    let mut aborted = None;
    // A diverging row is still written and summarised before exiting with 2.
    for cfg in ablation_runs(&base) {
        let trace = match run(&cfg) {
            Ok(t) => t,
            Err(HarnessError::NonFinite { step, trace }) => {
                eprintln!("{}: non-finite weights at step {step}", cfg.id);
                aborted.get_or_insert(step);
                *trace
            }
            Err(e) => return Err(e),
        };
        emit_csv(&trace, &out.join(format!("{}.csv", cfg.id)))?;
        cfg.save(&out.join(format!("{}.toml", cfg.id)))?;
        traces.push(trace);
    }
    let rows: Vec<SummaryRow> = traces.iter().map(SummaryRow::from_trace).collect();
    emit_summary(&rows, &out.join("summary.csv"))?;
    print_summary(&rows)?;
    match aborted {
        Some(step) => Err(HarnessError::NonFinite {
            step,
            trace: Box::default(),
        }),
        None => Ok(()),
    }
}

fn collect_csvs(dir: &Path, found: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    let entries = std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| HarnessError::io(dir, e))?.path();
        if path.is_dir() {
            collect_csvs(&path, found)?;
        } else if path.extension().is_some_and(|e| e == "csv")
            && path.file_name().is_some_and(|f| f != "summary.csv")
        {
            found.push(path);
        }
    }
    Ok(())
}

fn cmd_report(dir: &Path) -> Result<(), HarnessError> {
    let mut files = Vec::new();
    collect_csvs(dir, &mut files)?;
    files.sort();
    if files.is_empty() {
        return Err(HarnessError::Config(format!(
            "no run CSVs under {}",
            dir.display()
        )));
    }
    let mut rows = Vec::new();
    for f in files {
        let id = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let variant = RunConfig::load(&f.with_extension("toml"))
            .map(|c| c.method.name().to_string())
            .unwrap_or_default();
        rows.push(summary_from_rows(id, &variant, &load_csv(&f)?));
    }
    print_summary(&rows)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out } => cmd_run(&config, out),
        Command::Preset { name, out, no_eval } => cmd_preset(&name, &out, no_eval),
        Command::Ablate {
            fixture,
            out,
            steps,
            seed,
        } => cmd_ablate(&fixture, &out, steps, seed),
        Command::Report { dir } => cmd_report(&dir),
        Command::List => {
            println!("presets: {}", PRESET_NAMES.join(", "));
            println!("fixtures: {}", FIXTURE_NAMES.join(", "));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
