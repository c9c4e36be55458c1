//! `warpcert` command-line interface.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use warpcert::pipeline::{
    self, summary_csv, CertificationReport, OutputFormat, PipelineConfig, PipelineRun, Scope, Verdict,
};

const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "warpcert", version, about = "Build and certify positive-Ricci doubly warped surgery metrics")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// TOML configuration file; omitted keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Output format (overrides `output.format`).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Seed for randomized checks (overrides `seed`).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Suppress the summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,

    /// Print the complete commented default configuration and exit.
    #[arg(long)]
    print_default_config: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Solve the warping ODE and glue in the cap.
    Construct,
    /// Construct, then certify curvature and the slab normalization.
    Certify,
    /// Construct, then compute the model spectrum and Morse index.
    Spectrum,
    /// Run every combination of the `[sweep]` lists.
    Sweep,
    /// Run every stage.
    All,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Format {
    Json,
    Csv,
    Both,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
            Format::Both => OutputFormat::Both,
        }
    }
}

fn usage_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("warpcert: {msg}");
    ExitCode::from(EXIT_USAGE)
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, String> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            PipelineConfig::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output.dir = out.to_string_lossy().into_owned();
    }
    if let Some(f) = cli.format {
        config.output.format = f.into();
    }
    config.check().map_err(|e| e.to_string())?;
    Ok(config)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), String> {
    fs::write(dir.join(name), contents).map_err(|e| format!("cannot write {}: {e}", dir.join(name).display()))
}

fn write_run(run: &PipelineRun, dir: &Path, format: OutputFormat) -> Result<(), String> {
    if format.json() {
        write(dir, "report.json", &run.report.to_json())?;
    }
    if format.csv() {
        write(dir, "summary.csv", &summary_csv(&[run.summary_row()]))?;
        if let Some(p) = &run.glued {
            write(dir, "profile.csv", &p.to_csv())?;
        }
        if let Some(c) = &run.curvature {
            write(dir, "curvature.csv", &c.to_csv())?;
        }
        if let Some(s) = &run.spectrum {
            write(dir, "spectrum.csv", &s.to_csv())?;
        }
    }
    Ok(())
}

fn print_report(r: &CertificationReport) {
    let verdict = match r.verdict {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
    };
    match r.failed_stage {
        Some(stage) => println!("verdict: {verdict} (stage {stage})"),
        None => println!("verdict: {verdict}"),
    }
    for c in r.checks.iter().filter(|c| !c.passed) {
        println!("  failed {}: {} (bound {})", c.name, c.value, c.bound);
    }
    if let Some(e) = &r.error {
        println!("  error in {}: {}", e.stage, e.message);
    }
    if let Some(g) = &r.glue {
        println!("  r1_realized = {}", g.r1_realized);
    }
    if let Some(s) = &r.spectrum {
        println!("  lambda1 = {} (+/- {})", s.lambda1, s.lambda1_error);
        if let Some(i) = s.morse_index {
            println!("  morse index at eps = {}: {i}", s.eps);
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.print_default_config {
        print!("{}", pipeline::default_config_toml());
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        return usage_error("a subcommand is required (construct, certify, spectrum, sweep, all)");
    };
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => return usage_error(e),
    };
    let dir = PathBuf::from(&config.output.dir);
    if let Err(e) = fs::create_dir_all(&dir) {
        return usage_error(format!("cannot create {}: {e}", dir.display()));
    }
    let format = config.output.format;

    let code = match command {
        Command::Sweep => {
            let outcome = match pipeline::run_sweep(&config, Scope::All) {
                Ok(o) => o,
                Err(e) => return usage_error(e),
            };
            let mut result = Ok(());
            if format.json() {
                let json = serde_json::to_string_pretty(&outcome.reports).expect("reports serialize");
                result = result.and(write(&dir, "report.json", &json));
            }
            if format.csv() {
                result = result.and(write(&dir, "summary.csv", &outcome.summary_csv()));
            }
            if let Err(e) = result {
                return usage_error(e);
            }
            if !cli.quiet {
                print!("{}", outcome.summary_csv());
            }
            outcome.exit_code()
        }
        other => {
            let scope = match other {
                Command::Construct => Scope::Construct,
                Command::Certify => Scope::Certify,
                Command::Spectrum => Scope::Spectrum,
                _ => Scope::All,
            };
            let run = pipeline::run_pipeline(&config, scope);
            if let Err(e) = write_run(&run, &dir, format) {
                return usage_error(e);
            }
            if !cli.quiet {
                print_report(&run.report);
            }
            run.report.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
