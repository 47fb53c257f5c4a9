use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use sosmc_cli::{load_session, render_results, run_session, Format, RenderOptions};
use sosmc_core::bltl::compile;
use sosmc_core::descriptor::{build_model, parse_descriptor};
use sosmc_core::gcsl::{check_gcsl, parse_gcsl, translate_to_bltl};
use sosmc_core::sim::dump_state;

/// Statistical model checking of stochastic system-of-systems models.
#[derive(Parser)]
#[command(name = "sosmc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run every property of a session file.
    Check {
        session: PathBuf,
        /// Overrides the session seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the session worker count.
        #[arg(long)]
        workers: Option<usize>,
        /// Overrides the session output format.
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
        /// Write results here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Leave out wall-clock fields.
        #[arg(long)]
        no_timing: bool,
    },
    /// Parse and type-check a model descriptor.
    Validate { model: PathBuf },
    /// Simulate one trace of a model.
    Simulate {
        model: PathBuf,
        #[arg(long, default_value_t = 10)]
        steps: u64,
        /// Print every state rather than only the last.
        #[arg(long)]
        dump: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        trace_index: u64,
    },
    /// Print the bounded LTL formula of a contract.
    Translate {
        contract: String,
        #[arg(long)]
        horizon: u32,
        /// Type-check against this model.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Also print the compiled property program (needs --model).
        #[arg(long, requires = "model")]
        disasm: bool,
    },
}

/// Exit status 1: the input was rejected or an analysis did not complete.
struct Diagnostics(String);

type Outcome = Result<Result<(), Diagnostics>, anyhow::Error>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| execute(cli)) {
        Ok(Ok(Ok(()))) => ExitCode::SUCCESS,
        Ok(Ok(Err(Diagnostics(msg)))) => {
            if !msg.is_empty() {
                eprintln!("{msg}");
            }
            ExitCode::from(1)
        }
        Ok(Err(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(2)
        }
        Err(_) => ExitCode::from(2),
    }
}

fn execute(cli: Cli) -> Outcome {
    match cli.command {
        Command::Check { session, seed, workers, format, out, no_timing } => {
            check(&session, seed, workers, format, out.as_deref(), no_timing)
        }
        Command::Validate { model } => validate(&model),
        Command::Simulate { model, steps, dump, seed, trace_index } => simulate(&model, steps, dump, seed, trace_index),
        Command::Translate { contract, horizon, model, disasm } => translate(&contract, horizon, model.as_deref(), disasm),
    }
}

fn check(
    path: &Path,
    seed: Option<u64>,
    workers: Option<usize>,
    format: Option<OutputFormat>,
    out: Option<&Path>,
    no_timing: bool,
) -> Outcome {
    let mut cfg = match load_session(path) {
        Ok(c) => c,
        Err(e) => return Ok(Err(Diagnostics(format!("{}: {e}", path.display())))),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(w) = workers {
        if w == 0 {
            return Ok(Err(Diagnostics("--workers must be at least 1".into())));
        }
        cfg.workers = w;
    }
    if let Some(f) = format {
        cfg.format = match f {
            OutputFormat::Text => Format::Text,
            OutputFormat::Json => Format::Json,
        };
    }
    let results = match run_session(&cfg) {
        Ok(r) => r,
        Err(e) => return Ok(Err(Diagnostics(e.to_string()))),
    };
    let text = render_results(&results, RenderOptions { format: cfg.format, timing: !no_timing });
    match out {
        Some(p) => std::fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes()).context("writing results")?,
    }
    if results.failures() > 0 {
        return Ok(Err(Diagnostics(format!("{} of {} properties failed", results.failures(), results.results.len()))));
    }
    Ok(Ok(()))
}

fn read(path: &Path) -> Result<String, Diagnostics> {
    std::fs::read_to_string(path).map_err(|e| Diagnostics(format!("cannot read {}: {e}", path.display())))
}

fn load_model(path: &Path, seed: u64) -> Result<sosmc_core::sim::Model, Diagnostics> {
    let text = read(path)?;
    let def = parse_descriptor(&text);
    if def.has_errors() {
        let lines: Vec<String> = def.errors().map(|d| format!("{}: {d}", path.display())).collect();
        return Err(Diagnostics(lines.join("\n")));
    }
    build_model(&def, seed).map_err(|e| Diagnostics(format!("{}: {e}", path.display())))
}

fn validate(path: &Path) -> Outcome {
    let text = match read(path) {
        Ok(t) => t,
        Err(d) => return Ok(Err(d)),
    };
    let def = parse_descriptor(&text);
    for d in &def.diagnostics {
        eprintln!("{}: {d}", path.display());
    }
    if def.has_errors() {
        return Ok(Err(Diagnostics(String::new())));
    }
    if let Err(e) = build_model(&def, 0) {
        return Ok(Err(Diagnostics(format!("{}: {e}", path.display()))));
    }
    println!(
        "ok: {} types, {} instances, {} relations, {}",
        def.types.len(),
        def.instances.len(),
        def.relations.len(),
        if def.open { "open" } else { "closed" }
    );
    Ok(Ok(()))
}

fn simulate(path: &Path, steps: u64, dump: bool, seed: u64, trace_index: u64) -> Outcome {
    let model = match load_model(path, seed) {
        Ok(m) => m,
        Err(d) => return Ok(Err(d)),
    };
    let mut trace = model.trace(seed, trace_index).with_retention(1);
    let mut stdout = std::io::stdout().lock();
    if dump {
        writeln!(stdout, "{}", dump_state(trace.current()))?;
    }
    for _ in 0..steps {
        if let Err(e) = trace.advance() {
            return Ok(Err(Diagnostics(format!("step {}: {e}", trace.current().step + 1))));
        }
        if dump {
            writeln!(stdout, "{}", dump_state(trace.current()))?;
        }
    }
    if !dump {
        writeln!(stdout, "{}", dump_state(trace.current()))?;
    }
    Ok(Ok(()))
}

fn translate(contract: &str, horizon: u32, model: Option<&Path>, disasm: bool) -> Outcome {
    let ast = match parse_gcsl(contract) {
        Ok(a) => a,
        Err(e) => return Ok(Err(Diagnostics(e.to_string()))),
    };
    let formula = match translate_to_bltl(&ast, horizon) {
        Ok(f) => f,
        Err(e) => return Ok(Err(Diagnostics(e.to_string()))),
    };
    println!("{formula}");
    if let Some(path) = model {
        let model = match load_model(path, 0) {
            Ok(m) => m,
            Err(d) => return Ok(Err(d)),
        };
        if let Err(e) = check_gcsl(&ast, &model.schema) {
            return Ok(Err(Diagnostics(e.to_string())));
        }
        let program = match compile(&formula, &model.schema) {
            Ok(p) => p,
            Err(e) => return Ok(Err(Diagnostics(e.to_string()))),
        };
        if disasm {
            print!("{program}");
        }
    }
    Ok(Ok(()))
}
