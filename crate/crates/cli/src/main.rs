//! `tm` — validate, simulate, check, and export TM models.
//!
//! Exit codes: 0 clean, 1 diagnostics or violations, 2 usage error,
//! 3 I/O failure.

use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tm_core::behavior::validate_event;
use tm_core::sim::{parse_injection, render_report, SimConfig, Simulation};
use tm_core::transforms::{simplify_document, to_class_by_name, to_dot, DotOptions};
use tm_core::{
    check_trace, compile_source, read_trace, serialize, write_trace, Diagnostic, Document,
    SourceFile,
};

#[derive(Parser)]
#[command(name = "tm", version, about = "Modeling language, validator, and simulator for Thinging Machine models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
enum Format {
    #[default]
    Text,
    Tsv,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a model file and report every well-formedness problem.
    Validate {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// List the events a model file declares.
    Events {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run the simulator and print the run report.
    Simulate {
        file: PathBuf,
        /// Tick limit.
        #[arg(long, default_value_t = 200)]
        ticks: u64,
        /// Token injection `[tick:]thing[@Machine.create[label]] [attr=value]...`
        /// (repeatable).
        #[arg(long = "inject")]
        injections: Vec<String>,
        /// Write the occurrence log as a trace file.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Check a trace file against the model's chronology.
    Check {
        file: PathBuf,
        trace: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Export the model as a diagram.
    Export {
        file: PathBuf,
        /// Output format (only `dot`).
        #[arg(long, default_value = "dot")]
        format: String,
        /// Overlay event regions as colored node groups.
        #[arg(long)]
        events: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Elide transfer/release/receive stages and emit the spliced model.
    Simplify {
        file: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Derive a class skeleton from a machine.
    Classmap {
        file: PathBuf,
        /// Machine name; defaults to the model root.
        #[arg(long)]
        machine: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

const EXIT_DIAGNOSTICS: u8 = 1;
const EXIT_IO: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("{}", err.message);
            ExitCode::from(err.code)
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

fn io_failure(path: &Path, err: std::io::Error) -> Failure {
    Failure {
        code: EXIT_IO,
        message: format!("{}: {}", path.display(), err),
    }
}

fn usage_failure(message: String) -> Failure {
    Failure { code: 2, message }
}

fn dispatch(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Validate { file, format } => validate(&file, format),
        Command::Events { file, format } => events(&file, format),
        Command::Simulate {
            file,
            ticks,
            injections,
            trace_out,
            format,
        } => simulate(&file, ticks, &injections, trace_out.as_deref(), format),
        Command::Check { file, trace, format } => check(&file, &trace, format),
        Command::Export {
            file,
            format,
            events,
            output,
        } => export(&file, &format, events, output.as_deref()),
        Command::Simplify { file, output } => simplify_cmd(&file, output.as_deref()),
        Command::Classmap {
            file,
            machine,
            format,
        } => classmap(&file, machine.as_deref(), format),
    }
}

fn load_source(path: &Path) -> Result<SourceFile, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    Ok(SourceFile::new(path.display().to_string(), text))
}

fn print_diagnostics(source: &SourceFile, diags: &[Diagnostic], format: Format) {
    for diag in diags {
        match format {
            Format::Text => {
                let code = paint(&diag.code.to_string(), "31");
                match diag.span {
                    Some(span) => {
                        let (line, col) = source.line_col(span.start);
                        println!("{} {}:{}:{} {}", code, source.path, line, col, diag.message);
                    }
                    None => println!("{} {} {}", code, source.path, diag.message),
                }
            }
            Format::Tsv => {
                let (line, col) = diag
                    .span
                    .map(|s| source.line_col(s.start))
                    .unwrap_or((0, 0));
                println!("{}\t{}\t{}\t{}", diag.code, line, col, diag.message);
            }
        }
    }
}

/// ANSI-color `text` when TM_COLOR (auto|never|always) says so.
fn paint(text: &str, color: &str) -> String {
    let mode = std::env::var("TM_COLOR").unwrap_or_else(|_| "auto".into());
    let on = match mode.as_str() {
        "always" => true,
        "never" => false,
        _ => std::io::stdout().is_terminal(),
    };
    if on {
        format!("\x1b[{}m{}\x1b[0m", color, text)
    } else {
        text.to_string()
    }
}

fn load_document(path: &Path, format: Format) -> Result<Result<Document, u8>, Failure> {
    let source = load_source(path)?;
    match compile_source(&source) {
        Ok(doc) => Ok(Ok(doc)),
        Err(diags) => {
            print_diagnostics(&source, &diags, format);
            Ok(Err(EXIT_DIAGNOSTICS))
        }
    }
}

fn document_diagnostics(doc: &Document) -> Vec<Diagnostic> {
    let mut diags = doc.model.validate_auto();
    for event in &doc.events {
        diags.extend(validate_event(&doc.model, event));
    }
    diags.extend(doc.chronology.validate(&doc.events));
    tm_core::diag::sort_diagnostics(&mut diags);
    diags
}

fn validate(path: &Path, format: Format) -> Result<u8, Failure> {
    let source = load_source(path)?;
    let doc = match compile_source(&source) {
        Ok(doc) => doc,
        Err(diags) => {
            print_diagnostics(&source, &diags, format);
            return Ok(EXIT_DIAGNOSTICS);
        }
    };
    let diags = document_diagnostics(&doc);
    if diags.is_empty() {
        println!("ok: {} machines, {} stages, {} flows, {} events",
            doc.model.machines().len(),
            doc.model.stages().len(),
            doc.model.flows().len(),
            doc.events.len());
        Ok(0)
    } else {
        print_diagnostics(&source, &diags, format);
        Ok(EXIT_DIAGNOSTICS)
    }
}

fn events(path: &Path, format: Format) -> Result<u8, Failure> {
    let doc = match load_document(path, format)? {
        Ok(doc) => doc,
        Err(code) => return Ok(code),
    };
    let diags = document_diagnostics(&doc);
    if !diags.is_empty() {
        let source = load_source(path)?;
        print_diagnostics(&source, &diags, format);
        return Ok(EXIT_DIAGNOSTICS);
    }
    for event in &doc.events {
        let anchor = doc.model.stage_ref(event.anchor);
        match format {
            Format::Text => println!(
                "{}\t{}\t{} region elements\t{}",
                event.name,
                anchor,
                event.region.len(),
                event.description
            ),
            Format::Tsv => println!(
                "{}\t{}\t{}\t{}",
                event.name,
                anchor,
                event.region.len(),
                event.description
            ),
        }
    }
    Ok(0)
}

fn simulate(
    path: &Path,
    ticks: u64,
    injections: &[String],
    trace_out: Option<&Path>,
    format: Format,
) -> Result<u8, Failure> {
    let doc = match load_document(path, format)? {
        Ok(doc) => doc,
        Err(code) => return Ok(code),
    };
    let diags = document_diagnostics(&doc);
    if !diags.is_empty() {
        let source = load_source(path)?;
        print_diagnostics(&source, &diags, format);
        return Ok(EXIT_DIAGNOSTICS);
    }

    let mut config = SimConfig {
        max_ticks: ticks,
        ..SimConfig::default()
    };
    for spec in injections {
        let injection = parse_injection(&doc.model, spec)
            .map_err(|e| usage_failure(format!("--inject {:?}: {}", spec, e)))?;
        config.injections.push(injection);
    }

    let sim = Simulation::new(&doc.model, &doc.events, &doc.chronology, &doc.controls, config)
        .map_err(|e| usage_failure(e.to_string()))?;
    let result = match sim.run() {
        Ok(result) => result,
        Err(err) => {
            println!("error: {}", err);
            return Ok(EXIT_DIAGNOSTICS);
        }
    };

    print!("{}", render_report(&doc.model, &doc.events, &result));
    if let Some(out) = trace_out {
        let text = write_trace(&result.occurrences, &doc.events);
        std::fs::write(out, text).map_err(|e| io_failure(out, e))?;
    }
    Ok(if result.violations.is_empty() { 0 } else { EXIT_DIAGNOSTICS })
}

fn check(path: &Path, trace_path: &Path, format: Format) -> Result<u8, Failure> {
    let doc = match load_document(path, format)? {
        Ok(doc) => doc,
        Err(code) => return Ok(code),
    };
    let trace_text = std::fs::read_to_string(trace_path).map_err(|e| io_failure(trace_path, e))?;
    let trace = match read_trace(&trace_text, &doc.events) {
        Ok(trace) => trace,
        Err(err) => {
            println!("error: {}", err);
            return Ok(EXIT_DIAGNOSTICS);
        }
    };
    if !trace.is_monotone() {
        println!("error: trace ticks must be nondecreasing");
        return Ok(EXIT_DIAGNOSTICS);
    }
    let violations = check_trace(&doc.chronology, &trace, doc.events.len())
        .expect("events checked during trace read");
    for v in &violations {
        let from = &doc.events[v.from.index()].name;
        let to = &doc.events[v.to.index()].name;
        match format {
            Format::Text => println!("violation at #{}: {} -> {} ({})", v.index, from, to, v.kind),
            Format::Tsv => println!("{}\t{}\t{}\t{}", v.index, from, to, v.kind),
        }
    }
    if violations.is_empty() {
        if format == Format::Text {
            println!("ok: {} entries", trace.0.len());
        }
        Ok(0)
    } else {
        Ok(EXIT_DIAGNOSTICS)
    }
}

fn export(path: &Path, format: &str, events: bool, output: Option<&Path>) -> Result<u8, Failure> {
    if format != "dot" {
        return Err(usage_failure(format!(
            "unsupported export format `{}` (only `dot`)",
            format
        )));
    }
    let doc = match load_document(path, Format::Text)? {
        Ok(doc) => doc,
        Err(code) => return Ok(code),
    };
    let options = DotOptions {
        events: events.then_some(doc.events.as_slice()),
    };
    let dot = to_dot(&doc.model, &options);
    emit(output, &dot)?;
    Ok(0)
}

fn simplify_cmd(path: &Path, output: Option<&Path>) -> Result<u8, Failure> {
    let doc = match load_document(path, Format::Text)? {
        Ok(doc) => doc,
        Err(code) => return Ok(code),
    };
    let simplified = match simplify_document(&doc) {
        Ok(simplified) => simplified,
        Err(err) => {
            println!("error: {}", err);
            return Ok(EXIT_DIAGNOSTICS);
        }
    };
    let text = serialize(&tm_core::compile::document_to_ast(&simplified));
    emit(output, &text)?;
    Ok(0)
}

fn classmap(path: &Path, machine: Option<&str>, format: Format) -> Result<u8, Failure> {
    let doc = match load_document(path, format)? {
        Ok(doc) => doc,
        Err(code) => return Ok(code),
    };
    let machine = machine.unwrap_or(&doc.model.name);
    let skeleton = match to_class_by_name(&doc.model, machine, &doc.events) {
        Ok(skeleton) => skeleton,
        Err(err) => {
            println!("error: {}", err);
            return Ok(EXIT_DIAGNOSTICS);
        }
    };
    match format {
        Format::Text => print!("{}", skeleton),
        Format::Tsv => {
            println!("class\t{}", skeleton.class_name);
            for (name, kind) in &skeleton.attributes {
                println!("attribute\t{}\t{}", name, kind);
            }
            for op in &skeleton.operations {
                println!("operation\t{}", op);
            }
        }
    }
    Ok(0)
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), Failure> {
    match output {
        Some(path) => std::fs::write(path, text).map_err(|e| io_failure(path, e)),
        None => {
            print!("{}", text);
            Ok(())
        }
    }
}
