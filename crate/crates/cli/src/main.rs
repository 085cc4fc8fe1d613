//! `sbpm`: validate, analyze, explore, run and export process models.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success: clean, Completed, no deadlock |
//! | 1 | unusable input or request (bad arguments, malformed document, I/O, service error) |
//! | 2 | run ended Deadlocked, or exploration found a deadlock |
//! | 3 | run hit the step limit, or exploration stopped at its bounds |
//! | 4 | findings: validation violations, notation anomalies, non-executable model |

mod backend;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use backend::{Backend, Failure, Injection, Outcome};
use clap::{Parser, Subcommand, ValueEnum};
use sbpm_core::engine::{SchedulerConfig, Status, Trace};
use sbpm_core::explore::{ExplorationBounds, ExplorationResult};
use sbpm_core::persistence::{export_dot, trace_to_xml, Document};

#[derive(Parser)]
#[command(name = "sbpm", version, about = "Subject-oriented process models from the command line")]
struct Cli {
    /// Run against an sbpm service instead of in-process.
    #[arg(long, global = true, env = "SBPM_SERVER")]
    server: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model (and its layout) and list every violation.
    Validate { file: PathBuf },
    /// Report mapping anomalies and design lints of a notation.
    AnalyzeNotation { file: PathBuf },
    /// Execute a model and print its trace.
    Run {
        file: PathBuf,
        /// Seeded random scheduling; round robin without it.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 10_000)]
        max_steps: u64,
        /// Write the trace document here (JSON if the name ends in .json).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Replica count for a multi subject, as SUBJECT=N.
        #[arg(long = "multiplicity", value_parser = parse_multiplicity)]
        multiplicities: Vec<(String, u32)>,
        /// External message delivered before the run, as FROM:TO:MESSAGE.
        #[arg(long, value_parser = parse_injection)]
        inject: Vec<Injection>,
    },
    /// Enumerate reachable states and report deadlocks.
    Explore {
        file: PathBuf,
        #[arg(long, default_value_t = ExplorationBounds::default().max_states)]
        max_states: usize,
        #[arg(long, default_value_t = ExplorationBounds::default().max_mailbox)]
        max_mailbox: usize,
        #[arg(long, default_value_t = ExplorationBounds::default().max_depth)]
        max_depth: usize,
        /// Treat replicas of a multi subject as distinct.
        #[arg(long)]
        no_symmetry: bool,
    },
    /// Convert a model document to standard output.
    Export {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Xml)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Dot,
    Json,
    Xml,
}

fn parse_multiplicity(s: &str) -> Result<(String, u32), String> {
    let (subject, n) = s.split_once('=').ok_or("expected SUBJECT=N")?;
    let n = n.parse().map_err(|_| format!("'{n}' is not a count"))?;
    Ok((subject.to_string(), n))
}

fn parse_injection(s: &str) -> Result<Injection, String> {
    match s.split(':').collect::<Vec<_>>()[..] {
        [from, to, message] if !from.is_empty() && !to.is_empty() && !message.is_empty() => Ok(Injection {
            from: from.into(),
            to: to.into(),
            message: message.into(),
        }),
        _ => Err("expected FROM:TO:MESSAGE".into()),
    }
}

fn main() -> ExitCode {
    // Usage errors exit 1; clap's own 2 would read as Deadlocked.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let backend = match &cli.server {
        Some(url) => Backend::remote(url),
        None => Ok(Backend::Local),
    };
    let code = backend.and_then(|b| execute(&b, cli.command)).unwrap_or_else(report_failure);
    ExitCode::from(code)
}

/// Violations carried by a failure are findings (exit 4), anything else is
/// unusable input (exit 1).
fn report_failure(f: Failure) -> u8 {
    match &f.violations {
        Some(v) => {
            for v in v {
                println!("{v}");
            }
            eprintln!("{}: {}", f.code, f.message);
            4
        }
        None => {
            eprintln!("error: {}: {}", f.code, f.message);
            1
        }
    }
}

fn execute(backend: &Backend, command: Command) -> Outcome<u8> {
    match command {
        Command::Validate { file } => {
            let model = backend.load_model(&file)?;
            let violations = backend.validate(&model)?.violations();
            for v in &violations {
                println!("{v}");
            }
            if violations.is_empty() {
                eprintln!("ok");
                Ok(0)
            } else {
                Ok(4)
            }
        }
        Command::AnalyzeNotation { file } => {
            let a = backend.analyze_notation(&file)?;
            let r = &a.report;
            for (class, ids) in [
                ("deficit", &r.deficits),
                ("redundancy", &r.redundancies),
                ("overload", &r.overloads),
                ("excess", &r.excesses),
            ] {
                for id in ids {
                    println!("{class} {id}");
                }
            }
            for l in &a.lints {
                println!("lint {l}");
            }
            if a.is_clean() {
                eprintln!("ok");
                Ok(0)
            } else {
                Ok(4)
            }
        }
        Command::Run {
            file,
            seed,
            max_steps,
            trace,
            multiplicities,
            inject,
        } => {
            let mut config = match seed {
                Some(s) => SchedulerConfig::seeded(s),
                None => SchedulerConfig::default(),
            }
            .with_max_steps(max_steps);
            for (subject, n) in multiplicities {
                config = config.with_multiplicity(subject, n);
            }
            let model = backend.load_model(&file)?;
            let t = backend.run(&model, config, &inject)?;
            print!("{}", t.to_lines());
            if let Some(out) = trace {
                write_trace(&out, &t)?;
            }
            eprintln!("status {}", t.status);
            Ok(match t.status {
                Status::Completed => 0,
                Status::Deadlocked => 2,
                Status::StepLimit | Status::Running => 3,
            })
        }
        Command::Explore {
            file,
            max_states,
            max_mailbox,
            max_depth,
            no_symmetry,
        } => {
            let bounds = ExplorationBounds {
                max_states,
                max_mailbox,
                max_depth,
                symmetry_reduction: !no_symmetry,
            };
            let model = backend.load_model(&file)?;
            let r = backend.explore(&model, bounds)?;
            print!("{}", render_exploration(&r));
            Ok(if !r.deadlocks.is_empty() {
                2
            } else if !r.complete {
                3
            } else {
                0
            })
        }
        Command::Export { file, format } => {
            let model = backend.load_model(&file)?;
            let doc = backend.document(&model)?;
            match (format, &doc) {
                (Format::Dot, Document::Model { model, .. }) => print!("{}", export_dot(model)),
                (Format::Json, _) => println!("{}", doc.to_json()),
                _ => print!("{}", doc.to_xml()),
            }
            Ok(0)
        }
    }
}

fn write_trace(path: &Path, t: &Trace) -> Outcome<()> {
    let json = path.extension().is_some_and(|e| e == "json");
    let text = if json {
        Document::Trace(t.clone()).to_json()
    } else {
        trace_to_xml(t)
    };
    std::fs::write(path, text).map_err(|e| Failure {
        code: "Io".into(),
        message: format!("cannot write {}: {e}", path.display()),
        violations: None,
    })
}

fn render_exploration(r: &ExplorationResult) -> String {
    let mut out = format!(
        "states {}\ntransitions {}\ncomplete {}\ncycle {}\nterminal {}\n",
        r.states_visited,
        r.transitions,
        r.complete,
        r.has_cycle,
        r.terminal_statuses.iter().map(Status::to_string).collect::<Vec<_>>().join(" ")
    );
    for (subject, reachable) in &r.end_reachable {
        let word = if *reachable { "reachable" } else { "unreachable" };
        out.push_str(&format!("end {subject} {word}\n"));
    }
    out.push_str(&format!("deadlocks {}\n", r.deadlocks.len()));
    for (i, w) in r.deadlocks.iter().enumerate() {
        out.push_str(&format!("deadlock {}\n{w}", i + 1));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argument_parsers() {
        assert_eq!(parse_multiplicity("Supplier=3"), Ok(("Supplier".into(), 3)));
        assert!(parse_multiplicity("Supplier").is_err());
        let i = parse_injection("Customer:Shop:order").unwrap();
        assert_eq!((i.from.as_str(), i.to.as_str(), i.message.as_str()), ("Customer", "Shop", "order"));
        assert!(parse_injection("a:b").is_err());
        assert!(parse_injection("a::c").is_err());
    }

    #[test]
    fn command_line_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
