//! Operator commands. Everything except `serve` and `mock-backend` is a
//! plain function returning an exit code and the text to print, so the
//! commands are testable without spawning a process.

use std::fs::File;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use mentorloop_core::governance::audit::{read_log, verify_chain};
use mentorloop_core::governance::ChainStatus;
use mentorloop_core::retrieval::{index_corpus, load_corpus_dir, CorpusClass};
use mentorloop_core::transcript::SessionTranscript;
use mentorloop_core::triage::{load_catalog, render_report, validate_catalog, ReportFormat};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "mentorloop", version, about = "Governed supervision assistant: service and operator tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Serve `POST /generate` from a scripted mock backend.
    MockBackend {
        /// JSON array of script entries.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8090")]
        bind: String,
    },
    /// Validate a corpus directory and print its index statistics.
    IngestCorpus {
        /// `policy` or `student:<id>`.
        #[arg(long)]
        class: CorpusClass,
        dir: PathBuf,
    },
    /// Issue-catalog triage.
    Triage {
        #[command(subcommand)]
        command: TriageCommand,
    },
    /// Audit log tools.
    Audit {
        #[command(subcommand)]
        command: AuditCommand,
    },
    /// Replay a session transcript and compare every output.
    Replay {
        transcript: PathBuf,
        /// Print expected and actual output of mismatching steps.
        #[arg(long)]
        verbose: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum TriageCommand {
    /// Check severity, mitigation and risk columns against the rubric.
    Validate { file: PathBuf },
    /// Print the catalog as a table or CSV.
    Report {
        file: PathBuf,
        #[arg(long, default_value = "table")]
        format: ReportFormat,
    },
}

#[derive(Debug, Subcommand)]
pub enum AuditCommand {
    /// Recompute the hash chain; prints `Valid` or `BrokenAt(n)`.
    Verify { log: PathBuf },
}

/// Exit code plus what to print on stdout and stderr.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn ok(stdout: impl Into<String>) -> Self {
        Self {
            code: 0,
            stdout: stdout.into(),
            stderr: String::new(),
        }
    }

    fn fail(code: i32, stdout: impl Into<String>, stderr: impl Into<String>) -> Self {
        Self {
            code,
            stdout: stdout.into(),
            stderr: stderr.into(),
        }
    }

    fn error(msg: impl Into<String>) -> Self {
        Self::fail(2, "", msg)
    }
}

pub fn ingest_corpus(class: &CorpusClass, dir: &Path) -> Outcome {
    let corpus = match load_corpus_dir(dir, class) {
        Ok(c) => c,
        Err(e) => return Outcome::error(e.to_string()),
    };
    let docs: Vec<_> = corpus.documents.iter().map(|d| json!({"id": d.id, "version": d.version})).collect();
    match index_corpus(corpus) {
        Ok(idx) => Outcome::ok(format!(
            "{}\n",
            serde_json::to_string_pretty(&json!({"documents": docs, "stats": idx.stats()})).expect("json")
        )),
        Err(e) => Outcome::error(e.to_string()),
    }
}

fn open_catalog(file: &Path) -> Result<Vec<mentorloop_core::triage::IssueRecord>, Outcome> {
    let f = File::open(file).map_err(|e| Outcome::error(format!("{}: {e}", file.display())))?;
    load_catalog(f).map_err(|e| Outcome::error(format!("{}: {e}", file.display())))
}

pub fn triage_validate(file: &Path) -> Outcome {
    let records = match open_catalog(file) {
        Ok(r) => r,
        Err(o) => return o,
    };
    let violations = validate_catalog(&records);
    if violations.is_empty() {
        Outcome::ok(format!("OK: {} records, 0 violations\n", records.len()))
    } else {
        let mut out = String::new();
        for v in &violations {
            out.push_str(&format!("{v}\n"));
        }
        out.push_str(&format!("{} violation(s) in {} records\n", violations.len(), records.len()));
        Outcome::fail(1, out, "")
    }
}

pub fn triage_report(file: &Path, format: ReportFormat) -> Outcome {
    match open_catalog(file) {
        Ok(records) => Outcome::ok(render_report(&records, format)),
        Err(o) => o,
    }
}

pub fn audit_verify(log: &Path) -> Outcome {
    match read_log(log) {
        Ok((header, events)) => match verify_chain(header.digest, &events) {
            ChainStatus::Valid => Outcome::ok("Valid\n"),
            broken => Outcome::fail(1, format!("{broken}\n"), ""),
        },
        Err(e) => Outcome::error(format!("{}: {e}", log.display())),
    }
}

pub fn replay(path: &Path, verbose: bool) -> Outcome {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return Outcome::error(format!("{}: {e}", path.display())),
    };
    let report = match SessionTranscript::from_json(&text).and_then(|t| t.replay()) {
        Ok(r) => r,
        Err(e) => return Outcome::error(format!("{}: {e}", path.display())),
    };
    let mut out = String::new();
    for s in &report.steps {
        out.push_str(&format!("step {:>3}: {}\n", s.index, if s.matches { "match" } else { "MISMATCH" }));
        if verbose && !s.matches {
            out.push_str(&format!("  expected: {}\n  actual:   {}\n", s.expected, s.actual));
        }
    }
    let bad = report.mismatches().count();
    out.push_str(&format!("{} step(s), {bad} mismatch(es)\n", report.steps.len()));
    if bad == 0 {
        Outcome::ok(out)
    } else {
        Outcome::fail(1, out, "")
    }
}

/// Runs every command that does not need the async runtime.
pub fn run_offline(cmd: &Command) -> Option<Outcome> {
    Some(match cmd {
        Command::IngestCorpus { class, dir } => ingest_corpus(class, dir),
        Command::Triage {
            command: TriageCommand::Validate { file },
        } => triage_validate(file),
        Command::Triage {
            command: TriageCommand::Report { file, format },
        } => triage_report(file, *format),
        Command::Audit {
            command: AuditCommand::Verify { log },
        } => audit_verify(log),
        Command::Replay { transcript, verbose } => replay(transcript, *verbose),
        Command::Serve { .. } | Command::MockBackend { .. } => return None,
    })
}
