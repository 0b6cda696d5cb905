//! `isoball`: batch front end for constructing, solving and certifying
//! holomorphic isometries from the Poincaré disk into products of balls.
//!
//! Every subcommand reads a JSON request document (from `--input`, or from
//! standard input when no request flags are given), overlays the flags given
//! on the command line, and prints one JSON report. Exit status is 0 when all
//! requested checks pass, 1 when a check fails, 2 for invalid requests and 3
//! when a numerical routine rejects its input.

mod commands;

use std::io::{IsTerminal, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{Map, Value};

use commands::Outcome;

/// Version tag written at the top of every report.
pub const SCHEMA: &str = "isoball/1";

#[derive(Debug, Parser)]
#[command(name = "isoball", version, about = "Holomorphic isometries of the Poincaré disk into products of balls")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Debug, Args)]
struct Common {
    /// Request document; `-` reads standard input.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Write per-sample `(w, residual)` pairs as CSV.
    #[arg(long, global = true)]
    emit_samples: Option<PathBuf>,
    /// Tolerance override for the check.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Number of sample points.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Series truncation order used when solving.
    #[arg(long, global = true)]
    order: Option<usize>,
}

#[derive(Debug, Args)]
struct MapArgs {
    /// Map descriptor, e.g. `{"kind":"pth_root","p":3}`.
    #[arg(long)]
    map: Option<String>,
    /// Target constants `μ` as a JSON list; defaults to the map's own.
    #[arg(long)]
    constants: Option<String>,
    /// Source constant `k`; defaults to the map's own.
    #[arg(long)]
    k: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a map and report its target, constants and sample values.
    Construct {
        #[command(flatten)]
        map: MapArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Solve the germ determined by a unitary matrix.
    Solve {
        /// Parameter of the `U_ζ` family, as a number or `[re, im]`.
        #[arg(long)]
        zeta: Option<String>,
        /// Unitary matrix, row-major, entries as `[re, im]`.
        #[arg(long)]
        matrix: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Check the functional equation on disk samples.
    Verify {
        #[command(flatten)]
        map: MapArgs,
        /// Radius of the sampled disk.
        #[arg(long)]
        radius: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Check the polarized functional equation on sample pairs.
    Polarize {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        radius: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare pulled-back and source Kähler metrics by finite differences.
    Metric {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        radius: Option<f64>,
        /// Finite-difference step.
        #[arg(long)]
        step: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Certify that one target factor of a map is proper.
    Proper {
        #[command(flatten)]
        map: MapArgs,
        /// Target factor (1-based); defaults to the last one.
        #[arg(long)]
        factor: Option<usize>,
        /// Sample angles per circle.
        #[arg(long)]
        angles: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Global and componentwise sheeting numbers of a map into a polydisk.
    Sheeting {
        #[command(flatten)]
        map: MapArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Decide whether two solved maps are congruent.
    Congruence {
        /// First map descriptor.
        #[arg(long)]
        f: Option<String>,
        /// Second map descriptor.
        #[arg(long)]
        g: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Check the Bergman determinant expansion on contractions.
    KernelCheck {
        /// Rows of the sampled matrices.
        #[arg(long)]
        p: Option<usize>,
        /// Columns of the sampled matrices.
        #[arg(long)]
        q: Option<usize>,
        /// A single matrix to check instead of the sampled family.
        #[arg(long)]
        matrix: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Classify components and test the rational rigidity conclusion.
    Rigidity {
        #[command(flatten)]
        map: MapArgs,
        #[command(flatten)]
        common: Common,
    },
}

/// A rejected request, reported in a machine-readable envelope.
#[derive(Debug)]
pub struct Failure {
    pub kind: FailureKind,
    pub operation: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Validation,
    Numeric,
}

impl Failure {
    pub fn validation(operation: &str, message: impl Into<String>) -> Self {
        Failure { kind: FailureKind::Validation, operation: operation.into(), message: message.into() }
    }

    fn exit_code(&self) -> u8 {
        match self.kind {
            FailureKind::Validation => 2,
            FailureKind::Numeric => 3,
        }
    }
}

impl From<isoball::Error> for Failure {
    fn from(e: isoball::Error) -> Self {
        let kind = if e.is_validation() { FailureKind::Validation } else { FailureKind::Numeric };
        Failure { kind, operation: e.operation().into(), message: e.to_string() }
    }
}

#[derive(Serialize)]
struct ErrorEnvelope<'a> {
    schema: &'static str,
    command: Option<&'a str>,
    status: &'static str,
    error: ErrorBody<'a>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: FailureKind,
    operation: &'a str,
    message: &'a str,
}

fn print_envelope(command: Option<&str>, failure: &Failure) {
    let envelope = ErrorEnvelope {
        schema: SCHEMA,
        command,
        status: "error",
        error: ErrorBody { kind: failure.kind, operation: &failure.operation, message: &failure.message },
    };
    print_stdout(&serde_json::to_string_pretty(&envelope).expect("envelope serializes"));
}

/// Prints a line to stdout. A closed pipe is not an error worth panicking over.
fn print_stdout(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn parse_json(flag: &str, text: &str) -> Result<Value, Failure> {
    serde_json::from_str(text).map_err(|e| Failure::validation("parse_request", format!("--{flag}: {e}")))
}

/// Flags given on the command line, as JSON request fields.
#[derive(Default)]
struct Overlay(Map<String, Value>);

impl Overlay {
    fn json(&mut self, key: &str, text: &Option<String>) -> Result<(), Failure> {
        if let Some(t) = text {
            self.0.insert(key.into(), parse_json(key, t)?);
        }
        Ok(())
    }

    fn value<T: Into<Value> + Copy>(&mut self, key: &str, v: Option<T>) {
        if let Some(v) = v {
            self.0.insert(key.into(), v.into());
        }
    }

    fn map_args(&mut self, m: &MapArgs) -> Result<(), Failure> {
        self.json("map", &m.map)?;
        self.json("constants", &m.constants)?;
        self.value("k", m.k);
        Ok(())
    }

    fn common(&mut self, c: &Common) {
        self.value("tol", c.tol);
        self.value("samples", c.samples.map(|s| s as u64));
        self.value("order", c.order.map(|s| s as u64));
    }
}

fn read_document(common: &Common, has_flags: bool) -> Result<Map<String, Value>, Failure> {
    let text = match &common.input {
        Some(p) if p == Path::new("-") => read_stdin()?,
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Failure::validation("read_input", format!("{}: {e}", p.display())))?,
        None if !has_flags && !std::io::stdin().is_terminal() => read_stdin()?,
        None => String::new(),
    };
    if text.trim().is_empty() {
        return Ok(Map::new());
    }
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(Failure::validation("parse_request", "request document must be a JSON object")),
        Err(e) => Err(Failure::validation("parse_request", format!("malformed JSON: {e}"))),
    }
}

fn read_stdin() -> Result<String, Failure> {
    let mut s = String::new();
    std::io::stdin()
        .read_to_string(&mut s)
        .map_err(|e| Failure::validation("read_input", format!("standard input: {e}")))?;
    Ok(s)
}

fn write_samples(path: &Path, samples: &[(isoball::Complex64, f64)]) -> Result<(), Failure> {
    let mut csv = String::from("w_re,w_im,residual\n");
    for (w, r) in samples {
        csv.push_str(&format!("{},{},{}\n", w.re, w.im, r));
    }
    std::fs::write(path, csv).map_err(|e| Failure::validation("emit_samples", format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct Report<'a> {
    schema: &'static str,
    command: &'a str,
    status: &'static str,
    pass: bool,
    config: Value,
    result: Value,
}

fn run(command: &Command) -> Result<(String, Outcome, &Common), Failure> {
    let mut o = Overlay::default();
    let (name, common) = match command {
        Command::Construct { map, common } => {
            o.map_args(map)?;
            ("construct", common)
        }
        Command::Solve { zeta, matrix, common } => {
            o.json("zeta", zeta)?;
            o.json("matrix", matrix)?;
            ("solve", common)
        }
        Command::Verify { map, radius, common } => {
            o.map_args(map)?;
            o.value("radius", *radius);
            ("verify", common)
        }
        Command::Polarize { map, radius, common } => {
            o.map_args(map)?;
            o.value("radius", *radius);
            ("polarize", common)
        }
        Command::Metric { map, radius, step, common } => {
            o.map_args(map)?;
            o.value("radius", *radius);
            o.value("step", *step);
            ("metric", common)
        }
        Command::Proper { map, factor, angles, common } => {
            o.map_args(map)?;
            o.value("factor", factor.map(|x| x as u64));
            o.value("angles", angles.map(|x| x as u64));
            ("proper", common)
        }
        Command::Sheeting { map, common } => {
            o.map_args(map)?;
            ("sheeting", common)
        }
        Command::Congruence { f, g, common } => {
            o.json("f", f)?;
            o.json("g", g)?;
            ("congruence", common)
        }
        Command::KernelCheck { p, q, matrix, common } => {
            o.value("p", p.map(|x| x as u64));
            o.value("q", q.map(|x| x as u64));
            o.json("matrix", matrix)?;
            ("kernel-check", common)
        }
        Command::Rigidity { map, common } => {
            o.map_args(map)?;
            ("rigidity", common)
        }
    };
    o.common(common);
    let mut doc = read_document(common, !o.0.is_empty())?;
    doc.extend(o.0);
    let outcome = commands::dispatch(name, Value::Object(doc))?;
    Ok((name.to_string(), outcome, common))
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Construct { .. } => "construct",
        Command::Solve { .. } => "solve",
        Command::Verify { .. } => "verify",
        Command::Polarize { .. } => "polarize",
        Command::Metric { .. } => "metric",
        Command::Proper { .. } => "proper",
        Command::Sheeting { .. } => "sheeting",
        Command::Congruence { .. } => "congruence",
        Command::KernelCheck { .. } => "kernel-check",
        Command::Rigidity { .. } => "rigidity",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let failure = Failure::validation("parse_arguments", e.to_string().trim_end());
            print_envelope(None, &failure);
            return ExitCode::from(failure.exit_code());
        }
    };
    let name = command_name(&cli.command);
    match run(&cli.command).and_then(|(name, outcome, common)| {
        if let Some(path) = &common.emit_samples {
            write_samples(path, &outcome.samples)?;
        }
        let report = Report {
            schema: SCHEMA,
            command: &name,
            status: "ok",
            pass: outcome.pass,
            config: outcome.config,
            result: outcome.result,
        };
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        match &common.output {
            Some(path) => std::fs::write(path, text + "\n")
                .map_err(|e| Failure::validation("write_output", format!("{}: {e}", path.display())))?,
            None => print_stdout(&text),
        }
        Ok(outcome.pass)
    }) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(failure) => {
            print_envelope(Some(name), &failure);
            ExitCode::from(failure.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_errors_map_to_exit_codes() {
        let numeric: Failure = isoball::Error::OrbitOverflow { limit: 9 }.into();
        assert_eq!((numeric.kind, numeric.exit_code()), (FailureKind::Numeric, 3));
        assert_eq!(numeric.operation, "sheeting_report");
        let invalid: Failure = isoball::Error::UnknownForm("x".into()).into();
        assert_eq!((invalid.kind, invalid.exit_code()), (FailureKind::Validation, 2));
    }
}
