//! Command-line front end: one binary, one subcommand per pipeline
//! role.
//!
//! Exit codes are the machine contract: 0 success, 1 usage error,
//! 2 I/O error, 3 protocol/format error, and for `detect` exit 4 when
//! the scan found affected files (0 when clean).

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use keymon::detector::{scan, write_reports, DetectError, HashMode, SignatureDb};
use keymon::event::{capture_interactive, parse_event_script, serialize_events};
use keymon::heuristic::{
    heuristic_scan, write_findings, Allowlist, HeuristicError, RuleSet,
};
use keymon::hill::{decrypt, encrypt, CipherBlob, HillKey};
use keymon::transport::{encrypt_batches, read_log, send_log, ServerConfig, TransportError};

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_PROTOCOL: u8 = 3;
const EXIT_AFFECTED: u8 = 4;

#[derive(Parser)]
#[command(
    name = "keymon",
    version,
    about = "Consent-first input-event monitoring pipeline and anti-keylogger scanners"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the collecting server: append received frames to a log file
    Serve {
        /// Address to listen on, host:port
        #[arg(long)]
        bind: String,
        /// Append-only log file for received frames
        #[arg(long)]
        log: PathBuf,
    },
    /// Encrypt an event script and ship it to a server
    Send {
        /// Server address, host:port
        #[arg(long)]
        to: String,
        /// Event script file to ship
        #[arg(long)]
        script: PathBuf,
        /// Hill key file
        #[arg(long)]
        key: PathBuf,
        /// Events per encrypted frame
        #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
        batch: u64,
    },
    /// Record typed input from this terminal into an event script
    Capture {
        /// Script file to write
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate an event script and re-emit it in canonical form
    Replay {
        /// Event script file to read
        #[arg(long)]
        script: PathBuf,
        /// Canonicalized script file to write
        #[arg(long)]
        out: PathBuf,
    },
    /// Decrypt a server log file back into event scripts
    ReadLog {
        /// Server log file to read
        #[arg(long)]
        log: PathBuf,
        /// Hill key file the frames were encrypted with
        #[arg(long)]
        key: PathBuf,
    },
    /// Scan a directory tree against a signature database
    Detect {
        /// Directory (or single file) to scan
        #[arg(long)]
        root: PathBuf,
        /// Signature database file
        #[arg(long)]
        signatures: PathBuf,
        /// Hash the whole file or only its header prefix
        #[arg(long, value_enum, default_value_t = ModeArg::Full)]
        mode: ModeArg,
        /// Header prefix length in bytes (header mode only)
        #[arg(long = "header-len", default_value_t = 1024, value_parser = clap::value_parser!(u64).range(1..))]
        header_len: u64,
        /// Directory for affected.txt, errors.txt, result.txt
        #[arg(long)]
        out: PathBuf,
    },
    /// Scan a directory tree with token-scoring rules
    Heuristic {
        /// Directory (or single file) to scan
        #[arg(long)]
        root: PathBuf,
        /// Rule file (weight/token/description lines plus threshold)
        #[arg(long)]
        rules: PathBuf,
        /// Allowlist file of exact paths never flagged
        #[arg(long)]
        allow: Option<PathBuf>,
        /// Directory for heuristic.txt
        #[arg(long)]
        out: PathBuf,
    },
    /// Encrypt or decrypt a single file with a Hill key
    Hill {
        #[command(subcommand)]
        op: HillOp,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    Header,
}

#[derive(Subcommand)]
enum HillOp {
    /// Encrypt a file into a cipher blob
    Encrypt {
        /// Hill key file
        #[arg(long)]
        key: PathBuf,
        /// Plaintext input file
        #[arg(long = "in")]
        input: PathBuf,
        /// Cipher blob output file
        #[arg(long)]
        out: PathBuf,
    },
    /// Decrypt a cipher blob back into the original file
    Decrypt {
        /// Hill key file
        #[arg(long)]
        key: PathBuf,
        /// Cipher blob input file
        #[arg(long = "in")]
        input: PathBuf,
        /// Plaintext output file
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Command::Serve { bind, log } => cmd_serve(bind, log),
        Command::Send {
            to,
            script,
            key,
            batch,
        } => cmd_send(&to, &script, &key, batch as usize),
        Command::Capture { out } => cmd_capture(&out),
        Command::Replay { script, out } => cmd_replay(&script, &out),
        Command::ReadLog { log, key } => cmd_read_log(&log, &key),
        Command::Detect {
            root,
            signatures,
            mode,
            header_len,
            out,
        } => cmd_detect(&root, &signatures, mode, header_len, &out),
        Command::Heuristic {
            root,
            rules,
            allow,
            out,
        } => cmd_heuristic(&root, &rules, allow.as_deref(), &out),
        Command::Hill { op } => match op {
            HillOp::Encrypt { key, input, out } => cmd_hill(&key, &input, &out, true),
            HillOp::Decrypt { key, input, out } => cmd_hill(&key, &input, &out, false),
        },
    };
    ExitCode::from(code)
}

fn fail(err: &impl std::fmt::Display, code: u8) -> u8 {
    eprintln!("error: {err}");
    code
}

fn transport_code(err: &TransportError) -> u8 {
    match err {
        TransportError::Io(_) => EXIT_IO,
        _ => EXIT_PROTOCOL,
    }
}

fn detect_code(err: &DetectError) -> u8 {
    match err {
        DetectError::RootMissing(_) | DetectError::BadHeaderLen => EXIT_USAGE,
        DetectError::Io(_) | DetectError::Write { .. } => EXIT_IO,
        DetectError::Signature { .. } => EXIT_PROTOCOL,
    }
}

fn heuristic_code(err: &HeuristicError) -> u8 {
    match err {
        HeuristicError::RootMissing(_) => EXIT_USAGE,
        HeuristicError::Io(_) | HeuristicError::Write { .. } => EXIT_IO,
        _ => EXIT_PROTOCOL,
    }
}

fn cmd_serve(bind: String, log: PathBuf) -> u8 {
    let config = ServerConfig::new(bind, log);
    // Bind first so "listening on" is printed only once the port is
    // really open; run_server would hide the bound address.
    let server = match keymon::transport::Server::bind(&config) {
        Ok(server) => server,
        Err(err) => return fail(&err, transport_code(&err)),
    };
    println!("listening on {}", server.local_addr());
    let _ = io::stdout().flush();
    match server.run() {
        Ok(()) => 0,
        Err(err) => fail(&err, transport_code(&err)),
    }
}

fn cmd_send(to: &str, script: &PathBuf, key: &PathBuf, batch: usize) -> u8 {
    let text = match fs::read_to_string(script) {
        Ok(text) => text,
        Err(err) => return fail(&format_args!("{}: {err}", script.display()), EXIT_IO),
    };
    let parsed = match parse_event_script(&text) {
        Ok(parsed) => parsed,
        Err(err) => return fail(&format_args!("{}: {err}", script.display()), EXIT_PROTOCOL),
    };
    let key = match load_key(key) {
        Ok(key) => key,
        Err(code) => return code,
    };
    let payloads = match encrypt_batches(&parsed.events, &key, batch) {
        Ok(payloads) => payloads,
        Err(err) => return fail(&err, EXIT_PROTOCOL),
    };
    match send_log(to, &payloads) {
        Ok(delivery) => {
            println!(
                "sent {} frame(s) carrying {} event(s) to {to}; all acknowledged",
                delivery.frames_sent,
                parsed.events.len()
            );
            0
        }
        Err(err) => fail(&err, transport_code(&err)),
    }
}

fn cmd_capture(out: &PathBuf) -> u8 {
    eprintln!("keymon capture: recording key events typed into this terminal.");
    eprintln!("Everything stays local: events go only to {}.", out.display());
    eprintln!("By continuing you consent to this session being recorded.");
    eprintln!("Finish with end-of-input (Ctrl-D); abort with Ctrl-C.");
    let stdin = io::stdin();
    let script = match capture_interactive(stdin.lock()) {
        Ok(script) => script,
        Err(err) => return fail(&err, EXIT_IO),
    };
    if let Err(err) = fs::write(out, serialize_events(&script)) {
        return fail(&format_args!("{}: {err}", out.display()), EXIT_IO);
    }
    eprintln!("captured {} event(s) to {}", script.events.len(), out.display());
    0
}

fn cmd_replay(script: &PathBuf, out: &PathBuf) -> u8 {
    let text = match fs::read_to_string(script) {
        Ok(text) => text,
        Err(err) => return fail(&format_args!("{}: {err}", script.display()), EXIT_IO),
    };
    let parsed = match parse_event_script(&text) {
        Ok(parsed) => parsed,
        Err(err) => return fail(&format_args!("{}: {err}", script.display()), EXIT_PROTOCOL),
    };
    if let Err(err) = fs::write(out, serialize_events(&parsed)) {
        return fail(&format_args!("{}: {err}", out.display()), EXIT_IO);
    }
    println!(
        "replayed {} event(s) from {} to {}",
        parsed.events.len(),
        script.display(),
        out.display()
    );
    0
}

fn cmd_read_log(log: &PathBuf, key: &PathBuf) -> u8 {
    let key = match load_key(key) {
        Ok(key) => key,
        Err(code) => return code,
    };
    let scripts = match read_log(log, &key) {
        Ok(scripts) => scripts,
        Err(err) => return fail(&err, transport_code(&err)),
    };
    let events: usize = scripts.iter().map(|s| s.events.len()).sum();
    for script in &scripts {
        print!("{}", serialize_events(script));
    }
    eprintln!("recovered {events} event(s) from {} frame(s)", scripts.len());
    0
}

fn cmd_detect(
    root: &PathBuf,
    signatures: &PathBuf,
    mode: ModeArg,
    header_len: u64,
    out: &PathBuf,
) -> u8 {
    let mut db = match SignatureDb::load(signatures) {
        Ok(db) => db,
        Err(err) => return fail(&err, detect_code(&err)),
    };
    if db.duplicate_count > 0 {
        eprintln!(
            "note: {} duplicate signature line(s) collapsed",
            db.duplicate_count
        );
    }
    let mode = match mode {
        ModeArg::Full => HashMode::FullFile,
        ModeArg::Header => HashMode::HeaderPrefix,
    };
    if let Err(err) = db.configure(mode, header_len) {
        return fail(&err, detect_code(&err));
    }
    let report = match scan(root, &db) {
        Ok(report) => report,
        Err(err) => return fail(&err, detect_code(&err)),
    };
    if let Err(err) = fs::create_dir_all(out) {
        return fail(&format_args!("{}: {err}", out.display()), EXIT_IO);
    }
    if let Err(err) = write_reports(&report, out) {
        return fail(&err, detect_code(&err));
    }
    println!(
        "scanned {} file(s): {} affected, {} error(s); reports in {}",
        report.scanned_count,
        report.affected.len(),
        report.error_entries.len(),
        out.display()
    );
    if report.affected.is_empty() {
        0
    } else {
        EXIT_AFFECTED
    }
}

fn cmd_heuristic(root: &PathBuf, rules: &PathBuf, allow: Option<&std::path::Path>, out: &PathBuf) -> u8 {
    let rules = match RuleSet::load(rules) {
        Ok(rules) => rules,
        Err(err) => return fail(&err, heuristic_code(&err)),
    };
    let allowlist = match allow {
        Some(path) => match Allowlist::load(path) {
            Ok(allowlist) => allowlist,
            Err(err) => return fail(&err, heuristic_code(&err)),
        },
        None => Allowlist::empty(),
    };
    let report = match heuristic_scan(root, &rules, &allowlist) {
        Ok(report) => report,
        Err(err) => return fail(&err, heuristic_code(&err)),
    };
    if let Err(err) = fs::create_dir_all(out) {
        return fail(&format_args!("{}: {err}", out.display()), EXIT_IO);
    }
    let written = match write_findings(&report, out) {
        Ok(written) => written,
        Err(err) => return fail(&err, heuristic_code(&err)),
    };
    println!(
        "scanned {} file(s): {} finding(s), {} error(s); findings in {}",
        report.scanned_count,
        report.findings.len(),
        report.error_entries.len(),
        written.display()
    );
    0
}

fn load_key(path: &PathBuf) -> Result<HillKey, u8> {
    let text = fs::read_to_string(path)
        .map_err(|err| fail(&format_args!("{}: {err}", path.display()), EXIT_IO))?;
    HillKey::parse_key_file(&text).map_err(|err| fail(&err, EXIT_PROTOCOL))
}

fn cmd_hill(key: &PathBuf, input: &PathBuf, out: &PathBuf, encrypting: bool) -> u8 {
    let key = match load_key(key) {
        Ok(key) => key,
        Err(code) => return code,
    };
    let data = match fs::read(input) {
        Ok(data) => data,
        Err(err) => return fail(&format_args!("{}: {err}", input.display()), EXIT_IO),
    };
    let output = if encrypting {
        match encrypt(&data, &key) {
            Ok(blob) => blob.to_bytes(),
            Err(err) => return fail(&err, EXIT_PROTOCOL),
        }
    } else {
        let blob = match CipherBlob::from_bytes(&data) {
            Ok(blob) => blob,
            Err(err) => return fail(&err, EXIT_PROTOCOL),
        };
        match decrypt(&blob, &key) {
            Ok(plain) => plain,
            Err(err) => return fail(&err, EXIT_PROTOCOL),
        }
    };
    if let Err(err) = fs::write(out, &output) {
        return fail(&format_args!("{}: {err}", out.display()), EXIT_IO);
    }
    println!(
        "{} {} byte(s) to {}",
        if encrypting { "encrypted" } else { "decrypted" },
        output.len(),
        out.display()
    );
    0
}
