use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use duet_client::{negotiate, parse_row, ClientError, OwnerPolicy, VerifiedServer};
use duet_core::interp::format_output;

const ABORT: u8 = 2;
const SERVER_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "duet-client", version, about = "Submit data to and query a private query server")]
struct Cli {
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    server: String,
    /// key=value file: max_epsilon, max_delta, measurement, root_pubkey_file.
    #[arg(long)]
    policy: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Verify the server and print what it attests to.
    Attest,
    /// Encrypt rows to the attested enclave and insert them.
    Submit {
        /// Comma-separated values, e.g. "44.47,-73.21". Repeatable.
        #[arg(long, required = true)]
        row: Vec<String>,
    },
    /// Run the query program in FILE.
    Query { file: PathBuf },
}

fn fingerprint(s: &VerifiedServer) -> String {
    hex::encode(&s.enclave_pubkey.as_bytes()[..8])
}

fn server_error(e: ClientError) -> ExitCode {
    eprintln!("duet-client: {e}");
    ExitCode::from(SERVER_ERROR)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let policy = match OwnerPolicy::load(&cli.policy) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("duet-client: policy: {e}");
            return ExitCode::from(ABORT);
        }
    };
    let server = match negotiate(&cli.server, &policy) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("duet-client: abort ({}): {e}", e.kind());
            return ExitCode::from(ABORT);
        }
    };
    match cli.cmd {
        Cmd::Attest => {
            println!("measurement {}", hex::encode(server.measurement));
            println!("enclave key {}", fingerprint(&server));
            println!("initial budget {}", server.initial_budget);
            match server.budget() {
                Ok(b) if b.verified => println!("remaining {} (serial {})", b.budget.budget(), b.budget.serial),
                Ok(b) => {
                    eprintln!("WARNING: remaining budget {} is NOT signed by the attested enclave", b.budget.budget());
                    return ExitCode::from(SERVER_ERROR);
                }
                Err(e) => return server_error(e),
            }
        }
        Cmd::Submit { row } => {
            for text in &row {
                let values = match parse_row(text) {
                    Ok(v) => v,
                    Err(e) => {
                        eprintln!("duet-client: {e}");
                        return ExitCode::from(ABORT);
                    }
                };
                match server.submit(&values) {
                    Ok(count) => println!("inserted; server holds {count} rows"),
                    Err(e) => return server_error(e),
                }
            }
        }
        Cmd::Query { file } => {
            let program = match std::fs::read_to_string(&file) {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("duet-client: {}: {e}", file.display());
                    return ExitCode::from(ABORT);
                }
            };
            match server.query(&program) {
                Ok(out) => {
                    println!("value {}", format_output(out.value));
                    println!("cost {}", out.cost);
                    println!("remaining {} (serial {})", out.remaining.budget(), out.remaining.serial);
                    if !out.remaining_verified {
                        eprintln!("WARNING: remaining budget is NOT signed by the attested enclave; do not trust it");
                        return ExitCode::from(SERVER_ERROR);
                    }
                }
                Err(e) => return server_error(e),
            }
        }
    }
    ExitCode::SUCCESS
}
