use std::fs;
use std::io::Write;
use std::os::unix::fs::OpenOptionsExt;
use std::os::unix::net::UnixListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use duet_enclave::{Enclave, EnclaveConfig, HardwareRoot};
use duet_gateway::{Gateway, RecordLog, Relay};

#[derive(Parser)]
#[command(name = "duet-server", version, about = "Differentially private query server")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Create a simulated hardware root key pair.
    Keygen {
        /// Writes root.pem (private) and root.pub.pem here.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Print the measurement a verifier should expect for a config.
    Measure {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the HTTP gateway.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Enclave config; required unless --enclave-socket is given.
        #[arg(long, required_unless_present = "enclave_socket")]
        config: Option<PathBuf>,
        #[arg(long, required_unless_present = "enclave_socket")]
        root_key: Option<PathBuf>,
        /// Use an enclave process listening here instead of an in-process one.
        #[arg(long, conflicts_with_all = ["config", "root_key"])]
        enclave_socket: Option<PathBuf>,
        /// Append ciphertexts to this file.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Run the enclave as its own process behind a Unix socket.
    Enclave {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        root_key: PathBuf,
        #[arg(long)]
        socket: PathBuf,
    },
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn launch(config: &Path, root_key: &Path) -> Result<Enclave, String> {
    let config = EnclaveConfig::parse(&read(config)?).map_err(|e| format!("{}: {e}", config.display()))?;
    let root = HardwareRoot::from_pkcs8_pem(&read(root_key)?).map_err(|e| format!("{}: {e}", root_key.display()))?;
    let enclave = Enclave::init(&config, Arc::new(root));
    eprintln!("enclave measurement {}", hex::encode(enclave.measurement()));
    eprintln!("initial budget {}", config.budget());
    Ok(enclave)
}

fn keygen(dir: &Path) -> Result<(), String> {
    let root = HardwareRoot::generate();
    let private = dir.join("root.pem");
    let mut f = fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .mode(0o600)
        .open(&private)
        .map_err(|e| format!("{}: {e}", private.display()))?;
    f.write_all(root.to_pkcs8_pem().as_bytes()).map_err(|e| e.to_string())?;
    let public = dir.join("root.pub.pem");
    fs::write(&public, root.public().to_pem()).map_err(|e| format!("{}: {e}", public.display()))?;
    println!("{}", private.display());
    println!("{}", public.display());
    Ok(())
}

fn serve(
    bind: &str,
    relay: Relay,
    store: Option<&Path>,
) -> Result<(), String> {
    let store = match store {
        Some(p) => RecordLog::open(p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => RecordLog::in_memory(),
    };
    let gateway = Gateway::new(relay, store);
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .map_err(|e| format!("bind {bind}: {e}"))?;
        let addr = listener.local_addr().map_err(|e| e.to_string())?;
        println!("listening on http://{addr}");
        std::io::stdout().flush().ok();
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        duet_gateway::serve(listener, gateway, shutdown)
            .await
            .map_err(|e| e.to_string())
    })
}

fn run_enclave(mut enclave: Enclave, socket: &Path) -> Result<(), String> {
    if socket.exists() {
        fs::remove_file(socket).map_err(|e| format!("{}: {e}", socket.display()))?;
    }
    let listener = UnixListener::bind(socket).map_err(|e| format!("{}: {e}", socket.display()))?;
    println!("enclave listening on {}", socket.display());
    std::io::stdout().flush().ok();
    // One gateway connection at a time; state carries over between them.
    for conn in listener.incoming() {
        let stream = conn.map_err(|e| e.to_string())?;
        let mut reader = stream.try_clone().map_err(|e| e.to_string())?;
        let mut writer = stream;
        if let Err(e) = enclave.serve_stream(&mut reader, &mut writer) {
            eprintln!("gateway connection ended: {e}");
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.cmd {
        Cmd::Keygen { out_dir } => keygen(&out_dir),
        Cmd::Measure { config } => {
            let c = EnclaveConfig::parse(&read(&config)?).map_err(|e| format!("{}: {e}", config.display()))?;
            println!("{}", hex::encode(c.measurement()));
            Ok(())
        }
        Cmd::Serve {
            bind,
            config,
            root_key,
            enclave_socket,
            store,
        } => {
            let relay = match (enclave_socket, config, root_key) {
                (Some(sock), _, _) => {
                    Relay::unix_socket(&sock).map_err(|e| format!("{}: {e}", sock.display()))?
                }
                (None, Some(config), Some(root_key)) => Relay::in_process(launch(&config, &root_key)?),
                _ => unreachable!("clap enforces --config and --root-key"),
            };
            serve(&bind, relay, store.as_deref())
        }
        Cmd::Enclave {
            config,
            root_key,
            socket,
        } => run_enclave(launch(&config, &root_key)?, &socket),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("duet-server: {e}");
            ExitCode::FAILURE
        }
    }
}
