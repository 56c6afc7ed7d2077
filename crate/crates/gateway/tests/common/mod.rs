#![allow(dead_code)]

use std::sync::Arc;
use std::thread::JoinHandle;

use duet_client::OwnerPolicy;
use duet_core::mech::{NoiseSource, Sampler};
use duet_core::Decimal;
use duet_enclave::{Budget, Enclave, EnclaveConfig, HardwareRoot, Measurement};
use duet_gateway::{Gateway, RecordLog, Relay};
use tokio::sync::oneshot;

pub const PAIRS: &str = "M [L1, U | star, dR :: dR :: []]";
pub const COUNTING: &str = "plam . df : M [L1, U | star, dR :: dR :: []] =>
  let eps = R+[1.0] in
  let delta = R+[0.001] in
  gauss[R+[1.0], eps, delta] <df> { real (rows df) }";

pub fn d(s: &str) -> Decimal {
    s.parse().unwrap()
}

pub fn config(eps: &str, delta: &str) -> EnclaveConfig {
    EnclaveConfig::new(d(eps), d(delta), PAIRS, "duet-test").unwrap()
}

/// A gateway with an in-process enclave on an ephemeral port.
pub struct TestServer {
    pub url: String,
    pub gateway: Gateway,
    pub root: Arc<HardwareRoot>,
    pub measurement: Measurement,
    pub secrets: Vec<Vec<u8>>,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl TestServer {
    pub fn start(eps: &str, delta: &str) -> Self {
        TestServer::launch(Arc::new(HardwareRoot::generate()), &config(eps, delta), Box::new(Sampler::from_entropy()))
    }

    pub fn launch(root: Arc<HardwareRoot>, cfg: &EnclaveConfig, noise: Box<dyn NoiseSource + Send>) -> Self {
        let enclave = Enclave::with_noise(cfg, root.clone(), noise);
        let measurement = enclave.measurement();
        let secrets = enclave.secret_key_bytes();
        let mut s = TestServer::with_relay(Relay::in_process(enclave));
        s.root = root;
        s.measurement = measurement;
        s.secrets = secrets;
        s
    }

    pub fn with_relay(relay: Relay) -> Self {
        let gateway = Gateway::new(relay, RecordLog::in_memory());
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        listener.set_nonblocking(true).unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let (stop, stopped) = oneshot::channel::<()>();
        let g = gateway.clone();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).unwrap();
                tokio::select! {
                    r = duet_gateway::serve(listener, g, std::future::pending()) => r.unwrap(),
                    _ = stopped => {}
                }
            });
        });
        TestServer {
            url,
            gateway,
            root: Arc::new(HardwareRoot::generate()),
            measurement: [0; 32],
            secrets: Vec::new(),
            stop: Some(stop),
            thread: Some(thread),
        }
    }

    pub fn policy(&self, max_eps: &str, max_delta: &str) -> OwnerPolicy {
        OwnerPolicy {
            max_total: Budget::new(d(max_eps), d(max_delta)),
            expected_measurement: self.measurement,
            root_pubkey: self.root.public(),
        }
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

pub fn contains(hay: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && memchr::memmem::find(hay, needle).is_some()
}

/// Every readable mapping of process `pid`, concatenated.
pub fn dump_process_memory(pid: u32) -> std::io::Result<Vec<u8>> {
    use std::io::{Read, Seek, SeekFrom};
    let maps = std::fs::read_to_string(format!("/proc/{pid}/maps"))?;
    let mut mem = std::fs::File::open(format!("/proc/{pid}/mem"))?;
    let mut out = Vec::new();
    for line in maps.lines() {
        let mut parts = line.split_whitespace();
        let (Some(range), Some(perms)) = (parts.next(), parts.next()) else {
            continue;
        };
        if !perms.starts_with('r') || line.ends_with("[vvar]") || line.ends_with("[vsyscall]") {
            continue;
        }
        let Some((lo, hi)) = range.split_once('-') else {
            continue;
        };
        let (lo, hi) = (u64::from_str_radix(lo, 16).unwrap(), u64::from_str_radix(hi, 16).unwrap());
        let mut buf = vec![0u8; (hi - lo) as usize];
        if mem.seek(SeekFrom::Start(lo)).is_ok() && mem.read_exact(&mut buf).is_ok() {
            out.extend_from_slice(&buf);
        }
    }
    Ok(out)
}

/// Enclave and gateway as two `duet-server` processes joined by a Unix socket.
pub struct Cluster {
    pub dir: tempfile::TempDir,
    pub url: String,
    pub root_pub: duet_enclave::RootPublicKey,
    pub measurement: Measurement,
    pub enclave: std::process::Child,
    pub gateway: std::process::Child,
}

fn wait_for_line(child: &mut std::process::Child, prefix: &str) -> String {
    use std::io::BufRead;
    let out = child.stdout.take().expect("piped stdout");
    let mut lines = std::io::BufReader::new(out).lines();
    loop {
        match lines.next() {
            Some(Ok(line)) if line.starts_with(prefix) => return line[prefix.len()..].to_string(),
            Some(Ok(_)) => continue,
            other => panic!("process exited before printing `{prefix}`: {other:?}"),
        }
    }
}

impl Cluster {
    pub fn start(eps: &str, delta: &str) -> Self {
        use std::process::{Command, Stdio};
        let bin = env!("CARGO_BIN_EXE_duet-server");
        let dir = tempfile::tempdir().unwrap();
        let status = Command::new(bin)
            .args(["keygen", "--out-dir"])
            .arg(dir.path())
            .stdout(Stdio::null())
            .status()
            .unwrap();
        assert!(status.success());
        let cfg = dir.path().join("enclave.conf");
        std::fs::write(&cfg, format!("epsilon={eps}\ndelta={delta}\nschema={PAIRS}\nbuild_id=duet-test\n")).unwrap();
        let socket = dir.path().join("enclave.sock");
        let mut enclave = Command::new(bin)
            .arg("enclave")
            .arg("--config")
            .arg(&cfg)
            .arg("--root-key")
            .arg(dir.path().join("root.pem"))
            .arg("--socket")
            .arg(&socket)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        wait_for_line(&mut enclave, "enclave listening on ");
        let mut gateway = Command::new(bin)
            .args(["serve", "--bind", "127.0.0.1:0", "--enclave-socket"])
            .arg(&socket)
            .arg("--store")
            .arg(dir.path().join("records.jsonl"))
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let url = wait_for_line(&mut gateway, "listening on ");
        let root_pub = duet_enclave::RootPublicKey::from_pem(
            &std::fs::read_to_string(dir.path().join("root.pub.pem")).unwrap(),
        )
        .unwrap();
        let measurement = EnclaveConfig::parse(&std::fs::read_to_string(&cfg).unwrap())
            .unwrap()
            .measurement();
        Cluster {
            dir,
            url,
            root_pub,
            measurement,
            enclave,
            gateway,
        }
    }

    pub fn policy(&self, max_eps: &str, max_delta: &str) -> OwnerPolicy {
        OwnerPolicy {
            max_total: Budget::new(d(max_eps), d(max_delta)),
            expected_measurement: self.measurement,
            root_pubkey: self.root_pub,
        }
    }
}

impl Drop for Cluster {
    fn drop(&mut self) {
        for child in [&mut self.gateway, &mut self.enclave] {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
