#![allow(dead_code)]

use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use duet_client::OwnerPolicy;
use duet_core::Decimal;
use duet_enclave::{Budget, Enclave, EnclaveConfig, HardwareRoot, Measurement};
use duet_gateway::{Gateway, RecordLog, Relay};
use tokio::sync::oneshot;

pub const PAIRS: &str = "M [L1, U | star, dR :: dR :: []]";
pub const COUNTING: &str = "plam . df : M [L1, U | star, dR :: dR :: []] =>
  gauss[R+[1.0], R+[1.0], R+[0.001]] <df> { real (rows df) }";

pub fn d(s: &str) -> Decimal {
    s.parse().unwrap()
}

pub fn config(eps: &str, delta: &str) -> EnclaveConfig {
    EnclaveConfig::new(d(eps), d(delta), PAIRS, "duet-test").unwrap()
}

/// Serves `app` on an ephemeral port until dropped.
pub struct App {
    pub url: String,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl App {
    pub fn serve(app: Router) -> App {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        listener.set_nonblocking(true).unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let (stop, stopped) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).unwrap();
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = stopped.await;
                    })
                    .await
                    .unwrap();
            });
        });
        App {
            url,
            stop: Some(stop),
            thread: Some(thread),
        }
    }
}

impl Drop for App {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// An honest gateway with an in-process enclave.
pub struct Honest {
    pub app: App,
    pub root: Arc<HardwareRoot>,
    pub measurement: Measurement,
}

impl Honest {
    pub fn start(eps: &str, delta: &str) -> Honest {
        let root = Arc::new(HardwareRoot::generate());
        let enclave = Enclave::init(&config(eps, delta), root.clone());
        let measurement = enclave.measurement();
        let gateway = Gateway::new(Relay::in_process(enclave), RecordLog::in_memory());
        Honest {
            app: App::serve(duet_gateway::router(gateway)),
            root,
            measurement,
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

/// Rewrites the upstream response body for a path, or passes it through.
pub type Rewrite = Arc<dyn Fn(&str, Vec<u8>) -> Vec<u8> + Send + Sync>;

#[derive(Clone)]
struct Upstream {
    base: String,
    http: reqwest::Client,
    rewrite: Rewrite,
    seen: Arc<Mutex<Vec<String>>>,
}

async fn forward(State(up): State<Upstream>, method: Method, uri: Uri, body: Bytes) -> Response {
    let path = uri.path().to_string();
    up.seen.lock().unwrap().push(format!("{method} {path}"));
    let target = format!("{}{}", up.base, uri.path_and_query().map(|p| p.as_str()).unwrap_or("/"));
    let req = match method {
        Method::POST => up
            .http
            .post(target)
            .header("content-type", "application/json")
            .body(body),
        _ => up.http.get(target),
    };
    let Ok(resp) = req.send().await else {
        return StatusCode::BAD_GATEWAY.into_response();
    };
    let status = StatusCode::from_u16(resp.status().as_u16()).unwrap();
    let bytes = resp.bytes().await.unwrap_or_default().to_vec();
    (status, (up.rewrite)(&path, bytes)).into_response()
}

/// A man in the middle between the client and `upstream`.
pub struct Proxy {
    pub app: App,
    pub seen: Arc<Mutex<Vec<String>>>,
}

impl Proxy {
    pub fn start(upstream: &str, rewrite: Rewrite) -> Proxy {
        let seen = Arc::new(Mutex::new(Vec::new()));
        let state = Upstream {
            base: upstream.to_string(),
            http: reqwest::Client::new(),
            rewrite,
            seen: seen.clone(),
        };
        let app = Router::new().fallback(forward).with_state(state);
        Proxy {
            app: App::serve(app),
            seen,
        }
    }

    pub fn requests(&self) -> Vec<String> {
        self.seen.lock().unwrap().clone()
    }
}
