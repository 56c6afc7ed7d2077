//! Untrusted HTTP front end for the enclave.
//!
//! The gateway stores ciphertexts and forwards requests; it never sees
//! plaintext rows or private keys. Requests cross to the enclave as
//! boundary frames, either to a thread in this process or over a Unix
//! socket to a separate enclave process.

pub mod http;
pub mod relay;
pub mod store;

pub use http::{router, Gateway, ROUTES};
pub use relay::{Relay, RelayError};
pub use store::{RecordLog, StoreError};

/// Serves `gateway` on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    gateway: Gateway,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(gateway))
        .with_graceful_shutdown(shutdown)
        .await
}
