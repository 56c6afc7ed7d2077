//! Delivers boundary frames to the enclave, one at a time.
//!
//! All callers share one queue, so the enclave sees requests in the order
//! they were enqueued. A caller that waits for each reply before sending the
//! next gets its own requests handled in order.

use std::io;
use std::os::unix::net::UnixStream;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use duet_enclave::boundary::{FrameKind, RequestFrame, ResponseFrame};
use duet_enclave::Enclave;
use thiserror::Error;
use tokio::sync::{mpsc, oneshot};

const QUEUE_DEPTH: usize = 1024;

#[derive(Debug, Error)]
pub enum RelayError {
    #[error("enclave is not reachable")]
    Unavailable,
    #[error("boundary protocol violation: {0}")]
    Protocol(String),
}

type Job = (RequestFrame, oneshot::Sender<ResponseFrame>);

#[derive(Debug)]
pub struct Relay {
    queue: mpsc::Sender<Job>,
    next_id: AtomicU64,
}

impl Relay {
    /// Runs `handler` on a dedicated thread, fed from the queue.
    pub fn spawn<H>(mut handler: H) -> Relay
    where
        H: FnMut(&RequestFrame) -> ResponseFrame + Send + 'static,
    {
        let (queue, mut rx) = mpsc::channel::<Job>(QUEUE_DEPTH);
        std::thread::Builder::new()
            .name("enclave".into())
            .spawn(move || {
                while let Some((frame, reply)) = rx.blocking_recv() {
                    let _ = reply.send(handler(&frame));
                }
            })
            .expect("spawn enclave thread");
        Relay {
            queue,
            next_id: AtomicU64::new(1),
        }
    }

    /// The enclave lives in this process, on its own thread.
    pub fn in_process(mut enclave: Enclave) -> Relay {
        Relay::spawn(move |f| enclave.handle(f))
    }

    /// The enclave lives in another process listening on `path`.
    pub fn unix_socket(path: &Path) -> io::Result<Relay> {
        let mut stream = UnixStream::connect(path)?;
        let (queue, mut rx) = mpsc::channel::<Job>(QUEUE_DEPTH);
        std::thread::Builder::new()
            .name("enclave-link".into())
            .spawn(move || {
                while let Some((frame, reply)) = rx.blocking_recv() {
                    if frame.write_to(&mut stream).is_err() {
                        break;
                    }
                    match ResponseFrame::read_from(&mut stream) {
                        Ok(Some(resp)) => {
                            let _ = reply.send(resp);
                        }
                        // Dropping `reply` reports the enclave as gone.
                        _ => break,
                    }
                }
            })?;
        Ok(Relay {
            queue,
            next_id: AtomicU64::new(1),
        })
    }

    pub async fn call(&self, kind: FrameKind, payload: Vec<u8>) -> Result<ResponseFrame, RelayError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = oneshot::channel();
        self.queue
            .send((RequestFrame::new(id, kind, payload), tx))
            .await
            .map_err(|_| RelayError::Unavailable)?;
        let resp = rx.await.map_err(|_| RelayError::Unavailable)?;
        if resp.request_id != id {
            return Err(RelayError::Protocol(format!(
                "response for request {} answered request {id}",
                resp.request_id
            )));
        }
        Ok(resp)
    }
}
