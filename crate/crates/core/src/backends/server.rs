//! HTTP front for [`MockWorld`], plus a helper to run any router on a
//! background thread.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use tokio::sync::oneshot;

use super::{Endpoint, MockWorld};

pub fn mock_router(world: Arc<MockWorld>) -> Router {
    let mut router = Router::new();
    for endpoint in Endpoint::ALL {
        router = router.route(
            endpoint.path(),
            post(move |State(world): State<Arc<MockWorld>>, body: Bytes| async move {
                let body = String::from_utf8_lossy(&body);
                let raw = world.handle(endpoint, &body);
                json_response(raw.status, raw.body)
            }),
        );
    }
    router.with_state(world)
}

pub fn json_response(status: u16, body: String) -> Response {
    let status = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

/// A server running on its own thread and runtime; stops on drop.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Binds `addr` (port 0 picks a free port) and serves `router` in the
/// background.
pub fn spawn_router(router: Router, addr: SocketAddr) -> std::io::Result<ServerHandle> {
    let (ready_tx, ready_rx) = std::sync::mpsc::channel();
    let (shutdown_tx, shutdown_rx) = oneshot::channel::<()>();
    let thread = std::thread::Builder::new().name("oad-server".into()).spawn(move || {
        let rt = match tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build() {
            Ok(rt) => rt,
            Err(e) => {
                let _ = ready_tx.send(Err(e));
                return;
            }
        };
        rt.block_on(async move {
            let listener = match tokio::net::TcpListener::bind(addr).await {
                Ok(l) => l,
                Err(e) => {
                    let _ = ready_tx.send(Err(e));
                    return;
                }
            };
            let _ = ready_tx.send(listener.local_addr());
            let _ = axum::serve(listener, router)
                .with_graceful_shutdown(async {
                    let _ = shutdown_rx.await;
                })
                .await;
        });
    })?;
    let addr = ready_rx
        .recv()
        .map_err(|_| std::io::Error::other("server thread exited before binding"))??;
    Ok(ServerHandle { addr, shutdown: Some(shutdown_tx), thread: Some(thread) })
}

pub fn spawn_mock(world: Arc<MockWorld>) -> std::io::Result<ServerHandle> {
    spawn_router(mock_router(world), SocketAddr::from(([127, 0, 0, 1], 0)))
}

/// Serves the mock on `addr` until the process is killed.
pub fn serve_mock_blocking(world: Arc<MockWorld>, addr: SocketAddr) -> std::io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("mock backends listening on http://{}", listener.local_addr()?);
        axum::serve(listener, mock_router(world)).await
    })
}
