use std::future::Future;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{ConnectInfo, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::Notify;

use super::{Gateway, NdjsonLog};
use crate::node::Backend;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("server I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("log sink failed, refusing to continue unlogged: {0}")]
    LogSink(String),
}

struct AppState<B> {
    gateway: Arc<Gateway<B>>,
    log: Arc<NdjsonLog>,
    fatal: Arc<Fatal>,
}

#[derive(Default)]
struct Fatal {
    tripped: AtomicBool,
    message: std::sync::Mutex<Option<String>>,
    notify: Notify,
}

impl Fatal {
    fn trip(&self, msg: String) {
        self.message.lock().unwrap_or_else(|p| p.into_inner()).get_or_insert(msg);
        self.tripped.store(true, Ordering::SeqCst);
        self.notify.notify_waiters();
    }

    async fn wait(&self) {
        while !self.tripped.load(Ordering::SeqCst) {
            let notified = self.notify.notified();
            if self.tripped.load(Ordering::SeqCst) {
                break;
            }
            notified.await;
        }
    }
}

async fn rpc<B: Backend>(
    State(state): State<Arc<AppState<B>>>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    body: Bytes,
) -> Response {
    let handled = state.gateway.handle_request(&body, peer).await;
    for rec in &handled.records {
        if let Err(e) = state.log.append(rec) {
            tracing::error!(error = %e, "log append failed");
            state.fatal.trip(e.to_string());
            return (StatusCode::INTERNAL_SERVER_ERROR, "").into_response();
        }
    }
    ([(header::CONTENT_TYPE, "application/json")], handled.response).into_response()
}

pub fn router<B: Backend>(gateway: Arc<Gateway<B>>, log: Arc<NdjsonLog>) -> Router {
    router_with_fatal(gateway, log, Arc::new(Fatal::default()))
}

fn router_with_fatal<B: Backend>(gateway: Arc<Gateway<B>>, log: Arc<NdjsonLog>, fatal: Arc<Fatal>) -> Router {
    let state = Arc::new(AppState { gateway, log, fatal });
    Router::new()
        .route("/", post(rpc::<B>))
        .fallback(post(rpc::<B>))
        .with_state(state)
}

/// Serves until `shutdown` resolves, or until the log sink fails (returned as an error).
pub async fn serve<B: Backend>(
    gateway: Arc<Gateway<B>>,
    log: Arc<NdjsonLog>,
    listener: TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    let fatal = Arc::new(Fatal::default());
    let app = router_with_fatal(gateway, log, fatal.clone());
    let watch = fatal.clone();
    axum::serve(listener, app.into_make_service_with_connect_info::<SocketAddr>())
        .with_graceful_shutdown(async move {
            tokio::select! {
                _ = shutdown => {}
                _ = watch.wait() => {}
            }
        })
        .await?;
    if fatal.tripped.load(Ordering::SeqCst) {
        let msg = fatal.message.lock().unwrap_or_else(|p| p.into_inner()).clone();
        return Err(ServeError::LogSink(msg.unwrap_or_default()));
    }
    Ok(())
}

/// A gateway running on a background task, for tests and examples.
pub struct RunningGateway {
    pub addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<Result<(), ServeError>>,
}

impl RunningGateway {
    pub async fn spawn<B: Backend>(gateway: Arc<Gateway<B>>, log: Arc<NdjsonLog>, bind: SocketAddr) -> std::io::Result<Self> {
        let listener = TcpListener::bind(bind).await?;
        let addr = listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let task = tokio::spawn(serve(gateway, log, listener, async move {
            let _ = rx.await;
        }));
        Ok(RunningGateway {
            addr,
            stop: Some(tx),
            task,
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}/", self.addr)
    }

    pub async fn shutdown(mut self) -> Result<(), ServeError> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match (&mut self.task).await {
            Ok(r) => r,
            Err(e) => Err(ServeError::Io(std::io::Error::other(e))),
        }
    }
}
