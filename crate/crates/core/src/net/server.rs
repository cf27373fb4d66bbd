use std::future::Future;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::oneshot;

use super::wire::{reason, Request, Response};
use crate::countermeasures::{compose, CountermeasureSpec, StageKind};
use crate::error::{GameError, OracleError};
use crate::game::{AttackInput, Game, KeyPolicy, ProgramModel};
use crate::mixing::derive_seed;
use crate::session::{GameSession, Oracle};

pub const DEFAULT_BUDGET: u64 = 1 << 25;

/// What every connection gets: the protected program, key policy, query
/// budget and the per-query latency used for elapsed-time accounting.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionPolicy {
    pub spec: CountermeasureSpec,
    pub key_policy: KeyPolicy,
    pub budget: u64,
    pub latency_ms: u64,
    /// Actually wait `latency_ms` before answering.
    pub pace: bool,
    pub seed: u64,
    pub n: u32,
    pub m: u32,
    pub valid_size: u64,
    pub isa_size: u64,
}

impl SessionPolicy {
    pub fn new(spec: CountermeasureSpec, key_policy: KeyPolicy, seed: u64) -> Self {
        let n = spec.stage(StageKind::PointGuard).or(spec.stage(StageKind::Aslr)).map(|s| s.width).unwrap_or(32);
        let m = spec.stage(StageKind::Isr).map(|s| s.width).unwrap_or(n);
        Self {
            spec,
            key_policy,
            budget: DEFAULT_BUDGET,
            latency_ms: 1,
            pace: false,
            seed,
            n,
            m,
            valid_size: 1 << n.saturating_sub(4).min(16),
            isa_size: 1 << m.saturating_sub(4).min(12),
        }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn program(&self) -> Result<ProgramModel, GameError> {
        ProgramModel::with_sizes(self.n, self.m, self.valid_size, self.isa_size)
    }

    pub fn game(&self) -> Result<Arc<dyn Game>, GameError> {
        Ok(Arc::new(compose(self.program()?, self.spec.clone())?))
    }

    /// The session a connection with the given index is served by.
    pub fn session(&self, game: Arc<dyn Game>, connection: u64) -> GameSession {
        GameSession::new(game, self.key_policy, derive_seed(self.seed, connection)).with_budget(self.budget)
    }
}

async fn handle(stream: TcpStream, game: Arc<dyn Game>, policy: Arc<SessionPolicy>, index: u64) -> std::io::Result<()> {
    let (read, mut write) = stream.into_split();
    let mut lines = BufReader::new(read).lines();
    let mut session = policy.session(game, index);
    while let Some(line) = lines.next_line().await? {
        if line.trim().is_empty() {
            continue;
        }
        let mut close = false;
        let response = match serde_json::from_str::<Request>(&line) {
            Err(e) => Response::error(reason::MALFORMED_FRAME, e.to_string()),
            Ok(Request::Stats { .. }) => Response::Stats {
                session: index,
                queries_used: session.queries_used(),
                simulated_elapsed_ms: session.queries_used().saturating_mul(policy.latency_ms),
                budget_remaining: session.budget_remaining().unwrap_or(u64::MAX),
            },
            Ok(Request::Query { input, .. }) => match AttackInput::try_from(&input) {
                Err(e) => Response::error(reason::INVALID_INPUT, e),
                Ok(input) => match session.query(&input) {
                    Ok(obs) => {
                        if policy.pace && policy.latency_ms > 0 {
                            tokio::time::sleep(Duration::from_millis(policy.latency_ms)).await;
                        }
                        Response::observation(index, &obs, session.queries_used(), session.budget_remaining().unwrap_or(u64::MAX))
                    }
                    Err(OracleError::BudgetExhausted) => {
                        close = true;
                        Response::error(reason::BUDGET_EXHAUSTED, format!("budget of {} queries used", policy.budget))
                    }
                    Err(e) => Response::error(reason::INVALID_INPUT, e.to_string()),
                },
            },
        };
        let mut frame = serde_json::to_string(&response).expect("responses serialize");
        frame.push('\n');
        write.write_all(frame.as_bytes()).await?;
        write.flush().await?;
        if close {
            break;
        }
    }
    Ok(())
}

/// Accepts connections until `shutdown` resolves. Connection `i` (counting
/// from 0) gets a session seeded with `derive_seed(policy.seed, i)`.
pub async fn serve_until(
    listener: TcpListener,
    policy: SessionPolicy,
    shutdown: impl Future<Output = ()>,
) -> std::io::Result<()> {
    let game = policy.game().map_err(std::io::Error::other)?;
    let policy = Arc::new(policy);
    let next = AtomicU64::new(0);
    tokio::pin!(shutdown);
    loop {
        tokio::select! {
            accepted = listener.accept() => {
                let (stream, _) = accepted?;
                stream.set_nodelay(true)?;
                let index = next.fetch_add(1, Ordering::SeqCst);
                let (game, policy) = (game.clone(), policy.clone());
                tokio::spawn(async move {
                    let _ = handle(stream, game, policy, index).await;
                });
            }
            _ = &mut shutdown => break,
        }
    }
    Ok(())
}

/// Serves on `addr` until Ctrl-C.
pub async fn serve(addr: &str, policy: SessionPolicy) -> std::io::Result<()> {
    let listener = TcpListener::bind(addr).await?;
    serve_until(listener, policy, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}

/// A server on a background thread; stops when dropped.
pub struct ServerHandle {
    pub addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}

/// Starts a server on `addr` (use port 0 for an ephemeral port).
pub fn spawn_server(addr: &str, policy: SessionPolicy) -> std::io::Result<ServerHandle> {
    policy.game().map_err(std::io::Error::other)?;
    let std_listener = std::net::TcpListener::bind(addr)?;
    std_listener.set_nonblocking(true)?;
    let local = std_listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
        rt.block_on(async move {
            let listener = TcpListener::from_std(std_listener)?;
            serve_until(listener, policy, async {
                let _ = rx.await;
            })
            .await
        })
    });
    Ok(ServerHandle { addr: local, stop: Some(tx), thread: Some(thread) })
}
