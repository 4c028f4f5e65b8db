//! Websocket host around a [`LiveSession`].
//!
//! The world loop owns the session on a dedicated thread and keeps
//! absolute 80 Hz deadlines. Clients never touch the session directly:
//! inputs go through a queue drained at tick boundaries, state goes out
//! through a latest-value channel (slow readers skip states) and tactile
//! frames through a bounded broadcast sent at their exact onset.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc as std_mpsc;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc, oneshot, watch};
use tokio_tungstenite::tungstenite::Message;

use crate::protocol::{self, InputMessage, Role, ServerMessage, TactileMessage};
use crate::session::{LiveSession, SessionInput, Step};

/// Port used when neither a flag nor the environment names one.
pub const DEFAULT_PORT: u16 = 8765;
/// Environment variable consulted for the port.
pub const PORT_ENV: &str = "SWARMLINK_PORT";
/// State messages go out every this many ticks by default (40 Hz).
pub const DEFAULT_RATE_DIV: u32 = 2;

// The loop re-anchors instead of replaying ticks once it is this far behind.
const MAX_LAG: Duration = Duration::from_millis(250);

#[derive(Debug, Clone, Copy)]
pub struct ServerConfig {
    pub addr: SocketAddr,
    pub rate_div: u32,
}

impl ServerConfig {
    pub fn new(addr: SocketAddr) -> Self {
        Self {
            addr,
            rate_div: DEFAULT_RATE_DIV,
        }
    }
}

struct Queued {
    input: SessionInput,
    reply: mpsc::UnboundedSender<String>,
}

struct Hub {
    inputs: Mutex<std_mpsc::Sender<Queued>>,
    state: watch::Receiver<Arc<str>>,
    events: broadcast::Sender<Arc<str>>,
    hand_owner: Mutex<Option<u64>>,
    next_client: AtomicU64,
}

pub struct ServerHandle {
    local_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    ticks: Arc<AtomicU64>,
    net_stop: Option<oneshot::Sender<()>>,
    world_thread: Option<thread::JoinHandle<LiveSession>>,
    net_thread: Option<thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    /// Session ticks advanced so far.
    pub fn ticks(&self) -> u64 {
        self.ticks.load(Ordering::Acquire)
    }

    /// Stops both threads and hands back the session.
    pub fn shutdown(mut self) -> LiveSession {
        self.stop_threads().expect("world thread exits once")
    }

    fn stop_threads(&mut self) -> Option<LiveSession> {
        self.stop.store(true, Ordering::Release);
        if let Some(tx) = self.net_stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.net_thread.take() {
            let _ = t.join();
        }
        self.world_thread.take().map(|t| t.join().expect("world loop panicked"))
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_threads();
    }
}

/// Binds the socket and starts the world loop and the websocket acceptor.
pub fn start(session: LiveSession, config: ServerConfig) -> std::io::Result<ServerHandle> {
    let rate_div = config.rate_div.max(1);
    let listener = std::net::TcpListener::bind(config.addr)?;
    listener.set_nonblocking(true)?;
    let local_addr = listener.local_addr()?;

    let (input_tx, input_rx) = std_mpsc::channel();
    let (state_tx, state_rx) = watch::channel::<Arc<str>>(protocol::encode_state(&session.state_message()).into());
    let (events_tx, _) = broadcast::channel::<Arc<str>>(64);
    let hub = Arc::new(Hub {
        inputs: Mutex::new(input_tx),
        state: state_rx,
        events: events_tx.clone(),
        hand_owner: Mutex::new(None),
        next_client: AtomicU64::new(1),
    });

    let stop = Arc::new(AtomicBool::new(false));
    let ticks = Arc::new(AtomicU64::new(session.tick()));
    let world_thread = {
        let (stop, ticks) = (stop.clone(), ticks.clone());
        thread::Builder::new()
            .name("world-loop".into())
            .spawn(move || world_loop(session, rate_div, input_rx, state_tx, events_tx, stop, ticks))?
    };

    let (net_stop, net_stop_rx) = oneshot::channel();
    let runtime = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    let net_thread = thread::Builder::new().name("ws-accept".into()).spawn(move || {
        runtime.block_on(async move {
            let listener = match TcpListener::from_std(listener) {
                Ok(l) => l,
                Err(e) => {
                    log::error!("listener: {e}");
                    return;
                }
            };
            accept_loop(listener, hub, net_stop_rx).await;
        });
    })?;

    Ok(ServerHandle {
        local_addr,
        stop,
        ticks,
        net_stop: Some(net_stop),
        world_thread: Some(world_thread),
        net_thread: Some(net_thread),
    })
}

fn sleep_until(at: Instant) {
    let now = Instant::now();
    if at > now {
        thread::sleep(at - now);
    }
}

fn world_loop(
    mut session: LiveSession,
    rate_div: u32,
    inputs: std_mpsc::Receiver<Queued>,
    state: watch::Sender<Arc<str>>,
    events: broadcast::Sender<Arc<str>>,
    stop: Arc<AtomicBool>,
    ticks: Arc<AtomicU64>,
) -> LiveSession {
    let period = Duration::from_secs_f64(session.period());
    let publish_frames = |frames: &[swarmlink_core::tactile::ScheduledFrame]| {
        for f in frames {
            let text = protocol::encode(&ServerMessage::Tactile(TactileMessage::from(f)));
            // No receivers is fine.
            let _ = events.send(text.into());
        }
    };

    let mut deadline = Instant::now() + period;
    // Wall instant matching the session clock value.
    let mut anchor = (Instant::now(), session.clock_ms());
    let mut slot: u64 = 0;
    while !stop.load(Ordering::Acquire) {
        if !session.is_paused() {
            while let Some(ms) = session.next_tactile_ms() {
                let at = anchor.0 + Duration::from_secs_f64(((ms - anchor.1) / 1000.0).max(0.0));
                if at >= deadline {
                    break;
                }
                sleep_until(at);
                let frames = session.advance_tactile(ms);
                publish_frames(&frames);
            }
        }
        sleep_until(deadline);

        let mut batch = Vec::new();
        let mut replies = Vec::new();
        while let Ok(q) = inputs.try_recv() {
            if matches!(q.input, SessionInput::Command(_)) {
                replies.push(q.reply);
            }
            batch.push(q.input);
        }
        for (result, reply) in session.drain(batch).into_iter().zip(replies) {
            if let Err(e) = result {
                let _ = reply.send(protocol::encode(&ServerMessage::Error { reason: e.to_string() }));
            }
        }

        match session.step() {
            Ok(Step::Advanced { frames }) => publish_frames(&frames),
            Ok(Step::Heartbeat) => {}
            Err(e) => log::warn!("tick {} failed: {e}", session.tick() + 1),
        }
        ticks.store(session.tick(), Ordering::Release);
        anchor = (deadline, session.clock_ms());
        slot += 1;
        if slot.is_multiple_of(u64::from(rate_div)) {
            state.send_replace(protocol::encode_state(&session.state_message()).into());
        }

        deadline += period;
        let now = Instant::now();
        if now > deadline + MAX_LAG {
            log::warn!("world loop {:?} behind; skipping ahead", now - deadline);
            deadline = now + period;
        }
    }
    session
}

async fn accept_loop(listener: TcpListener, hub: Arc<Hub>, mut stop: oneshot::Receiver<()>) {
    loop {
        tokio::select! {
            _ = &mut stop => break,
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    let hub = hub.clone();
                    tokio::spawn(async move {
                        if let Err(e) = serve_client(stream, hub).await {
                            log::debug!("client {peer}: {e}");
                        }
                    });
                }
                Err(e) => log::warn!("accept: {e}"),
            },
        }
    }
}

async fn serve_client(stream: TcpStream, hub: Arc<Hub>) -> Result<(), tokio_tungstenite::tungstenite::Error> {
    let ws = tokio_tungstenite::accept_async(stream).await?;
    let (mut sink, mut source) = ws.split();
    let id = hub.next_client.fetch_add(1, Ordering::Relaxed);
    let role = {
        let mut owner = hub.hand_owner.lock().unwrap();
        if owner.is_none() {
            *owner = Some(id);
            Role::Hand
        } else {
            Role::Observer
        }
    };
    let mut state = hub.state.clone();
    let mut events = hub.events.subscribe();
    let (reply_tx, mut reply_rx) = mpsc::unbounded_channel::<String>();
    let send = |text: &str| Message::Text(text.to_owned());

    let result = async {
        sink.send(send(&protocol::encode(&ServerMessage::Welcome { client: id, role })))
            .await?;
        let current = state.borrow_and_update().clone();
        sink.send(send(&current)).await?;
        loop {
            tokio::select! {
                incoming = source.next() => match incoming {
                    Some(Ok(Message::Text(text))) => {
                        if let Some(reply) = handle_input(&hub, id, &text, &reply_tx) {
                            sink.send(send(&reply)).await?;
                        }
                    }
                    Some(Ok(Message::Binary(_))) => {
                        let reply = ServerMessage::Error { reason: "binary frames are not accepted".into() };
                        sink.send(send(&protocol::encode(&reply))).await?;
                    }
                    Some(Ok(Message::Close(_))) | None => break,
                    Some(Ok(_)) => {}
                    Some(Err(e)) => return Err(e),
                },
                changed = state.changed() => {
                    if changed.is_err() {
                        break;
                    }
                    let latest = state.borrow_and_update().clone();
                    sink.send(send(&latest)).await?;
                }
                event = events.recv() => match event {
                    Ok(text) => sink.send(send(&text)).await?,
                    Err(broadcast::error::RecvError::Lagged(n)) => log::debug!("client {id} skipped {n} tactile frames"),
                    Err(broadcast::error::RecvError::Closed) => break,
                },
                Some(reply) = reply_rx.recv() => sink.send(send(&reply)).await?,
            }
        }
        Ok(())
    }
    .await;

    let mut owner = hub.hand_owner.lock().unwrap();
    if *owner == Some(id) {
        *owner = None;
    }
    result
}

/// Handles one text frame. Returns an immediate reply, if any.
fn handle_input(hub: &Hub, id: u64, text: &str, reply: &mpsc::UnboundedSender<String>) -> Option<String> {
    let error = |reason: String| Some(protocol::encode(&ServerMessage::Error { reason }));
    let input = match protocol::decode_input(text) {
        Ok(input) => input,
        Err(e) => return error(e.to_string()),
    };
    let mut owner = hub.hand_owner.lock().unwrap();
    let queued = match input {
        InputMessage::ClaimHand => {
            return match *owner {
                Some(other) if other != id => error("hand role is held by another client".into()),
                _ => {
                    *owner = Some(id);
                    Some(protocol::encode(&ServerMessage::Role { role: Role::Hand }))
                }
            };
        }
        InputMessage::ReleaseHand => {
            if *owner == Some(id) {
                *owner = None;
            }
            return Some(protocol::encode(&ServerMessage::Role { role: Role::Observer }));
        }
        _ if *owner != Some(id) => return error("hand role not held".into()),
        InputMessage::Hand { position, .. } => SessionInput::Hand(position),
        InputMessage::Command(c) => SessionInput::Command(c),
    };
    drop(owner);
    let sent = hub.inputs.lock().unwrap().send(Queued {
        input: queued,
        reply: reply.clone(),
    });
    match sent {
        Ok(()) => None,
        Err(_) => error("world loop stopped".into()),
    }
}
