//! Multi-client server: control command handling, data fan-out over TCP
//! and UDP, state broadcasting, and synthetic signal generation.
//!
//! Every control connection is an independent session. Data and state
//! ports are allocated per session and handed out in the command replies;
//! a session's TCP data listener accepts exactly one connection. Packet
//! generation runs on a single timeline shared by all sessions; each data
//! connection stamps its own connection packet numbers (1, 2, 3, ...) at
//! send time.
//!
//! Shutdown first delivers `ServerStateShutdown` on every state
//! connection, then stops transmission, then closes the data and control
//! sockets.

mod config;
mod generator;
mod session;

pub use config::{
    AperiodicChange, ConfigError, Generator, ServerConfig, SourceSpec, TimelineMode,
    TimestampMode, UdpMode, DEFAULT_CONTROL_PORT, DEFAULT_DATA_QUEUE_CAPACITY,
};
pub use generator::{ideal_timestamp, sine_sample, PacketGenerator};
pub use session::{handle_command, SessionPorts, SessionState};

use std::collections::HashMap;
use std::io;
use std::net::{IpAddr, SocketAddr};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use thiserror::Error;
use tokio::io::AsyncWriteExt;
use tokio::net::{TcpListener, TcpStream, UdpSocket};
use tokio::sync::mpsc::error::TrySendError;
use tokio::sync::{mpsc, oneshot, watch, Notify};
use tokio::task::JoinHandle;

use crate::control::{self, ControlMessage, MessageReader, StreamError, Transport};
use crate::datapacket;
use crate::metainfo::MetaInfoError;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    MetaInfo(#[from] MetaInfoError),
    #[error("could not bind server socket: {0}")]
    Bind(#[from] io::Error),
}

type PacketBytes = Arc<Vec<u8>>;

struct Shared {
    config: ServerConfig,
    metainfo_xml: Vec<u8>,
    shutdown: watch::Sender<bool>,
    shutting_down: AtomicBool,
    /// Senders of sessions that are currently transmitting.
    active: Mutex<HashMap<u64, mpsc::Sender<PacketBytes>>>,
    /// Wakes the lockstep generator when a session starts transmitting.
    activity: Notify,
    state_writers: Mutex<HashMap<u64, mpsc::Sender<oneshot::Sender<()>>>>,
    next_session_id: AtomicU64,
    next_state_writer_id: AtomicU64,
    dropped_packets: AtomicU64,
}

/// Handle to a running server. [`shutdown`](Self::shutdown) performs the
/// orderly teardown; dropping the handle closes everything without the
/// state notification.
pub struct TiaServer {
    shared: Arc<Shared>,
    control_addr: SocketAddr,
    tasks: Mutex<Vec<JoinHandle<()>>>,
}

impl TiaServer {
    /// Validates the config, binds the control listener, and spawns the
    /// accept and generator tasks.
    pub async fn start(config: ServerConfig) -> Result<TiaServer, ServerError> {
        config.validate()?;
        let metainfo_xml = config.metainfo.to_xml()?;
        let generator = PacketGenerator::new(&config)?;
        let listener = TcpListener::bind((config.bind_addr, config.control_port)).await?;
        let control_addr = listener.local_addr()?;

        let (shutdown, _) = watch::channel(false);
        let shared = Arc::new(Shared {
            config,
            metainfo_xml,
            shutdown,
            shutting_down: AtomicBool::new(false),
            active: Mutex::new(HashMap::new()),
            activity: Notify::new(),
            state_writers: Mutex::new(HashMap::new()),
            next_session_id: AtomicU64::new(1),
            next_state_writer_id: AtomicU64::new(1),
            dropped_packets: AtomicU64::new(0),
        });
        let tasks = vec![
            tokio::spawn(run_control_loop(listener, shared.clone())),
            tokio::spawn(run_generator(generator, shared.clone())),
        ];
        log::info!("tia server listening on {control_addr}");
        Ok(TiaServer { shared, control_addr, tasks: Mutex::new(tasks) })
    }

    /// Address of the control listener.
    pub fn control_addr(&self) -> SocketAddr {
        self.control_addr
    }

    /// Packets dropped because a session queue was full (realtime mode).
    pub fn dropped_packets(&self) -> u64 {
        self.shared.dropped_packets.load(Ordering::Relaxed)
    }

    /// Orderly shutdown: `ServerStateShutdown` to every state connection
    /// (waiting until each is flushed), stop transmission, close sockets.
    /// A second call is a no-op.
    pub async fn shutdown(&self) {
        if self.shared.shutting_down.swap(true, Ordering::SeqCst) {
            return;
        }
        log::info!("server shutting down");

        let writers: Vec<_> = self.shared.state_writers.lock().unwrap().values().cloned().collect();
        let mut acks = Vec::new();
        for writer in writers {
            let (ack_tx, ack_rx) = oneshot::channel();
            if writer.try_send(ack_tx).is_ok() {
                acks.push(ack_rx);
            }
        }
        for ack in acks {
            let _ = tokio::time::timeout(Duration::from_secs(2), ack).await;
        }

        self.shared.active.lock().unwrap().clear();
        let _ = self.shared.shutdown.send(true);

        let tasks: Vec<_> = self.tasks.lock().unwrap().drain(..).collect();
        for task in tasks {
            let _ = task.await;
        }
    }
}

impl Drop for TiaServer {
    fn drop(&mut self) {
        let _ = self.shared.shutdown.send(true);
    }
}

async fn run_control_loop(listener: TcpListener, shared: Arc<Shared>) {
    let mut shutdown = shared.shutdown.subscribe();
    if *shutdown.borrow() {
        return;
    }
    loop {
        tokio::select! {
            result = listener.accept() => match result {
                Ok((stream, peer)) => {
                    let id = shared.next_session_id.fetch_add(1, Ordering::Relaxed);
                    log::info!("session {id}: control connection from {peer}");
                    tokio::spawn(run_session(id, stream, shared.clone()));
                }
                Err(e) => {
                    log::warn!("control accept failed: {e}");
                    tokio::time::sleep(Duration::from_millis(50)).await;
                }
            },
            _ = shutdown.changed() => return,
        }
    }
}

async fn run_session(id: u64, stream: TcpStream, shared: Arc<Shared>) {
    let _ = stream.set_nodelay(true);
    let (mut read_half, mut write_half) = stream.into_split();
    let mut parser = MessageReader::new();
    let mut session = SessionState::new(id);
    let mut data_queue: Option<mpsc::Sender<PacketBytes>> = None;
    let mut shutdown = shared.shutdown.subscribe();

    if !*shutdown.borrow() {
        loop {
            let result = tokio::select! {
                result = control::read_message(&mut read_half, &mut parser) => result,
                _ = shutdown.changed() => break,
            };
            match result {
                Ok(Some(msg)) => {
                    log::info!("session {id}: {msg}");
                    let was_transmitting = session.transmitting;
                    let mut ports = RealPorts::new(&shared);
                    let reply =
                        session::handle_command(&mut session, &msg, &shared.metainfo_xml, &mut ports);
                    if let Some((queue, task)) = ports.new_data {
                        data_queue = Some(queue);
                        tokio::spawn(run_data_connection(id, task, shared.clone()));
                    }
                    if let Some(listener) = ports.new_state {
                        tokio::spawn(run_state_listener(id, listener, shared.clone()));
                    }
                    if write_half.write_all(&reply.to_bytes()).await.is_err() {
                        break;
                    }
                    log::debug!("session {id}: replied {reply}");
                    if session.transmitting != was_transmitting {
                        if session.transmitting {
                            if let Some(queue) = &data_queue {
                                shared.active.lock().unwrap().insert(id, queue.clone());
                                shared.activity.notify_one();
                                log::info!("session {id}: data transmission started");
                            }
                        } else {
                            shared.active.lock().unwrap().remove(&id);
                            log::info!("session {id}: data transmission stopped");
                        }
                    }
                }
                Ok(None) => {
                    log::info!("session {id}: control connection closed by client");
                    break;
                }
                Err(StreamError::Protocol(e)) => {
                    log::warn!("session {id}: protocol error: {e}");
                    let reply = ControlMessage::error_with_description(e.to_string());
                    let _ = write_half.write_all(&reply.to_bytes()).await;
                    break;
                }
                Err(StreamError::Io(e)) => {
                    log::warn!("session {id}: control read failed: {e}");
                    break;
                }
            }
        }
    }
    shared.active.lock().unwrap().remove(&id);
}

enum DataSink {
    Tcp { listener: TcpListener },
    UdpHello { socket: UdpSocket },
    UdpBroadcast { socket: UdpSocket, target: SocketAddr },
}

struct DataConnectionTask {
    sink: DataSink,
    queue: mpsc::Receiver<PacketBytes>,
}

async fn run_data_connection(session_id: u64, task: DataConnectionTask, shared: Arc<Shared>) {
    let mut shutdown = shared.shutdown.subscribe();
    if *shutdown.borrow() {
        return;
    }
    enum Writer {
        Tcp(TcpStream),
        Udp { socket: UdpSocket, target: SocketAddr },
    }

    let mut writer = match task.sink {
        DataSink::Tcp { listener } => {
            let stream = tokio::select! {
                result = listener.accept() => match result {
                    Ok((stream, peer)) => {
                        log::info!("session {session_id}: tcp data connection from {peer}");
                        let _ = stream.set_nodelay(true);
                        stream
                    }
                    Err(e) => {
                        log::warn!("session {session_id}: data accept failed: {e}");
                        return;
                    }
                },
                _ = shutdown.changed() => return,
            };
            Writer::Tcp(stream)
        }
        DataSink::UdpHello { socket } => {
            let mut hello = [0u8; 64];
            let target = tokio::select! {
                result = socket.recv_from(&mut hello) => match result {
                    Ok((_, peer)) => {
                        log::info!("session {session_id}: udp data peer {peer}");
                        peer
                    }
                    Err(e) => {
                        log::warn!("session {session_id}: udp hello failed: {e}");
                        return;
                    }
                },
                _ = shutdown.changed() => return,
            };
            Writer::Udp { socket, target }
        }
        DataSink::UdpBroadcast { socket, target } => Writer::Udp { socket, target },
    };

    let mut queue = task.queue;
    let mut connection_number: u64 = 0;
    loop {
        let packet = tokio::select! {
            maybe = queue.recv() => match maybe {
                Some(packet) => packet,
                None => break,
            },
            _ = shutdown.changed() => break,
        };
        connection_number += 1;
        let mut bytes = (*packet).clone();
        datapacket::set_connection_packet_number(&mut bytes, connection_number);
        let result = match &mut writer {
            Writer::Tcp(stream) => stream.write_all(&bytes).await,
            Writer::Udp { socket, target } => socket.send_to(&bytes, *target).await.map(|_| ()),
        };
        if let Err(e) = result {
            log::warn!("session {session_id}: data send failed: {e}");
            break;
        }
    }
}

async fn run_state_listener(session_id: u64, listener: TcpListener, shared: Arc<Shared>) {
    let mut shutdown = shared.shutdown.subscribe();
    if *shutdown.borrow() {
        return;
    }
    loop {
        tokio::select! {
            result = listener.accept() => match result {
                Ok((stream, peer)) => {
                    log::info!("session {session_id}: state connection from {peer}");
                    tokio::spawn(run_state_writer(stream, shared.clone()));
                }
                Err(e) => {
                    log::warn!("session {session_id}: state accept failed: {e}");
                    return;
                }
            },
            _ = shutdown.changed() => return,
        }
    }
}

async fn run_state_writer(mut stream: TcpStream, shared: Arc<Shared>) {
    let writer_id = shared.next_state_writer_id.fetch_add(1, Ordering::Relaxed);
    let (tx, mut rx) = mpsc::channel::<oneshot::Sender<()>>(4);
    shared.state_writers.lock().unwrap().insert(writer_id, tx);
    let mut shutdown = shared.shutdown.subscribe();

    // ServerStateRunning goes out immediately on accept, then optionally on
    // every heartbeat interval.
    let running = ControlMessage::ServerStateRunning.to_bytes();
    let alive = !*shutdown.borrow() && stream.write_all(&running).await.is_ok();
    let mut heartbeat = shared.config.state_heartbeat().map(|period| {
        tokio::time::interval_at(tokio::time::Instant::now() + period, period)
    });

    if alive {
        loop {
            tokio::select! {
                maybe = rx.recv() => match maybe {
                    Some(ack) => {
                        let bytes = ControlMessage::ServerStateShutdown.to_bytes();
                        if stream.write_all(&bytes).await.is_ok() {
                            let _ = stream.flush().await;
                        }
                        let _ = ack.send(());
                        break;
                    }
                    None => break,
                },
                _ = tick(&mut heartbeat) => {
                    if stream.write_all(&running).await.is_err() {
                        break;
                    }
                }
                _ = shutdown.changed() => break,
            }
        }
    }
    shared.state_writers.lock().unwrap().remove(&writer_id);
}

async fn tick(interval: &mut Option<tokio::time::Interval>) {
    match interval {
        Some(interval) => {
            interval.tick().await;
        }
        None => std::future::pending().await,
    }
}

async fn run_generator(mut generator: PacketGenerator, shared: Arc<Shared>) {
    let mut shutdown = shared.shutdown.subscribe();
    let lockstep = shared.config.timeline == TimelineMode::Lockstep;
    let mut interval = (!lockstep).then(|| {
        let period = shared.config.packet_interval().expect("config has a master signal");
        let mut interval = tokio::time::interval(period);
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        interval
    });

    loop {
        if *shutdown.borrow() {
            return;
        }
        if lockstep {
            // The timeline only advances while someone is transmitting.
            while shared.active.lock().unwrap().is_empty() {
                tokio::select! {
                    _ = shared.activity.notified() => {}
                    _ = shutdown.changed() => return,
                }
            }
        } else {
            tokio::select! {
                _ = tick(&mut interval) => {}
                _ = shutdown.changed() => return,
            }
        }

        let packet = generator.next_packet();
        let bytes: PacketBytes = Arc::new(packet.encode().expect("generated packets are valid"));
        let targets: Vec<(u64, mpsc::Sender<PacketBytes>)> = shared
            .active
            .lock()
            .unwrap()
            .iter()
            .map(|(id, tx)| (*id, tx.clone()))
            .collect();
        for (id, tx) in targets {
            if lockstep {
                tokio::select! {
                    result = tx.send(bytes.clone()) => {
                        if result.is_err() {
                            shared.active.lock().unwrap().remove(&id);
                        }
                    }
                    _ = shutdown.changed() => return,
                }
            } else {
                match tx.try_send(bytes.clone()) {
                    Ok(()) => {}
                    Err(TrySendError::Full(_)) => {
                        shared.dropped_packets.fetch_add(1, Ordering::Relaxed);
                        log::debug!("session {id}: data queue full, packet dropped");
                    }
                    Err(TrySendError::Closed(_)) => {
                        shared.active.lock().unwrap().remove(&id);
                    }
                }
            }
        }
    }
}

/// Binds real sockets for [`handle_command`]. Listeners are bound
/// synchronously (bind does not block) and handed back for the session
/// task to spawn.
struct RealPorts<'a> {
    shared: &'a Arc<Shared>,
    new_data: Option<(mpsc::Sender<PacketBytes>, DataConnectionTask)>,
    new_state: Option<TcpListener>,
}

impl<'a> RealPorts<'a> {
    fn new(shared: &'a Arc<Shared>) -> RealPorts<'a> {
        RealPorts { shared, new_data: None, new_state: None }
    }
}

fn bind_tcp(addr: IpAddr) -> io::Result<TcpListener> {
    let listener = std::net::TcpListener::bind((addr, 0))?;
    listener.set_nonblocking(true)?;
    TcpListener::from_std(listener)
}

fn bind_udp(addr: IpAddr) -> io::Result<UdpSocket> {
    let socket = std::net::UdpSocket::bind((addr, 0))?;
    socket.set_nonblocking(true)?;
    UdpSocket::from_std(socket)
}

impl SessionPorts for RealPorts<'_> {
    fn open_data_port(&mut self, transport: Transport) -> io::Result<u16> {
        let bind_addr = self.shared.config.bind_addr;
        let capacity = self.shared.config.data_queue_capacity.max(1);
        let (sink, port) = match transport {
            Transport::Tcp => {
                let listener = bind_tcp(bind_addr)?;
                let port = listener.local_addr()?.port();
                (DataSink::Tcp { listener }, port)
            }
            Transport::Udp => match self.shared.config.udp_mode {
                UdpMode::UnicastAfterHello => {
                    let socket = bind_udp(bind_addr)?;
                    let port = socket.local_addr()?.port();
                    (DataSink::UdpHello { socket }, port)
                }
                UdpMode::Broadcast { address, port } => {
                    let socket = bind_udp(bind_addr)?;
                    socket.set_broadcast(true)?;
                    (DataSink::UdpBroadcast { socket, target: SocketAddr::new(address, port) }, port)
                }
            },
        };
        let (tx, queue) = mpsc::channel(capacity);
        self.new_data = Some((tx, DataConnectionTask { sink, queue }));
        Ok(port)
    }

    fn open_state_port(&mut self) -> io::Result<u16> {
        let listener = bind_tcp(self.shared.config.bind_addr)?;
        let port = listener.local_addr()?.port();
        self.new_state = Some(listener);
        Ok(port)
    }
}
