use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, warn};
use tungstenite::{Message, WebSocket};

use super::protocol::{error_text, parse_client_msg, ClientMsg};

/// Events delivered from the network threads to the trainer side.
#[derive(Debug, Clone, PartialEq)]
pub enum Inbound {
    Connected(u64),
    Disconnected(u64),
    Msg(u64, ClientMsg),
}

/// Outgoing queues, one per connected client.
#[derive(Debug, Clone, Default)]
pub struct Clients {
    inner: Arc<Mutex<Vec<(u64, Sender<String>)>>>,
}

impl Clients {
    pub fn add(&self, id: u64, tx: Sender<String>) {
        self.inner.lock().expect("client registry poisoned").push((id, tx));
    }

    pub fn remove(&self, id: u64) {
        self.inner.lock().expect("client registry poisoned").retain(|(c, _)| *c != id);
    }

    pub fn count(&self) -> usize {
        self.inner.lock().expect("client registry poisoned").len()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.inner.lock().expect("client registry poisoned").iter().map(|(c, _)| *c).collect()
    }

    pub fn send_to(&self, id: u64, text: String) {
        let clients = self.inner.lock().expect("client registry poisoned");
        if let Some((_, tx)) = clients.iter().find(|(c, _)| *c == id) {
            let _ = tx.send(text);
        }
    }

    pub fn broadcast(&self, text: &str) {
        for (_, tx) in self.inner.lock().expect("client registry poisoned").iter() {
            let _ = tx.send(text.to_string());
        }
    }
}

/// WebSocket endpoint. Each client gets a thread that forwards its frames
/// and parses its messages; nothing here touches trainer state.
pub struct LiveServer {
    addr: SocketAddr,
    clients: Clients,
    shutdown: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

const POLL: Duration = Duration::from_millis(5);

impl LiveServer {
    /// Binds `host:port` (port 0 picks a free one) and starts accepting.
    pub fn start(host: &str, port: u16) -> io::Result<(Self, Receiver<Inbound>)> {
        let listener = TcpListener::bind((host, port))?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let (tx, rx) = mpsc::channel();
        let clients = Clients::default();
        let shutdown = Arc::new(AtomicBool::new(false));
        let accept = {
            let clients = clients.clone();
            let shutdown = shutdown.clone();
            thread::Builder::new()
                .name("live-accept".into())
                .spawn(move || accept_loop(listener, tx, clients, shutdown))?
        };
        Ok((
            Self {
                addr,
                clients,
                shutdown,
                accept: Some(accept),
            },
            rx,
        ))
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn clients(&self) -> Clients {
        self.clients.clone()
    }
}

impl Drop for LiveServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

fn accept_loop(listener: TcpListener, inbound: Sender<Inbound>, clients: Clients, shutdown: Arc<AtomicBool>) {
    let next_id = AtomicU64::new(1);
    let mut workers = Vec::new();
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let id = next_id.fetch_add(1, Ordering::SeqCst);
                debug!("client {id} connected from {peer}");
                let (inbound, clients, shutdown) = (inbound.clone(), clients.clone(), shutdown.clone());
                workers.push(thread::spawn(move || {
                    if let Err(e) = client_loop(id, stream, &inbound, &clients, &shutdown) {
                        debug!("client {id}: {e}");
                    }
                    clients.remove(id);
                    let _ = inbound.send(Inbound::Disconnected(id));
                }));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                warn!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
    }
    for w in workers {
        let _ = w.join();
    }
}

fn would_block(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut))
}

fn client_loop(
    id: u64,
    stream: TcpStream,
    inbound: &Sender<Inbound>,
    clients: &Clients,
    shutdown: &AtomicBool,
) -> Result<(), tungstenite::Error> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(f) => f,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
    })?;
    ws.get_mut().set_read_timeout(Some(POLL))?;
    let (tx, rx) = mpsc::channel::<String>();
    clients.add(id, tx);
    let _ = inbound.send(Inbound::Connected(id));
    loop {
        if shutdown.load(Ordering::SeqCst) {
            let _ = ws.close(None);
            let _ = ws.flush();
            return Ok(());
        }
        while let Ok(text) = rx.try_recv() {
            ws.send(Message::text(text))?;
        }
        match ws.read() {
            Ok(Message::Text(text)) => match parse_client_msg(&text) {
                Ok(msg) => {
                    let _ = inbound.send(Inbound::Msg(id, msg));
                }
                Err(e) => ws.send(Message::text(error_text(e.to_string())))?,
            },
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(e) if would_block(&e) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(e),
        }
    }
}
