use std::io::{BufReader, BufWriter, ErrorKind};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use log::{debug, warn};

use super::wire::{read_frame, write_frame, FrameIoError, Message};
use super::{expects_reply, Hub, ReplayClient, TransportError};

const POLL: Duration = Duration::from_millis(20);

/// Running server. Dropping the handle without calling [`ServerHandle::shutdown`] leaves
/// the accept thread running until process exit.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting, waits for every connection thread to finish.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Binds `endpoint` and serves `hub` on a background thread, one thread per connection.
pub fn serve(hub: Arc<Hub>, endpoint: &str) -> Result<ServerHandle, TransportError> {
    let listener = TcpListener::bind(endpoint).map_err(|e| TransportError::Connect(endpoint.to_string(), e))?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    let thread = std::thread::spawn(move || {
        let mut workers = Vec::new();
        while !flag.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, peer)) => {
                    debug!("connection from {peer}");
                    let (hub, flag) = (Arc::clone(&hub), Arc::clone(&flag));
                    workers.push(std::thread::spawn(move || handle_connection(stream, hub, flag)));
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(POLL),
                Err(e) => warn!("accept failed: {e}"),
            }
        }
        for w in workers {
            let _ = w.join();
        }
    });
    Ok(ServerHandle { addr, stop, thread: Some(thread) })
}

fn handle_connection(stream: TcpStream, hub: Arc<Hub>, stop: Arc<AtomicBool>) {
    let peer = stream.peer_addr().ok();
    if stream.set_nonblocking(false).is_err() || stream.set_nodelay(true).is_err() {
        return;
    }
    let Ok(write_half) = stream.try_clone() else { return };
    let mut reader = BufReader::new(stream);
    let mut writer = BufWriter::new(write_half);
    loop {
        // Wait for the next frame header without blocking shutdown forever.
        let _ = reader.get_ref().set_read_timeout(Some(POLL * 5));
        let ready = !reader.buffer().is_empty() || loop {
            if stop.load(Ordering::SeqCst) {
                break false;
            }
            match reader.get_ref().peek(&mut [0u8; 1]) {
                Ok(0) => break false,
                Ok(_) => break true,
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => continue,
                Err(_) => break false,
            }
        };
        if !ready {
            break;
        }
        let _ = reader.get_ref().set_read_timeout(None);
        let msg = match read_frame(&mut reader) {
            Ok(m) => m,
            Err(FrameIoError::Io(e)) => {
                warn!("connection {peer:?} dropped mid-frame: {e}");
                break;
            }
            Err(FrameIoError::Protocol(e)) => {
                warn!("closing connection {peer:?}: {e}");
                break;
            }
        };
        if let Some(reply) = hub.handle(msg) {
            if let Err(e) = write_frame(&mut writer, &reply) {
                warn!("reply to {peer:?} failed: {e}");
                break;
            }
        }
    }
}

/// Client over one TCP connection.
pub struct TcpClient {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl TcpClient {
    pub fn connect(endpoint: &str) -> Result<Self, TransportError> {
        let err = |e| TransportError::Connect(endpoint.to_string(), e);
        let addrs: Vec<SocketAddr> = endpoint.to_socket_addrs().map_err(err)?.collect();
        let stream = TcpStream::connect(&addrs[..]).map_err(err)?;
        stream.set_nodelay(true)?;
        let writer = BufWriter::new(stream.try_clone()?);
        Ok(Self { reader: BufReader::new(stream), writer })
    }
}

impl ReplayClient for TcpClient {
    fn request(&mut self, msg: Message) -> Result<Option<Message>, TransportError> {
        let reply = expects_reply(&msg);
        write_frame(&mut self.writer, &msg)?;
        if !reply {
            return Ok(None);
        }
        match read_frame(&mut self.reader) {
            Ok(m) => Ok(Some(m)),
            Err(FrameIoError::Io(e)) => Err(e.into()),
            Err(FrameIoError::Protocol(e)) => Err(e.into()),
        }
    }
}
