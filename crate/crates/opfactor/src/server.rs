//! Line-oriented TCP daemon: one JSON request per line in, one JSON response
//! per line out, one worker thread per connection.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;

use crate::protocol::{parse_request, to_line, ErrorResponse};
use crate::service::Gate;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_connections: usize,
    /// Longest accepted line, terminator excluded.
    pub max_request_bytes: usize,
}

/// Counting semaphore bounding live connections.
#[derive(Debug, Default)]
struct Slots {
    used: Mutex<usize>,
    freed: Condvar,
}

impl Slots {
    /// Blocks until a slot is free; false if woken by shutdown.
    fn acquire(&self, max: usize, stop: &AtomicBool) -> bool {
        let mut used = self.used.lock().unwrap_or_else(|p| p.into_inner());
        while *used >= max && !stop.load(Ordering::SeqCst) {
            used = self.freed.wait(used).unwrap_or_else(|p| p.into_inner());
        }
        if stop.load(Ordering::SeqCst) {
            return false;
        }
        *used += 1;
        true
    }

    fn release(&self) {
        let mut used = self.used.lock().unwrap_or_else(|p| p.into_inner());
        *used -= 1;
        self.freed.notify_one();
    }
}

struct SlotGuard(Arc<Slots>);

impl Drop for SlotGuard {
    fn drop(&mut self) {
        self.0.release();
    }
}

enum Line {
    Request(Vec<u8>),
    Oversize,
    Unterminated,
    Eof,
}

fn read_line(reader: &mut impl BufRead, max: usize) -> io::Result<Line> {
    let mut buf = Vec::new();
    // one byte of slack for the terminator
    let limit = max.saturating_add(1) as u64;
    let n = reader.by_ref().take(limit).read_until(b'\n', &mut buf)?;
    if n == 0 {
        return Ok(Line::Eof);
    }
    if buf.last() == Some(&b'\n') {
        buf.pop();
        return Ok(Line::Request(buf));
    }
    if buf.len() as u64 >= limit {
        return Ok(Line::Oversize);
    }
    Ok(Line::Unterminated)
}

fn respond_to(gate: &Gate, line: &[u8]) -> String {
    if line.contains(&b'\r') {
        return to_line(&ErrorResponse::new("carriage return in request"));
    }
    let Ok(text) = std::str::from_utf8(line) else {
        return to_line(&ErrorResponse::new("request is not valid UTF-8"));
    };
    match parse_request(text) {
        Ok(req) => {
            let result = gate.evaluate(&req);
            log::info!(
                "request {} tag {}: {} ({})",
                req.request_id,
                req.rfid_tag,
                result.response.verdict,
                result.response.reason
            );
            to_line(&result.response)
        }
        Err(e) => to_line(&e),
    }
}

/// Serves one connection until the peer closes it or breaks framing.
pub fn handle_connection(gate: &Gate, stream: TcpStream, max_request_bytes: usize) -> io::Result<()> {
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    loop {
        let reply = match read_line(&mut reader, max_request_bytes)? {
            Line::Eof => return Ok(()),
            Line::Request(bytes) => respond_to(gate, &bytes),
            Line::Oversize => {
                let e = ErrorResponse::new(format!("request exceeds {max_request_bytes} bytes"));
                writer.write_all(format!("{}\n", to_line(&e)).as_bytes())?;
                return Ok(());
            }
            Line::Unterminated => {
                let e = ErrorResponse::new("request not terminated by a newline");
                writer.write_all(format!("{}\n", to_line(&e)).as_bytes())?;
                return Ok(());
            }
        };
        writer.write_all(reply.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
}

/// A running daemon.
#[derive(Debug)]
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    slots: Arc<Slots>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections. Open connections run until their peers
    /// hang up.
    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    /// Blocks for the lifetime of the accept loop.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.slots.freed.notify_all();
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.thread.is_some() {
            self.stop_accepting();
        }
    }
}

/// Binds `bind` and serves in a background thread.
pub fn spawn(gate: Gate, bind: &str, limits: Limits) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(bind)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let slots = Arc::new(Slots::default());
    let gate = Arc::new(gate);
    let thread = {
        let stop = stop.clone();
        let slots = slots.clone();
        std::thread::Builder::new()
            .name("opfactor-accept".into())
            .spawn(move || accept_loop(listener, gate, limits, stop, slots))?
    };
    log::info!("listening on {addr}");
    Ok(ServerHandle {
        addr,
        stop,
        slots,
        thread: Some(thread),
    })
}

fn accept_loop(listener: TcpListener, gate: Arc<Gate>, limits: Limits, stop: Arc<AtomicBool>, slots: Arc<Slots>) {
    let max = limits.max_connections.max(1);
    // past the cap, pending connects wait in the listen backlog
    while slots.acquire(max, &stop) {
        let guard = SlotGuard(slots.clone());
        let (stream, peer) = match listener.accept() {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let gate = gate.clone();
        let spawned = std::thread::Builder::new()
            .name(format!("opfactor-conn-{peer}"))
            .spawn(move || {
                let _guard = guard;
                log::debug!("connection from {peer}");
                if let Err(e) = handle_connection(&gate, stream, limits.max_request_bytes) {
                    log::warn!("connection {peer}: {e}");
                }
            });
        if let Err(e) = spawned {
            log::error!("could not start worker for {peer}: {e}");
        }
    }
}
