//! Test-double detector server for protocol conformance checks.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use super::protocol::{Request, Response, WireDetection};

#[derive(Debug, Clone, PartialEq)]
pub enum ServerMode {
    /// Zero detections for every request.
    Echo,
    /// The same detections for every request.
    Fixed(Vec<WireDetection>),
    /// A verbatim line (newline appended) for every request; `{id}` is
    /// replaced with the request id.
    Raw(String),
    /// Write the given bytes without a newline, then close the connection.
    Truncate(String),
    /// Read requests and never answer.
    Stall,
}

impl ServerMode {
    fn answer(&self, id: u64) -> Option<String> {
        match self {
            Self::Echo => Some(Response::ok(id, Vec::new()).to_line()),
            Self::Fixed(d) => Some(Response::ok(id, d.clone()).to_line()),
            Self::Raw(s) => Some(format!("{}\n", s.replace("{id}", &id.to_string()))),
            Self::Truncate(s) => Some(s.clone()),
            Self::Stall => None,
        }
    }
}

/// Listening server; stops accepting when dropped.
pub struct TestServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    served: Arc<AtomicU64>,
    handle: Option<JoinHandle<()>>,
}

impl TestServer {
    /// Bind to `addr` (use port 0 for an ephemeral port) and serve in the
    /// background.
    pub fn spawn(addr: &str, mode: ServerMode) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let served = Arc::new(AtomicU64::new(0));
        let handle = {
            let stop = Arc::clone(&stop);
            let served = Arc::clone(&served);
            thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(conn) = conn else { continue };
                    let mode = mode.clone();
                    let served = Arc::clone(&served);
                    thread::spawn(move || {
                        let _ = serve_connection(conn, &mode, &served);
                    });
                }
            })
        };
        Ok(Self {
            addr,
            stop,
            served,
            handle: Some(handle),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Requests read so far, across connections.
    pub fn requests_served(&self) -> u64 {
        self.served.load(Ordering::SeqCst)
    }

    /// Block the caller serving forever.
    pub fn wait(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve_connection(conn: TcpStream, mode: &ServerMode, served: &AtomicU64) -> io::Result<()> {
    let mut writer = conn.try_clone()?;
    let reader = BufReader::new(conn);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        served.fetch_add(1, Ordering::SeqCst);
        let id = match serde_json::from_str::<Request>(&line) {
            Ok(req) => {
                if let Err(e) = req.decode_pixels() {
                    let resp = Response {
                        id: req.id,
                        detections: None,
                        error: Some(e),
                    };
                    writer.write_all(resp.to_line().as_bytes())?;
                    continue;
                }
                req.id
            }
            Err(e) => {
                let resp = Response {
                    id: 0,
                    detections: None,
                    error: Some(e.to_string()),
                };
                writer.write_all(resp.to_line().as_bytes())?;
                continue;
            }
        };
        match mode.answer(id) {
            Some(text) => {
                writer.write_all(text.as_bytes())?;
                writer.flush()?;
                if matches!(mode, ServerMode::Truncate(_)) {
                    return Ok(());
                }
            }
            None => continue,
        }
    }
    Ok(())
}
