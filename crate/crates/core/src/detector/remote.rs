use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::Duration;

use super::protocol::{parse_response, Request};
use super::{check_input, Detection, Detector, DetectorError};
use crate::composer::CompositeFrame;
use crate::raster::PixelBuffer;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

/// Client for the line protocol in [`super::protocol`]. One connection per
/// run; a request that times out is sent once more on a fresh connection.
#[derive(Debug)]
pub struct RemoteDetector {
    addr: String,
    input_side: u32,
    timeout: Duration,
    conn: Option<BufReader<TcpStream>>,
    next_id: u64,
    retries: u64,
}

impl RemoteDetector {
    /// `addr` is `host:port`; a leading `tcp://` is accepted.
    pub fn connect(addr: &str, input_side: u32, timeout: Duration) -> Result<Self, DetectorError> {
        let addr = addr.strip_prefix("tcp://").unwrap_or(addr).to_string();
        let mut d = Self {
            addr,
            input_side,
            timeout,
            conn: None,
            next_id: 0,
            retries: 0,
        };
        d.reconnect()?;
        Ok(d)
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    pub fn retries(&self) -> u64 {
        self.retries
    }

    fn reconnect(&mut self) -> Result<(), DetectorError> {
        self.conn = None;
        let stream = TcpStream::connect(&self.addr).map_err(|source| DetectorError::Connect {
            addr: self.addr.clone(),
            source,
        })?;
        stream.set_read_timeout(Some(self.timeout))?;
        stream.set_write_timeout(Some(self.timeout))?;
        stream.set_nodelay(true)?;
        self.conn = Some(BufReader::new(stream));
        Ok(())
    }

    fn round_trip(&mut self, id: u64, line: &str) -> Result<Vec<Detection>, DetectorError> {
        if self.conn.is_none() {
            self.reconnect()?;
        }
        let conn = self.conn.as_mut().expect("connected");
        let timed_out = |e: &io::Error| matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut);
        if let Err(e) = conn.get_mut().write_all(line.as_bytes()) {
            self.conn = None;
            return Err(if timed_out(&e) { DetectorError::Timeout { id } } else { e.into() });
        }
        let mut buf = Vec::new();
        match conn.read_until(b'\n', &mut buf) {
            Ok(_) if buf.last() == Some(&b'\n') => {}
            Ok(_) => {
                self.conn = None;
                return Err(DetectorError::Truncated { received: buf.len() });
            }
            Err(e) => {
                self.conn = None;
                return Err(if timed_out(&e) { DetectorError::Timeout { id } } else { e.into() });
            }
        }
        let text = String::from_utf8(buf).map_err(|e| DetectorError::Malformed(e.to_string()))?;
        parse_response(&text, id)
    }
}

impl Detector for RemoteDetector {
    fn input_side(&self) -> u32 {
        self.input_side
    }

    fn detect(
        &mut self,
        input: &PixelBuffer,
        _composite: Option<&CompositeFrame>,
    ) -> Result<Vec<Detection>, DetectorError> {
        check_input(input, self.input_side)?;
        let id = self.next_id;
        self.next_id += 1;
        let line = Request::new(id, input).to_line();
        match self.round_trip(id, &line) {
            Err(DetectorError::Timeout { .. }) => {
                self.retries += 1;
                self.reconnect()?;
                self.round_trip(id, &line)
            }
            other => other,
        }
    }
}
