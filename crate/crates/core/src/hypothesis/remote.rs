use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use super::wire::{self, Response};
use super::ProbabilityBackend;
use crate::error::{Error, Result};

const MAX_ATTEMPTS: u32 = 4;
const IO_TIMEOUT: Duration = Duration::from_secs(30);
// requests in flight per pipelined write, keeps both socket buffers small
const PIPELINE_DEPTH: usize = 64;

struct Connection {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    // answers that arrived while waiting for a different id
    stash: HashMap<String, Response>,
}

impl Connection {
    fn open(addr: &str) -> std::io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(IO_TIMEOUT))?;
        stream.set_write_timeout(Some(IO_TIMEOUT))?;
        Ok(Connection {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
            stash: HashMap::new(),
        })
    }

    fn send(&mut self, line: &str) -> std::io::Result<()> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")
    }

    fn recv(&mut self) -> std::io::Result<String> {
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "server closed the connection",
            ));
        }
        Ok(line.trim_end().to_string())
    }

    fn wait_for(&mut self, id: &str) -> std::result::Result<Response, Failure> {
        if let Some(r) = self.stash.remove(id) {
            return Ok(r);
        }
        loop {
            let line = self.recv().map_err(Failure::Io)?;
            let response = wire::parse_response(&line).map_err(Failure::Fatal)?;
            match &response {
                Response::Probs { id: got, .. } | Response::Error { id: got, .. } if got != id => {
                    self.stash.insert(got.clone(), response);
                }
                Response::Pong { .. } => {
                    return Err(Failure::Fatal(Error::Protocol("unexpected ping answer".into())))
                }
                _ => return Ok(response),
            }
        }
    }
}

enum Failure {
    // connection-level, worth reconnecting
    Io(std::io::Error),
    Fatal(Error),
}

/// Client for a prediction server. One connection is shared by all callers;
/// requests are idempotent, so a dropped connection is re-opened and the
/// request retried.
pub struct RemoteBackend {
    addr: String,
    num_classes: usize,
    conn: Mutex<Option<Connection>>,
    next_id: Mutex<u64>,
}

impl RemoteBackend {
    pub fn connect(addr: &str) -> Result<Self> {
        let mut last = None;
        for attempt in 1..=MAX_ATTEMPTS {
            match Self::handshake(addr) {
                Ok((conn, classes)) => {
                    return Ok(RemoteBackend {
                        addr: addr.to_string(),
                        num_classes: classes,
                        conn: Mutex::new(Some(conn)),
                        next_id: Mutex::new(0),
                    })
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Io(e)) => {
                    last = Some(e);
                    if attempt < MAX_ATTEMPTS {
                        thread::sleep(backoff(attempt));
                    }
                }
            }
        }
        Err(Error::Transport {
            message: format!("cannot reach {addr}: {}", last.expect("at least one attempt")),
            attempts: MAX_ATTEMPTS,
            retryable: true,
        })
    }

    fn handshake(addr: &str) -> std::result::Result<(Connection, usize), Failure> {
        let mut conn = Connection::open(addr).map_err(Failure::Io)?;
        conn.send(wire::PING).map_err(Failure::Io)?;
        let line = conn.recv().map_err(Failure::Io)?;
        match wire::parse_response(&line).map_err(Failure::Fatal)? {
            Response::Pong { classes } => Ok((conn, classes)),
            other => Err(Failure::Fatal(Error::Protocol(format!(
                "expected ping answer, got {other:?}"
            )))),
        }
    }

    fn fresh_ids(&self, n: usize) -> Vec<String> {
        let mut next = self.next_id.lock().expect("id lock");
        let ids = (0..n as u64).map(|k| (*next + k).to_string()).collect();
        *next += n as u64;
        ids
    }

    /// Sends every request and collects the answers in request order.
    fn exchange(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let mut guard = self.conn.lock().expect("connection lock");
        let mut last = None;
        for attempt in 1..=MAX_ATTEMPTS {
            if guard.is_none() {
                match Self::handshake(&self.addr) {
                    Ok((conn, classes)) if classes == self.num_classes => *guard = Some(conn),
                    Ok((_, classes)) => {
                        return Err(Error::Protocol(format!(
                            "server now reports {classes} classes, expected {}",
                            self.num_classes
                        )))
                    }
                    Err(Failure::Fatal(e)) => return Err(e),
                    Err(Failure::Io(e)) => {
                        last = Some(e);
                        thread::sleep(backoff(attempt));
                        continue;
                    }
                }
            }
            let conn = guard.as_mut().expect("connected");
            match self.exchange_on(conn, xs) {
                Ok(out) => return Ok(out),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Io(e)) => {
                    *guard = None;
                    last = Some(e);
                    if attempt < MAX_ATTEMPTS {
                        thread::sleep(backoff(attempt));
                    }
                }
            }
        }
        Err(Error::Transport {
            message: format!("requests to {} failed: {}", self.addr, last.expect("attempted")),
            attempts: MAX_ATTEMPTS,
            retryable: true,
        })
    }

    fn exchange_on(
        &self,
        conn: &mut Connection,
        xs: &[Vec<f64>],
    ) -> std::result::Result<Vec<Vec<f64>>, Failure> {
        conn.stash.clear();
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(PIPELINE_DEPTH) {
            let ids = self.fresh_ids(chunk.len());
            let mut payload = String::new();
            for (id, x) in ids.iter().zip(chunk) {
                payload.push_str(&wire::format_request(id, x));
                payload.push('\n');
            }
            conn.writer.write_all(payload.as_bytes()).map_err(Failure::Io)?;
            for id in &ids {
                match conn.wait_for(id)? {
                    Response::Probs { probs, .. } => out.push(probs),
                    Response::Error { message, .. } => {
                        return Err(Failure::Fatal(wire::error_from_message(&message)))
                    }
                    Response::Pong { .. } => unreachable!("filtered in wait_for"),
                }
            }
        }
        Ok(out)
    }
}

fn backoff(attempt: u32) -> Duration {
    Duration::from_millis(50 * (1 << attempt.min(6)))
}

impl ProbabilityBackend for RemoteBackend {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn predict_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.exchange(std::slice::from_ref(&x.to_vec()))?;
        Ok(out.pop().expect("one answer"))
    }

    fn predict_raw_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.exchange(xs)
    }
}
