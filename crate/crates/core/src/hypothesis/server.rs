use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use super::wire::{self, Request, INVALID_ARGUMENT_PREFIX, PROTOCOL_PREFIX};
use super::{validate_probs, InProcessBackend, ProbabilityBackend};
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, TargetNetwork};

/// Serves predictions of one network over the line protocol in [`wire`].
/// Each connection gets its own thread; requests are stateless.
pub struct PredictionServer {
    listener: TcpListener,
    backend: Arc<InProcessBackend>,
    shutdown: Arc<AtomicBool>,
    connections: Arc<Mutex<Vec<TcpStream>>>,
}

pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    connections: Arc<Mutex<Vec<TcpStream>>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections, closes open ones, and waits for the
    /// accept loop to exit.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
        let mut open = self.connections.lock().unwrap_or_else(|e| e.into_inner());
        for stream in open.drain(..) {
            let _ = stream.shutdown(Shutdown::Both);
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

impl PredictionServer {
    pub fn bind(addr: &str, net: TargetNetwork) -> Result<Self> {
        let listener = TcpListener::bind(addr).map_err(|e| Error::Transport {
            message: format!("cannot bind {addr}: {e}"),
            attempts: 1,
            retryable: false,
        })?;
        Ok(PredictionServer {
            listener,
            backend: Arc::new(InProcessBackend::new(net)),
            shutdown: Arc::new(AtomicBool::new(false)),
            connections: Arc::new(Mutex::new(Vec::new())),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts connections until shut down.
    pub fn run(self) -> Result<()> {
        for stream in self.listener.incoming() {
            if self.shutdown.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            if let Ok(clone) = stream.try_clone() {
                let mut open = self.connections.lock().unwrap_or_else(|e| e.into_inner());
                open.retain(|s| s.peer_addr().is_ok());
                open.push(clone);
            }
            let backend = Arc::clone(&self.backend);
            thread::spawn(move || {
                let _ = handle_connection(stream, backend.as_ref());
            });
        }
        Ok(())
    }

    pub fn spawn(self) -> Result<ServerHandle> {
        let addr = self.local_addr()?;
        let shutdown = Arc::clone(&self.shutdown);
        let connections = Arc::clone(&self.connections);
        let thread = thread::spawn(move || {
            let _ = self.run();
        });
        Ok(ServerHandle {
            addr,
            shutdown,
            connections,
            thread: Some(thread),
        })
    }
}

fn answer(line: &str, backend: &dyn ProbabilityBackend) -> String {
    match wire::parse_request(line) {
        Ok(Request::Ping) => wire::format_ping_response(backend.num_classes()),
        Ok(Request::Predict { id, features }) => {
            let result = backend
                .predict_raw(&features)
                .and_then(|raw| validate_probs(raw.clone(), backend.num_classes()).map(|_| raw));
            match result {
                // send the raw answer; the client validates it exactly once
                Ok(raw) => wire::format_probs_response(&id, &raw),
                Err(Error::InvalidArgument(msg)) => {
                    wire::format_error_response(&id, &format!("{INVALID_ARGUMENT_PREFIX}{msg}"))
                }
                Err(e) => wire::format_error_response(&id, &format!("{PROTOCOL_PREFIX}{e}")),
            }
        }
        Err(bad) => wire::format_error_response(&bad.id, &bad.message),
    }
}

fn handle_connection(stream: TcpStream, backend: &dyn ProbabilityBackend) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        if !line.trim().is_empty() {
            writer.write_all(answer(line.trim_end(), backend).as_bytes())?;
            writer.write_all(b"\n")?;
        }
        // hold answers while the client still has requests pipelined
        if reader.buffer().is_empty() {
            writer.flush()?;
        }
    }
    writer.flush()
}

/// Loads a checkpoint and serves it on `addr` until the process exits.
pub fn serve(checkpoint: &Path, addr: &str) -> Result<()> {
    let net = load_checkpoint(checkpoint)?;
    let server = PredictionServer::bind(addr, net)?;
    eprintln!("serving {} on {}", checkpoint.display(), server.local_addr()?);
    server.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypothesis::SourceHypothesis;
    use crate::model::init_network;

    fn raw_exchange(addr: SocketAddr, lines: &[&str]) -> Vec<String> {
        let stream = TcpStream::connect(addr).unwrap();
        let mut writer = stream.try_clone().unwrap();
        let mut reader = BufReader::new(stream);
        lines
            .iter()
            .map(|l| {
                writeln!(writer, "{l}").unwrap();
                let mut resp = String::new();
                reader.read_line(&mut resp).unwrap();
                resp.trim_end().to_string()
            })
            .collect()
    }

    #[test]
    fn ping_and_errors_keep_connection_usable() {
        let net = init_network(&[3, 4, 2], 1).unwrap();
        let handle = PredictionServer::bind("127.0.0.1:0", net).unwrap().spawn().unwrap();
        let out = raw_exchange(
            handle.local_addr(),
            &[
                r#"{"cmd":"ping"}"#,
                r#"{"id":"a","features":[1.0,2.0]}"#,
                "garbage",
                r#"{"id":"b","features":[1.0,2.0,3.0]}"#,
            ],
        );
        assert_eq!(out[0], r#"{"ok":true,"classes":2}"#);
        assert!(out[1].starts_with(r#"{"id":"a","error":"invalid-argument: "#), "{}", out[1]);
        assert!(out[2].contains("\"error\""));
        let probs = match wire::parse_response(&out[3]).unwrap() {
            wire::Response::Probs { id, probs } => {
                assert_eq!(id, "b");
                probs
            }
            other => panic!("{other:?}"),
        };
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        handle.shutdown();
    }

    #[test]
    fn remote_matches_in_process() {
        let net = init_network(&[4, 8, 3], 9).unwrap();
        let local = SourceHypothesis::in_process(net.clone()).unwrap();
        let handle = PredictionServer::bind("127.0.0.1:0", net).unwrap().spawn().unwrap();
        let remote = SourceHypothesis::remote(&handle.local_addr().to_string(), 4).unwrap();
        assert_eq!(remote.num_classes(), 3);
        let xs: Vec<Vec<f64>> = (0..150)
            .map(|i| (0..4).map(|j| ((i * 7 + j * 3) % 11) as f64 / 3.0 - 1.7).collect())
            .collect();
        let a = remote.predict_batch(&xs).unwrap();
        for (x, p) in xs.iter().zip(&a) {
            let q = local.predict(x).unwrap();
            assert!(p.values().iter().zip(q.values()).all(|(u, v)| u.to_bits() == v.to_bits()));
            assert_eq!(&remote.predict(x).unwrap(), p);
        }
        assert!(matches!(remote.predict(&[1.0]), Err(Error::InvalidArgument(_))));
        assert!(remote.predict(&xs[0]).is_ok());
        handle.shutdown();
    }

    #[test]
    fn unreachable_server_is_transport_error() {
        // bind then drop to get a port nobody listens on
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
        match SourceHypothesis::remote(&port.to_string(), 2) {
            Err(Error::Transport { attempts, retryable, .. }) => {
                assert!(attempts > 1);
                assert!(retryable);
            }
            other => panic!("expected transport error, got {other:?}"),
        }
    }

    #[test]
    fn bind_failure_is_reported() {
        let taken = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = taken.local_addr().unwrap().to_string();
        assert!(PredictionServer::bind(&addr, init_network(&[2, 2], 0).unwrap()).is_err());
    }

    #[test]
    fn corrupt_checkpoint_fails_startup() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(serve(&path, "127.0.0.1:0").is_err());
    }
}
