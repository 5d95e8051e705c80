//! Blocking TCP plumbing shared by the three services: a thread-per-connection
//! accept loop with a stoppable handle, and a one-shot request client.

use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::wire::{self, Message, WireError};

/// A running accept loop. Dropping the handle stops it.
#[derive(Debug)]
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting. Connections already being served run to completion.
    pub fn shutdown(mut self) {
        self.stop_now();
    }

    /// Blocks until the accept loop ends (it only ends on shutdown).
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    fn stop_now(&mut self) {
        let Some(thread) = self.thread.take() else {
            return;
        };
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let mut wake = self.addr;
        if wake.ip().is_unspecified() {
            wake.set_ip(match wake {
                SocketAddr::V4(_) => [127, 0, 0, 1].into(),
                SocketAddr::V6(_) => std::net::Ipv6Addr::LOCALHOST.into(),
            });
        }
        let _ = TcpStream::connect_timeout(&wake, Duration::from_secs(1));
        let _ = thread.join();
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_now();
    }
}

/// Binds `listen` and serves each accepted connection on its own thread.
pub fn serve<F>(listen: &str, name: &str, handler: F) -> io::Result<ServerHandle>
where
    F: Fn(TcpStream) + Send + Sync + 'static,
{
    let listener = TcpListener::bind(listen)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let handler = Arc::new(handler);
    let flag = Arc::clone(&stop);
    let label = name.to_string();
    let thread = thread::Builder::new()
        .name(format!("{name}-accept"))
        .spawn(move || {
            for conn in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                match conn {
                    Ok(stream) => {
                        let h = Arc::clone(&handler);
                        let spawned = thread::Builder::new()
                            .name(format!("{label}-conn"))
                            .spawn(move || h(stream));
                        if let Err(e) = spawned {
                            log::error!("{label}: cannot spawn connection thread: {e}");
                        }
                    }
                    Err(e) => log::warn!("{label}: accept failed: {e}"),
                }
            }
            log::debug!("{label}: accept loop stopped");
        })?;
    log::info!("{name}: listening on {addr}");
    Ok(ServerHandle {
        addr,
        stop,
        thread: Some(thread),
    })
}

#[derive(Debug, Error)]
pub enum NetError {
    #[error("cannot connect to {endpoint}: {source}")]
    ConnectionFailed {
        endpoint: String,
        #[source]
        source: io::Error,
    },
    #[error("no response from {0} in time")]
    Timeout(String),
    #[error("protocol error with {endpoint}: {source}")]
    Protocol {
        endpoint: String,
        #[source]
        source: WireError,
    },
}

pub fn connect(endpoint: &str, timeout: Duration) -> Result<TcpStream, NetError> {
    let failed = |source| NetError::ConnectionFailed {
        endpoint: endpoint.to_string(),
        source,
    };
    let addrs: Vec<SocketAddr> = endpoint.to_socket_addrs().map_err(failed)?.collect();
    let mut last = io::Error::new(io::ErrorKind::NotFound, "no addresses resolved");
    for addr in addrs {
        match TcpStream::connect_timeout(&addr, timeout.max(Duration::from_millis(1))) {
            Ok(s) => return Ok(s),
            Err(e) => last = e,
        }
    }
    Err(failed(last))
}

/// Connects, sends `msg`, waits for one reply and closes. The whole
/// exchange is bounded by `timeout`.
pub fn request(endpoint: &str, msg: &Message, timeout: Duration) -> Result<Message, NetError> {
    let deadline = Instant::now() + timeout;
    let mut stream = connect(endpoint, timeout)?;
    let remaining = deadline
        .saturating_duration_since(Instant::now())
        .max(Duration::from_millis(1));
    let protocol = |source| NetError::Protocol {
        endpoint: endpoint.to_string(),
        source,
    };
    let _ = stream.set_nodelay(true);
    stream
        .set_write_timeout(Some(remaining))
        .and_then(|()| stream.set_read_timeout(Some(remaining)))
        .map_err(|e| protocol(WireError::Io(e)))?;
    wire::write_message(&mut stream, msg).map_err(protocol)?;
    match wire::read_message(&mut stream) {
        Ok(reply) => Ok(reply),
        Err(WireError::Io(e))
            if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) =>
        {
            Err(NetError::Timeout(endpoint.to_string()))
        }
        Err(e) => Err(protocol(e)),
    }
}
