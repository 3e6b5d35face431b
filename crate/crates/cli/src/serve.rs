//! TCP front end for [`ServerConnection`]: one thread and one transport state
//! machine per accepted connection, all sharing the warehouse.

use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use mcl_core::client::parse_data;
use mcl_core::link::Link;
use mcl_core::server::{ServerConfig, ServerConnection};
use mcl_core::transport::TransportError;
use mcl_core::types::MediaType;
use mcl_core::warehouse::{SharedWarehouse, Warehouse};
use mcl_parse::DtdGrammar;

use crate::stream::{elapsed_ms, StreamLink};

/// Idle wake-up when no retransmission timer is pending.
const IDLE_POLL: Duration = Duration::from_millis(50);

pub type LogSink = Arc<Mutex<dyn Write + Send>>;

fn log_line(sink: &LogSink, line: &str) {
    let mut w = sink.lock().expect("log sink poisoned");
    let _ = writeln!(w, "{line}");
    let _ = w.flush();
}

/// Data items that do not parse under `grammar`, as `(url, error)`.
pub fn invalid_documents(warehouse: &Warehouse, grammar: &DtdGrammar) -> Vec<(String, String)> {
    warehouse
        .items()
        .filter(|it| it.media == MediaType::Data)
        .filter_map(|it| {
            parse_data(&it.payload, grammar)
                .err()
                .map(|e| (it.url.clone(), e.to_string()))
        })
        .collect()
}

/// Serves one connection until the peer closes it.
pub fn serve_connection(
    stream: TcpStream,
    warehouse: SharedWarehouse,
    cfg: ServerConfig,
    log: LogSink,
) -> Result<(), TransportError> {
    let peer = stream
        .peer_addr()
        .map_or_else(|_| "?".to_string(), |a| a.to_string());
    let mut link = StreamLink::tcp(stream).map_err(|e| TransportError::Protocol(e.to_string()))?;
    let mut conn = ServerConnection::new(warehouse, cfg);
    let start = Instant::now();
    let result = loop {
        let now = elapsed_ms(start);
        let frames = match link.recv(now) {
            Ok(frames) => frames,
            Err(_) => break Ok(()),
        };
        let step = frames
            .iter()
            .try_for_each(|f| conn.on_bytes(f, &mut link, now))
            .and_then(|()| conn.poll(&mut link, now));
        for record in conn.take_log() {
            log_line(&log, &format!("peer={peer} {record}"));
        }
        if let Err(e) = step {
            break Err(e);
        }
        let wait = conn
            .next_deadline()
            .map_or(IDLE_POLL, |d| {
                Duration::from_millis(d.saturating_sub(elapsed_ms(start)))
            })
            .min(IDLE_POLL);
        link.wait_frame(wait);
    };
    match &result {
        Ok(()) => log_line(&log, &format!("peer={peer} closed")),
        Err(e) => log_line(&log, &format!("peer={peer} error={e}")),
    }
    result
}

/// Accepts connections forever.
pub fn serve(
    listener: TcpListener,
    warehouse: SharedWarehouse,
    cfg: ServerConfig,
    log: LogSink,
) -> std::io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let (w, log) = (warehouse.clone(), log.clone());
        thread::spawn(move || {
            let _ = serve_connection(stream, w, cfg, log);
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::StreamConduit;
    use mcl_core::client::{ClientConfig, ClientSession, FetchOptions};
    use mcl_core::types::{ContentRequest, DeviceProfile, LinkQuality, NetworkStatus};

    #[derive(Clone, Default)]
    struct Lines(Arc<Mutex<Vec<u8>>>);

    impl Write for Lines {
        fn write(&mut self, b: &[u8]) -> std::io::Result<usize> {
            self.0.lock().unwrap().write(b)
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn concurrent_clients_over_tcp() {
        let mut w = Warehouse::with_seed(5);
        let body: Vec<u8> = (0..20_000u32).map(|i| (i % 251) as u8).collect();
        w.ingest("blob", MediaType::Image, body.clone()).unwrap();
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let lines = Lines::default();
        let sink: LogSink = Arc::new(Mutex::new(lines.clone()));
        let shared = w.into_shared();
        thread::spawn(move || serve(listener, shared, ServerConfig::default(), sink));

        let clients: Vec<_> = (0..4)
            .map(|_| {
                let addr = addr.clone();
                thread::spawn(move || {
                    let conduit = StreamConduit::connect(&addr).unwrap();
                    let mut s = ClientSession::new(conduit, ClientConfig::default());
                    let req = ContentRequest::new(
                        "blob",
                        DeviceProfile::default(),
                        NetworkStatus::new(LinkQuality::Medium),
                    );
                    s.fetch(req, FetchOptions::default()).unwrap().item.payload
                })
            })
            .collect();
        for c in clients {
            assert_eq!(c.join().unwrap(), body);
        }
        let deadline = Instant::now() + Duration::from_secs(5);
        loop {
            let text = String::from_utf8(lines.0.lock().unwrap().clone()).unwrap();
            if text.matches("outcome=ok").count() == 4 {
                assert!(text.contains("chunks=5"), "{text}");
                break;
            }
            assert!(Instant::now() < deadline, "{text}");
            thread::sleep(Duration::from_millis(10));
        }
    }
}
