//! Base layer: request handling against the warehouse, and the per-connection
//! server state machine that drives deliveries.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::frame::{
    decode_frame, encode_frame, DeliveryFlags, Epoch, ErrorCode, Frame, Header, MOD_ACK_SEQ,
};
use crate::link::{Link, Millis};
use crate::modloop::{refragment_and_send, run_mod_loop, ModLoopConfig, ModificationSpec};
use crate::transport::{
    ArqConfig, Outbox, OutboxStats, SendWindow, TransportError, DEFAULT_BUFFER_CAPACITY,
};
use crate::types::{ContentId, ContentItem, ContentRequest, LinkQuality, NetworkStatus};
use crate::warehouse::{SharedWarehouse, Warehouse};

/// What the coordination layer needs to deliver one item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryPlan {
    pub item: ContentItem,
    pub chunk_size: usize,
    pub mod_spec: Option<ModificationSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestError {
    pub code: ErrorCode,
    pub message: String,
}

pub fn choose_chunk_size(net: &NetworkStatus) -> usize {
    match net.quality {
        LinkQuality::High => 8192,
        LinkQuality::Medium => 4096,
        LinkQuality::Low => 1024,
    }
}

pub fn handle_request(req: &ContentRequest, w: &Warehouse) -> Result<DeliveryPlan, RequestError> {
    if let Err(e) = req.validate() {
        return Err(RequestError {
            code: ErrorCode::BadRequest,
            message: e.to_string(),
        });
    }
    let Some(item) = w.lookup(&req.url) else {
        return Err(RequestError {
            code: ErrorCode::NotFound,
            message: format!("no content at {}", req.url),
        });
    };
    // No transform changes the media type, so a spec cannot help here.
    if !req.profile.supports(item.media) {
        return Err(RequestError {
            code: ErrorCode::UnsupportedMedia,
            message: format!("device does not accept {} content", item.media),
        });
    }
    Ok(DeliveryPlan {
        item: item.clone(),
        chunk_size: choose_chunk_size(&req.net),
        mod_spec: req.mod_spec.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Delivered,
    NotFound,
    UnsupportedMedia,
    ModFailed,
    BadRequest,
    UnknownContent,
    DeliveryFailed,
    Superseded,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Delivered => "ok",
            Outcome::NotFound => "NOT_FOUND",
            Outcome::UnsupportedMedia => "UNSUPPORTED_MEDIA",
            Outcome::ModFailed => "MOD_FAILED",
            Outcome::BadRequest => "BAD_REQUEST",
            Outcome::UnknownContent => "UNKNOWN_CONTENT",
            Outcome::DeliveryFailed => "DELIVERY_FAILED",
            Outcome::Superseded => "SUPERSEDED",
        }
    }

    fn from_code(code: ErrorCode) -> Self {
        match code {
            ErrorCode::NotFound => Outcome::NotFound,
            ErrorCode::UnsupportedMedia => Outcome::UnsupportedMedia,
            ErrorCode::ModFailed => Outcome::ModFailed,
            ErrorCode::UnknownContent => Outcome::UnknownContent,
            ErrorCode::BadRequest => Outcome::BadRequest,
        }
    }
}

/// One line of the server's request log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub req_id: u32,
    pub url: String,
    pub outcome: Outcome,
    pub epoch: u8,
    pub chunks: u32,
    pub retries: u64,
    pub at: Millis,
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "url={} outcome={} chunks={} retries={} req={} epoch={}",
            self.url,
            self.outcome.as_str(),
            self.chunks,
            self.retries,
            self.req_id,
            self.epoch
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ServerConfig {
    pub arq: ArqConfig,
    pub mod_loop: ModLoopConfig,
    pub buffer_capacity: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            arq: ArqConfig::default(),
            mod_loop: ModLoopConfig::default(),
            buffer_capacity: DEFAULT_BUFFER_CAPACITY,
        }
    }
}

#[derive(Debug, Clone)]
enum ModResult {
    Accepted(Epoch),
    Failed(Vec<u8>),
}

#[derive(Debug)]
struct Delivery {
    req_id: u32,
    original: ContentItem,
    request: ContentRequest,
    last_mod: Option<(ModificationSpec, ModResult)>,
    window: Option<SendWindow>,
    epoch: Epoch,
    chunks: u32,
}

/// Server side of one connection. Sans-IO: the caller feeds received frames
/// and calls [`ServerConnection::poll`] at or after
/// [`ServerConnection::next_deadline`].
#[derive(Debug)]
pub struct ServerConnection {
    warehouse: SharedWarehouse,
    cfg: ServerConfig,
    outbox: Outbox,
    net: NetworkStatus,
    /// Error frames already sent per request id, re-sent on duplicates.
    answered: HashMap<u32, Option<Vec<u8>>>,
    deliveries: BTreeMap<ContentId, Delivery>,
    log: Vec<LogRecord>,
    bad_frames: u64,
}

impl ServerConnection {
    pub fn new(warehouse: SharedWarehouse, cfg: ServerConfig) -> Self {
        ServerConnection {
            warehouse,
            outbox: Outbox::new(cfg.buffer_capacity),
            cfg,
            net: NetworkStatus::default(),
            answered: HashMap::new(),
            deliveries: BTreeMap::new(),
            log: Vec::new(),
            bad_frames: 0,
        }
    }

    pub fn outbox_stats(&self) -> OutboxStats {
        self.outbox.stats()
    }

    pub fn bad_frames(&self) -> u64 {
        self.bad_frames
    }

    pub fn active_deliveries(&self) -> usize {
        self.deliveries
            .values()
            .filter(|d| d.window.is_some())
            .count()
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn take_log(&mut self) -> Vec<LogRecord> {
        std::mem::take(&mut self.log)
    }

    pub fn next_deadline(&self) -> Option<Millis> {
        self.deliveries
            .values()
            .filter_map(|d| d.window.as_ref()?.next_deadline())
            .min()
    }

    pub fn on_bytes(
        &mut self,
        bytes: &[u8],
        link: &mut dyn Link,
        now: Millis,
    ) -> Result<(), TransportError> {
        match decode_frame(bytes) {
            Ok(frame) => self.on_frame(frame, link, now),
            Err(_) => {
                self.bad_frames += 1;
                Ok(())
            }
        }
    }

    pub fn on_frame(
        &mut self,
        frame: Frame,
        link: &mut dyn Link,
        now: Millis,
    ) -> Result<(), TransportError> {
        let flags = frame.flags;
        match frame.header {
            Header::Request(h) => self.on_request(h.req_id, h.request, link, now),
            Header::Ack(a) => {
                if let Some(d) = self.deliveries.get_mut(&a.content_id) {
                    if let Some(w) = d.window.as_mut() {
                        w.on_ack(a.seq, DeliveryFlags::unpack(flags).epoch);
                    }
                }
                self.poll(link, now)
            }
            Header::ModRequest(m) => self.on_mod_request(m.content_id, m.spec, link, now),
            Header::NetStatus(n) => {
                self.net = n;
                Ok(())
            }
            // Client-bound frame types are ignored.
            _ => Ok(()),
        }
    }

    fn send_error(
        &mut self,
        req_id: u32,
        code: ErrorCode,
        content_id: ContentId,
        message: &str,
        link: &mut dyn Link,
        now: Millis,
    ) -> Result<Vec<u8>, TransportError> {
        let bytes = encode_frame(&Frame::error(req_id, code, content_id, message))?;
        self.send_raw(bytes.clone(), link, now)?;
        Ok(bytes)
    }

    fn send_raw(
        &mut self,
        bytes: Vec<u8>,
        link: &mut dyn Link,
        now: Millis,
    ) -> Result<(), TransportError> {
        match self.outbox.send(link, bytes, now) {
            Ok(_) | Err(TransportError::BufferFull) => Ok(()),
            Err(e) => Err(e),
        }
    }

    fn record(&mut self, req_id: u32, url: &str, outcome: Outcome, now: Millis) {
        self.log.push(LogRecord {
            req_id,
            url: url.to_string(),
            outcome,
            epoch: 0,
            chunks: 0,
            retries: 0,
            at: now,
        });
    }

    fn on_request(
        &mut self,
        req_id: u32,
        request: ContentRequest,
        link: &mut dyn Link,
        now: Millis,
    ) -> Result<(), TransportError> {
        if let Some(prev) = self.answered.get(&req_id) {
            // Retransmitted request: an in-progress delivery answers it,
            // a lost error frame is sent again.
            if let Some(bytes) = prev.clone() {
                self.send_raw(bytes, link, now)?;
            }
            return Ok(());
        }
        self.net = request.net;
        let plan = {
            let w = self.warehouse.read().expect("warehouse lock poisoned");
            handle_request(&request, &w)
        };
        let plan = match plan {
            Ok(plan) => plan,
            Err(e) => {
                let bytes =
                    self.send_error(req_id, e.code, ContentId::ZERO, &e.message, link, now)?;
                self.answered.insert(req_id, Some(bytes));
                self.record(req_id, &request.url, Outcome::from_code(e.code), now);
                return Ok(());
            }
        };
        let id = plan.item.content_id;
        let item = match run_mod_loop(&plan.item, &request, &self.cfg.mod_loop) {
            Ok(outcome) => outcome.item,
            Err(failure) => {
                let code = failure.error_code();
                let bytes = self.send_error(req_id, code, id, &failure.to_string(), link, now)?;
                self.answered.insert(req_id, Some(bytes));
                self.record(req_id, &request.url, Outcome::from_code(code), now);
                return Ok(());
            }
        };
        self.answered.insert(req_id, None);
        let epoch = match self.deliveries.get(&id) {
            Some(prev) => prev.epoch.next(),
            None => Epoch::default(),
        };
        self.supersede(id, now);
        self.deliveries.insert(
            id,
            Delivery {
                req_id,
                original: plan.item.clone(),
                request,
                last_mod: None,
                window: None,
                epoch,
                chunks: 0,
            },
        );
        self.start_delivery(id, item, plan.chunk_size, epoch, link, now)
    }

    /// Aborts an in-flight delivery of `id`, logging it as superseded.
    fn supersede(&mut self, id: ContentId, now: Millis) {
        let Some(d) = self.deliveries.get_mut(&id) else {
            return;
        };
        if let Some(w) = d.window.take() {
            let rec = LogRecord {
                req_id: d.req_id,
                url: d.original.url.clone(),
                outcome: Outcome::Superseded,
                epoch: d.epoch.value(),
                chunks: d.chunks,
                retries: w.stats().retransmissions,
                at: now,
            };
            self.log.push(rec);
        }
    }

    fn start_delivery(
        &mut self,
        id: ContentId,
        item: ContentItem,
        chunk_size: usize,
        epoch: Epoch,
        link: &mut dyn Link,
        now: Millis,
    ) -> Result<(), TransportError> {
        let d = self.deliveries.get_mut(&id).expect("delivery registered");
        let window = refragment_and_send(
            &item,
            chunk_size,
            epoch,
            d.req_id,
            self.cfg.arq,
            &mut self.outbox,
            link,
            now,
        )?;
        d.chunks = window.total() as u32;
        d.epoch = epoch;
        d.window = Some(window);
        Ok(())
    }

    fn on_mod_request(
        &mut self,
        id: ContentId,
        spec: ModificationSpec,
        link: &mut dyn Link,
        now: Millis,
    ) -> Result<(), TransportError> {
        let Some(d) = self.deliveries.get(&id) else {
            self.send_error(
                0,
                ErrorCode::UnknownContent,
                id,
                "no delivery of this content on this connection",
                link,
                now,
            )?;
            self.record(0, &id.to_hex(), Outcome::UnknownContent, now);
            return Ok(());
        };
        if let Some((last, result)) = &d.last_mod {
            if *last == spec {
                let bytes = match result {
                    ModResult::Accepted(epoch) => {
                        encode_frame(&Frame::ack(id, MOD_ACK_SEQ, *epoch))?
                    }
                    ModResult::Failed(bytes) => bytes.clone(),
                };
                return self.send_raw(bytes, link, now);
            }
        }
        let req_id = d.req_id;
        let url = d.original.url.clone();
        let original = d.original.clone();
        let request = d.request.clone().with_spec(spec.clone());
        let item = match run_mod_loop(&original, &request, &self.cfg.mod_loop) {
            Ok(outcome) => outcome.item,
            Err(failure) => {
                let code = failure.error_code();
                let bytes = self.send_error(req_id, code, id, &failure.to_string(), link, now)?;
                self.deliveries.get_mut(&id).expect("present").last_mod =
                    Some((spec, ModResult::Failed(bytes)));
                self.record(req_id, &url, Outcome::from_code(code), now);
                return Ok(());
            }
        };
        self.supersede(id, now);
        let d = self.deliveries.get_mut(&id).expect("present");
        let epoch = d.epoch.next();
        d.request = request;
        d.last_mod = Some((spec, ModResult::Accepted(epoch)));
        let ack = encode_frame(&Frame::ack(id, MOD_ACK_SEQ, epoch))?;
        self.send_raw(ack, link, now)?;
        let chunk_size = choose_chunk_size(&self.net);
        self.start_delivery(id, item, chunk_size, epoch, link, now)
    }

    /// Flushes buffered frames, fires retransmission timers, and retires
    /// finished deliveries.
    pub fn poll(&mut self, link: &mut dyn Link, now: Millis) -> Result<(), TransportError> {
        self.outbox.flush(link, now)?;
        let mut finished = Vec::new();
        for (id, d) in self.deliveries.iter_mut() {
            let Some(w) = d.window.as_mut() else { continue };
            let outcome = match w.poll(&mut self.outbox, link, now) {
                Ok(()) if w.is_complete() => Outcome::Delivered,
                Ok(()) => continue,
                Err(TransportError::DeliveryFailed { .. }) => Outcome::DeliveryFailed,
                Err(e) => return Err(e),
            };
            finished.push((*id, outcome));
        }
        for (id, outcome) in finished {
            let d = self.deliveries.get_mut(&id).expect("iterated above");
            let w = d.window.take().expect("active window");
            self.log.push(LogRecord {
                req_id: d.req_id,
                url: d.original.url.clone(),
                outcome,
                epoch: d.epoch.value(),
                chunks: d.chunks,
                retries: w.stats().retransmissions,
                at: now,
            });
        }
        Ok(())
    }
}
