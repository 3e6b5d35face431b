//! Application layer: the client session, late modification requests, and
//! the media manager that turns a delivered item into something displayable.

use std::path::{Path, PathBuf};

use mcl_parse::{serialize_canonical, DomNode, DtdGrammar, NullSink, ParseError, Parser, Source};
use thiserror::Error;

use crate::frame::{
    decode_frame, encode_frame, Epoch, ErrorCode, Frame, Header, ModRequestHeader, RequestHeader,
    MOD_ACK_SEQ,
};
use crate::link::{Link, LinkState, Millis};
use crate::modloop::{decide, Decision, ModificationSpec, RejectReason};
use crate::netsim::{LinkConfig, SimEnd, SimLink};
use crate::server::{ServerConfig, ServerConnection};
use crate::transport::{ArqConfig, Outbox, OutboxStats, Received, Receiver, TransportError};
use crate::types::{
    ContentId, ContentItem, ContentRequest, DeviceProfile, InvalidValue, MediaType, NetworkStatus,
};
use crate::warehouse::SharedWarehouse;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("unsupported media: {0}")]
    UnsupportedMedia(String),
    #[error("modification failed: {0}")]
    ModFailed(String),
    #[error("content rejected by the client: {0}")]
    Rejected(RejectReason),
    #[error("unknown content {0}")]
    UnknownContent(ContentId),
    #[error("server refused the request: {0}")]
    BadRequest(String),
    #[error("delivery failed: {0}")]
    DeliveryFailed(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("invalid request: {0}")]
    InvalidRequest(#[from] InvalidValue),
    #[error("document rejected: {0}")]
    Parse(#[from] ParseError),
    #[error("data content needs a grammar to be displayed")]
    MissingGrammar,
    #[error("graph line {line} is not an x<TAB>y pair: {text:?}")]
    GraphFormat { line: usize, text: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl ClientError {
    /// Process exit status for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            ClientError::NotFound(_) => 2,
            ClientError::UnsupportedMedia(_) => 3,
            ClientError::ModFailed(_) | ClientError::Rejected(_) => 4,
            ClientError::DeliveryFailed(_) | ClientError::Transport(_) => 5,
            ClientError::Parse(_) | ClientError::GraphFormat { .. } => 6,
            ClientError::UnknownContent(_) => 7,
            ClientError::BadRequest(_)
            | ClientError::InvalidRequest(_)
            | ClientError::MissingGrammar
            | ClientError::Io(_) => 1,
        }
    }

    /// Short label used in logs and reports.
    pub fn outcome_name(&self) -> &'static str {
        match self {
            ClientError::NotFound(_) => "NOT_FOUND",
            ClientError::UnsupportedMedia(_) => "UNSUPPORTED_MEDIA",
            ClientError::ModFailed(_) | ClientError::Rejected(_) => "MOD_FAILED",
            ClientError::UnknownContent(_) => "UNKNOWN_CONTENT",
            ClientError::BadRequest(_) | ClientError::InvalidRequest(_) => "BAD_REQUEST",
            ClientError::DeliveryFailed(_) | ClientError::Transport(_) => "DELIVERY_FAILED",
            ClientError::Parse(_) | ClientError::GraphFormat { .. } => "PARSE_ERROR",
            ClientError::MissingGrammar | ClientError::Io(_) => "IO_ERROR",
        }
    }

    fn from_error_frame(code: ErrorCode, content_id: ContentId, message: String) -> Self {
        match code {
            ErrorCode::NotFound => ClientError::NotFound(message),
            ErrorCode::UnsupportedMedia => ClientError::UnsupportedMedia(message),
            ErrorCode::ModFailed => ClientError::ModFailed(message),
            ErrorCode::UnknownContent => ClientError::UnknownContent(content_id),
            ErrorCode::BadRequest => ClientError::BadRequest(message),
        }
    }
}

/// Drives time and I/O for a [`ClientSession`].
pub trait Conduit {
    fn now(&self) -> Millis;
    fn link(&mut self) -> &mut dyn Link;
    /// Lets time pass until `deadline`, returning early once frames may be
    /// waiting on [`Conduit::link`].
    fn wait(&mut self, deadline: Millis) -> Result<(), TransportError>;
    /// True when the far side has nothing left to send.
    fn quiescent(&self) -> bool {
        false
    }
}

/// Conduit over a simulated link whose far end is an in-process server.
/// Virtual time jumps from event to event.
pub struct SimConduit {
    link: SimLink,
    client: SimEnd,
    server_end: SimEnd,
    server: ServerConnection,
    now: Millis,
}

impl SimConduit {
    pub fn new(config: LinkConfig, warehouse: SharedWarehouse, server_cfg: ServerConfig) -> Self {
        let link = SimLink::new(config);
        let (client, server_end) = link.split();
        SimConduit {
            link,
            client,
            server_end,
            server: ServerConnection::new(warehouse, server_cfg),
            now: 0,
        }
    }

    pub fn sim_link(&self) -> &SimLink {
        &self.link
    }

    pub fn server(&self) -> &ServerConnection {
        &self.server
    }

    pub fn server_mut(&mut self) -> &mut ServerConnection {
        &mut self.server
    }

    fn service_server(&mut self) -> Result<(), TransportError> {
        for bytes in self.server_end.recv(self.now)? {
            self.server
                .on_bytes(&bytes, &mut self.server_end, self.now)?;
        }
        self.server.poll(&mut self.server_end, self.now)
    }
}

impl Conduit for SimConduit {
    fn now(&self) -> Millis {
        self.now
    }

    fn link(&mut self) -> &mut dyn Link {
        &mut self.client
    }

    fn wait(&mut self, deadline: Millis) -> Result<(), TransportError> {
        loop {
            self.service_server()?;
            if self.now >= deadline || self.client.next_arrival().is_some_and(|t| t <= self.now) {
                return Ok(());
            }
            let now = self.now;
            self.now = [
                Some(deadline),
                self.client.next_arrival(),
                self.server_end.next_event(now),
                self.server.next_deadline(),
            ]
            .into_iter()
            .flatten()
            .filter(|&t| t > now)
            .min()
            .expect("deadline is in the future");
        }
    }

    fn quiescent(&self) -> bool {
        self.server.active_deliveries() == 0 && self.link.in_flight() == 0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ClientConfig {
    pub arq: ArqConfig,
    /// Give up when nothing arrives for this long while the link is up.
    pub idle_timeout_ms: Millis,
    pub buffer_capacity: usize,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            arq: ArqConfig::default(),
            idle_timeout_ms: 10_000,
            buffer_capacity: crate::transport::DEFAULT_BUFFER_CAPACITY,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FetchOptions {
    /// Send this ModRequest once the given number of chunks has arrived.
    pub modify_after_chunks: Option<(u32, ModificationSpec)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchReport {
    pub item: ContentItem,
    /// Request as finally satisfied, including any late modification.
    pub request: Option<ContentRequest>,
    pub epoch: Epoch,
    pub chunks_received: u32,
    pub stale_frames: u32,
    pub duplicate_frames: u32,
    pub request_sends: u32,
    pub mod_sends: u32,
    /// Request and ModRequest frames sent again after a timeout.
    pub retransmissions: u32,
    pub mod_requested: bool,
    pub started_at: Millis,
    pub finished_at: Millis,
}

struct Pending {
    bytes: Vec<u8>,
    deadline: Millis,
    sends: u32,
    buffered: bool,
}

struct PendingMod {
    spec: ModificationSpec,
    base_epoch: Option<Epoch>,
    retry: Pending,
}

struct Exchange {
    req_id: Option<u32>,
    request: Option<ContentRequest>,
    request_retry: Option<Pending>,
    bound: Option<ContentId>,
    min_epoch: Option<Epoch>,
    modify_after: Option<(u32, ModificationSpec)>,
    pending_mod: Option<PendingMod>,
    last_rx: Millis,
    report: FetchReport,
}

impl Exchange {
    fn new(now: Millis) -> Self {
        Exchange {
            req_id: None,
            request: None,
            request_retry: None,
            bound: None,
            min_epoch: None,
            modify_after: None,
            pending_mod: None,
            last_rx: now,
            report: FetchReport {
                item: ContentItem {
                    content_id: ContentId::ZERO,
                    url: String::new(),
                    media: MediaType::Data,
                    payload: Vec::new(),
                    created_at: 0,
                    modified: false,
                },
                request: None,
                epoch: Epoch::default(),
                chunks_received: 0,
                stale_frames: 0,
                duplicate_frames: 0,
                request_sends: 0,
                mod_sends: 0,
                retransmissions: 0,
                mod_requested: false,
                started_at: now,
                finished_at: now,
            },
        }
    }
}

#[derive(PartialEq)]
enum Resend {
    No,
    /// Hand a copy to the offline buffer; not a retry.
    Buffer,
    Retry,
}

/// Advances a retransmission timer. While the link is down the frame is
/// handed to the offline buffer once and no retry is spent.
fn retry_due(
    p: &mut Pending,
    (now, timeout, down, max_sends): (Millis, Millis, bool, u32),
    what: &str,
) -> Result<Resend, ClientError> {
    if p.deadline > now {
        return Ok(Resend::No);
    }
    p.deadline = now + timeout;
    if down {
        if p.buffered {
            return Ok(Resend::No);
        }
        p.buffered = true;
        return Ok(Resend::Buffer);
    }
    p.buffered = false;
    if p.sends >= max_sends {
        return Err(ClientError::DeliveryFailed(format!(
            "no answer to {what} after {} sends",
            p.sends
        )));
    }
    p.sends += 1;
    Ok(Resend::Retry)
}

enum Step {
    Continue,
    Done(Box<FetchReport>),
}

/// One client connection. Requests run one at a time.
pub struct ClientSession<C: Conduit> {
    conduit: C,
    cfg: ClientConfig,
    outbox: Outbox,
    receiver: Receiver,
    next_req_id: u32,
    known: Vec<(ContentId, ContentRequest)>,
    retransmissions: u64,
}

impl<C: Conduit> ClientSession<C> {
    pub fn new(conduit: C, cfg: ClientConfig) -> Self {
        ClientSession {
            conduit,
            outbox: Outbox::new(cfg.buffer_capacity),
            cfg,
            receiver: Receiver::new(),
            next_req_id: 1,
            known: Vec::new(),
            retransmissions: 0,
        }
    }

    pub fn conduit(&self) -> &C {
        &self.conduit
    }

    pub fn conduit_mut(&mut self) -> &mut C {
        &mut self.conduit
    }

    pub fn outbox_stats(&self) -> OutboxStats {
        self.outbox.stats()
    }

    /// Request and ModRequest retransmissions over the session's lifetime,
    /// including exchanges that ended in an error.
    pub fn retransmissions(&self) -> u64 {
        self.retransmissions
    }

    pub fn now(&self) -> Millis {
        self.conduit.now()
    }

    fn send(&mut self, bytes: Vec<u8>) -> Result<(), ClientError> {
        let now = self.conduit.now();
        match self.outbox.send(self.conduit.link(), bytes, now) {
            Ok(_) | Err(TransportError::BufferFull) => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn send_net_status(&mut self, net: NetworkStatus) -> Result<(), ClientError> {
        net.validate()?;
        let bytes = encode_frame(&Frame::new(Header::NetStatus(net), 0, Vec::new()))
            .map_err(TransportError::from)?;
        self.send(bytes)
    }

    /// Fetches `request.url` and returns the accepted item.
    pub fn fetch(
        &mut self,
        request: ContentRequest,
        opts: FetchOptions,
    ) -> Result<FetchReport, ClientError> {
        request.validate()?;
        let req_id = self.next_req_id;
        self.next_req_id = self.next_req_id.wrapping_add(1).max(1);
        let bytes = encode_frame(&Frame::new(
            Header::Request(RequestHeader {
                req_id,
                request: request.clone(),
            }),
            0,
            Vec::new(),
        ))
        .map_err(TransportError::from)?;
        let now = self.conduit.now();
        let mut ex = Exchange::new(now);
        ex.req_id = Some(req_id);
        ex.request = Some(request);
        ex.modify_after = opts.modify_after_chunks;
        ex.request_retry = Some(Pending {
            bytes: bytes.clone(),
            deadline: now + self.cfg.arq.timeout_ms,
            sends: 1,
            buffered: false,
        });
        ex.report.request_sends = 1;
        self.send(bytes)?;
        self.run(ex)
    }

    /// Asks the server to re-deliver `content_id` modified by `spec`. Used
    /// after a delivery completed; mid-delivery requests go through
    /// [`FetchOptions::modify_after_chunks`].
    pub fn request_modification(
        &mut self,
        content_id: ContentId,
        spec: ModificationSpec,
    ) -> Result<FetchReport, ClientError> {
        spec.validate()?;
        let now = self.conduit.now();
        let mut ex = Exchange::new(now);
        ex.bound = Some(content_id);
        ex.request = self
            .known
            .iter()
            .rev()
            .find(|(id, _)| *id == content_id)
            .map(|(_, r)| r.clone());
        self.issue_mod(&mut ex, spec)?;
        self.run(ex)
    }

    /// Keeps acknowledging stray frames until the far side goes quiet or
    /// `until` passes.
    pub fn linger(&mut self, until: Millis) -> Result<(), ClientError> {
        let mut ex = Exchange::new(self.conduit.now());
        loop {
            let now = self.conduit.now();
            self.pump_frames(&mut ex)?;
            if now >= until || self.conduit.quiescent() {
                return Ok(());
            }
            let wake = [Some(until), self.conduit.link().next_event(now)]
                .into_iter()
                .flatten()
                .filter(|&t| t > now)
                .min()
                .unwrap_or(until);
            self.conduit.wait(wake)?;
        }
    }

    /// Runs the exchange until `until` regardless of quiescence, so that
    /// scheduled link events (outage ends, late arrivals) are all processed.
    pub fn advance_to(&mut self, until: Millis) -> Result<(), ClientError> {
        let mut ex = Exchange::new(self.conduit.now());
        loop {
            let now = self.conduit.now();
            self.pump_frames(&mut ex)?;
            if now >= until {
                return Ok(());
            }
            let wake = self
                .conduit
                .link()
                .next_event(now)
                .filter(|&t| t > now && t < until)
                .unwrap_or(until);
            self.conduit.wait(wake)?;
        }
    }

    fn issue_mod(&mut self, ex: &mut Exchange, spec: ModificationSpec) -> Result<(), ClientError> {
        let id = ex.bound.expect("modification needs a content id");
        let bytes = encode_frame(&Frame::new(
            Header::ModRequest(ModRequestHeader {
                content_id: id,
                spec: spec.clone(),
            }),
            0,
            Vec::new(),
        ))
        .map_err(TransportError::from)?;
        let now = self.conduit.now();
        ex.pending_mod = Some(PendingMod {
            spec,
            base_epoch: self.receiver.current_epoch(&id),
            retry: Pending {
                bytes: bytes.clone(),
                deadline: now + self.cfg.arq.timeout_ms,
                sends: 1,
                buffered: false,
            },
        });
        ex.report.mod_sends += 1;
        ex.report.mod_requested = true;
        self.send(bytes)
    }

    fn accept_mod(&mut self, ex: &mut Exchange, epoch: Epoch) {
        let Some(pm) = ex.pending_mod.take() else {
            return;
        };
        let id = ex.bound.expect("bound while modifying");
        ex.min_epoch = Some(epoch);
        self.receiver.supersede(id, epoch);
        if let Some(r) = ex.request.as_mut() {
            r.mod_spec = Some(pm.spec);
        }
    }

    fn run(&mut self, mut ex: Exchange) -> Result<FetchReport, ClientError> {
        loop {
            if let Step::Done(report) = self.pump_frames(&mut ex)? {
                return self.finish(*report);
            }
            let now = self.conduit.now();
            let down = self.conduit.link().state(now) == LinkState::Down;
            let timeout = self.cfg.arq.timeout_ms;
            let max_sends = self.cfg.arq.max_retries + 1;
            let cfg = (now, timeout, down, max_sends);
            if let Some(p) = ex.request_retry.as_mut() {
                let due = retry_due(p, cfg, "request")?;
                if due != Resend::No {
                    ex.report.request_sends = p.sends;
                    if due == Resend::Retry {
                        ex.report.retransmissions += 1;
                        self.retransmissions += 1;
                    }
                    let bytes = p.bytes.clone();
                    self.send(bytes)?;
                }
            }
            if let Some(m) = ex.pending_mod.as_mut() {
                let due = retry_due(&mut m.retry, cfg, "modification request")?;
                if due != Resend::No {
                    if due == Resend::Retry {
                        ex.report.mod_sends += 1;
                        ex.report.retransmissions += 1;
                        self.retransmissions += 1;
                    }
                    let bytes = m.retry.bytes.clone();
                    self.send(bytes)?;
                }
            }
            if down {
                ex.last_rx = now;
            } else if now >= ex.last_rx + self.cfg.idle_timeout_ms {
                return Err(ClientError::DeliveryFailed(format!(
                    "nothing received for {} ms",
                    self.cfg.idle_timeout_ms
                )));
            }
            let wake = [
                ex.request_retry.as_ref().map(|p| p.deadline),
                ex.pending_mod.as_ref().map(|m| m.retry.deadline),
                Some(ex.last_rx + self.cfg.idle_timeout_ms),
                self.conduit.link().next_event(now),
            ]
            .into_iter()
            .flatten()
            .min()
            .expect("idle deadline always present");
            self.conduit.wait(wake.max(now))?;
        }
    }

    fn finish(&mut self, mut report: FetchReport) -> Result<FetchReport, ClientError> {
        report.finished_at = self.conduit.now();
        if let Some(req) = &report.request {
            if let Decision::Reject(reason) = decide(&report.item, req) {
                return Err(ClientError::Rejected(reason));
            }
            self.known.push((report.item.content_id, req.clone()));
        }
        Ok(report)
    }

    fn pump_frames(&mut self, ex: &mut Exchange) -> Result<Step, ClientError> {
        let now = self.conduit.now();
        self.outbox.flush(self.conduit.link(), now)?;
        let incoming = self
            .conduit
            .link()
            .recv(now)
            .map_err(TransportError::from)?;
        for bytes in incoming {
            ex.last_rx = now;
            let Ok(frame) = decode_frame(&bytes) else {
                continue;
            };
            if let Step::Done(r) = self.on_frame(ex, frame)? {
                return Ok(Step::Done(r));
            }
        }
        Ok(Step::Continue)
    }

    fn on_frame(&mut self, ex: &mut Exchange, frame: Frame) -> Result<Step, ClientError> {
        let flags = frame.delivery_flags();
        match &frame.header {
            Header::Content(_) | Header::Chunk(_) => {
                let (id, binds) = match &frame.header {
                    Header::Content(h) => (h.content_id, ex.req_id == Some(h.req_id)),
                    Header::Chunk(h) => (
                        h.content_id,
                        self.receiver
                            .current_epoch(&h.content_id)
                            .is_none_or(|e| flags.epoch.is_newer_than(e)),
                    ),
                    _ => unreachable!(),
                };
                if ex.bound.is_none() && ex.req_id.is_some() && binds {
                    ex.bound = Some(id);
                    ex.request_retry = None;
                }
                let is_ours = ex.bound == Some(id);
                if is_ours {
                    if let Some(pm) = &ex.pending_mod {
                        // A newer epoch than the one we modified implies the
                        // server accepted the modification.
                        if pm.base_epoch.is_none_or(|b| flags.epoch.is_newer_than(b)) {
                            self.accept_mod(ex, flags.epoch);
                        }
                    }
                }
                let Ok((got, ack)) = self.receiver.on_data(&frame) else {
                    return Ok(Step::Continue);
                };
                self.send(encode_frame(&ack).map_err(TransportError::from)?)?;
                if !is_ours {
                    return Ok(Step::Continue);
                }
                match got {
                    Received::Progress { .. } => {
                        ex.report.chunks_received += 1;
                        if let Some((n, _)) = &ex.modify_after {
                            if ex.report.chunks_received >= *n && ex.pending_mod.is_none() {
                                let (_, spec) = ex.modify_after.take().expect("checked");
                                self.issue_mod(ex, spec)?;
                            }
                        }
                    }
                    Received::Complete {
                        content_id,
                        epoch,
                        media,
                        modified,
                        payload,
                    } => {
                        ex.report.chunks_received += 1;
                        if let Some((_, spec)) = ex.modify_after.take() {
                            // Finished before the modification point; the
                            // modification becomes a fresh delivery.
                            self.issue_mod(ex, spec)?;
                            return Ok(Step::Continue);
                        }
                        if ex.pending_mod.is_some()
                            || ex
                                .min_epoch
                                .is_some_and(|m| m != epoch && !epoch.is_newer_than(m))
                        {
                            ex.report.stale_frames += 1;
                            return Ok(Step::Continue);
                        }
                        let mut report = ex.report.clone();
                        report.item = ContentItem {
                            content_id,
                            url: ex
                                .request
                                .as_ref()
                                .map(|r| r.url.clone())
                                .unwrap_or_default(),
                            media,
                            payload,
                            created_at: 0,
                            modified,
                        };
                        report.epoch = epoch;
                        report.request = ex.request.clone();
                        return Ok(Step::Done(Box::new(report)));
                    }
                    Received::Stale => ex.report.stale_frames += 1,
                    Received::Duplicate => ex.report.duplicate_frames += 1,
                }
            }
            Header::Ack(a) if a.seq == MOD_ACK_SEQ => {
                if ex.pending_mod.is_some() && ex.bound == Some(a.content_id) {
                    self.accept_mod(ex, flags.epoch);
                }
            }
            Header::Error(e) => {
                let for_request =
                    e.req_id != 0 && ex.req_id == Some(e.req_id) && ex.pending_mod.is_none();
                let for_mod = ex.pending_mod.is_some() && ex.bound == Some(e.content_id);
                if for_request || for_mod {
                    let message = String::from_utf8_lossy(&frame.payload).into_owned();
                    return Err(ClientError::from_error_frame(e.code, e.content_id, message));
                }
            }
            _ => {}
        }
        Ok(Step::Continue)
    }
}

/// How a delivered item is presented.
#[derive(Debug, Clone, PartialEq)]
pub enum Rendering {
    Document {
        dom: DomNode,
        canonical: String,
    },
    /// Modified documents are shown verbatim; a transform such as truncation
    /// generally leaves markup that no longer validates.
    Text(String),
    Points(Vec<(f64, f64)>),
    File {
        path: Option<PathBuf>,
        bytes: Vec<u8>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisplayedContent {
    pub media: MediaType,
    pub content_id: ContentId,
    pub rendering: Rendering,
}

pub fn parse_graph(payload: &[u8]) -> Result<Vec<(f64, f64)>, ClientError> {
    let text = std::str::from_utf8(payload).map_err(|e| ClientError::GraphFormat {
        line: 1 + payload[..e.valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count(),
        text: String::new(),
    })?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let bad = || ClientError::GraphFormat {
            line: i + 1,
            text: line.to_string(),
        };
        let (x, y) = line.split_once('\t').ok_or_else(bad)?;
        let x: f64 = x.trim().parse().map_err(|_| bad())?;
        let y: f64 = y.trim().parse().map_err(|_| bad())?;
        points.push((x, y));
    }
    Ok(points)
}

pub fn parse_data(payload: &[u8], grammar: &DtdGrammar) -> Result<DomNode, ParseError> {
    let mut parser = Parser::construct(grammar, NullSink);
    parser.open_stream(Source::Memory(payload.to_vec()))?;
    parser.tokenize_source()?;
    let dom = parser.iterate()?;
    parser.destroy()?;
    Ok(dom)
}

pub fn media_extension(media: MediaType) -> Option<&'static str> {
    match media {
        MediaType::Image => Some("img"),
        MediaType::Voice => Some("voc"),
        MediaType::Data | MediaType::Graph => None,
    }
}

/// Media manager: routes a complete item to the display path for its media.
pub fn media_dispatch(
    item: &ContentItem,
    grammar: Option<&DtdGrammar>,
    out_dir: Option<&Path>,
) -> Result<DisplayedContent, ClientError> {
    let rendering = match item.media {
        MediaType::Data if item.modified => {
            Rendering::Text(String::from_utf8_lossy(&item.payload).into_owned())
        }
        MediaType::Data => {
            let grammar = grammar.ok_or(ClientError::MissingGrammar)?;
            let dom = parse_data(&item.payload, grammar)?;
            let canonical = serialize_canonical(&dom);
            Rendering::Document { dom, canonical }
        }
        MediaType::Graph => Rendering::Points(parse_graph(&item.payload)?),
        MediaType::Image | MediaType::Voice => {
            let ext = media_extension(item.media).expect("binary media has an extension");
            let path = match out_dir {
                Some(dir) => {
                    let path = dir.join(format!("{}.{ext}", item.content_id.to_hex()));
                    std::fs::write(&path, &item.payload)?;
                    Some(path)
                }
                None => None,
            };
            Rendering::File {
                path,
                bytes: item.payload.clone(),
            }
        }
    };
    Ok(DisplayedContent {
        media: item.media,
        content_id: item.content_id,
        rendering,
    })
}

/// Fetches `url` over `session` and hands the result to the media manager.
#[allow(clippy::too_many_arguments)]
pub fn request_content<C: Conduit>(
    session: &mut ClientSession<C>,
    url: &str,
    profile: DeviceProfile,
    net: NetworkStatus,
    spec: Option<ModificationSpec>,
    grammar: Option<&DtdGrammar>,
    out_dir: Option<&Path>,
) -> Result<DisplayedContent, ClientError> {
    let mut request = ContentRequest::new(url, profile, net);
    request.mod_spec = spec;
    let report = session.fetch(request, FetchOptions::default())?;
    media_dispatch(&report.item, grammar, out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mcl_parse::load_grammar;

    fn item(media: MediaType, payload: &[u8]) -> ContentItem {
        ContentItem {
            content_id: ContentId([0xcd; 16]),
            url: "x".into(),
            media,
            payload: payload.to_vec(),
            created_at: 0,
            modified: false,
        }
    }

    #[test]
    fn data_is_parsed() {
        let g = load_grammar("ROOT page\nELEMENT page TEXT\n").unwrap();
        let shown =
            media_dispatch(&item(MediaType::Data, b"<page>hi</page>"), Some(&g), None).unwrap();
        match shown.rendering {
            Rendering::Document { canonical, .. } => assert_eq!(canonical, "<page>hi</page>"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            media_dispatch(&item(MediaType::Data, b"<page>"), Some(&g), None),
            Err(ClientError::Parse(_))
        ));
        assert!(matches!(
            media_dispatch(&item(MediaType::Data, b"<page/>"), None, None),
            Err(ClientError::MissingGrammar)
        ));
    }

    #[test]
    fn graph_points() {
        assert_eq!(
            parse_graph(b"1\t2\n3\t4\n").unwrap(),
            vec![(1.0, 2.0), (3.0, 4.0)]
        );
        match parse_graph(b"1\t2\nthree\t4\n") {
            Err(ClientError::GraphFormat { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_graph(b"").unwrap().is_empty());
    }

    #[test]
    fn binary_media_written_to_file() {
        let dir = tempfile::tempdir().unwrap();
        let shown =
            media_dispatch(&item(MediaType::Voice, b"12345"), None, Some(dir.path())).unwrap();
        let Rendering::File {
            path: Some(path), ..
        } = shown.rendering
        else {
            panic!("expected a file");
        };
        assert_eq!(path.extension().unwrap(), "voc");
        assert_eq!(std::fs::read(path).unwrap().len(), 5);
    }

    #[test]
    fn exit_codes_are_distinct_per_class() {
        assert_eq!(ClientError::NotFound(String::new()).exit_code(), 2);
        assert_eq!(ClientError::UnsupportedMedia(String::new()).exit_code(), 3);
        assert_eq!(ClientError::ModFailed(String::new()).exit_code(), 4);
        assert_eq!(ClientError::DeliveryFailed(String::new()).exit_code(), 5);
        assert_eq!(
            ClientError::GraphFormat {
                line: 1,
                text: String::new()
            }
            .exit_code(),
            6
        );
        assert_eq!(ClientError::UnknownContent(ContentId::ZERO).exit_code(), 7);
    }
}
