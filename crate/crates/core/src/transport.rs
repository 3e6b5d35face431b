//! Coordination layer: size-based dispatch, fragmentation, acknowledged
//! delivery with retransmission, and the offline message buffer.

use std::collections::{BTreeMap, HashMap, VecDeque};

use thiserror::Error;

use crate::frame::{
    decode_frame, encode_frame, ChunkHeader, ContentHeader, DeliveryFlags, Epoch, Frame,
    FrameError, Header,
};
use crate::link::{Link, LinkError, LinkState, Millis};
use crate::modloop::{Integration, Reassembly, ReassemblyError};
use crate::server::DeliveryPlan;
use crate::types::{Chunk, ContentId, ContentItem, MediaType};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("message buffer full")]
    BufferFull,
    #[error("link closed")]
    LinkClosed,
    #[error("delivery failed: chunk {seq} unacknowledged after all retries")]
    DeliveryFailed { seq: u32 },
    #[error("link error: {0}")]
    Link(LinkError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("protocol violation: {0}")]
    Protocol(String),
}

impl From<LinkError> for TransportError {
    fn from(e: LinkError) -> Self {
        match e {
            LinkError::Closed => TransportError::LinkClosed,
            other => TransportError::Link(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArqConfig {
    pub window_size: usize,
    pub timeout_ms: Millis,
    pub max_retries: u32,
}

impl Default for ArqConfig {
    fn default() -> Self {
        ArqConfig {
            window_size: 16,
            timeout_ms: 200,
            max_retries: 8,
        }
    }
}

pub const DEFAULT_BUFFER_CAPACITY: usize = 256;

/// Bounded FIFO of encoded frames held while the link is down.
#[derive(Debug, Clone)]
pub struct MsgBuffer {
    queue: VecDeque<Vec<u8>>,
    capacity: usize,
}

impl MsgBuffer {
    pub fn new(capacity: usize) -> Self {
        MsgBuffer {
            queue: VecDeque::new(),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Rejects the new frame when full; queued frames are never evicted.
    pub fn buffer_offline(&mut self, frame: Vec<u8>) -> Result<(), TransportError> {
        if self.queue.len() >= self.capacity {
            return Err(TransportError::BufferFull);
        }
        self.queue.push_back(frame);
        Ok(())
    }

    /// Sends queued frames in arrival order until the buffer empties or the
    /// link refuses. Returns how many frames went out.
    pub fn flush_on_reconnect(
        &mut self,
        link: &mut dyn Link,
        now: Millis,
    ) -> Result<usize, TransportError> {
        let mut sent = 0;
        while let Some(front) = self.queue.front() {
            match link.send(front, now) {
                Ok(()) => {
                    self.queue.pop_front();
                    sent += 1;
                }
                Err(LinkError::LinkDown) => break,
                Err(e) => return Err(e.into()),
            }
        }
        Ok(sent)
    }
}

impl Default for MsgBuffer {
    fn default() -> Self {
        MsgBuffer::new(DEFAULT_BUFFER_CAPACITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendOutcome {
    Sent,
    Buffered,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OutboxStats {
    pub sent: u64,
    pub buffered: u64,
    pub rejected: u64,
    pub flushed: u64,
}

/// Every outgoing frame of one endpoint passes through here, so buffered
/// frames always leave before new traffic.
#[derive(Debug, Clone, Default)]
pub struct Outbox {
    buffer: MsgBuffer,
    stats: OutboxStats,
}

impl Outbox {
    pub fn new(capacity: usize) -> Self {
        Outbox {
            buffer: MsgBuffer::new(capacity),
            stats: OutboxStats::default(),
        }
    }

    pub fn stats(&self) -> OutboxStats {
        self.stats
    }

    pub fn buffer(&self) -> &MsgBuffer {
        &self.buffer
    }

    pub fn flush(&mut self, link: &mut dyn Link, now: Millis) -> Result<usize, TransportError> {
        if self.buffer.is_empty() || link.state(now) == LinkState::Down {
            return Ok(0);
        }
        let n = self.buffer.flush_on_reconnect(link, now)?;
        self.stats.flushed += n as u64;
        self.stats.sent += n as u64;
        Ok(n)
    }

    pub fn send(
        &mut self,
        link: &mut dyn Link,
        frame: Vec<u8>,
        now: Millis,
    ) -> Result<SendOutcome, TransportError> {
        self.flush(link, now)?;
        if self.buffer.is_empty() && link.state(now) == LinkState::Up {
            match link.send(&frame, now) {
                Ok(()) => {
                    self.stats.sent += 1;
                    return Ok(SendOutcome::Sent);
                }
                Err(LinkError::LinkDown) => {}
                Err(e) => return Err(e.into()),
            }
        }
        match self.buffer.buffer_offline(frame) {
            Ok(()) => {
                self.stats.buffered += 1;
                Ok(SendOutcome::Buffered)
            }
            Err(e) => {
                self.stats.rejected += 1;
                Err(e)
            }
        }
    }

    pub fn send_frame(
        &mut self,
        link: &mut dyn Link,
        frame: &Frame,
        now: Millis,
    ) -> Result<SendOutcome, TransportError> {
        self.send(link, encode_frame(frame)?, now)
    }
}

/// Splits `payload` into `ceil(len / chunk_size)` chunks; an empty payload
/// still yields one empty chunk.
pub fn fragment(payload: &[u8], chunk_size: usize, content_id: ContentId) -> Vec<Chunk> {
    assert!(chunk_size >= 1, "chunk_size must be at least 1");
    if payload.is_empty() {
        return vec![Chunk {
            content_id,
            seq: 0,
            total: 1,
            payload: Vec::new(),
        }];
    }
    let total = payload.len().div_ceil(chunk_size);
    let total = u32::try_from(total).expect("chunk count exceeds u32");
    payload
        .chunks(chunk_size)
        .enumerate()
        .map(|(seq, part)| Chunk {
            content_id,
            seq: seq as u32,
            total,
            payload: part.to_vec(),
        })
        .collect()
}

pub fn chunk_frame(chunk: &Chunk, flags: DeliveryFlags) -> Frame {
    Frame::new(
        Header::Chunk(ChunkHeader {
            content_id: chunk.content_id,
            seq: chunk.seq,
            total: chunk.total,
        }),
        flags.pack(),
        chunk.payload.clone(),
    )
}

/// Encoded frames for one delivery: a single Content frame when the payload
/// fits in `chunk_size`, otherwise one Chunk frame per fragment.
pub fn delivery_units(
    item: &ContentItem,
    chunk_size: usize,
    epoch: Epoch,
    req_id: u32,
) -> Result<Vec<Vec<u8>>, FrameError> {
    let flags = DeliveryFlags {
        media: item.media,
        modified: item.modified,
        epoch,
    };
    if item.payload.len() <= chunk_size {
        let frame = Frame::new(
            Header::Content(ContentHeader {
                content_id: item.content_id,
                req_id,
            }),
            flags.pack(),
            item.payload.clone(),
        );
        return Ok(vec![encode_frame(&frame)?]);
    }
    fragment(&item.payload, chunk_size, item.content_id)
        .iter()
        .map(|c| encode_frame(&chunk_frame(c, flags)))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WindowStats {
    pub first_sends: u64,
    pub retransmissions: u64,
    pub acks: u64,
    pub deferred_timeouts: u64,
    pub max_in_flight: usize,
}

#[derive(Debug, Clone, Copy)]
struct InFlight {
    deadline: Millis,
    retries: u32,
    /// A copy went to the offline buffer since the last real transmission.
    buffered: bool,
}

/// Sliding-window sender for the units of one delivery. Unit `i` is
/// acknowledged by an Ack with seq `i` and the window's epoch.
#[derive(Debug, Clone)]
pub struct SendWindow {
    cfg: ArqConfig,
    content_id: ContentId,
    epoch: Epoch,
    units: Vec<Vec<u8>>,
    next: usize,
    in_flight: BTreeMap<u32, InFlight>,
    acked: Vec<bool>,
    acked_count: usize,
    sends: Vec<u32>,
    stats: WindowStats,
}

impl SendWindow {
    pub fn new(cfg: ArqConfig, content_id: ContentId, epoch: Epoch, units: Vec<Vec<u8>>) -> Self {
        assert!(cfg.window_size >= 1, "window_size must be at least 1");
        let n = units.len();
        SendWindow {
            cfg,
            content_id,
            epoch,
            units,
            next: 0,
            in_flight: BTreeMap::new(),
            acked: vec![false; n],
            acked_count: 0,
            sends: vec![0; n],
            stats: WindowStats::default(),
        }
    }

    pub fn content_id(&self) -> ContentId {
        self.content_id
    }

    pub fn epoch(&self) -> Epoch {
        self.epoch
    }

    pub fn total(&self) -> usize {
        self.units.len()
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    pub fn stats(&self) -> WindowStats {
        self.stats
    }

    /// How many times unit `seq` has been put on the wire.
    pub fn sends_of(&self, seq: u32) -> u32 {
        self.sends.get(seq as usize).copied().unwrap_or(0)
    }

    pub fn is_complete(&self) -> bool {
        self.acked_count == self.units.len()
    }

    fn transmit(
        &mut self,
        seq: u32,
        outbox: &mut Outbox,
        link: &mut dyn Link,
        now: Millis,
    ) -> Result<(), TransportError> {
        self.sends[seq as usize] += 1;
        match outbox.send(link, self.units[seq as usize].clone(), now) {
            // A rejected frame is treated as lost; the retransmission timer
            // covers it.
            Ok(_) | Err(TransportError::BufferFull) => Ok(()),
            Err(e) => Err(e),
        }
    }

    /// Sends fresh units while the window has room.
    pub fn pump(
        &mut self,
        outbox: &mut Outbox,
        link: &mut dyn Link,
        now: Millis,
    ) -> Result<(), TransportError> {
        while self.next < self.units.len() && self.in_flight.len() < self.cfg.window_size {
            let seq = self.next as u32;
            self.next += 1;
            self.in_flight.insert(
                seq,
                InFlight {
                    deadline: now + self.cfg.timeout_ms,
                    retries: 0,
                    buffered: false,
                },
            );
            self.stats.first_sends += 1;
            self.transmit(seq, outbox, link, now)?;
        }
        self.stats.max_in_flight = self.stats.max_in_flight.max(self.in_flight.len());
        Ok(())
    }

    /// Returns true when the ack was new for this window.
    pub fn on_ack(&mut self, seq: u32, epoch: Epoch) -> bool {
        if epoch != self.epoch || self.in_flight.remove(&seq).is_none() {
            return false;
        }
        self.acked[seq as usize] = true;
        self.acked_count += 1;
        self.stats.acks += 1;
        true
    }

    /// Retransmits expired units. While the link is down an expired unit is
    /// queued in the offline buffer once and its timer pushed back, without
    /// spending a retry.
    pub fn on_timer(
        &mut self,
        outbox: &mut Outbox,
        link: &mut dyn Link,
        now: Millis,
    ) -> Result<(), TransportError> {
        let expired: Vec<u32> = self
            .in_flight
            .iter()
            .filter(|(_, f)| f.deadline <= now)
            .map(|(&s, _)| s)
            .collect();
        let down = link.state(now) == LinkState::Down;
        for seq in expired {
            let entry = self.in_flight.get_mut(&seq).expect("collected above");
            entry.deadline = now + self.cfg.timeout_ms;
            if down {
                self.stats.deferred_timeouts += 1;
                if !entry.buffered {
                    entry.buffered = true;
                    self.transmit(seq, outbox, link, now)?;
                }
                continue;
            }
            entry.buffered = false;
            if entry.retries >= self.cfg.max_retries {
                return Err(TransportError::DeliveryFailed { seq });
            }
            entry.retries += 1;
            self.stats.retransmissions += 1;
            self.transmit(seq, outbox, link, now)?;
        }
        Ok(())
    }

    pub fn poll(
        &mut self,
        outbox: &mut Outbox,
        link: &mut dyn Link,
        now: Millis,
    ) -> Result<(), TransportError> {
        self.on_timer(outbox, link, now)?;
        self.pump(outbox, link, now)
    }

    pub fn next_deadline(&self) -> Option<Millis> {
        self.in_flight.values().map(|f| f.deadline).min()
    }
}

/// Size-based dispatch of a delivery plan: builds the units and starts
/// sending them.
pub fn dispatch(
    plan: &DeliveryPlan,
    req_id: u32,
    epoch: Epoch,
    cfg: ArqConfig,
    outbox: &mut Outbox,
    link: &mut dyn Link,
    now: Millis,
) -> Result<SendWindow, TransportError> {
    let units = delivery_units(&plan.item, plan.chunk_size, epoch, req_id)?;
    let mut window = SendWindow::new(cfg, plan.item.content_id, epoch, units);
    window.pump(outbox, link, now)?;
    Ok(window)
}

/// Result of feeding one data frame to a [`Receiver`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Received {
    Progress {
        content_id: ContentId,
        received: u32,
        total: u32,
    },
    Complete {
        content_id: ContentId,
        epoch: Epoch,
        media: MediaType,
        modified: bool,
        payload: Vec<u8>,
    },
    /// Frame belongs to an epoch that has been superseded.
    Stale,
    /// Frame repeats a unit of a delivery that already completed.
    Duplicate,
}

#[derive(Debug, Clone)]
struct Stream {
    epoch: Epoch,
    reassembly: Option<Reassembly>,
    complete: bool,
}

/// Receiving half: reassembles chunks per content id, discards superseded
/// epochs, and produces the Ack for every data frame it sees.
#[derive(Debug, Clone, Default)]
pub struct Receiver {
    streams: HashMap<ContentId, Stream>,
}

impl Receiver {
    pub fn new() -> Self {
        Receiver::default()
    }

    pub fn current_epoch(&self, id: &ContentId) -> Option<Epoch> {
        self.streams.get(id).map(|s| s.epoch)
    }

    /// Discards any state for `id` older than `epoch`.
    pub fn supersede(&mut self, id: ContentId, epoch: Epoch) {
        match self.streams.get(&id) {
            Some(s) if !epoch.is_newer_than(s.epoch) => {}
            _ => {
                self.streams.insert(
                    id,
                    Stream {
                        epoch,
                        reassembly: None,
                        complete: false,
                    },
                );
            }
        }
    }

    /// Handles a Content or Chunk frame. The returned Ack must be sent back
    /// whatever the outcome, so the sender stops retransmitting.
    pub fn on_data(&mut self, frame: &Frame) -> Result<(Received, Frame), TransportError> {
        let flags = frame.delivery_flags();
        let (content_id, seq, total) = match &frame.header {
            Header::Content(h) => (h.content_id, 0, 1),
            Header::Chunk(h) => (h.content_id, h.seq, h.total),
            other => {
                return Err(TransportError::Protocol(format!(
                    "{:?} is not a data frame",
                    other.frame_type()
                )))
            }
        };
        let ack = Frame::ack(content_id, seq, flags.epoch);
        let stream = self.streams.entry(content_id).or_insert(Stream {
            epoch: flags.epoch,
            reassembly: None,
            complete: false,
        });
        if flags.epoch.is_newer_than(stream.epoch) {
            *stream = Stream {
                epoch: flags.epoch,
                reassembly: None,
                complete: false,
            };
        } else if flags.epoch != stream.epoch {
            return Ok((Received::Stale, ack));
        }
        if stream.complete {
            return Ok((Received::Duplicate, ack));
        }
        let reassembly = stream
            .reassembly
            .get_or_insert_with(|| Reassembly::new(content_id, total));
        let chunk = Chunk {
            content_id,
            seq,
            total,
            payload: frame.payload.clone(),
        };
        let outcome = reassembly.integrate(&chunk).map_err(|e: ReassemblyError| {
            TransportError::Protocol(format!("reassembly of {content_id}: {e}"))
        })?;
        let received = match outcome {
            Integration::Pending { received, total } => Received::Progress {
                content_id,
                received,
                total,
            },
            Integration::Complete(payload) => {
                stream.complete = true;
                stream.reassembly = None;
                Received::Complete {
                    content_id,
                    epoch: flags.epoch,
                    media: flags.media,
                    modified: flags.modified,
                    payload,
                }
            }
        };
        Ok((received, ack))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReliableReport {
    pub payload: Vec<u8>,
    pub data_sends: u64,
    pub retransmissions: u64,
    pub acks: u64,
    pub finished_at: Millis,
    pub max_in_flight: usize,
}

/// Delivers `chunks` from `sender` to `peer`, with `peer` answering every
/// frame with an Ack, stepping virtual time from event to event. Intended
/// for simulated links.
pub fn send_reliable(
    cfg: ArqConfig,
    chunks: &[Chunk],
    media: MediaType,
    sender: &mut dyn Link,
    peer: &mut dyn Link,
    start: Millis,
) -> Result<ReliableReport, TransportError> {
    let Some(first) = chunks.first() else {
        return Err(TransportError::Protocol("no chunks to send".into()));
    };
    let epoch = Epoch::default();
    let flags = DeliveryFlags {
        media,
        modified: false,
        epoch,
    };
    let units = chunks
        .iter()
        .map(|c| encode_frame(&chunk_frame(c, flags)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut window = SendWindow::new(cfg, first.content_id, epoch, units);
    let mut out = Outbox::default();
    let mut peer_out = Outbox::default();
    let mut receiver = Receiver::new();
    let mut payload = None;
    let mut now = start;
    window.pump(&mut out, sender, now)?;
    loop {
        for bytes in peer.recv(now)? {
            let Ok(frame) = decode_frame(&bytes) else {
                continue;
            };
            let (got, ack) = receiver.on_data(&frame)?;
            if let Received::Complete { payload: p, .. } = got {
                payload = Some(p);
            }
            peer_out.send_frame(peer, &ack, now)?;
        }
        peer_out.flush(peer, now)?;
        for bytes in sender.recv(now)? {
            if let Ok(Frame {
                header: Header::Ack(a),
                flags,
                ..
            }) = decode_frame(&bytes)
            {
                window.on_ack(a.seq, DeliveryFlags::unpack(flags).epoch);
            }
        }
        out.flush(sender, now)?;
        if window.is_complete() {
            break;
        }
        window.poll(&mut out, sender, now)?;
        let next = [
            window.next_deadline(),
            sender.next_event(now),
            peer.next_event(now),
        ]
        .into_iter()
        .flatten()
        .filter(|&t| t > now)
        .min();
        match next {
            Some(t) => now = t,
            None => {
                return Err(TransportError::Protocol(
                    "simulation stalled with chunks outstanding".into(),
                ))
            }
        }
    }
    let stats = window.stats();
    Ok(ReliableReport {
        payload: payload.unwrap_or_default(),
        data_sends: stats.first_sends + stats.retransmissions,
        retransmissions: stats.retransmissions,
        acks: stats.acks,
        finished_at: now,
        max_in_flight: stats.max_in_flight,
    })
}
