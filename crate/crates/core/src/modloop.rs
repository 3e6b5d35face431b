//! Modification layer.
//!
//! Chunks are integrated back into whole content, routed either straight to
//! the media manager or through the modifier, and every candidate is checked
//! by [`decide`] before it leaves the layer. A `TooLarge` rejection is
//! repaired by appending a truncation bound (the device limit, then half of
//! it, and so on) for at most `max_mod_retries` extra rounds.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{Epoch, ErrorCode};
use crate::link::{Link, Millis};
use crate::transport::{delivery_units, ArqConfig, Outbox, SendWindow, TransportError};
use crate::types::{Chunk, ContentId, ContentItem, ContentRequest, InvalidValue, MediaType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transform {
    /// Keep at most this many leading bytes.
    Truncate(u32),
    /// ASCII upper-casing; `Data` only.
    ToUpper,
    /// Drop every `<...>` span, including an unterminated trailing one; `Data` only.
    StripMarkup,
    /// Keep bytes `0, n, 2n, ...`; `Graph`, `Image` and `Voice` only.
    DownsampleBytes(u32),
}

impl Transform {
    pub fn kind_code(self) -> u8 {
        match self {
            Transform::Truncate(_) => 1,
            Transform::ToUpper => 2,
            Transform::StripMarkup => 3,
            Transform::DownsampleBytes(_) => 4,
        }
    }

    pub fn param(self) -> u32 {
        match self {
            Transform::Truncate(n) | Transform::DownsampleBytes(n) => n,
            Transform::ToUpper | Transform::StripMarkup => 0,
        }
    }

    pub fn from_wire(kind: u8, param: u32) -> Result<Self, InvalidValue> {
        let t = match kind {
            1 => Transform::Truncate(param),
            2 => Transform::ToUpper,
            3 => Transform::StripMarkup,
            4 => Transform::DownsampleBytes(param),
            other => {
                return Err(InvalidValue::new(
                    "transform",
                    format!("unknown kind {other}"),
                ))
            }
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(self) -> Result<(), InvalidValue> {
        if let Transform::DownsampleBytes(0) = self {
            return Err(InvalidValue::new(
                "transform",
                "downsample stride must be >= 1",
            ));
        }
        Ok(())
    }

    pub fn name(self) -> &'static str {
        match self {
            Transform::Truncate(_) => "truncate",
            Transform::ToUpper => "to_upper",
            Transform::StripMarkup => "strip_markup",
            Transform::DownsampleBytes(_) => "downsample",
        }
    }

    pub fn legal_for(self, media: MediaType) -> bool {
        match self {
            Transform::Truncate(_) => true,
            Transform::ToUpper | Transform::StripMarkup => media == MediaType::Data,
            Transform::DownsampleBytes(_) => media != MediaType::Data,
        }
    }

    pub fn apply(self, payload: &[u8]) -> Vec<u8> {
        match self {
            Transform::Truncate(n) => payload[..payload.len().min(n as usize)].to_vec(),
            Transform::ToUpper => payload.to_ascii_uppercase(),
            Transform::StripMarkup => {
                let mut out = Vec::with_capacity(payload.len());
                let mut in_tag = false;
                for &b in payload {
                    match (in_tag, b) {
                        (false, b'<') => in_tag = true,
                        (false, _) => out.push(b),
                        (true, b'>') => in_tag = false,
                        (true, _) => {}
                    }
                }
                out
            }
            Transform::DownsampleBytes(n) => {
                payload.iter().step_by(n.max(1) as usize).copied().collect()
            }
        }
    }

    /// Observable postcondition of this transform on delivered content.
    pub fn holds_on(self, item: &ContentItem) -> bool {
        match self {
            Transform::Truncate(n) => item.payload.len() <= n as usize,
            Transform::ToUpper => !item.payload.iter().any(u8::is_ascii_lowercase),
            Transform::StripMarkup => !item.payload.contains(&b'<'),
            Transform::DownsampleBytes(_) => item.modified,
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.name(), self.param())
    }
}

impl FromStr for Transform {
    type Err = InvalidValue;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, param) = s.trim().split_once(':').unwrap_or((s.trim(), "0"));
        let param: u32 = param
            .trim()
            .parse()
            .map_err(|_| InvalidValue::new("transform", format!("bad parameter in {s:?}")))?;
        let t = match kind.trim().to_ascii_lowercase().as_str() {
            "truncate" => Transform::Truncate(param),
            "to_upper" | "toupper" | "upper" => Transform::ToUpper,
            "strip_markup" | "stripmarkup" => Transform::StripMarkup,
            "downsample" | "downsample_bytes" => Transform::DownsampleBytes(param),
            other => {
                return Err(InvalidValue::new(
                    "transform",
                    format!("unknown kind {other:?}"),
                ))
            }
        };
        t.validate()?;
        Ok(t)
    }
}

/// Non-empty, ordered list of transforms requested by the client.
///
/// Text form is a comma-separated list of `kind:param` items, e.g.
/// `truncate:100,strip_markup:0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ModificationSpec {
    transforms: Vec<Transform>,
}

impl ModificationSpec {
    pub fn new(transforms: Vec<Transform>) -> Result<Self, InvalidValue> {
        let spec = ModificationSpec { transforms };
        spec.validate()?;
        Ok(spec)
    }

    pub fn single(t: Transform) -> Self {
        ModificationSpec {
            transforms: vec![t],
        }
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn validate(&self) -> Result<(), InvalidValue> {
        if self.transforms.is_empty() {
            return Err(InvalidValue::new(
                "modification spec",
                "transform list is empty",
            ));
        }
        if self.transforms.len() > u8::MAX as usize {
            return Err(InvalidValue::new(
                "modification spec",
                "more than 255 transforms",
            ));
        }
        self.transforms.iter().try_for_each(|t| t.validate())
    }

    /// Copy with `t` appended.
    pub fn then(&self, t: Transform) -> Self {
        let mut transforms = self.transforms.clone();
        transforms.push(t);
        ModificationSpec { transforms }
    }
}

impl fmt::Display for ModificationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.transforms.iter().map(Transform::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for ModificationSpec {
    type Err = InvalidValue;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let transforms = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>, _>>()?;
        ModificationSpec::new(transforms)
    }
}

impl TryFrom<String> for ModificationSpec {
    type Error = InvalidValue;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ModificationSpec> for String {
    fn from(spec: ModificationSpec) -> String {
        spec.to_string()
    }
}

// ---------------------------------------------------------------------------
// Content integration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReassemblyError {
    #[error("chunk for {got_id}/{got_total} does not belong to reassembly {want_id}/{want_total}")]
    ChunkMismatch {
        want_id: ContentId,
        want_total: u32,
        got_id: ContentId,
        got_total: u32,
    },
    #[error("conflicting payloads for seq {seq}")]
    PayloadSizeConflict { seq: u32 },
    #[error("seq {seq} outside 0..{total}")]
    SeqOutOfRange { seq: u32, total: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Integration {
    Pending { received: u32, total: u32 },
    Complete(Vec<u8>),
}

/// Reassembly state for one content delivery.
#[derive(Debug, Clone)]
pub struct Reassembly {
    content_id: ContentId,
    total: u32,
    received: BTreeMap<u32, Vec<u8>>,
}

impl Reassembly {
    pub fn new(content_id: ContentId, total: u32) -> Self {
        Reassembly {
            content_id,
            total: total.max(1),
            received: BTreeMap::new(),
        }
    }

    pub fn content_id(&self) -> ContentId {
        self.content_id
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn received(&self) -> u32 {
        self.received.len() as u32
    }

    pub fn is_complete(&self) -> bool {
        self.received() == self.total
    }

    /// Adds one chunk. Duplicates are ignored; chunks are concatenated in seq
    /// order once every seq is present.
    pub fn integrate(&mut self, chunk: &Chunk) -> Result<Integration, ReassemblyError> {
        if chunk.content_id != self.content_id || chunk.total != self.total {
            return Err(ReassemblyError::ChunkMismatch {
                want_id: self.content_id,
                want_total: self.total,
                got_id: chunk.content_id,
                got_total: chunk.total,
            });
        }
        if chunk.seq >= self.total {
            return Err(ReassemblyError::SeqOutOfRange {
                seq: chunk.seq,
                total: self.total,
            });
        }
        match self.received.get(&chunk.seq) {
            Some(existing) if *existing != chunk.payload => {
                return Err(ReassemblyError::PayloadSizeConflict { seq: chunk.seq })
            }
            Some(_) => {}
            None => {
                self.received.insert(chunk.seq, chunk.payload.clone());
            }
        }
        if self.is_complete() {
            Ok(Integration::Complete(
                self.received.values().flatten().copied().collect(),
            ))
        } else {
            Ok(Integration::Pending {
                received: self.received(),
                total: self.total,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Routing, modification, decision
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    MediaManager,
    ContentModifier,
}

pub fn route(_content: &ContentItem, spec: Option<&ModificationSpec>) -> Destination {
    match spec {
        None => Destination::MediaManager,
        Some(_) => Destination::ContentModifier,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModifyError {
    #[error("transform {transform} is not legal for {media} content")]
    IllegalTransform {
        transform: Transform,
        media: MediaType,
    },
}

/// Applies `spec` left to right. Media type and content id are preserved.
pub fn modify(content: &ContentItem, spec: &ModificationSpec) -> Result<ContentItem, ModifyError> {
    if let Some(t) = spec
        .transforms()
        .iter()
        .find(|t| !t.legal_for(content.media))
    {
        return Err(ModifyError::IllegalTransform {
            transform: *t,
            media: content.media,
        });
    }
    let payload = spec
        .transforms()
        .iter()
        .fold(content.payload.clone(), |p, t| t.apply(&p));
    Ok(ContentItem {
        payload,
        modified: true,
        ..content.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    WrongContent,
    UnsupportedMedia,
    TooLarge,
    SpecUnsatisfied,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RejectReason::WrongContent => "wrong content",
            RejectReason::UnsupportedMedia => "unsupported media",
            RejectReason::TooLarge => "too large",
            RejectReason::SpecUnsatisfied => "modification not satisfied",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject(RejectReason),
}

/// Accepts content only if it is the requested item, the device can show
/// it, it fits the device limit, and every requested transform's
/// postcondition holds.
pub fn decide(content: &ContentItem, req: &ContentRequest) -> Decision {
    if content.url != req.url {
        return Decision::Reject(RejectReason::WrongContent);
    }
    if !req.profile.supports(content.media) {
        return Decision::Reject(RejectReason::UnsupportedMedia);
    }
    if content.payload.len() > req.profile.max_content_bytes as usize {
        return Decision::Reject(RejectReason::TooLarge);
    }
    if let Some(spec) = &req.mod_spec {
        if !spec.transforms().iter().all(|t| t.holds_on(content)) {
            return Decision::Reject(RejectReason::SpecUnsatisfied);
        }
    }
    Decision::Accept
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModLoopConfig {
    pub max_mod_retries: u32,
}

impl Default for ModLoopConfig {
    fn default() -> Self {
        ModLoopConfig { max_mod_retries: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModOutcome {
    pub item: ContentItem,
    pub decide_calls: u32,
    /// Spec that produced `item`, including any appended truncation.
    pub applied: Option<ModificationSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModFailure {
    #[error(transparent)]
    Illegal(#[from] ModifyError),
    #[error("content rejected: {reason} after {decide_calls} decision(s)")]
    Rejected {
        reason: RejectReason,
        decide_calls: u32,
    },
}

impl ModFailure {
    pub fn error_code(&self) -> ErrorCode {
        match self {
            ModFailure::Rejected {
                reason: RejectReason::UnsupportedMedia,
                ..
            } => ErrorCode::UnsupportedMedia,
            _ => ErrorCode::ModFailed,
        }
    }
}

/// Route, optionally modify, then decide; retry `TooLarge` rejections with a
/// shrinking truncation bound.
pub fn run_mod_loop(
    content: &ContentItem,
    req: &ContentRequest,
    cfg: &ModLoopConfig,
) -> Result<ModOutcome, ModFailure> {
    let mut bound: Option<u32> = None;
    let mut calls = 0;
    loop {
        let spec = match (&req.mod_spec, bound) {
            (None, None) => None,
            (Some(s), None) => Some(s.clone()),
            (None, Some(b)) => Some(ModificationSpec::single(Transform::Truncate(b))),
            (Some(s), Some(b)) => Some(s.then(Transform::Truncate(b))),
        };
        let candidate = match route(content, spec.as_ref()) {
            Destination::MediaManager => content.clone(),
            Destination::ContentModifier => {
                modify(content, spec.as_ref().expect("modifier route has a spec"))?
            }
        };
        calls += 1;
        match decide(&candidate, req) {
            Decision::Accept => {
                return Ok(ModOutcome {
                    item: candidate,
                    decide_calls: calls,
                    applied: spec,
                })
            }
            Decision::Reject(RejectReason::TooLarge) if calls <= cfg.max_mod_retries => {
                bound = Some(match bound {
                    None => req.profile.max_content_bytes,
                    Some(b) => b / 2,
                });
            }
            Decision::Reject(reason) => {
                return Err(ModFailure::Rejected {
                    reason,
                    decide_calls: calls,
                })
            }
        }
    }
}

/// Fragments accepted content and starts sending it; the returned window
/// finishes the delivery as acks arrive.
#[allow(clippy::too_many_arguments)]
pub fn refragment_and_send(
    content: &ContentItem,
    chunk_size: usize,
    epoch: Epoch,
    req_id: u32,
    arq: ArqConfig,
    outbox: &mut Outbox,
    link: &mut dyn Link,
    now: Millis,
) -> Result<SendWindow, TransportError> {
    let units = delivery_units(content, chunk_size, epoch, req_id)?;
    let mut window = SendWindow::new(arq, content.content_id, epoch, units);
    window.pump(outbox, link, now)?;
    Ok(window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{DeviceProfile, NetworkStatus};

    fn item(media: MediaType, payload: &[u8]) -> ContentItem {
        ContentItem {
            content_id: ContentId([1; 16]),
            url: "lec/1".into(),
            media,
            payload: payload.to_vec(),
            created_at: 0,
            modified: false,
        }
    }

    fn request(max: u32, spec: Option<&str>) -> ContentRequest {
        let profile = DeviceProfile {
            max_content_bytes: max,
            ..DeviceProfile::default()
        };
        let mut req = ContentRequest::new("lec/1", profile, NetworkStatus::default());
        req.mod_spec = spec.map(|s| s.parse().unwrap());
        req
    }

    fn chunk(seq: u32, total: u32, payload: &[u8]) -> Chunk {
        Chunk {
            content_id: ContentId([1; 16]),
            seq,
            total,
            payload: payload.to_vec(),
        }
    }

    #[test]
    fn out_of_order_integration() {
        let mut r = Reassembly::new(ContentId([1; 16]), 3);
        assert_eq!(
            r.integrate(&chunk(2, 3, b"e")).unwrap(),
            Integration::Pending {
                received: 1,
                total: 3
            }
        );
        r.integrate(&chunk(0, 3, b"ab")).unwrap();
        assert_eq!(
            r.integrate(&chunk(1, 3, b"cd")).unwrap(),
            Integration::Complete(b"abcde".to_vec())
        );
    }

    #[test]
    fn duplicate_is_idempotent() {
        let mut r = Reassembly::new(ContentId([1; 16]), 2);
        r.integrate(&chunk(0, 2, b"ab")).unwrap();
        assert_eq!(
            r.integrate(&chunk(0, 2, b"ab")).unwrap(),
            Integration::Pending {
                received: 1,
                total: 2
            }
        );
        assert_eq!(
            r.integrate(&chunk(0, 2, b"zz")).unwrap_err(),
            ReassemblyError::PayloadSizeConflict { seq: 0 }
        );
    }

    #[test]
    fn mismatched_total() {
        let mut r = Reassembly::new(ContentId([1; 16]), 2);
        assert!(matches!(
            r.integrate(&chunk(0, 3, b"ab")),
            Err(ReassemblyError::ChunkMismatch { .. })
        ));
    }

    #[test]
    fn routing() {
        let c = item(MediaType::Data, b"x");
        assert_eq!(route(&c, None), Destination::MediaManager);
        let spec = ModificationSpec::single(Transform::Truncate(10));
        assert_eq!(route(&c, Some(&spec)), Destination::ContentModifier);
        assert!(ModificationSpec::new(vec![]).is_err());
        assert!("".parse::<ModificationSpec>().is_err());
    }

    #[test]
    fn transforms() {
        let spec = |s: &str| s.parse::<ModificationSpec>().unwrap();
        let out = modify(&item(MediaType::Data, b"hello"), &spec("truncate:3")).unwrap();
        assert_eq!(out.payload, b"hel");
        assert!(out.modified);
        assert_eq!(out.content_id, ContentId([1; 16]));
        let out = modify(
            &item(MediaType::Image, &[0, 1, 2, 3, 4, 5]),
            &spec("downsample:2"),
        )
        .unwrap();
        assert_eq!(out.payload, [0, 2, 4]);
        assert_eq!(
            modify(&item(MediaType::Image, b"x"), &spec("to_upper:0")).unwrap_err(),
            ModifyError::IllegalTransform {
                transform: Transform::ToUpper,
                media: MediaType::Image
            }
        );
        let out = modify(
            &item(MediaType::Data, b"<p a=\"1\">hi</p> there <b"),
            &spec("strip_markup:0,to_upper:0"),
        )
        .unwrap();
        assert_eq!(out.payload, b"HI THERE ");
    }

    #[test]
    fn spec_text_roundtrip() {
        let s: ModificationSpec = "truncate:100, strip_markup:0".parse().unwrap();
        assert_eq!(s.to_string(), "truncate:100,strip_markup:0");
        assert_eq!(s.to_string().parse::<ModificationSpec>().unwrap(), s);
        assert!("downsample:0".parse::<ModificationSpec>().is_err());
        assert!("explode:1".parse::<ModificationSpec>().is_err());
    }

    #[test]
    fn decisions() {
        assert_eq!(
            decide(
                &item(MediaType::Data, &[b'x'; 500]),
                &request(1024, Some("truncate:600"))
            ),
            Decision::Accept
        );
        assert_eq!(
            decide(&item(MediaType::Data, &[b'x'; 2048]), &request(1024, None)),
            Decision::Reject(RejectReason::TooLarge)
        );
        assert_eq!(
            decide(
                &item(MediaType::Data, &[b'x'; 11]),
                &request(1024, Some("truncate:10"))
            ),
            Decision::Reject(RejectReason::SpecUnsatisfied)
        );
        let mut other = item(MediaType::Data, b"x");
        other.url = "lec/2".into();
        assert_eq!(
            decide(&other, &request(1024, None)),
            Decision::Reject(RejectReason::WrongContent)
        );
    }

    #[test]
    fn fits_first_time() {
        let out = run_mod_loop(
            &item(MediaType::Data, b"small"),
            &request(1024, None),
            &ModLoopConfig::default(),
        )
        .unwrap();
        assert_eq!(out.decide_calls, 1);
        assert_eq!(out.item.payload, b"small");
        assert!(!out.item.modified);
    }

    #[test]
    fn auto_truncate_fallback() {
        let payload: Vec<u8> = (0..4096u32).map(|i| b'a' + (i % 26) as u8).collect();
        let out = run_mod_loop(
            &item(MediaType::Data, &payload),
            &request(1000, None),
            &ModLoopConfig::default(),
        )
        .unwrap();
        assert_eq!(out.decide_calls, 2);
        assert_eq!(out.item.payload, &payload[..1000]);
        assert_eq!(
            out.applied,
            Some(ModificationSpec::single(Transform::Truncate(1000)))
        );
    }

    #[test]
    fn unsupported_media_is_terminal() {
        let mut req = request(1024, None);
        req.profile.supported_media = [MediaType::Data].into_iter().collect();
        let err = run_mod_loop(
            &item(MediaType::Voice, b"..."),
            &req,
            &ModLoopConfig::default(),
        )
        .unwrap_err();
        assert_eq!(
            err,
            ModFailure::Rejected {
                reason: RejectReason::UnsupportedMedia,
                decide_calls: 1
            }
        );
        assert_eq!(err.error_code(), ErrorCode::UnsupportedMedia);
    }

    #[test]
    fn exhausted_retries() {
        // A zero retry budget turns the first TooLarge into a failure.
        let err = run_mod_loop(
            &item(MediaType::Data, &[b'x'; 50]),
            &request(10, None),
            &ModLoopConfig { max_mod_retries: 0 },
        )
        .unwrap_err();
        assert_eq!(
            err,
            ModFailure::Rejected {
                reason: RejectReason::TooLarge,
                decide_calls: 1
            }
        );
        assert_eq!(err.error_code(), ErrorCode::ModFailed);
    }

    #[test]
    fn refragment_over_link() {
        use crate::frame::{decode_frame, FrameType};
        use crate::netsim::{LinkConfig, SimLink};

        let link = SimLink::new(LinkConfig::lossless(1));
        let (mut tx, mut rx) = link.split();
        let mut out = Outbox::default();
        let big = item(MediaType::Data, &[b'x'; 10000]);
        let w = refragment_and_send(
            &big,
            4096,
            Epoch::default(),
            1,
            ArqConfig::default(),
            &mut out,
            &mut tx,
            0,
        )
        .unwrap();
        assert_eq!(w.total(), 3);
        let kinds: Vec<_> = rx
            .recv(100)
            .unwrap()
            .iter()
            .map(|b| decode_frame(b).unwrap().frame_type())
            .collect();
        assert_eq!(kinds, [FrameType::Chunk; 3]);

        let small = item(MediaType::Data, &[b'x'; 100]);
        refragment_and_send(
            &small,
            4096,
            Epoch::default(),
            2,
            ArqConfig::default(),
            &mut out,
            &mut tx,
            100,
        )
        .unwrap();
        let kinds: Vec<_> = rx
            .recv(200)
            .unwrap()
            .iter()
            .map(|b| decode_frame(b).unwrap().frame_type())
            .collect();
        assert_eq!(kinds, [FrameType::Content]);

        let down = SimLink::new(LinkConfig {
            outage_schedule: vec![(0, 1000)],
            ..LinkConfig::default()
        });
        let (mut tx, _rx) = down.split();
        let mut out = Outbox::default();
        refragment_and_send(
            &big,
            4096,
            Epoch::default(),
            3,
            ArqConfig::default(),
            &mut out,
            &mut tx,
            0,
        )
        .unwrap();
        assert_eq!(out.buffer().len(), 3);
    }
}
