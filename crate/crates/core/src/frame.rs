//! Binary wire frames.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "MCL1"
//! 4       1     version (0x01)
//! 5       1     type
//! 6       1     flags
//! 7       2     header_len (u16, big-endian)
//! 9       4     payload_len (u32, big-endian)
//! 13      h     type-specific header record
//! 13+h    p     payload
//! 13+h+p  4     CRC32 over bytes 0..13+h+p
//! ```
//!
//! All integers are big-endian.

use std::fmt;

use thiserror::Error;

use crate::modloop::{ModificationSpec, Transform};
use crate::types::{
    ContentId, ContentRequest, DeviceProfile, LinkQuality, MediaType, NetworkStatus,
};

pub const MAGIC: [u8; 4] = *b"MCL1";
pub const VERSION: u8 = 1;
pub const FIXED_HEADER_LEN: usize = 13;
pub const CRC_LEN: usize = 4;

/// CRC-32 (IEEE 802.3 polynomial, reflected, init and final xor 0xFFFFFFFF).
pub fn checksum(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameType {
    Request = 0x01,
    Content = 0x02,
    Chunk = 0x03,
    Ack = 0x04,
    ModRequest = 0x05,
    Error = 0x06,
    NetStatus = 0x07,
}

impl FrameType {
    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0x01 => FrameType::Request,
            0x02 => FrameType::Content,
            0x03 => FrameType::Chunk,
            0x04 => FrameType::Ack,
            0x05 => FrameType::ModRequest,
            0x06 => FrameType::Error,
            0x07 => FrameType::NetStatus,
            _ => return None,
        })
    }
}

/// Delivery generation of one content item. Five bits wide on the wire, so
/// ordering is serial-number arithmetic modulo 32.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Epoch(u8);

impl Epoch {
    pub const MODULUS: u8 = 32;

    pub fn new(value: u8) -> Self {
        Epoch(value % Self::MODULUS)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn next(self) -> Self {
        Epoch::new(self.0.wrapping_add(1))
    }

    /// True when `self` is ahead of `other` by 1..16 steps.
    pub fn is_newer_than(self, other: Epoch) -> bool {
        let diff = self.0.wrapping_sub(other.0) % Self::MODULUS;
        diff != 0 && diff < Self::MODULUS / 2
    }
}

impl fmt::Display for Epoch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Flag byte layout for Content, Chunk and Ack frames:
/// bits 0-1 media type, bit 2 modified, bits 3-7 epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeliveryFlags {
    pub media: MediaType,
    pub modified: bool,
    pub epoch: Epoch,
}

impl DeliveryFlags {
    pub fn pack(self) -> u8 {
        self.media.code() | (u8::from(self.modified) << 2) | (self.epoch.value() << 3)
    }

    pub fn unpack(flags: u8) -> Self {
        DeliveryFlags {
            media: MediaType::from_code(flags & 0b11).expect("two bits always map to a media type"),
            modified: flags & 0b100 != 0,
            epoch: Epoch::new(flags >> 3),
        }
    }

    pub fn epoch_only(epoch: Epoch) -> u8 {
        epoch.value() << 3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCode {
    NotFound = 1,
    UnsupportedMedia = 2,
    ModFailed = 3,
    UnknownContent = 4,
    BadRequest = 5,
}

impl ErrorCode {
    pub fn from_code(code: u16) -> Option<Self> {
        Some(match code {
            1 => ErrorCode::NotFound,
            2 => ErrorCode::UnsupportedMedia,
            3 => ErrorCode::ModFailed,
            4 => ErrorCode::UnknownContent,
            5 => ErrorCode::BadRequest,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorCode::NotFound => "NOT_FOUND",
            ErrorCode::UnsupportedMedia => "UNSUPPORTED_MEDIA",
            ErrorCode::ModFailed => "MOD_FAILED",
            ErrorCode::UnknownContent => "UNKNOWN_CONTENT",
            ErrorCode::BadRequest => "BAD_REQUEST",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Seq value an Ack carries when it acknowledges a ModRequest rather than a
/// data unit.
pub const MOD_ACK_SEQ: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestHeader {
    pub req_id: u32,
    pub request: ContentRequest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContentHeader {
    pub content_id: ContentId,
    pub req_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkHeader {
    pub content_id: ContentId,
    pub seq: u32,
    pub total: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AckHeader {
    pub content_id: ContentId,
    pub seq: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModRequestHeader {
    pub content_id: ContentId,
    pub spec: ModificationSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErrorHeader {
    pub req_id: u32,
    pub code: ErrorCode,
    pub content_id: ContentId,
}

/// Type-specific header record. The variant fixes the frame type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Header {
    Request(RequestHeader),
    Content(ContentHeader),
    Chunk(ChunkHeader),
    Ack(AckHeader),
    ModRequest(ModRequestHeader),
    Error(ErrorHeader),
    NetStatus(NetworkStatus),
}

impl Header {
    pub fn frame_type(&self) -> FrameType {
        match self {
            Header::Request(_) => FrameType::Request,
            Header::Content(_) => FrameType::Content,
            Header::Chunk(_) => FrameType::Chunk,
            Header::Ack(_) => FrameType::Ack,
            Header::ModRequest(_) => FrameType::ModRequest,
            Header::Error(_) => FrameType::Error,
            Header::NetStatus(_) => FrameType::NetStatus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub flags: u8,
    pub header: Header,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(header: Header, flags: u8, payload: Vec<u8>) -> Self {
        Frame {
            flags,
            header,
            payload,
        }
    }

    pub fn frame_type(&self) -> FrameType {
        self.header.frame_type()
    }

    pub fn ack(content_id: ContentId, seq: u32, epoch: Epoch) -> Self {
        Frame::new(
            Header::Ack(AckHeader { content_id, seq }),
            DeliveryFlags::epoch_only(epoch),
            Vec::new(),
        )
    }

    pub fn error(req_id: u32, code: ErrorCode, content_id: ContentId, message: &str) -> Self {
        Frame::new(
            Header::Error(ErrorHeader {
                req_id,
                code,
                content_id,
            }),
            0,
            message.as_bytes().to_vec(),
        )
    }

    pub fn delivery_flags(&self) -> DeliveryFlags {
        DeliveryFlags::unpack(self.flags)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("payload of {len} bytes exceeds the 2^32-1 limit")]
    OversizeFrame { len: usize },
    #[error("header record of {len} bytes exceeds the 2^16-1 limit")]
    OversizeHeader { len: usize },
    #[error("invalid {what} for encoding: {reason}")]
    InvalidField { what: &'static str, reason: String },
    #[error("bad magic at offset {offset}")]
    BadMagic { offset: usize },
    #[error("unsupported version {found} at offset {offset}")]
    BadVersion { offset: usize, found: u8 },
    #[error("frame truncated: need {needed} bytes, have {available} (offset {offset})")]
    TruncatedFrame {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("checksum mismatch at offset {offset}")]
    ChecksumMismatch { offset: usize },
    #[error("unknown frame type 0x{found:02x} at offset {offset}")]
    UnknownType { offset: usize, found: u8 },
    #[error("malformed header at offset {offset}: {reason}")]
    MalformedHeader { offset: usize, reason: String },
    #[error("{extra} trailing bytes after frame at offset {offset}")]
    TrailingBytes { offset: usize, extra: usize },
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn bytes(&mut self, v: &[u8]) {
        self.0.extend_from_slice(v);
    }
    fn short_str(&mut self, what: &'static str, s: &str) -> Result<(), FrameError> {
        let len = u16::try_from(s.len()).map_err(|_| FrameError::InvalidField {
            what,
            reason: format!("{} bytes is longer than 65535", s.len()),
        })?;
        self.u16(len);
        self.bytes(s.as_bytes());
        Ok(())
    }
    fn spec(&mut self, spec: &ModificationSpec) {
        self.u8(spec.transforms().len() as u8);
        for t in spec.transforms() {
            self.u8(t.kind_code());
            self.u32(t.param());
        }
    }
}

fn encode_header(header: &Header) -> Result<Vec<u8>, FrameError> {
    let mut w = Writer(Vec::new());
    match header {
        Header::Request(h) => {
            let r = &h.request;
            r.validate().map_err(|e| FrameError::InvalidField {
                what: "request",
                reason: e.to_string(),
            })?;
            w.u32(h.req_id);
            w.short_str("url", &r.url)?;
            w.u8(r.net.quality.code());
            w.u32(r.net.last_rtt_ms);
            w.u8(r.net.last_loss_pct);
            w.short_str("device_id", &r.profile.device_id)?;
            w.u32(r.profile.screen_w);
            w.u32(r.profile.screen_h);
            w.u8(r.profile.media_mask());
            w.u32(r.profile.max_content_bytes);
            w.short_str("os_tag", &r.profile.os_tag)?;
            w.u8(r.profile.connection_class.code());
            match &r.mod_spec {
                Some(spec) => w.spec(spec),
                None => w.u8(0),
            }
        }
        Header::Content(h) => {
            w.bytes(&h.content_id.0);
            w.u32(h.req_id);
        }
        Header::Chunk(h) => {
            if h.total == 0 || h.seq >= h.total {
                return Err(FrameError::InvalidField {
                    what: "chunk header",
                    reason: format!("seq {} outside 0..{}", h.seq, h.total),
                });
            }
            w.bytes(&h.content_id.0);
            w.u32(h.seq);
            w.u32(h.total);
        }
        Header::Ack(h) => {
            w.bytes(&h.content_id.0);
            w.u32(h.seq);
        }
        Header::ModRequest(h) => {
            w.bytes(&h.content_id.0);
            w.spec(&h.spec);
        }
        Header::Error(h) => {
            w.u32(h.req_id);
            w.u16(h.code as u16);
            w.bytes(&h.content_id.0);
        }
        Header::NetStatus(n) => {
            w.u8(n.quality.code());
            w.u32(n.last_rtt_ms);
            w.u8(n.last_loss_pct);
        }
    }
    Ok(w.0)
}

pub(crate) fn payload_len_field(len: usize) -> Result<u32, FrameError> {
    u32::try_from(len).map_err(|_| FrameError::OversizeFrame { len })
}

/// Serialises a frame. The same frame always yields the same bytes.
pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, FrameError> {
    let header = encode_header(&frame.header)?;
    let header_len = u16::try_from(header.len())
        .map_err(|_| FrameError::OversizeHeader { len: header.len() })?;
    let payload_len = payload_len_field(frame.payload.len())?;

    let mut out =
        Vec::with_capacity(FIXED_HEADER_LEN + header.len() + frame.payload.len() + CRC_LEN);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(frame.frame_type() as u8);
    out.push(frame.flags);
    out.extend_from_slice(&header_len.to_be_bytes());
    out.extend_from_slice(&payload_len.to_be_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&frame.payload);
    let crc = checksum(&out);
    out.extend_from_slice(&crc.to_be_bytes());
    Ok(out)
}

/// Total encoded length announced by the fixed header at the start of
/// `buf`, or `None` when fewer than 13 bytes are available.
pub fn frame_len(buf: &[u8]) -> Option<usize> {
    if buf.len() < FIXED_HEADER_LEN {
        return None;
    }
    let header_len = u16::from_be_bytes([buf[7], buf[8]]) as usize;
    let payload_len = u32::from_be_bytes([buf[9], buf[10], buf[11], buf[12]]) as usize;
    Some(FIXED_HEADER_LEN + header_len + payload_len + CRC_LEN)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FrameError> {
        if self.buf.len() - self.pos < n {
            return Err(self.malformed("header record too short"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, FrameError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, FrameError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, FrameError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn content_id(&mut self) -> Result<ContentId, FrameError> {
        Ok(ContentId(self.take(16)?.try_into().unwrap()))
    }
    fn short_str(&mut self) -> Result<String, FrameError> {
        let len = self.u16()? as usize;
        let at = self.pos;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| FrameError::MalformedHeader {
            offset: self.base + at,
            reason: "string is not UTF-8".into(),
        })
    }
    fn quality(&mut self) -> Result<LinkQuality, FrameError> {
        let at = self.pos;
        let code = self.u8()?;
        LinkQuality::from_code(code).ok_or(FrameError::MalformedHeader {
            offset: self.base + at,
            reason: format!("unknown link quality {code}"),
        })
    }
    fn spec(&mut self, allow_none: bool) -> Result<Option<ModificationSpec>, FrameError> {
        let at = self.pos;
        let count = self.u8()?;
        if count == 0 {
            return if allow_none {
                Ok(None)
            } else {
                Err(FrameError::MalformedHeader {
                    offset: self.base + at,
                    reason: "empty transform list".into(),
                })
            };
        }
        let mut transforms = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let at = self.pos;
            let kind = self.u8()?;
            let param = self.u32()?;
            transforms.push(Transform::from_wire(kind, param).map_err(|e| {
                FrameError::MalformedHeader {
                    offset: self.base + at,
                    reason: e.to_string(),
                }
            })?);
        }
        ModificationSpec::new(transforms)
            .map(Some)
            .map_err(|e| self.malformed(&e.to_string()))
    }
    fn malformed(&self, reason: &str) -> FrameError {
        FrameError::MalformedHeader {
            offset: self.base + self.pos,
            reason: reason.to_string(),
        }
    }
    fn finish(&self) -> Result<(), FrameError> {
        if self.pos != self.buf.len() {
            return Err(self.malformed("unused bytes in header record"));
        }
        Ok(())
    }
}

fn decode_header(ty: FrameType, buf: &[u8]) -> Result<Header, FrameError> {
    let mut r = Reader {
        buf,
        pos: 0,
        base: FIXED_HEADER_LEN,
    };
    let header = match ty {
        FrameType::Request => {
            let req_id = r.u32()?;
            let url = r.short_str()?;
            let net = NetworkStatus {
                quality: r.quality()?,
                last_rtt_ms: r.u32()?,
                last_loss_pct: r.u8()?,
            };
            let profile = DeviceProfile {
                device_id: r.short_str()?,
                screen_w: r.u32()?,
                screen_h: r.u32()?,
                supported_media: DeviceProfile::media_from_mask(r.u8()?),
                max_content_bytes: r.u32()?,
                os_tag: r.short_str()?,
                connection_class: r.quality()?,
            };
            let mod_spec = r.spec(true)?;
            let request = ContentRequest {
                url,
                profile,
                net,
                mod_spec,
            };
            request
                .validate()
                .map_err(|e| FrameError::MalformedHeader {
                    offset: FIXED_HEADER_LEN,
                    reason: e.to_string(),
                })?;
            Header::Request(RequestHeader { req_id, request })
        }
        FrameType::Content => Header::Content(ContentHeader {
            content_id: r.content_id()?,
            req_id: r.u32()?,
        }),
        FrameType::Chunk => {
            let h = ChunkHeader {
                content_id: r.content_id()?,
                seq: r.u32()?,
                total: r.u32()?,
            };
            if h.total == 0 || h.seq >= h.total {
                return Err(FrameError::MalformedHeader {
                    offset: FIXED_HEADER_LEN + 16,
                    reason: format!("seq {} outside 0..{}", h.seq, h.total),
                });
            }
            Header::Chunk(h)
        }
        FrameType::Ack => Header::Ack(AckHeader {
            content_id: r.content_id()?,
            seq: r.u32()?,
        }),
        FrameType::ModRequest => Header::ModRequest(ModRequestHeader {
            content_id: r.content_id()?,
            spec: r.spec(false)?.expect("non-empty spec required"),
        }),
        FrameType::Error => {
            let req_id = r.u32()?;
            let at = r.pos;
            let raw = r.u16()?;
            let code = ErrorCode::from_code(raw).ok_or(FrameError::MalformedHeader {
                offset: FIXED_HEADER_LEN + at,
                reason: format!("unknown error code {raw}"),
            })?;
            Header::Error(ErrorHeader {
                req_id,
                code,
                content_id: r.content_id()?,
            })
        }
        FrameType::NetStatus => {
            let status = NetworkStatus {
                quality: r.quality()?,
                last_rtt_ms: r.u32()?,
                last_loss_pct: r.u8()?,
            };
            status.validate().map_err(|e| FrameError::MalformedHeader {
                offset: FIXED_HEADER_LEN,
                reason: e.to_string(),
            })?;
            Header::NetStatus(status)
        }
    };
    r.finish()?;
    Ok(header)
}

/// Parses exactly one frame occupying all of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, FrameError> {
    if bytes.len() < FIXED_HEADER_LEN {
        return Err(FrameError::TruncatedFrame {
            offset: bytes.len(),
            needed: FIXED_HEADER_LEN,
            available: bytes.len(),
        });
    }
    if bytes[..4] != MAGIC {
        return Err(FrameError::BadMagic { offset: 0 });
    }
    if bytes[4] != VERSION {
        return Err(FrameError::BadVersion {
            offset: 4,
            found: bytes[4],
        });
    }
    let total = frame_len(bytes).expect("length checked above");
    if bytes.len() < total {
        return Err(FrameError::TruncatedFrame {
            offset: bytes.len(),
            needed: total,
            available: bytes.len(),
        });
    }
    if bytes.len() > total {
        return Err(FrameError::TrailingBytes {
            offset: total,
            extra: bytes.len() - total,
        });
    }
    let crc_at = total - CRC_LEN;
    let stored = u32::from_be_bytes(bytes[crc_at..].try_into().unwrap());
    if checksum(&bytes[..crc_at]) != stored {
        return Err(FrameError::ChecksumMismatch { offset: crc_at });
    }
    let ty = FrameType::from_code(bytes[5]).ok_or(FrameError::UnknownType {
        offset: 5,
        found: bytes[5],
    })?;
    let header_len = u16::from_be_bytes([bytes[7], bytes[8]]) as usize;
    let header_end = FIXED_HEADER_LEN + header_len;
    let header = decode_header(ty, &bytes[FIXED_HEADER_LEN..header_end])?;
    Ok(Frame {
        flags: bytes[6],
        header,
        payload: bytes[header_end..crc_at].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bitwise CRC-32 written straight from the polynomial definition.
    fn reference_crc32(bytes: &[u8]) -> u32 {
        let mut crc = 0xFFFF_FFFFu32;
        for &b in bytes {
            crc ^= b as u32;
            for _ in 0..8 {
                let mask = (crc & 1).wrapping_neg();
                crc = (crc >> 1) ^ (0xEDB8_8320 & mask);
            }
        }
        !crc
    }

    #[test]
    fn checksum_values() {
        assert_eq!(checksum(b""), 0);
        assert_eq!(checksum(b"abc"), reference_crc32(b"abc"));
        assert_eq!(checksum(b"abc"), 0x3524_41C2);
        assert_eq!(checksum(b"123456789"), 0xCBF4_3926);
        assert_eq!(checksum(b"abc"), checksum(b"abc"));
    }

    #[test]
    fn empty_ack_layout() {
        let f = Frame::ack(ContentId([9; 16]), 0, Epoch::default());
        let bytes = encode_frame(&f).unwrap();
        assert_eq!(bytes.len(), FIXED_HEADER_LEN + 20 + CRC_LEN);
        assert_eq!(&bytes[..4], b"MCL1");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], FrameType::Ack as u8);
        assert_eq!(u16::from_be_bytes([bytes[7], bytes[8]]), 20);
        assert_eq!(&bytes[9..13], &[0, 0, 0, 0]);
        assert_eq!(decode_frame(&bytes).unwrap(), f);
    }

    #[test]
    fn chunk_frame_crc() {
        let f = Frame::new(
            Header::Chunk(ChunkHeader {
                content_id: ContentId([7; 16]),
                seq: 1,
                total: 3,
            }),
            0,
            b"abc".to_vec(),
        );
        let bytes = encode_frame(&f).unwrap();
        assert_eq!(&bytes[9..13], &3u32.to_be_bytes());
        assert_eq!(u16::from_be_bytes([bytes[7], bytes[8]]), 24);
        let body = &bytes[..bytes.len() - 4];
        let crc = u32::from_be_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        assert_eq!(crc, reference_crc32(body));
    }

    #[test]
    fn decode_errors() {
        let bytes = encode_frame(&Frame::ack(ContentId::ZERO, 5, Epoch::new(3))).unwrap();
        assert!(matches!(
            decode_frame(&bytes[..3]),
            Err(FrameError::TruncatedFrame { .. })
        ));
        assert!(matches!(
            decode_frame(&bytes[..bytes.len() - 1]),
            Err(FrameError::TruncatedFrame { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(decode_frame(&bad), Err(FrameError::BadMagic { offset: 0 }));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert_eq!(
            decode_frame(&bad),
            Err(FrameError::BadVersion {
                offset: 4,
                found: 2
            })
        );
        let mut bad = bytes.clone();
        bad[FIXED_HEADER_LEN + 3] ^= 0x10;
        assert_eq!(
            decode_frame(&bad),
            Err(FrameError::ChecksumMismatch {
                offset: bytes.len() - 4
            })
        );
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(
            decode_frame(&long),
            Err(FrameError::TrailingBytes { .. })
        ));
    }

    #[test]
    fn oversize_payload_rejected() {
        assert_eq!(payload_len_field(u32::MAX as usize).unwrap(), u32::MAX);
        assert_eq!(
            payload_len_field(u32::MAX as usize + 1),
            Err(FrameError::OversizeFrame {
                len: u32::MAX as usize + 1
            })
        );
    }

    #[test]
    fn chunk_header_invariant_on_encode() {
        let f = Frame::new(
            Header::Chunk(ChunkHeader {
                content_id: ContentId::ZERO,
                seq: 3,
                total: 3,
            }),
            0,
            vec![],
        );
        assert!(matches!(
            encode_frame(&f),
            Err(FrameError::InvalidField { .. })
        ));
    }

    #[test]
    fn epochs_wrap() {
        let e = Epoch::new(31);
        assert_eq!(e.next(), Epoch::new(0));
        assert!(Epoch::new(0).is_newer_than(e));
        assert!(!e.is_newer_than(Epoch::new(0)));
        assert!(!e.is_newer_than(e));
        assert!(Epoch::new(5).is_newer_than(Epoch::new(2)));
    }

    #[test]
    fn flag_packing() {
        for media in MediaType::ALL {
            for modified in [false, true] {
                for epoch in 0..32 {
                    let f = DeliveryFlags {
                        media,
                        modified,
                        epoch: Epoch::new(epoch),
                    };
                    assert_eq!(DeliveryFlags::unpack(f.pack()), f);
                }
            }
        }
    }
}
