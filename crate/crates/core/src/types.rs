//! Domain types shared by every layer.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modloop::ModificationSpec;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid {what}: {reason}")]
pub struct InvalidValue {
    pub what: &'static str,
    pub reason: String,
}

impl InvalidValue {
    pub(crate) fn new(what: &'static str, reason: impl Into<String>) -> Self {
        InvalidValue {
            what,
            reason: reason.into(),
        }
    }
}

/// 16-byte content identifier, minted randomly at ingest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ContentId(pub [u8; 16]);

impl ContentId {
    pub const ZERO: ContentId = ContentId([0; 16]);

    pub fn random(rng: &mut impl RngCore) -> Self {
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        ContentId(bytes)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentId({})", self.to_hex())
    }
}

impl fmt::Display for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for ContentId {
    type Err = InvalidValue;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = hex::decode(s).map_err(|e| InvalidValue::new("content id", e.to_string()))?;
        let arr: [u8; 16] = bytes
            .try_into()
            .map_err(|_| InvalidValue::new("content id", "expected 32 hex digits"))?;
        Ok(ContentId(arr))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaType {
    Data,
    Graph,
    Image,
    Voice,
}

impl MediaType {
    pub const ALL: [MediaType; 4] = [
        MediaType::Data,
        MediaType::Graph,
        MediaType::Image,
        MediaType::Voice,
    ];

    pub fn code(self) -> u8 {
        match self {
            MediaType::Data => 0,
            MediaType::Graph => 1,
            MediaType::Image => 2,
            MediaType::Voice => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        MediaType::ALL.get(code as usize).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MediaType::Data => "data",
            MediaType::Graph => "graph",
            MediaType::Image => "image",
            MediaType::Voice => "voice",
        }
    }
}

impl fmt::Display for MediaType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MediaType {
    type Err = InvalidValue;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MediaType::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| InvalidValue::new("media type", format!("{s:?}")))
    }
}

/// Coarse link quality, used both for a device's connection class and for
/// the last observed network condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkQuality {
    High,
    Medium,
    Low,
}

impl LinkQuality {
    pub fn code(self) -> u8 {
        match self {
            LinkQuality::High => 0,
            LinkQuality::Medium => 1,
            LinkQuality::Low => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(LinkQuality::High),
            1 => Some(LinkQuality::Medium),
            2 => Some(LinkQuality::Low),
            _ => None,
        }
    }
}

impl FromStr for LinkQuality {
    type Err = InvalidValue;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "high" => Ok(LinkQuality::High),
            "medium" => Ok(LinkQuality::Medium),
            "low" => Ok(LinkQuality::Low),
            _ => Err(InvalidValue::new("link quality", format!("{s:?}"))),
        }
    }
}

/// What the requesting device can handle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviceProfile {
    pub device_id: String,
    pub screen_w: u32,
    pub screen_h: u32,
    pub supported_media: BTreeSet<MediaType>,
    pub max_content_bytes: u32,
    pub os_tag: String,
    pub connection_class: LinkQuality,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<(), InvalidValue> {
        if self.supported_media.is_empty() {
            return Err(InvalidValue::new(
                "device profile",
                "supported_media is empty",
            ));
        }
        if self.max_content_bytes == 0 {
            return Err(InvalidValue::new(
                "device profile",
                "max_content_bytes must be >= 1",
            ));
        }
        if self.screen_w == 0 || self.screen_h == 0 {
            return Err(InvalidValue::new(
                "device profile",
                "screen dimensions must be >= 1",
            ));
        }
        Ok(())
    }

    pub fn supports(&self, media: MediaType) -> bool {
        self.supported_media.contains(&media)
    }

    pub fn media_mask(&self) -> u8 {
        self.supported_media
            .iter()
            .fold(0u8, |mask, m| mask | (1 << m.code()))
    }

    pub fn media_from_mask(mask: u8) -> BTreeSet<MediaType> {
        MediaType::ALL
            .into_iter()
            .filter(|m| mask & (1 << m.code()) != 0)
            .collect()
    }
}

impl Default for DeviceProfile {
    fn default() -> Self {
        DeviceProfile {
            device_id: "device".to_string(),
            screen_w: 480,
            screen_h: 800,
            supported_media: MediaType::ALL.into_iter().collect(),
            max_content_bytes: 1 << 20,
            os_tag: "generic".to_string(),
            connection_class: LinkQuality::High,
        }
    }
}

/// Network condition the client observed on its previous exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkStatus {
    pub quality: LinkQuality,
    pub last_rtt_ms: u32,
    pub last_loss_pct: u8,
}

impl NetworkStatus {
    pub fn new(quality: LinkQuality) -> Self {
        NetworkStatus {
            quality,
            last_rtt_ms: 0,
            last_loss_pct: 0,
        }
    }

    pub fn validate(&self) -> Result<(), InvalidValue> {
        if self.last_loss_pct > 100 {
            return Err(InvalidValue::new(
                "network status",
                "last_loss_pct above 100",
            ));
        }
        Ok(())
    }
}

impl Default for NetworkStatus {
    fn default() -> Self {
        NetworkStatus::new(LinkQuality::High)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentRequest {
    pub url: String,
    pub profile: DeviceProfile,
    pub net: NetworkStatus,
    pub mod_spec: Option<ModificationSpec>,
}

impl ContentRequest {
    pub fn new(url: impl Into<String>, profile: DeviceProfile, net: NetworkStatus) -> Self {
        ContentRequest {
            url: url.into(),
            profile,
            net,
            mod_spec: None,
        }
    }

    pub fn with_spec(mut self, spec: ModificationSpec) -> Self {
        self.mod_spec = Some(spec);
        self
    }

    pub fn validate(&self) -> Result<(), InvalidValue> {
        if self.url.is_empty() {
            return Err(InvalidValue::new("request", "url is empty"));
        }
        self.profile.validate()?;
        self.net.validate()?;
        if let Some(spec) = &self.mod_spec {
            spec.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContentItem {
    pub content_id: ContentId,
    pub url: String,
    pub media: MediaType,
    pub payload: Vec<u8>,
    /// Logical ingest counter.
    pub created_at: u64,
    /// Set once any transform has been applied.
    pub modified: bool,
}

/// One fragment of a content payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub content_id: ContentId,
    pub seq: u32,
    pub total: u32,
    pub payload: Vec<u8>,
}

impl Chunk {
    pub fn validate(&self) -> Result<(), InvalidValue> {
        if self.total == 0 {
            return Err(InvalidValue::new("chunk", "total must be >= 1"));
        }
        if self.seq >= self.total {
            return Err(InvalidValue::new("chunk", "seq out of range"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn media_codes_roundtrip() {
        for m in MediaType::ALL {
            assert_eq!(MediaType::from_code(m.code()), Some(m));
            assert_eq!(m.as_str().parse::<MediaType>().unwrap(), m);
        }
        assert_eq!(MediaType::from_code(4), None);
    }

    #[test]
    fn profile_invariants() {
        let mut p = DeviceProfile::default();
        assert!(p.validate().is_ok());
        assert_eq!(
            DeviceProfile::media_from_mask(p.media_mask()),
            p.supported_media
        );
        p.supported_media.clear();
        assert!(p.validate().is_err());
        let p = DeviceProfile {
            max_content_bytes: 0,
            ..DeviceProfile::default()
        };
        assert!(p.validate().is_err());
        let p = DeviceProfile {
            screen_h: 0,
            ..DeviceProfile::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn request_invariants() {
        let ok = ContentRequest::new("lec/1", DeviceProfile::default(), NetworkStatus::default());
        assert!(ok.validate().is_ok());
        let empty = ContentRequest::new("", DeviceProfile::default(), NetworkStatus::default());
        assert!(empty.validate().is_err());
        let mut lossy = ok.clone();
        lossy.net.last_loss_pct = 101;
        assert!(lossy.validate().is_err());
    }

    #[test]
    fn content_id_hex() {
        let id = ContentId([0xab; 16]);
        assert_eq!(id.to_hex().parse::<ContentId>().unwrap(), id);
        assert!("abc".parse::<ContentId>().is_err());
    }

    #[test]
    fn chunk_bounds() {
        let c = Chunk {
            content_id: ContentId::ZERO,
            seq: 2,
            total: 2,
            payload: vec![],
        };
        assert!(c.validate().is_err());
    }
}
