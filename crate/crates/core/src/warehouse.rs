//! Keyed content store with file-backed snapshots.
//!
//! Snapshot layout (big-endian):
//!
//! ```text
//! "MCLW" | u32 count | count x (u16 url_len, url, u8 media, [u8; 16] id,
//!                               u32 payload_len, payload) | u32 CRC32
//! ```
//!
//! The CRC covers every byte before it, magic included.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::Path;
use std::sync::{Arc, RwLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::frame::checksum;
use crate::types::{ContentId, ContentItem, MediaType};

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"MCLW";

#[derive(Debug, Error)]
pub enum WarehouseError {
    #[error("url must not be empty")]
    EmptyUrl,
    #[error("url of {0} bytes does not fit a snapshot record")]
    UrlTooLong(usize),
    #[error("payload of {0} bytes does not fit a snapshot record")]
    PayloadTooLarge(usize),
    #[error("snapshot i/o failed: {0}")]
    IoFailure(#[from] io::Error),
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
}

/// Warehouse handle shared between connection handlers.
pub type SharedWarehouse = Arc<RwLock<Warehouse>>;

#[derive(Debug, Clone)]
pub struct Warehouse {
    items: BTreeMap<String, ContentItem>,
    index: HashMap<ContentId, String>,
    rng: ChaCha8Rng,
    clock: u64,
}

impl Default for Warehouse {
    fn default() -> Self {
        Warehouse::new()
    }
}

impl Warehouse {
    /// Empty store whose content ids come from OS entropy.
    pub fn new() -> Self {
        Warehouse::from_rng(ChaCha8Rng::from_entropy())
    }

    /// Empty store with reproducible content ids.
    pub fn with_seed(seed: u64) -> Self {
        Warehouse::from_rng(ChaCha8Rng::seed_from_u64(seed))
    }

    fn from_rng(rng: ChaCha8Rng) -> Self {
        Warehouse {
            items: BTreeMap::new(),
            index: HashMap::new(),
            rng,
            clock: 0,
        }
    }

    pub fn into_shared(self) -> SharedWarehouse {
        Arc::new(RwLock::new(self))
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Stores `payload` under `url`, replacing any previous item and minting
    /// a fresh content id.
    pub fn ingest(
        &mut self,
        url: &str,
        media: MediaType,
        payload: Vec<u8>,
    ) -> Result<ContentId, WarehouseError> {
        if url.is_empty() {
            return Err(WarehouseError::EmptyUrl);
        }
        if url.len() > u16::MAX as usize {
            return Err(WarehouseError::UrlTooLong(url.len()));
        }
        if payload.len() > u32::MAX as usize {
            return Err(WarehouseError::PayloadTooLarge(payload.len()));
        }
        let id = loop {
            let candidate = ContentId::random(&mut self.rng);
            if !self.index.contains_key(&candidate) {
                break candidate;
            }
        };
        self.insert(ContentItem {
            content_id: id,
            url: url.to_string(),
            media,
            payload,
            created_at: 0,
            modified: false,
        });
        Ok(id)
    }

    fn insert(&mut self, mut item: ContentItem) {
        self.clock += 1;
        item.created_at = self.clock;
        if let Some(old) = self.items.get(&item.url) {
            self.index.remove(&old.content_id);
        }
        self.index.insert(item.content_id, item.url.clone());
        self.items.insert(item.url.clone(), item);
    }

    pub fn lookup(&self, url: &str) -> Option<&ContentItem> {
        self.items.get(url)
    }

    pub fn lookup_id(&self, id: &ContentId) -> Option<&ContentItem> {
        self.index.get(id).and_then(|url| self.items.get(url))
    }

    /// Urls starting with `prefix`, in sorted order.
    pub fn list(&self, prefix: &str) -> Vec<&str> {
        self.items
            .range(prefix.to_string()..)
            .take_while(|(k, _)| k.starts_with(prefix))
            .map(|(k, _)| k.as_str())
            .collect()
    }

    pub fn items(&self) -> impl Iterator<Item = &ContentItem> {
        self.items.values()
    }

    pub fn to_snapshot_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&SNAPSHOT_MAGIC);
        out.extend_from_slice(&(self.items.len() as u32).to_be_bytes());
        for item in self.items.values() {
            out.extend_from_slice(&(item.url.len() as u16).to_be_bytes());
            out.extend_from_slice(item.url.as_bytes());
            out.push(item.media.code());
            out.extend_from_slice(&item.content_id.0);
            out.extend_from_slice(&(item.payload.len() as u32).to_be_bytes());
            out.extend_from_slice(&item.payload);
        }
        let crc = checksum(&out);
        out.extend_from_slice(&crc.to_be_bytes());
        out
    }

    pub fn from_snapshot_bytes(bytes: &[u8], seed: Option<u64>) -> Result<Self, WarehouseError> {
        let corrupt = |m: &str| WarehouseError::CorruptSnapshot(m.to_string());
        if bytes.len() < SNAPSHOT_MAGIC.len() + 8 {
            return Err(corrupt("file too short"));
        }
        let (body, crc) = bytes.split_at(bytes.len() - 4);
        if checksum(body) != u32::from_be_bytes(crc.try_into().unwrap()) {
            return Err(corrupt("checksum mismatch"));
        }
        if body[..4] != SNAPSHOT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let mut cur = Cursor { buf: body, pos: 4 };
        let count = cur.u32().ok_or_else(|| corrupt("truncated item count"))?;
        let mut w = match seed {
            Some(s) => Warehouse::with_seed(s),
            None => Warehouse::new(),
        };
        for _ in 0..count {
            let item = cur
                .item()
                .ok_or_else(|| corrupt("truncated item record"))??;
            if w.items.contains_key(&item.url) {
                return Err(corrupt(&format!("duplicate url {:?}", item.url)));
            }
            if w.index.contains_key(&item.content_id) {
                return Err(corrupt(&format!(
                    "duplicate content id {}",
                    item.content_id
                )));
            }
            w.insert(item);
        }
        if cur.pos != body.len() {
            return Err(corrupt("unexpected bytes after last item"));
        }
        Ok(w)
    }

    pub fn snapshot_save(&self, path: &Path) -> Result<(), WarehouseError> {
        fs::write(path, self.to_snapshot_bytes())?;
        Ok(())
    }

    pub fn snapshot_load(path: &Path) -> Result<Self, WarehouseError> {
        Warehouse::from_snapshot_bytes(&fs::read(path)?, None)
    }

    /// Like [`Warehouse::snapshot_load`] but ids minted afterwards are
    /// reproducible.
    pub fn snapshot_load_seeded(path: &Path, seed: u64) -> Result<Self, WarehouseError> {
        Warehouse::from_snapshot_bytes(&fs::read(path)?, Some(seed))
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let s = self.buf.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }
    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_be_bytes(self.take(4)?.try_into().ok()?))
    }
    fn item(&mut self) -> Option<Result<ContentItem, WarehouseError>> {
        let url_len = u16::from_be_bytes(self.take(2)?.try_into().ok()?) as usize;
        let url = self.take(url_len)?.to_vec();
        let media = self.take(1)?[0];
        let id: [u8; 16] = self.take(16)?.try_into().ok()?;
        let len = self.u32()? as usize;
        let payload = self.take(len)?.to_vec();
        let corrupt = |m: &str| Err(WarehouseError::CorruptSnapshot(m.to_string()));
        let Ok(url) = String::from_utf8(url) else {
            return Some(corrupt("url is not UTF-8"));
        };
        if url.is_empty() {
            return Some(corrupt("empty url"));
        }
        let Some(media) = MediaType::from_code(media) else {
            return Some(corrupt("unknown media code"));
        };
        Some(Ok(ContentItem {
            content_id: ContentId(id),
            url,
            media,
            payload,
            created_at: 0,
            modified: false,
        }))
    }
}
