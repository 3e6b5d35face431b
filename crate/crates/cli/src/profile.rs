//! `key=value` device profile files.
//!
//! ```text
//! # phone
//! device_id=handset-7
//! screen=480x800
//! media=data,graph,image
//! max_content_bytes=65536
//! os=symbian
//! connection=low
//! ```
//!
//! Missing keys keep their defaults. Blank lines and `#` comments are ignored.

use std::collections::BTreeSet;

use mcl_core::types::{DeviceProfile, LinkQuality, MediaType};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("profile line {line}: {message}")]
pub struct ProfileError {
    pub line: usize,
    pub message: String,
}

fn media(s: &str) -> Option<MediaType> {
    match s.trim().to_ascii_lowercase().as_str() {
        "data" => Some(MediaType::Data),
        "graph" => Some(MediaType::Graph),
        "image" => Some(MediaType::Image),
        "voice" => Some(MediaType::Voice),
        _ => None,
    }
}

fn quality(s: &str) -> Option<LinkQuality> {
    match s.trim().to_ascii_lowercase().as_str() {
        "low" => Some(LinkQuality::Low),
        "medium" => Some(LinkQuality::Medium),
        "high" => Some(LinkQuality::High),
        _ => None,
    }
}

pub fn parse_profile(text: &str) -> Result<DeviceProfile, ProfileError> {
    let mut p = DeviceProfile::default();
    for (i, raw) in text.lines().enumerate() {
        let err = |message: String| ProfileError {
            line: i + 1,
            message,
        };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
        let value = value.trim();
        match key.trim() {
            "device_id" => p.device_id = value.to_string(),
            "screen" => {
                let (w, h) = value
                    .split_once(['x', 'X'])
                    .ok_or_else(|| err(format!("screen must be WxH, got {value:?}")))?;
                p.screen_w = w
                    .trim()
                    .parse()
                    .map_err(|_| err(format!("bad width {w:?}")))?;
                p.screen_h = h
                    .trim()
                    .parse()
                    .map_err(|_| err(format!("bad height {h:?}")))?;
            }
            "media" => {
                p.supported_media = value
                    .split(',')
                    .filter(|m| !m.trim().is_empty())
                    .map(|m| media(m).ok_or_else(|| err(format!("unknown media {m:?}"))))
                    .collect::<Result<BTreeSet<_>, _>>()?;
            }
            "max_content_bytes" => {
                p.max_content_bytes = value
                    .parse()
                    .map_err(|_| err(format!("bad max_content_bytes {value:?}")))?;
            }
            "os" => p.os_tag = value.to_string(),
            "connection" => {
                p.connection_class = quality(value)
                    .ok_or_else(|| err(format!("unknown connection class {value:?}")))?;
            }
            other => return Err(err(format!("unknown key {other:?}"))),
        }
    }
    p.validate().map_err(|e| ProfileError {
        line: 0,
        message: e.to_string(),
    })?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_profile() {
        let p = parse_profile(
            "# phone\n\ndevice_id = h7\nscreen=320x240\nmedia=data, image\n\
             max_content_bytes=4096\nos=symbian\nconnection=LOW\n",
        )
        .unwrap();
        assert_eq!(p.device_id, "h7");
        assert_eq!((p.screen_w, p.screen_h), (320, 240));
        assert_eq!(
            p.supported_media,
            [MediaType::Data, MediaType::Image].into_iter().collect()
        );
        assert_eq!(p.max_content_bytes, 4096);
        assert_eq!(p.os_tag, "symbian");
        assert_eq!(p.connection_class, LinkQuality::Low);
    }

    #[test]
    fn empty_profile_is_default() {
        assert_eq!(parse_profile("").unwrap(), DeviceProfile::default());
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(parse_profile("os=x\nbogus").unwrap_err().line, 2);
        assert_eq!(parse_profile("colour=red").unwrap_err().line, 1);
        assert_eq!(parse_profile("\nscreen=10").unwrap_err().line, 2);
        assert_eq!(parse_profile("media=smell").unwrap_err().line, 1);
        assert_eq!(parse_profile("media=").unwrap_err().line, 0);
        assert_eq!(parse_profile("screen=0x5").unwrap_err().line, 0);
    }
}
