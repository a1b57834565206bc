//! Serializer settings as `key = value` lines.
//!
//! ```text
//! heading_time = "時刻"
//! heading_value = "Nikkei225"
//! language = "japanese"
//! currency_suffix = "円"
//! ```

use std::path::Path;

use serde::Deserialize;
use tsprompt_core::{Language, SerializerConfig};

use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Settings {
    heading_time: Option<String>,
    heading_value: Option<String>,
    language: Option<String>,
    currency_suffix: Option<String>,
}

pub fn load_serializer_config(path: &Path) -> Result<SerializerConfig> {
    let text = super::read_to_string(path)?;
    parse_serializer_config(&text, &path.display().to_string())
}

pub fn parse_serializer_config(text: &str, source_name: &str) -> Result<SerializerConfig> {
    let raw: Settings = toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1);
        Error::parse(source_name, line, e.message().to_owned())
    })?;
    let mut config = SerializerConfig { heading_time: raw.heading_time, currency_suffix: raw.currency_suffix, ..Default::default() };
    if let Some(v) = raw.heading_value {
        config.heading_value = v;
    }
    if let Some(l) = raw.language {
        config.language = Some(l.parse::<Language>()?);
    }
    config.validate()?;
    Ok(config)
}
