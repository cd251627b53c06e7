use serde::Serialize;
use sha2::{Digest, Sha256};

/// Stable digest of a config: SHA-256 over its canonical TOML rendering,
/// truncated to 16 hex characters.
pub fn config_digest<T: Serialize>(value: &T) -> String {
    let text = toml::to_string(value).unwrap_or_else(|e| format!("<unserializable: {e}>"));
    text_digest(&text)
}

pub fn text_digest(text: &str) -> String {
    let hash = Sha256::digest(text.as_bytes());
    hex::encode(&hash[..8])
}
