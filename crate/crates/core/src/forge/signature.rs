use hmac::{Hmac, KeyInit, Mac};
use sha2::Sha256;

use super::ForgeEventEnvelope;

type HmacSha256 = Hmac<Sha256>;

/// `sha256=<lowercase hex HMAC-SHA-256(secret, body)>`.
pub fn sign(secret: &[u8], body: &[u8]) -> String {
    let mut mac = HmacSha256::new_from_slice(secret).expect("HMAC accepts any key length");
    mac.update(body);
    format!("sha256={}", hex::encode(mac.finalize().into_bytes()))
}

/// Verifies the envelope's `X-Hub-Signature-256` value over its raw body.
///
/// The digest comparison is constant-time. An absent or malformed header, or
/// an empty secret, verifies false.
pub fn verify_signature(secret: &[u8], envelope: &ForgeEventEnvelope) -> bool {
    if secret.is_empty() {
        return false;
    }
    let Some(header) = envelope.signature_header.as_deref() else {
        return false;
    };
    let Some(hex_digest) = header.strip_prefix("sha256=") else {
        return false;
    };
    // uppercase hex is not the documented form
    if hex_digest.bytes().any(|b| b.is_ascii_uppercase()) {
        return false;
    }
    let Ok(expected) = hex::decode(hex_digest) else {
        return false;
    };
    let mut mac = HmacSha256::new_from_slice(secret).expect("HMAC accepts any key length");
    mac.update(&envelope.raw_body);
    mac.verify_slice(&expected).is_ok()
}
