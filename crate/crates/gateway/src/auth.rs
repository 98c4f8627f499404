//! Bearer-token sessions.

use std::collections::HashMap;

use parking_lot::Mutex;
use pgzone_core::checksum::sha256_hex;
use rand::RngCore;
use serde::Serialize;
use subtle::ConstantTimeEq;

pub const DEFAULT_TTL_US: u64 = 24 * 3600 * 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Session {
    pub token: String,
    pub user: String,
    pub issued_us: u64,
    pub expires_us: u64,
}

/// Live sessions, keyed by a digest of the token so that lookup never
/// branches on the secret itself.
pub struct Sessions {
    ttl_us: u64,
    by_digest: Mutex<HashMap<String, Session>>,
}

impl Default for Sessions {
    fn default() -> Self {
        Sessions::with_ttl(DEFAULT_TTL_US)
    }
}

impl Sessions {
    pub fn with_ttl(ttl_us: u64) -> Self {
        Sessions { ttl_us, by_digest: Mutex::new(HashMap::new()) }
    }

    pub fn issue(&self, user: &str, now_us: u64) -> Session {
        let mut raw = [0u8; 32];
        rand::rng().fill_bytes(&mut raw);
        let token = hex::encode(raw);
        let s = Session {
            token: token.clone(),
            user: user.to_string(),
            issued_us: now_us,
            expires_us: now_us.saturating_add(self.ttl_us),
        };
        let mut map = self.by_digest.lock();
        map.retain(|_, s| s.expires_us > now_us);
        map.insert(sha256_hex(token.as_bytes()), s.clone());
        s
    }

    /// User bound to `token`, if it is live at `now_us`.
    pub fn resolve(&self, token: &str, now_us: u64) -> Option<String> {
        let digest = sha256_hex(token.as_bytes());
        let mut map = self.by_digest.lock();
        let s = map.get(&digest)?;
        if !bool::from(s.token.as_bytes().ct_eq(token.as_bytes())) {
            return None;
        }
        if s.expires_us <= now_us {
            map.remove(&digest);
            return None;
        }
        Some(s.user.clone())
    }

    pub fn len(&self) -> usize {
        self.by_digest.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
