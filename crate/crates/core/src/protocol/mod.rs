//! The three protocol roles: registration, password change and the
//! four-message authentication and key exchange.
//!
//! Each role is a set of step functions from `(state, message, time)` to
//! `(state', output)`. Randomness is injected through an `RngCore`, time is
//! supplied by the caller, and every step either returns its output or a
//! [`Rejection`] naming the check that failed.

mod gateway;
pub mod messages;
mod sensor;
pub mod store;
mod user;

use std::fmt;

pub use gateway::{GatewaySession, GatewayState, PendingVerifier, UserRecord};
pub use messages::{CodecError, Message, MessageView, Pc1, Pc2, M1, M2, M3, M4};
pub use sensor::SensorState;
pub use user::{
    make_uap, register_user, user_auth_init, user_login, user_pc_request, PcSession, SmartCard, UserSession,
};

use crate::primitives::{CryptoSuite, Digest, HashAlg, PrimitiveError};

/// Upper bound on ID, PW and SID lengths.
pub const MAX_IDENTIFIER_LEN: usize = 1024;

/// Milliseconds of simulated time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, serde::Serialize)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub fn to_bytes(self) -> [u8; 8] {
        self.0.to_be_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PrimitiveError> {
        let arr: [u8; 8] = bytes.try_into().map_err(|_| PrimitiveError::LengthMismatch {
            expected: 8,
            actual: bytes.len(),
        })?;
        Ok(Timestamp(u64::from_be_bytes(arr)))
    }

    pub fn plus(self, ms: u64) -> Self {
        Timestamp(self.0.saturating_add(ms))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProtocolConfig {
    /// Largest accepted |receiver clock - embedded timestamp|.
    pub freshness_ms: u64,
    /// Reject a second M1 carrying an already seen `(B, T1)`.
    pub replay_cache: bool,
    /// How long the old verifier stays valid after a password change.
    pub grace_ms: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            freshness_ms: 2_000,
            replay_cache: true,
            grace_ms: 24 * 60 * 60 * 1000,
        }
    }
}

/// Everything the step functions need besides role state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Env {
    pub suite: CryptoSuite,
    pub config: ProtocolConfig,
}

impl Env {
    pub fn new(suite: CryptoSuite, config: ProtocolConfig) -> Self {
        Env { suite, config }
    }

    pub(crate) fn check_fresh(&self, sent: Timestamp, now: Timestamp) -> Result<(), Rejection> {
        if sent.0.abs_diff(now.0) <= self.config.freshness_ms {
            Ok(())
        } else {
            Err(Rejection::Stale {
                sent,
                received: now,
                window_ms: self.config.freshness_ms,
            })
        }
    }
}

/// Why a party refused a message. Every variant is a distinct reported reason.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Rejection {
    #[error("malformed message: {0}")]
    Malformed(#[from] CodecError),
    #[error("malformed plaintext: {0}")]
    MalformedPlaintext(PrimitiveError),
    #[error("unexpected {0} message")]
    Unexpected(&'static str),
    #[error("invalid point: {0}")]
    InvalidPoint(PrimitiveError),
    #[error("decryption failed, message dropped")]
    Decryption,
    #[error("stale timestamp {sent} at {received} (window {window_ms} ms)")]
    Stale {
        sent: Timestamp,
        received: Timestamp,
        window_ms: u64,
    },
    #[error("replayed request")]
    Replay,
    #[error("user authentication failed")]
    UserAuth,
    #[error("unknown sensor identity")]
    UnknownSensor,
    #[error("gateway authentication failed")]
    GatewayAuth,
    #[error("sensor authentication failed")]
    SensorAuth,
    #[error("smart card login failed")]
    LoginFailed,
    #[error("no live session for this message")]
    NoSession,
}

impl Rejection {
    /// Stable short code used in reports and scenario checks.
    pub fn code(&self) -> &'static str {
        match self {
            Rejection::Malformed(_) => "malformed",
            Rejection::MalformedPlaintext(_) => "malformed-plaintext",
            Rejection::Unexpected(_) => "unexpected",
            Rejection::InvalidPoint(_) => "invalid-point",
            Rejection::Decryption => "decryption",
            Rejection::Stale { .. } => "freshness",
            Rejection::Replay => "replay",
            Rejection::UserAuth => "user-auth",
            Rejection::UnknownSensor => "routing",
            Rejection::GatewayAuth => "gateway-auth",
            Rejection::SensorAuth => "sensor-auth",
            Rejection::LoginFailed => "login",
            Rejection::NoSession => "no-session",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistrationError {
    #[error("user {0:?} is already registered")]
    DuplicateUser(String),
    #[error("sensor {0:?} is not in the provisioning list")]
    UnprovisionedSensor(String),
    #[error("invalid identifier: {0}")]
    InvalidIdentifier(&'static str),
    #[error("verifier collision")]
    VerifierCollision,
}

pub(crate) fn check_identifier(bytes: &[u8], what: &'static str) -> Result<(), RegistrationError> {
    if bytes.is_empty() || bytes.len() > MAX_IDENTIFIER_LEN {
        Err(RegistrationError::InvalidIdentifier(what))
    } else {
        Ok(())
    }
}

/// What the user types and scans.
#[derive(Clone, PartialEq, Eq)]
pub struct Credentials {
    id: Vec<u8>,
    pw: Vec<u8>,
    bmp: Option<Digest>,
}

impl Credentials {
    pub fn new(id: impl Into<Vec<u8>>, pw: impl Into<Vec<u8>>, bmp: Option<Digest>) -> Result<Self, RegistrationError> {
        let (id, pw) = (id.into(), pw.into());
        check_identifier(&id, "ID must be 1..=1024 bytes")?;
        check_identifier(&pw, "password must be 1..=1024 bytes")?;
        Ok(Credentials { id, pw, bmp })
    }

    pub fn id(&self) -> &[u8] {
        &self.id
    }

    pub fn pw(&self) -> &[u8] {
        &self.pw
    }

    /// The biometric digest, or the all-zero placeholder when none is used.
    pub fn bmp(&self) -> Digest {
        self.bmp.unwrap_or(Digest::ZERO)
    }

    pub fn with_password(&self, pw: impl Into<Vec<u8>>) -> Result<Self, RegistrationError> {
        Credentials::new(self.id.clone(), pw, self.bmp)
    }
}

impl fmt::Debug for Credentials {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Credentials")
            .field("id", &String::from_utf8_lossy(&self.id))
            .finish_non_exhaustive()
    }
}

/// An agreed session key. `Debug` shows only a fingerprint.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SessionKey(Digest);

impl SessionKey {
    pub(crate) fn new(d: Digest) -> Self {
        SessionKey(d)
    }

    pub fn expose(&self) -> &Digest {
        &self.0
    }

    /// First 8 bytes of SHA-256(SK), hex encoded. Not metered.
    pub fn fingerprint(&self) -> String {
        hex::encode(&HashAlg::Sha256.digest(self.0.as_ref()).as_bytes()[..8])
    }
}

impl serde::Serialize for SessionKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.fingerprint())
    }
}

impl fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SessionKey(fp={})", self.fingerprint())
    }
}

pub(crate) fn read_digest(bytes: &[u8]) -> Result<Digest, Rejection> {
    Digest::from_slice(bytes).map_err(Rejection::MalformedPlaintext)
}

pub(crate) fn read_timestamp(bytes: &[u8]) -> Result<Timestamp, Rejection> {
    Timestamp::from_bytes(bytes).map_err(Rejection::MalformedPlaintext)
}
