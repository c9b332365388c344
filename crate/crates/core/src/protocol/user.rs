use std::fmt;

use rand::RngCore;

use crate::primitives::{ae_open, ae_seal, frame, unframe, CryptoSuite, Digest, Point, Scalar, NONCE_TAG_TO_GATEWAY};

use super::messages::{Pc1, Pc2, M1, M4};
use super::{
    read_digest, read_timestamp, Credentials, Env, GatewayState, RegistrationError, Rejection, SessionKey, Timestamp,
};

/// The user's token: `C`, `D`, `z` from the gateway and the user's own `q`.
#[derive(Clone, PartialEq, Eq)]
pub struct SmartCard {
    c: Digest,
    d: Digest,
    z: Digest,
    q: Digest,
    hash_id: String,
}

impl SmartCard {
    pub fn from_parts(c: Digest, d: Digest, z: Digest, q: Digest, hash_id: impl Into<String>) -> Self {
        SmartCard {
            c,
            d,
            z,
            q,
            hash_id: hash_id.into(),
        }
    }

    pub fn c(&self) -> &Digest {
        &self.c
    }

    pub fn d(&self) -> &Digest {
        &self.d
    }

    pub fn z(&self) -> &Digest {
        &self.z
    }

    pub fn q(&self) -> &Digest {
        &self.q
    }

    pub fn hash_id(&self) -> &str {
        &self.hash_id
    }
}

impl fmt::Debug for SmartCard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmartCard")
            .field("hash_id", &self.hash_id)
            .finish_non_exhaustive()
    }
}

/// `UAP = h(PW || BMP || q)`
pub fn make_uap(suite: &CryptoSuite, pw: &[u8], bmp: &Digest, q: &Digest) -> Digest {
    suite.hash_fields(&[pw, bmp.as_ref(), q.as_ref()])
}

/// User side of registration: picks `q`, sends `(ID, UAP)` to the gateway
/// over the registration channel and completes the card it gets back.
pub fn register_user<R: RngCore + ?Sized>(
    gw: &mut GatewayState,
    suite: &CryptoSuite,
    rng: &mut R,
    creds: &Credentials,
) -> Result<SmartCard, RegistrationError> {
    let q = Digest::random(rng);
    let uap = make_uap(suite, creds.pw(), &creds.bmp(), &q);
    let issue = gw.register_user(suite, rng, creds.id(), &uap)?;
    Ok(SmartCard {
        c: issue.c,
        d: issue.d,
        z: issue.z,
        q,
        hash_id: suite.hash_id().to_string(),
    })
}

/// Recomputes `B*` and `D*` from typed credentials; returns `B*` when `D*`
/// matches the card.
pub fn user_login(suite: &CryptoSuite, card: &SmartCard, creds: &Credentials) -> Result<Digest, Rejection> {
    if card.hash_id != suite.hash_id() {
        return Err(Rejection::LoginFailed);
    }
    let uap = make_uap(suite, creds.pw(), &creds.bmp(), &card.q);
    let b_star = suite.hash_fields(&[creds.id(), uap.as_ref(), card.z.as_ref()]);
    let d_star = suite.hash_fields(&[card.c.as_ref(), b_star.as_ref(), card.z.as_ref()]);
    if d_star == card.d {
        Ok(b_star)
    } else {
        Err(Rejection::LoginFailed)
    }
}

/// Live user-side handshake state; consumed by [`UserSession::on_m4`].
#[derive(Clone)]
pub struct UserSession {
    a: Scalar,
    e2: Point,
    b_star: Digest,
    sid: Vec<u8>,
    t1: Timestamp,
}

impl fmt::Debug for UserSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserSession")
            .field("sid", &String::from_utf8_lossy(&self.sid))
            .field("t1", &self.t1)
            .finish_non_exhaustive()
    }
}

/// Builds M1: `e1 = a*G`, `e2 = a*X`, `e3 = E(B*, SID, T1)` under `kdf(e2)`.
pub fn user_auth_init<R: RngCore + ?Sized>(
    env: &Env,
    rng: &mut R,
    b_star: Digest,
    sid: &[u8],
    t1: Timestamp,
    gateway_public: &Point,
) -> Result<(M1, UserSession), Rejection> {
    let suite = &env.suite;
    let a = suite.random_scalar(rng);
    let e1 = suite.mul_generator(&a);
    let e2 = suite.scalar_mult(&a, gateway_public).map_err(Rejection::InvalidPoint)?;
    let key = suite.kdf_key(&e2).map_err(Rejection::InvalidPoint)?;
    let e3 = ae_seal(
        &key,
        NONCE_TAG_TO_GATEWAY,
        &frame(&[b_star.as_ref(), sid, &t1.to_bytes()]),
    );
    let session = UserSession {
        a,
        e2,
        b_star,
        sid: sid.to_vec(),
        t1,
    };
    Ok((M1 { e1, e3 }, session))
}

impl UserSession {
    /// The ECDH point shared with the gateway. Exposed for insider analyses.
    pub fn e2(&self) -> &Point {
        &self.e2
    }

    pub fn ephemeral(&self) -> &Scalar {
        &self.a
    }

    pub fn b_star(&self) -> &Digest {
        &self.b_star
    }

    pub fn sid(&self) -> &[u8] {
        &self.sid
    }

    pub fn t1(&self) -> Timestamp {
        self.t1
    }

    /// Opens e7, checks freshness and `B`, then unblinds `SK = SKU xor z`.
    pub fn on_m4(self, env: &Env, card: &SmartCard, m4: &M4, now: Timestamp) -> Result<SessionKey, Rejection> {
        let suite = &env.suite;
        let key = suite.kdf_key(&self.e2).map_err(Rejection::InvalidPoint)?;
        let plain = ae_open(&key, &m4.e7).map_err(|_| Rejection::Decryption)?;
        let f = unframe(&plain, 3).map_err(Rejection::MalformedPlaintext)?;
        let b = read_digest(f[0])?;
        let sku = read_digest(f[1])?;
        let t4 = read_timestamp(f[2])?;
        env.check_fresh(t4, now)?;
        if b != self.b_star {
            return Err(Rejection::GatewayAuth);
        }
        Ok(SessionKey::new(sku ^ card.z))
    }
}

/// Pending password change on the user side.
#[derive(Clone)]
pub struct PcSession {
    e2: Point,
    id: Vec<u8>,
    uap_new: Digest,
    q_new: Digest,
}

impl fmt::Debug for PcSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PcSession")
            .field("id", &String::from_utf8_lossy(&self.id))
            .finish_non_exhaustive()
    }
}

/// Verifies the old credentials on the card, then builds PC1 carrying
/// `E(ID, B*, UAP_new, T1)`. Nothing is emitted when the login check fails.
pub fn user_pc_request<R: RngCore + ?Sized>(
    env: &Env,
    rng: &mut R,
    card: &SmartCard,
    creds: &Credentials,
    pw_new: &[u8],
    t1: Timestamp,
    gateway_public: &Point,
) -> Result<(Pc1, PcSession), Rejection> {
    let suite = &env.suite;
    let b_star = user_login(suite, card, creds)?;
    let q_new = Digest::random(rng);
    let uap_new = make_uap(suite, pw_new, &creds.bmp(), &q_new);
    let a = suite.random_scalar(rng);
    let e1 = suite.mul_generator(&a);
    let e2 = suite.scalar_mult(&a, gateway_public).map_err(Rejection::InvalidPoint)?;
    let key = suite.kdf_key(&e2).map_err(Rejection::InvalidPoint)?;
    let e3 = ae_seal(
        &key,
        NONCE_TAG_TO_GATEWAY,
        &frame(&[creds.id(), b_star.as_ref(), uap_new.as_ref(), &t1.to_bytes()]),
    );
    let session = PcSession {
        e2,
        id: creds.id().to_vec(),
        uap_new,
        q_new,
    };
    Ok((Pc1 { e1, e3 }, session))
}

impl PcSession {
    /// Authenticates PC2 and rewrites `q` and `D`; the card is untouched on
    /// any failure.
    pub fn confirm(self, env: &Env, card: &mut SmartCard, pc2: &Pc2, now: Timestamp) -> Result<(), Rejection> {
        let suite = &env.suite;
        let key = suite.kdf_key(&self.e2).map_err(Rejection::InvalidPoint)?;
        let plain = ae_open(&key, &pc2.ct).map_err(|_| Rejection::Decryption)?;
        let f = unframe(&plain, 2).map_err(Rejection::MalformedPlaintext)?;
        let b_new = read_digest(f[0])?;
        let t2 = read_timestamp(f[1])?;
        env.check_fresh(t2, now)?;
        let expected = suite.hash_fields(&[&self.id, self.uap_new.as_ref(), card.z.as_ref()]);
        if expected != b_new {
            return Err(Rejection::GatewayAuth);
        }
        card.q = self.q_new;
        card.d = suite.hash_fields(&[card.c.as_ref(), b_new.as_ref(), card.z.as_ref()]);
        Ok(())
    }
}
