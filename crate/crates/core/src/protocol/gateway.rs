use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::RngCore;

use crate::primitives::{ae_open, ae_seal, frame, unframe, CryptoSuite, Digest, Point, Scalar, NONCE_TAG_TO_USER};

use super::messages::{Pc1, Pc2, M1, M2, M3, M4};
use super::{check_identifier, read_digest, read_timestamp, Env, RegistrationError, Rejection, SessionKey, Timestamp};

/// A verifier issued by a password change and not yet promoted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PendingVerifier {
    pub b: Digest,
    pub deadline: Timestamp,
}

#[derive(Clone, PartialEq, Eq)]
pub struct UserRecord {
    pub id: Vec<u8>,
    pub b: Digest,
    pub z: Digest,
    pub pending: Option<PendingVerifier>,
}

impl fmt::Debug for UserRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserRecord")
            .field("id", &String::from_utf8_lossy(&self.id))
            .field("b", &self.b)
            .field("pending", &self.pending.is_some())
            .finish_non_exhaustive()
    }
}

/// Card content produced by the gateway at user registration.
pub(crate) struct CardIssue {
    pub c: Digest,
    pub d: Digest,
    pub z: Digest,
}

/// `(B, T1)` pairs accepted within the freshness window, ordered by `T1`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct ReplayCache {
    seen: BTreeSet<(Timestamp, Digest)>,
}

impl ReplayCache {
    fn contains(&self, b: &Digest, t1: Timestamp) -> bool {
        self.seen.contains(&(t1, *b))
    }

    fn insert(&mut self, b: Digest, t1: Timestamp, now: Timestamp, window_ms: u64) {
        // Anything older than now - window fails the freshness check anyway.
        let cutoff = Timestamp(now.0.saturating_sub(window_ms));
        self.seen = self.seen.split_off(&(cutoff, Digest::ZERO));
        self.seen.insert((t1, b));
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct GatewayState {
    secret: Scalar,
    public: Point,
    users: BTreeMap<Vec<u8>, UserRecord>,
    by_verifier: HashMap<Digest, Vec<u8>>,
    sensors: BTreeMap<Vec<u8>, Digest>,
    provisioned: BTreeSet<Vec<u8>>,
    replay: ReplayCache,
}

impl fmt::Debug for GatewayState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GatewayState")
            .field("public", &self.public)
            .field("users", &self.users.len())
            .field("sensors", &self.sensors.len())
            .finish_non_exhaustive()
    }
}

/// Gateway-side state carried from M1 to M3.
#[derive(Clone)]
pub struct GatewaySession {
    e2: Point,
    e4: Digest,
    c: Scalar,
    user_id: Vec<u8>,
    b: Digest,
    via_pending: bool,
    sid: Vec<u8>,
    auth: Digest,
    t2: Timestamp,
}

impl fmt::Debug for GatewaySession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GatewaySession")
            .field("sid", &String::from_utf8_lossy(&self.sid))
            .field("t2", &self.t2)
            .finish_non_exhaustive()
    }
}

impl GatewaySession {
    pub fn sid(&self) -> &[u8] {
        &self.sid
    }

    pub fn t2(&self) -> Timestamp {
        self.t2
    }
}

impl GatewayState {
    pub fn new<R: RngCore + ?Sized>(suite: &CryptoSuite, rng: &mut R) -> Self {
        Self::from_secret(suite, suite.random_scalar(rng))
    }

    pub fn from_secret(suite: &CryptoSuite, secret: Scalar) -> Self {
        let public = suite
            .curve()
            .mul(&secret, suite.curve().generator())
            .expect("generator on curve");
        GatewayState {
            secret,
            public,
            users: BTreeMap::new(),
            by_verifier: HashMap::new(),
            sensors: BTreeMap::new(),
            provisioned: BTreeSet::new(),
            replay: ReplayCache::default(),
        }
    }

    pub fn public_key(&self) -> &Point {
        &self.public
    }

    pub fn secret_key(&self) -> &Scalar {
        &self.secret
    }

    pub fn users(&self) -> impl Iterator<Item = &UserRecord> {
        self.users.values()
    }

    pub fn user(&self, id: &[u8]) -> Option<&UserRecord> {
        self.users.get(id)
    }

    pub fn sensors(&self) -> impl Iterator<Item = (&[u8], &Digest)> {
        self.sensors.iter().map(|(k, v)| (k.as_slice(), v))
    }

    pub fn provisioned(&self) -> impl Iterator<Item = &[u8]> {
        self.provisioned.iter().map(Vec::as_slice)
    }

    pub fn replay_cache_len(&self) -> usize {
        self.replay.seen.len()
    }

    /// Copy with the replay cache emptied, for comparing persistent state.
    pub fn without_replay_cache(&self) -> GatewayState {
        let mut g = self.clone();
        g.replay = ReplayCache::default();
        g
    }

    fn sensor_auth(&self, suite: &CryptoSuite, sid: &[u8]) -> Digest {
        suite.hash_fields(&[sid, &suite.encode_scalar(&self.secret)])
    }

    /// Issues `C`, `D`, `z` for a new user and stores `(ID, B, z)`.
    pub(crate) fn register_user<R: RngCore + ?Sized>(
        &mut self,
        suite: &CryptoSuite,
        rng: &mut R,
        id: &[u8],
        uap: &Digest,
    ) -> Result<CardIssue, RegistrationError> {
        check_identifier(id, "ID must be 1..=1024 bytes")?;
        if self.users.contains_key(id) {
            return Err(RegistrationError::DuplicateUser(String::from_utf8_lossy(id).into()));
        }
        let z = Digest::random(rng);
        let b = suite.hash_fields(&[id, uap.as_ref(), z.as_ref()]);
        if self.by_verifier.contains_key(&b) {
            return Err(RegistrationError::VerifierCollision);
        }
        let c = suite.hash_fields(&[id, &suite.encode_scalar(&self.secret)]);
        let d = suite.hash_fields(&[c.as_ref(), b.as_ref(), z.as_ref()]);
        self.insert_user(UserRecord {
            id: id.to_vec(),
            b,
            z,
            pending: None,
        });
        Ok(CardIssue { c, d, z })
    }

    /// Adds a SID to the list of sensors allowed to register.
    pub fn provision_sensor(&mut self, sid: &[u8]) -> Result<(), RegistrationError> {
        check_identifier(sid, "SID must be 1..=1024 bytes")?;
        self.provisioned.insert(sid.to_vec());
        Ok(())
    }

    /// `AS = h(SID || S)`, stored next to the SID and handed to the sensor.
    pub fn register_sensor(&mut self, suite: &CryptoSuite, sid: &[u8]) -> Result<Digest, RegistrationError> {
        if !self.provisioned.contains(sid) {
            return Err(RegistrationError::UnprovisionedSensor(
                String::from_utf8_lossy(sid).into(),
            ));
        }
        let auth = self.sensor_auth(suite, sid);
        self.sensors.insert(sid.to_vec(), auth);
        Ok(auth)
    }

    pub(crate) fn insert_user(&mut self, record: UserRecord) {
        self.by_verifier.insert(record.b, record.id.clone());
        if let Some(p) = &record.pending {
            self.by_verifier.insert(p.b, record.id.clone());
        }
        self.users.insert(record.id.clone(), record);
    }

    pub(crate) fn insert_sensor(&mut self, sid: Vec<u8>, auth: Digest) {
        self.sensors.insert(sid, auth);
    }

    /// Finds the record owning verifier `b`. The old verifier of a record
    /// with a pending change stops matching once the grace deadline passes.
    fn find_by_verifier(&self, b: &Digest, now: Timestamp) -> Option<(&UserRecord, bool)> {
        let record = self.users.get(self.by_verifier.get(b)?)?;
        if record.b == *b {
            match record.pending {
                Some(p) if now >= p.deadline => None,
                _ => Some((record, false)),
            }
        } else if record.pending.map(|p| p.b) == Some(*b) {
            Some((record, true))
        } else {
            None
        }
    }

    fn promote(&mut self, id: &[u8]) {
        if let Some(record) = self.users.get_mut(id) {
            if let Some(p) = record.pending.take() {
                self.by_verifier.remove(&record.b);
                record.b = p.b;
            }
        }
    }

    /// Promotes every pending verifier whose grace deadline has passed.
    pub fn expire_pending(&mut self, now: Timestamp) {
        let due: Vec<Vec<u8>> = self
            .users
            .values()
            .filter(|r| r.pending.is_some_and(|p| now >= p.deadline))
            .map(|r| r.id.clone())
            .collect();
        for id in due {
            self.promote(&id);
        }
    }

    /// Handles M1 and relays the request to the sensor as M2.
    ///
    /// Work done before the first check that can fail: one EC multiplication
    /// (`e2 = S * e1`) and one decryption.
    pub fn on_m1<R: RngCore + ?Sized>(
        &mut self,
        env: &Env,
        rng: &mut R,
        m1: &M1,
        now: Timestamp,
    ) -> Result<(M2, GatewaySession), Rejection> {
        let suite = &env.suite;
        let e2 = suite
            .scalar_mult(&self.secret, &m1.e1)
            .map_err(Rejection::InvalidPoint)?;
        let key = suite.kdf_key(&e2).map_err(Rejection::InvalidPoint)?;
        let plain = ae_open(&key, &m1.e3).map_err(|_| Rejection::Decryption)?;
        let f = unframe(&plain, 3).map_err(Rejection::MalformedPlaintext)?;
        let b = read_digest(f[0])?;
        let sid = f[1].to_vec();
        let t1 = read_timestamp(f[2])?;
        env.check_fresh(t1, now)?;
        if env.config.replay_cache && self.replay.contains(&b, t1) {
            return Err(Rejection::Replay);
        }
        let (record, via_pending) = self.find_by_verifier(&b, now).ok_or(Rejection::UserAuth)?;
        let user_id = record.id.clone();
        if !self.sensors.contains_key(&sid) {
            return Err(Rejection::UnknownSensor);
        }
        let auth = self.sensor_auth(suite, &sid);
        debug_assert_eq!(Some(&auth), self.sensors.get(&sid));

        let blind = Digest::random(rng);
        let c = suite.random_scalar(rng);
        let e4 = blind ^ suite.p2b(&e2).map_err(Rejection::InvalidPoint)?;
        let e5 = suite.mul_generator(&c);
        let sp1 = e4 ^ auth;
        let sp2 = suite.hash_fields(&[e4.as_ref(), &sid, &now.to_bytes()]);
        if env.config.replay_cache {
            self.replay.insert(b, t1, now, env.config.freshness_ms);
        }
        let session = GatewaySession {
            e2,
            e4,
            c,
            user_id,
            b,
            via_pending,
            sid,
            auth,
            t2: now,
        };
        Ok((M2 { sp1, sp2, t2: now, e5 }, session))
    }

    /// Handles M3: derives `SK`, authenticates the sensor through `GP` and
    /// returns M4 for the user.
    pub fn on_m3(
        &mut self,
        env: &Env,
        session: GatewaySession,
        m3: &M3,
        now: Timestamp,
    ) -> Result<(M4, SessionKey), Rejection> {
        let suite = &env.suite;
        let shared = suite.scalar_mult(&session.c, &m3.e6).map_err(Rejection::InvalidPoint)?;
        let shared = suite.p2b(&shared).map_err(Rejection::InvalidPoint)?;
        let sk = suite.hash_fields(&[session.e4.as_ref(), shared.as_ref()]);
        let gp = suite.hash_fields(&[sk.as_ref(), session.auth.as_ref(), &m3.t3.to_bytes()]);
        if gp != m3.gp {
            return Err(Rejection::SensorAuth);
        }
        env.check_fresh(m3.t3, now)?;
        let z = self.users.get(&session.user_id).ok_or(Rejection::UserAuth)?.z;
        let sku = sk ^ z;
        let key = suite.kdf_key(&session.e2).map_err(Rejection::InvalidPoint)?;
        let e7 = ae_seal(
            &key,
            NONCE_TAG_TO_USER,
            &frame(&[session.b.as_ref(), sku.as_ref(), &now.to_bytes()]),
        );
        if session.via_pending {
            self.promote(&session.user_id);
        }
        Ok((M4 { e7 }, SessionKey::new(sk)))
    }

    /// Handles a password-change request: checks `B*` against the stored
    /// verifier, records `B_new` as pending and confirms it to the user.
    pub fn on_pc(&mut self, env: &Env, pc1: &Pc1, now: Timestamp) -> Result<Pc2, Rejection> {
        let suite = &env.suite;
        let e2 = suite
            .scalar_mult(&self.secret, &pc1.e1)
            .map_err(Rejection::InvalidPoint)?;
        let key = suite.kdf_key(&e2).map_err(Rejection::InvalidPoint)?;
        let plain = ae_open(&key, &pc1.e3).map_err(|_| Rejection::Decryption)?;
        let f = unframe(&plain, 4).map_err(Rejection::MalformedPlaintext)?;
        let id = f[0];
        let b_star = read_digest(f[1])?;
        let uap_new = read_digest(f[2])?;
        let t1 = read_timestamp(f[3])?;
        env.check_fresh(t1, now)?;
        let (record, via_pending) = self.find_by_verifier(&b_star, now).ok_or(Rejection::UserAuth)?;
        if record.id != id {
            return Err(Rejection::UserAuth);
        }
        let id = record.id.clone();
        let z = record.z;
        let b_new = suite.hash_fields(&[&id, uap_new.as_ref(), z.as_ref()]);
        if via_pending {
            self.promote(&id);
        }
        let record = self.users.get_mut(&id).expect("record found above");
        if let Some(old) = record.pending.take() {
            self.by_verifier.remove(&old.b);
        }
        record.pending = Some(PendingVerifier {
            b: b_new,
            deadline: now.plus(env.config.grace_ms),
        });
        self.by_verifier.insert(b_new, id);
        let ct = ae_seal(&key, NONCE_TAG_TO_USER, &frame(&[b_new.as_ref(), &now.to_bytes()]));
        Ok(Pc2 { ct })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn replay_cache_prunes_old_entries() {
        let mut cache = ReplayCache::default();
        let b = Digest::new([7u8; 32]);
        cache.insert(b, Timestamp(1_000), Timestamp(1_000), 2_000);
        assert!(cache.contains(&b, Timestamp(1_000)));
        cache.insert(b, Timestamp(9_000), Timestamp(9_000), 2_000);
        assert!(!cache.contains(&b, Timestamp(1_000)));
        assert!(cache.contains(&b, Timestamp(9_000)));
        assert_eq!(cache.seen.len(), 1);
    }

    #[test]
    fn sensor_registration_requires_provisioning() {
        let suite = CryptoSuite::toy();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut gw = GatewayState::new(&suite, &mut rng);
        assert_eq!(
            gw.register_sensor(&suite, b"s1"),
            Err(RegistrationError::UnprovisionedSensor("s1".into()))
        );
        gw.provision_sensor(b"s1").unwrap();
        let first = gw.register_sensor(&suite, b"s1").unwrap();
        assert_eq!(first, gw.register_sensor(&suite, b"s1").unwrap());
        // AS = h(lp(SID) || lp(enc(S))) recomputed by hand.
        let mut framed = vec![0, 2, b's', b'1', 0, 1];
        framed.extend(suite.encode_scalar(gw.secret_key()));
        assert_eq!(first, suite.hash_alg().digest(&framed));
    }

    #[test]
    fn duplicate_user_rejected() {
        let suite = CryptoSuite::toy();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut gw = GatewayState::new(&suite, &mut rng);
        let uap = Digest::new([1u8; 32]);
        gw.register_user(&suite, &mut rng, b"alice", &uap).unwrap();
        assert!(matches!(
            gw.register_user(&suite, &mut rng, b"alice", &uap),
            Err(RegistrationError::DuplicateUser(_))
        ));
        assert!(matches!(
            gw.register_user(&suite, &mut rng, b"", &uap),
            Err(RegistrationError::InvalidIdentifier(_))
        ));
    }

    #[test]
    fn issued_values_match_framing_oracle() {
        let suite = CryptoSuite::toy();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut gw = GatewayState::new(&suite, &mut rng);
        let uap = Digest::new([9u8; 32]);
        let issue = gw.register_user(&suite, &mut rng, b"bob", &uap).unwrap();
        let rec = gw.user(b"bob").unwrap();
        let lp = |parts: &[&[u8]]| {
            let mut v = Vec::new();
            for p in parts {
                v.extend((p.len() as u16).to_be_bytes());
                v.extend(*p);
            }
            suite.hash_alg().digest(&v)
        };
        assert_eq!(rec.b, lp(&[b"bob", uap.as_ref(), issue.z.as_ref()]));
        assert_eq!(issue.c, lp(&[b"bob", &suite.encode_scalar(gw.secret_key())]));
        assert_eq!(issue.d, lp(&[issue.c.as_ref(), rec.b.as_ref(), issue.z.as_ref()]));
        assert_eq!(rec.z, issue.z);
    }
}
