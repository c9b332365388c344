use std::fmt;

use rand::RngCore;

use crate::primitives::Digest;

use super::messages::{M2, M3};
use super::{Env, Rejection, SessionKey, Timestamp};

#[derive(Clone, PartialEq, Eq)]
pub struct SensorState {
    sid: Vec<u8>,
    auth: Digest,
}

impl fmt::Debug for SensorState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SensorState")
            .field("sid", &String::from_utf8_lossy(&self.sid))
            .finish_non_exhaustive()
    }
}

impl SensorState {
    /// `auth` is the `AS` value returned by the gateway at registration.
    pub fn new(sid: impl Into<Vec<u8>>, auth: Digest) -> Self {
        SensorState { sid: sid.into(), auth }
    }

    pub fn sid(&self) -> &[u8] {
        &self.sid
    }

    pub fn auth(&self) -> &Digest {
        &self.auth
    }

    /// Recovers `e4`, authenticates the gateway through `SP2`, then derives
    /// `SK = h(e4 || p2b(d * e5))` and answers with M3.
    ///
    /// A forged M2 costs one XOR and one hash before it is dropped.
    pub fn on_m2<R: RngCore + ?Sized>(
        &self,
        env: &Env,
        rng: &mut R,
        m2: &M2,
        now: Timestamp,
    ) -> Result<(M3, SessionKey), Rejection> {
        let suite = &env.suite;
        let e4 = m2.sp1 ^ self.auth;
        let sp2 = suite.hash_fields(&[e4.as_ref(), &self.sid, &m2.t2.to_bytes()]);
        if sp2 != m2.sp2 {
            return Err(Rejection::GatewayAuth);
        }
        env.check_fresh(m2.t2, now)?;
        let d = suite.random_scalar(rng);
        let shared = suite.scalar_mult(&d, &m2.e5).map_err(Rejection::InvalidPoint)?;
        let shared = suite.p2b(&shared).map_err(Rejection::InvalidPoint)?;
        let sk = suite.hash_fields(&[e4.as_ref(), shared.as_ref()]);
        let e6 = suite.mul_generator(&d);
        let gp = suite.hash_fields(&[sk.as_ref(), self.auth.as_ref(), &now.to_bytes()]);
        Ok((M3 { e6, gp, t3: now }, SessionKey::new(sk)))
    }
}
