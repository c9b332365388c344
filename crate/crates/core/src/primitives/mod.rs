//! Group arithmetic, hashing, authenticated encryption and byte encodings
//! shared by every protocol role.

mod ae;
mod curve;
mod hash;
pub mod meter;

pub use ae::{ae_open, ae_seal, Ciphertext, NONCE_TAG_TO_GATEWAY, NONCE_TAG_TO_USER};
pub use curve::{CurveParams, Point, Scalar, POINT_TAG_AFFINE, POINT_TAG_INFINITY};
pub use hash::{xor_bytes, Digest, HashAlg, DIGEST_LEN};

use meter::Op;

/// Domain-separation prefix of [`CryptoSuite::kdf_key`].
pub const KDF_PREFIX: u8 = 0x01;
/// Domain-separation prefix of [`CryptoSuite::p2b`].
pub const P2B_PREFIX: u8 = 0x02;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PrimitiveError {
    #[error("point is not on the curve")]
    PointNotOnCurve,
    #[error("the point at infinity has no canonical digest")]
    PointAtInfinity,
    #[error("scalar is not below the group order")]
    ScalarOutOfRange,
    #[error("invalid curve parameters: {0}")]
    InvalidCurve(&'static str),
    #[error("length mismatch: expected {expected} bytes, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("encoding error: {0}")]
    Encoding(&'static str),
    #[error("authentication failed")]
    AuthenticationFailed,
}

/// Concatenates fields, each preceded by its 2-byte big-endian length.
///
/// Panics on a field longer than 65535 bytes; callers bound their inputs.
pub fn frame(fields: &[&[u8]]) -> Vec<u8> {
    let mut out = Vec::with_capacity(fields.iter().map(|f| f.len() + 2).sum());
    for f in fields {
        let len = u16::try_from(f.len()).expect("framed field longer than 65535 bytes");
        out.extend(len.to_be_bytes());
        out.extend_from_slice(f);
    }
    out
}

/// Splits exactly `count` length-prefixed fields; trailing bytes are an error.
pub fn unframe(mut bytes: &[u8], count: usize) -> Result<Vec<&[u8]>, PrimitiveError> {
    let mut fields = Vec::with_capacity(count);
    for _ in 0..count {
        if bytes.len() < 2 {
            return Err(PrimitiveError::Encoding("truncated field length"));
        }
        let len = u16::from_be_bytes([bytes[0], bytes[1]]) as usize;
        if bytes.len() < 2 + len {
            return Err(PrimitiveError::Encoding("truncated field"));
        }
        fields.push(&bytes[2..2 + len]);
        bytes = &bytes[2 + len..];
    }
    if !bytes.is_empty() {
        return Err(PrimitiveError::Encoding("trailing bytes after fields"));
    }
    Ok(fields)
}

/// A curve plus the hash every role agrees on.
///
/// The hashing and multiplication methods here are the metered entry points:
/// protocol code goes through them so that per-role operation counts can be
/// read back with [`meter::measure`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CryptoSuite {
    curve: CurveParams,
    hash: HashAlg,
}

impl CryptoSuite {
    pub fn new(curve: CurveParams, hash: HashAlg) -> Self {
        CryptoSuite { curve, hash }
    }

    pub fn toy() -> Self {
        Self::new(CurveParams::toy(), HashAlg::Sha256)
    }

    pub fn standard() -> Self {
        Self::new(CurveParams::p256(), HashAlg::Sha256)
    }

    pub fn curve(&self) -> &CurveParams {
        &self.curve
    }

    pub fn hash_alg(&self) -> HashAlg {
        self.hash
    }

    pub fn hash_id(&self) -> &'static str {
        self.hash.id()
    }

    /// One protocol-level hash application.
    pub fn hash(&self, data: &[u8]) -> Digest {
        meter::record(Op::Hash);
        self.hash.digest(data)
    }

    /// `h(lp(f1) || lp(f2) || ...)`, counted as one hash.
    pub fn hash_fields(&self, fields: &[&[u8]]) -> Digest {
        self.hash(&frame(fields))
    }

    /// Digest of a finite point used as an XOR operand and hash input.
    pub fn p2b(&self, point: &Point) -> Result<Digest, PrimitiveError> {
        self.point_digest(P2B_PREFIX, point)
    }

    /// Symmetric key derived from a finite point.
    pub fn kdf_key(&self, point: &Point) -> Result<Digest, PrimitiveError> {
        self.point_digest(KDF_PREFIX, point)
    }

    fn point_digest(&self, prefix: u8, point: &Point) -> Result<Digest, PrimitiveError> {
        let coords = self.curve.coordinate_bytes(point)?;
        meter::record(Op::AuxHash);
        let mut buf = Vec::with_capacity(1 + coords.len());
        buf.push(prefix);
        buf.extend(coords);
        Ok(self.hash.digest(&buf))
    }

    pub fn point_add(&self, p: &Point, q: &Point) -> Result<Point, PrimitiveError> {
        self.curve.add(p, q)
    }

    /// One metered EC point multiplication.
    pub fn scalar_mult(&self, k: &Scalar, point: &Point) -> Result<Point, PrimitiveError> {
        let out = self.curve.mul(k, point)?;
        meter::record(Op::Ecc);
        Ok(out)
    }

    pub fn mul_generator(&self, k: &Scalar) -> Point {
        self.scalar_mult(k, self.curve.generator())
            .expect("generator is on the curve")
    }

    pub fn random_scalar<R: rand::RngCore + ?Sized>(&self, rng: &mut R) -> Scalar {
        self.curve.random_scalar(rng)
    }

    pub fn encode_scalar(&self, k: &Scalar) -> Vec<u8> {
        self.curve.encode_scalar(k)
    }

    pub fn encode_point(&self, p: &Point) -> Vec<u8> {
        self.curve.encode_point(p)
    }

    pub fn decode_point(&self, bytes: &[u8]) -> Result<Point, PrimitiveError> {
        self.curve.decode_point(bytes)
    }

    /// Decodes a point and requires it to be finite.
    pub fn decode_finite_point(&self, bytes: &[u8]) -> Result<Point, PrimitiveError> {
        match self.curve.decode_point(bytes)? {
            Point::Infinity => Err(PrimitiveError::PointAtInfinity),
            p => Ok(p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn point_digests_on_toy_generator() {
        let suite = CryptoSuite::toy();
        let g = suite.curve().generator().clone();
        // SHA-256 over prefix || x || y with one-byte coordinates (5, 1).
        assert_eq!(
            suite.p2b(&g).unwrap().to_hex(),
            "ff9192ad3f2791ecea4bbd738e7488898dd01f12a5604ceb5bf3bba7be213b15"
        );
        assert_eq!(
            suite.kdf_key(&g).unwrap().to_hex(),
            "cccf6121efa5d90e210d86739af2f778c4fe50194cd39e4994d16c51393c5b8d"
        );
        assert_ne!(suite.p2b(&g).unwrap(), suite.kdf_key(&g).unwrap());
        assert_eq!(suite.p2b(&g).unwrap(), suite.p2b(&g).unwrap());
    }

    #[test]
    fn point_digest_of_infinity_fails() {
        let suite = CryptoSuite::toy();
        assert_eq!(suite.p2b(&Point::Infinity), Err(PrimitiveError::PointAtInfinity));
        assert_eq!(suite.kdf_key(&Point::Infinity), Err(PrimitiveError::PointAtInfinity));
    }

    #[test]
    fn kdf_key_agrees_across_ecdh() {
        let suite = CryptoSuite::standard();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let s = suite.random_scalar(&mut rng);
        let a = suite.random_scalar(&mut rng);
        let x = suite.mul_generator(&s);
        let e1 = suite.mul_generator(&a);
        let user = suite.kdf_key(&suite.scalar_mult(&a, &x).unwrap()).unwrap();
        let gw = suite.kdf_key(&suite.scalar_mult(&s, &e1).unwrap()).unwrap();
        assert_eq!(user, gw);
    }

    #[test]
    fn framing_roundtrip_and_strictness() {
        let framed = frame(&[b"ab", b"", b"xyz"]);
        assert_eq!(framed, [0, 2, b'a', b'b', 0, 0, 0, 3, b'x', b'y', b'z']);
        assert_eq!(unframe(&framed, 3).unwrap(), vec![&b"ab"[..], b"", b"xyz"]);
        assert!(unframe(&framed, 2).is_err());
        assert!(unframe(&framed, 4).is_err());
        assert!(unframe(&framed[..framed.len() - 1], 3).is_err());
    }

    #[test]
    fn framing_prevents_splice_collisions() {
        let suite = CryptoSuite::toy();
        assert_ne!(suite.hash_fields(&[b"ab", b"c"]), suite.hash_fields(&[b"a", b"bc"]));
    }

    #[test]
    fn metering_counts_protocol_and_aux_separately() {
        let suite = CryptoSuite::toy();
        let g = suite.curve().generator().clone();
        let k = suite.curve().scalar(BigUint::from(4u8)).unwrap();
        let (_, tally) = meter::measure(|| {
            suite.hash(b"x");
            suite.p2b(&g).unwrap();
            suite.kdf_key(&g).unwrap();
            suite.scalar_mult(&k, &g).unwrap();
            suite.point_add(&g, &g).unwrap();
        });
        assert_eq!(
            tally,
            meter::Tally {
                hash: 1,
                ecc: 1,
                sym: 0,
                aux_hash: 2
            }
        );
    }
}
