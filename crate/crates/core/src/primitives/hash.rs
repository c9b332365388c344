use std::fmt;
use std::ops::BitXor;

use sha2::{Digest as _, Sha256, Sha512_256};

use super::PrimitiveError;

pub const DIGEST_LEN: usize = 32;

/// A 32-byte hash output or hash-sized random string.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest([u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; DIGEST_LEN]);

    pub const fn new(bytes: [u8; DIGEST_LEN]) -> Self {
        Digest(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, PrimitiveError> {
        let arr: [u8; DIGEST_LEN] = bytes.try_into().map_err(|_| PrimitiveError::LengthMismatch {
            expected: DIGEST_LEN,
            actual: bytes.len(),
        })?;
        Ok(Digest(arr))
    }

    pub fn random<R: rand::RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut out = [0u8; DIGEST_LEN];
        rng.fill_bytes(&mut out);
        Digest(out)
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl AsRef<[u8]> for Digest {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({}..)", &self.to_hex()[..16])
    }
}

impl BitXor for Digest {
    type Output = Digest;

    fn bitxor(self, rhs: Digest) -> Digest {
        let mut out = self.0;
        out.iter_mut().zip(rhs.0).for_each(|(a, b)| *a ^= b);
        Digest(out)
    }
}

/// Bitwise XOR of two 32-byte strings.
pub fn xor_bytes(a: &[u8], b: &[u8]) -> Result<Digest, PrimitiveError> {
    let a = Digest::from_slice(a)?;
    let b = Digest::from_slice(b)?;
    Ok(a ^ b)
}

/// The repository-wide 256-bit hash. SHA-256 unless configured otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum HashAlg {
    #[default]
    Sha256,
    Sha512_256,
}

impl HashAlg {
    pub fn id(&self) -> &'static str {
        match self {
            HashAlg::Sha256 => "SHA-256",
            HashAlg::Sha512_256 => "SHA-512/256",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        match id {
            "SHA-256" | "sha256" => Some(HashAlg::Sha256),
            "SHA-512/256" | "sha512-256" => Some(HashAlg::Sha512_256),
            _ => None,
        }
    }

    /// Raw digest; does not touch the operation meter.
    pub fn digest(&self, data: &[u8]) -> Digest {
        let out: [u8; DIGEST_LEN] = match self {
            HashAlg::Sha256 => Sha256::digest(data).into(),
            HashAlg::Sha512_256 => Sha512_256::digest(data).into(),
        };
        Digest(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_reference_vectors() {
        assert_eq!(
            HashAlg::Sha256.digest(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            HashAlg::Sha256.digest(b"a").to_hex(),
            "ca978112ca1bbdcafac231b39a23dc4da786eff8147c4e72b9807785afee48bb"
        );
    }

    #[test]
    fn xor_identities() {
        let a = HashAlg::Sha256.digest(b"x");
        let b = HashAlg::Sha256.digest(b"y");
        assert_eq!(a ^ a, Digest::ZERO);
        assert_eq!(a ^ Digest::ZERO, a);
        assert_eq!(a ^ b, b ^ a);
        assert_eq!(xor_bytes(a.as_ref(), b.as_ref()).unwrap(), a ^ b);
    }

    #[test]
    fn xor_length_mismatch() {
        assert_eq!(
            xor_bytes(&[0u8; 32], &[0u8; 31]),
            Err(PrimitiveError::LengthMismatch {
                expected: 32,
                actual: 31
            })
        );
    }

    #[test]
    fn hash_ids_roundtrip() {
        for alg in [HashAlg::Sha256, HashAlg::Sha512_256] {
            assert_eq!(HashAlg::from_id(alg.id()), Some(alg));
        }
        assert_ne!(HashAlg::Sha256.digest(b"a"), HashAlg::Sha512_256.digest(b"a"));
    }
}
