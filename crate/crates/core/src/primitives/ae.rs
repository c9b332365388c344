//! ChaCha20-Poly1305 under a 32-byte key with a one-byte nonce tag.
//!
//! A key protects at most two messages: tag `0x01` for user to gateway and
//! `0x02` for gateway to user. The 96-bit nonce is the tag followed by zeros,
//! so nothing besides the tag travels on the wire.

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};

use super::meter::{self, Op};
use super::{Digest, PrimitiveError};

pub const NONCE_TAG_TO_GATEWAY: u8 = 0x01;
pub const NONCE_TAG_TO_USER: u8 = 0x02;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ciphertext {
    nonce_tag: u8,
    bytes: Vec<u8>,
}

impl Ciphertext {
    pub fn nonce_tag(&self) -> u8 {
        self.nonce_tag
    }

    /// Ciphertext including the 16-byte authentication tag.
    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// `nonce_tag || u16be(len) || bytes`
    pub fn encode(&self) -> Vec<u8> {
        let len = u16::try_from(self.bytes.len()).expect("ciphertext fits a u16 length");
        let mut out = Vec::with_capacity(3 + self.bytes.len());
        out.push(self.nonce_tag);
        out.extend(len.to_be_bytes());
        out.extend(&self.bytes);
        out
    }

    pub fn decode(raw: &[u8]) -> Result<Self, PrimitiveError> {
        if raw.len() < 3 {
            return Err(PrimitiveError::Encoding("truncated ciphertext"));
        }
        let len = u16::from_be_bytes([raw[1], raw[2]]) as usize;
        if raw.len() != 3 + len {
            return Err(PrimitiveError::Encoding("ciphertext length mismatch"));
        }
        Ok(Ciphertext {
            nonce_tag: raw[0],
            bytes: raw[3..].to_vec(),
        })
    }
}

fn nonce(tag: u8) -> Nonce {
    let mut n = [0u8; 12];
    n[0] = tag;
    n.into()
}

pub fn ae_seal(key: &Digest, nonce_tag: u8, plaintext: &[u8]) -> Ciphertext {
    meter::record(Op::Sym);
    let cipher = ChaCha20Poly1305::new(Key::from_slice(key.as_ref()));
    let bytes = cipher
        .encrypt(&nonce(nonce_tag), plaintext)
        .expect("in-memory encryption does not fail");
    Ciphertext { nonce_tag, bytes }
}

pub fn ae_open(key: &Digest, ct: &Ciphertext) -> Result<Vec<u8>, PrimitiveError> {
    meter::record(Op::Sym);
    let cipher = ChaCha20Poly1305::new(Key::from_slice(key.as_ref()));
    cipher
        .decrypt(&nonce(ct.nonce_tag), ct.bytes.as_slice())
        .map_err(|_| PrimitiveError::AuthenticationFailed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::HashAlg;

    #[test]
    fn roundtrip_and_wrong_key() {
        let k = HashAlg::Sha256.digest(b"k");
        let other = HashAlg::Sha256.digest(b"k2");
        let ct = ae_seal(&k, NONCE_TAG_TO_GATEWAY, b"hello");
        assert_eq!(ae_open(&k, &ct).unwrap(), b"hello");
        assert_eq!(ae_open(&other, &ct), Err(PrimitiveError::AuthenticationFailed));
    }

    #[test]
    fn every_bit_flip_rejected() {
        let k = HashAlg::Sha256.digest(b"k");
        let wire = ae_seal(&k, NONCE_TAG_TO_USER, b"some plaintext").encode();
        for i in 0..wire.len() * 8 {
            let mut m = wire.clone();
            m[i / 8] ^= 1 << (i % 8);
            let opened = Ciphertext::decode(&m).and_then(|ct| ae_open(&k, &ct));
            assert!(opened.is_err(), "bit {i} accepted");
        }
    }

    #[test]
    fn direction_tags_give_distinct_ciphertexts() {
        let k = HashAlg::Sha256.digest(b"k");
        let a = ae_seal(&k, NONCE_TAG_TO_GATEWAY, b"m");
        let b = ae_seal(&k, NONCE_TAG_TO_USER, b"m");
        assert_ne!(a.bytes(), b.bytes());
    }
}
