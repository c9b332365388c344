//! Wire units of the handshake (M1-M4) and password change (PC1, PC2).
//!
//! Layout: one type byte, then every field as a 2-byte big-endian length
//! followed by its bytes. Points use the curve's tagged encoding,
//! ciphertexts their own `tag || len || bytes` form and timestamps are
//! 8-byte big-endian milliseconds.

use serde::Serialize;

use crate::primitives::{frame, unframe, Ciphertext, CryptoSuite, Digest, Point, PrimitiveError};

use super::Timestamp;

pub const TYPE_M1: u8 = 0x01;
pub const TYPE_M2: u8 = 0x02;
pub const TYPE_M3: u8 = 0x03;
pub const TYPE_M4: u8 = 0x04;
pub const TYPE_PC1: u8 = 0x11;
pub const TYPE_PC2: u8 = 0x12;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("empty message")]
    Empty,
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("field `{field}`: {source}")]
    Field {
        field: &'static str,
        source: PrimitiveError,
    },
    #[error("framing: {0}")]
    Framing(PrimitiveError),
}

/// User to gateway: `e1 = a*G`, `e3 = E_{kdf(e2)}(B*, SID, T1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct M1 {
    pub e1: Point,
    pub e3: Ciphertext,
}

/// Gateway to sensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct M2 {
    pub sp1: Digest,
    pub sp2: Digest,
    pub t2: Timestamp,
    pub e5: Point,
}

/// Sensor to gateway.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct M3 {
    pub e6: Point,
    pub gp: Digest,
    pub t3: Timestamp,
}

/// Gateway to user: `e7 = E_{kdf(e2)}(B, SKU, T4)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct M4 {
    pub e7: Ciphertext,
}

/// Password-change request; the type byte is the request marker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pc1 {
    pub e1: Point,
    pub e3: Ciphertext,
}

/// Password-change confirmation carrying the encrypted new verifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pc2 {
    pub ct: Ciphertext,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    M1(M1),
    M2(M2),
    M3(M3),
    M4(M4),
    Pc1(Pc1),
    Pc2(Pc2),
}

/// One decoded field rendered for reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldView {
    pub name: &'static str,
    pub value: String,
}

/// Human-readable decoding of a wire message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MessageView {
    pub kind: &'static str,
    pub fields: Vec<FieldView>,
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::M1(_) => "M1",
            Message::M2(_) => "M2",
            Message::M3(_) => "M3",
            Message::M4(_) => "M4",
            Message::Pc1(_) => "PC1",
            Message::Pc2(_) => "PC2",
        }
    }

    pub fn type_byte(&self) -> u8 {
        match self {
            Message::M1(_) => TYPE_M1,
            Message::M2(_) => TYPE_M2,
            Message::M3(_) => TYPE_M3,
            Message::M4(_) => TYPE_M4,
            Message::Pc1(_) => TYPE_PC1,
            Message::Pc2(_) => TYPE_PC2,
        }
    }

    fn field_bytes(&self, suite: &CryptoSuite) -> Vec<(&'static str, Vec<u8>)> {
        match self {
            Message::M1(m) => vec![("e1", suite.encode_point(&m.e1)), ("e3", m.e3.encode())],
            Message::M2(m) => vec![
                ("SP1", m.sp1.as_ref().to_vec()),
                ("SP2", m.sp2.as_ref().to_vec()),
                ("T2", m.t2.to_bytes().to_vec()),
                ("e5", suite.encode_point(&m.e5)),
            ],
            Message::M3(m) => vec![
                ("e6", suite.encode_point(&m.e6)),
                ("GP", m.gp.as_ref().to_vec()),
                ("T3", m.t3.to_bytes().to_vec()),
            ],
            Message::M4(m) => vec![("e7", m.e7.encode())],
            Message::Pc1(m) => vec![("e1", suite.encode_point(&m.e1)), ("e3", m.e3.encode())],
            Message::Pc2(m) => vec![("ct", m.ct.encode())],
        }
    }

    pub fn encode(&self, suite: &CryptoSuite) -> Vec<u8> {
        let fields = self.field_bytes(suite);
        let refs: Vec<&[u8]> = fields.iter().map(|(_, b)| b.as_slice()).collect();
        let mut out = vec![self.type_byte()];
        out.extend(frame(&refs));
        out
    }

    pub fn decode(suite: &CryptoSuite, wire: &[u8]) -> Result<Message, CodecError> {
        let (&ty, body) = wire.split_first().ok_or(CodecError::Empty)?;
        let count = match ty {
            TYPE_M1 | TYPE_PC1 => 2,
            TYPE_M2 => 4,
            TYPE_M3 => 3,
            TYPE_M4 | TYPE_PC2 => 1,
            other => return Err(CodecError::UnknownType(other)),
        };
        let f = unframe(body, count).map_err(CodecError::Framing)?;
        let point = |name, bytes| {
            suite
                .decode_finite_point(bytes)
                .map_err(|source| CodecError::Field { field: name, source })
        };
        let ct = |name, bytes| Ciphertext::decode(bytes).map_err(|source| CodecError::Field { field: name, source });
        let digest =
            |name, bytes| Digest::from_slice(bytes).map_err(|source| CodecError::Field { field: name, source });
        let ts = |name, bytes| Timestamp::from_bytes(bytes).map_err(|source| CodecError::Field { field: name, source });
        Ok(match ty {
            TYPE_M1 => Message::M1(M1 {
                e1: point("e1", f[0])?,
                e3: ct("e3", f[1])?,
            }),
            TYPE_M2 => Message::M2(M2 {
                sp1: digest("SP1", f[0])?,
                sp2: digest("SP2", f[1])?,
                t2: ts("T2", f[2])?,
                e5: point("e5", f[3])?,
            }),
            TYPE_M3 => Message::M3(M3 {
                e6: point("e6", f[0])?,
                gp: digest("GP", f[1])?,
                t3: ts("T3", f[2])?,
            }),
            TYPE_M4 => Message::M4(M4 { e7: ct("e7", f[0])? }),
            TYPE_PC1 => Message::Pc1(Pc1 {
                e1: point("e1", f[0])?,
                e3: ct("e3", f[1])?,
            }),
            TYPE_PC2 => Message::Pc2(Pc2 { ct: ct("ct", f[0])? }),
            _ => unreachable!("type checked above"),
        })
    }

    /// Field-by-field view; timestamps in decimal, everything else in hex.
    pub fn view(&self, suite: &CryptoSuite) -> MessageView {
        let ts_fields = ["T2", "T3"];
        let fields = self
            .field_bytes(suite)
            .into_iter()
            .map(|(name, bytes)| {
                let value = if ts_fields.contains(&name) {
                    Timestamp::from_bytes(&bytes)
                        .map(|t| t.0.to_string())
                        .unwrap_or_else(|_| hex::encode(&bytes))
                } else {
                    hex::encode(&bytes)
                };
                FieldView { name, value }
            })
            .collect();
        MessageView {
            kind: self.kind(),
            fields,
        }
    }
}

/// Byte ranges `(start, end)` of each field's content within `wire`.
/// Lets callers mutate one field at a time.
pub fn field_spans(wire: &[u8]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut at = 1;
    while at + 2 <= wire.len() {
        let len = u16::from_be_bytes([wire[at], wire[at + 1]]) as usize;
        let start = at + 2;
        let end = (start + len).min(wire.len());
        spans.push((start, end));
        at = end;
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{ae_seal, NONCE_TAG_TO_GATEWAY};

    fn sample_messages(suite: &CryptoSuite) -> Vec<Message> {
        let g = suite.curve().generator().clone();
        let k = suite.hash(b"key");
        let ct = ae_seal(&k, NONCE_TAG_TO_GATEWAY, b"payload");
        vec![
            Message::M1(M1 {
                e1: g.clone(),
                e3: ct.clone(),
            }),
            Message::M2(M2 {
                sp1: suite.hash(b"1"),
                sp2: suite.hash(b"2"),
                t2: Timestamp(1_000),
                e5: g.clone(),
            }),
            Message::M3(M3 {
                e6: g.clone(),
                gp: suite.hash(b"3"),
                t3: Timestamp(u64::MAX),
            }),
            Message::M4(M4 { e7: ct.clone() }),
            Message::Pc1(Pc1 { e1: g, e3: ct.clone() }),
            Message::Pc2(Pc2 { ct }),
        ]
    }

    #[test]
    fn codec_roundtrip_all_types() {
        for suite in [CryptoSuite::toy(), CryptoSuite::standard()] {
            for m in sample_messages(&suite) {
                let wire = m.encode(&suite);
                assert_eq!(Message::decode(&suite, &wire).unwrap(), m);
            }
        }
    }

    #[test]
    fn m2_layout_is_exact() {
        let suite = CryptoSuite::toy();
        let m = &sample_messages(&suite)[1];
        let wire = m.encode(&suite);
        assert_eq!(wire[0], TYPE_M2);
        assert_eq!(&wire[1..3], &[0, 32]);
        assert_eq!(&wire[69..71], &[0, 8]);
        assert_eq!(&wire[71..79], &1_000u64.to_be_bytes());
        assert_eq!(&wire[79..81], &[0, 3]);
        assert_eq!(wire.len(), 84);
        assert_eq!(field_spans(&wire), vec![(3, 35), (37, 69), (71, 79), (81, 84)]);
    }

    #[test]
    fn rejects_malformed() {
        let suite = CryptoSuite::toy();
        assert_eq!(Message::decode(&suite, &[]), Err(CodecError::Empty));
        assert_eq!(Message::decode(&suite, &[0x7f]), Err(CodecError::UnknownType(0x7f)));
        let mut wire = sample_messages(&suite)[0].encode(&suite);
        wire.push(0);
        assert!(matches!(Message::decode(&suite, &wire), Err(CodecError::Framing(_))));
        // e1 replaced by the point at infinity
        let inf = Message::M3(M3 {
            e6: Point::Infinity,
            gp: Digest::ZERO,
            t3: Timestamp(0),
        })
        .encode(&suite);
        assert!(matches!(
            Message::decode(&suite, &inf),
            Err(CodecError::Field { field: "e6", .. })
        ));
    }

    #[test]
    fn view_names_fields() {
        let suite = CryptoSuite::toy();
        let view = sample_messages(&suite)[2].view(&suite);
        assert_eq!(view.kind, "M3");
        let names: Vec<_> = view.fields.iter().map(|f| f.name).collect();
        assert_eq!(names, ["e6", "GP", "T3"]);
        assert_eq!(view.fields[2].value, u64::MAX.to_string());
    }
}
