//! Gateway database and smart-card files.
//!
//! Gateway DB: magic `WSNAKEP1`, then records `type:u8 || len:u32be || value`
//! where each value is a sequence of length-prefixed fields:
//!
//! | type | record       | fields                          |
//! |------|--------------|---------------------------------|
//! | 0x10 | gateway key  | curve id, hash id, enc(S)       |
//! | 0x04 | provisioned  | SID                             |
//! | 0x01 | user         | ID, B, z                        |
//! | 0x03 | pending B    | ID, B_new, deadline (u64be ms)  |
//! | 0x02 | sensor       | SID, AS                         |
//!
//! Records are written in that order and sorted by key within each type, so
//! loading and re-storing an unmodified file is byte-identical.
//!
//! Card file: magic `WSNCARD1`, then `type:u8 || len:u16be || value` for
//! C (0x01), D (0x02), z (0x03), q (0x04) and the hash id (0x05).

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::primitives::{frame, unframe, CryptoSuite, CurveParams, Digest, HashAlg};

use super::{GatewayState, PendingVerifier, SmartCard, Timestamp, UserRecord};

pub const DB_MAGIC: &[u8; 8] = b"WSNAKEP1";
pub const CARD_MAGIC: &[u8; 8] = b"WSNCARD1";

pub const REC_USER: u8 = 0x01;
pub const REC_SENSOR: u8 = 0x02;
pub const REC_PENDING: u8 = 0x03;
pub const REC_PROVISIONED: u8 = 0x04;
pub const REC_GATEWAY_KEY: u8 = 0x10;

const CARD_C: u8 = 0x01;
const CARD_D: u8 = 0x02;
const CARD_Z: u8 = 0x03;
const CARD_Q: u8 = 0x04;
const CARD_HASH_ID: u8 = 0x05;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("bad magic: not a {0} file")]
    BadMagic(&'static str),
    #[error("truncated record")]
    Truncated,
    #[error("unknown record type {0:#04x}")]
    UnknownRecord(u8),
    #[error("invalid record: {0}")]
    Invalid(&'static str),
    #[error("database {0} is locked by another process")]
    Locked(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn push_record(out: &mut Vec<u8>, ty: u8, fields: &[&[u8]]) {
    let value = frame(fields);
    out.push(ty);
    out.extend((value.len() as u32).to_be_bytes());
    out.extend(value);
}

pub fn encode_gateway(suite: &CryptoSuite, gw: &GatewayState) -> Vec<u8> {
    let mut out = DB_MAGIC.to_vec();
    push_record(
        &mut out,
        REC_GATEWAY_KEY,
        &[
            suite.curve().id().as_bytes(),
            suite.hash_id().as_bytes(),
            &suite.encode_scalar(gw.secret_key()),
        ],
    );
    for sid in gw.provisioned() {
        push_record(&mut out, REC_PROVISIONED, &[sid]);
    }
    for rec in gw.users() {
        push_record(&mut out, REC_USER, &[&rec.id, rec.b.as_ref(), rec.z.as_ref()]);
    }
    for rec in gw.users() {
        if let Some(p) = &rec.pending {
            push_record(&mut out, REC_PENDING, &[&rec.id, p.b.as_ref(), &p.deadline.to_bytes()]);
        }
    }
    for (sid, auth) in gw.sensors() {
        push_record(&mut out, REC_SENSOR, &[sid, auth.as_ref()]);
    }
    out
}

fn digest(bytes: &[u8]) -> Result<Digest, StoreError> {
    Digest::from_slice(bytes).map_err(|_| StoreError::Invalid("digest field is not 32 bytes"))
}

pub fn decode_gateway(bytes: &[u8]) -> Result<(CryptoSuite, GatewayState), StoreError> {
    let body = bytes
        .strip_prefix(DB_MAGIC)
        .ok_or(StoreError::BadMagic("gateway database"))?;
    let mut records = Vec::new();
    let mut rest = body;
    while !rest.is_empty() {
        if rest.len() < 5 {
            return Err(StoreError::Truncated);
        }
        let ty = rest[0];
        let len = u32::from_be_bytes([rest[1], rest[2], rest[3], rest[4]]) as usize;
        let value = rest.get(5..5 + len).ok_or(StoreError::Truncated)?;
        records.push((ty, value));
        rest = &rest[5 + len..];
    }
    let mut iter = records.into_iter();
    let (suite, mut gw) = match iter.next() {
        Some((REC_GATEWAY_KEY, value)) => {
            let f = unframe(value, 3).map_err(|_| StoreError::Invalid("gateway key record"))?;
            let curve_id = std::str::from_utf8(f[0]).map_err(|_| StoreError::Invalid("curve id"))?;
            let hash_id = std::str::from_utf8(f[1]).map_err(|_| StoreError::Invalid("hash id"))?;
            let curve = CurveParams::by_id(curve_id).ok_or(StoreError::Invalid("unknown curve id"))?;
            let hash = HashAlg::from_id(hash_id).ok_or(StoreError::Invalid("unknown hash id"))?;
            let secret = curve
                .decode_scalar(f[2])
                .map_err(|_| StoreError::Invalid("gateway secret"))?;
            let suite = CryptoSuite::new(curve, hash);
            let gw = GatewayState::from_secret(&suite, secret);
            (suite, gw)
        }
        _ => return Err(StoreError::Invalid("first record must be the gateway key")),
    };
    for (ty, value) in iter {
        match ty {
            REC_PROVISIONED => {
                let f = unframe(value, 1).map_err(|_| StoreError::Invalid("provisioned record"))?;
                gw.provision_sensor(f[0])
                    .map_err(|_| StoreError::Invalid("provisioned SID"))?;
            }
            REC_USER => {
                let f = unframe(value, 3).map_err(|_| StoreError::Invalid("user record"))?;
                if gw.user(f[0]).is_some() {
                    return Err(StoreError::Invalid("duplicate user record"));
                }
                gw.insert_user(UserRecord {
                    id: f[0].to_vec(),
                    b: digest(f[1])?,
                    z: digest(f[2])?,
                    pending: None,
                });
            }
            REC_PENDING => {
                let f = unframe(value, 3).map_err(|_| StoreError::Invalid("pending record"))?;
                let mut rec = gw
                    .user(f[0])
                    .cloned()
                    .ok_or(StoreError::Invalid("pending record for unknown user"))?;
                let deadline = Timestamp::from_bytes(f[2]).map_err(|_| StoreError::Invalid("pending deadline"))?;
                rec.pending = Some(PendingVerifier {
                    b: digest(f[1])?,
                    deadline,
                });
                gw.insert_user(rec);
            }
            REC_SENSOR => {
                let f = unframe(value, 2).map_err(|_| StoreError::Invalid("sensor record"))?;
                gw.insert_sensor(f[0].to_vec(), digest(f[1])?);
            }
            REC_GATEWAY_KEY => return Err(StoreError::Invalid("second gateway key record")),
            other => return Err(StoreError::UnknownRecord(other)),
        }
    }
    Ok((suite, gw))
}

pub fn encode_card(card: &SmartCard) -> Vec<u8> {
    let mut out = CARD_MAGIC.to_vec();
    let fields: [(u8, &[u8]); 5] = [
        (CARD_C, card.c().as_ref()),
        (CARD_D, card.d().as_ref()),
        (CARD_Z, card.z().as_ref()),
        (CARD_Q, card.q().as_ref()),
        (CARD_HASH_ID, card.hash_id().as_bytes()),
    ];
    for (ty, value) in fields {
        out.push(ty);
        out.extend((value.len() as u16).to_be_bytes());
        out.extend(value);
    }
    out
}

pub fn decode_card(bytes: &[u8]) -> Result<SmartCard, StoreError> {
    let mut rest = bytes
        .strip_prefix(CARD_MAGIC)
        .ok_or(StoreError::BadMagic("smart card"))?;
    let mut slots: [Option<&[u8]>; 5] = [None; 5];
    while !rest.is_empty() {
        if rest.len() < 3 {
            return Err(StoreError::Truncated);
        }
        let ty = rest[0];
        let len = u16::from_be_bytes([rest[1], rest[2]]) as usize;
        let value = rest.get(3..3 + len).ok_or(StoreError::Truncated)?;
        let slot = match ty {
            CARD_C..=CARD_HASH_ID => &mut slots[(ty - 1) as usize],
            other => return Err(StoreError::UnknownRecord(other)),
        };
        if slot.replace(value).is_some() {
            return Err(StoreError::Invalid("duplicate card field"));
        }
        rest = &rest[3 + len..];
    }
    let [Some(c), Some(d), Some(z), Some(q), Some(hash_id)] = slots else {
        return Err(StoreError::Invalid("missing card field"));
    };
    let hash_id = std::str::from_utf8(hash_id).map_err(|_| StoreError::Invalid("hash id"))?;
    Ok(SmartCard::from_parts(
        digest(c)?,
        digest(d)?,
        digest(z)?,
        digest(q)?,
        hash_id,
    ))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, StoreError> {
    fs::read(path).map_err(io_err(path))
}

/// Writes through a temporary sibling and renames over the target.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Exclusive lock on a database path, held as a `<path>.lock` file.
#[derive(Debug)]
pub struct DbLock {
    path: PathBuf,
}

impl DbLock {
    pub fn acquire(db: &Path) -> Result<DbLock, StoreError> {
        let mut lock = db.as_os_str().to_owned();
        lock.push(".lock");
        let path = PathBuf::from(lock);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(DbLock { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(StoreError::Locked(db.to_path_buf())),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for DbLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{register_user, Credentials};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn populated() -> (CryptoSuite, GatewayState, SmartCard) {
        let suite = CryptoSuite::toy();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let mut gw = GatewayState::new(&suite, &mut rng);
        gw.provision_sensor(b"s-2").unwrap();
        gw.provision_sensor(b"s-1").unwrap();
        gw.register_sensor(&suite, b"s-1").unwrap();
        let card = register_user(&mut gw, &suite, &mut rng, &Credentials::new("bob", "pw", None).unwrap()).unwrap();
        register_user(
            &mut gw,
            &suite,
            &mut rng,
            &Credentials::new("alice", "pw", None).unwrap(),
        )
        .unwrap();
        let mut rec = gw.user(b"bob").unwrap().clone();
        rec.pending = Some(PendingVerifier {
            b: Digest::new([3u8; 32]),
            deadline: Timestamp(99),
        });
        gw.insert_user(rec);
        (suite, gw, card)
    }

    #[test]
    fn gateway_db_roundtrip_is_bit_exact() {
        let (suite, gw, _) = populated();
        let bytes = encode_gateway(&suite, &gw);
        assert_eq!(&bytes[..8], DB_MAGIC);
        let (suite2, gw2) = decode_gateway(&bytes).unwrap();
        assert_eq!(suite2, suite);
        assert_eq!(gw2, gw);
        assert_eq!(encode_gateway(&suite2, &gw2), bytes);
    }

    #[test]
    fn gateway_db_rejects_garbage() {
        let (suite, gw, _) = populated();
        let bytes = encode_gateway(&suite, &gw);
        assert!(matches!(decode_gateway(b"NOTADB.."), Err(StoreError::BadMagic(_))));
        assert!(matches!(
            decode_gateway(&bytes[..bytes.len() - 1]),
            Err(StoreError::Truncated)
        ));
        let mut unknown = bytes.clone();
        unknown.extend([0x7e, 0, 0, 0, 0]);
        assert!(matches!(decode_gateway(&unknown), Err(StoreError::UnknownRecord(0x7e))));
    }

    #[test]
    fn card_roundtrip() {
        let (_, _, card) = populated();
        let bytes = encode_card(&card);
        assert_eq!(decode_card(&bytes).unwrap(), card);
        assert!(decode_card(&bytes[..bytes.len() - 2]).is_err());
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let db = dir.path().join("gw.db");
        let held = DbLock::acquire(&db).unwrap();
        assert!(matches!(DbLock::acquire(&db), Err(StoreError::Locked(_))));
        drop(held);
        DbLock::acquire(&db).unwrap();
    }
}
