//! Thread-local operation counters.
//!
//! Every instrumented primitive bumps the counter of the thread it runs on.
//! [`measure`] scopes a closure so that the caller sees exactly the
//! operations performed inside it; nested scopes also propagate their counts
//! outward.

use std::cell::Cell;
use std::ops::{Add, AddAssign};

use serde::Serialize;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    /// Hash applications written in the protocol.
    pub hash: u64,
    /// Elliptic-curve scalar multiplications.
    pub ecc: u64,
    /// Authenticated encryptions and decryptions (one unit each).
    pub sym: u64,
    /// Hashes spent turning points into keys or XOR operands.
    pub aux_hash: u64,
}

impl Add for Tally {
    type Output = Tally;

    fn add(self, rhs: Tally) -> Tally {
        Tally {
            hash: self.hash + rhs.hash,
            ecc: self.ecc + rhs.ecc,
            sym: self.sym + rhs.sym,
            aux_hash: self.aux_hash + rhs.aux_hash,
        }
    }
}

impl AddAssign for Tally {
    fn add_assign(&mut self, rhs: Tally) {
        *self = *self + rhs;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Hash,
    Ecc,
    Sym,
    AuxHash,
}

thread_local! {
    static CURRENT: Cell<Tally> = const { Cell::new(Tally { hash: 0, ecc: 0, sym: 0, aux_hash: 0 }) };
}

pub(crate) fn record(op: Op) {
    CURRENT.with(|c| {
        let mut t = c.get();
        match op {
            Op::Hash => t.hash += 1,
            Op::Ecc => t.ecc += 1,
            Op::Sym => t.sym += 1,
            Op::AuxHash => t.aux_hash += 1,
        }
        c.set(t);
    });
}

/// Runs `f` and returns its result together with the operations it performed.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, Tally) {
    let outer = CURRENT.with(|c| c.replace(Tally::default()));
    let out = f();
    let inner = CURRENT.with(|c| c.get());
    CURRENT.with(|c| c.set(outer + inner));
    (out, inner)
}
