//! Per-role operation counts and their priced totals.
//!
//! Counts are `(hash, ecc, sym)` triples. XOR is free. Hashes that only turn
//! points into keys or XOR operands (`kdf_key`, `p2b`) are kept in a separate
//! overhead column and left out of the priced total unless the accounting
//! policy asks for them.

use std::fmt;
use std::ops::Add;
use std::str::FromStr;

use rust_decimal::Decimal;
use serde::Serialize;

use crate::primitives::meter::Tally;
use crate::simnet::{Party, Transcript};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CostError {
    #[error("unit cost {name} must be a positive decimal, got {value:?}")]
    InvalidUnit { name: &'static str, value: String },
    #[error("transcript is not an honest completed run: {0}")]
    NotHonest(String),
}

/// Seconds per operation, held as exact decimals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct UnitCosts {
    pub t_h: Decimal,
    pub t_ecc: Decimal,
    pub t_sym: Decimal,
}

impl UnitCosts {
    pub fn new(t_h: Decimal, t_ecc: Decimal, t_sym: Decimal) -> Result<Self, CostError> {
        for (name, v) in [("T_h", t_h), ("T_ecc", t_ecc), ("T_sym", t_sym)] {
            if v <= Decimal::ZERO {
                return Err(CostError::InvalidUnit {
                    name,
                    value: v.to_string(),
                });
            }
        }
        Ok(UnitCosts { t_h, t_ecc, t_sym })
    }

    /// Parses three decimal strings such as `"0.00032"`.
    pub fn parse(t_h: &str, t_ecc: &str, t_sym: &str) -> Result<Self, CostError> {
        let p = |name, s: &str| {
            Decimal::from_str(s.trim()).map_err(|_| CostError::InvalidUnit {
                name,
                value: s.to_string(),
            })
        };
        Self::new(p("T_h", t_h)?, p("T_ecc", t_ecc)?, p("T_sym", t_sym)?)
    }

    /// 0.00032 s per hash, 0.0171 s per point multiplication, 0.0056 s per
    /// symmetric operation.
    pub fn reference() -> Self {
        Self::parse("0.00032", "0.0171", "0.0056").expect("constants are positive")
    }
}

impl Default for UnitCosts {
    fn default() -> Self {
        Self::reference()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCounts {
    pub hash: u64,
    pub ecc: u64,
    pub sym: u64,
}

impl OpCounts {
    pub const fn new(hash: u64, ecc: u64, sym: u64) -> Self {
        OpCounts { hash, ecc, sym }
    }

    pub fn cost(&self, u: &UnitCosts) -> Decimal {
        Decimal::from(self.hash) * u.t_h + Decimal::from(self.ecc) * u.t_ecc + Decimal::from(self.sym) * u.t_sym
    }

    /// `3T_h + 2T_ecc + 2T_sym`, omitting zero terms; `0` when empty.
    pub fn formula(&self) -> String {
        let terms: Vec<String> = [(self.hash, "T_h"), (self.ecc, "T_ecc"), (self.sym, "T_sym")]
            .into_iter()
            .filter(|(n, _)| *n > 0)
            .map(|(n, t)| format!("{n}{t}"))
            .collect();
        if terms.is_empty() {
            "0".to_string()
        } else {
            terms.join(" + ")
        }
    }
}

impl Add for OpCounts {
    type Output = OpCounts;

    fn add(self, rhs: OpCounts) -> OpCounts {
        OpCounts::new(self.hash + rhs.hash, self.ecc + rhs.ecc, self.sym + rhs.sym)
    }
}

impl fmt::Display for OpCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.formula())
    }
}

/// Whether derivation hashes (`kdf_key`, `p2b`) are priced as hashes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Accounting {
    /// Only the operations written in the protocol description.
    #[default]
    Protocol,
    /// Derivation hashes folded into the hash count.
    WithDerivation,
}

impl Accounting {
    fn counts(self, t: Tally) -> OpCounts {
        let extra = match self {
            Accounting::Protocol => 0,
            Accounting::WithDerivation => t.aux_hash,
        };
        OpCounts::new(t.hash + extra, t.ecc, t.sym)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Overhead {
    pub user: u64,
    pub gateway: u64,
    pub sensor: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CostProfile {
    pub user: OpCounts,
    pub gateway: OpCounts,
    pub sensor: OpCounts,
    /// Derivation hashes not included in the counts above.
    pub overhead: Overhead,
}

impl CostProfile {
    pub const fn new(user: OpCounts, gateway: OpCounts, sensor: OpCounts) -> Self {
        CostProfile {
            user,
            gateway,
            sensor,
            overhead: Overhead {
                user: 0,
                gateway: 0,
                sensor: 0,
            },
        }
    }

    pub fn from_tallies(user: Tally, gateway: Tally, sensor: Tally, accounting: Accounting) -> Self {
        let overhead = match accounting {
            Accounting::Protocol => Overhead {
                user: user.aux_hash,
                gateway: gateway.aux_hash,
                sensor: sensor.aux_hash,
            },
            Accounting::WithDerivation => Overhead::default(),
        };
        CostProfile {
            user: accounting.counts(user),
            gateway: accounting.counts(gateway),
            sensor: accounting.counts(sensor),
            overhead,
        }
    }

    pub fn role(&self, party: Party) -> OpCounts {
        match party {
            Party::User => self.user,
            Party::Gateway => self.gateway,
            Party::Sensor => self.sensor,
            Party::Adversary => OpCounts::default(),
        }
    }

    pub fn total(&self) -> OpCounts {
        self.user + self.gateway + self.sensor
    }
}

/// Sum over roles of `n_h*T_h + n_ecc*T_ecc + n_sym*T_sym`.
pub fn total_cost(p: &CostProfile, u: &UnitCosts) -> Decimal {
    p.total().cost(u)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SchemeProfile {
    pub label: String,
    pub profile: CostProfile,
}

impl SchemeProfile {
    pub fn new(label: impl Into<String>, profile: CostProfile) -> Self {
        SchemeProfile {
            label: label.into(),
            profile,
        }
    }
}

/// The protocol implemented here.
pub const OURS: CostProfile = CostProfile::new(OpCounts::new(3, 2, 2), OpCounts::new(4, 3, 2), OpCounts::new(3, 2, 0));

/// Reference rows for three other schemes followed by this protocol.
pub fn builtin_schemes() -> Vec<SchemeProfile> {
    vec![
        SchemeProfile::new(
            "scheme-a",
            CostProfile::new(OpCounts::new(1, 2, 0), OpCounts::new(4, 4, 0), OpCounts::new(3, 2, 0)),
        ),
        SchemeProfile::new(
            "scheme-b",
            CostProfile::new(OpCounts::new(6, 3, 0), OpCounts::new(6, 1, 1), OpCounts::new(4, 2, 1)),
        ),
        SchemeProfile::new(
            "scheme-c",
            CostProfile::new(OpCounts::new(5, 4, 2), OpCounts::new(5, 2, 2), OpCounts::new(3, 1, 0)),
        ),
        SchemeProfile::new("ours", OURS),
    ]
}

/// Tallies an honest transcript into a per-role profile.
pub fn measure_counts(transcript: &Transcript, accounting: Accounting) -> Result<CostProfile, CostError> {
    transcript.check_honest().map_err(CostError::NotHonest)?;
    Ok(CostProfile::from_tallies(
        transcript.tally(Party::User),
        transcript.tally(Party::Gateway),
        transcript.tally(Party::Sensor),
        accounting,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TableRow {
    pub scheme: String,
    pub user: String,
    pub gateway: String,
    pub sensor: String,
    pub total_ops: String,
    pub cost: Decimal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostTable {
    pub units: UnitCosts,
    pub rows: Vec<TableRow>,
}

pub fn render_table(schemes: &[SchemeProfile], units: &UnitCosts) -> CostTable {
    let rows = schemes
        .iter()
        .map(|s| TableRow {
            scheme: s.label.clone(),
            user: s.profile.user.formula(),
            gateway: s.profile.gateway.formula(),
            sensor: s.profile.sensor.formula(),
            total_ops: s.profile.total().formula(),
            cost: total_cost(&s.profile, units).normalize(),
        })
        .collect();
    CostTable { units: *units, rows }
}

/// Rounds to `dp` places, half away from zero, padding with zeros.
pub fn fixed(d: Decimal, dp: u32) -> String {
    let r = d.round_dp_with_strategy(dp, rust_decimal::RoundingStrategy::MidpointAwayFromZero);
    format!("{r:.prec$}", prec = dp as usize)
}

impl CostTable {
    pub fn to_text(&self) -> String {
        let header = ["scheme", "user", "gateway", "sensor", "total", "cost (s)"];
        let cells: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.scheme.clone(),
                    r.user.clone(),
                    r.gateway.clone(),
                    r.sensor.clone(),
                    r.total_ops.clone(),
                    fixed(r.cost, 5),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let line = |row: [&str; 6]| {
            let mut s = String::new();
            for (i, (c, w)) in row.iter().zip(widths).enumerate() {
                if i == 5 {
                    s.push_str(&format!("{c:>w$}"));
                } else {
                    s.push_str(&format!("{c:<w$}  "));
                }
            }
            s.trim_end().to_string() + "\n"
        };
        let mut out = format!(
            "unit costs: T_h={} s, T_ecc={} s, T_sym={} s\n",
            self.units.t_h, self.units.t_ecc, self.units.t_sym
        );
        out.push_str(&line(header));
        for row in &cells {
            out.push_str(&line([&row[0], &row[1], &row[2], &row[3], &row[4], &row[5]]));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("table serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> Decimal {
        Decimal::from_str(s).unwrap()
    }

    #[test]
    fn builtin_totals() {
        let u = UnitCosts::reference();
        let totals: Vec<String> = builtin_schemes()
            .iter()
            .map(|s| fixed(total_cost(&s.profile, &u), 5))
            .collect();
        assert_eq!(totals, ["0.13936", "0.11892", "0.14626", "0.14530"]);
        assert_eq!(total_cost(&OURS, &u), d("0.1453"));
    }

    #[test]
    fn zero_profile_costs_nothing() {
        assert_eq!(
            total_cost(&CostProfile::default(), &UnitCosts::reference()),
            Decimal::ZERO
        );
        assert_eq!(OpCounts::default().formula(), "0");
    }

    #[test]
    fn unit_prices_give_raw_sums() {
        let ones = UnitCosts::parse("1.0", "1.0", "1.0").unwrap();
        for s in builtin_schemes() {
            let t = s.profile.total();
            assert_eq!(total_cost(&s.profile, &ones), Decimal::from(t.hash + t.ecc + t.sym));
        }
    }

    #[test]
    fn formulas_omit_zero_terms() {
        assert_eq!(OURS.sensor.formula(), "3T_h + 2T_ecc");
        assert_eq!(OURS.total().formula(), "10T_h + 7T_ecc + 4T_sym");
        assert_eq!(OpCounts::new(0, 0, 1).formula(), "1T_sym");
    }

    #[test]
    fn units_must_be_positive() {
        assert!(UnitCosts::parse("0", "1", "1").is_err());
        assert!(UnitCosts::parse("1", "-0.1", "1").is_err());
        assert!(UnitCosts::parse("1", "1", "abc").is_err());
    }

    #[test]
    fn empty_table() {
        let t = render_table(&[], &UnitCosts::reference());
        assert!(t.rows.is_empty());
        assert_eq!(t.to_text().lines().count(), 2);
    }

    #[test]
    fn text_and_json_layout() {
        let t = render_table(&builtin_schemes(), &UnitCosts::reference());
        let text = t.to_text();
        assert!(text.contains("4T_h + 3T_ecc + 2T_sym"));
        assert!(text.lines().last().unwrap().ends_with("0.14530"));
        let json = t.to_json();
        assert_eq!(json["rows"][3]["cost"], "0.1453");
        assert_eq!(json["units"]["t_ecc"], "0.0171");
    }

    #[test]
    fn derivation_hashes_stay_out_of_protocol_counts() {
        let t = Tally {
            hash: 3,
            ecc: 2,
            sym: 2,
            aux_hash: 4,
        };
        let p = CostProfile::from_tallies(t, Tally::default(), Tally::default(), Accounting::Protocol);
        assert_eq!(p.user, OpCounts::new(3, 2, 2));
        assert_eq!(p.overhead.user, 4);
        let q = CostProfile::from_tallies(t, Tally::default(), Tally::default(), Accounting::WithDerivation);
        assert_eq!(q.user, OpCounts::new(7, 2, 2));
    }
}
