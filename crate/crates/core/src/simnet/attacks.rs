use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::costmodel::{Accounting, CostProfile, OpCounts};
use crate::primitives::meter::{measure, Tally};
use crate::primitives::{ae_open, unframe, Ciphertext, Digest, NONCE_TAG_TO_GATEWAY};
use crate::protocol::messages::field_spans;
use crate::protocol::{
    make_uap, user_auth_init, Credentials, Env, GatewayState, Message, Rejection, SensorState, SmartCard, Timestamp,
    M1, M2,
};

use super::{Action, AdversaryScript, Party, PartyResult, Sim, SimConfig, SimError, Transcript, DEFAULT_SID};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Prevented,
    Succeeded,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Prevented => "prevented",
            Verdict::Succeeded => "succeeded",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScenarioInfo {
    pub name: &'static str,
    /// The security property the scenario exercises.
    pub claim: &'static str,
    /// The verdict the claimed property predicts.
    pub expected: Verdict,
    pub summary: &'static str,
}

/// Network-only attacks.
pub const ATTACKS: &[ScenarioInfo] = &[
    ScenarioInfo {
        name: "replay-m1-late",
        claim: "replay resistance",
        expected: Verdict::Prevented,
        summary: "M1 replayed after the freshness window",
    },
    ScenarioInfo {
        name: "replay-m1-fast",
        claim: "replay resistance",
        expected: Verdict::Prevented,
        summary: "identical M1 replayed inside the freshness window",
    },
    ScenarioInfo {
        name: "tamper-any-bit",
        claim: "man-in-the-middle resistance",
        expected: Verdict::Prevented,
        summary: "every single-bit flip of every field of M1..M4",
    },
    ScenarioInfo {
        name: "dos-garbage-m1",
        claim: "denial-of-service resistance",
        expected: Verdict::Prevented,
        summary: "well-formed M1 with a random e3 sent to the gateway",
    },
    ScenarioInfo {
        name: "dos-garbage-m2",
        claim: "denial-of-service resistance",
        expected: Verdict::Prevented,
        summary: "well-formed M2 with random SP1/SP2 sent to the sensor",
    },
    ScenarioInfo {
        name: "insider-intercept-sp1",
        claim: "privileged-insider resistance",
        expected: Verdict::Prevented,
        summary: "a registered user strips its own e2 from SP1 to recover AS",
    },
    ScenarioInfo {
        name: "stolen-card-no-password",
        claim: "stolen smart card resistance",
        expected: Verdict::Prevented,
        summary: "card contents plus password guesses",
    },
    ScenarioInfo {
        name: "wrong-sid-routing",
        claim: "impersonation resistance",
        expected: Verdict::Prevented,
        summary: "request addressed to an unregistered sensor",
    },
    ScenarioInfo {
        name: "pc-lost-confirmation",
        claim: "no lockout on a lost password-change confirmation",
        expected: Verdict::Prevented,
        summary: "PC2 dropped, then a login with the old password",
    },
];

/// Attacks that start from leaked key material.
pub const COMPROMISE_CHECKS: &[ScenarioInfo] = &[
    ScenarioInfo {
        name: "stolen-verifier",
        claim: "stolen verifier resistance",
        expected: Verdict::Prevented,
        summary: "gateway table entry (B, z) and SID used to run a handshake",
    },
    ScenarioInfo {
        name: "s-and-z-compromise",
        claim: "none: joint leak of S and z is outside every claimed property",
        expected: Verdict::Succeeded,
        summary: "passive transcript plus the gateway key S and the user's z",
    },
];

#[derive(Debug, Clone, Serialize)]
pub struct AttackOutcome {
    pub scenario: &'static str,
    pub claim: &'static str,
    pub expected: Verdict,
    pub verdict: Verdict,
    /// First rejection the adversarial traffic ran into.
    pub reason: Option<String>,
    /// Work the parties spent on adversarial traffic.
    pub cost: CostProfile,
    pub notes: Vec<String>,
    /// Set when the verdict differs from the claimed property.
    pub divergence: Option<String>,
    pub seed: u64,
    pub curve: String,
    pub replay_cache: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transcript: Option<Transcript>,
}

impl AttackOutcome {
    pub fn matches_expected(&self) -> bool {
        self.verdict == self.expected
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "scenario: {}\nclaim: {}\nexpected: {}\nverdict: {}\n",
            self.scenario, self.claim, self.expected, self.verdict
        );
        if let Some(r) = &self.reason {
            out += &format!("reason: {r}\n");
        }
        for (role, c, aux) in [
            ("user", self.cost.user, self.cost.overhead.user),
            ("gateway", self.cost.gateway, self.cost.overhead.gateway),
            ("sensor", self.cost.sensor, self.cost.overhead.sensor),
        ] {
            out += &format!("cost {role}: {} (+{aux} derivation hashes)\n", c.formula());
        }
        for n in &self.notes {
            out += &format!("note: {n}\n");
        }
        match &self.divergence {
            Some(d) => out += &format!("DIVERGENCE: {d}\n"),
            None => out += "divergence: none\n",
        }
        out
    }
}

struct Evidence {
    verdict: Verdict,
    reason: Option<String>,
    cost: CostProfile,
    notes: Vec<String>,
    transcript: Option<Transcript>,
}

fn info(catalog: &'static [ScenarioInfo], name: &str) -> Result<&'static ScenarioInfo, SimError> {
    catalog
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| SimError::UnknownScenario {
            name: name.to_string(),
            catalog: catalog.iter().map(|s| s.name).collect(),
        })
}

fn finish(info: &'static ScenarioInfo, config: &SimConfig, ev: Evidence) -> AttackOutcome {
    let divergence = (ev.verdict != info.expected).then(|| {
        format!(
            "observed {} where the claimed property ({}) predicts {}",
            ev.verdict, info.claim, info.expected
        )
    });
    AttackOutcome {
        scenario: info.name,
        claim: info.claim,
        expected: info.expected,
        verdict: ev.verdict,
        reason: ev.reason,
        cost: ev.cost,
        notes: ev.notes,
        divergence,
        seed: config.seed,
        curve: config.suite.curve().id().to_string(),
        replay_cache: config.protocol.replay_cache,
        transcript: ev.transcript,
    }
}

/// Runs one entry of [`ATTACKS`].
pub fn run_attack(name: &str, config: &SimConfig) -> Result<AttackOutcome, SimError> {
    let info = info(ATTACKS, name)?;
    let ev = match name {
        "replay-m1-late" => replay_m1(config, true),
        "replay-m1-fast" => replay_m1(config, false),
        "tamper-any-bit" => tamper_any_bit(config),
        "dos-garbage-m1" => dos_garbage_m1(config),
        "dos-garbage-m2" => dos_garbage_m2(config),
        "insider-intercept-sp1" => insider_intercept_sp1(config),
        "stolen-card-no-password" => stolen_card(config),
        "wrong-sid-routing" => wrong_sid(config),
        "pc-lost-confirmation" => pc_lost_confirmation(config),
        _ => unreachable!("catalog lookup succeeded"),
    };
    Ok(finish(info, config, ev))
}

/// Runs one entry of [`COMPROMISE_CHECKS`].
pub fn run_compromise(name: &str, config: &SimConfig) -> Result<AttackOutcome, SimError> {
    let info = info(COMPROMISE_CHECKS, name)?;
    let ev = match name {
        "stolen-verifier" => stolen_verifier(config),
        "s-and-z-compromise" => s_and_z(config),
        _ => unreachable!("catalog lookup succeeded"),
    };
    Ok(finish(info, config, ev))
}

fn adversarial_cost(t: &Transcript) -> CostProfile {
    let mut sums: BTreeMap<Party, Tally> = BTreeMap::new();
    for p in t.processing.iter().filter(|p| p.tainted) {
        *sums.entry(p.party).or_default() += p.tally;
    }
    let get = |p| sums.get(&p).copied().unwrap_or_default();
    CostProfile::from_tallies(
        get(Party::User),
        get(Party::Gateway),
        get(Party::Sensor),
        Accounting::Protocol,
    )
}

fn tainted_completion(t: &Transcript) -> Option<String> {
    t.outcomes
        .iter()
        .find(|o| o.tainted && matches!(o.result, PartyResult::Completed { .. }))
        .map(|o| {
            format!(
                "{} completed a handshake on adversarial conversation {}",
                o.party.name(),
                o.conv
            )
        })
}

fn tainted_rejection(t: &Transcript) -> Option<String> {
    t.outcomes.iter().find(|o| o.tainted).and_then(|o| match &o.result {
        PartyResult::Rejected { code, reason } => Some(format!("{}: {code} ({reason})", o.party.name())),
        _ => None,
    })
}

fn network_evidence(t: Transcript, mut notes: Vec<String>) -> Evidence {
    let success = tainted_completion(&t);
    if t.agreed_key().is_some() {
        notes.push("the honest handshake still completed with three equal keys".into());
    }
    let verdict = if let Some(s) = &success {
        notes.push(s.clone());
        Verdict::Succeeded
    } else {
        Verdict::Prevented
    };
    Evidence {
        verdict,
        reason: tainted_rejection(&t),
        cost: adversarial_cost(&t),
        notes,
        transcript: Some(t),
    }
}

fn replay_m1(config: &SimConfig, late: bool) -> Evidence {
    let window = config.protocol.freshness_ms;
    let delay = if late { window + 1_000 } else { window / 2 };
    let script = AdversaryScript::passive().on(
        0,
        Action::Replay {
            event: 0,
            at: config.start_ms + delay,
        },
    );
    let mut sim = Sim::new(config).with_script(script);
    sim.start_handshake(DEFAULT_SID);
    sim.run();
    let mut notes = vec![format!("M1 replayed {delay} ms after capture (window {window} ms)")];
    if !late && !config.protocol.replay_cache {
        notes.push("replay cache disabled: the timestamp check alone accepts a copy inside the window".into());
    }
    network_evidence(sim.transcript(), notes)
}

fn tamper_any_bit(config: &SimConfig) -> Evidence {
    let mut snapshot = Sim::new(config);
    snapshot.hold(0);
    snapshot.start_handshake(DEFAULT_SID);
    let mut flips = 0usize;
    let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
    let mut worst = CostProfile::default();
    let mut breach = None;
    let mut first_reason = None;
    for leg in 0..4 {
        let Some((wire, receiver)) = snapshot.held().map(|(b, to)| (b.to_vec(), to)) else {
            breach.get_or_insert(format!("the honest run never produced message {}", leg + 1));
            break;
        };
        for (start, end) in field_spans(&wire) {
            for offset in start..end {
                for bit in 0..8 {
                    let mut s = snapshot.clone();
                    s.release(Action::Mutate { offset, mask: 1 << bit });
                    let t = s.transcript();
                    flips += 1;
                    if let Some(c) = tainted_completion(&t) {
                        breach.get_or_insert(format!("leg {leg} offset {offset} bit {bit}: {c}"));
                    }
                    let first = t.outcomes.iter().find(|o| o.tainted);
                    match first.map(|o| (o.party, &o.result)) {
                        Some((p, PartyResult::Rejected { code, reason })) if p == receiver => {
                            *reasons.entry(format!("{}/{code}", p.name())).or_default() += 1;
                            first_reason.get_or_insert(format!("{}: {code} ({reason})", p.name()));
                        }
                        _ => {
                            breach.get_or_insert(format!(
                                "leg {leg} offset {offset} bit {bit}: the receiving {} did not reject",
                                receiver.name()
                            ));
                        }
                    }
                    let c = adversarial_cost(&t);
                    worst = CostProfile {
                        user: max_counts(worst.user, c.user),
                        gateway: max_counts(worst.gateway, c.gateway),
                        sensor: max_counts(worst.sensor, c.sensor),
                        overhead: worst.overhead,
                    };
                }
            }
        }
        snapshot.hold(leg + 1);
        snapshot.release(Action::Pass);
    }
    let mut notes = vec![format!("{flips} single-bit mutations across the fields of M1..M4")];
    notes.extend(reasons.iter().map(|(k, v)| format!("rejected by {k}: {v}")));
    notes.push("cost is the per-role maximum over all mutations".into());
    let verdict = match &breach {
        Some(b) => {
            notes.push(b.clone());
            Verdict::Succeeded
        }
        None => Verdict::Prevented,
    };
    Evidence {
        verdict,
        reason: first_reason,
        cost: worst,
        notes,
        transcript: None,
    }
}

fn max_counts(a: OpCounts, b: OpCounts) -> OpCounts {
    OpCounts::new(a.hash.max(b.hash), a.ecc.max(b.ecc), a.sym.max(b.sym))
}

fn garbage_m1(sim: &mut Sim) -> Vec<u8> {
    let suite = sim.env().suite.clone();
    let r = suite.random_scalar(sim.rng());
    let e1 = suite
        .curve()
        .mul(&r, suite.curve().generator())
        .expect("generator on curve");
    let mut junk = [0u8; 64];
    rand::RngCore::fill_bytes(sim.rng(), &mut junk);
    let mut raw = vec![NONCE_TAG_TO_GATEWAY];
    raw.extend((junk.len() as u16).to_be_bytes());
    raw.extend(junk);
    let e3 = Ciphertext::decode(&raw).expect("well-formed ciphertext");
    Message::M1(M1 { e1, e3 }).encode(&suite)
}

fn dos_garbage_m1(config: &SimConfig) -> Evidence {
    let mut sim = Sim::new(config);
    let bytes = garbage_m1(&mut sim);
    sim.inject(bytes, config.start_ms, Party::Gateway);
    sim.run();
    let t = sim.transcript();
    let cost = adversarial_cost(&t);
    let mut notes = vec![format!(
        "gateway spent {} EC multiplication(s) and {} symmetric operation(s) before dropping it",
        cost.gateway.ecc, cost.gateway.sym
    )];
    let probe = dos_probe(
        sim.env(),
        &mut sim.gateway.clone(),
        b"\xffnot a protocol message",
        Timestamp(config.start_ms),
    );
    notes.push(format!(
        "non-protocol bytes cost the gateway {} before rejection",
        probe.cost.formula()
    ));
    network_evidence(t, notes)
}

fn dos_garbage_m2(config: &SimConfig) -> Evidence {
    let mut sim = Sim::new(config);
    let suite = sim.env().suite.clone();
    let c = suite.random_scalar(sim.rng());
    let m2 = M2 {
        sp1: Digest::random(sim.rng()),
        sp2: Digest::random(sim.rng()),
        t2: Timestamp(config.start_ms),
        e5: suite
            .curve()
            .mul(&c, suite.curve().generator())
            .expect("generator on curve"),
    };
    sim.inject(Message::M2(m2).encode(&suite), config.start_ms, Party::Sensor);
    sim.run();
    let t = sim.transcript();
    let cost = adversarial_cost(&t);
    let notes = vec![format!(
        "sensor spent one XOR plus {} hash(es) and {} EC multiplication(s) before dropping it",
        cost.sensor.hash, cost.sensor.ecc
    )];
    network_evidence(t, notes)
}

fn insider_intercept_sp1(config: &SimConfig) -> Evidence {
    let mut sim = Sim::new(config);
    let conv = sim.start_handshake(DEFAULT_SID);
    let wire = sim.run_to_event(1).expect("M2 is sent");
    let suite = sim.env().suite.clone();
    let Ok(Message::M2(m2)) = Message::decode(&suite, &wire) else {
        unreachable!("event 1 is the gateway's M2")
    };
    // The insider knows its own e2 and tries to strip it from SP1.
    let e2 = sim.user_session(conv).expect("session is live").e2().clone();
    let candidate = m2.sp1 ^ suite.p2b(&e2).expect("finite point");
    let leaked = candidate == *sim.sensor().auth();
    let now = sim.clock().now();
    let e4 = Digest::random(sim.rng());
    let forged = M2 {
        sp1: e4 ^ candidate,
        sp2: suite.hash_fields(&[e4.as_ref(), DEFAULT_SID, &Timestamp(now).to_bytes()]),
        t2: Timestamp(now),
        e5: m2.e5.clone(),
    };
    sim.inject(Message::M2(forged).encode(&suite), now, Party::Sensor);
    sim.release(Action::Pass);
    let mut notes = vec![format!(
        "SP1 xor p2b(e2) {} the sensor's AS",
        if leaked { "equals" } else { "differs from" }
    )];
    notes.push("M2 forged with the candidate AS was sent to the sensor".into());
    let mut ev = network_evidence(sim.transcript(), notes);
    if leaked {
        ev.verdict = Verdict::Succeeded;
    }
    ev
}

const PASSWORD_GUESSES: &[&str] = &["123456", "password", "alice", "letmein", "alice-password-1"];

fn stolen_card(config: &SimConfig) -> Evidence {
    let mut sim = Sim::new(config);
    let env = sim.env().clone();
    let card = sim.card().clone();
    let id = sim.credentials().id().to_vec();
    let x = sim.gateway().public_key().clone();
    for guess in PASSWORD_GUESSES {
        sim.set_credentials(Credentials::new(id.clone(), *guess, None).expect("valid guess"));
        sim.start_handshake(DEFAULT_SID);
        sim.run();
        // Skip the card's own check and send the guessed verifier anyway.
        let uap = make_uap(&env.suite, guess.as_bytes(), &Digest::ZERO, card.q());
        let b = env.suite.hash_fields(&[&id, uap.as_ref(), card.z().as_ref()]);
        let now = Timestamp(sim.clock().now());
        let (m1, _) = user_auth_init(&env, sim.rng(), b, DEFAULT_SID, now, &x).expect("valid key");
        sim.inject(Message::M1(m1).encode(&env.suite), now.0, Party::Gateway);
        sim.run();
    }
    let logins = PASSWORD_GUESSES.len()
        - sim
            .outcomes()
            .iter()
            .filter(|o| matches!(o.result, PartyResult::Rejected { code: "login", .. }))
            .count();
    let mut notes = vec![format!(
        "{} password guesses: {logins} passed the card's login check",
        PASSWORD_GUESSES.len()
    )];
    notes.push("each guessed verifier was also sent to the gateway directly".into());
    let login_reason = sim.outcomes().iter().find_map(|o| match &o.result {
        PartyResult::Rejected { code: "login", reason } => Some(format!("user: login ({reason})")),
        _ => None,
    });
    let mut ev = network_evidence(sim.transcript(), notes);
    ev.reason = login_reason.or(ev.reason);
    if logins > 0 {
        ev.verdict = Verdict::Succeeded;
    }
    ev
}

fn wrong_sid(config: &SimConfig) -> Evidence {
    let mut sim = Sim::new(config);
    sim.start_handshake(b"sensor-404");
    sim.run();
    let t = sim.transcript();
    let reason = t.first_rejection().and_then(|o| match &o.result {
        PartyResult::Rejected { code, reason } => Some(format!("{}: {code} ({reason})", o.party.name())),
        _ => None,
    });
    let reached_sensor = t.events.iter().any(|e| e.to == Party::Sensor);
    let completed = t
        .outcomes
        .iter()
        .any(|o| matches!(o.result, PartyResult::Completed { .. }));
    let mut notes = vec![format!(
        "request for an unregistered SID reached the sensor: {reached_sensor}"
    )];
    let verdict = if completed || reached_sensor {
        notes.push("a party acted on the misrouted request".into());
        Verdict::Succeeded
    } else {
        Verdict::Prevented
    };
    Evidence {
        verdict,
        reason,
        cost: CostProfile::default(),
        notes,
        transcript: Some(t),
    }
}

fn pc_lost_confirmation(config: &SimConfig) -> Evidence {
    let mut sim = Sim::new(config).with_script(AdversaryScript::passive().on(1, Action::Drop));
    let card_before = sim.card().clone();
    sim.start_password_change(b"new-password");
    sim.run();
    let card_unchanged = *sim.card() == card_before;
    let pending = sim
        .gateway()
        .user(sim.credentials().id())
        .is_some_and(|r| r.pending.is_some());
    sim.clock_mut().advance(1_000);
    sim.start_handshake(DEFAULT_SID);
    sim.run();
    let t = sim.transcript();
    let notes = vec![
        format!("card unchanged after the lost PC2: {card_unchanged}"),
        format!("gateway holds a pending verifier: {pending}"),
        "the user then logged in with the old password".into(),
    ];
    let verdict = if t.agreed_key().is_some() {
        Verdict::Prevented
    } else {
        Verdict::Succeeded
    };
    Evidence {
        verdict,
        reason: t.first_rejection().map(|o| format!("{} rejected", o.party.name())),
        cost: CostProfile::default(),
        notes,
        transcript: Some(t),
    }
}

fn stolen_verifier(config: &SimConfig) -> Evidence {
    let mut sim = Sim::new(config);
    let env = sim.env().clone();
    let id = sim.credentials().id().to_vec();
    let record = sim.gateway().user(&id).expect("registered").clone();
    let x = sim.gateway().public_key().clone();
    let now = Timestamp(sim.clock().now());
    let (m1, session) = user_auth_init(&env, sim.rng(), record.b, DEFAULT_SID, now, &x).expect("valid key");
    sim.inject(Message::M1(m1).encode(&env.suite), now.0, Party::Gateway);
    sim.run();
    let t = sim.transcript();
    let m4 = t
        .events
        .iter()
        .find(|e| e.from == Party::Gateway && e.to == Party::User)
        .and_then(|e| match Message::decode(&env.suite, &e.wire) {
            Ok(Message::M4(m4)) => Some(m4),
            _ => None,
        });
    let mut notes = vec!["adversary knows B and z from the gateway table, the SID and X".into()];
    let recovered = m4.and_then(|m4| {
        let fake = SmartCard::from_parts(Digest::ZERO, Digest::ZERO, record.z, Digest::ZERO, env.suite.hash_id());
        session.on_m4(&env, &fake, &m4, Timestamp(sim.clock().now())).ok()
    });
    let gateway_key = t.outcomes.iter().find_map(|o| match o.result {
        PartyResult::Completed { sk } if o.party == Party::Gateway && o.tainted => Some(sk),
        _ => None,
    });
    let verdict = match (recovered, gateway_key) {
        (Some(k), Some(g)) if k == g => {
            notes.push(format!(
                "forged M1 accepted; adversary recovered the session key (fingerprint {})",
                k.fingerprint()
            ));
            Verdict::Succeeded
        }
        _ => Verdict::Prevented,
    };
    Evidence {
        verdict,
        reason: tainted_rejection(&t),
        cost: adversarial_cost(&t),
        notes,
        transcript: Some(t),
    }
}

fn s_and_z(config: &SimConfig) -> Evidence {
    let mut sim = Sim::new(config);
    sim.start_handshake(DEFAULT_SID);
    sim.run();
    let t = sim.transcript();
    let suite = sim.env().suite.clone();
    let s = sim.gateway().secret_key().clone();
    let z = *sim.card().z();
    let decode = |i: usize| Message::decode(&suite, &t.events[i].wire).ok();
    let recovered = (|| {
        let Some(Message::M1(m1)) = decode(0) else { return None };
        let Some(Message::M4(m4)) = decode(3) else { return None };
        let e2 = suite.curve().mul(&s, &m1.e1).ok()?;
        let key = suite.kdf_key(&e2).ok()?;
        let plain = ae_open(&key, &m4.e7).ok()?;
        let f = unframe(&plain, 3).ok()?;
        Some(Digest::from_slice(f[1]).ok()? ^ z)
    })();
    let agreed = t.agreed_key();
    let mut notes = vec!["adversary recorded M1..M4, then learned S and the user's z".into()];
    let verdict = match (recovered, agreed) {
        (Some(k), Some(a)) if k == *a.expose() => {
            notes.push("e2 = S*e1 opens e7; SKU xor z gives the session key".into());
            Verdict::Succeeded
        }
        _ => Verdict::Prevented,
    };
    Evidence {
        verdict,
        reason: None,
        cost: CostProfile::default(),
        notes,
        transcript: Some(t),
    }
}

/// Cost of one rejected input at one party.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProbeReport {
    pub party: Party,
    pub rejection: Option<String>,
    pub cost: OpCounts,
    pub derivation_hashes: u64,
}

impl ProbeReport {
    fn new(party: Party, r: Result<(), Rejection>, t: Tally) -> Self {
        ProbeReport {
            party,
            rejection: r.err().map(|e| e.code().to_string()),
            cost: OpCounts::new(t.hash, t.ecc, t.sym),
            derivation_hashes: t.aux_hash,
        }
    }
}

/// Feeds arbitrary bytes to the gateway and reports the work spent on them.
pub fn dos_probe(env: &Env, gw: &mut GatewayState, bytes: &[u8], now: Timestamp) -> ProbeReport {
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let (r, t) = measure(|| match Message::decode(&env.suite, bytes)? {
        Message::M1(m1) => gw.on_m1(env, &mut rng, &m1, now).map(|_| ()),
        Message::Pc1(pc1) => gw.on_pc(env, &pc1, now).map(|_| ()),
        Message::M3(_) => Err(Rejection::NoSession),
        m => Err(Rejection::Unexpected(m.kind())),
    });
    ProbeReport::new(Party::Gateway, r, t)
}

/// Feeds arbitrary bytes to a sensor and reports the work spent on them.
pub fn dos_probe_sensor(env: &Env, sensor: &SensorState, bytes: &[u8], now: Timestamp) -> ProbeReport {
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let (r, t) = measure(|| match Message::decode(&env.suite, bytes)? {
        Message::M2(m2) => sensor.on_m2(env, &mut rng, &m2, now).map(|_| ()),
        m => Err(Rejection::Unexpected(m.kind())),
    });
    ProbeReport::new(Party::Sensor, r, t)
}
