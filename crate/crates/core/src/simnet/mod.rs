//! Deterministic network simulation.
//!
//! A [`Sim`] owns the three parties, a simulated clock and an insecure
//! channel. Every message a party sends is captured as an [`Event`]; an
//! [`AdversaryScript`] decides what happens to it in transit. Deliveries are
//! processed in `(time, sequence)` order, so a run is a pure function of its
//! configuration, seed and script.
//!
//! Each delivery belongs to a conversation (the transport connection it
//! arrived on). Replies stay on the conversation of the message that caused
//! them; replays and injections open new ones. A conversation touched by the
//! adversary is tainted, and any completion on a tainted conversation is
//! attributed to the adversary.

mod attacks;

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::primitives::meter::{measure, Tally};
use crate::primitives::{CryptoSuite, Digest};
use crate::protocol::{
    register_user, user_auth_init, user_login, user_pc_request, Credentials, Env, GatewaySession, GatewayState,
    Message, MessageView, PcSession, ProtocolConfig, Rejection, SensorState, SessionKey, SmartCard, Timestamp,
    UserSession,
};

pub use attacks::{
    dos_probe, dos_probe_sensor, run_attack, run_compromise, AttackOutcome, ProbeReport, ScenarioInfo, Verdict,
    ATTACKS, COMPROMISE_CHECKS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    User,
    Gateway,
    Sensor,
    Adversary,
}

impl Party {
    fn slot(self) -> usize {
        match self {
            Party::User => 0,
            Party::Gateway => 1,
            Party::Sensor => 2,
            Party::Adversary => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Party::User => "user",
            Party::Gateway => "gateway",
            Party::Sensor => "sensor",
            Party::Adversary => "adversary",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("setup error: {0}")]
    Setup(String),
    #[error("unknown scenario {name:?}; available: {}", catalog.join(", "))]
    UnknownScenario { name: String, catalog: Vec<&'static str> },
}

/// Global simulated time plus a fixed skew per party.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimClock {
    now: u64,
    skew: [i64; 4],
}

impl SimClock {
    pub fn new(start_ms: u64) -> Self {
        SimClock {
            now: start_ms,
            skew: [0; 4],
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn advance(&mut self, ms: u64) {
        self.now = self.now.saturating_add(ms);
    }

    /// Moves forward to `t`; never backwards.
    pub fn advance_to(&mut self, t: u64) {
        self.now = self.now.max(t);
    }

    pub fn set_skew(&mut self, party: Party, ms: i64) {
        self.skew[party.slot()] = ms;
    }

    /// The time `party` reads from its own clock.
    pub fn local(&self, party: Party) -> Timestamp {
        Timestamp(self.now.saturating_add_signed(self.skew[party.slot()]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub seed: u64,
    pub suite: CryptoSuite,
    pub protocol: ProtocolConfig,
    pub start_ms: u64,
    /// Transit time of one hop.
    pub hop_ms: u64,
    /// Clock skew of user, gateway and sensor.
    pub skew: [i64; 3],
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            suite: CryptoSuite::toy(),
            protocol: ProtocolConfig::default(),
            start_ms: 1_000_000,
            hop_ms: 10,
            skew: [0; 3],
        }
    }
}

impl SimConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_suite(mut self, suite: CryptoSuite) -> Self {
        self.suite = suite;
        self
    }

    pub fn with_replay_cache(mut self, on: bool) -> Self {
        self.protocol.replay_cache = on;
        self
    }
}

pub const DEFAULT_USER: &str = "alice";
pub const DEFAULT_PASSWORD: &str = "alice-password";
pub const DEFAULT_SID: &[u8] = b"sensor-1";

/// Registered parties ready to run.
#[derive(Clone, Debug)]
pub struct Deployment {
    pub gateway: GatewayState,
    pub sensor: SensorState,
    pub card: SmartCard,
    pub creds: Credentials,
}

impl Deployment {
    /// One gateway, one registered sensor and one registered user.
    pub fn generate(suite: &CryptoSuite, rng: &mut ChaCha20Rng) -> Deployment {
        let mut gateway = GatewayState::new(suite, rng);
        gateway.provision_sensor(DEFAULT_SID).expect("valid SID");
        let auth = gateway.register_sensor(suite, DEFAULT_SID).expect("provisioned");
        let bmp = Digest::random(rng);
        let creds = Credentials::new(DEFAULT_USER, DEFAULT_PASSWORD, Some(bmp)).expect("valid credentials");
        let card = register_user(&mut gateway, suite, rng, &creds).expect("fresh gateway");
        Deployment {
            gateway,
            sensor: SensorState::new(DEFAULT_SID.to_vec(), auth),
            card,
            creds,
        }
    }

    fn check(&self) -> Result<(), SimError> {
        match self.gateway.sensors().find(|(sid, _)| *sid == self.sensor.sid()) {
            Some((_, auth)) if auth == self.sensor.auth() => {}
            Some(_) => return Err(SimError::Setup("sensor AS does not match the gateway record".into())),
            None => {
                return Err(SimError::Setup(format!(
                    "sensor {:?} is not registered at the gateway",
                    String::from_utf8_lossy(self.sensor.sid())
                )))
            }
        }
        if self.gateway.user(self.creds.id()).is_none() {
            return Err(SimError::Setup(format!(
                "user {:?} is not registered at the gateway",
                String::from_utf8_lossy(self.creds.id())
            )));
        }
        Ok(())
    }
}

/// What the adversary does with captured traffic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum Action {
    Pass,
    Drop,
    Delay {
        ms: u64,
    },
    /// XOR `mask` into the byte at `offset`.
    Mutate {
        offset: usize,
        mask: u8,
    },
    /// Re-send the bytes of an earlier event to its original recipient.
    Replay {
        event: usize,
        at: u64,
    },
    Inject {
        #[serde(with = "hex_bytes")]
        bytes: Vec<u8>,
        at: u64,
        to: Party,
    },
}

impl Action {
    fn is_interception(&self) -> bool {
        matches!(
            self,
            Action::Pass | Action::Drop | Action::Delay { .. } | Action::Mutate { .. }
        )
    }
}

/// Actions keyed by the index of the event whose capture triggers them.
///
/// `Pass`, `Drop`, `Delay` and `Mutate` decide the fate of that event (the
/// last one wins, default `Pass`). `Replay` and `Inject` are scheduled when
/// the event is captured and may only reference events captured so far.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AdversaryScript {
    steps: Vec<(usize, Action)>,
}

impl AdversaryScript {
    pub fn passive() -> Self {
        Self::default()
    }

    pub fn on(mut self, event: usize, action: Action) -> Self {
        self.steps.push((event, action));
        self
    }

    pub fn is_passive(&self) -> bool {
        self.steps.iter().all(|(_, a)| *a == Action::Pass)
    }

    fn fate(&self, event: usize) -> Action {
        self.steps
            .iter()
            .rev()
            .find(|(i, a)| *i == event && a.is_interception())
            .map(|(_, a)| a.clone())
            .unwrap_or(Action::Pass)
    }

    fn timed(&self, event: usize) -> Vec<Action> {
        self.steps
            .iter()
            .filter(|(i, a)| *i == event && !a.is_interception())
            .map(|(_, a)| a.clone())
            .collect()
    }
}

mod hex_bytes {
    pub fn serialize<S: serde::Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Fate {
    Delivered {
        at: u64,
    },
    Dropped,
    Delayed {
        ms: u64,
        at: u64,
    },
    Mutated {
        offset: usize,
        mask: u8,
        at: u64,
    },
    /// Still in the adversary's hands when the run stopped.
    Held,
}

/// One captured transmission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Event {
    pub index: usize,
    pub sent_at: u64,
    pub from: Party,
    pub to: Party,
    pub conv: u32,
    #[serde(with = "hex_bytes")]
    pub wire: Vec<u8>,
    /// `None` when the bytes do not decode as a protocol message.
    pub view: Option<MessageView>,
    pub fate: Fate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PartyResult {
    /// Holds the key; serializes as its fingerprint.
    Completed {
        sk: SessionKey,
    },
    Rejected {
        code: &'static str,
        reason: String,
    },
    /// Password change accepted (gateway) or confirmed (user).
    PasswordChange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutcomeRecord {
    pub party: Party,
    pub conv: u32,
    pub at: u64,
    pub tainted: bool,
    pub result: PartyResult,
}

/// Work one party did on one delivery.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Processing {
    pub party: Party,
    pub event: Option<usize>,
    pub conv: u32,
    pub tainted: bool,
    pub tally: Tally,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PartyTallies {
    pub user: Tally,
    pub gateway: Tally,
    pub sensor: Tally,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Transcript {
    pub seed: u64,
    pub curve: String,
    pub hash: &'static str,
    pub freshness_ms: u64,
    pub replay_cache: bool,
    pub adversarial: bool,
    pub events: Vec<Event>,
    pub outcomes: Vec<OutcomeRecord>,
    pub tallies: PartyTallies,
    #[serde(skip)]
    pub processing: Vec<Processing>,
}

impl Transcript {
    pub fn tally(&self, party: Party) -> Tally {
        match party {
            Party::User => self.tallies.user,
            Party::Gateway => self.tallies.gateway,
            Party::Sensor => self.tallies.sensor,
            Party::Adversary => Tally::default(),
        }
    }

    pub fn outcomes_of(&self, party: Party) -> impl Iterator<Item = &OutcomeRecord> {
        self.outcomes.iter().filter(move |o| o.party == party)
    }

    pub fn completed_key(&self, party: Party) -> Option<SessionKey> {
        self.outcomes_of(party).find_map(|o| match o.result {
            PartyResult::Completed { sk } if !o.tainted => Some(sk),
            _ => None,
        })
    }

    pub fn first_rejection(&self) -> Option<&OutcomeRecord> {
        self.outcomes
            .iter()
            .find(|o| matches!(o.result, PartyResult::Rejected { .. }))
    }

    /// The agreed key when all three parties completed with the same one.
    pub fn agreed_key(&self) -> Option<SessionKey> {
        let u = self.completed_key(Party::User)?;
        (self.completed_key(Party::Gateway)? == u && self.completed_key(Party::Sensor)? == u).then_some(u)
    }

    /// Ok when no adversary acted, nobody rejected anything and exactly one
    /// handshake completed with three equal keys.
    pub fn check_honest(&self) -> Result<(), String> {
        if self.adversarial {
            return Err("adversary acted on the channel".into());
        }
        if let Some(r) = self.first_rejection() {
            return Err(format!("{} rejected a message", r.party.name()));
        }
        for p in [Party::User, Party::Gateway, Party::Sensor] {
            let n = self
                .outcomes_of(p)
                .filter(|o| matches!(o.result, PartyResult::Completed { .. }))
                .count();
            if n != 1 {
                return Err(format!("{} completed {n} handshakes", p.name()));
            }
        }
        self.agreed_key()
            .map(|_| ())
            .ok_or_else(|| "session keys differ".into())
    }

    /// Every event's wire bytes decode back to its recorded view.
    pub fn codec_consistent(&self, suite: &CryptoSuite) -> bool {
        self.events.iter().all(|e| {
            let view = Message::decode(suite, &e.wire).ok().map(|m| m.view(suite));
            view == e.view
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("transcript serializes")
    }
}

#[derive(Debug, Clone)]
struct Delivery {
    to: Party,
    bytes: Vec<u8>,
    conv: u32,
    tainted: bool,
    source: Source,
}

#[derive(Debug, Clone)]
enum Source {
    /// Sent by a party; the event already exists.
    Event(usize),
    /// Created by the adversary; the event is recorded on delivery.
    Adversary,
}

/// The simulator. Cloning it takes a snapshot of the whole world.
#[derive(Clone)]
pub struct Sim {
    env: Env,
    seed: u64,
    clock: SimClock,
    hop_ms: u64,
    rng: ChaCha20Rng,
    gateway: GatewayState,
    sensor: SensorState,
    card: SmartCard,
    creds: Credentials,
    user_sessions: BTreeMap<u32, UserSession>,
    pc_sessions: BTreeMap<u32, (PcSession, Credentials)>,
    gw_sessions: BTreeMap<u32, GatewaySession>,
    queue: BTreeMap<(u64, u64), Delivery>,
    seq: u64,
    next_conv: u32,
    tainted: BTreeSet<u32>,
    script: AdversaryScript,
    adversarial: bool,
    hold_at: Option<usize>,
    held: Option<Delivery>,
    events: Vec<Event>,
    outcomes: Vec<OutcomeRecord>,
    tallies: [Tally; 4],
    processing: Vec<Processing>,
}

impl Sim {
    /// A fresh deployment generated from `config.seed`.
    pub fn new(config: &SimConfig) -> Sim {
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        let deployment = Deployment::generate(&config.suite, &mut rng);
        Self::assemble(config, deployment, rng)
    }

    /// Runs over existing parties, e.g. loaded from disk.
    pub fn from_deployment(config: &SimConfig, deployment: Deployment) -> Result<Sim, SimError> {
        deployment.check()?;
        let rng = ChaCha20Rng::seed_from_u64(config.seed);
        Ok(Self::assemble(config, deployment, rng))
    }

    fn assemble(config: &SimConfig, d: Deployment, rng: ChaCha20Rng) -> Sim {
        let mut clock = SimClock::new(config.start_ms);
        for (p, s) in [Party::User, Party::Gateway, Party::Sensor]
            .into_iter()
            .zip(config.skew)
        {
            clock.set_skew(p, s);
        }
        Sim {
            env: Env::new(config.suite.clone(), config.protocol),
            seed: config.seed,
            clock,
            hop_ms: config.hop_ms,
            rng,
            gateway: d.gateway,
            sensor: d.sensor,
            card: d.card,
            creds: d.creds,
            user_sessions: BTreeMap::new(),
            pc_sessions: BTreeMap::new(),
            gw_sessions: BTreeMap::new(),
            queue: BTreeMap::new(),
            seq: 0,
            next_conv: 0,
            tainted: BTreeSet::new(),
            script: AdversaryScript::default(),
            adversarial: false,
            hold_at: None,
            held: None,
            events: Vec::new(),
            outcomes: Vec::new(),
            tallies: [Tally::default(); 4],
            processing: Vec::new(),
        }
    }

    pub fn with_script(mut self, script: AdversaryScript) -> Sim {
        self.script = script;
        self
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn clock(&self) -> &SimClock {
        &self.clock
    }

    pub fn clock_mut(&mut self) -> &mut SimClock {
        &mut self.clock
    }

    pub fn gateway(&self) -> &GatewayState {
        &self.gateway
    }

    pub fn gateway_mut(&mut self) -> &mut GatewayState {
        &mut self.gateway
    }

    pub fn sensor(&self) -> &SensorState {
        &self.sensor
    }

    pub fn card(&self) -> &SmartCard {
        &self.card
    }

    pub fn credentials(&self) -> &Credentials {
        &self.creds
    }

    /// Replaces what the user types at the next login.
    pub fn set_credentials(&mut self, creds: Credentials) {
        self.creds = creds;
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn outcomes(&self) -> &[OutcomeRecord] {
        &self.outcomes
    }

    pub fn user_session(&self, conv: u32) -> Option<&UserSession> {
        self.user_sessions.get(&conv)
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    fn open_conv(&mut self) -> u32 {
        let c = self.next_conv;
        self.next_conv += 1;
        c
    }

    fn record(&mut self, party: Party, conv: u32, result: PartyResult) {
        self.outcomes.push(OutcomeRecord {
            party,
            conv,
            at: self.clock.now(),
            tainted: self.tainted.contains(&conv),
            result,
        });
    }

    fn reject(&mut self, party: Party, conv: u32, r: Rejection) {
        self.record(
            party,
            conv,
            PartyResult::Rejected {
                code: r.code(),
                reason: r.to_string(),
            },
        );
    }

    fn schedule(&mut self, at: u64, d: Delivery) {
        self.queue.insert((at, self.seq), d);
        self.seq += 1;
    }

    /// The user logs in and sends M1 towards `sid`. Returns the conversation.
    pub fn start_handshake(&mut self, sid: &[u8]) -> u32 {
        let conv = self.open_conv();
        let now = self.clock.local(Party::User);
        let x = self.gateway.public_key().clone();
        let (r, tally) = measure(|| {
            let b = user_login(&self.env.suite, &self.card, &self.creds)?;
            user_auth_init(&self.env, &mut self.rng, b, sid, now, &x)
        });
        self.account(Party::User, None, conv, tally);
        match r {
            Ok((m1, session)) => {
                self.user_sessions.insert(conv, session);
                self.send(Party::User, Party::Gateway, Message::M1(m1), conv);
            }
            Err(e) => self.reject(Party::User, conv, e),
        }
        conv
    }

    /// The user asks to change the password to `new_pw`.
    pub fn start_password_change(&mut self, new_pw: &[u8]) -> u32 {
        let conv = self.open_conv();
        let now = self.clock.local(Party::User);
        let x = self.gateway.public_key().clone();
        let (r, tally) =
            measure(|| user_pc_request(&self.env, &mut self.rng, &self.card, &self.creds, new_pw, now, &x));
        self.account(Party::User, None, conv, tally);
        match r {
            Ok((pc1, session)) => {
                let next = self
                    .creds
                    .with_password(new_pw.to_vec())
                    .expect("password length checked by caller");
                self.pc_sessions.insert(conv, (session, next));
                self.send(Party::User, Party::Gateway, Message::Pc1(pc1), conv);
            }
            Err(e) => self.reject(Party::User, conv, e),
        }
        conv
    }

    fn account(&mut self, party: Party, event: Option<usize>, conv: u32, tally: Tally) {
        self.tallies[party.slot()] += tally;
        self.processing.push(Processing {
            party,
            event,
            conv,
            tainted: self.tainted.contains(&conv),
            tally,
        });
    }

    fn send(&mut self, from: Party, to: Party, msg: Message, conv: u32) {
        let wire = msg.encode(&self.env.suite);
        let index = self.events.len();
        self.events.push(Event {
            index,
            sent_at: self.clock.now(),
            from,
            to,
            conv,
            view: Some(msg.view(&self.env.suite)),
            wire: wire.clone(),
            fate: Fate::Held,
        });
        let delivery = Delivery {
            to,
            bytes: wire,
            conv,
            tainted: self.tainted.contains(&conv),
            source: Source::Event(index),
        };
        if self.hold_at == Some(index) {
            self.hold_at = None;
            self.held = Some(delivery);
            return;
        }
        let fate = self.script.fate(index);
        self.apply(index, fate, delivery);
    }

    fn apply(&mut self, index: usize, fate: Action, mut d: Delivery) {
        let now = self.clock.now();
        let at = now + self.hop_ms;
        if fate != Action::Pass {
            self.adversarial = true;
        }
        let recorded = match fate {
            Action::Drop => Fate::Dropped,
            Action::Delay { ms } => {
                self.schedule(at + ms, d);
                Fate::Delayed { ms, at: at + ms }
            }
            Action::Mutate { offset, mask } => {
                if let Some(b) = d.bytes.get_mut(offset) {
                    *b ^= mask;
                }
                d.tainted = true;
                self.schedule(at, d);
                Fate::Mutated { offset, mask, at }
            }
            _ => {
                self.schedule(at, d);
                Fate::Delivered { at }
            }
        };
        self.events[index].fate = recorded;
        for action in self.script.timed(index) {
            self.adversarial = true;
            match action {
                Action::Replay { event, at } => {
                    if let Some(e) = self.events.get(event) {
                        let d = Delivery {
                            to: e.to,
                            bytes: e.wire.clone(),
                            conv: u32::MAX,
                            tainted: true,
                            source: Source::Adversary,
                        };
                        self.schedule(at.max(now), d);
                    }
                }
                Action::Inject { bytes, at, to } => {
                    let d = Delivery {
                        to,
                        bytes,
                        conv: u32::MAX,
                        tainted: true,
                        source: Source::Adversary,
                    };
                    self.schedule(at.max(now), d);
                }
                _ => unreachable!("filtered by timed()"),
            }
        }
    }

    /// Queues `bytes` for `to` at time `at` on a new adversarial conversation.
    pub fn inject(&mut self, bytes: Vec<u8>, at: u64, to: Party) {
        self.adversarial = true;
        let at = at.max(self.clock.now());
        self.schedule(
            at,
            Delivery {
                to,
                bytes,
                conv: u32::MAX,
                tainted: true,
                source: Source::Adversary,
            },
        );
    }

    /// Keeps event `index` in transit when it is captured, instead of
    /// applying the script. Set this before the send that produces it.
    pub fn hold(&mut self, index: usize) {
        self.hold_at = Some(index);
    }

    /// Wire bytes and recipient of the held event.
    pub fn held(&self) -> Option<(&[u8], Party)> {
        self.held.as_ref().map(|d| (d.bytes.as_slice(), d.to))
    }

    /// Runs until event `index` is captured and keeps it in transit.
    /// Returns its wire bytes, or `None` if the run ended first.
    pub fn run_to_event(&mut self, index: usize) -> Option<Vec<u8>> {
        if self.held.is_none() {
            if index < self.events.len() {
                return None;
            }
            self.hold(index);
            self.run();
            self.hold_at = None;
        }
        self.held().map(|(b, _)| b.to_vec())
    }

    /// Decides the fate of the held event and resumes.
    pub fn release(&mut self, action: Action) {
        if let Some(d) = self.held.take() {
            let Source::Event(index) = d.source else {
                unreachable!("only party sends are held")
            };
            self.apply(index, action, d);
            self.run();
        }
    }

    /// Processes deliveries until the queue is empty or an event is held.
    pub fn run(&mut self) {
        while self.held.is_none() {
            let Some(((at, _), d)) = self.queue.pop_first() else {
                break;
            };
            self.clock.advance_to(at);
            self.deliver(d);
        }
    }

    fn deliver(&mut self, mut d: Delivery) {
        let event = match d.source {
            Source::Event(i) => i,
            Source::Adversary => {
                d.conv = self.open_conv();
                let index = self.events.len();
                let view = Message::decode(&self.env.suite, &d.bytes)
                    .ok()
                    .map(|m| m.view(&self.env.suite));
                self.events.push(Event {
                    index,
                    sent_at: self.clock.now(),
                    from: Party::Adversary,
                    to: d.to,
                    conv: d.conv,
                    wire: d.bytes.clone(),
                    view,
                    fate: Fate::Delivered { at: self.clock.now() },
                });
                index
            }
        };
        if d.tainted {
            self.tainted.insert(d.conv);
        }
        let (outs, tally) = measure(|| self.handle(d.to, &d.bytes, d.conv));
        self.account(d.to, Some(event), d.conv, tally);
        for (to, msg) in outs {
            self.send(d.to, to, msg, d.conv);
        }
    }

    fn handle(&mut self, party: Party, bytes: &[u8], conv: u32) -> Vec<(Party, Message)> {
        let now = self.clock.local(party);
        let msg = match Message::decode(&self.env.suite, bytes) {
            Ok(m) => m,
            Err(e) => {
                self.reject(party, conv, e.into());
                return Vec::new();
            }
        };
        let result = match (party, msg) {
            (Party::Gateway, Message::M1(m1)) => {
                self.gateway.on_m1(&self.env, &mut self.rng, &m1, now).map(|(m2, s)| {
                    self.gw_sessions.insert(conv, s);
                    vec![(Party::Sensor, Message::M2(m2))]
                })
            }
            (Party::Gateway, Message::M3(m3)) => match self.gw_sessions.remove(&conv) {
                None => Err(Rejection::NoSession),
                Some(s) => self.gateway.on_m3(&self.env, s, &m3, now).map(|(m4, sk)| {
                    self.record(Party::Gateway, conv, PartyResult::Completed { sk });
                    vec![(Party::User, Message::M4(m4))]
                }),
            },
            (Party::Gateway, Message::Pc1(pc1)) => self.gateway.on_pc(&self.env, &pc1, now).map(|pc2| {
                self.record(Party::Gateway, conv, PartyResult::PasswordChange);
                vec![(Party::User, Message::Pc2(pc2))]
            }),
            (Party::Sensor, Message::M2(m2)) => {
                self.sensor.on_m2(&self.env, &mut self.rng, &m2, now).map(|(m3, sk)| {
                    self.record(Party::Sensor, conv, PartyResult::Completed { sk });
                    vec![(Party::Gateway, Message::M3(m3))]
                })
            }
            (Party::User, Message::M4(m4)) => match self.user_sessions.remove(&conv) {
                None => Err(Rejection::NoSession),
                Some(s) => s.on_m4(&self.env, &self.card, &m4, now).map(|sk| {
                    self.record(Party::User, conv, PartyResult::Completed { sk });
                    Vec::new()
                }),
            },
            (Party::User, Message::Pc2(pc2)) => match self.pc_sessions.remove(&conv) {
                None => Err(Rejection::NoSession),
                Some((s, next)) => s.confirm(&self.env, &mut self.card, &pc2, now).map(|()| {
                    self.creds = next;
                    self.record(Party::User, conv, PartyResult::PasswordChange);
                    Vec::new()
                }),
            },
            (_, m) => Err(Rejection::Unexpected(m.kind())),
        };
        result.unwrap_or_else(|e| {
            self.reject(party, conv, e);
            Vec::new()
        })
    }

    pub fn transcript(&self) -> Transcript {
        let t = |p: Party| self.tallies[p.slot()];
        Transcript {
            seed: self.seed,
            curve: self.env.suite.curve().id().to_string(),
            hash: self.env.suite.hash_id(),
            freshness_ms: self.env.config.freshness_ms,
            replay_cache: self.env.config.replay_cache,
            adversarial: self.adversarial,
            events: self.events.clone(),
            outcomes: self.outcomes.clone(),
            tallies: PartyTallies {
                user: t(Party::User),
                gateway: t(Party::Gateway),
                sensor: t(Party::Sensor),
            },
            processing: self.processing.clone(),
        }
    }
}

/// One honest handshake over a passive channel.
pub fn run_session(config: &SimConfig) -> Transcript {
    let mut sim = Sim::new(config);
    sim.start_handshake(DEFAULT_SID);
    sim.run();
    sim.transcript()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clock_is_monotone_and_skewed() {
        let mut c = SimClock::new(100);
        c.advance_to(50);
        assert_eq!(c.now(), 100);
        c.advance(5);
        c.set_skew(Party::Sensor, -200);
        assert_eq!(c.local(Party::Sensor), Timestamp(0));
        assert_eq!(c.local(Party::User), Timestamp(105));
    }

    #[test]
    fn honest_session_has_four_events() {
        let t = run_session(&SimConfig::default());
        assert_eq!(t.events.len(), 4);
        let kinds: Vec<_> = t.events.iter().map(|e| e.view.as_ref().unwrap().kind).collect();
        assert_eq!(kinds, ["M1", "M2", "M3", "M4"]);
        t.check_honest().unwrap();
        assert!(t.codec_consistent(&CryptoSuite::toy()));
    }

    #[test]
    fn held_event_can_be_released_from_a_snapshot() {
        let mut sim = Sim::new(&SimConfig::default());
        sim.start_handshake(DEFAULT_SID);
        let wire = sim.run_to_event(2).unwrap();
        assert_eq!(wire[0], 0x03);
        let mut a = sim.clone();
        a.release(Action::Pass);
        a.transcript().check_honest().unwrap();
        let mut b = sim;
        b.release(Action::Drop);
        assert!(b.transcript().agreed_key().is_none());
    }
}
