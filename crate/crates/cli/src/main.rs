use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value};

use wsn_ake::costmodel::{builtin_schemes, measure_counts, render_table, Accounting, UnitCosts, OURS};
use wsn_ake::dolevyao::{run_secrecy_scenario_with, Limits, SCENARIOS};
use wsn_ake::primitives::{CryptoSuite, Digest, HashAlg};
use wsn_ake::protocol::store::{
    decode_card, decode_gateway, encode_card, encode_gateway, read_file, write_file, DbLock,
};
use wsn_ake::protocol::{register_user, Credentials, GatewayState, ProtocolConfig, SensorState, SmartCard};
use wsn_ake::simnet::{
    run_attack, run_compromise, Deployment, Party, PartyResult, Sim, SimConfig, Transcript, ATTACKS, COMPROMISE_CHECKS,
};

#[derive(Parser, Debug)]
#[command(
    name = "wsn-ake",
    version,
    about = "User/gateway/sensor key exchange: simulator, attacks, symbolic checks, costs"
)]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
struct Opts {
    /// Curve for new databases and for attacks; defaults to the database's
    /// curve, else standard.
    #[arg(long, global = true, value_enum)]
    curve: Option<Curve>,
    #[arg(long, global = true, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
    freshness_ms: u64,
    #[arg(long, global = true, value_enum, default_value_t = Toggle::On)]
    replay_cache: Toggle,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value = "gateway.db")]
    db: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Unit cost of one hash, in seconds.
    #[arg(long, global = true)]
    th: Option<String>,
    /// Unit cost of one point multiplication, in seconds.
    #[arg(long, global = true)]
    tecc: Option<String>,
    /// Unit cost of one symmetric operation, in seconds.
    #[arg(long, global = true)]
    tsym: Option<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Curve {
    Toy,
    Standard,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Toggle {
    On,
    Off,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Text,
    Json,
}

#[derive(Args, Debug)]
struct UserArgs {
    #[arg(long)]
    id: String,
    #[arg(long)]
    pw: String,
    /// Biometric template digest, 64 hex characters.
    #[arg(long)]
    bmp: Option<String>,
    #[arg(long)]
    card: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Register a user and write their smart card.
    RegisterUser(UserArgs),
    /// Provision a sensor identity and register it.
    RegisterSensor {
        #[arg(long)]
        sid: String,
        /// Only add the SID to the provisioning list.
        #[arg(long)]
        provision: bool,
    },
    /// Run a full handshake between the card holder, the gateway and a sensor.
    Handshake {
        #[command(flatten)]
        user: UserArgs,
        #[arg(long)]
        sid: String,
    },
    /// Change the card holder's password.
    ChangePassword {
        #[command(flatten)]
        user: UserArgs,
        #[arg(long)]
        new_pw: String,
    },
    /// Run a concrete attack or compromise scenario.
    Attack { name: String },
    /// Run a symbolic secrecy scenario.
    Analyze {
        name: String,
        #[arg(long, default_value_t = 6)]
        max_rounds: usize,
        #[arg(long, default_value_t = 8)]
        max_size: usize,
    },
    /// Print the cost comparison table.
    CostReport,
    /// List every scenario with the property it checks.
    ListScenarios,
}

enum Fail {
    Error(String),
    Diverged,
}

impl<E: std::fmt::Display> From<E> for Fail {
    fn from(e: E) -> Self {
        Fail::Error(e.to_string())
    }
}

type Res = Result<(), Fail>;

fn main() -> ExitCode {
    // Exit code 2 is reserved for divergence, so usage errors exit 1.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Diverged) => ExitCode::from(2),
        Err(Fail::Error(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Res {
    let o = &cli.opts;
    match &cli.cmd {
        Cmd::RegisterUser(u) => register_user_cmd(o, u),
        Cmd::RegisterSensor { sid, provision } => register_sensor_cmd(o, sid, *provision),
        Cmd::Handshake { user, sid } => handshake_cmd(o, user, sid),
        Cmd::ChangePassword { user, new_pw } => change_password_cmd(o, user, new_pw),
        Cmd::Attack { name } => attack_cmd(o, name),
        Cmd::Analyze {
            name,
            max_rounds,
            max_size,
        } => analyze_cmd(o, name, *max_rounds, *max_size),
        Cmd::CostReport => cost_report_cmd(o),
        Cmd::ListScenarios => list_cmd(o),
    }
}

/// Prints the report. A closed stdout is not an error worth a panic.
fn emit(o: &Opts, text: &str, value: &Value) {
    let mut out = io::stdout().lock();
    let _ = match o.format {
        Format::Text => out.write_all(text.as_bytes()),
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(value).expect("json")),
    };
}

fn suite_for(curve: Curve) -> CryptoSuite {
    match curve {
        Curve::Toy => CryptoSuite::toy(),
        Curve::Standard => CryptoSuite::standard(),
    }
}

fn sim_config(o: &Opts, suite: CryptoSuite) -> SimConfig {
    let mut c = SimConfig::default()
        .with_seed(o.seed)
        .with_suite(suite)
        .with_replay_cache(o.replay_cache == Toggle::On);
    c.protocol = ProtocolConfig {
        freshness_ms: o.freshness_ms,
        ..c.protocol
    };
    c
}

/// Deterministic per-command randomness.
fn rng_for(o: &Opts, label: &str) -> ChaCha20Rng {
    let mut input = o.seed.to_be_bytes().to_vec();
    input.extend(label.as_bytes());
    ChaCha20Rng::from_seed(*HashAlg::Sha256.digest(&input).as_bytes())
}

fn fingerprint(d: &Digest) -> String {
    hex::encode(&HashAlg::Sha256.digest(d.as_ref()).as_bytes()[..8])
}

struct Db {
    path: PathBuf,
    suite: CryptoSuite,
    gateway: GatewayState,
    original: Option<Vec<u8>>,
}

impl Db {
    fn open(o: &Opts, create: bool) -> Result<Db, Fail> {
        if !o.db.exists() {
            if !create {
                return Err(Fail::Error(format!("no gateway database at {}", o.db.display())));
            }
            let suite = suite_for(o.curve.unwrap_or(Curve::Standard));
            let gateway = GatewayState::new(&suite, &mut rng_for(o, "gateway"));
            return Ok(Db {
                path: o.db.clone(),
                suite,
                gateway,
                original: None,
            });
        }
        let bytes = read_file(&o.db)?;
        let (suite, gateway) = decode_gateway(&bytes)?;
        if let Some(c) = o.curve {
            if suite_for(c).curve().id() != suite.curve().id() {
                return Err(Fail::Error(format!(
                    "database uses curve {}, not the requested one",
                    suite.curve().id()
                )));
            }
        }
        Ok(Db {
            path: o.db.clone(),
            suite,
            gateway,
            original: Some(bytes),
        })
    }

    /// Writes back only when the state changed.
    fn save(&self) -> Res {
        let bytes = encode_gateway(&self.suite, &self.gateway);
        if self.original.as_deref() != Some(&bytes[..]) {
            write_file(&self.path, &bytes)?;
        }
        Ok(())
    }
}

fn credentials(u: &UserArgs) -> Result<Credentials, Fail> {
    let bmp = match &u.bmp {
        Some(h) => {
            let raw = hex::decode(h).map_err(|e| format!("--bmp: {e}"))?;
            Some(Digest::from_slice(&raw).map_err(|e| format!("--bmp: {e}"))?)
        }
        None => None,
    };
    Ok(Credentials::new(u.id.as_bytes(), u.pw.as_bytes(), bmp)?)
}

fn load_card(path: &Path) -> Result<SmartCard, Fail> {
    Ok(decode_card(&read_file(path)?)?)
}

fn register_user_cmd(o: &Opts, u: &UserArgs) -> Res {
    let _lock = DbLock::acquire(&o.db)?;
    let mut db = Db::open(o, true)?;
    let creds = credentials(u)?;
    let card = register_user(
        &mut db.gateway,
        &db.suite,
        &mut rng_for(o, &format!("user:{}", u.id)),
        &creds,
    )?;
    write_file(&u.card, &encode_card(&card))?;
    db.save()?;
    let text = format!(
        "registered user {:?} on curve {}; card written to {}\n",
        u.id,
        db.suite.curve().id(),
        u.card.display()
    );
    emit(
        o,
        &text,
        &json!({"user": u.id, "curve": db.suite.curve().id(), "card": u.card, "users": db.gateway.users().count()}),
    );
    Ok(())
}

fn register_sensor_cmd(o: &Opts, sid: &str, provision_only: bool) -> Res {
    let _lock = DbLock::acquire(&o.db)?;
    let mut db = Db::open(o, true)?;
    db.gateway.provision_sensor(sid.as_bytes())?;
    let auth = if provision_only {
        None
    } else {
        Some(db.gateway.register_sensor(&db.suite, sid.as_bytes())?)
    };
    db.save()?;
    let (text, value) = match auth {
        Some(a) => (
            format!("registered sensor {sid:?}; AS fingerprint {}\n", fingerprint(&a)),
            json!({"sensor": sid, "registered": true, "as_fingerprint": fingerprint(&a)}),
        ),
        None => (
            format!("provisioned sensor {sid:?}\n"),
            json!({"sensor": sid, "registered": false}),
        ),
    };
    emit(o, &text, &value);
    Ok(())
}

/// Sim over the stored gateway. The sensor is the requested one when it
/// is registered, otherwise any registered sensor, so the gateway itself
/// gets to reject the unknown SID.
fn stored_sim(o: &Opts, db: &Db, u: &UserArgs, sid: &str) -> Result<Sim, Fail> {
    let card = load_card(&u.card)?;
    let creds = credentials(u)?;
    let sensor = db
        .gateway
        .sensors()
        .find(|(s, _)| *s == sid.as_bytes())
        .or_else(|| db.gateway.sensors().next())
        .map(|(s, a)| SensorState::new(s.to_vec(), *a))
        .ok_or("no sensor is registered at the gateway")?;
    let deployment = Deployment {
        gateway: db.gateway.clone(),
        sensor,
        card,
        creds,
    };
    Ok(Sim::from_deployment(&sim_config(o, db.suite.clone()), deployment)?)
}

fn outcome_lines(t: &Transcript) -> (String, Vec<Value>) {
    let mut text = String::new();
    let mut values = Vec::new();
    for e in &t.events {
        let kind = e.view.as_ref().map(|v| v.kind).unwrap_or("?");
        text.push_str(&format!(
            "  {kind} {} -> {} {} bytes at {}\n",
            e.from.name(),
            e.to.name(),
            e.wire.len(),
            e.sent_at
        ));
    }
    for r in &t.outcomes {
        let (line, v) = match &r.result {
            PartyResult::Completed { sk } => (
                format!("{}: completed, SK fingerprint {}", r.party.name(), sk.fingerprint()),
                json!({"party": r.party.name(), "result": "completed", "sk_fingerprint": sk.fingerprint()}),
            ),
            PartyResult::Rejected { code, reason } => (
                format!("{}: rejected ({code}): {reason}", r.party.name()),
                json!({"party": r.party.name(), "result": "rejected", "code": code, "reason": reason}),
            ),
            PartyResult::PasswordChange => (
                format!("{}: password change accepted", r.party.name()),
                json!({"party": r.party.name(), "result": "password-change"}),
            ),
        };
        text.push_str(&line);
        text.push('\n');
        values.push(v);
    }
    (text, values)
}

fn events_json(t: &Transcript) -> Vec<Value> {
    t.events
        .iter()
        .map(|e| {
            json!({
                "kind": e.view.as_ref().map(|v| v.kind),
                "from": e.from.name(),
                "to": e.to.name(),
                "bytes": e.wire.len(),
                "sent_at": e.sent_at,
            })
        })
        .collect()
}

fn handshake_cmd(o: &Opts, u: &UserArgs, sid: &str) -> Res {
    let _lock = DbLock::acquire(&o.db)?;
    let mut db = Db::open(o, false)?;
    let mut sim = stored_sim(o, &db, u, sid)?;
    sim.start_handshake(sid.as_bytes());
    sim.run();
    let t = sim.transcript();
    let (mut text, outcomes) = outcome_lines(&t);
    text.insert_str(0, &format!("curve {}, hash {}, seed {}\n", t.curve, t.hash, t.seed));
    let mut value = json!({
        "curve": t.curve,
        "hash": t.hash,
        "seed": t.seed,
        "events": events_json(&t),
        "outcomes": outcomes,
    });
    let result = match (t.agreed_key(), t.first_rejection()) {
        (Some(sk), None) => {
            let cost = measure_counts(&t, Accounting::Protocol)?;
            text.push_str(&format!("three parties agreed, SK fingerprint {}\n", sk.fingerprint()));
            for p in [Party::User, Party::Gateway, Party::Sensor] {
                text.push_str(&format!("  cost {}: {}\n", p.name(), cost.role(p)));
            }
            value["agreed"] = json!(true);
            value["sk_fingerprint"] = json!(sk.fingerprint());
            value["cost"] = serde_json::to_value(cost)?;
            db.gateway = sim.gateway().clone();
            db.save()?;
            Ok(())
        }
        (_, Some(r)) => {
            let reason = match &r.result {
                PartyResult::Rejected { code, reason } => format!("{} rejected ({code}): {reason}", r.party.name()),
                _ => unreachable!("first_rejection returns rejections"),
            };
            value["agreed"] = json!(false);
            Err(Fail::Error(reason))
        }
        (None, None) => {
            value["agreed"] = json!(false);
            Err(Fail::Error("handshake did not complete".into()))
        }
    };
    emit(o, &text, &value);
    result
}

fn change_password_cmd(o: &Opts, u: &UserArgs, new_pw: &str) -> Res {
    let _lock = DbLock::acquire(&o.db)?;
    let mut db = Db::open(o, false)?;
    if new_pw.is_empty() || new_pw.len() > 1024 {
        return Err(Fail::Error("new password must be 1..=1024 bytes".into()));
    }
    let sid = db
        .gateway
        .sensors()
        .next()
        .map(|(s, _)| String::from_utf8_lossy(s).into_owned())
        .unwrap_or_default();
    let mut sim = stored_sim(o, &db, u, &sid)?;
    sim.start_password_change(new_pw.as_bytes());
    sim.run();
    let t = sim.transcript();
    let (text, outcomes) = outcome_lines(&t);
    let confirmed = t
        .outcomes_of(Party::User)
        .any(|r| r.result == PartyResult::PasswordChange);
    emit(
        o,
        &text,
        &json!({"events": events_json(&t), "outcomes": outcomes, "changed": confirmed}),
    );
    if let Some(r) = t.first_rejection() {
        if let PartyResult::Rejected { code, reason } = &r.result {
            return Err(Fail::Error(format!("{} rejected ({code}): {reason}", r.party.name())));
        }
    }
    if !confirmed {
        return Err(Fail::Error("password change was not confirmed".into()));
    }
    write_file(&u.card, &encode_card(sim.card()))?;
    db.gateway = sim.gateway().clone();
    db.save()?;
    Ok(())
}

fn attack_cmd(o: &Opts, name: &str) -> Res {
    let config = sim_config(o, suite_for(o.curve.unwrap_or(Curve::Standard)));
    let out = if COMPROMISE_CHECKS.iter().any(|s| s.name == name) {
        run_compromise(name, &config)?
    } else {
        run_attack(name, &config).map_err(|_| {
            let known: Vec<&str> = ATTACKS.iter().chain(COMPROMISE_CHECKS).map(|s| s.name).collect();
            format!("unknown attack scenario {name:?}; known: {}", known.join(", "))
        })?
    };
    let mut value = serde_json::to_value(&out)?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("transcript");
    }
    emit(o, &out.to_text(), &value);
    if out.matches_expected() {
        Ok(())
    } else {
        Err(Fail::Diverged)
    }
}

fn analyze_cmd(o: &Opts, name: &str, max_rounds: usize, max_size: usize) -> Res {
    let limits = Limits::new(max_rounds, max_size)?;
    let report = run_secrecy_scenario_with(name, &limits)?;
    emit(o, &report.to_text(), &report.to_json());
    if report.matches_expected() {
        Ok(())
    } else {
        Err(Fail::Diverged)
    }
}

fn units(o: &Opts) -> Result<UnitCosts, Fail> {
    let r = UnitCosts::reference();
    let pick = |v: &Option<String>, d: String| v.clone().unwrap_or(d);
    Ok(UnitCosts::parse(
        &pick(&o.th, r.t_h.to_string()),
        &pick(&o.tecc, r.t_ecc.to_string()),
        &pick(&o.tsym, r.t_sym.to_string()),
    )?)
}

fn cost_report_cmd(o: &Opts) -> Res {
    let table = render_table(&builtin_schemes(), &units(o)?);
    // The built-in row for this protocol must agree with a counted run.
    let t = wsn_ake::simnet::run_session(&sim_config(o, CryptoSuite::toy()));
    let measured = measure_counts(&t, Accounting::Protocol)?;
    let agrees = [Party::User, Party::Gateway, Party::Sensor]
        .into_iter()
        .all(|p| measured.role(p) == OURS.role(p));
    let mut text = table.to_text();
    text.push_str(&format!(
        "measured handshake counts match the ours row: {}\n",
        if agrees { "yes" } else { "no" }
    ));
    let mut value = table.to_json();
    value["measured_matches"] = json!(agrees);
    emit(o, &text, &value);
    if agrees {
        Ok(())
    } else {
        Err(Fail::Diverged)
    }
}

fn list_cmd(o: &Opts) -> Res {
    let mut text = String::from("attacks:\n");
    for s in ATTACKS {
        text.push_str(&format!("  {:<26} {} (expected {})\n", s.name, s.claim, s.expected));
    }
    text.push_str("compromise checks:\n");
    for s in COMPROMISE_CHECKS {
        text.push_str(&format!("  {:<26} {} (expected {})\n", s.name, s.claim, s.expected));
    }
    text.push_str("symbolic:\n");
    for s in SCENARIOS {
        text.push_str(&format!("  {:<26} {}\n", s.name, s.claim));
    }
    let value = json!({
        "attacks": ATTACKS,
        "compromise": COMPROMISE_CHECKS,
        "symbolic": SCENARIOS,
    });
    emit(o, &text, &value);
    Ok(())
}
