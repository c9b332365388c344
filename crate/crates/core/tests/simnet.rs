use wsn_ake::costmodel::{measure_counts, total_cost, Accounting, OpCounts, UnitCosts};
use wsn_ake::primitives::CryptoSuite;
use wsn_ake::protocol::{Env, Message, ProtocolConfig, Timestamp};
use wsn_ake::simnet::{
    dos_probe, dos_probe_sensor, run_attack, run_compromise, run_session, Action, AdversaryScript, Party, PartyResult,
    Sim, SimConfig, SimError, Verdict, ATTACKS, DEFAULT_SID,
};

fn toy(seed: u64) -> SimConfig {
    SimConfig::default().with_seed(seed)
}

#[test]
fn honest_run_is_deterministic_and_agrees() {
    let a = run_session(&toy(7));
    let b = run_session(&toy(7));
    assert_eq!(a, b);
    assert_eq!(
        serde_json::to_string(&a.to_json()).unwrap(),
        serde_json::to_string(&b.to_json()).unwrap()
    );
    a.check_honest().unwrap();
    assert!(a.codec_consistent(&CryptoSuite::toy()));
}

#[test]
fn different_seeds_give_disjoint_ephemerals() {
    let a = run_session(&toy(1));
    let b = run_session(&toy(2).with_suite(CryptoSuite::toy()));
    let field = |t: &wsn_ake::simnet::Transcript, ev: usize, name: &str| {
        t.events[ev]
            .view
            .as_ref()
            .unwrap()
            .fields
            .iter()
            .find(|f| f.name == name)
            .unwrap()
            .value
            .clone()
    };
    let s1 = run_session(&SimConfig::default().with_seed(1).with_suite(CryptoSuite::standard()));
    let s2 = run_session(&SimConfig::default().with_seed(2).with_suite(CryptoSuite::standard()));
    for (ev, name) in [(0, "e1"), (1, "e5"), (2, "e6")] {
        assert_ne!(field(&s1, ev, name), field(&s2, ev, name));
    }
    assert_ne!(a.agreed_key(), b.agreed_key());
}

#[test]
fn skew_beyond_window_is_a_freshness_rejection() {
    let mut config = toy(3);
    config.skew = [-5_000, 0, 0];
    let t = run_session(&config);
    let r = t.first_rejection().unwrap();
    assert_eq!(r.party, Party::Gateway);
    assert!(matches!(r.result, PartyResult::Rejected { code: "freshness", .. }));
}

#[test]
fn passive_script_equals_run_session() {
    let config = toy(11);
    let mut sim = Sim::new(&config).with_script(AdversaryScript::passive().on(2, Action::Pass));
    sim.start_handshake(DEFAULT_SID);
    sim.run();
    assert_eq!(sim.transcript(), run_session(&config));
}

#[test]
fn honest_counts_match_cost_row() {
    for suite in [CryptoSuite::toy(), CryptoSuite::standard()] {
        let t = run_session(&SimConfig::default().with_suite(suite));
        let p = measure_counts(&t, Accounting::Protocol).unwrap();
        assert_eq!(p.user, OpCounts::new(3, 2, 2));
        assert_eq!(p.gateway, OpCounts::new(4, 3, 2));
        assert_eq!(p.sensor, OpCounts::new(3, 2, 0));
        assert_eq!(
            total_cost(&p, &UnitCosts::reference()).normalize().to_string(),
            "0.1453"
        );
        let with = measure_counts(&t, Accounting::WithDerivation).unwrap();
        assert!(with.total().hash > p.total().hash);
    }
}

#[test]
fn counts_refuse_adversarial_transcripts() {
    let mut sim = Sim::new(&toy(0)).with_script(AdversaryScript::passive().on(3, Action::Drop));
    sim.start_handshake(DEFAULT_SID);
    sim.run();
    assert!(measure_counts(&sim.transcript(), Accounting::Protocol).is_err());
}

#[test]
fn catalog_is_prevented_by_default() {
    for info in ATTACKS {
        let out = run_attack(info.name, &toy(5)).unwrap();
        assert_eq!(out.verdict, Verdict::Prevented, "{}: {:?}", info.name, out.notes);
        assert!(out.divergence.is_none());
    }
}

#[test]
fn fast_replay_without_cache_is_reported_as_divergence() {
    let out = run_attack("replay-m1-fast", &toy(5).with_replay_cache(false)).unwrap();
    assert_eq!(out.verdict, Verdict::Succeeded);
    assert!(out.divergence.as_deref().unwrap().contains("replay resistance"));
    let on = run_attack("replay-m1-fast", &toy(5)).unwrap();
    assert!(on.reason.unwrap().contains("replay"));
}

#[test]
fn late_replay_fails_freshness() {
    let out = run_attack("replay-m1-late", &toy(5)).unwrap();
    assert!(out.reason.unwrap().starts_with("gateway: freshness"));
}

#[test]
fn dos_costs() {
    let m1 = run_attack("dos-garbage-m1", &toy(6)).unwrap();
    assert_eq!(m1.cost.gateway, OpCounts::new(0, 1, 1));
    assert_eq!(m1.cost.sensor, OpCounts::default());
    let m2 = run_attack("dos-garbage-m2", &toy(6)).unwrap();
    assert_eq!(m2.cost.sensor, OpCounts::new(1, 0, 0));
}

#[test]
fn probes_report_parse_first_costs() {
    let sim = Sim::new(&toy(1));
    let env = Env::new(CryptoSuite::toy(), ProtocolConfig::default());
    let mut gw = sim.gateway().clone();
    let junk = dos_probe(&env, &mut gw, &[0xde, 0xad, 0xbe, 0xef], Timestamp(0));
    assert_eq!(junk.cost, OpCounts::default());
    assert_eq!(junk.rejection.as_deref(), Some("malformed"));
    let honest = run_session(&toy(1));
    let m2 = Message::decode(&env.suite, &honest.events[1].wire).unwrap();
    let Message::M2(mut m2) = m2 else { unreachable!() };
    m2.sp2 = m2.sp2 ^ wsn_ake::primitives::Digest::new([1; 32]);
    let probe = dos_probe_sensor(&env, sim.sensor(), &Message::M2(m2).encode(&env.suite), Timestamp(0));
    assert_eq!(probe.cost, OpCounts::new(1, 0, 0));
    assert_eq!(probe.rejection.as_deref(), Some("gateway-auth"));
    // Cheaper than an honest leg at the same party.
    assert!(probe.cost.ecc < 2 && junk.cost.ecc < 3);
}

#[test]
fn compromise_checks() {
    let sv = run_compromise("stolen-verifier", &toy(4)).unwrap();
    assert_eq!(sv.verdict, Verdict::Succeeded);
    assert!(sv.divergence.is_some());
    let sz = run_compromise("s-and-z-compromise", &toy(4)).unwrap();
    assert_eq!(sz.verdict, Verdict::Succeeded);
    assert!(sz.divergence.is_none());
}

#[test]
fn unknown_scenario_lists_catalog() {
    let err = run_attack("nope", &toy(0)).unwrap_err();
    assert!(matches!(err, SimError::UnknownScenario { .. }));
    assert!(err.to_string().contains("replay-m1-late"));
}

#[test]
fn attacks_are_deterministic() {
    for name in ["replay-m1-fast", "insider-intercept-sp1", "stolen-card-no-password"] {
        let a = serde_json::to_string(&run_attack(name, &toy(9)).unwrap()).unwrap();
        let b = serde_json::to_string(&run_attack(name, &toy(9)).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn tamper_covers_every_leg() {
    let out = run_attack("tamper-any-bit", &toy(2)).unwrap();
    let n: usize = out.notes[0].split_whitespace().next().unwrap().parse().unwrap();
    let honest = run_session(&toy(2));
    let expected: usize = honest
        .events
        .iter()
        .map(|e| {
            wsn_ake::protocol::messages::field_spans(&e.wire)
                .iter()
                .map(|(a, b)| (b - a) * 8)
                .sum::<usize>()
        })
        .sum();
    assert_eq!(n, expected);
    assert!(n > 0);
    assert_eq!(out.verdict, Verdict::Prevented);
}
