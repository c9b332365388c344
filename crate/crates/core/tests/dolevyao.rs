use std::collections::BTreeSet;

use proptest::prelude::*;
use wsn_ake::dolevyao::{
    derivable, normalize, run_secrecy_scenario, saturate, verify_tree, AtomKind, DyError, KnowledgeSet, Limits, Term,
    SCENARIOS,
};
use wsn_ake::simnet::{run_compromise, SimConfig, Verdict as SimVerdict};

#[test]
fn normalization_examples() {
    let a = Term::fresh("a");
    let b = Term::fresh("b");
    let g = Term::public("G");
    assert_eq!(normalize(&Term::Xor(vec![a.clone(), a.clone()])), Term::zero());
    let nested = Term::Smul {
        scalars: vec![a.clone()],
        base: Box::new(Term::Smul {
            scalars: vec![b.clone()],
            base: Box::new(g.clone()),
        }),
    };
    assert_eq!(
        normalize(&nested),
        Term::Smul {
            scalars: vec![a.clone(), b.clone()],
            base: Box::new(g)
        }
    );
    assert_eq!(normalize(&Term::Xor(vec![a.clone()])), a);
    let t = Term::Tuple(vec![a.clone(), Term::Tuple(vec![b.clone(), a.clone()])]);
    assert_eq!(normalize(&t), Term::Tuple(vec![a.clone(), b, a]));
}

#[test]
fn symbolic_verdicts() {
    let pfs = run_secrecy_scenario("pfs").unwrap();
    assert!(!pfs.target("SK").unwrap().derivable);
    let insider = run_secrecy_scenario("insider").unwrap();
    assert!(!insider.target("AS").unwrap().derivable);
    let card = run_secrecy_scenario("stolen-card").unwrap();
    assert!(!card.target("SK").unwrap().derivable && !card.target("B").unwrap().derivable);
    let mitm = run_secrecy_scenario("outsider-mitm").unwrap();
    assert_eq!(mitm.targets.len(), 5);
    assert!(mitm.targets.iter().all(|t| !t.derivable));
    for r in [&pfs, &insider, &card, &mitm] {
        assert!(r.matches_expected(), "{}", r.to_text());
    }
}

#[test]
fn s_and_z_gives_sk_with_checked_tree() {
    let r = run_secrecy_scenario("s-and-z-compromise").unwrap();
    let sk = r.target("SK").unwrap();
    assert!(sk.derivable);
    assert_eq!(sk.tree_verified, Some(true));
    let text = r.to_text();
    assert!(text.contains("[decrypt]") && text.contains("[xor]"), "{text}");
    assert!(r.matches_expected());
}

#[test]
fn pfs_recovers_e4_but_not_sk() {
    // S exposes the blinded session value but not the sensor half of SK.
    let r = run_secrecy_scenario("pfs").unwrap();
    assert!(r.log.iter().any(|e| e.term == "e4"));
    assert!(r.log.iter().any(|e| e.term == "AS"));
    assert!(!r.log.iter().any(|e| e.term == "cdG" || e.term == "SK"));
}

#[test]
fn stolen_verifier_divergence_agrees_with_simulation() {
    let sym = run_secrecy_scenario("stolen-verifier").unwrap();
    assert!(sym.target("M1").unwrap().derivable);
    assert!(sym.target("SK").unwrap().derivable);
    assert!(sym.targets.iter().all(|t| t.tree_verified == Some(true)));
    assert!(sym.divergence.is_some());
    let conc = run_compromise("stolen-verifier", &SimConfig::default()).unwrap();
    assert_eq!(conc.verdict, SimVerdict::Succeeded);

    let sym = run_secrecy_scenario("s-and-z-compromise").unwrap();
    let conc = run_compromise("s-and-z-compromise", &SimConfig::default()).unwrap();
    assert!(sym.target("SK").unwrap().derivable);
    assert_eq!(conc.verdict, SimVerdict::Succeeded);
}

#[test]
fn log_is_recheckable() {
    for info in SCENARIOS {
        let r = run_secrecy_scenario(info.name).unwrap();
        assert!(!r.log.is_empty());
        assert!(r.log.iter().all(|e| (e.rule == "initial") == (e.round == 0)));
        let json = r.to_json();
        assert_eq!(json["limits"]["max_rounds"], 6);
        assert!(json["claim"].is_string());
    }
}

#[test]
fn unknown_scenario() {
    let err = run_secrecy_scenario("nope").unwrap_err();
    let DyError::UnknownScenario { catalog, .. } = &err;
    assert!(catalog.contains(&"pfs"));
    assert!(err.to_string().contains("outsider-mitm"));
}

#[test]
fn fresh_atoms_are_not_invented() {
    let r = run_secrecy_scenario("outsider-mitm").unwrap();
    for fresh in ["a", "b", "c", "d"] {
        assert!(!r.log.iter().any(|e| e.term == fresh), "{fresh} appeared");
    }
}

fn atom() -> impl Strategy<Value = Term> {
    (0..6usize, 0..4usize).prop_map(|(i, k)| {
        let kind = [
            AtomKind::FreshSecret,
            AtomKind::LongTermSecret,
            AtomKind::Public,
            AtomKind::Timestamp,
        ][k];
        Term::atom(["a", "b", "c", "d", "e", "G"][i], kind)
    })
}

fn raw_term() -> impl Strategy<Value = Term> {
    atom().prop_recursive(3, 16, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..3).prop_map(Term::Hash),
            prop::collection::vec(inner.clone(), 0..4).prop_map(Term::Xor),
            (prop::collection::vec(inner.clone(), 0..3), inner.clone()).prop_map(|(s, b)| Term::Smul {
                scalars: s,
                base: Box::new(b)
            }),
            (inner.clone(), inner.clone()).prop_map(|(k, m)| Term::Senc {
                key: Box::new(k),
                payload: Box::new(m)
            }),
            prop::collection::vec(inner, 0..3).prop_map(Term::Tuple),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalize_is_idempotent(t in raw_term()) {
        let n = normalize(&t);
        prop_assert_eq!(normalize(&n), n);
    }

    #[test]
    fn xor_group_laws(x in raw_term(), y in raw_term(), z in raw_term()) {
        let assoc_l = Term::xor([Term::xor([x.clone(), y.clone()]), z.clone()]);
        let assoc_r = Term::xor([x.clone(), Term::xor([y.clone(), z])]);
        prop_assert_eq!(assoc_l, assoc_r);
        prop_assert_eq!(Term::xor([x.clone(), y.clone()]), Term::xor([y.clone(), x.clone()]));
        prop_assert_eq!(Term::xor([x.clone(), x.clone()]), Term::zero());
        prop_assert_eq!(Term::xor([x.clone(), Term::zero()]), normalize(&x));
    }

    #[test]
    fn saturation_is_sound_monotone_idempotent(
        small in prop::collection::vec(raw_term(), 0..4),
        more in prop::collection::vec(raw_term(), 0..3),
    ) {
        let limits = Limits::default();
        let k = KnowledgeSet::new(small.clone());
        let s = saturate(&k, &limits);
        let initial = k.initial();
        for t in s.terms() {
            verify_tree(&s.tree(t).unwrap(), &initial).unwrap();
        }
        let big = saturate(&KnowledgeSet::new(small.into_iter().chain(more)), &limits);
        prop_assert!(s.term_set().is_subset(&big.term_set()));
        if !s.bounded() {
            let again = saturate(&s, &limits);
            prop_assert_eq!(again.term_set(), s.term_set());
        }
    }

    #[test]
    fn no_rule_invents_fresh_atoms(ts in prop::collection::vec(raw_term(), 0..4)) {
        let k = KnowledgeSet::new(ts);
        let mut seen = BTreeSet::new();
        for t in k.terms() {
            let mut stack = vec![t];
            while let Some(u) = stack.pop() {
                if matches!(u, Term::Atom { .. }) { seen.insert(u.clone()); }
                stack.extend(u.children());
            }
        }
        let s = saturate(&k, &Limits::default());
        for t in s.terms() {
            if let Term::Atom { .. } = t {
                prop_assert!(seen.contains(t));
            }
        }
    }
}

#[test]
fn derivable_reports_bounded_no() {
    let k = KnowledgeSet::new([
        Term::fresh("a"),
        Term::secret("s"),
        Term::smul([Term::fresh("b")], Term::public("G")),
    ]);
    let (v, closure) = derivable(&k, &Term::secret("zz"), &Limits::new(1, 8).unwrap());
    assert!(!v.is_derivable());
    assert!(closure.bounded());
}
