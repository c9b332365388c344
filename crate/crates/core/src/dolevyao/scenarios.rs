use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

use super::knowledge::{derivable, verify_tree, Derivation, KnowledgeSet, Limits, Verdict};
use super::term::Term;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DyError {
    #[error("unknown symbolic scenario {name:?}; known: {}", catalog.join(", "))]
    UnknownScenario { name: String, catalog: Vec<&'static str> },
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SecrecyInfo {
    pub name: &'static str,
    /// The security property claimed for the protocol, as `property: Y`.
    pub claim: &'static str,
    pub summary: &'static str,
}

pub const SCENARIOS: &[SecrecyInfo] = &[
    SecrecyInfo {
        name: "pfs",
        claim: "Perfect forward secrecy: Y",
        summary: "transcript plus the gateway secret S and SID; SK must stay hidden",
    },
    SecrecyInfo {
        name: "insider",
        claim: "Resist privileged insider attack: Y",
        summary: "a registered user's own session values and card; the sensor key AS must stay hidden",
    },
    SecrecyInfo {
        name: "stolen-card",
        claim: "Resist stolen smartcard attack: Y",
        summary: "transcript plus the card contents C, D, z, q; SK and B must stay hidden",
    },
    SecrecyInfo {
        name: "stolen-verifier",
        claim: "Resist stolen verification attack: Y",
        summary: "stored verifier values B, z, SID; an acceptable M1 and the resulting SK",
    },
    SecrecyInfo {
        name: "outsider-mitm",
        claim: "Resist man in the middle attack: Y",
        summary: "transcript only; none of SK, B, AS, z, S",
    },
    SecrecyInfo {
        name: "s-and-z-compromise",
        claim: "(none; sanity check of the derivation engine)",
        summary: "transcript plus S and z; SK is derivable",
    },
];

/// Named terms of one handshake. `a` is the initiator's ephemeral scalar.
struct Handshake {
    names: Vec<(&'static str, Term)>,
}

impl Handshake {
    fn build(a: Term, t1: Term) -> Self {
        let g = Term::public("G");
        let s = Term::secret("S");
        let z = Term::secret("z");
        let sid = Term::public("SID");
        let id = Term::public("ID");
        let q = Term::secret("q");
        let uap = Term::hash([Term::secret("PW"), Term::secret("BMP"), q.clone()]);
        let b = Term::hash([id.clone(), uap.clone(), z.clone()]);
        let c_card = Term::hash([id.clone(), s.clone()]);
        let d_card = Term::hash([c_card.clone(), b.clone(), z.clone()]);
        let x = Term::smul([s.clone()], g.clone());
        let e1 = Term::smul([a.clone()], g.clone());
        let e2 = Term::smul([a.clone(), s.clone()], g.clone());
        let as_ = Term::hash([sid.clone(), s.clone()]);
        let e3 = Term::senc(e2.clone(), Term::tuple([b.clone(), sid.clone(), t1.clone()]));
        let e4 = Term::xor([Term::fresh("b"), e2.clone()]);
        let sp1 = Term::xor([e4.clone(), as_.clone()]);
        let t2 = Term::timestamp("T2");
        let sp2 = Term::hash([e4.clone(), sid.clone(), t2.clone()]);
        let c = Term::fresh("c");
        let d = Term::fresh("d");
        let e5 = Term::smul([c.clone()], g.clone());
        let e6 = Term::smul([d.clone()], g.clone());
        let cdg = Term::smul([c, d], g.clone());
        let sk = Term::hash([e4.clone(), cdg.clone()]);
        let t3 = Term::timestamp("T3");
        let gp = Term::hash([sk.clone(), as_.clone(), t3.clone()]);
        let sku = Term::xor([sk.clone(), z.clone()]);
        let t4 = Term::timestamp("T4");
        let e7 = Term::senc(e2.clone(), Term::tuple([b.clone(), sku.clone(), t4]));
        let m1 = Term::tuple([e1.clone(), e3.clone()]);
        Handshake {
            names: vec![
                ("G", g),
                ("X", x),
                ("S", s),
                ("z", z),
                ("q", q),
                ("SID", sid),
                ("ID", id),
                ("UAP", uap),
                ("B", b),
                ("C", c_card),
                ("D", d_card),
                ("AS", as_),
                ("a", a),
                ("T1", t1),
                ("e1", e1),
                ("e2", e2),
                ("e3", e3),
                ("e4", e4),
                ("SP1", sp1),
                ("SP2", sp2),
                ("T2", t2),
                ("e5", e5),
                ("e6", e6),
                ("cdG", cdg),
                ("SK", sk),
                ("GP", gp),
                ("T3", t3),
                ("SKU", sku),
                ("e7", e7),
                ("M1", m1),
            ],
        }
    }

    fn get(&self, name: &str) -> Term {
        self.names
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t.clone())
            .unwrap_or_else(|| panic!("no term named {name}"))
    }

    fn pick(&self, names: &[&'static str]) -> Vec<(&'static str, Term)> {
        names.iter().map(|n| (*n, self.get(n))).collect()
    }
}

const TRANSCRIPT: &[&str] = &["e1", "e3", "SP1", "SP2", "T2", "e5", "e6", "GP", "T3", "e7"];
const PUBLIC: &[&str] = &["G", "X", "ID"];

struct Setup {
    knowledge: Vec<(&'static str, Term)>,
    targets: Vec<(&'static str, Term, bool)>,
    aliases: BTreeMap<Term, &'static str>,
}

fn setup(name: &str) -> Option<Setup> {
    let honest = Handshake::build(Term::fresh("a"), Term::timestamp("T1"));
    let mut h = &honest;
    let forged;
    let (extra, targets): (Vec<&'static str>, Vec<(&'static str, bool)>) = match name {
        "pfs" => (vec!["S", "SID"], vec![("SK", false)]),
        "insider" => (vec!["a", "e2", "C", "D", "z", "q"], vec![("AS", false)]),
        "stolen-card" => (vec!["C", "D", "z", "q"], vec![("SK", false), ("B", false)]),
        "outsider-mitm" => (
            vec![],
            vec![("SK", false), ("B", false), ("AS", false), ("z", false), ("S", false)],
        ),
        "s-and-z-compromise" => (vec!["S", "z"], vec![("SK", true)]),
        "stolen-verifier" => {
            // The attacker runs the session with its own ephemeral and
            // timestamp, then sees the honest replies.
            forged = Handshake::build(Term::fresh("x"), Term::timestamp("Tx"));
            h = &forged;
            (vec!["B", "z", "SID", "a", "T1"], vec![("M1", false), ("SK", false)])
        }
        _ => return None,
    };
    let mut names: Vec<&'static str> = Vec::new();
    let base: &[&str] = if name == "stolen-verifier" {
        &TRANSCRIPT[2..]
    } else {
        TRANSCRIPT
    };
    for n in PUBLIC.iter().chain(base).copied().chain(extra) {
        if !names.contains(&n) {
            names.push(n);
        }
    }
    let knowledge = h.pick(&names);
    let targets = targets.into_iter().map(|(n, want)| (n, h.get(n), want)).collect();
    let mut aliases = BTreeMap::new();
    for (n, t) in &h.names {
        if !matches!(t, Term::Atom { .. }) {
            aliases.entry(t.clone()).or_insert(*n);
        }
    }
    Some(Setup {
        knowledge,
        targets,
        aliases,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TargetReport {
    pub target: String,
    pub term: String,
    pub expected_derivable: bool,
    pub derivable: bool,
    /// The closure hit the round limit; a negative answer is only
    /// "not derivable within limits".
    pub bounded: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tree: Option<Derivation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tree_verified: Option<bool>,
}

impl TargetReport {
    pub fn verdict_text(&self) -> &'static str {
        match (self.derivable, self.bounded) {
            (true, _) => "derivable",
            (false, true) => "not derivable within limits (round limit reached)",
            (false, false) => "not derivable within limits",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LogEntry {
    pub term: String,
    pub rule: String,
    pub premises: Vec<String>,
    pub round: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SecrecyReport {
    pub scenario: &'static str,
    pub claim: &'static str,
    pub limits: Limits,
    pub knowledge: Vec<String>,
    pub targets: Vec<TargetReport>,
    pub closure_size: usize,
    pub rounds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence: Option<String>,
    /// Every derivation step of the closure, re-checkable on its own.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub log: Vec<LogEntry>,
    #[serde(skip)]
    tree_text: Vec<Option<String>>,
}

impl SecrecyReport {
    pub fn matches_expected(&self) -> bool {
        self.divergence.is_none()
    }

    pub fn target(&self, name: &str) -> Option<&TargetReport> {
        self.targets.iter().find(|t| t.target == name)
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "scenario: {}\nclaim: {}\nlimits: {} rounds, term size {}\nknowledge: {}\n",
            self.scenario,
            self.claim,
            self.limits.max_rounds,
            self.limits.max_size,
            self.knowledge.join(", ")
        );
        out.push_str(&format!(
            "closure: {} terms after {} rounds\n",
            self.closure_size, self.rounds
        ));
        for (t, tree) in self.targets.iter().zip(&self.tree_text) {
            out.push_str(&format!(
                "target {}: {} (expected {})\n",
                t.target,
                t.verdict_text(),
                if t.expected_derivable {
                    "derivable"
                } else {
                    "not derivable"
                }
            ));
            if let Some(tree) = tree {
                for line in tree.lines() {
                    out.push_str("    ");
                    out.push_str(line);
                    out.push('\n');
                }
                out.push_str(&format!("    tree verified: {}\n", t.tree_verified == Some(true)));
            }
        }
        match &self.divergence {
            Some(d) => out.push_str(&format!("DIVERGENCE: {d}\n")),
            None => out.push_str("divergence: none\n"),
        }
        out
    }
}

pub fn run_secrecy_scenario(name: &str) -> Result<SecrecyReport, DyError> {
    run_secrecy_scenario_with(name, &Limits::default())
}

pub fn run_secrecy_scenario_with(name: &str, limits: &Limits) -> Result<SecrecyReport, DyError> {
    let info = SCENARIOS.iter().find(|s| s.name == name);
    let (Some(info), Some(setup)) = (info, setup(name)) else {
        return Err(DyError::UnknownScenario {
            name: name.to_string(),
            catalog: SCENARIOS.iter().map(|s| s.name).collect(),
        });
    };
    let aliases = |t: &Term| setup.aliases.get(t).map(|s| s.to_string());
    let k = KnowledgeSet::new(setup.knowledge.iter().map(|(_, t)| t.clone()));
    let initial = k.initial();
    let mut targets = Vec::new();
    let mut tree_text = Vec::new();
    let mut closure = k.clone();
    for (label, term, want) in &setup.targets {
        debug_assert!(!initial.contains(term), "{label} is given outright");
        let (verdict, c) = derivable(&k, term, limits);
        let (derivable, bounded, tree) = match verdict {
            Verdict::Derivable(tree) => (true, c.bounded(), Some(tree)),
            Verdict::NotDerivable { bounded } => (false, bounded, None),
        };
        let tree_verified = tree.as_ref().map(|t| verify_tree(t, &initial).is_ok());
        tree_text.push(tree.as_ref().map(|t| t.render(&aliases)));
        targets.push(TargetReport {
            target: label.to_string(),
            term: term.render(&|t| if t == term { None } else { aliases(t) }),
            expected_derivable: *want,
            derivable,
            bounded,
            tree,
            tree_verified,
        });
        if c.len() > closure.len() {
            closure = c;
        }
    }
    let wrong: Vec<String> = targets
        .iter()
        .filter(|t| t.derivable != t.expected_derivable)
        .map(|t| format!("{} is {}", t.target, t.verdict_text()))
        .collect();
    let divergence = (!wrong.is_empty()).then(|| format!("claim \"{}\" but {}", info.claim, wrong.join("; ")));
    let log = closure
        .log()
        .map(|(t, s)| LogEntry {
            term: t.render(&aliases),
            rule: s.rule.to_string(),
            premises: s.premises.iter().map(|p| p.render(&aliases)).collect(),
            round: s.round,
        })
        .collect();
    Ok(SecrecyReport {
        scenario: info.name,
        claim: info.claim,
        limits: *limits,
        knowledge: setup
            .knowledge
            .iter()
            .map(|(n, t)| match t {
                Term::Atom { name, .. } => name.clone(),
                _ => n.to_string(),
            })
            .collect(),
        targets,
        closure_size: closure.len(),
        rounds: closure.rounds(),
        divergence,
        log,
        tree_text,
    })
}
