use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Serialize, Serializer};

use super::term::{normalize, Term};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Limits {
    pub max_rounds: usize,
    pub max_size: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_rounds: 6,
            max_size: 8,
        }
    }
}

impl Limits {
    pub fn new(max_rounds: usize, max_size: usize) -> Result<Self, String> {
        if max_rounds == 0 || max_size == 0 {
            return Err("limits must be positive".into());
        }
        Ok(Limits { max_rounds, max_size })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Initial,
    Project,
    Decrypt,
    Tuple,
    Hash,
    Encrypt,
    Xor,
    Smul,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::Initial => "initial",
            Rule::Project => "project",
            Rule::Decrypt => "decrypt",
            Rule::Tuple => "tuple",
            Rule::Hash => "hash",
            Rule::Encrypt => "encrypt",
            Rule::Xor => "xor",
            Rule::Smul => "smul",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub rule: Rule,
    pub premises: Vec<Term>,
    pub round: usize,
}

/// Adversary knowledge with the first derivation found for each term.
///
/// `goals` only widen the universe of terms the construction rules may
/// build; they are not known.
#[derive(Clone, Debug, Default)]
pub struct KnowledgeSet {
    log: BTreeMap<Term, Step>,
    goals: BTreeSet<Term>,
    bounded: bool,
    rounds: usize,
}

impl KnowledgeSet {
    pub fn new(initial: impl IntoIterator<Item = Term>) -> Self {
        let mut k = KnowledgeSet::default();
        for t in initial {
            k.log.entry(normalize(&t)).or_insert(Step {
                rule: Rule::Initial,
                premises: Vec::new(),
                round: 0,
            });
        }
        k
    }

    pub fn with_goal(mut self, goal: &Term) -> Self {
        self.goals.insert(normalize(goal));
        self
    }

    pub fn contains(&self, t: &Term) -> bool {
        self.log.contains_key(t)
    }

    pub fn len(&self) -> usize {
        self.log.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.log.keys()
    }

    pub fn term_set(&self) -> BTreeSet<Term> {
        self.log.keys().cloned().collect()
    }

    pub fn initial(&self) -> BTreeSet<Term> {
        self.log
            .iter()
            .filter(|(_, s)| s.rule == Rule::Initial)
            .map(|(t, _)| t.clone())
            .collect()
    }

    pub fn step(&self, t: &Term) -> Option<&Step> {
        self.log.get(t)
    }

    pub fn log(&self) -> impl Iterator<Item = (&Term, &Step)> {
        self.log.iter()
    }

    /// True when the last saturation stopped at the round limit while
    /// rules still applied.
    pub fn bounded(&self) -> bool {
        self.bounded
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// Derivation tree for a known term, built from the log.
    pub fn tree(&self, t: &Term) -> Option<Derivation> {
        let step = self.log.get(t)?;
        let premises = step.premises.iter().map(|p| self.tree(p)).collect::<Option<Vec<_>>>()?;
        Some(Derivation {
            term: t.clone(),
            rule: step.rule,
            premises,
        })
    }
}

/// Subterm closure of `terms`.
fn universe<'a>(terms: impl Iterator<Item = &'a Term>) -> BTreeSet<Term> {
    let mut out = BTreeSet::new();
    let mut stack: Vec<&Term> = terms.collect();
    while let Some(t) = stack.pop() {
        if out.insert(t.clone()) {
            stack.extend(t.children());
        }
    }
    out
}

/// One Jacobi round: every rule reads only the knowledge at round start,
/// which keeps saturation monotone in the initial set.
fn round(k: &KnowledgeSet, limits: &Limits) -> BTreeMap<Term, (Rule, Vec<Term>)> {
    let uni = universe(k.log.keys().chain(k.goals.iter()));
    let mut new: BTreeMap<Term, (Rule, Vec<Term>)> = BTreeMap::new();
    let mut add = |t: Term, rule: Rule, premises: Vec<Term>| {
        if !t.is_zero() && !k.contains(&t) {
            new.entry(t).or_insert((rule, premises));
        }
    };

    for t in k.log.keys() {
        match t {
            Term::Tuple(items) => {
                for item in items {
                    add(item.clone(), Rule::Project, vec![t.clone()]);
                }
            }
            Term::Senc { key, payload } if k.contains(key) => {
                add((**payload).clone(), Rule::Decrypt, vec![t.clone(), (**key).clone()]);
            }
            _ => {}
        }
    }

    // Constructors only build terms of the universe.
    for u in uni.iter().filter(|u| !k.contains(u)) {
        match u {
            Term::Hash(args) if args.iter().all(|a| k.contains(a)) => add(u.clone(), Rule::Hash, args.clone()),
            Term::Tuple(items) if items.iter().all(|a| k.contains(a)) => add(u.clone(), Rule::Tuple, items.clone()),
            Term::Senc { key, payload } if k.contains(key) && k.contains(payload) => {
                add(u.clone(), Rule::Encrypt, vec![(**key).clone(), (**payload).clone()])
            }
            _ => {}
        }
    }

    // Xor: pairwise combination, kept only when its components all sit
    // inside one xor of the universe.
    let xor_sets: Vec<BTreeSet<&Term>> = uni
        .iter()
        .filter_map(|u| match u {
            Term::Xor(v) if !v.is_empty() => Some(v.iter().collect()),
            _ => None,
        })
        .collect();
    let local = |t: &Term| {
        let comps = t.xor_components();
        xor_sets.iter().any(|s| comps.iter().all(|c| s.contains(c)))
    };
    let cands: Vec<&Term> = k.log.keys().filter(|t| local(t)).collect();
    for (i, x) in cands.iter().enumerate() {
        for y in &cands[i + 1..] {
            let r = normalize(&Term::Xor(vec![(*x).clone(), (*y).clone()]));
            if local(&r) && (r.size() <= limits.max_size || uni.contains(&r)) {
                add(r, Rule::Xor, vec![(*x).clone(), (*y).clone()]);
            }
        }
    }

    // DH: a known secret atom times a known point, no repeated scalar.
    let bases: BTreeSet<&Term> = uni
        .iter()
        .filter_map(|u| match u {
            Term::Smul { base, .. } => Some(base.as_ref()),
            _ => None,
        })
        .collect();
    let scalars: Vec<&Term> = k
        .log
        .keys()
        .filter(|t| t.atom_kind().is_some_and(|kind| kind.is_secret()))
        .collect();
    let points: Vec<&Term> = k
        .log
        .keys()
        .filter(|t| matches!(t, Term::Smul { .. }) || bases.contains(t))
        .collect();
    for s in &scalars {
        for p in &points {
            if let Term::Smul { scalars: have, .. } = p {
                if have.contains(s) {
                    continue;
                }
            }
            let r = normalize(&Term::Smul {
                scalars: vec![(*s).clone()],
                base: Box::new((*p).clone()),
            });
            if r.size() <= limits.max_size || uni.contains(&r) {
                add(r, Rule::Smul, vec![(*s).clone(), (*p).clone()]);
            }
        }
    }
    new
}

/// Closure of `k` under the derivation rules, up to `limits`.
pub fn saturate(k: &KnowledgeSet, limits: &Limits) -> KnowledgeSet {
    let mut k = k.clone();
    k.bounded = false;
    let mut rounds = 0;
    loop {
        let new = round(&k, limits);
        if new.is_empty() {
            break;
        }
        if rounds == limits.max_rounds {
            k.bounded = true;
            break;
        }
        rounds += 1;
        for (t, (rule, premises)) in new {
            k.log.insert(
                t,
                Step {
                    rule,
                    premises,
                    round: rounds,
                },
            );
        }
    }
    k.rounds = rounds;
    k
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Derivable(Derivation),
    NotDerivable { bounded: bool },
}

impl Verdict {
    pub fn is_derivable(&self) -> bool {
        matches!(self, Verdict::Derivable(_))
    }
}

/// Saturates with `target` in the universe and tests membership.
pub fn derivable(k: &KnowledgeSet, target: &Term, limits: &Limits) -> (Verdict, KnowledgeSet) {
    let target = normalize(target);
    let closure = saturate(&k.clone().with_goal(&target), limits);
    let verdict = match closure.tree(&target) {
        Some(tree) => Verdict::Derivable(tree),
        None => Verdict::NotDerivable {
            bounded: closure.bounded(),
        },
    };
    (verdict, closure)
}

fn term_string<S: Serializer>(t: &Term, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(t)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Derivation {
    #[serde(serialize_with = "term_string")]
    pub term: Term,
    pub rule: Rule,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub premises: Vec<Derivation>,
}

impl Derivation {
    pub fn depth(&self) -> usize {
        1 + self.premises.iter().map(Derivation::depth).max().unwrap_or(0)
    }

    pub fn leaves(&self) -> Vec<&Term> {
        if self.premises.is_empty() {
            return vec![&self.term];
        }
        self.premises.iter().flat_map(Derivation::leaves).collect()
    }

    pub fn render(&self, aliases: &dyn Fn(&Term) -> Option<String>) -> String {
        let mut out = String::new();
        self.render_into(aliases, 0, &mut out);
        out
    }

    fn render_into(&self, aliases: &dyn Fn(&Term) -> Option<String>, depth: usize, out: &mut String) {
        out.push_str(&"  ".repeat(depth));
        out.push_str(&format!("{} [{}]\n", self.term.render(aliases), self.rule));
        for p in &self.premises {
            p.render_into(aliases, depth + 1, out);
        }
    }
}

/// Re-checks a derivation tree against `initial` without consulting any log.
pub fn verify_tree(tree: &Derivation, initial: &BTreeSet<Term>) -> Result<(), String> {
    let fail = |why: &str| Err(format!("{} at {}: {why}", tree.rule, tree.term));
    if tree.term != normalize(&tree.term) {
        return fail("term not normalized");
    }
    for p in &tree.premises {
        verify_tree(p, initial)?;
    }
    let ps: Vec<&Term> = tree.premises.iter().map(|p| &p.term).collect();
    let ok = match (tree.rule, ps.as_slice()) {
        (Rule::Initial, []) => initial.contains(&tree.term),
        (Rule::Project, [Term::Tuple(items)]) => items.contains(&tree.term),
        (Rule::Decrypt, [Term::Senc { key, payload }, k]) => key.as_ref() == *k && payload.as_ref() == &tree.term,
        (Rule::Tuple, items) => tree.term == normalize(&Term::Tuple(items.iter().map(|t| (*t).clone()).collect())),
        (Rule::Hash, args) => tree.term == Term::Hash(args.iter().map(|t| (*t).clone()).collect()),
        (Rule::Encrypt, [k, m]) => {
            tree.term
                == Term::Senc {
                    key: Box::new((*k).clone()),
                    payload: Box::new((*m).clone()),
                }
        }
        (Rule::Xor, [x, y]) => tree.term == normalize(&Term::Xor(vec![(*x).clone(), (*y).clone()])),
        (Rule::Smul, [s, p]) => {
            s.atom_kind().is_some_and(|kind| kind.is_secret())
                && tree.term
                    == normalize(&Term::Smul {
                        scalars: vec![(*s).clone()],
                        base: Box::new((*p).clone()),
                    })
        }
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        fail("premises do not yield the term")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g() -> Term {
        Term::public("G")
    }

    #[test]
    fn dh_rule() {
        let a = Term::fresh("a");
        let bg = Term::smul([Term::fresh("b")], g());
        let k = saturate(&KnowledgeSet::new([a.clone(), bg]), &Limits::default());
        let abg = Term::smul([a, Term::fresh("b")], g());
        assert!(k.contains(&abg));
        verify_tree(&k.tree(&abg).unwrap(), &k.initial()).unwrap();
    }

    #[test]
    fn decryption_rule() {
        let key = Term::fresh("k");
        let m = Term::secret("m");
        let k = saturate(
            &KnowledgeSet::new([Term::senc(key.clone(), m.clone()), key]),
            &Limits::default(),
        );
        assert!(k.contains(&m));
        assert!(!k.bounded());
    }

    #[test]
    fn xor_recovery() {
        let x = Term::secret("x");
        let y = Term::fresh("y");
        let k = saturate(
            &KnowledgeSet::new([Term::xor([x.clone(), y.clone()]), y]),
            &Limits::default(),
        );
        assert!(k.contains(&x));
    }

    #[test]
    fn senc_is_opaque_without_key() {
        let m = Term::secret("m");
        let k = saturate(
            &KnowledgeSet::new([Term::senc(Term::fresh("k"), m.clone())]),
            &Limits::default(),
        );
        assert!(!k.contains(&m));
        assert_eq!(k.len(), 1);
    }

    #[test]
    fn forged_trees_are_rejected() {
        let x = Term::secret("x");
        let tree = Derivation {
            term: x.clone(),
            rule: Rule::Initial,
            premises: Vec::new(),
        };
        assert!(verify_tree(&tree, &BTreeSet::new()).is_err());
        let bogus = Derivation {
            term: x,
            rule: Rule::Hash,
            premises: Vec::new(),
        };
        assert!(verify_tree(&bogus, &BTreeSet::new()).is_err());
    }

    #[test]
    fn round_limit_is_flagged() {
        let a = Term::fresh("a");
        let pts = Term::smul([Term::fresh("b")], g());
        let k = saturate(
            &KnowledgeSet::new([a, Term::secret("s"), Term::fresh("t"), pts]),
            &Limits::new(1, 8).unwrap(),
        );
        assert!(k.bounded());
        assert_eq!(k.rounds(), 1);
    }
}
