use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AtomKind {
    FreshSecret,
    LongTermSecret,
    Public,
    Timestamp,
}

impl AtomKind {
    /// Secret atoms may act as scalars in the DH rule.
    pub fn is_secret(self) -> bool {
        matches!(self, AtomKind::FreshSecret | AtomKind::LongTermSecret)
    }
}

/// Symbolic message. Constructors below return normalized terms; the raw
/// variants are public so un-normalized terms can be built for testing.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Term {
    Atom {
        name: String,
        kind: AtomKind,
    },
    Hash(Vec<Term>),
    /// Multiset; the empty xor is the zero element.
    Xor(Vec<Term>),
    Smul {
        scalars: Vec<Term>,
        base: Box<Term>,
    },
    Senc {
        key: Box<Term>,
        payload: Box<Term>,
    },
    Tuple(Vec<Term>),
}

impl Term {
    pub fn atom(name: &str, kind: AtomKind) -> Term {
        Term::Atom {
            name: name.to_string(),
            kind,
        }
    }

    pub fn fresh(name: &str) -> Term {
        Term::atom(name, AtomKind::FreshSecret)
    }

    pub fn secret(name: &str) -> Term {
        Term::atom(name, AtomKind::LongTermSecret)
    }

    pub fn public(name: &str) -> Term {
        Term::atom(name, AtomKind::Public)
    }

    pub fn timestamp(name: &str) -> Term {
        Term::atom(name, AtomKind::Timestamp)
    }

    pub fn zero() -> Term {
        Term::Xor(Vec::new())
    }

    pub fn hash(args: impl IntoIterator<Item = Term>) -> Term {
        normalize(&Term::Hash(args.into_iter().collect()))
    }

    pub fn xor(items: impl IntoIterator<Item = Term>) -> Term {
        normalize(&Term::Xor(items.into_iter().collect()))
    }

    pub fn smul(scalars: impl IntoIterator<Item = Term>, base: Term) -> Term {
        normalize(&Term::Smul {
            scalars: scalars.into_iter().collect(),
            base: Box::new(base),
        })
    }

    pub fn senc(key: Term, payload: Term) -> Term {
        normalize(&Term::Senc {
            key: Box::new(key),
            payload: Box::new(payload),
        })
    }

    pub fn tuple(items: impl IntoIterator<Item = Term>) -> Term {
        normalize(&Term::Tuple(items.into_iter().collect()))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Term::Xor(v) if v.is_empty())
    }

    pub fn atom_kind(&self) -> Option<AtomKind> {
        match self {
            Term::Atom { kind, .. } => Some(*kind),
            _ => None,
        }
    }

    /// Number of atom occurrences.
    pub fn size(&self) -> usize {
        match self {
            Term::Atom { .. } => 1,
            Term::Hash(v) | Term::Tuple(v) => v.iter().map(Term::size).sum(),
            Term::Xor(v) => v.iter().map(Term::size).sum::<usize>().max(1),
            Term::Smul { scalars, base } => scalars.iter().map(Term::size).sum::<usize>() + base.size(),
            Term::Senc { key, payload } => key.size() + payload.size(),
        }
    }

    /// Immediate subterms.
    pub fn children(&self) -> Vec<&Term> {
        match self {
            Term::Atom { .. } => Vec::new(),
            Term::Hash(v) | Term::Tuple(v) | Term::Xor(v) => v.iter().collect(),
            Term::Smul { scalars, base } => scalars.iter().chain(std::iter::once(base.as_ref())).collect(),
            Term::Senc { key, payload } => vec![key.as_ref(), payload.as_ref()],
        }
    }

    /// Components under xor: the elements of an xor, otherwise the term itself.
    pub fn xor_components(&self) -> Vec<&Term> {
        match self {
            Term::Xor(v) => v.iter().collect(),
            t => vec![t],
        }
    }

    /// Writes the term, printing any subterm found in `aliases` by its alias.
    pub fn render(&self, aliases: &dyn Fn(&Term) -> Option<String>) -> String {
        if let Some(name) = aliases(self) {
            return name;
        }
        let list = |v: &[Term], sep: &str| v.iter().map(|t| t.render(aliases)).collect::<Vec<_>>().join(sep);
        match self {
            Term::Atom { name, .. } => name.clone(),
            Term::Hash(v) => format!("h({})", list(v, ", ")),
            Term::Xor(v) if v.is_empty() => "0".to_string(),
            Term::Xor(v) => format!("({})", list(v, " ^ ")),
            Term::Smul { scalars, base } => format!("{}*{}", list(scalars, "*"), base.render(aliases)),
            Term::Senc { key, payload } => format!("E[{}]({})", key.render(aliases), payload.render(aliases)),
            Term::Tuple(v) => format!("<{}>", list(v, ", ")),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&|_| None))
    }
}

/// Canonical form: xor is flattened, sorted and cancelled, smul is flattened
/// over its base with sorted scalars, tuples are flat.
pub fn normalize(t: &Term) -> Term {
    match t {
        Term::Atom { .. } => t.clone(),
        Term::Hash(v) => Term::Hash(v.iter().map(normalize).collect()),
        Term::Senc { key, payload } => Term::Senc {
            key: Box::new(normalize(key)),
            payload: Box::new(normalize(payload)),
        },
        Term::Tuple(v) => {
            let mut out = Vec::new();
            for item in v.iter().map(normalize) {
                match item {
                    Term::Tuple(inner) => out.extend(inner),
                    other => out.push(other),
                }
            }
            if out.len() == 1 {
                out.pop().unwrap()
            } else {
                Term::Tuple(out)
            }
        }
        Term::Xor(v) => {
            let mut items = Vec::new();
            for item in v.iter().map(normalize) {
                match item {
                    Term::Xor(inner) => items.extend(inner),
                    other => items.push(other),
                }
            }
            items.sort();
            let mut out: Vec<Term> = Vec::with_capacity(items.len());
            for item in items {
                if out.last() == Some(&item) {
                    out.pop();
                } else {
                    out.push(item);
                }
            }
            if out.len() == 1 {
                out.pop().unwrap()
            } else {
                Term::Xor(out)
            }
        }
        Term::Smul { scalars, base } => {
            let mut all: Vec<Term> = scalars.iter().map(normalize).collect();
            let base = match normalize(base) {
                Term::Smul { scalars: inner, base } => {
                    all.extend(inner);
                    *base
                }
                other => other,
            };
            if all.is_empty() {
                return base;
            }
            all.sort();
            Term::Smul {
                scalars: all,
                base: Box::new(base),
            }
        }
    }
}
