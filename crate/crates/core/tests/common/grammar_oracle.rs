//! Brute-force derivation enumerator for the authorization grammar.
//!
//! Applies the production rules literally to sentential forms, with segment
//! units at character granularity. When a form becomes fully terminal the
//! result is a new segment and derivation restarts from it, so a sequence of
//! accepted edits is itself an accepted edit. Forms with more than `max_len`
//! terminals are pruned (counting the units `S` must still yield when units
//! cannot be deleted), and at most one `S0` is kept alive at a time, which
//! loses nothing because derivation restarts from every terminal result.
//! `S0 -> w S0` is applied with single-symbol `w`: longer words arise from
//! repeated application, so nothing derivable is lost.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use mamo::authz::AuthorizationMode;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Sym {
    /// The segment start symbol `S`.
    Start,
    /// The insertable-string nonterminal `S0`.
    Insert,
    /// A unit `S_i` of the decomposed segment (terminal once produced).
    Unit(char),
    /// A character of an inserted string `w`.
    Term(char),
}

type Form = Vec<Sym>;

fn terminal_count(form: &Form) -> usize {
    form.iter()
        .filter(|s| matches!(s, Sym::Unit(_) | Sym::Term(_)))
        .count()
}

fn words(alphabet: &[char], max: usize) -> Vec<Vec<char>> {
    let mut out = vec![];
    let mut layer: Vec<Vec<char>> = vec![vec![]];
    for _ in 0..max {
        layer = layer
            .iter()
            .flat_map(|w| {
                alphabet.iter().map(move |&c| {
                    let mut w = w.clone();
                    w.push(c);
                    w
                })
            })
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

fn splice(form: &Form, at: usize, replacement: Vec<Sym>) -> Form {
    let mut out = Vec::with_capacity(form.len() + replacement.len());
    out.extend_from_slice(&form[..at]);
    out.extend(replacement);
    out.extend_from_slice(&form[at + 1..]);
    out
}

/// One-step successors of `form` for the given mode.
fn successors(
    form: &Form,
    segment: &[char],
    mode: AuthorizationMode,
    alphabet: &[char],
    max_len: usize,
) -> Vec<Form> {
    use AuthorizationMode::*;
    // Units only need to stay distinguishable where they may be deleted.
    let units: Vec<Sym> = segment
        .iter()
        .map(|&c| if mode == AddWithAlter { Sym::Unit(c) } else { Sym::Term(c) })
        .collect();
    let budget = max_len.saturating_sub(terminal_count(form));
    let mut out = Vec::new();
    for (i, sym) in form.iter().enumerate() {
        match sym {
            Sym::Start => {
                match mode {
                    // S -> S ; the start symbol itself denotes the segment text.
                    ReadOnly => {}
                    // S -> S0 S
                    AddBeginning => out.push(splice(form, i, vec![Sym::Insert, Sym::Start])),
                    // S -> S S0
                    AddEnd => out.push(splice(form, i, vec![Sym::Start, Sym::Insert])),
                    // S -> S0 S | S S0 | S1 .. S0 .. Sn
                    AddWithoutAlter | AddWithAlter => {
                        out.push(splice(form, i, vec![Sym::Insert, Sym::Start]));
                        out.push(splice(form, i, vec![Sym::Start, Sym::Insert]));
                        for gap in 1..units.len() {
                            let mut r = units[..gap].to_vec();
                            r.push(Sym::Insert);
                            r.extend_from_slice(&units[gap..]);
                            out.push(splice(form, i, r));
                        }
                    }
                }
                // Decomposition into units, which is also the identity reading of S:
                // S -> S1 S2 .. Sn
                out.push(splice(form, i, units.clone()));
            }
            Sym::Insert => {
                // S0 -> phi
                out.push(splice(form, i, vec![]));
                for &c in alphabet.iter().filter(|_| budget > 0) {
                    let w = vec![Sym::Term(c)];
                    // S0 -> w S0
                    let mut left = w.clone();
                    left.push(Sym::Insert);
                    out.push(splice(form, i, left));
                    // S0 -> S0 w (interior insertion modes only)
                    if matches!(mode, AddWithoutAlter | AddWithAlter) {
                        let mut right = vec![Sym::Insert];
                        right.extend(w);
                        out.push(splice(form, i, right));
                    }
                }
            }
            // S_i -> phi
            Sym::Unit(_) if mode == AddWithAlter => out.push(splice(form, i, vec![])),
            _ => {}
        }
    }
    let pending = |f: &Form| {
        if mode != AddWithAlter && f.contains(&Sym::Start) {
            segment.len()
        } else {
            0
        }
    };
    out.retain(|f| {
        terminal_count(f) + pending(f) <= max_len
            && f.iter().filter(|s| **s == Sym::Insert).count() <= 1
    });
    out
}

fn yield_of(form: &Form) -> Option<String> {
    form.iter()
        .map(|s| match s {
            Sym::Unit(c) | Sym::Term(c) => Some(*c),
            _ => None,
        })
        .collect()
}

/// Derivation enumerator for one mode, caching the single-edit results of
/// each segment it has expanded.
pub struct Enumerator<'a> {
    mode: AuthorizationMode,
    alphabet: &'a [char],
    max_len: usize,
    one_edit: HashMap<String, Vec<String>>,
}

impl<'a> Enumerator<'a> {
    pub fn new(mode: AuthorizationMode, alphabet: &'a [char], max_len: usize) -> Self {
        Enumerator {
            mode,
            alphabet,
            max_len,
            one_edit: HashMap::new(),
        }
    }

    /// Terminal texts derivable from `segment` starting at `S`, without
    /// restarting.
    fn single_edits(&mut self, segment: &str) -> &[String] {
        if !self.one_edit.contains_key(segment) {
            let seg_chars: Vec<char> = segment.chars().collect();
            let mut results = BTreeSet::new();
            let mut seen: HashSet<Form> = HashSet::from([vec![Sym::Start]]);
            let mut queue = VecDeque::from([vec![Sym::Start]]);
            while let Some(form) = queue.pop_front() {
                if let Some(text) = yield_of(&form) {
                    results.insert(text);
                    continue;
                }
                for next in successors(&form, &seg_chars, self.mode, self.alphabet, self.max_len) {
                    if seen.insert(next.clone()) {
                        queue.push_back(next);
                    }
                }
            }
            self.one_edit.insert(segment.to_owned(), results.into_iter().collect());
        }
        &self.one_edit[segment]
    }

    /// Every text of length `<= max_len` derivable from `original`.
    pub fn reachable(&mut self, original: &str) -> BTreeSet<String> {
        let mut found = BTreeSet::from([original.to_owned()]);
        let mut segments = VecDeque::from([original.to_owned()]);
        while let Some(segment) = segments.pop_front() {
            for text in self.single_edits(&segment).to_vec() {
                if found.insert(text.clone()) {
                    segments.push_back(text);
                }
            }
        }
        found
    }
}

/// Every text of length `<= max_len` derivable from `original` under `mode`.
pub fn reachable(
    original: &str,
    mode: AuthorizationMode,
    alphabet: &[char],
    max_len: usize,
) -> BTreeSet<String> {
    Enumerator::new(mode, alphabet, max_len).reachable(original)
}

/// All strings over `alphabet` of length `0..=max_len`.
pub fn all_strings(alphabet: &[char], max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    out.extend(words(alphabet, max_len).into_iter().map(|w| w.into_iter().collect()));
    out
}
