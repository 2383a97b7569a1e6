//! Segment authorization grammar.
//!
//! Every segment of a message carries an [`AuthorizationMode`] chosen by its
//! owner. A mode is a small family of production rules rooted at the segment
//! itself; a proposed rewrite is permitted iff it is derivable from the
//! original segment under those rules. Segments are decomposed into units at
//! character granularity, which reduces each family to a simple string
//! relation:
//!
//! | mode                 | accepted rewrites `t` of `s`          |
//! |----------------------|---------------------------------------|
//! | `ReadOnly`           | `t == s`                              |
//! | `AddBeginning`       | `s` is a suffix of `t`                |
//! | `AddEnd`             | `s` is a prefix of `t`                |
//! | `AddWithoutAlter`    | `s` is a subsequence of `t`           |
//! | `AddWithAlter`       | every `t`                             |
//!
//! Accepted verdicts carry a [`Derivation`] witness that can be replayed
//! against the original text to reproduce the proposal.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Edit rights an owner grants on one segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AuthorizationMode {
    ReadOnly,
    AddBeginning,
    AddEnd,
    AddWithoutAlter,
    AddWithAlter,
}

impl AuthorizationMode {
    pub const ALL: [AuthorizationMode; 5] = [
        AuthorizationMode::ReadOnly,
        AuthorizationMode::AddBeginning,
        AuthorizationMode::AddEnd,
        AuthorizationMode::AddWithoutAlter,
        AuthorizationMode::AddWithAlter,
    ];

    /// Stable one-byte wire code.
    pub fn code(self) -> u8 {
        match self {
            AuthorizationMode::ReadOnly => 1,
            AuthorizationMode::AddBeginning => 2,
            AuthorizationMode::AddEnd => 3,
            AuthorizationMode::AddWithoutAlter => 4,
            AuthorizationMode::AddWithAlter => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.code() == code)
    }

    fn index(self) -> usize {
        self.code() as usize - 1
    }
}

impl fmt::Display for AuthorizationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            AuthorizationMode::ReadOnly => "read-only",
            AuthorizationMode::AddBeginning => "add-beginning",
            AuthorizationMode::AddEnd => "add-end",
            AuthorizationMode::AddWithoutAlter => "add-without-alter",
            AuthorizationMode::AddWithAlter => "add-with-alter",
        };
        f.write_str(name)
    }
}

/// Text of one segment. The empty segment is legal.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SegmentText(String);

impl SegmentText {
    pub fn new(content: impl Into<String>) -> Self {
        SegmentText(content.into())
    }

    pub fn empty() -> Self {
        SegmentText(String::new())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Length in units (characters).
    pub fn unit_len(&self) -> usize {
        self.0.chars().count()
    }
}

impl From<&str> for SegmentText {
    fn from(s: &str) -> Self {
        SegmentText(s.to_owned())
    }
}

impl From<String> for SegmentText {
    fn from(s: String) -> Self {
        SegmentText(s)
    }
}

impl fmt::Display for SegmentText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Text inserted immediately before original unit `position`
/// (`position == len` means after the last unit).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insertion {
    pub position: usize,
    pub text: String,
}

/// Witness that a rewrite is derivable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Derivation {
    /// No change.
    Identity,
    /// `proposed = prefix ‖ original`.
    Prefix(String),
    /// `proposed = original ‖ suffix`.
    Suffix(String),
    /// Pure insertions, ascending by position.
    Insertions(Vec<Insertion>),
    /// Deleted original units (ascending) followed by insertions between
    /// the surviving ones.
    Rewrite {
        deletions: Vec<usize>,
        insertions: Vec<Insertion>,
    },
}

impl Derivation {
    /// Applies the witness to `original`.
    pub fn replay(&self, original: &str) -> String {
        match self {
            Derivation::Identity => original.to_owned(),
            Derivation::Prefix(w) => format!("{w}{original}"),
            Derivation::Suffix(w) => format!("{original}{w}"),
            Derivation::Insertions(ins) => apply_script(original, &[], ins),
            Derivation::Rewrite {
                deletions,
                insertions,
            } => apply_script(original, deletions, insertions),
        }
    }
}

fn apply_script(original: &str, deletions: &[usize], insertions: &[Insertion]) -> String {
    let mut out = String::with_capacity(original.len());
    let mut ins = insertions.iter().peekable();
    let mut del = deletions.iter().peekable();
    let units: Vec<char> = original.chars().collect();
    for (i, c) in units.iter().enumerate() {
        while let Some(insertion) = ins.next_if(|x| x.position == i) {
            out.push_str(&insertion.text);
        }
        if del.next_if(|&&d| d == i).is_none() {
            out.push(*c);
        }
    }
    for insertion in ins {
        out.push_str(&insertion.text);
    }
    out
}

/// Machine-readable rejection cause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    /// Read-only text changed.
    Altered,
    /// Original is not a suffix of the proposal.
    NotSuffix,
    /// Original is not a prefix of the proposal.
    NotPrefix,
    /// Original units were deleted or substituted.
    NotSubsequence,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::Altered => "altered",
            RejectReason::NotSuffix => "not-suffix",
            RejectReason::NotPrefix => "not-prefix",
            RejectReason::NotSubsequence => "not-subsequence",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidationResult {
    Accepted(Derivation),
    Rejected {
        mode: AuthorizationMode,
        reason: RejectReason,
    },
}

impl ValidationResult {
    pub fn is_accepted(&self) -> bool {
        matches!(self, ValidationResult::Accepted(_))
    }

    pub fn derivation(&self) -> Option<&Derivation> {
        match self {
            ValidationResult::Accepted(d) => Some(d),
            ValidationResult::Rejected { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthzError {
    #[error("a mode is undefined against itself ({0})")]
    UndefinedDiagonal(AuthorizationMode),
    #[error("modes {existing} and {added} cannot coexist on one segment")]
    IncompatibleModeSet {
        existing: AuthorizationMode,
        added: AuthorizationMode,
    },
    #[error("empty mode set")]
    EmptyModeSet,
}

/// Decides whether `proposed` is derivable from `original` under `mode`.
pub fn validate_edit(
    original: &SegmentText,
    proposed: &SegmentText,
    mode: AuthorizationMode,
) -> ValidationResult {
    let (s, t) = (original.as_str(), proposed.as_str());
    let rejected = |reason| ValidationResult::Rejected { mode, reason };
    match mode {
        AuthorizationMode::ReadOnly => {
            if s == t {
                ValidationResult::Accepted(Derivation::Identity)
            } else {
                rejected(RejectReason::Altered)
            }
        }
        AuthorizationMode::AddBeginning => match t.strip_suffix(s) {
            Some(w) => ValidationResult::Accepted(Derivation::Prefix(w.to_owned())),
            None => rejected(RejectReason::NotSuffix),
        },
        AuthorizationMode::AddEnd => match t.strip_prefix(s) {
            Some(w) => ValidationResult::Accepted(Derivation::Suffix(w.to_owned())),
            None => rejected(RejectReason::NotPrefix),
        },
        AuthorizationMode::AddWithoutAlter => match leftmost_embedding(s, t) {
            Some(insertions) => ValidationResult::Accepted(Derivation::Insertions(insertions)),
            None => rejected(RejectReason::NotSubsequence),
        },
        AuthorizationMode::AddWithAlter => ValidationResult::Accepted(edit_script(s, t)),
    }
}

/// Greedy leftmost embedding of `s` into `t`; the unmatched characters of
/// `t` become insertions.
fn leftmost_embedding(s: &str, t: &str) -> Option<Vec<Insertion>> {
    let mut insertions = Vec::new();
    let mut pending = String::new();
    let mut tail = t.chars();
    for (position, unit) in s.chars().enumerate() {
        loop {
            let c = tail.next()?;
            if c == unit {
                break;
            }
            pending.push(c);
        }
        if !pending.is_empty() {
            insertions.push(Insertion {
                position,
                text: std::mem::take(&mut pending),
            });
        }
    }
    let rest: String = tail.collect();
    if !rest.is_empty() {
        insertions.push(Insertion {
            position: s.chars().count(),
            text: rest,
        });
    }
    Some(insertions)
}

/// Edit script keeping a longest common subsequence of the two texts.
fn edit_script(s: &str, t: &str) -> Derivation {
    if s == t {
        return Derivation::Identity;
    }
    let a: Vec<char> = s.chars().collect();
    let b: Vec<char> = t.chars().collect();
    let (n, m) = (a.len(), b.len());
    // lcs[i][j] = LCS length of a[i..], b[j..]
    let mut lcs = vec![vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i][j] = if a[i] == b[j] {
                lcs[i + 1][j + 1] + 1
            } else {
                lcs[i + 1][j].max(lcs[i][j + 1])
            };
        }
    }

    let mut deletions = Vec::new();
    let mut insertions: Vec<Insertion> = Vec::new();
    let push_insert = |position: usize, c: char, insertions: &mut Vec<Insertion>| {
        match insertions.last_mut() {
            Some(last) if last.position == position => last.text.push(c),
            _ => insertions.push(Insertion {
                position,
                text: c.to_string(),
            }),
        }
    };
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        if i < n && j < m && a[i] == b[j] {
            i += 1;
            j += 1;
        } else if j < m && (i == n || lcs[i][j + 1] >= lcs[i + 1][j]) {
            push_insert(i, b[j], &mut insertions);
            j += 1;
        } else {
            deletions.push(i);
            i += 1;
        }
    }
    Derivation::Rewrite {
        deletions,
        insertions,
    }
}

// Rows: mode already on the segment. Columns: mode being added.
// `None` on the diagonal.
const COMPATIBILITY: [[Option<bool>; 5]; 5] = {
    const Y: Option<bool> = Some(true);
    const N: Option<bool> = Some(false);
    const D: Option<bool> = None;
    [
        [D, Y, Y, N, N],
        [Y, D, Y, Y, N],
        [Y, Y, D, Y, N],
        [N, Y, Y, D, N],
        [N, Y, Y, N, D],
    ]
};

/// Whether `added` may be imposed on a segment that already carries
/// `existing`. The relation is not symmetric.
pub fn is_compatible(
    existing: AuthorizationMode,
    added: AuthorizationMode,
) -> Result<bool, AuthzError> {
    COMPATIBILITY[existing.index()][added.index()].ok_or(AuthzError::UndefinedDiagonal(existing))
}

/// The 20 off-diagonal compatibility cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompatibilityMatrix {
    entries: Vec<((AuthorizationMode, AuthorizationMode), bool)>,
}

impl CompatibilityMatrix {
    pub fn table() -> Self {
        let entries = AuthorizationMode::ALL
            .into_iter()
            .flat_map(|row| AuthorizationMode::ALL.into_iter().map(move |col| (row, col)))
            .filter_map(|(row, col)| is_compatible(row, col).ok().map(|v| ((row, col), v)))
            .collect();
        CompatibilityMatrix { entries }
    }

    pub fn get(&self, existing: AuthorizationMode, added: AuthorizationMode) -> Option<bool> {
        self.entries
            .iter()
            .find(|(pair, _)| *pair == (existing, added))
            .map(|(_, v)| *v)
    }

    pub fn entries(&self) -> &[((AuthorizationMode, AuthorizationMode), bool)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Checks that every ordered pair of distinct modes in `modes` is compatible.
pub fn check_mode_set(modes: &[AuthorizationMode]) -> Result<(), AuthzError> {
    if modes.is_empty() {
        return Err(AuthzError::EmptyModeSet);
    }
    for &existing in modes {
        for &added in modes {
            if existing != added && !is_compatible(existing, added)? {
                return Err(AuthzError::IncompatibleModeSet { existing, added });
            }
        }
    }
    Ok(())
}

/// Validates an edit against a segment governed by several owners' modes at
/// once: the edit must be accepted by each of them.
///
/// On acceptance the witness of the first mode in `modes` is returned; on
/// rejection, the first rejecting mode is reported.
pub fn combined_validate(
    original: &SegmentText,
    proposed: &SegmentText,
    modes: &[AuthorizationMode],
) -> Result<ValidationResult, AuthzError> {
    check_mode_set(modes)?;
    let mut witness = None;
    for &mode in modes {
        match validate_edit(original, proposed, mode) {
            rejected @ ValidationResult::Rejected { .. } => return Ok(rejected),
            accepted => {
                witness.get_or_insert(accepted);
            }
        }
    }
    Ok(witness.expect("mode set is non-empty"))
}
