//! Allen's interval algebra over half-open cell intervals.
//!
//! Chunks are modeled as `[start, end)` ranges of 8-byte cells. Thirteen
//! mutually exclusive relations describe how two chunks sit relative to each
//! other. A test case for `n` chunks is the list of relations linking every
//! time-ordered pair `(i, j)` with `i < j`, in the order `p01, p02, p12`.
//!
//! Coherence and quantification are computed by exhaustive search over
//! integer endpoints in `[0, 2n]`: `n` intervals never need more than `2n`
//! distinct endpoint values, so the search space is complete.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IntervalError {
    #[error("malformed interval [{start}, {end}): start must be below end")]
    Malformed { start: u32, end: u32 },
    #[error("unsupported chunk count {0}; only 2 and 3 are supported")]
    UnsupportedChunkCount(usize),
    #[error("relation sequence has {got} relations, expected {expected} for {n} chunks")]
    WrongLength { n: usize, expected: usize, got: usize },
    #[error("relation sequence {0} is not coherent")]
    Incoherent(RelationSequence),
    #[error("unknown Allen relation tag `{0}`")]
    UnknownTag(String),
}

/// One of Allen's thirteen atomic relations, read as `X r Y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AllenRelation {
    B,
    Bi,
    M,
    Mi,
    O,
    Oi,
    S,
    Si,
    D,
    Di,
    F,
    Fi,
    Eq,
}

impl AllenRelation {
    /// All relations in tag-index order. Enumeration order of corpora follows it.
    pub const ALL: [AllenRelation; 13] = [
        AllenRelation::B,
        AllenRelation::Bi,
        AllenRelation::M,
        AllenRelation::Mi,
        AllenRelation::O,
        AllenRelation::Oi,
        AllenRelation::S,
        AllenRelation::Si,
        AllenRelation::D,
        AllenRelation::Di,
        AllenRelation::F,
        AllenRelation::Fi,
        AllenRelation::Eq,
    ];

    /// The nine relations where the two intervals share at least one cell.
    pub const OVERLAPPING: [AllenRelation; 9] = [
        AllenRelation::O,
        AllenRelation::Oi,
        AllenRelation::S,
        AllenRelation::Si,
        AllenRelation::D,
        AllenRelation::Di,
        AllenRelation::F,
        AllenRelation::Fi,
        AllenRelation::Eq,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn invert(self) -> AllenRelation {
        use AllenRelation::*;
        match self {
            B => Bi,
            Bi => B,
            M => Mi,
            Mi => M,
            O => Oi,
            Oi => O,
            S => Si,
            Si => S,
            D => Di,
            Di => D,
            F => Fi,
            Fi => F,
            Eq => Eq,
        }
    }

    pub fn is_overlapping(self) -> bool {
        !matches!(self, AllenRelation::B | AllenRelation::Bi | AllenRelation::M | AllenRelation::Mi)
    }

    pub fn tag(self) -> &'static str {
        use AllenRelation::*;
        match self {
            B => "B",
            Bi => "Bi",
            M => "M",
            Mi => "Mi",
            O => "O",
            Oi => "Oi",
            S => "S",
            Si => "Si",
            D => "D",
            Di => "Di",
            F => "F",
            Fi => "Fi",
            Eq => "Eq",
        }
    }
}

impl fmt::Display for AllenRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for AllenRelation {
    type Err = IntervalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AllenRelation::ALL
            .iter()
            .copied()
            .find(|r| r.tag() == s)
            .ok_or_else(|| IntervalError::UnknownTag(s.to_string()))
    }
}

/// A half-open range of cells `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub start: u32,
    pub end: u32,
}

impl Interval {
    pub fn new(start: u32, end: u32) -> Result<Self, IntervalError> {
        if start >= end {
            return Err(IntervalError::Malformed { start, end });
        }
        Ok(Interval { start, end })
    }

    pub fn len(&self) -> u32 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn intersection(&self, other: &Interval) -> Option<Interval> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (start < end).then_some(Interval { start, end })
    }

    /// `self` minus `other`, as zero, one or two intervals in ascending order.
    pub fn subtract(&self, other: &Interval) -> Vec<Interval> {
        if !self.overlaps(other) {
            return vec![*self];
        }
        let mut out = Vec::with_capacity(2);
        if self.start < other.start {
            out.push(Interval { start: self.start, end: other.start });
        }
        if other.end < self.end {
            out.push(Interval { start: other.end, end: self.end });
        }
        out
    }

    pub fn cells(&self) -> std::ops::Range<u32> {
        self.start..self.end
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Classify the relation `x r y`.
pub fn relate(x: Interval, y: Interval) -> Result<AllenRelation, IntervalError> {
    for i in [x, y] {
        if i.start >= i.end {
            return Err(IntervalError::Malformed { start: i.start, end: i.end });
        }
    }
    Ok(relate_unchecked(x, y))
}

pub(crate) fn relate_unchecked(x: Interval, y: Interval) -> AllenRelation {
    use std::cmp::Ordering::*;
    use AllenRelation::*;
    if x.end < y.start {
        return B;
    }
    if y.end < x.start {
        return Bi;
    }
    if x.end == y.start {
        return M;
    }
    if y.end == x.start {
        return Mi;
    }
    match (x.start.cmp(&y.start), x.end.cmp(&y.end)) {
        (Equal, Equal) => Eq,
        (Equal, Less) => S,
        (Equal, Greater) => Si,
        (Greater, Less) => D,
        (Less, Greater) => Di,
        (Greater, Equal) => F,
        (Less, Equal) => Fi,
        (Less, Less) => O,
        (Greater, Greater) => Oi,
    }
}

/// Number of unordered chunk pairs for `n` chunks.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Time-ordered chunk pairs `(i, j)`, `i < j`, in canonical order.
pub fn pair_indices(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(pair_count(n));
    for i in 0..n {
        for j in i + 1..n {
            out.push((i, j));
        }
    }
    out
}

/// The `C(n, 2)` relations linking `n` time-ordered chunks.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationSequence {
    n: usize,
    relations: Vec<AllenRelation>,
}

impl RelationSequence {
    /// Build a sequence without checking coherence.
    pub fn new(n: usize, relations: Vec<AllenRelation>) -> Result<Self, IntervalError> {
        if !(2..=3).contains(&n) {
            return Err(IntervalError::UnsupportedChunkCount(n));
        }
        let expected = pair_count(n);
        if relations.len() != expected {
            return Err(IntervalError::WrongLength { n, expected, got: relations.len() });
        }
        Ok(RelationSequence { n, relations })
    }

    /// Build a sequence and reject it unless it is coherent.
    pub fn coherent(n: usize, relations: Vec<AllenRelation>) -> Result<Self, IntervalError> {
        let seq = Self::new(n, relations)?;
        if !is_coherent(&seq) {
            return Err(IntervalError::Incoherent(seq));
        }
        Ok(seq)
    }

    pub fn from_tags(tags: &[&str]) -> Result<Self, IntervalError> {
        let relations = tags.iter().map(|t| t.parse()).collect::<Result<Vec<_>, _>>()?;
        let n = match relations.len() {
            1 => 2,
            3 => 3,
            other => return Err(IntervalError::WrongLength { n: 0, expected: 3, got: other }),
        };
        Self::new(n, relations)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn relations(&self) -> &[AllenRelation] {
        &self.relations
    }

    /// Relation between time-ordered chunks `i < j`.
    pub fn between(&self, i: usize, j: usize) -> AllenRelation {
        let k = pair_indices(self.n).iter().position(|&p| p == (i, j)).expect("pair index within sequence");
        self.relations[k]
    }
}

impl fmt::Display for RelationSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (k, r) in self.relations.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{r}")?;
        }
        f.write_str(")")
    }
}

impl Serialize for RelationSequence {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(self.relations.len()))?;
        for r in &self.relations {
            seq.serialize_element(r.tag())?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for RelationSequence {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let tags: Vec<String> = Vec::deserialize(d)?;
        let refs: Vec<&str> = tags.iter().map(String::as_str).collect();
        RelationSequence::from_tags(&refs).map_err(serde::de::Error::custom)
    }
}

/// Per-chunk extents, indexed by time order (index 0 = oldest).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntervalAssignment {
    pub chunks: Vec<Interval>,
}

impl IntervalAssignment {
    /// Relations induced by the extents, in canonical pair order.
    pub fn relations(&self) -> Vec<AllenRelation> {
        pair_indices(self.chunks.len())
            .into_iter()
            .map(|(i, j)| relate_unchecked(self.chunks[i], self.chunks[j]))
            .collect()
    }
}

/// Depth-first search for the lexicographically smallest endpoint tuple
/// `(s0, e0, s1, e1, ...)` satisfying every relation.
fn search(seq: &RelationSequence) -> Option<IntervalAssignment> {
    let n = seq.n;
    let bound = 2 * n as u32;
    let mut placed: Vec<Interval> = Vec::with_capacity(n);
    fn go(seq: &RelationSequence, bound: u32, placed: &mut Vec<Interval>) -> bool {
        let k = placed.len();
        if k == seq.n {
            return true;
        }
        for start in 0..bound {
            for end in start + 1..=bound {
                let cand = Interval { start, end };
                let ok = (0..k).all(|i| relate_unchecked(placed[i], cand) == seq.between(i, k));
                if ok {
                    placed.push(cand);
                    if go(seq, bound, placed) {
                        return true;
                    }
                    placed.pop();
                }
            }
        }
        false
    }
    go(seq, bound, &mut placed).then_some(IntervalAssignment { chunks: placed })
}

pub fn is_coherent(seq: &RelationSequence) -> bool {
    search(seq).is_some()
}

/// Canonical quantification: the lexicographically smallest non-negative
/// integer assignment realizing `seq`.
pub fn quantify(seq: &RelationSequence) -> Result<IntervalAssignment, IntervalError> {
    search(seq).ok_or_else(|| IntervalError::Incoherent(seq.clone()))
}

/// All coherent sequences for `n` chunks, lexicographic by relation tag index.
pub fn enumerate_coherent(n: usize) -> Result<Vec<RelationSequence>, IntervalError> {
    if !(2..=3).contains(&n) {
        return Err(IntervalError::UnsupportedChunkCount(n));
    }
    let m = pair_count(n);
    let total = 13usize.pow(m as u32);
    let mut out = Vec::new();
    for code in 0..total {
        let mut rels = vec![AllenRelation::B; m];
        let mut c = code;
        for slot in (0..m).rev() {
            rels[slot] = AllenRelation::ALL[c % 13];
            c /= 13;
        }
        let seq = RelationSequence { n, relations: rels };
        if is_coherent(&seq) {
            out.push(seq);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use AllenRelation::*;

    fn iv(s: u32, e: u32) -> Interval {
        Interval::new(s, e).unwrap()
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(O.invert(), Oi);
        assert_eq!(Eq.invert(), Eq);
        assert_eq!(M.invert(), Mi);
        for r in AllenRelation::ALL {
            assert_eq!(r.invert().invert(), r);
        }
    }

    #[test]
    fn relate_examples() {
        assert_eq!(relate(iv(0, 2), iv(1, 3)).unwrap(), O);
        assert_eq!(relate(iv(0, 1), iv(0, 1)).unwrap(), Eq);
        assert_eq!(relate(iv(0, 1), iv(2, 3)).unwrap(), B);
        assert_eq!(relate(iv(0, 1), iv(1, 3)).unwrap(), M);
    }

    #[test]
    fn relate_rejects_malformed() {
        let bad = Interval { start: 3, end: 3 };
        assert!(matches!(relate(bad, iv(0, 1)), Err(IntervalError::Malformed { .. })));
        assert!(Interval::new(2, 1).is_err());
    }

    #[test]
    fn coherence_examples() {
        let seq = |t: &[&str]| RelationSequence::from_tags(t).unwrap();
        assert!(is_coherent(&seq(&["O", "Si", "Mi"])));
        assert!(!is_coherent(&seq(&["Eq", "Eq", "B"])));
        assert!(is_coherent(&seq(&["O", "D", "Oi"])));
    }

    #[test]
    fn quantify_examples() {
        let q = quantify(&RelationSequence::from_tags(&["Eq"]).unwrap()).unwrap();
        assert_eq!(q.chunks, vec![iv(0, 1), iv(0, 1)]);
        let q = quantify(&RelationSequence::from_tags(&["O"]).unwrap()).unwrap();
        assert_eq!(q.chunks, vec![iv(0, 2), iv(1, 3)]);
        let q = quantify(&RelationSequence::from_tags(&["O", "D", "Oi"]).unwrap()).unwrap();
        assert_eq!(q.chunks, vec![iv(1, 3), iv(2, 5), iv(0, 4)]);
    }

    #[test]
    fn quantify_rejects_incoherent() {
        let seq = RelationSequence::from_tags(&["Eq", "Eq", "B"]).unwrap();
        assert!(matches!(quantify(&seq), Err(IntervalError::Incoherent(_))));
    }

    #[test]
    fn enumeration_counts_and_bounds() {
        assert_eq!(enumerate_coherent(2).unwrap().len(), 13);
        assert_eq!(enumerate_coherent(3).unwrap().len(), 409);
        assert!(matches!(enumerate_coherent(4), Err(IntervalError::UnsupportedChunkCount(4))));
        assert!(enumerate_coherent(1).is_err());
    }

    #[test]
    fn enumeration_is_sorted_and_round_trips() {
        for n in [2, 3] {
            let all = enumerate_coherent(n).unwrap();
            assert!(all.windows(2).all(|w| w[0] < w[1]));
            for seq in &all {
                let q = quantify(seq).unwrap();
                assert_eq!(q.relations(), seq.relations());
                assert!(q.chunks.iter().all(|c| c.start < c.end));
            }
        }
    }

    #[test]
    fn subtract_splits() {
        assert_eq!(iv(0, 5).subtract(&iv(1, 2)), vec![iv(0, 1), iv(2, 5)]);
        assert_eq!(iv(0, 5).subtract(&iv(0, 5)), vec![]);
        assert_eq!(iv(0, 5).subtract(&iv(6, 7)), vec![iv(0, 5)]);
        assert_eq!(iv(2, 5).subtract(&iv(0, 3)), vec![iv(3, 5)]);
    }

    #[test]
    fn relations_serialize_as_tags() {
        let seq = RelationSequence::from_tags(&["M", "M", "S"]).unwrap();
        let json = serde_json::to_string(&seq).unwrap();
        assert_eq!(json, r#"["M","M","S"]"#);
        let back: RelationSequence = serde_json::from_str(&json).unwrap();
        assert_eq!(back, seq);
    }

    proptest! {
        #[test]
        fn swapping_operands_inverts(xs in 0u32..6, xl in 1u32..6, ys in 0u32..6, yl in 1u32..6) {
            let x = Interval { start: xs, end: (xs + xl).min(6).max(xs + 1) };
            let y = Interval { start: ys, end: (ys + yl).min(6).max(ys + 1) };
            prop_assert_eq!(relate(y, x).unwrap(), relate(x, y).unwrap().invert());
        }
    }
}
