//! Finite sets, total maps, spans and families over finite sets.
//!
//! A span `A <- X -> B` is read as an `A x B` matrix whose `(a, b)` entry is
//! the fiber of `X` over that pair; composing spans by pullback multiplies
//! these matrices, with disjoint union playing the role of addition.
//! Families (objects of a slice category) are acted on by spans through
//! pullback along the left leg followed by pushforward along the right one.
//!
//! Elements are text labels. Labels produced by products and pullbacks are
//! tuples written `x|y`; a component that is itself compound is wrapped in
//! parentheses, so the encoding is injective.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Errors raised by the finite-set kernel.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SetError {
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("malformed label `{0}`: labels are atoms or `|`-separated tuples with balanced parentheses")]
    MalformedLabel(String),
    #[error("unknown label `{label}` (expected one of {set})")]
    UnknownLabel { label: String, set: String },
    #[error("map is not total: no value for `{0}`")]
    NotTotal(String),
    #[error("table has {found} entries but the domain has {expected}")]
    TableLength { expected: usize, found: usize },
    #[error("table value {value} is out of range for a codomain of size {size}")]
    OutOfRange { value: usize, size: usize },
    #[error("boundary mismatch: {left} does not match {right}")]
    BoundaryMismatch { left: String, right: String },
    #[error("{0}")]
    Invalid(String),
}

struct Inner {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

/// An ordered finite set of distinct labels.
///
/// Cloning is cheap; the element list is shared.
#[derive(Clone)]
pub struct FinSet(Arc<Inner>);

impl FinSet {
    /// Builds a set from labels, rejecting duplicates and malformed labels.
    pub fn new<I, S>(labels: I) -> Result<Self, SetError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        for l in &labels {
            if !is_well_formed(l) {
                return Err(SetError::MalformedLabel(l.clone()));
            }
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(SetError::DuplicateLabel(l.clone()));
            }
        }
        Ok(FinSet(Arc::new(Inner { labels, index })))
    }

    /// Builds a set from labels already known to be distinct and well formed.
    pub(crate) fn from_generated(labels: Vec<String>) -> Self {
        let index: HashMap<String, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        debug_assert_eq!(index.len(), labels.len(), "generated labels collide");
        FinSet(Arc::new(Inner { labels, index }))
    }

    pub fn empty() -> Self {
        Self::from_generated(Vec::new())
    }

    pub fn singleton(label: &str) -> Result<Self, SetError> {
        Self::new([label])
    }

    pub fn len(&self) -> usize {
        self.0.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.0.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.0.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.0.index.get(label).copied()
    }

    /// Like [`FinSet::index_of`], with an error naming the set on failure.
    pub fn lookup(&self, label: &str) -> Result<usize, SetError> {
        self.index_of(label).ok_or_else(|| SetError::UnknownLabel {
            label: label.to_string(),
            set: self.to_string(),
        })
    }

    pub fn contains(&self, label: &str) -> bool {
        self.0.index.contains_key(label)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> + '_ {
        self.0.labels.iter().map(String::as_str)
    }

    /// Cartesian product in lexicographic order, labels `x|y`.
    pub fn product(&self, other: &FinSet) -> FinSet {
        let mut labels = Vec::with_capacity(self.len() * other.len());
        for a in self.iter() {
            for b in other.iter() {
                labels.push(tuple_label(&[a, b]));
            }
        }
        FinSet::from_generated(labels)
    }

    fn same(&self, other: &FinSet) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.labels == other.0.labels
    }

    pub(crate) fn expect_eq(&self, other: &FinSet) -> Result<(), SetError> {
        if self.same(other) {
            Ok(())
        } else {
            Err(SetError::BoundaryMismatch {
                left: self.to_string(),
                right: other.to_string(),
            })
        }
    }
}

impl PartialEq for FinSet {
    fn eq(&self, other: &Self) -> bool {
        self.same(other)
    }
}

impl Eq for FinSet {}

impl fmt::Display for FinSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "{{")?;
        for (i, l) in self.0.labels.iter().take(SHOWN).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{l}")?;
        }
        if self.len() > SHOWN {
            write!(f, ", ... ({} elements)", self.len())?;
        }
        write!(f, "}}")
    }
}

impl fmt::Debug for FinSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.labels.iter()).finish()
    }
}

impl Serialize for FinSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.labels.serialize(s)
    }
}

impl<'de> Deserialize<'de> for FinSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let labels = Vec::<String>::deserialize(d)?;
        FinSet::new(labels).map_err(serde::de::Error::custom)
    }
}

/// Checks the label grammar:
///
/// ```text
/// label     := component ('|' component)*
/// component := atom | '(' label? ')'
/// atom      := one or more characters other than '|', '(' and ')'
/// ```
pub fn is_well_formed(text: &str) -> bool {
    fn label(b: &[u8], mut pos: usize) -> Option<usize> {
        loop {
            pos = component(b, pos)?;
            if b.get(pos) == Some(&b'|') {
                pos += 1;
            } else {
                return Some(pos);
            }
        }
    }
    fn component(b: &[u8], pos: usize) -> Option<usize> {
        match b.get(pos) {
            Some(b'(') => {
                let inner = if b.get(pos + 1) == Some(&b')') {
                    pos + 1
                } else {
                    label(b, pos + 1)?
                };
                (b.get(inner) == Some(&b')')).then_some(inner + 1)
            }
            Some(b'|') | Some(b')') | None => None,
            Some(_) => {
                let mut end = pos;
                while end < b.len() && !matches!(b[end], b'|' | b'(' | b')') {
                    end += 1;
                }
                Some(end)
            }
        }
    }
    let b = text.as_bytes();
    label(b, 0) == Some(b.len())
}

/// Encodes a tuple of labels. A one-element tuple is the element itself and
/// the empty tuple is `()`.
pub fn tuple_label<S: AsRef<str>>(parts: &[S]) -> String {
    match parts {
        [] => "()".to_string(),
        [one] => one.as_ref().to_string(),
        _ => {
            let mut out = String::new();
            for (i, p) in parts.iter().enumerate() {
                if i > 0 {
                    out.push('|');
                }
                let p = p.as_ref();
                if p.contains(['|', '(', ')']) {
                    out.push('(');
                    out.push_str(p);
                    out.push(')');
                } else {
                    out.push_str(p);
                }
            }
            out
        }
    }
}

/// A total function between finite sets, stored as an index table.
#[derive(Clone, PartialEq, Eq)]
pub struct FinMap {
    dom: FinSet,
    cod: FinSet,
    table: Vec<usize>,
}

impl FinMap {
    pub fn new(dom: FinSet, cod: FinSet, table: Vec<usize>) -> Result<Self, SetError> {
        if table.len() != dom.len() {
            return Err(SetError::TableLength {
                expected: dom.len(),
                found: table.len(),
            });
        }
        if let Some(&v) = table.iter().find(|&&v| v >= cod.len()) {
            return Err(SetError::OutOfRange {
                value: v,
                size: cod.len(),
            });
        }
        Ok(FinMap { dom, cod, table })
    }

    /// Builds a map from `(input, output)` label pairs; every element of
    /// `dom` must be assigned exactly once.
    pub fn from_pairs<'a, I>(dom: FinSet, cod: FinSet, pairs: I) -> Result<Self, SetError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut table = vec![usize::MAX; dom.len()];
        for (x, y) in pairs {
            let i = dom.lookup(x)?;
            if table[i] != usize::MAX {
                return Err(SetError::DuplicateLabel(x.to_string()));
            }
            table[i] = cod.lookup(y)?;
        }
        if let Some(i) = table.iter().position(|&v| v == usize::MAX) {
            return Err(SetError::NotTotal(dom.label(i).to_string()));
        }
        Ok(FinMap { dom, cod, table })
    }

    pub(crate) fn from_fn(dom: FinSet, cod: FinSet, f: impl Fn(usize) -> usize) -> Self {
        let table: Vec<usize> = (0..dom.len()).map(f).collect();
        debug_assert!(table.iter().all(|&v| v < cod.len()));
        FinMap { dom, cod, table }
    }

    pub fn identity(set: &FinSet) -> Self {
        FinMap {
            dom: set.clone(),
            cod: set.clone(),
            table: (0..set.len()).collect(),
        }
    }

    pub fn dom(&self) -> &FinSet {
        &self.dom
    }

    pub fn cod(&self) -> &FinSet {
        &self.cod
    }

    pub fn table(&self) -> &[usize] {
        &self.table
    }

    pub fn apply(&self, i: usize) -> usize {
        self.table[i]
    }

    pub fn apply_label(&self, label: &str) -> Result<&str, SetError> {
        Ok(self.cod.label(self.table[self.dom.lookup(label)?]))
    }

    pub fn is_identity(&self) -> bool {
        self.dom == self.cod && self.table.iter().enumerate().all(|(i, &v)| i == v)
    }

    /// `then ∘ self`.
    pub fn then(&self, then: &FinMap) -> Result<FinMap, SetError> {
        self.cod.expect_eq(&then.dom)?;
        Ok(FinMap {
            dom: self.dom.clone(),
            cod: then.cod.clone(),
            table: self.table.iter().map(|&v| then.table[v]).collect(),
        })
    }
}

impl fmt::Debug for FinMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map()
            .entries(
                self.table
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| (self.dom.label(i), self.cod.label(v))),
            )
            .finish()
    }
}

/// A total function `rows x cols -> cod`, stored row-major.
///
/// Used for update tables `S x I -> S` and for the backward and pushforward
/// parts of lenses and charts.
#[derive(Clone, PartialEq, Eq)]
pub struct PairMap {
    rows: FinSet,
    cols: FinSet,
    cod: FinSet,
    table: Vec<usize>,
}

impl PairMap {
    pub fn new(rows: FinSet, cols: FinSet, cod: FinSet, table: Vec<usize>) -> Result<Self, SetError> {
        let expected = rows.len() * cols.len();
        if table.len() != expected {
            return Err(SetError::TableLength {
                expected,
                found: table.len(),
            });
        }
        if let Some(&v) = table.iter().find(|&&v| v >= cod.len()) {
            return Err(SetError::OutOfRange {
                value: v,
                size: cod.len(),
            });
        }
        Ok(PairMap {
            rows,
            cols,
            cod,
            table,
        })
    }

    pub(crate) fn from_fn(
        rows: FinSet,
        cols: FinSet,
        cod: FinSet,
        f: impl Fn(usize, usize) -> usize,
    ) -> Self {
        let mut table = Vec::with_capacity(rows.len() * cols.len());
        for r in 0..rows.len() {
            for c in 0..cols.len() {
                let v = f(r, c);
                debug_assert!(v < cod.len());
                table.push(v);
            }
        }
        PairMap {
            rows,
            cols,
            cod,
            table,
        }
    }

    /// Builds the table from nested label associations `row -> col -> value`.
    pub fn from_nested<'a, R, C>(rows: FinSet, cols: FinSet, cod: FinSet, nested: R) -> Result<Self, SetError>
    where
        R: IntoIterator<Item = (&'a str, C)>,
        C: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let width = cols.len();
        let mut table = vec![usize::MAX; rows.len() * width];
        let mut seen_row = vec![false; rows.len()];
        for (r, inner) in nested {
            let ri = rows.lookup(r)?;
            if std::mem::replace(&mut seen_row[ri], true) {
                return Err(SetError::DuplicateLabel(r.to_string()));
            }
            for (c, v) in inner {
                let ci = cols.lookup(c)?;
                let slot = &mut table[ri * width + ci];
                if *slot != usize::MAX {
                    return Err(SetError::DuplicateLabel(format!("{r} / {c}")));
                }
                *slot = cod.lookup(v)?;
            }
        }
        if let Some(k) = table.iter().position(|&v| v == usize::MAX) {
            return Err(SetError::NotTotal(format!(
                "({}, {})",
                rows.label(k / width),
                cols.label(k % width)
            )));
        }
        Ok(PairMap {
            rows,
            cols,
            cod,
            table,
        })
    }

    pub fn rows(&self) -> &FinSet {
        &self.rows
    }

    pub fn cols(&self) -> &FinSet {
        &self.cols
    }

    pub fn cod(&self) -> &FinSet {
        &self.cod
    }

    pub fn table(&self) -> &[usize] {
        &self.table
    }

    pub fn get(&self, row: usize, col: usize) -> usize {
        self.table[row * self.cols.len() + col]
    }

    pub(crate) fn set(&mut self, row: usize, col: usize, value: usize) {
        debug_assert!(value < self.cod.len());
        let w = self.cols.len();
        self.table[row * w + col] = value;
    }

    pub fn get_label(&self, row: &str, col: &str) -> Result<&str, SetError> {
        let r = self.rows.lookup(row)?;
        let c = self.cols.lookup(col)?;
        Ok(self.cod.label(self.get(r, c)))
    }

    /// Iterates `(row, col, value)` label triples in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, &str)> + '_ {
        let w = self.cols.len();
        self.table.iter().enumerate().map(move |(k, &v)| {
            (
                self.rows.label(k / w),
                self.cols.label(k % w),
                self.cod.label(v),
            )
        })
    }
}

impl fmt::Debug for PairMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map()
            .entries(self.entries().map(|(r, c, v)| ((r, c), v)))
            .finish()
    }
}

/// A span `source <- apex -> target`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Span {
    apex: FinSet,
    left: FinMap,
    right: FinMap,
}

impl Span {
    pub fn new(left: FinMap, right: FinMap) -> Result<Self, SetError> {
        left.dom.expect_eq(&right.dom)?;
        Ok(Span {
            apex: left.dom.clone(),
            left,
            right,
        })
    }

    pub fn source(&self) -> &FinSet {
        &self.left.cod
    }

    pub fn target(&self) -> &FinSet {
        &self.right.cod
    }

    pub fn apex(&self) -> &FinSet {
        &self.apex
    }

    pub fn left(&self) -> &FinMap {
        &self.left
    }

    pub fn right(&self) -> &FinMap {
        &self.right
    }

    /// The span viewed as a family over `source x target`.
    pub fn as_family(&self) -> Family {
        let base = self.source().product(self.target());
        let width = self.target().len();
        let proj = FinMap::from_fn(self.apex.clone(), base.clone(), |x| {
            self.left.table[x] * width + self.right.table[x]
        });
        Family { base, proj }
    }
}

/// An object of the slice over `base`: a set with a projection onto it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Family {
    base: FinSet,
    proj: FinMap,
}

impl Family {
    pub fn new(proj: FinMap) -> Self {
        Family {
            base: proj.cod.clone(),
            proj,
        }
    }

    pub fn base(&self) -> &FinSet {
        &self.base
    }

    pub fn total(&self) -> &FinSet {
        &self.proj.dom
    }

    pub fn proj(&self) -> &FinMap {
        &self.proj
    }

    /// Number of elements over each base point.
    pub fn fiber_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.base.len()];
        for &b in &self.proj.table {
            sizes[b] += 1;
        }
        sizes
    }

    /// Element indices over each base point, each list in total order.
    pub fn fibers(&self) -> Vec<Vec<usize>> {
        let mut fibers = vec![Vec::new(); self.base.len()];
        for (z, &b) in self.proj.table.iter().enumerate() {
            fibers[b].push(z);
        }
        fibers
    }

    /// Labels of the elements lying over `base_point`.
    pub fn fiber(&self, base_point: &str) -> Result<Vec<&str>, SetError> {
        let b = self.base.lookup(base_point)?;
        Ok(self
            .proj
            .table
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v == b)
            .map(|(z, _)| self.proj.dom.label(z))
            .collect())
    }
}

#[derive(Serialize, Deserialize)]
struct FinMapRepr {
    dom: FinSet,
    cod: FinSet,
    table: indexmap::IndexMap<String, String>,
}

impl Serialize for FinMap {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        FinMapRepr {
            dom: self.dom.clone(),
            cod: self.cod.clone(),
            table: self
                .table
                .iter()
                .enumerate()
                .map(|(i, &v)| (self.dom.label(i).to_string(), self.cod.label(v).to_string()))
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FinMap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = FinMapRepr::deserialize(d)?;
        FinMap::from_pairs(r.dom, r.cod, r.table.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct SpanRepr {
    source: FinSet,
    target: FinSet,
    apex: FinSet,
    left: FinMap,
    right: FinMap,
}

impl Serialize for Span {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        SpanRepr {
            source: self.source().clone(),
            target: self.target().clone(),
            apex: self.apex.clone(),
            left: self.left.clone(),
            right: self.right.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Span {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let r = SpanRepr::deserialize(d)?;
        let check = || -> Result<Span, SetError> {
            r.apex.expect_eq(r.left.dom())?;
            r.source.expect_eq(r.left.cod())?;
            r.target.expect_eq(r.right.cod())?;
            Span::new(r.left.clone(), r.right.clone())
        };
        check().map_err(D::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct FamilyRepr {
    base: FinSet,
    total: FinSet,
    proj: FinMap,
}

impl Serialize for Family {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        FamilyRepr {
            base: self.base.clone(),
            total: self.total().clone(),
            proj: self.proj.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Family {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let r = FamilyRepr::deserialize(d)?;
        r.base.expect_eq(r.proj.cod()).map_err(D::Error::custom)?;
        r.total.expect_eq(r.proj.dom()).map_err(D::Error::custom)?;
        Ok(Family::new(r.proj))
    }
}

pub fn identity_span(a: &FinSet) -> Span {
    Span {
        apex: a.clone(),
        left: FinMap::identity(a),
        right: FinMap::identity(a),
    }
}

/// Composes spans by pullback over the shared middle set.
///
/// The apex is `{(x, y) : s1.right(x) = s2.left(y)}` in lexicographic order.
pub fn compose_spans(s1: &Span, s2: &Span) -> Result<Span, SetError> {
    s1.target().expect_eq(s2.source())?;
    let by_left = group_by(s2.left.table(), s2.source().len());
    let mut labels = Vec::new();
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (x, &b) in s1.right.table.iter().enumerate() {
        for &y in &by_left[b] {
            labels.push(tuple_label(&[s1.apex.label(x), s2.apex.label(y)]));
            left.push(s1.left.table[x]);
            right.push(s2.right.table[y]);
        }
    }
    let apex = FinSet::from_generated(labels);
    Ok(Span {
        left: FinMap {
            dom: apex.clone(),
            cod: s1.source().clone(),
            table: left,
        },
        right: FinMap {
            dom: apex.clone(),
            cod: s2.target().clone(),
            table: right,
        },
        apex,
    })
}

/// Fiber cardinalities as a `|source| x |target|` matrix.
pub fn span_to_matrix(s: &Span) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; s.target().len()]; s.source().len()];
    for x in 0..s.apex.len() {
        m[s.left.table[x]][s.right.table[x]] += 1;
    }
    m
}

/// Pulls `fam` back along the left leg of `s` and pushes it forward along
/// the right leg.
pub fn apply_span_to_family(s: &Span, fam: &Family) -> Result<Family, SetError> {
    fam.base.expect_eq(s.source())?;
    let fibers = fam.fibers();
    let mut labels = Vec::new();
    let mut proj = Vec::new();
    for x in 0..s.apex.len() {
        for &z in &fibers[s.left.table[x]] {
            labels.push(tuple_label(&[s.apex.label(x), fam.total().label(z)]));
            proj.push(s.right.table[x]);
        }
    }
    let total = FinSet::from_generated(labels);
    Ok(Family {
        base: s.target().clone(),
        proj: FinMap {
            dom: total,
            cod: s.target().clone(),
            table: proj,
        },
    })
}

/// Outcome of comparing two families over the same base.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IsoOutcome {
    /// A fiber-preserving bijection from the first total set to the second.
    Witness(FinMap),
    /// The first base point whose fibers differ in size.
    Mismatch {
        base_point: String,
        left: usize,
        right: usize,
    },
}

impl IsoOutcome {
    pub fn is_iso(&self) -> bool {
        matches!(self, IsoOutcome::Witness(_))
    }
}

impl fmt::Display for IsoOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IsoOutcome::Witness(w) => write!(f, "isomorphic ({} elements)", w.dom().len()),
            IsoOutcome::Mismatch {
                base_point,
                left,
                right,
            } => write!(
                f,
                "fiber over `{base_point}` has {left} elements on one side and {right} on the other"
            ),
        }
    }
}

/// Decides whether two families are isomorphic over their common base.
///
/// In finite sets this is equality of fiber cardinalities; the witness pairs
/// up fiber elements in order.
pub fn families_isomorphic(f1: &Family, f2: &Family) -> Result<IsoOutcome, SetError> {
    f1.base.expect_eq(&f2.base)?;
    let a = f1.fibers();
    let b = f2.fibers();
    let mut table = vec![0; f1.total().len()];
    for (p, (fa, fb)) in a.iter().zip(&b).enumerate() {
        if fa.len() != fb.len() {
            return Ok(IsoOutcome::Mismatch {
                base_point: f1.base.label(p).to_string(),
                left: fa.len(),
                right: fb.len(),
            });
        }
        for (&x, &y) in fa.iter().zip(fb) {
            table[x] = y;
        }
    }
    Ok(IsoOutcome::Witness(FinMap {
        dom: f1.total().clone(),
        cod: f2.total().clone(),
        table,
    }))
}

pub(crate) fn group_by(table: &[usize], buckets: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); buckets];
    for (i, &b) in table.iter().enumerate() {
        out[b].push(i);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(labels: &[&str]) -> FinSet {
        FinSet::new(labels.iter().copied()).unwrap()
    }

    fn map(dom: &FinSet, cod: &FinSet, pairs: &[(&str, &str)]) -> FinMap {
        FinMap::from_pairs(dom.clone(), cod.clone(), pairs.iter().copied()).unwrap()
    }

    /// s1 : A <- X -> B, s2 : B <- Y -> C from the worked example.
    fn example_spans() -> (Span, Span) {
        let a = set(&["a1", "a2"]);
        let b = set(&["b1"]);
        let c = set(&["c1", "c2"]);
        let x = set(&["x1", "x2"]);
        let y = set(&["y1", "y2", "y3"]);
        let s1 = Span::new(
            map(&x, &a, &[("x1", "a1"), ("x2", "a2")]),
            map(&x, &b, &[("x1", "b1"), ("x2", "b1")]),
        )
        .unwrap();
        let s2 = Span::new(
            map(&y, &b, &[("y1", "b1"), ("y2", "b1"), ("y3", "b1")]),
            map(&y, &c, &[("y1", "c1"), ("y2", "c1"), ("y3", "c2")]),
        )
        .unwrap();
        (s1, s2)
    }

    #[test]
    fn rejects_duplicates_and_reserved_characters() {
        assert_eq!(
            FinSet::new(["a", "b", "a"]).unwrap_err(),
            SetError::DuplicateLabel("a".into())
        );
        assert!(matches!(FinSet::new(["a)"]), Err(SetError::MalformedLabel(_))));
        assert!(matches!(FinSet::new([""]), Err(SetError::MalformedLabel(_))));
        assert!(FinSet::new(["a|b", "(a|b)|c", "()", "x y"]).is_ok());
    }

    #[test]
    fn label_grammar() {
        for ok in ["a", "a|b", "(a|b)|c", "((a|b)|c)|d", "()", "s|()", "tick tock"] {
            assert!(is_well_formed(ok), "{ok}");
        }
        for bad in ["", "|", "a|", "|a", "(a", "a)", "(a)b", "a||b", ")("] {
            assert!(!is_well_formed(bad), "{bad}");
        }
    }

    #[test]
    fn tuple_labels_nest() {
        assert_eq!(tuple_label(&["a", "b"]), "a|b");
        assert_eq!(tuple_label(&["a|b", "c"]), "(a|b)|c");
        assert_eq!(tuple_label(&["x"]), "x");
        assert_eq!(tuple_label::<&str>(&[]), "()");
        assert_ne!(tuple_label(&["(a|b)", "c"]), tuple_label(&["a|b", "c"]));
        assert!(is_well_formed(&tuple_label(&["(a|b)", "c", "()"])));
    }

    #[test]
    fn identity_span_shapes() {
        let one = set(&["b1"]);
        let s = identity_span(&one);
        assert_eq!(s.apex(), &one);
        assert!(s.left().is_identity() && s.right().is_identity());
        let e = identity_span(&FinSet::empty());
        assert!(e.apex().is_empty());
        assert_eq!(span_to_matrix(&identity_span(&set(&["a", "b"]))), vec![vec![1, 0], vec![0, 1]]);
    }

    #[test]
    fn worked_composition() {
        let (s1, s2) = example_spans();
        let c = compose_spans(&s1, &s2).unwrap();
        assert_eq!(c.apex().len(), 6);
        let fam = c.as_family();
        assert_eq!(fam.fiber("a1|c1").unwrap(), vec!["x1|y1", "x1|y2"]);
        assert_eq!(span_to_matrix(&s1), vec![vec![1], vec![1]]);
        assert_eq!(span_to_matrix(&c), vec![vec![2, 1], vec![2, 1]]);
    }

    #[test]
    fn composition_rejects_mismatched_boundary() {
        let (s1, _) = example_spans();
        let err = compose_spans(&s1, &s1).unwrap_err();
        match err {
            SetError::BoundaryMismatch { left, right } => {
                assert_eq!(left, "{b1}");
                assert_eq!(right, "{a1, a2}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unit_laws_up_to_iso() {
        let (s1, s2) = example_spans();
        for s in [&s1, &s2] {
            let l = compose_spans(&identity_span(s.source()), s).unwrap();
            let r = compose_spans(s, &identity_span(s.target())).unwrap();
            for c in [l, r] {
                assert!(families_isomorphic(&c.as_family(), &s.as_family()).unwrap().is_iso());
            }
        }
    }

    #[test]
    fn apply_worked_example() {
        let (s1, _) = example_spans();
        let z = set(&["z1", "z2", "z3"]);
        let fam = Family::new(map(&z, s1.source(), &[("z1", "a1"), ("z2", "a2"), ("z3", "a2")]));
        let out = apply_span_to_family(&s1, &fam).unwrap();
        assert_eq!(out.base(), s1.target());
        assert_eq!(out.fiber_sizes(), vec![3]);
        assert_eq!(out.fiber("b1").unwrap(), vec!["x1|z1", "x2|z2", "x2|z3"]);

        let empty = Family::new(FinMap::new(FinSet::empty(), s1.source().clone(), vec![]).unwrap());
        assert!(apply_span_to_family(&s1, &empty).unwrap().total().is_empty());

        let same = apply_span_to_family(&identity_span(s1.source()), &fam).unwrap();
        assert!(families_isomorphic(&same, &fam).unwrap().is_iso());
        assert!(apply_span_to_family(&s1, &out).is_err());
    }

    #[test]
    fn isomorphism_reports_first_bad_fiber() {
        let base = set(&["p", "q"]);
        let two = set(&["u", "v"]);
        let f1 = Family::new(map(&two, &base, &[("u", "p"), ("v", "p")]));
        let f2 = Family::new(map(&two, &base, &[("u", "q"), ("v", "q")]));
        assert_eq!(
            families_isomorphic(&f1, &f2).unwrap(),
            IsoOutcome::Mismatch {
                base_point: "p".into(),
                left: 2,
                right: 0
            }
        );
        match families_isomorphic(&f1, &f1).unwrap() {
            IsoOutcome::Witness(w) => assert!(w.is_identity()),
            other => panic!("{other:?}"),
        }
        let other_base = Family::new(map(&two, &two, &[("u", "u"), ("v", "v")]));
        assert!(families_isomorphic(&f1, &other_base).is_err());
    }

    #[test]
    fn maps_validate_totality() {
        let a = set(&["a", "b"]);
        assert_eq!(
            FinMap::from_pairs(a.clone(), a.clone(), [("a", "a")]).unwrap_err(),
            SetError::NotTotal("b".into())
        );
        assert!(matches!(
            FinMap::from_pairs(a.clone(), a.clone(), [("a", "c"), ("b", "a")]),
            Err(SetError::UnknownLabel { .. })
        ));
        assert!(FinMap::new(a.clone(), a.clone(), vec![0, 2]).is_err());
        let nested = PairMap::from_nested(
            a.clone(),
            a.clone(),
            a.clone(),
            [("a", vec![("a", "b"), ("b", "b")]), ("b", vec![("a", "a")])],
        );
        assert!(matches!(nested, Err(SetError::NotTotal(_))));
    }
}
