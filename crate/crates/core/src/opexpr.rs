//! Operator expressions over `I, P, Q, J`, Laurent operators and finite-rank
//! atoms, with a rewrite-based normal form.
//!
//! On `l²(Z)`: `P` keeps indices `k >= 0`, `Q = I - P`, `(Jx)_k = x_{-k-1}`
//! and `L(a)` has block entries `a_{j-k}`.
//!
//! The normal form is a sum of terms `c · F_1 ⋯ F_m [J]` where each factor
//! `F_i` is `L(a)`, `P`, `Q` or a finite-rank block, and at most one trailing
//! `J` remains after pushing flips to the right with `J L(a) = L(ã) J`,
//! `J P = Q J` and `J K = (JKJ) J`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::linalg::CMatrix;
use crate::sexpr::{self, Sexp};
use crate::symbol::{MatrixValue, PCSymbol};
use crate::{Error, Result, C64};

/// Tolerance used when comparing symbols and finite-rank blocks in rewriting.
pub const REWRITE_TOL: f64 = 1e-14;

const ONE: C64 = C64::new(1.0, 0.0);

/// Printable provenance of a symbol inside an expression.
#[derive(Clone, Debug, PartialEq)]
pub enum SymLabel {
    Named(String),
    Const(MatrixValue),
    Flip(Box<SymLabel>),
    Adjoint(Box<SymLabel>),
    Mul(Vec<SymLabel>),
    Add(Vec<SymLabel>),
    Scale(C64, Box<SymLabel>),
}

/// A symbol together with its label.
#[derive(Clone, Debug)]
pub struct SymRef {
    pub label: SymLabel,
    pub symbol: Arc<PCSymbol>,
}

impl SymRef {
    pub fn named(name: &str, symbol: PCSymbol) -> Self {
        Self {
            label: SymLabel::Named(name.to_string()),
            symbol: Arc::new(symbol),
        }
    }

    pub fn constant(c: MatrixValue) -> Self {
        Self {
            label: SymLabel::Const(c.clone()),
            symbol: Arc::new(PCSymbol::constant(c)),
        }
    }

    pub fn dim(&self) -> usize {
        self.symbol.dim()
    }

    pub fn flip(&self) -> Self {
        let label = match &self.label {
            SymLabel::Flip(inner) => (**inner).clone(),
            SymLabel::Const(c) => SymLabel::Const(c.clone()),
            l => SymLabel::Flip(Box::new(l.clone())),
        };
        Self {
            label,
            symbol: Arc::new(self.symbol.flip()),
        }
    }

    pub fn adjoint(&self) -> Self {
        let label = match &self.label {
            SymLabel::Adjoint(inner) => (**inner).clone(),
            SymLabel::Const(c) => SymLabel::Const(c.adjoint()),
            l => SymLabel::Adjoint(Box::new(l.clone())),
        };
        Self {
            label,
            symbol: Arc::new(self.symbol.adjoint()),
        }
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        let mut parts = Vec::new();
        for l in [&self.label, &other.label] {
            match l {
                SymLabel::Mul(v) => parts.extend(v.iter().cloned()),
                l => parts.push(l.clone()),
            }
        }
        Ok(Self {
            label: SymLabel::Mul(parts),
            symbol: Arc::new(self.symbol.mul(&other.symbol)?),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut parts = Vec::new();
        for l in [&self.label, &other.label] {
            match l {
                SymLabel::Add(v) => parts.extend(v.iter().cloned()),
                l => parts.push(l.clone()),
            }
        }
        Ok(Self {
            label: SymLabel::Add(parts),
            symbol: Arc::new(self.symbol.add(&other.symbol)?),
        })
    }

    pub fn scale(&self, c: C64) -> Self {
        if c == ONE {
            return self.clone();
        }
        let label = match &self.label {
            SymLabel::Scale(c0, inner) if (c * c0 - ONE).norm() <= 1e-12 => (**inner).clone(),
            SymLabel::Scale(c0, inner) => SymLabel::Scale(c * c0, inner.clone()),
            l => SymLabel::Scale(c, Box::new(l.clone())),
        };
        Self {
            label,
            symbol: Arc::new(self.symbol.scale(c)),
        }
    }
}

/// Finite-rank operator with finitely many non-zero `d×d` blocks `(i, j)`.
#[derive(Clone, Debug)]
pub struct FiniteRank {
    d: usize,
    entries: BTreeMap<(i64, i64), MatrixValue>,
}

impl FiniteRank {
    pub fn new(d: usize, entries: BTreeMap<(i64, i64), MatrixValue>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument(
                "block dimension must be positive".into(),
            ));
        }
        for m in entries.values() {
            if m.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: m.dim(),
                });
            }
        }
        Ok(Self::pruned(d, entries))
    }

    pub fn zero(d: usize) -> Self {
        Self {
            d,
            entries: BTreeMap::new(),
        }
    }

    fn pruned(d: usize, mut entries: BTreeMap<(i64, i64), MatrixValue>) -> Self {
        entries.retain(|_, m| !m.is_zero(1e-15));
        Self { d, entries }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn entries(&self) -> &BTreeMap<(i64, i64), MatrixValue> {
        &self.entries
    }

    pub fn get(&self, i: i64, j: i64) -> Option<&MatrixValue> {
        self.entries.get(&(i, j))
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest `|index|` used, counting `-k-1` as `k` so that the support is
    /// contained in `Z_{support()}`.
    pub fn support(&self) -> i64 {
        self.entries
            .keys()
            .flat_map(|(i, j)| [*i, *j])
            .map(|k| if k < 0 { -k } else { k + 1 })
            .max()
            .unwrap_or(0)
    }

    fn map_entries(
        &self,
        f: impl Fn(i64, i64, &MatrixValue) -> Option<((i64, i64), MatrixValue)>,
    ) -> Self {
        let mut out = BTreeMap::new();
        for (&(i, j), m) in &self.entries {
            if let Some((key, v)) = f(i, j, m) {
                out.insert(key, v);
            }
        }
        Self::pruned(self.d, out)
    }

    pub fn scale(&self, c: C64) -> Self {
        self.map_entries(|i, j, m| Some(((i, j), m.scale(c))))
    }

    pub fn adjoint(&self) -> Self {
        self.map_entries(|i, j, m| Some(((j, i), m.adjoint())))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.d)?;
        let mut out = self.entries.clone();
        for (k, m) in &other.entries {
            out.entry(*k)
                .and_modify(|x| *x = &*x + m)
                .or_insert_with(|| m.clone());
        }
        Ok(Self::pruned(self.d, out))
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.d)?;
        let mut out: BTreeMap<(i64, i64), MatrixValue> = BTreeMap::new();
        for (&(i, k), a) in &self.entries {
            for (&(k2, j), b) in other.entries.range((k, i64::MIN)..=(k, i64::MAX)) {
                debug_assert_eq!(k, k2);
                let p = a * b;
                out.entry((i, j)).and_modify(|x| *x = &*x + &p).or_insert(p);
            }
        }
        Ok(Self::pruned(self.d, out))
    }

    /// `P K`, `Q K`, `J K` and their right-hand versions.
    fn left(&self, g: Gen) -> Self {
        match g {
            Gen::P => self.map_entries(|i, j, m| (i >= 0).then(|| ((i, j), m.clone()))),
            Gen::Q => self.map_entries(|i, j, m| (i < 0).then(|| ((i, j), m.clone()))),
            Gen::J => self.map_entries(|i, j, m| Some(((-i - 1, j), m.clone()))),
        }
    }

    fn right(&self, g: Gen) -> Self {
        match g {
            Gen::P => self.map_entries(|i, j, m| (j >= 0).then(|| ((i, j), m.clone()))),
            Gen::Q => self.map_entries(|i, j, m| (j < 0).then(|| ((i, j), m.clone()))),
            Gen::J => self.map_entries(|i, j, m| Some(((i, -j - 1), m.clone()))),
        }
    }

    /// `J K J`.
    pub fn flip_conj(&self) -> Self {
        self.map_entries(|i, j, m| Some(((-i - 1, -j - 1), m.clone())))
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        if self.d != other.d {
            return false;
        }
        let zero = MatrixValue::zeros(self.d);
        self.entries.keys().chain(other.entries.keys()).all(|k| {
            let a = self.entries.get(k).unwrap_or(&zero);
            let b = other.entries.get(k).unwrap_or(&zero);
            a.approx_eq(b, tol)
        })
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if self.d != d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: d,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Gen {
    P,
    Q,
    J,
}

/// Operator expression tree.
#[derive(Clone, Debug)]
pub enum OpExpr {
    Ident,
    Proj,
    CoProj,
    Flip,
    Laurent(SymRef),
    FiniteRank(FiniteRank),
    Sum(Vec<OpExpr>),
    Prod(Vec<OpExpr>),
    Scale(C64, Box<OpExpr>),
    Adjoint(Box<OpExpr>),
}

impl OpExpr {
    pub fn laurent(name: &str, symbol: PCSymbol) -> Self {
        OpExpr::Laurent(SymRef::named(name, symbol))
    }

    pub fn sum(items: Vec<OpExpr>) -> Self {
        OpExpr::Sum(items)
    }

    pub fn prod(items: Vec<OpExpr>) -> Self {
        OpExpr::Prod(items)
    }

    pub fn scale(c: C64, e: OpExpr) -> Self {
        OpExpr::Scale(c, Box::new(e))
    }

    pub fn zero() -> Self {
        OpExpr::Sum(Vec::new())
    }

    /// Block dimension of the first Laurent or finite-rank leaf.
    pub fn dim(&self) -> Option<usize> {
        match self {
            OpExpr::Ident | OpExpr::Proj | OpExpr::CoProj | OpExpr::Flip => None,
            OpExpr::Laurent(s) => Some(s.dim()),
            OpExpr::FiniteRank(k) => Some(k.dim()),
            OpExpr::Sum(v) | OpExpr::Prod(v) => v.iter().find_map(|e| e.dim()),
            OpExpr::Scale(_, e) | OpExpr::Adjoint(e) => e.dim(),
        }
    }

    /// Check that every leaf shares one block dimension.
    pub fn validate(&self) -> Result<Option<usize>> {
        fn walk(e: &OpExpr, d: &mut Option<usize>) -> Result<()> {
            let mut check = |found: usize| match *d {
                Some(exp) if exp != found => Err(Error::DimensionMismatch {
                    expected: exp,
                    found,
                }),
                _ => {
                    *d = Some(found);
                    Ok(())
                }
            };
            match e {
                OpExpr::Laurent(s) => check(s.dim()),
                OpExpr::FiniteRank(k) => check(k.dim()),
                OpExpr::Sum(v) | OpExpr::Prod(v) => v.iter().try_for_each(|x| walk(x, d)),
                OpExpr::Scale(c, x) => {
                    if !(c.re.is_finite() && c.im.is_finite()) {
                        return Err(Error::NonFinite("scale factor".into()));
                    }
                    walk(x, d)
                }
                OpExpr::Adjoint(x) => walk(x, d),
                _ => Ok(()),
            }
        }
        let mut d = None;
        walk(self, &mut d)?;
        Ok(d)
    }

    pub fn contains_flip(&self) -> bool {
        match self {
            OpExpr::Flip => true,
            OpExpr::Sum(v) | OpExpr::Prod(v) => v.iter().any(|e| e.contains_flip()),
            OpExpr::Scale(_, e) | OpExpr::Adjoint(e) => e.contains_flip(),
            _ => false,
        }
    }

    /// All Laurent symbols occurring in the tree.
    pub fn symbols(&self) -> Vec<&PCSymbol> {
        let mut out = Vec::new();
        fn walk<'a>(e: &'a OpExpr, out: &mut Vec<&'a PCSymbol>) {
            match e {
                OpExpr::Laurent(s) => out.push(&s.symbol),
                OpExpr::Sum(v) | OpExpr::Prod(v) => v.iter().for_each(|x| walk(x, out)),
                OpExpr::Scale(_, x) | OpExpr::Adjoint(x) => walk(x, out),
                _ => {}
            }
        }
        walk(self, &mut out);
        out
    }
}

// ---------------------------------------------------------------------------
// Normal form

/// Factor of a normal-form word.
#[derive(Clone, Debug)]
pub enum Factor {
    L(SymRef),
    P,
    Q,
    K(FiniteRank),
}

impl Factor {
    fn kind(&self) -> char {
        match self {
            Factor::L(_) => 'L',
            Factor::P => 'P',
            Factor::Q => 'Q',
            Factor::K(_) => 'K',
        }
    }

    fn is_slot(&self) -> bool {
        matches!(self, Factor::L(_) | Factor::K(_))
    }

    fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        match (self, other) {
            (Factor::L(a), Factor::L(b)) => a.symbol.approx_eq(&b.symbol, tol),
            (Factor::K(a), Factor::K(b)) => a.approx_eq(b, tol),
            (Factor::P, Factor::P) | (Factor::Q, Factor::Q) => true,
            _ => false,
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            Factor::L(s) => s.symbol.is_zero(),
            Factor::K(k) => k.is_zero(),
            _ => false,
        }
    }

    /// First entry, in a fixed order, that is not negligible.
    fn pivot(&self) -> Option<C64> {
        let mats: Vec<CMatrix> = match self {
            Factor::L(s) => s
                .symbol
                .pieces()
                .into_iter()
                .flat_map(|p| p.poly.into_values().map(MatrixValue::into_matrix))
                .collect(),
            Factor::K(k) => k
                .entries()
                .values()
                .map(|m| m.as_matrix().clone())
                .collect(),
            _ => return None,
        };
        first_significant(&mats)
    }

    fn scale(&self, c: C64) -> Self {
        match self {
            Factor::L(s) => Factor::L(s.scale(c)),
            Factor::K(k) => Factor::K(k.scale(c)),
            f => f.clone(),
        }
    }

    fn add(&self, other: &Self) -> Result<Self> {
        match (self, other) {
            (Factor::L(a), Factor::L(b)) => Ok(Factor::L(a.add(b)?)),
            (Factor::K(a), Factor::K(b)) => Ok(Factor::K(a.add(b)?)),
            _ => Err(Error::InvalidArgument("cannot add non-slot factors".into())),
        }
    }

    fn to_expr(&self) -> OpExpr {
        match self {
            Factor::L(s) => OpExpr::Laurent(s.clone()),
            Factor::P => OpExpr::Proj,
            Factor::Q => OpExpr::CoProj,
            Factor::K(k) => OpExpr::FiniteRank(k.clone()),
        }
    }
}

fn first_significant(mats: &[CMatrix]) -> Option<C64> {
    let max = mats
        .iter()
        .flat_map(|m| m.iter().map(|z| z.norm()))
        .fold(0.0, f64::max);
    if max == 0.0 {
        return None;
    }
    mats.iter()
        .flat_map(|m| m.iter().copied())
        .find(|z| z.norm() > 1e-8 * max)
}

/// One normal-form term `coef · word · J^flip`.
#[derive(Clone, Debug)]
pub struct Term {
    pub coef: C64,
    pub word: Vec<Factor>,
    pub flip: bool,
}

impl Term {
    fn key(&self) -> (bool, String) {
        (self.flip, self.word.iter().map(Factor::kind).collect())
    }

    fn to_expr(&self) -> OpExpr {
        let mut word = self.word.clone();
        let mut coef = self.coef;
        if let Some(slot) = word.iter_mut().find(|f| f.is_slot()) {
            *slot = slot.scale(coef);
            coef = ONE;
        }
        let mut items: Vec<OpExpr> = word.iter().map(Factor::to_expr).collect();
        if self.flip {
            items.push(OpExpr::Flip);
        }
        let body = match items.len() {
            0 => OpExpr::Ident,
            1 => items.pop().unwrap(),
            _ => OpExpr::Prod(items),
        };
        if coef == ONE {
            body
        } else {
            OpExpr::scale(coef, body)
        }
    }

    fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.flip == other.flip
            && (self.coef - other.coef).norm() <= tol
            && self.word.len() == other.word.len()
            && self
                .word
                .iter()
                .zip(&other.word)
                .all(|(a, b)| a.approx_eq(b, tol))
    }
}

/// Sum of terms in normal form.
#[derive(Clone, Debug)]
pub struct NormalForm {
    pub dim: Option<usize>,
    pub terms: Vec<Term>,
}

/// Raw generator in an expanded product, before rewriting.
#[derive(Clone, Debug)]
enum Raw {
    L(SymRef),
    P,
    Q,
    J,
    K(FiniteRank),
}

fn expand(e: &OpExpr) -> Vec<(C64, Vec<Raw>)> {
    match e {
        OpExpr::Ident => vec![(ONE, vec![])],
        OpExpr::Proj => vec![(ONE, vec![Raw::P])],
        OpExpr::CoProj => vec![(ONE, vec![Raw::Q])],
        OpExpr::Flip => vec![(ONE, vec![Raw::J])],
        OpExpr::Laurent(s) => vec![(ONE, vec![Raw::L(s.clone())])],
        OpExpr::FiniteRank(k) => vec![(ONE, vec![Raw::K(k.clone())])],
        OpExpr::Sum(v) => v.iter().flat_map(expand).collect(),
        OpExpr::Prod(v) => {
            let mut acc = vec![(ONE, Vec::new())];
            for f in v {
                let parts = expand(f);
                let mut next = Vec::with_capacity(acc.len() * parts.len());
                for (c1, w1) in &acc {
                    for (c2, w2) in &parts {
                        let mut w = w1.clone();
                        w.extend(w2.iter().cloned());
                        next.push((c1 * c2, w));
                    }
                }
                acc = next;
            }
            acc
        }
        OpExpr::Scale(c, x) => expand(x).into_iter().map(|(c0, w)| (c * c0, w)).collect(),
        OpExpr::Adjoint(x) => expand(x)
            .into_iter()
            .map(|(c, w)| {
                let w = w
                    .into_iter()
                    .rev()
                    .map(|g| match g {
                        Raw::L(s) => Raw::L(s.adjoint()),
                        Raw::K(k) => Raw::K(k.adjoint()),
                        g => g,
                    })
                    .collect();
                (c.conj(), w)
            })
            .collect(),
    }
}

/// Push a factor onto a reduced word, applying local rules. Returns `false`
/// when the word becomes zero.
fn push_factor(word: &mut Vec<Factor>, coef: &mut C64, f: Factor, fold: bool) -> Result<bool> {
    if let Factor::L(s) = &f {
        if s.symbol.is_zero() {
            return Ok(false);
        }
        if fold {
            if let Some(c) = s
                .symbol
                .as_constant()
                .and_then(|m| m.as_scalar(REWRITE_TOL))
            {
                *coef *= c;
                return Ok(true);
            }
        }
    }
    if let Factor::K(k) = &f {
        if k.is_zero() {
            return Ok(false);
        }
    }
    let Some(last) = word.last() else {
        word.push(f);
        return Ok(true);
    };
    let merged = match (last, &f) {
        (Factor::L(a), Factor::L(b)) => Some(Factor::L(a.mul(b)?)),
        (Factor::P, Factor::P) => Some(Factor::P),
        (Factor::Q, Factor::Q) => Some(Factor::Q),
        (Factor::P, Factor::Q) | (Factor::Q, Factor::P) => return Ok(false),
        (Factor::P, Factor::K(k)) => Some(Factor::K(k.left(Gen::P))),
        (Factor::Q, Factor::K(k)) => Some(Factor::K(k.left(Gen::Q))),
        (Factor::K(k), Factor::P) => Some(Factor::K(k.right(Gen::P))),
        (Factor::K(k), Factor::Q) => Some(Factor::K(k.right(Gen::Q))),
        (Factor::K(a), Factor::K(b)) => Some(Factor::K(a.mul(b)?)),
        _ => None,
    };
    match merged {
        Some(m) => {
            word.pop();
            // The merged factor may now interact with its new left neighbour.
            push_factor(word, coef, m, fold)
        }
        None => {
            word.push(f);
            Ok(true)
        }
    }
}

fn reduce(coef: C64, raw: Vec<Raw>, fold: bool) -> Result<Option<Term>> {
    let mut word = Vec::new();
    let mut coef = coef;
    let mut flip = false;
    for g in raw {
        let f = match g {
            Raw::J => {
                flip = !flip;
                continue;
            }
            Raw::P => {
                if flip {
                    Factor::Q
                } else {
                    Factor::P
                }
            }
            Raw::Q => {
                if flip {
                    Factor::P
                } else {
                    Factor::Q
                }
            }
            Raw::L(s) => Factor::L(if flip { s.flip() } else { s }),
            Raw::K(k) => Factor::K(if flip { k.flip_conj() } else { k }),
        };
        if !push_factor(&mut word, &mut coef, f, fold)? {
            return Ok(None);
        }
    }
    // X K Y J = X (K J) (J Y J): a trailing flip folds into the last K.
    if flip {
        if let Some(at) = word.iter().rposition(|f| matches!(f, Factor::K(_))) {
            let tail: Vec<Factor> = word.split_off(at + 1);
            let Some(Factor::K(k)) = word.pop() else {
                unreachable!()
            };
            let mut rest = vec![Factor::K(k.right(Gen::J))];
            rest.extend(tail.iter().map(|f| match f {
                Factor::L(s) => Factor::L(s.flip()),
                Factor::P => Factor::Q,
                Factor::Q => Factor::P,
                Factor::K(k) => Factor::K(k.flip_conj()),
            }));
            for f in rest {
                if !push_factor(&mut word, &mut coef, f, fold)? {
                    return Ok(None);
                }
            }
            flip = false;
        }
    }
    finish_term(Term { coef, word, flip })
}

/// Pin every slot to a unit pivot and collect the scalars in `coef`, so
/// equal operators get equal words.
fn finish_term(mut t: Term) -> Result<Option<Term>> {
    if t.coef.norm() <= 1e-15 {
        return Ok(None);
    }
    for f in t.word.iter_mut() {
        if let Some(r) = f.pivot() {
            if r != ONE {
                *f = f.scale(ONE / r);
                t.coef *= r;
            }
        }
    }
    if t.word.iter().any(Factor::is_zero) {
        return Ok(None);
    }
    Ok(Some(t))
}

/// Merge two terms with equal shape that differ in at most one slot.
fn try_combine(a: &Term, b: &Term, fold: bool) -> Result<Option<Term>> {
    if a.key() != b.key() {
        return Ok(if fold {
            merge_complementary(a, b)
        } else {
            None
        });
    }
    let slots: Vec<usize> = (0..a.word.len()).filter(|&i| a.word[i].is_slot()).collect();
    if slots.is_empty() {
        return Ok(Some(Term {
            coef: a.coef + b.coef,
            word: a.word.clone(),
            flip: a.flip,
        }));
    }
    let differing: Vec<usize> = slots
        .iter()
        .copied()
        .filter(|&i| !a.word[i].approx_eq(&b.word[i], REWRITE_TOL))
        .collect();
    let at = match differing.as_slice() {
        [] => {
            return Ok(Some(Term {
                coef: a.coef + b.coef,
                word: a.word.clone(),
                flip: a.flip,
            }))
        }
        [i] => *i,
        _ => return Ok(None),
    };
    let mut word = a.word.clone();
    word[at] = a.word[at].scale(a.coef).add(&b.word[at].scale(b.coef))?;
    Ok(Some(Term {
        coef: ONE,
        word,
        flip: a.flip,
    }))
}

/// `X P Y + X Q Y = X Y` for equal coefficients and equal slots.
fn merge_complementary(a: &Term, b: &Term) -> Option<Term> {
    if a.flip != b.flip || a.word.len() != b.word.len() || (a.coef - b.coef).norm() > REWRITE_TOL {
        return None;
    }
    let mut at = None;
    for (i, (x, y)) in a.word.iter().zip(&b.word).enumerate() {
        match (x, y) {
            (Factor::P, Factor::Q) | (Factor::Q, Factor::P) if at.is_none() => at = Some(i),
            _ if x.approx_eq(y, REWRITE_TOL) => {}
            _ => return None,
        }
    }
    let mut word = a.word.clone();
    word.remove(at?);
    Some(Term {
        coef: a.coef,
        word,
        flip: a.flip,
    })
}

/// Re-reduce a term whose slots may have changed (e.g. a symbol sum that
/// became a scalar constant).
fn rereduce(t: Term, fold: bool) -> Result<Option<Term>> {
    let mut raw = to_raw(&t.word);
    if t.flip {
        raw.push(Raw::J);
    }
    reduce(t.coef, raw, fold)
}

fn combine_all(mut terms: Vec<Term>, fold: bool) -> Result<Vec<Term>> {
    loop {
        terms.sort_by_key(|t| t.key());
        let mut merged = false;
        'outer: for i in 0..terms.len() {
            for j in i + 1..terms.len() {
                if let Some(t) = try_combine(&terms[i], &terms[j], fold)? {
                    terms.remove(j);
                    match rereduce(t, fold)? {
                        Some(t) => terms[i] = t,
                        None => {
                            terms.remove(i);
                        }
                    }
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            break;
        }
    }
    terms.retain(|t| t.coef.norm() > 1e-15);
    Ok(terms)
}

fn to_raw(word: &[Factor]) -> Vec<Raw> {
    word.iter()
        .map(|f| match f {
            Factor::L(s) => Raw::L(s.clone()),
            Factor::P => Raw::P,
            Factor::Q => Raw::Q,
            Factor::K(k) => Raw::K(k.clone()),
        })
        .collect()
}

impl NormalForm {
    pub fn of(e: &OpExpr) -> Result<Self> {
        let dim = e.validate()?;
        let mut terms = Vec::new();
        for (c, raw) in expand(e) {
            if let Some(t) = reduce(c, raw, true)? {
                terms.push(t);
            }
        }
        Ok(Self {
            dim,
            terms: combine_all(terms, true)?,
        })
    }

    /// Insert `P + Q` at both ends of every word, turn bare coefficients
    /// into constant Laurent factors and recombine. Two expressions such as
    /// `J` and `L(1)JP + L(1)JQ` share the same split form.
    pub fn split_ends(&self) -> Result<Self> {
        let d = self.dim.unwrap_or(1);
        let mut terms = Vec::new();
        for t in &self.terms {
            let has_slot = t.word.iter().any(Factor::is_slot);
            for left in [Raw::P, Raw::Q] {
                for right in [Raw::P, Raw::Q] {
                    let mut raw = vec![left.clone()];
                    let mut coef = t.coef;
                    if !has_slot {
                        raw.push(Raw::L(SymRef::constant(MatrixValue::scalar(d, coef))));
                        coef = ONE;
                    }
                    raw.extend(to_raw(&t.word));
                    raw.push(right);
                    if t.flip {
                        raw.push(Raw::J);
                    }
                    if let Some(t) = reduce(coef, raw, false)? {
                        terms.push(t);
                    }
                }
            }
        }
        Ok(Self {
            dim: self.dim,
            terms: combine_all(terms, false)?,
        })
    }

    pub fn to_expr(&self) -> OpExpr {
        let mut items: Vec<OpExpr> = self.terms.iter().map(Term::to_expr).collect();
        let has_carrier = self
            .terms
            .iter()
            .any(|t| t.word.iter().any(Factor::is_slot));
        if let (Some(d), false, Some(first)) = (self.dim, has_carrier, items.first_mut()) {
            if d > 1 {
                // Keep the block dimension visible when all symbols folded away.
                let id = OpExpr::Laurent(SymRef::constant(MatrixValue::identity(d)));
                *first = OpExpr::Prod(vec![id, first.clone()]);
            }
        }
        match items.len() {
            1 => items.pop().unwrap(),
            _ => OpExpr::Sum(items),
        }
    }

    /// Order-insensitive term-by-term comparison.
    pub fn terms_approx_eq(&self, other: &Self, tol: f64) -> bool {
        if self.terms.len() != other.terms.len() {
            return false;
        }
        let mut used = vec![false; other.terms.len()];
        self.terms.iter().all(|t| {
            match (0..other.terms.len()).find(|&j| !used[j] && t.approx_eq(&other.terms[j], tol)) {
                Some(j) => {
                    used[j] = true;
                    true
                }
                None => false,
            }
        })
    }

    /// Comparison of the split forms.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> Result<bool> {
        Ok(self
            .split_ends()?
            .terms_approx_eq(&other.split_ends()?, tol))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Rewrite `e` into its normal form.
pub fn normalize(e: &OpExpr) -> Result<OpExpr> {
    Ok(NormalForm::of(e)?.to_expr())
}

/// Normalized adjoint.
pub fn adjoint(e: &OpExpr) -> Result<OpExpr> {
    normalize(&OpExpr::Adjoint(Box::new(e.clone())))
}

/// Equality of normal forms up to `tol`.
pub fn approx_eq(a: &OpExpr, b: &OpExpr, tol: f64) -> Result<bool> {
    NormalForm::of(a)?.approx_eq(&NormalForm::of(b)?, tol)
}

/// Coefficients of `L(a)P + L(b)Q + L(c)JP + L(d)JQ + K`.
#[derive(Clone, Debug)]
pub struct Canonical {
    pub a: PCSymbol,
    pub b: PCSymbol,
    pub c: PCSymbol,
    pub d: PCSymbol,
    pub k: FiniteRank,
}

impl Canonical {
    pub fn to_expr(&self) -> OpExpr {
        let l = |name: &str, s: &PCSymbol| OpExpr::laurent(name, s.clone());
        let mut items = vec![
            OpExpr::prod(vec![l("a", &self.a), OpExpr::Proj]),
            OpExpr::prod(vec![l("b", &self.b), OpExpr::CoProj]),
            OpExpr::prod(vec![l("c", &self.c), OpExpr::Flip, OpExpr::Proj]),
            OpExpr::prod(vec![l("d", &self.d), OpExpr::Flip, OpExpr::CoProj]),
        ];
        if !self.k.is_zero() {
            items.push(OpExpr::FiniteRank(self.k.clone()));
        }
        OpExpr::Sum(items)
    }
}

/// Read off the canonical coefficients, or `None` when some term of the
/// normal form has a different shape.
pub fn canonical_form(e: &OpExpr) -> Result<Option<Canonical>> {
    let nf = NormalForm::of(e)?;
    let d = nf.dim.unwrap_or(1);
    let zero = PCSymbol::zero(d);
    let mut acc = [zero.clone(), zero.clone(), zero.clone(), zero];
    let mut k = FiniteRank::zero(d);
    for t in &nf.terms {
        let (sym, rest) = match t.word.first() {
            Some(Factor::L(s)) => ((*s.symbol).clone(), &t.word[1..]),
            _ => (PCSymbol::scalar(d, t.coef), &t.word[..]),
        };
        let sym = if matches!(t.word.first(), Some(Factor::L(_))) {
            sym.scale(t.coef)
        } else {
            sym
        };
        // Slots: 0 = a (·P), 1 = b (·Q), 2 = c (·JP = ·QJ), 3 = d (·JQ = ·PJ).
        let targets: &[usize] = match (rest, t.flip) {
            ([], false) => &[0, 1],
            ([Factor::P], false) => &[0],
            ([Factor::Q], false) => &[1],
            ([], true) => &[2, 3],
            ([Factor::Q], true) => &[2],
            ([Factor::P], true) => &[3],
            ([Factor::K(kk)], false) if !matches!(t.word.first(), Some(Factor::L(_))) => {
                k = k.add(&kk.scale(t.coef))?;
                &[]
            }
            _ => return Ok(None),
        };
        for &i in targets {
            acc[i] = acc[i].add(&sym)?;
        }
    }
    let [a, b, c, dd] = acc;
    Ok(Some(Canonical { a, b, c, d: dd, k }))
}

// ---------------------------------------------------------------------------
// Text format

/// Lookup table for named symbols.
pub type SymbolTable = BTreeMap<String, PCSymbol>;

fn fmt_complex(z: C64) -> Sexp {
    if z.im == 0.0 {
        Sexp::Num(z.re)
    } else {
        Sexp::Vector(vec![Sexp::Num(z.re), Sexp::Num(z.im)])
    }
}

fn fmt_matrix(m: &MatrixValue) -> Sexp {
    if m.dim() == 1 {
        return fmt_complex(m.as_matrix()[(0, 0)]);
    }
    let d = m.dim();
    Sexp::Vector(
        (0..d)
            .map(|i| {
                Sexp::Vector(
                    (0..d)
                        .map(|j| {
                            let z = m.as_matrix()[(i, j)];
                            Sexp::Vector(vec![Sexp::Num(z.re), Sexp::Num(z.im)])
                        })
                        .collect(),
                )
            })
            .collect(),
    )
}

fn list(head: &str, rest: Vec<Sexp>) -> Sexp {
    let mut v = vec![Sexp::Atom(head.to_string())];
    v.extend(rest);
    Sexp::List(v)
}

impl SymLabel {
    pub fn to_sexp(&self) -> Sexp {
        match self {
            SymLabel::Named(n) => Sexp::Str(n.clone()),
            SymLabel::Const(m) => list("const", vec![fmt_matrix(m)]),
            SymLabel::Flip(x) => list("flip", vec![x.to_sexp()]),
            SymLabel::Adjoint(x) => list("adjoint", vec![x.to_sexp()]),
            SymLabel::Mul(v) => list("mul", v.iter().map(|x| x.to_sexp()).collect()),
            SymLabel::Add(v) => list("add", v.iter().map(|x| x.to_sexp()).collect()),
            SymLabel::Scale(c, x) => list("scale", vec![fmt_complex(*c), x.to_sexp()]),
        }
    }
}

impl FiniteRank {
    pub fn to_sexp(&self) -> Sexp {
        list(
            "finite-rank",
            self.entries
                .iter()
                .map(|(&(i, j), m)| {
                    list(
                        "entry",
                        vec![Sexp::Num(i as f64), Sexp::Num(j as f64), fmt_matrix(m)],
                    )
                })
                .collect(),
        )
    }
}

impl OpExpr {
    pub fn to_sexp(&self) -> Sexp {
        match self {
            OpExpr::Ident => Sexp::Atom("I".into()),
            OpExpr::Proj => Sexp::Atom("P".into()),
            OpExpr::CoProj => Sexp::Atom("Q".into()),
            OpExpr::Flip => Sexp::Atom("J".into()),
            OpExpr::Laurent(s) => list("laurent", vec![s.label.to_sexp()]),
            OpExpr::FiniteRank(k) => k.to_sexp(),
            OpExpr::Sum(v) => list("sum", v.iter().map(|e| e.to_sexp()).collect()),
            OpExpr::Prod(v) => list("prod", v.iter().map(|e| e.to_sexp()).collect()),
            OpExpr::Scale(c, e) => list("scale", vec![fmt_complex(*c), e.to_sexp()]),
            OpExpr::Adjoint(e) => list("adjoint", vec![e.to_sexp()]),
        }
    }
}

impl fmt::Display for OpExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_sexp())
    }
}

pub fn parse_complex(s: &Sexp) -> Result<C64> {
    match s {
        Sexp::Num(x) => Ok(C64::new(*x, 0.0)),
        Sexp::Vector(v) => match v.as_slice() {
            [Sexp::Num(re), Sexp::Num(im)] => Ok(C64::new(*re, *im)),
            _ => Err(Error::Parse(format!("expected [re, im], found {s}"))),
        },
        _ => Err(Error::Parse(format!(
            "expected a complex number, found {s}"
        ))),
    }
}

/// Scalar, `[re, im]`, or `[[[re, im], ...], ...]` with block dimension `d`.
pub fn parse_matrix(s: &Sexp, d: Option<usize>) -> Result<MatrixValue> {
    if let Ok(z) = parse_complex(s) {
        return Ok(MatrixValue::scalar(d.unwrap_or(1), z));
    }
    let Sexp::Vector(rows) = s else {
        return Err(Error::Parse(format!("expected a matrix, found {s}")));
    };
    let rows = rows
        .iter()
        .map(|r| match r {
            Sexp::Vector(v) => v.iter().map(parse_complex).collect::<Result<Vec<_>>>(),
            _ => Err(Error::Parse(format!("expected a matrix row, found {r}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let m = MatrixValue::from_rows(&rows)?;
    if let Some(d) = d {
        if m.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: m.dim(),
            });
        }
    }
    Ok(m)
}

fn arity(head: &str, rest: &[Sexp], n: usize) -> Result<()> {
    if rest.len() != n {
        return Err(Error::Parse(format!(
            "`{head}` takes {n} argument(s), got {}",
            rest.len()
        )));
    }
    Ok(())
}

pub fn parse_symref(s: &Sexp, table: &SymbolTable) -> Result<SymRef> {
    if let Sexp::Str(name) = s {
        let sym = table
            .get(name)
            .ok_or_else(|| Error::UnknownOperator(format!("symbol `{name}` is not defined")))?;
        return Ok(SymRef::named(name, sym.clone()));
    }
    let (head, rest) = s
        .head()
        .ok_or_else(|| Error::Parse(format!("expected a symbol reference, found {s}")))?;
    match head {
        "const" => {
            arity(head, rest, 1)?;
            Ok(SymRef::constant(parse_matrix(&rest[0], None)?))
        }
        "flip" => {
            arity(head, rest, 1)?;
            Ok(parse_symref(&rest[0], table)?.flip())
        }
        "adjoint" => {
            arity(head, rest, 1)?;
            Ok(parse_symref(&rest[0], table)?.adjoint())
        }
        "scale" => {
            arity(head, rest, 2)?;
            Ok(parse_symref(&rest[1], table)?.scale(parse_complex(&rest[0])?))
        }
        "mul" | "add" => {
            let mut it = rest.iter();
            let first = it
                .next()
                .ok_or_else(|| Error::Parse(format!("`{head}` needs arguments")))?;
            let mut acc = parse_symref(first, table)?;
            for x in it {
                let y = parse_symref(x, table)?;
                acc = if head == "mul" {
                    acc.mul(&y)?
                } else {
                    acc.add(&y)?
                };
            }
            Ok(acc)
        }
        _ => Err(Error::Parse(format!("unknown symbol form `{head}`"))),
    }
}

pub fn parse_finite_rank(rest: &[Sexp]) -> Result<FiniteRank> {
    let mut entries: BTreeMap<(i64, i64), MatrixValue> = BTreeMap::new();
    let mut d = None;
    for e in rest {
        let (h, args) = e
            .head()
            .filter(|(h, _)| *h == "entry")
            .ok_or_else(|| Error::Parse(format!("expected (entry i j M), found {e}")))?;
        arity(h, args, 3)?;
        let idx = |s: &Sexp| match s {
            Sexp::Num(x) if x.fract() == 0.0 => Ok(*x as i64),
            _ => Err(Error::Parse(format!(
                "expected an integer index, found {s}"
            ))),
        };
        let (i, j) = (idx(&args[0])?, idx(&args[1])?);
        let m = parse_matrix(&args[2], d)?;
        d = Some(m.dim());
        entries
            .entry((i, j))
            .and_modify(|x| *x = &*x + &m)
            .or_insert(m);
    }
    FiniteRank::new(d.unwrap_or(1), entries)
}

/// Parse a parsed s-expression into an operator expression.
pub fn from_sexp(s: &Sexp, table: &SymbolTable) -> Result<OpExpr> {
    match s {
        Sexp::Atom(a) => match a.as_str() {
            "I" => Ok(OpExpr::Ident),
            "P" => Ok(OpExpr::Proj),
            "Q" => Ok(OpExpr::CoProj),
            "J" => Ok(OpExpr::Flip),
            _ => Err(Error::UnknownOperator(a.clone())),
        },
        _ => {
            let (head, rest) = s
                .head()
                .ok_or_else(|| Error::Parse(format!("expected an operator, found {s}")))?;
            match head {
                "laurent" => {
                    arity(head, rest, 1)?;
                    Ok(OpExpr::Laurent(parse_symref(&rest[0], table)?))
                }
                "finite-rank" => Ok(OpExpr::FiniteRank(parse_finite_rank(rest)?)),
                "sum" => Ok(OpExpr::Sum(
                    rest.iter()
                        .map(|x| from_sexp(x, table))
                        .collect::<Result<_>>()?,
                )),
                "prod" => Ok(OpExpr::Prod(
                    rest.iter()
                        .map(|x| from_sexp(x, table))
                        .collect::<Result<_>>()?,
                )),
                "scale" => {
                    arity(head, rest, 2)?;
                    Ok(OpExpr::scale(
                        parse_complex(&rest[0])?,
                        from_sexp(&rest[1], table)?,
                    ))
                }
                "adjoint" => {
                    arity(head, rest, 1)?;
                    Ok(OpExpr::Adjoint(Box::new(from_sexp(&rest[0], table)?)))
                }
                _ => Err(Error::UnknownOperator(head.to_string())),
            }
        }
    }
}

/// Parse the prefix text format.
pub fn parse(src: &str, table: &SymbolTable) -> Result<OpExpr> {
    let e = from_sexp(&sexpr::parse(src)?, table)?;
    e.validate()?;
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn table() -> SymbolTable {
        let mut t = SymbolTable::new();
        t.insert("chi".into(), PCSymbol::chi_plus(1));
        t.insert("t".into(), PCSymbol::monomial(1, MatrixValue::identity(1)));
        t.insert(
            "w".into(),
            PCSymbol::indicator(1, 0.4, 2.5)
                .unwrap()
                .add(&PCSymbol::monomial(-2, MatrixValue::scalar(1, c(0.5, 1.0))))
                .unwrap(),
        );
        t
    }

    fn nf_eq(a: &OpExpr, b: &OpExpr) -> bool {
        approx_eq(a, b, 1e-13).unwrap()
    }

    #[test]
    fn adjoint_of_generators() {
        let t = table();
        assert!(nf_eq(&adjoint(&OpExpr::Proj).unwrap(), &OpExpr::Proj));
        assert!(nf_eq(&adjoint(&OpExpr::Flip).unwrap(), &OpExpr::Flip));
        let a = parse(r#"(laurent "w")"#, &t).unwrap();
        let a_star = OpExpr::laurent("w*", t["w"].adjoint());
        assert!(nf_eq(&adjoint(&a).unwrap(), &a_star));
        let ja = OpExpr::prod(vec![OpExpr::Flip, a.clone()]);
        let expected = OpExpr::prod(vec![a_star, OpExpr::Flip]);
        assert!(nf_eq(&adjoint(&ja).unwrap(), &expected));
    }

    #[test]
    fn flip_rules() {
        let t = table();
        let jj = OpExpr::prod(vec![OpExpr::Flip, OpExpr::Flip]);
        assert!(matches!(normalize(&jj).unwrap(), OpExpr::Ident));
        let jpj = OpExpr::prod(vec![OpExpr::Flip, OpExpr::Proj, OpExpr::Flip]);
        assert!(matches!(normalize(&jpj).unwrap(), OpExpr::CoProj));
        let a = parse(r#"(laurent "w")"#, &t).unwrap();
        let jaj = OpExpr::prod(vec![OpExpr::Flip, a, OpExpr::Flip]);
        let expected = OpExpr::laurent("w~", t["w"].flip());
        assert!(nf_eq(&jaj, &expected));
        assert_eq!(
            normalize(&jaj).unwrap().to_string(),
            r#"(laurent (flip "w"))"#
        );
    }

    #[test]
    fn laurent_merge_and_projector_words() {
        let t = table();
        let ab = parse(r#"(prod (laurent "w") (laurent "chi"))"#, &t).unwrap();
        let expected = OpExpr::laurent("wc", t["w"].mul(&t["chi"]).unwrap());
        assert!(nf_eq(&ab, &expected));
        let pq = parse("(prod P Q)", &t).unwrap();
        assert!(NormalForm::of(&pq).unwrap().is_zero());
        let ppp = parse("(prod P P P)", &t).unwrap();
        assert!(matches!(normalize(&ppp).unwrap(), OpExpr::Proj));
        let id = parse("(sum P Q)", &t).unwrap();
        assert!(matches!(normalize(&id).unwrap(), OpExpr::Ident));
        let split = parse(
            r#"(sum (prod (laurent "w") P J) (prod (laurent "w") Q J))"#,
            &t,
        )
        .unwrap();
        assert_eq!(
            normalize(&split).unwrap().to_string(),
            r#"(prod (laurent "w") J)"#
        );
    }

    #[test]
    fn canonical_examples() {
        let t = table();
        let one = PCSymbol::identity(1);
        let zero = PCSymbol::zero(1);
        let cf = canonical_form(&OpExpr::Proj).unwrap().unwrap();
        assert!(cf.a.approx_eq(&one, 0.0) && cf.b.approx_eq(&zero, 0.0));
        assert!(cf.c.is_zero() && cf.d.is_zero() && cf.k.is_zero());
        let cf = canonical_form(&OpExpr::Flip).unwrap().unwrap();
        assert!(cf.a.is_zero() && cf.b.is_zero());
        assert!(cf.c.approx_eq(&one, 0.0) && cf.d.approx_eq(&one, 0.0));
        let toeplitz = parse(r#"(prod P (laurent "chi") P)"#, &t).unwrap();
        assert!(canonical_form(&toeplitz).unwrap().is_none());
    }

    #[test]
    fn canonical_round_trip() {
        let t = table();
        let e = parse(
            r#"(sum (prod (laurent "w") P) (prod (laurent "chi") J Q) (scale [0, 1] J)
                    (prod (laurent "t") Q) (finite-rank (entry 0 -1 2.5)))"#,
            &t,
        )
        .unwrap();
        let cf = canonical_form(&e).unwrap().unwrap();
        assert!(nf_eq(&cf.to_expr(), &e));
    }

    #[test]
    fn finite_rank_absorbs_neighbours() {
        let t = table();
        let e = parse("(prod P (finite-rank (entry -1 0 1) (entry 2 -3 4)) J)", &t).unwrap();
        let nf = NormalForm::of(&e).unwrap();
        assert_eq!(nf.terms.len(), 1);
        let term = &nf.terms[0];
        assert!(!term.flip);
        let Factor::K(k) = &term.word[0] else {
            panic!()
        };
        assert_eq!(k.entries().len(), 1);
        let v = k.get(2, 2).unwrap().scale(term.coef);
        assert!(v.approx_eq(&MatrixValue::scalar(1, c(4.0, 0.0)), 1e-15));
    }

    #[test]
    fn constant_laurent_folds() {
        let mut t = table();
        t.insert("two".into(), PCSymbol::scalar(1, c(2.0, 0.0)));
        let e = parse(r#"(sum (laurent "two") J)"#, &t).unwrap();
        assert_eq!(normalize(&e).unwrap().to_string(), "(sum (scale 2 I) J)");
        let e = parse(r#"(sum (laurent "chi") (laurent (flip "chi")))"#, &t).unwrap();
        // chi + flip(chi) = 1 away from the jumps
        assert!(matches!(normalize(&e).unwrap(), OpExpr::Ident));
    }

    #[test]
    fn parse_errors() {
        let t = table();
        assert!(matches!(
            parse(r#"(laurent "nope")"#, &t),
            Err(Error::UnknownOperator(_))
        ));
        assert!(matches!(
            parse("(frob P)", &t),
            Err(Error::UnknownOperator(_))
        ));
        assert!(matches!(parse("(scale P)", &t), Err(Error::Parse(_))));
        let mut t2 = table();
        t2.insert("m".into(), PCSymbol::identity(2));
        assert!(matches!(
            parse(r#"(sum (laurent "m") (laurent "t"))"#, &t2),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn printed_form_parses_back() {
        let t = table();
        let e = parse(
            r#"(prod J (laurent "w") (adjoint (laurent "chi")) P J (scale [1, 2] I))"#,
            &t,
        )
        .unwrap();
        let n = normalize(&e).unwrap();
        let back = parse(&n.to_string(), &t).unwrap();
        assert!(nf_eq(&n, &back));
    }
}
