//! Sequence expressions and their limit homomorphisms.
//!
//! A [`SeqExpr`] describes a sequence `(A_n)` built from sections
//! `P_n A P_n` and ideal atoms `P_n K P_n + W_n L W_n`. The maps
//!
//! * `map_p`: `s-lim P_n A_n P_n`,
//! * `map_w`: `s-lim W_n A_n W_n`,
//! * `map_u`: the `2×2` matrix image used to express `map_w`,
//!
//! are computed symbolically. [`strong_limit_oracle`] checks them against
//! assembled sections.

use std::fmt;

use crate::opexpr::{
    self, from_sexp, parse_complex, parse_finite_rank, FiniteRank, NormalForm, OpExpr, SymRef,
    SymbolTable,
};
use crate::sections::{assemble, structured_op, SectionMatrix, StructuredOp};
use crate::sexpr::{self, Sexp};
use crate::symbol::{MatrixValue, PCSymbol};
use crate::{Error, Result, C64};

/// Sequence expression.
#[derive(Clone, Debug)]
pub enum SeqExpr {
    /// `(P_n A P_n)`.
    Section(OpExpr),
    /// `(P_n K P_n + W_n L W_n)`.
    JIdeal(FiniteRank, FiniteRank),
    Sum(Vec<SeqExpr>),
    Prod(Vec<SeqExpr>),
    Scale(C64, Box<SeqExpr>),
    Adjoint(Box<SeqExpr>),
}

impl SeqExpr {
    pub fn section(e: OpExpr) -> Self {
        SeqExpr::Section(e)
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            SeqExpr::Section(e) => e.dim(),
            SeqExpr::JIdeal(k, _) => Some(k.dim()),
            SeqExpr::Sum(v) | SeqExpr::Prod(v) => v.iter().find_map(|s| s.dim()),
            SeqExpr::Scale(_, s) | SeqExpr::Adjoint(s) => s.dim(),
        }
    }

    pub fn validate(&self) -> Result<Option<usize>> {
        let mut d: Option<usize> = None;
        let mut check = |found: Option<usize>| -> Result<()> {
            match (d, found) {
                (Some(a), Some(b)) if a != b => Err(Error::DimensionMismatch {
                    expected: a,
                    found: b,
                }),
                (None, Some(b)) => {
                    d = Some(b);
                    Ok(())
                }
                _ => Ok(()),
            }
        };
        self.visit(&mut |s| match s {
            SeqExpr::Section(e) => check(e.validate()?),
            SeqExpr::JIdeal(k, l) => {
                check(Some(k.dim()))?;
                check(Some(l.dim()))
            }
            _ => Ok(()),
        })?;
        Ok(d)
    }

    fn visit(&self, f: &mut dyn FnMut(&SeqExpr) -> Result<()>) -> Result<()> {
        f(self)?;
        match self {
            SeqExpr::Sum(v) | SeqExpr::Prod(v) => v.iter().try_for_each(|s| s.visit(f)),
            SeqExpr::Scale(_, s) | SeqExpr::Adjoint(s) => s.visit(f),
            _ => Ok(()),
        }
    }

    /// Operator expressions of all section atoms.
    pub fn section_atoms(&self) -> Vec<&OpExpr> {
        let mut out = Vec::new();
        fn walk<'a>(s: &'a SeqExpr, out: &mut Vec<&'a OpExpr>) {
            match s {
                SeqExpr::Section(e) => out.push(e),
                SeqExpr::JIdeal(..) => {}
                SeqExpr::Sum(v) | SeqExpr::Prod(v) => v.iter().for_each(|x| walk(x, out)),
                SeqExpr::Scale(_, x) | SeqExpr::Adjoint(x) => walk(x, out),
            }
        }
        walk(self, &mut out);
        out
    }

    pub fn contains_flip(&self) -> bool {
        self.section_atoms().iter().any(|e| e.contains_flip())
    }

    pub fn to_sexp(&self) -> Sexp {
        let list = |h: &str, rest: Vec<Sexp>| {
            let mut v = vec![Sexp::Atom(h.into())];
            v.extend(rest);
            Sexp::List(v)
        };
        match self {
            SeqExpr::Section(e) => list("section", vec![e.to_sexp()]),
            SeqExpr::JIdeal(k, l) => list("jideal", vec![k.to_sexp(), l.to_sexp()]),
            SeqExpr::Sum(v) => list("sum", v.iter().map(|s| s.to_sexp()).collect()),
            SeqExpr::Prod(v) => list("prod", v.iter().map(|s| s.to_sexp()).collect()),
            SeqExpr::Scale(c, s) => {
                let c = if c.im == 0.0 {
                    Sexp::Num(c.re)
                } else {
                    Sexp::Vector(vec![Sexp::Num(c.re), Sexp::Num(c.im)])
                };
                list("scale", vec![c, s.to_sexp()])
            }
            SeqExpr::Adjoint(s) => list("adjoint", vec![s.to_sexp()]),
        }
    }
}

impl fmt::Display for SeqExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_sexp())
    }
}

fn seq_from_sexp(s: &Sexp, table: &SymbolTable) -> Result<SeqExpr> {
    if let Ok(e) = from_sexp(s, table) {
        return Ok(SeqExpr::Section(e));
    }
    let (head, rest) = s
        .head()
        .ok_or_else(|| Error::Parse(format!("expected a sequence expression, found {s}")))?;
    let one = |rest: &[Sexp]| -> Result<()> {
        if rest.len() != 1 {
            return Err(Error::Parse(format!("`{head}` takes one argument")));
        }
        Ok(())
    };
    match head {
        "section" => {
            one(rest)?;
            Ok(SeqExpr::Section(from_sexp(&rest[0], table)?))
        }
        "jideal" => {
            if rest.len() != 2 {
                return Err(Error::Parse(
                    "`jideal` takes two finite-rank arguments".into(),
                ));
            }
            let fr = |x: &Sexp| match x.head() {
                Some(("finite-rank", items)) => parse_finite_rank(items),
                _ => Err(Error::Parse(format!(
                    "expected (finite-rank ...), found {x}"
                ))),
            };
            Ok(SeqExpr::JIdeal(fr(&rest[0])?, fr(&rest[1])?))
        }
        "sum" | "prod" => {
            let items = rest
                .iter()
                .map(|x| seq_from_sexp(x, table))
                .collect::<Result<Vec<_>>>()?;
            Ok(if head == "sum" {
                SeqExpr::Sum(items)
            } else {
                SeqExpr::Prod(items)
            })
        }
        "scale" => {
            if rest.len() != 2 {
                return Err(Error::Parse("`scale` takes two arguments".into()));
            }
            Ok(SeqExpr::Scale(
                parse_complex(&rest[0])?,
                Box::new(seq_from_sexp(&rest[1], table)?),
            ))
        }
        "adjoint" => {
            one(rest)?;
            Ok(SeqExpr::Adjoint(Box::new(seq_from_sexp(&rest[0], table)?)))
        }
        // Re-run the operator parser to surface its error message.
        _ => from_sexp(s, table).map(SeqExpr::Section),
    }
}

/// Parse a sequence expression. A plain operator expression `A` denotes the
/// section sequence `(P_n A P_n)`.
pub fn parse_seq(src: &str, table: &SymbolTable) -> Result<SeqExpr> {
    let s = seq_from_sexp(&sexpr::parse(src)?, table)?;
    s.validate()?;
    Ok(s)
}

/// `2×2` matrix of operator expressions.
#[derive(Clone, Debug)]
pub struct TwoByTwoExpr {
    pub entries: [[OpExpr; 2]; 2],
}

impl TwoByTwoExpr {
    pub fn diag(a: OpExpr, b: OpExpr) -> Self {
        Self {
            entries: [[a, OpExpr::zero()], [OpExpr::zero(), b]],
        }
    }

    pub fn zero() -> Self {
        Self::diag(OpExpr::zero(), OpExpr::zero())
    }

    fn map(&self, f: impl Fn(&OpExpr) -> OpExpr) -> Self {
        let e = &self.entries;
        Self {
            entries: [[f(&e[0][0]), f(&e[0][1])], [f(&e[1][0]), f(&e[1][1])]],
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let (a, b) = (&self.entries, &other.entries);
        let s = |i: usize, j: usize| OpExpr::sum(vec![a[i][j].clone(), b[i][j].clone()]);
        Self {
            entries: [[s(0, 0), s(0, 1)], [s(1, 0), s(1, 1)]],
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let (a, b) = (&self.entries, &other.entries);
        let s = |i: usize, j: usize| {
            OpExpr::sum(
                (0..2)
                    .map(|k| OpExpr::prod(vec![a[i][k].clone(), b[k][j].clone()]))
                    .collect(),
            )
        };
        Self {
            entries: [[s(0, 0), s(0, 1)], [s(1, 0), s(1, 1)]],
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        self.map(|e| OpExpr::scale(c, e.clone()))
    }

    pub fn adjoint(&self) -> Self {
        let e = &self.entries;
        let adj = |x: &OpExpr| OpExpr::Adjoint(Box::new(x.clone()));
        Self {
            entries: [
                [adj(&e[0][0]), adj(&e[1][0])],
                [adj(&e[0][1]), adj(&e[1][1])],
            ],
        }
    }

    pub fn normalize(&self) -> Result<Self> {
        let e = &self.entries;
        Ok(Self {
            entries: [
                [opexpr::normalize(&e[0][0])?, opexpr::normalize(&e[0][1])?],
                [opexpr::normalize(&e[1][0])?, opexpr::normalize(&e[1][1])?],
            ],
        })
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> Result<bool> {
        for i in 0..2 {
            for j in 0..2 {
                if !opexpr::approx_eq(&self.entries[i][j], &other.entries[i][j], tol)? {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

impl fmt::Display for TwoByTwoExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = &self.entries;
        write!(
            f,
            "[[{}, {}], [{}, {}]]",
            e[0][0], e[0][1], e[1][0], e[1][1]
        )
    }
}

fn map_u_raw(a: &OpExpr) -> TwoByTwoExpr {
    match a {
        OpExpr::Ident => TwoByTwoExpr::diag(OpExpr::Ident, OpExpr::Ident),
        OpExpr::Proj => TwoByTwoExpr::diag(OpExpr::Ident, OpExpr::zero()),
        OpExpr::CoProj => TwoByTwoExpr::diag(OpExpr::zero(), OpExpr::Ident),
        OpExpr::Flip => TwoByTwoExpr {
            entries: [
                [OpExpr::zero(), OpExpr::Flip],
                [OpExpr::Flip, OpExpr::zero()],
            ],
        },
        OpExpr::Laurent(_) => TwoByTwoExpr::diag(a.clone(), a.clone()),
        OpExpr::FiniteRank(_) => TwoByTwoExpr::zero(),
        OpExpr::Sum(v) => v
            .iter()
            .map(map_u_raw)
            .reduce(|x, y| x.add(&y))
            .unwrap_or_else(TwoByTwoExpr::zero),
        OpExpr::Prod(v) => v
            .iter()
            .map(map_u_raw)
            .reduce(|x, y| x.mul(&y))
            .unwrap_or_else(|| TwoByTwoExpr::diag(OpExpr::Ident, OpExpr::Ident)),
        OpExpr::Scale(c, x) => map_u_raw(x).scale(*c),
        OpExpr::Adjoint(x) => map_u_raw(x).adjoint(),
    }
}

/// `U(P) = diag(I, 0)`, `U(Q) = diag(0, I)`, `U(J) = [[0, J], [J, 0]]`,
/// `U(L(a)) = diag(L(a), L(a))`, finite-rank atoms map to zero.
pub fn map_u(a: &OpExpr) -> Result<TwoByTwoExpr> {
    a.validate()?;
    map_u_raw(a).normalize()
}

fn map_structural(s: &SeqExpr, atom: &dyn Fn(&SeqExpr) -> Result<OpExpr>) -> Result<OpExpr> {
    Ok(match s {
        SeqExpr::Section(_) | SeqExpr::JIdeal(..) => atom(s)?,
        SeqExpr::Sum(v) => OpExpr::Sum(
            v.iter()
                .map(|x| map_structural(x, atom))
                .collect::<Result<_>>()?,
        ),
        SeqExpr::Prod(v) => OpExpr::Prod(
            v.iter()
                .map(|x| map_structural(x, atom))
                .collect::<Result<_>>()?,
        ),
        SeqExpr::Scale(c, x) => OpExpr::scale(*c, map_structural(x, atom)?),
        SeqExpr::Adjoint(x) => OpExpr::Adjoint(Box::new(map_structural(x, atom)?)),
    })
}

/// `s-lim P_n A_n P_n`, normalized.
pub fn map_p(s: &SeqExpr) -> Result<OpExpr> {
    s.validate()?;
    let raw = map_structural(s, &|atom| match atom {
        SeqExpr::Section(a) => Ok(a.clone()),
        SeqExpr::JIdeal(k, _) => Ok(OpExpr::FiniteRank(k.clone())),
        _ => unreachable!(),
    })?;
    opexpr::normalize(&raw)
}

/// `(PJ, QJ) U(A) (JP; JQ)` before normalization.
fn w_sandwich(a: &OpExpr) -> Result<OpExpr> {
    let u = map_u(a)?;
    let [[u11, u12], [u21, u22]] = u.entries;
    let (p, q, j) = (OpExpr::Proj, OpExpr::CoProj, OpExpr::Flip);
    let pj = || OpExpr::prod(vec![p.clone(), j.clone()]);
    let qj = || OpExpr::prod(vec![q.clone(), j.clone()]);
    let jp = || OpExpr::prod(vec![j.clone(), p.clone()]);
    let jq = || OpExpr::prod(vec![j.clone(), q.clone()]);
    Ok(OpExpr::sum(vec![
        OpExpr::prod(vec![pj(), u11, jp()]),
        OpExpr::prod(vec![pj(), u12, jq()]),
        OpExpr::prod(vec![qj(), u21, jp()]),
        OpExpr::prod(vec![qj(), u22, jq()]),
    ]))
}

/// `s-lim W_n A_n W_n`, normalized.
pub fn map_w(s: &SeqExpr) -> Result<OpExpr> {
    s.validate()?;
    let raw = map_structural(s, &|atom| match atom {
        SeqExpr::Section(a) => w_sandwich(a),
        SeqExpr::JIdeal(_, l) => Ok(OpExpr::FiniteRank(l.clone())),
        _ => unreachable!(),
    })?;
    opexpr::normalize(&raw)
}

/// Attach the block dimension to an operator whose leaves do not carry it.
pub fn with_dim(e: &OpExpr, d: usize) -> OpExpr {
    if e.dim().is_some() {
        e.clone()
    } else {
        OpExpr::prod(vec![
            OpExpr::Laurent(SymRef::constant(MatrixValue::identity(d))),
            e.clone(),
        ])
    }
}

/// The sequence member `A_n` as a section matrix.
pub fn assemble_seq(s: &SeqExpr, n: usize, margin: Option<usize>) -> Result<SectionMatrix> {
    let d = s.validate()?.unwrap_or(1);
    assemble_seq_dim(s, n, d, margin)
}

fn assemble_seq_dim(
    s: &SeqExpr,
    n: usize,
    d: usize,
    margin: Option<usize>,
) -> Result<SectionMatrix> {
    match s {
        SeqExpr::Section(a) => assemble(&with_dim(a, d), n, margin),
        SeqExpr::JIdeal(k, l) => {
            let pk = assemble(&OpExpr::FiniteRank(k.clone()), n, Some(0))?;
            let wl = assemble(&OpExpr::FiniteRank(l.clone()), n, Some(0))?;
            let w = structured_op(StructuredOp::Wn(n), n, d);
            pk.add(&w.mul(&wl)?.mul(&w)?)
        }
        SeqExpr::Sum(v) => {
            let mut acc = SectionMatrix::zeros(n, d);
            for x in v {
                acc = acc.add(&assemble_seq_dim(x, n, d, margin)?)?;
            }
            Ok(acc)
        }
        SeqExpr::Prod(v) => {
            let mut acc = SectionMatrix::identity(n, d);
            for x in v {
                acc = acc.mul(&assemble_seq_dim(x, n, d, margin)?)?;
            }
            Ok(acc)
        }
        SeqExpr::Scale(c, x) => Ok(assemble_seq_dim(x, n, d, margin)?.scale(*c)),
        SeqExpr::Adjoint(x) => Ok(assemble_seq_dim(x, n, d, margin)?.adjoint()),
    }
}

/// Finitely supported vector `Σ_k v_k e_k` with `d`-dimensional blocks.
#[derive(Clone, Debug)]
pub struct Probe {
    pub d: usize,
    pub values: Vec<(i64, Vec<C64>)>,
}

impl Probe {
    /// `e_k ⊗ e_0`.
    pub fn unit(d: usize, k: i64) -> Self {
        let mut v = vec![C64::new(0.0, 0.0); d];
        v[0] = C64::new(1.0, 0.0);
        Self {
            d,
            values: vec![(k, v)],
        }
    }

    /// Every `e_k ⊗ e_c` with `k ∈ Z_w`.
    pub fn basis(d: usize, w: usize) -> Vec<Self> {
        let w = w as i64;
        (-w..w)
            .flat_map(|k| {
                (0..d).map(move |c| {
                    let mut v = vec![C64::new(0.0, 0.0); d];
                    v[c] = C64::new(1.0, 0.0);
                    Probe {
                        d,
                        values: vec![(k, v)],
                    }
                })
            })
            .collect()
    }

    /// Smallest `w` with support inside `Z_w`.
    pub fn support(&self) -> usize {
        self.values
            .iter()
            .map(|(k, _)| {
                if *k < 0 {
                    (-k) as usize
                } else {
                    *k as usize + 1
                }
            })
            .max()
            .unwrap_or(0)
    }

    fn to_vector(&self, n: usize) -> nalgebra::DVector<C64> {
        let mut v = nalgebra::DVector::zeros(2 * n * self.d);
        for (k, vals) in &self.values {
            let base = (*k + n as i64) as usize * self.d;
            for (c, z) in vals.iter().enumerate() {
                v[base + c] += *z;
            }
        }
        v
    }
}

/// Which strong limit to probe.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Limit {
    P,
    W,
}

/// `max_v ‖(X_n A_n X_n v − B v)|_{Z_w}‖` with `X_n = P_n` or `W_n`, where
/// `B` is the predicted limit and `w` the observation window.
pub fn strong_limit_oracle(
    s: &SeqExpr,
    predicted: &OpExpr,
    limit: Limit,
    n: usize,
    window: usize,
    probes: &[Probe],
) -> Result<f64> {
    let d = s.validate()?.or(predicted.validate()?).unwrap_or(1);
    for p in probes {
        if p.d != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: p.d,
            });
        }
        if p.support() > window {
            return Err(Error::ProbeSupport {
                support: p.support(),
                window,
            });
        }
    }
    if window > n {
        return Err(Error::ProbeSupport {
            support: window,
            window: n,
        });
    }
    let an = assemble_seq_dim(s, n, d, None)?;
    let member = match limit {
        Limit::P => an,
        Limit::W => {
            let w = structured_op(StructuredOp::Wn(n), n, d);
            w.mul(&an)?.mul(&w)?
        }
    };
    let pred = assemble(&with_dim(predicted, d), window, None)?;
    let lo = (n - window) * d;
    let len = 2 * window * d;
    let mut worst: f64 = 0.0;
    for p in probes {
        let y = member.data() * p.to_vector(n);
        let yw = y.rows(lo, len).into_owned();
        let z = pred.data() * p.to_vector(window);
        worst = worst.max((yw - z).norm());
    }
    Ok(worst)
}

/// Convenience: a symbol reference as a Laurent operator.
pub fn laurent(name: &str, sym: &PCSymbol) -> OpExpr {
    OpExpr::laurent(name, sym.clone())
}

/// Equality of two operator expressions through their normal forms.
pub fn same_operator(a: &OpExpr, b: &OpExpr, tol: f64) -> Result<bool> {
    NormalForm::of(a)?.approx_eq(&NormalForm::of(b)?, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbol::MatrixValue;

    fn chi() -> OpExpr {
        laurent("chi", &PCSymbol::chi_plus(1))
    }

    fn eq(a: &OpExpr, b: &OpExpr) -> bool {
        same_operator(a, b, 1e-13).unwrap()
    }

    #[test]
    fn map_p_examples() {
        let s = SeqExpr::Section(OpExpr::Flip);
        assert!(matches!(map_p(&s).unwrap(), OpExpr::Flip));
        let k = FiniteRank::new(1, [((0, 0), MatrixValue::identity(1))].into()).unwrap();
        let l = FiniteRank::new(1, [((1, 2), MatrixValue::identity(1))].into()).unwrap();
        let ideal = SeqExpr::JIdeal(k.clone(), l.clone());
        assert!(eq(&map_p(&ideal).unwrap(), &OpExpr::FiniteRank(k)));
        assert!(eq(&map_w(&ideal).unwrap(), &OpExpr::FiniteRank(l)));
        let pp = SeqExpr::Prod(vec![
            SeqExpr::Section(OpExpr::Proj),
            SeqExpr::Section(OpExpr::Proj),
        ]);
        assert!(matches!(map_p(&pp).unwrap(), OpExpr::Proj));
    }

    #[test]
    fn map_u_table() {
        let u = map_u(&OpExpr::Proj).unwrap();
        assert!(u
            .approx_eq(&TwoByTwoExpr::diag(OpExpr::Ident, OpExpr::zero()), 0.0)
            .unwrap());
        let u = map_u(&OpExpr::Flip).unwrap();
        let expected = TwoByTwoExpr {
            entries: [
                [OpExpr::zero(), OpExpr::Flip],
                [OpExpr::Flip, OpExpr::zero()],
            ],
        };
        assert!(u.approx_eq(&expected, 0.0).unwrap());
        let k = FiniteRank::new(1, [((3, -1), MatrixValue::identity(1))].into()).unwrap();
        let u = map_u(&OpExpr::FiniteRank(k)).unwrap();
        assert!(u.approx_eq(&TwoByTwoExpr::zero(), 0.0).unwrap());
    }

    #[test]
    fn map_w_examples() {
        let w = map_w(&SeqExpr::Section(OpExpr::Flip)).unwrap();
        assert!(matches!(w, OpExpr::Flip), "{w}");
        let w = map_w(&SeqExpr::Section(OpExpr::Proj)).unwrap();
        assert!(matches!(w, OpExpr::Proj), "{w}");
        let a = PCSymbol::indicator(1, 0.5, 2.0).unwrap();
        let w = map_w(&SeqExpr::Section(laurent("a", &a))).unwrap();
        let at = laurent("a~", &a.flip());
        let expected = OpExpr::sum(vec![
            OpExpr::prod(vec![OpExpr::Proj, at.clone(), OpExpr::Proj]),
            OpExpr::prod(vec![OpExpr::CoProj, at, OpExpr::CoProj]),
        ]);
        assert!(eq(&w, &expected));
    }

    #[test]
    fn oracle_exact_cases() {
        let probes = Probe::basis(1, 4);
        for n in [8, 16, 32] {
            let r = strong_limit_oracle(
                &SeqExpr::Section(OpExpr::Ident),
                &OpExpr::Ident,
                Limit::W,
                n,
                4,
                &probes,
            )
            .unwrap();
            assert_eq!(r, 0.0);
            let s = SeqExpr::Section(OpExpr::Flip);
            let r = strong_limit_oracle(&s, &map_w(&s).unwrap(), Limit::W, n, 4, &probes).unwrap();
            assert_eq!(r, 0.0);
        }
    }

    #[test]
    fn oracle_decreases_for_jump_symbol() {
        let s = SeqExpr::Section(chi());
        let pred = map_w(&s).unwrap();
        let probes = Probe::basis(1, 4);
        let r: Vec<f64> = [32, 64, 128]
            .iter()
            .map(|&n| strong_limit_oracle(&s, &pred, Limit::W, n, 4, &probes).unwrap())
            .collect();
        assert!(r[1] <= r[0] && r[2] <= r[1], "{r:?}");
        assert!(r[0] > 0.0);
    }

    #[test]
    fn oracle_probe_support() {
        let probes = vec![Probe::unit(1, 10)];
        let err = strong_limit_oracle(
            &SeqExpr::Section(OpExpr::Ident),
            &OpExpr::Ident,
            Limit::P,
            32,
            4,
            &probes,
        );
        assert!(matches!(err, Err(Error::ProbeSupport { .. })));
    }

    #[test]
    fn seq_parsing() {
        let mut t = SymbolTable::new();
        t.insert("chi".into(), PCSymbol::chi_plus(1));
        let s = parse_seq(r#"(prod (section P) (section (laurent "chi")))"#, &t).unwrap();
        assert!(matches!(s, SeqExpr::Prod(_)));
        let s = parse_seq("(sum I J)", &t).unwrap();
        assert!(matches!(s, SeqExpr::Section(_)));
        let s = parse_seq("(jideal (finite-rank (entry 0 0 1)) (finite-rank))", &t).unwrap();
        assert!(matches!(s, SeqExpr::JIdeal(..)));
        assert!(parse_seq("(prod (section P) (bogus))", &t).is_err());
    }

    #[test]
    fn ideal_atom_assembly() {
        let k = FiniteRank::new(1, [((0, 0), MatrixValue::identity(1))].into()).unwrap();
        let s = SeqExpr::JIdeal(k.clone(), k);
        let m = assemble_seq(&s, 3, None).unwrap();
        // P_3 e_0 e_0^T P_3 + W_3 e_0 e_0^T W_3 puts ones at 0 and 2.
        assert_eq!(m.block(0, 0).unwrap()[(0, 0)], C64::new(1.0, 0.0));
        assert_eq!(m.block(2, 2).unwrap()[(0, 0)], C64::new(1.0, 0.0));
        assert_eq!(m.data().iter().filter(|z| z.norm() > 0.0).count(), 2);
    }
}
