//! Local symbols at the fiber points over the closed upper half circle and
//! numerical tests of their invertibility.
//!
//! Interior points carry a `2×2` matrix of line operators, the points `±1`
//! a single line operator. Images are compressed to `[-1, 1]`.

use std::f64::consts::PI;
use std::fmt;

use rayon::prelude::*;

use crate::linalg::{block_matrix, extreme_singular_values, CMatrix};
use crate::linemodels::{discretize_dim, DiscretizeOptions, GridSpec, LineOp};
use crate::opexpr::{OpExpr, SymRef};
use crate::sections::{classify_trend, Verdict};
use crate::symbol::{MatrixValue, JUMP_TOL};
use crate::symbolmaps::SeqExpr;
use crate::{Error, Result, C64};

const POINT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum PointKind {
    PlusOne,
    Interior,
    MinusOne,
}

/// `τ = e^{i·tau}` with `tau ∈ [0, π]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalPoint {
    pub tau: f64,
    pub kind: PointKind,
}

impl LocalPoint {
    pub fn plus_one() -> Self {
        Self {
            tau: 0.0,
            kind: PointKind::PlusOne,
        }
    }

    pub fn minus_one() -> Self {
        Self {
            tau: PI,
            kind: PointKind::MinusOne,
        }
    }

    /// Classify an angle in `[0, π]`.
    pub fn from_angle(tau: f64) -> Result<Self> {
        if !tau.is_finite() || !(-POINT_TOL..=PI + POINT_TOL).contains(&tau) {
            return Err(Error::InvalidArgument(format!(
                "fiber angle {tau} outside [0, π]"
            )));
        }
        Ok(if tau.abs() <= POINT_TOL {
            Self::plus_one()
        } else if (tau - PI).abs() <= POINT_TOL {
            Self::minus_one()
        } else {
            Self {
                tau,
                kind: PointKind::Interior,
            }
        })
    }

    pub fn is_interior(&self) -> bool {
        self.kind == PointKind::Interior
    }

    /// `τ` as a point on the circle.
    pub fn value(&self) -> C64 {
        match self.kind {
            PointKind::PlusOne => C64::new(1.0, 0.0),
            PointKind::MinusOne => C64::new(-1.0, 0.0),
            PointKind::Interior => C64::from_polar(1.0, self.tau),
        }
    }
}

impl fmt::Display for LocalPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PointKind::PlusOne => write!(f, "+1"),
            PointKind::MinusOne => write!(f, "-1"),
            PointKind::Interior => write!(f, "exp(i*{})", self.tau),
        }
    }
}

fn fold(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        2.0 * PI - t
    } else {
        t
    }
}

/// Points where a local condition may fail: folded jump angles of every
/// symbol and its flip, plus both `±1` when a flip occurs or a jump sits at
/// `±1`.
pub fn fiber_points(s: &SeqExpr) -> Vec<LocalPoint> {
    let mut angles: Vec<f64> = Vec::new();
    for atom in s.section_atoms() {
        for sym in atom.symbols() {
            for j in sym.jumps() {
                angles.push(fold(j));
                angles.push(fold(-j));
            }
        }
    }
    let at_pm1 = angles
        .iter()
        .any(|&a| a.abs() <= POINT_TOL || (a - PI).abs() <= POINT_TOL);
    if s.contains_flip() || at_pm1 {
        angles.push(0.0);
        angles.push(PI);
    }
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() <= POINT_TOL);
    angles
        .into_iter()
        .filter_map(|a| LocalPoint::from_angle(a).ok())
        .collect()
}

/// Local symbol at one fiber point.
#[derive(Clone, Debug, PartialEq)]
pub enum LocalSymbol {
    Interior { d: usize, entries: [[LineOp; 2]; 2] },
    Boundary { d: usize, op: LineOp },
}

impl LocalSymbol {
    pub fn dim(&self) -> usize {
        match self {
            LocalSymbol::Interior { d, .. } | LocalSymbol::Boundary { d, .. } => *d,
        }
    }

    fn map(&self, f: impl Fn(&LineOp) -> LineOp) -> Self {
        match self {
            LocalSymbol::Interior { d, entries } => LocalSymbol::Interior {
                d: *d,
                entries: [
                    [f(&entries[0][0]), f(&entries[0][1])],
                    [f(&entries[1][0]), f(&entries[1][1])],
                ],
            },
            LocalSymbol::Boundary { d, op } => LocalSymbol::Boundary { d: *d, op: f(op) },
        }
    }

    /// Block matrix on the unit grid with `cells` cells per unit.
    pub fn discretize(&self, cells: usize) -> Result<CMatrix> {
        let grid = GridSpec::unit(cells);
        let opts = DiscretizeOptions::default();
        match self {
            LocalSymbol::Boundary { d, op } => discretize_dim(op, &grid, *d, &opts),
            LocalSymbol::Interior { d, entries } => {
                let rows = entries
                    .iter()
                    .map(|row| {
                        row.iter()
                            .map(|e| discretize_dim(e, &grid, *d, &opts))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(block_matrix(&rows))
            }
        }
    }
}

impl fmt::Display for LocalSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocalSymbol::Boundary { op, .. } => write!(f, "{op}"),
            LocalSymbol::Interior { entries, .. } => write!(
                f,
                "[[{}, {}], [{}, {}]]",
                entries[0][0], entries[0][1], entries[1][0], entries[1][1]
            ),
        }
    }
}

type Block = [[LineOp; 2]; 2];

fn diag(a: LineOp, b: LineOp) -> Block {
    [[a, LineOp::zero()], [LineOp::zero(), b]]
}

fn half(sign: f64) -> LineOp {
    let s = if sign > 0.0 {
        LineOp::SingR
    } else {
        LineOp::scale(C64::new(-1.0, 0.0), LineOp::SingR)
    };
    LineOp::scale(C64::new(0.5, 0.0), LineOp::Sum(vec![LineOp::IdentL, s]))
}

/// `a(τ+0)(I - S_R)/2 + a(τ-0)(I + S_R)/2`, or `a(τ)` when the limits agree.
fn loc(sym: &SymRef, theta: f64) -> LineOp {
    let (plus, minus) = sym.symbol.one_sided_limits(theta);
    if plus.approx_eq(&minus, JUMP_TOL) {
        return LineOp::ConstL(plus);
    }
    let d = plus.dim();
    let id = MatrixValue::identity(d);
    let mut terms = Vec::new();
    for (value, sign) in [(plus, -1.0), (minus, 1.0)] {
        if value.is_zero(JUMP_TOL) {
            continue;
        }
        if value.approx_eq(&id, 0.0) {
            terms.push(half(sign));
        } else {
            terms.push(LineOp::Prod(vec![LineOp::ConstL(value), half(sign)]));
        }
    }
    if terms.len() == 1 {
        terms.pop().unwrap()
    } else {
        LineOp::Sum(terms)
    }
}

fn block_sum(a: &Block, b: &Block) -> Block {
    let e = |i: usize, j: usize| LineOp::Sum(vec![a[i][j].clone(), b[i][j].clone()]).simplify();
    [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]]
}

fn block_mul(a: &Block, b: &Block) -> Block {
    let e = |i: usize, j: usize| {
        LineOp::Sum(
            (0..2)
                .map(|k| LineOp::Prod(vec![a[i][k].clone(), b[k][j].clone()]))
                .collect(),
        )
        .simplify()
    };
    [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]]
}

fn block_map(a: &Block, f: impl Fn(&LineOp) -> LineOp) -> Block {
    [[f(&a[0][0]), f(&a[0][1])], [f(&a[1][0]), f(&a[1][1])]]
}

fn interior_image(a: &OpExpr, theta: f64) -> Block {
    match a {
        OpExpr::Ident => diag(LineOp::IdentL, LineOp::IdentL),
        OpExpr::Proj => diag(LineOp::ChiPos, LineOp::ChiNeg),
        OpExpr::CoProj => diag(LineOp::ChiNeg, LineOp::ChiPos),
        OpExpr::Flip => [
            [LineOp::zero(), LineOp::IdentL],
            [LineOp::IdentL, LineOp::zero()],
        ],
        OpExpr::Laurent(s) => diag(loc(s, theta), loc(&s.flip(), theta)),
        OpExpr::FiniteRank(_) => diag(LineOp::zero(), LineOp::zero()),
        OpExpr::Sum(v) => v
            .iter()
            .fold(diag(LineOp::zero(), LineOp::zero()), |acc, x| {
                block_sum(&acc, &interior_image(x, theta))
            }),
        OpExpr::Prod(v) => match v.as_slice() {
            [single] => interior_image(single, theta),
            _ => v
                .iter()
                .fold(diag(LineOp::IdentL, LineOp::IdentL), |acc, x| {
                    block_mul(&acc, &interior_image(x, theta))
                }),
        },
        OpExpr::Scale(c, x) => block_map(&interior_image(x, theta), |e| {
            LineOp::scale(*c, e.clone()).simplify()
        }),
        OpExpr::Adjoint(x) => {
            let b = interior_image(x, theta);
            let adj = |e: &LineOp| LineOp::Adjoint(Box::new(e.clone())).simplify();
            [
                [adj(&b[0][0]), adj(&b[1][0])],
                [adj(&b[0][1]), adj(&b[1][1])],
            ]
        }
    }
}

fn boundary_image(a: &OpExpr, p: &LocalPoint) -> LineOp {
    match a {
        OpExpr::Ident => LineOp::IdentL,
        OpExpr::Proj => LineOp::ChiPos,
        OpExpr::CoProj => LineOp::ChiNeg,
        OpExpr::Flip => match p.kind {
            PointKind::MinusOne => LineOp::scale(C64::new(-1.0, 0.0), LineOp::FlipL),
            _ => LineOp::FlipL,
        },
        OpExpr::Laurent(s) => loc(s, p.tau),
        OpExpr::FiniteRank(_) => LineOp::zero(),
        OpExpr::Sum(v) => LineOp::Sum(v.iter().map(|x| boundary_image(x, p)).collect()).simplify(),
        OpExpr::Prod(v) => match v.as_slice() {
            [single] => boundary_image(single, p),
            _ => LineOp::Prod(v.iter().map(|x| boundary_image(x, p)).collect()).simplify(),
        },
        OpExpr::Scale(c, x) => LineOp::scale(*c, boundary_image(x, p)).simplify(),
        OpExpr::Adjoint(x) => LineOp::Adjoint(Box::new(boundary_image(x, p))).simplify(),
    }
}

fn dim_of(a: &OpExpr) -> Result<usize> {
    Ok(a.validate()?.unwrap_or(1))
}

/// Compressed image of an operator at an interior point.
pub fn local_symbol_interior(a: &OpExpr, p: &LocalPoint) -> Result<LocalSymbol> {
    if !p.is_interior() {
        return Err(Error::InvalidArgument(format!(
            "{p} is not an interior point"
        )));
    }
    let d = dim_of(a)?;
    let b = interior_image(a, p.tau);
    Ok(LocalSymbol::Interior {
        d,
        entries: block_map(&b, |e| LineOp::compress_unit(e.clone())),
    })
}

/// Compressed image of an operator at `±1`.
pub fn local_symbol_boundary(a: &OpExpr, p: &LocalPoint) -> Result<LocalSymbol> {
    if p.is_interior() {
        return Err(Error::InvalidArgument(format!(
            "{p} is not a boundary point"
        )));
    }
    let d = dim_of(a)?;
    Ok(LocalSymbol::Boundary {
        d,
        op: LineOp::compress_unit(boundary_image(a, p)),
    })
}

fn zero_symbol(p: &LocalPoint, d: usize) -> LocalSymbol {
    let z = || LineOp::compress_unit(LineOp::zero());
    if p.is_interior() {
        LocalSymbol::Interior {
            d,
            entries: [[z(), z()], [z(), z()]],
        }
    } else {
        LocalSymbol::Boundary { d, op: z() }
    }
}

fn identity_symbol(p: &LocalPoint, d: usize) -> LocalSymbol {
    let i = || LineOp::compress_unit(LineOp::IdentL);
    let z = || LineOp::compress_unit(LineOp::zero());
    if p.is_interior() {
        LocalSymbol::Interior {
            d,
            entries: [[i(), z()], [z(), i()]],
        }
    } else {
        LocalSymbol::Boundary { d, op: i() }
    }
}

fn combine(a: &LocalSymbol, b: &LocalSymbol, product: bool) -> LocalSymbol {
    match (a, b) {
        (LocalSymbol::Interior { d, entries: x }, LocalSymbol::Interior { entries: y, .. }) => {
            LocalSymbol::Interior {
                d: *d,
                entries: if product {
                    block_mul(x, y)
                } else {
                    block_sum(x, y)
                },
            }
        }
        (LocalSymbol::Boundary { d, op: x }, LocalSymbol::Boundary { op: y, .. }) => {
            let v = vec![x.clone(), y.clone()];
            LocalSymbol::Boundary {
                d: *d,
                op: if product {
                    LineOp::Prod(v)
                } else {
                    LineOp::Sum(v)
                }
                .simplify(),
            }
        }
        _ => unreachable!("symbols at one point share a kind"),
    }
}

/// Local symbol of a sequence. Products of atoms multiply the compressed
/// symbols.
pub fn local_symbol_seq(s: &SeqExpr, p: &LocalPoint) -> Result<LocalSymbol> {
    let d = s.validate()?.unwrap_or(1);
    seq_symbol(s, p, d)
}

fn seq_symbol(s: &SeqExpr, p: &LocalPoint, d: usize) -> Result<LocalSymbol> {
    Ok(match s {
        SeqExpr::Section(a) => {
            let mut ls = if p.is_interior() {
                local_symbol_interior(a, p)?
            } else {
                local_symbol_boundary(a, p)?
            };
            match &mut ls {
                LocalSymbol::Interior { d: x, .. } | LocalSymbol::Boundary { d: x, .. } => *x = d,
            }
            ls
        }
        SeqExpr::JIdeal(..) => zero_symbol(p, d),
        SeqExpr::Sum(v) => v.iter().try_fold(zero_symbol(p, d), |acc, x| {
            Ok::<_, Error>(combine(&acc, &seq_symbol(x, p, d)?, false))
        })?,
        SeqExpr::Prod(v) => match v.as_slice() {
            [single] => seq_symbol(single, p, d)?,
            _ => v.iter().try_fold(identity_symbol(p, d), |acc, x| {
                Ok::<_, Error>(combine(&acc, &seq_symbol(x, p, d)?, true))
            })?,
        },
        SeqExpr::Scale(c, x) => {
            seq_symbol(x, p, d)?.map(|e| LineOp::scale(*c, e.clone()).simplify())
        }
        SeqExpr::Adjoint(x) => match seq_symbol(x, p, d)? {
            LocalSymbol::Interior { d, entries } => {
                let adj = |e: &LineOp| LineOp::Adjoint(Box::new(e.clone())).simplify();
                LocalSymbol::Interior {
                    d,
                    entries: [
                        [adj(&entries[0][0]), adj(&entries[1][0])],
                        [adj(&entries[0][1]), adj(&entries[1][1])],
                    ],
                }
            }
            LocalSymbol::Boundary { d, op } => LocalSymbol::Boundary {
                d,
                op: LineOp::Adjoint(Box::new(op)).simplify(),
            },
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Invertibility {
    Invertible,
    Singular,
    Inconclusive,
}

impl From<Verdict> for Invertibility {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Stable => Invertibility::Invertible,
            Verdict::Unstable => Invertibility::Singular,
            Verdict::Inconclusive => Invertibility::Inconclusive,
        }
    }
}

impl fmt::Display for Invertibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Invertibility::Invertible => "invertible",
            Invertibility::Singular => "singular",
            Invertibility::Inconclusive => "inconclusive",
        })
    }
}

/// `σ_min` of a discretized symbol at one grid size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridRow {
    pub cells: usize,
    pub sigma_min: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalCheck {
    pub verdict: Invertibility,
    pub rows: Vec<GridRow>,
}

impl LocalCheck {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("cells,sigma_min\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{}\n",
                r.cells,
                crate::linalg::fmt17(r.sigma_min)
            ));
        }
        s
    }
}

/// Discretize on every grid and classify the `σ_min` trend.
pub fn check_local_invertibility(
    ls: &LocalSymbol,
    grids: &[usize],
    floor: f64,
) -> Result<LocalCheck> {
    if grids.is_empty() || grids.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "grids must be strictly increasing".into(),
        ));
    }
    let rows = grids
        .par_iter()
        .map(|&cells| {
            let m = ls.discretize(cells)?;
            Ok(GridRow {
                cells,
                sigma_min: extreme_singular_values(&m).0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sigma: Vec<f64> = rows.iter().map(|r| r.sigma_min).collect();
    Ok(LocalCheck {
        verdict: classify_trend(&sigma, floor, sigma.len()).into(),
        rows,
    })
}
