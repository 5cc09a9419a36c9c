//! Model operators on the real line and the half-line, and their cell
//! discretizations.
//!
//! Kernels: `(S_R f)(x) = (1/πi) ∫_R f(y)/(y-x) dy`,
//! `(S f)(x) = (1/πi) ∫_0^∞ f(y)/(y-x) dy`,
//! `(N f)(x) = (1/πi) ∫_0^∞ f(y)/(y+x) dy`, `(Ĵf)(x) = f(-x)`.
//!
//! A grid with `n` cells per unit discretizes `A` as `E_{-n} A E_n` where
//! `E_n x = √n Σ x_i χ_{[i/n,(i+1)/n]}` and `E_{-n} = E_n^*`. For the Cauchy
//! kernels the entries do not depend on `n` and are given by closed-form
//! double cell integrals.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::linalg::{block_matrix, fmt17, kron, matmul, CMatrix};
use crate::symbol::MatrixValue;
use crate::{Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Real function `b(z)` defining a Mellin convolution `M^{-1} b M`.
#[derive(Clone)]
pub struct MellinSymbol {
    pub name: String,
    func: Arc<dyn Fn(f64) -> C64 + Send + Sync>,
}

impl MellinSymbol {
    pub fn new(name: &str, f: impl Fn(f64) -> C64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.to_string(),
            func: Arc::new(f),
        }
    }

    pub fn constant(c: C64) -> Self {
        Self::new(&format!("const {c}"), move |_| c)
    }

    pub fn eval(&self, z: f64) -> C64 {
        (self.func)(z)
    }
}

impl fmt::Debug for MellinSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MellinSymbol({:?})", self.name)
    }
}

impl PartialEq for MellinSymbol {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

/// Expression over the line and half-line model generators.
#[derive(Clone, Debug, PartialEq)]
pub enum LineOp {
    IdentL,
    /// `χ_{[0,∞)}`.
    ChiPos,
    /// `χ_{(-∞,0]}`.
    ChiNeg,
    /// `S_R`.
    SingR,
    /// `Ĵ`.
    FlipL,
    ConstL(MatrixValue),
    /// `χ_{[-1,1]} e χ_{[-1,1]}` on the line.
    CompressUnit(Box<LineOp>),
    /// `χ_{[0,1]} e χ_{[0,1]}` on the half-line.
    CompressHalf(Box<LineOp>),
    /// `S` on the half-line.
    SingHalf,
    /// `N` on the half-line.
    HankelHalf,
    MellinConv(MellinSymbol),
    Sum(Vec<LineOp>),
    Prod(Vec<LineOp>),
    Scale(C64, Box<LineOp>),
    Adjoint(Box<LineOp>),
}

/// Where an operator acts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Any,
    Line,
    HalfLine,
}

impl LineOp {
    pub fn zero() -> Self {
        LineOp::Sum(Vec::new())
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, LineOp::Sum(v) if v.is_empty())
    }

    pub fn scale(c: C64, e: LineOp) -> Self {
        LineOp::Scale(c, Box::new(e))
    }

    pub fn compress_unit(e: LineOp) -> Self {
        LineOp::CompressUnit(Box::new(e))
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            LineOp::ConstL(m) => Some(m.dim()),
            LineOp::CompressUnit(e) | LineOp::CompressHalf(e) => e.dim(),
            LineOp::Scale(_, e) | LineOp::Adjoint(e) => e.dim(),
            LineOp::Sum(v) | LineOp::Prod(v) => v.iter().find_map(|e| e.dim()),
            _ => None,
        }
    }

    pub fn domain(&self) -> Result<Domain> {
        let join = |a: Domain, b: Domain| match (a, b) {
            (Domain::Any, x) | (x, Domain::Any) => Ok(x),
            (x, y) if x == y => Ok(x),
            _ => Err(Error::Domain("line and half-line operators mixed".into())),
        };
        match self {
            LineOp::IdentL | LineOp::ConstL(_) => Ok(Domain::Any),
            LineOp::ChiPos | LineOp::ChiNeg | LineOp::SingR | LineOp::FlipL => Ok(Domain::Line),
            LineOp::SingHalf | LineOp::HankelHalf | LineOp::MellinConv(_) => Ok(Domain::HalfLine),
            LineOp::CompressUnit(e) => join(Domain::Line, e.domain()?),
            LineOp::CompressHalf(e) => join(Domain::HalfLine, e.domain()?),
            LineOp::Scale(_, e) | LineOp::Adjoint(e) => e.domain(),
            LineOp::Sum(v) | LineOp::Prod(v) => v
                .iter()
                .try_fold(Domain::Any, |acc, e| join(acc, e.domain()?)),
        }
    }

    /// True if the operator can move mass out of a window that it does not
    /// compress to.
    fn spreads(&self) -> bool {
        match self {
            LineOp::SingR | LineOp::SingHalf | LineOp::HankelHalf | LineOp::MellinConv(_) => true,
            LineOp::CompressUnit(_) | LineOp::CompressHalf(_) => false,
            LineOp::Scale(_, e) | LineOp::Adjoint(e) => e.spreads(),
            LineOp::Sum(v) | LineOp::Prod(v) => v.iter().any(|e| e.spreads()),
            _ => false,
        }
    }

    /// Light algebraic cleanup: flatten sums and products, drop zeros and
    /// identities, merge nested scales.
    pub fn simplify(&self) -> LineOp {
        match self {
            LineOp::Sum(v) => {
                let mut out = Vec::new();
                for e in v {
                    match e.simplify() {
                        LineOp::Sum(inner) => out.extend(inner),
                        s => out.push(s),
                    }
                }
                if out.len() == 1 {
                    out.pop().unwrap()
                } else {
                    LineOp::Sum(out)
                }
            }
            LineOp::Prod(v) => {
                let mut out = Vec::new();
                let mut coef = ONE;
                for e in v {
                    match e.simplify() {
                        s if s.is_zero() => return LineOp::zero(),
                        LineOp::IdentL => {}
                        LineOp::Prod(inner) => out.extend(inner),
                        LineOp::Scale(c, inner) => {
                            coef *= c;
                            match *inner {
                                LineOp::IdentL => {}
                                LineOp::Prod(x) => out.extend(x),
                                x => out.push(x),
                            }
                        }
                        s => out.push(s),
                    }
                }
                let body = match out.len() {
                    0 => LineOp::IdentL,
                    1 => out.pop().unwrap(),
                    _ => LineOp::Prod(out),
                };
                LineOp::Scale(coef, Box::new(body)).simplify_scale()
            }
            LineOp::Scale(c, e) => LineOp::Scale(*c, Box::new(e.simplify())).simplify_scale(),
            LineOp::Adjoint(e) => match e.simplify() {
                s if s.is_zero() => LineOp::zero(),
                LineOp::IdentL => LineOp::IdentL,
                s => LineOp::Adjoint(Box::new(s)),
            },
            LineOp::CompressUnit(e) => LineOp::CompressUnit(Box::new(e.simplify())),
            LineOp::CompressHalf(e) => LineOp::CompressHalf(Box::new(e.simplify())),
            e => e.clone(),
        }
    }

    fn simplify_scale(self) -> LineOp {
        match self {
            LineOp::Scale(c, e) => {
                if c == ZERO || e.is_zero() {
                    LineOp::zero()
                } else if c == ONE {
                    *e
                } else {
                    match *e {
                        LineOp::Scale(c2, inner) => LineOp::Scale(c * c2, inner).simplify_scale(),
                        inner => LineOp::Scale(c, Box::new(inner)),
                    }
                }
            }
            e => e,
        }
    }
}

fn fmt_c(z: C64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else {
        format!("[{}, {}]", z.re, z.im)
    }
}

impl fmt::Display for LineOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let seq = |f: &mut fmt::Formatter<'_>, head: &str, v: &[LineOp]| -> fmt::Result {
            write!(f, "({head}")?;
            for e in v {
                write!(f, " {e}")?;
            }
            write!(f, ")")
        };
        match self {
            LineOp::IdentL => write!(f, "I"),
            LineOp::ChiPos => write!(f, "chi+"),
            LineOp::ChiNeg => write!(f, "chi-"),
            LineOp::SingR => write!(f, "S_R"),
            LineOp::FlipL => write!(f, "Jhat"),
            LineOp::ConstL(m) if m.dim() == 1 => {
                write!(f, "(const {})", fmt_c(m.as_matrix()[(0, 0)]))
            }
            LineOp::ConstL(m) => write!(f, "(const {m})"),
            LineOp::CompressUnit(e) => write!(f, "(compress-unit {e})"),
            LineOp::CompressHalf(e) => write!(f, "(compress-half {e})"),
            LineOp::SingHalf => write!(f, "S"),
            LineOp::HankelHalf => write!(f, "N"),
            LineOp::MellinConv(b) => write!(f, "(mellin {:?})", b.name),
            LineOp::Sum(v) => seq(f, "sum", v),
            LineOp::Prod(v) => seq(f, "prod", v),
            LineOp::Scale(c, e) => write!(f, "(scale {} {e})", fmt_c(*c)),
            LineOp::Adjoint(e) => write!(f, "(adjoint {e})"),
        }
    }
}

// ---------------------------------------------------------------------------
// Grids

/// Cell layout of a discretization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Support {
    /// Cells `[i/n, (i+1)/n]`, `i ∈ Z_cells`, on the line.
    Symmetric { cells: usize },
    /// Cells `[i/n, (i+1)/n]`, `0 <= i < cells`, on the half-line.
    HalfLine { cells: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    /// Cells per unit length.
    pub n: usize,
    pub support: Support,
}

impl GridSpec {
    /// `[-1, 1]` with `n` cells per unit.
    pub fn unit(n: usize) -> Self {
        Self {
            n,
            support: Support::Symmetric { cells: n },
        }
    }

    pub fn symmetric(n: usize, cells: usize) -> Self {
        Self {
            n,
            support: Support::Symmetric { cells },
        }
    }

    /// `[0, m/n]`; `m` defaults to `8n`.
    pub fn half_line(n: usize, cells: Option<usize>) -> Self {
        Self {
            n,
            support: Support::HalfLine {
                cells: cells.unwrap_or(8 * n),
            },
        }
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        match self.support {
            Support::Symmetric { cells } => 2 * cells,
            Support::HalfLine { cells } => cells,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Integer label of cell position `p`.
    fn label(&self, p: usize) -> i64 {
        match self.support {
            Support::Symmetric { cells } => p as i64 - cells as i64,
            Support::HalfLine { .. } => p as i64,
        }
    }

    fn labels(&self) -> Vec<i64> {
        (0..self.len()).map(|p| self.label(p)).collect()
    }

    fn scaled(&self, factor: usize) -> Self {
        let support = match self.support {
            Support::Symmetric { cells } => Support::Symmetric {
                cells: cells * factor,
            },
            Support::HalfLine { cells } => Support::HalfLine {
                cells: cells * factor,
            },
        };
        Self { n: self.n, support }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.is_empty() {
            return Err(Error::InvalidArgument(
                "grid needs n >= 1 and at least one cell".into(),
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Closed-form cell integrals

fn h(s: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        s * s.abs().ln()
    }
}

/// `∫_a^b dx ∫_c^d dy 1/(y-x)` (principal value when the cells overlap).
pub fn cauchy_cell_integral(a: f64, b: f64, c: f64, d: f64) -> f64 {
    h(d - a) - h(c - a) - h(d - b) + h(c - b)
}

/// `∫_a^b dx ∫_c^d dy 1/(x+y)` for cells in `[0, ∞)`.
pub fn hankel_cell_integral(a: f64, b: f64, c: f64, d: f64) -> f64 {
    h(b + d) - h(a + d) - h(b + c) + h(a + c)
}

/// Unit-cell entry of `S_R` or `S` between cells `j` (row) and `k` (column).
fn sing_entry(j: i64, k: i64) -> C64 {
    // odd in m; evaluate at |m| so the matrix is exactly Hermitian
    let m = (k - j).unsigned_abs() as f64;
    let v = h(m + 1.0) - 2.0 * h(m) + h(m - 1.0);
    let v = if k < j { -v } else { v };
    C64::new(0.0, -v / PI)
}

fn hankel_entry(j: i64, k: i64) -> C64 {
    let s = (j + k) as f64;
    let v = h(s + 2.0) - 2.0 * h(s + 1.0) + h(s);
    C64::new(0.0, -v / PI)
}

// ---------------------------------------------------------------------------
// Discretization

/// Mellin quadrature settings for `G(b)`: trapezoid rule on `[-z_max, z_max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MellinQuad {
    pub z_max: f64,
    pub nodes: usize,
}

impl Default for MellinQuad {
    fn default() -> Self {
        Self {
            z_max: 40.0,
            nodes: 4096,
        }
    }
}

/// Knobs for [`discretize_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscretizeOptions {
    /// Grid enlargement factor for products of several spreading factors.
    pub margin_factor: usize,
    pub mellin: MellinQuad,
}

impl Default for DiscretizeOptions {
    fn default() -> Self {
        Self {
            margin_factor: 4,
            mellin: MellinQuad::default(),
        }
    }
}

fn scalar_matrix(grid: &GridSpec, entry: impl Fn(i64, i64) -> C64) -> DMatrix<C64> {
    let labels = grid.labels();
    let m = labels.len();
    DMatrix::from_fn(m, m, |r, c| entry(labels[r], labels[c]))
}

fn diag_mask(grid: &GridSpec, keep: impl Fn(i64) -> bool) -> DMatrix<C64> {
    scalar_matrix(grid, |j, k| if j == k && keep(j) { ONE } else { ZERO })
}

/// Matrix of `E_{-n} op E_n` on `grid` with block size `d`.
pub fn discretize(op: &LineOp, grid: &GridSpec) -> Result<CMatrix> {
    discretize_with(op, grid, &DiscretizeOptions::default())
}

pub fn discretize_with(op: &LineOp, grid: &GridSpec, opts: &DiscretizeOptions) -> Result<CMatrix> {
    discretize_dim(op, grid, op.dim().unwrap_or(1), opts)
}

/// As [`discretize_with`] with an explicit block size, for expressions whose
/// leaves do not carry one.
pub fn discretize_dim(
    op: &LineOp,
    grid: &GridSpec,
    d: usize,
    opts: &DiscretizeOptions,
) -> Result<CMatrix> {
    grid.validate()?;
    if let Some(found) = op.dim() {
        if found != d {
            return Err(Error::DimensionMismatch { expected: d, found });
        }
    }
    match (op.domain()?, grid.support) {
        (Domain::Line, Support::HalfLine { .. }) => {
            return Err(Error::Domain("line operator on a half-line grid".into()))
        }
        (Domain::HalfLine, Support::Symmetric { .. }) => {
            return Err(Error::Domain(
                "half-line operator on a symmetric grid".into(),
            ))
        }
        _ => {}
    }
    disc(op, grid, d, opts)
}

fn lift(m: DMatrix<C64>, d: usize) -> CMatrix {
    if d == 1 {
        m
    } else {
        kron(&m, &CMatrix::identity(d, d))
    }
}

fn disc(op: &LineOp, grid: &GridSpec, d: usize, opts: &DiscretizeOptions) -> Result<CMatrix> {
    let size = grid.len() * d;
    Ok(match op {
        LineOp::IdentL => CMatrix::identity(size, size),
        LineOp::ChiPos => lift(diag_mask(grid, |k| k >= 0), d),
        LineOp::ChiNeg => lift(diag_mask(grid, |k| k < 0), d),
        LineOp::FlipL => lift(
            scalar_matrix(grid, |j, k| if j == -1 - k { ONE } else { ZERO }),
            d,
        ),
        LineOp::ConstL(a) => {
            if a.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: a.dim(),
                });
            }
            kron(&CMatrix::identity(grid.len(), grid.len()), a.as_matrix())
        }
        LineOp::SingR | LineOp::SingHalf => lift(scalar_matrix(grid, sing_entry), d),
        LineOp::HankelHalf => lift(scalar_matrix(grid, hankel_entry), d),
        LineOp::MellinConv(b) => {
            let cells = grid.len();
            lift(mellin_conv_matrix_with(b, cells, &opts.mellin)?, d)
        }
        LineOp::CompressUnit(e) => {
            let n = grid.n as i64;
            restrict(disc(e, grid, d, opts)?, grid, d, |k| (-n..n).contains(&k))
        }
        LineOp::CompressHalf(e) => {
            let n = grid.n as i64;
            restrict(disc(e, grid, d, opts)?, grid, d, |k| (0..n).contains(&k))
        }
        LineOp::Sum(v) => {
            let mut acc = CMatrix::zeros(size, size);
            for e in v {
                acc += disc(e, grid, d, opts)?;
            }
            acc
        }
        LineOp::Prod(v) => {
            let spreading = v.iter().filter(|e| e.spreads()).count();
            if spreading <= 1 || opts.margin_factor <= 1 {
                let mut acc = CMatrix::identity(size, size);
                for e in v {
                    acc = matmul(&acc, &disc(e, grid, d, opts)?);
                }
                acc
            } else {
                let big = grid.scaled(opts.margin_factor);
                let mut acc = CMatrix::identity(big.len() * d, big.len() * d);
                for e in v {
                    acc = matmul(&acc, &disc(e, &big, d, opts)?);
                }
                cut_to(&acc, &big, grid, d)
            }
        }
        LineOp::Scale(c, e) => disc(e, grid, d, opts)? * *c,
        LineOp::Adjoint(e) => disc(e, grid, d, opts)?.adjoint(),
    })
}

/// Zero every row and column whose cell label fails `keep`.
fn restrict(mut m: CMatrix, grid: &GridSpec, d: usize, keep: impl Fn(i64) -> bool) -> CMatrix {
    for (p, k) in grid.labels().into_iter().enumerate() {
        if !keep(k) {
            for t in 0..d {
                m.row_mut(p * d + t).fill(ZERO);
                m.column_mut(p * d + t).fill(ZERO);
            }
        }
    }
    m
}

/// Restrict a matrix on `big` to the cells of `small` (same `n`).
fn cut_to(m: &CMatrix, big: &GridSpec, small: &GridSpec, d: usize) -> CMatrix {
    let offset = match (big.support, small.support) {
        (Support::Symmetric { cells: b }, Support::Symmetric { cells: s }) => b - s,
        _ => 0,
    };
    m.view((offset * d, offset * d), (small.len() * d, small.len() * d))
        .into_owned()
}

// ---------------------------------------------------------------------------
// Doubling

/// `2×2` matrix of half-line operators.
pub type LineBlock = [[LineOp; 2]; 2];

fn block_mul(a: &LineBlock, b: &LineBlock) -> LineBlock {
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

fn block_diag(a: LineOp, b: LineOp) -> LineBlock {
    [[a, LineOp::zero()], [LineOp::zero(), b]]
}

/// Image of a line operator under the doubling
/// `f ↦ (f|_{R+}, f(-·)|_{R+})`.
pub fn phi_omega(op: &LineOp) -> Result<LineBlock> {
    if op.domain()? == Domain::HalfLine {
        return Err(Error::Domain("doubling needs a line operator".into()));
    }
    let z = LineOp::zero;
    let neg = |e: LineOp| LineOp::scale(C64::new(-1.0, 0.0), e);
    Ok(match op {
        LineOp::IdentL => block_diag(LineOp::IdentL, LineOp::IdentL),
        LineOp::ChiPos => block_diag(LineOp::IdentL, z()),
        LineOp::ChiNeg => block_diag(z(), LineOp::IdentL),
        LineOp::FlipL => [[z(), LineOp::IdentL], [LineOp::IdentL, z()]],
        LineOp::SingR => [
            [LineOp::SingHalf, neg(LineOp::HankelHalf)],
            [LineOp::HankelHalf, neg(LineOp::SingHalf)],
        ],
        LineOp::ConstL(a) => block_diag(LineOp::ConstL(a.clone()), LineOp::ConstL(a.clone())),
        LineOp::CompressUnit(e) => {
            let inner = phi_omega(e)?;
            let c = |x: &LineOp| LineOp::CompressHalf(Box::new(x.clone())).simplify();
            [
                [c(&inner[0][0]), c(&inner[0][1])],
                [c(&inner[1][0]), c(&inner[1][1])],
            ]
        }
        LineOp::Sum(v) => {
            let mut acc = block_diag(z(), z());
            for e in v {
                let b = phi_omega(e)?;
                for i in 0..2 {
                    for j in 0..2 {
                        acc[i][j] =
                            LineOp::Sum(vec![acc[i][j].clone(), b[i][j].clone()]).simplify();
                    }
                }
            }
            acc
        }
        LineOp::Prod(v) => {
            let mut acc = block_diag(LineOp::IdentL, LineOp::IdentL);
            for e in v {
                acc = block_mul(&acc, &phi_omega(e)?);
            }
            acc
        }
        LineOp::Scale(c, e) => {
            let b = phi_omega(e)?;
            let s = |x: &LineOp| LineOp::scale(*c, x.clone()).simplify();
            [[s(&b[0][0]), s(&b[0][1])], [s(&b[1][0]), s(&b[1][1])]]
        }
        LineOp::Adjoint(e) => {
            let b = phi_omega(e)?;
            let a = |x: &LineOp| LineOp::Adjoint(Box::new(x.clone())).simplify();
            [[a(&b[0][0]), a(&b[1][0])], [a(&b[0][1]), a(&b[1][1])]]
        }
        LineOp::SingHalf | LineOp::HankelHalf | LineOp::MellinConv(_) | LineOp::CompressHalf(_) => {
            unreachable!("rejected by the domain check")
        }
    })
}

/// Permutation taking a symmetric grid with `cells` cells per side to two
/// stacked half-line grids: cell `k >= 0` goes to position `k` of the first
/// block, cell `k < 0` to position `-k-1` of the second.
pub fn omega_permutation(cells: usize, d: usize) -> CMatrix {
    let m = 2 * cells;
    let mut p = DMatrix::zeros(m, m);
    for pos in 0..m {
        let k = pos as i64 - cells as i64;
        let target = if k >= 0 {
            k as usize
        } else {
            cells + (-k - 1) as usize
        };
        p[(target, pos)] = ONE;
    }
    lift(p, d)
}

/// Discretize a doubled operator block by block on half-line grids.
pub fn discretize_block(b: &LineBlock, grid: &GridSpec) -> Result<CMatrix> {
    let opts = DiscretizeOptions::default();
    let d = b.iter().flatten().find_map(|e| e.dim()).unwrap_or(1);
    let rows = b
        .iter()
        .map(|row| {
            row.iter()
                .map(|e| disc(e, grid, d, &opts))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(block_matrix(&rows))
}

// ---------------------------------------------------------------------------
// E-maps

/// `E_n` from cells to a function sampled on `r` equal subcells per cell.
pub fn e_plus(grid: &GridSpec, r: usize) -> DMatrix<f64> {
    let m = grid.len();
    let s = (grid.n as f64).sqrt();
    DMatrix::from_fn(m * r, m, |row, col| if row / r == col { s } else { 0.0 })
}

/// `E_{-n}`: cell averages `√n ∫_cell f` of a subcell-sampled function.
pub fn e_minus(grid: &GridSpec, r: usize) -> DMatrix<f64> {
    let m = grid.len();
    let w = 1.0 / ((grid.n as f64).sqrt() * r as f64);
    DMatrix::from_fn(m, m * r, |row, col| if col / r == row { w } else { 0.0 })
}

// ---------------------------------------------------------------------------
// Mellin utilities

/// Samples of `f(e^u)` on `u_i = u0 + i h`.
#[derive(Clone, Debug)]
pub struct LogGridSamples {
    pub u0: f64,
    pub h: f64,
    pub samples: Vec<C64>,
}

impl LogGridSamples {
    /// Sample `f(x)` at `x = e^u` for `nodes` equispaced `u ∈ [u0, u1]`.
    pub fn from_fn(f: impl Fn(f64) -> C64, u0: f64, u1: f64, nodes: usize) -> Result<Self> {
        if nodes < 2 || !(u1 > u0) {
            return Err(Error::InvalidArgument(
                "need u1 > u0 and at least two nodes".into(),
            ));
        }
        let h = (u1 - u0) / (nodes - 1) as f64;
        Ok(Self {
            u0,
            h,
            samples: (0..nodes).map(|i| f((u0 + i as f64 * h).exp())).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.samples.len() != other.samples.len() || self.u0 != other.u0 || self.h != other.h {
            return Err(Error::InvalidArgument("sample grids differ".into()));
        }
        Ok(Self {
            u0: self.u0,
            h: self.h,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }
}

/// `(Mf)(z) = ∫_0^∞ x^{-iz-1/2} f(x) dx = ∫ e^{u(1/2-iz)} f(e^u) du` by the
/// composite Simpson rule on the sample grid.
pub fn mellin_transform(f: &LogGridSamples, z: f64) -> Result<C64> {
    let m = f.samples.len();
    if m < 3 || m.is_multiple_of(2) {
        return Err(Error::Quadrature(format!(
            "Simpson rule needs an odd number (>= 3) of samples, got {m}"
        )));
    }
    if !z.is_finite() || !f.h.is_finite() || f.h <= 0.0 {
        return Err(Error::Domain("non-finite z or step".into()));
    }
    let k = C64::new(0.5, -z);
    let mut acc = ZERO;
    for (i, s) in f.samples.iter().enumerate() {
        let w = if i == 0 || i == m - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let u = f.u0 + i as f64 * f.h;
        acc += (k * u).exp() * s * w;
    }
    let v = acc * (f.h / 3.0);
    if !(v.re.is_finite() && v.im.is_finite()) {
        return Err(Error::Quadrature("non-finite Mellin transform".into()));
    }
    Ok(v)
}

/// `conj(M χ_{[j,j+1]})(z) = ((j+1)^{1/2+iz} - j^{1/2+iz}) / (1/2+iz)`.
fn cell_transform_conj(j: usize, z: f64) -> C64 {
    let s = C64::new(0.5, z);
    let pow = |x: f64| if x == 0.0 { ZERO } else { (s * x.ln()).exp() };
    (pow(j as f64 + 1.0) - pow(j as f64)) / s
}

/// `G(b) = E_{-1} M^{-1} b M E_1` on the first `cells` unit cells of `R+`.
pub fn mellin_conv_matrix(b: &MellinSymbol, cells: usize) -> Result<CMatrix> {
    mellin_conv_matrix_with(b, cells, &MellinQuad::default())
}

/// The constant `c = (b(Z) + b(-Z))/2` contributes `c·I` exactly; the rest,
/// `b - c`, is integrated by the trapezoid rule on `[-Z, Z]`.
pub fn mellin_conv_matrix_with(b: &MellinSymbol, cells: usize, q: &MellinQuad) -> Result<CMatrix> {
    if q.nodes < 2 || !(q.z_max > 0.0) {
        return Err(Error::InvalidArgument(
            "bad Mellin quadrature settings".into(),
        ));
    }
    let zs: Vec<f64> = (0..q.nodes)
        .map(|i| -q.z_max + 2.0 * q.z_max * i as f64 / (q.nodes - 1) as f64)
        .collect();
    let bz: Vec<C64> = zs.iter().map(|&z| b.eval(z)).collect();
    if bz.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::Quadrature(format!(
            "symbol `{}` is not finite on the quadrature grid",
            b.name
        )));
    }
    let c = (bz[0] + bz[q.nodes - 1]) * 0.5;
    let h = zs[1] - zs[0];
    let mut g = CMatrix::identity(cells, cells) * c;
    let a: Vec<Vec<C64>> = zs
        .iter()
        .map(|&z| (0..cells).map(|j| cell_transform_conj(j, z)).collect())
        .collect();
    for (i, row) in a.iter().enumerate() {
        let w = if i == 0 || i == q.nodes - 1 { 0.5 } else { 1.0 };
        let f = (bz[i] - c) * (w * h / (2.0 * PI));
        if f == ZERO {
            continue;
        }
        for j in 0..cells {
            let fj = f * row[j];
            for k in 0..cells {
                g[(j, k)] += fj * row[k].conj();
            }
        }
    }
    if g.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::Quadrature("non-finite entries in G(b)".into()));
    }
    Ok(g)
}

/// Row-major CSV with `re,im` column pairs.
pub fn matrix_to_csv(m: &CMatrix) -> String {
    let mut s = String::new();
    let header: Vec<String> = (0..m.ncols())
        .flat_map(|j| [format!("re_{j}"), format!("im_{j}")])
        .collect();
    s.push_str(&header.join(","));
    s.push('\n');
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .flat_map(|j| [fmt17(m[(i, j)].re), fmt17(m[(i, j)].im)])
            .collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}
