//! Finite sections on `Z_n = {-n, .., n-1}` and singular-value sweeps.
//!
//! A [`SectionMatrix`] stores the `2n×2n` block matrix (blocks of size `d`)
//! of `P_n A P_n`; block row/column `i` corresponds to the integer
//! `i - n`.

use std::fmt;

use rayon::prelude::*;

use crate::linalg::{condition_number, extreme_singular_values, fmt17, matmul, CMatrix};
use crate::opexpr::{canonical_form, Canonical, Factor, FiniteRank, NormalForm, OpExpr};
use crate::symbol::PCSymbol;
use crate::{Error, Result, C64};

/// Dense section matrix on `Z_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct SectionMatrix {
    n: usize,
    d: usize,
    data: CMatrix,
}

impl SectionMatrix {
    pub fn new(n: usize, d: usize, data: CMatrix) -> Result<Self> {
        let size = 2 * n * d;
        if data.nrows() != size || data.ncols() != size {
            return Err(Error::DimensionMismatch {
                expected: size,
                found: data.nrows(),
            });
        }
        Ok(Self { n, d, data })
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            data: CMatrix::zeros(2 * n * d, 2 * n * d),
        }
    }

    pub fn identity(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            data: CMatrix::identity(2 * n * d, 2 * n * d),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_data(self) -> CMatrix {
        self.data
    }

    /// Row/column offset of the block belonging to integer `i ∈ Z_n`.
    pub fn offset(&self, i: i64) -> Option<usize> {
        let n = self.n as i64;
        (-n..n).contains(&i).then(|| (i + n) as usize * self.d)
    }

    /// `d×d` block at integer indices `(i, j)`.
    pub fn block(&self, i: i64, j: i64) -> Option<CMatrix> {
        let r = self.offset(i)?;
        let c = self.offset(j)?;
        Some(self.data.view((r, c), (self.d, self.d)).into_owned())
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.d != other.d {
            return Err(Error::DimensionMismatch {
                expected: self.data.nrows(),
                found: other.data.nrows(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            data: &self.data + &other.data,
            ..*self
        })
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            data: matmul(&self.data, &other.data),
            ..*self
        })
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            data: &self.data * c,
            ..*self
        }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            data: self.data.adjoint(),
            ..*self
        }
    }

    /// `(sigma_min, sigma_max)` with the relative zero cut applied.
    pub fn extreme_singular_values(&self) -> (f64, f64) {
        extreme_singular_values(&self.data)
    }
}

/// Structured operators of the sequence zoo.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StructuredOp {
    /// `P_m`, identity on `Z_m`.
    Pn(usize),
    /// `W_m`, reversal of both halves of `Z_m`.
    Wn(usize),
    /// Shift `(x_{k-s})`.
    U(i64),
    /// `V_m` for `m > 0`, `V_{-m}` for `m < 0`.
    V(i64),
    /// `diag(τ^{-k})` with `τ = e^{iφ}`.
    Y(f64),
    J,
    P,
    Q,
}

impl StructuredOp {
    /// Parse `P_n`, `W_n`, `U_k`, `V_k`, `Y_tau`, `J`, `P` or `Q`; the numeric
    /// parameter is taken from `param` where needed.
    pub fn from_name(name: &str, param: Option<f64>) -> Result<Self> {
        let need =
            || param.ok_or_else(|| Error::InvalidArgument(format!("`{name}` needs a parameter")));
        let as_int = |x: f64| -> Result<i64> {
            if x.fract() != 0.0 {
                return Err(Error::InvalidArgument(format!("`{name}` needs an integer")));
            }
            Ok(x as i64)
        };
        Ok(match name {
            "P_n" => StructuredOp::Pn(as_int(need()?)?.max(0) as usize),
            "W_n" => StructuredOp::Wn(as_int(need()?)?.max(0) as usize),
            "U_k" => StructuredOp::U(as_int(need()?)?),
            "V_k" => StructuredOp::V(as_int(need()?)?),
            "Y_tau" => StructuredOp::Y(need()?),
            "J" => StructuredOp::J,
            "P" => StructuredOp::P,
            "Q" => StructuredOp::Q,
            _ => return Err(Error::UnknownOperator(name.to_string())),
        })
    }

    /// Image index and phase of basis vector `k`, or `None` if it is mapped
    /// to zero. `(T e_k) = phase · e_{image}`.
    fn action(&self, k: i64) -> Option<(i64, C64)> {
        let one = C64::new(1.0, 0.0);
        match *self {
            StructuredOp::Pn(m) => {
                let m = m as i64;
                (-m..m).contains(&k).then_some((k, one))
            }
            StructuredOp::Wn(m) => {
                let m = m as i64;
                if (0..m).contains(&k) {
                    Some((m - 1 - k, one))
                } else if (-m..0).contains(&k) {
                    Some((-m - 1 - k, one))
                } else {
                    None
                }
            }
            StructuredOp::U(s) => Some((k + s, one)),
            StructuredOp::V(m) if m >= 0 => {
                // y_k = x_{k-m} (k >= m), x_{k+m} (k < -m)
                Some((if k >= 0 { k + m } else { k - m }, one))
            }
            StructuredOp::V(m) => {
                // y_k = x_{k+|m|} (k >= 0), x_{k-|m|} (k < 0)
                let m = -m;
                if k >= m {
                    Some((k - m, one))
                } else if k < -m {
                    Some((k + m, one))
                } else {
                    None
                }
            }
            StructuredOp::Y(phi) => Some((k, C64::from_polar(1.0, -(k as f64) * phi))),
            StructuredOp::J => Some((-k - 1, one)),
            StructuredOp::P => (k >= 0).then_some((k, one)),
            StructuredOp::Q => (k < 0).then_some((k, one)),
        }
    }
}

/// Compression of a structured operator to `Z_n`.
pub fn structured_op(op: StructuredOp, n: usize, d: usize) -> SectionMatrix {
    let mut s = SectionMatrix::zeros(n, d);
    let ni = n as i64;
    for k in -ni..ni {
        if let Some((j, phase)) = op.action(k) {
            if let (Some(r), Some(c)) = (s.offset(j), s.offset(k)) {
                for t in 0..d {
                    s.data[(r + t, c + t)] = phase;
                }
            }
        }
    }
    s
}

/// Fourier coefficients `a_m` for `m ∈ [lo, hi]`.
fn coeff_table(sym: &PCSymbol, lo: i64, hi: i64) -> Vec<CMatrix> {
    (lo..=hi)
        .map(|m| sym.fourier_coeff(m).into_matrix())
        .collect()
}

/// Section of `L(a)P + L(b)Q + L(c)JP + L(d)JQ + K` from exact coefficients.
pub fn assemble_canonical(cf: &Canonical, n: usize) -> Result<SectionMatrix> {
    let d = cf.a.dim();
    for s in [&cf.b, &cf.c, &cf.d] {
        if s.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: s.dim(),
            });
        }
    }
    if cf.k.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: cf.k.dim(),
        });
    }
    let ni = n as i64;
    let span = 2 * ni - 1;
    let lo = -span;
    let tables: Vec<Option<Vec<CMatrix>>> = [&cf.a, &cf.b, &cf.c, &cf.d]
        .iter()
        .map(|s| (!s.is_zero()).then(|| coeff_table(s, lo, span)))
        .collect();
    let at = |t: usize, m: i64| tables[t].as_ref().map(|v| &v[(m - lo) as usize]);
    let mut out = SectionMatrix::zeros(n, d);
    for j in -ni..ni {
        let r = out.offset(j).unwrap();
        for k in -ni..ni {
            let c = out.offset(k).unwrap();
            let mut blk = CMatrix::zeros(d, d);
            let (t_toep, t_hank) = if k >= 0 { (0, 2) } else { (1, 3) };
            if let Some(x) = at(t_toep, j - k) {
                blk += x;
            }
            if let Some(x) = at(t_hank, j + k + 1) {
                blk += x;
            }
            if let Some(x) = cf.k.get(j, k) {
                blk += x.as_matrix();
            }
            out.data.view_mut((r, c), (d, d)).copy_from(&blk);
        }
    }
    Ok(out)
}

/// Dense block Laurent matrix `(a_{j-k})` on `Z_big`, restricted to the rows
/// in `rows`.
fn laurent_rows(sym: &PCSymbol, big: i64, rows: std::ops::Range<i64>) -> CMatrix {
    let d = sym.dim();
    let lo = rows.start - (big - 1);
    let hi = rows.end - 1 + big;
    let table = coeff_table(sym, lo, hi);
    let nr = (rows.end - rows.start) as usize;
    let mut out = CMatrix::zeros(nr * d, 2 * big as usize * d);
    for (ri, j) in rows.enumerate() {
        for k in -big..big {
            let blk = &table[(j - k - lo) as usize];
            out.view_mut((ri * d, (k + big) as usize * d), (d, d))
                .copy_from(blk);
        }
    }
    out
}

fn finite_rank_dense(k: &FiniteRank, big: i64) -> CMatrix {
    let d = k.dim();
    let size = 2 * big as usize * d;
    let mut out = CMatrix::zeros(size, size);
    for (&(i, j), m) in k.entries() {
        if (-big..big).contains(&i) && (-big..big).contains(&j) {
            out.view_mut(((i + big) as usize * d, (j + big) as usize * d), (d, d))
                .copy_from(m.as_matrix());
        }
    }
    out
}

/// Zero the columns of `m` (block index on `Z_big`) for which `keep` fails.
fn mask_cols(m: &mut CMatrix, big: i64, d: usize, keep: impl Fn(i64) -> bool) {
    for k in -big..big {
        if !keep(k) {
            let c = (k + big) as usize * d;
            m.columns_mut(c, d).fill(C64::new(0.0, 0.0));
        }
    }
}

/// `P_n (Π factors on Z_{n+margin}) P_n` for the normal form of `e`.
pub fn assemble_windowed(e: &OpExpr, n: usize, margin: usize) -> Result<SectionMatrix> {
    let nf = NormalForm::of(e)?;
    let d = nf.dim.unwrap_or(1);
    let ni = n as i64;
    let big = (n + margin) as i64;
    let mut total = CMatrix::zeros(2 * n * d, 2 * n * d);
    for term in &nf.terms {
        // Rows Z_n of the running product on Z_big.
        let mut rows = CMatrix::zeros(2 * n * d, 2 * big as usize * d);
        for r in 0..2 * n * d {
            rows[(r, r + margin * d)] = C64::new(1.0, 0.0);
        }
        // While no factor has been applied the running rows are exactly the
        // identity, so the first Laurent factor can be built directly.
        let mut untouched = true;
        for f in &term.word {
            match f {
                Factor::P => mask_cols(&mut rows, big, d, |k| k >= 0),
                Factor::Q => mask_cols(&mut rows, big, d, |k| k < 0),
                Factor::L(s) if untouched => rows = laurent_rows(&s.symbol, big, -ni..ni),
                Factor::L(s) => rows = matmul(&rows, &laurent_rows(&s.symbol, big, -big..big)),
                Factor::K(k) => rows = matmul(&rows, &finite_rank_dense(k, big)),
            }
            untouched = false;
        }
        let mut cut = CMatrix::zeros(2 * n * d, 2 * n * d);
        for k in -ni..ni {
            // Column k of (rows · J) is column -k-1 of rows.
            let src = if term.flip { -k - 1 } else { k };
            let sc = (src + big) as usize * d;
            let dc = (k + ni) as usize * d;
            cut.columns_mut(dc, d).copy_from(&rows.columns(sc, d));
        }
        total += cut * term.coef;
    }
    SectionMatrix::new(n, d, total)
}

/// Assemble `P_n A P_n`: exact canonical entries when the normal form has the
/// canonical shape, windowed composition with `margin` (default `4n`)
/// otherwise.
pub fn assemble(e: &OpExpr, n: usize, margin: Option<usize>) -> Result<SectionMatrix> {
    match canonical_form(e)? {
        Some(cf) => assemble_canonical(&cf, n),
        None => assemble_windowed(e, n, margin.unwrap_or(4 * n)),
    }
}

/// One row of a singular-value sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub sigma_min: f64,
    pub cond: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn sigma_mins(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.sigma_min).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,sigma_min,cond\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{}\n",
                r.n,
                fmt17(r.sigma_min),
                fmt17(r.cond)
            ));
        }
        s
    }
}

fn check_increasing(ns: &[usize]) -> Result<()> {
    if ns.is_empty() {
        return Err(Error::InvalidArgument("empty list of sizes".into()));
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "sizes must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Smallest singular value and condition number for every `n`, evaluated in
/// parallel.
pub fn sv_sweep<F>(builder: F, ns: &[usize]) -> Result<SweepResult>
where
    F: Fn(usize) -> Result<SectionMatrix> + Sync,
{
    check_increasing(ns)?;
    let rows = ns
        .par_iter()
        .map(|&n| {
            let m = builder(n)?;
            let (smin, smax) = m.extreme_singular_values();
            Ok(SweepRow {
                n,
                sigma_min: smin,
                cond: condition_number(smin, smax),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { rows })
}

/// Three-way numeric classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Classify a `σ_min` sequence: stable if the last `trend_window` values stay
/// at or above `floor`; unstable if the last value is below `floor` and the
/// window either contains an exact zero or never increases; inconclusive
/// otherwise.
pub fn classify_trend(sigma: &[f64], floor: f64, trend_window: usize) -> Verdict {
    if sigma.is_empty() {
        return Verdict::Inconclusive;
    }
    let w = trend_window.clamp(1, sigma.len());
    let tail = &sigma[sigma.len() - w..];
    if tail.iter().all(|&s| s >= floor) {
        return Verdict::Stable;
    }
    let last = *tail.last().unwrap();
    let hits_zero = tail.contains(&0.0);
    let monotone = tail.windows(2).all(|p| p[1] <= p[0]);
    if last < floor && (hits_zero || monotone) {
        Verdict::Unstable
    } else {
        Verdict::Inconclusive
    }
}

pub fn verdict_numeric(sweep: &SweepResult, floor: f64, trend_window: usize) -> Verdict {
    classify_trend(&sweep.sigma_mins(), floor, trend_window)
}
