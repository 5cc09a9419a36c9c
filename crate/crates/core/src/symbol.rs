//! Matrix-valued piecewise trigonometric polynomials on the unit circle.
//!
//! A [`PCSymbol`] is stored as a cyclic list of arcs `(b_i, b_{i+1}]` with
//! breakpoints in `[0, 2π)`, each carrying a finitely supported map from
//! Fourier modes to `d×d` matrices. The class is closed under sums, products,
//! adjoints and the flip `ã(t) = a(1/t)`, and Fourier coefficients are exact.
//!
//! One-sided limits follow the counterclockwise convention:
//! `a(τ+0) = lim_{x→+0} a(τ e^{ix})`.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::linalg::CMatrix;
use crate::{Error, Result, C64};

/// Limits closer than this (Frobenius norm) are treated as continuous.
pub const JUMP_TOL: f64 = 1e-12;
/// Polynomials whose coefficients agree to this are merged into one arc.
pub const MERGE_TOL: f64 = 1e-14;
/// Breakpoints closer than this are identified.
const ANGLE_TOL: f64 = 1e-12;

/// A `d×d` complex matrix, the value type of every symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixValue(CMatrix);

impl MatrixValue {
    pub fn from_matrix(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidArgument(format!(
                "matrix value must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix value".into()));
        }
        Ok(Self(m))
    }

    /// Row-major construction.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument("ragged matrix rows".into()));
        }
        Self::from_matrix(CMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn zeros(d: usize) -> Self {
        Self(CMatrix::zeros(d, d))
    }

    pub fn identity(d: usize) -> Self {
        Self(CMatrix::identity(d, d))
    }

    pub fn scalar(d: usize, c: C64) -> Self {
        Self(CMatrix::identity(d, d) * c)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scale(&self, c: C64) -> Self {
        Self(&self.0 * c)
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.0.norm() <= tol
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.dim() == other.dim() && (&self.0 - &other.0).norm() <= tol
    }

    /// `Some(c)` when the matrix is `c·I` up to `tol`.
    pub fn as_scalar(&self, tol: f64) -> Option<C64> {
        let c = self.0[(0, 0)];
        let d = self.dim();
        let diff = &self.0 - CMatrix::identity(d, d) * c;
        (diff.norm() <= tol).then_some(c)
    }

    /// Smallest singular value.
    pub fn sigma_min(&self) -> f64 {
        self.0
            .clone()
            .singular_values()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

impl Add for &MatrixValue {
    type Output = MatrixValue;
    fn add(self, rhs: &MatrixValue) -> MatrixValue {
        MatrixValue(&self.0 + &rhs.0)
    }
}

impl Sub for &MatrixValue {
    type Output = MatrixValue;
    fn sub(self, rhs: &MatrixValue) -> MatrixValue {
        MatrixValue(&self.0 - &rhs.0)
    }
}

impl Mul for &MatrixValue {
    type Output = MatrixValue;
    fn mul(self, rhs: &MatrixValue) -> MatrixValue {
        MatrixValue(&self.0 * &rhs.0)
    }
}

impl Neg for &MatrixValue {
    type Output = MatrixValue;
    fn neg(self) -> MatrixValue {
        MatrixValue(-&self.0)
    }
}

/// Finitely supported Fourier series `Σ_k c_k e^{ikθ}`.
pub type Poly = BTreeMap<i64, MatrixValue>;

/// One arc `(alpha, beta]` of a symbol with its trigonometric polynomial.
#[derive(Clone, Debug, PartialEq)]
pub struct ArcPiece {
    pub alpha: f64,
    pub beta: f64,
    pub poly: Poly,
}

/// Block piecewise trigonometric polynomial on the unit circle.
#[derive(Clone, Debug)]
pub struct PCSymbol {
    d: usize,
    breaks: Vec<f64>,
    polys: Vec<Poly>,
}

fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

fn cyclic_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn poly_eval(poly: &Poly, d: usize, theta: f64) -> MatrixValue {
    let mut acc = CMatrix::zeros(d, d);
    for (k, c) in poly {
        let phase = C64::from_polar(1.0, *k as f64 * theta);
        acc += c.as_matrix() * phase;
    }
    MatrixValue(acc)
}

fn poly_approx_eq(a: &Poly, b: &Poly, tol: f64) -> bool {
    let keys: std::collections::BTreeSet<_> = a.keys().chain(b.keys()).collect();
    keys.into_iter().all(|k| match (a.get(k), b.get(k)) {
        (Some(x), Some(y)) => x.approx_eq(y, tol),
        (Some(x), None) | (None, Some(x)) => x.is_zero(tol),
        (None, None) => true,
    })
}

fn poly_prune(mut p: Poly) -> Poly {
    p.retain(|_, c| !c.is_zero(1e-15));
    p
}

fn poly_add(a: &Poly, b: &Poly) -> Poly {
    let mut out = a.clone();
    for (k, c) in b {
        out.entry(*k)
            .and_modify(|x| *x = &*x + c)
            .or_insert_with(|| c.clone());
    }
    poly_prune(out)
}

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out: Poly = BTreeMap::new();
    for (ka, ca) in a {
        for (kb, cb) in b {
            let prod = ca * cb;
            out.entry(ka + kb)
                .and_modify(|x| *x = &*x + &prod)
                .or_insert(prod);
        }
    }
    poly_prune(out)
}

/// `∫_u^v e^{iqθ} dθ`.
fn exp_integral(q: i64, u: f64, v: f64) -> C64 {
    if q == 0 {
        C64::new(v - u, 0.0)
    } else {
        let qf = q as f64;
        (C64::from_polar(1.0, qf * v) - C64::from_polar(1.0, qf * u)) / C64::new(0.0, qf)
    }
}

impl PCSymbol {
    fn from_parts(d: usize, breaks: Vec<f64>, polys: Vec<Poly>) -> Self {
        let mut s = Self { d, breaks, polys };
        s.normalize();
        s
    }

    /// Constant symbol `c`.
    pub fn constant(c: MatrixValue) -> Self {
        let d = c.dim();
        Self::trig_poly(d, BTreeMap::from([(0, c)])).expect("constant has matching dimension")
    }

    /// Scalar constant `c·I_d`.
    pub fn scalar(d: usize, c: C64) -> Self {
        Self::constant(MatrixValue::scalar(d, c))
    }

    pub fn zero(d: usize) -> Self {
        Self::from_parts(d, vec![0.0], vec![Poly::new()])
    }

    pub fn identity(d: usize) -> Self {
        Self::scalar(d, C64::new(1.0, 0.0))
    }

    /// `c·e^{ikθ}`.
    pub fn monomial(k: i64, c: MatrixValue) -> Self {
        let d = c.dim();
        Self::trig_poly(d, BTreeMap::from([(k, c)])).expect("monomial has matching dimension")
    }

    /// Continuous trigonometric polynomial.
    pub fn trig_poly(d: usize, poly: Poly) -> Result<Self> {
        for c in poly.values() {
            if c.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: c.dim(),
                });
            }
        }
        Ok(Self::from_parts(d, vec![0.0], vec![poly_prune(poly)]))
    }

    /// Scalar indicator of the arc `(alpha, beta)`, times `I_d`.
    pub fn indicator(d: usize, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite()) || beta <= alpha {
            return Err(Error::InvalidPartition(format!(
                "indicator arc ({alpha}, {beta}) must have beta > alpha"
            )));
        }
        if beta - alpha >= TAU - ANGLE_TOL {
            return Ok(Self::identity(d));
        }
        let one = BTreeMap::from([(0, MatrixValue::identity(d))]);
        let a = wrap_angle(alpha);
        let b = wrap_angle(beta);
        let (breaks, polys) = if a < b {
            (vec![a, b], vec![one, Poly::new()])
        } else {
            (vec![b, a], vec![Poly::new(), one])
        };
        Ok(Self::from_parts(d, breaks, polys))
    }

    /// `χ_+`: one on the upper half circle (angles in `(0, π)`), zero below.
    pub fn chi_plus(d: usize) -> Self {
        Self::indicator(d, 0.0, PI).expect("valid arc")
    }

    /// `χ_-`: one on the lower half circle.
    pub fn chi_minus(d: usize) -> Self {
        Self::indicator(d, PI, TAU).expect("valid arc")
    }

    /// Build from explicit arcs. Arcs must be contiguous, sorted and cover
    /// exactly one turn starting at an angle in `[0, 2π)`.
    pub fn from_pieces(d: usize, pieces: Vec<ArcPiece>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument(
                "block dimension must be positive".into(),
            ));
        }
        let Some(first) = pieces.first() else {
            return Err(Error::InvalidPartition("no pieces".into()));
        };
        if !(0.0..TAU).contains(&first.alpha) {
            return Err(Error::InvalidPartition(format!(
                "first arc must start in [0, 2π), got {}",
                first.alpha
            )));
        }
        let start = first.alpha;
        let mut breaks = Vec::with_capacity(pieces.len());
        let mut polys = Vec::with_capacity(pieces.len());
        let mut cursor = start;
        for (i, p) in pieces.iter().enumerate() {
            if !(p.alpha.is_finite() && p.beta.is_finite()) {
                return Err(Error::NonFinite(format!("arc {i}")));
            }
            if p.beta <= p.alpha {
                return Err(Error::InvalidPartition(format!(
                    "arc {i} has beta {} <= alpha {}",
                    p.beta, p.alpha
                )));
            }
            if (p.alpha - cursor).abs() > ANGLE_TOL {
                return Err(Error::InvalidPartition(format!(
                    "arc {i} starts at {} but previous arc ends at {cursor}",
                    p.alpha
                )));
            }
            for c in p.poly.values() {
                if c.dim() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: c.dim(),
                    });
                }
            }
            breaks.push(wrap_angle(p.alpha));
            polys.push(poly_prune(p.poly.clone()));
            cursor = p.beta;
        }
        if (cursor - (start + TAU)).abs() > ANGLE_TOL {
            return Err(Error::InvalidPartition(format!(
                "arcs cover [{start}, {cursor}] instead of one full turn"
            )));
        }
        // Rotate so that breakpoints are sorted in [0, 2π).
        let rot = breaks
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        breaks.rotate_left(rot);
        polys.rotate_left(rot);
        Ok(Self::from_parts(d, breaks, polys))
    }

    /// Merge neighbouring arcs carrying the same polynomial; a single arc is
    /// anchored at angle 0.
    fn normalize(&mut self) {
        let mut changed = true;
        while changed && self.breaks.len() > 1 {
            changed = false;
            let m = self.breaks.len();
            for i in 0..m {
                let prev = (i + m - 1) % m;
                if poly_approx_eq(&self.polys[prev], &self.polys[i], MERGE_TOL) {
                    self.breaks.remove(i);
                    self.polys.remove(i);
                    changed = true;
                    break;
                }
            }
        }
        if self.breaks.len() == 1 {
            self.breaks[0] = 0.0;
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Arcs in increasing order; the last arc wraps past `2π`.
    pub fn pieces(&self) -> Vec<ArcPiece> {
        let m = self.breaks.len();
        (0..m)
            .map(|i| ArcPiece {
                alpha: self.breaks[i],
                beta: if i + 1 < m {
                    self.breaks[i + 1]
                } else {
                    self.breaks[0] + TAU
                },
                poly: self.polys[i].clone(),
            })
            .collect()
    }

    /// `Some(p)` when the symbol is a single continuous trigonometric polynomial.
    pub fn as_trig_poly(&self) -> Option<&Poly> {
        (self.breaks.len() == 1).then(|| &self.polys[0])
    }

    /// Largest `|k|` among stored modes.
    pub fn bandwidth(&self) -> i64 {
        self.polys
            .iter()
            .flat_map(|p| p.keys())
            .map(|k| k.abs())
            .max()
            .unwrap_or(0)
    }

    /// `Some(c)` when the symbol is a constant matrix.
    pub fn as_constant(&self) -> Option<MatrixValue> {
        let p = self.as_trig_poly()?;
        match p.len() {
            0 => Some(MatrixValue::zeros(self.d)),
            1 => p.get(&0).cloned(),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.breaks.len() == 1 && self.polys[0].is_empty()
    }

    fn piece_after(&self, theta: f64) -> usize {
        // Arc containing (θ, θ+ε).
        let t = wrap_angle(theta);
        match self.breaks.iter().rposition(|b| *b <= t) {
            Some(i) => i,
            None => self.breaks.len() - 1,
        }
    }

    fn piece_before(&self, theta: f64) -> usize {
        // Arc containing (θ-ε, θ).
        let t = wrap_angle(theta);
        match self.breaks.iter().rposition(|b| *b < t) {
            Some(i) => i,
            None => self.breaks.len() - 1,
        }
    }

    /// Angles where the left and right limits differ.
    pub fn jumps(&self) -> Vec<f64> {
        let m = self.breaks.len();
        if m == 1 {
            return Vec::new();
        }
        (0..m)
            .filter(|&i| {
                let b = self.breaks[i];
                let prev = (i + m - 1) % m;
                let left = poly_eval(&self.polys[prev], self.d, b);
                let right = poly_eval(&self.polys[i], self.d, b);
                !left.approx_eq(&right, JUMP_TOL)
            })
            .map(|i| self.breaks[i])
            .collect()
    }

    pub fn is_continuous(&self) -> bool {
        self.jumps().is_empty()
    }

    /// Pointwise value away from jumps.
    pub fn eval(&self, theta: f64) -> Result<MatrixValue> {
        if !theta.is_finite() {
            return Err(Error::NonFinite("angle".into()));
        }
        if self
            .jumps()
            .iter()
            .any(|j| cyclic_distance(*j, theta) <= ANGLE_TOL)
        {
            return Err(Error::AmbiguousPoint { angle: theta });
        }
        Ok(poly_eval(
            &self.polys[self.piece_before(theta)],
            self.d,
            theta,
        ))
    }

    /// `(a(τ+0), a(τ-0))` with `a(τ±0) = lim_{x→±0} a(τ e^{ix})`.
    pub fn one_sided_limits(&self, tau: f64) -> (MatrixValue, MatrixValue) {
        let plus = poly_eval(&self.polys[self.piece_after(tau)], self.d, tau);
        let minus = poly_eval(&self.polys[self.piece_before(tau)], self.d, tau);
        (plus, minus)
    }

    /// Exact `a_k = (1/2π) ∫_0^{2π} a(e^{iφ}) e^{-ikφ} dφ`.
    pub fn fourier_coeff(&self, k: i64) -> MatrixValue {
        if let Some(p) = self.as_trig_poly() {
            return p
                .get(&k)
                .cloned()
                .unwrap_or_else(|| MatrixValue::zeros(self.d));
        }
        let mut acc = CMatrix::zeros(self.d, self.d);
        for piece in self.pieces() {
            for (m, c) in &piece.poly {
                acc += c.as_matrix() * exp_integral(m - k, piece.alpha, piece.beta);
            }
        }
        MatrixValue(acc / C64::new(TAU, 0.0))
    }

    /// Exact `∫_u^v a(e^{iθ}) dθ` for any real `u <= v`.
    pub fn integrate(&self, u: f64, v: f64) -> MatrixValue {
        self.integrate_about(0.0, u, v)
    }

    /// `∫_u^v a(e^{i(c+t)}) dt`. Break points are measured from `c`, so a
    /// window symmetric about a break splits into exactly equal halves.
    fn integrate_about(&self, c: f64, u: f64, v: f64) -> MatrixValue {
        let mut acc = CMatrix::zeros(self.d, self.d);
        if v <= u {
            return MatrixValue(acc);
        }
        let pieces = self.pieces();
        let base = pieces[0].alpha;
        let lo = ((c + u - base) / TAU).floor() as i64 - 1;
        let hi = ((c + v - base) / TAU).ceil() as i64 + 1;
        for shift in lo..=hi {
            let s = shift as f64 * TAU;
            for piece in &pieces {
                let a = (piece.alpha + s - c).max(u);
                let b = (piece.beta + s - c).min(v);
                if b <= a {
                    continue;
                }
                for (m, coef) in &piece.poly {
                    let phase = C64::from_polar(1.0, *m as f64 * c);
                    acc += coef.as_matrix() * (exp_integral(*m, a, b) * phase);
                }
            }
        }
        MatrixValue(acc)
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.d != other.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: other.d,
            });
        }
        Ok(())
    }

    /// Combine two symbols arc by arc on their common refinement.
    fn zip_with(&self, other: &Self, f: impl Fn(&Poly, &Poly) -> Poly) -> Result<Self> {
        self.check_dim(other)?;
        let mut breaks: Vec<f64> = self.breaks.iter().chain(&other.breaks).copied().collect();
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup_by(|a, b| (*a - *b).abs() <= ANGLE_TOL);
        let m = breaks.len();
        let polys = (0..m)
            .map(|i| {
                let a = breaks[i];
                let b = if i + 1 < m {
                    breaks[i + 1]
                } else {
                    breaks[0] + TAU
                };
                let mid = 0.5 * (a + b);
                let pa = &self.polys[self.piece_before(mid)];
                let pb = &other.polys[other.piece_before(mid)];
                f(pa, pb)
            })
            .collect();
        Ok(Self::from_parts(self.d, breaks, polys))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, poly_add)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    /// Pointwise product `a(t)·b(t)`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, poly_mul)
    }

    pub fn scale(&self, c: C64) -> Self {
        let polys = self
            .polys
            .iter()
            .map(|p| poly_prune(p.iter().map(|(k, v)| (*k, v.scale(c))).collect()))
            .collect();
        Self::from_parts(self.d, self.breaks.clone(), polys)
    }

    /// Pointwise conjugate transpose `a(t)^*`.
    pub fn adjoint(&self) -> Self {
        let polys = self
            .polys
            .iter()
            .map(|p| p.iter().map(|(k, v)| (-k, v.adjoint())).collect())
            .collect();
        Self::from_parts(self.d, self.breaks.clone(), polys)
    }

    /// `ã(t) = a(1/t)`, i.e. `θ ↦ -θ`.
    pub fn flip(&self) -> Self {
        let m = self.breaks.len();
        let mut arcs: Vec<(f64, Poly)> = (0..m)
            .map(|i| {
                let end = if i + 1 < m {
                    self.breaks[i + 1]
                } else {
                    self.breaks[0] + TAU
                };
                let poly = self.polys[i].iter().map(|(k, v)| (-k, v.clone())).collect();
                (wrap_angle(-end), poly)
            })
            .collect();
        arcs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let (breaks, polys) = arcs.into_iter().unzip();
        Self::from_parts(self.d, breaks, polys)
    }

    /// Equality of normalized representations up to `tol`.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.d == other.d
            && self.breaks.len() == other.breaks.len()
            && self
                .breaks
                .iter()
                .zip(&other.breaks)
                .all(|(a, b)| (a - b).abs() <= tol.max(ANGLE_TOL))
            && self
                .polys
                .iter()
                .zip(&other.polys)
                .all(|(a, b)| poly_approx_eq(a, b, tol))
    }

    /// Fejér–Cesàro mean `Σ_{|k|<=n} (1 - |k|/(n+1)) a_k e^{ikθ}`.
    pub fn fejer_mean(&self, n: usize, theta: f64) -> MatrixValue {
        let n = n as i64;
        let mut acc = CMatrix::zeros(self.d, self.d);
        for k in -n..=n {
            let w = 1.0 - k.unsigned_abs() as f64 / (n + 1) as f64;
            acc += self.fourier_coeff(k).as_matrix() * C64::from_polar(w, k as f64 * theta);
        }
        MatrixValue(acc)
    }

    /// Smoothed value by one of the approximate identities.
    pub fn approx_identity(&self, kernel: Kernel, theta: f64) -> Result<MatrixValue> {
        match kernel {
            Kernel::MovingAverage { lambda } => {
                if !(lambda >= 1.0) || !lambda.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "moving average needs lambda >= 1, got {lambda}"
                    )));
                }
                let h = PI / lambda;
                Ok(MatrixValue(
                    self.integrate_about(theta, -h, h).into_matrix() / C64::new(2.0 * h, 0.0),
                ))
            }
            Kernel::Poisson { r } => {
                if !(0.0..1.0).contains(&r) {
                    return Err(Error::InvalidArgument(format!(
                        "Poisson kernel needs 0 <= r < 1, got {r}"
                    )));
                }
                let kmax = if r == 0.0 {
                    0
                } else {
                    ((1e-17f64).ln() / r.ln()).ceil().min(1e6) as i64
                };
                let mut acc = self.fourier_coeff(0).into_matrix();
                for k in 1..=kmax {
                    let w = r.powi(k as i32);
                    acc += self.fourier_coeff(k).as_matrix() * C64::from_polar(w, k as f64 * theta);
                    acc += self.fourier_coeff(-k).as_matrix()
                        * C64::from_polar(w, -(k as f64) * theta);
                }
                Ok(MatrixValue(acc))
            }
        }
    }
}

/// Approximate identities used for smoothing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kernel {
    /// `(λ/2π) ∫_{θ-π/λ}^{θ+π/λ}`, `λ >= 1`.
    MovingAverage { lambda: f64 },
    /// Abel–Poisson mean with radius `0 <= r < 1`.
    Poisson { r: f64 },
}

impl fmt::Display for MatrixValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.dim() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "[")?;
            for j in 0..self.dim() {
                if j > 0 {
                    write!(f, ", ")?;
                }
                let z = self.0[(i, j)];
                write!(f, "[{}, {}]", z.re, z.im)?;
            }
            write!(f, "]")?;
        }
        write!(f, "]")
    }
}

// ---------------------------------------------------------------------------
// Textual literal: `{arc: [alpha, beta], modes: {k: matrix}}` pieces.

/// Angle literal: a number or a string such as `"pi"`, `"2pi/3"`, `"-0.5*pi"`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum AngleLiteral {
    Number(f64),
    Expr(String),
}

impl AngleLiteral {
    pub fn value(&self) -> Result<f64> {
        match self {
            AngleLiteral::Number(x) => Ok(*x),
            AngleLiteral::Expr(s) => parse_angle(s),
        }
    }
}

/// Parse `[-]<num>`, `[-][num][*]pi[/num]`.
pub fn parse_angle(s: &str) -> Result<f64> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let t = t.to_ascii_lowercase();
    if let Ok(x) = t.parse::<f64>() {
        return Ok(x);
    }
    let err = || Error::Parse(format!("bad angle literal `{s}`"));
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.as_str()),
    };
    let pos = body.find("pi").ok_or_else(err)?;
    let coef_str = body[..pos].trim_end_matches('*');
    let coef = if coef_str.is_empty() {
        1.0
    } else {
        coef_str.parse::<f64>().map_err(|_| err())?
    };
    let rest = &body[pos + 2..];
    let denom = if rest.is_empty() {
        1.0
    } else {
        rest.strip_prefix('/')
            .ok_or_else(err)?
            .parse::<f64>()
            .map_err(|_| err())?
    };
    let v = coef * PI / denom;
    Ok(if neg { -v } else { v })
}

/// Complex entries as `[re, im]`; a bare number is real.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum MatrixLiteral {
    Real(f64),
    Complex([f64; 2]),
    Matrix(Vec<Vec<[f64; 2]>>),
}

impl MatrixLiteral {
    pub fn to_value(&self, d: usize) -> Result<MatrixValue> {
        match self {
            MatrixLiteral::Real(x) => {
                MatrixValue::from_matrix(CMatrix::identity(d, d) * C64::new(*x, 0.0))
            }
            MatrixLiteral::Complex([re, im]) => {
                MatrixValue::from_matrix(CMatrix::identity(d, d) * C64::new(*re, *im))
            }
            MatrixLiteral::Matrix(rows) => {
                if rows.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: rows.len(),
                    });
                }
                let rows: Vec<Vec<C64>> = rows
                    .iter()
                    .map(|r| r.iter().map(|[re, im]| C64::new(*re, *im)).collect())
                    .collect();
                MatrixValue::from_rows(&rows)
            }
        }
    }

    pub fn from_value(m: &MatrixValue) -> Self {
        let d = m.dim();
        MatrixLiteral::Matrix(
            (0..d)
                .map(|i| {
                    (0..d)
                        .map(|j| {
                            let z = m.as_matrix()[(i, j)];
                            [z.re, z.im]
                        })
                        .collect()
                })
                .collect(),
        )
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PieceLiteral {
    pub arc: [AngleLiteral; 2],
    #[serde(default)]
    pub modes: BTreeMap<String, MatrixLiteral>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SymbolLiteral {
    #[serde(default = "default_dim")]
    pub d: usize,
    pub pieces: Vec<PieceLiteral>,
}

fn default_dim() -> usize {
    1
}

impl SymbolLiteral {
    pub fn build(&self) -> Result<PCSymbol> {
        let pieces = self
            .pieces
            .iter()
            .map(|p| {
                let mut poly = Poly::new();
                for (k, m) in &p.modes {
                    let k: i64 = k
                        .trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad Fourier mode `{k}`")))?;
                    let v = m.to_value(self.d)?;
                    poly.entry(k).and_modify(|x| *x = &*x + &v).or_insert(v);
                }
                Ok(ArcPiece {
                    alpha: p.arc[0].value()?,
                    beta: p.arc[1].value()?,
                    poly,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        PCSymbol::from_pieces(self.d, pieces)
    }

    pub fn from_symbol(sym: &PCSymbol) -> Self {
        Self {
            d: sym.dim(),
            pieces: sym
                .pieces()
                .into_iter()
                .map(|p| PieceLiteral {
                    arc: [AngleLiteral::Number(p.alpha), AngleLiteral::Number(p.beta)],
                    modes: p
                        .poly
                        .iter()
                        .map(|(k, v)| (k.to_string(), MatrixLiteral::from_value(v)))
                        .collect(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn s1(z: C64) -> MatrixValue {
        MatrixValue::scalar(1, z)
    }

    #[test]
    fn eval_constant_and_mode() {
        let k = PCSymbol::scalar(1, c(2.0, -1.0));
        assert_eq!(k.eval(1.234).unwrap(), s1(c(2.0, -1.0)));
        let t = PCSymbol::monomial(1, s1(c(1.0, 0.0)));
        let v = t.eval(PI).unwrap().as_matrix()[(0, 0)];
        assert!((v - c(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn eval_chi_plus_and_jump_error() {
        let chi = PCSymbol::chi_plus(1);
        assert_eq!(chi.eval(PI / 2.0).unwrap(), s1(c(1.0, 0.0)));
        assert_eq!(chi.eval(3.0 * PI / 2.0).unwrap(), s1(c(0.0, 0.0)));
        assert!(matches!(chi.eval(0.0), Err(Error::AmbiguousPoint { .. })));
        assert!(matches!(chi.eval(PI), Err(Error::AmbiguousPoint { .. })));
        assert!(matches!(chi.eval(TAU), Err(Error::AmbiguousPoint { .. })));
    }

    #[test]
    fn one_sided_limits_of_chi_plus() {
        let chi = PCSymbol::chi_plus(1);
        let (p, m) = chi.one_sided_limits(0.0);
        assert_eq!((p, m), (s1(c(1.0, 0.0)), s1(c(0.0, 0.0))));
        let (p, m) = chi.one_sided_limits(PI);
        assert_eq!((p, m), (s1(c(0.0, 0.0)), s1(c(1.0, 0.0))));
        let t = PCSymbol::monomial(2, s1(c(1.0, 0.0)));
        let (p, m) = t.one_sided_limits(0.7);
        assert!(p.approx_eq(&m, 1e-15));
        assert!(p.approx_eq(&t.eval(0.7).unwrap(), 1e-15));
    }

    #[test]
    fn fourier_of_constant_and_mode() {
        let k = PCSymbol::scalar(1, c(3.0, 0.5));
        assert!(k.fourier_coeff(0).approx_eq(&s1(c(3.0, 0.5)), 1e-15));
        assert!(k.fourier_coeff(2).is_zero(1e-15));
        let m = PCSymbol::monomial(3, s1(c(0.0, 2.0)));
        assert!(m.fourier_coeff(3).approx_eq(&s1(c(0.0, 2.0)), 1e-15));
        for k in [-3, 0, 1, 2, 4] {
            assert!(m.fourier_coeff(k).is_zero(1e-15));
        }
    }

    #[test]
    fn chi_plus_is_idempotent() {
        let chi = PCSymbol::chi_plus(2);
        assert!(chi.mul(&chi).unwrap().approx_eq(&chi, 1e-14));
    }

    #[test]
    fn adjoint_of_scaled_mode() {
        let m = MatrixValue::from_rows(&[
            vec![c(1.0, 1.0), c(0.0, 2.0)],
            vec![c(3.0, 0.0), c(0.0, -1.0)],
        ])
        .unwrap();
        let a = PCSymbol::monomial(1, m.clone());
        let expected = PCSymbol::monomial(-1, m.adjoint());
        assert!(a.adjoint().approx_eq(&expected, 1e-15));
    }

    #[test]
    fn dimension_mismatch() {
        let a = PCSymbol::identity(1);
        let b = PCSymbol::identity(2);
        assert!(matches!(a.mul(&b), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(a.add(&b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn flip_of_mode_and_indicator() {
        let m = PCSymbol::monomial(2, s1(c(1.0, 0.0)));
        assert!(m
            .flip()
            .approx_eq(&PCSymbol::monomial(-2, s1(c(1.0, 0.0))), 1e-15));
        let chi = PCSymbol::indicator(1, 0.5, 2.0).unwrap();
        let expected = PCSymbol::indicator(1, -2.0, -0.5).unwrap();
        assert!(chi.flip().approx_eq(&expected, 1e-14));
        // even symbol: cos θ
        let cos = PCSymbol::trig_poly(
            1,
            BTreeMap::from([(1, s1(c(0.5, 0.0))), (-1, s1(c(0.5, 0.0)))]),
        )
        .unwrap();
        assert!(cos.flip().approx_eq(&cos, 1e-15));
    }

    #[test]
    fn flip_swaps_jump_limits() {
        let a = PCSymbol::indicator(1, 0.3, 1.1).unwrap();
        let f = a.flip();
        let mut jumps = f.jumps();
        jumps.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!((jumps[0] - (TAU - 1.1)).abs() < 1e-12);
        assert!((jumps[1] - (TAU - 0.3)).abs() < 1e-12);
        let (p, m) = a.one_sided_limits(0.3);
        let (fp, fm) = f.one_sided_limits(-0.3);
        assert_eq!(p, fm);
        assert_eq!(m, fp);
    }

    #[test]
    fn fejer_examples() {
        let k = PCSymbol::scalar(1, c(0.25, 1.0));
        assert!(k.fejer_mean(7, 2.0).approx_eq(&s1(c(0.25, 1.0)), 1e-15));
        let t = PCSymbol::monomial(1, s1(c(1.0, 0.0)));
        assert!(t.fejer_mean(1, 0.0).approx_eq(&s1(c(0.5, 0.0)), 1e-15));
    }

    #[test]
    fn approx_identity_examples() {
        let k = PCSymbol::scalar(1, c(-2.0, 0.5));
        for kernel in [
            Kernel::MovingAverage { lambda: 3.0 },
            Kernel::Poisson { r: 0.7 },
        ] {
            assert!(k
                .approx_identity(kernel, 1.0)
                .unwrap()
                .approx_eq(&s1(c(-2.0, 0.5)), 1e-14));
        }
        let chi = PCSymbol::chi_plus(1);
        for lambda in [1.0, 2.0, 3.7, 100.0, 12345.5] {
            let v = chi
                .approx_identity(Kernel::MovingAverage { lambda }, 0.0)
                .unwrap();
            assert_eq!(v, s1(c(0.5, 0.0)), "lambda = {lambda}");
        }
        let t = PCSymbol::monomial(1, s1(c(1.0, 0.0)));
        let v = t.approx_identity(Kernel::Poisson { r: 0.3 }, 0.0).unwrap();
        assert!(v.approx_eq(&s1(c(0.3, 0.0)), 1e-15));
        assert!(chi
            .approx_identity(Kernel::Poisson { r: 1.0 }, 0.0)
            .is_err());
        assert!(chi
            .approx_identity(Kernel::MovingAverage { lambda: 0.5 }, 0.0)
            .is_err());
    }

    #[test]
    fn partition_validation() {
        let one = BTreeMap::from([(0, MatrixValue::identity(1))]);
        let gap = vec![
            ArcPiece {
                alpha: 0.0,
                beta: 1.0,
                poly: one.clone(),
            },
            ArcPiece {
                alpha: 1.5,
                beta: TAU,
                poly: Poly::new(),
            },
        ];
        assert!(matches!(
            PCSymbol::from_pieces(1, gap),
            Err(Error::InvalidPartition(_))
        ));
        let short = vec![ArcPiece {
            alpha: 0.0,
            beta: 3.0,
            poly: one.clone(),
        }];
        assert!(PCSymbol::from_pieces(1, short).is_err());
        let wrapped = vec![
            ArcPiece {
                alpha: 1.0,
                beta: 2.0,
                poly: one.clone(),
            },
            ArcPiece {
                alpha: 2.0,
                beta: 1.0 + TAU,
                poly: Poly::new(),
            },
        ];
        let s = PCSymbol::from_pieces(1, wrapped).unwrap();
        assert!(s.approx_eq(&PCSymbol::indicator(1, 1.0, 2.0).unwrap(), 1e-15));
    }

    #[test]
    fn normalization_merges_equal_arcs() {
        let one = BTreeMap::from([(0, MatrixValue::identity(1))]);
        let pieces = vec![
            ArcPiece {
                alpha: 0.0,
                beta: 1.0,
                poly: one.clone(),
            },
            ArcPiece {
                alpha: 1.0,
                beta: 2.0,
                poly: one.clone(),
            },
            ArcPiece {
                alpha: 2.0,
                beta: TAU,
                poly: one,
            },
        ];
        let s = PCSymbol::from_pieces(1, pieces).unwrap();
        assert_eq!(s.pieces().len(), 1);
        assert!(s.jumps().is_empty());
    }

    #[test]
    fn angle_literals() {
        assert_eq!(parse_angle("pi").unwrap(), PI);
        assert!((parse_angle("2pi/3").unwrap() - 2.0 * PI / 3.0).abs() < 1e-15);
        assert!((parse_angle("-0.5*pi").unwrap() + 0.5 * PI).abs() < 1e-15);
        assert_eq!(parse_angle("1.25").unwrap(), 1.25);
        assert!(parse_angle("tau").is_err());
    }

    #[test]
    fn literal_rejects_non_finite_modes() {
        for lit in [
            MatrixLiteral::Real(f64::NAN),
            MatrixLiteral::Complex([0.0, f64::INFINITY]),
        ] {
            assert!(matches!(lit.to_value(2), Err(Error::NonFinite(_))));
        }
        assert!(MatrixLiteral::Complex([1.0, -2.0]).to_value(2).is_ok());
    }
}
