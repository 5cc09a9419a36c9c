//! Stability criterion for sequences: invertibility of the two strong limits
//! and of all local symbols, checked against a direct singular value sweep of
//! the sequence itself.

use std::f64::consts::PI;
use std::fmt;

use crate::localsym::{
    check_local_invertibility, fiber_points, local_symbol_seq, Invertibility, LocalCheck,
    LocalPoint, LocalSymbol,
};
use crate::opexpr::{Factor, NormalForm, OpExpr};
use crate::sections::{assemble, classify_trend, sv_sweep, SweepResult, Verdict};
use crate::symbol::{MatrixValue, PCSymbol};
use crate::symbolmaps::{assemble_seq, map_p, map_w, with_dim, SeqExpr};
use crate::{Error, Result, C64};

/// How a verdict was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Pointwise `σ_min` of a Laurent symbol.
    ExactSymbol,
    /// `σ_min` trend of growing compressions or discretizations.
    TrendHeuristic,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::ExactSymbol => "exact-symbol",
            Method::TrendHeuristic => "trend-heuristic",
        })
    }
}

/// `(size, σ_min)`; `size` is a window for compressions and the number of
/// sample angles for the symbol path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvidenceRow {
    pub size: usize,
    pub sigma_min: f64,
}

#[derive(Clone, Debug)]
pub struct OperatorEvidence {
    pub operator: OpExpr,
    pub method: Method,
    pub verdict: Invertibility,
    pub rows: Vec<EvidenceRow>,
}

impl OperatorEvidence {
    pub fn to_csv(&self) -> String {
        let head = match self.method {
            Method::ExactSymbol => "angles,sigma_min\n",
            Method::TrendHeuristic => "window,sigma_min\n",
        };
        let mut s = String::from(head);
        for r in &self.rows {
            s.push_str(&format!(
                "{},{}\n",
                r.size,
                crate::linalg::fmt17(r.sigma_min)
            ));
        }
        s
    }
}

/// Number of equispaced angles for the symbol path.
pub const SYMBOL_SAMPLES: usize = 4096;

/// The Laurent symbol of `e` if `e` is a single multiplication operator.
fn as_laurent(e: &OpExpr) -> Result<Option<PCSymbol>> {
    let nf = NormalForm::of(e)?;
    let d = nf.dim.unwrap_or(1);
    match nf.terms.as_slice() {
        [] => Ok(Some(PCSymbol::zero(d))),
        [t] if !t.flip => match t.word.as_slice() {
            [] => Ok(Some(PCSymbol::scalar(d, t.coef))),
            [Factor::L(s)] => Ok(Some(s.symbol.scale(t.coef))),
            _ => Ok(None),
        },
        _ => Ok(None),
    }
}

fn symbol_sigma_min(a: &PCSymbol) -> Result<f64> {
    let mut smin = f64::INFINITY;
    for i in 0..SYMBOL_SAMPLES {
        let theta = 2.0 * PI * i as f64 / SYMBOL_SAMPLES as f64;
        let (plus, minus) = a.one_sided_limits(theta);
        smin = smin.min(plus.sigma_min()).min(minus.sigma_min());
    }
    for j in a.jumps() {
        let (plus, minus) = a.one_sided_limits(j);
        smin = smin.min(plus.sigma_min()).min(minus.sigma_min());
    }
    if !smin.is_finite() {
        return Err(Error::NonFinite("symbol singular values".into()));
    }
    Ok(smin)
}

/// Invertibility of an operator: pointwise symbol test for multiplication
/// operators, otherwise the `σ_min` trend of `P_m A P_m` over the windows.
/// The trend test is a heuristic: compressions of an invertible operator
/// need not be uniformly invertible.
pub fn check_operator_invertibility(
    a: &OpExpr,
    windows: &[usize],
    floor: f64,
) -> Result<OperatorEvidence> {
    if windows.is_empty() || windows.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "windows must be strictly increasing".into(),
        ));
    }
    let d = a.validate()?.unwrap_or(1);
    if let Some(sym) = as_laurent(a)? {
        let smin = symbol_sigma_min(&sym)?;
        return Ok(OperatorEvidence {
            operator: a.clone(),
            method: Method::ExactSymbol,
            verdict: if smin >= floor {
                Invertibility::Invertible
            } else {
                Invertibility::Singular
            },
            rows: vec![EvidenceRow {
                size: SYMBOL_SAMPLES,
                sigma_min: smin,
            }],
        });
    }
    let e = with_dim(a, d);
    let sweep = sv_sweep(|m| assemble(&e, m, None), windows)?;
    let rows: Vec<EvidenceRow> = sweep
        .rows
        .iter()
        .map(|r| EvidenceRow {
            size: r.n,
            sigma_min: r.sigma_min,
        })
        .collect();
    let sigma = sweep.sigma_mins();
    Ok(OperatorEvidence {
        operator: a.clone(),
        method: Method::TrendHeuristic,
        verdict: classify_trend(&sigma, floor, sigma.len()).into(),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityConfig {
    pub floor: f64,
    /// Windows for compressions and for the observed sweep.
    pub windows: Vec<usize>,
    /// Cells per unit for local symbol discretizations.
    pub local_grids: Vec<usize>,
    /// Extra assembly margin for non-canonical expressions.
    pub margin: Option<usize>,
    /// Extra interior angles in `(0, π)` to audit.
    pub extra_points: Vec<f64>,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            floor: 1e-6,
            windows: vec![16, 32, 64, 128],
            local_grids: vec![32, 64, 128],
            margin: None,
            extra_points: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LocalEvidence {
    pub point: LocalPoint,
    pub symbol: LocalSymbol,
    pub check: LocalCheck,
}

#[derive(Clone, Debug)]
pub struct StabilityReport {
    pub cond_a: OperatorEvidence,
    pub cond_b: OperatorEvidence,
    pub cond_c: Vec<LocalEvidence>,
    pub cond_d: Vec<LocalEvidence>,
    pub predicted: Verdict,
    pub observed: SweepResult,
    pub observed_verdict: Verdict,
    /// `None` when either side is inconclusive.
    pub agreement: Option<bool>,
}

/// Combine evidence verdicts: stable iff all invertible, unstable if any is
/// singular.
pub fn predict(verdicts: impl IntoIterator<Item = Invertibility>) -> Verdict {
    let mut all = true;
    for v in verdicts {
        match v {
            Invertibility::Singular => return Verdict::Unstable,
            Invertibility::Inconclusive => all = false,
            Invertibility::Invertible => {}
        }
    }
    if all {
        Verdict::Stable
    } else {
        Verdict::Inconclusive
    }
}

impl StabilityReport {
    fn evidence_verdicts(&self) -> Vec<Invertibility> {
        let mut v = vec![self.cond_a.verdict, self.cond_b.verdict];
        v.extend(self.cond_c.iter().map(|e| e.check.verdict));
        v.extend(self.cond_d.iter().map(|e| e.check.verdict));
        v
    }

    /// The predicted verdict agrees with the evidence lists.
    pub fn is_consistent(&self) -> bool {
        self.predicted == predict(self.evidence_verdicts())
    }

    /// Key-value text with nested tables.
    pub fn to_text(&self) -> String {
        use crate::linalg::fmt17;
        let mut s = String::new();
        let op = |s: &mut String, key: &str, e: &OperatorEvidence| {
            s.push_str(&format!("[{key}]\n"));
            s.push_str(&format!("operator = {}\n", e.operator));
            s.push_str(&format!("method = {}\n", e.method));
            s.push_str(&format!("verdict = {}\n", e.verdict));
            for r in &e.rows {
                s.push_str(&format!("  {} {}\n", r.size, fmt17(r.sigma_min)));
            }
        };
        op(&mut s, "cond_a", &self.cond_a);
        op(&mut s, "cond_b", &self.cond_b);
        for (key, list) in [("cond_c", &self.cond_c), ("cond_d", &self.cond_d)] {
            s.push_str(&format!("[{key}]\ncount = {}\n", list.len()));
            for e in list {
                s.push_str(&format!("point = {}\n", e.point));
                s.push_str(&format!("symbol = {}\n", e.symbol));
                s.push_str("method = trend-heuristic\n");
                s.push_str(&format!("verdict = {}\n", e.check.verdict));
                for r in &e.check.rows {
                    s.push_str(&format!("  {} {}\n", r.cells, fmt17(r.sigma_min)));
                }
            }
        }
        s.push_str("[observed]\nmethod = trend-heuristic\n");
        s.push_str(&format!("verdict = {}\n", self.observed_verdict));
        for r in &self.observed.rows {
            s.push_str(&format!(
                "  {} {} {}\n",
                r.n,
                fmt17(r.sigma_min),
                fmt17(r.cond)
            ));
        }
        s.push_str("[summary]\n");
        s.push_str("qc_part = constants only\n");
        s.push_str(&format!("predicted = {}\n", self.predicted));
        s.push_str(&format!("observed = {}\n", self.observed_verdict));
        s.push_str(&format!(
            "agreement = {}\n",
            match self.agreement {
                Some(true) => "yes",
                Some(false) => "no",
                None => "n/a",
            }
        ));
        s
    }
}

/// Evaluate all four conditions and the direct sweep.
pub fn stability_report(s: &SeqExpr, config: &StabilityConfig) -> Result<StabilityReport> {
    if !(config.floor > 0.0) {
        return Err(Error::InvalidArgument("floor must be positive".into()));
    }
    s.validate()?;
    let pa = map_p(s)?;
    let wa = map_w(s)?;
    let mut points = fiber_points(s);
    for &t in &config.extra_points {
        let p = LocalPoint::from_angle(t)?;
        if !points.iter().any(|q| (q.tau - p.tau).abs() <= 1e-12) {
            points.push(p);
        }
    }
    points.sort_by(|a, b| a.tau.total_cmp(&b.tau));

    let ((cond_a, cond_b), (locals, observed)) = rayon::join(
        || {
            rayon::join(
                || check_operator_invertibility(&pa, &config.windows, config.floor),
                || check_operator_invertibility(&wa, &config.windows, config.floor),
            )
        },
        || {
            rayon::join(
                || {
                    points
                        .iter()
                        .map(|p| {
                            let symbol = local_symbol_seq(s, p)?;
                            let check = check_local_invertibility(
                                &symbol,
                                &config.local_grids,
                                config.floor,
                            )?;
                            Ok(LocalEvidence {
                                point: *p,
                                symbol,
                                check,
                            })
                        })
                        .collect::<Result<Vec<_>>>()
                },
                || sv_sweep(|n| assemble_seq(s, n, config.margin), &config.windows),
            )
        },
    );
    let (cond_a, cond_b, locals, observed) = (cond_a?, cond_b?, locals?, observed?);
    let (cond_c, cond_d): (Vec<_>, Vec<_>) =
        locals.into_iter().partition(|e| e.point.is_interior());
    let sigma = observed.sigma_mins();
    let observed_verdict = classify_trend(&sigma, config.floor, sigma.len());
    let mut report = StabilityReport {
        cond_a,
        cond_b,
        cond_c,
        cond_d,
        predicted: Verdict::Inconclusive,
        observed,
        observed_verdict,
        agreement: None,
    };
    report.predicted = predict(report.evidence_verdicts());
    report.agreement = match (report.predicted, report.observed_verdict) {
        (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => None,
        (p, o) => Some(p == o),
    };
    Ok(report)
}

/// `αI + βJ`.
pub fn alpha_beta_j(alpha: C64, beta: C64) -> OpExpr {
    OpExpr::sum(vec![
        OpExpr::scale(alpha, OpExpr::Ident),
        OpExpr::scale(beta, OpExpr::Flip),
    ])
}

/// `L(c_0 + c_1 t)`.
pub fn affine_laurent(name: &str, c0: C64, c1: C64) -> Result<OpExpr> {
    let mut poly = crate::symbol::Poly::new();
    poly.insert(0, MatrixValue::scalar(1, c0));
    poly.insert(1, MatrixValue::scalar(1, c1));
    Ok(crate::symbolmaps::laurent(
        name,
        &PCSymbol::trig_poly(1, poly)?,
    ))
}
