//! Property tests for the algebraic invariants.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use finsec::linalg::max_abs_diff;
use finsec::localsym::{fiber_points, local_symbol_seq, LocalPoint};
use finsec::opexpr::{self, canonical_form, FiniteRank, OpExpr};
use finsec::sections::{assemble, assemble_canonical, sv_sweep};
use finsec::stability::{alpha_beta_j, stability_report, StabilityConfig};
use finsec::symbol::{MatrixValue, PCSymbol};
use finsec::symbolmaps::{laurent, map_p, map_u, map_w, same_operator, SeqExpr};
use finsec::C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Random symbol: trig polynomial plus a trig polynomial times an arc
/// indicator.
fn random_pc(seed: u64, d: usize) -> PCSymbol {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = common::random_trig_poly(&mut rng, d, 2);
    let q = common::random_trig_poly(&mut rng, d, 1);
    let alpha = rng.gen_range(0.0..TAU);
    let beta = alpha + rng.gen_range(0.3..(TAU - 0.3));
    let chi = PCSymbol::indicator(d, alpha, beta).unwrap();
    p.add(&q.mul(&chi).unwrap()).unwrap()
}

fn arcs_ok(a: &PCSymbol) -> bool {
    let pieces = a.pieces();
    let first = pieces[0].alpha;
    (0.0..TAU).contains(&first)
        && pieces
            .windows(2)
            .all(|w| w[0].beta == w[1].alpha && w[0].alpha < w[0].beta)
        && (pieces.last().unwrap().beta - (first + TAU)).abs() < 1e-12
}

/// Pool of scalar generators with finitely many nonzero coefficients.
fn leaf() -> impl Strategy<Value = OpExpr> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let a = common::random_trig_poly(&mut rng, 1, 2);
    let b = common::random_trig_poly(&mut rng, 1, 1);
    let mut k = BTreeMap::new();
    k.insert((0, -1), MatrixValue::scalar(1, C64::new(0.5, -1.0)));
    k.insert((2, 1), MatrixValue::scalar(1, c(2.0)));
    let k = FiniteRank::new(1, k).unwrap();
    prop_oneof![
        Just(OpExpr::Ident),
        Just(OpExpr::Proj),
        Just(OpExpr::CoProj),
        Just(OpExpr::Flip),
        Just(laurent("a", &a)),
        Just(laurent("b", &b)),
        Just(OpExpr::FiniteRank(k)),
    ]
}

fn expr() -> impl Strategy<Value = OpExpr> {
    leaf().prop_recursive(3, 16, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..3).prop_map(OpExpr::Sum),
            prop::collection::vec(inner.clone(), 1..4).prop_map(OpExpr::Prod),
            (-2.0..2.0f64, -2.0..2.0f64, inner.clone())
                .prop_map(|(re, im, e)| OpExpr::scale(C64::new(re, im), e)),
            inner.prop_map(|e| OpExpr::Adjoint(Box::new(e))),
        ]
    })
}

type Vector = BTreeMap<i64, C64>;

fn axpy(out: &mut Vector, k: i64, v: C64) {
    *out.entry(k).or_insert(c(0.0)) += v;
}

/// Direct action on finitely supported scalar sequences, independent of the
/// normal form machinery.
fn apply(e: &OpExpr, x: &Vector, adjoint: bool) -> Vector {
    let mut out = Vector::new();
    match e {
        OpExpr::Ident => out = x.clone(),
        OpExpr::Proj => {
            out = x
                .iter()
                .filter(|(k, _)| **k >= 0)
                .map(|(k, v)| (*k, *v))
                .collect()
        }
        OpExpr::CoProj => {
            out = x
                .iter()
                .filter(|(k, _)| **k < 0)
                .map(|(k, v)| (*k, *v))
                .collect()
        }
        OpExpr::Flip => out = x.iter().map(|(k, v)| (-k - 1, *v)).collect(),
        OpExpr::Laurent(s) => {
            let poly = s
                .symbol
                .as_trig_poly()
                .expect("pool symbols are trig polynomials");
            for (k, v) in x {
                for (m, a) in poly {
                    let a = a.as_matrix()[(0, 0)];
                    if adjoint {
                        axpy(&mut out, k - m, a.conj() * v);
                    } else {
                        axpy(&mut out, k + m, a * v);
                    }
                }
            }
        }
        OpExpr::FiniteRank(kr) => {
            for ((i, j), m) in kr.entries() {
                let m = m.as_matrix()[(0, 0)];
                if adjoint {
                    if let Some(v) = x.get(i) {
                        axpy(&mut out, *j, m.conj() * v);
                    }
                } else if let Some(v) = x.get(j) {
                    axpy(&mut out, *i, m * v);
                }
            }
        }
        OpExpr::Sum(v) => {
            for t in v {
                for (k, y) in apply(t, x, adjoint) {
                    axpy(&mut out, k, y);
                }
            }
        }
        OpExpr::Prod(v) => {
            let mut y = x.clone();
            if adjoint {
                for t in v {
                    y = apply(t, &y, true);
                }
            } else {
                for t in v.iter().rev() {
                    y = apply(t, &y, false);
                }
            }
            out = y;
        }
        OpExpr::Scale(s, t) => {
            let s = if adjoint { s.conj() } else { *s };
            out = apply(t, x, adjoint)
                .into_iter()
                .map(|(k, v)| (k, s * v))
                .collect();
        }
        OpExpr::Adjoint(t) => out = apply(t, x, !adjoint),
    }
    out
}

fn vec_diff(a: &Vector, b: &Vector) -> f64 {
    let keys: std::collections::BTreeSet<i64> = a.keys().chain(b.keys()).copied().collect();
    keys.into_iter()
        .map(|k| {
            (a.get(&k).copied().unwrap_or(c(0.0)) - b.get(&k).copied().unwrap_or(c(0.0))).norm()
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn symbol_algebra_keeps_partition(s1 in any::<u64>(), s2 in any::<u64>()) {
        let (a, b) = (random_pc(s1, 1), random_pc(s2, 1));
        for x in [a.add(&b).unwrap(), a.mul(&b).unwrap(), a.flip(), a.adjoint(), a.scale(c(2.5))] {
            prop_assert!(arcs_ok(&x));
        }
    }

    #[test]
    fn flip_is_an_involution(seed in any::<u64>(), d in 1usize..3) {
        let a = random_pc(seed, d);
        prop_assert!(a.flip().flip().approx_eq(&a, 0.0));
    }

    #[test]
    fn adjoint_coefficients(seed in any::<u64>(), k in -6i64..6) {
        let a = random_pc(seed, 2);
        let lhs = a.adjoint().fourier_coeff(k);
        let rhs = a.fourier_coeff(-k).adjoint();
        prop_assert!(max_abs_diff(lhs.as_matrix(), rhs.as_matrix()) <= 1e-15);
    }

    #[test]
    fn normalize_preserves_action(e in expr(), k in -4i64..4) {
        let nf = opexpr::normalize(&e).unwrap();
        let mut x = Vector::new();
        x.insert(k, c(1.0));
        x.insert(k + 1, C64::new(0.0, -0.5));
        prop_assert!(vec_diff(&apply(&e, &x, false), &apply(&nf, &x, false)) <= 1e-10);
    }

    #[test]
    fn adjoint_twice_is_identity(e in expr()) {
        let twice = opexpr::adjoint(&opexpr::adjoint(&e).unwrap()).unwrap();
        prop_assert!(
            opexpr::approx_eq(&twice, &e, 1e-12).unwrap(),
            "{e}\nnormal: {}\ntwice: {twice}",
            opexpr::normalize(&e).unwrap()
        );
    }

    #[test]
    fn canonical_form_round_trip(e in expr()) {
        if let Some(cf) = canonical_form(&e).unwrap() {
            prop_assert!(same_operator(&cf.to_expr(), &e, 1e-12).unwrap());
        }
    }

    #[test]
    fn canonical_assembly_of_adjoint(e in expr(), n in 1usize..12) {
        let adj = OpExpr::Adjoint(Box::new(e.clone()));
        if let (Some(c1), Some(c2)) = (canonical_form(&e).unwrap(), canonical_form(&adj).unwrap()) {
            let m = assemble_canonical(&c1, n).unwrap();
            let ma = assemble_canonical(&c2, n).unwrap();
            prop_assert!(max_abs_diff(ma.data(), &m.data().adjoint()) <= 1e-13);
        }
    }

    #[test]
    fn sections_match_direct_action(e in expr(), n in 6usize..14) {
        let m = assemble(&e, n, None).unwrap();
        let ni = n as i64;
        for k in [-ni, -1, 0, ni - 1] {
            let mut x = Vector::new();
            x.insert(k, c(1.0));
            // P_n A P_n e_k
            let y = apply(&e, &x, false);
            for j in -ni..ni {
                let want = y.get(&j).copied().unwrap_or(c(0.0));
                let got = m.data()[((j + ni) as usize, (k + ni) as usize)];
                prop_assert!((got - want).norm() <= 1e-10, "entry ({j}, {k}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn continuous_split_is_laurent(seed in any::<u64>(), n in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = common::random_trig_poly(&mut rng, 2, 3);
        let split = OpExpr::sum(vec![
            OpExpr::prod(vec![laurent("a", &a), OpExpr::Proj]),
            OpExpr::prod(vec![laurent("a", &a), OpExpr::CoProj]),
        ]);
        let cf = canonical_form(&split).unwrap().unwrap();
        let lhs = assemble_canonical(&cf, n).unwrap();
        let rhs = assemble(&laurent("a", &a), n, None).unwrap();
        prop_assert!(max_abs_diff(lhs.data(), rhs.data()) <= 1e-14);
    }

    #[test]
    fn strong_limits_are_homomorphisms(a in expr(), b in expr()) {
        let (sa, sb) = (SeqExpr::section(a.clone()), SeqExpr::section(b.clone()));
        let prod = SeqExpr::Prod(vec![sa.clone(), sb.clone()]);
        let pp = OpExpr::prod(vec![map_p(&sa).unwrap(), map_p(&sb).unwrap()]);
        let lhs = map_p(&prod).unwrap();
        prop_assert!(same_operator(&lhs, &pp, 1e-10).unwrap(), "{a}\n{b}\n{lhs}\n{}", opexpr::normalize(&pp).unwrap());
        let ww = OpExpr::prod(vec![map_w(&sa).unwrap(), map_w(&sb).unwrap()]);
        prop_assert!(same_operator(&map_w(&prod).unwrap(), &ww, 1e-10).unwrap());
        let uu = map_u(&a).unwrap().mul(&map_u(&b).unwrap());
        let uab = map_u(&OpExpr::prod(vec![a, b])).unwrap();
        prop_assert!(uab.approx_eq(&uu, 1e-10).unwrap());
    }

    #[test]
    fn w_limit_commutes_with_adjoint(a in expr()) {
        let s = SeqExpr::section(a);
        let lhs = map_w(&SeqExpr::Adjoint(Box::new(s.clone()))).unwrap();
        let rhs = opexpr::adjoint(&map_w(&s).unwrap()).unwrap();
        prop_assert!(same_operator(&lhs, &rhs, 1e-10).unwrap());
    }

    #[test]
    fn local_symbols_are_homomorphic(a in expr(), b in expr(), interior in any::<bool>()) {
        let p = if interior {
            LocalPoint::from_angle(2.0).unwrap()
        } else {
            LocalPoint::plus_one()
        };
        let (sa, sb) = (SeqExpr::section(a), SeqExpr::section(b));
        let cells = 8;
        let ma = local_symbol_seq(&sa, &p).unwrap().discretize(cells).unwrap();
        let mb = local_symbol_seq(&sb, &p).unwrap().discretize(cells).unwrap();
        let prod = local_symbol_seq(&SeqExpr::Prod(vec![sa.clone(), sb]), &p)
            .unwrap()
            .discretize(cells)
            .unwrap();
        prop_assert!(max_abs_diff(&prod, &(&ma * &mb)) <= 1e-10);
        let adj = local_symbol_seq(&SeqExpr::Adjoint(Box::new(sa)), &p)
            .unwrap()
            .discretize(cells)
            .unwrap();
        prop_assert!(max_abs_diff(&adj, &ma.adjoint()) <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn alpha_beta_corpus(alpha in 0.2f64..3.0, beta in 0.2f64..3.0, flip_sign in any::<bool>()) {
        prop_assume!((alpha - beta).abs() > 0.1);
        let beta = if flip_sign { -beta } else { beta };
        let s = SeqExpr::section(alpha_beta_j(c(alpha), c(beta)));
        let r = stability_report(&s, &quick()).unwrap();
        prop_assert_eq!(r.agreement, Some(true));
        prop_assert!(r.is_consistent());
    }

    #[test]
    fn report_is_invariant_under_adjoint_and_scaling(
        which in 0usize..3,
        lambda_re in 0.5f64..3.0,
        lambda_im in -1.0f64..1.0,
    ) {
        let s = SeqExpr::section(corpus()[which].1.clone());
        let lambda = C64::new(lambda_re, lambda_im);
        let base = stability_report(&s, &quick()).unwrap();
        let adj = stability_report(&SeqExpr::Adjoint(Box::new(s.clone())), &quick()).unwrap();
        let scaled = stability_report(&SeqExpr::Scale(lambda, Box::new(s)), &quick()).unwrap();
        for r in [&adj, &scaled] {
            prop_assert_eq!(r.predicted, base.predicted);
            prop_assert_eq!(r.observed_verdict, base.observed_verdict);
            prop_assert_eq!(r.cond_a.verdict, base.cond_a.verdict);
            prop_assert_eq!(r.cond_b.verdict, base.cond_b.verdict);
        }
        for (x, y) in base.observed.rows.iter().zip(&scaled.observed.rows) {
            prop_assert!((y.sigma_min - lambda.norm() * x.sigma_min).abs() <= 1e-10 * (1.0 + x.sigma_min));
        }
    }
}

fn quick() -> StabilityConfig {
    StabilityConfig {
        windows: vec![8, 16, 32, 64],
        local_grids: vec![16, 32, 64],
        ..StabilityConfig::default()
    }
}

fn corpus() -> Vec<(&'static str, OpExpr)> {
    let mut poly = finsec::symbol::Poly::new();
    poly.insert(1, MatrixValue::identity(1));
    let t = PCSymbol::trig_poly(1, poly.clone()).unwrap();
    poly.insert(0, MatrixValue::scalar(1, c(2.0)));
    let two_t = PCSymbol::trig_poly(1, poly).unwrap();
    let chi = laurent("chi", &PCSymbol::chi_plus(1));
    vec![
        ("shift", laurent("t", &t)),
        ("2I+J", alpha_beta_j(c(2.0), c(1.0))),
        ("L(2+t)", laurent("two_t", &two_t)),
        ("I+J", alpha_beta_j(c(1.0), c(1.0))),
        (
            "L(chi+)P+Q",
            OpExpr::sum(vec![OpExpr::prod(vec![chi, OpExpr::Proj]), OpExpr::CoProj]),
        ),
    ]
}

#[test]
fn curated_corpus_agrees() {
    for (name, a) in corpus() {
        let r = stability_report(&SeqExpr::section(a), &StabilityConfig::default()).unwrap();
        assert!(r.is_consistent(), "{name}");
        assert_eq!(r.agreement, Some(true), "{name}:\n{}", r.to_text());
    }
}

#[test]
fn sweeps_are_deterministic() {
    let a = alpha_beta_j(c(1.5), C64::new(0.2, 0.7));
    let run = || sv_sweep(|n| assemble(&a, n, None), &[4, 8, 16, 32]).unwrap();
    let first = run();
    for _ in 0..3 {
        assert_eq!(run().to_csv(), first.to_csv());
    }
}

#[test]
fn fejer_means_converge() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = common::random_trig_poly(&mut rng, 1, 2);
    let b = PCSymbol::indicator(1, 1.0, 4.0).unwrap();
    let sym = a.add(&b).unwrap();
    for i in 0..10 {
        let theta = 0.05 + i as f64 * 0.6;
        if (theta - 1.0).abs() < 0.2 || (theta - 4.0).abs() < 0.2 {
            continue;
        }
        let f = sym.fejer_mean(500, theta);
        let v = sym.eval(theta).unwrap();
        assert!((f.as_matrix()[(0, 0)] - v.as_matrix()[(0, 0)]).norm() <= 0.05);
    }
    for (alpha, beta) in [(1.0, 4.0), (0.0, PI), (2.0, 2.5)] {
        let chi = PCSymbol::indicator(1, alpha, beta).unwrap();
        for tau in [alpha, beta] {
            let (plus, minus) = chi.one_sided_limits(tau);
            let mid = (plus.as_matrix()[(0, 0)] + minus.as_matrix()[(0, 0)]) * 0.5;
            let f = chi.fejer_mean(500, tau).as_matrix()[(0, 0)];
            assert!((f - mid).norm() <= 0.05);
        }
    }
}

#[test]
fn unit_sequence_has_identity_symbol_everywhere() {
    let chi = laurent("chi", &PCSymbol::chi_plus(1));
    let s = SeqExpr::section(OpExpr::prod(vec![chi, OpExpr::Flip]));
    let unit = SeqExpr::section(OpExpr::Ident);
    let mut points = fiber_points(&s);
    points.push(LocalPoint::from_angle(1.3).unwrap());
    for p in points {
        let m = local_symbol_seq(&unit, &p).unwrap().discretize(8).unwrap();
        let id = if p.is_interior() { 32 } else { 16 };
        assert!(max_abs_diff(&m, &nalgebra::DMatrix::identity(id, id)) == 0.0);
    }
}

#[test]
fn boundary_symbols_of_continuous_data_collapse() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = common::random_trig_poly(&mut rng, 1, 2);
    let e = OpExpr::sum(vec![laurent("a", &a), OpExpr::scale(c(2.0), OpExpr::Proj)]);
    let ls = local_symbol_seq(&SeqExpr::section(e), &LocalPoint::plus_one()).unwrap();
    assert!(!ls.to_string().contains("S_R"), "{ls}");
}
