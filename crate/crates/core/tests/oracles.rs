//! Closed forms checked against independent quadrature.

mod common;

use std::f64::consts::{PI, TAU};

use finsec::linemodels::{discretize, mellin_transform, GridSpec, LineOp, LogGridSamples};
use finsec::symbol::{ArcPiece, Kernel, PCSymbol};
use finsec::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quad_c(f: impl Fn(f64) -> C64, a: f64, b: f64) -> C64 {
    let re = quadrature::integrate(|x| f(x).re, a, b, 1e-14).integral;
    let im = quadrature::integrate(|x| f(x).im, a, b, 1e-14).integral;
    C64::new(re, im)
}

/// Value of the piece's own trig polynomial, usable right up to its ends.
fn piece_value(p: &ArcPiece, phi: f64) -> C64 {
    p.poly
        .iter()
        .map(|(m, c)| c.as_matrix()[(0, 0)] * C64::from_polar(1.0, *m as f64 * phi))
        .sum()
}

/// `∫_0^{2π} a(e^{iφ}) w(φ) dφ`, split at the jumps so each integrand is smooth.
/// Pieces are further cut at `peak` (mod 2π) where the weight is sharp.
fn integrate_against(a: &PCSymbol, peak: f64, w: impl Fn(f64) -> C64) -> C64 {
    let mut total = C64::new(0.0, 0.0);
    for p in a.pieces() {
        let x = p.alpha + (peak - p.alpha).rem_euclid(TAU);
        let mut cuts = vec![p.alpha];
        if x > p.alpha && x < p.beta {
            cuts.push(x);
        }
        cuts.push(p.beta);
        for c in cuts.windows(2) {
            total += quad_c(|phi| piece_value(&p, phi) * w(phi), c[0], c[1]);
        }
    }
    total
}

fn random_scalar_pc(seed: u64) -> PCSymbol {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = common::random_trig_poly(&mut rng, 1, 2);
    let q = common::random_trig_poly(&mut rng, 1, 1);
    let alpha = rng.gen_range(0.0..TAU);
    let beta = alpha + rng.gen_range(0.5..(TAU - 0.5));
    let chi = PCSymbol::indicator(1, alpha, beta).unwrap();
    p.add(&q.mul(&chi).unwrap()).unwrap()
}

#[test]
fn half_circle_indicator_coefficient() {
    let chi = PCSymbol::indicator(1, 0.0, PI).unwrap();
    let a1 = chi.fourier_coeff(1).as_matrix()[(0, 0)];
    assert!((a1 - C64::new(0.0, -1.0 / PI)).norm() <= 1e-15);
    assert!((chi.fourier_coeff(0).as_matrix()[(0, 0)] - C64::new(0.5, 0.0)).norm() <= 1e-15);
    assert!(chi.fourier_coeff(2).as_matrix()[(0, 0)].norm() <= 1e-15);
}

#[test]
fn fourier_coefficients_match_quadrature() {
    for seed in 0..6 {
        let a = random_scalar_pc(seed);
        for k in -4i64..=4 {
            let want =
                integrate_against(&a, 0.0, |phi| C64::from_polar(1.0, -(k as f64) * phi)) / TAU;
            let got = a.fourier_coeff(k).as_matrix()[(0, 0)];
            assert!(
                (got - want).norm() <= 1e-12,
                "seed {seed} k {k}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn singular_integral_entries_match_quadrature() {
    let s = discretize(&LineOp::SingR, &GridSpec::symmetric(3, 6)).unwrap();
    let scale = C64::new(0.0, -1.0 / PI);
    for (r, c) in [(0usize, 5usize), (2, 9), (11, 1), (4, 7)] {
        let (j, k) = (r as f64 - 6.0, c as f64 - 6.0);
        let want = scale * common::double_integral(|x, y| 1.0 / (y - x), j, j + 1.0, k, k + 1.0);
        assert!(
            (s[(r, c)] - want).norm() <= 1e-11,
            "({r}, {c}): {} vs {want}",
            s[(r, c)]
        );
    }
    let n = discretize(&LineOp::HankelHalf, &GridSpec::half_line(2, Some(8))).unwrap();
    for (r, c) in [(0usize, 3usize), (1, 1), (5, 2), (7, 7)] {
        let (j, k) = (r as f64, c as f64);
        let want = scale * common::double_integral(|x, y| 1.0 / (x + y), j, j + 1.0, k, k + 1.0);
        assert!(
            (n[(r, c)] - want).norm() <= 1e-11,
            "({r}, {c}): {} vs {want}",
            n[(r, c)]
        );
    }
}

#[test]
fn mellin_transform_matches_quadrature() {
    let f = LogGridSamples::from_fn(|x| C64::new((-x).exp(), 0.0), -60.0, 5.0, 20001).unwrap();
    for z in [-1.5, 0.0, 0.7, 2.0] {
        let k = C64::new(0.5, -z);
        let want = quad_c(|u| (k * u).exp() * (-u.exp()).exp(), -60.0, 5.0);
        let got = mellin_transform(&f, z).unwrap();
        assert!((got - want).norm() <= 1e-9, "z {z}: {got} vs {want}");
    }
}

#[test]
fn poisson_mean_matches_quadrature() {
    let a = random_scalar_pc(11);
    for r in [0.3, 0.8] {
        for theta in [0.4, 2.0, 5.1] {
            let kernel = |phi: f64| {
                let t = theta - phi;
                C64::new((1.0 - r * r) / (1.0 - 2.0 * r * t.cos() + r * r), 0.0)
            };
            let want = integrate_against(&a, theta, kernel) / TAU;
            let got = a
                .approx_identity(Kernel::Poisson { r }, theta)
                .unwrap()
                .as_matrix()[(0, 0)];
            assert!(
                (got - want).norm() <= 1e-11,
                "r {r} theta {theta}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn fejer_mean_matches_quadrature() {
    let a = random_scalar_pc(12);
    let n = 9usize;
    let m = (n + 1) as f64;
    for theta in [0.1, 1.7, 4.4] {
        let kernel = |phi: f64| {
            let s = ((theta - phi) / 2.0).sin();
            let v = if s.abs() < 1e-9 {
                m
            } else {
                (m * (theta - phi) / 2.0).sin().powi(2) / (m * s * s)
            };
            C64::new(v, 0.0)
        };
        let want = integrate_against(&a, theta, kernel) / TAU;
        let got = a.fejer_mean(n, theta).as_matrix()[(0, 0)];
        assert!(
            (got - want).norm() <= 1e-11,
            "theta {theta}: {got} vs {want}"
        );
    }
}

#[test]
fn moving_average_matches_quadrature() {
    let a = random_scalar_pc(13);
    for lambda in [1.0, 2.5, 9.0] {
        let h = PI / lambda;
        for theta in [0.3, 3.0] {
            // window pieces split at every jump inside it
            let mut cuts = vec![theta - h, theta + h];
            for j in a.jumps() {
                for shift in [-TAU, 0.0, TAU] {
                    let x = j + shift;
                    if x > theta - h && x < theta + h {
                        cuts.push(x);
                    }
                }
            }
            cuts.sort_by(f64::total_cmp);
            let pieces = a.pieces();
            let want: C64 = cuts
                .windows(2)
                .map(|w| {
                    let mid = 0.5 * (w[0] + w[1]);
                    let p = pieces
                        .iter()
                        .find(|p| p.alpha + (mid - p.alpha).rem_euclid(TAU) < p.beta)
                        .unwrap();
                    quad_c(|phi| piece_value(p, phi), w[0], w[1])
                })
                .sum::<C64>()
                / (2.0 * h);
            let got = a
                .approx_identity(Kernel::MovingAverage { lambda }, theta)
                .unwrap()
                .as_matrix()[(0, 0)];
            assert!(
                (got - want).norm() <= 1e-11,
                "lambda {lambda} theta {theta}: {got} vs {want}"
            );
        }
    }
}
