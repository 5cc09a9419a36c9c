//! Shared test helpers: nested quadrature and random symbols.

#![allow(dead_code)]

use finsec::symbol::{MatrixValue, PCSymbol, Poly};
use finsec::C64;
use nalgebra::DMatrix;
use rand::Rng;

/// `∫_a^b dx ∫_c^d dy f(x, y)` by nested double-exponential quadrature.
pub fn double_integral(f: impl Fn(f64, f64) -> f64, a: f64, b: f64, c: f64, d: f64) -> f64 {
    quadrature::integrate(
        |x| quadrature::integrate(|y| f(x, y), c, d, 1e-14).integral,
        a,
        b,
        1e-13,
    )
    .integral
}

/// Random trigonometric polynomial with `|k| <= band` and `d×d` coefficients.
pub fn random_trig_poly(rng: &mut impl Rng, d: usize, band: i64) -> PCSymbol {
    let mut poly = Poly::new();
    for k in -band..=band {
        let m = DMatrix::from_fn(d, d, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        poly.insert(k, MatrixValue::from_matrix(m).unwrap());
    }
    PCSymbol::trig_poly(d, poly).unwrap()
}
