//! Small dense helpers on top of nalgebra.

use nalgebra::DMatrix;

use crate::C64;

pub type CMatrix = DMatrix<C64>;

/// Relative cut below which the smallest singular value is reported as zero.
pub const SIGMA_REL_CUTOFF: f64 = 1e-12;

/// Singular values in descending order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

/// Smallest and largest singular value of a square matrix, with the
/// smallest one flushed to zero below `SIGMA_REL_CUTOFF * sigma_max`.
pub fn extreme_singular_values(m: &CMatrix) -> (f64, f64) {
    let sv = singular_values(m);
    let (Some(&smax), Some(&smin)) = (sv.first(), sv.last()) else {
        return (0.0, 0.0);
    };
    let smin = if smin <= SIGMA_REL_CUTOFF * smax || sv.len() < m.nrows().max(m.ncols()) {
        0.0
    } else {
        smin
    };
    (smin, smax)
}

/// Condition number `sigma_max / sigma_min`, infinite for a flushed minimum.
pub fn condition_number(smin: f64, smax: f64) -> f64 {
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Complex product through four real products, which take nalgebra's
/// blocked `f64` kernel instead of the generic one.
pub fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows(), "matmul shape mismatch");
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    re.zip_map(&im, C64::new)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == C64::new(0.0, 0.0) {
                continue;
            }
            for p in 0..br {
                for q in 0..bc {
                    out[(i * br + p, j * bc + q)] = s * b[(p, q)];
                }
            }
        }
    }
    out
}

/// Largest entrywise modulus of `a - b`; infinite on shape mismatch.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Assemble a block matrix from a row-major grid of equally sized blocks.
pub fn block_matrix(blocks: &[Vec<CMatrix>]) -> CMatrix {
    let rows = blocks.len();
    let cols = blocks.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 {
        return CMatrix::zeros(0, 0);
    }
    let (br, bc) = blocks[0][0].shape();
    let mut out = CMatrix::zeros(rows * br, cols * bc);
    for (i, row) in blocks.iter().enumerate() {
        for (j, b) in row.iter().enumerate() {
            out.view_mut((i * br, j * bc), (br, bc)).copy_from(b);
        }
    }
    out
}

/// Fixed 17-significant-digit rendering used in every CSV.
pub fn fmt17(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}
