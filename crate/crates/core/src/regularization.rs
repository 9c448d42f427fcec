//! The regularized symmetric quasi-metric `rho#` built by chain infima, and a
//! verifier for its metrization properties.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::space::{quasi_triangle_constant, Distance, PointId, QuasiMetricSpace};

/// Relative tolerance for the two-sided comparison with the original distance.
pub const COMPARISON_TOLERANCE: f64 = 1e-9;

/// Absolute tolerance for the power-alpha triangle inequality on normalized
/// distances.
pub const TRIANGLE_TOLERANCE: f64 = 1e-12;

/// Symmetric regularized distance together with its exponent and
/// comparability constant.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedMetric {
    /// `1 / log2(C_rho)`, or `+inf` when `C_rho = 1`.
    pub alpha0: f64,
    n: usize,
    rho_sharp: Vec<f64>,
    /// Least `c >= 1` with `c^{-1} rho <= rho# <= c rho` for all ordered pairs.
    pub comparability: f64,
}

impl Distance for RegularizedMetric {
    fn len(&self) -> usize {
        self.n
    }

    #[inline]
    fn dist(&self, i: PointId, j: PointId) -> f64 {
        self.rho_sharp[i * self.n + j]
    }
}

impl RegularizedMetric {
    pub fn rho_sharp_flat(&self) -> &[f64] {
        &self.rho_sharp
    }

    pub fn rho_sharp_rows(&self) -> Vec<Vec<f64>> {
        self.rho_sharp.chunks(self.n).map(|c| c.to_vec()).collect()
    }

    /// The space with the same points and masses and distance `rho#`.
    pub fn as_space(&self, space: &QuasiMetricSpace) -> QuasiMetricSpace {
        space.with_rho(self.rho_sharp.clone()).expect("rho# is nondegenerate and finite")
    }
}

/// `1 / log2(C)`, with `+inf` for `C = 1`.
pub fn exponent_for(c_rho: f64) -> f64 {
    if c_rho <= 1.0 {
        f64::INFINITY
    } else {
        1.0 / c_rho.log2()
    }
}

/// Regularize with the exponent `1 / log2(C_rho)` of the space itself.
pub fn regularize(space: &QuasiMetricSpace) -> Result<RegularizedMetric> {
    let summary = space.summary();
    let alpha0 = exponent_for(summary.c_rho);
    let reg = chain_regularize(space, alpha0);
    check_comparison(space, &reg, summary.c_rho, summary.c_tilde_rho)?;
    Ok(reg)
}

/// Regularize with a prescribed exponent `alpha` (`+inf` means no chaining).
///
/// The comparison with the original distance is not checked because it only
/// holds for exponents tied to the quasi-triangle constant.
pub fn regularize_with_exponent(space: &QuasiMetricSpace, alpha: f64) -> Result<RegularizedMetric> {
    if !(alpha > 0.0) {
        return Err(Error::AlphaOutOfRange {
            alpha,
            alpha0: f64::INFINITY,
        });
    }
    Ok(chain_regularize(space, alpha))
}

fn chain_regularize(space: &QuasiMetricSpace, alpha: f64) -> RegularizedMetric {
    let n = space.len();
    let mut sym = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            sym[i * n + j] = space.dist(i, j).max(space.dist(j, i));
        }
    }
    let rho_sharp = if alpha.is_infinite() {
        sym
    } else {
        let mut w: Vec<f64> = sym.iter().map(|d| d.powf(alpha)).collect();
        floyd_warshall(&mut w, n);
        let inv = 1.0 / alpha;
        let mut out: Vec<f64> = w.iter().map(|d| d.powf(inv)).collect();
        // Keep the output exactly symmetric regardless of rounding in the relaxation.
        for i in 0..n {
            out[i * n + i] = 0.0;
            for j in (i + 1)..n {
                let v = out[i * n + j].min(out[j * n + i]);
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    };
    let mut reg = RegularizedMetric {
        alpha0: alpha,
        n,
        rho_sharp,
        comparability: 1.0,
    };
    reg.comparability = comparability(space, &reg);
    reg
}

/// All-pairs shortest paths in place on a row-major weight matrix.
pub fn floyd_warshall(w: &mut [f64], n: usize) {
    for k in 0..n {
        for i in 0..n {
            let wik = w[i * n + k];
            if !wik.is_finite() {
                continue;
            }
            for j in 0..n {
                let cand = wik + w[k * n + j];
                if cand < w[i * n + j] {
                    w[i * n + j] = cand;
                }
            }
        }
    }
}

/// Least `c >= 1` with `c^{-1} a <= b <= c a` over all ordered pairs.
pub fn comparability<A: Distance + ?Sized, B: Distance + ?Sized>(a: &A, b: &B) -> f64 {
    let n = a.len();
    let mut c: f64 = 1.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (x, y) = (a.dist(i, j), b.dist(i, j));
            c = c.max(x / y).max(y / x);
        }
    }
    c
}

fn check_comparison(space: &QuasiMetricSpace, reg: &RegularizedMetric, c_rho: f64, c_tilde: f64) -> Result<()> {
    let n = space.len();
    let lower = c_rho.powi(-2);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let rho = space.dist(i, j);
            let sharp = reg.dist(i, j);
            if sharp < lower * rho * (1.0 - COMPARISON_TOLERANCE) {
                return Err(Error::MetrizationMismatch {
                    i,
                    j,
                    bound: "lower",
                    ratio: sharp / rho,
                });
            }
            if sharp > c_tilde * rho * (1.0 + COMPARISON_TOLERANCE) {
                return Err(Error::MetrizationMismatch {
                    i,
                    j,
                    bound: "upper",
                    ratio: sharp / rho,
                });
            }
        }
    }
    Ok(())
}

/// Worst violations of the metrization properties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetrizationReport {
    #[serde(serialize_with = "crate::report::num::f64")]
    pub alpha: f64,
    /// Largest `|rho#(x,y) - rho#(y,x)|`.
    pub symmetry_violation: f64,
    /// Largest `d(x,y) - d(x,z) - d(z,y)` for `d = (rho#)^alpha / max (rho#)^alpha`.
    pub triangle_violation: f64,
    /// Largest relative shortfall of `rho#` below `C_rho^{-2} rho`.
    pub lower_violation: f64,
    /// Largest relative excess of `rho#` above `C~_rho rho`.
    pub upper_violation: f64,
    pub symmetric: bool,
    pub triangle: bool,
    pub comparison: bool,
}

impl MetrizationReport {
    pub fn passed(&self) -> bool {
        self.symmetric && self.triangle && self.comparison
    }
}

/// Check symmetry, the power-`alpha` triangle inequality and the two-sided
/// comparison with the original distance.
pub fn verify_metrization(reg: &RegularizedMetric, space: &QuasiMetricSpace, alpha: f64) -> Result<MetrizationReport> {
    if !(alpha > 0.0 && alpha.is_finite() && alpha <= reg.alpha0) {
        return Err(Error::AlphaOutOfRange { alpha, alpha0: reg.alpha0 });
    }
    let n = reg.len();
    let summary = space.summary();
    let mut symmetry: f64 = 0.0;
    let mut lower: f64 = 0.0;
    let mut upper: f64 = 0.0;
    let bound_lo = summary.c_rho.powi(-2);
    for i in 0..n {
        for j in 0..n {
            symmetry = symmetry.max((reg.dist(i, j) - reg.dist(j, i)).abs());
            if i == j {
                continue;
            }
            let rho = space.dist(i, j);
            let sharp = reg.dist(i, j);
            lower = lower.max((bound_lo * rho - sharp) / (bound_lo * rho));
            upper = upper.max((sharp - summary.c_tilde_rho * rho) / (summary.c_tilde_rho * rho));
        }
    }
    let powered: Vec<f64> = reg.rho_sharp.iter().map(|d| d.powf(alpha)).collect();
    let scale = powered.iter().cloned().fold(0.0, f64::max);
    let mut triangle: f64 = 0.0;
    for x in 0..n {
        for y in 0..n {
            let dxy = powered[x * n + y] / scale;
            for z in 0..n {
                let v = dxy - powered[x * n + z] / scale - powered[z * n + y] / scale;
                triangle = triangle.max(v);
            }
        }
    }
    Ok(MetrizationReport {
        alpha,
        symmetry_violation: symmetry,
        triangle_violation: triangle,
        lower_violation: lower.max(0.0),
        upper_violation: upper.max(0.0),
        symmetric: symmetry == 0.0,
        triangle: triangle <= TRIANGLE_TOLERANCE,
        comparison: lower <= COMPARISON_TOLERANCE && upper <= COMPARISON_TOLERANCE,
    })
}

/// Quasi-triangle constant of `rho#`.
pub fn sharp_constant(reg: &RegularizedMetric) -> f64 {
    quasi_triangle_constant(reg)
}
