//! Exact geometric and measure-theoretic constants of finite spaces.
//!
//! Every ball measure `r -> mu(B(x,r))` of an open ball is a left-continuous
//! step function that jumps right after each distance from `x`, so suprema and
//! infima over continuous radii reduce to finitely many critical radii.

use serde::Serialize;

use crate::error::Result;
use crate::regularization::{exponent_for, floyd_warshall, regularize, sharp_constant};
use crate::space::{Distance, PointId, QuasiMetricSpace};

/// Default lower threshold on the perfectness ratio below which a finite space
/// is reported as not uniformly perfect.
pub const PERFECTNESS_FLOOR: f64 = 0.125;

/// Largest `t` in `[0, r]` whose open ball carries at most half of the mass of
/// `B(x, r)`.
pub fn half_mass_radius(space: &QuasiMetricSpace, x: PointId, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let half = space.open_ball_measure(x, r) / 2.0;
    let dists = space.distances_from(x);
    // On (d_i, d_{i+1}] the open ball holds exactly the points at distance <= d_i.
    let mut phi = 0.0;
    let mut cum = 0.0;
    for (i, &d) in dists.iter().enumerate() {
        if d >= r {
            break;
        }
        cum += (0..space.len())
            .filter(|&y| space.dist(x, y) == d)
            .map(|y| space.mu()[y])
            .sum::<f64>();
        if cum <= half {
            let next = dists.get(i + 1).copied().unwrap_or(f64::INFINITY);
            phi = next.min(r);
        } else {
            break;
        }
    }
    phi
}

/// Outcome of the uniform perfectness scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Perfectness {
    /// Supremum of admissible `lambda` over the scanned radii.
    pub lambda_star: f64,
    /// Center and radius attaining the supremum, if any radius was scanned.
    pub witness: Option<(PointId, f64)>,
    /// Threshold used for the verdict.
    pub floor: f64,
    /// `lambda_star >= floor`.
    pub perfect: bool,
}

impl Perfectness {
    /// The ratio as a usable constant, or `NotPerfect`.
    pub fn lambda(&self) -> Result<f64> {
        if self.perfect {
            Ok(self.lambda_star)
        } else {
            Err(crate::error::Error::NotPerfect {
                critical_ratio: self.lambda_star,
            })
        }
    }
}

/// Uniform perfectness ratio of a finite space.
///
/// The condition is scanned at every radius `r` with `d_1(x) < r <= d_max(x)`,
/// where `d_1(x)` and `d_max(x)` are the smallest and largest positive
/// distances from `x`: below `d_1(x)` every ball is the bare center and no
/// finite space can satisfy the condition. For `r` in `(d_i, d_{i+1}]` the
/// annulus `B(x,r) \ B(x, lambda r)` is nonempty exactly when
/// `lambda <= d_i / r`, so the supremum is the least ratio of consecutive
/// distinct distances from a center. A space with no scanned radius has
/// `lambda_star = 1`.
pub fn uniform_perfectness(space: &QuasiMetricSpace, floor: f64) -> Perfectness {
    let mut lambda_star: f64 = 1.0;
    let mut witness = None;
    for x in 0..space.len() {
        let d = space.distances_from(x);
        for w in d[1..].windows(2) {
            let ratio = w[0] / w[1];
            if ratio < lambda_star || witness.is_none() {
                lambda_star = lambda_star.min(ratio);
                witness = Some((x, w[1]));
            }
        }
    }
    Perfectness {
        lambda_star,
        witness,
        floor,
        perfect: lambda_star >= floor,
    }
}

/// Best constants in the lower and upper Ahlfors conditions for exponent `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegularityFit {
    pub q: f64,
    /// `min mu(B(x,r)) / r^Q` over centers and radii in `(0, diam]`.
    pub kappa: f64,
    /// `sup mu(B(x,r)) / r^Q`; infinite on every finite space since point
    /// masses are positive and `r -> 0`.
    #[serde(serialize_with = "crate::report::num::f64")]
    pub upper_c: f64,
    /// Ball attaining `kappa`.
    pub witness: (PointId, f64),
}

/// Radii at which `mu(B_open(x, .)) / r^Q` attains its minimum on each
/// constancy interval inside `(0, cap]`: the positive distances from `x` up to
/// `cap`, and `cap` itself.
pub fn critical_radii(space: &QuasiMetricSpace, x: PointId, cap: f64) -> Vec<f64> {
    let mut radii: Vec<f64> = space.distances_from(x).into_iter().filter(|&d| d > 0.0 && d <= cap).collect();
    if radii.last() != Some(&cap) {
        radii.push(cap);
    }
    radii
}

/// Lower Ahlfors-regularity fit over all centers and radii up to the diameter.
pub fn regularity_fit(space: &QuasiMetricSpace, q: f64) -> RegularityFit {
    let diam = space.diameter();
    let mut kappa = f64::INFINITY;
    let mut witness = (0, diam);
    for x in 0..space.len() {
        for r in critical_radii(space, x, diam) {
            let v = space.open_ball_measure(x, r) / r.powf(q);
            if v < kappa {
                kappa = v;
                witness = (x, r);
            }
        }
    }
    RegularityFit {
        q,
        kappa,
        upper_c: f64::INFINITY,
        witness,
    }
}

/// Constant of the restricted lower condition on a dilated ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VCondition {
    #[serde(serialize_with = "crate::report::num::f64")]
    pub b: f64,
    pub witness: (PointId, f64),
}

/// Least `b` with `mu(B(x,r)) >= b r^Q` for every ball `B(x,r)` contained in
/// `B(center, sigma*r0)` with `r <= sigma*r0`.
pub fn v_condition(space: &QuasiMetricSpace, center: PointId, r0: f64, sigma: f64, q: f64) -> VCondition {
    let big = sigma * r0;
    let inside: Vec<bool> = (0..space.len()).map(|y| space.dist(center, y) < big).collect();
    let mut b = f64::INFINITY;
    let mut witness = (center, big);
    for x in (0..space.len()).filter(|&x| inside[x]) {
        // B(x,r) stays inside exactly while r <= distance to the nearest outside point.
        let escape = (0..space.len())
            .filter(|&y| !inside[y])
            .map(|y| space.dist(x, y))
            .fold(f64::INFINITY, f64::min);
        let cap = escape.min(big);
        for r in critical_radii(space, x, cap) {
            let v = space.open_ball_measure(x, r) / r.powf(q);
            if v < b {
                b = v;
                witness = (x, r);
            }
        }
    }
    VCondition { b, witness }
}

/// Doubling constant and the best constant of the `Q`-doubling inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoublingReport {
    pub q: f64,
    /// `max mu(B(x,2r)) / mu(B(x,r))` over all balls.
    #[serde(serialize_with = "crate::report::num::f64")]
    pub c_doub: f64,
    pub doubling_witness: (PointId, f64),
    /// `inf (mu(B(x,r)) / mu(B(y,R))) (R/r)^Q` over containments
    /// `B(x,r) ⊆ B(y,R)` with `r <= R`.
    #[serde(serialize_with = "crate::report::num::f64")]
    pub kappa_q: f64,
    /// `(x, r, y, R)` approaching `kappa_q`; `R` is the left end of its
    /// constancy interval, approached from above.
    pub kappa_witness: (PointId, f64, PointId, f64),
}

/// One constancy interval `(lo, hi]` of `r -> B_open(x, r)`.
#[derive(Debug, Clone, Copy)]
struct Cell {
    lo: f64,
    hi: f64,
    /// Largest distance from the center of a member.
    reach: f64,
    mass: f64,
}

fn cells(space: &QuasiMetricSpace, x: PointId) -> Vec<Cell> {
    let d = space.distances_from(x);
    let mut out = Vec::with_capacity(d.len());
    let mut mass = 0.0;
    for (i, &e) in d.iter().enumerate() {
        mass += (0..space.len())
            .filter(|&y| space.dist(x, y) == e)
            .map(|y| space.mu()[y])
            .sum::<f64>();
        let hi = d.get(i + 1).copied().unwrap_or(f64::INFINITY);
        out.push(Cell { lo: e, hi, reach: e, mass });
    }
    out
}

/// Exact doubling analysis by enumerating constancy intervals of ball radii.
pub fn doubling_analysis(space: &QuasiMetricSpace, q: f64) -> DoublingReport {
    let n = space.len();
    let mut c_doub: f64 = 1.0;
    let mut doubling_witness = (0, 0.0);
    for x in 0..n {
        let mut radii: Vec<f64> = space.distances_from(x).into_iter().filter(|&d| d > 0.0).collect();
        let halves: Vec<f64> = radii.iter().map(|d| d / 2.0).collect();
        radii.extend(halves);
        for r in radii {
            let v = space.open_ball_measure(x, 2.0 * r) / space.open_ball_measure(x, r);
            if v > c_doub {
                c_doub = v;
                doubling_witness = (x, r);
            }
        }
    }

    let all_cells: Vec<Vec<Cell>> = (0..n).map(|x| cells(space, x)).collect();
    let mut kappa_q = f64::INFINITY;
    let mut kappa_witness = (0, 0.0, 0, 0.0);
    for x in 0..n {
        for cx in &all_cells[x] {
            // Members of this ball are the points within cx.reach of x.
            for y in 0..n {
                let far = (0..n)
                    .filter(|&z| space.dist(x, z) <= cx.reach)
                    .map(|z| space.dist(y, z))
                    .fold(0.0, f64::max);
                for cy in &all_cells[y] {
                    if cy.reach < far || cx.lo >= cy.hi {
                        continue;
                    }
                    let ratio = (cy.lo / cx.hi).max(1.0);
                    let v = cx.mass / cy.mass * ratio.powf(q);
                    if v < kappa_q {
                        kappa_q = v;
                        let big_r = if cy.lo >= cx.hi { cy.lo } else { cx.hi.max(cy.lo).min(cy.hi) };
                        kappa_witness = (x, cx.hi, y, big_r);
                    }
                }
            }
        }
    }
    DoublingReport {
        q,
        c_doub,
        doubling_witness,
        kappa_q,
        kappa_witness,
    }
}

/// Minimal directed chain sums `sum rho(xi_i, xi_{i+1})^alpha` between all
/// ordered pairs, row-major.
pub fn chain_sums(space: &QuasiMetricSpace, alpha: f64) -> Vec<f64> {
    let mut w: Vec<f64> = space.rho_flat().iter().map(|d| d.powf(alpha)).collect();
    floyd_warshall(&mut w, space.len());
    w
}

/// Chain sums for one exponent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainTable {
    #[serde(serialize_with = "crate::report::num::f64")]
    pub alpha: f64,
    /// Row-major minimal chain sums.
    #[serde(serialize_with = "crate::report::num::vec")]
    pub sums: Vec<f64>,
}

/// Certified lower bound of the smoothness index and chain-sum tables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexBounds {
    #[serde(serialize_with = "crate::report::num::f64")]
    pub c_rho: f64,
    #[serde(serialize_with = "crate::report::num::f64")]
    pub c_rho_sharp: f64,
    /// `max(1/log2 C_rho, 1/log2 C_rho#)`, infinite for ultrametric cases.
    #[serde(serialize_with = "crate::report::num::f64")]
    pub smoothness_lb: f64,
    pub chain_table: Vec<ChainTable>,
}

pub fn index_bounds(space: &QuasiMetricSpace, alpha_grid: &[f64]) -> Result<IndexBounds> {
    let c_rho = space.summary().c_rho;
    let reg = regularize(space)?;
    let c_rho_sharp = sharp_constant(&reg);
    let smoothness_lb = exponent_for(c_rho).max(exponent_for(c_rho_sharp));
    let chain_table = alpha_grid
        .iter()
        .map(|&alpha| ChainTable {
            alpha,
            sums: chain_sums(space, alpha),
        })
        .collect();
    Ok(IndexBounds {
        c_rho,
        c_rho_sharp,
        smoothness_lb,
        chain_table,
    })
}
