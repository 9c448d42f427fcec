//! Hölder bump functions built on the regularized distance, their explicit
//! fractional gradients, and chains of nested bumps around a ball.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::half_mass_radius;
use crate::gradients::{gradient_norm, holder_seminorm, FractionalGradient, Gradient, Kind, LevelDecomposition, SeminormSpec};
use crate::regularization::{comparability, RegularizedMetric};
use crate::space::{ball_members, Distance, PointId, QuasiMetricSpace};

/// Relative slack allowed when checking the Hölder bound of a bump.
const HOLDER_SLACK: f64 = 1e-9;

/// `Phi = 1` on the closed `rho#`-ball of radius `r`, `0` off the open
/// `rho#`-ball of radius `R`, and `(R^a - rho#^a) / (R^a - r^a)` in between.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BumpFunction {
    pub center: PointId,
    pub r: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    #[serde(serialize_with = "crate::report::num::f64")]
    pub alpha: f64,
    pub values: Vec<f64>,
    /// Hölder-`alpha` seminorm with respect to `rho#`.
    #[serde(serialize_with = "crate::report::num::f64")]
    pub holder: f64,
    /// `(R^alpha - r^alpha)^{-1}`.
    #[serde(serialize_with = "crate::report::num::f64")]
    pub holder_bound: f64,
}

/// Exponent used for bumps at smoothness `s`: the regularization exponent
/// when it is finite and at least `s`, and `2s` on ultrametric spaces.
pub fn default_alpha(alpha0: f64, s: f64) -> Result<f64> {
    if alpha0.is_infinite() {
        Ok(2.0 * s)
    } else if s <= alpha0 {
        Ok(alpha0)
    } else {
        Err(Error::SmoothnessTooLarge { s, bound: alpha0 })
    }
}

fn check_alpha(reg: &RegularizedMetric, alpha: f64) -> Result<()> {
    let ok = alpha > 0.0 && alpha.is_finite() && alpha <= reg.alpha0;
    if ok {
        Ok(())
    } else {
        Err(Error::AlphaOutOfRange { alpha, alpha0: reg.alpha0 })
    }
}

/// Build `Phi_{r,R}` around `center` and check its range and Hölder bound.
pub fn bump_function(
    reg: &RegularizedMetric,
    space: &QuasiMetricSpace,
    center: PointId,
    r: f64,
    big_r: f64,
    alpha: f64,
) -> Result<BumpFunction> {
    if !(r >= 0.0 && r < big_r && big_r.is_finite()) {
        return Err(Error::BadRadii { r, big_r });
    }
    check_alpha(reg, alpha)?;
    if center >= space.len() {
        return Err(Error::InvalidArgument(format!("center {center} out of range")));
    }
    let (ra, big_ra) = (r.powf(alpha), big_r.powf(alpha));
    let denom = big_ra - ra;
    let values: Vec<f64> = (0..space.len())
        .map(|y| {
            let d = reg.dist(center, y);
            if d <= r {
                1.0
            } else if d >= big_r {
                0.0
            } else {
                ((big_ra - d.powf(alpha)) / denom).clamp(0.0, 1.0)
            }
        })
        .collect();
    let holder = holder_seminorm(reg, &values, alpha);
    let holder_bound = 1.0 / denom;
    let conditioning = big_ra / denom;
    if holder > holder_bound * (1.0 + HOLDER_SLACK * conditioning.max(1.0)) {
        return Err(Error::PreconditionFailed(format!(
            "bump Hölder seminorm {holder} exceeds {holder_bound}"
        )));
    }
    Ok(BumpFunction {
        center,
        r,
        big_r,
        alpha,
        values,
        holder,
        holder_bound,
    })
}

/// Explicit fractional gradient of a bump and its norms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BumpGradient {
    /// Gradient restricted to the levels realized by the space.
    pub grad: FractionalGradient,
    /// Level splitting the two regimes of the gradient; absent for constant bumps.
    pub k0: Option<i32>,
    /// Comparability constant between `rho` and `rho#`.
    pub c: f64,
    /// Mass of the open `rho#`-ball of radius `R` carrying the gradient.
    pub support_measure: f64,
    /// Triebel-Lizorkin norm of the full (all levels) gradient, in closed form.
    pub norm_tl: f64,
    /// Besov norm of the full gradient, in closed form.
    pub norm_besov: f64,
    /// Norms of the stored (truncated) gradient.
    pub measured_tl: f64,
    pub measured_besov: f64,
    /// `C` in `norm <= C (R^alpha - r^alpha)^{-s/alpha} mu(B#(x,R))^{1/p}`.
    pub constant: f64,
    pub bound: f64,
}

/// Level containing `v^{1/alpha}`: `2^{k0-1} <= v^{1/alpha} < 2^{k0}`.
fn split_level(holder: f64, alpha: f64) -> i32 {
    let v = holder.powf(1.0 / alpha);
    let mut k = v.log2().floor() as i32 + 1;
    while 2f64.powi(k - 1) > v {
        k -= 1;
    }
    while 2f64.powi(k) <= v {
        k += 1;
    }
    k
}

fn geometric_tail(ratio_exp: f64) -> f64 {
    1.0 / (1.0 - 2f64.powf(-ratio_exp))
}

/// Fractional gradient of a bump: `2^{(k+1)s+1}` below the split level and
/// `2^{-k(alpha-s)} c^alpha |Phi|_alpha` from it on, both times the indicator
/// of the outer `rho#`-ball.
pub fn bump_gradient(
    reg: &RegularizedMetric,
    space: &QuasiMetricSpace,
    bump: &BumpFunction,
    s: f64,
    p: f64,
    q: f64,
) -> Result<BumpGradient> {
    let alpha = bump.alpha;
    if !(s > 0.0 && p > 0.0 && q > 0.0) {
        return Err(Error::InvalidArgument(format!("need s, p, q > 0, got s={s}, p={p}, q={q}")));
    }
    if s > alpha {
        return Err(Error::SmoothnessTooLarge { s, bound: alpha });
    }
    if s == alpha && q.is_finite() {
        return Err(Error::CriticalSmoothness { alpha });
    }
    let c = comparability(space, reg);
    let support = ball_members(reg, bump.center, bump.big_r, false);
    let support_measure = space.mass_of(&support);
    let bound_constant = if q.is_infinite() {
        2f64.powf(1.0 + s).max(c.powf(alpha))
    } else {
        let tail = if alpha > s {
            c.powf(alpha * q) * geometric_tail(q * (alpha - s))
        } else {
            0.0
        };
        (2f64.powf(q * (1.0 + s)) * geometric_tail(s * q) + tail).powf(1.0 / q)
    };
    let scale = (bump.big_r.powf(alpha) - bump.r.powf(alpha)).powf(-s / alpha);
    let bound = bound_constant * scale * support_measure.powf(1.0 / p);
    let h = bump.holder;
    if h == 0.0 {
        return Ok(BumpGradient {
            grad: FractionalGradient::default(),
            k0: None,
            c,
            support_measure,
            norm_tl: 0.0,
            norm_besov: 0.0,
            measured_tl: 0.0,
            measured_besov: 0.0,
            constant: bound_constant,
            bound,
        });
    }
    let k0 = split_level(h, alpha);
    let upper = c.powf(alpha) * h;
    let coef = |k: i32| {
        if k >= k0 {
            2f64.powf(-(k as f64) * (alpha - s)) * upper
        } else {
            2f64.powf((k + 1) as f64 * s + 1.0)
        }
    };
    let levels = LevelDecomposition::new(space);
    let mut grad = FractionalGradient::default();
    for &k in &levels.active_levels {
        let mut g = vec![0.0; space.len()];
        for &y in &support {
            g[y] = coef(k);
        }
        grad.levels.insert(k, g);
    }
    let k0f = k0 as f64;
    let lq = if q.is_infinite() {
        2f64.powf(k0f * s + 1.0).max(upper * 2f64.powf(-k0f * (alpha - s)))
    } else {
        let low = 2f64.powf(q) * 2f64.powf(k0f * s * q) * geometric_tail(s * q);
        let high = upper.powf(q) * 2f64.powf(-k0f * q * (alpha - s)) * geometric_tail(q * (alpha - s));
        (low + high).powf(1.0 / q)
    };
    let norm = lq * support_measure.powf(1.0 / p);
    let g = Gradient::Fractional(grad);
    let measured_tl = gradient_norm(space, &g, &SeminormSpec::triebel_lizorkin(s, p, q))?;
    let measured_besov = gradient_norm(space, &g, &SeminormSpec::besov(s, p, q))?;
    let Gradient::Fractional(grad) = g else { unreachable!() };
    Ok(BumpGradient {
        grad,
        k0: Some(k0),
        c,
        support_measure,
        norm_tl: norm,
        norm_besov: norm,
        measured_tl,
        measured_besov,
        constant: bound_constant,
        bound,
    })
}

/// How the first radius of a chain is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ChainVariant {
    /// `r_1 = r / c`.
    Plain,
    /// `r_1 = phi(r) / c`, requiring `r <= c0 phi(r)`.
    HalfMass { c0: f64 },
}

/// Nested bumps `u_j = Phi_{r_{j+1}, r_j}` attached to the ball `B(x, r)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BumpChain {
    pub center: PointId,
    pub r: f64,
    #[serde(serialize_with = "crate::report::num::f64")]
    pub alpha: f64,
    /// `r_1 > r_2 > ... > r_{J+1}`.
    pub radii: Vec<f64>,
    /// `u_1, ..., u_J`.
    pub functions: Vec<Vec<f64>>,
    /// Lower bound `delta r` on every radius.
    pub delta: f64,
    pub c: f64,
    pub variant: ChainVariant,
    /// Half-mass radius of the ball, for the half-mass variant.
    pub phi: Option<f64>,
    /// `mu(B#(x, r_j))` for `j = 1..=J+1` (open `rho#`-balls).
    pub measures: Vec<f64>,
}

impl BumpChain {
    /// Number of functions `J`.
    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }
}

/// Radii `r_j = r_1 (1/2 + 2^{-j})^{1/alpha}`, which solve
/// `r_j^alpha - r_{j+1}^alpha = 2^{-(j+1)} r_1^alpha`, down to the limit
/// `r_1 2^{-1/alpha}` at machine precision.
fn chain_radii(r1: f64, alpha: f64) -> Vec<f64> {
    let limit = r1 * 2f64.powf(-1.0 / alpha);
    let mut radii = vec![r1];
    for j in 2..=80 {
        let next = r1 * (0.5 + 2f64.powi(-j)).powf(1.0 / alpha);
        let prev = *radii.last().expect("nonempty");
        if !(next < prev && next > limit * (1.0 + f64::EPSILON)) {
            break;
        }
        radii.push(next);
    }
    radii
}

/// Build the chain attached to `B_rho(center, r)` and verify its support,
/// plateau and inclusion properties.
pub fn bump_chain(
    reg: &RegularizedMetric,
    space: &QuasiMetricSpace,
    center: PointId,
    r: f64,
    alpha: f64,
    variant: ChainVariant,
) -> Result<BumpChain> {
    check_alpha(reg, alpha)?;
    if !(r > 0.0 && r <= space.diameter()) {
        return Err(Error::InvalidArgument(format!("chain radius {r} must lie in (0, diam]")));
    }
    let c = comparability(space, reg) * (1.0 + 4.0 * f64::EPSILON);
    let two = 2f64.powf(1.0 / alpha);
    let (r1, delta, phi) = match variant {
        ChainVariant::Plain => (r / c, 1.0 / (two * c), None),
        ChainVariant::HalfMass { c0 } => {
            let phi = half_mass_radius(space, center, r);
            if !(c0 > 1.0) || r > c0 * phi {
                return Err(Error::HalfMassPreconditionFailed { r, bound: c0 * phi });
            }
            (phi / c, 1.0 / (c * c0 * two), Some(phi))
        }
    };
    let radii = chain_radii(r1, alpha);
    if radii.len() < 2 {
        return Err(Error::PreconditionFailed(format!("chain radius {r1} too small to subdivide")));
    }
    let outer = ball_members(space, center, r, false);
    let mut functions = Vec::with_capacity(radii.len() - 1);
    for w in radii.windows(2) {
        let u = bump_function(reg, space, center, w[1], w[0], alpha)?.values;
        for y in 0..space.len() {
            let d = reg.dist(center, y);
            let plateau = d <= w[1];
            let off = d >= w[0];
            let ok = (0.0..=1.0).contains(&u[y]) && (!plateau || u[y] == 1.0) && (!off || u[y] == 0.0);
            if !ok || (d < w[0] && !outer.contains(&y)) {
                return Err(Error::PreconditionFailed(format!(
                    "chain property violated at point {y} for radii ({}, {})",
                    w[1], w[0]
                )));
            }
        }
        functions.push(u);
    }
    let measures = radii
        .iter()
        .map(|&rj| space.mass_of(&ball_members(reg, center, rj, false)))
        .collect();
    Ok(BumpChain {
        center,
        r,
        alpha,
        radii,
        functions,
        delta,
        c,
        variant,
        phi,
        measures,
    })
}

/// Measured constants `C_j = |u_j| / (2^j r^{-s} mu(B#(x, r_j))^{1/p})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainConstants {
    #[serde(serialize_with = "crate::report::num::vec")]
    pub per_j: Vec<f64>,
    #[serde(serialize_with = "crate::report::num::f64")]
    pub max: f64,
    /// `max_j C_j / C_1`.
    #[serde(serialize_with = "crate::report::num::f64")]
    pub drift: f64,
}

/// Evaluate the chain constants from the seminorms of the chain functions.
pub fn chain_constants(chain: &BumpChain, s: f64, p: f64, norms: &[f64]) -> ChainConstants {
    let per_j: Vec<f64> = norms
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let j = (i + 1) as f64;
            v / (2f64.powf(j) * chain.r.powf(-s) * chain.measures[i].powf(1.0 / p))
        })
        .collect();
    let max = per_j.iter().cloned().fold(0.0, f64::max);
    let drift = if per_j.first().is_some_and(|&c| c > 0.0) {
        max / per_j[0]
    } else {
        f64::INFINITY
    };
    ChainConstants { per_j, max, drift }
}

/// Minimal seminorms of all chain functions on the whole space, solving each
/// distinct function once.
pub fn chain_seminorms(space: &QuasiMetricSpace, chain: &BumpChain, spec: &SeminormSpec) -> Result<Vec<f64>> {
    let mut seen: Vec<(&Vec<f64>, f64)> = Vec::new();
    let mut out = Vec::with_capacity(chain.len());
    for u in &chain.functions {
        let v = match seen.iter().find(|(w, _)| *w == u) {
            Some(&(_, v)) => v,
            None => {
                let v = crate::gradients::minimal_seminorm(space, u, spec)?.value;
                seen.push((u, v));
                v
            }
        };
        out.push(v);
    }
    Ok(out)
}

/// A set on which a chain function stays at least `1/2` away from `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscrepancySet {
    pub members: Vec<PointId>,
    pub measure: f64,
    /// Whether the inner plateau `B#(x, r_{j+1})` was chosen.
    pub inner: bool,
    /// `mu(E) >= mu(B#(x, r_{j+1}))`.
    pub mass_ok: bool,
}

/// The set `E` for the `j`-th function (1-based) of a half-mass chain:
/// the inner plateau when `|1 - gamma| >= 1/2`, otherwise the part of
/// `B_rho(x, r)` outside the support. Ties go to the inner plateau.
pub fn discrepancy_set(
    space: &QuasiMetricSpace,
    reg: &RegularizedMetric,
    chain: &BumpChain,
    j: usize,
    gamma: f64,
) -> Result<DiscrepancySet> {
    if !matches!(chain.variant, ChainVariant::HalfMass { .. }) {
        return Err(Error::PreconditionFailed("discrepancy sets need a half-mass chain".into()));
    }
    if j == 0 || j > chain.len() {
        return Err(Error::InvalidArgument(format!("chain index {j} outside 1..={}", chain.len())));
    }
    let x = chain.center;
    let inner_ball = ball_members(reg, x, chain.radii[j], false);
    let inner_measure = space.mass_of(&inner_ball);
    let inner = (1.0 - gamma).abs() >= 0.5;
    let members = if inner {
        inner_ball
    } else {
        ball_members(space, x, chain.r, false)
            .into_iter()
            .filter(|&y| reg.dist(x, y) >= chain.radii[j - 1])
            .collect()
    };
    let measure = space.mass_of(&members);
    Ok(DiscrepancySet {
        members,
        measure,
        inner,
        mass_ok: measure >= inner_measure,
    })
}

/// Spec used to measure bump and chain seminorms for a smoothness setting.
pub fn fractional_spec(s: f64, p: f64, q: f64, besov: bool) -> SeminormSpec {
    SeminormSpec {
        s,
        p,
        q,
        kind: if besov { Kind::Besov } else { Kind::TriebelLizorkin },
    }
}
