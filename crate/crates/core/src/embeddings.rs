//! Numerical evaluation of local and global Sobolev, Poincaré, Trudinger and
//! Hölder embedding inequalities, and measurement of their best constants
//! over families of balls and batteries of test functions.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bumps::{bump_chain, default_alpha, ChainVariant};
use crate::error::{Error, Result};
use crate::geometry::{regularity_fit, v_condition};
use crate::gradients::{gradient_norm, minimal_seminorm, FractionalGradient, Gradient, Kind, SeminormSpec, SingleGradient};
use crate::regularization::RegularizedMetric;
use crate::report::num;
use crate::space::{ball_members, check_len, Distance, PointId, QuasiMetricSpace};

/// Relative tolerance for the critical-exponent identity `p = Q/s`.
const CRITICAL_TOLERANCE: f64 = 1e-12;

/// Which family of inequalities is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Theorem {
    /// Local inequality under a lower mass bound on the dilated ball.
    V,
    /// Local inequality on a lower Ahlfors-regular space.
    Lb,
    /// Local inequality on a doubling space, scaled by ball measures.
    Doub,
    /// Local inequality with a reduced smoothness `epsilon < s`.
    Eps,
    /// Inequality on the whole space.
    Global,
}

/// Which inequality of a family is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Sobolev,
    Poincare,
    Trudinger,
    Holder,
}

impl FromStr for Theorem {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "v" => Ok(Theorem::V),
            "lb" => Ok(Theorem::Lb),
            "doub" => Ok(Theorem::Doub),
            "eps" => Ok(Theorem::Eps),
            "global" => Ok(Theorem::Global),
            _ => Err(format!("unknown theorem '{s}' (expected v, lb, doub, eps or global)")),
        }
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sobolev" => Ok(Regime::Sobolev),
            "poincare" => Ok(Regime::Poincare),
            "trudinger" => Ok(Regime::Trudinger),
            "holder" => Ok(Regime::Holder),
            _ => Err(format!("unknown regime '{s}' (expected sobolev, poincare, trudinger or holder)")),
        }
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Theorem::V => "v",
            Theorem::Lb => "lb",
            Theorem::Doub => "doub",
            Theorem::Eps => "eps",
            Theorem::Global => "global",
        };
        f.write_str(s)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::Sobolev => "sobolev",
            Regime::Poincare => "poincare",
            Regime::Trudinger => "trudinger",
            Regime::Holder => "holder",
        };
        f.write_str(s)
    }
}

/// One embedding inequality with all of its parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingCase {
    pub theorem: Theorem,
    pub regime: Regime,
    pub s: f64,
    pub p: f64,
    #[serde(serialize_with = "num::f64")]
    pub q: f64,
    #[serde(rename = "Q")]
    pub big_q: f64,
    pub sigma: f64,
    /// Measure the seminorm with the Besov instead of the Triebel-Lizorkin norm.
    pub besov: bool,
    /// Lower mass constant; measured from the space when absent.
    #[serde(serialize_with = "num::opt")]
    pub b: Option<f64>,
    /// Reduced smoothness of the `Eps` family.
    #[serde(serialize_with = "num::opt")]
    pub epsilon: Option<f64>,
    pub c1: f64,
    pub omega: f64,
}

impl EmbeddingCase {
    /// A case with `b` measured, no `epsilon`, and `c1 = omega = 1`.
    pub fn new(theorem: Theorem, regime: Regime, s: f64, p: f64, q: f64, big_q: f64, sigma: f64) -> Self {
        EmbeddingCase {
            theorem,
            regime,
            s,
            p,
            q,
            big_q,
            sigma,
            besov: false,
            b: None,
            epsilon: None,
            c1: 1.0,
            omega: 1.0,
        }
    }

    /// Smoothness entering the exponents: `epsilon` for `Eps`, else `s`.
    pub fn effective_smoothness(&self) -> f64 {
        match self.theorem {
            Theorem::Eps => self.epsilon.unwrap_or(f64::NAN),
            _ => self.s,
        }
    }

    /// Check parameter ranges and the regime's exponent condition.
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && !v.is_nan();
        if !(positive(self.s) && self.s.is_finite() && positive(self.p) && self.p.is_finite() && positive(self.q)) {
            return Err(Error::InvalidArgument(format!(
                "need finite s, p > 0 and q > 0, got s={}, p={}, q={}",
                self.s, self.p, self.q
            )));
        }
        if !(positive(self.big_q) && self.big_q.is_finite()) {
            return Err(Error::InvalidArgument(format!("Q must be positive and finite, got {}", self.big_q)));
        }
        if !(self.sigma >= 1.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must lie in [1, inf), got {}", self.sigma)));
        }
        if !(positive(self.c1) && positive(self.omega)) {
            return Err(Error::InvalidArgument("c1 and omega must be positive".into()));
        }
        if let Some(b) = self.b {
            if !(positive(b) && b.is_finite()) {
                return Err(Error::InvalidArgument(format!("b must be positive and finite, got {b}")));
            }
        }
        if self.theorem == Theorem::Eps {
            match self.epsilon {
                Some(e) if e > 0.0 && e < self.s => {}
                _ => return Err(Error::InvalidArgument("the eps family needs epsilon in (0, s)".into())),
            }
        }
        let e = self.effective_smoothness();
        let (p, big_q) = (self.p, self.big_q);
        match self.regime {
            Regime::Sobolev | Regime::Poincare => {
                if e * p >= big_q {
                    return Err(Error::RegimeMismatch(format!(
                        "{} needs s*p < Q, got {} >= {big_q}",
                        self.regime,
                        e * p
                    )));
                }
            }
            Regime::Trudinger => {
                if self.theorem == Theorem::Global {
                    return Err(Error::RegimeMismatch("the global family has no trudinger form".into()));
                }
                if (p - big_q / e).abs() > CRITICAL_TOLERANCE * p {
                    return Err(Error::RegimeMismatch(format!("trudinger needs p = Q/s = {}, got {p}", big_q / e)));
                }
            }
            Regime::Holder => {
                if self.theorem == Theorem::Global {
                    return Err(Error::RegimeMismatch("the global family has no holder form".into()));
                }
                if p <= big_q / e {
                    return Err(Error::RegimeMismatch(format!("holder needs p > Q/s = {}, got {p}", big_q / e)));
                }
            }
        }
        Ok(())
    }

    /// Sobolev conjugate exponent `Qp / (Q - s p)` with the effective smoothness.
    pub fn p_star(&self) -> f64 {
        let e = self.effective_smoothness();
        self.big_q * self.p / (self.big_q - e * self.p)
    }

    /// Seminorm measured on the dilated ball.
    pub fn seminorm_spec(&self) -> SeminormSpec {
        match self.theorem {
            Theorem::V => SeminormSpec::sobolev(self.s, self.p),
            Theorem::Eps => SeminormSpec::besov(self.s, self.p, self.q),
            _ if self.besov => SeminormSpec::besov(self.s, self.p, self.q),
            _ => SeminormSpec::triebel_lizorkin(self.s, self.p, self.q),
        }
    }

    /// Whether `sigma` is below the quasi-triangle constant the local
    /// inequalities assume.
    pub fn outside_theorem(&self, space: &QuasiMetricSpace) -> bool {
        self.theorem != Theorem::Global && self.sigma < space.summary().c_rho * (1.0 - CRITICAL_TOLERANCE)
    }

    fn uses_left_limits(&self) -> bool {
        self.theorem == Theorem::Doub
    }

    fn single_ball(&self) -> bool {
        self.theorem == Theorem::Global || (self.theorem == Theorem::Lb && self.regime == Regime::Holder)
    }
}

/// Both sides of one inequality on one ball.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalCheck {
    #[serde(serialize_with = "num::f64")]
    pub lhs: f64,
    #[serde(serialize_with = "num::vec")]
    pub rhs: Vec<f64>,
    /// `lhs / sum(rhs)`, with `x/0 = inf` for `x > 0` and `0/0 = 0`.
    #[serde(serialize_with = "num::f64")]
    pub ratio: f64,
    /// Seminorm (or gradient norm) on the dilated ball.
    pub seminorm: f64,
    /// Minimizing constant of the Poincaré left-hand side.
    #[serde(serialize_with = "num::opt")]
    pub gamma: Option<f64>,
}

/// `lhs / sum(rhs)` with `x/0 = inf` for `x > 0` and `0/0 = 0`.
pub fn ratio_of(lhs: f64, rhs: &[f64]) -> f64 {
    let total: f64 = rhs.iter().sum();
    if total > 0.0 {
        lhs / total
    } else if lhs > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// `inf_gamma sum_{x in set} mu(x) |u(x) - gamma|^t` and a minimizer.
///
/// For `t >= 1` the objective is convex and is minimized by golden-section
/// search on `[min u, max u]`; for `t < 1` it is concave between data values,
/// so the minimum sits at one of them. Data values are always tried as well.
pub fn poincare_infimum(space: &QuasiMetricSpace, set: &[PointId], u: &[f64], t: f64) -> (f64, f64) {
    let mu = space.mu();
    let objective = |gamma: f64| set.iter().map(|&x| mu[x] * (u[x] - gamma).abs().powf(t)).sum::<f64>();
    let mut best = (f64::INFINITY, 0.0);
    for &x in set {
        let v = objective(u[x]);
        if v < best.0 {
            best = (v, u[x]);
        }
    }
    if t >= 1.0 && !set.is_empty() {
        let (mut a, mut b) = set
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(u[x]), hi.max(u[x])));
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let (mut fc, mut fd) = (objective(c), objective(d));
        for _ in 0..200 {
            if b - a <= f64::EPSILON * a.abs().max(b.abs()).max(f64::MIN_POSITIVE) {
                break;
            }
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - ratio * (b - a);
                fc = objective(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + ratio * (b - a);
                fd = objective(d);
            }
        }
        for g in [c, d, 0.5 * (a + b)] {
            let v = objective(g);
            if v < best.0 {
                best = (v, g);
            }
        }
    }
    best
}

/// Geometry of one ball `B0 = B(center, radius)` and its dilation.
#[derive(Debug, Clone)]
struct BallContext {
    radius: f64,
    inner: Vec<PointId>,
    outer: Vec<PointId>,
    inner_measure: f64,
    outer_measure: f64,
    /// Lower mass constant used by the `V` and `Eps` families.
    b: f64,
}

/// Evaluates inequalities of one case on one space, caching seminorms by
/// dilated ball and function values.
pub struct Evaluator<'a> {
    space: &'a QuasiMetricSpace,
    case: EmbeddingCase,
    spec: SeminormSpec,
    global_b: Option<f64>,
    cache: HashMap<(Vec<PointId>, Vec<u64>), f64>,
    /// Number of seminorm solves performed.
    pub solves: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(space: &'a QuasiMetricSpace, case: EmbeddingCase) -> Result<Self> {
        case.validate()?;
        let spec = case.seminorm_spec();
        let global_b = match (case.theorem, case.b) {
            (_, Some(b)) => Some(b),
            (Theorem::Eps, None) => Some(regularity_fit(space, case.big_q).kappa),
            _ => None,
        };
        Ok(Evaluator {
            space,
            case,
            spec,
            global_b,
            cache: HashMap::new(),
            solves: 0,
        })
    }

    pub fn case(&self) -> &EmbeddingCase {
        &self.case
    }

    fn context(&self, center: PointId, radius: f64) -> Result<BallContext> {
        let space = self.space;
        let n = space.len();
        if center >= n {
            return Err(Error::InvalidArgument(format!("center {center} out of range")));
        }
        if !(radius > 0.0) {
            return Err(Error::EmptyBall);
        }
        let all: Vec<PointId> = (0..n).collect();
        let whole = self.case.single_ball();
        let (inner, outer) = if whole {
            (all.clone(), all)
        } else {
            (
                ball_members(space, center, radius, false),
                ball_members(space, center, self.case.sigma * radius, false),
            )
        };
        if inner.is_empty() {
            return Err(Error::EmptyBall);
        }
        let b = match (self.case.theorem, self.global_b) {
            (_, Some(b)) => b,
            (Theorem::V, None) => v_condition(space, center, radius, self.case.sigma, self.case.big_q).b,
            _ => f64::NAN,
        };
        let radius = if self.case.theorem == Theorem::Global {
            space.diameter()
        } else {
            radius
        };
        Ok(BallContext {
            radius,
            inner_measure: space.mass_of(&inner),
            outer_measure: space.mass_of(&outer),
            inner,
            outer,
            b,
        })
    }

    /// Minimal seminorm of `u` restricted to `set`, cached.
    pub fn seminorm_on(&mut self, set: &[PointId], u: &[f64]) -> Result<f64> {
        let key = (set.to_vec(), set.iter().map(|&x| u[x].to_bits()).collect::<Vec<u64>>());
        if let Some(&v) = self.cache.get(&key) {
            return Ok(v);
        }
        let sub = self.space.restrict(set);
        let values: Vec<f64> = set.iter().map(|&x| u[x]).collect();
        // The Triebel-Lizorkin seminorm with q = inf coincides with the Sobolev one,
        // whose program has one variable per point instead of one per level.
        let spec = if self.spec.kind == Kind::TriebelLizorkin && self.spec.q.is_infinite() {
            SeminormSpec::sobolev(self.spec.s, self.spec.p)
        } else {
            self.spec
        };
        let v = minimal_seminorm(&sub, &values, &spec)?.value;
        self.solves += 1;
        self.cache.insert(key, v);
        Ok(v)
    }

    /// Norm of an explicit gradient restricted to `set`.
    fn explicit_norm(&self, set: &[PointId], grad: &Gradient) -> Result<f64> {
        let sub = self.space.restrict(set);
        let n = self.space.len();
        let restricted = match grad {
            Gradient::Single(s) => {
                check_len(&s.g, n)?;
                Gradient::Single(SingleGradient {
                    g: set.iter().map(|&x| s.g[x]).collect(),
                })
            }
            Gradient::Fractional(f) => {
                let mut out = FractionalGradient::default();
                for (&k, row) in &f.levels {
                    check_len(row, n)?;
                    out.levels.insert(k, set.iter().map(|&x| row[x]).collect());
                }
                Gradient::Fractional(out)
            }
        };
        gradient_norm(&sub, &restricted, &self.spec)
    }

    /// A lower bound on the minimal seminorm of `u` on `set`.
    ///
    /// A pair `x, y` at level `k` forces `g_k(x) + g_k(y) >= |u(x) - u(y)| / w`,
    /// hence `mu(x) g_k(x)^p + mu(y) g_k(y)^p >= min(mu) (|u(x) - u(y)| / w)^p 2^{1-p}`
    /// for `p >= 1`. Summing over a greedy family of point-disjoint pairs
    /// bounds the `L^p` norm of one gradient, which is at most every mixed norm.
    fn seminorm_lower_bound(&self, set: &[PointId], u: &[f64]) -> f64 {
        let (s, p) = (self.spec.s, self.spec.p);
        if p < 1.0 {
            return 0.0;
        }
        let mu = self.space.mu();
        let mut pairs: Vec<(f64, PointId, PointId)> = Vec::new();
        for (i, &x) in set.iter().enumerate() {
            for &y in &set[i + 1..] {
                let du = (u[x] - u[y]).abs();
                if du == 0.0 {
                    continue;
                }
                let w = self.space.dist(x, y).min(self.space.dist(y, x)).powf(s);
                pairs.push((mu[x].min(mu[y]) * (du / w).powf(p), x, y));
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut used = vec![false; self.space.len()];
        let mut total = 0.0;
        for (v, x, y) in pairs {
            if !used[x] && !used[y] {
                used[x] = true;
                used[y] = true;
                total += v;
            }
        }
        (total * 2f64.powf(1.0 - p)).powf(1.0 / p)
    }

    fn average_power(&self, set: &[PointId], measure: f64, u: &[f64], t: f64, averaged: bool) -> f64 {
        let mu = self.space.mu();
        let total: f64 = set.iter().map(|&x| mu[x] * u[x].abs().powf(t)).sum();
        let total = if averaged { total / measure } else { total };
        total.powf(1.0 / t)
    }

    /// Left-hand side, right-hand terms and optimal `gamma` for seminorm `sem`.
    fn assemble(&self, ctx: &BallContext, u: &[f64], sem: f64) -> (f64, Vec<f64>, Option<f64>) {
        let c = &self.case;
        let (s, p, big_q) = (c.s, c.p, c.big_q);
        let r0 = ctx.radius;
        match c.regime {
            Regime::Sobolev | Regime::Poincare => {
                let ps = c.p_star();
                let averaged = matches!(c.theorem, Theorem::V | Theorem::Lb | Theorem::Eps);
                let (lhs, gamma) = if c.regime == Regime::Sobolev {
                    (self.average_power(&ctx.inner, ctx.inner_measure, u, ps, averaged), None)
                } else {
                    let (v, g) = poincare_infimum(self.space, &ctx.inner, u, ps);
                    let v = if averaged { v / ctx.inner_measure } else { v };
                    (v.powf(1.0 / ps), Some(g))
                };
                let lp_outer = self.average_power(&ctx.outer, ctx.outer_measure, u, p, false);
                let terms = match c.theorem {
                    Theorem::V => vec![
                        (ctx.b * r0.powf(big_q)).powf(-1.0 / p) * r0.powf(s) * sem,
                        lp_outer / ctx.outer_measure.powf(1.0 / p),
                    ],
                    Theorem::Lb => vec![r0.powf(s - big_q / p) * sem, r0.powf(-big_q / p) * lp_outer],
                    Theorem::Doub => {
                        let scale = ctx.outer_measure.powf(-s / big_q);
                        vec![scale * r0.powf(s) * sem, scale * lp_outer]
                    }
                    Theorem::Eps => {
                        let scale = ctx.b.powf(-1.0 / p) * r0.powf(-big_q / p);
                        vec![scale * r0.powf(s) * sem, scale * lp_outer]
                    }
                    Theorem::Global => vec![sem, self.space.diameter().powf(-s) * lp_outer],
                };
                let rhs = if c.regime == Regime::Sobolev { terms } else { vec![terms[0]] };
                (lhs, rhs, gamma)
            }
            Regime::Trudinger => {
                let e = c.effective_smoothness();
                let den = match c.theorem {
                    Theorem::V => sem * ctx.b.powf(-s / big_q),
                    Theorem::Lb => sem,
                    Theorem::Doub => r0.powf(s) * sem / ctx.outer_measure.powf(s / big_q),
                    Theorem::Eps => r0.powf(s - e) * sem / ctx.b.powf(1.0 / p),
                    Theorem::Global => f64::NAN,
                };
                let mu = self.space.mu();
                let mean = ctx.inner.iter().map(|&x| mu[x] * u[x]).sum::<f64>() / ctx.inner_measure;
                let integral = ctx
                    .inner
                    .iter()
                    .map(|&x| {
                        let d = (u[x] - mean).abs();
                        let arg = if d == 0.0 { 0.0 } else { c.c1 * d / den };
                        mu[x] * arg.powf(c.omega).exp()
                    })
                    .sum::<f64>()
                    / ctx.inner_measure;
                (integral, vec![1.0], None)
            }
            Regime::Holder => {
                let e = c.effective_smoothness();
                let exponent = e - big_q / p;
                let factor = match c.theorem {
                    Theorem::V => ctx.b.powf(-1.0 / p) * sem,
                    Theorem::Lb => sem,
                    Theorem::Doub => r0.powf(big_q / p) * ctx.outer_measure.powf(-1.0 / p) * sem,
                    Theorem::Eps => ctx.b.powf(-1.0 / p) * sem,
                    Theorem::Global => f64::NAN,
                };
                let mut lhs: f64 = 0.0;
                for &x in &ctx.inner {
                    for &y in &ctx.inner {
                        if x != y && u[x] != u[y] {
                            lhs = lhs.max((u[x] - u[y]).abs() / self.space.dist(x, y).powf(exponent));
                        }
                    }
                }
                (lhs, vec![factor], None)
            }
        }
    }

    /// Evaluate the inequality on `B(center, radius)` for `u`, with the
    /// seminorm minimized on the dilated ball or taken from `gradient`.
    pub fn evaluate(&mut self, center: PointId, radius: f64, u: &[f64], gradient: Option<&Gradient>) -> Result<LocalCheck> {
        check_len(u, self.space.len())?;
        let ctx = self.context(center, radius)?;
        let sem = match gradient {
            Some(g) => self.explicit_norm(&ctx.outer, g)?,
            None => self.seminorm_on(&ctx.outer, u)?,
        };
        let (lhs, rhs, gamma) = self.assemble(&ctx, u, sem);
        Ok(LocalCheck {
            ratio: ratio_of(lhs, &rhs),
            lhs,
            rhs,
            seminorm: sem,
            gamma,
        })
    }
}

/// Sobolev or Poincaré inequality on one ball.
pub fn local_embedding_check(
    space: &QuasiMetricSpace,
    case: &EmbeddingCase,
    center: PointId,
    radius: f64,
    u: &[f64],
    gradient: Option<&Gradient>,
) -> Result<LocalCheck> {
    if !matches!(case.regime, Regime::Sobolev | Regime::Poincare) {
        return Err(Error::RegimeMismatch(format!(
            "local check needs sobolev or poincare, got {}",
            case.regime
        )));
    }
    Evaluator::new(space, case.clone())?.evaluate(center, radius, u, gradient)
}

/// Exponential integral `avg_{B0} exp((c1 |u - u_B0| / D)^omega)` with the
/// family's denominator `D`.
pub fn trudinger_check(
    space: &QuasiMetricSpace,
    case: &EmbeddingCase,
    center: PointId,
    radius: f64,
    u: &[f64],
    gradient: Option<&Gradient>,
) -> Result<f64> {
    if case.regime != Regime::Trudinger {
        return Err(Error::RegimeMismatch(format!(
            "trudinger check needs the trudinger regime, got {}",
            case.regime
        )));
    }
    let check = Evaluator::new(space, case.clone())?.evaluate(center, radius, u, gradient)?;
    if check.seminorm == 0.0 {
        return Err(Error::ZeroSeminorm);
    }
    Ok(check.lhs)
}

/// Result of the Hölder evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderCheck {
    /// `max |u(x) - u(y)| / (rho(x,y)^{s - Q/p} factor)` over pairs.
    #[serde(serialize_with = "num::f64")]
    pub max_ratio: f64,
    pub factor: f64,
    pub exponent: f64,
}

/// Hölder continuity quotient over pairs of the ball (of the whole space for
/// the lower-regular family).
pub fn holder_check(
    space: &QuasiMetricSpace,
    case: &EmbeddingCase,
    center: PointId,
    radius: f64,
    u: &[f64],
    gradient: Option<&Gradient>,
) -> Result<HolderCheck> {
    if case.regime != Regime::Holder {
        return Err(Error::RegimeMismatch(format!(
            "holder check needs the holder regime, got {}",
            case.regime
        )));
    }
    let check = Evaluator::new(space, case.clone())?.evaluate(center, radius, u, gradient)?;
    Ok(HolderCheck {
        max_ratio: check.ratio,
        factor: check.rhs[0],
        exponent: case.effective_smoothness() - case.big_q / case.p,
    })
}

/// The two global inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GlobalMode {
    /// `|u|_{L^{p*}} <= C (|u|_s + diam^{-s} |u|_{L^p})`.
    Sobolev,
    /// `inf_gamma |u - gamma|_{L^{p*}} <= C |u|_s`.
    Poincare,
}

/// Global Sobolev or Poincaré inequality on the whole space.
pub fn global_check(space: &QuasiMetricSpace, mode: GlobalMode, u: &[f64], spec: &SeminormSpec, big_q: f64) -> Result<LocalCheck> {
    let regime = match mode {
        GlobalMode::Sobolev => Regime::Sobolev,
        GlobalMode::Poincare => Regime::Poincare,
    };
    let mut case = EmbeddingCase::new(Theorem::Global, regime, spec.s, spec.p, spec.q, big_q, 1.0);
    case.besov = spec.kind == Kind::Besov;
    Evaluator::new(space, case)?.evaluate(0, space.diameter(), u, None)
}

/// Balls on which the measured ratio attains its supremum over all radii.
///
/// For fixed center every quantity is constant while neither `B(x, R)` nor
/// `B(x, sigma R)` changes, and the ratio is monotone in `R` on each such
/// interval. The right endpoints `d` and `d / sigma` over distances `d` from
/// the center, capped at the diameter, are included; for the doubling family
/// the ratio decreases in `R`, so the left limits (the next float above each
/// endpoint) are included too.
pub fn critical_balls(space: &QuasiMetricSpace, case: &EmbeddingCase) -> Vec<(PointId, f64)> {
    let diam = space.diameter();
    if case.single_ball() {
        return vec![(0, diam)];
    }
    let mut out = Vec::new();
    for x in 0..space.len() {
        let mut radii = Vec::new();
        for d in space.distances_from(x).into_iter().filter(|&d| d > 0.0) {
            for r in [d, d / case.sigma] {
                if r <= diam {
                    radii.push(r);
                }
                if case.uses_left_limits() && r < diam {
                    radii.push(r.next_up());
                }
            }
        }
        radii.sort_by(f64::total_cmp);
        radii.dedup();
        out.extend(radii.into_iter().map(|r| (x, r)));
    }
    out
}

/// Which test functions are tried on each ball.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryOptions {
    /// Functions of the plain bump chain attached to each ball.
    pub chains: bool,
    /// Indicator of the closed ball of half the radius.
    pub transitions: bool,
    /// Number of seeded random functions with values in `[-1, 1]`.
    pub random: usize,
    pub seed: u64,
    /// User-supplied functions, each with a label.
    #[serde(skip)]
    pub extra: Vec<(String, Vec<f64>)>,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        BatteryOptions {
            chains: true,
            transitions: true,
            random: 2,
            seed: 0,
            extra: Vec::new(),
        }
    }
}

/// A labelled test function.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub label: String,
    pub values: Vec<f64>,
}

/// Seeded random functions with values in `[-1, 1]`.
pub fn random_functions(n: usize, count: usize, seed: u64) -> Vec<Witness> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| Witness {
            label: format!("random[{k}]"),
            values: (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        })
        .collect()
}

/// Test functions attached to one ball: the plain bump chain and the
/// indicator of the closed ball of half the radius.
pub fn ball_witnesses(
    space: &QuasiMetricSpace,
    reg: &RegularizedMetric,
    alpha: Option<f64>,
    center: PointId,
    radius: f64,
    options: &BatteryOptions,
) -> Vec<Witness> {
    let mut out: Vec<Witness> = Vec::new();
    let mut push = |w: Witness| {
        if !out.iter().any(|o| o.values == w.values) {
            out.push(w);
        }
    };
    if options.chains {
        if let Some(alpha) = alpha {
            let r = radius.min(space.diameter());
            if let Ok(chain) = bump_chain(reg, space, center, r, alpha, ChainVariant::Plain) {
                for (j, u) in chain.functions.into_iter().enumerate() {
                    push(Witness {
                        label: format!("chain(x={center}, r={r}, j={})", j + 1),
                        values: u,
                    });
                }
            }
        }
    }
    if options.transitions {
        let inside = ball_members(space, center, radius / 2.0, true);
        let values = (0..space.len()).map(|y| if inside.contains(&y) { 1.0 } else { 0.0 }).collect();
        push(Witness {
            label: format!("indicator(x={center}, r={})", radius / 2.0),
            values,
        });
    }
    out
}

/// Measured inequality on one ball.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallReport {
    pub center: PointId,
    pub radius: f64,
    #[serde(serialize_with = "num::f64")]
    pub lhs: f64,
    #[serde(serialize_with = "num::vec")]
    pub rhs: Vec<f64>,
    /// Largest ratio among the test functions evaluated exactly.
    #[serde(serialize_with = "num::f64")]
    pub ratio: f64,
    pub witness: String,
    /// Upper bound on the ratios of test functions skipped because they could
    /// not exceed the best constant.
    #[serde(serialize_with = "num::opt")]
    pub pruned_bound: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Bounded,
    Unbounded,
}

/// Best constant of an inequality over a ball family and test battery.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingReport {
    pub theorem: Theorem,
    pub regime: Regime,
    pub params: EmbeddingCase,
    pub outside_theorem: bool,
    pub balls: Vec<BallReport>,
    #[serde(serialize_with = "num::f64")]
    pub best_constant: f64,
    /// Ball index and test function attaining the best constant.
    pub witness: Option<(usize, String)>,
    #[serde(serialize_with = "num::opt")]
    pub supplied_constant: Option<f64>,
    pub verdict: bool,
    pub status: Status,
    pub battery: BatteryOptions,
    pub seminorm_solves: usize,
    pub notes: Vec<String>,
}

/// Test functions tried on one ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub center: PointId,
    pub radius: f64,
    pub witnesses: Vec<Witness>,
}

/// Largest ratio over the probes, with the best test function per ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Maximum {
    pub value: f64,
    pub balls: Vec<BallReport>,
    /// Probe index and test function attaining the maximum.
    pub witness: Option<(usize, String)>,
}

struct Candidate {
    ball: usize,
    witness: usize,
    bound: f64,
}

/// Exact maximum of the ratio over every probe and test function.
///
/// Each candidate is first bounded from above by replacing its seminorm with
/// a closed-form lower bound; candidates are then solved in decreasing order
/// of that bound until no remaining bound can exceed the best ratio found.
/// Trudinger candidates with zero seminorm are outside the inequality and are
/// skipped.
pub fn maximize_ratio(eval: &mut Evaluator<'_>, probes: &[Probe]) -> Result<Maximum> {
    let contexts: Vec<BallContext> = probes.iter().map(|b| eval.context(b.center, b.radius)).collect::<Result<_>>()?;
    let mut candidates = Vec::new();
    for (b, (ctx, probe)) in contexts.iter().zip(probes).enumerate() {
        for (k, w) in probe.witnesses.iter().enumerate() {
            check_len(&w.values, eval.space.len())?;
            let lb = eval.seminorm_lower_bound(&ctx.outer, &w.values);
            let (lhs, rhs, _) = eval.assemble(ctx, &w.values, lb);
            candidates.push(Candidate {
                ball: b,
                witness: k,
                bound: ratio_of(lhs, &rhs),
            });
        }
    }
    candidates.sort_by(|a, b| {
        b.bound
            .total_cmp(&a.bound)
            .then(a.ball.cmp(&b.ball))
            .then(a.witness.cmp(&b.witness))
    });

    let mut balls: Vec<BallReport> = probes
        .iter()
        .map(|b| BallReport {
            center: b.center,
            radius: b.radius,
            lhs: 0.0,
            rhs: Vec::new(),
            ratio: f64::NEG_INFINITY,
            witness: String::new(),
            pruned_bound: None,
        })
        .collect();
    let mut best = f64::NEG_INFINITY;
    let mut witness = None;
    let trudinger = eval.case.regime == Regime::Trudinger;
    for cand in candidates {
        let report = &mut balls[cand.ball];
        if cand.bound <= best {
            let pruned = report.pruned_bound.get_or_insert(cand.bound);
            *pruned = pruned.max(cand.bound);
            continue;
        }
        let ctx = &contexts[cand.ball];
        let w = &probes[cand.ball].witnesses[cand.witness];
        let sem = eval.seminorm_on(&ctx.outer, &w.values)?;
        if trudinger && sem == 0.0 {
            continue;
        }
        let (lhs, rhs, _) = eval.assemble(ctx, &w.values, sem);
        let ratio = ratio_of(lhs, &rhs);
        let report = &mut balls[cand.ball];
        if ratio > report.ratio {
            report.lhs = lhs;
            report.rhs = rhs;
            report.ratio = ratio;
            report.witness = w.label.clone();
        }
        if ratio > best {
            best = ratio;
            witness = Some((cand.ball, w.label.clone()));
        }
    }
    for r in &mut balls {
        if r.ratio == f64::NEG_INFINITY {
            r.ratio = 0.0;
        }
    }
    Ok(Maximum {
        value: best.max(0.0),
        balls,
        witness,
    })
}

/// Largest ratio over every ball of the family and every test function of
/// the battery.
pub fn best_constant(
    space: &QuasiMetricSpace,
    reg: &RegularizedMetric,
    case: &EmbeddingCase,
    balls: &[(PointId, f64)],
    battery: &BatteryOptions,
    supplied: Option<f64>,
) -> Result<EmbeddingReport> {
    if balls.is_empty() {
        return Err(Error::InvalidArgument("ball family is empty".into()));
    }
    let mut eval = Evaluator::new(space, case.clone())?;
    let mut notes = Vec::new();
    let alpha = if battery.chains {
        match default_alpha(reg.alpha0, case.s) {
            Ok(a) => Some(a),
            Err(e) => {
                notes.push(format!("bump chains skipped: {e}"));
                None
            }
        }
    } else {
        None
    };
    let n = space.len();
    let mut common: Vec<Witness> = random_functions(n, battery.random, battery.seed);
    common.extend(battery.extra.iter().map(|(l, v)| Witness {
        label: l.clone(),
        values: v.clone(),
    }));

    let probes: Vec<Probe> = if case.single_ball() {
        let mut w: Vec<Witness> = Vec::new();
        for x in 0..n {
            for d in space.distances_from(x).into_iter().filter(|&d| d > 0.0) {
                for cand in ball_witnesses(space, reg, alpha, x, d, battery) {
                    if !w.iter().any(|o| o.values == cand.values) {
                        w.push(cand);
                    }
                }
            }
        }
        w.extend(common.iter().cloned());
        vec![Probe {
            center: balls[0].0,
            radius: balls[0].1,
            witnesses: w,
        }]
    } else {
        balls
            .iter()
            .map(|&(center, radius)| {
                let mut witnesses = ball_witnesses(space, reg, alpha, center, radius, battery);
                witnesses.extend(common.iter().cloned());
                Probe { center, radius, witnesses }
            })
            .collect()
    };
    let max = maximize_ratio(&mut eval, &probes)?;
    let status = if max.value.is_finite() {
        Status::Bounded
    } else {
        Status::Unbounded
    };
    let verdict = match supplied {
        Some(c) => max.value <= c,
        None => max.value.is_finite(),
    };
    Ok(EmbeddingReport {
        theorem: case.theorem,
        regime: case.regime,
        params: case.clone(),
        outside_theorem: case.outside_theorem(space),
        balls: max.balls,
        best_constant: max.value,
        witness: max.witness,
        supplied_constant: supplied,
        verdict,
        status,
        battery: battery.clone(),
        seminorm_solves: eval.solves,
        notes,
    })
}
