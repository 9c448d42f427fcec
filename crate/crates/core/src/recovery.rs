//! Recovery of lower Ahlfors-regularity and doubling constants from measured
//! embedding constants, and the resolution scan for trivial function spaces.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::bumps::{bump_chain, bump_function, default_alpha, discrepancy_set, BumpChain, ChainVariant};
use crate::embeddings::{critical_balls, maximize_ratio, EmbeddingCase, Evaluator, Probe, Regime, Theorem, Witness};
use crate::error::{Error, Result};
use crate::generate::{cantor, grid};
use crate::geometry::{
    critical_radii, doubling_analysis, half_mass_radius, index_bounds, regularity_fit, uniform_perfectness, PERFECTNESS_FLOOR,
};
use crate::gradients::{minimal_transition_seminorm, SeminormSpec};
use crate::regularization::{comparability, RegularizedMetric};
use crate::report::{csv_number, num};
use crate::space::{ball_members, Distance, PointId, QuasiMetricSpace};

/// Relative slack for the literal two-point check.
const TWO_POINT_SLACK: f64 = 1e-12;

/// `theta^{-pt/(t-p)} 2^{-pt^2/(t-p)^2}`: the lower mass bound produced by
/// the iteration scheme.
pub fn iteration_bound(p: f64, t: f64, theta: f64) -> Result<f64> {
    if !(p > 0.0 && p < t && t.is_finite() && theta > 0.0 && theta.is_finite()) {
        return Err(Error::BadExponents { p, t, theta });
    }
    let e1 = p * t / (t - p);
    let e2 = p * t * t / ((t - p) * (t - p));
    Ok((-e1 * theta.log2() - e2).exp2())
}

/// Outcome of checking `mu_{j+1}^{1/t} <= theta 2^j mu_j^{1/p}` along a
/// radius sequence, where `mu_j` is the mass of the open `rho#`-ball of
/// radius `r_j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationCheck {
    pub holds: bool,
    /// First 1-based index `j` at which the inequality fails.
    pub first_violation: Option<usize>,
    /// Number of indices checked.
    pub checked: usize,
    /// Index from which the stored measures no longer change. Past it the
    /// left side is fixed while the right side doubles with every step, so
    /// the inequality at later indices follows from the last checked one.
    pub stabilized_from: usize,
}

/// Check the iteration hypothesis for every stored index.
pub fn verify_iteration_hypothesis(
    space: &QuasiMetricSpace,
    reg: &RegularizedMetric,
    x: PointId,
    radii: &[f64],
    p: f64,
    t: f64,
    theta: f64,
) -> IterationCheck {
    let measures: Vec<f64> = radii.iter().map(|&r| space.mass_of(&ball_members(reg, x, r, false))).collect();
    let mut first_violation = None;
    for j in 1..measures.len() {
        let lhs = measures[j].powf(1.0 / t);
        let rhs = theta * 2f64.powi(j as i32) * measures[j - 1].powf(1.0 / p);
        if !(lhs <= rhs) {
            first_violation = Some(j);
            break;
        }
    }
    let last = measures.last().copied();
    let stabilized_from = measures.iter().rposition(|&m| Some(m) != last).map_or(1, |i| i + 2);
    IterationCheck {
        holds: first_violation.is_none(),
        first_violation,
        checked: measures.len().saturating_sub(1),
        stabilized_from,
    }
}

/// Extend a constant proved for restricted radii to all radii: `C lambda^Q`.
pub fn extend_restricted(constant: f64, lambda: f64, big_q: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda <= 1.0 && constant > 0.0 && big_q > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "extension needs lambda in (0,1] and positive inputs, got C={constant}, lambda={lambda}, Q={big_q}"
        )));
    }
    Ok(constant * lambda.powf(big_q))
}

/// Which embedding inequality the recovery starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RecoveryMode {
    /// Sobolev inequality, plain bump chains.
    A,
    /// Poincaré inequality, half-mass chains.
    B,
    /// Trudinger inequality at `p = Q/s`, half-mass chains.
    C,
    /// Hölder inequality at `p > Q/s`, single bumps.
    D,
}

impl FromStr for RecoveryMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "a" => Ok(RecoveryMode::A),
            "b" => Ok(RecoveryMode::B),
            "c" => Ok(RecoveryMode::C),
            "d" => Ok(RecoveryMode::D),
            _ => Err(format!("unknown recovery mode '{s}' (expected a, b, c or d)")),
        }
    }
}

impl fmt::Display for RecoveryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RecoveryMode::A => "a",
            RecoveryMode::B => "b",
            RecoveryMode::C => "c",
            RecoveryMode::D => "d",
        };
        f.write_str(s)
    }
}

impl RecoveryMode {
    fn regime(self) -> Regime {
        match self {
            RecoveryMode::A => Regime::Sobolev,
            RecoveryMode::B => Regime::Poincare,
            RecoveryMode::C => Regime::Trudinger,
            RecoveryMode::D => Regime::Holder,
        }
    }
}

/// Which geometric property is recovered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    LowerRegularity,
    Doubling,
}

/// Smoothness and exponent parameters of a recovery run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryParams {
    pub s: f64,
    pub p: f64,
    #[serde(serialize_with = "num::f64")]
    pub q: f64,
    #[serde(rename = "Q")]
    pub big_q: f64,
    pub sigma: f64,
    pub besov: bool,
    /// Exponent split of the doubling Trudinger mode; the recovered exponent
    /// is `Q beta / (beta - 1)`.
    pub beta: f64,
    pub c1: f64,
    pub omega: f64,
}

impl RecoveryParams {
    pub fn new(s: f64, p: f64, q: f64, big_q: f64, sigma: f64) -> Self {
        RecoveryParams {
            s,
            p,
            q,
            big_q,
            sigma,
            besov: false,
            beta: 2.0,
            c1: 1.0,
            omega: 1.0,
        }
    }

    fn case(&self, theorem: Theorem, mode: RecoveryMode) -> EmbeddingCase {
        let mut case = EmbeddingCase::new(theorem, mode.regime(), self.s, self.p, self.q, self.big_q, self.sigma);
        case.besov = self.besov;
        case.c1 = self.c1;
        case.omega = self.omega;
        case
    }
}

/// Literal evaluation `1 = |Phi(x) - Phi(x0)| <= C rho(x,x0)^{s-Q/p} |Phi|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoPoint {
    pub x0: PointId,
    pub rho: f64,
    /// Outer radius of the bump `Phi_{0,R}`.
    pub bump_radius: f64,
    pub seminorm: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Recovery detail for one ball `B(x, r)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallRecovery {
    pub center: PointId,
    pub radius: f64,
    pub measure: f64,
    /// Whether the ball satisfies the restricted-radius condition of the mode.
    pub good: bool,
    /// Containing ball `(y, R)` attaining the least exact doubling ratio.
    pub outer: Option<(PointId, f64)>,
    #[serde(serialize_with = "num::opt")]
    pub theta: Option<f64>,
    /// Lower bound on the mass of the first chain ball from the iteration.
    #[serde(serialize_with = "num::opt")]
    pub iteration_bound: Option<f64>,
    pub first_measure: Option<f64>,
    pub hypothesis: Option<IterationCheck>,
    pub two_point: Option<TwoPoint>,
    /// Lower bound this ball contributes to the recovered constant.
    #[serde(serialize_with = "num::f64")]
    pub kappa_ball: f64,
    pub note: Option<String>,
}

/// Recovered constant and its derivation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub target: Target,
    pub mode: RecoveryMode,
    pub params: RecoveryParams,
    /// Exponent of the recovered inequality (`Q`, or `Q beta/(beta-1)` in the
    /// doubling Trudinger mode).
    pub exponent: f64,
    #[serde(serialize_with = "num::opt")]
    pub measured_constant: Option<f64>,
    /// Largest ratio of the embedding over the balls and functions used.
    #[serde(serialize_with = "num::f64")]
    pub required_constant: f64,
    /// Embedding constant entering the bounds: the larger of the two above.
    #[serde(serialize_with = "num::f64")]
    pub constant_used: f64,
    /// Largest normalized seminorm of the chain functions or bumps used.
    pub chain_constant: f64,
    #[serde(serialize_with = "num::f64")]
    pub k: f64,
    pub lambda: Option<f64>,
    /// Whether the restricted-radius result was extended to all radii.
    pub extended: bool,
    pub kappa_recovered: f64,
    pub kappa_exact: f64,
    /// `0 < kappa_recovered <= kappa_exact`.
    pub sound: bool,
    pub pairs: usize,
    pub per_ball: Vec<BallRecovery>,
    pub notes: Vec<String>,
}

/// Lower Ahlfors-regularity constant recovered from an embedding.
pub fn recover_lower_regularity(
    space: &QuasiMetricSpace,
    reg: &RegularizedMetric,
    params: &RecoveryParams,
    measured_constant: Option<f64>,
    mode: RecoveryMode,
) -> Result<RecoveryReport> {
    Recovery::new(space, reg, params, measured_constant, mode, Target::LowerRegularity)?.run()
}

/// `Q`-doubling constant (or `Q beta/(beta-1)` in mode (c)) recovered from an
/// embedding.
pub fn recover_doubling(
    space: &QuasiMetricSpace,
    reg: &RegularizedMetric,
    params: &RecoveryParams,
    measured_constant: Option<f64>,
    mode: RecoveryMode,
) -> Result<RecoveryReport> {
    Recovery::new(space, reg, params, measured_constant, mode, Target::Doubling)?.run()
}

/// Exponent of the doubling inequality recovered in mode (c).
pub fn degraded_exponent(big_q: f64, beta: f64) -> Result<f64> {
    if !(beta > 1.0) {
        return Err(Error::InvalidArgument(format!("beta must exceed 1, got {beta}")));
    }
    Ok(big_q * beta / (beta - 1.0))
}

/// A ball with its chain (or single bump) and normalization data.
struct Unit {
    center: PointId,
    radius: f64,
    measure: f64,
    members: Vec<PointId>,
    good: bool,
    chain: Option<BumpChain>,
    bump: Option<SingleBump>,
    note: Option<String>,
}

struct SingleBump {
    x0: PointId,
    rho: f64,
    big_r: f64,
    inner_measure: f64,
    values: Vec<f64>,
}

struct Recovery<'a> {
    space: &'a QuasiMetricSpace,
    reg: &'a RegularizedMetric,
    params: RecoveryParams,
    measured: Option<f64>,
    mode: RecoveryMode,
    target: Target,
    alpha: f64,
    lambda: Option<f64>,
    notes: Vec<String>,
}

impl<'a> Recovery<'a> {
    fn new(
        space: &'a QuasiMetricSpace,
        reg: &'a RegularizedMetric,
        params: &RecoveryParams,
        measured: Option<f64>,
        mode: RecoveryMode,
        target: Target,
    ) -> Result<Self> {
        let (s, p, big_q) = (params.s, params.p, params.big_q);
        if !(s > 0.0 && p > 0.0 && big_q > 0.0 && params.q > 0.0) {
            return Err(Error::InvalidArgument("s, p, q and Q must be positive".into()));
        }
        let bound = index_bounds(space, &[])?.smoothness_lb;
        let admissible = s < bound || (s == bound && params.q.is_infinite());
        if !admissible {
            return Err(Error::PreconditionFailed(format!(
                "smoothness s = {s} exceeds the admissible bound {bound} (equality needs q = inf)"
            )));
        }
        let critical = big_q / s;
        let exponent_ok = match mode {
            RecoveryMode::A | RecoveryMode::B => p < critical,
            RecoveryMode::C => (p - critical).abs() <= 1e-12 * p,
            RecoveryMode::D => p > critical,
        };
        if !exponent_ok {
            return Err(Error::PreconditionFailed(format!(
                "mode ({mode}) exponent range violated: p = {p}, Q/s = {critical}"
            )));
        }
        if mode == RecoveryMode::C && target == Target::Doubling {
            degraded_exponent(big_q, params.beta)?;
        }
        if let Some(c) = measured {
            if c.is_infinite() {
                return Err(Error::UnboundedConstant);
            }
            if !(c >= 0.0) {
                return Err(Error::InvalidArgument(format!("measured constant must be nonnegative, got {c}")));
            }
        }
        let lambda = if mode == RecoveryMode::A {
            None
        } else {
            Some(uniform_perfectness(space, PERFECTNESS_FLOOR).lambda()?)
        };
        let alpha = default_alpha(reg.alpha0, s)?;
        Ok(Recovery {
            space,
            reg,
            params: *params,
            measured,
            mode,
            target,
            alpha,
            lambda,
            notes: Vec::new(),
        })
    }

    fn theorem(&self) -> Theorem {
        match self.target {
            Target::LowerRegularity => Theorem::Lb,
            Target::Doubling => Theorem::Doub,
        }
    }

    fn exponent(&self) -> f64 {
        match (self.target, self.mode) {
            (Target::Doubling, RecoveryMode::C) => degraded_exponent(self.params.big_q, self.params.beta).expect("checked in new"),
            _ => self.params.big_q,
        }
    }

    /// Balls `B(x, r)` at every radius where `mu(B(x, .)) / r^Q` can attain
    /// its infimum.
    fn balls(&self) -> Vec<(PointId, f64)> {
        let diam = self.space.diameter();
        (0..self.space.len())
            .flat_map(|x| critical_radii(self.space, x, diam).into_iter().map(move |r| (x, r)))
            .collect()
    }

    /// Smallest restricted-radius ratio and half-mass constant for modes (b), (c).
    fn half_mass_constants(&self) -> (f64, f64) {
        let summary = self.space.summary();
        let lambda_star = self.lambda.expect("perfectness checked");
        let lambda = lambda_star.min(0.5 * (summary.c_rho * summary.c_tilde_rho).powi(-2));
        (lambda, summary.c_rho / (lambda * lambda))
    }

    fn units(&mut self) -> Result<Vec<Unit>> {
        let space = self.space;
        let mut units = Vec::new();
        let all_count = space.len();
        let c = comparability(space, self.reg);
        for (x, r) in self.balls() {
            let members = ball_members(space, x, r, false);
            let measure = space.mass_of(&members);
            let mut unit = Unit {
                center: x,
                radius: r,
                measure,
                members,
                good: true,
                chain: None,
                bump: None,
                note: None,
            };
            match self.mode {
                RecoveryMode::A => {
                    unit.chain = Some(bump_chain(self.reg, space, x, r, self.alpha, ChainVariant::Plain)?);
                }
                RecoveryMode::B | RecoveryMode::C => {
                    let (_, c0) = self.half_mass_constants();
                    let phi = half_mass_radius(space, x, r);
                    unit.good = r <= c0 * phi;
                    if unit.good {
                        let chain = bump_chain(self.reg, space, x, r, self.alpha, ChainVariant::HalfMass { c0 })?;
                        for j in 1..=chain.len() {
                            let inner = discrepancy_set(space, self.reg, &chain, j, 0.0)?;
                            let outer = discrepancy_set(space, self.reg, &chain, j, 1.0)?;
                            if !(inner.mass_ok && outer.mass_ok) {
                                return Err(Error::PreconditionFailed(format!(
                                    "discrepancy set too light for ball ({x}, {r}), index {j}"
                                )));
                            }
                        }
                        unit.chain = Some(chain);
                    }
                }
                RecoveryMode::D => {
                    if unit.members.len() == all_count {
                        unit.note = Some("ball is the whole space".into());
                    } else {
                        unit.bump = self.single_bump(x, r, c)?;
                        if unit.bump.is_none() {
                            unit.note = Some("no second point in the ball: bounded by the center mass".into());
                        }
                    }
                }
            }
            units.push(unit);
        }
        Ok(units)
    }

    /// `Phi_{0,R}` around `x` with `R = lambda' r0`, `r0 = r / c`,
    /// `lambda' = lambda / c^2`, and a point `x0` with `R <= rho#(x,x0) < r0`
    /// of least `rho(x, x0)`. When that annulus is empty the largest
    /// `rho#`-distance below `r0` is used as `R`.
    fn single_bump(&self, x: PointId, r: f64, c: f64) -> Result<Option<SingleBump>> {
        let space = self.space;
        let lambda = self.lambda.expect("perfectness checked");
        let r0 = r / c;
        let inner_radius = lambda / (c * c) * r0;
        let pick = |lo: f64| {
            (0..space.len())
                .filter(|&y| y != x)
                .filter(|&y| {
                    let d = self.reg.dist(x, y);
                    d >= lo && d < r0
                })
                .min_by(|&a, &b| space.dist(x, a).total_cmp(&space.dist(x, b)).then(a.cmp(&b)))
        };
        let (x0, big_r) = match pick(inner_radius) {
            Some(y) => (y, inner_radius),
            None => {
                let fallback = (0..space.len())
                    .filter(|&y| y != x && self.reg.dist(x, y) < r0)
                    .max_by(|&a, &b| self.reg.dist(x, a).total_cmp(&self.reg.dist(x, b)).then(b.cmp(&a)));
                match fallback {
                    Some(y) => (y, self.reg.dist(x, y)),
                    None => return Ok(None),
                }
            }
        };
        let bump = bump_function(self.reg, space, x, 0.0, big_r, self.alpha)?;
        let inner_measure = space.mass_of(&ball_members(self.reg, x, big_r, false));
        Ok(Some(SingleBump {
            x0,
            rho: space.dist(x, x0),
            big_r,
            inner_measure,
            values: bump.values,
        }))
    }

    /// Seminorm of `u` on the dilated ball of `B(x, r)`, or on the whole space
    /// for the doubling target, whose containing balls vary.
    fn chain_seminorm(&self, eval: &mut Evaluator<'_>, x: PointId, r: f64, u: &[f64]) -> Result<f64> {
        let set = match self.target {
            Target::LowerRegularity => ball_members(self.space, x, self.params.sigma * r, false),
            Target::Doubling => (0..self.space.len()).collect(),
        };
        eval.seminorm_on(&set, u)
    }

    /// `max sem(u_j) / (2^j r^{-s} mu_j^{1/p})` over the chains of good balls.
    fn chain_constant(&self, eval: &mut Evaluator<'_>, units: &[Unit]) -> Result<f64> {
        let (s, p) = (self.params.s, self.params.p);
        let mut best: f64 = 0.0;
        for unit in units {
            if let Some(chain) = &unit.chain {
                for (i, u) in chain.functions.iter().enumerate() {
                    let sem = self.chain_seminorm(eval, unit.center, unit.radius, u)?;
                    let j = (i + 1) as f64;
                    let scale = 2f64.powf(j) * unit.radius.powf(-s) * chain.measures[i].powf(1.0 / p);
                    best = best.max(sem / scale);
                }
            }
            if let Some(b) = &unit.bump {
                let all: Vec<PointId> = (0..self.space.len()).collect();
                let sem = eval.seminorm_on(&all, &b.values)?;
                best = best.max(sem / (b.big_r.powf(-s) * b.inner_measure.powf(1.0 / p)));
            }
        }
        Ok(best)
    }

    fn unit_witnesses(unit: &Unit) -> Vec<Witness> {
        let mut out: Vec<Witness> = Vec::new();
        if let Some(chain) = &unit.chain {
            for (i, u) in chain.functions.iter().enumerate() {
                if !out.iter().any(|w| &w.values == u) {
                    out.push(Witness {
                        label: format!("chain(x={}, r={}, j={})", unit.center, unit.radius, i + 1),
                        values: u.clone(),
                    });
                }
            }
        }
        if let Some(b) = &unit.bump {
            out.push(Witness {
                label: format!("bump(x={}, R={})", unit.center, b.big_r),
                values: b.values.clone(),
            });
        }
        out
    }

    /// Containing balls `B(y, R)` of the doubling family with `r <= R`.
    fn containing(&self, family: &[(PointId, f64)], unit: &Unit) -> Vec<usize> {
        family
            .iter()
            .enumerate()
            .filter(|(_, &(y, big_r))| unit.radius <= big_r && unit.members.iter().all(|&z| self.space.dist(y, z) < big_r))
            .map(|(i, _)| i)
            .collect()
    }

    fn run(mut self) -> Result<RecoveryReport> {
        let space = self.space;
        let (s, p, big_q) = (self.params.s, self.params.p, self.params.big_q);
        let case = self.params.case(self.theorem(), self.mode);
        let mut eval = Evaluator::new(space, case.clone())?;
        let units = self.units()?;
        let chain_constant = self.chain_constant(&mut eval, &units)?;

        // Probes: each ball with its own functions, or each containing ball with
        // the functions of every ball inside it.
        let family = match self.target {
            Target::LowerRegularity => Vec::new(),
            Target::Doubling => critical_balls(space, &case),
        };
        let mut contained: Vec<Vec<usize>> = Vec::new();
        let probes: Vec<Probe> = match self.target {
            Target::LowerRegularity => units
                .iter()
                .filter(|u| u.chain.is_some() || u.bump.is_some())
                .map(|u| Probe {
                    center: u.center,
                    radius: u.radius,
                    witnesses: Self::unit_witnesses(u),
                })
                .collect(),
            Target::Doubling => {
                contained = units.iter().map(|u| self.containing(&family, u)).collect();
                let mut per_outer: Vec<Vec<Witness>> = vec![Vec::new(); family.len()];
                for (u, outers) in units.iter().zip(&contained) {
                    let ws = Self::unit_witnesses(u);
                    for &o in outers {
                        for w in &ws {
                            if !per_outer[o].iter().any(|v| v.values == w.values) {
                                per_outer[o].push(w.clone());
                            }
                        }
                    }
                }
                family
                    .iter()
                    .zip(per_outer)
                    .filter(|(_, w)| !w.is_empty())
                    .map(|(&(center, radius), witnesses)| Probe { center, radius, witnesses })
                    .collect()
            }
        };
        let required = maximize_ratio(&mut eval, &probes)?.value;
        if required.is_infinite() {
            return Err(Error::UnboundedConstant);
        }
        let constant = self.measured.unwrap_or(0.0).max(required);
        if self.measured.is_some_and(|m| m < required) {
            self.notes.push(format!(
                "measured constant {} is below the ratio {required} on the functions used; the larger value is used",
                self.measured.unwrap_or(0.0)
            ));
        }

        let exponent = self.exponent();
        let p_star = big_q * p / (big_q - s * p);
        let (c1, omega) = (self.params.c1, self.params.omega);
        let k = match self.mode {
            RecoveryMode::A => constant * (chain_constant + 1.0),
            RecoveryMode::B => 2.0 * constant * chain_constant,
            RecoveryMode::C => {
                let t = self.trudinger_t();
                (t / omega).powf(1.0 / omega) * constant.powf(1.0 / t) * 2.0 * chain_constant / c1
            }
            RecoveryMode::D => constant * chain_constant,
        };
        if !(k > 0.0 && k.is_finite()) && self.mode != RecoveryMode::D {
            return Err(Error::PreconditionFailed(format!(
                "chain constant product K = {k} is not positive and finite"
            )));
        }

        // Uniform constant of the chain modes.
        let uniform = match (self.target, self.mode) {
            (_, RecoveryMode::D) => f64::NAN,
            (Target::LowerRegularity, RecoveryMode::A | RecoveryMode::B) => k.powf(-p) * (-big_q / s).exp2(),
            (Target::LowerRegularity, RecoveryMode::C) => k.powf(-big_q / s) * (-2.0 * big_q / s).exp2(),
            (Target::Doubling, RecoveryMode::A | RecoveryMode::B) => k.powf(-big_q / s) * (-big_q * big_q / (s * s * p)).exp2(),
            (Target::Doubling, RecoveryMode::C) => {
                let beta = self.params.beta;
                k.powf(-big_q * beta / (s * (beta - 1.0))) * (-big_q * beta * beta / (s * (beta - 1.0).powi(2))).exp2()
            }
        };

        let mut per_ball = Vec::with_capacity(units.len());
        let mut pairs = 0;
        let all_measure = space.total_mass();
        let diam = space.diameter();
        let mut kappa = f64::INFINITY;
        let mut any_bad = false;
        for (idx, unit) in units.iter().enumerate() {
            let mut detail = BallRecovery {
                center: unit.center,
                radius: unit.radius,
                measure: unit.measure,
                good: unit.good,
                outer: None,
                theta: None,
                iteration_bound: None,
                first_measure: None,
                hypothesis: None,
                two_point: None,
                kappa_ball: uniform,
                note: unit.note.clone(),
            };
            if !unit.good {
                any_bad = true;
            }
            let outers: Vec<(PointId, f64)> = match self.target {
                Target::LowerRegularity => vec![(unit.center, unit.radius)],
                Target::Doubling => contained[idx].iter().map(|&o| family[o]).collect(),
            };
            pairs += outers.len();
            // The containing ball with the least exact doubling ratio.
            let outer = outers.iter().copied().min_by(|a, b| {
                let ra = space.open_ball_measure(a.0, a.1).recip() * a.1.powf(exponent);
                let rb = space.open_ball_measure(b.0, b.1).recip() * b.1.powf(exponent);
                ra.total_cmp(&rb)
            });
            if self.target == Target::Doubling {
                detail.outer = outer;
            }
            match self.mode {
                RecoveryMode::D => {
                    detail.kappa_ball =
                        self.two_point_bound(unit, &outers, constant, chain_constant, all_measure, diam, &mut eval, &mut detail)?;
                }
                _ => {
                    if let (Some(chain), Some((y, big_r))) = (&unit.chain, outer) {
                        let (t, theta) = self.theta(unit, y, big_r, k, p_star);
                        detail.theta = Some(theta);
                        detail.iteration_bound = iteration_bound(self.iteration_p(), t, theta).ok();
                        detail.first_measure = chain.measures.first().copied();
                        detail.hypothesis = Some(verify_iteration_hypothesis(
                            space,
                            self.reg,
                            unit.center,
                            &chain.radii,
                            self.iteration_p(),
                            t,
                            theta,
                        ));
                    }
                }
            }
            kappa = kappa.min(detail.kappa_ball);
            per_ball.push(detail);
        }

        let mut extended = false;
        if any_bad && self.mode != RecoveryMode::D {
            let (lambda, _) = self.half_mass_constants();
            kappa = extend_restricted(kappa, lambda, exponent)?;
            extended = true;
            self.notes.push(format!("restricted radii extended with lambda = {lambda}"));
        }
        let kappa_exact = match self.target {
            Target::LowerRegularity => regularity_fit(space, big_q).kappa,
            Target::Doubling => doubling_analysis(space, exponent).kappa_q,
        };
        self.notes.push(
            "the iteration hypothesis is checked on the stored radii; past them the ball masses are constant and the hypothesis follows from the doubling factor"
                .into(),
        );
        Ok(RecoveryReport {
            target: self.target,
            mode: self.mode,
            params: self.params,
            exponent,
            measured_constant: self.measured,
            required_constant: required,
            constant_used: constant,
            chain_constant,
            k,
            lambda: self.lambda,
            extended,
            kappa_recovered: kappa,
            kappa_exact,
            sound: kappa > 0.0 && kappa <= kappa_exact,
            pairs,
            per_ball,
            notes: self.notes,
        })
    }

    fn trudinger_t(&self) -> f64 {
        let ratio = self.params.big_q / self.params.s;
        match self.target {
            Target::LowerRegularity => 2.0 * ratio,
            Target::Doubling => self.params.beta * ratio,
        }
    }

    fn iteration_p(&self) -> f64 {
        match self.mode {
            RecoveryMode::C => self.params.big_q / self.params.s,
            _ => self.params.p,
        }
    }

    /// Exponent `t` and ratio `theta` of the iteration for ball `B(x, r)`
    /// inside `B(y, R)`.
    fn theta(&self, unit: &Unit, y: PointId, big_r: f64, k: f64, p_star: f64) -> (f64, f64) {
        let (s, p, big_q) = (self.params.s, self.params.p, self.params.big_q);
        let r = unit.radius;
        match (self.target, self.mode) {
            (Target::LowerRegularity, RecoveryMode::C) => {
                let t = self.trudinger_t();
                (t, k * unit.measure.powf(1.0 / t) * r.powf(-s))
            }
            (Target::LowerRegularity, _) => (p_star, k * unit.measure.powf(1.0 / p_star) / r.powf(big_q / p)),
            (Target::Doubling, RecoveryMode::C) => {
                let beta = self.params.beta;
                let outer = self.space.open_ball_measure(y, big_r);
                (
                    self.trudinger_t(),
                    k * (big_r / r).powf(s) * outer.powf(-(s / big_q) * (1.0 - 1.0 / beta)),
                )
            }
            (Target::Doubling, _) => {
                let outer = self.space.open_ball_measure(y, big_r);
                (p_star, k * (big_r / r).powf(s) / outer.powf(s / big_q))
            }
        }
    }

    /// Per-ball bound of mode (d) from the single bump and its two points.
    #[allow(clippy::too_many_arguments)]
    fn two_point_bound(
        &self,
        unit: &Unit,
        outers: &[(PointId, f64)],
        c_h: f64,
        c_g: f64,
        all_measure: f64,
        diam: f64,
        eval: &mut Evaluator<'_>,
        detail: &mut BallRecovery,
    ) -> Result<f64> {
        let (s, p, big_q) = (self.params.s, self.params.p, self.params.big_q);
        let r = unit.radius;
        let exponent = self.exponent();
        if unit.members.len() == self.space.len() {
            return Ok(match self.target {
                Target::LowerRegularity => all_measure / diam.powf(big_q),
                Target::Doubling => 1.0,
            });
        }
        let Some(b) = &unit.bump else {
            let center_mass = self.space.mu()[unit.center];
            return Ok(match self.target {
                Target::LowerRegularity => center_mass / r.powf(big_q),
                Target::Doubling => outers
                    .iter()
                    .map(|&(y, big_r)| center_mass / self.space.open_ball_measure(y, big_r) * (big_r / r).powf(exponent))
                    .fold(f64::INFINITY, f64::min),
            });
        };
        let holder_exp = s - big_q / p;
        let all: Vec<PointId> = (0..self.space.len()).collect();
        let sem = eval.seminorm_on(&all, &b.values)?;
        let rhs = c_h * b.rho.powf(holder_exp) * sem;
        detail.two_point = Some(TwoPoint {
            x0: b.x0,
            rho: b.rho,
            bump_radius: b.big_r,
            seminorm: sem,
            rhs,
            holds: 1.0 <= rhs * (1.0 + TWO_POINT_SLACK),
        });
        let base = c_h * c_g * b.rho.powf(holder_exp) * b.big_r.powf(-s);
        Ok(match self.target {
            Target::LowerRegularity => base.powf(-p) / r.powf(big_q),
            Target::Doubling => outers
                .iter()
                .map(|&(_, big_r)| (base * big_r.powf(big_q / p)).powf(-p) / (r / big_r).powf(big_q))
                .fold(f64::INFINITY, f64::min),
        })
    }
}

/// Space families scanned across resolutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// `grid(n + 1, 1)`: `n` equal intervals of `[0, 1]`, endpoints `0` and `n`.
    Line,
    /// `cantor(depth, contraction)`, endpoints the first and last leaf.
    Cantor { contraction: f64 },
}

impl Family {
    /// The space at one resolution and its two designated endpoints.
    pub fn instance(&self, resolution: usize) -> Result<(QuasiMetricSpace, PointId, PointId)> {
        match *self {
            Family::Line => {
                if resolution == 0 {
                    return Err(Error::InvalidArgument("line resolution must be positive".into()));
                }
                Ok((grid(resolution + 1, 1)?, 0, resolution))
            }
            Family::Cantor { contraction } => {
                let depth =
                    u32::try_from(resolution).map_err(|_| Error::InvalidArgument(format!("cantor depth {resolution} too large")))?;
                let space = cantor(depth, contraction)?;
                let last = space.len() - 1;
                Ok((space, 0, last))
            }
        }
    }
}

/// One cell of the triviality table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrivialityRow {
    pub resolution: usize,
    pub s: f64,
    pub value: f64,
}

/// Least seminorm of a function equal to `0` and `1` at the two endpoints,
/// for every resolution and smoothness.
pub fn triviality_scan(family: &Family, resolutions: &[usize], s_grid: &[f64], p: f64, q: f64, besov: bool) -> Result<Vec<TrivialityRow>> {
    let mut rows = Vec::with_capacity(resolutions.len() * s_grid.len());
    for &resolution in resolutions {
        let (space, e0, e1) = family.instance(resolution)?;
        for &s in s_grid {
            let spec = if besov {
                SeminormSpec::besov(s, p, q)
            } else {
                SeminormSpec::triebel_lizorkin(s, p, q)
            };
            let value = minimal_transition_seminorm(&space, &[(e0, 0.0), (e1, 1.0)], &spec)?.value;
            rows.push(TrivialityRow { resolution, s, value });
        }
    }
    Ok(rows)
}

/// Triviality table as CSV with header `resolution,s,value`.
pub fn triviality_csv(rows: &[TrivialityRow]) -> String {
    let mut out = String::from("resolution,s,value\n");
    for row in rows {
        out.push_str(&format!("{},{},{}\n", row.resolution, csv_number(row.s), csv_number(row.value)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::islands;
    use crate::regularization::regularize;

    #[test]
    fn iteration_bound_examples() {
        assert_eq!(iteration_bound(1.0, 2.0, 1.0).unwrap(), 0.0625);
        assert_eq!(iteration_bound(1.0, 2.0, 2.0).unwrap(), 2f64.powi(-6));
        assert!(iteration_bound(1.0, 2.0, 3.0).unwrap() < iteration_bound(1.0, 2.0, 2.0).unwrap());
        assert!(matches!(iteration_bound(2.0, 1.0, 1.0), Err(Error::BadExponents { .. })));
        assert!(matches!(iteration_bound(1.0, 2.0, 0.0), Err(Error::BadExponents { .. })));
    }

    #[test]
    fn extension_examples() {
        assert_eq!(extend_restricted(1.0, 0.5, 1.0).unwrap(), 0.5);
        assert_eq!(extend_restricted(1.0, 1.0, 3.7).unwrap(), 1.0);
        assert_eq!(extend_restricted(2.0, 0.5, 2.0).unwrap(), 0.5);
    }

    #[test]
    fn degraded_exponent_examples() {
        assert_eq!(degraded_exponent(1.5, 2.0).unwrap(), 3.0);
        let mut last = f64::INFINITY;
        for beta in [1.5, 2.0, 4.0, 16.0, 1e6] {
            let e = degraded_exponent(1.0, beta).unwrap();
            assert!(e > 1.0 && e < last);
            last = e;
        }
        assert!(degraded_exponent(1.0, 1.0).is_err());
    }

    #[test]
    fn hypothesis_examples() {
        let sp = grid(5, 1).unwrap();
        let reg = regularize(&sp).unwrap();
        // Radii below the first positive distance keep the mass at 1/5.
        let radii = [0.2, 0.15, 0.1];
        let m: f64 = 0.2;
        let theta = m.powf(1.0 / 2.0 - 1.0);
        let ok = verify_iteration_hypothesis(&sp, &reg, 2, &radii, 1.0, 2.0, theta);
        assert!(ok.holds);
        assert_eq!(ok.checked, 2);
        let bad = verify_iteration_hypothesis(&sp, &reg, 2, &radii, 1.0, 2.0, 0.0);
        assert_eq!(bad.first_violation, Some(1));
    }

    #[test]
    fn lower_regularity_mode_a_on_grid() {
        let sp = grid(9, 1).unwrap();
        let reg = regularize(&sp).unwrap();
        let params = RecoveryParams::new(0.5, 1.0, f64::INFINITY, 1.0, sp.summary().c_rho);
        let rep = recover_lower_regularity(&sp, &reg, &params, None, RecoveryMode::A).unwrap();
        assert!(rep.sound, "{} vs {}", rep.kappa_recovered, rep.kappa_exact);
        assert!(rep.per_ball.iter().all(|b| b.hypothesis.as_ref().is_some_and(|h| h.holds)));
        for b in &rep.per_ball {
            if let (Some(bound), Some(m)) = (b.iteration_bound, b.first_measure) {
                assert!(m >= bound);
            }
        }
    }

    #[test]
    fn islands_refuse_perfectness_modes() {
        let sp = islands(&[4, 4], 10.0).unwrap();
        let reg = regularize(&sp).unwrap();
        let params = RecoveryParams::new(0.5, 1.0, f64::INFINITY, 1.0, sp.summary().c_rho);
        let r = recover_lower_regularity(&sp, &reg, &params, None, RecoveryMode::B);
        assert!(matches!(r, Err(Error::NotPerfect { .. })));
    }

    #[test]
    fn unbounded_measured_constant_is_refused() {
        let sp = grid(5, 1).unwrap();
        let reg = regularize(&sp).unwrap();
        let params = RecoveryParams::new(0.5, 1.0, f64::INFINITY, 1.0, 2.0);
        let r = recover_lower_regularity(&sp, &reg, &params, Some(f64::INFINITY), RecoveryMode::A);
        assert!(matches!(r, Err(Error::UnboundedConstant)));
    }

    #[test]
    fn triviality_csv_header() {
        let rows = triviality_scan(&Family::Line, &[2], &[0.5], 1.0, f64::INFINITY, false).unwrap();
        let csv = triviality_csv(&rows);
        assert!(csv.starts_with("resolution,s,value\n2,5.0000000000000000e-1,"));
        assert!(rows[0].value > 0.0);
    }
}
