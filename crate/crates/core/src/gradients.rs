//! Fractional s-gradients, mixed norms, canonical gradients and minimal
//! seminorms for the Triebel-Lizorkin, Besov and Sobolev kinds.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::solver::{BarrierOptions, ConvexProgram, Group, Linear, PowerSum};
use crate::space::{check_len, Distance, PointId, QuasiMetricSpace};

/// Largest tolerated violation of a gradient inequality.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-12;

/// Which mixed norm a seminorm uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Kind {
    TriebelLizorkin,
    Besov,
    Sobolev,
}

/// `(s, p, q, kind)`; `q = f64::INFINITY` encodes `q = inf`, and the Sobolev
/// kind ignores `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeminormSpec {
    pub s: f64,
    pub p: f64,
    #[serde(serialize_with = "crate::report::num::f64")]
    pub q: f64,
    pub kind: Kind,
}

impl SeminormSpec {
    pub fn sobolev(s: f64, p: f64) -> Self {
        SeminormSpec {
            s,
            p,
            q: f64::INFINITY,
            kind: Kind::Sobolev,
        }
    }

    pub fn triebel_lizorkin(s: f64, p: f64, q: f64) -> Self {
        SeminormSpec {
            s,
            p,
            q,
            kind: Kind::TriebelLizorkin,
        }
    }

    pub fn besov(s: f64, p: f64, q: f64) -> Self {
        SeminormSpec {
            s,
            p,
            q,
            kind: Kind::Besov,
        }
    }

    pub fn is_fractional(&self) -> bool {
        self.kind != Kind::Sobolev
    }
}

/// Dyadic level `k` with `2^{-k-1} <= d < 2^{-k}`, for `d > 0` finite.
pub fn level_of(d: f64) -> i32 {
    debug_assert!(d > 0.0 && d.is_finite());
    let bits = d.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let floor_log2 = if biased == 0 { d.log2().floor() as i32 } else { biased - 1023 };
    -floor_log2 - 1
}

/// Level of every ordered pair of distinct points.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelDecomposition {
    n: usize,
    level: Vec<i32>,
    pub active_levels: BTreeSet<i32>,
}

impl LevelDecomposition {
    pub fn new<D: Distance + ?Sized>(d: &D) -> Self {
        let n = d.len();
        let mut level = vec![0; n * n];
        let mut active_levels = BTreeSet::new();
        for x in 0..n {
            for y in 0..n {
                if x != y {
                    let k = level_of(d.dist(x, y));
                    level[x * n + y] = k;
                    active_levels.insert(k);
                }
            }
        }
        LevelDecomposition { n, level, active_levels }
    }

    /// Level of the ordered pair `(x, y)`, `x != y`.
    pub fn level(&self, x: PointId, y: PointId) -> i32 {
        self.level[x * self.n + y]
    }
}

/// Level-indexed family of nonnegative functions; absent levels are zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct FractionalGradient {
    pub levels: BTreeMap<i32, Vec<f64>>,
}

impl FractionalGradient {
    /// Value of `g_k(x)`.
    pub fn at(&self, k: i32, x: PointId) -> f64 {
        self.levels.get(&k).map_or(0.0, |g| g[x])
    }
}

/// A single nonnegative function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleGradient {
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Gradient {
    Fractional(FractionalGradient),
    Single(SingleGradient),
}

impl Gradient {
    /// Largest stored value.
    pub fn max_value(&self) -> f64 {
        match self {
            Gradient::Single(s) => s.g.iter().cloned().fold(0.0, f64::max),
            Gradient::Fractional(f) => f.levels.values().flatten().cloned().fold(0.0, f64::max),
        }
    }

    fn matches(&self, kind: Kind) -> bool {
        matches!(
            (self, kind),
            (Gradient::Single(_), Kind::Sobolev) | (Gradient::Fractional(_), Kind::TriebelLizorkin | Kind::Besov)
        )
    }
}

/// Result of checking the defining inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientCheck {
    pub valid: bool,
    pub worst_violation: f64,
}

/// Check `|u(x) - u(y)| <= rho(x,y)^s (g(x) + g(y))` for every ordered pair,
/// using the pair's own level for fractional gradients.
pub fn verify_gradient(space: &QuasiMetricSpace, u: &[f64], spec: &SeminormSpec, candidate: &Gradient) -> Result<GradientCheck> {
    check_len(u, space.len())?;
    if !candidate.matches(spec.kind) {
        return Err(Error::GradientShape);
    }
    let levels = LevelDecomposition::new(space);
    let n = space.len();
    let mut worst = f64::NEG_INFINITY;
    for x in 0..n {
        for y in 0..n {
            if x == y {
                continue;
            }
            let (gx, gy) = match candidate {
                Gradient::Single(s) => (s.g[x], s.g[y]),
                Gradient::Fractional(f) => {
                    let k = levels.level(x, y);
                    (f.at(k, x), f.at(k, y))
                }
            };
            let v = (u[x] - u[y]).abs() - space.dist(x, y).powf(spec.s) * (gx + gy);
            worst = worst.max(v);
        }
    }
    Ok(GradientCheck {
        valid: worst <= FEASIBILITY_TOLERANCE,
        worst_violation: worst,
    })
}

/// Pointwise maximal difference quotients: always a valid gradient.
pub fn canonical_gradient(space: &QuasiMetricSpace, u: &[f64], spec: &SeminormSpec) -> Result<Gradient> {
    check_len(u, space.len())?;
    let n = space.len();
    if spec.kind == Kind::Sobolev {
        let g = (0..n)
            .map(|x| {
                (0..n)
                    .filter(|&y| y != x)
                    .map(|y| (u[x] - u[y]).abs() / space.dist(x, y).powf(spec.s))
                    .fold(0.0, f64::max)
            })
            .collect();
        return Ok(Gradient::Single(SingleGradient { g }));
    }
    let levels = LevelDecomposition::new(space);
    let mut out = FractionalGradient::default();
    for x in 0..n {
        for y in 0..n {
            if x == y || u[x] == u[y] {
                continue;
            }
            let k = levels.level(x, y);
            let v = (u[x] - u[y]).abs() / space.dist(x, y).powf(spec.s);
            let row = out.levels.entry(k).or_insert_with(|| vec![0.0; n]);
            row[x] = row[x].max(v);
        }
    }
    Ok(Gradient::Fractional(out))
}

/// `(sum_{x in subset} mu(x) |f(x)|^p)^{1/p}`; `p = inf` gives the maximum.
pub fn lp_norm(space: &QuasiMetricSpace, f: &[f64], subset: &[PointId], p: f64) -> f64 {
    if p.is_infinite() {
        return subset.iter().map(|&x| f[x].abs()).fold(0.0, f64::max);
    }
    subset
        .iter()
        .map(|&x| space.mu()[x] * f[x].abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

fn lq(values: impl Iterator<Item = f64>, q: f64) -> f64 {
    if q.is_infinite() {
        values.fold(0.0, f64::max)
    } else {
        values.map(|v| v.powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

/// `L^p(l^q)` (Triebel-Lizorkin) or `l^q(L^p)` (Besov) norm of a fractional
/// gradient over the whole space.
pub fn mixed_norm(space: &QuasiMetricSpace, grad: &FractionalGradient, p: f64, q: f64, kind: Kind) -> f64 {
    let n = space.len();
    match kind {
        Kind::Besov => lq(
            grad.levels.values().map(|g| {
                let all: Vec<PointId> = (0..n).collect();
                lp_norm(space, g, &all, p)
            }),
            q,
        ),
        _ => {
            let pointwise: Vec<f64> = (0..n).map(|x| lq(grad.levels.values().map(|g| g[x]), q)).collect();
            let all: Vec<PointId> = (0..n).collect();
            lp_norm(space, &pointwise, &all, p)
        }
    }
}

/// Norm of a gradient as prescribed by `spec`.
pub fn gradient_norm(space: &QuasiMetricSpace, grad: &Gradient, spec: &SeminormSpec) -> Result<f64> {
    if !grad.matches(spec.kind) {
        return Err(Error::GradientShape);
    }
    Ok(match grad {
        Gradient::Single(s) => {
            let all: Vec<PointId> = (0..space.len()).collect();
            lp_norm(space, &s.g, &all, spec.p)
        }
        Gradient::Fractional(f) => mixed_norm(space, f, spec.p, spec.q, spec.kind),
    })
}

/// `max_{x != y} |u(x) - u(y)| / d(x,y)^alpha` for any distance.
pub fn holder_seminorm<D: Distance + ?Sized>(d: &D, u: &[f64], alpha: f64) -> f64 {
    let n = d.len();
    let mut best: f64 = 0.0;
    for x in 0..n {
        for y in 0..n {
            if x != y && u[x] != u[y] {
                best = best.max((u[x] - u[y]).abs() / d.dist(x, y).powf(alpha));
            }
        }
    }
    best
}

/// Sobolev conjugate exponent `Qp / (Q - sp)`.
pub fn p_star(q_exp: f64, p: f64, s: f64) -> Result<f64> {
    if s * p >= q_exp {
        return Err(Error::CriticalOrSupercritical { sp: s * p, q_exp });
    }
    Ok(q_exp * p / (q_exp - s * p))
}

/// Minimal seminorm value, the gradient attaining it, and the function it
/// belongs to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimalSeminorm {
    pub value: f64,
    pub witness: Gradient,
    pub u: Vec<f64>,
}

fn check_convex(spec: &SeminormSpec) -> Result<()> {
    let q_ok = spec.kind == Kind::Sobolev || spec.q >= 1.0;
    if !(spec.p >= 1.0 && q_ok) {
        return Err(Error::NonconvexRegime { p: spec.p, q: spec.q });
    }
    if !(spec.s > 0.0 && spec.s.is_finite() && spec.p.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "need finite s > 0 and p, got s={}, p={}",
            spec.s, spec.p
        )));
    }
    Ok(())
}

/// Infimum of the mixed norm over all gradients of `u`.
///
/// Solved as a convex program by a log-barrier method; the returned witness is
/// pulled toward the canonical gradient just far enough to satisfy every
/// inequality exactly, and the canonical gradient is returned instead when it
/// is at least as good.
pub fn minimal_seminorm(space: &QuasiMetricSpace, u: &[f64], spec: &SeminormSpec) -> Result<MinimalSeminorm> {
    check_len(u, space.len())?;
    check_convex(spec)?;
    let values: Vec<Option<f64>> = u.iter().map(|&v| Some(v)).collect();
    solve(space, &values, spec)
}

/// Minimal seminorm over all functions taking the prescribed values at the
/// given points (the remaining values are optimized as well).
pub fn minimal_transition_seminorm(space: &QuasiMetricSpace, fixed: &[(PointId, f64)], spec: &SeminormSpec) -> Result<MinimalSeminorm> {
    check_convex(spec)?;
    let mut values = vec![None; space.len()];
    for &(x, v) in fixed {
        if x >= space.len() {
            return Err(Error::InvalidArgument(format!("point {x} out of range")));
        }
        values[x] = Some(v);
    }
    solve(space, &values, spec)
}

/// One inequality `|u(x) - u(y)| <= w (g(x) + g(y))` with `w = rho^s`, after
/// merging directed duplicates.
#[derive(Debug, Clone, Copy)]
struct PairConstraint {
    x: PointId,
    y: PointId,
    level: i32,
    w: f64,
}

fn pair_constraints(space: &QuasiMetricSpace, spec: &SeminormSpec, levels: &LevelDecomposition) -> Vec<PairConstraint> {
    let n = space.len();
    let mut merged: BTreeMap<(i32, PointId, PointId), f64> = BTreeMap::new();
    for x in 0..n {
        for y in 0..n {
            if x == y {
                continue;
            }
            let level = if spec.is_fractional() { levels.level(x, y) } else { 0 };
            let w = space.dist(x, y).powf(spec.s);
            let key = (level, x.min(y), x.max(y));
            let e = merged.entry(key).or_insert(w);
            *e = e.min(w);
        }
    }
    merged
        .into_iter()
        .map(|((level, x, y), w)| PairConstraint { x, y, level, w })
        .collect()
}

fn solve(space: &QuasiMetricSpace, values: &[Option<f64>], spec: &SeminormSpec) -> Result<MinimalSeminorm> {
    let n = space.len();
    let fixed: Vec<f64> = values.iter().flatten().cloned().collect();
    let (lo, hi) = fixed
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let constant = fixed.is_empty() || lo == hi;
    if constant {
        let c = if fixed.is_empty() { 0.0 } else { lo };
        return Ok(MinimalSeminorm {
            value: 0.0,
            witness: zero_gradient(n, spec),
            u: vec![c; n],
        });
    }
    let levels = LevelDecomposition::new(space);
    let pairs = pair_constraints(space, spec, &levels);
    let start_u: Vec<f64> = values.iter().map(|v| v.unwrap_or(0.5 * (lo + hi))).collect();

    // Variable layout: free function values, then gradient entries, then
    // epigraph variables.
    let mut var_u: Vec<Option<usize>> = vec![None; n];
    let mut nv = 0;
    for x in 0..n {
        if values[x].is_none() {
            var_u[x] = Some(nv);
            nv += 1;
        }
    }
    let free = nv > 0;
    let mut var_g: HashMap<(i32, PointId), usize> = HashMap::new();
    let mut order: Vec<(i32, PointId)> = Vec::new();
    for c in &pairs {
        let relevant = free && (values[c.x].is_none() || values[c.y].is_none()) || start_u[c.x] != start_u[c.y];
        if !relevant {
            continue;
        }
        for v in [c.x, c.y] {
            var_g.entry((c.level, v)).or_insert_with(|| {
                order.push((c.level, v));
                nv += 1;
                nv - 1
            });
        }
    }
    let g_count = order.len();
    let g_offset = nv - g_count;

    let mut prog = ConvexProgram::default();
    let mut start = vec![0.0; nv];
    for x in 0..n {
        if let Some(i) = var_u[x] {
            start[i] = start_u[x];
            prog.linear.push(Linear {
                terms: vec![(i, 1.0)],
                rhs: hi,
            });
            prog.linear.push(Linear {
                terms: vec![(i, -1.0)],
                rhs: -lo,
            });
        }
    }
    let mut need = vec![0.0f64; g_count];
    for c in &pairs {
        let (Some(&gx), Some(&gy)) = (var_g.get(&(c.level, c.x)), var_g.get(&(c.level, c.y))) else {
            continue;
        };
        let inv = 1.0 / c.w;
        match (var_u[c.x], var_u[c.y]) {
            (None, None) => {
                let rhs = (start_u[c.x] - start_u[c.y]).abs() * inv;
                if rhs == 0.0 {
                    continue;
                }
                prog.linear.push(Linear {
                    terms: vec![(gx, -1.0), (gy, -1.0)],
                    rhs: -rhs,
                });
                need[gx - g_offset] = need[gx - g_offset].max(rhs);
                need[gy - g_offset] = need[gy - g_offset].max(rhs);
            }
            (ux, uy) => {
                // +-(u(x) - u(y)) / w - g(x) - g(y) <= 0 with fixed parts moved right.
                for sign in [1.0, -1.0] {
                    let mut terms = vec![(gx, -1.0), (gy, -1.0)];
                    let mut rhs = 0.0;
                    match ux {
                        Some(i) => terms.push((i, sign * inv)),
                        None => rhs -= sign * start_u[c.x] * inv,
                    }
                    match uy {
                        Some(i) => terms.push((i, -sign * inv)),
                        None => rhs += sign * start_u[c.y] * inv,
                    }
                    prog.linear.push(Linear { terms, rhs });
                }
                let r = (start_u[c.x] - start_u[c.y]).abs() * inv + (hi - lo) * inv;
                need[gx - g_offset] = need[gx - g_offset].max(r);
                need[gy - g_offset] = need[gy - g_offset].max(r);
            }
        }
    }
    let top = need.iter().cloned().fold(0.0, f64::max);
    for i in 0..g_count {
        let v = g_offset + i;
        prog.linear.push(Linear {
            terms: vec![(v, -1.0)],
            rhs: 0.0,
        });
        start[v] = need[i] + 1e-2 * top + f64::MIN_POSITIVE.sqrt();
    }

    let mu = space.mu();
    let (p, q) = (spec.p, spec.q);
    match spec.kind {
        Kind::Sobolev => {
            for (i, &(_, x)) in order.iter().enumerate() {
                prog.objective.push(Group {
                    scale: mu[x],
                    members: vec![(g_offset + i, 1.0)],
                    a: p,
                    b: p,
                });
            }
        }
        Kind::TriebelLizorkin => {
            let mut by_point: BTreeMap<PointId, Vec<usize>> = BTreeMap::new();
            for (i, &(_, x)) in order.iter().enumerate() {
                by_point.entry(x).or_default().push(g_offset + i);
            }
            for (x, vars) in by_point {
                if q.is_infinite() {
                    let epi = nv;
                    nv += 1;
                    let top_x = vars.iter().map(|&v| start[v]).fold(0.0, f64::max);
                    start.push(top_x * 1.01 + f64::MIN_POSITIVE.sqrt());
                    for v in vars {
                        prog.linear.push(Linear {
                            terms: vec![(v, 1.0), (epi, -1.0)],
                            rhs: 0.0,
                        });
                    }
                    prog.objective.push(Group {
                        scale: mu[x],
                        members: vec![(epi, 1.0)],
                        a: p,
                        b: p,
                    });
                } else {
                    let members = vars.into_iter().map(|v| (v, 1.0)).collect();
                    prog.objective.push(Group {
                        scale: mu[x],
                        members,
                        a: q,
                        b: p,
                    });
                }
            }
        }
        Kind::Besov => {
            let mut by_level: BTreeMap<i32, Vec<(usize, f64)>> = BTreeMap::new();
            for (i, &(k, x)) in order.iter().enumerate() {
                by_level.entry(k).or_default().push((g_offset + i, mu[x]));
            }
            if q.is_infinite() {
                let epi = nv;
                nv += 1;
                let mut top_t: f64 = 0.0;
                for terms in by_level.values() {
                    top_t = top_t.max(terms.iter().map(|&(v, w)| w * start[v].powf(p)).sum());
                }
                start.push(top_t * 1.01 + f64::MIN_POSITIVE.sqrt());
                for terms in by_level.into_values() {
                    prog.power.push(PowerSum { terms, p, epi });
                }
                prog.objective.push(Group {
                    scale: 1.0,
                    members: vec![(epi, 1.0)],
                    a: 1.0,
                    b: 1.0,
                });
            } else {
                for terms in by_level.into_values() {
                    prog.objective.push(Group {
                        scale: 1.0,
                        members: terms,
                        a: p,
                        b: q,
                    });
                }
            }
        }
    }
    prog.n = nv;

    let z = prog
        .minimize(&start, &BarrierOptions::default())
        .map_err(|e| Error::PreconditionFailed(format!("seminorm program: {e:?}")))?;

    let u: Vec<f64> = (0..n).map(|x| var_u[x].map_or(start_u[x], |i| z[i].clamp(lo, hi))).collect();
    let mut witness = if spec.is_fractional() {
        let mut f = FractionalGradient::default();
        for (i, &(k, x)) in order.iter().enumerate() {
            f.levels.entry(k).or_insert_with(|| vec![0.0; n])[x] = z[g_offset + i].max(0.0);
        }
        Gradient::Fractional(f)
    } else {
        let mut g = vec![0.0; n];
        for (i, &(_, x)) in order.iter().enumerate() {
            g[x] = z[g_offset + i].max(0.0);
        }
        Gradient::Single(SingleGradient { g })
    };
    let canonical = canonical_gradient(space, &u, spec)?;
    restore_feasibility(space, &u, spec, &mut witness, &canonical)?;
    let value = gradient_norm(space, &witness, spec)?;
    let canonical_value = gradient_norm(space, &canonical, spec)?;
    if canonical_value <= value {
        return Ok(MinimalSeminorm {
            value: canonical_value,
            witness: canonical,
            u,
        });
    }
    Ok(MinimalSeminorm { value, witness, u })
}

fn zero_gradient(n: usize, spec: &SeminormSpec) -> Gradient {
    if spec.is_fractional() {
        Gradient::Fractional(FractionalGradient::default())
    } else {
        Gradient::Single(SingleGradient { g: vec![0.0; n] })
    }
}

/// Move `g` along the segment toward the canonical gradient until every
/// inequality holds with no violation at all.
fn restore_feasibility(space: &QuasiMetricSpace, u: &[f64], spec: &SeminormSpec, g: &mut Gradient, canonical: &Gradient) -> Result<()> {
    let n = space.len();
    let levels = LevelDecomposition::new(space);
    let sums = |grad: &Gradient, x: PointId, y: PointId| match grad {
        Gradient::Single(s) => s.g[x] + s.g[y],
        Gradient::Fractional(f) => {
            let k = levels.level(x, y);
            f.at(k, x) + f.at(k, y)
        }
    };
    let mut tau: f64 = 0.0;
    for x in 0..n {
        for y in 0..n {
            if x == y {
                continue;
            }
            let w = space.dist(x, y).powf(spec.s);
            let need = (u[x] - u[y]).abs();
            let (a, b) = (w * sums(g, x, y), w * sums(canonical, x, y));
            if need > a && b > a {
                tau = tau.max((need - a) / (b - a));
            }
        }
    }
    if tau == 0.0 {
        return Ok(());
    }
    let tau = (tau * (1.0 + 1e-9)).min(1.0);
    let blend = |a: f64, b: f64| (1.0 - tau) * a + tau * b;
    match (g, canonical) {
        (Gradient::Single(s), Gradient::Single(c)) => {
            for (a, b) in s.g.iter_mut().zip(&c.g) {
                *a = blend(*a, *b);
            }
        }
        (Gradient::Fractional(f), Gradient::Fractional(c)) => {
            let keys: BTreeSet<i32> = f.levels.keys().chain(c.levels.keys()).cloned().collect();
            for k in keys {
                let row: Vec<f64> = (0..n).map(|x| blend(f.at(k, x), c.at(k, x))).collect();
                f.levels.insert(k, row);
            }
        }
        _ => return Err(Error::GradientShape),
    }
    Ok(())
}
