//! Dense log-barrier interior-point method for small smooth convex programs
//!
//! ```text
//! minimize    sum_g scale_g * (sum_i w_gi z_i^a_g)^(b_g / a_g)
//! subject to  sum_i c_ji z_i <= rhs_j                  (linear)
//!             sum_i w_ki z_i^p_k - z_epi(k) <= 0       (power sums)
//! ```
//!
//! with `1 <= a <= b` and every variable inside a power strictly positive on
//! the interior. All iterates stay strictly feasible.

use nalgebra::{DMatrix, DVector};

/// `scale * (sum w_i z_i^a)^(b/a)`.
#[derive(Debug, Clone)]
pub struct Group {
    pub scale: f64,
    pub members: Vec<(usize, f64)>,
    pub a: f64,
    pub b: f64,
}

/// `sum coef_i z_i <= rhs`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// `sum w_i z_i^p - z_epi <= 0`.
#[derive(Debug, Clone)]
pub struct PowerSum {
    pub terms: Vec<(usize, f64)>,
    pub p: f64,
    pub epi: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ConvexProgram {
    pub n: usize,
    pub objective: Vec<Group>,
    pub linear: Vec<Linear>,
    pub power: Vec<PowerSum>,
}

/// Stopping parameters.
#[derive(Debug, Clone, Copy)]
pub struct BarrierOptions {
    /// Stop when the duality-gap bound `m / t` falls below `rel_gap * F`.
    pub rel_gap: f64,
    /// Factor by which the barrier weight grows between centerings.
    pub growth: f64,
    pub max_outer: usize,
    pub max_newton: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions {
            rel_gap: 1e-11,
            growth: 12.0,
            max_outer: 80,
            max_newton: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolverError {
    InfeasibleStart,
}

impl Group {
    fn sum(&self, z: &[f64]) -> f64 {
        self.members.iter().map(|&(i, w)| w * pow(z[i], self.a)).sum()
    }

    fn value(&self, z: &[f64]) -> f64 {
        self.scale * pow(self.sum(z), self.b / self.a)
    }

    fn add_derivatives(&self, z: &[f64], weight: f64, grad: &mut [f64], hess: &mut DMatrix<f64>) {
        let (a, b) = (self.a, self.b);
        let s = self.sum(z);
        if s <= 0.0 {
            return;
        }
        let c = weight * self.scale;
        let d1 = b * pow(s, b / a - 1.0);
        let cross = if b != a { b * (b - a) * pow(s, b / a - 2.0) } else { 0.0 };
        let diag = if a != 1.0 { b * (a - 1.0) * pow(s, b / a - 1.0) } else { 0.0 };
        let first: Vec<f64> = self.members.iter().map(|&(i, w)| w * pow(z[i], a - 1.0)).collect();
        for (k, &(i, w)) in self.members.iter().enumerate() {
            grad[i] += c * d1 * first[k];
            if diag != 0.0 {
                hess[(i, i)] += c * diag * w * pow(z[i], a - 2.0);
            }
            if cross != 0.0 {
                for (l, &(j, _)) in self.members.iter().enumerate() {
                    hess[(i, j)] += c * cross * first[k] * first[l];
                }
            }
        }
    }
}

#[inline]
fn pow(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else if e == 0.0 {
        1.0
    } else if e == 2.0 {
        x * x
    } else {
        x.powf(e)
    }
}

impl ConvexProgram {
    pub fn objective_value(&self, z: &[f64]) -> f64 {
        self.objective.iter().map(|g| g.value(z)).sum()
    }

    fn constraint_count(&self) -> usize {
        self.linear.len() + self.power.len()
    }

    /// Slacks of every constraint (positive means strictly feasible).
    fn slacks(&self, z: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for c in &self.linear {
            out.push(c.rhs - c.terms.iter().map(|&(i, v)| v * z[i]).sum::<f64>());
        }
        for c in &self.power {
            out.push(z[c.epi] - c.terms.iter().map(|&(i, w)| w * pow(z[i], c.p)).sum::<f64>());
        }
    }

    fn strictly_feasible(&self, z: &[f64], buf: &mut Vec<f64>) -> bool {
        self.slacks(z, buf);
        buf.iter().all(|&s| s > 0.0) && self.power.iter().all(|c| c.terms.iter().all(|&(i, _)| z[i] > 0.0))
    }

    fn barrier_value(&self, z: &[f64], t: f64, buf: &mut Vec<f64>) -> f64 {
        self.slacks(z, buf);
        t * self.objective_value(z) - buf.iter().map(|s| s.ln()).sum::<f64>()
    }

    /// Minimize from the strictly feasible point `z0`.
    pub fn minimize(&self, z0: &[f64], opts: &BarrierOptions) -> Result<Vec<f64>, SolverError> {
        let n = self.n;
        let m = self.constraint_count() as f64;
        let mut z = z0.to_vec();
        let mut buf = Vec::with_capacity(self.constraint_count());
        if !self.strictly_feasible(&z, &mut buf) {
            return Err(SolverError::InfeasibleStart);
        }
        let f0 = self.objective_value(&z);
        let mut t = if f0 > 0.0 { m / f0 } else { 1.0 };
        let mut grad = vec![0.0; n];
        let mut trial = vec![0.0; n];
        for _ in 0..opts.max_outer {
            for _ in 0..opts.max_newton {
                let mut hess = DMatrix::<f64>::zeros(n, n);
                grad.iter_mut().for_each(|g| *g = 0.0);
                for g in &self.objective {
                    g.add_derivatives(&z, t, &mut grad, &mut hess);
                }
                self.slacks(&z, &mut buf);
                for (c, &s) in self.linear.iter().zip(&buf) {
                    for &(i, vi) in &c.terms {
                        grad[i] += vi / s;
                        for &(j, vj) in &c.terms {
                            hess[(i, j)] += vi * vj / (s * s);
                        }
                    }
                }
                for (c, &s) in self.power.iter().zip(&buf[self.linear.len()..]) {
                    // d(-log s) with s = z_epi - sum w z^p.
                    let mut dc: Vec<(usize, f64)> = c.terms.iter().map(|&(i, w)| (i, w * c.p * pow(z[i], c.p - 1.0))).collect();
                    dc.push((c.epi, -1.0));
                    for &(i, vi) in &dc {
                        grad[i] += vi / s;
                        for &(j, vj) in &dc {
                            hess[(i, j)] += vi * vj / (s * s);
                        }
                    }
                    if c.p != 1.0 {
                        for &(i, w) in &c.terms {
                            hess[(i, i)] += w * c.p * (c.p - 1.0) * pow(z[i], c.p - 2.0) / s;
                        }
                    }
                }
                let step = match newton_step(hess, &grad) {
                    Some(d) => d,
                    None => break,
                };
                let decrement: f64 = -grad.iter().zip(step.iter()).map(|(g, d)| g * d).sum::<f64>();
                if !(decrement > 1e-10) {
                    break;
                }
                let phi0 = self.barrier_value(&z, t, &mut buf);
                let mut alpha = 1.0;
                let mut accepted = false;
                for _ in 0..80 {
                    for i in 0..n {
                        trial[i] = z[i] + alpha * step[i];
                    }
                    if self.strictly_feasible(&trial, &mut buf)
                        && self.barrier_value(&trial, t, &mut buf) <= phi0 - 0.01 * alpha * decrement
                    {
                        accepted = true;
                        break;
                    }
                    alpha *= 0.5;
                }
                if !accepted {
                    break;
                }
                z.copy_from_slice(&trial);
                if decrement < 1e-9 {
                    break;
                }
            }
            let f = self.objective_value(&z);
            if m / t <= opts.rel_gap * f.abs().max(f64::MIN_POSITIVE) {
                break;
            }
            t *= opts.growth;
        }
        Ok(z)
    }
}

fn newton_step(mut hess: DMatrix<f64>, grad: &[f64]) -> Option<DVector<f64>> {
    let n = grad.len();
    let rhs = DVector::from_iterator(n, grad.iter().map(|g| -g));
    let scale = (0..n).map(|i| hess[(i, i)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut ridge = 0.0;
    for _ in 0..6 {
        let mut h = hess.clone();
        for i in 0..n {
            h[(i, i)] += ridge;
        }
        if let Some(ch) = h.cholesky() {
            let d = ch.solve(&rhs);
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        ridge = if ridge == 0.0 { scale * 1e-14 } else { ridge * 100.0 };
    }
    hess.fill(0.0);
    None
}
