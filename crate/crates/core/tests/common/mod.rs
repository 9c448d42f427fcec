//! Shared helpers for the integration tests: a CLI runner, JSON accessors,
//! an active-set enumeration oracle for minimal seminorms and brute-force
//! geometry scans.
#![allow(dead_code)]

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use nalgebra::{DMatrix, DVector};
use serde_json::Value;

/// Captured result of one CLI invocation.
pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("bad JSON ({e}): {}\n{}", self.stdout, self.stderr))
    }
}

pub fn qms(args: &[&str]) -> Run {
    qms_stdin(args, None)
}

pub fn qms_stdin(args: &[&str], stdin: Option<&str>) -> Run {
    let mut child = Command::new(env!("CARGO_BIN_EXE_qms"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn qms");
    {
        let mut handle = child.stdin.take().expect("stdin");
        if let Some(body) = stdin {
            handle.write_all(body.as_bytes()).expect("write stdin");
        }
    }
    let out = child.wait_with_output().expect("wait qms");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).expect("utf8"),
        stderr: String::from_utf8(out.stderr).expect("utf8"),
    }
}

/// Run the CLI and require exit code 0.
pub fn qms_ok(args: &[&str]) -> Run {
    let run = qms(args);
    assert_eq!(run.code, 0, "qms {args:?} failed: {}", run.stderr);
    run
}

/// Generate a space file with `qms gen` into `dir`.
pub fn gen_file(dir: &Path, name: &str, args: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let mut full = vec!["gen"];
    full.extend_from_slice(args);
    let p = path.to_str().expect("utf8 path").to_string();
    full.extend_from_slice(&["--out", &p]);
    qms_ok(&full);
    path
}

/// Real number from a report field, with `"inf"`, `"-inf"` and `"nan"`.
pub fn real(v: &Value) -> f64 {
    match v {
        Value::Number(n) => n.as_f64().expect("f64"),
        Value::String(s) if s == "inf" => f64::INFINITY,
        Value::String(s) if s == "-inf" => f64::NEG_INFINITY,
        Value::String(s) if s == "nan" => f64::NAN,
        other => panic!("not a real: {other}"),
    }
}

pub fn reals(v: &Value) -> Vec<f64> {
    v.as_array().expect("array").iter().map(real).collect()
}

/// Distance matrix and masses of a space file.
pub struct RawSpace {
    pub rho: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
}

impl RawSpace {
    pub fn read(path: &Path) -> Self {
        let v: Value = serde_json::from_str(&std::fs::read_to_string(path).expect("read")).expect("json");
        RawSpace {
            rho: v["rho"].as_array().unwrap().iter().map(reals).collect(),
            mu: reals(&v["mu"]),
        }
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    /// Mass of the open ball.
    pub fn ball_mass(&self, x: usize, r: f64) -> f64 {
        (0..self.n()).filter(|&y| self.rho[x][y] < r).map(|y| self.mu[y]).sum()
    }

    pub fn diameter(&self) -> f64 {
        self.rho.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Every distance value, sorted and deduplicated, with 0 excluded.
    pub fn distances(&self) -> Vec<f64> {
        let mut d: Vec<f64> = self.rho.iter().flatten().copied().filter(|&v| v > 0.0).collect();
        d.sort_by(f64::total_cmp);
        d.dedup();
        d
    }

    /// Least `C` with `rho(x,y) <= C max(rho(x,z), rho(z,y))`.
    pub fn quasi_constant(&self) -> f64 {
        let n = self.n();
        let mut c: f64 = 1.0;
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    let m = self.rho[x][z].max(self.rho[z][y]);
                    if m > 0.0 {
                        c = c.max(self.rho[x][y] / m);
                    }
                }
            }
        }
        c
    }

    /// Largest `rho(y,x) / rho(x,y)`.
    pub fn symmetry_constant(&self) -> f64 {
        let n = self.n();
        let mut c: f64 = 1.0;
        for x in 0..n {
            for y in 0..n {
                if x != y {
                    c = c.max(self.rho[y][x] / self.rho[x][y]);
                }
            }
        }
        c
    }
}

/// Radii sampling every constancy interval: the distances, their next
/// representable values above, their halves, and a uniform grid up to twice
/// the diameter.
pub fn probe_radii(space: &RawSpace, grid: usize) -> Vec<f64> {
    let d = space.distances();
    let diam = space.diameter();
    let mut r: Vec<f64> = Vec::new();
    for &v in &d {
        r.push(v);
        r.push(v.next_up());
        r.push(v / 2.0);
    }
    for i in 1..=grid {
        r.push(2.0 * diam * i as f64 / grid as f64);
    }
    r.sort_by(f64::total_cmp);
    r.dedup();
    r
}

/// `sup { t in [0, r] : mu(B(x,t)) <= mu(B(x,r)) / 2 }` over sampled `t`.
pub fn brute_half_mass(space: &RawSpace, x: usize, r: f64) -> f64 {
    let half = space.ball_mass(x, r) / 2.0;
    let mut cands = probe_radii(space, 400);
    cands.push(r);
    cands
        .into_iter()
        .filter(|&t| t <= r && space.ball_mass(x, t) <= half)
        .fold(0.0, f64::max)
}

/// `inf mu(B(x,r)) / r^Q` over centers and sampled `r in (0, diam]`.
pub fn brute_regularity(space: &RawSpace, q: f64) -> f64 {
    let diam = space.diameter();
    let radii = probe_radii(space, 400);
    let mut best = f64::INFINITY;
    for x in 0..space.n() {
        for &r in radii.iter().filter(|&&r| r > 0.0 && r <= diam) {
            best = best.min(space.ball_mass(x, r) / r.powf(q));
        }
    }
    best
}

/// `sup mu(B(x,2r)) / mu(B(x,r))` over sampled radii.
pub fn brute_doubling_constant(space: &RawSpace) -> f64 {
    let radii = probe_radii(space, 400);
    let mut best: f64 = 1.0;
    for x in 0..space.n() {
        for &r in &radii {
            best = best.max(space.ball_mass(x, 2.0 * r) / space.ball_mass(x, r));
        }
    }
    best
}

/// `inf (mu(B(x,r)) / mu(B(y,R))) (R/r)^Q` over sampled containments
/// `B(x,r) ⊆ B(y,R)` with `r <= R`.
pub fn brute_doubling_kappa(space: &RawSpace, q: f64) -> f64 {
    let n = space.n();
    let radii = probe_radii(space, 64);
    let m = radii.len();
    // far[x][i][y]: largest distance from y to a member of B(x, radii[i]).
    let mut far = vec![0.0; n * m * n];
    let mut mass = vec![0.0; n * m];
    for x in 0..n {
        for (i, &r) in radii.iter().enumerate() {
            mass[x * m + i] = space.ball_mass(x, r);
            for y in 0..n {
                far[(x * m + i) * n + y] = (0..n).filter(|&z| space.rho[x][z] < r).map(|z| space.rho[y][z]).fold(0.0, f64::max);
            }
        }
    }
    let mut best = f64::INFINITY;
    for x in 0..n {
        for (i, &r) in radii.iter().enumerate() {
            for y in 0..n {
                let reach = far[(x * m + i) * n + y];
                for (j, &big_r) in radii.iter().enumerate().skip(i) {
                    if reach < big_r {
                        let v = mass[x * m + i] / mass[y * m + j] * (big_r / r).powf(q);
                        best = best.min(v);
                    }
                }
            }
        }
    }
    best
}

/// `inf` over centers and sampled `r in (d_1(x), d_max(x)]` of the largest
/// `lambda` for which `B(x,r) \ B(x,lambda r)` is nonempty.
pub fn brute_perfectness(space: &RawSpace) -> f64 {
    let radii = probe_radii(space, 400);
    let mut best: f64 = 1.0;
    for x in 0..space.n() {
        let from: Vec<f64> = (0..space.n()).map(|y| space.rho[x][y]).filter(|&d| d > 0.0).collect();
        let d1 = from.iter().copied().fold(f64::INFINITY, f64::min);
        let dmax = from.iter().copied().fold(0.0, f64::max);
        for &r in radii.iter().filter(|&&r| r > d1 && r <= dmax) {
            let inner = from.iter().copied().filter(|&d| d < r).fold(0.0, f64::max);
            best = best.min(inner / r);
        }
    }
    best
}

/// Seminorm families covered by the oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleKind {
    Sobolev,
    Tl,
    Besov,
}

/// Dyadic level `k` with `2^{-k-1} <= d < 2^{-k}`.
pub fn dyadic_level(d: f64) -> i32 {
    let mut k = (-d.log2()).ceil() as i32 - 1;
    while d < 2f64.powi(-k - 1) {
        k += 1;
    }
    while d >= 2f64.powi(-k) {
        k -= 1;
    }
    k
}

/// `min sum_x mu(x) g(x)^p` over `g >= 0` with `g(x) + g(y) >= c` for every
/// listed pair, by enumerating active sets. `p` is 1 or 2.
pub fn weighted_pair_problem(mu: &[f64], pairs: &[(usize, usize, f64)], p: f64) -> f64 {
    let mut vars: Vec<usize> = pairs.iter().flat_map(|&(x, y, _)| [x, y]).collect();
    vars.sort_unstable();
    vars.dedup();
    let n = vars.len();
    if n == 0 || pairs.iter().all(|&(_, _, c)| c <= 0.0) {
        return 0.0;
    }
    let idx = |x: usize| vars.iter().position(|&v| v == x).expect("var");
    // Rows a.g >= b: pair rows, then nonnegativity.
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for &(x, y, c) in pairs {
        let mut a = vec![0.0; n];
        a[idx(x)] += 1.0;
        a[idx(y)] += 1.0;
        rows.push((a, c));
    }
    for i in 0..n {
        let mut a = vec![0.0; n];
        a[i] = 1.0;
        rows.push((a, 0.0));
    }
    let w: Vec<f64> = vars.iter().map(|&v| mu[v]).collect();
    let feasible = |g: &[f64]| {
        rows.iter()
            .all(|(a, b)| a.iter().zip(g).map(|(ai, gi)| ai * gi).sum::<f64>() >= b - 1e-11 * (1.0 + b.abs()))
    };
    let objective = |g: &[f64]| w.iter().zip(g).map(|(wi, gi)| wi * gi.abs().powf(p)).sum::<f64>();
    let m = rows.len();
    let mut best = f64::INFINITY;
    let max_size = if p == 1.0 { n } else { n.min(m) };
    let min_size = if p == 1.0 { n } else { 1 };
    for size in min_size..=max_size {
        for subset in combinations(m, size) {
            let a = DMatrix::from_fn(size, n, |i, j| rows[subset[i]].0[j]);
            let b = DVector::from_iterator(size, subset.iter().map(|&i| rows[i].1));
            let g: Option<DVector<f64>> = if p == 1.0 {
                a.clone().lu().solve(&b)
            } else {
                // min sum w g^2 subject to A g = b: g = W^{-1} A^T lambda.
                let winv = DMatrix::from_diagonal(&DVector::from_iterator(n, w.iter().map(|v| 1.0 / v)));
                let gram = &a * &winv * a.transpose();
                gram.lu().solve(&b).map(|lambda| winv * a.transpose() * lambda)
            };
            let Some(g) = g else { continue };
            if (&a * &g - &b).amax() > 1e-9 * (1.0 + b.amax()) {
                continue;
            }
            let g: Vec<f64> = g.iter().copied().collect();
            if feasible(&g) {
                best = best.min(objective(&g));
            }
        }
    }
    best
}

fn combinations(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            if m - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    rec(0, m, k, &mut cur, &mut out);
    out
}

/// Merge ordered-pair requirements into unordered ones by the maximum.
fn merge(reqs: Vec<(usize, usize, f64)>) -> Vec<(usize, usize, f64)> {
    let mut out: Vec<(usize, usize, f64)> = Vec::new();
    for (x, y, c) in reqs {
        let (a, b) = if x < y { (x, y) } else { (y, x) };
        match out.iter_mut().find(|(p, q, _)| *p == a && *q == b) {
            Some(e) => e.2 = e.2.max(c),
            None => out.push((a, b, c)),
        }
    }
    out
}

/// Minimal seminorm by exact enumeration, for `p in {1, 2}` and
/// `q in {p, inf}`.
///
/// The Triebel-Lizorkin norm with `q = inf` equals the Sobolev problem with
/// `h = sup_k g_k`; with `q = p` both scales split into independent
/// per-level problems.
pub fn oracle_seminorm(space: &RawSpace, u: &[f64], kind: OracleKind, s: f64, p: f64, q: f64) -> f64 {
    let n = space.n();
    let mut all = Vec::new();
    let mut by_level: std::collections::BTreeMap<i32, Vec<(usize, usize, f64)>> = Default::default();
    for x in 0..n {
        for y in 0..n {
            if x != y {
                let c = (u[x] - u[y]).abs() / space.rho[x][y].powf(s);
                all.push((x, y, c));
                by_level.entry(dyadic_level(space.rho[x][y])).or_default().push((x, y, c));
            }
        }
    }
    let whole = || weighted_pair_problem(&space.mu, &merge(all.clone()), p).powf(1.0 / p);
    let levels: Vec<f64> = by_level
        .into_values()
        .map(|r| weighted_pair_problem(&space.mu, &merge(r), p))
        .collect();
    match (kind, q.is_infinite()) {
        (OracleKind::Sobolev, _) | (OracleKind::Tl, true) => whole(),
        (OracleKind::Besov, true) => levels.iter().map(|v| v.powf(1.0 / p)).fold(0.0, f64::max),
        (_, false) => {
            assert_eq!(q, p, "oracle covers q = p only");
            levels.iter().sum::<f64>().powf(1.0 / p)
        }
    }
}

/// Worst violation of `|u(x)-u(y)| <= rho^s (g(x)+g(y))` for a witness in
/// report form (`{"Single":{"g":..}}` or `{"Fractional":{"levels":{..}}}`).
pub fn witness_violation(space: &RawSpace, u: &[f64], s: f64, witness: &Value) -> f64 {
    let n = space.n();
    let mut worst = f64::NEG_INFINITY;
    for x in 0..n {
        for y in 0..n {
            if x == y {
                continue;
            }
            let (gx, gy) = if let Some(single) = witness.get("Single") {
                let g = reals(&single["g"]);
                (g[x], g[y])
            } else {
                let k = dyadic_level(space.rho[x][y]).to_string();
                match witness["Fractional"]["levels"].get(&k) {
                    Some(row) => {
                        let g = reals(row);
                        (g[x], g[y])
                    }
                    None => (0.0, 0.0),
                }
            };
            worst = worst.max((u[x] - u[y]).abs() - space.rho[x][y].powf(s) * (gx + gy));
        }
    }
    worst
}

/// Comma-separated list of reals with 17 significant digits.
pub fn csv_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",")
}

/// `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
