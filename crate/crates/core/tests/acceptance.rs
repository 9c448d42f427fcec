//! Acceptance suite: every fixture goes through the `qms` binary, and each
//! criterion prints one PASS or FAIL line. The process fails when any
//! criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod common;

use std::path::Path;
use std::time::Instant;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_space(dir: &Path, name: &str, seed: u64, n: usize, asymmetric: bool) -> std::path::PathBuf {
    let (seed_s, n_s) = (seed.to_string(), n.to_string());
    if asymmetric {
        let skew = format!("{}", 1.5 + 0.5 * (seed % 3) as f64);
        gen_file(dir, name, &["asymmetric", "--seed", &seed_s, "--n", &n_s, "--skew", &skew])
    } else {
        gen_file(dir, name, &["random", "--seed", &seed_s, "--n", &n_s])
    }
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf8 path")
}

/// Regularization on 100 seeded spaces: symmetry, power triangle inequality
/// and two-sided comparison with the original distance.
fn metrization(dir: &Path) -> Verdict {
    let mut worst_sym: f64 = 0.0;
    let mut worst_tri: f64 = 0.0;
    let mut worst_cmp: f64 = 0.0;
    let mut failures = 0;
    for seed in 0..100u64 {
        let n = 4 + (seed as usize % 29);
        let file = random_space(dir, "metrization.json", seed, n, seed % 2 == 1);
        let raw = RawSpace::read(&file);
        let report = qms_ok(&["regularize", path_str(&file)]).json();
        let sharp: Vec<Vec<f64>> = report["rho_sharp"].as_array().unwrap().iter().map(reals).collect();
        let c_rho = raw.quasi_constant();
        let c_tilde = raw.symmetry_constant();
        let alpha0 = real(&report["alpha0"]);
        let expected_alpha = if c_rho == 1.0 { f64::INFINITY } else { 1.0 / c_rho.log2() };
        let mut ok = rel_diff(alpha0, expected_alpha) <= 1e-12 || alpha0 == expected_alpha;
        let d = |x: usize, y: usize| {
            if alpha0.is_finite() {
                sharp[x][y].powf(alpha0)
            } else {
                sharp[x][y]
            }
        };
        for x in 0..n {
            for y in 0..n {
                let sym = (sharp[x][y] - sharp[y][x]).abs();
                worst_sym = worst_sym.max(sym);
                ok &= sym <= 1e-12;
                for z in 0..n {
                    let v = if alpha0.is_finite() {
                        d(x, y) - d(x, z) - d(z, y)
                    } else {
                        d(x, y) - d(x, z).max(d(z, y))
                    };
                    worst_tri = worst_tri.max(v);
                    ok &= v <= 1e-12;
                }
                if x != y {
                    let lo = raw.rho[x][y] / (c_rho * c_rho);
                    let hi = c_tilde * raw.rho[x][y];
                    let shortfall = ((lo - sharp[x][y]) / lo).max((sharp[x][y] - hi) / hi);
                    worst_cmp = worst_cmp.max(shortfall);
                    ok &= shortfall <= 1e-12;
                }
            }
        }
        if !ok {
            failures += 1;
        }
    }
    check(
        failures == 0,
        format!("100 spaces, {failures} failures; symmetry {worst_sym:.1e}, triangle {worst_tri:.1e}, comparison {worst_cmp:.1e}"),
    )
}

struct OracleStats {
    instances: usize,
    worst_oracle: f64,
    worst_violation: f64,
    worst_tl_vs_sobolev: f64,
}

/// Solver against the active-set enumeration oracle on 50 small instances.
fn oracle_suite(dir: &Path) -> OracleStats {
    let mut stats = OracleStats {
        instances: 0,
        worst_oracle: 0.0,
        worst_violation: f64::NEG_INFINITY,
        worst_tl_vs_sobolev: 0.0,
    };
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = 2 + (seed as usize % 4);
        let file = random_space(dir, "oracle.json", seed, n, seed % 2 == 1);
        let raw = RawSpace::read(&file);
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let s: f64 = rng.random_range(0.2..1.0);
        let (u_arg, s_arg) = (format!("--u={}", csv_list(&u)), format!("{s:.16e}"));
        for p in [1.0f64, 2.0] {
            let p_arg = format!("{p}");
            let mut sobolev = f64::NAN;
            for (kind, kind_arg, q) in [
                (OracleKind::Sobolev, "sobolev", f64::INFINITY),
                (OracleKind::Tl, "tl", f64::INFINITY),
                (OracleKind::Tl, "tl", p),
                (OracleKind::Besov, "besov", f64::INFINITY),
                (OracleKind::Besov, "besov", p),
            ] {
                let q_arg = if q.is_infinite() { "inf".to_string() } else { format!("{q}") };
                let report = qms_ok(&[
                    "seminorm",
                    path_str(&file),
                    "--s",
                    &s_arg,
                    "--p",
                    &p_arg,
                    "--q",
                    &q_arg,
                    "--kind",
                    kind_arg,
                    &u_arg,
                ])
                .json();
                let value = real(&report["value"]);
                let oracle = oracle_seminorm(&raw, &u, kind, s, p, q);
                stats.worst_oracle = stats.worst_oracle.max(rel_diff(value, oracle));
                let violation = witness_violation(&raw, &u, s, &report["witness"]).max(real(&report["check"]["worst_violation"]));
                stats.worst_violation = stats.worst_violation.max(violation);
                match (kind, q.is_infinite()) {
                    (OracleKind::Sobolev, _) => sobolev = value,
                    (OracleKind::Tl, true) => stats.worst_tl_vs_sobolev = stats.worst_tl_vs_sobolev.max(rel_diff(value, sobolev)),
                    _ => {}
                }
                stats.instances += 1;
            }
        }
    }
    stats
}

/// Bump functions on 100 seeded draws of space, ball and parameters.
fn bump_validity(dir: &Path) -> Verdict {
    let mut worst_violation = f64::NEG_INFINITY;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut degenerate = 0;
    let mut nonconstant = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let n = rng.random_range(3..=12);
        let file = if seed % 5 == 0 {
            gen_file(dir, "bump.json", &["grid", "--n", &n.to_string()])
        } else {
            random_space(dir, "bump.json", seed, n, seed % 2 == 1)
        };
        let raw = RawSpace::read(&file);
        let alpha0 = real(&qms_ok(&["regularize", path_str(&file)]).json()["alpha0"]);
        let alpha = if alpha0.is_finite() {
            alpha0 * rng.random_range(0.3..=1.0)
        } else {
            rng.random_range(0.5..2.0)
        };
        let s = alpha * rng.random_range(0.1..0.95);
        let p = [1.0, 1.5, 2.0, 3.0][rng.random_range(0..4)];
        let q = ["1", "2", "inf"][rng.random_range(0..3)];
        let besov = rng.random_bool(0.5);
        let center = rng.random_range(0..n);
        let big_r = raw.diameter() * rng.random_range(0.05..=1.0);
        let inner = if rng.random_bool(0.5) {
            0.0
        } else {
            big_r * rng.random_range(0.0..0.9)
        };
        let (s_a, p_a, c_a, r_a, i_a, al_a) = (
            format!("{s:.16e}"),
            format!("{p}"),
            center.to_string(),
            format!("{big_r:.16e}"),
            format!("{inner:.16e}"),
            format!("{alpha:.16e}"),
        );
        let mut args = vec![
            "bumps",
            path_str(&file),
            "--s",
            &s_a,
            "--p",
            &p_a,
            "--q",
            q,
            "--center",
            &c_a,
            "--radius",
            &r_a,
            "--inner",
            &i_a,
            "--alpha",
            &al_a,
            "--minimal",
        ];
        if besov {
            args.push("--besov");
        }
        let report = qms_ok(&args).json();
        worst_violation = worst_violation.max(real(&report["check"]["worst_violation"]));
        let measured = real(&report["measured_norm"]);
        let bound = real(&report["bound"]);
        worst_excess = worst_excess.max((measured - bound) / bound);
        let values = reals(&report["bump"]["values"]);
        if values.iter().any(|&v| v != values[0]) {
            nonconstant += 1;
            if !(real(&report["minimal_seminorm"]) > 0.0) {
                degenerate += 1;
            }
        }
    }
    check(
        worst_violation <= 1e-12 && worst_excess <= 1e-12 && degenerate == 0,
        format!(
            "100 draws; worst violation {worst_violation:.1e}, worst norm excess over bound {worst_excess:.1e}, {nonconstant} nonconstant with {degenerate} zero seminorms"
        ),
    )
}

/// Best constant of the lower-regular Sobolev inequality across resolutions.
fn forward_stability(dir: &Path) -> Verdict {
    let mut values = Vec::new();
    let mut statuses = Vec::new();
    for n in [8usize, 16, 32] {
        let file = gen_file(dir, "line.json", &["grid", "--n", &(n + 1).to_string()]);
        let run = qms(&[
            "verify",
            path_str(&file),
            "--theorem",
            "lb",
            "--mode",
            "sobolev",
            "--s",
            "0.5",
            "--p",
            "1",
            "--q",
            "inf",
            "--Q",
            "1",
        ]);
        let report = run.json();
        values.push(real(&report["best_constant"]));
        statuses.push(report["status"].as_str().unwrap_or("?").to_string());
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = max / min;
    check(
        ratio < 3.0 && statuses.iter().all(|s| s == "BOUNDED"),
        format!("best constants {values:.4?}, spread x{ratio:.3}, statuses {statuses:?}"),
    )
}

/// Recovery round trip against the exact scans on a grid and a Cantor set.
fn recovery_round_trip(dir: &Path) -> Verdict {
    let q_cantor = 2f64.ln() / 3f64.ln();
    let fixtures = [
        ("grid", gen_file(dir, "grid16.json", &["grid", "--n", "17"]), 1.0, 0.5),
        (
            "cantor",
            gen_file(
                dir,
                "cantor.json",
                &["cantor", "--depth", "3", "--contraction", "0.3333333333333333"],
            ),
            q_cantor,
            0.3,
        ),
    ];
    let mut ok = true;
    let mut lines = Vec::new();
    for (name, file, q, s) in &fixtures {
        let q_a = format!("{q:.16e}");
        let s_a = format!("{s}");
        let geometry = qms_ok(&["analyze", path_str(file), "--Q", &q_a]).json();
        for (theorem, exact_field) in [("lb", ("regularity_fit", "kappa")), ("doub", ("doubling", "kappa_q"))] {
            let exact = real(&geometry[exact_field.0][exact_field.1]);
            let run = qms(&[
                "recover",
                path_str(file),
                "--theorem",
                theorem,
                "--mode",
                "sobolev",
                "--s",
                &s_a,
                "--p",
                "1",
                "--Q",
                &q_a,
            ]);
            if run.code != 0 {
                ok = false;
                lines.push(format!("{name}/{theorem}: exit {} {}", run.code, run.stderr.trim()));
                continue;
            }
            let report = run.json();
            let recovered = real(&report["kappa_recovered"]);
            let reported_exact = real(&report["kappa_exact"]);
            let sound = recovered > 0.0 && recovered <= exact && reported_exact == exact;
            ok &= sound;
            lines.push(format!("{name}/{theorem}: {recovered:.3e} <= {exact:.3e}"));
        }
    }
    check(ok, lines.join("; "))
}

/// The island space: the indicator of one island, and the recovery guards.
fn island(dir: &Path) -> Verdict {
    let file = gen_file(dir, "islands.json", &["islands", "--sizes", "4,4", "--gap", "10"]);
    let path = path_str(&file);
    let indicator = "--u=1,1,1,1,0,0,0,0";
    let sem = real(&qms_ok(&["seminorm", path, "--s", "0.5", "--p", "1", "--q", "inf", "--kind", "tl", indicator]).json()["value"]);
    let diam = RawSpace::read(&file).diameter();
    let diam_a = format!("{diam:.16e}");
    let local = qms(&[
        "verify",
        path,
        "--theorem",
        "lb",
        "--mode",
        "poincare",
        "--s",
        "0.5",
        "--p",
        "1",
        "--Q",
        "1",
        "--center",
        "0",
        "--radius",
        &diam_a,
        indicator,
    ])
    .json();
    let lhs = real(&local["lhs"]);
    let best = qms(&[
        "verify",
        path,
        "--theorem",
        "lb",
        "--mode",
        "poincare",
        "--s",
        "0.5",
        "--p",
        "1",
        "--Q",
        "1",
    ]);
    let status = best.json()["status"].as_str().unwrap_or("?").to_string();
    let mut refusals = Vec::new();
    for (mode, p) in [("poincare", "1"), ("trudinger", "2"), ("holder", "3")] {
        let run = qms(&[
            "recover",
            path,
            "--theorem",
            "lb",
            "--mode",
            mode,
            "--s",
            "0.5",
            "--p",
            p,
            "--Q",
            "1",
            "--constant",
            "1",
        ]);
        refusals.push(run.code == 1 && run.stderr.contains("not uniformly perfect"));
    }
    check(
        sem == 0.0 && lhs > 0.0 && status == "UNBOUNDED" && refusals.iter().all(|&r| r),
        format!("indicator seminorm {sem:.3e}, Poincaré lhs {lhs:.3e}, best constant status {status}, modes b-d refused {refusals:?}"),
    )
}

/// Transition seminorm trends on the line and Cantor families.
fn triviality() -> Verdict {
    let run = qms_ok(&[
        "triviality",
        "--family",
        "line",
        "--resolutions",
        "8,16,32",
        "--s",
        "0.5,1.5",
        "--p",
        "1",
        "--q",
        "inf",
    ]);
    let mut low = Vec::new();
    let mut high = Vec::new();
    let mut lines = run.stdout.lines();
    let header = lines.next().unwrap_or_default().to_string();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let (n, s, v): (usize, f64, f64) = (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap());
        if s == 0.5 {
            low.push((n, v));
        } else {
            high.push((n, v));
        }
    }
    // Nearest-neighbour lower bound: the n unit steps force sum g >= n^s / 2
    // over n + 1 points of mass 1/(n+1).
    let nn_bound = |n: usize| (n as f64).powf(1.5) / (2.0 * (n as f64 + 1.0));
    let growth: Vec<f64> = high.windows(2).map(|w| w[1].1 / w[0].1).collect();
    let to_bound: Vec<f64> = high.iter().map(|&(n, v)| v / nn_bound(n)).collect();
    let rate_ok = to_bound.iter().all(|&r| r >= 1.0 - 1e-12)
        && to_bound.iter().copied().fold(0.0, f64::max) / to_bound.iter().copied().fold(f64::INFINITY, f64::min) < 1.5;
    let high_ok = growth.len() == 2 && growth.iter().all(|&g| g >= 1.4) && rate_ok;
    let low_growth = low.iter().map(|&(_, v)| v).fold(0.0, f64::max) / low[0].1;
    let low_ok = low.len() == 3 && low_growth <= 1.5;

    let cantor = qms_ok(&[
        "triviality",
        "--family",
        "cantor",
        "--resolutions",
        "2,3,4,5",
        "--s",
        "3",
        "--p",
        "1",
        "--q",
        "inf",
    ]);
    let cv: Vec<f64> = cantor
        .stdout
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    let cantor_growth = cv.iter().copied().fold(0.0, f64::max) / cv[0];
    let cantor_ok = cv.len() == 4 && cantor_growth <= 1.5;
    check(
        header == "resolution,s,value" && high_ok && low_ok && cantor_ok,
        format!(
            "s=1.5 growth {growth:.3?}, value/nn-bound {to_bound:.3?}; s=0.5 growth x{low_growth:.3}; cantor s=3 growth x{cantor_growth:.3}"
        ),
    )
}

/// Geometry scans against brute force on 50 random spaces.
fn geometry_exactness(dir: &Path) -> Verdict {
    let mut worst = [0.0f64; 5];
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let n = 3 + (seed as usize % 14);
        let file = random_space(dir, "geometry.json", seed, n, seed % 2 == 1);
        let raw = RawSpace::read(&file);
        let q = 0.5 + 0.5 * (seed % 6) as f64;
        let center = rng.random_range(0..n);
        let radius = raw.diameter() * rng.random_range(0.05..1.2);
        let (q_a, c_a, r_a) = (format!("{q}"), center.to_string(), format!("{radius:.16e}"));
        let report = qms_ok(&["analyze", path_str(&file), "--Q", &q_a, "--center", &c_a, "--radius", &r_a]).json();
        let pairs = [
            (real(&report["half_mass"]["phi"]), brute_half_mass(&raw, center, radius)),
            (real(&report["regularity_fit"]["kappa"]), brute_regularity(&raw, q)),
            (real(&report["doubling"]["c_doub"]), brute_doubling_constant(&raw)),
            (real(&report["doubling"]["kappa_q"]), brute_doubling_kappa(&raw, q)),
            (real(&report["perfectness"]["lambda_star"]), brute_perfectness(&raw)),
        ];
        for (i, (a, b)) in pairs.iter().enumerate() {
            worst[i] = worst[i].max(rel_diff(*a, *b));
        }
    }
    check(
        worst.iter().all(|&w| w <= 1e-12),
        format!(
            "50 spaces; half-mass {:.1e}, regularity {:.1e}, doubling constant {:.1e}, doubling kappa {:.1e}, perfectness {:.1e}",
            worst[0], worst[1], worst[2], worst[3], worst[4]
        ),
    )
}

/// Minimal Sobolev seminorm under the snowflake transform.
fn snowflake(dir: &Path) -> Verdict {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
        let n = rng.random_range(3..=8);
        let base = random_space(dir, "base.json", seed, n, seed % 2 == 1);
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let u_arg = format!("--u={}", csv_list(&u));
        let p = if seed % 2 == 0 { "1" } else { "2" };
        for beta in [0.5f64, 2.0] {
            let flake = dir.join("flake.json");
            qms_ok(&[
                "gen",
                "snowflake",
                "--base",
                path_str(&base),
                "--beta",
                &format!("{beta}"),
                "--out",
                path_str(&flake),
            ]);
            let s: f64 = rng.random_range(0.2..0.9);
            let (s_a, bs_a) = (format!("{s:.16e}"), format!("{:.16e}", beta * s));
            let on_flake =
                real(&qms_ok(&["seminorm", path_str(&flake), "--kind", "sobolev", "--s", &s_a, "--p", p, &u_arg]).json()["value"]);
            let on_base =
                real(&qms_ok(&["seminorm", path_str(&base), "--kind", "sobolev", "--s", &bs_a, "--p", p, &u_arg]).json()["value"]);
            worst = worst.max(rel_diff(on_flake, on_base));
        }
    }
    check(
        worst <= 1e-12,
        format!("20 instances x 2 exponents; worst relative difference {worst:.1e}"),
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let dir = dir.path();
    let mut failed = 0;
    let mut report = |id: usize, name: &str, verdict: Verdict, started: Instant| {
        let secs = started.elapsed().as_secs_f64();
        match verdict {
            Ok(d) => println!("PASS criterion {id:>2} ({name}, {secs:.1}s): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {id:>2} ({name}, {secs:.1}s): {d}");
            }
        }
    };

    let t = Instant::now();
    report(1, "metrization", metrization(dir), t);

    let t = Instant::now();
    let stats = oracle_suite(dir);
    let secs = Instant::now();
    report(
        2,
        "oracle equivalence",
        check(
            stats.worst_oracle <= 1e-6 && stats.worst_violation <= 1e-12,
            format!(
                "{} solves; worst relative gap {:.1e}, worst witness violation {:.1e}",
                stats.instances, stats.worst_oracle, stats.worst_violation
            ),
        ),
        t,
    );
    report(
        3,
        "TL(q=inf) equals Sobolev",
        check(
            stats.worst_tl_vs_sobolev <= 1e-6,
            format!("worst relative difference {:.1e}", stats.worst_tl_vs_sobolev),
        ),
        secs,
    );

    let t = Instant::now();
    report(4, "bump validity", bump_validity(dir), t);
    let t = Instant::now();
    report(5, "forward stability", forward_stability(dir), t);
    let t = Instant::now();
    report(6, "recovery round trip", recovery_round_trip(dir), t);
    let t = Instant::now();
    report(7, "island counterexample", island(dir), t);
    let t = Instant::now();
    report(8, "triviality trends", triviality(), t);
    let t = Instant::now();
    report(9, "geometry exactness", geometry_exactness(dir), t);
    let t = Instant::now();
    report(10, "snowflake covariance", snowflake(dir), t);

    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
