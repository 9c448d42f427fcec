//! Canonical example families of finite quasi-metric measure spaces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::space::{validate_space, Distance, QuasiMetricSpace};

/// Description of a generated space.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorSpec {
    /// `n` points per axis on `[0,1]^dim`, Euclidean distance rescaled to
    /// diameter 1, uniform masses summing to 1.
    Grid { n: usize, dim: usize },
    /// Leaves of a binary tree of the given depth; two leaves whose paths split
    /// at depth `k` (the root split is depth 1) sit at distance `contraction^k`.
    Cantor { depth: u32, contraction: f64 },
    /// Disjoint one-dimensional grids laid out on a line, consecutive islands
    /// separated by exactly `gap`.
    Islands { sizes: Vec<usize>, gap: f64 },
    /// Symmetric matrix of i.i.d. draws from `[0.05, 1]`, uniform masses.
    Random { seed: u64, n: usize },
}

/// Build the space described by `spec`, with all distances multiplied by
/// `scale` (1 for the canonical families).
pub fn generate(spec: &GeneratorSpec, scale: f64) -> Result<QuasiMetricSpace> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidSpec(format!("scale must be positive, got {scale}")));
    }
    let space = match spec {
        GeneratorSpec::Grid { n, dim } => grid(*n, *dim)?,
        GeneratorSpec::Cantor { depth, contraction } => cantor(*depth, *contraction)?,
        GeneratorSpec::Islands { sizes, gap } => islands(sizes, *gap)?,
        GeneratorSpec::Random { seed, n } => random(*seed, *n)?,
    };
    if scale == 1.0 {
        return Ok(space);
    }
    let rho = space.rho_flat().iter().map(|d| d * scale).collect();
    Ok(space.with_rho(rho)?)
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Uniform lattice with `n` points per axis in `[0,1]^dim`, diameter 1.
pub fn grid(n: usize, dim: usize) -> Result<QuasiMetricSpace> {
    if n < 2 || dim == 0 {
        return Err(Error::InvalidSpec(format!("grid needs n >= 2 and dim >= 1, got n={n}, dim={dim}")));
    }
    let total = n
        .checked_pow(dim as u32)
        .filter(|&t| t <= 4096)
        .ok_or_else(|| Error::InvalidSpec(format!("grid with {n}^{dim} points is too large")))?;
    let coords: Vec<Vec<f64>> = (0..total)
        .map(|mut idx| {
            (0..dim)
                .map(|_| {
                    let c = idx % n;
                    idx /= n;
                    c as f64 / (n - 1) as f64
                })
                .collect()
        })
        .collect();
    let norm = (dim as f64).sqrt();
    let rho = coords
        .iter()
        .map(|a| {
            coords
                .iter()
                .map(|b| {
                    if dim == 1 {
                        (a[0] - b[0]).abs()
                    } else {
                        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt() / norm
                    }
                })
                .collect()
        })
        .collect();
    let labels = coords
        .iter()
        .map(|c| c.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(","))
        .collect();
    Ok(validate_space(format!("grid(n={n},dim={dim})"), Some(labels), rho, uniform(total))?)
}

/// Binary-tree ultrametric with `2^depth` leaves.
pub fn cantor(depth: u32, contraction: f64) -> Result<QuasiMetricSpace> {
    if depth == 0 || depth > 12 {
        return Err(Error::InvalidSpec(format!("cantor depth must be in 1..=12, got {depth}")));
    }
    if !(contraction > 0.0 && contraction < 1.0) {
        return Err(Error::InvalidSpec(format!(
            "cantor contraction must be in (0,1), got {contraction}"
        )));
    }
    let n = 1usize << depth;
    let rho = (0..n)
        .map(|a| {
            (0..n)
                .map(|b| {
                    if a == b {
                        0.0
                    } else {
                        // Leaves are depth-bit words read from the most significant bit.
                        let split = depth - (usize::BITS - (a ^ b).leading_zeros()) + 1;
                        contraction.powi(split as i32)
                    }
                })
                .collect()
        })
        .collect();
    let labels = (0..n).map(|a| format!("{:0width$b}", a, width = depth as usize)).collect();
    Ok(validate_space(
        format!("cantor(depth={depth},contraction={contraction})"),
        Some(labels),
        rho,
        uniform(n),
    )?)
}

/// Replace every distance by its `beta`-th power.
pub fn snowflake(base: &QuasiMetricSpace, beta: f64) -> Result<QuasiMetricSpace> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidSpec(format!("snowflake exponent must be positive, got {beta}")));
    }
    let rho = base.rho_flat().iter().map(|d| d.powf(beta)).collect();
    Ok(base.with_rho(rho)?.with_name(format!("snowflake({},beta={beta})", base.name())))
}

/// Islands of `sizes[i]` equally spaced points on unit intervals, consecutive
/// islands separated by `gap`.
pub fn islands(sizes: &[usize], gap: f64) -> Result<QuasiMetricSpace> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::InvalidSpec("islands need at least two nonempty islands".into()));
    }
    if !(gap.is_finite() && gap > 0.0) {
        return Err(Error::InvalidSpec(format!("island gap must be positive, got {gap}")));
    }
    let mut pos = Vec::new();
    let mut labels = Vec::new();
    let mut offset = 0.0;
    for (k, &size) in sizes.iter().enumerate() {
        for i in 0..size {
            let t = if size == 1 { 0.0 } else { i as f64 / (size - 1) as f64 };
            pos.push(offset + t);
            labels.push(format!("{k}:{i}"));
        }
        offset += if size == 1 { 0.0 } else { 1.0 } + gap;
    }
    let n = pos.len();
    let rho = pos.iter().map(|a| pos.iter().map(|b| (a - b).abs()).collect()).collect();
    Ok(validate_space(
        format!("islands({sizes:?},gap={gap})"),
        Some(labels),
        rho,
        uniform(n),
    )?)
}

/// Symmetric random space: off-diagonal entries drawn i.i.d. from `[0.05, 1]`,
/// which keeps every off-diagonal entry positive.
pub fn random(seed: u64, n: usize) -> Result<QuasiMetricSpace> {
    if n < 2 {
        return Err(Error::InvalidSpec(format!("random space needs n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rho = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.05 + 0.95 * rng.random::<f64>();
            rho[i][j] = v;
            rho[j][i] = v;
        }
    }
    Ok(validate_space(format!("random(seed={seed},n={n})"), None, rho, uniform(n))?)
}

/// Random space with asymmetric distances and non-uniform masses, for
/// exercising direction-sensitive code paths. Each reversed entry is the
/// forward entry times a factor drawn from `[1, skew]`.
pub fn random_asymmetric(seed: u64, n: usize, skew: f64) -> Result<QuasiMetricSpace> {
    if !(skew >= 1.0 && skew.is_finite()) {
        return Err(Error::InvalidSpec(format!("skew must be >= 1, got {skew}")));
    }
    let base = random(seed, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut rho: Vec<f64> = base.rho_flat().to_vec();
    for i in 0..n {
        for j in (i + 1)..n {
            let f = 1.0 + (skew - 1.0) * rng.random::<f64>();
            if rng.random::<bool>() {
                rho[i * n + j] *= f;
            } else {
                rho[j * n + i] *= f;
            }
        }
    }
    let mu = (0..n).map(|_| 0.5 + rng.random::<f64>()).collect();
    let s = QuasiMetricSpace::from_flat(format!("random_asymmetric(seed={seed},n={n})"), n, rho, mu)?;
    debug_assert_eq!(s.len(), n);
    Ok(s)
}
