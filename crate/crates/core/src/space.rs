//! Finite quasi-metric measure spaces: validation, summary constants, balls and
//! the JSON space-file format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationError, Violation};

/// Index of a point in a space.
pub type PointId = usize;

/// Anything that assigns a nonnegative distance to ordered pairs of points.
pub trait Distance {
    /// Number of points.
    fn len(&self) -> usize;
    /// Distance from `i` to `j`.
    fn dist(&self, i: PointId, j: PointId) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A validated finite quasi-metric space with strictly positive point masses.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiMetricSpace {
    name: String,
    labels: Vec<String>,
    n: usize,
    rho: Vec<f64>,
    mu: Vec<f64>,
}

impl Distance for QuasiMetricSpace {
    fn len(&self) -> usize {
        self.n
    }

    #[inline]
    fn dist(&self, i: PointId, j: PointId) -> f64 {
        self.rho[i * self.n + j]
    }
}

/// Exact constants of a space obtained by finite enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpaceSummary {
    pub c_rho: f64,
    pub c_tilde_rho: f64,
    pub diameter: f64,
    pub min_positive_distance: f64,
    pub total_mass: f64,
}

/// Members and measure of a ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: PointId,
    pub radius: f64,
    pub closed: bool,
    pub members: Vec<PointId>,
    pub measure: f64,
}

/// On-disk representation of a space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceFile {
    pub name: String,
    pub points: Vec<String>,
    pub rho: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
}

/// Validate a raw distance matrix and mass vector.
///
/// Every violated axiom is collected; the error lists them in scan order.
pub fn validate_space(
    name: impl Into<String>,
    labels: Option<Vec<String>>,
    rho: Vec<Vec<f64>>,
    mu: Vec<f64>,
) -> std::result::Result<QuasiMetricSpace, ValidationError> {
    let n = rho.len();
    let mut violations = Vec::new();
    for (row, r) in rho.iter().enumerate() {
        if r.len() != n {
            violations.push(Violation::NotSquare {
                row,
                len: r.len(),
                expected: n,
            });
        }
    }
    if mu.len() != n {
        violations.push(Violation::MuLength { mu_len: mu.len(), n });
    }
    if let Some(l) = &labels {
        if l.len() != n {
            violations.push(Violation::LabelsLength { labels_len: l.len(), n });
        }
    }
    if n < 2 {
        violations.push(Violation::TooFewPoints { n });
    }
    if !violations.is_empty() {
        return Err(ValidationError { violations });
    }
    for (i, row) in rho.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                violations.push(Violation::NonFinite { i, j });
            } else if v < 0.0 {
                violations.push(Violation::NegativeDistance { i, j, value: v });
            } else if i == j && v != 0.0 {
                violations.push(Violation::NonzeroDiagonal { i, value: v });
            } else if i != j && v == 0.0 {
                violations.push(Violation::ZeroOffDiagonal { i, j });
            }
        }
    }
    for (i, &m) in mu.iter().enumerate() {
        if !(m.is_finite() && m > 0.0) {
            violations.push(Violation::NonpositiveMass { i, value: m });
        }
    }
    if !violations.is_empty() {
        return Err(ValidationError { violations });
    }
    let labels = labels.unwrap_or_else(|| (0..n).map(|i| i.to_string()).collect());
    Ok(QuasiMetricSpace {
        name: name.into(),
        labels,
        n,
        rho: rho.into_iter().flatten().collect(),
        mu,
    })
}

impl QuasiMetricSpace {
    /// Build a space from a flat row-major matrix, validating it.
    pub fn from_flat(name: impl Into<String>, n: usize, rho: Vec<f64>, mu: Vec<f64>) -> std::result::Result<Self, ValidationError> {
        let rows = rho.chunks(n.max(1)).map(|c| c.to_vec()).collect();
        validate_space(name, None, rows, mu)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Row-major distance matrix.
    pub fn rho_flat(&self) -> &[f64] {
        &self.rho
    }

    pub fn rho_rows(&self) -> Vec<Vec<f64>> {
        self.rho.chunks(self.n).map(|c| c.to_vec()).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.mu.iter().sum()
    }

    pub fn mass_of(&self, members: &[PointId]) -> f64 {
        members.iter().map(|&i| self.mu[i]).sum()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// The same points and masses with a new distance matrix (validated).
    pub fn with_rho(&self, rho: Vec<f64>) -> std::result::Result<Self, ValidationError> {
        Self::from_flat(self.name.clone(), self.n, rho, self.mu.clone()).map(|s| QuasiMetricSpace {
            labels: self.labels.clone(),
            ..s
        })
    }

    /// The same points and distances with new masses (validated).
    pub fn with_mu(&self, mu: Vec<f64>) -> std::result::Result<Self, ValidationError> {
        Self::from_flat(self.name.clone(), self.n, self.rho.clone(), mu).map(|s| QuasiMetricSpace {
            labels: self.labels.clone(),
            ..s
        })
    }

    /// Restriction to a subset of points, keeping the induced distances and
    /// masses. A single-point restriction is allowed.
    pub fn restrict(&self, members: &[PointId]) -> QuasiMetricSpace {
        let m = members.len();
        let mut rho = Vec::with_capacity(m * m);
        for &i in members {
            for &j in members {
                rho.push(self.dist(i, j));
            }
        }
        QuasiMetricSpace {
            name: self.name.clone(),
            labels: members.iter().map(|&i| self.labels[i].clone()).collect(),
            n: m,
            rho,
            mu: members.iter().map(|&i| self.mu[i]).collect(),
        }
    }

    /// Exact constants by enumeration of all pairs and triples.
    pub fn summary(&self) -> SpaceSummary {
        let n = self.n;
        let mut c_tilde: f64 = 1.0;
        let mut diameter: f64 = 0.0;
        let mut min_pos = f64::INFINITY;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let d = self.dist(i, j);
                diameter = diameter.max(d);
                min_pos = min_pos.min(d);
                c_tilde = c_tilde.max(self.dist(j, i) / d);
            }
        }
        SpaceSummary {
            c_rho: quasi_triangle_constant(self),
            c_tilde_rho: c_tilde,
            diameter,
            min_positive_distance: min_pos,
            total_mass: self.total_mass(),
        }
    }

    pub fn diameter(&self) -> f64 {
        self.rho.iter().cloned().fold(0.0, f64::max)
    }

    /// Open (`closed = false`) or closed ball around `center`. Membership is
    /// decided by `rho(center, y)` with exact comparisons.
    pub fn ball(&self, center: PointId, radius: f64, closed: bool) -> Ball {
        let members = ball_members(self, center, radius, closed);
        let measure = self.mass_of(&members);
        Ball {
            center,
            radius,
            closed,
            members,
            measure,
        }
    }

    /// Measure of the open ball `B(center, radius)`.
    pub fn open_ball_measure(&self, center: PointId, radius: f64) -> f64 {
        let row = &self.rho[center * self.n..(center + 1) * self.n];
        row.iter().zip(&self.mu).filter(|(d, _)| **d < radius).map(|(_, m)| m).sum()
    }

    /// Sorted distinct distances from `center` (including 0).
    pub fn distances_from(&self, center: PointId) -> Vec<f64> {
        let mut d: Vec<f64> = (0..self.n).map(|j| self.dist(center, j)).collect();
        d.sort_by(f64::total_cmp);
        d.dedup();
        d
    }

    /// Sorted distinct positive distances over all ordered pairs.
    pub fn distance_set(&self) -> Vec<f64> {
        let mut d: Vec<f64> = self.rho.iter().cloned().filter(|&v| v > 0.0).collect();
        d.sort_by(f64::total_cmp);
        d.dedup();
        d
    }

    /// Serializable form.
    pub fn to_file(&self) -> SpaceFile {
        SpaceFile {
            name: self.name.clone(),
            points: self.labels.clone(),
            rho: self.rho_rows(),
            mu: self.mu.clone(),
        }
    }

    /// Parse and validate a space file body.
    pub fn from_json_str(body: &str) -> Result<Self> {
        let file: SpaceFile = serde_json::from_str(body)?;
        Ok(Self::try_from(file)?)
    }

    /// Read and validate a space file.
    pub fn read(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path)?;
        Self::from_json_str(&body)
    }
}

impl TryFrom<SpaceFile> for QuasiMetricSpace {
    type Error = ValidationError;

    fn try_from(f: SpaceFile) -> std::result::Result<Self, ValidationError> {
        validate_space(f.name, Some(f.points), f.rho, f.mu)
    }
}

/// Members of the open or closed ball around `center` under any distance.
pub fn ball_members<D: Distance + ?Sized>(d: &D, center: PointId, radius: f64, closed: bool) -> Vec<PointId> {
    (0..d.len())
        .filter(|&y| {
            let v = d.dist(center, y);
            if closed {
                v <= radius
            } else {
                v < radius
            }
        })
        .collect()
}

/// Least constant `C` with `d(x,y) <= C max(d(x,z), d(z,y))` over all triples
/// that are not all equal.
pub fn quasi_triangle_constant<D: Distance + ?Sized>(d: &D) -> f64 {
    let n = d.len();
    let mut c: f64 = 1.0;
    for x in 0..n {
        for y in 0..n {
            if x == y {
                continue;
            }
            let dxy = d.dist(x, y);
            for z in 0..n {
                let m = d.dist(x, z).max(d.dist(z, y));
                c = c.max(dxy / m);
            }
        }
    }
    c
}

/// Check that a function has one value per point.
pub(crate) fn check_len(u: &[f64], n: usize) -> Result<()> {
    if u.len() != n {
        return Err(Error::FunctionLength { got: u.len(), expected: n });
    }
    Ok(())
}
