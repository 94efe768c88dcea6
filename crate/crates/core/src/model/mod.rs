//! Queue description, mean offspring matrix and stability classification.
//!
//! Classes are indexed from zero throughout the library. `lambda[i][j]` is the
//! arrival rate of class `j` while a class-`i` job is in service and
//! `lambda0[j]` the rate of class `j` while the server idles.

mod distribution;
pub mod spectral;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use distribution::{ServiceDistribution, ServiceSampler, LST_QUADRATURE_TOL};
pub use spectral::{left_perron_vector, power_iteration_radius, spectral_radius, PerronVector};

use crate::error::{Error, Result};

/// Default half-width of the boundary band around ρ = 1.
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// The model file: the single input format of every analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub k: usize,
    /// Row `i` = class in service, column `j` = arriving class.
    pub lambda: Vec<Vec<f64>>,
    pub lambda0: Vec<f64>,
    pub service: Vec<ServiceDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    EmptyModel,
    NotSquare { rows: usize, row: usize, len: usize },
    DimensionMismatch { field: &'static str, expected: usize, found: usize },
    NegativeRate { field: String, value: f64 },
    InfiniteMean { class: usize },
    BadParameter { class: usize, message: String },
    NoRestart,
}

impl Violation {
    /// Everything except a zero idle-state arrival vector makes the model
    /// unusable. `NoRestart` only rules out operations that need the server
    /// to leave the empty state on its own.
    pub fn is_fatal(&self) -> bool {
        !matches!(self, Violation::NoRestart)
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyModel => write!(f, "model has no classes"),
            Violation::NotSquare { rows, row, len } => write!(
                f,
                "lambda is not square: row {} has {len} entries, expected {rows}",
                row + 1
            ),
            Violation::DimensionMismatch { field, expected, found } => {
                write!(f, "{field} has {found} entries, expected {expected}")
            }
            Violation::NegativeRate { field, value } => {
                write!(f, "rate {field} must be finite and non-negative, got {value}")
            }
            Violation::InfiniteMean { class } => {
                write!(f, "class {}: infinite mean service time", class + 1)
            }
            Violation::BadParameter { class, message } => {
                write!(f, "class {}: {message}", class + 1)
            }
            Violation::NoRestart => write!(f, "lambda0 is all zero: system cannot restart from empty"),
        }
    }
}

impl ModelSpec {
    /// All problems with the description; empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let k = self.k;
        if k == 0 {
            v.push(Violation::EmptyModel);
            return v;
        }
        if self.lambda.len() != k {
            v.push(Violation::DimensionMismatch {
                field: "lambda",
                expected: k,
                found: self.lambda.len(),
            });
        }
        for (i, row) in self.lambda.iter().enumerate() {
            if row.len() != k {
                v.push(Violation::NotSquare { rows: k, row: i, len: row.len() });
            }
            for (j, &x) in row.iter().enumerate() {
                if !(x.is_finite() && x >= 0.0) {
                    v.push(Violation::NegativeRate {
                        field: format!("lambda[{}][{}]", i + 1, j + 1),
                        value: x,
                    });
                }
            }
        }
        if self.lambda0.len() != k {
            v.push(Violation::DimensionMismatch {
                field: "lambda0",
                expected: k,
                found: self.lambda0.len(),
            });
        }
        for (j, &x) in self.lambda0.iter().enumerate() {
            if !(x.is_finite() && x >= 0.0) {
                v.push(Violation::NegativeRate { field: format!("lambda0[{}]", j + 1), value: x });
            }
        }
        if self.service.len() != k {
            v.push(Violation::DimensionMismatch {
                field: "service",
                expected: k,
                found: self.service.len(),
            });
        }
        for (i, d) in self.service.iter().enumerate() {
            for message in d.parameter_problems() {
                v.push(Violation::BadParameter { class: i, message });
            }
            if let ServiceDistribution::Pareto { shape, .. } = *d {
                if shape > 0.0 && shape <= 1.0 {
                    v.push(Violation::InfiniteMean { class: i });
                }
            }
        }
        if !self.lambda0.is_empty() && self.lambda0.iter().all(|&x| x == 0.0) {
            v.push(Violation::NoRestart);
        }
        v
    }
}

/// Mean offspring matrix `M = G⁻¹Λ` with its Perron root.
#[derive(Debug, Clone)]
pub struct OffspringMatrix {
    pub m: DMatrix<f64>,
    pub rho: f64,
    pub irreducible: bool,
}

impl OffspringMatrix {
    /// `M_ij = λ_ij m_i`.
    pub fn new(lambda: &DMatrix<f64>, means: &[f64]) -> Result<Self> {
        let k = lambda.nrows();
        let m = DMatrix::from_fn(k, k, |i, j| lambda[(i, j)] * means[i]);
        let rho = spectral_radius(&m)?;
        let irreducible = spectral::is_irreducible(&m);
        Ok(Self { m, rho, irreducible })
    }

    pub fn k(&self) -> usize {
        self.m.nrows()
    }

    /// Every row of `M` has a strictly positive entry.
    pub fn rows_positive(&self) -> bool {
        self.m.row_iter().all(|r| r.iter().any(|&x| x > 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Stable,
    Boundary,
    Unstable,
}

impl Verdict {
    pub fn from_rho(rho: f64, epsilon: f64) -> Self {
        if rho < 1.0 - epsilon {
            Verdict::Stable
        } else if rho > 1.0 + epsilon {
            Verdict::Unstable
        } else {
            Verdict::Boundary
        }
    }
}

/// Which fluid result backs a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictBasis {
    /// ρ < 1: Lyapunov drain time, global stability.
    GlobalStability,
    /// ρ > 1 and every row of M positive: weak instability.
    WeakInstability,
    /// ρ > 1 but some row of M is zero; instability is not certified.
    UnstableRowsHypothesisFails,
    /// |ρ - 1| <= ε with M irreducible: weak stability.
    WeakStability,
    /// |ρ - 1| <= ε with M reducible; weak stability is not certified.
    BoundaryReducible,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub rho: f64,
    pub verdict: Verdict,
    pub epsilon: f64,
    /// `eᵀ(I − Hᵀ)⁻¹G⁻¹`, present iff the verdict is `Stable`.
    #[serde(rename = "drainCoefficients", skip_serializing_if = "Option::is_none")]
    pub drain_coefficients: Option<Vec<f64>>,
    #[serde(rename = "rowsPositive")]
    pub rows_positive: bool,
    pub irreducible: bool,
    pub basis: VerdictBasis,
}

/// A validated model with the derived matrices precomputed.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    lambda: DMatrix<f64>,
    lambda0: DVector<f64>,
    means: Vec<f64>,
    offspring: OffspringMatrix,
}

impl Model {
    /// Validates `spec`. A zero `lambda0` is tolerated here; see
    /// [`Model::can_restart`].
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let fatal: Vec<Violation> = spec.validate().into_iter().filter(Violation::is_fatal).collect();
        if !fatal.is_empty() {
            return Err(Error::InvalidModel(fatal));
        }
        let k = spec.k;
        let lambda = DMatrix::from_fn(k, k, |i, j| spec.lambda[i][j]);
        let lambda0 = DVector::from_column_slice(&spec.lambda0);
        let means: Vec<f64> = spec.service.iter().map(ServiceDistribution::mean).collect();
        let offspring = OffspringMatrix::new(&lambda, &means)?;
        Ok(Self { spec, lambda, lambda0, means, offspring })
    }

    /// Convenience constructor from row slices.
    pub fn from_parts(
        lambda: Vec<Vec<f64>>,
        lambda0: Vec<f64>,
        service: Vec<ServiceDistribution>,
    ) -> Result<Self> {
        Self::new(ModelSpec { k: service.len(), lambda, lambda0, service })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn k(&self) -> usize {
        self.spec.k
    }

    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn lambda0(&self) -> &DVector<f64> {
        &self.lambda0
    }

    pub fn service(&self, class: usize) -> &ServiceDistribution {
        &self.spec.service[class]
    }

    pub fn mean_service(&self, class: usize) -> f64 {
        self.means[class]
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// μ_i = 1 / m_i.
    pub fn mu(&self, class: usize) -> f64 {
        1.0 / self.means[class]
    }

    /// λ̄ⁱ = Σ_j λ_ij.
    pub fn lambda_bar(&self, class: usize) -> f64 {
        self.lambda.row(class).sum()
    }

    pub fn can_restart(&self) -> bool {
        self.lambda0.iter().any(|&x| x > 0.0)
    }

    pub fn offspring(&self) -> &OffspringMatrix {
        &self.offspring
    }

    pub fn rho(&self) -> f64 {
        self.offspring.rho
    }

    /// `G = diag(μ_i)`.
    pub fn g(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(self.k(), (0..self.k()).map(|i| self.mu(i))))
    }

    /// `H = G M G⁻¹`, entrywise `λ_ij / μ_j`.
    pub fn h(&self) -> DMatrix<f64> {
        let k = self.k();
        DMatrix::from_fn(k, k, |i, j| self.lambda[(i, j)] * self.means[j])
    }

    /// Same queue with every in-service rate multiplied by `kappa`.
    pub fn scaled(&self, kappa: f64) -> Result<Self> {
        let mut spec = self.spec.clone();
        for row in &mut spec.lambda {
            for x in row.iter_mut() {
                *x *= kappa;
            }
        }
        Self::new(spec)
    }

    /// Same queue with classes relabelled: new class `a` is old class `perm[a]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let k = self.k();
        let spec = ModelSpec {
            k,
            lambda: (0..k)
                .map(|a| (0..k).map(|b| self.spec.lambda[perm[a]][perm[b]]).collect())
                .collect(),
            lambda0: (0..k).map(|a| self.spec.lambda0[perm[a]]).collect(),
            service: (0..k).map(|a| self.spec.service[perm[a]].clone()).collect(),
        };
        Self::new(spec)
    }

    pub fn verdict(&self, epsilon: f64) -> Verdict {
        Verdict::from_rho(self.rho(), epsilon)
    }

    /// Error unless ρ < 1 − ε.
    pub fn require_stable(&self, epsilon: f64) -> Result<()> {
        match self.verdict(epsilon) {
            Verdict::Stable => Ok(()),
            _ => Err(Error::StabilityViolation { rho: self.rho() }),
        }
    }

    /// Stability verdict with the drain-time coefficients when ρ < 1.
    pub fn classify(&self, epsilon: f64) -> Result<StabilityReport> {
        let rho = self.rho();
        let verdict = Verdict::from_rho(rho, epsilon);
        let rows_positive = self.offspring.rows_positive();
        let irreducible = self.offspring.irreducible;
        let drain_coefficients = match verdict {
            Verdict::Stable => Some(self.drain_coefficients()?),
            _ => None,
        };
        let basis = match verdict {
            Verdict::Stable => VerdictBasis::GlobalStability,
            Verdict::Unstable if rows_positive => VerdictBasis::WeakInstability,
            Verdict::Unstable => VerdictBasis::UnstableRowsHypothesisFails,
            Verdict::Boundary if irreducible => VerdictBasis::WeakStability,
            Verdict::Boundary => VerdictBasis::BoundaryReducible,
        };
        Ok(StabilityReport {
            rho,
            verdict,
            epsilon,
            drain_coefficients,
            rows_positive,
            irreducible,
            basis,
        })
    }

    /// `eᵀ(I − Hᵀ)⁻¹G⁻¹` as a vector: solve `(I − H) u = e`, then scale by m_j.
    pub(crate) fn drain_coefficients(&self) -> Result<Vec<f64>> {
        let k = self.k();
        let a = DMatrix::identity(k, k) - self.h();
        let u = a
            .lu()
            .solve(&DVector::from_element(k, 1.0))
            .ok_or(Error::Singular("I - H"))?;
        Ok((0..k).map(|j| u[j] * self.means[j]).collect())
    }

    /// `(I − M)⁻¹ x` by LU.
    pub(crate) fn solve_i_minus_m(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let k = self.k();
        let a = DMatrix::identity(k, k) - &self.offspring.m;
        a.lu().solve(rhs).ok_or(Error::Singular("I - M"))
    }
}
