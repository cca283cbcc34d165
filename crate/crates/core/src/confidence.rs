//! Confidence radii, data-fit statistics and the exact-recovery
//! certificates.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::divergence::{g_function, i_divergence_term};
use crate::error::{Error, Result};
use crate::problem::MmvSystem;

/// Bound on `E[I(y‖λ)]` over all Poisson rates.
pub const C_MU: f64 = 0.5801;
/// Bound on `VAR[I(y‖λ)]` over all Poisson rates.
pub const C_SIGMA2: f64 = 0.5178;
/// Default failure probability.
pub const DEFAULT_P: f64 = 0.05;

/// Least-squares or maximum-likelihood data fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    Ls,
    Ml,
}

impl fmt::Display for Framework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Framework::Ls => "ls",
            Framework::Ml => "ml",
        })
    }
}

impl FromStr for Framework {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ls" => Ok(Framework::Ls),
            "ml" => Ok(Framework::Ml),
            other => Err(Error::Argument(format!("unknown framework {other:?}, expected ls or ml"))),
        }
    }
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("failure probability must lie in (0, 1), got {p}")))
    }
}

/// Least-squares radius for total count `psi` and failure probability `p`.
pub fn epsilon_ls(psi: f64, p: f64) -> Result<f64> {
    check_p(p)?;
    if !(psi >= 0.0 && psi.is_finite()) {
        return Err(Error::Domain(format!("total count must be finite and nonnegative, got {psi}")));
    }
    let k2 = 2.0 / p - 1.0;
    let k = k2.sqrt();
    let r = (psi * k2 + k2 * k2 / 4.0).sqrt();
    let inner = 2.0 * psi * psi
        + psi * (4.0 * k2 + 1.0)
        + k2 * k2
        + k2 / 2.0
        + (4.0 * psi + 2.0 * k2 + 1.0) * r;
    Ok(psi + k2 / 2.0 + r + k * inner.sqrt())
}

/// Maximum-likelihood radius; depends on the data only through `M·N`.
pub fn epsilon_ml(m: usize, n: usize, p: f64) -> Result<f64> {
    check_p(p)?;
    if m == 0 || n == 0 {
        return Err(Error::Dimension(format!("M and N must be positive, got M={m}, N={n}")));
    }
    let mn = (m * n) as f64;
    Ok(C_MU * mn + (1.0 / p - 1.0).sqrt() * (C_SIGMA2 * mn).sqrt())
}

/// What a radius was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConfidenceInputs {
    Ls { psi: f64 },
    Ml { m: usize, n: usize },
    /// Radius supplied by the caller instead of the formula.
    Override,
}

/// A data-fit framework with its radius `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSpec {
    pub framework: Framework,
    pub p: f64,
    pub epsilon: f64,
    pub inputs: ConfidenceInputs,
}

impl ConfidenceSpec {
    pub fn ls(psi: f64, p: f64) -> Result<Self> {
        Ok(Self {
            framework: Framework::Ls,
            p,
            epsilon: epsilon_ls(psi, p)?,
            inputs: ConfidenceInputs::Ls { psi },
        })
    }

    pub fn ml(m: usize, n: usize, p: f64) -> Result<Self> {
        Ok(Self {
            framework: Framework::Ml,
            p,
            epsilon: epsilon_ml(m, n, p)?,
            inputs: ConfidenceInputs::Ml { m, n },
        })
    }

    /// Formula radius for the counts of `system`.
    pub fn for_system(framework: Framework, system: &MmvSystem, p: f64) -> Result<Self> {
        match framework {
            Framework::Ls => Self::ls(system.total_count(), p),
            Framework::Ml => {
                let (m, _, n) = system.dims();
                Self::ml(m, n, p)
            }
        }
    }

    pub fn with_epsilon(framework: Framework, p: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Domain(format!("radius must be positive and finite, got {epsilon}")));
        }
        Ok(Self {
            framework,
            p,
            epsilon,
            inputs: ConfidenceInputs::Override,
        })
    }

    /// The formula value for the recorded inputs, if any.
    pub fn formula_epsilon(&self) -> Result<Option<f64>> {
        match self.inputs {
            ConfidenceInputs::Ls { psi } => epsilon_ls(psi, self.p).map(Some),
            ConfidenceInputs::Ml { m, n } => epsilon_ml(m, n, self.p).map(Some),
            ConfidenceInputs::Override => Ok(None),
        }
    }

    /// Data-fit statistic of `x` under this framework.
    pub fn constraint(&self, system: &MmvSystem, x: &Array2<f64>) -> Result<f64> {
        constraint(self.framework, system, x)
    }
}

fn column_rates(system: &MmvSystem, x: &Array2<f64>, i: usize) -> ndarray::Array1<f64> {
    system.matrices()[i].dot(&x.column(i))
}

/// `Σ_i ‖A_i x_i − y_i‖₂²`.
pub fn constraint_ls(system: &MmvSystem, x: &Array2<f64>) -> Result<f64> {
    system.check_shape(x)?;
    let (_, _, n) = system.dims();
    Ok((0..n)
        .map(|i| {
            let rates = column_rates(system, x, i);
            rates
                .iter()
                .zip(system.count_column(i))
                .map(|(r, y)| (r - y).powi(2))
                .sum::<f64>()
        })
        .sum())
}

/// `Σ_i I(y_i‖A_i x_i)`; `+∞` when a positive count meets a zero rate.
pub fn constraint_ml(system: &MmvSystem, x: &Array2<f64>) -> Result<f64> {
    system.check_shape(x)?;
    if x.iter().any(|v| *v < 0.0) {
        return Err(Error::Domain("I-divergence needs a nonnegative matrix".into()));
    }
    let (_, _, n) = system.dims();
    Ok((0..n)
        .map(|i| {
            let rates = column_rates(system, x, i);
            rates
                .iter()
                .zip(system.count_column(i))
                .map(|(&r, &y)| i_divergence_term(y, r))
                .sum::<f64>()
        })
        .sum())
}

pub fn constraint(framework: Framework, system: &MmvSystem, x: &Array2<f64>) -> Result<f64> {
    match framework {
        Framework::Ls => constraint_ls(system, x),
        Framework::Ml => constraint_ml(system, x),
    }
}

/// Euclidean norm of every row.
pub fn row_norms(x: &Array2<f64>) -> Vec<f64> {
    x.axis_iter(Axis(0)).map(|r| r.dot(&r).sqrt()).collect()
}

/// Smallest nonzero row norm.
pub fn gamma(x: &Array2<f64>) -> Result<f64> {
    row_norms(x)
        .into_iter()
        .filter(|v| *v != 0.0)
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::Domain("γ is undefined for a matrix without nonzero rows".into()))
}

/// Outcome of the sufficient condition for exact row-support recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryCertificate {
    pub gamma: f64,
    pub required_gamma: f64,
    pub delta_2s: f64,
    pub satisfied: bool,
    pub framework: Framework,
    /// Columns with no counts; their term was replaced by its limit 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub zero_count_columns: Vec<usize>,
}

/// Required `γ` for the least-squares certificate.
pub fn required_gamma_ls(epsilon: f64, delta_2s: f64) -> Result<f64> {
    check_delta(delta_2s)?;
    Ok(2.0 * epsilon.sqrt() / (1.0 - delta_2s))
}

/// Required `γ` for the maximum-likelihood certificate given the column
/// masses `‖y_i‖₁`, together with the indices of zero-mass columns.
pub fn required_gamma_ml(epsilon: f64, masses: &[f64], delta_2s: f64) -> Result<(f64, Vec<usize>)> {
    check_delta(delta_2s)?;
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("radius must be positive, got {epsilon}")));
    }
    let root_eps = epsilon.sqrt();
    let mut zero = Vec::new();
    let mut sum = 0.0;
    for (i, &y) in masses.iter().enumerate() {
        if y == 0.0 {
            zero.push(i);
            continue;
        }
        let term = 2.0 * (2.0 * y).sqrt() + y / root_eps * g_function(2.0 * epsilon / y)?;
        sum += term * term;
    }
    Ok((2.0 / (1.0 - delta_2s) * (epsilon * sum).sqrt(), zero))
}

fn check_delta(delta: f64) -> Result<()> {
    if (0.0..1.0).contains(&delta) {
        Ok(())
    } else {
        Err(Error::Domain(format!("RIP constant must lie in [0, 1), got {delta}")))
    }
}

/// Checks `γ(X̃) ≥ required_gamma` for the framework of `spec`.
pub fn recovery_certificate(
    system: &MmvSystem,
    truth: &Array2<f64>,
    spec: &ConfidenceSpec,
    delta_2s: f64,
) -> Result<RecoveryCertificate> {
    system.check_shape(truth)?;
    let g = gamma(truth)?;
    let (required_gamma, zero_count_columns) = match spec.framework {
        Framework::Ls => (required_gamma_ls(spec.epsilon, delta_2s)?, Vec::new()),
        Framework::Ml => required_gamma_ml(spec.epsilon, &system.column_masses(), delta_2s)?,
    };
    Ok(RecoveryCertificate {
        gamma: g,
        required_gamma,
        delta_2s,
        satisfied: g >= required_gamma,
        framework: spec.framework,
        zero_count_columns,
    })
}
