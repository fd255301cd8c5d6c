//! The single table of pass/fail thresholds. Every check looks its
//! tolerance up here; `scale` multiplies all of them uniformly.

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// |g| against the direct determinant, g·g⁻¹ against I, cofactor identities.
    MetricAlgebra,
    /// Single-differentiation identities (R factor elimination, cofactor independence).
    FirstOrder,
    /// Robertson residuals (both formulations) and Γ-formulation.
    Robertson,
    /// Off-block Ricci: closed form vs generic, and vanishing under Robertson.
    Ricci,
    /// Poisson brackets of the quadratic integrals (scaled by 1 + |p|⁴).
    Poisson,
    /// Symmetrized covariant derivative of the Killing tensors.
    KillingEquation,
    /// Killing–Eisenhart and Levi-Civita residuals.
    StackelIdentities,
    /// Laplacian-level identities (block form, B operators, T operators).
    Laplacian,
    /// Order-four operator commutators (scaled by the test-function size).
    Commutator,
    /// Conformal transformation law of the Laplacian.
    ConformalLaw,
    /// Residuals of the conformal-factor equation and the gauge-separated equation.
    RSeparation,
    /// Helmholtz, eigenvalue and Hamilton–Jacobi residuals of separated solutions.
    Separation,
    /// Relative error of finite-difference rank matrices against S.
    RankMatrix,
    /// End-to-end Helmholtz residual through a grid-solved conformal factor.
    GridPipeline,
    /// Newton residual of the discrete semilinear problem.
    Newton,
    /// Relative drift of first integrals along RK4 trajectories.
    Drift,
}

impl Check {
    pub fn base(self) -> f64 {
        match self {
            Check::MetricAlgebra => 1e-12,
            Check::FirstOrder => 1e-10,
            Check::Robertson => 1e-9,
            Check::Ricci => 1e-8,
            Check::Poisson => 1e-9,
            Check::KillingEquation => 1e-9,
            Check::StackelIdentities => 1e-9,
            Check::Laplacian => 1e-9,
            Check::Commutator => 1e-7,
            Check::ConformalLaw => 1e-8,
            Check::RSeparation => 1e-9,
            Check::Separation => 1e-6,
            Check::RankMatrix => 1e-3,
            Check::GridPipeline => 2e-4,
            Check::Newton => 1e-10,
            Check::Drift => 1e-7,
        }
    }
}

/// Lower bounds a residual must exceed for a counterexample to count as failing.
pub mod violation {
    pub const ROBERTSON: f64 = 1e-2;
    pub const RICCI: f64 = 1e-3;
    pub const COMMUTATOR: f64 = 1e-3;
    pub const POISSON: f64 = 1e-2;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub scale: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { scale: 1.0 }
    }
}

impl Tolerances {
    pub fn scaled(scale: f64) -> Tolerances {
        Tolerances { scale }
    }

    pub fn get(&self, check: Check) -> f64 {
        check.base() * self.scale
    }
}
