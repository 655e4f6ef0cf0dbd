//! Galerkin solves for the induced surface charge.
//!
//! Three equivalent discrete systems are available:
//!
//! * induced charge, `A* ν = (4π/κ0) σ_f`;
//! * second kind, the same system with sphere `i` scaled by `κ0/(κ0 + κ_i)`,
//!   `(½ I - c' K*) ν = (4π/(κ0 + κ)) σ_f`;
//! * potential, `A λ = (4π/κ0) V σ_f` followed by `ν = c DtN λ + (4π/κ0) σ_f`.

mod gmres;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use gmres::{gmres, relative_residual, FnOperator, GmresOutcome, GmresSettings, LinearOperator};

use crate::error::{Error, Result};
use crate::harmonics::degrees;
use crate::operators::OperatorContext;
use crate::trace_space::{GlobalCoefficients, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    #[default]
    InducedCharge,
    SecondKind,
    Potential,
}

impl std::str::FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "induced_charge" | "induced-charge" | "a-star" => Ok(Self::InducedCharge),
            "second_kind" | "second-kind" => Ok(Self::SecondKind),
            "potential" => Ok(Self::Potential),
            other => Err(Error::InvalidParameter(format!("unknown formulation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub rel_tol: f64,
    pub max_iters: usize,
    pub restart: Option<usize>,
    pub formulation: Formulation,
    /// Right preconditioning by the single-sphere diagonal.
    #[serde(default)]
    pub jacobi: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-14,
            max_iters: 500,
            restart: None,
            formulation: Formulation::InducedCharge,
            jacobi: false,
        }
    }
}

impl SolverSettings {
    pub fn with_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_formulation(mut self, formulation: Formulation) -> Self {
        self.formulation = formulation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::InvalidParameter(format!("rel_tol {} not in (0, 1)", self.rel_tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        Ok(())
    }

    fn gmres(&self) -> GmresSettings {
        GmresSettings {
            rel_tol: self.rel_tol,
            max_iters: self.max_iters,
            restart: self.restart,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: GlobalCoefficients,
    pub formulation: Formulation,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    /// True relative residual of the solved system at the returned iterate.
    pub final_residual: f64,
    pub energy: f64,
    pub wall_time: Duration,
}

/// Largest allowed deviation from the charge sum rule, relative to the right-hand side.
pub const CHARGE_SUM_TOL: f64 = 1e-10;

fn rhs_density(ctx: &OperatorContext, sigma_f: &GlobalCoefficients) -> Result<GlobalCoefficients> {
    sigma_f.expect_role(Role::Density)?;
    if sigma_f.ell_max() > ctx.ell_max() {
        return Err(Error::ShapeMismatch(format!(
            "free charge degree {} exceeds the context degree {}",
            sigma_f.ell_max(),
            ctx.ell_max()
        )));
    }
    let lifted = sigma_f.resized(ctx.ell_max());
    ctx.from_vec(Role::Density, lifted.into_vec())
}

fn jacobi_diagonal(ctx: &OperatorContext, contrast: &[f64], shift: f64) -> Vec<f64> {
    let mut d = Vec::with_capacity(ctx.n_spheres() * crate::harmonics::block_len(ctx.ell_max()));
    for c in contrast {
        for l in degrees(ctx.ell_max()) {
            let k_star = l as f64 / (2 * l + 1) as f64 - shift;
            d.push(1.0 / (1.0 - shift - c * k_star));
        }
    }
    d
}

fn run_gmres(
    ctx: &OperatorContext,
    role: Role,
    rhs: &GlobalCoefficients,
    precond: Option<Vec<f64>>,
    settings: &SolverSettings,
    apply: impl Fn(&GlobalCoefficients) -> Result<GlobalCoefficients>,
) -> Result<(GlobalCoefficients, GmresOutcome)> {
    let op = FnOperator::new(rhs.as_slice().len(), |x: &[f64], y: &mut [f64]| {
        let u = ctx.from_vec(role, x.to_vec())?;
        y.copy_from_slice(apply(&u)?.as_slice());
        Ok(())
    });
    let out = gmres(&op, rhs.as_slice(), precond.as_deref(), &settings.gmres())?;
    let solution = ctx.from_vec(role, out.solution.clone())?;
    Ok((solution, out))
}

/// Per-sphere deviation `|[ν]_00 - (4π/κ0) [σ_f]_00|`, largest over spheres.
pub fn charge_sum_deviation(ctx: &OperatorContext, nu: &GlobalCoefficients, sigma_f: &GlobalCoefficients) -> (usize, f64) {
    let scale = 4.0 * PI / ctx.kappa0();
    (0..ctx.n_spheres())
        .map(|i| (i, (nu.get(i, 0, 0) - scale * sigma_f.get(i, 0, 0)).abs()))
        .fold((0, 0.0), |best, x| if x.1 > best.1 { x } else { best })
}

fn assert_charge_sum(ctx: &OperatorContext, nu: &GlobalCoefficients, sigma_f: &GlobalCoefficients) -> Result<()> {
    let (sphere, deviation) = charge_sum_deviation(ctx, nu, sigma_f);
    let scale = 4.0 * PI / ctx.kappa0() * sigma_f.coefficient_norm();
    if deviation > CHARGE_SUM_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::ChargeSumRule { sphere, deviation });
    }
    Ok(())
}

/// Solves for the induced charge `ν` with the formulation in `settings`.
///
/// With [`Formulation::Potential`] the potential system is solved and `ν` recovered from it.
pub fn solve_induced_charge(
    ctx: &OperatorContext,
    sigma_f: &GlobalCoefficients,
    settings: &SolverSettings,
) -> Result<SolveReport> {
    settings.validate()?;
    let start = Instant::now();
    let sigma = rhs_density(ctx, sigma_f)?;
    let (nu, out) = match settings.formulation {
        Formulation::InducedCharge => {
            let rhs = (4.0 * PI / ctx.kappa0()) * &sigma;
            let pre = settings.jacobi.then(|| jacobi_diagonal(ctx, ctx.contrast(), 0.0));
            run_gmres(ctx, Role::Density, &rhs, pre, settings, |u| ctx.apply_a_star(u))?
        }
        Formulation::SecondKind => {
            let mut rhs = (4.0 * PI / ctx.kappa0()) * &sigma;
            rhs.scale_spheres(&ctx.second_kind_scaling());
            let pre = settings
                .jacobi
                .then(|| jacobi_diagonal(ctx, &ctx.second_kind_contrast(), 0.5));
            run_gmres(ctx, Role::Density, &rhs, pre, settings, |u| ctx.apply_second_kind(u))?
        }
        Formulation::Potential => {
            let report = solve_potential_form(ctx, &sigma, settings)?;
            let nu = recover_density(ctx, &report.solution, &sigma)?;
            assert_charge_sum(ctx, &nu, &sigma)?;
            return Ok(SolveReport {
                solution: nu,
                wall_time: start.elapsed(),
                ..report
            });
        }
    };
    assert_charge_sum(ctx, &nu, &sigma)?;
    let energy = ctx.energy(&sigma, &nu)?;
    Ok(SolveReport {
        solution: nu,
        formulation: settings.formulation,
        iterations: out.iterations,
        residual_history: out.residuals,
        final_residual: out.final_residual,
        energy,
        wall_time: start.elapsed(),
    })
}

/// Solves `A λ = (4π/κ0) V σ_f`; the report holds `λ` and the energy of the recovered charge.
pub fn solve_potential_form(
    ctx: &OperatorContext,
    sigma_f: &GlobalCoefficients,
    settings: &SolverSettings,
) -> Result<SolveReport> {
    settings.validate()?;
    let start = Instant::now();
    let sigma = rhs_density(ctx, sigma_f)?;
    let rhs = (4.0 * PI / ctx.kappa0()) * &ctx.apply_v(&sigma)?;
    let pre = settings.jacobi.then(|| jacobi_diagonal(ctx, ctx.contrast(), 0.0));
    let (lam, out) = run_gmres(ctx, Role::Trace, &rhs, pre, settings, |u| ctx.apply_a(u))?;
    let nu = recover_density(ctx, &lam, &sigma)?;
    let energy = ctx.energy(&sigma, &nu)?;
    Ok(SolveReport {
        solution: lam,
        formulation: Formulation::Potential,
        iterations: out.iterations,
        residual_history: out.residuals,
        final_residual: out.final_residual,
        energy,
        wall_time: start.elapsed(),
    })
}

/// `ν = ((κ0 - κ)/κ0) DtN λ + (4π/κ0) σ_f`.
pub fn recover_density(
    ctx: &OperatorContext,
    lam: &GlobalCoefficients,
    sigma_f: &GlobalCoefficients,
) -> Result<GlobalCoefficients> {
    let mut nu = ctx.apply_dtn(lam)?;
    nu.scale_spheres(ctx.contrast());
    let sigma = rhs_density(ctx, sigma_f)?;
    let sigma = if lam.ell_max() == ctx.ell_max() {
        sigma
    } else {
        sigma.resized(lam.ell_max())
    };
    nu.axpy(4.0 * PI / ctx.kappa0(), &sigma)?;
    Ok(nu)
}

/// Recomputes the true relative residual of `report` for its formulation.
pub fn residual_certificate(ctx: &OperatorContext, sigma_f: &GlobalCoefficients, report: &SolveReport) -> Result<f64> {
    let sigma = rhs_density(ctx, sigma_f)?;
    let k = 4.0 * PI / ctx.kappa0();
    let (lhs, rhs) = match report.formulation {
        Formulation::InducedCharge => (ctx.apply_a_star(&report.solution)?, k * &sigma),
        Formulation::SecondKind => {
            let mut rhs = k * &sigma;
            rhs.scale_spheres(&ctx.second_kind_scaling());
            (ctx.apply_second_kind(&report.solution)?, rhs)
        }
        Formulation::Potential => {
            if report.solution.role() == Role::Trace {
                (ctx.apply_a(&report.solution)?, k * &ctx.apply_v(&sigma)?)
            } else {
                return Err(Error::InvalidParameter(
                    "the certificate of a potential solve needs the potential, not the recovered charge".into(),
                ));
            }
        }
    };
    let b = rhs.coefficient_norm();
    Ok((&rhs - &lhs).coefficient_norm() / b.max(f64::MIN_POSITIVE))
}
