//! Self-similar change of variables for extreme modulation values.
//!
//! Solving the modulated eigenproblem directly degrades once the modulation
//! pushes the profile far outside a fixed truncation window. Dilating sizes
//! by a power of the modulation maps the problem onto one whose coefficients
//! stay order-one, solve that, and scale the eigenvalue back exactly. The
//! dilated coefficients converge to pure powers as the modulation goes to
//! its limit, so the same machinery also produces the limiting profiles.

use crate::coefficients::{KernelModel, Limit, ModulationMode, ProblemSpec, RateModel};
use crate::eigensolver::{solve_adaptive, AdaptiveSolve, IterationConfig};
use crate::error::{Error, Result};
use crate::grid::{build_discrete_problem, DiscreteProblem, Grid};

/// Dilation exponent k = 1/(1 + gamma - nu) for transport exponent nu and
/// division exponent gamma at the relevant end. Nonpositive 1 + gamma - nu
/// means the regime has no self-similar scale and is rejected.
pub fn dilation_exponent(nu: f64, gamma: f64) -> Result<f64> {
    let d = 1.0 + gamma - nu;
    if d <= 0.0 || !d.is_finite() {
        return Err(Error::IllPosed(d));
    }
    Ok(1.0 / d)
}

/// Which end a dilation targets and the exponents that drive it. In
/// polymerization mode the dilation parameter is the modulation itself; in
/// fragmentation mode it is its reciprocal (equivalently, the dilation runs
/// with exponent -k in the raw parameter).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DilationPlan {
    pub limit: Limit,
    /// Transport exponent at `limit`.
    pub nu: f64,
    /// Division exponent at `limit`.
    pub gamma: f64,
    /// 1/(1 + gamma - nu).
    pub k: f64,
    pub mode: ModulationMode,
}

fn limit_name(limit: Limit) -> &'static str {
    match limit {
        Limit::Zero => "zero",
        Limit::Infinity => "infinity",
    }
}

/// Dilation parameter: sizes shrink toward zero when this is below one.
fn effective_dilation(spec: &ProblemSpec) -> f64 {
    match spec.mode {
        ModulationMode::Polymerization => spec.modulation,
        ModulationMode::Fragmentation => 1.0 / spec.modulation,
    }
}

impl DilationPlan {
    /// Plan targeting an explicit end, with exponents read off the spec.
    pub fn at_limit(spec: &ProblemSpec, limit: Limit) -> Result<DilationPlan> {
        let nu = spec.tau.exponent_at(limit).ok_or_else(|| {
            Error::Config(format!(
                "transport rate has no declared exponent at the {} end",
                limit_name(limit)
            ))
        })?;
        let gamma = spec.beta.exponent_at(limit).ok_or_else(|| {
            Error::Config(format!(
                "division rate has no declared exponent at the {} end",
                limit_name(limit)
            ))
        })?;
        let k = dilation_exponent(nu, gamma)?;
        Ok(DilationPlan { limit, nu, gamma, k, mode: spec.mode })
    }

    /// Plan for the regime the spec's own modulation value implies: dilation
    /// parameter at or below one targets the zero end, above one infinity.
    pub fn for_spec(spec: &ProblemSpec) -> Result<DilationPlan> {
        let limit =
            if effective_dilation(spec) <= 1.0 { Limit::Zero } else { Limit::Infinity };
        DilationPlan::at_limit(spec, limit)
    }
}

/// Closed-form dilation of one rate: the result evaluates to
/// `alpha^(-k e) * rate(alpha^k x)` exactly, where `e` is the rate's power
/// exponent at the targeted end. Rates that are pure powers with that
/// exponent come back unchanged.
pub fn dilate_rate(rate: &RateModel, alpha: f64, k: f64, e: f64) -> Result<RateModel> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Config(format!("dilation parameter must be positive, got {alpha}")));
    }
    match rate {
        RateModel::PowerLaw { prefactor, exponent } => {
            RateModel::power_law(prefactor * alpha.powf(k * (exponent - e)), *exponent)
        }
        RateModel::RationalPower { a, p, c, b, q } => RateModel::rational_power(
            a * alpha.powf(k * (p - e)),
            *p,
            *c,
            b * alpha.powf(k * q),
            *q,
        ),
        RateModel::OffsetPower { offset, scale, exponent } => RateModel::offset_power(
            offset * alpha.powf(-k * e),
            scale * alpha.powf(k * (exponent - e)),
            *exponent,
        ),
        RateModel::Tabulated { samples, tail_zero, tail_infinity } => {
            let sx = alpha.powf(-k);
            let sf = alpha.powf(-k * e);
            RateModel::tabulated(
                samples.iter().map(|&(x, f)| (x * sx, f * sf)).collect(),
                *tail_zero,
                *tail_infinity,
            )
        }
    }
}

fn check_plan(spec: &ProblemSpec, plan: &DilationPlan) -> Result<()> {
    if plan.mode != spec.mode {
        return Err(Error::Config("dilation plan was built for the other modulation mode".into()));
    }
    let expected =
        if effective_dilation(spec) <= 1.0 { Limit::Zero } else { Limit::Infinity };
    if plan.limit != expected {
        return Err(Error::Config(format!(
            "plan targets the {} end but the modulation value implies the {} end",
            limit_name(plan.limit),
            limit_name(expected)
        )));
    }
    let fresh = DilationPlan::at_limit(spec, plan.limit)?;
    if plan.nu != fresh.nu || plan.gamma != fresh.gamma || plan.k != fresh.k {
        return Err(Error::Config(format!(
            "plan exponents (nu={}, gamma={}, k={}) do not match the spec (nu={}, gamma={}, k={})",
            plan.nu, plan.gamma, plan.k, fresh.nu, fresh.gamma, fresh.k
        )));
    }
    Ok(())
}

/// The dilated, modulation-free spec whose eigenvalue is theta. Homogeneous
/// kernels are invariant under the dilation, so the kernel carries over.
pub fn rescale_spec(spec: &ProblemSpec, plan: &DilationPlan) -> Result<ProblemSpec> {
    check_plan(spec, plan)?;
    let alpha = effective_dilation(spec);
    let tau = dilate_rate(&spec.tau, alpha, plan.k, plan.nu)?;
    let beta = dilate_rate(&spec.beta, alpha, plan.k, plan.gamma)?;
    ProblemSpec::new(tau, beta, spec.kernel.clone(), spec.mode, 1.0)
}

/// Discretization of the rescaled problem on `grid`.
pub fn build_rescaled_problem(
    spec: &ProblemSpec,
    plan: &DilationPlan,
    grid: Grid,
) -> Result<DiscreteProblem> {
    build_discrete_problem(&rescale_spec(spec, plan)?, grid)
}

/// Maps a rescaled eigenvalue theta back to the eigenvalue of the modulated
/// problem: parameter^(gamma k) theta in polymerization mode,
/// parameter^((1 - nu) k) theta in fragmentation mode.
pub fn recover_eigenvalue(theta: f64, parameter: f64, plan: &DilationPlan) -> f64 {
    let power = match plan.mode {
        ModulationMode::Polymerization => plan.gamma * plan.k,
        ModulationMode::Fragmentation => (1.0 - plan.nu) * plan.k,
    };
    parameter.powf(power) * theta
}

/// The pure-power spec the rescaled coefficients tend to: transport
/// tau_bar x^nu, division beta_bar x^gamma, same kernel. Solving it gives
/// the limit pair (v_inf, theta_inf). Prefactor/exponent combinations that
/// break the structural assumptions are rejected exactly like any other
/// spec.
pub fn limit_profile_spec(
    plan: &DilationPlan,
    tau_bar: f64,
    beta_bar: f64,
    kernel: KernelModel,
) -> Result<ProblemSpec> {
    ProblemSpec::new(
        RateModel::power_law(tau_bar, plan.nu)?,
        RateModel::power_law(beta_bar, plan.gamma)?,
        kernel,
        plan.mode,
        1.0,
    )
}

/// Discretization of the limit problem on `grid`.
pub fn limit_profile_problem(
    plan: &DilationPlan,
    tau_bar: f64,
    beta_bar: f64,
    kernel: KernelModel,
    grid: Grid,
) -> Result<DiscreteProblem> {
    build_discrete_problem(&limit_profile_spec(plan, tau_bar, beta_bar, kernel)?, grid)
}

/// A solved rescaled problem together with the recovered eigenvalue of the
/// original modulated problem. `run` holds the dilated discrete problem and
/// its unit-mass profile, so invariant checks can audit what was actually
/// solved.
#[derive(Debug, Clone)]
pub struct RescaledSolution {
    /// Eigenvalue of the rescaled problem.
    pub theta: f64,
    pub plan: DilationPlan,
    /// The raw modulation value the plan was built for.
    pub parameter: f64,
    /// recover_eigenvalue(theta, parameter, plan).
    pub lambda: f64,
    pub run: AdaptiveSolve,
}

impl RescaledSolution {
    /// Rescaled profile, unit mass on its grid.
    pub fn v(&self) -> &[f64] {
        &self.run.solution.u
    }

    pub fn grid(&self) -> Grid {
        self.run.solution.grid
    }
}

/// Rescales, solves adaptively from `base`, and maps the eigenvalue back.
pub fn solve_rescaled(
    spec: &ProblemSpec,
    base: Grid,
    config: &IterationConfig,
    eps_tail: f64,
    max_doublings: usize,
) -> Result<RescaledSolution> {
    let plan = DilationPlan::for_spec(spec)?;
    let rescaled = rescale_spec(spec, &plan)?;
    let run = solve_adaptive(&rescaled, base, config, eps_tail, max_doublings)?;
    let theta = run.solution.lambda;
    let lambda = recover_eigenvalue(theta, spec.modulation, &plan);
    Ok(RescaledSolution { theta, plan, parameter: spec.modulation, lambda, run })
}
