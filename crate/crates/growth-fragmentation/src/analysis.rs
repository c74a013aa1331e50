//! Parameter studies built on top of the solver: eigenvalue sweeps over the
//! modulation, asymptotic limit checks, critical expansions near the
//! unmodulated problem, and the two application drivers (steady states of
//! the nucleated-polymerization model, fragmentation-intensity tuning).
//!
//! Every routine here evaluates eigenvalues through one policy: modulation
//! values inside [0.1, 10] are solved directly on an adaptively grown grid,
//! values outside are solved in dilated variables and mapped back. The limit
//! and expansion checks always take the dilated route, since that is the
//! regime they probe.

use crate::coefficients::{Limit, ModulationMode, ProblemSpec};
use crate::eigensolver::{
    solve_adaptive, verify_solution, AdaptiveSolve, IterationConfig, DEFAULT_MAX_DOUBLINGS,
    DEFAULT_TAIL_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::rescale::{limit_profile_spec, solve_rescaled, DilationPlan};

/// Modulation range solved in the original variables.
pub const DIRECT_WINDOW: (f64, f64) = (0.1, 10.0);

/// Scan resolution used by the steady-state and sonication drivers.
pub const DRIVER_SCAN_POINTS: usize = 33;

/// Relative bisection tolerance for steady-state roots.
pub const STEADY_ROOT_TOLERANCE: f64 = 1e-4;

/// Log-spaced grid of `n` points from `lo` to `hi`, both included exactly.
/// Interior points are 10^(log10(lo) + i * step) with a single precomputed
/// step, so decade-aligned interior points land on exact values.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0) || !lo.is_finite() || !hi.is_finite() || hi <= lo {
        return Err(Error::Config(format!(
            "log grid needs finite 0 < lo < hi, got [{lo}, {hi}]"
        )));
    }
    if n < 2 {
        return Err(Error::Config(format!("log grid needs at least 2 points, got {n}")));
    }
    let lo10 = lo.log10();
    let hi10 = hi.log10();
    let step = (hi10 - lo10) / (n - 1) as f64;
    let mut out: Vec<f64> = (0..n).map(|i| 10f64.powf(lo10 + i as f64 * step)).collect();
    out[0] = lo;
    out[n - 1] = hi;
    Ok(out)
}

fn inside_window(p: f64) -> bool {
    (DIRECT_WINDOW.0..=DIRECT_WINDOW.1).contains(&p)
}

/// One eigenvalue evaluation under the window policy. `run` holds whatever
/// problem was actually solved (the original one, or the dilated one when
/// `rescaled` is set), so its solution can be audited.
#[derive(Debug, Clone)]
pub struct EvaluatedPoint {
    pub parameter: f64,
    /// Eigenvalue of the modulated problem.
    pub lambda: f64,
    /// Eigenvalue of the dilated problem, when the rescaled route ran.
    pub theta: Option<f64>,
    pub rescaled: bool,
    pub run: AdaptiveSolve,
}

/// Eigenvalue of the family member at modulation `p`, solved directly inside
/// the window and through the dilation outside it.
pub fn eigenvalue_at(
    template: &ProblemSpec,
    p: f64,
    base: Grid,
    config: &IterationConfig,
) -> Result<EvaluatedPoint> {
    let spec = template.with_modulation(p)?;
    if inside_window(p) {
        let run = solve_adaptive(&spec, base, config, DEFAULT_TAIL_TOLERANCE, DEFAULT_MAX_DOUBLINGS)?;
        let lambda = run.solution.lambda;
        Ok(EvaluatedPoint { parameter: p, lambda, theta: None, rescaled: false, run })
    } else {
        let rs = solve_rescaled(&spec, base, config, DEFAULT_TAIL_TOLERANCE, DEFAULT_MAX_DOUBLINGS)?;
        Ok(EvaluatedPoint {
            parameter: p,
            lambda: rs.lambda,
            theta: Some(rs.theta),
            rescaled: true,
            run: rs.run,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremumKind {
    Maximum,
    Minimum,
}

/// An interior extremum of a sweep, located by a sign change of the first
/// differences.
#[derive(Debug, Clone, Copy)]
pub struct Extremum {
    /// Index into the sweep's sample vector.
    pub index: usize,
    pub parameter: f64,
    pub value: f64,
    pub kind: ExtremumKind,
}

/// One sweep sample. `lambda` is `None` when the solver did not converge at
/// this parameter; the curve then simply has a gap there.
#[derive(Debug, Clone)]
pub struct SweepSample {
    pub parameter: f64,
    pub lambda: Option<f64>,
    pub theta: Option<f64>,
    pub rescaled: bool,
    pub iterations: usize,
    pub doublings: usize,
    pub tail_resolved: bool,
    /// Truncation radius and size of the grid that produced the value.
    pub r: f64,
    pub n: usize,
    /// Outcome of the invariant audit, absent for gap samples.
    pub audit_ok: Option<bool>,
    /// Identifiers of failed audit checks, empty when the audit passed.
    pub audit_failures: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SweepCurve {
    pub mode: ModulationMode,
    pub samples: Vec<SweepSample>,
    pub extrema: Vec<Extremum>,
    /// True when the first differences of the converged samples never change
    /// sign (flat stretches count as monotone).
    pub monotone: bool,
}

/// Sweeps the eigenvalue over the given modulation values. Non-convergence
/// at a sample leaves a gap; any other failure aborts the sweep.
pub fn sweep_eigenvalue(
    template: &ProblemSpec,
    params: &[f64],
    base: Grid,
    config: &IterationConfig,
) -> Result<SweepCurve> {
    if params.is_empty() {
        return Err(Error::Config("sweep needs at least one parameter value".into()));
    }
    let mut samples = Vec::with_capacity(params.len());
    for &p in params {
        match eigenvalue_at(template, p, base, config) {
            Ok(pt) => {
                let audit = verify_solution(&pt.run.problem, &pt.run.solution)?;
                samples.push(SweepSample {
                    parameter: p,
                    lambda: Some(pt.lambda),
                    theta: pt.theta,
                    rescaled: pt.rescaled,
                    iterations: pt.run.total_iterations,
                    doublings: pt.run.doublings,
                    tail_resolved: pt.run.tail_resolved,
                    r: pt.run.solution.grid.r(),
                    n: pt.run.solution.grid.n(),
                    audit_ok: Some(audit.pass()),
                    audit_failures: audit.failures().map(|c| c.id.to_string()).collect(),
                });
            }
            Err(Error::NoConvergence { iterations, .. }) => samples.push(SweepSample {
                parameter: p,
                lambda: None,
                theta: None,
                rescaled: !inside_window(p),
                iterations,
                doublings: 0,
                tail_resolved: false,
                r: base.r(),
                n: base.n(),
                audit_ok: None,
                audit_failures: Vec::new(),
            }),
            Err(e) => return Err(e),
        }
    }
    let (extrema, monotone) = detect_extrema(&samples);
    Ok(SweepCurve { mode: template.mode, samples, extrema, monotone })
}

/// Interior extrema and monotonicity from first-difference sign changes over
/// the converged samples. Differences below 1e-12 of the curve scale count
/// as flat, so numerically constant curves report no extrema.
fn detect_extrema(samples: &[SweepSample]) -> (Vec<Extremum>, bool) {
    let pts: Vec<(usize, f64)> = samples
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.lambda.map(|l| (i, l)))
        .collect();
    if pts.len() < 2 {
        return (Vec::new(), true);
    }
    let scale = pts.iter().fold(0.0_f64, |m, p| m.max(p.1.abs()));
    let flat = 1e-12 * scale;
    let signs: Vec<i8> = pts
        .windows(2)
        .map(|w| {
            let d = w[1].1 - w[0].1;
            if d > flat {
                1
            } else if d < -flat {
                -1
            } else {
                0
            }
        })
        .collect();
    let mut extrema = Vec::new();
    let mut monotone = true;
    let mut prev: Option<(usize, i8)> = None;
    for (j, &s) in signs.iter().enumerate() {
        if s == 0 {
            continue;
        }
        if let Some((pj, ps)) = prev {
            if ps != s {
                monotone = false;
                // candidates sit between the two difference runs; a plateau
                // at the turn contributes several
                let (kind, best) = if ps > 0 {
                    let b = (pj + 1..=j).max_by(|&a, &b| pts[a].1.total_cmp(&pts[b].1));
                    (ExtremumKind::Maximum, b)
                } else {
                    let b = (pj + 1..=j).min_by(|&a, &b| pts[a].1.total_cmp(&pts[b].1));
                    (ExtremumKind::Minimum, b)
                };
                let at = best.expect("non-empty candidate range");
                let (index, value) = pts[at];
                extrema.push(Extremum {
                    index,
                    parameter: samples[index].parameter,
                    value,
                    kind,
                });
            }
        }
        prev = Some((j, s));
    }
    (extrema, monotone)
}

/// Outcome of probing one end of the modulation range against the predicted
/// asymptotics. Exactly one of the three groups of optional fields is
/// populated: slope fields when the eigenvalue should vanish, gap fields
/// when it should approach a finite value, `diverges` when it should blow
/// up.
#[derive(Debug, Clone)]
pub struct LimitLawReport {
    pub mode: ModulationMode,
    pub param_limit: Limit,
    /// The size-space end the profile concentrates at: same end as the
    /// parameter limit under polymerization, opposite under fragmentation.
    pub size_limit: Limit,
    /// Predicted eigenvalue limit; `None` means predicted divergence.
    pub predicted_limit: Option<f64>,
    /// (modulation, eigenvalue) for the probe sequence, all solved in
    /// dilated variables.
    pub samples: Vec<(f64, f64)>,
    pub empirical_slope: Option<f64>,
    pub theory_slope: Option<f64>,
    /// One-sided: the measured decay must be at least as fast as predicted,
    /// with 0.05 absolute slack on the exponent.
    pub slope_ok: Option<bool>,
    /// |eigenvalue - limit| per sample, for the finite-limit case.
    pub gaps: Vec<f64>,
    pub approach_monotone: Option<bool>,
    pub diverges: Option<bool>,
}

fn opposite(limit: Limit) -> Limit {
    match limit {
        Limit::Zero => Limit::Infinity,
        Limit::Infinity => Limit::Zero,
    }
}

fn limit_name(limit: Limit) -> &'static str {
    match limit {
        Limit::Zero => "zero",
        Limit::Infinity => "infinity",
    }
}

/// Probes the eigenvalue along a modulation sequence toward `param_limit`
/// and compares against the predicted limit: the division rate's limit at
/// the concentration end (polymerization) or the limit of tau(x)/x there
/// (fragmentation). A vanishing prediction is checked through the decay
/// exponent, a finite one through the gap sequence, a divergent one through
/// growth of the values.
pub fn check_limit_law(
    template: &ProblemSpec,
    param_limit: Limit,
    base: Grid,
    config: &IterationConfig,
) -> Result<LimitLawReport> {
    let mode = template.mode;
    let size_limit = match mode {
        ModulationMode::Polymerization => param_limit,
        ModulationMode::Fragmentation => opposite(param_limit),
    };
    // exponent of the quantity the eigenvalue chases at the size limit
    let e_q = match mode {
        ModulationMode::Polymerization => template.beta.exponent_at(size_limit),
        ModulationMode::Fragmentation => template.tau.exponent_at(size_limit).map(|nu| nu - 1.0),
    }
    .ok_or_else(|| {
        Error::Config(format!(
            "rates have no declared behavior at the {} end",
            limit_name(size_limit)
        ))
    })?;
    let vanishes = match size_limit {
        Limit::Zero => e_q > 0.0,
        Limit::Infinity => e_q < 0.0,
    };
    let predicted = if vanishes {
        Some(0.0)
    } else if e_q == 0.0 {
        let v_q = match mode {
            ModulationMode::Polymerization => template.beta.prefactor_at(size_limit),
            ModulationMode::Fragmentation => template.tau.prefactor_at(size_limit),
        }
        .ok_or_else(|| {
            Error::Config(format!(
                "rates have no declared prefactor at the {} end",
                limit_name(size_limit)
            ))
        })?;
        Some(v_q)
    } else {
        None
    };

    let deep = vanishes;
    let params: Vec<f64> = match (param_limit, deep) {
        (Limit::Zero, false) => vec![1e-1, 1e-2, 1e-3],
        (Limit::Zero, true) => vec![1e-4, 1e-5, 1e-6],
        (Limit::Infinity, false) => vec![1e1, 1e2, 1e3],
        (Limit::Infinity, true) => vec![1e4, 1e5, 1e6],
    };
    let mut samples = Vec::with_capacity(params.len());
    for &p in &params {
        let spec = template.with_modulation(p)?;
        let rs = solve_rescaled(&spec, base, config, DEFAULT_TAIL_TOLERANCE, DEFAULT_MAX_DOUBLINGS)?;
        samples.push((p, rs.lambda));
    }

    let mut report = LimitLawReport {
        mode,
        param_limit,
        size_limit,
        predicted_limit: predicted,
        samples: samples.clone(),
        empirical_slope: None,
        theory_slope: None,
        slope_ok: None,
        gaps: Vec::new(),
        approach_monotone: None,
        diverges: None,
    };
    match predicted {
        Some(0.0) => {
            if samples.iter().any(|&(_, l)| !(l > 0.0)) {
                return Err(Error::Oracle(
                    "eigenvalue lost positivity along the limit sequence".into(),
                ));
            }
            let xs: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
            let ys: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
            let (slope, _) = fit_line(&xs, &ys);
            let plan = DilationPlan::at_limit(template, size_limit)?;
            let theory = match mode {
                ModulationMode::Polymerization => plan.gamma * plan.k,
                ModulationMode::Fragmentation => (1.0 - plan.nu) * plan.k,
            };
            report.empirical_slope = Some(slope);
            report.theory_slope = Some(theory);
            report.slope_ok = Some(if theory > 0.0 {
                slope >= theory - 0.05
            } else {
                slope <= theory + 0.05
            });
        }
        Some(c) => {
            report.gaps = samples.iter().map(|&(_, l)| (l - c).abs()).collect();
            report.approach_monotone =
                Some(report.gaps.windows(2).all(|w| w[1] < w[0]));
        }
        None => {
            let grows = samples.windows(2).all(|w| w[1].1 > w[0].1)
                && samples.last().unwrap().1 >= 10.0 * samples[0].1;
            report.diverges = Some(grows);
        }
    }
    Ok(report)
}

/// Declared first-order expansion of the rate that stays order one at small
/// sizes: division rate leading + correction x^exponent under
/// polymerization, transport rate x (leading + correction x^exponent) under
/// fragmentation.
#[derive(Debug, Clone, Copy)]
pub struct CriticalExpansion {
    /// Positive constant term; must match the spec's own prefactor.
    pub leading: f64,
    /// Coefficient of the first correction, any sign but nonzero.
    pub correction: f64,
    /// Positive exponent of the first correction.
    pub correction_exponent: f64,
}

/// Measured first-order behavior of the eigenvalue near the critical
/// (unmodulated-limit) value, fitted in log-log coordinates against the
/// dilation prediction.
#[derive(Debug, Clone)]
pub struct ExpansionReport {
    pub mode: ModulationMode,
    /// Eigenvalue of the limit problem, measured on its own adapted grid.
    pub theta_limit: f64,
    pub limit_grid: Grid,
    /// (modulation, signed correction) with the declared correction sign
    /// divided out, so all entries are positive.
    pub samples: Vec<(f64, f64)>,
    pub fitted_exponent: f64,
    pub fitted_prefactor: f64,
    pub theory_exponent: f64,
    /// Correction magnitude times the matching moment of the limit profile.
    pub theory_prefactor: f64,
    /// |fitted - theory| within 5% of |theory| on the exponent.
    pub exponent_ok: bool,
}

fn moment(u: &[f64], grid: Grid, e: f64) -> f64 {
    let dx = grid.dx();
    dx * u
        .iter()
        .enumerate()
        .map(|(i, &v)| grid.node(i).powf(e) * v)
        .sum::<f64>()
}

/// Fits the leading correction of the eigenvalue near the critical point:
/// modulation to zero under polymerization, to infinity under fragmentation.
/// The declared expansion must match the spec (constant division limit,
/// respectively asymptotically linear transport, equal to `leading`), and
/// the measured corrections must keep the declared sign.
pub fn fit_critical_expansion(
    template: &ProblemSpec,
    decl: &CriticalExpansion,
    base: Grid,
    config: &IterationConfig,
) -> Result<ExpansionReport> {
    if !(decl.leading > 0.0) || !decl.leading.is_finite() {
        return Err(Error::Config(format!(
            "expansion leading term must be positive, got {}",
            decl.leading
        )));
    }
    if decl.correction == 0.0 || !decl.correction.is_finite() {
        return Err(Error::Config("expansion correction term must be nonzero".into()));
    }
    if !(decl.correction_exponent > 0.0) || !decl.correction_exponent.is_finite() {
        return Err(Error::Config(format!(
            "expansion correction exponent must be positive, got {}",
            decl.correction_exponent
        )));
    }
    let mode = template.mode;
    let plan = DilationPlan::at_limit(template, Limit::Zero)?;
    let declared_prefactor = match mode {
        ModulationMode::Polymerization => {
            if plan.gamma.abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "division rate must approach a positive constant at zero size, \
                     its exponent there is {}",
                    plan.gamma
                )));
            }
            template.beta.prefactor_at(Limit::Zero)
        }
        ModulationMode::Fragmentation => {
            if (plan.nu - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "transport rate must be asymptotically linear at zero size, \
                     its exponent there is {}",
                    plan.nu
                )));
            }
            template.tau.prefactor_at(Limit::Zero)
        }
    }
    .ok_or_else(|| Error::Config("rates have no declared prefactor at the zero end".into()))?;
    if (declared_prefactor - decl.leading).abs() > 1e-9 * decl.leading.abs() {
        return Err(Error::Config(format!(
            "declared leading term {} disagrees with the spec's zero-size prefactor {}",
            decl.leading, declared_prefactor
        )));
    }

    let params: Vec<f64> = match mode {
        ModulationMode::Polymerization => log_grid(1e-3, 1e-1, 7)?,
        ModulationMode::Fragmentation => vec![30.0, 100.0, 300.0],
    };
    let mut thetas = Vec::with_capacity(params.len());
    for &p in &params {
        let spec = template.with_modulation(p)?;
        let rs = solve_rescaled(&spec, base, config, DEFAULT_TAIL_TOLERANCE, DEFAULT_MAX_DOUBLINGS)?;
        thetas.push(rs.theta);
    }

    let tau_bar = template
        .tau
        .prefactor_at(Limit::Zero)
        .ok_or_else(|| Error::Config("transport rate has no declared prefactor at zero".into()))?;
    let beta_bar = template
        .beta
        .prefactor_at(Limit::Zero)
        .ok_or_else(|| Error::Config("division rate has no declared prefactor at zero".into()))?;
    let lp_spec = limit_profile_spec(&plan, tau_bar, beta_bar, template.kernel.clone())?;
    let lp = solve_adaptive(&lp_spec, base, config, DEFAULT_TAIL_TOLERANCE, DEFAULT_MAX_DOUBLINGS)?;
    let theta_limit = lp.solution.lambda;
    let limit_grid = lp.solution.grid;

    let sign = decl.correction.signum();
    let mut samples = Vec::with_capacity(params.len());
    for (&p, &th) in params.iter().zip(&thetas) {
        let corr = (th - theta_limit) * sign;
        if !(corr > 0.0) || !corr.is_finite() {
            return Err(Error::Oracle(format!(
                "measured correction at modulation {p} is {corr:e}, inconsistent with the \
                 declared expansion"
            )));
        }
        samples.push((p, corr));
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let (fitted_exponent, intercept) = fit_line(&xs, &ys);
    let fitted_prefactor = intercept.exp();

    let (theory_exponent, theory_prefactor) = match mode {
        ModulationMode::Polymerization => (
            plan.k * decl.correction_exponent,
            decl.correction.abs() * moment(&lp.solution.u, limit_grid, decl.correction_exponent),
        ),
        ModulationMode::Fragmentation => (
            -plan.k * (decl.correction_exponent - 1.0),
            decl.correction.abs() * moment(&lp.solution.u, limit_grid, decl.correction_exponent)
                / moment(&lp.solution.u, limit_grid, 1.0),
        ),
    };
    let exponent_ok = (fitted_exponent - theory_exponent).abs() <= 0.05 * theory_exponent.abs();

    Ok(ExpansionReport {
        mode,
        theta_limit,
        limit_grid,
        samples,
        fitted_exponent,
        fitted_prefactor,
        theory_exponent,
        theory_prefactor,
        exponent_ok,
    })
}

/// Ordinary least squares line through (xs, ys).
fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
    /// The disease-free growth rate sits on the clearance threshold to
    /// within rounding, so neither label is trustworthy.
    Marginal,
}

/// One nontrivial steady state of the coupled monomer-polymer system.
#[derive(Debug, Clone)]
pub struct SteadyRoot {
    /// Monomer level: the polymerization modulation at which the fitness
    /// equals the clearance rate.
    pub v: f64,
    /// Eigenvalue at `v` under the same windowed evaluation that located
    /// the root; equals the clearance rate up to the bisection tolerance.
    pub lambda: f64,
    /// Mass-weighted transport integral of the profile, with the
    /// modulation-free transport rate.
    pub integral_tau_u: f64,
    /// Polymer density sustaining the monomer balance at `v`.
    pub rho: f64,
    /// Unit-mass size profile at `v`, solved in the original variables.
    pub profile: Vec<f64>,
    pub grid: Grid,
}

/// Steady states of the nucleated-polymerization model with monomer influx
/// `xi`, monomer clearance `delta`, and polymer clearance `mu0`.
#[derive(Debug, Clone)]
pub struct SteadyStateReport {
    pub mu0: f64,
    pub xi: f64,
    pub delta: f64,
    /// Disease-free monomer level xi / delta.
    pub v_bar: f64,
    pub lambda_at_v_bar: f64,
    /// (monomer level, eigenvalue) over the scan grid.
    pub scan: Vec<(f64, f64)>,
    /// Strict sign changes of eigenvalue minus mu0 over the scan; equals
    /// the number of roots reported.
    pub sign_changes: usize,
    pub roots: Vec<SteadyRoot>,
    pub disease_free: Stability,
}

/// Locates the monomer levels at which the polymer growth rate balances the
/// clearance rate `mu0`, scanning V in [1e-3, v_bar) on a log grid and
/// bisecting each strict sign change. Each root gets a direct solve in the
/// original variables for its profile and the polymer density it sustains.
pub fn find_disease_steady_states(
    template: &ProblemSpec,
    mu0: f64,
    xi: f64,
    delta: f64,
    base: Grid,
    config: &IterationConfig,
) -> Result<SteadyStateReport> {
    if template.mode != ModulationMode::Polymerization {
        return Err(Error::Config(
            "steady states are defined for the polymerization-modulated family".into(),
        ));
    }
    for (name, v) in [("mu0", mu0), ("xi", xi), ("delta", delta)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
    }
    let v_bar = xi / delta;
    // stay strictly below v_bar: at v_bar the monomer balance supports no
    // polymer mass
    let hi = v_bar * (1.0 - 1e-12);
    if hi <= 1e-3 {
        return Err(Error::Config(format!(
            "disease-free monomer level {v_bar} leaves no scan range above 1e-3"
        )));
    }
    let grid_v = log_grid(1e-3, hi, DRIVER_SCAN_POINTS)?;
    let mut scan = Vec::with_capacity(grid_v.len());
    for &v in &grid_v {
        let pt = eigenvalue_at(template, v, base, config)?;
        scan.push((v, pt.lambda));
    }

    // rounding-level equalities do not count as crossings, so numerically
    // flat curves report no roots instead of bisecting noise
    let excess = |l: f64| {
        let f = l - mu0;
        if f.abs() <= 1e-12 * mu0.abs().max(l.abs()) {
            0.0
        } else {
            f
        }
    };
    let mut roots = Vec::new();
    let mut sign_changes = 0;
    for w in scan.clone().windows(2) {
        let (va, fa) = (w[0].0, excess(w[0].1));
        let (vb, fb) = (w[1].0, excess(w[1].1));
        if fa * fb >= 0.0 {
            continue;
        }
        sign_changes += 1;
        let (mut a, mut fa, mut b) = (va, fa, vb);
        while (b - a) / b > STEADY_ROOT_TOLERANCE {
            let m = 0.5 * (a + b);
            let fm = eigenvalue_at(template, m, base, config)?.lambda - mu0;
            if fa * fm <= 0.0 {
                b = m;
            } else {
                a = m;
                fa = fm;
            }
        }
        let v = 0.5 * (a + b);
        let lambda = eigenvalue_at(template, v, base, config)?.lambda;

        // profile and polymer density from a direct solve in the original
        // size variable
        let spec_v = template.with_modulation(v)?;
        let run = solve_adaptive(&spec_v, base, config, DEFAULT_TAIL_TOLERANCE, DEFAULT_MAX_DOUBLINGS)?;
        let g = run.solution.grid;
        let dx = g.dx();
        let mut integral_tau_u = 0.0;
        for (i, &ui) in run.solution.u.iter().enumerate() {
            integral_tau_u += template.tau.eval(g.node(i))? * ui;
        }
        integral_tau_u *= dx;
        let rho = (xi / v - delta) / (v * integral_tau_u);
        roots.push(SteadyRoot {
            v,
            lambda,
            integral_tau_u,
            rho,
            profile: run.solution.u,
            grid: g,
        });
    }

    let lambda_at_v_bar = eigenvalue_at(template, v_bar, base, config)?.lambda;
    let disease_free = if (lambda_at_v_bar - mu0).abs()
        <= 1e-9 * mu0.abs().max(lambda_at_v_bar.abs())
    {
        Stability::Marginal
    } else if lambda_at_v_bar < mu0 {
        Stability::Stable
    } else {
        Stability::Unstable
    };

    Ok(SteadyStateReport {
        mu0,
        xi,
        delta,
        v_bar,
        lambda_at_v_bar,
        scan,
        sign_changes,
        roots,
        disease_free,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimumLocation {
    Interior,
    Boundary,
}

/// Fragmentation intensity maximizing the growth rate over [1, afrag_max].
#[derive(Debug, Clone)]
pub struct SonicationReport {
    pub afrag_opt: f64,
    pub lambda_opt: f64,
    pub location: OptimumLocation,
    /// Set when the admissible interval is too thin to scan.
    pub degenerate: bool,
    /// (intensity, eigenvalue) over the scan grid.
    pub scan: Vec<(f64, f64)>,
}

/// Scans the growth rate over fragmentation intensities in [1, afrag_max]
/// and refines an interior scan maximum by golden-section search to the
/// given relative tolerance. The result never falls below any scan sample.
pub fn optimize_sonication(
    template: &ProblemSpec,
    afrag_max: f64,
    rel_tol: f64,
    base: Grid,
    config: &IterationConfig,
) -> Result<SonicationReport> {
    if template.mode != ModulationMode::Fragmentation {
        return Err(Error::Config(
            "sonication tuning modulates fragmentation; the spec is polymerization-modulated"
                .into(),
        ));
    }
    if !(afrag_max >= 1.0) || !afrag_max.is_finite() {
        return Err(Error::Config(format!(
            "intensity bound must be at least 1, got {afrag_max}"
        )));
    }
    if !(rel_tol > 0.0) || !rel_tol.is_finite() {
        return Err(Error::Config(format!("relative tolerance must be positive, got {rel_tol}")));
    }
    if (afrag_max - 1.0) / afrag_max < 1e-9 {
        let pt = eigenvalue_at(template, afrag_max, base, config)?;
        return Ok(SonicationReport {
            afrag_opt: afrag_max,
            lambda_opt: pt.lambda,
            location: OptimumLocation::Boundary,
            degenerate: true,
            scan: vec![(afrag_max, pt.lambda)],
        });
    }

    let grid_a = log_grid(1.0, afrag_max, DRIVER_SCAN_POINTS)?;
    let mut scan = Vec::with_capacity(grid_a.len());
    for &a in &grid_a {
        let pt = eigenvalue_at(template, a, base, config)?;
        scan.push((a, pt.lambda));
    }
    let m = scan
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .expect("non-empty scan");
    if m == 0 || m == scan.len() - 1 {
        return Ok(SonicationReport {
            afrag_opt: scan[m].0,
            lambda_opt: scan[m].1,
            location: OptimumLocation::Boundary,
            degenerate: false,
            scan,
        });
    }

    // golden-section refinement inside the bracket around the scan maximum
    let mut best = scan[m];
    let mut eval = |a: f64| -> Result<f64> {
        let l = eigenvalue_at(template, a, base, config)?.lambda;
        if l > best.1 {
            best = (a, l);
        }
        Ok(l)
    };
    let phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let (mut a, mut b) = (grid_a[m - 1], grid_a[m + 1]);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    while (b - a) / b > rel_tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval(d)?;
        }
    }
    Ok(SonicationReport {
        afrag_opt: best.0,
        lambda_opt: best.1,
        location: OptimumLocation::Interior,
        degenerate: false,
        scan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{KernelModel, RateModel};
    use crate::grid::build_grid;

    fn base() -> Grid {
        build_grid(10.0, 400).unwrap()
    }

    fn constant_rates_frag() -> ProblemSpec {
        ProblemSpec::new(
            RateModel::power_law(1.0, 0.0).unwrap(),
            RateModel::power_law(2.0, 0.0).unwrap(),
            KernelModel::Uniform,
            ModulationMode::Fragmentation,
            1.0,
        )
        .unwrap()
    }

    fn sqrt_growth_poly() -> ProblemSpec {
        ProblemSpec::new(
            RateModel::power_law(1.0, 0.5).unwrap(),
            RateModel::power_law(2.0, 0.0).unwrap(),
            KernelModel::Uniform,
            ModulationMode::Polymerization,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn log_grid_hits_decades_exactly() {
        let g = log_grid(1e-3, 1e3, 25).unwrap();
        assert_eq!(g.len(), 25);
        assert_eq!(g[0], 1e-3);
        assert_eq!(g[8], 0.1);
        assert_eq!(g[12], 1.0);
        assert_eq!(g[16], 10.0);
        assert_eq!(g[24], 1e3);
        let g7 = log_grid(1e-3, 1e-1, 7).unwrap();
        assert_eq!(g7[3], 1e-2);

        assert!(matches!(log_grid(0.0, 1.0, 5), Err(Error::Config(_))));
        assert!(matches!(log_grid(2.0, 1.0, 5), Err(Error::Config(_))));
        assert!(matches!(log_grid(1.0, 2.0, 1), Err(Error::Config(_))));
    }

    fn samples_from(values: &[Option<f64>]) -> Vec<SweepSample> {
        values
            .iter()
            .enumerate()
            .map(|(i, &lambda)| SweepSample {
                parameter: (i + 1) as f64,
                lambda,
                theta: None,
                rescaled: false,
                iterations: 0,
                doublings: 0,
                tail_resolved: true,
                r: 10.0,
                n: 400,
                audit_ok: lambda.map(|_| true),
                audit_failures: Vec::new(),
            })
            .collect()
    }

    #[test]
    fn extrema_detection_on_synthetic_curves() {
        let (ex, mono) =
            detect_extrema(&samples_from(&[Some(1.0), Some(2.0), Some(3.0), Some(2.0)]));
        assert!(!mono);
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].index, 2);
        assert_eq!(ex[0].kind, ExtremumKind::Maximum);

        let (ex, mono) = detect_extrema(&samples_from(&[Some(3.0), Some(1.0), Some(2.0)]));
        assert!(!mono);
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].index, 1);
        assert_eq!(ex[0].kind, ExtremumKind::Minimum);

        let (ex, mono) = detect_extrema(&samples_from(&[Some(1.0), Some(2.0), Some(4.0)]));
        assert!(mono && ex.is_empty());

        // differences at rounding scale count as flat
        let (ex, mono) =
            detect_extrema(&samples_from(&[Some(1.0), Some(1.0 + 1e-15), Some(1.0)]));
        assert!(mono && ex.is_empty());

        // gaps are skipped, not treated as turning points
        let (ex, mono) = detect_extrema(&samples_from(&[Some(1.0), None, Some(3.0)]));
        assert!(mono && ex.is_empty());

        // plateau at the turn: the first of the tied samples is reported
        let (ex, _) = detect_extrema(&samples_from(&[
            Some(1.0),
            Some(2.0),
            Some(2.0 + 1e-16),
            Some(1.0),
        ]));
        assert_eq!(ex.len(), 1);
        assert!(ex[0].index == 1 || ex[0].index == 2);
    }

    #[test]
    fn sweep_constant_division_uses_both_routes() {
        // beta constant makes the eigenvalue equal the divided mass exactly,
        // so both the direct and the dilated route must return 2 * afrag
        let spec = constant_rates_frag();
        let params = [0.05, 0.5, 2.0, 50.0];
        let curve = sweep_eigenvalue(&spec, &params, base(), &IterationConfig::default()).unwrap();
        assert_eq!(curve.mode, ModulationMode::Fragmentation);
        let rescaled: Vec<bool> = curve.samples.iter().map(|s| s.rescaled).collect();
        assert_eq!(rescaled, vec![true, false, false, true]);
        for s in &curve.samples {
            let lam = s.lambda.unwrap();
            let expect = 2.0 * s.parameter;
            assert!(
                (lam - expect).abs() <= 1e-12 * expect,
                "afrag {}: {} vs {}",
                s.parameter,
                lam,
                expect
            );
            assert_eq!(s.audit_ok, Some(true), "audit failed: {:?}", s.audit_failures);
            assert!(s.tail_resolved);
        }
        assert!(curve.monotone);
        assert!(curve.extrema.is_empty());
    }

    #[test]
    fn window_boundaries_solve_directly() {
        // strong division keeps the profile compact at every probe, so each
        // evaluation is a single solve
        let spec = ProblemSpec::new(
            RateModel::power_law(1.0, 0.5).unwrap(),
            RateModel::power_law(1.0, 2.0).unwrap(),
            KernelModel::Uniform,
            ModulationMode::Polymerization,
            1.0,
        )
        .unwrap();
        let cfg = IterationConfig::default();
        for p in [0.1, 10.0] {
            let pt = eigenvalue_at(&spec, p, base(), &cfg).unwrap();
            assert!(!pt.rescaled, "parameter {p} left the window");
            assert!(pt.theta.is_none());
            assert!(pt.lambda > 0.0);
        }
        for p in [0.0999, 10.001] {
            let pt = eigenvalue_at(&spec, p, base(), &cfg).unwrap();
            assert!(pt.rescaled, "parameter {p} stayed in the window");
            assert!(pt.theta.is_some());
            assert!(pt.lambda > 0.0);
        }
    }

    #[test]
    fn limit_law_divergent_fragmentation_family() {
        // tau constant: tau/x blows up at zero size, so weakening transport
        // relative to division lets the eigenvalue grow without bound
        let report = check_limit_law(
            &constant_rates_frag(),
            Limit::Infinity,
            base(),
            &IterationConfig::default(),
        )
        .unwrap();
        assert_eq!(report.size_limit, Limit::Zero);
        assert_eq!(report.predicted_limit, None);
        assert_eq!(report.diverges, Some(true));
        assert!(report.empirical_slope.is_none());
        assert!(report.gaps.is_empty());
        for (p, l) in &report.samples {
            assert!((l - 2.0 * p).abs() <= 1e-12 * 2.0 * p);
        }
    }

    #[test]
    fn limit_law_finite_division_limit() {
        // constant division: the eigenvalue equals it for every modulation,
        // so the gap sequence must sit at rounding level
        let report = check_limit_law(
            &sqrt_growth_poly(),
            Limit::Zero,
            base(),
            &IterationConfig::default(),
        )
        .unwrap();
        assert_eq!(report.size_limit, Limit::Zero);
        assert_eq!(report.predicted_limit, Some(2.0));
        assert!(report.diverges.is_none());
        assert!(report.approach_monotone.is_some());
        for g in &report.gaps {
            assert!(*g <= 1e-10, "gap {g}");
        }
    }

    #[test]
    fn steady_states_flat_curve_is_marginal() {
        // constant division pins the growth rate at 2 for every monomer
        // level; with mu0 = 2 the threshold is never crossed and the
        // disease-free state sits exactly on it
        let report = find_disease_steady_states(
            &sqrt_growth_poly(),
            2.0,
            0.5,
            1.0,
            base(),
            &IterationConfig::default(),
        )
        .unwrap();
        assert_eq!(report.v_bar, 0.5);
        assert_eq!(report.sign_changes, 0);
        assert!(report.roots.is_empty());
        assert_eq!(report.disease_free, Stability::Marginal);
        assert_eq!(report.scan.len(), DRIVER_SCAN_POINTS);
    }

    #[test]
    fn steady_states_reject_fragmentation_mode() {
        let got = find_disease_steady_states(
            &constant_rates_frag(),
            1.0,
            50.0,
            1.0,
            base(),
            &IterationConfig::default(),
        );
        assert!(matches!(got, Err(Error::Config(_))));
    }

    #[test]
    fn sonication_rejects_polymerization_mode() {
        let got = optimize_sonication(
            &sqrt_growth_poly(),
            4.0,
            1e-3,
            base(),
            &IterationConfig::default(),
        );
        assert!(matches!(got, Err(Error::Config(_))));
    }

    #[test]
    fn sonication_degenerate_interval() {
        let report = optimize_sonication(
            &constant_rates_frag(),
            1.0 + 1e-10,
            1e-3,
            base(),
            &IterationConfig::default(),
        )
        .unwrap();
        assert!(report.degenerate);
        assert_eq!(report.location, OptimumLocation::Boundary);
        assert_eq!(report.afrag_opt, 1.0 + 1e-10);
        assert_eq!(report.scan.len(), 1);
    }

    #[test]
    fn sonication_monotone_family_reports_boundary() {
        // eigenvalue 2 * afrag grows through the whole interval, so the
        // optimum is the upper endpoint and dominates every scan sample
        let report = optimize_sonication(
            &constant_rates_frag(),
            4.0,
            1e-3,
            base(),
            &IterationConfig::default(),
        )
        .unwrap();
        assert!(!report.degenerate);
        assert_eq!(report.location, OptimumLocation::Boundary);
        assert_eq!(report.afrag_opt, 4.0);
        assert!((report.lambda_opt - 8.0).abs() < 1e-11);
        assert_eq!(report.scan.len(), DRIVER_SCAN_POINTS);
        assert!(report.scan.iter().all(|&(_, l)| l <= report.lambda_opt));
    }

    #[test]
    fn expansion_rejects_bad_declarations() {
        let spec = ProblemSpec::new(
            RateModel::power_law(1.0, 0.5).unwrap(),
            RateModel::offset_power(1.0, 1.0, 1.0).unwrap(),
            KernelModel::Uniform,
            ModulationMode::Polymerization,
            1.0,
        )
        .unwrap();
        let cfg = IterationConfig::default();
        let cases = [
            CriticalExpansion { leading: 1.0, correction: 0.0, correction_exponent: 1.0 },
            CriticalExpansion { leading: 1.0, correction: 1.0, correction_exponent: -1.0 },
            CriticalExpansion { leading: 2.0, correction: 1.0, correction_exponent: 1.0 },
            CriticalExpansion { leading: -1.0, correction: 1.0, correction_exponent: 1.0 },
        ];
        for decl in &cases {
            assert!(
                matches!(
                    fit_critical_expansion(&spec, decl, base(), &cfg),
                    Err(Error::Config(_))
                ),
                "accepted {decl:?}"
            );
        }
        // division rate growing at zero size has no constant leading term
        let powerlaw_beta = ProblemSpec::new(
            RateModel::power_law(1.0, 0.5).unwrap(),
            RateModel::power_law(1.0, 3.0).unwrap(),
            KernelModel::Uniform,
            ModulationMode::Polymerization,
            1.0,
        )
        .unwrap();
        let decl = CriticalExpansion { leading: 1.0, correction: 1.0, correction_exponent: 1.0 };
        assert!(matches!(
            fit_critical_expansion(&powerlaw_beta, &decl, base(), &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn fit_line_recovers_exact_line() {
        let xs = [-3.0, -2.0, -1.0, 0.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 0.75).collect();
        let (slope, intercept) = fit_line(&xs, &ys);
        assert!((slope - 2.5).abs() < 1e-12);
        assert!((intercept + 0.75).abs() < 1e-12);
    }
}
