//! Command dispatch behind the binary: reads a problem file, merges
//! command-line overrides, runs the requested computation, and writes CSV
//! outputs. All files are rendered in memory first and written at the end in
//! a fixed order, so a failing run leaves no partial output behind.

use std::path::{Path, PathBuf};

use crate::analysis::{
    check_limit_law, find_disease_steady_states, fit_critical_expansion, log_grid,
    optimize_sonication, sweep_eigenvalue, CriticalExpansion, ExtremumKind, OptimumLocation,
    Stability,
};
use crate::coefficients::{validate_assumptions, Limit, ModulationMode, ProblemSpec};
use crate::config::{parse_problem, ProblemFile, RunSettings, SolverSettings};
use crate::eigensolver::{
    solve_adaptive, verify_solution, DEFAULT_MAX_DOUBLINGS, DEFAULT_TAIL_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::grid::build_grid;
use crate::output::{Summary, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Sweep,
    Limits,
    Expansion,
    Prion,
    Pmca,
    Validate,
}

/// A fully resolved invocation: which command, which problem file, where
/// outputs go, and what the command line overrides on top of the file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub problem_path: PathBuf,
    pub out_dir: PathBuf,
    pub solver_overrides: SolverSettings,
    pub run_overrides: RunSettings,
}

/// What a run produced: the files written and a few lines worth echoing to
/// the terminal.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub notes: Vec<String>,
}

fn overlay(file: &RunSettings, cli: &RunSettings) -> RunSettings {
    RunSettings {
        mode: cli.mode.or(file.mode),
        modulation: cli.modulation.or(file.modulation),
        param_lo: cli.param_lo.or(file.param_lo),
        param_hi: cli.param_hi.or(file.param_hi),
        points: cli.points.or(file.points),
        limit: cli.limit.or(file.limit),
        mu0: cli.mu0.or(file.mu0),
        xi: cli.xi.or(file.xi),
        delta: cli.delta.or(file.delta),
        afrag_max: cli.afrag_max.or(file.afrag_max),
        rel_tol: cli.rel_tol.or(file.rel_tol),
        leading: cli.leading.or(file.leading),
        correction: cli.correction.or(file.correction),
        correction_exponent: cli.correction_exponent.or(file.correction_exponent),
    }
}

fn need(value: Option<f64>, key: &str, command: &str) -> Result<f64> {
    value.ok_or_else(|| {
        Error::Config(format!("{command} needs '{key}' (problem file [run] section or flag)"))
    })
}

/// CSV fields are comma-separated and unquoted, so free-text details drop
/// the separator characters.
fn sanitize(text: &str) -> String {
    text.replace(['\n', '\r'], " ").replace(',', ";")
}

fn mode_name(mode: ModulationMode) -> &'static str {
    match mode {
        ModulationMode::Polymerization => "polymerization",
        ModulationMode::Fragmentation => "fragmentation",
    }
}

fn limit_label(limit: Limit) -> &'static str {
    match limit {
        Limit::Zero => "zero",
        Limit::Infinity => "infinity",
    }
}

/// Refuses to run a computation on a spec that fails a blocking assumption.
fn require_solvable(spec: &ProblemSpec) -> Result<()> {
    let report = validate_assumptions(spec);
    if report.solvable() {
        return Ok(());
    }
    let failed: Vec<&str> =
        report.failures().filter(|c| c.hard).map(|c| c.id).collect();
    Err(Error::Rejected(format!("blocking assumption checks failed: {}", failed.join(", "))))
}

/// Rendered output files, terminal notes, and an error to raise only after
/// the files are on disk (used by `validate`, whose report must survive a
/// failing verdict).
type Rendered = (Vec<(&'static str, String)>, Vec<String>, Option<Error>);

fn command_outputs(
    command: Command,
    file: &ProblemFile,
    run: &RunSettings,
    solver: &SolverSettings,
) -> Result<Rendered> {
    let digest = file.digest;
    let spec = &file.spec;
    let base = build_grid(solver.radius(), solver.points())?;
    let iteration = solver.iteration();
    let mut files = Vec::new();
    let mut notes = Vec::new();
    let mut deferred = None;

    match command {
        Command::Validate => {
            let report = validate_assumptions(spec);
            let mut table =
                Table::new(digest, vec!["check", "severity", "passed", "detail"]);
            for check in &report.checks {
                table.push(vec![
                    check.id.into(),
                    if check.hard { "blocking" } else { "advisory" }.into(),
                    check.passed.into(),
                    sanitize(&check.detail).into(),
                ]);
            }
            files.push(("assumptions.csv", table.render()));
            notes.push(format!(
                "{} checks, {} failed, solvable: {}",
                report.checks.len(),
                report.failures().count(),
                report.solvable()
            ));
            if !report.solvable() {
                let failed: Vec<&str> =
                    report.failures().filter(|c| c.hard).map(|c| c.id).collect();
                deferred = Some(Error::Rejected(format!(
                    "blocking assumption checks failed: {}",
                    failed.join(", ")
                )));
            }
        }
        Command::Solve => {
            require_solvable(spec)?;
            let run_out = solve_adaptive(
                spec,
                base,
                &iteration,
                DEFAULT_TAIL_TOLERANCE,
                DEFAULT_MAX_DOUBLINGS,
            )?;
            let audit = verify_solution(&run_out.problem, &run_out.solution)?;
            let sol = &run_out.solution;
            let grid = sol.grid;
            let mut pair = Table::new(digest, vec!["x", "u"]);
            for (i, &u) in sol.u.iter().enumerate() {
                pair.push(vec![grid.node(i).into(), u.into()]);
            }
            files.push(("eigenpair.csv", pair.render()));

            let mut summary = Summary::new(digest);
            summary.put("lambda", sol.lambda);
            summary.put("residual", sol.residual);
            summary.put("final_increment", sol.final_increment);
            summary.put("iterations", run_out.total_iterations);
            summary.put("doublings", run_out.doublings);
            summary.put("tail_resolved", run_out.tail_resolved);
            summary.put("base_r", base.r());
            summary.put("base_n", base.n());
            summary.put("r", grid.r());
            summary.put("n", grid.n());
            summary.put("dx", grid.dx());
            summary.put("audit_ok", audit.pass());
            summary.put(
                "audit_failures",
                audit.failures().map(|c| c.id).collect::<Vec<_>>().join(";"),
            );
            files.push(("summary.csv", summary.render()));
            notes.push(format!("lambda = {:.12e}", sol.lambda));
            notes.push(format!(
                "grid r = {}, n = {}, residual = {:.3e}",
                grid.r(),
                grid.n(),
                sol.residual
            ));
        }
        Command::Sweep => {
            require_solvable(spec)?;
            let lo = need(run.param_lo, "param_lo", "sweep")?;
            let hi = need(run.param_hi, "param_hi", "sweep")?;
            let points = run.points.unwrap_or(25);
            let params = log_grid(lo, hi, points)?;
            let curve = sweep_eigenvalue(spec, &params, base, &iteration)?;

            let mut table = Table::new(
                digest,
                vec![
                    "parameter",
                    "lambda",
                    "theta",
                    "rescaled",
                    "iterations",
                    "doublings",
                    "tail_resolved",
                    "r",
                    "n",
                    "audit_ok",
                    "extremum",
                ],
            );
            for (i, s) in curve.samples.iter().enumerate() {
                let mark = curve.extrema.iter().find(|e| e.index == i).map(|e| match e.kind {
                    ExtremumKind::Maximum => "maximum",
                    ExtremumKind::Minimum => "minimum",
                });
                table.push(vec![
                    s.parameter.into(),
                    s.lambda.into(),
                    s.theta.into(),
                    s.rescaled.into(),
                    s.iterations.into(),
                    s.doublings.into(),
                    s.tail_resolved.into(),
                    s.r.into(),
                    s.n.into(),
                    s.audit_ok.into(),
                    mark.into(),
                ]);
            }
            files.push(("sweep.csv", table.render()));

            let mut summary = Summary::new(digest);
            summary.put("mode", mode_name(curve.mode));
            summary.put("samples", curve.samples.len());
            summary.put("gaps", curve.samples.iter().filter(|s| s.lambda.is_none()).count());
            summary.put("monotone", curve.monotone);
            summary.put("extrema", curve.extrema.len());
            for (j, e) in curve.extrema.iter().enumerate() {
                let kind = match e.kind {
                    ExtremumKind::Maximum => "maximum",
                    ExtremumKind::Minimum => "minimum",
                };
                summary.put(&format!("extremum_{j}_kind"), kind);
                summary.put(&format!("extremum_{j}_parameter"), e.parameter);
                summary.put(&format!("extremum_{j}_value"), e.value);
            }
            files.push(("sweep_summary.csv", summary.render()));
            notes.push(format!(
                "{} samples, {} extrema, monotone: {}",
                curve.samples.len(),
                curve.extrema.len(),
                curve.monotone
            ));
        }
        Command::Limits => {
            require_solvable(spec)?;
            let limit = run.limit.ok_or_else(|| {
                Error::Config("limits needs 'limit' (zero or infinity)".into())
            })?;
            let report = check_limit_law(spec, limit, base, &iteration)?;

            let mut table = Table::new(digest, vec!["parameter", "lambda", "gap"]);
            for (i, &(p, l)) in report.samples.iter().enumerate() {
                table.push(vec![p.into(), l.into(), report.gaps.get(i).copied().into()]);
            }
            files.push(("limit_samples.csv", table.render()));

            let mut summary = Summary::new(digest);
            summary.put("mode", mode_name(report.mode));
            summary.put("param_limit", limit_label(report.param_limit));
            summary.put("size_limit", limit_label(report.size_limit));
            summary.put("predicted_limit", report.predicted_limit);
            summary.put("empirical_slope", report.empirical_slope);
            summary.put("theory_slope", report.theory_slope);
            summary.put("slope_ok", report.slope_ok);
            summary.put("approach_monotone", report.approach_monotone);
            summary.put("diverges", report.diverges);
            files.push(("limit_summary.csv", summary.render()));
            let verdict = match (report.predicted_limit, report.slope_ok, report.diverges) {
                (None, _, Some(d)) => format!("divergence confirmed: {d}"),
                (Some(c), None, _) if c > 0.0 => format!("finite limit {c:.6e}"),
                (Some(_), Some(ok), _) => format!("vanishing limit, decay rate ok: {ok}"),
                _ => "see limit_summary.csv".into(),
            };
            notes.push(verdict);
        }
        Command::Expansion => {
            require_solvable(spec)?;
            let decl = CriticalExpansion {
                leading: need(run.leading, "leading", "expansion")?,
                correction: need(run.correction, "correction", "expansion")?,
                correction_exponent: need(
                    run.correction_exponent,
                    "correction_exponent",
                    "expansion",
                )?,
            };
            let report = fit_critical_expansion(spec, &decl, base, &iteration)?;

            let mut table = Table::new(digest, vec!["parameter", "correction"]);
            for &(p, c) in &report.samples {
                table.push(vec![p.into(), c.into()]);
            }
            files.push(("expansion_samples.csv", table.render()));

            let mut summary = Summary::new(digest);
            summary.put("mode", mode_name(report.mode));
            summary.put("theta_limit", report.theta_limit);
            summary.put("limit_r", report.limit_grid.r());
            summary.put("limit_n", report.limit_grid.n());
            summary.put("fitted_exponent", report.fitted_exponent);
            summary.put("fitted_prefactor", report.fitted_prefactor);
            summary.put("theory_exponent", report.theory_exponent);
            summary.put("theory_prefactor", report.theory_prefactor);
            summary.put("exponent_ok", report.exponent_ok);
            files.push(("expansion_summary.csv", summary.render()));
            notes.push(format!(
                "fitted exponent {:.6} vs theory {:.6} (ok: {})",
                report.fitted_exponent, report.theory_exponent, report.exponent_ok
            ));
        }
        Command::Prion => {
            require_solvable(spec)?;
            let mu0 = need(run.mu0, "mu0", "prion")?;
            let xi = need(run.xi, "xi", "prion")?;
            let delta = need(run.delta, "delta", "prion")?;
            let report = find_disease_steady_states(spec, mu0, xi, delta, base, &iteration)?;

            let mut table = Table::new(digest, vec!["v", "mu0_minus_lambda"]);
            for &(v, l) in &report.scan {
                table.push(vec![v.into(), (mu0 - l).into()]);
            }
            files.push(("steady_scan.csv", table.render()));

            let mut roots = Table::new(digest, vec!["v", "lambda", "integral_tau_u", "rho"]);
            for root in &report.roots {
                roots.push(vec![
                    root.v.into(),
                    root.lambda.into(),
                    root.integral_tau_u.into(),
                    root.rho.into(),
                ]);
            }
            files.push(("steady_roots.csv", roots.render()));

            let mut summary = Summary::new(digest);
            summary.put("mu0", report.mu0);
            summary.put("xi", report.xi);
            summary.put("delta", report.delta);
            summary.put("v_bar", report.v_bar);
            summary.put("lambda_at_v_bar", report.lambda_at_v_bar);
            summary.put("sign_changes", report.sign_changes);
            summary.put("roots", report.roots.len());
            summary.put(
                "disease_free",
                match report.disease_free {
                    Stability::Stable => "stable",
                    Stability::Unstable => "unstable",
                    Stability::Marginal => "marginal",
                },
            );
            files.push(("steady_summary.csv", summary.render()));
            notes.push(format!(
                "{} steady state(s); disease-free state {}",
                report.roots.len(),
                match report.disease_free {
                    Stability::Stable => "stable",
                    Stability::Unstable => "unstable",
                    Stability::Marginal => "marginal",
                }
            ));
        }
        Command::Pmca => {
            require_solvable(spec)?;
            let afrag_max = need(run.afrag_max, "afrag_max", "pmca")?;
            let rel_tol = run.rel_tol.unwrap_or(1e-3);
            let report = optimize_sonication(spec, afrag_max, rel_tol, base, &iteration)?;

            let mut table = Table::new(digest, vec!["afrag", "lambda"]);
            for &(a, l) in &report.scan {
                table.push(vec![a.into(), l.into()]);
            }
            files.push(("pmca_scan.csv", table.render()));

            let mut summary = Summary::new(digest);
            summary.put("afrag_opt", report.afrag_opt);
            summary.put("lambda_opt", report.lambda_opt);
            summary.put(
                "location",
                match report.location {
                    OptimumLocation::Interior => "interior",
                    OptimumLocation::Boundary => "boundary",
                },
            );
            summary.put("degenerate", report.degenerate);
            files.push(("pmca_summary.csv", summary.render()));
            notes.push(format!(
                "optimum afrag = {:.6} ({}), lambda = {:.6e}",
                report.afrag_opt,
                match report.location {
                    OptimumLocation::Interior => "interior",
                    OptimumLocation::Boundary => "boundary",
                },
                report.lambda_opt
            ));
        }
    }

    Ok((files, notes, deferred))
}

fn write_outputs(
    out_dir: &Path,
    files: &[(&'static str, String)],
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::with_capacity(files.len());
    for (name, content) in files {
        let path = out_dir.join(name);
        std::fs::write(&path, content)?;
        written.push(path);
    }
    Ok(written)
}

/// Runs one command end to end. On success the outcome lists every file
/// written; on failure nothing is written, except that a `validate` run with
/// blocking failures still writes its report before the error propagates.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    let text = std::fs::read_to_string(&config.problem_path)?;
    let file = parse_problem(&text)?;
    let solver = file.solver.merged(&config.solver_overrides);
    let mut run_settings = overlay(&file.run, &config.run_overrides);

    // command-line mode/modulation need to reach the spec itself
    let mut problem = file;
    if let Some(mode) = run_settings.mode {
        problem.spec.mode = mode;
    }
    if let Some(m) = run_settings.modulation {
        problem.spec = problem.spec.with_modulation(m)?;
    }
    run_settings.mode = Some(problem.spec.mode);
    run_settings.modulation = Some(problem.spec.modulation);

    let (files, notes, deferred) =
        command_outputs(config.command, &problem, &run_settings, &solver)?;
    let written = write_outputs(&config.out_dir, &files)?;
    match deferred {
        Some(err) => Err(err),
        None => Ok(RunOutcome { files: written, notes }),
    }
}
