//! Problem files: a sectioned `key = value` format describing the rates, the
//! kernel, solver settings, and run parameters.
//!
//! The grammar is deliberately flat. Lines are `key = value` pairs grouped
//! under `[tau]`, `[beta]`, `[kernel]`, `[solver]`, and `[run]` headers;
//! blank lines and `#` comments are skipped; unknown sections or keys are
//! errors rather than warnings so a typo cannot silently fall back to a
//! default.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::coefficients::{KernelModel, Limit, ModulationMode, ProblemSpec, RateModel};
use crate::eigensolver::IterationConfig;
use crate::error::{Error, Result};

/// Solver settings from a `[solver]` section. Unset keys fall back to the
/// library defaults at build time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverSettings {
    pub r: Option<f64>,
    pub n: Option<usize>,
    pub dt: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_iters: Option<usize>,
}

impl SolverSettings {
    /// Domain truncation radius with the default applied.
    pub fn radius(&self) -> f64 {
        self.r.unwrap_or(10.0)
    }

    /// Grid size with the default applied.
    pub fn points(&self) -> usize {
        self.n.unwrap_or(400)
    }

    /// Iteration controls with defaults applied.
    pub fn iteration(&self) -> IterationConfig {
        let base = IterationConfig::default();
        IterationConfig {
            dt: self.dt.or(base.dt),
            epsilon: self.epsilon.unwrap_or(base.epsilon),
            max_iters: self.max_iters.unwrap_or(base.max_iters),
            profile: base.profile,
        }
    }

    /// Overlays `other` on top of `self`: set fields in `other` win.
    pub fn merged(&self, other: &SolverSettings) -> SolverSettings {
        SolverSettings {
            r: other.r.or(self.r),
            n: other.n.or(self.n),
            dt: other.dt.or(self.dt),
            epsilon: other.epsilon.or(self.epsilon),
            max_iters: other.max_iters.or(self.max_iters),
        }
    }
}

/// Parameters consumed by specific commands; all optional at parse time,
/// checked by the command that needs them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSettings {
    pub mode: Option<ModulationMode>,
    pub modulation: Option<f64>,
    pub param_lo: Option<f64>,
    pub param_hi: Option<f64>,
    pub points: Option<usize>,
    pub limit: Option<Limit>,
    pub mu0: Option<f64>,
    pub xi: Option<f64>,
    pub delta: Option<f64>,
    pub afrag_max: Option<f64>,
    pub rel_tol: Option<f64>,
    pub leading: Option<f64>,
    pub correction: Option<f64>,
    pub correction_exponent: Option<f64>,
}

/// A parsed problem file plus the digest of its raw bytes, which output
/// headers embed so files can be traced back to the exact configuration
/// that produced them.
#[derive(Debug, Clone)]
pub struct ProblemFile {
    pub spec: ProblemSpec,
    pub solver: SolverSettings,
    pub run: RunSettings,
    pub digest: u64,
}

/// FNV-1a over the raw file bytes.
pub fn digest_bytes(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("key '{key}': expected a number, got '{value}'")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| Error::Config(format!("key '{key}': expected a count, got '{value}'")))
}

/// Parses a `(x1,f1) (x2,f2) ...` pair list for tabulated rates and kernels.
fn parse_pairs(key: &str, value: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for token in value.split_whitespace() {
        let inner = token
            .strip_prefix('(')
            .and_then(|t| t.strip_suffix(')'))
            .ok_or_else(|| Error::Config(format!("key '{key}': expected (x,f) pairs")))?;
        let (a, b) = inner
            .split_once(',')
            .ok_or_else(|| Error::Config(format!("key '{key}': expected (x,f) pairs")))?;
        out.push((parse_f64(key, a)?, parse_f64(key, b)?));
    }
    if out.is_empty() {
        return Err(Error::Config(format!("key '{key}': empty pair list")));
    }
    Ok(out)
}

/// One parsed section: key -> value with duplicate keys rejected.
type Section = BTreeMap<String, String>;

fn split_sections(text: &str) -> Result<BTreeMap<String, Section>> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_string();
            if !matches!(name.as_str(), "tau" | "beta" | "kernel" | "solver" | "run") {
                return Err(Error::Config(format!(
                    "line {}: unknown section [{name}]",
                    lineno + 1
                )));
            }
            if sections.contains_key(&name) {
                return Err(Error::Config(format!(
                    "line {}: duplicate section [{name}]",
                    lineno + 1
                )));
            }
            sections.insert(name.clone(), Section::new());
            current = Some(name);
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected 'key = value', got '{line}'", lineno + 1))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let section = current
            .as_ref()
            .ok_or_else(|| Error::Config(format!("line {}: key before any section", lineno + 1)))?;
        let map = sections.get_mut(section).unwrap();
        if map.insert(key.clone(), value).is_some() {
            return Err(Error::Config(format!(
                "line {}: duplicate key '{key}' in [{section}]",
                lineno + 1
            )));
        }
    }
    Ok(sections)
}

/// Takes `key` out of the section, so leftovers can be flagged as unknown.
fn take(section: &mut Section, key: &str) -> Option<String> {
    section.remove(key)
}

fn reject_unknown(name: &str, section: &Section) -> Result<()> {
    if let Some(key) = section.keys().next() {
        return Err(Error::Config(format!("unknown key '{key}' in [{name}]")));
    }
    Ok(())
}

fn parse_rate(name: &str, section: &mut Section) -> Result<RateModel> {
    let family = take(section, "family")
        .ok_or_else(|| Error::Config(format!("[{name}] needs a 'family' key")))?;
    let mut num = |key: &str| -> Result<f64> {
        let v = take(section, key)
            .ok_or_else(|| Error::Config(format!("[{name}] family '{family}' needs '{key}'")))?;
        parse_f64(key, &v)
    };
    let model = match family.as_str() {
        "power" => RateModel::power_law(num("prefactor")?, num("exponent")?)?,
        "rational" => {
            RateModel::rational_power(num("a")?, num("p")?, num("c")?, num("b")?, num("q")?)?
        }
        "offset_power" => {
            RateModel::offset_power(num("offset")?, num("scale")?, num("exponent")?)?
        }
        "tabulated" => {
            let samples = take(section, "samples")
                .ok_or_else(|| Error::Config(format!("[{name}] tabulated rate needs 'samples'")))?;
            let samples = parse_pairs("samples", &samples)?;
            let tail_zero = take(section, "tail_zero").map(|v| parse_f64("tail_zero", &v)).transpose()?;
            let tail_infinity = take(section, "tail_infinity")
                .map(|v| parse_f64("tail_infinity", &v))
                .transpose()?;
            RateModel::tabulated(samples, tail_zero, tail_infinity)?
        }
        other => {
            return Err(Error::Config(format!(
                "[{name}] unknown rate family '{other}' (power, rational, offset_power, tabulated)"
            )))
        }
    };
    reject_unknown(name, section)?;
    Ok(model)
}

fn parse_kernel(section: &mut Section) -> Result<KernelModel> {
    let family = take(section, "family")
        .ok_or_else(|| Error::Config("[kernel] needs a 'family' key".into()))?;
    let model = match family.as_str() {
        "uniform" => KernelModel::Uniform,
        "symmetric_beta" => KernelModel::SymmetricBeta,
        "tabulated" => {
            let samples = take(section, "samples")
                .ok_or_else(|| Error::Config("[kernel] tabulated kernel needs 'samples'".into()))?;
            KernelModel::tabulated(parse_pairs("samples", &samples)?)?
        }
        other => {
            return Err(Error::Config(format!(
                "[kernel] unknown kernel family '{other}' (uniform, symmetric_beta, tabulated)"
            )))
        }
    };
    reject_unknown("kernel", section)?;
    Ok(model)
}

fn parse_solver(section: &mut Section) -> Result<SolverSettings> {
    let mut settings = SolverSettings::default();
    if let Some(v) = take(section, "r") {
        settings.r = Some(parse_f64("r", &v)?);
    }
    if let Some(v) = take(section, "n") {
        settings.n = Some(parse_usize("n", &v)?);
    }
    if let Some(v) = take(section, "dt") {
        settings.dt = Some(parse_f64("dt", &v)?);
    }
    if let Some(v) = take(section, "epsilon") {
        settings.epsilon = Some(parse_f64("epsilon", &v)?);
    }
    if let Some(v) = take(section, "max_iters") {
        settings.max_iters = Some(parse_usize("max_iters", &v)?);
    }
    reject_unknown("solver", section)?;
    Ok(settings)
}

fn parse_run(section: &mut Section) -> Result<RunSettings> {
    let mut run = RunSettings::default();
    if let Some(v) = take(section, "mode") {
        run.mode = Some(match v.as_str() {
            "polymerization" => ModulationMode::Polymerization,
            "fragmentation" => ModulationMode::Fragmentation,
            other => {
                return Err(Error::Config(format!(
                    "key 'mode': expected polymerization or fragmentation, got '{other}'"
                )))
            }
        });
    }
    if let Some(v) = take(section, "limit") {
        run.limit = Some(match v.as_str() {
            "zero" => Limit::Zero,
            "infinity" => Limit::Infinity,
            other => {
                return Err(Error::Config(format!(
                    "key 'limit': expected zero or infinity, got '{other}'"
                )))
            }
        });
    }
    for (key, slot) in [
        ("modulation", &mut run.modulation),
        ("param_lo", &mut run.param_lo),
        ("param_hi", &mut run.param_hi),
        ("mu0", &mut run.mu0),
        ("xi", &mut run.xi),
        ("delta", &mut run.delta),
        ("afrag_max", &mut run.afrag_max),
        ("rel_tol", &mut run.rel_tol),
        ("leading", &mut run.leading),
        ("correction", &mut run.correction),
        ("correction_exponent", &mut run.correction_exponent),
    ] {
        if let Some(v) = take(section, key) {
            *slot = Some(parse_f64(key, &v)?);
        }
    }
    if let Some(v) = take(section, "points") {
        run.points = Some(parse_usize("points", &v)?);
    }
    reject_unknown("run", section)?;
    Ok(run)
}

/// Parses a problem file from its raw text.
pub fn parse_problem(text: &str) -> Result<ProblemFile> {
    let digest = digest_bytes(text.as_bytes());
    let mut sections = split_sections(text)?;

    let mut tau_section = sections
        .remove("tau")
        .ok_or_else(|| Error::Config("missing [tau] section".into()))?;
    let tau = parse_rate("tau", &mut tau_section)?;

    let mut beta_section = sections
        .remove("beta")
        .ok_or_else(|| Error::Config("missing [beta] section".into()))?;
    let beta = parse_rate("beta", &mut beta_section)?;

    let mut kernel_section = sections
        .remove("kernel")
        .ok_or_else(|| Error::Config("missing [kernel] section".into()))?;
    let kernel = parse_kernel(&mut kernel_section)?;

    let solver = match sections.remove("solver") {
        Some(mut s) => parse_solver(&mut s)?,
        None => SolverSettings::default(),
    };
    let run = match sections.remove("run") {
        Some(mut s) => parse_run(&mut s)?,
        None => RunSettings::default(),
    };

    let mode = run.mode.unwrap_or(ModulationMode::Polymerization);
    let modulation = run.modulation.unwrap_or(1.0);
    let spec = ProblemSpec::new(tau, beta, kernel, mode, modulation)?;

    Ok(ProblemFile { spec, solver, run, digest })
}

/// Renders a problem file back to canonical text, mainly so tests can build
/// fixture files without string templates drifting from the grammar.
pub fn render_problem(file: &ProblemFile) -> String {
    let mut out = String::new();
    let rate = |out: &mut String, name: &str, model: &RateModel| {
        let _ = writeln!(out, "[{name}]");
        match model {
            RateModel::PowerLaw { prefactor, exponent } => {
                let _ = writeln!(out, "family = power");
                let _ = writeln!(out, "prefactor = {prefactor}");
                let _ = writeln!(out, "exponent = {exponent}");
            }
            RateModel::RationalPower { a, p, c, b, q } => {
                let _ = writeln!(out, "family = rational");
                let _ = writeln!(out, "a = {a}");
                let _ = writeln!(out, "p = {p}");
                let _ = writeln!(out, "c = {c}");
                let _ = writeln!(out, "b = {b}");
                let _ = writeln!(out, "q = {q}");
            }
            RateModel::OffsetPower { offset, scale, exponent } => {
                let _ = writeln!(out, "family = offset_power");
                let _ = writeln!(out, "offset = {offset}");
                let _ = writeln!(out, "scale = {scale}");
                let _ = writeln!(out, "exponent = {exponent}");
            }
            RateModel::Tabulated { samples, tail_zero, tail_infinity } => {
                let _ = writeln!(out, "family = tabulated");
                let pairs: Vec<String> =
                    samples.iter().map(|(x, f)| format!("({x},{f})")).collect();
                let _ = writeln!(out, "samples = {}", pairs.join(" "));
                if let Some(e) = tail_zero {
                    let _ = writeln!(out, "tail_zero = {e}");
                }
                if let Some(e) = tail_infinity {
                    let _ = writeln!(out, "tail_infinity = {e}");
                }
            }
        }
    };
    rate(&mut out, "tau", &file.spec.tau);
    rate(&mut out, "beta", &file.spec.beta);
    let _ = writeln!(out, "[kernel]");
    match &file.spec.kernel {
        KernelModel::Uniform => {
            let _ = writeln!(out, "family = uniform");
        }
        KernelModel::SymmetricBeta => {
            let _ = writeln!(out, "family = symmetric_beta");
        }
        KernelModel::Tabulated { samples, .. } => {
            let _ = writeln!(out, "family = tabulated");
            let pairs: Vec<String> = samples.iter().map(|(s, f)| format!("({s},{f})")).collect();
            let _ = writeln!(out, "samples = {}", pairs.join(" "));
        }
    }
    let _ = writeln!(out, "[solver]");
    if let Some(r) = file.solver.r {
        let _ = writeln!(out, "r = {r}");
    }
    if let Some(n) = file.solver.n {
        let _ = writeln!(out, "n = {n}");
    }
    if let Some(dt) = file.solver.dt {
        let _ = writeln!(out, "dt = {dt}");
    }
    if let Some(epsilon) = file.solver.epsilon {
        let _ = writeln!(out, "epsilon = {epsilon}");
    }
    if let Some(max_iters) = file.solver.max_iters {
        let _ = writeln!(out, "max_iters = {max_iters}");
    }
    let _ = writeln!(out, "[run]");
    let _ = writeln!(
        out,
        "mode = {}",
        match file.spec.mode {
            ModulationMode::Polymerization => "polymerization",
            ModulationMode::Fragmentation => "fragmentation",
        }
    );
    let _ = writeln!(out, "modulation = {}", file.spec.modulation);
    if let Some(limit) = file.run.limit {
        let _ = writeln!(
            out,
            "limit = {}",
            match limit {
                Limit::Zero => "zero",
                Limit::Infinity => "infinity",
            }
        );
    }
    for (key, v) in [
        ("param_lo", file.run.param_lo),
        ("param_hi", file.run.param_hi),
        ("mu0", file.run.mu0),
        ("xi", file.run.xi),
        ("delta", file.run.delta),
        ("afrag_max", file.run.afrag_max),
        ("rel_tol", file.run.rel_tol),
        ("leading", file.run.leading),
        ("correction", file.run.correction),
        ("correction_exponent", file.run.correction_exponent),
    ] {
        if let Some(v) = v {
            let _ = writeln!(out, "{key} = {v}");
        }
    }
    if let Some(points) = file.run.points {
        let _ = writeln!(out, "points = {points}");
    }
    out
}
