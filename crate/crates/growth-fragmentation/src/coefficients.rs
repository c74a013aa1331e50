//! Problem descriptions: rate models, fragment-size kernels, modulation, and
//! the assumption checks that gate the rest of the pipeline.

use crate::error::{Error, Result};

/// End of the size axis a statement refers to: x -> 0 or x -> +inf.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Limit {
    Zero,
    Infinity,
}

/// Nonnegative rate x -> f(x) on (0, +inf) from a small parametric family.
///
/// Every variant has power-law behavior at both ends of the axis, either by
/// construction or by user declaration, which is what the self-similar
/// rescaling machinery needs.
#[derive(Debug, Clone, PartialEq)]
pub enum RateModel {
    /// `prefactor * x^exponent`
    PowerLaw { prefactor: f64, exponent: f64 },
    /// `a * x^p / (c + b * x^q)`; behaves like `(a/c) x^p` near zero and,
    /// for b > 0, like `(a/b) x^(p-q)` near infinity.
    RationalPower { a: f64, p: f64, c: f64, b: f64, q: f64 },
    /// `offset + scale * x^exponent`; the two-term expansion family, closed
    /// under the dilations used by the rescaling module.
    OffsetPower { offset: f64, scale: f64, exponent: f64 },
    /// Piecewise-linear interpolation of strictly increasing samples, with
    /// optional power-law tail exponents for extrapolation beyond the range.
    Tabulated {
        samples: Vec<(f64, f64)>,
        tail_zero: Option<f64>,
        tail_infinity: Option<f64>,
    },
}

fn require(cond: bool, what: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(what.to_string()))
    }
}

impl RateModel {
    pub fn power_law(prefactor: f64, exponent: f64) -> Result<Self> {
        require(prefactor > 0.0 && prefactor.is_finite(), "power law needs prefactor > 0")?;
        require(exponent.is_finite(), "power law exponent must be finite")?;
        Ok(RateModel::PowerLaw { prefactor, exponent })
    }

    pub fn rational_power(a: f64, p: f64, c: f64, b: f64, q: f64) -> Result<Self> {
        require(a > 0.0 && a.is_finite(), "rational power needs a > 0")?;
        require(c > 0.0 && c.is_finite(), "rational power needs c > 0")?;
        require(b >= 0.0 && b.is_finite(), "rational power needs b >= 0")?;
        require(p.is_finite() && q.is_finite(), "rational power exponents must be finite")?;
        Ok(RateModel::RationalPower { a, p, c, b, q })
    }

    pub fn offset_power(offset: f64, scale: f64, exponent: f64) -> Result<Self> {
        require(offset >= 0.0 && offset.is_finite(), "offset power needs offset >= 0")?;
        require(scale >= 0.0 && scale.is_finite(), "offset power needs scale >= 0")?;
        require(offset + scale > 0.0, "offset power needs offset + scale > 0")?;
        require(exponent.is_finite(), "offset power exponent must be finite")?;
        Ok(RateModel::OffsetPower { offset, scale, exponent })
    }

    pub fn tabulated(
        samples: Vec<(f64, f64)>,
        tail_zero: Option<f64>,
        tail_infinity: Option<f64>,
    ) -> Result<Self> {
        require(samples.len() >= 2, "tabulated rate needs at least two samples")?;
        for w in samples.windows(2) {
            require(w[0].0 < w[1].0, "tabulated sample abscissae must be strictly increasing")?;
        }
        for &(x, f) in &samples {
            require(x > 0.0 && x.is_finite(), "tabulated abscissae must be positive")?;
            require(f >= 0.0 && f.is_finite(), "tabulated values must be nonnegative")?;
        }
        Ok(RateModel::Tabulated { samples, tail_zero, tail_infinity })
    }

    /// Evaluates the rate at `x >= 0`. Negative sizes are a domain error, as
    /// is extrapolating a tabulated rate past its range without a declared
    /// tail exponent.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::Domain(format!("rate evaluated at negative size {x}")));
        }
        match self {
            RateModel::PowerLaw { prefactor, exponent } => Ok(prefactor * x.powf(*exponent)),
            RateModel::RationalPower { a, p, c, b, q } => {
                Ok(a * x.powf(*p) / (c + b * x.powf(*q)))
            }
            RateModel::OffsetPower { offset, scale, exponent } => {
                Ok(offset + scale * x.powf(*exponent))
            }
            RateModel::Tabulated { samples, tail_zero, tail_infinity } => {
                let (x0, f0) = samples[0];
                let (xn, fn_) = *samples.last().unwrap();
                if x < x0 {
                    let e = tail_zero.ok_or_else(|| {
                        Error::Domain(format!("size {x} below tabulated range and no tail declared"))
                    })?;
                    return Ok(f0 * (x / x0).powf(e));
                }
                if x > xn {
                    let e = tail_infinity.ok_or_else(|| {
                        Error::Domain(format!("size {x} above tabulated range and no tail declared"))
                    })?;
                    return Ok(fn_ * (x / xn).powf(e));
                }
                let k = samples.partition_point(|&(xi, _)| xi <= x).min(samples.len() - 1);
                let (xa, fa) = samples[k - 1];
                let (xb, fb) = samples[k];
                Ok(fa + (fb - fa) * (x - xa) / (xb - xa))
            }
        }
    }

    /// Power-law exponent of the rate at the given end, when known.
    pub fn exponent_at(&self, limit: Limit) -> Option<f64> {
        match self {
            RateModel::PowerLaw { exponent, .. } => Some(*exponent),
            RateModel::RationalPower { p, b, q, .. } => Some(match limit {
                Limit::Zero => *p,
                Limit::Infinity => {
                    if *b > 0.0 {
                        p - q
                    } else {
                        *p
                    }
                }
            }),
            RateModel::OffsetPower { offset, scale, exponent } => {
                if *offset == 0.0 {
                    return Some(*exponent);
                }
                if *scale == 0.0 {
                    return Some(0.0);
                }
                Some(match limit {
                    Limit::Zero => exponent.min(0.0),
                    Limit::Infinity => exponent.max(0.0),
                })
            }
            RateModel::Tabulated { tail_zero, tail_infinity, .. } => match limit {
                Limit::Zero => *tail_zero,
                Limit::Infinity => *tail_infinity,
            },
        }
    }

    /// Prefactor of the power-law behavior at the given end, when known:
    /// f(x) ~ prefactor * x^exponent there.
    pub fn prefactor_at(&self, limit: Limit) -> Option<f64> {
        match self {
            RateModel::PowerLaw { prefactor, .. } => Some(*prefactor),
            RateModel::RationalPower { a, c, b, .. } => Some(match limit {
                Limit::Zero => a / c,
                Limit::Infinity => {
                    if *b > 0.0 {
                        a / b
                    } else {
                        a / c
                    }
                }
            }),
            RateModel::OffsetPower { offset, scale, exponent } => {
                if *offset == 0.0 {
                    return Some(*scale);
                }
                if *scale == 0.0 {
                    return Some(*offset);
                }
                if *exponent == 0.0 {
                    return Some(offset + scale);
                }
                let grows = *exponent > 0.0;
                Some(match limit {
                    Limit::Zero => {
                        if grows {
                            *offset
                        } else {
                            *scale
                        }
                    }
                    Limit::Infinity => {
                        if grows {
                            *scale
                        } else {
                            *offset
                        }
                    }
                })
            }
            RateModel::Tabulated { samples, tail_zero, tail_infinity } => match limit {
                Limit::Zero => {
                    let (x0, f0) = samples[0];
                    tail_zero.map(|e| f0 / x0.powf(e))
                }
                Limit::Infinity => {
                    let (xn, fn_) = *samples.last().unwrap();
                    tail_infinity.map(|e| fn_ / xn.powf(e))
                }
            },
        }
    }
}

/// Fragment-size distribution, stored through its self-similar density:
/// kappa(x, y) = (1/y) * ktilde(x/y) for x <= y, zero above the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelModel {
    /// ktilde == 1: fragment sizes uniform on (0, y).
    Uniform,
    /// ktilde(s) = 6 s (1 - s): symmetric, vanishing at both ends.
    SymmetricBeta,
    /// Piecewise-linear density samples on [0, 1] with cached moments.
    Tabulated {
        samples: Vec<(f64, f64)>,
        /// (zeroth, first, second) moments of the density over [0, 1].
        moments: (f64, f64, f64),
    },
}

/// Exact moments of a piecewise-linear density on [0, 1].
fn linear_moments(samples: &[(f64, f64)]) -> (f64, f64, f64) {
    let mut m = [0.0_f64; 3];
    for w in samples.windows(2) {
        let (s0, f0) = w[0];
        let (s1, f1) = w[1];
        let slope = (f1 - f0) / (s1 - s0);
        let c0 = f0 - slope * s0;
        for (r, mr) in m.iter_mut().enumerate() {
            let r1 = (r + 1) as f64;
            let r2 = (r + 2) as f64;
            *mr += c0 * (s1.powi(r as i32 + 1) - s0.powi(r as i32 + 1)) / r1
                + slope * (s1.powi(r as i32 + 2) - s0.powi(r as i32 + 2)) / r2;
        }
    }
    (m[0], m[1], m[2])
}

impl KernelModel {
    pub fn tabulated(samples: Vec<(f64, f64)>) -> Result<Self> {
        require(samples.len() >= 2, "tabulated kernel needs at least two samples")?;
        require(
            samples[0].0 == 0.0 && samples.last().unwrap().0 == 1.0,
            "tabulated kernel samples must span [0, 1]",
        )?;
        for w in samples.windows(2) {
            require(w[0].0 < w[1].0, "tabulated kernel abscissae must be strictly increasing")?;
        }
        for &(_, f) in &samples {
            require(f >= 0.0 && f.is_finite(), "tabulated kernel values must be nonnegative")?;
        }
        let moments = linear_moments(&samples);
        Ok(KernelModel::Tabulated { samples, moments })
    }

    /// Self-similar density ktilde(s) on [0, 1].
    pub fn density(&self, s: f64) -> f64 {
        match self {
            KernelModel::Uniform => 1.0,
            KernelModel::SymmetricBeta => 6.0 * s * (1.0 - s),
            KernelModel::Tabulated { samples, .. } => {
                let k = samples.partition_point(|&(si, _)| si <= s).min(samples.len() - 1);
                let (sa, fa) = samples[k - 1];
                let (sb, fb) = samples[k];
                fa + (fb - fa) * (s - sa) / (sb - sa)
            }
        }
    }

    /// Fragment density kappa(x, y) = (1/y) ktilde(x/y) for 0 <= x <= y,
    /// zero for x > y. Nonpositive mother size y is a domain error.
    pub fn eval_density(&self, x: f64, y: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::Domain(format!("kernel evaluated at nonpositive mother size {y}")));
        }
        if !(x >= 0.0) {
            return Err(Error::Domain(format!("kernel evaluated at negative fragment size {x}")));
        }
        if x > y {
            return Ok(0.0);
        }
        Ok(self.density(x / y) / y)
    }

    /// (zeroth, first, second) moments of ktilde over [0, 1]. A mass-
    /// preserving binary kernel has moments (1, 1/2, m2) with m2 < 1/2.
    pub fn moments(&self) -> (f64, f64, f64) {
        match self {
            KernelModel::Uniform => (1.0, 0.5, 1.0 / 3.0),
            KernelModel::SymmetricBeta => (1.0, 0.5, 0.3),
            KernelModel::Tabulated { moments, .. } => *moments,
        }
    }

    /// Largest g >= 0 such that the cumulative density is O(s^g) near 0;
    /// used by the small-fragment transport check.
    fn cdf_exponent(&self) -> f64 {
        match self {
            KernelModel::Uniform => 1.0,
            KernelModel::SymmetricBeta => 2.0,
            KernelModel::Tabulated { samples, .. } => {
                if samples[0].1 > 1e-12 {
                    1.0
                } else {
                    2.0
                }
            }
        }
    }
}

/// Which rate the scalar control multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModulationMode {
    /// `alpha` multiplies the growth rate tau.
    Polymerization,
    /// `a_f` multiplies the division rate beta (loss and gain together).
    Fragmentation,
}

/// A complete eigenproblem description: coefficients, kernel, and the
/// modulation applied to one of the rates.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub tau: RateModel,
    pub beta: RateModel,
    pub kernel: KernelModel,
    pub mode: ModulationMode,
    /// Modulation strength: alpha in polymerization mode, a_f in
    /// fragmentation mode. Strictly positive.
    pub modulation: f64,
}

impl ProblemSpec {
    pub fn new(
        tau: RateModel,
        beta: RateModel,
        kernel: KernelModel,
        mode: ModulationMode,
        modulation: f64,
    ) -> Result<Self> {
        require(modulation > 0.0 && modulation.is_finite(), "modulation must be positive")?;
        Ok(ProblemSpec { tau, beta, kernel, mode, modulation })
    }

    /// Growth rate with modulation applied.
    pub fn tau_at(&self, x: f64) -> Result<f64> {
        let v = self.tau.eval(x)?;
        Ok(match self.mode {
            ModulationMode::Polymerization => self.modulation * v,
            ModulationMode::Fragmentation => v,
        })
    }

    /// Division rate with modulation applied.
    pub fn beta_at(&self, x: f64) -> Result<f64> {
        let v = self.beta.eval(x)?;
        Ok(match self.mode {
            ModulationMode::Polymerization => v,
            ModulationMode::Fragmentation => self.modulation * v,
        })
    }

    /// Same problem at a different modulation value.
    pub fn with_modulation(&self, modulation: f64) -> Result<Self> {
        ProblemSpec::new(
            self.tau.clone(),
            self.beta.clone(),
            self.kernel.clone(),
            self.mode,
            modulation,
        )
    }
}

/// One assumption check: identifier, severity, verdict, and a human-readable
/// detail line.
#[derive(Debug, Clone)]
pub struct AssumptionCheck {
    pub id: &'static str,
    /// Hard checks block solving entirely; advisory checks only gate the
    /// asymptotic machinery (rescaling, limit laws, expansions).
    pub hard: bool,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of [`validate_assumptions`]. Never an error: every check reports
/// its verdict and callers decide what to block.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    /// True when every hard check passed; solving is allowed.
    pub fn solvable(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.hard)
    }

    /// True when every check passed, advisory ones included. Gates the
    /// asymptotic paths and the proof-backed solution invariants.
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, id: &'static str, hard: bool, passed: bool, detail: String) {
        self.checks.push(AssumptionCheck { id, hard, passed, detail });
    }
}

/// Checks the model assumptions behind existence and uniqueness of the
/// principal eigenpair. Exponent-based checks that need an undeclared
/// tabulated tail are skipped when hard (the finite-grid problem is still
/// solvable) and failed when advisory (the asymptotic machinery cannot run).
pub fn validate_assumptions(spec: &ProblemSpec) -> AssumptionReport {
    let mut report = AssumptionReport { checks: Vec::new() };

    let positive = |m: &RateModel| match m {
        RateModel::Tabulated { samples, .. } => samples.iter().all(|&(_, f)| f > 0.0),
        RateModel::OffsetPower { offset, scale, .. } => *offset > 0.0 || *scale > 0.0,
        _ => true,
    };
    let pos = positive(&spec.tau) && positive(&spec.beta);
    report.push(
        "rates-positive",
        true,
        pos,
        if pos {
            "both rates stay positive on compact subsets of (0, inf)".into()
        } else {
            "a tabulated rate vanishes inside its range".into()
        },
    );

    let (m0, m1, m2) = spec.kernel.moments();
    report.push(
        "kernel-mass",
        true,
        (m0 - 1.0).abs() <= 1e-10,
        format!("fragment count normalization: zeroth moment {m0:.12} (want 1)"),
    );
    report.push(
        "kernel-mean",
        true,
        (m1 - 0.5).abs() <= 1e-10,
        format!("mass conservation: first moment {m1:.12} (want 1/2)"),
    );
    report.push(
        "kernel-second-moment",
        true,
        m2 <= 0.5 - 1e-10,
        format!("genuine fragmentation: second moment {m2:.12} (want < 1/2)"),
    );

    let nu0 = spec.tau.exponent_at(Limit::Zero);
    let nu_inf = spec.tau.exponent_at(Limit::Infinity);
    let g0 = spec.beta.exponent_at(Limit::Zero);
    let g_inf = spec.beta.exponent_at(Limit::Infinity);

    // Small fragments must be transported away: x^g / tau integrable at 0
    // for some g between 0 and the kernel's cumulative-density exponent.
    match nu0 {
        Some(nu) => {
            let gmax = spec.kernel.cdf_exponent();
            let ok = nu < 1.0 + gmax;
            report.push(
                "small-fragment-transport",
                true,
                ok,
                format!("growth exponent at zero {nu} vs kernel bound {}", 1.0 + gmax),
            );
        }
        None => report.push(
            "small-fragment-transport",
            true,
            true,
            "skipped: growth tail at zero undeclared".into(),
        ),
    }

    // Division rate locally integrable down to zero: exponent > -1.
    match g0 {
        Some(g) => report.push(
            "division-integrable-zero",
            true,
            g > -1.0,
            format!("division exponent at zero {g} (want > -1)"),
        ),
        None => report.push(
            "division-integrable-zero",
            true,
            true,
            "skipped: division tail at zero undeclared".into(),
        ),
    }

    // beta/tau integrable at zero; in exponent form 1 + gamma - nu > 0.
    match (g0, nu0) {
        (Some(g), Some(nu)) => report.push(
            "growth-dominates-zero",
            false,
            1.0 + g - nu > 0.0,
            format!("1 + gamma - nu = {} at zero (want > 0)", 1.0 + g - nu),
        ),
        _ => report.push(
            "growth-dominates-zero",
            false,
            false,
            "tail exponents at zero undeclared".into(),
        ),
    }

    // x beta / tau -> inf at infinity; in exponent form 1 + gamma - nu > 0.
    match (g_inf, nu_inf) {
        (Some(g), Some(nu)) => report.push(
            "division-dominates-infinity",
            false,
            1.0 + g - nu > 0.0,
            format!("1 + gamma - nu = {} at infinity (want > 0)", 1.0 + g - nu),
        ),
        _ => report.push(
            "division-dominates-infinity",
            false,
            false,
            "tail exponents at infinity undeclared".into(),
        ),
    }

    report
}
