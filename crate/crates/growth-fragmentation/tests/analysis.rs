use growth_fragmentation::analysis::{
    check_limit_law, find_disease_steady_states, fit_critical_expansion, optimize_sonication,
    sweep_eigenvalue, CriticalExpansion, ExtremumKind, OptimumLocation, Stability,
};
use growth_fragmentation::analysis::log_grid;
use growth_fragmentation::coefficients::{
    KernelModel, Limit, ModulationMode, ProblemSpec, RateModel,
};
use growth_fragmentation::eigensolver::IterationConfig;
use growth_fragmentation::grid::{build_grid, Grid};

fn bounded_growth() -> ProblemSpec {
    ProblemSpec::new(
        RateModel::rational_power(8.0, 0.2, 1.0, 2.0, 4.2).unwrap(),
        RateModel::rational_power(1.0, 3.0, 15.0, 1.0, 4.5).unwrap(),
        KernelModel::Uniform,
        ModulationMode::Polymerization,
        1.0,
    )
    .unwrap()
}

fn superlinear_division() -> ProblemSpec {
    ProblemSpec::new(
        RateModel::rational_power(1.2, 1.8, 1.0, 2.0, 2.8).unwrap(),
        RateModel::rational_power(4.0, 2.0, 10.0, 1.0, 0.8).unwrap(),
        KernelModel::Uniform,
        ModulationMode::Fragmentation,
        1.0,
    )
    .unwrap()
}

fn saturating_transport() -> ProblemSpec {
    ProblemSpec::new(
        RateModel::rational_power(1.0, 1.0, 1.0, 1.0, 1.0).unwrap(),
        RateModel::power_law(1.0, 1.0).unwrap(),
        KernelModel::Uniform,
        ModulationMode::Fragmentation,
        1.0,
    )
    .unwrap()
}

fn base() -> Grid {
    build_grid(10.0, 400).unwrap()
}

fn close(got: f64, want: f64, rel: f64) -> bool {
    (got - want).abs() <= rel * want.abs()
}

// Eigenvalues along the polymerization sweep. Values outside the direct
// window [0.1, 10] come back through the rescaled path, which lands within
// about 0.2% of a direct solve; inside the window they are pinned tight.
const POLY_SWEEP: [f64; 25] = [
    1.18490188806947266e-02,
    1.73022634834342597e-02,
    2.47238852682348034e-02,
    3.45203638951862984e-02,
    4.70448418140815700e-02,
    6.25205983360269668e-02,
    8.09359759457555228e-02,
    1.01908457924250934e-01,
    1.24939708267916172e-01,
    1.47486084170532050e-01,
    1.67870488627503173e-01,
    1.83438266344905898e-01,
    1.91627105775693862e-01,
    1.90761519034087612e-01,
    1.80783648892081317e-01,
    1.63449317413507877e-01,
    1.41744876469875186e-01,
    1.18347564345153269e-01,
    9.66611718936006142e-02,
    7.75914838230385290e-02,
    6.15916325518991933e-02,
    4.85584606511359901e-02,
    3.81305305323771798e-02,
    2.98742909981726604e-02,
    2.33764755625395816e-02,
];

#[test]
fn polymerization_sweep_has_interior_maximum() {
    let params = log_grid(1e-3, 1e3, 25).unwrap();
    let curve = sweep_eigenvalue(&bounded_growth(), &params, base(), &IterationConfig::default())
        .unwrap();
    assert_eq!(curve.samples.len(), 25);

    for (i, s) in curve.samples.iter().enumerate() {
        let lambda = s.lambda.expect("sweep converged everywhere");
        let direct_window = (8..=16).contains(&i);
        assert_eq!(s.rescaled, !direct_window, "window split at index {i}");
        assert_eq!(s.theta.is_some(), !direct_window);
        let rel = if direct_window { 5e-6 } else { 1e-2 };
        assert!(
            close(lambda, POLY_SWEEP[i], rel),
            "index {i}: {lambda} vs {} (rel {rel})",
            POLY_SWEEP[i]
        );
        assert_eq!(s.audit_ok, Some(true), "audit failed at index {i}: {:?}", s.audit_failures);
        assert!(s.audit_failures.is_empty());
        assert!(s.iterations > 0);
    }

    assert!(!curve.monotone);
    assert_eq!(curve.extrema.len(), 1, "extrema: {:?}", curve.extrema);
    let m = &curve.extrema[0];
    assert_eq!(m.kind, ExtremumKind::Maximum);
    assert_eq!(m.index, 12);
    assert!((m.parameter - 1.0).abs() < 1e-9);
    assert_eq!(Some(m.value), curve.samples[12].lambda);

    // both tails sit far below the peak
    let peak = m.value;
    let left = curve.samples[0].lambda.unwrap() / peak;
    let right = curve.samples[24].lambda.unwrap() / peak;
    assert!((left - 0.061834).abs() < 2e-3, "left ratio {left}");
    assert!((right - 0.121989).abs() < 2e-3, "right ratio {right}");
}

#[test]
fn fragmentation_curve_subset_is_pinned() {
    let cfg = IterationConfig::default();
    // (exponent of 10 in the sweep grid, frozen direct-solve value)
    let cases = [
        (-3.0, 1.46727538183331098e-02, true),
        (-0.25, 2.79489055389955054e-01, false),
        (0.0, 3.35819832080830882e-01, false),
        (1.0, 4.77422617652826398e-01, false),
        (1.25, 3.95356339694053982e-01, true),
        (1.5, 3.23571680796004735e-01, true),
        (3.0, 3.71042181600111723e-02, true),
    ];
    let template = superlinear_division();
    for (e, want, rescaled) in cases {
        let p = 10f64.powf(e);
        let pt = growth_fragmentation::analysis::eigenvalue_at(&template, p, base(), &cfg)
            .unwrap();
        assert_eq!(pt.rescaled, rescaled, "window split at af = {p}");
        let rel = if rescaled { 1e-2 } else { 5e-6 };
        assert!(close(pt.lambda, want, rel), "af {p}: {} vs {want}", pt.lambda);
        if !rescaled {
            assert_eq!((pt.run.solution.grid.r(), pt.run.solution.grid.n()), (10.0, 400));
        }
    }
}

#[test]
fn flat_curve_reports_no_extrema() {
    // constant beta forces lambda = 2 at every modulation, so the sweep is
    // numerically flat and must stay extremum-free; sublinear transport
    // keeps the profile compact and the grid at its base size
    let spec = ProblemSpec::new(
        RateModel::power_law(1.0, 0.5).unwrap(),
        RateModel::power_law(2.0, 0.0).unwrap(),
        KernelModel::Uniform,
        ModulationMode::Polymerization,
        1.0,
    )
    .unwrap();
    let params = log_grid(0.2, 5.0, 5).unwrap();
    let curve = sweep_eigenvalue(&spec, &params, base(), &IterationConfig::default()).unwrap();
    assert!(curve.extrema.is_empty(), "{:?}", curve.extrema);
    assert!(curve.monotone);
    for s in &curve.samples {
        assert!(close(s.lambda.unwrap(), 2.0, 1e-9));
    }
}

#[test]
fn vanishing_limits_follow_the_dilation_slopes() {
    let cfg = IterationConfig::default();

    // polymerization, alpha -> 0: lambda ~ alpha^(gamma k), gamma k = 3/3.8
    let report = check_limit_law(&bounded_growth(), Limit::Zero, base(), &cfg).unwrap();
    assert_eq!(report.predicted_limit, Some(0.0));
    let want = [
        (1e-4, 2.21021794283016680e-03),
        (1e-5, 3.66169776039609537e-04),
        (1e-6, 5.95627319016692587e-05),
    ];
    for ((p, l), (wp, wl)) in report.samples.iter().zip(want) {
        assert_eq!(*p, wp);
        assert!(close(*l, wl, 5e-6), "{l} vs {wl}");
    }
    assert!((report.theory_slope.unwrap() - 3.0 / 3.8).abs() < 1e-12);
    assert!((report.empirical_slope.unwrap() - 0.78473025).abs() < 1e-4);
    assert_eq!(report.slope_ok, Some(true));

    // polymerization, alpha -> inf: gamma k = -1.5/3.5
    let report = check_limit_law(&bounded_growth(), Limit::Infinity, base(), &cfg).unwrap();
    let want = [
        (1e4, 8.72660621043857242e-03),
        (1e5, 3.25326016989345565e-03),
        (1e6, 1.21269138055506718e-03),
    ];
    for ((p, l), (wp, wl)) in report.samples.iter().zip(want) {
        assert_eq!(*p, wp);
        assert!(close(*l, wl, 5e-6), "{l} vs {wl}");
    }
    assert!((report.theory_slope.unwrap() - (-1.5 / 3.5)).abs() < 1e-12);
    assert!((report.empirical_slope.unwrap() - (-0.42854754)).abs() < 1e-4);
    assert_eq!(report.slope_ok, Some(true));

    // fragmentation, af -> inf: (1 - nu)k = -0.8/1.2
    let report = check_limit_law(&superlinear_division(), Limit::Infinity, base(), &cfg).unwrap();
    let want = [
        (1e4, 7.97540194668448429e-03),
        (1e5, 1.71736200087189636e-03),
        (1e6, 3.69953282297587501e-04),
    ];
    for ((p, l), (wp, wl)) in report.samples.iter().zip(want) {
        assert_eq!(*p, wp);
        assert!(close(*l, wl, 5e-6), "{l} vs {wl}");
    }
    assert!((report.theory_slope.unwrap() - (-0.8 / 1.2)).abs() < 1e-12);
    assert!((report.empirical_slope.unwrap() - (-0.66680285)).abs() < 1e-4);
    assert_eq!(report.slope_ok, Some(true));
}

// The af -> 0 law converges so slowly that three probe decades still sit
// 0.06 below the asymptotic slope, outside the 0.05 acceptance band. The
// report is expected to say so rather than smooth it over.
#[test]
fn slow_fragmentation_limit_misses_its_slope_band() {
    let report =
        check_limit_law(&superlinear_division(), Limit::Zero, base(), &IterationConfig::default())
            .unwrap();
    let want = [
        (1e-4, 4.22105584396305442e-03),
        (1e-5, 1.16712528710189670e-03),
        (1e-6, 3.10906021336766183e-04),
    ];
    for ((p, l), (wp, wl)) in report.samples.iter().zip(want) {
        assert_eq!(*p, wp);
        assert!(close(*l, wl, 5e-6), "{l} vs {wl}");
    }
    assert!((report.theory_slope.unwrap() - 2.0 / 3.2).abs() < 1e-12);
    assert!((report.empirical_slope.unwrap() - 0.56639598).abs() < 1e-4);
    assert_eq!(report.slope_ok, Some(false));
}

#[test]
fn finite_limit_approach_is_tracked_through_gaps() {
    let report = check_limit_law(
        &saturating_transport(),
        Limit::Infinity,
        base(),
        &IterationConfig::default(),
    )
    .unwrap();
    assert_eq!(report.predicted_limit, Some(1.0));
    assert!(report.empirical_slope.is_none());
    assert!(report.diverges.is_none());
    let want_lambda = [
        (1e1, 8.90021431762307191e-01),
        (1e2, 1.00587180446402780e+00),
        (1e3, 1.02298995017710470e+00),
    ];
    for ((p, l), (wp, wl)) in report.samples.iter().zip(want_lambda) {
        assert_eq!(*p, wp);
        assert!(close(*l, wl, 5e-6), "{l} vs {wl}");
    }
    let want_gaps = [1.09978568237692809e-01, 5.87180446402779666e-03, 2.29899501771047010e-02];
    for (g, w) in report.gaps.iter().zip(want_gaps) {
        assert!((g - w).abs() < 2e-5, "gap {g} vs {w}");
    }
    // the gap overshoots zero and grows again on the coarse-probe side
    assert_eq!(report.approach_monotone, Some(false));
}

#[test]
fn critical_expansion_recovers_quadratic_exponent() {
    // division 1 + x near the critical value 1; transport sqrt(x) gives
    // dilation index k = 2, so the correction exponent is k * 1 = 2
    let spec = ProblemSpec::new(
        RateModel::power_law(1.0, 0.5).unwrap(),
        RateModel::offset_power(1.0, 1.0, 1.0).unwrap(),
        KernelModel::Uniform,
        ModulationMode::Polymerization,
        1.0,
    )
    .unwrap();
    let decl = CriticalExpansion { leading: 1.0, correction: 1.0, correction_exponent: 1.0 };
    let report =
        fit_critical_expansion(&spec, &decl, base(), &IterationConfig::default()).unwrap();

    // the limit problem has constant division, so its eigenvalue is exactly 1
    assert!((report.theta_limit - 1.0).abs() < 1e-12);
    assert_eq!((report.limit_grid.r(), report.limit_grid.n()), (80.0, 3200));
    let corrections = [
        8.13224177997895481e-07,
        3.77463452339021899e-06,
        1.75199192919972546e-05,
        8.13120426816915653e-05,
        3.77240149929125579e-04,
        1.74719837528547473e-03,
        8.02957676374238538e-03,
    ];
    assert_eq!(report.samples.len(), 7);
    for ((_, c), w) in report.samples.iter().zip(corrections) {
        assert!(close(*c, w, 1e-4), "correction {c} vs {w}");
    }
    assert_eq!(report.theory_exponent, 2.0);
    assert!((report.fitted_exponent - 1.99794295).abs() < 1e-3);
    assert!(report.exponent_ok);
    assert!(close(report.theory_prefactor, 8.13225227323218669e-01, 5e-6));
    assert!(close(report.fitted_prefactor, 0.80369167, 1e-2));
}

// Fragmentation-side expansion: tau = x/(1+x) = x - x^2 + ... declared as
// leading x with a -x^2 correction. Three probe points fit a slope of -0.93
// against the predicted -1, outside the 5% band; the report must carry that
// verdict as measured.
#[test]
fn fragmentation_expansion_reports_its_slope_shortfall() {
    let decl = CriticalExpansion { leading: 1.0, correction: -1.0, correction_exponent: 2.0 };
    let report = fit_critical_expansion(
        &saturating_transport(),
        &decl,
        base(),
        &IterationConfig::default(),
    )
    .unwrap();
    assert!(close(report.theta_limit, 1.02500289706245828e+00, 5e-6));
    assert_eq!((report.limit_grid.r(), report.limit_grid.n()), (40.0, 1600));
    let want = [
        (30.0, 5.69781005455974876e-02),
        (100.0, 1.91310925984304880e-02),
        (300.0, 6.61858294232842148e-03),
    ];
    for ((p, c), (wp, wc)) in report.samples.iter().zip(want) {
        assert_eq!(*p, wp);
        assert!((c - wc).abs() < 3e-5, "correction {c} vs {wc}");
    }
    assert_eq!(report.theory_exponent, -1.0);
    assert!((report.fitted_exponent - (-0.93448894)).abs() < 1e-3);
    assert!(!report.exponent_ok);
    assert!(close(report.theory_prefactor, 2.02500890728945748e+00, 5e-6));
    assert!(close(report.fitted_prefactor, 1.38291506, 1e-2));
}

#[test]
fn steady_state_roots_bracket_the_unstable_window() {
    let mu0 = 9.58135528878469311e-02;
    let report = find_disease_steady_states(
        &bounded_growth(),
        mu0,
        50.0,
        1.0,
        base(),
        &IterationConfig::default(),
    )
    .unwrap();
    assert_eq!(report.v_bar, 50.0);
    assert_eq!(report.scan.len(), 33);
    assert_eq!(report.sign_changes, 2);
    assert_eq!(report.roots.len(), 2);

    let (v1, v2) = (&report.roots[0], &report.roots[1]);
    assert!(v1.v < v2.v);
    // root locations move by the rescaled-vs-direct method gap, well under 1%
    assert!(close(v1.v, 4.78552031069993944e-02, 1e-2), "V1 {}", v1.v);
    assert!(close(v2.v, 3.23859078139066696e+01, 1e-2), "V2 {}", v2.v);
    assert!(close(v1.lambda, mu0, 1e-3));
    assert!(close(v2.lambda, mu0, 1e-3));
    assert!(close(v1.integral_tau_u, 2.25191028685110739e+00, 2e-2));
    assert!(close(v2.integral_tau_u, 1.47098773311533960e-02, 2e-2));
    assert!(close(v1.rho, 9.68600586928169832e+03, 5e-2), "rho1 {}", v1.rho);
    assert!(close(v2.rho, 1.14166598877005665e+00, 5e-2), "rho2 {}", v2.rho);
    for root in &report.roots {
        assert!(root.v > 1e-3 && root.v < 50.0);
        assert_eq!(root.profile.len(), root.grid.n());
    }

    // above the upper root the disease-free state holds
    assert!(close(report.lambda_at_v_bar, 8.12389947220133052e-02, 1e-2));
    assert_eq!(report.disease_free, Stability::Stable);
}

#[test]
fn disease_free_labels_follow_the_monomer_level() {
    let mu0 = 9.58135528878469311e-02;
    let cfg = IterationConfig::default();

    // v_bar below the lower crossing: no roots, stable
    let low =
        find_disease_steady_states(&bounded_growth(), mu0, 1.0, 50.0, base(), &cfg).unwrap();
    assert_eq!(low.v_bar, 0.02);
    assert_eq!(low.sign_changes, 0);
    assert!(low.roots.is_empty());
    assert_eq!(low.disease_free, Stability::Stable);

    // v_bar between the crossings: one root, unstable
    let mid =
        find_disease_steady_states(&bounded_growth(), mu0, 2.0, 1.0, base(), &cfg).unwrap();
    assert_eq!(mid.v_bar, 2.0);
    assert_eq!(mid.sign_changes, 1);
    assert_eq!(mid.roots.len(), 1);
    assert!(close(mid.roots[0].v, 4.78552031069993944e-02, 1e-2));
    assert_eq!(mid.disease_free, Stability::Unstable);
}

#[test]
fn sonication_optimum_sits_past_the_standard_window() {
    let cfg = IterationConfig::default();

    // over [1, 4] the gain is still climbing at the cap
    let capped = optimize_sonication(&superlinear_division(), 4.0, 1e-3, base(), &cfg).unwrap();
    assert_eq!(capped.location, OptimumLocation::Boundary);
    assert!(!capped.degenerate);
    assert!(close(capped.afrag_opt, 4.0, 1e-12));
    assert!(close(capped.lambda_opt, 4.54995878799074605e-01, 5e-6));
    assert_eq!(capped.scan.len(), 33);

    // widening the window exposes the interior optimum
    let wide = optimize_sonication(&superlinear_division(), 20.0, 1e-3, base(), &cfg).unwrap();
    assert_eq!(wide.location, OptimumLocation::Interior);
    // the top is flat enough that discretization moves the argmax by about
    // a percent; the peak value itself is stable to 1e-5
    assert!((8.2..9.0).contains(&wide.afrag_opt), "afrag_opt {}", wide.afrag_opt);
    assert!(close(wide.lambda_opt, 4.78606681279741708e-01, 5e-5), "{}", wide.lambda_opt);
    assert!(wide.lambda_opt > capped.lambda_opt);
    // refinement never returns less than the best scan sample
    let scan_best = wide.scan.iter().map(|s| s.1).fold(0.0f64, f64::max);
    assert!(wide.lambda_opt >= scan_best);
}
