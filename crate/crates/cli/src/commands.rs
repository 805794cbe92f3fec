//! The subcommands. Each returns an [`Output`]: a JSON report plus any CSV
//! files, both fully determined by the resolved configuration.

use kuramoto_mfg::dynamics::{
    cosine_perturbation, evolve_mfg, fit_decay_rate, MfgOptions, Terminal,
};
use kuramoto_mfg::equilibrium::{find_fixed_points, EquilibriumMap, FixedPointReport, ScanOptions};
use kuramoto_mfg::operator::{
    norm_bound, norm_closed_form, two_dirac_laplace_solve, ExponentialSignal,
    ResolventMethod, StabilityOperator, TimeGrid, WeightedSignal,
};
use kuramoto_mfg::penrose::{count_zeros, default_theta_max, p, trace_curve, RootCase, DEFAULT_CURVE_SAMPLES};
use kuramoto_mfg::{kappa_c, Error, FrequencyDistribution, ModelParams, OrderParameters, TorusGrid};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{to_canonical, Csv};

const DEFAULT_SCAN_POINTS: usize = 64;
const DEFAULT_FORCING_RATE: f64 = 0.1;

/// Result of one subcommand.
#[derive(Debug, Clone)]
pub struct Output {
    /// Base name of the JSON report file.
    pub name: String,
    pub report: Value,
    /// Additional files as `(file name, contents)`.
    pub files: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

impl Output {
    fn new(name: &str, report: Value, files: Vec<(String, String)>, warnings: Vec<String>) -> Self {
        Self {
            name: name.to_string(),
            report: to_canonical(&report),
            files,
            warnings,
        }
    }
}

struct Resolved {
    params: ModelParams,
    dist: FrequencyDistribution,
}

fn resolve(cfg: &RunConfig) -> Result<Resolved, CliError> {
    Ok(Resolved {
        params: cfg.params()?,
        dist: cfg.dist.build()?,
    })
}

fn torus_grid(cfg: &RunConfig) -> Result<TorusGrid, CliError> {
    TorusGrid::new(cfg.grid_n).map_err(|e| CliError::Config(format!("grid_n: {e}")))
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn complex(z: Complex64) -> Value {
    json!({"re": z.re, "im": z.im})
}

fn root_case(case: RootCase) -> &'static str {
    match case {
        RootCase::ComplexQuadruple => "complex-quadruple",
        RootCase::FourReal => "four-real",
        RootCase::DoubleReal => "double-real",
        RootCase::CriticalLine => "critical-line",
    }
}

/// Critical couplings `κ_c` and `κ_P`.
pub fn thresholds(cfg: &RunConfig) -> Result<Output, CliError> {
    let Resolved { params, dist } = resolve(cfg)?;
    let kc = kappa_c(&dist, &params)?;
    let theta_max = cfg.penrose.theta_max.unwrap_or_else(|| default_theta_max(&dist, &params));
    let samples = cfg.penrose.samples.unwrap_or(DEFAULT_CURVE_SAMPLES);
    let curve = trace_curve(&dist, &params, theta_max, samples)?;
    let kp = curve.kappa_p();
    let crossings: Vec<Value> = curve
        .crossings
        .iter()
        .map(|c| json!({"theta": c.theta, "re_p": c.re_p}))
        .collect();
    let report = json!({
        "command": "thresholds",
        "config": cfg,
        "gamma": params.gamma(),
        "kappa_c": kc,
        "kappa_c_delta0": params.kappa_c_delta0(),
        "kappa_P": finite_or_null(kp),
        "kappa_P_over_kappa_c": finite_or_null(kp / kc),
        "theta_max": theta_max,
        "crossings": crossings,
    });
    Ok(Output::new("thresholds", report, Vec::new(), Vec::new()))
}

fn fixed_points_json(report: &FixedPointReport) -> Vec<Value> {
    report
        .fixed_points
        .iter()
        .map(|fp| {
            json!({
                "alpha": fp.alpha,
                "residual": fp.residual,
                "slope": fp.slope,
                "tangency_suspected": fp.tangency_suspected,
            })
        })
        .collect()
}

/// Scan of the reduced map `G_κ` and its fixed points.
pub fn gmap(cfg: &RunConfig) -> Result<Output, CliError> {
    let Resolved { params, dist } = resolve(cfg)?;
    let grid = torus_grid(cfg)?;
    let kappa = params.kappa();
    let mut warnings = Vec::new();
    let requested = cfg.gmap.alpha_max.unwrap_or(kappa);
    if !(requested.is_finite() && requested > 0.0) {
        return Err(CliError::Config(format!("gmap.alpha_max: must be positive, got {requested}")));
    }
    if requested > kappa {
        warnings.push(format!(
            "alpha_max {requested} exceeds kappa {kappa}; clipped to kappa since G <= kappa"
        ));
    }
    let alpha_max = requested.min(kappa);
    let points = cfg.gmap.points.unwrap_or(DEFAULT_SCAN_POINTS);
    if points == 0 {
        return Err(CliError::Config("gmap.points: must be positive".into()));
    }
    let report = find_fixed_points(&params, &dist, ScanOptions::with_points(alpha_max, points), &grid)?;
    let kc = kappa_c(&dist, &params)?;
    if let Some(a) = report.failure_boundary {
        warnings.push(format!(
            "stationary HJB solve failed at alpha {a}; scan stops there (a larger grid_n may help)"
        ));
    }

    let mut csv = Csv::new(vec!["alpha", "G"]);
    for &(a, g) in &report.samples {
        csv.push(vec![a, g]);
    }
    let d = report.derivative_at_zero;
    let json = json!({
        "command": "gmap",
        "config": cfg,
        "alpha_max": alpha_max,
        "scan_points": points,
        "kappa_c": kc,
        "slope_at_zero_expected": kappa / kc,
        "derivative_at_zero": [[d[(0, 0)], d[(0, 1)]], [d[(1, 0)], d[(1, 1)]]],
        "fixed_points": fixed_points_json(&report),
        "failure_boundary": report.failure_boundary,
        "warnings": warnings,
    });
    Ok(Output::new("gmap", json, vec![("gmap.csv".into(), csv.render())], warnings))
}

/// Penrose curve `θ ↦ P(iθ)`, its real-axis crossings and `κ_P`.
pub fn penrose(cfg: &RunConfig) -> Result<Output, CliError> {
    let Resolved { params, dist } = resolve(cfg)?;
    let theta_max = cfg.penrose.theta_max.unwrap_or_else(|| default_theta_max(&dist, &params));
    let samples = cfg.penrose.samples.unwrap_or(DEFAULT_CURVE_SAMPLES);
    let curve = trace_curve(&dist, &params, theta_max, samples)?;
    let mut csv = Csv::new(vec!["theta", "reP", "imP"]);
    for (t, v) in curve.thetas.iter().zip(&curve.values) {
        csv.push(vec![*t, v.re, v.im]);
    }
    let crossings: Vec<Value> = curve
        .crossings
        .iter()
        .map(|c| json!({"theta": c.theta, "re_p": c.re_p}))
        .collect();
    let rightmost = curve
        .rightmost_positive()
        .map(|c| json!({"theta": c.theta, "re_p": c.re_p}));
    let report = json!({
        "command": "penrose",
        "config": cfg,
        "theta_max": theta_max,
        "samples": samples,
        "p_at_zero": p(&dist, &params, Complex64::new(0.0, 0.0))?.re,
        "crossings": crossings,
        "rightmost_positive": rightmost,
        "kappa_P": finite_or_null(curve.kappa_p()),
    });
    Ok(Output::new("penrose", report, vec![("penrose.csv".into(), csv.render())], Vec::new()))
}

fn fourier_nonnegative(dist: &FrequencyDistribution, grid: &TimeGrid) -> Result<bool, CliError> {
    for t in grid.nodes() {
        if dist.fourier(t)? < -1e-12 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Norm certificate, zero counts and, for two-Dirac laws, the
/// Laplace-domain resolvent, for every requested coupling.
pub fn stability(cfg: &RunConfig) -> Result<Output, CliError> {
    let Resolved { params, dist } = resolve(cfg)?;
    let lambda = cfg.lambda_or_default();
    let limit = 0.5 * params.sigma2();
    if !(lambda > 0.0 && lambda < limit) {
        return Err(CliError::Config(format!("lambda: must lie in (0, {limit}), got {lambda}")));
    }
    let default_grid = TimeGrid::default_for(&params);
    let grid = TimeGrid::new(cfg.horizon.unwrap_or(default_grid.horizon()), cfg.time_n)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let op = StabilityOperator::new(&params, &dist, grid)?;
    let norm = op.norm(lambda);
    let bound = norm_bound(&params, lambda);
    let closed_form = if fourier_nonnegative(&dist, &grid)? {
        Some(norm_closed_form(&params, &dist, lambda)?)
    } else {
        None
    };
    let kappas = cfg.stability.kappas.clone().unwrap_or_else(|| vec![params.kappa()]);
    let rate = cfg.stability.forcing_rate.unwrap_or(DEFAULT_FORCING_RATE);
    let omega0 = cfg.dist.two_dirac_omega();

    let mut entries = Vec::new();
    let mut files = Vec::new();
    for (idx, &kappa) in kappas.iter().enumerate() {
        let pk = params
            .with_kappa(kappa)
            .map_err(|e| CliError::Config(format!("stability.kappas: {e}")))?;
        let contraction = kappa * norm;
        let norm_ok = contraction < 1.0;
        let zeros = count_zeros(&dist, &pk, kappa, (0.0, params.beta()), None);
        let zero_count = match &zeros {
            Ok(n) => json!(n),
            Err(e) => json!({"error": e.to_string()}),
        };

        let mut laplace_ok = false;
        let mut singular = false;
        let laplace = match omega0 {
            None => json!({"status": "not-applicable"}),
            Some(w0) => match two_dirac_laplace_solve(&pk, w0, kappa, lambda, ExponentialSignal { rate }) {
                Ok(sol) => {
                    laplace_ok = true;
                    let samples: Vec<Value> = laplace_sample_points(params.beta())
                        .into_iter()
                        .map(|z| {
                            let h = sol.hhat(z);
                            json!({"re_z": z.re, "im_z": z.im, "re_h": h.re, "im_h": h.im})
                        })
                        .collect();
                    json!({
                        "status": "solved",
                        "forcing_rate": rate,
                        "case": root_case(sol.case),
                        "a": complex(sol.a),
                        "b": complex(sol.b),
                        "roots": sol.quartic.roots.iter().map(|&r| complex(r)).collect::<Vec<_>>(),
                        "samples": samples,
                    })
                }
                Err(Error::PenroseViolated { zeros }) => json!({"status": "penrose-violated", "zeros": zeros}),
                Err(Error::SingularSystem { .. }) => {
                    singular = true;
                    json!({"status": "singular"})
                }
                Err(e) => json!({"status": "failed", "error": e.to_string()}),
            },
        };

        let zero_free = matches!(zeros, Ok(0));
        let mut via = Vec::new();
        if norm_ok {
            via.push("norm");
        }
        if zero_free && laplace_ok {
            via.push("zero-count");
        }
        let certificate = if !via.is_empty() {
            "yes"
        } else if singular {
            "no"
        } else {
            "unknown"
        };

        let mut entry = json!({
            "kappa": kappa,
            "kappa_norm": contraction,
            "norm_certificate": norm_ok,
            "zero_count": zero_count,
            "laplace": laplace,
            "certificate": certificate,
            "certified_by": via,
        });
        if cfg.stability.resolvent {
            let phi = WeightedSignal::from_fn(grid, lambda, |t| (-rate * t).exp())?;
            match op.solve_resolvent(kappa, &phi) {
                Ok(sol) => {
                    let mut csv = Csv::new(vec!["t", "phi", "k"]);
                    for (i, t) in grid.nodes().into_iter().enumerate() {
                        csv.push(vec![t, phi.values()[i], sol.k.values()[i]]);
                    }
                    files.push((format!("resolvent_{idx}.csv"), csv.render()));
                    let method = match sol.method {
                        ResolventMethod::Neumann { iterations } => json!({"neumann": iterations}),
                        ResolventMethod::Dense => json!("dense"),
                    };
                    entry["resolvent"] = json!({
                        "file": format!("resolvent_{idx}.csv"),
                        "residual": sol.residual,
                        "method": method,
                        "norm_k": sol.k.norm(),
                    });
                }
                Err(e) => entry["resolvent"] = json!({"error": e.to_string()}),
            }
        }
        entries.push(entry);
    }

    let report = json!({
        "command": "stability",
        "config": cfg,
        "lambda": lambda,
        "horizon": grid.horizon(),
        "time_n": grid.n(),
        "op_norm_L": norm,
        "norm_bound": bound,
        "norm_closed_form": closed_form,
        "closed_form_relative_gap": closed_form.map(|c| (norm - c).abs() / c),
        "truncation_bound": op.truncation_bound(lambda),
        "kappa_c": kappa_c(&dist, &params)?,
        "kappas": entries,
    });
    Ok(Output::new("stability", report, files, Vec::new()))
}

fn laplace_sample_points(beta: f64) -> Vec<Complex64> {
    let mut pts = Vec::new();
    for x in [0.25 * beta, 0.75 * beta] {
        for y in [0.0, 1.0, 2.0, 3.0] {
            pts.push(Complex64::new(x, y));
        }
    }
    pts
}

/// Forward–backward mean-field game dynamics from a perturbed uniform
/// state, or from the largest fixed point of the G-map.
pub fn simulate(cfg: &RunConfig) -> Result<Output, CliError> {
    let Resolved { params, dist } = resolve(cfg)?;
    let grid = torus_grid(cfg)?;
    let sim = &cfg.simulate;
    let mut opts = MfgOptions::for_params(&params);
    if let Some(h) = cfg.horizon {
        opts.horizon = h;
    }
    opts.steps = sim.steps;
    opts.damping = sim.damping;
    opts.max_sweeps = sim.max_sweeps;
    opts.tol = sim.tol;

    let mut warnings = Vec::new();
    let mut alpha_star = None;
    let initial = if sim.seed_equilibrium {
        let points = cfg.gmap.points.unwrap_or(DEFAULT_SCAN_POINTS);
        let scan = ScanOptions::with_points(params.kappa(), points);
        let report = find_fixed_points(&params, &dist, scan, &grid)?;
        let best = report
            .fixed_points
            .iter()
            .map(|fp| fp.alpha)
            .fold(0.0, f64::max);
        if best == 0.0 {
            warnings.push("no nonzero fixed point; seeding at the uniform density".to_string());
        }
        let alpha = OrderParameters::new(best, 0.0);
        alpha_star = Some(best);
        opts.terminal = Terminal::StationaryAt(alpha);
        opts.initial_h = alpha;
        EquilibriumMap::new(params, dist.clone(), &grid)?.densities(alpha)?
    } else {
        cosine_perturbation(&grid, &dist, sim.epsilon)
    };
    let traj = evolve_mfg(&params, &dist, &initial, &opts)?;
    let gm_max = traj.gm_max();

    let mut csv = Csv::new(vec!["t", "h1", "h2", "gm_max", "phi"]);
    for i in 0..traj.times.len() {
        csv.push(vec![traj.times[i], traj.h1[i], traj.h2[i], gm_max[i], traj.phi[i]]);
    }
    let mut files = vec![("simulate.csv".to_string(), csv.render())];
    if sim.dump_densities {
        let mut dump = Csv::new(vec!["t", "omega", "x", "density"]);
        let atoms: Vec<(f64, f64)> = dist.atoms().collect();
        for snap in &traj.snapshots {
            for ((omega, _), field) in atoms.iter().zip(&snap.densities) {
                for (x, v) in grid.points().into_iter().zip(field.values()) {
                    dump.push(vec![snap.time, *omega, x, *v]);
                }
            }
        }
        files.push(("densities.csv".to_string(), dump.render()));
    }

    let (decay_fit, decay_error) = match fit_decay_rate(&traj) {
        Ok(fit) => (
            json!({
                "lambda_fit": fit.lambda_fit,
                "c_fit": fit.c_fit,
                "r_squared": fit.r_squared,
                "points": fit.points,
            }),
            Value::Null,
        ),
        Err(e) => (Value::Null, json!(e.to_string())),
    };
    let equilibrium = alpha_star.map(|a| {
        let deviation = traj
            .h1
            .iter()
            .zip(&traj.h2)
            .map(|(h1, h2)| (h1 - a).hypot(*h2))
            .fold(0.0, f64::max);
        json!({"alpha_star": a, "max_deviation": deviation})
    });
    let report = json!({
        "command": "simulate",
        "config": cfg,
        "horizon": opts.horizon,
        "sweeps": traj.picard_residuals.len(),
        "final_residual": traj.final_residual(),
        "picard_residuals": traj.picard_residuals,
        "max_mass_error": traj.max_mass_error,
        "min_density": traj.min_density,
        "gm_initial": gm_max.first().copied(),
        "gm_final": gm_max.last().copied(),
        "decay_fit": decay_fit,
        "decay_fit_error": decay_error,
        "equilibrium": equilibrium,
        "warnings": warnings,
    });
    Ok(Output::new("simulate", report, files, warnings))
}
