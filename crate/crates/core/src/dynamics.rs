//! Finite-horizon mean-field game dynamics: a damped Picard iteration on the
//! order-parameter path `h(t)` around a backward HJB solve and a forward
//! Fokker–Planck solve for every quadrature frequency.
//!
//! HJB: Fourier pseudo-spectral in space, implicit in the linear terms and
//! explicit in `½|∂ₓu|²`. Fokker–Planck: implicit Euler with
//! Scharfetter–Gummel (Chang–Cooper) fluxes on the periodic cells, which
//! keeps the scheme positive and conservative.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hjb::{HjbOptions, HjbSolver};
use crate::model::{FrequencyDistribution, ModelParams};
use crate::torus::{OrderParameters, TorusField, TorusGrid};

const PICARD_TOL: f64 = 1e-7;
const NEGATIVITY_TOL: f64 = 1e-10;

/// Value function at the final time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Terminal {
    /// `v(T) = κ/β`, the value of the uniform equilibrium.
    #[default]
    Uniform,
    /// `v(T)` equal to the stationary value function for these order
    /// parameters.
    StationaryAt(OrderParameters),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfgOptions {
    pub horizon: f64,
    pub steps: usize,
    pub damping: f64,
    pub max_sweeps: usize,
    pub tol: f64,
    pub terminal: Terminal,
    /// Initial guess for `h`; constant in time.
    pub initial_h: OrderParameters,
    /// Keep a density snapshot every this many steps (0 disables).
    pub snapshot_every: usize,
}

impl MfgOptions {
    /// `T = 20/β`, 2000 steps, damping 0.5.
    pub fn for_params(params: &ModelParams) -> Self {
        Self {
            horizon: 20.0 / params.beta(),
            steps: 2000,
            damping: 0.5,
            max_sweeps: 200,
            tol: PICARD_TOL,
            terminal: Terminal::Uniform,
            initial_h: OrderParameters::ZERO,
            snapshot_every: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    /// One density per quadrature node.
    pub densities: Vec<TorusField>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfgTrajectory {
    pub times: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    /// `𝔤_m(μ^ω_t)` indexed `[step][node]`.
    pub gm: Vec<Vec<f64>>,
    /// `Φ(μ_t)`.
    pub phi: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub picard_residuals: Vec<f64>,
    /// `max |∫μ^ω_t − 1|` over steps and nodes.
    pub max_mass_error: f64,
    pub min_density: f64,
}

impl MfgTrajectory {
    pub fn gm_max(&self) -> Vec<f64> {
        self.gm.iter().map(|row| row.iter().copied().fold(0.0, f64::max)).collect()
    }

    pub fn final_residual(&self) -> f64 {
        self.picard_residuals.last().copied().unwrap_or(0.0)
    }
}

/// `max(|∫cos x μ|, |∫cos 2x μ|, |∫sin x μ|, |∫sin 2x μ|)`.
pub fn gm_distance(density: &TorusField) -> f64 {
    let (c1, s1) = density.harmonic(1);
    let (c2, s2) = density.harmonic(2);
    c1.abs().max(c2.abs()).max(s1.abs()).max(s2.abs())
}

/// `∫∫ cos y μ^ω(dy) g(dω)` and the sine counterpart.
pub fn mean_harmonics(densities: &[TorusField], dist: &FrequencyDistribution) -> (f64, f64) {
    let (mut c, mut s) = (0.0, 0.0);
    for (nu, (_, w)) in densities.iter().zip(dist.atoms()) {
        let (hc, hs) = nu.harmonic(1);
        c += w * hc;
        s += w * hs;
    }
    (c, s)
}

/// `Φ(μ) = ∫∫ sin²((x − x')/2) μ(dx) μ(dx') = ½ − ½(C² + S²)`.
pub fn potential_phi(densities: &[TorusField], dist: &FrequencyDistribution) -> f64 {
    let (c, s) = mean_harmonics(densities, dist);
    potential_from_harmonics(c, s)
}

pub fn potential_from_harmonics(c: f64, s: f64) -> f64 {
    0.5 - 0.5 * (c * c + s * s)
}

/// `c(y, μ) = ∫ (1 − cos(y − x)) μ(dx) = 1 − C cos y − S sin y`, the
/// linear derivative of [`potential_phi`].
pub fn cost_c(y: f64, c: f64, s: f64) -> f64 {
    1.0 - c * y.cos() - s * y.sin()
}

struct NodePass {
    cos_path: Vec<f64>,
    sin_path: Vec<f64>,
    gm: Vec<f64>,
    snapshots: Vec<TorusField>,
    mass_error: f64,
    min_density: f64,
}

#[derive(Debug, Clone)]
struct Stepper<'a> {
    params: &'a ModelParams,
    grid: &'a TorusGrid,
    dt: f64,
    steps: usize,
}

impl Stepper<'_> {
    /// Backward sweep; returns face drifts `ω − ∂ₓu(x_{j+½})` for every step.
    fn backward(&self, omega: f64, h1: &[f64], h2: &[f64], terminal: &[f64]) -> Vec<Vec<f64>> {
        let n = self.grid.n();
        let s = 0.5 * self.params.sigma2();
        let beta = self.params.beta();
        let hx = self.grid.spacing();
        let ks: Vec<f64> = (0..n).map(|j| self.grid.wavenumber(j)).collect();
        let nyq = n / 2;
        let deriv = |spec: &[Complex64], shift: f64| -> Vec<f64> {
            let out: Vec<Complex64> = spec
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    let mut m = Complex64::new(0.0, ks[j]) * Complex64::from_polar(1.0, ks[j] * shift);
                    if j == nyq {
                        m = Complex64::new(m.re, 0.0);
                    }
                    c * m
                })
                .collect();
            self.grid.inverse_real(out)
        };
        let (cosx, sinx): (Vec<f64>, Vec<f64>) = (0..n).map(|j| self.grid.point(j).cos()).zip((0..n).map(|j| self.grid.point(j).sin())).unzip();
        let mut drifts = vec![Vec::new(); self.steps + 1];
        let mut spec = self.grid.forward(terminal);
        let face = |spec: &[Complex64]| -> Vec<f64> { deriv(spec, 0.5 * hx).into_iter().map(|d| omega - d).collect() };
        drifts[self.steps] = face(&spec);
        for step in (0..self.steps).rev() {
            let du = deriv(&spec, 0.0);
            let rhs: Vec<f64> = (0..n)
                .map(|j| 0.5 * du[j] * du[j] + h1[step] * cosx[j] + h2[step] * sinx[j])
                .collect();
            let rhs_spec = self.grid.forward(&rhs);
            for (j, c) in spec.iter_mut().enumerate() {
                let k = ks[j];
                let denom = Complex64::new(1.0 + self.dt * (beta + s * k * k), -self.dt * omega * k);
                *c = (*c - self.dt * rhs_spec[j]) / denom;
            }
            drifts[step] = face(&spec);
        }
        drifts
    }

    /// Implicit Euler step of the Fokker–Planck equation with fluxes
    /// `F_{j+½} = (D/h)[B(−w)μⱼ − B(w)μⱼ₊₁]`, `w = b h/D`, `B(w) = w/(eʷ − 1)`.
    fn forward_step(&self, mu: &[f64], face_drift: &[f64]) -> Vec<f64> {
        let n = mu.len();
        let d = 0.5 * self.params.sigma2();
        let h = self.grid.spacing();
        let r = self.dt * d / (h * h);
        let bern = |w: f64| if w.abs() < 1e-10 { 1.0 - 0.5 * w } else { w / w.exp_m1() };
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut flux = vec![0.0; n];
        for j in 0..n {
            let w_right = face_drift[j] * h / d;
            let w_left = face_drift[(j + n - 1) % n] * h / d;
            diag[j] = 1.0 + r * (bern(-w_right) + bern(w_left));
            upper[j] = -r * bern(w_right);
            lower[j] = -r * bern(-w_left);
            flux[j] = r * (bern(-w_right) * mu[j] - bern(w_right) * mu[(j + 1) % n]);
        }
        // increment form A(μ' − μ) = −div F(μ), exact for steady states
        let rhs: Vec<f64> = (0..n).map(|j| flux[(j + n - 1) % n] - flux[j]).collect();
        let delta = solve_cyclic(&lower, &diag, &upper, &rhs);
        mu.iter().zip(&delta).map(|(m, d)| m + d).collect()
    }
}

/// Solves the periodic tridiagonal system
/// `lower[j] x[j−1] + diag[j] x[j] + upper[j] x[j+1] = rhs[j]`.
fn solve_cyclic(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let alpha = upper[n - 1];
    let beta = lower[0];
    let gamma = -diag[0];
    let mut b = diag.to_vec();
    b[0] -= gamma;
    b[n - 1] -= alpha * beta / gamma;
    let x = thomas(lower, &b, upper, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = thomas(lower, &b, upper, &u);
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / m;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Runs the damped Picard iteration for the coupled HJB/Fokker–Planck system
/// from the initial per-node densities.
pub fn evolve_mfg(
    params: &ModelParams,
    dist: &FrequencyDistribution,
    initial: &[TorusField],
    opts: &MfgOptions,
) -> Result<MfgTrajectory> {
    if initial.len() != dist.len() {
        return Err(Error::param(
            "initial",
            format!("expected {} densities, got {}", dist.len(), initial.len()),
        ));
    }
    if !(opts.horizon > 0.0 && opts.horizon.is_finite()) || opts.steps == 0 {
        return Err(Error::param("horizon", "need a positive horizon and at least one step"));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::param("damping", format!("must lie in (0, 1], got {}", opts.damping)));
    }
    let grid = initial[0].grid().clone();
    for mu in initial {
        if *mu.grid() != grid {
            return Err(Error::param("initial", "densities must share a grid"));
        }
        if (mu.integral() - 1.0).abs() > 1e-10 || mu.min() < -NEGATIVITY_TOL {
            return Err(Error::param("initial", "densities must be nonnegative with unit mass"));
        }
    }
    let atoms: Vec<(f64, f64)> = dist.atoms().collect();
    let terminals: Vec<Vec<f64>> = match opts.terminal {
        Terminal::Uniform => vec![vec![0.0; grid.n()]; atoms.len()],
        Terminal::StationaryAt(alpha) => {
            let solver = HjbSolver::new(&grid, HjbOptions::default())?;
            let offset = params.kappa() / params.beta();
            atoms
                .par_iter()
                .map(|&(omega, _)| {
                    solver
                        .solve(params, omega, alpha)
                        .map(|s| s.value.values().iter().map(|v| v - offset).collect())
                })
                .collect::<Result<_>>()?
        }
    };
    let steps = opts.steps;
    let stepper = Stepper {
        params,
        grid: &grid,
        dt: opts.horizon / steps as f64,
        steps,
    };
    let times: Vec<f64> = (0..=steps).map(|i| opts.horizon * i as f64 / steps as f64).collect();
    let mut h1 = vec![opts.initial_h.alpha1; steps + 1];
    let mut h2 = vec![opts.initial_h.alpha2; steps + 1];
    let mut residuals = Vec::new();
    let kappa = params.kappa();

    loop {
        let passes: Vec<NodePass> = atoms
            .par_iter()
            .zip(initial.par_iter())
            .zip(terminals.par_iter())
            .map(|((&(omega, _), mu0), term)| {
                let drifts = stepper.backward(omega, &h1, &h2, term);
                let mut mu = mu0.values().to_vec();
                let mut pass = NodePass {
                    cos_path: Vec::with_capacity(steps + 1),
                    sin_path: Vec::with_capacity(steps + 1),
                    gm: Vec::with_capacity(steps + 1),
                    snapshots: Vec::new(),
                    mass_error: 0.0,
                    min_density: f64::INFINITY,
                };
                for step in 0..=steps {
                    if step > 0 {
                        mu = stepper.forward_step(&mu, &drifts[step]);
                    }
                    let field = TorusField::from_raw(&grid, mu.clone());
                    let (c, s) = field.harmonic(1);
                    pass.cos_path.push(c);
                    pass.sin_path.push(s);
                    pass.gm.push(gm_distance(&field));
                    pass.mass_error = pass.mass_error.max((field.integral() - 1.0).abs());
                    pass.min_density = pass.min_density.min(field.min());
                    if opts.snapshot_every > 0 && (step % opts.snapshot_every == 0 || step == steps) {
                        pass.snapshots.push(field);
                    }
                }
                pass
            })
            .collect();

        let mut new_h1 = vec![0.0; steps + 1];
        let mut new_h2 = vec![0.0; steps + 1];
        for (pass, &(_, w)) in passes.iter().zip(&atoms) {
            for i in 0..=steps {
                new_h1[i] += kappa * w * pass.cos_path[i];
                new_h2[i] += kappa * w * pass.sin_path[i];
            }
        }
        let residual = (0..=steps)
            .map(|i| (new_h1[i] - h1[i]).abs().max((new_h2[i] - h2[i]).abs()))
            .fold(0.0, f64::max);
        residuals.push(residual);

        let min_density = passes.iter().map(|p| p.min_density).fold(f64::INFINITY, f64::min);
        if min_density < -NEGATIVITY_TOL {
            return Err(Error::NegativeDensity { min: min_density });
        }
        if residual < opts.tol {
            return Ok(assemble(times, h1, h2, passes, residuals, &atoms, opts));
        }
        if residuals.len() >= opts.max_sweeps {
            return Err(Error::PicardStagnation { history: residuals });
        }
        let d = opts.damping;
        for i in 0..=steps {
            h1[i] = (1.0 - d) * h1[i] + d * new_h1[i];
            h2[i] = (1.0 - d) * h2[i] + d * new_h2[i];
        }
    }
}

fn assemble(
    times: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    passes: Vec<NodePass>,
    residuals: Vec<f64>,
    atoms: &[(f64, f64)],
    opts: &MfgOptions,
) -> MfgTrajectory {
    let steps = times.len() - 1;
    let gm = (0..=steps).map(|i| passes.iter().map(|p| p.gm[i]).collect()).collect();
    let phi = (0..=steps)
        .map(|i| {
            let (mut c, mut s) = (0.0, 0.0);
            for (p, &(_, w)) in passes.iter().zip(atoms) {
                c += w * p.cos_path[i];
                s += w * p.sin_path[i];
            }
            potential_from_harmonics(c, s)
        })
        .collect();
    let mut snapshots = Vec::new();
    if opts.snapshot_every > 0 {
        let snap_steps: Vec<usize> = (0..=steps)
            .filter(|s| s % opts.snapshot_every == 0 || *s == steps)
            .collect();
        for (k, &s) in snap_steps.iter().enumerate() {
            snapshots.push(Snapshot {
                time: times[s],
                densities: passes.iter().map(|p| p.snapshots[k].clone()).collect(),
            });
        }
    }
    MfgTrajectory {
        max_mass_error: passes.iter().map(|p| p.mass_error).fold(0.0, f64::max),
        min_density: passes.iter().map(|p| p.min_density).fold(f64::INFINITY, f64::min),
        times,
        h1,
        h2,
        gm,
        phi,
        snapshots,
        picard_residuals: residuals,
    }
}

/// `(1 + ε cos x)/2π` on every node.
pub fn cosine_perturbation(grid: &TorusGrid, dist: &FrequencyDistribution, eps: f64) -> Vec<TorusField> {
    let field = TorusField::from_raw(
        grid,
        grid.points().into_iter().map(|x| (1.0 + eps * x.cos()) / (2.0 * PI)).collect(),
    );
    vec![field; dist.len()]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub lambda_fit: f64,
    pub c_fit: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares fit of `log max_ω 𝔤_m(μ^ω_t) ≈ log C − λt` over the second
/// half of the horizon.
pub fn fit_decay_rate(traj: &MfgTrajectory) -> Result<DecayFit> {
    fit_decay(&traj.times, &traj.gm_max())
}

/// The same fit for arbitrary `(t, 𝔤)` samples.
pub fn fit_decay(times: &[f64], gm: &[f64]) -> Result<DecayFit> {
    let t_end = times.last().copied().unwrap_or(0.0);
    let t_start = times.first().copied().unwrap_or(0.0);
    let mid = 0.5 * (t_start + t_end);
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(gm)
        .filter(|(t, g)| **t >= mid && **g > 1e-12)
        .map(|(t, g)| (*t, g.ln()))
        .collect();
    if pts.len() < 8 {
        return Err(Error::InsufficientData { usable: pts.len() });
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mt;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(DecayFit {
        lambda_fit: -slope,
        c_fit: intercept.exp(),
        r_squared,
        points: pts.len(),
    })
}
