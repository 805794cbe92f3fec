//! Stationary per-frequency HJB equation and the invariant law of the
//! optimally controlled diffusion.
//!
//! The value function is written `v = κ/β + u` where `u` solves
//!
//! ```text
//! ω u' + (σ²/2) u'' − ½ u'² − β u − α₁ cos x − α₂ sin x = 0
//! ```
//!
//! on the torus. `u` is represented by a truncated real Fourier series and
//! found by damped Newton iteration on the Galerkin system.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::torus::{OrderParameters, TorusField, TorusGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HjbOptions {
    /// Number of Fourier modes, capped at `n/4` so the quadratic term is
    /// projected without aliasing.
    pub modes: usize,
    /// Required max-norm collocation residual on the grid.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for HjbOptions {
    fn default() -> Self {
        Self {
            modes: 64,
            tol: 1e-9,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HjbSolution {
    pub value: TorusField,
    /// `∂ₓv` on the grid, exact for the Fourier representation.
    pub gradient: TorusField,
    pub residual: f64,
    pub iterations: usize,
}

/// Reusable Galerkin solver; holds the basis tables for one grid.
#[derive(Debug, Clone)]
pub struct HjbSolver {
    grid: TorusGrid,
    opts: HjbOptions,
    modes: usize,
    basis: DMatrix<f64>,
    basis_d1: DMatrix<f64>,
    basis_d2: DMatrix<f64>,
    projection: DMatrix<f64>,
}

impl HjbSolver {
    pub fn new(grid: &TorusGrid, opts: HjbOptions) -> Result<Self> {
        if opts.modes == 0 {
            return Err(Error::param("modes", "must be positive"));
        }
        let n = grid.n();
        let modes = opts.modes.min(n / 4);
        let dim = 2 * modes + 1;
        let mut basis = DMatrix::zeros(n, dim);
        let mut basis_d1 = DMatrix::zeros(n, dim);
        let mut basis_d2 = DMatrix::zeros(n, dim);
        let mut projection = DMatrix::zeros(dim, n);
        let inv_n = 1.0 / n as f64;
        for j in 0..n {
            let x = grid.point(j);
            basis[(j, 0)] = 1.0;
            projection[(0, j)] = inv_n;
            for k in 1..=modes {
                let kf = k as f64;
                let (s, c) = (kf * x).sin_cos();
                let (ic, is) = (2 * k - 1, 2 * k);
                basis[(j, ic)] = c;
                basis[(j, is)] = s;
                basis_d1[(j, ic)] = -kf * s;
                basis_d1[(j, is)] = kf * c;
                basis_d2[(j, ic)] = -kf * kf * c;
                basis_d2[(j, is)] = -kf * kf * s;
                projection[(ic, j)] = 2.0 * inv_n * c;
                projection[(is, j)] = 2.0 * inv_n * s;
            }
        }
        Ok(Self {
            grid: grid.clone(),
            opts,
            modes,
            basis,
            basis_d1,
            basis_d2,
            projection,
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    fn grid_residual(
        &self,
        params: &ModelParams,
        omega: f64,
        forcing: &DVector<f64>,
        coeffs: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let u = &self.basis * coeffs;
        let du = &self.basis_d1 * coeffs;
        let d2u = &self.basis_d2 * coeffs;
        let s = 0.5 * params.sigma2();
        let beta = params.beta();
        let r = DVector::from_fn(u.len(), |j, _| {
            omega * du[j] + s * d2u[j] - 0.5 * du[j] * du[j] - beta * u[j] - forcing[j]
        });
        (r, du)
    }

    fn linear_part(&self, params: &ModelParams, omega: f64) -> DMatrix<f64> {
        let dim = 2 * self.modes + 1;
        let s = 0.5 * params.sigma2();
        let beta = params.beta();
        let mut lin = DMatrix::zeros(dim, dim);
        lin[(0, 0)] = -beta;
        for k in 1..=self.modes {
            let kf = k as f64;
            let (ic, is) = (2 * k - 1, 2 * k);
            let diag = -s * kf * kf - beta;
            lin[(ic, ic)] = diag;
            lin[(is, is)] = diag;
            lin[(is, ic)] = -omega * kf;
            lin[(ic, is)] = omega * kf;
        }
        lin
    }

    pub fn solve(&self, params: &ModelParams, omega: f64, alpha: OrderParameters) -> Result<HjbSolution> {
        let n = self.grid.n();
        let dim = 2 * self.modes + 1;
        let forcing = DVector::from_fn(n, |j, _| {
            let (s, c) = self.grid.point(j).sin_cos();
            alpha.alpha1 * c + alpha.alpha2 * s
        });
        let lin = self.linear_part(params, omega);
        let mut coeffs = DVector::zeros(dim);
        let (mut r, mut du) = self.grid_residual(params, omega, &forcing, &coeffs);
        let mut g = &self.projection * &r;
        let scale = 1.0 + alpha.norm();
        let mut iterations = 0;
        let mut g_norm = g.amax();
        while g_norm > 1e-13 * scale {
            if iterations == self.opts.max_iter {
                return Err(Error::NewtonDiverged {
                    omega,
                    iterations,
                    residual: r.amax(),
                });
            }
            iterations += 1;
            let mut scaled = self.basis_d1.clone();
            for (j, mut row) in scaled.row_iter_mut().enumerate() {
                row *= du[j];
            }
            let jac = &lin - &self.projection * scaled;
            let step = jac.lu().solve(&(-&g)).ok_or(Error::NewtonDiverged {
                omega,
                iterations,
                residual: r.amax(),
            })?;
            let mut t = 1.0;
            loop {
                let trial = &coeffs + &step * t;
                let (tr, tdu) = self.grid_residual(params, omega, &forcing, &trial);
                let tg = &self.projection * &tr;
                let tg_norm = tg.amax();
                if tg_norm.is_finite() && (tg_norm < (1.0 - 1e-4 * t) * g_norm || t < 1e-6) {
                    coeffs = trial;
                    r = tr;
                    du = tdu;
                    g = tg;
                    g_norm = tg_norm;
                    break;
                }
                t *= 0.5;
            }
            if (&step * t).amax() < 1e-15 * (1.0 + coeffs.amax()) {
                break;
            }
        }
        let residual = r.amax();
        if !(residual < self.opts.tol) {
            return Err(Error::NewtonDiverged {
                omega,
                iterations,
                residual,
            });
        }
        let offset = params.kappa() / params.beta();
        let u = &self.basis * &coeffs;
        let value = TorusField::new(self.grid.clone(), u.iter().map(|x| x + offset).collect())?;
        let gradient = TorusField::new(self.grid.clone(), du.iter().copied().collect())?;
        Ok(HjbSolution {
            value,
            gradient,
            residual,
            iterations,
        })
    }
}

/// Solves the stationary HJB equation with default options.
pub fn solve_stationary_hjb(
    params: &ModelParams,
    omega: f64,
    alpha: OrderParameters,
    grid: &TorusGrid,
) -> Result<TorusField> {
    HjbSolver::new(grid, HjbOptions::default())?
        .solve(params, omega, alpha)
        .map(|s| s.value)
}

/// Max-norm collocation residual of the stationary HJB equation for `v`,
/// using spectral derivatives.
pub fn hjb_residual(params: &ModelParams, omega: f64, alpha: OrderParameters, v: &TorusField) -> f64 {
    let d1 = v.derivative(1);
    let d2 = v.derivative(2);
    let s = 0.5 * params.sigma2();
    let grid = v.grid();
    (0..grid.n())
        .map(|j| {
            let x = grid.point(j);
            let p = d1.values()[j];
            let r = omega * p + s * d2.values()[j] + alpha.cost(params.kappa(), x)
                - 0.5 * p * p
                - params.beta() * v.values()[j];
            r.abs()
        })
        .fold(0.0, f64::max)
}

/// `log ξ^ω(x) = −(2/σ²)(ωx − v(x))`.
pub fn xi_log(params: &ModelParams, omega: f64, v: &TorusField) -> TorusField {
    let c = 2.0 / params.sigma2();
    let grid = v.grid();
    let values = v
        .values()
        .iter()
        .enumerate()
        .map(|(j, &vj)| -c * (omega * grid.point(j) - vj))
        .collect();
    TorusField::from_raw(grid, values)
}

/// Invariant density of `dX = (ω − ∂ₓv) dt + σ dW` on the torus.
///
/// With `p = exp(2v/σ²)` and `λ = 2ω/σ²` the density is proportional to
/// `p(x)⁻¹ ∫₀^{2π} e^{−λs} p(x+s) ds`; the periodic convolution is applied
/// as the Fourier multiplier `λ/(λ − ik)`.
pub fn invariant_measure(params: &ModelParams, omega: f64, v: &TorusField) -> Result<TorusField> {
    let c = 2.0 / params.sigma2();
    let vmax = v.max();
    let p: Vec<f64> = v.values().iter().map(|&x| (c * (x - vmax)).exp()).collect();
    let lambda = c * omega;
    let grid = v.grid();
    let q = grid.apply_multiplier(&p, |k| {
        if lambda == 0.0 {
            Complex64::new(if k == 0.0 { 1.0 } else { 0.0 }, 0.0)
        } else {
            Complex64::new(lambda, 0.0) / Complex64::new(lambda, -k)
        }
    });
    let mut nu: Vec<f64> = q.iter().zip(&p).map(|(qi, pi)| qi / pi).collect();
    let mass = grid.spacing() * nu.iter().sum::<f64>();
    nu.iter_mut().for_each(|x| *x /= mass);
    let min = nu.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-12 || !mass.is_finite() {
        return Err(Error::NegativeDensity { min });
    }
    nu.iter_mut().for_each(|x| *x = x.max(0.0));
    Ok(TorusField::from_raw(grid, nu))
}

/// `max |∂ₓ((ω − ∂ₓv)ν) − (σ²/2)∂ₓₓν|`.
pub fn fp_residual(params: &ModelParams, omega: f64, v: &TorusField, nu: &TorusField) -> f64 {
    let dv = v.derivative(1);
    let flux: Vec<f64> = dv
        .values()
        .iter()
        .zip(nu.values())
        .map(|(d, m)| (omega - d) * m)
        .collect();
    let dflux = TorusField::from_raw(nu.grid(), flux).derivative(1);
    let d2nu = nu.derivative(2);
    let s = 0.5 * params.sigma2();
    dflux
        .values()
        .iter()
        .zip(d2nu.values())
        .map(|(a, b)| (a - s * b).abs())
        .fold(0.0, f64::max)
}

/// First-order response of `(v, ν)` to a small cost amplitude: returns the
/// coefficients `(A, B)` of `v − κ/β ≈ A cos x + B sin x` for the cost
/// `α₁ cos x + α₂ sin x` and `(a, b)` of `2πν − 1 ≈ a cos x + b sin x`.
pub fn linear_response(params: &ModelParams, omega: f64, alpha: OrderParameters) -> ([f64; 2], [f64; 2]) {
    let g = params.gamma();
    let den = g * g + omega * omega;
    // response to α₁ cos x, then rotate by a quarter period for α₂ sin x
    let (a1, b1) = (-alpha.alpha1 * g / den, alpha.alpha1 * omega / den);
    let (a2, b2) = (-alpha.alpha2 * omega / den, -alpha.alpha2 * g / den);
    let (ca, cb) = (a1 + a2, b1 + b2);
    let s = 0.5 * params.sigma2();
    let d = s * s + omega * omega;
    let na = (-s * ca + omega * cb) / d;
    let nb = (-omega * ca - s * cb) / d;
    ([ca, cb], [na, nb])
}

/// The density `(1 + a cos x + b sin x)/2π` predicted by [`linear_response`].
pub fn linearized_density(params: &ModelParams, omega: f64, alpha: OrderParameters, grid: &TorusGrid) -> TorusField {
    let (_, [a, b]) = linear_response(params, omega, alpha);
    let values = grid
        .points()
        .into_iter()
        .map(|x| (1.0 + a * x.cos() + b * x.sin()) / (2.0 * PI))
        .collect();
    TorusField::from_raw(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams::new(2.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn zero_cost_gives_constant_value() {
        let grid = TorusGrid::new(64).unwrap();
        let v = solve_stationary_hjb(&params(), 2.0, OrderParameters::ZERO, &grid).unwrap();
        assert!(v.values().iter().all(|&x| x == 2.0));
    }

    #[test]
    fn sin_response_matches_rotated_cos_response() {
        let p = params();
        let alpha = OrderParameters::new(0.0, 1e-3);
        let grid = TorusGrid::new(64).unwrap();
        let v = solve_stationary_hjb(&p, 1.3, alpha, &grid).unwrap();
        let ([a, b], _) = linear_response(&p, 1.3, alpha);
        let lin = TorusField::from_fn(&grid, |x| 2.0 + a * x.cos() + b * x.sin()).unwrap();
        assert!(v.max_abs_diff(&lin) < 1e-5);
    }

    #[test]
    fn xi_log_examples() {
        let p = ModelParams::new(1.0, 1.0, 1.0).unwrap();
        let grid = TorusGrid::new(16).unwrap();
        let v = TorusField::constant(&grid, 0.0);
        let xi = xi_log(&p, 1.0, &v);
        assert!((xi.values()[8] + 2.0 * PI).abs() < 1e-14);
        let v = TorusField::constant(&grid, 1.0);
        let xi = xi_log(&p, 0.0, &v);
        assert!(xi.values().iter().all(|&x| x == 2.0));
    }

    #[test]
    fn uniform_measure_for_constant_value() {
        let grid = TorusGrid::new(32).unwrap();
        let v = TorusField::constant(&grid, 3.0);
        for omega in [0.0, 1.0, -4.0] {
            let nu = invariant_measure(&params(), omega, &v).unwrap();
            let u = TorusField::uniform_density(&grid);
            assert!(nu.max_abs_diff(&u) < 1e-14);
            assert!(fp_residual(&params(), omega, &v, &nu) < 1e-12);
        }
    }

    #[test]
    fn zero_drift_measure_is_gibbs() {
        let p = params();
        let grid = TorusGrid::new(128).unwrap();
        let v = TorusField::from_fn(&grid, |x| 0.4 * x.cos() - 0.2 * (2.0 * x).sin()).unwrap();
        let nu = invariant_measure(&p, 0.0, &v).unwrap();
        let gibbs = v.map(|x| (-2.0 * x / p.sigma2()).exp());
        let z = gibbs.integral();
        let gibbs = gibbs.map(|x| x / z);
        assert!(nu.max_abs_diff(&gibbs) < 1e-12);
    }

    #[test]
    fn perturbed_density_is_not_stationary() {
        let grid = TorusGrid::new(64).unwrap();
        let v = TorusField::constant(&grid, 1.0);
        let nu = TorusField::from_fn(&grid, |x| (1.0 + 0.1 * x.cos()) / (2.0 * PI)).unwrap();
        assert!(fp_residual(&params(), 0.0, &v, &nu) > 1e-3);
    }
}
