//! Stationary equilibria as fixed points of the order-parameter map
//! `F_κ(α) = κ (∫∫ cos y ν^ω(dy) g(dω), ∫∫ sin y ν^ω(dy) g(dω))`.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hjb::{invariant_measure, HjbOptions, HjbSolver};
use crate::model::{kappa_c_integrand, FrequencyDistribution, ModelParams};
use crate::torus::{OrderParameters, TorusField, TorusGrid};

const BISECTION_TOL: f64 = 1e-8;
const TANGENCY_TOL: f64 = 1e-6;
const SLOPE_STEP: f64 = 1e-5;

/// `F_κ` bound to one model, distribution and grid.
#[derive(Debug, Clone)]
pub struct EquilibriumMap {
    params: ModelParams,
    dist: FrequencyDistribution,
    solver: HjbSolver,
}

impl EquilibriumMap {
    pub fn new(params: ModelParams, dist: FrequencyDistribution, grid: &TorusGrid) -> Result<Self> {
        Self::with_options(params, dist, grid, HjbOptions::default())
    }

    pub fn with_options(
        params: ModelParams,
        dist: FrequencyDistribution,
        grid: &TorusGrid,
        opts: HjbOptions,
    ) -> Result<Self> {
        Ok(Self {
            params,
            dist,
            solver: HjbSolver::new(grid, opts)?,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn dist(&self) -> &FrequencyDistribution {
        &self.dist
    }

    pub fn grid(&self) -> &TorusGrid {
        self.solver.grid()
    }

    /// The invariant density `ν^ω` for the cost with order parameters `alpha`.
    pub fn density(&self, omega: f64, alpha: OrderParameters) -> Result<TorusField> {
        let sol = self.solver.solve(&self.params, omega, alpha)?;
        invariant_measure(&self.params, omega, &sol.value)
    }

    /// One density per quadrature node, in node order.
    pub fn densities(&self, alpha: OrderParameters) -> Result<Vec<TorusField>> {
        let atoms: Vec<(f64, f64)> = self.dist.atoms().collect();
        atoms
            .par_iter()
            .map(|&(omega, _)| self.density(omega, alpha))
            .collect()
    }

    pub fn f(&self, alpha: OrderParameters) -> Result<OrderParameters> {
        let atoms: Vec<(f64, f64)> = self.dist.atoms().collect();
        let harmonics: Vec<(f64, f64)> = atoms
            .par_iter()
            .map(|&(omega, _)| self.density(omega, alpha).map(|nu| nu.harmonic(1)))
            .collect::<Result<_>>()?;
        let (mut c, mut s) = (0.0, 0.0);
        for ((_, w), (hc, hs)) in atoms.iter().zip(&harmonics) {
            c += w * hc;
            s += w * hs;
        }
        let k = self.params.kappa();
        Ok(OrderParameters::new(k * c, k * s))
    }

    /// `G_κ(α) = F_κ(α, 0)₁`.
    pub fn g(&self, alpha: f64) -> Result<f64> {
        if alpha == 0.0 {
            return Ok(0.0);
        }
        Ok(self.f(OrderParameters::new(alpha, 0.0))?.alpha1)
    }

    /// Central finite difference of `G_κ`.
    pub fn g_slope(&self, alpha: f64, step: f64) -> Result<f64> {
        Ok((self.g(alpha + step)? - self.g(alpha - step)?) / (2.0 * step))
    }

    /// Central finite-difference Jacobian of `F_κ`.
    pub fn jacobian_fd(&self, alpha: OrderParameters, step: f64) -> Result<Matrix2<f64>> {
        let mut jac = Matrix2::zeros();
        for col in 0..2 {
            let (mut plus, mut minus) = (alpha, alpha);
            if col == 0 {
                plus.alpha1 += step;
                minus.alpha1 -= step;
            } else {
                plus.alpha2 += step;
                minus.alpha2 -= step;
            }
            let fp = self.f(plus)?;
            let fm = self.f(minus)?;
            jac[(0, col)] = (fp.alpha1 - fm.alpha1) / (2.0 * step);
            jac[(1, col)] = (fp.alpha2 - fm.alpha2) / (2.0 * step);
        }
        Ok(jac)
    }

    /// Gauss–Newton on `F_κ(α) − α` in the plane. The Jacobian is singular
    /// along the rotation orbit, so steps use its pseudo-inverse.
    pub fn refine_2d(&self, start: OrderParameters, tol: f64, max_iter: usize) -> Result<(OrderParameters, f64)> {
        let mut alpha = start;
        let mut res = self.residual_2d(alpha)?;
        for _ in 0..max_iter {
            if res.norm() < tol {
                break;
            }
            let jac = self.jacobian_fd(alpha, 1e-6)? - Matrix2::identity();
            let pinv = jac
                .pseudo_inverse(1e-8)
                .map_err(|_| Error::SingularSystem { det: jac.determinant() })?;
            let step = pinv * res;
            alpha = OrderParameters::new(alpha.alpha1 - step[0], alpha.alpha2 - step[1]);
            res = self.residual_2d(alpha)?;
        }
        Ok((alpha, res.norm()))
    }

    fn residual_2d(&self, alpha: OrderParameters) -> Result<Vector2<f64>> {
        let f = self.f(alpha)?;
        Ok(Vector2::new(f.alpha1 - alpha.alpha1, f.alpha2 - alpha.alpha2))
    }
}

/// Closed-form derivative of `F_κ` at the origin.
pub fn df_origin(params: &ModelParams, dist: &FrequencyDistribution) -> Result<Matrix2<f64>> {
    let g = params.gamma();
    let s2 = params.sigma2();
    let k = params.kappa();
    let scale = |w: f64| k / ((g * g + w * w) * (s2 * s2 + 4.0 * w * w));
    let diag = k * dist.integrate(|w| kappa_c_integrand(params, w))?;
    let off = dist.integrate(|w| scale(w) * (s2 - 2.0 * g) * w)?;
    Ok(Matrix2::new(diag, off, -off, diag))
}

pub fn f_kappa(
    params: &ModelParams,
    dist: &FrequencyDistribution,
    alpha: OrderParameters,
    grid: &TorusGrid,
) -> Result<OrderParameters> {
    EquilibriumMap::new(*params, dist.clone(), grid)?.f(alpha)
}

pub fn g_kappa(params: &ModelParams, dist: &FrequencyDistribution, alpha: f64, grid: &TorusGrid) -> Result<f64> {
    if !dist.is_symmetric() {
        return Err(Error::NotSymmetric);
    }
    EquilibriumMap::new(*params, dist.clone(), grid)?.g(alpha)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub alpha_max: f64,
    pub step: f64,
}

impl ScanOptions {
    /// `[0, κ]` in steps of `0.05 κ`.
    pub fn for_kappa(kappa: f64) -> Self {
        Self {
            alpha_max: kappa,
            step: 0.05 * kappa,
        }
    }

    pub fn with_points(alpha_max: f64, points: usize) -> Self {
        Self {
            alpha_max,
            step: alpha_max / points.max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub alpha: f64,
    /// `|G_κ(α) − α|`.
    pub residual: f64,
    /// Finite-difference `G_κ'(α)`.
    pub slope: f64,
    pub tangency_suspected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    pub kappa: f64,
    pub alpha_max: f64,
    pub fixed_points: Vec<FixedPoint>,
    pub derivative_at_zero: Matrix2<f64>,
    /// Scan samples `(α, G_κ(α))` below the failure boundary.
    pub samples: Vec<(f64, f64)>,
    /// First scanned `α` at which the HJB solve failed, if any.
    pub failure_boundary: Option<f64>,
}

/// Scans `α ↦ G_κ(α) − α` on `[0, alpha_max]` and refines every bracketed
/// sign change. `alpha_max` is clipped to `κ`.
pub fn find_fixed_points(
    params: &ModelParams,
    dist: &FrequencyDistribution,
    scan: ScanOptions,
    grid: &TorusGrid,
) -> Result<FixedPointReport> {
    if !dist.is_symmetric() {
        return Err(Error::NotSymmetric);
    }
    if !(scan.step > 0.0 && scan.alpha_max >= 0.0) {
        return Err(Error::param("scan", "step must be positive and alpha_max nonnegative"));
    }
    let map = EquilibriumMap::new(*params, dist.clone(), grid)?;
    let alpha_max = scan.alpha_max.min(params.kappa());
    let count = (alpha_max / scan.step).round() as usize;
    let alphas: Vec<f64> = (0..=count)
        .map(|i| (i as f64 * scan.step).min(alpha_max))
        .collect();

    let evaluated: Vec<Result<f64>> = alphas.par_iter().map(|&a| map.g(a)).collect();
    let mut samples = Vec::with_capacity(alphas.len());
    let mut failure_boundary = None;
    for (&a, r) in alphas.iter().zip(evaluated) {
        match r {
            Ok(g) => samples.push((a, g)),
            Err(Error::NewtonDiverged { .. }) | Err(Error::NegativeDensity { .. }) => {
                failure_boundary = Some(a);
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let mut fixed_points = vec![FixedPoint {
        alpha: 0.0,
        residual: 0.0,
        slope: map.g_slope(0.0, SLOPE_STEP)?,
        tangency_suspected: false,
    }];
    let diff: Vec<f64> = samples.iter().map(|(a, g)| g - a).collect();
    for i in 1..samples.len() {
        let (a0, d0) = (samples[i - 1].0, diff[i - 1]);
        let (a1, d1) = (samples[i].0, diff[i]);
        if d1 == 0.0 {
            fixed_points.push(fixed_point(&map, a1, 0.0, false)?);
        } else if d0 * d1 < 0.0 {
            let (alpha, res) = refine(&map, a0, d0, a1, d1)?;
            fixed_points.push(fixed_point(&map, alpha, res, false)?);
        }
    }
    for i in 1..diff.len().saturating_sub(1) {
        let (dl, dm, dr) = (diff[i - 1], diff[i], diff[i + 1]);
        if dm.abs() < TANGENCY_TOL && dl * dm > 0.0 && dm * dr > 0.0 && dm.abs() <= dl.abs() && dm.abs() <= dr.abs()
        {
            fixed_points.push(fixed_point(&map, samples[i].0, dm.abs(), true)?);
        }
    }
    fixed_points.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));

    Ok(FixedPointReport {
        kappa: params.kappa(),
        alpha_max,
        fixed_points,
        derivative_at_zero: df_origin(params, dist)?,
        samples,
        failure_boundary,
    })
}

fn fixed_point(map: &EquilibriumMap, alpha: f64, residual: f64, tangency: bool) -> Result<FixedPoint> {
    Ok(FixedPoint {
        alpha,
        residual,
        slope: map.g_slope(alpha, SLOPE_STEP)?,
        tangency_suspected: tangency,
    })
}

/// Illinois-modified regula falsi on `G(α) − α` within a sign-changing bracket.
fn refine(map: &EquilibriumMap, mut lo: f64, mut flo: f64, mut hi: f64, mut fhi: f64) -> Result<(f64, f64)> {
    let mut best = if flo.abs() < fhi.abs() { (lo, flo) } else { (hi, fhi) };
    let mut last_side = 0i8;
    for _ in 0..200 {
        if best.1.abs() < BISECTION_TOL || (hi - lo).abs() < 1e-14 {
            break;
        }
        let mut c = (lo * fhi - hi * flo) / (fhi - flo);
        if !(c > lo.min(hi) && c < lo.max(hi)) {
            c = 0.5 * (lo + hi);
        }
        let fc = map.g(c)? - c;
        if fc.abs() < best.1.abs() {
            best = (c, fc);
        }
        if fc * flo < 0.0 {
            hi = c;
            fhi = fc;
            if last_side == -1 {
                flo *= 0.5;
            }
            last_side = -1;
        } else {
            lo = c;
            flo = fc;
            if last_side == 1 {
                fhi *= 0.5;
            }
            last_side = 1;
        }
    }
    Ok((best.0, best.1.abs()))
}
