//! The Penrose function
//! `P(z) = ∫ g(dω) / ((γ + iω − z)(σ²/2 + z − iω))` on the strip
//! `−σ²/2 < Re z < γ`, its curve `θ ↦ P(iθ)`, the threshold `κ_P` and
//! argument-principle zero counting for `1 − κP/2`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{kappa_c, FrequencyDistribution, ModelParams};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub const DEFAULT_CURVE_SAMPLES: usize = 20_001;
const CURVE_DECAY_TARGET: f64 = 1e-3;
const CROSSING_TOL: f64 = 1e-12;
const DEDUP_TOL: f64 = 1e-8;
const CONTOUR_MIN_MODULUS: f64 = 1e-6;
const WINDING_TOL: f64 = 1e-4;
const DOUBLE_ROOT_SEP: f64 = 1e-7;

/// `Q(z, ω) = (z + σ²/2 − iω)(γ + iω − z)`.
pub fn q(params: &ModelParams, z: Complex64, omega: f64) -> Complex64 {
    (z + 0.5 * params.sigma2() - I * omega) * (params.gamma() + I * omega - z)
}

/// `∂_z Q(z, ω)`.
pub fn q_prime(params: &ModelParams, z: Complex64, omega: f64) -> Complex64 {
    (params.gamma() + I * omega - z) - (z + 0.5 * params.sigma2() - I * omega)
}

fn check_strip(params: &ModelParams, z: Complex64) -> Result<()> {
    if z.re > -0.5 * params.sigma2() && z.re < params.gamma() && z.im.is_finite() {
        Ok(())
    } else {
        Err(Error::OutsideStrip { re: z.re, im: z.im })
    }
}

fn p_unchecked(dist: &FrequencyDistribution, params: &ModelParams, z: Complex64) -> Result<Complex64> {
    dist.integrate_complex(|w| q(params, z, w).inv())
}

pub fn p(dist: &FrequencyDistribution, params: &ModelParams, z: Complex64) -> Result<Complex64> {
    check_strip(params, z)?;
    p_unchecked(dist, params, z)
}

pub fn p_prime(dist: &FrequencyDistribution, params: &ModelParams, z: Complex64) -> Result<Complex64> {
    check_strip(params, z)?;
    let s = 0.5 * params.sigma2();
    let g = params.gamma();
    dist.integrate_complex(|w| {
        let a = g + I * w - z;
        let b = s + z - I * w;
        (a * b).inv() * (a.inv() - b.inv())
    })
}

/// Frequency beyond which `|P(x + iθ)|` is below `1e-3` for `Re z ∈ [0, β]`,
/// from the decay estimate `C(1 + m₂)/θ²` with `C = 2/(γσ²) + β`.
pub fn default_theta_max(dist: &FrequencyDistribution, params: &ModelParams) -> f64 {
    decay_constant(dist, params) / CURVE_DECAY_TARGET.sqrt()
}

fn decay_constant(dist: &FrequencyDistribution, params: &ModelParams) -> f64 {
    let c = 2.0 / (params.gamma() * params.sigma2()) + params.beta();
    (c * (1.0 + dist.second_moment())).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub theta: f64,
    /// `Re P(iθ)` at the crossing.
    pub re_p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenroseCurve {
    pub thetas: Vec<f64>,
    pub values: Vec<Complex64>,
    /// Points where `Im P(iθ) = 0`, sorted by `θ`.
    pub crossings: Vec<Crossing>,
}

impl PenroseCurve {
    /// `max Re P` over crossings with `Re P > 0`.
    pub fn rightmost_positive(&self) -> Option<Crossing> {
        self.crossings
            .iter()
            .filter(|c| c.re_p > 0.0)
            .copied()
            .max_by(|a, b| a.re_p.total_cmp(&b.re_p))
    }

    pub fn kappa_p(&self) -> f64 {
        self.rightmost_positive()
            .map_or(f64::INFINITY, |c| 2.0 / c.re_p)
    }
}

/// Samples `P(iθ)` at `samples` uniform points of `[−θ_max, θ_max]` and
/// refines every zero of `Im P(iθ)` by safeguarded secant iteration.
pub fn trace_curve(
    dist: &FrequencyDistribution,
    params: &ModelParams,
    theta_max: f64,
    samples: usize,
) -> Result<PenroseCurve> {
    if !(theta_max > 0.0 && theta_max.is_finite()) || samples < 3 {
        return Err(Error::param("theta_max", "need theta_max > 0 and at least 3 samples"));
    }
    let h = 2.0 * theta_max / (samples - 1) as f64;
    let thetas: Vec<f64> = (0..samples)
        .map(|i| {
            // keep the grid exactly symmetric about zero
            let j = i as f64 - 0.5 * (samples - 1) as f64;
            j * h
        })
        .collect();
    let values: Vec<Complex64> = thetas
        .par_iter()
        .map(|&t| p(dist, params, I * t))
        .collect::<Result<_>>()?;

    let is_zero = |v: Complex64| v.im.abs() <= 1e-15 * v.norm();
    let im_at = |t: f64| p(dist, params, I * t).map(|v| v.im);
    let mut crossings = Vec::new();
    for i in 0..samples {
        if is_zero(values[i]) {
            crossings.push(Crossing {
                theta: thetas[i],
                re_p: values[i].re,
            });
            continue;
        }
        if i > 0 && !is_zero(values[i - 1]) && values[i - 1].im * values[i].im < 0.0 {
            let theta = secant_root(&im_at, thetas[i - 1], values[i - 1].im, thetas[i], values[i].im)?;
            crossings.push(Crossing {
                theta,
                re_p: p(dist, params, I * theta)?.re,
            });
        }
    }
    crossings.sort_by(|a, b| a.theta.total_cmp(&b.theta));
    crossings.dedup_by(|b, a| (a.theta - b.theta).abs() < DEDUP_TOL);
    Ok(PenroseCurve {
        thetas,
        values,
        crossings,
    })
}

/// Secant iteration kept inside the bracket, falling back to bisection.
fn secant_root(f: &impl Fn(f64) -> Result<f64>, mut a: f64, mut fa: f64, mut b: f64, mut fb: f64) -> Result<f64> {
    for _ in 0..50 {
        let mut c = b - fb * (b - a) / (fb - fa);
        if !(c > a.min(b) && c < a.max(b)) {
            c = 0.5 * (a + b);
        }
        let fc = f(c)?;
        if fc.abs() < CROSSING_TOL || (b - a).abs() < 1e-15 {
            return Ok(c);
        }
        if fa * fc < 0.0 {
            b = c;
            fb = fc;
        } else {
            a = c;
            fa = fc;
        }
    }
    Ok(if fa.abs() < fb.abs() { a } else { b })
}

/// `κ_P(g) = 2 / max{Re P(iθ*) > 0 : Im P(iθ*) = 0}`, or `+∞` when no
/// positive crossing exists.
pub fn kappa_p(dist: &FrequencyDistribution, params: &ModelParams) -> Result<f64> {
    let curve = trace_curve(dist, params, default_theta_max(dist, params), DEFAULT_CURVE_SAMPLES)?;
    Ok(curve.kappa_p())
}

/// Number of zeros of `1 − κP(z)/2` in the rectangle
/// `[x_lo, x_hi] × [−θ_cap, θ_cap]`, by the argument principle.
pub fn count_zeros(
    dist: &FrequencyDistribution,
    params: &ModelParams,
    kappa: f64,
    strip: (f64, f64),
    theta_cap: Option<f64>,
) -> Result<i64> {
    let (x_lo, x_hi) = strip;
    if !(x_lo < x_hi) {
        return Err(Error::param("strip", format!("need x_lo < x_hi, got [{x_lo}, {x_hi}]")));
    }
    check_strip(params, Complex64::new(x_lo, 0.0))?;
    check_strip(params, Complex64::new(x_hi, 0.0))?;
    if kappa == 0.0 {
        return Ok(0);
    }
    let cap = theta_cap.unwrap_or_else(|| default_theta_cap(dist, params, kappa));
    let f = |z: Complex64| -> Result<(Complex64, Complex64)> {
        let pv = p(dist, params, z)?;
        let dp = p_prime(dist, params, z)?;
        Ok((Complex64::new(1.0, 0.0) - 0.5 * kappa * pv, -0.5 * kappa * dp))
    };
    let corners = [
        Complex64::new(x_lo, -cap),
        Complex64::new(x_hi, -cap),
        Complex64::new(x_hi, cap),
        Complex64::new(x_lo, cap),
    ];
    let sides: Vec<(Complex64, Complex64)> = (0..4).map(|k| (corners[k], corners[(k + 1) % 4])).collect();

    let min_modulus = sides
        .par_iter()
        .map(|&(a, b)| -> Result<f64> {
            let m = 4000;
            let mut min = f64::INFINITY;
            for j in 0..=m {
                let z = a + (b - a) * (j as f64 / m as f64);
                min = min.min(f(z)?.0.norm());
            }
            Ok(min)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if min_modulus < CONTOUR_MIN_MODULUS {
        return Err(Error::ZeroOnContour { min_modulus });
    }

    let per_side_tol = 2.0 * PI * WINDING_TOL / 4.0;
    let integrals = sides
        .par_iter()
        .map(|&(a, b)| {
            let dz = b - a;
            let integrand = |t: f64| -> Result<Complex64> {
                let (fv, dfv) = f(a + dz * t)?;
                Ok(dfv / fv * dz)
            };
            // long vertical sides get an initial subdivision so features near
            // the real axis are resolved
            let pieces = if dz.im.abs() > dz.re.abs() { 64 } else { 4 };
            let mut total = Complex64::new(0.0, 0.0);
            for k in 0..pieces {
                let (t0, t1) = (k as f64 / pieces as f64, (k + 1) as f64 / pieces as f64);
                total += adaptive_gk(&integrand, t0, t1, per_side_tol / pieces as f64, 0)?;
            }
            Ok(total)
        })
        .collect::<Result<Vec<Complex64>>>()?;
    let total: Complex64 = integrals.iter().sum();
    let winding = total.im / (2.0 * PI);
    let nearest = winding.round();
    if (winding - nearest).abs() > 0.1 || total.re.abs() > 0.1 * 2.0 * PI {
        return Err(Error::NonIntegerWinding { value: winding });
    }
    Ok(nearest as i64)
}

/// Height at which `κ|P|/2 < 0.05` on the horizontal sides.
fn default_theta_cap(dist: &FrequencyDistribution, params: &ModelParams, kappa: f64) -> f64 {
    let c = decay_constant(dist, params);
    (c * (10.0 * kappa).sqrt()).max(c / CURVE_DECAY_TARGET.sqrt())
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Recursive Gauss–Kronrod (7, 15) quadrature for complex integrands.
fn adaptive_gk(
    f: &impl Fn(f64) -> Result<Complex64>,
    a: f64,
    b: f64,
    tol: f64,
    depth: u32,
) -> Result<Complex64> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kronrod = Complex64::new(0.0, 0.0);
    let mut gauss = Complex64::new(0.0, 0.0);
    for (i, (&x, &w)) in GK_NODES.iter().zip(&GK_WEIGHTS).enumerate() {
        let pts: &[f64] = if x == 0.0 { &[0.0] } else { &[-1.0, 1.0] };
        for &sgn in pts {
            let v = f(c + sgn * h * x)?;
            kronrod += v * w;
            if i % 2 == 1 {
                gauss += v * G7_WEIGHTS[i / 2];
            }
        }
    }
    kronrod *= h;
    gauss *= h;
    if (kronrod - gauss).norm() <= tol || depth >= 40 {
        return Ok(kronrod);
    }
    Ok(adaptive_gk(f, a, c, 0.5 * tol, depth + 1)? + adaptive_gk(f, c, b, 0.5 * tol, depth + 1)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootCase {
    /// `z₁, z̄₁, β − z₁, β − z̄₁` off the real axis and off `Re z = β/2`.
    ComplexQuadruple,
    /// Four distinct real roots.
    FourReal,
    /// Two real double roots.
    DoubleReal,
    /// At least one root on the line `Re z = β/2`; the Penrose condition
    /// fails and no case of the Laplace solver applies.
    CriticalLine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quartic {
    /// Coefficients `c₀ … c₄` of `N(z) = Σ cₖ zᵏ`; `c₄ = 4`.
    pub coefficients: [f64; 5],
    pub roots: [Complex64; 4],
    pub case: RootCase,
    /// `max |2 − κP(r)|` over roots away from the poles of `P`.
    pub consistency: f64,
}

impl Quartic {
    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coefficients
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    /// Roots with `Re z > β/2`, sorted by imaginary part.
    pub fn right_roots(&self, beta: f64) -> Vec<Complex64> {
        let mut r: Vec<Complex64> = self.roots.iter().copied().filter(|z| z.re > 0.5 * beta).collect();
        r.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));
        r
    }
}

fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn q_poly(params: &ModelParams, omega: f64) -> Vec<Complex64> {
    let lhs = [Complex64::new(0.5 * params.sigma2(), -omega), Complex64::new(1.0, 0.0)];
    let rhs = [Complex64::new(params.gamma(), omega), Complex64::new(-1.0, 0.0)];
    poly_mul(&lhs, &rhs)
}

/// `N(z) = 4Q(z, ω₀)Q(z, −ω₀) − κ(Q(z, ω₀) + Q(z, −ω₀))` with its roots.
pub fn n_quartic(params: &ModelParams, omega0: f64, kappa: f64) -> Result<Quartic> {
    if !(omega0.is_finite() && omega0 >= 0.0) {
        return Err(Error::param("omega0", format!("must be >= 0, got {omega0}")));
    }
    let qp = q_poly(params, omega0);
    let qm = q_poly(params, -omega0);
    let prod = poly_mul(&qp, &qm);
    let mut coefficients = [0.0; 5];
    for (k, c) in coefficients.iter_mut().enumerate() {
        let lin = if k < 3 { qp[k] + qm[k] } else { Complex64::new(0.0, 0.0) };
        *c = (4.0 * prod[k] - kappa * lin).re;
    }

    let lead = coefficients[4];
    let companion = DMatrix::from_fn(4, 4, |i, j| {
        if j == 3 {
            -coefficients[i] / lead
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let eig = companion.complex_eigenvalues();
    let mut roots = [Complex64::new(0.0, 0.0); 4];
    let deriv = |z: Complex64| {
        (1..5)
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, k| acc * z + coefficients[k] * k as f64)
    };
    let eval = |z: Complex64| coefficients.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c);
    for (r, e) in roots.iter_mut().zip(eig.iter()) {
        let mut z = *e;
        for _ in 0..8 {
            let d = deriv(z);
            if d.norm() < 1e-10 {
                break;
            }
            let step = eval(z) / d;
            let next = z - step;
            if eval(next).norm() >= eval(z).norm() {
                break;
            }
            z = next;
        }
        *r = z;
    }
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));

    let case = classify(&roots, params.beta());
    let consistency = roots
        .iter()
        .filter(|&&r| q(params, r, omega0).norm() > 1e-8 && q(params, r, -omega0).norm() > 1e-8)
        .map(|&r| {
            let pv = 0.5 * (q(params, r, omega0).inv() + q(params, r, -omega0).inv());
            (2.0 - kappa * pv).norm()
        })
        .fold(0.0, f64::max);
    Ok(Quartic {
        coefficients,
        roots,
        case,
        consistency,
    })
}

fn classify(roots: &[Complex64; 4], beta: f64) -> RootCase {
    let scale = 1.0 + roots.iter().map(|r| r.norm()).fold(0.0, f64::max);
    let line_tol = 1e-9 * scale;
    if roots.iter().any(|r| (r.re - 0.5 * beta).abs() < line_tol) {
        return RootCase::CriticalLine;
    }
    let real_tol = DOUBLE_ROOT_SEP;
    if roots.iter().all(|r| r.im.abs() < real_tol) {
        let mut right: Vec<f64> = roots.iter().filter(|r| r.re > 0.5 * beta).map(|r| r.re).collect();
        right.sort_by(f64::total_cmp);
        if right.len() == 2 && (right[1] - right[0]).abs() < DOUBLE_ROOT_SEP {
            return RootCase::DoubleReal;
        }
        if right.len() != 2 {
            return RootCase::CriticalLine;
        }
        return RootCase::FourReal;
    }
    if roots.iter().all(|r| r.im.abs() >= real_tol) {
        return RootCase::ComplexQuadruple;
    }
    RootCase::CriticalLine
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    pub params: ModelParams,
    pub dist: FrequencyDistribution,
    pub kappa_c: f64,
    pub kappa_p: f64,
    /// `(κ, number of zeros of 1 − κP/2 in the strip [0, β])`.
    pub zero_counts: Vec<(f64, i64)>,
}

pub fn threshold_report(
    dist: &FrequencyDistribution,
    params: &ModelParams,
    kappas: &[f64],
) -> Result<ThresholdReport> {
    let zero_counts = kappas
        .iter()
        .map(|&k| count_zeros(dist, params, k, (0.0, params.beta()), None).map(|n| (k, n)))
        .collect::<Result<_>>()?;
    Ok(ThresholdReport {
        params: *params,
        dist: dist.clone(),
        kappa_c: kappa_c(dist, params)?,
        kappa_p: kappa_p(dist, params)?,
        zero_counts,
    })
}
