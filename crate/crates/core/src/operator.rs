//! The linearised stability operator
//!
//! ```text
//! (Lk)(t) = ½ ∫₀^∞ K(t, u) ĝ(t − u) k(u) du,
//! K(t, u) = ∫₀^{t∧u} e^{−(σ²/2)(t−θ)} e^{−γ(u−θ)} dθ,
//! ```
//!
//! its discretisation on a truncated time grid, weighted norms, the
//! resolvent `(I − κL)⁻¹` and the two-Dirac Laplace-domain solver.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{FrequencyDistribution, ModelParams};
use crate::penrose::{count_zeros, n_quartic, q, q_prime, Quartic, RootCase};

pub const DEFAULT_TIME_N: usize = 2048;
const NEUMANN_TOL: f64 = 1e-10;
const RESOLVENT_RESIDUAL_TOL: f64 = 1e-8;
const LAPLACE_TAIL_TOL: f64 = 1e-8;
const DET_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::param("horizon", format!("must be positive, got {horizon}")));
        }
        if n < 64 {
            return Err(Error::param("time_n", format!("must be >= 64, got {n}")));
        }
        Ok(Self { horizon, n })
    }

    /// `T = max(40/σ², 20/β)` with `n = 2048`.
    pub fn default_for(params: &ModelParams) -> Self {
        let horizon = (40.0 / params.sigma2()).max(20.0 / params.beta());
        Self {
            horizon,
            n: DEFAULT_TIME_N,
        }
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { horizon: self.horizon, n: n.max(64) }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn step(&self) -> f64 {
        self.horizon / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.step() * i as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Composite weights over all nodes.
    pub fn weights(&self, rule: Quadrature) -> Vec<f64> {
        piece_weights(rule, self.n, self.step())
    }
}

/// Quadrature used on each smooth piece `[0, t]` and `[t, T]` of the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quadrature {
    Trapezoid,
    /// Trapezoid with fourth-order Gregory end corrections.
    #[default]
    Gregory,
}

fn piece_weights(rule: Quadrature, m: usize, h: f64) -> Vec<f64> {
    match m {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let mut w = vec![h; m];
            if rule == Quadrature::Gregory && m >= 6 {
                const END: [f64; 3] = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
                for (k, e) in END.iter().enumerate() {
                    w[k] = e * h;
                    w[m - 1 - k] = e * h;
                }
            } else {
                w[0] = 0.5 * h;
                w[m - 1] = 0.5 * h;
            }
            w
        }
    }
}

/// A real signal on a [`TimeGrid`] with the norm `sup |k(tᵢ)| e^{λtᵢ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSignal {
    grid: TimeGrid,
    values: Vec<f64>,
    lambda: f64,
}

impl WeightedSignal {
    pub fn new(grid: TimeGrid, values: Vec<f64>, lambda: f64) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::param(
                "values",
                format!("expected {} samples, got {}", grid.n(), values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("values", "non-finite sample"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::param("lambda", format!("must be >= 0, got {lambda}")));
        }
        Ok(Self { grid, values, lambda })
    }

    pub fn from_fn(grid: TimeGrid, lambda: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().into_iter().map(f).collect();
        Self::new(grid, values, lambda)
    }

    pub fn zeros(grid: TimeGrid, lambda: f64) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n()],
            lambda,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| v.abs() * (self.lambda * self.grid.node(i)).exp())
            .fold(0.0, f64::max)
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        Self {
            grid: self.grid,
            values,
            lambda: self.lambda,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.with_values(self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.with_values(self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect())
    }
}

/// `K(t, u)` evaluated as `e^{E}(1 − e^{−Bm})/B` with `B = σ² + β`,
/// `m = t ∧ u` and `E = −(σ²/2)t − γu + Bm ≤ 0`.
pub fn kernel_k(params: &ModelParams, t: f64, u: f64) -> f64 {
    let m = t.min(u);
    if m <= 0.0 {
        return 0.0;
    }
    let b = params.sigma2() + params.beta();
    let e = -0.5 * params.sigma2() * t - params.gamma() * u + b * m;
    e.exp() * (-(-b * m).exp_m1()) / b
}

/// The discretised operator `M` with `(Mk)ᵢ ≈ (Lk)(tᵢ)`.
#[derive(Debug, Clone)]
pub struct StabilityOperator {
    params: ModelParams,
    grid: TimeGrid,
    rule: Quadrature,
    matrix: DMatrix<f64>,
}

impl StabilityOperator {
    pub fn new(params: &ModelParams, dist: &FrequencyDistribution, grid: TimeGrid) -> Result<Self> {
        Self::with_rule(params, dist, grid, Quadrature::default())
    }

    pub fn with_rule(
        params: &ModelParams,
        dist: &FrequencyDistribution,
        grid: TimeGrid,
        rule: Quadrature,
    ) -> Result<Self> {
        let n = grid.n();
        let h = grid.step();
        let ghat: Vec<f64> = (0..n).map(|lag| dist.fourier(h * lag as f64)).collect::<Result<_>>()?;
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let t = grid.node(i);
                let left = piece_weights(rule, i + 1, h);
                let right = piece_weights(rule, n - i, h);
                (0..n)
                    .map(|j| {
                        let w = match j.cmp(&i) {
                            std::cmp::Ordering::Less => left[j],
                            std::cmp::Ordering::Equal => left[i] + right[0],
                            std::cmp::Ordering::Greater => right[j - i],
                        };
                        0.5 * w * kernel_k(params, t, grid.node(j)) * ghat[i.abs_diff(j)]
                    })
                    .collect()
            })
            .collect();
        let matrix = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Ok(Self {
            params: *params,
            grid,
            rule,
            matrix,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn rule(&self) -> Quadrature {
        self.rule
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, k: &WeightedSignal) -> WeightedSignal {
        let v = &self.matrix * DVector::from_column_slice(k.values());
        k.with_values(v.iter().copied().collect())
    }

    /// `maxᵢ Σⱼ |Mᵢⱼ| e^{λ(tᵢ − uⱼ)}`.
    pub fn norm(&self, lambda: f64) -> f64 {
        let n = self.grid.n();
        let h = self.grid.step();
        (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .map(|j| self.matrix[(i, j)].abs() * (lambda * h * (i as f64 - j as f64)).exp())
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>()
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// Bound on the part of `(Lk)(t)` lost by truncating at `T`, for
    /// `t ≤ T/2`, relative to `‖k‖_λ`.
    pub fn truncation_bound(&self, lambda: f64) -> f64 {
        let t = self.grid.horizon();
        let g = self.params.gamma();
        let b = self.params.sigma2() + self.params.beta();
        0.5 * (-lambda * t - 0.5 * g * t).exp() / (b * (g + lambda))
    }

    /// Solves `k = φ + κMk`, by Neumann iteration when `κ‖M‖_λ < 1` and by
    /// dense LU otherwise.
    pub fn solve_resolvent(&self, kappa: f64, phi: &WeightedSignal) -> Result<ResolventSolution> {
        let lambda = phi.lambda();
        let contraction = kappa * self.norm(lambda);
        let phi_v = DVector::from_column_slice(phi.values());
        let (k, method) = if kappa == 0.0 {
            (phi_v.clone(), ResolventMethod::Neumann { iterations: 0 })
        } else if contraction < 1.0 {
            let mut k = phi_v.clone();
            let scale = phi.norm().max(1e-300);
            let mut iterations = 0;
            loop {
                iterations += 1;
                let next = &phi_v + kappa * (&self.matrix * &k);
                let delta = phi.with_values((&next - &k).iter().copied().collect()).norm();
                k = next;
                if delta <= NEUMANN_TOL * scale || iterations >= 10_000 {
                    break;
                }
            }
            (k, ResolventMethod::Neumann { iterations })
        } else {
            let n = self.grid.n();
            let a = DMatrix::identity(n, n) - kappa * &self.matrix;
            let lu = a.lu();
            let k = lu.solve(&phi_v).ok_or(Error::SingularSystem { det: 0.0 })?;
            (k, ResolventMethod::Dense)
        };
        let signal = phi.with_values(k.iter().copied().collect());
        let mk = self.apply(&signal);
        let residual = signal
            .with_values(
                (0..signal.values.len())
                    .map(|i| signal.values[i] - phi.values[i] - kappa * mk.values[i])
                    .collect(),
            )
            .norm();
        if !(residual < RESOLVENT_RESIDUAL_TOL * phi.norm().max(1.0)) {
            return Err(Error::SingularSystem { det: residual });
        }
        Ok(ResolventSolution {
            k: signal,
            residual,
            method,
            contraction,
            truncation_bound: self.truncation_bound(lambda),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResolventMethod {
    Neumann { iterations: usize },
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolventSolution {
    pub k: WeightedSignal,
    /// `‖k − φ − κMk‖_λ`.
    pub residual: f64,
    pub method: ResolventMethod,
    /// `κ‖M‖_λ`.
    pub contraction: f64,
    pub truncation_bound: f64,
}

pub fn apply_l(params: &ModelParams, dist: &FrequencyDistribution, k: &WeightedSignal) -> Result<WeightedSignal> {
    Ok(StabilityOperator::new(params, dist, *k.grid())?.apply(k))
}

pub fn op_norm_l(params: &ModelParams, dist: &FrequencyDistribution, lambda: f64, grid: TimeGrid) -> Result<f64> {
    check_lambda(params, lambda)?;
    Ok(StabilityOperator::new(params, dist, grid)?.norm(lambda))
}

pub fn solve_resolvent(
    params: &ModelParams,
    dist: &FrequencyDistribution,
    kappa: f64,
    phi: &WeightedSignal,
) -> Result<ResolventSolution> {
    check_lambda(params, phi.lambda())?;
    StabilityOperator::new(params, dist, *phi.grid())?.solve_resolvent(kappa, phi)
}

fn check_lambda(params: &ModelParams, lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda < 0.5 * params.sigma2() {
        Ok(())
    } else {
        Err(Error::param("lambda", format!("must lie in [0, sigma^2/2), got {lambda}")))
    }
}

/// `1/((γ + λ)(σ² − 2λ))`.
pub fn norm_bound(params: &ModelParams, lambda: f64) -> f64 {
    1.0 / ((params.gamma() + lambda) * (params.sigma2() - 2.0 * lambda))
}

/// Exact `‖L‖_λ` for laws with a nonnegative Fourier transform:
/// `∫ ((σ²−2λ)(λ+γ) + 2ω²) / (((σ²−2λ)² + 4ω²)((λ+γ)² + ω²)) g(dω)`.
pub fn norm_closed_form(params: &ModelParams, dist: &FrequencyDistribution, lambda: f64) -> Result<f64> {
    let a = params.sigma2() - 2.0 * lambda;
    let c = lambda + params.gamma();
    dist.integrate(|w| {
        let w2 = w * w;
        (a * c + 2.0 * w2) / ((a * a + 4.0 * w2) * (c * c + w2))
    })
}

/// The coupled operators `(L¹h, L²h)` for a possibly non-symmetric law,
/// without the factor `κ`. For symmetric laws they reduce to `(Lh¹, Lh²)`.
pub fn apply_coupled(
    params: &ModelParams,
    dist: &FrequencyDistribution,
    h1: &WeightedSignal,
    h2: &WeightedSignal,
) -> Result<(WeightedSignal, WeightedSignal)> {
    let grid = *h1.grid();
    if grid != *h2.grid() {
        return Err(Error::param("h2", "signals must share a grid"));
    }
    let n = grid.n();
    let h = grid.step();
    let mut cos_t = Vec::with_capacity(2 * n - 1);
    let mut sin_t = Vec::with_capacity(2 * n - 1);
    for lag in -(n as i64 - 1)..=(n as i64 - 1) {
        let s = h * lag as f64;
        cos_t.push(dist.integrate(|w| (w * s).cos())?);
        sin_t.push(dist.integrate(|w| (w * s).sin())?);
    }
    let rule = Quadrature::default();
    let out: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let t = grid.node(i);
            let left = piece_weights(rule, i + 1, h);
            let right = piece_weights(rule, n - i, h);
            let (mut a, mut b) = (0.0, 0.0);
            for j in 0..n {
                let w = match j.cmp(&i) {
                    std::cmp::Ordering::Less => left[j],
                    std::cmp::Ordering::Equal => left[i] + right[0],
                    std::cmp::Ordering::Greater => right[j - i],
                };
                let lag = (i as i64 - j as i64 + n as i64 - 1) as usize;
                let kw = 0.5 * w * kernel_k(params, t, grid.node(j));
                let (c, s) = (cos_t[lag], sin_t[lag]);
                a += kw * (h1.values[j] * c - h2.values[j] * s);
                b += kw * (-h1.values[j] * s + h2.values[j] * c);
            }
            (a, b)
        })
        .collect();
    Ok((
        h1.with_values(out.iter().map(|p| p.0).collect()),
        h2.with_values(out.iter().map(|p| p.1).collect()),
    ))
}

/// `∫₀^T e^{−zt} k(t) dt` on the grid, refusing when the neglected tail
/// `e^{−(Re z + λ)T}‖k‖_λ/(Re z + λ)` exceeds `1e-8`.
pub fn laplace_of_signal(k: &WeightedSignal, z: Complex64) -> Result<Complex64> {
    let decay = z.re + k.lambda();
    if !(decay > 0.0) {
        return Err(Error::param("z", format!("need Re z > -lambda, got Re z = {}", z.re)));
    }
    let grid = k.grid();
    let bound = (-decay * grid.horizon()).exp() * k.norm() / decay;
    if bound > LAPLACE_TAIL_TOL {
        return Err(Error::TruncatedTail { bound });
    }
    let w = grid.weights(Quadrature::default());
    Ok(k
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| (-z * grid.node(i)).exp() * (v * w[i]))
        .sum())
}

/// Laplace transform `φ̂` of a forcing signal.
pub trait LaplaceEvaluator {
    fn eval(&self, z: Complex64) -> Complex64;

    /// `φ̂'(z)`, by default a central difference along the real axis.
    fn derivative(&self, z: Complex64) -> Complex64 {
        let h = 1e-5;
        (self.eval(z + h) - self.eval(z - h)) / (2.0 * h)
    }
}

/// `φ(t) = e^{−at}`, `φ̂(z) = 1/(z + a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialSignal {
    pub rate: f64,
}

impl LaplaceEvaluator for ExponentialSignal {
    fn eval(&self, z: Complex64) -> Complex64 {
        (z + self.rate).inv()
    }

    fn derivative(&self, z: Complex64) -> Complex64 {
        -((z + self.rate).powi(2)).inv()
    }
}

/// `φ ≡ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroSignal;

impl LaplaceEvaluator for ZeroSignal {
    fn eval(&self, _z: Complex64) -> Complex64 {
        Complex64::new(0.0, 0.0)
    }

    fn derivative(&self, _z: Complex64) -> Complex64 {
        Complex64::new(0.0, 0.0)
    }
}

#[derive(Debug, Clone)]
pub struct LaplaceSolution<F> {
    pub a: Complex64,
    pub b: Complex64,
    pub case: RootCase,
    pub quartic: Quartic,
    params: ModelParams,
    omega0: f64,
    kappa: f64,
    phihat: F,
}

impl<F: LaplaceEvaluator> LaplaceSolution<F> {
    /// `ĥ(z) = φ̂ + κ(Q(z,ω₀)(φ̂ − b) + Q(z,−ω₀)(φ̂ − a))/N(z)`.
    pub fn hhat(&self, z: Complex64) -> Complex64 {
        let ph = self.phihat.eval(z);
        let qp = q(&self.params, z, self.omega0);
        let qm = q(&self.params, z, -self.omega0);
        ph + self.kappa * (qp * (ph - self.b) + qm * (ph - self.a)) / self.quartic.eval(z)
    }
}

/// Solves the Laplace-domain resolvent equation for `g = (δ_{ω₀} + δ_{−ω₀})/2`.
pub fn two_dirac_laplace_solve<F: LaplaceEvaluator>(
    params: &ModelParams,
    omega0: f64,
    kappa: f64,
    lambda: f64,
    phihat: F,
) -> Result<LaplaceSolution<F>> {
    check_lambda(params, lambda)?;
    if lambda <= 0.0 {
        return Err(Error::param("lambda", "must be positive"));
    }
    let dist = FrequencyDistribution::two_dirac(omega0)?;
    let zeros = count_zeros(&dist, params, kappa, (-lambda, params.beta() + lambda), None)?;
    if zeros != 0 {
        return Err(Error::PenroseViolated { zeros });
    }
    let quartic = n_quartic(params, omega0, kappa)?;
    let right = quartic.right_roots(params.beta());
    let m = |z: Complex64| q(params, z, omega0) + q(params, z, -omega0);
    let m_prime = |z: Complex64| q_prime(params, z, omega0) + q_prime(params, z, -omega0);
    let row = |r: Complex64| {
        (
            [q(params, r, -omega0), q(params, r, omega0)],
            m(r) * phihat.eval(r),
        )
    };
    let (rows, rhs) = match quartic.case {
        RootCase::CriticalLine => return Err(Error::PenroseViolated { zeros: 4 }),
        RootCase::ComplexQuadruple | RootCase::FourReal => {
            let (r1, c1) = row(right[0]);
            let (r2, c2) = row(right[1]);
            ([r1, r2], [c1, c2])
        }
        RootCase::DoubleReal => {
            let x = Complex64::new(0.5 * (right[0].re + right[1].re), 0.0);
            let (r1, c1) = row(x);
            let r2 = [q_prime(params, x, -omega0), q_prime(params, x, omega0)];
            let c2 = m_prime(x) * phihat.eval(x) + m(x) * phihat.derivative(x);
            ([r1, r2], [c1, c2])
        }
    };
    let mat = Matrix2::new(rows[0][0], rows[0][1], rows[1][0], rows[1][1]);
    let det = mat.determinant();
    if det.norm() < DET_TOL {
        return Err(Error::SingularSystem { det: det.norm() });
    }
    let sol = mat.try_inverse().ok_or(Error::SingularSystem { det: det.norm() })? * Vector2::new(rhs[0], rhs[1]);
    Ok(LaplaceSolution {
        a: sol[0],
        b: sol[1],
        case: quartic.case,
        quartic,
        params: *params,
        omega0,
        kappa,
        phihat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> ModelParams {
        ModelParams::new(1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn kernel_vanishes_on_axes_and_is_asymmetric() {
        let p = unit();
        assert_eq!(kernel_k(&p, 0.0, 3.0), 0.0);
        assert_eq!(kernel_k(&p, 3.0, 0.0), 0.0);
        assert!((kernel_k(&p, 1.0, 2.0) - kernel_k(&p, 2.0, 1.0)).abs() > 1e-3);
    }

    #[test]
    fn gregory_weights_integrate_cubics_exactly() {
        let m = 11;
        let h = 0.1;
        let w = piece_weights(Quadrature::Gregory, m, h);
        let s: f64 = (0..m).map(|i| w[i] * (h * i as f64).powi(3)).sum();
        assert!((s - 0.25).abs() < 1e-13, "{s}");
    }

    #[test]
    fn laplace_of_exponential() {
        let grid = TimeGrid::new(60.0, 4096).unwrap();
        let k = WeightedSignal::from_fn(grid, 0.05, |t| (-0.3 * t).exp()).unwrap();
        let z = Complex64::new(0.7, 1.3);
        let v = laplace_of_signal(&k, z).unwrap();
        assert!((v - (z + 0.3).inv()).norm() < 1e-6);
        let zero = WeightedSignal::zeros(grid, 0.05);
        assert_eq!(laplace_of_signal(&zero, z).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn laplace_tail_is_checked() {
        let grid = TimeGrid::new(5.0, 128).unwrap();
        let k = WeightedSignal::from_fn(grid, 0.0, |_| 1.0).unwrap();
        assert!(matches!(
            laplace_of_signal(&k, Complex64::new(0.1, 0.0)),
            Err(Error::TruncatedTail { .. })
        ));
    }
}
