use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const DEFAULT_GRID_N: usize = 256;

/// Forward/inverse FFT plans shared by every field on a grid.
#[derive(Clone)]
pub(crate) struct Plans {
    pub forward: Arc<dyn Fft<f64>>,
    pub inverse: Arc<dyn Fft<f64>>,
}

/// Uniform periodic grid `x_j = 2πj/n` on the torus.
#[derive(Clone)]
pub struct TorusGrid {
    n: usize,
    plans: Plans,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid").field("n", &self.n).finish()
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

impl TorusGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::param("grid_n", format!("must be a power of two >= 16, got {n}")));
        }
        let mut planner = FftPlanner::new();
        let plans = Plans {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        };
        Ok(Self { n, plans })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.n as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.point(j)).collect()
    }

    /// Signed wavenumber of FFT bin `j`.
    pub(crate) fn wavenumber(&self, j: usize) -> f64 {
        if j <= self.n / 2 {
            j as f64
        } else {
            j as f64 - self.n as f64
        }
    }

    pub(crate) fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.plans.forward.process(&mut buf);
        buf
    }

    /// Inverse transform, normalised, returning the real part.
    pub(crate) fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.plans.inverse.process(&mut spectrum);
        let scale = 1.0 / self.n as f64;
        spectrum.iter().map(|c| c.re * scale).collect()
    }

    /// Applies the Fourier multiplier `m(k)` to a real field. At the Nyquist
    /// bin only the real part of the multiplier is kept so the result stays real.
    pub(crate) fn apply_multiplier(&self, values: &[f64], m: impl Fn(f64) -> Complex64) -> Vec<f64> {
        let mut spec = self.forward(values);
        let nyq = self.n / 2;
        for (j, c) in spec.iter_mut().enumerate() {
            let k = self.wavenumber(j);
            let mut factor = m(k);
            if j == nyq {
                factor = Complex64::new(factor.re, 0.0);
            }
            *c *= factor;
        }
        self.inverse_real(spec)
    }
}

/// A real function sampled on a [`TorusGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct TorusField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl TorusField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::param(
                "values",
                format!("expected {} samples, got {}", grid.n(), values.len()),
            ));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::param("values", format!("non-finite sample {bad}")));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: &TorusGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.points().into_iter().map(f).collect();
        Self::new(grid.clone(), values)
    }

    pub fn constant(grid: &TorusGrid, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![c; grid.n()],
        }
    }

    /// The uniform probability density `1/2π`.
    pub fn uniform_density(grid: &TorusGrid) -> Self {
        Self::constant(grid, 1.0 / (2.0 * PI))
    }

    pub(crate) fn from_raw(grid: &TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n());
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Trapezoid rule, spectrally accurate for smooth periodic integrands.
    pub fn integral(&self) -> f64 {
        self.grid.spacing() * self.values.iter().sum::<f64>()
    }

    /// `∫ f(x) φ(x) dx` for a weight function `φ`.
    pub fn integrate_against(&self, phi: impl Fn(f64) -> f64) -> f64 {
        let h = self.grid.spacing();
        self.values
            .iter()
            .enumerate()
            .map(|(j, v)| v * phi(h * j as f64))
            .sum::<f64>()
            * h
    }

    /// `(∫ cos(kx) f, ∫ sin(kx) f)`.
    pub fn harmonic(&self, k: u32) -> (f64, f64) {
        let h = self.grid.spacing();
        let n = self.values.len();
        let kf = k as f64;
        let (mut c, mut s) = (0.0, 0.0);
        let half = if k > 0 && n % (2 * k as usize) == 0 { n / (2 * k as usize) } else { 0 };
        if half > 0 {
            // cos and sin flip sign over half a period, so paired differences
            // vanish exactly for constant fields
            for j in (0..n).filter(|j| (j / half) % 2 == 0) {
                let x = kf * h * j as f64;
                let d = self.values[j] - self.values[j + half];
                c += d * x.cos();
                s += d * x.sin();
            }
        } else {
            for (j, v) in self.values.iter().enumerate() {
                let x = kf * h * j as f64;
                c += v * x.cos();
                s += v * x.sin();
            }
        }
        (c * h, s * h)
    }

    /// Spectral derivative of the given order.
    pub fn derivative(&self, order: u32) -> Self {
        let values = self.grid.apply_multiplier(&self.values, |k| {
            Complex64::new(0.0, k).powu(order)
        });
        Self::from_raw(&self.grid, values)
    }

    /// The field `x ↦ f(x − δ)`, by a Fourier phase shift.
    pub fn rotated(&self, delta: f64) -> Self {
        let values = self
            .grid
            .apply_multiplier(&self.values, |k| Complex64::from_polar(1.0, -k * delta));
        Self::from_raw(&self.grid, values)
    }

    /// The reflected field `x ↦ f(−x)`.
    pub fn reflected(&self) -> Self {
        let n = self.grid.n();
        let values = (0..n).map(|j| self.values[(n - j) % n]).collect();
        Self::from_raw(&self.grid, values)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }
}

/// Order parameters `(α₁, α₂)` of the mean-field cost
/// `κ − α₁ cos x − α₂ sin x`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OrderParameters {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl OrderParameters {
    pub const ZERO: Self = Self {
        alpha1: 0.0,
        alpha2: 0.0,
    };

    pub fn new(alpha1: f64, alpha2: f64) -> Self {
        Self { alpha1, alpha2 }
    }

    pub fn polar(r: f64, theta: f64) -> Self {
        Self::new(r * theta.cos(), r * theta.sin())
    }

    pub fn norm(&self) -> f64 {
        self.alpha1.hypot(self.alpha2)
    }

    /// Evaluates the cost `κ − α₁ cos x − α₂ sin x`.
    pub fn cost(&self, kappa: f64, x: f64) -> f64 {
        kappa - self.alpha1 * x.cos() - self.alpha2 * x.sin()
    }
}
