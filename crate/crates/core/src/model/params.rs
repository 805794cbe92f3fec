use crate::error::{Error, Result};

/// Scalar configuration of the game: coupling `kappa`, discount `beta`
/// and noise `sigma`. `gamma = beta + sigma^2 / 2` is always derived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    kappa: f64,
    beta: f64,
    sigma: f64,
}

impl ModelParams {
    pub fn new(kappa: f64, beta: f64, sigma: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(Error::param("kappa", format!("must be finite and >= 0, got {kappa}")));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::param("beta", format!("must be finite and > 0, got {beta}")));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::param("sigma", format!("must be finite and > 0, got {sigma}")));
        }
        Ok(Self { kappa, beta, sigma })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub fn gamma(&self) -> f64 {
        self.beta + 0.5 * self.sigma * self.sigma
    }

    /// Same `beta` and `sigma` with another coupling strength.
    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        Self::new(kappa, self.beta, self.sigma)
    }

    /// `kappa_c(delta_0) = gamma sigma^2`.
    pub fn kappa_c_delta0(&self) -> f64 {
        self.gamma() * self.sigma2()
    }
}
