mod distribution;
mod params;

pub use distribution::{kappa_c, DistributionKind, FrequencyDistribution, DEFAULT_NODE_COUNT};
pub(crate) use distribution::kappa_c_integrand;
pub use params::ModelParams;
