use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(kuramoto_mfg::Error),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("reproduction mismatch: {0}")]
    Mismatch(String),
}

impl CliError {
    /// 2 for configuration and i/o problems (including parameters rejected
    /// by the library), 4 for non-convergence, 3 for every other numerical
    /// failure.
    pub fn exit_code(&self) -> i32 {
        use kuramoto_mfg::Error as E;
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(E::InvalidParameter { .. } | E::InvalidDistribution(_)) => 2,
            CliError::Numerical(E::PicardStagnation { .. }) => 4,
            CliError::Numerical(_) | CliError::Mismatch(_) => 3,
        }
    }
}

impl From<kuramoto_mfg::Error> for CliError {
    fn from(e: kuramoto_mfg::Error) -> Self {
        CliError::Numerical(e)
    }
}
