use platoon_core::Error as CoreError;

/// Exit statuses: 0 ok, 2 bad input, 3 infeasible gains, 4 unstable
/// queue, 5 numerical failure or collision. 1 is left for I/O on output.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{0}")]
    Usage(String),

    #[error("cannot read {path}: {source}")]
    Input {
        path: String,
        source: std::io::Error,
    },

    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),

    #[error("{0}")]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse { .. } | CliError::Usage(_) | CliError::Input { .. } => 2,
            CliError::Output(_) => 1,
            CliError::Core(e) => match e {
                CoreError::InvalidParameter { .. } => 2,
                CoreError::InfeasibleGains { .. }
                | CoreError::NonRealSpectrum { .. }
                | CoreError::InfeasibleBox(_)
                | CoreError::PremiseViolated { .. }
                | CoreError::ProvisoFailed { .. } => 3,
                CoreError::UnstableQueue { .. } => 4,
                CoreError::Quadrature { .. }
                | CoreError::NegativeDensity { .. }
                | CoreError::Collision { .. } => 5,
            },
        }
    }
}

/// Line and column, both 1-based, of byte `offset` in `text`.
pub fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}
