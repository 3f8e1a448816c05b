use caricature::Error;

/// A failed command: either the configuration is unusable or a named pipeline
/// stage returned a library error.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Error,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Tags a library result with the stage that produced it.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> CliResult<T>;
}

impl<T> StageContext<T> for caricature::Result<T> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}
