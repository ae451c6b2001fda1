//! Error taxonomy shared by all modules, with a total mapping to CLI exit codes.

/// Errors produced anywhere in the solver stack.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("degenerate element: {0}")]
    DegenerateElement(String),
    #[error("non-conforming mesh: {0}")]
    NonConforming(String),
    #[error("domain has handles (beta_1 != 0): {0}")]
    HandlesPresent(String),
    #[error("vorticity fails integrability conditions: {0}")]
    NotIntegrable(String),
    #[error("boundary data incompatible: {0}")]
    IncompatibleBoundaryData(String),
    #[error("right-hand side incompatible with quotient space: {0}")]
    IncompatibleRhs(String),
    #[error("right-hand side not orthogonal to constants: {0}")]
    InconsistentRhs(String),
    #[error("linear system is singular: {0}")]
    SingularSystem(String),
    #[error("iterative solver hit the iteration limit: {0}")]
    MaxIterations(String),
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("potential evaluation tolerance not met: {0}")]
    ToleranceNotMet(String),
    #[error("evaluation point lies on the boundary: {0}")]
    PointOnBoundary(String),
    #[error("cached solution not found: {0}")]
    CacheMiss(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// A stage of the pipeline failed; wraps the underlying error with the stage name.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Exit code taxonomy: 2 input/parse, 3 topology gate, 4 integrability,
    /// 5 boundary data, 6 solver/numerics. Total over all variants.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_)
            | Error::DegenerateElement(_)
            | Error::NonConforming(_)
            | Error::Config(_)
            | Error::CacheMiss(_)
            | Error::Io(_) => 2,
            Error::HandlesPresent(_) => 3,
            Error::NotIntegrable(_) => 4,
            Error::IncompatibleBoundaryData(_) | Error::IncompatibleRhs(_) => 5,
            Error::InconsistentRhs(_)
            | Error::SingularSystem(_)
            | Error::MaxIterations(_)
            | Error::QuadratureFailure(_)
            | Error::ToleranceNotMet(_)
            | Error::PointOnBoundary(_) => 6,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
