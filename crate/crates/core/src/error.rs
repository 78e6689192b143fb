use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrError {
    #[error("frame vectors are dependent at {0:?}")]
    SingularFrame(Vec<f64>),
    #[error("contact condition degenerates at {0:?}")]
    DegenerateContact(Vec<f64>),
    #[error("Levi form is not positive definite")]
    NotPositiveDefinite,
    #[error("structure equations not solvable: residual {0:.3e}")]
    UnderdeterminedSystem(f64),
    #[error("difference stencil leaves the chart domain at {0:?}")]
    StencilOutOfDomain(Vec<f64>),
    #[error("non-finite field value at {0:?}")]
    NonFiniteField(Vec<f64>),
    #[error("density is not positive (min {0:.3e})")]
    NonPositiveDensity(f64),
    #[error("map sends {0:?} outside the target chart")]
    MapOutOfDomain(Vec<f64>),
    #[error("dilation factor must be positive, got {0}")]
    NonPositiveDilation(f64),
    #[error("lattice incompatible with the group law: {0}")]
    IncompatibleLattice(String),
    #[error("point {0:?} lies in the excluded cap of its chart")]
    CapExclusion(Vec<f64>),
    #[error("strong pseudoconvexity lost at family member {0}")]
    PseudoconvexityLost(usize),
    #[error("operation unsupported on this manifold: {0}")]
    UnsupportedManifold(String),
    #[error("no discrete operator assembled: {0}")]
    StencilNotAssembled(String),
    #[error("iteration did not converge after {iterations} steps (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("clipping touched {fraction:.3} of the nodes")]
    PositivityLoss { fraction: f64 },
    #[error("operator is indefinite (smallest eigenvalue estimate {0:.3e})")]
    IndefiniteOperator(f64),
    #[error("derivative order {requested} exceeds the maximum {max}")]
    OrderTooHigh { requested: usize, max: usize },
    #[error("grid node {0} unreachable in the horizontal graph")]
    Unreachable(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, CrError>;

impl From<std::io::Error> for CrError {
    fn from(e: std::io::Error) -> Self {
        CrError::Io(e.to_string())
    }
}

impl From<csv::Error> for CrError {
    fn from(e: csv::Error) -> Self {
        CrError::Io(e.to_string())
    }
}
