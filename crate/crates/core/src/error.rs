use thiserror::Error;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("failed to read case file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation at {location}: {message}")]
    Schema { location: String, message: String },
    #[error("invariant violated by {element}: {rule}")]
    Invariant { rule: String, element: String },
    #[error("unit mismatch: {0}")]
    UnitMismatch(String),
    #[error("unsupported case format version {0}")]
    Version(u32),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("variable `{0}` declared twice")]
    DuplicateVariable(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable x{var} referenced by {context} is not declared")]
    UndeclaredVariable { var: usize, context: String },
    #[error("empty bounds on `{name}`: [{lower}, {upper}]")]
    EmptyBounds { name: String, lower: f64, upper: f64 },
    #[error("nonconvex model: {0}")]
    Nonconvex(String),
    #[error("missing linearization coefficients for branch {0}")]
    MissingLinearization(usize),
    #[error("scenario set is empty")]
    EmptyScenarioSet,
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("backend `{backend}` failed: {message}")]
    Backend { backend: String, message: String },
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("program has {0} free binary variables; use branch-and-bound")]
    FreeBinaries(usize),
    #[error("unknown solver backend `{0}`")]
    UnknownBackend(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerFlowError {
    #[error("Newton-Raphson did not converge in {iterations} iterations (mismatch trace {trace:?})")]
    NonConvergence { iterations: usize, trace: Vec<f64> },
    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("expansion point has non-positive squared voltage {value} at node {node}")]
    InvalidExpansionPoint { node: usize, value: f64 },
    #[error("no slack node designated")]
    NoSlack,
    #[error("injection vector has length {got}, expected {expected}")]
    InjectionLength { got: usize, expected: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error("decomposition error: {0}")]
    Decomposition(String),
    #[error("{0}")]
    Infeasible(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
