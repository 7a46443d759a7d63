use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("edge ({u}, {v}): probability {p} outside (0, 1)")]
    InvalidProbability { u: usize, v: usize, p: f64 },

    #[error("self loop at node {0}")]
    SelfLoop(usize),

    #[error("edge ({u}, {v}) listed twice with different values")]
    ConflictingDuplicateEdge { u: usize, v: usize },

    #[error("node {0} out of range")]
    NodeOutOfRange(usize),

    #[error("edge ({0}, {1}) has no transmission probability assigned")]
    ProbabilityUnset(usize, usize),

    #[error("edge ({0}, {1}) has no contact duration")]
    DurationUnset(usize, usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("seeding probability {p} for node {v} outside [0, 1)")]
    InvalidSeedingProbability { v: usize, p: f64 },

    #[error("cascade is not a tree rooted at {root}: {msg}")]
    MalformedCascade { root: usize, msg: String },

    #[error("cascade contains node {0} from a negative pool")]
    CascadeTouchesNegativePool(usize),

    #[error("live edge ({0}, {1}) does not leave a seed")]
    LiveEdgeUnseededOrigin(usize, usize),

    #[error("live edge ({0}, {1}) is not a crossing edge of the instance")]
    UnknownLiveEdge(usize, usize),

    #[error("pool size {size} exceeds the {selected} selected nodes")]
    PoolSizeTooLarge { size: usize, selected: usize },

    #[error("pool {0} is empty")]
    EmptyPool(usize),

    #[error("observation covers {got} pools, pool design has {want}")]
    ObservationMismatch { got: usize, want: usize },

    #[error("negative arc weight {w} on ({u}, {v}); transmission probabilities above 1/2 are unsupported here")]
    NegativeArcWeight { u: usize, v: usize, w: f64 },

    #[error("only {reachable} of {needed} terminals reachable from the root")]
    TerminalsUnreachable { needed: usize, reachable: usize },

    #[error("root {0} tested negative (member of a negative pool)")]
    RootInNegativePool(usize),

    #[error("positive pool {pool} cannot be explained: {msg}")]
    InfeasiblePool { pool: usize, msg: String },

    #[error("transmission probabilities above 1/2 on {0} edges; approximation guarantees do not apply")]
    AssumptionViolated(usize),

    #[error("{got} pools exceed the enumeration cap of {cap}")]
    OutcomeCapExceeded { got: usize, cap: usize },

    #[error("hypothesis enumeration exceeded budget of {0}")]
    EnumerationBudget(usize),

    #[error("no outcome hypothesis admits a consistent cascade")]
    NoFeasibleOutcome,

    #[error("linear program is infeasible")]
    LpInfeasible,

    #[error("linear program is unbounded")]
    LpUnbounded,

    #[error("simplex failed to converge within {0} pivots")]
    LpStalled(usize),

    #[error("instance too large for exhaustive search: {0}")]
    ExhaustiveSearchTooLarge(String),

    #[error("no cascade is consistent with the observation")]
    NoConsistentCascade,

    #[error("ground truth is empty")]
    EmptyGroundTruth,

    #[error("{0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Infeasibility of the instance (as opposed to bad input or an internal
    /// failure): the observation admits no consistent reconstruction, or a
    /// baseline's random restriction destroyed feasibility.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::RootInNegativePool(_)
                | Error::InfeasiblePool { .. }
                | Error::TerminalsUnreachable { .. }
                | Error::NoFeasibleOutcome
                | Error::LpInfeasible
                | Error::NoConsistentCascade
        )
    }
}
