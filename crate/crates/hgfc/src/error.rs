use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("{what} = {value} is not a multiple of delta = {delta}")]
    NonCommensurate { what: String, value: f64, delta: f64 },
    #[error("infeasible schedule: {0}")]
    InfeasibleSchedule(String),
    #[error("job {job} is incomplete: {missing} slots of work left")]
    IncompleteSchedule { job: usize, missing: usize },
    #[error("second derivative undefined at breakpoint t = {t}")]
    NotDifferentiable { t: f64 },
    #[error("t = {t} lies before the cost shift {shift}")]
    BeforeShift { t: f64, shift: f64 },
    #[error("derivative order {0} is not supported")]
    BadOrder(u8),
    #[error("invalid cost function: {0}")]
    InvalidCost(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("curvature sup diverges on (0, {horizon}]")]
    UnboundedCurvature { horizon: f64 },
    #[error("stretch ratio sup is unbounded (zero slope at t = {t})")]
    UnboundedTheta { t: f64 },
    #[error("speed {speed} has no rational form with denominator <= {max_den}")]
    NonIntegralCapacity { speed: f64, max_den: u64 },
    #[error("network cannot route all supply: {0}")]
    InfeasibleNetwork(String),
    #[error("flow is not optimal: negative cycle in the complementary slackness graph")]
    NonOptimalInput,
    #[error("instance has {slots} slots of work, above the cap of {cap}")]
    TooLarge { slots: usize, cap: usize },
    #[error("step of job {job} driven to height {height} < 0")]
    NegativeHeight { job: usize, height: f64 },
    #[error("step of job {job} would be raised by {amount}")]
    RaisedStep { job: usize, amount: f64 },
    #[error("insertion time {t} is not on the slot grid")]
    OffGrid { t: f64 },
    #[error("cost of job {job} on machine {machine} is not convex")]
    NonConvexCost { job: usize, machine: usize },
    #[error("costs do not share one core function: {0}")]
    MixedCores(String),
    #[error("LP solver failed: {0}")]
    Lp(String),
}

pub type Result<T> = std::result::Result<T, Error>;
