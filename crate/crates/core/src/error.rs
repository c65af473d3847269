use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Every message is prefixed with the module that raised it.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("kernels: dimension {0} is unsupported (expected 1..=3)")]
    UnsupportedDimension(usize),
    #[error("kernels: fractional order s = {0} must lie in (0,1)")]
    FractionalOrder(f64),
    #[error("kernels: {0}")]
    InvalidKernel(String),
    #[error("kernels: anisotropy violates {lambda} <= a <= {big_lambda} (found {value})")]
    AnisotropyBounds {
        lambda: f64,
        big_lambda: f64,
        value: f64,
    },
    #[error("kernels: kernel is not even (K(x) = {forward}, K(-x) = {backward})")]
    NotEven { forward: f64, backward: f64 },
    #[error("kernels: kernel takes a negative value {0}")]
    Negative(f64),
    #[error("kernels: singular kernel evaluated at the origin")]
    Singularity,
    #[error("kernels: point has dimension {found}, kernel has dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("kernels: summability condition fails (lower bound {lower_bound})")]
    NotSummable { lower_bound: f64 },
    #[error("gamma: kernel first moment is infinite")]
    InfiniteFirstMoment,
    #[error("gamma: kernel is not radial")]
    NotRadial,
    #[error("domain: {0}")]
    InvalidDomain(String),
    #[error("domain: normal has length {0}, expected 1")]
    NonUnitNormal(f64),
    #[error("domain: field is not binary")]
    NotBinary,
    #[error("domain: field value {value} at cell {cell} outside [0,1]")]
    OutOfRange { cell: usize, value: f64 },
    #[error("domain: cell {0} is exterior and frozen")]
    FrozenCell(usize),
    #[error("domain: fields live on different grids")]
    GridMismatch,
    #[error("energy: bounding box margin is smaller than the kernel support ({margin} < {required})")]
    MarginTooSmall { margin: f64, required: f64 },
    #[error("calibration: {0}")]
    InvalidCalibration(String),
    #[error("calibration: exterior data of candidate and competitor differ at cell {0}")]
    ExteriorMismatch(usize),
    #[error("solver: {0}")]
    InvalidOptions(String),
    #[error("solver: datum energy is not finite")]
    NonFiniteDatumEnergy,
    #[error("solver: energy increased for {consecutive} consecutive iterations (stage {stage}, iteration {iteration})")]
    Diverged {
        stage: usize,
        iteration: usize,
        consecutive: usize,
    },
    #[error("gamma: {0}")]
    InvalidSweep(String),
    #[error("gamma: grid spacing {h} exceeds eps_min/8 = {limit}")]
    GridTooCoarse { h: f64, limit: f64 },
}

impl Error {
    /// Numerical failures (as opposed to invalid input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotSummable { .. }
                | Error::InfiniteFirstMoment
                | Error::NonFiniteDatumEnergy
                | Error::Diverged { .. }
        )
    }
}
