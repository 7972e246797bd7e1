use thiserror::Error;

/// Errors raised by the simulator. Variants map to the CLI exit codes:
/// configuration problems are usage errors, the rest are domain errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("position x = {x:.6e} m outside the cavity [0, {length:.6e}] m")]
    OutsideCavity { x: f64, length: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("not a trap: ground-state Stark shift {stark_ground_hz} Hz must be negative")]
    NotATrap { stark_ground_hz: f64 },

    #[error("FORT wavelength equals the atomic wavelength; detuning is zero")]
    ZeroDetuning,

    #[error("PSD undefined at {frequency_hz:.6e} Hz (table covers [{min_hz:.6e}, {max_hz:.6e}] Hz, extrapolation disabled)")]
    PsdOutOfRange {
        frequency_hz: f64,
        min_hz: f64,
        max_hz: f64,
    },

    #[error("sample rate {sample_rate_hz:.6e} Hz too low for band up to {band_hz:.6e} Hz (need >= {required_hz:.6e} Hz)")]
    SampleRateTooLow {
        sample_rate_hz: f64,
        band_hz: f64,
        required_hz: f64,
    },

    #[error("time step {dt:.6e} s exceeds bound {max_dt:.6e} s (1/(50 nu_axial))")]
    TimeStepTooLarge { dt: f64, max_dt: f64 },

    #[error("series too short: {reason}")]
    SeriesTooShort { reason: String },

    #[error("noise series covers {available:.6e} s, need {required:.6e} s")]
    NoiseTooShort { available: f64, required: f64 },

    #[error("empty or degenerate range: {0}")]
    EmptyRange(String),

    #[error("delay grids differ between signal and background")]
    MismatchedGrids,

    #[error("fit needs at least {required} usable points, got {got}")]
    Underdetermined { required: usize, got: usize },

    #[error("fit did not converge after {iterations} iterations (last step {last_step:.3e}, residual {residual:.3e})")]
    NoConvergence {
        iterations: usize,
        last_step: f64,
        residual: f64,
    },

    #[error("invalid timing: {0}")]
    InvalidTiming(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by malformed input files or keys.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
