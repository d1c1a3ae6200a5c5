use camrobot::beliefmap::BeliefMapError;
use camrobot::handeye::HandEyeError;
use camrobot::kinematics::KinematicsError;
use camrobot::metrics::MetricsError;
use camrobot::pnp::PnpError;
use camrobot::synth::SynthError;
use serde::Serialize;
use std::fmt::Display;
use std::path::Path;

pub const EXIT_IO: i32 = 1;
pub const EXIT_PRECONDITION: i32 = 2;
pub const EXIT_EMPTY: i32 = 3;

/// Machine-readable command failure, printed as JSON on stderr.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn new(kind: &str, message: impl Display, exit_code: i32) -> Self {
        CliError {
            kind: kind.to_string(),
            message: message.to_string(),
            exit_code,
        }
    }

    pub fn io(path: &Path, e: impl Display) -> Self {
        CliError::new("Io", format!("{}: {e}", path.display()), EXIT_IO)
    }

    pub fn parse(path: &Path, e: impl Display) -> Self {
        CliError::new("Parse", format!("{}: {e}", path.display()), EXIT_IO)
    }

    pub fn argument(e: impl Display) -> Self {
        CliError::new("InvalidArgument", e, EXIT_IO)
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl From<PnpError> for CliError {
    fn from(e: PnpError) -> Self {
        let kind = match e {
            PnpError::InsufficientPoints { .. } => "InsufficientPoints",
            PnpError::DegenerateConfiguration(_) => "DegenerateConfiguration",
            PnpError::AllPointsBehindCamera => "AllPointsBehindCamera",
            PnpError::InvalidCorrespondence(_) => "InvalidCorrespondence",
        };
        CliError::new(kind, e, EXIT_PRECONDITION)
    }
}

impl From<HandEyeError> for CliError {
    fn from(e: HandEyeError) -> Self {
        let kind = match e {
            HandEyeError::InsufficientMotion(_) => "InsufficientMotion",
            HandEyeError::Numerical(_) => "Numerical",
        };
        CliError::new(kind, e, EXIT_PRECONDITION)
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::EmptyEvaluation(_) => CliError::new("EmptyEvaluation", e, EXIT_EMPTY),
            MetricsError::SolverUnavailableForM { .. } => CliError::new("SolverUnavailableForM", e, EXIT_PRECONDITION),
            MetricsError::DimensionMismatch { .. } => CliError::new("DimensionMismatch", e, EXIT_IO),
            MetricsError::InvalidConfig(_) => CliError::new("InvalidConfig", e, EXIT_IO),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::MissingLimits(_) => CliError::new("MissingLimits", e, EXIT_PRECONDITION),
            SynthError::TooFewKeypoints(_) => CliError::new("TooFewKeypoints", e, EXIT_PRECONDITION),
            SynthError::InvalidConfig(_) => CliError::new("InvalidConfig", e, EXIT_IO),
            SynthError::Kinematics(k) => k.into(),
            SynthError::BeliefMap(b) => b.into(),
        }
    }
}

impl From<KinematicsError> for CliError {
    fn from(e: KinematicsError) -> Self {
        let kind = match e {
            KinematicsError::Parse { .. } => "Parse",
            KinematicsError::Validation { .. } => "Validation",
            KinematicsError::DimensionMismatch { .. } => "DimensionMismatch",
            KinematicsError::OutOfLimits { .. } => "OutOfLimits",
            KinematicsError::MissingLimits(_) => "MissingLimits",
        };
        CliError::new(kind, e, EXIT_IO)
    }
}

impl From<BeliefMapError> for CliError {
    fn from(e: BeliefMapError) -> Self {
        CliError::new("BeliefMap", e, EXIT_IO)
    }
}
