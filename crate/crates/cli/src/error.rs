use pzflow::homogenization::HomogenizationError;
use pzflow::macro_model::MacroError;
use pzflow::sensitivity::SensitivityError;
use pzflow::MeshError;
use serde::Serialize;

pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Reported on stderr as `{"error": kind, "message": ...}`.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub error: String,
    pub message: String,
    #[serde(skip)]
    pub code: i32,
}

impl CliError {
    pub fn config(kind: &str, message: impl Into<String>) -> Self {
        CliError { error: kind.to_string(), message: message.into(), code: EXIT_CONFIG }
    }

    pub fn numerical(kind: &str, message: impl Into<String>) -> Self {
        CliError { error: kind.to_string(), message: message.into(), code: EXIT_NUMERICAL }
    }

    pub fn io(e: std::io::Error) -> Self {
        CliError::numerical("OutputError", e.to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error serialization")
    }
}

/// Variant name of an error enum from its `Debug` form.
fn variant<E: std::fmt::Debug>(e: &E) -> String {
    let d = format!("{e:?}");
    d.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error").to_string()
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        CliError::config(e.kind(), e.to_string())
    }
}

impl From<HomogenizationError> for CliError {
    fn from(e: HomogenizationError) -> Self {
        match e {
            HomogenizationError::Mesh(m) => m.into(),
            HomogenizationError::CellProblem(c) => CliError::numerical(&variant(&c), c.to_string()),
        }
    }
}

impl From<SensitivityError> for CliError {
    fn from(e: SensitivityError) -> Self {
        match e {
            SensitivityError::Mesh(m) => m.into(),
            SensitivityError::Homogenization(h) => h.into(),
            SensitivityError::OracleBudgetExceeded { .. } => CliError::config("OracleBudgetExceeded", e.to_string()),
            other => CliError::numerical(&variant(&other), other.to_string()),
        }
    }
}

impl From<MacroError> for CliError {
    fn from(e: MacroError) -> Self {
        match e {
            MacroError::InvalidConfig(_) | MacroError::MissingElectrode(_) => CliError::config(&variant(&e), e.to_string()),
            other => CliError::numerical(&variant(&other), other.to_string()),
        }
    }
}
