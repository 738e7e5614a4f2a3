//! Error classification onto the fixed exit codes:
//! 1 usage, 2 data, 3 backend.

use reljudge_core::analysis::AnalysisError;
use reljudge_core::collection::CollectionError;
use reljudge_core::judge::{BackendError, JudgeError};
use reljudge_core::metrics::MetricsError;
use reljudge_core::prompting::PromptError;
use reljudge_core::runner::{ExpenseError, RunError};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Backend(m) => m,
        }
    }
}

impl From<CollectionError> for CliError {
    fn from(e: CollectionError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ExpenseError> for CliError {
    fn from(e: ExpenseError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        CliError::Backend(e.to_string())
    }
}

impl From<JudgeError> for CliError {
    fn from(e: JudgeError) -> Self {
        match e {
            JudgeError::InvalidSpec(m) => CliError::Usage(m),
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Collection(c) => c.into(),
            RunError::Prompt(p) => p.into(),
            RunError::Judge(j) => j.into(),
            RunError::Expense(x) => x.into(),
            RunError::InvalidConfig(m) => CliError::Usage(m),
            err @ RunError::Interrupted { .. } => CliError::Backend(err.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}
