//! Machine-readable DSL diagnostics.
//!
//! These codes are the feedback contract with the generation agent: a failed
//! parse or validation reports every problem it found, each tagged with a
//! stable code the agent can react to.

use serde::{Deserialize, Serialize};

/// Stable diagnostic codes for template programs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DslErrorCode {
    /// Document is not well-formed TOML or an expression failed to parse.
    Syntax,
    /// The final rule must be an unconditional default.
    MissingDefaultRule,
    /// Rules after the default rule are unreachable.
    RuleAfterDefault,
    /// Feature definitions form a reference cycle.
    FeatureCycle,
    /// Expression calls a function not in the library.
    UnknownFunction,
    /// Function called with the wrong number of arguments.
    FunctionArity,
    /// Expression references a name that is neither a feature, a
    /// hyperparameter, a window binding, nor a `meta.*` column.
    UnknownIdentifier,
    /// Text placeholder has no feature or metadata binding.
    UnboundPlaceholder,
    /// Rule chooses an option index that does not exist.
    RuleOptionOutOfRange,
    /// Programs must offer between 2 and 4 options.
    BadOptionCount,
    /// Selection block is internally inconsistent.
    BadSelection,
    /// Unknown category or subcategory name.
    BadCategory,
    /// Selection references columns absent from the dataset schema.
    SchemaMismatch,
    /// No dataset series can satisfy the window bounds.
    WindowInfeasible,
    /// Evaluation produced fewer samples than requested.
    InsufficientSamples,
}

impl DslErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DslErrorCode::Syntax => "SYNTAX",
            DslErrorCode::MissingDefaultRule => "MISSING_DEFAULT_RULE",
            DslErrorCode::RuleAfterDefault => "RULE_AFTER_DEFAULT",
            DslErrorCode::FeatureCycle => "FEATURE_CYCLE",
            DslErrorCode::UnknownFunction => "UNKNOWN_FUNCTION",
            DslErrorCode::FunctionArity => "FUNCTION_ARITY",
            DslErrorCode::UnknownIdentifier => "UNKNOWN_IDENTIFIER",
            DslErrorCode::UnboundPlaceholder => "UNBOUND_PLACEHOLDER",
            DslErrorCode::RuleOptionOutOfRange => "RULE_OPTION_OUT_OF_RANGE",
            DslErrorCode::BadOptionCount => "BAD_OPTION_COUNT",
            DslErrorCode::BadSelection => "BAD_SELECTION",
            DslErrorCode::BadCategory => "BAD_CATEGORY",
            DslErrorCode::SchemaMismatch => "SCHEMA_MISMATCH",
            DslErrorCode::WindowInfeasible => "WINDOW_INFEASIBLE",
            DslErrorCode::InsufficientSamples => "INSUFFICIENT_SAMPLES",
        }
    }
}

impl std::fmt::Display for DslErrorCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One diagnostic with its code and document location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DslError {
    pub code: DslErrorCode,
    /// Where in the document the problem sits, e.g. `features.slope`.
    pub location: String,
    pub message: String,
}

impl DslError {
    pub fn new(
        code: DslErrorCode,
        location: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        DslError {
            code,
            location: location.into(),
            message: message.into(),
        }
    }

    /// Render a semicolon-joined summary of several diagnostics.
    pub fn join(errors: &[DslError]) -> String {
        errors
            .iter()
            .map(|e| e.to_string())
            .collect::<Vec<_>>()
            .join("; ")
    }
}

impl std::fmt::Display for DslError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.location.is_empty() {
            write!(f, "{}: {}", self.code, self.message)
        } else {
            write!(f, "{} at `{}`: {}", self.code, self.location, self.message)
        }
    }
}
