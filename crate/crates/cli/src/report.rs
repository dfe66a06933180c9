//! Outcome type and the error summary printed on stderr.

use std::path::Path;

use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub enum Outcome {
    Success,
    /// Finished, but these `(sample_id, reason)` pairs were skipped.
    Partial(Vec<(String, String)>),
}

impl Outcome {
    pub fn from_failures(failures: Vec<(String, String)>) -> Self {
        if failures.is_empty() {
            Outcome::Success
        } else {
            Outcome::Partial(failures)
        }
    }
}

#[derive(Serialize)]
struct ErrorSummary<'a> {
    schema_version: u32,
    error: &'a str,
    failures: Vec<FailureEntry<'a>>,
}

#[derive(Serialize)]
struct FailureEntry<'a> {
    sample_id: &'a str,
    reason: &'a str,
}

/// One JSON line on stderr.
pub fn print_error_summary(error: &str, failures: &[(String, String)]) {
    let summary = ErrorSummary {
        schema_version: SCHEMA_VERSION,
        error,
        failures: failures
            .iter()
            .map(|(id, reason)| FailureEntry { sample_id: id, reason })
            .collect(),
    };
    eprintln!("{}", serde_json::to_string(&summary).expect("summary serializes"));
}

/// Makes error text independent of where the data lives by stripping the
/// given roots from any path it mentions.
pub fn relative_message(message: &str, roots: &[&Path]) -> String {
    let mut out = message.to_owned();
    for root in roots {
        let prefix = root.display().to_string();
        if prefix.is_empty() {
            continue;
        }
        out = out.replace(&format!("{prefix}/"), "").replace(&prefix, ".");
    }
    out
}
