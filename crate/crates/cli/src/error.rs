use serde_json::json;

/// Exit code 2: the run was mis-configured or given malformed input.
/// Exit code 3: something the run depends on (files, services, workers) failed.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Infrastructure(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn infra(msg: impl Into<String>) -> Self {
        CliError::Infrastructure(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infrastructure(_) => 3,
        }
    }

    /// One-line JSON for stderr.
    pub fn diagnostic(&self) -> String {
        let (kind, message) = match self {
            CliError::Config(m) => ("config", m),
            CliError::Infrastructure(m) => ("infrastructure", m),
        };
        json!({ "error": { "kind": kind, "message": message, "exit_code": self.exit_code() } })
            .to_string()
    }
}

impl From<qvf_core::io::IoError> for CliError {
    fn from(e: qvf_core::io::IoError) -> Self {
        use qvf_core::io::IoError;
        match e {
            IoError::Fs { .. } => CliError::infra(e.to_string()),
            IoError::Json { .. } | IoError::Schema { .. } => CliError::config(e.to_string()),
        }
    }
}
