use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub enum CliError {
    /// Exit 2: the invocation itself is wrong.
    Usage(String),
    /// Exit 1: inputs parsed but violate a precondition.
    Contract(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Contract(_) => 1,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Usage(format!("file not found: {}", path.display()))
        } else {
            CliError::Contract(format!("i/o error on {}: {e}", path.display()))
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Contract(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<advface::Error> for CliError {
    fn from(e: advface::Error) -> Self {
        match e {
            advface::Error::Config(_) | advface::Error::NotFound(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Contract(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, body: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, body).map_err(|e| CliError::io(path, e))
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Parses TOML, naming the file in the diagnostic.
pub fn parse_toml<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    toml::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config error in {}: {e}", path.display())))
}
