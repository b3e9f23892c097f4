use std::path::PathBuf;

use crate::config::ConfigIssue;

#[derive(Debug, thiserror::Error)]
pub enum CtpError {
    #[error(transparent)]
    Core(#[from] ctp_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {detail}", path.display())]
    Input { path: PathBuf, detail: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("checkpoint version {found} is newer than the supported version {supported}")]
    Version { found: u16, supported: u16 },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("{}", render_issues(.0))]
    Config(Vec<ConfigIssue>),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Usage(String),
}

fn render_issues(issues: &[ConfigIssue]) -> String {
    let mut s = format!("{} configuration error(s):", issues.len());
    for i in issues {
        s.push_str(&format!("\n  {i}"));
    }
    s
}

pub type Result<T> = std::result::Result<T, CtpError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CtpError {
    let path = path.into();
    move |source| CtpError::Io { path, source }
}

/// Wraps a core error with the file it came from.
pub(crate) fn in_file(path: impl Into<PathBuf>) -> impl FnOnce(ctp_core::Error) -> CtpError {
    let path = path.into();
    move |e| CtpError::Input {
        path,
        detail: e.to_string(),
    }
}
