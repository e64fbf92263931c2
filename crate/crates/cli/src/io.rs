//! File loading and the error type shared by the subcommands.

use std::fmt;
use std::fs;
use std::path::Path;

use stairverify::network::Network;
use stairverify::Error;

/// A failure mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Malformed files, bad flags, data that does not fit the network (exit 2).
    Input(String),
    /// A capability or resource limit was hit (exit 3).
    Limit(String),
    /// Anything else (exit 1).
    Other(String),
}

impl CliError {
    pub fn with_context(self, ctx: &str) -> Self {
        match self {
            CliError::Input(m) => CliError::Input(format!("{ctx}: {m}")),
            CliError::Limit(m) => CliError::Limit(format!("{ctx}: {m}")),
            CliError::Other(m) => CliError::Other(format!("{ctx}: {m}")),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Limit(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Limit(m) => write!(f, "limit reached: {m}"),
            CliError::Other(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Input(_) | Error::Parameter(_) | Error::Domain(_) | Error::Json(_) => CliError::Input(e.to_string()),
            Error::Capability(_) => CliError::Limit(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

pub fn load_network(path: &Path) -> CliResult<Network> {
    let text = read_text(path)?;
    Network::from_json(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// A vector given as a JSON array or as numbers separated by commas and/or
/// whitespace.
pub fn parse_vector(text: &str, origin: &str) -> CliResult<Vec<f64>> {
    let trimmed = text.trim();
    if trimmed.starts_with('[') {
        return serde_json::from_str(trimmed).map_err(|e| CliError::Input(format!("{origin}: {e}")));
    }
    trimmed
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .enumerate()
        .map(|(i, s)| s.parse::<f64>().map_err(|e| CliError::Input(format!("{origin}: entry {} ({s:?}): {e}", i + 1))))
        .collect()
}

/// One dataset row: input vector and label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub label: usize,
}

/// Reads a headerless or headed CSV with the label in the last column. A
/// first row that does not parse as numbers is taken as a header.
pub fn load_dataset(path: &Path) -> CliResult<Vec<Sample>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(i as u64 + 1, |p| p.line());
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let values: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let values = match values {
            Ok(v) => v,
            Err(_) if rows.is_empty() && i == 0 => continue,
            Err(e) => return Err(CliError::Input(format!("{} line {line}: {e}", path.display()))),
        };
        if values.len() < 2 {
            return Err(CliError::Input(format!("{} line {line}: need at least one feature and a label", path.display())));
        }
        let (label, input) = values.split_last().expect("non-empty");
        if *label < 0.0 || label.fract() != 0.0 {
            return Err(CliError::Input(format!("{} line {line}: label {label} is not a class index", path.display())));
        }
        rows.push(Sample { input: input.to_vec(), label: *label as usize });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectors_in_both_syntaxes() {
        assert_eq!(parse_vector("[1, 2.5]", "t").unwrap(), vec![1.0, 2.5]);
        assert_eq!(parse_vector(" 1,2.5\n-3 ", "t").unwrap(), vec![1.0, 2.5, -3.0]);
        assert!(matches!(parse_vector("1, x", "t"), Err(CliError::Input(_))));
    }

    #[test]
    fn library_errors_map_to_exit_codes() {
        assert_eq!(CliError::from(Error::Input("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(Error::Capability("x".into())).exit_code(), 3);
        assert_eq!(CliError::from(Error::Numerical("x".into())).exit_code(), 1);
    }
}
