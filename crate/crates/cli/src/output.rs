//! Output-directory handling, atomic file writes, and numeric grid parsing.

use crate::config::ConfigError;
use std::path::{Path, PathBuf};

/// Write through a temp file in the same directory and rename into place, so
/// concurrent jobs never interleave bytes in a visible file.
pub fn write_atomic(path: &Path, content: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)
}

pub fn out_path(out_dir: &Path, name: &str) -> PathBuf {
    out_dir.join(name)
}

/// Keep file-name fragments to a safe charset.
pub fn sanitize_fragment(raw: &str) -> String {
    raw.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '+') { c } else { '_' })
        .collect()
}

/// Parse a grid: either an explicit comma list (`40,200`) or an inclusive
/// `start:stop:step` range with positive step. Tokens are kept as written
/// (range points are rendered compactly) so file names stay predictable.
pub fn parse_grid(spec: &str) -> Result<Vec<String>, ConfigError> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(ConfigError::general("empty sweep".to_string()));
    }
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(ConfigError::general(format!(
                "bad range '{spec}', expected start:stop:step"
            )));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| ConfigError::general(format!("bad number '{s}' in range '{spec}'")))
        };
        let start = parse(parts[0])?;
        let stop = parse(parts[1])?;
        let step = parse(parts[2])?;
        if step.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(ConfigError::general(format!("range '{spec}' needs a positive step")));
        }
        if stop < start {
            return Err(ConfigError::general(format!(
                "range '{spec}' must be monotone (start <= stop)"
            )));
        }
        let mut values = Vec::new();
        let mut k = 0u64;
        loop {
            let v = start + k as f64 * step;
            if v > stop + 1e-9 * step {
                break;
            }
            values.push(format!("{v}"));
            k += 1;
            if k > 1_000_000 {
                return Err(ConfigError::general(format!("range '{spec}' is too large")));
            }
        }
        if values.is_empty() {
            return Err(ConfigError::general("empty sweep".to_string()));
        }
        return Ok(values);
    }
    let values: Vec<String> = spec
        .split(',')
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .collect();
    if values.is_empty() {
        return Err(ConfigError::general("empty sweep".to_string()));
    }
    for v in &values {
        if v.parse::<f64>().is_err() {
            return Err(ConfigError::general(format!("bad number '{v}' in grid '{spec}'")));
        }
    }
    Ok(values)
}
