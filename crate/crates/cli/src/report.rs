//! Report emission: delimited text with the manifest as a comment header,
//! metric values at six decimals, and an optional full-precision sidecar for
//! machine consumption.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::manifest::RunManifest;

/// Six-decimal metric formatting, matching the precision of the report
/// tables.
pub fn metric(x: f64) -> String {
    format!("{x:.6}")
}

/// Scientific notation for small metrics.
pub fn sci(x: f64) -> String {
    format!("{x:.6e}")
}

/// Full-precision (shortest round-trip) formatting for the sidecar.
pub fn full(x: f64) -> String {
    format!("{x}")
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".full");
    out.with_file_name(name)
}

/// Write the report to `out` (stdout when `None`); when writing to a file
/// and a full-precision body is supplied, it lands in `<out>.full`.
pub fn emit(
    out: Option<&Path>,
    manifest: &RunManifest,
    body: &str,
    full_body: Option<&str>,
) -> Result<()> {
    let text = format!("{}{}", manifest.render(), body);
    match out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(path) => {
            fs::write(path, &text)
                .with_context(|| format!("cannot write report {}", path.display()))?;
            if let Some(full_body) = full_body {
                let side = sidecar_path(path);
                let text = format!("{}{}", manifest.render(), full_body);
                fs::write(&side, text)
                    .with_context(|| format!("cannot write sidecar {}", side.display()))?;
            }
            Ok(())
        }
    }
}
