//! Tab-separated evaluation-set manifests: one record per image mapping the
//! HR source to its degraded LR, the kernel that produced it, and the scale.

use std::path::{Path, PathBuf};

use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct ManifestRecord {
    pub hr: PathBuf,
    pub lr: PathBuf,
    pub kernel: PathBuf,
    pub scale: usize,
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<(), CliError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            r.hr.display(),
            r.lr.display(),
            r.kernel.display(),
            r.scale
        ));
    }
    std::fs::write(path, out).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("reading manifest {}", path.display()), e))?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(CliError::Format(format!(
                "{}:{}: expected 4 tab-separated fields, got {}",
                path.display(),
                lineno + 1,
                fields.len()
            )));
        }
        let scale: usize = fields[3].parse().map_err(|_| {
            CliError::Format(format!(
                "{}:{}: bad scale `{}`",
                path.display(),
                lineno + 1,
                fields[3]
            ))
        })?;
        records.push(ManifestRecord {
            hr: PathBuf::from(fields[0]),
            lr: PathBuf::from(fields[1]),
            kernel: PathBuf::from(fields[2]),
            scale,
        });
    }
    Ok(records)
}
