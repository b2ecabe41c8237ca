//! CSV output helpers. Files are written to a temporary sibling and renamed
//! into place so an interrupted run never leaves a truncated file behind.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::NodeField;
use crate::scalar::Scalar;

/// 17 significant digits: round-trips every `f64`.
pub fn fmt_exact<T: Scalar>(v: T) -> String {
    format!("{v:.16e}")
}

/// 4 significant digits, matching the published table layout.
pub fn fmt_short<T: Scalar>(v: T) -> String {
    format!("{v:.3e}")
}

pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file_name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{file_name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(contents.as_bytes())
            .map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Builds CSV text from a header and rows of preformatted cells.
pub fn csv_text<I, R>(header: &str, rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut out = String::with_capacity(4096);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

/// Reads the `x` column of a snapshot file (`i,X,x,f`).
pub fn read_snapshot_trajectory<T: Scalar>(path: &Path) -> Result<NodeField<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "i,X,x,f" => {}
        _ => return Err(parse_err(1, "expected header 'i,X,x,f'".into())),
    }
    let mut values = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(parse_err(
                idx + 1,
                format!("expected 4 columns, got {}", cols.len()),
            ));
        }
        let v: f64 = cols[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(idx + 1, format!("bad x value '{}'", cols[2])))?;
        values.push(T::lit(v));
    }
    Ok(NodeField(values))
}
