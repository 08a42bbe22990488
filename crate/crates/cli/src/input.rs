//! CSV ingestion for effect-size and 2x2-count data.

use std::fs::File;
use std::io::{self, Read};
use std::path::Path;
use std::str::FromStr;

use cdpi_core::model::{from_counts, StudySet, TwoByTwo, TwoByTwoSet};

use crate::{CliError, CliResult, InputFormat};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub format: InputFormat,
    pub studies: StudySet,
    /// 0.5 was added to every cell because some table had an empty cell.
    pub continuity_corrected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Spread {
    Se,
    Var,
}

fn data_err(line: u64, msg: impl AsRef<str>) -> CliError {
    CliError::Data(format!("line {line}: {}", msg.as_ref()))
}

fn csv_err(e: csv::Error) -> CliError {
    match e.position() {
        Some(p) => data_err(p.line(), e.to_string()),
        None => CliError::Data(e.to_string()),
    }
}

fn column(headers: &[String], name: &str) -> Option<usize> {
    headers.iter().position(|h| h == name)
}

fn require(headers: &[String], name: &str) -> CliResult<usize> {
    column(headers, name).ok_or_else(|| data_err(1, format!("missing column '{name}'")))
}

fn field<T: FromStr>(rec: &csv::StringRecord, idx: usize, name: &str, line: u64) -> CliResult<T> {
    let raw = rec.get(idx).unwrap_or("");
    raw.parse()
        .map_err(|_| data_err(line, format!("cannot parse {name} = '{raw}'")))
}

pub fn read_path(path: &Path, format: Option<InputFormat>) -> CliResult<Dataset> {
    if path.as_os_str() == "-" {
        return read_dataset(io::stdin().lock(), format);
    }
    let file = File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    read_dataset(file, format)
}

/// Reads a CSV with a header row. Without an explicit format, a header
/// containing `x1` selects the counts layout.
pub fn read_dataset<R: Read>(rdr: R, format: Option<InputFormat>) -> CliResult<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(rdr);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    if headers.iter().all(|h| h.is_empty()) {
        return Err(CliError::Data("input is empty; a header row is required".into()));
    }
    let format = format.unwrap_or(if column(&headers, "x1").is_some() {
        InputFormat::Counts
    } else {
        InputFormat::Effects
    });
    match format {
        InputFormat::Effects => read_effects(&mut rdr, &headers),
        InputFormat::Counts => read_counts(&mut rdr, &headers),
    }
}

fn label(rec: &csv::StringRecord, idx: Option<usize>, row: usize) -> String {
    idx.and_then(|i| rec.get(i))
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .unwrap_or_else(|| (row + 1).to_string())
}

fn too_few(k: usize) -> CliError {
    CliError::Data(format!("at least 2 studies are required, got {k}"))
}

fn read_effects<R: Read>(rdr: &mut csv::Reader<R>, headers: &[String]) -> CliResult<Dataset> {
    let study = column(headers, "study");
    let y_col = require(headers, "y")?;
    let (spread, s_col) = match (column(headers, "se"), column(headers, "v")) {
        (Some(i), None) => (Spread::Se, i),
        (None, Some(i)) => (Spread::Var, i),
        (Some(_), Some(_)) => return Err(data_err(1, "give exactly one of the columns 'se' and 'v'")),
        (None, None) => return Err(data_err(1, "missing column 'se' (or 'v')")),
    };
    let (mut labels, mut y, mut sigma2) = (Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(row as u64 + 2, |p| p.line());
        let yi: f64 = field(&rec, y_col, "y", line)?;
        if !yi.is_finite() {
            return Err(data_err(line, format!("y must be finite, got {yi}")));
        }
        let s: f64 = match spread {
            Spread::Se => field(&rec, s_col, "se", line)?,
            Spread::Var => field(&rec, s_col, "v", line)?,
        };
        if !(s.is_finite() && s > 0.0) {
            let name = if spread == Spread::Se { "se" } else { "v" };
            return Err(data_err(line, format!("{name} must be positive, got {s}")));
        }
        labels.push(label(&rec, study, row));
        y.push(yi);
        sigma2.push(if spread == Spread::Se { s * s } else { s });
    }
    if y.len() < 2 {
        return Err(too_few(y.len()));
    }
    Ok(Dataset {
        format: InputFormat::Effects,
        studies: StudySet::with_labels(y, sigma2, labels)?,
        continuity_corrected: false,
    })
}

fn read_counts<R: Read>(rdr: &mut csv::Reader<R>, headers: &[String]) -> CliResult<Dataset> {
    let study = column(headers, "study");
    let cols = [
        require(headers, "x1")?,
        require(headers, "n1")?,
        require(headers, "x0")?,
        require(headers, "n0")?,
    ];
    let (mut labels, mut tables) = (Vec::new(), Vec::new());
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(row as u64 + 2, |p| p.line());
        let x1 = field(&rec, cols[0], "x1", line)?;
        let n1 = field(&rec, cols[1], "n1", line)?;
        let x0 = field(&rec, cols[2], "x0", line)?;
        let n0 = field(&rec, cols[3], "n0", line)?;
        tables.push(TwoByTwo::new(x1, n1, x0, n0).map_err(|e| data_err(line, e.to_string()))?);
        labels.push(label(&rec, study, row));
    }
    if tables.len() < 2 {
        return Err(too_few(tables.len()));
    }
    let set = TwoByTwoSet::with_labels(tables, labels)?;
    Ok(Dataset {
        format: InputFormat::Counts,
        continuity_corrected: set.needs_continuity_correction(),
        studies: from_counts(&set)?,
    })
}
