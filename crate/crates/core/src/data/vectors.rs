use std::path::{Path, PathBuf};

use super::{DataError, Example};
use crate::model::UnitKind;

/// Feature vectors with output targets. Each CSV row holds the features
/// followed by `output_count` target values.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorDataset {
    pub examples: Vec<Example>,
    pub feature_count: usize,
    pub output_count: usize,
}

impl VectorDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Index of the first example whose targets are not legal events for `kind`.
    pub fn first_illegal_label(&self, kind: UnitKind) -> Option<usize> {
        self.examples
            .iter()
            .position(|e| e.y.iter().any(|&v| kind.event_for_value(v).is_none()))
    }
}

/// Reads a comma-separated file. With `header`, the first line is skipped.
pub fn load_vectors(path: &Path, output_count: usize, header: bool) -> Result<VectorDataset, DataError> {
    let file = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |line: u64, message: String| DataError::Parse {
        path: PathBuf::from(path),
        line,
        message,
    };
    let mut examples = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let values = record
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>()
                    .map_err(|_| parse_err(line, format!("column {}: non-numeric cell {cell:?}", c + 1)))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        match width {
            None if values.len() <= output_count => {
                return Err(parse_err(
                    line,
                    format!("{} columns, need more than {output_count}", values.len()),
                ))
            }
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(parse_err(line, format!("ragged row: {} columns, expected {w}", values.len())))
            }
            _ => {}
        }
        let split = values.len() - output_count;
        examples.push(Example {
            x: values[..split].to_vec(),
            y: values[split..].to_vec(),
        });
    }
    let Some(w) = width else {
        return Err(DataError::Empty { path: path.into() });
    };
    Ok(VectorDataset {
        examples,
        feature_count: w - output_count,
        output_count,
    })
}

pub fn save_vectors(path: &Path, data: &VectorDataset) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| DataError::Parse {
        path: path.into(),
        line: 0,
        message: e.to_string(),
    })?;
    for e in &data.examples {
        let row: Vec<String> = e.x.iter().chain(&e.y).map(|v| format!("{v:?}")).collect();
        w.write_record(&row).map_err(|e| DataError::Parse {
            path: path.into(),
            line: 0,
            message: e.to_string(),
        })?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}
