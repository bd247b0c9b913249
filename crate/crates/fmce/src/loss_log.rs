//! Per-epoch loss logs: `epoch,loss` CSV with a header, or JSON lines with
//! `epoch` and `loss` fields. Epochs must run 1, 2, … without gaps.

use std::fmt::Write as _;
use std::path::Path;

use fmce_core::LossSeries;
use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Deserialize)]
struct Record {
    epoch: u64,
    loss: f64,
}

pub fn read(path: &Path) -> Result<LossSeries> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    let run_id = path.file_stem().map_or_else(|| "loss".to_string(), |s| s.to_string_lossy().into_owned());
    parse(&text, &run_id).map_err(|(line, message)| Error::LossLog { path: path.to_path_buf(), line, message })
}

/// Parses log text. Errors carry a 1-based line number.
pub fn parse(text: &str, run_id: &str) -> std::result::Result<LossSeries, (usize, String)> {
    let first = text.lines().position(|l| !l.trim().is_empty()).ok_or((1, "empty loss log".to_string()))?;
    let records = if text.lines().nth(first).is_some_and(|l| l.trim_start().starts_with('{')) {
        parse_jsonl(text)?
    } else {
        parse_csv(text)?
    };
    let mut values = Vec::with_capacity(records.len());
    for (i, (line, r)) in records.iter().enumerate() {
        if r.epoch != i as u64 + 1 {
            return Err((*line, format!("expected epoch {}, found {}", i + 1, r.epoch)));
        }
        if !r.loss.is_finite() || r.loss < 0.0 {
            return Err((*line, format!("loss must be finite and non-negative, found {}", r.loss)));
        }
        values.push(r.loss);
    }
    LossSeries::new(run_id, values).map_err(|e| (records.last().map_or(1, |r| r.0), e.to_string()))
}

fn parse_jsonl(text: &str) -> std::result::Result<Vec<(usize, Record)>, (usize, String)> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: Record = serde_json::from_str(line).map_err(|e| (i + 1, e.to_string()))?;
        out.push((i + 1, r));
    }
    Ok(out)
}

fn parse_csv(text: &str) -> std::result::Result<Vec<(usize, Record)>, (usize, String)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| (1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(epoch_col), Some(loss_col)) = (col("epoch"), col("loss")) else {
        return Err((1, format!("header must name `epoch` and `loss` columns, found {:?}", headers.iter().collect::<Vec<_>>())));
    };
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| (e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |c: usize| row.get(c).ok_or((line, "missing column".to_string()));
        let epoch = field(epoch_col)?.parse::<u64>().map_err(|e| (line, format!("bad epoch: {e}")))?;
        let loss = field(loss_col)?.parse::<f64>().map_err(|e| (line, format!("bad loss: {e}")))?;
        out.push((line, Record { epoch, loss }));
    }
    Ok(out)
}

/// `epoch,loss` CSV. Values print in shortest round-trip form.
pub fn to_csv(losses: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(s, "{},{}", i + 1, l);
    }
    s
}

pub fn write(path: &Path, losses: &[f64]) -> Result<()> {
    std::fs::write(path, to_csv(losses)).map_err(Error::io(path))
}
