//! CSV input and output of subject records (`x,d1,y,d2,w1,...,wp`).

use std::io::{Read, Write};

use crate::error::{ModelError, Result};
use crate::likelihood::SubjectRecord;
use crate::simulation::LatentDraw;

fn io_err(e: impl std::fmt::Display) -> ModelError {
    ModelError::Io(e.to_string())
}

pub fn write_csv<W: Write>(records: &[SubjectRecord], out: W) -> Result<()> {
    let p = records.first().map_or(0, |r| r.w.len());
    let mut wtr = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["x", "d1", "y", "d2"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=p).map(|k| format!("w{k}")));
    wtr.write_record(&header).map_err(io_err)?;
    for r in records {
        let mut row = vec![
            r.x.to_string(),
            u8::from(r.d1).to_string(),
            r.y.to_string(),
            u8::from(r.d2).to_string(),
        ];
        row.extend(r.w.iter().map(|v| v.to_string()));
        wtr.write_record(&row).map_err(io_err)?;
    }
    wtr.flush().map_err(io_err)
}

pub fn write_latent_csv<W: Write>(latent: &[LatentDraw], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["t1", "t2", "c", "u", "v", "q"]).map_err(io_err)?;
    for l in latent {
        wtr.write_record([l.t1, l.t2, l.c, l.u, l.v, l.q].map(|v| v.to_string())).map_err(io_err)?;
    }
    wtr.flush().map_err(io_err)
}

/// Parses records, reporting the 1-based line of the first malformed row.
pub fn read_csv<R: Read>(mut input: R) -> Result<Vec<SubjectRecord>> {
    let mut text = Vec::new();
    input.read_to_end(&mut text).map_err(io_err)?;
    // the reader's own line counter skips blank lines; derive lines from byte offsets
    let line_at = |pos: Option<&csv::Position>| -> u64 {
        let Some(p) = pos else { return 0 };
        let mut start = (p.byte() as usize).min(text.len());
        while start < text.len() && matches!(text[start], b'\r' | b'\n') {
            start += 1;
        }
        1 + text[..start].iter().filter(|&&b| b == b'\n').count() as u64
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_slice());
    let header = rdr
        .headers()
        .map_err(|e| ModelError::Parse { line: 1, reason: e.to_string() })?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 4 || names[..4] != ["x", "d1", "y", "d2"] {
        return Err(ModelError::Parse { line: 1, reason: "header must start with x,d1,y,d2".into() });
    }
    for (k, name) in names[4..].iter().enumerate() {
        if *name != format!("w{}", k + 1) {
            return Err(ModelError::Parse { line: 1, reason: format!("expected column w{}, found {name:?}", k + 1) });
        }
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = line_at(e.position());
            ModelError::Parse { line, reason: e.to_string() }
        })?;
        let line = line_at(row.position());
        let err = |reason: String| ModelError::Parse { line, reason };
        let num = |i: usize| -> Result<f64> {
            let field = &row[i];
            field.parse::<f64>().map_err(|_| err(format!("column {} is not a number: {field:?}", names[i])))
        };
        let flag = |i: usize| -> Result<bool> {
            match &row[i] {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(err(format!("column {} must be 0 or 1, found {other:?}", names[i]))),
            }
        };
        let rec = SubjectRecord {
            x: num(0)?,
            d1: flag(1)?,
            y: num(2)?,
            d2: flag(3)?,
            w: (4..names.len()).map(num).collect::<Result<_>>()?,
        };
        rec.validate().map_err(err)?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(ModelError::EmptyData);
    }
    Ok(records)
}
