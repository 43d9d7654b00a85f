//! Writers for the CSV tables and JSON documents.

use crate::error::CliError;
use serde::Serialize;
use std::io::Write;
use std::path::Path;

/// Columns of every per-sample campaign table.
pub const CAMPAIGN_HEADER: [&str; 8] =
    ["sample_index", "x1", "x2", "v1", "v2", "condition", "residual", "relative_residual"];

/// Full double precision, 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignRow {
    pub sample_index: usize,
    pub x: [f64; 2],
    pub v: [f64; 2],
    pub condition: String,
    pub residual: f64,
    pub relative: f64,
}

impl CampaignRow {
    fn record(&self) -> [String; 8] {
        [
            self.sample_index.to_string(),
            num(self.x[0]),
            num(self.x[1]),
            num(self.v[0]),
            num(self.v[1]),
            self.condition.clone(),
            num(self.residual),
            num(self.relative),
        ]
    }
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

pub fn write_csv<I, R>(out: Option<&Path>, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(sink(out)?);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_campaign_csv(out: Option<&Path>, rows: &[CampaignRow]) -> Result<(), CliError> {
    write_csv(out, &CAMPAIGN_HEADER, rows.iter().map(|r| r.record()))
}

pub fn write_json<T: Serialize>(out: Option<&Path>, doc: &T) -> Result<(), CliError> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, doc)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
