use std::path::Path;

use popdyn_infer::harness::parse_voles_csv;
use popdyn_infer::{Error, Result};

/// Observations read from disk, with their times when the file has them.
pub struct Series {
    pub times: Option<Vec<f64>>,
    pub obs: Vec<f64>,
}

/// Reads either a `year,season,index` vole file (counts are the rounded
/// tenfold indices) or any CSV with an `obs` column and optional `time` column.
pub fn load_series(path: &Path) -> Result<Series> {
    let text = std::fs::read_to_string(path)?;
    let header = text.lines().next().unwrap_or("").trim().to_ascii_lowercase();
    if header.replace(' ', "") == "year,season,index" {
        let s = parse_voles_csv(text.as_bytes())?;
        return Ok(Series { times: Some(s.obs_times()), obs: s.obs() });
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let cols = rdr.headers()?.clone();
    let find = |name: &str| cols.iter().position(|c| c == name);
    let obs_col = find("obs").ok_or_else(|| Error::Parse { line: 1, message: "no 'obs' column".into() })?;
    let time_col = find("time");
    let mut times = Vec::new();
    let mut obs = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let num = |i: usize| {
            rec[i].parse::<f64>().map_err(|_| Error::Parse { line, message: format!("invalid number '{}'", &rec[i]) })
        };
        obs.push(num(obs_col)?);
        if let Some(c) = time_col {
            times.push(num(c)?);
        }
    }
    if obs.is_empty() {
        return Err(Error::Parse { line: 1, message: "no data rows".into() });
    }
    Ok(Series { times: time_col.map(|_| times), obs })
}
