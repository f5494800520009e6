use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trapping session within a year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Spring,
    Autumn,
}

impl Season {
    /// Fraction of the year at which the session takes place.
    pub fn year_fraction(self) -> f64 {
        match self {
            Season::Spring => 0.45,
            Season::Autumn => 0.70,
        }
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Season::Spring => "spring",
            Season::Autumn => "autumn",
        })
    }
}

impl FromStr for Season {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "spring" => Ok(Season::Spring),
            "autumn" | "fall" => Ok(Season::Autumn),
            other => Err(format!("unknown season '{other}'")),
        }
    }
}

/// A vole trapping series: raw indices (voles per hundred trap-nights)
/// and the integer counts `round(10 * index)` used as observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedSeries {
    pub year: Vec<i32>,
    pub season: Vec<Season>,
    pub raw_index: Vec<f64>,
    pub counts: Vec<u64>,
}

impl ObservedSeries {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn obs(&self) -> Vec<f64> {
        self.counts.iter().map(|c| *c as f64).collect()
    }

    /// Observation times in years.
    pub fn obs_times(&self) -> Vec<f64> {
        self.year.iter().zip(&self.season).map(|(y, s)| *y as f64 + s.year_fraction()).collect()
    }

    /// Builds a series from integer counts; the index is `count / 10`.
    pub fn from_counts(year: Vec<i32>, season: Vec<Season>, counts: Vec<u64>) -> Result<Self> {
        if year.len() != season.len() || year.len() != counts.len() {
            return Err(crate::error::invalid("year, season and counts differ in length"));
        }
        let raw_index = counts.iter().map(|c| *c as f64 / 10.0).collect();
        Ok(Self { year, season, raw_index, counts })
    }

    /// `year,season,index` with the index written as `count / 10` in exact decimal form.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "year,season,index")?;
        for i in 0..self.len() {
            let c = self.counts[i];
            writeln!(w, "{},{},{}.{}", self.year[i], self.season[i], c / 10, c % 10)?;
        }
        Ok(())
    }
}

/// `round_half_up(10 x)` computed on the decimal text, so that `2.35`
/// gives 24 regardless of its binary representation. Returns `None` for
/// negative, non-finite or unparsable input.
pub fn tenfold_count(text: &str) -> Option<u64> {
    let t = text.trim();
    let plain = !t.is_empty() && t.chars().all(|c| c.is_ascii_digit() || c == '.') && t.matches('.').count() <= 1;
    if plain {
        let (int, frac) = t.split_once('.').unwrap_or((t, ""));
        if int.is_empty() && frac.is_empty() {
            return None;
        }
        let int: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
        let mut digits = frac.bytes().map(|b| u64::from(b - b'0'));
        let tenths = digits.next().unwrap_or(0);
        let round_up = digits.next().is_some_and(|d| d >= 5);
        return int.checked_mul(10)?.checked_add(tenths + u64::from(round_up));
    }
    let x: f64 = t.parse().ok()?;
    (x.is_finite() && x >= 0.0).then(|| (10.0 * x + 0.5).floor() as u64)
}

fn parse_error(line: u64, message: impl Into<String>) -> Error {
    Error::Parse { line: line as usize, message: message.into() }
}

/// Parses `year,season,index` rows, checking that indices are
/// non-negative and rows strictly increase in `(year, season)`.
pub fn parse_voles_csv<R: Read>(reader: R) -> Result<ObservedSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    if header != ["year", "season", "index"] {
        return Err(parse_error(1, format!("expected header year,season,index, found {}", header.join(","))));
    }
    let mut year = Vec::new();
    let mut season = Vec::new();
    let mut raw_index = Vec::new();
    let mut counts = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(parse_error(line, format!("expected 3 fields, found {}", rec.len())));
        }
        let y: i32 = rec[0].parse().map_err(|_| parse_error(line, format!("invalid year '{}'", &rec[0])))?;
        let s: Season = rec[1].parse().map_err(|e: String| parse_error(line, e))?;
        let x: f64 = rec[2].parse().map_err(|_| parse_error(line, format!("invalid index '{}'", &rec[2])))?;
        if !x.is_finite() || x < 0.0 {
            return Err(parse_error(line, format!("index must be finite and >= 0, got {}", &rec[2])));
        }
        let c = tenfold_count(&rec[2]).ok_or_else(|| parse_error(line, format!("invalid index '{}'", &rec[2])))?;
        if let (Some(py), Some(ps)) = (year.last(), season.last()) {
            if (y, s) <= (*py, *ps) {
                return Err(parse_error(line, format!("row {y} {s} is not after {py} {ps}")));
            }
        }
        year.push(y);
        season.push(s);
        raw_index.push(x);
        counts.push(c);
    }
    if counts.is_empty() {
        return Err(parse_error(1, "no data rows"));
    }
    Ok(ObservedSeries { year, season, raw_index, counts })
}

pub fn load_voles_csv(path: impl AsRef<Path>) -> Result<ObservedSeries> {
    parse_voles_csv(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_rule() {
        assert_eq!(tenfold_count("2.34"), Some(23));
        assert_eq!(tenfold_count("2.35"), Some(24));
        assert_eq!(tenfold_count("0"), Some(0));
        assert_eq!(tenfold_count(".05"), Some(1));
        assert_eq!(tenfold_count("12"), Some(120));
        assert_eq!(tenfold_count("1e1"), Some(100));
        assert_eq!(tenfold_count("-1"), None);
        assert_eq!(tenfold_count("."), None);
    }

    #[test]
    fn parses_and_rounds() {
        let s = parse_voles_csv("year,season,index\n1952,spring,2.34\n1952,autumn,0\n1953,spring,1.05\n".as_bytes())
            .unwrap();
        assert_eq!(s.counts, vec![23, 0, 11]);
        assert_eq!(s.season, vec![Season::Spring, Season::Autumn, Season::Spring]);
        assert_eq!(s.obs_times(), vec![1952.45, 1952.70, 1953.45]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("year,season,index\n1952,spring,1\n1952,spring,2\n", 3),
            ("year,season,index\n1952,spring,1\n1953,spring,-2\n", 3),
            ("year,season,index\n1952,winter,1\n", 2),
            ("year,season,index\n1952,spring\n", 2),
            ("yr,season,index\n1952,spring,1\n", 1),
        ];
        for (text, expected) in cases {
            match parse_voles_csv(text.as_bytes()) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, expected, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let s = ObservedSeries::from_counts(vec![1990, 1990], vec![Season::Spring, Season::Autumn], vec![7, 123]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "year,season,index\n1990,spring,0.7\n1990,autumn,12.3\n");
        assert_eq!(parse_voles_csv(buf.as_slice()).unwrap().counts, s.counts);
    }
}
