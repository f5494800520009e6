use std::io::{Read, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::samplers::Chain;

/// Writes several chains with the same parameters into one table:
/// `method,[dataset,]iter,<names>,loglik,accepted`.
pub fn write_chains_csv<W: Write>(chains: &[(&str, Option<usize>, &Chain)], mut w: W) -> Result<()> {
    let Some((_, _, first)) = chains.first() else {
        return Err(invalid("no chains to write"));
    };
    let with_dataset = chains.iter().any(|c| c.1.is_some());
    write!(w, "method,")?;
    if with_dataset {
        write!(w, "dataset,")?;
    }
    writeln!(w, "iter,{},loglik,accepted", first.names.join(","))?;
    for (method, dataset, chain) in chains {
        if chain.names != first.names {
            return Err(invalid("chains have different parameters"));
        }
        for (i, row) in chain.draws.iter().enumerate() {
            write!(w, "{method},")?;
            if with_dataset {
                write!(w, "{},", dataset.map_or(String::new(), |d| d.to_string()))?;
            }
            write!(w, "{i}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{},{}", chain.loglik[i], u8::from(chain.accepted[i]))?;
        }
    }
    Ok(())
}

/// Reads a chain table written by [`Chain::write_csv`] or [`write_chains_csv`].
/// With a `method` column present, `method` selects the rows (required if
/// the file holds several methods). A `dataset` column must hold a single value.
pub fn parse_chain_csv<R: Read>(reader: R, method: Option<&str>, burn_in: usize) -> Result<Chain> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let iter_col = col("iter").ok_or_else(|| Error::Parse { line: 1, message: "missing 'iter' column".into() })?;
    let ll_col = col("loglik").ok_or_else(|| Error::Parse { line: 1, message: "missing 'loglik' column".into() })?;
    let acc_col = col("accepted");
    let method_col = col("method");
    let dataset_col = col("dataset");
    if ll_col <= iter_col + 1 {
        return Err(Error::Parse { line: 1, message: "no parameter columns between 'iter' and 'loglik'".into() });
    }
    let names: Vec<String> = header[iter_col + 1..ll_col].to_vec();

    let mut chain = Chain {
        names,
        draws: Vec::new(),
        loglik: Vec::new(),
        accepted: Vec::new(),
        burn_in,
        seed: 0,
        final_steps: Vec::new(),
        plugin_failures: 0,
    };
    let mut seen_method: Option<String> = None;
    let mut seen_dataset: Option<String> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse { line: e.position().map_or(0, |p| p.line() as usize), message: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let perr = |message: String| Error::Parse { line, message };
        if let Some(c) = method_col {
            let m = &rec[c];
            if method.is_some_and(|want| want != m) {
                continue;
            }
            match &seen_method {
                Some(prev) if prev != m => {
                    return Err(perr(format!("file holds methods '{prev}' and '{m}'; select one")));
                }
                _ => seen_method = Some(m.to_string()),
            }
        }
        if let Some(c) = dataset_col {
            match &seen_dataset {
                Some(prev) if prev != &rec[c] => return Err(perr("file holds several datasets".into())),
                _ => seen_dataset = Some(rec[c].to_string()),
            }
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| perr(format!("invalid number '{}'", &rec[i])));
        let row = (iter_col + 1..ll_col).map(num).collect::<Result<Vec<_>>>()?;
        chain.draws.push(row);
        chain.loglik.push(num(ll_col)?);
        chain.accepted.push(acc_col.is_some_and(|c| &rec[c] == "1"));
    }
    if chain.draws.is_empty() {
        return Err(invalid("chain file has no matching rows"));
    }
    if burn_in >= chain.draws.len() {
        return Err(invalid(format!("burn-in {burn_in} leaves no draws out of {}", chain.draws.len())));
    }
    Ok(chain)
}

pub fn read_chain_csv(path: impl AsRef<Path>, method: Option<&str>, burn_in: usize) -> Result<Chain> {
    parse_chain_csv(std::fs::File::open(path)?, method, burn_in)
}
