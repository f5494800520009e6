use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A named, ordered parameter vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamVec {
    names: Vec<String>,
    values: Vec<f64>,
}

impl ParamVec {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>, values: Vec<f64>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() != values.len() {
            return Err(invalid(format!(
                "{} names for {} parameter values",
                names.len(),
                values.len()
            )));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(invalid(format!("duplicate parameter name '{n}'")));
            }
        }
        Ok(Self { names, values })
    }

    pub fn from_pairs(pairs: &[(&str, f64)]) -> Self {
        Self::new(pairs.iter().map(|p| p.0), pairs.iter().map(|p| p.1).collect())
            .expect("parameter names must be unique")
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.values[i])
    }

    /// Looks up `name`, failing with an argument error when it is absent.
    pub fn require(&self, name: &str) -> Result<f64> {
        self.get(name)
            .ok_or_else(|| invalid(format!("missing parameter '{name}'")))
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let i = self
            .index_of(name)
            .ok_or_else(|| invalid(format!("missing parameter '{name}'")))?;
        self.values[i] = value;
        Ok(())
    }

    /// Same names, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.names.len());
        Self { names: self.names.clone(), values }
    }

    /// Parses `name=value,name=value` lists as used on the command line.
    pub fn parse_assignments(text: &str) -> Result<Self> {
        let mut names = Vec::new();
        let mut values = Vec::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| invalid(format!("expected name=value, got '{item}'")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| invalid(format!("bad number in '{item}'")))?;
            names.push(k.trim().to_string());
            values.push(v);
        }
        Self::new(names, values)
    }

    /// Overwrites the entries of `self` named in `other`.
    pub fn merge(&mut self, other: &ParamVec) -> Result<()> {
        for (n, v) in other.names.iter().zip(&other.values) {
            self.set(n, *v)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_and_parse() {
        let mut p = ParamVec::parse_assignments("r=4.5, e=0.8").unwrap();
        assert_eq!(p.get("e"), Some(0.8));
        assert!(p.require("g").is_err());
        p.merge(&ParamVec::from_pairs(&[("r", 5.0)])).unwrap();
        assert_eq!(p.values(), &[5.0, 0.8]);
        assert!(ParamVec::parse_assignments("r=1,r=2").is_err());
        assert!(ParamVec::parse_assignments("r").is_err());
    }
}
