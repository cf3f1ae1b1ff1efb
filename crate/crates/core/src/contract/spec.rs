use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A validated einsum expression with concrete operand shapes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EinsumSpec {
    inputs: Vec<Vec<u8>>,
    output: Vec<u8>,
    shapes: Vec<Vec<usize>>,
    dims: BTreeMap<u8, usize>,
}

fn labels(term: &str, what: &str) -> Result<Vec<u8>> {
    let mut seen = [false; 26];
    let mut out = Vec::with_capacity(term.len());
    for c in term.bytes() {
        if !c.is_ascii_lowercase() {
            return Err(Error::Einsum(format!("invalid label `{}` in {what} `{term}`", c as char)));
        }
        let k = (c - b'a') as usize;
        if seen[k] {
            return Err(Error::Einsum(format!("label `{}` repeated in {what} `{term}`", c as char)));
        }
        seen[k] = true;
        out.push(c);
    }
    Ok(out)
}

/// Parse and validate `equation` against `shapes`.
pub fn parse(equation: &str, shapes: &[Vec<usize>]) -> Result<EinsumSpec> {
    let eq: String = equation.chars().filter(|c| !c.is_whitespace()).collect();
    let (lhs, rhs) = eq
        .split_once("->")
        .ok_or_else(|| Error::Einsum(format!("`{equation}` has no `->`")))?;
    if rhs.contains("->") {
        return Err(Error::Einsum(format!("`{equation}` has more than one `->`")));
    }
    let inputs = lhs
        .split(',')
        .map(|t| labels(t, "operand"))
        .collect::<Result<Vec<_>>>()?;
    if inputs.len() != shapes.len() {
        return Err(Error::Einsum(format!(
            "{} operand subscripts but {} shapes",
            inputs.len(),
            shapes.len()
        )));
    }
    let output = labels(rhs, "output")?;
    let mut dims = BTreeMap::new();
    for (k, (term, shape)) in inputs.iter().zip(shapes).enumerate() {
        if term.len() != shape.len() {
            return Err(Error::Einsum(format!(
                "operand {k} has {} subscripts but rank {}",
                term.len(),
                shape.len()
            )));
        }
        for (&l, &n) in term.iter().zip(shape) {
            if n == 0 {
                return Err(Error::Einsum(format!("operand {k} has a zero-length axis `{}`", l as char)));
            }
            match dims.insert(l, n) {
                Some(prev) if prev != n => {
                    return Err(Error::Einsum(format!(
                        "label `{}` has dimension {prev} and {n}",
                        l as char
                    )))
                }
                _ => {}
            }
        }
    }
    if let Some(&l) = output.iter().find(|l| !dims.contains_key(l)) {
        return Err(Error::Einsum(format!("output label `{}` is unbound", l as char)));
    }
    Ok(EinsumSpec { inputs, output, shapes: shapes.to_vec(), dims })
}

impl EinsumSpec {
    pub fn inputs(&self) -> &[Vec<u8>] {
        &self.inputs
    }

    pub fn output(&self) -> &[u8] {
        &self.output
    }

    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn num_operands(&self) -> usize {
        self.inputs.len()
    }

    pub fn dim(&self, label: u8) -> usize {
        self.dims[&label]
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.output.iter().map(|&l| self.dim(l)).collect()
    }

    /// Normalized equation text.
    pub fn equation(&self) -> String {
        self.to_string()
    }

    /// Saturating product of the dimensions of `labels`.
    pub fn size_of(&self, labels: &[u8]) -> u64 {
        labels.iter().fold(1u64, |acc, &l| acc.saturating_mul(self.dim(l) as u64))
    }
}

pub(crate) fn term_str(t: &[u8]) -> String {
    String::from_utf8_lossy(t).into_owned()
}

impl fmt::Display for EinsumSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lhs: Vec<String> = self.inputs.iter().map(|t| term_str(t)).collect();
        write!(f, "{}->{}", lhs.join(","), term_str(&self.output))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let s = parse("bixy,ioxy->boxy", &[vec![2, 4, 8, 8], vec![4, 4, 8, 8]]).unwrap();
        assert_eq!(s.output_shape(), vec![2, 4, 8, 8]);
        assert_eq!(s.equation(), "bixy,ioxy->boxy");
        let s = parse("ab,ba->", &[vec![2, 3], vec![3, 2]]).unwrap();
        assert!(s.output().is_empty());
        let e = parse("ab,bc->ad", &[vec![2, 3], vec![3, 4]]).unwrap_err();
        assert!(e.to_string().contains("`d`"));
    }

    #[test]
    fn rejects_malformed() {
        let two = [vec![2, 2], vec![2, 2]];
        for eq in ["ab,bc", "ab,bc->ac->a", "aB,bc->ac", "aa,bc->c", "ab,bc->aa", "a1,bc->c", "ab,,bc->c"] {
            assert!(parse(eq, &two).is_err(), "{eq}");
        }
        assert!(parse("ab,bc->ac", &[vec![2, 3], vec![4, 2]]).is_err());
        assert!(parse("ab,bc->ac", &[vec![2, 3]]).is_err());
        assert!(parse("ab,bc->ac", &[vec![2, 3, 1], vec![3, 2]]).is_err());
        assert!(parse("ab,bc->ac", &[vec![2, 0], vec![0, 2]]).is_err());
        // singleton axes are not broadcast
        assert!(parse("ab,bc->ac", &[vec![2, 1], vec![3, 2]]).is_err());
    }
}
