//! Parsers for numeric command-line values.

use nalgebra::DMatrix;
use qudit_indel::linalg::C64;
use serde_json::Value;

use crate::CliError;

/// `"0.25"` or `"1/4"`.
pub fn parse_real(s: &str) -> Result<f64, CliError> {
    let s = s.trim();
    let bad = || CliError::Usage(format!("cannot read {s:?} as a number"));
    match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| bad())?;
            let den: f64 = den.trim().parse().map_err(|_| bad())?;
            if den == 0.0 {
                return Err(bad());
            }
            Ok(num / den)
        }
        None => s.parse().map_err(|_| bad()),
    }
}

/// Comma-separated reals.
pub fn parse_real_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',').map(parse_real).collect()
}

/// `"0.6"`, `"-0.48i"`, `"0.3+0.4i"`, `"i"`, `"1/2-1/2i"`.
pub fn parse_complex(s: &str) -> Result<C64, CliError> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let Some(body) = t.strip_suffix('i') else {
        return Ok(C64::new(parse_real(&t)?, 0.0));
    };
    // The split point is the last sign that is not leading and not an exponent sign.
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        x => parse_real(x.strip_prefix('+').unwrap_or(x))?,
    };
    Ok(C64::new(parse_real(re)?, im))
}

pub fn parse_complex_list(s: &str) -> Result<Vec<C64>, CliError> {
    s.split(',').map(parse_complex).collect()
}

/// A square matrix written as a JSON array of rows. Entries are numbers,
/// strings accepted by [`parse_complex`], or `[re, im]` pairs.
pub fn parse_matrix(s: &str) -> Result<DMatrix<C64>, CliError> {
    let bad = |why: &str| CliError::Usage(format!("matrix literal: {why}"));
    let v: Value = serde_json::from_str(s).map_err(|e| bad(&e.to_string()))?;
    let rows = v.as_array().ok_or_else(|| bad("expected an array of rows"))?;
    let dim = rows.len();
    if dim == 0 {
        return Err(bad("empty matrix"));
    }
    let mut m = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_array().ok_or_else(|| bad("rows must be arrays"))?;
        if row.len() != dim {
            return Err(bad("matrix must be square"));
        }
        for (j, x) in row.iter().enumerate() {
            m[(i, j)] = match x {
                Value::Number(n) => C64::new(n.as_f64().ok_or_else(|| bad("number out of range"))?, 0.0),
                Value::String(s) => parse_complex(s)?,
                Value::Array(pair) if pair.len() == 2 => {
                    let re = pair[0].as_f64().ok_or_else(|| bad("pair entries must be numbers"))?;
                    let im = pair[1].as_f64().ok_or_else(|| bad("pair entries must be numbers"))?;
                    C64::new(re, im)
                }
                _ => return Err(bad("unsupported entry")),
            };
        }
    }
    Ok(m)
}
