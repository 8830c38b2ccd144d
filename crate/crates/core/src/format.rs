//! Number formatting shared by the CSV writers.

/// Nine significant digits in scientific notation.
pub fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Parses one comma separated row of exactly `n` floats.
pub fn parse_row(line: &str, n: usize) -> Result<Vec<f64>, String> {
    let values = line
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| format!("not a number: {s:?}"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != n {
        return Err(format!("expected {n} columns, found {}", values.len()));
    }
    Ok(values)
}
