//! Report serialization: pretty JSON or LF-terminated CSV with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use qhier_core::hamiltonization::fmt17;
use qhier_core::report::Check;
use qhier_core::{Error, Result};
use serde_json::Value;

pub fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Argument(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn json(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

/// `section,name,residual,tolerance,pass` rows.
pub fn checks_csv(sections: &[(&str, &[Check])]) -> String {
    let mut out = String::from("section,name,residual,tolerance,pass\n");
    for (section, checks) in sections {
        for c in *checks {
            let _ = writeln!(out, "{section},{},{},{},{}", c.name, fmt17(c.residual), fmt17(c.tolerance), c.pass);
        }
    }
    out
}

pub fn csv_row(values: &[f64]) -> String {
    let mut line = values.iter().map(|&v| fmt17(v)).collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

/// Space-separated values rounded to 10 decimals, with `-0` printed as `0`.
pub fn spectrum_line(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| {
            let r = (v * 1e10).round() / 1e10;
            let r = if r == 0.0 { 0.0 } else { r };
            format!("{r}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}
