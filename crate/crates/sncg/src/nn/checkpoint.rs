//! Flat text checkpoint format for parameter save/resume.
//!
//! Layout, one network per block:
//!
//! ```text
//! mlp <name> <input_dim> <hidden_dim> <output_dim> <dropout>
//! <w1 row-major, one row per line, space separated>
//! <b1 on one line>
//! <w2 row-major, one row per line>
//! <b2 on one line>
//! ```
//!
//! Values are written with shortest-roundtrip formatting, so save/load is
//! bit-exact.

use ndarray::{Array1, Array2};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

use super::mlp::Mlp;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },
}

pub fn save_bundle(path: &Path, nets: &[(String, &Mlp)]) -> Result<(), CheckpointError> {
    let mut out = String::new();
    for (name, net) in nets {
        writeln!(
            out,
            "mlp {name} {} {} {} {}",
            net.input_dim(),
            net.hidden_dim(),
            net.output_dim(),
            net.dropout
        )
        .unwrap();
        let write_rows = |out: &mut String, a: &Array2<f64>| {
            for row in a.rows() {
                let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                writeln!(out, "{}", line.join(" ")).unwrap();
            }
        };
        let write_vec = |out: &mut String, a: &Array1<f64>| {
            let line: Vec<String> = a.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        };
        write_rows(&mut out, &net.w1);
        write_vec(&mut out, &net.b1);
        write_rows(&mut out, &net.w2);
        write_vec(&mut out, &net.b2);
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_bundle(path: &Path) -> Result<Vec<(String, Mlp)>, CheckpointError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().peekable();
    let mut nets = Vec::new();
    while let Some((lineno, header)) = lines.next() {
        if header.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 6 || parts[0] != "mlp" {
            return Err(CheckpointError::Parse {
                line: lineno + 1,
                detail: format!("expected `mlp <name> <in> <hidden> <out> <dropout>`, got `{header}`"),
            });
        }
        let name = parts[1].to_string();
        let parse_usize = |s: &str| {
            s.parse::<usize>().map_err(|e| CheckpointError::Parse {
                line: lineno + 1,
                detail: e.to_string(),
            })
        };
        let input = parse_usize(parts[2])?;
        let hidden = parse_usize(parts[3])?;
        let output = parse_usize(parts[4])?;
        let dropout: f64 = parts[5].parse().map_err(|e: std::num::ParseFloatError| {
            CheckpointError::Parse {
                line: lineno + 1,
                detail: e.to_string(),
            }
        })?;

        let mut next_row = |expect: usize| -> Result<Vec<f64>, CheckpointError> {
            let (lineno, line) = lines.next().ok_or(CheckpointError::Parse {
                line: 0,
                detail: "unexpected end of file".into(),
            })?;
            let row: Result<Vec<f64>, _> = line.split_whitespace().map(|t| t.parse()).collect();
            let row = row.map_err(|e: std::num::ParseFloatError| CheckpointError::Parse {
                line: lineno + 1,
                detail: e.to_string(),
            })?;
            if row.len() != expect {
                return Err(CheckpointError::Parse {
                    line: lineno + 1,
                    detail: format!("expected {expect} values, got {}", row.len()),
                });
            }
            Ok(row)
        };

        let mut w1 = Array2::zeros((hidden, input));
        for i in 0..hidden {
            let row = next_row(input)?;
            for (j, v) in row.into_iter().enumerate() {
                w1[[i, j]] = v;
            }
        }
        let b1 = Array1::from_vec(next_row(hidden)?);
        let mut w2 = Array2::zeros((output, hidden));
        for i in 0..output {
            let row = next_row(hidden)?;
            for (j, v) in row.into_iter().enumerate() {
                w2[[i, j]] = v;
            }
        }
        let b2 = Array1::from_vec(next_row(output)?);
        nets.push((name, Mlp { w1, b1, w2, b2, dropout }));
    }
    Ok(nets)
}
