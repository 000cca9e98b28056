//! Deterministic result emission.
//!
//! JSON is written compactly with a fixed field order (struct order) and all
//! floats in exponential form with 12 significant digits, so re-reading and
//! re-serializing a document is byte-identical. CSV floats carry 10
//! significant digits and every row is newline-terminated.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::dde::Trajectory;
use crate::Result;

/// 12-significant-digit float formatting for JSON.
struct SigFigFormatter;

impl serde_json::ser::Formatter for SigFigFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.11e}")
    }
}

/// Serializes with stable key order and fixed float formatting.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigFigFormatter);
    value.serialize(&mut ser).expect("in-memory serialization cannot fail");
    String::from_utf8(out).expect("serializer emits UTF-8")
}

/// Writes the JSON document (newline-terminated) to the path, or to stdout
/// when no path is given.
pub fn emit_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let doc = to_json(value);
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            writeln!(w, "{doc}")?;
            w.flush()?;
        }
        None => println!("{doc}"),
    }
    Ok(())
}

/// Trajectory CSV: header `t,S,N`, one row per `stride`-th mesh node, floats
/// with 10 significant digits.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory, stride: usize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,S,N")?;
    let mut i = 0;
    while i < traj.len() {
        let (s, n) = traj.state(i);
        writeln!(w, "{:.9e},{:.9e},{:.9e}", traj.time(i), s, n)?;
        i += stride;
    }
    w.flush()?;
    Ok(())
}

/// Branch-profile CSV: header `tau,z` and one row per grid node where the
/// branch function is defined.
pub fn write_branch_csv(path: &Path, rows: &[(f64, f64)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "tau,z")?;
    for &(tau, z) in rows {
        writeln!(w, "{tau:.9e},{z:.9e}")?;
    }
    w.flush()?;
    Ok(())
}
