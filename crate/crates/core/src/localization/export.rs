//! Tab-separated export of path records.

use std::fmt::Write as _;
use std::io::{self, Write};

use super::path::PathEnsemble;

pub const SCHEMA_VERSION: u32 = 1;
pub const COLUMNS: [&str; 8] = ["replica", "t", "a_sq", "tr_a2", "op_norm", "phi", "h_sq", "tr_a3"];

/// One row per (replica, recorded time); truncated replicas keep the rows
/// they reached.
pub fn write_series_tsv<W: Write>(ens: &PathEnsemble, out: &mut W) -> io::Result<()> {
    writeln!(out, "# schema_version={SCHEMA_VERSION}")?;
    writeln!(out, "{}", COLUMNS.join("\t"))?;
    let mut line = String::new();
    for (replica, p) in ens.paths.iter().enumerate() {
        for r in &p.records {
            line.clear();
            let _ = write!(
                line,
                "{replica}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}",
                r.t, r.a_sq, r.tr_a2, r.op_norm, r.softmax, r.h_sq, r.tr_a3
            );
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

pub fn series_tsv(ens: &PathEnsemble) -> String {
    let mut buf = Vec::new();
    write_series_tsv(ens, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}
