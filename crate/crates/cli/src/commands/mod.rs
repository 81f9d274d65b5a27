//! Command implementations and the small shared plumbing between them:
//! output-directory handling, aligned stdout tables, and the helpers every
//! artifact writer leans on.

pub mod blowup;
pub mod counterterms;
pub mod graph;
pub mod moments;
pub mod pairings;
pub mod selftest;
pub mod simulate;

use std::path::PathBuf;

use renormlab_core::error::Result;
use renormlab_core::report::fmt_float;

use crate::config::ExperimentConfig;

/// Interpolation nodes for per-replica counterterm-field tabulation.
pub(crate) const ETA_NODES: usize = 17;

/// Create (if needed) and return the artifact directory.
pub(crate) fn ensure_outdir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Print an aligned, left-justified table.
pub(crate) fn print_table(headers: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = (usize, String)>| {
        let joined: Vec<String> = cells
            .map(|(w, c)| format!("{c:<width$}", width = w))
            .collect();
        println!("{}", joined.join("  ").trim_end());
    };
    line(&mut widths.iter().copied().zip(headers.iter().map(|h| h.to_string())));
    line(&mut widths.iter().map(|&w| (w, "-".repeat(w))));
    for row in rows {
        line(&mut widths.iter().copied().zip(row.iter().cloned()));
    }
}

/// Shorthand: format a float column cell.
pub(crate) fn cell(x: f64) -> String {
    fmt_float(x)
}

/// Format with fixed precision for human tables (artifacts keep full
/// precision; stdout favors alignment).
pub(crate) fn cell_prec(x: f64, digits: usize) -> String {
    format!("{x:.digits$}")
}
