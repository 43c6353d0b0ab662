//! Tables and learning-curve plots built from run directories.
//!
//! Every emitter here is a pure function of the loaded runs: the same
//! directories always give byte-identical CSV, text and SVG output.

mod plot;
mod table;

pub use plot::{plot_data, render_svg, PlotData, Series, DEFAULT_SIGMA};
pub use table::{build_table, CellSummary, Table, TableRow};

use std::path::Path;

use crate::error::Result;
use crate::harness::{load_run, write_atomic, RunData};

/// Loads every run found under each path. A path may be a run directory
/// or any ancestor of run directories.
pub fn load_runs<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<RunData>> {
    let mut dirs = Vec::new();
    for p in paths {
        dirs.extend(crate::harness::find_run_dirs(p.as_ref())?);
    }
    dirs.sort();
    dirs.dedup();
    dirs.iter().map(|d| load_run(d)).collect()
}

/// Writes `table.txt` and `table.csv` into `out_dir`.
pub fn emit_table(table: &Table, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    write_atomic(&out_dir.join("table.txt"), &table.to_text())?;
    write_atomic(&out_dir.join("table.csv"), &table.to_csv())
}

/// Writes `<stem>.svg` and `<stem>.csv` into `out_dir`.
pub fn emit_plot(data: &PlotData, out_dir: &Path, stem: &str) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    write_atomic(&out_dir.join(format!("{stem}.svg")), &render_svg(data))?;
    write_atomic(&out_dir.join(format!("{stem}.csv")), &data.to_csv())
}
