use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::harness::{max_avg_return, max_of_mean_curve, max_per_seed_mean, median, Algo, RunData};
use crate::wrappers::PomdpMode;

/// Aggregates of one (row, column) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    /// Completed runs contributing to the numbers.
    pub seeds_complete: usize,
    /// Runs found for the cell that have not finished; they are excluded
    /// from the numbers.
    pub incomplete_runs: usize,
    /// Each completed seed's best evaluation mean, in directory order.
    pub per_seed_max: Vec<f64>,
    pub max_per_seed_mean: Option<f64>,
    pub max_of_mean_curve: Option<f64>,
    pub median_seed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub env: String,
    pub mode: PomdpMode,
    /// One entry per column; `None` where the cell has no runs at all.
    pub cells: Vec<Option<CellSummary>>,
    /// Column of the largest `max_per_seed_mean`.
    pub best_per_seed_mean: Option<usize>,
    /// Column of the largest `max_of_mean_curve`.
    pub best_mean_curve: Option<usize>,
}

impl TableRow {
    pub fn incomplete_runs(&self) -> usize {
        self.cells.iter().flatten().map(|c| c.incomplete_runs).sum()
    }

    fn row_label(&self) -> String {
        let base = format!("{} {}", self.env, self.mode.label());
        match self.incomplete_runs() {
            0 => base,
            k => format!("{base} [incomplete: {k} run(s)]"),
        }
    }
}

/// Rows are (env, mode) pairs, columns are algorithm labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
    /// Largest number of runs seen in any cell; cells with fewer completed
    /// seeds are annotated.
    pub seeds_expected: usize,
}

fn env_rank(env: &str) -> usize {
    crate::envs::ENV_NAMES
        .iter()
        .position(|e| *e == env)
        .unwrap_or(usize::MAX)
}

fn algo_rank(algo: Algo) -> usize {
    Algo::ALL.iter().position(|a| *a == algo).expect("listed")
}

/// Builds the table from loaded runs.
pub fn build_table(runs: &[RunData]) -> Result<Table> {
    if runs.is_empty() {
        return Err(Error::Contract("table needs at least one run directory".into()));
    }
    // Column order: algorithm family, then horizon, then label text.
    let mut col_keys: BTreeMap<(usize, usize, String), ()> = BTreeMap::new();
    let mut row_keys: BTreeMap<(usize, String, PomdpMode), ()> = BTreeMap::new();
    let mut groups: BTreeMap<(String, PomdpMode, String), Vec<&RunData>> = BTreeMap::new();
    for run in runs {
        let c = &run.config;
        let label = c.label();
        col_keys.insert((algo_rank(c.algo), c.n(), label.clone()), ());
        row_keys.insert((env_rank(&c.env), c.env.clone(), c.wrapper.mode), ());
        groups
            .entry((c.env.clone(), c.wrapper.mode, label))
            .or_default()
            .push(run);
    }
    let columns: Vec<String> = col_keys.into_keys().map(|(_, _, l)| l).collect();
    let seeds_expected = groups.values().map(Vec::len).max().unwrap_or(0);

    let mut rows = Vec::new();
    for (_, env, mode) in row_keys.into_keys() {
        let mut cells = Vec::new();
        for label in &columns {
            let cell = match groups.get(&(env.clone(), mode, label.clone())) {
                None => None,
                Some(group) => Some(summarize(group)?),
            };
            cells.push(cell);
        }
        let best_per_seed_mean = argmax(cells.iter().map(|c| c.as_ref().and_then(|c| c.max_per_seed_mean)));
        let best_mean_curve = argmax(cells.iter().map(|c| c.as_ref().and_then(|c| c.max_of_mean_curve)));
        rows.push(TableRow {
            env,
            mode,
            cells,
            best_per_seed_mean,
            best_mean_curve,
        });
    }
    Ok(Table {
        columns,
        rows,
        seeds_expected,
    })
}

fn summarize(group: &[&RunData]) -> Result<CellSummary> {
    let complete: Vec<&RunData> = group
        .iter()
        .copied()
        .filter(|r| r.complete && !r.records.is_empty())
        .collect();
    let incomplete_runs = group.len() - complete.len();
    let curves: Vec<_> = complete.iter().map(|r| r.records.clone()).collect();
    let per_seed_max = curves.iter().map(|c| max_avg_return(c)).collect::<Result<Vec<_>>>()?;
    let (a, b, m) = if curves.is_empty() {
        (None, None, None)
    } else {
        (
            Some(max_per_seed_mean(&curves)?),
            Some(max_of_mean_curve(&curves)?),
            Some(median(&per_seed_max)?),
        )
    };
    Ok(CellSummary {
        seeds_complete: complete.len(),
        incomplete_runs,
        per_seed_max,
        max_per_seed_mean: a,
        max_of_mean_curve: b,
        median_seed: m,
    })
}

/// Index of the largest present value; ties go to the first column.
fn argmax(values: impl Iterator<Item = Option<f64>>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if let Some(v) = v {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

impl Table {
    fn cell_text(&self, cell: &Option<CellSummary>, value: Option<f64>, best: bool) -> String {
        let Some(cell) = cell else {
            return "-".into();
        };
        let mut s = match value {
            Some(v) => format!("{v:.1}"),
            None => "incomplete".into(),
        };
        if best {
            s.push('*');
        }
        if cell.seeds_complete < self.seeds_expected && value.is_some() {
            let _ = write!(s, " (n={}/{} seeds)", cell.seeds_complete, self.seeds_expected);
        }
        s
    }

    fn text_block(
        &self,
        title: &str,
        pick: fn(&CellSummary) -> Option<f64>,
        best: fn(&TableRow) -> Option<usize>,
    ) -> String {
        let mut grid: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["env / mode".to_string()];
        header.extend(self.columns.iter().cloned());
        grid.push(header);
        for row in &self.rows {
            let mut line = vec![row.row_label()];
            for (j, cell) in row.cells.iter().enumerate() {
                let value = cell.as_ref().and_then(pick);
                line.push(self.cell_text(cell, value, best(row) == Some(j)));
            }
            grid.push(line);
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|j| grid.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = format!("{title}\n");
        for (i, r) in grid.iter().enumerate() {
            let cells: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    if j == 0 {
                        format!("{c:<w$}", w = widths[j])
                    } else {
                        format!("{c:>w$}", w = widths[j])
                    }
                })
                .collect();
            out.push_str(cells.join(" | ").trim_end());
            out.push('\n');
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                out.push_str(&rule.join("-+-"));
                out.push('\n');
            }
        }
        out
    }

    /// Human-readable table, one block per aggregation. `*` marks the best
    /// cell of each row.
    pub fn to_text(&self) -> String {
        let mut out = String::from(
            "Maximum over training of the mean evaluation return\n\
             (* = best in row; excluded incomplete runs are flagged on the row)\n\n",
        );
        out.push_str(&self.text_block(
            "max_per_seed_mean: best per seed, averaged over seeds",
            |c| c.max_per_seed_mean,
            |r| r.best_per_seed_mean,
        ));
        out.push('\n');
        out.push_str(&self.text_block(
            "max_of_mean_curve: best point of the seed-averaged curve",
            |c| c.max_of_mean_curve,
            |r| r.best_mean_curve,
        ));
        out
    }

    /// Long-format CSV twin: one line per present cell.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| format!("{v}")).unwrap_or_default();
        let mut out = String::from(
            "env,mode,algorithm,seeds_complete,seeds_expected,incomplete_runs,\
             max_per_seed_mean,max_of_mean_curve,median_seed,best_per_seed_mean,best_mean_curve\n",
        );
        for row in &self.rows {
            for (j, cell) in row.cells.iter().enumerate() {
                let Some(c) = cell else { continue };
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    row.env,
                    row.mode,
                    csv_field(&self.columns[j]),
                    c.seeds_complete,
                    self.seeds_expected,
                    c.incomplete_runs,
                    opt(c.max_per_seed_mean),
                    opt(c.max_of_mean_curve),
                    opt(c.median_seed),
                    row.best_per_seed_mean == Some(j),
                    row.best_mean_curve == Some(j),
                );
            }
        }
        out
    }
}

/// Quotes a field when it contains a separator or quote.
pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
