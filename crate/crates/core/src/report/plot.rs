use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::table::csv_field;
use crate::error::{Error, Result};
use crate::harness::{gaussian_smooth, Algo, RunData, CODE_VERSION};
use crate::wrappers::PomdpMode;

/// Smoothing width, in evaluation points, used for learning curves.
pub const DEFAULT_SIGMA: f64 = 20.0;

/// One algorithm's smoothed curve with its half-std band.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub seeds: usize,
    pub steps: Vec<usize>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub env: String,
    pub mode: PomdpMode,
    pub sigma: f64,
    pub series: Vec<Series>,
    /// Grid mismatches that forced resampling.
    pub warnings: Vec<String>,
}

/// Smoothed mean curves for every algorithm among `runs` on one env/mode.
/// Each seed is smoothed first; the band is mean ± std/2 with the
/// population std across seeds. When `env`/`mode` are `None` the runs must
/// all share one pair.
pub fn plot_data(runs: &[RunData], env: Option<&str>, mode: Option<PomdpMode>, sigma: f64) -> Result<PlotData> {
    if !(sigma > 0.0) {
        return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
    }
    let selected: Vec<&RunData> = runs
        .iter()
        .filter(|r| env.is_none_or(|e| r.config.env == e))
        .filter(|r| mode.is_none_or(|m| r.config.wrapper.mode == m))
        .filter(|r| !r.records.is_empty())
        .collect();
    let Some(first) = selected.first() else {
        return Err(Error::Contract("no runs with evaluation records to plot".into()));
    };
    let (env, mode) = (first.config.env.clone(), first.config.wrapper.mode);
    if let Some(other) = selected
        .iter()
        .find(|r| r.config.env != env || r.config.wrapper.mode != mode)
    {
        return Err(Error::Contract(format!(
            "runs mix {env}/{mode} with {}/{}; choose one env and mode",
            other.config.env, other.config.wrapper.mode
        )));
    }

    let mut warnings = Vec::new();
    for r in &selected {
        if !r.complete {
            warnings.push(format!("{} is incomplete; plotting its partial curve", r.dir.display()));
        }
    }
    let grid = common_grid(&selected, &mut warnings)?;
    for w in &warnings {
        log::warn!("{w}");
    }

    let mut groups: BTreeMap<(usize, usize, String), Vec<&RunData>> = BTreeMap::new();
    for r in &selected {
        let rank = Algo::ALL.iter().position(|a| *a == r.config.algo).expect("listed");
        groups
            .entry((rank, r.config.n(), r.config.label()))
            .or_default()
            .push(r);
    }
    let series = groups
        .into_iter()
        .map(|((_, _, label), group)| {
            let smoothed: Vec<Vec<f64>> = group
                .iter()
                .map(|r| gaussian_smooth(&resample(r, &grid), sigma))
                .collect();
            band(label, &grid, &smoothed)
        })
        .collect();
    Ok(PlotData {
        env,
        mode,
        sigma,
        series,
        warnings,
    })
}

fn steps_of(r: &RunData) -> Vec<usize> {
    r.records.iter().map(|x| x.step).collect()
}

/// The shared evaluation grid, or the coarsest run grid clipped to the
/// range every run covers when grids differ.
fn common_grid(runs: &[&RunData], warnings: &mut Vec<String>) -> Result<Vec<usize>> {
    let first = steps_of(runs[0]);
    if runs.iter().all(|r| steps_of(r) == first) {
        return Ok(first);
    }
    let lo = runs.iter().map(|r| r.records[0].step).max().expect("non-empty");
    let hi = runs
        .iter()
        .map(|r| r.records.last().expect("non-empty").step)
        .min()
        .expect("non-empty");
    let coarsest = runs
        .iter()
        .map(|r| {
            steps_of(r)
                .into_iter()
                .filter(|s| (lo..=hi).contains(s))
                .collect::<Vec<_>>()
        })
        .filter(|g| !g.is_empty())
        .min_by_key(Vec::len)
        .unwrap_or_default();
    if coarsest.is_empty() {
        return Err(Error::Contract("runs share no overlapping evaluation range".into()));
    }
    warnings.push(format!(
        "evaluation grids differ; resampled to {} points over steps {}..={}",
        coarsest.len(),
        coarsest[0],
        coarsest[coarsest.len() - 1]
    ));
    Ok(coarsest)
}

/// Linear interpolation of a run's mean returns at `grid`.
fn resample(r: &RunData, grid: &[usize]) -> Vec<f64> {
    let recs = &r.records;
    grid.iter()
        .map(|&s| {
            let j = recs.partition_point(|x| x.step < s);
            if j < recs.len() && recs[j].step == s {
                return recs[j].mean;
            }
            if j == 0 {
                return recs[0].mean;
            }
            if j == recs.len() {
                return recs[j - 1].mean;
            }
            let (a, b) = (&recs[j - 1], &recs[j]);
            let t = (s - a.step) as f64 / (b.step - a.step) as f64;
            a.mean + t * (b.mean - a.mean)
        })
        .collect()
}

fn band(label: String, grid: &[usize], curves: &[Vec<f64>]) -> Series {
    let k = curves.len() as f64;
    let mut mean = Vec::with_capacity(grid.len());
    let mut lower = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let m = curves.iter().map(|c| c[i]).sum::<f64>() / k;
        let var = curves.iter().map(|c| (c[i] - m).powi(2)).sum::<f64>() / k;
        let half = 0.5 * var.sqrt();
        mean.push(m);
        lower.push(m - half);
        upper.push(m + half);
    }
    Series {
        label,
        seeds: curves.len(),
        steps: grid.to_vec(),
        mean,
        lower,
        upper,
    }
}

impl PlotData {
    /// CSV twin of the plot: one line per series point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("algorithm,seeds,step,mean,lower,upper\n");
        for s in &self.series {
            for i in 0..s.steps.len() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    csv_field(&s.label),
                    s.seeds,
                    s.steps[i],
                    s.mean[i],
                    s.lower[i],
                    s.upper[i]
                );
            }
        }
        out
    }
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

/// Round tick spacing covering `span` in about `target` intervals.
fn tick_step(span: f64, target: f64) -> f64 {
    let raw = span / target;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let m = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn ticks(lo: f64, hi: f64) -> (f64, f64, Vec<f64>) {
    let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
    let step = tick_step(span, 5.0);
    let start = (lo / step).floor() * step;
    let end = (hi / step).ceil() * step;
    let end = if end > start { end } else { start + step };
    let n = ((end - start) / step).round() as usize;
    let t = (0..=n).map(|i| start + i as f64 * step).collect();
    (start, end, t)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1000.0 && (v / 1000.0).fract() == 0.0 {
        format!("{}k", v / 1000.0)
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

/// SVG line chart: env steps against return, one colored curve and shaded
/// band per series.
pub fn render_svg(data: &PlotData) -> String {
    let xmax = data
        .series
        .iter()
        .flat_map(|s| s.steps.last().copied())
        .max()
        .unwrap_or(1) as f64;
    let ymin = data
        .series
        .iter()
        .flat_map(|s| s.lower.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let ymax = data
        .series
        .iter()
        .flat_map(|s| s.upper.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    let (ylo, yhi, yticks) = if ymin.is_finite() {
        ticks(ymin, ymax)
    } else {
        ticks(0.0, 1.0)
    };
    let (_, xhi, xticks) = ticks(0.0, xmax);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + x / xhi * pw;
    let py = |y: f64| TOP + (yhi - y) / (yhi - ylo) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<!-- generator: {CODE_VERSION} -->");
    let _ = writeln!(s, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{} {} (smoothed, sigma={})</text>",
        LEFT + pw / 2.0,
        escape(&data.env),
        data.mode.label(),
        data.sigma
    );
    for &t in &yticks {
        let y = py(t);
        let _ = writeln!(
            s,
            "<line x1=\"{LEFT:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#e0e0e0\"/>",
            LEFT + pw
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            LEFT - 6.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    for &t in &xticks {
        let x = px(t);
        let _ = writeln!(
            s,
            "<line x1=\"{x:.2}\" y1=\"{TOP:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#e0e0e0\"/>",
            TOP + ph
        );
        let _ = writeln!(
            s,
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            TOP + ph + 18.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        s,
        "<rect x=\"{LEFT:.2}\" y=\"{TOP:.2}\" width=\"{pw:.2}\" height=\"{ph:.2}\" fill=\"none\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">environment steps</text>",
        LEFT + pw / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        s,
        "<text transform=\"translate(20 {:.2}) rotate(-90)\" text-anchor=\"middle\">average return</text>",
        TOP + ph / 2.0
    );

    for (i, series) in data.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let upper: Vec<String> = series
            .steps
            .iter()
            .zip(&series.upper)
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x as f64), py(y)))
            .collect();
        let lower: Vec<String> = series
            .steps
            .iter()
            .zip(&series.lower)
            .rev()
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x as f64), py(y)))
            .collect();
        let _ = writeln!(
            s,
            "<polygon points=\"{} {}\" fill=\"{color}\" fill-opacity=\"0.2\" stroke=\"none\"/>",
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = series
            .steps
            .iter()
            .zip(&series.mean)
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x as f64), py(y)))
            .collect();
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>",
            line.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = LEFT + pw + 16.0;
        let _ = writeln!(
            s,
            "<line x1=\"{lx:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"3\"/>",
            lx + 22.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\">{} ({} seed{})</text>",
            lx + 28.0,
            ly + 4.0,
            escape(&series.label),
            series.seeds,
            if series.seeds == 1 { "" } else { "s" }
        );
    }
    s.push_str("</svg>\n");
    s
}
