//! Output artifacts of a scenario run: the per-cell record table
//! (runs.csv), aggregated statistics (summary.csv), and SVG line charts
//! with ±1 standard-deviation bands.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::scenario::EstimatorKind;
use crate::util::{fmt_f64, Kahan};

/// Fixed runs.csv header. Rows are RFC-4180 with CRLF line endings.
pub const RUNS_HEADER: &str = "scenario_hash,sweep_param,sweep_value,seed,estimator,lambda,\
                               kept_fraction,l1_error,l2_error,correct,missed,spurious,iters,status";

/// Fixed summary.csv header.
pub const SUMMARY_HEADER: &str = "sweep_param,sweep_value,estimator,runs_ok,runs_failed,\
                                  l1_mean,l1_std,l2_mean,l2_std,kept_mean,kept_std,lambda_mean";

/// One estimator fit on one simulated cell. `wall_time` stays out of the
/// CSV so that output bytes are identical across worker counts; aggregate
/// timings go to the manifest instead.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub scenario_hash: String,
    /// Sweep parameter name, or "none" for single-cell scenarios.
    pub sweep_param: String,
    pub sweep_value: Option<f64>,
    pub seed: u64,
    pub estimator: EstimatorKind,
    /// Selected penalty level; absent for the unpenalized estimators.
    pub lambda: Option<f64>,
    pub kept_fraction: Option<f64>,
    pub l1_error: Option<f64>,
    pub l2_error: Option<f64>,
    pub correct: Option<usize>,
    pub missed: Option<usize>,
    pub spurious: Option<usize>,
    pub iters: Option<usize>,
    /// "ok", or "error:<kind>" for recorded per-seed failures.
    pub status: String,
    pub wall_time: f64,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Short stable token identifying an error's kind in the status column.
pub fn status_token(err: &Error) -> String {
    let kind = match err {
        Error::Dimension(_) => "dimension",
        Error::Domain(_) => "domain",
        Error::Numerical(_) => "numerical",
        Error::Divergence(_) => "divergence",
        Error::InsufficientData(_) => "insufficient-data",
        Error::Config(_) => "config",
        Error::Lookup(_) => "lookup",
        Error::Integrity(_) => "integrity",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    };
    format!("error:{kind}")
}

fn opt_f64(v: &Option<f64>) -> String {
    v.map(|x| fmt_f64(x)).unwrap_or_default()
}

fn opt_usize(v: &Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_opt_f64(field: &str, what: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Integrity(format!("unparseable {what} field {field:?}")))
}

fn parse_opt_usize(field: &str, what: &str) -> Result<Option<usize>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<usize>()
        .map(Some)
        .map_err(|_| Error::Integrity(format!("unparseable {what} field {field:?}")))
}

/// Serializes records under the fixed header with CRLF endings. All
/// fields are comma- and quote-free by construction, so no quoting is
/// applied.
pub fn write_runs_csv(records: &[RunRecord]) -> String {
    let mut out = String::with_capacity(128 * (records.len() + 1));
    out.push_str(RUNS_HEADER);
    out.push_str("\r\n");
    for r in records {
        out.push_str(&r.scenario_hash);
        out.push(',');
        out.push_str(&r.sweep_param);
        out.push(',');
        out.push_str(&opt_f64(&r.sweep_value));
        out.push(',');
        out.push_str(&r.seed.to_string());
        out.push(',');
        out.push_str(r.estimator.as_str());
        out.push(',');
        out.push_str(&opt_f64(&r.lambda));
        out.push(',');
        out.push_str(&opt_f64(&r.kept_fraction));
        out.push(',');
        out.push_str(&opt_f64(&r.l1_error));
        out.push(',');
        out.push_str(&opt_f64(&r.l2_error));
        out.push(',');
        out.push_str(&opt_usize(&r.correct));
        out.push(',');
        out.push_str(&opt_usize(&r.missed));
        out.push(',');
        out.push_str(&opt_usize(&r.spurious));
        out.push(',');
        out.push_str(&opt_usize(&r.iters));
        out.push(',');
        out.push_str(&r.status);
        out.push_str("\r\n");
    }
    out
}

/// Parses a runs.csv file back into records. `wall_time` is not stored,
/// so it reads back as zero.
pub fn read_runs_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut lines = text.split("\r\n");
    let header = lines
        .next()
        .ok_or_else(|| Error::Integrity("runs table is empty".into()))?;
    if header != RUNS_HEADER {
        return Err(Error::Integrity(format!(
            "unexpected runs table header {header:?}"
        )));
    }
    let mut records = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 14 {
            return Err(Error::Integrity(format!(
                "expected 14 fields per row, got {} in {line:?}",
                fields.len()
            )));
        }
        records.push(RunRecord {
            scenario_hash: fields[0].to_string(),
            sweep_param: fields[1].to_string(),
            sweep_value: parse_opt_f64(fields[2], "sweep_value")?,
            seed: fields[3]
                .parse()
                .map_err(|_| Error::Integrity(format!("unparseable seed {:?}", fields[3])))?,
            estimator: fields[4].parse()?,
            lambda: parse_opt_f64(fields[5], "lambda")?,
            kept_fraction: parse_opt_f64(fields[6], "kept_fraction")?,
            l1_error: parse_opt_f64(fields[7], "l1_error")?,
            l2_error: parse_opt_f64(fields[8], "l2_error")?,
            correct: parse_opt_usize(fields[9], "correct")?,
            missed: parse_opt_usize(fields[10], "missed")?,
            spurious: parse_opt_usize(fields[11], "spurious")?,
            iters: parse_opt_usize(fields[12], "iters")?,
            status: fields[13].to_string(),
            wall_time: 0.0,
        });
    }
    Ok(records)
}

/// Mean and ±1 sample standard deviation per (sweep value, estimator)
/// cell, over successful rows only.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub sweep_param: String,
    pub sweep_value: Option<f64>,
    pub estimator: EstimatorKind,
    pub runs_ok: usize,
    pub runs_failed: usize,
    pub l1_mean: Option<f64>,
    pub l1_std: Option<f64>,
    pub l2_mean: Option<f64>,
    pub l2_std: Option<f64>,
    pub kept_mean: Option<f64>,
    pub kept_std: Option<f64>,
    pub lambda_mean: Option<f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let mut sum = Kahan::new();
    for &v in values {
        sum.add(v);
    }
    let mean = sum.value() / values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let mut sq = Kahan::new();
    for &v in values {
        sq.add((v - mean) * (v - mean));
    }
    (mean, (sq.value() / (values.len() - 1) as f64).sqrt())
}

/// Aggregates records in their original (sweep value, estimator) group
/// order: group identity follows first appearance, which is itself
/// deterministic because rows arrive in canonical order.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut order: Vec<(Option<u64>, EstimatorKind)> = Vec::new();
    let mut groups: BTreeMap<usize, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.sweep_value.map(f64::to_bits), r.estimator);
        let idx = match order.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                order.push(key);
                order.len() - 1
            }
        };
        groups.entry(idx).or_default().push(r);
    }
    let mut rows = Vec::with_capacity(order.len());
    for (idx, members) in groups {
        let _ = idx;
        let ok: Vec<&&RunRecord> = members.iter().filter(|r| r.is_ok()).collect();
        let failed = members.len() - ok.len();
        let collect = |f: &dyn Fn(&RunRecord) -> Option<f64>| -> Vec<f64> {
            ok.iter().filter_map(|r| f(r)).collect()
        };
        let stats = |values: Vec<f64>| -> (Option<f64>, Option<f64>) {
            if values.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&values);
                (Some(m), Some(s))
            }
        };
        let (l1_mean, l1_std) = stats(collect(&|r| r.l1_error));
        let (l2_mean, l2_std) = stats(collect(&|r| r.l2_error));
        let (kept_mean, kept_std) = stats(collect(&|r| r.kept_fraction));
        let (lambda_mean, _) = stats(collect(&|r| r.lambda));
        let first = members[0];
        rows.push(SummaryRow {
            sweep_param: first.sweep_param.clone(),
            sweep_value: first.sweep_value,
            estimator: first.estimator,
            runs_ok: ok.len(),
            runs_failed: failed,
            l1_mean,
            l1_std,
            l2_mean,
            l2_std,
            kept_mean,
            kept_std,
            lambda_mean,
        });
    }
    rows
}

pub fn write_summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::with_capacity(128 * (rows.len() + 1));
    out.push_str(SUMMARY_HEADER);
    out.push_str("\r\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\r\n",
            r.sweep_param,
            opt_f64(&r.sweep_value),
            r.estimator,
            r.runs_ok,
            r.runs_failed,
            opt_f64(&r.l1_mean),
            opt_f64(&r.l1_std),
            opt_f64(&r.l2_mean),
            opt_f64(&r.l2_std),
            opt_f64(&r.kept_mean),
            opt_f64(&r.kept_std),
            opt_f64(&r.lambda_mean),
        ));
    }
    out
}

/// One plotted curve: `(x, mean, std)` triples in x order.
#[derive(Clone, Debug)]
pub struct PlotSeries {
    pub name: String,
    pub color: String,
    pub points: Vec<(f64, f64, f64)>,
}

/// Fixed palette keyed by estimator.
pub fn estimator_color(kind: EstimatorKind) -> &'static str {
    match kind {
        EstimatorKind::Lasso => "#1f77b4",
        EstimatorKind::Slope => "#2ca02c",
        EstimatorKind::TruncatedMle => "#d62728",
        EstimatorKind::TrueMle => "#9467bd",
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 0.01 && v.abs() < 10_000.0 {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// Renders a line chart with shaded ±1-std bands as a standalone SVG
/// document. Presentation only: carries no numeric authority beyond what
/// summary.csv already records.
pub fn render_line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[PlotSeries],
) -> String {
    const W: f64 = 840.0;
    const H: f64 = 520.0;
    const ML: f64 = 80.0;
    const MR: f64 = 170.0;
    const MT: f64 = 50.0;
    const MB: f64 = 65.0;
    let pw = W - ML - MR;
    let ph = H - MT - MB;

    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for s in series {
        for &(x, m, sd) in &s.points {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(m - sd);
            ymax = ymax.max(m + sd);
        }
    }
    if !xmin.is_finite() {
        xmin = 0.0;
        xmax = 1.0;
        ymin = 0.0;
        ymax = 1.0;
    }
    let xpad = if xmax > xmin { 0.05 * (xmax - xmin) } else { 1.0 };
    let ypad = if ymax > ymin { 0.05 * (ymax - ymin) } else { 1.0 };
    xmin -= xpad;
    xmax += xpad;
    ymin -= ypad;
    ymax += ypad;

    let px = |x: f64| ML + (x - xmin) / (xmax - xmin) * pw;
    let py = |y: f64| MT + ph - (y - ymin) / (ymax - ymin) * ph;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"28\" text-anchor=\"middle\" font-size=\"18\">{}</text>\n",
        ML + pw / 2.0,
        xml_escape(title)
    ));

    // Grid and ticks.
    for i in 0..5 {
        let fx = xmin + (xmax - xmin) * i as f64 / 4.0;
        let fy = ymin + (ymax - ymin) * i as f64 / 4.0;
        svg.push_str(&format!(
            "<line x1=\"{0:.2}\" y1=\"{1:.2}\" x2=\"{0:.2}\" y2=\"{2:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            px(fx),
            MT,
            MT + ph
        ));
        svg.push_str(&format!(
            "<line x1=\"{1:.2}\" y1=\"{0:.2}\" x2=\"{2:.2}\" y2=\"{0:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            py(fy),
            ML,
            ML + pw
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
            px(fx),
            MT + ph + 20.0,
            fmt_tick(fx)
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"12\">{}</text>\n",
            ML - 8.0,
            py(fy) + 4.0,
            fmt_tick(fy)
        ));
    }

    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{ML:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\" \
         stroke-width=\"1.5\"/>\n",
        MT + ph,
        ML + pw,
        MT + ph
    ));
    svg.push_str(&format!(
        "<line x1=\"{ML:.2}\" y1=\"{MT:.2}\" x2=\"{ML:.2}\" y2=\"{:.2}\" stroke=\"black\" \
         stroke-width=\"1.5\"/>\n",
        MT + ph
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        ML + pw / 2.0,
        H - 18.0,
        xml_escape(x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"22\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"14\" \
         transform=\"rotate(-90 22 {:.2})\">{}</text>\n",
        MT + ph / 2.0,
        MT + ph / 2.0,
        xml_escape(y_label)
    ));

    // Bands first so lines draw on top.
    for s in series {
        if s.points.len() >= 2 && s.points.iter().any(|p| p.2 > 0.0) {
            let mut d = String::from("<polygon points=\"");
            for &(x, m, sd) in &s.points {
                d.push_str(&format!("{:.2},{:.2} ", px(x), py(m + sd)));
            }
            for &(x, m, sd) in s.points.iter().rev() {
                d.push_str(&format!("{:.2},{:.2} ", px(x), py(m - sd)));
            }
            d.push_str(&format!(
                "\" fill=\"{}\" fill-opacity=\"0.18\" stroke=\"none\"/>\n",
                s.color
            ));
            svg.push_str(&d);
        }
    }
    for s in series {
        if s.points.len() >= 2 {
            let mut d = String::from("<polyline points=\"");
            for &(x, m, _) in &s.points {
                d.push_str(&format!("{:.2},{:.2} ", px(x), py(m)));
            }
            d.push_str(&format!(
                "\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                s.color
            ));
            svg.push_str(&d);
        }
        for &(x, m, _) in &s.points {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\"/>\n",
                px(x),
                py(m),
                s.color
            ));
        }
    }

    // Legend.
    for (i, s) in series.iter().enumerate() {
        let ly = MT + 14.0 + 22.0 * i as f64;
        let lx = ML + pw + 16.0;
        svg.push_str(&format!(
            "<rect x=\"{lx:.2}\" y=\"{:.2}\" width=\"18\" height=\"4\" fill=\"{}\"/>\n",
            ly - 4.0,
            s.color
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{ly:.2}\" font-size=\"13\">{}</text>\n",
            lx + 24.0,
            xml_escape(&s.name)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
