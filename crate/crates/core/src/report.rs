//! CSV, JSON and SVG renderings of scan results.
//!
//! Plots are drawn from the same records the CSV holds and are never the
//! only record of a run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::experiments::{MetricRecord, PointOutcome, PulseAxis, PumpAxis, Scenario, THRESHOLD};

/// Column order of the metrics CSV.
pub const CSV_HEADER: [&str; 9] = ["N", "Np_frac", "theta", "lost_abs", "lost_frac", "ss_ee_p", "ss_ee_np", "Tsa", "solver"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "Np_frac")]
    pub np_frac: f64,
    pub theta: f64,
    pub lost_abs: f64,
    pub lost_frac: f64,
    pub ss_ee_p: f64,
    pub ss_ee_np: f64,
    #[serde(rename = "Tsa")]
    pub tsa: f64,
    pub solver: String,
}

impl From<&MetricRecord> for CsvRow {
    fn from(r: &MetricRecord) -> Self {
        Self {
            n: r.n,
            np_frac: r.np_frac,
            theta: r.theta,
            lost_abs: r.lost_abs,
            lost_frac: r.lost_frac,
            ss_ee_p: r.ss_ee_p,
            ss_ee_np: r.ss_ee_np,
            tsa: r.tsa,
            solver: r.solver.to_string(),
        }
    }
}

/// One row per record; missing metrics are written as `NaN`.
pub fn write_records_csv<W: Write>(records: &[MetricRecord], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(CsvRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv<R: std::io::Read>(reader: R) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(reader);
    Ok(r.deserialize().collect::<std::result::Result<Vec<CsvRow>, _>>()?)
}

/// Pretty JSON array of full records; non-finite numbers become `null`.
pub fn write_records_json<W: Write>(records: &[MetricRecord], writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, records)?;
    Ok(())
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

#[derive(Clone, Debug, PartialEq)]
pub struct LineSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<LineSeries>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `values[iy][ix]`.
    pub values: Vec<Vec<f64>>,
    /// Dashed curve drawn on top, in data coordinates.
    pub overlay: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    log_x: bool,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let (a, b, v) = if self.log_x { (self.x.0.log10(), self.x.1.log10(), x.log10()) } else { (self.x.0, self.x.1, x) };
        LEFT + (v - a) / (b - a).max(f64::MIN_POSITIVE) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0).max(f64::MIN_POSITIVE) * (H - TOP - BOTTOM)
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let p = 0.05 * (hi - lo);
        (lo - p, hi + p)
    } else {
        (lo - 0.5 - 0.1 * lo.abs(), hi + 0.5 + 0.1 * hi.abs())
    }
}

fn header(svg: &mut String, title: &str) {
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>
"#,
        (LEFT + W - RIGHT) / 2.0,
        escape(title)
    );
}

fn axes(svg: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(svg, r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
    let xticks: Vec<f64> = if f.log_x {
        let (a, b) = (f.x.0.log10().ceil() as i32, f.x.1.log10().floor() as i32);
        (a..=b).map(|e| 10f64.powi(e)).collect()
    } else {
        (0..=4).map(|i| f.x.0 + (f.x.1 - f.x.0) * i as f64 / 4.0).collect()
    };
    for t in xticks {
        let x = f.px(t);
        let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{y1}" x2="{x:.2}" y2="{}" stroke="black"/>"#, y1 + 5.0);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, y1 + 18.0, fmt_tick(t));
    }
    for i in 0..=4 {
        let t = f.y.0 + (f.y.1 - f.y.0) * i as f64 / 4.0;
        let y = f.py(t);
        let _ = writeln!(svg, r#"<line x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 8.0, y + 4.0, fmt_tick(t));
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 14.0, escape(x_label));
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

/// Lines with markers; non-finite points are skipped.
pub fn line_plot_svg(plot: &LinePlot) -> String {
    let finite = |&(x, y): &(f64, f64)| x.is_finite() && y.is_finite() && (!plot.log_x || x > 0.0);
    let all: Vec<(f64, f64)> = plot.series.iter().flat_map(|s| s.points.iter().copied().filter(finite)).collect();
    let (mut xl, mut xh, mut yl, mut yh) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &all {
        xl = xl.min(x);
        xh = xh.max(x);
        yl = yl.min(y);
        yh = yh.max(y);
    }
    if all.is_empty() {
        (xl, xh, yl, yh) = (1.0, 10.0, 0.0, 1.0);
    }
    let x = if plot.log_x {
        if xh > xl { (xl / 1.2, xh * 1.2) } else { (xl / 2.0, xh * 2.0) }
    } else {
        padded(xl, xh)
    };
    let f = Frame { x, y: padded(yl, yh), log_x: plot.log_x };
    let mut svg = String::new();
    header(&mut svg, &plot.title);
    axes(&mut svg, &f, &plot.x_label, &plot.y_label);
    for (i, s) in plot.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> =
            s.points.iter().filter(|p| finite(p)).map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y))).collect();
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#, pts.join(" "));
        if !s.dashed && pts.len() <= 60 {
            for p in &pts {
                let (cx, cy) = p.split_once(',').unwrap();
                let _ = writeln!(svg, r#"<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>"#);
            }
        }
        let ly = TOP + 14.0 + 16.0 * i as f64;
        let lx = W - RIGHT + 10.0;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>"#, lx + 18.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, lx + 22.0, ly + 4.0, escape(&s.label));
    }
    svg.push_str("</svg>\n");
    svg
}

fn color_of(v: f64, lo: f64, hi: f64) -> String {
    if !v.is_finite() {
        return "#cccccc".into();
    }
    // Dark blue through teal to yellow.
    let u = ((v - lo) / (hi - lo).max(f64::MIN_POSITIVE)).clamp(0.0, 1.0);
    let stops = [(68.0, 1.0, 84.0), (59.0, 82.0, 139.0), (33.0, 145.0, 140.0), (94.0, 201.0, 98.0), (253.0, 231.0, 37.0)];
    let s = u * (stops.len() - 1) as f64;
    let i = (s.floor() as usize).min(stops.len() - 2);
    let w = s - i as f64;
    let mix = |a: f64, b: f64| (a + (b - a) * w).round() as u8;
    let (a, b) = (stops[i], stops[i + 1]);
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Cells centred on the grid values, with a colour bar and overlay curve.
pub fn heatmap_svg(map: &Heatmap) -> String {
    let edges = |v: &[f64]| -> Vec<f64> {
        let n = v.len();
        if n == 1 {
            return vec![v[0] - 0.5, v[0] + 0.5];
        }
        let mut e = vec![v[0] - 0.5 * (v[1] - v[0])];
        e.extend(v.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        e.push(v[n - 1] + 0.5 * (v[n - 1] - v[n - 2]));
        e
    };
    let (ex, ey) = (edges(&map.xs), edges(&map.ys));
    let f = Frame { x: (ex[0], *ex.last().unwrap()), y: (ey[0], *ey.last().unwrap()), log_x: false };
    let vals = map.values.iter().flatten().copied().filter(|v| v.is_finite());
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi.max(lo + 1e-12)) } else { (0.0, 1.0) };
    let mut svg = String::new();
    header(&mut svg, &map.title);
    for (iy, row) in map.values.iter().enumerate() {
        for (ix, &v) in row.iter().enumerate() {
            let (x0, x1) = (f.px(ex[ix]), f.px(ex[ix + 1]));
            let (y0, y1) = (f.py(ey[iy + 1]), f.py(ey[iy]));
            let _ = writeln!(
                svg,
                r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                x1 - x0,
                y1 - y0,
                color_of(v, lo, hi)
            );
        }
    }
    let inside: Vec<String> = map
        .overlay
        .iter()
        .filter(|&&(x, y)| x >= f.x.0 && x <= f.x.1 && y >= f.y.0 && y <= f.y.1)
        .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
        .collect();
    if inside.len() > 1 {
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="white" stroke-width="2" stroke-dasharray="6 4" points="{}"/>"#,
            inside.join(" ")
        );
    }
    axes(&mut svg, &f, &map.x_label, &map.y_label);
    let (bx, bw) = (W - RIGHT + 20.0, 16.0);
    for i in 0..50 {
        let u0 = i as f64 / 50.0;
        let y = H - BOTTOM - (u0 + 0.02) * (H - TOP - BOTTOM);
        let _ = writeln!(
            svg,
            r#"<rect x="{bx}" y="{y:.2}" width="{bw}" height="{:.2}" fill="{}"/>"#,
            (H - TOP - BOTTOM) / 50.0 + 0.5,
            color_of(lo + (hi - lo) * (u0 + 0.01), lo, hi)
        );
    }
    for (u, v) in [(0.0, lo), (0.5, 0.5 * (lo + hi)), (1.0, hi)] {
        let y = H - BOTTOM - u * (H - TOP - BOTTOM);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.2}">{}</text>"#, bx + bw + 6.0, y + 4.0, fmt_tick(v));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Axis a record coordinate is read from.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Coord {
    N,
    Fraction,
    Excitation,
    Theta,
    Population,
}

impl Coord {
    fn of(self, r: &MetricRecord) -> f64 {
        match self {
            Coord::N => r.n as f64,
            Coord::Fraction => r.np_frac,
            Coord::Excitation => r.excitation,
            Coord::Theta => r.theta,
            Coord::Population => r.population,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Coord::N => "N",
            Coord::Fraction => "N_p/N",
            Coord::Excitation => "E",
            Coord::Theta => "θ",
            Coord::Population => "⟨σ^ee_p⟩(0)",
        }
    }
}

const METRICS: [(&str, &str); 5] = [
    ("lost_frac", "lost fraction"),
    ("lost_abs", "lost excitations"),
    ("ss_ee_p", "steady ⟨σ^ee_p⟩"),
    ("ss_ee_np", "steady ⟨σ^ee_np⟩"),
    ("tsa", "T_sa"),
];

fn metric(r: &MetricRecord, key: &str) -> f64 {
    match key {
        "lost_frac" => r.lost_frac,
        "lost_abs" => r.lost_abs,
        "ss_ee_p" => r.ss_ee_p,
        "ss_ee_np" => r.ss_ee_np,
        _ => r.tsa,
    }
}

/// `(file stem, svg)` for every plottable metric of a scan, plus one time
/// plot per point that kept a time series.
pub fn scan_figures(scenario: &Scenario, outcomes: &[PointOutcome]) -> Vec<(String, String)> {
    let records: Vec<&MetricRecord> = outcomes.iter().map(|o| &o.record).collect();
    let pump = match scenario.axes.pump {
        PumpAxis::Fraction(_) => Coord::Fraction,
        PumpAxis::Excitation(_) => Coord::Excitation,
    };
    let pulse = match scenario.axes.pulse {
        PulseAxis::Theta(_) => Coord::Theta,
        PulseAxis::Population(_) => Coord::Population,
    };
    let distinct = |c: Coord| {
        let mut v: Vec<f64> = records.iter().map(|r| c.of(r)).collect();
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
        v
    };
    let (np, nq, nn) = (distinct(pump).len(), distinct(pulse).len(), distinct(Coord::N).len());
    let mut out = Vec::new();
    for (key, label) in METRICS {
        if !records.iter().any(|r| metric(r, key).is_finite()) {
            continue;
        }
        let stem = format!("{}_{key}", scenario.name);
        let title = format!("{}: {label}", scenario.name);
        if nn == 1 && np >= 4 && nq >= 4 {
            out.push((stem, heatmap_svg(&heatmap(&records, pump, pulse, key, title))));
        } else {
            let (x, group) = if nn > 1 {
                (Coord::N, vec![pump, pulse])
            } else if nq > np {
                (pulse, vec![pump])
            } else {
                (pump, vec![pulse])
            };
            let mut plot = lines(&records, x, &group, key, title, label);
            if key == "lost_abs" && x == Coord::N && pump == Coord::Fraction {
                add_saturation(&mut plot, &records);
            }
            out.push((stem, line_plot_svg(&plot)));
        }
    }
    for (i, o) in outcomes.iter().enumerate() {
        let Some(ts) = &o.series else { continue };
        let t = ts.column("t").unwrap_or_default();
        let series = ["ee_p", "ee_np"]
            .iter()
            .map(|c| LineSeries {
                label: c.replace("ee_", "⟨σ^ee_") + "⟩",
                points: t.iter().copied().zip(ts.column(c).unwrap_or_default()).collect(),
                dashed: false,
            })
            .collect();
        let plot = LinePlot {
            title: format!("{} N = {}, N_p = {}, θ = {:.3}", scenario.name, o.point.n, o.point.n_p, o.point.theta),
            x_label: "t Γ".into(),
            y_label: "population".into(),
            log_x: false,
            series,
        };
        out.push((format!("{}_series_{i}", scenario.name), line_plot_svg(&plot)));
    }
    out
}

fn key_of(v: f64) -> i64 {
    (v * 1e9).round() as i64
}

fn lines(records: &[&MetricRecord], x: Coord, group: &[Coord], key: &str, title: String, label: &str) -> LinePlot {
    let mut groups: BTreeMap<Vec<i64>, (String, Vec<(f64, f64)>)> = BTreeMap::new();
    for r in records {
        let k: Vec<i64> = group.iter().map(|c| key_of(c.of(r))).collect();
        let name = group.iter().map(|c| format!("{} = {}", c.label(), fmt_tick(c.of(r)))).collect::<Vec<_>>().join(", ");
        groups.entry(k).or_insert_with(|| (name, Vec::new())).1.push((x.of(r), metric(r, key)));
    }
    LinePlot {
        title,
        x_label: x.label().into(),
        y_label: label.into(),
        log_x: x == Coord::N,
        series: groups
            .into_values()
            .map(|(label, mut points)| {
                points.sort_by(|a, b| a.0.total_cmp(&b.0));
                LineSeries { label, points, dashed: false }
            })
            .collect(),
    }
}

fn add_saturation(plot: &mut LinePlot, records: &[&MetricRecord]) {
    let (lo, hi) = records.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), r| (a.min(r.n as f64), b.max(r.n as f64)));
    let mut fracs: Vec<f64> = records.iter().filter(|r| r.population > 1.0 - 1e-12).map(|r| r.np_frac).collect();
    fracs.sort_by(f64::total_cmp);
    fracs.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    for f in fracs.into_iter().filter(|&f| f < THRESHOLD) {
        let limit = f / (1.0 - 2.0 * f);
        plot.series.push(LineSeries {
            label: format!("limit {}", fmt_tick(f)),
            points: vec![(lo, limit), (hi, limit)],
            dashed: true,
        });
    }
}

fn heatmap(records: &[&MetricRecord], x: Coord, y: Coord, key: &str, title: String) -> Heatmap {
    let mut xs: Vec<f64> = records.iter().map(|r| x.of(r)).collect();
    let mut ys: Vec<f64> = records.iter().map(|r| y.of(r)).collect();
    for v in [&mut xs, &mut ys] {
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| key_of(*a) == key_of(*b));
    }
    let mut values = vec![vec![f64::NAN; xs.len()]; ys.len()];
    for r in records {
        let ix = xs.iter().position(|&v| key_of(v) == key_of(x.of(r))).unwrap();
        let iy = ys.iter().position(|&v| key_of(v) == key_of(y.of(r))).unwrap();
        values[iy][ix] = metric(r, key);
    }
    // E = 1/2 in the (N_p/N, ⟨σ^ee_p⟩(0)) plane.
    let overlay = if (x, y) == (Coord::Fraction, Coord::Population) {
        (0..=100).map(|i| 0.5 + 0.5 * i as f64 / 100.0).map(|f| (f, THRESHOLD / f)).collect()
    } else {
        Vec::new()
    };
    Heatmap { title, x_label: x.label().into(), y_label: y.label().into(), xs, ys, values, overlay }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{GridPoint, IntegratorSettings, Solver};

    fn record(n: u64, f: f64, pop: f64) -> MetricRecord {
        let theta = 2.0 * pop.sqrt().asin();
        let p = GridPoint { n, n_p: (f * n as f64) as u64, theta };
        MetricRecord {
            n,
            n_p: p.n_p,
            np_frac: p.np_frac(),
            theta,
            population: pop,
            excitation: p.excitation(),
            lost_abs: 1.0,
            lost_frac: f * pop,
            ss_ee_p: 0.5,
            ss_ee_np: f64::NAN,
            tsa: f64::NAN,
            solver: Solver::Cumulant,
            initial_excitation: 1.0,
            final_excitation: 0.0,
            t_end: 1.0,
            steady_time: Some(1.0),
            steady_reached: true,
            rel_tol: IntegratorSettings::default().rel_tol,
            abs_tol: 1e-10,
            wall_time_s: 0.0,
            error: None,
        }
    }

    #[test]
    fn csv_round_trip_keeps_header_and_nan() {
        let rs = vec![record(10, 0.4, 1.0), record(20, 0.2, 0.5)];
        let mut buf = Vec::new();
        write_records_csv(&rs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("N,Np_frac,theta,lost_abs,lost_frac,ss_ee_p,ss_ee_np,Tsa,solver\n"));
        let back = read_records_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].n, 20);
        assert!(back[0].ss_ee_np.is_nan());
        assert_eq!(back[0].solver, "cumulant");
    }

    #[test]
    fn json_is_an_array_of_records() {
        let mut buf = Vec::new();
        write_records_json(&[record(10, 0.4, 1.0)], &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v[0]["n"], 10);
        assert!(v[0]["ss_ee_np"].is_null());
    }

    #[test]
    fn heatmap_draws_threshold_curve() {
        let refs: Vec<MetricRecord> =
            [0.2, 0.4, 0.6, 0.8].iter().flat_map(|&f| [0.25, 0.5, 0.75, 1.0].map(|p| record(100, f, p))).collect();
        let r: Vec<&MetricRecord> = refs.iter().collect();
        let map = heatmap(&r, Coord::Fraction, Coord::Population, "lost_frac", "t".into());
        assert_eq!(map.values.len(), 4);
        assert!(map.overlay.iter().all(|&(f, p)| (f * p - 0.5).abs() < 1e-12));
        let svg = heatmap_svg(&map);
        assert!(svg.starts_with("<svg") && svg.contains("stroke-dasharray"));
    }

    #[test]
    fn line_plot_skips_non_finite_points() {
        let plot = LinePlot {
            title: "a & b".into(),
            x_label: "N".into(),
            y_label: "y".into(),
            log_x: true,
            series: vec![LineSeries { label: "s".into(), points: vec![(10.0, 1.0), (100.0, f64::NAN), (1000.0, 2.0)], dashed: false }],
        };
        let svg = line_plot_svg(&plot);
        assert!(svg.contains("a &amp; b"));
        assert_eq!(svg.matches("<circle").count(), 2);
    }
}
