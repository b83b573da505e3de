//! Self-contained SVG figures rendered from the CSV outputs.
//!
//! Rendering only reads CSV text, so a figure is a deterministic function of
//! its data file. Every SVG carries the CSV it was drawn from in a leading
//! XML comment (`<!-- rcsoc-data … -->`), which makes the figures diffable
//! and lets [`extract_data`] recover the numbers.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::sweep::{field_index, parse_phase_points, MOMENTA_HEADER, SPECTRUM_HEADER};
use crate::{Error, Result};

const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

const DATA_TAG: &str = "rcsoc-data";

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// XML comments may not contain `--`.
fn comment_safe(s: &str) -> String {
    let mut out = s.replace("--", "- -");
    while out.contains("--") {
        out = out.replace("--", "- -");
    }
    out
}

/// Recover the CSV embedded in an SVG produced by this module.
pub fn extract_data(svg: &str) -> Option<String> {
    let start = svg.find(&format!("<!-- {DATA_TAG}\n"))? + DATA_TAG.len() + 6;
    let end = start + svg[start..].find("-->")?;
    Some(svg[start..end].replace("- -", "--"))
}

fn fmt(x: f64) -> String {
    format!("{x:.2}")
}

/// Axis tick label: short and locale-free.
fn tick(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let a = x.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{x:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{x:.1e}")
    }
}

fn nice_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

/// Linear colormap from dark blue through teal to yellow.
pub fn colormap(t: f64) -> String {
    const STOPS: [(f64, [f64; 3]); 5] = [
        (0.0, [68.0, 1.0, 84.0]),
        (0.25, [59.0, 82.0, 139.0]),
        (0.5, [33.0, 145.0, 140.0]),
        (0.75, [94.0, 201.0, 98.0]),
        (1.0, [253.0, 231.0, 37.0]),
    ];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let k = STOPS.iter().position(|s| s.0 >= t).unwrap_or(4).max(1);
    let (t0, c0) = STOPS[k - 1];
    let (t1, c1) = STOPS[k];
    let u = (t - t0) / (t1 - t0);
    let c: Vec<u8> = (0..3).map(|i| (c0[i] + u * (c1[i] - c0[i])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let pad = |r: (f64, f64)| if r.1 > r.0 { r } else { (r.0 - 0.5, r.0 + 0.5) };
        Frame { x: pad(x), y: pad(y) }
    }
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }
    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }
}

struct Svg {
    body: String,
}

impl Svg {
    fn new(data: &str) -> Self {
        let mut body = String::new();
        let _ = writeln!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(body, "<!-- {DATA_TAG}\n{}-->", comment_safe(data));
        let _ = writeln!(body, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        Svg { body }
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(self.body, r#"<text x="{}" y="{}" text-anchor="{anchor}">{}</text>"#, fmt(x), fmt(y), esc(s));
    }

    fn axes(&mut self, f: &Frame, title: &str, xlabel: &str, ylabel: &str) {
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = writeln!(
            self.body,
            r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y1 - y0
        );
        for t in nice_ticks(f.x.0, f.x.1, 6) {
            let px = f.px(t);
            let _ = writeln!(self.body, r#"<line x1="{0}" y1="{y1}" x2="{0}" y2="{1}" stroke="black"/>"#, fmt(px), y1 + 4.0);
            self.text(px, y1 + 17.0, "middle", &tick(t));
        }
        for t in nice_ticks(f.y.0, f.y.1, 5) {
            let py = f.py(t);
            let _ = writeln!(self.body, r#"<line x1="{0}" y1="{1}" x2="{x0}" y2="{1}" stroke="black"/>"#, x0 - 4.0, fmt(py));
            self.text(x0 - 7.0, py + 4.0, "end", &tick(t));
        }
        self.text((x0 + x1) / 2.0, 22.0, "middle", title);
        self.text((x0 + x1) / 2.0, H - 15.0, "middle", xlabel);
        let _ = writeln!(
            self.body,
            r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
            fmt((y0 + y1) / 2.0),
            esc(ylabel)
        );
    }

    fn polyline(&mut self, f: &Frame, pts: &[(f64, f64)], color: &str, dashed: bool) {
        // split at non-finite points
        for seg in pts.split(|p| !p.0.is_finite() || !p.1.is_finite()) {
            if seg.is_empty() {
                continue;
            }
            let coords: Vec<String> = seg.iter().map(|&(x, y)| format!("{},{}", fmt(f.px(x)), fmt(f.py(y)))).collect();
            let dash = if dashed { r#" stroke-dasharray="5,3""# } else { "" };
            let _ = writeln!(
                self.body,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                coords.join(" ")
            );
            for &(x, y) in seg {
                let _ = writeln!(self.body, r#"<circle cx="{}" cy="{}" r="2" fill="{color}"/>"#, fmt(f.px(x)), fmt(f.py(y)));
            }
        }
    }

    fn legend(&mut self, entries: &[(String, String)]) {
        for (k, (name, color)) in entries.iter().enumerate() {
            let y = TOP + 10.0 + 18.0 * k as f64;
            let x = W - RIGHT + 12.0;
            let _ = writeln!(self.body, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/>"#, x + 20.0);
            self.text(x + 26.0, y + 4.0, "start", name);
        }
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    v.filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)))
}

/// A line chart of named series.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[(String, Vec<(f64, f64)>)], data: &str) -> String {
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)));
    let (x0, x1) = if x0.is_finite() { (x0, x1) } else { (0.0, 1.0) };
    let (y0, y1) = if y0.is_finite() { (y0.min(0.0), y1 + 0.05 * (y1 - y0.min(0.0)).abs()) } else { (0.0, 1.0) };
    let f = Frame::new((x0, x1), (y0, y1));
    let mut svg = Svg::new(data);
    svg.axes(&f, title, xlabel, ylabel);
    let mut legend = Vec::new();
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        svg.polyline(&f, pts, color, k >= PALETTE.len());
        legend.push((name.clone(), color.to_string()));
    }
    svg.legend(&legend);
    svg.finish()
}

/// Phase diagram in the (η, Δ) plane, each point a cell colored by
/// `field` (a `phase_points.csv` column such as `abs_nw_dn` or
/// `abs_alpha_m`). Points that are not converged are hatched grey, unstable
/// ones outlined in red. If `boundaries_csv` is given, boundary midpoints are
/// overlaid (solid: first order, open: second order).
pub fn phase_diagram_svg(points_csv: &str, field: &str, boundaries_csv: Option<&str>) -> Result<String> {
    let pts = parse_phase_points(points_csv)?;
    let fi = field_index(field).ok_or_else(|| Error::Other(format!("unknown column {field}")))?;
    let mut etas: Vec<f64> = pts.iter().map(|p| p.eta).collect();
    let mut deltas: Vec<f64> = pts.iter().map(|p| p.delta).collect();
    for v in [&mut etas, &mut deltas] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    let step = |v: &[f64]| if v.len() > 1 { (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64 } else { 1.0 };
    let (de, dd) = (step(&etas), step(&deltas));
    let (Some(&e0), Some(&e1), Some(&d0), Some(&d1)) = (etas.first(), etas.last(), deltas.first(), deltas.last()) else {
        return Err(Error::Other("phase_points.csv has no rows".into()));
    };
    let f = Frame::new((e0 - de / 2.0, e1 + de / 2.0), (d0 - dd / 2.0, d1 + dd / 2.0));
    let vmax = pts.iter().filter_map(|p| p.fields[fi]).fold(0.0f64, f64::max);
    let mut data = points_csv.to_string();
    if let Some(b) = boundaries_csv {
        data.push_str(b);
    }
    let mut svg = Svg::new(&data);
    for p in &pts {
        let x = f.px(p.eta - de / 2.0);
        let y = f.py(p.delta + dd / 2.0);
        let w = f.px(p.eta + de / 2.0) - x;
        let h = f.py(p.delta - dd / 2.0) - y;
        let (fill, stroke) = match (p.label.as_str(), p.fields[fi]) {
            ("UNCONVERGED", _) | (_, None) => ("#bbbbbb".to_string(), ""),
            ("UNSTABLE", Some(v)) => (colormap(v / vmax.max(1e-300)), r##" stroke="#d62728" stroke-width="1.5""##),
            (_, Some(v)) => (colormap(v / vmax.max(1e-300)), ""),
        };
        let _ = writeln!(
            svg.body,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}"{stroke}/>"#,
            fmt(x),
            fmt(y),
            fmt(w),
            fmt(h)
        );
    }
    if let Some(b) = boundaries_csv {
        for line in b.lines().skip(1).filter(|l| !l.is_empty()) {
            let c: Vec<&str> = line.split(',').collect();
            if c.len() < 6 {
                continue;
            }
            let (Ok(delta), Ok(lo), Ok(hi)) = (c[0].parse::<f64>(), c[1].parse::<f64>(), c[2].parse::<f64>()) else {
                continue;
            };
            let fill = if c[5] == "first" { "white" } else { "none" };
            let _ = writeln!(
                svg.body,
                r#"<circle cx="{}" cy="{}" r="4" fill="{fill}" stroke="white" stroke-width="1.5"/>"#,
                fmt(f.px(0.5 * (lo + hi))),
                fmt(f.py(delta))
            );
        }
    }
    let title = match field {
        "abs_nw_dn" => "|N↓| (DW order)".to_string(),
        "abs_alpha_m" => "|α₋| (unpumped mode)".to_string(),
        other => other.to_string(),
    };
    svg.axes(&f, &title, "η", "Δ");
    // colorbar
    let (cx, cy0, cy1) = (W - RIGHT + 20.0, TOP + 10.0, H - BOTTOM - 10.0);
    let n = 40;
    for k in 0..n {
        let t = k as f64 / (n - 1) as f64;
        let y = cy1 - t * (cy1 - cy0);
        let _ = writeln!(
            svg.body,
            r#"<rect x="{cx}" y="{}" width="16" height="{}" fill="{}"/>"#,
            fmt(y - (cy1 - cy0) / n as f64),
            fmt((cy1 - cy0) / n as f64 + 0.5),
            colormap(t)
        );
    }
    svg.text(cx + 22.0, cy0 + 4.0, "start", &tick(vmax));
    svg.text(cx + 22.0, cy1 + 4.0, "start", "0");
    Ok(svg.finish())
}

/// Line plots along one Δ row: |S₊|, |𝒮₋^(−)|, |𝒮₋^(+)|, |α₋| and 𝒲 vs η.
pub fn cut_svg(points_csv: &str, delta: f64) -> Result<String> {
    let pts = parse_phase_points(points_csv)?;
    let row: Vec<_> = pts.iter().filter(|p| (p.delta - delta).abs() < 1e-9).collect();
    if row.is_empty() {
        return Err(Error::Other(format!("no points at delta = {delta}")));
    }
    let cols = [
        ("|S+|", "abs_s_plus"),
        ("|Sw(-,-)|", "abs_sw_mm"),
        ("|Sw(-,+)|", "abs_sw_mp"),
        ("|α₋|", "abs_alpha_m"),
        ("|N↓|", "abs_nw_dn"),
    ];
    let mut series: Vec<(String, Vec<(f64, f64)>)> = cols
        .iter()
        .map(|(name, col)| {
            let i = field_index(col).expect("known column");
            (name.to_string(), row.iter().map(|p| (p.eta, p.fields[i].unwrap_or(f64::NAN))).collect())
        })
        .collect();
    series.push((
        "W".to_string(),
        row.iter().map(|p| (p.eta, p.winding.map_or(f64::NAN, |w| w as f64))).collect(),
    ));
    let data: String = std::iter::once(points_csv.lines().next().unwrap_or_default())
        .chain(points_csv.lines().skip(1).filter(|l| {
            l.split(',').nth(1).and_then(|d| d.parse::<f64>().ok()).is_some_and(|d| (d - delta).abs() < 1e-9)
        }))
        .map(|l| format!("{l}\n"))
        .collect();
    Ok(line_chart(&format!("cut at Δ = {}", tick(delta)), "η", "order parameters, W", &series, &data))
}

/// |c_{τ,j}| vs η for j ∈ {0, ±1, ±2, 3} from `momenta.csv` at one Δ.
pub fn momenta_svg(momenta_csv: &str, delta: f64) -> Result<String> {
    let mut lines = momenta_csv.lines();
    if lines.next() != Some(MOMENTA_HEADER) {
        return Err(Error::Other("unexpected momenta.csv header".into()));
    }
    let mut series: BTreeMap<(String, i64), Vec<(f64, f64)>> = BTreeMap::new();
    let mut data = format!("{MOMENTA_HEADER}\n");
    for l in lines.filter(|l| !l.is_empty()) {
        let c: Vec<&str> = l.split(',').collect();
        if c.len() != 5 {
            return Err(Error::Other(format!("bad momenta row {l}")));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|_| Error::Other(format!("bad number in {l}")));
        let (eta, d, v) = (parse(c[0])?, parse(c[1])?, parse(c[4])?);
        let j: i64 = c[3].parse().map_err(|_| Error::Other(format!("bad j in {l}")))?;
        if (d - delta).abs() > 1e-9 || !(-2..=3).contains(&j) {
            continue;
        }
        data.push_str(l);
        data.push('\n');
        series.entry((c[2].to_string(), j)).or_default().push((eta, v));
    }
    if series.is_empty() {
        return Err(Error::Other(format!("no momenta at delta = {delta}")));
    }
    let series: Vec<(String, Vec<(f64, f64)>)> = series
        .into_iter()
        .map(|((s, j), pts)| (format!("c{}{j:+}", if s == "dn" { "↓" } else { "↑" }), pts))
        .collect();
    Ok(line_chart(&format!("momentum occupations, Δ = {}", tick(delta)), "η", "|c|", &series, &data))
}

/// Re ω of the lowest branches vs η from `spectrum.csv` at one Δ. Points with
/// Im ω above 1e-6 are marked with red rings.
pub fn spectrum_svg(spectrum_csv: &str, delta: f64) -> Result<String> {
    let mut lines = spectrum_csv.lines();
    if lines.next() != Some(SPECTRUM_HEADER) {
        return Err(Error::Other("unexpected spectrum.csv header".into()));
    }
    let mut branches: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    let mut unstable = Vec::new();
    let mut data = format!("{SPECTRUM_HEADER}\n");
    for l in lines.filter(|l| !l.is_empty()) {
        let c: Vec<&str> = l.split(',').collect();
        if c.len() != 7 {
            return Err(Error::Other(format!("bad spectrum row {l}")));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|_| Error::Other(format!("bad number in {l}")));
        let (eta, d, re, im) = (parse(c[0])?, parse(c[1])?, parse(c[3])?, parse(c[4])?);
        if (d - delta).abs() > 1e-9 {
            continue;
        }
        let k: usize = c[2].parse().map_err(|_| Error::Other(format!("bad branch index in {l}")))?;
        data.push_str(l);
        data.push('\n');
        branches.entry(k).or_default().push((eta, re));
        if im > 1e-6 {
            unstable.push((eta, re));
        }
    }
    if branches.is_empty() {
        return Err(Error::Other(format!("no spectrum rows at delta = {delta}")));
    }
    let series: Vec<(String, Vec<(f64, f64)>)> =
        branches.into_iter().map(|(k, pts)| (format!("branch {k}"), pts)).collect();
    let mut svg = line_chart(&format!("excitation spectrum, Δ = {}", tick(delta)), "η", "Re ω", &series, &data);
    if !unstable.is_empty() {
        // re-derive the frame used by line_chart
        let (x0, x1) = bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)));
        let (y0, y1) = bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)));
        let f = Frame::new((x0, x1), (y0.min(0.0), y1 + 0.05 * (y1 - y0.min(0.0)).abs()));
        let mut marks = String::new();
        for (x, y) in unstable {
            let _ = writeln!(
                marks,
                r##"<circle cx="{}" cy="{}" r="4" fill="none" stroke="#d62728"/>"##,
                fmt(f.px(x)),
                fmt(f.py(y))
            );
        }
        let at = svg.len() - "</svg>\n".len();
        svg.insert_str(at, &marks);
    }
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::PHASE_POINTS_HEADER;

    fn sample() -> String {
        let mut s = format!("{PHASE_POINTS_HEADER}\n");
        for (k, eta) in [20.0, 25.0, 30.0].iter().enumerate() {
            for delta in [-20.0, -10.0] {
                let (label, w) = if k == 0 { ("DW-SW", 0) } else { ("PW-SS", 1) };
                s.push_str(&format!(
                    "{eta},{delta},{label},{w},0.{k}1,0.{k}1,0,0,0,0.0{k},0.0{k},-1,1e-10,3,true\n"
                ));
            }
        }
        s.push_str("35,-20,UNCONVERGED,,,,,,,,,,,,false\n");
        s
    }

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0), "#440154");
        assert_eq!(colormap(1.0), "#fde725");
        assert_eq!(colormap(f64::NAN), "#440154");
    }

    #[test]
    fn phase_diagram_is_deterministic_and_embeds_data() {
        let csv = sample();
        let a = phase_diagram_svg(&csv, "abs_nw_dn", None).unwrap();
        let b = phase_diagram_svg(&csv, "abs_nw_dn", None).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
        assert_eq!(extract_data(&a).unwrap(), csv);
        assert_eq!(a.matches("<rect").count(), 1 + 7 + 1 + 40);
        assert!(phase_diagram_svg(&csv, "nope", None).is_err());
    }

    #[test]
    fn cut_contains_one_series_per_quantity() {
        let svg = cut_svg(&sample(), -20.0).unwrap();
        assert!(svg.matches("<polyline").count() >= 6);
        assert!(extract_data(&svg).unwrap().lines().all(|l| !l.starts_with("20,-10")));
        assert!(cut_svg(&sample(), 5.0).is_err());
    }

    #[test]
    fn comments_never_contain_double_dash() {
        let s = comment_safe("a---b--c");
        assert!(!s.contains("--"));
        let svg = line_chart("t", "x", "y", &[("s".into(), vec![(0.0, 1.0), (1.0, 2.0)])], "x,y\n---\n");
        let inner = &svg[svg.find("<!--").unwrap() + 4..svg.find("-->").unwrap()];
        assert!(!inner.contains("--"));
    }

    #[test]
    fn ticks() {
        assert_eq!(nice_ticks(0.0, 60.0, 6), vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0]);
        assert_eq!(tick(0.25), "0.25");
        assert_eq!(tick(-20.0), "-20");
    }
}
