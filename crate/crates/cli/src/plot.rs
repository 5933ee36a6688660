//! SVG learning curves: mean elite score per generation with a min-max band
//! across runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::bail;

use crate::stats::StatsRow;

pub const WIDTH: f64 = 960.0;
pub const HEIGHT: f64 = 540.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 30.0, 30.0, 60.0); // left, right, top, bottom

/// Per-generation mean, min and max of `elite_mean` over all runs that
/// reached that generation.
pub fn aggregate(runs: &[Vec<StatsRow>]) -> Vec<(u32, f64, f64, f64)> {
    let mut by_gen: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for run in runs {
        for r in run {
            by_gen.entry(r.generation).or_default().push(r.elite_mean);
        }
    }
    by_gen
        .into_iter()
        .map(|(g, v)| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (g, mean, lo, hi)
        })
        .collect()
}

fn nice_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let span = (hi - lo).max(1e-9);
    let raw = span / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 {
        out.push(t);
        t += step;
    }
    out
}

pub fn render(runs: &[Vec<StatsRow>], title: &str) -> anyhow::Result<String> {
    if runs.iter().all(Vec::is_empty) {
        bail!("no data rows to plot");
    }
    let pts = aggregate(runs);
    let (g0, g1) = (pts[0].0 as f64, pts[pts.len() - 1].0 as f64);
    let ymin = pts.iter().map(|p| p.2).fold(f64::INFINITY, f64::min).min(0.0);
    let mut ymax = pts.iter().map(|p| p.3).fold(f64::NEG_INFINITY, f64::max);
    if ymax <= ymin {
        ymax = ymin + 1.0;
    }
    let (ml, mr, mt, mb) = MARGIN;
    let (pw, ph) = (WIDTH - ml - mr, HEIGHT - mt - mb);
    let x = |g: f64| if g1 > g0 { ml + (g - g0) / (g1 - g0) * pw } else { ml + pw / 2.0 };
    let y = |v: f64| mt + (1.0 - (v - ymin) / (ymax - ymin)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    for t in nice_ticks(ymin, ymax, 6) {
        let _ = writeln!(
            s,
            r##"<line x1="{ml}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="#ddd"/><text x="{2}" y="{3:.2}" text-anchor="end">{t}</text>"##,
            y(t),
            ml + pw,
            ml - 6.0,
            y(t) + 4.0
        );
    }
    for t in nice_ticks(g0, g1.max(g0 + 1.0), 8) {
        if t < g0 || t > g1.max(g0) {
            continue;
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{t}</text>"#,
            x(t),
            mt + ph + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">generation</text>"#, ml + pw / 2.0, HEIGHT - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">elite mean score</text>"#,
        mt + ph / 2.0
    );

    let upper = pts.iter().map(|p| format!("{:.2},{:.2}", x(p.0 as f64), y(p.3)));
    let lower = pts.iter().rev().map(|p| format!("{:.2},{:.2}", x(p.0 as f64), y(p.2)));
    let band: Vec<String> = upper.chain(lower).collect();
    let _ = writeln!(s, r##"<polygon class="band" points="{}" fill="#1f77b4" fill-opacity="0.2" stroke="none"/>"##, band.join(" "));
    let line: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", x(p.0 as f64), y(p.1))).collect();
    let _ = writeln!(
        s,
        r##"<polyline class="mean" points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
        line.join(" ")
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{} run(s)</text>"#,
        ml + pw - 8.0,
        mt + 16.0,
        runs.len()
    );
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(g: u32, e: f64) -> StatsRow {
        StatsRow { generation: g, elite_mean: e, top_mean: e, pop_mean: e, frames_total: 0, wall_seconds: None }
    }

    #[test]
    fn single_run_band_collapses() {
        let agg = aggregate(&[vec![row(1, 2.0), row(2, 3.0)]]);
        assert!(agg.iter().all(|&(_, m, lo, hi)| m == lo && m == hi));
    }

    #[test]
    fn band_spans_runs() {
        let runs: Vec<_> = (0..5).map(|k| vec![row(1, k as f64), row(2, 10.0 + k as f64)]).collect();
        assert_eq!(aggregate(&runs), vec![(1, 2.0, 0.0, 4.0), (2, 12.0, 10.0, 14.0)]);
        let svg = render(&runs, "t").unwrap();
        assert!(svg.contains(r#"viewBox="0 0 960 540""#));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(render(&[vec![]], "t").is_err());
        assert!(render(&[], "t").is_err());
    }

    #[test]
    fn ticks_are_round() {
        assert_eq!(nice_ticks(0.0, 10.0, 5), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
    }
}
