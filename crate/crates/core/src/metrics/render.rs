use std::fmt::Write;

use super::{BandStats, MetricReport, MetricsError};

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.1}", 100.0 * x))
}

/// Table of aggregate scores, percentages with one decimal. `L` is in words.
pub fn render_table(r: &MetricReport) -> String {
    let a = &r.aggregate;
    let cols = [
        ("IoU", pct(a.iou)),
        ("Hal", pct(a.hal)),
        ("G", pct(a.g)),
        ("sC", pct(a.sc)),
        ("D-1", pct(a.d1)),
        ("D-2", pct(a.d2)),
        ("L", a.l.map_or_else(|| "-".into(), |x| format!("{x:.1}"))),
        ("LP", pct(a.lp)),
        ("H", pct(a.h)),
        ("best5 D-1", pct(a.best5_d1)),
        ("best5 D-2", pct(a.best5_d2)),
    ];
    let widths: Vec<usize> = cols.iter().map(|(h, v)| h.len().max(v.len())).collect();
    let mut out = String::new();
    let line = |cells: Vec<&str>| {
        cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ")
    };
    let _ = writeln!(out, "{}", line(cols.iter().map(|c| c.0).collect()));
    let _ = writeln!(out, "{}", line(cols.iter().map(|c| c.1.as_str()).collect()));
    let _ = writeln!(out, "images: {}", r.per_image.len());
    out
}

const CSV_HEADER: &str = "band,lower,upper,count,percent,iou,hal";

/// One CSV row per coverage band.
pub fn bands_csv(bands: &[BandStats]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{:.1}", 100.0 * x));
    for (i, b) in bands.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{:.1},{:.1},{},{:.1},{},{}",
            i + 1,
            100.0 * b.lower,
            100.0 * b.upper,
            b.count,
            b.percent,
            opt(b.mean_iou),
            opt(b.mean_hal)
        );
    }
    out
}

/// Reads [`bands_csv`] output back, at its one-decimal precision.
pub fn parse_bands_csv(text: &str) -> Result<Vec<BandStats>, MetricsError> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(MetricsError::Schema("unexpected band CSV header".into()));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| MetricsError::Schema(format!("bad number `{s}`")));
    let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(|x| Some(x / 100.0)) };
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 7 {
                return Err(MetricsError::Schema(format!("expected 7 fields in `{l}`")));
            }
            Ok(BandStats {
                lower: num(f[1])? / 100.0,
                upper: num(f[2])? / 100.0,
                count: f[3].parse().map_err(|_| MetricsError::Schema(format!("bad count `{}`", f[3])))?,
                percent: num(f[4])?,
                mean_iou: opt(f[5])?,
                mean_hal: opt(f[6])?,
            })
        })
        .collect()
}
