//! Standalone SVG charts with the plotted numbers embedded as CSV in an
//! XML comment.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::artifacts::{CycleRow, Manifest, CYCLES_FILE, MANIFEST_FILE, SELECTIONS_FILE, SUMMARY_FILE};
use crate::error::{Error, Result};
use crate::stats::{mean, std_dev};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: (f64, f64, f64, f64) = (60.0, 20.0, 30.0, 50.0); // left, right, top, bottom
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// One curve: `(x, mean, sd)` per point.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64, f64)>,
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(t);
        t += step;
    }
    out
}

/// Renders `series` as mean curves with markers and, where any sd is
/// non-zero, a shaded ±1 sd band.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, m, sd) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(m - sd);
        y1 = y1.max(m + sd);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let pad = ((y1 - y0) * 0.05).max(1e-6);
    y0 -= pad;
    y1 += pad;
    let (ml, mr, mt, mb) = MARGIN;
    let pw = WIDTH - ml - mr;
    let ph = HEIGHT - mt - mb;
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| mt + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    s.push_str("<!-- data\nseries,x,mean,sd\n");
    for ser in series {
        for &(x, m, sd) in &ser.points {
            let _ = writeln!(s, "{},{x},{m},{sd}", ser.name);
        }
    }
    s.push_str("-->\n");
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    // axes
    let _ = writeln!(
        s,
        r#"<path d="M{} {} V{} H{}" stroke="black" fill="none"/>"#,
        fmt(ml),
        fmt(mt),
        fmt(mt + ph),
        fmt(ml + pw)
    );
    for t in ticks(x0, x1) {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="10">{}</text>"#,
            fmt(sx(t)),
            fmt(mt + ph + 14.0),
            trim(t)
        );
    }
    for t in ticks(y0, y1) {
        let _ = writeln!(
            s,
            r##"<line x1="{}" x2="{}" y1="{y}" y2="{y}" stroke="#dddddd"/><text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="10">{}</text>"##,
            fmt(ml),
            fmt(ml + pw),
            fmt(ml - 4.0),
            fmt(sy(t) + 3.0),
            trim(t),
            y = fmt(sy(t)),
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        fmt(ml + pw / 2.0),
        fmt(HEIGHT - 12.0),
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(14 {}) rotate(-90)" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        fmt(mt + ph / 2.0),
        escape(y_label)
    );

    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if ser.points.iter().any(|p| p.2 > 0.0) {
            let mut d = String::new();
            for (j, &(x, m, sd)) in ser.points.iter().enumerate() {
                let _ = write!(d, "{}{} {} ", if j == 0 { "M" } else { "L" }, fmt(sx(x)), fmt(sy(m + sd)));
            }
            for &(x, m, sd) in ser.points.iter().rev() {
                let _ = write!(d, "L{} {} ", fmt(sx(x)), fmt(sy(m - sd)));
            }
            let _ = writeln!(s, r#"<path d="{}Z" fill="{color}" fill-opacity="0.15" stroke="none"/>"#, d);
        }
        let line: Vec<String> = ser.points.iter().map(|&(x, m, _)| format!("{},{}", fmt(sx(x)), fmt(sy(m)))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        for &(x, m, _) in &ser.points {
            let _ = writeln!(s, r#"<circle cx="{}" cy="{}" r="3" fill="{color}"/>"#, fmt(sx(x)), fmt(sy(m)));
        }
        let ly = mt + 12.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="12" height="3" fill="{color}"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            fmt(ml + 10.0),
            fmt(ly - 4.0),
            fmt(ml + 26.0),
            fmt(ly),
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn trim(v: f64) -> String {
    let t = format!("{v:.4}");
    let t = t.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" {
        "0".into()
    } else {
        t.to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads `config_hash` of every row of a prefixed probe CSV.
fn csv_hashes(path: &Path) -> Result<Vec<String>> {
    let mut r = csv::Reader::from_path(path)?;
    let col = r
        .headers()?
        .iter()
        .position(|h| h == "config_hash")
        .ok_or_else(|| Error::Format(format!("{} has no config_hash column", path.display())))?;
    r.records().map(|rec| Ok(rec?.get(col).unwrap_or_default().to_string())).collect()
}

/// Per-(group, cycle) `(x, mean, sd)` of `value` over the rows in a group.
fn aggregate<K: Ord + Clone>(rows: impl Iterator<Item = (K, usize, f64, f64)>) -> BTreeMap<K, Vec<(f64, f64, f64)>> {
    let mut groups: BTreeMap<K, BTreeMap<usize, (f64, Vec<f64>)>> = BTreeMap::new();
    for (k, cycle, x, v) in rows {
        groups.entry(k).or_default().entry(cycle).or_insert((x, Vec::new())).1.push(v);
    }
    groups
        .into_iter()
        .map(|(k, cycles)| (k, cycles.into_values().map(|(x, v)| (x, mean(&v), std_dev(&v))).collect()))
        .collect()
}

/// Renders charts for the artifacts in `dir`; returns the written file
/// names. Fails when required files are missing or hashes disagree.
pub fn plot_dir(dir: &Path) -> Result<Vec<String>> {
    let required = [MANIFEST_FILE, CYCLES_FILE, SELECTIONS_FILE, SUMMARY_FILE];
    let missing: Vec<String> = required.iter().filter(|f| !dir.join(f).is_file()).map(|f| f.to_string()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts {
            dir: dir.display().to_string(),
            expected: required.iter().map(|f| f.to_string()).collect(),
        });
    }
    let manifest: Manifest = serde_json::from_str(&read_text(&dir.join(MANIFEST_FILE))?)?;
    let hash = manifest.config_hash.clone();
    let mixed = || Error::MixedArtifacts(dir.display().to_string());
    for f in [SELECTIONS_FILE, SUMMARY_FILE] {
        let v: serde_json::Value = serde_json::from_str(&read_text(&dir.join(f))?)?;
        if v.get("config_hash").and_then(|h| h.as_str()) != Some(hash.as_str()) {
            return Err(mixed());
        }
    }
    let cycles: Vec<CycleRow> = csv::Reader::from_path(dir.join(CYCLES_FILE))?
        .deserialize()
        .collect::<std::result::Result<_, _>>()?;
    if cycles.iter().any(|r| r.config_hash != hash) {
        return Err(mixed());
    }
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv") && !p.ends_with(CYCLES_FILE))
        .collect();
    entries.sort();
    for p in &entries {
        if csv_hashes(p)?.iter().any(|h| *h != hash) {
            return Err(mixed());
        }
    }

    let mut written = Vec::new();
    let mut emit = |name: &str, svg: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        written.push(name.to_string());
        Ok(())
    };
    // keep strategies in first-appearance order for stable colors
    let mut order: Vec<String> = Vec::new();
    for r in &cycles {
        let s = r.strategy.to_string();
        if !order.contains(&s) {
            order.push(s);
        }
    }
    let rank = |s: &str| order.iter().position(|o| o == s).unwrap_or(usize::MAX);
    let by = |f: fn(&CycleRow) -> f64| {
        let agg = aggregate(cycles.iter().map(|r| ((rank(r.strategy.as_str()), r.strategy.to_string()), r.cycle, r.labeled as f64, f(r))));
        agg.into_iter()
            .map(|((_, name), points)| Series { name, points })
            .collect::<Vec<_>>()
    };
    emit("accuracy.svg", line_chart("Test accuracy", "labeled samples", "accuracy", &by(|r| r.test_acc)))?;
    emit("gap.svg", line_chart("Train - test accuracy", "labeled samples", "gap", &by(|r| r.gap)))?;

    let bounds = dir.join("bounds.csv");
    if bounds.is_file() {
        let mut r = csv::Reader::from_path(&bounds)?;
        let headers = r.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Format(format!("bounds.csv lacks {name}")))
        };
        let (c_cycle, c_scheme) = (col("cycle")?, col("scheme")?);
        let terms = ["approx1", "approx2", "approx3"];
        let cols: Vec<usize> = terms.iter().map(|t| col(t)).collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .unwrap_or_default()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad number in bounds.csv: {:?}", rec.get(i))))
            };
            let cycle = num(c_cycle)? as usize;
            for (t, &c) in terms.iter().zip(&cols) {
                rows.push(((rec.get(c_scheme).unwrap_or_default().to_string(), *t), cycle, cycle as f64, num(c)?));
            }
        }
        let series: Vec<Series> = aggregate(rows.into_iter())
            .into_iter()
            .map(|((scheme, term), points)| Series {
                name: format!("{scheme} {term}"),
                points,
            })
            .collect();
        emit("bounds.svg", line_chart("Bound terms", "cycle", "mean value", &series))?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_cover_the_range() {
        let t = ticks(0.0, 1.0);
        assert_eq!(t.first(), Some(&0.0));
        assert!((t.last().unwrap() - 1.0).abs() < 1e-9);
        assert!(ticks(3.3, 3.4).len() >= 2);
    }

    #[test]
    fn single_series_has_markers_and_no_band() {
        let s = Series {
            name: "random".into(),
            points: vec![(10.0, 0.5, 0.0), (20.0, 0.6, 0.0), (30.0, 0.7, 0.0)],
        };
        let svg = line_chart("t", "x", "y", &[s]);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(!svg.contains("fill-opacity"));
        assert!(svg.contains("random,20,0.6,0"));
    }

    #[test]
    fn spread_draws_a_band_and_is_deterministic() {
        let s = Series {
            name: "a<b".into(),
            points: vec![(1.0, 0.5, 0.1), (2.0, 0.6, 0.05)],
        };
        let one = line_chart("t", "x", "y", std::slice::from_ref(&s));
        assert!(one.contains("fill-opacity"));
        assert!(one.contains("a&lt;b"));
        assert_eq!(one, line_chart("t", "x", "y", &[s]));
    }

    #[test]
    fn empty_dir_lists_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        let err = plot_dir(dir.path()).unwrap_err();
        let msg = err.to_string();
        for f in [MANIFEST_FILE, CYCLES_FILE, SELECTIONS_FILE, SUMMARY_FILE] {
            assert!(msg.contains(f), "{msg}");
        }
    }
}
