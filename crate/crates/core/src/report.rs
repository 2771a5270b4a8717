//! CSV and SVG output for curves, savings and class-wise AP reports.
//!
//! All numbers are written with six decimals so reruns diff cleanly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::evaluation::{ClasswiseReport, LearningCurve, SavingReport};

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Csv(e.to_string())
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

fn opt6(v: Option<f64>) -> String {
    v.map(f6).unwrap_or_default()
}

/// `method,labels,map`, one row per curve point.
pub fn write_curves_csv<W: Write>(curves: &[LearningCurve], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "labels", "map"]).map_err(csv_err)?;
    for c in curves {
        for (labels, map) in &c.points {
            w.write_record([c.method.clone(), labels.to_string(), f6(*map)])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(csv_err)
}

/// Reads curves grouped by method, in order of first appearance.
pub fn read_curves_csv<R: Read>(input: R) -> Result<Vec<LearningCurve>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut order: Vec<String> = Vec::new();
    let mut points: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 2;
        let bad = |m: String| Error::Csv(format!("row {row_no}: {m}"));
        let row = row.map_err(|e| bad(e.to_string()))?;
        if row.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", row.len())));
        }
        let labels: usize = row[1]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad label count `{}`", &row[1])))?;
        let map: f64 = row[2]
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| bad(format!("bad mAP `{}`", &row[2])))?;
        let name = row[0].to_string();
        if !points.contains_key(&name) {
            order.push(name.clone());
        }
        points.entry(name).or_default().push((labels, map));
    }
    order
        .into_iter()
        .map(|m| {
            let p = points.remove(&m).unwrap_or_default();
            LearningCurve::new(m, p)
        })
        .collect()
}

/// `method,labels,map,saving` with an empty saving where the method never reaches the mAP.
pub fn write_saving_csv<W: Write>(reports: &[SavingReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "labels", "map", "saving"]).map_err(csv_err)?;
    for r in reports {
        for p in &r.points {
            w.write_record([r.method.clone(), p.labels.to_string(), f6(p.map), opt6(p.saving)])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(csv_err)
}

pub fn write_saving_summary_csv<W: Write>(reports: &[SavingReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "average_saving", "flagged"])
        .map_err(csv_err)?;
    for r in reports {
        w.write_record([r.method.clone(), opt6(r.average), r.flagged.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

/// `method,class,ap`.
pub fn write_class_ap_csv<W: Write>(rows: &[(String, BTreeMap<usize, f64>)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "class", "ap"]).map_err(csv_err)?;
    for (method, aps) in rows {
        for (c, ap) in aps {
            w.write_record([method.clone(), c.to_string(), f6(*ap)])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(csv_err)
}

pub fn read_class_ap_csv<R: Read>(input: R) -> Result<BTreeMap<String, BTreeMap<usize, f64>>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out: BTreeMap<String, BTreeMap<usize, f64>> = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 2;
        let bad = |m: String| Error::Csv(format!("row {row_no}: {m}"));
        let row = row.map_err(|e| bad(e.to_string()))?;
        if row.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", row.len())));
        }
        let class: usize = row[1]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad class `{}`", &row[1])))?;
        let ap: f64 = row[2]
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| (0.0..=1.0).contains(v))
            .ok_or_else(|| bad(format!("bad AP `{}`", &row[2])))?;
        out.entry(row[0].to_string()).or_default().insert(class, ap);
    }
    Ok(out)
}

pub fn write_classwise_csv<W: Write>(reports: &[(String, ClasswiseReport)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "threshold",
        "difficult_classes",
        "difficult_delta",
        "non_difficult_delta",
    ])
    .map_err(csv_err)?;
    for (method, r) in reports {
        let classes: Vec<String> = r.difficult.iter().map(|c| c.to_string()).collect();
        w.write_record([
            method.clone(),
            f6(r.threshold),
            classes.join(" "),
            opt6(r.difficult_delta),
            opt6(r.non_difficult_delta),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A plain line chart, one polyline per series.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (60.0, 150.0, 40.0, 50.0);
    let all = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in all {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1e-3;
    }
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-size="16" text-anchor="middle">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#,
        top + ph,
        left + pw,
        top + ph,
        top + ph
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * f64::from(i) / 4.0;
        let fy = y0 + (y1 - y0) * f64::from(i) / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{fx:.0}</text>"#,
            sx(fx),
            top + ph + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{fy:.3}</text>"#,
            left - 6.0,
            sy(fy) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        let ly = top + 14.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}" font-size="12">{}</text>"#,
            left + pw + 10.0,
            left + pw + 30.0,
            left + pw + 36.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}
