//! Static SVG figures and the consolidated results table.

use std::fmt::Write;

use ctp_core::data::{BiasReport, Point, SceneWindow};
use ctp_core::harness::MetricsRecord;

use crate::error::{CtpError, Result};

const PANEL: f64 = 260.0;
const MARGIN: f64 = 16.0;

/// Observed track, ground-truth future and one predicted future per window.
pub struct TrajectoryPanel<'a> {
    pub window: &'a SceneWindow,
    pub prediction: Vec<Point>,
}

fn bounds(points: impl Iterator<Item = Point>) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    (lo, hi)
}

fn polyline(out: &mut String, pts: &[Point], map: &dyn Fn(Point) -> (f64, f64), style: &str) {
    let coords: Vec<String> = pts
        .iter()
        .map(|p| {
            let (x, y) = map(*p);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(out, r#"<polyline fill="none" {style} points="{}"/>"#, coords.join(" "));
}

/// Grid of panels, four per row. Observed tracks are grey, ground truth
/// green and predictions red and dashed.
pub fn trajectory_svg(panels: &[TrajectoryPanel]) -> String {
    let cols = panels.len().clamp(1, 4);
    let rows = panels.len().div_ceil(4).max(1);
    let (w, h) = (cols as f64 * PANEL, rows as f64 * PANEL);
    let mut s = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    s.push('\n');
    for (i, p) in panels.iter().enumerate() {
        let (ox, oy) = ((i % 4) as f64 * PANEL, (i / 4) as f64 * PANEL);
        let win = p.window;
        let all = win.observed.iter().chain(&win.future).chain(&p.prediction).copied();
        let (lo, hi) = bounds(all);
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-6);
        let scale = (PANEL - 2.0 * MARGIN) / span;
        let map = move |q: Point| (ox + MARGIN + (q[0] - lo[0]) * scale, oy + PANEL - MARGIN - (q[1] - lo[1]) * scale);
        let _ = writeln!(
            s,
            r##"<rect x="{ox}" y="{oy}" width="{PANEL}" height="{PANEL}" fill="#fff" stroke="#ccc"/><text x="{}" y="{}" font-size="11" font-family="sans-serif">{} @{}</text>"##,
            ox + 4.0,
            oy + 12.0,
            xml_escape(&win.scene),
            win.start_frame
        );
        for k in 0..win.num_pedestrians() {
            let obs = win.observed_of(k);
            let mut fut = vec![obs[obs.len() - 1]];
            fut.extend_from_slice(win.future_of(k));
            let mut pred = vec![obs[obs.len() - 1]];
            pred.extend_from_slice(&p.prediction[k * 12..(k + 1) * 12]);
            polyline(&mut s, obs, &map, r##"stroke="#777" stroke-width="1.5""##);
            polyline(&mut s, &fut, &map, r##"stroke="#2a2" stroke-width="1.5""##);
            polyline(&mut s, &pred, &map, r##"stroke="#d22" stroke-width="1.5" stroke-dasharray="4 3""##);
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Grouped bar chart of the four interaction statistics, one group per
/// statistic and one bar per environment.
pub fn bias_svg(reports: &[BiasReport]) -> String {
    const COLORS: [&str; 6] = ["#4472c4", "#ed7d31", "#a5a5a5", "#ffc000", "#5b9bd5", "#70ad47"];
    let stats = ["neighbors", "parallel", "meet", "gather"];
    let values = |r: &BiasReport| [r.neighbors_avg, r.parallel_avg, r.meet_avg, r.gather_avg];
    let max = reports
        .iter()
        .flat_map(|r| values(r))
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let (w, h, base, top) = (560.0, 300.0, 250.0, 30.0);
    let group = (w - 60.0) / stats.len() as f64;
    let bar = (group - 20.0) / reports.len().max(1) as f64;
    let mut s = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    s.push('\n');
    let _ = writeln!(s, r##"<line x1="40" y1="{base}" x2="{}" y2="{base}" stroke="#000"/>"##, w - 10.0);
    for (g, name) in stats.iter().enumerate() {
        let gx = 50.0 + g as f64 * group;
        for (i, r) in reports.iter().enumerate() {
            let v = values(r)[g];
            let bh = v / max * (base - top);
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>{} {name}: {v:.3}</title></rect>"#,
                gx + i as f64 * bar,
                base - bh,
                bar - 2.0,
                bh,
                COLORS[i % COLORS.len()],
                xml_escape(&r.environment)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" font-size="12" font-family="sans-serif" text-anchor="middle">{name}</text>"#,
            gx + (group - 20.0) / 2.0,
            base + 16.0
        );
    }
    for (i, r) in reports.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}" font-size="11" font-family="sans-serif">{}</text>"#,
            50.0 + i as f64 * 120.0,
            8.0,
            COLORS[i % COLORS.len()],
            64.0 + i as f64 * 120.0,
            17.0,
            xml_escape(&r.environment)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub const RESULTS_HEADER: [&str; 6] = ["run", "scene", "split", "k", "ade", "fde"];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub run: String,
    pub scene: String,
    pub split: String,
    pub k: usize,
    pub ade: f64,
    pub fde: f64,
}

/// Every per-scene row of each run plus an `average` row per run.
pub fn results_rows(runs: &[(String, Vec<MetricsRecord>)]) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for (run, records) in runs {
        for r in records {
            rows.push(ResultRow {
                run: run.clone(),
                scene: r.scene.clone(),
                split: r.split.clone(),
                k: r.k,
                ade: r.ade,
                fde: r.fde,
            });
        }
        if let Some(first) = records.first() {
            let n = records.len() as f64;
            rows.push(ResultRow {
                run: run.clone(),
                scene: "average".into(),
                split: first.split.clone(),
                k: first.k,
                ade: records.iter().map(|r| r.ade).sum::<f64>() / n,
                fde: records.iter().map(|r| r.fde).sum::<f64>() / n,
            });
        }
    }
    rows
}

pub fn results_csv(rows: &[ResultRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record([
            r.run.clone(),
            r.scene.clone(),
            r.split.clone(),
            r.k.to_string(),
            r.ade.to_string(),
            r.fde.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| CtpError::Format(e.to_string()))
}

pub fn parse_results(text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    if r.headers()?.iter().ne(RESULTS_HEADER) {
        return Err(CtpError::Format(format!("expected header `{}`", RESULTS_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = || CtpError::Format(format!("results row {}", i + 2));
        out.push(ResultRow {
            run: rec[0].to_string(),
            scene: rec[1].to_string(),
            split: rec[2].to_string(),
            k: rec[3].parse().map_err(|_| bad())?,
            ade: rec[4].parse().map_err(|_| bad())?,
            fde: rec[5].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}
