//! Hand-rolled SVG emitters for the experiment artifacts.
//!
//! Output is a pure function of the input data, so fixed inputs produce
//! byte-identical files. No plotting dependency: the artifacts are simple
//! enough (line panels and a heatmap) that direct SVG assembly is shorter
//! than configuring one.

use crate::als::Trajectory;
use crate::error::{Error, Result};
use crate::experiments::CellAggregate;
use std::fmt::Write as _;

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 300.0;
const MARGIN_L: f64 = 58.0;
const MARGIN_R: f64 = 14.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 44.0;
const LOG_FLOOR: f64 = 1e-16;

struct Panel {
    title: String,
    x_label: String,
    y_label: String,
    log_y: bool,
    points: Vec<(f64, f64)>,
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".to_string()
    } else if a >= 0.01 && a < 10000.0 {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

fn render_panel(out: &mut String, p: &Panel, x0: f64, y0: f64) {
    let (px0, px1) = (x0 + MARGIN_L, x0 + PANEL_W - MARGIN_R);
    let (py0, py1) = (y0 + MARGIN_T, y0 + PANEL_H - MARGIN_B);

    let xs: Vec<f64> = p.points.iter().map(|&(x, _)| x).collect();
    let ys: Vec<f64> = p
        .points
        .iter()
        .map(|&(_, y)| if p.log_y { y.max(LOG_FLOOR).log10() } else { y })
        .collect();
    let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &x in &xs {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
    }
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &y in &ys {
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    if xmax <= xmin {
        xmax = xmin + 1.0;
        xmin -= 1.0;
    }
    if ymax <= ymin {
        ymax = ymin + 1.0;
        ymin -= 1.0;
    }
    let sx = |x: f64| px0 + (x - xmin) / (xmax - xmin) * (px1 - px0);
    let sy = |y: f64| py1 - (y - ymin) / (ymax - ymin) * (py1 - py0);

    let _ = write!(
        out,
        r#"<rect x="{px0:.1}" y="{py0:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black" stroke-width="1"/>"#,
        px1 - px0,
        py1 - py0
    );
    let _ = write!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">{}</text>"#,
        (px0 + px1) / 2.0,
        y0 + 20.0,
        p.title
    );
    let _ = write!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#,
        (px0 + px1) / 2.0,
        py1 + 32.0,
        p.x_label
    );
    let _ = write!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">{}</text>"#,
        x0 + 14.0,
        (py0 + py1) / 2.0,
        x0 + 14.0,
        (py0 + py1) / 2.0,
        p.y_label
    );

    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = xmin + f * (xmax - xmin);
        let yv = ymin + f * (ymax - ymin);
        let xp = sx(xv);
        let yp = sy(yv);
        let _ = write!(
            out,
            r#"<line x1="{xp:.1}" y1="{py1:.1}" x2="{xp:.1}" y2="{:.1}" stroke="black"/>"#,
            py1 + 4.0
        );
        let _ = write!(
            out,
            r#"<text x="{xp:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
            py1 + 16.0,
            fmt_tick(xv)
        );
        let _ = write!(
            out,
            r#"<line x1="{:.1}" y1="{yp:.1}" x2="{px0:.1}" y2="{yp:.1}" stroke="black"/>"#,
            px0 - 4.0
        );
        let label = if p.log_y { format!("1e{}", fmt_tick(yv)) } else { fmt_tick(yv) };
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{}</text>"#,
            px0 - 6.0,
            yp + 3.0,
            label
        );
    }

    if p.points.len() > 1 {
        let mut path = String::new();
        for (i, (&x, &y)) in xs.iter().zip(&ys).enumerate() {
            let _ = write!(path, "{}{:.2},{:.2}", if i == 0 { "" } else { " " }, sx(x), sy(y));
        }
        let _ = write!(
            out,
            r##"<polyline points="{path}" fill="none" stroke="#1f5fa8" stroke-width="1.5"/>"##
        );
    }
    if p.points.len() <= 400 {
        for (&x, &y) in xs.iter().zip(&ys) {
            let _ = write!(
                out,
                r##"<circle cx="{:.2}" cy="{:.2}" r="2.2" fill="#1f5fa8"/>"##,
                sx(x),
                sy(y)
            );
        }
    }
}

fn svg_open(out: &mut String, width: f64, height: f64, header: &[String]) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    for line in header {
        // XML comments must not contain "--".
        let _ = write!(out, "<!-- {} -->", line.replace("--", "- -"));
    }
    let _ = write!(out, r#"<rect width="{width:.0}" height="{height:.0}" fill="white"/>"#);
}

/// Three panels for one run: `sin theta_v` against `t` (log scale),
/// `cos theta_v` against `t`, and the parametric `sin` against `cos`.
/// Records without angle data (no ground truth) are skipped.
pub fn trajectory_panels_svg(traj: &Trajectory, header: &[String]) -> Result<String> {
    let pts: Vec<(f64, f64, f64)> = traj
        .records
        .iter()
        .filter(|r| !r.sin_v.is_nan())
        .map(|r| (r.t as f64, r.sin_v, r.cos_v))
        .collect();
    if pts.is_empty() {
        return Err(Error::NoData);
    }
    let panels = [
        Panel {
            title: "sin vs t".into(),
            x_label: "t".into(),
            y_label: "sin theta_v (log)".into(),
            log_y: true,
            points: pts.iter().map(|&(t, s, _)| (t, s)).collect(),
        },
        Panel {
            title: "cos vs t".into(),
            x_label: "t".into(),
            y_label: "cos theta_v".into(),
            log_y: false,
            points: pts.iter().map(|&(t, _, c)| (t, c)).collect(),
        },
        Panel {
            title: "sin vs cos".into(),
            x_label: "cos theta_v".into(),
            y_label: "sin theta_v".into(),
            log_y: false,
            points: pts.iter().map(|&(_, s, c)| (c, s)).collect(),
        },
    ];
    let mut out = String::new();
    svg_open(&mut out, PANEL_W * 3.0, PANEL_H, header);
    for (i, panel) in panels.iter().enumerate() {
        render_panel(&mut out, panel, i as f64 * PANEL_W, 0.0);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn heat_color(t: f64) -> String {
    // Low error = deep blue, high error = warm yellow.
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(16.0, 246.0), lerp(56.0, 214.0), lerp(128.0, 66.0))
}

/// Heatmap over the sweep grid: one cell per `(n, oversampling)` pair,
/// colored by `log10(median error)`, with a legend bar.
pub fn sweep_heatmap_svg(cells: &[CellAggregate], title: &str, header: &[String]) -> Result<String> {
    if cells.is_empty() {
        return Err(Error::NoData);
    }
    let mut ns: Vec<usize> = cells.iter().map(|c| c.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut oss: Vec<f64> = cells.iter().map(|c| c.oversampling).collect();
    oss.sort_by(|a, b| a.partial_cmp(b).unwrap());
    oss.dedup_by(|a, b| a == b);

    let cell_w = 46.0;
    let cell_h = 34.0;
    let grid_x = 70.0;
    let grid_y = 50.0;
    let legend_w = 70.0;
    let width = grid_x + cell_w * oss.len() as f64 + legend_w + 40.0;
    let height = grid_y + cell_h * ns.len() as f64 + 60.0;

    let log_floor = -8.0;
    let to_t = |err: f64| (err.max(1e-12).log10() - log_floor) / (0.0 - log_floor);

    let mut out = String::new();
    svg_open(&mut out, width, height, header);
    let _ = write!(
        out,
        r#"<text x="{:.1}" y="24" font-size="14" text-anchor="middle">{title}</text>"#,
        grid_x + cell_w * oss.len() as f64 / 2.0
    );

    for (row, &n) in ns.iter().enumerate() {
        // Largest n on the top row.
        let y = grid_y + (ns.len() - 1 - row) as f64 * cell_h;
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{n}</text>"#,
            grid_x - 6.0,
            y + cell_h / 2.0 + 4.0
        );
        for (col, &os) in oss.iter().enumerate() {
            let x = grid_x + col as f64 * cell_w;
            let cell = cells
                .iter()
                .find(|c| c.n == n && c.oversampling == os);
            match cell {
                Some(c) => {
                    let _ = write!(
                        out,
                        r#"<rect x="{x:.1}" y="{y:.1}" width="{cell_w:.1}" height="{cell_h:.1}" fill="{}" stroke="white"/>"#,
                        heat_color(to_t(c.median_error))
                    );
                }
                None => {
                    let _ = write!(
                        out,
                        r##"<rect x="{x:.1}" y="{y:.1}" width="{cell_w:.1}" height="{cell_h:.1}" fill="#cccccc" stroke="white"/>"##
                    );
                }
            }
        }
    }
    for (col, &os) in oss.iter().enumerate() {
        let x = grid_x + col as f64 * cell_w + cell_w / 2.0;
        let y = grid_y + ns.len() as f64 * cell_h + 14.0;
        let _ = write!(
            out,
            r#"<text x="{x:.1}" y="{y:.1}" font-size="10" text-anchor="middle">{}</text>"#,
            fmt_tick(os)
        );
    }
    let _ = write!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">oversampling</text>"#,
        grid_x + cell_w * oss.len() as f64 / 2.0,
        grid_y + ns.len() as f64 * cell_h + 34.0
    );
    let _ = write!(
        out,
        r#"<text x="18" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 18 {:.1})">n</text>"#,
        grid_y + ns.len() as f64 * cell_h / 2.0,
        grid_y + ns.len() as f64 * cell_h / 2.0
    );

    // Legend: median error on a log color scale.
    let lx = grid_x + cell_w * oss.len() as f64 + 24.0;
    let lh = cell_h * ns.len() as f64;
    let steps = 24;
    for s in 0..steps {
        let t = 1.0 - s as f64 / (steps - 1) as f64;
        let y = grid_y + s as f64 * lh / steps as f64;
        let _ = write!(
            out,
            r#"<rect x="{lx:.1}" y="{y:.1}" width="14" height="{:.2}" fill="{}"/>"#,
            lh / steps as f64 + 0.5,
            heat_color(t)
        );
    }
    for (frac, label) in [(0.0f64, "1e0"), (0.5, "1e-4"), (1.0, "1e-8")] {
        let y = grid_y + frac * lh;
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10">{label}</text>"#,
            lx + 18.0,
            y + 4.0
        );
    }
    let _ = write!(
        out,
        r#"<text x="{lx:.1}" y="{:.1}" font-size="11">median err</text>"#,
        grid_y - 8.0
    );
    out.push_str("</svg>\n");
    Ok(out)
}
