//! Text and SVG renderings of episode traces.

use std::fmt::Write as _;

use crate::episode::{EpisodeTrace, TraceFrame};

const GRID_COLS: usize = 64;
const GRID_ROWS: usize = 13;
/// Metres per character horizontally and vertically.
const CELL_X: f64 = 2.0;
const CELL_Y: f64 = 1.75;

fn id_glyph(id: u32) -> char {
    char::from_digit(id % 36, 36).expect("digit in range")
}

/// Top-down grid centered on the ego: `E` is the ego, digits/letters are vehicle ids modulo
/// 36 and `w` are walkers. North is up.
fn render_grid(f: &TraceFrame) -> Vec<String> {
    let mut grid = vec![vec!['.'; GRID_COLS]; GRID_ROWS];
    let x0 = f.ego.x - 0.25 * GRID_COLS as f64 * CELL_X;
    let y_top = f.ego.y + 0.5 * GRID_ROWS as f64 * CELL_Y;
    let mut put = |x: f64, y: f64, c: char| {
        let col = ((x - x0) / CELL_X).floor();
        let row = ((y_top - y) / CELL_Y).floor();
        if col >= 0.0 && row >= 0.0 && (col as usize) < GRID_COLS && (row as usize) < GRID_ROWS {
            grid[row as usize][col as usize] = c;
        }
    };
    for w in &f.walkers {
        put(w.x, w.y, 'w');
    }
    for sv in &f.svs {
        put(sv.x, sv.y, id_glyph(sv.id));
    }
    put(f.ego.x, f.ego.y, 'E');
    grid.into_iter().map(|r| r.into_iter().collect()).collect()
}

pub fn render_frame(f: &TraceFrame) -> String {
    let mut s = String::new();
    let r = &f.reward;
    let _ = writeln!(
        s,
        "episode {} decision {} t={:.2}s action={:?}{} status={:?}",
        f.episode,
        f.decision,
        f.time,
        f.action,
        if f.fallback { " (fallback)" } else { "" },
        f.status
    );
    let _ = writeln!(
        s,
        "ego x={:.2} y={:.2} v={:.2} | reward total={:.4} success={:.4} safety={:.4} efficiency={:.4} comfort={:.4} interaction={:.4}",
        f.ego.x, f.ego.y, f.ego.speed, r.total, r.success, r.safety, r.efficiency, r.comfort, r.interaction
    );
    if let Some(root) = &f.root {
        let visits: Vec<String> = root.iter().map(|e| format!("{}:{}", e.action, e.n)).collect();
        let _ = writeln!(s, "root visits {}", visits.join(" "));
    }
    for line in render_grid(f) {
        s.push_str(&line);
        s.push('\n');
    }
    s
}

/// One block per frame separated by blank lines; an empty trace renders as the empty string.
pub fn render_text(trace: &EpisodeTrace) -> String {
    trace
        .frames
        .iter()
        .map(render_frame)
        .collect::<Vec<_>>()
        .join("\n")
}

const W: f64 = 640.0;
const H: f64 = 320.0;
const PAD: f64 = 48.0;

fn line_plot(title: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{title}</text>"#, W / 2.0);
    if !points.is_empty() {
        let (x_lo, x_hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
        let (y_lo, y_hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
        let y_lo = y_lo.min(0.0);
        let sx = |x: f64| PAD + (x - x_lo) / (x_hi - x_lo).max(1e-9) * (W - 2.0 * PAD);
        let sy = |y: f64| H - PAD - (y - y_lo) / (y_hi - y_lo).max(1e-9) * (H - 2.0 * PAD);
        let path: Vec<String> = points.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{PAD}" y="{}" font-size="11">{x_lo:.1}</text><text x="{}" y="{}" font-size="11" text-anchor="end">{x_hi:.1} s</text>"#,
            H - PAD + 16.0,
            W - PAD,
            H - PAD + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="4" y="{}" font-size="11">{y_hi:.2}</text><text x="4" y="{}" font-size="11">{y_lo:.2}</text>"#,
            PAD,
            H - PAD
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{0}" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    let _ = writeln!(s, r#"<text x="12" y="{}" font-size="12" transform="rotate(-90 12 {})">{y_label}</text>"#, H / 2.0, H / 2.0);
    s.push_str("</svg>\n");
    s
}

pub fn speed_svg(trace: &EpisodeTrace) -> String {
    let pts: Vec<(f64, f64)> = trace
        .frames
        .iter()
        .flat_map(|f| f.samples.iter().map(|s| (s.time, s.ego_speed)))
        .collect();
    line_plot("Ego speed", "m/s", &pts)
}

pub fn min_distance_svg(trace: &EpisodeTrace) -> String {
    let pts: Vec<(f64, f64)> = trace
        .frames
        .iter()
        .flat_map(|f| f.samples.iter().map(|s| (s.time, s.d_min.min(100.0))))
        .collect();
    line_plot("Minimum distance to other agents", "m", &pts)
}

/// Heat map of root visit fractions: one column per decision, one row per action.
pub fn root_visits_svg(trace: &EpisodeTrace) -> String {
    let rows = trace
        .frames
        .iter()
        .filter_map(|f| f.root.as_ref().map(|r| r.len()))
        .max()
        .unwrap_or(0);
    let cols = trace.frames.len().max(1);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" font-size="14" text-anchor="middle">Root visit distribution</text>"#, W / 2.0);
    if rows > 0 {
        let cw = (W - 2.0 * PAD) / cols as f64;
        let rh = (H - 2.0 * PAD) / rows as f64;
        for (c, f) in trace.frames.iter().enumerate() {
            let Some(root) = &f.root else { continue };
            let total: u32 = root.iter().map(|e| e.n).sum();
            for e in root {
                let frac = if total > 0 { e.n as f64 / total as f64 } else { 0.0 };
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="steelblue" fill-opacity="{:.3}"/>"#,
                    PAD + c as f64 * cw,
                    PAD + e.action as f64 * rh,
                    cw,
                    rh,
                    frac
                );
            }
        }
        for a in 0..rows {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{:.2}" font-size="11" text-anchor="end">a{a}</text>"#,
                PAD - 4.0,
                PAD + (a as f64 + 0.6) * rh
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_trace_renders_empty() {
        assert_eq!(render_text(&EpisodeTrace::default()), "");
    }

    #[test]
    fn glyphs() {
        assert_eq!(id_glyph(3), '3');
        assert_eq!(id_glyph(10), 'a');
        assert_eq!(id_glyph(36), '0');
    }

    #[test]
    fn svgs_are_well_formed_when_empty() {
        let t = EpisodeTrace::default();
        for s in [speed_svg(&t), min_distance_svg(&t), root_visits_svg(&t)] {
            assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        }
    }
}
