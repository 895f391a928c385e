//! Scale-by-location heatmaps of coefficient fields, as standalone SVG.

use std::fmt::Write;

use carleson_core::coefficients::CoefficientField;
use carleson_core::cubes::CubeTree;

const WIDTH: f64 = 800.0;
const ROW: f64 = 28.0;
const MARGIN: f64 = 60.0;

/// Linear ramp from dark blue (0) through teal to yellow (1).
fn color(t: f64) -> String {
    let stops = [(0.0, [33.0, 20.0, 90.0]), (0.5, [30.0, 150.0, 140.0]), (1.0, [250.0, 230.0, 40.0])];
    let t = t.clamp(0.0, 1.0);
    let (a, b) = if t <= 0.5 { (stops[0], stops[1]) } else { (stops[1], stops[2]) };
    let s = (t - a.0) / (b.0 - a.0);
    let c: Vec<u8> = (0..3).map(|i| (a.1[i] + s * (b.1[i] - a.1[i])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// One row per level, one rectangle per cube spanning the locations of its
/// members. `location[i]` places point `i` on the horizontal axis.
pub fn heatmap(tree: &CubeTree, field: &CoefficientField, location: &[f64]) -> String {
    let lo = location.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = location.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let vmax = field
        .entries
        .iter()
        .filter_map(|e| e.value)
        .fold(0.0, f64::max);
    let vmax = if vmax > 0.0 { vmax } else { 1.0 };
    let levels: Vec<i32> = tree.levels().collect();
    let height = 2.0 * MARGIN + ROW * levels.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{height}" viewBox="0 0 {w} {height}">"#,
        w = WIDTH + 2.0 * MARGIN
    );
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="14">{} (max {vmax:.4}; grey = flagged)</text>"#,
        MARGIN / 2.0,
        field.kind.name()
    );
    for e in &field.entries {
        let members = &tree.cubes[e.cube].members;
        if members.is_empty() {
            continue;
        }
        let (a, b) = members.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &i| {
            (a.min(location[i]), b.max(location[i]))
        });
        let row = (e.level - levels[0]) as f64;
        let x = MARGIN + WIDTH * (a - lo) / span;
        let w = (WIDTH * (b - a) / span).max(1.0);
        let fill = match e.value {
            Some(v) => color(v / vmax),
            None => "#b0b0b0".to_string(),
        };
        let _ = writeln!(
            s,
            r#"<rect x="{x:.3}" y="{:.3}" width="{w:.3}" height="{:.3}" fill="{fill}"><title>cube {} level {} value {}</title></rect>"#,
            MARGIN + ROW * row,
            ROW - 2.0,
            e.cube,
            e.level,
            e.value.map(|v| format!("{v:.6}")).unwrap_or_else(|| "flagged".into())
        );
    }
    for (r, k) in levels.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="4" y="{:.3}" font-family="sans-serif" font-size="11">k = {k}</text>"#,
            MARGIN + ROW * r as f64 + ROW * 0.6
        );
    }
    s.push_str("</svg>\n");
    s
}
