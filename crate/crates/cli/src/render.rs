use std::collections::BTreeMap;
use std::fmt::Write;

use wafer_spr::wafer::{CellState, WaferMap};

pub const CELL_PX: usize = 10;
pub const FUNCTIONAL_FILL: &str = "#4caf50";
pub const DEFECTIVE_FILL: &str = "#e53935";
/// Cluster fills, reused cyclically from cluster 11 on.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#393b79", "#f0e442",
];

pub fn cluster_fill(cluster: usize) -> &'static str {
    PALETTE[(cluster.max(1) - 1) % PALETTE.len()]
}

/// One square per in-mask chip; outside cells are left blank.
pub fn render_svg(map: &WaferMap, clusters: &BTreeMap<(usize, usize), usize>) -> String {
    let (w, h) = (map.cols() * CELL_PX, map.rows() * CELL_PX);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    for r in 0..map.rows() {
        for c in 0..map.cols() {
            let fill = match map.get(r, c) {
                Some(CellState::Functional) => FUNCTIONAL_FILL,
                Some(CellState::Defective) => clusters
                    .get(&(r, c))
                    .map(|&k| cluster_fill(k))
                    .unwrap_or(DEFECTIVE_FILL),
                _ => continue,
            };
            let _ = writeln!(
                svg,
                r#"<rect x="{}" y="{}" width="{CELL_PX}" height="{CELL_PX}" fill="{fill}"/>"#,
                c * CELL_PX,
                r * CELL_PX
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}
