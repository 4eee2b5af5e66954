//! Deterministic SVG rendering: fixed canvas, fixed float precision, no
//! timestamps, so identical inputs produce identical bytes.

use drhg::hypergraph::Destruction;
use drhg::instances::Instance;
use std::collections::BTreeSet;
use std::fmt::Write;

const PANEL: f64 = 300.0;
const MARGIN: f64 = 14.0;
const ROUTE_COLORS: &[&str] = &[
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

struct Frame {
    min_x: f64,
    min_y: f64,
    scale: f64,
    x0: f64,
}

impl Frame {
    fn new(inst: &Instance, panel_index: usize) -> Frame {
        let xs = inst.coords.iter().map(|c| c.0);
        let ys = inst.coords.iter().map(|c| c.1);
        let (min_x, max_x) = (xs.clone().fold(f64::INFINITY, f64::min), xs.fold(f64::NEG_INFINITY, f64::max));
        let (min_y, max_y) = (ys.clone().fold(f64::INFINITY, f64::min), ys.fold(f64::NEG_INFINITY, f64::max));
        let side = (max_x - min_x).max(max_y - min_y).max(1e-12);
        Frame {
            min_x,
            min_y,
            scale: (PANEL - 2.0 * MARGIN) / side,
            x0: panel_index as f64 * PANEL,
        }
    }

    fn x(&self, v: f64) -> f64 {
        self.x0 + MARGIN + (v - self.min_x) * self.scale
    }

    /// SVG y grows downward; flip so plots read like the plane.
    fn y(&self, v: f64) -> f64 {
        PANEL - MARGIN - (v - self.min_y) * self.scale
    }
}

fn line(out: &mut String, f: &Frame, a: (f64, f64), b: (f64, f64), style: &str) {
    writeln!(
        out,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" {style}/>"#,
        f.x(a.0),
        f.y(a.1),
        f.x(b.0),
        f.y(b.1)
    )
    .expect("string write");
}

fn node(out: &mut String, f: &Frame, c: (f64, f64), destroyed: bool, depot: bool) {
    let (r, style) = match (depot, destroyed) {
        (true, _) => (5.0, r##"fill="#000" stroke="none""##),
        (false, true) => (4.0, r##"fill="#fff" stroke="#d62728" stroke-width="1.6""##),
        (false, false) => (3.0, r##"fill="#1f77b4" stroke="none""##),
    };
    writeln!(
        out,
        r#"<circle cx="{:.2}" cy="{:.2}" r="{r:.1}" {style}/>"#,
        f.x(c.0),
        f.y(c.1)
    )
    .expect("string write");
}

fn open_svg(panels: usize) -> String {
    let w = panels as f64 * PANEL;
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w:.0} {PANEL:.0}\" width=\"{w:.0}\" height=\"{PANEL:.0}\">\n\
         <rect width=\"{w:.0}\" height=\"{PANEL:.0}\" fill=\"#fff\"/>\n"
    )
}

/// One panel: the tour as closed cycle, one line per edge.
pub fn render_tour(inst: &Instance, order: &[usize]) -> String {
    let mut out = open_svg(1);
    let f = Frame::new(inst, 0);
    out.push_str("<g class=\"panel\">\n");
    let n = order.len();
    for i in 0..n {
        let a = inst.coords[order[i]];
        let b = inst.coords[order[(i + 1) % n]];
        line(&mut out, &f, a, b, r##"stroke="#333" stroke-width="1.2""##);
    }
    for (v, &c) in inst.coords.iter().enumerate() {
        node(&mut out, &f, c, false, inst.capacity.is_some() && v == 0);
    }
    out.push_str("</g>\n</svg>\n");
    out
}

/// One panel: each route in its own color, depot legs included.
pub fn render_plan(inst: &Instance, routes: &[Vec<usize>]) -> String {
    let mut out = open_svg(1);
    let f = Frame::new(inst, 0);
    out.push_str("<g class=\"panel\">\n");
    for (ri, route) in routes.iter().enumerate() {
        let color = ROUTE_COLORS[ri % ROUTE_COLORS.len()];
        let style = format!(r#"stroke="{color}" stroke-width="1.2""#);
        let mut prev = 0usize;
        for &c in route {
            line(&mut out, &f, inst.coords[prev], inst.coords[c], &style);
            prev = c;
        }
        line(&mut out, &f, inst.coords[prev], inst.coords[0], &style);
    }
    for (v, &c) in inst.coords.iter().enumerate() {
        node(&mut out, &f, c, false, v == 0);
    }
    out.push_str("</g>\n</svg>\n");
    out
}

/// Destruction series: per panel the destroyed nodes are highlighted, the
/// dropped tour edges drawn dashed, and the surviving segments kept solid.
pub fn render_trace(inst: &Instance, order: &[usize], panels: &[Destruction]) -> String {
    let mut out = open_svg(panels.len().max(1));
    let n = order.len();
    for (pi, d) in panels.iter().enumerate() {
        let f = Frame::new(inst, pi);
        out.push_str("<g class=\"panel\">\n");
        let destroyed: &BTreeSet<usize> = &d.destroyed;
        for i in 0..n {
            let (u, v) = (order[i], order[(i + 1) % n]);
            let a = inst.coords[u];
            let b = inst.coords[v];
            if destroyed.contains(&u) || destroyed.contains(&v) {
                line(&mut out, &f, a, b, r##"stroke="#bbb" stroke-width="0.8" stroke-dasharray="3 3""##);
            } else {
                line(&mut out, &f, a, b, r##"stroke="#333" stroke-width="1.6""##);
            }
        }
        for (v, &c) in inst.coords.iter().enumerate() {
            node(&mut out, &f, c, destroyed.contains(&v), inst.capacity.is_some() && v == 0);
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}
