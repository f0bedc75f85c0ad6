//! Self-contained SVG heatmaps. Output is a pure function of the inputs:
//! no timestamps, no randomness, so re-renders are byte-identical.

use std::fmt::Write;

const WIDTH: f64 = 700.0;
const HEIGHT: f64 = 520.0;
const LEFT: f64 = 84.0;
const TOP: f64 = 48.0;
const RIGHT: f64 = 100.0;
const BOTTOM: f64 = 56.0;

/// A value lattice over the decision rectangle, row-major with release
/// times as rows. `mark` is the lattice index pair to flag with an "x".
pub struct Heatmap<'a> {
    pub title: &'a str,
    pub ts: &'a [f64],
    pub ps: &'a [f64],
    pub values: &'a [f64],
    pub mark: Option<(usize, usize)>,
}

fn lerp(a: f64, b: f64, u: f64) -> f64 {
    a + (b - a) * u
}

/// Three-stop dark-to-bright ramp (perceptually ordered, print friendly).
fn ramp(u: f64) -> String {
    let stops = [(68.0, 1.0, 84.0), (33.0, 145.0, 140.0), (253.0, 231.0, 37.0)];
    let (lo, hi, u) =
        if u < 0.5 { (stops[0], stops[1], u * 2.0) } else { (stops[1], stops[2], u * 2.0 - 1.0) };
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(lo.0, hi.0, u).round() as u8,
        lerp(lo.1, hi.1, u).round() as u8,
        lerp(lo.2, hi.2, u).round() as u8
    )
}

/// Compact deterministic number labels for axes and the color legend.
fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if !(1e-2..1e6).contains(&a) {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Up to five tick indices spread across a lattice axis, deduplicated.
fn tick_indices(n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for k in 0..5 {
        let idx = if n <= 1 { 0 } else { (k * (n - 1) + 2) / 4 };
        if out.last() != Some(&idx) {
            out.push(idx);
        }
    }
    out
}

/// Renders the lattice as an SVG heatmap with axes, a color legend, and an
/// "x" marker on the flagged cell.
pub fn heatmap_svg(h: &Heatmap) -> String {
    let (nt, np) = (h.ts.len(), h.ps.len());
    assert_eq!(h.values.len(), nt * np, "lattice shape mismatch");
    assert!(nt > 0 && np > 0, "empty lattice");
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let (cw, ch) = (pw / nt as f64, ph / np as f64);
    let lo = h.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = h.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;

    let mut s = String::with_capacity(96 * nt * np + 4096);
    writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH:.0}\" height=\"{HEIGHT:.0}\" \
         viewBox=\"0 0 {WIDTH:.0} {HEIGHT:.0}\" font-family=\"Menlo, Consolas, monospace\">"
    )
    .unwrap();
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n");
    writeln!(
        s,
        "<text x=\"{:.1}\" y=\"30\" text-anchor=\"middle\" font-size=\"16\" fill=\"#111\">{}</text>",
        LEFT + pw / 2.0,
        h.title
    )
    .unwrap();

    // cells: price ascends upward, so row j paints at the mirrored y slot
    s.push_str("<g class=\"cells\">\n");
    for (i, _) in h.ts.iter().enumerate() {
        for (j, _) in h.ps.iter().enumerate() {
            let v = h.values[i * np + j];
            let u = if span > 0.0 { (v - lo) / span } else { 0.5 };
            let x = LEFT + i as f64 * cw;
            let y = TOP + (np - 1 - j) as f64 * ch;
            writeln!(
                s,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                cw + 0.05,
                ch + 0.05,
                ramp(u)
            )
            .unwrap();
        }
    }
    s.push_str("</g>\n");
    writeln!(
        s,
        "<rect x=\"{LEFT:.1}\" y=\"{TOP:.1}\" width=\"{pw:.1}\" height=\"{ph:.1}\" \
         fill=\"none\" stroke=\"#333\"/>"
    )
    .unwrap();

    // axis ticks at cell centers
    for idx in tick_indices(nt) {
        let x = LEFT + (idx as f64 + 0.5) * cw;
        let y0 = TOP + ph;
        write!(
            s,
            "<line x1=\"{x:.1}\" y1=\"{y0:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#333\"/>\n\
             <text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"11\" \
             fill=\"#111\">{}</text>\n",
            y0 + 5.0,
            y0 + 18.0,
            fmt_num(h.ts[idx])
        )
        .unwrap();
    }
    for idx in tick_indices(np) {
        let y = TOP + (np - 1 - idx) as f64 * ch + ch / 2.0;
        write!(
            s,
            "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{LEFT:.1}\" y2=\"{y:.1}\" stroke=\"#333\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"11\" \
             fill=\"#111\">{}</text>\n",
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0,
            fmt_num(h.ps[idx])
        )
        .unwrap();
    }
    writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\" \
         fill=\"#111\">release time t1</text>",
        LEFT + pw / 2.0,
        HEIGHT - 12.0
    )
    .unwrap();
    writeln!(
        s,
        "<text x=\"18\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\" fill=\"#111\" \
         transform=\"rotate(-90 18 {:.1})\">price p1</text>",
        TOP + ph / 2.0,
        TOP + ph / 2.0
    )
    .unwrap();

    // color legend
    let bx = LEFT + pw + 28.0;
    let strips = 64;
    let sh = ph / strips as f64;
    for k in 0..strips {
        let u = 1.0 - (k as f64 + 0.5) / strips as f64;
        writeln!(
            s,
            "<rect x=\"{bx:.1}\" y=\"{:.1}\" width=\"14\" height=\"{:.2}\" fill=\"{}\"/>",
            TOP + k as f64 * sh,
            sh + 0.05,
            ramp(u)
        )
        .unwrap();
    }
    write!(
        s,
        "<rect x=\"{bx:.1}\" y=\"{TOP:.1}\" width=\"14\" height=\"{ph:.1}\" fill=\"none\" \
         stroke=\"#333\"/>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" fill=\"#111\">{}</text>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" fill=\"#111\">{}</text>\n",
        bx + 18.0,
        TOP + 10.0,
        fmt_num(hi),
        bx + 18.0,
        TOP + ph,
        fmt_num(lo)
    )
    .unwrap();

    if let Some((i, j)) = h.mark {
        assert!(i < nt && j < np, "marker outside the lattice");
        let x = LEFT + (i as f64 + 0.5) * cw;
        let y = TOP + (np - 1 - j) as f64 * ch + ch / 2.0;
        writeln!(
            s,
            "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"20\" \
             font-weight=\"bold\" fill=\"#ffffff\" stroke=\"#000000\" stroke-width=\"0.8\" \
             paint-order=\"stroke\">x</text>",
            y + 7.0
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell_count(svg: &str) -> usize {
        let start = svg.find("<g class=\"cells\">").unwrap();
        let end = svg[start..].find("</g>").unwrap() + start;
        svg[start..end].matches("<rect").count()
    }

    #[test]
    fn heatmap_renders_every_cell_and_the_marker() {
        let h = Heatmap {
            title: "demo",
            ts: &[0.0, 1000.0, 2000.0],
            ps: &[3000.0, 15000.0],
            values: &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            mark: Some((2, 1)),
        };
        let svg = heatmap_svg(&h);
        assert_eq!(cell_count(&svg), 6);
        assert!(svg.contains(">x</text>"));
        assert!(svg.contains("release time t1"));
        assert!(svg.ends_with("</svg>\n"));
        // the marked cell (2, 1) sits in the top-right cell center
        assert!(svg.contains("<text x=\"514.0\" y=\"159.0\""), "marker position changed");
    }

    #[test]
    fn rendering_is_deterministic_and_flat_surfaces_are_safe() {
        let h = Heatmap {
            title: "flat",
            ts: &[0.0, 1.0],
            ps: &[0.0, 1.0],
            values: &[7.0; 4],
            mark: None,
        };
        let one = heatmap_svg(&h);
        let two = heatmap_svg(&h);
        assert_eq!(one, two);
        assert!(!one.contains("NaN"));
    }

    #[test]
    fn ramp_endpoints_hit_the_stops() {
        assert_eq!(ramp(0.0), "#440154");
        assert_eq!(ramp(1.0), "#fde725");
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(2_840_731.0), "2.84e6");
        assert_eq!(fmt_num(283.4), "283");
    }
}
