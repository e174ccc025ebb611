//! Accuracy-vs-epoch chart as a self-contained SVG.

use std::fmt::Write as _;

use leafnet::model::{best_epoch, EpochMetrics};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 220.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

pub struct Run {
    pub name: String,
    pub rows: Vec<EpochMetrics>,
}

struct Frame {
    first: f64,
    last: f64,
}

impl Frame {
    fn x(&self, epoch: usize) -> f64 {
        let span = (self.last - self.first).max(1.0);
        let t = if self.last > self.first {
            (epoch as f64 - self.first) / span
        } else {
            0.5
        };
        LEFT + t * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, acc: f64) -> f64 {
        HEIGHT - BOTTOM - acc.clamp(0.0, 1.0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Two `<path>` curves per run (solid train, dashed validation) with a
/// marker per epoch.
pub fn render_svg(runs: &[Run]) -> String {
    let epochs = runs.iter().flat_map(|r| r.rows.iter().map(|m| m.epoch));
    let first = epochs.clone().min().unwrap_or(1) as f64;
    let last = epochs.max().unwrap_or(1) as f64;
    let f = Frame { first, last };
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);

    for i in 0..=5 {
        let acc = i as f64 / 5.0;
        let y = f.y(acc);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{y}" x2="{x0}" y2="{y}" stroke="black"/>"#,
            x0 - 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{acc:.1}</text>"#,
            x0 - 8.0,
            y + 4.0
        );
    }
    let span = (last - first) as usize;
    let step = (span / 10).max(1);
    let mut e = first as usize;
    while e as f64 <= last {
        let x = f.x(e);
        let _ = writeln!(
            s,
            r#"<line x1="{x}" y1="{y0}" x2="{x}" y2="{}" stroke="black"/>"#,
            y0 + 5.0
        );
        let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{e}</text>"#, y0 + 18.0);
        e += step;
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">epoch</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">accuracy</text>"#,
        (y0 + y1) / 2.0
    );

    for (k, run) in runs.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let name = escape(&run.name);
        for (label, dash, acc) in [
            (
                "train",
                "",
                (|m: &EpochMetrics| m.train_accuracy) as fn(&EpochMetrics) -> f64,
            ),
            ("val", r#" stroke-dasharray="6 4""#, |m: &EpochMetrics| m.val_accuracy),
        ] {
            let mut d = String::new();
            for (i, m) in run.rows.iter().enumerate() {
                let _ = write!(
                    d,
                    "{}{:.2},{:.2}",
                    if i == 0 { "M" } else { " L" },
                    f.x(m.epoch),
                    f.y(acc(m))
                );
            }
            let _ = writeln!(
                s,
                r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="2"{dash}><title>{name} {label}</title></path>"#
            );
            for m in &run.rows {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                    f.x(m.epoch),
                    f.y(acc(m))
                );
            }
        }
        let ly = TOP + 10.0 + 40.0 * k as f64;
        let lx = x1 + 20.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 25.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">{name} train</text>"#, lx + 30.0, ly + 4.0);
        let ly = ly + 18.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2" stroke-dasharray="6 4"/>"#,
            lx + 25.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">{name} val</text>"#, lx + 30.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

/// One line per run naming the best validation epoch.
pub fn summary(runs: &[Run]) -> String {
    let width = runs.iter().map(|r| r.name.len()).max().unwrap_or(3).max(3);
    let mut s = format!("{:<width$}  best_epoch  val_acc  train_acc  epochs\n", "run");
    for run in runs {
        if let Some(i) = best_epoch(&run.rows) {
            let m = &run.rows[i];
            let _ = writeln!(
                s,
                "{:<width$}  {:>10}  {:>7.4}  {:>9.4}  {:>6}",
                run.name,
                m.epoch,
                m.val_accuracy,
                m.train_accuracy,
                run.rows.len()
            );
        }
    }
    s
}
