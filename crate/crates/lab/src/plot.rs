//! Hand-rolled SVG plots: one file per metric, mean ± std band per
//! (loss, augmentation) variant, shot count on a log-scaled x axis with the
//! full-data task pinned one slot past the largest numeric shot.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiment::{CellAggregate, LossName, Regime, Shot};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 42.0;
const MARGIN_BOTTOM: f64 = 58.0;

/// Gap (in log10 units) between the largest numeric shot and the `all` slot.
const ALL_GAP: f64 = 0.75;

const PALETTE: [&str; 4] = ["#4c72b0", "#55a868", "#dd8452", "#c44e52"];

/// Log-scale axis position of a shot. Numeric shots sit at `log10(k)`; the
/// full-data task sits a fixed gap past the largest numeric shot.
pub fn shot_position(shot: Shot, max_numeric: Option<usize>) -> f64 {
    match shot {
        Shot::K(k) => (k as f64).log10(),
        Shot::All => match max_numeric {
            Some(k) => (k as f64).log10() + ALL_GAP,
            None => 0.0,
        },
    }
}

/// Affine map from axis positions to pixel coordinates.
#[derive(Debug, Clone, Copy)]
pub struct PlotScale {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl PlotScale {
    pub fn x_to_px(&self, x: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(1e-9);
        MARGIN_LEFT + (x - self.x_min) / span * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    pub fn y_to_px(&self, y: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(1e-9);
        HEIGHT - MARGIN_BOTTOM - (y - self.y_min) / span * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

#[derive(Debug, Clone)]
pub struct SeriesPoint {
    pub x: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub points: Vec<SeriesPoint>,
}

fn fmt_px(v: f64) -> String {
    format!("{:.2}", v)
}

/// Render one metric chart.
pub fn render_svg(title: &str, x_ticks: &[(f64, String)], series: &[Series]) -> String {
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    for &(x, _) in x_ticks {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
    }
    let pad = 0.04 * (x_max - x_min).max(0.5);
    let mut y_lo: f64 = 0.0;
    let mut y_hi: f64 = 1.0;
    for s in series {
        for p in &s.points {
            y_lo = y_lo.min(p.mean - p.std);
            y_hi = y_hi.max(p.mean + p.std);
        }
    }
    let scale = PlotScale {
        x_min: x_min - pad,
        x_max: x_max + pad,
        y_min: (y_lo - 0.02).max(-1.0),
        y_max: (y_hi + 0.02).min(1.05),
    };

    let mut svg = String::new();
    write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"13\">\n"
    )
    .unwrap();
    writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>").unwrap();
    writeln!(
        svg,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{title}</text>",
        WIDTH / 2.0
    )
    .unwrap();

    // Horizontal grid and y ticks every 0.2.
    let mut y = (scale.y_min / 0.2).ceil() * 0.2;
    while y <= scale.y_max + 1e-9 {
        let py = scale.y_to_px(y);
        writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\"/>",
            fmt_px(MARGIN_LEFT),
            fmt_px(py),
            fmt_px(WIDTH - MARGIN_RIGHT),
            fmt_px(py)
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y:.1}</text>",
            fmt_px(MARGIN_LEFT - 8.0),
            fmt_px(py + 4.0)
        )
        .unwrap();
        y += 0.2;
    }

    // X ticks (log-positioned shot labels).
    for (x, label) in x_ticks {
        let px = scale.x_to_px(*x);
        writeln!(
            svg,
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#bbbbbb\"/>",
            fmt_px(px),
            fmt_px(HEIGHT - MARGIN_BOTTOM),
            fmt_px(HEIGHT - MARGIN_BOTTOM + 6.0)
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{label}</text>",
            fmt_px(px),
            fmt_px(HEIGHT - MARGIN_BOTTOM + 22.0)
        )
        .unwrap();
    }
    writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">shots (log scale)</text>",
        fmt_px((MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0),
        fmt_px(HEIGHT - 14.0)
    )
    .unwrap();

    // Axes.
    writeln!(
        svg,
        "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>",
        fmt_px(MARGIN_LEFT),
        fmt_px(MARGIN_TOP),
        fmt_px(HEIGHT - MARGIN_BOTTOM)
    )
    .unwrap();
    writeln!(
        svg,
        "<line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"black\"/>",
        fmt_px(MARGIN_LEFT),
        fmt_px(WIDTH - MARGIN_RIGHT),
        fmt_px(HEIGHT - MARGIN_BOTTOM)
    )
    .unwrap();

    // Bands, lines, points.
    for s in series {
        if s.points.is_empty() {
            continue;
        }
        let mut band = String::new();
        for p in &s.points {
            write!(
                band,
                "{},{} ",
                fmt_px(scale.x_to_px(p.x)),
                fmt_px(scale.y_to_px(p.mean + p.std))
            )
            .unwrap();
        }
        for p in s.points.iter().rev() {
            write!(
                band,
                "{},{} ",
                fmt_px(scale.x_to_px(p.x)),
                fmt_px(scale.y_to_px(p.mean - p.std))
            )
            .unwrap();
        }
        writeln!(
            svg,
            "<polygon points=\"{}\" fill=\"{}\" opacity=\"0.15\"/>",
            band.trim_end(),
            s.color
        )
        .unwrap();

        let line: Vec<String> = s
            .points
            .iter()
            .map(|p| {
                format!(
                    "{},{}",
                    fmt_px(scale.x_to_px(p.x)),
                    fmt_px(scale.y_to_px(p.mean))
                )
            })
            .collect();
        writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>",
            line.join(" "),
            s.color
        )
        .unwrap();
        for p in &s.points {
            writeln!(
                svg,
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{}\"/>",
                fmt_px(scale.x_to_px(p.x)),
                fmt_px(scale.y_to_px(p.mean)),
                s.color
            )
            .unwrap();
        }
    }

    // Legend.
    for (i, s) in series.iter().enumerate() {
        let ly = MARGIN_TOP + 16.0 * i as f64 + 8.0;
        writeln!(
            svg,
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"4\" fill=\"{}\"/>",
            fmt_px(MARGIN_LEFT + 10.0),
            fmt_px(ly - 4.0),
            s.color
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\">{}</text>",
            fmt_px(MARGIN_LEFT + 28.0),
            fmt_px(ly),
            s.label
        )
        .unwrap();
    }

    svg.push_str("</svg>\n");
    svg
}

fn variant_label(loss: LossName, dipa: bool) -> String {
    let base = match loss {
        LossName::Ce => "CE",
        LossName::Fl => "FL",
    };
    if dipa {
        format!("{base}+DiPA")
    } else {
        base.to_string()
    }
}

/// Write `<regime>_<metric>.svg` files for accuracy, kappa, and macro-F1.
pub fn write_metric_plots(cells: &[CellAggregate], out_dir: &Path) -> Result<()> {
    let mut regimes: Vec<Regime> = cells.iter().map(|c| c.regime).collect();
    regimes.sort();
    regimes.dedup();

    for regime in regimes {
        let regime_cells: Vec<&CellAggregate> =
            cells.iter().filter(|c| c.regime == regime).collect();
        let max_numeric = regime_cells
            .iter()
            .filter_map(|c| match c.shot() {
                Shot::K(k) => Some(k),
                Shot::All => None,
            })
            .max();
        let mut shot_keys: Vec<(u8, usize)> =
            regime_cells.iter().map(|c| c.shot_key).collect();
        shot_keys.sort();
        shot_keys.dedup();
        let x_ticks: Vec<(f64, String)> = shot_keys
            .iter()
            .map(|&sk| {
                let shot = if sk.0 == 0 { Shot::K(sk.1) } else { Shot::All };
                (shot_position(shot, max_numeric), shot.to_string())
            })
            .collect();

        for (metric, pick) in [
            (
                "accuracy",
                (|c: &CellAggregate| (c.accuracy_mean, c.accuracy_std))
                    as fn(&CellAggregate) -> (f64, f64),
            ),
            ("kappa", |c| (c.kappa_mean, c.kappa_std)),
            ("macro_f1", |c| (c.macro_f1_mean, c.macro_f1_std)),
        ] {
            let mut variants: BTreeMap<(LossName, bool), Vec<SeriesPoint>> = BTreeMap::new();
            for cell in &regime_cells {
                let (mean, std) = pick(cell);
                variants
                    .entry((cell.loss, cell.dipa))
                    .or_default()
                    .push(SeriesPoint {
                        x: shot_position(cell.shot(), max_numeric),
                        mean,
                        std,
                    });
            }
            let series: Vec<Series> = variants
                .into_iter()
                .enumerate()
                .map(|(i, ((loss, dipa), mut points))| {
                    points.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap());
                    Series {
                        label: variant_label(loss, dipa),
                        color: PALETTE[i % PALETTE.len()],
                        points,
                    }
                })
                .collect();

            let title = format!("{metric} on the test split ({regime})");
            let svg = render_svg(&title, &x_ticks, &series);
            let path = out_dir.join(format!("{regime}_{metric}.svg"));
            fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}
