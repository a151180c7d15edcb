//! Self-contained SVG rendering of throughput-versus-arms curves.
//!
//! One series per density: mean fruits-per-second over replications on the
//! y axis, total arm count on the x axis, sample-stddev error bars where a
//! point has at least two successful replications. The output is a single
//! standalone SVG string with no external assets.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::sweep::MetricsRecord;

/// Rendered figure plus the counts a caller usually reports.
#[derive(Debug, Clone)]
pub struct Figure {
    pub svg: String,
    /// Number of density series drawn.
    pub series: usize,
    /// Total points drawn across all series.
    pub points: usize,
}

/// No record carried a throughput value, so there is nothing to draw.
#[derive(Debug, thiserror::Error)]
#[error("no successful replications to plot")]
pub struct EmptyMetrics;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 160.0;
const MARGIN_TOP: f64 = 24.0;
const MARGIN_BOTTOM: f64 = 48.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

struct Point {
    arms: u32,
    mean: f64,
    stddev: Option<f64>,
}

/// Group successful rows by density and arm count and render the figure.
pub fn render_fpt_svg(records: &[MetricsRecord]) -> Result<Figure, EmptyMetrics> {
    // Keyed by the density's bit pattern: for the positive finite values a
    // metrics file holds, bit order equals numeric order, and it gives a
    // total Ord that f64 itself lacks.
    let mut by_density: BTreeMap<u64, BTreeMap<u32, Vec<f64>>> = BTreeMap::new();
    for record in records {
        if let Some(fpt) = record.fpt {
            by_density
                .entry(record.density.to_bits())
                .or_default()
                .entry(record.arms)
                .or_default()
                .push(fpt);
        }
    }
    if by_density.is_empty() {
        return Err(EmptyMetrics);
    }

    let series: Vec<(f64, Vec<Point>)> = by_density
        .into_iter()
        .map(|(bits, by_arms)| {
            let points = by_arms
                .into_iter()
                .map(|(arms, fpts)| {
                    let mean = fpts.iter().sum::<f64>() / fpts.len() as f64;
                    let stddev = (fpts.len() >= 2).then(|| {
                        (fpts.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                            / (fpts.len() - 1) as f64)
                            .sqrt()
                    });
                    Point { arms, mean, stddev }
                })
                .collect();
            (f64::from_bits(bits), points)
        })
        .collect();

    let mut arm_ticks: Vec<u32> =
        series.iter().flat_map(|(_, pts)| pts.iter().map(|p| p.arms)).collect();
    arm_ticks.sort_unstable();
    arm_ticks.dedup();
    let y_top = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|p| p.mean + p.stddev.unwrap_or(0.0)))
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE)
        * 1.08;
    let y_step = nice_step(y_top);

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let arm_span = (arm_ticks[arm_ticks.len() - 1] - arm_ticks[0]).max(1) as f64;
    let x_of = |arms: u32| MARGIN_LEFT + (arms - arm_ticks[0]) as f64 / arm_span * plot_w;
    let y_of = |v: f64| MARGIN_TOP + (1.0 - v / y_top) * plot_h;

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(svg, r##"<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);

    // Gridlines and y tick labels.
    let mut v = y_step;
    while v < y_top {
        let y = y_of(v);
        let _ = write!(
            svg,
            r##"<line x1="{MARGIN_LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/>"##,
            MARGIN_LEFT + plot_w
        );
        let _ = write!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 8.0,
            y + 4.0,
            tick_label(v, y_step)
        );
        v += y_step;
    }

    // Axes.
    let _ = write!(
        svg,
        r##"<path d="M {l} {t} V {b} H {r}" fill="none" stroke="#333333"/>"##,
        l = MARGIN_LEFT,
        t = MARGIN_TOP,
        b = MARGIN_TOP + plot_h,
        r = MARGIN_LEFT + plot_w
    );

    // X ticks at every arm count present.
    for &arms in &arm_ticks {
        let x = x_of(arms);
        let base = MARGIN_TOP + plot_h;
        let _ = write!(
            svg,
            r##"<line x1="{x:.1}" y1="{base}" x2="{x:.1}" y2="{:.1}" stroke="#333333"/>"##,
            base + 5.0
        );
        let _ = write!(
            svg,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{arms}</text>"#,
            base + 18.0
        );
    }

    // Axis labels.
    let _ = write!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">arms (R × C)</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = write!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">fruits per second</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );

    let mut total_points = 0;
    for (idx, (density, points)) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let path: Vec<String> =
            points.iter().map(|p| format!("{:.1},{:.1}", x_of(p.arms), y_of(p.mean))).collect();
        let _ = write!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.join(" ")
        );
        for p in points {
            let (x, y) = (x_of(p.arms), y_of(p.mean));
            if let Some(sd) = p.stddev {
                let (lo, hi) = (y_of(p.mean - sd), y_of(p.mean + sd));
                let _ = write!(
                    svg,
                    r#"<g class="errbar" stroke="{color}"><line x1="{x:.1}" y1="{lo:.1}" x2="{x:.1}" y2="{hi:.1}"/><line x1="{:.1}" y1="{lo:.1}" x2="{:.1}" y2="{lo:.1}"/><line x1="{:.1}" y1="{hi:.1}" x2="{:.1}" y2="{hi:.1}"/></g>"#,
                    x - 4.0,
                    x + 4.0,
                    x - 4.0,
                    x + 4.0
                );
            }
            let _ = write!(svg, r#"<circle cx="{x:.1}" cy="{y:.1}" r="3.5" fill="{color}"/>"#);
            total_points += 1;
        }
        // Legend entry.
        let (lx, ly) = (MARGIN_LEFT + plot_w + 16.0, MARGIN_TOP + 16.0 + idx as f64 * 20.0);
        let _ = write!(
            svg,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="1.5"/>"#,
            lx + 20.0
        );
        let _ = write!(
            svg,
            r#"<text x="{:.1}" y="{:.1}">density {density}</text>"#,
            lx + 26.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>");
    Ok(Figure { svg, series: series.len(), points: total_points })
}

/// Largest 1/2/5 × 10^k step that fits at least four ticks into `top`.
fn nice_step(top: f64) -> f64 {
    let raw = top / 4.0;
    let mag = 10.0_f64.powf(raw.log10().floor());
    for m in [5.0, 2.0, 1.0] {
        if m * mag <= raw {
            return m * mag;
        }
    }
    mag / 2.0
}

/// Print a tick value with just enough decimals for its step size.
fn tick_label(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10().floor()) as usize };
    format!("{v:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(arms: u32, density: f64, fpt: Option<f64>) -> MetricsRecord {
        MetricsRecord {
            rows: arms,
            cells: 1,
            arms,
            density,
            seed: 0,
            count: 10,
            v: fpt.map(|_| 0.05),
            makespan: fpt.map(|f| 10.0 / f),
            fpt,
            plan_ms: 0,
            lp_ms: 0,
            strategy: fpt.map_or_else(String::new, |_| "topmost".into()),
        }
    }

    #[test]
    fn one_series_per_density_one_point_per_arm_count() {
        let mut records = Vec::new();
        for (i, density) in [5.0, 10.0, 30.0, 100.0].into_iter().enumerate() {
            for arms in [1, 2, 3, 6, 9, 12] {
                for rep in 0..2 {
                    records.push(record(arms, density, Some(0.1 * (i + 1) as f64 + rep as f64 * 0.01)));
                }
            }
        }
        let figure = render_fpt_svg(&records).unwrap();
        assert_eq!(figure.series, 4);
        assert_eq!(figure.points, 24);
        assert!(figure.svg.starts_with("<svg"));
        assert!(figure.svg.contains("density 100"));
        assert!(figure.svg.contains("errbar"), "two reps per point have a stddev");
    }

    #[test]
    fn failed_rows_are_skipped_and_all_failed_is_an_error() {
        let records = vec![record(1, 10.0, None), record(2, 10.0, None)];
        assert!(render_fpt_svg(&records).is_err());
        let mut with_one = records;
        with_one.push(record(3, 10.0, Some(0.2)));
        let figure = render_fpt_svg(&with_one).unwrap();
        assert_eq!((figure.series, figure.points), (1, 1));
    }

    #[test]
    fn single_replication_points_draw_without_error_bars() {
        let records = vec![record(1, 30.0, Some(0.17)), record(2, 30.0, Some(0.3))];
        let figure = render_fpt_svg(&records).unwrap();
        assert_eq!(figure.points, 2);
        assert!(!figure.svg.contains("errbar"));
    }

    #[test]
    fn densities_legend_in_ascending_order() {
        let records = vec![record(1, 30.0, Some(0.2)), record(1, 5.0, Some(0.1))];
        let figure = render_fpt_svg(&records).unwrap();
        let five = figure.svg.find("density 5").unwrap();
        let thirty = figure.svg.find("density 30").unwrap();
        assert!(five < thirty);
    }
}
