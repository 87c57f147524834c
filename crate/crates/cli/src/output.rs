//! CSV and SVG emission, plus the invariant checker for simulation CSVs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use uptick_core::dynamics::ScanPoint;
use uptick_core::{StepOutcome, CLEARING_TOLERANCE};

use crate::error::{CliError, CliResult};

pub const SIMULATION_COLUMNS: &str = "t,x,p,m,n1,n2,z1,z2,region,R_t,U1,U2";
pub const SCAN_COLUMNS: &str = "beta,sample_index,x_sample,lyapunov,attractor_id,ic_family";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn simulation_row(out: &mut String, t: usize, o: &StepOutcome, pbar: f64) {
    let _ = writeln!(
        out,
        "{t},{},{},{},{},{},{},{},{},{},{},{}",
        num(o.x),
        num(pbar + o.x),
        num(o.m),
        num(o.fractions.0),
        num(o.fractions.1),
        num(o.demands.0),
        num(o.demands.1),
        o.region.as_str(),
        num(o.excess_return),
        num(o.net_profits.0),
        num(o.net_profits.1),
    );
}

/// Rows for one scan point; an unbounded point gets a single `NaN` sample.
pub fn scan_rows(out: &mut String, point: &ScanPoint) {
    let lyapunov = num(point.lyapunov.unwrap_or(f64::NAN));
    let family = point.ic_family.as_str();
    if !point.is_bounded() {
        let _ = writeln!(
            out,
            "{},0,{},{lyapunov},{},{family}",
            num(point.beta),
            num(f64::NAN),
            point.attractor_id
        );
        return;
    }
    for (k, x) in point.samples.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{k},{},{lyapunov},{},{family}",
            num(point.beta),
            num(*x),
            point.attractor_id
        );
    }
}

/// Outcome of [`verify_simulation_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct CsvCheck {
    pub rows: usize,
    pub max_residual: f64,
    /// `(line, reason)` for every failing row.
    pub failures: Vec<(usize, String)>,
}

impl CsvCheck {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Replays a simulation CSV through the clearing invariants: per-capita
/// demand equals supply, fractions match `m`, and every restricted region
/// shows its zero and nonnegative demands.
pub fn verify_simulation_csv(text: &str) -> CliResult<CsvCheck> {
    let header_value = |key: &str| {
        text.lines()
            .take_while(|l| l.starts_with('#'))
            .find_map(|l| l.strip_prefix(&format!("# {key} = ")))
            .and_then(|v| v.parse::<f64>().ok())
    };
    let supply =
        header_value("supply").ok_or_else(|| CliError::config("supply", "missing from the CSV header"))?;
    let mut lines = text.lines().enumerate().skip_while(|(_, l)| l.starts_with('#'));
    match lines.next() {
        Some((_, header)) if header == SIMULATION_COLUMNS => {}
        _ => {
            return Err(CliError::config(
                "columns",
                format!("expected `{SIMULATION_COLUMNS}`"),
            ))
        }
    }
    let mut check = CsvCheck {
        rows: 0,
        max_residual: 0.0,
        failures: Vec::new(),
    };
    for (index, line) in lines {
        let line_no = index + 1;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 12 {
            check
                .failures
                .push((line_no, format!("expected 12 cells, got {}", cells.len())));
            continue;
        }
        let value = |i: usize| cells[i].parse::<f64>().unwrap_or(f64::NAN);
        let (m, n1, n2, z1, z2) = (value(3), value(4), value(5), value(6), value(7));
        check.rows += 1;
        let residual = (n1 * z1 + n2 * z2 - supply).abs();
        check.max_residual = check.max_residual.max(residual);
        if !(residual < CLEARING_TOLERANCE) {
            check
                .failures
                .push((line_no, format!("clearing residual {residual:e}")));
        }
        if !((n1 - n2 - m).abs() < 1e-15 && (n1 + n2 - 1.0).abs() < 1e-15) {
            check
                .failures
                .push((line_no, "fractions inconsistent with m".into()));
        }
        let ok = match cells[8] {
            "Z1" => z1 == 0.0 && z2 >= 0.0,
            "Z2" => z2 == 0.0 && z1 >= 0.0,
            "Z0" => z1 >= 0.0 && z2 >= 0.0,
            "U" | "UNCONSTRAINED" => true,
            other => {
                check
                    .failures
                    .push((line_no, format!("unknown region `{other}`")));
                true
            }
        };
        if !ok {
            check.failures.push((
                line_no,
                format!("demands ({z1}, {z2}) violate region {}", cells[8]),
            ));
        }
    }
    Ok(check)
}

const WIDTH: f64 = 800.0;
const TOP: (f64, f64) = (20.0, 380.0);
const BOTTOM: (f64, f64) = (420.0, 580.0);
const LEFT: f64 = 60.0;
const RIGHT: f64 = 780.0;

fn extent(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if lo > hi {
        return None;
    }
    let pad = if hi > lo { 0.0 } else { 0.5 * lo.abs().max(1.0) };
    Some((lo - pad, hi + pad))
}

fn scale(v: f64, (lo, hi): (f64, f64), (a, b): (f64, f64)) -> f64 {
    a + (v - lo) / (hi - lo) * (b - a)
}

/// Bifurcation scatter of `(β, x)` over a `(β, Λ)` trace.
pub fn scan_svg(points: &[ScanPoint], title: &str) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"600\" viewBox=\"0 0 {WIDTH} 600\">"
    );
    let _ = writeln!(svg, "<rect width=\"{WIDTH}\" height=\"600\" fill=\"white\"/>");
    let _ = writeln!(svg, "<text x=\"{LEFT}\" y=\"14\" font-size=\"12\">{title}</text>");
    let Some(betas) = extent(points.iter().map(|p| p.beta)) else {
        svg.push_str("</svg>\n");
        return svg;
    };
    let xs = extent(points.iter().flat_map(|p| p.samples.iter().copied()));
    let lyap = extent(points.iter().filter_map(|p| p.lyapunov));
    let horizontal = (LEFT, RIGHT);
    for (panel, label) in [(TOP, "x"), (BOTTOM, "L")] {
        let _ = writeln!(
            svg,
            "<rect x=\"{LEFT}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
            panel.0,
            RIGHT - LEFT,
            panel.1 - panel.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"10\" y=\"{:.1}\" font-size=\"12\">{label}</text>",
            0.5 * (panel.0 + panel.1)
        );
    }
    if let Some(xs) = xs {
        for p in points.iter().filter(|p| p.is_bounded()) {
            let cx = scale(p.beta, betas, horizontal);
            for x in &p.samples {
                let cy = scale(*x, xs, (TOP.1, TOP.0));
                let _ = writeln!(svg, "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"0.6\"/>");
            }
        }
    }
    if let Some(lyap) = lyap {
        let zero = scale(0.0, lyap, (BOTTOM.1, BOTTOM.0));
        if (BOTTOM.0..=BOTTOM.1).contains(&zero) {
            let _ = writeln!(
                svg,
                "<line x1=\"{LEFT}\" y1=\"{zero:.2}\" x2=\"{RIGHT}\" y2=\"{zero:.2}\" stroke=\"gray\"/>"
            );
        }
        let trace: Vec<String> = points
            .iter()
            .filter_map(|p| p.lyapunov.filter(|l| l.is_finite()).map(|l| (p.beta, l)))
            .map(|(b, l)| {
                format!(
                    "{:.2},{:.2}",
                    scale(b, betas, horizontal),
                    scale(l, lyap, (BOTTOM.1, BOTTOM.0))
                )
            })
            .collect();
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"red\" stroke-width=\"0.8\" points=\"{}\"/>",
            trace.join(" ")
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{LEFT}\" y=\"596\" font-size=\"12\">beta {} .. {}</text>",
        betas.0, betas.1
    );
    svg.push_str("</svg>\n");
    svg
}
