//! The four subcommands. Each returns the files it wrote; `equilibria` also
//! returns its text report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use uptick_core::dynamics::{
    assign_attractor_ids, attractor_stats, bifurcation_scan, run, AttractorStats, ScanPoint,
};
use uptick_core::equilibria::{
    chartist_thresholds, default_probe_grid, fundamental_equilibrium, fundamental_stability_crossing,
    nonfundamental_equilibria, ns_bifurcation_search, restricted_fixed_points, roc_ns_threshold,
    uniqueness_check, Branch, ChartistRegime, EquilibriumReport,
};
use uptick_core::{Mode, Predictor, StepOutcome};

use crate::config::{suffixed, with_extension, ModeChoice, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{num, scan_rows, scan_svg, simulation_row, write_file, SCAN_COLUMNS, SIMULATION_COLUMNS};

/// Output path for `mode`: the base path itself, or a suffixed sibling when
/// both modes are written.
fn mode_path(cfg: &RunConfig, out: &Path, mode: Mode) -> PathBuf {
    match cfg.mode {
        ModeChoice::Both => suffixed(out, mode.as_str()),
        _ => out.to_path_buf(),
    }
}

fn orbit(cfg: &RunConfig, mode: Mode) -> CliResult<Vec<StepOutcome>> {
    let market = cfg.market(mode);
    let mut state = cfg.opening_state(&market);
    Ok(run(&market, &mut state, 0, cfg.periods, cfg.transient)?)
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    for mode in cfg.mode.modes() {
        let outcomes = orbit(cfg, mode)?;
        let pbar = cfg.market(mode).fundamental_price();
        let mut text = cfg.header("simulate", Some(mode));
        text.push_str(SIMULATION_COLUMNS);
        text.push('\n');
        for (i, o) in outcomes.iter().enumerate() {
            simulation_row(&mut text, cfg.transient + i + 1, o, pbar);
        }
        let path = mode_path(cfg, out, mode);
        write_file(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}

/// Every family over the grid, in grid order per family.
pub fn scan(cfg: &RunConfig, mode: Mode) -> CliResult<Vec<ScanPoint>> {
    let market = cfg.market(mode);
    let grid = cfg.beta_grid();
    let settings = cfg.scan_settings();
    let mut points = Vec::with_capacity(grid.len() * cfg.families.len());
    for family in &cfg.families {
        points.extend(bifurcation_scan(&market, &grid, *family, &settings)?);
    }
    assign_attractor_ids(&mut points, cfg.dedup_tolerance);
    Ok(points)
}

pub fn bifurcation(cfg: &RunConfig, out: &Path, svg: bool) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    let n = cfg.beta_grid().len();
    for mode in cfg.mode.modes() {
        let points = scan(cfg, mode)?;
        let mut text = cfg.header("bifurcation", Some(mode));
        text.push_str(SCAN_COLUMNS);
        text.push('\n');
        // Grid index first, then family.
        for i in 0..n {
            for point in points.iter().skip(i).step_by(n) {
                scan_rows(&mut text, point);
            }
        }
        let path = mode_path(cfg, out, mode);
        write_file(&path, &text)?;
        if svg {
            let svg_path = with_extension(&path, "svg");
            let title = format!("bifurcation, {mode}");
            write_file(&svg_path, &scan_svg(&points, &title))?;
            written.push(path);
            written.push(svg_path);
        } else {
            written.push(path);
        }
    }
    Ok(written)
}

const STATS_COLUMNS: &str = "metric,constrained,unconstrained,delta,ratio";

fn stats_metrics(s: &AttractorStats) -> [(&'static str, f64); 7] {
    [
        ("max_dev", s.max_dev),
        ("min_dev", s.min_dev),
        ("mean_dev", s.mean_dev),
        ("amplitude", s.amplitude()),
        ("peak_count", s.peak_count as f64),
        ("mean_inter_peak", s.mean_inter_peak.unwrap_or(f64::NAN)),
        ("peak_frequency", s.peak_frequency().unwrap_or(f64::NAN)),
    ]
}

/// Paired statistics of the same initial condition with and without the
/// rule, as `(constrained, unconstrained)`.
pub fn paired_stats(cfg: &RunConfig) -> CliResult<(AttractorStats, AttractorStats)> {
    let stats = |mode| -> CliResult<AttractorStats> {
        let xs: Vec<f64> = orbit(cfg, mode)?.iter().map(|o| o.x).collect();
        attractor_stats(&xs, cfg.peak_fraction)
            .ok_or_else(|| CliError::config("periods", "compare needs periods >= 1"))
    };
    Ok((stats(Mode::Constrained)?, stats(Mode::Unconstrained)?))
}

pub fn compare(cfg: &RunConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let (c, u) = paired_stats(cfg)?;
    let mut text = cfg.header("compare", None);
    text.push_str(STATS_COLUMNS);
    text.push('\n');
    for ((name, a), (_, b)) in stats_metrics(&c).into_iter().zip(stats_metrics(&u)) {
        let _ = writeln!(text, "{name},{},{},{},{}", num(a), num(b), num(a - b), num(a / b));
    }
    write_file(out, &text)?;
    Ok(vec![out.to_path_buf()])
}

/// Rows of the equilibria report: `(section, name, value, note)`.
#[derive(Default)]
struct Report {
    rows: Vec<(String, String, f64, String)>,
}

impl Report {
    fn add(&mut self, section: &str, name: &str, value: f64, note: impl Into<String>) {
        self.rows.push((section.into(), name.into(), value, note.into()));
    }

    fn equilibrium(&mut self, eq: &EquilibriumReport) {
        let section = eq.kind.to_string();
        let status = eq.status.to_string();
        if !eq.is_defined() {
            self.add(&section, "status", f64::NAN, status);
            return;
        }
        self.add(&section, "x_bar", eq.x_bar, status.clone());
        self.add(&section, "m_bar", eq.m_bar, "");
        self.add(&section, "z1_bar", eq.demands.0, "");
        self.add(&section, "z2_bar", eq.demands.1, "");
        let verdict = if eq.is_stable() { "stable" } else { "unstable" };
        self.add(&section, "spectral_radius", eq.spectral_radius(), verdict);
        let mut moduli: Vec<f64> = eq.eigenvalues.iter().map(|l| l.norm()).collect();
        moduli.sort_by(|a, b| b.total_cmp(a));
        for (k, m) in moduli.iter().enumerate() {
            self.add(&section, &format!("eigen_modulus_{}", k + 1), *m, "");
        }
    }

    fn csv(&self, header: String) -> String {
        let mut out = header;
        out.push_str("section,name,value,note\n");
        for (section, name, value, note) in &self.rows {
            let _ = writeln!(out, "{section},{name},{},{}", num(*value), csv_field(note));
        }
        out
    }

    fn text(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for (section, name, value, note) in &self.rows {
            if section != current {
                let _ = writeln!(out, "[{section}]");
                current = section;
            }
            let value = if value.is_nan() {
                "-".to_string()
            } else {
                format!("{value}")
            };
            if note.is_empty() {
                let _ = writeln!(out, "  {name:<26} {value}");
            } else {
                let _ = writeln!(out, "  {name:<26} {value:<24} {note}");
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn threshold_formula(name: &str) -> &'static str {
    match name {
        "beta_LP" => "beta_TR / (1 + a*sigma2*s^2*(g-v) / (4*C*(R-1)))",
        "beta_TR" => "ln((R-v)/(g-R)) / C",
        "beta_BC_plus" => "beta_TR / (1 + a*sigma2*s^2*(g-v)*(1-v) / (C*(R-v)^2))",
        "beta_BC_minus" => "beta_TR / (1 - a*sigma2*s^2*(g-v)*(g-1) / (C*(g-R)^2))",
        "x_LP" => "a*sigma2*s / (2*(R-1))",
        "x_BC_plus" => "a*sigma2*s / (R-v)",
        "x_BC_minus" => "-a*sigma2*s / (g-R)",
        "s_BC_minus" => "sqrt(C*(g-R)^2 / (a*sigma2*(g-v)*(g-1)))",
        "beta_NS_plus_comparator" => {
            "(R-1)^2 / (a*sigma2*s^2*(g-R)*(R-v)); beta_TR below it means beta_TR < beta_NS_plus"
        }
        _ => "",
    }
}

fn chartist_section(cfg: &RunConfig, report: &mut Report, v: f64, g: f64) -> CliResult<()> {
    let params = &cfg.params;
    let thresholds = match chartist_thresholds(params, v, g) {
        Ok(t) => t,
        Err(e) => {
            report.add("thresholds", "not_applicable", f64::NAN, e.root().to_string());
            return Ok(());
        }
    };
    let verdict = match thresholds.regime {
        ChartistRegime::FundamentalOnly => "fundamental globally stable (g < R)",
        ChartistRegime::Intermediate => {
            "limit point, transcritical and Neimark-Sacker sequence (R < g < 2R - v)"
        }
        ChartistRegime::StrongTrend => "fundamental unstable for every beta > 0 (g > 2R - v)",
    };
    report.add("thresholds", "regime", f64::NAN, verdict);
    if thresholds.unbounded_warning {
        report.add(
            "thresholds",
            "warning",
            f64::NAN,
            "g > R^2: orbits may be unbounded",
        );
    }
    for (name, value) in thresholds.entries() {
        report.add("thresholds", name, value, threshold_formula(name));
    }
    let (plus, minus) = nonfundamental_equilibria(params, v, g)?;
    report.equilibrium(&plus);
    report.equilibrium(&minus);
    if thresholds.regime != ChartistRegime::FundamentalOnly {
        let searches = [
            ("beta_NS_plus", Branch::Plus, thresholds.beta_lp),
            ("beta_NS_minus", Branch::Minus, thresholds.beta_tr),
        ];
        for (name, branch, start) in searches {
            let lo = start.unwrap_or(0.0);
            let found = if lo < cfg.beta_search_max {
                ns_bifurcation_search(params, v, g, branch, (lo, cfg.beta_search_max))?
            } else {
                None
            };
            let note = format!(
                "numeric, spectral-radius bisection on [{lo}, {}]",
                cfg.beta_search_max
            );
            match found {
                Some(beta) => report.add("neimark_sacker", name, beta, note),
                None => report.add("neimark_sacker", name, f64::NAN, format!("none found; {note}")),
            }
        }
    }
    for (k, fp) in restricted_fixed_points(params, v, g)?.iter().enumerate() {
        let section = format!("restricted_{}_{}", k + 1, fp.region.as_str());
        report.add(&section, "x_bar", fp.x_bar, "unstable by construction");
        report.add(&section, "m_bar", fp.m_bar, "");
        report.add(&section, "z1_bar", fp.demands.0, "");
        report.add(&section, "z2_bar", fp.demands.1, "");
    }
    Ok(())
}

/// Builds the analytics report; returns `(text, csv body without header)`.
fn equilibria_report(cfg: &RunConfig) -> CliResult<Report> {
    let market = cfg.market(Mode::Unconstrained);
    let mut report = Report::default();
    report.add(
        "market",
        "fundamental_price",
        market.fundamental_price(),
        "(mean_dividend - a*sigma2*s) / (R-1)",
    );
    report.add("market", "beta", cfg.params.beta, "");

    report.equilibrium(&fundamental_equilibrium(&market)?);
    let crossing = fundamental_stability_crossing(&market, (0.0, cfg.beta_search_max))?;
    let note = format!(
        "numeric, spectral-radius bisection on [0, {}]",
        cfg.beta_search_max
    );
    match crossing {
        Some(beta) => report.add("fundamental", "stability_loss_beta", beta, note),
        None => report.add(
            "fundamental",
            "stability_loss_beta",
            f64::NAN,
            format!("none found; {note}"),
        ),
    }

    let uniqueness = uniqueness_check(
        cfg.predictors,
        &cfg.params,
        &default_probe_grid(market.fundamental_price()),
    )?;
    let note = if uniqueness.holds() {
        "unique fixed point: every probed slope f(x)/x lies on one side of R"
    } else {
        "non-fundamental equilibria possible: probed slopes straddle R"
    };
    report.add("uniqueness", "probes", uniqueness.probes as f64, note);

    match cfg.predictors {
        (Predictor::Fundamental { reversion }, Predictor::Chartist { trend }) => {
            chartist_section(cfg, &mut report, reversion, trend)?;
        }
        (
            Predictor::Fundamental { .. },
            Predictor::Roc { lag: 2 } | Predictor::SmoothedRoc { lag: 2, .. },
        ) => {
            let beta = roc_ns_threshold(&cfg.params);
            report.add("neimark_sacker", "beta_NS", beta, "ln(R/(2-R)) / C");
        }
        _ => {}
    }
    Ok(report)
}

pub fn equilibria(cfg: &RunConfig, out: &Path) -> CliResult<(String, Vec<PathBuf>)> {
    let report = equilibria_report(cfg)?;
    write_file(out, &report.csv(cfg.header("equilibria", None)))?;
    Ok((report.text(), vec![out.to_path_buf()]))
}
