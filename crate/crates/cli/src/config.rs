//! Flat `key = value` run configuration.
//!
//! Every key has a default; a config file and `--set` overrides replace
//! them in that order. Output files echo the resolved values as `# key =
//! value` lines after a `# uptick` banner, and such a file can be passed back
//! as `--config` to replay the run.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use uptick_core::dynamics::{point_rng, IcFamily, ScanSettings, Settle};
use uptick_core::{Market, MarketParams, MarketState, Mode, Predictor};

use crate::error::{CliError, CliResult};

pub struct KeySpec {
    pub key: &'static str,
    pub default: &'static str,
    pub doc: &'static str,
}

const fn key(key: &'static str, default: &'static str, doc: &'static str) -> KeySpec {
    KeySpec { key, default, doc }
}

/// Every accepted key, in echo order.
pub const KEYS: &[KeySpec] = &[
    key("gross_return", "1.1", "gross risk-free return R"),
    key("risk_aversion", "1", "risk aversion a"),
    key(
        "variance",
        "1",
        "belief about the variance of excess returns (sigma^2)",
    ),
    key("supply", "0.1", "outside supply per trader s"),
    key("mean_dividend", "1", "mean dividend"),
    key("cost_fundamental", "1", "per-period cost C1 of predictor1"),
    key("cost_other", "0", "per-period cost C2 of predictor2"),
    key("beta", "3", "intensity of choice (simulate, compare, equilibria)"),
    key("allow_high_return", "false", "accept gross_return >= 2"),
    key("predictor1", "fundamental", "fundamental | chartist | roc | sroc"),
    key("predictor2", "chartist", "fundamental | chartist | roc | sroc"),
    key("reversion", "0", "fundamentalist reversion v"),
    key("trend", "1.2", "chartist trend g"),
    key("lag", "2", "rate-of-change lag L"),
    key("confidence", "10", "S-ROC confidence exponent alpha"),
    key(
        "mode",
        "constrained",
        "constrained | unconstrained | both (compare needs both)",
    ),
    key("periods", "100000", "recorded periods T"),
    key("transient", "10000", "discarded periods T0"),
    key(
        "x0",
        "random",
        "opening deviation, or `random` to draw from ic_family",
    ),
    key("m1", "0", "initial fraction difference"),
    key("z1_0", "supply", "demand of type 1 before the opening period"),
    key("z2_0", "supply", "demand of type 2 before the opening period"),
    key("seed", "0", "seed for random initial conditions"),
    key("ic_family", "positive-small", "family used when x0 = random"),
    key("beta_min", "2", "first bifurcation grid value"),
    key("beta_max", "5", "last bifurcation grid value"),
    key("beta_step", "0.01", "bifurcation grid spacing"),
    key("beta_order", "ascending", "ascending | descending grid traversal"),
    key(
        "families",
        "positive-small,negative-small,far-positive,far-negative,continuation",
        "initial-condition families scanned by bifurcation",
    ),
    key("samples", "500", "attractor samples kept per grid point"),
    key("lyapunov_offset", "1e-8", "shadow-orbit offset d0"),
    key(
        "settle_max",
        "0",
        "extend scan transients up to this many periods until stationary (0 = off)",
    ),
    key(
        "settle_tolerance",
        "1e-13",
        "stationarity threshold on |x_t - x_(t-1)|",
    ),
    key(
        "dedup_tolerance",
        "0.001",
        "histogram L1 distance under which attractors are merged",
    ),
    key(
        "peak_fraction",
        "0.5",
        "peaks must exceed this fraction of the maximum deviation",
    ),
    key(
        "beta_search_max",
        "20",
        "upper end of numeric stability-crossing searches",
    ),
];

const BANNER: &str = "# uptick ";

/// Unresolved key/value pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<&'static str, String>,
    explicit: Vec<&'static str>,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|k| (k.key, k.default.to_string())).collect(),
            explicit: Vec::new(),
        }
    }
}

impl RawConfig {
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let spec = KEYS
            .iter()
            .find(|k| k.key == key)
            .ok_or_else(|| CliError::config(key, "unknown key"))?;
        self.values.insert(spec.key, value.trim().to_string());
        if !self.explicit.contains(&spec.key) {
            self.explicit.push(spec.key);
        }
        Ok(())
    }

    /// `key=value` as given to `--set`.
    pub fn set_pair(&mut self, pair: &str) -> CliResult<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::config(pair.trim(), "expected key=value"))?;
        self.set(key.trim(), value)
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(&key)
    }

    /// Config text: `key = value` lines, `#` starts a comment. Text that
    /// begins with an output banner is read from its echoed header instead.
    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        if text.starts_with(BANNER) {
            for line in text.lines().skip(1) {
                let Some(body) = line.strip_prefix("# ") else {
                    break;
                };
                self.set_pair(body)?;
            }
            return Ok(());
        }
        for (number, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| {
                CliError::config(
                    format!("line{}", number + 1),
                    format!("expected key = value, got `{body}`"),
                )
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.apply_text(&text)
    }

    fn get(&self, key: &str) -> &str {
        self.values
            .iter()
            .find(|(k, _)| **k == key)
            .map(|(_, v)| v.as_str())
            .expect("known key")
    }

    fn parse<T: FromStr>(&self, key: &'static str) -> CliResult<T>
    where
        T::Err: Display,
    {
        let raw = self.get(key);
        raw.parse::<T>()
            .map_err(|e| CliError::config(key, format!("cannot parse `{raw}`: {e}")))
    }

    fn float(&self, key: &'static str) -> CliResult<f64> {
        let x: f64 = self.parse(key)?;
        if !x.is_finite() {
            return Err(CliError::config(key, format!("must be finite, got {x}")));
        }
        Ok(x)
    }

    /// Parses and validates every key against the model's preconditions.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let params = MarketParams {
            gross_return: self.float("gross_return")?,
            risk_aversion: self.float("risk_aversion")?,
            variance: self.float("variance")?,
            supply: self.float("supply")?,
            mean_dividend: self.float("mean_dividend")?,
            cost_fundamental: self.float("cost_fundamental")?,
            cost_other: self.float("cost_other")?,
            beta: self.float("beta")?,
            allow_high_return: self.parse("allow_high_return")?,
        };
        let pbar = params.validate().map_err(CliError::from_validation)?;
        let predictors = (self.predictor("predictor1")?, self.predictor("predictor2")?);
        Market::new(params, predictors, Mode::Constrained).map_err(CliError::from_validation)?;

        let mode = match self.get("mode") {
            "constrained" => ModeChoice::Constrained,
            "unconstrained" => ModeChoice::Unconstrained,
            "both" => ModeChoice::Both,
            other => {
                return Err(CliError::config(
                    "mode",
                    format!("expected constrained, unconstrained or both, got `{other}`"),
                ))
            }
        };

        let seed: u64 = self.parse("seed")?;
        let ic_family: IcFamily = self.get("ic_family").parse().map_err(|_| {
            CliError::config("ic_family", format!("unknown family `{}`", self.get("ic_family")))
        })?;
        let x0 = match self.get("x0") {
            "random" => ic_family
                .draw(&mut point_rng(seed, 0))
                .ok_or_else(|| CliError::config("ic_family", "continuation cannot draw a random x0"))?,
            _ => self.float("x0")?,
        };
        if !(x0 > -pbar) {
            return Err(CliError::config(
                "x0",
                format!("x0 > -pbar = {} required, got {x0}", -pbar),
            ));
        }
        let m1 = self.float("m1")?;
        if !(m1 > -1.0 && m1 < 1.0) {
            return Err(CliError::config("m1", format!("-1 < m1 < 1 required, got {m1}")));
        }
        let demand = |key: &'static str| -> CliResult<f64> {
            match self.get(key) {
                "supply" => Ok(params.supply),
                _ => self.float(key),
            }
        };
        let z0 = (demand("z1_0")?, demand("z2_0")?);

        let beta_min = self.float("beta_min")?;
        let beta_max = self.float("beta_max")?;
        let beta_step = self.float("beta_step")?;
        if beta_min < 0.0 {
            return Err(CliError::config(
                "beta_min",
                format!("beta_min >= 0 required, got {beta_min}"),
            ));
        }
        if beta_max < beta_min {
            return Err(CliError::config(
                "beta_max",
                format!("beta_max >= beta_min = {beta_min} required, got {beta_max}"),
            ));
        }
        if !(beta_step > 0.0) {
            return Err(CliError::config(
                "beta_step",
                format!("beta_step > 0 required, got {beta_step}"),
            ));
        }
        if (beta_max - beta_min) / beta_step > 1e7 {
            return Err(CliError::config("beta_step", "grid would exceed 10^7 points"));
        }
        let descending = match self.get("beta_order") {
            "ascending" => false,
            "descending" => true,
            other => {
                return Err(CliError::config(
                    "beta_order",
                    format!("expected ascending or descending, got `{other}`"),
                ))
            }
        };
        let families = self
            .get("families")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<IcFamily>()
                    .map_err(|_| CliError::config("families", format!("unknown family `{s}`")))
            })
            .collect::<CliResult<Vec<_>>>()?;
        if families.is_empty() {
            return Err(CliError::config("families", "at least one family required"));
        }
        let samples: usize = self.parse("samples")?;
        if samples == 0 {
            return Err(CliError::config("samples", "samples >= 1 required"));
        }
        let lyapunov_offset = self.float("lyapunov_offset")?;
        if !(lyapunov_offset > 0.0) {
            return Err(CliError::config(
                "lyapunov_offset",
                format!("d0 > 0 required, got {lyapunov_offset}"),
            ));
        }
        let settle_tolerance = self.float("settle_tolerance")?;
        if !(settle_tolerance > 0.0) {
            return Err(CliError::config(
                "settle_tolerance",
                format!("tolerance > 0 required, got {settle_tolerance}"),
            ));
        }
        let dedup_tolerance = self.float("dedup_tolerance")?;
        if dedup_tolerance < 0.0 {
            return Err(CliError::config(
                "dedup_tolerance",
                format!("tolerance >= 0 required, got {dedup_tolerance}"),
            ));
        }
        let peak_fraction = self.float("peak_fraction")?;
        if !(0.0..=1.0).contains(&peak_fraction) {
            return Err(CliError::config(
                "peak_fraction",
                format!("0 <= fraction <= 1 required, got {peak_fraction}"),
            ));
        }
        let beta_search_max = self.float("beta_search_max")?;
        if !(beta_search_max > 0.0) {
            return Err(CliError::config(
                "beta_search_max",
                format!("must be positive, got {beta_search_max}"),
            ));
        }

        Ok(RunConfig {
            params,
            predictors,
            mode,
            mode_explicit: self.is_explicit("mode"),
            periods: self.parse("periods")?,
            transient: self.parse("transient")?,
            x0,
            m1,
            z0,
            seed,
            ic_family,
            beta_min,
            beta_max,
            beta_step,
            descending,
            families,
            samples,
            lyapunov_offset,
            settle_max: self.parse("settle_max")?,
            settle_tolerance,
            dedup_tolerance,
            peak_fraction,
            beta_search_max,
        })
    }

    fn predictor(&self, key: &'static str) -> CliResult<Predictor> {
        let p = match self.get(key) {
            "fundamental" => Predictor::fundamental(self.float("reversion")?),
            "chartist" => Predictor::chartist(self.float("trend")?),
            "roc" => Predictor::roc(self.parse("lag")?),
            "sroc" => Predictor::smoothed_roc(self.parse("lag")?, self.float("confidence")?),
            other => {
                return Err(CliError::config(
                    key,
                    format!("expected fundamental, chartist, roc or sroc, got `{other}`"),
                ))
            }
        };
        p.validate().map_err(CliError::from_validation)?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeChoice {
    Constrained,
    Unconstrained,
    Both,
}

impl ModeChoice {
    pub fn modes(&self) -> Vec<Mode> {
        match self {
            ModeChoice::Constrained => vec![Mode::Constrained],
            ModeChoice::Unconstrained => vec![Mode::Unconstrained],
            ModeChoice::Both => vec![Mode::Constrained, Mode::Unconstrained],
        }
    }
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: MarketParams,
    pub predictors: (Predictor, Predictor),
    pub mode: ModeChoice,
    pub mode_explicit: bool,
    pub periods: usize,
    pub transient: usize,
    /// Resolved opening deviation (drawn when the key was `random`).
    pub x0: f64,
    pub m1: f64,
    pub z0: (f64, f64),
    pub seed: u64,
    pub ic_family: IcFamily,
    pub beta_min: f64,
    pub beta_max: f64,
    pub beta_step: f64,
    pub descending: bool,
    pub families: Vec<IcFamily>,
    pub samples: usize,
    pub lyapunov_offset: f64,
    pub settle_max: usize,
    pub settle_tolerance: f64,
    pub dedup_tolerance: f64,
    pub peak_fraction: f64,
    pub beta_search_max: f64,
}

impl RunConfig {
    pub fn market(&self, mode: Mode) -> Market {
        Market::new(self.params, self.predictors, mode).expect("validated config")
    }

    pub fn opening_state(&self, market: &Market) -> MarketState {
        MarketState::opening(self.x0, self.m1, self.z0, market.window_capacity())
    }

    /// `beta_min + k·beta_step` up to `beta_max`, in the configured order.
    pub fn beta_grid(&self) -> Vec<f64> {
        let n = ((self.beta_max - self.beta_min) / self.beta_step + 1e-9).floor() as usize;
        let mut grid: Vec<f64> = (0..=n)
            .map(|k| self.beta_min + k as f64 * self.beta_step)
            .collect();
        if self.descending {
            grid.reverse();
        }
        grid
    }

    pub fn scan_settings(&self) -> ScanSettings {
        ScanSettings {
            periods: self.periods,
            transient: self.transient,
            samples: self.samples,
            offset: self.lyapunov_offset,
            seed: self.seed,
            m1: self.m1,
            continuation_start: self.x0,
            settle: (self.settle_max > 0).then_some(Settle {
                max_transient: self.settle_max,
                tolerance: self.settle_tolerance,
                chunk: 1000,
            }),
            skip_lyapunov: false,
        }
    }

    /// Resolved `key = value` pairs for the output header. `mode` is the
    /// mode of the file being written.
    pub fn echo(&self, mode: Option<Mode>) -> Vec<(&'static str, String)> {
        let p = &self.params;
        let kind = |pred: &Predictor| pred.label().to_string();
        let (v, g, lag, alpha) = self.predictor_parameters();
        let mode = match (mode, self.mode) {
            (Some(m), _) => m.as_str().to_string(),
            (None, ModeChoice::Both) => "both".into(),
            (None, m) => m.modes()[0].as_str().to_string(),
        };
        let families: Vec<&str> = self.families.iter().map(|f| f.as_str()).collect();
        vec![
            ("gross_return", real(p.gross_return)),
            ("risk_aversion", real(p.risk_aversion)),
            ("variance", real(p.variance)),
            ("supply", real(p.supply)),
            ("mean_dividend", real(p.mean_dividend)),
            ("cost_fundamental", real(p.cost_fundamental)),
            ("cost_other", real(p.cost_other)),
            ("beta", real(p.beta)),
            ("allow_high_return", p.allow_high_return.to_string()),
            ("predictor1", kind(&self.predictors.0)),
            ("predictor2", kind(&self.predictors.1)),
            ("reversion", v),
            ("trend", g),
            ("lag", lag),
            ("confidence", alpha),
            ("mode", mode),
            ("periods", self.periods.to_string()),
            ("transient", self.transient.to_string()),
            ("x0", real(self.x0)),
            ("m1", real(self.m1)),
            ("z1_0", real(self.z0.0)),
            ("z2_0", real(self.z0.1)),
            ("seed", self.seed.to_string()),
            ("ic_family", self.ic_family.as_str().to_string()),
            ("beta_min", real(self.beta_min)),
            ("beta_max", real(self.beta_max)),
            ("beta_step", real(self.beta_step)),
            (
                "beta_order",
                if self.descending {
                    "descending"
                } else {
                    "ascending"
                }
                .to_string(),
            ),
            ("families", families.join(",")),
            ("samples", self.samples.to_string()),
            ("lyapunov_offset", real(self.lyapunov_offset)),
            ("settle_max", self.settle_max.to_string()),
            ("settle_tolerance", real(self.settle_tolerance)),
            ("dedup_tolerance", real(self.dedup_tolerance)),
            ("peak_fraction", real(self.peak_fraction)),
            ("beta_search_max", real(self.beta_search_max)),
        ]
    }

    /// Header block: banner line plus one `# key = value` line per key.
    pub fn header(&self, command: &str, mode: Option<Mode>) -> String {
        let mut out = format!("{BANNER}{} {command}\n", env!("CARGO_PKG_VERSION"));
        for (k, v) in self.echo(mode) {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        out
    }

    /// Shared parameter keys; the defaults stand in for kinds not in the pair.
    fn predictor_parameters(&self) -> (String, String, String, String) {
        let mut v = KEYS[11].default.to_string();
        let mut g = KEYS[12].default.to_string();
        let mut lag = KEYS[13].default.to_string();
        let mut alpha = KEYS[14].default.to_string();
        for p in [self.predictors.0, self.predictors.1] {
            match p {
                Predictor::Fundamental { reversion } => v = real(reversion),
                Predictor::Chartist { trend } => g = real(trend),
                Predictor::Roc { lag: l } => lag = l.to_string(),
                Predictor::SmoothedRoc { lag: l, confidence } => {
                    lag = l.to_string();
                    alpha = real(confidence);
                }
            }
        }
        (v, g, lag, alpha)
    }
}

/// Shortest round-trip form, with an exponent for very small or large values.
fn real(x: f64) -> String {
    format!("{x:?}")
}

/// `dir/stem_<suffix>.ext` next to `path`.
pub fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{suffix}.{ext}"),
        None => format!("{stem}_{suffix}"),
    };
    path.with_file_name(name)
}

/// Same path with a different extension.
pub fn with_extension(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}
