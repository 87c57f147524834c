//! Orbit simulation, largest Lyapunov exponent, bifurcation scans over `β`,
//! and attractor statistics.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::clearing::{Market, MarketState, StepOutcome};
use crate::error::{Error, Result};

pub const DEFAULT_TRANSIENT: usize = 10_000;
pub const DEFAULT_PERIODS: usize = 100_000;
pub const DEFAULT_SAMPLES: usize = 500;
pub const DEFAULT_OFFSET: f64 = 1e-8;
/// Orbits with `|x| > DIVERGENCE_FACTOR · p̄` are flagged as unbounded.
pub const DIVERGENCE_FACTOR: f64 = 1e6;
pub const DEFAULT_PEAK_FRACTION: f64 = 0.5;
pub const DEFAULT_HISTOGRAM_TOLERANCE: f64 = 1e-3;
const HISTOGRAM_BINS: usize = 64;

/// A post-transient orbit.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitRecord {
    pub market: Market,
    pub x0: f64,
    pub m1: f64,
    pub transient: usize,
    /// Seed that produced `x0`, when it was drawn at random.
    pub seed: Option<u64>,
    /// One entry per recorded period, starting at period `transient + 1`.
    pub outcomes: Vec<StepOutcome>,
}

impl OrbitRecord {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Period index of the `i`-th recorded outcome (the opening period is 1).
    pub fn period(&self, i: usize) -> usize {
        self.transient + i + 1
    }

    pub fn deviations(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.x).collect()
    }

    /// Largest `|n1·z1 + n2·z2 - s|` over the record.
    pub fn max_clearing_residual(&self) -> f64 {
        let s = self.market.params.supply;
        self.outcomes
            .iter()
            .map(|o| o.clearing_residual(s))
            .fold(0.0, f64::max)
    }

    pub fn stats(&self) -> Option<AttractorStats> {
        attractor_stats(&self.deviations(), DEFAULT_PEAK_FRACTION)
    }
}

fn check_initial(market: &Market, x0: f64, m1: f64) -> Result<()> {
    let pbar = market.fundamental_price();
    if !(x0 > -pbar) || !x0.is_finite() {
        return Err(Error::NonPositivePrice { x: x0, pbar });
    }
    if !(m1 > -1.0 && m1 < 1.0) {
        return Err(Error::domain("m1", format!("must lie in (-1, 1), got {m1}")));
    }
    Ok(())
}

/// Runs `transient` unrecorded periods, then records `periods` more.
///
/// The orbit starts in the opening state (only `x0` known) with initial
/// demands `(s, s)`.
pub fn simulate(market: &Market, x0: f64, m1: f64, periods: usize, transient: usize) -> Result<OrbitRecord> {
    check_initial(market, x0, m1)?;
    let mut state = market.opening_state(x0, m1);
    let outcomes = run(market, &mut state, 0, periods, transient)?;
    Ok(OrbitRecord {
        market: *market,
        x0,
        m1,
        transient,
        seed: None,
        outcomes,
    })
}

/// Continues an orbit from `state`, which is left at the final state.
/// `elapsed` is the number of periods already played (for error reporting).
pub fn run(
    market: &Market,
    state: &mut MarketState,
    elapsed: usize,
    periods: usize,
    transient: usize,
) -> Result<Vec<StepOutcome>> {
    state.validate(market.fundamental_price())?;
    for t in 0..transient {
        market.advance(state).map_err(|e| e.at_period(elapsed + t + 1))?;
    }
    let mut outcomes = Vec::with_capacity(periods);
    for t in 0..periods {
        let outcome = market
            .advance(state)
            .map_err(|e| e.at_period(elapsed + transient + t + 1))?;
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

/// Largest Lyapunov exponent by the two-orbit (Benettin) method.
///
/// After `transient` periods a shadow orbit is offset by `d0` in `x_{t-1}`;
/// each period the Euclidean distance `d_t` between the full states is
/// measured and the shadow pulled back to distance `d0` along the same
/// direction. Returns `(1/T)·Σ ln(d_t/d0)`.
pub fn lyapunov(market: &Market, x0: f64, m1: f64, periods: usize, transient: usize, d0: f64) -> Result<f64> {
    check_initial(market, x0, m1)?;
    let mut state = market.opening_state(x0, m1);
    run(market, &mut state, 0, 0, transient)?;
    lyapunov_from(market, &mut state, transient, periods, d0, |_| true)
}

/// Two-orbit exponent over `periods` steps starting at `state`.
///
/// `observe` sees every main-orbit outcome and may stop the run early by
/// returning `false`; the exponent is then averaged over the steps taken.
pub fn lyapunov_from(
    market: &Market,
    state: &mut MarketState,
    elapsed: usize,
    periods: usize,
    d0: f64,
    mut observe: impl FnMut(&StepOutcome) -> bool,
) -> Result<f64> {
    if !(d0 > 0.0) || !d0.is_finite() {
        return Err(Error::domain("d0", format!("offset must be positive, got {d0}")));
    }
    if periods == 0 {
        return Ok(f64::NAN);
    }
    state.validate(market.fundamental_price())?;
    let mut shadow = seeded_shadow(state, d0);
    let mut sum = 0.0;
    let mut steps = 0usize;
    let mut reseeded_last = false;
    for t in 0..periods {
        let period = elapsed + t + 1;
        let outcome = market.advance(state).map_err(|e| e.at_period(period))?;
        let shadow_ok = market.advance(&mut shadow).is_ok();
        let d = if shadow_ok {
            distance(state, &shadow)
        } else {
            f64::NAN
        };
        steps += 1;
        if d > 0.0 && d.is_finite() {
            sum += (d / d0).ln();
            rescale(state, &mut shadow, d0 / d);
            reseeded_last = false;
        } else if reseeded_last {
            return Err(Error::InvalidState(format!(
                "shadow orbit left the valid domain twice in a row at period {period}"
            )))
            .map_err(|e| e.at_period(period));
        } else {
            shadow = seeded_shadow(state, d0);
            reseeded_last = true;
        }
        if !observe(&outcome) {
            break;
        }
    }
    Ok(sum / steps as f64)
}

fn seeded_shadow(state: &MarketState, d0: f64) -> MarketState {
    let mut shadow = state.clone();
    shadow.deviations[0] += d0;
    shadow
}

fn distance(a: &MarketState, b: &MarketState) -> f64 {
    let window: f64 = a
        .deviations
        .iter()
        .zip(&b.deviations)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let dz1 = a.z_prev.0 - b.z_prev.0;
    let dz2 = a.z_prev.1 - b.z_prev.1;
    let dm = a.m - b.m;
    (window + dz1 * dz1 + dz2 * dz2 + dm * dm).sqrt()
}

fn rescale(main: &MarketState, shadow: &mut MarketState, factor: f64) {
    for (s, x) in shadow.deviations.iter_mut().zip(&main.deviations) {
        *s = x + (*s - x) * factor;
    }
    shadow.z_prev.0 = main.z_prev.0 + (shadow.z_prev.0 - main.z_prev.0) * factor;
    shadow.z_prev.1 = main.z_prev.1 + (shadow.z_prev.1 - main.z_prev.1) * factor;
    shadow.m = main.m + (shadow.m - main.m) * factor;
}

/// How a scan chooses the initial condition at each `β`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IcFamily {
    /// `x0` uniform in `[1e-3, 1e-2]`.
    PositiveSmall,
    /// `x0` uniform in `[-1e-2, -1e-3]`.
    NegativeSmall,
    /// `x0` uniform in `[0.5, 1.5]`.
    FarPositive,
    /// `x0` uniform in `[-1.5, -0.5]`.
    FarNegative,
    /// Start from the previous grid point's final state.
    Continuation,
}

impl IcFamily {
    pub const ALL: [IcFamily; 5] = [
        IcFamily::PositiveSmall,
        IcFamily::NegativeSmall,
        IcFamily::FarPositive,
        IcFamily::FarNegative,
        IcFamily::Continuation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            IcFamily::PositiveSmall => "positive-small",
            IcFamily::NegativeSmall => "negative-small",
            IcFamily::FarPositive => "far-positive",
            IcFamily::FarNegative => "far-negative",
            IcFamily::Continuation => "continuation",
        }
    }

    /// Random `x0` for this family; `None` for continuation.
    pub fn draw(&self, rng: &mut impl Rng) -> Option<f64> {
        let (lo, hi, sign) = match self {
            IcFamily::PositiveSmall => (1e-3, 1e-2, 1.0),
            IcFamily::NegativeSmall => (1e-3, 1e-2, -1.0),
            IcFamily::FarPositive => (0.5, 1.5, 1.0),
            IcFamily::FarNegative => (0.5, 1.5, -1.0),
            IcFamily::Continuation => return None,
        };
        Some(sign * rng.gen_range(lo..=hi))
    }
}

impl fmt::Display for IcFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IcFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        IcFamily::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| {
                Error::domain(
                    "ic_family",
                    format!("unknown family `{s}` (positive-small, negative-small, far-positive, far-negative, continuation)"),
                )
            })
    }
}

/// Random generator for grid point `index`: one ChaCha stream per point, so
/// draws do not depend on scheduling.
pub fn point_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Extends the transient until the orbit is stationary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settle {
    /// Upper bound on the total transient length.
    pub max_transient: usize,
    /// Stationary when `|x_t - x_{t-1}| < tolerance` across a whole chunk.
    pub tolerance: f64,
    pub chunk: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSettings {
    pub periods: usize,
    pub transient: usize,
    pub samples: usize,
    pub offset: f64,
    pub seed: u64,
    pub m1: f64,
    /// Opening deviation of the first continuation point.
    pub continuation_start: f64,
    pub settle: Option<Settle>,
    /// Skip the shadow orbit (the exponent is reported as `None`).
    pub skip_lyapunov: bool,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self {
            periods: DEFAULT_PERIODS,
            transient: DEFAULT_TRANSIENT,
            samples: DEFAULT_SAMPLES,
            offset: DEFAULT_OFFSET,
            seed: 0,
            m1: 0.0,
            continuation_start: 1e-2,
            settle: None,
            skip_lyapunov: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PointStatus {
    Bounded,
    /// `|x|` exceeded the divergence cutoff.
    Divergent,
    /// A predictor or price domain error ended the orbit.
    DomainExit(String),
}

/// One `β` of a bifurcation scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPoint {
    pub beta: f64,
    pub ic_family: IcFamily,
    /// Opening deviation (for continuation: the first point's).
    pub x0: f64,
    /// Last post-transient deviations.
    pub samples: Vec<f64>,
    pub lyapunov: Option<f64>,
    pub attractor_id: usize,
    pub status: PointStatus,
}

impl ScanPoint {
    pub fn is_bounded(&self) -> bool {
        self.status == PointStatus::Bounded
    }
}

fn check_grid(betas: &[f64]) -> Result<()> {
    if let Some(b) = betas.iter().find(|b| !(**b >= 0.0) || !b.is_finite()) {
        return Err(Error::domain(
            "beta",
            format!("grid values must be finite and >= 0, got {b}"),
        ));
    }
    let ascending = betas.windows(2).all(|w| w[0] <= w[1]);
    let descending = betas.windows(2).all(|w| w[0] >= w[1]);
    if !(ascending || descending) {
        return Err(Error::domain("beta", "grid must be sorted"));
    }
    Ok(())
}

/// Scans `betas` (sorted ascending or descending) with one initial-condition
/// family. Non-continuation families run in parallel over grid points.
pub fn bifurcation_scan(
    market: &Market,
    betas: &[f64],
    family: IcFamily,
    settings: &ScanSettings,
) -> Result<Vec<ScanPoint>> {
    check_grid(betas)?;
    check_initial(market, settings.continuation_start, settings.m1)?;
    if family == IcFamily::Continuation {
        return continuation_scan(market, betas, None, settings);
    }
    Ok(betas
        .par_iter()
        .enumerate()
        .map(|(i, &beta)| {
            let x0 = family
                .draw(&mut point_rng(settings.seed, i))
                .expect("random family");
            let m = market.with_beta(beta);
            scan_point(&m, m.opening_state(x0, settings.m1), family, x0, settings).0
        })
        .collect())
}

/// Continuation scan whose first point starts from `start` (any valid state
/// of the market's shape) instead of an opening state.
pub fn continuation_scan_from(
    market: &Market,
    betas: &[f64],
    start: MarketState,
    settings: &ScanSettings,
) -> Result<Vec<ScanPoint>> {
    check_grid(betas)?;
    start.validate(market.fundamental_price())?;
    if start.capacity() != market.window_capacity() {
        return Err(Error::InvalidState(format!(
            "start state window {} does not match the market's {}",
            start.capacity(),
            market.window_capacity()
        )));
    }
    continuation_scan(market, betas, Some(start), settings)
}

fn continuation_scan(
    market: &Market,
    betas: &[f64],
    mut carried: Option<MarketState>,
    settings: &ScanSettings,
) -> Result<Vec<ScanPoint>> {
    let x0 = carried
        .as_ref()
        .map_or(settings.continuation_start, MarketState::last);
    let mut points = Vec::with_capacity(betas.len());
    for &beta in betas {
        let m = market.with_beta(beta);
        let state = carried
            .take()
            .unwrap_or_else(|| m.opening_state(settings.continuation_start, settings.m1));
        let (point, end) = scan_point(&m, state, IcFamily::Continuation, x0, settings);
        carried = end;
        points.push(point);
    }
    Ok(points)
}

/// Runs one grid point; returns the final state when the orbit stayed bounded.
fn scan_point(
    market: &Market,
    mut state: MarketState,
    family: IcFamily,
    x0: f64,
    settings: &ScanSettings,
) -> (ScanPoint, Option<MarketState>) {
    let cutoff = DIVERGENCE_FACTOR * market.fundamental_price();
    let mut point = ScanPoint {
        beta: market.params.beta,
        ic_family: family,
        x0,
        samples: Vec::new(),
        lyapunov: None,
        attractor_id: 0,
        status: PointStatus::Bounded,
    };
    let fail = |mut point: ScanPoint, e: Error| {
        point.status = match e.root() {
            Error::NonPositivePrice { x, .. } if x.abs() > cutoff || !x.is_finite() => PointStatus::Divergent,
            root => PointStatus::DomainExit(root.to_string()),
        };
        point.samples.clear();
        (point, None)
    };

    let elapsed = match settle(market, &mut state, settings, cutoff) {
        Ok((n, true)) => n,
        Ok((_, false)) => {
            point.status = PointStatus::Divergent;
            return (point, None);
        }
        Err(e) => return fail(point, e),
    };

    let keep_from = settings.periods.saturating_sub(settings.samples);
    let mut samples = Vec::with_capacity(settings.samples.min(settings.periods));
    let mut diverged = false;
    let mut t = 0usize;
    let mut observe = |o: &StepOutcome| {
        if o.x.abs() > cutoff {
            diverged = true;
            return false;
        }
        if t >= keep_from {
            samples.push(o.x);
        }
        t += 1;
        true
    };
    let result = if settings.skip_lyapunov {
        let mut res = Ok(());
        for k in 0..settings.periods {
            match market.advance(&mut state) {
                Ok(o) if observe(&o) => {}
                Ok(_) => break,
                Err(e) => {
                    res = Err(e.at_period(elapsed + k + 1));
                    break;
                }
            }
        }
        res.map(|_| None)
    } else {
        lyapunov_from(
            market,
            &mut state,
            elapsed,
            settings.periods,
            settings.offset,
            observe,
        )
        .map(Some)
    };
    match result {
        Err(e) => fail(point, e),
        Ok(_) if diverged => {
            point.status = PointStatus::Divergent;
            (point, None)
        }
        Ok(exponent) => {
            point.lyapunov = exponent.filter(|l| l.is_finite());
            point.samples = samples;
            (point, Some(state))
        }
    }
}

/// Plays the transient (extended per `settings.settle`). Returns the number
/// of periods played and whether the orbit stayed below the cutoff.
fn settle(
    market: &Market,
    state: &mut MarketState,
    settings: &ScanSettings,
    cutoff: f64,
) -> Result<(usize, bool)> {
    let mut elapsed = 0;
    let step = |state: &mut MarketState, elapsed: &mut usize| -> Result<Option<f64>> {
        let before = state.last();
        let o = market.advance(state).map_err(|e| e.at_period(*elapsed + 1))?;
        *elapsed += 1;
        Ok((o.x.abs() <= cutoff).then(|| (o.x - before).abs()))
    };
    for _ in 0..settings.transient {
        if step(state, &mut elapsed)?.is_none() {
            return Ok((elapsed, false));
        }
    }
    if let Some(rule) = settings.settle {
        let chunk = rule.chunk.max(1);
        while elapsed < rule.max_transient {
            let mut largest: f64 = 0.0;
            for _ in 0..chunk {
                match step(state, &mut elapsed)? {
                    Some(change) => largest = largest.max(change),
                    None => return Ok((elapsed, false)),
                }
            }
            if largest < rule.tolerance {
                break;
            }
        }
    }
    Ok((elapsed, true))
}

/// L1 distance between the normalized histograms of two sample sets on
/// their common range.
pub fn histogram_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.is_empty() && b.is_empty() { 0.0 } else { 2.0 };
    }
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    // Samples of one fixed point agree to rounding; do not split them.
    let width = (hi - lo).max(1e-6 * (1.0 + lo.abs().max(hi.abs())));
    let histogram = |xs: &[f64]| {
        let mut h = [0.0; HISTOGRAM_BINS];
        for &x in xs {
            let k = (((x - lo) / width) * HISTOGRAM_BINS as f64) as usize;
            h[k.min(HISTOGRAM_BINS - 1)] += 1.0 / xs.len() as f64;
        }
        h
    };
    let (ha, hb) = (histogram(a), histogram(b));
    ha.iter().zip(&hb).map(|(x, y)| (x - y).abs()).sum()
}

/// Numbers the distinct attractors found at each `β`: points with the same
/// `β` whose histograms lie within `tolerance` (L1) share an id. Unbounded
/// points get their own ids.
pub fn assign_attractor_ids(points: &mut [ScanPoint], tolerance: f64) {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| points[i].beta.total_cmp(&points[j].beta).then(i.cmp(&j)));
    let mut start = 0;
    while start < order.len() {
        let beta = points[order[start]].beta;
        let mut end = start;
        while end < order.len() && points[order[end]].beta.to_bits() == beta.to_bits() {
            end += 1;
        }
        let mut representatives: Vec<usize> = Vec::new();
        for &i in &order[start..end] {
            let found = points[i].is_bounded().then(|| {
                representatives.iter().position(|&r| {
                    points[r].is_bounded()
                        && histogram_distance(&points[r].samples, &points[i].samples) < tolerance
                })
            });
            points[i].attractor_id = match found.flatten() {
                Some(id) => id,
                None => {
                    representatives.push(i);
                    representatives.len() - 1
                }
            };
        }
        start = end;
    }
}

/// Coarse shape of a sampled attractor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttractorClass {
    /// All samples within `zero_tolerance` of zero.
    Fundamental,
    /// Samples spread less than `spread_tolerance` around a nonzero value.
    FixedPoint(f64),
    Oscillating,
    Unbounded,
}

pub fn classify_point(point: &ScanPoint, zero_tolerance: f64, spread_tolerance: f64) -> AttractorClass {
    if !point.is_bounded() || point.samples.is_empty() {
        return AttractorClass::Unbounded;
    }
    let max_abs = point.samples.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if max_abs <= zero_tolerance {
        return AttractorClass::Fundamental;
    }
    let lo = point.samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = point.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= spread_tolerance {
        AttractorClass::FixedPoint(*point.samples.last().unwrap())
    } else {
        AttractorClass::Oscillating
    }
}

/// A change of attractor class between neighbouring grid points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    /// Midpoint of the two grid values.
    pub beta: f64,
    pub from: AttractorClass,
    pub to: AttractorClass,
}

/// Every change of class (by kind, not value) along a scan, in scan order.
pub fn class_transitions(
    points: &[ScanPoint],
    zero_tolerance: f64,
    spread_tolerance: f64,
) -> Vec<Transition> {
    let classes: Vec<AttractorClass> = points
        .iter()
        .map(|p| classify_point(p, zero_tolerance, spread_tolerance))
        .collect();
    (1..points.len())
        .filter(|&i| std::mem::discriminant(&classes[i]) != std::mem::discriminant(&classes[i - 1]))
        .map(|i| Transition {
            beta: 0.5 * (points[i - 1].beta + points[i].beta),
            from: classes[i - 1],
            to: classes[i],
        })
        .collect()
}

/// Summary statistics of a deviation series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttractorStats {
    pub max_dev: f64,
    pub min_dev: f64,
    pub mean_dev: f64,
    /// Interior local maxima strictly above `peak_fraction · max_dev`.
    pub peak_count: usize,
    /// Mean spacing in periods between consecutive peaks.
    pub mean_inter_peak: Option<f64>,
}

impl AttractorStats {
    pub fn amplitude(&self) -> f64 {
        self.max_dev.abs().max(self.min_dev.abs())
    }

    /// Peaks per period.
    pub fn peak_frequency(&self) -> Option<f64> {
        self.mean_inter_peak.map(f64::recip)
    }
}

/// `None` for an empty series.
pub fn attractor_stats(deviations: &[f64], peak_fraction: f64) -> Option<AttractorStats> {
    if deviations.is_empty() {
        return None;
    }
    let max_dev = deviations.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_dev = deviations.iter().copied().fold(f64::INFINITY, f64::min);
    let mean_dev = deviations.iter().sum::<f64>() / deviations.len() as f64;
    let threshold = peak_fraction * max_dev;
    let peaks: Vec<usize> = deviations
        .windows(3)
        .enumerate()
        .filter(|(_, w)| w[1] > threshold && w[1] > w[0] && w[1] >= w[2])
        .map(|(i, _)| i + 1)
        .collect();
    let mean_inter_peak =
        (peaks.len() >= 2).then(|| (peaks[peaks.len() - 1] - peaks[0]) as f64 / (peaks.len() - 1) as f64);
    Some(AttractorStats {
        max_dev,
        min_dev,
        mean_dev,
        peak_count: peaks.len(),
        mean_inter_peak,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clearing::Mode;
    use crate::equilibria::fundamental_equilibrium;
    use crate::model::MarketParams;
    use crate::predictors::Predictor;

    fn chartist(beta: f64, mode: Mode) -> Market {
        Market::new(
            MarketParams::default().with_beta(beta),
            (Predictor::fundamental(0.0), Predictor::chartist(1.2)),
            mode,
        )
        .unwrap()
    }

    #[test]
    fn converges_below_the_limit_point() {
        let rec = simulate(&chartist(0.5, Mode::Constrained), 0.01, 0.0, 1, 4999).unwrap();
        assert!(rec.outcomes[0].x.abs() < 1e-8);
        assert_eq!(rec.period(0), 5000);
    }

    #[test]
    fn sign_invariance_from_above() {
        let rec = simulate(&chartist(3.0, Mode::Unconstrained), 0.1, 0.0, 2000, 1000).unwrap();
        assert!(rec.deviations().iter().all(|&x| x > 0.0));
    }

    #[test]
    fn constant_orbit_at_fundamental() {
        let market = chartist(3.0, Mode::Constrained);
        let m0 = (-1.5f64).tanh();
        let rec = simulate(&market, 0.0, m0, 50, 0).unwrap();
        for o in &rec.outcomes {
            assert_eq!(o.x, 0.0);
            assert_eq!(o.m, m0);
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let market = chartist(4.0, Mode::Constrained);
        let a = simulate(&market, -0.1, 0.0, 500, 100).unwrap();
        let b = simulate(&market, -0.1, 0.0, 500, 100).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_record() {
        let rec = simulate(&chartist(1.0, Mode::Constrained), 0.1, 0.0, 0, 10).unwrap();
        assert!(rec.is_empty());
        assert!(rec.stats().is_none());
    }

    #[test]
    fn rejects_bad_initial_conditions() {
        let market = chartist(1.0, Mode::Constrained);
        assert!(simulate(&market, -9.5, 0.0, 1, 0).is_err());
        assert!(simulate(&market, 0.1, 1.0, 1, 0).is_err());
    }

    #[test]
    fn errors_carry_the_period() {
        let market = Market::new(
            MarketParams::default().with_beta(0.0),
            (Predictor::fundamental(0.0), Predictor::chartist(3.0)),
            Mode::Unconstrained,
        )
        .unwrap();
        match simulate(&market, -0.5, 0.0, 100, 0).unwrap_err() {
            Error::AtPeriod { period, source } => {
                assert!(period > 1);
                assert!(matches!(*source, Error::NonPositivePrice { .. }));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn lyapunov_negative_when_stable() {
        let l = lyapunov(
            &chartist(0.5, Mode::Constrained),
            0.005,
            0.0,
            20_000,
            1000,
            DEFAULT_OFFSET,
        )
        .unwrap();
        assert!(l < -1e-3);
    }

    #[test]
    fn lyapunov_at_fixed_point_matches_eigenvalue() {
        let market = chartist(1.0, Mode::Unconstrained);
        let eq = fundamental_equilibrium(&market).unwrap();
        let mut state = eq.state(&market);
        let l = lyapunov_from(&market, &mut state, 0, 10_000, DEFAULT_OFFSET, |_| true).unwrap();
        assert!((l - eq.spectral_radius().ln()).abs() < 1e-2, "{l}");
    }

    #[test]
    fn ic_family_ranges() {
        let mut rng = point_rng(7, 3);
        for _ in 0..1000 {
            let x = IcFamily::NegativeSmall.draw(&mut rng).unwrap();
            assert!((-1e-2..=-1e-3).contains(&x));
            let x = IcFamily::FarPositive.draw(&mut rng).unwrap();
            assert!((0.5..=1.5).contains(&x));
        }
        assert_eq!("far-negative".parse::<IcFamily>().unwrap(), IcFamily::FarNegative);
        assert!("sideways".parse::<IcFamily>().is_err());
    }

    #[test]
    fn empty_and_single_grids() {
        let market = chartist(1.0, Mode::Constrained);
        let settings = ScanSettings {
            periods: 100,
            transient: 100,
            samples: 10,
            ..Default::default()
        };
        assert!(bifurcation_scan(&market, &[], IcFamily::PositiveSmall, &settings)
            .unwrap()
            .is_empty());
        let one = bifurcation_scan(&market, &[1.0], IcFamily::PositiveSmall, &settings).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].samples.len(), 10);
        assert!(bifurcation_scan(&market, &[1.0, 0.5, 2.0], IcFamily::PositiveSmall, &settings).is_err());
    }

    #[test]
    fn scans_are_deterministic() {
        let market = chartist(1.0, Mode::Constrained);
        let settings = ScanSettings {
            periods: 500,
            transient: 500,
            samples: 20,
            seed: 11,
            ..Default::default()
        };
        let grid: Vec<f64> = (0..16).map(|k| 2.0 + 0.2 * k as f64).collect();
        for family in IcFamily::ALL {
            let a = bifurcation_scan(&market, &grid, family, &settings).unwrap();
            let b = bifurcation_scan(&market, &grid, family, &settings).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn divergent_points_are_flagged() {
        let market = Market::new(
            MarketParams::default(),
            (Predictor::fundamental(0.0), Predictor::chartist(1.5)),
            Mode::Unconstrained,
        )
        .unwrap();
        let settings = ScanSettings {
            periods: 100,
            transient: 5000,
            samples: 10,
            ..Default::default()
        };
        let points = bifurcation_scan(&market, &[10.0], IcFamily::FarPositive, &settings).unwrap();
        assert_ne!(points[0].status, PointStatus::Bounded);
        assert!(points[0].samples.is_empty());
    }

    #[test]
    fn histogram_dedup() {
        let a = vec![0.5; 100];
        let b = vec![0.5 + 1e-13; 100];
        let c = vec![-0.5; 100];
        assert!(histogram_distance(&a, &b) < 1e-3);
        assert!((histogram_distance(&a, &c) - 2.0).abs() < 1e-12);
        let point = |samples: Vec<f64>| ScanPoint {
            beta: 3.0,
            ic_family: IcFamily::PositiveSmall,
            x0: 0.0,
            samples,
            lyapunov: None,
            attractor_id: 99,
            status: PointStatus::Bounded,
        };
        let mut points = vec![point(a), point(c), point(b)];
        assign_attractor_ids(&mut points, DEFAULT_HISTOGRAM_TOLERANCE);
        let ids: Vec<usize> = points.iter().map(|p| p.attractor_id).collect();
        assert_eq!(ids, vec![0, 1, 0]);
    }

    #[test]
    fn stats_of_simple_series() {
        let s = attractor_stats(&[0.0; 10], 0.5).unwrap();
        assert_eq!(
            (s.max_dev, s.min_dev, s.mean_dev, s.peak_count),
            (0.0, 0.0, 0.0, 0)
        );
        assert!(s.mean_inter_peak.is_none());
        let alt: Vec<f64> = (0..100).map(|k| if k % 2 == 0 { 0.3 } else { -0.3 }).collect();
        let s = attractor_stats(&alt, 0.5).unwrap();
        assert_eq!((s.max_dev, s.min_dev, s.mean_dev), (0.3, -0.3, 0.0));
        assert_eq!(s.mean_inter_peak, Some(2.0));
    }

    #[test]
    fn classification() {
        let point = |samples: Vec<f64>| ScanPoint {
            beta: 1.0,
            ic_family: IcFamily::Continuation,
            x0: 0.0,
            samples,
            lyapunov: None,
            attractor_id: 0,
            status: PointStatus::Bounded,
        };
        assert_eq!(
            classify_point(&point(vec![1e-9, -1e-9]), 1e-6, 1e-8),
            AttractorClass::Fundamental
        );
        assert_eq!(
            classify_point(&point(vec![0.4, 0.4]), 1e-6, 1e-8),
            AttractorClass::FixedPoint(0.4)
        );
        assert_eq!(
            classify_point(&point(vec![0.4, 0.1]), 1e-6, 1e-8),
            AttractorClass::Oscillating
        );
    }
}
